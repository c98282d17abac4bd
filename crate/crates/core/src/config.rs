//! Plain-text `key = value` configuration and the training/decoding
//! hyperparameters it populates.
//!
//! ```text
//! # comments start with '#'
//! windows = 1-7, 9, 11, 13, 15
//! alpha1  = 0.7
//! lambdas = 1.0, 0.1, 1.0
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::LossWeights;
use crate::targets::WindowSet;

/// Parsed `key = value` pairs, remembering the line each came from.
#[derive(Debug, Clone, Default)]
pub struct KvFile {
    entries: BTreeMap<String, (String, usize)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(k.to_string(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        Ok(KvFile { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets or replaces a key (used for command-line overrides).
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    /// Parses a `key=value` override string.
    pub fn set_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    /// Parses `key` if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| {
                Error::Config(format!("line {line}: bad value for `{key}`: {v:?} ({e})"))
            }),
        }
    }

    /// Returns an error naming the first key not in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for (k, (_, line)) in &self.entries {
            if !known.contains(&k.as_str()) {
                return Err(Error::Config(format!("line {line}: unknown key `{k}`")));
            }
        }
        Ok(())
    }

    /// Keeps only the listed keys.
    pub fn subset(&self, keys: &[&str]) -> KvFile {
        KvFile {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| keys.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

pub(crate) fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

/// Every knob for training and decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub windows: WindowSet,
    /// Stage-one IoU threshold for positive seeds.
    pub alpha1: f64,
    /// Stage-two IoU threshold after boundary adjustment.
    pub alpha2: f64,
    /// Soft-example focusing exponent.
    pub eta: f64,
    /// Focal-loss focusing exponent.
    pub gamma: f64,
    /// Soft-NMS decay coefficient.
    pub nms_decay: f64,
    /// Soft-NMS IoU threshold.
    pub nms_iou: f64,
    /// Final score threshold.
    pub score_threshold: f64,
    pub lambdas: LossWeights,
    pub neg_ratio: usize,
    pub lr: f64,
    pub warmup: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub word_dim: usize,
    pub char_dim: usize,
    pub hidden_dim: usize,
    pub min_count: usize,
    pub seed: u64,
    /// Filter probability above which a seed becomes a proposal.
    pub filter_threshold: f64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            windows: WindowSet::standard(),
            alpha1: 0.7,
            alpha2: 1.0,
            eta: 1.0,
            gamma: 2.0,
            nms_decay: 0.9,
            nms_iou: 0.6,
            score_threshold: 0.55,
            lambdas: LossWeights { filter: 1.0, regressor: 0.1, classifier: 1.0 },
            neg_ratio: 5,
            lr: 2e-3,
            warmup: 0.1,
            epochs: 35,
            batch_size: 8,
            dropout: 0.5,
            word_dim: 32,
            char_dim: 16,
            hidden_dim: 64,
            min_count: 1,
            seed: 42,
            filter_threshold: 0.5,
            grad_clip: 5.0,
        }
    }
}

impl HyperParams {
    pub const KEYS: &'static [&'static str] = &[
        "windows",
        "alpha1",
        "alpha2",
        "eta",
        "gamma",
        "u",
        "k",
        "delta",
        "lambdas",
        "lambda1",
        "lambda2",
        "lambda3",
        "neg_ratio",
        "lr",
        "warmup",
        "epochs",
        "batch_size",
        "dropout",
        "word_dim",
        "char_dim",
        "hidden_dim",
        "min_count",
        "seed",
        "filter_threshold",
        "grad_clip",
    ];

    /// Applies every recognized key in `kv` on top of the defaults.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut hp = HyperParams::default();
        hp.apply(kv)?;
        Ok(hp)
    }

    pub fn apply(&mut self, kv: &KvFile) -> Result<()> {
        fn set<T: FromStr>(kv: &KvFile, key: &str, slot: &mut T) -> Result<()>
        where
            T::Err: std::fmt::Display,
        {
            if let Some(v) = kv.get(key)? {
                *slot = v;
            }
            Ok(())
        }
        if let Some(w) = kv.raw("windows") {
            self.windows = w.parse().map_err(|e| Error::Config(format!("windows: {e}")))?;
        }
        set(kv, "alpha1", &mut self.alpha1)?;
        set(kv, "alpha2", &mut self.alpha2)?;
        set(kv, "eta", &mut self.eta)?;
        set(kv, "gamma", &mut self.gamma)?;
        set(kv, "u", &mut self.nms_decay)?;
        set(kv, "k", &mut self.nms_iou)?;
        set(kv, "delta", &mut self.score_threshold)?;
        if let Some(l) = kv.raw("lambdas") {
            let v: Vec<f64> = parse_list(l).map_err(|e| Error::Config(format!("lambdas: {e}")))?;
            if v.len() != 3 {
                return Err(Error::Config("lambdas: expected three values".into()));
            }
            self.lambdas = LossWeights { filter: v[0], regressor: v[1], classifier: v[2] };
        }
        set(kv, "lambda1", &mut self.lambdas.filter)?;
        set(kv, "lambda2", &mut self.lambdas.regressor)?;
        set(kv, "lambda3", &mut self.lambdas.classifier)?;
        set(kv, "neg_ratio", &mut self.neg_ratio)?;
        set(kv, "lr", &mut self.lr)?;
        set(kv, "warmup", &mut self.warmup)?;
        set(kv, "epochs", &mut self.epochs)?;
        set(kv, "batch_size", &mut self.batch_size)?;
        set(kv, "dropout", &mut self.dropout)?;
        set(kv, "word_dim", &mut self.word_dim)?;
        set(kv, "char_dim", &mut self.char_dim)?;
        set(kv, "hidden_dim", &mut self.hidden_dim)?;
        set(kv, "min_count", &mut self.min_count)?;
        set(kv, "seed", &mut self.seed)?;
        set(kv, "filter_threshold", &mut self.filter_threshold)?;
        set(kv, "grad_clip", &mut self.grad_clip)?;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.alpha1) {
            return bad("alpha1 must lie in (0, 1]");
        }
        if !unit(self.alpha2) {
            return bad("alpha2 must lie in (0, 1]");
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta must be a finite value >= 0");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be a finite value >= 0");
        }
        if !(self.nms_decay > 0.0 && self.nms_decay <= 1.0) {
            return bad("u must lie in (0, 1]");
        }
        if !unit(self.nms_iou) {
            return bad("k must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.score_threshold) {
            return bad("delta must lie in [0, 1)");
        }
        self.lambdas.validate()?;
        if self.neg_ratio < 1 {
            return bad("neg_ratio must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup) {
            return bad("warmup must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.word_dim == 0 || self.char_dim < 2 || !self.char_dim.is_multiple_of(2) {
            return bad("word_dim must be >= 1 and char_dim a positive even number");
        }
        if self.hidden_dim < 2 || !self.hidden_dim.is_multiple_of(2) {
            return bad("hidden_dim must be a positive even number");
        }
        if !(0.0..1.0).contains(&self.filter_threshold) {
            return bad("filter_threshold must lie in [0, 1)");
        }
        if self.grad_clip.is_nan() || self.grad_clip < 0.0 {
            return bad("grad_clip must be >= 0");
        }
        Ok(())
    }

    /// Renders the parameters back into config-file syntax.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "windows = {}", self.windows);
        let _ = writeln!(s, "alpha1 = {}", self.alpha1);
        let _ = writeln!(s, "alpha2 = {}", self.alpha2);
        let _ = writeln!(s, "eta = {}", self.eta);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "u = {}", self.nms_decay);
        let _ = writeln!(s, "k = {}", self.nms_iou);
        let _ = writeln!(s, "delta = {}", self.score_threshold);
        let l = &self.lambdas;
        let _ = writeln!(s, "lambdas = {}, {}, {}", l.filter, l.regressor, l.classifier);
        let _ = writeln!(s, "neg_ratio = {}", self.neg_ratio);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "warmup = {}", self.warmup);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "dropout = {}", self.dropout);
        let _ = writeln!(s, "word_dim = {}", self.word_dim);
        let _ = writeln!(s, "char_dim = {}", self.char_dim);
        let _ = writeln!(s, "hidden_dim = {}", self.hidden_dim);
        let _ = writeln!(s, "min_count = {}", self.min_count);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "filter_threshold = {}", self.filter_threshold);
        let _ = writeln!(s, "grad_clip = {}", self.grad_clip);
        s
    }
}
