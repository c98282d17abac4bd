//! Joint training of the three heads: Adam with a linear warmup-decay
//! schedule, fresh negative samples every epoch, and dev-based selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::HyperParams;
use crate::corpus::{build_vocab, Encoded, Gold, Sentence, Vocab};
use crate::decoder::{decode, DecodeOptions};
use crate::error::{Error, Result};
use crate::metrics::{offset_histogram, EvalReport};
use crate::nn::{Dims, PassConfig, SpanModel, Tensor};
use crate::objective::LossParts;
use crate::targets::{assign_sentence, downsample_negatives, SpanTarget};

/// Adam moments, stored per parameter tensor in `SpanModel::visit_mut` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Updates applied so far.
    pub t: u64,
}

impl Adam {
    pub fn new(model: &mut SpanModel) -> Self {
        let mut sizes = Vec::new();
        model.visit_mut(&mut |_, p| sizes.push(p.len()));
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// One bias-corrected update from the gradients currently held by `model`.
    pub fn step(&mut self, model: &mut SpanModel, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let mut k = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_mut(&mut |_, p: &mut Tensor| {
            let (vals, grad) = p.split_mut();
            let (m, v) = (&mut ms[k], &mut vs[k]);
            for i in 0..vals.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                vals[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
            k += 1;
        });
    }
}

/// Learning rate for 0-based `step` of `total`: linear warmup over the first
/// `ceil(warmup * total)` steps, then linear decay towards 0.
pub fn lr_at(base: f64, step: u64, total: u64, warmup: f64) -> f64 {
    let w = ((warmup * total as f64).ceil() as u64).min(total);
    if step < w {
        base * (step + 1) as f64 / w as f64
    } else if total > w {
        base * total.saturating_sub(step) as f64 / (total - w) as f64
    } else {
        base
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`
/// (0 disables). Returns the norm before clipping.
pub fn clip_gradients(model: &mut SpanModel, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    model.visit_mut(&mut |_, p| sq += p.grad().iter().map(|g| g * g).sum::<f64>());
    let norm = sq.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        model.visit_mut(&mut |_, p| p.grad_mut().iter_mut().for_each(|g| *g *= s));
    }
    norm
}

/// Seed for the per-sentence sampling stream of one epoch.
pub fn sentence_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ epoch as u64) ^ index as u64)
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub model: SpanModel,
    pub optimizer: Adam,
    /// Epochs completed.
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    pub best_dev_f1: Option<f64>,
    pub best_epoch: Option<usize>,
}

impl TrainState {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("train state serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Component losses averaged over training sentences.
    pub loss: LossParts,
    pub total: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    pub dev_f1: Option<f64>,
    pub dev_proposal_ratio: Option<f64>,
    /// This epoch produced the best dev F1 so far.
    pub best: bool,
}

impl EpochLog {
    /// Single-line JSON, as written to the training log.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log serializes")
    }
}

pub struct Trainer {
    pub hp: HyperParams,
    pub vocab: Vocab,
    train: Vec<Encoded>,
    dev: Vec<Encoded>,
    /// Stage-one targets per training sentence; fixed across epochs.
    targets: Vec<Vec<SpanTarget>>,
    pub state: TrainState,
    best: Option<SpanModel>,
}

impl Trainer {
    /// Validates the configuration and both corpora before any training.
    pub fn new(hp: HyperParams, train: &[Sentence], dev: &[Sentence]) -> Result<Self> {
        hp.validate()?;
        for (name, corpus) in [("train", train), ("dev", dev)] {
            for (i, s) in corpus.iter().enumerate() {
                s.validate().map_err(|e| Error::parse(i + 1, format!("{name} corpus: {e}")))?;
            }
        }
        let vocab = build_vocab(train, hp.min_count)?;
        let unknown = vocab.unknown_labels(dev);
        if !unknown.is_empty() {
            return Err(Error::UnknownLabels(unknown));
        }
        let train: Vec<Encoded> = train.iter().map(|s| vocab.encode(s)).collect::<Result<_>>()?;
        let dev: Vec<Encoded> = dev.iter().map(|s| vocab.encode(s)).collect::<Result<_>>()?;
        let targets = train
            .iter()
            .map(|s| assign_sentence(s.len(), &s.gold, &hp.windows, hp.alpha1, hp.eta))
            .collect();
        let dims = Dims {
            n_words: vocab.num_tokens(),
            n_chars: vocab.num_chars(),
            n_labels: vocab.num_labels(),
            word_dim: hp.word_dim,
            char_dim: hp.char_dim,
            hidden_dim: hp.hidden_dim,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let mut model = SpanModel::new(dims, &mut rng);
        let optimizer = Adam::new(&mut model);
        let state = TrainState { model, optimizer, epoch: 0, rng, best_dev_f1: None, best_epoch: None };
        Ok(Trainer { hp, vocab, train, dev, targets, state, best: None })
    }

    fn total_steps(&self) -> u64 {
        (self.hp.epochs * self.train.len().div_ceil(self.hp.batch_size)) as u64
    }

    fn pass_config(&self) -> PassConfig {
        PassConfig {
            alpha2: self.hp.alpha2,
            eta: self.hp.eta,
            gamma: self.hp.gamma,
            lambdas: self.hp.lambdas,
            dropout: self.hp.dropout,
        }
    }

    /// Runs one epoch and, with a dev set, evaluates and updates the best model.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let epoch = self.state.epoch;
        let pass = self.pass_config();
        let total = self.total_steps();
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.state.rng);
        let mut sum = LossParts::default();
        let mut lr = 0.0;
        for (b, batch) in order.chunks(self.hp.batch_size).enumerate() {
            let model = &mut self.state.model;
            model.zero_grad();
            for &i in batch {
                let mut srng = ChaCha8Rng::seed_from_u64(sentence_seed(self.hp.seed, epoch, i));
                let sampled = downsample_negatives(&self.targets[i], self.hp.neg_ratio, &mut srng);
                let parts = model.train_pass(&self.train[i], &sampled, &pass, Some(&mut srng), true)?;
                if !parts.is_finite() {
                    return Err(Error::NonFinite {
                        epoch: epoch + 1,
                        step: b + 1,
                        detail: format!("loss {parts:?} on training sentence {}", i + 1),
                    });
                }
                sum += parts;
            }
            let norm = clip_gradients(model, self.hp.grad_clip);
            if !norm.is_finite() {
                return Err(Error::NonFinite { epoch: epoch + 1, step: b + 1, detail: "gradient norm".into() });
            }
            lr = lr_at(self.hp.lr, self.state.optimizer.t, total, self.hp.warmup);
            self.state.optimizer.step(model, lr);
        }
        self.state.epoch += 1;

        let n = self.train.len() as f64;
        let loss = LossParts { filter: sum.filter / n, regressor: sum.regressor / n, classifier: sum.classifier / n };
        let mut log = EpochLog {
            epoch: self.state.epoch,
            loss,
            total: loss.total(&self.hp.lambdas),
            lr,
            dev_f1: None,
            dev_proposal_ratio: None,
            best: false,
        };
        if !self.dev.is_empty() {
            let report = evaluate(&self.state.model, &DecodeOptions::from_hp(&self.hp), &self.dev)?;
            let f1 = report.overall.f1;
            log.dev_f1 = Some(f1);
            log.dev_proposal_ratio = Some(report.proposal_ratio);
            if self.state.best_dev_f1.is_none_or(|b| f1 > b) {
                self.state.best_dev_f1 = Some(f1);
                self.state.best_epoch = Some(self.state.epoch);
                self.best = Some(self.state.model.clone());
                log.best = true;
            }
        }
        Ok(log)
    }

    /// Trains for the remaining epochs, reporting each one to `on_epoch`.
    pub fn fit(&mut self, on_epoch: &mut dyn FnMut(&EpochLog)) -> Result<Vec<EpochLog>> {
        let mut logs = Vec::new();
        while self.state.epoch < self.hp.epochs {
            let log = self.run_epoch()?;
            on_epoch(&log);
            logs.push(log);
        }
        Ok(logs)
    }

    /// Best-dev model, or the current one when there is no dev set.
    pub fn best_model(&self) -> &SpanModel {
        self.best.as_ref().unwrap_or(&self.state.model)
    }

    pub fn train_data(&self) -> &[Encoded] {
        &self.train
    }

    pub fn dev_data(&self) -> &[Encoded] {
        &self.dev
    }
}

/// Per-sentence predictions and the report over an encoded corpus.
pub fn decode_corpus(
    model: &SpanModel,
    opts: &DecodeOptions,
    data: &[Encoded],
) -> Result<(Vec<Vec<crate::decoder::ScoredSpan>>, EvalReport)> {
    let mut preds = Vec::with_capacity(data.len());
    let mut offsets = Vec::new();
    let mut proposals = 0;
    for s in data {
        let d = decode(model, s, opts)?;
        proposals += d.proposals.len();
        offsets.extend(d.proposals.iter().map(|p| p.offsets));
        preds.push(d.entities);
    }
    let pred_gold: Vec<Vec<Gold>> = preds
        .iter()
        .map(|es| es.iter().map(|e| Gold { span: e.span, label: e.label }).collect())
        .collect();
    let gold: Vec<Vec<Gold>> = data.iter().map(|s| s.gold.clone()).collect();
    let report = EvalReport::build(&pred_gold, &gold, offset_histogram(&offsets), proposals);
    Ok((preds, report))
}

pub fn evaluate(model: &SpanModel, opts: &DecodeOptions, data: &[Encoded]) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(decode_corpus(model, opts, data)?.1)
}
