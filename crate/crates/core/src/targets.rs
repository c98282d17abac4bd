//! Seed-span enumeration and training-target assignment.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Gold, NONE_LABEL};
use crate::span::{iou, offset_targets, Offsets, Span};

/// Strictly increasing set of enumerated span lengths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct WindowSet(Vec<usize>);

impl WindowSet {
    pub fn new(mut lengths: Vec<usize>) -> Result<Self, String> {
        lengths.sort_unstable();
        lengths.dedup();
        if lengths.is_empty() {
            return Err("window set is empty".into());
        }
        if lengths[0] == 0 {
            return Err("window lengths must be >= 1".into());
        }
        Ok(WindowSet(lengths))
    }

    /// `[1-7, 9, 11, 13, 15]`.
    pub fn standard() -> Self {
        WindowSet(vec![1, 2, 3, 4, 5, 6, 7, 9, 11, 13, 15])
    }

    pub fn lengths(&self) -> &[usize] {
        &self.0
    }

    pub fn max_len(&self) -> usize {
        *self.0.last().expect("nonempty")
    }

    pub fn contains(&self, len: usize) -> bool {
        self.0.binary_search(&len).is_ok()
    }
}

impl TryFrom<Vec<usize>> for WindowSet {
    type Error = String;
    fn try_from(v: Vec<usize>) -> Result<Self, String> {
        WindowSet::new(v)
    }
}

impl From<WindowSet> for Vec<usize> {
    fn from(w: WindowSet) -> Self {
        w.0
    }
}

/// Accepts comma-separated lengths and inclusive ranges, e.g. `1-7, 9, 11`.
impl FromStr for WindowSet {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.trim().trim_start_matches('[').trim_end_matches(']').split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
            match part.split_once('-') {
                Some((a, b)) => {
                    let (a, b) = (num(a)?, num(b)?);
                    if a > b {
                        return Err(format!("empty range {part:?}"));
                    }
                    out.extend(a..=b);
                }
                None => out.push(num(part)?),
            }
        }
        WindowSet::new(out)
    }
}

/// Writes the compact range form accepted by `FromStr`.
impl fmt::Display for WindowSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        let mut i = 0;
        while i < self.0.len() {
            let mut j = i;
            while j + 1 < self.0.len() && self.0[j + 1] == self.0[j] + 1 {
                j += 1;
            }
            if j > i + 1 {
                parts.push(format!("{}-{}", self.0[i], self.0[j]));
            } else {
                parts.extend(self.0[i..=j].iter().map(|n| n.to_string()));
            }
            i = j + 1;
        }
        f.write_str(&parts.join(", "))
    }
}

/// Every span whose length is in `windows`, ordered by length then start.
pub fn enumerate_seeds(sentence_len: usize, windows: &WindowSet) -> Vec<Span> {
    let mut out = Vec::new();
    for &len in windows.lengths() {
        if len > sentence_len {
            break;
        }
        for start in 0..=sentence_len - len {
            out.push(Span { start, end: start + len - 1 });
        }
    }
    out
}

/// The gold mention with the highest IoU against `span`.
///
/// Ties go to the shorter mention, then the earlier start (then the smaller
/// label id, so the choice never depends on input order).
pub fn pair_with_gold(span: Span, gold: &[Gold]) -> (Option<Gold>, f64) {
    let mut best: Option<(Gold, f64)> = None;
    for &g in gold {
        let v = iou(span, g.span);
        let better = match best {
            None => true,
            Some((b, bv)) => {
                v > bv || (v == bv && (g.span.len(), g.span.start, g.label) < (b.span.len(), b.span.start, b.label))
            }
        };
        if better {
            best = Some((g, v));
        }
    }
    match best {
        Some((g, v)) => (Some(g), v),
        None => (None, 0.0),
    }
}

/// `iou^eta` at or above the threshold, `(1 - iou)^eta` below it.
pub fn soft_weight(iou: f64, alpha: f64, eta: f64) -> f64 {
    if iou >= alpha {
        iou.powf(eta)
    } else {
        (1.0 - iou).powf(eta)
    }
}

/// Training assignment for one seed span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanTarget {
    pub span: Span,
    pub paired: Option<Gold>,
    pub iou: f64,
    pub positive: bool,
    /// Regression target; present only for positives.
    pub offsets: Option<Offsets>,
    pub class_label: usize,
    pub weight: f64,
}

pub fn assign_stage1(span: Span, gold: &[Gold], alpha1: f64, eta: f64) -> SpanTarget {
    let (paired, v) = pair_with_gold(span, gold);
    let positive = paired.is_some() && v >= alpha1;
    let (offsets, class_label) = match paired {
        Some(g) if positive => (Some(offset_targets(span, g.span)), g.label),
        _ => (None, NONE_LABEL),
    };
    SpanTarget {
        span,
        paired,
        iou: v,
        positive,
        offsets,
        class_label,
        weight: soft_weight(v, alpha1, eta),
    }
}

/// Stage-two label and weight for an adjusted span against its paired gold.
pub fn assign_stage2(adjusted: Span, paired: Option<Gold>, alpha2: f64, eta: f64) -> (usize, f64) {
    match paired {
        None => (NONE_LABEL, 1.0),
        Some(g) => {
            let v = iou(adjusted, g.span);
            let label = if v >= alpha2 { g.label } else { NONE_LABEL };
            (label, soft_weight(v, alpha2, eta))
        }
    }
}

/// Stage-one targets for every seed of a sentence.
pub fn assign_sentence(
    sentence_len: usize,
    gold: &[Gold],
    windows: &WindowSet,
    alpha1: f64,
    eta: f64,
) -> Vec<SpanTarget> {
    enumerate_seeds(sentence_len, windows)
        .into_iter()
        .map(|s| assign_stage1(s, gold, alpha1, eta))
        .collect()
}

/// Keeps every positive and at most `ratio` negatives per positive, sampled
/// uniformly without replacement. With no positives, `ratio` negatives are
/// kept. Surviving targets keep their original relative order.
pub fn downsample_negatives<R: Rng + ?Sized>(
    targets: &[SpanTarget],
    ratio: usize,
    rng: &mut R,
) -> Vec<SpanTarget> {
    assert!(ratio >= 1, "negative ratio must be >= 1");
    let negatives: Vec<usize> = (0..targets.len()).filter(|&i| !targets[i].positive).collect();
    let n_pos = targets.len() - negatives.len();
    let cap = if n_pos == 0 { ratio } else { ratio * n_pos };
    let mut keep = vec![false; targets.len()];
    for (i, t) in targets.iter().enumerate() {
        keep[i] = t.positive;
    }
    if negatives.len() <= cap {
        for &i in &negatives {
            keep[i] = true;
        }
    } else {
        for j in sample(rng, negatives.len(), cap) {
            keep[negatives[j]] = true;
        }
    }
    targets
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(t, _)| t.clone())
        .collect()
}
