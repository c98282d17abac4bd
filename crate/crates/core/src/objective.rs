//! Training losses.
//!
//! Every loss is a plain sum over examples. The per-example helpers also
//! return the derivative the model needs for backpropagation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::span::{overlap_ratio_with_grad, Offsets, Span};

/// Probability clamp for the log terms.
pub const PROB_EPS: f64 = 1e-7;

/// Weights of the filter, regressor and classifier losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub filter: f64,
    pub regressor: f64,
    pub classifier: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { filter: 1.0, regressor: 0.1, classifier: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.filter, self.regressor, self.classifier];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::Config("loss weights must not all be zero".into()));
        }
        Ok(())
    }
}

/// One filter prediction with its target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterExample {
    pub prob: f64,
    pub positive: bool,
    pub weight: f64,
}

/// Focal loss for one example and its derivative with respect to the
/// pre-sigmoid logit.
///
/// `prob` must be `sigmoid(logit)`; it is clamped to `[eps, 1 - eps]` for the
/// loss, and the derivative is zero where the clamp is active.
pub fn focal_term(prob: f64, positive: bool, weight: f64, gamma: f64) -> (f64, f64) {
    // q is the probability assigned to the true class.
    let q_raw = if positive { prob } else { 1.0 - prob };
    let q = q_raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let m = 1.0 - q;
    let loss = weight * m.powf(gamma) * -q.ln();
    if q_raw != q {
        return (loss, 0.0);
    }
    // d/dq [ (1-q)^g * -ln q ] = g (1-q)^(g-1) ln q - (1-q)^g / q
    let pow_m1 = if gamma == 0.0 { 0.0 } else { gamma * m.powf(gamma - 1.0) };
    let dq = weight * (pow_m1 * q.ln() - m.powf(gamma) / q);
    // dq/dlogit = +/- p (1 - p)
    let dp = prob * (1.0 - prob);
    let dlogit = if positive { dq * dp } else { -dq * dp };
    (loss, dlogit)
}

/// Focal loss summed over examples.
pub fn filter_loss(examples: &[FilterExample], gamma: f64) -> f64 {
    examples.iter().map(|e| focal_term(e.prob, e.positive, e.weight, gamma).0).sum()
}

/// Smooth L1 with the transition at |x| = 1.
pub fn smooth_l1(pred: f64, target: f64) -> f64 {
    smooth_l1_grad(pred, target).0
}

/// Smooth L1 and its derivative with respect to `pred`.
pub fn smooth_l1_grad(pred: f64, target: f64) -> (f64, f64) {
    let x = pred - target;
    if x.abs() < 1.0 {
        (0.5 * x * x, x)
    } else {
        (x.abs() - 0.5, x.signum())
    }
}

/// One positive seed for the regression loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionExample {
    pub seed: Span,
    pub gold: Span,
    pub pred: Offsets,
    pub target: Offsets,
}

/// Boundary-level smooth L1 plus span-level overlap loss for one positive
/// seed, with the derivative with respect to the predicted offsets.
pub fn regression_term(ex: &RegressionExample) -> (f64, Offsets) {
    let (l1_l, g_l) = smooth_l1_grad(ex.pred.left, ex.target.left);
    let (l1_r, g_r) = smooth_l1_grad(ex.pred.right, ex.target.right);
    let ps = ex.seed.start as f64 + ex.pred.left;
    let pe = ex.seed.end as f64 + ex.pred.right;
    let (ratio, dr_ds, dr_de) = overlap_ratio_with_grad(ps, pe, ex.gold);
    let loss = l1_l + l1_r + (1.0 - ratio);
    (loss, Offsets::new(g_l - dr_ds, g_r - dr_de))
}

pub fn regression_loss(examples: &[RegressionExample]) -> f64 {
    examples.iter().map(|e| regression_term(e).0).sum()
}

/// Weighted cross-entropy for one distribution, with the derivative with
/// respect to the softmax logits (written into `dlogits`).
pub fn cross_entropy_term(probs: &[f64], label: usize, weight: f64, dlogits: &mut [f64]) -> f64 {
    let p = probs[label];
    let loss = weight * -p.max(PROB_EPS).ln();
    for (d, &q) in dlogits.iter_mut().zip(probs) {
        *d = weight * q;
    }
    dlogits[label] -= weight;
    if p < PROB_EPS {
        dlogits.iter_mut().for_each(|d| *d = 0.0);
    }
    loss
}

/// One classifier prediction with its stage-two target.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassExample {
    pub probs: Vec<f64>,
    pub label: usize,
    pub weight: f64,
}

pub fn classifier_loss(examples: &[ClassExample]) -> f64 {
    examples
        .iter()
        .map(|e| e.weight * -e.probs[e.label].max(PROB_EPS).ln())
        .sum()
}

/// The three component losses of one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub filter: f64,
    pub regressor: f64,
    pub classifier: f64,
}

impl LossParts {
    pub fn total(&self, w: &LossWeights) -> f64 {
        total_loss(self.filter, self.regressor, self.classifier, w)
    }

    pub fn is_finite(&self) -> bool {
        self.filter.is_finite() && self.regressor.is_finite() && self.classifier.is_finite()
    }
}

impl std::ops::AddAssign for LossParts {
    fn add_assign(&mut self, o: LossParts) {
        self.filter += o.filter;
        self.regressor += o.regressor;
        self.classifier += o.classifier;
    }
}

pub fn total_loss(filter: f64, regressor: f64, classifier: f64, w: &LossWeights) -> f64 {
    w.filter * filter + w.regressor * regressor + w.classifier * classifier
}
