//! Span feature builders and the filter, regressor and classifier heads.

use rand::Rng;

use super::linear::Mlp;
use super::ops::{sigmoid, softmax};
use crate::span::{Offsets, Span};

/// Where a boundary feature came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Token(usize),
    Bos,
    Eos,
}

/// A `3d` span feature `[maxpool; left; right]` with what backward needs.
#[derive(Debug, Clone)]
pub struct SpanFeature {
    pub x: Vec<f64>,
    argmax: Vec<usize>,
    left: Slot,
    right: Slot,
}

fn maxpool(h: &[Vec<f64>], span: Span) -> (Vec<f64>, Vec<usize>) {
    let d = h[0].len();
    let mut best = h[span.start].clone();
    let mut arg = vec![span.start; d];
    for (t, row) in h.iter().enumerate().take(span.end + 1).skip(span.start + 1) {
        for j in 0..d {
            if row[j] > best[j] {
                best[j] = row[j];
                arg[j] = t;
            }
        }
    }
    (best, arg)
}

/// `[maxpool(h_start..=h_end); h_start; h_end]`.
pub fn span_repr_inner(h: &[Vec<f64>], span: Span) -> SpanFeature {
    let (mut x, argmax) = maxpool(h, span);
    x.extend_from_slice(&h[span.start]);
    x.extend_from_slice(&h[span.end]);
    SpanFeature { x, argmax, left: Slot::Token(span.start), right: Slot::Token(span.end) }
}

/// `[maxpool(h_start..=h_end); h_{start-1}; h_{end+1}]`, with the sentinels
/// standing in past either edge of the sentence.
pub fn span_repr_outer(h: &[Vec<f64>], span: Span, bos: &[f64], eos: &[f64]) -> SpanFeature {
    let (mut x, argmax) = maxpool(h, span);
    let left = if span.start == 0 { Slot::Bos } else { Slot::Token(span.start - 1) };
    let right = if span.end + 1 >= h.len() { Slot::Eos } else { Slot::Token(span.end + 1) };
    let pick = |s: Slot| match s {
        Slot::Token(i) => h[i].as_slice(),
        Slot::Bos => bos,
        Slot::Eos => eos,
    };
    x.extend_from_slice(pick(left));
    x.extend_from_slice(pick(right));
    SpanFeature { x, argmax, left, right }
}

impl SpanFeature {
    pub fn slots(&self) -> (Slot, Slot) {
        (self.left, self.right)
    }

    /// Adds the gradient `dx` of this feature into the token and sentinel gradients.
    pub fn scatter(&self, dx: &[f64], dh: &mut [Vec<f64>], dbos: &mut [f64], deos: &mut [f64]) {
        let d = self.argmax.len();
        for (j, &t) in self.argmax.iter().enumerate() {
            dh[t][j] += dx[j];
        }
        for (slot, part) in [(self.left, &dx[d..2 * d]), (self.right, &dx[2 * d..])] {
            let target: &mut [f64] = match slot {
                Slot::Token(i) => &mut dh[i],
                Slot::Bos => dbos,
                Slot::Eos => deos,
            };
            for (g, v) in target.iter_mut().zip(part) {
                *g += v;
            }
        }
    }
}

/// Inverted dropout mask: entries are 0 or `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect()
}

/// Filter probability `sigmoid(MLP(x))`.
pub fn filter_head(mlp: &Mlp, x: &[f64]) -> f64 {
    sigmoid(mlp.forward(x.to_vec()).out[0])
}

/// Boundary offsets `W2 GELU(W1 x + b1) + b2`.
pub fn regressor_head(mlp: &Mlp, x: &[f64]) -> Offsets {
    let out = mlp.forward(x.to_vec()).out;
    Offsets::new(out[0], out[1])
}

/// Class distribution `softmax(MLP(x))` over `C + 1` classes, index 0 = None.
pub fn classifier_head(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
    softmax(&mlp.forward(x.to_vec()).out)
}
