//! Inference: filter seeds into proposals, shift their boundaries, classify,
//! then suppress overlapping duplicates with Soft-NMS.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::config::HyperParams;
use crate::corpus::{Encoded, NONE_LABEL};
use crate::error::Result;
use crate::nn::{Encoding, SpanModel};
use crate::span::{adjust_checked, iou, Offsets, Span};
use crate::targets::{enumerate_seeds, WindowSet};

/// A decoded mention with its confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSpan {
    pub span: Span,
    pub label: usize,
    pub score: f64,
}

/// Soft-NMS settings: decay `u`, IoU threshold `k`, final threshold `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsParams {
    pub decay: f64,
    pub iou_threshold: f64,
    pub score_threshold: f64,
}

impl NmsParams {
    pub fn from_hp(hp: &HyperParams) -> Self {
        NmsParams { decay: hp.nms_decay, iou_threshold: hp.nms_iou, score_threshold: hp.score_threshold }
    }
}

/// A seed the filter kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub seed: Span,
    pub filter_prob: f64,
    pub offsets: Offsets,
    pub adjusted: Span,
    /// Boundaries crossed after clamping and were collapsed.
    pub repaired: bool,
    /// Class distribution over the adjusted span; empty until classified.
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOptions {
    pub windows: WindowSet,
    pub filter_threshold: f64,
    pub nms: NmsParams,
    /// When false, predicted offsets are ignored and proposals keep their seed boundaries.
    pub use_offsets: bool,
}

impl DecodeOptions {
    pub fn from_hp(hp: &HyperParams) -> Self {
        DecodeOptions {
            windows: hp.windows.clone(),
            filter_threshold: hp.filter_threshold,
            nms: NmsParams::from_hp(hp),
            use_offsets: true,
        }
    }
}

/// Seeds whose filter probability exceeds `keep_threshold`, with adjusted boundaries.
pub fn propose(model: &SpanModel, enc: &Encoding, opts: &DecodeOptions) -> Vec<Proposal> {
    let n = enc.len();
    if n == 0 {
        return Vec::new();
    }
    enumerate_seeds(n, &opts.windows)
        .into_iter()
        .filter_map(|seed| {
            let p = model.filter_prob(enc, seed);
            if p <= opts.filter_threshold {
                return None;
            }
            let offsets = if opts.use_offsets { model.offsets(enc, seed) } else { Offsets::ZERO };
            let adj = adjust_checked(seed, offsets, n);
            Some(Proposal {
                seed,
                filter_prob: p,
                offsets,
                adjusted: adj.span,
                repaired: adj.repaired,
                probs: Vec::new(),
            })
        })
        .collect()
}

/// Argmax label and its probability; `None` when the argmax is the None class.
/// Ties go to the lower class id.
pub fn score_distribution(probs: &[f64]) -> Option<(usize, f64)> {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    (best != NONE_LABEL).then(|| (best, probs[best]))
}

/// Classifies every proposal; spans whose argmax is None are dropped.
/// Duplicate adjusted spans are all kept.
pub fn classify_and_score(model: &SpanModel, enc: &Encoding, proposals: &mut [Proposal]) -> Vec<ScoredSpan> {
    let mut out = Vec::new();
    for p in proposals.iter_mut() {
        p.probs = model.class_probs(enc, p.adjusted);
        if let Some((label, score)) = score_distribution(&p.probs) {
            out.push(ScoredSpan { span: p.adjusted, label, score });
        }
    }
    out
}

/// Score update for span `j` after span `i` has been selected.
#[inline]
pub fn decay(score: f64, iou_ij: f64, u: f64, k: f64) -> f64 {
    if iou_ij >= k {
        score * u
    } else {
        score
    }
}

/// Descending score, then ascending `(start, end, label)`.
pub fn rank_order(a: &ScoredSpan, b: &ScoredSpan) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| (a.span.start, a.span.end, a.label).cmp(&(b.span.start, b.span.end, b.label)))
}

/// Soft-NMS over class-agnostic spans.
///
/// Repeatedly moves the best remaining span to the output and decays every
/// remaining span that overlaps it by at least `k`, re-inserting decayed
/// spans at their sorted position. Only spans scoring above `delta` at the
/// end are returned, in selection order.
pub fn soft_nms(spans: &[ScoredSpan], params: &NmsParams) -> Vec<ScoredSpan> {
    let mut rest: Vec<ScoredSpan> = spans.to_vec();
    rest.sort_by(rank_order);
    // kept in reverse so the best span pops off the end
    rest.reverse();
    let mut out = Vec::with_capacity(rest.len());
    while let Some(best) = rest.pop() {
        let mut decayed = Vec::new();
        rest.retain_mut(|s| {
            let v = iou(best.span, s.span);
            if v >= params.iou_threshold {
                s.score = decay(s.score, v, params.decay, params.iou_threshold);
                decayed.push(*s);
                false
            } else {
                true
            }
        });
        for s in decayed {
            // `rest` is ascending under rank_order reversed
            let pos = rest.partition_point(|x| rank_order(x, &s) == Ordering::Greater);
            rest.insert(pos, s);
        }
        out.push(best);
    }
    out.retain(|s| s.score > params.score_threshold);
    out
}

/// Everything decoding produced for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Final mentions, sorted by `(start, end, label)`, one per span/label pair.
    pub entities: Vec<ScoredSpan>,
    pub proposals: Vec<Proposal>,
}

/// Full inference pipeline for one sentence.
pub fn decode(model: &SpanModel, s: &Encoded, opts: &DecodeOptions) -> Result<Decoded> {
    if s.is_empty() {
        return Ok(Decoded { entities: Vec::new(), proposals: Vec::new() });
    }
    let enc = model.encode(s)?;
    let mut proposals = propose(model, &enc, opts);
    let scored = classify_and_score(model, &enc, &mut proposals);
    let kept = soft_nms(&scored, &opts.nms);
    let mut seen = HashSet::new();
    let mut entities: Vec<ScoredSpan> = kept.into_iter().filter(|s| seen.insert((s.span, s.label))).collect();
    entities.sort_by_key(|e| (e.span.start, e.span.end, e.label));
    Ok(Decoded { entities, proposals })
}
