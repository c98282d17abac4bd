//! Token-span arithmetic.
//!
//! Spans are inclusive on both ends: `(3, 5)` covers tokens 3, 4 and 5.
//! Everything here is a pure function over small `Copy` values.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An inclusive token interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    /// Creates a span, rejecting `start > end`.
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidSpan { start, end });
        }
        Ok(Span { start, end })
    }

    /// Number of tokens covered.
    #[inline]
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    /// Spans always cover at least one token.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    #[inline]
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    /// True when the span fits inside a sentence of `n` tokens.
    #[inline]
    pub fn fits(&self, n: usize) -> bool {
        self.end < n
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.start, self.end)
    }
}

/// Real-valued left/right boundary shifts, in tokens.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Offsets {
    pub left: f64,
    pub right: f64,
}

impl Offsets {
    pub const ZERO: Offsets = Offsets { left: 0.0, right: 0.0 };

    pub fn new(left: f64, right: f64) -> Self {
        Offsets { left, right }
    }

    pub fn is_finite(&self) -> bool {
        self.left.is_finite() && self.right.is_finite()
    }
}

/// Intersection over union of the two spans' token sets.
pub fn iou(a: Span, b: Span) -> f64 {
    let lo = a.start.max(b.start);
    let hi = a.end.min(b.end);
    if lo > hi {
        return 0.0;
    }
    let inter = hi - lo + 1;
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Offsets that move `seed` onto `gold`.
pub fn offset_targets(seed: Span, gold: Span) -> Offsets {
    Offsets {
        left: gold.start as f64 - seed.start as f64,
        right: gold.end as f64 - seed.end as f64,
    }
}

/// `floor(t + 1/2)`.
#[inline]
pub fn round_offset(t: f64) -> i64 {
    (t + 0.5).floor() as i64
}

/// Result of shifting a span by predicted offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adjusted {
    pub span: Span,
    /// Set when clamping inverted the span and it had to be collapsed to one token.
    pub repaired: bool,
}

/// Shifts `span` by rounded offsets; the start is floored at 0 and the end
/// capped at `sentence_len - 1`.
///
/// If the boundaries then cross, the result collapses to the single token at
/// their midpoint (clamped into the sentence) and `repaired` is set.
pub fn adjust_checked(span: Span, t: Offsets, sentence_len: usize) -> Adjusted {
    debug_assert!(sentence_len >= 1);
    let last = sentence_len.saturating_sub(1) as i64;
    let start = (span.start as i64 + round_offset(t.left)).max(0);
    let end = (span.end as i64 + round_offset(t.right)).min(last);
    if start <= end {
        Adjusted {
            span: Span { start: start as usize, end: end as usize },
            repaired: false,
        }
    } else {
        let mid = (start + end).div_euclid(2).clamp(0, last) as usize;
        Adjusted {
            span: Span { start: mid, end: mid },
            repaired: true,
        }
    }
}

/// Boundary adjustment without the repair flag.
pub fn adjust(span: Span, t: Offsets, sentence_len: usize) -> Span {
    adjust_checked(span, t, sentence_len).span
}

/// Overlap ratio between a continuous prediction and a gold span.
///
/// Both are read as half-open intervals `[start, end + 1)`. The result is 1
/// for an exact match and goes negative once the intervals are disjoint.
pub fn overlap_ratio_continuous(pred_start: f64, pred_end: f64, gold: Span) -> f64 {
    overlap_ratio_with_grad(pred_start, pred_end, gold).0
}

/// Overlap ratio plus its partial derivatives with respect to `pred_start`
/// and `pred_end`. At the kinks the derivative of the branch taken by
/// `min`/`max` is used.
pub fn overlap_ratio_with_grad(pred_start: f64, pred_end: f64, gold: Span) -> (f64, f64, f64) {
    let a = pred_start;
    let b = pred_end + 1.0;
    let gs = gold.start as f64;
    let ge = gold.end as f64 + 1.0;

    // num = min(b, ge) - max(a, gs); den = max(b, ge) - min(a, gs)
    let (min_d, dmin_db) = if b < ge { (b, 1.0) } else { (ge, 0.0) };
    let (max_e, dmax_da) = if a > gs { (a, 1.0) } else { (gs, 0.0) };
    let (max_d, dmax_db) = if b > ge { (b, 1.0) } else { (ge, 0.0) };
    let (min_e, dmin_da) = if a < gs { (a, 1.0) } else { (gs, 0.0) };

    let num = min_d - max_e;
    let den = max_d - min_e;
    let r = num / den;

    let dnum_da = -dmax_da;
    let dden_da = -dmin_da;
    let dnum_db = dmin_db;
    let dden_db = dmax_db;
    let dr_da = (dnum_da * den - num * dden_da) / (den * den);
    let dr_db = (dnum_db * den - num * dden_db) / (den * den);
    (r, dr_da, dr_db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn sp(s: usize, e: usize) -> Span {
        Span::new(s, e).unwrap()
    }

    fn oracle_iou(a: Span, b: Span) -> f64 {
        let sa: BTreeSet<usize> = (a.start..=a.end).collect();
        let sb: BTreeSet<usize> = (b.start..=b.end).collect();
        let i = sa.intersection(&sb).count();
        let u = sa.union(&sb).count();
        i as f64 / u as f64
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(sp(2, 5), sp(2, 5)), 1.0);
        assert_eq!(iou(sp(0, 1), sp(3, 4)), 0.0);
        assert_eq!(iou(sp(0, 3), sp(2, 5)), 1.0 / 3.0);
    }

    #[test]
    fn iou_matches_token_sets() {
        for n in 1..=12 {
            for a_s in 0..n {
                for a_e in a_s..n {
                    for b_s in 0..n {
                        for b_e in b_s..n {
                            let (a, b) = (sp(a_s, a_e), sp(b_s, b_e));
                            assert_eq!(iou(a, b), oracle_iou(a, b));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_inverted() {
        assert!(Span::new(3, 2).is_err());
    }

    #[test]
    fn offset_target_examples() {
        assert_eq!(offset_targets(sp(3, 5), sp(2, 6)), Offsets::new(-1.0, 1.0));
        assert_eq!(offset_targets(sp(4, 4), sp(4, 4)), Offsets::ZERO);
        assert_eq!(offset_targets(sp(0, 2), sp(3, 7)), Offsets::new(3.0, 5.0));
    }

    #[test]
    fn rounding() {
        assert_eq!(round_offset(0.4), 0);
        assert_eq!(round_offset(0.6), 1);
        assert_eq!(round_offset(-0.6), -1);
        assert_eq!(round_offset(0.5), 1);
        assert_eq!(round_offset(-0.5), 0);
        for n in -50i64..=50 {
            assert_eq!(round_offset(n as f64), n);
        }
    }

    #[test]
    fn adjust_examples() {
        assert_eq!(adjust(sp(3, 5), Offsets::new(-0.6, 1.4), 10), sp(2, 6));
        assert_eq!(adjust(sp(0, 2), Offsets::new(-2.3, 0.0), 8), sp(0, 2));
        assert_eq!(adjust(sp(4, 6), Offsets::ZERO, 10), sp(4, 6));
    }

    #[test]
    fn adjust_clamps_right_edge() {
        assert_eq!(adjust(sp(5, 7), Offsets::new(0.0, 4.0), 9), sp(5, 8));
    }

    #[test]
    fn adjust_repairs_inverted() {
        let out = adjust_checked(sp(2, 3), Offsets::new(3.0, -2.0), 10);
        assert!(out.repaired);
        assert_eq!(out.span.len(), 1);
        // start 5, end 1 -> midpoint 3
        assert_eq!(out.span, sp(3, 3));

        let out = adjust_checked(sp(0, 0), Offsets::new(20.0, 0.0), 4);
        assert!(out.repaired);
        assert!(out.span.fits(4));

        // start 12 runs past the end, which is capped at 9: midpoint 10 clamps to 9
        let out = adjust_checked(sp(8, 8), Offsets::new(4.0, 5.0), 10);
        assert_eq!(out, Adjusted { span: sp(9, 9), repaired: true });

        // end -3 before the floored start 0: midpoint -2 clamps to 0
        let out = adjust_checked(sp(1, 1), Offsets::new(-4.0, -4.0), 10);
        assert_eq!(out, Adjusted { span: sp(0, 0), repaired: true });
    }

    #[test]
    fn overlap_examples() {
        assert!((overlap_ratio_continuous(2.0, 5.0, sp(3, 6)) - 0.6).abs() < 1e-12);
        assert_eq!(overlap_ratio_continuous(4.0, 7.0, sp(4, 7)), 1.0);
        assert!((overlap_ratio_continuous(0.0, 1.0, sp(5, 6)) + 3.0 / 7.0).abs() < 1e-12);
        // single-token exact match is well defined
        assert_eq!(overlap_ratio_continuous(3.0, 3.0, sp(3, 3)), 1.0);
    }

    #[test]
    fn overlap_gradient_matches_differences() {
        let h = 1e-6;
        let gold = sp(3, 6);
        for &(a, b) in &[(2.3, 5.1), (3.7, 6.6), (0.2, 1.4), (4.1, 8.2), (2.6, 7.3)] {
            let (_, da, db) = overlap_ratio_with_grad(a, b, gold);
            let fa = (overlap_ratio_continuous(a + h, b, gold)
                - overlap_ratio_continuous(a - h, b, gold))
                / (2.0 * h);
            let fb = (overlap_ratio_continuous(a, b + h, gold)
                - overlap_ratio_continuous(a, b - h, gold))
                / (2.0 * h);
            assert!((da - fa).abs() < 1e-6, "{a} {b}: {da} vs {fa}");
            assert!((db - fb).abs() < 1e-6, "{a} {b}: {db} vs {fb}");
        }
    }

    fn span_in(n: usize) -> impl Strategy<Value = Span> {
        (0..n).prop_flat_map(move |s| (Just(s), s..n)).prop_map(|(s, e)| Span { start: s, end: e })
    }

    proptest! {
        #[test]
        fn iou_symmetric(a in span_in(40), b in span_in(40)) {
            prop_assert_eq!(iou(a, b), iou(b, a));
            let v = iou(a, b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v == 1.0, a == b);
            prop_assert_eq!(v == 0.0, !a.overlaps(&b));
        }

        #[test]
        fn target_round_trip((n, seed, gold) in (1usize..60).prop_flat_map(|n| (Just(n), span_in(n), span_in(n)))) {
            prop_assert_eq!(adjust(seed, offset_targets(seed, gold), n), gold);
        }

        #[test]
        fn overlap_is_one_only_on_match(
            gold in span_in(30),
            ds in -3.0f64..3.0,
            de in -3.0f64..3.0,
        ) {
            let ps = gold.start as f64 + ds;
            let pe = (gold.end as f64 + de).max(ps);
            let r = overlap_ratio_continuous(ps, pe, gold);
            if ds == 0.0 && pe == gold.end as f64 {
                prop_assert_eq!(r, 1.0);
            } else {
                prop_assert!(r < 1.0);
            }
        }
    }
}
