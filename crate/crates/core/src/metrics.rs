//! Strict entity-level scoring and the diagnostic reports built on it.
//!
//! A prediction counts only if its start, end and label all equal a gold
//! mention in the same sentence. Predictions and gold are treated as sets.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Gold;
use crate::span::round_offset;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    pub fn scores(&self) -> Scores {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Scores { precision, recall, f1, support: self.tp + self.fn_, counts: *self }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Precision, recall and F1 with the gold support they were computed on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub counts: Counts,
}

fn as_set(v: &[Gold]) -> HashSet<Gold> {
    v.iter().copied().collect()
}

/// Counts for one sentence.
pub fn sentence_counts(pred: &[Gold], gold: &[Gold]) -> Counts {
    let p = as_set(pred);
    let g = as_set(gold);
    let tp = p.intersection(&g).count();
    Counts { tp, fp: p.len() - tp, fn_: g.len() - tp }
}

/// Corpus-level strict precision/recall/F1; `pred[i]` and `gold[i]` belong to sentence `i`.
pub fn strict_f1(pred: &[Vec<Gold>], gold: &[Vec<Gold>]) -> Scores {
    assert_eq!(pred.len(), gold.len(), "prediction and gold corpora differ in length");
    let mut c = Counts::default();
    for (p, g) in pred.iter().zip(gold) {
        c.add(sentence_counts(p, g));
    }
    c.scores()
}

/// Length groups used for the coarse breakdown.
pub const BUCKETS: [(&str, usize, usize); 3] = [("1<=L<5", 1, 5), ("5<=L<10", 5, 10), ("L>=10", 10, usize::MAX)];

pub fn bucket_of(len: usize) -> usize {
    BUCKETS.iter().position(|&(_, lo, hi)| len >= lo && len < hi).expect("length >= 1")
}

/// Per-length counts. A false positive is charged to its own span length.
pub fn length_counts(pred: &[Vec<Gold>], gold: &[Vec<Gold>]) -> BTreeMap<usize, Counts> {
    let mut out: BTreeMap<usize, Counts> = BTreeMap::new();
    for (p, g) in pred.iter().zip(gold) {
        let ps = as_set(p);
        let gs = as_set(g);
        for e in &ps {
            let c = out.entry(e.span.len()).or_default();
            if gs.contains(e) {
                c.tp += 1;
            } else {
                c.fp += 1;
            }
        }
        for e in gs.difference(&ps) {
            out.entry(e.span.len()).or_default().fn_ += 1;
        }
    }
    out
}

/// Absolute rounded offsets pooled over both boundaries, binned 0, 1, 2, 3, >=4.
pub type OffsetHistogram = [usize; 5];

pub fn offset_histogram<'a>(offsets: impl IntoIterator<Item = &'a crate::span::Offsets>) -> OffsetHistogram {
    let mut h = [0usize; 5];
    for o in offsets {
        for t in [o.left, o.right] {
            let m = round_offset(t).unsigned_abs() as usize;
            h[m.min(4)] += 1;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketScores {
    pub name: String,
    pub scores: Scores,
}

/// Everything `eval` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Scores,
    pub per_length: BTreeMap<usize, Scores>,
    pub buckets: Vec<BucketScores>,
    pub offset_histogram: OffsetHistogram,
    /// Filter-kept proposals per gold mention.
    pub proposal_ratio: f64,
    pub num_proposals: usize,
    pub num_gold: usize,
}

impl EvalReport {
    pub fn build(
        pred: &[Vec<Gold>],
        gold: &[Vec<Gold>],
        offset_histogram: OffsetHistogram,
        num_proposals: usize,
    ) -> Self {
        let overall = strict_f1(pred, gold);
        let by_len = length_counts(pred, gold);
        let mut buckets = [Counts::default(); 3];
        for (&len, c) in &by_len {
            buckets[bucket_of(len)].add(*c);
        }
        let num_gold = overall.support;
        EvalReport {
            overall,
            per_length: by_len.iter().map(|(&l, c)| (l, c.scores())).collect(),
            buckets: BUCKETS
                .iter()
                .zip(buckets)
                .map(|(&(name, _, _), c)| BucketScores { name: name.to_string(), scores: c.scores() })
                .collect(),
            offset_histogram,
            proposal_ratio: if num_gold == 0 { 0.0 } else { num_proposals as f64 / num_gold as f64 },
            num_proposals,
            num_gold,
        }
    }

    /// Aligned text tables: overall, per length, per bucket, offsets.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, name: &str, sc: &Scores| {
            let _ = writeln!(
                s,
                "{:>8}  {:>7.2}  {:>7.2}  {:>7.2}  {:>7}",
                name,
                100.0 * sc.precision,
                100.0 * sc.recall,
                100.0 * sc.f1,
                sc.support
            );
        };
        let header = |s: &mut String, first: &str| {
            let _ = writeln!(s, "{:>8}  {:>7}  {:>7}  {:>7}  {:>7}", first, "Pr.", "Rec.", "F1", "Support");
        };
        let _ = writeln!(s, "== overall ==");
        header(&mut s, "");
        row(&mut s, "All", &self.overall);
        let _ = writeln!(s, "\n== by length ==");
        header(&mut s, "Length");
        for (len, sc) in &self.per_length {
            row(&mut s, &len.to_string(), sc);
        }
        let _ = writeln!(s, "\n== by length bucket ==");
        header(&mut s, "Bucket");
        for b in &self.buckets {
            row(&mut s, &b.name, &b.scores);
        }
        let _ = writeln!(s, "\n== boundary offsets ==");
        let _ = writeln!(s, "{:>8}  {:>7}", "|offset|", "count");
        for (i, c) in self.offset_histogram.iter().enumerate() {
            let label = if i == 4 { ">=4".to_string() } else { i.to_string() };
            let _ = writeln!(s, "{label:>8}  {c:>7}");
        }
        let _ = writeln!(
            s,
            "\nproposals: {} for {} gold mentions (ratio {:.3})",
            self.num_proposals, self.num_gold, self.proposal_ratio
        );
        s
    }

    /// Histogram as `offset,count` CSV.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("offset,count\n");
        for (i, c) in self.offset_histogram.iter().enumerate() {
            let label = if i == 4 { ">=4".to_string() } else { i.to_string() };
            let _ = writeln!(s, "{label},{c}");
        }
        s
    }
}
