//! Deterministic synthetic nested-entity corpora.
//!
//! Every mention of category `X` opens with a trigger token `TX<j>` and
//! closes with a closer token `EX<j>`; single-token mentions use a unit
//! token `UX<j>`. Interior and context positions hold words `w<j>`. A nested
//! mention sits strictly inside its parent, so the parent's trigger and
//! closer stay visible, and always has a different category.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_list, KvFile};
use crate::corpus::{Entity, Sentence};
use crate::error::{Error, Result};
use crate::span::Span;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub categories: usize,
    /// Probability that a mention (below the depth limit) contains a nested one.
    pub nest_prob: f64,
    /// Maximum nesting depth; 1 means flat.
    pub nest_depth: usize,
    /// `(length, weight)` pairs for mention lengths.
    pub entity_lengths: Vec<(usize, f64)>,
    /// Top-level mentions per sentence are drawn from `1..=max_entities`.
    pub max_entities: usize,
    pub context_vocab: usize,
    /// Trigger, closer and unit words per category.
    pub trigger_vocab: usize,
    /// Train/dev/test proportions.
    pub split: [f64; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 250,
            min_len: 10,
            max_len: 24,
            categories: 3,
            nest_prob: 0.4,
            nest_depth: 2,
            entity_lengths: vec![(1, 3.0), (2, 3.0), (3, 2.0), (4, 2.0), (5, 2.0), (6, 2.0), (7, 1.0), (8, 1.0)],
            max_entities: 3,
            context_vocab: 60,
            trigger_vocab: 4,
            split: [8.0, 1.0, 1.0],
        }
    }
}

impl SynthConfig {
    pub const KEYS: &'static [&'static str] = &[
        "sentences",
        "min_len",
        "max_len",
        "categories",
        "nest_prob",
        "nest_depth",
        "entity_lengths",
        "max_entities",
        "context_vocab",
        "trigger_vocab",
        "split",
    ];

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut c = SynthConfig::default();
        fn set<T: std::str::FromStr>(kv: &KvFile, key: &str, slot: &mut T) -> Result<()>
        where
            T::Err: std::fmt::Display,
        {
            if let Some(v) = kv.get(key)? {
                *slot = v;
            }
            Ok(())
        }
        set(kv, "sentences", &mut c.sentences)?;
        set(kv, "min_len", &mut c.min_len)?;
        set(kv, "max_len", &mut c.max_len)?;
        set(kv, "categories", &mut c.categories)?;
        set(kv, "nest_prob", &mut c.nest_prob)?;
        set(kv, "nest_depth", &mut c.nest_depth)?;
        set(kv, "max_entities", &mut c.max_entities)?;
        set(kv, "context_vocab", &mut c.context_vocab)?;
        set(kv, "trigger_vocab", &mut c.trigger_vocab)?;
        if let Some(v) = kv.raw("entity_lengths") {
            c.entity_lengths = parse_lengths(v)?;
        }
        if let Some(v) = kv.raw("split") {
            let parts: Vec<f64> = v
                .split(':')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("split: {e}")))?;
            if parts.len() != 3 {
                return Err(Error::Config("split: expected train:dev:test".into()));
            }
            c.split = [parts[0], parts[1], parts[2]];
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Infeasible(m));
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!("sentence length range {}..={} is empty", self.min_len, self.max_len));
        }
        if self.categories == 0 || self.categories > 26 {
            return bad("categories must lie in 1..=26".into());
        }
        if !(0.0..=1.0).contains(&self.nest_prob) {
            return bad("nest_prob must lie in [0, 1]".into());
        }
        if self.nest_depth == 0 {
            return bad("nest_depth must be >= 1".into());
        }
        if self.entity_lengths.is_empty() {
            return bad("entity_lengths is empty".into());
        }
        for &(l, w) in &self.entity_lengths {
            if l == 0 || !(w > 0.0 && w.is_finite()) {
                return bad(format!("entity length {l} with weight {w} is invalid"));
            }
            if l > self.min_len {
                return bad(format!("entity length {l} exceeds the minimum sentence length {}", self.min_len));
            }
        }
        if self.max_entities == 0 || self.context_vocab == 0 || self.trigger_vocab == 0 {
            return bad("max_entities, context_vocab and trigger_vocab must be >= 1".into());
        }
        if self.nest_prob > 0.0 && self.nest_depth > 1 {
            if self.categories < 2 {
                return bad("nesting needs at least two categories".into());
            }
            let shortest = self.entity_lengths.iter().map(|&(l, _)| l).min().unwrap();
            if !self.entity_lengths.iter().any(|&(l, _)| l >= shortest + 2) {
                return bad("no entity length leaves room for a nested mention".into());
            }
        }
        if self.split.iter().any(|&p| !(p >= 0.0 && p.is_finite())) || self.split.iter().sum::<f64>() <= 0.0 {
            return bad("split proportions must be nonnegative with a positive sum".into());
        }
        Ok(())
    }

    pub fn label_name(c: usize) -> String {
        ((b'A' + c as u8) as char).to_string()
    }
}

fn parse_lengths(s: &str) -> Result<Vec<(usize, f64)>> {
    let items: Vec<String> = parse_list(s).map_err(|e| Error::Config(format!("entity_lengths: {e}")))?;
    items
        .iter()
        .map(|it| {
            let (l, w) = it.split_once(':').unwrap_or((it.as_str(), "1"));
            let l = l.trim().parse::<usize>().map_err(|e| Error::Config(format!("entity_lengths: {e}")))?;
            let w = w.trim().parse::<f64>().map_err(|e| Error::Config(format!("entity_lengths: {e}")))?;
            Ok((l, w))
        })
        .collect()
}

struct Mention {
    len: usize,
    category: usize,
    /// Nested mention and its offset from the parent's start.
    child: Option<(Box<Mention>, usize)>,
}

impl Mention {
    fn write(&self, start: usize, tokens: &mut [String], out: &mut Vec<Entity>, rng: &mut ChaCha8Rng, cfg: &SynthConfig) {
        let tag = SynthConfig::label_name(self.category);
        let end = start + self.len - 1;
        if self.len == 1 {
            tokens[start] = format!("U{tag}{}", rng.gen_range(0..cfg.trigger_vocab));
        } else {
            tokens[start] = format!("T{tag}{}", rng.gen_range(0..cfg.trigger_vocab));
            tokens[end] = format!("E{tag}{}", rng.gen_range(0..cfg.trigger_vocab));
        }
        out.push(Entity { span: Span { start, end }, label: tag });
        if let Some((child, off)) = &self.child {
            child.write(start + off, tokens, out, rng, cfg);
        }
    }
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn sample_len(&mut self, lo: usize, hi: usize) -> Option<usize> {
        let allowed: Vec<&(usize, f64)> =
            self.cfg.entity_lengths.iter().filter(|&&(l, _)| l >= lo && l <= hi).collect();
        if allowed.is_empty() {
            return None;
        }
        let dist = WeightedIndex::new(allowed.iter().map(|&&(_, w)| w)).ok()?;
        Some(allowed[dist.sample(&mut self.rng)].0)
    }

    fn category(&mut self, parent: Option<usize>) -> usize {
        match parent {
            Some(p) if self.cfg.categories > 1 => {
                let c = self.rng.gen_range(0..self.cfg.categories - 1);
                if c >= p {
                    c + 1
                } else {
                    c
                }
            }
            _ => self.rng.gen_range(0..self.cfg.categories),
        }
    }

    fn mention(&mut self, depth: usize, parent: Option<usize>, max_len: usize) -> Option<Mention> {
        let category = self.category(parent);
        let shortest = self.cfg.entity_lengths.iter().map(|&(l, _)| l).min()?;
        let want_nest = depth < self.cfg.nest_depth && self.rng.gen_bool(self.cfg.nest_prob);
        let nested_len = if want_nest { self.sample_len(shortest + 2, max_len) } else { None };
        let len = match nested_len {
            Some(l) => l,
            None => self.sample_len(1, max_len)?,
        };
        let child = if nested_len.is_some() {
            let c = self.mention(depth + 1, Some(category), len - 2)?;
            let off = self.rng.gen_range(1..=len - 1 - c.len);
            Some((Box::new(c), off))
        } else {
            None
        };
        Some(Mention { len, category, child })
    }

    fn sentence(&mut self) -> Sentence {
        let cfg = self.cfg;
        let n = self.rng.gen_range(cfg.min_len..=cfg.max_len);
        let mut m = self.rng.gen_range(1..=cfg.max_entities);
        let mentions = loop {
            let ms: Vec<Mention> = (0..m).filter_map(|_| self.mention(1, None, n)).collect();
            let used: usize = ms.iter().map(|x| x.len).sum::<usize>() + ms.len().saturating_sub(1);
            if used <= n {
                break ms;
            }
            m = (m - 1).max(1);
        };
        // distribute the free tokens over the gaps; interior gaps need at least one
        let k = mentions.len();
        let free = n - mentions.iter().map(|x| x.len).sum::<usize>() - k.saturating_sub(1);
        let mut gaps: Vec<usize> = (0..=k).map(|i| usize::from(i > 0 && i < k)).collect();
        for _ in 0..free {
            let g = self.rng.gen_range(0..=k);
            gaps[g] += 1;
        }
        let mut tokens: Vec<String> =
            (0..n).map(|_| format!("w{}", self.rng.gen_range(0..cfg.context_vocab))).collect();
        let mut entities = Vec::new();
        let mut pos = gaps[0];
        for (i, men) in mentions.iter().enumerate() {
            men.write(pos, &mut tokens, &mut entities, &mut self.rng, cfg);
            pos += men.len + gaps[i + 1];
        }
        entities.sort();
        Sentence { tokens, entities }
    }
}

/// Generates `cfg.sentences` sentences; a pure function of `(cfg, seed)`.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<Vec<Sentence>> {
    cfg.validate()?;
    let mut g = Generator { cfg, rng: ChaCha8Rng::seed_from_u64(seed) };
    Ok((0..cfg.sentences).map(|_| g.sentence()).collect())
}

/// Splits a corpus into contiguous train/dev/test parts by the given proportions.
pub fn split_corpus(corpus: &[Sentence], split: [f64; 3]) -> [Vec<Sentence>; 3] {
    let total: f64 = split.iter().sum();
    let n = corpus.len();
    let n_train = ((split[0] / total) * n as f64).round() as usize;
    let n_dev = (((split[0] + split[1]) / total) * n as f64).round() as usize - n_train;
    let n_train = n_train.min(n);
    let n_dev = n_dev.min(n - n_train);
    [
        corpus[..n_train].to_vec(),
        corpus[n_train..n_train + n_dev].to_vec(),
        corpus[n_train + n_dev..].to_vec(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_jsonl_to;

    fn jsonl(c: &[Sentence]) -> Vec<u8> {
        let mut v = Vec::new();
        write_jsonl_to(&mut v, c).unwrap();
        v
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig { sentences: 10, ..Default::default() };
        let a = jsonl(&generate_synthetic(&cfg, 7).unwrap());
        let b = jsonl(&generate_synthetic(&cfg, 7).unwrap());
        assert_eq!(a, b);
        let c = jsonl(&generate_synthetic(&cfg, 8).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn flat_when_nesting_disabled() {
        let cfg = SynthConfig { sentences: 200, nest_prob: 0.0, ..Default::default() };
        for s in generate_synthetic(&cfg, 1).unwrap() {
            for (i, a) in s.entities.iter().enumerate() {
                for b in &s.entities[i + 1..] {
                    assert!(!a.span.overlaps(&b.span), "{:?} {:?}", a, b);
                }
            }
        }
    }

    #[test]
    fn always_nested_at_depth_two() {
        let cfg = SynthConfig { sentences: 200, nest_prob: 1.0, nest_depth: 2, ..Default::default() };
        for s in generate_synthetic(&cfg, 2).unwrap() {
            let top: Vec<&Entity> = s
                .entities
                .iter()
                .filter(|e| !s.entities.iter().any(|o| o != *e && o.span.contains(&e.span)))
                .collect();
            assert!(!top.is_empty());
            for t in top {
                let inner = s.entities.iter().filter(|o| *o != t && t.span.contains(&o.span)).count();
                assert!(inner >= 1, "{t:?} in {s:?}");
            }
        }
    }

    #[test]
    fn mentions_carry_surface_cues() {
        let cfg = SynthConfig { sentences: 100, ..Default::default() };
        for s in generate_synthetic(&cfg, 3).unwrap() {
            assert!(s.validate().is_ok());
            assert!(s.len() >= cfg.min_len && s.len() <= cfg.max_len);
            for e in &s.entities {
                let first = &s.tokens[e.span.start];
                let last = &s.tokens[e.span.end];
                if e.span.len() == 1 {
                    assert!(first.starts_with(&format!("U{}", e.label)));
                } else {
                    assert!(first.starts_with(&format!("T{}", e.label)), "{first}");
                    assert!(last.starts_with(&format!("E{}", e.label)), "{last}");
                }
            }
        }
    }

    #[test]
    fn infeasible_configs() {
        let too_long = SynthConfig { min_len: 5, max_len: 6, ..Default::default() };
        assert!(matches!(generate_synthetic(&too_long, 0), Err(Error::Infeasible(_))));
        let empty_range = SynthConfig { min_len: 9, max_len: 8, ..Default::default() };
        assert!(generate_synthetic(&empty_range, 0).is_err());
        let no_room = SynthConfig { entity_lengths: vec![(1, 1.0), (2, 1.0)], nest_prob: 0.5, ..Default::default() };
        assert!(generate_synthetic(&no_room, 0).is_err());
    }

    #[test]
    fn split_proportions() {
        let cfg = SynthConfig { sentences: 250, ..Default::default() };
        let c = generate_synthetic(&cfg, 4).unwrap();
        let [tr, dv, te] = split_corpus(&c, cfg.split);
        assert_eq!((tr.len(), dv.len(), te.len()), (200, 25, 25));
        assert_eq!([tr, dv, te].concat(), c);
    }

    #[test]
    fn parses_config() {
        let kv = KvFile::parse("sentences = 12\nentity_lengths = 1:2, 3, 6:0.5\nsplit = 2:1:1\n").unwrap();
        let c = SynthConfig::from_kv(&kv).unwrap();
        assert_eq!(c.sentences, 12);
        assert_eq!(c.entity_lengths, vec![(1, 2.0), (3, 1.0), (6, 0.5)]);
        assert_eq!(c.split, [2.0, 1.0, 1.0]);
    }
}
