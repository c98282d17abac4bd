//! Span-annotated corpora on disk and in memory, plus vocabularies.
//!
//! The on-disk format is JSONL, one sentence per line:
//!
//! ```text
//! {"tokens": ["a", "b"], "entities": [{"start": 0, "end": 1, "label": "PER"}]}
//! ```
//!
//! `end` is inclusive. Entities may nest or overlap; an exact duplicate
//! (same span and label) is rejected.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::span::Span;

/// Label id reserved for "not an entity".
pub const NONE_LABEL: usize = 0;
pub const NONE_NAME: &str = "None";

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK_ID: usize = 0;

/// A gold (or predicted) mention with a category name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Entity {
    pub span: Span,
    pub label: String,
}

impl Entity {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Result<Self> {
        Ok(Entity { span: Span::new(start, end)?, label: label.into() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub entities: Vec<Entity>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks span bounds and duplicate entities.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.tokens.len();
        let mut seen = BTreeSet::new();
        for e in &self.entities {
            if !e.span.fits(n) {
                return Err(format!(
                    "span out of range: ({}, {}) in a sentence of {} tokens",
                    e.span.start, e.span.end, n
                ));
            }
            if e.label.is_empty() {
                return Err("empty entity label".into());
            }
            if !seen.insert((e.span, e.label.as_str())) {
                return Err(format!("duplicate entity ({}, {}) {}", e.span.start, e.span.end, e.label));
            }
        }
        Ok(())
    }
}

/// A mention in label-id space. `label` is never [`NONE_LABEL`] for gold data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Gold {
    pub span: Span,
    pub label: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityRecord {
    start: usize,
    end: usize,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SentenceRecord {
    tokens: Vec<String>,
    #[serde(default)]
    entities: Vec<EntityRecord>,
}

/// Parses one JSONL line. `line_no` is 1-based and only used in errors.
pub fn parse_line(text: &str, line_no: usize) -> Result<Sentence> {
    let rec: SentenceRecord =
        serde_json::from_str(text).map_err(|e| Error::parse(line_no, e.to_string()))?;
    let mut entities = Vec::with_capacity(rec.entities.len());
    for e in rec.entities {
        if e.start > e.end {
            return Err(Error::parse(line_no, format!("span out of range: start {} > end {}", e.start, e.end)));
        }
        entities.push(Entity { span: Span { start: e.start, end: e.end }, label: e.label });
    }
    let s = Sentence { tokens: rec.tokens, entities };
    s.validate().map_err(|r| Error::parse(line_no, r))?;
    Ok(s)
}

/// Reads a JSONL corpus. Blank lines are skipped.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl_from(BufReader::new(f)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_jsonl_from(reader: impl BufRead) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, i + 1)?);
    }
    Ok(out)
}

fn record(s: &Sentence, scores: Option<&[f64]>) -> SentenceRecord {
    SentenceRecord {
        tokens: s.tokens.clone(),
        entities: s
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| EntityRecord {
                start: e.span.start,
                end: e.span.end,
                label: e.label.clone(),
                score: scores.map(|s| s[i]),
            })
            .collect(),
    }
}

/// Serializes one sentence as a single JSON line (no trailing newline).
pub fn to_line(s: &Sentence) -> String {
    serde_json::to_string(&record(s, None)).expect("sentence serializes")
}

/// Like [`to_line`], attaching one score per entity.
pub fn to_line_scored(s: &Sentence, scores: &[f64]) -> String {
    assert_eq!(scores.len(), s.entities.len());
    serde_json::to_string(&record(s, Some(scores))).expect("sentence serializes")
}

pub fn write_jsonl_to(mut w: impl Write, corpus: &[Sentence]) -> std::io::Result<()> {
    for s in corpus {
        writeln!(w, "{}", to_line(s))?;
    }
    Ok(())
}

pub fn write_jsonl(path: impl AsRef<Path>, corpus: &[Sentence]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_jsonl_to(&mut w, corpus).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Token, character and label inventories with dense 0-based ids.
///
/// Token ids 0..3 are reserved for `<unk>`, `<s>` and `</s>`; character id 0
/// is unknown; label id 0 is `None` and real labels follow in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabData", into = "VocabData")]
pub struct Vocab {
    tokens: Vec<String>,
    chars: Vec<char>,
    labels: Vec<String>,
    token_ids: HashMap<String, usize>,
    char_ids: HashMap<char, usize>,
    label_ids: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabData {
    tokens: Vec<String>,
    chars: Vec<char>,
    labels: Vec<String>,
}

impl From<VocabData> for Vocab {
    fn from(d: VocabData) -> Self {
        Vocab::from_parts(d.tokens, d.chars, d.labels)
    }
}

impl From<Vocab> for VocabData {
    fn from(v: Vocab) -> Self {
        VocabData { tokens: v.tokens, chars: v.chars, labels: v.labels }
    }
}

impl Vocab {
    fn from_parts(tokens: Vec<String>, chars: Vec<char>, labels: Vec<String>) -> Self {
        let token_ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let char_ids = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let label_ids = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Vocab { tokens, chars, labels, token_ids, char_ids, label_ids }
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }

    /// Number of classes including `None` (C + 1).
    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.token_ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_ids.get(&c).copied().unwrap_or(UNK_ID)
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.label_ids.get(label).copied()
    }

    pub fn label_name(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Labels used in `corpus` that this vocabulary does not know, sorted.
    pub fn unknown_labels(&self, corpus: &[Sentence]) -> Vec<String> {
        let missing: BTreeSet<&str> = corpus
            .iter()
            .flat_map(|s| s.entities.iter())
            .map(|e| e.label.as_str())
            .filter(|l| !self.label_ids.contains_key(*l) || *l == NONE_NAME)
            .collect();
        missing.into_iter().map(String::from).collect()
    }

    pub fn encode(&self, s: &Sentence) -> Result<Encoded> {
        let unknown = self.unknown_labels(std::slice::from_ref(s));
        if !unknown.is_empty() {
            return Err(Error::UnknownLabels(unknown));
        }
        Ok(Encoded {
            words: s.tokens.iter().map(|t| self.token_id(t)).collect(),
            chars: s.tokens.iter().map(|t| t.chars().map(|c| self.char_id(c)).collect()).collect(),
            gold: s
                .entities
                .iter()
                .map(|e| Gold { span: e.span, label: self.label_ids[&e.label] })
                .collect(),
        })
    }

    /// Encodes the tokens only; entities are ignored.
    pub fn encode_tokens(&self, tokens: &[String]) -> Encoded {
        Encoded {
            words: tokens.iter().map(|t| self.token_id(t)).collect(),
            chars: tokens.iter().map(|t| t.chars().map(|c| self.char_id(c)).collect()).collect(),
            gold: Vec::new(),
        }
    }
}

/// A sentence mapped into vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub words: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
    pub gold: Vec<Gold>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Builds a vocabulary. Tokens seen fewer than `min_count` times map to `<unk>`.
pub fn build_vocab(corpus: &[Sentence], min_count: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut chars = BTreeSet::new();
    let mut labels = BTreeSet::new();
    for s in corpus {
        for t in &s.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
            chars.extend(t.chars());
        }
        for e in &s.entities {
            labels.insert(e.label.as_str());
        }
    }
    if labels.contains(NONE_NAME) {
        return Err(Error::Config(format!("label name {NONE_NAME:?} is reserved")));
    }

    let mut tokens: Vec<String> = vec![UNK.into(), BOS.into(), EOS.into()];
    tokens.extend(
        counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count.max(1) && t != UNK && t != BOS && t != EOS)
            .map(|(t, _)| t.to_string()),
    );
    let mut char_list = vec!['\u{fffd}'];
    char_list.extend(chars.into_iter().filter(|&c| c != '\u{fffd}'));
    let mut label_list = vec![NONE_NAME.to_string()];
    label_list.extend(labels.into_iter().map(String::from));
    Ok(Vocab::from_parts(tokens, char_list, label_list))
}
