//! Self-describing JSON checkpoints and the inference entry points built on them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::HyperParams;
use crate::corpus::{Entity, Sentence, Vocab};
use crate::decoder::DecodeOptions;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::nn::SpanModel;
use crate::train::decode_corpus;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Hyperparameters, vocabulary and every parameter tensor with its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub hyperparams: HyperParams,
    pub vocab: Vocab,
    pub model: SpanModel,
}

/// A decoded sentence: its tokens, predicted entities and their scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sentence: Sentence,
    pub scores: Vec<f64>,
}

impl Checkpoint {
    pub fn new(hyperparams: HyperParams, vocab: Vocab, model: SpanModel) -> Self {
        Checkpoint { version: CHECKPOINT_VERSION, hyperparams, vocab, model }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let h: Header = serde_json::from_str(s).map_err(|e| Error::Checkpoint(format!("unreadable: {e}")))?;
        if h.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                h.version
            )));
        }
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    fn check(&self) -> Result<()> {
        let d = &self.model.dims;
        let v = &self.vocab;
        if (d.n_words, d.n_chars, d.n_labels) != (v.num_tokens(), v.num_chars(), v.num_labels()) {
            return Err(Error::Checkpoint("model dimensions disagree with the vocabulary".into()));
        }
        let mut bad = None;
        self.model.clone().visit_mut(&mut |name, t| {
            if bad.is_none() && (t.values().len() != t.shape().iter().product::<usize>() || !t.all_finite()) {
                bad = Some(name);
            }
        });
        match bad {
            Some(name) => Err(Error::Checkpoint(format!("parameter {name} is malformed"))),
            None => Ok(()),
        }
    }

    pub fn decode_options(&self) -> DecodeOptions {
        DecodeOptions::from_hp(&self.hyperparams)
    }

    /// Decodes every sentence and scores it against its gold entities.
    /// Labels absent from the vocabulary are an error naming them.
    pub fn evaluate(&self, corpus: &[Sentence]) -> Result<EvalReport> {
        self.evaluate_with(corpus, &self.decode_options())
    }

    pub fn evaluate_with(&self, corpus: &[Sentence], opts: &DecodeOptions) -> Result<EvalReport> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let unknown = self.vocab.unknown_labels(corpus);
        if !unknown.is_empty() {
            return Err(Error::UnknownLabels(unknown));
        }
        let data = corpus.iter().map(|s| self.vocab.encode(s)).collect::<Result<Vec<_>>>()?;
        Ok(decode_corpus(&self.model, opts, &data)?.1)
    }

    /// Decodes every sentence, ignoring any entities it carries.
    pub fn predict(&self, corpus: &[Sentence]) -> Result<Vec<Prediction>> {
        let data: Vec<_> = corpus.iter().map(|s| self.vocab.encode_tokens(&s.tokens)).collect();
        let (preds, _) = decode_corpus(&self.model, &self.decode_options(), &data)?;
        Ok(corpus
            .iter()
            .zip(preds)
            .map(|(s, es)| Prediction {
                sentence: Sentence {
                    tokens: s.tokens.clone(),
                    entities: es
                        .iter()
                        .map(|e| Entity { span: e.span, label: self.vocab.label_name(e.label).to_string() })
                        .collect(),
                },
                scores: es.iter().map(|e| e.score).collect(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SynthConfig};
    use crate::train::Trainer;

    fn trained() -> (Checkpoint, Vec<Sentence>) {
        let cfg = SynthConfig { sentences: 10, min_len: 6, max_len: 8, entity_lengths: vec![(1, 1.0), (3, 1.0)], ..Default::default() };
        let corpus = generate_synthetic(&cfg, 3).unwrap();
        let hp = HyperParams {
            windows: "1-3".parse().unwrap(),
            epochs: 1,
            word_dim: 4,
            char_dim: 4,
            hidden_dim: 6,
            ..HyperParams::default()
        };
        let mut t = Trainer::new(hp, &corpus, &[]).unwrap();
        t.fit(&mut |_| {}).unwrap();
        (Checkpoint::new(t.hp.clone(), t.vocab.clone(), t.best_model().clone()), corpus)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (ck, corpus) = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_json(), ck.to_json());
        assert_eq!(back.evaluate(&corpus).unwrap(), ck.evaluate(&corpus).unwrap());
    }

    #[test]
    fn rejects_other_versions() {
        let (ck, _) = trained();
        let json = ck.to_json().replacen("\"version\":1", "\"version\":99", 1);
        assert!(matches!(Checkpoint::from_json(&json), Err(Error::Checkpoint(m)) if m.contains("99")));
        assert!(Checkpoint::from_json("{").is_err());
    }

    #[test]
    fn evaluate_names_unknown_labels() {
        let (ck, _) = trained();
        let s = Sentence { tokens: vec!["x".into()], entities: vec![Entity::new(0, 0, "ZZ").unwrap()] };
        match ck.evaluate(&[s]) {
            Err(Error::UnknownLabels(l)) => assert_eq!(l, vec!["ZZ".to_string()]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(ck.evaluate(&[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn predict_is_deterministic_and_keeps_every_line() {
        let (ck, corpus) = trained();
        let bare: Vec<Sentence> = corpus.iter().map(|s| Sentence { tokens: s.tokens.clone(), entities: vec![] }).collect();
        let a = ck.predict(&bare).unwrap();
        assert_eq!(a, ck.predict(&bare).unwrap());
        assert_eq!(a.len(), bare.len());
        for p in &a {
            assert_eq!(p.scores.len(), p.sentence.entities.len());
        }
    }
}
