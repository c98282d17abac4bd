//! Token encoder: word and character embeddings feeding a context BiLSTM.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{BiLstm, BiLstmCache};
use super::tensor::Tensor;
use crate::corpus::Encoded;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub word_emb: Tensor,
    pub char_emb: Tensor,
    /// Character BiLSTM; its two final states form the character feature.
    pub char_rnn: BiLstm,
    pub context: BiLstm,
    /// Stand-in for the token before position 0.
    pub bos: Tensor,
    /// Stand-in for the token after position n - 1.
    pub eos: Tensor,
}

pub struct EncoderCache {
    words: Vec<usize>,
    chars: Vec<Vec<usize>>,
    char_caches: Vec<BiLstmCache>,
    context: BiLstmCache,
}

impl Encoder {
    /// `char_dim` and `hidden_dim` must be even: each BiLSTM direction gets half.
    pub fn new<R: Rng + ?Sized>(
        n_words: usize,
        n_chars: usize,
        word_dim: usize,
        char_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let emb = 0.1 * 3f64.sqrt();
        Encoder {
            word_emb: Tensor::uniform(&[n_words, word_dim], emb, rng),
            char_emb: Tensor::uniform(&[n_chars, char_dim], emb, rng),
            char_rnn: BiLstm::new(char_dim, char_dim / 2, rng),
            context: BiLstm::new(word_dim + char_dim, hidden_dim / 2, rng),
            bos: Tensor::uniform(&[hidden_dim], 0.1, rng),
            eos: Tensor::uniform(&[hidden_dim], 0.1, rng),
        }
    }

    pub fn word_dim(&self) -> usize {
        self.word_emb.shape()[1]
    }

    pub fn char_dim(&self) -> usize {
        self.char_emb.shape()[1]
    }

    /// Width `d` of each token representation.
    pub fn dim(&self) -> usize {
        2 * self.context.hidden()
    }

    fn check_ids(&self, s: &Encoded) -> Result<()> {
        let nw = self.word_emb.shape()[0];
        let nc = self.char_emb.shape()[0];
        if let Some(&id) = s.words.iter().find(|&&id| id >= nw) {
            return Err(Error::IdOutOfRange { table: "word", id, size: nw });
        }
        if let Some(&id) = s.chars.iter().flatten().find(|&&id| id >= nc) {
            return Err(Error::IdOutOfRange { table: "char", id, size: nc });
        }
        if s.chars.len() != s.words.len() {
            return Err(Error::Config("character and word sequences differ in length".into()));
        }
        Ok(())
    }

    /// One `d`-dimensional vector per token.
    pub fn forward(&self, s: &Encoded) -> Result<(Vec<Vec<f64>>, EncoderCache)> {
        self.check_ids(s)?;
        let mut char_caches = Vec::with_capacity(s.len());
        let mut inputs = Vec::with_capacity(s.len());
        for (&w, chars) in s.words.iter().zip(&s.chars) {
            let rows: Vec<&[f64]> = chars.iter().map(|&c| self.char_emb.row(c)).collect();
            let (feat, cache) = self.char_rnn.summarize(&rows);
            char_caches.push(cache);
            let mut x = self.word_emb.row(w).to_vec();
            x.extend(feat);
            inputs.push(x);
        }
        let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let (h, context) = self.context.forward(&refs);
        Ok((h, EncoderCache { words: s.words.clone(), chars: s.chars.clone(), char_caches, context }))
    }

    pub fn backward(&mut self, cache: &EncoderCache, dh: &[Vec<f64>], dbos: &[f64], deos: &[f64]) {
        for (g, d) in self.bos.grad_mut().iter_mut().zip(dbos) {
            *g += d;
        }
        for (g, d) in self.eos.grad_mut().iter_mut().zip(deos) {
            *g += d;
        }
        let dw = self.word_dim();
        let dinputs = self.context.backward(&cache.context, dh);
        for (t, dx) in dinputs.iter().enumerate() {
            for (g, d) in self.word_emb.grad_row_mut(cache.words[t]).iter_mut().zip(&dx[..dw]) {
                *g += d;
            }
            let dchars = self.char_rnn.backward_summary(&cache.char_caches[t], &dx[dw..]);
            for (&c, dc) in cache.chars[t].iter().zip(dchars) {
                for (g, d) in self.char_emb.grad_row_mut(c).iter_mut().zip(dc) {
                    *g += d;
                }
            }
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        f("encoder.word_emb".into(), &mut self.word_emb);
        f("encoder.char_emb".into(), &mut self.char_emb);
        let names = ["fwd.w_ih", "fwd.w_hh", "fwd.bias", "bwd.w_ih", "bwd.w_hh", "bwd.bias"];
        for (n, t) in names.iter().zip(self.char_rnn.params_mut()) {
            f(format!("encoder.char_rnn.{n}"), t);
        }
        for (n, t) in names.iter().zip(self.context.params_mut()) {
            f(format!("encoder.context.{n}"), t);
        }
        f("encoder.bos".into(), &mut self.bos);
        f("encoder.eos".into(), &mut self.eos);
    }
}
