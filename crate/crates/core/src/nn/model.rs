//! The full network: encoder plus the three span heads, and the joint
//! training pass that evaluates the weighted objective and backpropagates it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoder::Encoder;
use super::heads::{dropout_mask, span_repr_inner, span_repr_outer, SpanFeature};
use super::linear::{Mlp, MlpCache};
use super::ops::{sigmoid, softmax};
use super::tensor::Tensor;
use crate::corpus::Encoded;
use crate::error::Result;
use crate::objective::{cross_entropy_term, focal_term, regression_term, LossParts, LossWeights, RegressionExample};
use crate::span::{adjust, Offsets, Span};
use crate::targets::{assign_stage2, SpanTarget};

/// Model dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_words: usize,
    pub n_chars: usize,
    /// Number of classes including None.
    pub n_labels: usize,
    pub word_dim: usize,
    pub char_dim: usize,
    pub hidden_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanModel {
    pub dims: Dims,
    pub encoder: Encoder,
    pub filter: Mlp,
    pub regressor: Mlp,
    pub classifier: Mlp,
}

/// Settings for one training pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassConfig {
    pub alpha2: f64,
    pub eta: f64,
    pub gamma: f64,
    pub lambdas: LossWeights,
    /// Dropout rate before each head; only used when an rng is supplied.
    pub dropout: f64,
}

/// Encoder output for one sentence, ready for head queries.
pub struct Encoding {
    pub h: Vec<Vec<f64>>,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

impl SpanModel {
    pub fn new<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Self {
        let d = dims.hidden_dim;
        let encoder = Encoder::new(dims.n_words, dims.n_chars, dims.word_dim, dims.char_dim, d, rng);
        SpanModel {
            dims,
            encoder,
            filter: Mlp::new(3 * d, d, 1, rng),
            regressor: Mlp::new(3 * d, d, 2, rng),
            classifier: Mlp::new(3 * d, d, dims.n_labels, rng),
        }
    }

    /// Visits every parameter tensor in a fixed order with a stable name.
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.encoder.visit_mut(f);
        let names = ["hidden.weight", "hidden.bias", "output.weight", "output.bias"];
        for (head, mlp) in [
            ("filter", &mut self.filter),
            ("regressor", &mut self.regressor),
            ("classifier", &mut self.classifier),
        ] {
            for (n, t) in names.iter().zip(mlp.params_mut()) {
                f(format!("{head}.{n}"), t);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, t| t.zero_grad());
    }

    pub fn num_params(&mut self) -> usize {
        let mut n = 0;
        self.visit_mut(&mut |_, t| n += t.len());
        n
    }

    pub fn encode(&self, s: &Encoded) -> Result<Encoding> {
        Ok(Encoding { h: self.encoder.forward(s)?.0 })
    }

    pub fn filter_prob(&self, enc: &Encoding, span: Span) -> f64 {
        let f = span_repr_inner(&enc.h, span);
        sigmoid(self.filter.forward(f.x).out[0])
    }

    pub fn offsets(&self, enc: &Encoding, span: Span) -> Offsets {
        let f = span_repr_outer(&enc.h, span, self.encoder.bos.values(), self.encoder.eos.values());
        let out = self.regressor.forward(f.x).out;
        Offsets::new(out[0], out[1])
    }

    pub fn class_probs(&self, enc: &Encoding, span: Span) -> Vec<f64> {
        let f = span_repr_inner(&enc.h, span);
        softmax(&self.classifier.forward(f.x).out)
    }

    /// Evaluates the three losses for one sentence's targets and, when
    /// `backward` is set, accumulates `lambda`-weighted gradients into every
    /// parameter. Classification runs on each target span after rounding its
    /// predicted offsets, with labels reassigned against the paired gold.
    pub fn train_pass<R: Rng + ?Sized>(
        &mut self,
        s: &Encoded,
        targets: &[SpanTarget],
        cfg: &PassConfig,
        mut rng: Option<&mut R>,
        backward: bool,
    ) -> Result<LossParts> {
        let (h, enc_cache) = self.encoder.forward(s)?;
        let n = h.len();
        let d = self.dims.hidden_dim;
        let mut dh = vec![vec![0.0; d]; n];
        let mut dbos = vec![0.0; d];
        let mut deos = vec![0.0; d];
        let mut parts = LossParts::default();
        let lam = cfg.lambdas;

        let apply_dropout = |x: Vec<f64>, rng: &mut Option<&mut R>| -> (Vec<f64>, Option<Vec<f64>>) {
            match rng {
                Some(r) if cfg.dropout > 0.0 => {
                    let m = dropout_mask(x.len(), cfg.dropout, *r);
                    (x.iter().zip(&m).map(|(a, b)| a * b).collect(), Some(m))
                }
                _ => (x, None),
            }
        };
        let bos = self.encoder.bos.values().to_vec();
        let eos = self.encoder.eos.values().to_vec();

        for t in targets {
            // filter
            let feat = span_repr_inner(&h, t.span);
            let (x, mask) = apply_dropout(feat.x.clone(), &mut rng);
            let fc = self.filter.forward(x);
            let p = sigmoid(fc.out[0]);
            let (lf, dlogit) = focal_term(p, t.positive, t.weight, cfg.gamma);
            parts.filter += lf;
            if backward && lam.filter != 0.0 {
                self.backprop(HeadKind::Filter, &fc, &[lam.filter * dlogit], &feat, mask.as_deref(), &mut dh, &mut dbos, &mut deos);
            }

            // regressor
            let feat = span_repr_outer(&h, t.span, &bos, &eos);
            let (x, mask) = apply_dropout(feat.x.clone(), &mut rng);
            let rc = self.regressor.forward(x);
            let pred = Offsets::new(rc.out[0], rc.out[1]);
            if let (true, Some(target), Some(gold)) = (t.positive, t.offsets, t.paired) {
                let ex = RegressionExample { seed: t.span, gold: gold.span, pred, target };
                let (lr, g) = regression_term(&ex);
                parts.regressor += lr;
                if backward && lam.regressor != 0.0 {
                    let dout = [lam.regressor * g.left, lam.regressor * g.right];
                    self.backprop(HeadKind::Regressor, &rc, &dout, &feat, mask.as_deref(), &mut dh, &mut dbos, &mut deos);
                }
            }

            // classifier on the adjusted span
            let adjusted = adjust(t.span, pred, n);
            let (label, weight) = assign_stage2(adjusted, t.paired, cfg.alpha2, cfg.eta);
            let feat = span_repr_inner(&h, adjusted);
            let (x, mask) = apply_dropout(feat.x.clone(), &mut rng);
            let cc = self.classifier.forward(x);
            let probs = softmax(&cc.out);
            let mut dlogits = vec![0.0; probs.len()];
            parts.classifier += cross_entropy_term(&probs, label, weight, &mut dlogits);
            if backward && lam.classifier != 0.0 {
                dlogits.iter_mut().for_each(|g| *g *= lam.classifier);
                self.backprop(HeadKind::Classifier, &cc, &dlogits, &feat, mask.as_deref(), &mut dh, &mut dbos, &mut deos);
            }
        }

        if backward {
            self.encoder.backward(&enc_cache, &dh, &dbos, &deos);
        }
        Ok(parts)
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop(
        &mut self,
        kind: HeadKind,
        cache: &MlpCache,
        dout: &[f64],
        feat: &SpanFeature,
        mask: Option<&[f64]>,
        dh: &mut [Vec<f64>],
        dbos: &mut [f64],
        deos: &mut [f64],
    ) {
        let mlp = match kind {
            HeadKind::Filter => &mut self.filter,
            HeadKind::Regressor => &mut self.regressor,
            HeadKind::Classifier => &mut self.classifier,
        };
        let mut dx = mlp.backward(cache, dout);
        if let Some(m) = mask {
            dx.iter_mut().zip(m).for_each(|(g, k)| *g *= k);
        }
        feat.scatter(&dx, dh, dbos, deos);
    }
}

#[derive(Debug, Clone, Copy)]
enum HeadKind {
    Filter,
    Regressor,
    Classifier,
}
