//! A one-hidden-layer perceptron over character n-gram counts.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureIndex, NgramSpec};
use crate::lang::Lang;
use crate::rng;
use crate::scalar::{softmax, Scalar};
use crate::sentence::Sentence;

use super::{cross_entropy, multi_label_table, Classifier, Differentiable};

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub hidden: usize,
    /// Maximum number of epochs.
    pub max_iter: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Stop once the epoch loss has failed to improve by `tol` for
    /// `n_iter_no_change` consecutive epochs.
    pub tol: f64,
    pub n_iter_no_change: usize,
    pub spec: NgramSpec,
    pub seed: u64,
}

impl MlpParams {
    /// 500 hidden units, at most 500 epochs, batches of 1000, 2..4-gram counts.
    pub fn new(seed: u64) -> Self {
        MlpParams {
            hidden: 500,
            max_iter: 500,
            batch_size: 1000,
            learning_rate: 0.1,
            tol: 1e-4,
            n_iter_no_change: 10,
            spec: NgramSpec::count_default(),
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        if self.hidden == 0 || self.max_iter == 0 || self.batch_size == 0 {
            return Err(Error::Training("hidden, max_iter and batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Training(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// `softmax(W2ᵀ relu(W1ᵀ x + b1) + b2)` where `x` holds raw n-gram counts.
/// Trained by plain mini-batch gradient descent on the mean cross-entropy;
/// the first layer is updated only on the rows of features present in the
/// batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T: Scalar> {
    pub(crate) labels: Vec<Lang>,
    pub(crate) index: FeatureIndex,
    pub(crate) hidden: usize,
    /// `features × hidden`.
    pub(crate) w1: Vec<T>,
    pub(crate) b1: Vec<T>,
    /// `hidden × labels`.
    pub(crate) w2: Vec<T>,
    pub(crate) b2: Vec<T>,
}

/// Gradient accumulator; first-layer rows are kept sparse.
struct Grad {
    rows: HashMap<u32, usize>,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Grad {
    fn new(hidden: usize, labels: usize) -> Self {
        Grad {
            rows: HashMap::new(),
            w1: Vec::new(),
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * labels],
            b2: vec![0.0; labels],
        }
    }

    fn row(&mut self, f: u32, hidden: usize) -> &mut [f64] {
        let next = self.rows.len();
        let slot = *self.rows.entry(f).or_insert(next);
        if slot == next {
            self.w1.resize((next + 1) * hidden, 0.0);
        }
        &mut self.w1[slot * hidden..(slot + 1) * hidden]
    }
}

impl<T: Scalar> Mlp<T> {
    pub fn train(data: &[Sentence], params: &MlpParams) -> Result<Self> {
        params.check()?;
        let (labels, targets) = multi_label_table(data)?;
        let index = FeatureIndex::build(params.spec, data.iter().map(|s| s.text.as_str()));
        let encoded: Vec<Vec<(u32, u32)>> = data.iter().map(|s| index.counts(&s.text)).collect();
        let (v, h, c) = (index.len(), params.hidden, labels.len());

        let mut init = rng::derived(params.seed, "mlp/init", 0);
        let mut glorot = |fan_in: usize, fan_out: usize, n: usize| -> Vec<T> {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| T::of(init.gen_range(-bound..bound))).collect()
        };
        let mut model = Mlp {
            w1: glorot(v, h, v * h),
            b1: glorot(v, h, h),
            w2: glorot(h, c, h * c),
            b2: glorot(h, c, c),
            labels,
            index,
            hidden: h,
        };

        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut best = f64::INFINITY;
        let mut stale = 0;
        for epoch in 0..params.max_iter {
            order.shuffle(&mut rng::derived(params.seed, "mlp/epoch", epoch as u64));
            let mut epoch_loss = 0.0;
            for batch in order.chunks(params.batch_size) {
                let mut grad = Grad::new(h, c);
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    epoch_loss += model.accumulate(&encoded[i], targets[i], scale, &mut grad);
                }
                model.step(&grad, params.learning_rate);
            }
            epoch_loss /= data.len() as f64;
            if !epoch_loss.is_finite() {
                return Err(Error::Training("loss diverged; lower the learning rate".into()));
            }
            if epoch_loss > best - params.tol {
                stale += 1;
                if stale >= params.n_iter_no_change {
                    break;
                }
            } else {
                stale = 0;
            }
            best = best.min(epoch_loss);
        }
        Ok(model)
    }

    pub fn labels(&self) -> &[Lang] {
        &self.labels
    }

    pub fn index(&self) -> &FeatureIndex {
        &self.index
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    /// Pre-activations and logits.
    fn forward(&self, x: &[(u32, u32)]) -> (Vec<f64>, Vec<f64>) {
        let h = self.hidden;
        let mut pre: Vec<f64> = self.b1.iter().map(|b| b.as_f64()).collect();
        for &(f, n) in x {
            let row = &self.w1[f as usize * h..(f as usize + 1) * h];
            for (a, w) in pre.iter_mut().zip(row) {
                *a += n as f64 * w.as_f64();
            }
        }
        let c = self.labels.len();
        let mut logits: Vec<f64> = self.b2.iter().map(|b| b.as_f64()).collect();
        for (j, &a) in pre.iter().enumerate() {
            if a > 0.0 {
                let row = &self.w2[j * c..(j + 1) * c];
                for (l, w) in logits.iter_mut().zip(row) {
                    *l += a * w.as_f64();
                }
            }
        }
        (pre, logits)
    }

    /// Adds `scale ×` the gradient of one sample's loss; returns the loss.
    fn accumulate(&self, x: &[(u32, u32)], target: usize, scale: f64, grad: &mut Grad) -> f64 {
        let (h, c) = (self.hidden, self.labels.len());
        let (pre, logits) = self.forward(x);
        let loss = cross_entropy(&logits, target);
        let mut delta = softmax(&logits);
        delta[target] -= 1.0;
        delta.iter_mut().for_each(|d| *d *= scale);
        for (g, d) in grad.b2.iter_mut().zip(&delta) {
            *g += d;
        }
        let mut back = vec![0.0; h];
        for (j, &a) in pre.iter().enumerate() {
            if a <= 0.0 {
                continue;
            }
            let row = &self.w2[j * c..(j + 1) * c];
            let grow = &mut grad.w2[j * c..(j + 1) * c];
            for k in 0..c {
                grow[k] += a * delta[k];
                back[j] += row[k].as_f64() * delta[k];
            }
        }
        for (g, b) in grad.b1.iter_mut().zip(&back) {
            *g += b;
        }
        for &(f, n) in x {
            let row = grad.row(f, h);
            for (g, b) in row.iter_mut().zip(&back) {
                *g += n as f64 * b;
            }
        }
        loss
    }

    fn step(&mut self, grad: &Grad, lr: f64) {
        let h = self.hidden;
        for (&f, &slot) in &grad.rows {
            let row = &mut self.w1[f as usize * h..(f as usize + 1) * h];
            for (w, g) in row.iter_mut().zip(&grad.w1[slot * h..(slot + 1) * h]) {
                *w -= T::of(lr * g);
            }
        }
        for (p, g) in [(&mut self.b1, &grad.b1), (&mut self.w2, &grad.w2), (&mut self.b2, &grad.b2)] {
            for (w, g) in p.iter_mut().zip(g) {
                *w -= T::of(lr * g);
            }
        }
    }

    pub fn predict_proba(&self, text: &str) -> Vec<f64> {
        softmax(&self.forward(&self.index.counts(text)).1)
    }

    /// Hidden-layer inputs before the ReLU.
    pub fn pre_activations(&self, text: &str) -> Vec<f64> {
        self.forward(&self.index.counts(text)).0
    }
}

impl<T: Scalar> Classifier for Mlp<T> {
    fn labels(&self) -> &[Lang] {
        &self.labels
    }

    fn predict_proba(&self, text: &str) -> Vec<f64> {
        Mlp::predict_proba(self, text)
    }
}

impl<T: Scalar> Differentiable for Mlp<T> {
    fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn parameters(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .map(|p| p.as_f64())
            .collect()
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Training(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        let (w1, rest) = params.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, b2) = rest.split_at(self.w2.len());
        for (dst, src) in [(&mut self.w1, w1), (&mut self.b1, b1), (&mut self.w2, w2), (&mut self.b2, b2)] {
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d = T::of(s));
        }
        Ok(())
    }

    fn batch_loss(&self, batch: &[(&str, usize)]) -> f64 {
        batch
            .iter()
            .map(|(text, t)| cross_entropy(&self.forward(&self.index.counts(text)).1, *t))
            .sum::<f64>()
            / batch.len() as f64
    }

    fn batch_gradient(&self, batch: &[(&str, usize)]) -> Vec<f64> {
        let (h, c) = (self.hidden, self.labels.len());
        let mut grad = Grad::new(h, c);
        let scale = 1.0 / batch.len() as f64;
        for (text, t) in batch {
            self.accumulate(&self.index.counts(text), *t, scale, &mut grad);
        }
        let mut dense = vec![0.0; self.w1.len()];
        for (&f, &slot) in &grad.rows {
            dense[f as usize * h..(f as usize + 1) * h].copy_from_slice(&grad.w1[slot * h..(slot + 1) * h]);
        }
        dense.extend(grad.b1);
        dense.extend(grad.w2);
        dense.extend(grad.b2);
        dense
    }
}
