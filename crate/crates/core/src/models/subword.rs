//! A fastText-style linear classifier over hashed character n-grams.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureIndex, NgramSpec};
use crate::lang::Lang;
use crate::rng;
use crate::scalar::{softmax, Scalar};
use crate::sentence::Sentence;

use super::{cross_entropy, multi_label_table, Classifier, Differentiable};

/// Output layer and loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SubwordLoss {
    /// One output row and bias per label, full softmax.
    #[default]
    Softmax,
    /// Binary logistic decisions along a Huffman tree over label
    /// frequencies; one output row per internal node, no bias.
    Hierarchical,
}

impl SubwordLoss {
    pub(crate) fn tag(self) -> u8 {
        match self {
            SubwordLoss::Softmax => 0,
            SubwordLoss::Hierarchical => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(SubwordLoss::Softmax),
            1 => Ok(SubwordLoss::Hierarchical),
            t => Err(Error::ModelFormat(format!("unknown subword loss tag {t}"))),
        }
    }
}

impl fmt::Display for SubwordLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubwordLoss::Softmax => "softmax",
            SubwordLoss::Hierarchical => "hs",
        })
    }
}

impl FromStr for SubwordLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(SubwordLoss::Softmax),
            "hs" | "hierarchical" => Ok(SubwordLoss::Hierarchical),
            other => Err(Error::Training(format!("unknown loss {other:?} (softmax|hs)"))),
        }
    }
}

/// A binary tree with the labels as leaves `0..n` and internal nodes
/// `n..2n-1`, the last being the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HuffmanTree {
    /// `(left, right)` for every internal node, in creation order.
    children: Vec<(u32, u32)>,
    /// Per leaf, `(internal node index, goes right)` from the root down.
    paths: Vec<Vec<(usize, bool)>>,
}

impl HuffmanTree {
    /// Merges the two lightest nodes until one remains; ties go to the
    /// lower node id, so the tree is a pure function of the counts.
    pub fn build(counts: &[u64]) -> Self {
        let n = counts.len();
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
            counts.iter().enumerate().map(|(i, &c)| Reverse((c, i))).collect();
        let mut children = Vec::with_capacity(n.saturating_sub(1));
        while heap.len() > 1 {
            let Reverse((a, left)) = heap.pop().unwrap();
            let Reverse((b, right)) = heap.pop().unwrap();
            children.push((left as u32, right as u32));
            heap.push(Reverse((a + b, n + children.len() - 1)));
        }
        Self::from_children(n, children).expect("a freshly built tree is well formed")
    }

    pub(crate) fn from_children(leaves: usize, children: Vec<(u32, u32)>) -> Result<Self> {
        let bad = || Error::ModelFormat("malformed label tree".into());
        if leaves < 2 || children.len() != leaves - 1 {
            return Err(bad());
        }
        let mut parent: Vec<Option<(usize, bool)>> = vec![None; 2 * leaves - 1];
        for (i, &(l, r)) in children.iter().enumerate() {
            for (child, right) in [(l as usize, false), (r as usize, true)] {
                // children are created before their parent
                if child >= leaves + i || parent[child].is_some() {
                    return Err(bad());
                }
                parent[child] = Some((i, right));
            }
        }
        let paths = (0..leaves)
            .map(|leaf| {
                let mut path = Vec::new();
                let mut node = leaf;
                while let Some((p, right)) = parent[node] {
                    path.push((p, right));
                    node = leaves + p;
                }
                path.reverse();
                path
            })
            .collect();
        Ok(HuffmanTree { children, paths })
    }

    pub fn children(&self) -> &[(u32, u32)] {
        &self.children
    }

    pub fn path(&self, leaf: usize) -> &[(usize, bool)] {
        &self.paths[leaf]
    }

    pub fn internal_nodes(&self) -> usize {
        self.children.len()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `-ln σ(z)` computed without overflow.
fn neg_log_sigmoid(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubwordParams {
    pub dim: usize,
    /// Initial learning rate, decayed linearly to zero over training.
    pub learning_rate: f64,
    pub epochs: usize,
    pub spec: NgramSpec,
    pub loss: SubwordLoss,
    pub seed: u64,
}

impl SubwordParams {
    /// Dimension 64, learning rate 1.0, 25 epochs, 2..6-grams, full softmax.
    pub fn new(seed: u64) -> Self {
        SubwordParams {
            dim: 64,
            learning_rate: 1.0,
            epochs: 25,
            spec: NgramSpec::subword_default(),
            loss: SubwordLoss::Softmax,
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        if self.dim == 0 || self.epochs == 0 {
            return Err(Error::Training("dim and epochs must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Training(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// The sentence vector is the mean of its n-gram embeddings; a linear layer
/// with bias and a softmax (or a tree of logistic decisions) maps it to
/// label probabilities. Only n-grams seen in training get an embedding row;
/// others are ignored at prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct Subword<T: Scalar> {
    pub(crate) labels: Vec<Lang>,
    pub(crate) index: FeatureIndex,
    pub(crate) dim: usize,
    /// `features × dim`.
    pub(crate) embeddings: Vec<T>,
    /// `labels × dim`, or `internal nodes × dim` with a label tree.
    pub(crate) output: Vec<T>,
    /// Per label; empty with a label tree.
    pub(crate) bias: Vec<T>,
    pub(crate) tree: Option<HuffmanTree>,
}

/// Quantities of one forward/backward pass.
struct Pass {
    hidden: Vec<f64>,
    /// `(output row, dL/dscore)`.
    delta: Vec<(usize, f64)>,
    /// dL/dhidden.
    hidden_grad: Vec<f64>,
    loss: f64,
}

impl<T: Scalar> Subword<T> {
    pub fn train(data: &[Sentence], params: &SubwordParams) -> Result<Self> {
        params.check()?;
        let (labels, targets) = multi_label_table(data)?;
        let index = FeatureIndex::build(params.spec, data.iter().map(|s| s.text.as_str()));
        let encoded: Vec<Vec<u32>> = data.iter().map(|s| index.encode(&s.text)).collect();
        let dim = params.dim;
        let mut init = rng::derived(params.seed, "subword/init", 0);
        let bound = 1.0 / dim as f64;
        let embeddings = (0..index.len() * dim)
            .map(|_| T::of(init.gen_range(-bound..=bound)))
            .collect();
        let tree = match params.loss {
            SubwordLoss::Softmax => None,
            SubwordLoss::Hierarchical => {
                let mut counts = vec![0u64; labels.len()];
                targets.iter().for_each(|&t| counts[t] += 1);
                Some(HuffmanTree::build(&counts))
            }
        };
        let (rows, biases) = match &tree {
            None => (labels.len(), labels.len()),
            Some(t) => (t.internal_nodes(), 0),
        };
        let mut model = Subword {
            output: vec![T::zero(); rows * dim],
            bias: vec![T::zero(); biases],
            tree,
            labels,
            index,
            dim,
            embeddings,
        };

        let total = (params.epochs * data.len()) as f64;
        let mut step = 0usize;
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng::derived(params.seed, "subword/epoch", epoch as u64));
            for &i in &order {
                let lr = params.learning_rate * (1.0 - step as f64 / total);
                step += 1;
                let pass = model.pass(&encoded[i], targets[i]);
                model.apply(&encoded[i], &pass, lr);
            }
        }
        Ok(model)
    }

    pub fn labels(&self) -> &[Lang] {
        &self.labels
    }

    pub fn index(&self) -> &FeatureIndex {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn loss(&self) -> SubwordLoss {
        match self.tree {
            None => SubwordLoss::Softmax,
            Some(_) => SubwordLoss::Hierarchical,
        }
    }

    pub fn tree(&self) -> Option<&HuffmanTree> {
        self.tree.as_ref()
    }

    fn hidden(&self, feats: &[u32]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        if feats.is_empty() {
            return h;
        }
        for &f in feats {
            let row = &self.embeddings[f as usize * self.dim..(f as usize + 1) * self.dim];
            for (a, &e) in h.iter_mut().zip(row) {
                *a += e.as_f64();
            }
        }
        let inv = 1.0 / feats.len() as f64;
        h.iter_mut().for_each(|a| *a *= inv);
        h
    }

    /// `output[row] · hidden`, plus the bias under softmax.
    fn score(&self, row: usize, hidden: &[f64]) -> f64 {
        let w = &self.output[row * self.dim..(row + 1) * self.dim];
        let dot: f64 = w.iter().zip(hidden).map(|(w, h)| w.as_f64() * h).sum();
        dot + self.bias.get(row).map_or(0.0, |b| b.as_f64())
    }

    fn logits(&self, hidden: &[f64]) -> Vec<f64> {
        (0..self.labels.len()).map(|c| self.score(c, hidden)).collect()
    }

    fn pass(&self, feats: &[u32], target: usize) -> Pass {
        let hidden = self.hidden(feats);
        let (delta, loss) = match &self.tree {
            None => {
                let logits = self.logits(&hidden);
                let loss = cross_entropy(&logits, target);
                let mut p = softmax(&logits);
                p[target] -= 1.0;
                (p.into_iter().enumerate().collect::<Vec<_>>(), loss)
            }
            Some(tree) => {
                let mut loss = 0.0;
                let delta = tree
                    .path(target)
                    .iter()
                    .map(|&(node, right)| {
                        let z = self.score(node, &hidden);
                        loss += neg_log_sigmoid(if right { z } else { -z });
                        (node, sigmoid(z) - if right { 1.0 } else { 0.0 })
                    })
                    .collect();
                (delta, loss)
            }
        };
        let mut hidden_grad = vec![0.0; self.dim];
        for &(row, d) in &delta {
            let w = &self.output[row * self.dim..(row + 1) * self.dim];
            for (g, w) in hidden_grad.iter_mut().zip(w) {
                *g += d * w.as_f64();
            }
        }
        Pass {
            hidden,
            delta,
            hidden_grad,
            loss,
        }
    }

    fn apply(&mut self, feats: &[u32], pass: &Pass, lr: f64) {
        let dim = self.dim;
        for &(row, d) in &pass.delta {
            if let Some(b) = self.bias.get_mut(row) {
                *b -= T::of(lr * d);
            }
            let w = &mut self.output[row * dim..(row + 1) * dim];
            for (w, h) in w.iter_mut().zip(&pass.hidden) {
                *w -= T::of(lr * d * h);
            }
        }
        if feats.is_empty() {
            return;
        }
        let scale = lr / feats.len() as f64;
        for &f in feats {
            let row = &mut self.embeddings[f as usize * dim..(f as usize + 1) * dim];
            for (e, g) in row.iter_mut().zip(&pass.hidden_grad) {
                *e -= T::of(scale * g);
            }
        }
    }

    pub fn predict_proba(&self, text: &str) -> Vec<f64> {
        let hidden = self.hidden(&self.index.encode(text));
        match &self.tree {
            None => softmax(&self.logits(&hidden)),
            Some(tree) => {
                let right: Vec<f64> = (0..tree.internal_nodes()).map(|n| sigmoid(self.score(n, &hidden))).collect();
                (0..self.labels.len())
                    .map(|leaf| {
                        tree.path(leaf)
                            .iter()
                            .map(|&(n, r)| if r { right[n] } else { 1.0 - right[n] })
                            .product()
                    })
                    .collect()
            }
        }
    }
}

impl<T: Scalar> Classifier for Subword<T> {
    fn labels(&self) -> &[Lang] {
        &self.labels
    }

    fn predict_proba(&self, text: &str) -> Vec<f64> {
        Subword::predict_proba(self, text)
    }
}

impl<T: Scalar> Differentiable for Subword<T> {
    fn parameter_count(&self) -> usize {
        self.embeddings.len() + self.output.len() + self.bias.len()
    }

    fn parameters(&self) -> Vec<f64> {
        self.embeddings
            .iter()
            .chain(&self.output)
            .chain(&self.bias)
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
        let (e, rest) = params.split_at(self.embeddings.len());
        let (w, b) = rest.split_at(self.output.len());
        for (dst, src) in [(&mut self.embeddings, e), (&mut self.output, w), (&mut self.bias, b)] {
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d = T::of(s));
        }
        Ok(())
    }

    fn batch_loss(&self, batch: &[(&str, usize)]) -> f64 {
        batch
            .iter()
            .map(|(text, t)| self.pass(&self.index.encode(text), *t).loss)
            .sum::<f64>()
            / batch.len() as f64
    }

    fn batch_gradient(&self, batch: &[(&str, usize)]) -> Vec<f64> {
        let dim = self.dim;
        let ne = self.embeddings.len();
        let nw = self.output.len();
        let mut grad = vec![0.0; self.parameter_count()];
        let scale = 1.0 / batch.len() as f64;
        for (text, t) in batch {
            let feats = self.index.encode(text);
            let pass = self.pass(&feats, *t);
            for &(row, d) in &pass.delta {
                if row < self.bias.len() {
                    grad[ne + nw + row] += scale * d;
                }
                for (j, h) in pass.hidden.iter().enumerate() {
                    grad[ne + row * dim + j] += scale * d * h;
                }
            }
            if !feats.is_empty() {
                let s = scale / feats.len() as f64;
                for &f in &feats {
                    for (j, g) in pass.hidden_grad.iter().enumerate() {
                        grad[f as usize * dim + j] += s * g;
                    }
                }
            }
        }
        grad
    }
}
