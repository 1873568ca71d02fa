//! Multinomial naive Bayes without additive smoothing.

use crate::error::{Error, Result};
use crate::features::{FeatureIndex, NgramSpec};
use crate::lang::Lang;
use crate::scalar::Scalar;
use crate::sentence::Sentence;

use super::{label_table, Classifier};

/// Class priors are the empirical label frequencies and feature
/// likelihoods the raw count ratios, so a class can assign probability zero
/// to a feature.
///
/// Zero likelihoods are resolved as the limit of additive smoothing with a
/// vanishing pseudo-count `ε`, under which an unseen-in-class feature has
/// likelihood `ε / N_c` (`N_c` the class's total feature count). Only the
/// classes with the fewest such occurrences in the input keep non-zero
/// posterior mass; among them the `ε` factors cancel and each zero
/// occurrence contributes `1 / N_c`. Features never seen in training carry
/// no evidence and are skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct Mnb<T: Scalar> {
    pub(crate) labels: Vec<Lang>,
    pub(crate) index: FeatureIndex,
    pub(crate) log_prior: Vec<T>,
    /// Class-major `labels × features`; `-inf` marks a zero count.
    pub(crate) log_likelihood: Vec<T>,
    /// `ln N_c` per class.
    pub(crate) log_total: Vec<T>,
}

impl<T: Scalar> Mnb<T> {
    pub fn train(data: &[Sentence], spec: NgramSpec) -> Result<Self> {
        let (labels, targets) = label_table(data)?;
        let index = FeatureIndex::build(spec, data.iter().map(|s| s.text.as_str()));
        let v = index.len();
        let c = labels.len();
        let mut counts = vec![0u64; c * v];
        let mut docs = vec![0u64; c];
        for (s, &t) in data.iter().zip(&targets) {
            docs[t] += 1;
            for (f, n) in index.counts(&s.text) {
                counts[t * v + f as usize] += n as u64;
            }
        }
        let mut log_likelihood = Vec::with_capacity(c * v);
        let mut log_total = Vec::with_capacity(c);
        for (k, label) in labels.iter().enumerate() {
            let row = &counts[k * v..(k + 1) * v];
            let total: u64 = row.iter().sum();
            if total == 0 {
                return Err(Error::Training(format!("class {label} has no n-gram features")));
            }
            log_total.push(T::of((total as f64).ln()));
            log_likelihood.extend(row.iter().map(|&n| {
                if n == 0 {
                    T::neg_infinity()
                } else {
                    T::of((n as f64 / total as f64).ln())
                }
            }));
        }
        let n = data.len() as f64;
        let log_prior = docs.iter().map(|&d| T::of((d as f64 / n).ln())).collect();
        Ok(Mnb {
            labels,
            index,
            log_prior,
            log_likelihood,
            log_total,
        })
    }

    pub fn labels(&self) -> &[Lang] {
        &self.labels
    }

    pub fn index(&self) -> &FeatureIndex {
        &self.index
    }

    pub fn log_prior(&self) -> &[T] {
        &self.log_prior
    }

    /// Per-class `(zero-probability occurrences, log score without the ε
    /// factors)`.
    pub fn scores(&self, text: &str) -> Vec<(u64, f64)> {
        let v = self.index.len();
        let counts = self.index.counts(text);
        (0..self.labels.len())
            .map(|k| {
                let mut zeros = 0u64;
                let mut score = self.log_prior[k].as_f64();
                let log_total = self.log_total[k].as_f64();
                for &(f, n) in &counts {
                    let ll = self.log_likelihood[k * v + f as usize];
                    if ll.is_finite() {
                        score += ll.as_f64() * n as f64;
                    } else {
                        zeros += n as u64;
                        score -= log_total * n as f64;
                    }
                }
                (zeros, score)
            })
            .collect()
    }

    pub fn predict_proba(&self, text: &str) -> Vec<f64> {
        let scores = self.scores(text);
        let fewest = scores.iter().map(|s| s.0).min().unwrap_or(0);
        let max = scores
            .iter()
            .filter(|s| s.0 == fewest)
            .map(|s| s.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores
            .iter()
            .map(|&(z, s)| if z == fewest { (s - max).exp() } else { 0.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }
}

impl<T: Scalar> Classifier for Mnb<T> {
    fn labels(&self) -> &[Lang] {
        &self.labels
    }

    fn predict_proba(&self, text: &str) -> Vec<f64> {
        Mnb::predict_proba(self, text)
    }
}
