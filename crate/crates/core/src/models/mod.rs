//! Character n-gram classifiers sharing one prediction contract.

mod io;
mod mlp;
mod mnb;
mod subword;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

pub use io::{load_model, save_model, AnyModel, Model, FORMAT_VERSION, MAGIC};
pub use mlp::{Mlp, MlpParams};
pub use mnb::Mnb;
pub use subword::{HuffmanTree, Subword, SubwordLoss, SubwordParams};

use crate::error::{Error, Result};
use crate::features::NgramSpec;
use crate::lang::Lang;
use crate::scalar::{argmax, Scalar};
use crate::sentence::Sentence;

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: Lang,
    pub probability: f64,
}

/// Anything that maps text to a distribution over an ordered label list.
pub trait Classifier {
    /// Sorted, duplicate-free.
    fn labels(&self) -> &[Lang];

    /// One probability per label, summing to 1.
    fn predict_proba(&self, text: &str) -> Vec<f64>;

    /// The most probable label; ties go to the lexicographically first.
    fn predict(&self, text: &str) -> Prediction {
        let p = self.predict_proba(text);
        let i = argmax(&p);
        Prediction {
            label: self.labels()[i].clone(),
            probability: p[i],
        }
    }
}

/// Exposes a model's loss and analytic gradient over a flat parameter
/// vector, for gradient checking.
pub trait Differentiable {
    fn parameter_count(&self) -> usize;
    fn parameters(&self) -> Vec<f64>;
    fn set_parameters(&mut self, params: &[f64]) -> Result<()>;
    /// Mean cross-entropy of `(text, label index)` pairs.
    fn batch_loss(&self, batch: &[(&str, usize)]) -> f64;
    /// Gradient of [`Differentiable::batch_loss`], aligned with
    /// [`Differentiable::parameters`].
    fn batch_gradient(&self, batch: &[(&str, usize)]) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Mnb,
    Mlp,
    Subword,
}

impl ModelKind {
    pub(crate) fn tag(self) -> u8 {
        match self {
            ModelKind::Mnb => 0,
            ModelKind::Mlp => 1,
            ModelKind::Subword => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(ModelKind::Mnb),
            1 => Ok(ModelKind::Mlp),
            2 => Ok(ModelKind::Subword),
            t => Err(Error::ModelFormat(format!("unknown classifier kind {t}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mnb => "mnb",
            ModelKind::Mlp => "mlp",
            ModelKind::Subword => "subword",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mnb" => Ok(ModelKind::Mnb),
            "mlp" => Ok(ModelKind::Mlp),
            "subword" | "subword_linear" | "fasttext" => Ok(ModelKind::Subword),
            other => Err(Error::Training(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Training settings for any flat classifier.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainParams {
    Mnb { spec: NgramSpec },
    Mlp(MlpParams),
    Subword(SubwordParams),
}

impl TrainParams {
    pub fn default_for(kind: ModelKind, seed: u64) -> Self {
        match kind {
            ModelKind::Mnb => TrainParams::Mnb {
                spec: NgramSpec::count_default(),
            },
            ModelKind::Mlp => TrainParams::Mlp(MlpParams::new(seed)),
            ModelKind::Subword => TrainParams::Subword(SubwordParams::new(seed)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TrainParams::Mnb { .. } => ModelKind::Mnb,
            TrainParams::Mlp(_) => ModelKind::Mlp,
            TrainParams::Subword(_) => ModelKind::Subword,
        }
    }
}

/// One trained flat classifier.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassifierModel<T: Scalar> {
    Mnb(Mnb<T>),
    Mlp(Mlp<T>),
    Subword(Subword<T>),
}

impl<T: Scalar> ClassifierModel<T> {
    pub fn train(data: &[Sentence], params: &TrainParams) -> Result<Self> {
        Ok(match params {
            TrainParams::Mnb { spec } => ClassifierModel::Mnb(Mnb::train(data, *spec)?),
            TrainParams::Mlp(p) => ClassifierModel::Mlp(Mlp::train(data, p)?),
            TrainParams::Subword(p) => ClassifierModel::Subword(Subword::train(data, p)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ClassifierModel::Mnb(_) => ModelKind::Mnb,
            ClassifierModel::Mlp(_) => ModelKind::Mlp,
            ClassifierModel::Subword(_) => ModelKind::Subword,
        }
    }

    pub fn ngram_spec(&self) -> &NgramSpec {
        match self {
            ClassifierModel::Mnb(m) => m.index().spec(),
            ClassifierModel::Mlp(m) => m.index().spec(),
            ClassifierModel::Subword(m) => m.index().spec(),
        }
    }
}

impl<T: Scalar> Classifier for ClassifierModel<T> {
    fn labels(&self) -> &[Lang] {
        match self {
            ClassifierModel::Mnb(m) => m.labels(),
            ClassifierModel::Mlp(m) => m.labels(),
            ClassifierModel::Subword(m) => m.labels(),
        }
    }

    fn predict_proba(&self, text: &str) -> Vec<f64> {
        match self {
            ClassifierModel::Mnb(m) => m.predict_proba(text),
            ClassifierModel::Mlp(m) => m.predict_proba(text),
            ClassifierModel::Subword(m) => m.predict_proba(text),
        }
    }
}

/// Sorted label list of `data` and each sentence's label index.
pub(crate) fn label_table(data: &[Sentence]) -> Result<(Vec<Lang>, Vec<usize>)> {
    if data.is_empty() {
        return Err(Error::Training("training set is empty".into()));
    }
    let labels: Vec<Lang> = data
        .iter()
        .map(|s| s.lang.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let targets = data
        .iter()
        .map(|s| labels.binary_search(&s.lang).expect("label collected above"))
        .collect();
    Ok((labels, targets))
}

/// [`label_table`], additionally requiring two or more labels.
pub(crate) fn multi_label_table(data: &[Sentence]) -> Result<(Vec<Lang>, Vec<usize>)> {
    let (labels, targets) = label_table(data)?;
    if labels.len() < 2 {
        return Err(Error::Training(format!(
            "need at least two labels, got {}",
            labels.iter().map(Lang::to_string).collect::<Vec<_>>().join(",")
        )));
    }
    Ok((labels, targets))
}

/// Relative error `|a - b| / (|a| + |b|)` over whole vectors, as used for
/// gradient checks.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

/// Central finite differences of `model`'s batch loss.
pub fn numeric_gradient<M: Differentiable + Clone>(model: &M, batch: &[(&str, usize)], eps: f64) -> Vec<f64> {
    let base = model.parameters();
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + eps;
        probe.set_parameters(&params).expect("same length");
        let plus = probe.batch_loss(batch);
        params[i] = base[i] - eps;
        probe.set_parameters(&params).expect("same length");
        let minus = probe.batch_loss(batch);
        params[i] = base[i];
        out.push((plus - minus) / (2.0 * eps));
    }
    out
}

/// Numerically stable `-ln softmax(logits)[target]`.
pub(crate) fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}
