//! Versioned binary model files.
//!
//! Layout: magic `PLID`, `u16` format version, container byte (0 flat,
//! 1 hierarchical), scalar width byte (4 or 8), the payload, then a `u64`
//! FNV-1a checksum of everything before it. Integers and floats are little
//! endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{fnv1a64, FeatureId, FeatureIndex, NgramSpec};
use crate::hier::HierarchicalModel;
use crate::lang::Lang;
use crate::scalar::Scalar;

use super::subword::{HuffmanTree, SubwordLoss};
use super::{Classifier, ClassifierModel, Mlp, Mnb, ModelKind, Subword};

pub const MAGIC: &[u8; 4] = b"PLID";
pub const FORMAT_VERSION: u16 = 1;

const FLAT: u8 = 0;
const HIERARCHICAL: u8 = 1;

/// A flat classifier or a root-plus-experts hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub enum Model<T: Scalar> {
    Flat(ClassifierModel<T>),
    Hierarchical(HierarchicalModel<T>),
}

impl<T: Scalar> Classifier for Model<T> {
    fn labels(&self) -> &[Lang] {
        match self {
            Model::Flat(m) => m.labels(),
            Model::Hierarchical(h) => h.labels(),
        }
    }

    fn predict_proba(&self, text: &str) -> Vec<f64> {
        match self {
            Model::Flat(m) => m.predict_proba(text),
            Model::Hierarchical(h) => h.predict_proba(text),
        }
    }

    fn predict(&self, text: &str) -> super::Prediction {
        match self {
            Model::Flat(m) => m.predict(text),
            Model::Hierarchical(h) => h.predict(text),
        }
    }
}

impl<T: Scalar> Model<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u16(FORMAT_VERSION);
        match self {
            Model::Flat(m) => {
                w.u8(FLAT);
                w.u8(T::WIDTH);
                write_classifier(&mut w, m);
            }
            Model::Hierarchical(h) => {
                w.u8(HIERARCHICAL);
                w.u8(T::WIDTH);
                write_classifier(&mut w, h.root());
                w.u32(h.experts().len() as u32);
                for expert in h.experts() {
                    write_classifier(&mut w, expert);
                }
            }
        }
        let sum = fnv1a64(&w.buf);
        w.u64(sum);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (container, width, mut r) = open(bytes)?;
        if width != T::WIDTH {
            return Err(Error::ScalarMismatch {
                found: width,
                expected: T::WIDTH,
            });
        }
        let model = match container {
            FLAT => Model::Flat(read_classifier(&mut r)?),
            HIERARCHICAL => {
                let root = read_classifier(&mut r)?;
                let n = r.u32()? as usize;
                let experts = (0..n).map(|_| read_classifier(&mut r)).collect::<Result<Vec<_>>>()?;
                Model::Hierarchical(HierarchicalModel::from_parts(root, experts)?)
            }
            c => return Err(Error::ModelFormat(format!("unknown container type {c}"))),
        };
        if !r.is_done() {
            return Err(Error::ModelFormat("trailing bytes after model".into()));
        }
        Ok(model)
    }
}

/// A model of either precision, as found on disk.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    F32(Model<f32>),
    F64(Model<f64>),
}

impl AnyModel {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, width, _) = open(bytes)?;
        match width {
            4 => Ok(AnyModel::F32(Model::from_bytes(bytes)?)),
            8 => Ok(AnyModel::F64(Model::from_bytes(bytes)?)),
            w => Err(Error::ModelFormat(format!("unsupported scalar width {w}"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            AnyModel::F32(m) => m.to_bytes(),
            AnyModel::F64(m) => m.to_bytes(),
        }
    }

    pub fn is_hierarchical(&self) -> bool {
        matches!(self, AnyModel::F32(Model::Hierarchical(_)) | AnyModel::F64(Model::Hierarchical(_)))
    }
}

impl Classifier for AnyModel {
    fn labels(&self) -> &[Lang] {
        match self {
            AnyModel::F32(m) => m.labels(),
            AnyModel::F64(m) => m.labels(),
        }
    }

    fn predict_proba(&self, text: &str) -> Vec<f64> {
        match self {
            AnyModel::F32(m) => m.predict_proba(text),
            AnyModel::F64(m) => m.predict_proba(text),
        }
    }

    fn predict(&self, text: &str) -> super::Prediction {
        match self {
            AnyModel::F32(m) => m.predict(text),
            AnyModel::F64(m) => m.predict(text),
        }
    }
}

pub fn save_model<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    fs::write(path, model.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads a model of either precision.
pub fn load_model(path: &Path) -> Result<AnyModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    AnyModel::from_bytes(&bytes)
}

/// Checks magic, version and checksum; returns container, width and a
/// reader positioned at the payload.
fn open(bytes: &[u8]) -> Result<(u8, u8, Reader<'_>)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::ModelFormat("not a model file (bad magic)".into()));
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < 8 + 8 {
        return Err(Error::ModelFormat("truncated file".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if stored != fnv1a64(body) {
        return Err(Error::ModelFormat("checksum mismatch: file is corrupt or truncated".into()));
    }
    let container = r.u8()?;
    let width = r.u8()?;
    Ok((container, width, Reader { buf: body, pos: r.pos }))
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    fn floats<T: Scalar>(&mut self, v: &[T]) {
        self.u64(v.len() as u64);
        for &x in v {
            x.write_le(&mut self.buf);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::ModelFormat("truncated file".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn is_done(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::ModelFormat("invalid UTF-8 string".into()))
    }

    fn floats<T: Scalar>(&mut self, expected: usize) -> Result<Vec<T>> {
        let n = self.u64()? as usize;
        if n != expected {
            return Err(Error::ModelFormat(format!("expected {expected} parameters, found {n}")));
        }
        let bytes = self.take(n.checked_mul(T::WIDTH as usize).ok_or_else(|| Error::ModelFormat("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(T::WIDTH as usize).map(T::read_le).collect())
    }
}

fn write_classifier<T: Scalar>(w: &mut Writer, model: &ClassifierModel<T>) {
    w.u8(model.kind().tag());
    let labels = model.labels();
    w.u32(labels.len() as u32);
    for l in labels {
        w.str(l.as_str());
    }
    let spec = model.ngram_spec();
    w.u8(spec.n_min as u8);
    w.u8(spec.n_max as u8);
    w.u8(spec.use_word_boundaries as u8);
    w.u8(spec.hash_buckets.is_some() as u8);
    w.u32(spec.hash_buckets.unwrap_or(0));
    let index = match model {
        ClassifierModel::Mnb(m) => &m.index,
        ClassifierModel::Mlp(m) => &m.index,
        ClassifierModel::Subword(m) => &m.index,
    };
    w.u32(index.len() as u32);
    for id in index.ids() {
        match id {
            FeatureId::Gram(g) => {
                w.u8(0);
                w.str(g);
            }
            FeatureId::Bucket(b) => {
                w.u8(1);
                w.u32(*b);
            }
        }
    }
    match model {
        ClassifierModel::Mnb(m) => {
            w.floats(&m.log_prior);
            w.floats(&m.log_likelihood);
            w.floats(&m.log_total);
        }
        ClassifierModel::Mlp(m) => {
            w.u32(m.hidden as u32);
            w.floats(&m.w1);
            w.floats(&m.b1);
            w.floats(&m.w2);
            w.floats(&m.b2);
        }
        ClassifierModel::Subword(m) => {
            w.u32(m.dim as u32);
            w.u8(m.loss().tag());
            if let Some(tree) = &m.tree {
                for &(l, r) in tree.children() {
                    w.u32(l);
                    w.u32(r);
                }
            }
            w.floats(&m.embeddings);
            w.floats(&m.output);
            w.floats(&m.bias);
        }
    }
}

fn read_classifier<T: Scalar>(r: &mut Reader<'_>) -> Result<ClassifierModel<T>> {
    let kind = ModelKind::from_tag(r.u8()?)?;
    let n = r.u32()? as usize;
    let labels = (0..n)
        .map(|_| {
            let s = r.str()?;
            Lang::new(&s).map_err(|_| Error::ModelFormat(format!("bad label {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.is_empty() || labels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::ModelFormat("labels must be non-empty and sorted".into()));
    }
    let n_min = r.u8()? as usize;
    let n_max = r.u8()? as usize;
    let boundaries = r.u8()? != 0;
    let hashed = r.u8()? != 0;
    let buckets = r.u32()?;
    let spec = NgramSpec::new(n_min, n_max, boundaries, hashed.then_some(buckets))
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
    let nf = r.u32()? as usize;
    let ids = (0..nf)
        .map(|_| match r.u8()? {
            0 => Ok(FeatureId::Gram(r.str()?)),
            1 => Ok(FeatureId::Bucket(r.u32()?)),
            t => Err(Error::ModelFormat(format!("bad feature tag {t}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let index = FeatureIndex::from_ids(spec, ids)?;
    let (c, v) = (labels.len(), index.len());
    Ok(match kind {
        ModelKind::Mnb => ClassifierModel::Mnb(Mnb {
            log_prior: r.floats(c)?,
            log_likelihood: r.floats(c * v)?,
            log_total: r.floats(c)?,
            labels,
            index,
        }),
        ModelKind::Mlp => {
            let h = r.u32()? as usize;
            ClassifierModel::Mlp(Mlp {
                w1: r.floats(v * h)?,
                b1: r.floats(h)?,
                w2: r.floats(h * c)?,
                b2: r.floats(c)?,
                hidden: h,
                labels,
                index,
            })
        }
        ModelKind::Subword => {
            let dim = r.u32()? as usize;
            let tree = match SubwordLoss::from_tag(r.u8()?)? {
                SubwordLoss::Softmax => None,
                SubwordLoss::Hierarchical => {
                    let children = (0..c.saturating_sub(1))
                        .map(|_| Ok((r.u32()?, r.u32()?)))
                        .collect::<Result<Vec<_>>>()?;
                    Some(HuffmanTree::from_children(c, children)?)
                }
            };
            let (rows, biases) = match &tree {
                None => (c, c),
                Some(t) => (t.internal_nodes(), 0),
            };
            ClassifierModel::Subword(Subword {
                embeddings: r.floats(v * dim)?,
                output: r.floats(rows * dim)?,
                bias: r.floats(biases)?,
                tree,
                dim,
                labels,
                index,
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{MlpParams, SubwordParams, TrainParams};
    use crate::sentence::Sentence;

    fn data() -> Vec<Sentence> {
        let l = |s: &str| Lang::new(s).unwrap();
        vec![
            Sentence::clean("abc abd", l("aaa")),
            Sentence::clean("abd bcd", l("aaa")),
            Sentence::clean("xyz wxy", l("bbb")),
            Sentence::clean("zyx", l("bbb")),
            Sentence::clean("mno", l("ccc")),
        ]
    }

    fn params() -> Vec<TrainParams> {
        vec![
            TrainParams::default_for(ModelKind::Mnb, 1),
            TrainParams::Mlp(MlpParams {
                hidden: 4,
                max_iter: 5,
                ..MlpParams::new(1)
            }),
            TrainParams::Subword(SubwordParams {
                dim: 4,
                epochs: 3,
                ..SubwordParams::new(1)
            }),
            TrainParams::Subword(SubwordParams {
                dim: 4,
                epochs: 3,
                loss: SubwordLoss::Hierarchical,
                ..SubwordParams::new(1)
            }),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        for p in params() {
            let m = Model::Flat(ClassifierModel::<f32>::train(&data(), &p).unwrap());
            let bytes = m.to_bytes();
            let back = Model::<f32>::from_bytes(&bytes).unwrap();
            assert_eq!(back, m);
            for text in ["abc", "xyz", "", "mno q"] {
                let a = m.predict_proba(text);
                let b = back.predict_proba(text);
                assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            assert!(matches!(AnyModel::from_bytes(&bytes).unwrap(), AnyModel::F32(_)));
            assert!(matches!(Model::<f64>::from_bytes(&bytes), Err(Error::ScalarMismatch { .. })));
        }
    }

    #[test]
    fn corrupt_and_old_files_are_rejected() {
        let m = Model::Flat(ClassifierModel::<f64>::train(&data(), &params()[0]).unwrap());
        let bytes = m.to_bytes();
        for cut in [0, 3, 7, 20, bytes.len() - 1] {
            assert!(AnyModel::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x40;
        assert!(matches!(AnyModel::from_bytes(&flipped), Err(Error::ModelFormat(_))));
        let mut old = bytes.clone();
        old[4..6].copy_from_slice(&0u16.to_le_bytes());
        assert!(matches!(
            AnyModel::from_bytes(&old),
            Err(Error::UnsupportedVersion { found: 0, expected: 1 })
        ));
        assert!(AnyModel::from_bytes(b"not a model").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = Model::Flat(ClassifierModel::<f64>::train(&data(), &params()[2]).unwrap());
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), AnyModel::F64(m));
        assert!(load_model(&dir.path().join("missing")).is_err());
    }
}
