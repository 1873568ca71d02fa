//! Character n-gram features.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// 64-bit FNV-1a over bytes. Used for n-gram bucketing and file checksums,
/// so its output must never change.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NgramSpec {
    pub n_min: usize,
    pub n_max: usize,
    /// Wrap each word in `<` and `>` before extracting n-grams.
    pub use_word_boundaries: bool,
    /// Bucket n-grams by `fnv1a64(utf8) % buckets` instead of keeping strings.
    pub hash_buckets: Option<u32>,
}

impl NgramSpec {
    pub const MAX_N: usize = 8;

    pub fn new(n_min: usize, n_max: usize, use_word_boundaries: bool, hash_buckets: Option<u32>) -> Result<Self> {
        if n_min < 1 || n_min > n_max || n_max > Self::MAX_N {
            return Err(Error::NgramSpec(format!(
                "need 1 <= n_min <= n_max <= {}, got {n_min}..{n_max}",
                Self::MAX_N
            )));
        }
        if hash_buckets == Some(0) {
            return Err(Error::NgramSpec("hash_buckets must be positive".into()));
        }
        Ok(NgramSpec {
            n_min,
            n_max,
            use_word_boundaries,
            hash_buckets,
        })
    }

    /// 2..=6 grams with boundary markers, 2M hash buckets.
    pub fn subword_default() -> Self {
        NgramSpec {
            n_min: 2,
            n_max: 6,
            use_word_boundaries: true,
            hash_buckets: Some(2_000_000),
        }
    }

    /// 2..=4 grams as raw strings, no boundary markers.
    pub fn count_default() -> Self {
        NgramSpec {
            n_min: 2,
            n_max: 4,
            use_word_boundaries: false,
            hash_buckets: None,
        }
    }

    /// Calls `f` on every n-gram of every whitespace-delimited word.
    pub fn for_each_ngram(&self, text: &str, mut f: impl FnMut(&str)) {
        let mut buf = String::new();
        let mut offsets: Vec<usize> = Vec::new();
        for word in text.split_whitespace() {
            buf.clear();
            if self.use_word_boundaries {
                buf.push('<');
            }
            buf.push_str(word);
            if self.use_word_boundaries {
                buf.push('>');
            }
            offsets.clear();
            offsets.extend(buf.char_indices().map(|(i, _)| i));
            offsets.push(buf.len());
            let len = offsets.len() - 1;
            for n in self.n_min..=self.n_max.min(len) {
                for start in 0..=(len - n) {
                    f(&buf[offsets[start]..offsets[start + n]]);
                }
            }
        }
    }

    pub fn ngrams(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each_ngram(text, |g| out.push(g.to_string()));
        out
    }

    pub fn bucket(&self, gram: &str) -> Option<u32> {
        self.hash_buckets
            .map(|b| (fnv1a64(gram.as_bytes()) % b as u64) as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureId {
    Gram(String),
    Bucket(u32),
}

/// The multiset of feature ids of `text`, in emission order.
pub fn extract_char_ngrams(text: &str, spec: &NgramSpec) -> Vec<FeatureId> {
    let mut out = Vec::new();
    spec.for_each_ngram(text, |g| {
        out.push(match spec.bucket(g) {
            Some(b) => FeatureId::Bucket(b),
            None => FeatureId::Gram(g.to_string()),
        })
    });
    out
}

/// Dense indices for the features seen at training time.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureIndex {
    spec: NgramSpec,
    ids: Vec<FeatureId>,
    lookup: HashMap<FeatureId, u32>,
}

impl FeatureIndex {
    pub fn empty(spec: NgramSpec) -> Self {
        FeatureIndex {
            spec,
            ids: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    /// Indexes features in order of first appearance.
    pub fn build<'a>(spec: NgramSpec, texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut index = Self::empty(spec);
        for text in texts {
            for id in extract_char_ngrams(text, &spec) {
                index.intern(id);
            }
        }
        index
    }

    pub(crate) fn from_ids(spec: NgramSpec, ids: Vec<FeatureId>) -> Result<Self> {
        let mut index = Self::empty(spec);
        for id in ids {
            let before = index.len();
            index.intern(id);
            if index.len() == before {
                return Err(Error::ModelFormat("duplicate feature in index".into()));
            }
        }
        Ok(index)
    }

    fn intern(&mut self, id: FeatureId) -> u32 {
        if let Some(&i) = self.lookup.get(&id) {
            return i;
        }
        let i = self.ids.len() as u32;
        self.lookup.insert(id.clone(), i);
        self.ids.push(id);
        i
    }

    pub fn spec(&self) -> &NgramSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[FeatureId] {
        &self.ids
    }

    pub fn get(&self, id: &FeatureId) -> Option<u32> {
        self.lookup.get(id).copied()
    }

    /// Indices of known features of `text`, with multiplicity. Unknown
    /// features are dropped.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        self.spec.for_each_ngram(text, |g| {
            let id = match self.spec.bucket(g) {
                Some(b) => FeatureId::Bucket(b),
                None => FeatureId::Gram(g.to_string()),
            };
            if let Some(&i) = self.lookup.get(&id) {
                out.push(i);
            }
        });
        out
    }

    /// Sparse `(index, count)` pairs sorted by index.
    pub fn counts(&self, text: &str) -> Vec<(u32, u32)> {
        let mut ids = self.encode(text);
        ids.sort_unstable();
        let mut out: Vec<(u32, u32)> = Vec::new();
        for i in ids {
            match out.last_mut() {
                Some((last, c)) if *last == i => *c += 1,
                _ => out.push((i, 1)),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grams(text: &str, spec: NgramSpec) -> Vec<String> {
        let mut g = spec.ngrams(text);
        g.sort();
        g
    }

    #[test]
    fn enumeration_examples() {
        let b = NgramSpec::new(2, 2, true, None).unwrap();
        assert_eq!(grams("ab", b), ["<a", "ab", "b>"]);
        let nb = NgramSpec::new(2, 3, false, None).unwrap();
        assert_eq!(grams("ab", nb), ["ab"]);
        assert!(extract_char_ngrams("", &b).is_empty());
    }

    #[test]
    fn multiplicity_and_codepoints() {
        let spec = NgramSpec::new(1, 2, false, None).unwrap();
        let g = spec.ngrams("\u{0628}\u{0628} \u{0628}");
        assert_eq!(g.iter().filter(|s| *s == "\u{0628}").count(), 3);
        assert_eq!(g.iter().filter(|s| *s == "\u{0628}\u{0628}").count(), 1);
    }

    #[test]
    fn counts_per_word() {
        // n-grams never span a word boundary
        let spec = NgramSpec::new(2, 6, false, None).unwrap();
        assert_eq!(spec.ngrams("ab cd").len(), 2);
        let spec = NgramSpec::new(2, 6, true, None).unwrap();
        // "<abc>" has 5 codepoints: 4 + 3 + 2 + 1 n-grams of length 2..=5
        assert_eq!(spec.ngrams("abc").len(), 10);
    }

    #[test]
    fn hashed_buckets_are_stable() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        let spec = NgramSpec::new(2, 2, false, Some(10)).unwrap();
        for id in extract_char_ngrams("abcdef", &spec) {
            assert!(matches!(id, FeatureId::Bucket(b) if b < 10));
        }
    }

    #[test]
    fn index_drops_unknown() {
        let spec = NgramSpec::new(2, 2, false, None).unwrap();
        let index = FeatureIndex::build(spec, ["aa", "bb"]);
        assert_eq!(index.len(), 2);
        assert_eq!(index.encode("aaa b"), vec![0, 0]);
        assert_eq!(index.counts("aaa bb"), vec![(0, 2), (1, 1)]);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(NgramSpec::new(0, 2, false, None).is_err());
        assert!(NgramSpec::new(3, 2, false, None).is_err());
        assert!(NgramSpec::new(2, 9, false, None).is_err());
        assert!(NgramSpec::new(2, 3, false, Some(0)).is_err());
    }
}
