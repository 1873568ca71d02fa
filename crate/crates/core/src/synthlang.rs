//! Artificial Perso-Arabic-script languages for end-to-end experiments
//! without real corpora.
//!
//! Two families of three languages each. Every family has one
//! conventional-only dominant language and two minority languages that
//! share part of the dominant's vocabulary but write some sounds with
//! their own letters. Each minority ships a mapping table folding those
//! letters onto the dominant's, so synthesized noise pushes minority text
//! towards the dominant exactly as unconventional writing does.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::WeightedIndex;
use rand::prelude::*;

use crate::dataset::Corpus;
use crate::error::Result;
use crate::lang::{Lang, LanguageProfile, ProfileSet, ScriptType};
use crate::rng;
use crate::scriptmap::{MappingRule, MappingSet, MappingTable, Position};
use crate::sentence::Sentence;

/// Letters shared by the first family (Arabic-like).
const FAMILY_A: &str = "ابتثجحخدذرزسشصضطظعغفقكلمنهوي";
/// Letters shared by the second family (Urdu-like); overlaps the first.
const FAMILY_B: &str = "ابپتٹجچدڈرڑزسشکگلمنںوہیے";

struct Spec {
    code: &'static str,
    name: &'static str,
    family: &'static str,
    dominant: Option<&'static str>,
    /// `(own letter, dominant letters, position)`.
    rules: &'static [(char, &'static str, Position)],
}

const SPECS: [Spec; 6] = [
    Spec {
        code: "qaa",
        name: "Synthetic A",
        family: FAMILY_A,
        dominant: None,
        rules: &[],
    },
    Spec {
        code: "qab",
        name: "Synthetic A-1",
        family: FAMILY_A,
        dominant: Some("qaa"),
        rules: &[
            ('پ', "ب", Position::Any),
            ('چ', "ج", Position::Any),
            ('ژ', "ز", Position::Any),
            ('گ', "ك", Position::Any),
        ],
    },
    Spec {
        code: "qac",
        name: "Synthetic A-2",
        family: FAMILY_A,
        dominant: Some("qaa"),
        rules: &[
            ('ڤ', "ف", Position::Any),
            ('ڵ', "ل", Position::Any),
            ('ڕ', "ر", Position::Any),
            ('ۆ', "و", Position::WordFinal),
        ],
    },
    Spec {
        code: "qad",
        name: "Synthetic B",
        family: FAMILY_B,
        dominant: None,
        rules: &[],
    },
    Spec {
        code: "qae",
        name: "Synthetic B-1",
        family: FAMILY_B,
        dominant: Some("qad"),
        rules: &[
            ('ٻ', "ب", Position::Any),
            ('ڄ', "ج;چ", Position::Any),
            ('ڏ', "ڈ", Position::Any),
            ('ڳ', "گ", Position::Any),
        ],
    },
    Spec {
        code: "qaf",
        name: "Synthetic B-2",
        family: FAMILY_B,
        dominant: Some("qad"),
        rules: &[
            ('ڙ', "ڑ", Position::Any),
            ('ڼ', "ن", Position::Any),
            ('ګ', "گ", Position::Any),
            ('ۍ', "ی", Position::WordFinal),
        ],
    },
];

/// Shape of the generated text.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthLangParams {
    /// Distinct words per language.
    pub vocabulary: usize,
    /// Share of a minority vocabulary borrowed from its dominant language.
    pub shared: f64,
    /// Probability that a borrowed or own word letter with a minority
    /// counterpart is written with the minority letter.
    pub own_letter_rate: f64,
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for SynthLangParams {
    fn default() -> Self {
        SynthLangParams {
            vocabulary: 60,
            shared: 0.8,
            own_letter_rate: 0.5,
            min_words: 2,
            max_words: 6,
        }
    }
}

/// Profiles, mapping tables and a sentence generator for the six
/// artificial languages `qaa`–`qaf`.
#[derive(Clone, Debug)]
pub struct SyntheticLanguages {
    pub profiles: ProfileSet,
    pub tables: MappingSet,
    pub params: SynthLangParams,
}

impl SyntheticLanguages {
    pub fn new(params: SynthLangParams) -> Self {
        let mut profiles = ProfileSet::new();
        let mut tables = MappingSet::new();
        for spec in &SPECS {
            let code = Lang::new(spec.code).expect("local-use code");
            let mut inventory: BTreeSet<char> = spec.family.chars().collect();
            inventory.extend(spec.rules.iter().map(|r| r.0));
            let dominant_langs: Vec<Lang> = spec.dominant.iter().map(|d| Lang::new(d).unwrap()).collect();
            profiles
                .insert(LanguageProfile {
                    code: code.clone(),
                    name: spec.name.into(),
                    script_type: ScriptType::Abjad,
                    uses_diacritics: false,
                    uses_zwnj: false,
                    dominant_langs: dominant_langs.clone(),
                    inventory,
                    unification_rules: Vec::new(),
                })
                .expect("synthetic profile is valid");
            if let Some(dominant) = dominant_langs.into_iter().next() {
                let rules = spec
                    .rules
                    .iter()
                    .map(|&(source, targets, position)| MappingRule {
                        source,
                        targets: targets.split(';').map(String::from).collect(),
                        position,
                    })
                    .collect();
                tables.insert(MappingTable::new(code, dominant, rules, false).expect("synthetic table is valid"));
            }
        }
        SyntheticLanguages {
            profiles,
            tables,
            params,
        }
    }

    pub fn codes(&self) -> Vec<Lang> {
        SPECS.iter().map(|s| Lang::new(s.code).unwrap()).collect()
    }

    /// The families as the clusters a hierarchical model should find.
    pub fn families(&self) -> Vec<BTreeSet<Lang>> {
        vec![
            self.codes()[..3].iter().cloned().collect(),
            self.codes()[3..].iter().cloned().collect(),
        ]
    }

    fn vocabularies(&self, seed: u64) -> BTreeMap<&'static str, Vec<String>> {
        let p = &self.params;
        let mut out: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
        for (i, spec) in SPECS.iter().enumerate() {
            let mut rng = rng::derived(seed, "synthlang/vocabulary", i as u64);
            let letters: Vec<char> = spec.family.chars().collect();
            let fresh = |rng: &mut rand_chacha::ChaCha8Rng| -> String {
                let len = rng.gen_range(2..=7);
                (0..len).map(|_| letters[rng.gen_range(0..letters.len())]).collect()
            };
            let words: Vec<String> = match spec.dominant {
                None => (0..p.vocabulary).map(|_| fresh(&mut rng)).collect(),
                Some(d) => {
                    let borrowed = (p.vocabulary as f64 * p.shared).round() as usize;
                    let dominant = &out[d];
                    let mut words: Vec<String> =
                        dominant.choose_multiple(&mut rng, borrowed.min(dominant.len())).cloned().collect();
                    while words.len() < p.vocabulary {
                        words.push(fresh(&mut rng));
                    }
                    words.shuffle(&mut rng);
                    words.into_iter().map(|w| self.respell(spec, &w, &mut rng)).collect()
                }
            };
            out.insert(spec.code, words);
        }
        out
    }

    /// Writes letters that have a minority counterpart with that letter.
    fn respell<R: Rng>(&self, spec: &Spec, word: &str, rng: &mut R) -> String {
        let chars: Vec<char> = word.chars().collect();
        let last = chars.len().saturating_sub(1);
        chars
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let own = spec.rules.iter().find(|&&(_, targets, position)| {
                    targets.split(';').next() == Some(c.encode_utf8(&mut [0; 4]))
                        && (position != Position::WordFinal || i == last)
                });
                match own {
                    Some(&(letter, _, _)) if rng.gen_bool(self.params.own_letter_rate) => letter,
                    _ => c,
                }
            })
            .collect()
    }

    /// `n` sentences per language. Words follow a Zipf-like rank
    /// distribution over each vocabulary.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Corpus> {
        let p = &self.params;
        let vocabularies = self.vocabularies(seed);
        let weights: Vec<f64> = (0..p.vocabulary).map(|r| 1.0 / (r as f64 + 1.0)).collect();
        let zipf = WeightedIndex::new(&weights).expect("positive weights");
        let mut corpus = Corpus::new();
        for (i, spec) in SPECS.iter().enumerate() {
            let lang = Lang::new(spec.code).unwrap();
            let words = &vocabularies[spec.code];
            let mut rng = rng::derived(seed, "synthlang/sentences", i as u64);
            let sentences = (0..n)
                .map(|_| {
                    let len = rng.gen_range(p.min_words..=p.max_words);
                    let text: Vec<&str> = (0..len).map(|_| words[zipf.sample(&mut rng)].as_str()).collect();
                    Sentence::clean(text.join(" "), lang.clone())
                })
                .collect();
            corpus.insert(lang, sentences);
        }
        Ok(corpus)
    }
}

impl Default for SyntheticLanguages {
    fn default() -> Self {
        Self::new(SynthLangParams::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scriptmap::validate_in;

    #[test]
    fn tables_are_complete() {
        let s = SyntheticLanguages::default();
        assert_eq!(s.profiles.len(), 6);
        assert_eq!(s.tables.len(), 4);
        for t in s.tables.iter() {
            let report = validate_in(t, &s.profiles).unwrap();
            assert!(report.is_complete(), "{report:?}");
        }
        assert_eq!(s.profiles.conventional_only().len(), 2);
    }

    #[test]
    fn generation_is_deterministic_and_in_inventory() {
        let s = SyntheticLanguages::default();
        let a = s.generate(50, 3).unwrap();
        assert_eq!(a, s.generate(50, 3).unwrap());
        assert_ne!(a, s.generate(50, 4).unwrap());
        for (lang, sentences) in &a {
            assert_eq!(sentences.len(), 50);
            let inv = &s.profiles.get(lang).unwrap().inventory;
            for sent in sentences {
                assert!(sent.text.chars().all(|c| c == ' ' || inv.contains(&c)), "{}", sent.text);
            }
        }
    }

    #[test]
    fn minorities_use_their_own_letters() {
        // a large vocabulary so that rarer word-final rules get a chance
        let s = SyntheticLanguages::new(SynthLangParams {
            vocabulary: 500,
            ..SynthLangParams::default()
        });
        let corpus = s.generate(2000, 1).unwrap();
        for spec in SPECS.iter().filter(|s| s.dominant.is_some()) {
            let text: String = corpus[&Lang::new(spec.code).unwrap()].iter().map(|s| s.text.as_str()).collect();
            for &(letter, _, _) in spec.rules {
                assert!(text.contains(letter), "{} never writes {letter}", spec.code);
            }
        }
    }
}
