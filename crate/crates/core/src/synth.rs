//! Synthetic "unconventional" text: clean sentences with a controlled share
//! of their substitutable characters replaced through a mapping table.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::lang::Lang;
use crate::rng;
use crate::scriptmap::{map_numeral, substitutable_positions, MappingSet, MappingTable};
use crate::sentence::{NoiseLevel, Sentence};

/// Detachable diacritics removed at full noise.
pub const HARAKAT: std::ops::RangeInclusive<char> = '\u{064B}'..='\u{0652}';

pub fn is_haraka(c: char) -> bool {
    HARAKAT.contains(&c)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DominantChoice {
    /// Uniform over the tables available for the sentence's language.
    Random,
    Fixed(Lang),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoiseSpec {
    pub level: NoiseLevel,
    pub seed: u64,
    pub dominant_choice: DominantChoice,
}

impl NoiseSpec {
    /// A spec on the standard 20..100 grid.
    pub fn new(level: u32, seed: u64) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidNoiseLevel(level));
        }
        Ok(NoiseSpec {
            level: NoiseLevel::on_grid(level)?,
            seed,
            dominant_choice: DominantChoice::Random,
        })
    }

    /// A spec at any level in 1..=100, for experiments off the grid.
    pub fn any_level(level: u32, seed: u64) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidNoiseLevel(level));
        }
        Ok(NoiseSpec {
            level: NoiseLevel::new(level)?,
            seed,
            dominant_choice: DominantChoice::Random,
        })
    }

    pub fn with_dominant(mut self, choice: DominantChoice) -> Self {
        self.dominant_choice = choice;
        self
    }
}

/// `round_half_up(substitutable * level / 100)` in exact integer arithmetic.
pub fn substitution_count(substitutable: usize, level: NoiseLevel) -> usize {
    (substitutable * level.percent() as usize + 50) / 100
}

/// What one corruption did, for auditing and tests.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corruption {
    pub sentence: Sentence,
    pub target_lang: Lang,
    /// Number of substitutable positions in the clean text.
    pub substitutable: usize,
    /// Codepoint indices (into the clean text) that were substituted.
    pub substituted: Vec<usize>,
}

fn choose_table<'a, R: Rng + ?Sized>(
    lang: &Lang,
    tables: &'a MappingSet,
    choice: &DominantChoice,
    rng: &mut R,
) -> Result<&'a MappingTable> {
    match choice {
        DominantChoice::Fixed(target) => tables
            .get(lang, target)
            .ok_or_else(|| Error::NoMappingTable(format!("{lang}-{target}"))),
        DominantChoice::Random => {
            let candidates = tables.tables_for(lang);
            if candidates.is_empty() {
                return Err(Error::NoMappingTable(lang.to_string()));
            }
            Ok(candidates[rng.gen_range(0..candidates.len())])
        }
    }
}

/// Corrupts `s` with an explicit generator.
pub fn corrupt_with_rng<R: Rng + ?Sized>(
    s: &Sentence,
    tables: &MappingSet,
    level: NoiseLevel,
    choice: &DominantChoice,
    rng: &mut R,
) -> Result<Corruption> {
    if !s.noise_level.is_clean() {
        return Err(Error::Dataset(format!(
            "cannot corrupt an already noisy sentence (level {})",
            s.noise_level
        )));
    }
    if level.is_clean() {
        return Err(Error::InvalidNoiseLevel(0));
    }
    let table = choose_table(&s.lang, tables, choice, rng)?;
    let positions = substitutable_positions(&s.text, table);
    let k = substitution_count(positions.len(), level);
    let mut chosen: Vec<usize> = index::sample(rng, positions.len(), k).into_vec();
    chosen.sort_unstable();

    let mut replacement: BTreeMap<usize, &str> = BTreeMap::new();
    for &p in &chosen {
        let sp = &positions[p];
        replacement.insert(sp.index, sp.targets[rng.gen_range(0..sp.targets.len())]);
    }

    let full = level.percent() == 100;
    let mut text = String::with_capacity(s.text.len());
    for (i, c) in s.text.chars().enumerate() {
        match replacement.get(&i) {
            Some(target) => text.push_str(target),
            None => text.push(c),
        }
    }
    if full {
        let mut out = String::with_capacity(text.len());
        for c in text.chars() {
            if is_haraka(c) {
                continue;
            }
            if table.numeral_randomization && c.is_ascii_digit() {
                out.push(map_numeral(c, rng)?);
            } else {
                out.push(c);
            }
        }
        text = out;
    }

    Ok(Corruption {
        sentence: Sentence::synthetic(text, s.lang.clone(), level),
        target_lang: table.target_lang.clone(),
        substitutable: positions.len(),
        substituted: chosen.into_iter().map(|p| positions[p].index).collect(),
    })
}

/// Corrupts one sentence; the generator is derived from `spec.seed` alone.
pub fn corrupt_sentence(s: &Sentence, tables: &MappingSet, spec: &NoiseSpec) -> Result<Sentence> {
    let mut rng = rng::derived(spec.seed, &level_domain(spec.level), 0);
    corrupt_with_rng(s, tables, spec.level, &spec.dominant_choice, &mut rng).map(|c| c.sentence)
}

fn level_domain(level: NoiseLevel) -> String {
    format!("synth/{}", level.percent())
}

/// Corrupts every sentence at every level. Sentence `i` at level `p` uses
/// its own stream derived from `(seed, p, i)`, so output does not depend on
/// processing order.
pub fn corrupt_corpus(
    clean: &[Sentence],
    tables: &MappingSet,
    levels: &[NoiseLevel],
    seed: u64,
    choice: &DominantChoice,
) -> Result<BTreeMap<NoiseLevel, Vec<Sentence>>> {
    corrupt_corpus_detailed(clean, tables, levels, seed, choice).map(|m| {
        m.into_iter()
            .map(|(l, cs)| (l, cs.into_iter().map(|c| c.sentence).collect()))
            .collect()
    })
}

/// [`corrupt_corpus`] keeping the per-sentence audit records.
pub fn corrupt_corpus_detailed(
    clean: &[Sentence],
    tables: &MappingSet,
    levels: &[NoiseLevel],
    seed: u64,
    choice: &DominantChoice,
) -> Result<BTreeMap<NoiseLevel, Vec<Corruption>>> {
    let mut out = BTreeMap::new();
    for &level in levels {
        let domain = level_domain(level);
        let corrupted = clean
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = rng::derived(seed, &domain, i as u64);
                corrupt_with_rng(s, tables, level, choice, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(level, corrupted);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::lang::ProfileSet;
    use crate::scriptmap::MappingTable;

    fn lang(s: &str) -> Lang {
        Lang::new(s).unwrap()
    }

    fn single_table(src: &str) -> MappingSet {
        let mut set = MappingSet::new();
        set.insert(MappingTable::parse(src, lang("glk"), lang("fas"), "t").unwrap());
        set
    }

    /// Indices where two equal-length codepoint sequences differ.
    fn diff(a: &str, b: &str) -> Vec<usize> {
        a.chars()
            .zip(b.chars())
            .enumerate()
            .filter(|(_, (x, y))| x != y)
            .map(|(i, _)| i)
            .collect()
    }

    #[test]
    fn rounding_is_half_up() {
        let l = |p| NoiseLevel::new(p).unwrap();
        assert_eq!(substitution_count(1, l(20)), 0);
        assert_eq!(substitution_count(5, l(40)), 2);
        assert_eq!(substitution_count(5, l(50)), 3);
        assert_eq!(substitution_count(3, l(50)), 2);
        assert_eq!(substitution_count(7, l(100)), 7);
        assert_eq!(substitution_count(0, l(100)), 0);
    }

    #[test]
    fn k_zero_leaves_text() {
        let tables = single_table("U+06CB\tany\tU+0648\n");
        let s = Sentence::clean("\u{0628}\u{06CB}\u{0628}", lang("glk"));
        let out = corrupt_sentence(&s, &tables, &NoiseSpec::new(20, 3).unwrap()).unwrap();
        assert_eq!(out.text, s.text);
        assert_eq!(out.noise_level.percent(), 20);
        assert_eq!(out.origin, crate::sentence::Origin::Synthetic);
    }

    #[test]
    fn exact_count_matches_diff_oracle() {
        let tables = single_table("U+06CB\tany\tU+0648\n");
        let s = Sentence::clean("\u{06CB}\u{0628}\u{06CB} \u{06CB}\u{06CB} \u{06CB}", lang("glk"));
        for seed in 0..50 {
            let out = corrupt_sentence(&s, &tables, &NoiseSpec::new(40, seed).unwrap()).unwrap();
            let d = diff(&s.text, &out.text);
            assert_eq!(d.len(), 2);
            assert!(d.iter().all(|&i| s.text.chars().nth(i) == Some('\u{06CB}')));
        }
    }

    #[test]
    fn full_noise_removes_harakat_and_randomizes_digits() {
        let tables = single_table("U+06CB\tany\tU+0648\n");
        let s = Sentence::clean("\u{0628}\u{064E}\u{06CB} 123 \u{0650}", lang("glk"));
        let out = corrupt_sentence(&s, &tables, &NoiseSpec::new(100, 1).unwrap()).unwrap();
        assert!(!out.text.chars().any(is_haraka));
        assert!(!out.text.chars().any(|c| c.is_ascii_digit()));
        assert!(!out.text.contains('\u{06CB}'));
        let below = corrupt_sentence(&s, &tables, &NoiseSpec::new(80, 1).unwrap()).unwrap();
        assert!(below.text.contains('\u{064E}'));
        assert!(below.text.contains("123"));
    }

    #[test]
    fn deletion_targets_shorten_text() {
        let tables = single_table("U+0626\tword_initial\t-\n");
        let s = Sentence::clean("\u{0626}\u{0628} \u{0628}\u{0626}", lang("glk"));
        let out = corrupt_sentence(&s, &tables, &NoiseSpec::new(100, 9).unwrap()).unwrap();
        assert_eq!(out.text, "\u{0628} \u{0628}\u{0626}");
    }

    #[test]
    fn errors() {
        let tables = MappingSet::builtin();
        let fas = Sentence::clean("\u{0628}\u{0627}", lang("fas"));
        assert!(matches!(
            corrupt_sentence(&fas, &tables, &NoiseSpec::new(20, 0).unwrap()),
            Err(Error::NoMappingTable(_))
        ));
        let ckb = Sentence::clean("\u{0628}\u{0627}", lang("ckb"));
        let spec = NoiseSpec::new(20, 0).unwrap().with_dominant(DominantChoice::Fixed(lang("urd")));
        assert!(corrupt_sentence(&ckb, &tables, &spec).is_err());
        let noisy = Sentence::synthetic("x", lang("ckb"), NoiseLevel::new(20).unwrap());
        assert!(corrupt_sentence(&noisy, &tables, &NoiseSpec::new(40, 0).unwrap()).is_err());
        assert!(NoiseSpec::new(30, 0).is_err());
        assert!(NoiseSpec::new(0, 0).is_err());
        assert!(NoiseSpec::any_level(30, 0).is_ok());
        assert!(NoiseSpec::any_level(0, 0).is_err());
    }

    #[test]
    fn fixed_dominant_is_respected() {
        let tables = MappingSet::builtin();
        let s = Sentence::clean("\u{06D5}\u{06B5}\u{06CE} \u{06C6}\u{06A4}", lang("ckb"));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for target in ["fas", "arb"] {
            let c = corrupt_with_rng(
                &s,
                &tables,
                NoiseLevel::new(100).unwrap(),
                &DominantChoice::Fixed(lang(target)),
                &mut rng,
            )
            .unwrap();
            assert_eq!(c.target_lang, lang(target));
        }
    }

    #[test]
    fn corpus_outputs_preserve_labels_and_are_deterministic() {
        let tables = MappingSet::builtin();
        let clean: Vec<Sentence> = ["ckb", "kmr", "glk", "snd"]
            .iter()
            .map(|l| Sentence::clean("\u{06D5}\u{06B5} \u{06CB}\u{06BE}\u{0679} \u{06CE}", lang(l)))
            .collect();
        let levels: Vec<NoiseLevel> = NoiseLevel::GRID.to_vec();
        let a = corrupt_corpus(&clean, &tables, &levels, 11, &DominantChoice::Random).unwrap();
        let b = corrupt_corpus(&clean, &tables, &levels, 11, &DominantChoice::Random).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        for (level, out) in &a {
            assert_eq!(out.len(), clean.len());
            for (o, c) in out.iter().zip(&clean) {
                assert_eq!(o.lang, c.lang);
                assert_eq!(o.noise_level, *level);
            }
        }
        assert!(corrupt_corpus(&[], &tables, &levels, 1, &DominantChoice::Random)
            .unwrap()
            .values()
            .all(Vec::is_empty));
    }

    #[test]
    fn full_noise_stays_in_target_inventories() {
        let profiles = ProfileSet::builtin();
        let tables = MappingSet::builtin();
        for source in profiles.iter().filter(|p| !p.is_conventional_only()) {
            let text: String = source
                .inventory
                .iter()
                .filter(|c| c.is_alphabetic())
                .flat_map(|&c| [c, c, ' '])
                .collect();
            let s = Sentence::clean(text, source.code.clone());
            for table in tables.tables_for(&source.code) {
                let mut rng = ChaCha8Rng::seed_from_u64(2);
                let c = corrupt_with_rng(
                    &s,
                    &tables,
                    NoiseLevel::new(100).unwrap(),
                    &DominantChoice::Fixed(table.target_lang.clone()),
                    &mut rng,
                )
                .unwrap();
                let target = profiles.get(&table.target_lang).unwrap();
                for ch in c.sentence.text.chars().filter(|c| !c.is_whitespace()) {
                    let unmapped = table.rules_for(ch).next().is_none() && source.inventory.contains(&ch);
                    assert!(
                        target.inventory.contains(&ch) || unmapped,
                        "{}-{}: U+{:04X}",
                        source.code,
                        table.target_lang,
                        ch as u32
                    );
                }
            }
        }
    }

    const TEXT_PATTERN: &str = "[\u{0628}\u{06CB}\u{06D5} ]{0,40}";

    proptest! {
        #[test]
        fn substitutions_touch_only_substitutable_positions(
            text in TEXT_PATTERN,
            level in prop::sample::select(vec![20u32, 40, 60, 80]),
            seed in any::<u64>(),
        ) {
            let tables = single_table("U+06CB\tany\tU+0648\nU+06D5\tany\tU+0647;U+0629\n");
            let s = Sentence::clean(text.clone(), lang("glk"));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = corrupt_with_rng(&s, &tables, NoiseLevel::new(level).unwrap(), &DominantChoice::Random, &mut rng).unwrap();
            let d = diff(&text, &c.sentence.text);
            prop_assert_eq!(&d, &c.substituted);
            prop_assert_eq!(d.len(), substitution_count(c.substitutable, NoiseLevel::new(level).unwrap()));
            let unmapped = Some('\u{0628}');
            for i in d {
                prop_assert!(text.chars().nth(i) != unmapped);
            }
        }
    }
}
