//! Grapheme substitution tables from a source script to a dominant script.
//!
//! Table files are UTF-8 TSV named `<source>-<target>.tsv`. Each data line
//! holds a source codepoint, a position keyword (`any`, `word_initial`,
//! `word_medial`, `word_final`) and `;`-separated target sequences. A target
//! sequence is space-separated codepoints, or `-` for deletion. Lines
//! starting with `#` are comments, except the directive
//! `#! numerals = random|off`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lang::{format_codepoint, parse_codepoint, Lang, LanguageProfile, ProfileSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Position {
    Any,
    WordInitial,
    WordMedial,
    WordFinal,
}

impl Position {
    /// Whether a rule with this position applies to a character at `at`.
    pub fn matches(self, at: WordPosition) -> bool {
        match self {
            Position::Any => true,
            Position::WordInitial => at.initial,
            Position::WordMedial => !at.initial && !at.fin,
            Position::WordFinal => at.fin,
        }
    }
}

impl FromStr for Position {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "any" => Ok(Position::Any),
            "word_initial" => Ok(Position::WordInitial),
            "word_medial" => Ok(Position::WordMedial),
            "word_final" => Ok(Position::WordFinal),
            other => Err(format!("unknown position {other:?}")),
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Position::Any => "any",
            Position::WordInitial => "word_initial",
            Position::WordMedial => "word_medial",
            Position::WordFinal => "word_final",
        })
    }
}

/// Where a character sits in its whitespace-delimited word. A one-character
/// word is both initial and final.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordPosition {
    pub initial: bool,
    pub fin: bool,
}

/// Word positions for every codepoint of `text` (whitespace gets both flags).
pub fn word_positions(text: &str) -> Vec<WordPosition> {
    let chars: Vec<char> = text.chars().collect();
    (0..chars.len())
        .map(|i| WordPosition {
            initial: i == 0 || chars[i - 1].is_whitespace(),
            fin: i + 1 == chars.len() || chars[i + 1].is_whitespace(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MappingRule {
    pub source: char,
    /// Non-empty; an empty string is a deletion.
    pub targets: Vec<String>,
    pub position: Position,
}

impl MappingRule {
    fn non_identity_targets(&self) -> impl Iterator<Item = &str> {
        let source = self.source;
        self.targets
            .iter()
            .filter(move |t| {
                let mut cs = t.chars();
                !(cs.next() == Some(source) && cs.next().is_none())
            })
            .map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MappingTable {
    pub source_lang: Lang,
    pub target_lang: Lang,
    pub rules: Vec<MappingRule>,
    pub numeral_randomization: bool,
}

fn format_target(t: &str) -> String {
    if t.is_empty() {
        "-".to_string()
    } else {
        t.chars().map(format_codepoint).collect::<Vec<_>>().join(" ")
    }
}

impl MappingTable {
    pub fn new(
        source_lang: Lang,
        target_lang: Lang,
        rules: Vec<MappingRule>,
        numeral_randomization: bool,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for rule in &rules {
            if rule.targets.is_empty() {
                return Err(Error::InvalidMapping {
                    source_lang: source_lang.to_string(),
                    target_lang: target_lang.to_string(),
                    message: format!("rule for {} has no targets", format_codepoint(rule.source)),
                });
            }
            if !seen.insert((rule.source, rule.position)) {
                return Err(Error::DuplicateRule {
                    codepoint: format_codepoint(rule.source),
                    position: rule.position.to_string(),
                });
            }
        }
        Ok(MappingTable {
            source_lang,
            target_lang,
            rules,
            numeral_randomization,
        })
    }

    pub fn parse(src: &str, source_lang: Lang, target_lang: Lang, context: &str) -> Result<Self> {
        let mut rules = Vec::new();
        let mut numerals = true;
        for (i, line) in src.lines().enumerate() {
            let lineno = i + 1;
            let trimmed = line.trim();
            if let Some(directive) = trimmed.strip_prefix("#!") {
                let (key, value) = directive
                    .split_once('=')
                    .ok_or_else(|| Error::parse(context, lineno, "bad directive"))?;
                match (key.trim(), value.trim()) {
                    ("numerals", "random") => numerals = true,
                    ("numerals", "off") => numerals = false,
                    _ => return Err(Error::parse(context, lineno, format!("unknown directive {directive:?}"))),
                }
                continue;
            }
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(context, lineno, format!("expected 3 tab-separated columns, got {}", cols.len())));
            }
            let source = parse_codepoint(cols[0])
                .ok_or_else(|| Error::parse(context, lineno, format!("bad source codepoint {:?}", cols[0])))?;
            let position = cols[1]
                .parse()
                .map_err(|m: String| Error::parse(context, lineno, m))?;
            let mut targets = Vec::new();
            for t in cols[2].split(';').map(str::trim) {
                if t == "-" {
                    targets.push(String::new());
                    continue;
                }
                let seq = t
                    .split_whitespace()
                    .map(|cp| {
                        parse_codepoint(cp)
                            .ok_or_else(|| Error::parse(context, lineno, format!("bad target codepoint {cp:?}")))
                    })
                    .collect::<Result<String>>()?;
                if seq.is_empty() {
                    return Err(Error::parse(context, lineno, "empty target (use `-` for deletion)"));
                }
                targets.push(seq);
            }
            rules.push(MappingRule {
                source,
                targets,
                position,
            });
        }
        MappingTable::new(source_lang, target_lang, rules, numerals)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "# {} -> {}\n#! numerals = {}\n",
            self.source_lang,
            self.target_lang,
            if self.numeral_randomization { "random" } else { "off" }
        );
        for rule in &self.rules {
            let targets: Vec<String> = rule.targets.iter().map(|t| format_target(t)).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                format_codepoint(rule.source),
                rule.position,
                targets.join(";")
            ));
        }
        out
    }

    /// Checks the table's languages against `profiles`.
    pub fn check_languages(&self, profiles: &ProfileSet) -> Result<()> {
        let source = profiles.require(&self.source_lang)?;
        profiles.require(&self.target_lang)?;
        if !source.dominant_langs.contains(&self.target_lang) {
            return Err(Error::InvalidMapping {
                source_lang: self.source_lang.to_string(),
                target_lang: self.target_lang.to_string(),
                message: format!(
                    "{} is not a dominant language of {}",
                    self.target_lang, self.source_lang
                ),
            });
        }
        Ok(())
    }

    pub fn rules_for(&self, c: char) -> impl Iterator<Item = &MappingRule> {
        self.rules.iter().filter(move |r| r.source == c)
    }

    /// Targets differing from `c` among all rules applicable at `at`.
    pub fn substitutions(&self, c: char, at: WordPosition) -> Vec<&str> {
        self.rules_for(c)
            .filter(|r| r.position.matches(at))
            .flat_map(|r| r.non_identity_targets())
            .collect()
    }
}

/// Loads `<source>-<target>.tsv`, validating both languages.
pub fn load_mapping(path: &Path, profiles: &ProfileSet) -> Result<MappingTable> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::parse(path.display().to_string(), 0, "bad file name"))?;
    let (src, tgt) = stem.split_once('-').ok_or_else(|| {
        Error::parse(path.display().to_string(), 0, "file name must be <source>-<target>.tsv")
    })?;
    let source_lang = Lang::new(src)?;
    let target_lang = Lang::new(tgt)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table = MappingTable::parse(&text, source_lang, target_lang, &path.display().to_string())?;
    table.check_languages(profiles)?;
    Ok(table)
}

/// Mapping tables grouped by source language, ordered by target language.
#[derive(Clone, Debug, Default)]
pub struct MappingSet {
    by_source: BTreeMap<Lang, BTreeMap<Lang, MappingTable>>,
}

macro_rules! builtin_tables {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../../data/mappings/", $name, ".tsv")))),*]
    };
}

const BUILTIN_TABLES: &[(&str, &str)] = builtin_tables!(
    "azb-fas", "glk-fas", "mzn-fas", "pus-fas", "hac-fas", "hac-arb", "hac-ckb", "kmr-fas", "kmr-arb",
    "ckb-fas", "ckb-arb", "sdh-fas", "sdh-arb", "bal-fas", "bal-urd", "brh-urd", "kas-urd", "snd-urd",
    "skr-urd", "trw-urd", "pnb-urd",
);

impl MappingSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// The shipped tables for every (language, dominant language) pair.
    pub fn builtin() -> Self {
        let profiles = ProfileSet::builtin();
        let mut set = MappingSet::new();
        for (name, src) in BUILTIN_TABLES {
            let (a, b) = name.split_once('-').unwrap();
            let table = MappingTable::parse(src, Lang::new(a).unwrap(), Lang::new(b).unwrap(), name)
                .expect("shipped tables parse");
            table.check_languages(&profiles).expect("shipped tables are consistent");
            set.insert(table);
        }
        set
    }

    pub fn load_dir(dir: &Path, profiles: &ProfileSet) -> Result<Self> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
            .collect();
        paths.sort();
        let mut set = MappingSet::new();
        for path in paths {
            set.insert(load_mapping(&path, profiles)?);
        }
        Ok(set)
    }

    pub fn insert(&mut self, table: MappingTable) {
        self.by_source
            .entry(table.source_lang.clone())
            .or_default()
            .insert(table.target_lang.clone(), table);
    }

    pub fn tables_for(&self, source: &Lang) -> Vec<&MappingTable> {
        self.by_source
            .get(source)
            .map(|m| m.values().collect())
            .unwrap_or_default()
    }

    pub fn get(&self, source: &Lang, target: &Lang) -> Option<&MappingTable> {
        self.by_source.get(source).and_then(|m| m.get(target))
    }

    pub fn iter(&self) -> impl Iterator<Item = &MappingTable> {
        self.by_source.values().flat_map(|m| m.values())
    }

    pub fn len(&self) -> usize {
        self.by_source.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    /// Source letters absent from the target inventory with no rule.
    pub coverage_gaps: Vec<char>,
    /// `(source, target codepoint)` pairs whose target is outside the
    /// target inventory.
    pub foreign_targets: Vec<(char, char)>,
    /// Sources whose only rules are positional; legitimate only when the
    /// source never occurs elsewhere.
    pub positional_only: Vec<char>,
}

impl ValidationReport {
    pub fn is_complete(&self) -> bool {
        self.coverage_gaps.is_empty() && self.foreign_targets.is_empty()
    }
}

/// Compares a table against the inventories of its two languages.
pub fn validate_table(
    table: &MappingTable,
    source: &LanguageProfile,
    target: &LanguageProfile,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    for &c in source.inventory.difference(&target.inventory) {
        if table.rules_for(c).next().is_none() {
            report.coverage_gaps.push(c);
        }
    }
    let mut sources: BTreeSet<char> = BTreeSet::new();
    for rule in &table.rules {
        sources.insert(rule.source);
        for t in &rule.targets {
            for tc in t.chars() {
                if !target.inventory.contains(&tc) {
                    report.foreign_targets.push((rule.source, tc));
                }
            }
        }
    }
    for c in sources {
        if table.rules_for(c).all(|r| r.position != Position::Any) {
            report.positional_only.push(c);
        }
    }
    report
}

/// [`validate_table`] with the profiles looked up in `profiles`.
pub fn validate_in(table: &MappingTable, profiles: &ProfileSet) -> Result<ValidationReport> {
    Ok(validate_table(
        table,
        profiles.require(&table.source_lang)?,
        profiles.require(&table.target_lang)?,
    ))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubstitutablePosition<'t> {
    /// Codepoint index into the text.
    pub index: usize,
    pub targets: Vec<&'t str>,
}

/// Codepoint indices with at least one non-identity rule applicable at
/// their word position, in ascending order.
pub fn substitutable_positions<'t>(text: &str, table: &'t MappingTable) -> Vec<SubstitutablePosition<'t>> {
    let positions = word_positions(text);
    text.chars()
        .zip(positions)
        .enumerate()
        .filter_map(|(index, (c, at))| {
            let targets = table.substitutions(c, at);
            (!targets.is_empty()).then_some(SubstitutablePosition { index, targets })
        })
        .collect()
}

/// Maps an ASCII digit to the Extended Arabic-Indic or Arabic-Indic digit
/// of equal value, picking the block uniformly at random.
pub fn map_numeral<R: Rng + ?Sized>(ch: char, rng: &mut R) -> Result<char> {
    let value = ch
        .to_digit(10)
        .filter(|_| ch.is_ascii_digit())
        .ok_or(Error::NotADigit(ch))?;
    let base = if rng.gen_bool(0.5) { 0x06F0 } else { 0x0660 };
    Ok(char::from_u32(base + value).expect("digit blocks are valid"))
}
