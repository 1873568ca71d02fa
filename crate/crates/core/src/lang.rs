//! Language codes and per-language script profiles.
//!
//! A profile file is UTF-8 `key = value` lines; `#` starts a comment.
//! Codepoints are written in `U+06CC` notation:
//!
//! ```text
//! code = ckb
//! name = Central Kurdish
//! script = alphabet
//! diacritics = false
//! zwnj = false
//! dominant = fas, arb
//! inventory = U+0626 U+0627 U+0628 ...
//! unify = U+064A > U+06CC, U+0643 > U+06A9
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The nineteen supported languages, in reference-table order.
pub const LANGUAGES: [&str; 19] = [
    "azb", "glk", "mzn", "pus", "hac", "kmr", "ckb", "sdh", "bal", "brh", "kas", "snd", "skr",
    "trw", "pnb", "fas", "arb", "urd", "uig",
];

/// Languages only ever written conventionally; they have no dominant language.
pub const CONVENTIONAL_ONLY: [&str; 4] = ["fas", "arb", "urd", "uig"];

/// An ISO 639-3 code: three lowercase ASCII letters.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lang(String);

impl Lang {
    pub fn new(code: &str) -> Result<Self> {
        if code.len() == 3 && code.bytes().all(|b| b.is_ascii_lowercase()) {
            Ok(Lang(code.to_string()))
        } else {
            Err(Error::InvalidLang(code.to_string()))
        }
    }

    /// `und`, used for abstentions of external predictors.
    pub fn undetermined() -> Self {
        Lang("und".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Codes in the ISO 639-3 local-use range `qaa`..=`qtz`.
    pub fn is_local_use(&self) -> bool {
        let b = self.0.as_bytes();
        b[0] == b'q' && (b'a'..=b't').contains(&b[1])
    }

    pub fn is_builtin(&self) -> bool {
        LANGUAGES.contains(&self.as_str())
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Lang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Lang::new(s.trim())
    }
}

/// Parses `U+06CC` (also accepts a bare hex number).
pub fn parse_codepoint(s: &str) -> Option<char> {
    let s = s.trim();
    let hex = s
        .strip_prefix("U+")
        .or_else(|| s.strip_prefix("u+"))
        .unwrap_or(s);
    if hex.is_empty() || hex.len() > 6 {
        return None;
    }
    u32::from_str_radix(hex, 16).ok().and_then(char::from_u32)
}

pub fn format_codepoint(c: char) -> String {
    format!("U+{:04X}", c as u32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScriptType {
    Abjad,
    Alphabet,
}

impl FromStr for ScriptType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "abjad" => Ok(ScriptType::Abjad),
            "alphabet" => Ok(ScriptType::Alphabet),
            other => Err(format!("unknown script type {other:?}")),
        }
    }
}

impl fmt::Display for ScriptType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScriptType::Abjad => "abjad",
            ScriptType::Alphabet => "alphabet",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageProfile {
    pub code: Lang,
    pub name: String,
    pub script_type: ScriptType,
    pub uses_diacritics: bool,
    pub uses_zwnj: bool,
    pub dominant_langs: Vec<Lang>,
    pub inventory: BTreeSet<char>,
    /// `(variant, canonical)` pairs.
    pub unification_rules: Vec<(char, char)>,
}

impl LanguageProfile {
    pub fn parse(src: &str, context: &str) -> Result<Self> {
        let mut fields: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (i, line) in src.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(context, i + 1, "expected `key = value`"))?;
            if fields.insert(key.trim(), (i + 1, value.trim())).is_some() {
                return Err(Error::parse(context, i + 1, format!("duplicate key {}", key.trim())));
            }
        }
        let get = |key: &str| -> Result<(usize, &str)> {
            fields
                .get(key)
                .copied()
                .ok_or_else(|| Error::parse(context, 0, format!("missing key {key}")))
        };
        let parse_bool = |key: &str| -> Result<bool> {
            let (line, v) = get(key)?;
            match v {
                "true" | "yes" => Ok(true),
                "false" | "no" => Ok(false),
                _ => Err(Error::parse(context, line, format!("{key} must be true or false"))),
            }
        };

        let code = Lang::new(get("code")?.1)?;
        let name = fields.get("name").map(|v| v.1.to_string()).unwrap_or_default();
        let (line, script) = get("script")?;
        let script_type = script
            .parse()
            .map_err(|m: String| Error::parse(context, line, m))?;
        let (_, dominant) = get("dominant")?;
        let dominant_langs = dominant
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty() && *s != "-")
            .map(Lang::new)
            .collect::<Result<Vec<_>>>()?;
        let (line, inv) = get("inventory")?;
        let inventory = inv
            .split_whitespace()
            .map(|t| {
                parse_codepoint(t)
                    .ok_or_else(|| Error::parse(context, line, format!("bad codepoint {t:?}")))
            })
            .collect::<Result<BTreeSet<char>>>()?;
        let mut unification_rules = Vec::new();
        if let Some(&(line, unify)) = fields.get("unify") {
            for pair in unify.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (a, b) = pair
                    .split_once('>')
                    .ok_or_else(|| Error::parse(context, line, format!("bad rule {pair:?}")))?;
                let a = parse_codepoint(a)
                    .ok_or_else(|| Error::parse(context, line, format!("bad codepoint {a:?}")))?;
                let b = parse_codepoint(b)
                    .ok_or_else(|| Error::parse(context, line, format!("bad codepoint {b:?}")))?;
                unification_rules.push((a, b));
            }
        }

        let profile = LanguageProfile {
            code,
            name,
            script_type,
            uses_diacritics: parse_bool("diacritics")?,
            uses_zwnj: parse_bool("zwnj")?,
            dominant_langs,
            inventory,
            unification_rules,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&src, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::InvalidProfile {
                code: self.code.to_string(),
                message,
            })
        };
        if !self.code.is_builtin() && !self.code.is_local_use() {
            return fail("code is neither a supported language nor in the local-use range".into());
        }
        if self.code.is_builtin() {
            let conventional = CONVENTIONAL_ONLY.contains(&self.code.as_str());
            if conventional != self.dominant_langs.is_empty() {
                return fail(format!(
                    "dominant languages must be empty exactly for {}",
                    CONVENTIONAL_ONLY.join(", ")
                ));
            }
        }
        if self.dominant_langs.contains(&self.code) {
            return fail("a language cannot dominate itself".into());
        }
        for &(variant, canonical) in &self.unification_rules {
            if !self.inventory.contains(&canonical) {
                return fail(format!(
                    "canonical {} of unification rule is not in the inventory",
                    format_codepoint(canonical)
                ));
            }
            if variant == canonical {
                return fail(format!("unification rule maps {} to itself", format_codepoint(variant)));
            }
        }
        Ok(())
    }

    pub fn is_conventional_only(&self) -> bool {
        self.dominant_langs.is_empty()
    }

    pub fn to_config_string(&self) -> String {
        let dominant: Vec<&str> = self.dominant_langs.iter().map(Lang::as_str).collect();
        let inventory: Vec<String> = self.inventory.iter().map(|&c| format_codepoint(c)).collect();
        let unify: Vec<String> = self
            .unification_rules
            .iter()
            .map(|&(a, b)| format!("{} > {}", format_codepoint(a), format_codepoint(b)))
            .collect();
        format!(
            "code = {}\nname = {}\nscript = {}\ndiacritics = {}\nzwnj = {}\ndominant = {}\ninventory = {}\nunify = {}\n",
            self.code,
            self.name,
            self.script_type,
            self.uses_diacritics,
            self.uses_zwnj,
            dominant.join(", "),
            inventory.join(" "),
            unify.join(", ")
        )
    }
}

macro_rules! builtin_profiles {
    ($($code:literal),* $(,)?) => {
        &[$(($code, include_str!(concat!("../../../data/profiles/", $code, ".profile")))),*]
    };
}

const BUILTIN_PROFILES: &[(&str, &str)] = builtin_profiles!(
    "azb", "glk", "mzn", "pus", "hac", "kmr", "ckb", "sdh", "bal", "brh", "kas", "snd", "skr",
    "trw", "pnb", "fas", "arb", "urd", "uig",
);

/// A validated collection of profiles keyed by language code.
#[derive(Clone, Debug, Default)]
pub struct ProfileSet {
    profiles: BTreeMap<Lang, LanguageProfile>,
}

impl ProfileSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// The shipped profiles of the nineteen supported languages.
    pub fn builtin() -> Self {
        let mut set = ProfileSet::new();
        for (code, src) in BUILTIN_PROFILES {
            let profile = LanguageProfile::parse(src, &format!("builtin:{code}"))
                .expect("shipped profiles are valid");
            set.profiles.insert(profile.code.clone(), profile);
        }
        set
    }

    /// Loads every `*.profile` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = ProfileSet::new();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "profile"))
            .collect();
        paths.sort();
        for path in paths {
            set.insert(LanguageProfile::load(&path)?)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, profile: LanguageProfile) -> Result<()> {
        profile.validate()?;
        self.profiles.insert(profile.code.clone(), profile);
        Ok(())
    }

    pub fn get(&self, code: &Lang) -> Option<&LanguageProfile> {
        self.profiles.get(code)
    }

    pub fn require(&self, code: &Lang) -> Result<&LanguageProfile> {
        self.get(code)
            .ok_or_else(|| Error::UnknownLanguage(code.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &LanguageProfile> {
        self.profiles.values()
    }

    pub fn codes(&self) -> impl Iterator<Item = &Lang> {
        self.profiles.keys()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Languages with no dominant language, i.e. never synthesized as noisy.
    pub fn conventional_only(&self) -> BTreeSet<Lang> {
        self.iter()
            .filter(|p| p.is_conventional_only())
            .map(|p| p.code.clone())
            .collect()
    }
}
