//! Corpus preprocessing: markup stripping, numeral and codepoint
//! unification, ZWNJ policy and sentence splitting.
//!
//! Every function is pure and idempotent.

use std::sync::OnceLock;

use regex::{Captures, Regex};

use crate::lang::LanguageProfile;
use crate::sentence::Sentence;

pub const ZWNJ: char = '\u{200C}';

/// Characters that end a sentence when followed by whitespace or end of text.
pub const SENTENCE_DELIMITERS: [char; 6] = ['\u{06D4}', '.', '\u{061F}', '?', '!', '\u{2026}'];

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizeOptions {
    /// Fragments with fewer non-space characters are dropped.
    pub min_sentence_chars: usize,
    /// Drop sentences whose letters fall in the profile inventory less often
    /// than this fraction. `None` disables the filter.
    pub min_inventory_coverage: Option<f64>,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            min_sentence_chars: 3,
            min_inventory_coverage: Some(0.9),
        }
    }
}

struct Patterns {
    control: Regex,
    format: Regex,
    tags: Regex,
    wiki: Regex,
    url: Regex,
    email: Regex,
    phone: Regex,
    space: Regex,
}

fn patterns() -> &'static Patterns {
    static PATTERNS: OnceLock<Patterns> = OnceLock::new();
    PATTERNS.get_or_init(|| Patterns {
        control: Regex::new(r"[\p{Cc}&&[^\t\n\r]]").unwrap(),
        format: Regex::new(r"[\p{Cf}&&[^\x{200C}]]").unwrap(),
        tags: Regex::new(r"</?[A-Za-z][A-Za-z0-9]*(?:\s[^<>]*)?/?>").unwrap(),
        wiki: Regex::new(r"'{2,}|\[\[|\]\]|\{\{|\}\}").unwrap(),
        url: Regex::new(r"(?i)(?:https?|ftp)://\S+|www\.[^\s.]+\.\S+").unwrap(),
        email: Regex::new(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)*\.\w{2,}").unwrap(),
        phone: Regex::new(r"\+?\(?\d+\)?(?:[ .\-]?\(?\d+\)?)+").unwrap(),
        space: Regex::new(r"\s+").unwrap(),
    })
}

fn looks_like_phone(candidate: &str) -> bool {
    let digits = candidate.chars().filter(char::is_ascii_digit).count()
        + candidate.chars().filter(|c| c.to_digit(10).is_none() && c.is_numeric()).count();
    if digits < 7 {
        return false;
    }
    let groups: Vec<&str> = candidate
        .split(|c: char| !c.is_numeric())
        .filter(|g| !g.is_empty())
        .collect();
    candidate.starts_with('+') || groups.len() >= 3 || groups.iter().any(|g| g.chars().count() >= 7)
}

fn strip_once(text: &str) -> String {
    let p = patterns();
    let text = p.control.replace_all(text, " ");
    let text = p.format.replace_all(&text, "");
    let text = p.tags.replace_all(&text, " ");
    let text = p.wiki.replace_all(&text, "");
    let text = p.url.replace_all(&text, " ");
    let text = p.email.replace_all(&text, " ");
    let text = p.phone.replace_all(&text, |c: &Captures| {
        if looks_like_phone(&c[0]) {
            " ".to_string()
        } else {
            c[0].to_string()
        }
    });
    p.space.replace_all(text.trim(), " ").into_owned()
}

/// Removes URLs, e-mail addresses, phone numbers, markup and formatting
/// control characters (ZWNJ excepted), then collapses whitespace.
pub fn strip_markup(raw: &str) -> String {
    let mut current = strip_once(raw);
    // removing one pattern can expose another; iterate to a fixed point
    for _ in 0..8 {
        let next = strip_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

/// Arabic-Indic and Extended Arabic-Indic digits to ASCII digits.
pub fn unify_numerals(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '\u{0660}'..='\u{0669}' => char::from(b'0' + (c as u32 - 0x0660) as u8),
            '\u{06F0}'..='\u{06F9}' => char::from(b'0' + (c as u32 - 0x06F0) as u8),
            _ => c,
        })
        .collect()
}

/// Replaces each variant codepoint of the profile by its canonical form.
pub fn unify_codepoints(text: &str, profile: &LanguageProfile) -> String {
    text.chars()
        .map(|c| {
            profile
                .unification_rules
                .iter()
                .find(|(variant, _)| *variant == c)
                .map_or(c, |&(_, canonical)| canonical)
        })
        .collect()
}

/// Drops ZWNJ for languages that do not use it as an orthographic unit,
/// collapsing any whitespace run the removal leaves behind.
pub fn apply_zwnj_policy(text: &str, profile: &LanguageProfile) -> String {
    if profile.uses_zwnj || !text.contains(ZWNJ) {
        text.to_string()
    } else {
        let stripped: String = text.chars().filter(|&c| c != ZWNJ).collect();
        patterns().space.replace_all(stripped.trim(), " ").into_owned()
    }
}

/// Splits after each delimiter that is followed by whitespace or the end of
/// the text; fragments shorter than `min_chars` non-space characters are dropped.
pub fn sentence_split(text: &str, min_chars: usize) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut flush = |s: &mut String| {
        let trimmed = s.trim();
        if !trimmed.is_empty() && trimmed.chars().filter(|c| !c.is_whitespace()).count() >= min_chars {
            sentences.push(trimmed.to_string());
        }
        s.clear();
    };
    for (i, &c) in chars.iter().enumerate() {
        current.push(c);
        let at_boundary = chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if SENTENCE_DELIMITERS.contains(&c) && at_boundary {
            flush(&mut current);
        }
    }
    flush(&mut current);
    sentences
}

/// Fraction of letters belonging to the profile inventory; `None` when the
/// text has no letters.
pub fn inventory_coverage(text: &str, profile: &LanguageProfile) -> Option<f64> {
    let mut letters = 0usize;
    let mut known = 0usize;
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        letters += 1;
        if profile.inventory.contains(&c) {
            known += 1;
        }
    }
    (letters > 0).then(|| known as f64 / letters as f64)
}

/// The full preprocessing chain, yielding clean corpus sentences.
pub fn normalize_pipeline(raw: &str, profile: &LanguageProfile, opts: &NormalizeOptions) -> Vec<Sentence> {
    let text = strip_markup(raw);
    let text = unify_numerals(&text);
    let text = unify_codepoints(&text, profile);
    let text = apply_zwnj_policy(&text, profile);
    sentence_split(&text, opts.min_sentence_chars)
        .into_iter()
        .filter(|s| match (opts.min_inventory_coverage, inventory_coverage(s, profile)) {
            (Some(min), Some(cov)) => cov >= min,
            _ => true,
        })
        .map(|s| Sentence::clean(s, profile.code.clone()))
        .collect()
}
