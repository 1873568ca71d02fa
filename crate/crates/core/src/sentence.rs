use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lang::Lang;

/// Percentage of substitutable positions replaced during synthesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NoiseLevel(u8);

impl NoiseLevel {
    pub const CLEAN: NoiseLevel = NoiseLevel(0);

    /// The canonical synthesis grid.
    pub const GRID: [NoiseLevel; 5] = [
        NoiseLevel(20),
        NoiseLevel(40),
        NoiseLevel(60),
        NoiseLevel(80),
        NoiseLevel(100),
    ];

    /// Any percentage in `0..=100`.
    pub fn new(percent: u32) -> Result<Self> {
        if percent <= 100 {
            Ok(NoiseLevel(percent as u8))
        } else {
            Err(Error::InvalidNoiseLevel(percent))
        }
    }

    /// Only `0` or a value on [`NoiseLevel::GRID`].
    pub fn on_grid(percent: u32) -> Result<Self> {
        let level = Self::new(percent)?;
        if level == Self::CLEAN || Self::GRID.contains(&level) {
            Ok(level)
        } else {
            Err(Error::InvalidNoiseLevel(percent))
        }
    }

    pub fn percent(self) -> u32 {
        self.0 as u32
    }

    pub fn is_clean(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for NoiseLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: u32 = s
            .trim()
            .trim_end_matches('%')
            .parse()
            .map_err(|_| Error::Dataset(format!("bad noise level {s:?}")))?;
        NoiseLevel::new(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Corpus,
    Synthetic,
}

/// A labelled sentence. `noise_level` is zero exactly for corpus sentences.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub text: String,
    pub lang: Lang,
    pub noise_level: NoiseLevel,
    pub origin: Origin,
}

impl Sentence {
    pub fn clean(text: impl Into<String>, lang: Lang) -> Self {
        Sentence {
            text: text.into(),
            lang,
            noise_level: NoiseLevel::CLEAN,
            origin: Origin::Corpus,
        }
    }

    pub fn synthetic(text: impl Into<String>, lang: Lang, level: NoiseLevel) -> Self {
        Sentence {
            text: text.into(),
            lang,
            noise_level: level,
            origin: Origin::Synthetic,
        }
    }
}
