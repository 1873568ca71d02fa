//! Train/test splitting, low-resource upsampling and assembly of the
//! CLEAN / NOISY / ALL / MERGED dataset configurations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, RngCore};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lang::{Lang, ProfileSet};
use crate::rng;
use crate::scriptmap::MappingSet;
use crate::sentence::{NoiseLevel, Sentence};
use crate::synth::{corrupt_corpus, DominantChoice};

/// Clean sentences grouped by language.
pub type Corpus = BTreeMap<Lang, Vec<Sentence>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
    Unsplit,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unsplit => "unsplit",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "unsplit" => Ok(Split::Unsplit),
            _ => Err(Error::Dataset(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DatasetMode {
    Clean,
    Noisy(NoiseLevel),
    All,
    Merged,
}

impl fmt::Display for DatasetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetMode::Clean => f.write_str("CLEAN"),
            DatasetMode::Noisy(level) => write!(f, "NOISY{level}"),
            DatasetMode::All => f.write_str("ALL"),
            DatasetMode::Merged => f.write_str("MERGED"),
        }
    }
}

impl FromStr for DatasetMode {
    type Err = Error;

    /// Accepts `CLEAN`, `ALL`, `MERGED`, `NOISY20` and `NOISY(20)`, in any case.
    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        match upper.as_str() {
            "CLEAN" => Ok(DatasetMode::Clean),
            "ALL" => Ok(DatasetMode::All),
            "MERGED" => Ok(DatasetMode::Merged),
            _ => {
                let level = upper
                    .strip_prefix("NOISY")
                    .map(|l| l.trim_start_matches('(').trim_end_matches(')'))
                    .ok_or_else(|| Error::Dataset(format!("unknown dataset mode {s:?}")))?;
                let level: NoiseLevel = level.parse()?;
                if level.is_clean() {
                    return Err(Error::Dataset("NOISY needs a positive level".into()));
                }
                Ok(DatasetMode::Noisy(level))
            }
        }
    }
}

/// Labelled sentences; each sentence's `lang` is its label.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub entries: Vec<Sentence>,
    pub mode: DatasetMode,
    pub split: Split,
}

impl Dataset {
    pub fn new(entries: Vec<Sentence>, mode: DatasetMode, split: Split) -> Self {
        Dataset { entries, mode, split }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> BTreeSet<Lang> {
        self.entries.iter().map(|s| s.lang.clone()).collect()
    }

    pub fn counts_by_lang(&self) -> BTreeMap<Lang, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.entries {
            *counts.entry(s.lang.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|s| s.text.as_str())
    }

    /// Checks labels against `profiles` and the mode's noise constraints.
    pub fn validate(&self, profiles: &ProfileSet) -> Result<()> {
        let conventional = profiles.conventional_only();
        for s in &self.entries {
            profiles.require(&s.lang)?;
            let ok = match self.mode {
                DatasetMode::Clean => s.noise_level.is_clean(),
                DatasetMode::Noisy(level) => s.noise_level == level && !conventional.contains(&s.lang),
                DatasetMode::All => !s.noise_level.is_clean() && !conventional.contains(&s.lang),
                DatasetMode::Merged => true,
            };
            if !ok {
                return Err(Error::Dataset(format!(
                    "{} entry ({}, level {}) not allowed in {}",
                    self.split, s.lang, s.noise_level, self.mode
                )));
            }
        }
        Ok(())
    }

    /// TSV with a `#!` header line, then `label<TAB>level<TAB>text` rows.
    pub fn to_tsv(&self) -> Result<String> {
        let mut out = format!("#! mode={} split={}\n", self.mode, self.split);
        for s in &self.entries {
            if s.text.contains(['\t', '\n', '\r']) {
                return Err(Error::Dataset(format!("sentence text contains a tab or newline: {:?}", s.text)));
            }
            out.push_str(&format!("{}\t{}\t{}\n", s.lang, s.noise_level, s.text));
        }
        Ok(out)
    }

    /// Parses [`Dataset::to_tsv`] output. Files without a header are read as
    /// an unsplit CLEAN dataset.
    pub fn from_tsv(src: &str, context: &str) -> Result<Self> {
        let mut mode = DatasetMode::Clean;
        let mut split = Split::Unsplit;
        let mut entries = Vec::new();
        for (i, line) in src.lines().enumerate() {
            let lineno = i + 1;
            if let Some(header) = line.strip_prefix("#!") {
                for field in header.split_whitespace() {
                    match field.split_once('=') {
                        Some(("mode", v)) => mode = v.parse().map_err(|e: Error| Error::parse(context, lineno, e.to_string()))?,
                        Some(("split", v)) => split = v.parse().map_err(|e: Error| Error::parse(context, lineno, e.to_string()))?,
                        _ => return Err(Error::parse(context, lineno, format!("bad header field {field:?}"))),
                    }
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            let (Some(label), Some(level), Some(text)) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::parse(context, lineno, "expected label, level and text columns"));
            };
            let lang = Lang::new(label).map_err(|e| Error::parse(context, lineno, e.to_string()))?;
            let level: NoiseLevel = level.parse().map_err(|e: Error| Error::parse(context, lineno, e.to_string()))?;
            entries.push(if level.is_clean() {
                Sentence::clean(text, lang)
            } else {
                Sentence::synthetic(text, lang, level)
            });
        }
        Ok(Dataset { entries, mode, split })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&src, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()?).map_err(|e| Error::io(path, e))
    }
}

/// Reads a directory of `<lang>.txt` files, one clean sentence per line.
pub fn read_corpus_dir(dir: &Path) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    for path in paths {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let lang = Lang::new(stem)?;
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        corpus.insert(
            lang.clone(),
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(|l| Sentence::clean(l, lang.clone()))
                .collect(),
        );
    }
    Ok(corpus)
}

/// How a training pool is enlarged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Upsample {
    None,
    /// Every sentence appears exactly `c` times.
    Coefficient(usize),
    /// Whole repetitions of the pool, topped up by a sample without
    /// replacement to exactly `n` sentences.
    ToTarget(usize),
}

pub fn upsample<R: Rng + ?Sized>(pool: &[Sentence], rule: Upsample, rng: &mut R) -> Result<Vec<Sentence>> {
    if pool.is_empty() {
        return Err(Error::Dataset("cannot upsample an empty pool".into()));
    }
    match rule {
        Upsample::None => Ok(pool.to_vec()),
        Upsample::Coefficient(0) => Err(Error::Dataset("upsampling coefficient must be positive".into())),
        Upsample::Coefficient(c) => Ok(pool.iter().cycle().take(c * pool.len()).cloned().collect()),
        Upsample::ToTarget(n) if n < pool.len() => Err(Error::Dataset(format!(
            "upsampling target {n} is smaller than the pool ({})",
            pool.len()
        ))),
        Upsample::ToTarget(n) => {
            let whole = n / pool.len();
            let mut out: Vec<Sentence> = pool.iter().cycle().take(whole * pool.len()).cloned().collect();
            let mut extra = index::sample(rng, pool.len(), n - out.len()).into_vec();
            extra.sort_unstable();
            out.extend(extra.into_iter().map(|i| pool[i].clone()));
            Ok(out)
        }
    }
}

/// A size band with a fixed test reservation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tier {
    /// Applies to languages with fewer than this many sentences.
    pub below: usize,
    pub test: usize,
    pub upsample: Upsample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitPolicy {
    /// Ascending by `below`; the first matching tier wins.
    pub tiers: Vec<Tier>,
    /// Test share for languages above every tier, rounded down.
    pub test_percent: usize,
    /// At most this many sentences per language are used; the rest is kept
    /// as a reserve.
    pub cap: Option<usize>,
    /// Explicit test sizes, required for languages too small for their tier.
    pub test_overrides: BTreeMap<Lang, usize>,
}

impl SplitPolicy {
    /// 500 test sentences and ×4 upsampling below 2000 sentences; 2000 test
    /// and upsampling to 8000 below 10000; otherwise 80/20 of at most 10000.
    pub fn standard() -> Self {
        SplitPolicy {
            tiers: vec![
                Tier {
                    below: 2000,
                    test: 500,
                    upsample: Upsample::Coefficient(4),
                },
                Tier {
                    below: 10_000,
                    test: 2000,
                    upsample: Upsample::ToTarget(8000),
                },
            ],
            test_percent: 20,
            cap: Some(10_000),
            test_overrides: BTreeMap::new(),
        }
    }

    /// [`SplitPolicy::standard`] with every size multiplied by `factor`.
    pub fn scaled(factor: f64) -> Self {
        let s = |n: usize| ((n as f64) * factor).round() as usize;
        let mut policy = Self::standard();
        for tier in &mut policy.tiers {
            tier.below = s(tier.below);
            tier.test = s(tier.test);
            if let Upsample::ToTarget(n) = tier.upsample {
                tier.upsample = Upsample::ToTarget(s(n));
            }
        }
        policy.cap = policy.cap.map(s);
        policy
    }

    /// A plain 80/20 split with no tiers, cap or upsampling.
    pub fn proportional() -> Self {
        SplitPolicy {
            tiers: Vec::new(),
            test_percent: 20,
            cap: None,
            test_overrides: BTreeMap::new(),
        }
    }

    /// `(test, train, reserve)` sizes and the upsampling rule for a
    /// language with `n` sentences.
    pub fn sizes(&self, lang: &Lang, n: usize) -> Result<(usize, usize, usize, Upsample)> {
        if n == 0 {
            return Err(Error::Dataset(format!("language {lang} has no sentences")));
        }
        let tier = self.tiers.iter().find(|t| n < t.below);
        if let Some(&test) = self.test_overrides.get(lang) {
            if test >= n {
                return Err(Error::Dataset(format!(
                    "test size {test} for {lang} leaves no training sentences (has {n})"
                )));
            }
            let used = self.cap.map_or(n, |c| n.min(c.max(test + 1)));
            return Ok((test, used - test, n - used, tier.map_or(Upsample::None, |t| t.upsample)));
        }
        match tier {
            Some(t) => {
                if n <= t.test {
                    return Err(Error::Dataset(format!(
                        "{lang} has {n} sentences, not more than the {} reserved for testing; set an explicit test size",
                        t.test
                    )));
                }
                Ok((t.test, n - t.test, 0, t.upsample))
            }
            None => {
                let used = self.cap.map_or(n, |c| n.min(c));
                let test = used * self.test_percent / 100;
                Ok((test, used - test, n - used, Upsample::None))
            }
        }
    }
}

/// One language's share of a split.
#[derive(Clone, Debug, PartialEq)]
pub struct LangSplit {
    pub test: Vec<Sentence>,
    pub train_pool: Vec<Sentence>,
    /// Sentences beyond the cap, used for nothing but extra clean tranches.
    pub reserve: Vec<Sentence>,
    pub upsample: Upsample,
}

/// Removes repeated strings within a language and strings occurring under
/// more than one label, so no string can land on both sides of a split.
pub fn deduplicate(corpus: &Corpus) -> Corpus {
    let mut owners: HashMap<&str, BTreeSet<&Lang>> = HashMap::new();
    for (lang, sentences) in corpus {
        for s in sentences {
            owners.entry(s.text.as_str()).or_default().insert(lang);
        }
    }
    corpus
        .iter()
        .map(|(lang, sentences)| {
            let mut seen = BTreeSet::new();
            let kept = sentences
                .iter()
                .filter(|s| owners[s.text.as_str()].len() == 1 && seen.insert(s.text.as_str()))
                .cloned()
                .collect();
            (lang.clone(), kept)
        })
        .collect()
}

/// Shuffles each language with its own stream, then cuts test, train and
/// reserve slices according to `policy`.
pub fn split_train_test(corpus: &Corpus, policy: &SplitPolicy, seed: u64) -> Result<BTreeMap<Lang, LangSplit>> {
    let mut out = BTreeMap::new();
    for (lang, sentences) in corpus {
        let (test, train, _, upsample) = policy.sizes(lang, sentences.len())?;
        let mut shuffled = sentences.clone();
        shuffled.shuffle(&mut rng::derived(seed, &format!("split/{lang}"), 0));
        let reserve = shuffled.split_off(test + train);
        let train_pool = shuffled.split_off(test);
        out.insert(
            lang.clone(),
            LangSplit {
                test: shuffled,
                train_pool,
                reserve,
                upsample,
            },
        );
    }
    Ok(out)
}

/// How ALL combines the noise levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AllPolicy {
    /// Every noisy copy at every level.
    Union,
    /// One noisy copy per clean sentence, at a level drawn uniformly.
    OnePerSentence,
}

#[derive(Clone, Debug)]
pub struct AssembleOptions {
    pub levels: Vec<NoiseLevel>,
    pub all_policy: AllPolicy,
    pub seed: u64,
    /// Extra clean sentences appended to MERGED, per language.
    pub extra: BTreeMap<Lang, Vec<Sentence>>,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions {
            levels: NoiseLevel::GRID.to_vec(),
            all_policy: AllPolicy::OnePerSentence,
            seed: 0,
            extra: BTreeMap::new(),
        }
    }
}

fn sort_by_lang(entries: &mut [Sentence]) {
    entries.sort_by(|a, b| a.lang.cmp(&b.lang));
}

fn assemble_all(clean: &Dataset, noisy: &BTreeMap<NoiseLevel, Dataset>, opts: &AssembleOptions) -> Result<Vec<Sentence>> {
    let mut per_level = Vec::new();
    for level in &opts.levels {
        let d = noisy
            .get(level)
            .ok_or_else(|| Error::Dataset(format!("ALL needs noise level {level}, which is missing")))?;
        per_level.push(d);
    }
    if per_level.is_empty() {
        return Err(Error::Dataset("ALL needs at least one noise level".into()));
    }
    let mut entries = match opts.all_policy {
        AllPolicy::Union => per_level.iter().flat_map(|d| d.entries.iter().cloned()).collect::<Vec<_>>(),
        AllPolicy::OnePerSentence => {
            let n = per_level[0].len();
            if per_level.iter().any(|d| d.len() != n) {
                return Err(Error::Dataset("noisy datasets differ in size".into()));
            }
            let domain = format!("all/{}", clean.split);
            (0..n)
                .map(|i| {
                    let pick = rng::derived(opts.seed, &domain, i as u64).gen_range(0..per_level.len());
                    per_level[pick].entries[i].clone()
                })
                .collect()
        }
    };
    sort_by_lang(&mut entries);
    Ok(entries)
}

/// Builds one configuration from a clean dataset and its noisy versions.
pub fn assemble(
    clean: &Dataset,
    noisy: &BTreeMap<NoiseLevel, Dataset>,
    mode: DatasetMode,
    opts: &AssembleOptions,
) -> Result<Dataset> {
    let entries = match mode {
        DatasetMode::Clean => clean.entries.clone(),
        DatasetMode::Noisy(level) => noisy
            .get(&level)
            .ok_or_else(|| Error::Dataset(format!("no noisy dataset at level {level}")))?
            .entries
            .clone(),
        DatasetMode::All => assemble_all(clean, noisy, opts)?,
        DatasetMode::Merged => {
            let mut entries = clean.entries.clone();
            entries.extend(assemble_all(clean, noisy, opts)?);
            for extra in opts.extra.values() {
                entries.extend(extra.iter().cloned());
            }
            sort_by_lang(&mut entries);
            entries
        }
    };
    Ok(Dataset::new(entries, mode, clean.split))
}

/// Per-(mode, split, language, level) sentence counts plus provenance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub seed: u64,
    /// `(name, sha256 hex)` of every input file.
    pub sources: Vec<(String, String)>,
    pub counts: BTreeMap<(DatasetMode, Split, Lang, NoiseLevel), usize>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl DatasetManifest {
    pub fn new(seed: u64, sources: Vec<(String, String)>) -> Self {
        DatasetManifest {
            seed,
            sources,
            counts: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, dataset: &Dataset) {
        for s in &dataset.entries {
            *self
                .counts
                .entry((dataset.mode, dataset.split, s.lang.clone(), s.noise_level))
                .or_insert(0) += 1;
        }
    }

    pub fn total(&self, mode: DatasetMode, split: Split) -> usize {
        self.counts
            .iter()
            .filter(|((m, s, _, _), _)| *m == mode && *s == split)
            .map(|(_, c)| c)
            .sum()
    }

    pub fn lang_total(&self, mode: DatasetMode, split: Split, lang: &Lang) -> usize {
        self.counts
            .iter()
            .filter(|((m, s, l, _), _)| *m == mode && *s == split && l == lang)
            .map(|(_, c)| c)
            .sum()
    }

    /// Recounts `dataset` and compares with the recorded counts.
    pub fn verify(&self, dataset: &Dataset) -> Result<()> {
        let mut fresh = DatasetManifest::default();
        fresh.record(dataset);
        let recorded: BTreeMap<_, _> = self
            .counts
            .iter()
            .filter(|((m, s, _, _), _)| *m == dataset.mode && *s == dataset.split)
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        if recorded != fresh.counts {
            return Err(Error::Dataset(format!(
                "manifest counts do not match the {} {} dataset",
                dataset.mode, dataset.split
            )));
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("#! seed={}\n", self.seed);
        for (name, digest) in &self.sources {
            out.push_str(&format!("#! source {digest} {name}\n"));
        }
        out.push_str("# mode\tsplit\tlang\tlevel\tcount\n");
        for ((mode, split, lang, level), count) in &self.counts {
            out.push_str(&format!("{mode}\t{split}\t{lang}\t{level}\t{count}\n"));
        }
        out
    }

    pub fn from_tsv(src: &str, context: &str) -> Result<Self> {
        let mut manifest = DatasetManifest::default();
        for (i, line) in src.lines().enumerate() {
            let lineno = i + 1;
            let err = |m: String| Error::parse(context, lineno, m);
            if let Some(seed) = line.strip_prefix("#! seed=") {
                manifest.seed = seed.trim().parse().map_err(|_| err(format!("bad seed {seed:?}")))?;
                continue;
            }
            if let Some(rest) = line.strip_prefix("#! source ") {
                let (digest, name) = rest.split_once(' ').ok_or_else(|| err("bad source line".into()))?;
                manifest.sources.push((name.to_string(), digest.to_string()));
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(err(format!("expected 5 columns, got {}", cols.len())));
            }
            let key = (
                cols[0].parse().map_err(|e: Error| err(e.to_string()))?,
                cols[1].parse().map_err(|e: Error| err(e.to_string()))?,
                Lang::new(cols[2]).map_err(|e| err(e.to_string()))?,
                cols[3].parse().map_err(|e: Error| err(e.to_string()))?,
            );
            let count = cols[4].parse().map_err(|_| err(format!("bad count {:?}", cols[4])))?;
            manifest.counts.insert(key, count);
        }
        Ok(manifest)
    }
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub policy: SplitPolicy,
    pub levels: Vec<NoiseLevel>,
    pub seed: u64,
    pub all_policy: AllPolicy,
    pub dominant_choice: DominantChoice,
    /// Drop duplicate and cross-labelled strings before splitting.
    pub deduplicate: bool,
}

impl BuildOptions {
    pub fn new(seed: u64) -> Self {
        BuildOptions {
            policy: SplitPolicy::standard(),
            levels: NoiseLevel::GRID.to_vec(),
            seed,
            all_policy: AllPolicy::OnePerSentence,
            dominant_choice: DominantChoice::Random,
            deduplicate: true,
        }
    }
}

/// Every configuration for both splits.
#[derive(Clone, Debug)]
pub struct Configurations {
    pub train: BTreeMap<DatasetMode, Dataset>,
    pub test: BTreeMap<DatasetMode, Dataset>,
    pub manifest: DatasetManifest,
}

impl Configurations {
    pub fn modes(&self) -> impl Iterator<Item = DatasetMode> + '_ {
        self.train.keys().copied()
    }

    /// Writes `<split>/<MODE>.tsv` files and `manifest.tsv` under `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        for (split, sets) in [(Split::Train, &self.train), (Split::Test, &self.test)] {
            let sub = dir.join(split.to_string());
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            for (mode, d) in sets {
                d.write(&sub.join(format!("{mode}.tsv")))?;
            }
        }
        let path = dir.join("manifest.tsv");
        fs::write(&path, self.manifest.to_tsv()).map_err(|e| Error::io(&path, e))
    }
}

fn noisy_sets(
    clean: &Dataset,
    conventional: &BTreeSet<Lang>,
    tables: &MappingSet,
    opts: &BuildOptions,
    seed: u64,
) -> Result<BTreeMap<NoiseLevel, Dataset>> {
    let source: Vec<Sentence> = clean
        .entries
        .iter()
        .filter(|s| !conventional.contains(&s.lang))
        .cloned()
        .collect();
    let corrupted = corrupt_corpus(&source, tables, &opts.levels, seed, &opts.dominant_choice)?;
    Ok(corrupted
        .into_iter()
        .map(|(level, entries)| (level, Dataset::new(entries, DatasetMode::Noisy(level), clean.split)))
        .collect())
}

/// Splits, upsamples, corrupts and assembles every configuration.
///
/// Noisy test sets use a seed independent of the training seed stream.
/// MERGED adds, for each conventional-only language, as many extra clean
/// sentences as its CLEAN count, taken from the reserve beyond the cap; a
/// short reserve is topped up from the training pool on the train side
/// only, so test sets never contain duplicates.
pub fn build_configurations(
    corpus: &Corpus,
    profiles: &ProfileSet,
    tables: &MappingSet,
    opts: &BuildOptions,
    sources: Vec<(String, String)>,
) -> Result<Configurations> {
    for lang in corpus.keys() {
        profiles.require(lang)?;
    }
    let conventional = profiles.conventional_only();
    let corpus = if opts.deduplicate {
        deduplicate(corpus)
    } else {
        corpus.clone()
    };
    let splits = split_train_test(&corpus, &opts.policy, opts.seed)?;

    let mut train_clean = Vec::new();
    let mut test_clean = Vec::new();
    let mut extra_train = BTreeMap::new();
    let mut extra_test = BTreeMap::new();
    for (lang, split) in &splits {
        let mut rng = rng::derived(opts.seed, &format!("upsample/{lang}"), 0);
        let train = upsample(&split.train_pool, split.upsample, &mut rng)?;
        if conventional.contains(lang) {
            let mut reserve = split.reserve.clone();
            let rest = reserve.split_off(split.test.len().min(reserve.len()));
            extra_test.insert(lang.clone(), reserve);
            let mut extra: Vec<Sentence> = rest.into_iter().take(train.len()).collect();
            let missing = train.len() - extra.len();
            extra.extend(train.iter().cycle().take(missing).cloned());
            extra_train.insert(lang.clone(), extra);
        }
        train_clean.extend(train);
        test_clean.extend(split.test.iter().cloned());
    }

    let test_seed = rng::derived(opts.seed, "test-noise", 0).next_u64();
    let mut configs = Configurations {
        train: BTreeMap::new(),
        test: BTreeMap::new(),
        manifest: DatasetManifest::new(opts.seed, sources),
    };
    for (split, clean, extra, seed) in [
        (Split::Train, train_clean, extra_train, opts.seed),
        (Split::Test, test_clean, extra_test, test_seed),
    ] {
        let clean = Dataset::new(clean, DatasetMode::Clean, split);
        let noisy = noisy_sets(&clean, &conventional, tables, opts, seed)?;
        let assemble_opts = AssembleOptions {
            levels: opts.levels.clone(),
            all_policy: opts.all_policy,
            seed,
            extra,
        };
        let mut modes = vec![DatasetMode::Clean];
        modes.extend(opts.levels.iter().map(|&l| DatasetMode::Noisy(l)));
        if !opts.levels.is_empty() {
            modes.extend([DatasetMode::All, DatasetMode::Merged]);
        }
        let target = match split {
            Split::Train => &mut configs.train,
            _ => &mut configs.test,
        };
        for mode in modes {
            let d = assemble(&clean, &noisy, mode, &assemble_opts)?;
            configs.manifest.record(&d);
            target.insert(mode, d);
        }
    }
    Ok(configs)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn lang(s: &str) -> Lang {
        Lang::new(s).unwrap()
    }

    fn sentences(code: &str, n: usize) -> Vec<Sentence> {
        (0..n).map(|i| Sentence::clean(format!("{code} {i}"), lang(code))).collect()
    }

    #[test]
    fn mode_names_round_trip() {
        let modes = [
            DatasetMode::Clean,
            DatasetMode::Noisy(NoiseLevel::new(20).unwrap()),
            DatasetMode::All,
            DatasetMode::Merged,
        ];
        let names: Vec<String> = modes.iter().map(ToString::to_string).collect();
        assert_eq!(names, ["CLEAN", "NOISY20", "ALL", "MERGED"]);
        for m in modes {
            assert_eq!(m.to_string().parse::<DatasetMode>().unwrap(), m);
        }
        assert_eq!("noisy(60)".parse::<DatasetMode>().unwrap(), DatasetMode::Noisy(NoiseLevel::new(60).unwrap()));
        assert!("NOISY0".parse::<DatasetMode>().is_err());
        assert!("DIRTY".parse::<DatasetMode>().is_err());
    }

    #[test]
    fn tier_sizes() {
        let p = SplitPolicy::standard();
        assert_eq!(p.sizes(&lang("brh"), 549).unwrap(), (500, 49, 0, Upsample::Coefficient(4)));
        assert_eq!(p.sizes(&lang("kas"), 6340).unwrap(), (2000, 4340, 0, Upsample::ToTarget(8000)));
        assert_eq!(p.sizes(&lang("ckb"), 10_000).unwrap(), (2000, 8000, 0, Upsample::None));
        assert_eq!(p.sizes(&lang("fas"), 25_000).unwrap(), (2000, 8000, 15_000, Upsample::None));
        assert!(p.sizes(&lang("brh"), 500).is_err());
        assert!(p.sizes(&lang("brh"), 0).is_err());
        let mut p = SplitPolicy::standard();
        p.test_overrides.insert(lang("brh"), 100);
        assert_eq!(p.sizes(&lang("brh"), 500).unwrap(), (100, 400, 0, Upsample::Coefficient(4)));
        assert_eq!(SplitPolicy::proportional().sizes(&lang("ckb"), 99).unwrap().0, 19);
    }

    #[test]
    fn upsampling_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pool = sentences("brh", 49);
        assert_eq!(upsample(&pool, Upsample::Coefficient(4), &mut rng).unwrap().len(), 196);
        assert_eq!(upsample(&pool, Upsample::Coefficient(1), &mut rng).unwrap(), pool);
        let pool = sentences("kas", 4340);
        let out = upsample(&pool, Upsample::ToTarget(8000), &mut rng).unwrap();
        assert_eq!(out.len(), 8000);
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in &out {
            *counts.entry(&s.text).or_default() += 1;
        }
        assert_eq!(counts.len(), 4340);
        assert!(counts.values().all(|&c| c == 1 || c == 2));
        assert!(upsample(&pool, Upsample::ToTarget(100), &mut rng).is_err());
        assert!(upsample(&[], Upsample::Coefficient(2), &mut rng).is_err());
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let mut corpus = Corpus::new();
        corpus.insert(lang("brh"), sentences("brh", 549));
        corpus.insert(lang("kas"), sentences("kas", 6340));
        let a = split_train_test(&corpus, &SplitPolicy::standard(), 5).unwrap();
        assert_eq!(a, split_train_test(&corpus, &SplitPolicy::standard(), 5).unwrap());
        assert_ne!(a, split_train_test(&corpus, &SplitPolicy::standard(), 6).unwrap());
        for s in a.values() {
            let test: BTreeSet<&str> = s.test.iter().map(|s| s.text.as_str()).collect();
            assert!(s.train_pool.iter().all(|t| !test.contains(t.text.as_str())));
        }
        assert_eq!(a[&lang("brh")].test.len(), 500);
        assert_eq!(a[&lang("kas")].train_pool.len(), 4340);
    }

    #[test]
    fn dedup_drops_repeats_and_shared_strings() {
        let mut corpus = Corpus::new();
        corpus.insert(lang("ckb"), vec![
            Sentence::clean("a", lang("ckb")),
            Sentence::clean("a", lang("ckb")),
            Sentence::clean("b", lang("ckb")),
        ]);
        corpus.insert(lang("kmr"), vec![Sentence::clean("b", lang("kmr")), Sentence::clean("c", lang("kmr"))]);
        let d = deduplicate(&corpus);
        assert_eq!(d[&lang("ckb")].len(), 1);
        assert_eq!(d[&lang("kmr")].len(), 1);
    }

    #[test]
    fn assemble_counts() {
        let clean = Dataset::new(sentences("ckb", 100), DatasetMode::Clean, Split::Train);
        let noisy: BTreeMap<NoiseLevel, Dataset> = NoiseLevel::GRID
            .iter()
            .map(|&l| {
                let entries = clean
                    .entries
                    .iter()
                    .map(|s| Sentence::synthetic(format!("{} n{l}", s.text), s.lang.clone(), l))
                    .collect();
                (l, Dataset::new(entries, DatasetMode::Noisy(l), Split::Train))
            })
            .collect();
        let union = AssembleOptions {
            all_policy: AllPolicy::Union,
            ..Default::default()
        };
        assert_eq!(assemble(&clean, &noisy, DatasetMode::All, &union).unwrap().len(), 500);
        let one = AssembleOptions::default();
        let all = assemble(&clean, &noisy, DatasetMode::All, &one).unwrap();
        assert_eq!(all.len(), 100);
        assert!(all.entries.iter().all(|s| !s.noise_level.is_clean()));
        assert_eq!(assemble(&clean, &noisy, DatasetMode::Merged, &one).unwrap().len(), 200);

        let mut partial = noisy.clone();
        partial.remove(&NoiseLevel::new(60).unwrap());
        assert!(assemble(&clean, &partial, DatasetMode::All, &one).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let mut entries = sentences("ckb", 3);
        entries.push(Sentence::synthetic("x y", lang("kmr"), NoiseLevel::new(40).unwrap()));
        let d = Dataset::new(entries, DatasetMode::Merged, Split::Test);
        let back = Dataset::from_tsv(&d.to_tsv().unwrap(), "t").unwrap();
        assert_eq!(back, d);
        let bad = Dataset::new(vec![Sentence::clean("a\tb", lang("ckb"))], DatasetMode::Clean, Split::Test);
        assert!(bad.to_tsv().is_err());
        assert!(matches!(Dataset::from_tsv("ckb\t0\tok\nckb\tx\n", "t"), Err(Error::Parse { line: 2, .. })));
    }

    fn small_corpus() -> Corpus {
        let mut corpus = Corpus::new();
        // letters shared by the Kurdish profiles and mapped by their tables
        let words = ["\u{06D5}\u{0628}", "\u{06B5}\u{0627}", "\u{06CE}\u{0631}", "\u{0695}\u{06C6}"];
        for code in ["ckb", "kmr", "fas"] {
            let entries = (0..60)
                .map(|i| {
                    let text = format!("{} {} {} {i}", words[i % 4], words[(i / 4) % 4], code);
                    Sentence::clean(text, lang(code))
                })
                .collect();
            corpus.insert(lang(code), entries);
        }
        corpus
    }

    #[test]
    fn build_invariants() {
        let corpus = small_corpus();
        let mut opts = BuildOptions::new(3);
        opts.policy = SplitPolicy::proportional();
        opts.policy.cap = Some(40);
        let profiles = ProfileSet::builtin();
        let configs = build_configurations(&corpus, &profiles, &MappingSet::builtin(), &opts, vec![]).unwrap();
        assert_eq!(configs.train.len(), 8);
        let fas = lang("fas");
        for sets in [&configs.train, &configs.test] {
            for d in sets.values() {
                d.validate(&profiles).unwrap();
                configs.manifest.verify(d).unwrap();
            }
            let clean = sets[&DatasetMode::Clean].counts_by_lang();
            let merged = sets[&DatasetMode::Merged].counts_by_lang();
            for (l, n) in &clean {
                assert_eq!(merged[l], 2 * n, "{l}");
            }
            assert!(!sets[&DatasetMode::All].labels().contains(&fas));
        }
        // test sets are duplicate-free (a noisy copy left unchanged by a
        // zero substitution count is a distinct entry)
        for d in configs.test.values() {
            let texts: BTreeSet<(&str, NoiseLevel)> = d.entries.iter().map(|s| (s.text.as_str(), s.noise_level)).collect();
            assert_eq!(texts.len(), d.len(), "{}", d.mode);
        }
        let train: BTreeSet<&str> = configs.train[&DatasetMode::Clean].texts().collect();
        assert!(configs.test[&DatasetMode::Clean].texts().all(|t| !train.contains(t)));
        let tsv = configs.manifest.to_tsv();
        assert_eq!(DatasetManifest::from_tsv(&tsv, "m").unwrap(), configs.manifest);
    }

    proptest! {
        #[test]
        fn coefficient_upsampling_repeats_each_sentence(n in 1usize..50, c in 1usize..6) {
            let pool = sentences("ckb", n);
            let out = upsample(&pool, Upsample::Coefficient(c), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            prop_assert_eq!(out.len(), n * c);
            for s in &pool {
                prop_assert_eq!(out.iter().filter(|o| o.text == s.text).count(), c);
            }
        }

        #[test]
        fn target_upsampling_is_exact(n in 1usize..40, extra in 0usize..100, seed in any::<u64>()) {
            let pool = sentences("ckb", n);
            let target = n + extra;
            let out = upsample(&pool, Upsample::ToTarget(target), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(out.len(), target);
            let whole = target / n;
            for s in &pool {
                let c = out.iter().filter(|o| o.text == s.text).count();
                prop_assert!(c == whole || c == whole + 1);
            }
        }
    }
}
