use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::CommandFactory;

use persolid::dataset::{
    build_configurations, read_corpus_dir, sha256_hex, AllPolicy, BuildOptions, Dataset, DatasetMode, SplitPolicy,
};
use persolid::eval::{benchmark, ExternalPredictor, Predictor, ReportFormat};
use persolid::hier::{build_confusion, detect_clusters, hierarchical_from_root, ClusterSet, ClusterSource, ConfusionMatrix};
use persolid::models::{
    load_model, save_model, AnyModel, Classifier, ClassifierModel, Model, ModelKind, SubwordLoss, TrainParams,
};
use persolid::normalize::{normalize_pipeline, strip_markup, unify_numerals, NormalizeOptions};
use persolid::synth::{corrupt_corpus, DominantChoice, NoiseSpec};
use persolid::{Lang, MappingSet, NgramSpec, ProfileSet, Scalar, Sentence};

use crate::{
    AllPolicyArg, AssembleArgs, BenchmarkArgs, Cli, ClustersArgs, Command, HyperArgs, IdentifyArgs, KindArg, LossArg,
    NormalizeArgs, PrecisionArg, SynthesizeArgs, TrainArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config_dir.as_deref();
    match cli.command {
        Command::Normalize(a) => normalize(config, a),
        Command::Synthesize(a) => synthesize(config, a),
        Command::Assemble(a) => assemble(config, a),
        Command::Train(a) => train(a),
        Command::Identify(a) => identify(a),
        Command::Benchmark(a) => run_benchmark(a),
        Command::Clusters(a) => clusters(a),
    }
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn load_profiles(config: Option<&Path>) -> Result<ProfileSet> {
    match config {
        None => Ok(ProfileSet::builtin()),
        Some(dir) => {
            let dir = dir.join("profiles");
            ProfileSet::load_dir(&dir).with_context(|| format!("loading profiles from {}", dir.display()))
        }
    }
}

fn load_tables(config: Option<&Path>, profiles: &ProfileSet) -> Result<MappingSet> {
    match config {
        None => Ok(MappingSet::builtin()),
        Some(dir) => {
            let dir = dir.join("mappings");
            MappingSet::load_dir(&dir, profiles).with_context(|| format!("loading mapping tables from {}", dir.display()))
        }
    }
}

/// `*.txt` files in `dir`, sorted, with their language codes.
fn lang_files(dir: &Path) -> Result<Vec<(Lang, PathBuf)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let lang = Lang::new(stem).with_context(|| format!("{}: file name is not a language code", p.display()))?;
            Ok((lang, p))
        })
        .collect()
}

fn write_lines(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.text);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn normalize(config: Option<&Path>, a: NormalizeArgs) -> Result<()> {
    let profiles = load_profiles(config)?;
    let opts = NormalizeOptions {
        min_sentence_chars: a.min_chars,
        min_inventory_coverage: (a.min_coverage > 0.0).then_some(a.min_coverage),
    };
    let files = lang_files(&a.input)?;
    // check every file before writing anything
    for (lang, path) in &files {
        profiles
            .require(lang)
            .with_context(|| format!("{}: no profile for language {lang}", path.display()))?;
    }
    create_dir(&a.output)?;
    let mut manifest = String::from("file\tsha256\tsentences\n");
    for (lang, path) in &files {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let raw = String::from_utf8_lossy(&bytes);
        let sentences = normalize_pipeline(&raw, profiles.require(lang)?, &opts);
        if sentences.is_empty() {
            warn(format!("{}: no sentences", path.display()));
        }
        write_lines(&a.output.join(format!("{lang}.txt")), &sentences)?;
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        manifest.push_str(&format!("{name}\t{}\t{}\n", sha256_hex(&bytes), sentences.len()));
    }
    let path = a.output.join("manifest.tsv");
    fs::write(&path, manifest).with_context(|| format!("writing {}", path.display()))
}

fn synthesize(config: Option<&Path>, a: SynthesizeArgs) -> Result<()> {
    let profiles = load_profiles(config)?;
    let tables = load_tables(config, &profiles)?;
    let specs = a
        .levels
        .iter()
        .map(|&l| if a.allow_any_level { NoiseSpec::any_level(l, a.seed) } else { NoiseSpec::new(l, a.seed) })
        .collect::<persolid::Result<Vec<_>>>();
    let specs = match specs {
        Ok(s) => s,
        Err(e) => Cli::command()
            .error(
                ErrorKind::ValueValidation,
                format!("{e}; levels must be 20, 40, 60, 80 or 100 unless --allow-any-level is given"),
            )
            .exit(),
    };
    let levels: Vec<_> = specs.iter().map(|s| s.level).collect();
    let choice = match &a.dominant {
        Some(code) => DominantChoice::Fixed(Lang::new(code)?),
        None => DominantChoice::Random,
    };
    let corpus = read_corpus_dir(&a.input)?;
    let conventional = profiles.conventional_only();
    for level in &levels {
        create_dir(&a.output.join(level.percent().to_string()))?;
    }
    for (lang, sentences) in &corpus {
        if conventional.contains(lang) {
            warn(format!("{lang} is only written conventionally; skipped"));
            continue;
        }
        let noisy = corrupt_corpus(sentences, &tables, &levels, a.seed, &choice).with_context(|| format!("corrupting {lang}"))?;
        for (level, out) in noisy {
            write_lines(&a.output.join(level.percent().to_string()).join(format!("{lang}.txt")), &out)?;
        }
    }
    Ok(())
}

fn assemble(config: Option<&Path>, a: AssembleArgs) -> Result<()> {
    let profiles = load_profiles(config)?;
    let tables = load_tables(config, &profiles)?;
    if !(a.scale.is_finite() && a.scale > 0.0) {
        bail!("--scale must be positive");
    }
    let corpus = read_corpus_dir(&a.input)?;
    if corpus.is_empty() {
        bail!("{}: no <lang>.txt files", a.input.display());
    }
    let mut sources = Vec::new();
    for (_, path) in lang_files(&a.input)? {
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        sources.push((path.file_name().unwrap_or_default().to_string_lossy().into_owned(), sha256_hex(&bytes)));
    }
    let opts = BuildOptions {
        policy: if a.scale == 1.0 { SplitPolicy::standard() } else { SplitPolicy::scaled(a.scale) },
        all_policy: match a.all {
            AllPolicyArg::One => AllPolicy::OnePerSentence,
            AllPolicyArg::Union => AllPolicy::Union,
        },
        deduplicate: !a.keep_duplicates,
        ..BuildOptions::new(a.seed)
    };
    let configs = build_configurations(&corpus, &profiles, &tables, &opts, sources)?;
    create_dir(&a.output)?;
    configs.write_dir(&a.output)?;
    for (mode, d) in &configs.train {
        eprintln!("{mode}: {} train, {} test", d.len(), configs.test[mode].len());
    }
    Ok(())
}

fn parse_ngrams(range: &str, base: NgramSpec) -> Result<NgramSpec> {
    let (lo, hi) = range.split_once('-').unwrap_or((range, range));
    let lo: usize = lo.trim().parse().with_context(|| format!("bad n-gram range {range:?}"))?;
    let hi: usize = hi.trim().parse().with_context(|| format!("bad n-gram range {range:?}"))?;
    Ok(NgramSpec::new(lo, hi, base.use_word_boundaries, base.hash_buckets)?)
}

/// The kind's defaults with the given overrides; flags that do not apply
/// to the kind are rejected rather than ignored.
fn train_params(kind: ModelKind, seed: u64, h: &HyperArgs) -> Result<TrainParams> {
    let reject = |flag: &str, set: bool| -> Result<()> {
        if set {
            bail!("--{flag} does not apply to {kind} models");
        }
        Ok(())
    };
    let positive = |flag: &str, v: Option<f64>| -> Result<()> {
        match v {
            Some(x) if !(x.is_finite() && x > 0.0) => bail!("--{flag} must be positive"),
            _ => Ok(()),
        }
    };
    positive("lr", h.lr)?;
    for (flag, v) in [("dim", h.dim), ("epochs", h.epochs), ("hidden", h.hidden), ("batch-size", h.batch_size)] {
        positive(flag, v.map(|v| v as f64))?;
    }
    let mut params = TrainParams::default_for(kind, seed);
    match &mut params {
        TrainParams::Mnb { spec } => {
            reject("dim", h.dim.is_some())?;
            reject("lr", h.lr.is_some())?;
            reject("epochs", h.epochs.is_some())?;
            reject("loss", h.loss.is_some())?;
            reject("hidden", h.hidden.is_some())?;
            reject("batch-size", h.batch_size.is_some())?;
            if let Some(r) = &h.ngrams {
                *spec = parse_ngrams(r, *spec)?;
            }
        }
        TrainParams::Mlp(p) => {
            reject("dim", h.dim.is_some())?;
            reject("loss", h.loss.is_some())?;
            p.learning_rate = h.lr.unwrap_or(p.learning_rate);
            p.max_iter = h.epochs.unwrap_or(p.max_iter);
            p.hidden = h.hidden.unwrap_or(p.hidden);
            p.batch_size = h.batch_size.unwrap_or(p.batch_size);
            if let Some(r) = &h.ngrams {
                p.spec = parse_ngrams(r, p.spec)?;
            }
        }
        TrainParams::Subword(p) => {
            reject("hidden", h.hidden.is_some())?;
            reject("batch-size", h.batch_size.is_some())?;
            p.dim = h.dim.unwrap_or(p.dim);
            p.learning_rate = h.lr.unwrap_or(p.learning_rate);
            p.epochs = h.epochs.unwrap_or(p.epochs);
            if let Some(loss) = h.loss {
                p.loss = match loss {
                    LossArg::Softmax => SubwordLoss::Softmax,
                    LossArg::Hs => SubwordLoss::Hierarchical,
                };
            }
            if let Some(r) = &h.ngrams {
                p.spec = parse_ngrams(r, p.spec)?;
            }
        }
    }
    Ok(params)
}

fn model_kind(k: KindArg) -> Result<ModelKind> {
    match k {
        KindArg::Mnb => Ok(ModelKind::Mnb),
        KindArg::Mlp => Ok(ModelKind::Mlp),
        KindArg::Subword => Ok(ModelKind::Subword),
        KindArg::Hierarchical => bail!("a hierarchical model cannot be the base of another"),
    }
}

fn build_model<T: Scalar>(a: &TrainArgs, data: &[Sentence]) -> Result<Model<T>> {
    if a.kind != KindArg::Hierarchical {
        let params = train_params(model_kind(a.kind)?, a.seed, &a.hyper)?;
        return Ok(Model::Flat(ClassifierModel::train(data, &params)?));
    }
    let params = train_params(model_kind(a.base)?, a.seed, &a.hyper)?;
    let root = ClassifierModel::<T>::train(data, &params)?;
    let source = match a.clusters.as_str() {
        "auto" => ClusterSource::Auto { tau: a.tau },
        "reference" => ClusterSource::Fixed(ClusterSet::reference()),
        path => ClusterSource::Fixed(ClusterSet::load(Path::new(path), root.labels())?),
    };
    let model = hierarchical_from_root(root, data, &source, &params)?;
    eprintln!("clusters: {}", model.clusters());
    Ok(Model::Hierarchical(model))
}

fn train(a: TrainArgs) -> Result<()> {
    let dataset = Dataset::read(&a.data)?;
    if dataset.is_empty() {
        bail!("{}: dataset is empty", a.data.display());
    }
    match a.precision {
        PrecisionArg::F32 => save_model(&build_model::<f32>(&a, &dataset.entries)?, &a.output)?,
        PrecisionArg::F64 => save_model(&build_model::<f64>(&a, &dataset.entries)?, &a.output)?,
    }
    Ok(())
}

/// What a line goes through before it reaches a model: markup and
/// control characters removed, digits unified, whitespace collapsed.
fn clean_line(line: &str) -> String {
    let text = unify_numerals(&strip_markup(line));
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn identify(a: IdentifyArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let mut bytes = Vec::new();
    match &a.input {
        Some(path) => bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?,
        None => {
            io::stdin().read_to_end(&mut bytes).context("reading standard input")?;
        }
    }
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    if bytes.is_empty() {
        return Ok(());
    }
    let body = bytes.strip_suffix(b"\n").unwrap_or(&bytes);
    for raw in body.split(|&b| b == b'\n') {
        let line = String::from_utf8_lossy(raw);
        let p = model.predict(&clean_line(&line));
        writeln!(out, "{}\t{:.6}", p.label, p.probability)?;
    }
    out.flush()?;
    Ok(())
}

fn name_value<'a>(spec: &'a str, flag: &str) -> Result<(&'a str, &'a str)> {
    spec.split_once('=')
        .filter(|(n, v)| !n.is_empty() && !v.is_empty())
        .ok_or_else(|| anyhow!("--{flag} expects NAME=VALUE, got {spec:?}"))
}

fn run_benchmark(a: BenchmarkArgs) -> Result<()> {
    let format: ReportFormat = a.format.parse()?;
    let mut owned: Vec<(String, Box<dyn Predictor>)> = Vec::new();
    for spec in &a.models {
        let (name, path) = name_value(spec, "model")?;
        let model: AnyModel = load_model(Path::new(path))?;
        owned.push((name.to_string(), Box::new(model)));
    }
    for spec in &a.externals {
        let (name, command) = name_value(spec, "external")?;
        let mut words = command.split_whitespace();
        let program = words.next().ok_or_else(|| anyhow!("--external {name}: empty command"))?;
        owned.push((name.to_string(), Box::new(ExternalPredictor::new(program, words.map(String::from).collect()))));
    }
    if owned.is_empty() {
        bail!("nothing to benchmark; give --model or --external");
    }
    let modes: Vec<DatasetMode> = if a.modes.is_empty() {
        let mut found: Vec<DatasetMode> = fs::read_dir(&a.data)
            .with_context(|| format!("reading {}", a.data.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
            .filter_map(|p| p.file_stem()?.to_str()?.parse().ok())
            .collect();
        found.sort();
        found
    } else {
        a.modes.iter().map(|m| m.parse()).collect::<persolid::Result<_>>()?
    };
    if modes.is_empty() {
        bail!("{}: no <MODE>.tsv test files", a.data.display());
    }
    let mut datasets = BTreeMap::new();
    for &mode in &modes {
        datasets.insert(mode, Dataset::read(&a.data.join(format!("{mode}.tsv")))?);
    }
    let index_of = |name: &str| {
        owned
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| anyhow!("--pair names unknown model {name:?}"))
    };
    let pair = match a.pair.as_slice() {
        [] => None,
        [root, hier] => Some((index_of(root)?, index_of(hier)?)),
        _ => bail!("--pair expects two model names"),
    };
    let predictors: Vec<(&str, &dyn Predictor)> = owned.iter().map(|(n, p)| (n.as_str(), p.as_ref())).collect();
    let result = benchmark(&predictors, &datasets, &modes, pair, a.alpha)?;

    create_dir(&a.output)?;
    let ext = match format {
        ReportFormat::Tsv => "tsv",
        ReportFormat::Text => "txt",
    };
    let mut tables = vec![("summary", result.summary(format)), ("per_language", result.per_language(format))];
    if pair.is_some() {
        tables.push(("significance", result.significance_table(format)));
    }
    for (name, body) in tables {
        let path = a.output.join(format!("{name}.{ext}"));
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", result.to_text());
    Ok(())
}

fn root_confusion<T: Scalar>(model: &Model<T>, data: &[Sentence]) -> persolid::Result<ConfusionMatrix> {
    match model {
        Model::Flat(m) => build_confusion(m, data),
        Model::Hierarchical(h) => build_confusion(h.root(), data),
    }
}

fn clusters(a: ClustersArgs) -> Result<()> {
    if !(a.tau.is_finite() && a.tau > 0.0) {
        bail!("--tau must be positive");
    }
    let cm = match (&a.model, &a.confusion) {
        (Some(model), _) => {
            let data = a.data.as_ref().ok_or_else(|| anyhow!("--model needs --data"))?;
            let dataset = Dataset::read(data)?;
            match load_model(model)? {
                AnyModel::F32(m) => root_confusion(&m, &dataset.entries)?,
                AnyModel::F64(m) => root_confusion(&m, &dataset.entries)?,
            }
        }
        (None, Some(path)) => {
            let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ConfusionMatrix::from_tsv(&src, &path.display().to_string())?
        }
        (None, None) => bail!("give --model and --data, or --confusion"),
    };
    if let Some(path) = &a.write_confusion {
        fs::write(path, cm.to_tsv()).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", detect_clusters(&cm, a.tau).to_config_string());
    Ok(())
}
