//! Precision/recall/F1 scoring, the one-tailed Z-test between a root and a
//! hierarchical model, and benchmark tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::thread;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{Dataset, DatasetMode};
use crate::error::{Error, Result};
use crate::hier::ConfusionMatrix;
use crate::lang::Lang;
use crate::models::Classifier;

/// Default significance level of [`significance_test`].
pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold occurrences.
    pub support: u64,
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    /// Every label seen in gold or predictions.
    pub classes: BTreeMap<Lang, ClassScores>,
    /// Unweighted means over the classes present in gold.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    pub n: u64,
    pub mode: Option<DatasetMode>,
}

impl EvaluationReport {
    pub fn with_mode(mut self, mode: DatasetMode) -> Self {
        self.mode = Some(mode);
        self
    }

    /// Classes with gold support, i.e. those the macro averages run over.
    pub fn gold_classes(&self) -> impl Iterator<Item = (&Lang, &ClassScores)> {
        self.classes.iter().filter(|(_, s)| s.support > 0)
    }
}

pub fn score(predictions: &[Lang], gold: &[Lang]) -> Result<EvaluationReport> {
    if predictions.len() != gold.len() {
        return Err(Error::Evaluation(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Evaluation("nothing to score".into()));
    }
    let labels: Vec<Lang> = predictions
        .iter()
        .chain(gold)
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut cm = ConfusionMatrix::new(labels.clone());
    let idx = |l: &Lang| labels.binary_search(l).expect("label collected above");
    for (p, g) in predictions.iter().zip(gold) {
        cm.add(idx(p), idx(g), 1);
    }
    let mut classes = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        let tp = cm.get(i, i) as f64;
        let predicted = cm.row_sum(i);
        let support = cm.column_sum(i);
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if support == 0 { 0.0 } else { tp / support as f64 };
        classes.insert(
            label.clone(),
            ClassScores {
                precision,
                recall,
                f1: f1(precision, recall),
                support,
            },
        );
    }
    let gold_scores: Vec<&ClassScores> = classes.values().filter(|s| s.support > 0).collect();
    let k = gold_scores.len() as f64;
    let mean = |f: fn(&ClassScores) -> f64| gold_scores.iter().map(|s| f(s)).sum::<f64>() / k;
    Ok(EvaluationReport {
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        classes,
        n: cm.total(),
        confusion: cm,
        mode: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignificanceResult {
    pub f_root: f64,
    pub f_hier: f64,
    pub delta: f64,
    pub n: u64,
    pub alpha: f64,
    /// Upper bound of the one-tailed `1 − alpha` interval around `f_root`.
    pub upper_bound: f64,
    pub significant: bool,
}

/// One-tailed Z-test: the hierarchical score is a significant improvement
/// when it lies strictly above `f_root + z(1−alpha)·sqrt(f_root(1−f_root)/n)`.
pub fn significance_test(f_root: f64, f_hier: f64, n: u64, alpha: f64) -> Result<SignificanceResult> {
    for f in [f_root, f_hier] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Evaluation(format!("score {f} is outside [0, 1]")));
        }
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Evaluation(format!("alpha {alpha} is outside (0, 1)")));
    }
    if n <= 30 {
        return Err(Error::Evaluation(format!(
            "the normal approximation needs more than 30 samples, got {n}"
        )));
    }
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - alpha);
    let upper_bound = f_root + z * (f_root * (1.0 - f_root) / n as f64).sqrt();
    Ok(SignificanceResult {
        f_root,
        f_hier,
        delta: f_hier - f_root,
        n,
        alpha,
        upper_bound,
        significant: f_hier > upper_bound,
    })
}

/// Labels a batch of sentences.
pub trait Predictor {
    fn predict_labels(&self, texts: &[&str]) -> Result<Vec<Lang>>;
}

impl<C: Classifier + ?Sized> Predictor for C {
    fn predict_labels(&self, texts: &[&str]) -> Result<Vec<Lang>> {
        Ok(texts.iter().map(|t| self.predict(t).label).collect())
    }
}

/// Runs an external identifier as a subprocess speaking a line protocol:
/// one sentence per stdin line, one language code per stdout line. Codes
/// that are not valid labels, or `und`, count as abstentions.
#[derive(Clone, Debug)]
pub struct ExternalPredictor {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalPredictor {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        ExternalPredictor {
            program: program.into(),
            args,
        }
    }
}

impl Predictor for ExternalPredictor {
    fn predict_labels(&self, texts: &[&str]) -> Result<Vec<Lang>> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::External(format!("cannot start {}: {e}", self.program)))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let input: String = texts.iter().map(|t| format!("{}\n", t.replace(['\n', '\r'], " "))).collect();
        // feed stdin from a separate thread so a chatty child cannot deadlock us
        let writer = thread::spawn(move || stdin.write_all(input.as_bytes()));
        let stdout = child.stdout.take().expect("piped stdout");
        let lines = BufReader::new(stdout)
            .lines()
            .collect::<std::io::Result<Vec<String>>>()
            .map_err(|e| Error::External(format!("reading from {}: {e}", self.program)))?;
        let status = child
            .wait()
            .map_err(|e| Error::External(format!("waiting for {}: {e}", self.program)))?;
        // a child that exits without reading everything closes the pipe;
        // the exit status and the line count decide the outcome
        let _ = writer.join();
        if !status.success() {
            return Err(Error::External(format!("{} exited with {status}", self.program)));
        }
        if lines.len() != texts.len() {
            return Err(Error::External(format!(
                "{} answered {} lines for {} inputs",
                self.program,
                lines.len(),
                texts.len()
            )));
        }
        Ok(lines
            .iter()
            .map(|l| Lang::new(l.trim()).unwrap_or_else(|_| Lang::undetermined()))
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "text" => Ok(ReportFormat::Text),
            _ => Err(Error::Evaluation(format!("unknown report format {s:?} (tsv|text)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkRow {
    pub model: String,
    pub report: EvaluationReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    /// One per (model, mode), models outermost.
    pub rows: Vec<BenchmarkRow>,
    /// Root vs hierarchical, one per mode.
    pub significance: Vec<(DatasetMode, SignificanceResult)>,
}

/// Scores every model on every requested mode. With `pair = Some((root,
/// hier))` (indices into `models`) a significance row is added per mode.
pub fn benchmark(
    models: &[(&str, &dyn Predictor)],
    datasets: &BTreeMap<DatasetMode, Dataset>,
    modes: &[DatasetMode],
    pair: Option<(usize, usize)>,
    alpha: f64,
) -> Result<Benchmark> {
    if let Some((r, h)) = pair {
        if r >= models.len() || h >= models.len() || r == h {
            return Err(Error::Evaluation("invalid root/hierarchical model pair".into()));
        }
    }
    let mut per_model: Vec<Vec<EvaluationReport>> = vec![Vec::new(); models.len()];
    for &mode in modes {
        let data = datasets
            .get(&mode)
            .ok_or_else(|| Error::Evaluation(format!("no test dataset for mode {mode}")))?;
        let texts: Vec<&str> = data.texts().collect();
        let gold: Vec<Lang> = data.entries.iter().map(|s| s.lang.clone()).collect();
        for (m, (_, predictor)) in models.iter().enumerate() {
            let predictions = predictor.predict_labels(&texts)?;
            per_model[m].push(score(&predictions, &gold)?.with_mode(mode));
        }
    }
    let mut significance = Vec::new();
    if let Some((r, h)) = pair {
        for (i, &mode) in modes.iter().enumerate() {
            let (root, hier) = (&per_model[r][i], &per_model[h][i]);
            significance.push((mode, significance_test(root.macro_f1, hier.macro_f1, root.n, alpha)?));
        }
    }
    let rows = models
        .iter()
        .zip(per_model)
        .flat_map(|((name, _), reports)| {
            reports.into_iter().map(move |report| BenchmarkRow {
                model: name.to_string(),
                report,
            })
        })
        .collect();
    Ok(Benchmark { rows, significance })
}

fn mode_name(r: &EvaluationReport) -> String {
    r.mode.map(|m| m.to_string()).unwrap_or_else(|| "-".into())
}

/// Renders rows as tab-separated text or as space-aligned columns.
fn render(header: &[&str], rows: &[Vec<String>], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Tsv => {
            out.push_str(&header.join("\t"));
            out.push('\n');
            for r in rows {
                out.push_str(&r.join("\t"));
                out.push('\n');
            }
        }
        ReportFormat::Text => {
            let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
            for r in rows {
                for (w, c) in widths.iter_mut().zip(r) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let line = |cells: Vec<&str>| {
                let padded: Vec<String> = cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:<w$}", w = *w))
                    .collect();
                format!("{}\n", padded.join("  ").trim_end())
            };
            out.push_str(&line(header.to_vec()));
            for r in rows {
                out.push_str(&line(r.iter().map(String::as_str).collect()));
            }
        }
    }
    out
}

impl Benchmark {
    /// Macro precision, recall and F1 per model and mode.
    pub fn summary(&self, format: ReportFormat) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    mode_name(&r.report),
                    r.report.n.to_string(),
                    format!("{:.4}", r.report.macro_precision),
                    format!("{:.4}", r.report.macro_recall),
                    format!("{:.4}", r.report.macro_f1),
                ]
            })
            .collect();
        render(&["model", "mode", "n", "precision", "recall", "f1"], &rows, format)
    }

    /// Root vs hierarchical comparison per mode.
    pub fn significance_table(&self, format: ReportFormat) -> String {
        let rows: Vec<Vec<String>> = self
            .significance
            .iter()
            .map(|(mode, s)| {
                vec![
                    mode.to_string(),
                    s.n.to_string(),
                    format!("{:.4}", s.f_root),
                    format!("{:.4}", s.f_hier),
                    format!("{:+.4}", s.delta),
                    format!("{:.6}", s.upper_bound),
                    if s.significant { "yes" } else { "no" }.to_string(),
                ]
            })
            .collect();
        render(
            &["mode", "n", "f1_root", "f1_hier", "delta", "upper_bound", "significant"],
            &rows,
            format,
        )
    }

    /// F1 per gold language, per model and mode.
    pub fn per_language(&self, format: ReportFormat) -> String {
        let mut rows = Vec::new();
        for r in &self.rows {
            for (lang, s) in r.report.gold_classes() {
                rows.push(vec![
                    r.model.clone(),
                    mode_name(&r.report),
                    lang.to_string(),
                    s.support.to_string(),
                    format!("{:.4}", s.precision),
                    format!("{:.4}", s.recall),
                    format!("{:.4}", s.f1),
                ]);
            }
        }
        render(
            &["model", "mode", "language", "support", "precision", "recall", "f1"],
            &rows,
            format,
        )
    }

    /// All three tables, titled.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "== scores ==\n{}", self.summary(ReportFormat::Text));
        if !self.significance.is_empty() {
            let _ = writeln!(
                out,
                "== root vs hierarchical ==\n{}",
                self.significance_table(ReportFormat::Text)
            );
        }
        let _ = write!(out, "== per language ==\n{}", self.per_language(ReportFormat::Text));
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dataset::Split;
    use crate::sentence::Sentence;

    fn lang(s: &str) -> Lang {
        Lang::new(s).unwrap()
    }

    fn langs(codes: &[&str]) -> Vec<Lang> {
        codes.iter().map(|c| lang(c)).collect()
    }

    #[test]
    fn perfect_predictions() {
        let gold = langs(&["ckb", "kmr", "ckb"]);
        let r = score(&gold, &gold).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.n, 3);
        let single = langs(&["fas", "fas"]);
        assert_eq!(score(&single, &single).unwrap().macro_f1, 1.0);
    }

    #[test]
    fn two_by_two_hand_arithmetic() {
        let gold = langs(&["aaa", "aaa", "bbb", "bbb"]);
        let pred = langs(&["aaa", "aaa", "aaa", "aaa"]);
        let r = score(&pred, &gold).unwrap();
        let a = r.classes[&lang("aaa")];
        assert_eq!((a.precision, a.recall), (0.5, 1.0));
        assert!((a.f1 - 2.0 / 3.0).abs() < 1e-15);
        let b = r.classes[&lang("bbb")];
        assert_eq!((b.precision, b.recall, b.f1), (0.0, 0.0, 0.0));
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn abstentions_are_errors_not_classes() {
        let gold = langs(&["ckb", "kmr"]);
        let pred = vec![lang("ckb"), Lang::undetermined()];
        let r = score(&pred, &gold).unwrap();
        assert_eq!(r.gold_classes().count(), 2);
        assert!((r.macro_recall - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scoring_errors() {
        assert!(score(&langs(&["ckb"]), &[]).is_err());
        assert!(score(&[], &[]).is_err());
    }

    #[test]
    fn table_four_rows() {
        let r = significance_test(0.90, 0.91, 25500, DEFAULT_ALPHA).unwrap();
        let oracle = 0.90 + 2.326348 * (0.90f64 * 0.10 / 25500.0).sqrt();
        assert!((r.upper_bound - oracle).abs() < 1e-6);
        assert!((r.upper_bound - 0.90437).abs() < 1e-5);
        assert!(r.significant);
        assert!(!significance_test(0.90, 0.72, 33500, DEFAULT_ALPHA).unwrap().significant);
        assert!(!significance_test(0.9, 0.9, 10_000, DEFAULT_ALPHA).unwrap().significant);
        assert!(significance_test(0.9, 0.95, 30, DEFAULT_ALPHA).is_err());
        assert!(significance_test(1.2, 0.95, 300, DEFAULT_ALPHA).is_err());
    }

    fn toy_sets() -> BTreeMap<DatasetMode, Dataset> {
        let entries: Vec<Sentence> = (0..40)
            .map(|i| Sentence::clean(if i % 2 == 0 { "aa" } else { "bb" }, lang(if i % 2 == 0 { "aaa" } else { "bbb" })))
            .collect();
        [DatasetMode::Clean, DatasetMode::All, DatasetMode::Merged]
            .into_iter()
            .map(|m| (m, Dataset::new(entries.clone(), m, Split::Test)))
            .collect()
    }

    struct Constant(Lang);

    impl Predictor for Constant {
        fn predict_labels(&self, texts: &[&str]) -> Result<Vec<Lang>> {
            Ok(vec![self.0.clone(); texts.len()])
        }
    }

    #[test]
    fn benchmark_shapes() {
        let sets = toy_sets();
        let modes = [DatasetMode::Clean, DatasetMode::All, DatasetMode::Merged];
        let a = Constant(lang("aaa"));
        let b = Constant(lang("bbb"));
        let models: Vec<(&str, &dyn Predictor)> = vec![("root", &a), ("hier", &b)];
        let bench = benchmark(&models, &sets, &modes, Some((0, 1)), DEFAULT_ALPHA).unwrap();
        assert_eq!(bench.rows.len(), 6);
        assert_eq!(bench.significance.len(), 3);
        assert_eq!(bench.summary(ReportFormat::Tsv).lines().count(), 7);
        assert_eq!(bench.per_language(ReportFormat::Tsv).lines().count(), 1 + 6 * 2);
        assert!(bench.to_text().contains("root vs hierarchical"));

        let single = benchmark(&models[..1], &sets, &modes, None, DEFAULT_ALPHA).unwrap();
        assert!(single.significance.is_empty());
        let missing = [DatasetMode::Noisy(crate::sentence::NoiseLevel::on_grid(20).unwrap())];
        assert!(benchmark(&models, &sets, &missing, None, DEFAULT_ALPHA).is_err());
    }

    #[cfg(unix)]
    #[test]
    fn external_line_protocol() {
        // echoes the first three characters of every line back as the label
        let p = ExternalPredictor::new("sh", vec!["-c".into(), "cut -c1-3".into()]);
        let out = p.predict_labels(&["ckbxx", "kmr yy", "zz"]).unwrap();
        assert_eq!(out, vec![lang("ckb"), lang("kmr"), Lang::undetermined()]);
        let short = ExternalPredictor::new("sh", vec!["-c".into(), "head -n1".into()]);
        assert!(short.predict_labels(&["ckb", "kmr"]).is_err());
        assert!(ExternalPredictor::new("/nonexistent/identifier", vec![]).predict_labels(&["x"]).is_err());
    }

    fn pairs() -> impl Strategy<Value = Vec<(usize, usize)>> {
        prop::collection::vec((0usize..4, 0usize..4), 1..60)
    }

    const CODES: [&str; 4] = ["aaa", "bbb", "ccc", "ddd"];

    /// Per-class counts straight from the definition.
    fn oracle_macro_f1(pairs: &[(usize, usize)]) -> f64 {
        let gold: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        let mut total = 0.0;
        for &c in &gold {
            let tp = pairs.iter().filter(|p| p.0 == c && p.1 == c).count() as f64;
            let fp = pairs.iter().filter(|p| p.0 == c && p.1 != c).count() as f64;
            let fneg = pairs.iter().filter(|p| p.0 != c && p.1 == c).count() as f64;
            let f = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fneg) };
            total += f;
        }
        total / gold.len() as f64
    }

    fn split(pairs: &[(usize, usize)]) -> (Vec<Lang>, Vec<Lang>) {
        pairs.iter().map(|&(p, g)| (lang(CODES[p]), lang(CODES[g]))).unzip()
    }

    proptest! {
        #[test]
        fn macro_f1_matches_oracle(pairs in pairs()) {
            let (pred, gold) = split(&pairs);
            let r = score(&pred, &gold).unwrap();
            prop_assert!((r.macro_f1 - oracle_macro_f1(&pairs)).abs() < 1e-12);
            prop_assert_eq!(r.confusion.total(), pairs.len() as u64);
        }

        #[test]
        fn permutation_invariant(pairs in pairs(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (p1, g1) = split(&pairs);
            let (p2, g2) = split(&shuffled);
            prop_assert_eq!(score(&p1, &g1).unwrap(), score(&p2, &g2).unwrap());
        }

        #[test]
        fn z_test_monotonicity(f_root in 0.01f64..0.99, a in 0.0f64..1.0, b in 0.0f64..1.0, n in 31u64..100_000) {
            let (lo, hi) = (a.min(b), a.max(b));
            let at = |fh: f64, fr: f64| significance_test(fr, fh, n, DEFAULT_ALPHA).unwrap().significant;
            // monotone in f_hier
            prop_assert!(!at(lo, f_root) || at(hi, f_root));
            // antitone in f_root
            prop_assert!(!at(f_root, hi) || at(f_root, lo));
            prop_assert!(!at(f_root, f_root) || f_root > f_root);
        }

        #[test]
        fn large_n_detects_positive_delta(f_root in 0.01f64..0.98, delta in 0.001f64..0.01) {
            let f_hier = (f_root + delta).min(1.0);
            prop_assert!(significance_test(f_root, f_hier, 100_000_000, DEFAULT_ALPHA).unwrap().significant);
        }
    }
}
