//! Confusion-driven clustering and the root + expert hierarchical model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lang::{Lang, LANGUAGES};
use crate::models::{Classifier, ClassifierModel, Prediction, TrainParams};
use crate::scalar::Scalar;
use crate::sentence::Sentence;

/// Default confusion-rate threshold for [`detect_clusters`].
pub const DEFAULT_TAU: f64 = 0.005;

/// Counts indexed `[predicted][true]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<Lang>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<Lang>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![0; n * n],
        }
    }

    /// `rows[p][t]` counts true label `t` predicted as `p`.
    pub fn from_rows(labels: Vec<Lang>, rows: Vec<Vec<u64>>) -> Result<Self> {
        let n = labels.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Evaluation(format!("confusion matrix must be {n}×{n}")));
        }
        if labels.iter().collect::<BTreeSet<_>>().len() != n {
            return Err(Error::Evaluation("duplicate labels in confusion matrix".into()));
        }
        Ok(ConfusionMatrix {
            labels,
            counts: rows.into_iter().flatten().collect(),
        })
    }

    pub fn labels(&self) -> &[Lang] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &Lang) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, predicted: usize, truth: usize) -> u64 {
        self.counts[predicted * self.len() + truth]
    }

    pub fn add(&mut self, predicted: usize, truth: usize, n: u64) {
        let len = self.len();
        self.counts[predicted * len + truth] += n;
    }

    pub fn column_sum(&self, truth: usize) -> u64 {
        (0..self.len()).map(|p| self.get(p, truth)).sum()
    }

    pub fn row_sum(&self, predicted: usize) -> u64 {
        (0..self.len()).map(|t| self.get(predicted, t)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Every count multiplied by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        ConfusionMatrix {
            labels: self.labels.clone(),
            counts: self.counts.iter().map(|c| c * k).collect(),
        }
    }

    /// Header `predicted\true` and the labels, then one row per prediction.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("predicted\\true");
        for l in &self.labels {
            out.push('\t');
            out.push_str(l.as_str());
        }
        out.push('\n');
        for (p, l) in self.labels.iter().enumerate() {
            out.push_str(l.as_str());
            for t in 0..self.len() {
                out.push_str(&format!("\t{}", self.get(p, t)));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(src: &str, context: &str) -> Result<Self> {
        let mut lines = src
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or_else(|| Error::parse(context, 1, "empty confusion matrix"))?;
        let labels = header
            .split('\t')
            .skip(1)
            .map(|l| Lang::new(l.trim()).map_err(|e| Error::parse(context, hl + 1, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = vec![Vec::new(); labels.len()];
        let mut seen = BTreeSet::new();
        for (i, line) in lines {
            let mut cols = line.split('\t');
            let label = Lang::new(cols.next().unwrap_or_default().trim())
                .map_err(|e| Error::parse(context, i + 1, e.to_string()))?;
            let p = labels
                .iter()
                .position(|l| *l == label)
                .ok_or_else(|| Error::parse(context, i + 1, format!("row label {label} not in header")))?;
            if !seen.insert(p) {
                return Err(Error::parse(context, i + 1, format!("duplicate row {label}")));
            }
            rows[p] = cols
                .map(|c| c.trim().parse::<u64>().map_err(|_| Error::parse(context, i + 1, format!("bad count {c:?}"))))
                .collect::<Result<Vec<_>>>()?;
        }
        Self::from_rows(labels, rows)
    }
}

/// Tallies a classifier's predictions on `data`. Gold labels must be known
/// to the model.
pub fn build_confusion<C: Classifier + ?Sized>(model: &C, data: &[Sentence]) -> Result<ConfusionMatrix> {
    let labels = model.labels().to_vec();
    let mut cm = ConfusionMatrix::new(labels);
    for s in data {
        let t = cm
            .index_of(&s.lang)
            .ok_or_else(|| Error::UnknownLabel(s.lang.to_string()))?;
        let p = cm
            .index_of(&model.predict(&s.text).label)
            .expect("predictions come from the label set");
        cm.add(p, t, 1);
    }
    Ok(cm)
}

/// Disjoint groups of at least two labels, plus the rest of a universe.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterSet {
    clusters: Vec<BTreeSet<Lang>>,
    unclustered: BTreeSet<Lang>,
}

impl ClusterSet {
    pub fn new(clusters: Vec<BTreeSet<Lang>>, universe: &[Lang]) -> Result<Self> {
        let universe: BTreeSet<Lang> = universe.iter().cloned().collect();
        let mut seen = BTreeSet::new();
        for c in &clusters {
            if c.len() < 2 {
                return Err(Error::Clusters(format!("cluster {} has fewer than two labels", join(c))));
            }
            for l in c {
                if !universe.contains(l) {
                    return Err(Error::Clusters(format!("label {l} is not in the label universe")));
                }
                if !seen.insert(l.clone()) {
                    return Err(Error::Clusters(format!("label {l} is in more than one cluster")));
                }
            }
        }
        Ok(ClusterSet {
            unclustered: universe.difference(&seen).cloned().collect(),
            clusters,
        })
    }

    pub fn empty(universe: &[Lang]) -> Self {
        ClusterSet {
            clusters: Vec::new(),
            unclustered: universe.iter().cloned().collect(),
        }
    }

    /// The three clusters the reference confusion matrix suggests, over the
    /// 19 built-in languages.
    pub fn reference() -> Self {
        let universe: Vec<Lang> = LANGUAGES.iter().map(|c| Lang::new(c).unwrap()).collect();
        let clusters = parse_clusters(include_str!("../../../data/clusters/reference.clusters"), "reference.clusters")
            .expect("shipped cluster file parses");
        ClusterSet::new(clusters, &universe).expect("shipped clusters are valid")
    }

    pub fn load(path: &Path, universe: &[Lang]) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ClusterSet::new(parse_clusters(&src, &path.display().to_string())?, universe)
    }

    pub fn clusters(&self) -> &[BTreeSet<Lang>] {
        &self.clusters
    }

    pub fn unclustered(&self) -> &BTreeSet<Lang> {
        &self.unclustered
    }

    pub fn cluster_of(&self, label: &Lang) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(label))
    }

    /// The same clusters over a smaller universe; clusters must fit in it.
    pub fn restrict(&self, universe: &[Lang]) -> Result<Self> {
        ClusterSet::new(self.clusters.clone(), universe)
    }

    /// One cluster per line, comma-separated.
    pub fn to_config_string(&self) -> String {
        self.clusters.iter().map(|c| format!("{}\n", join(c))).collect()
    }
}

impl fmt::Display for ClusterSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.clusters.iter().map(|c| format!("{{{}}}", join(c))).collect();
        write!(f, "{}", parts.join(" "))
    }
}

fn join(labels: &BTreeSet<Lang>) -> String {
    labels.iter().map(Lang::as_str).collect::<Vec<_>>().join(",")
}

/// Parses a cluster file: one comma-separated cluster per line, `#`
/// comments and blank lines ignored.
pub fn parse_clusters(src: &str, context: &str) -> Result<Vec<BTreeSet<Lang>>> {
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let cluster = line
            .split(',')
            .map(|c| Lang::new(c.trim()).map_err(|e| Error::parse(context, i + 1, e.to_string())))
            .collect::<Result<BTreeSet<_>>>()?;
        out.push(cluster);
    }
    Ok(out)
}

/// `max(c[a][b] / colsum(b), c[b][a] / colsum(a))`; an empty column
/// contributes zero.
pub fn confusion_rate(cm: &ConfusionMatrix, a: usize, b: usize) -> f64 {
    let rate = |p: usize, t: usize| {
        let col = cm.column_sum(t);
        if col == 0 {
            0.0
        } else {
            cm.get(p, t) as f64 / col as f64
        }
    };
    rate(a, b).max(rate(b, a))
}

/// Connected components of size ≥ 2 of the graph linking labels whose
/// confusion rate is at least `tau`. Clusters are ordered by their first
/// label.
pub fn detect_clusters(cm: &ConfusionMatrix, tau: f64) -> ClusterSet {
    let n = cm.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for a in 0..n {
        for b in a + 1..n {
            if confusion_rate(cm, a, b) >= tau {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<Lang>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().insert(cm.labels()[i].clone());
    }
    let mut clusters: Vec<BTreeSet<Lang>> = groups.into_values().filter(|g| g.len() >= 2).collect();
    clusters.sort();
    ClusterSet::new(clusters, cm.labels()).expect("components partition the labels")
}

/// A root classifier plus one expert per cluster. When the root predicts a
/// clustered label, that cluster's expert makes the final call and its
/// probability is reported; otherwise the root's output stands unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalModel<T: Scalar> {
    root: ClassifierModel<T>,
    experts: Vec<ClassifierModel<T>>,
    clusters: ClusterSet,
    /// Root label index → expert index.
    routing: Vec<Option<usize>>,
}

impl<T: Scalar> HierarchicalModel<T> {
    /// Assembles a hierarchy; each expert's labels form one cluster.
    pub fn from_parts(root: ClassifierModel<T>, experts: Vec<ClassifierModel<T>>) -> Result<Self> {
        let clusters = experts
            .iter()
            .map(|e| e.labels().iter().cloned().collect())
            .collect();
        let clusters = ClusterSet::new(clusters, root.labels())?;
        let routing = root.labels().iter().map(|l| clusters.cluster_of(l)).collect();
        Ok(HierarchicalModel {
            root,
            experts,
            clusters,
            routing,
        })
    }

    pub fn root(&self) -> &ClassifierModel<T> {
        &self.root
    }

    pub fn experts(&self) -> &[ClassifierModel<T>] {
        &self.experts
    }

    pub fn clusters(&self) -> &ClusterSet {
        &self.clusters
    }

    pub fn labels(&self) -> &[Lang] {
        self.root.labels()
    }

    /// The expert responsible for root label `label`, if any.
    pub fn route(&self, label: &Lang) -> Option<&ClassifierModel<T>> {
        let i = self.root.labels().binary_search(label).ok()?;
        self.routing[i].map(|e| &self.experts[e])
    }

    /// Root probabilities for unclustered root predictions; otherwise the
    /// expert's probabilities on its cluster's labels and zero elsewhere.
    pub fn predict_proba(&self, text: &str) -> Vec<f64> {
        let root = self.root.predict_proba(text);
        let top = crate::scalar::argmax(&root);
        match self.routing[top] {
            None => root,
            Some(e) => {
                let expert = &self.experts[e];
                let p = expert.predict_proba(text);
                let mut out = vec![0.0; root.len()];
                for (l, q) in expert.labels().iter().zip(p) {
                    let i = self.root.labels().binary_search(l).expect("expert labels are root labels");
                    out[i] = q;
                }
                out
            }
        }
    }

    pub fn predict(&self, text: &str) -> Prediction {
        let root = self.root.predict(text);
        match self.route(&root.label) {
            None => root,
            Some(expert) => expert.predict(text),
        }
    }
}

impl<T: Scalar> Classifier for HierarchicalModel<T> {
    fn labels(&self) -> &[Lang] {
        HierarchicalModel::labels(self)
    }

    fn predict_proba(&self, text: &str) -> Vec<f64> {
        HierarchicalModel::predict_proba(self, text)
    }

    fn predict(&self, text: &str) -> Prediction {
        HierarchicalModel::predict(self, text)
    }
}

/// How the clusters of a hierarchical model are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum ClusterSource {
    Fixed(ClusterSet),
    /// Detect from the root's confusion matrix on the training data.
    Auto { tau: f64 },
}

/// Trains one expert per cluster on that cluster's share of `data`, with
/// the same settings as the root.
pub fn train_experts<T: Scalar>(
    data: &[Sentence],
    clusters: &ClusterSet,
    params: &TrainParams,
) -> Result<Vec<ClassifierModel<T>>> {
    let present: BTreeSet<&Lang> = data.iter().map(|s| &s.lang).collect();
    clusters
        .clusters()
        .iter()
        .map(|cluster| {
            if let Some(missing) = cluster.iter().find(|l| !present.contains(l)) {
                return Err(Error::Clusters(format!("cluster label {missing} has no training data")));
            }
            let subset: Vec<Sentence> = data.iter().filter(|s| cluster.contains(&s.lang)).cloned().collect();
            ClassifierModel::train(&subset, params)
        })
        .collect()
}

/// Builds a hierarchy around an already trained root.
pub fn hierarchical_from_root<T: Scalar>(
    root: ClassifierModel<T>,
    data: &[Sentence],
    source: &ClusterSource,
    params: &TrainParams,
) -> Result<HierarchicalModel<T>> {
    let clusters = match source {
        ClusterSource::Fixed(c) => c.restrict(root.labels())?,
        ClusterSource::Auto { tau } => detect_clusters(&build_confusion(&root, data)?, *tau),
    };
    let experts = train_experts(data, &clusters, params)?;
    HierarchicalModel::from_parts(root, experts)
}

/// Trains the root on all of `data`, then the experts.
pub fn train_hierarchical<T: Scalar>(
    data: &[Sentence],
    source: &ClusterSource,
    params: &TrainParams,
) -> Result<HierarchicalModel<T>> {
    let root = ClassifierModel::train(data, params)?;
    hierarchical_from_root(root, data, source, params)
}
