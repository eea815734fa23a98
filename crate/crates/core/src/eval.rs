//! Cluster quality against ground-truth labels.
//!
//! For a cluster `D` with label distribution `p(x) = |{d ∈ D : l(d) = x}| / |D|`
//! over the label universe `X`:
//!
//! * purity is `max_x p(x)`; micro purity weights clusters by size, macro
//!   purity does not;
//! * entropy is `−Σ p(x) log₂ p(x)`;
//! * negentropy is `1 + (1/log₂|X|) Σ p(x) log₂ p(x)`, which lies in `[0, 1]`
//!   for any number of labels, is 1 for a pure cluster and 0 when every label
//!   is equally represented.
//!
//! Terms with `p(x) = 0` are skipped. Documents without a label are dropped
//! before any metric is computed, and clusters left empty by that are left
//! out of the means.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Ground-truth labels: document id → label, plus the label universe `X`.
#[derive(Debug, Clone, Default)]
pub struct LabelSet {
    labels: HashMap<String, String>,
    universe: BTreeSet<String>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, doc: impl Into<String>, label: impl Into<String>) -> Option<String> {
        let label = label.into();
        self.universe.insert(label.clone());
        self.labels.insert(doc.into(), label)
    }

    pub fn get(&self, doc: &str) -> Option<&str> {
        self.labels.get(doc).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Distinct labels in sorted order.
    pub fn universe(&self) -> impl Iterator<Item = &str> {
        self.universe.iter().map(String::as_str)
    }

    pub fn num_labels(&self) -> usize {
        self.universe.len()
    }

    fn label_index(&self, label: &str) -> usize {
        self.universe
            .iter()
            .position(|l| l == label)
            .expect("label is in the universe")
    }

    /// Reads `<doc_id> TAB <label>` lines. Blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut set = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (doc, label) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: "expected `<doc_id> TAB <label>`".into(),
            })?;
            let (doc, label) = (doc.trim(), label.trim());
            if doc.is_empty() || label.is_empty() {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: i + 1,
                    message: "empty document id or label".into(),
                });
            }
            if set.insert(doc, label).is_some() {
                return Err(Error::DuplicateId {
                    id: doc.to_owned(),
                    line: i + 1,
                });
            }
        }
        Ok(set)
    }
}

impl<D: Into<String>, L: Into<String>> FromIterator<(D, L)> for LabelSet {
    fn from_iter<I: IntoIterator<Item = (D, L)>>(iter: I) -> Self {
        let mut set = Self::new();
        for (d, l) in iter {
            set.insert(d, l);
        }
        set
    }
}

/// A hard clustering of documents.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Clustering {
    doc_ids: Vec<String>,
    clusters: Vec<usize>,
    num_clusters: usize,
    /// Documents that could not be scored and were placed in cluster 0
    /// (zero-norm vectors, all-zero NMF columns).
    pub fallbacks: usize,
}

impl Clustering {
    /// `num_clusters` must exceed every cluster id.
    pub fn new(doc_ids: Vec<String>, clusters: Vec<usize>, num_clusters: usize) -> Result<Self> {
        if doc_ids.len() != clusters.len() {
            return Err(Error::InvalidArgument(format!(
                "{} documents but {} cluster ids",
                doc_ids.len(),
                clusters.len()
            )));
        }
        if let Some(&c) = clusters.iter().find(|&&c| c >= num_clusters) {
            return Err(Error::InvalidArgument(format!(
                "cluster id {c} out of range for {num_clusters} clusters"
            )));
        }
        Ok(Self {
            doc_ids,
            clusters,
            num_clusters,
            fallbacks: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn assignments(&self) -> &[usize] {
        &self.clusters
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.doc_ids
            .iter()
            .map(String::as_str)
            .zip(self.clusters.iter().copied())
    }

    /// Member document ids of each cluster, indexed by cluster id.
    pub fn members(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (doc, c) in self.iter() {
            out[c].push(doc);
        }
        out
    }

    /// Writes `<doc_id> TAB <cluster_id>` lines.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (doc, c) in self.iter() {
            writeln!(out, "{doc}\t{c}").unwrap();
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Reads a clustering file. The cluster count is one more than the
    /// largest id seen.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut ids = Vec::new();
        let mut clusters = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: &str| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: message.into(),
            };
            let (doc, c) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `<doc_id> TAB <cluster_id>`"))?;
            let c: usize = c
                .trim()
                .parse()
                .map_err(|_| parse_err("cluster id is not a non-negative integer"))?;
            if !seen.insert(doc.to_owned()) {
                return Err(Error::DuplicateId {
                    id: doc.to_owned(),
                    line: i + 1,
                });
            }
            ids.push(doc.to_owned());
            clusters.push(c);
        }
        let k = clusters.iter().max().map_or(0, |m| m + 1);
        Self::new(ids, clusters, k)
    }
}

fn label_counts(docs: &[&str], labels: &LabelSet) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; labels.num_labels()];
    for &d in docs {
        let l = labels
            .get(d)
            .ok_or_else(|| Error::Unlabeled(d.to_owned()))?;
        counts[labels.label_index(l)] += 1;
    }
    Ok(counts)
}

/// `p(x)` for every label of the universe, in [`LabelSet::universe`] order.
pub fn label_distribution(docs: &[&str], labels: &LabelSet) -> Result<Vec<f64>> {
    if docs.is_empty() {
        return Err(Error::Empty("cluster"));
    }
    let counts = label_counts(docs, labels)?;
    let n = docs.len() as f64;
    Ok(counts.iter().map(|&c| c as f64 / n).collect())
}

/// Shannon entropy in bits of a count vector. Zero counts are skipped.
pub fn entropy_of_counts(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Negentropy of a count vector over a universe of `num_labels` labels.
pub fn negentropy_of_counts(counts: &[usize], num_labels: usize) -> Result<f64> {
    if num_labels < 2 {
        return Err(Error::InvalidArgument(
            "negentropy needs at least two labels".into(),
        ));
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::Empty("cluster"));
    }
    let h = 1.0 - entropy_of_counts(counts) / (num_labels as f64).log2();
    // Rounding can push a pure or uniform cluster a hair outside [0, 1].
    Ok(h.clamp(0.0, 1.0))
}

pub fn entropy(docs: &[&str], labels: &LabelSet) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::Empty("cluster"));
    }
    Ok(entropy_of_counts(&label_counts(docs, labels)?))
}

pub fn negentropy(docs: &[&str], labels: &LabelSet) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::Empty("cluster"));
    }
    negentropy_of_counts(&label_counts(docs, labels)?, labels.num_labels())
}

/// Per-cluster statistics over the labelled members of a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub cluster: usize,
    pub size: usize,
    pub purity: f64,
    pub negentropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurityReport {
    pub micro: f64,
    pub macro_: f64,
    pub per_cluster: Vec<ClusterStats>,
}

/// Label counts for every cluster with at least one labelled member.
fn labelled_cluster_counts(clustering: &Clustering, labels: &LabelSet) -> Vec<(usize, Vec<usize>)> {
    let mut counts = vec![vec![0usize; labels.num_labels()]; clustering.num_clusters()];
    for (doc, c) in clustering.iter() {
        if let Some(l) = labels.get(doc) {
            counts[c][labels.label_index(l)] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .filter(|(_, cs)| cs.iter().any(|&c| c > 0))
        .collect()
}

/// Micro and macro purity plus per-cluster purity and negentropy.
///
/// Per-cluster negentropy is reported as NaN when the universe has fewer than
/// two labels.
pub fn purity(clustering: &Clustering, labels: &LabelSet) -> Result<PurityReport> {
    let groups = labelled_cluster_counts(clustering, labels);
    if groups.is_empty() {
        return Err(Error::Empty("no labelled documents in the clustering"));
    }
    let mut per_cluster = Vec::with_capacity(groups.len());
    let (mut weighted, mut total) = (0.0, 0usize);
    for (cluster, counts) in &groups {
        let size: usize = counts.iter().sum();
        let top = *counts.iter().max().unwrap();
        let purity = top as f64 / size as f64;
        weighted += top as f64;
        total += size;
        per_cluster.push(ClusterStats {
            cluster: *cluster,
            size,
            purity,
            negentropy: negentropy_of_counts(counts, labels.num_labels()).unwrap_or(f64::NAN),
        });
    }
    let macro_ = per_cluster.iter().map(|s| s.purity).sum::<f64>() / per_cluster.len() as f64;
    Ok(PurityReport {
        micro: weighted / total as f64,
        macro_,
        per_cluster,
    })
}

/// Mean cluster negentropy; size-weighted when `weighted` is set.
pub fn mean_negentropy(clustering: &Clustering, labels: &LabelSet, weighted: bool) -> Result<f64> {
    let groups = labelled_cluster_counts(clustering, labels);
    if groups.is_empty() {
        return Err(Error::Empty("no labelled documents in the clustering"));
    }
    let (mut acc, mut norm) = (0.0, 0.0);
    for (_, counts) in &groups {
        let h = negentropy_of_counts(counts, labels.num_labels())?;
        let w = if weighted {
            counts.iter().sum::<usize>() as f64
        } else {
            1.0
        };
        acc += w * h;
        norm += w;
    }
    Ok(acc / norm)
}

/// Everything `eval` reports, with a TSV rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub purity: PurityReport,
    pub mean_negentropy: f64,
    pub weighted_negentropy: f64,
}

pub fn evaluate(clustering: &Clustering, labels: &LabelSet) -> Result<Report> {
    Ok(Report {
        purity: purity(clustering, labels)?,
        mean_negentropy: mean_negentropy(clustering, labels, false)?,
        weighted_negentropy: mean_negentropy(clustering, labels, true)?,
    })
}

impl Report {
    /// `metric TAB value` lines followed by `cluster TAB size TAB purity TAB
    /// negentropy` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let p = &self.purity;
        writeln!(out, "clusters\t{}", p.per_cluster.len()).unwrap();
        writeln!(out, "micro_purity\t{:.6}", p.micro).unwrap();
        writeln!(out, "macro_purity\t{:.6}", p.macro_).unwrap();
        writeln!(out, "mean_negentropy\t{:.6}", self.mean_negentropy).unwrap();
        writeln!(out, "weighted_negentropy\t{:.6}", self.weighted_negentropy).unwrap();
        for s in &p.per_cluster {
            writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}",
                s.cluster, s.size, s.purity, s.negentropy
            )
            .unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Four classes, six documents each, grouped by the given per-cluster
    /// label counts (in A, B, C, D order).
    fn fixture(counts: &[[usize; 4]]) -> (Clustering, LabelSet) {
        let names = ["A", "B", "C", "D"];
        let mut labels = LabelSet::new();
        let mut ids = Vec::new();
        let mut clusters = Vec::new();
        for (c, row) in counts.iter().enumerate() {
            for (l, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    let id = format!("d{}", ids.len());
                    labels.insert(id.clone(), names[l]);
                    ids.push(id);
                    clusters.push(c);
                }
            }
        }
        (
            Clustering::new(ids, clusters, counts.len()).unwrap(),
            labels,
        )
    }

    fn solution1() -> (Clustering, LabelSet) {
        fixture(&[[3, 3, 0, 0], [3, 0, 3, 0], [0, 3, 0, 3], [0, 0, 3, 3]])
    }

    fn solution2() -> (Clustering, LabelSet) {
        fixture(&[[3, 1, 1, 1], [1, 3, 1, 1], [1, 1, 3, 1], [1, 1, 1, 3]])
    }

    #[test]
    fn label_distribution_examples() {
        let labels: LabelSet = [("x", "A"), ("y", "A"), ("z", "B")].into_iter().collect();
        let p = label_distribution(&["x", "y", "z"], &labels).unwrap();
        assert_abs_diff_eq!(p[0], 2.0 / 3.0);
        assert_abs_diff_eq!(p[1], 1.0 / 3.0);
        assert_eq!(
            label_distribution(&["x", "y"], &labels).unwrap(),
            vec![1.0, 0.0]
        );
        assert!(matches!(
            label_distribution(&["x", "nope"], &labels),
            Err(Error::Unlabeled(_))
        ));

        let (c, l) = solution2();
        let members = c.members();
        let p = label_distribution(&members[0], &l).unwrap();
        for (got, want) in p.iter().zip([0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn solution_one_purity_and_negentropy() {
        let (c, l) = solution1();
        let r = purity(&c, &l).unwrap();
        assert_abs_diff_eq!(r.micro, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.macro_, 0.5, epsilon = 1e-12);
        for s in &r.per_cluster {
            assert_abs_diff_eq!(s.purity, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(s.negentropy, 0.5, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(
            mean_negentropy(&c, &l, false).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(mean_negentropy(&c, &l, true).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn solution_two_purity_and_negentropy() {
        let (c, l) = solution2();
        let r = purity(&c, &l).unwrap();
        assert_abs_diff_eq!(r.micro, 0.5, epsilon = 1e-12);
        for s in &r.per_cluster {
            assert_abs_diff_eq!(s.purity, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(s.negentropy, 0.1038, epsilon = 5e-5);
        }
        assert_abs_diff_eq!(
            mean_negentropy(&c, &l, false).unwrap(),
            0.1038,
            epsilon = 5e-5
        );
        assert_abs_diff_eq!(
            mean_negentropy(&c, &l, true).unwrap(),
            0.1038,
            epsilon = 5e-5
        );
        let members = c.members();
        assert_abs_diff_eq!(entropy(&members[0], &l).unwrap(), 1.79248, epsilon = 1e-4);
    }

    #[test]
    fn micro_and_macro_differ_with_uneven_sizes() {
        // One pure singleton and a three-way split of three documents.
        let labels: LabelSet = [("a", "X"), ("b", "X"), ("c", "Y"), ("d", "Z")]
            .into_iter()
            .collect();
        let c = Clustering::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![0, 1, 1, 1],
            2,
        )
        .unwrap();
        let r = purity(&c, &labels).unwrap();
        assert_abs_diff_eq!(r.macro_, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.micro, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn negentropy_extremes() {
        assert_eq!(negentropy_of_counts(&[5, 0, 0], 3).unwrap(), 1.0);
        assert_abs_diff_eq!(
            negentropy_of_counts(&[2, 2, 2], 3).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert!(negentropy_of_counts(&[4], 1).is_err());
        assert_eq!(entropy_of_counts(&[7]), 0.0);
        assert_abs_diff_eq!(entropy_of_counts(&[1, 1]), 1.0);
    }

    #[test]
    fn single_cluster_mean_is_its_negentropy() {
        let labels: LabelSet = [("a", "X"), ("b", "X"), ("c", "Y")].into_iter().collect();
        let c =
            Clustering::new(vec!["a".into(), "b".into(), "c".into()], vec![0, 0, 0], 1).unwrap();
        let h = negentropy(&["a", "b", "c"], &labels).unwrap();
        assert_eq!(mean_negentropy(&c, &labels, false).unwrap(), h);
        assert_eq!(mean_negentropy(&c, &labels, true).unwrap(), h);
    }

    #[test]
    fn unlabeled_documents_are_excluded() {
        let labels: LabelSet = [("a", "X"), ("b", "Y")].into_iter().collect();
        let c = Clustering::new(
            vec!["a".into(), "u1".into(), "b".into(), "u2".into()],
            vec![0, 0, 1, 2],
            3,
        )
        .unwrap();
        let r = purity(&c, &labels).unwrap();
        assert_eq!(r.per_cluster.len(), 2);
        assert_eq!(r.per_cluster[0].size, 1);
        assert_eq!(r.macro_, 1.0);
    }

    #[test]
    fn empty_clustering_is_an_error() {
        let labels: LabelSet = [("a", "X"), ("b", "Y")].into_iter().collect();
        let c = Clustering::new(vec![], vec![], 0).unwrap();
        assert!(purity(&c, &labels).is_err());
    }

    #[test]
    fn clustering_rejects_out_of_range_ids() {
        assert!(Clustering::new(vec!["a".into()], vec![3], 2).is_err());
        assert!(Clustering::new(vec!["a".into()], vec![], 2).is_err());
    }

    #[test]
    fn report_tsv_lists_metrics_then_clusters() {
        let (c, l) = solution1();
        let tsv = evaluate(&c, &l).unwrap().to_tsv();
        let lines: Vec<_> = tsv.lines().collect();
        assert_eq!(lines[1], "micro_purity\t0.500000");
        assert_eq!(lines[5], "0\t6\t0.500000\t0.500000");
        assert_eq!(lines.len(), 5 + 4);
    }
}
