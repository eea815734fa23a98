//! Seeded synthetic corpus: labelled documents drawn from per-class term
//! mixtures, plus a planted link graph.
//!
//! Each class owns a categorical distribution over the vocabulary: a shared
//! Zipf background with a block of class topic terms boosted by log-normal
//! factors (Gaussian in log space). A document takes each token from its own
//! class with probability `1 − text_noise` and otherwise from one secondary
//! class picked per document. Links go mostly to same-class documents and to
//! class-affiliated pages outside the corpus, with a share of links to
//! "hub" pages that everyone links to and to uniformly random documents.
//! Text and link noise are drawn independently, so the two views make
//! different mistakes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::Normal;

use crate::corpus::Documents;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub docs: usize,
    pub classes: usize,
    pub vocab: usize,
    /// Boosted topic terms per class.
    pub topic_terms: usize,
    /// Mean and spread of the log boost applied to topic terms.
    pub boost_mean: f64,
    pub boost_sd: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Share of a document's tokens drawn from its secondary class.
    pub text_noise: f64,
    /// Background terms that are also written to the stopword list.
    pub stopwords: usize,
    pub min_links: usize,
    pub max_links: usize,
    /// Outside-corpus pages affiliated with each class.
    pub external_per_class: usize,
    /// Pages linked from every class ("stop-links").
    pub hubs: usize,
    /// Link destination mix: same-class document, same-class external page,
    /// hub; the remainder goes to a uniformly random document.
    pub p_same_class: f64,
    pub p_external: f64,
    pub p_hub: f64,
    pub train_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            docs: 5000,
            classes: 10,
            vocab: 3000,
            topic_terms: 60,
            boost_mean: 2.0,
            boost_sd: 0.7,
            min_len: 40,
            max_len: 160,
            text_noise: 0.35,
            stopwords: 20,
            min_links: 2,
            max_links: 10,
            external_per_class: 80,
            hubs: 12,
            p_same_class: 0.3,
            p_external: 0.15,
            p_hub: 0.2,
            train_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SynthCorpus {
    pub documents: Documents,
    pub links: Vec<(String, String)>,
    pub labels: Vec<(String, String)>,
    pub split: Vec<(String, bool)>,
    pub stopwords: Vec<String>,
}

fn term(i: usize) -> String {
    format!("t{i}")
}

pub fn generate<R: Rng + ?Sized>(config: &SynthConfig, rng: &mut R) -> Result<SynthCorpus> {
    let c = config;
    if c.classes < 2
        || c.docs < c.classes
        || c.vocab < c.stopwords + c.topic_terms
        || c.min_len > c.max_len
        || c.min_links > c.max_links
    {
        return Err(Error::InvalidArgument(format!(
            "inconsistent synthetic corpus config: {c:?}"
        )));
    }
    let boost =
        Normal::new(c.boost_mean, c.boost_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    // Background Zipf weights; the heaviest terms double as stopwords.
    let background: Vec<f64> = (0..c.vocab).map(|r| 1.0 / (r as f64 + 1.0)).collect();
    let candidates: Vec<usize> = (c.stopwords..c.vocab).collect();
    let class_dists = (0..c.classes)
        .map(|_| {
            let mut weights = background.clone();
            let total: f64 = background.iter().sum();
            for &t in candidates.choose_multiple(rng, c.topic_terms) {
                weights[t] +=
                    total / c.topic_terms as f64 * boost.sample(rng).exp() / c.boost_mean.exp();
            }
            WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = SynthCorpus {
        stopwords: (0..c.stopwords).map(term).collect(),
        ..Default::default()
    };
    let mut classes = Vec::with_capacity(c.docs);
    for i in 0..c.docs {
        // Round-robin guarantees every class occurs; the shuffle below mixes.
        classes.push(i % c.classes);
    }
    classes.shuffle(rng);

    let ids: Vec<String> = (0..c.docs).map(|i| format!("doc{i}")).collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c.classes];
    for (i, &k) in classes.iter().enumerate() {
        members[k].push(i);
    }

    for (i, &k) in classes.iter().enumerate() {
        let secondary = (k + rng.random_range(1..c.classes)) % c.classes;
        let len = rng.random_range(c.min_len..=c.max_len);
        let tokens = (0..len)
            .map(|_| {
                let source = if rng.random::<f64>() < c.text_noise {
                    secondary
                } else {
                    k
                };
                term(class_dists[source].sample(rng))
            })
            .collect();
        out.documents.ids.push(ids[i].clone());
        out.documents.tokens.push(tokens);
        out.labels.push((ids[i].clone(), format!("class{k}")));
    }

    for (i, &k) in classes.iter().enumerate() {
        let n_links = rng.random_range(c.min_links..=c.max_links);
        for _ in 0..n_links {
            let u: f64 = rng.random();
            let dest = if u < c.p_same_class {
                ids[*members[k].choose(rng).expect("every class has members")].clone()
            } else if u < c.p_same_class + c.p_external && c.external_per_class > 0 {
                format!("ext{k}_{}", rng.random_range(0..c.external_per_class))
            } else if u < c.p_same_class + c.p_external + c.p_hub && c.hubs > 0 {
                format!("hub{}", rng.random_range(0..c.hubs))
            } else {
                ids[rng.random_range(0..c.docs)].clone()
            };
            out.links.push((ids[i].clone(), dest));
        }
    }

    let mut order: Vec<usize> = (0..c.docs).collect();
    order.shuffle(rng);
    let n_train = (c.docs as f64 * c.train_fraction).round() as usize;
    let mut is_train = vec![false; c.docs];
    order[..n_train].iter().for_each(|&i| is_train[i] = true);
    out.split = ids.iter().cloned().zip(is_train).collect();
    Ok(out)
}

impl SynthCorpus {
    /// Writes `docs.tsv`, `links.txt`, `labels.tsv`, `split.tsv` and
    /// `stopwords.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut docs = String::new();
        for (id, tokens) in self.documents.ids.iter().zip(&self.documents.tokens) {
            writeln!(docs, "{id}\t{}", tokens.join(" ")).unwrap();
        }
        fs::write(dir.join("docs.tsv"), docs)?;
        let mut links = String::new();
        for (s, d) in &self.links {
            writeln!(links, "{s} {d}").unwrap();
        }
        fs::write(dir.join("links.txt"), links)?;
        let mut labels = String::new();
        for (id, l) in &self.labels {
            writeln!(labels, "{id}\t{l}").unwrap();
        }
        fs::write(dir.join("labels.tsv"), labels)?;
        crate::classify::write_split(&dir.join("split.tsv"), &self.split)?;
        fs::write(dir.join("stopwords.txt"), self.stopwords.join("\n") + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    fn small() -> SynthConfig {
        SynthConfig {
            docs: 200,
            classes: 4,
            vocab: 400,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generates_consistent_corpus() {
        let s = generate(&small(), &mut rng_from_seed(1)).unwrap();
        assert_eq!(s.documents.len(), 200);
        assert_eq!(s.labels.len(), 200);
        assert_eq!(s.split.iter().filter(|(_, t)| *t).count(), 20);
        let mut seen: Vec<&str> = s.labels.iter().map(|(_, l)| l.as_str()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
        assert!(s
            .documents
            .tokens
            .iter()
            .all(|t| (40..=160).contains(&t.len())));
        assert!(s.links.len() >= 200 * 2);
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate(&small(), &mut rng_from_seed(9)).unwrap();
        let b = generate(&small(), &mut rng_from_seed(9)).unwrap();
        assert_eq!(a.documents, b.documents);
        assert_eq!(a.links, b.links);
    }

    #[test]
    fn rejects_inconsistent_config() {
        let bad = SynthConfig {
            classes: 1,
            ..small()
        };
        assert!(generate(&bad, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn writes_loadable_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate(&small(), &mut rng_from_seed(2)).unwrap();
        s.write_to(dir.path()).unwrap();
        let docs = crate::corpus::load_documents(&dir.path().join("docs.tsv")).unwrap();
        assert_eq!(docs, s.documents);
        let labels = crate::eval::LabelSet::load(&dir.path().join("labels.tsv")).unwrap();
        assert_eq!(labels.len(), 200);
        let g = crate::corpus::LinkGraph::load(&dir.path().join("links.txt")).unwrap();
        assert_eq!(g.num_edges(), s.links.len());
        assert_eq!(
            crate::corpus::load_stopwords(&dir.path().join("stopwords.txt"))
                .unwrap()
                .len(),
            20
        );
    }
}
