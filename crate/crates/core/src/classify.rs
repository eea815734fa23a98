//! One-vs-rest linear SVM over sparse document rows, plus the two ways of
//! fusing text and link evidence: a committee of two separately trained
//! models, or one model on concatenated features.
//!
//! Training is Pegasos-style stochastic subgradient descent on the
//! λ-regularized hinge loss with step size `1/(λt)`; the bias is an extra
//! constant feature.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::SparseMatrix;
use crate::error::{Error, Result};
use crate::eval::LabelSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub lambda: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 10,
            lambda: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Sorted class names; index `c` owns `weights[c]` and `biases[c]`.
    pub classes: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

/// A weight vector kept as `scale · v` so that the shrink step is O(1).
struct ScaledWeights {
    v: Vec<f64>,
    bias: f64,
    scale: f64,
}

impl ScaledWeights {
    fn new(dim: usize) -> Self {
        Self {
            v: vec![0.0; dim],
            bias: 0.0,
            scale: 1.0,
        }
    }

    fn score(&self, row: &[(usize, f64)]) -> f64 {
        self.scale * (row.iter().map(|&(c, x)| self.v[c] * x).sum::<f64>() + self.bias)
    }

    fn shrink(&mut self, factor: f64) {
        if factor <= 0.0 {
            self.v.iter_mut().for_each(|x| *x = 0.0);
            self.bias = 0.0;
            self.scale = 1.0;
            return;
        }
        self.scale *= factor;
        if self.scale < 1e-9 {
            let s = self.scale;
            self.v.iter_mut().for_each(|x| *x *= s);
            self.bias *= s;
            self.scale = 1.0;
        }
    }

    fn add(&mut self, row: &[(usize, f64)], step: f64) {
        let step = step / self.scale;
        for &(c, x) in row {
            self.v[c] += step * x;
        }
        self.bias += step;
    }

    fn finish(self) -> (Vec<f64>, f64) {
        let s = self.scale;
        (self.v.into_iter().map(|x| x * s).collect(), self.bias * s)
    }
}

/// Trains one binary hinge-loss model per class on the rows `train_rows` of
/// `matrix`. Every training row must be labelled and at least two classes
/// must occur.
pub fn train<R: Rng + ?Sized>(
    matrix: &SparseMatrix,
    train_rows: &[usize],
    labels: &LabelSet,
    params: TrainParams,
    rng: &mut R,
) -> Result<LinearModel> {
    if params.lambda.is_nan() || params.lambda <= 0.0 {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let mut targets = Vec::with_capacity(train_rows.len());
    for &r in train_rows {
        let id = &matrix.row_ids()[r];
        targets.push(labels.get(id).ok_or_else(|| Error::Unlabeled(id.clone()))?);
    }
    let mut classes: Vec<String> = targets.iter().map(|s| s.to_string()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training needs at least two classes, found {}",
            classes.len()
        )));
    }
    let class_of: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let target_idx: Vec<usize> = targets.iter().map(|t| class_of[t]).collect();

    let mut models: Vec<ScaledWeights> = (0..classes.len())
        .map(|_| ScaledWeights::new(matrix.cols()))
        .collect();
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (params.lambda * t as f64);
            let row = matrix.row(train_rows[i]);
            for (c, model) in models.iter_mut().enumerate() {
                let y = if c == target_idx[i] { 1.0 } else { -1.0 };
                let margin = y * model.score(row);
                model.shrink(1.0 - eta * params.lambda);
                if margin < 1.0 {
                    model.add(row, eta * y);
                }
            }
        }
    }
    let (weights, biases) = models.into_iter().map(ScaledWeights::finish).unzip();
    Ok(LinearModel {
        classes,
        weights,
        biases,
    })
}

/// Per-document, per-class decision values.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub doc_ids: Vec<String>,
    pub classes: Vec<String>,
    /// `values[d][c] = w_c · x_d + b_c`.
    pub values: Vec<Vec<f64>>,
}

impl Scores {
    /// Highest-scoring class per document; ties go to the class that sorts
    /// first.
    pub fn predictions(&self) -> Vec<String> {
        self.values
            .iter()
            .map(|row| self.classes[argmax(row)].clone())
            .collect()
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict_scores(
    model: &LinearModel,
    matrix: &SparseMatrix,
    rows: &[usize],
) -> Result<Scores> {
    if matrix.cols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: matrix.cols(),
        });
    }
    let values = rows
        .iter()
        .map(|&r| {
            let row = matrix.row(r);
            model
                .weights
                .iter()
                .zip(&model.biases)
                .map(|(w, b)| row.iter().map(|&(c, x)| w[c] * x).sum::<f64>() + b)
                .collect()
        })
        .collect();
    Ok(Scores {
        doc_ids: rows.iter().map(|&r| matrix.row_ids()[r].clone()).collect(),
        classes: model.classes.clone(),
        values,
    })
}

/// z-scores over the whole batch, or `None` when the scores are constant.
fn standardize(scores: &Scores) -> Option<Vec<Vec<f64>>> {
    let n = scores.values.iter().map(Vec::len).sum::<usize>() as f64;
    let mean = scores.values.iter().flatten().sum::<f64>() / n;
    let var = scores
        .values
        .iter()
        .flatten()
        .map(|x| (x - mean).powi(2))
        .sum::<f64>()
        / n;
    let sd = var.sqrt();
    (sd > 0.0).then(|| {
        scores
            .values
            .iter()
            .map(|row| row.iter().map(|x| (x - mean) / sd).collect())
            .collect()
    })
}

/// Fuses a text model and a link model scored on the same documents.
///
/// Each model's scores are standardized over the batch; per document the
/// label whose standardized score is highest across both models wins, with
/// ties going to the text model. A model whose scores are constant carries
/// no ranking and is ignored.
pub fn committee(text: &Scores, link: &Scores) -> Result<Vec<String>> {
    if text.classes != link.classes {
        return Err(Error::InvalidArgument(
            "committee models have different class lists".into(),
        ));
    }
    if text.doc_ids != link.doc_ids {
        return Err(Error::InvalidArgument(
            "committee models scored different documents".into(),
        ));
    }
    let (zt, zl) = match (standardize(text), standardize(link)) {
        (Some(t), Some(l)) => (t, l),
        (Some(_), None) | (None, None) => return Ok(text.predictions()),
        (None, Some(_)) => return Ok(link.predictions()),
    };
    Ok(zt
        .iter()
        .zip(&zl)
        .map(|(t, l)| {
            let (ct, cl) = (argmax(t), argmax(l));
            let winner = if l[cl] > t[ct] { cl } else { ct };
            text.classes[winner].clone()
        })
        .collect())
}

/// Fraction of documents whose prediction matches their label.
pub fn recall(doc_ids: &[String], predictions: &[String], labels: &LabelSet) -> Result<f64> {
    if doc_ids.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut correct = 0;
    for (id, p) in doc_ids.iter().zip(predictions) {
        let l = labels.get(id).ok_or_else(|| Error::Unlabeled(id.clone()))?;
        if l == p {
            correct += 1;
        }
    }
    Ok(correct as f64 / doc_ids.len() as f64)
}

/// Row indices for one train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// A random split with `round(n · train_fraction)` training rows.
pub fn random_split<R: Rng + ?Sized>(n: usize, train_fraction: f64, rng: &mut R) -> Result<Split> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} outside [0, 1]"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let cut = (n as f64 * train_fraction).round() as usize;
    let (mut train, mut test) = (idx[..cut].to_vec(), idx[cut..].to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// `folds` disjoint random folds. Normally each fold is the test set once
/// and the rest trains; with `inverted` each fold trains once and the rest
/// is tested (e.g. 10 folds give a 10% train / 90% test scheme).
pub fn kfold_splits<R: Rng + ?Sized>(
    n: usize,
    folds: usize,
    inverted: bool,
    rng: &mut R,
) -> Result<Vec<Split>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= folds <= {n}, got {folds}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in idx.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    Ok((0..folds)
        .map(|f| {
            let (inside, outside): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&i| fold_of[i] == f);
            if inverted {
                Split {
                    train: inside,
                    test: outside,
                }
            } else {
                Split {
                    train: outside,
                    test: inside,
                }
            }
        })
        .collect())
}

/// Reads `<doc_id> TAB train|test` lines.
pub fn load_split(path: &Path) -> Result<Vec<(String, bool)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = || Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: "expected `<doc_id> TAB train|test`".into(),
        };
        let (id, kind) = line.split_once('\t').ok_or_else(err)?;
        let is_train = match kind.trim() {
            "train" => true,
            "test" => false,
            _ => return Err(err()),
        };
        out.push((id.to_owned(), is_train));
    }
    Ok(out)
}

pub fn write_split(path: &Path, entries: &[(String, bool)]) -> Result<()> {
    let mut out = String::new();
    for (id, is_train) in entries {
        writeln!(out, "{id}\t{}", if *is_train { "train" } else { "test" }).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}
