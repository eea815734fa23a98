//! Document and link representations.
//!
//! Documents arrive pre-tokenized (and pre-stemmed) as `<doc_id> TAB tokens`
//! lines. They are weighted with TF-IDF or BM25, links between documents with
//! LF-IDF, and the resulting documents-by-features [`SparseMatrix`] can be
//! culled to its heaviest columns, concatenated with another representation
//! and densified for the tree.
//!
//! All inverse document frequencies use the natural log.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vectors::DenseVector;

/// Column limit for [`to_dense`] unless the caller raises it.
pub const DEFAULT_MAX_DENSE_COLS: usize = 20_000;

/// Tokenized documents in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Documents {
    pub ids: Vec<String>,
    pub tokens: Vec<Vec<String>>,
}

impl Documents {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

/// Reads a documents file: `<doc_id> TAB <token> (SPACE <token>)*` per line.
/// A document may have no tokens (`<doc_id> TAB`).
pub fn load_documents(path: &Path) -> Result<Documents> {
    let text = fs::read_to_string(path)?;
    parse_documents(&text, path)
}

fn parse_documents(text: &str, path: &Path) -> Result<Documents> {
    let mut docs = Documents::default();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| parse_error(path, lineno, "expected `<doc_id> TAB <tokens>`"))?;
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(parse_error(
                path,
                lineno,
                "document id must be non-empty without whitespace",
            ));
        }
        if !seen.insert(id.to_owned()) {
            return Err(Error::DuplicateId {
                id: id.to_owned(),
                line: lineno,
            });
        }
        docs.ids.push(id.to_owned());
        docs.tokens
            .push(body.split_whitespace().map(str::to_owned).collect());
    }
    Ok(docs)
}

/// One term per line; blank lines ignored.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Drops stopped tokens. Documents that end up empty are kept.
pub fn remove_stopwords(tokens: &[Vec<String>], stoplist: &HashSet<String>) -> Vec<Vec<String>> {
    tokens
        .iter()
        .map(|doc| {
            doc.iter()
                .filter(|t| !stoplist.contains(*t))
                .cloned()
                .collect()
        })
        .collect()
}

/// A documents-by-features matrix stored as sorted sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    row_ids: Vec<String>,
    cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    /// Builds a matrix from per-row `(col, weight)` lists. Entries are sorted
    /// by column; duplicates, out-of-range columns and non-finite weights are
    /// rejected. Explicit zeros are dropped.
    pub fn from_rows(
        row_ids: Vec<String>,
        cols: usize,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        if row_ids.len() != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} row ids for {} rows",
                row_ids.len(),
                rows.len()
            )));
        }
        let mut clean = Vec::with_capacity(rows.len());
        for (r, mut row) in rows.into_iter().enumerate() {
            row.retain(|&(_, w)| w != 0.0);
            row.sort_by_key(|&(c, _)| c);
            for pair in row.windows(2) {
                if pair[0].0 == pair[1].0 {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate entry ({r}, {})",
                        pair[0].0
                    )));
                }
            }
            for &(c, w) in &row {
                if c >= cols {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({r}, {c}) outside {cols} columns"
                    )));
                }
                if !w.is_finite() {
                    return Err(Error::NonFinite { index: c });
                }
            }
            clean.push(row);
        }
        Ok(Self {
            row_ids,
            cols,
            rows: clean,
        })
    }

    pub fn from_dense(row_ids: Vec<String>, vectors: &[DenseVector]) -> Result<Self> {
        let cols = vectors.first().map_or(0, DenseVector::dim);
        let rows = vectors
            .iter()
            .map(|v| {
                if v.dim() != cols {
                    return Err(Error::DimensionMismatch {
                        expected: cols,
                        found: v.dim(),
                    });
                }
                Ok(v.iter()
                    .copied()
                    .enumerate()
                    .filter(|&(_, w)| w != 0.0)
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(row_ids, cols, rows)
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// Nonzero `(col, weight)` entries of row `r`, sorted by column.
    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.rows[r];
        row.binary_search_by_key(&c, |&(col, _)| col)
            .map_or(0.0, |i| row[i].1)
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in &self.rows {
            for &(c, w) in row {
                sums[c] += w;
            }
        }
        sums
    }

    pub fn row_norm(&self, r: usize) -> f64 {
        self.rows[r].iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// Writes the matrix format: a `<rows> <cols>` header, then
    /// `<doc_id> TAB (<col>:<weight> SPACE)*` per row with weights in `%.9g`
    /// notation.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.nnz() * 16 + self.rows() * 8);
        writeln!(out, "{} {}", self.rows(), self.cols).unwrap();
        for (id, row) in self.row_ids.iter().zip(&self.rows) {
            out.push_str(id);
            out.push('\t');
            for &(c, w) in row {
                write!(out, "{c}:{} ", format_sig9(w)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_error(path, 1, "missing `<rows> <cols>` header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_error(path, 1, "header must be `<rows> <cols>`"))?;
        let [n_rows, cols] = dims[..] else {
            return Err(parse_error(path, 1, "header must be `<rows> <cols>`"));
        };
        let mut row_ids = Vec::with_capacity(n_rows);
        let mut rows = Vec::with_capacity(n_rows);
        let mut seen = HashSet::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (id, body) = line
                .split_once('\t')
                .ok_or_else(|| parse_error(path, lineno, "expected `<doc_id> TAB entries`"))?;
            if !seen.insert(id.to_owned()) {
                return Err(Error::DuplicateId {
                    id: id.to_owned(),
                    line: lineno,
                });
            }
            let mut row = Vec::new();
            for entry in body.split_whitespace() {
                let (c, w) = entry
                    .split_once(':')
                    .ok_or_else(|| parse_error(path, lineno, format!("bad entry `{entry}`")))?;
                let c: usize = c
                    .parse()
                    .map_err(|_| parse_error(path, lineno, format!("bad column in `{entry}`")))?;
                let w: f64 = w
                    .parse()
                    .map_err(|_| parse_error(path, lineno, format!("bad weight in `{entry}`")))?;
                row.push((c, w));
            }
            row_ids.push(id.to_owned());
            rows.push(row);
        }
        if rows.len() != n_rows {
            return Err(parse_error(
                path,
                1,
                format!("header declares {n_rows} rows but {} were read", rows.len()),
            ));
        }
        Self::from_rows(row_ids, cols, rows).map_err(|e| parse_error(path, 0, e.to_string()))
    }
}

/// Formats like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    const PRECISION: i32 = 9;
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PRECISION).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_owned()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

type SparseRow = Vec<(usize, f64)>;

/// Vocabulary size, per-document term counts (vocabulary in first-appearance
/// order) and document frequencies.
fn count_terms(docs: &[Vec<String>]) -> (usize, Vec<SparseRow>, Vec<usize>) {
    let mut vocab: HashMap<&str, usize> = HashMap::new();
    let mut df: Vec<usize> = Vec::new();
    let mut counts = Vec::with_capacity(docs.len());
    for doc in docs {
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut local: HashMap<usize, usize> = HashMap::new();
        for t in doc {
            let next = vocab.len();
            let col = *vocab.entry(t.as_str()).or_insert(next);
            if col == df.len() {
                df.push(0);
            }
            match local.get(&col) {
                Some(&i) => row[i].1 += 1.0,
                None => {
                    local.insert(col, row.len());
                    row.push((col, 1.0));
                    df[col] += 1;
                }
            }
        }
        counts.push(row);
    }
    (vocab.len(), counts, df)
}

/// TF-IDF with length-normalized term frequency:
/// `(tf(d,t) / |d|) · ln(N / df(t))`.
pub fn tfidf(ids: &[String], docs: &[Vec<String>]) -> Result<SparseMatrix> {
    let (cols, counts, df) = count_terms(docs);
    let n = docs.len() as f64;
    let rows = counts
        .into_iter()
        .zip(docs)
        .map(|(row, doc)| {
            let len = doc.len() as f64;
            row.into_iter()
                .map(|(c, tf)| (c, tf / len * (n / df[c] as f64).ln()))
                .collect()
        })
        .collect();
    SparseMatrix::from_rows(ids.to_vec(), cols, rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 2.0, b: 0.75 }
    }
}

/// Okapi BM25 weights
/// `idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·|d|/avg|d|))` with the
/// Robertson–Spärck Jones `idf(t) = ln((N − df + 0.5)/(df + 0.5))` clamped
/// at zero.
pub fn bm25(ids: &[String], docs: &[Vec<String>], params: Bm25Params) -> Result<SparseMatrix> {
    if params.k1 < 0.0 || !(0.0..=1.0).contains(&params.b) {
        return Err(Error::InvalidArgument(format!(
            "BM25 needs k1 >= 0 and b in [0, 1], got k1={} b={}",
            params.k1, params.b
        )));
    }
    let (cols, counts, df) = count_terms(docs);
    let n = docs.len() as f64;
    let avg_len = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| {
            let d = d as f64;
            ((n - d + 0.5) / (d + 0.5)).ln().max(0.0)
        })
        .collect();
    let Bm25Params { k1, b } = params;
    let rows = counts
        .into_iter()
        .zip(docs)
        .map(|(row, doc)| {
            let len_norm = 1.0 - b + b * doc.len() as f64 / avg_len;
            row.into_iter()
                .map(|(c, tf)| (c, idf[c] * tf * (k1 + 1.0) / (tf + k1 * len_norm)))
                .collect()
        })
        .collect();
    SparseMatrix::from_rows(ids.to_vec(), cols, rows)
}

/// Directed links between documents. The universe holds every endpoint in
/// first-appearance order and indexes the LF-IDF columns.
#[derive(Debug, Clone, Default)]
pub struct LinkGraph {
    edges: Vec<(usize, usize)>,
    universe: Vec<String>,
    index: HashMap<String, usize>,
}

impl LinkGraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.universe.len();
        self.universe.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    /// Adds one `source → dest` link. Repeats and self-links count like any
    /// other edge.
    pub fn add_edge(&mut self, source: &str, dest: &str) {
        let s = self.intern(source);
        let d = self.intern(dest);
        self.edges.push((s, d));
    }

    pub fn universe(&self) -> &[String] {
        &self.universe
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Reads `<source_id> SPACE <dest_id>` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut graph = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(d), None) => graph.add_edge(s, d),
                _ => return Err(parse_error(path, i + 1, "expected `<source_id> <dest_id>`")),
            }
        }
        Ok(graph)
    }
}

impl<'a> FromIterator<(&'a str, &'a str)> for LinkGraph {
    fn from_iter<I: IntoIterator<Item = (&'a str, &'a str)>>(iter: I) -> Self {
        let mut g = Self::new();
        for (s, d) in iter {
            g.add_edge(s, d);
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LfIdfOptions {
    /// Also count `j → i` links in row `i`, column `j`.
    pub include_inbound: bool,
    /// Divide link frequencies by the document's total link count.
    pub normalize: bool,
}

/// LF-IDF link vectors for the `subset` rows over the whole link universe.
///
/// `raw(i, j)` counts links `i → j`, plus `j → i` with `include_inbound`, so a
/// mutually linked pair gets 2 in each other's column. With `normalize` the
/// row is divided by its total. The weight is `raw(i, j) · ln(N / df(j))`
/// with `N = |subset|` and `df(j)` the number of subset rows touching `j`;
/// a column present in every row vanishes. Subset documents absent from the
/// graph get zero rows.
pub fn lfidf(graph: &LinkGraph, subset: &[String], options: LfIdfOptions) -> Result<SparseMatrix> {
    if subset.is_empty() {
        return Err(Error::Empty("lfidf subset"));
    }
    let mut row_of: HashMap<usize, usize> = HashMap::new();
    for (r, id) in subset.iter().enumerate() {
        if let Some(&u) = graph.index.get(id) {
            if row_of.insert(u, r).is_some() {
                return Err(Error::DuplicateId {
                    id: id.clone(),
                    line: r + 1,
                });
            }
        }
    }
    let mut raw: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); subset.len()];
    for &(s, d) in &graph.edges {
        if let Some(&r) = row_of.get(&s) {
            *raw[r].entry(d).or_insert(0.0) += 1.0;
        }
        if options.include_inbound {
            if let Some(&r) = row_of.get(&d) {
                *raw[r].entry(s).or_insert(0.0) += 1.0;
            }
        }
    }
    let cols = graph.universe.len();
    let mut df = vec![0usize; cols];
    for row in &raw {
        for &c in row.keys() {
            df[c] += 1;
        }
    }
    let n = subset.len() as f64;
    let rows = raw
        .into_iter()
        .map(|row| {
            let total: f64 = row.values().sum();
            row.into_iter()
                .map(|(c, f)| {
                    let tf = if options.normalize { f / total } else { f };
                    (c, tf * (n / df[c] as f64).ln())
                })
                .collect()
        })
        .collect();
    SparseMatrix::from_rows(subset.to_vec(), cols, rows)
}

/// Original indices of the `top_n` heaviest columns by column sum, heaviest
/// first, ties to the lower index.
pub fn ranked_columns(m: &SparseMatrix, top_n: usize) -> Vec<usize> {
    let sums = m.column_sums();
    let mut order: Vec<usize> = (0..m.cols()).collect();
    order.sort_by(|&a, &b| sums[b].total_cmp(&sums[a]).then(a.cmp(&b)));
    order.truncate(top_n);
    order
}

/// Keeps the `top_n` columns with the largest sums, re-indexed in rank order.
pub fn cull(m: &SparseMatrix, top_n: usize) -> Result<SparseMatrix> {
    if top_n == 0 {
        return Err(Error::InvalidArgument("top_n must be at least 1".into()));
    }
    Ok(select_columns(m, &ranked_columns(m, top_n)))
}

/// Projects `m` onto `columns`; column `i` of the result is `columns[i]` of `m`.
pub fn select_columns(m: &SparseMatrix, columns: &[usize]) -> SparseMatrix {
    let mut new_index = vec![usize::MAX; m.cols()];
    for (new, &old) in columns.iter().enumerate() {
        new_index[old] = new;
    }
    let rows = m
        .rows
        .iter()
        .map(|row| {
            let mut out: Vec<(usize, f64)> = row
                .iter()
                .filter(|&&(c, _)| new_index[c] != usize::MAX)
                .map(|&(c, w)| (new_index[c], w))
                .collect();
            out.sort_by_key(|&(c, _)| c);
            out
        })
        .collect();
    SparseMatrix {
        row_ids: m.row_ids.clone(),
        cols: columns.len(),
        rows,
    }
}

/// Scales every nonzero row to unit Euclidean norm.
pub fn unit_rows(m: &SparseMatrix) -> SparseMatrix {
    let rows = (0..m.rows())
        .map(|r| {
            let norm = m.row_norm(r);
            m.rows[r]
                .iter()
                .map(|&(c, w)| (c, if norm > 0.0 { w / norm } else { w }))
                .collect()
        })
        .collect();
    SparseMatrix {
        row_ids: m.row_ids.clone(),
        cols: m.cols,
        rows,
    }
}

/// Places `b`'s columns after `a`'s. With `unit_first` each half-row is
/// scaled to unit norm beforehand; all-zero half-rows stay zero.
pub fn concatenate(a: &SparseMatrix, b: &SparseMatrix, unit_first: bool) -> Result<SparseMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::RowIdMismatch {
            row: a.rows().min(b.rows()),
        });
    }
    if let Some(row) = a.row_ids.iter().zip(&b.row_ids).position(|(x, y)| x != y) {
        return Err(Error::RowIdMismatch { row });
    }
    let (a, b) = if unit_first {
        (unit_rows(a), unit_rows(b))
    } else {
        (a.clone(), b.clone())
    };
    let offset = a.cols;
    let rows = a
        .rows
        .into_iter()
        .zip(b.rows)
        .map(|(mut left, right)| {
            left.extend(right.into_iter().map(|(c, w)| (c + offset, w)));
            left
        })
        .collect();
    Ok(SparseMatrix {
        row_ids: a.row_ids,
        cols: a.cols + b.cols,
        rows,
    })
}

/// One dense vector per row. Fails when the matrix is wider than `max_cols`.
pub fn to_dense(m: &SparseMatrix, max_cols: usize) -> Result<Vec<DenseVector>> {
    if m.cols() > max_cols {
        return Err(Error::TooWide {
            cols: m.cols(),
            max: max_cols,
        });
    }
    m.rows
        .iter()
        .map(|row| {
            let mut v = vec![0.0; m.cols];
            for &(c, w) in row {
                v[c] = w;
            }
            DenseVector::new(v)
        })
        .collect()
}
