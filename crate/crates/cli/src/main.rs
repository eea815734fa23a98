//! `ktree`: command-line driver for representation, clustering,
//! classification and evaluation. Every stage reads and writes plain files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ktree_core::classify::{self, TrainParams};
use ktree_core::corpus::{self, Bm25Params, LfIdfOptions, LinkGraph, SparseMatrix};
use ktree_core::kmeans::{kmeans_restarts, LloydParams};
use ktree_core::ktree::assign_by_cosine;
use ktree_core::nmf::{self, NmfParams};
use ktree_core::synth::{self, SynthConfig};
use ktree_core::{eval, rng_from_seed, Clustering, DenseVector, KTree, KTreeConfig, LabelSet};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "ktree", version, about = "K-tree document clustering toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weight documents (TF-IDF, BM25) or links (LF-IDF) into a matrix file.
    Represent(RepresentArgs),
    /// Keep the top-n columns by column sum.
    Cull(CullArgs),
    /// Concatenate two matrices with identical rows.
    Concat(ConcatArgs),
    /// Build a K-tree and extract clusters from it.
    Ktree(KtreeArgs),
    /// k-means++ with restarts.
    Kmeans(KmeansArgs),
    /// Projected-gradient NMF clustering.
    Nmf(NmfArgs),
    /// Assign documents to the nearest centroid by cosine similarity.
    Assign(AssignArgs),
    /// Purity and negentropy of a clustering.
    Eval(EvalArgs),
    /// One-vs-rest linear SVM, optionally as a text+link committee.
    Classify(ClassifyArgs),
    /// Leaf-level negentropy for a series of tree orders.
    SweepOrder(SweepArgs),
    /// Write a seeded synthetic labelled corpus with a link graph.
    GenSynth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Tfidf,
    Bm25,
    Lfidf,
}

#[derive(Args)]
struct RepresentArgs {
    #[arg(long, value_enum)]
    scheme: Scheme,
    /// Documents file (tfidf, bm25).
    #[arg(long, required_unless_present = "links")]
    docs: Option<PathBuf>,
    /// Links file (lfidf).
    #[arg(long, conflicts_with = "docs")]
    links: Option<PathBuf>,
    /// Rows for lfidf: the first field of each line is a document id.
    #[arg(long)]
    subset: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    /// Count inbound links as well as outbound ones.
    #[arg(long)]
    inbound: bool,
    /// Divide link frequencies by the document's link total.
    #[arg(long, overrides_with = "no_normalize")]
    normalize: bool,
    #[arg(long)]
    no_normalize: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct CullArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    top: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ConcatArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Scale each half-row to unit length first.
    #[arg(long)]
    unit_first: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct DenseInput {
    #[arg(short, long)]
    input: PathBuf,
    /// Scale every row to unit length before clustering.
    #[arg(long)]
    unit_rows: bool,
    #[arg(long, default_value_t = corpus::DEFAULT_MAX_DENSE_COLS)]
    max_dense_cols: usize,
}

impl DenseInput {
    fn load(&self) -> Result<(Vec<String>, Vec<DenseVector>)> {
        let mut m = SparseMatrix::load(&self.input)
            .with_context(|| format!("reading {}", self.input.display()))?;
        if self.unit_rows {
            m = corpus::unit_rows(&m);
        }
        let dense = corpus::to_dense(&m, self.max_dense_cols)?;
        Ok((m.row_ids().to_vec(), dense))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Leftasis,
    Rearranged,
    Cosine,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Leftasis => "leftasis",
            Method::Rearranged => "rearranged",
            Method::Cosine => "cosine",
        }
    }
}

#[derive(Args)]
struct KtreeArgs {
    #[command(flatten)]
    input: DenseInput,
    #[arg(long)]
    order: usize,
    #[arg(long, value_enum, default_value = "leftasis")]
    method: Method,
    /// Level to cut (root = 1); defaults to the codebook level.
    #[arg(long, conflicts_with = "codebook_k")]
    level: Option<usize>,
    /// Recluster the codebook into exactly this many clusters with
    /// k-means++ and assign documents by cosine similarity.
    #[arg(long)]
    codebook_k: Option<usize>,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Also write a depth-first dump of the tree.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct KmeansArgs {
    #[command(flatten)]
    input: DenseInput,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Also write the centroids as a matrix file.
    #[arg(long)]
    centroids: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct NmfArgs {
    /// Documents-by-features matrix; factorized as features × documents.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 70)]
    max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// CSV of `iter,objective`.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct AssignArgs {
    #[command(flatten)]
    input: DenseInput,
    /// Matrix file whose rows are the centroids.
    #[arg(long)]
    centroids: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    clustering: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Feature matrix (the text model in committee mode).
    #[arg(short, long)]
    input: PathBuf,
    /// Second matrix with the same rows; its model joins a committee.
    #[arg(long)]
    committee: Option<PathBuf>,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: DenseInput,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "800,400,200,100,50,25")]
    orders: Vec<usize>,
    /// Build each tree from labelled documents only.
    #[arg(long)]
    labeled_only: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write the table here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 5000)]
    docs: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 3000)]
    vocab: usize,
    #[arg(long, default_value_t = 0.1)]
    train_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ktree: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Represent(a) => represent(a),
        Command::Cull(a) => {
            let m = SparseMatrix::load(&a.input)?;
            let out = corpus::cull(&m, a.top)?;
            eprintln!("# cull top={} cols {} -> {}", a.top, m.cols(), out.cols());
            out.write(&a.output)?;
            Ok(())
        }
        Command::Concat(a) => {
            let left = SparseMatrix::load(&a.a)?;
            let right = SparseMatrix::load(&a.b)?;
            let out = corpus::concatenate(&left, &right, a.unit_first)?;
            eprintln!(
                "# concat unit_first={} cols {}+{}",
                a.unit_first,
                left.cols(),
                right.cols()
            );
            out.write(&a.output)?;
            Ok(())
        }
        Command::Ktree(a) => ktree(a),
        Command::Kmeans(a) => kmeans(a),
        Command::Nmf(a) => run_nmf(a),
        Command::Assign(a) => {
            let (ids, vectors) = a.input.load()?;
            let centroids =
                corpus::to_dense(&SparseMatrix::load(&a.centroids)?, a.input.max_dense_cols)?;
            let c = assign_by_cosine(&centroids, &ids, &vectors)?;
            report_fallbacks(&c);
            c.write(&a.output)?;
            Ok(())
        }
        Command::Eval(a) => {
            let clustering = Clustering::load(&a.clustering)?;
            let labels = LabelSet::load(&a.labels)?;
            let report = eval::evaluate(&clustering, &labels)?.to_tsv();
            match a.output {
                Some(path) => fs::write(path, report)?,
                None => print!("{report}"),
            }
            Ok(())
        }
        Command::Classify(a) => run_classify(a),
        Command::SweepOrder(a) => sweep(a),
        Command::GenSynth(a) => {
            let config = SynthConfig {
                docs: a.docs,
                classes: a.classes,
                vocab: a.vocab,
                train_fraction: a.train_fraction,
                ..SynthConfig::default()
            };
            eprintln!(
                "# gen-synth docs={} classes={} vocab={} seed={}",
                a.docs, a.classes, a.vocab, a.seed
            );
            synth::generate(&config, &mut rng_from_seed(a.seed))?.write_to(&a.out_dir)?;
            Ok(())
        }
    }
}

/// Document ids from the first field of every non-blank line.
fn read_ids(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_whitespace().next())
        .map(str::to_owned)
        .collect())
}

fn represent(a: RepresentArgs) -> Result<()> {
    let m = match a.scheme {
        Scheme::Tfidf | Scheme::Bm25 => {
            let Some(path) = &a.docs else {
                bail!("--docs is required for {}", scheme_name(a.scheme))
            };
            let mut docs = corpus::load_documents(path)?;
            if let Some(stop) = &a.stopwords {
                docs.tokens =
                    corpus::remove_stopwords(&docs.tokens, &corpus::load_stopwords(stop)?);
            }
            if matches!(a.scheme, Scheme::Tfidf) {
                eprintln!("# represent scheme=tfidf docs={}", docs.len());
                corpus::tfidf(&docs.ids, &docs.tokens)?
            } else {
                eprintln!(
                    "# represent scheme=bm25 k1={} b={} docs={}",
                    a.k1,
                    a.b,
                    docs.len()
                );
                corpus::bm25(&docs.ids, &docs.tokens, Bm25Params { k1: a.k1, b: a.b })?
            }
        }
        Scheme::Lfidf => {
            let Some(path) = &a.links else {
                bail!("--links is required for lfidf")
            };
            let Some(subset) = &a.subset else {
                bail!("--subset is required for lfidf")
            };
            let graph = LinkGraph::load(path)?;
            let rows = read_ids(subset)?;
            let options = LfIdfOptions {
                include_inbound: a.inbound,
                normalize: a.normalize && !a.no_normalize,
            };
            eprintln!(
                "# represent scheme=lfidf inbound={} normalize={} rows={} universe={}",
                options.include_inbound,
                options.normalize,
                rows.len(),
                graph.universe().len()
            );
            corpus::lfidf(&graph, &rows, options)?
        }
    };
    m.write(&a.output)?;
    Ok(())
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Tfidf => "tfidf",
        Scheme::Bm25 => "bm25",
        Scheme::Lfidf => "lfidf",
    }
}

fn report_fallbacks(c: &Clustering) {
    if c.fallbacks > 0 {
        eprintln!(
            "# warning: {} document(s) could not be scored and were put in cluster 0",
            c.fallbacks
        );
    }
}

/// Lists `clustering` in `row_ids` order.
fn in_row_order(clustering: &Clustering, row_ids: &[String]) -> Result<Clustering> {
    let by_id: HashMap<&str, usize> = clustering.iter().collect();
    let clusters = row_ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .with_context(|| format!("document {id} missing from clustering"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Clustering::new(row_ids.to_vec(), clusters, clustering.num_clusters())?;
    out.fallbacks = clustering.fallbacks;
    Ok(out)
}

fn build_tree(ids: &[String], vectors: &[DenseVector], order: usize, seed: u64) -> Result<KTree> {
    let config = KTreeConfig::new(order)?;
    let tree = KTree::build(
        ids.iter().cloned().zip(vectors.iter().cloned()),
        config,
        seed,
    )?;
    Ok(tree)
}

fn ktree(a: KtreeArgs) -> Result<()> {
    let (ids, vectors) = a.input.load()?;
    eprintln!(
        "# ktree order={} method={} level={:?} codebook_k={:?} runs={} seed={}",
        a.order,
        a.method.name(),
        a.level,
        a.codebook_k,
        a.runs,
        a.seed
    );
    let mut tree = build_tree(&ids, &vectors, a.order, a.seed)?;
    let counts = tree.distance_counts();
    eprintln!(
        "# built depth={} vectors={} distance_evals search={} split={}",
        tree.depth(),
        tree.len(),
        counts.search,
        counts.split
    );
    for s in tree.level_stats() {
        eprintln!(
            "# level {} nodes={} clusters={}",
            s.level, s.nodes, s.clusters
        );
    }
    if a.method == Method::Rearranged {
        tree.rearrange();
    }
    let depth = tree.depth();
    let clustering = if let Some(k) = a.codebook_k {
        let codebook = tree.codebook()?;
        if k > codebook.len() {
            bail!(
                "codebook has {} vectors, fewer than --codebook-k {k}",
                codebook.len()
            );
        }
        let mut rng = rng_from_seed(a.seed);
        let result = kmeans_restarts(&codebook, k, a.runs, LloydParams::default(), &mut rng)?;
        eprintln!(
            "# codebook={} k={k} distortion={:.6}",
            codebook.len(),
            result.distortion
        );
        assign_by_cosine(&result.centroids, &ids, &vectors)?
    } else {
        if depth < 2 {
            bail!("tree has a single leaf; lower --order to get clusters");
        }
        let level = a.level.unwrap_or(depth - 1);
        match a.method {
            Method::Cosine => assign_by_cosine(&tree.keys_at_level(level)?, &ids, &vectors)?,
            Method::Leftasis | Method::Rearranged => tree.clusters_at_level(level)?,
        }
    };
    report_fallbacks(&clustering);
    eprintln!("# clusters={}", clustering.num_clusters());
    if let Some(path) = &a.dump {
        fs::write(path, tree.dump())?;
    }
    in_row_order(&clustering, &ids)?.write(&a.output)?;
    Ok(())
}

fn kmeans(a: KmeansArgs) -> Result<()> {
    let (ids, vectors) = a.input.load()?;
    eprintln!("# kmeans k={} runs={} seed={}", a.k, a.runs, a.seed);
    let result = kmeans_restarts(
        &vectors,
        a.k,
        a.runs,
        LloydParams::default(),
        &mut rng_from_seed(a.seed),
    )?;
    eprintln!(
        "# distortion={:.6} iterations={}",
        result.distortion, result.iterations
    );
    if let Some(path) = &a.centroids {
        let names: Vec<String> = (0..a.k).map(|i| format!("c{i}")).collect();
        SparseMatrix::from_dense(names, &result.centroids)?.write(path)?;
    }
    Clustering::new(ids, result.assignment, a.k)?.write(&a.output)?;
    Ok(())
}

fn run_nmf(a: NmfArgs) -> Result<()> {
    let m = SparseMatrix::load(&a.input)?;
    let v = nmf::term_document_matrix(&m);
    eprintln!(
        "# nmf r={} max_iters={} seed={} V={}x{}",
        a.r,
        a.max_iters,
        a.seed,
        v.nrows(),
        v.ncols()
    );
    let params = NmfParams {
        max_iters: a.max_iters,
        ..NmfParams::default()
    };
    let result = nmf::nmf_pg(&v, a.r, params, &mut rng_from_seed(a.seed))?;
    let clustering = nmf::assign_by_max_h(&result.h, m.row_ids())?;
    report_fallbacks(&clustering);
    if let Some(path) = &a.trace {
        let mut csv = String::from("iter,objective\n");
        for (i, obj) in result.objective_trace.iter().enumerate() {
            writeln!(csv, "{i},{}", corpus::format_sig9(*obj)).unwrap();
        }
        fs::write(path, csv)?;
    }
    clustering.write(&a.output)?;
    Ok(())
}

fn run_classify(a: ClassifyArgs) -> Result<()> {
    let text = SparseMatrix::load(&a.input)?;
    let labels = LabelSet::load(&a.labels)?;
    let split: HashMap<String, bool> = classify::load_split(&a.split)?.into_iter().collect();
    let (mut train_rows, mut test_rows) = (Vec::new(), Vec::new());
    for (r, id) in text.row_ids().iter().enumerate() {
        match split.get(id) {
            Some(true) => train_rows.push(r),
            Some(false) if labels.get(id).is_some() => test_rows.push(r),
            _ => {}
        }
    }
    if test_rows.is_empty() {
        bail!("split file selects no labelled test documents");
    }
    let params = TrainParams {
        epochs: a.epochs,
        lambda: a.lambda,
    };
    eprintln!(
        "# classify epochs={} lambda={} seed={} train={} test={} committee={}",
        a.epochs,
        a.lambda,
        a.seed,
        train_rows.len(),
        test_rows.len(),
        a.committee.is_some()
    );
    let mut rng = rng_from_seed(a.seed);
    let model = classify::train(&text, &train_rows, &labels, params, &mut rng)?;
    let text_scores = classify::predict_scores(&model, &text, &test_rows)?;
    let predictions = match &a.committee {
        None => text_scores.predictions(),
        Some(path) => {
            let link = SparseMatrix::load(path)?;
            if link.row_ids() != text.row_ids() {
                bail!(
                    "{} and {} have different rows",
                    a.input.display(),
                    path.display()
                );
            }
            let link_model = classify::train(&link, &train_rows, &labels, params, &mut rng)?;
            let link_scores = classify::predict_scores(&link_model, &link, &test_rows)?;
            classify::committee(&text_scores, &link_scores)?
        }
    };
    let recall = classify::recall(&text_scores.doc_ids, &predictions, &labels)?;
    let mut out = String::new();
    for (id, p) in text_scores.doc_ids.iter().zip(&predictions) {
        writeln!(out, "{id}\t{p}").unwrap();
    }
    fs::write(&a.output, out)?;
    println!("recall\t{recall:.6}");
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (mut ids, mut vectors) = a.input.load()?;
    let labels = LabelSet::load(&a.labels)?;
    if a.labeled_only {
        let keep: Vec<bool> = ids.iter().map(|id| labels.get(id).is_some()).collect();
        let mut k = keep.iter();
        ids.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        vectors.retain(|_| *k.next().unwrap());
    }
    eprintln!(
        "# sweep-order orders={:?} labeled_only={} seed={} docs={}",
        a.orders,
        a.labeled_only,
        a.seed,
        ids.len()
    );
    let mut out = String::from("order\tmethod\tclusters\tmean_negentropy\tweighted_negentropy\n");
    for &order in &a.orders {
        let mut tree = build_tree(&ids, &vectors, order, a.seed)?;
        for method in [Method::Leftasis, Method::Rearranged] {
            if method == Method::Rearranged {
                tree.rearrange();
            }
            let c = tree.leaf_clusters()?;
            let mean = eval::mean_negentropy(&c, &labels, false)?;
            let weighted = eval::mean_negentropy(&c, &labels, true)?;
            writeln!(
                out,
                "{order}\t{}\t{}\t{mean:.6}\t{weighted:.6}",
                method.name(),
                c.num_clusters()
            )
            .unwrap();
        }
    }
    match a.output {
        Some(path) => fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}
