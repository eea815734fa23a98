//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ktree_core::eval::{self, Clustering, LabelSet};
use ktree_core::kmeans::{self, LloydParams};
use ktree_core::ktree::Node;
use ktree_core::nmf::{self, NmfParams};
use ktree_core::{rng_from_seed, DenseVector, KTree, KTreeConfig};
use ndarray::Array2;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("negentropy golden values", golden_values),
        ("metric identities", metric_identities),
        ("k-tree structure", tree_structure),
        ("distance-count scaling", scaling),
        ("k-means brute-force optimum", kmeans_oracle),
        ("k-means++ far seeding", plusplus_seeding),
        ("nmf convergence and monotonicity", nmf_suite),
        ("pipeline trends on synthetic corpus", pipeline_trends),
        ("cli determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- metrics

/// Four labels, six documents each, grouped by per-cluster label counts.
fn fixture(counts: &[[usize; 4]]) -> (Clustering, LabelSet) {
    let mut labels = LabelSet::new();
    let (mut ids, mut clusters) = (Vec::new(), Vec::new());
    for (c, row) in counts.iter().enumerate() {
        for (l, &n) in row.iter().enumerate() {
            for _ in 0..n {
                let id = format!("d{}", ids.len());
                labels.insert(id.clone(), ["A", "B", "C", "D"][l]);
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

fn golden_values() -> Outcome {
    let solutions = [
        (
            [[3, 3, 0, 0], [3, 0, 3, 0], [0, 3, 0, 3], [0, 0, 3, 3]],
            0.5,
            1e-9,
        ),
        (
            [[3, 1, 1, 1], [1, 3, 1, 1], [1, 1, 3, 1], [1, 1, 1, 3]],
            0.1038,
            5e-5,
        ),
    ];
    let mut seen = Vec::new();
    for (s, (counts, want, tol)) in solutions.iter().enumerate() {
        let (c, l) = fixture(counts);
        let r = eval::purity(&c, &l).map_err(|e| e.to_string())?;
        ensure((r.micro - 0.5).abs() <= 1e-9, || {
            format!("solution {}: micro purity {}", s + 1, r.micro)
        })?;
        for st in &r.per_cluster {
            ensure((st.purity - 0.5).abs() <= 1e-9, || {
                format!("solution {}: purity {}", s + 1, st.purity)
            })?;
            ensure((st.negentropy - want).abs() <= *tol, || {
                format!("solution {}: negentropy {} vs {want}", s + 1, st.negentropy)
            })?;
        }
        seen.push(r.per_cluster[0].negentropy);
    }
    Ok(format!("negentropy {:.6} and {:.6}", seen[0], seen[1]))
}

fn metric_identities() -> Outcome {
    let mut rng = rng_from_seed(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let labels = rng.random_range(2..=12);
        let counts: Vec<usize> = (0..labels)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0
                } else {
                    rng.random_range(1..50)
                }
            })
            .collect();
        if counts.iter().all(|&c| c == 0) {
            continue;
        }
        let neg = eval::negentropy_of_counts(&counts, labels).map_err(|e| e.to_string())?;
        let want = 1.0 - eval::entropy_of_counts(&counts) / (labels as f64).log2();
        worst = worst.max((neg - want).abs());
    }
    ensure(worst <= 1e-12, || {
        format!("negentropy identity off by {worst:e}")
    })?;

    let mut worst_purity: f64 = 0.0;
    for trial in 0..200 {
        let n = rng.random_range(1..300);
        let k = rng.random_range(1..12);
        let nl = rng.random_range(1..8);
        let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let clusters: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let doc_labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..nl)).collect();
        let labels: LabelSet = ids
            .iter()
            .zip(&doc_labels)
            .map(|(id, l)| (id.clone(), format!("L{l}")))
            .collect();
        let c = Clustering::new(ids.clone(), clusters.clone(), k).unwrap();
        let r = eval::purity(&c, &labels).map_err(|e| e.to_string())?;

        // Brute force: scan every document once per (cluster, label) pair.
        let mut majority_total = 0;
        let mut weighted = 0.0;
        for cl in 0..k {
            let size = clusters.iter().filter(|&&x| x == cl).count();
            if size == 0 {
                continue;
            }
            let best = (0..nl)
                .map(|l| {
                    (0..n)
                        .filter(|&i| clusters[i] == cl && doc_labels[i] == l)
                        .count()
                })
                .max()
                .unwrap();
            majority_total += best;
            weighted += size as f64 * (best as f64 / size as f64);
        }
        let brute = majority_total as f64 / n as f64;
        worst_purity = worst_purity
            .max((r.micro - brute).abs())
            .max((weighted / n as f64 - brute).abs());
        let from_report: f64 = r
            .per_cluster
            .iter()
            .map(|s| s.size as f64 * s.purity)
            .sum::<f64>()
            / n as f64;
        worst_purity = worst_purity.max((from_report - brute).abs());
        ensure(worst_purity <= 1e-12, || {
            format!("trial {trial}: micro purity {} vs {brute}", r.micro)
        })?;
    }
    Ok(format!(
        "max identity error {worst:.1e}, max purity error {worst_purity:.1e}"
    ))
}

// ---------------------------------------------------------------- k-tree

struct Walk {
    order: usize,
    leaf_depths: Vec<usize>,
    ids: Vec<String>,
}

/// Returns the subtree's vector sum and size.
fn walk(node: &Node, depth: usize, w: &mut Walk) -> Result<(Vec<f64>, usize), String> {
    match node {
        Node::Leaf(leaf) => {
            ensure((1..=w.order).contains(&leaf.len()), || {
                format!("leaf holds {} vectors", leaf.len())
            })?;
            w.leaf_depths.push(depth);
            w.ids.extend(leaf.ids().iter().cloned());
            let mut sum = vec![0.0; leaf.vectors()[0].dim()];
            for v in leaf.vectors() {
                for (s, x) in sum.iter_mut().zip(v.iter()) {
                    *s += x;
                }
            }
            Ok((sum, leaf.len()))
        }
        Node::Internal(node) => {
            let n = node.keys().len();
            ensure((1..=w.order).contains(&n), || {
                format!("internal node holds {n} keys")
            })?;
            ensure(
                node.children().len() == n && node.counts().len() == n,
                || format!("{n} keys but {} children", node.children().len()),
            )?;
            let mut total: Option<Vec<f64>> = None;
            let mut size = 0;
            for ((key, &count), child) in node.keys().iter().zip(node.counts()).zip(node.children())
            {
                let (sum, len) = walk(child, depth + 1, w)?;
                ensure(count == len, || {
                    format!("key count {count} but subtree holds {len}")
                })?;
                let mean: Vec<f64> = sum.iter().map(|s| s / len as f64).collect();
                let err = key
                    .iter()
                    .zip(&mean)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
                ensure(err <= 1e-6 * norm, || {
                    format!("key off its subtree mean by {err:e} (norm {norm:e})")
                })?;
                size += len;
                match &mut total {
                    None => total = Some(sum),
                    Some(t) => t.iter_mut().zip(&sum).for_each(|(a, b)| *a += b),
                }
            }
            Ok((total.unwrap(), size))
        }
    }
}

/// Clustered points offset away from the origin.
fn clustered_points<R: Rng>(rng: &mut R, n: usize, dim: usize, centers: usize) -> Vec<DenseVector> {
    let centers: Vec<Vec<f64>> = (0..centers)
        .map(|_| (0..dim).map(|_| rng.random_range(5.0..15.0)).collect())
        .collect();
    (0..n)
        .map(|_| {
            let c = &centers[rng.random_range(0..centers.len())];
            DenseVector::new(c.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect()).unwrap()
        })
        .collect()
}

fn tree_structure() -> Outcome {
    let mut rng = rng_from_seed(3);
    let orders = [2, 3, 5, 10, 50];
    let mut max_depth = 0;
    for build in 0..200 {
        let order = orders[build % orders.len()];
        let n = if build % 4 == 0 {
            rng.random_range(4000..=5000)
        } else {
            rng.random_range(1..=2000)
        };
        let dim = rng.random_range(1..=16);
        let centers = rng.random_range(1..=20);
        let points = clustered_points(&mut rng, n, dim, centers);
        let entries = points
            .into_iter()
            .enumerate()
            .map(|(i, v)| (format!("p{i}"), v));
        let tree = KTree::build(entries, KTreeConfig::new(order).unwrap(), build as u64)
            .map_err(|e| e.to_string())?;
        let mut w = Walk {
            order,
            leaf_depths: Vec::new(),
            ids: Vec::new(),
        };
        let (_, size) = walk(tree.root(), 1, &mut w)
            .map_err(|e| format!("build {build} (n={n}, m={order}): {e}"))?;
        ensure(size == n, || {
            format!("build {build}: tree holds {size} of {n}")
        })?;
        ensure(w.leaf_depths.iter().all(|&d| d == w.leaf_depths[0]), || {
            format!("build {build}: leaves at depths {:?}", w.leaf_depths)
        })?;
        ensure(w.leaf_depths[0] == tree.depth(), || {
            format!("build {build}: depth mismatch")
        })?;
        w.ids
            .sort_unstable_by_key(|id| id[1..].parse::<usize>().unwrap());
        ensure(
            w.ids
                .iter()
                .enumerate()
                .all(|(i, id)| *id == format!("p{i}")),
            || format!("build {build}: stored ids differ from the input"),
        )?;
        max_depth = max_depth.max(tree.depth());
    }
    Ok(format!("200 builds, max depth {max_depth}"))
}

fn scaling() -> Outcome {
    let mut rng = rng_from_seed(4);
    let sizes = [1_000usize, 10_000, 100_000];
    let mut counts = Vec::new();
    let mut leaves = 0;
    let mut points = clustered_points(&mut rng, sizes[2], 100, 200);
    for &n in &sizes {
        let entries = points[..n]
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, v)| (format!("p{i}"), v));
        let tree =
            KTree::build(entries, KTreeConfig::new(50).unwrap(), 4).map_err(|e| e.to_string())?;
        counts.push(tree.distance_counts().total() as f64);
        leaves = tree.codebook().map_err(|e| e.to_string())?.len();
    }
    points.clear();

    // Ordinary least squares for a; the residual is judged against the
    // total count. Per-build deviations are reported alongside.
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64 * (n as f64).ln()).collect();
    let a = xs.iter().zip(&counts).map(|(x, c)| x * c).sum::<f64>()
        / xs.iter().map(|x| x * x).sum::<f64>();
    let residual: f64 = xs.iter().zip(&counts).map(|(x, c)| (c - a * x).abs()).sum();
    let share = residual / counts.iter().sum::<f64>();
    let deviations: Vec<String> = xs
        .iter()
        .zip(&counts)
        .map(|(x, c)| format!("{:+.1}%", (a * x - c) / c * 100.0))
        .collect();
    let lloyd_pass = (sizes[2] * leaves) as f64;
    let ratio = lloyd_pass / counts[2];
    let detail = format!(
        "counts {:?}, a={a:.3}, residual {:.1}% of total (per build {}), one Lloyd pass with k={leaves} costs {ratio:.1}x the tree build",
        counts.iter().map(|c| *c as u64).collect::<Vec<_>>(),
        share * 100.0,
        deviations.join(" "),
    );
    ensure(share <= 0.10 && ratio >= 10.0, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- k-means

fn brute_force_distortion(points: &[DenseVector], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].dim();
    let mut assign = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            sizes[a] += 1;
            sums[a].iter_mut().zip(p.iter()).for_each(|(s, x)| *s += x);
        }
        let mut d = 0.0;
        for (p, &a) in points.iter().zip(&assign) {
            d += p
                .iter()
                .zip(&sums[a])
                .map(|(x, s)| (x - s / sizes[a] as f64).powi(2))
                .sum::<f64>();
        }
        best = best.min(d);
        // Next assignment in base k.
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            assign[i] += 1;
            if assign[i] < k {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
    }
}

fn kmeans_oracle() -> Outcome {
    let mut rng = rng_from_seed(5);
    let params = LloydParams::default();
    let mut hits = 0;
    let mut history_checks = 0;
    for instance in 0..100u64 {
        let n = rng.random_range(3..=12);
        let k = rng.random_range(1..=3);
        let dim = rng.random_range(1..=3);
        let points: Vec<DenseVector> = (0..n)
            .map(|_| {
                DenseVector::new((0..dim).map(|_| rng.random_range(0.0..10.0)).collect()).unwrap()
            })
            .collect();
        let optimum = brute_force_distortion(&points, k);
        let best = kmeans::kmeans_restarts(&points, k, 50, params, &mut rng_from_seed(instance))
            .map_err(|e| e.to_string())?;
        if (best.distortion - optimum).abs() <= 1e-9 * optimum.max(1.0) {
            hits += 1;
        }
        for seed in kmeans::restart_seeds(&mut rng_from_seed(instance), 50) {
            let run = kmeans::kmeans(&points, k, params, &mut rng_from_seed(seed))
                .map_err(|e| e.to_string())?;
            for pair in run.history.windows(2) {
                history_checks += 1;
                ensure(pair[1] <= pair[0] * (1.0 + 1e-12), || {
                    format!(
                        "instance {instance}: distortion rose {} -> {}",
                        pair[0], pair[1]
                    )
                })?;
            }
        }
    }
    let detail = format!("{hits}/100 optimal, {history_checks} iteration pairs non-increasing");
    ensure(hits >= 95, || detail.clone())?;
    Ok(detail)
}

fn plusplus_seeding() -> Outcome {
    let mut rng = rng_from_seed(6);
    let mut points = Vec::new();
    for centre in [0.0, 1000.0] {
        for _ in 0..50 {
            points.push(
                DenseVector::new(vec![
                    centre + rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ])
                .unwrap(),
            );
        }
    }
    let cluster = |i: usize| i / 50;
    let mut far = 0;
    for trial in 0..10_000u64 {
        let seeds = kmeans::seed_plusplus_indices(&points, 2, &mut rng_from_seed(trial))
            .map_err(|e| e.to_string())?;
        if cluster(seeds[0]) != cluster(seeds[1]) {
            far += 1;
        }
    }
    let detail = format!("{far}/10000 second seeds in the other cluster");
    ensure(far >= 9_900, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- nmf

fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(0.0..1.0))
}

fn nmf_suite() -> Outcome {
    let mut rng = rng_from_seed(7);
    let mut planted = Vec::new();
    let mut planted_ok = true;
    for r in [1, 3] {
        let mut hits = 0;
        let mut worst: f64 = 0.0;
        for trial in 0..5u64 {
            let v = random_matrix(&mut rng, 20, r).dot(&random_matrix(&mut rng, r, 30));
            let result = nmf::nmf_pg(&v, r, NmfParams::default(), &mut rng_from_seed(trial))
                .map_err(|e| e.to_string())?;
            let last = *result.objective_trace.last().unwrap();
            let direct = nmf::objective(&v, &result.w, &result.h);
            ensure((direct - last).abs() <= 1e-12 * direct.max(1e-300), || {
                "trace disagrees with the returned factors".to_owned()
            })?;
            let ratio = last / v.iter().map(|x| x * x).sum::<f64>();
            worst = worst.max(ratio);
            if result.iterations <= 70 && ratio <= 1e-6 {
                hits += 1;
            }
        }
        planted_ok &= hits == 5;
        planted.push(format!("rank {r}: {hits}/5 reach 1e-6 (worst {worst:.1e})"));
    }

    let mut rises = 0;
    let mut negative_runs = 0;
    let mut steps = 0;
    for trial in 0..20u64 {
        let v = random_matrix(&mut rng, 20, 30);
        let r = [2, 5, 10][trial as usize % 3];
        let mut negative = false;
        let result = nmf::nmf_pg_observed(
            &v,
            r,
            NmfParams::default(),
            &mut rng_from_seed(trial),
            |_, w, h| {
                negative |= w.iter().chain(h.iter()).any(|&x| x < 0.0);
            },
        )
        .map_err(|e| e.to_string())?;
        negative_runs += usize::from(negative);
        for pair in result.objective_trace.windows(2) {
            steps += 1;
            rises += usize::from(pair[1] > pair[0] * (1.0 + 1e-12));
        }
    }
    let detail = format!(
        "planted {}; {rises} of {steps} trace steps rose; {negative_runs} of 20 runs saw a negative entry",
        planted.join(", ")
    );
    ensure(planted_ok && rises == 0 && negative_runs == 0, || {
        detail.clone()
    })?;
    Ok(detail)
}

// ---------------------------------------------------------------- cli

fn ktree_bin() -> &'static str {
    env!("CARGO_BIN_EXE_ktree")
}

/// Runs the binary and returns its stdout and stderr.
fn run_full(args: &[&str]) -> Result<(String, String), String> {
    let out = Command::new(ktree_bin())
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    if !out.status.success() {
        return Err(format!("ktree {}: {}", args.join(" "), stderr.trim()));
    }
    Ok((String::from_utf8_lossy(&out.stdout).into_owned(), stderr))
}

fn run(args: &[&str]) -> Result<String, String> {
    run_full(args).map(|(stdout, _)| stdout)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthetic corpus plus text, link and concatenated matrices.
struct Prepared {
    corpus: PathBuf,
    text: PathBuf,
    link: PathBuf,
    both: PathBuf,
}

fn prepare(dir: &Path, docs: usize, seed: u64) -> Result<Prepared, String> {
    let corpus = dir.join("corpus");
    let f = |name: &str| dir.join(name);
    run(&[
        "gen-synth",
        "--out-dir",
        p(&corpus),
        "--docs",
        &docs.to_string(),
        "--seed",
        &seed.to_string(),
    ])?;
    let docs_file = corpus.join("docs.tsv");
    run(&[
        "represent",
        "--scheme",
        "bm25",
        "--k1",
        "2",
        "--b",
        "0.75",
        "--docs",
        p(&docs_file),
        "--stopwords",
        p(&corpus.join("stopwords.txt")),
        "-o",
        p(&f("bm25.txt")),
    ])?;
    run(&[
        "cull",
        "-i",
        p(&f("bm25.txt")),
        "--top",
        "2000",
        "-o",
        p(&f("text.txt")),
    ])?;
    run(&[
        "represent",
        "--scheme",
        "lfidf",
        "--inbound",
        "--no-normalize",
        "--links",
        p(&corpus.join("links.txt")),
        "--subset",
        p(&docs_file),
        "-o",
        p(&f("lfidf.txt")),
    ])?;
    run(&[
        "cull",
        "-i",
        p(&f("lfidf.txt")),
        "--top",
        "2000",
        "-o",
        p(&f("link.txt")),
    ])?;
    run(&[
        "concat",
        "--a",
        p(&f("text.txt")),
        "--b",
        p(&f("link.txt")),
        "--unit-first",
        "-o",
        p(&f("both.txt")),
    ])?;
    Ok(Prepared {
        corpus,
        text: f("text.txt"),
        link: f("link.txt"),
        both: f("both.txt"),
    })
}

fn micro_purity(clustering: &Path, labels: &LabelSet) -> Result<f64, String> {
    let c = Clustering::load(clustering).map_err(|e| e.to_string())?;
    Ok(eval::purity(&c, labels).map_err(|e| e.to_string())?.micro)
}

fn recall_of(stdout: &str) -> Result<f64, String> {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("recall\t"))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| format!("no recall line in {stdout:?}"))
}

fn pipeline_trends() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = prepare(dir.path(), 5000, 42)?;
    let labels_file = data.corpus.join("labels.tsv");
    let labels = LabelSet::load(&labels_file).map_err(|e| e.to_string())?;
    // (a) cosine vs left-as-is extraction on one order-40 tree. The
    // codebook level is asserted; the levels above it are reported.
    let (_, log) = run_full(&[
        "ktree",
        "-i",
        p(&data.text),
        "--order",
        "40",
        "--seed",
        "42",
        "-o",
        p(&dir.path().join("probe.tsv")),
    ])?;
    let depth: usize = log
        .lines()
        .find_map(|l| {
            l.strip_prefix("# built depth=")?
                .split_whitespace()
                .next()?
                .parse()
                .ok()
        })
        .ok_or("no depth in ktree log")?;
    let mut a_ok = false;
    let mut gaps = Vec::new();
    for level in (1..depth).rev() {
        let mut purity = [0.0; 2];
        for (i, method) in ["leftasis", "cosine"].into_iter().enumerate() {
            let out = dir.path().join(format!("{method}{level}.tsv"));
            run(&[
                "ktree",
                "-i",
                p(&data.text),
                "--order",
                "40",
                "--method",
                method,
                "--level",
                &level.to_string(),
                "--seed",
                "42",
                "-o",
                p(&out),
            ])?;
            purity[i] = micro_purity(&out, &labels)?;
        }
        if level == depth - 1 {
            a_ok = purity[1] >= purity[0];
        }
        gaps.push(format!(
            "level {level} cosine {:.4} leftasis {:.4}",
            purity[1], purity[0]
        ));
    }

    // (b) leaf negentropy as the order halves.
    let table = run(&[
        "sweep-order",
        "-i",
        p(&data.text),
        "--labels",
        p(&labels_file),
        "--orders",
        "400,200,100,50,25",
        "--seed",
        "42",
    ])?;
    let mut lines: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for line in table.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        lines
            .entry(f[1].to_owned())
            .or_default()
            .push(f[3].parse().map_err(|_| format!("bad row {line}"))?);
    }
    let inversions: HashMap<&str, usize> = lines
        .iter()
        .map(|(m, v)| (m.as_str(), v.windows(2).filter(|w| w[1] < w[0]).count()))
        .collect();

    // (c) classification recall.
    let mut recall = HashMap::new();
    for (name, matrix) in [
        ("text", &data.text),
        ("link", &data.link),
        ("concat", &data.both),
    ] {
        let out = dir.path().join(format!("pred-{name}.tsv"));
        let stdout = run(&[
            "classify",
            "-i",
            p(matrix),
            "--labels",
            p(&labels_file),
            "--split",
            p(&data.corpus.join("split.tsv")),
            "--seed",
            "42",
            "-o",
            p(&out),
        ])?;
        recall.insert(name, recall_of(&stdout)?);
    }

    let b_ok = lines.len() == 2 && inversions.values().all(|&n| n <= 1);
    let c_ok = recall["concat"] >= recall["text"].max(recall["link"]);
    let fmt_line = |m: &str| {
        lines.get(m).map_or(String::new(), |v| {
            v.iter()
                .map(|x| format!("{x:.3}"))
                .collect::<Vec<_>>()
                .join(",")
        })
    };
    let detail = format!(
        "(a) {} [{}]; (b) {} leftasis [{}] rearranged [{}]; (c) {} concat {:.4} text {:.4} link {:.4}",
        if a_ok { "ok" } else { "FAILED" },
        gaps.join(", "),
        if b_ok { "ok" } else { "FAILED" },
        fmt_line("leftasis"),
        fmt_line("rearranged"),
        if c_ok { "ok" } else { "FAILED" },
        recall["concat"],
        recall["text"],
        recall["link"],
    );
    ensure(a_ok && b_ok && c_ok, || detail.clone())?;
    Ok(detail)
}

/// Every file under `dir`, by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

/// Runs every subcommand into `dir`.
fn full_run(dir: &Path) -> Result<(), String> {
    let data = prepare(dir, 800, 9)?;
    let labels = data.corpus.join("labels.tsv");
    let split = data.corpus.join("split.tsv");
    let f = |name: &str| dir.join(name);
    for method in ["leftasis", "rearranged", "cosine"] {
        run(&[
            "ktree",
            "-i",
            p(&data.text),
            "--order",
            "20",
            "--method",
            method,
            "--seed",
            "3",
            "--dump",
            p(&f(&format!("dump-{method}.txt"))),
            "-o",
            p(&f(&format!("ktree-{method}.tsv"))),
        ])?;
    }
    run(&[
        "ktree",
        "-i",
        p(&data.both),
        "--order",
        "20",
        "--codebook-k",
        "10",
        "--runs",
        "5",
        "--seed",
        "3",
        "-o",
        p(&f("ktree-k.tsv")),
    ])?;
    run(&[
        "kmeans",
        "-i",
        p(&data.text),
        "--k",
        "10",
        "--runs",
        "5",
        "--seed",
        "7",
        "--centroids",
        p(&f("centroids.txt")),
        "-o",
        p(&f("kmeans.tsv")),
    ])?;
    run(&[
        "assign",
        "-i",
        p(&data.text),
        "--centroids",
        p(&f("centroids.txt")),
        "-o",
        p(&f("assign.tsv")),
    ])?;
    run(&[
        "cull",
        "-i",
        p(&data.text),
        "--top",
        "300",
        "-o",
        p(&f("small.txt")),
    ])?;
    run(&[
        "nmf",
        "-i",
        p(&f("small.txt")),
        "--r",
        "15",
        "--max-iters",
        "20",
        "--seed",
        "5",
        "--trace",
        p(&f("trace.csv")),
        "-o",
        p(&f("nmf.tsv")),
    ])?;
    run(&[
        "eval",
        "--clustering",
        p(&f("nmf.tsv")),
        "--labels",
        p(&labels),
        "-o",
        p(&f("eval.tsv")),
    ])?;
    run(&[
        "classify",
        "-i",
        p(&data.text),
        "--committee",
        p(&data.link),
        "--labels",
        p(&labels),
        "--split",
        p(&split),
        "--seed",
        "11",
        "-o",
        p(&f("committee.tsv")),
    ])?;
    let table = run(&[
        "sweep-order",
        "-i",
        p(&data.text),
        "--labels",
        p(&labels),
        "--orders",
        "40,20",
        "--seed",
        "2",
    ])?;
    fs::write(f("sweep.tsv"), table).map_err(|e| e.to_string())?;
    Ok(())
}

fn determinism() -> Outcome {
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    full_run(first.path())?;
    full_run(second.path())?;
    let (a, b) = (snapshot(first.path()), snapshot(second.path()));
    ensure(a.keys().eq(b.keys()), || {
        "runs wrote different file sets".to_owned()
    })?;
    let differing: Vec<String> = a
        .iter()
        .filter(|(k, v)| b[*k] != **v)
        .map(|(k, _)| k.display().to_string())
        .collect();
    ensure(differing.is_empty(), || {
        format!("files differ: {}", differing.join(", "))
    })?;
    Ok(format!(
        "{} output files byte-identical across two runs",
        a.len()
    ))
}
