//! Lloyd's k-means with k-means++ seeding.
//!
//! Used for K-tree node splits (k = 2) and for reclustering codebook vectors
//! into a fixed number of clusters, where the best of several randomized runs
//! is kept.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng_from_seed;
use crate::vectors::{squared_distance_unchecked, DenseVector};

/// Stopping rule for [`lloyd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydParams {
    pub max_iters: usize,
    /// Stop once `(previous − current) / previous` distortion falls below this.
    pub tol: f64,
}

impl Default for LloydParams {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<DenseVector>,
    pub assignment: Vec<usize>,
    /// `Σ ‖xᵢ − c_{a(i)}‖²` for the final centroids and assignment.
    pub distortion: f64,
    pub iterations: usize,
    /// Distortion after each iteration.
    pub history: Vec<f64>,
    /// Point-to-centroid distance evaluations, seeding included.
    pub distance_evals: u64,
}

fn validate(points: &[DenseVector], k: usize) -> Result<usize> {
    let first = points.first().ok_or(Error::Empty("k-means points"))?;
    if k == 0 || k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={}",
            points.len()
        )));
    }
    let dim = first.dim();
    if let Some(p) = points.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: p.dim(),
        });
    }
    Ok(dim)
}

/// Index of the nearest centroid and the squared distance to it. Ties go to
/// the lower index.
#[inline]
pub(crate) fn nearest(point: &[f64], centroids: &[DenseVector]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance_unchecked(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd iterations from the given centroids.
///
/// Each iteration assigns every point to its nearest centroid, repairs empty
/// clusters by handing them the point farthest from its centroid, and moves
/// every centroid to its cluster mean. Iteration stops when the assignment
/// repeats, the relative distortion improvement drops below `params.tol`, or
/// after `params.max_iters` iterations.
pub fn lloyd(
    points: &[DenseVector],
    initial_centroids: &[DenseVector],
    params: LloydParams,
) -> Result<KMeansResult> {
    let k = initial_centroids.len();
    let dim = validate(points, k)?;
    if let Some(c) = initial_centroids.iter().find(|c| c.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: c.dim(),
        });
    }
    let n = points.len();
    let mut centroids = initial_centroids.to_vec();
    let mut assignment = vec![0usize; n];
    let mut previous: Option<Vec<usize>> = None;
    let mut dist = vec![0.0; n];
    let mut history = Vec::new();
    let mut distance_evals = 0u64;
    let mut iterations = 0;

    while iterations < params.max_iters.max(1) {
        iterations += 1;
        let mut sizes = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            assignment[i] = j;
            dist[i] = d;
            sizes[j] += 1;
        }
        distance_evals += (n * k) as u64;

        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| sizes[assignment[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dist[b] >= dist[i] => Some(b),
                    _ => Some(i),
                })
                .expect("k <= n leaves a cluster with two or more points");
            sizes[assignment[donor]] -= 1;
            assignment[donor] = empty;
            dist[donor] = 0.0;
            sizes[empty] = 1;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &j) in points.iter().zip(&assignment) {
            for (s, x) in sums[j].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        centroids = sums
            .into_iter()
            .zip(&sizes)
            .map(|(s, &c)| DenseVector::new(s.into_iter().map(|x| x / c as f64).collect()))
            .collect::<Result<_>>()?;

        let distortion: f64 = points
            .iter()
            .zip(&assignment)
            .map(|(p, &j)| squared_distance_unchecked(p, &centroids[j]))
            .sum();
        distance_evals += n as u64;

        let last = history.last().copied();
        history.push(distortion);
        let stalled = match last {
            Some(prev) if prev > 0.0 => (prev - distortion) / prev < params.tol,
            Some(_) => true,
            None => false,
        };
        if previous.as_deref() == Some(&assignment[..]) || stalled {
            break;
        }
        previous = Some(assignment.clone());
    }

    Ok(KMeansResult {
        distortion: *history.last().expect("at least one iteration"),
        centroids,
        assignment,
        iterations,
        history,
        distance_evals,
    })
}

/// k-means++ seeding, returning indices into `points`.
///
/// The first seed is uniform; each further seed is drawn with probability
/// proportional to its squared distance from the nearest seed so far. When
/// every remaining point coincides with a seed the draw is uniform over the
/// points not yet chosen.
pub fn seed_plusplus_indices<R: Rng + ?Sized>(
    points: &[DenseVector],
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    validate(points, k)?;
    let n = points.len();
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance_unchecked(p, &points[first]))
        .collect();

    while chosen.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            Err(_) => {
                let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        chosen.push(next);
        taken[next] = true;
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance_unchecked(p, &points[next]));
        }
        d2[next] = 0.0;
    }
    Ok(chosen)
}

/// k-means++ seeds as copies of the chosen points.
pub fn seed_plusplus<R: Rng + ?Sized>(
    points: &[DenseVector],
    k: usize,
    rng: &mut R,
) -> Result<Vec<DenseVector>> {
    Ok(seed_plusplus_indices(points, k, rng)?
        .into_iter()
        .map(|i| points[i].clone())
        .collect())
}

/// One k-means++ seeding followed by Lloyd iterations.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[DenseVector],
    k: usize,
    params: LloydParams,
    rng: &mut R,
) -> Result<KMeansResult> {
    let seeds = seed_plusplus(points, k, rng)?;
    let mut result = lloyd(points, &seeds, params)?;
    result.distance_evals += (points.len() * k) as u64;
    Ok(result)
}

/// The per-run seeds [`kmeans_restarts`] draws from `rng`.
pub fn restart_seeds<R: Rng + ?Sized>(rng: &mut R, runs: usize) -> Vec<u64> {
    (0..runs).map(|_| rng.next_u64()).collect()
}

/// Runs [`kmeans`] `runs` times, each with its own generator seeded from
/// `rng`, and keeps the lowest-distortion result (earliest run on ties).
pub fn kmeans_restarts<R: Rng + ?Sized>(
    points: &[DenseVector],
    k: usize,
    runs: usize,
    params: LloydParams,
    rng: &mut R,
) -> Result<KMeansResult> {
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for seed in restart_seeds(rng, runs) {
        let result = kmeans(points, k, params, &mut rng_from_seed(seed))?;
        if best
            .as_ref()
            .is_none_or(|b| result.distortion < b.distortion)
        {
            best = Some(result);
        }
    }
    Ok(best.expect("runs >= 1"))
}

/// Nearest-centroid assignment (Euclidean, ties to the lower index).
pub fn assign_nearest(points: &[DenseVector], centroids: &[DenseVector]) -> Result<Vec<usize>> {
    if centroids.is_empty() {
        return Err(Error::Empty("centroids"));
    }
    let dim = centroids[0].dim();
    points
        .iter()
        .map(|p| {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
            Ok(nearest(p, centroids).0)
        })
        .collect()
}
