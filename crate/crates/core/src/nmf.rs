//! Non-negative matrix factorization by alternating projected gradient.
//!
//! Minimizes `½‖V − WH‖²_F` over `W ≥ 0`, `H ≥ 0` by alternately solving the
//! non-negative least-squares subproblem for `W` and then `H`. Each
//! subproblem takes projected gradient steps `max(X − α∇, 0)`, with `α` found
//! by an Armijo search that shrinks or grows it by `β = 0.1` until the
//! sufficient-decrease condition with `σ = 0.01` holds (C.-J. Lin, 2007).
//! When a subproblem is already solved on its first step its tolerance is
//! tightened tenfold.
//!
//! For document clustering `V` is terms × documents and document `j` goes to
//! the row of `H` with the largest entry in column `j`.

use ndarray::{Array2, Zip};
use rand::Rng;

use crate::corpus::SparseMatrix;
use crate::error::{Error, Result};
use crate::eval::Clustering;

const BETA: f64 = 0.1;
const SIGMA: f64 = 0.01;
const MAX_STEP_TRIALS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmfParams {
    /// Outer (W then H) iterations.
    pub max_iters: usize,
    /// Stop when the projected gradient norm falls to this fraction of its
    /// initial value.
    pub tol: f64,
    /// Iteration cap for each subproblem solve.
    pub max_inner_iters: usize,
}

impl Default for NmfParams {
    fn default() -> Self {
        Self {
            max_iters: 70,
            tol: 1e-4,
            max_inner_iters: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmfResult {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    /// `½‖V − WH‖²_F` at initialization and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

pub fn objective(v: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let residual = v - &w.dot(h);
    0.5 * residual.iter().map(|x| x * x).sum::<f64>()
}

/// Norm of the gradient restricted to entries that can still move: negative
/// gradient, or a strictly positive variable.
fn projected_norm_sq(grad: &Array2<f64>, x: &Array2<f64>) -> f64 {
    Zip::from(grad).and(x).fold(
        0.0,
        |acc, &g, &v| if g < 0.0 || v > 0.0 { acc + g * g } else { acc },
    )
}

/// Solves `min_{H ≥ 0} ½‖V − WH‖²` starting from `h`. Returns the new `H`,
/// its gradient and the number of iterations used.
fn nls_subproblem(
    v: &Array2<f64>,
    w: &Array2<f64>,
    mut h: Array2<f64>,
    tol: f64,
    max_iters: usize,
) -> (Array2<f64>, Array2<f64>, usize) {
    let wtv = w.t().dot(v);
    let wtw = w.t().dot(w);
    let mut alpha = 1.0;
    let mut grad = wtw.dot(&h) - &wtv;
    let mut iter = 1;
    while iter <= max_iters {
        grad = wtw.dot(&h) - &wtv;
        if projected_norm_sq(&grad, &h).sqrt() < tol {
            break;
        }
        let mut previous: Option<Array2<f64>> = None;
        let mut shrinking = false;
        for trial in 0..MAX_STEP_TRIALS {
            let candidate = (&h - &(alpha * &grad)).mapv(|x| x.max(0.0));
            let d = &candidate - &h;
            let gradd = (&grad * &d).sum();
            let dqd = (&wtw.dot(&d) * &d).sum();
            let sufficient = (1.0 - SIGMA) * gradd + 0.5 * dqd < 0.0;
            if trial == 0 {
                shrinking = !sufficient;
                previous = Some(h.clone());
            }
            if shrinking {
                if sufficient {
                    h = candidate;
                    break;
                }
                alpha *= BETA;
            } else {
                let prev = previous.as_ref().expect("set on the first trial");
                if !sufficient || *prev == candidate {
                    h = prev.clone();
                    break;
                }
                alpha /= BETA;
                previous = Some(candidate);
            }
        }
        iter += 1;
    }
    (h, grad, iter.min(max_iters))
}

/// Factorizes `v` (n × m, entrywise ≥ 0) as `W·H` with inner dimension `r`,
/// `1 ≤ r < min(n, m)`. `W` and `H` start uniform in (0, 1].
pub fn nmf_pg<R: Rng + ?Sized>(
    v: &Array2<f64>,
    r: usize,
    params: NmfParams,
    rng: &mut R,
) -> Result<NmfResult> {
    nmf_pg_observed(v, r, params, rng, |_, _, _| {})
}

/// [`nmf_pg`] calling `observer(iteration, W, H)` after every outer iteration.
pub fn nmf_pg_observed<R, F>(
    v: &Array2<f64>,
    r: usize,
    params: NmfParams,
    rng: &mut R,
    mut observer: F,
) -> Result<NmfResult>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &Array2<f64>, &Array2<f64>),
{
    let (n, m) = v.dim();
    if r == 0 || r >= n.min(m) {
        return Err(Error::InvalidArgument(format!(
            "rank r = {r} must satisfy 1 <= r < min({n}, {m})"
        )));
    }
    if let Some(i) = v.iter().position(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "V must be finite and non-negative; entry {i} is {}",
            v.iter().nth(i).unwrap()
        )));
    }
    let mut unit = || 1.0 - rng.random::<f64>();
    let mut w = Array2::from_shape_simple_fn((n, r), &mut unit);
    let mut h = Array2::from_shape_simple_fn((r, m), &mut unit);

    let mut grad_w = w.dot(&h.dot(&h.t())) - v.dot(&h.t());
    let mut grad_h = w.t().dot(&w).dot(&h) - w.t().dot(v);
    let init_grad = (grad_w
        .iter()
        .chain(grad_h.iter())
        .map(|g| g * g)
        .sum::<f64>())
    .sqrt();
    let mut tol_w = params.tol.max(1e-3) * init_grad;
    let mut tol_h = tol_w;

    let mut trace = vec![objective(v, &w, &h)];
    let mut iterations = 0;
    while iterations < params.max_iters {
        let proj = (projected_norm_sq(&grad_w, &w) + projected_norm_sq(&grad_h, &h)).sqrt();
        if proj <= params.tol * init_grad {
            break;
        }
        iterations += 1;

        let vt = v.t().to_owned();
        let (wt, gwt, iters_w) = nls_subproblem(
            &vt,
            &h.t().to_owned(),
            w.t().to_owned(),
            tol_w,
            params.max_inner_iters,
        );
        w = wt.t().to_owned();
        grad_w = gwt.t().to_owned();
        if iters_w == 1 {
            tol_w *= BETA;
        }

        let (h_new, gh, iters_h) = nls_subproblem(v, &w, h, tol_h, params.max_inner_iters);
        h = h_new;
        grad_h = gh;
        if iters_h == 1 {
            tol_h *= BETA;
        }

        trace.push(objective(v, &w, &h));
        observer(iterations, &w, &h);
    }
    Ok(NmfResult {
        w,
        h,
        objective_trace: trace,
        iterations,
    })
}

/// Document `j` joins the row of `H` holding the largest entry of column `j`
/// (ties to the lower row). All-zero columns fall back to cluster 0 and are
/// counted in [`Clustering::fallbacks`].
pub fn assign_by_max_h(h: &Array2<f64>, doc_ids: &[String]) -> Result<Clustering> {
    let (r, m) = h.dim();
    if r == 0 || m == 0 {
        return Err(Error::Empty("H"));
    }
    if doc_ids.len() != m {
        return Err(Error::InvalidArgument(format!(
            "{} document ids for {m} columns of H",
            doc_ids.len()
        )));
    }
    let mut fallbacks = 0;
    let assignment = h
        .columns()
        .into_iter()
        .map(|col| {
            if col.iter().all(|&x| x == 0.0) {
                fallbacks += 1;
                return 0;
            }
            let mut best = 0;
            for (i, &x) in col.iter().enumerate() {
                if x > col[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    let mut clustering = Clustering::new(doc_ids.to_vec(), assignment, r)?;
    clustering.fallbacks = fallbacks;
    Ok(clustering)
}

/// The features × documents matrix (the transpose of the corpus layout).
pub fn term_document_matrix(m: &SparseMatrix) -> Array2<f64> {
    let mut v = Array2::zeros((m.cols(), m.rows()));
    for d in 0..m.rows() {
        for &(t, w) in m.row(d) {
            v[[t, d]] = w;
        }
    }
    v
}
