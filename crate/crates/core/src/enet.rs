//! Elastic-net penalized logistic regression.
//!
//! Minimizes
//!
//! ```text
//! (1/n)·Σ [log(1 + e^ηᵢ) − yᵢηᵢ] + λ·[α‖β‖₁ + (1−α)/2·‖β‖₂²]
//! ```
//!
//! over internally standardized predictors (mean 0, population variance 1)
//! by iteratively reweighted least squares. Each weighted least-squares
//! subproblem is solved by cyclic coordinate descent with soft-thresholding,
//! restricted to a working set grown by KKT checks. Coefficients are mapped
//! back to the input scale on output.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folds;
use crate::seed;
use crate::stats::{logistic, logit, CONSTANT_SD};

/// Predictor matrix as a slice of columns, each of length `n`.
pub type Columns = [Vec<f64>];

const MIN_WEIGHT: f64 = 1e-5;
const MAX_OUTER: usize = 500;
const PROB_CLIP: f64 = 1e-10;
const INEXACT_TOL: f64 = 1e-3;
/// Relative objective increase tolerated as rounding noise.
const OBJ_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence threshold on the largest coefficient change.
    pub tol: f64,
    /// Budget of coordinate-descent sweeps per fit.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnetFit {
    pub alpha: f64,
    pub lambda: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    /// Final penalized objective on the standardized scale.
    pub objective: f64,
    /// Objective after each outer IRLS iteration.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl EnetFit {
    pub fn n_predictors(&self) -> usize {
        self.coefficients.len()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|&j| self.coefficients[j] != 0.0)
            .collect()
    }
}

/// Standardized copy of the predictors.
struct Prepared {
    n: usize,
    cols: Vec<Vec<f64>>,
    means: Vec<f64>,
    sds: Vec<f64>,
    usable: Vec<bool>,
    y: Vec<f64>,
    ybar: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    Ok(())
}

fn check_labels(y: &[u8]) -> Result<()> {
    if let Some(v) = y.iter().find(|&&v| v > 1) {
        return Err(Error::Validation(format!("label {v} is not binary")));
    }
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

impl Prepared {
    fn new(x: &Columns, y: &[u8]) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!("need at least 2 cells, got {n}")));
        }
        check_labels(y)?;
        let mut cols = Vec::with_capacity(x.len());
        let mut means = Vec::with_capacity(x.len());
        let mut sds = Vec::with_capacity(x.len());
        let mut usable = Vec::with_capacity(x.len());
        for col in x {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: col.len(),
                });
            }
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd < CONSTANT_SD {
                cols.push(vec![0.0; n]);
                usable.push(false);
            } else {
                cols.push(col.iter().map(|v| (v - m) / sd).collect());
                usable.push(true);
            }
            means.push(m);
            sds.push(sd);
        }
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let ybar = yf.iter().sum::<f64>() / n as f64;
        Ok(Self {
            n,
            cols,
            means,
            sds,
            usable,
            y: yf,
            ybar,
        })
    }

    fn p(&self) -> usize {
        self.cols.len()
    }

    /// Gradient of the mean negative log-likelihood for every usable column.
    fn gradient(&self, eta: &[f64]) -> Vec<f64> {
        let resid: Vec<f64> = eta.iter().zip(&self.y).map(|(&e, &y)| logistic(e) - y).collect();
        let inv_n = 1.0 / self.n as f64;
        self.cols
            .iter()
            .zip(&self.usable)
            .map(|(c, &u)| if u { dot(c, &resid) * inv_n } else { 0.0 })
            .collect()
    }

    fn lambda_max(&self, alpha: f64) -> f64 {
        let inv_n = 1.0 / self.n as f64;
        let centered: Vec<f64> = self.y.iter().map(|y| y - self.ybar).collect();
        self.cols
            .iter()
            .zip(&self.usable)
            .filter(|(_, &u)| u)
            .map(|(c, _)| (dot(c, &centered) * inv_n).abs())
            .fold(0.0, f64::max)
            / alpha
    }

    fn null_intercept(&self) -> f64 {
        logit(self.ybar)
    }

    fn mean_nll(&self, eta: &[f64]) -> f64 {
        eta.iter().zip(&self.y).map(|(&e, &y)| softplus(e) - y * e).sum::<f64>() / self.n as f64
    }

    fn to_input_scale(&self, beta: &[f64], b0: f64) -> (Vec<f64>, f64) {
        let mut intercept = b0;
        let coefs = beta
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                if b == 0.0 {
                    0.0
                } else {
                    let c = b / self.sds[j];
                    intercept -= c * self.means[j];
                    c
                }
            })
            .collect();
        (coefs, intercept)
    }
}

// Four running sums let the compiler vectorize; the order is fixed, so
// results do not depend on the caller.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let c = a.chunks_exact(4);
    let tail: f64 = c.remainder().iter().sum();
    for x in c {
        for l in 0..4 {
            acc[l] += x[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn softplus(e: f64) -> f64 {
    if e > 0.0 {
        e + (-e).exp().ln_1p()
    } else {
        e.exp().ln_1p()
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    let a = z.abs() - gamma;
    if a > 0.0 {
        a.copysign(z)
    } else {
        0.0
    }
}

fn penalty(beta: &[f64], lambda: f64, alpha: f64) -> f64 {
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    lambda * (alpha * l1 + 0.5 * (1.0 - alpha) * l2)
}

/// Mutable solution carried along a regularization path.
struct State {
    beta: Vec<f64>,
    b0: f64,
    eta: Vec<f64>,
    sweeps: usize,
}

impl State {
    fn null(prep: &Prepared) -> Self {
        let b0 = prep.null_intercept();
        Self {
            beta: vec![0.0; prep.p()],
            b0,
            eta: vec![b0; prep.n],
            sweeps: 0,
        }
    }

    fn recompute_eta(&mut self, prep: &Prepared) {
        self.eta.iter_mut().for_each(|e| *e = self.b0);
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                for (e, x) in self.eta.iter_mut().zip(&prep.cols[j]) {
                    *e += b * x;
                }
            }
        }
    }

    fn objective(&self, prep: &Prepared, lambda: f64, alpha: f64) -> f64 {
        prep.mean_nll(&self.eta) + penalty(&self.beta, lambda, alpha)
    }
}

struct SolveOutcome {
    converged: bool,
    trace: Vec<f64>,
}

/// Coordinate descent on the penalized weighted least-squares subproblem
/// over `set`, starting from the current state. `wr` holds the weighted
/// working residuals `wᵢ·(zᵢ − ηᵢ)` and is updated in place.
#[allow(clippy::too_many_arguments)]
fn weighted_cd(
    prep: &Prepared,
    state: &mut State,
    set: &[usize],
    w: &[f64],
    wr: &mut [f64],
    lambda: f64,
    alpha: f64,
    tol: f64,
    max_sweeps: usize,
) -> bool {
    let inv_n = 1.0 / prep.n as f64;
    let wx: Vec<Vec<f64>> = set
        .iter()
        .map(|&j| prep.cols[j].iter().zip(w).map(|(x, w)| x * w).collect())
        .collect();
    let xwx: Vec<f64> = set
        .iter()
        .zip(&wx)
        .map(|(&j, wxj)| dot(&prep.cols[j], wxj) * inv_n)
        .collect();
    let wsum: f64 = w.iter().sum();
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);

    let sweep = |members: &[usize], state: &mut State, wr: &mut [f64]| -> f64 {
        let mut maxd: f64 = 0.0;
        for &k in members {
            let j = set[k];
            let old = state.beta[j];
            let g = dot(&prep.cols[j], wr) * inv_n + xwx[k] * old;
            let new = soft_threshold(g, l1) / (xwx[k] + l2);
            let d = new - old;
            if d != 0.0 {
                for (r, v) in wr.iter_mut().zip(&wx[k]) {
                    *r -= v * d;
                }
                state.beta[j] = new;
                maxd = maxd.max(d.abs());
            }
        }
        let d0 = sum(wr) / wsum;
        if d0 != 0.0 {
            for (r, wi) in wr.iter_mut().zip(w) {
                *r -= wi * d0;
            }
            state.b0 += d0;
            maxd = maxd.max(d0.abs());
        }
        state.sweeps += 1;
        maxd
    };

    let all: Vec<usize> = (0..set.len()).collect();
    loop {
        if state.sweeps >= max_sweeps {
            return false;
        }
        let maxd = sweep(&all, state, wr);
        if maxd < tol {
            return true;
        }
        // iterate on the nonzero coordinates until they settle
        let active: Vec<usize> = all.iter().copied().filter(|&k| state.beta[set[k]] != 0.0).collect();
        loop {
            if state.sweeps >= max_sweeps {
                return false;
            }
            if sweep(&active, state, wr) < tol {
                break;
            }
        }
    }
}

/// IRLS restricted to the coordinates in `set`.
fn irls(
    prep: &Prepared,
    state: &mut State,
    set: &[usize],
    lambda: f64,
    alpha: f64,
    opts: &SolverOptions,
    trace: &mut Vec<f64>,
) -> bool {
    let n = prep.n;
    let mut obj = state.objective(prep, lambda, alpha);
    if trace.is_empty() {
        trace.push(obj);
    }
    let mut w = vec![0.0; n];
    let mut wr = vec![0.0; n];
    let mut last_change = f64::INFINITY;
    for _ in 0..MAX_OUTER {
        // early Newton steps need not be solved to full precision
        let inner_tol = opts.tol.max((0.01 * last_change).min(INEXACT_TOL));
        for i in 0..n {
            let p = logistic(state.eta[i]);
            w[i] = (p * (1.0 - p)).max(MIN_WEIGHT);
            wr[i] = prep.y[i] - p;
        }
        let old_beta: Vec<f64> = set.iter().map(|&j| state.beta[j]).collect();
        let old_b0 = state.b0;
        let inner_ok = weighted_cd(prep, state, set, &w, &mut wr, lambda, alpha, inner_tol, opts.max_iter);
        state.recompute_eta(prep);
        let mut new_obj = state.objective(prep, lambda, alpha);

        // step halving keeps the objective monotone up to rounding
        let ceiling = obj + OBJ_SLACK * obj.abs().max(1.0);
        let mut halvings = 0;
        while new_obj > ceiling && halvings < 40 {
            for (k, &j) in set.iter().enumerate() {
                state.beta[j] = 0.5 * (state.beta[j] + old_beta[k]);
            }
            state.b0 = 0.5 * (state.b0 + old_b0);
            state.recompute_eta(prep);
            new_obj = state.objective(prep, lambda, alpha);
            halvings += 1;
        }
        if new_obj > ceiling {
            for (k, &j) in set.iter().enumerate() {
                state.beta[j] = old_beta[k];
            }
            state.b0 = old_b0;
            state.recompute_eta(prep);
            trace.push(obj);
            return false;
        }

        let mut change = (state.b0 - old_b0).abs();
        for (k, &j) in set.iter().enumerate() {
            change = change.max((state.beta[j] - old_beta[k]).abs());
        }
        obj = new_obj;
        trace.push(obj);
        if !inner_ok {
            return false;
        }
        if change < opts.tol && inner_tol <= opts.tol {
            return true;
        }
        last_change = change;
    }
    false
}

/// Solves at one `lambda` from the current state, growing the working set
/// from `initial` until no excluded coordinate violates the KKT conditions.
fn solve(
    prep: &Prepared,
    state: &mut State,
    initial: Vec<bool>,
    lambda: f64,
    alpha: f64,
    opts: &SolverOptions,
) -> SolveOutcome {
    let mut in_set = initial;
    for (j, b) in state.beta.iter().enumerate() {
        if *b != 0.0 {
            in_set[j] = true;
        }
    }
    let mut trace = Vec::new();
    loop {
        let set: Vec<usize> = (0..prep.p()).filter(|&j| in_set[j] && prep.usable[j]).collect();
        let converged = irls(prep, state, &set, lambda, alpha, opts, &mut trace);
        let grad = prep.gradient(&state.eta);
        let mut added = false;
        for j in 0..prep.p() {
            if prep.usable[j] && !in_set[j] && grad[j].abs() > lambda * alpha {
                in_set[j] = true;
                added = true;
            }
        }
        if !added || !converged {
            if state.b0.abs() > 30.0 {
                warn!(
                    "intercept magnitude {:.1} suggests quasi-separated classes",
                    state.b0.abs()
                );
            }
            return SolveOutcome { converged, trace };
        }
    }
}

fn finish(prep: &Prepared, state: &State, lambda: f64, alpha: f64, out: SolveOutcome) -> EnetFit {
    let (coefficients, intercept) = prep.to_input_scale(&state.beta, state.b0);
    EnetFit {
        alpha,
        lambda,
        intercept,
        coefficients,
        converged: out.converged,
        objective: state.objective(prep, lambda, alpha),
        objective_trace: out.trace,
    }
}

fn null_fit(prep: &Prepared, lambda: f64, alpha: f64) -> EnetFit {
    let state = State::null(prep);
    let objective = state.objective(prep, lambda, alpha);
    EnetFit {
        alpha,
        lambda,
        intercept: state.b0,
        coefficients: vec![0.0; prep.p()],
        converged: true,
        objective,
        objective_trace: vec![objective],
    }
}

/// Smallest penalty at which every coefficient is zero:
/// `max_j |x_jᵀ(y − ȳ)| / (n·α)` over internally standardized columns.
pub fn lambda_max(x: &Columns, y: &[u8], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(Prepared::new(x, y)?.lambda_max(alpha))
}

/// Fits a single penalty value from a cold start.
pub fn fit(x: &Columns, y: &[u8], alpha: f64, lambda: f64, opts: &SolverOptions) -> Result<EnetFit> {
    check_alpha(alpha)?;
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be >= 0")));
    }
    let prep = Prepared::new(x, y)?;
    let lmax = prep.lambda_max(alpha);
    if lambda >= lmax {
        return Ok(null_fit(&prep, lambda, alpha));
    }
    let mut state = State::null(&prep);
    let grad = prep.gradient(&state.eta);
    // sequential strong rule from lambda_max
    let initial: Vec<bool> = grad.iter().map(|g| g.abs() >= alpha * (2.0 * lambda - lmax)).collect();
    let out = solve(&prep, &mut state, initial, lambda, alpha, opts);
    Ok(finish(&prep, &state, lambda, alpha, out))
}

/// Options for fitting a decreasing sequence of penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    pub solver: SolverOptions,
    /// Stop once the fraction of null deviance explained reaches this
    /// value; remaining penalties reuse the last fit.
    pub max_dev_ratio: f64,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            max_dev_ratio: 0.999,
        }
    }
}

/// Warm-started fits along `lambdas` (must be non-increasing).
pub fn fit_path(x: &Columns, y: &[u8], alpha: f64, lambdas: &[f64], opts: &PathOptions) -> Result<Vec<EnetFit>> {
    check_alpha(alpha)?;
    if lambdas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidArgument("lambda path must be non-increasing".into()));
    }
    let prep = Prepared::new(x, y)?;
    let lmax = prep.lambda_max(alpha);
    let null_dev = prep.mean_nll(&vec![prep.null_intercept(); prep.n]);
    let mut state = State::null(&prep);
    let mut grad = prep.gradient(&state.eta);
    let mut prev_lambda = lmax;
    let mut fits: Vec<EnetFit> = Vec::with_capacity(lambdas.len());
    let mut saturated = false;

    for &lambda in lambdas {
        if saturated {
            let mut f = fits.last().unwrap().clone();
            f.lambda = lambda;
            fits.push(f);
            continue;
        }
        if lambda >= lmax {
            fits.push(null_fit(&prep, lambda, alpha));
            continue;
        }
        let cutoff = alpha * (2.0 * lambda - prev_lambda);
        let initial: Vec<bool> = grad.iter().map(|g| g.abs() >= cutoff).collect();
        state.sweeps = 0;
        let out = solve(&prep, &mut state, initial, lambda, alpha, &opts.solver);
        grad = prep.gradient(&state.eta);
        prev_lambda = lambda;
        let fit = finish(&prep, &state, lambda, alpha, out);
        let dev_ratio = 1.0 - prep.mean_nll(&state.eta) / null_dev;
        if dev_ratio >= opts.max_dev_ratio {
            saturated = true;
        }
        fits.push(fit);
    }
    Ok(fits)
}

/// `q̂ = logistic(β₀ + Xβ)`.
pub fn predict_prob(fit: &EnetFit, x: &Columns) -> Result<Vec<f64>> {
    if x.len() != fit.coefficients.len() {
        return Err(Error::DimensionMismatch {
            expected: fit.coefficients.len(),
            actual: x.len(),
        });
    }
    let n = x.first().map_or(0, Vec::len);
    let mut eta = vec![fit.intercept; n];
    for (col, &b) in x.iter().zip(&fit.coefficients) {
        if b != 0.0 {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: col.len(),
                });
            }
            for (e, v) in eta.iter_mut().zip(col) {
                *e += v * b;
            }
        }
    }
    Ok(eta.into_iter().map(logistic).collect())
}

/// Mean binomial deviance of probabilities `q` against labels `y`.
pub fn binomial_deviance(y: &[u8], q: &[f64]) -> f64 {
    let total: f64 = y
        .iter()
        .zip(q)
        .map(|(&yi, &qi)| {
            let qi = qi.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            if yi == 1 {
                -2.0 * qi.ln()
            } else {
                -2.0 * (1.0 - qi).ln()
            }
        })
        .sum();
    total / y.len() as f64
}

/// Largest KKT violation of `fit` on the internally standardized problem,
/// including the intercept's stationarity condition.
pub fn kkt_residual(x: &Columns, y: &[u8], fit: &EnetFit) -> Result<f64> {
    let prep = Prepared::new(x, y)?;
    let (lambda, alpha) = (fit.lambda, fit.alpha);
    let beta: Vec<f64> = fit
        .coefficients
        .iter()
        .enumerate()
        .map(|(j, &c)| if prep.usable[j] { c * prep.sds[j] } else { 0.0 })
        .collect();
    let b0 = fit.intercept
        + fit
            .coefficients
            .iter()
            .enumerate()
            .map(|(j, &c)| c * prep.means[j])
            .sum::<f64>();
    let mut state = State {
        beta,
        b0,
        eta: vec![0.0; prep.n],
        sweeps: 0,
    };
    state.recompute_eta(&prep);
    let grad = prep.gradient(&state.eta);
    let mut worst = (state
        .eta
        .iter()
        .zip(&prep.y)
        .map(|(&e, &y)| logistic(e) - y)
        .sum::<f64>()
        / prep.n as f64)
        .abs();
    for (j, &g) in grad.iter().enumerate() {
        if !prep.usable[j] {
            continue;
        }
        let b = state.beta[j];
        let v = if b != 0.0 {
            (g + lambda * (1.0 - alpha) * b + lambda * alpha * b.signum()).abs()
        } else {
            (g.abs() - lambda * alpha).max(0.0)
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

/// Geometric sequence from `lmax` down to `lmax·min_ratio`.
pub fn lambda_path(lmax: f64, min_ratio: f64, length: usize) -> Vec<f64> {
    if length == 1 {
        return vec![lmax];
    }
    let step = min_ratio.ln() / (length - 1) as f64;
    (0..length).map(|k| lmax * (step * k as f64).exp()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub path_length: usize,
    pub min_ratio: f64,
    /// Solver tolerance for the per-fold paths, which only feed deviance
    /// estimates. The final fit uses `path.solver.tol`.
    pub fold_tol: f64,
    pub path: PathOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            path_length: 50,
            min_ratio: 1e-3,
            fold_tol: 1e-5,
            path: PathOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvLambda {
    pub lambda: f64,
    pub index: usize,
    pub lambdas: Vec<f64>,
    /// Mean out-of-fold binomial deviance per penalty.
    pub deviance: Vec<f64>,
    pub folds: usize,
}

fn select_rows(x: &Columns, rows: &[usize]) -> Vec<Vec<f64>> {
    x.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect()
}

fn select_labels(y: &[u8], rows: &[usize]) -> Vec<u8> {
    rows.iter().map(|&i| y[i]).collect()
}

/// Chooses the penalty minimizing mean out-of-fold binomial deviance over a
/// geometric path, with stratified folds drawn from `seed`. Ties go to the
/// larger penalty.
pub fn cv_lambda(x: &Columns, y: &[u8], alpha: f64, seed: u64, opts: &CvOptions) -> Result<CvLambda> {
    check_alpha(alpha)?;
    let lmax = lambda_max(x, y, alpha)?;
    let k = folds::effective_folds(y, opts.folds)?;
    let lambdas = lambda_path(lmax, opts.min_ratio, opts.path_length);
    let assignment = folds::stratified_folds(y, k, &mut seed::derived_rng(seed, seed::TAG_INNER_FOLDS, 0));

    let mut fold_opts = opts.path;
    fold_opts.solver.tol = opts.fold_tol;
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let (train, test) = folds::split(&assignment, f);
            let xt = select_rows(x, &train);
            let yt = select_labels(y, &train);
            let xv = select_rows(x, &test);
            let yv = select_labels(y, &test);
            let path = fit_path(&xt, &yt, alpha, &lambdas, &fold_opts)?;
            path.iter()
                .map(|fit| {
                    let q = predict_prob(fit, &xv)?;
                    // sum, so pooling over folds weights every cell equally
                    Ok(binomial_deviance(&yv, &q) * yv.len() as f64)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let n = y.len() as f64;
    let deviance: Vec<f64> = (0..lambdas.len())
        .map(|l| per_fold.iter().map(|f| f[l]).sum::<f64>() / n)
        .collect();
    let mut index = 0;
    for (l, &d) in deviance.iter().enumerate() {
        if d < deviance[index] {
            index = l;
        }
    }
    Ok(CvLambda {
        lambda: lambdas[index],
        index,
        lambdas,
        deviance,
        folds: k,
    })
}

/// Cross-validates the penalty, then fits the full data along the path down
/// to the selected value.
pub fn fit_cv(x: &Columns, y: &[u8], alpha: f64, seed: u64, opts: &CvOptions) -> Result<(EnetFit, CvLambda)> {
    let cv = cv_lambda(x, y, alpha, seed, opts)?;
    let mut path = fit_path(x, y, alpha, &cv.lambdas[..=cv.index], &opts.path)?;
    let fit = path.pop().expect("path has at least one penalty");
    if !fit.converged {
        warn!("elastic net did not converge at lambda = {:.3e}", fit.lambda);
    }
    Ok((fit, cv))
}
