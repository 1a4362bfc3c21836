//! Symmetric NMF solver.
//!
//! Minimizes `½‖S − W Wᵀ‖²_F` over `W ≥ 0` by cyclic block-successive
//! upper-bound minimization with one block per entry `W_ij`. Restricted to a
//! single entry the objective is a quartic `¼y⁴ + ½Py² + Qy + const`, so the
//! block subproblem is solved exactly from the roots of its cubic derivative
//! (the tightest possible majorizer). The residual `E = W Wᵀ − S` is updated
//! in O(N) per entry and recomputed from scratch after every sweep.

use ndarray::{Array2, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::{explained_variance, Embedding};
use crate::error::{Error, Result};
use crate::kernel::SimilarityMatrix;
use crate::linalg::is_psd;
use crate::rng::task_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnmfOptions {
    /// Stop when the relative objective decrease of a sweep falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Reject inputs whose smallest eigenvalue is below `−psd_tol · λ_max`.
    pub check_psd: bool,
    pub psd_tol: f64,
}

impl Default for SnmfOptions {
    fn default() -> Self {
        SnmfOptions {
            tol: 1e-6,
            max_iters: 500,
            check_psd: true,
            psd_tol: 1e-6,
        }
    }
}

/// Real roots of `y³ + p·y + q = 0`.
fn depressed_cubic_roots(p: f64, q: f64) -> Vec<f64> {
    if p == 0.0 {
        return vec![(-q).cbrt()];
    }
    let disc = q * q / 4.0 + p * p * p / 27.0;
    if disc > 0.0 {
        let s = disc.sqrt();
        // Pick the branch without cancellation, then recover the other
        // cube root from the product u·v = −p/3.
        let u = if q > 0.0 { (-q / 2.0 - s).cbrt() } else { (-q / 2.0 + s).cbrt() };
        let v = if u != 0.0 { -p / (3.0 * u) } else { 0.0 };
        vec![u + v]
    } else {
        // Three real roots (p < 0 here).
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q) / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect()
    }
}

/// Minimizer over `y ≥ 0` of `¼y⁴ + ½p·y² + q·y`, never worse than `current`.
fn quartic_argmin_nonneg(p: f64, q: f64, current: f64) -> f64 {
    let g = |y: f64| 0.25 * y * y * y * y + 0.5 * p * y * y + q * y;
    let mut best = current;
    let mut best_val = g(current);
    let mut consider = |y: f64| {
        if y.is_finite() && y >= 0.0 {
            let val = g(y);
            if val < best_val {
                best = y;
                best_val = val;
            }
        }
    };
    consider(0.0);
    for root in depressed_cubic_roots(p, q) {
        // One Newton step polishes the closed-form root.
        let d = 3.0 * root * root + p;
        let polished = if d.abs() > 0.0 {
            root - (root * root * root + p * root + q) / d
        } else {
            root
        };
        consider(root);
        consider(polished);
    }
    best
}

struct State {
    /// `r × N`: row `j` is column `j` of `W`.
    wt: Array2<f64>,
    /// `W Wᵀ − S`.
    resid: Array2<f64>,
    col_norm_sq: Vec<f64>,
}

impl State {
    fn new(s: &Array2<f64>, wt: Array2<f64>) -> Self {
        let resid = residual(s, &wt);
        let col_norm_sq = wt.rows().into_iter().map(|r| r.dot(&r)).collect();
        State {
            wt,
            resid,
            col_norm_sq,
        }
    }

    fn objective(&self) -> f64 {
        0.5 * self.resid.iter().map(|e| e * e).sum::<f64>()
    }

    fn sweep(&mut self) {
        let (r, n) = self.wt.dim();
        for i in 0..n {
            for j in 0..r {
                let x = self.wt[[j, i]];
                let e_ii = self.resid[[i, i]];
                let q = self.resid.row(i).dot(&self.wt.row(j));
                let nj = self.col_norm_sq[j];
                let p_coef = nj - 2.0 * x * x + e_ii;
                let q_coef = q - x * nj + x * x * x - x * e_ii;
                let y = quartic_argmin_nonneg(p_coef, q_coef, x);
                let delta = y - x;
                if delta == 0.0 {
                    continue;
                }
                {
                    let col = self.wt.row(j);
                    let mut row_i = self.resid.row_mut(i);
                    row_i.scaled_add(delta, &col);
                }
                for p in 0..n {
                    if p != i {
                        self.resid[[p, i]] += delta * self.wt[[j, p]];
                    }
                }
                // The row update above also touched E_ii with δ·x; set it exactly.
                self.resid[[i, i]] = e_ii + y * y - x * x;
                self.wt[[j, i]] = y;
                self.col_norm_sq[j] += y * y - x * x;
            }
        }
    }
}

fn residual(s: &Array2<f64>, wt: &Array2<f64>) -> Array2<f64> {
    let mut e = wt.t().dot(wt);
    e.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(s.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut er, sr)| er -= &sr);
    e
}

pub(crate) fn validate_input(s: &Array2<f64>, rank: usize, opts: &SnmfOptions) -> Result<()> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::InvalidInput(format!("S must be square, got {:?}", s.dim())));
    }
    if rank == 0 || rank >= n {
        return Err(Error::InvalidInput(format!("rank must satisfy 1 <= r < N = {n}, got {rank}")));
    }
    for ((i, j), &v) in s.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row: i, col: j });
        }
        if v < 0.0 {
            return Err(Error::InvalidInput(format!("S has negative entry {v} at ({i}, {j})")));
        }
        if j > i {
            let t = s[[j, i]];
            if (v - t).abs() > 1e-6 * v.abs().max(t.abs()) {
                return Err(Error::InvalidInput(format!("S is not symmetric at ({i}, {j})")));
            }
        }
    }
    if opts.check_psd && !is_psd(s.view(), opts.psd_tol) {
        return Err(Error::NotPsd(format!(
            "smallest eigenvalue below -{} x largest",
            opts.psd_tol
        )));
    }
    Ok(())
}

/// Random nonnegative start with `E[W Wᵀ]` on the scale of `S`.
pub(crate) fn initial_factor(s: &Array2<f64>, rank: usize, seed: u64) -> Array2<f64> {
    let n = s.nrows();
    let mean = s.sum() / (n * n) as f64;
    let scale = (mean.max(0.0) / rank as f64).sqrt();
    let mut rng = task_rng(seed, &[]);
    // Uniform on (0, scale]: 1 − U with U ∈ [0, 1).
    Array2::from_shape_simple_fn((rank, n), || (1.0 - rng.random::<f64>()) * scale)
}

/// Fits `S ≈ W Wᵀ` with `W ≥ 0` of the given rank from a seeded random start.
pub fn snmf_fit(s: &SimilarityMatrix, rank: usize, seed: u64, opts: &SnmfOptions) -> Result<Embedding> {
    validate_input(&s.values, rank, opts)?;
    let wt = initial_factor(&s.values, rank, seed);
    let mut emb = fit_from(&s.values, wt, opts);
    emb.model_id = s.model_id.clone();
    emb.seed = seed;
    emb.alpha = s.alpha;
    Ok(emb)
}

/// Runs the solver from an explicit `r × N` start (`Wᵀ`). Inputs are not
/// validated.
pub fn fit_from(s: &Array2<f64>, wt0: Array2<f64>, opts: &SnmfOptions) -> Embedding {
    let mut state = State::new(s, wt0);
    let mut prev = state.objective();
    let mut trace = vec![prev];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        let saved = state.wt.clone();
        state.sweep();
        state.resid = residual(s, &state.wt);
        let obj = state.objective();
        if obj > prev {
            // Round-off at a stationary point; keep the last accepted iterate.
            state = State::new(s, saved);
            converged = true;
            break;
        }
        iterations += 1;
        trace.push(obj);
        let rel = if prev > 0.0 { (prev - obj) / prev } else { 0.0 };
        prev = obj;
        if rel < opts.tol {
            converged = true;
            break;
        }
    }

    let w = state.wt.t().to_owned();
    let ev = explained_variance(s, &w);
    Embedding {
        model_id: String::new(),
        w,
        seed: 0,
        alpha: f64::NAN,
        objective: prev,
        explained_variance: ev,
        iterations,
        converged,
        trace,
    }
}
