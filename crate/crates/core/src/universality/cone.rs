use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, norm_sq};
use crate::snmf::Embedding;

/// Solves `min_{x ≥ 0} ‖b − A x‖²` by the Lawson–Hanson active-set method.
pub fn nnls(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let r = a.ncols();
    let g = a.t().dot(&a);
    let atb = a.t().dot(&b);
    let scale = g.diag().iter().fold(0.0f64, |m, v| m.max(*v)).max(1.0);
    let tol = 1e-12 * scale * atb.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut x = Array1::<f64>::zeros(r);
    let mut passive = vec![false; r];
    let solve_passive = |passive: &[bool]| -> Array1<f64> {
        let idx: Vec<usize> = (0..r).filter(|&j| passive[j]).collect();
        let mut sub = Array2::<f64>::zeros((idx.len(), idx.len()));
        let mut rhs = Array1::<f64>::zeros(idx.len());
        for (p, &i) in idx.iter().enumerate() {
            rhs[p] = atb[i];
            for (q, &j) in idx.iter().enumerate() {
                sub[[p, q]] = g[[i, j]];
            }
        }
        let mut l = cholesky(sub.view());
        let mut jitter = 1e-14 * scale;
        while l.is_none() {
            let mut reg = sub.clone();
            reg.diag_mut().mapv_inplace(|v| v + jitter);
            l = cholesky(reg.view());
            jitter *= 10.0;
        }
        let s = cholesky_solve(l.unwrap().view(), rhs.view());
        let mut full = Array1::<f64>::zeros(r);
        for (p, &i) in idx.iter().enumerate() {
            full[i] = s[p];
        }
        full
    };
    for _ in 0..(3 * r + 10) {
        let grad = &atb - &g.dot(&x);
        let next = (0..r)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]).then(j.cmp(&i)));
        let Some(j) = next.filter(|&j| grad[j] > tol) else { break };
        passive[j] = true;
        for _ in 0..(3 * r + 10) {
            let s = solve_passive(&passive);
            if (0..r).filter(|&i| passive[i]).all(|i| s[i] > 0.0) {
                x = s;
                break;
            }
            let mut step = f64::INFINITY;
            for i in (0..r).filter(|&i| passive[i] && s[i] <= 0.0) {
                step = step.min(x[i] / (x[i] - s[i]));
            }
            x = &x + &((&s - &x) * step);
            for i in 0..r {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}

/// Fraction of `‖w‖²` captured by the nonnegative cone of `target`'s columns.
pub fn cone_projection_score(w: ArrayView1<f64>, target: &Embedding) -> Result<f64> {
    if w.len() != target.n() {
        return Err(Error::Consistency(format!(
            "vector of length {} against embedding with {} rows",
            w.len(),
            target.n()
        )));
    }
    let total = norm_sq(w);
    if total == 0.0 {
        return Err(Error::UndefinedScore("cone projection of a zero vector".into()));
    }
    let x = nnls(target.w.view(), w);
    let resid = &w - &target.w.dot(&x);
    Ok((1.0 - norm_sq(resid.view()) / total).clamp(0.0, 1.0))
}
