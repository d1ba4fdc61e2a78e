//! Independent-observation probit regression by Newton's method.
//!
//! Serves both as the initializer for the block-coordinate estimator and as
//! the baseline comparator. The score at `beta` is `X' m` where `m` holds the
//! univariate truncated means, and the observed information is `X' W X` with
//! `W = diag(m (m + eta))`.

use crate::error::{PxError, Result};
use crate::normal::{log_std_cdf, trunc_moments};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct ProbitFit {
    pub beta: DVector<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;
const SEPARATION_NORM: f64 = 1e3;

fn log_likelihood(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            let sign = 2.0 * yi - 1.0;
            log_std_cdf(sign * e.clamp(-37.0, 37.0))
        })
        .sum()
}

/// Maximum-likelihood probit fit assuming independent relations, over the
/// observed rows only. Deterministic Newton iteration with step halving and a
/// small ridge for near-singular information matrices.
pub fn fit_independent(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    observed: &[bool],
) -> Result<ProbitFit> {
    if y.len() != x.nrows() || observed.len() != x.nrows() {
        return Err(PxError::Domain(format!(
            "sizes disagree: X has {} rows, y {}, mask {}",
            x.nrows(),
            y.len(),
            observed.len()
        )));
    }
    let rows: Vec<usize> = (0..x.nrows()).filter(|&d| observed[d]).collect();
    if rows.len() <= x.ncols() {
        return Err(PxError::Degenerate(format!(
            "{} observed relations for {} coefficients",
            rows.len(),
            x.ncols()
        )));
    }
    let xo = x.select_rows(rows.iter());
    let yo: Vec<f64> = rows.iter().map(|&d| y[d]).collect();
    crate::netdata::check_full_rank(&xo)?;
    if yo.iter().all(|&v| v == 1.0) || yo.iter().all(|&v| v == 0.0) {
        return Err(PxError::Separation("all observed responses equal".into()));
    }

    let p = xo.ncols();
    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(&xo, &yo, &beta);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        let eta = &xo * &beta;
        let mut grad = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        for (r, &yi) in yo.iter().enumerate() {
            let tm = trunc_moments(eta[r], yi == 1.0);
            let weight = tm.mean * (tm.mean + eta[r].clamp(-37.0, 37.0));
            let xr = xo.row(r);
            for a in 0..p {
                grad[a] += tm.mean * xr[a];
                for b in a..p {
                    info[(a, b)] += weight * xr[a] * xr[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }

        let step = match info.clone().cholesky() {
            Some(chol) => chol.solve(&grad),
            None => {
                let mut ridged = info.clone();
                for a in 0..p {
                    ridged[(a, a)] += 1e-10;
                }
                ridged
                    .cholesky()
                    .ok_or_else(|| PxError::Singular("probit information matrix".into()))?
                    .solve(&grad)
            }
        };

        // Under separation the gradient decays while the Newton step stays
        // large, so a small gradient alone is not convergence; and once the
        // likelihood plateaus in f64, the information matrix collapses
        // instead of the step shrinking.
        if grad.amax() < GRAD_TOL {
            let eigs = info.symmetric_eigenvalues();
            let (min_eig, max_eig) =
                eigs.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
            if min_eig < 1e-8 * (1.0 + max_eig) {
                return Err(PxError::Separation(format!(
                    "likelihood plateau: information matrix eigenvalue {min_eig:.3e} at |beta| = {}",
                    beta.amax()
                )));
            }
            if step.amax() < 1e-6 {
                converged = true;
                break;
            }
        }

        // Step halving against the log-likelihood.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta + scale * &step;
            let cand_ll = log_likelihood(&xo, &yo, &candidate);
            if cand_ll >= ll - 1e-12 {
                beta = candidate;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        if beta.amax() > SEPARATION_NORM {
            return Err(PxError::Separation(format!(
                "coefficient norm {} exceeds {SEPARATION_NORM}",
                beta.amax()
            )));
        }
    }

    Ok(ProbitFit { beta, log_likelihood: ll, iterations, converged })
}
