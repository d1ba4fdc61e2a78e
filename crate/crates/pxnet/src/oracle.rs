//! Desk-scale exact-likelihood references.
//!
//! Everything here scales only to tiny networks and exists to validate the
//! fast estimator: a sequential-conditioning simulator for the dense data
//! log-likelihood, a derivative-free maximizer of that simulated likelihood,
//! and a single-site Gibbs sampler for the truncated latent vector whose
//! means oracle the expectation step.
//!
//! The likelihood simulator uses common random numbers keyed by the seed
//! (one counter-derived stream per draw), so the simulated surface is smooth
//! in `(beta, rho)` and safe to optimize.

use crate::error::{PxError, Result};
use crate::excov::{self, ExchCovParams};
use crate::netdata::NetworkData;
use crate::normal::{log_std_cdf, std_cdf, std_quantile, trunc_moments};
use crate::relindex::RelationIndex;
use crate::simulate::mix_seed;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Largest network the dense references accept.
pub const ORACLE_LIMIT: usize = 16;
const GIBBS_LIMIT: usize = 10;

/// Draw from a standard normal conditioned on `x > a`, inverted from a
/// uniform; stable in both tails.
fn sample_std_above(a: f64, u: f64) -> f64 {
    let tail = std_cdf(-a);
    let t = (1.0 - u) * tail;
    if t <= 1e-300 {
        // Conditioning mass at the f64 floor; the draw pins to the boundary.
        return a;
    }
    -std_quantile(t.min(1.0 - 1e-16))
}

fn sample_std_below(b: f64, u: f64) -> f64 {
    -sample_std_above(-b, u)
}

fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Simulated log-likelihood estimate.
#[derive(Debug, Clone)]
pub struct GhkEstimate {
    pub log_likelihood: f64,
    /// Delta-method standard error of the log-likelihood estimate.
    pub standard_error: f64,
    pub draws: usize,
    /// Set when every draw underflowed; the estimate is then `-inf`.
    pub underflow: bool,
}

/// Estimate `log P(y | beta, rho)` by sequential conditioning on the dense
/// Cholesky factor of the sign-flipped latent covariance.
///
/// Relations are processed in index order; changing the order changes the
/// estimator's variance, not its target, and a fixed order keeps runs
/// reproducible.
pub fn ghk_loglik(
    beta: &DVector<f64>,
    rho: f64,
    data: &NetworkData,
    draws: usize,
    seed: u64,
) -> Result<GhkEstimate> {
    let n = data.n;
    if n > ORACLE_LIMIT {
        return Err(PxError::Domain(format!(
            "likelihood simulator limited to n <= {ORACLE_LIMIT}, got {n}"
        )));
    }
    if draws < 100 {
        return Err(PxError::Domain("need at least 100 draws".into()));
    }
    if data.has_missing() {
        return Err(PxError::Domain("likelihood simulator needs fully observed data".into()));
    }
    if beta.len() != data.x.ncols() {
        return Err(PxError::Domain(format!(
            "{} coefficients for {} design columns",
            beta.len(),
            data.x.ncols()
        )));
    }
    let idx = RelationIndex::new(n)?;
    let m = idx.len();
    let eta = &data.x * beta;
    let signs: Vec<f64> = (0..m).map(|d| 2.0 * data.y[d] - 1.0).collect();

    let omega = excov::dense_omega(&ExchCovParams::from_rho(rho)?, n);
    let signed_cov = DMatrix::from_fn(m, m, |r, c| signs[r] * signs[c] * omega[(r, c)]);
    let chol = signed_cov.cholesky().ok_or_else(|| {
        PxError::NotPositiveDefinite(format!("latent covariance at rho = {rho}"))
    })?;
    let lower = chol.l();

    let mut log_products = Vec::with_capacity(draws);
    let mut shocks = vec![0.0f64; m];
    for r in 0..draws {
        let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, &[r as u64]));
        let mut log_product = 0.0;
        for k in 0..m {
            let mut partial = 0.0;
            for j in 0..k {
                partial += lower[(k, j)] * shocks[j];
            }
            // Constraint: signs[k] * z[k] > 0, i.e. shock_k > threshold.
            let threshold = -(signs[k] * eta[k] + partial) / lower[(k, k)];
            log_product += log_std_cdf(-threshold);
            let u: f64 = rng.random();
            shocks[k] = sample_std_above(threshold, u);
        }
        log_products.push(log_product);
    }

    let log_likelihood = logsumexp(&log_products) - (draws as f64).ln();
    if !log_likelihood.is_finite() {
        return Ok(GhkEstimate {
            log_likelihood: f64::NEG_INFINITY,
            standard_error: f64::INFINITY,
            draws,
            underflow: true,
        });
    }
    let max = log_products.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_products.iter().map(|lp| (lp - max).exp()).collect();
    let mean = weights.iter().sum::<f64>() / draws as f64;
    let var = weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / draws as f64;
    let standard_error = (var / draws as f64).sqrt() / mean;
    Ok(GhkEstimate { log_likelihood, standard_error, draws, underflow: false })
}

/// Result of the derivative-free likelihood maximization.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub beta: Vec<f64>,
    pub rho: f64,
    pub log_likelihood: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each accepted simplex move.
    pub trace: Vec<f64>,
}

const RHO_TRANSFORM_FLOOR: f64 = 1e-4;

fn rho_to_unconstrained(rho: f64) -> f64 {
    let r = rho.clamp(RHO_TRANSFORM_FLOOR, 0.5 - RHO_TRANSFORM_FLOOR);
    let q = 2.0 * r;
    (q / (1.0 - q)).ln()
}

fn rho_from_unconstrained(t: f64) -> f64 {
    0.5 / (1.0 + (-t).exp())
}

/// Maximize the simulated log-likelihood over `(beta, logit(2 rho))` with a
/// Nelder-Mead simplex under common random numbers.
pub fn numeric_mle(
    data: &NetworkData,
    init_beta: &DVector<f64>,
    init_rho: f64,
    draws: usize,
    seed: u64,
    max_evaluations: usize,
) -> Result<MleFit> {
    if data.n > ORACLE_LIMIT {
        return Err(PxError::Domain(format!(
            "numeric likelihood maximizer limited to n <= {ORACLE_LIMIT}"
        )));
    }
    if init_beta.len() != data.x.ncols() {
        return Err(PxError::Domain(format!(
            "{} coefficients for {} design columns",
            init_beta.len(),
            data.x.ncols()
        )));
    }
    let p = init_beta.len();
    let dim = p + 1;
    let objective = |theta: &DVector<f64>| -> f64 {
        let beta = DVector::from_fn(p, |k, _| theta[k]);
        let rho = rho_from_unconstrained(theta[p]);
        match ghk_loglik(&beta, rho, data, draws, seed) {
            Ok(est) if est.log_likelihood.is_finite() => -est.log_likelihood,
            _ => f64::INFINITY,
        }
    };

    let mut start = DVector::zeros(dim);
    for k in 0..p {
        start[k] = init_beta[k];
    }
    start[p] = rho_to_unconstrained(init_rho);

    let mut simplex: Vec<DVector<f64>> = (0..=dim)
        .map(|k| {
            let mut v = start.clone();
            if k > 0 {
                v[k - 1] += if k - 1 < p { 0.25 } else { 0.5 };
            }
            v
        })
        .collect();
    let mut values: Vec<f64> = simplex.iter().map(|v| objective(v)).collect();
    let mut evaluations = dim + 1;
    let mut trace = Vec::new();
    let mut converged = false;

    while evaluations < max_evaluations {
        let mut order: Vec<usize> = (0..simplex.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let (best, worst) = (order[0], order[dim]);
        let second_worst = order[dim - 1];
        trace.push(-values[best]);
        let spread = (values[worst] - values[best]).abs();
        if spread < 1e-7 * (1.0 + values[best].abs()) {
            converged = true;
            break;
        }

        let mut centroid: DVector<f64> = DVector::zeros(dim);
        for &k in order.iter().take(dim) {
            centroid += &simplex[k];
        }
        centroid /= dim as f64;

        let reflected = &centroid * 2.0 - &simplex[worst];
        let f_reflected = objective(&reflected);
        evaluations += 1;
        if f_reflected < values[best] {
            let expanded = &centroid * 3.0 - &simplex[worst] * 2.0;
            let f_expanded = objective(&expanded);
            evaluations += 1;
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let contracted = (&centroid + &simplex[worst]) * 0.5;
            let f_contracted = objective(&contracted);
            evaluations += 1;
            if f_contracted < values[worst] {
                simplex[worst] = contracted;
                values[worst] = f_contracted;
            } else {
                let anchor = simplex[best].clone();
                for k in 0..simplex.len() {
                    if k != best {
                        simplex[k] = (&simplex[k] + &anchor) * 0.5;
                        values[k] = objective(&simplex[k]);
                        evaluations += 1;
                    }
                }
            }
        }
    }

    let best = (0..simplex.len())
        .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap())
        .expect("simplex nonempty");
    let theta = &simplex[best];
    Ok(MleFit {
        beta: (0..p).map(|k| theta[k]).collect(),
        rho: rho_from_unconstrained(theta[p]),
        log_likelihood: -values[best],
        evaluations,
        converged,
        trace,
    })
}

/// Gibbs means of the latent errors given the responses, with batch-means
/// standard errors; optionally tracks products for chosen relation pairs.
#[derive(Debug, Clone)]
pub struct GibbsEstimate {
    pub mean: DVector<f64>,
    pub se: DVector<f64>,
    pub pair_mean: Vec<f64>,
    pub pair_se: Vec<f64>,
    pub sweeps: usize,
}

/// Single-site Gibbs over the truncated latent vector. Each site's
/// conditional is normal with mean `mu_d + (B v)_d` and variance `1/p1`,
/// truncated by the observed sign; the structured matrix-vector pieces are
/// maintained incrementally so a sweep costs O(n^2).
pub fn gibbs_conditional(
    beta: &DVector<f64>,
    rho: f64,
    data: &NetworkData,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
    track_pairs: &[(usize, usize)],
) -> Result<GibbsEstimate> {
    let n = data.n;
    if n > GIBBS_LIMIT {
        return Err(PxError::Domain(format!(
            "Gibbs reference limited to n <= {GIBBS_LIMIT}, got {n}"
        )));
    }
    if data.has_missing() {
        return Err(PxError::Domain("Gibbs reference needs fully observed data".into()));
    }
    if sweeps == 0 {
        return Err(PxError::Domain("need at least one retained sweep".into()));
    }
    let idx = RelationIndex::new(n)?;
    let m = idx.len();
    let pairs: Vec<(usize, usize)> = idx.pairs().collect();
    let eta = &data.x * beta;
    let p = excov::invert_params(&ExchCovParams::from_rho(rho)?, n)?;
    let sigma2 = 1.0 / p.diag;
    let sigma = sigma2.sqrt();

    // State: v = z - mu, actor sums of v, and the total.
    let mut v = DVector::from_fn(m, |d, _| trunc_moments(eta[d], data.y[d] == 1.0).mean);
    let mut actor_sum = vec![0.0f64; n];
    for (d, &(i, j)) in pairs.iter().enumerate() {
        actor_sum[i] += v[d];
        actor_sum[j] += v[d];
    }
    let mut total: f64 = v.sum();

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let batches = 30usize.min(sweeps).max(1);
    let mut site_batch = DMatrix::zeros(m, batches);
    let mut pair_batch = DMatrix::zeros(track_pairs.len(), batches);
    let mut batch_counts = vec![0usize; batches];

    for sweep in 0..burn_in + sweeps {
        for d in 0..m {
            let (i, j) = pairs[d];
            let share = actor_sum[i] + actor_sum[j] - 2.0 * v[d];
            let disjoint = total - v[d] - share;
            let cond_mean = eta[d] - sigma2 * (p.shared * share + p.disjoint * disjoint);
            // z_d = cond_mean + sigma * shock, constrained by the sign of z.
            let threshold = -cond_mean / sigma;
            let u: f64 = rng.random();
            let shock = if data.y[d] == 1.0 {
                sample_std_above(threshold, u)
            } else {
                sample_std_below(threshold, u)
            };
            let z = cond_mean + sigma * shock;
            let v_new = z - eta[d];
            let delta = v_new - v[d];
            actor_sum[i] += delta;
            actor_sum[j] += delta;
            total += delta;
            v[d] = v_new;
        }
        if sweep >= burn_in {
            let b = ((sweep - burn_in) * batches / sweeps).min(batches - 1);
            batch_counts[b] += 1;
            for d in 0..m {
                site_batch[(d, b)] += v[d];
            }
            for (t, &(d1, d2)) in track_pairs.iter().enumerate() {
                pair_batch[(t, b)] += v[d1] * v[d2];
            }
        }
    }

    let summarize = |row: &[f64]| -> (f64, f64) {
        let means: Vec<f64> = row
            .iter()
            .zip(&batch_counts)
            .filter(|&(_, &c)| c > 0)
            .map(|(&s, &c)| s / c as f64)
            .collect();
        let k = means.len() as f64;
        let mean = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / k;
        (mean, (var / k).sqrt())
    };

    let mut mean = DVector::zeros(m);
    let mut se = DVector::zeros(m);
    for d in 0..m {
        let row: Vec<f64> = (0..batches).map(|b| site_batch[(d, b)]).collect();
        let (mu, s) = summarize(&row);
        mean[d] = mu;
        se[d] = s;
    }
    let mut pair_mean = Vec::with_capacity(track_pairs.len());
    let mut pair_se = Vec::with_capacity(track_pairs.len());
    for t in 0..track_pairs.len() {
        let row: Vec<f64> = (0..batches).map(|b| pair_batch[(t, b)]).collect();
        let (mu, s) = summarize(&row);
        pair_mean.push(mu);
        pair_se.push(s);
    }

    Ok(GibbsEstimate { mean, se, pair_mean, pair_se, sweeps })
}
