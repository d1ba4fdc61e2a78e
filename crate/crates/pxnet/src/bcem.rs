//! Block-coordinate EM estimation of the exchangeable probit model.
//!
//! The estimator alternates two EM blocks until joint convergence:
//! - a coefficient block, whose expectation step solves a nonlinear system
//!   for `w = E[eps | y]` by Newton's method (the Jacobian solve either dense
//!   or through a two-term Neumann expansion whose pieces invert in O(1) via
//!   the exchangeable 3x3 system), and whose maximization step is a GLS
//!   update `beta + (X' Om^-1 X)^-1 X' Om^-1 w` with the precision applied
//!   implicitly;
//! - a correlation block, whose expectation step reduces to conditional
//!   second-moment averages over relation pairs (with the shared-actor class
//!   subsampled and its average linearized in `rho`), and whose maximization
//!   step alternates a Lagrange-multiplier solve with the `rho` update, the
//!   multipliers enforcing unit variance and zero disjoint covariance.
//!
//! Missing relations are handled by imputing design cells with column means
//! and responses with a threshold on the current conditional means; the
//! correlation block conditions on observed relations only.

use crate::error::{PxError, Result};
use crate::excov::{self, ExchCovParams, RHO_CEILING};
use crate::netdata::{self, NetworkData};
use crate::normal::trunc_moments;
use crate::probit;
use crate::relindex::{pair_class_counts, sample_share_actor_pairs, RelationIndex};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// How the expectation-step Newton systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NewtonMode {
    /// Two-term Neumann expansion with O(1) structured inverses (default).
    Neumann,
    /// Dense LU of the Jacobian; only for networks up to 64 actors.
    Dense,
}

/// Largest network the dense Jacobian path accepts.
pub const DENSE_LIMIT: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BcemConfig {
    /// Outer stopping threshold on `max(||d beta||_1, |d rho|)`.
    pub tol_outer: f64,
    /// Coefficient-block inner threshold on `||d beta||_1`.
    pub tol_beta: f64,
    /// Correlation-block threshold on `|d rho|`.
    pub tol_rho: f64,
    /// Newton threshold on `||d w||_inf`.
    pub tol_newton: f64,
    pub max_outer: usize,
    pub max_beta_inner: usize,
    /// Cap on the multiplier/rho alternation inside one correlation block.
    pub max_rho_inner: usize,
    pub max_newton: usize,
    /// Shared-actor pairs in the correlation subsample;
    /// `None` means `10 n (n-1)`.
    pub pair_sample_size: Option<usize>,
    /// Pairs drawn for the correlation initializer; `None` means `2 n^2`.
    pub init_sample_size: Option<usize>,
    pub newton_mode: NewtonMode,
    pub seed: u64,
}

impl Default for BcemConfig {
    fn default() -> Self {
        Self {
            tol_outer: 1e-4,
            tol_beta: 1e-5,
            tol_rho: 1e-5,
            tol_newton: 1e-6,
            max_outer: 100,
            max_beta_inner: 100,
            max_rho_inner: 50,
            max_newton: 100,
            pair_sample_size: None,
            init_sample_size: None,
            newton_mode: NewtonMode::Neumann,
            seed: 0,
        }
    }
}

impl BcemConfig {
    pub fn pair_sample(&self, n: usize) -> usize {
        self.pair_sample_size.unwrap_or(10 * n * (n - 1))
    }

    pub fn init_sample(&self, n: usize) -> usize {
        self.init_sample_size.unwrap_or(2 * n * n)
    }
}

/// Result of one expectation step.
#[derive(Debug, Clone)]
pub struct EStep {
    /// Conditional means `E[eps | y]`.
    pub w: DVector<f64>,
    /// Final `||g(w)||_inf`.
    pub residual: f64,
    pub newton_iterations: usize,
    pub used_dense_fallback: bool,
}

/// The nonlinear conditional-mean system `g(w) = (B - I) w + sigma v((B w +
/// X beta)/sigma)` with `B = -sigma^2 (p2 S2 + p3 S3)`.
///
/// Exposed so verification code can check the analytic Jacobian
/// `(I + D) B - I` against finite differences of `g`.
pub struct EStepSystem {
    eta: DVector<f64>,
    y: Vec<bool>,
    sigma: f64,
    b_coeffs: [f64; 3],
    n: usize,
}

impl EStepSystem {
    pub fn new(
        beta: &DVector<f64>,
        rho: f64,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        n: usize,
    ) -> Result<Self> {
        let idx = RelationIndex::new(n)?;
        if x.nrows() != idx.len() || y.len() != idx.len() {
            return Err(PxError::Domain(format!(
                "n = {n} implies {} relations, got X rows {} and y length {}",
                idx.len(),
                x.nrows(),
                y.len()
            )));
        }
        let p = excov::invert_params(&ExchCovParams::from_rho(rho)?, n)?;
        let sigma2 = 1.0 / p.diag;
        Ok(Self {
            eta: x * beta,
            y: y.iter().map(|&v| v == 1.0).collect(),
            sigma: sigma2.sqrt(),
            b_coeffs: [0.0, -sigma2 * p.shared, -sigma2 * p.disjoint],
            n,
        })
    }

    pub fn apply_b(&self, v: &DVector<f64>) -> DVector<f64> {
        excov::s_apply(self.b_coeffs, v, self.n).expect("length fixed at construction")
    }

    /// Independence-case initializer: truncated means at the linear predictor.
    pub fn initial_w(&self) -> DVector<f64> {
        DVector::from_fn(self.eta.len(), |d, _| trunc_moments(self.eta[d], self.y[d]).mean)
    }

    fn w_tilde(&self, bw: &DVector<f64>) -> DVector<f64> {
        (bw + &self.eta) / self.sigma
    }

    pub fn g(&self, w: &DVector<f64>) -> DVector<f64> {
        let bw = self.apply_b(w);
        let wt = self.w_tilde(&bw);
        DVector::from_fn(w.len(), |d, _| {
            bw[d] - w[d] + self.sigma * trunc_moments(wt[d], self.y[d]).mean
        })
    }

    /// Diagonal of the score derivative at the standardized argument; the
    /// chain rule through `B/sigma` is applied by the solvers.
    fn d_entries(&self, w: &DVector<f64>) -> DVector<f64> {
        let bw = self.apply_b(w);
        let wt = self.w_tilde(&bw);
        DVector::from_fn(w.len(), |d, _| {
            let m = trunc_moments(wt[d], self.y[d]).mean;
            -m * (wt[d].clamp(-37.0, 37.0) + m)
        })
    }

    /// Dense Jacobian `(I + D) B - I`; networks up to [`DENSE_LIMIT`] actors.
    pub fn jacobian_dense(&self, w: &DVector<f64>) -> Result<DMatrix<f64>> {
        if self.n > DENSE_LIMIT {
            return Err(PxError::Domain(format!(
                "dense Jacobian limited to n <= {DENSE_LIMIT}, got {}",
                self.n
            )));
        }
        let d = self.d_entries(w);
        let b = excov::dense_from_coeffs(self.b_coeffs, self.n);
        let m = w.len();
        let mut jac = DMatrix::zeros(m, m);
        for r in 0..m {
            let scale = 1.0 + d[r];
            for c in 0..m {
                jac[(r, c)] = scale * b[(r, c)];
            }
            jac[(r, r)] -= 1.0;
        }
        Ok(jac)
    }

    /// Approximate solve of `J x = g` through `J^-1 = B^-1 (Q + M)^-1` with
    /// `(Q + M)^-1 ~ Q^-1 - Q^-1 M Q^-1`, where `Q = (1 + delta) I - B^-1`
    /// and `M = D - delta I`; `delta` centers the diagonal so the neglected
    /// term is smallest.
    fn neumann_solve(&self, d: &DVector<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
        let b_inv = excov::invert_coeffs(self.b_coeffs, self.n)?;
        let delta = 0.5 * (d.min() + d.max());
        let q = [1.0 + delta - b_inv[0], -b_inv[1], -b_inv[2]];
        let q_inv = excov::invert_coeffs(q, self.n)?;
        let t1 = excov::s_apply(q_inv, g, self.n)?;
        let t2 = DVector::from_fn(t1.len(), |k, _| (d[k] - delta) * t1[k]);
        let t3 = excov::s_apply(q_inv, &t2, self.n)?;
        excov::s_apply(b_inv, &(t1 - t3), self.n)
    }
}

/// Expectation step: solve for `w = E[eps | y]` at the given parameters.
///
/// At `rho = 0` the system decouples and the truncated means are exact.
/// Newton divergence (residual growing five consecutive steps) first enables
/// step halving, then falls back to the dense solver when the network is
/// small enough.
pub fn beta_estep(
    beta: &DVector<f64>,
    rho: f64,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    n: usize,
    config: &BcemConfig,
) -> Result<EStep> {
    if rho < 1e-10 {
        let eta = x * beta;
        let w = DVector::from_fn(eta.len(), |d, _| {
            trunc_moments(eta[d], y[d] == 1.0).mean
        });
        return Ok(EStep { w, residual: 0.0, newton_iterations: 0, used_dense_fallback: false });
    }
    let system = EStepSystem::new(beta, rho, x, y, n)?;
    let mut mode = config.newton_mode;
    if mode == NewtonMode::Dense && n > DENSE_LIMIT {
        return Err(PxError::Domain(format!(
            "dense Newton mode limited to n <= {DENSE_LIMIT}, got {n}"
        )));
    }

    let mut w = system.initial_w();
    let mut damped = false;
    let mut used_dense_fallback = false;
    let mut grow_count = 0usize;
    let mut prev_residual = f64::INFINITY;
    let mut iterations = 0usize;
    let mut residual = system.g(&w).amax();

    while iterations < config.max_newton {
        if residual > prev_residual {
            grow_count += 1;
        } else {
            grow_count = 0;
        }
        if grow_count >= 5 {
            grow_count = 0;
            if !damped {
                damped = true;
            } else if mode == NewtonMode::Neumann && n <= DENSE_LIMIT && !used_dense_fallback {
                mode = NewtonMode::Dense;
                used_dense_fallback = true;
                damped = false;
                w = system.initial_w();
                residual = system.g(&w).amax();
                prev_residual = f64::INFINITY;
                continue;
            } else {
                return Err(PxError::Numeric(format!(
                    "expectation-step Newton diverged (residual {residual:.3e})"
                )));
            }
        }
        prev_residual = residual;

        let g = system.g(&w);
        let d = system.d_entries(&w);
        let step = match mode {
            NewtonMode::Dense => {
                let jac = system.jacobian_dense(&w)?;
                jac.lu()
                    .solve(&g)
                    .ok_or_else(|| PxError::Singular("expectation-step Jacobian".into()))?
            }
            NewtonMode::Neumann => match system.neumann_solve(&d, &g) {
                Ok(s) => s,
                Err(_) if n <= DENSE_LIMIT => {
                    // Structured inverse unavailable at these parameters.
                    used_dense_fallback = true;
                    mode = NewtonMode::Dense;
                    continue;
                }
                Err(e) => return Err(e),
            },
        };
        iterations += 1;

        let mut applied = step.clone();
        if damped {
            let mut scale = 1.0;
            let base = residual;
            loop {
                let candidate = &w - &applied;
                let cand_res = system.g(&candidate).amax();
                if cand_res <= base || scale < 1.0 / 1024.0 {
                    break;
                }
                scale *= 0.5;
                applied = &step * scale;
            }
        }
        w -= &applied;
        residual = system.g(&w).amax();
        if applied.amax() < config.tol_newton {
            break;
        }
    }

    Ok(EStep { w, residual, newton_iterations: iterations, used_dense_fallback })
}

/// Maximization step for the coefficients:
/// `beta + (X' Om^-1 X)^-1 X' Om^-1 w`, with the precision applied through
/// the structured matrix-vector product.
pub fn beta_mstep(
    beta: &DVector<f64>,
    w: &DVector<f64>,
    rho: f64,
    x: &DMatrix<f64>,
    n: usize,
) -> Result<DVector<f64>> {
    let p_cov = x.ncols();
    let mut omega_inv_x = DMatrix::zeros(x.nrows(), p_cov);
    if rho == 0.0 {
        omega_inv_x.copy_from(x);
    } else {
        let p = excov::invert_params(&ExchCovParams::from_rho(rho)?, n)?;
        for c in 0..p_cov {
            let col = DVector::from_column_slice(x.column(c).as_slice());
            omega_inv_x.set_column(c, &excov::s_apply(p.coeffs(), &col, n)?);
        }
    }
    let gram = x.transpose() * &omega_inv_x;
    let rhs = omega_inv_x.transpose() * w;
    let delta = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| PxError::RankDeficient("X' Om^-1 X singular".into()))?;
    Ok(beta + delta)
}

/// Conditional second-moment statistics driving the correlation update.
///
/// `gamma1` averages `E[eps^2 | y]` over observed relations; the shared-actor
/// average is carried as a line `a2 + b2 * rho` anchored at the independence
/// value `a2` and the perfect-correlation value `c2`; `gamma3` comes from the
/// sum-of-products identity over the observed univariate means, so it costs
/// O(n^2) with or without missing data.
#[derive(Debug, Clone, Copy)]
pub struct GammaStats {
    pub gamma1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    pub gamma3: f64,
}

impl GammaStats {
    pub fn gamma2(&self, rho: f64) -> f64 {
        self.a2 + self.b2 * rho
    }
}

/// Exact subsampled shared-actor average `E[eps_1 eps_2 | y_1, y_2]` at a
/// given correlation, through the bivariate closed form. Costs one bivariate
/// CDF per pair; pairs whose joint outcome mass underflows fall back to their
/// independence value (they carry no usable signal).
pub fn exact_pair_average(
    eta: &DVector<f64>,
    y: &DVector<f64>,
    pairs: &[(usize, usize)],
    rho: f64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(PxError::Degenerate("empty shared-actor subsample".into()));
    }
    let mut total = 0.0;
    for &(d1, d2) in pairs {
        let obs = crate::normal::PairObservation {
            eta1: eta[d1],
            eta2: eta[d2],
            y1: y[d1] == 1.0,
            y2: y[d2] == 1.0,
            rho,
        };
        total += match crate::normal::pair_expectation(&obs) {
            Ok(v) => v,
            Err(_) => {
                trunc_moments(eta[d1], y[d1] == 1.0).mean
                    * trunc_moments(eta[d2], y[d2] == 1.0).mean
            }
        };
    }
    Ok(total / pairs.len() as f64)
}

pub fn gamma_compute(
    eta: &DVector<f64>,
    y: &DVector<f64>,
    observed: &[bool],
    pairs: &[(usize, usize)],
    n: usize,
) -> Result<GammaStats> {
    let idx = RelationIndex::new(n)?;
    let m = idx.len();
    if eta.len() != m || y.len() != m || observed.len() != m {
        return Err(PxError::Domain("inconsistent lengths in moment statistics".into()));
    }
    if pairs.is_empty() {
        return Err(PxError::Degenerate("empty shared-actor subsample".into()));
    }
    let counts = pair_class_counts(n)?;
    if counts.disjoint == 0 {
        return Err(PxError::Domain("need n >= 4 for disjoint relation pairs".into()));
    }

    let mut means = vec![0.0f64; m];
    let mut sum_mean = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_second = 0.0;
    let mut observed_count = 0usize;
    for d in 0..m {
        if observed[d] {
            let tm = trunc_moments(eta[d], y[d] == 1.0);
            means[d] = tm.mean;
            sum_mean += tm.mean;
            sum_sq += tm.mean * tm.mean;
            sum_second += tm.second_moment;
            observed_count += 1;
        }
    }
    if observed_count == 0 {
        return Err(PxError::Degenerate("no observed relations".into()));
    }
    let gamma1 = sum_second / observed_count as f64;

    let mut a2 = 0.0;
    let mut c2 = 0.0;
    for &(d1, d2) in pairs {
        if !observed[d1] || !observed[d2] {
            return Err(PxError::Domain("subsampled pair touches a missing relation".into()));
        }
        a2 += means[d1] * means[d2];
        c2 += crate::normal::pair_expectation_rho_one(&crate::normal::PairObservation {
            eta1: eta[d1],
            eta2: eta[d2],
            y1: y[d1] == 1.0,
            y2: y[d2] == 1.0,
            rho: 1.0,
        });
    }
    a2 /= pairs.len() as f64;
    c2 /= pairs.len() as f64;

    // Sum-of-products identity with observed sums inflated to population
    // scale: the square of the total, minus the diagonal, minus the
    // shared-actor block estimated from the subsample.
    let scale = counts.identical as f64 / observed_count as f64;
    let gamma3 = ((scale * sum_mean).powi(2)
        - scale * sum_sq
        - counts.share_actor as f64 * a2)
        / counts.disjoint as f64;

    Ok(GammaStats { gamma1, a2, b2: c2 - a2, c2, gamma3 })
}

/// One maximization step for the correlation.
#[derive(Debug, Clone, Copy)]
pub struct RhoUpdate {
    pub rho: f64,
    /// Lagrange multipliers for the unit-variance and zero-disjoint
    /// constraints.
    pub lambda: (f64, f64),
    /// Set when the update hit the positive-definiteness boundary.
    pub clamped: bool,
    pub iterations: usize,
}

/// Alternate the multiplier solve and the correlation update until the
/// correlation stabilizes. The partial derivatives of the covariance
/// coefficients with respect to the precision coefficients are recomputed at
/// the current `rho` every pass.
pub fn rho_mstep(
    gamma: &GammaStats,
    rho: f64,
    n: usize,
    config: &BcemConfig,
) -> Result<RhoUpdate> {
    let counts = pair_class_counts(n)?;
    let mut rho_hat = rho.clamp(0.0, RHO_CEILING);
    let mut lambda = (0.0, 0.0);
    let mut clamped = false;
    let mut iterations = 0usize;

    for _ in 0..config.max_rho_inner {
        iterations += 1;
        let p = excov::invert_params(&ExchCovParams::from_rho(rho_hat)?, n)?;
        let partials = excov::cov_param_partials(&p, n)?;
        // [d phi1/d p1, d phi3/d p1; d phi1/d p3, d phi3/d p3] lambda =
        //   [ |Theta1| (gamma1 - 1); |Theta3| gamma3 ]
        let (m00, m01) = (partials[(0, 0)], partials[(2, 0)]);
        let (m10, m11) = (partials[(0, 2)], partials[(2, 2)]);
        let det = m00 * m11 - m01 * m10;
        let scale = m00.abs().max(m11.abs()).max(1e-30);
        if det.abs() < 1e-14 * scale * scale {
            return Err(PxError::Numeric(format!(
                "singular multiplier system at rho = {rho_hat}"
            )));
        }
        let rhs0 = counts.identical as f64 * (gamma.gamma1 - 1.0);
        let rhs1 = counts.disjoint as f64 * gamma.gamma3;
        lambda = (
            (m11 * rhs0 - m01 * rhs1) / det,
            (-m10 * rhs0 + m00 * rhs1) / det,
        );
        let correction =
            (partials[(0, 1)] * lambda.0 + partials[(2, 1)] * lambda.1) / counts.share_actor as f64;
        let raw = gamma.gamma2(rho_hat) - correction;
        let next = raw.clamp(0.0, RHO_CEILING);
        if raw != next {
            clamped = true;
        }
        let delta = (next - rho_hat).abs();
        rho_hat = next;
        if delta < config.tol_rho {
            break;
        }
    }

    Ok(RhoUpdate { rho: rho_hat, lambda, clamped, iterations })
}

/// Correlation initializer: a mixture of the midpoint prior 1/4 (weighted as
/// if it were `100 n` samples) and a data estimate from a shared-actor
/// subsample of size `2 n^2`, the data estimate being the fixed point of the
/// linearized pair average, `a2 / (1 - b2)`.
pub fn rho_init<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    observed: &[bool],
    beta0: &DVector<f64>,
    n: usize,
    config: &BcemConfig,
    rng: &mut R,
) -> Result<f64> {
    let pairs = sample_share_actor_pairs(n, config.init_sample(n), Some(observed), rng)?;
    let sample_len = pairs.len() as f64;
    let prior_mass = 100.0 * n as f64;
    let prior_term = prior_mass / (4.0 * (prior_mass + sample_len));
    let data_weight = sample_len / (prior_mass + sample_len);

    let first = y
        .iter()
        .zip(observed)
        .find_map(|(&v, &o)| o.then_some(v));
    let degenerate = match first {
        None => true,
        Some(v0) => y
            .iter()
            .zip(observed)
            .all(|(&v, &o)| !o || v == v0),
    };
    if degenerate {
        return Ok(prior_term);
    }

    let eta = x * beta0;
    let gamma = gamma_compute(&eta, y, observed, &pairs, n)?;
    let raw = gamma.a2 / (1.0 - gamma.b2);
    let rho_tilde = if raw.is_finite() { raw.clamp(0.0, RHO_CEILING) } else { 0.0 };
    Ok((prior_term + data_weight * rho_tilde).clamp(0.0, RHO_CEILING))
}

/// Per-outer-iteration trace entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuterTrace {
    pub outer: usize,
    pub beta_inner: usize,
    pub rho_inner: usize,
    pub beta_delta_l1: f64,
    pub rho_delta: f64,
    pub rho: f64,
    pub newton_residual: f64,
}

/// A fitted exchangeable probit model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PxFit {
    pub beta: Vec<f64>,
    pub rho: f64,
    pub converged: bool,
    #[serde(rename = "iterations")]
    pub outer_iterations: usize,
    pub trace: Vec<OuterTrace>,
    pub seed: u64,
    pub runtime_seconds: f64,
}

/// Fit the model: independent-probit and mixture initializers, then
/// alternate the coefficient and correlation blocks until
/// `max(||d beta||_1, |d rho|)` drops below the outer tolerance.
pub fn fit(data: &NetworkData, config: &BcemConfig) -> Result<PxFit> {
    let start = std::time::Instant::now();
    let n = data.n;
    if n < 4 {
        return Err(PxError::Domain(format!("estimation needs n >= 4, got {n}")));
    }
    let idx = data.index();

    let mut x = data.x.clone();
    netdata::impute_missing_design(&mut x)?;
    netdata::check_full_rank(&x)?;

    let probit_fit = probit::fit_independent(&x, &data.y, &data.observed)?;
    let mut beta = probit_fit.beta;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut rho = rho_init(&x, &data.y, &data.observed, &beta, n, config, &mut rng)?;

    // One common subsample for every correlation block: redrawing each
    // iteration would put independent Monte Carlo noise into the convergence
    // comparisons, which no tolerance below the subsample standard error can
    // ever beat. Holding the draw fixed makes the alternation a
    // deterministic fixed-point iteration with the same per-draw accuracy.
    let pair_sample = sample_share_actor_pairs(
        n,
        config.pair_sample(n),
        Some(&data.observed),
        &mut rng,
    )?;

    let has_missing = data.has_missing();
    let mut y_work = data.y.clone();
    let mut w_latest: DVector<f64> = DVector::zeros(idx.len());
    let mut trace = Vec::new();
    let mut converged = false;
    let mut outer_done = 0usize;

    for outer in 0..config.max_outer {
        outer_done = outer + 1;

        // Missing responses: threshold the current conditional means at the
        // negated observed-average linear predictor, refreshed each pass.
        if has_missing {
            let eta = &x * &beta;
            let (mut sum, mut count) = (0.0, 0usize);
            for d in 0..idx.len() {
                if data.observed[d] {
                    sum += eta[d];
                    count += 1;
                }
            }
            let eta_bar = sum / count as f64;
            for d in 0..idx.len() {
                if !data.observed[d] {
                    y_work[d] = f64::from(w_latest[d] > -eta_bar);
                }
            }
        }

        // Coefficient block.
        let beta_block_start = beta.clone();
        let mut beta_inner = 0usize;
        let mut newton_residual;
        loop {
            beta_inner += 1;
            let estep = beta_estep(&beta, rho, &x, &y_work, n, config)?;
            newton_residual = estep.residual;
            let beta_next = beta_mstep(&beta, &estep.w, rho, &x, n)?;
            let delta: f64 = (&beta_next - &beta).abs().sum();
            w_latest = estep.w;
            beta = beta_next;
            if delta < config.tol_beta || beta_inner >= config.max_beta_inner {
                break;
            }
        }

        // Correlation block: moment statistics at the current coefficients,
        // then the multiplier/rho alternation. The line through the
        // independence and perfect-correlation anchors drifts from the exact
        // pairwise average on dense networks, so it is re-anchored at the
        // exact value for the incoming correlation; the converged fixed
        // point is then the exact-pairwise one while the slope only steers
        // the alternation.
        let rho_block_start = rho;
        let eta = &x * &beta;
        let mut gamma = gamma_compute(&eta, &data.y, &data.observed, &pair_sample, n)?;
        let exact_here = exact_pair_average(&eta, &data.y, &pair_sample, rho)?;
        gamma.a2 += exact_here - gamma.gamma2(rho);
        let update = rho_mstep(&gamma, rho, n, config)?;
        let rho_inner = update.iterations;
        rho = update.rho;

        let beta_delta: f64 = (&beta - &beta_block_start).abs().sum();
        let rho_delta = (rho - rho_block_start).abs();
        trace.push(OuterTrace {
            outer,
            beta_inner,
            rho_inner,
            beta_delta_l1: beta_delta,
            rho_delta,
            rho,
            newton_residual,
        });
        if beta_delta.max(rho_delta) <= config.tol_outer {
            converged = true;
            break;
        }
    }

    Ok(PxFit {
        beta: beta.iter().copied().collect(),
        rho,
        converged,
        outer_iterations: outer_done,
        trace,
        seed: config.seed,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}
