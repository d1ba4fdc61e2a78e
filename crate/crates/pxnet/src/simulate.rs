//! Data generators and simulation-study runners.
//!
//! The exchangeable-probit generator builds errors additively,
//! `eps_ij = sqrt(rho) (a_i + a_j) + sqrt(1 - 2 rho) xi_ij`, which hits the
//! target second moments exactly: unit variance, covariance `rho` between
//! relations sharing an actor, zero otherwise. The latent eigenmodel
//! generator (`a_i + a_j + u_i' L u_j + xi_ij`) is provided as an alternative
//! data-generating process only; nothing here fits it.
//!
//! The study runner draws designs and error replicates on counter-based
//! seeds, so cells are independent and results do not depend on the thread
//! count.

use crate::bcem::{self, BcemConfig};
use crate::error::{PxError, Result};
use crate::netdata::{self, NetworkData};
use crate::probit;
use crate::relindex::RelationIndex;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Deterministic seed derivation for replicate streams.
pub fn mix_seed(base: u64, tags: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E3779B97F4A7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
    tags.iter().fold(splitmix(base), |acc, &t| splitmix(acc ^ t))
}

/// Generate responses from the exchangeable probit model.
pub fn gen_px<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    rho: f64,
    n: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(0.0..0.5).contains(&rho) {
        return Err(PxError::Domain(format!("rho = {rho} outside [0, 0.5)")));
    }
    let idx = RelationIndex::new(n)?;
    if x.nrows() != idx.len() {
        return Err(PxError::Domain(format!(
            "design has {} rows for {} relations",
            x.nrows(),
            idx.len()
        )));
    }
    let eta = x * beta;
    let additive: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let sa = rho.sqrt();
    let sx = (1.0 - 2.0 * rho).sqrt();
    let mut y = DVector::zeros(idx.len());
    for (d, (i, j)) in idx.pairs().enumerate() {
        let noise: f64 = rng.sample(StandardNormal);
        let eps = sa * (additive[i] + additive[j]) + sx * noise;
        y[d] = f64::from(eta[d] + eps > 0.0);
    }
    Ok(y)
}

/// Latent eigenmodel generator configuration. Variances are per component:
/// `var_additive` for each actor effect `a_i`, `var_latent` for each latent
/// coordinate, `var_noise` for the relation noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenGenConfig {
    pub latent_dim: usize,
    /// Symmetric K x K weight matrix; `None` means identity.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<Vec<Vec<f64>>>,
    pub var_additive: f64,
    pub var_latent: f64,
    pub var_noise: f64,
}

impl Default for EigenGenConfig {
    /// Each of the three terms contributes variance 1/3: the pair of actor
    /// effects (2 * 1/6), the latent inner product (K * var_latent^2 = 2/6),
    /// and the noise.
    fn default() -> Self {
        Self {
            latent_dim: 2,
            weights: None,
            var_additive: 1.0 / 6.0,
            var_latent: 1.0 / 6.0_f64.sqrt(),
            var_noise: 1.0 / 3.0,
        }
    }
}

impl EigenGenConfig {
    fn weight_matrix(&self) -> Result<DMatrix<f64>> {
        let k = self.latent_dim;
        match &self.weights {
            None => Ok(DMatrix::identity(k, k)),
            Some(rows) => {
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(PxError::Domain(format!(
                        "weight matrix must be {k} x {k}"
                    )));
                }
                let m = DMatrix::from_fn(k, k, |r, c| rows[r][c]);
                if (&m - m.transpose()).amax() > 1e-12 {
                    return Err(PxError::Domain("weight matrix must be symmetric".into()));
                }
                Ok(m)
            }
        }
    }
}

/// Generate responses from the latent eigenmodel.
pub fn gen_eigen<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    config: &EigenGenConfig,
    n: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if config.var_additive < 0.0 || config.var_latent < 0.0 || config.var_noise < 0.0 {
        return Err(PxError::Domain("variance components must be nonnegative".into()));
    }
    let idx = RelationIndex::new(n)?;
    if x.nrows() != idx.len() {
        return Err(PxError::Domain(format!(
            "design has {} rows for {} relations",
            x.nrows(),
            idx.len()
        )));
    }
    let weights = config.weight_matrix()?;
    let k = config.latent_dim;
    let eta = x * beta;
    let sd_a = config.var_additive.sqrt();
    let sd_u = config.var_latent.sqrt();
    let sd_noise = config.var_noise.sqrt();
    let additive: Vec<f64> = (0..n).map(|_| sd_a * rng.sample::<f64, _>(StandardNormal)).collect();
    let latent: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_fn(k, |_, _| sd_u * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let mut y = DVector::zeros(idx.len());
    for (d, (i, j)) in idx.pairs().enumerate() {
        let noise: f64 = sd_noise * rng.sample::<f64, _>(StandardNormal);
        let inner = (latent[i].transpose() * &weights * &latent[j])[(0, 0)];
        y[d] = f64::from(eta[d] + additive[i] + additive[j] + inner + noise > 0.0);
    }
    Ok(y)
}

/// Covariates for the benchmark regression: a Bernoulli(1/2) class indicator,
/// a standard normal nodal covariate, and a standard normal dyadic covariate.
#[derive(Debug, Clone)]
pub struct SimCovariates {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x3: DVector<f64>,
    pub design: DMatrix<f64>,
    pub names: Vec<String>,
}

pub fn gen_sim_covariates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SimCovariates> {
    let idx = RelationIndex::new(n)?;
    let x1: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<f64>() < 0.5)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let x3 = DVector::from_fn(idx.len(), |_, _| rng.sample(StandardNormal));
    let (design, names) = netdata::sim_design(&x1, &x2, &x3)?;
    Ok(SimCovariates { x1, x2, x3, design, names })
}

/// Coefficients used by the benchmark studies.
pub fn study_beta() -> Vec<f64> {
    vec![-0.5, 0.5, 0.5, 0.5]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Px,
    Eigen,
}

impl Generator {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::Px => "px",
            Generator::Eigen => "eigen",
        }
    }
}

impl FromStr for Generator {
    type Err = PxError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "px" => Ok(Generator::Px),
            "eigen" => Ok(Generator::Eigen),
            other => Err(PxError::Domain(format!("unknown generator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Bcem,
    Probit0,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Bcem => "bcem",
            Estimator::Probit0 => "probit0",
        }
    }
}

impl FromStr for Estimator {
    type Err = PxError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bcem" => Ok(Estimator::Bcem),
            "probit0" => Ok(Estimator::Probit0),
            other => Err(PxError::Domain(format!("unknown estimator {other:?}"))),
        }
    }
}

/// Configuration for a mean-squared-error study over sample sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub generator: Generator,
    pub n_grid: Vec<usize>,
    /// Design matrices drawn per sample size.
    pub designs: usize,
    /// Error replicates per design.
    pub reps: usize,
    /// Latent correlation for the exchangeable-probit generator.
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub eigen: Option<EigenGenConfig>,
    #[serde(default = "study_beta")]
    pub beta: Vec<f64>,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_rho() -> f64 {
    0.25
}

fn default_threads() -> usize {
    1
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            generator: Generator::Px,
            n_grid: vec![20, 40, 80],
            designs: 5,
            reps: 20,
            rho: 0.25,
            eigen: None,
            beta: study_beta(),
            estimators: vec![Estimator::Bcem, Estimator::Probit0],
            seed: 0,
            threads: 1,
        }
    }
}

/// One aggregated study cell: error moments of one coefficient for one
/// estimator at one (sample size, design) combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyCell {
    pub estimator: String,
    pub generator: String,
    pub n: usize,
    pub coef: String,
    pub design: usize,
    pub mse: f64,
    pub bias2: f64,
    pub variance: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimStudyResult {
    pub cells: Vec<StudyCell>,
}

impl SimStudyResult {
    /// Median across designs of the per-design MSE.
    pub fn median_mse(&self, estimator: Estimator, n: usize, coef: &str) -> Option<f64> {
        let mut vals: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| {
                c.estimator == estimator.name() && c.n == n && c.coef == coef && c.reps > 0
            })
            .map(|c| c.mse)
            .collect();
        if vals.is_empty() {
            return None;
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = vals.len();
        Some(if k % 2 == 1 { vals[k / 2] } else { 0.5 * (vals[k / 2 - 1] + vals[k / 2]) })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,generator,n,coef,design,mse,bias2,var,reps\n");
        for c in &self.cells {
            let fmt = |v: f64| if v.is_nan() { "NA".to_string() } else { format!("{v}") };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.estimator,
                c.generator,
                c.n,
                c.coef,
                c.design,
                fmt(c.mse),
                fmt(c.bias2),
                fmt(c.variance),
                c.reps
            ));
        }
        out
    }
}

struct RepOutcome {
    n_idx: usize,
    design: usize,
    bcem: Option<(Vec<f64>, f64)>,
    probit: Option<Vec<f64>>,
}

/// Run the study: for each sample size draw `designs` design matrices, each
/// with `reps` error replicates; fit the requested estimators; aggregate MSE,
/// squared bias and variance per coefficient (and per the latent correlation
/// for the exchangeable generator).
pub fn run_mse_study(config: &StudyConfig) -> Result<SimStudyResult> {
    if config.designs == 0 || config.reps == 0 || config.n_grid.is_empty() {
        return Err(PxError::Domain("study needs designs, reps and a sample-size grid".into()));
    }
    let beta = DVector::from_column_slice(&config.beta);
    let want_bcem = config.estimators.contains(&Estimator::Bcem);
    let want_probit = config.estimators.contains(&Estimator::Probit0);

    // Job list over (n index, design, rep); covariates are re-derived inside
    // each job from counter seeds so jobs are self-contained.
    let jobs: Vec<(usize, usize, usize)> = config
        .n_grid
        .iter()
        .enumerate()
        .flat_map(|(ni, _)| {
            (0..config.designs).flat_map(move |d| (0..config.reps).map(move |r| (ni, d, r)))
        })
        .collect();

    let run_job = |&(ni, d, r): &(usize, usize, usize)| -> Result<RepOutcome> {
        let n = config.n_grid[ni];
        let mut design_rng =
            ChaCha12Rng::seed_from_u64(mix_seed(config.seed, &[1, ni as u64, d as u64]));
        let covs = gen_sim_covariates(n, &mut design_rng)?;
        let mut err_rng = ChaCha12Rng::seed_from_u64(mix_seed(
            config.seed,
            &[2, ni as u64, d as u64, r as u64],
        ));
        let y = match config.generator {
            Generator::Px => gen_px(&covs.design, &beta, config.rho, n, &mut err_rng)?,
            Generator::Eigen => {
                let eigen_cfg = config.eigen.clone().unwrap_or_default();
                gen_eigen(&covs.design, &beta, &eigen_cfg, n, &mut err_rng)?
            }
        };
        let data = NetworkData::new(
            n,
            y,
            vec![true; covs.design.nrows()],
            covs.design.clone(),
            covs.names.clone(),
        )?;
        let bcem_out = if want_bcem {
            let mut fit_cfg = BcemConfig::default();
            fit_cfg.seed = mix_seed(config.seed, &[3, ni as u64, d as u64, r as u64]);
            bcem::fit(&data, &fit_cfg).ok().map(|f| (f.beta, f.rho))
        } else {
            None
        };
        let probit_out = if want_probit {
            probit::fit_independent(&data.x, &data.y, &data.observed)
                .ok()
                .map(|f| f.beta.iter().copied().collect())
        } else {
            None
        };
        Ok(RepOutcome { n_idx: ni, design: d, bcem: bcem_out, probit: probit_out })
    };

    let outcomes: Vec<Result<RepOutcome>> = if config.threads <= 1 {
        jobs.iter().map(run_job).collect()
    } else {
        let mut slots: Vec<Option<Result<RepOutcome>>> = (0..jobs.len()).map(|_| None).collect();
        let chunk = jobs.len().div_ceil(config.threads);
        std::thread::scope(|scope| {
            let mut rest = slots.as_mut_slice();
            let mut offset = 0;
            let mut handles = Vec::new();
            while !rest.is_empty() {
                let take = chunk.min(rest.len());
                let (head, tail) = rest.split_at_mut(take);
                let job_slice = &jobs[offset..offset + take];
                handles.push(scope.spawn(move || {
                    for (slot, job) in head.iter_mut().zip(job_slice) {
                        *slot = Some(run_job(job));
                    }
                }));
                rest = tail;
                offset += take;
            }
        });
        slots.into_iter().map(|s| s.expect("all jobs ran")).collect()
    };

    // Aggregate per (estimator, n, design, coefficient).
    let coef_names: Vec<String> = (0..config.beta.len()).map(|c| format!("beta{c}")).collect();
    let mut cells = Vec::new();
    for (ni, &n) in config.n_grid.iter().enumerate() {
        for d in 0..config.designs {
            let mut bcem_errs: Vec<Vec<f64>> = vec![Vec::new(); config.beta.len() + 1];
            let mut probit_errs: Vec<Vec<f64>> = vec![Vec::new(); config.beta.len()];
            for outcome in &outcomes {
                let outcome = outcome.as_ref().map_err(|e| PxError::Numeric(e.to_string()))?;
                if outcome.n_idx != ni || outcome.design != d {
                    continue;
                }
                if let Some((b, rho)) = &outcome.bcem {
                    for c in 0..config.beta.len() {
                        bcem_errs[c].push(b[c] - config.beta[c]);
                    }
                    if config.generator == Generator::Px {
                        bcem_errs[config.beta.len()].push(rho - config.rho);
                    }
                }
                if let Some(b) = &outcome.probit {
                    for c in 0..config.beta.len() {
                        probit_errs[c].push(b[c] - config.beta[c]);
                    }
                }
            }
            let moments = |errs: &[f64]| -> (f64, f64, f64, usize) {
                let k = errs.len();
                if k == 0 {
                    return (f64::NAN, f64::NAN, f64::NAN, 0);
                }
                let kf = k as f64;
                let mean = errs.iter().sum::<f64>() / kf;
                let mse = errs.iter().map(|e| e * e).sum::<f64>() / kf;
                let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / kf;
                (mse, mean * mean, var, k)
            };
            if want_bcem {
                for c in 0..config.beta.len() {
                    let (mse, bias2, variance, reps) = moments(&bcem_errs[c]);
                    cells.push(StudyCell {
                        estimator: Estimator::Bcem.name().into(),
                        generator: config.generator.name().into(),
                        n,
                        coef: coef_names[c].clone(),
                        design: d,
                        mse,
                        bias2,
                        variance,
                        reps,
                    });
                }
                if config.generator == Generator::Px {
                    let (mse, bias2, variance, reps) = moments(&bcem_errs[config.beta.len()]);
                    cells.push(StudyCell {
                        estimator: Estimator::Bcem.name().into(),
                        generator: config.generator.name().into(),
                        n,
                        coef: "rho".into(),
                        design: d,
                        mse,
                        bias2,
                        variance,
                        reps,
                    });
                }
            }
            if want_probit {
                for c in 0..config.beta.len() {
                    let (mse, bias2, variance, reps) = moments(&probit_errs[c]);
                    cells.push(StudyCell {
                        estimator: Estimator::Probit0.name().into(),
                        generator: config.generator.name().into(),
                        n,
                        coef: coef_names[c].clone(),
                        design: d,
                        mse,
                        bias2,
                        variance,
                        reps,
                    });
                }
            }
        }
    }
    Ok(SimStudyResult { cells })
}
