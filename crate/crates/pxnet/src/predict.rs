//! Marginal prediction of held-out relations.
//!
//! The target probability `P(y_jk = 1 | y_-jk)` is approximated by imputing
//! every target with the mode of the observed responses, solving one
//! conditional-mean system for the whole batch, and plugging the conditional
//! law of a single latent coordinate into the normal CDF:
//! `Phi((m_jk + x_jk' beta) / sigma_n)`, where `m_jk = (B w)_jk` is the
//! expected conditional mean of `eps_jk` given the rest and
//! `sigma_n^2 = 1/p1` its conditional variance. `B` has a zero diagonal, so
//! the imputed target's own truncation never feeds back into its prediction;
//! at `rho = 0` the plug-in collapses to the marginal `Phi(x' beta)` exactly.

use crate::bcem::{beta_estep, BcemConfig, PxFit};
use crate::error::{PxError, Result};
use crate::excov::{self, ExchCovParams};
use crate::netdata::{self, NetworkData};
use crate::normal::std_cdf;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Prediction for one held-out relation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionResult {
    /// Position in the vectorized upper triangle.
    pub index: usize,
    pub i: usize,
    pub j: usize,
    /// `P(y = 1 | rest)` under the fitted model.
    pub probability: f64,
    /// The mode value imputed before the conditional-mean solve.
    pub imputed_value: f64,
}

/// Predict the marked relations marginally. Targets are treated as missing;
/// any other missing relations are imputed the same way. The mode of the
/// observed responses breaks ties toward 1.
pub fn predict_marginal(
    fit: &PxFit,
    data: &NetworkData,
    targets: &[usize],
) -> Result<Vec<PredictionResult>> {
    let idx = data.index();
    let m = idx.len();
    for &d in targets {
        if d >= m {
            return Err(PxError::Domain(format!("target relation {d} out of range")));
        }
    }
    let beta = DVector::from_column_slice(&fit.beta);
    if beta.len() != data.x.ncols() {
        return Err(PxError::Domain(format!(
            "fit has {} coefficients, design has {} columns",
            beta.len(),
            data.x.ncols()
        )));
    }
    let mut x = data.x.clone();
    netdata::impute_missing_design(&mut x)?;
    let eta = &x * &beta;
    for &d in targets {
        if !eta[d].is_finite() {
            return Err(PxError::Domain(format!(
                "target relation {d} has non-finite covariates after imputation"
            )));
        }
    }

    let target_set: Vec<bool> = {
        let mut set = vec![false; m];
        for &d in targets {
            set[d] = true;
        }
        set
    };

    // Mode of the observed responses, excluding targets; ties impute 1.
    let (mut ones, mut count) = (0usize, 0usize);
    for d in 0..m {
        if data.observed[d] && !target_set[d] {
            count += 1;
            ones += (data.y[d] == 1.0) as usize;
        }
    }
    if count == 0 {
        return Err(PxError::Degenerate("no observed relations to take a mode from".into()));
    }
    let mode = f64::from(2 * ones >= count);

    let mut y_work = data.y.clone();
    for d in 0..m {
        if target_set[d] || !data.observed[d] {
            y_work[d] = mode;
        }
    }

    let probability_of = |d: usize, shift: f64, sigma: f64| -> f64 {
        std_cdf((shift + eta[d]) / sigma)
    };

    let mut out = Vec::with_capacity(targets.len());
    if fit.rho < 1e-10 {
        for &d in targets {
            let (i, j) = idx.index_to_pair(d);
            out.push(PredictionResult {
                index: d,
                i,
                j,
                probability: probability_of(d, 0.0, 1.0),
                imputed_value: mode,
            });
        }
        return Ok(out);
    }

    let config = BcemConfig::default();
    let estep = beta_estep(&beta, fit.rho, &x, &y_work, data.n, &config)?;
    let p = excov::invert_params(&ExchCovParams::from_rho(fit.rho)?, data.n)?;
    let sigma2 = 1.0 / p.diag;
    let sigma = sigma2.sqrt();
    // Conditional-mean shift of each coordinate given all others: (B w)_d.
    let b_w = excov::s_apply([0.0, -sigma2 * p.shared, -sigma2 * p.disjoint], &estep.w, data.n)?;

    for &d in targets {
        let (i, j) = idx.index_to_pair(d);
        out.push(PredictionResult {
            index: d,
            i,
            j,
            probability: probability_of(d, b_w[d], sigma),
            imputed_value: mode,
        });
    }
    Ok(out)
}

/// Write predictions as CSV (`i,j,p_hat`).
pub fn write_predictions_csv(path: &std::path::Path, preds: &[PredictionResult]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["i", "j", "p_hat"])?;
    for p in preds {
        writer.write_record(&[p.i.to_string(), p.j.to_string(), format!("{}", p.probability)])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relindex::RelationIndex;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn fit_with(beta: &[f64], rho: f64) -> PxFit {
        PxFit {
            beta: beta.to_vec(),
            rho,
            converged: true,
            outer_iterations: 1,
            trace: vec![],
            seed: 0,
            runtime_seconds: 0.0,
        }
    }

    fn synthetic_data(n: usize, rho: f64, seed: u64) -> NetworkData {
        let covs =
            crate::simulate::gen_sim_covariates(n, &mut ChaCha12Rng::seed_from_u64(seed)).unwrap();
        let beta = DVector::from_column_slice(&[-0.5, 0.5, 0.5, 0.5]);
        let y = crate::simulate::gen_px(
            &covs.design,
            &beta,
            rho,
            n,
            &mut ChaCha12Rng::seed_from_u64(seed + 1),
        )
        .unwrap();
        NetworkData::new(n, y, vec![true; covs.design.nrows()], covs.design, covs.names).unwrap()
    }

    #[test]
    fn independence_reduces_to_marginal_probit() {
        let data = synthetic_data(8, 0.0, 5);
        let fit = fit_with(&[-0.5, 0.5, 0.5, 0.5], 0.0);
        let beta = DVector::from_column_slice(&fit.beta);
        let eta = &data.x * &beta;
        let preds = predict_marginal(&fit, &data, &[0, 3, 10]).unwrap();
        for p in preds {
            assert_abs_diff_eq!(p.probability, std_cdf(eta[p.index]), epsilon = 1e-12);
        }
    }

    #[test]
    fn mode_imputation_and_tie_break() {
        let n = 5;
        let idx = RelationIndex::new(n).unwrap();
        let m = idx.len();
        // 4 ones / 6 zeros among non-targets: mode 0.
        let mut y = DVector::zeros(m);
        for d in 0..4 {
            y[d] = 1.0;
        }
        let x = DMatrix::from_element(m, 1, 1.0);
        let data =
            NetworkData::new(n, y, vec![true; m], x, vec!["intercept".into()]).unwrap();
        let fit = fit_with(&[0.0], 0.2);
        let preds = predict_marginal(&fit, &data, &[8]).unwrap();
        assert_eq!(preds[0].imputed_value, 0.0);

        // Exact tie among non-targets imputes 1.
        let mut y = DVector::zeros(m);
        for d in 0..5 {
            y[d] = 1.0;
        }
        // Hold out one of the ones: 4 ones / 4 zeros... adjust: hold out d=9
        // (a zero) leaving 5 ones / 4 zeros; instead hold out a one, d=0,
        // leaving 4/5. Build an exact tie: 5 ones of 10, target one of the
        // ones -> 4 ones vs 5 zeros; so use 6 ones and target one of them.
        let mut y = DVector::zeros(m);
        for d in 0..6 {
            y[d] = 1.0;
        }
        let x = DMatrix::from_element(m, 1, 1.0);
        let data =
            NetworkData::new(n, y, vec![true; m], x, vec!["intercept".into()]).unwrap();
        let preds = predict_marginal(&fit, &data, &[0]).unwrap();
        // 5 ones vs 4 zeros remain -> mode 1; now make it exact: target two.
        assert_eq!(preds[0].imputed_value, 1.0);
        let preds = predict_marginal(&fit, &data, &[0, 1]).unwrap();
        // 4 ones vs 4 zeros: tie breaks to 1.
        assert_eq!(preds[0].imputed_value, 1.0);
    }

    #[test]
    fn symmetric_inputs_get_equal_predictions() {
        // All-ones observed responses with exchangeable design rows: every
        // target receives the same probability.
        let n = 6;
        let idx = RelationIndex::new(n).unwrap();
        let m = idx.len();
        let y = DVector::from_element(m, 1.0);
        let x = DMatrix::from_element(m, 1, 1.0);
        let data =
            NetworkData::new(n, y, vec![true; m], x, vec!["intercept".into()]).unwrap();
        let fit = fit_with(&[0.3], 0.25);
        let preds = predict_marginal(&fit, &data, &[0, 7, 14]).unwrap();
        for p in &preds {
            assert_abs_diff_eq!(p.probability, preds[0].probability, epsilon = 1e-10);
        }
        assert!(preds[0].probability > std_cdf(0.3));
    }

    #[test]
    fn monotone_in_linear_predictor() {
        // Holding the solved conditional means fixed, the probability rises
        // with the target's linear predictor; realized here by comparing two
        // targets identical except for their dyadic covariate.
        let n = 8;
        let mut data = synthetic_data(n, 0.2, 9);
        let fit = fit_with(&[-0.5, 0.5, 0.5, 0.5], 0.2);
        // Make targets 0 and 1 share nodal rows but differ in the dyadic
        // column.
        for c in 0..4 {
            let v = data.x[(0, c)];
            data.x[(1, c)] = v;
        }
        data.x[(1, 3)] = data.x[(0, 3)] + 2.0;
        let preds = predict_marginal(&fit, &data, &[0, 1]).unwrap();
        // Not exactly equal conditional means (different neighborhoods), but
        // the large predictor gap dominates.
        assert!(preds[1].probability > preds[0].probability);
    }

    #[test]
    fn probabilities_are_valid_and_deterministic() {
        let data = synthetic_data(10, 0.3, 21);
        let fit = fit_with(&[-0.5, 0.5, 0.5, 0.5], 0.3);
        let targets: Vec<usize> = (0..10).collect();
        let a = predict_marginal(&fit, &data, &targets).unwrap();
        let b = predict_marginal(&fit, &data, &targets).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            assert!(pa.probability > 0.0 && pa.probability < 1.0);
            assert_eq!(pa.probability.to_bits(), pb.probability.to_bits());
        }
    }

    #[test]
    fn csv_output_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.csv");
        let preds = vec![PredictionResult {
            index: 0,
            i: 0,
            j: 1,
            probability: 0.25,
            imputed_value: 0.0,
        }];
        write_predictions_csv(&path, &preds).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "i,j,p_hat\n0,1,0.25\n");
    }
}
