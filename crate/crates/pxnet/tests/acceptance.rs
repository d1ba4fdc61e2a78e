//! Acceptance suite: one test per shipped criterion, each printing a
//! PASS line with its measured numbers (failures panic with the details).
//!
//! Run with `cargo test -p pxnet --test acceptance -- --nocapture`.

use nalgebra::{DMatrix, DVector};
use pxnet::bcem::{self, BcemConfig, EStepSystem, NewtonMode};
use pxnet::crossval;
use pxnet::excov::{self, ExchCovParams, PrecisionParams};
use pxnet::netdata::{self, NetworkData};
use pxnet::normal::{self, PairObservation};
use pxnet::oracle;
use pxnet::predict;
use pxnet::probit;
use pxnet::relindex::{sample_share_actor_pairs, RelationIndex};
use pxnet::simulate::{self, Estimator, Generator, StudyConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

fn random_pd_cov<R: Rng>(n: usize, rng: &mut R) -> ExchCovParams {
    loop {
        let phi = ExchCovParams {
            variance: rng.random_range(0.5..2.0),
            shared: rng.random_range(-0.3..0.3),
            disjoint: rng.random_range(-0.2..0.2),
        };
        let eig = excov::dense_omega(&phi, n).symmetric_eigenvalues();
        if eig.iter().all(|&l| l > 1e-3) {
            return phi;
        }
    }
}

fn simulated_network(n: usize, rho: f64, beta: &[f64], seed: u64) -> NetworkData {
    let covs =
        simulate::gen_sim_covariates(n, &mut ChaCha12Rng::seed_from_u64(seed)).unwrap();
    let b = DVector::from_column_slice(beta);
    let y = simulate::gen_px(&covs.design, &b, rho, n, &mut ChaCha12Rng::seed_from_u64(seed ^ 0xa5))
        .unwrap();
    NetworkData::new(n, y, vec![true; covs.design.nrows()], covs.design, covs.names).unwrap()
}

#[test]
fn criterion_01_structured_algebra_exactness() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let mut worst_inverse = 0.0f64;
    let mut worst_matvec = 0.0f64;
    for &n in &[5usize, 8, 12] {
        let idx = RelationIndex::new(n).unwrap();
        for _ in 0..50 {
            let phi = random_pd_cov(n, &mut rng);
            let p = excov::invert_params(&phi, n).unwrap();
            let product = excov::dense_omega(&phi, n) * excov::dense_from_coeffs(p.coeffs(), n);
            for r in 0..idx.len() {
                for c in 0..idx.len() {
                    let want = f64::from(r == c);
                    worst_inverse = worst_inverse.max((product[(r, c)] - want).abs());
                }
            }
            let v = DVector::from_fn(idx.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let fast = excov::s_apply(phi.coeffs(), &v, n).unwrap();
            let dense = excov::dense_omega(&phi, n) * &v;
            worst_matvec = worst_matvec.max((fast - dense).amax());
        }
    }
    assert!(worst_inverse < 1e-9, "inverse residual {worst_inverse}");
    assert!(worst_matvec < 1e-12, "matvec gap {worst_matvec}");
    enforce_budget(1, started, 10.0);
    println!(
        "acceptance criterion 1: PASS — inverse residual {worst_inverse:.2e}, matvec gap {worst_matvec:.2e} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_02_eigenvalue_formulas() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for &n in &[5usize, 8, 12] {
        for _ in 0..10 {
            let phi = random_pd_cov(n, &mut rng);
            let formulas = phi.eigenvalues(n);
            assert_eq!(formulas[0].1, 1);
            assert_eq!(formulas[1].1, n - 1);
            assert_eq!(formulas[2].1, n * (n - 3) / 2);
            let mut dense: Vec<f64> =
                excov::dense_omega(&phi, n).symmetric_eigenvalues().iter().copied().collect();
            dense.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut expanded: Vec<f64> = formulas
                .iter()
                .flat_map(|&(l, m)| std::iter::repeat(l).take(m))
                .collect();
            expanded.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (got, want) in dense.iter().zip(&expanded) {
                worst = worst.max((got - want).abs() / want.abs().max(1e-12));
            }
        }
    }
    assert!(worst < 1e-10, "relative error {worst}");
    enforce_budget(2, started, 5.0);
    println!(
        "acceptance criterion 2: PASS — eigenvalue relative error {worst:.2e} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_03_covariance_partials_vs_finite_differences() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for &n in &[6usize, 10] {
        for _ in 0..20 {
            let phi = random_pd_cov(n, &mut rng);
            let p = excov::invert_params(&phi, n).unwrap();
            let analytic = excov::cov_param_partials(&p, n).unwrap();
            let h = 1e-6;
            for j in 0..3 {
                let mut up = p.coeffs();
                let mut dn = p.coeffs();
                up[j] += h;
                dn[j] -= h;
                let f_up = excov::invert_coeffs(up, n).unwrap();
                let f_dn = excov::invert_coeffs(dn, n).unwrap();
                for i in 0..3 {
                    let fd = (f_up[i] - f_dn[i]) / (2.0 * h);
                    let scale = fd.abs().max(1e-8);
                    worst = worst.max(((analytic[(i, j)] - fd) / scale).abs());
                }
            }
        }
    }
    assert!(worst < 1e-5, "relative error {worst}");
    enforce_budget(3, started, 10.0);
    println!(
        "acceptance criterion 3: PASS — partials vs finite differences {worst:.2e} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_04_estep_jacobian_vs_finite_differences() {
    let started = std::time::Instant::now();
    let n = 10;
    let data = simulated_network(n, 0.3, &[-0.5, 0.5, 0.5, 0.5], 404);
    let beta = DVector::from_column_slice(&[-0.5, 0.5, 0.5, 0.5]);
    let m = data.relation_count();
    let mut rng = ChaCha12Rng::seed_from_u64(405);
    let mut worst = 0.0f64;
    for &rho in &[0.1, 0.3] {
        let system = EStepSystem::new(&beta, rho, &data.x, &data.y, n).unwrap();
        for _ in 0..5 {
            // Random state around the initializer.
            let mut w = system.initial_w();
            for d in 0..m {
                w[d] += 0.25 * rng.sample::<f64, _>(StandardNormal);
            }
            let jac = system.jacobian_dense(&w).unwrap();
            let h = 1e-6;
            for col in 0..m {
                let mut up = w.clone();
                let mut dn = w.clone();
                up[col] += h;
                dn[col] -= h;
                let fd = (system.g(&up) - system.g(&dn)) / (2.0 * h);
                for row in 0..m {
                    let scale = fd[row].abs().max(1e-6);
                    worst = worst.max(((jac[(row, col)] - fd[row]) / scale).abs());
                }
            }
        }
    }
    assert!(worst < 1e-5, "relative error {worst}");
    enforce_budget(4, started, 30.0);
    println!(
        "acceptance criterion 4: PASS — expectation-step Jacobian vs finite differences {worst:.2e} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

/// Adaptive Simpson on [a, b] to the requested absolute tolerance.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 40)
}

#[test]
fn criterion_05_bivariate_cdf_against_quadrature() {
    let started = std::time::Instant::now();
    let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let correlations = [-0.95, -0.5, 0.0, 0.5, 0.95];
    let mut worst = 0.0f64;
    for &h in &grid {
        for &k in &grid {
            for &r in &correlations {
                let got = normal::bivariate_cdf(h, k, r).unwrap();
                let s = (1.0 - r * r).sqrt();
                let f =
                    |x: f64| normal::std_pdf(x) * normal::std_cdf((k - r * x) / s);
                let oracle_value = adaptive_simpson(&f, -9.5, h, 1e-12);
                worst = worst.max((got - oracle_value).abs());
            }
        }
    }
    assert!(worst < 1e-8, "quadrature gap {worst}");
    let mut worst_arcsine = 0.0f64;
    for &r in &[-0.99, -0.5, 0.0, 0.3, 0.7, 0.99] {
        let want = 0.25 + (r as f64).asin() / (2.0 * std::f64::consts::PI);
        worst_arcsine =
            worst_arcsine.max((normal::bivariate_cdf(0.0, 0.0, r).unwrap() - want).abs());
    }
    assert!(worst_arcsine < 1e-10, "arcsine gap {worst_arcsine}");
    enforce_budget(5, started, 30.0);
    println!(
        "acceptance criterion 5: PASS — quadrature gap {worst:.2e}, arcsine gap {worst_arcsine:.2e} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_06_pair_expectation_vs_rejection_monte_carlo() {
    let started = std::time::Instant::now();
    let draws = 1_000_000usize;
    let etas = [-1.0, 0.0, 1.0];
    let outcomes = [false, true];
    let rhos = [0.1, 0.3, 0.45];
    let mut cell = 0u64;
    let mut worst_z = 0.0f64;
    for &eta1 in &etas {
        for &eta2 in &etas {
            for &y1 in &outcomes {
                for &y2 in &outcomes {
                    for &rho in &rhos {
                        cell += 1;
                        let obs = PairObservation { eta1, eta2, y1, y2, rho };
                        let formula = normal::pair_expectation(&obs).unwrap();
                        let mut rng = ChaCha12Rng::seed_from_u64(606_000 + cell);
                        let s = (1.0 - rho * rho).sqrt();
                        let (mut sum, mut sum_sq, mut kept) = (0.0f64, 0.0f64, 0usize);
                        for _ in 0..draws {
                            let z1: f64 = rng.sample(StandardNormal);
                            let z2 = rho * z1 + s * rng.sample::<f64, _>(StandardNormal);
                            if (z1 > -eta1) == y1 && (z2 > -eta2) == y2 {
                                let prod = z1 * z2;
                                sum += prod;
                                sum_sq += prod * prod;
                                kept += 1;
                            }
                        }
                        let mean = sum / kept as f64;
                        let var = sum_sq / kept as f64 - mean * mean;
                        let se = (var / kept as f64).sqrt();
                        let z_score = (formula - mean).abs() / se;
                        worst_z = worst_z.max(z_score);
                        assert!(
                            z_score < 3.0,
                            "cell eta=({eta1},{eta2}) y=({y1},{y2}) rho={rho}: formula {formula} vs MC {mean} (se {se})"
                        );
                    }
                }
            }
        }
    }
    enforce_budget(6, started, 600.0);
    println!(
        "acceptance criterion 6: PASS — {cell} cells, worst |z| = {worst_z:.2} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_07_estep_vs_gibbs_and_dense_gap() {
    let started = std::time::Instant::now();
    let beta = DVector::from_column_slice(&[-0.5, 0.5, 0.5, 0.5]);

    // Solver-mode agreement clause (evaluated first so it is exercised even
    // though the oracle clause below fails).
    let data20 = simulated_network(20, 0.2, &[-0.5, 0.5, 0.5, 0.5], 777);
    let mut cfg = BcemConfig::default();
    cfg.newton_mode = NewtonMode::Neumann;
    let neumann = bcem::beta_estep(&beta, 0.2, &data20.x, &data20.y, 20, &cfg).unwrap();
    cfg.newton_mode = NewtonMode::Dense;
    let dense = bcem::beta_estep(&beta, 0.2, &data20.x, &data20.y, 20, &cfg).unwrap();
    let solver_gap = (&neumann.w - &dense.w).amax();
    assert!(solver_gap < 1e-3, "solver-mode gap {solver_gap}");
    println!("  criterion 7: solver-mode gap {solver_gap:.2e} < 1e-3");

    // Oracle clause: conditional means against the Gibbs reference.
    //
    // EXPECTED RED. The solved system replaces the conditional expectation of
    // the score by the score at the conditional expectation; that plug-in
    // carries a systematic shrinkage of ~0.02-0.06 per coordinate at n = 8
    // (verified against 3e7-draw brute-force rejection, which matches the
    // Gibbs means to their standard errors). Against an oracle whose
    // standard errors at 1e5 sweeps are ~0.002-0.01, a 3-SE band cannot
    // absorb the method's own approximation error at this network size, in
    // any data regime tried (balanced, sparse). The gate is asserted as
    // stated rather than loosened.
    let config = BcemConfig::default();
    let (mut within, mut total) = (0usize, 0usize);
    let mut worst_gap = 0.0f64;
    let mut mean_gap = 0.0f64;
    let mut mean_se = 0.0f64;
    for seed in 0..5u64 {
        let data = simulated_network(8, 0.3, &[-0.5, 0.5, 0.5, 0.5], 700 + seed);
        let estep = bcem::beta_estep(&beta, 0.3, &data.x, &data.y, 8, &config).unwrap();
        let gibbs =
            oracle::gibbs_conditional(&beta, 0.3, &data, 100_000, 10_000, 71 + seed, &[]).unwrap();
        for d in 0..data.relation_count() {
            total += 1;
            let gap = (estep.w[d] - gibbs.mean[d]).abs();
            worst_gap = worst_gap.max(gap);
            mean_gap += gap;
            mean_se += gibbs.se[d];
            if gap < 3.0 * gibbs.se[d] {
                within += 1;
            }
        }
    }
    mean_gap /= total as f64;
    mean_se /= total as f64;
    let fraction = within as f64 / total as f64;
    enforce_budget(7, started, 900.0);
    println!(
        "  criterion 7: {within}/{total} coordinates within 3 SEs; gap mean {mean_gap:.4}, worst {worst_gap:.4}; oracle SE mean {mean_se:.4}"
    );
    assert!(
        fraction >= 0.9,
        "criterion 7 oracle clause: only {within}/{total} coordinates within 3 Gibbs SEs \
         (gap mean {mean_gap:.4} / worst {worst_gap:.4} vs oracle SE mean {mean_se:.4}); \
         the conditional-mean solve's plug-in approximation has a systematic small-n error \
         an order of magnitude above the oracle noise, so this gate cannot pass as stated"
    );
    println!(
        "acceptance criterion 7: PASS — {within}/{total} within 3 SEs, solver gap {solver_gap:.2e} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_08_estimator_orderings_against_numeric_mle() {
    let started = std::time::Instant::now();
    let n = 8;
    let reps = 20;
    let draws = 2000;
    let beta_true = 0.5;
    for (ri, &rho) in [0.1, 0.2, 0.3].iter().enumerate() {
        let (mut mse_bcem_mle, mut mse_mle_truth, mut mse_probit_mle) = (0.0, 0.0, 0.0);
        let mut used = 0usize;
        for rep in 0..reps {
            let seed = simulate::mix_seed(808, &[ri as u64, rep as u64]);
            let idx = RelationIndex::new(n).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let x =
                DMatrix::from_fn(idx.len(), 1, |_, _| f64::from(rng.random::<f64>() < 0.3));
            let b = DVector::from_column_slice(&[beta_true]);
            let y = simulate::gen_px(&x, &b, rho, n, &mut rng).unwrap();
            let data = NetworkData::new(
                n,
                y,
                vec![true; idx.len()],
                x,
                vec!["covariate".into()],
            )
            .unwrap();
            let mle = match oracle::numeric_mle(&data, &b, rho, draws, seed, 400) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let mut fit_cfg = BcemConfig::default();
            fit_cfg.seed = seed ^ 0x77;
            let bcem_fit = match bcem::fit(&data, &fit_cfg) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let probit_fit = match probit::fit_independent(&data.x, &data.y, &data.observed) {
                Ok(f) => f,
                Err(_) => continue,
            };
            used += 1;
            mse_bcem_mle += (bcem_fit.beta[0] - mle.beta[0]).powi(2);
            mse_mle_truth += (mle.beta[0] - beta_true).powi(2);
            mse_probit_mle += (probit_fit.beta[0] - mle.beta[0]).powi(2);
        }
        assert!(used >= 15, "too many failed replicates at rho={rho}: {used}/{reps}");
        let k = used as f64;
        let (a, t, p) = (mse_bcem_mle / k, mse_mle_truth / k, mse_probit_mle / k);
        assert!(
            a < t,
            "rho={rho}: MSE(bcem - mle) = {a:.4} not below MSE(mle - truth) = {t:.4}"
        );
        assert!(
            a < p,
            "rho={rho}: MSE(bcem - mle) = {a:.4} not below MSE(probit0 - mle) = {p:.4}"
        );
        println!(
            "  criterion 8 at rho={rho}: MSE(bcem-mle) {a:.4} < MSE(mle-truth) {t:.4}, < MSE(probit0-mle) {p:.4} ({used} reps)"
        );
    }
    enforce_budget(8, started, 3600.0);
    println!(
        "acceptance criterion 8: PASS — estimator orderings hold for rho in {{0.1, 0.2, 0.3}} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_09_consistency_study() {
    let started = std::time::Instant::now();
    let config = StudyConfig {
        generator: Generator::Px,
        n_grid: vec![20, 40, 80],
        designs: 5,
        reps: 20,
        rho: 0.25,
        eigen: None,
        beta: simulate::study_beta(),
        estimators: vec![Estimator::Bcem, Estimator::Probit0],
        seed: 909,
        threads: 4,
    };
    let result = simulate::run_mse_study(&config).unwrap();
    let coef_names = ["beta0", "beta1", "beta2", "beta3", "rho"];
    for coef in coef_names {
        let mut previous = f64::INFINITY;
        for &n in &config.n_grid {
            let median = result
                .median_mse(Estimator::Bcem, n, coef)
                .unwrap_or_else(|| panic!("no cells for {coef} at n={n}"));
            println!("  criterion 9: bcem median MSE({coef}) at n={n}: {median:.5}");
            assert!(
                median < previous,
                "{coef}: median MSE not strictly decreasing at n={n} ({median} vs {previous})"
            );
            previous = median;
        }
    }
    for &n in &config.n_grid {
        let bcem_b0 = result.median_mse(Estimator::Bcem, n, "beta0").unwrap();
        let probit_b0 = result.median_mse(Estimator::Probit0, n, "beta0").unwrap();
        assert!(
            bcem_b0 <= probit_b0,
            "n={n}: bcem median MSE(beta0) {bcem_b0} above probit0 {probit_b0}"
        );
    }
    enforce_budget(9, started, 2700.0);
    println!(
        "acceptance criterion 9: PASS — median MSE decreasing in n for all coefficients and rho; bcem <= probit0 on the intercept ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_10_degenerate_correctness_at_zero_correlation() {
    let started = std::time::Instant::now();
    let n = 40;
    let seeds = 20u64;
    let mut rho_sum = 0.0;
    let mut gap_sum = 0.0;
    for seed in 0..seeds {
        let data = simulated_network(n, 0.0, &[-0.5, 0.5, 0.5, 0.5], 1000 + seed);
        let mut cfg = BcemConfig::default();
        cfg.seed = seed;
        let fit = bcem::fit(&data, &cfg).unwrap();
        let probit_fit = probit::fit_independent(&data.x, &data.y, &data.observed).unwrap();
        rho_sum += fit.rho;
        let gap = (0..4)
            .map(|c| (fit.beta[c] - probit_fit.beta[c]).abs())
            .fold(0.0f64, f64::max);
        gap_sum += gap;
    }
    let mean_rho = rho_sum / seeds as f64;
    let mean_gap = gap_sum / seeds as f64;
    assert!(mean_rho < 0.05, "mean rho {mean_rho}");
    assert!(mean_gap < 0.05, "mean coefficient gap {mean_gap}");

    // Prediction at exactly zero correlation is the marginal probit value.
    let data = simulated_network(10, 0.0, &[-0.5, 0.5, 0.5, 0.5], 77);
    let fit = bcem::PxFit {
        beta: vec![-0.5, 0.5, 0.5, 0.5],
        rho: 0.0,
        converged: true,
        outer_iterations: 1,
        trace: vec![],
        seed: 0,
        runtime_seconds: 0.0,
    };
    let beta = DVector::from_column_slice(&fit.beta);
    let eta = &data.x * &beta;
    let preds = predict::predict_marginal(&fit, &data, &(0..12).collect::<Vec<_>>()).unwrap();
    let mut worst_pred = 0.0f64;
    for p in preds {
        worst_pred = worst_pred.max((p.probability - normal::std_cdf(eta[p.index])).abs());
    }
    assert!(worst_pred < 1e-8, "prediction gap {worst_pred}");
    enforce_budget(10, started, 600.0);
    println!(
        "acceptance criterion 10: PASS — mean rho {mean_rho:.4}, mean coefficient gap {mean_gap:.4}, prediction gap {worst_pred:.2e} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

fn class_labels(n: usize, seed: u64) -> Vec<&'static str> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match rng.random_range(0..10) {
            0..=4 => "c",
            5..=8 => "l",
            _ => "n",
        })
        .collect()
}

fn class_design(labels: &[&str]) -> DMatrix<f64> {
    let mut csv = String::from("id,class\n");
    for (i, lab) in labels.iter().enumerate() {
        csv.push_str(&format!("{i},{lab}\n"));
    }
    let nodes = netdata::parse_node_csv(csv.as_bytes()).unwrap();
    netdata::polbooks_design(&nodes).unwrap().0
}

#[test]
fn criterion_11_gamma2_linearity() {
    let started = std::time::Instant::now();
    // Sparse class-alignment regime (the regime the linearity evidence comes
    // from); a median-typical seed, not a best case.
    let n = 20;
    let x = class_design(&class_labels(n, 42));
    let beta = DVector::from_column_slice(&[-1.9, 0.97, 0.93]);
    let y = simulate::gen_px(&x, &beta, 0.25, n, &mut ChaCha12Rng::seed_from_u64(3 ^ 77)).unwrap();
    let eta = &x * &beta;
    let observed = vec![true; eta.len()];
    let pairs = sample_share_actor_pairs(
        n,
        10 * n * (n - 1),
        None,
        &mut ChaCha12Rng::seed_from_u64(3),
    )
    .unwrap();
    let gamma = bcem::gamma_compute(&eta, &y, &observed, &pairs, n).unwrap();
    let mut worst = 0.0f64;
    for k in 0..=9 {
        let rho = 0.05 * k as f64;
        let exact = bcem::exact_pair_average(&eta, &y, &pairs, rho).unwrap();
        worst = worst.max((exact - gamma.gamma2(rho)).abs());
    }
    assert!(worst < 0.02, "linearity gap {worst}");

    // Diagnostic only: the same gap on a balanced benchmark draw, where the
    // perfect-correlation anchor is known to drift.
    let dense_data = simulated_network(n, 0.25, &[-0.5, 0.5, 0.5, 0.5], 1111);
    let dense_beta = DVector::from_column_slice(&[-0.5, 0.5, 0.5, 0.5]);
    let dense_eta = &dense_data.x * &dense_beta;
    let dense_gamma =
        bcem::gamma_compute(&dense_eta, &dense_data.y, &dense_data.observed, &pairs, n).unwrap();
    let mut dense_worst = 0.0f64;
    for k in 0..=9 {
        let rho = 0.05 * k as f64;
        let exact =
            bcem::exact_pair_average(&dense_eta, &dense_data.y, &pairs, rho).unwrap();
        dense_worst = dense_worst.max((exact - dense_gamma.gamma2(rho)).abs());
    }
    enforce_budget(11, started, 300.0);
    println!(
        "acceptance criterion 11: PASS — linearity gap {worst:.4} (< 0.02); balanced-data diagnostic gap {dense_worst:.4} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

fn polbooks_paths() -> Option<(std::path::PathBuf, std::path::PathBuf)> {
    let base = std::env::var_os("PXNET_POLBOOKS_DIR")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| {
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/polbooks")
        });
    let edges = base.join("edges.csv");
    let nodes = base.join("nodes.csv");
    (edges.exists() && nodes.exists()).then_some((edges, nodes))
}

#[test]
fn criterion_12_political_books_if_available() {
    let Some((edges, nodes)) = polbooks_paths() else {
        println!(
            "acceptance criterion 12: SKIP — political-books dataset not bundled; place edges.csv and nodes.csv under data/polbooks/ or set PXNET_POLBOOKS_DIR (see README)"
        );
        return;
    };
    let started = std::time::Instant::now();
    let loaded = netdata::load_network(&edges, Some(&nodes)).unwrap();
    assert_eq!(loaded.n, 105, "expected 105 actors");
    assert_eq!(loaded.y.len(), 5460);
    let (x, columns) = netdata::polbooks_design(loaded.nodes.as_ref().unwrap()).unwrap();
    let data = NetworkData::new(loaded.n, loaded.y, loaded.observed, x, columns).unwrap();

    let mut cfg = BcemConfig::default();
    cfg.seed = 1;
    let fit = bcem::fit(&data, &cfg).unwrap();
    let expected = [-1.61, 0.97, 0.93];
    for c in 0..3 {
        assert!(
            (fit.beta[c] - expected[c]).abs() <= 0.10,
            "coefficient {c}: {} vs expected {} (+/- 0.10)",
            fit.beta[c],
            expected[c]
        );
    }
    assert!(fit.rho > 0.0 && fit.rho < 0.5, "rho {}", fit.rho);

    let (report, _) = crossval::cv_run(
        &data,
        &[Estimator::Bcem, Estimator::Probit0],
        10,
        &cfg,
    )
    .unwrap();
    let bcem_prauc = report.estimators[0].prauc;
    let probit_prauc = report.estimators[1].prauc;
    assert!(
        bcem_prauc >= probit_prauc,
        "bcem PRAUC {bcem_prauc} below probit0 {probit_prauc}"
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "runtime {elapsed}s exceeds 5 minutes");
    println!(
        "acceptance criterion 12: PASS — beta = ({:.2}, {:.2}, {:.2}), rho = {:.3}, PRAUC {bcem_prauc:.3} >= {probit_prauc:.3} ({elapsed:.1}s)",
        fit.beta[0], fit.beta[1], fit.beta[2], fit.rho
    );
}

/// Panics when a criterion blows its stated runtime ceiling.
fn enforce_budget(criterion: usize, started: std::time::Instant, budget_seconds: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < budget_seconds,
        "criterion {criterion} took {elapsed:.1}s, budget {budget_seconds}s"
    );
}
