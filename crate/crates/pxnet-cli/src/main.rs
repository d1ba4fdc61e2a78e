//! `pxnet` — fit, predict, simulate and benchmark exchangeable-probit
//! network regressions from the command line.
//!
//! Every run writes a `manifest.json` (command echo, seed, crate version,
//! timestamp) next to its primary outputs. Identical command lines with the
//! same seed reproduce the primary outputs byte for byte, timing fields
//! aside.

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use pxnet::bcem::{self, BcemConfig, NewtonMode};
use pxnet::crossval;
use pxnet::error::PxError;
use pxnet::netdata::{self, NetworkData};
use pxnet::oracle;
use pxnet::predict;
use pxnet::probit;
use pxnet::relindex::RelationIndex;
use pxnet::simulate::{self, Estimator, Generator, StudyConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "pxnet", version, about = "Probit network regression with exchangeable latent correlation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate coefficients and the latent correlation.
    Fit(FitArgs),
    /// Score held-out relations with a fitted model.
    Predict(PredictArgs),
    /// Generate synthetic data sets or run a simulation study.
    Simulate(SimulateArgs),
    /// K-fold cross-validation benchmark.
    Cv(CvArgs),
    /// Small-network likelihood-maximizer comparison (reference runs).
    #[command(hide = true)]
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Formula {
    /// Intercept, same-class indicator, either-neutral indicator.
    Polbooks,
    /// The four-column benchmark design (only available in design files).
    Sim,
    /// Intercept plus |v_i - v_j| per selected numeric node column.
    Custom,
}

#[derive(Args)]
struct DataArgs {
    /// Self-contained design CSV (i,j,y,columns...).
    #[arg(long, conflicts_with_all = ["edges", "nodes"])]
    design: Option<PathBuf>,
    /// Edge CSV (i,j or i,j,y).
    #[arg(long, requires = "formula")]
    edges: Option<PathBuf>,
    /// Node attribute CSV (id,attrs...).
    #[arg(long)]
    nodes: Option<PathBuf>,
    /// Design formula for edge/node input.
    #[arg(long, value_enum)]
    formula: Option<Formula>,
    /// Numeric node columns for the custom formula.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
}

#[derive(Args, Clone)]
struct EstimationArgs {
    /// Outer convergence threshold.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1e-5)]
    tol_beta: f64,
    #[arg(long, default_value_t = 1e-5)]
    tol_rho: f64,
    /// Newton threshold for the conditional-mean solve.
    #[arg(long, default_value_t = 1e-6)]
    tol_w: f64,
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    #[arg(long, default_value_t = 100)]
    max_beta_inner: usize,
    #[arg(long, default_value_t = 50)]
    max_rho_inner: usize,
    #[arg(long, default_value_t = 100)]
    max_newton: usize,
    /// Shared-actor pairs per correlation iteration (default 10n(n-1)).
    #[arg(long)]
    pair_sample: Option<usize>,
    /// Pairs for the correlation initializer (default 2n^2).
    #[arg(long)]
    init_sample: Option<usize>,
    /// Newton solver mode.
    #[arg(long, value_enum, default_value_t = NewtonModeArg::Neumann)]
    newton_mode: NewtonModeArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NewtonModeArg {
    Neumann,
    Dense,
}

impl EstimationArgs {
    fn to_config(&self, seed: u64) -> BcemConfig {
        BcemConfig {
            tol_outer: self.tol,
            tol_beta: self.tol_beta,
            tol_rho: self.tol_rho,
            tol_newton: self.tol_w,
            max_outer: self.max_outer,
            max_beta_inner: self.max_beta_inner,
            max_rho_inner: self.max_rho_inner,
            max_newton: self.max_newton,
            pair_sample_size: self.pair_sample,
            init_sample_size: self.init_sample,
            newton_mode: match self.newton_mode {
                NewtonModeArg::Neumann => NewtonMode::Neumann,
                NewtonModeArg::Dense => NewtonMode::Dense,
            },
            seed,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    estimation: EstimationArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Fit JSON produced by `pxnet fit`.
    #[arg(long)]
    fit: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// CSV of target relations (header i,j); default: all missing relations.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// px or eigen.
    #[arg(long, default_value = "px")]
    model: String,
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long, default_value_t = 0.25)]
    rho: f64,
    /// Comma-separated coefficients (default -0.5,0.5,0.5,0.5).
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    eigen_dim: usize,
    #[arg(long, default_value_t = 1.0 / 6.0)]
    eigen_var_additive: f64,
    #[arg(long, default_value_t = 0.408_248_290_463_863)]
    eigen_var_latent: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    eigen_var_noise: f64,
    /// Study configuration JSON; runs a full MSE study instead of one draw.
    #[arg(long)]
    study: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// Worker threads for study cells.
    #[arg(long, env = "PXNET_THREADS", default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    estimation: EstimationArgs,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Comma-separated estimators (bcem, probit0).
    #[arg(long, value_delimiter = ',', default_value = "bcem,probit0")]
    estimators: Vec<String>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Comma-separated correlation values.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    draws: usize,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    args: Vec<String>,
    seed: Option<u64>,
    version: String,
    created_unix: u64,
}

fn write_manifest(out: &Path, seed: Option<u64>) -> Result<(), PxError> {
    let manifest = Manifest {
        command: std::env::args().next().unwrap_or_else(|| "pxnet".into()),
        args: std::env::args().skip(1).collect(),
        seed,
        version: env!("CARGO_PKG_VERSION").into(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn load_data(args: &DataArgs) -> Result<NetworkData, PxError> {
    if let Some(design) = &args.design {
        return netdata::load_design_csv(design);
    }
    let edges = args
        .edges
        .as_ref()
        .ok_or_else(|| PxError::Domain("provide --design or --edges".into()))?;
    let loaded = netdata::load_network(edges, args.nodes.as_deref())?;
    let formula = args
        .formula
        .ok_or_else(|| PxError::Domain("edge input needs --formula".into()))?;
    let (x, columns) = match formula {
        Formula::Polbooks => {
            let nodes = loaded
                .nodes
                .as_ref()
                .ok_or_else(|| PxError::Domain("polbooks formula needs --nodes".into()))?;
            netdata::polbooks_design(nodes)?
        }
        Formula::Sim => {
            return Err(PxError::Domain(
                "the sim formula carries a dyadic covariate; load it from a --design file".into(),
            ))
        }
        Formula::Custom => {
            let nodes = loaded
                .nodes
                .as_ref()
                .ok_or_else(|| PxError::Domain("custom formula needs --nodes".into()))?;
            custom_design(nodes, &args.columns, loaded.n)?
        }
    };
    NetworkData::new(loaded.n, loaded.y, loaded.observed, x, columns)
}

/// Intercept plus one absolute-difference column per selected numeric node
/// attribute.
fn custom_design(
    nodes: &netdata::NodeAttributes,
    columns: &[String],
    n: usize,
) -> Result<(DMatrix<f64>, Vec<String>), PxError> {
    if columns.is_empty() {
        return Err(PxError::Domain("custom formula needs --columns".into()));
    }
    let idx = RelationIndex::new(n)?;
    let mut selected = Vec::new();
    for want in columns {
        let found = nodes
            .columns
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(want))
            .ok_or_else(|| PxError::Domain(format!("no node column named {want:?}")))?;
        match &found.data {
            netdata::NodeColumnData::Numeric(values) => selected.push((want.clone(), values.clone())),
            netdata::NodeColumnData::Categorical(_) => {
                return Err(PxError::Domain(format!("node column {want:?} is not numeric")))
            }
        }
    }
    let mut x = DMatrix::zeros(idx.len(), 1 + selected.len());
    let mut names = vec!["intercept".to_string()];
    for (d, (i, j)) in idx.pairs().enumerate() {
        x[(d, 0)] = 1.0;
        for (c, (_, values)) in selected.iter().enumerate() {
            x[(d, 1 + c)] = (values[i] - values[j]).abs();
        }
    }
    names.extend(selected.iter().map(|(name, _)| format!("absdiff_{name}")));
    Ok((x, names))
}

fn run_fit(args: &FitArgs) -> Result<(), PxError> {
    let data = load_data(&args.data)?;
    let config = args.estimation.to_config(args.seed);
    let fit = bcem::fit(&data, &config)?;
    write_manifest(&args.out, Some(args.seed))?;
    std::fs::write(args.out.join("fit.json"), serde_json::to_string_pretty(&fit)?)?;
    eprintln!(
        "fit: beta = {:?}, rho = {:.4}, converged = {} ({} outer iterations)",
        fit.beta, fit.rho, fit.converged, fit.outer_iterations
    );
    Ok(())
}

fn run_predict(args: &PredictArgs) -> Result<(), PxError> {
    let data = load_data(&args.data)?;
    let fit: bcem::PxFit = serde_json::from_str(&std::fs::read_to_string(&args.fit)?)?;
    let idx = data.index();
    let targets: Vec<usize> = match &args.targets {
        Some(path) => {
            let bytes = std::fs::read(path)?;
            parse_targets(&bytes, &idx)?
        }
        None => (0..data.relation_count()).filter(|&d| !data.observed[d]).collect(),
    };
    if targets.is_empty() {
        return Err(PxError::Domain(
            "no targets: pass --targets or leave relations missing".into(),
        ));
    }
    let preds = predict::predict_marginal(&fit, &data, &targets)?;
    write_manifest(&args.out, None)?;
    predict::write_predictions_csv(&args.out.join("predictions.csv"), &preds)?;
    eprintln!("predict: scored {} relations", preds.len());
    Ok(())
}

fn parse_targets(bytes: &[u8], idx: &RelationIndex) -> Result<Vec<usize>, PxError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers().map_err(PxError::Csv)?.clone();
    if headers.len() < 2
        || !headers[0].eq_ignore_ascii_case("i")
        || !headers[1].eq_ignore_ascii_case("j")
    {
        return Err(PxError::Parse("targets file needs header i,j".into()));
    }
    let mut targets = Vec::new();
    for record in reader.records() {
        let record = record.map_err(PxError::Csv)?;
        let i: usize = record[0]
            .parse()
            .map_err(|_| PxError::Parse(format!("bad target id {:?}", &record[0])))?;
        let j: usize = record[1]
            .parse()
            .map_err(|_| PxError::Parse(format!("bad target id {:?}", &record[1])))?;
        targets.push(idx.pair_to_index(i.min(j), i.max(j))?);
    }
    Ok(targets)
}

fn run_simulate(args: &SimulateArgs) -> Result<(), PxError> {
    if let Some(study_path) = &args.study {
        let mut config: StudyConfig =
            serde_json::from_str(&std::fs::read_to_string(study_path)?)?;
        config.threads = args.threads.max(1);
        let result = simulate::run_mse_study(&config)?;
        write_manifest(&args.out, Some(config.seed))?;
        std::fs::write(args.out.join("study_results.csv"), result.to_csv())?;
        eprintln!("study: wrote {} cells", result.cells.len());
        return Ok(());
    }

    let generator = Generator::from_str(&args.model)?;
    let beta_values =
        if args.beta.is_empty() { simulate::study_beta() } else { args.beta.clone() };
    if beta_values.len() != 4 {
        return Err(PxError::Domain("the benchmark design takes 4 coefficients".into()));
    }
    let beta = DVector::from_column_slice(&beta_values);
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let covs = simulate::gen_sim_covariates(args.n, &mut rng)?;
    let y = match generator {
        Generator::Px => simulate::gen_px(&covs.design, &beta, args.rho, args.n, &mut rng)?,
        Generator::Eigen => {
            let cfg = simulate::EigenGenConfig {
                latent_dim: args.eigen_dim,
                weights: None,
                var_additive: args.eigen_var_additive,
                var_latent: args.eigen_var_latent,
                var_noise: args.eigen_var_noise,
            };
            simulate::gen_eigen(&covs.design, &beta, &cfg, args.n, &mut rng)?
        }
    };
    let data = NetworkData::new(
        args.n,
        y,
        vec![true; covs.design.nrows()],
        covs.design.clone(),
        covs.names.clone(),
    )?;
    write_manifest(&args.out, Some(args.seed))?;
    netdata::write_design_csv(&args.out.join("design.csv"), &data)?;
    // Nodal covariates alongside, for inspection.
    let mut nodes_csv = String::from("id,x1,x2\n");
    for i in 0..args.n {
        nodes_csv.push_str(&format!("{i},{},{}\n", covs.x1[i], covs.x2[i]));
    }
    std::fs::write(args.out.join("nodes.csv"), nodes_csv)?;
    eprintln!(
        "simulate: n = {}, {} relations, mean response {:.3}",
        args.n,
        data.relation_count(),
        data.y.sum() / data.relation_count() as f64
    );
    Ok(())
}

fn run_cv(args: &CvArgs) -> Result<(), PxError> {
    let data = load_data(&args.data)?;
    let estimators: Vec<Estimator> = args
        .estimators
        .iter()
        .map(|s| Estimator::from_str(s))
        .collect::<Result<_, _>>()?;
    let config = args.estimation.to_config(args.seed);
    let (report, rows) = crossval::cv_run(&data, &estimators, args.k, &config)?;
    write_manifest(&args.out, Some(args.seed))?;
    std::fs::write(args.out.join("cv_report.json"), serde_json::to_string_pretty(&report)?)?;
    crossval::write_scores_csv(&args.out.join("cv_scores.csv"), &rows)?;
    for est in &report.estimators {
        eprintln!(
            "cv: {} prauc = {:.4}, roc_auc = {:.4}, mean fold runtime = {:.3}s",
            est.name, est.prauc, est.roc_auc, est.mean_fold_runtime_seconds
        );
    }
    Ok(())
}

fn run_oracle(args: &OracleArgs) -> Result<(), PxError> {
    use std::fmt::Write as _;
    let mut csv = String::from("rho,rep,coef,truth,mle,bcem,probit0\n");
    for (ri, &rho) in args.rho.iter().enumerate() {
        for rep in 0..args.reps {
            let seed = simulate::mix_seed(args.seed, &[ri as u64, rep as u64]);
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let idx = RelationIndex::new(args.n)?;
            let x = DMatrix::from_fn(idx.len(), 1, |_, _| {
                f64::from(rand::Rng::random::<f64>(&mut rng) < 0.3)
            });
            let beta = DVector::from_column_slice(&[args.beta]);
            let y = simulate::gen_px(&x, &beta, rho, args.n, &mut rng)?;
            let data = NetworkData::new(
                args.n,
                y,
                vec![true; idx.len()],
                x,
                vec!["covariate".into()],
            )?;
            let mle = oracle::numeric_mle(&data, &beta, rho, args.draws, seed, 400)?;
            let mut cfg = BcemConfig::default();
            cfg.seed = seed ^ 0x5bd1;
            let bcem_fit = bcem::fit(&data, &cfg)?;
            let probit_fit = probit::fit_independent(&data.x, &data.y, &data.observed)?;
            writeln!(
                csv,
                "{rho},{rep},beta,{},{},{},{}",
                args.beta, mle.beta[0], bcem_fit.beta[0], probit_fit.beta[0]
            )
            .expect("string write");
            writeln!(csv, "{rho},{rep},rho,{rho},{},{},", mle.rho, bcem_fit.rho)
                .expect("string write");
        }
    }
    write_manifest(&args.out, Some(args.seed))?;
    std::fs::write(args.out.join("oracle_comparison.csv"), csv)?;
    eprintln!("oracle: wrote comparison for {} correlation values", args.rho.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Predict(args) => run_predict(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Cv(args) => run_cv(args),
        Command::Oracle(args) => run_oracle(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
