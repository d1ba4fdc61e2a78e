//! K-fold cross-validation over relations and binary classification metrics.
//!
//! Folds partition the observed relations into near-equal disjoint sets; each
//! fold is held out in turn, the estimators are refit on the remainder, and
//! out-of-sample scores are assembled into one complete vector per estimator.
//! ROC AUC uses the midrank statistic (tie-aware); the precision-recall area
//! uses step-wise integration with tied scores grouped, which avoids the
//! optimism of trapezoidal interpolation in PR space.

use crate::bcem::{self, BcemConfig};
use crate::error::{PxError, Result};
use crate::netdata::NetworkData;
use crate::normal::std_cdf;
use crate::predict;
use crate::probit;
use crate::simulate::{mix_seed, Estimator};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Assign items `0..n_items` to `k` folds with sizes differing by at most 1.
pub fn kfold_split<R: Rng + ?Sized>(n_items: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(PxError::Domain(format!("need at least 2 folds, got {k}")));
    }
    if k > n_items {
        return Err(PxError::Domain(format!("{k} folds for {n_items} items")));
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    order.shuffle(rng);
    let mut assignment = vec![0usize; n_items];
    for (pos, &item) in order.iter().enumerate() {
        assignment[item] = pos % k;
    }
    Ok(assignment)
}

fn check_two_classes(labels: &[f64]) -> Result<(usize, usize)> {
    let positives = labels.iter().filter(|&&v| v == 1.0).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(PxError::Degenerate("metrics need both classes present".into()));
    }
    Ok((positives, negatives))
}

/// Area under the ROC curve via the midrank statistic.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(PxError::Domain("scores and labels must align and be nonempty".into()));
    }
    let (positives, negatives) = check_two_classes(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_positive = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Midrank of the tie group (1-based ranks).
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &item in &order[start..end] {
            if labels[item] == 1.0 {
                rank_sum_positive += midrank;
            }
        }
        start = end;
    }
    let p = positives as f64;
    let u = rank_sum_positive - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// Area under the precision-recall curve: step-wise integration descending by
/// score, tied scores grouped.
pub fn prauc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(PxError::Domain("scores and labels must align and be nonempty".into()));
    }
    let (positives, _) = check_two_classes(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut area = 0.0;
    let mut true_positives = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        for &item in &order[start..end] {
            true_positives += (labels[item] == 1.0) as usize;
        }
        seen += end - start;
        let recall = true_positives as f64 / positives as f64;
        let precision = true_positives as f64 / seen as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        start = end;
    }
    Ok(area)
}

/// Per-estimator cross-validation summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub name: String,
    pub prauc: f64,
    pub roc_auc: f64,
    pub mean_fold_runtime_seconds: f64,
    /// Folds whose fit failed; their relations carry no score.
    pub failed_folds: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub fold_sizes: Vec<usize>,
    pub estimators: Vec<EstimatorReport>,
}

/// One out-of-sample score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRow {
    pub estimator: String,
    pub i: usize,
    pub j: usize,
    pub y: f64,
    pub score: f64,
}

/// Run the cross-validation benchmark. Folds partition the observed
/// relations; the master seed drives both the fold assignment and the
/// per-fold fitting seeds.
pub fn cv_run(
    data: &NetworkData,
    estimators: &[Estimator],
    k: usize,
    config: &BcemConfig,
) -> Result<(CvReport, Vec<ScoreRow>)> {
    if estimators.is_empty() {
        return Err(PxError::Domain("no estimators requested".into()));
    }
    let observed_idx: Vec<usize> =
        (0..data.relation_count()).filter(|&d| data.observed[d]).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let assignment = kfold_split(observed_idx.len(), k, &mut rng)?;
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &fold) in assignment.iter().enumerate() {
        folds[fold].push(observed_idx[pos]);
    }

    let idx = data.index();
    let mut scores: Vec<Vec<Option<f64>>> =
        vec![vec![None; data.relation_count()]; estimators.len()];
    let mut failed: Vec<Vec<usize>> = vec![Vec::new(); estimators.len()];
    let mut runtimes: Vec<f64> = vec![0.0; estimators.len()];
    let mut fold_successes: Vec<usize> = vec![0; estimators.len()];

    for (f, fold_dyads) in folds.iter().enumerate() {
        let train = data.with_held_out(fold_dyads)?;
        for (e, estimator) in estimators.iter().enumerate() {
            let started = std::time::Instant::now();
            let outcome: Result<Vec<(usize, f64)>> = match estimator {
                Estimator::Bcem => {
                    let mut fold_cfg = config.clone();
                    fold_cfg.seed = mix_seed(config.seed, &[41, f as u64]);
                    bcem::fit(&train, &fold_cfg).and_then(|fit| {
                        predict::predict_marginal(&fit, &train, fold_dyads).map(|preds| {
                            preds.into_iter().map(|p| (p.index, p.probability)).collect()
                        })
                    })
                }
                Estimator::Probit0 => {
                    let mut x = train.x.clone();
                    crate::netdata::impute_missing_design(&mut x)
                        .and_then(|()| probit::fit_independent(&x, &train.y, &train.observed))
                        .map(|fit| {
                            let eta = &x * &fit.beta;
                            fold_dyads.iter().map(|&d| (d, std_cdf(eta[d]))).collect()
                        })
                }
            };
            match outcome {
                Ok(pairs) => {
                    for (d, s) in pairs {
                        scores[e][d] = Some(s);
                    }
                    runtimes[e] += started.elapsed().as_secs_f64();
                    fold_successes[e] += 1;
                }
                Err(_) => failed[e].push(f),
            }
        }
    }

    let mut reports = Vec::with_capacity(estimators.len());
    let mut rows = Vec::new();
    for (e, estimator) in estimators.iter().enumerate() {
        let mut s = Vec::new();
        let mut l = Vec::new();
        for d in 0..data.relation_count() {
            if let Some(score) = scores[e][d] {
                s.push(score);
                l.push(data.y[d]);
                let (i, j) = idx.index_to_pair(d);
                rows.push(ScoreRow {
                    estimator: estimator.name().into(),
                    i,
                    j,
                    y: data.y[d],
                    score,
                });
            }
        }
        if s.is_empty() {
            return Err(PxError::Degenerate(format!(
                "estimator {} failed on every fold",
                estimator.name()
            )));
        }
        reports.push(EstimatorReport {
            name: estimator.name().into(),
            prauc: prauc(&s, &l)?,
            roc_auc: roc_auc(&s, &l)?,
            mean_fold_runtime_seconds: runtimes[e] / fold_successes[e].max(1) as f64,
            failed_folds: failed[e].clone(),
        });
    }

    Ok((
        CvReport {
            k,
            seed: config.seed,
            fold_sizes: folds.iter().map(|f| f.len()).collect(),
            estimators: reports,
        },
        rows,
    ))
}

/// Write out-of-sample scores as CSV (`estimator,i,j,y,score`).
pub fn write_scores_csv(path: &std::path::Path, rows: &[ScoreRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["estimator", "i", "j", "y", "score"])?;
    for r in rows {
        writer.write_record(&[
            r.estimator.clone(),
            r.i.to_string(),
            r.j.to_string(),
            format!("{}", r.y),
            format!("{}", r.score),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
