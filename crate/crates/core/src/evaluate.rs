//! Scoring datasets with a quantile model and a strategy.

use std::fmt;
use std::str::FromStr;

use crate::data::{interest_label, Dataset, SyntheticSpec};
use crate::error::{invalid_arg, Error, Result};
use crate::inference::{quantile_at, StrategyConfig};
use crate::metrics::{self, EvalPair, Impression, MetricsReport};
use crate::model::{train, ModelConfig, QuantileModel};

/// Cut-offs reported for the interest task.
pub const NDCG_CUTOFFS: [usize; 3] = [1, 3, 5];

/// Levels at which quantile recovery is measured.
pub const RECOVERY_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    WatchTime,
    Interest,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::WatchTime => "watchtime",
            Task::Interest => "interest",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "watchtime" => Ok(Task::WatchTime),
            "interest" => Ok(Task::Interest),
            other => Err(invalid_arg!("unknown task `{other}` (expected watchtime or interest)")),
        }
    }
}

/// Strategy score for every example, in dataset order.
pub fn predict_scores<M: QuantileModel + ?Sized>(
    model: &M,
    dataset: &Dataset,
    strategy: &StrategyConfig,
) -> Result<Vec<f64>> {
    strategy.validate()?;
    let dim = model.input_dim();
    dataset
        .examples()
        .iter()
        .map(|e| {
            if e.features.len() != dim {
                return Err(invalid_arg!(
                    "example has {} features, model expects {dim}",
                    e.features.len()
                ));
            }
            strategy.score(&model.predict(&e.features)?, model.levels(), None)
        })
        .collect()
}

/// Scores `dataset` and computes the metrics for `task`. Metrics that are
/// undefined on this data are listed in the report instead of failing.
pub fn evaluate<M: QuantileModel + ?Sized>(
    model: &M,
    dataset: &Dataset,
    strategy: &StrategyConfig,
    task: Task,
    max_pairs: u64,
    seed: u64,
) -> Result<MetricsReport> {
    if dataset.is_empty() {
        return Err(invalid_arg!("cannot evaluate on an empty dataset"));
    }
    let scores = predict_scores(model, dataset, strategy)?;
    let mut report = MetricsReport {
        n_records: dataset.len(),
        ..Default::default()
    };
    match task {
        Task::WatchTime => {
            let pairs: Vec<EvalPair> = scores
                .iter()
                .zip(dataset.examples())
                .map(|(&p, e)| EvalPair {
                    prediction: p,
                    target: e.watch_time,
                    user_id: e.user_id.clone(),
                })
                .collect();
            report.mae = Some(metrics::mae(&pairs)?);
            match metrics::xauc(&pairs, max_pairs, seed) {
                Ok(x) => report.xauc = Some(x),
                Err(e @ (Error::UndefinedMetric(_) | Error::InvalidArgument(_))) => {
                    report.undefined.push(("xauc".into(), e.to_string()))
                }
                Err(e) => return Err(e),
            }
        }
        Task::Interest => {
            let mut impressions = Vec::with_capacity(dataset.len());
            for (&score, e) in scores.iter().zip(dataset.examples()) {
                match interest_label(e.duration, e.watch_time) {
                    Ok(label) => impressions.push(Impression {
                        user_id: e.user_id.clone(),
                        score,
                        label,
                    }),
                    Err(_) => report.skipped_records += 1,
                }
            }
            if impressions.is_empty() {
                report.undefined.push(("gauc".into(), "no record has a valid label".into()));
                return Ok(report);
            }
            match metrics::gauc(&impressions) {
                Ok(g) => {
                    report.gauc = Some(g.value);
                    report.evaluated_groups = g.evaluated_groups;
                    report.skipped_groups = g.skipped_groups;
                }
                Err(e @ Error::UndefinedMetric(_)) => report.undefined.push(("gauc".into(), e.to_string())),
                Err(e) => return Err(e),
            }
            let lists = metrics::ranked_lists(&impressions);
            for k in NDCG_CUTOFFS {
                match metrics::ndcg_at_k(&lists, k) {
                    Ok(g) => {
                        report.ndcg_at.insert(k, g.value);
                    }
                    Err(e @ Error::UndefinedMetric(_)) => {
                        report.undefined.push((format!("ndcg@{k}"), e.to_string()))
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(report)
}

/// Mean relative error of the model's quantile function against the true
/// one, over `xs` and [`RECOVERY_LEVELS`]. Off-grid levels are read by
/// interpolation.
pub fn quantile_recovery_error<M: QuantileModel + ?Sized>(
    model: &M,
    spec: &SyntheticSpec,
    xs: &[Vec<f64>],
    model_inputs: &[Vec<f64>],
) -> Result<f64> {
    if xs.is_empty() || xs.len() != model_inputs.len() {
        return Err(invalid_arg!(
            "need matching, non-empty feature lists ({} vs {})",
            xs.len(),
            model_inputs.len()
        ));
    }
    let mut total = 0.0;
    for (x, input) in xs.iter().zip(model_inputs) {
        let est = model.predict(input)?;
        let dist = spec.dist_at(x)?;
        for tau in RECOVERY_LEVELS {
            let truth = dist.quantile(tau)?;
            total += (quantile_at(&est, model.levels(), tau)? - truth).abs() / truth;
        }
    }
    Ok(total / (xs.len() * RECOVERY_LEVELS.len()) as f64)
}

/// Known ground truth for a test set: the spec and each row's raw features.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth<'a> {
    pub spec: &'a SyntheticSpec,
    pub raw_features: &'a [Vec<f64>],
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n_quantiles: usize,
    /// Metrics, or the error that stopped this row.
    pub outcome: std::result::Result<MetricsReport, String>,
    pub recovery_error: Option<f64>,
    pub final_loss: Option<f64>,
}

/// Trains and evaluates one model per entry of `n_list`, all with the same
/// seed. A failing row is recorded and the sweep moves on.
#[allow(clippy::too_many_arguments)]
pub fn sweep_quantiles(
    train_set: &Dataset,
    test_set: &Dataset,
    base: &ModelConfig,
    n_list: &[usize],
    strategy: &StrategyConfig,
    task: Task,
    seed: u64,
    truth: Option<GroundTruth<'_>>,
) -> Result<Vec<SweepRow>> {
    if n_list.is_empty() {
        return Err(invalid_arg!("the list of quantile counts is empty"));
    }
    let inputs: Vec<Vec<f64>> = test_set.examples().iter().map(|e| e.features.clone()).collect();
    let rows = n_list
        .iter()
        .map(|&n| {
            let config = ModelConfig {
                n_quantiles: n,
                ..base.clone()
            };
            let run = || -> Result<(MetricsReport, Option<f64>, f64)> {
                let out = train(train_set, &config, seed)?;
                let report = evaluate(&out.model, test_set, strategy, task, metrics::DEFAULT_XAUC_MAX_PAIRS, seed)?;
                let recovery = truth
                    .map(|t| quantile_recovery_error(&out.model, t.spec, t.raw_features, &inputs))
                    .transpose()?;
                Ok((report, recovery, *out.loss_trace.last().unwrap_or(&f64::NAN)))
            };
            match run() {
                Ok((report, recovery, loss)) => SweepRow {
                    n_quantiles: n,
                    outcome: Ok(report),
                    recovery_error: recovery,
                    final_loss: Some(loss),
                },
                Err(e) => SweepRow {
                    n_quantiles: n,
                    outcome: Err(e.to_string()),
                    recovery_error: None,
                    final_loss: None,
                },
            }
        })
        .collect();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, true_mean, Affine, Example};
    use crate::model::OracleModel;

    #[test]
    fn oracle_cde_orders_by_true_mean() {
        let spec = SyntheticSpec::example_lognormal();
        let oracle = OracleModel::new(spec.clone(), 100).unwrap();
        let ds = generate(&spec, 400, 3).unwrap();
        let with_means: Dataset = ds
            .examples()
            .iter()
            .map(|e| Example::new(e.features.clone(), true_mean(&spec, &e.features).unwrap()))
            .collect();
        let r = evaluate(&oracle, &with_means, &StrategyConfig::cde(), Task::WatchTime, u64::MAX, 0).unwrap();
        assert!(r.xauc.unwrap().value > 0.95, "{r:?}");
        assert!(r.xauc.unwrap().exhaustive);
    }

    #[test]
    fn cde_and_cse_disagree_on_heteroscedastic_data() {
        // Spread grows with x0 while the median falls with it.
        let spec = SyntheticSpec::lognormal(Affine::new(3.0, vec![-0.2]), Affine::new(0.6, vec![0.5])).unwrap();
        let oracle = OracleModel::new(spec.clone(), 20).unwrap();
        let ds = generate(&spec, 300, 5).unwrap();
        let a = evaluate(&oracle, &ds, &StrategyConfig::cde(), Task::WatchTime, u64::MAX, 0).unwrap();
        let b = evaluate(&oracle, &ds, &StrategyConfig::cse(0.25), Task::WatchTime, u64::MAX, 0).unwrap();
        assert_ne!(a.to_rows(), b.to_rows());
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let oracle = OracleModel::new(SyntheticSpec::example_lognormal(), 5).unwrap();
        let empty = Dataset::default();
        assert!(matches!(
            evaluate(&oracle, &empty, &StrategyConfig::cde(), Task::WatchTime, 10, 0),
            Err(Error::InvalidArgument(_))
        ));
        let wrong: Dataset = vec![Example::new(vec![0.0; 3], 1.0)].into_iter().collect();
        assert!(matches!(
            evaluate(&oracle, &wrong, &StrategyConfig::cde(), Task::WatchTime, 10, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn interest_task_reports_group_metrics() {
        let spec = SyntheticSpec::example_lognormal();
        let oracle = OracleModel::new(spec.clone(), 10).unwrap();
        let ds = generate(&spec, 2000, 9).unwrap();
        let r = evaluate(&oracle, &ds, &StrategyConfig::cde(), Task::Interest, 10, 0).unwrap();
        let g = r.gauc.unwrap();
        assert!((0.0..=1.0).contains(&g));
        assert_eq!(r.ndcg_at.keys().copied().collect::<Vec<_>>(), vec![1, 3, 5]);
        assert!(r.evaluated_groups > 0);
        assert!(r.mae.is_none());
    }

    #[test]
    fn constant_targets_leave_xauc_undefined() {
        let oracle = OracleModel::new(SyntheticSpec::example_lognormal(), 5).unwrap();
        let ds: Dataset = (0..5).map(|i| Example::new(vec![i as f64 / 5.0, 0.0], 7.0)).collect();
        let r = evaluate(&oracle, &ds, &StrategyConfig::cde(), Task::WatchTime, 10, 0).unwrap();
        assert!(r.mae.is_some());
        assert!(r.xauc.is_none());
        assert_eq!(r.undefined[0].0, "xauc");
    }

    #[test]
    fn oracle_recovery_error_is_zero() {
        let spec = SyntheticSpec::example_lognormal();
        let oracle = OracleModel::new(spec.clone(), 9).unwrap();
        let xs = vec![vec![0.2, -0.4], vec![-0.9, 0.9]];
        let err = quantile_recovery_error(&oracle, &spec, &xs, &xs).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn sweep_keeps_going_and_duplicates() {
        let spec = SyntheticSpec::example_lognormal();
        let ds = generate(&spec, 200, 1).unwrap();
        let (tr, te) = ds.split(0.25, 0);
        let base = ModelConfig {
            hidden_sizes: vec![4],
            epochs: 1,
            batch_size: 50,
            ..Default::default()
        };
        let rows = sweep_quantiles(&tr, &te, &base, &[2, 0, 2], &StrategyConfig::cde(), Task::WatchTime, 3, None).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].outcome.is_err());
        assert_eq!(rows[0].outcome.as_ref().unwrap(), rows[2].outcome.as_ref().unwrap());
        assert!(sweep_quantiles(&tr, &te, &base, &[], &StrategyConfig::cde(), Task::WatchTime, 3, None).is_err());
    }
}
