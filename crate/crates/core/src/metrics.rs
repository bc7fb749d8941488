//! Evaluation metrics: MAE and XAUC for watch-time regression, AUC, GAUC and
//! nDCG@k for interest prediction.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid_arg, Error, Result};

/// Default cap on the number of pairs XAUC looks at.
pub const DEFAULT_XAUC_MAX_PAIRS: u64 = 5_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub prediction: f64,
    pub target: f64,
    pub user_id: String,
}

impl EvalPair {
    pub fn new(prediction: f64, target: f64) -> Self {
        EvalPair {
            prediction,
            target,
            user_id: String::new(),
        }
    }
}

/// Mean absolute error.
pub fn mae(pairs: &[EvalPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid_arg!("mae of an empty set"));
    }
    let total: f64 = pairs.iter().map(|p| (p.prediction - p.target).abs()).sum();
    Ok(total / pairs.len() as f64)
}

/// Outcome of an XAUC computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Xauc {
    pub value: f64,
    /// Number of pairs (with distinct targets) that were scored.
    pub pairs: u64,
    /// Whether every distinct-target pair was used.
    pub exhaustive: bool,
}

/// Fraction of pairs with distinct targets whose predictions are ordered the
/// same way; prediction ties score one half.
///
/// When the number of distinct-target pairs is at most `max_pairs` every pair
/// is counted exactly. Otherwise `max_pairs` pairs are drawn uniformly with
/// `seed`.
pub fn xauc(pairs: &[EvalPair], max_pairs: u64, seed: u64) -> Result<Xauc> {
    if pairs.len() < 2 {
        return Err(invalid_arg!("xauc needs at least two pairs"));
    }
    if pairs.iter().any(|p| !p.prediction.is_finite() || !p.target.is_finite()) {
        return Err(invalid_arg!("xauc inputs must be finite"));
    }
    let total = distinct_target_pairs(pairs);
    if total == 0 {
        return Err(Error::UndefinedMetric("xauc: all targets are identical".into()));
    }
    if total <= max_pairs {
        let twice_hits = exhaustive_twice_concordant(pairs);
        return Ok(Xauc {
            value: twice_hits as f64 / (2 * total) as f64,
            pairs: total,
            exhaustive: true,
        });
    }
    if max_pairs == 0 {
        return Err(invalid_arg!("max_pairs must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pairs.len();
    let mut twice_hits = 0u64;
    let mut counted = 0u64;
    while counted < max_pairs {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j || pairs[i].target == pairs[j].target {
            continue;
        }
        twice_hits += twice_concordance(&pairs[i], &pairs[j]);
        counted += 1;
    }
    Ok(Xauc {
        value: twice_hits as f64 / (2 * counted) as f64,
        pairs: counted,
        exhaustive: false,
    })
}

fn twice_concordance(a: &EvalPair, b: &EvalPair) -> u64 {
    let dt = a.target.partial_cmp(&b.target).unwrap();
    let dp = a.prediction.partial_cmp(&b.prediction).unwrap();
    match (dt, dp) {
        (_, Ordering::Equal) => 1,
        (x, y) if x == y => 2,
        _ => 0,
    }
}

fn distinct_target_pairs(pairs: &[EvalPair]) -> u64 {
    let mut targets: Vec<f64> = pairs.iter().map(|p| p.target).collect();
    targets.sort_by(f64::total_cmp);
    let n = targets.len() as u64;
    let mut same = 0u64;
    for run in targets.chunk_by(|a, b| a == b) {
        let c = run.len() as u64;
        same += c * (c - 1) / 2;
    }
    n * (n - 1) / 2 - same
}

/// Twice the number of concordant pairs plus the number of prediction ties,
/// over all pairs with distinct targets, in O(n log n).
fn exhaustive_twice_concordant(pairs: &[EvalPair]) -> u64 {
    let mut preds: Vec<f64> = pairs.iter().map(|p| p.prediction).collect();
    preds.sort_by(f64::total_cmp);
    preds.dedup();
    let rank = |p: f64| preds.partition_point(|&v| v < p);

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].target.total_cmp(&pairs[b].target));

    let mut tree = Fenwick::new(preds.len());
    let mut twice = 0u64;
    let mut start = 0;
    while start < order.len() {
        let t = pairs[order[start]].target;
        let mut end = start;
        while end < order.len() && pairs[order[end]].target == t {
            end += 1;
        }
        // Everything already in the tree has a strictly smaller target.
        for &i in &order[start..end] {
            let r = rank(pairs[i].prediction);
            let below = tree.prefix(r);
            let tied = tree.prefix(r + 1) - below;
            twice += 2 * below + tied;
        }
        for &i in &order[start..end] {
            tree.add(rank(pairs[i].prediction));
        }
        start = end;
    }
    twice
}

struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick {
            tree: vec![0; n + 1],
        }
    }

    fn add(&mut self, index: usize) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted indices strictly below `end`.
    fn prefix(&self, end: usize) -> u64 {
        let mut i = end;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Area under the ROC curve via the Mann-Whitney statistic with mid-ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(invalid_arg!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(invalid_arg!("auc scores must be finite"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share their mean.
        let mid_rank = (start + end + 1) as f64 / 2.0;
        let pos_in_run = order[start..end].iter().filter(|&&i| labels[i]).count();
        pos_rank_sum += mid_rank * pos_in_run as f64;
        start = end;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// One scored impression for group metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Impression {
    pub user_id: String,
    pub score: f64,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMetric {
    pub value: f64,
    pub evaluated_groups: usize,
    pub skipped_groups: usize,
}

fn group_by_user(impressions: &[Impression]) -> BTreeMap<&str, Vec<&Impression>> {
    let mut groups: BTreeMap<&str, Vec<&Impression>> = BTreeMap::new();
    for imp in impressions {
        groups.entry(imp.user_id.as_str()).or_default().push(imp);
    }
    groups
}

/// Impression-weighted mean of per-user AUC. Users whose impressions are all
/// one class are skipped and counted.
pub fn gauc(impressions: &[Impression]) -> Result<GroupMetric> {
    if impressions.is_empty() {
        return Err(invalid_arg!("gauc of an empty set"));
    }
    let mut weighted = 0.0;
    let mut weight = 0.0;
    let (mut evaluated, mut skipped) = (0, 0);
    for group in group_by_user(impressions).values() {
        let scores: Vec<f64> = group.iter().map(|i| i.score).collect();
        let labels: Vec<bool> = group.iter().map(|i| i.label).collect();
        match auc(&scores, &labels) {
            Ok(a) => {
                weighted += a * group.len() as f64;
                weight += group.len() as f64;
                evaluated += 1;
            }
            Err(Error::UndefinedMetric(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if evaluated == 0 {
        return Err(Error::UndefinedMetric("gauc: no user has both classes".into()));
    }
    Ok(GroupMetric {
        value: weighted / weight,
        evaluated_groups: evaluated,
        skipped_groups: skipped,
    })
}

fn dcg(relevances: &[bool], k: usize) -> f64 {
    relevances
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum()
}

/// Mean nDCG@k over lists of binary relevances already in ranked order.
/// Lists with no relevant item are skipped.
pub fn ndcg_at_k(ranked_relevances: &[Vec<bool>], k: usize) -> Result<GroupMetric> {
    if k == 0 {
        return Err(invalid_arg!("k must be at least 1"));
    }
    if ranked_relevances.is_empty() {
        return Err(invalid_arg!("ndcg of an empty set"));
    }
    let mut total = 0.0;
    let (mut evaluated, mut skipped) = (0, 0);
    for list in ranked_relevances {
        let n_rel = list.iter().filter(|&&r| r).count();
        if n_rel == 0 {
            skipped += 1;
            continue;
        }
        let ideal: Vec<bool> = (0..list.len()).map(|i| i < n_rel).collect();
        total += dcg(list, k) / dcg(&ideal, k);
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::UndefinedMetric("ndcg: no list has a relevant item".into()));
    }
    Ok(GroupMetric {
        value: total / evaluated as f64,
        evaluated_groups: evaluated,
        skipped_groups: skipped,
    })
}

/// Per-user relevance lists ordered by descending score; equal scores keep
/// input order.
pub fn ranked_lists(impressions: &[Impression]) -> Vec<Vec<bool>> {
    group_by_user(impressions)
        .into_values()
        .map(|mut g| {
            g.sort_by(|a, b| b.score.total_cmp(&a.score));
            g.iter().map(|i| i.label).collect()
        })
        .collect()
}

/// Everything an evaluation run reports. Metrics that could not be computed
/// are `None` and explained in `undefined`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub n_records: usize,
    pub mae: Option<f64>,
    pub xauc: Option<Xauc>,
    pub gauc: Option<f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
    pub evaluated_groups: usize,
    pub skipped_groups: usize,
    pub skipped_records: usize,
    pub undefined: Vec<(String, String)>,
}

impl MetricsReport {
    /// `metric,value` lines in a fixed order.
    pub fn to_rows(&self) -> Vec<(String, String)> {
        let mut rows = vec![("n_records".to_string(), self.n_records.to_string())];
        if let Some(v) = self.mae {
            rows.push(("mae".into(), fmt_f(v)));
        }
        if let Some(x) = &self.xauc {
            rows.push(("xauc".into(), fmt_f(x.value)));
            rows.push(("xauc_pairs".into(), x.pairs.to_string()));
            rows.push(("xauc_exhaustive".into(), x.exhaustive.to_string()));
        }
        if let Some(v) = self.gauc {
            rows.push(("gauc".into(), fmt_f(v)));
        }
        for (k, v) in &self.ndcg_at {
            rows.push((format!("ndcg@{k}"), fmt_f(*v)));
        }
        if self.gauc.is_some() || !self.ndcg_at.is_empty() {
            rows.push(("evaluated_groups".into(), self.evaluated_groups.to_string()));
            rows.push(("skipped_groups".into(), self.skipped_groups.to_string()));
        }
        if self.skipped_records > 0 {
            rows.push(("skipped_records".into(), self.skipped_records.to_string()));
        }
        for (name, why) in &self.undefined {
            rows.push((format!("{name}_undefined"), why.clone()));
        }
        rows
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}
