//! Session simulator for comparing ranking strategies on candidates whose
//! true watch-time distributions are known.
//!
//! A ranking is computed once per strategy; a session serves items in that
//! order (wrapping around when the horizon exceeds the pool). After each
//! play the user may leave: a watch shorter than `threshold_s` triggers churn
//! with probability `p_churn`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::data::{Affine, ConditionalDist, SyntheticSpec};
use crate::error::{invalid_arg, Error, Result};
use crate::inference::StrategyConfig;
use crate::model::QuantileModel;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub features: Vec<f64>,
    /// Per-item DQC weight; falls back to the strategy's `k`.
    pub k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    spec: SyntheticSpec,
    candidates: Vec<Candidate>,
    dists: Vec<ConditionalDist>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolFile {
    features: Vec<Vec<f64>>,
    k: Option<Vec<f64>>,
}

impl CandidatePool {
    pub fn new(spec: SyntheticSpec, candidates: Vec<Candidate>) -> Result<Self> {
        spec.validate()?;
        if candidates.is_empty() {
            return Err(invalid_arg!("candidate pool is empty"));
        }
        for (i, c) in candidates.iter().enumerate() {
            if let Some(k) = c.k {
                if !(0.0..=1.0).contains(&k) {
                    return Err(invalid_arg!("candidate {i}: k = {k} is outside [0, 1]"));
                }
            }
        }
        let dists = candidates
            .iter()
            .map(|c| spec.dist_at(&c.features))
            .collect::<Result<_>>()?;
        Ok(CandidatePool {
            spec,
            candidates,
            dists,
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// True watch-time distribution of candidate `i`.
    pub fn dist(&self, i: usize) -> &ConditionalDist {
        &self.dists[i]
    }

    /// Pool file: a `[spec]` table in the synthetic spec format, a
    /// `features` list of candidate vectors, and an optional `k` list.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let spec = match table.remove("spec") {
            Some(toml::Value::Table(t)) => {
                let text = toml::to_string(&t).map_err(|e| Error::Schema(e.to_string()))?;
                SyntheticSpec::from_toml_str(&text)?
            }
            Some(_) => return Err(Error::Schema("field `spec` must be a table".into())),
            None => return Err(Error::Schema("pool file requires a `[spec]` table".into())),
        };
        let raw: PoolFile = table.try_into().map_err(|e: toml::de::Error| Error::Schema(e.to_string()))?;
        let ks = match raw.k {
            Some(ks) if ks.len() != raw.features.len() => {
                return Err(Error::Schema(format!(
                    "field `k` has {} entries for {} candidates",
                    ks.len(),
                    raw.features.len()
                )))
            }
            Some(ks) => ks.into_iter().map(Some).collect(),
            None => vec![None; raw.features.len()],
        };
        let candidates = raw
            .features
            .into_iter()
            .zip(ks)
            .map(|(features, k)| Candidate { features, k })
            .collect();
        CandidatePool::new(spec, candidates)
    }

    pub fn to_toml_string(&self) -> String {
        let mut s = String::new();
        let row = |v: &[f64]| {
            let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", items.join(", "))
        };
        s.push_str("features = [\n");
        for c in &self.candidates {
            s.push_str(&format!("    {},\n", row(&c.features)));
        }
        s.push_str("]\n");
        if self.candidates.iter().all(|c| c.k.is_some()) {
            let ks: Vec<f64> = self.candidates.iter().map(|c| c.k.unwrap()).collect();
            s.push_str(&format!("k = {}\n", row(&ks)));
        }
        s.push_str("\n[spec]\n");
        s.push_str(&self.spec.to_toml_string(None));
        s
    }

    /// Skip-prone items against steady ones. Risky items (`x` near 1) are
    /// skipped about 30% of the time but otherwise run about a minute; safe
    /// items (`x` near -1) reliably run about 21 s. The risky items have the
    /// higher mean and the much lower first quartile.
    pub fn risky_vs_safe(n_risky: usize, n_safe: usize) -> Result<Self> {
        let spec = SyntheticSpec::mixture(
            Affine::new(0.155, vec![0.145]),
            Affine::new(2f64.ln(), vec![0.0]),
            Affine::new(0.3, vec![0.0]),
            Affine::new(3.5695, vec![0.5245]),
            Affine::new(0.2, vec![0.0]),
        )?;
        let risky = (0..n_risky).map(|i| 1.0 - 0.02 * i as f64);
        let safe = (0..n_safe).map(|i| -1.0 + 0.02 * i as f64);
        let candidates = risky
            .chain(safe)
            .map(|x| Candidate {
                features: vec![x.clamp(-1.0, 1.0)],
                k: None,
            })
            .collect();
        CandidatePool::new(spec, candidates)
    }
}

/// Indices sorted by descending score; equal scores keep index order.
pub fn order_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Strategy score of every candidate, in pool order.
pub fn score_pool<M: QuantileModel + ?Sized>(
    model: &M,
    pool: &CandidatePool,
    strategy: &StrategyConfig,
) -> Result<Vec<f64>> {
    strategy.validate()?;
    pool.candidates
        .iter()
        .map(|c| {
            if c.features.len() != model.input_dim() {
                return Err(invalid_arg!(
                    "candidate has {} features, model expects {}",
                    c.features.len(),
                    model.input_dim()
                ));
            }
            strategy.score(&model.predict(&c.features)?, model.levels(), c.k)
        })
        .collect()
}

/// Candidate indices, best first.
pub fn rank<M: QuantileModel + ?Sized>(model: &M, pool: &CandidatePool, strategy: &StrategyConfig) -> Result<Vec<usize>> {
    Ok(order_by_score(&score_pool(model, pool, strategy)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserModel {
    pub p_churn: f64,
    pub threshold_s: f64,
}

impl Default for UserModel {
    fn default() -> Self {
        UserModel {
            p_churn: 0.5,
            threshold_s: 5.0,
        }
    }
}

impl UserModel {
    pub fn high_churn() -> Self {
        UserModel {
            p_churn: 0.8,
            threshold_s: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_churn) {
            return Err(invalid_arg!("p_churn must lie in [0, 1], got {}", self.p_churn));
        }
        if !(self.threshold_s >= 0.0 && self.threshold_s.is_finite()) {
            return Err(invalid_arg!("threshold_s must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub item: usize,
    pub watch_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub total_watch_s: f64,
    /// Plays served, including the one after which the user left.
    pub plays: usize,
    pub churned: bool,
    pub steps: Vec<Step>,
}

/// Runs one session over a fixed `ranking`.
pub fn simulate_session(
    pool: &CandidatePool,
    ranking: &[usize],
    user: &UserModel,
    horizon: usize,
    seed: u64,
) -> Result<SessionOutcome> {
    user.validate()?;
    if horizon == 0 {
        return Err(invalid_arg!("horizon must be at least 1"));
    }
    if ranking.is_empty() || ranking.iter().any(|&i| i >= pool.len()) {
        return Err(invalid_arg!("ranking must be non-empty and index into the pool"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SessionOutcome {
        total_watch_s: 0.0,
        plays: 0,
        churned: false,
        steps: Vec::with_capacity(horizon),
    };
    for t in 0..horizon {
        let item = ranking[t % ranking.len()];
        let watch_s = pool.dist(item).sample(&mut rng);
        let u: f64 = rng.random();
        out.steps.push(Step { item, watch_s });
        out.total_watch_s += watch_s;
        out.plays += 1;
        if watch_s < user.threshold_s && u < user.p_churn {
            out.churned = true;
            break;
        }
    }
    Ok(out)
}

/// One row of a strategy comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub strategy: String,
    pub mean_watch_s: f64,
    pub se_watch: f64,
    pub mean_plays: f64,
    pub se_plays: f64,
    pub churn_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    pub user: UserModel,
    pub horizon: usize,
    pub n_sessions: usize,
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Simulates `n_sessions` per strategy. Session `i` uses seed `seed + i`
/// under every strategy.
pub fn compare_strategies<M: QuantileModel + ?Sized>(
    model: &M,
    pool: &CandidatePool,
    strategies: &[(String, StrategyConfig)],
    sessions: &SessionConfig,
    seed: u64,
) -> Result<Vec<StrategyReport>> {
    if strategies.is_empty() {
        return Err(invalid_arg!("at least one strategy is required"));
    }
    if sessions.n_sessions == 0 {
        return Err(invalid_arg!("n_sessions must be at least 1"));
    }
    sessions.user.validate()?;
    strategies
        .iter()
        .map(|(name, strategy)| {
            let ranking = rank(model, pool, strategy)?;
            let mut watch = Vec::with_capacity(sessions.n_sessions);
            let mut plays = Vec::with_capacity(sessions.n_sessions);
            let mut churned = 0usize;
            for i in 0..sessions.n_sessions {
                let s = simulate_session(pool, &ranking, &sessions.user, sessions.horizon, seed.wrapping_add(i as u64))?;
                watch.push(s.total_watch_s);
                plays.push(s.plays as f64);
                churned += s.churned as usize;
            }
            let (mean_watch_s, se_watch) = mean_and_se(&watch);
            let (mean_plays, se_plays) = mean_and_se(&plays);
            Ok(StrategyReport {
                strategy: name.clone(),
                mean_watch_s,
                se_watch,
                mean_plays,
                se_plays,
                churn_rate: churned as f64 / sessions.n_sessions as f64,
            })
        })
        .collect()
}

pub const REPORT_HEADER: &str = "strategy,mean_watch_s,se_watch,mean_plays,se_plays,churn_rate";

/// Writes a comparison as CSV, `preamble` lines first as `#` comments.
pub fn write_report<W: Write>(mut w: W, preamble: &[String], rows: &[StrategyReport]) -> std::io::Result<()> {
    for line in preamble {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.strategy, r.mean_watch_s, r.se_watch, r.mean_plays, r.se_plays, r.churn_rate
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OracleModel;
    use proptest::prelude::*;

    fn equal_mean_pool() -> CandidatePool {
        // mu + sigma^2 / 2 is the same at x = -1 (sigma 0.2) and x = 1 (sigma 0.8).
        let mut spec = SyntheticSpec::lognormal(Affine::new(2.83, vec![-0.15]), Affine::new(0.5, vec![0.3])).unwrap();
        spec.t_max = 1e9;
        let cands = [1.0, -1.0]
            .iter()
            .map(|&x| Candidate {
                features: vec![x],
                k: None,
            })
            .collect();
        CandidatePool::new(spec, cands).unwrap()
    }

    #[test]
    fn conservative_strategy_prefers_low_spread() {
        let pool = equal_mean_pool();
        let oracle = OracleModel::new(pool.spec().clone(), 100).unwrap();
        let m0 = pool.dist(0).mean();
        let m1 = pool.dist(1).mean();
        assert!((m0 / m1 - 1.0).abs() < 1e-9);
        assert_eq!(rank(&oracle, &pool, &StrategyConfig::cse(0.25)).unwrap(), vec![1, 0]);
    }

    #[test]
    fn dqc_endpoint_matches_cse() {
        let pool = CandidatePool::risky_vs_safe(4, 4).unwrap();
        let oracle = OracleModel::new(pool.spec().clone(), 50).unwrap();
        let a = rank(&oracle, &pool, &StrategyConfig::dqc(0.25, 0.7, 1.0)).unwrap();
        let b = rank(&oracle, &pool, &StrategyConfig::cse(0.25)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_candidate_and_empty_pool() {
        let spec = SyntheticSpec::example_lognormal();
        let pool = CandidatePool::new(
            spec.clone(),
            vec![Candidate {
                features: vec![0.0, 0.0],
                k: None,
            }],
        )
        .unwrap();
        let oracle = OracleModel::new(spec.clone(), 5).unwrap();
        assert_eq!(rank(&oracle, &pool, &StrategyConfig::cde()).unwrap(), vec![0]);
        assert!(CandidatePool::new(spec, vec![]).is_err());
    }

    #[test]
    fn no_churn_plays_full_horizon() {
        let pool = CandidatePool::risky_vs_safe(3, 3).unwrap();
        let user = UserModel {
            p_churn: 0.0,
            threshold_s: 1e9,
        };
        for seed in 0..50 {
            let s = simulate_session(&pool, &[0, 1, 2, 3, 4, 5], &user, 13, seed).unwrap();
            assert_eq!(s.plays, 13);
            assert!(!s.churned);
            assert_eq!(s.steps[6].item, 0);
        }
    }

    #[test]
    fn always_churn_stops_after_one_play() {
        let pool = CandidatePool::risky_vs_safe(2, 2).unwrap();
        let user = UserModel {
            p_churn: 1.0,
            threshold_s: pool.spec().t_max + 1.0,
        };
        let s = simulate_session(&pool, &[0, 1], &user, 10, 4).unwrap();
        assert_eq!(s.plays, 1);
        assert!(s.churned);
    }

    #[test]
    fn play_counts_follow_truncated_geometric_law() {
        let pool = CandidatePool::risky_vs_safe(2, 2).unwrap();
        let p = 0.3;
        let horizon = 6;
        let user = UserModel {
            p_churn: p,
            threshold_s: pool.spec().t_max + 1.0,
        };
        let n = 40_000;
        let mut counts = vec![0usize; horizon + 1];
        for i in 0..n {
            counts[simulate_session(&pool, &[0, 1, 2, 3], &user, horizon, i).unwrap().plays] += 1;
        }
        for j in 1..=horizon {
            let expected = if j < horizon {
                (1.0 - p).powi(j as i32 - 1) * p
            } else {
                (1.0 - p).powi(horizon as i32 - 1)
            };
            let freq = counts[j] as f64 / n as f64;
            let se = (expected * (1.0 - expected) / n as f64).sqrt();
            assert!((freq - expected).abs() < 5.0 * se, "j={j}: {freq} vs {expected}");
        }
    }

    #[test]
    fn sessions_are_reproducible_and_consistent() {
        let pool = CandidatePool::risky_vs_safe(3, 3).unwrap();
        let a = simulate_session(&pool, &[0, 3], &UserModel::high_churn(), 8, 11).unwrap();
        let b = simulate_session(&pool, &[0, 3], &UserModel::high_churn(), 8, 11).unwrap();
        assert_eq!(a, b);
        let sum: f64 = a.steps.iter().map(|s| s.watch_s).sum();
        assert_eq!(sum, a.total_watch_s);
        assert_eq!(a.plays, a.steps.len());
        assert!(simulate_session(&pool, &[0], &UserModel::default(), 0, 1).is_err());
        let bad = UserModel {
            p_churn: 1.5,
            threshold_s: 5.0,
        };
        assert!(simulate_session(&pool, &[0], &bad, 3, 1).is_err());
    }

    #[test]
    fn identical_strategies_give_identical_rows() {
        let pool = CandidatePool::risky_vs_safe(3, 3).unwrap();
        let oracle = OracleModel::new(pool.spec().clone(), 20).unwrap();
        let s = StrategyConfig::cde();
        let cfg = SessionConfig {
            user: UserModel::default(),
            horizon: 5,
            n_sessions: 200,
        };
        let rows = compare_strategies(&oracle, &pool, &[("a".into(), s), ("b".into(), s)], &cfg, 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean_watch_s, rows[1].mean_watch_s);
        assert_eq!(rows[0].se_plays, rows[1].se_plays);
        let mut buf = vec![];
        write_report(&mut buf, &["seed = 1".into()], &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap() == REPORT_HEADER);
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn pool_file_round_trip() {
        let pool = CandidatePool::risky_vs_safe(2, 3).unwrap();
        let back = CandidatePool::from_toml_str(&pool.to_toml_string()).unwrap();
        assert_eq!(back, pool);
        assert!(matches!(CandidatePool::from_toml_str("features = [[0.0]]\n"), Err(Error::Schema(_))));
        let extra = format!("bogus = 1\n{}", pool.to_toml_string());
        assert!(CandidatePool::from_toml_str(&extra).is_err());
    }

    proptest! {
        #[test]
        fn ordering_is_a_permutation(scores in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let mut order = order_by_score(&scores);
            for w in order.windows(2) {
                prop_assert!(scores[w[0]] >= scores[w[1]]);
                if scores[w[0]] == scores[w[1]] {
                    prop_assert!(w[0] < w[1]);
                }
            }
            order.sort();
            prop_assert_eq!(order, (0..scores.len()).collect::<Vec<_>>());
        }

        #[test]
        fn ordering_ignores_monotone_transforms(ticks in prop::collection::vec(-40i32..40, 1..40)) {
            let scores: Vec<f64> = ticks.iter().map(|&t| t as f64 / 8.0).collect();
            let transformed: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
            prop_assert_eq!(order_by_score(&scores), order_by_score(&transformed));
        }
    }
}
