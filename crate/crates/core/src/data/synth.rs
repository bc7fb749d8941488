//! Synthetic watch-time data with a known conditional distribution.
//!
//! Features are drawn uniformly from a box. Each distribution parameter is an
//! affine function of the features, and the spec is rejected unless every
//! parameter stays valid over the whole box. Sampled watch times are capped at
//! `t_max`, and the quantile and mean oracles account for the same cap.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::Deserialize;
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::gamma_lr;

use crate::data::record::InteractionRecord;
use crate::data::{Dataset, Example};
use crate::error::{invalid_arg, Error, Result};

/// `intercept + coef · x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl Affine {
    pub fn constant(value: f64, n_features: usize) -> Self {
        Affine {
            intercept: value,
            coef: vec![0.0; n_features],
        }
    }

    pub fn new(intercept: f64, coef: Vec<f64>) -> Self {
        Affine { intercept, coef }
    }

    fn from_list(name: &str, v: &[f64]) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::Schema(format!("`{name}` needs at least an intercept")));
        }
        Ok(Affine {
            intercept: v[0],
            coef: v[1..].to_vec(),
        })
    }

    fn to_list(&self) -> Vec<f64> {
        std::iter::once(self.intercept).chain(self.coef.iter().copied()).collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    fn range_over_box(&self, lo: f64, hi: f64) -> (f64, f64) {
        let mut min = self.intercept;
        let mut max = self.intercept;
        for &c in &self.coef {
            min += (c * lo).min(c * hi);
            max += (c * lo).max(c * hi);
        }
        (min, max)
    }
}

/// Parametric family with feature-dependent parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    LogNormal {
        mu: Affine,
        sigma: Affine,
    },
    Gamma {
        shape: Affine,
        scale: Affine,
    },
    /// Two log-normal components; `weight` is the probability of the first.
    Mixture {
        weight: Affine,
        mu1: Affine,
        sigma1: Affine,
        mu2: Affine,
        sigma2: Affine,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::LogNormal { .. } => "lognormal",
            Family::Gamma { .. } => "gamma",
            Family::Mixture { .. } => "mixture",
        }
    }

    fn params(&self) -> Vec<(&'static str, &Affine)> {
        match self {
            Family::LogNormal { mu, sigma } => vec![("mu", mu), ("sigma", sigma)],
            Family::Gamma { shape, scale } => vec![("shape", shape), ("scale", scale)],
            Family::Mixture {
                weight,
                mu1,
                sigma1,
                mu2,
                sigma2,
            } => vec![
                ("weight", weight),
                ("mu1", mu1),
                ("sigma1", sigma1),
                ("mu2", mu2),
                ("sigma2", sigma2),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub family: Family,
    pub n_features: usize,
    pub feature_low: f64,
    pub feature_high: f64,
    /// Cap on watch time, seconds.
    pub t_max: f64,
    pub duration_low: f64,
    pub duration_high: f64,
    pub n_users: usize,
    pub n_items: usize,
}

/// Flat on-disk form of [`SyntheticSpec`]. `seed` and `n_rows` are
/// provenance fields written next to generated data.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    family: String,
    n_features: Option<usize>,
    feature_low: Option<f64>,
    feature_high: Option<f64>,
    t_max: Option<f64>,
    duration_low: Option<f64>,
    duration_high: Option<f64>,
    n_users: Option<usize>,
    n_items: Option<usize>,
    mu: Option<Vec<f64>>,
    sigma: Option<Vec<f64>>,
    shape: Option<Vec<f64>>,
    scale: Option<Vec<f64>>,
    weight: Option<Vec<f64>>,
    mu1: Option<Vec<f64>>,
    sigma1: Option<Vec<f64>>,
    mu2: Option<Vec<f64>>,
    sigma2: Option<Vec<f64>>,
    #[allow(dead_code)]
    seed: Option<u64>,
    #[allow(dead_code)]
    n_rows: Option<usize>,
}

pub const DEFAULT_T_MAX: f64 = 300.0;

impl SyntheticSpec {
    fn with_family(family: Family, n_features: usize) -> Self {
        SyntheticSpec {
            family,
            n_features,
            feature_low: -1.0,
            feature_high: 1.0,
            t_max: DEFAULT_T_MAX,
            duration_low: 5.0,
            duration_high: 120.0,
            n_users: 100,
            n_items: 1000,
        }
    }

    pub fn lognormal(mu: Affine, sigma: Affine) -> Result<Self> {
        let n = mu.coef.len();
        let spec = Self::with_family(Family::LogNormal { mu, sigma }, n);
        spec.validate()?;
        Ok(spec)
    }

    pub fn gamma(shape: Affine, scale: Affine) -> Result<Self> {
        let n = shape.coef.len();
        let spec = Self::with_family(Family::Gamma { shape, scale }, n);
        spec.validate()?;
        Ok(spec)
    }

    pub fn mixture(weight: Affine, mu1: Affine, sigma1: Affine, mu2: Affine, sigma2: Affine) -> Result<Self> {
        let n = weight.coef.len();
        let spec = Self::with_family(
            Family::Mixture {
                weight,
                mu1,
                sigma1,
                mu2,
                sigma2,
            },
            n,
        );
        spec.validate()?;
        Ok(spec)
    }

    /// Heteroscedastic log-normal over two features, median ~20 s.
    pub fn example_lognormal() -> Self {
        Self::lognormal(
            Affine::new(3.0, vec![0.5, -0.3]),
            Affine::new(0.5, vec![0.0, 0.2]),
        )
        .expect("valid built-in spec")
    }

    /// Skip-or-engage mixture: a short "skip" mode that holds the median in
    /// place, and a long "engaged" mode whose location moves with the first
    /// feature.
    pub fn example_skip_or_engage() -> Self {
        Self::mixture(
            Affine::new(0.55, vec![0.0, 0.0]),
            Affine::new(1.2, vec![0.0, 0.0]),
            Affine::new(0.3, vec![0.0, 0.0]),
            Affine::new(4.0, vec![0.8, 0.0]),
            Affine::new(0.3, vec![0.0, 0.0]),
        )
        .expect("valid built-in spec")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(invalid_arg!("at least one feature is required"));
        }
        if !(self.feature_low <= self.feature_high) || !self.feature_low.is_finite() || !self.feature_high.is_finite() {
            return Err(invalid_arg!(
                "feature range [{}, {}] is empty",
                self.feature_low,
                self.feature_high
            ));
        }
        if !(self.t_max > 0.0) {
            return Err(invalid_arg!("t_max must be positive, got {}", self.t_max));
        }
        if !(self.duration_low > 0.0 && self.duration_low <= self.duration_high && self.duration_high.is_finite()) {
            return Err(invalid_arg!(
                "duration range [{}, {}] must be positive and non-empty",
                self.duration_low,
                self.duration_high
            ));
        }
        if self.n_users == 0 || self.n_items == 0 {
            return Err(invalid_arg!("n_users and n_items must be positive"));
        }
        for (name, a) in self.family.params() {
            if a.coef.len() != self.n_features {
                return Err(invalid_arg!(
                    "`{name}` has {} coefficients, expected {}",
                    a.coef.len(),
                    self.n_features
                ));
            }
            if !a.intercept.is_finite() || a.coef.iter().any(|c| !c.is_finite()) {
                return Err(invalid_arg!("`{name}` coefficients must be finite"));
            }
            let (min, max) = a.range_over_box(self.feature_low, self.feature_high);
            let ok = match name {
                "sigma" | "sigma1" | "sigma2" => min >= 0.0,
                "shape" | "scale" => min > 0.0,
                "weight" => min > 0.0 && max < 1.0,
                _ => true,
            };
            if !ok {
                return Err(invalid_arg!(
                    "`{name}` ranges over [{min}, {max}] on the feature box, outside its valid domain"
                ));
            }
        }
        Ok(())
    }

    /// Parses the flat `key = value` spec file format.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: SpecFile = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let need = |name: &str, v: &Option<Vec<f64>>| -> Result<Affine> {
            match v {
                Some(list) => Affine::from_list(name, list),
                None => Err(Error::Schema(format!(
                    "family `{}` requires field `{name}`",
                    raw.family
                ))),
            }
        };
        let forbid = |names: &[(&str, bool)]| -> Result<()> {
            for (name, present) in names {
                if *present {
                    return Err(Error::Schema(format!(
                        "field `{name}` does not apply to family `{}`",
                        raw.family
                    )));
                }
            }
            Ok(())
        };
        let family = match raw.family.as_str() {
            "lognormal" => {
                forbid(&[
                    ("shape", raw.shape.is_some()),
                    ("scale", raw.scale.is_some()),
                    ("weight", raw.weight.is_some()),
                    ("mu1", raw.mu1.is_some()),
                    ("sigma1", raw.sigma1.is_some()),
                    ("mu2", raw.mu2.is_some()),
                    ("sigma2", raw.sigma2.is_some()),
                ])?;
                Family::LogNormal {
                    mu: need("mu", &raw.mu)?,
                    sigma: need("sigma", &raw.sigma)?,
                }
            }
            "gamma" => {
                forbid(&[
                    ("mu", raw.mu.is_some()),
                    ("sigma", raw.sigma.is_some()),
                    ("weight", raw.weight.is_some()),
                    ("mu1", raw.mu1.is_some()),
                    ("sigma1", raw.sigma1.is_some()),
                    ("mu2", raw.mu2.is_some()),
                    ("sigma2", raw.sigma2.is_some()),
                ])?;
                Family::Gamma {
                    shape: need("shape", &raw.shape)?,
                    scale: need("scale", &raw.scale)?,
                }
            }
            "mixture" => {
                forbid(&[
                    ("mu", raw.mu.is_some()),
                    ("sigma", raw.sigma.is_some()),
                    ("shape", raw.shape.is_some()),
                    ("scale", raw.scale.is_some()),
                ])?;
                Family::Mixture {
                    weight: need("weight", &raw.weight)?,
                    mu1: need("mu1", &raw.mu1)?,
                    sigma1: need("sigma1", &raw.sigma1)?,
                    mu2: need("mu2", &raw.mu2)?,
                    sigma2: need("sigma2", &raw.sigma2)?,
                }
            }
            other => {
                return Err(Error::Schema(format!(
                    "field `family`: unknown family `{other}` (expected lognormal, gamma or mixture)"
                )))
            }
        };
        let inferred = family.params()[0].1.coef.len();
        let mut spec = Self::with_family(family, raw.n_features.unwrap_or(inferred));
        if let Some(v) = raw.feature_low {
            spec.feature_low = v;
        }
        if let Some(v) = raw.feature_high {
            spec.feature_high = v;
        }
        if let Some(v) = raw.t_max {
            spec.t_max = v;
        }
        if let Some(v) = raw.duration_low {
            spec.duration_low = v;
        }
        if let Some(v) = raw.duration_high {
            spec.duration_high = v;
        }
        if let Some(v) = raw.n_users {
            spec.n_users = v;
        }
        if let Some(v) = raw.n_items {
            spec.n_items = v;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Serializes in the same format [`from_toml_str`](Self::from_toml_str)
    /// reads, optionally recording generation provenance.
    pub fn to_toml_string(&self, provenance: Option<(u64, usize)>) -> String {
        let mut s = String::new();
        let list = |v: Vec<f64>| {
            let items: Vec<String> = v.iter().map(|x| fmt_float(*x)).collect();
            format!("[{}]", items.join(", "))
        };
        writeln!(s, "family = \"{}\"", self.family.name()).unwrap();
        writeln!(s, "n_features = {}", self.n_features).unwrap();
        writeln!(s, "feature_low = {}", fmt_float(self.feature_low)).unwrap();
        writeln!(s, "feature_high = {}", fmt_float(self.feature_high)).unwrap();
        writeln!(s, "t_max = {}", fmt_float(self.t_max)).unwrap();
        writeln!(s, "duration_low = {}", fmt_float(self.duration_low)).unwrap();
        writeln!(s, "duration_high = {}", fmt_float(self.duration_high)).unwrap();
        writeln!(s, "n_users = {}", self.n_users).unwrap();
        writeln!(s, "n_items = {}", self.n_items).unwrap();
        for (name, a) in self.family.params() {
            writeln!(s, "{name} = {}", list(a.to_list())).unwrap();
        }
        if let Some((seed, n)) = provenance {
            writeln!(s, "seed = {seed}").unwrap();
            writeln!(s, "n_rows = {n}").unwrap();
        }
        s
    }

    /// Resolves the distribution of watch time at one feature vector.
    pub fn dist_at(&self, x: &[f64]) -> Result<ConditionalDist> {
        if x.len() != self.n_features {
            return Err(invalid_arg!(
                "feature vector has length {}, spec expects {}",
                x.len(),
                self.n_features
            ));
        }
        let dist = match &self.family {
            Family::LogNormal { mu, sigma } => WatchDist::LogNormal {
                mu: mu.eval(x),
                sigma: sigma.eval(x).max(0.0),
            },
            Family::Gamma { shape, scale } => WatchDist::Gamma {
                shape: shape.eval(x),
                scale: scale.eval(x),
            },
            Family::Mixture {
                weight,
                mu1,
                sigma1,
                mu2,
                sigma2,
            } => WatchDist::Mixture {
                weight: weight.eval(x),
                first: (mu1.eval(x), sigma1.eval(x).max(0.0)),
                second: (mu2.eval(x), sigma2.eval(x).max(0.0)),
            },
        };
        Ok(ConditionalDist {
            dist,
            t_max: self.t_max,
        })
    }

    pub fn sample_features<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.n_features)
            .map(|_| rng.random_range(self.feature_low..=self.feature_high))
            .collect()
    }

    pub fn numeric_columns(&self) -> Vec<String> {
        (0..self.n_features).map(|j| format!("num_x{j}")).collect()
    }
}

fn fmt_float(v: f64) -> String {
    let s = v.to_string();
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

/// Uncapped watch-time distribution at one feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WatchDist {
    LogNormal { mu: f64, sigma: f64 },
    Gamma { shape: f64, scale: f64 },
    Mixture { weight: f64, first: (f64, f64), second: (f64, f64) },
}

/// A [`WatchDist`] observed through the cap `min(W, t_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalDist {
    pub dist: WatchDist,
    pub t_max: f64,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

fn lognormal_cdf(mu: f64, sigma: f64, w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    if sigma == 0.0 {
        return if w >= mu.exp() { 1.0 } else { 0.0 };
    }
    std_normal_cdf((w.ln() - mu) / sigma)
}

/// E[min(W, t)] for log-normal W.
fn lognormal_capped_mean(mu: f64, sigma: f64, t: f64) -> f64 {
    if sigma == 0.0 {
        return mu.exp().min(t);
    }
    let lt = t.ln();
    (mu + 0.5 * sigma * sigma).exp() * std_normal_cdf((lt - mu - sigma * sigma) / sigma)
        + t * (1.0 - std_normal_cdf((lt - mu) / sigma))
}

/// Smallest w with cdf(w) >= p, by bisection between `lo` and `hi`.
fn invert_cdf(p: f64, mut lo: f64, mut hi: f64, cdf: impl Fn(f64) -> f64) -> f64 {
    while cdf(hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

impl WatchDist {
    pub fn cdf(&self, w: f64) -> f64 {
        match *self {
            WatchDist::LogNormal { mu, sigma } => lognormal_cdf(mu, sigma, w),
            WatchDist::Gamma { shape, scale } => {
                if w <= 0.0 {
                    0.0
                } else {
                    gamma_lr(shape, w / scale)
                }
            }
            WatchDist::Mixture { weight, first, second } => {
                weight * lognormal_cdf(first.0, first.1, w) + (1.0 - weight) * lognormal_cdf(second.0, second.1, w)
            }
        }
    }

    pub fn quantile(&self, tau: f64) -> f64 {
        match *self {
            WatchDist::LogNormal { mu, sigma } => (mu + sigma * std_normal_quantile(tau)).exp(),
            WatchDist::Gamma { shape, scale } => {
                let start = (shape * scale).max(1e-12);
                invert_cdf(tau, 0.0, start, |w| self.cdf(w))
            }
            WatchDist::Mixture { first, second, .. } => {
                let a = WatchDist::LogNormal { mu: first.0, sigma: first.1 }.quantile(tau);
                let b = WatchDist::LogNormal { mu: second.0, sigma: second.1 }.quantile(tau);
                // The mixture quantile lies between the component quantiles.
                let (lo, hi) = (a.min(b), a.max(b));
                if lo == hi {
                    return lo;
                }
                invert_cdf(tau, lo * (1.0 - 1e-12), hi, |w| self.cdf(w))
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            WatchDist::LogNormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * z).exp()
            }
            WatchDist::Gamma { shape, scale } => Gamma::new(shape, scale)
                .expect("validated gamma parameters")
                .sample(rng),
            WatchDist::Mixture { weight, first, second } => {
                let u: f64 = rng.random();
                let (mu, sigma) = if u < weight { first } else { second };
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * z).exp()
            }
        }
    }
}

impl ConditionalDist {
    pub fn cdf(&self, w: f64) -> f64 {
        if w >= self.t_max {
            1.0
        } else {
            self.dist.cdf(w)
        }
    }

    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(invalid_arg!("quantile level must lie in (0, 1), got {tau}"));
        }
        Ok(self.dist.quantile(tau).min(self.t_max))
    }

    /// E[min(W, t_max)] in closed form.
    pub fn mean(&self) -> f64 {
        let t = self.t_max;
        match self.dist {
            WatchDist::LogNormal { mu, sigma } => lognormal_capped_mean(mu, sigma, t),
            WatchDist::Gamma { shape, scale } => {
                let z = t / scale;
                shape * scale * gamma_lr(shape + 1.0, z) + t * (1.0 - gamma_lr(shape, z))
            }
            WatchDist::Mixture { weight, first, second } => {
                weight * lognormal_capped_mean(first.0, first.1, t)
                    + (1.0 - weight) * lognormal_capped_mean(second.0, second.1, t)
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.dist.sample(rng).min(self.t_max)
    }
}

/// Quantile of the capped conditional distribution at `x`.
pub fn true_quantile(spec: &SyntheticSpec, x: &[f64], tau: f64) -> Result<f64> {
    spec.dist_at(x)?.quantile(tau)
}

/// Mean of the capped conditional distribution at `x`.
pub fn true_mean(spec: &SyntheticSpec, x: &[f64]) -> Result<f64> {
    Ok(spec.dist_at(x)?.mean())
}

/// Draws `n` rows. Features are stored raw, so the dataset can be fed to
/// training directly or written out as `num_x*` columns.
pub fn generate(spec: &SyntheticSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(invalid_arg!("cannot generate an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let features = spec.sample_features(&mut rng);
        let watch_time = spec.dist_at(&features)?.sample(&mut rng);
        let duration = rng.random_range(spec.duration_low..=spec.duration_high);
        let user = rng.random_range(0..spec.n_users);
        let item = rng.random_range(0..spec.n_items);
        examples.push(Example {
            features,
            watch_time,
            duration,
            user_id: format!("u{user}"),
            item_id: format!("i{item}"),
        });
    }
    Ok(Dataset::new(examples))
}

/// Converts generated rows to records whose `num_*` columns are the raw
/// features.
pub fn to_records(dataset: &Dataset) -> Vec<InteractionRecord> {
    dataset
        .examples()
        .iter()
        .map(|e| InteractionRecord {
            user_id: e.user_id.clone(),
            item_id: e.item_id.clone(),
            context: vec![],
            numeric_feats: e.features.clone(),
            duration_s: e.duration,
            watch_time_s: e.watch_time,
        })
        .collect()
}
