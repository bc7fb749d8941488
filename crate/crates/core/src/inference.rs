//! Strategies that collapse a predicted quantile vector into one ranking score.
//!
//! * **CSE** (conservative): the value at a low level `tau_low`.
//! * **DQC** (dynamic combination): `k * t(tau_low) + (1 - k) * t(tau_high)`.
//! * **CDE** (conditional expectation): the mean of the piecewise-linear
//!   quantile function through the grid points, with flat extensions to 0 and 1.
//!
//! Levels that fall between grid points are read off by linear interpolation.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid_arg, Error, Result};
use crate::head::{QuantileEstimates, QuantileLevels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Cse,
    Dqc,
    Cde,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Cse => "cse",
            StrategyKind::Dqc => "dqc",
            StrategyKind::Cde => "cde",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cse" => Ok(StrategyKind::Cse),
            "dqc" => Ok(StrategyKind::Dqc),
            "cde" => Ok(StrategyKind::Cde),
            other => Err(invalid_arg!("unknown strategy `{other}` (expected cse, dqc or cde)")),
        }
    }
}

/// Strategy selection plus its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub tau_low: f64,
    pub tau_high: f64,
    pub k: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::Cde,
            tau_low: 0.25,
            tau_high: 0.7,
            k: 0.5,
        }
    }
}

impl StrategyConfig {
    pub fn cse(tau_low: f64) -> Self {
        StrategyConfig {
            kind: StrategyKind::Cse,
            tau_low,
            ..Default::default()
        }
    }

    pub fn dqc(tau_low: f64, tau_high: f64, k: f64) -> Self {
        StrategyConfig {
            kind: StrategyKind::Dqc,
            tau_low,
            tau_high,
            k,
        }
    }

    pub fn cde() -> Self {
        StrategyConfig {
            kind: StrategyKind::Cde,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, tau) in [("tau_low", self.tau_low), ("tau_high", self.tau_high)] {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(invalid_arg!("{name} must lie in (0, 1), got {tau}"));
            }
        }
        if !(0.0..=1.0).contains(&self.k) {
            return Err(invalid_arg!("k must lie in [0, 1], got {}", self.k));
        }
        if self.kind == StrategyKind::Dqc && self.tau_low >= self.tau_high {
            return Err(invalid_arg!(
                "tau_low ({}) must be below tau_high ({})",
                self.tau_low,
                self.tau_high
            ));
        }
        Ok(())
    }

    /// Scores one quantile vector. `k_override` replaces `self.k` for DQC.
    pub fn score(
        &self,
        estimates: &QuantileEstimates,
        levels: &QuantileLevels,
        k_override: Option<f64>,
    ) -> Result<f64> {
        match self.kind {
            StrategyKind::Cse => cse(estimates, levels, self.tau_low),
            StrategyKind::Dqc => dqc(
                estimates,
                levels,
                self.tau_low,
                self.tau_high,
                k_override.unwrap_or(self.k),
            ),
            StrategyKind::Cde => cde(estimates),
        }
    }
}

/// Reads the quantile function at `tau` by linear interpolation between grid
/// points, clamping to the outermost estimates outside the grid.
pub fn quantile_at(estimates: &QuantileEstimates, levels: &QuantileLevels, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid_arg!("quantile level must lie in (0, 1), got {tau}"));
    }
    if estimates.len() != levels.len() || estimates.is_empty() {
        return Err(invalid_arg!(
            "{} estimates for {} quantile levels",
            estimates.len(),
            levels.len()
        ));
    }
    let lv = levels.as_slice();
    let t = estimates.as_slice();
    if tau <= lv[0] {
        return Ok(t[0]);
    }
    if tau >= lv[lv.len() - 1] {
        return Ok(t[t.len() - 1]);
    }
    // First index with level > tau; guaranteed in 1..len by the checks above.
    let hi = lv.partition_point(|&l| l <= tau);
    let lo = hi - 1;
    if lv[lo] == tau {
        return Ok(t[lo]);
    }
    let w = (tau - lv[lo]) / (lv[hi] - lv[lo]);
    Ok(t[lo] + w * (t[hi] - t[lo]))
}

pub fn cse(estimates: &QuantileEstimates, levels: &QuantileLevels, tau_low: f64) -> Result<f64> {
    quantile_at(estimates, levels, tau_low)
}

pub fn dqc(
    estimates: &QuantileEstimates,
    levels: &QuantileLevels,
    tau_low: f64,
    tau_high: f64,
    k: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&k) {
        return Err(invalid_arg!("k must lie in [0, 1], got {k}"));
    }
    if tau_low >= tau_high {
        return Err(invalid_arg!("tau_low ({tau_low}) must be below tau_high ({tau_high})"));
    }
    let low = quantile_at(estimates, levels, tau_low)?;
    let high = quantile_at(estimates, levels, tau_high)?;
    Ok(k * low + (1.0 - k) * high)
}

/// `sum(t) / (N + 1) + (t_1 + t_N) / (2 (N + 1))`.
pub fn cde(estimates: &QuantileEstimates) -> Result<f64> {
    if estimates.is_empty() {
        return Err(invalid_arg!("cannot take the expectation of zero quantiles"));
    }
    let n1 = (estimates.len() + 1) as f64;
    let sum: f64 = estimates.as_slice().iter().sum();
    Ok(sum / n1 + (estimates.first() + estimates.last()) / (2.0 * n1))
}
