//! Non-crossing quantile head.
//!
//! The network emits raw increments; the head clamps them at zero and takes a
//! running sum, so the resulting quantile vector can never decrease.

use crate::error::{invalid_arg, Result};

/// The fixed grid `levels[i] = (i + 1) / (n + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileLevels {
    levels: Vec<f64>,
}

impl QuantileLevels {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid_arg!("number of quantiles must be at least 1"));
        }
        let denom = (n + 1) as f64;
        Ok(QuantileLevels {
            levels: (1..=n).map(|i| i as f64 / denom).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.levels
    }

    pub fn first(&self) -> f64 {
        self.levels[0]
    }

    pub fn last(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }
}

/// Predicted watch times at each quantile level, non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileEstimates {
    values: Vec<f64>,
}

impl QuantileEstimates {
    /// Wraps values that must already be non-decreasing and non-negative.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid_arg!("quantile estimates must be finite and non-negative"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid_arg!("quantile estimates must be non-decreasing"));
        }
        Ok(QuantileEstimates { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        debug_assert!(factor >= 0.0);
        QuantileEstimates {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// `t[i] = sum_{j <= i} max(d_raw[j], 0)`.
pub fn head_forward(d_raw: &[f64]) -> QuantileEstimates {
    let mut acc = 0.0;
    let values = d_raw
        .iter()
        .map(|&d| {
            if d > 0.0 {
                acc += d;
            }
            acc
        })
        .collect();
    QuantileEstimates { values }
}

/// `grad_d_raw[j] = (sum_{i >= j} grad_t[i]) * 1[d_raw[j] > 0]`.
pub fn head_backward(d_raw: &[f64], grad_t: &[f64]) -> Result<Vec<f64>> {
    if d_raw.len() != grad_t.len() {
        return Err(invalid_arg!(
            "head input has {} entries but gradient has {}",
            d_raw.len(),
            grad_t.len()
        ));
    }
    let mut out = vec![0.0; d_raw.len()];
    let mut tail = 0.0;
    for j in (0..d_raw.len()).rev() {
        tail += grad_t[j];
        out[j] = if d_raw[j] > 0.0 { tail } else { 0.0 };
    }
    Ok(out)
}
