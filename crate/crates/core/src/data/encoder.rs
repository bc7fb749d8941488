//! Feature encoding for interaction records.
//!
//! Output layout, for `n_num` numeric columns:
//!
//! ```text
//! [ standardized num_* columns | standardized ln(1 + duration) | hashed one-hot buckets ]
//! ```
//!
//! `user_id`, `item_id` and every `cat_*` value land in one of the remaining
//! `n_dims - n_num - 1` buckets. With no buckets left, categorical fields are
//! dropped.

use crate::data::record::{InteractionLog, InteractionRecord};
use crate::data::{Dataset, Example};
use crate::error::{invalid_arg, Error, Result};

pub const DEFAULT_N_DIMS: usize = 2048;
pub const DEFAULT_HASH_SEED: u64 = 0x5eed_cafe;

const DURATION_COLUMN: &str = "__log_duration";

#[derive(Debug, Clone, PartialEq)]
pub struct NumericStat {
    pub column: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoder {
    n_dims: usize,
    hash_seed: u64,
    categorical_columns: Vec<String>,
    /// One entry per numeric column plus the trailing duration feature.
    stats: Option<Vec<NumericStat>>,
}

/// 64-bit FNV-1a, seeded by hashing the seed bytes first.
fn fnv1a(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    seed.to_le_bytes().into_iter().for_each(&mut eat);
    for part in parts {
        part.iter().copied().for_each(&mut eat);
        eat(0xff);
    }
    h
}

impl FeatureEncoder {
    pub fn new(n_dims: usize, hash_seed: u64) -> Self {
        FeatureEncoder {
            n_dims,
            hash_seed,
            categorical_columns: vec![],
            stats: None,
        }
    }

    /// Rebuilds a fitted encoder from stored statistics.
    pub fn from_parts(
        n_dims: usize,
        hash_seed: u64,
        categorical_columns: Vec<String>,
        stats: Vec<NumericStat>,
    ) -> Result<Self> {
        if stats.is_empty() || stats.last().unwrap().column != DURATION_COLUMN {
            return Err(invalid_arg!("encoder statistics must end with the duration feature"));
        }
        if n_dims < stats.len() {
            return Err(invalid_arg!(
                "n_dims = {n_dims} cannot hold {} numeric features",
                stats.len()
            ));
        }
        Ok(FeatureEncoder {
            n_dims,
            hash_seed,
            categorical_columns,
            stats: Some(stats),
        })
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn categorical_columns(&self) -> &[String] {
        &self.categorical_columns
    }

    pub fn stats(&self) -> Option<&[NumericStat]> {
        self.stats.as_deref()
    }

    pub fn is_fitted(&self) -> bool {
        self.stats.is_some()
    }

    /// Learns per-column mean and standard deviation. A constant column gets
    /// standard deviation 1.
    pub fn fit(&mut self, log: &InteractionLog) -> Result<()> {
        let n_num = log.numeric_columns.len();
        if self.n_dims < n_num + 1 {
            return Err(invalid_arg!(
                "n_dims = {} cannot hold {} numeric features",
                self.n_dims,
                n_num + 1
            ));
        }
        let mut columns = log.numeric_columns.clone();
        columns.push(DURATION_COLUMN.to_string());
        let n = log.records.len().max(1) as f64;
        let mut stats = Vec::with_capacity(columns.len());
        for (c, column) in columns.into_iter().enumerate() {
            let value = |r: &InteractionRecord| numeric_value(r, c, n_num);
            let mean = log.records.iter().map(value).sum::<f64>() / n;
            let var = log
                .records
                .iter()
                .map(|r| (value(r) - mean).powi(2))
                .sum::<f64>()
                / n;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            stats.push(NumericStat { column, mean, std });
        }
        self.categorical_columns = log.categorical_columns.clone();
        self.stats = Some(stats);
        Ok(())
    }

    fn n_buckets(&self, n_numeric: usize) -> usize {
        self.n_dims - n_numeric
    }

    /// Bucket index (within the hashed block) for one categorical value.
    pub fn bucket(&self, field: &str, value: &str) -> Option<usize> {
        let n_numeric = self.stats.as_ref().map_or(1, Vec::len);
        let buckets = self.n_buckets(n_numeric);
        if buckets == 0 {
            return None;
        }
        Some((fnv1a(self.hash_seed, &[field.as_bytes(), value.as_bytes()]) % buckets as u64) as usize)
    }

    pub fn encode(&self, record: &InteractionRecord) -> Result<Vec<f64>> {
        let stats = self
            .stats
            .as_ref()
            .ok_or_else(|| Error::InvalidState("encoder has not been fitted".into()))?;
        let n_num = stats.len() - 1;
        if record.numeric_feats.len() != n_num {
            return Err(invalid_arg!(
                "record has {} numeric features, encoder expects {n_num}",
                record.numeric_feats.len()
            ));
        }
        if record.context.len() != self.categorical_columns.len() {
            return Err(invalid_arg!(
                "record has {} categorical features, encoder expects {}",
                record.context.len(),
                self.categorical_columns.len()
            ));
        }
        let mut out = vec![0.0; self.n_dims];
        for (c, s) in stats.iter().enumerate() {
            out[c] = (numeric_value(record, c, n_num) - s.mean) / s.std;
        }
        let offset = stats.len();
        let mut hot = |field: &str, value: &str| {
            if let Some(b) = self.bucket(field, value) {
                out[offset + b] = 1.0;
            }
        };
        hot("user_id", &record.user_id);
        hot("item_id", &record.item_id);
        for (col, val) in self.categorical_columns.iter().zip(&record.context) {
            hot(col, val);
        }
        Ok(out)
    }

    /// Encodes a whole log, checking that its columns match what was fitted.
    pub fn encode_log(&self, log: &InteractionLog) -> Result<Dataset> {
        let stats = self
            .stats
            .as_ref()
            .ok_or_else(|| Error::InvalidState("encoder has not been fitted".into()))?;
        let fitted_num: Vec<&str> = stats[..stats.len() - 1].iter().map(|s| s.column.as_str()).collect();
        let given_num: Vec<&str> = log.numeric_columns.iter().map(String::as_str).collect();
        if fitted_num != given_num || self.categorical_columns != log.categorical_columns {
            return Err(Error::Schema(format!(
                "feature columns {:?} / {:?} do not match the encoder's {:?} / {:?}",
                log.numeric_columns, log.categorical_columns, fitted_num, self.categorical_columns
            )));
        }
        let examples = log
            .records
            .iter()
            .map(|r| {
                Ok(Example {
                    features: self.encode(r)?,
                    watch_time: r.watch_time_s,
                    duration: r.duration_s,
                    user_id: r.user_id.clone(),
                    item_id: r.item_id.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset::new(examples))
    }
}

fn numeric_value(r: &InteractionRecord, c: usize, n_num: usize) -> f64 {
    if c < n_num {
        r.numeric_feats[c]
    } else {
        r.duration_s.ln_1p()
    }
}
