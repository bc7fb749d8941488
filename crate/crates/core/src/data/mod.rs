//! Interaction logs, feature encoding, labels and synthetic ground truth.

pub mod encoder;
pub mod record;
pub mod synth;

pub use encoder::{FeatureEncoder, NumericStat};
pub use record::{interest_label, load_csv, read_csv, write_csv, CsvSchema, InteractionLog, InteractionRecord};
pub use synth::{generate, true_mean, true_quantile, Affine, ConditionalDist, Family, SyntheticSpec, WatchDist};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One model-ready row.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub watch_time: f64,
    pub duration: f64,
    pub user_id: String,
    pub item_id: String,
}

impl Example {
    pub fn new(features: Vec<f64>, watch_time: f64) -> Self {
        Example {
            features,
            watch_time,
            duration: 0.0,
            user_id: String::new(),
            item_id: String::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Self {
        Dataset { examples }
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Feature dimension, or `None` when empty or ragged.
    pub fn dim(&self) -> Option<usize> {
        let d = self.examples.first()?.features.len();
        self.examples.iter().all(|e| e.features.len() == d).then_some(d)
    }

    /// Seeded shuffle, then the first `1 - holdout` fraction for training.
    pub fn split(&self, holdout: f64, seed: u64) -> (Dataset, Dataset) {
        let (train, test) = split_indices(self.len(), holdout, seed);
        (self.subset(&train), self.subset(&test))
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset::new(indices.iter().map(|&i| self.examples[i].clone()).collect())
    }
}

/// Index form of [`Dataset::split`], for keeping side data aligned.
pub fn split_indices(n: usize, holdout: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * holdout.clamp(0.0, 1.0)).round() as usize;
    let test = idx.split_off(n - n_test);
    (idx, test)
}

impl FromIterator<Example> for Dataset {
    fn from_iter<I: IntoIterator<Item = Example>>(iter: I) -> Self {
        Dataset::new(iter.into_iter().collect())
    }
}
