//! Watch-time prediction with a monotone multi-quantile network.
//!
//! A small MLP emits `N` raw values; the head turns them into non-decreasing
//! quantile estimates of the watch-time distribution at levels
//! `1/(N+1), ..., N/(N+1)`. Ranking scores are then read off that
//! distribution with one of three strategies (single quantile, quantile
//! interval, or expectation), and [`harness`] simulates sessions to compare
//! them.
//!
//! ```
//! use cqe::{head_forward, QuantileLevels, StrategyConfig};
//!
//! let levels = QuantileLevels::new(3).unwrap();
//! let est = head_forward(&[2.0, -1.0, 3.0]);
//! assert_eq!(est.as_slice(), &[2.0, 2.0, 5.0]);
//! let mean = StrategyConfig::cde().score(&est, &levels, None).unwrap();
//! assert!((mean - 3.125).abs() < 1e-12);
//! ```

pub mod data;
pub mod error;
pub mod evaluate;
pub mod harness;
pub mod head;
pub mod inference;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;

pub use error::{Error, Result};
pub use evaluate::{evaluate, Task};
pub use head::{head_backward, head_forward, QuantileEstimates, QuantileLevels};
pub use inference::{quantile_at, StrategyConfig, StrategyKind};
pub use model::{train, CqeModel, ModelConfig, OracleModel, QuantileModel, TrainOutcome};
pub use nn::{MlpParams, Optimizer};

/// Book chapters, compiled here so their snippets run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/head.md")]
    mod head {}
    #[doc = include_str!("../../../book/src/loss.md")]
    mod loss {}
    #[doc = include_str!("../../../book/src/strategies.md")]
    mod strategies {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
