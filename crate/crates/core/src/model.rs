//! The conditional quantile model: an MLP feeding the non-crossing head,
//! trained with the summed pinball loss.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, FeatureEncoder, NumericStat, SyntheticSpec};
use crate::error::{invalid_arg, Error, Result};
use crate::head::{head_backward, head_forward, QuantileEstimates, QuantileLevels};
use crate::loss::qr_loss_raw;
use crate::nn::{Layer, Matrix, MlpParams, OptState, Optimizer};

/// Initial bias of the increment layer, so every increment starts alive.
pub const HEAD_BIAS_INIT: f64 = 0.1;

/// Anything that maps a feature vector to quantile estimates on a grid.
pub trait QuantileModel {
    fn levels(&self) -> &QuantileLevels;
    fn input_dim(&self) -> usize;
    fn predict(&self, features: &[f64]) -> Result<QuantileEstimates>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_quantiles: usize,
    pub hidden_sizes: Vec<usize>,
    pub optimizer: Optimizer,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_quantiles: 100,
            hidden_sizes: vec![64, 32],
            optimizer: Optimizer::adam(),
            lr: 1e-3,
            epochs: 20,
            batch_size: 256,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_quantiles == 0 {
            return Err(invalid_arg!("n_quantiles must be at least 1"));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(invalid_arg!("hidden layer sizes must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid_arg!("lr must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            return Err(invalid_arg!("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid_arg!("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Trained network plus what is needed to score raw inputs.
///
/// The network is fit to `watch_time / target_scale`; predictions are scaled
/// back. The pinball loss is positively homogeneous, so this changes step
/// sizes but not the minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct CqeModel {
    params: MlpParams,
    levels: QuantileLevels,
    target_scale: f64,
    encoder: Option<FeatureEncoder>,
}

impl CqeModel {
    pub fn new(params: MlpParams, levels: QuantileLevels, target_scale: f64) -> Result<Self> {
        if params.output_dim() != levels.len() {
            return Err(invalid_arg!(
                "network emits {} values for {} quantile levels",
                params.output_dim(),
                levels.len()
            ));
        }
        if !(target_scale > 0.0 && target_scale.is_finite()) {
            return Err(invalid_arg!("target scale must be positive"));
        }
        Ok(CqeModel {
            params,
            levels,
            target_scale,
            encoder: None,
        })
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    pub fn encoder(&self) -> Option<&FeatureEncoder> {
        self.encoder.as_ref()
    }

    pub fn set_encoder(&mut self, encoder: FeatureEncoder) -> Result<()> {
        if encoder.n_dims() != self.params.input_dim() {
            return Err(invalid_arg!(
                "encoder emits {} features, network expects {}",
                encoder.n_dims(),
                self.params.input_dim()
            ));
        }
        self.encoder = Some(encoder);
        Ok(())
    }

    /// Raw head input for one example, before ReLU and cumulative sum.
    pub fn increments(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.params.predict(features)
    }
}

impl QuantileModel for CqeModel {
    fn levels(&self) -> &QuantileLevels {
        &self.levels
    }

    fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    fn predict(&self, features: &[f64]) -> Result<QuantileEstimates> {
        let raw = self.params.predict(features)?;
        Ok(head_forward(&raw).scaled(self.target_scale))
    }
}

/// Predicts the exact quantiles of a synthetic spec on a grid.
#[derive(Debug, Clone)]
pub struct OracleModel {
    spec: SyntheticSpec,
    levels: QuantileLevels,
}

impl OracleModel {
    pub fn new(spec: SyntheticSpec, n_quantiles: usize) -> Result<Self> {
        Ok(OracleModel {
            spec,
            levels: QuantileLevels::new(n_quantiles)?,
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }
}

impl QuantileModel for OracleModel {
    fn levels(&self) -> &QuantileLevels {
        &self.levels
    }

    fn input_dim(&self) -> usize {
        self.spec.n_features
    }

    fn predict(&self, features: &[f64]) -> Result<QuantileEstimates> {
        let dist = self.spec.dist_at(features)?;
        let values = self
            .levels
            .as_slice()
            .iter()
            .map(|&tau| dist.quantile(tau))
            .collect::<Result<Vec<_>>>()?;
        QuantileEstimates::new(values)
    }
}

/// Mean summed pinball loss of a batch, and the parameter gradient of that mean.
pub fn batch_loss_and_grad(
    params: &MlpParams,
    levels: &QuantileLevels,
    batch: &[(&[f64], f64)],
) -> Result<(f64, MlpParams)> {
    let mut grads = params.zeros_like();
    let loss = accumulate_batch(params, levels, batch, &mut grads)?;
    Ok((loss, grads))
}

fn accumulate_batch(
    params: &MlpParams,
    levels: &QuantileLevels,
    batch: &[(&[f64], f64)],
    grads: &mut MlpParams,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(invalid_arg!("empty batch"));
    }
    let inv = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for &(x, y) in batch {
        let (cache, raw) = params.forward(x)?;
        let t = head_forward(&raw);
        let loss = qr_loss_raw(y, t.as_slice(), levels)?;
        total += loss.value;
        let grad_t: Vec<f64> = loss.grad.iter().map(|g| g * inv).collect();
        let grad_raw = head_backward(&raw, &grad_t)?;
        params.backward_into(&cache, &grad_raw, grads)?;
    }
    Ok(total * inv)
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CqeModel,
    /// Mean per-example loss for each epoch, in seconds.
    pub loss_trace: Vec<f64>,
}

/// Fits a model with shuffled mini-batches. Fully determined by
/// `(dataset, config, seed)`.
pub fn train(dataset: &Dataset, config: &ModelConfig, seed: u64) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(invalid_arg!("cannot train on an empty dataset"));
    }
    let dim = dataset
        .dim()
        .ok_or_else(|| invalid_arg!("examples have inconsistent feature lengths"))?;
    if dataset.examples().iter().any(|e| !(e.watch_time >= 0.0 && e.watch_time.is_finite())) {
        return Err(invalid_arg!("watch times must be finite and non-negative"));
    }
    let levels = QuantileLevels::new(config.n_quantiles)?;

    let mean_target =
        dataset.examples().iter().map(|e| e.watch_time).sum::<f64>() / dataset.len() as f64;
    let target_scale = if mean_target > 0.0 { mean_target } else { 1.0 };

    let mut sizes = vec![dim];
    sizes.extend(&config.hidden_sizes);
    sizes.push(config.n_quantiles);
    let mut params = MlpParams::init(&sizes, seed)?;
    if let Some(out) = params.layers_mut().last_mut() {
        out.bias.iter_mut().for_each(|b| *b = HEAD_BIAS_INIT);
    }
    let mut opt = OptState::new(config.optimizer, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));

    let targets: Vec<f64> = dataset.examples().iter().map(|e| e.watch_time / target_scale).collect();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut grads = params.zeros_like();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk
                .iter()
                .map(|&i| (dataset.examples()[i].features.as_slice(), targets[i]))
                .collect();
            grads.iter_mut().for_each(|g| *g = 0.0);
            let loss = accumulate_batch(&params, &levels, &batch, &mut grads)?;
            if !loss.is_finite() {
                return Err(numeric_abort(epoch));
            }
            epoch_loss += loss * chunk.len() as f64;
            opt.step(&mut params, &grads, config.lr).map_err(|e| match e {
                Error::NumericFailure(_) => numeric_abort(epoch),
                other => other,
            })?;
        }
        let mean = epoch_loss / dataset.len() as f64 * target_scale;
        if !mean.is_finite() {
            return Err(numeric_abort(epoch));
        }
        trace.push(mean);
    }
    Ok(TrainOutcome {
        model: CqeModel::new(params, levels, target_scale)?,
        loss_trace: trace,
    })
}

fn numeric_abort(epoch: usize) -> Error {
    let last_good = match epoch {
        0 => "none".to_string(),
        e => (e - 1).to_string(),
    };
    Error::NumericFailure(format!(
        "loss became non-finite during epoch {epoch}; last good epoch: {last_good}"
    ))
}

const MODEL_MAGIC: &str = "cqe-model";
const MODEL_VERSION: u32 = 1;

impl CqeModel {
    /// Plain-text serialization. `header` lines are written as `#` comments.
    /// Floats use the shortest representation that round-trips.
    pub fn to_text(&self, header: &[String]) -> String {
        let mut s = String::new();
        writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION}").unwrap();
        for line in header {
            writeln!(s, "# {line}").unwrap();
        }
        writeln!(s, "quantiles {}", self.levels.len()).unwrap();
        writeln!(s, "target_scale {}", self.target_scale).unwrap();
        let sizes: Vec<String> = self.params.layer_sizes().iter().map(|v| v.to_string()).collect();
        writeln!(s, "layers {}", sizes.join(" ")).unwrap();
        for layer in self.params.layers() {
            writeln!(s, "weights").unwrap();
            for r in 0..layer.weights.rows() {
                writeln!(s, "{}", join_floats(layer.weights.row(r))).unwrap();
            }
            writeln!(s, "bias").unwrap();
            writeln!(s, "{}", join_floats(&layer.bias)).unwrap();
        }
        match &self.encoder {
            None => writeln!(s, "encoder none").unwrap(),
            Some(enc) => {
                let stats = enc.stats().unwrap_or(&[]);
                writeln!(
                    s,
                    "encoder {} {} {} {}",
                    enc.n_dims(),
                    enc.hash_seed(),
                    stats.len(),
                    enc.categorical_columns().len()
                )
                .unwrap();
                for st in stats {
                    writeln!(s, "numeric {} {} {}", st.column, st.mean, st.std).unwrap();
                }
                for c in enc.categorical_columns() {
                    writeln!(s, "categorical {c}").unwrap();
                }
            }
        }
        writeln!(s, "end").unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| -> Result<&str> {
            lines
                .next()
                .ok_or_else(|| Error::Schema(format!("model file ended while reading {what}")))
        };
        let magic = next("header")?;
        if magic != format!("{MODEL_MAGIC} {MODEL_VERSION}") {
            return Err(Error::Schema(format!("unsupported model header `{magic}`")));
        }
        let n_q: usize = parse_field(next("quantiles")?, "quantiles")?;
        let target_scale: f64 = parse_field(next("target_scale")?, "target_scale")?;
        let sizes_line = next("layers")?;
        let sizes: Vec<usize> = sizes_line
            .strip_prefix("layers ")
            .ok_or_else(|| Error::Schema("expected `layers`".into()))?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| Error::Schema(format!("bad layer size `{v}`"))))
            .collect::<Result<_>>()?;
        if sizes.len() < 2 {
            return Err(Error::Schema("model needs at least two layer sizes".into()));
        }
        let mut layers = vec![];
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            expect_line(next("weights")?, "weights")?;
            let mut data = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_out {
                let row = parse_floats(next("weight row")?)?;
                if row.len() != fan_in {
                    return Err(Error::Schema(format!("weight row has {} values, expected {fan_in}", row.len())));
                }
                data.extend(row);
            }
            expect_line(next("bias")?, "bias")?;
            let bias = parse_floats(next("bias values")?)?;
            layers.push(Layer {
                weights: Matrix::from_vec(fan_out, fan_in, data)?,
                bias,
            });
        }
        let params = MlpParams::from_layers(layers)?;
        let mut model = CqeModel::new(params, QuantileLevels::new(n_q)?, target_scale)?;

        let enc_line = next("encoder")?;
        let parts: Vec<&str> = enc_line.split_whitespace().collect();
        match parts.as_slice() {
            ["encoder", "none"] => {}
            ["encoder", n_dims, seed, n_num, n_cat] => {
                let n_dims: usize = n_dims.parse().map_err(|_| Error::Schema("bad encoder n_dims".into()))?;
                let seed: u64 = seed.parse().map_err(|_| Error::Schema("bad encoder seed".into()))?;
                let n_num: usize = n_num.parse().map_err(|_| Error::Schema("bad encoder stat count".into()))?;
                let n_cat: usize = n_cat.parse().map_err(|_| Error::Schema("bad encoder column count".into()))?;
                let mut stats = vec![];
                for _ in 0..n_num {
                    let l = next("numeric stat")?;
                    let f: Vec<&str> = l.split_whitespace().collect();
                    match f.as_slice() {
                        ["numeric", col, mean, std] => stats.push(NumericStat {
                            column: col.to_string(),
                            mean: mean.parse().map_err(|_| Error::Schema(format!("bad mean in `{l}`")))?,
                            std: std.parse().map_err(|_| Error::Schema(format!("bad std in `{l}`")))?,
                        }),
                        _ => return Err(Error::Schema(format!("expected numeric stat, got `{l}`"))),
                    }
                }
                let mut cats = vec![];
                for _ in 0..n_cat {
                    let l = next("categorical column")?;
                    let col = l
                        .strip_prefix("categorical ")
                        .ok_or_else(|| Error::Schema(format!("expected categorical column, got `{l}`")))?;
                    cats.push(col.to_string());
                }
                model.set_encoder(FeatureEncoder::from_parts(n_dims, seed, cats, stats)?)?;
            }
            _ => return Err(Error::Schema(format!("bad encoder line `{enc_line}`"))),
        }
        expect_line(next("end")?, "end")?;
        Ok(model)
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|v| v.parse().map_err(|_| Error::Schema(format!("bad number `{v}`"))))
        .collect()
}

fn parse_field<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    line.strip_prefix(key)
        .and_then(|rest| rest.trim().parse().ok())
        .ok_or_else(|| Error::Schema(format!("expected `{key} <value>`, got `{line}`")))
}

fn expect_line(line: &str, want: &str) -> Result<()> {
    if line == want {
        Ok(())
    } else {
        Err(Error::Schema(format!("expected `{want}`, got `{line}`")))
    }
}
