//! Dense feed-forward network with hand-written backpropagation.
//!
//! Hidden layers use ReLU, the output layer is affine. Weights are stored
//! row-major with shape `(out_dim, in_dim)`.
//!
//! Forward and backward skip zero inputs, so hashed one-hot features and dead
//! ReLU units cost nothing. The ReLU derivative at zero is taken as zero, which
//! makes "unit is active" and "activation is non-zero" the same test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid_arg, Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid_arg!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid_arg!("matrix entries must be finite"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// One affine layer: `z = W a + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Parameters of a ReLU MLP. Also used as the container for gradients and
/// optimizer moments, which share the exact same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
}

/// Activations recorded by [`MlpParams::forward`] for use by
/// [`MlpParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Indices of the non-zero entries of each layer input.
    active: Vec<Vec<usize>>,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(invalid_arg!(
                "an MLP needs at least an input and an output layer, got {} sizes",
                layer_sizes.len()
            ));
        }
        if let Some(pos) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(invalid_arg!("layer {pos} has size zero"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Layer {
                    weights: Matrix {
                        rows: fan_out,
                        cols: fan_in,
                        data,
                    },
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    /// Builds parameters from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid_arg!("at least one layer is required"));
        }
        let mut sizes = vec![layers[0].in_dim()];
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim() != *sizes.last().unwrap() {
                return Err(invalid_arg!(
                    "layer {i} expects {} inputs but previous layer emits {}",
                    layer.in_dim(),
                    sizes.last().unwrap()
                ));
            }
            if layer.bias.len() != layer.out_dim() {
                return Err(invalid_arg!("layer {i} bias length mismatch"));
            }
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(invalid_arg!("layer {i} has a zero dimension"));
            }
            if layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(invalid_arg!("layer {i} bias must be finite"));
            }
            sizes.push(layer.out_dim());
        }
        Ok(MlpParams {
            layer_sizes: sizes,
            layers,
        })
    }

    /// Same shape, all zeros.
    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layer_sizes: self.layer_sizes.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data.len() + l.bias.len())
            .sum()
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layer_sizes == other.layer_sizes
    }

    /// All parameters in a fixed order: per layer, weights then bias.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.data.iter_mut().chain(l.bias.iter_mut()))
    }

    fn flat_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weights.data.len();
            if index < nw {
                return &mut layer.weights.data[index];
            }
            index -= nw;
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn forward(&self, x: &[f64]) -> Result<(ForwardCache, Vec<f64>)> {
        if x.len() != self.input_dim() {
            return Err(invalid_arg!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            ));
        }
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut active = Vec::with_capacity(n_layers);
        let mut a = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let nz: Vec<usize> = (0..a.len()).filter(|&j| a[j] != 0.0).collect();
            let cols = layer.in_dim();
            let mut z = layer.bias.clone();
            for (i, zi) in z.iter_mut().enumerate() {
                let row = &layer.weights.data[i * cols..(i + 1) * cols];
                *zi += nz.iter().map(|&j| row[j] * a[j]).sum::<f64>();
            }
            if li + 1 < n_layers {
                for v in &mut z {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            inputs.push(std::mem::replace(&mut a, z));
            active.push(nz);
        }
        Ok((ForwardCache { inputs, active }, a))
    }

    /// Output only; no cache.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(_, out)| out)
    }

    /// Gradient of `output · grad_output` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<MlpParams> {
        let mut grads = self.zeros_like();
        self.backward_into(cache, grad_output, &mut grads)?;
        Ok(grads)
    }

    /// Like [`backward`](Self::backward) but adds into an existing gradient
    /// buffer, for mini-batch accumulation.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
        grads: &mut MlpParams,
    ) -> Result<()> {
        if cache.inputs.len() != self.layers.len()
            || cache
                .inputs
                .iter()
                .zip(&self.layer_sizes)
                .any(|(a, &n)| a.len() != n)
        {
            return Err(Error::InvalidState(
                "forward cache does not match network shape".into(),
            ));
        }
        if grad_output.len() != self.output_dim() {
            return Err(invalid_arg!(
                "grad_output has length {}, network emits {}",
                grad_output.len(),
                self.output_dim()
            ));
        }
        if !grads.same_shape(self) {
            return Err(invalid_arg!("gradient buffer shape mismatch"));
        }

        let mut delta = grad_output.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let a = &cache.inputs[li];
            let nz = &cache.active[li];
            let cols = layer.in_dim();
            let g = &mut grads.layers[li];
            for (i, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[i] += d;
                let grow = &mut g.weights.data[i * cols..(i + 1) * cols];
                for &j in nz {
                    grow[j] += d * a[j];
                }
            }
            if li == 0 {
                break;
            }
            // Only active units of the previous ReLU pass gradient back.
            let mut prev = vec![0.0; cols];
            for &j in nz {
                let mut s = 0.0;
                for (i, &d) in delta.iter().enumerate() {
                    s += layer.weights.data[i * cols + j] * d;
                }
                prev[j] = s;
            }
            delta = prev;
        }
        Ok(())
    }
}

/// Which update rule [`OptState::step`] applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state. Moment buffers exist only for Adam and mirror the
/// parameter shape.
#[derive(Debug, Clone)]
pub struct OptState {
    optimizer: Optimizer,
    first_moment: Option<MlpParams>,
    second_moment: Option<MlpParams>,
    steps: u64,
}

impl OptState {
    pub fn new(optimizer: Optimizer, params: &MlpParams) -> Self {
        let (first_moment, second_moment) = match optimizer {
            Optimizer::Sgd => (None, None),
            Optimizer::Adam { .. } => (Some(params.zeros_like()), Some(params.zeros_like())),
        };
        OptState {
            optimizer,
            first_moment,
            second_moment,
            steps: 0,
        }
    }

    pub fn optimizer(&self) -> Optimizer {
        self.optimizer
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(invalid_arg!("learning rate must be positive, got {lr}"));
        }
        if !grads.same_shape(params) {
            return Err(invalid_arg!("gradient shape does not match parameters"));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericFailure("non-finite gradient".into()));
        }
        self.steps += 1;
        match self.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grads.iter()) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let m = self.first_moment.as_mut().expect("adam moments");
                let v = self.second_moment.as_mut().expect("adam moments");
                if !m.same_shape(params) {
                    return Err(Error::InvalidState(
                        "optimizer state shape does not match parameters".into(),
                    ));
                }
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads.iter())
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Compares analytic gradients against central finite differences.
///
/// `loss_and_grad` must return the scalar loss and its analytic gradient at the
/// given parameters. Returns the largest
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)` over parameters.
pub fn grad_check<F>(params: &MlpParams, eps: f64, mut loss_and_grad: F) -> Result<f64>
where
    F: FnMut(&MlpParams) -> Result<(f64, MlpParams)>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid_arg!("finite-difference step must be positive, got {eps}"));
    }
    let (loss, analytic) = loss_and_grad(params)?;
    if !loss.is_finite() {
        return Err(Error::NumericFailure("loss is not finite".into()));
    }
    if !analytic.same_shape(params) {
        return Err(invalid_arg!("analytic gradient shape mismatch"));
    }
    let analytic: Vec<f64> = analytic.iter().copied().collect();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.flat_mut(i);
        *probe.flat_mut(i) = orig + eps;
        let (up, _) = loss_and_grad(&probe)?;
        *probe.flat_mut(i) = orig - eps;
        let (down, _) = loss_and_grad(&probe)?;
        *probe.flat_mut(i) = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NumericFailure(format!(
                "loss is not finite when perturbing parameter {i}"
            )));
        }
        let numeric = (up - down) / (2.0 * eps);
        let denom = a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
