use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NeuralError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Row-major `rows x cols` block of samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Self { rows: 1, cols: v.len(), data: v.to_vec() }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Side-by-side concatenation `[self | other]`.
    pub fn hcat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Matrix { rows: self.rows, cols, data }
    }

    /// Columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Matrix { rows: self.rows, cols: end - start, data }
    }
}

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs], activation }
    }

    /// Uniform in `±1/sqrt(inputs)` for weights and biases.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs, activation);
        for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *w = rng.random_range(-bound..=bound);
        }
        layer
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows, self.outputs);
        for r in 0..x.rows {
            let xr = x.row(r);
            let yr = out.row_mut(r);
            for (o, y) in yr.iter_mut().enumerate() {
                let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                let mut acc = self.bias[o];
                for (wi, xi) in w.iter().zip(xr) {
                    acc += wi * xi;
                }
                *y = self.activation.apply(acc);
            }
        }
        out
    }
}

/// Activations recorded by [`Mlp::forward_cached`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    pub activations: Vec<Matrix>,
    generation: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds the input at least")
    }
}

/// Parameter gradients shaped like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Flattened in [`Mlp::params`] order.
    pub fn flat(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.bias).flat_map(|(w, b)| w.iter().chain(b)).copied().collect()
    }
}

/// Feed-forward stack of [`Dense`] layers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    /// Bumped on every parameter change so stale caches are caught.
    #[serde(skip)]
    generation: u64,
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NeuralError> {
        if layers.is_empty() {
            return Err(NeuralError::Shape("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(NeuralError::Shape(format!(
                    "layer outputs {} do not feed inputs {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(NeuralError::Shape("parameter buffer size mismatch".into()));
            }
        }
        Ok(Self { layers, generation: 0 })
    }

    /// `sizes = [input, hidden..., output]`; hidden layers use `hidden`, the last `head`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, head: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::init(w[0], w[1], if i == last { head } else { hidden }, rng))
            .collect();
        Self { layers, generation: 0 }
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_len()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &Matrix) -> Result<(), NeuralError> {
        if x.cols != self.input_len() {
            return Err(NeuralError::Shape(format!("expected {} inputs, got {}", self.input_len(), x.cols)));
        }
        Ok(())
    }

    /// Batch forward pass without caching.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix, NeuralError> {
        self.check_input(x)?;
        let mut a = self.layers[0].forward(x);
        for l in &self.layers[1..] {
            a = l.forward(&a);
        }
        Ok(a)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        Ok(self.forward(&Matrix::row_vector(x))?.data)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache, NeuralError> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for l in &self.layers {
            let next = l.forward(activations.last().expect("nonempty"));
            activations.push(next);
        }
        Ok(ForwardCache { activations, generation: self.generation })
    }

    /// Reverse pass. `output_grad` is dLoss/dOutput for every sample; the
    /// returned gradients are summed over the batch, together with dLoss/dInput.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Matrix) -> Result<(Gradients, Matrix), NeuralError> {
        if cache.generation != self.generation || cache.activations.len() != self.layers.len() + 1 {
            return Err(NeuralError::StaleCache);
        }
        let out = cache.output();
        if output_grad.rows != out.rows || output_grad.cols != out.cols {
            return Err(NeuralError::Shape("output gradient shape mismatch".into()));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut upstream = output_grad.clone();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[li];
            let output = &cache.activations[li + 1];
            // delta = upstream ⊙ f'(z), in place
            for (d, y) in upstream.data.iter_mut().zip(&output.data) {
                *d *= layer.activation.derivative_from_output(*y);
            }
            let gw = &mut grads.weights[li];
            let gb = &mut grads.bias[li];
            let mut down = Matrix::zeros(input.rows, layer.inputs);
            for r in 0..input.rows {
                let xr = input.row(r);
                let dr = upstream.row(r);
                let gr = down.row_mut(r);
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    let g = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for i in 0..layer.inputs {
                        g[i] += d * xr[i];
                        gr[i] += d * w[i];
                    }
                }
            }
            upstream = down;
        }
        Ok((grads, upstream))
    }

    /// All parameters, layer by layer, weights before bias.
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias)).copied().collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), NeuralError> {
        if flat.len() != self.num_params() {
            return Err(NeuralError::Shape("flat parameter length mismatch".into()));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        self.touch();
        Ok(())
    }

    /// Mutable access to each parameter tensor; invalidates caches.
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.touch();
        self.layers.iter_mut().flat_map(|l| [&mut l.weights, &mut l.bias]).collect()
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias]).collect()
    }

    fn touch(&mut self) {
        self.generation = self.generation.wrapping_add(1);
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// `target <- tau * source + (1 - tau) * target`, elementwise.
pub fn polyak_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<(), NeuralError> {
    if !target.same_shape(source) {
        return Err(NeuralError::Shape("polyak update between different architectures".into()));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(NeuralError::Shape(format!("tau {tau} outside [0, 1]")));
    }
    let src = source.tensors();
    for (t, s) in target.tensors_mut().into_iter().zip(src) {
        for (tv, sv) in t.iter_mut().zip(s) {
            *tv = tau * sv + (1.0 - tau) * *tv;
        }
    }
    Ok(())
}
