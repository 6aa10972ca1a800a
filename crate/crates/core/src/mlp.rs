//! Small fully-connected Q-network: ReLU hidden layers, linear output,
//! plain SGD on the squared TD error of the selected action.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OBS_DIM: usize = 28;
pub const HIDDEN: usize = 32;
pub const NUM_ACTIONS: usize = 4;
pub const DEFAULT_DIMS: [usize; 4] = [OBS_DIM, HIDDEN, HIDDEN, NUM_ACTIONS];
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("input length {got}, expected {expected}")]
    InputLen { got: usize, expected: usize },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape(Vec<usize>, Vec<usize>),
    #[error("action {0} out of range")]
    Action(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("learning rate must be > 0")]
    LearningRate,
    #[error("malformed model: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols`, one row per output unit.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Layer { rows, cols, weights: vec![0.0; rows * cols], biases: vec![0.0; rows] }
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            *o = self.biases[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Layer>,
}

/// One training sample: input, selected action and its TD target.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub input: &'a [f64],
    pub action: usize,
    pub target: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl QNetwork {
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2);
        QNetwork { layers: dims.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect() }
    }

    /// Uniform `[−1/√fan_in, 1/√fan_in]` weights and biases.
    pub fn new_random<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let mut net = QNetwork::zeros(dims);
        for l in &mut net.layers {
            let bound = 1.0 / (l.cols as f64).sqrt();
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = rng.random_range(-bound..=bound);
            }
        }
        net
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, MlpError> {
        if layers.is_empty() {
            return Err(MlpError::Parse("no layers".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.len() != l.rows * l.cols || l.biases.len() != l.rows {
                return Err(MlpError::Parse(format!("layer {k} has inconsistent sizes")));
            }
            if k > 0 && layers[k - 1].rows != l.cols {
                return Err(MlpError::Parse(format!("layer {k} does not chain")));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(MlpError::NonFinite("parameters"));
            }
        }
        Ok(QNetwork { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].cols];
        d.extend(self.layers.iter().map(|l| l.rows));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().rows
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// All parameters, layer by layer, weights then biases.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, MlpError> {
        self.check_input(input)?;
        let out = self.forward_trace(input).pop().unwrap();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(MlpError::NonFinite("output"));
        }
        Ok(out)
    }

    fn check_input(&self, input: &[f64]) -> Result<(), MlpError> {
        if input.len() != self.input_dim() {
            return Err(MlpError::InputLen { got: input.len(), expected: self.input_dim() });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(MlpError::NonFinite("input"));
        }
        Ok(())
    }

    /// Activations of every layer, input first.
    fn forward_trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; l.rows];
            l.affine(acts.last().unwrap(), &mut out);
            if k < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Gradient of `mean((Q(x)[a] − y)²)` over the batch, plus that loss.
    pub fn gradient(&self, batch: &[Sample]) -> Result<(Vec<Layer>, f64), MlpError> {
        if batch.is_empty() {
            return Err(MlpError::EmptyBatch);
        }
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect();
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for s in batch {
            self.check_input(s.input)?;
            if !s.target.is_finite() {
                return Err(MlpError::NonFinite("target"));
            }
            if s.action >= self.output_dim() {
                return Err(MlpError::Action(s.action));
            }
            let acts = self.forward_trace(s.input);
            let err = acts.last().unwrap()[s.action] - s.target;
            loss += err * err / n;
            let mut delta = vec![0.0; self.output_dim()];
            delta[s.action] = 2.0 * err / n;
            for k in (0..self.layers.len()).rev() {
                let l = &self.layers[k];
                let g = &mut grads[k];
                let x = &acts[k];
                for r in 0..l.rows {
                    if delta[r] == 0.0 {
                        continue;
                    }
                    g.biases[r] += delta[r];
                    let row = &mut g.weights[r * l.cols..(r + 1) * l.cols];
                    for (gw, xv) in row.iter_mut().zip(x) {
                        *gw += delta[r] * xv;
                    }
                }
                if k == 0 {
                    break;
                }
                let mut prev = vec![0.0; l.cols];
                for r in 0..l.rows {
                    if delta[r] == 0.0 {
                        continue;
                    }
                    let row = &l.weights[r * l.cols..(r + 1) * l.cols];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += delta[r] * w;
                    }
                }
                // ReLU derivative on the hidden activation feeding layer k
                for (p, a) in prev.iter_mut().zip(&acts[k]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((grads, loss))
    }

    /// One SGD step; returns the loss before the update.
    pub fn sgd_step(&mut self, batch: &[Sample], learning_rate: f64) -> Result<f64, MlpError> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(MlpError::LearningRate);
        }
        let (grads, loss) = self.gradient(batch)?;
        for (l, g) in self.layers.iter_mut().zip(&grads) {
            for (w, gw) in l.weights.iter_mut().zip(&g.weights) {
                *w -= learning_rate * gw;
            }
            for (b, gb) in l.biases.iter_mut().zip(&g.biases) {
                *b -= learning_rate * gb;
            }
        }
        Ok(loss)
    }

    pub fn copy_from(&mut self, src: &QNetwork) -> Result<(), MlpError> {
        if self.dims() != src.dims() {
            return Err(MlpError::Shape(self.dims(), src.dims()));
        }
        self.layers.clone_from(&src.layers);
        Ok(())
    }

    /// Elementwise parameter mean, accumulated as a running mean so that
    /// averaging identical networks returns them bit for bit.
    pub fn average(nets: &[&QNetwork]) -> Result<QNetwork, MlpError> {
        let mut acc = MeanAccumulator::default();
        for n in nets {
            acc.push(n)?;
        }
        acc.finish().ok_or(MlpError::EmptyBatch)
    }

    pub fn add_assign(&mut self, other: &QNetwork) -> Result<(), MlpError> {
        if self.dims() != other.dims() {
            return Err(MlpError::Shape(self.dims(), other.dims()));
        }
        for (a, b) in self.params_mut().zip(other.params()) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.params_mut().for_each(|p| *p *= factor);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("finite parameters serialize")
    }

    fn to_doc(&self) -> ModelDoc {
        ModelDoc {
            format_version: FORMAT_VERSION,
            layer_dims: self.dims(),
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.biases.clone()).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, MlpError> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| MlpError::Parse(e.to_string()))?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: ModelDoc) -> Result<Self, MlpError> {
        if doc.format_version != FORMAT_VERSION {
            return Err(MlpError::Parse(format!("unsupported format_version {}", doc.format_version)));
        }
        let n = doc.layer_dims.len();
        if n < 2 || doc.weights.len() != n - 1 || doc.biases.len() != n - 1 {
            return Err(MlpError::Parse("layer count does not match layer_dims".into()));
        }
        let layers = doc
            .weights
            .into_iter()
            .zip(doc.biases)
            .enumerate()
            .map(|(k, (weights, biases))| Layer { rows: doc.layer_dims[k + 1], cols: doc.layer_dims[k], weights, biases })
            .collect();
        Self::from_layers(layers)
    }

    /// Loads a model and checks it has the given layer dims.
    pub fn from_json_with_dims(text: &str, dims: &[usize]) -> Result<Self, MlpError> {
        let net = Self::from_json(text)?;
        if net.dims() != dims {
            return Err(MlpError::Shape(net.dims(), dims.to_vec()));
        }
        Ok(net)
    }
}

/// Running elementwise mean of networks, `m += (x − m)/k`.
#[derive(Debug, Clone, Default)]
pub struct MeanAccumulator {
    mean: Option<QNetwork>,
    count: usize,
}

impl MeanAccumulator {
    pub fn push(&mut self, net: &QNetwork) -> Result<(), MlpError> {
        self.count += 1;
        match &mut self.mean {
            None => self.mean = Some(net.clone()),
            Some(m) => {
                if m.dims() != net.dims() {
                    return Err(MlpError::Shape(m.dims(), net.dims()));
                }
                let k = self.count as f64;
                for (a, b) in m.params_mut().zip(net.params()) {
                    *a += (b - *a) / k;
                }
            }
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Option<QNetwork> {
        self.mean
    }
}

/// Serializes a list of agent networks into one document.
pub fn archive_to_json(nets: &[QNetwork]) -> String {
    let docs: Vec<ModelDoc> = nets.iter().map(QNetwork::to_doc).collect();
    serde_json::to_string(&docs).expect("finite parameters serialize")
}

pub fn archive_from_json(text: &str) -> Result<Vec<QNetwork>, MlpError> {
    let docs: Vec<ModelDoc> = serde_json::from_str(text).map_err(|e| MlpError::Parse(e.to_string()))?;
    docs.into_iter().map(QNetwork::from_doc).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = k;
        }
    }
    best
}
