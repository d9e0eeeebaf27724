//! MLP sequence model over summary statistics of the action's history.
//!
//! Input layout: `[Z^{(a)}, x_t, vec((XᵀX + εI)^{-1}), XᵀY / n_norm, n / n_norm]`
//! where `n` is the number of past observations for the action. Hidden layers
//! use ReLU (subgradient 0 at 0); the scalar output goes through the logistic
//! function to give `P(Y = 1)`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SequenceModel, SummaryStats};
use crate::env::logistic_fn;
use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

pub const MODEL_FORMAT: &str = "genban-mlp";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Fully connected layer; `w` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            w: Array2::zeros((n_out, n_in)),
            b: Array1::zeros(n_out),
        }
    }

    fn glorot(n_in: usize, n_out: usize, rng: &mut RngStream) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((n_out, n_in), || rng.gen_range(-limit..=limit));
        Self {
            w,
            b: Array1::zeros(n_out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSeqModel {
    d_z: usize,
    d_x: usize,
    hidden: Vec<usize>,
    eps: f64,
    count_norm: f64,
    layers: Vec<Dense>,
}

/// Gradient with the same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<Dense>,
}

impl MlpGrad {
    pub fn add_assign(&mut self, other: &MlpGrad) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.w *= s;
            l.b *= s;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.w.iter());
        out.extend(l.b.iter());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpState {
    z: Vec<f64>,
    stats: SummaryStats,
}

impl MlpState {
    pub fn stats(&self) -> &SummaryStats {
        &self.stats
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }
}

/// Where a model file came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProvenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpFile {
    format: String,
    version: u32,
    d_z: usize,
    d_x: usize,
    hidden: Vec<usize>,
    eps: f64,
    count_norm: f64,
    #[serde(default)]
    provenance: Option<ModelProvenance>,
    /// Little-endian f64s, layer by layer: `w` row-major then `b`.
    weights_hex: String,
}

#[inline]
fn nll_term(p: f64, y: f64) -> f64 {
    let p = p.clamp(crate::training::PROB_CLAMP, 1.0 - crate::training::PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

impl MlpSeqModel {
    fn validate_dims(d_z: usize, d_x: usize, eps: f64, count_norm: f64) -> Result<()> {
        if d_x == 0 {
            return Err(Error::Config("context dimension must be positive".into()));
        }
        if !(eps > 0.0) {
            return Err(Error::Config("ridge constant must be positive".into()));
        }
        if !(count_norm > 0.0) {
            return Err(Error::Config("count normalizer must be positive".into()));
        }
        let _ = d_z;
        Ok(())
    }

    fn layer_sizes(d_in: usize, hidden: &[usize]) -> Vec<(usize, usize)> {
        let mut sizes = Vec::new();
        let mut n_in = d_in;
        for &h in hidden {
            sizes.push((n_in, h));
            n_in = h;
        }
        sizes.push((n_in, 1));
        sizes
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new(d_z: usize, d_x: usize, hidden: &[usize], eps: f64, count_norm: f64, rng: &mut RngStream) -> Result<Self> {
        Self::validate_dims(d_z, d_x, eps, count_norm)?;
        let d_in = Self::input_dim_for(d_z, d_x);
        let layers = Self::layer_sizes(d_in, hidden)
            .into_iter()
            .map(|(i, o)| Dense::glorot(i, o, rng))
            .collect();
        Ok(Self {
            d_z,
            d_x,
            hidden: hidden.to_vec(),
            eps,
            count_norm,
            layers,
        })
    }

    /// All weights and biases zero: predicts 0.5 everywhere.
    pub fn zeros(d_z: usize, d_x: usize, hidden: &[usize], eps: f64, count_norm: f64) -> Result<Self> {
        Self::validate_dims(d_z, d_x, eps, count_norm)?;
        let d_in = Self::input_dim_for(d_z, d_x);
        let layers = Self::layer_sizes(d_in, hidden)
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Ok(Self {
            d_z,
            d_x,
            hidden: hidden.to_vec(),
            eps,
            count_norm,
            layers,
        })
    }

    pub fn input_dim_for(d_z: usize, d_x: usize) -> usize {
        d_z + d_x + d_x * d_x + d_x + 1
    }

    pub fn input_dim(&self) -> usize {
        Self::input_dim_for(self.d_z, self.d_x)
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn count_norm(&self) -> f64 {
        self.count_norm
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        Self::layer_sizes(self.input_dim(), &self.hidden)
            .iter()
            .map(|(i, o)| i * o + o)
            .sum()
    }

    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        check_dim(self.param_count(), flat.len())?;
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|v| *v = it.next().unwrap());
            l.b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn zero_grad(&self) -> MlpGrad {
        MlpGrad {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.w.ncols(), l.w.nrows()))
                .collect(),
        }
    }

    /// Writes the input vector for `(z, stats, x)` into `out`.
    pub fn write_features(&self, z: &[f64], stats: &SummaryStats, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.d_z, z.len())?;
        check_dim(self.d_x, x.len())?;
        check_dim(self.d_x, stats.dim())?;
        check_dim(self.input_dim(), out.len())?;
        let inv = stats.ridge_inverse(self.eps)?;
        let mut k = 0;
        for v in z.iter().chain(x).chain(inv.as_slice()) {
            out[k] = *v;
            k += 1;
        }
        for v in stats.xty() {
            out[k] = v / self.count_norm;
            k += 1;
        }
        out[k] = stats.count() as f64 / self.count_norm;
        Ok(())
    }

    pub fn features(&self, z: &[f64], stats: &SummaryStats, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.input_dim()];
        self.write_features(z, stats, x, &mut out)?;
        Ok(out)
    }

    /// Output logit for one input vector.
    pub fn logit(&self, input: &[f64]) -> f64 {
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let n_in = l.w.ncols();
            let w = l.w.as_slice().expect("standard layout");
            next.clear();
            next.extend(l.b.iter().enumerate().map(|(o, b)| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let s = b + row.iter().zip(&cur).map(|(a, c)| a * c).sum::<f64>();
                if li < last {
                    s.max(0.0)
                } else {
                    s
                }
            }));
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Logits for a batch of input rows.
    pub fn logits_batch(&self, inputs: ArrayView2<f64>) -> Array1<f64> {
        let mut h = inputs.to_owned();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.w.t());
            z += &l.b;
            if li < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        h.column(0).to_owned()
    }

    /// Summed NLL over the batch and its gradient.
    pub fn loss_and_grad(&self, inputs: ArrayView2<f64>, targets: &[f64]) -> (f64, MlpGrad) {
        let (rows, g) = self.row_losses_and_grad(inputs, targets);
        (rows.iter().sum(), g)
    }

    /// Per-row NLL and the gradient of their sum.
    pub fn row_losses_and_grad(&self, inputs: ArrayView2<f64>, targets: &[f64]) -> (Vec<f64>, MlpGrad) {
        let n = inputs.nrows();
        assert_eq!(n, targets.len());
        let n_layers = self.layers.len();
        // activations[l] is the input to layer l
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(n_layers + 1);
        activations.push(inputs.to_owned());
        for (li, l) in self.layers.iter().enumerate() {
            let mut z = activations[li].dot(&l.w.t());
            z += &l.b;
            if li + 1 < n_layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(z);
        }
        let logits = activations[n_layers].column(0).to_owned();
        let mut loss = Vec::with_capacity(n);
        let mut delta = Array2::<f64>::zeros((n, 1));
        for (i, (&s, &y)) in logits.iter().zip(targets).enumerate() {
            let p = logistic_fn(s);
            loss.push(nll_term(p, y));
            delta[[i, 0]] = p - y;
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(n_layers);
        for li in (0..n_layers).rev() {
            let a_in = &activations[li];
            let gw = delta.t().dot(a_in);
            let gb = delta.sum_axis(Axis(0));
            if li > 0 {
                let mut back = delta.dot(&self.layers[li].w);
                // ReLU derivative: post-activation > 0 iff pre-activation > 0
                ndarray::Zip::from(&mut back).and(a_in).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        (loss, MlpGrad { layers: grads })
    }

    pub fn to_json(&self, provenance: Option<&ModelProvenance>) -> Result<String> {
        let mut bytes = Vec::with_capacity(self.param_count() * 8);
        for v in self.params() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let file = MlpFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            d_z: self.d_z,
            d_x: self.d_x,
            hidden: self.hidden.clone(),
            eps: self.eps,
            count_norm: self.count_norm,
            provenance: provenance.cloned(),
            weights_hex: hex::encode(bytes),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a model file; returns the model and its embedded provenance.
    pub fn from_json(s: &str) -> Result<(Self, Option<ModelProvenance>)> {
        let file: MlpFile = serde_json::from_str(s)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Serde(format!("unexpected model format {:?}", file.format)));
        }
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::Serde(format!("unsupported model version {}", file.version)));
        }
        let mut model = Self::zeros(file.d_z, file.d_x, &file.hidden, file.eps, file.count_norm)?;
        let bytes = hex::decode(&file.weights_hex).map_err(|e| Error::Serde(e.to_string()))?;
        if bytes.len() != model.param_count() * 8 {
            return Err(Error::Serde(format!(
                "weight blob has {} bytes, expected {}",
                bytes.len(),
                model.param_count() * 8
            )));
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        model.set_params(&flat)?;
        Ok((model, file.provenance))
    }
}

impl SequenceModel for MlpSeqModel {
    type State = MlpState;

    fn init_state(&self, _action: usize, z: &[f64]) -> Result<MlpState> {
        check_dim(self.d_z, z.len())?;
        Ok(MlpState {
            z: z.to_vec(),
            stats: SummaryStats::new(self.d_x),
        })
    }

    fn predict(&self, state: &MlpState, x: &[f64]) -> Result<f64> {
        let f = self.features(&state.z, &state.stats, x)?;
        Ok(logistic_fn(self.logit(&f)))
    }

    fn update_state(&self, state: &mut MlpState, x: &[f64], y: f64) -> Result<()> {
        state.stats.push(x, y)
    }

    fn predict_many(&self, items: &[(&MlpState, &[f64])]) -> Result<Vec<f64>> {
        if items.len() < 2 {
            return items.iter().map(|(s, x)| self.predict(s, x)).collect();
        }
        let d = self.input_dim();
        let mut inputs = Array2::<f64>::zeros((items.len(), d));
        for (row, (s, x)) in inputs.outer_iter_mut().zip(items) {
            let slice = row.into_slice().expect("row-major");
            self.write_features(&s.z, &s.stats, x, slice)?;
        }
        Ok(self.logits_batch(inputs.view()).iter().map(|&s| logistic_fn(s)).collect())
    }
}
