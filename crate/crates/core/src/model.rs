//! A small ReLU MLP with softmax output and hand-written backpropagation,
//! plus the weak/strong input perturbations used by the trainer.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MceError, Result};
use crate::matrix::Matrix;
use crate::relation::PredictionBatch;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Self {
        Layer { weights: Matrix::zeros(self.weights.rows(), self.weights.cols()), bias: vec![0.0; self.bias.len()] }
    }
}

/// Fully connected network: ReLU on hidden layers, softmax on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer; the last one is the logits.
    pre: Vec<Matrix>,
    pub probs: Matrix,
}

impl ForwardCache {
    pub fn logits(&self) -> &Matrix {
        self.pre.last().expect("network has at least one layer")
    }

    pub fn batch_size(&self) -> usize {
        self.probs.rows()
    }
}

/// Upstream gradient fed to [`Mlp::backward`].
#[derive(Debug, Clone)]
pub enum Upstream {
    Logits(Matrix),
    Probs(Matrix),
}

/// Parameter gradients, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.add_assign_scaled(&b.weights, 1.0);
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(l.weights.as_slice());
        out.extend_from_slice(&l.bias);
    }
    out
}

impl Mlp {
    /// He-normal weights, zero biases. `dims = [input, hidden..., classes]`.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        Self::check_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
                Layer { weights: Matrix::from_vec(fan_out, fan_in, data).expect("shape"), bias: vec![0.0; fan_out] }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::check_dims(dims)?;
        let layers =
            dims.windows(2).map(|w| Layer { weights: Matrix::zeros(w[1], w[0]), bias: vec![0.0; w[1]] }).collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(MceError::Contract("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.rows() {
                return Err(MceError::Contract(format!("layer {i}: bias length does not match weights")));
            }
            if i > 0 && layers[i - 1].weights.rows() != l.weights.cols() {
                return Err(MceError::Contract(format!("layer {i}: input width does not match previous layer")));
            }
        }
        Ok(Self { layers })
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(MceError::Contract(format!("invalid layer dimensions {dims:?}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].weights.cols()];
        d.extend(self.layers.iter().map(|l| l.weights.rows()));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().expect("non-empty").weights.rows()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.bias.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params_flat(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(MceError::Contract(format!("expected {} parameters, got {}", self.num_params(), p.len())));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let w = l.weights.as_mut_slice();
            let n = w.len();
            w.copy_from_slice(&p[off..off + n]);
            off += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&p[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params_flat().iter().all(|x| x.is_finite())
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients { layers: self.layers.iter().map(Layer::zeros_like).collect() }
    }

    /// Forward pass over a batch of row vectors.
    pub fn forward(&self, x: &Matrix) -> Result<(PredictionBatch, ForwardCache)> {
        let cache = self.forward_cache(x)?;
        let probs = PredictionBatch::new(cache.probs.clone())?;
        Ok((probs, cache))
    }

    /// Forward pass without wrapping the probabilities in a validated batch.
    pub fn forward_cache(&self, x: &Matrix) -> Result<ForwardCache> {
        if x.cols() != self.input_dim() {
            return Err(MceError::Contract(format!(
                "input has {} features, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.matmul_t(&layer.weights);
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            inputs.push(h);
            h = if i + 1 < self.layers.len() { relu(&z) } else { Matrix::zeros(0, 0) };
            pre.push(z);
        }
        let probs = softmax_rows(pre.last().expect("non-empty"));
        Ok(ForwardCache { inputs, pre, probs })
    }

    /// Class probabilities only.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cache(x)?.probs)
    }

    /// Backpropagates an upstream gradient to every parameter.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Upstream) -> Result<Gradients> {
        if cache.inputs.len() != self.layers.len() {
            return Err(MceError::Contract("cache was produced by a network of different depth".into()));
        }
        let mut dz = match upstream {
            Upstream::Logits(g) => g.clone(),
            Upstream::Probs(g) => {
                if g.shape() != cache.probs.shape() {
                    return Err(MceError::Contract("upstream gradient shape does not match the batch".into()));
                }
                softmax_backward(&cache.probs, g)
            }
        };
        if dz.shape() != cache.logits().shape() {
            return Err(MceError::Contract("upstream gradient shape does not match the batch".into()));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            let weights = dz.t_matmul(input);
            let mut bias = vec![0.0; dz.cols()];
            for r in 0..dz.rows() {
                for (b, v) in bias.iter_mut().zip(dz.row(r)) {
                    *b += v;
                }
            }
            layers.push(Layer { weights, bias });
            if l > 0 {
                let mut dh = dz.matmul(&self.layers[l].weights);
                let z = &cache.pre[l - 1];
                for (d, &zv) in dh.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if zv <= 0.0 {
                        *d = 0.0;
                    }
                }
                dz = dh;
            }
        }
        layers.reverse();
        Ok(Gradients { layers })
    }
}

fn relu(z: &Matrix) -> Matrix {
    let mut h = z.clone();
    h.as_mut_slice().iter_mut().for_each(|x| *x = x.max(0.0));
    h
}

pub fn softmax_rows(z: &Matrix) -> Matrix {
    let mut p = z.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    p
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

/// Pulls a gradient with respect to softmax outputs back to the logits:
/// `g_z = p ∘ (g_p - ⟨g_p, p⟩)` per row.
pub fn softmax_backward(probs: &Matrix, dprobs: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let g = dprobs.row(r);
        let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for (o, (a, b)) in out.row_mut(r).iter_mut().zip(p.iter().zip(g)) {
            *o = a * (b - inner);
        }
    }
    out
}

/// Weak and strong input perturbations for synthetic features.
///
/// Weak: additive Gaussian noise. Strong: coordinate dropout (zeroing)
/// followed by larger Gaussian noise. Every draw is a pure function of
/// `(seed, sample id, step)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augmentor {
    pub weak_noise_sigma: f64,
    pub strong_noise_sigma: f64,
    pub strong_dropout_prob: f64,
    pub seed: u64,
}

const WEAK_STREAM: u64 = 0x5745_414b;
const STRONG_STREAM: u64 = 0x5354_524f;

impl Augmentor {
    pub fn new(weak_noise_sigma: f64, strong_noise_sigma: f64, strong_dropout_prob: f64, seed: u64) -> Result<Self> {
        let a = Self { weak_noise_sigma, strong_noise_sigma, strong_dropout_prob, seed };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weak_noise_sigma >= 0.0) || !(self.strong_noise_sigma >= self.weak_noise_sigma) {
            return Err(MceError::Contract("need strong_noise_sigma >= weak_noise_sigma >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.strong_dropout_prob) {
            return Err(MceError::Contract("strong_dropout_prob must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn rng(&self, stream: u64, id: u64, step: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(&[self.seed, stream, id, step]))
    }

    /// `x + N(0, σ_w²)` per row; `ids[i]` identifies the sample in row `i`.
    pub fn augment_weak(&self, x: &Matrix, ids: &[usize], step: usize) -> Matrix {
        assert_eq!(ids.len(), x.rows(), "one id per row");
        let mut out = x.clone();
        if self.weak_noise_sigma == 0.0 {
            return out;
        }
        for (r, &id) in ids.iter().enumerate() {
            let mut rng = self.rng(WEAK_STREAM, id as u64, step as u64);
            for v in out.row_mut(r) {
                *v += self.weak_noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        out
    }

    /// Dropout with probability `p_drop`, then `+ N(0, σ_s²)`, per row.
    pub fn augment_strong(&self, x: &Matrix, ids: &[usize], step: usize) -> Matrix {
        assert_eq!(ids.len(), x.rows(), "one id per row");
        let mut out = x.clone();
        for (r, &id) in ids.iter().enumerate() {
            let mut rng = self.rng(STRONG_STREAM, id as u64, step as u64);
            for v in out.row_mut(r) {
                let u: f64 = rng.random();
                if u < self.strong_dropout_prob {
                    *v = 0.0;
                }
                let n: f64 = rng.sample(StandardNormal);
                *v += self.strong_noise_sigma * n;
            }
        }
        out
    }
}

/// SplitMix64-style combination of several words into one seed.
pub fn mix(words: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &w in words {
        h ^= w;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Header line of a parameter checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub step: usize,
    pub n_params: usize,
}

pub const CHECKPOINT_FORMAT: &str = "relmatch-mlp-v1";

/// Writes a checkpoint: one JSON header line, then one parameter per line in
/// layer order (weights row-major, then bias). Values use Rust's shortest
/// round-trip float formatting, so a reload is bit-exact.
pub fn write_checkpoint<W: Write>(mut w: W, model: &Mlp, seed: u64, step: usize) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        dims: model.dims(),
        seed,
        step,
        n_params: model.num_params(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for v in model.params_flat() {
        writeln!(w, "{v:?}")?;
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<(CheckpointHeader, Mlp)> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| MceError::Io("empty checkpoint".into()))??;
    let header: CheckpointHeader = serde_json::from_str(&first)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(MceError::Io(format!("unknown checkpoint format {:?}", header.format)));
    }
    let mut params = Vec::with_capacity(header.n_params);
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        params.push(line.parse::<f64>().map_err(|e| MceError::Io(format!("bad parameter {line:?}: {e}")))?);
    }
    let mut model = Mlp::zeros(&header.dims)?;
    if params.len() != header.n_params {
        return Err(MceError::Io(format!("header promises {} parameters, found {}", header.n_params, params.len())));
    }
    model.set_params_flat(&params)?;
    Ok((header, model))
}
