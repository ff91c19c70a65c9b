//! From-scratch MLP with layer normalization, exact backpropagation,
//! global-norm gradient clipping and Adam.
//!
//! Hidden layers compute `relu(layer_norm(W x + b))`; the output layer is
//! affine only. All parameters flatten to a single vector (per layer:
//! weights row-major, bias, gain, shift; then output weights and bias) so
//! the optimizer and the gradient noise estimator can treat the network as
//! one flat parameter vector.

use crate::error::{Error, Result};
use crate::math::Matrix;
use rand::Rng;
use std::io::{Read, Write};
use std::path::Path;

pub const LN_EPS: f64 = 1e-5;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One hidden layer: affine map plus layer-norm gain/shift.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    /// out × in, row-major.
    pub w: Matrix,
    pub b: Vec<f64>,
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
}

/// Parameters of a configurable-depth perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub obs_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<HiddenLayer>,
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
}

impl Mlp {
    /// Scaled-uniform init U(±sqrt(6/(fan_in+fan_out))), biases zero,
    /// layer-norm gains one, shifts zero.
    pub fn init<R: Rng>(obs_dim: usize, hidden_sizes: &[usize], output_dim: usize, rng: &mut R) -> Self {
        let mut hidden = Vec::with_capacity(hidden_sizes.len());
        let mut fan_in = obs_dim;
        for &h in hidden_sizes {
            let bound = (6.0 / (fan_in + h) as f64).sqrt();
            let mut w = Matrix::zeros(h, fan_in);
            for v in w.data.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
            hidden.push(HiddenLayer {
                w,
                b: vec![0.0; h],
                gain: vec![1.0; h],
                shift: vec![0.0; h],
            });
            fan_in = h;
        }
        let bound = (6.0 / (fan_in + output_dim) as f64).sqrt();
        let mut out_w = Matrix::zeros(output_dim, fan_in);
        for v in out_w.data.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        Mlp {
            obs_dim,
            output_dim,
            hidden,
            out_w,
            out_b: vec![0.0; output_dim],
        }
    }

    /// All-zero weights and biases (gains 1, shifts 0); used by tests.
    pub fn zeros(obs_dim: usize, hidden_sizes: &[usize], output_dim: usize) -> Self {
        let mut fan_in = obs_dim;
        let mut hidden = Vec::new();
        for &h in hidden_sizes {
            hidden.push(HiddenLayer {
                w: Matrix::zeros(h, fan_in),
                b: vec![0.0; h],
                gain: vec![1.0; h],
                shift: vec![0.0; h],
            });
            fan_in = h;
        }
        Mlp {
            obs_dim,
            output_dim,
            hidden,
            out_w: Matrix::zeros(output_dim, fan_in),
            out_b: vec![0.0; output_dim],
        }
    }

    /// [obs_dim, hidden..., output_dim]
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.obs_dim];
        dims.extend(self.hidden.iter().map(|l| l.w.rows));
        dims.push(self.output_dim);
        dims
    }

    pub fn param_count(&self) -> usize {
        let h: usize = self
            .hidden
            .iter()
            .map(|l| l.w.data.len() + l.b.len() + l.gain.len() + l.shift.len())
            .sum();
        h + self.out_w.data.len() + self.out_b.len()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        self.forward_cached(x).output
    }

    fn forward_cached(&self, x: &Matrix) -> ForwardCache {
        assert_eq!(x.cols, self.obs_dim, "input width {} != obs_dim {}", x.cols, self.obs_dim);
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut act = x.clone();
        for layer in &self.hidden {
            let z = affine(&act, &layer.w, &layer.b);
            let d = z.cols;
            let mut zhat = Matrix::zeros(z.rows, d);
            let mut inv_std = vec![0.0; z.rows];
            let mut post = Matrix::zeros(z.rows, d);
            let mut relu_mask = vec![false; z.rows * d];
            for i in 0..z.rows {
                let row = z.row(i);
                let mu = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
                let istd = 1.0 / (var + LN_EPS).sqrt();
                inv_std[i] = istd;
                for j in 0..d {
                    let zh = (row[j] - mu) * istd;
                    zhat.set(i, j, zh);
                    let y = layer.gain[j] * zh + layer.shift[j];
                    if y > 0.0 {
                        post.set(i, j, y);
                        relu_mask[i * d + j] = true;
                    }
                }
            }
            layers.push(LayerCache {
                input: act,
                zhat,
                inv_std,
                relu_mask,
            });
            act = post;
        }
        let output = affine(&act, &self.out_w, &self.out_b);
        ForwardCache {
            layers,
            last_hidden: act,
            output,
        }
    }

    /// Exact gradient of `sum(forward(x) ⊙ upstream)` w.r.t. the flattened
    /// parameters.
    pub fn backward(&self, x: &Matrix, upstream: &Matrix) -> Vec<f64> {
        let cache = self.forward_cached(x);
        assert_eq!(
            (upstream.rows, upstream.cols),
            (cache.output.rows, cache.output.cols),
            "upstream gradient shape mismatch"
        );
        let batch = x.rows;
        let mut layer_grads: Vec<LayerGrad> = self
            .hidden
            .iter()
            .map(|l| LayerGrad {
                w: vec![0.0; l.w.data.len()],
                b: vec![0.0; l.b.len()],
                gain: vec![0.0; l.gain.len()],
                shift: vec![0.0; l.shift.len()],
            })
            .collect();
        let mut g_out_w = vec![0.0; self.out_w.data.len()];
        let mut g_out_b = vec![0.0; self.out_b.len()];

        // output layer and the gradient flowing into the last activation
        let mut d_act = Matrix::zeros(batch, self.out_w.cols);
        for i in 0..batch {
            let a = cache.last_hidden.row(i);
            let du = upstream.row(i);
            let dr = d_act.row_mut(i);
            for j in 0..self.output_dim {
                let d = du[j];
                g_out_b[j] += d;
                let rowbase = j * a.len();
                let wrow = self.out_w.row(j);
                for (k, &ak) in a.iter().enumerate() {
                    g_out_w[rowbase + k] += d * ak;
                    dr[k] += d * wrow[k];
                }
            }
        }

        for (l, (layer, lc)) in self.hidden.iter().zip(&cache.layers).enumerate().rev() {
            let d = layer.w.rows;
            let lg = &mut layer_grads[l];
            let mut d_prev = Matrix::zeros(batch, layer.w.cols);
            let mut dzhat = vec![0.0; d];
            for i in 0..batch {
                let da = d_act.row(i);
                let zh = lc.zhat.row(i);
                // relu then the layer-norm affine
                for j in 0..d {
                    if lc.relu_mask[i * d + j] {
                        let dy = da[j];
                        lg.gain[j] += dy * zh[j];
                        lg.shift[j] += dy;
                        dzhat[j] = dy * layer.gain[j];
                    } else {
                        dzhat[j] = 0.0;
                    }
                }
                // layer-norm backward through mean/variance
                let m1 = dzhat.iter().sum::<f64>() / d as f64;
                let m2 = dzhat.iter().zip(zh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                let istd = lc.inv_std[i];
                let input = lc.input.row(i);
                let dpr = d_prev.row_mut(i);
                for j in 0..d {
                    let dz = istd * (dzhat[j] - m1 - zh[j] * m2);
                    lg.b[j] += dz;
                    let rowbase = j * input.len();
                    let wrow = layer.w.row(j);
                    for (k, &xk) in input.iter().enumerate() {
                        lg.w[rowbase + k] += dz * xk;
                        dpr[k] += dz * wrow[k];
                    }
                }
            }
            d_act = d_prev;
        }

        let mut grad = Vec::with_capacity(self.param_count());
        for lg in &layer_grads {
            grad.extend_from_slice(&lg.w);
            grad.extend_from_slice(&lg.b);
            grad.extend_from_slice(&lg.gain);
            grad.extend_from_slice(&lg.shift);
        }
        grad.extend_from_slice(&g_out_w);
        grad.extend_from_slice(&g_out_b);
        grad
    }

    /// Concatenate all parameters into one flat vector.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.hidden {
            v.extend_from_slice(&l.w.data);
            v.extend_from_slice(&l.b);
            v.extend_from_slice(&l.gain);
            v.extend_from_slice(&l.shift);
        }
        v.extend_from_slice(&self.out_w.data);
        v.extend_from_slice(&self.out_b);
        v
    }

    /// Inverse of [`Mlp::flatten`] for a conforming vector.
    pub fn unflatten_from(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.param_count(), "flat vector length mismatch");
        let mut off = 0;
        let mut take = |n: usize| {
            let s = &v[off..off + n];
            off += n;
            s
        };
        for l in &mut self.hidden {
            let n = l.w.data.len();
            l.w.data.copy_from_slice(take(n));
            let n = l.b.len();
            l.b.copy_from_slice(take(n));
            let n = l.gain.len();
            l.gain.copy_from_slice(take(n));
            let n = l.shift.len();
            l.shift.copy_from_slice(take(n));
        }
        let n = self.out_w.data.len();
        self.out_w.data.copy_from_slice(take(n));
        let n = self.out_b.len();
        self.out_b.copy_from_slice(take(n));
    }
}

struct LayerGrad {
    w: Vec<f64>,
    b: Vec<f64>,
    gain: Vec<f64>,
    shift: Vec<f64>,
}

struct LayerCache {
    input: Matrix,
    zhat: Matrix,
    inv_std: Vec<f64>,
    relu_mask: Vec<bool>,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    last_hidden: Matrix,
    output: Matrix,
}

/// x (batch×in) · wᵀ (in×out) + b.
fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    assert_eq!(x.cols, w.cols, "affine shape mismatch");
    let mut out = Matrix::zeros(x.rows, w.rows);
    for i in 0..x.rows {
        let xr = x.row(i);
        let or = out.row_mut(i);
        for j in 0..w.rows {
            let wr = w.row(j);
            let mut acc = b[j];
            for (xk, wk) in xr.iter().zip(wr) {
                acc += xk * wk;
            }
            or[j] = acc;
        }
    }
    out
}

/// Scale `g` so its L2 norm does not exceed `max_norm`.
pub fn clip_global_norm(g: &mut [f64], max_norm: f64) {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
}

/// Bias-corrected Adam state.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    /// Number of optimizer steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update in place. NaN/Inf in the gradient aborts
/// the run as a training-divergence error.
pub fn adam_step(params: &mut [f64], state: &mut AdamState, g: &[f64], lr: f64) -> Result<()> {
    assert_eq!(params.len(), g.len());
    assert_eq!(params.len(), state.m.len());
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::TrainingDivergence(
            "non-finite gradient in optimizer step".into(),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (vhat.sqrt() + state.eps);
    }
    Ok(())
}

/// Checkpoint layout: u32 LE dim count, then each layer dim as u32 LE
/// ([obs_dim, hidden..., output_dim]), then the flat parameter vector as
/// f64 LE in flatten() order.
pub fn save_checkpoint(path: &Path, mlp: &Mlp) -> Result<()> {
    let dims = mlp.layer_dims();
    let flat = mlp.flatten();
    let mut buf = Vec::with_capacity(4 + dims.len() * 4 + flat.len() * 8);
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in &dims {
        buf.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in &flat {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&buf)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Mlp> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut off = 0;
    let take4 = |bytes: &[u8], off: &mut usize| -> Result<u32> {
        if *off + 4 > bytes.len() {
            return Err(Error::Malformed("checkpoint header truncated".into()));
        }
        let v = u32::from_le_bytes(bytes[*off..*off + 4].try_into().unwrap());
        *off += 4;
        Ok(v)
    };
    let ndims = take4(&bytes, &mut off)? as usize;
    if ndims < 2 {
        return Err(Error::Malformed("checkpoint needs at least 2 dims".into()));
    }
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        dims.push(take4(&bytes, &mut off)? as usize);
    }
    let obs_dim = dims[0];
    let output_dim = dims[ndims - 1];
    let hidden = &dims[1..ndims - 1];
    let mut mlp = Mlp::zeros(obs_dim, hidden, output_dim);
    let n = mlp.param_count();
    if bytes.len() - off != n * 8 {
        return Err(Error::Malformed(format!(
            "checkpoint body has {} bytes, expected {}",
            bytes.len() - off,
            n * 8
        )));
    }
    let mut flat = Vec::with_capacity(n);
    for i in 0..n {
        let s = &bytes[off + i * 8..off + i * 8 + 8];
        flat.push(f64::from_le_bytes(s.try_into().unwrap()));
    }
    mlp.unflatten_from(&flat);
    Ok(mlp)
}
