//! Encoder parameters, forward pass and manual backpropagation.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::ctc::PosteriorGrid;
use crate::inventory::Alphabet;

use super::{AcousticError, EncoderConfig};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ff1_w: Array2<f64>,
    pub ff1_b: Array1<f64>,
    pub ff2_w: Array2<f64>,
    pub ff2_b: Array1<f64>,
    pub ln_gain: Array1<f64>,
    pub ln_bias: Array1<f64>,
}

/// All trainable tensors. `output` is the `(|V|+1) × D` matrix W whose rows
/// are the unit embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub conv_w: Array2<f64>,
    pub conv_b: Array1<f64>,
    pub blocks: Vec<Block>,
    pub output: Array2<f64>,
}

/// Gaussian draws `N(0, std)` in row-major order.
pub(crate) fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

/// Std used for output rows of freshly initialized or novel units.
pub fn embedding_init_std(hidden_dim: usize) -> f64 {
    1.0 / (hidden_dim as f64).sqrt()
}

impl Params {
    pub fn init<R: Rng>(cfg: &EncoderConfig, num_units: usize, rng: &mut R) -> Params {
        let d = cfg.hidden_dim;
        let fan_conv = cfg.kernel_width * cfg.input_dim;
        let conv_w = gaussian(rng, d, fan_conv, (2.0 / fan_conv as f64).sqrt());
        let blocks = (0..cfg.num_blocks)
            .map(|_| Block {
                ff1_w: gaussian(rng, 4 * d, d, (2.0 / d as f64).sqrt()),
                ff1_b: Array1::zeros(4 * d),
                ff2_w: gaussian(rng, d, 4 * d, (1.0 / (4 * d) as f64).sqrt()),
                ff2_b: Array1::zeros(d),
                ln_gain: Array1::ones(d),
                ln_bias: Array1::zeros(d),
            })
            .collect();
        let output = gaussian(rng, num_units, d, embedding_init_std(d));
        Params {
            conv_w,
            conv_b: Array1::zeros(d),
            blocks,
            output,
        }
    }

    pub fn zeros_like(&self) -> Params {
        let mut z = self.clone();
        z.visit_mut(|_, x| x.fill(0.0));
        z
    }

    pub fn hidden_dim(&self) -> usize {
        self.output.ncols()
    }

    /// Visits every tensor in a fixed order with its canonical name and a
    /// flat row-major view.
    pub fn visit(&self, mut f: impl FnMut(&str, &[usize], &[f64])) {
        let v2 = |f: &mut dyn FnMut(&str, &[usize], &[f64]), n: &str, a: &Array2<f64>| {
            f(n, a.shape(), a.as_slice().expect("standard layout"))
        };
        let v1 = |f: &mut dyn FnMut(&str, &[usize], &[f64]), n: &str, a: &Array1<f64>| {
            f(n, a.shape(), a.as_slice().expect("standard layout"))
        };
        v2(&mut f, "conv.weight", &self.conv_w);
        v1(&mut f, "conv.bias", &self.conv_b);
        for (i, b) in self.blocks.iter().enumerate() {
            v2(&mut f, &format!("blocks.{i}.ff1.weight"), &b.ff1_w);
            v1(&mut f, &format!("blocks.{i}.ff1.bias"), &b.ff1_b);
            v2(&mut f, &format!("blocks.{i}.ff2.weight"), &b.ff2_w);
            v1(&mut f, &format!("blocks.{i}.ff2.bias"), &b.ff2_b);
            v1(&mut f, &format!("blocks.{i}.ln.gain"), &b.ln_gain);
            v1(&mut f, &format!("blocks.{i}.ln.bias"), &b.ln_bias);
        }
        v2(&mut f, "output.weight", &self.output);
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        let mut go = |n: &str, s: &mut [f64]| f(n, s);
        go("conv.weight", self.conv_w.as_slice_mut().unwrap());
        go("conv.bias", self.conv_b.as_slice_mut().unwrap());
        for (i, b) in self.blocks.iter_mut().enumerate() {
            go(&format!("blocks.{i}.ff1.weight"), b.ff1_w.as_slice_mut().unwrap());
            go(&format!("blocks.{i}.ff1.bias"), b.ff1_b.as_slice_mut().unwrap());
            go(&format!("blocks.{i}.ff2.weight"), b.ff2_w.as_slice_mut().unwrap());
            go(&format!("blocks.{i}.ff2.bias"), b.ff2_b.as_slice_mut().unwrap());
            go(&format!("blocks.{i}.ln.gain"), b.ln_gain.as_slice_mut().unwrap());
            go(&format!("blocks.{i}.ln.bias"), b.ln_bias.as_slice_mut().unwrap());
        }
        go("output.weight", self.output.as_slice_mut().unwrap());
    }

    /// Flat copies of every tensor, in visiting order.
    pub fn flatten(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.visit(|_, _, x| out.push(x.to_vec()));
        out
    }

    /// Applies `f(param, other)` tensor-wise against a same-shaped set.
    pub fn zip_mut(&mut self, other: &Params, mut f: impl FnMut(&mut [f64], &[f64])) {
        let others = other.flatten();
        let mut i = 0;
        self.visit_mut(|_, x| {
            f(x, &others[i]);
            i += 1;
        });
    }

    pub fn num_values(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _, x| n += x.len());
        n
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, _, x| ok &= x.iter().all(|v| v.is_finite()));
        ok
    }

    /// Arithmetic mean of same-shaped parameter sets, computed as
    /// `p_0 + Σ (p_i − p_0) / k` so identical inputs average to themselves
    /// bit for bit.
    pub fn average(sets: &[&Params]) -> Params {
        assert!(!sets.is_empty());
        let k = sets.len() as f64;
        let base = sets[0].flatten();
        let mut delta = sets[0].zeros_like();
        for p in &sets[1..] {
            let mut i = 0;
            let flat = p.flatten();
            delta.visit_mut(|_, d| {
                for (j, v) in d.iter_mut().enumerate() {
                    *v += flat[i][j] - base[i][j];
                }
                i += 1;
            });
        }
        let mut acc = sets[0].clone();
        acc.zip_mut(&delta, |a, d| a.iter_mut().zip(d).for_each(|(x, y)| *x += y / k));
        acc
    }
}

/// Stacks `kernel_width` consecutive frames starting at `t' · stride`,
/// zero-padding past the end.
fn unfold(x: ArrayView2<f64>, cfg: &EncoderConfig) -> Array2<f64> {
    let (t, f) = x.dim();
    let tp = cfg.output_frames(t);
    let k = cfg.kernel_width;
    let mut out = Array2::zeros((tp, k * f));
    for o in 0..tp {
        for j in 0..k {
            let src = o * cfg.subsample_stride + j;
            if src < t {
                out.slice_mut(s![o, j * f..(j + 1) * f]).assign(&x.row(src));
            }
        }
    }
    out
}

fn relu(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

struct BlockCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    /// Post-ReLU activations after dropout.
    act: Array2<f64>,
    /// Dropout scale per activation (0 or 1/(1-p)); `None` in eval mode.
    mask: Option<Array2<f64>>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

pub(crate) struct Cache {
    unfolded: Array2<f64>,
    conv_pre: Array2<f64>,
    blocks: Vec<BlockCache>,
    hidden: Array2<f64>,
}

fn layer_norm(r: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let d = r.ncols() as f64;
    let mean = r.sum_axis(Axis(1)) / d;
    let centered = r - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = centered * &inv_std.view().insert_axis(Axis(1));
    let y = &xhat * gain + bias;
    (y, xhat, inv_std)
}

/// Encoder forward. With `dropout_rng` set, dropout is active (training).
pub(crate) fn encode<R: Rng>(
    params: &Params,
    cfg: &EncoderConfig,
    x: ArrayView2<f64>,
    mut dropout_rng: Option<&mut R>,
) -> Cache {
    let unfolded = unfold(x, cfg);
    let conv_pre = unfolded.dot(&params.conv_w.t()) + &params.conv_b;
    let mut h = conv_pre.clone();
    relu(&mut h);
    let mut blocks = Vec::with_capacity(params.blocks.len());
    for b in &params.blocks {
        let pre = h.dot(&b.ff1_w.t()) + &b.ff1_b;
        let mut act = pre.clone();
        relu(&mut act);
        let mask = match dropout_rng.as_deref_mut() {
            Some(rng) if cfg.dropout > 0.0 => {
                let keep = 1.0 / (1.0 - cfg.dropout);
                let m = Array2::from_shape_simple_fn(act.dim(), || {
                    if rng.random::<f64>() < cfg.dropout {
                        0.0
                    } else {
                        keep
                    }
                });
                act *= &m;
                Some(m)
            }
            _ => None,
        };
        let r = &h + &(act.dot(&b.ff2_w.t()) + &b.ff2_b);
        let (y, xhat, inv_std) = layer_norm(&r, &b.ln_gain, &b.ln_bias);
        blocks.push(BlockCache {
            input: std::mem::replace(&mut h, y),
            pre,
            act,
            mask,
            xhat,
            inv_std,
        });
    }
    Cache {
        unfolded,
        conv_pre,
        blocks,
        hidden: h,
    }
}

impl Cache {
    pub(crate) fn hidden(&self) -> &Array2<f64> {
        &self.hidden
    }
}

/// Logits `z_t = W h_t` for every output frame.
pub fn output_logits(w: &Array2<f64>, hidden: &Array2<f64>) -> Array2<f64> {
    hidden.dot(&w.t())
}

/// Output layer: a linear map followed by a softmax over `|V|+1` units.
pub fn output_posteriors(w: &Array2<f64>, hidden: &Array2<f64>) -> Result<PosteriorGrid, AcousticError> {
    let z = output_logits(w, hidden);
    if !z.iter().all(|v| v.is_finite()) {
        return Err(AcousticError::Numeric("non-finite logits".into()));
    }
    Ok(PosteriorGrid::from_logits(&z)?)
}

/// Backpropagates `d_logits` (T' × |V|+1) and accumulates into `grads`.
pub(crate) fn backward(params: &Params, cache: &Cache, d_logits: &Array2<f64>, grads: &mut Params) {
    grads.output += &d_logits.t().dot(&cache.hidden);
    let mut dh = d_logits.dot(&params.output);
    for (i, (b, c)) in params.blocks.iter().zip(&cache.blocks).enumerate().rev() {
        let g = &mut grads.blocks[i];
        g.ln_gain += &(&dh * &c.xhat).sum_axis(Axis(0));
        g.ln_bias += &dh.sum_axis(Axis(0));
        let dxhat = &dh * &b.ln_gain;
        let d = dxhat.ncols() as f64;
        let mean_dx = dxhat.sum_axis(Axis(1)) / d;
        let mean_dx_xhat = (&dxhat * &c.xhat).sum_axis(Axis(1)) / d;
        let mut dr = dxhat;
        Zip::from(dr.rows_mut())
            .and(c.xhat.rows())
            .and(&mean_dx)
            .and(&mean_dx_xhat)
            .and(&c.inv_std)
            .for_each(|mut row, xh, &m1, &m2, &is| {
                Zip::from(&mut row).and(&xh).for_each(|v, &x| *v = is * (*v - m1 - x * m2));
            });
        g.ff2_w += &dr.t().dot(&c.act);
        g.ff2_b += &dr.sum_axis(Axis(0));
        let mut da = dr.dot(&b.ff2_w);
        if let Some(m) = &c.mask {
            da *= m;
        }
        Zip::from(&mut da).and(&c.pre).for_each(|v, &p| {
            if p <= 0.0 {
                *v = 0.0
            }
        });
        g.ff1_w += &da.t().dot(&c.input);
        g.ff1_b += &da.sum_axis(Axis(0));
        dh = dr + da.dot(&b.ff1_w);
    }
    Zip::from(&mut dh).and(&cache.conv_pre).for_each(|v, &p| {
        if p <= 0.0 {
            *v = 0.0
        }
    });
    grads.conv_w += &dh.t().dot(&cache.unfolded);
    grads.conv_b += &dh.sum_axis(Axis(0));
}

/// Checks a checkpoint's alphabet against its output matrix.
pub(crate) fn check_shapes(params: &Params, cfg: &EncoderConfig, alphabet: &Alphabet) -> Result<(), AcousticError> {
    let d = cfg.hidden_dim;
    let expect = |name: &str, got: &[usize], want: &[usize]| {
        if got != want {
            Err(AcousticError::Shape(format!("{name}: expected {want:?}, got {got:?}")))
        } else {
            Ok(())
        }
    };
    expect("conv.weight", params.conv_w.shape(), &[d, cfg.kernel_width * cfg.input_dim])?;
    expect("conv.bias", params.conv_b.shape(), &[d])?;
    if params.blocks.len() != cfg.num_blocks {
        return Err(AcousticError::Shape(format!(
            "expected {} blocks, got {}",
            cfg.num_blocks,
            params.blocks.len()
        )));
    }
    for (i, b) in params.blocks.iter().enumerate() {
        expect(&format!("blocks.{i}.ff1.weight"), b.ff1_w.shape(), &[4 * d, d])?;
        expect(&format!("blocks.{i}.ff1.bias"), b.ff1_b.shape(), &[4 * d])?;
        expect(&format!("blocks.{i}.ff2.weight"), b.ff2_w.shape(), &[d, 4 * d])?;
        expect(&format!("blocks.{i}.ff2.bias"), b.ff2_b.shape(), &[d])?;
        expect(&format!("blocks.{i}.ln.gain"), b.ln_gain.shape(), &[d])?;
        expect(&format!("blocks.{i}.ln.bias"), b.ln_bias.shape(), &[d])?;
    }
    expect("output.weight", params.output.shape(), &[alphabet.len(), d])
}
