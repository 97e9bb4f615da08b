//! Real-NVP coupling flow `T_φ` with exact inverse, log-Jacobians and
//! hand-written reverse-mode gradients with respect to the flattened
//! parameter vector.
//!
//! Each coupling layer keeps the coordinates in its mask and maps the rest as
//! `y_B = μ(x_A) + exp(log σ(x_A)) ⊙ x_B`, where `log σ = 5 tanh(s / 5)` and
//! `(μ, s)` come from a tanh MLP whose output layer starts at zero.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::densities::TargetDensity;
use crate::{Error, Result};

/// Bound on `|log σ|` per layer.
pub const LOG_SCALE_BOUND: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskPattern {
    /// Layers alternately keep the first `⌈d/2⌉` coordinates and the rest.
    Halves,
    /// Layers alternately keep the even and the odd coordinates.
    Interleaved,
}

impl MaskPattern {
    pub fn name(&self) -> &'static str {
        match self {
            MaskPattern::Halves => "halves",
            MaskPattern::Interleaved => "interleaved",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "halves" => Some(MaskPattern::Halves),
            "interleaved" => Some(MaskPattern::Interleaved),
            _ => None,
        }
    }

    /// `true` marks a coordinate left unchanged by layer `k`.
    pub fn mask(&self, dim: usize, k: usize) -> Vec<bool> {
        match self {
            MaskPattern::Halves => {
                let cut = dim.div_ceil(2);
                (0..dim).map(|i| (i < cut) == (k % 2 == 0)).collect()
            }
            MaskPattern::Interleaved => (0..dim).map(|i| (i % 2 == 0) == (k % 2 == 0)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer {
    pub mask: Vec<bool>,
    kept: Vec<usize>,
    moved: Vec<usize>,
    /// Widths `[|A|, h₁, …, h_m, 2|B|]` of the conditioner.
    widths: Vec<usize>,
    offset: usize,
    len: usize,
}

impl CouplingLayer {
    fn new(mask: Vec<bool>, hidden: &[usize], offset: usize) -> Self {
        let kept: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let moved: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        let mut widths = vec![kept.len()];
        widths.extend_from_slice(hidden);
        widths.push(2 * moved.len());
        let len = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        CouplingLayer { mask, kept, moved, widths, offset, len }
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn moved(&self) -> &[usize] {
        &self.moved
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    pub fn param_count(&self) -> usize {
        self.len
    }

    /// Offsets of `(W, b)` for dense layer `j` inside this layer's parameter block;
    /// `W` is `widths[j] × widths[j+1]`, row-major.
    fn dense_offsets(&self, j: usize) -> (usize, usize) {
        let mut off = self.offset;
        for w in self.widths.windows(2).take(j) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.widths[j] * self.widths[j + 1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    dim: usize,
    hidden: Vec<usize>,
    pattern: MaskPattern,
    layers: Vec<CouplingLayer>,
    theta: Vec<f64>,
}

/// Builds a flow with `layer_count` coupling layers and the default [`MaskPattern::Halves`].
pub fn build_flow(dim: usize, layer_count: usize, hidden_sizes: &[usize], rng: &mut dyn RngCore) -> Result<FlowModel> {
    build_flow_with_mask(dim, layer_count, hidden_sizes, MaskPattern::Halves, rng)
}

/// Hidden weights are drawn `N(0, 1/fan_in)`; biases and the output layer
/// start at zero, so the fresh flow is the identity.
pub fn build_flow_with_mask(
    dim: usize,
    layer_count: usize,
    hidden_sizes: &[usize],
    pattern: MaskPattern,
    rng: &mut dyn RngCore,
) -> Result<FlowModel> {
    let mut model = FlowModel::zeros(dim, layer_count, hidden_sizes, pattern)?;
    for k in 0..layer_count {
        let layer = model.layers[k].clone();
        for j in 0..layer.widths.len() - 2 {
            let (w, _) = layer.dense_offsets(j);
            let fan_in = layer.widths[j];
            let scale = 1.0 / (fan_in as f64).sqrt();
            for v in &mut model.theta[w..w + fan_in * layer.widths[j + 1]] {
                let z: f64 = StandardNormal.sample(rng);
                *v = scale * z;
            }
        }
    }
    Ok(model)
}

impl FlowModel {
    /// Architecture with every parameter set to zero.
    pub fn zeros(dim: usize, layer_count: usize, hidden_sizes: &[usize], pattern: MaskPattern) -> Result<Self> {
        if dim < 2 {
            return Err(Error::param(format!(
                "coupling flows need dimension >= 2, got {dim}; pad the density with augment_with_standard_normal first"
            )));
        }
        if layer_count == 0 {
            return Err(Error::param("flow needs at least one coupling layer"));
        }
        if hidden_sizes.contains(&0) {
            return Err(Error::param("hidden layer sizes must be positive"));
        }
        let mut layers = Vec::with_capacity(layer_count);
        let mut offset = 0;
        for k in 0..layer_count {
            let layer = CouplingLayer::new(pattern.mask(dim, k), hidden_sizes, offset);
            offset += layer.len;
            layers.push(layer);
        }
        Ok(FlowModel { dim, hidden: hidden_sizes.to_vec(), pattern, layers, theta: vec![0.0; offset] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden
    }

    pub fn mask_pattern(&self) -> MaskPattern {
        self.pattern
    }

    pub fn layers(&self) -> &[CouplingLayer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    /// Flattened parameter vector `φ`.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Replaces `φ`; the inverse of [`FlowModel::theta`].
    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::Shape(format!("theta has length {}, model expects {}", theta.len(), self.theta.len())));
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        let mut m = self.clone();
        m.set_theta(theta)?;
        Ok(m)
    }

    /// Weight matrix (row-major, `fan_in × fan_out`) and bias of dense layer `j` in coupling layer `k`.
    pub fn dense(&self, k: usize, j: usize) -> (&[f64], &[f64]) {
        let layer = &self.layers[k];
        let (w, b) = layer.dense_offsets(j);
        let out = layer.widths[j + 1];
        (&self.theta[w..b], &self.theta[b..b + out])
    }

    fn check_rows(&self, xs: &[f64]) -> Result<usize> {
        if xs.is_empty() || xs.len() % self.dim != 0 {
            return Err(Error::Shape(format!("{} values do not form rows of dimension {}", xs.len(), self.dim)));
        }
        Ok(xs.len() / self.dim)
    }

    /// `T(x)` and `log|det ∂T/∂x|` for one point.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (y, ld) = self.forward_batch(x)?;
        if y.len() != self.dim {
            return Err(Error::Shape(format!("expected one point of dimension {}", self.dim)));
        }
        Ok((y, ld[0]))
    }

    /// `T⁻¹(y)` and `log|det ∂T⁻¹/∂y|` for one point.
    pub fn inverse(&self, y: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (x, ld) = self.inverse_batch(y)?;
        if x.len() != self.dim {
            return Err(Error::Shape(format!("expected one point of dimension {}", self.dim)));
        }
        Ok((x, ld[0]))
    }

    /// Row-major batch version of [`FlowModel::forward`].
    pub fn forward_batch(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (y, ld, _) = self.run(xs, Direction::Forward, false)?;
        Ok((y, ld))
    }

    pub fn inverse_batch(&self, ys: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (x, ld, _) = self.run(ys, Direction::Inverse, false)?;
        Ok((x, ld))
    }

    /// Forward pass keeping the intermediates needed by [`FlowModel::backward`].
    pub fn forward_tape(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Tape)> {
        self.run(xs, Direction::Forward, true)
    }

    pub fn inverse_tape(&self, ys: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Tape)> {
        self.run(ys, Direction::Inverse, true)
    }

    fn run(&self, input: &[f64], dir: Direction, record: bool) -> Result<(Vec<f64>, Vec<f64>, Tape)> {
        let n = self.check_rows(input)?;
        let d = self.dim;
        let mut z = input.to_vec();
        let mut ld = vec![0.0; n];
        let mut tape = Tape { direction: dir, n, layers: Vec::new() };
        let order: Vec<usize> = match dir {
            Direction::Forward => (0..self.layers.len()).collect(),
            Direction::Inverse => (0..self.layers.len()).rev().collect(),
        };
        for k in order {
            let layer = &self.layers[k];
            let nb = layer.moved.len();
            let xa = gather(&z, d, &layer.kept);
            let (out, acts) = self.conditioner(k, &xa, n);
            let mut t = vec![0.0; n * nb];
            let mut moved = vec![0.0; n * nb];
            for i in 0..n {
                let row = &mut z[i * d..(i + 1) * d];
                let o = &out[i * 2 * nb..(i + 1) * 2 * nb];
                let mut sum_log_sigma = 0.0;
                for (c, &col) in layer.moved.iter().enumerate() {
                    let th = (o[nb + c] / LOG_SCALE_BOUND).tanh();
                    let log_sigma = LOG_SCALE_BOUND * th;
                    t[i * nb + c] = th;
                    sum_log_sigma += log_sigma;
                    match dir {
                        Direction::Forward => {
                            moved[i * nb + c] = row[col];
                            row[col] = o[c] + log_sigma.exp() * row[col];
                        }
                        Direction::Inverse => {
                            row[col] = (row[col] - o[c]) * (-log_sigma).exp();
                            moved[i * nb + c] = row[col];
                        }
                    }
                }
                ld[i] += match dir {
                    Direction::Forward => sum_log_sigma,
                    Direction::Inverse => -sum_log_sigma,
                };
            }
            if z.iter().any(|v| !v.is_finite()) || ld.iter().any(|v| !v.is_finite()) {
                return Err(Error::Flow { layer: k });
            }
            if record {
                tape.layers.push(LayerTape { index: k, xa, acts, t, moved });
            }
        }
        Ok((z, ld, tape))
    }

    /// Runs the conditioner MLP of layer `k`; returns the output and the
    /// post-activation hidden values.
    fn conditioner(&self, k: usize, xa: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let layer = &self.layers[k];
        let depth = layer.widths.len() - 1;
        let mut acts = Vec::with_capacity(depth - 1);
        let mut h = xa.to_vec();
        for j in 0..depth {
            let (fan_in, fan_out) = (layer.widths[j], layer.widths[j + 1]);
            let (w, b) = self.dense(k, j);
            let mut z = Vec::with_capacity(n * fan_out);
            for _ in 0..n {
                z.extend_from_slice(b);
            }
            gemm(n, fan_in, fan_out, &h, false, w, false, &mut z, 1.0);
            if j + 1 < depth {
                z.iter_mut().for_each(|v| *v = v.tanh());
                acts.push(z.clone());
            }
            h = z;
        }
        (h, acts)
    }

    /// Reverse-mode pass through a recorded run.
    ///
    /// `g_out` is `∂L/∂(output rows)` and `g_logdet` is `∂L/∂(log-det)` per row.
    /// Parameter gradients are accumulated into `g_theta`; the gradient with
    /// respect to the input rows is returned.
    pub fn backward(&self, tape: &Tape, g_out: &[f64], g_logdet: &[f64], g_theta: &mut [f64]) -> Result<Vec<f64>> {
        let n = tape.n;
        let d = self.dim;
        if g_out.len() != n * d || g_logdet.len() != n || g_theta.len() != self.theta.len() {
            return Err(Error::Shape("backward inputs do not match the recorded pass".into()));
        }
        let mut g = g_out.to_vec();
        for lt in tape.layers.iter().rev() {
            let layer = &self.layers[lt.index];
            let nb = layer.moved.len();
            let mut g_cond = vec![0.0; n * 2 * nb];
            for i in 0..n {
                let row = &mut g[i * d..(i + 1) * d];
                let gc = &mut g_cond[i * 2 * nb..(i + 1) * 2 * nb];
                for (c, &col) in layer.moved.iter().enumerate() {
                    let th = lt.t[i * nb + c];
                    let log_sigma = LOG_SCALE_BOUND * th;
                    let v = lt.moved[i * nb + c];
                    let g_log_sigma = match tape.direction {
                        Direction::Forward => {
                            // y = μ + e^{logσ} x
                            let sigma = log_sigma.exp();
                            let gy = row[col];
                            gc[c] = gy;
                            row[col] = gy * sigma;
                            gy * v * sigma + g_logdet[i]
                        }
                        Direction::Inverse => {
                            // x = (y − μ) e^{−logσ}
                            let inv = (-log_sigma).exp();
                            let gx = row[col];
                            gc[c] = -gx * inv;
                            row[col] = gx * inv;
                            -gx * v - g_logdet[i]
                        }
                    };
                    gc[nb + c] = g_log_sigma * (1.0 - th * th);
                }
            }
            let g_xa = self.conditioner_backward(lt, &g_cond, n, g_theta);
            for i in 0..n {
                for (c, &col) in layer.kept.iter().enumerate() {
                    g[i * d + col] += g_xa[i * layer.kept.len() + c];
                }
            }
        }
        if let Some(pos) = g_theta.iter().position(|v| !v.is_finite()) {
            let layer = self.layers.iter().position(|l| pos >= l.offset && pos < l.offset + l.len).unwrap_or(0);
            return Err(Error::Gradient { block: format!("coupling layer {layer}") });
        }
        Ok(g)
    }

    fn conditioner_backward(&self, lt: &LayerTape, g_top: &[f64], n: usize, g_theta: &mut [f64]) -> Vec<f64> {
        let layer = &self.layers[lt.index];
        let depth = layer.widths.len() - 1;
        let mut gz = g_top.to_vec();
        for j in (0..depth).rev() {
            let (fan_in, fan_out) = (layer.widths[j], layer.widths[j + 1]);
            let input: &[f64] = if j == 0 { &lt.xa } else { &lt.acts[j - 1] };
            let (w_off, b_off) = layer.dense_offsets(j);
            for i in 0..n {
                for (gb, v) in g_theta[b_off..b_off + fan_out].iter_mut().zip(&gz[i * fan_out..(i + 1) * fan_out]) {
                    *gb += v;
                }
            }
            gemm(fan_in, n, fan_out, input, true, &gz, false, &mut g_theta[w_off..b_off], 1.0);
            let (w, _) = self.dense(lt.index, j);
            let mut gh = vec![0.0; n * fan_in];
            gemm(n, fan_out, fan_in, &gz, false, w, true, &mut gh, 0.0);
            if j > 0 {
                for (g, a) in gh.iter_mut().zip(&lt.acts[j - 1]) {
                    *g *= 1.0 - a * a;
                }
            }
            gz = gh;
        }
        gz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone)]
struct LayerTape {
    index: usize,
    xa: Vec<f64>,
    acts: Vec<Vec<f64>>,
    t: Vec<f64>,
    /// Untransformed coordinates of the moved block (input on the forward pass, output on the inverse).
    moved: Vec<f64>,
}

/// Intermediates of a batched pass, consumed by [`FlowModel::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    direction: Direction,
    n: usize,
    layers: Vec<LayerTape>,
}

fn gather(z: &[f64], d: usize, cols: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len() / d * cols.len());
    for row in z.chunks_exact(d) {
        out.extend(cols.iter().map(|&c| row[c]));
    }
    out
}

/// `C = op(A) op(B) + beta C` for row-major `op(A): m × k`, `op(B): k × n`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], beta: f64) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // row-major blocks whose lengths are asserted.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `log q̃₁^(φ)(y) = log q̃₁(T⁻¹(y)) + log|det ∂T⁻¹/∂y|`, which integrates to the same `Z₁`.
pub fn transformed_log_unnorm<D: TargetDensity + ?Sized>(model: &FlowModel, base: &D, y: &[f64]) -> Result<f64> {
    if base.dim() != model.dim() {
        return Err(Error::Shape(format!("flow dimension {} vs density dimension {}", model.dim(), base.dim())));
    }
    let (x, ld) = model.inverse(y)?;
    Ok(base.log_unnorm(&x) + ld)
}

/// The push-forward of `base` through a fixed flow, as a density in its own right.
#[derive(Debug, Clone)]
pub struct Transformed<D> {
    model: FlowModel,
    base: D,
}

impl<D: TargetDensity> Transformed<D> {
    pub fn new(model: FlowModel, base: D) -> Result<Self> {
        if base.dim() != model.dim() {
            return Err(Error::Shape(format!("flow dimension {} vs density dimension {}", model.dim(), base.dim())));
        }
        Ok(Transformed { model, base })
    }

    pub fn model(&self) -> &FlowModel {
        &self.model
    }

    pub fn base(&self) -> &D {
        &self.base
    }
}

impl<D: TargetDensity> TargetDensity for Transformed<D> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn name(&self) -> alloc::string::String {
        format!("T({})", self.base.name())
    }

    fn log_unnorm(&self, y: &[f64]) -> f64 {
        transformed_log_unnorm(&self.model, &self.base, y).unwrap_or(f64::NAN)
    }

    fn log_unnorm_grad(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        let mut run = || -> Result<f64> {
            let (x, ld, tape) = self.model.inverse_tape(y)?;
            let mut gx = vec![0.0; x.len()];
            let v = self.base.log_unnorm_grad(&x, &mut gx) + ld[0];
            let mut scratch = vec![0.0; self.model.param_count()];
            let gy = self.model.backward(&tape, &gx, &[1.0], &mut scratch)?;
            grad.copy_from_slice(&gy);
            Ok(v)
        };
        run().unwrap_or(f64::NAN)
    }

    fn exact_log_z(&self) -> Option<f64> {
        self.base.exact_log_z()
    }

    fn has_sampler(&self) -> bool {
        self.base.has_sampler()
    }

    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        let mut x = vec![0.0; self.dim()];
        self.base.sample_point(rng, &mut x)?;
        let (y, _) = self.model.forward(&x)?;
        out.copy_from_slice(&y);
        Ok(())
    }
}
