//! Invertible layers, chain composition and exact log-likelihoods.
//!
//! A [`FlowModel`] maps data `x` through an ordered chain of layers to an
//! unconstrained latent `z`, then (for the fixed-norm bases) through the
//! stick-breaking or stereographic map onto the support of the base
//! distribution:
//!
//! ```text
//! log p(x) = log p_base(m(z)) + log|m'(z)| + sum_i log|det J_i|
//! ```
//!
//! Every layer also exposes a reverse-mode backward pass so that
//! [`crate::training`] can compute exact gradients of the negative
//! log-likelihood.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::base::{BaseDistribution, Temperature};
use crate::error::{Error, Result};
use crate::maps::{self, SimplexPoint, SpherePoint};

/// Which parameter-free map sits between the chain and the base distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    None,
    Simplex,
    Sphere,
}

impl ManifoldKind {
    pub fn for_base(base: &BaseDistribution) -> Self {
        match base {
            BaseDistribution::Gaussian(_) => ManifoldKind::None,
            BaseDistribution::Vmf(_) => ManifoldKind::Sphere,
            BaseDistribution::Dirichlet(_) => ManifoldKind::Simplex,
        }
    }
}

/// Fully connected layer, `out = W x + b` with `W` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = 1.0 / (inputs.max(1) as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| {
                let n: f64 = StandardNormal.sample(rng);
                std * n
            })
            .collect::<Vec<f64>>();
        Dense {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weight.chunks_exact(self.inputs.max(1)).zip(&self.bias) {
            let dot: f64 = if self.inputs == 0 {
                0.0
            } else {
                row.iter().zip(x).map(|(w, v)| w * v).sum()
            };
            out.push(dot + b);
        }
        if self.inputs == 0 {
            out.clear();
            out.extend_from_slice(&self.bias);
        }
    }

    fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Dense conditioner producing `(raw log-scale, shift)` for the transformed
/// half of a coupling layer. Hidden layers use `tanh`; the output layer is
/// linear and starts at zero so the coupling is initially the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingNet {
    layers: Vec<Dense>,
}

impl CouplingNet {
    pub fn new<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = inputs;
        for &h in hidden {
            layers.push(Dense::random(prev, h, rng));
            prev = h;
        }
        layers.push(Dense::zeros(prev, outputs));
        CouplingNet { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter(
                "coupling net needs at least one layer".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::InvalidParameter(
                    "coupling net layer widths do not chain".into(),
                ));
            }
        }
        for l in &layers {
            if l.weight.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::InvalidParameter(
                    "coupling net layer has inconsistent shapes".into(),
                ));
            }
        }
        Ok(CouplingNet { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.outputs)
            .collect()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("nonempty").outputs
    }

    /// Forward pass keeping every layer's input (post-activation) for backprop.
    fn forward_cached(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i + 1 < self.layers.len() {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(std::mem::replace(&mut cur, next.clone()));
        }
        (acts, cur)
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).1
    }

    /// Accumulates parameter gradients into `grad_params` and writes the
    /// gradient with respect to the input into `grad_in`.
    fn backward(
        &self,
        acts: &[Vec<f64>],
        grad_out: &[f64],
        grad_params: &mut [f64],
        grad_in: &mut [f64],
    ) {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.num_params();
        }
        let mut g = grad_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let h = &acts[i];
            let base = offsets[i];
            let (gw, gb) =
                grad_params[base..base + layer.num_params()].split_at_mut(layer.weight.len());
            for (o, &go) in g.iter().enumerate() {
                gb[o] += go;
                if go != 0.0 {
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, hv) in row.iter_mut().zip(h) {
                        *w += go * hv;
                    }
                }
            }
            let mut gh = vec![0.0; layer.inputs];
            for (o, &go) in g.iter().enumerate() {
                if go != 0.0 {
                    let row = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                    for (acc, w) in gh.iter_mut().zip(row) {
                        *acc += go * w;
                    }
                }
            }
            if i > 0 {
                for (v, hv) in gh.iter_mut().zip(h) {
                    *v *= 1.0 - hv * hv;
                }
                g = gh;
            } else {
                grad_in.copy_from_slice(&gh);
            }
        }
    }

    fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
    }

    fn read_params(&mut self, src: &[f64]) {
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weight.len();
            l.weight.copy_from_slice(&src[off..off + n]);
            off += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&src[off..off + n]);
            off += n;
        }
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .flat_map(|l| [vec![l.outputs, l.inputs], vec![l.outputs]])
            .collect()
    }
}

pub const DEFAULT_LOG_SCALE_BOUND: f64 = 5.0;

/// Affine coupling `y_T = x_T * exp(s(x_C)) + t(x_C)`, `y_C = x_C`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineCouplingLayer {
    dim: usize,
    parity: u8,
    cond: Vec<usize>,
    trans: Vec<usize>,
    net: CouplingNet,
    bound: f64,
}

impl AffineCouplingLayer {
    /// Coupling with a half split. Even parity conditions on the first
    /// `floor(d/2)` coordinates, odd parity on the last `floor(d/2)`; the
    /// transformed half is never empty, so `d = 1` gives a learned
    /// elementwise affine map.
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        parity: u8,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let (cond, trans) = Self::split(dim, parity)?;
        let net = CouplingNet::new(cond.len(), 2 * trans.len(), hidden, rng);
        Ok(AffineCouplingLayer {
            dim,
            parity,
            cond,
            trans,
            net,
            bound: DEFAULT_LOG_SCALE_BOUND,
        })
    }

    pub fn with_net(dim: usize, parity: u8, net: CouplingNet, bound: f64) -> Result<Self> {
        let (cond, trans) = Self::split(dim, parity)?;
        if net.layers[0].inputs != cond.len() || net.outputs() != 2 * trans.len() {
            return Err(Error::InvalidParameter(format!(
                "coupling net maps {} -> {}, expected {} -> {}",
                net.layers[0].inputs,
                net.outputs(),
                cond.len(),
                2 * trans.len()
            )));
        }
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "log-scale bound must be positive, got {bound}"
            )));
        }
        Ok(AffineCouplingLayer {
            dim,
            parity,
            cond,
            trans,
            net,
            bound,
        })
    }

    fn split(dim: usize, parity: u8) -> Result<(Vec<usize>, Vec<usize>)> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        let half = dim / 2;
        Ok(match parity {
            0 => ((0..half).collect(), (half..dim).collect()),
            1 => ((dim - half..dim).collect(), (0..dim - half).collect()),
            p => {
                return Err(Error::InvalidParameter(format!(
                    "mask parity must be 0 or 1, got {p}"
                )))
            }
        })
    }

    pub fn parity(&self) -> u8 {
        self.parity
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn net(&self) -> &CouplingNet {
        &self.net
    }

    pub fn conditioning_indices(&self) -> &[usize] {
        &self.cond
    }

    pub fn transformed_indices(&self) -> &[usize] {
        &self.trans
    }

    fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.cond.iter().map(|&i| x[i]).collect()
    }

    /// Returns `(clamped log-scales, shifts)` for the transformed half.
    fn scale_shift(&self, raw: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let t = self.trans.len();
        let b = self.bound;
        let ls = raw[..t].iter().map(|r| b * (r / b).tanh()).collect();
        (ls, raw[t..].to_vec())
    }

    fn forward_row(&self, x: &[f64], y: &mut [f64]) -> f64 {
        let raw = self.net.forward(&self.gather(x));
        let (ls, shift) = self.scale_shift(&raw);
        y.copy_from_slice(x);
        let mut ld = 0.0;
        for (j, &i) in self.trans.iter().enumerate() {
            y[i] = x[i] * ls[j].exp() + shift[j];
            ld += ls[j];
        }
        ld
    }

    fn inverse_row(&self, y: &[f64], x: &mut [f64]) {
        // the conditioning half passes through unchanged
        let raw = self.net.forward(&self.gather(y));
        let (ls, shift) = self.scale_shift(&raw);
        x.copy_from_slice(y);
        for (j, &i) in self.trans.iter().enumerate() {
            x[i] = (y[i] - shift[j]) * (-ls[j]).exp();
        }
    }

    fn backward_row(&self, x: &[f64], gy: &[f64], g_ld: f64, gx: &mut [f64], gp: &mut [f64]) {
        let xc = self.gather(x);
        let (acts, raw) = self.net.forward_cached(&xc);
        let t = self.trans.len();
        let b = self.bound;
        let mut g_raw = vec![0.0; 2 * t];
        gx.copy_from_slice(gy);
        for (j, &i) in self.trans.iter().enumerate() {
            let th = (raw[j] / b).tanh();
            let scale = (b * th).exp();
            gx[i] = gy[i] * scale;
            let g_ls = gy[i] * x[i] * scale + g_ld;
            g_raw[j] = g_ls * (1.0 - th * th);
            g_raw[t + j] = gy[i];
        }
        let mut g_cond = vec![0.0; self.cond.len()];
        self.net.backward(&acts, &g_raw, gp, &mut g_cond);
        for (k, &i) in self.cond.iter().enumerate() {
            gx[i] += g_cond[k];
        }
    }
}

/// Per-dimension affine normalization `y = scale * x + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActNormLayer {
    scale: Vec<f64>,
    bias: Vec<f64>,
    initialized: bool,
}

impl ActNormLayer {
    /// Identity, awaiting data-dependent initialization.
    pub fn new(dim: usize) -> Self {
        ActNormLayer {
            scale: vec![1.0; dim],
            bias: vec![0.0; dim],
            initialized: false,
        }
    }

    pub fn from_params(scale: Vec<f64>, bias: Vec<f64>, initialized: bool) -> Result<Self> {
        if scale.len() != bias.len() {
            return Err(Error::DimensionMismatch {
                expected: scale.len(),
                got: bias.len(),
            });
        }
        if scale.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            return Err(Error::InvalidParameter(
                "actnorm scale must be finite and nonzero".into(),
            ));
        }
        Ok(ActNormLayer {
            scale,
            bias,
            initialized,
        })
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Sets scale and bias so that `inputs` come out with zero mean and unit
    /// variance in every dimension.
    pub fn initialize_from(&mut self, inputs: &Array2<f64>) {
        let n = inputs.nrows().max(1) as f64;
        for (j, col) in inputs.columns().into_iter().enumerate() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt().max(1e-6);
            self.scale[j] = 1.0 / std;
            self.bias[j] = -mean / std;
        }
        self.initialized = true;
    }

    fn forward_row(&self, x: &[f64], y: &mut [f64]) -> f64 {
        let mut ld = 0.0;
        for i in 0..x.len() {
            y[i] = self.scale[i] * x[i] + self.bias[i];
            ld += self.scale[i].abs().ln();
        }
        ld
    }

    fn inverse_row(&self, y: &[f64], x: &mut [f64]) {
        for i in 0..y.len() {
            x[i] = (y[i] - self.bias[i]) / self.scale[i];
        }
    }

    fn backward_row(&self, x: &[f64], gy: &[f64], g_ld: f64, gx: &mut [f64], gp: &mut [f64]) {
        let d = x.len();
        let (gs, gb) = gp.split_at_mut(d);
        for i in 0..d {
            gx[i] = gy[i] * self.scale[i];
            gs[i] += gy[i] * x[i] + g_ld / self.scale[i];
            gb[i] += gy[i];
        }
    }
}

/// Fixed coordinate permutation, `y[i] = x[perm[i]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationLayer {
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl PermutationLayer {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut inv = vec![usize::MAX; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            if p >= perm.len() || inv[p] != usize::MAX {
                return Err(Error::InvalidParameter(format!(
                    "{perm:?} is not a permutation"
                )));
            }
            inv[p] = i;
        }
        Ok(PermutationLayer { perm, inv })
    }

    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..dim).collect();
        // Fisher-Yates
        for i in (1..dim).rev() {
            let j = Uniform::new_inclusive(0, i)
                .expect("valid range")
                .sample(rng);
            perm.swap(i, j);
        }
        Self::new(perm).expect("shuffled identity is a permutation")
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// The inverse permutation as its own layer.
    pub fn inverse_layer(&self) -> PermutationLayer {
        PermutationLayer {
            perm: self.inv.clone(),
            inv: self.perm.clone(),
        }
    }

    fn forward_row(&self, x: &[f64], y: &mut [f64]) {
        for (yi, &p) in y.iter_mut().zip(&self.perm) {
            *yi = x[p];
        }
    }

    fn inverse_row(&self, y: &[f64], x: &mut [f64]) {
        for (xi, &q) in x.iter_mut().zip(&self.inv) {
            *xi = y[q];
        }
    }

    fn backward_row(&self, gy: &[f64], gx: &mut [f64]) {
        for (i, &p) in self.perm.iter().enumerate() {
            gx[p] = gy[i];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    ActNorm(ActNormLayer),
    Permutation(PermutationLayer),
    AffineCoupling(AffineCouplingLayer),
}

impl Layer {
    pub fn dim(&self) -> usize {
        match self {
            Layer::ActNorm(l) => l.scale.len(),
            Layer::Permutation(l) => l.perm.len(),
            Layer::AffineCoupling(l) => l.dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::ActNorm(_) => "actnorm",
            Layer::Permutation(_) => "permutation",
            Layer::AffineCoupling(_) => "affine_coupling",
        }
    }

    /// Writes `f(x)` into `y` and returns `log|det J_f(x)|`.
    pub fn forward_row(&self, x: &[f64], y: &mut [f64]) -> f64 {
        match self {
            Layer::ActNorm(l) => l.forward_row(x, y),
            Layer::Permutation(l) => {
                l.forward_row(x, y);
                0.0
            }
            Layer::AffineCoupling(l) => l.forward_row(x, y),
        }
    }

    pub fn inverse_row(&self, y: &[f64], x: &mut [f64]) {
        match self {
            Layer::ActNorm(l) => l.inverse_row(y, x),
            Layer::Permutation(l) => l.inverse_row(y, x),
            Layer::AffineCoupling(l) => l.inverse_row(y, x),
        }
    }

    /// Reverse-mode step. Given the layer input `x`, `dL/dy` and `dL/d log_det`,
    /// writes `dL/dx` and accumulates `dL/dtheta` into `grad_params`.
    pub fn backward_row(
        &self,
        x: &[f64],
        grad_y: &[f64],
        grad_log_det: f64,
        grad_x: &mut [f64],
        grad_params: &mut [f64],
    ) {
        match self {
            Layer::ActNorm(l) => l.backward_row(x, grad_y, grad_log_det, grad_x, grad_params),
            Layer::Permutation(l) => l.backward_row(grad_y, grad_x),
            Layer::AffineCoupling(l) => {
                l.backward_row(x, grad_y, grad_log_det, grad_x, grad_params)
            }
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Layer::ActNorm(l) => 2 * l.scale.len(),
            Layer::Permutation(_) => 0,
            Layer::AffineCoupling(l) => l.net.num_params(),
        }
    }

    /// Shapes of the parameter tensors, in flattening order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            Layer::ActNorm(l) => vec![vec![l.scale.len()], vec![l.bias.len()]],
            Layer::Permutation(_) => Vec::new(),
            Layer::AffineCoupling(l) => l.net.shapes(),
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        match self {
            Layer::ActNorm(l) => {
                out.extend_from_slice(&l.scale);
                out.extend_from_slice(&l.bias);
            }
            Layer::Permutation(_) => {}
            Layer::AffineCoupling(l) => l.net.write_params(out),
        }
    }

    pub fn read_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: src.len(),
            });
        }
        match self {
            Layer::ActNorm(l) => {
                let d = l.scale.len();
                if src[..d].iter().any(|s| *s == 0.0 || !s.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "actnorm scale must be finite and nonzero".into(),
                    ));
                }
                l.scale.copy_from_slice(&src[..d]);
                l.bias.copy_from_slice(&src[d..]);
            }
            Layer::Permutation(_) => {}
            Layer::AffineCoupling(l) => l.net.read_params(src),
        }
        Ok(())
    }
}

/// Architecture record. Multi-scale levels are flattened into a single chain
/// of `levels * steps` flow steps; each step is ActNorm, a random
/// permutation and an affine coupling with alternating mask parity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub levels: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub levels: usize,
    pub steps: usize,
    pub hidden: Vec<usize>,
    pub actnorm: bool,
    pub permute: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            levels: 1,
            steps: 8,
            hidden: vec![64, 64],
            actnorm: true,
            permute: true,
        }
    }
}

/// How data values should be interpreted when converting to bits per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Continuous,
    /// Integer-valued data in `[0, 2^bit_depth)`, dequantized with uniform
    /// noise and rescaled to `[0, 1)` before evaluation.
    Quantized {
        bit_depth: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    dim: usize,
    layers: Vec<Layer>,
    base: BaseDistribution,
    arch: Architecture,
}

/// Result of mapping data all the way onto the base distribution's support.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// Unconstrained latents (chain output), `n x d`.
    pub latents: Array2<f64>,
    /// Points on the support of the base: latents for the Gaussian,
    /// `n x (d+1)` sphere or simplex points otherwise.
    pub points: Array2<f64>,
    /// Total log density-change, including the manifold map term.
    pub log_det: Vec<f64>,
}

impl FlowModel {
    pub fn new(layers: Vec<Layer>, base: BaseDistribution) -> Result<Self> {
        let dim = base.dim();
        for (i, l) in layers.iter().enumerate() {
            if l.dim() != dim {
                return Err(Error::InvalidParameter(format!(
                    "layer {i} ({}) has dimension {}, base has {dim}",
                    l.name(),
                    l.dim()
                )));
            }
        }
        Ok(FlowModel {
            dim,
            layers,
            base,
            arch: Architecture {
                levels: 1,
                steps: 0,
            },
        })
    }

    pub fn build<R: Rng + ?Sized>(
        cfg: &ArchConfig,
        base: BaseDistribution,
        rng: &mut R,
    ) -> Result<Self> {
        let d = base.dim();
        let mut layers = Vec::new();
        for step in 0..cfg.levels * cfg.steps {
            if cfg.actnorm {
                layers.push(Layer::ActNorm(ActNormLayer::new(d)));
            }
            if cfg.permute {
                layers.push(Layer::Permutation(PermutationLayer::random(d, rng)));
            }
            layers.push(Layer::AffineCoupling(AffineCouplingLayer::new(
                d,
                (step % 2) as u8,
                &cfg.hidden,
                rng,
            )?));
        }
        let mut model = Self::new(layers, base)?;
        model.arch = Architecture {
            levels: cfg.levels,
            steps: cfg.steps,
        };
        Ok(model)
    }

    pub fn with_architecture(mut self, arch: Architecture) -> Self {
        self.arch = arch;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn base(&self) -> &BaseDistribution {
        &self.base
    }

    pub fn manifold(&self) -> ManifoldKind {
        ManifoldKind::for_base(&self.base)
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    fn check_cols(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }

    /// Runs one example through the chain. Returns the latent and the summed
    /// layer log-determinants (manifold map excluded).
    pub(crate) fn chain_forward_row(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut cur = x.to_vec();
        let mut next = vec![0.0; self.dim];
        let mut total = 0.0;
        for (i, layer) in self.layers.iter().enumerate() {
            let ld = layer.forward_row(&cur, &mut next);
            if !ld.is_finite() || next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: Some(i),
                    msg: format!("{} produced a non-finite output", layer.name()),
                });
            }
            total += ld;
            std::mem::swap(&mut cur, &mut next);
        }
        Ok((cur, total))
    }

    pub(crate) fn chain_inverse_row(&self, z: &[f64]) -> Vec<f64> {
        let mut cur = z.to_vec();
        let mut next = vec![0.0; self.dim];
        for layer in self.layers.iter().rev() {
            layer.inverse_row(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Log-density of a latent under the base, including the manifold map
    /// term. Returns `(log p_base(m(z)), log|m'(z)|)`.
    pub(crate) fn latent_log_density(&self, z: &[f64]) -> Result<(f64, f64)> {
        match &self.base {
            BaseDistribution::Gaussian(g) => Ok((g.log_density(z)?, 0.0)),
            BaseDistribution::Vmf(v) => {
                let r = maps::sphere_forward(z);
                Ok((v.log_density_unchecked(r.point.coords()), r.log_det))
            }
            BaseDistribution::Dirichlet(b) => {
                let r = maps::simplex_forward(z);
                Ok((b.log_density_from_log_coords(&r.log_coords), r.log_det))
            }
        }
    }

    /// Data to unconstrained latents. The returned log-det includes the
    /// manifold map term when the base lives on a sphere or simplex.
    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
        self.check_cols(x.ncols())?;
        let mut latents = Array2::zeros(x.raw_dim());
        let mut log_det = Vec::with_capacity(x.nrows());
        for (i, row) in x.rows().into_iter().enumerate() {
            let (z, ld) = self.chain_forward_row(&row_vec(row))?;
            let map_ld = match self.manifold() {
                ManifoldKind::None => 0.0,
                ManifoldKind::Sphere => maps::sphere_forward(&z).log_det,
                ManifoldKind::Simplex => maps::simplex_forward(&z).log_det,
            };
            latents.row_mut(i).assign(&ArrayView1::from(&z));
            log_det.push(ld + map_ld);
        }
        Ok((latents, log_det))
    }

    /// Data all the way to points on the base distribution's support.
    pub fn encode(&self, x: &Array2<f64>) -> Result<Encoded> {
        let (latents, log_det) = self.forward(x)?;
        let points = self.latents_to_points(&latents);
        Ok(Encoded {
            latents,
            points,
            log_det,
        })
    }

    pub fn latents_to_points(&self, latents: &Array2<f64>) -> Array2<f64> {
        let cols = self.base.point_dim();
        let mut points = Array2::zeros((latents.nrows(), cols));
        for (i, row) in latents.rows().into_iter().enumerate() {
            let z = row_vec(row);
            let p = match self.manifold() {
                ManifoldKind::None => z,
                ManifoldKind::Sphere => maps::sphere_forward(&z).point.into_inner(),
                ManifoldKind::Simplex => maps::simplex_forward(&z).point.into_inner(),
            };
            points.row_mut(i).assign(&ArrayView1::from(&p));
        }
        points
    }

    /// Points on the base support back to unconstrained latents.
    pub fn points_to_latents(&self, points: &Array2<f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.base.point_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.base.point_dim(),
                got: points.ncols(),
            });
        }
        let mut out = Array2::zeros((points.nrows(), self.dim));
        for (i, row) in points.rows().into_iter().enumerate() {
            let p = row_vec(row);
            let z = match self.manifold() {
                ManifoldKind::None => p,
                ManifoldKind::Sphere => maps::sphere_inverse(&SpherePoint::new(p)?)?,
                ManifoldKind::Simplex => maps::simplex_inverse(&SimplexPoint::new(p)?),
            };
            out.row_mut(i).assign(&ArrayView1::from(&z));
        }
        Ok(out)
    }

    /// Unconstrained latents back to data.
    pub fn inverse(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_cols(z.ncols())?;
        let mut out = Array2::zeros(z.raw_dim());
        for (i, row) in z.rows().into_iter().enumerate() {
            let x = self.chain_inverse_row(&row_vec(row));
            out.row_mut(i).assign(&ArrayView1::from(&x));
        }
        Ok(out)
    }

    /// Support points back to data.
    pub fn decode(&self, points: &Array2<f64>) -> Result<Array2<f64>> {
        self.inverse(&self.points_to_latents(points)?)
    }

    /// Exact per-example `log p(x)`.
    pub fn log_prob(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        self.check_cols(x.ncols())?;
        x.rows()
            .into_iter()
            .map(|row| {
                let (z, ld) = self.chain_forward_row(&row_vec(row))?;
                let (lp, map_ld) = self.latent_log_density(&z)?;
                Ok(lp + map_ld + ld)
            })
            .collect()
    }

    /// Mean bits per dimension, `-log2 p(x) / d`.
    pub fn bits_per_dim<R: Rng + ?Sized>(
        &self,
        x: &Array2<f64>,
        kind: DataKind,
        rng: &mut R,
    ) -> Result<f64> {
        if x.nrows() == 0 {
            return Err(Error::Empty(
                "bits_per_dim needs at least one example".into(),
            ));
        }
        let d = self.dim as f64;
        match kind {
            DataKind::Continuous => {
                let lp = self.log_prob(x)?;
                Ok(-lp.iter().sum::<f64>() / (lp.len() as f64 * d * std::f64::consts::LN_2))
            }
            DataKind::Quantized { bit_depth } => {
                if bit_depth == 0 || bit_depth > 32 {
                    return Err(Error::InvalidParameter(format!(
                        "bit depth {bit_depth} out of range"
                    )));
                }
                let levels = (1u64 << bit_depth) as f64;
                if let Some(v) = x
                    .iter()
                    .find(|v| v.fract() != 0.0 || **v < 0.0 || **v >= levels)
                {
                    return Err(Error::InvalidParameter(format!(
                        "quantized value {v} is not an integer in [0, {levels})"
                    )));
                }
                let y = x.mapv(|v| (v + rng.random::<f64>()) / levels);
                let lp = self.log_prob(&y)?;
                // density of the bin: p(y) * (1/levels)^d
                let bin = d * levels.ln();
                let nll = -lp.iter().map(|l| l - bin).sum::<f64>() / lp.len() as f64;
                Ok(nll / (d * std::f64::consts::LN_2))
            }
        }
    }

    /// Decoded samples from the (tempered) base distribution.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        temp: Temperature,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        let points = self.base.sample(n, temp, rng)?;
        self.decode(&points)
    }

    /// Data-dependent initialization of every uninitialized ActNorm layer,
    /// in chain order, from the activations of `x`.
    pub fn initialize_actnorm(&mut self, x: &Array2<f64>) -> Result<()> {
        self.check_cols(x.ncols())?;
        let mut cur = x.clone();
        for layer in self.layers.iter_mut() {
            if let Layer::ActNorm(a) = layer {
                if !a.initialized {
                    a.initialize_from(&cur);
                }
            }
            let mut next = Array2::zeros(cur.raw_dim());
            let mut buf = vec![0.0; cur.ncols()];
            for (i, row) in cur.rows().into_iter().enumerate() {
                layer.forward_row(&row_vec(row), &mut buf);
                next.row_mut(i).assign(&ArrayView1::from(&buf));
            }
            cur = next;
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// All trainable parameters, layer by layer in chain order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            l.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.num_params();
            l.read_params(&params[off..off + n])?;
            off += n;
        }
        Ok(())
    }
}

pub(crate) fn row_vec(row: ArrayView1<f64>) -> Vec<f64> {
    row.iter().copied().collect()
}
