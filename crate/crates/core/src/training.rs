//! Maximum-likelihood training: analytic gradients of the mean negative
//! log-likelihood, gradient clipping, Adam with a linear warm-up, and the
//! epoch loop.
//!
//! Gradients are computed by reverse-mode accumulation through the layer
//! chain, one example at a time, and summed. Everything runs on the calling
//! thread so that a fixed seed reproduces the loss trace bit for bit.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base::BaseDistribution;
use crate::error::{Error, Result};
use crate::flow::{row_vec, FlowModel};
use crate::maps;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub warmup_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            clip_norm: 50.0,
            warmup_epochs: 10,
            epochs: 100,
            batch_size: 128,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, one message each. Empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = |name: &str, v: f64, out: &mut Vec<String>| {
            if !(v > 0.0) || !v.is_finite() {
                out.push(format!("{name} must be positive and finite, got {v}"));
            }
        };
        positive("learning_rate", self.learning_rate, &mut out);
        positive("clip_norm", self.clip_norm, &mut out);
        positive("eps", self.eps, &mut out);
        if self.batch_size == 0 {
            out.push("batch_size must be >= 1".into());
        }
        if self.warmup_epochs == 0 {
            out.push("warmup_epochs must be >= 1".into());
        }
        // a zero-epoch run is a no-op and exempt from the warm-up bound
        if self.epochs > 0 && self.warmup_epochs > self.epochs {
            out.push(format!(
                "warmup_epochs ({}) exceeds epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                out.push(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(v.join("; ")))
        }
    }
}

/// Mean negative log-likelihood of `batch` and its gradient with respect to
/// [`FlowModel::params`].
pub fn gradient(model: &FlowModel, batch: &Array2<f64>) -> Result<(f64, Vec<f64>)> {
    let d = model.dim();
    if batch.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: batch.ncols(),
        });
    }
    let n = batch.nrows();
    if n == 0 {
        return Err(Error::Empty("gradient needs at least one example".into()));
    }
    let layers = model.layers();
    let mut offsets = Vec::with_capacity(layers.len());
    let mut total = 0;
    for l in layers {
        offsets.push(total);
        total += l.num_params();
    }

    let w = 1.0 / n as f64;
    let mut grads = vec![0.0; total];
    let mut loss = 0.0;
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    let mut gz = vec![0.0; d];
    let mut gx = vec![0.0; d];

    for row in batch.rows() {
        inputs.clear();
        let mut cur = row_vec(row);
        let mut chain_ld = 0.0;
        for (i, layer) in layers.iter().enumerate() {
            let mut next = vec![0.0; d];
            let ld = layer.forward_row(&cur, &mut next);
            if !ld.is_finite() || next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: Some(i),
                    msg: format!("{} produced a non-finite output", layer.name()),
                });
            }
            chain_ld += ld;
            inputs.push(std::mem::replace(&mut cur, next));
        }
        let z = cur;

        // base density and manifold map; gz receives dL/dz for this row
        let lp = match model.base() {
            BaseDistribution::Gaussian(g) => {
                g.grad_log_density(&z, &mut gz);
                gz.iter_mut().for_each(|v| *v *= -w);
                g.log_density(&z)?
            }
            BaseDistribution::Vmf(v) => {
                let r = maps::sphere_forward(&z);
                let mut gp = vec![0.0; d + 1];
                v.grad_log_density(&mut gp);
                gp.iter_mut().for_each(|g| *g *= -w);
                maps::sphere_backward(&z, &gp, -w, &mut gz);
                v.log_density_unchecked(r.point.coords()) + r.log_det
            }
            BaseDistribution::Dirichlet(b) => {
                let r = maps::simplex_forward(&z);
                let mut gl = vec![0.0; d + 1];
                b.grad_log_density_log_coords(&mut gl);
                gl.iter_mut().for_each(|g| *g *= -w);
                maps::simplex_backward(&z, &gl, -w, &mut gz);
                b.log_density_from_log_coords(&r.log_coords) + r.log_det
            }
        };
        let nll = -(lp + chain_ld);
        if !nll.is_finite() || gz.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: None,
                msg: format!(
                    "{} base produced a non-finite loss {nll}",
                    model.base().kind_name()
                ),
            });
        }
        loss += w * nll;

        for (i, layer) in layers.iter().enumerate().rev() {
            let np = layer.num_params();
            let gp = &mut grads[offsets[i]..offsets[i] + np];
            layer.backward_row(&inputs[i], &gz, -w, &mut gx, gp);
            if gx.iter().chain(gp.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: Some(i),
                    msg: format!("{} produced a non-finite gradient", layer.name()),
                });
            }
            std::mem::swap(&mut gz, &mut gx);
        }
    }
    Ok((loss, grads))
}

pub fn global_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales `grads` in place so the global 2-norm is at most `clip_norm`.
/// Returns the norm before clipping.
///
/// # Panics
/// If `clip_norm` is not positive.
pub fn clip_gradients(grads: &mut [f64], clip_norm: f64) -> f64 {
    assert!(clip_norm > 0.0, "clip_norm must be positive");
    let g = global_norm(grads);
    if g > clip_norm {
        let s = clip_norm / g;
        grads.iter_mut().for_each(|v| *v *= s);
    }
    g
}

/// Learning-rate multiplier `(epoch + 1) / warmup_epochs`, capped at 1.
pub fn warmup_factor(epoch: usize, warmup_epochs: usize) -> f64 {
    if epoch >= warmup_epochs {
        1.0
    } else {
        (epoch + 1) as f64 / warmup_epochs as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        AdamState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam update of `params` with learning rate `lr`.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    for len in [params.len(), grads.len()] {
        if len != state.len() {
            return Err(Error::DimensionMismatch {
                expected: state.len(),
                got: len,
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Relative error is `|a - f| / max(|a|, |f|, floor)`; the floor keeps
/// parameters with vanishing gradients from dividing noise by noise.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub rel_errors: Vec<f64>,
}

impl GradientCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// Index of the parameter with the largest relative error.
    pub fn worst(&self) -> Option<usize> {
        self.rel_errors
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }
}

/// Compares [`gradient`] with central differences of step `h` on every parameter.
pub fn check_gradients(
    model: &FlowModel,
    batch: &Array2<f64>,
    h: f64,
) -> Result<GradientCheckReport> {
    let (_, analytic) = gradient(model, batch)?;
    let base = model.params();
    let mut probe = model.clone();
    let mut p = base.clone();
    let mean_nll = |m: &FlowModel| -> Result<f64> {
        let lp = m.log_prob(batch)?;
        Ok(-lp.iter().sum::<f64>() / lp.len() as f64)
    };
    let mut numeric = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        p[i] = base[i] + h;
        probe.set_params(&p)?;
        let up = mean_nll(&probe)?;
        p[i] = base[i] - h;
        probe.set_params(&p)?;
        let dn = mean_nll(&probe)?;
        p[i] = base[i];
        numeric.push((up - dn) / (2.0 * h));
    }
    let rel_errors = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(GRAD_CHECK_FLOOR))
        .collect();
    Ok(GradientCheckReport {
        analytic,
        numeric,
        rel_errors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean negative log-likelihood over the epoch's batches, nats per example.
    pub nll: f64,
    pub bpd: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub records: Vec<EpochRecord>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,nll,bpd\n");
        for r in &self.records {
            s.push_str(&format!("{},{},{}\n", r.epoch, r.nll, r.bpd));
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Mean negative log-likelihood of `data` under `model`, nats per example.
pub fn mean_nll(model: &FlowModel, data: &Array2<f64>) -> Result<f64> {
    if data.nrows() == 0 {
        return Err(Error::Empty("mean_nll needs at least one example".into()));
    }
    let lp = model.log_prob(data)?;
    Ok(-lp.iter().sum::<f64>() / lp.len() as f64)
}

/// Trains `model` in place for `cfg.epochs` epochs, without early stopping.
///
/// Uninitialized ActNorm layers are initialized from the first mini-batch.
/// The final batch of an epoch may be smaller than `batch_size`.
pub fn train(model: &mut FlowModel, data: &Array2<f64>, cfg: &TrainConfig) -> Result<LossTrace> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(Error::Empty("training set is empty".into()));
    }
    if data.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: data.ncols(),
        });
    }
    let n = data.nrows();
    let d = model.dim() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState::new(model.num_params());
    let mut params = model.params();
    let mut trace = LossTrace::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.learning_rate * warmup_factor(epoch, cfg.warmup_epochs);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.select(Axis(0), idx);
            if epoch == 0 && b == 0 {
                model.initialize_actnorm(&batch)?;
                params = model.params();
                adam = AdamState::new(params.len());
            }
            let (loss, mut grads) = gradient(model, &batch).map_err(|e| match e {
                Error::NonFinite { layer, msg } => Error::NonFinite {
                    layer,
                    msg: format!("epoch {epoch}, batch {b}: {msg}"),
                },
                other => other,
            })?;
            clip_gradients(&mut grads, cfg.clip_norm);
            adam_step(&mut adam, &mut params, &grads, lr, cfg)?;
            model.set_params(&params)?;
            epoch_loss += loss * idx.len() as f64;
        }
        let nll = epoch_loss / n as f64;
        let bpd = nll / (d * std::f64::consts::LN_2);
        log::info!("epoch {epoch}: nll {nll:.5} bpd {bpd:.5} lr {lr:.2e}");
        trace.records.push(EpochRecord { epoch, nll, bpd });
    }
    Ok(trace)
}
