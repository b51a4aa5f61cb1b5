//! Conditional flow matching: linear probability paths between a standard
//! Gaussian and the data distribution, a small MLP velocity field
//! `v(h_t, t, descriptor)`, the regression loss, and an Adam training loop
//! with a hand-written backward pass.
//!
//! Nothing in this module knows about grasp quality or physical scoring;
//! the objective is purely the mean squared deviation from the path's
//! target velocity. Sampling-time corrections live elsewhere.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::math;
use crate::rng;

/// Time embedding fed to the model next to state and descriptor: the raw
/// scalar plus one sine/cosine pair.
pub const TIME_FEATURES: usize = 3;

pub fn time_features(t: f64) -> [f64; TIME_FEATURES] {
    let a = core::f64::consts::TAU * t;
    [t, a.sin(), a.cos()]
}

/// `h_t = (1 - (1 - sigma_min) t) h0 + t h1`: straight interpolation with a
/// residual noise floor `sigma_min` at the data end.
pub fn interpolate_path(h0: &[f64], h1: &[f64], t: f64, sigma_min: f64) -> Result<Vec<f64>> {
    if h0.len() != h1.len() {
        return Err(Error::input(format!(
            "path endpoints disagree: {} vs {}",
            h0.len(),
            h1.len()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::input(format!("path time {t} outside [0, 1]")));
    }
    let a = 1.0 - (1.0 - sigma_min) * t;
    Ok(h0.iter().zip(h1).map(|(x0, x1)| a * x0 + t * x1).collect())
}

/// Velocity of the linear path; constant along `t`.
pub fn target_velocity(h0: &[f64], h1: &[f64], sigma_min: f64) -> Vec<f64> {
    h0.iter()
        .zip(h1)
        .map(|(x0, x1)| x1 - (1.0 - sigma_min) * x0)
        .collect()
}

/// Anything that can serve as the velocity field during integration:
/// the trained model, or analytic fields in tests.
pub trait VelocityField {
    fn velocity(&self, h: &[f64], t: f64, descriptor: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layer {
    rows: usize,
    cols: usize,
    /// Row-major `rows x cols`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.b[r];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }

    /// `x += W^T d` accumulation used when propagating deltas backward.
    fn back_input(&self, d: &[f64], out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let dr = d[r];
            for (o, wi) in out.iter_mut().zip(row) {
                *o += wi * dr;
            }
        }
    }
}

/// Fully connected tanh network from `[state, time features, descriptor]`
/// to a `state_dim` velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityModel {
    state_dim: usize,
    descriptor_dim: usize,
    layers: Vec<Layer>,
}

pub const DEFAULT_HIDDEN: [usize; 3] = [128, 128, 128];

impl VelocityModel {
    /// Xavier-uniform initialisation, reproducible from `seed`.
    pub fn new(
        state_dim: usize,
        descriptor_dim: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::config("state_dim must be positive"));
        }
        if hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(state_dim + TIME_FEATURES + descriptor_dim);
        dims.extend_from_slice(hidden);
        dims.push(state_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (cols, rows) = (dims[l], dims[l + 1]);
            let limit = (6.0 / (cols + rows) as f64).sqrt();
            let mut r = rng::stream(seed, "model-init", &[l as u64]);
            let w = (0..rows * cols)
                .map(|_| r.random_range(-limit..limit))
                .collect();
            layers.push(Layer { rows, cols, w, b: vec![0.0; rows] });
        }
        Ok(VelocityModel { state_dim, descriptor_dim, layers })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_dim
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + TIME_FEATURES + self.descriptor_dim
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.rows).collect()
    }

    /// Post-deserialization shape audit: layer chain consistent, finite
    /// parameters.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("model has no layers"));
        }
        let mut expect = self.input_dim();
        for (i, l) in self.layers.iter().enumerate() {
            if l.cols != expect || l.w.len() != l.rows * l.cols || l.b.len() != l.rows {
                return Err(Error::config(format!("layer {i} shape mismatch")));
            }
            if !math::all_finite(&l.w) || !math::all_finite(&l.b) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
            expect = l.rows;
        }
        if expect != self.state_dim {
            return Err(Error::config("output dimension differs from state_dim"));
        }
        Ok(())
    }

    fn assemble_input(&self, h: &[f64], t: f64, descriptor: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.state_dim {
            return Err(Error::config(format!(
                "state has {} dims, model expects {}",
                h.len(),
                self.state_dim
            )));
        }
        if descriptor.len() != self.descriptor_dim {
            return Err(Error::config(format!(
                "descriptor has {} dims, model expects {}",
                descriptor.len(),
                self.descriptor_dim
            )));
        }
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(h);
        x.extend_from_slice(&time_features(t));
        x.extend_from_slice(descriptor);
        Ok(x)
    }

    /// Forward pass keeping every post-activation, for backprop.
    fn forward_cached(&self, input: Vec<f64>) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        let mut buf = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(acts.last().expect("nonempty"), &mut buf);
            if i + 1 < self.layers.len() {
                for v in buf.iter_mut() {
                    *v = v.tanh();
                }
            }
            acts.push(buf.clone());
        }
        acts
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat parameter indexing (layer 0 weights row-major, layer 0 biases,
    /// layer 1 weights, ...), shared with [`Gradients::flatten`].
    pub fn get_param(&self, mut i: usize) -> f64 {
        for l in &self.layers {
            if i < l.w.len() {
                return l.w[i];
            }
            i -= l.w.len();
            if i < l.b.len() {
                return l.b[i];
            }
            i -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut i: usize, v: f64) {
        for l in &mut self.layers {
            if i < l.w.len() {
                l.w[i] = v;
                return;
            }
            i -= l.w.len();
            if i < l.b.len() {
                l.b[i] = v;
                return;
            }
            i -= l.b.len();
        }
        panic!("parameter index out of range");
    }
}

impl VelocityField for VelocityModel {
    fn velocity(&self, h: &[f64], t: f64, descriptor: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.assemble_input(h, t, descriptor)?;
        let mut buf = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&x, &mut buf);
            if i + 1 < self.layers.len() {
                for v in buf.iter_mut() {
                    *v = v.tanh();
                }
            }
            core::mem::swap(&mut x, &mut buf);
        }
        Ok(x)
    }
}

impl<V: VelocityField + ?Sized> VelocityField for &V {
    fn velocity(&self, h: &[f64], t: f64, descriptor: &[f64]) -> Result<Vec<f64>> {
        (*self).velocity(h, t, descriptor)
    }
}

/// One supervised example: a data-space grasp (already standardized) and the
/// conditioning descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainItem {
    pub target: Vec<f64>,
    pub descriptor: Vec<f64>,
}

/// The stochastic part of one loss term: path time and source noise.
#[derive(Clone, Debug, PartialEq)]
pub struct PathDraw {
    pub t: f64,
    pub h0: Vec<f64>,
}

pub fn path_draw<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> PathDraw {
    PathDraw {
        t: rng.random_range(0.0..1.0),
        h0: (0..dim).map(|_| rng::standard_normal(rng)).collect(),
    }
}

/// Draw keyed by item content, so the loss does not depend on batch order.
fn content_draw(base: u64, item: &TrainItem) -> PathDraw {
    let mut words: Vec<u64> = Vec::with_capacity(item.target.len() + item.descriptor.len() + 1);
    words.extend(item.target.iter().map(|v| v.to_bits()));
    words.push(u64::MAX); // field separator
    words.extend(item.descriptor.iter().map(|v| v.to_bits()));
    let mut r = rng::stream(base, "fm-item", &words);
    path_draw(&mut r, item.target.len())
}

fn check_sigma_min(sigma_min: f64) -> Result<()> {
    if !(sigma_min > 0.0 && sigma_min <= 1e-2) {
        return Err(Error::config(format!("sigma_min {sigma_min} outside (0, 1e-2]")));
    }
    Ok(())
}

/// Flow-matching regression loss: mean over the batch of the squared
/// distance between the predicted and target velocity at a random point of
/// each item's path. Randomness is keyed per item, so permuting the batch
/// leaves the value unchanged.
pub fn fm_loss<V: VelocityField, R: Rng + ?Sized>(
    model: &V,
    batch: &[TrainItem],
    sigma_min: f64,
    rng: &mut R,
) -> Result<f64> {
    let base: u64 = rng.random();
    let draws: Vec<PathDraw> = batch.iter().map(|it| content_draw(base, it)).collect();
    fm_loss_with_draws(model, batch, &draws, sigma_min)
}

/// Loss under explicit path draws (one per item).
pub fn fm_loss_with_draws<V: VelocityField>(
    model: &V,
    batch: &[TrainItem],
    draws: &[PathDraw],
    sigma_min: f64,
) -> Result<f64> {
    check_sigma_min(sigma_min)?;
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    if batch.len() != draws.len() {
        return Err(Error::input("one draw per item required"));
    }
    let mut total = 0.0;
    for (item, draw) in batch.iter().zip(draws) {
        let h_t = interpolate_path(&draw.h0, &item.target, draw.t, sigma_min)?;
        let u = target_velocity(&draw.h0, &item.target, sigma_min);
        let v = model.velocity(&h_t, draw.t, &item.descriptor)?;
        total += v.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// Per-layer loss gradients, same flat ordering as the model parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    gw: Vec<Vec<f64>>,
    gb: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(model: &VelocityModel) -> Self {
        Gradients {
            gw: model.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            gb: model.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (gw, gb) in self.gw.iter().zip(&self.gb) {
            out.extend_from_slice(gw);
            out.extend_from_slice(gb);
        }
        out
    }
}

/// Loss plus analytic parameter gradients via layer-wise chain rule.
pub fn fm_loss_and_grads(
    model: &VelocityModel,
    batch: &[TrainItem],
    draws: &[PathDraw],
    sigma_min: f64,
) -> Result<(f64, Gradients)> {
    check_sigma_min(sigma_min)?;
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    if batch.len() != draws.len() {
        return Err(Error::input("one draw per item required"));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros(model);
    let mut total = 0.0;
    for (item, draw) in batch.iter().zip(draws) {
        let h_t = interpolate_path(&draw.h0, &item.target, draw.t, sigma_min)?;
        let u = target_velocity(&draw.h0, &item.target, sigma_min);
        let input = model.assemble_input(&h_t, draw.t, &item.descriptor)?;
        let acts = model.forward_cached(input);
        let out = acts.last().expect("output activation");

        total += out.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * inv_b;

        // d loss / d output, then walk layers backward.
        let mut delta: Vec<f64> =
            out.iter().zip(&u).map(|(a, b)| 2.0 * (a - b) * inv_b).collect();
        for l in (0..model.layers.len()).rev() {
            let layer = &model.layers[l];
            let x = &acts[l];
            for r in 0..layer.rows {
                let dr = delta[r];
                let gw_row = &mut grads.gw[l][r * layer.cols..(r + 1) * layer.cols];
                for (g, xi) in gw_row.iter_mut().zip(x) {
                    *g += dr * xi;
                }
                grads.gb[l][r] += dr;
            }
            if l > 0 {
                let mut prev = vec![0.0; layer.cols];
                layer.back_input(&delta, &mut prev);
                // Undo the tanh of the layer below: dz = da * (1 - a^2).
                for (p, a) in prev.iter_mut().zip(x) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
    Ok((total, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub sigma_min: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 64,
            epochs: 300,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            sigma_min: 1e-5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning_rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch_size and epochs must be positive"));
        }
        for (name, v, hi) in [("beta1", self.beta1, 1.0), ("beta2", self.beta2, 1.0)] {
            if !(v >= 0.0 && v < hi) {
                return Err(Error::config(format!("{name} {v} outside [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("eps must be positive"));
        }
        check_sigma_min(self.sigma_min)
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    fn new(model: &VelocityModel) -> Self {
        let shape: Vec<Vec<f64>> = model
            .layers
            .iter()
            .flat_map(|l| [vec![0.0; l.w.len()], vec![0.0; l.b.len()]])
            .collect();
        Adam { m: shape.clone(), v: shape, step: 0 }
    }

    fn update(&mut self, model: &mut VelocityModel, grads: &Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        let mut slot = 0;
        for (l, layer) in model.layers.iter_mut().enumerate() {
            for (params, grad) in [(&mut layer.w, &grads.gw[l]), (&mut layer.b, &grads.gb[l])] {
                let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
                for i in 0..params.len() {
                    let g = grad[i];
                    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                    let mh = m[i] / bc1;
                    let vh = v[i] / bc2;
                    params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.eps);
                }
                slot += 1;
            }
        }
    }
}

/// Minibatch Adam on the flow-matching loss. Returns the per-epoch mean
/// loss curve; fully reproducible from `seed`.
pub fn train(
    model: &mut VelocityModel,
    dataset: &[TrainItem],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    model.validate()?;
    if dataset.is_empty() {
        return Err(Error::input("empty dataset"));
    }
    for (i, item) in dataset.iter().enumerate() {
        if item.target.len() != model.state_dim || item.descriptor.len() != model.descriptor_dim
        {
            return Err(Error::input(format!("dataset item {i} has wrong shape")));
        }
    }
    let mut adam = Adam::new(model);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = rng::stream(seed, "train-shuffle", &[epoch as u64]);
        for i in (1..order.len()).rev() {
            order.swap(i, shuffle_rng.random_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        for (batch_ix, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<TrainItem> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let mut draw_rng =
                rng::stream(seed, "train-draw", &[epoch as u64, batch_ix as u64]);
            let draws: Vec<PathDraw> =
                items.iter().map(|_| path_draw(&mut draw_rng, model.state_dim)).collect();
            let (loss, grads) = fm_loss_and_grads(model, &items, &draws, cfg.sigma_min)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {batch_ix}"
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.update(model, &grads, cfg);
        }
        curve.push(epoch_loss / dataset.len() as f64);
    }
    Ok(curve)
}

/// Per-dimension affine map to zero mean, unit variance. Applied to grasp
/// configurations before training; inverted after sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Dimensions with less spread than this keep a unit scale instead of
/// amplifying noise.
pub const STD_FLOOR: f64 = 1e-6;

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn fit(data: &[Vec<f64>]) -> Result<Self> {
        let n = data.len();
        if n == 0 {
            return Err(Error::input("cannot fit standardizer on empty data"));
        }
        let dim = data[0].len();
        let mut mean = vec![0.0; dim];
        for row in data {
            if row.len() != dim {
                return Err(Error::input("ragged data"));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; dim];
        for row in data {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd < STD_FLOOR {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::input(format!(
                "standardizer dim {} vs value dim {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn invert(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        Ok(z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::config("standardizer mean/std length mismatch"));
        }
        if !math::all_finite(&self.mean) || self.std.iter().any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(Error::NonFinite(String::from("standardizer statistics")));
        }
        Ok(())
    }
}
