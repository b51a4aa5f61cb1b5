//! Training-free physics-aware guidance.
//!
//! At integration time the current state and velocity give a one-step
//! prediction of the terminal grasp. Gaussian candidates around that
//! prediction are scored with the black-box energies, Boltzmann-weighted,
//! and folded into a correction field added to the raw velocity. No energy
//! gradients and no retraining are involved; the trained model is consulted
//! only for its velocity output.
//!
//! The mean-weight normalisation makes the field exactly zero under constant
//! energy, so disabling the energy terms reproduces vanilla sampling
//! bit-for-bit rather than approximately.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use num_traits::Float;

use crate::energy::{total_energy_with_form, EnergyForm, EnergyWeights};
use crate::error::{Error, Result};
use crate::flow::{Standardizer, VelocityField};
use crate::hand::{HandConfig, HandSpec};
use crate::rng::standard_normal;
use crate::scene::Scene;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    /// Strength `s` of the correction added to the velocity.
    pub scale: f64,
    /// Boltzmann temperature over candidate energies.
    pub tau: f64,
    /// Std of the Gaussian exploration around the predicted terminal state.
    /// Calibrated: wider exploration lets the weighted drift tunnel past the
    /// contact barrier and bury the hand in the object.
    pub sigma_local: f64,
    /// Monte Carlo candidates per step; one candidate cannot carry signal.
    /// Calibrated: the drift's sampling noise shrinks as 1/sqrt(K), and at 8
    /// the late amplified steps jitter more than the penetration gate allows.
    pub num_candidates: usize,
    /// Steps with `t > t_max` use the raw velocity (terminal singularity).
    pub t_max: f64,
    /// Floor for the `1/(1 - t)` direction scaling.
    pub one_minus_t_floor: f64,
    /// Energy term weights used to score candidates.
    pub energy: EnergyWeights,
    pub form: EnergyForm,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            scale: 30.0,
            tau: 0.05,
            sigma_local: 0.1,
            num_candidates: 8,
            t_max: 0.98,
            one_minus_t_floor: 1e-3,
            energy: EnergyWeights::default(),
            form: EnergyForm::Adapted,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::config(format!("guidance scale {}", self.scale)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("tau {} must be positive", self.tau)));
        }
        if !(self.sigma_local > 0.0 && self.sigma_local.is_finite()) {
            return Err(Error::config(format!("sigma_local {}", self.sigma_local)));
        }
        if self.num_candidates < 2 {
            return Err(Error::config("num_candidates must be at least 2"));
        }
        if !(self.t_max > 0.0 && self.t_max < 1.0) {
            return Err(Error::config(format!("t_max {} outside (0, 1)", self.t_max)));
        }
        if !(self.one_minus_t_floor > 0.0) {
            return Err(Error::config("one_minus_t_floor must be positive"));
        }
        self.energy.validate()
    }
}

/// One-step terminal prediction along the current velocity:
/// `h1_hat = h_t + (1 - t) v`. On an exact linear path this recovers the
/// data endpoint up to a `sigma_min * h0` residual.
pub fn predict_terminal(h_t: &[f64], t: f64, v: &[f64]) -> Result<Vec<f64>> {
    if t >= 1.0 {
        return Err(Error::input(format!("terminal prediction needs t < 1, got {t}")));
    }
    if h_t.len() != v.len() {
        return Err(Error::input("state/velocity dimension mismatch"));
    }
    Ok(h_t.iter().zip(v).map(|(h, vi)| h + (1.0 - t) * vi).collect())
}

/// `num_candidates` i.i.d. draws from `N(h1_hat, sigma_local^2 I)`.
pub fn sample_proposals<R: Rng + ?Sized>(
    h1_hat: &[f64],
    cfg: &GuidanceConfig,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..cfg.num_candidates)
        .map(|_| {
            h1_hat
                .iter()
                .map(|c| c + cfg.sigma_local * standard_normal(rng))
                .collect()
        })
        .collect()
}

/// Boltzmann weights `exp(-(E_k - min E)/tau)`. The minimum shift keeps the
/// exponent in range at sharp temperatures and cancels in the guidance field,
/// which consumes only `w_k / mean(w)`.
pub fn boltzmann_weights(energies: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::config(format!("tau {tau} must be positive")));
    }
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("candidate energies".into()));
    }
    let min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(energies.iter().map(|e| (-(e - min) / tau).exp()).collect())
}

/// Monte Carlo guidance field:
/// `g = (1/K) sum_k (w_k / mean(w) - 1) (c_k - h_t) / max(1 - t, floor)`.
///
/// Under-informed cases (fewer than two candidates, vanishing mean weight)
/// degrade to a zero field rather than an error, so sampling always proceeds.
pub fn guidance_field(
    h_t: &[f64],
    t: f64,
    candidates: &[Vec<f64>],
    weights: &[f64],
    one_minus_t_floor: f64,
) -> Result<Vec<f64>> {
    if candidates.len() != weights.len() {
        return Err(Error::input("one weight per candidate required"));
    }
    let mut g = vec![0.0; h_t.len()];
    if candidates.len() < 2 {
        log::warn!("guidance field degenerate: {} candidate(s)", candidates.len());
        return Ok(g);
    }
    let k = weights.len() as f64;
    let mean_w = weights.iter().sum::<f64>() / k;
    if !(mean_w > 0.0) {
        log::warn!("guidance field degenerate: mean weight {mean_w}");
        return Ok(g);
    }
    let inv_horizon = 1.0 / (1.0 - t).max(one_minus_t_floor);
    for (c, w) in candidates.iter().zip(weights) {
        if c.len() != h_t.len() {
            return Err(Error::input("candidate dimension mismatch"));
        }
        let coeff = (w / mean_w - 1.0) / k;
        for (gi, (ci, hi)) in g.iter_mut().zip(c.iter().zip(h_t)) {
            *gi += coeff * (ci - hi) * inv_horizon;
        }
    }
    Ok(g)
}

/// `v_hat = v + s * g`.
pub fn guided_velocity(v: &[f64], g: &[f64], scale: f64) -> Vec<f64> {
    v.iter().zip(g).map(|(vi, gi)| vi + scale * gi).collect()
}

/// Everything needed to score a candidate flow state as a physical grasp.
pub struct GuidanceContext<'a> {
    pub hand: &'a HandSpec,
    pub scene: &'a Scene,
    /// Flow states live in standardized coordinates; candidates are mapped
    /// back to raw configurations before scoring.
    pub standardizer: &'a Standardizer,
}

impl GuidanceContext<'_> {
    /// Energy of a standardized flow state. Joint limits are applied inside
    /// the energy evaluation; the state itself stays unclamped.
    pub fn candidate_energy(&self, state: &[f64], cfg: &GuidanceConfig) -> Result<f64> {
        let raw = self.standardizer.invert(state)?;
        let config = HandConfig::from_flat(&raw, self.hand.num_fingers)?;
        if !config.is_finite() {
            return Err(Error::NonFinite("candidate configuration".into()));
        }
        total_energy_with_form(&config, self.hand, self.scene, &cfg.energy, cfg.form)
    }
}

/// Per-step diagnostics, dumped as CSV by the sampler's debug mode.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceTrace {
    pub t: f64,
    pub v_norm: f64,
    pub g_norm: f64,
    /// Energies of surviving candidates (empty when guidance was skipped).
    pub energies: Vec<f64>,
    pub dropped: usize,
    /// True past `t_max` where the raw velocity is used.
    pub skipped: bool,
}

/// One guided velocity query: velocity, terminal prediction, exploration,
/// scoring, weighting, correction. Candidates with non-finite or failing
/// energy evaluations are dropped; if none survive, the field is zero.
pub fn guidance_step<V: VelocityField, R: Rng + ?Sized>(
    model: &V,
    h_t: &[f64],
    t: f64,
    ctx: &GuidanceContext<'_>,
    cfg: &GuidanceConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    guidance_step_traced(model, h_t, t, ctx, cfg, rng).map(|(v, _)| v)
}

pub fn guidance_step_traced<V: VelocityField, R: Rng + ?Sized>(
    model: &V,
    h_t: &[f64],
    t: f64,
    ctx: &GuidanceContext<'_>,
    cfg: &GuidanceConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, GuidanceTrace)> {
    cfg.validate()?;
    if t >= 1.0 {
        return Err(Error::input(format!("guidance step needs t < 1, got {t}")));
    }
    let descriptor = ctx.scene.descriptor();
    let v = model.velocity(h_t, t, &descriptor)?;
    let v_norm = crate::math::norm(&v);
    if t > cfg.t_max {
        let trace = GuidanceTrace {
            t,
            v_norm,
            g_norm: 0.0,
            energies: Vec::new(),
            dropped: 0,
            skipped: true,
        };
        return Ok((v, trace));
    }
    let h1_hat = predict_terminal(h_t, t, &v)?;
    let proposals = sample_proposals(&h1_hat, cfg, rng);

    let mut kept = Vec::with_capacity(proposals.len());
    let mut energies = Vec::with_capacity(proposals.len());
    let mut dropped = 0usize;
    for p in proposals {
        match ctx.candidate_energy(&p, cfg) {
            Ok(e) if e.is_finite() => {
                kept.push(p);
                energies.push(e);
            }
            Ok(_) | Err(Error::NonFinite(_)) => {
                dropped += 1;
                log::warn!("dropping candidate with non-finite energy at t = {t}");
            }
            Err(other) => return Err(other),
        }
    }

    let g = if kept.is_empty() {
        log::warn!("all {} candidates dropped at t = {t}; zero guidance", cfg.num_candidates);
        vec![0.0; h_t.len()]
    } else {
        let weights = boltzmann_weights(&energies, cfg.tau)?;
        guidance_field(h_t, t, &kept, &weights, cfg.one_minus_t_floor)?
    };
    let trace = GuidanceTrace {
        t,
        v_norm,
        g_norm: crate::math::norm(&g),
        energies,
        dropped,
        skipped: false,
    };
    Ok((guided_velocity(&v, &g, cfg.scale), trace))
}
