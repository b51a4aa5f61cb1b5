//! Physical plausibility energies over hand/object states. Lower is better;
//! all terms are non-negative and zero in the fully satisfied regime.
//!
//! Three fields:
//!
//! - `erf`, repulsion: penetration depth of the worst hand surface point
//!   (the original averaged formulation is kept as [`erf_mean`]).
//! - `spf`, proximity: palm-to-object-centre distance plus the mean of the
//!   `top_k` smallest keypoint-to-cloud distances. The centre term keeps the
//!   field informative when the hand is nowhere near the object, which the
//!   original hard-threshold formulation ([`spf_hard`]) is not.
//! - `srf`, self-repulsion: hinge penalty on keypoint pairs closer than
//!   `tau_self`, skipping pairs that are link-connected by construction.
//!
//! Sampling-time guidance treats these as black boxes: only values are ever
//! queried, never gradients.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::hand::{forward_kinematics, HandConfig, HandPoints, HandSpec};
use crate::math::Vec3;
use crate::scene::{nearest_dist_sq, ObjectCloud, Scene, ScenePrimitive};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyWeights {
    pub erf: f64,
    pub spf: f64,
    pub srf: f64,
    /// Keypoint pairs closer than this count as self-collision.
    pub tau_self: f64,
    /// How many nearest keypoints the proximity mean uses.
    pub top_k: usize,
    /// Attraction cutoff for the original hard-threshold proximity form.
    pub spf_threshold: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            erf: 0.4,
            spf: 0.4,
            srf: 0.4,
            tau_self: 0.1,
            top_k: 5,
            spf_threshold: 0.2,
        }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("erf", self.erf), ("spf", self.spf), ("srf", self.srf)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("energy weight {name} = {v}")));
            }
        }
        if !(self.tau_self >= 0.0 && self.tau_self.is_finite()) {
            return Err(Error::config(format!("tau_self = {}", self.tau_self)));
        }
        if self.top_k == 0 {
            return Err(Error::config("top_k must be at least 1"));
        }
        if !(self.spf_threshold > 0.0 && self.spf_threshold.is_finite()) {
            return Err(Error::config(format!("spf_threshold = {}", self.spf_threshold)));
        }
        Ok(())
    }

    /// Variant with the given term weights, other parameters unchanged.
    pub fn with_terms(&self, erf: f64, spf: f64, srf: f64) -> Self {
        EnergyWeights { erf, spf, srf, ..self.clone() }
    }
}

/// Which functional form the repulsion and proximity terms take.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyForm {
    /// Worst-point repulsion, globally informative proximity.
    #[default]
    Adapted,
    /// Mean repulsion and hard-threshold proximity.
    Original,
}

/// Deepest penetration of any hand surface point into the object.
pub fn erf(hp: &HandPoints, prim: &ScenePrimitive) -> f64 {
    hp.surface_points
        .iter()
        .map(|p| (-prim.sdf(*p)).max(0.0))
        .fold(0.0, f64::max)
}

/// Mean penetration over hand surface points.
pub fn erf_mean(hp: &HandPoints, prim: &ScenePrimitive) -> f64 {
    let n = hp.surface_points.len();
    debug_assert!(n > 0);
    hp.surface_points
        .iter()
        .map(|p| (-prim.sdf(*p)).max(0.0))
        .sum::<f64>()
        / n as f64
}

fn keypoint_cloud_distances(hp: &HandPoints, cloud: &ObjectCloud) -> Vec<f64> {
    hp.keypoints
        .iter()
        .map(|k| nearest_dist_sq(cloud, k.position).sqrt())
        .collect()
}

/// Palm-to-centre distance plus the mean of the `top_k` smallest
/// keypoint-to-surface distances.
pub fn spf(
    hp: &HandPoints,
    cloud: &ObjectCloud,
    obj_center: Vec3,
    top_k: usize,
) -> Result<f64> {
    let m = hp.keypoints.len();
    if top_k == 0 || top_k > m {
        return Err(Error::input(format!(
            "top_k {top_k} out of range for {m} keypoints"
        )));
    }
    let mut d = keypoint_cloud_distances(hp, cloud);
    if top_k < m {
        // Quickselect, not a sort: only a partition around the k-th value.
        d.select_nth_unstable_by(top_k - 1, f64::total_cmp);
    }
    let mean = d[..top_k].iter().sum::<f64>() / top_k as f64;
    Ok(hp.palm_center.dist(obj_center) + mean)
}

/// Original proximity form: mean distance over keypoints within the cutoff,
/// zero when none are. Carries no signal for a far-away hand.
pub fn spf_hard(hp: &HandPoints, cloud: &ObjectCloud, threshold: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for d in keypoint_cloud_distances(hp, cloud) {
        if d <= threshold {
            sum += d;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Hinge penalty on all non-link-connected keypoint pairs closer than
/// `tau_self`.
pub fn srf(hp: &HandPoints, tau_self: f64) -> f64 {
    let kp = &hp.keypoints;
    let mut sum = 0.0;
    for i in 0..kp.len() {
        for j in i + 1..kp.len() {
            if kp[i].adjacent(&kp[j]) {
                continue;
            }
            let gap = tau_self - kp[i].position.dist(kp[j].position);
            if gap > 0.0 {
                sum += gap;
            }
        }
    }
    sum
}

/// Weighted total in the adapted form.
pub fn total_energy(
    h: &HandConfig,
    hand: &HandSpec,
    scene: &Scene,
    w: &EnergyWeights,
) -> Result<f64> {
    total_energy_with_form(h, hand, scene, w, EnergyForm::Adapted)
}

/// Weighted total. Joints are clamped inside kinematics, so raw flow states
/// score their clamped counterpart; non-finite configs are an error rather
/// than a silent NaN.
pub fn total_energy_with_form(
    h: &HandConfig,
    hand: &HandSpec,
    scene: &Scene,
    w: &EnergyWeights,
    form: EnergyForm,
) -> Result<f64> {
    w.validate()?;
    if !h.is_finite() {
        return Err(Error::NonFinite("hand config".into()));
    }
    let hp = forward_kinematics(h, hand)?;
    let (pen, prox) = match form {
        EnergyForm::Adapted => (
            erf(&hp, &scene.prim),
            spf(&hp, &scene.cloud, scene.prim.center(), w.top_k)?,
        ),
        EnergyForm::Original => (
            erf_mean(&hp, &scene.prim),
            spf_hard(&hp, &scene.cloud, w.spf_threshold),
        ),
    };
    Ok(w.erf * pen + w.spf * prox + w.srf * srf(&hp, w.tau_self))
}
