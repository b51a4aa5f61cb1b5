//! Toy claw hand: a rigid palm disc with `F` two-link fingers on its rim.
//!
//! A configuration is `D = 6 + F` numbers: palm translation (3), palm
//! orientation as an axis-angle vector (3), and one curl angle per finger.
//! Curling rotates link 1 by `theta` and link 2 by `(1 + coupling) * theta`
//! about the same per-finger axis, so each finger sweeps inward over the palm
//! like a claw closing. Link directions have the closed form
//! `d(alpha) = (-cos(phi) sin(alpha), -sin(phi) sin(alpha), cos(alpha))`
//! for a finger mounted at rim angle `phi`; at `theta = 0` fingers point along
//! local `+z`, at `theta = pi/2` link 1 points at the palm axis.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

pub const MAX_CURL: f64 = core::f64::consts::FRAC_PI_2;

/// Fixed hand geometry. All lengths share the scene unit (roughly decimetres
/// at desk scale).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandSpec {
    pub num_fingers: usize,
    pub palm_radius: f64,
    pub link1: f64,
    pub link2: f64,
    /// Sample points per link used for collision and contact queries.
    pub samples_per_link: usize,
    /// Extra curl of link 2 relative to link 1.
    pub curl_coupling: f64,
}

impl Default for HandSpec {
    fn default() -> Self {
        HandSpec {
            num_fingers: 4,
            palm_radius: 0.5,
            link1: 0.4,
            link2: 0.3,
            samples_per_link: 3,
            curl_coupling: 1.0,
        }
    }
}

impl HandSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_fingers == 0 {
            return Err(Error::config("hand needs at least one finger"));
        }
        if self.samples_per_link == 0 {
            return Err(Error::config("samples_per_link must be at least 1"));
        }
        for (name, v) in [
            ("palm_radius", self.palm_radius),
            ("link1", self.link1),
            ("link2", self.link2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.curl_coupling >= 0.0 && self.curl_coupling.is_finite()) {
            return Err(Error::config(format!(
                "curl_coupling must be non-negative, got {}",
                self.curl_coupling
            )));
        }
        Ok(())
    }

    /// Configuration dimensionality `6 + F`.
    pub fn dim(&self) -> usize {
        6 + self.num_fingers
    }

    /// Surface points produced by forward kinematics:
    /// palm centre, `F` finger bases, and `2 * S` samples per finger.
    pub fn point_count(&self) -> usize {
        1 + self.num_fingers * (1 + 2 * self.samples_per_link)
    }

    /// Rim mount angle of finger `i`.
    pub fn mount_angle(&self, i: usize) -> f64 {
        core::f64::consts::TAU * i as f64 / self.num_fingers as f64
    }
}

/// One point of the hand state: free pose plus curl angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandConfig {
    pub translation: Vec3,
    pub axis_angle: Vec3,
    pub joints: Vec<f64>,
}

impl HandConfig {
    pub fn zeros(num_fingers: usize) -> Self {
        HandConfig {
            translation: Vec3::ZERO,
            axis_angle: Vec3::ZERO,
            joints: alloc::vec![0.0; num_fingers],
        }
    }

    pub fn dim(&self) -> usize {
        6 + self.joints.len()
    }

    /// Flat layout `[t; axis_angle; joints]`, the coordinate chart the flow
    /// model operates in.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&self.translation.to_array());
        out.extend_from_slice(&self.axis_angle.to_array());
        out.extend_from_slice(&self.joints);
        out
    }

    pub fn from_flat(flat: &[f64], num_fingers: usize) -> Result<Self> {
        if flat.len() != 6 + num_fingers {
            return Err(Error::input(format!(
                "hand config needs {} values, got {}",
                6 + num_fingers,
                flat.len()
            )));
        }
        Ok(HandConfig {
            translation: Vec3::new(flat[0], flat[1], flat[2]),
            axis_angle: Vec3::new(flat[3], flat[4], flat[5]),
            joints: flat[6..].to_vec(),
        })
    }

    /// Clamp curls into `[0, pi/2]`. Pose is left untouched; raw flow states
    /// may wander outside the joint box and are only clamped for evaluation.
    pub fn clamp_joints(&self) -> Self {
        let mut out = self.clone();
        for j in &mut out.joints {
            *j = j.clamp(0.0, MAX_CURL);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.translation.is_finite()
            && self.axis_angle.is_finite()
            && self.joints.iter().all(|j| j.is_finite())
    }
}

/// Rodrigues formula with a series fallback near zero, so the map is smooth
/// at the identity.
pub fn rotation_from_axis_angle(aa: Vec3) -> Mat3 {
    let theta_sq = aa.norm_sq();
    let (a, b) = if theta_sq < 1e-12 {
        // sin(t)/t and (1 - cos(t))/t^2 to second order.
        (1.0 - theta_sq / 6.0, 0.5 - theta_sq / 24.0)
    } else {
        let theta = theta_sq.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta_sq)
    };
    let k = Mat3([
        [0.0, -aa.z, aa.y],
        [aa.z, 0.0, -aa.x],
        [-aa.y, aa.x, 0.0],
    ]);
    let k2 = k.mul_mat(&k);
    let mut r = Mat3::IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            r.0[i][j] += a * k.0[i][j] + b * k2.0[i][j];
        }
    }
    r
}

/// Axis-angle of the composition R(a)·R(b), via the quaternion product.
/// The result's angle is normalized into [0, π].
pub fn compose_axis_angle(a: Vec3, b: Vec3) -> Vec3 {
    fn to_quat(aa: Vec3) -> (f64, Vec3) {
        let t = aa.norm();
        if t < 1e-12 {
            (1.0, Vec3::ZERO)
        } else {
            ((t / 2.0).cos(), aa * ((t / 2.0).sin() / t))
        }
    }
    let (wa, va) = to_quat(a);
    let (wb, vb) = to_quat(b);
    let w = wa * wb - va.dot(vb);
    let v = vb * wa + va * wb + va.cross(vb);
    let s = v.norm();
    if s < 1e-12 {
        return Vec3::ZERO;
    }
    let mut angle = 2.0 * s.atan2(w);
    if angle > core::f64::consts::PI {
        angle -= 2.0 * core::f64::consts::PI;
    }
    v * (angle / s)
}

/// Shortest-arc rotation taking local +z onto `dir`, as an axis-angle
/// vector. Zero direction maps to the identity.
pub fn rotation_aligning_z(dir: Vec3) -> Vec3 {
    let Some(d) = dir.normalized() else {
        return Vec3::ZERO;
    };
    let c = d.z;
    if c > 1.0 - 1e-12 {
        return Vec3::ZERO;
    }
    if c < -1.0 + 1e-12 {
        // Antipodal: any axis in the xy-plane works.
        return Vec3::new(core::f64::consts::PI, 0.0, 0.0);
    }
    let axis = Vec3::new(0.0, 0.0, 1.0).cross(d);
    match axis.normalized() {
        Some(u) => u * c.acos(),
        None => Vec3::ZERO,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeypointRole {
    Base,
    Elbow,
    Tip,
}

impl KeypointRole {
    fn chain_index(self) -> i32 {
        match self {
            KeypointRole::Base => 0,
            KeypointRole::Elbow => 1,
            KeypointRole::Tip => 2,
        }
    }
}

/// Skeleton landmark used by the proximity and self-collision energies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub position: Vec3,
    pub finger: usize,
    pub role: KeypointRole,
}

impl Keypoint {
    /// Directly connected along one finger chain (base-elbow or elbow-tip).
    /// Such pairs sit one link apart by construction and must not count as
    /// self-collisions.
    pub fn adjacent(&self, other: &Keypoint) -> bool {
        self.finger == other.finger
            && (self.role.chain_index() - other.role.chain_index()).abs() == 1
    }
}

/// World-space geometry of a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct HandPoints {
    /// Palm centre, finger bases, and link samples; used for penetration.
    pub surface_points: Vec<Vec3>,
    pub fingertips: Vec<Vec3>,
    pub palm_center: Vec3,
    /// Three landmarks per finger: base, elbow, tip.
    pub keypoints: Vec<Keypoint>,
}

/// Direction of a finger segment curled by `alpha` at mount angle `phi`.
fn link_direction(phi: f64, alpha: f64) -> Vec3 {
    let (sin_a, cos_a) = (alpha.sin(), alpha.cos());
    Vec3::new(-phi.cos() * sin_a, -phi.sin() * sin_a, cos_a)
}

/// Pose and curl to world-space points. Curls are clamped to `[0, pi/2]`
/// here, so out-of-range states still map to bounded geometry.
pub fn forward_kinematics(h: &HandConfig, spec: &HandSpec) -> Result<HandPoints> {
    if h.joints.len() != spec.num_fingers {
        return Err(Error::input(format!(
            "config has {} joints, hand has {} fingers",
            h.joints.len(),
            spec.num_fingers
        )));
    }
    let rot = rotation_from_axis_angle(h.axis_angle);
    let place = |p: Vec3| rot.mul_vec(p) + h.translation;

    let mut surface = Vec::with_capacity(spec.point_count());
    let mut tips = Vec::with_capacity(spec.num_fingers);
    let mut keypoints = Vec::with_capacity(3 * spec.num_fingers);

    let palm_center = place(Vec3::ZERO);
    surface.push(palm_center);
    for i in 0..spec.num_fingers {
        let phi = spec.mount_angle(i);
        let base = Vec3::new(spec.palm_radius * phi.cos(), spec.palm_radius * phi.sin(), 0.0);
        surface.push(place(base));
    }
    for i in 0..spec.num_fingers {
        let phi = spec.mount_angle(i);
        let base = Vec3::new(spec.palm_radius * phi.cos(), spec.palm_radius * phi.sin(), 0.0);
        let theta = h.joints[i].clamp(0.0, MAX_CURL);
        let d1 = link_direction(phi, theta);
        let d2 = link_direction(phi, (1.0 + spec.curl_coupling) * theta);
        let elbow = base + d1 * spec.link1;
        let tip = elbow + d2 * spec.link2;
        let s = spec.samples_per_link as f64;
        for j in 1..=spec.samples_per_link {
            surface.push(place(base + d1 * (spec.link1 * j as f64 / s)));
        }
        for j in 1..=spec.samples_per_link {
            surface.push(place(elbow + d2 * (spec.link2 * j as f64 / s)));
        }
        let tip_w = place(tip);
        tips.push(tip_w);
        keypoints.push(Keypoint { position: place(base), finger: i, role: KeypointRole::Base });
        keypoints.push(Keypoint { position: place(elbow), finger: i, role: KeypointRole::Elbow });
        keypoints.push(Keypoint { position: tip_w, finger: i, role: KeypointRole::Tip });
    }

    Ok(HandPoints { surface_points: surface, fingertips: tips, palm_center, keypoints })
}
