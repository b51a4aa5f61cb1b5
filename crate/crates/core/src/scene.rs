//! Analytic object primitives, their exact signed distance fields, and
//! uniform surface point clouds.
//!
//! The SDF is the ground-truth geometry used for penetration scoring; the
//! point cloud is the only object representation the generative model and the
//! proximity energy see, mirroring a perception pipeline.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::rng;

pub const DESCRIPTOR_DIM: usize = 10;

/// Default and minimum surface cloud sizes.
pub const DEFAULT_CLOUD_SIZE: usize = 512;
pub const MIN_CLOUD_SIZE: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenePrimitive {
    Sphere { center: Vec3, radius: f64 },
    Box { center: Vec3, half_extents: Vec3 },
    /// Capsule between endpoints `a` and `b` (axis ends, not tip-to-tip).
    Capsule { a: Vec3, b: Vec3, radius: f64 },
}

impl ScenePrimitive {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: Vec3| v.is_finite();
        match self {
            ScenePrimitive::Sphere { center, radius } => {
                if !finite(*center) || !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::config(format!("bad sphere: radius {radius}")));
                }
            }
            ScenePrimitive::Box { center, half_extents } => {
                let he = *half_extents;
                if !finite(*center)
                    || !finite(he)
                    || !(he.x > 0.0 && he.y > 0.0 && he.z > 0.0)
                {
                    return Err(Error::config(format!("bad box: half_extents {he:?}")));
                }
            }
            ScenePrimitive::Capsule { a, b, radius } => {
                if !finite(*a) || !finite(*b) || !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::config(format!("bad capsule: radius {radius}")));
                }
                if a.dist(*b) < 1e-9 {
                    return Err(Error::config("capsule endpoints coincide"));
                }
            }
        }
        Ok(())
    }

    /// Exact signed distance: negative inside, zero on the surface.
    pub fn sdf(&self, p: Vec3) -> f64 {
        match self {
            ScenePrimitive::Sphere { center, radius } => p.dist(*center) - radius,
            ScenePrimitive::Box { center, half_extents } => {
                let d = p - *center;
                let q = Vec3::new(
                    d.x.abs() - half_extents.x,
                    d.y.abs() - half_extents.y,
                    d.z.abs() - half_extents.z,
                );
                let outside =
                    Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
            ScenePrimitive::Capsule { a, b, radius } => {
                let ab = *b - *a;
                let t = ((p - *a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
                p.dist(*a + ab * t) - radius
            }
        }
    }

    /// Analytic centre of mass (by symmetry for all three kinds).
    pub fn center(&self) -> Vec3 {
        match self {
            ScenePrimitive::Sphere { center, .. } => *center,
            ScenePrimitive::Box { center, .. } => *center,
            ScenePrimitive::Capsule { a, b, .. } => (*a + *b) * 0.5,
        }
    }

    /// Fixed-width conditioning vector: kind one-hot, up to four shape
    /// parameters, analytic centre.
    pub fn descriptor(&self) -> [f64; DESCRIPTOR_DIM] {
        let mut d = [0.0; DESCRIPTOR_DIM];
        match self {
            ScenePrimitive::Sphere { center, radius } => {
                d[0] = 1.0;
                d[3] = *radius;
                d[7..].copy_from_slice(&center.to_array());
            }
            ScenePrimitive::Box { center, half_extents } => {
                d[1] = 1.0;
                d[3] = half_extents.x;
                d[4] = half_extents.y;
                d[5] = half_extents.z;
                d[7..].copy_from_slice(&center.to_array());
            }
            ScenePrimitive::Capsule { a, b, radius } => {
                d[2] = 1.0;
                d[3] = *radius;
                d[4] = a.dist(*b) * 0.5;
                d[7..].copy_from_slice(&self.center().to_array());
            }
        }
        d
    }

    /// Uniform sample of the boundary surface (area-weighted across faces,
    /// cylinder side, and caps).
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        match self {
            ScenePrimitive::Sphere { center, radius } => {
                *center + rng::unit_vector(rng) * *radius
            }
            ScenePrimitive::Box { center, half_extents } => {
                let he = *half_extents;
                let w = [he.y * he.z, he.x * he.z, he.x * he.y];
                let total = w[0] + w[1] + w[2];
                let mut pick = rng.random_range(0.0..total);
                let mut axis = 0;
                for (i, wi) in w.iter().enumerate() {
                    if pick < *wi {
                        axis = i;
                        break;
                    }
                    pick -= wi;
                    axis = i;
                }
                let sign = if rng.random_range(0..2) == 0 { -1.0 } else { 1.0 };
                let he_arr = he.to_array();
                let mut p = [0.0; 3];
                for (i, c) in p.iter_mut().enumerate() {
                    *c = if i == axis {
                        sign * he_arr[i]
                    } else {
                        rng.random_range(-he_arr[i]..he_arr[i])
                    };
                }
                *center + Vec3::from(p)
            }
            ScenePrimitive::Capsule { a, b, radius } => {
                let axis = *b - *a;
                let len = axis.norm();
                let u = axis * (1.0 / len);
                let side = core::f64::consts::TAU * radius * len;
                let caps = 2.0 * core::f64::consts::TAU * radius * radius;
                if rng.random_range(0.0..side + caps) < side {
                    let pick = if u.x.abs() < 0.9 {
                        Vec3::new(1.0, 0.0, 0.0)
                    } else {
                        Vec3::new(0.0, 1.0, 0.0)
                    };
                    let e1 = u.cross(pick).normalized().expect("axis basis");
                    let e2 = u.cross(e1);
                    let ang = rng.random_range(0.0..core::f64::consts::TAU);
                    let radial = e1 * ang.cos() + e2 * ang.sin();
                    *a + u * rng.random_range(0.0..len) + radial * *radius
                } else {
                    let dir = rng::unit_vector(rng);
                    let end = if dir.dot(u) >= 0.0 { *b } else { *a };
                    end + dir * *radius
                }
            }
        }
    }
}

/// Sampled object surface. The centroid is the cloud mean, kept for
/// diagnostics; energies use the analytic centre instead.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectCloud {
    pub points: Vec<Vec3>,
    pub centroid: Vec3,
}

pub fn sample_surface<R: Rng + ?Sized>(
    prim: &ScenePrimitive,
    n: usize,
    rng: &mut R,
) -> Result<ObjectCloud> {
    prim.validate()?;
    if n < MIN_CLOUD_SIZE {
        return Err(Error::config(format!(
            "cloud size {n} below minimum {MIN_CLOUD_SIZE}"
        )));
    }
    let points: Vec<Vec3> = (0..n).map(|_| prim.sample_point(rng)).collect();
    let centroid = points.iter().fold(Vec3::ZERO, |acc, p| acc + *p) * (1.0 / n as f64);
    Ok(ObjectCloud { points, centroid })
}

/// Closest cloud point to `p` by linear scan; ties resolve to the lowest
/// index (strict improvement only).
pub fn nearest_surface_point(cloud: &ObjectCloud, p: Vec3) -> (Vec3, f64) {
    debug_assert!(!cloud.points.is_empty());
    let mut best = 0;
    let mut best_sq = cloud.points[0].dist_sq(p);
    for (i, q) in cloud.points.iter().enumerate().skip(1) {
        let d = q.dist_sq(p);
        if d < best_sq {
            best_sq = d;
            best = i;
        }
    }
    (cloud.points[best], best_sq.sqrt())
}

/// Squared nearest-neighbour distance; the hot path of the proximity energy.
pub fn nearest_dist_sq(cloud: &ObjectCloud, p: Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for q in &cloud.points {
        let d = q.dist_sq(p);
        if d < best {
            best = d;
        }
    }
    best
}

/// A primitive paired with its sampled surface; the unit of conditioning.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub prim: ScenePrimitive,
    pub cloud: ObjectCloud,
}

impl Scene {
    pub fn new(prim: ScenePrimitive, cloud: ObjectCloud) -> Result<Self> {
        prim.validate()?;
        if cloud.points.is_empty() {
            return Err(Error::input("scene cloud is empty"));
        }
        Ok(Scene { prim, cloud })
    }

    pub fn descriptor(&self) -> [f64; DESCRIPTOR_DIM] {
        self.prim.descriptor()
    }
}

/// Wire description of a scene: primitive plus the seed and size of its
/// surface cloud. Building twice yields identical clouds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(flatten)]
    pub prim: ScenePrimitive,
    pub seed: u64,
    #[serde(default = "default_cloud_size")]
    pub cloud_size: usize,
}

fn default_cloud_size() -> usize {
    DEFAULT_CLOUD_SIZE
}

impl SceneSpec {
    pub fn build(&self) -> Result<Scene> {
        let mut r = rng::stream(self.seed, "cloud", &[]);
        let cloud = sample_surface(&self.prim, self.cloud_size, &mut r)?;
        Scene::new(self.prim.clone(), cloud)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn test_prims() -> Vec<ScenePrimitive> {
        alloc::vec![
            ScenePrimitive::Sphere { center: Vec3::new(0.1, -0.2, 0.3), radius: 0.5 },
            ScenePrimitive::Box {
                center: Vec3::new(-0.2, 0.1, 0.0),
                half_extents: Vec3::new(0.3, 0.45, 0.25),
            },
            ScenePrimitive::Capsule {
                a: Vec3::new(-0.3, 0.0, -0.1),
                b: Vec3::new(0.4, 0.2, 0.3),
                radius: 0.2,
            },
        ]
    }

    /// Containment predicates written independently of the SDF formulas.
    fn inside(prim: &ScenePrimitive, p: Vec3) -> bool {
        match prim {
            ScenePrimitive::Sphere { center, radius } => p.dist_sq(*center) < radius * radius,
            ScenePrimitive::Box { center, half_extents } => {
                let d = p - *center;
                d.x.abs() < half_extents.x
                    && d.y.abs() < half_extents.y
                    && d.z.abs() < half_extents.z
            }
            ScenePrimitive::Capsule { a, b, radius } => {
                // Distance to segment by ternary search over the parameter.
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                let point = |t: f64| *a + (*b - *a) * t;
                for _ in 0..200 {
                    let m1 = lo + (hi - lo) / 3.0;
                    let m2 = hi - (hi - lo) / 3.0;
                    if p.dist_sq(point(m1)) < p.dist_sq(point(m2)) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                p.dist_sq(point(lo)) < radius * radius
            }
        }
    }

    #[test]
    fn sdf_sign_matches_containment() {
        let mut r = rng::stream(21, "sdf-sign", &[]);
        for prim in test_prims() {
            for _ in 0..2000 {
                let p = Vec3::new(
                    r.random_range(-1.5..1.5),
                    r.random_range(-1.5..1.5),
                    r.random_range(-1.5..1.5),
                );
                let d = prim.sdf(p);
                if d.abs() < 1e-9 {
                    continue;
                }
                assert_eq!(d < 0.0, inside(&prim, p), "{prim:?} at {p:?}: sdf {d}");
            }
        }
    }

    #[test]
    fn surface_samples_lie_on_surface() {
        let mut r = rng::stream(22, "surface", &[]);
        for prim in test_prims() {
            let cloud = sample_surface(&prim, 256, &mut r).unwrap();
            for p in &cloud.points {
                assert!(prim.sdf(*p).abs() < 1e-9, "{prim:?}: off-surface {p:?}");
            }
        }
    }

    #[test]
    fn cloud_centroid_near_analytic_center() {
        // Statistical check; uniform surface sampling on symmetric bodies
        // averages to the centre.
        let mut r = rng::stream(23, "centroid", &[]);
        for prim in test_prims() {
            let cloud = sample_surface(&prim, 4096, &mut r).unwrap();
            assert!(
                cloud.centroid.dist(prim.center()) < 0.05,
                "{prim:?}: centroid {:?} vs {:?}",
                cloud.centroid,
                prim.center()
            );
        }
    }

    #[test]
    fn cloud_generation_is_deterministic() {
        let prim = &test_prims()[2];
        let a = sample_surface(prim, 128, &mut rng::stream(9, "cloud", &[])).unwrap();
        let b = sample_surface(prim, 128, &mut rng::stream(9, "cloud", &[])).unwrap();
        assert_eq!(a, b);
        let spec = SceneSpec { prim: prim.clone(), seed: 4, cloud_size: 128 };
        assert_eq!(spec.build().unwrap(), spec.build().unwrap());
    }

    #[test]
    fn nearest_matches_scan_oracle_and_breaks_ties_low() {
        let mut r = rng::stream(24, "nearest", &[]);
        let prim = &test_prims()[0];
        let cloud = sample_surface(prim, 128, &mut r).unwrap();
        for _ in 0..100 {
            let p = Vec3::new(
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
            );
            let (q, d) = nearest_surface_point(&cloud, p);
            let oracle = cloud
                .points
                .iter()
                .map(|c| c.dist(p))
                .fold(f64::INFINITY, f64::min);
            assert!((d - oracle).abs() < 1e-12);
            assert!((nearest_dist_sq(&cloud, p).sqrt() - oracle).abs() < 1e-12);
            assert!(q.dist(p) - oracle < 1e-12);
        }
        // Duplicated points: the first copy wins.
        let dup = ObjectCloud {
            points: alloc::vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)],
            centroid: Vec3::new(1.0, 0.0, 0.0),
        };
        let (q, _) = nearest_surface_point(&dup, Vec3::ZERO);
        assert_eq!(q, dup.points[0]);
    }

    #[test]
    fn descriptor_is_one_hot_with_params() {
        for (i, prim) in test_prims().iter().enumerate() {
            let d = prim.descriptor();
            for k in 0..3 {
                assert_eq!(d[k], if k == i { 1.0 } else { 0.0 });
            }
            assert_eq!(&d[7..], &prim.center().to_array());
        }
        let d = test_prims()[0].descriptor();
        assert_eq!(d[3], 0.5);
        let d = test_prims()[2].descriptor();
        let half_len = (Vec3::new(0.4, 0.2, 0.3) - Vec3::new(-0.3, 0.0, -0.1)).norm() * 0.5;
        assert!((d[4] - half_len).abs() < 1e-15);
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(ScenePrimitive::Sphere { center: Vec3::ZERO, radius: 0.0 }
            .validate()
            .is_err());
        assert!(ScenePrimitive::Box {
            center: Vec3::ZERO,
            half_extents: Vec3::new(0.1, -0.1, 0.1)
        }
        .validate()
        .is_err());
        assert!(ScenePrimitive::Capsule { a: Vec3::ZERO, b: Vec3::ZERO, radius: 0.1 }
            .validate()
            .is_err());
        let prim = test_prims()[0].clone();
        assert!(sample_surface(&prim, 32, &mut rng::stream(1, "x", &[])).is_err());
    }

    #[test]
    fn scene_spec_json_wire_shape() {
        let spec = SceneSpec {
            prim: ScenePrimitive::Sphere { center: Vec3::ZERO, radius: 0.5 },
            seed: 7,
            cloud_size: 128,
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"sphere\""), "{json}");
        assert!(json.contains("\"params\""), "{json}");
        let back: SceneSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        // cloud_size falls back to the default when omitted.
        let partial: SceneSpec = serde_json::from_str(
            "{\"kind\":\"sphere\",\"params\":{\"center\":[0,0,0],\"radius\":0.5},\"seed\":1}",
        )
        .unwrap();
        assert_eq!(partial.cloud_size, DEFAULT_CLOUD_SIZE);
    }

    proptest! {
        #[test]
        fn sdf_is_one_lipschitz(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
            bx in -1.0f64..1.0, by in -1.0f64..1.0, bz in -1.0f64..1.0,
            which in 0usize..3,
        ) {
            let prim = &test_prims()[which];
            let a = Vec3::new(ax, ay, az);
            let b = Vec3::new(bx, by, bz);
            let lhs = (prim.sdf(a) - prim.sdf(b)).abs();
            prop_assert!(lhs <= a.dist(b) + 1e-12);
        }
    }
}
