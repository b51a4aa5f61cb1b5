//! Batch ODE sampling: integrate the learned velocity field from Gaussian
//! noise to grasp configurations with fixed-step explicit Euler, optionally
//! applying the energy-guided correction at every step.
//!
//! Noise and guidance randomness come from separate per-element streams of
//! the batch seed, so a guided and a vanilla run with the same seed start
//! from identical noise, and batch elements can be integrated in any order.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Standardizer, VelocityField, VelocityModel};
use crate::guidance::{guidance_step_traced, GuidanceConfig, GuidanceContext, GuidanceTrace};
use crate::hand::{HandConfig, HandSpec};
use crate::math;
use crate::rng;
use crate::scene::{Scene, DESCRIPTOR_DIM};

/// A trained sampler: the velocity model, the coordinate map between raw
/// configurations and model space, and the hand the configurations describe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub model: VelocityModel,
    pub standardizer: Standardizer,
    pub hand: HandSpec,
}

impl Pipeline {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.standardizer.validate()?;
        self.hand.validate()?;
        if self.model.state_dim() != self.hand.dim()
            || self.standardizer.dim() != self.hand.dim()
        {
            return Err(Error::config("pipeline state dimensions disagree"));
        }
        if self.model.descriptor_dim() != DESCRIPTOR_DIM {
            return Err(Error::config("pipeline descriptor dimension mismatch"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Number of Euler steps (function evaluations).
    pub nfe: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(skip)]
    pub guidance: Option<GuidanceConfig>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { nfe: 100, batch_size: 16, seed: 0, guidance: None }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nfe == 0 {
            return Err(Error::config("nfe must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if let Some(g) = &self.guidance {
            g.validate()?;
        }
        Ok(())
    }
}

/// `h' = h + dt * v`.
pub fn euler_step(h: &[f64], dt: f64, v: &[f64]) -> Vec<f64> {
    debug_assert!(dt > 0.0);
    debug_assert_eq!(h.len(), v.len());
    h.iter().zip(v).map(|(hi, vi)| hi + dt * vi).collect()
}

/// One integrated batch element. `config` is present unless the trajectory
/// went non-finite; failed elements stay in the batch for honest accounting
/// but carry no usable grasp.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleResult {
    pub element: usize,
    /// Final state mapped back to raw configuration coordinates.
    pub state: Vec<f64>,
    pub config: Option<HandConfig>,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub results: Vec<SampleResult>,
    pub num_failed: usize,
}

impl SampleBatch {
    /// Configurations of the elements that integrated cleanly.
    pub fn ok_configs(&self) -> impl Iterator<Item = (usize, &HandConfig)> {
        self.results
            .iter()
            .filter_map(|r| r.config.as_ref().map(|c| (r.element, c)))
    }
}

/// Standardized states along one trajectory: `nfe + 1` entries, the first
/// being the drawn noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub element: usize,
    pub states: Vec<Vec<f64>>,
}

pub fn sample(pipeline: &Pipeline, scene: &Scene, cfg: &SamplerConfig) -> Result<SampleBatch> {
    Ok(sample_traced(pipeline, scene, cfg, false)?.0)
}

/// As [`sample`], optionally keeping full trajectories and per-step guidance
/// diagnostics (outer index: batch element).
pub fn sample_traced(
    pipeline: &Pipeline,
    scene: &Scene,
    cfg: &SamplerConfig,
    keep_trajectories: bool,
) -> Result<(SampleBatch, Vec<Trajectory>, Vec<Vec<GuidanceTrace>>)> {
    pipeline.validate()?;
    cfg.validate()?;
    let dim = pipeline.hand.dim();
    let descriptor = scene.descriptor();
    let ctx = GuidanceContext {
        hand: &pipeline.hand,
        scene,
        standardizer: &pipeline.standardizer,
    };
    let dt = 1.0 / cfg.nfe as f64;

    let mut results = Vec::with_capacity(cfg.batch_size);
    let mut trajectories = Vec::new();
    let mut step_traces = Vec::new();
    let mut num_failed = 0;

    for element in 0..cfg.batch_size {
        let mut noise_rng = rng::stream(cfg.seed, "noise", &[element as u64]);
        let mut guide_rng = rng::stream(cfg.seed, "guide", &[element as u64]);
        let mut h: Vec<f64> =
            (0..dim).map(|_| rng::standard_normal(&mut noise_rng)).collect();
        let mut states = if keep_trajectories {
            let mut s = Vec::with_capacity(cfg.nfe + 1);
            s.push(h.clone());
            s
        } else {
            Vec::new()
        };
        let mut traces = Vec::new();
        let mut failed = false;

        for i in 0..cfg.nfe {
            let t = i as f64 / cfg.nfe as f64;
            let v = match &cfg.guidance {
                Some(g) => {
                    let (v, trace) =
                        guidance_step_traced(&pipeline.model, &h, t, &ctx, g, &mut guide_rng)?;
                    traces.push(trace);
                    v
                }
                None => pipeline.model.velocity(&h, t, &descriptor)?,
            };
            h = euler_step(&h, dt, &v);
            if keep_trajectories {
                states.push(h.clone());
            }
            if !math::all_finite(&h) {
                failed = true;
                log::warn!("element {element} diverged at step {i}");
                break;
            }
        }

        let state = pipeline.standardizer.invert(&h).unwrap_or(h);
        let config = if failed {
            num_failed += 1;
            None
        } else {
            Some(HandConfig::from_flat(&state, pipeline.hand.num_fingers)?)
        };
        results.push(SampleResult { element, state, config, failed });
        if keep_trajectories {
            trajectories.push(Trajectory { element, states });
        }
        if cfg.guidance.is_some() {
            step_traces.push(traces);
        }
    }

    Ok((SampleBatch { results, num_failed }, trajectories, step_traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    use crate::energy::EnergyWeights;
    use crate::math::Vec3;
    use crate::rng::stream;
    use crate::scene::{ScenePrimitive, SceneSpec};

    struct Constant(Vec<f64>);
    impl VelocityField for Constant {
        fn velocity(&self, _h: &[f64], _t: f64, _d: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    struct Decay;
    impl VelocityField for Decay {
        fn velocity(&self, h: &[f64], _t: f64, _d: &[f64]) -> Result<Vec<f64>> {
            Ok(h.iter().map(|x| -x).collect())
        }
    }

    fn integrate<V: VelocityField>(v: &V, h0: &[f64], nfe: usize) -> Vec<f64> {
        let mut h = h0.to_vec();
        let dt = 1.0 / nfe as f64;
        for i in 0..nfe {
            let t = i as f64 / nfe as f64;
            h = euler_step(&h, dt, &v.velocity(&h, t, &[]).unwrap());
        }
        h
    }

    #[test]
    fn euler_identities() {
        let h = vec![0.5, -1.0];
        assert_eq!(euler_step(&h, 0.25, &[0.0, 0.0]), h);
        // Constant field over a full unit of time adds exactly the field.
        for nfe in [4usize, 10, 32] {
            let end = integrate(&Constant(vec![2.0, -3.0]), &[1.0, 1.0], nfe);
            assert!((end[0] - 3.0).abs() < 1e-12, "nfe {nfe}: {end:?}");
            assert!((end[1] + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_error_halves_with_step() {
        // dh/dt = -h has closed form e^-1 * h0 at t = 1.
        let h0 = [1.0];
        let exact = (-1.0f64).exp();
        let err = |nfe: usize| (integrate(&Decay, &h0, nfe)[0] - exact).abs();
        let (e100, e200) = (err(100), err(200));
        let ratio = e100 / e200;
        assert!((1.6..=2.4).contains(&ratio), "error ratio {ratio}");
    }

    fn toy_pipeline(seed: u64) -> Pipeline {
        let hand = HandSpec::default();
        Pipeline {
            model: VelocityModel::new(hand.dim(), DESCRIPTOR_DIM, &[16, 16], seed).unwrap(),
            standardizer: Standardizer::identity(hand.dim()),
            hand,
        }
    }

    fn toy_scene() -> Scene {
        SceneSpec {
            prim: ScenePrimitive::Sphere { center: Vec3::ZERO, radius: 0.5 },
            seed: 23,
            cloud_size: 128,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = toy_pipeline(3);
        let scene = toy_scene();
        let cfg = SamplerConfig { nfe: 20, batch_size: 4, seed: 9, ..Default::default() };
        let a = sample(&p, &scene, &cfg).unwrap();
        let b = sample(&p, &scene, &cfg).unwrap();
        assert_eq!(a, b);
        let other = sample(
            &p,
            &scene,
            &SamplerConfig { seed: 10, ..cfg },
        )
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn trace_has_nfe_plus_one_states_starting_at_noise() {
        let p = toy_pipeline(4);
        let scene = toy_scene();
        let cfg = SamplerConfig { nfe: 15, batch_size: 3, seed: 31, ..Default::default() };
        let (_, trajs, _) = sample_traced(&p, &scene, &cfg, true).unwrap();
        assert_eq!(trajs.len(), 3);
        for (e, traj) in trajs.iter().enumerate() {
            assert_eq!(traj.states.len(), cfg.nfe + 1);
            let mut noise_rng = stream(cfg.seed, "noise", &[e as u64]);
            let want: Vec<f64> =
                (0..p.hand.dim()).map(|_| rng::standard_normal(&mut noise_rng)).collect();
            assert_eq!(traj.states[0], want);
        }
    }

    #[test]
    fn zero_weight_guidance_equals_vanilla_trajectories() {
        let p = toy_pipeline(5);
        let scene = toy_scene();
        let vanilla_cfg =
            SamplerConfig { nfe: 25, batch_size: 6, seed: 77, guidance: None };
        let guided_cfg = SamplerConfig {
            guidance: Some(GuidanceConfig {
                energy: EnergyWeights::default().with_terms(0.0, 0.0, 0.0),
                ..Default::default()
            }),
            ..vanilla_cfg.clone()
        };
        let (vb, vt, _) = sample_traced(&p, &scene, &vanilla_cfg, true).unwrap();
        let (gb, gt, _) = sample_traced(&p, &scene, &guided_cfg, true).unwrap();
        assert_eq!(vb.num_failed, 0);
        assert_eq!(gb.num_failed, 0);
        for (a, b) in vt.iter().zip(&gt) {
            for (sa, sb) in a.states.iter().zip(&b.states) {
                for (x, y) in sa.iter().zip(sb) {
                    assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn endpoints_converge_as_nfe_grows() {
        let p = toy_pipeline(6);
        let scene = toy_scene();
        let endpoint_gap = |nfe: usize| -> f64 {
            let mk = |n: usize| {
                sample(
                    &p,
                    &scene,
                    &SamplerConfig { nfe: n, batch_size: 8, seed: 13, ..Default::default() },
                )
                .unwrap()
            };
            let coarse = mk(nfe);
            let fine = mk(2 * nfe);
            let mut acc = 0.0;
            for (a, b) in coarse.results.iter().zip(&fine.results) {
                let d: Vec<f64> =
                    a.state.iter().zip(&b.state).map(|(x, y)| x - y).collect();
                acc += math::norm(&d);
            }
            acc / coarse.results.len() as f64
        };
        let (g10, g25, g50) = (endpoint_gap(10), endpoint_gap(25), endpoint_gap(50));
        assert!(g10 > g25 && g25 > g50, "gaps not shrinking: {g10} {g25} {g50}");
    }

    #[test]
    fn diverging_model_flags_failures() {
        let mut p = toy_pipeline(7);
        let scene = toy_scene();
        p.model.set_param(0, f64::INFINITY);
        let cfg = SamplerConfig { nfe: 5, batch_size: 3, seed: 2, ..Default::default() };
        let err = sample(&p, &scene, &cfg);
        // Model validation refuses non-finite parameters outright.
        assert!(err.is_err());

        // A finite but astronomically scaled model overflows mid-run.
        let mut p = toy_pipeline(7);
        for i in 0..p.model.param_count() {
            p.model.set_param(i, p.model.get_param(i) * 1e200);
        }
        let batch = sample(&p, &scene, &cfg).unwrap();
        assert!(batch.num_failed > 0);
        for r in &batch.results {
            assert_eq!(r.failed, r.config.is_none());
        }
        assert_eq!(
            batch.results.iter().filter(|r| r.failed).count(),
            batch.num_failed
        );
    }

    #[test]
    fn pipeline_validation_catches_mismatches() {
        let mut p = toy_pipeline(8);
        p.standardizer = Standardizer::identity(7);
        assert!(p.validate().is_err());
        let p2 = Pipeline {
            model: VelocityModel::new(9, DESCRIPTOR_DIM, &[8], 1).unwrap(),
            standardizer: Standardizer::identity(9),
            hand: HandSpec::default(),
        };
        assert!(p2.validate().is_err());
        assert!(toy_pipeline(1).validate().is_ok());
    }
}
