//! Sample quality metrics and the comparison harnesses built on them.
//! Success is a geometric proxy: low worst-point penetration, enough
//! fingertip contacts, and contact directions that are not all on one side.
//! The harnesses (NFE sweep, guidance ablation, hyperparameter sensitivity)
//! share per-scene noise seeds so rows differ only in the knob under study.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use num_traits::Float;

use crate::energy::{erf, EnergyForm};
use crate::error::{Error, Result};
use crate::guidance::GuidanceConfig;
use crate::hand::{forward_kinematics, HandConfig, HandSpec};
use crate::rng;
use crate::sampler::{sample, Pipeline, SampleResult, SamplerConfig};
use crate::scene::{Scene, ScenePrimitive};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuccessCriteria {
    /// Worst-point penetration bound.
    pub max_pen: f64,
    /// Minimum fingertip contacts.
    pub min_contacts: usize,
    /// Fingertips within this band of the surface count as contacts.
    pub contact_eps: f64,
    /// Upper bound on the norm of the mean contact direction; 1 accepts
    /// one-sided contact, 0 demands perfectly balanced directions.
    pub max_mean_direction: f64,
}

impl Default for SuccessCriteria {
    fn default() -> Self {
        SuccessCriteria {
            max_pen: 0.02,
            min_contacts: 3,
            contact_eps: 0.05,
            max_mean_direction: 0.8,
        }
    }
}

impl SuccessCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.min_contacts == 0 {
            return Err(Error::config("success requires at least one contact"));
        }
        for (name, v) in [
            ("max_pen", self.max_pen),
            ("contact_eps", self.contact_eps),
            ("max_mean_direction", self.max_mean_direction),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(alloc::format!("criteria {name} = {v}")));
            }
        }
        Ok(())
    }
}

/// Worst-point penetration of the clamped configuration.
pub fn max_penetration(h: &HandConfig, hand: &HandSpec, prim: &ScenePrimitive) -> Result<f64> {
    Ok(erf(&forward_kinematics(h, hand)?, prim))
}

/// Penetration gate, contact count gate, and directional spread gate, all
/// on the clamped configuration. The spread gate looks at the contacting
/// fingertips' unit directions toward the object center: a mean close to
/// zero means the contacts surround the object.
pub fn success_proxy(
    h: &HandConfig,
    hand: &HandSpec,
    prim: &ScenePrimitive,
    criteria: &SuccessCriteria,
) -> Result<bool> {
    let hp = forward_kinematics(h, hand)?;
    if erf(&hp, prim) > criteria.max_pen {
        return Ok(false);
    }
    let center = prim.center();
    let mut mean_dir = crate::math::Vec3::ZERO;
    let mut contacts = 0usize;
    for tip in &hp.fingertips {
        if prim.sdf(*tip).abs() <= criteria.contact_eps {
            contacts += 1;
            if let Some(dir) = (center - *tip).normalized() {
                mean_dir += dir;
            }
        }
    }
    if contacts < criteria.min_contacts {
        return Ok(false);
    }
    Ok((mean_dir * (1.0 / contacts as f64)).norm() <= criteria.max_mean_direction)
}

/// Mean over joint dimensions of the per-dimension population standard
/// deviation. Zero for fewer than two configurations.
pub fn diversity(configs: &[HandConfig]) -> f64 {
    if configs.len() < 2 {
        return 0.0;
    }
    let dims = configs.iter().map(|c| c.joints.len()).min().unwrap_or(0);
    if dims == 0 {
        return 0.0;
    }
    let n = configs.len() as f64;
    let mut total = 0.0;
    for d in 0..dims {
        let mean = configs.iter().map(|c| c.joints[d]).sum::<f64>() / n;
        let var = configs
            .iter()
            .map(|c| {
                let x = c.joints[d] - mean;
                x * x
            })
            .sum::<f64>()
            / n;
        total += var.sqrt();
    }
    total / dims as f64
}

/// A sample tagged with the benchmark scene it was drawn for.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedSample {
    pub object: usize,
    pub result: SampleResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectReport {
    pub object: usize,
    pub samples: usize,
    pub failed: usize,
    pub successes: usize,
    pub mean_penetration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub n_failed: usize,
    pub mean_penetration: f64,
    pub median_penetration: f64,
    pub max_penetration: f64,
    /// Successes over non-failed samples; failures are reported separately.
    pub success_rate: f64,
    /// Joint-space spread of the successful samples.
    pub diversity: f64,
    pub per_object: Vec<ObjectReport>,
}

/// All metrics over a tagged sample set. Failed samples (no finite state
/// reached) are excluded from the penetration and success statistics and
/// surfaced through the failure counts.
pub fn evaluate(
    samples: &[TaggedSample],
    scenes: &[Scene],
    hand: &HandSpec,
    criteria: &SuccessCriteria,
) -> Result<EvalReport> {
    criteria.validate()?;
    let mut pens = Vec::new();
    let mut successful = Vec::new();
    let mut n_failed = 0usize;
    let mut per_object: Vec<ObjectReport> = (0..scenes.len())
        .map(|object| ObjectReport {
            object,
            samples: 0,
            failed: 0,
            successes: 0,
            mean_penetration: 0.0,
        })
        .collect();
    for s in samples {
        let row = per_object
            .get_mut(s.object)
            .ok_or_else(|| Error::input(alloc::format!("unknown object id {}", s.object)))?;
        row.samples += 1;
        let Some(config) = s.result.config.as_ref().filter(|_| !s.result.failed) else {
            n_failed += 1;
            row.failed += 1;
            continue;
        };
        let prim = &scenes[s.object].prim;
        let pen = max_penetration(config, hand, prim)?;
        pens.push(pen);
        row.mean_penetration += pen;
        if success_proxy(config, hand, prim, criteria)? {
            row.successes += 1;
            successful.push(config.clone());
        }
    }
    for row in &mut per_object {
        let valid = row.samples - row.failed;
        if valid > 0 {
            row.mean_penetration /= valid as f64;
        }
    }
    let n_valid = pens.len();
    let (mean, median, max) = if n_valid == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let mut sorted = pens.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if n_valid % 2 == 1 {
            sorted[n_valid / 2]
        } else {
            0.5 * (sorted[n_valid / 2 - 1] + sorted[n_valid / 2])
        };
        (
            sorted.iter().sum::<f64>() / n_valid as f64,
            median,
            sorted[n_valid - 1],
        )
    };
    Ok(EvalReport {
        n_samples: samples.len(),
        n_failed,
        mean_penetration: mean,
        median_penetration: median,
        max_penetration: max,
        success_rate: if n_valid == 0 {
            0.0
        } else {
            successful.len() as f64 / n_valid as f64
        },
        diversity: diversity(&successful),
        per_object,
    })
}

/// One batch per scene with a per-scene derived seed, so every harness
/// variant sees identical noise for scene `i` regardless of which variants
/// ran before it.
pub fn benchmark_samples(
    pipeline: &Pipeline,
    scenes: &[Scene],
    base: &SamplerConfig,
    guidance: Option<&GuidanceConfig>,
    seed: u64,
) -> Result<Vec<TaggedSample>> {
    let mut out = Vec::with_capacity(scenes.len() * base.batch_size);
    for (i, scene) in scenes.iter().enumerate() {
        let cfg = SamplerConfig {
            seed: rng::derive(seed, "scene", &[i as u64]),
            guidance: guidance.cloned(),
            ..base.clone()
        };
        let batch = sample(pipeline, scene, &cfg)?;
        out.extend(
            batch
                .results
                .into_iter()
                .map(|result| TaggedSample { object: i, result }),
        );
    }
    Ok(out)
}

/// Sample + evaluate in one step.
pub fn run_benchmark(
    pipeline: &Pipeline,
    scenes: &[Scene],
    base: &SamplerConfig,
    guidance: Option<&GuidanceConfig>,
    seed: u64,
    criteria: &SuccessCriteria,
) -> Result<EvalReport> {
    let samples = benchmark_samples(pipeline, scenes, base, guidance, seed)?;
    evaluate(&samples, scenes, &pipeline.hand, criteria)
}

/// Reports at each integrator budget, identical noise per scene.
pub fn nfe_sweep(
    pipeline: &Pipeline,
    scenes: &[Scene],
    nfe_list: &[usize],
    base: &SamplerConfig,
    guidance: Option<&GuidanceConfig>,
    seed: u64,
    criteria: &SuccessCriteria,
) -> Result<Vec<(usize, EvalReport)>> {
    if nfe_list.is_empty() {
        return Err(Error::input("empty nfe list"));
    }
    nfe_list
        .iter()
        .map(|&nfe| {
            let cfg = SamplerConfig { nfe, ..base.clone() };
            Ok((nfe, run_benchmark(pipeline, scenes, &cfg, guidance, seed, criteria)?))
        })
        .collect()
}

/// The guidance term combinations compared by `ablate`, built from one base
/// configuration: each variant keeps every other knob fixed.
pub fn ablation_variants(base: &GuidanceConfig) -> Vec<(String, Option<GuidanceConfig>)> {
    let w = &base.energy;
    let with = |erf: f64, spf: f64, srf: f64, form: EnergyForm| {
        let mut g = base.clone();
        g.energy = w.with_terms(erf, spf, srf);
        g.form = form;
        Some(g)
    };
    alloc::vec![
        (String::from("vanilla"), None),
        (String::from("srf"), with(0.0, 0.0, w.srf, EnergyForm::Adapted)),
        (String::from("erf"), with(w.erf, 0.0, 0.0, EnergyForm::Adapted)),
        (String::from("srf_erf"), with(w.erf, 0.0, w.srf, EnergyForm::Adapted)),
        (String::from("all"), with(w.erf, w.spf, w.srf, EnergyForm::Adapted)),
        (String::from("all_original"), with(w.erf, w.spf, w.srf, EnergyForm::Original)),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub report: EvalReport,
}

/// Guidance-term ablation with shared seeds.
pub fn ablate(
    pipeline: &Pipeline,
    scenes: &[Scene],
    base_guidance: &GuidanceConfig,
    base_sampler: &SamplerConfig,
    seed: u64,
    criteria: &SuccessCriteria,
) -> Result<Vec<AblationRow>> {
    ablation_variants(base_guidance)
        .into_iter()
        .map(|(label, guidance)| {
            let report =
                run_benchmark(pipeline, scenes, base_sampler, guidance.as_ref(), seed, criteria)?;
            Ok(AblationRow { label, report })
        })
        .collect()
}

/// One-at-a-time grids for the sensitivity harness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityGrid {
    pub scales: Vec<f64>,
    pub taus: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Default for SensitivityGrid {
    fn default() -> Self {
        SensitivityGrid {
            scales: alloc::vec![0.0, 10.0, 30.0, 50.0, 100.0],
            taus: alloc::vec![0.01, 0.05, 0.1, 1.0],
            weights: alloc::vec![0.1, 0.25, 0.4, 0.5, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub param: String,
    pub value: f64,
    pub report: EvalReport,
}

/// Vary scale, temperature, and each energy weight one at a time around the
/// base guidance configuration, with shared seeds.
pub fn sensitivity(
    pipeline: &Pipeline,
    scenes: &[Scene],
    base_guidance: &GuidanceConfig,
    base_sampler: &SamplerConfig,
    grid: &SensitivityGrid,
    seed: u64,
    criteria: &SuccessCriteria,
) -> Result<Vec<SensitivityRow>> {
    let mut rows = Vec::new();
    let mut push = |param: &str, value: f64, g: GuidanceConfig| -> Result<()> {
        let report = run_benchmark(pipeline, scenes, base_sampler, Some(&g), seed, criteria)?;
        rows.push(SensitivityRow { param: String::from(param), value, report });
        Ok(())
    };
    for &s in &grid.scales {
        let mut g = base_guidance.clone();
        g.scale = s;
        push("scale", s, g)?;
    }
    for &tau in &grid.taus {
        let mut g = base_guidance.clone();
        g.tau = tau;
        push("tau", tau, g)?;
    }
    for (name, pick) in [
        ("w_erf", 0usize),
        ("w_spf", 1),
        ("w_srf", 2),
    ] {
        for &v in &grid.weights {
            let mut g = base_guidance.clone();
            match pick {
                0 => g.energy.erf = v,
                1 => g.energy.spf = v,
                _ => g.energy.srf = v,
            }
            push(name, v, g)?;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{Standardizer, VelocityModel};
    use crate::math::Vec3;
    use crate::scene::{SceneSpec, DESCRIPTOR_DIM};
    use proptest::prelude::*;

    fn sphere(center: Vec3, radius: f64) -> ScenePrimitive {
        ScenePrimitive::Sphere { center, radius }
    }

    #[test]
    fn penetration_depth_basics() {
        let hand = HandSpec::default();
        let mut h = HandConfig::zeros(4);
        h.translation = Vec3::new(10.0, 0.0, 0.0);
        let prim = sphere(Vec3::ZERO, 1.0);
        assert_eq!(max_penetration(&h, &hand, &prim).unwrap(), 0.0);
        // Palm center sitting at the sphere center is the deepest point.
        let at_center = HandConfig::zeros(4);
        let pen = max_penetration(&at_center, &hand, &prim).unwrap();
        assert!((pen - 1.0).abs() < 1e-12);
    }

    #[test]
    fn penetration_equals_independent_enumeration() {
        use rand::Rng;
        let hand = HandSpec::default();
        let prim = sphere(Vec3::new(0.1, -0.2, 0.3), 0.6);
        let mut r = rng::stream(41, "pen", &[]);
        for _ in 0..1000 {
            let h = HandConfig {
                translation: Vec3::new(
                    r.random_range(-1.0..1.0),
                    r.random_range(-1.0..1.0),
                    r.random_range(-1.0..1.0),
                ),
                axis_angle: rng::unit_vector(&mut r) * r.random_range(0.0..3.0),
                joints: (0..4).map(|_| r.random_range(-1.0..2.5)).collect(),
            };
            let hp = forward_kinematics(&h, &hand).unwrap();
            let expect = hp
                .surface_points
                .iter()
                .map(|p| (-prim.sdf(*p)).max(0.0))
                .fold(0.0, f64::max);
            assert_eq!(max_penetration(&h, &hand, &prim).unwrap(), expect);
        }
    }

    #[test]
    fn symmetric_equator_contacts_succeed() {
        // Zero pose: tips ring the sphere's equator at exactly the surface,
        // contact directions cancel.
        let hand = HandSpec::default();
        let h = HandConfig::zeros(4);
        let prim = sphere(Vec3::new(0.0, 0.0, 0.7), 0.5);
        let crit = SuccessCriteria::default();
        assert!((max_penetration(&h, &hand, &prim).unwrap() - 0.0).abs() < 1e-12);
        assert!(success_proxy(&h, &hand, &prim, &crit).unwrap());
    }

    #[test]
    fn far_and_deep_configs_fail() {
        let hand = HandSpec::default();
        let crit = SuccessCriteria::default();
        let mut far = HandConfig::zeros(4);
        far.translation = Vec3::new(5.0, 5.0, 5.0);
        let prim = sphere(Vec3::new(0.0, 0.0, 0.7), 0.5);
        assert!(!success_proxy(&far, &hand, &prim, &crit).unwrap());
        // Palm at the sphere center: penetration gate.
        let mut deep = HandConfig::zeros(4);
        deep.translation = Vec3::new(0.0, 0.0, 0.7);
        assert!(!success_proxy(&deep, &hand, &prim, &crit).unwrap());
    }

    #[test]
    fn one_sided_contacts_fail_the_spread_gate() {
        // All four tips touch the bottom of a large sphere: contacts point
        // the same way, mean direction norm 0.866 > 0.8.
        let hand = HandSpec::default();
        let h = HandConfig::zeros(4);
        let height = (1.0f64 - 0.25).sqrt();
        let prim = sphere(Vec3::new(0.0, 0.0, 0.7 + height), 1.0);
        let crit = SuccessCriteria::default();
        let hp = forward_kinematics(&h, &hand).unwrap();
        for tip in &hp.fingertips {
            assert!(prim.sdf(*tip).abs() < 1e-12, "tip off surface");
        }
        assert!(max_penetration(&h, &hand, &prim).unwrap() < 1e-12);
        assert!(!success_proxy(&h, &hand, &prim, &crit).unwrap());
        // The same geometry passes once the spread gate is loosened.
        let loose = SuccessCriteria { max_mean_direction: 0.9, ..crit };
        assert!(success_proxy(&h, &hand, &prim, &loose).unwrap());
    }

    #[test]
    fn tightening_the_penetration_gate_is_monotone() {
        use rand::Rng;
        let hand = HandSpec::default();
        let prim = sphere(Vec3::new(0.0, 0.0, 0.6), 0.5);
        let mut r = rng::stream(42, "mono", &[]);
        for _ in 0..200 {
            let h = HandConfig {
                translation: Vec3::new(
                    r.random_range(-0.5..0.5),
                    r.random_range(-0.5..0.5),
                    r.random_range(-0.3..0.8),
                ),
                axis_angle: rng::unit_vector(&mut r) * r.random_range(0.0..1.0),
                joints: (0..4).map(|_| r.random_range(0.0..1.5)).collect(),
            };
            let tight = SuccessCriteria { max_pen: 0.01, ..Default::default() };
            let loose = SuccessCriteria { max_pen: 0.05, ..Default::default() };
            let st = success_proxy(&h, &hand, &prim, &tight).unwrap();
            let sl = success_proxy(&h, &hand, &prim, &loose).unwrap();
            assert!(!st || sl, "tight gate accepted what the loose gate rejected");
        }
    }

    #[test]
    fn diversity_hand_computations() {
        let mut a = HandConfig::zeros(4);
        let mut b = HandConfig::zeros(4);
        assert_eq!(diversity(&[a.clone()]), 0.0);
        assert_eq!(diversity(&[a.clone(), a.clone()]), 0.0);
        let delta = 0.3;
        a.joints[2] = 1.0 - delta;
        b.joints[2] = 1.0 + delta;
        // One dimension with population std delta, averaged over 4 dims.
        let d = diversity(&[a.clone(), b.clone()]);
        assert!((d - delta / 4.0).abs() < 1e-12);
        // Permutation invariance and indifference to pose dimensions.
        assert_eq!(d, diversity(&[b.clone(), a.clone()]));
        a.translation = Vec3::new(9.0, 9.0, 9.0);
        b.axis_angle = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(d, diversity(&[a, b]));
    }

    proptest! {
        #[test]
        fn diversity_is_nonnegative_and_permutation_invariant(
            joints in proptest::collection::vec(
                proptest::collection::vec(-2.0f64..2.0, 4), 2..8),
            swap_a in 0usize..8, swap_b in 0usize..8,
        ) {
            let configs: alloc::vec::Vec<HandConfig> = joints
                .iter()
                .map(|j| HandConfig {
                    translation: Vec3::ZERO,
                    axis_angle: Vec3::ZERO,
                    joints: j.clone(),
                })
                .collect();
            let d = diversity(&configs);
            prop_assert!(d >= 0.0);
            let mut shuffled = configs.clone();
            let (a, b) = (swap_a % shuffled.len(), swap_b % shuffled.len());
            shuffled.swap(a, b);
            prop_assert!((d - diversity(&shuffled)).abs() < 1e-12);
        }
    }

    fn tagged(object: usize, config: HandConfig) -> TaggedSample {
        TaggedSample {
            object,
            result: SampleResult {
                element: 0,
                state: config.flatten(),
                config: Some(config),
                failed: false,
            },
        }
    }

    fn test_scenes() -> Vec<Scene> {
        [0.45, 0.55]
            .iter()
            .enumerate()
            .map(|(i, r)| {
                SceneSpec {
                    prim: sphere(Vec3::new(0.0, 0.0, 0.7), *r),
                    seed: 50 + i as u64,
                    cloud_size: 128,
                }
                .build()
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn evaluate_aggregates_and_recomputes() {
        let hand = HandSpec::default();
        let scenes = test_scenes();
        let crit = SuccessCriteria::default();
        let good = HandConfig::zeros(4);
        let mut off = HandConfig::zeros(4);
        off.translation = Vec3::new(0.0, 0.0, 0.3);
        let mut samples = alloc::vec![
            tagged(0, good.clone()),
            tagged(1, good.clone()),
            tagged(0, off.clone()),
        ];
        samples.push(TaggedSample {
            object: 1,
            result: SampleResult { element: 3, state: alloc::vec![f64::NAN; 10], config: None, failed: true },
        });
        let report = evaluate(&samples, &scenes, &hand, &crit).unwrap();
        assert_eq!(report.n_samples, 4);
        assert_eq!(report.n_failed, 1);
        // Mean penetration equals the arithmetic mean of independent
        // per-sample recomputations.
        let expect: f64 = [
            max_penetration(&good, &hand, &scenes[0].prim).unwrap(),
            max_penetration(&good, &hand, &scenes[1].prim).unwrap(),
            max_penetration(&off, &hand, &scenes[0].prim).unwrap(),
        ]
        .iter()
        .sum::<f64>()
            / 3.0;
        assert!((report.mean_penetration - expect).abs() < 1e-15);
        assert_eq!(report.per_object.len(), 2);
        assert_eq!(report.per_object[0].samples, 2);
        assert_eq!(report.per_object[1].failed, 1);
        // Determinism: identical report on recomputation.
        assert_eq!(report, evaluate(&samples, &scenes, &hand, &crit).unwrap());
    }

    #[test]
    fn evaluate_rejects_unknown_objects() {
        let hand = HandSpec::default();
        let scenes = test_scenes();
        let samples = [tagged(7, HandConfig::zeros(4))];
        assert!(matches!(
            evaluate(&samples, &scenes, &hand, &SuccessCriteria::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn empty_success_set_reports_zeros() {
        let hand = HandSpec::default();
        let scenes = test_scenes();
        let mut far = HandConfig::zeros(4);
        far.translation = Vec3::new(8.0, 0.0, 0.0);
        let report = evaluate(
            &[tagged(0, far)],
            &scenes,
            &hand,
            &SuccessCriteria::default(),
        )
        .unwrap();
        assert_eq!(report.success_rate, 0.0);
        assert_eq!(report.diversity, 0.0);
    }

    fn tiny_pipeline() -> Pipeline {
        let hand = HandSpec::default();
        let model = VelocityModel::new(hand.dim(), DESCRIPTOR_DIM, &[16], 7).unwrap();
        Pipeline {
            model,
            standardizer: Standardizer::identity(hand.dim()),
            hand,
        }
    }

    #[test]
    fn harness_consistency_identities() {
        let pipeline = tiny_pipeline();
        let scenes = test_scenes();
        let crit = SuccessCriteria::default();
        let sampler = SamplerConfig { nfe: 8, batch_size: 2, ..Default::default() };
        let guidance = GuidanceConfig::default();

        let rows = ablate(&pipeline, &scenes, &guidance, &sampler, 11, &crit).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>(),
            ["vanilla", "srf", "erf", "srf_erf", "all", "all_original"],
        );
        // The vanilla row is exactly a zero-weight guided run.
        let mut zero = guidance.clone();
        zero.energy = zero.energy.with_terms(0.0, 0.0, 0.0);
        let zero_run =
            run_benchmark(&pipeline, &scenes, &sampler, Some(&zero), 11, &crit).unwrap();
        assert_eq!(rows[0].report, zero_run);

        // Scale zero leaves the velocity untouched: identical to vanilla.
        let grid = SensitivityGrid {
            scales: alloc::vec![0.0],
            taus: alloc::vec![],
            weights: alloc::vec![],
        };
        let sens =
            sensitivity(&pipeline, &scenes, &guidance, &sampler, &grid, 11, &crit).unwrap();
        assert_eq!(sens.len(), 1);
        assert_eq!(sens[0].report, rows[0].report);

        let sweep = nfe_sweep(
            &pipeline,
            &scenes,
            &[4, 8],
            &sampler,
            None,
            11,
            &crit,
        )
        .unwrap();
        assert_eq!(sweep[0].0, 4);
        assert_eq!(sweep[1].0, 8);
        // NFE 8 vanilla row matches the ablation's vanilla run (same seeds).
        assert_eq!(sweep[1].1, rows[0].report);
    }
}
