//! Subcommand implementations. Each command is a pure function of the
//! effective configuration and its input files, so reruns write identical
//! bytes; the verify command leans on that to re-derive artifacts and
//! compare hashes. No command mutates its inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use flowgrasp_core::dataset;
use flowgrasp_core::flow::{self, Standardizer, TrainItem, VelocityModel};
use flowgrasp_core::guidance::GuidanceTrace;
use flowgrasp_core::hand::HandConfig;
use flowgrasp_core::metrics::{
    self, AblationRow, EvalReport, SensitivityGrid, SensitivityRow, SuccessCriteria,
    TaggedSample,
};
use flowgrasp_core::rng;
use flowgrasp_core::sampler::{sample_traced, Pipeline, SampleResult, SamplerConfig, Trajectory};
use flowgrasp_core::scene::{sample_surface, Scene, SceneSpec, DESCRIPTOR_DIM};

use crate::artifacts::{
    self, AblateArtifact, Checkpoint, DatasetHeader, DatasetRow, ReportArtifact, SampleRow,
    SamplesHeader, SensitivityArtifact, SweepArtifact, SweepRow, VERSION,
};
use crate::config::{sha256_hex, RunConfig};
use crate::UsageError;

/// Probe batch size recorded in every checkpoint.
pub const PROBE_COUNT: usize = 8;

fn resolve(explicit: Option<&Path>, default: PathBuf) -> PathBuf {
    explicit.map(Path::to_path_buf).unwrap_or(default)
}

/// Held-out benchmark scenes, drawn from a stream disjoint from the
/// training objects.
pub fn bench_scenes(cfg: &RunConfig) -> anyhow::Result<(Vec<SceneSpec>, Vec<Scene>)> {
    let bench_seed = rng::derive(cfg.seed, "bench", &[]);
    let prims = dataset::generate_objects(cfg.data.bench_objects, bench_seed);
    let mut specs = Vec::with_capacity(prims.len());
    let mut scenes = Vec::with_capacity(prims.len());
    for (i, prim) in prims.into_iter().enumerate() {
        let spec = SceneSpec {
            prim,
            seed: rng::derive(bench_seed, "cloud", &[i as u64]),
            cloud_size: cfg.data.cloud_size,
        };
        scenes.push(spec.build()?);
        specs.push(spec);
    }
    Ok((specs, scenes))
}

#[derive(Debug)]
pub struct GenDataOutcome {
    pub path: PathBuf,
    pub stats: dataset::BuildStats,
}

pub fn gen_data(
    cfg: &RunConfig,
    out: Option<&Path>,
    n_objects: Option<usize>,
) -> anyhow::Result<GenDataOutcome> {
    // The echoed config must describe what actually ran, so flag overrides
    // are folded in before hashing.
    let mut cfg = cfg.clone();
    if let Some(n) = n_objects {
        if n == 0 {
            return Err(UsageError("--n-objects must be positive".into()).into());
        }
        cfg.data.n_objects = n;
    }
    let (pairs, stats) = dataset::build_dataset(
        cfg.data.n_objects,
        cfg.data.grasps_per_object,
        &cfg.hand,
        &cfg.oracle,
        &cfg.energy,
        cfg.data.cloud_size,
        cfg.seed,
    )?;
    let rows: Vec<DatasetRow> = pairs
        .into_iter()
        .map(|(object, record)| DatasetRow { object, record })
        .collect();
    let header = DatasetHeader {
        kind: "dataset".into(),
        version: VERSION,
        seed: cfg.seed,
        config_sha256: cfg.sha256()?,
        stats,
        config: cfg.clone(),
    };
    let text = artifacts::render_dataset(&header, &rows)?;
    let path = resolve(out, cfg.paths.dataset());
    artifacts::write_artifact(&path, &text)?;
    Ok(GenDataOutcome { path, stats })
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub loss_path: PathBuf,
    /// Dataset loss of the freshly initialized model, before any update.
    pub initial_loss: f64,
    pub loss_curve: Vec<f64>,
    pub records: usize,
}

pub fn train(
    cfg: &RunConfig,
    data: Option<&Path>,
    out: Option<&Path>,
) -> anyhow::Result<TrainOutcome> {
    let data_path = resolve(data, cfg.paths.dataset());
    let text = artifacts::read_artifact(&data_path)?;
    let dataset_sha256 = sha256_hex(text.as_bytes());
    let (header, rows) = artifacts::parse_dataset(&text)?;
    if rows.is_empty() {
        bail!("dataset {} has no grasp rows", data_path.display());
    }
    for row in &rows {
        if row.record.config.joints.len() != cfg.hand.num_fingers {
            bail!(
                "dataset hand mismatch: record has {} joints, config expects {}",
                row.record.config.joints.len(),
                cfg.hand.num_fingers
            );
        }
    }

    // Conditioning descriptors come from the same clouds the oracle saw:
    // rebuilt from the dataset's own seed and sizes, not the current config.
    let mut descriptors: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for row in &rows {
        if let std::collections::btree_map::Entry::Vacant(e) = descriptors.entry(row.object) {
            let cloud = sample_surface(
                &row.record.object,
                header.config.data.cloud_size,
                &mut rng::stream(header.seed, "cloud", &[row.object as u64]),
            )?;
            let scene = Scene::new(row.record.object.clone(), cloud)?;
            e.insert(scene.descriptor().to_vec());
        }
    }

    let flat: Vec<Vec<f64>> = rows.iter().map(|r| r.record.config.flatten()).collect();
    let standardizer = Standardizer::fit(&flat)?;
    let items: Vec<TrainItem> = rows
        .iter()
        .zip(&flat)
        .map(|(row, x)| {
            Ok(TrainItem {
                target: standardizer.apply(x)?,
                descriptor: descriptors[&row.object].clone(),
            })
        })
        .collect::<flowgrasp_core::Result<_>>()?;

    let mut model =
        VelocityModel::new(cfg.hand.dim(), DESCRIPTOR_DIM, &flow::DEFAULT_HIDDEN, cfg.seed)?;
    // Loss of the untrained model: the reference point for convergence
    // claims, which the first logged epoch understates (it already averages
    // over in-epoch updates).
    let initial_loss = flow::fm_loss(
        &model,
        &items,
        cfg.train.sigma_min,
        &mut rng::stream(cfg.seed, "train-eval", &[]),
    )?;
    let loss_curve = flow::train(&mut model, &items, &cfg.train, cfg.seed)?;
    let pipeline = Pipeline { model, standardizer, hand: cfg.hand.clone() };
    let probe = artifacts::probe_outputs(&pipeline, cfg.seed, PROBE_COUNT)?;

    let ckpt = Checkpoint {
        kind: "checkpoint".into(),
        version: VERSION,
        seed: cfg.seed,
        config_sha256: cfg.sha256()?,
        dataset_sha256,
        initial_loss,
        loss_curve: loss_curve.clone(),
        probe,
        config: cfg.clone(),
        pipeline,
    };
    let checkpoint_path = resolve(out, cfg.paths.checkpoint());
    artifacts::write_artifact(&checkpoint_path, &artifacts::render_checkpoint(&ckpt)?)?;
    let loss_path = cfg.paths.loss_csv();
    artifacts::write_artifact(&loss_path, &artifacts::render_loss_csv(&loss_curve))?;
    Ok(TrainOutcome { checkpoint_path, loss_path, initial_loss, loss_curve, records: rows.len() })
}

fn load_checkpoint(path: &Path) -> anyhow::Result<(Checkpoint, String)> {
    let text = artifacts::read_artifact(path)?;
    let sha = sha256_hex(text.as_bytes());
    Ok((artifacts::parse_checkpoint(&text)?, sha))
}

fn checked_pipeline(cfg: &RunConfig, ckpt: &Checkpoint) -> anyhow::Result<Pipeline> {
    if ckpt.pipeline.hand != cfg.hand {
        bail!("checkpoint was trained with a different hand spec");
    }
    Ok(ckpt.pipeline.clone())
}

pub struct TraceData {
    /// `(object, trajectory)` per batch element, states indexed by step.
    pub trajectories: Vec<(usize, Trajectory)>,
    /// `(object, element, per-step guidance diagnostics)`.
    pub guidance: Vec<(usize, usize, Vec<GuidanceTrace>)>,
}

/// Samples every benchmark scene with per-scene derived seeds. The same
/// derivation drives the evaluation harnesses, so a samples file and a
/// harness row with equal settings contain identical grasps.
pub fn sample_rows(
    pipeline: &Pipeline,
    scenes: &[Scene],
    cfg: &RunConfig,
    guided: bool,
    nfe: usize,
    want_trace: bool,
) -> anyhow::Result<(Vec<SampleRow>, TraceData)> {
    let guidance = guided.then(|| cfg.guidance.clone());
    let mut rows = Vec::new();
    let mut trace = TraceData { trajectories: Vec::new(), guidance: Vec::new() };
    for (i, scene) in scenes.iter().enumerate() {
        let scfg = SamplerConfig {
            nfe,
            batch_size: cfg.sampler.batch_size,
            seed: rng::derive(cfg.seed, "scene", &[i as u64]),
            guidance: guidance.clone(),
        };
        let (batch, trajectories, guide_traces) =
            sample_traced(pipeline, scene, &scfg, want_trace)?;
        rows.extend(batch.results.into_iter().map(|r| SampleRow {
            object: i,
            element: r.element,
            failed: r.failed,
            config: r.config,
        }));
        if want_trace {
            trace
                .trajectories
                .extend(trajectories.into_iter().map(|t| (i, t)));
            trace.guidance.extend(
                guide_traces
                    .into_iter()
                    .enumerate()
                    .map(|(element, steps)| (i, element, steps)),
            );
        }
    }
    Ok((rows, trace))
}

/// Rebuilds scenes from a samples header and evaluates its rows. Used by
/// both `sample` (to print the report) and `eval` (to reproduce it).
pub fn report_from_rows(
    header: &SamplesHeader,
    rows: &[SampleRow],
) -> anyhow::Result<EvalReport> {
    let scenes: Vec<Scene> = header
        .scenes
        .iter()
        .map(SceneSpec::build)
        .collect::<flowgrasp_core::Result<_>>()?;
    let tagged: Vec<TaggedSample> = rows
        .iter()
        .map(|r| TaggedSample {
            object: r.object,
            result: SampleResult {
                element: r.element,
                state: r.config.as_ref().map(HandConfig::flatten).unwrap_or_default(),
                config: r.config.clone(),
                failed: r.failed,
            },
        })
        .collect();
    Ok(metrics::evaluate(
        &tagged,
        &scenes,
        &header.config.hand,
        &SuccessCriteria::default(),
    )?)
}

#[derive(Debug)]
pub struct SampleOutcome {
    pub path: PathBuf,
    pub report: EvalReport,
    pub trace_paths: Vec<PathBuf>,
}

#[allow(clippy::too_many_arguments)]
pub fn sample(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    out: Option<&Path>,
    guided: bool,
    nfe: Option<usize>,
    want_trace: bool,
) -> anyhow::Result<SampleOutcome> {
    let mut cfg = cfg.clone();
    if let Some(nfe) = nfe {
        if nfe == 0 {
            return Err(UsageError("--nfe must be positive".into()).into());
        }
        cfg.sampler.nfe = nfe;
    }
    let ckpt_path = resolve(checkpoint, cfg.paths.checkpoint());
    let (ckpt, checkpoint_sha256) = load_checkpoint(&ckpt_path)?;
    let pipeline = checked_pipeline(&cfg, &ckpt)?;
    let (specs, scenes) = bench_scenes(&cfg)?;
    let (rows, trace) =
        sample_rows(&pipeline, &scenes, &cfg, guided, cfg.sampler.nfe, want_trace)?;
    let header = SamplesHeader {
        kind: "samples".into(),
        version: VERSION,
        seed: cfg.seed,
        config_sha256: cfg.sha256()?,
        checkpoint_sha256,
        guided,
        nfe: cfg.sampler.nfe,
        config: cfg.clone(),
        scenes: specs,
    };
    let path = resolve(out, cfg.paths.samples());
    artifacts::write_artifact(&path, &artifacts::render_samples(&header, &rows)?)?;

    let mut trace_paths = Vec::new();
    if want_trace {
        let tpath = path.with_extension("trace.csv");
        artifacts::write_artifact(&tpath, &render_trace_csv(&trace.trajectories, cfg.sampler.nfe))?;
        trace_paths.push(tpath);
        if guided {
            let gpath = path.with_extension("guidance.csv");
            artifacts::write_artifact(&gpath, &render_guidance_csv(&trace.guidance, cfg.sampler.nfe))?;
            trace_paths.push(gpath);
        }
    }

    let report = report_from_rows(&header, &rows)?;
    Ok(SampleOutcome { path, report, trace_paths })
}

fn render_trace_csv(trajectories: &[(usize, Trajectory)], nfe: usize) -> String {
    let dim = trajectories
        .first()
        .and_then(|(_, t)| t.states.first())
        .map_or(0, Vec::len);
    let mut out = String::from("object,element,step,t");
    for d in 0..dim {
        out.push_str(&format!(",h{d}"));
    }
    out.push('\n');
    for (object, traj) in trajectories {
        for (step, state) in traj.states.iter().enumerate() {
            out.push_str(&format!(
                "{object},{},{step},{}",
                traj.element,
                step as f64 / nfe as f64
            ));
            for x in state {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
    }
    out
}

fn render_guidance_csv(traces: &[(usize, usize, Vec<GuidanceTrace>)], nfe: usize) -> String {
    let mut out =
        String::from("object,element,step,t,v_norm,g_norm,candidates,dropped,skipped,e_min,e_mean\n");
    let _ = nfe;
    for (object, element, steps) in traces {
        for (step, tr) in steps.iter().enumerate() {
            let (e_min, e_mean) = if tr.energies.is_empty() {
                (String::new(), String::new())
            } else {
                let min = tr.energies.iter().cloned().fold(f64::INFINITY, f64::min);
                let mean = tr.energies.iter().sum::<f64>() / tr.energies.len() as f64;
                (format!("{min}"), format!("{mean}"))
            };
            out.push_str(&format!(
                "{object},{element},{step},{},{},{},{},{},{},{e_min},{e_mean}\n",
                tr.t,
                tr.v_norm,
                tr.g_norm,
                tr.energies.len(),
                tr.dropped,
                tr.skipped
            ));
        }
    }
    out
}

pub fn eval(cfg: &RunConfig, samples: Option<&Path>) -> anyhow::Result<EvalReport> {
    let path = resolve(samples, cfg.paths.samples());
    let text = artifacts::read_artifact(&path)?;
    let (header, rows) = artifacts::parse_samples(&text)?;
    report_from_rows(&header, &rows)
}

fn report_artifact<T>(cfg: &RunConfig, kind: &str, checkpoint_sha256: String, rows: T) -> anyhow::Result<ReportArtifact<T>> {
    Ok(ReportArtifact {
        kind: kind.into(),
        version: VERSION,
        seed: cfg.seed,
        config_sha256: cfg.sha256()?,
        checkpoint_sha256,
        config: cfg.clone(),
        rows,
    })
}

pub fn sweep_nfe(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    out: Option<&Path>,
    nfe_list: &[usize],
    guided: bool,
) -> anyhow::Result<SweepArtifact> {
    if nfe_list.iter().any(|&n| n == 0) {
        return Err(UsageError("--nfe entries must be positive".into()).into());
    }
    let (ckpt, sha) = load_checkpoint(&resolve(checkpoint, cfg.paths.checkpoint()))?;
    let pipeline = checked_pipeline(cfg, &ckpt)?;
    let (_, scenes) = bench_scenes(cfg)?;
    let rows = metrics::nfe_sweep(
        &pipeline,
        &scenes,
        nfe_list,
        &cfg.sampler,
        guided.then_some(&cfg.guidance),
        cfg.seed,
        &SuccessCriteria::default(),
    )?
    .into_iter()
    .map(|(nfe, report)| SweepRow { nfe, report })
    .collect();
    let artifact = report_artifact(cfg, "nfe_sweep", sha, rows)?;
    if let Some(out) = out {
        artifacts::write_artifact(out, &artifacts::render_report(&artifact)?)?;
    }
    Ok(artifact)
}

pub fn ablate(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    out: Option<&Path>,
) -> anyhow::Result<AblateArtifact> {
    let (ckpt, sha) = load_checkpoint(&resolve(checkpoint, cfg.paths.checkpoint()))?;
    let pipeline = checked_pipeline(cfg, &ckpt)?;
    let (_, scenes) = bench_scenes(cfg)?;
    let rows: Vec<AblationRow> = metrics::ablate(
        &pipeline,
        &scenes,
        &cfg.guidance,
        &cfg.sampler,
        cfg.seed,
        &SuccessCriteria::default(),
    )?;
    let artifact = report_artifact(cfg, "ablation", sha, rows)?;
    if let Some(out) = out {
        artifacts::write_artifact(out, &artifacts::render_report(&artifact)?)?;
    }
    Ok(artifact)
}

pub fn sensitivity(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    out: Option<&Path>,
    grid: &SensitivityGrid,
) -> anyhow::Result<SensitivityArtifact> {
    let (ckpt, sha) = load_checkpoint(&resolve(checkpoint, cfg.paths.checkpoint()))?;
    let pipeline = checked_pipeline(cfg, &ckpt)?;
    let (_, scenes) = bench_scenes(cfg)?;
    let rows: Vec<SensitivityRow> = metrics::sensitivity(
        &pipeline,
        &scenes,
        &cfg.guidance,
        &cfg.sampler,
        grid,
        cfg.seed,
        &SuccessCriteria::default(),
    )?;
    let artifact = report_artifact(cfg, "sensitivity", sha, rows)?;
    if let Some(out) = out {
        artifacts::write_artifact(out, &artifacts::render_report(&artifact)?)?;
    }
    Ok(artifact)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyLine {
    pub artifact: String,
    pub ok: bool,
    pub detail: String,
}

/// Re-derives each artifact from its embedded provenance and compares
/// bytes: the dataset is rebuilt in full, the checkpoint's probe outputs
/// are recomputed from its stored pipeline, and the samples file is
/// re-sampled from the referenced checkpoint.
pub fn verify(
    cfg: &RunConfig,
    dataset_path: Option<&Path>,
    checkpoint_path: Option<&Path>,
    samples_path: Option<&Path>,
) -> anyhow::Result<Vec<VerifyLine>> {
    let mut lines = Vec::new();
    let explicit =
        dataset_path.is_some() || checkpoint_path.is_some() || samples_path.is_some();
    let want = |p: Option<&Path>, default: PathBuf| -> Option<PathBuf> {
        match p {
            Some(p) => Some(p.to_path_buf()),
            // Default paths are verified when present; explicit ones must be.
            None if !explicit && default.exists() => Some(default),
            None => None,
        }
    };
    let dpath = want(dataset_path, cfg.paths.dataset());
    let cpath = want(checkpoint_path, cfg.paths.checkpoint());
    let spath = want(samples_path, cfg.paths.samples());
    if dpath.is_none() && cpath.is_none() && spath.is_none() {
        bail!("nothing to verify: no artifacts found or requested");
    }

    if let Some(path) = &dpath {
        lines.push(verify_dataset(path)?);
    }
    if let Some(path) = &cpath {
        lines.push(verify_checkpoint(path)?);
    }
    if let Some(path) = &spath {
        let ckpt_path = cpath.clone().unwrap_or_else(|| cfg.paths.checkpoint());
        lines.push(verify_samples(path, &ckpt_path)?);
    }
    Ok(lines)
}

fn line(artifact: &Path, ok: bool, detail: impl Into<String>) -> VerifyLine {
    VerifyLine { artifact: artifact.display().to_string(), ok, detail: detail.into() }
}

fn verify_dataset(path: &Path) -> anyhow::Result<VerifyLine> {
    let text = artifacts::read_artifact(path)?;
    let (header, _) = artifacts::parse_dataset(&text)?;
    if header.config_sha256 != header.config.sha256()? {
        return Ok(line(path, false, "embedded config does not match its hash"));
    }
    let cfg = &header.config;
    let (pairs, stats) = dataset::build_dataset(
        cfg.data.n_objects,
        cfg.data.grasps_per_object,
        &cfg.hand,
        &cfg.oracle,
        &cfg.energy,
        cfg.data.cloud_size,
        header.seed,
    )?;
    let rows: Vec<DatasetRow> = pairs
        .into_iter()
        .map(|(object, record)| DatasetRow { object, record })
        .collect();
    let regen = artifacts::render_dataset(
        &DatasetHeader { stats, ..header.clone() },
        &rows,
    )?;
    Ok(if regen == text {
        line(path, true, format!("regenerated byte-identical ({} bytes)", text.len()))
    } else {
        line(path, false, "regenerated bytes differ")
    })
}

fn verify_checkpoint(path: &Path) -> anyhow::Result<VerifyLine> {
    let text = artifacts::read_artifact(path)?;
    let ckpt = artifacts::parse_checkpoint(&text)?;
    if ckpt.config_sha256 != ckpt.config.sha256()? {
        return Ok(line(path, false, "embedded config does not match its hash"));
    }
    let probe = artifacts::probe_outputs(&ckpt.pipeline, ckpt.seed, ckpt.probe.count)?;
    let stored = serde_json::to_string(&ckpt.probe)?;
    let regen = serde_json::to_string(&probe)?;
    Ok(if stored == regen {
        line(path, true, format!("probe outputs reproduce ({} probes)", probe.count))
    } else {
        line(path, false, "probe outputs differ")
    })
}

fn verify_samples(path: &Path, ckpt_path: &Path) -> anyhow::Result<VerifyLine> {
    let text = artifacts::read_artifact(path)?;
    let (header, _) = artifacts::parse_samples(&text)?;
    if header.config_sha256 != header.config.sha256()? {
        return Ok(line(path, false, "embedded config does not match its hash"));
    }
    let (ckpt, sha) = load_checkpoint(ckpt_path)
        .with_context(|| format!("samples verification needs {}", ckpt_path.display()))?;
    if sha != header.checkpoint_sha256 {
        return Ok(line(path, false, "checkpoint on disk is not the one sampled from"));
    }
    let scenes: Vec<Scene> = header
        .scenes
        .iter()
        .map(SceneSpec::build)
        .collect::<flowgrasp_core::Result<_>>()?;
    let (rows, _) = sample_rows(
        &ckpt.pipeline,
        &scenes,
        &header.config,
        header.guided,
        header.nfe,
        false,
    )?;
    let regen = artifacts::render_samples(&header, &rows)?;
    Ok(if regen == text {
        line(path, true, format!("regenerated byte-identical ({} bytes)", text.len()))
    } else {
        line(path, false, "regenerated bytes differ")
    })
}
