//! On-disk artifact formats. Each writer renders the complete file in
//! memory so the verify command can re-derive artifacts and compare bytes
//! without touching the originals. JSON parsing uses exact float round
//! tripping, so render(parse(render(x))) is byte-identical to render(x).

use std::path::Path;

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use flowgrasp_core::dataset::{BuildStats, GraspRecord};
use flowgrasp_core::flow::VelocityField;
use flowgrasp_core::hand::HandConfig;
use flowgrasp_core::metrics::{AblationRow, EvalReport, SensitivityRow};
use flowgrasp_core::rng;
use flowgrasp_core::sampler::Pipeline;
use flowgrasp_core::scene::SceneSpec;

use crate::config::RunConfig;

pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub kind: String,
    pub version: u32,
    pub seed: u64,
    pub config_sha256: String,
    pub stats: BuildStats,
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub object: usize,
    pub record: GraspRecord,
}

fn check_kind(kind: &str, version: u32, expect: &str) -> anyhow::Result<()> {
    if kind != expect {
        bail!("expected a {expect} file, found kind {kind:?}");
    }
    if version != VERSION {
        bail!("unsupported {expect} version {version}");
    }
    Ok(())
}

/// Header line followed by one JSON row per line.
fn render_jsonl<H: Serialize, R: Serialize>(header: &H, rows: &[R]) -> anyhow::Result<String> {
    let mut out = serde_json::to_string(header)?;
    out.push('\n');
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

fn parse_jsonl<H: DeserializeOwned, R: DeserializeOwned>(
    text: &str,
    what: &str,
) -> anyhow::Result<(H, Vec<R>)> {
    let mut lines = text.lines();
    let first = lines.next().with_context(|| format!("empty {what} file"))?;
    let header: H =
        serde_json::from_str(first).with_context(|| format!("{what} header"))?;
    let rows = lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{what} row {}", i + 1))
        })
        .collect::<anyhow::Result<Vec<R>>>()?;
    Ok((header, rows))
}

pub fn render_dataset(header: &DatasetHeader, rows: &[DatasetRow]) -> anyhow::Result<String> {
    render_jsonl(header, rows)
}

pub fn parse_dataset(text: &str) -> anyhow::Result<(DatasetHeader, Vec<DatasetRow>)> {
    let (header, rows): (DatasetHeader, _) = parse_jsonl(text, "dataset")?;
    check_kind(&header.kind, header.version, "dataset")?;
    Ok((header, rows))
}

/// Deterministic probe batch: fixed-seed states, times, and descriptors with
/// the model's outputs recorded at save time. Reloading the checkpoint and
/// re-running the probe must reproduce these outputs bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeBlock {
    pub count: usize,
    pub outputs: Vec<Vec<f64>>,
}

pub fn probe_outputs(pipeline: &Pipeline, seed: u64, count: usize) -> anyhow::Result<ProbeBlock> {
    use rand::Rng;
    let mut r = rng::stream(seed, "probe", &[]);
    let state_dim = pipeline.hand.dim();
    let mut outputs = Vec::with_capacity(count);
    for _ in 0..count {
        let h: Vec<f64> = (0..state_dim).map(|_| rng::standard_normal(&mut r)).collect();
        let t: f64 = r.random_range(0.0..1.0);
        let descriptor: Vec<f64> = (0..flowgrasp_core::scene::DESCRIPTOR_DIM)
            .map(|_| rng::standard_normal(&mut r))
            .collect();
        outputs.push(pipeline.model.velocity(&h, t, &descriptor)?);
    }
    Ok(ProbeBlock { count, outputs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: String,
    pub version: u32,
    pub seed: u64,
    pub config_sha256: String,
    pub dataset_sha256: String,
    pub initial_loss: f64,
    pub loss_curve: Vec<f64>,
    pub probe: ProbeBlock,
    pub config: RunConfig,
    pub pipeline: Pipeline,
}

pub fn render_checkpoint(ckpt: &Checkpoint) -> anyhow::Result<String> {
    let mut out = serde_json::to_string_pretty(ckpt)?;
    out.push('\n');
    Ok(out)
}

pub fn parse_checkpoint(text: &str) -> anyhow::Result<Checkpoint> {
    let ckpt: Checkpoint = serde_json::from_str(text).context("checkpoint")?;
    check_kind(&ckpt.kind, ckpt.version, "checkpoint")?;
    ckpt.pipeline
        .validate()
        .context("checkpoint pipeline")?;
    Ok(ckpt)
}

/// One line per epoch: `epoch,mean_loss`. No header, so the line count is
/// exactly the epoch count.
pub fn render_loss_csv(curve: &[f64]) -> String {
    let mut out = String::new();
    for (epoch, loss) in curve.iter().enumerate() {
        out.push_str(&format!("{epoch},{loss}\n"));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplesHeader {
    pub kind: String,
    pub version: u32,
    pub seed: u64,
    pub config_sha256: String,
    pub checkpoint_sha256: String,
    pub guided: bool,
    pub nfe: usize,
    pub config: RunConfig,
    /// Benchmark scenes, embedded so evaluation needs no regeneration.
    pub scenes: Vec<SceneSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub object: usize,
    pub element: usize,
    pub failed: bool,
    pub config: Option<HandConfig>,
}

pub fn render_samples(header: &SamplesHeader, rows: &[SampleRow]) -> anyhow::Result<String> {
    render_jsonl(header, rows)
}

pub fn parse_samples(text: &str) -> anyhow::Result<(SamplesHeader, Vec<SampleRow>)> {
    let (header, rows): (SamplesHeader, _) = parse_jsonl(text, "samples")?;
    check_kind(&header.kind, header.version, "samples")?;
    Ok((header, rows))
}

/// Harness outputs share one wrapper: provenance plus typed rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportArtifact<T> {
    pub kind: String,
    pub version: u32,
    pub seed: u64,
    pub config_sha256: String,
    pub checkpoint_sha256: String,
    pub config: RunConfig,
    pub rows: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub nfe: usize,
    pub report: EvalReport,
}

pub type SweepArtifact = ReportArtifact<Vec<SweepRow>>;
pub type AblateArtifact = ReportArtifact<Vec<AblationRow>>;
pub type SensitivityArtifact = ReportArtifact<Vec<SensitivityRow>>;

pub fn render_report<T: Serialize>(artifact: &ReportArtifact<T>) -> anyhow::Result<String> {
    let mut out = serde_json::to_string_pretty(artifact)?;
    out.push('\n');
    Ok(out)
}

pub fn write_artifact(path: &Path, bytes: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_artifact(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
