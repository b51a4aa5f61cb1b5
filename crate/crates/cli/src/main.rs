//! Pipeline driver: dataset synthesis, velocity-field training, guided
//! sampling, evaluation harnesses, and artifact verification. Exit codes:
//! 0 ok, 1 runtime failure, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flowgrasp_cli::commands;
use flowgrasp_cli::config::RunConfig;
use flowgrasp_cli::UsageError;
use flowgrasp_core::metrics::{EvalReport, SensitivityGrid};

#[derive(Parser)]
#[command(name = "flowgrasp", version, about = "Grasp generation pipeline driver")]
struct Cli {
    /// TOML run configuration; module defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the global seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GuidedFlags {
    /// Apply energy guidance while sampling.
    #[arg(long, conflicts_with = "vanilla")]
    guided: bool,
    /// Integrate the raw velocity field (the default).
    #[arg(long)]
    vanilla: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the grasp supervision dataset.
    GenData {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides data.n_objects from the config.
        #[arg(long)]
        n_objects: Option<usize>,
    },
    /// Train the velocity field on a dataset file.
    Train {
        /// Dataset file; defaults to the configured path.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw grasps for held-out benchmark scenes from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        guided: GuidedFlags,
        /// Overrides sampler.nfe from the config.
        #[arg(long)]
        nfe: Option<usize>,
        /// Also write trajectory and guidance diagnostic CSVs.
        #[arg(long)]
        trace: bool,
    },
    /// Recompute the evaluation report for a samples file.
    Eval {
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare sample quality across integrator budgets.
    SweepNfe {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Budgets to sweep, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "10,20,50,100")]
        nfe: Vec<usize>,
        #[command(flatten)]
        guided: GuidedFlags,
    },
    /// Compare the six standard guidance-term variants.
    Ablate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vary guidance hyperparameters one at a time.
    Sensitivity {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Guidance scales to test, comma separated.
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f64>>,
        /// Temperatures to test, comma separated.
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
        /// Per-term weights to test, comma separated.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
    },
    /// Re-derive artifacts from their embedded provenance and diff bytes.
    Verify {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
    },
}

fn print_report(report: &EvalReport) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    Ok(())
}

fn report_cells(report: &EvalReport) -> String {
    format!(
        "{:>7.3} {:>10.4} {:>9.4} {:>9.4} {:>6}",
        report.success_rate,
        report.mean_penetration,
        report.max_penetration,
        report.diversity,
        report.n_failed
    )
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::GenData { out, n_objects } => {
            let outcome = commands::gen_data(&cfg, out.as_deref(), n_objects)?;
            let s = &outcome.stats;
            println!(
                "objects: {} attempted, {} with grasps; records: {}",
                s.objects, s.objects_with_grasps, s.records
            );
            println!(
                "restarts: {} run, {} accepted ({:.1}% yield)",
                s.restarts.run,
                s.restarts.accepted,
                100.0 * s.restarts.accepted as f64 / s.restarts.run.max(1) as f64
            );
            println!("wrote {}", outcome.path.display());
        }
        Command::Train { data, out } => {
            let outcome = commands::train(&cfg, data.as_deref(), out.as_deref())?;
            let last = outcome.loss_curve.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained on {} grasps for {} epochs: loss {:.6} -> {last:.6}",
                outcome.records,
                outcome.loss_curve.len(),
                outcome.initial_loss
            );
            println!("wrote {}", outcome.checkpoint_path.display());
            println!("wrote {}", outcome.loss_path.display());
        }
        Command::Sample { checkpoint, out, guided, nfe, trace } => {
            let outcome = commands::sample(
                &cfg,
                checkpoint.as_deref(),
                out.as_deref(),
                guided.guided,
                nfe,
                trace,
            )?;
            print_report(&outcome.report)?;
            println!("wrote {}", outcome.path.display());
            for p in &outcome.trace_paths {
                println!("wrote {}", p.display());
            }
        }
        Command::Eval { samples, out } => {
            let report = commands::eval(&cfg, samples.as_deref())?;
            print_report(&report)?;
            if let Some(out) = out {
                flowgrasp_cli::artifacts::write_artifact(
                    &out,
                    &format!("{}\n", serde_json::to_string_pretty(&report)?),
                )?;
                println!("wrote {}", out.display());
            }
        }
        Command::SweepNfe { checkpoint, out, nfe, guided } => {
            let artifact = commands::sweep_nfe(
                &cfg,
                checkpoint.as_deref(),
                out.as_deref(),
                &nfe,
                guided.guided,
            )?;
            println!("{:>5} {:>7} {:>10} {:>9} {:>9} {:>6}", "nfe", "succ", "mean_pen", "max_pen", "divers", "failed");
            for row in &artifact.rows {
                println!("{:>5} {}", row.nfe, report_cells(&row.report));
            }
        }
        Command::Ablate { checkpoint, out } => {
            let artifact = commands::ablate(&cfg, checkpoint.as_deref(), out.as_deref())?;
            println!("{:>14} {:>7} {:>10} {:>9} {:>9} {:>6}", "variant", "succ", "mean_pen", "max_pen", "divers", "failed");
            for row in &artifact.rows {
                println!("{:>14} {}", row.label, report_cells(&row.report));
            }
        }
        Command::Sensitivity { checkpoint, out, scales, taus, weights } => {
            let mut grid = SensitivityGrid::default();
            if let Some(s) = scales {
                grid.scales = s;
            }
            if let Some(t) = taus {
                grid.taus = t;
            }
            if let Some(w) = weights {
                grid.weights = w;
            }
            let artifact =
                commands::sensitivity(&cfg, checkpoint.as_deref(), out.as_deref(), &grid)?;
            println!("{:>7} {:>8} {:>7} {:>10} {:>9} {:>9} {:>6}", "param", "value", "succ", "mean_pen", "max_pen", "divers", "failed");
            for row in &artifact.rows {
                println!("{:>7} {:>8} {}", row.param, row.value, report_cells(&row.report));
            }
        }
        Command::Verify { dataset, checkpoint, samples } => {
            let lines = commands::verify(
                &cfg,
                dataset.as_deref(),
                checkpoint.as_deref(),
                samples.as_deref(),
            )?;
            let mut failures = 0;
            for l in &lines {
                println!(
                    "{} {}: {}",
                    if l.ok { "ok     " } else { "MISMATCH" },
                    l.artifact,
                    l.detail
                );
                failures += usize::from(!l.ok);
            }
            if failures > 0 {
                anyhow::bail!("{failures} artifact(s) failed verification");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
