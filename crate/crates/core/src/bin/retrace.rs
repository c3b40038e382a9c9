//! Command-line driver: `generate`, `run`, `ablate`, `export-embeddings`,
//! `validate`. One TOML config file feeds every subcommand; the swept
//! knobs are overridable per invocation.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use retrace::eval::{
    cmd_ablate, cmd_export_embeddings, cmd_generate, cmd_run, cmd_validate, Config, PolicyKind,
    PolicyPreset,
};

#[derive(Parser)]
#[command(
    name = "retrace",
    about = "Index expert demonstrations in a latent space and control by replaying \
             the nearest situation's actions."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// TOML config file; omitted fields fall back to built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset file path override.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct PolicyArgs {
    /// Policy to evaluate.
    #[arg(long, value_enum)]
    policy: Option<PolicyKind>,
    /// Named hyperparameter preset, applied before the knob overrides.
    #[arg(long, value_enum)]
    preset: Option<PolicyPreset>,
    /// Consecutive steps on one reference before a forced re-search.
    #[arg(long)]
    max_steps: Option<u64>,
    /// Divergence scaling factor.
    #[arg(long)]
    divergence_factor: Option<f64>,
    /// Floor for the zero-distance divergence baseline.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert demonstrations, encode them, and write the dataset.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of demonstrations.
        #[arg(long)]
        demos: Option<u32>,
    },
    /// Evaluate a policy over the seed batch and report success rates.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Comma-separated evaluation seeds.
        #[arg(long, value_delimiter = ',')]
        seed_list: Option<Vec<u64>>,
        /// Runs per seed.
        #[arg(long)]
        runs: Option<u32>,
        /// Steps per episode.
        #[arg(long)]
        episode_steps: Option<u64>,
        /// Consecutive in-goal steps required for success.
        #[arg(long)]
        success_consecutive: Option<u64>,
        /// Write the report JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write per-episode JSONL logs into this directory.
        #[arg(long)]
        logs_dir: Option<PathBuf>,
    },
    /// Sweep max_steps and divergence_factor (nine values each).
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// Fixed seed the sweep derives its episode seeds from.
        #[arg(long)]
        fixed_seed: Option<u64>,
        /// Write the sweep report JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Export leading trajectories as labeled embedding CSV rows.
    ExportEmbeddings {
        #[command(flatten)]
        common: CommonArgs,
        /// How many trajectories to export.
        #[arg(long)]
        count: Option<u32>,
        /// Output CSV path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Read a dataset file and report every invariant violation.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn load_config(common: &CommonArgs) -> Result<Config> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(path) = &common.dataset {
        config.dataset.path = path.clone();
    }
    Ok(config)
}

fn apply_policy_args(config: &mut Config, args: &PolicyArgs) {
    if let Some(kind) = args.policy {
        config.policy.kind = kind;
    }
    if let Some(preset) = args.preset {
        config.apply_preset(preset);
    }
    if let Some(n) = args.max_steps {
        config.policy.max_steps = n;
    }
    if let Some(f) = args.divergence_factor {
        config.policy.divergence_factor = f;
    }
    if let Some(e) = args.epsilon {
        config.policy.epsilon = e;
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, demos } => {
            let mut config = load_config(&common)?;
            if let Some(demos) = demos {
                config.dataset.demos = demos;
            }
            let summary = cmd_generate(&config).context("generate failed")?;
            println!(
                "wrote {} ({} demos, {} frames, {} bytes)",
                summary.path.display(),
                summary.demos,
                summary.frames,
                summary.bytes
            );
            println!(
                "encode time: {:.3}s, index build time: {:.3}s",
                summary.encode_secs, summary.index_build_secs
            );
        }
        Command::Run {
            common,
            policy,
            seed_list,
            runs,
            episode_steps,
            success_consecutive,
            report,
            logs_dir,
        } => {
            let mut config = load_config(&common)?;
            apply_policy_args(&mut config, &policy);
            if let Some(seeds) = seed_list {
                config.run.seeds = seeds;
            }
            if let Some(runs) = runs {
                config.run.runs_per_seed = runs;
            }
            if let Some(steps) = episode_steps {
                config.run.max_episode_steps = steps;
            }
            if let Some(k) = success_consecutive {
                config.run.success_consecutive = k;
            }
            if let Some(path) = report {
                config.run.report = Some(path);
            }
            if let Some(dir) = logs_dir {
                config.run.logs_dir = Some(dir);
            }
            let report = cmd_run(&config).context("run failed")?;
            print!("{}", report.render_table());
            println!(
                "index build time  : {:.3}s, episodes: {:.3}s",
                report.index_build_secs, report.episodes_secs
            );
            if let Some(path) = &config.run.report {
                println!("report written to {}", path.display());
            }
        }
        Command::Ablate { common, fixed_seed, report } => {
            let mut config = load_config(&common)?;
            if let Some(seed) = fixed_seed {
                config.ablation.fixed_seed = seed;
            }
            if let Some(path) = report {
                config.ablation.report = Some(path);
            }
            let report = cmd_ablate(&config).context("ablate failed")?;
            print!("{}", report.render_table());
            if let Some(path) = &config.ablation.report {
                println!("report written to {}", path.display());
            }
        }
        Command::ExportEmbeddings { common, count, output } => {
            let mut config = load_config(&common)?;
            if let Some(path) = output {
                config.export.output = path;
            }
            let count = count.unwrap_or(config.export.count);
            let summary =
                cmd_export_embeddings(&config, count).context("export-embeddings failed")?;
            println!(
                "wrote {} ({} trajectories, {} rows)",
                summary.output.display(),
                summary.trajectories,
                summary.rows
            );
        }
        Command::Validate { common } => {
            let config = load_config(&common)?;
            let (file, violations) = cmd_validate(&config.dataset.path)
                .with_context(|| format!("validate {} failed", config.dataset.path.display()))?;
            println!(
                "{}: d={} A={} trajectories={} frames={} projection_seed={:#x}",
                config.dataset.path.display(),
                file.dataset.dimension,
                file.dataset.action_alphabet_size,
                file.dataset.trajectories.len(),
                file.dataset.frame_count(),
                file.projection_seed
            );
            if violations.is_empty() {
                println!("dataset is valid");
            } else {
                for v in &violations {
                    eprintln!("violation: {v}");
                }
                anyhow::bail!("{} violation(s) found", violations.len());
            }
        }
    }
    Ok(())
}
