//! `cascade` — two-stage CNN detection pipeline over SCNR rasters.
//!
//! Every subcommand takes a JSON run config; stages communicate through
//! files under the configured directories, so each one can be run, skipped,
//! or inspected independently. Exit codes: 0 success, 1 stage failure,
//! 2 unusable configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cascade_core::pipeline::{run_pipeline, stages, RunConfig, Stage};
use cascade_core::raster::{write_polygons, write_scene};
use cascade_core::synth;
use cascade_core::Error;

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (formats: SCNR 1, CNNC 1)"
);

#[derive(Parser)]
#[command(name = "cascade", version = VERSION, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (scenes + ground-truth polygons).
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Write into this directory instead of the configured scene and
        /// polygon paths.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of scenes; defaults to the total split size.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Compute tile label dumps for every configured scene.
    Label {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the high-recall network, snapshotting periodically.
    TrainHrn {
        #[arg(long)]
        config: PathBuf,
    },
    /// Select the snapshot with the best validation recall above the
    /// precision floor.
    Select {
        #[arg(long)]
        config: PathBuf,
    },
    /// Mine hard negatives from first-stage false positives.
    Mine {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the high-precision crop classifier.
    TrainHpn {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run detection; with --scene, a single scene, otherwise all test
    /// scenes.
    Detect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scene: Option<String>,
    },
    /// Match detections against ground truth and write the metrics report.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every stage in order, skipping stages whose outputs exist.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Re-run stages even when their outputs exist.
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let (stage_name, result) = run(cli.command);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("cascade: {stage_name}: {err}");
            match err {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(command: Command) -> (&'static str, Result<(), Error>) {
    match command {
        Command::Synth { config, out, count } => ("synth", synth_cmd(&config, out, count)),
        Command::Label { config } => ("label", stage_cmd(&config, Stage::Label)),
        Command::TrainHrn { config } => ("train-hrn", stage_cmd(&config, Stage::TrainHrn)),
        Command::Select { config } => ("select", stage_cmd(&config, Stage::Select)),
        Command::Mine { config } => ("mine", stage_cmd(&config, Stage::Mine)),
        Command::TrainHpn { config } => ("train-hpn", stage_cmd(&config, Stage::TrainHpn)),
        Command::Detect { config, scene } => ("detect", detect_cmd(&config, scene)),
        Command::Evaluate { config } => ("evaluate", stage_cmd(&config, Stage::Evaluate)),
        Command::Pipeline { config, force } => ("pipeline", pipeline_cmd(&config, force)),
    }
}

fn stage_cmd(config: &PathBuf, stage: Stage) -> Result<(), Error> {
    let cfg = RunConfig::load(config)?;
    stage.run(&cfg)
}

fn synth_cmd(
    config: &PathBuf,
    out: Option<PathBuf>,
    count: Option<usize>,
) -> Result<(), Error> {
    let cfg = RunConfig::load(config)?;
    match (out, count) {
        (None, None) => Stage::Synth.run(&cfg),
        (out, count) => {
            // explicit generation outside the stage protocol
            let n = count.unwrap_or_else(|| cfg.splits.all_ids().len());
            let base = out.unwrap_or_else(|| cfg.paths.out.clone());
            let scenes_dir = base.join("scenes");
            let polys_dir = base.join("polygons");
            std::fs::create_dir_all(&scenes_dir).map_err(|e| Error::io(&scenes_dir, e))?;
            std::fs::create_dir_all(&polys_dir).map_err(|e| Error::io(&polys_dir, e))?;
            for s in synth::generate(&cfg.synth_effective(), n)? {
                let id = &s.scene.scene_id;
                write_scene(&s.scene, &scenes_dir.join(format!("{id}.scnr")))?;
                write_polygons(&s.polygons, &polys_dir.join(format!("{id}.json")))?;
            }
            log::info!("generated {n} scenes under {}", base.display());
            Ok(())
        }
    }
}

fn detect_cmd(config: &PathBuf, scene: Option<String>) -> Result<(), Error> {
    let cfg = RunConfig::load(config)?;
    match scene {
        Some(id) => stages::run_detect_scene(&cfg, &id),
        None => Stage::Detect.run(&cfg),
    }
}

fn pipeline_cmd(config: &PathBuf, force: bool) -> Result<(), Error> {
    let cfg = RunConfig::load(config)?;
    let ran = run_pipeline(&cfg, force)?;
    if ran.is_empty() {
        log::info!("all stages up to date; nothing to do");
    } else {
        log::info!("ran stages: {}", ran.join(", "));
    }
    Ok(())
}
