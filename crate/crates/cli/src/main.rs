use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use changeseg::pipeline::{self, synth, Config, PipelineError};

/// Discover objects by comparing two sets of posed RGBD frames.
#[derive(Parser, Debug)]
#[command(name = "changeseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment what changed in the current set with respect to the background set.
    Segment {
        /// Manifest of the current set.
        #[arg(long)]
        scene_a: PathBuf,
        /// Manifest of the background set.
        #[arg(long)]
        scene_b: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// TOML configuration overriding the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Person detections for the current set; overrides the manifest entry.
        #[arg(long)]
        persons: Option<PathBuf>,
        /// Also write intermediate maps under `<out>/debug`.
        #[arg(long)]
        debug_maps: bool,
        /// Accept every segment.
        #[arg(long)]
        no_filter: bool,
    },
    /// Render a synthetic scene description into two manifests with images.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Segment {
            scene_a,
            scene_b,
            out,
            config,
            persons,
            debug_maps,
            no_filter,
        } => {
            let mut cfg = match &config {
                Some(p) => Config::load(p)?,
                None => Config::default(),
            };
            if no_filter {
                cfg.filtering.enabled = false;
            }
            let a = pipeline::load_scene(&scene_a, &cfg.normals)?;
            let b = pipeline::load_scene(&scene_b, &cfg.normals)?;
            let boxes = match &persons {
                Some(p) => pipeline::load_person_boxes(p, &a.frame_sizes())?,
                None => a.persons.clone(),
            };
            let result = pipeline::segment(&a.frames, &b.frames, &boxes, &cfg)?;
            pipeline::write_result(&out, &a.frames, &result, cfg.output.point_cloud, debug_maps)?;
            println!(
                "{} segments, {} accepted; results in {}",
                result.records.len(),
                result.accepted().count(),
                out.display()
            );
            Ok(())
        }
        Command::Synth { spec, out } => {
            let s = synth::SynthSpec::load(&spec)?;
            let scene = synth::render(&s)?;
            let written = synth::write_scene(&scene, &out)?;
            println!(
                "wrote {} and {}",
                written.scene_a.display(),
                written.scene_b.display()
            );
            Ok(())
        }
    }
}
