use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use contact_gpis::envs::{make_scene, parse_scene, Scene};
use contact_gpis::harness::{
    export_artifacts, load_report, parse_seeds, render_svg, run_batch_in, run_episode_in,
    EpisodeConfig,
};

#[derive(Parser)]
#[command(
    name = "contact-gpis",
    version,
    about = "Learn hidden obstacles from contact while steering a peg or cable"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Built-in scene name (peg_u, peg_i, peg_t, cable_hook).
    #[arg(long, default_value = "peg_u")]
    scene: String,
    /// Scene description file; overrides the built-in geometry.
    #[arg(long)]
    scene_file: Option<PathBuf>,
    /// `key = value` config file applied before `--set`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single override, e.g. `--set T=15`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Disable a feature: refinement, local_min, vision or adaptive.
    #[arg(long)]
    ablate: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write an SVG into the output directory.
        #[arg(long)]
        svg: bool,
    },
    /// Run one episode per seed and summarize.
    Batch {
        #[command(flatten)]
        common: Common,
        /// `0..10`, `0..=9` or `1,4,7`.
        #[arg(long, default_value = "0..10")]
        seeds: String,
    },
    /// Draw a stored report.
    Render {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        svg: PathBuf,
    },
}

fn setup(common: &Common) -> Result<(EpisodeConfig, Scene)> {
    if common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(common.threads)
            .build_global()
            .ok();
    }
    let scene = match &common.scene_file {
        Some(p) => parse_scene(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => make_scene(&common.scene)?,
    };
    let mut cfg = match &common.config {
        Some(p) => EpisodeConfig::parse(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => EpisodeConfig::defaults(scene.family),
    };
    cfg.scene = scene.name.clone();
    for kv in &common.overrides {
        cfg.apply(kv)?;
    }
    for feature in &common.ablate {
        match feature.as_str() {
            "refinement" | "local_min" | "vision" | "adaptive" => cfg.set(feature, "false")?,
            other => bail!("cannot ablate `{other}`"),
        }
    }
    cfg.validate()?;
    Ok((cfg, scene))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common, seed, svg } => {
            let (mut cfg, scene) = setup(&common)?;
            cfg.seed = seed;
            let report = run_episode_in(&cfg, &scene);
            if let Some(dir) = &common.out {
                export_artifacts(&report, dir, svg)?;
            }
            if let Some(e) = &report.error {
                bail!("episode aborted after {} steps: {e}", report.steps);
            }
            println!(
                "{} seed {}: {} after {} steps ({:.1} s)",
                scene.name,
                seed,
                if report.success { "success" } else { "failure" },
                report.steps,
                report.wall_clock_s
            );
            Ok(report.success)
        }
        Command::Batch { common, seeds } => {
            let (cfg, scene) = setup(&common)?;
            let seeds = parse_seeds(&seeds)?;
            let (reports, summary) = run_batch_in(&cfg, &scene, &seeds)?;
            for e in &summary.episodes {
                let status = match (&e.error, e.success) {
                    (Some(err), _) => format!("error: {err}"),
                    (None, true) => "success".into(),
                    (None, false) => "failure".into(),
                };
                println!(
                    "seed {:>3}: {status} after {} steps ({:.1} s)",
                    e.seed, e.steps, e.wall_clock_s
                );
            }
            println!("{}", summary.line());
            if let Some(dir) = &common.out {
                for r in &reports {
                    export_artifacts(r, &dir.join(format!("seed_{}", r.config.seed)), false)?;
                }
                fs::write(
                    dir.join("summary.json"),
                    serde_json::to_string_pretty(&summary)?,
                )?;
            }
            if let Some(e) = reports.iter().find_map(|r| r.error.as_ref()) {
                bail!("at least one episode aborted: {e}");
            }
            Ok(summary.successes == summary.trials)
        }
        Command::Render { report, svg } => {
            let r = load_report(&report)?;
            fs::write(&svg, render_svg(&r)?)
                .with_context(|| format!("writing {}", svg.display()))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
