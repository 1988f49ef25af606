use clap::{Parser, Subcommand};
use langslam::eval::{
    emit_trajectory_svg, metrics_from_logs, plot_data_from_log, run_suite, write_report, FullConfig, PlotData,
    SuiteError, Thresholds,
};
use langslam::instruction::{decompose_remote, load_ir, parse_constrained, DecomposerClient};
use langslam::sim::{generate_episode_suite, write_suite, Episode, GeneratorConfig, Scene};
use std::path::PathBuf;
use std::process::ExitCode;

const CONFIG_ERROR: u8 = 2;
const SUITE_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "langslam", version, about = "Language-grounded landmark SLAM for instruction following")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic episode suite.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Generator config JSON; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Add an off-route duplicate "door" to every episode.
        #[arg(long)]
        duplicate_door: bool,
    },
    /// Run a suite and write logs, CSVs and a summary.
    Run {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recompute metrics from the step logs of a finished run.
    Metrics {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        run_dir: PathBuf,
        /// Config whose thresholds apply (defaults otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the recomputed CSVs (default: the run directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Draw an episode with an optional step log as SVG.
    Plot {
        #[arg(long)]
        episode: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the IR of an instruction.
    Parse {
        #[arg(long, conflicts_with = "ir", required_unless_present = "ir")]
        text: Option<String>,
        /// Validate an IR file instead.
        #[arg(long)]
        ir: Option<PathBuf>,
        /// Use the remote decomposer from this config instead of the grammar.
        #[arg(long)]
        remote: Option<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<FullConfig, ExitCode> {
    match path {
        Some(p) => FullConfig::load(p).map_err(|e| {
            eprintln!("error: {e}");
            ExitCode::from(CONFIG_ERROR)
        }),
        None => Ok(FullConfig::default()),
    }
}

fn suite_exit(e: SuiteError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        SuiteError::Config(_) => ExitCode::from(CONFIG_ERROR),
        _ => ExitCode::from(SUITE_ERROR),
    }
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::FAILURE
}

fn run(cli: Cli) -> Result<(), ExitCode> {
    match cli.command {
        Command::Generate {
            seed,
            episodes,
            out,
            config,
            duplicate_door,
        } => {
            let mut cfg: GeneratorConfig = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| {
                        eprintln!("error: {}: {e}", p.display());
                        ExitCode::from(CONFIG_ERROR)
                    })?;
                    serde_json::from_str(&text).map_err(|e| {
                        eprintln!("error: {}: {e}", p.display());
                        ExitCode::from(CONFIG_ERROR)
                    })?
                }
                None => GeneratorConfig::default(),
            };
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            cfg.duplicate_door |= duplicate_door;
            let suite = generate_episode_suite(&cfg, seed).map_err(fail)?;
            write_suite(&suite, &out).map_err(fail)?;
            println!("wrote {} episodes to {}", suite.episodes.len(), out.display());
        }
        Command::Run {
            suite,
            config,
            parallelism,
            out_dir,
            seed,
        } => {
            let cfg = load_config(config.as_ref())?;
            let report = run_suite(&suite, &cfg, parallelism, Some(&out_dir), seed).map_err(suite_exit)?;
            let s = &report.summary;
            println!(
                "episodes {} errors {} | SR {:.3} SPL {:.3} OSR {:.3} nDTW {:.3} | d_success {} m",
                s.episodes, s.errors, s.sr, s.spl, s.osr, s.ndtw, s.thresholds.d_success
            );
            for e in &report.errors {
                eprintln!("episode {}: {}", e.episode, e.message);
            }
            if !report.errors.is_empty() {
                return Err(ExitCode::from(SUITE_ERROR));
            }
        }
        Command::Metrics {
            suite,
            run_dir,
            config,
            seed,
            out_dir,
        } => {
            let thresholds = match config {
                Some(p) => load_config(Some(&p))?.thresholds,
                None => Thresholds::default(),
            };
            let report = metrics_from_logs(&suite, &run_dir, &thresholds, seed).map_err(suite_exit)?;
            write_report(out_dir.as_ref().unwrap_or(&run_dir), &report).map_err(suite_exit)?;
            let s = &report.summary;
            println!(
                "episodes {} errors {} | SR {:.3} SPL {:.3} OSR {:.3} nDTW {:.3}",
                s.episodes, s.errors, s.sr, s.spl, s.osr, s.ndtw
            );
            if !report.errors.is_empty() {
                return Err(ExitCode::from(SUITE_ERROR));
            }
        }
        Command::Plot { episode, log, out } => {
            let ep = Episode::load(&episode).map_err(fail)?;
            let scene = Scene::load(&ep.scene_path(&episode)).map_err(fail)?;
            let data = match log {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| fail(format!("{}: {e}", p.display())))?;
                    plot_data_from_log(&text).map_err(fail)?
                }
                None => PlotData::default(),
            };
            std::fs::write(&out, emit_trajectory_svg(&scene, &ep, &data)).map_err(fail)?;
        }
        Command::Parse { text, ir, remote } => {
            let ir = match (text, ir) {
                (_, Some(path)) => load_ir(&path).map_err(fail)?,
                (Some(text), None) => match remote {
                    Some(p) => {
                        let cfg = load_config(Some(&p))?;
                        let dc = cfg.decomposer.ok_or_else(|| {
                            eprintln!("error: config has no decomposer section");
                            ExitCode::from(CONFIG_ERROR)
                        })?;
                        let client = DecomposerClient::new(dc).map_err(|e| {
                            eprintln!("error: {e}");
                            ExitCode::from(CONFIG_ERROR)
                        })?;
                        decompose_remote(&text, &client).map_err(fail)?
                    }
                    None => parse_constrained(&text).map_err(fail)?,
                },
                (None, None) => unreachable!("clap requires --text or --ir"),
            };
            println!("{}", ir.to_json_pretty());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
