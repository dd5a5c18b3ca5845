use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use dampc::closed_loop::{run_closed_loop, ClosedLoopTrace, Controller, FailureKind};
use dampc::compare::{compare, controllers};
use dampc::config::{self, ConfigError, Experiment, Offline};
use dampc::output::{self, OfflineArtifact, OutputError};
use dampc::plot::plot_dir;

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(name = "dampc", version, about = "Adaptive tube MPC with active exploration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Pampc,
    Dampc,
}

#[derive(Subcommand)]
enum Command {
    /// Check the gain, compute the terminal scaling and tightening offsets.
    Offline {
        #[arg(long)]
        config: PathBuf,
        /// Directory for offline.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One closed-loop run.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        controller: Kind,
        /// Predicted-tube length for the dual controller.
        #[arg(long, default_value_t = 2)]
        nhat: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Reuse a previously written offline.json.
        #[arg(long)]
        offline: Option<PathBuf>,
    },
    /// Every configured controller on every seed.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Inclusive range `A..B` or a comma list; defaults to the config's seeds.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        offline: Option<PathBuf>,
    },
    /// Render SVGs from a run directory.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

enum Failure {
    Config(ConfigError),
    Output(OutputError),
    Usage(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<OutputError> for Failure {
    fn from(e: OutputError) -> Self {
        Failure::Output(e)
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("cannot parse seeds {s:?}; expected A..B or a comma list");
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

fn offline_for(exp: &Experiment, artifact: Option<&Path>) -> Result<Offline, Failure> {
    match artifact {
        None => Ok(exp.offline()?),
        Some(p) => {
            let a = output::read_offline(p)?;
            if a.horizon != exp.horizon() {
                return Err(Failure::Usage(format!(
                    "offline artifact was computed for horizon {}, config has {}",
                    a.horizon,
                    exp.horizon()
                )));
            }
            Ok(exp.offline_with_alpha(a.alpha_bar)?)
        }
    }
}

fn exit_for(traces: &[ClosedLoopTrace]) -> u8 {
    let mut code = 0;
    for f in traces.iter().filter_map(|t| t.failure.as_ref()) {
        code = code.max(match f.kind {
            FailureKind::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_INFEASIBLE,
        });
    }
    code
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Offline { config, out } => {
            let exp = config::load(&config)?;
            let started = Instant::now();
            let off = exp.offline()?;
            let art = OfflineArtifact::new(&off, started.elapsed().as_secs_f64());
            println!("terminal scaling  {:.9}", art.alpha_bar);
            println!("f_bar             {}", fmt_vec(&art.f_bar));
            println!("w_bar             {}", fmt_vec(&art.w_bar));
            println!(
                "gain check        passed, spectral radius {:.6} at {} ({} vertices, {} samples)",
                art.gain.max_radius,
                fmt_vec(&art.gain.worst_theta),
                art.gain.vertices_checked,
                art.gain.samples_checked
            );
            println!("elapsed           {:.3} s", art.seconds);
            if let Some(dir) = out {
                output::ensure_dir(&dir)?;
                output::write_json(&dir.join(output::OFFLINE), &art)?;
            }
            Ok(0)
        }
        Command::Simulate { config, controller, nhat, seed, out, offline } => {
            let exp = config::load(&config)?;
            let controller = match controller {
                Kind::Pampc => Controller::Passive,
                Kind::Dampc => {
                    if nhat > exp.horizon() {
                        return Err(Failure::Usage(format!("--nhat {nhat} exceeds the horizon {}", exp.horizon())));
                    }
                    Controller::Dual { n_hat: nhat }
                }
            };
            let off = offline_for(&exp, offline.as_deref())?;
            let trace = run_closed_loop(&exp, &off, controller, seed);
            output::write_run_outputs(&out, &exp, std::slice::from_ref(&trace))?;
            output::write_json(&out.join(output::OFFLINE), &OfflineArtifact::new(&off, 0.0))?;
            match &trace.failure {
                None => println!("{controller} seed {seed}: cost {:.6} over {} steps", trace.cost(), trace.steps.len()),
                Some(f) => eprintln!("{controller} seed {seed}: {f}"),
            }
            Ok(exit_for(std::slice::from_ref(&trace)))
        }
        Command::Compare { config, seeds, out, offline } => {
            let exp = config::load(&config)?;
            let seeds = match seeds {
                Some(s) => parse_seeds(&s).map_err(Failure::Usage)?,
                None => exp.seeds.clone(),
            };
            let off = offline_for(&exp, offline.as_deref())?;
            let mut traces = Vec::new();
            let report = compare(&exp, &off, &seeds, |t| {
                match &t.failure {
                    None => eprintln!("{} seed {}: cost {:.6}", t.controller, t.seed, t.cost()),
                    Some(f) => eprintln!("{} seed {}: {f}", t.controller, t.seed),
                }
                traces.push(t.clone());
            });
            output::write_run_outputs(&out, &exp, &traces)?;
            output::write_summary(&out, &report)?;
            output::write_json(&out.join(output::OFFLINE), &OfflineArtifact::new(&off, 0.0))?;
            println!("{:<10} {:>5} {:>10} {:>10} {:>10}", "controller", "done", "mean", "median", "reduction");
            for c in controllers(&exp) {
                let Some(s) = report.stats_for(c) else { continue };
                let red = s.reduction_percent.map_or("-".to_string(), |r| format!("{r:.1}%"));
                println!("{:<10} {:>5} {:>10.4} {:>10.4} {:>10}", c.label(), s.completed, s.mean, s.median, red);
            }
            Ok(exit_for(&traces))
        }
        Command::Plot { input } => {
            let res = plot_dir(&input)?;
            for p in &res.written {
                println!("wrote {}", p.display());
            }
            for s in &res.skipped {
                println!("skipped {s}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Output(OutputError::Config(e))) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Output(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
