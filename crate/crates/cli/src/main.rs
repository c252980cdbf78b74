use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use annealnet::config::{parse_ini, ExperimentConfig, IniDocument};
use annealnet::harness::{
    self, default_output_dir, exit_code, gibbs_table, report, run_experiment, sweep,
    validate_experiment, write_gibbs_csv, GibbsRequest, SweepAxis,
};
use annealnet::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "annealnet",
    version,
    about = "Annealed distributed optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment file (INI).
    config: PathBuf,
    /// Override a value, e.g. `--set run.steps=1000`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the assumption checks for a config.
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run all replicas of a config and write outputs.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory (default: [output] dir, else $ANNEALNET_OUT/<config name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Cartesian product of parameter axes.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Axis `section.key=v1,v2,...`. Repeatable.
        #[arg(long = "grid", value_name = "SECTION.KEY=V1,V2", required = true)]
        axes: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate Gibbs expectations and their small-temperature limit.
    Gibbs {
        /// Objective descriptor, e.g. `cosine_well:a=1,b=1,d=1`.
        #[arg(long)]
        objective: String,
        /// Comma-separated temperatures.
        #[arg(long, value_delimiter = ',', required = true)]
        epsilons: Vec<f64>,
        /// Test functions separated by `;`.
        #[arg(long, default_value = "one;bump")]
        functions: String,
        #[arg(long, allow_hyphen_values = true)]
        lo: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        hi: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Output CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute aggregates from the runs stored in an output directory.
    Report { dir: PathBuf },
}

fn load(args: &ConfigArgs) -> Result<(IniDocument, ExperimentConfig)> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Io(format!("{}: {e}", args.config.display())))?;
    let mut doc = parse_ini(&text)?;
    for o in &args.overrides {
        doc.apply_override(o)?;
    }
    let cfg = ExperimentConfig::from_ini(&doc)?;
    Ok((doc, cfg))
}

fn config_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cmd {
        Command::Validate { cfg, json } => {
            let (_, exp) = load(&cfg)?;
            let rep = validate_experiment(&exp);
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&rep)?)?;
            } else {
                write!(out, "{}", rep.to_table())?;
            }
            Ok(rep.exit_code())
        }
        Command::Run { cfg, out: dir } => {
            let (_, exp) = load(&cfg)?;
            let dir = dir.unwrap_or_else(|| default_output_dir(&exp, &config_name(&cfg.config)));
            let o = run_experiment(&exp, &dir)?;
            let s = &o.summary;
            writeln!(out, "config_hash {}", s.config_hash)?;
            writeln!(out, "runs {} (diverged {})", s.n_runs, s.diverged_runs)?;
            writeln!(
                out,
                "success_rate {:.4} +/- {:.4}",
                s.success_rate, s.success_stderr
            )?;
            if let Some(slope) = s.consensus_slope {
                writeln!(out, "consensus_decay_slope {slope:.4}")?;
            }
            writeln!(out, "outputs {}", o.out_dir.display())?;
            Ok(harness::EXIT_OK)
        }
        Command::Sweep {
            cfg,
            axes,
            out: dir,
        } => {
            let (doc, exp) = load(&cfg)?;
            let axes = axes
                .iter()
                .map(|a| SweepAxis::parse(a))
                .collect::<Result<Vec<_>>>()?;
            let dir = dir.unwrap_or_else(|| {
                default_output_dir(&exp, &format!("{}-sweep", config_name(&cfg.config)))
            });
            let cells = sweep(&doc, &axes, &dir)?;
            for c in &cells {
                writeln!(
                    out,
                    "cell {:04} [{}] {} success_rate={}",
                    c.index,
                    c.values.join(", "),
                    c.status,
                    c.success_rate
                        .map(|v| format!("{v:.4}"))
                        .unwrap_or_else(|| "-".into())
                )?;
            }
            writeln!(out, "table {}", dir.join("sweep.csv").display())?;
            Ok(harness::EXIT_OK)
        }
        Command::Gibbs {
            objective,
            epsilons,
            functions,
            lo,
            hi,
            points,
            out: path,
        } => {
            let bounds = match (lo, hi) {
                (Some(l), Some(h)) => Some((l, h)),
                (None, None) => None,
                _ => {
                    return Err(Error::InvalidArgument(
                        "--lo and --hi must be given together".into(),
                    ))
                }
            };
            let req = GibbsRequest {
                objective,
                epsilons,
                functions: functions
                    .split(';')
                    .map(|f| f.trim().to_string())
                    .filter(|f| !f.is_empty())
                    .collect(),
                bounds,
                n_points: points,
            };
            let rows = gibbs_table(&req)?;
            match path {
                Some(p) => write_gibbs_csv(fs::File::create(p)?, &req.hash(), &rows)?,
                None => write_gibbs_csv(&mut out, &req.hash(), &rows)?,
            }
            Ok(harness::EXIT_OK)
        }
        Command::Report { dir } => {
            let s = report(&dir)?;
            writeln!(out, "config_hash {}", s.config_hash)?;
            writeln!(out, "runs {} (diverged {})", s.n_runs, s.diverged_runs)?;
            writeln!(
                out,
                "success_rate {:.4} +/- {:.4}",
                s.success_rate, s.success_stderr
            )?;
            for w in &s.weak_convergence {
                writeln!(
                    out,
                    "t={} {}: {:.6} +/- {:.6} (limit {:.6}, gap {:.6})",
                    w.t, w.function, w.estimate, w.stderr, w.target, w.gap
                )?;
            }
            Ok(harness::EXIT_OK)
        }
    }
}
