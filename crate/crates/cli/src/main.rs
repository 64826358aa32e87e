use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tempdepth_cli::config::{Overrides, RunConfig};
use tempdepth_cli::{demo, evaluate, simulate, write_output, CliError};

#[derive(Parser, Debug)]
#[command(name = "tempdepth", version, about = "Temporal depth cues for face anti-spoofing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relative-depth series for real, print, replay and rotated scenes.
    Simulate(Common),
    /// Synthetic living and print samples through the full pipeline.
    Demo(Common),
    /// APCER/BPCER/ACER and HTER for a CSV of scored samples.
    Metrics {
        /// CSV with columns score,label,attack_kind.
        records: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weight of the single-frame depth in the fusion.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the binary output in loss and score.
    #[arg(long)]
    beta: Option<f64>,
    /// Number of frames per sequence (at least 2).
    #[arg(long)]
    frames: Option<usize>,
    /// Living-score acceptance threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let overrides = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            alpha: self.alpha,
            beta: self.beta,
            frames: self.frames,
            threshold: self.threshold,
        };
        RunConfig::resolve(self.config.as_deref(), &overrides)
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = common.resolve()?;
            let results = simulate::cmd_simulate(&cfg)?;
            for r in &results {
                match r.variance {
                    Some(v) => println!("{:<8} ratio variance {v:.6e}", r.scene.name()),
                    None => println!("{:<8} degenerate (flat) at every frame", r.scene.name()),
                }
            }
            println!(
                "wrote {} and {}",
                cfg.out.join(simulate::CSV_NAME).display(),
                cfg.out.join(simulate::SVG_NAME).display()
            );
        }
        Command::Demo(common) => {
            let cfg = common.resolve()?;
            let report = demo::cmd_demo(&cfg)?;
            println!("living score {:.6}  spoof score {:.6}", report.living.score, report.spoof.score);
            println!(
                "oracle gap {:.6} (expected {:.6}, margin {:.6})",
                report.oracle.gap, report.oracle.expected_gap, report.oracle.margin
            );
            println!("wrote {}", cfg.out.join(demo::JSON_NAME).display());
        }
        Command::Metrics { records, common } => {
            let cfg = common.resolve()?;
            let report = evaluate::cmd_metrics(&records, cfg.threshold)?;
            let json = to_json(&report)?;
            println!("{json}");
            if common.out.is_some() {
                write_output(&cfg.out, evaluate::JSON_NAME, &(json + "\n"))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = if e.exit_code() == 2 { "usage error" } else { "error" };
            eprintln!("tempdepth: {kind}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
