use clap::{Parser, Subcommand};
use conelab::artifacts::{load_config, read_json};
use conelab::manifest::RunManifest;
use conelab::run::{cmd_limit, cmd_resume, cmd_run, RunOptions, RunOutcome};
use conelab::summary::{write_summary, RunSummary, SUMMARY_FILE};
use conelab::sweep::{cmd_sweep, load_sweep, COMPARISON_FILE};
use conelab::verify::{format_table, integrity_notes, verify_run};
use conelab::{CliError, CliResult};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "conelab",
    version,
    about = "Numerical laboratory for the conical Kahler-Ricci flow on ruled surfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full epsilon ladder, the studies, the oracles and the summary.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Continue the run stored in this directory instead of starting a new one.
        #[arg(long)]
        resume_from: Option<PathBuf>,
        /// Stop every rung at its first checkpoint at or after this time.
        #[arg(long, hide = true)]
        stop_after: Option<f64>,
    },
    /// Solve the limit equation over the epsilon ladder and report the trace identity residuals.
    Limit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate every acceptance criterion against a completed run directory.
    Verify { dir: PathBuf },
    /// Run several configurations and merge them into one comparison table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Continue an interrupted run from its checkpoints.
    Resume {
        #[arg(long)]
        resume_from: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, hide = true)]
        stop_after: Option<f64>,
    },
    /// Rebuild the summary and plots of a completed run and print its verdicts.
    Report { dir: PathBuf },
}

fn finish_run(outcome: RunOutcome, dir: &std::path::Path) -> CliResult<()> {
    match outcome {
        RunOutcome::Completed => {
            println!("run completed in {}", dir.display());
            Ok(())
        }
        RunOutcome::Interrupted => {
            println!("run interrupted; continue with `conelab resume --resume-from {}`", dir.display());
            Ok(())
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run { config, out, workers, resume_from, stop_after } => {
            let opts = RunOptions { workers, stop_after };
            match (resume_from, config, out) {
                (Some(dir), None, None) => finish_run(cmd_resume(&dir, &opts)?, &dir),
                (Some(_), _, _) => Err(CliError::Validation(
                    "--resume-from takes the configuration from the run directory; drop --config and --out".into(),
                )),
                (None, Some(config), Some(out)) => {
                    let config = load_config(&config)?;
                    finish_run(cmd_run(&config, &out, &opts)?, &out)
                }
                (None, _, _) => Err(CliError::Validation("run needs --config and --out (or --resume-from)".into())),
            }
        }
        Command::Limit { config, out } => {
            let config = load_config(&config)?;
            let report = cmd_limit(&config, &out)?;
            println!("{:>10} {:>14}", "eps", "cauchy diff");
            for (k, eps) in report.eps.iter().enumerate() {
                let diff = if k == 0 { String::from("-") } else { format!("{:.3e}", report.differences[k - 1]) };
                println!("{eps:>10} {diff:>14}");
            }
            println!("monotone: {}", report.monotone);
            Ok(())
        }
        Command::Verify { dir } => {
            let results = verify_run(&dir).map_err(CliError::Io)?;
            print!("{}", format_table(&results));
            for note in integrity_notes(&dir) {
                println!("note: {note}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed == 0 {
                Ok(())
            } else {
                Err(CliError::Verification(format!("{failed} of {} criteria failed", results.len())))
            }
        }
        Command::Sweep { config, out, workers } => {
            let spec = load_sweep(&config)?;
            for member in cmd_sweep(&spec, &out, workers)? {
                println!("{:<20} {}", member.name, member.status);
            }
            println!("comparison table: {}", out.join(COMPARISON_FILE).display());
            Ok(())
        }
        Command::Resume { resume_from, workers, stop_after } => {
            finish_run(cmd_resume(&resume_from, &RunOptions { workers, stop_after })?, &resume_from)
        }
        Command::Report { dir } => {
            let mut manifest = RunManifest::load(&dir)?;
            write_summary(&dir, &mut manifest)?;
            manifest.save(&dir)?;
            let summary: RunSummary = read_json(&dir.join(SUMMARY_FILE))?;
            for rung in &summary.rungs {
                let rate =
                    |c: &str| rung.fits.get(c).and_then(|f| f.rate).map_or("-".to_string(), |r| format!("{r:.3}"));
                println!(
                    "eps {:<8} potential rate {:<7} time-derivative rate {:<7} final sup|v| {:.3e}",
                    rung.eps,
                    rate("sup_abs_v"),
                    rate("sup_abs_phi_dot"),
                    rung.final_values.get("sup_abs_v").copied().unwrap_or(f64::NAN)
                );
            }
            print!("{}", format_table(&summary.verdicts));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
