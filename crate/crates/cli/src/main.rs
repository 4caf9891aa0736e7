use std::path::PathBuf;
use std::process::ExitCode;

use brewflex::report::{render, OutputDir};
use brewflex::{run_scenario, AppError, Inputs, Mode, Scenario};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "brewflex",
    version,
    about = "National brewery cooling demand-response simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write the report files.
    Run {
        /// Scenario TOML; built-in defaults when absent.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Population seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-batch hourly traces.
        #[arg(long)]
        traces: bool,
        /// Rescale the population to this many facilities.
        #[arg(long)]
        facilities: Option<usize>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write synthetic input files and a scenario binding them.
    Synth {
        /// Scenario TOML; built-in defaults when absent
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Directory for the CSV files and scenario.toml
        #[arg(long)]
        out: PathBuf,
        /// Number of facilities to generate
        #[arg(long)]
        facilities: Option<usize>,
    },
    /// Print the effective scenario with every default filled in.
    Config {
        /// Scenario TOML; built-in defaults when absent
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

fn load(path: Option<&PathBuf>) -> Result<Scenario, AppError> {
    match path {
        Some(p) => Scenario::load(p),
        None => Ok(Scenario::default()),
    }
}

fn execute(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Run {
            scenario,
            mode,
            seed,
            out,
            traces,
            facilities,
            jobs,
        } => {
            let mut s = load(scenario.as_ref())?;
            if let Some(m) = mode {
                s.mode = m;
            }
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(o) = out {
                s.out = o;
            }
            if facilities.is_some() {
                s.facilities = facilities;
            }
            if jobs.is_some() {
                s.workers = jobs;
            }
            let inputs = Inputs::load(s)?;
            let dir = OutputDir::prepare(&inputs.scenario.out)?;
            eprintln!(
                "simulating {} facilities, mode {}",
                inputs.population.len(),
                inputs.scenario.mode.as_str()
            );
            let report = run_scenario(inputs, traces)?;
            let files = render(&report, traces)?;
            for p in dir.commit(&files)? {
                eprintln!("wrote {}", p.display());
            }
            if let Some(saving) = report.national.saving.cost {
                println!("national relative saving: {:.4} %", 100.0 * saving);
            }
            let cal = &report.calibration;
            if !cal.breaches.is_empty() {
                eprintln!(
                    "calibration: {} of {} checked facilities outside [{}, {}] kWh/hl",
                    cal.breaches.len(),
                    cal.checked,
                    cal.band_kwh_per_hl.0,
                    cal.band_kwh_per_hl.1
                );
                for b in &cal.breaches {
                    eprintln!(
                        "  brewery {} (category {}): {:.3} kWh/hl",
                        b.brewery_id, b.category, b.intensity_kwh_per_hl
                    );
                }
                if report.inputs.scenario.calibration.enforce {
                    return Err(AppError::Validation(
                        "cooling intensity outside the plausibility band".into(),
                    ));
                }
            }
            Ok(())
        }
        Command::Synth {
            scenario,
            out,
            facilities,
        } => {
            let mut s = load(scenario.as_ref())?;
            if facilities.is_some() {
                s.facilities = facilities;
            }
            s.validate()?;
            for p in brewflex::synth::write_inputs(&s, &out)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Config { scenario } => {
            let s = load(scenario.as_ref())?;
            s.validate()?;
            print!("{}", s.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
