//! `twistdouble run <scenario>` and `twistdouble list-checks`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twistdouble::checks::{list_checks, run_scenario, Scenario};

#[derive(Parser)]
#[command(name = "twistdouble", version, about = "Run numerical checks on twisted Heisenberg doubles")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the suite of a scenario file (TOML or JSON) and print a JSON report.
    Run {
        scenario: PathBuf,
        /// override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// override the number of trials
        #[arg(long)]
        trials: Option<usize>,
        /// multiply every tolerance
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
        /// write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List check ids, default tolerances and the relation each one tests.
    ListChecks,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.cmd {
        Cmd::ListChecks => {
            print!("{}", list_checks());
            ExitCode::SUCCESS
        }
        Cmd::Run { scenario, seed, trials, tol_scale, out } => match run(&scenario, seed, trials, tol_scale, out) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}

fn run(path: &PathBuf, seed: Option<u64>, trials: Option<usize>, tol_scale: f64, out: Option<PathBuf>) -> Result<bool, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut sc = Scenario::parse(&text).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(t) = trials {
        sc.trials = t;
    }
    if !(tol_scale.is_finite() && tol_scale > 0.0) {
        return Err(format!("invalid --tol-scale {tol_scale}"));
    }
    let report = run_scenario(&sc, tol_scale).map_err(|e| e.to_string())?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    match out {
        Some(p) => std::fs::write(&p, json + "\n").map_err(|e| format!("{}: {e}", p.display()))?,
        None => println!("{json}"),
    }
    for c in &report.checks {
        eprintln!("{:<26} {:>5}  residual {:.3e}  tol {:.1e}", c.id, format!("{:?}", c.verdict).to_lowercase(), c.residual, c.tolerance);
    }
    Ok(report.all_pass())
}
