use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::json;

use hug_core::gnc::gnc_report_state;
use hug_core::optim::minimize_energy;
use hug_core::runner::{experiment, load_state, sweep, verify, write_json, Suite, SweepConfig};
use hug_core::{Error, ExperimentConfig, OptimConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "hug", version, about = "Hyperspherical uniformity gap losses and neural collapse diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the Riesz s-energy of n points on the unit sphere in R^d.
    Optimize {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
        s: f64,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Writes the summary plus the best configuration as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment from an ExperimentConfig JSON file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the GNC report of a saved state.
    Diagnose {
        #[arg(long)]
        state: PathBuf,
    },
    /// Run a verification suite by name, or `all`.
    Verify {
        #[arg(long)]
        suite: String,
        /// Also write the suite reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter grid from a sweep config JSON file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

/// A failed command with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::Parse(_) | Error::SchemaVersionMismatch { .. } => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Failure { code, message: e.to_string() }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure { code: EXIT_RUNTIME, message: format!("cannot read {}: {e}", path.display()) })?;
    serde_json::from_str(&text).map_err(|e| Failure { code: EXIT_USAGE, message: format!("{}: {e}", path.display()) })
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn optimize(
    n: usize,
    d: usize,
    s: f64,
    restarts: Option<usize>,
    seed: u64,
    max_iters: Option<usize>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let mut cfg = OptimConfig::energy_default();
    cfg.seed = seed;
    cfg.restarts = restarts.unwrap_or(cfg.restarts);
    cfg.max_iters = max_iters.unwrap_or(cfg.max_iters);
    let best = minimize_energy(n, d, s, &cfg)?;
    let pairs = (n * (n - 1)) as f64;
    let summary = json!({
        "n": n,
        "d": d,
        "s": s,
        "energy": best.energy,
        "average_energy": best.energy / pairs,
        "restart": best.restart,
    });
    if let Some(path) = out {
        let mut full = summary.clone();
        full["config"] = serde_json::to_value(&best.config).expect("serializable");
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(Error::from)?;
        }
        write_json(path, &full)?;
    }
    print_json(&summary);
    Ok(())
}

/// Plain decimals, switching to scientific notation for very small or large values.
fn num(v: f64) -> String {
    if v != 0.0 && v.is_finite() && !(1e-4..1e7).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn run_verify(name: &str, out: Option<&Path>) -> Result<(), Failure> {
    let suites: Vec<Suite> = if name == "all" { Suite::ALL.to_vec() } else { vec![name.parse::<Suite>()?] };
    let mut reports = Vec::new();
    for suite in suites {
        let report = verify(suite);
        for c in &report.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let note = c.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default();
            println!(
                "{status} {suite}/{}: measured {} target {} tolerance {}{note}",
                c.name,
                num(c.measured),
                num(c.target),
                num(c.tolerance)
            );
        }
        reports.push(report);
    }
    if let Some(path) = out {
        write_json(path, &reports)?;
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| r.suite.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure { code: EXIT_VERIFY, message: format!("failed suites: {}", failed.join(", ")) })
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Optimize { n, d, s, restarts, seed, max_iters, out } => {
            optimize(n, d, s, restarts, seed, max_iters, out.as_deref())
        }
        Command::Train { config } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            let outcome = experiment(&cfg)?;
            print_json(&outcome.report);
            Ok(())
        }
        Command::Diagnose { state } => {
            let state = load_state(&state)?;
            print_json(&gnc_report_state(&state)?);
            Ok(())
        }
        Command::Verify { suite, out } => run_verify(&suite, out.as_deref()),
        Command::Sweep { config } => {
            let cfg: SweepConfig = read_json(&config)?;
            let runs = sweep(&cfg)?;
            let failed = runs.iter().filter(|r| r.error.is_some()).count();
            for r in &runs {
                match (&r.report, &r.error) {
                    (Some(rep), _) => println!("ok   {} loss {}", r.dir.display(), rep.final_loss),
                    (_, Some(e)) => println!("fail {} {e}", r.dir.display()),
                    _ => {}
                }
            }
            if failed > 0 {
                return Err(Failure { code: EXIT_RUNTIME, message: format!("{failed} of {} runs failed", runs.len()) });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
