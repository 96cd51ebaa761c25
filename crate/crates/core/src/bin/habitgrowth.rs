use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use habitgrowth::pipeline::{
    self, run_scenario, run_sweep, sweep_exit_code, write_outputs, write_sweep_csv, OutputFlags,
    EXIT_INPUT, EXIT_OK,
};
use habitgrowth::scenario::{parse_values, Scenario, SweepParam};
use habitgrowth::Error;

#[derive(Parser)]
#[command(name = "habitgrowth", version, about = "AK growth with finite-memory habits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on one scenario.
    Run {
        scenario: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Reports only, no trajectory CSV.
        #[arg(long)]
        check_only: bool,
        /// Also write per-figure CSVs.
        #[arg(long)]
        plot_data: bool,
        /// Seed for the oracle perturbations.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_oracle: bool,
    },
    /// Run the pipeline once per value of one parameter.
    Sweep {
        scenario: PathBuf,
        /// eps, eta, tau, gamma, rho or k0.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        no_oracle: bool,
    },
}

fn fail(err: &Error) -> i32 {
    eprintln!("exit={} reason={} {err}", pipeline::exit_code(err), err.reason_code());
    pipeline::exit_code(err)
}

fn load(path: &Path, seed: Option<u64>, no_oracle: bool) -> Result<Scenario, Error> {
    let mut sc = Scenario::load(path)?;
    if let Some(s) = seed {
        sc.numerics.seed = s;
    }
    if no_oracle {
        sc.numerics.oracle = false;
    }
    Ok(sc)
}

fn run(path: &Path, out: &Path, flags: OutputFlags, seed: Option<u64>, no_oracle: bool) -> i32 {
    let sc = match load(path, seed, no_oracle) {
        Ok(sc) => sc,
        Err(e) => return fail(&e),
    };
    let outcome = run_scenario(&sc);
    if let Err(e) = write_outputs(&outcome, out, flags) {
        return fail(&e);
    }
    let report = &outcome.report;
    for c in &report.checks {
        println!(
            "{:<22} {:>12.3e}  tol {:>10.3e}  {}",
            c.name,
            c.value,
            c.tolerance,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    if report.passed() {
        println!("{}", report.status_line());
    } else {
        eprintln!("{}", report.status_line());
    }
    report.exit_code
}

fn sweep(path: &Path, param: &str, values: &str, out: &Path, no_oracle: bool) -> i32 {
    let setup = || -> Result<(Scenario, SweepParam, Vec<f64>), Error> {
        Ok((load(path, None, no_oracle)?, param.parse()?, parse_values(values)?))
    };
    let (sc, param, values) = match setup() {
        Ok(x) => x,
        Err(e) => return fail(&e),
    };
    let rows = run_sweep(&sc, param, &values);
    let written = std::fs::create_dir_all(out)
        .map_err(Error::from)
        .and_then(|_| {
            let path = out.join(format!("sweep_{param}.csv"));
            File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        })
        .and_then(|f| write_sweep_csv(&rows, BufWriter::new(f)));
    if let Err(e) = written {
        return fail(&e);
    }
    for r in &rows {
        println!("{param}={} exit={} reason={}", r.value, r.exit_code, r.reason);
    }
    let code = sweep_exit_code(&rows);
    if code == EXIT_OK {
        println!("exit=0 reason=ok");
    } else {
        let bad = rows.iter().filter(|r| r.exit_code != EXIT_OK).count();
        eprintln!("exit={code} reason=SweepRowsFailed({bad}/{})", rows.len());
    }
    code
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let code = match cli.command {
        Command::Run {
            scenario,
            out,
            check_only,
            plot_data,
            seed,
            no_oracle,
        } => run(
            &scenario,
            &out,
            OutputFlags {
                check_only,
                plot_data,
            },
            seed,
            no_oracle,
        ),
        Command::Sweep {
            scenario,
            param,
            values,
            out,
            no_oracle,
        } => sweep(&scenario, &param, &values, &out, no_oracle),
    };
    ExitCode::from(code as u8)
}
