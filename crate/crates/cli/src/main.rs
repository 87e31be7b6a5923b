use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use didweak::{run, Command, Options};

#[derive(Parser)]
#[command(name = "didweak", version, about = "DID designs, 2SLS, wild-bootstrap AR confidence sets, changes-in-changes and Monte Carlo checks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Least-squares fit of the declared design with diagnostics.
    Fit(Common),
    /// 2SLS with first-stage F and Hansen J.
    Iv(Common),
    /// Wild restricted efficient bootstrap Anderson-Rubin curve and sets.
    ArCurve(Common),
    /// Changes-in-changes quantile effects with bootstrap tests.
    Cic(Common),
    /// Supergroup Monte Carlo.
    Simulate(Common),
    /// Spline versus quadratic trend-break comparison.
    Horserace(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run specification.
    #[arg(long)]
    spec: PathBuf,
    /// Overrides every seed in the run file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Directory for CSV outputs.
    #[arg(long, default_value = "didweak-out")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (cmd, c) = match cli.command {
        Sub::Fit(c) => (Command::Fit, c),
        Sub::Iv(c) => (Command::Iv, c),
        Sub::ArCurve(c) => (Command::ArCurve, c),
        Sub::Cic(c) => (Command::Cic, c),
        Sub::Simulate(c) => (Command::Simulate, c),
        Sub::Horserace(c) => (Command::Horserace, c),
    };
    let opts = Options { spec: c.spec, seed: c.seed, threads: c.threads, out_dir: c.out_dir };
    match run(cmd, &opts) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
