use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isotm_cli::{dump_field, verify, CliError, DumpWhat, Scenario};

#[derive(Parser)]
#[command(name = "isotm", version, about = "Verification runs for isotropic structures on tangent bundles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks listed in a scenario and emit a JSON report
    Verify {
        scenario: PathBuf,
        /// Write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also compare closed forms against the Koszul oracle where optional
        #[arg(long)]
        oracle_adjudicate: bool,
        /// Override `sampling.seed`
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a pointwise quantity on the scenario grid as CSV
    Dump {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        what: DumpWhat,
        #[arg(long)]
        csv: PathBuf,
    },
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Verify {
            scenario,
            out,
            oracle_adjudicate,
            seed,
        } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(seed) = seed {
                s.sampling.seed = seed;
            }
            let report = verify(&s, oracle_adjudicate)?;
            let json = report.to_json()?;
            match out {
                Some(path) => {
                    let mut f = create(&path)?;
                    f.write_all(json.as_bytes())
                        .and_then(|_| f.flush())
                        .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
                }
                None => print!("{json}"),
            }
            for c in &report.checks {
                eprintln!("{:<18} {:<14} max_residual={:?}", c.name.as_str(), c.verdict, c.max_residual);
            }
            Ok(report.exit_code())
        }
        Command::Dump { scenario, what, csv } => {
            let s = Scenario::load(&scenario)?;
            let rows = dump_field(&s, what, create(&csv)?)?;
            eprintln!("wrote {rows} rows to {}", csv.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
