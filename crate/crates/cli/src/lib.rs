//! `mddest` command line: `fit`, `simulate` and `generate`.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod fit;
pub mod simulate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: msg.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<mddest::Error> for CliError {
    fn from(e: mddest::Error) -> Self {
        use mddest::Error as E;
        let code = match &e {
            E::Config(_) | E::UnknownModel(_) | E::InvalidModel(_) | E::InterceptsNotIdentified
            | E::MissingInterceptPartition => EXIT_CONFIG,
            E::Shape(_) | E::NonFiniteInput { .. } | E::Data(_) | E::Io(_) | E::Csv(_) | E::Json(_) => EXIT_DATA,
            E::NonFiniteResidual { .. } | E::Singular(_) | E::Quadrature(_) => EXIT_NOT_CONVERGED,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "mddest", version, about = "MDD-based estimation of conditional moment models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model to CSV data.
    Fit(fit::FitArgs),
    /// Run a Monte Carlo experiment described by a TOML file.
    Simulate(simulate::SimulateArgs),
    /// Write one simulated sample as CSV.
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub dgp: u8,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    #[arg(long, default_value_t = mddest::dgp::DEFAULT_BURN_IN)]
    pub burn_in: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn generate(args: &GenerateArgs, out: &mut dyn Write) -> CliResult<i32> {
    let spec = mddest::dgp::DgpSpec {
        id: args.dgp,
        n: args.n,
        seed: args.seed,
        stream: args.stream,
        burn_in: args.burn_in,
    };
    let g = mddest::dgp::generate(&spec)?;
    let text = mddest::data::write_csv(&mddest::data::sample_frame(&g))?;
    match &args.out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", p.display())))?,
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::data(e.to_string()))?,
    }
    Ok(EXIT_OK)
}

/// Runs a parsed command, writing reports to `out` and diagnostics to `err`.
/// Returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Fit(a) => fit::run(a, out, err),
        Command::Simulate(a) => simulate::run(a, out, err),
        Command::Generate(a) => generate(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code
        }
    }
}

/// Parses `args` (program name first) and runs; usage errors exit with 2.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli, out, err),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(rendered.as_bytes());
            } else {
                let _ = out.write_all(rendered.as_bytes());
            }
            code
        }
    }
}
