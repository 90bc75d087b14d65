use std::io::Write;
use std::path::PathBuf;

use clap::Args;

use mddest::montecarlo::{emit_table, run_experiment, ExperimentConfig, McSummary, TableFormat};

use crate::{CliError, CliResult, EXIT_OK};

#[derive(Args, Debug, Default)]
pub struct SimulateArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory receiving `dgp<ID>.csv`, `.json` and `.txt`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Overrides the master seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Table printed on stdout: text, csv or json.
    #[arg(long, default_value = "text")]
    pub format: String,
}

pub fn load_config(args: &SimulateArgs) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_tables(dir: &PathBuf, dgp: u8, summaries: &[McSummary]) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
    for format in [TableFormat::Csv, TableFormat::Json, TableFormat::TextGrid] {
        let path = dir.join(format!("dgp{dgp}.{}", format.extension()));
        std::fs::write(&path, emit_table(summaries, format)?)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn run(args: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<i32> {
    let cfg = load_config(args)?;
    let stdout_format = TableFormat::parse(&args.format).map_err(|e| CliError::config(format!("format: {e}")))?;
    let jobs = args.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config(format!("jobs: {e}")))?;
    let cells = pool.install(|| run_experiment(&cfg))?;
    let summaries: Vec<McSummary> = cells.iter().map(|c| c.summary.clone()).collect();
    for c in &cells {
        let _ = writeln!(
            err,
            "dgp {} n={} {}: {}/{} converged, {:.2}s",
            c.summary.dgp,
            c.summary.n,
            c.summary.estimator.tag(),
            c.summary.converged,
            c.summary.requested,
            c.elapsed.as_secs_f64()
        );
    }
    if let Some(dir) = &args.out_dir {
        write_tables(dir, cfg.dgp, &summaries)?;
    }
    out.write_all(emit_table(&summaries, stdout_format)?.as_bytes())
        .map_err(|e| CliError::data(e.to_string()))?;
    Ok(EXIT_OK)
}
