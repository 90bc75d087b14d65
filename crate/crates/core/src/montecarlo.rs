//! Replication driver and bias / ASD / ESD tables.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{generate, DgpSpec, DEFAULT_BURN_IN};
use crate::error::{Error, Result};
use crate::estimators::{estimate_dl, estimate_mdd, estimate_two_step};
use crate::optimize::OptimizerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mdd,
    Dl,
}

impl EstimatorKind {
    pub fn tag(self) -> &'static str {
        match self {
            EstimatorKind::Mdd => "mdd",
            EstimatorKind::Dl => "dl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mdd" => Ok(EstimatorKind::Mdd),
            "dl" => Ok(EstimatorKind::Dl),
            other => Err(Error::Config(format!("unknown estimator '{other}' (expected mdd or dl)"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dgp: u8,
    pub n: Vec<usize>,
    pub replications: usize,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        DgpSpec::new(self.dgp, 10, 0).validate()?;
        if self.n.is_empty() {
            return Err(Error::Config("n: at least one sample size is required".into()));
        }
        if let Some(&n) = self.n.iter().find(|&&n| n < 10) {
            return Err(Error::Config(format!("n: sample size {n} is below the minimum of 10")));
        }
        if self.replications < 2 {
            return Err(Error::Config("replications: at least 2 are required".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators: at least one of mdd, dl is required".into()));
        }
        self.optimizer.validate(0).or_else(|e| match e {
            // bounds are checked against the model dimension later
            Error::Config(m) if m.contains("bounds given") => Ok(()),
            e => Err(e),
        })
    }
}

/// One estimator on one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub theta: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// The optimizer converged and every standard error is finite.
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub parameter: String,
    pub truth: f64,
    pub bias: f64,
    pub asd: f64,
    pub esd: f64,
}

/// Summary over the converged replications of one (design, n, estimator) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub dgp: u8,
    pub n: usize,
    pub estimator: EstimatorKind,
    pub requested: usize,
    pub converged: usize,
    pub params: Vec<ParamSummary>,
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub summary: McSummary,
    pub outcomes: Vec<ReplicationOutcome>,
    pub elapsed: Duration,
}

impl CellResult {
    /// Share of converged replications whose `theta +- z * se` interval covers
    /// the truth, per parameter.
    pub fn coverage(&self, z: f64) -> Vec<f64> {
        let truth: Vec<f64> = self.summary.params.iter().map(|p| p.truth).collect();
        let ok: Vec<&ReplicationOutcome> = self.outcomes.iter().filter(|o| o.converged).collect();
        (0..truth.len())
            .map(|j| {
                let hits = ok
                    .iter()
                    .filter(|o| (o.theta[j] - truth[j]).abs() <= z * o.std_errors[j])
                    .count();
                hits as f64 / ok.len() as f64
            })
            .collect()
    }
}

fn optimizer_seed(master: u64, replication: usize) -> u64 {
    master ^ (replication as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Generate and estimate one replication with every requested estimator.
pub fn run_replication(
    cfg: &ExperimentConfig,
    n: usize,
    replication: usize,
) -> Vec<ReplicationOutcome> {
    let spec = DgpSpec {
        id: cfg.dgp,
        n,
        seed: cfg.seed,
        stream: replication as u64,
        burn_in: cfg.burn_in,
    };
    let opt = OptimizerConfig {
        seed: optimizer_seed(cfg.seed, replication),
        ..cfg.optimizer.clone()
    };
    let failed = |msg: String| ReplicationOutcome {
        replication,
        theta: vec![],
        std_errors: vec![],
        converged: false,
        error: Some(msg),
    };
    let (generated, model) = match generate(&spec).and_then(|g| g.model().map(|m| (g, m))) {
        Ok(v) => v,
        Err(e) => return cfg.estimators.iter().map(|_| failed(e.to_string())).collect(),
    };
    cfg.estimators
        .iter()
        .map(|kind| {
            let fit = match kind {
                EstimatorKind::Mdd if generated.has_intercepts() => {
                    estimate_two_step(model.as_ref(), &generated.sample, &opt)
                }
                EstimatorKind::Mdd => estimate_mdd(model.as_ref(), &generated.sample, &opt),
                EstimatorKind::Dl => estimate_dl(model.as_ref(), &generated.sample, &opt),
            };
            match fit {
                Ok(r) => ReplicationOutcome {
                    replication,
                    converged: r.converged && r.std_errors.iter().all(|s| s.is_finite()),
                    theta: r.theta_hat.values,
                    std_errors: r.std_errors,
                    error: None,
                },
                Err(e) => failed(e.to_string()),
            }
        })
        .collect()
}

/// Mean, and standard deviation with divisor `len - 1`.
pub fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(
    dgp: u8,
    n: usize,
    estimator: EstimatorKind,
    labels: &[String],
    truth: &[f64],
    outcomes: &[ReplicationOutcome],
) -> McSummary {
    let ok: Vec<&ReplicationOutcome> = outcomes.iter().filter(|o| o.converged).collect();
    let params = labels
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(j, (label, &t))| {
            let est: Vec<f64> = ok.iter().map(|o| o.theta[j]).collect();
            let se: Vec<f64> = ok.iter().map(|o| o.std_errors[j]).collect();
            let (mean, esd) = mean_and_sd(&est);
            ParamSummary {
                parameter: label.clone(),
                truth: t,
                bias: mean - t,
                asd: se.iter().sum::<f64>() / se.len() as f64,
                esd,
            }
        })
        .collect();
    McSummary {
        dgp,
        n,
        estimator,
        requested: outcomes.len(),
        converged: ok.len(),
        params,
    }
}

/// Runs every `(n, estimator)` cell. Replications run in parallel; results
/// are reduced in replication order, so the output does not depend on the
/// number of worker threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let probe = generate(&DgpSpec::new(cfg.dgp, cfg.n[0], cfg.seed))?;
    let mut cells = Vec::new();
    for &n in &cfg.n {
        let start = Instant::now();
        let per_rep: Vec<Vec<ReplicationOutcome>> = (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_replication(cfg, n, r))
            .collect();
        let elapsed = start.elapsed();
        for (k, &kind) in cfg.estimators.iter().enumerate() {
            let outcomes: Vec<ReplicationOutcome> = per_rep.iter().map(|v| v[k].clone()).collect();
            let summary = summarize(cfg.dgp, n, kind, &probe.param_labels, &probe.truth.values, &outcomes);
            cells.push(CellResult {
                summary,
                outcomes,
                elapsed,
            });
        }
    }
    Ok(cells)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableFormat {
    Csv,
    Json,
    TextGrid,
}

impl TableFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            "text" | "text-grid" => Ok(TableFormat::TextGrid),
            other => Err(Error::Config(format!("unknown table format '{other}'"))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
            TableFormat::TextGrid => "txt",
        }
    }
}

pub const CSV_COLUMNS: [&str; 10] = [
    "estimator", "parameter", "n", "bias", "asd", "esd", "dgp", "truth", "converged", "requested",
];

/// 17 significant digits, enough to read every `f64` back exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn emit_table(summaries: &[McSummary], format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(vec![]);
            w.write_record(CSV_COLUMNS)?;
            for s in summaries {
                for p in &s.params {
                    w.write_record([
                        s.estimator.tag().to_string(),
                        p.parameter.clone(),
                        s.n.to_string(),
                        fmt_f64(p.bias),
                        fmt_f64(p.asd),
                        fmt_f64(p.esd),
                        s.dgp.to_string(),
                        fmt_f64(p.truth),
                        s.converged.to_string(),
                        s.requested.to_string(),
                    ])?;
                }
            }
            let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        TableFormat::Json => {
            let mut s = serde_json::to_string_pretty(summaries)?;
            s.push('\n');
            Ok(s)
        }
        TableFormat::TextGrid => Ok(text_grid(summaries)),
    }
}

/// Rows per (design, estimator, parameter), one Bias/ASD/ESD group per `n`.
fn text_grid(summaries: &[McSummary]) -> String {
    let mut ns: Vec<usize> = summaries.iter().map(|s| s.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut keys: Vec<(u8, EstimatorKind)> = Vec::new();
    for s in summaries {
        if !keys.contains(&(s.dgp, s.estimator)) {
            keys.push((s.dgp, s.estimator));
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<8}{:<6}{:<10}", "", "", "");
    for n in &ns {
        let _ = write!(out, "| {:^26}", format!("n={n}"));
    }
    out.push('\n');
    let _ = write!(out, "{:<8}{:<6}{:<10}", "DGP", "Est", "Param");
    for _ in &ns {
        let _ = write!(out, "| {:>8}{:>9}{:>9}", "Bias", "ASD", "ESD");
    }
    out.push('\n');
    for (dgp, est) in keys {
        let cells: Vec<Option<&McSummary>> = ns
            .iter()
            .map(|n| summaries.iter().find(|s| s.dgp == dgp && s.estimator == est && s.n == *n))
            .collect();
        let labels: Vec<String> = cells
            .iter()
            .flatten()
            .next()
            .map(|s| s.params.iter().map(|p| p.parameter.clone()).collect())
            .unwrap_or_default();
        for (j, label) in labels.iter().enumerate() {
            let head = if j == 0 { dgp.to_string() } else { String::new() };
            let est_tag = if j == 0 { est.tag().to_uppercase() } else { String::new() };
            let _ = write!(out, "{head:<8}{est_tag:<6}{label:<10}");
            for cell in &cells {
                match cell.and_then(|s| s.params.get(j)) {
                    Some(p) => {
                        let _ = write!(out, "| {:>8.3}{:>9.3}{:>9.3}", p.bias, p.asd, p.esd);
                    }
                    None => {
                        let _ = write!(out, "| {:>8}{:>9}{:>9}", "-", "-", "-");
                    }
                }
            }
            out.push('\n');
        }
    }
    let mut notes = String::new();
    for s in summaries {
        if s.converged < s.requested {
            let _ = writeln!(
                notes,
                "DGP {} {} n={}: {} of {} replications converged",
                s.dgp,
                s.estimator.tag().to_uppercase(),
                s.n,
                s.converged,
                s.requested
            );
        }
    }
    out.push_str(&notes);
    out
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.trim().parse().map_err(|_| {
        Error::Data(format!(
            "row {line}, column {}: cannot parse '{raw}' as {}",
            i + 1,
            CSV_COLUMNS[i]
        ))
    })
}

/// Inverse of the CSV form of [`emit_table`]. Consecutive rows sharing
/// `(dgp, estimator, n)` form one summary.
pub fn parse_csv_table(text: &str) -> Result<Vec<McSummary>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Data(format!(
            "unexpected header {header:?}, expected {CSV_COLUMNS:?}"
        )));
    }
    let mut out: Vec<McSummary> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        let estimator = EstimatorKind::parse(rec.get(0).unwrap_or(""))
            .map_err(|e| Error::Data(format!("row {line}, column 1: {e}")))?;
        let n: usize = parse_field(&rec, 2, line)?;
        let dgp: u8 = parse_field(&rec, 6, line)?;
        let param = ParamSummary {
            parameter: rec.get(1).unwrap_or("").to_string(),
            truth: parse_field(&rec, 7, line)?,
            bias: parse_field(&rec, 3, line)?,
            asd: parse_field(&rec, 4, line)?,
            esd: parse_field(&rec, 5, line)?,
        };
        let converged: usize = parse_field(&rec, 8, line)?;
        let requested: usize = parse_field(&rec, 9, line)?;
        match out.last_mut() {
            Some(s) if s.dgp == dgp && s.estimator == estimator && s.n == n => s.params.push(param),
            _ => out.push(McSummary {
                dgp,
                n,
                estimator,
                requested,
                converged,
                params: vec![param],
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_sd() {
        let (m, sd) = mean_and_sd(&[1.0, 4.0]);
        assert_eq!(m, 2.5);
        // sqrt(((1-2.5)^2 + (4-2.5)^2) / 1)
        assert!((sd - 4.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn non_converged_replications_are_excluded() {
        let oc = |r, t: f64, ok| ReplicationOutcome {
            replication: r,
            theta: vec![t],
            std_errors: vec![0.1],
            converged: ok,
            error: None,
        };
        let s = summarize(
            1,
            50,
            EstimatorKind::Mdd,
            &["theta0".into()],
            &[1.0],
            &[oc(0, 1.2, true), oc(1, 99.0, false), oc(2, 0.9, true)],
        );
        assert_eq!((s.requested, s.converged), (3, 2));
        assert!((s.params[0].bias - 0.05).abs() < 1e-12);
    }

    #[test]
    fn format_tags() {
        assert_eq!(TableFormat::parse("text").unwrap(), TableFormat::TextGrid);
        assert!(TableFormat::parse("xml").is_err());
        assert_eq!(EstimatorKind::parse("DL").unwrap(), EstimatorKind::Dl);
    }
}
