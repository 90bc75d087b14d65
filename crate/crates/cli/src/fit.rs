use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use mddest::builtin::{builtin_model, ModelSpec, SpecOptions};
use mddest::data::{lag_matrix, log_returns_pct, read_csv, DataFrame};
use mddest::estimators::{closed_form_linear, estimate_dl, estimate_mdd, estimate_two_step};
use mddest::montecarlo::EstimatorKind;
use mddest::{EstimateResult, OptimizerConfig, ResidualModel, Sample};

use crate::{CliError, CliResult, EXIT_NOT_CONVERGED, EXIT_OK};

const Z_05: f64 = 1.959_963_984_540_054;
const Z_10: f64 = 1.644_853_626_951_472_2;

#[derive(Args, Debug, Default)]
pub struct FitArgs {
    /// TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model tag: linear-no-intercept, linear-with-intercept, sin-index,
    /// sigmoid-index, quadratic-index, ar, var, tar.
    #[arg(long)]
    pub model: Option<String>,
    /// Response column(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub response: Option<Vec<String>>,
    /// Regressor columns for static models, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub regressors: Option<Vec<String>>,
    #[arg(long)]
    pub lags: Option<usize>,
    #[arg(long)]
    pub threshold_lag: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Whether AR/VAR/TAR models carry intercepts.
    #[arg(long)]
    pub intercept: Option<bool>,
    /// Number of response lags for ar/var/tar, or a comma-separated column
    /// list for static models.
    #[arg(long)]
    pub conditioning: Option<String>,
    /// mdd or dl.
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// text, csv or json.
    #[arg(long)]
    pub format: Option<String>,
    /// Replace each response column by 100 times its log difference.
    #[arg(long)]
    pub log_returns_pct: bool,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(untagged)]
enum ConditioningSpec {
    #[default]
    Default,
    Lags(usize),
    Columns(Vec<String>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitFile {
    data: Option<PathBuf>,
    model: Option<String>,
    response: Option<Vec<String>>,
    regressors: Option<Vec<String>>,
    lags: Option<usize>,
    threshold_lag: Option<usize>,
    threshold: Option<f64>,
    intercept: Option<bool>,
    #[serde(default)]
    conditioning: ConditioningSpec,
    estimator: Option<String>,
    seed: Option<u64>,
    format: Option<String>,
    log_returns_pct: Option<bool>,
    optimizer: Option<OptimizerConfig>,
}

/// Fully resolved fit options.
#[derive(Debug)]
pub struct FitConfig {
    pub data: PathBuf,
    pub model: String,
    pub response: Option<Vec<String>>,
    pub regressors: Option<Vec<String>>,
    pub opts: SpecOptions,
    conditioning: ConditioningSpec,
    pub estimator: EstimatorKind,
    pub format: OutputFormat,
    pub log_returns_pct: bool,
    pub optimizer: OptimizerConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Csv,
    Json,
}

fn parse_format(s: &str) -> CliResult<OutputFormat> {
    match s {
        "text" => Ok(OutputFormat::Text),
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        other => Err(CliError::config(format!("format: unknown output format '{other}' (text, csv, json)"))),
    }
}

pub fn resolve(args: &FitArgs) -> CliResult<FitConfig> {
    let file: FitFile = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => FitFile::default(),
    };
    let data = args
        .data
        .clone()
        .or(file.data)
        .ok_or_else(|| CliError::config("data: a CSV file is required (--data)"))?;
    let model = args
        .model
        .clone()
        .or(file.model)
        .ok_or_else(|| CliError::config("model: a model tag is required (--model)"))?;
    let conditioning = match &args.conditioning {
        Some(s) => match s.trim().parse::<usize>() {
            Ok(c) => ConditioningSpec::Lags(c),
            Err(_) => ConditioningSpec::Columns(s.split(',').map(|c| c.trim().to_string()).collect()),
        },
        None => file.conditioning,
    };
    let mut optimizer = file.optimizer.unwrap_or_default();
    if let Some(seed) = args.seed.or(file.seed) {
        optimizer.seed = seed;
    }
    Ok(FitConfig {
        data,
        model,
        response: args.response.clone().or(file.response),
        regressors: args.regressors.clone().or(file.regressors),
        opts: SpecOptions {
            lags: args.lags.or(file.lags),
            threshold_lag: args.threshold_lag.or(file.threshold_lag),
            threshold: args.threshold.or(file.threshold),
            intercept: args.intercept.or(file.intercept),
            ..SpecOptions::default()
        },
        conditioning,
        estimator: EstimatorKind::parse(args.estimator.as_deref().or(file.estimator.as_deref()).unwrap_or("mdd"))
            .map_err(|e| CliError::config(format!("estimator: {e}")))?,
        format: parse_format(args.format.as_deref().or(file.format.as_deref()).unwrap_or("text"))?,
        log_returns_pct: args.log_returns_pct || file.log_returns_pct.unwrap_or(false),
        optimizer,
    })
}

fn columns<'a>(frame: &'a DataFrame, names: &[String]) -> CliResult<Vec<&'a [f64]>> {
    names.iter().map(|n| frame.column(n).map_err(CliError::from)).collect()
}

/// The design: model spec, sample and the number of rows dropped for lags.
pub struct Design {
    pub spec: ModelSpec,
    pub sample: Sample,
    pub dropped: usize,
}

pub fn build_design(cfg: &FitConfig, frame: &DataFrame) -> CliResult<Design> {
    let is_series = matches!(cfg.model.as_str(), "ar" | "var" | "tar");
    let response = match &cfg.response {
        Some(r) if !r.is_empty() => r.clone(),
        _ if cfg.model == "var" => frame.names.clone(),
        _ => vec![frame.names[0].clone()],
    };
    let mut series: Vec<Vec<f64>> = columns(frame, &response)?.into_iter().map(<[f64]>::to_vec).collect();
    if cfg.log_returns_pct {
        series = series.iter().map(|s| log_returns_pct(s)).collect::<mddest::Result<_>>()?;
    }

    if is_series {
        let opts = SpecOptions {
            dim: Some(response.len()),
            l: Some(response.len()),
            ..cfg.opts.clone()
        };
        let spec = ModelSpec::from_tag(&cfg.model, &opts)?;
        if cfg.model != "var" && response.len() != 1 {
            return Err(CliError::config(format!("{} takes a single response column", cfg.model)));
        }
        let model_lag = spec.max_lag();
        let c = match &cfg.conditioning {
            ConditioningSpec::Default => match spec {
                ModelSpec::Tar { .. } => model_lag.max(4),
                _ => model_lag,
            },
            ConditioningSpec::Lags(c) => *c,
            ConditioningSpec::Columns(_) => {
                return Err(CliError::config(
                    "conditioning: give a number of lags for ar, var and tar models",
                ))
            }
        };
        if c == 0 {
            return Err(CliError::config("conditioning: at least one lag is required"));
        }
        let drop = model_lag.max(c);
        let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
        let dim = refs.len();
        let z = lag_matrix(&refs, model_lag, drop)?;
        let full_x = lag_matrix(&refs, c, drop)?;
        let x: Vec<f64> = full_x
            .chunks_exact(dim * (c + 1))
            .flat_map(|row| row[dim..].to_vec())
            .collect();
        let sample = Sample::new(z, dim * (model_lag + 1), x, dim * c)?;
        return Ok(Design { spec, sample, dropped: drop });
    }

    let regressors = match &cfg.regressors {
        Some(r) if !r.is_empty() => r.clone(),
        _ => frame.names.iter().filter(|n| !response.contains(n)).cloned().collect(),
    };
    if regressors.is_empty() {
        return Err(CliError::config("regressors: no regressor columns"));
    }
    let cond_names = match &cfg.conditioning {
        ConditioningSpec::Columns(c) => c.clone(),
        ConditioningSpec::Default => regressors.clone(),
        ConditioningSpec::Lags(_) => {
            return Err(CliError::config("conditioning: give column names for static models"))
        }
    };
    let opts = SpecOptions {
        l: Some(response.len()),
        k2: Some(regressors.len()),
        ..cfg.opts.clone()
    };
    let spec = ModelSpec::from_tag(&cfg.model, &opts)?;
    let mut regs: Vec<Vec<f64>> = columns(frame, &regressors)?.into_iter().map(<[f64]>::to_vec).collect();
    let mut cond: Vec<Vec<f64>> = columns(frame, &cond_names)?.into_iter().map(<[f64]>::to_vec).collect();
    let dropped = if cfg.log_returns_pct {
        // align with the shortened response
        for v in regs.iter_mut().chain(cond.iter_mut()) {
            v.remove(0);
        }
        1
    } else {
        0
    };
    let n = series[0].len();
    let mut z = Vec::new();
    let mut x = Vec::new();
    for t in 0..n {
        z.extend(series.iter().map(|s| s[t]));
        z.extend(regs.iter().map(|s| s[t]));
        x.extend(cond.iter().map(|s| s[t]));
    }
    let sample = Sample::new(z, series.len() + regs.len(), x, cond.len())?;
    Ok(Design { spec, sample, dropped })
}

fn is_linear_without_intercept(spec: &ModelSpec) -> Option<usize> {
    match *spec {
        ModelSpec::LinearNoIntercept { l, .. } => Some(l),
        ModelSpec::Ar { intercept: false, .. } => Some(1),
        ModelSpec::Var { dim, intercept: false, .. } => Some(dim),
        _ => None,
    }
}

pub fn estimate(cfg: &FitConfig, design: &Design, model: &dyn ResidualModel) -> CliResult<EstimateResult> {
    let n = design.sample.n();
    let d = model.param_dim();
    if n < d + 2 {
        return Err(CliError::data(format!(
            "insufficient rows: {n} usable observations for {d} parameters (need at least {})",
            d + 2
        )));
    }
    let r = match cfg.estimator {
        EstimatorKind::Dl => estimate_dl(model, &design.sample, &cfg.optimizer)?,
        EstimatorKind::Mdd if model.intercepts().is_some_and(|m| m.d1 > 0) => {
            estimate_two_step(model, &design.sample, &cfg.optimizer)?
        }
        EstimatorKind::Mdd => match is_linear_without_intercept(&design.spec) {
            Some(l) => {
                let mut r = closed_form_linear(&design.sample, l, false)?;
                r.param_names = model.param_names();
                r
            }
            None => estimate_mdd(model, &design.sample, &cfg.optimizer)?,
        },
    };
    Ok(match model.reporting() {
        Some(rep) => r.reparameterized(&rep),
        None => r,
    })
}

#[derive(Debug, Serialize)]
pub struct ParameterReport {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub significant_5pct: bool,
    pub significant_10pct: bool,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub model: String,
    pub estimator: String,
    pub method: String,
    pub n: usize,
    pub dropped_rows: usize,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub parameters: Vec<ParameterReport>,
    pub vcov: Vec<Vec<f64>>,
}

pub fn report(cfg: &FitConfig, design: &Design, r: &EstimateResult) -> FitReport {
    let parameters = r
        .param_names
        .iter()
        .zip(r.theta())
        .zip(&r.std_errors)
        .map(|((name, &est), &se)| {
            let t = est / se;
            ParameterReport {
                name: name.clone(),
                estimate: est,
                std_error: se,
                t_stat: t,
                significant_5pct: t.abs() > Z_05,
                significant_10pct: t.abs() > Z_10,
            }
        })
        .collect();
    FitReport {
        model: cfg.model.clone(),
        estimator: cfg.estimator.tag().to_string(),
        method: r.method.tag().to_string(),
        n: design.sample.n(),
        dropped_rows: design.dropped,
        converged: r.converged,
        iterations: r.iterations,
        objective: r.objective_value,
        parameters,
        vcov: (0..r.vcov.nrows())
            .map(|i| (0..r.vcov.ncols()).map(|j| r.vcov[(i, j)]).collect())
            .collect(),
    }
}

fn flag(p: &ParameterReport) -> &'static str {
    if p.significant_5pct {
        "**"
    } else if p.significant_10pct {
        "*"
    } else {
        ""
    }
}

pub fn render(rep: &FitReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(rep).expect("report serializes");
            s.push('\n');
            s
        }
        OutputFormat::Csv => {
            let mut s = String::from("parameter,estimate,std_error,t_stat,significance\n");
            for p in &rep.parameters {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    p.name,
                    mddest::montecarlo::fmt_f64(p.estimate),
                    mddest::montecarlo::fmt_f64(p.std_error),
                    mddest::montecarlo::fmt_f64(p.t_stat),
                    flag(p)
                ));
            }
            s
        }
        OutputFormat::Text => {
            let mut s = format!(
                "model: {}  estimator: {}  method: {}\nobservations: {} ({} rows dropped for lags)  converged: {}  objective: {:.6e}\n\n",
                rep.model,
                rep.estimator,
                rep.method,
                rep.n,
                rep.dropped_rows,
                if rep.converged { "yes" } else { "no" },
                rep.objective
            );
            let w = rep.parameters.iter().map(|p| p.name.len()).max().unwrap_or(9).max(9);
            s.push_str(&format!("{:<w$}  {:>12}  {:>12}  {:>8}\n", "parameter", "estimate", "std.error", "t"));
            for p in &rep.parameters {
                s.push_str(&format!(
                    "{:<w$}  {:>12.4}  {:>12.4}  {:>8.3} {}\n",
                    p.name,
                    p.estimate,
                    p.std_error,
                    p.t_stat,
                    flag(p)
                ));
            }
            s.push_str("\n** |t| > 1.96 (5% level), * |t| > 1.645 (10% level)\n");
            s
        }
    }
}

pub fn run(args: &FitArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<i32> {
    let cfg = resolve(args)?;
    let frame = read_csv(&cfg.data)?;
    if frame.rows() == 0 {
        return Err(CliError::data(format!("{} has no data rows", cfg.data.display())));
    }
    let design = build_design(&cfg, &frame)?;
    let model = builtin_model(&design.spec)?;
    for d in mddest::sample::validate_sample(&design.sample, Some(model.param_dim())) {
        let _ = writeln!(err, "warning: {d}");
    }
    let r = estimate(&cfg, &design, model.as_ref())?;
    let rep = report(&cfg, &design, &r);
    out.write_all(render(&rep, cfg.format).as_bytes())
        .map_err(|e| CliError::data(e.to_string()))?;
    if !r.converged {
        let _ = writeln!(err, "error: the optimizer did not converge; estimates are unreliable");
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(EXIT_OK)
}
