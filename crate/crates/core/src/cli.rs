//! Command-line front end. Every report is one JSON object holding the result
//! fields plus `command`, `version` and the resolved `config`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::estimation::{
    corr_estimate, excess_estimate, fit_tail, survivor_estimate, KnownConstants, SampleMatrix,
};
use crate::harness::{run_scenario, scenario_names};
use crate::io::{parse_csv_rows, parse_vector, read_matrix, write_csv_rows};
use crate::kotz::{KotzModel, KotzParams};
use crate::limits::{
    conditional_profile, excess_limit, excess_survivor, hr_cdf, HrParams, ProfileMode,
};
use crate::linalg::{CorrelationSpec, IndexSet};
use crate::qp;
use crate::tail::{marginal_tail, marginal_tail_params, tail_asymptotic, TailRequest};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Directory for reports (and `sample` tables) when `--out` is not given.
pub const OUT_DIR_ENV: &str = "KOTZ_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "kotz",
    version,
    about = "Tail asymptotics and limit laws for Kotz Type III elliptical vectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimal index set of the quadratic program min xᵀΣ⁻¹x subject to x ≥ a.
    Qp(QpArgs),
    /// Exact tail asymptotics of P(X > t a + x).
    Tail(TailArgs),
    /// Tail asymptotics of a single margin, P(X_1 > t).
    MarginalTail(MarginalArgs),
    /// Limit law of the scaled excesses given X > t a.
    Excess(ExcessArgs),
    /// Location, scale and limiting law of X_J given a large X_I.
    Profile(ProfileArgs),
    /// Hüsler-Reiss triangular-array parameters and distribution function.
    Hr(HrArgs),
    /// Draws a sample; writes CSV and a JSON sidecar.
    Sample(SampleArgs),
    /// Fits marginal tail constants and correlation from a CSV sample.
    Estimate(EstimateArgs),
    /// Runs validation scenarios.
    Validate(ValidateArgs),
}

#[derive(Debug, Args, Serialize)]
struct SigmaArg {
    /// Correlation matrix file (CSV or JSON 2-D array).
    #[arg(long)]
    sigma: PathBuf,
    /// Skip one header line in CSV inputs.
    #[arg(long)]
    #[serde(skip)]
    header: bool,
}

impl SigmaArg {
    fn load(&self) -> Result<CorrelationSpec> {
        CorrelationSpec::factorize(read_matrix(&self.sigma, self.header)?)
    }
}

#[derive(Debug, Args, Serialize)]
struct ParamArgs {
    /// Standard Gaussian constants for the dimension.
    #[arg(long, conflicts_with_all = ["p", "q", "delta", "exponent"])]
    gaussian: bool,
    /// Tail constant p; defaults to the canonical value induced by (q, δ, N).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Polynomial exponent N.
    #[arg(long = "N", default_value_t = 0.0)]
    #[serde(rename = "N")]
    exponent: f64,
}

impl ParamArgs {
    fn resolve(&self, k: usize) -> Result<KotzParams> {
        if self.gaussian {
            return KotzParams::gaussian(k);
        }
        let q = self
            .q
            .ok_or_else(|| Error::ConditionViolated("--q is required unless --gaussian".into()))?;
        let delta = self.delta.ok_or_else(|| {
            Error::ConditionViolated("--delta is required unless --gaussian".into())
        })?;
        match self.p {
            Some(p) => KotzParams::new(p, q, delta, self.exponent),
            None => KotzParams::canonical(q, delta, self.exponent),
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct OutArg {
    /// Output file; defaults to stdout, or to the directory in KOTZ_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct QpArgs {
    #[command(flatten)]
    #[serde(flatten)]
    sigma: SigmaArg,
    /// Threshold direction, comma separated or a file.
    #[arg(long, allow_hyphen_values = true)]
    a: String,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArg,
}

#[derive(Debug, Args, Serialize)]
struct TailArgs {
    #[command(flatten)]
    #[serde(flatten)]
    sigma: SigmaArg,
    #[command(flatten)]
    #[serde(flatten)]
    params: ParamArgs,
    #[arg(long, allow_hyphen_values = true)]
    a: String,
    /// Second-order offset x.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    #[arg(long)]
    t: f64,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArg,
}

#[derive(Debug, Args, Serialize)]
struct MarginalArgs {
    /// Dimension of the vector.
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    #[serde(flatten)]
    params: ParamArgs,
    #[arg(long)]
    t: f64,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArg,
}

#[derive(Debug, Args, Serialize)]
struct ExcessArgs {
    #[command(flatten)]
    #[serde(flatten)]
    sigma: SigmaArg,
    #[arg(long, allow_hyphen_values = true)]
    a: String,
    /// Evaluation point for P(W_L > x), listed in the order of L.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Subset L (1-based, comma separated); defaults to all coordinates.
    #[arg(long)]
    subset: Option<String>,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArg,
}

#[derive(Debug, Args, Serialize)]
struct ProfileArgs {
    #[command(flatten)]
    #[serde(flatten)]
    sigma: SigmaArg,
    #[command(flatten)]
    #[serde(flatten)]
    params: ParamArgs,
    #[arg(long, allow_hyphen_values = true)]
    a: String,
    /// Conditioning set I (1-based, comma separated).
    #[arg(long)]
    index: String,
    #[arg(long)]
    t: f64,
    /// Only require a_I ≠ 0 instead of Σ_II⁻¹ a_I > 0.
    #[arg(long)]
    relaxed: bool,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArg,
}

#[derive(Debug, Args, Serialize)]
struct HrArgs {
    #[command(flatten)]
    #[serde(flatten)]
    params: ParamArgs,
    /// Dependence parameter γ > 0.
    #[arg(long)]
    gamma: f64,
    /// Block size n.
    #[arg(long)]
    n: f64,
    /// Optional point (x, y) at which to evaluate the limit distribution.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y: Option<f64>,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArg,
}

#[derive(Debug, Args, Serialize)]
struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    sigma: SigmaArg,
    #[command(flatten)]
    #[serde(flatten)]
    params: ParamArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; the sidecar goes to `<out>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EstimateArgs {
    /// CSV sample, one vector per row.
    sample: PathBuf,
    #[arg(long)]
    header: bool,
    /// Coordinate (1-based) used for the marginal fit.
    #[arg(long, default_value_t = 1)]
    coord: usize,
    #[arg(long)]
    kn: Option<usize>,
    #[arg(long = "Tn")]
    #[serde(rename = "Tn")]
    tn: Option<f64>,
    /// Known tail constant p, needed for plug-in probabilities.
    #[arg(long)]
    p: Option<f64>,
    /// Known polynomial exponent N.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    exponent: Option<f64>,
    /// Threshold for the plug-in probabilities.
    #[arg(long)]
    t: Option<f64>,
    /// Excess point for the plug-in conditional probability.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArg,
}

#[derive(Debug, Args, Serialize)]
struct ValidateArgs {
    /// Scenario name, repeatable; `all` runs every scenario.
    #[arg(long, required = true)]
    scenario: Vec<String>,
    /// Overrides every scenario's default seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArg,
}

fn parse_index(arg: &str, dim: usize) -> Result<IndexSet> {
    let members = arg
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    IndexSet::new(members, dim)
}

fn config_of<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

/// Merges the result fields with command, version and config.
fn envelope(command: &str, config: Value, result: Value) -> Value {
    let mut map = match result {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other);
            m
        }
    };
    map.insert("command".into(), Value::from(command));
    map.insert("version".into(), Value::from(VERSION));
    map.insert("config".into(), config);
    Value::Object(map)
}

fn emit(report: &Value, out: Option<&Path>, command: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    let target = match out {
        Some(p) => Some(p.to_path_buf()),
        None => {
            std::env::var_os(OUT_DIR_ENV).map(|d| PathBuf::from(d).join(format!("{command}.json")))
        }
    };
    match target {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn run_qp(args: &QpArgs) -> Result<Value> {
    let spec = args.sigma.load()?;
    let a = parse_vector(&args.a)?;
    let sol = qp::solve(&spec, &a)?;
    let kkt = qp::verify_kkt(&spec, &a, &sol);
    let mut result = to_value(&sol)?;
    result["kkt"] = to_value(&kkt)?;
    Ok(result)
}

fn run_tail(args: &TailArgs) -> Result<Value> {
    let spec = args.sigma.load()?;
    let params = args.params.resolve(spec.dim())?;
    let a = parse_vector(&args.a)?;
    let x = args.x.as_deref().map(parse_vector).transpose()?;
    let model = KotzModel::new(params, spec);
    let exp = tail_asymptotic(&TailRequest {
        model: &model,
        a: &a,
        x: x.as_deref(),
        t: args.t,
    })?;
    let mut result = to_value(&exp)?;
    result["params"] = to_value(&params)?;
    Ok(result)
}

fn run_marginal(args: &MarginalArgs) -> Result<Value> {
    let params = args.params.resolve(args.k)?;
    let margin = marginal_tail_params(&params, args.k)?;
    let value = marginal_tail(&params, args.k, args.t)?;
    Ok(json!({
        "params": params,
        "marginal_params": margin,
        "t": args.t,
        "value": value,
        "log10_value": value.log10(),
    }))
}

fn run_excess(args: &ExcessArgs) -> Result<Value> {
    let spec = args.sigma.load()?;
    let a = parse_vector(&args.a)?;
    let law = excess_limit(&spec, &a)?;
    let mut result = to_value(&law)?;
    if let Some(x) = &args.x {
        let x = parse_vector(x)?;
        let subset = match &args.subset {
            Some(s) => parse_index(s, spec.dim())?,
            None => IndexSet::full(spec.dim()),
        };
        result["survivor"] = to_value(&excess_survivor(&law, &subset, &x)?)?;
    }
    Ok(result)
}

fn run_profile(args: &ProfileArgs) -> Result<Value> {
    let spec = args.sigma.load()?;
    let params = args.params.resolve(spec.dim())?;
    let a = parse_vector(&args.a)?;
    let index = parse_index(&args.index, spec.dim())?;
    let mode = if args.relaxed {
        ProfileMode::Relaxed
    } else {
        ProfileMode::Strict
    };
    let prof = conditional_profile(&spec, &a, &index, &params, args.t, mode)?;
    let mut result = to_value(&prof)?;
    result["mode"] = to_value(&mode)?;
    Ok(result)
}

fn run_hr(args: &HrArgs) -> Result<Value> {
    // the margins of a bivariate vector carry the 2-dimensional marginal constants
    let params = args.params.resolve(2)?;
    let margin = marginal_tail_params(&params, 2)?;
    let hr = HrParams::new(args.gamma, &margin, args.n)?;
    let mut result = to_value(&hr)?;
    result["marginal_params"] = to_value(&margin)?;
    match (args.x, args.y) {
        (Some(x), Some(y)) => result["cdf"] = Value::from(hr_cdf(x, y, args.gamma)?),
        (None, None) => {}
        _ => {
            return Err(Error::ConditionViolated(
                "--x and --y must be given together".into(),
            ))
        }
    }
    Ok(result)
}

fn sidecar_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

fn run_sample(args: &SampleArgs) -> Result<(Value, Option<PathBuf>)> {
    let spec = args.sigma.load()?;
    let params = args.params.resolve(spec.dim())?;
    let k = spec.dim();
    let csv = match &args.out {
        Some(p) => p.clone(),
        None => match std::env::var_os(OUT_DIR_ENV) {
            Some(d) => PathBuf::from(d).join("sample.csv"),
            None => {
                return Err(Error::ConditionViolated(
                    "sample needs --out or KOTZ_OUT_DIR".into(),
                ))
            }
        },
    };
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let samples = KotzModel::new(params, spec.clone()).sample(args.n, args.seed)?;
    write_csv_rows(&csv, k, samples.rows())?;
    let sidecar = sidecar_path(&csv);
    let result = json!({
        "samples": csv,
        "n": args.n,
        "k": k,
        "seed": args.seed,
        "params": params,
        "sigma_matrix": crate::io::matrix_rows(spec.sigma()),
    });
    Ok((result, Some(sidecar)))
}

fn run_estimate(args: &EstimateArgs) -> Result<Value> {
    let text = fs::read_to_string(&args.sample)
        .map_err(|e| Error::Io(format!("{}: {e}", args.sample.display())))?;
    let sample = SampleMatrix::from_rows(&parse_csv_rows(&text, args.header)?)?;
    let fit = fit_tail(&sample, args.coord, args.kn, args.tn)?;
    let corr = corr_estimate(&sample)?;
    let mut result = json!({
        "n": sample.n(),
        "k": sample.k(),
        "fit": fit,
        "correlation": crate::io::matrix_rows(corr.sigma()),
    });
    let sidecar = sidecar_path(&args.sample);
    if let Ok(side) = fs::read_to_string(&sidecar) {
        let side: Value = serde_json::from_str(&side)?;
        result["sample_seed"] = side.get("seed").cloned().unwrap_or(Value::Null);
        result["sample_report"] = side;
    }
    match (args.p, args.exponent, args.t) {
        (Some(p), Some(exponent), Some(t)) => {
            let known = KnownConstants { p, exponent };
            result["survivor"] = to_value(&survivor_estimate(&fit, &corr, &known, t)?)?;
            if let Some(x) = &args.x {
                let x = parse_vector(x)?;
                result["excess"] = to_value(&excess_estimate(&fit, &corr, &known, t, &x)?)?;
            }
        }
        (None, None, None) if args.x.is_none() => {}
        _ => {
            return Err(Error::ConditionViolated(
                "plug-in probabilities need --p, --N and --t".into(),
            ))
        }
    }
    Ok(result)
}

fn run_validate(args: &ValidateArgs) -> Result<(Value, bool)> {
    let mut names: Vec<String> = Vec::new();
    for s in &args.scenario {
        if s == "all" {
            names.extend(scenario_names().into_iter().map(String::from));
        } else {
            names.push(s.clone());
        }
    }
    let mut reports = Vec::new();
    let mut all_pass = true;
    for name in &names {
        let report = run_scenario(name, args.seed)?;
        all_pass &= report.pass;
        reports.push(to_value(&report)?);
    }
    Ok((json!({ "reports": reports, "pass": all_pass }), all_pass))
}

fn dispatch(cli: Cli) -> Result<i32> {
    let (name, config, result, out, code) = match &cli.command {
        Command::Qp(a) => ("qp", config_of(a), run_qp(a)?, a.out.out.clone(), EXIT_OK),
        Command::Tail(a) => (
            "tail",
            config_of(a),
            run_tail(a)?,
            a.out.out.clone(),
            EXIT_OK,
        ),
        Command::MarginalTail(a) => (
            "marginal-tail",
            config_of(a),
            run_marginal(a)?,
            a.out.out.clone(),
            EXIT_OK,
        ),
        Command::Excess(a) => (
            "excess",
            config_of(a),
            run_excess(a)?,
            a.out.out.clone(),
            EXIT_OK,
        ),
        Command::Profile(a) => (
            "profile",
            config_of(a),
            run_profile(a)?,
            a.out.out.clone(),
            EXIT_OK,
        ),
        Command::Hr(a) => ("hr", config_of(a), run_hr(a)?, a.out.out.clone(), EXIT_OK),
        Command::Sample(a) => {
            let (result, sidecar) = run_sample(a)?;
            let report = envelope("sample", config_of(a), result);
            if let Some(path) = &sidecar {
                emit(&report, Some(path), "sample")?;
            }
            // the sidecar is the report; echo it on stdout as well
            print!("{}", serde_json::to_string_pretty(&report)? + "\n");
            return Ok(EXIT_OK);
        }
        Command::Estimate(a) => (
            "estimate",
            config_of(a),
            run_estimate(a)?,
            a.out.out.clone(),
            EXIT_OK,
        ),
        Command::Validate(a) => {
            let (result, pass) = run_validate(a)?;
            (
                "validate",
                config_of(a),
                result,
                a.out.out.clone(),
                if pass { EXIT_OK } else { EXIT_VALIDATION },
            )
        }
    };
    emit(&envelope(name, config, result), out.as_deref(), name)?;
    Ok(code)
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
