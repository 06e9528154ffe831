//! Command-line front end.
//!
//! Every output starts with `#` comment lines recording the schema version,
//! the full configuration and the truncation tail mass. CSV bodies follow
//! with a column header; `bell` emits a single JSON object instead. Output
//! is a pure function of the configuration: no timestamps, and the thread
//! count is not recorded.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bell::{BellModel, BellReport, BellSettings};
use crate::error::Error;
use crate::fockspace::{Gain, Truncation, DEFAULT_EPSILON, DEFAULT_MAX_SECTOR};
use crate::losses::{loss_grid, BetaPolicy, LossModel, VacuumConvention};
use crate::optimize::{optimal_angle_for, optimize_all_angles, scan_angles, scan_gain, GRID_POINTS};
use crate::preselect::FilterSpec;

pub const SCHEMA: &str = "v1";

#[derive(Debug, Parser)]
#[command(name = "singlet-bell", version, about = "CHSH-Bell parameter of amplified micro-macro polarization singlets")]
pub struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bell parameter at one gain, as a JSON report.
    Bell(BellArgs),
    /// Per-sector V_k, A_k, B_k and weights.
    Sectors(SectorsArgs),
    /// V, A and V + A over the analyzer angle.
    ScanAngle(ScanAngleArgs),
    /// Optimal angle and Bell parameter over a gain range.
    ScanGain(ScanGainArgs),
    /// Bell parameter of the corner-filtered state under photon loss.
    Losses(LossesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterKind {
    None,
    Corner,
    Mdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VacuumArg {
    OperatorAsWritten,
    AssignMinusOne,
}

impl From<VacuumArg> for VacuumConvention {
    fn from(v: VacuumArg) -> Self {
        match v {
            VacuumArg::OperatorAsWritten => VacuumConvention::OperatorAsWritten,
            VacuumArg::AssignMinusOne => VacuumConvention::AssignMinusOne,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "none")]
    pub filter: FilterKind,
    /// Filter threshold δ_th.
    #[arg(long = "delta-th", default_value_t = 0)]
    pub delta_th: u32,
    /// Tail-mass tolerance for sector truncation.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Hard cap on the sector index.
    #[arg(long = "max-sector", default_value_t = DEFAULT_MAX_SECTOR)]
    pub max_sector: usize,
}

impl ModelArgs {
    pub fn filter_spec(&self) -> FilterSpec {
        match self.filter {
            FilterKind::None => FilterSpec::None,
            FilterKind::Corner => FilterSpec::Corner(self.delta_th),
            FilterKind::Mdf => FilterSpec::Mdf(self.delta_th),
        }
    }

    pub fn truncation(&self) -> Result<Truncation, Error> {
        Truncation::new(self.epsilon, self.max_sector)
    }

    fn header(&self, h: &mut Header) {
        let f = self.filter_spec();
        h.push("filter", f.kind());
        h.push("delta_th", f.delta_th().map_or("none".to_string(), |d| d.to_string()));
        h.push("epsilon", num(self.epsilon));
        h.push("max_sector", self.max_sector);
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BellArgs {
    #[arg(long, default_value_t = 0.8, allow_hyphen_values = true)]
    pub g: f64,
    /// Analyzer angle β (radians, or tokens like `-pi/4`, `-0.17pi`); optimized when absent.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_angle)]
    pub angle: Option<f64>,
    /// Optimize all four CHSH angles instead of the standard family.
    #[arg(long = "all-angles")]
    pub all_angles: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SectorsArgs {
    #[arg(long, default_value_t = 0.8, allow_hyphen_values = true)]
    pub g: f64,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_angle)]
    pub angle: Option<f64>,
    /// Report sectors 0..=KMAX instead of the truncated range.
    #[arg(long)]
    pub kmax: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScanAngleArgs {
    #[arg(long, default_value_t = 0.8, allow_hyphen_values = true)]
    pub g: f64,
    #[arg(long, default_value_t = GRID_POINTS)]
    pub points: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScanGainArgs {
    #[arg(long = "g-min", default_value_t = 0.05, allow_hyphen_values = true)]
    pub g_min: f64,
    #[arg(long = "g-max", default_value_t = 1.5, allow_hyphen_values = true)]
    pub g_max: f64,
    #[arg(long, default_value_t = 30)]
    pub steps: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct LossesArgs {
    #[arg(long, default_value_t = 1.1, allow_hyphen_values = true)]
    pub g: f64,
    /// Micro-side loss values: a list `0,0.1` or a range `0:0.5:0.05`.
    #[arg(long = "lambda-a", value_parser = parse_lambda_list)]
    pub lambda_a: Option<LambdaList>,
    /// Macro-side loss values, same syntax.
    #[arg(long = "lambda-b", value_parser = parse_lambda_list)]
    pub lambda_b: Option<LambdaList>,
    /// Sweep any axis not given explicitly over [0, 1] with this step.
    #[arg(long)]
    pub grid: Option<f64>,
    #[arg(long = "vacuum-convention", value_enum, default_value = "operator-as-written")]
    pub vacuum_convention: VacuumArg,
    /// Keep β at the lossless optimum instead of re-optimizing per point.
    #[arg(long = "freeze-beta")]
    pub freeze_beta: bool,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long = "max-sector", default_value_t = DEFAULT_MAX_SECTOR)]
    pub max_sector: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaList(pub Vec<f64>);

/// Errors surfaced by the binary, each with its exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate filter: {0}")]
    Degenerate(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Capacity { .. } => CliError::Config(e.to_string()),
            Error::DegenerateFilter(_) | Error::UndefinedVisibility(_) | Error::NoOptimum => {
                CliError::Degenerate(e.to_string())
            }
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("i/o error: {e}"))
    }
}

/// Parses decimal radians or multiples of π: `pi/4`, `-pi/4`, `-0.17pi`, `0.5*pi`, `3pi/8`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let bad = || format!("invalid angle '{s}'");
    let value = match t.find("pi") {
        None => t.parse::<f64>().map_err(|_| bad())?,
        Some(i) => {
            let coef = t[..i].trim_end_matches('*');
            let coef = match coef {
                "" | "+" => 1.0,
                "-" => -1.0,
                c => c.parse::<f64>().map_err(|_| bad())?,
            };
            let rest = &t[i + 2..];
            let div = match rest {
                "" => 1.0,
                r => r
                    .strip_prefix('/')
                    .ok_or_else(bad)?
                    .parse::<f64>()
                    .map_err(|_| bad())?,
            };
            coef * std::f64::consts::PI / div
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

/// `a,b,c` or `start:stop:step` (stop included when hit within rounding).
pub fn parse_lambda_list(s: &str) -> Result<LambdaList, String> {
    let bad = || format!("invalid loss list '{s}'");
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, h) = (
                start.trim().parse::<f64>().map_err(|_| bad())?,
                stop.trim().parse::<f64>().map_err(|_| bad())?,
                step.trim().parse::<f64>().map_err(|_| bad())?,
            );
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
                return Err(format!("loss values must lie in [0, 1]: '{s}'"));
            }
            range_values(a, b, h).ok_or_else(bad)?
        }
        [_] => s
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(format!("loss values must lie in [0, 1]: '{s}'"));
    }
    Ok(LambdaList(values))
}

fn range_values(start: f64, stop: f64, step: f64) -> Option<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || stop < start {
        return None;
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    // Round to the step's decimal grid so 0.05 steps print as 0.15, not 0.15000000000000002.
    Some((0..=n).map(|i| round12(start + step * i as f64)).collect())
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Ordered `# key=value` comment lines.
#[derive(Default)]
struct Header {
    lines: Vec<(String, String)>,
}

impl Header {
    fn new(command: &str) -> Self {
        let mut h = Header::default();
        h.push("schema", SCHEMA);
        h.push("command", command);
        h
    }

    fn push(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    fn render(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
    }
}

fn csv(header: &Header, columns: &[&str], rows: &[Vec<f64>], int_cols: usize) -> String {
    let mut s = header.render();
    s.push_str(&columns.join(","));
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, &x)| if i < int_cols { format!("{}", x as i64) } else { num(x) })
            .collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// One sector row of the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorJson {
    pub k: usize,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub weight: f64,
}

/// The JSON body written by `bell`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellJson {
    pub g: f64,
    pub filter: String,
    pub delta_th: Option<u32>,
    pub beta_opt: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub per_sector: Vec<SectorJson>,
    pub tail_mass: f64,
}

impl From<&BellReport> for BellJson {
    fn from(r: &BellReport) -> Self {
        BellJson {
            g: r.gain.value(),
            filter: r.filter.kind().to_string(),
            delta_th: r.filter.delta_th(),
            beta_opt: r.angle_used,
            v: r.v_total,
            a: r.a_total,
            b: r.b_total,
            per_sector: r
                .per_sector
                .iter()
                .map(|s| SectorJson {
                    k: s.k,
                    v: s.v,
                    a: s.a,
                    b: s.b,
                    weight: s.weight,
                })
                .collect(),
            tail_mass: r.tail_mass,
        }
    }
}

impl BellJson {
    /// Reads a `bell` output, skipping the `#` header lines.
    pub fn from_output(text: &str) -> Result<Self, String> {
        let body: String = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n");
        serde_json::from_str(&body).map_err(|e| e.to_string())
    }

    /// Σ weight·V_k, Σ weight·A_k and 2(V + A) recomputed from the sector table.
    pub fn recomputed_totals(&self) -> (f64, f64, f64) {
        let (v, a) = self
            .per_sector
            .iter()
            .fold((0.0, 0.0), |(v, a), s| (v + s.weight * s.v, a + s.weight * s.a));
        (v, a, 2.0 * (v + a))
    }
}

fn gain(g: f64) -> Result<Gain, CliError> {
    Ok(Gain::new(g)?)
}

fn run_bell(args: &BellArgs) -> Result<String, CliError> {
    let trunc = args.model.truncation()?;
    let g = gain(args.g)?;
    let model = BellModel::new(g, args.model.filter_spec(), &trunc)?;
    let (settings, mode) = if args.all_angles {
        (optimize_all_angles(&model)?.settings, "all-angles")
    } else {
        let beta = match args.angle {
            Some(b) => b,
            None => optimal_angle_for(&model)?.beta_opt,
        };
        (BellSettings::standard(beta), if args.angle.is_some() { "fixed" } else { "optimized" })
    };
    let report = model.report(&settings)?;
    let mut h = Header::new("bell");
    h.push("g", num(args.g));
    args.model.header(&mut h);
    h.push("angle_mode", mode);
    h.push("alpha", num(settings.alpha));
    h.push("alpha_prime", num(settings.alpha_prime));
    h.push("beta", num(settings.beta));
    h.push("beta_prime", num(settings.beta_prime));
    h.push("tail_mass", num(report.tail_mass));
    h.push("success_probability", num(report.success_probability));
    h.push("B_four_term", num(report.b_four_term));
    h.push("B_abs", num(report.b_abs));
    match args.out.format.unwrap_or(Format::Json) {
        Format::Json => {
            let body = serde_json::to_string_pretty(&BellJson::from(&report))
                .map_err(|e| CliError::Other(e.to_string()))?;
            Ok(format!("{}{body}\n", h.render()))
        }
        Format::Csv => {
            let rows = vec![vec![args.g, settings.beta, report.v_total, report.a_total, report.b_total]];
            Ok(csv(&h, &["g", "beta_opt", "V", "A", "B"], &rows, 0))
        }
    }
}

fn sector_rows(args: &SectorsArgs) -> Result<(Header, Vec<Vec<f64>>, f64), CliError> {
    let trunc = args.model.truncation()?;
    let g = gain(args.g)?;
    let filter = args.model.filter_spec();
    let full = BellModel::new(g, filter, &trunc)?;
    let beta = match args.angle {
        Some(b) => b,
        None => optimal_angle_for(&full)?.beta_opt,
    };
    let model = match args.kmax {
        Some(k) => BellModel::with_sector_range(g, filter, k, trunc.epsilon())?,
        None => full,
    };
    let rows = model
        .sector_values(beta)
        .iter()
        .map(|s| vec![s.k as f64, s.v, s.a, s.b, s.weight])
        .collect();
    let mut h = Header::new("sectors");
    h.push("g", num(args.g));
    args.model.header(&mut h);
    h.push("angle", num(beta));
    h.push("angle_mode", if args.angle.is_some() { "fixed" } else { "optimized" });
    h.push("kmax", model.k_max());
    h.push("tail_mass", num(model.tail_mass()));
    Ok((h, rows, beta))
}

fn run_sectors(args: &SectorsArgs) -> Result<String, CliError> {
    let (h, rows, beta) = sector_rows(args)?;
    match args.out.format.unwrap_or(Format::Csv) {
        Format::Csv => Ok(csv(&h, &["k", "V_k", "A_k", "B_k", "weight"], &rows, 1)),
        Format::Json => {
            let per_sector: Vec<SectorJson> = rows
                .iter()
                .map(|r| SectorJson {
                    k: r[0] as usize,
                    v: r[1],
                    a: r[2],
                    b: r[3],
                    weight: r[4],
                })
                .collect();
            let body = serde_json::json!({ "angle": beta, "per_sector": per_sector });
            Ok(format!("{}{}\n", h.render(), serde_json::to_string_pretty(&body).map_err(|e| CliError::Other(e.to_string()))?))
        }
    }
}

fn table_output(h: &Header, columns: &[&str], rows: &[Vec<f64>], format: Format) -> Result<String, CliError> {
    match format {
        Format::Csv => Ok(csv(h, columns, rows, 0)),
        Format::Json => {
            let objs: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|r| {
                    columns
                        .iter()
                        .zip(r)
                        .map(|(c, v)| (c.to_string(), serde_json::json!(v)))
                        .collect()
                })
                .collect();
            let body = serde_json::to_string_pretty(&objs).map_err(|e| CliError::Other(e.to_string()))?;
            Ok(format!("{}{body}\n", h.render()))
        }
    }
}

fn run_scan_angle(args: &ScanAngleArgs) -> Result<String, CliError> {
    if args.points < 2 {
        return Err(CliError::Config(format!("--points must be at least 2, got {}", args.points)));
    }
    let trunc = args.model.truncation()?;
    let model = BellModel::new(gain(args.g)?, args.model.filter_spec(), &trunc)?;
    let rows: Vec<Vec<f64>> = scan_angles(&model, args.points)
        .iter()
        .map(|p| vec![p.beta, p.v, p.a, p.objective])
        .collect();
    let mut h = Header::new("scan-angle");
    h.push("g", num(args.g));
    args.model.header(&mut h);
    h.push("points", args.points);
    h.push("tail_mass", num(model.tail_mass()));
    table_output(&h, &["beta", "V", "A", "V_plus_A"], &rows, args.out.format.unwrap_or(Format::Csv))
}

fn run_scan_gain(args: &ScanGainArgs) -> Result<String, CliError> {
    let trunc = args.model.truncation()?;
    let table = scan_gain(args.g_min, args.g_max, args.steps, args.model.filter_spec(), &trunc)?;
    let tail = table.iter().map(|r| r.tail_mass).fold(0.0, f64::max);
    let rows: Vec<Vec<f64>> = table.iter().map(|r| vec![r.g, r.beta_opt, r.b]).collect();
    let mut h = Header::new("scan-gain");
    h.push("g_min", num(args.g_min));
    h.push("g_max", num(args.g_max));
    h.push("steps", args.steps);
    args.model.header(&mut h);
    h.push("tail_mass", num(tail));
    table_output(&h, &["g", "beta_opt", "B"], &rows, args.out.format.unwrap_or(Format::Csv))
}

fn run_losses(args: &LossesArgs) -> Result<String, CliError> {
    let trunc = Truncation::new(args.epsilon, args.max_sector)?;
    let axis = |given: &Option<LambdaList>| -> Result<Vec<f64>, CliError> {
        match (given, args.grid) {
            (Some(l), _) => Ok(l.0.clone()),
            (None, Some(step)) => range_values(0.0, 1.0, step)
                .ok_or_else(|| CliError::Config(format!("--grid step must be positive, got {step}"))),
            (None, None) => Ok(vec![0.0]),
        }
    };
    let la = axis(&args.lambda_a)?;
    let lb = axis(&args.lambda_b)?;
    let model = LossModel::new(gain(args.g)?, &trunc)?;
    let policy = if args.freeze_beta {
        BetaPolicy::Fixed(model.lossless_beta())
    } else {
        BetaPolicy::Reoptimize
    };
    let convention: VacuumConvention = args.vacuum_convention.into();
    let reports = loss_grid(&model, &la, &lb, convention, policy)?;
    let rows: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| vec![r.params.lambda_a(), r.params.lambda_b(), r.beta_used, r.b])
        .collect();
    let mut h = Header::new("losses");
    h.push("g", num(args.g));
    h.push("filter", "corner");
    h.push("delta_th", 0);
    h.push("epsilon", num(args.epsilon));
    h.push("max_sector", args.max_sector);
    h.push("vacuum_convention", convention);
    h.push("beta_policy", if args.freeze_beta { "frozen" } else { "reoptimized" });
    h.push("lossless_beta", num(model.lossless_beta()));
    h.push("lambda_a", join(&la));
    h.push("lambda_b", join(&lb));
    h.push("tail_mass", num(reports.first().map_or(0.0, |r| r.tail_mass)));
    table_output(
        &h,
        &["lambda_a", "lambda_b", "beta_used", "B"],
        &rows,
        args.out.format.unwrap_or(Format::Csv),
    )
}

fn join(xs: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push(';');
        }
        let _ = write!(s, "{}", num(*x));
    }
    s
}

fn output_target(cmd: &Command) -> Option<&PathBuf> {
    match cmd {
        Command::Bell(a) => a.out.output.as_ref(),
        Command::Sectors(a) => a.out.output.as_ref(),
        Command::ScanAngle(a) => a.out.output.as_ref(),
        Command::ScanGain(a) => a.out.output.as_ref(),
        Command::Losses(a) => a.out.output.as_ref(),
    }
}

/// Renders the command's output without writing it anywhere.
pub fn render(cmd: &Command) -> Result<String, CliError> {
    match cmd {
        Command::Bell(a) => run_bell(a),
        Command::Sectors(a) => run_sectors(a),
        Command::ScanAngle(a) => run_scan_angle(a),
        Command::ScanGain(a) => run_scan_gain(a),
        Command::Losses(a) => run_losses(a),
    }
}

/// Runs a parsed command line on a dedicated thread pool and writes the
/// result to `--output` or stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let text = pool.install(|| render(&cli.command))?;
    match output_target(&cli.command) {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}
