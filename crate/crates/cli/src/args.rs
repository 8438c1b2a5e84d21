use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use wsp_core::manifold::ManifoldTarget;
use wsp_core::pipeline::{Extension, ShiftSelection};

#[derive(Debug, Parser, Serialize)]
#[command(name = "wsp", version, about = "Fractional Sobolev approximation of sphere-valued maps", arg_required_else_help = true)]
pub struct Cli {
    /// Worker threads; WSP_WORKERS takes precedence.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Directory for manifest.json and CSV reports.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Gagliardo seminorm of a field, optionally restricted to a region.
    Seminorm(SeminormArgs),
    /// Mollify a field, optionally auditing the pointwise estimates.
    Mollify(MollifyArgs),
    /// Haar projection tables over one or more levels.
    Haar(HaarArgs),
    /// Shift-averaged retraction pipeline (sp >= 1).
    ApproxHigh(HighArgs),
    /// Step clamping and chart smoothing pipeline (sp < 1).
    ApproxLow(LowArgs),
    /// Composition operator sweeps.
    Counterexample(CounterexampleArgs),
    /// Winding number of a circle-valued field on every centred ring.
    Obstruction(ObstructionArgs),
    /// Run the acceptance suite and write a pass/fail bundle.
    Report(ReportArgs),
    /// Write a named fixture field.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SeminormArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub s: f64,
    #[arg(long)]
    pub p: f64,
    /// Scalar field file on the same grid; nonzero nodes form the region.
    #[arg(long)]
    pub region: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MollifyArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub t: f64,
    /// Dilate by `gamma >= t` first so the output covers the whole cube.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Audit the pointwise estimates with exponents `s,p`.
    #[arg(long, value_parser = parse_pair)]
    pub audit: Option<(f64, f64)>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClampSpec {
    pub target: ManifoldTarget,
    pub b: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct HaarArgs {
    #[arg(long)]
    pub field: PathBuf,
    /// One level or a comma-separated list.
    #[arg(long, value_delimiter = ',', required = true)]
    pub j: Vec<u32>,
    /// Seminorm audit with exponents `s,p` (requires sp < 1).
    #[arg(long, value_parser = parse_pair)]
    pub audit: Option<(f64, f64)>,
    /// `manifold,iota,b_0,b_1,...`: clamp cube values outside the tube.
    #[arg(long, value_parser = parse_clamp)]
    pub clamp: Option<ClampSpec>,
    /// Write `E_j v` at the last level here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtensionArg {
    Reflection,
    Dilation,
}

impl From<ExtensionArg> for Extension {
    fn from(e: ExtensionArg) -> Self {
        match e {
            ExtensionArg::Reflection => Extension::Reflection,
            ExtensionArg::Dilation => Extension::Dilation,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionArg {
    MinDistance,
    MinScore,
}

impl From<SelectionArg> for ShiftSelection {
    fn from(e: SelectionArg) -> Self {
        match e {
            SelectionArg::MinDistance => ShiftSelection::MinDistance,
            SelectionArg::MinScore => ShiftSelection::MinScore,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct HighArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub s: f64,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub t: f64,
    /// Extension width; defaults to `t`.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = wsp_core::pipeline::DEFAULT_SHIFTS)]
    pub shifts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "circle", value_parser = parse_target)]
    pub manifold: ManifoldTarget,
    /// Interpolation exponent; `r` follows from the exponent relation.
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, value_enum, default_value = "reflection")]
    pub extension: ExtensionArg,
    #[arg(long, value_enum, default_value = "min-distance")]
    pub selection: SelectionArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct LowArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub s: f64,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub j: u32,
    /// Clamp point on the manifold, comma-separated.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub b: Vec<f64>,
    #[arg(long, default_value = "circle", value_parser = parse_target)]
    pub manifold: ManifoldTarget,
    /// Chart mollifier scale; defaults to `2^-j`.
    #[arg(long)]
    pub t_chart: Option<f64>,
    #[arg(long, value_enum, default_value = "reflection")]
    pub extension: ExtensionArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Nonuniform,
    Continuity,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaArg {
    Abs,
    Identity,
}

#[derive(Debug, Args, Serialize)]
pub struct CounterexampleArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long)]
    pub s: f64,
    #[arg(long)]
    pub p: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub j_list: Vec<u32>,
    /// Shift, comma-separated (one component per target dimension).
    #[arg(long, value_delimiter = ',', default_value = "0.3", allow_negative_numbers = true)]
    pub xi: Vec<f64>,
    #[arg(long = "N", default_value_t = 512)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    #[arg(long, value_enum, default_value = "abs")]
    pub kappa: KappaArg,
    /// Last `k` in the continuity sweep `u + 2^-k w`.
    #[arg(long, default_value_t = 14)]
    pub k_max: i32,
}

#[derive(Debug, Args, Serialize)]
pub struct ObstructionArgs {
    #[arg(long)]
    pub field: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Acceptance,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long, value_enum, default_value = "acceptance")]
    pub suite: Suite,
    /// Bundle directory (also receives the manifest).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker count for the determinism comparison run.
    #[arg(long, default_value_t = 8)]
    pub compare_workers: usize,
    /// Exit 1 when any criterion fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct FixtureArgs {
    /// constant, linear, bump, vortex, equator-vortex, step-random,
    /// oscillation or smooth-circle.
    pub name: String,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long = "N", default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok((
            a.trim().parse().map_err(|_| format!("'{a}' is not a number"))?,
            b.trim().parse().map_err(|_| format!("'{b}' is not a number"))?,
        )),
        _ => Err(format!("expected 's,p', got '{s}'")),
    }
}

fn parse_target(s: &str) -> Result<ManifoldTarget, String> {
    s.parse().map_err(|e: wsp_core::WspError| e.to_string())
}

fn parse_clamp(s: &str) -> Result<ClampSpec, String> {
    let mut parts = s.split(',');
    let mut target = parse_target(parts.next().unwrap_or_default())?;
    let iota = parts.next().ok_or("expected 'manifold,iota,b...'")?;
    target.iota = iota.trim().parse().map_err(|_| format!("'{iota}' is not a number"))?;
    let b = parts
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("'{x}' is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if b.is_empty() {
        return Err("missing clamp point b".into());
    }
    Ok(ClampSpec { target, b })
}
