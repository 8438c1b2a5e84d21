//! The two approximation pipelines.
//!
//! High regime (`sp >= 1`): extend, mollify at scale `t`, then retract onto
//! the sphere from a sampled shift `ξ`. Low regime (`sp < 1`): Haar
//! projection, clamp into the tube, project, and smooth inside a
//! stereographic chart.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::grid::dist;
use crate::haar::{clamp_to_tube, haar_project, StepField};
use crate::manifold::{
    compose_field, stereographic_chart, winding_number, ManifoldTarget, NodeLoop, Retraction, RetractionPart, ALPHA,
};
use crate::mollify::{convolve, convolve_reflected, sphere_area, Stencil};
use crate::resample::{resample_scaled, restrict_centered};
use crate::seminorm::{check_exponent_relation, default_gn_exponents, gn_ratio, Seminorm};
use crate::{Grid, GridField, Result, SobolevParams, WspError};

/// How the field is continued past the cube before mollifying.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Extension {
    /// Even reflection across each face.
    Reflection,
    /// `u(x / (1 + 2γ))` by the nearest-node rule, with `γ` rounded up to a
    /// whole number of cells.
    Dilation,
}

/// Rule for picking `ξ_t` among the admissible sampled shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ShiftSelection {
    /// Smallest `d_{s,p}(κ_ξ ∘ (φ_t * u), u)`.
    MinDistance,
    /// Smallest `‖κ̱_ξ ∘ (φ_t * u)‖_{W^{s,p}}`.
    MinScore,
}

macro_rules! token_enum {
    ($ty:ty, $($variant:path => $tok:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $tok),+ })
            }
        }

        impl FromStr for $ty {
            type Err = WspError;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($tok => Ok($variant),)+
                    _ => Err(WspError::InvalidParameter(format!("unknown {} '{s}'", stringify!($ty)))),
                }
            }
        }
    };
}

token_enum!(Extension, Extension::Reflection => "reflection", Extension::Dilation => "dilation");
token_enum!(ShiftSelection, ShiftSelection::MinDistance => "min-distance", ShiftSelection::MinScore => "min-score");

pub const DEFAULT_SHIFTS: usize = 64;
pub const MIN_SHIFTS: usize = 16;
pub const EPS_SING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighRegimeConfig {
    pub t: f64,
    pub gamma: f64,
    pub n_shifts: usize,
    pub seed: u64,
    pub eps_sing: f64,
    pub q: f64,
    pub r: f64,
    pub extension: Extension,
    pub selection: ShiftSelection,
}

fn high_gate(params: &SobolevParams) -> Result<()> {
    if !params.is_high_regime() {
        return Err(WspError::Regime(format!("the high-regime pipeline requires sp >= 1 (got sp = {})", params.sp())));
    }
    Ok(())
}

fn low_gate(params: &SobolevParams) -> Result<()> {
    if params.is_high_regime() {
        return Err(WspError::Regime(format!("the low-regime pipeline requires sp < 1 (got sp = {})", params.sp())));
    }
    Ok(())
}

impl HighRegimeConfig {
    /// Defaults: `γ = t`, 64 shifts, seed 0, reflection, minimum distance,
    /// and the default interpolation exponents.
    pub fn new(params: &SobolevParams, t: f64) -> Result<Self> {
        high_gate(params)?;
        let (q, r) = default_gn_exponents(params)?;
        Ok(Self {
            t,
            gamma: t,
            n_shifts: DEFAULT_SHIFTS,
            seed: 0,
            eps_sing: EPS_SING,
            q,
            r,
            extension: Extension::Reflection,
            selection: ShiftSelection::MinDistance,
        })
    }

    /// Sets `q` and derives `r` from `1/p = (1-s)/r + s/q`.
    pub fn with_q(mut self, params: &SobolevParams, q: f64) -> Result<Self> {
        let denom = 1.0 / params.p - params.s / q;
        if !(denom > 0.0) {
            return Err(WspError::ExponentRelation(format!("no finite r for q = {q}")));
        }
        self.q = q;
        self.r = (1.0 - params.s) / denom;
        Ok(self)
    }

    pub fn validate(&self, params: &SobolevParams) -> Result<()> {
        high_gate(params)?;
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(WspError::InvalidParameter(format!("t = {} must be > 0", self.t)));
        }
        if !(self.gamma >= self.t) {
            return Err(WspError::InvalidParameter(format!("gamma = {} must be >= t = {}", self.gamma, self.t)));
        }
        if self.n_shifts < MIN_SHIFTS {
            return Err(WspError::InvalidParameter(format!("need at least {MIN_SHIFTS} shifts, got {}", self.n_shifts)));
        }
        if !(self.eps_sing > 0.0) {
            return Err(WspError::InvalidParameter("eps_sing must be > 0".into()));
        }
        let sp = params.sp();
        let cap = (params.floor_sp() + 1) as f64;
        if !(self.q >= sp && self.q < cap) {
            return Err(WspError::ExponentRelation(format!("need sp = {sp} <= q < {cap}, got q = {}", self.q)));
        }
        check_exponent_relation(params, self.q, self.r)
    }
}

/// `φ_t * u` on the grid of `u`, after continuing `u` past the cube.
/// Returns the field and the margin actually used, in domain units.
pub fn mollify_extended(u: &GridField, t: f64, gamma: f64, extension: Extension) -> Result<(GridField, f64)> {
    let g = *u.grid();
    match extension {
        Extension::Reflection => {
            let st = Stencil::new(&g, t)?;
            Ok((convolve_reflected(u, t)?, st.margin as f64 * g.h()))
        }
        Extension::Dilation => {
            let st = Stencil::new(&g, t)?;
            // (1 + 2γ) R = R + k h  <=>  k = γ N
            let k = (gamma * g.n as f64 - 1e-9).ceil().max(0.0) as usize;
            if k < st.margin {
                return Err(WspError::InvalidParameter(format!(
                    "gamma = {gamma} gives {k} extension cells, fewer than the kernel margin {}",
                    st.margin
                )));
            }
            let gamma_eff = k as f64 / g.n as f64;
            let big = Grid::new(g.m, g.n + 2 * k, g.half_width * (1.0 + 2.0 * gamma_eff))?;
            let ext = resample_scaled(u, gamma_eff, big)?;
            let smooth = convolve(&ext, t)?;
            let out = restrict_centered(&smooth, g.n)?;
            Ok((GridField::new(g, u.nu(), out.into_values())?, 2.0 * gamma_eff * g.half_width))
        }
    }
}

/// Uniform samples in the ball `B_α^ν`, by rejection from the cube.
pub fn sample_shifts(nu: usize, count: usize, alpha: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let xi: Vec<f64> = (0..nu).map(|_| rng.random_range(-alpha..alpha)).collect();
        if xi.iter().map(|v| v * v).sum::<f64>() < alpha * alpha {
            out.push(xi);
        }
    }
    out
}

/// `|B_α^ν|`.
pub fn ball_volume(nu: usize, alpha: f64) -> f64 {
    sphere_area(nu) / nu as f64 * alpha.powi(nu as i32)
}

fn min_clearance(f: &GridField, xi: &[f64]) -> f64 {
    f.nodes().map(|y| dist(y, xi)).fold(f64::INFINITY, f64::min)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.total_cmp(y);
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftStats {
    /// `ξ = 0` plus the sampled shifts.
    pub candidates: usize,
    pub rejected: usize,
    pub score_min: f64,
    pub score_mean: f64,
    pub score_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HighReport {
    pub t: f64,
    /// Extension margin used, in domain units.
    pub margin: f64,
    pub xi: Vec<f64>,
    /// `d_{s,p}(output, u)`.
    pub distance: f64,
    /// `‖κ̱_ξ ∘ (φ_t * u)‖_{W^{s,p}}`.
    pub t1: f64,
    /// `‖κ̄_ξ ∘ (φ_t * u) - κ̄_ξ ∘ u‖_{W^{s,p}}`.
    pub t2: f64,
    /// `‖κ_ξ ∘ u - u‖_{W^{s,p}}`.
    pub t3: f64,
    pub shifts: ShiftStats,
    /// Nodes with `|φ_t * u - u| >= α`.
    pub exceptional: usize,
    /// Measured interpolation ratio for `φ_t * u - u`.
    pub gn_ratio: Option<f64>,
    /// Degree on the boundary ring, for circle-valued maps on `m = 2`.
    pub winding: Option<i64>,
    /// `max | |v| - 1 |` over output nodes.
    pub norm_defect: f64,
}

impl HighReport {
    /// `(stage, quantity, value)` rows.
    pub fn rows(&self) -> Vec<(String, String, f64)> {
        let mut r = vec![
            row("mollify", "t", self.t),
            row("mollify", "margin", self.margin),
            row("mollify", "exceptional_nodes", self.exceptional as f64),
            row("shifts", "candidates", self.shifts.candidates as f64),
            row("shifts", "rejected", self.shifts.rejected as f64),
            row("shifts", "score_min", self.shifts.score_min),
            row("shifts", "score_mean", self.shifts.score_mean),
            row("shifts", "score_max", self.shifts.score_max),
        ];
        for (c, v) in self.xi.iter().enumerate() {
            r.push(row("shifts", &format!("xi_{c}"), *v));
        }
        r.extend([
            row("retract", "T1", self.t1),
            row("retract", "T2", self.t2),
            row("retract", "T3", self.t3),
            row("output", "distance", self.distance),
            row("output", "norm_defect", self.norm_defect),
        ]);
        if let Some(g) = self.gn_ratio {
            r.push(row("mollify", "gn_ratio", g));
        }
        if let Some(w) = self.winding {
            r.push(row("output", "winding", w as f64));
        }
        r
    }
}

fn row(stage: &str, quantity: &str, value: f64) -> (String, String, f64) {
    (stage.to_string(), quantity.to_string(), value)
}

fn boundary_winding(v: &GridField) -> Option<i64> {
    if v.grid().m == 2 && v.nu() == 2 && v.grid().n >= 2 {
        winding_number(v, &NodeLoop::boundary(v.grid().n)).ok()
    } else {
        None
    }
}

fn norm_defect(v: &GridField) -> f64 {
    v.node_norms().iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max)
}

fn check_target(u: &GridField, target: &ManifoldTarget, params: &SobolevParams) -> Result<()> {
    if u.grid().m != params.m {
        return Err(WspError::DimensionMismatch(format!("field m = {} vs params m = {}", u.grid().m, params.m)));
    }
    target.check_field(u)
}

/// Admissible shifts: `ξ = 0` followed by the seeded samples, minus those
/// within `eps_sing` of a value of `f`.
fn admissible_shifts(f: &GridField, cfg: &HighRegimeConfig) -> (Vec<Vec<f64>>, usize) {
    let mut all = vec![vec![0.0; f.nu()]];
    all.extend(sample_shifts(f.nu(), cfg.n_shifts, ALPHA, cfg.seed));
    let total = all.len();
    let kept: Vec<Vec<f64>> = all.into_iter().filter(|xi| min_clearance(f, xi) >= cfg.eps_sing).collect();
    let rejected = total - kept.len();
    (kept, rejected)
}

fn near_scores(ev: &Seminorm, f: &GridField, shifts: &[Vec<f64>]) -> Result<Vec<f64>> {
    shifts
        .par_iter()
        .map(|xi| {
            let near = compose_field(f, &Retraction::new(xi.clone()).with_part(RetractionPart::Near))?;
            ev.sparse_wsp_norm(&near)
        })
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .collect()
}

pub fn approximate_high(
    u: &GridField,
    target: &ManifoldTarget,
    cfg: &HighRegimeConfig,
    params: &SobolevParams,
) -> Result<(GridField, HighReport)> {
    cfg.validate(params)?;
    check_target(u, target, params)?;
    let ev = Seminorm::new(*u.grid(), *params)?;
    let (f, margin) = mollify_extended(u, cfg.t, cfg.gamma, cfg.extension)?;

    let (shifts, rejected) = admissible_shifts(&f, cfg);
    if shifts.is_empty() {
        return Err(WspError::DegenerateField);
    }
    let scores = near_scores(&ev, &f, &shifts)?;
    let metric: Vec<f64> = match cfg.selection {
        ShiftSelection::MinScore => scores.clone(),
        ShiftSelection::MinDistance => shifts
            .iter()
            .map(|xi| ev.distance(&compose_field(&f, &Retraction::new(xi.clone()))?, u))
            .collect::<Result<_>>()?,
    };
    let best = (0..shifts.len())
        .min_by(|&a, &b| metric[a].total_cmp(&metric[b]).then_with(|| lex_cmp(&shifts[a], &shifts[b])))
        .expect("at least one admissible shift");
    let xi = shifts[best].clone();
    let kappa = Retraction::new(xi.clone());
    let out = compose_field(&f, &kappa)?;

    let far = kappa.with_part(RetractionPart::Far);
    let distance = match cfg.selection {
        ShiftSelection::MinDistance => metric[best],
        ShiftSelection::MinScore => ev.distance(&out, u)?,
    };
    let t2 = ev.distance(&compose_field(&f, &far)?, &compose_field(u, &far)?)?;
    let t3 = ev.distance(&compose_field(u, &kappa)?, u)?;
    let exceptional = (0..u.node_count()).filter(|&i| dist(f.value(i), u.value(i)) >= ALPHA).count();
    let gn = match f.sub(u) {
        Ok(w) => gn_ratio(&w, params, cfg.q, cfg.r).ok(),
        Err(_) => None,
    };
    let n = scores.len() as f64;
    let report = HighReport {
        t: cfg.t,
        margin,
        xi,
        distance,
        t1: scores[best],
        t2,
        t3,
        shifts: ShiftStats {
            candidates: cfg.n_shifts + 1,
            rejected,
            score_min: scores.iter().copied().fold(f64::INFINITY, f64::min),
            score_mean: scores.iter().sum::<f64>() / n,
            score_max: scores.iter().copied().fold(0.0, f64::max),
        },
        exceptional,
        gn_ratio: gn,
        winding: boundary_winding(&out),
        norm_defect: norm_defect(&out),
    };
    Ok((out, report))
}

/// `∫_{B_α} ‖κ̱_ξ ∘ (φ_t * u)‖^p dξ` by Monte Carlo against
/// `∫_{|φ_t * u - u| >= α} (D^{s,p}u)^p`.
#[derive(Debug, Clone, Serialize)]
pub struct Claim8Audit {
    pub t: f64,
    pub lhs_mc: f64,
    pub rhs: f64,
    pub samples: usize,
    pub exceptional: usize,
}

impl Claim8Audit {
    pub fn ratio(&self) -> Option<f64> {
        (self.rhs > 0.0).then(|| self.lhs_mc / self.rhs)
    }
}

pub fn audit_claim8(
    u: &GridField,
    target: &ManifoldTarget,
    cfg: &HighRegimeConfig,
    params: &SobolevParams,
) -> Result<Claim8Audit> {
    cfg.validate(params)?;
    check_target(u, target, params)?;
    let ev = Seminorm::new(*u.grid(), *params)?;
    let (f, _) = mollify_extended(u, cfg.t, cfg.gamma, cfg.extension)?;
    let shifts: Vec<Vec<f64>> = sample_shifts(u.nu(), cfg.n_shifts, ALPHA, cfg.seed)
        .into_iter()
        .filter(|xi| min_clearance(&f, xi) >= cfg.eps_sing)
        .collect();
    if shifts.is_empty() {
        return Err(WspError::DegenerateField);
    }
    let scores = near_scores(&ev, &f, &shifts)?;
    let mean_p = scores.iter().map(|s| s.powf(params.p)).sum::<f64>() / scores.len() as f64;
    let lhs_mc = ball_volume(u.nu(), ALPHA) * mean_p;
    let exceptional: Vec<usize> = (0..u.node_count()).filter(|&i| dist(f.value(i), u.value(i)) >= ALPHA).collect();
    let rhs = if exceptional.is_empty() {
        0.0
    } else {
        let dsp = ev.dsp_field(u)?;
        crate::sum::neumaier_sum(exceptional.iter().map(|&i| dsp.density_p[i])) * u.grid().cell_volume()
    };
    Ok(Claim8Audit { t: cfg.t, lhs_mc, rhs, samples: shifts.len(), exceptional: exceptional.len() })
}

#[derive(Debug, Clone, Serialize)]
pub struct LowReport {
    pub j: u32,
    pub t_chart: f64,
    /// `d_{s,p}(output, u)`.
    pub distance: f64,
    /// `d_{s,p}(E_j u, u)`.
    pub d_haar: f64,
    /// `d_{s,p}(u_j, u)` after clamping.
    pub d_clamped: f64,
    /// `d_{s,p}(Π ∘ u_j, u)`.
    pub d_projected: f64,
    /// `d_{s,p}(output, Π ∘ u_j)`.
    pub d_smoothing: f64,
    pub clamped_cubes: usize,
    pub distinct_values: usize,
    pub pole: Vec<f64>,
    pub winding: Option<i64>,
    pub norm_defect: f64,
}

impl LowReport {
    pub fn rows(&self) -> Vec<(String, String, f64)> {
        let mut r = vec![
            row("haar", "j", self.j as f64),
            row("haar", "distance", self.d_haar),
            row("clamp", "clamped_cubes", self.clamped_cubes as f64),
            row("clamp", "distance", self.d_clamped),
            row("project", "distance", self.d_projected),
            row("chart", "distinct_values", self.distinct_values as f64),
        ];
        for (c, v) in self.pole.iter().enumerate() {
            r.push(row("chart", &format!("pole_{c}"), *v));
        }
        r.extend([
            row("smooth", "t_chart", self.t_chart),
            row("smooth", "distance", self.d_smoothing),
            row("output", "distance", self.distance),
            row("output", "norm_defect", self.norm_defect),
        ]);
        if let Some(w) = self.winding {
            r.push(row("output", "winding", w as f64));
        }
        r
    }
}

/// Per-cube projection onto the sphere.
fn project_steps(e: &StepField, target: &ManifoldTarget) -> Result<StepField> {
    let nu = e.field.nu();
    let mut vals = Vec::with_capacity(e.cube_values.len());
    for c in 0..e.cubication.cube_count() {
        vals.extend(target.project(e.cube_value(c))?);
    }
    let g = *e.field.grid();
    let values: Vec<f64> = (0..g.node_count())
        .flat_map(|i| {
            let c = e.cubication.cube_of(i);
            vals[c * nu..(c + 1) * nu].to_vec()
        })
        .collect();
    Ok(StepField { field: GridField::new(g, nu, values)?, cubication: e.cubication, cube_values: vals })
}

pub fn approximate_low(
    u: &GridField,
    target: &ManifoldTarget,
    j: u32,
    b: &[f64],
    t_chart: f64,
    params: &SobolevParams,
    extension: Extension,
) -> Result<(GridField, LowReport)> {
    low_gate(params)?;
    check_target(u, target, params)?;
    let ev = Seminorm::new(*u.grid(), *params)?;
    let e = haar_project(u, j)?;
    let (uj, clamped) = clamp_to_tube(&e, target, b)?;
    let w = project_steps(&uj, target)?;

    let nu = w.field.nu();
    let mut distinct: Vec<Vec<f64>> = w.cube_values.chunks_exact(nu).map(|c| c.to_vec()).collect();
    distinct.sort_by(|a, c| lex_cmp(a, c));
    distinct.dedup();
    let chart = stereographic_chart(&distinct)?;

    let z_cubes: Vec<Vec<f64>> = (0..w.cubication.cube_count()).map(|c| chart.forward(w.cube_value(c))).collect();
    let k = chart.dim();
    let g = *u.grid();
    let z = GridField::new(g, k, (0..g.node_count()).flat_map(|i| z_cubes[w.cubication.cube_of(i)].clone()).collect())?;
    let (zs, _) = mollify_extended(&z, t_chart, t_chart, extension)?;
    let out = GridField::new(g, nu, zs.nodes().flat_map(|zi| chart.inverse(zi)).collect())?;

    let report = LowReport {
        j,
        t_chart,
        distance: ev.distance(&out, u)?,
        d_haar: ev.distance(&e.field, u)?,
        d_clamped: ev.distance(&uj.field, u)?,
        d_projected: ev.distance(&w.field, u)?,
        d_smoothing: ev.distance(&out, &w.field)?,
        clamped_cubes: clamped.iter().filter(|&&c| c).count(),
        distinct_values: distinct.len(),
        pole: chart.pole.clone(),
        winding: boundary_winding(&out),
        norm_defect: norm_defect(&out),
    };
    Ok((out, report))
}
