//! Composition with a Lipschitz map: continuous in `W^{s,p}` but not
//! uniformly so. Oscillating pairs `v_j`, `u_j = v_j + ξ` stay a constant
//! distance apart while `[κ∘u_j - κ∘v_j]` grows with `j`.

use serde::Serialize;

use crate::manifold::{compose_field, PointMap};
use crate::seminorm::{lp_norm, Seminorm};
use crate::{Grid, GridField, Result, SobolevParams, WspError};

fn psi(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// `C^∞` step from 0 at `t <= 0` to 1 at `t >= 1`.
pub fn smooth_step(t: f64) -> f64 {
    let a = psi(t);
    let b = psi(1.0 - t);
    a / (a + b)
}

/// 1 on `[a, b]`, 0 outside `(a - w, b + w)`, smooth in between.
pub fn plateau(x: f64, a: f64, b: f64, w: f64) -> f64 {
    smooth_step((x - (a - w)) / w) * smooth_step((b + w - x) / w)
}

/// Tensor-product bump on `Q^m` with the value `sigma` on one slab and
/// `tau` on another, both of positive measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlateauBump {
    pub sigma: f64,
    pub sigma_range: (f64, f64),
    pub tau: f64,
    pub tau_range: (f64, f64),
    pub ramp: f64,
    /// Plateau of the transverse factor in the other coordinates.
    pub transverse: f64,
}

impl Default for PlateauBump {
    fn default() -> Self {
        Self { sigma: -0.5, sigma_range: (-0.65, -0.25), tau: 0.5, tau_range: (0.25, 0.65), ramp: 0.15, transverse: 0.8 }
    }
}

impl PlateauBump {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let w = self.ramp;
        let (a, b) = self.sigma_range;
        let (c, d) = self.tau_range;
        let first = self.sigma * plateau(x[0], a, b, w) + self.tau * plateau(x[0], c, d, w);
        x[1..].iter().fold(first, |acc, &y| acc * plateau(y, -self.transverse, self.transverse, w))
    }

    /// `φ̄(j x)`, with `φ̄` the 2-periodic extension of the bump.
    pub fn periodic(&self, x: &[f64], j: f64) -> f64 {
        let y: Vec<f64> = x.iter().map(|&v| (j * v + 1.0).rem_euclid(2.0) - 1.0).collect();
        self.eval(&y)
    }
}

#[derive(Debug, Clone)]
pub struct OscillationFamily {
    pub j: u32,
    pub xi: Vec<f64>,
    pub v: GridField,
    pub u: GridField,
    /// Fractions of nodes where `v` sits exactly on the `sigma` and `tau`
    /// plateaus.
    pub plateau_fractions: (f64, f64),
}

/// Nodes per oscillation period required by [`build_family`].
pub const NODES_PER_PERIOD: usize = 32;
pub const MIN_PLATEAU_FRACTION: f64 = 0.05;

/// `v_j = φ̄(j x) e_1` and `u_j = v_j + ξ`, with `ν = ξ.len()`.
pub fn build_family(bump: &PlateauBump, j: u32, xi: &[f64], grid: Grid) -> Result<OscillationFamily> {
    if j == 0 {
        return Err(WspError::InvalidParameter("frequency j must be >= 1".into()));
    }
    if xi.is_empty() {
        return Err(WspError::InvalidParameter("shift xi must have at least one component".into()));
    }
    let required = NODES_PER_PERIOD * j as usize;
    if grid.n < required {
        return Err(WspError::Resolution { n: grid.n, required });
    }
    let nu = xi.len();
    let jf = j as f64;
    let v = GridField::from_fn(grid, nu, |x, o| {
        o.fill(0.0);
        o[0] = bump.periodic(x, jf);
    })?;
    let u = v.shift(xi)?;
    let count = |target: f64| v.nodes().filter(|y| y[0] == target).count() as f64 / v.node_count() as f64;
    let plateau_fractions = (count(bump.sigma), count(bump.tau));
    if plateau_fractions.0 < MIN_PLATEAU_FRACTION || plateau_fractions.1 < MIN_PLATEAU_FRACTION {
        return Err(WspError::InvalidParameter(format!(
            "plateau node fractions {plateau_fractions:?} fall below {MIN_PLATEAU_FRACTION}"
        )));
    }
    Ok(OscillationFamily { j, xi: xi.to_vec(), v, u, plateau_fractions })
}

/// Requires `κ(τ+ξ) - κ(τ) != κ(σ+ξ) - κ(σ)`, which fails for affine `κ`.
pub fn check_witness(bump: &PlateauBump, xi: &[f64], kappa: &dyn PointMap) -> Result<f64> {
    let nu = xi.len();
    let point = |c: f64, shifted: bool| {
        let mut y = vec![0.0; nu];
        y[0] = c;
        if shifted {
            y.iter_mut().zip(xi).for_each(|(a, b)| *a += b);
        }
        y
    };
    let eval = |y: Vec<f64>| -> Result<Vec<f64>> {
        let mut out = vec![0.0; kappa.out_dim(nu)];
        kappa.apply(&y, &mut out)?;
        Ok(out)
    };
    let d_tau: Vec<f64> = eval(point(bump.tau, true))?.iter().zip(eval(point(bump.tau, false))?).map(|(a, b)| a - b).collect();
    let d_sigma: Vec<f64> =
        eval(point(bump.sigma, true))?.iter().zip(eval(point(bump.sigma, false))?).map(|(a, b)| a - b).collect();
    let gap = d_tau.iter().zip(&d_sigma).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if gap <= 1e-12 {
        return Err(WspError::AffineWitness(format!(
            "kappa(tau+xi)-kappa(tau) = {d_tau:?} equals kappa(sigma+xi)-kappa(sigma) = {d_sigma:?}"
        )));
    }
    Ok(gap)
}

#[derive(Debug, Clone, Serialize)]
pub struct NonuniformRow {
    pub j: u32,
    /// `[κ∘u_j - κ∘v_j]`.
    pub seminorm: f64,
    /// `‖u_j - v_j‖_{W^{s,p}}`.
    pub wsp_diff: f64,
    /// `‖u_j - v_j‖_{L^p}`.
    pub lp_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonuniformDemo {
    pub rows: Vec<NonuniformRow>,
    /// Least-squares slope of `log seminorm` against `log j`.
    pub slope: f64,
    pub witness_gap: f64,
}

pub fn nonuniform_demo(
    bump: &PlateauBump,
    js: &[u32],
    xi: &[f64],
    kappa: &dyn PointMap,
    params: &SobolevParams,
    grid: Grid,
) -> Result<NonuniformDemo> {
    if grid.m != params.m {
        return Err(WspError::DimensionMismatch(format!("grid m = {} vs params m = {}", grid.m, params.m)));
    }
    let witness_gap = check_witness(bump, xi, kappa)?;
    let ev = Seminorm::new(grid, *params)?;
    let mut rows = Vec::with_capacity(js.len());
    for &j in js {
        let fam = build_family(bump, j, xi, grid)?;
        let a = compose_field(&fam.u, kappa)?;
        let b = compose_field(&fam.v, kappa)?;
        let seminorm = ev.gagliardo(&a.sub(&b)?, None)?.seminorm;
        let diff = fam.u.sub(&fam.v)?;
        rows.push(NonuniformRow { j, seminorm, wsp_diff: ev.wsp_norm(&diff)?, lp_diff: lp_norm(&diff, params.p) });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.j as f64).ln(), r.seminorm.ln())).collect();
    Ok(NonuniformDemo { slope: fit_slope(&pts), rows, witness_gap })
}

/// Ordinary least-squares slope.
pub fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityRow {
    pub k: usize,
    /// `[κ∘u - κ∘v_k]`.
    pub composed: f64,
    /// `‖u - v_k‖_{W^{s,p}}`.
    pub distance: f64,
}

pub fn continuity_demo(
    u: &GridField,
    kappa: &dyn PointMap,
    perturbations: &[GridField],
    params: &SobolevParams,
) -> Result<Vec<ContinuityRow>> {
    let ev = Seminorm::new(*u.grid(), *params)?;
    let ku = compose_field(u, kappa)?;
    perturbations
        .iter()
        .enumerate()
        .map(|(k, v)| {
            u.check_compatible(v)?;
            let kv = compose_field(v, kappa)?;
            Ok(ContinuityRow {
                k,
                composed: ev.gagliardo(&ku.sub(&kv)?, None)?.seminorm,
                distance: ev.distance(u, v)?,
            })
        })
        .collect()
}

/// `v_k = u + 2^{-k} w` for `k` in `ks`.
pub fn geometric_perturbations(u: &GridField, w: &GridField, ks: impl IntoIterator<Item = i32>) -> Result<Vec<GridField>> {
    ks.into_iter().map(|k| u.add(&w.scale(2f64.powi(-k))?)).collect()
}

/// Default pair for the continuity sweep: `u = sin(π x_0)`, which changes
/// sign, and the smooth direction `w = cos(2 x_0) + 1/2`.
pub fn continuity_fields(grid: Grid) -> Result<(GridField, GridField)> {
    let u = GridField::from_fn(grid, 1, |x, o| o[0] = (std::f64::consts::PI * x[0]).sin())?;
    let w = GridField::from_fn(grid, 1, |x, o| o[0] = (2.0 * x[0]).cos() + 0.5)?;
    Ok((u, w))
}
