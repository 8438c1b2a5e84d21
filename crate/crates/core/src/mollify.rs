//! The mollifier `φ`, discrete convolution with `φ_t`, its analytic
//! gradient, and audits of the pointwise estimates against `D^{s,p}u`.

use rayon::prelude::*;
use serde::Serialize;

use crate::resample::extend_reflect;
use crate::seminorm::{DspField, Seminorm};
use crate::sum::Neumaier;
use crate::{Grid, GridField, Result, SobolevParams, WspError};

/// `ρ(r) = exp(-1/(1-r^2))` for `r < 1`, zero otherwise.
pub fn profile(r: f64) -> f64 {
    if r < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// `Γ(k/2)` for a positive integer `k`.
fn gamma_half(k: usize) -> f64 {
    let (mut g, mut x) = if k % 2 == 0 { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
    while x < k as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface area of the unit sphere `S^{m-1}`.
pub fn sphere_area(m: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(m as f64 / 2.0) / gamma_half(m)
}

/// The radially symmetric mollifier `φ = c ρ(|x|)` on `R^m`, with `c` such
/// that `∫ φ = 1` in the continuum.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Mollifier {
    pub m: usize,
    pub c: f64,
}

impl Mollifier {
    pub fn new(m: usize) -> Self {
        // Composite Simpson on [0, 1]; the integrand is flat to all orders
        // at r = 1, so this converges very quickly.
        let n = 20_000;
        let h = 1.0 / n as f64;
        let f = |r: f64| r.powi(m as i32 - 1) * profile(r);
        let mut acc = Neumaier::new();
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc.add(w * f(i as f64 * h));
        }
        let radial = acc.total() * h / 3.0;
        Self { m, c: 1.0 / (sphere_area(m) * radial) }
    }

    pub fn phi(&self, z: &[f64]) -> f64 {
        self.c * profile(crate::grid::norm(z))
    }

    /// `φ_t(z) = t^{-m} φ(z/t)`.
    pub fn phi_t(&self, z: &[f64], t: f64) -> f64 {
        let r = crate::grid::norm(z) / t;
        self.c * profile(r) / t.powi(self.m as i32)
    }

    /// `∇φ_t(z) = c t^{-m-1} (∇ρ)(z/t)`, with
    /// `∇ρ(y) = -2 y ρ(y) / (1 - |y|^2)^2`.
    pub fn grad_phi_t(&self, z: &[f64], t: f64, out: &mut [f64]) {
        let y2: f64 = z.iter().map(|v| (v / t) * (v / t)).sum();
        if y2 >= 1.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let one = 1.0 - y2;
        let factor = self.c / t.powi(self.m as i32 + 1) * (-1.0 / one).exp() * (-2.0 / (one * one));
        for (o, v) in out.iter_mut().zip(z) {
            *o = factor * v / t;
        }
    }
}

/// Discrete `φ_t` on a grid: offsets with `|o h| < t`, their normalised
/// weights, and the gradient weights.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub t: f64,
    /// Nodes dropped on each side of every axis by [`convolve`].
    pub margin: usize,
    pub offsets: Vec<Vec<isize>>,
    /// Nonnegative weights `ρ(|o h|/t) / Σ ρ`.
    pub weights: Vec<f64>,
    /// `∇φ_t(-o h) h^m`, `m` entries per offset.
    pub grad: Vec<f64>,
}

impl Stencil {
    pub fn new(grid: &Grid, t: f64) -> Result<Self> {
        let h = grid.h();
        if !(t.is_finite() && t >= 2.0 * h * (1.0 - 1e-12)) {
            return Err(WspError::UnderResolvedKernel { t, two_h: 2.0 * h });
        }
        if t > grid.half_width * (1.0 + 1e-12) {
            return Err(WspError::KernelTooWide { t, half_width: grid.half_width });
        }
        let m = grid.m;
        let reach = (t / h).ceil() as isize;
        let side = (2 * reach + 1) as usize;
        let moll = Mollifier::new(m);
        let mut offsets = Vec::new();
        let mut raw = Vec::new();
        let mut grad = Vec::new();
        let mut o = vec![0isize; m];
        let mut z = vec![0.0; m];
        let mut gz = vec![0.0; m];
        let hm = grid.cell_volume();
        for flat in 0..side.pow(m as u32) {
            let mut rest = flat;
            for d in (0..m).rev() {
                o[d] = (rest % side) as isize - reach;
                rest /= side;
            }
            for d in 0..m {
                z[d] = o[d] as f64 * h;
            }
            let r = crate::grid::norm(&z);
            if r >= t {
                continue;
            }
            offsets.push(o.clone());
            raw.push(profile(r / t));
            // D(φ_t * u)(x_i) = Σ_o ∇φ_t(-o h) u(x_i + o h) h^m
            let neg: Vec<f64> = z.iter().map(|v| -v).collect();
            moll.grad_phi_t(&neg, t, &mut gz);
            grad.extend(gz.iter().map(|g| g * hm));
        }
        let mut total = Neumaier::new();
        raw.iter().for_each(|&w| total.add(w));
        let s = total.total();
        let weights = raw.iter().map(|w| w / s).collect();
        let margin = (0..grid.n).filter(|&i| (i as f64 + 0.5) * h <= t).count();
        if 2 * margin >= grid.n {
            return Err(WspError::KernelTooWide { t, half_width: grid.half_width });
        }
        Ok(Self { t, margin, offsets, weights, grad })
    }

    /// Output grid of [`convolve`]: the nodes farther than `t` from the
    /// boundary.
    pub fn output_grid(&self, grid: &Grid) -> Result<Grid> {
        Grid::new(grid.m, grid.n - 2 * self.margin, grid.half_width - self.margin as f64 * grid.h())
    }

    fn flat_offsets(&self, grid: &Grid) -> Vec<isize> {
        let n = grid.n as isize;
        self.offsets.iter().map(|o| o.iter().fold(0isize, |acc, &x| acc * n + x)).collect()
    }
}

/// Input flat index of every output node of a stencil.
fn interior_nodes(grid: &Grid, out: &Grid, margin: usize) -> Vec<usize> {
    let mut idx = vec![0; grid.m];
    (0..out.node_count())
        .map(|j| {
            out.multi_index(j, &mut idx);
            idx.iter_mut().for_each(|x| *x += margin);
            grid.flat_index(&idx)
        })
        .collect()
}

fn apply(u: &GridField, st: &Stencil) -> Result<GridField> {
    let g = *u.grid();
    let out = st.output_grid(&g)?;
    let nu = u.nu();
    let flat = st.flat_offsets(&g);
    let centres = interior_nodes(&g, &out, st.margin);
    let vals: Vec<f64> = centres
        .par_iter()
        .flat_map_iter(|&i| {
            let ui = u.value(i);
            let mut acc = vec![0.0; nu];
            for (&df, &w) in flat.iter().zip(&st.weights) {
                let uk = u.value((i as isize + df) as usize);
                for c in 0..nu {
                    acc[c] += w * (uk[c] - ui[c]);
                }
            }
            acc.into_iter().zip(ui).map(|(a, b)| b + a)
        })
        .collect();
    GridField::new(out, nu, vals)
}

fn apply_grad(u: &GridField, st: &Stencil) -> Result<GridField> {
    let g = *u.grid();
    let m = g.m;
    let out = st.output_grid(&g)?;
    let nu = u.nu();
    let flat = st.flat_offsets(&g);
    let centres = interior_nodes(&g, &out, st.margin);
    let vals: Vec<f64> = centres
        .par_iter()
        .flat_map_iter(|&i| {
            let ui = u.value(i);
            let mut acc = vec![0.0; nu * m];
            for (k, &df) in flat.iter().enumerate() {
                let gk = &st.grad[k * m..(k + 1) * m];
                let uk = u.value((i as isize + df) as usize);
                for c in 0..nu {
                    let diff = uk[c] - ui[c];
                    for d in 0..m {
                        acc[c * m + d] += gk[d] * diff;
                    }
                }
            }
            acc
        })
        .collect();
    GridField::new(out, nu * m, vals)
}

/// `φ_t * u` on the nodes farther than `t` from the boundary, as
/// `u_i + Σ_o w_o (u_{i+o} - u_i)`, so constants are reproduced exactly.
pub fn convolve(u: &GridField, t: f64) -> Result<GridField> {
    apply(u, &Stencil::new(u.grid(), t)?)
}

/// `D(φ_t * u)` on the same nodes as [`convolve`], from the analytic kernel
/// gradient with the weight-sum defect removed (zero on constants).
/// Component `c*m + d` is `∂_d (φ_t * u_c)`.
pub fn grad_convolve(u: &GridField, t: f64) -> Result<GridField> {
    apply_grad(u, &Stencil::new(u.grid(), t)?)
}

/// Reflects `u` across the faces by the stencil margin, convolves, and
/// returns `φ_t * u` on the original grid.
pub fn convolve_reflected(u: &GridField, t: f64) -> Result<GridField> {
    let st = Stencil::new(u.grid(), t)?;
    let ext = extend_reflect(u, st.margin)?;
    let st_ext = Stencil::new(ext.grid(), t)?;
    let v = apply(&ext, &st_ext)?;
    debug_assert_eq!(v.grid().n, u.grid().n);
    GridField::new(*u.grid(), u.nu(), v.into_values())
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioStats {
    pub max: f64,
    pub p99: f64,
}

impl RatioStats {
    fn from(mut xs: Vec<f64>) -> Self {
        if xs.is_empty() {
            return Self { max: 0.0, p99: 0.0 };
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        let k = ((0.99 * xs.len() as f64).ceil() as usize).clamp(1, xs.len()) - 1;
        Self { max: xs[xs.len() - 1], p99: xs[k] }
    }
}

/// Node-wise ratios `|φ_t*u - u| / (t^s D^{s,p}u)` and
/// `|D(φ_t*u)| / (t^{s-1} D^{s,p}u)` over the interior nodes.
#[derive(Debug, Clone, Serialize)]
pub struct Lemma4Report {
    pub t: f64,
    pub ratio_i: RatioStats,
    pub ratio_ii: RatioStats,
    /// Interior nodes with `D^{s,p}u >= 1e-14`.
    pub unmasked: usize,
    pub interior: usize,
    /// No unmasked node (e.g. `u` constant).
    pub degenerate: bool,
}

/// Nodes where `D^{s,p}u` is below this are excluded from the ratios.
pub const DSP_MASK: f64 = 1e-14;

pub fn audit_lemma4(u: &GridField, params: &SobolevParams, t: f64) -> Result<Lemma4Report> {
    let dsp = Seminorm::new(*u.grid(), *params)?.dsp_field(u)?;
    audit_lemma4_with(u, &dsp, params, t)
}

/// [`audit_lemma4`] with a precomputed `D^{s,p}u`, for sweeps over `t`.
pub fn audit_lemma4_with(u: &GridField, dsp: &DspField, params: &SobolevParams, t: f64) -> Result<Lemma4Report> {
    if !dsp.d.grid().same_as(u.grid()) {
        return Err(WspError::GridMismatch("D^{s,p}u computed on another grid".into()));
    }
    let g = *u.grid();
    let st = Stencil::new(&g, t)?;
    let conv = apply(u, &st)?;
    let grad = apply_grad(u, &st)?;
    let centres = interior_nodes(&g, conv.grid(), st.margin);
    let ts = t.powf(params.s);
    let ts1 = t.powf(params.s - 1.0);
    let mut r1 = Vec::new();
    let mut r2 = Vec::new();
    for (j, &i) in centres.iter().enumerate() {
        let d = dsp.d.value(i)[0];
        if d < DSP_MASK {
            continue;
        }
        let num1 = crate::grid::dist(conv.value(j), u.value(i));
        let num2 = crate::grid::norm(grad.value(j));
        r1.push(num1 / (ts * d));
        r2.push(num2 / (ts1 * d));
    }
    let unmasked = r1.len();
    Ok(Lemma4Report {
        t,
        ratio_i: RatioStats::from(r1),
        ratio_ii: RatioStats::from(r2),
        unmasked,
        interior: centres.len(),
        degenerate: unmasked == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalisation_matches_direct_integration() {
        // ∫_{-1}^{1} exp(-1/(1-x^2)) dx by a fine midpoint rule.
        let n = 200_000;
        let h = 2.0 / n as f64;
        let i1: f64 = (0..n).map(|k| profile((-1.0 + (k as f64 + 0.5) * h).abs()) * h).sum();
        assert!((Mollifier::new(1).c - 1.0 / i1).abs() < 1e-9);
        // m = 2: the continuum mass of φ over a fine grid is 1.
        let g = Grid::unit(2, 800).unwrap();
        let moll = Mollifier::new(2);
        let mut x = [0.0; 2];
        let mass: f64 = (0..g.node_count())
            .map(|i| {
                g.node_coords(i, &mut x);
                moll.phi(&x)
            })
            .sum::<f64>()
            * g.cell_volume();
        assert!((mass - 1.0).abs() < 1e-6);
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((sphere_area(2) - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(sphere_area(1), 2.0);
    }

    #[test]
    fn rejects_bad_scales() {
        let g = Grid::unit(1, 16).unwrap();
        let u = GridField::constant(g, &[1.0]).unwrap();
        assert!(matches!(convolve(&u, 0.1), Err(WspError::UnderResolvedKernel { .. })));
        assert!(matches!(convolve(&u, 1.5), Err(WspError::KernelTooWide { .. })));
        assert!(convolve(&u, 0.25).is_ok());
    }

    #[test]
    fn constants_are_preserved_exactly() {
        let g = Grid::unit(2, 32).unwrap();
        let u = GridField::constant(g, &[0.1, -7.3]).unwrap();
        for t in [0.125, 0.2, 0.5] {
            let v = convolve(&u, t).unwrap();
            assert!(v.nodes().all(|y| y == [0.1, -7.3]));
            let dv = grad_convolve(&u, t).unwrap();
            assert!(dv.values().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn output_is_the_interior() {
        let g = Grid::unit(1, 16).unwrap();
        let u = GridField::constant(g, &[1.0]).unwrap();
        let v = convolve(&u, 0.25).unwrap();
        // nodes at |x| < 1 - 0.25 survive: x = ±0.0625 .. ±0.6875
        assert_eq!(v.grid().n, 12);
        assert!((v.grid().coord(0) + 0.6875).abs() < 1e-15);
    }

    #[test]
    fn affine_fields_are_fixed_in_the_interior() {
        let g = Grid::unit(2, 32).unwrap();
        let u = GridField::from_fn(g, 1, |x, o| o[0] = 0.3 * x[0] - 1.2 * x[1] + 0.5).unwrap();
        let v = convolve(&u, 0.25).unwrap();
        let mut x = [0.0; 2];
        for j in 0..v.node_count() {
            v.grid().node_coords(j, &mut x);
            let exact = 0.3 * x[0] - 1.2 * x[1] + 0.5;
            assert!((v.value(j)[0] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn smooths_a_sign_only_near_the_jump() {
        let g = Grid::unit(1, 256).unwrap();
        let u = GridField::from_fn(g, 1, |x, o| o[0] = x[0].signum()).unwrap();
        let t = 0.25;
        let v = convolve(&u, t).unwrap();
        let st = Stencil::new(&g, t).unwrap();
        for j in 0..v.node_count() {
            let x = v.grid().coord(j);
            // direct summation oracle
            let i = j + st.margin;
            let direct: f64 = st
                .offsets
                .iter()
                .zip(&st.weights)
                .map(|(o, w)| w * u.value((i as isize + o[0]) as usize)[0])
                .sum();
            assert!((v.value(j)[0] - direct).abs() < 1e-13);
            // Partners within one cell of the support edge carry weights
            // below the f64 resolution, hence the `t - h` band.
            if x.abs() < t - g.h() {
                assert!(v.value(j)[0].abs() < 1.0);
            } else if x.abs() < t {
                assert!(v.value(j)[0].abs() <= 1.0);
            } else {
                assert_eq!(v.value(j)[0], x.signum());
            }
        }
    }

    #[test]
    fn gradient_of_affine_field() {
        let g = Grid::unit(2, 256).unwrap();
        let a = [0.7, -1.3];
        let u = GridField::from_fn(g, 1, |x, o| o[0] = a[0] * x[0] + a[1] * x[1]).unwrap();
        let du = grad_convolve(&u, 0.25).unwrap();
        for y in du.nodes() {
            assert!((y[0] - a[0]).abs() < 0.01 * a[0].abs());
            assert!((y[1] - a[1]).abs() < 0.01 * a[1].abs());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = Grid::unit(1, 512).unwrap();
        let u = GridField::from_fn(g, 1, |x, o| o[0] = (2.0 * x[0]).sin() + x[0] * x[0]).unwrap();
        let t = 0.2;
        let v = convolve(&u, t).unwrap();
        let dv = grad_convolve(&u, t).unwrap();
        let h = g.h();
        let mut worst: f64 = 0.0;
        for j in 1..v.node_count() - 1 {
            let fd = (v.value(j + 1)[0] - v.value(j - 1)[0]) / (2.0 * h);
            worst = worst.max((fd - dv.value(j)[0]).abs());
        }
        assert!(worst < 20.0 * h * h, "worst = {worst}");
    }

    #[test]
    fn reflected_convolution_keeps_the_grid() {
        let g = Grid::unit(2, 32).unwrap();
        let u = GridField::from_fn(g, 2, |x, o| {
            o[0] = x[0];
            o[1] = x[1].cos();
        })
        .unwrap();
        let v = convolve_reflected(&u, 0.125).unwrap();
        assert!(v.grid().same_as(&g));
    }

    #[test]
    fn constant_lemma4_is_degenerate() {
        let g = Grid::unit(2, 16).unwrap();
        let u = GridField::constant(g, &[1.0]).unwrap();
        let params = SobolevParams::new(0.5, 2.0, 2).unwrap();
        let r = audit_lemma4(&u, &params, 0.25).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.ratio_i.max, 0.0);
        assert_eq!(r.ratio_ii.max, 0.0);
    }

    /// For a field with a jump the pointwise ratios stay within a fixed band
    /// as `t` shrinks, in both directions.
    #[test]
    fn lemma4_ratios_flat_for_an_indicator() {
        let g = Grid::unit(2, 64).unwrap();
        let u = GridField::from_fn(g, 1, |x, o| o[0] = if x[0] * x[0] + x[1] * x[1] < 0.25 { 1.0 } else { 0.0 }).unwrap();
        let params = SobolevParams::new(0.5, 2.0, 2).unwrap();
        let dsp = Seminorm::new(g, params).unwrap().dsp_field(&u).unwrap();
        let reps: Vec<_> = [0.25, 0.125, 0.0625].iter().map(|&t| audit_lemma4_with(&u, &dsp, &params, t).unwrap()).collect();
        for pick in [|r: &Lemma4Report| r.ratio_i.max, |r: &Lemma4Report| r.ratio_ii.max] {
            let v: Vec<f64> = reps.iter().map(pick).collect();
            let hi = v.iter().cloned().fold(f64::MIN, f64::max);
            let lo = v.iter().cloned().fold(f64::MAX, f64::min);
            assert!(hi / lo < 2.0, "{v:?}");
        }
    }

    /// For a smooth field the ratios decay with `t`, so they stay below their
    /// value at the coarsest scale.
    #[test]
    fn lemma4_ratios_bounded_for_a_smooth_bump() {
        let g = Grid::unit(2, 64).unwrap();
        let u = GridField::from_fn(g, 1, |x, o| o[0] = (-(x[0] * x[0] + x[1] * x[1]) / 0.1).exp()).unwrap();
        let params = SobolevParams::new(0.5, 2.0, 2).unwrap();
        let dsp = Seminorm::new(g, params).unwrap().dsp_field(&u).unwrap();
        let reps: Vec<_> = [0.25, 0.125, 0.0625].iter().map(|&t| audit_lemma4_with(&u, &dsp, &params, t).unwrap()).collect();
        for w in reps.windows(2) {
            assert!(w[1].ratio_i.max <= w[0].ratio_i.max * 1.01);
            assert!(w[1].ratio_ii.max <= w[0].ratio_ii.max * 1.01);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn weights_sum_to_one(n in 8usize..64, frac in 0.0f64..1.0) {
            let g = Grid::unit(2, n).unwrap();
            let t = 2.0 * g.h() + frac * (0.9 - 2.0 * g.h()).max(0.0);
            if let Ok(st) = Stencil::new(&g, t) {
                prop_assert!(st.weights.iter().all(|&w| w >= 0.0));
                let s: f64 = st.weights.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-14);
            }
        }

        #[test]
        fn output_in_convex_hull(vals in proptest::collection::vec(-1.0f64..1.0, 2 * 16 * 16), dir in 0.0f64..6.3) {
            let g = Grid::unit(2, 16).unwrap();
            let u = GridField::new(g, 2, vals).unwrap();
            let v = convolve(&u, 0.25).unwrap();
            let e = [dir.cos(), dir.sin()];
            let proj = |y: &[f64]| y[0] * e[0] + y[1] * e[1];
            let hi = u.nodes().map(proj).fold(f64::MIN, f64::max);
            let lo = u.nodes().map(proj).fold(f64::MAX, f64::min);
            for y in v.nodes() {
                prop_assert!(proj(y) <= hi + 1e-12 && proj(y) >= lo - 1e-12);
            }
        }
    }
}
