//! Gagliardo seminorms, the derivative density `D^{s,p}u`, and the
//! Lebesgue/Sobolev norms built on them.
//!
//! The double integral is discretised over ordered node pairs `i != k`,
//!
//! ```text
//! [u]^p = sum_{i != k} |u_i - u_k|^p |x_i - x_k|^{-(m+sp)} h^{2m},
//! ```
//!
//! which makes `sum_i (D^{s,p}u_i)^p h^m = [u]^p` an identity of the
//! discretisation. Row sums are computed per node in parallel and reduced in
//! node order with compensated summation, so the result is independent of
//! the number of workers.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use crate::grid::norm;
use crate::sum::{neumaier_sum, Neumaier};
use crate::{Grid, GridField, Result, SobolevParams, WspError};

/// How the kernel weight of a node pair is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quadrature {
    /// `|x_i - x_k|^{-(m+sp)}` at the node pair.
    Midpoint,
    /// Exact cell-pair integrals of the kernel for offsets of at most
    /// [`NEAR_FIELD_CELLS`] cells, midpoint beyond. One-dimensional grids
    /// with `sp < 1` only.
    NearFieldCorrected,
}

/// Offsets (in cells) that receive exact cell-pair weights in
/// [`Quadrature::NearFieldCorrected`].
pub const NEAR_FIELD_CELLS: usize = 8;

/// Kernel weights indexed by signed node offset.
///
/// Stored unfolded on `(2N-1)^m` offsets, last axis fastest, so that for a
/// fixed node the weights against one grid row form a contiguous slice. The
/// zero offset carries weight 0, which is how the diagonal is excluded.
#[derive(Debug)]
pub struct KernelTable {
    grid: Grid,
    beta: f64,
    quadrature: Quadrature,
    width: usize,
    /// Dimensionless weights; multiply by `scale` for the physical kernel.
    kd: Vec<f64>,
    /// `h^{-(m+beta)}`.
    scale: f64,
    row_mass: OnceLock<Vec<f64>>,
}

impl KernelTable {
    pub fn new(grid: Grid, beta: f64, quadrature: Quadrature) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(WspError::InvalidParameter(format!("kernel order sp = {beta} must be > 0")));
        }
        let m = grid.m;
        let n = grid.n;
        let width = 2 * n - 1;
        let size = width
            .checked_pow(m as u32)
            .ok_or_else(|| WspError::InvalidParameter("kernel table too large".into()))?;
        let expo = -(m as f64 + beta);
        let mut kd = vec![0.0; size];
        let mut idx = vec![0usize; m];
        for (flat, w) in kd.iter_mut().enumerate() {
            let mut rest = flat;
            for d in (0..m).rev() {
                idx[d] = rest % width;
                rest /= width;
            }
            let r2: f64 = idx.iter().map(|&i| {
                let o = i as f64 - (n as f64 - 1.0);
                o * o
            }).sum();
            if r2 > 0.0 {
                *w = r2.powf(0.5 * expo);
            }
        }
        if quadrature == Quadrature::NearFieldCorrected {
            if m != 1 || beta >= 1.0 {
                return Err(WspError::InvalidParameter(format!(
                    "near-field corrected quadrature needs m = 1 and sp < 1 (got m = {m}, sp = {beta})"
                )));
            }
            let centre = n - 1;
            for k in 1..n.min(NEAR_FIELD_CELLS + 1) {
                let w = cell_pair_weight_1d(k, beta);
                kd[centre + k] = w;
                kd[centre - k] = w;
            }
        }
        let scale = grid.h().powf(expo);
        Ok(Self { grid, beta, quadrature, width, kd, scale, row_mass: OnceLock::new() })
    }

    pub fn for_params(grid: Grid, params: &SobolevParams) -> Result<Self> {
        if grid.m != params.m {
            return Err(WspError::DimensionMismatch(format!(
                "field has m = {}, parameters have m = {}",
                grid.m, params.m
            )));
        }
        Self::new(grid, params.sp(), Quadrature::Midpoint)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    fn offset_index(&self, a: &[usize], b: &[usize]) -> usize {
        let c = self.grid.n - 1;
        a.iter().zip(b).fold(0, |acc, (&ai, &bi)| acc * self.width + (bi + c - ai))
    }

    /// Physical kernel weight between nodes with multi-indices `a` and `b`.
    pub fn weight(&self, a: &[usize], b: &[usize]) -> f64 {
        self.kd[self.offset_index(a, b)] * self.scale
    }

    /// `sum_{k != i} K(x_i, x_k)` for every node `i`, computed once.
    pub fn row_mass(&self) -> &[f64] {
        self.row_mass.get_or_init(|| {
            let g = self.grid;
            (0..g.node_count())
                .into_par_iter()
                .map(|i| {
                    let mut acc = Neumaier::new();
                    for_each_block(&g, i, |_, kstart, _| {
                        let k = &self.kd[kstart..kstart + g.n];
                        acc.add(sum4(k.iter().copied()));
                    });
                    acc.total() * self.scale
                })
                .collect()
        })
    }
}

/// `∫_{-1}^{1} (1-|w|) |k+w|^{-(1+β)} dw`: the exact interaction of two unit
/// cells `k >= 1` apart, as a second difference of the double antiderivative.
fn cell_pair_weight_1d(k: usize, beta: f64) -> f64 {
    let f = |z: f64| -> f64 {
        if z == 0.0 {
            0.0
        } else {
            -z.powf(1.0 - beta) / (beta * (1.0 - beta))
        }
    };
    let k = k as f64;
    f(k + 1.0) - 2.0 * f(k) + f(k - 1.0)
}

/// Calls `f(block, kernel_start, row_start)` for every grid row (all axes
/// but the last fixed) relative to node `i`.
#[inline(always)]
fn for_each_block(g: &Grid, i: usize, mut f: impl FnMut(usize, usize, usize)) {
    let n = g.n;
    let m = g.m;
    let w = 2 * n - 1;
    let i_last = i % n;
    // Kernel offset of the leading axes, `sum_d (b_d - i_d + N - 1) W^{m-2-d}`,
    // split as `bpos(b) + ipos(i)`.
    let mut ipos = 0usize;
    let mut rest = i / n;
    let mut stride = 1usize;
    for _ in 0..m - 1 {
        let id = rest % n;
        rest /= n;
        ipos += (n - 1 - id) * stride;
        stride *= w;
    }
    let blocks = n.pow(m as u32 - 1);
    let mut bidx = vec![0usize; m.saturating_sub(1)];
    let mut bpos = 0usize;
    let strides: Vec<usize> = (0..m.saturating_sub(1)).map(|d| w.pow((m - 2 - d) as u32)).collect();
    for b in 0..blocks {
        let kstart = (bpos + ipos) * w + (n - 1 - i_last);
        f(b, kstart, b * n);
        // advance the leading multi-index odometer
        let mut d = m - 1;
        while d > 0 {
            d -= 1;
            bidx[d] += 1;
            bpos += strides[d];
            if bidx[d] < n {
                break;
            }
            bpos -= strides[d] * n;
            bidx[d] = 0;
        }
    }
}

#[inline(always)]
fn sum4(xs: impl Iterator<Item = f64>) -> f64 {
    let mut acc = [0.0f64; 4];
    for (j, x) in xs.enumerate() {
        acc[j & 3] += x;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// `|d|^p` as a function of `d2 = |d|^2`, monomorphised per exponent so the
/// row kernels vectorise.
trait PowSq: Copy + Send + Sync {
    fn of_sq(self, d2: f64) -> f64;
}

#[derive(Clone, Copy)]
struct PowOne;
#[derive(Clone, Copy)]
struct PowTwo;
#[derive(Clone, Copy)]
struct PowThreeHalves;
#[derive(Clone, Copy)]
struct PowThree;
#[derive(Clone, Copy)]
struct PowGeneral(f64);

impl PowSq for PowOne {
    #[inline(always)]
    fn of_sq(self, d2: f64) -> f64 {
        d2.sqrt()
    }
}

impl PowSq for PowTwo {
    #[inline(always)]
    fn of_sq(self, d2: f64) -> f64 {
        d2
    }
}

impl PowSq for PowThreeHalves {
    #[inline(always)]
    fn of_sq(self, d2: f64) -> f64 {
        let r = d2.sqrt();
        r * r.sqrt()
    }
}

impl PowSq for PowThree {
    #[inline(always)]
    fn of_sq(self, d2: f64) -> f64 {
        d2 * d2.sqrt()
    }
}

impl PowSq for PowGeneral {
    #[inline(always)]
    fn of_sq(self, d2: f64) -> f64 {
        if d2 > 0.0 {
            d2.powf(self.0)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy)]
enum PowKind {
    One,
    Two,
    ThreeHalves,
    Three,
    General(f64),
}

impl PowKind {
    fn new(p: f64) -> Self {
        if p == 1.0 {
            Self::One
        } else if p == 2.0 {
            Self::Two
        } else if p == 1.5 {
            Self::ThreeHalves
        } else if p == 3.0 {
            Self::Three
        } else {
            Self::General(0.5 * p)
        }
    }
}

impl PowSq for PowKind {
    #[inline(always)]
    fn of_sq(self, d2: f64) -> f64 {
        match self {
            Self::One => PowOne.of_sq(d2),
            Self::Two => PowTwo.of_sq(d2),
            Self::ThreeHalves => PowThreeHalves.of_sq(d2),
            Self::Three => PowThree.of_sq(d2),
            Self::General(h) => PowGeneral(h).of_sq(d2),
        }
    }
}

/// Structure-of-arrays copy of the field components.
fn components(u: &GridField) -> Vec<Vec<f64>> {
    (0..u.nu()).map(|c| u.component(c)).collect()
}

const LANES: usize = 8;

/// One grid row against node `i`, for a compile-time number of components.
/// Partial sums are kept in [`LANES`] fixed accumulators and combined in a
/// fixed tree, so the result does not depend on how the loop is vectorised.
#[inline(always)]
fn block_fixed<P: PowSq, const NU: usize>(ui: &[f64; NU], rows: [&[f64]; NU], kern: &[f64], pw: P) -> f64 {
    let n = kern.len();
    let rows: [&[f64]; NU] = rows.map(|r| &r[..n]);
    let mut acc = [0.0f64; LANES];
    let full = n / LANES * LANES;
    let mut k = 0;
    while k < full {
        let kc: &[f64; LANES] = kern[k..k + LANES].try_into().unwrap();
        let rc: [&[f64; LANES]; NU] = std::array::from_fn(|c| rows[c][k..k + LANES].try_into().unwrap());
        for l in 0..LANES {
            let mut d2 = 0.0;
            for c in 0..NU {
                let t = rc[c][l] - ui[c];
                d2 += t * t;
            }
            acc[l] += pw.of_sq(d2) * kc[l];
        }
        k += LANES;
    }
    for (l, kk) in (full..n).enumerate() {
        let mut d2 = 0.0;
        for c in 0..NU {
            let t = rows[c][kk] - ui[c];
            d2 += t * t;
        }
        acc[l] += pw.of_sq(d2) * kern[kk];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

#[inline(always)]
fn node_row_fixed<P: PowSq, const NU: usize>(
    g: &Grid,
    comps: &[Vec<f64>],
    table: &KernelTable,
    i: usize,
    pw: P,
) -> f64 {
    let n = g.n;
    let ui: [f64; NU] = std::array::from_fn(|c| comps[c][i]);
    let mut acc = Neumaier::new();
    for_each_block(g, i, |_, kstart, rstart| {
        let kern = &table.kd[kstart..kstart + n];
        let rows: [&[f64]; NU] = std::array::from_fn(|c| &comps[c][rstart..rstart + n]);
        acc.add(block_fixed::<P, NU>(&ui, rows, kern, pw));
    });
    acc.total() * table.scale
}

/// Same computation compiled with AVX2 enabled. No fused multiply-adds are
/// introduced, so the result is bit-identical to the baseline path.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn node_row_fixed_avx2<P: PowSq, const NU: usize>(
    g: &Grid,
    comps: &[Vec<f64>],
    table: &KernelTable,
    i: usize,
    pw: P,
) -> f64 {
    node_row_fixed::<P, NU>(g, comps, table, i, pw)
}

fn has_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        static AVX2: OnceLock<bool> = OnceLock::new();
        *AVX2.get_or_init(|| std::arch::is_x86_feature_detected!("avx2"))
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

fn row_sums_fixed<P: PowSq, const NU: usize>(u: &GridField, table: &KernelTable, pw: P) -> Vec<f64> {
    let g = *u.grid();
    let comps = components(u);
    let avx2 = has_avx2();
    (0..g.node_count())
        .into_par_iter()
        .map(|i| {
            #[cfg(target_arch = "x86_64")]
            if avx2 {
                // SAFETY: the CPU supports AVX2, checked at runtime above.
                return unsafe { node_row_fixed_avx2::<P, NU>(&g, &comps, table, i, pw) };
            }
            let _ = avx2;
            node_row_fixed::<P, NU>(&g, &comps, table, i, pw)
        })
        .collect()
}

/// One grid row against node `i` for any number of components, with an
/// optional 0/1 region mask on the partner nodes.
#[inline(always)]
fn block_dyn<P: PowSq>(
    ui: &[f64],
    comps: &[Vec<f64>],
    start: usize,
    kern: &[f64],
    mask: Option<&[f64]>,
    pw: P,
    d2: &mut [f64],
) -> f64 {
    let n = kern.len();
    let d2 = &mut d2[..n];
    d2.fill(0.0);
    for (c, comp) in comps.iter().enumerate() {
        let row = &comp[start..start + n];
        let a = ui[c];
        for (o, &x) in d2.iter_mut().zip(row) {
            let t = x - a;
            *o += t * t;
        }
    }
    let mut acc = [0.0f64; 4];
    match mask {
        None => {
            for (j, (&dd, &kk)) in d2.iter().zip(kern).enumerate() {
                acc[j & 3] += pw.of_sq(dd) * kk;
            }
        }
        Some(mask) => {
            let mask = &mask[start..start + n];
            for (j, ((&dd, &kk), &mm)) in d2.iter().zip(kern).zip(mask).enumerate() {
                acc[j & 3] += pw.of_sq(dd) * kk * mm;
            }
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

fn row_sums_dyn<P: PowSq>(u: &GridField, table: &KernelTable, pw: P, region: Option<&[bool]>) -> Vec<f64> {
    let g = *u.grid();
    let comps = components(u);
    let mask: Option<Vec<f64>> = region.map(|r| r.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
    let mask = mask.as_deref();
    let n = g.n;
    (0..g.node_count())
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, i| {
                if let Some(r) = region {
                    if !r[i] {
                        return 0.0;
                    }
                }
                let ui = u.value(i);
                let mut acc = Neumaier::new();
                for_each_block(&g, i, |_, kstart, rstart| {
                    let kern = &table.kd[kstart..kstart + n];
                    acc.add(block_dyn(ui, &comps, rstart, kern, mask, pw, buf));
                });
                acc.total() * table.scale
            },
        )
        .collect()
}

fn row_sums_pow<P: PowSq>(u: &GridField, table: &KernelTable, pw: P, region: Option<&[bool]>) -> Vec<f64> {
    match (region, u.nu()) {
        (None, 1) => row_sums_fixed::<P, 1>(u, table, pw),
        (None, 2) => row_sums_fixed::<P, 2>(u, table, pw),
        (None, 3) => row_sums_fixed::<P, 3>(u, table, pw),
        _ => row_sums_dyn(u, table, pw, region),
    }
}

/// `sum_{k != i} |u_i - u_k|^p K(x_i, x_k)` for every node, restricted to
/// pairs inside `region` when given (rows outside the region are zero).
fn row_sums(u: &GridField, table: &KernelTable, p: f64, region: Option<&[bool]>) -> Vec<f64> {
    match PowKind::new(p) {
        PowKind::One => row_sums_pow(u, table, PowOne, region),
        PowKind::Two => row_sums_pow(u, table, PowTwo, region),
        PowKind::ThreeHalves => row_sums_pow(u, table, PowThreeHalves, region),
        PowKind::Three => row_sums_pow(u, table, PowThree, region),
        PowKind::General(h) => row_sums_pow(u, table, PowGeneral(h), region),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeminormReport {
    /// `[u]^p`.
    pub seminorm_p: f64,
    /// `[u]`.
    pub seminorm: f64,
    /// Ordered node pairs `i != k` in the quadrature.
    pub pair_count: u64,
    /// Number of nodes in the region, when a region was given.
    pub region_size: Option<usize>,
}

/// `D^{s,p}u` together with the exact p-th powers it was derived from.
#[derive(Debug, Clone)]
pub struct DspField {
    /// `D^{s,p}u(x_i)`, a scalar field.
    pub d: GridField,
    /// `(D^{s,p}u(x_i))^p`, before the `1/p` root.
    pub density_p: Vec<f64>,
}

impl DspField {
    /// `sum_i (D^{s,p}u_i)^p h^m`.
    pub fn integrate_p(&self) -> f64 {
        neumaier_sum(self.density_p.iter().copied()) * self.d.grid().cell_volume()
    }
}

/// Seminorm evaluator bound to a grid and exponents. Reuses one kernel
/// table across calls.
#[derive(Debug)]
pub struct Seminorm {
    params: SobolevParams,
    table: KernelTable,
}

impl Seminorm {
    pub fn new(grid: Grid, params: SobolevParams) -> Result<Self> {
        Ok(Self { params, table: KernelTable::for_params(grid, &params)? })
    }

    pub fn with_table(params: SobolevParams, table: KernelTable) -> Result<Self> {
        if table.grid().m != params.m || (table.beta() - params.sp()).abs() > 0.0 {
            return Err(WspError::InvalidParameter("kernel table does not match parameters".into()));
        }
        Ok(Self { params, table })
    }

    pub fn params(&self) -> &SobolevParams {
        &self.params
    }

    pub fn table(&self) -> &KernelTable {
        &self.table
    }

    fn check(&self, u: &GridField) -> Result<()> {
        if !u.grid().same_as(self.table.grid()) {
            return Err(WspError::GridMismatch(format!(
                "field grid {:?} vs evaluator grid {:?}",
                u.grid(),
                self.table.grid()
            )));
        }
        Ok(())
    }

    /// Per-node `(D^{s,p}u_i)^p = h^m sum_k |u_i - u_k|^p K_ik`.
    fn density_p(&self, u: &GridField, region: Option<&[bool]>) -> Result<Vec<f64>> {
        self.check(u)?;
        let hm = u.grid().cell_volume();
        let mut rows = row_sums(u, &self.table, self.params.p, region);
        rows.iter_mut().for_each(|r| *r *= hm);
        Ok(rows)
    }

    pub fn gagliardo(&self, u: &GridField, region: Option<&[bool]>) -> Result<SeminormReport> {
        let nodes = u.node_count();
        let region_size = match region {
            Some(r) => {
                if r.len() != nodes {
                    return Err(WspError::DimensionMismatch(format!(
                        "region has {} entries for {nodes} nodes",
                        r.len()
                    )));
                }
                let k = r.iter().filter(|&&b| b).count();
                if k == 0 {
                    return Err(WspError::EmptyRegion);
                }
                Some(k)
            }
            None => None,
        };
        let dens = self.density_p(u, region)?;
        let seminorm_p = neumaier_sum(dens.iter().copied()) * u.grid().cell_volume();
        let k = region_size.unwrap_or(nodes) as u64;
        Ok(SeminormReport {
            seminorm_p,
            seminorm: seminorm_p.powf(1.0 / self.params.p),
            pair_count: k * k.saturating_sub(1),
            region_size,
        })
    }

    pub fn dsp_field(&self, u: &GridField) -> Result<DspField> {
        let density_p = self.density_p(u, None)?;
        let inv = 1.0 / self.params.p;
        let d = GridField::new(*u.grid(), 1, density_p.iter().map(|v| v.powf(inv)).collect())?;
        Ok(DspField { d, density_p })
    }

    /// `‖w‖_{L^p} + [w]`.
    pub fn wsp_norm(&self, w: &GridField) -> Result<f64> {
        Ok(lp_norm(w, self.params.p) + self.gagliardo(w, None)?.seminorm)
    }

    /// `d_{s,p}(u, v) = ‖u - v‖_{L^p} + [u - v]`.
    pub fn distance(&self, u: &GridField, v: &GridField) -> Result<f64> {
        self.wsp_norm(&u.sub(v)?)
    }

    /// `[w]^p` for a field that vanishes outside a small support, in
    /// `O(|S|^2 + N^m)` instead of `O(N^{2m})`. Pairs with one end outside
    /// the support contribute `|w_i|^p` times the kernel mass of the
    /// complement, which is read off the cached row masses.
    pub fn sparse_seminorm_p(&self, w: &GridField) -> Result<f64> {
        self.check(w)?;
        let g = *w.grid();
        let support: Vec<usize> = (0..w.node_count())
            .filter(|&i| w.value(i).iter().any(|&v| v != 0.0))
            .collect();
        if support.is_empty() {
            return Ok(0.0);
        }
        let mass = self.table.row_mass();
        let pk = PowKind::new(self.params.p);
        let m = g.m;
        let idx: Vec<Vec<usize>> = support
            .iter()
            .map(|&i| {
                let mut v = vec![0; m];
                g.multi_index(i, &mut v);
                v
            })
            .collect();
        let rows: Vec<f64> = (0..support.len())
            .into_par_iter()
            .map(|a| {
                let i = support[a];
                let wi = w.value(i);
                let mut inner = Neumaier::new();
                let mut k_in = Neumaier::new();
                for (b, &k) in support.iter().enumerate() {
                    if b == a {
                        continue;
                    }
                    let kw = self.table.weight(&idx[a], &idx[b]);
                    let d2: f64 = wi.iter().zip(w.value(k)).map(|(x, y)| (x - y) * (x - y)).sum();
                    inner.add(pk.of_sq(d2) * kw);
                    k_in.add(kw);
                }
                let wi2: f64 = wi.iter().map(|x| x * x).sum();
                inner.total() + 2.0 * pk.of_sq(wi2) * (mass[i] - k_in.total())
            })
            .collect();
        let h2m = g.cell_volume() * g.cell_volume();
        Ok(neumaier_sum(rows) * h2m)
    }

    /// `‖w‖_{L^p} + [w]` through [`Self::sparse_seminorm_p`].
    pub fn sparse_wsp_norm(&self, w: &GridField) -> Result<f64> {
        let sp = self.sparse_seminorm_p(w)?;
        Ok(lp_norm(w, self.params.p) + sp.max(0.0).powf(1.0 / self.params.p))
    }
}

pub fn gagliardo(u: &GridField, params: &SobolevParams, region: Option<&[bool]>) -> Result<SeminormReport> {
    Seminorm::new(*u.grid(), *params)?.gagliardo(u, region)
}

pub fn dsp_field(u: &GridField, params: &SobolevParams) -> Result<DspField> {
    Seminorm::new(*u.grid(), *params)?.dsp_field(u)
}

/// `(sum_i |u_i|^p h^m)^{1/p}` with `|.|` the Euclidean norm on `R^nu`.
pub fn lp_norm(u: &GridField, p: f64) -> f64 {
    let hm = u.grid().cell_volume();
    let s = neumaier_sum(u.nodes().map(|y| {
        let r = norm(y);
        if p == 2.0 {
            r * r
        } else {
            r.powf(p)
        }
    }));
    (s * hm).powf(1.0 / p)
}

pub fn wsp_distance(u: &GridField, v: &GridField, params: &SobolevParams) -> Result<f64> {
    u.check_compatible(v)?;
    Seminorm::new(*u.grid(), *params)?.distance(u, v)
}

/// Gradient by central differences, one-sided in the outermost layer.
/// Component `c*m + d` of the output is `∂_d u_c`.
pub fn gradient(u: &GridField) -> Result<GridField> {
    let g = *u.grid();
    if g.n < 3 {
        return Err(WspError::InvalidParameter(format!("gradient needs N >= 3 (got {})", g.n)));
    }
    let m = g.m;
    let nu = u.nu();
    let h = g.h();
    let stride: Vec<usize> = (0..m).map(|d| g.n.pow((m - 1 - d) as u32)).collect();
    let mut out = vec![0.0; g.node_count() * nu * m];
    let mut idx = vec![0; m];
    for i in 0..g.node_count() {
        g.multi_index(i, &mut idx);
        for d in 0..m {
            let (a, b, den) = if idx[d] == 0 {
                (i + stride[d], i, h)
            } else if idx[d] == g.n - 1 {
                (i, i - stride[d], h)
            } else {
                (i + stride[d], i - stride[d], 2.0 * h)
            };
            for c in 0..nu {
                out[i * nu * m + c * m + d] = (u.value(a)[c] - u.value(b)[c]) / den;
            }
        }
    }
    GridField::new(g, nu * m, out)
}

/// `‖u‖_{L^q} + ‖Du‖_{L^q}` with the finite-difference gradient.
pub fn w1q_norm(u: &GridField, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(WspError::InvalidParameter(format!("q = {q} must be >= 1")));
    }
    let du = gradient(u)?;
    Ok(lp_norm(u, q) + lp_norm(&du, q))
}

/// Checks `1 < q < p < r` and `1/p = (1-s)/r + s/q`.
pub fn check_exponent_relation(params: &SobolevParams, q: f64, r: f64) -> Result<()> {
    let (s, p) = (params.s, params.p);
    if !(1.0 < q && q < p && p < r) {
        return Err(WspError::ExponentRelation(format!(
            "need 1 < q < p < r, got q = {q}, p = {p}, r = {r}"
        )));
    }
    let defect = 1.0 / p - (1.0 - s) / r - s / q;
    if defect.abs() >= 1e-12 {
        return Err(WspError::ExponentRelation(format!(
            "1/p - (1-s)/r - s/q = {defect:e} for s = {s}, p = {p}, q = {q}, r = {r}"
        )));
    }
    Ok(())
}

/// Default interpolation exponents for the high regime: `q` halfway between
/// `max(sp, 1)` and `min(⌊sp⌋ + 1, p)`, and `r` from the exponent relation.
pub fn default_gn_exponents(params: &SobolevParams) -> Result<(f64, f64)> {
    let sp = params.sp();
    let lo = sp.max(1.0);
    let hi = ((params.floor_sp() + 1) as f64).min(params.p);
    let q = 0.5 * (lo + hi);
    let denom = 1.0 / params.p - params.s / q;
    if !(denom > 0.0) {
        return Err(WspError::ExponentRelation(format!(
            "no finite r for s = {}, p = {}, q = {q}",
            params.s, params.p
        )));
    }
    let r = (1.0 - params.s) / denom;
    check_exponent_relation(params, q, r)?;
    Ok((q, r))
}

/// `([w] + ‖w‖_{L^p}) / (‖w‖_{L^r}^{1-s} ‖w‖_{W^{1,q}}^s)`.
pub fn gn_ratio(w: &GridField, params: &SobolevParams, q: f64, r: f64) -> Result<f64> {
    check_exponent_relation(params, q, r)?;
    let lr = lp_norm(w, r);
    if lr == 0.0 {
        return Err(WspError::ZeroField);
    }
    let num = gagliardo(w, params, None)?.seminorm + lp_norm(w, params.p);
    let den = lr.powf(1.0 - params.s) * w1q_norm(w, q)?.powf(params.s);
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid, nu: usize, seed: u64) -> GridField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..grid.node_count() * nu).map(|_| rng.random_range(-1.0..1.0)).collect();
        GridField::new(grid, nu, vals).unwrap()
    }

    /// Plain double loop over ordered pairs, the definition itself.
    fn brute(u: &GridField, params: &SobolevParams, region: Option<&[bool]>) -> f64 {
        let g = u.grid();
        let mut xi = vec![0.0; g.m];
        let mut xk = vec![0.0; g.m];
        let mut total = 0.0;
        for i in 0..u.node_count() {
            for k in 0..u.node_count() {
                if i == k {
                    continue;
                }
                if let Some(r) = region {
                    if !r[i] || !r[k] {
                        continue;
                    }
                }
                g.node_coords(i, &mut xi);
                g.node_coords(k, &mut xk);
                let d = crate::grid::dist(u.value(i), u.value(k));
                let r = crate::grid::dist(&xi, &xk);
                total += d.powf(params.p) / r.powf(params.kernel_exponent());
            }
        }
        total * g.cell_volume() * g.cell_volume()
    }

    #[test]
    fn matches_brute_force() {
        for (m, n, nu, s, p) in [(1, 17, 1, 0.5, 2.0), (2, 6, 2, 0.3, 1.5), (3, 4, 3, 0.7, 3.3), (2, 5, 1, 0.6, 1.0)] {
            let g = Grid::unit(m, n).unwrap();
            let u = random_field(g, nu, 7 + m as u64);
            let params = SobolevParams::new(s, p, m).unwrap();
            let fast = gagliardo(&u, &params, None).unwrap().seminorm_p;
            let slow = brute(&u, &params, None);
            assert!((fast - slow).abs() <= 1e-12 * slow, "m={m}: {fast} vs {slow}");
        }
    }

    #[test]
    fn region_matches_brute_force() {
        let g = Grid::unit(2, 7).unwrap();
        let u = random_field(g, 2, 3);
        let params = SobolevParams::new(0.4, 2.0, 2).unwrap();
        let region: Vec<bool> = (0..g.node_count()).map(|i| i % 3 != 0).collect();
        let fast = gagliardo(&u, &params, Some(&region)).unwrap();
        let slow = brute(&u, &params, Some(&region));
        assert!((fast.seminorm_p - slow).abs() <= 1e-12 * slow);
        let k = region.iter().filter(|&&b| b).count() as u64;
        assert_eq!(fast.pair_count, k * (k - 1));
        assert!(matches!(gagliardo(&u, &params, Some(&vec![false; 49])), Err(WspError::EmptyRegion)));
    }

    #[test]
    fn constant_has_zero_seminorm() {
        let g = Grid::unit(2, 8).unwrap();
        let u = GridField::constant(g, &[0.2, 5.0]).unwrap();
        let params = SobolevParams::new(0.5, 2.0, 2).unwrap();
        assert_eq!(gagliardo(&u, &params, None).unwrap().seminorm, 0.0);
        assert!(dsp_field(&u, &params).unwrap().d.values().iter().all(|&v| v == 0.0));
    }

    /// For `u(x) = x`, `s = 1/2`, `p = 2`, `m = 1` the integrand
    /// `|x-y|^2/|x-y|^2` is identically 1, so `[u]^2 = 4`, and with the
    /// diagonal removed the quadrature gives `h^2 N(N-1) = 4(1 - 1/N)`.
    #[test]
    fn linear_field_oracle() {
        let g = Grid::unit(1, 256).unwrap();
        let u = GridField::from_fn(g, 1, |x, o| o[0] = x[0]).unwrap();
        let params = SobolevParams::new(0.5, 2.0, 1).unwrap();
        let rep = gagliardo(&u, &params, None).unwrap();
        let discrete = 4.0 * (1.0 - 1.0 / 256.0);
        assert!((rep.seminorm_p - discrete).abs() < 1e-12);
        assert!((rep.seminorm_p - 4.0).abs() / 4.0 < 0.02);
        let d = dsp_field(&u, &params).unwrap();
        assert!((d.integrate_p() - 4.0).abs() / 4.0 < 0.02);
    }

    #[test]
    fn lp_norm_oracles() {
        let g = Grid::unit(2, 8).unwrap();
        let c = GridField::constant(g, &[-3.0]).unwrap();
        assert!((lp_norm(&c, 1.5) - 4f64.powf(1.0 / 1.5) * 3.0).abs() < 1e-12);
        assert_eq!(lp_norm(&GridField::constant(g, &[0.0]).unwrap(), 2.0), 0.0);
        let g = Grid::unit(1, 256).unwrap();
        let x = GridField::from_fn(g, 1, |x, o| o[0] = x[0]).unwrap();
        let exact = (2.0f64 / 3.0).sqrt();
        assert!((lp_norm(&x, 2.0) - exact).abs() / exact < 0.01);
    }

    #[test]
    fn distance_of_constant_difference() {
        let g = Grid::unit(2, 6).unwrap();
        let u = random_field(g, 2, 11);
        let v = u.shift(&[0.3, -0.4]).unwrap();
        let params = SobolevParams::new(0.5, 2.0, 2).unwrap();
        let d = wsp_distance(&u, &v, &params).unwrap();
        assert!((d - 2.0 * 0.5).abs() < 1e-12);
        assert_eq!(wsp_distance(&u, &u, &params).unwrap(), 0.0);
        let other = GridField::constant(Grid::unit(2, 5).unwrap(), &[0.0, 0.0]).unwrap();
        assert!(matches!(wsp_distance(&u, &other, &params), Err(WspError::GridMismatch(_))));
    }

    #[test]
    fn w1q_oracles() {
        let g = Grid::unit(2, 8).unwrap();
        let c = GridField::constant(g, &[2.0]).unwrap();
        assert!((w1q_norm(&c, 2.0).unwrap() - 4.0).abs() < 1e-12);
        let g = Grid::unit(1, 256).unwrap();
        let x = GridField::from_fn(g, 1, |x, o| o[0] = x[0]).unwrap();
        let exact = (2.0f64 / 3.0).sqrt() + 2f64.sqrt();
        assert!((w1q_norm(&x, 2.0).unwrap() - exact).abs() / exact < 0.02);
        assert!(w1q_norm(&GridField::constant(Grid::unit(1, 2).unwrap(), &[0.0]).unwrap(), 2.0).is_err());
    }

    #[test]
    fn gradient_exact_on_affine() {
        let g = Grid::unit(2, 9).unwrap();
        let u = GridField::from_fn(g, 1, |x, o| o[0] = 0.5 * x[0] - 2.0 * x[1] + 1.0).unwrap();
        let du = gradient(&u).unwrap();
        for y in du.nodes() {
            assert!((y[0] - 0.5).abs() < 1e-12 && (y[1] + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exponent_relation() {
        let params = SobolevParams::new(0.5, 2.0, 2).unwrap();
        assert!(check_exponent_relation(&params, 4.0 / 3.0, 4.0).is_ok());
        assert!(matches!(check_exponent_relation(&params, 1.0, 4.0), Err(WspError::ExponentRelation(_))));
        assert!(matches!(check_exponent_relation(&params, 1.5, 4.0), Err(WspError::ExponentRelation(_))));
        let hi = SobolevParams::new(0.5, 2.0, 2).unwrap();
        let (q, r) = default_gn_exponents(&hi).unwrap();
        assert_eq!(q, 1.5);
        assert!((r - 3.0).abs() < 1e-12);
        let hi = SobolevParams::new(0.6, 2.0, 2).unwrap();
        let (q, _) = default_gn_exponents(&hi).unwrap();
        assert!(q >= hi.sp() && q < 2.0);
    }

    #[test]
    fn gn_ratio_rejects_zero() {
        let g = Grid::unit(1, 16).unwrap();
        let params = SobolevParams::new(0.5, 2.0, 1).unwrap();
        let z = GridField::constant(g, &[0.0]).unwrap();
        assert!(matches!(gn_ratio(&z, &params, 4.0 / 3.0, 4.0), Err(WspError::ZeroField)));
    }

    #[test]
    fn sparse_matches_dense() {
        let g = Grid::unit(2, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vals: Vec<f64> = (0..g.node_count() * 2)
            .map(|i| if (i / 2) % 7 == 0 { rng.random_range(-1.0..1.0) } else { 0.0 })
            .collect();
        let w = GridField::new(g, 2, vals).unwrap();
        for p in [1.0, 1.5, 2.0, 2.7] {
            let params = SobolevParams::new(0.6, p, 2).unwrap();
            let ev = Seminorm::new(g, params).unwrap();
            let dense = ev.gagliardo(&w, None).unwrap().seminorm_p;
            let sparse = ev.sparse_seminorm_p(&w).unwrap();
            assert!((dense - sparse).abs() <= 1e-10 * dense, "p={p}: {dense} vs {sparse}");
        }
    }

    #[test]
    fn near_field_weights_converge_to_midpoint() {
        for beta in [0.2, 0.5, 0.9] {
            let w = cell_pair_weight_1d(8, beta);
            let mid = 8f64.powf(-(1.0 + beta));
            assert!((w / mid - 1.0).abs() < 0.01);
            assert!(cell_pair_weight_1d(1, beta) > 1.0);
        }
        assert!(KernelTable::new(Grid::unit(2, 4).unwrap(), 0.5, Quadrature::NearFieldCorrected).is_err());
        assert!(KernelTable::new(Grid::unit(1, 4).unwrap(), 1.5, Quadrature::NearFieldCorrected).is_err());
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let g = Grid::unit(2, 16).unwrap();
        let u = random_field(g, 2, 99);
        let params = SobolevParams::new(0.55, 1.7, 2).unwrap();
        let one = crate::parallel::with_workers(1, || gagliardo(&u, &params, None).unwrap()).unwrap();
        let two = crate::parallel::with_workers(2, || gagliardo(&u, &params, None).unwrap()).unwrap();
        let eight = crate::parallel::with_workers(8, || gagliardo(&u, &params, None).unwrap()).unwrap();
        assert_eq!(one.seminorm_p.to_bits(), two.seminorm_p.to_bits());
        assert_eq!(one.seminorm_p.to_bits(), eight.seminorm_p.to_bits());
    }

    fn field_strategy() -> impl Strategy<Value = (GridField, GridField)> {
        (proptest::collection::vec(-1.0f64..1.0, 36 * 2), proptest::collection::vec(-1.0f64..1.0, 36 * 2)).prop_map(|(a, b)| {
            let g = Grid::unit(2, 6).unwrap();
            (GridField::new(g, 2, a).unwrap(), GridField::new(g, 2, b).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn scaling((u, _) in field_strategy(), lambda in -5.0f64..5.0, p in 1.0f64..3.0) {
            let params = SobolevParams::new(0.5, p, 2).unwrap();
            let a = gagliardo(&u.scale(lambda).unwrap(), &params, None).unwrap().seminorm;
            let b = lambda.abs() * gagliardo(&u, &params, None).unwrap().seminorm;
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        }

        #[test]
        fn subadditive((u, v) in field_strategy(), p in 1.0f64..3.0) {
            let params = SobolevParams::new(0.3, p, 2).unwrap();
            let ev = Seminorm::new(*u.grid(), params).unwrap();
            let s = ev.gagliardo(&u.add(&v).unwrap(), None).unwrap().seminorm;
            let a = ev.gagliardo(&u, None).unwrap().seminorm;
            let b = ev.gagliardo(&v, None).unwrap().seminorm;
            prop_assert!(s <= a + b + 1e-12);
        }

        #[test]
        fn constant_shift_invariant((u, _) in field_strategy(), c in -3.0f64..3.0) {
            let params = SobolevParams::new(0.5, 2.0, 2).unwrap();
            let a = gagliardo(&u, &params, None).unwrap().seminorm;
            let b = gagliardo(&u.shift(&[c, -c]).unwrap(), &params, None).unwrap().seminorm;
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn region_monotone((u, _) in field_strategy(), bits in proptest::collection::vec(any::<bool>(), 36)) {
            let params = SobolevParams::new(0.5, 2.0, 2).unwrap();
            let b = vec![true; 36];
            let mut a = bits.clone();
            a[0] = true;
            a[1] = true;
            let sa = gagliardo(&u, &params, Some(&a)).unwrap().seminorm;
            let sb = gagliardo(&u, &params, Some(&b)).unwrap().seminorm;
            prop_assert!(sa <= sb + 1e-12);
        }

        #[test]
        fn distance_is_a_metric((u, v) in field_strategy(), p in 1.0f64..3.0) {
            let params = SobolevParams::new(0.5, p, 2).unwrap();
            let ev = Seminorm::new(*u.grid(), params).unwrap();
            let w = u.scale(0.5).unwrap();
            let uv = ev.distance(&u, &v).unwrap();
            let vu = ev.distance(&v, &u).unwrap();
            prop_assert!((uv - vu).abs() <= 1e-12 * uv);
            let uw = ev.distance(&u, &w).unwrap();
            let wv = ev.distance(&w, &v).unwrap();
            prop_assert!(uv <= uw + wv + 1e-12);
        }

        #[test]
        fn dsp_identity_bit_exact((u, _) in field_strategy(), p in 1.0f64..3.0) {
            let params = SobolevParams::new(0.45, p, 2).unwrap();
            let d = dsp_field(&u, &params).unwrap();
            let g = gagliardo(&u, &params, None).unwrap();
            prop_assert_eq!(d.integrate_p().to_bits(), g.seminorm_p.to_bits());
        }
    }
}
