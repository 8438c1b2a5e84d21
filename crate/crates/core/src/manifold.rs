//! Unit-sphere targets: nearest-point projection, shifted radial
//! retractions with their cutoff split, Lipschitz point maps, stereographic
//! charts and winding numbers.

use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::grid::{dist, norm};
use crate::{GridField, Result, WspError};

/// Tubular radius `ι` around the sphere.
pub const IOTA: f64 = 0.125;
/// Radius `α` of the ball of admissible retraction shifts.
pub const ALPHA: f64 = 0.125;
/// Tolerance for "lies on the manifold".
pub const TOL_MANIFOLD: f64 = 1e-9;
/// Distance below which a retraction is considered singular.
pub const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TargetKind {
    Circle,
    Sphere2,
}

/// A unit sphere `S^{ν-1} ⊂ R^ν` with its tubular radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManifoldTarget {
    pub kind: TargetKind,
    pub iota: f64,
}

impl FromStr for ManifoldTarget {
    type Err = WspError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(Self::circle()),
            "sphere2" => Ok(Self::sphere2()),
            other => Err(WspError::InvalidParameter(format!(
                "unknown manifold '{other}' (expected circle or sphere2)"
            ))),
        }
    }
}

impl ManifoldTarget {
    pub fn circle() -> Self {
        Self { kind: TargetKind::Circle, iota: IOTA }
    }

    pub fn sphere2() -> Self {
        Self { kind: TargetKind::Sphere2, iota: IOTA }
    }

    pub fn token(&self) -> &'static str {
        match self.kind {
            TargetKind::Circle => "circle",
            TargetKind::Sphere2 => "sphere2",
        }
    }

    /// Ambient dimension `ν`.
    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            TargetKind::Circle => 2,
            TargetKind::Sphere2 => 3,
        }
    }

    /// `dist(y, N) = ||y| - 1|`.
    pub fn dist(&self, y: &[f64]) -> f64 {
        (norm(y) - 1.0).abs()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        self.dist(y) <= TOL_MANIFOLD
    }

    /// `Π(y) = y/|y|` on the closed tube of radius `ι`.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        let r = norm(y);
        let d = (r - 1.0).abs();
        if d > self.iota || r == 0.0 {
            return Err(WspError::OutsideTube { dist: d, iota: self.iota });
        }
        Ok(y.iter().map(|v| v / r).collect())
    }

    fn check_dim(&self, u: &GridField) -> Result<()> {
        if u.nu() != self.ambient_dim() {
            return Err(WspError::DimensionMismatch(format!(
                "{} target needs nu = {}, field has nu = {}",
                self.token(),
                self.ambient_dim(),
                u.nu()
            )));
        }
        Ok(())
    }

    /// Fails unless every node value lies on the sphere within
    /// [`TOL_MANIFOLD`].
    pub fn check_field(&self, u: &GridField) -> Result<()> {
        self.check_dim(u)?;
        let worst = u.nodes().map(|y| self.dist(y)).fold(0.0, f64::max);
        if worst > TOL_MANIFOLD {
            return Err(WspError::NotOnManifold(worst));
        }
        Ok(())
    }

    /// `Π` applied at every node.
    pub fn project_field(&self, u: &GridField) -> Result<GridField> {
        self.check_dim(u)?;
        compose_field(u, &Projection(*self))
    }

    /// The configuration inequality `1 - ι - α >= 3α`: for `|ξ| <= α` and
    /// `y` in the tube, `θ(y) = 0`, so the far part of the retraction agrees
    /// with the full retraction there.
    pub fn cutoff_window_holds(&self) -> bool {
        1.0 - self.iota - ALPHA >= 3.0 * ALPHA
    }
}

/// A nodewise map `R^a -> R^b`.
pub trait PointMap: Sync {
    fn out_dim(&self, in_dim: usize) -> usize {
        in_dim
    }

    fn apply(&self, y: &[f64], out: &mut [f64]) -> Result<()>;

    /// Global Lipschitz constant, when known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity;

impl PointMap for Identity {
    fn apply(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(y);
        Ok(())
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Coordinatewise absolute value.
#[derive(Debug, Clone, Copy)]
pub struct Abs;

impl PointMap for Abs {
    fn apply(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, v) in out.iter_mut().zip(y) {
            *o = v.abs();
        }
        Ok(())
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Coordinatewise clamp to `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
pub struct Clamp {
    pub lo: f64,
    pub hi: f64,
}

impl PointMap for Clamp {
    fn apply(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, v) in out.iter_mut().zip(y) {
            *o = v.clamp(self.lo, self.hi);
        }
        Ok(())
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Nearest-point projection onto the closed ball of radius `r`.
#[derive(Debug, Clone, Copy)]
pub struct BallProjection {
    pub radius: f64,
}

impl PointMap for BallProjection {
    fn apply(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let n = norm(y);
        let f = if n > self.radius { self.radius / n } else { 1.0 };
        for (o, v) in out.iter_mut().zip(y) {
            *o = f * v;
        }
        Ok(())
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `y ↦ λ y + b`.
#[derive(Debug, Clone)]
pub struct Affine {
    pub scale: f64,
    pub offset: Vec<f64>,
}

impl PointMap for Affine {
    fn apply(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        if self.offset.len() != y.len() {
            return Err(WspError::DimensionMismatch("affine offset length".into()));
        }
        for ((o, v), b) in out.iter_mut().zip(y).zip(&self.offset) {
            *o = self.scale * v + b;
        }
        Ok(())
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.scale.abs())
    }
}

/// The constant map.
#[derive(Debug, Clone)]
pub struct Constant(pub Vec<f64>);

impl PointMap for Constant {
    fn out_dim(&self, _: usize) -> usize {
        self.0.len()
    }

    fn apply(&self, _: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.0);
        Ok(())
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `Π` as a point map.
#[derive(Debug, Clone, Copy)]
pub struct Projection(pub ManifoldTarget);

impl PointMap for Projection {
    fn apply(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.0.project(y)?);
        Ok(())
    }
}

/// Which part of the split `κ_ξ = κ̄_ξ + κ̱_ξ` a [`Retraction`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RetractionPart {
    /// `κ_ξ`.
    Full,
    /// `κ̄_ξ = (1 - θ) κ_ξ`, which vanishes near the singular point.
    Far,
    /// `κ̱_ξ = θ κ_ξ`, supported within `3α` of the singular point.
    Near,
}

/// Radial retraction `κ_ξ(y) = (y - ξ)/|y - ξ|` onto the unit sphere with
/// singular set `{ξ}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Retraction {
    pub xi: Vec<f64>,
    pub alpha: f64,
    pub part: RetractionPart,
}

impl Retraction {
    pub fn new(xi: Vec<f64>) -> Self {
        Self { xi, alpha: ALPHA, part: RetractionPart::Full }
    }

    pub fn with_part(&self, part: RetractionPart) -> Self {
        Self { part, ..self.clone() }
    }

    /// `κ_ξ(y)`.
    pub fn retract(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; y.len()];
        self.full(y, &mut out)?;
        Ok(out)
    }

    fn full(&self, y: &[f64], out: &mut [f64]) -> Result<f64> {
        let r = dist(y, &self.xi);
        if r < SINGULAR_EPS {
            return Err(WspError::Singularity(r));
        }
        for ((o, a), b) in out.iter_mut().zip(y).zip(&self.xi) {
            *o = (a - b) / r;
        }
        Ok(r)
    }

    /// `θ(y)`: 1 within `2α` of `ξ`, 0 beyond `3α`, linear in between.
    pub fn cutoff(&self, y: &[f64]) -> f64 {
        cutoff(dist(y, &self.xi), self.alpha)
    }
}

/// `θ` as a function of `dist(y, X)`.
pub fn cutoff(d: f64, alpha: f64) -> f64 {
    if d <= 2.0 * alpha {
        1.0
    } else if d >= 3.0 * alpha {
        0.0
    } else {
        (3.0 * alpha - d) / alpha
    }
}

impl PointMap for Retraction {
    fn apply(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        if self.part == RetractionPart::Near && dist(y, &self.xi) >= 3.0 * self.alpha {
            out.iter_mut().for_each(|o| *o = 0.0);
            return Ok(());
        }
        let r = self.full(y, out)?;
        let f = match self.part {
            RetractionPart::Full => return Ok(()),
            RetractionPart::Far => 1.0 - cutoff(r, self.alpha),
            RetractionPart::Near => cutoff(r, self.alpha),
        };
        out.iter_mut().for_each(|o| *o *= f);
        Ok(())
    }
}

/// `f ∘ u`, node by node. The first failing node (in index order) decides
/// the error.
pub fn compose_field(u: &GridField, f: &(impl PointMap + ?Sized)) -> Result<GridField> {
    let nu = u.nu();
    let out_nu = f.out_dim(nu);
    let results: Vec<Result<Vec<f64>>> = (0..u.node_count())
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; out_nu];
            f.apply(u.value(i), &mut out).map(|_| out)
        })
        .collect();
    let mut values = Vec::with_capacity(u.node_count() * out_nu);
    for r in results {
        values.extend(r?);
    }
    GridField::new(*u.grid(), out_nu, values)
}

/// Stereographic chart of a sphere, from a pole chosen away from a finite
/// point set, rescaled so the set lands in the ball of radius 1/2.
#[derive(Debug, Clone, Serialize)]
pub struct Chart {
    pub pole: Vec<f64>,
    /// Orthonormal basis of the plane orthogonal to the pole.
    pub basis: Vec<Vec<f64>>,
    pub scale: f64,
    /// Smallest distance from the pole to the point set.
    pub clearance: f64,
}

/// Minimum angular clearance required between the pole and the point set.
pub const MIN_CAP_DEG: f64 = 5.0;

impl Chart {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `Φ(y) = (y·e_k / (1 - y·P))_k / λ`.
    pub fn forward(&self, y: &[f64]) -> Vec<f64> {
        let yp: f64 = y.iter().zip(&self.pole).map(|(a, b)| a * b).sum();
        let den = (1.0 - yp) * self.scale;
        self.basis.iter().map(|e| y.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() / den).collect()
    }

    /// `Φ^{-1}(z) = (2 Σ z_k e_k + (|z|^2 - 1) P) / (|z|^2 + 1)` with `z`
    /// first scaled back by `λ`.
    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        let zs: Vec<f64> = z.iter().map(|v| v * self.scale).collect();
        let r2: f64 = zs.iter().map(|v| v * v).sum();
        let nu = self.pole.len();
        let mut y: Vec<f64> = self.pole.iter().map(|p| (r2 - 1.0) * p).collect();
        for (zk, e) in zs.iter().zip(&self.basis) {
            for c in 0..nu {
                y[c] += 2.0 * zk * e[c];
            }
        }
        y.iter_mut().for_each(|v| *v /= r2 + 1.0);
        y
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            _ => {}
        }
    }
    false
}

fn min_dist(c: &[f64], points: &[Vec<f64>]) -> f64 {
    points.iter().map(|p| dist(c, p)).fold(f64::INFINITY, f64::min)
}

/// Farthest-point pole among `candidates`, ties broken lexicographically.
fn farthest(candidates: Vec<Vec<f64>>, points: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for c in candidates {
        let d = min_dist(&c, points);
        let better = match &best {
            None => true,
            Some((bc, bd)) => d > *bd || (d == *bd && lex_less(&c, bc)),
        };
        if better {
            best = Some((c, d));
        }
    }
    best.expect("candidate set is never empty")
}

fn circle_pole(points: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let mut ang: Vec<f64> = points.iter().map(|p| p[1].atan2(p[0])).collect();
    ang.sort_by(|a, b| a.total_cmp(b));
    ang.dedup();
    let tau = std::f64::consts::TAU;
    let mut candidates = Vec::new();
    let mut best_gap = -1.0;
    for k in 0..ang.len() {
        let a = ang[k];
        let b = if k + 1 < ang.len() { ang[k + 1] } else { ang[0] + tau };
        let gap = b - a;
        let mid = a + gap / 2.0;
        let c = vec![mid.cos(), mid.sin()];
        if gap > best_gap + 1e-15 {
            best_gap = gap;
            candidates = vec![c];
        } else if (gap - best_gap).abs() <= 1e-15 {
            candidates.push(c);
        }
    }
    farthest(candidates, points)
}

fn sphere_candidates(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = 4096;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut c: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            vec![r * th.cos(), r * th.sin(), z]
        })
        .collect();
    for d in 0..3 {
        for s in [-1.0, 1.0] {
            let mut e = vec![0.0; 3];
            e[d] = s;
            c.push(e);
        }
    }
    c.extend(points.iter().map(|p| {
        let n = norm(p);
        p.iter().map(|v| -v / n).collect()
    }));
    c
}

fn orthonormal_complement(pole: &[f64]) -> Vec<Vec<f64>> {
    match pole.len() {
        2 => vec![vec![-pole[1], pole[0]]],
        3 => {
            // start from the axis least aligned with the pole
            let k = (0..3).min_by(|&a, &b| pole[a].abs().total_cmp(&pole[b].abs())).unwrap();
            let mut a = vec![0.0; 3];
            a[k] = 1.0;
            let d: f64 = a.iter().zip(pole).map(|(x, y)| x * y).sum();
            let mut e1: Vec<f64> = a.iter().zip(pole).map(|(x, p)| x - d * p).collect();
            let n1 = norm(&e1);
            e1.iter_mut().for_each(|v| *v /= n1);
            let e2 = vec![
                pole[1] * e1[2] - pole[2] * e1[1],
                pole[2] * e1[0] - pole[0] * e1[2],
                pole[0] * e1[1] - pole[1] * e1[0],
            ];
            vec![e1, e2]
        }
        _ => unreachable!("only circles and 2-spheres"),
    }
}

/// Builds a chart whose pole maximises the distance to `points`.
pub fn stereographic_chart(points: &[Vec<f64>]) -> Result<Chart> {
    let nu = points.first().map(|p| p.len()).ok_or_else(|| WspError::InvalidParameter("empty point set".into()))?;
    if !(nu == 2 || nu == 3) || points.iter().any(|p| p.len() != nu) {
        return Err(WspError::DimensionMismatch("chart points must all lie in R^2 or all in R^3".into()));
    }
    if let Some(d) = points.iter().map(|p| (norm(p) - 1.0).abs()).find(|&d| d > TOL_MANIFOLD) {
        return Err(WspError::NotOnManifold(d));
    }
    let (pole, clearance) = if nu == 2 { circle_pole(points) } else { farthest(sphere_candidates(points), points) };
    // chord length of a 5 degree cap
    let min_chord = 2.0 * (MIN_CAP_DEG.to_radians() / 2.0).sin();
    if clearance < min_chord {
        return Err(WspError::ChartFailure);
    }
    let basis = orthonormal_complement(&pole);
    let mut chart = Chart { pole, basis, scale: 1.0, clearance };
    let rmax = points.iter().map(|p| norm(&chart.forward(p))).fold(0.0, f64::max);
    chart.scale = if rmax > 0.0 { 2.0 * rmax } else { 1.0 };
    Ok(chart)
}

/// Axis-aligned rectangle of nodes in a two-dimensional grid, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NodeLoop {
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl NodeLoop {
    /// The outermost ring of nodes of an `N × N` grid.
    pub fn boundary(n: usize) -> Self {
        Self { lo: [0, 0], hi: [n - 1, n - 1] }
    }

    /// Nodes in counter-clockwise order in the `(x_0, x_1)` plane.
    pub fn nodes(&self, n: usize) -> Vec<usize> {
        let [a0, a1] = self.lo;
        let [b0, b1] = self.hi;
        let at = |i: usize, j: usize| i * n + j;
        let mut v = Vec::new();
        for i in a0..b0 {
            v.push(at(i, a1));
        }
        for j in a1..b1 {
            v.push(at(b0, j));
        }
        for i in (a0 + 1..=b0).rev() {
            v.push(at(i, b1));
        }
        for j in (a1 + 1..=b1).rev() {
            v.push(at(a0, j));
        }
        v
    }
}

/// Degree of a circle-valued field around a node rectangle, from wrapped
/// angle increments. Every increment must be below `π/2`.
pub fn winding_number(u: &GridField, lp: &NodeLoop) -> Result<i64> {
    let g = u.grid();
    if g.m != 2 || u.nu() != 2 {
        return Err(WspError::DimensionMismatch("winding numbers need m = 2 and nu = 2".into()));
    }
    if lp.lo[0] >= lp.hi[0] || lp.lo[1] >= lp.hi[1] || lp.hi[0] >= g.n || lp.hi[1] >= g.n {
        return Err(WspError::InvalidParameter(format!("invalid loop {lp:?} for N = {}", g.n)));
    }
    let nodes = lp.nodes(g.n);
    let angle = |i: usize| {
        let y = u.value(i);
        y[1].atan2(y[0])
    };
    let tau = std::f64::consts::TAU;
    let mut total = 0.0;
    for k in 0..nodes.len() {
        let a = angle(nodes[k]);
        let b = angle(nodes[(k + 1) % nodes.len()]);
        let mut d = (b - a) % tau;
        if d > std::f64::consts::PI {
            d -= tau;
        } else if d <= -std::f64::consts::PI {
            d += tau;
        }
        if d.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(WspError::UnderResolvedLoop { increment: d, step: k });
        }
        total += d;
    }
    Ok((total / tau).round() as i64)
}
