//! Cell-centred grids on `(-R, R)^m`, sampled fields and dyadic cubications.
//!
//! Multi-indices are flattened lexicographically with the last axis fastest.

use serde::{Deserialize, Serialize};

use crate::{Result, WspError};

/// Uniform grid of `N^m` cells on the open cube of half-width `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub m: usize,
    pub n: usize,
    pub half_width: f64,
}

impl Grid {
    pub fn new(m: usize, n: usize, half_width: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(WspError::InvalidParameter(format!(
                "grid needs m >= 1 and N >= 1 (got m = {m}, N = {n})"
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(WspError::InvalidParameter(format!(
                "half-width must be positive and finite (got {half_width})"
            )));
        }
        if n.checked_pow(m as u32).is_none() {
            return Err(WspError::InvalidParameter("node count overflows".into()));
        }
        Ok(Self { m, n, half_width })
    }

    /// Grid on the unit-radius cube `(-1, 1)^m`.
    pub fn unit(m: usize, n: usize) -> Result<Self> {
        Self::new(m, n, 1.0)
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.m as u32)
    }

    /// `h^m`, the measure of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.m as i32)
    }

    /// `(2R)^m`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.m as i32)
    }

    /// Coordinate of index `i` along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.h()
    }

    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for d in (0..self.m).rev() {
            out[d] = flat % self.n;
            flat /= self.n;
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn node_coords(&self, flat: usize, out: &mut [f64]) {
        let mut idx = vec![0; self.m];
        self.multi_index(flat, &mut idx);
        for (o, &i) in out.iter_mut().zip(&idx) {
            *o = self.coord(i);
        }
    }

    /// Exact equality of shape and bitwise equality of the half-width.
    pub fn same_as(&self, other: &Grid) -> bool {
        self.m == other.m
            && self.n == other.n
            && self.half_width.to_bits() == other.half_width.to_bits()
    }
}

/// A map `Q^m_R -> R^nu` sampled at the nodes of a [`Grid`].
///
/// `values` is node-major: the `nu` components of node `i` occupy
/// `values[i*nu .. (i+1)*nu]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    nu: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, nu: usize, values: Vec<f64>) -> Result<Self> {
        if nu == 0 {
            return Err(WspError::InvalidParameter("nu must be >= 1".into()));
        }
        let expected = grid.node_count() * nu;
        if values.len() != expected {
            return Err(WspError::DimensionMismatch(format!(
                "expected {expected} values for {} nodes with nu = {nu}, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(WspError::NonFinite { row: pos / nu });
        }
        Ok(Self { grid, nu, values })
    }

    pub fn constant(grid: Grid, value: &[f64]) -> Result<Self> {
        let values = value.repeat(grid.node_count());
        Self::new(grid, value.len(), values)
    }

    /// Samples `f(x, out)` at every node.
    pub fn from_fn(grid: Grid, nu: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut values = vec![0.0; grid.node_count() * nu];
        let mut x = vec![0.0; grid.m];
        for (i, out) in values.chunks_exact_mut(nu).enumerate() {
            grid.node_coords(i, &mut x);
            f(&x, out);
        }
        Self::new(grid, nu, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.nu..(i + 1) * self.nu]
    }

    pub fn nodes(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.nu)
    }

    /// Fails unless `other` lives on the same grid with the same `nu`.
    pub fn check_compatible(&self, other: &GridField) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(WspError::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        if self.nu != other.nu {
            return Err(WspError::DimensionMismatch(format!(
                "nu = {} vs nu = {}",
                self.nu, other.nu
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        GridField::new(self.grid, self.nu, values)
    }

    pub fn add(&self, other: &GridField) -> Result<GridField> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        GridField::new(self.grid, self.nu, values)
    }

    pub fn scale(&self, lambda: f64) -> Result<GridField> {
        GridField::new(self.grid, self.nu, self.values.iter().map(|v| lambda * v).collect())
    }

    /// Adds the vector `c` to every node value.
    pub fn shift(&self, c: &[f64]) -> Result<GridField> {
        if c.len() != self.nu {
            return Err(WspError::DimensionMismatch(format!(
                "shift has {} components, field has nu = {}",
                c.len(),
                self.nu
            )));
        }
        let values = self
            .values
            .chunks_exact(self.nu)
            .flat_map(|y| y.iter().zip(c).map(|(a, b)| a + b))
            .collect();
        GridField::new(self.grid, self.nu, values)
    }

    /// Euclidean norm of each node value.
    pub fn node_norms(&self) -> Vec<f64> {
        self.nodes().map(norm).collect()
    }

    /// Component `c` of every node, as a contiguous vector.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.nodes().map(|y| y[c]).collect()
    }

    /// True when all node values are bitwise identical.
    pub fn is_constant(&self) -> bool {
        let first = self.value(0);
        self.nodes().all(|y| y.iter().zip(first).all(|(a, b)| a.to_bits() == b.to_bits()))
    }
}

pub(crate) fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The partition of the grid into `2^{jm}` congruent dyadic cubes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicCubication {
    grid: Grid,
    level: u32,
    side: usize,
}

impl DyadicCubication {
    pub fn new(grid: Grid, level: u32) -> Result<Self> {
        if level == 0 || level >= usize::BITS {
            return Err(WspError::InvalidParameter(format!("level j = {level} must be >= 1")));
        }
        let per_axis = 1usize << level;
        if grid.n % per_axis != 0 {
            return Err(WspError::Divisibility { n: grid.n, j: level });
        }
        Ok(Self { grid, level, side: grid.n / per_axis })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Cubes per axis, `2^j`.
    pub fn per_axis(&self) -> usize {
        1 << self.level
    }

    /// Grid cells per cube edge.
    pub fn side_cells(&self) -> usize {
        self.side
    }

    pub fn cube_count(&self) -> usize {
        self.per_axis().pow(self.grid.m as u32)
    }

    pub fn nodes_per_cube(&self) -> usize {
        self.side.pow(self.grid.m as u32)
    }

    /// Edge length `2R / 2^j`.
    pub fn edge(&self) -> f64 {
        2.0 * self.grid.half_width / self.per_axis() as f64
    }

    pub fn cube_measure(&self) -> f64 {
        self.edge().powi(self.grid.m as i32)
    }

    pub fn diameter(&self) -> f64 {
        self.edge() * (self.grid.m as f64).sqrt()
    }

    /// Cube containing a node.
    pub fn cube_of(&self, node: usize) -> usize {
        let mut idx = vec![0; self.grid.m];
        self.grid.multi_index(node, &mut idx);
        idx.iter().fold(0, |acc, &i| acc * self.per_axis() + i / self.side)
    }

    /// Cube label of every node.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.grid.node_count()).map(|i| self.cube_of(i)).collect()
    }

    pub fn cube_multi_index(&self, mut cube: usize) -> Vec<usize> {
        let k = self.per_axis();
        let mut out = vec![0; self.grid.m];
        for d in (0..self.grid.m).rev() {
            out[d] = cube % k;
            cube /= k;
        }
        out
    }

    /// Nodes of a cube in lexicographic order.
    pub fn cube_nodes(&self, cube: usize) -> Vec<usize> {
        let c = self.cube_multi_index(cube);
        let m = self.grid.m;
        let mut out = Vec::with_capacity(self.nodes_per_cube());
        let mut local = vec![0usize; m];
        let mut idx = vec![0usize; m];
        loop {
            for d in 0..m {
                idx[d] = c[d] * self.side + local[d];
            }
            out.push(self.grid.flat_index(&idx));
            let mut d = m;
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                local[d] += 1;
                if local[d] < self.side {
                    break;
                }
                local[d] = 0;
            }
        }
    }

    /// Lower and upper corner coordinates of a cube.
    pub fn cube_bounds(&self, cube: usize) -> (Vec<f64>, Vec<f64>) {
        let e = self.edge();
        let r = self.grid.half_width;
        let c = self.cube_multi_index(cube);
        let lo: Vec<f64> = c.iter().map(|&i| -r + i as f64 * e).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + e).collect();
        (lo, hi)
    }

    /// `δ(σ, ρ)`: the largest distance between a point of `σ` and a point of
    /// `ρ`, from the cube corners. The sup is separable over axes.
    pub fn delta(&self, sigma: usize, rho: usize) -> f64 {
        let (slo, shi) = self.cube_bounds(sigma);
        let (rlo, rhi) = self.cube_bounds(rho);
        (0..self.grid.m)
            .map(|d| {
                let a = (shi[d] - rlo[d]).abs().max((rhi[d] - slo[d]).abs());
                a * a
            })
            .sum::<f64>()
            .sqrt()
    }
}
