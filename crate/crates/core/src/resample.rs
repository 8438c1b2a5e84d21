//! Extension of fields beyond the cube and restriction back to it.

use crate::{Grid, GridField, Result, WspError};

/// `u_γ(x) = u(x / (1 + 2γ))` on a grid of half-width `(1 + 2γ) R`, by the
/// nearest-node rule, so no new values are created.
pub fn resample_scaled(u: &GridField, gamma: f64, new_grid: Grid) -> Result<GridField> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(WspError::InvalidParameter(format!("gamma = {gamma} must be > 0")));
    }
    let g = *u.grid();
    if new_grid.m != g.m {
        return Err(WspError::DimensionMismatch(format!("m = {} vs m = {}", new_grid.m, g.m)));
    }
    let factor = 1.0 + 2.0 * gamma;
    let want = factor * g.half_width;
    if (new_grid.half_width - want).abs() > 1e-12 * want {
        return Err(WspError::InvalidParameter(format!(
            "new grid half-width {} must equal (1 + 2 gamma) R = {want}",
            new_grid.half_width
        )));
    }
    let h = g.h();
    let nearest: Vec<usize> = (0..new_grid.n)
        .map(|i| {
            let y = new_grid.coord(i) / factor;
            let k = ((y + g.half_width) / h - 0.5).round();
            k.clamp(0.0, (g.n - 1) as f64) as usize
        })
        .collect();
    let nu = u.nu();
    let m = g.m;
    let mut values = Vec::with_capacity(new_grid.node_count() * nu);
    let mut idx = vec![0; m];
    let mut src = vec![0; m];
    for i in 0..new_grid.node_count() {
        new_grid.multi_index(i, &mut idx);
        for d in 0..m {
            src[d] = nearest[idx[d]];
        }
        values.extend_from_slice(u.value(g.flat_index(&src)));
    }
    GridField::new(new_grid, nu, values)
}

/// Even reflection across each face, adding `k` nodes per side. The grid
/// spacing is unchanged and interior nodes keep their values.
pub fn extend_reflect(u: &GridField, k: usize) -> Result<GridField> {
    let g = *u.grid();
    if k > g.n {
        return Err(WspError::InvalidParameter(format!(
            "reflection margin {k} exceeds N = {}",
            g.n
        )));
    }
    let n2 = g.n + 2 * k;
    let big = Grid::new(g.m, n2, g.half_width + k as f64 * g.h())?;
    let n = g.n as isize;
    let mirror = |i: usize| -> usize {
        let i = i as isize - k as isize;
        let j = if i < 0 {
            -i - 1
        } else if i >= n {
            2 * n - 1 - i
        } else {
            i
        };
        j as usize
    };
    let map: Vec<usize> = (0..n2).map(mirror).collect();
    let nu = u.nu();
    let mut values = Vec::with_capacity(big.node_count() * nu);
    let mut idx = vec![0; g.m];
    let mut src = vec![0; g.m];
    for i in 0..big.node_count() {
        big.multi_index(i, &mut idx);
        for d in 0..g.m {
            src[d] = map[idx[d]];
        }
        values.extend_from_slice(u.value(g.flat_index(&src)));
    }
    GridField::new(big, nu, values)
}

/// The central `n^m` block of `u`, on a grid with the same spacing.
pub fn restrict_centered(u: &GridField, n: usize) -> Result<GridField> {
    let g = *u.grid();
    if n == 0 || n > g.n || (g.n - n) % 2 != 0 {
        return Err(WspError::InvalidParameter(format!(
            "cannot restrict N = {} to a centred block of {n}",
            g.n
        )));
    }
    let off = (g.n - n) / 2;
    let small = Grid::new(g.m, n, g.half_width - off as f64 * g.h())?;
    let nu = u.nu();
    let mut values = Vec::with_capacity(small.node_count() * nu);
    let mut idx = vec![0; g.m];
    for i in 0..small.node_count() {
        small.multi_index(i, &mut idx);
        idx.iter_mut().for_each(|x| *x += off);
        values.extend_from_slice(u.value(g.flat_index(&idx)));
    }
    GridField::new(small, nu, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_stays_constant() {
        let g = Grid::unit(2, 6).unwrap();
        let u = GridField::constant(g, &[0.3, -0.4]).unwrap();
        for gamma in [0.1, 0.25, 1.0] {
            let ng = Grid::new(2, 9, 1.0 + 2.0 * gamma).unwrap();
            let v = resample_scaled(&u, gamma, ng).unwrap();
            assert!(v.nodes().all(|y| y == [0.3, -0.4]));
        }
    }

    #[test]
    fn sign_extends_to_sign() {
        let g = Grid::unit(1, 4).unwrap();
        let u = GridField::from_fn(g, 1, |x, o| o[0] = x[0].signum()).unwrap();
        let ng = Grid::new(1, 8, 2.0).unwrap();
        let v = resample_scaled(&u, 0.5, ng).unwrap();
        for i in 0..8 {
            assert_eq!(v.value(i)[0], ng.coord(i).signum());
        }
    }

    #[test]
    fn tiny_gamma_on_identical_node_layout_is_identity() {
        let g = Grid::unit(2, 8).unwrap();
        let u = GridField::from_fn(g, 1, |x, o| o[0] = x[0] * 3.0 + x[1]).unwrap();
        let gamma = 1e-9;
        let ng = Grid::new(2, 8, 1.0 + 2.0 * gamma).unwrap();
        let v = resample_scaled(&u, gamma, ng).unwrap();
        assert_eq!(v.values(), u.values());
    }

    #[test]
    fn rejects_bad_gamma_and_grid() {
        let g = Grid::unit(1, 4).unwrap();
        let u = GridField::constant(g, &[1.0]).unwrap();
        assert!(resample_scaled(&u, 0.0, g).is_err());
        assert!(resample_scaled(&u, 0.5, Grid::new(1, 4, 1.5).unwrap()).is_err());
    }

    #[test]
    fn reflect_then_restrict_is_identity() {
        let g = Grid::unit(2, 6).unwrap();
        let u = GridField::from_fn(g, 2, |x, o| {
            o[0] = x[0];
            o[1] = x[1] * x[0];
        })
        .unwrap();
        let e = extend_reflect(&u, 3).unwrap();
        assert_eq!(e.grid().n, 12);
        assert!((e.grid().half_width - 2.0).abs() < 1e-15);
        let back = restrict_centered(&e, 6).unwrap();
        assert_eq!(back.values(), u.values());
        assert!((back.grid().half_width - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reflection_mirrors_across_faces() {
        let g = Grid::unit(1, 4).unwrap();
        let u = GridField::new(g, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let e = extend_reflect(&u, 2).unwrap();
        assert_eq!(e.values(), &[2.0, 1.0, 1.0, 2.0, 3.0, 4.0, 4.0, 3.0]);
    }

    proptest! {
        #[test]
        fn resample_invents_no_values(
            vals in proptest::collection::vec(-10.0f64..10.0, 16),
            gamma in 0.01f64..2.0,
            n_new in 1usize..20,
        ) {
            let g = Grid::unit(2, 4).unwrap();
            let u = GridField::new(g, 1, vals.clone()).unwrap();
            let ng = Grid::new(2, n_new, 1.0 + 2.0 * gamma).unwrap();
            let v = resample_scaled(&u, gamma, ng).unwrap();
            for y in v.values() {
                prop_assert!(vals.iter().any(|a| a.to_bits() == y.to_bits()));
            }
        }
    }
}
