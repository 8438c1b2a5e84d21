//! Named test fields.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::counterexample::PlateauBump;
use crate::{DyadicCubication, Grid, GridField, Result, WspError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// `(1, 0)` everywhere.
    Constant,
    /// `x_0`.
    Linear,
    /// Radial bump `exp(1 - 1/(1 - |x|^2/r^2))`, `r = 0.7`.
    Bump,
    /// `x/|x|`, with `nu = m`.
    Vortex,
    /// `(x/|x|, 0)` on `m = 2`.
    EquatorVortex,
    /// Seeded uniform values on the level-2 dyadic cubes.
    StepRandom,
    /// The counterexample bump at frequency 4.
    Oscillation,
    /// `(cos a, sin a)` with a smooth phase `a`; winding number 0.
    SmoothCircle,
}

pub const ALL: [Fixture; 8] = [
    Fixture::Constant,
    Fixture::Linear,
    Fixture::Bump,
    Fixture::Vortex,
    Fixture::EquatorVortex,
    Fixture::StepRandom,
    Fixture::Oscillation,
    Fixture::SmoothCircle,
];

impl Fixture {
    pub fn token(self) -> &'static str {
        match self {
            Fixture::Constant => "constant",
            Fixture::Linear => "linear",
            Fixture::Bump => "bump",
            Fixture::Vortex => "vortex",
            Fixture::EquatorVortex => "equator-vortex",
            Fixture::StepRandom => "step-random",
            Fixture::Oscillation => "oscillation",
            Fixture::SmoothCircle => "smooth-circle",
        }
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Fixture {
    type Err = WspError;

    fn from_str(s: &str) -> Result<Self> {
        ALL.iter()
            .copied()
            .find(|f| f.token() == s)
            .ok_or_else(|| WspError::UnknownFixture(s.to_string()))
    }
}

pub const BUMP_RADIUS: f64 = 0.7;

fn bump(x: &[f64]) -> f64 {
    let r2 = x.iter().map(|v| v * v).sum::<f64>() / (BUMP_RADIUS * BUMP_RADIUS);
    if r2 < 1.0 {
        (1.0 - 1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

fn smooth_phase(x: &[f64]) -> f64 {
    let y = x.get(1).copied().unwrap_or(0.0);
    1.2 * (std::f64::consts::FRAC_PI_2 * x[0]).sin() * (std::f64::consts::FRAC_PI_2 * y).cos() + 0.3
}

fn radial(x: &[f64], out: &mut [f64]) -> Result<()> {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(WspError::InvalidParameter("x/|x| is undefined at a node on the origin (use even N)".into()));
    }
    for (o, v) in out.iter_mut().zip(x) {
        *o = v / r;
    }
    Ok(())
}

fn from_fallible(grid: Grid, nu: usize, f: impl Fn(&[f64], &mut [f64]) -> Result<()>) -> Result<GridField> {
    let mut err = None;
    let field = GridField::from_fn(grid, nu, |x, o| {
        if err.is_none() {
            if let Err(e) = f(x, o) {
                err = Some(e);
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(field),
    }
}

/// Deterministic for a given name, grid and seed; only `step-random` uses
/// the seed.
pub fn generate_fixture(fixture: Fixture, grid: Grid, seed: u64) -> Result<GridField> {
    match fixture {
        Fixture::Constant => GridField::constant(grid, &[1.0, 0.0]),
        Fixture::Linear => GridField::from_fn(grid, 1, |x, o| o[0] = x[0]),
        Fixture::Bump => GridField::from_fn(grid, 1, |x, o| o[0] = bump(x)),
        Fixture::Vortex => from_fallible(grid, grid.m, radial),
        Fixture::EquatorVortex => {
            need_m2(grid)?;
            from_fallible(grid, 3, |x, o| {
                radial(x, &mut o[..2])?;
                o[2] = 0.0;
                Ok(())
            })
        }
        Fixture::StepRandom => {
            let cub = DyadicCubication::new(grid, 2)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f64> = (0..cub.cube_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            GridField::new(grid, 1, (0..grid.node_count()).map(|i| vals[cub.cube_of(i)]).collect())
        }
        Fixture::Oscillation => {
            let b = PlateauBump::default();
            GridField::from_fn(grid, 1, |x, o| o[0] = b.periodic(x, 4.0))
        }
        Fixture::SmoothCircle => GridField::from_fn(grid, 2, |x, o| {
            let a = smooth_phase(x);
            o[0] = a.cos();
            o[1] = a.sin();
        }),
    }
}

/// `x/|x|` reflected across the first axis, `(x_0, -x_1)/|x|`.
pub fn conjugate_vortex(grid: Grid) -> Result<GridField> {
    need_m2(grid)?;
    from_fallible(grid, 2, |x, o| {
        radial(x, o)?;
        o[1] = -o[1];
        Ok(())
    })
}

fn need_m2(grid: Grid) -> Result<()> {
    if grid.m != 2 {
        return Err(WspError::InvalidParameter(format!("needs m = 2, got m = {}", grid.m)));
    }
    Ok(())
}

/// Smooth scalar fields on `m = 2` used for the Haar convergence audits.
pub fn smooth_family(grid: Grid) -> Result<Vec<(&'static str, GridField)>> {
    need_m2(grid)?;
    use std::f64::consts::PI;
    let make = |f: fn(f64, f64) -> f64| GridField::from_fn(grid, 1, move |x, o| o[0] = f(x[0], x[1]));
    Ok(vec![
        ("linear", make(|x, y| x + 0.5 * y)?),
        ("sine", make(|x, y| (PI * x).sin() * (PI * y / 2.0).cos())?),
        ("gauss", make(|x, y| (-((x - 0.3).powi(2) + (y + 0.2).powi(2)) / 0.3).exp())?),
        ("wave", make(|x, y| (PI * (x + 2.0 * y) / 2.0).sin())?),
        ("bump", generate_fixture(Fixture::Bump, grid, 0)?),
    ])
}
