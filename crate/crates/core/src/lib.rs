//! Fractional Sobolev seminorms of manifold-valued maps on the cube, with
//! the mollification, dyadic projection and retraction machinery used to
//! approximate sphere-valued maps in `W^{s,p}`.
//!
//! Fields are sampled at cell centres of a uniform grid on `(-R, R)^m`
//! ([`Grid`], [`GridField`]). Every nonlocal quantity is a deterministic
//! reduction, so results do not depend on the size of the rayon pool.

pub mod acceptance;
pub mod counterexample;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod haar;
pub mod io;
pub mod manifold;
pub mod mollify;
pub mod parallel;
pub mod params;
pub mod pipeline;
pub mod resample;
pub mod seminorm;
pub mod sum;

pub use error::{Result, WspError};
pub use grid::{DyadicCubication, Grid, GridField};
pub use params::SobolevParams;
