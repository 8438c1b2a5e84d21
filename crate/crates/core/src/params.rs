//! Sobolev exponents.

use serde::{Deserialize, Serialize};

use crate::{Result, WspError};

/// Distance below which `sp` is snapped to the nearest integer when taking
/// its floor, so that e.g. `0.6 * 2.0` counts as `sp = 1.2` and `(1/3) * 3`
/// as `sp = 1`.
pub const FLOOR_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevParams {
    pub s: f64,
    pub p: f64,
    pub m: usize,
}

impl SobolevParams {
    pub fn new(s: f64, p: f64, m: usize) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(WspError::InvalidParameter(format!("s = {s} must lie in (0, 1)")));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(WspError::InvalidParameter(format!("p = {p} must be finite and >= 1")));
        }
        if m == 0 {
            return Err(WspError::InvalidParameter("m must be >= 1".into()));
        }
        Ok(Self { s, p, m })
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    /// `⌊sp⌋`, with values within [`FLOOR_SNAP`] of an integer rounded to it.
    pub fn floor_sp(&self) -> usize {
        let sp = self.sp();
        let r = sp.round();
        if (sp - r).abs() <= FLOOR_SNAP {
            r as usize
        } else {
            sp.floor() as usize
        }
    }

    /// True when `sp >= 1` in the snapped sense of [`Self::floor_sp`].
    pub fn is_high_regime(&self) -> bool {
        self.floor_sp() >= 1
    }

    /// Exponent of the Gagliardo kernel, `m + sp`.
    pub fn kernel_exponent(&self) -> f64 {
        self.m as f64 + self.sp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(SobolevParams::new(0.0, 2.0, 1).is_err());
        assert!(SobolevParams::new(1.0, 2.0, 1).is_err());
        assert!(SobolevParams::new(0.5, 0.5, 1).is_err());
        assert!(SobolevParams::new(0.5, f64::INFINITY, 1).is_err());
        assert!(SobolevParams::new(0.5, 2.0, 0).is_err());
    }

    #[test]
    fn floor_snaps_near_integers() {
        let p = SobolevParams::new(1.0 / 3.0, 3.0, 2).unwrap();
        assert_eq!(p.floor_sp(), 1);
        let p = SobolevParams::new(0.6, 2.0, 2).unwrap();
        assert_eq!(p.floor_sp(), 1);
        let p = SobolevParams::new(0.4, 2.0, 2).unwrap();
        assert_eq!(p.floor_sp(), 0);
        assert!(!p.is_high_regime());
        let p = SobolevParams::new(0.999_999_999_999_9, 1.0, 1).unwrap();
        assert_eq!(p.floor_sp(), 1);
    }
}
