//! Smooth cut-off `chi`: identically 1 on [0, 1], identically 0 on [2, inf),
//! non-increasing and C-infinity, built as the bump quotient
//! `chi(x) = psi(2 - x) / (psi(2 - x) + psi(x - 1))` with `psi(s) = e^{-1/s}`
//! for `s > 0` and 0 otherwise. Symmetric about 3/2, so `chi(3/2) = 1/2`.
//!
//! ```
//! use torus_sns::cutoff::{chi, chi_r};
//!
//! assert_eq!(chi(0.5), 1.0);
//! assert_eq!(chi(2.5), 0.0);
//! assert!((chi(1.5) - 0.5).abs() < 1e-15);
//! // chi_r(x, r) = chi(x / r): the plateau scales with the radius
//! assert_eq!(chi_r(4.0, 5.0).unwrap(), 1.0);
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Result, SnsError};

fn psi(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

fn psi_prime(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp() / (s * s)
    } else {
        0.0
    }
}

pub fn chi(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x >= 2.0 {
        0.0
    } else {
        let f = psi(2.0 - x);
        let g = psi(x - 1.0);
        f / (f + g)
    }
}

pub fn chi_prime(x: f64) -> f64 {
    if x <= 1.0 || x >= 2.0 {
        0.0
    } else {
        let f = psi(2.0 - x);
        let g = psi(x - 1.0);
        let fp = -psi_prime(2.0 - x);
        let gp = psi_prime(x - 1.0);
        (fp * g - f * gp) / (f + g).powi(2)
    }
}

pub fn chi_r(x: f64, r: f64) -> Result<f64> {
    if r < 1.0 {
        return Err(SnsError::invalid("R", "must be at least 1"));
    }
    Ok(chi(x / r))
}

pub fn chi_r_prime(x: f64, r: f64) -> Result<f64> {
    if r < 1.0 {
        return Err(SnsError::invalid("R", "must be at least 1"));
    }
    Ok(chi_prime(x / r) / r)
}

/// Cut-off parameters: the norm index `alpha`, the radius `R` and the shape
/// above. `alpha` must sit in the well-posedness window
/// `1/2 < alpha < 1 + 2 alpha0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub alpha: f64,
    pub r: f64,
}

impl CutoffSpec {
    pub fn new(alpha: f64, r: f64, alpha0: f64) -> Result<Self> {
        if !(alpha > 0.5 && alpha < 1.0 + 2.0 * alpha0) {
            return Err(SnsError::invalid(
                "alpha",
                format!(
                    "must lie in (1/2, {}) for alpha0 = {alpha0}",
                    1.0 + 2.0 * alpha0
                ),
            ));
        }
        if r < 1.0 {
            return Err(SnsError::invalid("R", "must be at least 1"));
        }
        Ok(CutoffSpec { alpha, r })
    }

    pub fn chi(&self, norm: f64) -> f64 {
        chi(norm / self.r)
    }

    pub fn chi_prime(&self, norm: f64) -> f64 {
        chi_prime(norm / self.r) / self.r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn plateau_tail_and_midpoint() {
        assert_eq!(chi(0.5), 1.0);
        assert_eq!(chi(3.0), 0.0);
        assert_eq!(chi_prime(3.0), 0.0);
        assert_relative_eq!(chi(1.5), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn scaled_version() {
        for r in [1.0, 2.0, 5.0] {
            assert_eq!(chi_r(r * 0.9, r).unwrap(), 1.0);
            assert_eq!(chi_r(2.0 * r, r).unwrap(), 0.0);
        }
        assert!(chi_r(1.0, 0.5).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let h = 1e-6;
        for x in [1.1, 1.3, 1.5, 1.7, 1.9] {
            let fd = (chi(x + h) - chi(x - h)) / (2.0 * h);
            assert_relative_eq!(chi_prime(x), fd, max_relative = 1e-6, epsilon = 1e-8);
        }
    }

    #[test]
    fn monotone_non_increasing() {
        let mut prev = chi(0.0);
        for i in 1..=300 {
            let x = i as f64 * 0.01;
            let c = chi(x);
            assert!(c <= prev + 1e-15);
            assert!((0.0..=1.0).contains(&c));
            prev = c;
        }
    }

    #[test]
    fn weighted_lipschitz_ratio_is_finite() {
        // sup |chi(x) - chi(y)| (1 + x)(1 + y) / |x - y| over a grid
        let grid: Vec<f64> = (0..1000).map(|i| i as f64 * 0.004).collect();
        let mut sup: f64 = 0.0;
        for (i, &x) in grid.iter().enumerate() {
            for &y in &grid[i + 1..] {
                let num = (chi(x) - chi(y)).abs() * (1.0 + x) * (1.0 + y);
                sup = sup.max(num / (y - x));
            }
        }
        assert!(sup.is_finite());
        assert!(sup > 0.0);
    }

    #[test]
    fn window_validation() {
        assert!(CutoffSpec::new(0.4, 2.0, 0.25).is_err());
        assert!(CutoffSpec::new(1.6, 2.0, 0.25).is_err());
        assert!(CutoffSpec::new(1.2, 2.0, 0.25).is_ok());
        assert!(CutoffSpec::new(1.2, 0.5, 0.25).is_err());
    }
}
