//! Bounded test functionals for semigroup probes. Everything here is
//! bounded and measurable; the squashed coordinate is close to linear near
//! the origin, which makes analytic cross-checks possible in the linear
//! regime.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SnsError};
use crate::spectral::field::{SpectralField, WaveVector};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunctional {
    Constant {
        value: f64,
    },
    /// `scale * tanh(Re u_k[component] / scale)`; near-identity for
    /// arguments much smaller than `scale`
    SquashedCoord {
        k: [i32; 3],
        component: usize,
        scale: f64,
    },
    /// `min(||u||_alpha, cap)`
    ClippedNorm {
        alpha: f64,
        cap: f64,
    },
}

impl TestFunctional {
    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunctional::Constant { .. } => Ok(()),
            TestFunctional::SquashedCoord {
                k,
                component,
                scale,
            } => {
                if WaveVector::new(k[0], k[1], k[2]).norm_sq() == 0 {
                    return Err(SnsError::invalid("k", "zero mode carries no state"));
                }
                if *component > 2 {
                    return Err(SnsError::invalid("component", "must be 0, 1 or 2"));
                }
                if *scale <= 0.0 {
                    return Err(SnsError::invalid("scale", "must be positive"));
                }
                Ok(())
            }
            TestFunctional::ClippedNorm { cap, .. } => {
                if *cap <= 0.0 {
                    return Err(SnsError::invalid("cap", "must be positive"));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, u: &SpectralField) -> f64 {
        match self {
            TestFunctional::Constant { value } => *value,
            TestFunctional::SquashedCoord {
                k,
                component,
                scale,
            } => {
                let kv = WaveVector::new(k[0], k[1], k[2]);
                let c = u.coeff_at(&kv);
                scale * (c[*component].re / scale).tanh()
            }
            TestFunctional::ClippedNorm { alpha, cap } => u.sobolev_norm(*alpha).min(*cap),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunctional::Constant { value } => format!("constant({value})"),
            TestFunctional::SquashedCoord {
                k,
                component,
                scale,
            } => {
                format!(
                    "squashed-coord(k=({},{},{}),c={component},L={scale})",
                    k[0], k[1], k[2]
                )
            }
            TestFunctional::ClippedNorm { alpha, cap } => {
                format!("clipped-norm(alpha={alpha},cap={cap})")
            }
        }
    }
}
