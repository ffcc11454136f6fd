//! Quadrature check of the weight-function bound used in the mild
//! formulation: with
//!
//! ```text
//! a(t) = t^x              for t <= delta
//!        delta^x e^{-eta (t - delta)}   for t >  delta
//! ```
//!
//! the quantity `a(t) int_0^t (t-s)^{-y} a(s)^{-1} ds` stays below
//! `B(1-x, 1-y) delta^{1-y} + eta^{y-1} Gamma(1-y)` for all `t > 0`.
//! Both endpoint singularities are integrable (`x, y < 1`) and removed by
//! power substitutions before a fixed-order composite rule is applied.

use serde::Serialize;
use statrs::function::beta::beta;
use statrs::function::gamma::gamma;

use crate::error::{Result, SnsError};

fn weight(t: f64, x: f64, delta: f64, eta: f64) -> f64 {
    if t <= delta {
        t.powf(x)
    } else {
        delta.powf(x) * (-eta * (t - delta)).exp()
    }
}

/// Composite Simpson on [0, 1]; the integrands below are smooth there.
fn simpson01(f: impl Fn(f64) -> f64, panels: usize) -> f64 {
    let n = 2 * panels;
    let h = 1.0 / n as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

/// `int_0^t (t-s)^{-y} a(s)^{-1} ds`, de-singularized.
fn convolution(t: f64, x: f64, y: f64, delta: f64, eta: f64) -> f64 {
    let panels = 2048;
    if t <= delta {
        // a(s) = s^x throughout; the closed form is exact here
        return t.powf(1.0 - x - y) * beta(1.0 - x, 1.0 - y);
    }
    // [0, delta]: only the s = 0 singularity is active; s = delta w^{1/(1-x)}
    // turns s^{-x} ds into (delta^{1-x}/(1-x)) dw
    let head = delta.powf(1.0 - x) / (1.0 - x)
        * simpson01(
            |w| {
                let s = delta * w.powf(1.0 / (1.0 - x));
                (t - s).powf(-y)
            },
            panels,
        );
    // [delta, t]: substitute u = t - s, then u = (t-delta) w^{1/(1-y)}
    let span = t - delta;
    let tail = delta.powf(-x) * span.powf(1.0 - y) / (1.0 - y)
        * simpson01(
            |w| {
                let u = span * w.powf(1.0 / (1.0 - y));
                (eta * (t - delta - u)).exp()
            },
            panels,
        );
    head + tail
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightBoundReport {
    pub x: f64,
    pub y: f64,
    pub delta: f64,
    pub eta: f64,
    pub bound: f64,
    /// max over the t-grid of `a(t) * convolution(t)`
    pub max_value: f64,
    pub max_at: f64,
    pub pass: bool,
    pub tolerance: f64,
}

pub fn weight_bound_check(
    x: f64,
    y: f64,
    delta: f64,
    eta: f64,
    t_grid: &[f64],
) -> Result<WeightBoundReport> {
    if !(0.0..1.0).contains(&x) || !(0.0..1.0).contains(&y) {
        return Err(SnsError::invalid("x", "x and y must lie in [0, 1)"));
    }
    if delta <= 0.0 || eta <= 0.0 {
        return Err(SnsError::invalid("delta", "delta and eta must be positive"));
    }
    if t_grid.iter().any(|&t| t <= 0.0) {
        return Err(SnsError::invalid("t_grid", "times must be positive"));
    }
    let bound = beta(1.0 - x, 1.0 - y) * delta.powf(1.0 - y) + eta.powf(y - 1.0) * gamma(1.0 - y);
    let tolerance = 1e-6;
    let mut max_value = f64::NEG_INFINITY;
    let mut max_at = 0.0;
    for &t in t_grid {
        let v = weight(t, x, delta, eta) * convolution(t, x, y, delta, eta);
        if v > max_value {
            max_value = v;
            max_at = t;
        }
    }
    Ok(WeightBoundReport {
        x,
        y,
        delta,
        eta,
        bound,
        max_value,
        max_at,
        pass: max_value <= bound + tolerance,
        tolerance,
    })
}
