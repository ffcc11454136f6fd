//! Gaussian covariance and the Ornstein-Uhlenbeck (Stokes) process `z`.
//!
//! The covariance is diagonal over Fourier modes with an exact power law
//! `sigma_k = c0 |k|^{-(3/2 + 2 alpha0)}`, so dividing and re-multiplying by
//! `sigma_k` is the identity and the inverse square root of the covariance
//! is explicit.
//!
//! Each tangential complex component of a mode is advanced with the exact
//! OU transition. The innovation is drawn jointly with the underlying
//! Brownian increment, so the one-step law is exact *and* the increments can
//! be persisted for stochastic integrals downstream.
//!
//! ```
//! use torus_sns::noise::{sample_z_path, uniform_grid, NoiseSpec};
//! use torus_sns::rng::stream_rng;
//! use torus_sns::spectral::ModeSet;
//!
//! let modes = ModeSet::new(2);
//! let noise = NoiseSpec::new(0.25, 0.5).unwrap();
//! let grid = uniform_grid(0.01, 40);
//! let z = sample_z_path(&modes, &grid, 1.0, &noise, &mut stream_rng(9, 0)).unwrap();
//! assert_eq!(z.fields.len(), 41);
//! // a coarse view of the same realization, for step-halving studies
//! let coarse = z.subsample(4);
//! assert_eq!(coarse.fields.len(), 11);
//! assert_eq!(coarse.times[1], z.times[4]);
//! ```

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnsError};
use crate::rng::stream_rng;
use crate::spectral::field::{ModeSet, SobolevIndex, SpectralField, WaveVector};
use crate::stats::{linear_fit, wilson_ci};

/// Covariance eigenvalue rule `sigma_k = c0 |k|^{-(3/2 + 2 alpha0)}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub alpha0: f64,
    pub c0: f64,
}

impl NoiseSpec {
    pub fn new(alpha0: f64, c0: f64) -> Result<Self> {
        if alpha0 <= 0.0 {
            return Err(SnsError::invalid("alpha0", "must be positive"));
        }
        if c0 < 0.0 {
            return Err(SnsError::invalid("c0", "must be nonnegative"));
        }
        Ok(NoiseSpec { alpha0, c0 })
    }

    /// Decay exponent of `sigma_k`, `3/2 + 2 alpha0`.
    pub fn decay_exponent(&self) -> f64 {
        1.5 + 2.0 * self.alpha0
    }

    pub fn sigma_of(&self, k: &WaveVector) -> Result<f64> {
        if k.is_zero() {
            return Err(SnsError::ZeroWaveVector);
        }
        Ok(self.c0 * k.norm().powf(-self.decay_exponent()))
    }

    /// Largest regularity index with finite stationary norm, `1 + 2 alpha0`.
    pub fn regularity_ceiling(&self) -> f64 {
        1.0 + 2.0 * self.alpha0
    }
}

/// Deterministic orthonormal frame of the plane orthogonal to `k`.
pub fn tangent_frame(k: &WaveVector) -> [[f64; 3]; 2] {
    let kf = [k.x as f64, k.y as f64, k.z as f64];
    // axis with the smallest |component|, lowest index on ties
    let abs = [kf[0].abs(), kf[1].abs(), kf[2].abs()];
    let mut axis = 0;
    for i in 1..3 {
        if abs[i] < abs[axis] {
            axis = i;
        }
    }
    let mut a = [0.0; 3];
    a[axis] = 1.0;
    let cross = |p: [f64; 3], q: [f64; 3]| {
        [
            p[1] * q[2] - p[2] * q[1],
            p[2] * q[0] - p[0] * q[2],
            p[0] * q[1] - p[1] * q[0],
        ]
    };
    let normalize = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    let e1 = normalize(cross(kf, a));
    let e2 = normalize(cross(kf, e1));
    [e1, e2]
}

/// Tangential complex components of a coefficient in the frame of `k`.
pub fn tangent_components(k: &WaveVector, c: &[Complex64; 3]) -> [Complex64; 2] {
    let frame = tangent_frame(k);
    let mut out = [Complex64::new(0.0, 0.0); 2];
    for (j, e) in frame.iter().enumerate() {
        out[j] = c[0] * e[0] + c[1] * e[1] + c[2] * e[2];
    }
    out
}

fn recompose(k: &WaveVector, a: &[Complex64; 2]) -> [Complex64; 3] {
    let frame = tangent_frame(k);
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for (j, e) in frame.iter().enumerate() {
        for i in 0..3 {
            out[i] += a[j] * e[i];
        }
    }
    out
}

/// Brownian increments over one step: one complex increment per tangential
/// direction per representative mode.
pub type StepIncrements = Vec<[Complex64; 2]>;

/// Exact one-step OU transition for every mode, also returning the jointly
/// sampled Brownian increments that drove the step.
pub fn ou_exact_step_with_increments<R: Rng>(
    z: &SpectralField,
    dt: f64,
    nu: f64,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<(SpectralField, StepIncrements)> {
    if dt <= 0.0 {
        return Err(SnsError::invalid("dt", "must be positive"));
    }
    let modes = z.mode_set().clone();
    let mut out = SpectralField::zero(modes.clone());
    let mut increments = Vec::with_capacity(modes.len());
    for (i, k) in modes.modes().iter().enumerate() {
        let lambda = k.norm_sq() as f64;
        let phi = (-nu * lambda * dt).exp();
        let sigma = spec.sigma_of(k)?;
        // per complex tangential component: innovation variance v, split
        // evenly over real and imaginary parts
        let v = sigma * sigma * (1.0 - phi * phi) / (2.0 * nu * lambda);
        // joint law of (innovation, Brownian increment) per real part:
        // cov = (sigma / sqrt 2) (1 - phi) / (nu lambda)
        let cov = sigma / std::f64::consts::SQRT_2 * (1.0 - phi) / (nu * lambda);
        let c1 = cov / dt;
        let c2 = (v / 2.0 - c1 * c1 * dt).max(0.0).sqrt();
        let sqrt_dt = dt.sqrt();

        let a = tangent_components(k, &z.coeffs()[i]);
        let mut a_next = [Complex64::new(0.0, 0.0); 2];
        let mut dbeta = [Complex64::new(0.0, 0.0); 2];
        for j in 0..2 {
            let g1: f64 = StandardNormal.sample(rng);
            let g2: f64 = StandardNormal.sample(rng);
            let g3: f64 = StandardNormal.sample(rng);
            let g4: f64 = StandardNormal.sample(rng);
            let db = Complex64::new(sqrt_dt * g1, sqrt_dt * g2);
            let eta = Complex64::new(c1 * db.re + c2 * g3, c1 * db.im + c2 * g4);
            a_next[j] = phi * a[j] + eta;
            dbeta[j] = db;
        }
        out.coeffs_mut()[i] = recompose(k, &a_next);
        increments.push(dbeta);
    }
    Ok((out, increments))
}

/// Exact one-step OU transition; see [`ou_exact_step_with_increments`].
pub fn ou_exact_step<R: Rng>(
    z: &SpectralField,
    dt: f64,
    nu: f64,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<SpectralField> {
    Ok(ou_exact_step_with_increments(z, dt, nu, spec, rng)?.0)
}

/// A sampled path of the Stokes process, `z(0) = 0`, with the Brownian
/// increments of each step persisted for reuse.
pub struct ZPath {
    pub times: Vec<f64>,
    pub fields: Vec<SpectralField>,
    /// `increments[i]` drove the step from `times[i]` to `times[i+1]`.
    pub increments: Vec<StepIncrements>,
}

impl ZPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Restriction to every `stride`-th grid point; Brownian increments of
    /// merged steps add exactly.
    pub fn subsample(&self, stride: usize) -> ZPath {
        assert!(stride >= 1);
        assert_eq!(
            (self.times.len() - 1) % stride,
            0,
            "stride must divide the step count"
        );
        let times: Vec<f64> = self.times.iter().step_by(stride).copied().collect();
        let fields: Vec<SpectralField> = self.fields.iter().step_by(stride).cloned().collect();
        let mut increments = Vec::new();
        for chunk in self.increments.chunks(stride) {
            let n_modes = chunk[0].len();
            let mut merged: StepIncrements = vec![[Complex64::new(0.0, 0.0); 2]; n_modes];
            for step in chunk {
                for (m, inc) in merged.iter_mut().zip(step) {
                    m[0] += inc[0];
                    m[1] += inc[1];
                }
            }
            increments.push(merged);
        }
        ZPath {
            times,
            fields,
            increments,
        }
    }
}

/// Iterated exact OU stepping over a strictly increasing grid starting at 0.
pub fn sample_z_path<R: Rng>(
    modes: &Arc<ModeSet>,
    grid: &[f64],
    nu: f64,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<ZPath> {
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(SnsError::invalid("grid", "must start at t = 0"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SnsError::invalid("grid", "must be strictly increasing"));
    }
    let mut fields = vec![SpectralField::zero(modes.clone())];
    let mut increments = Vec::with_capacity(grid.len() - 1);
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        let (next, inc) = ou_exact_step_with_increments(fields.last().unwrap(), dt, nu, spec, rng)?;
        fields.push(next);
        increments.push(inc);
    }
    Ok(ZPath {
        times: grid.to_vec(),
        fields,
        increments,
    })
}

/// Uniform grid `0, dt, 2 dt, ..., steps * dt`.
pub fn uniform_grid(dt: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| i as f64 * dt).collect()
}

/// Analytic `E ||z(t)||_beta^2` for the exact OU law started at 0.
pub fn analytic_z_variance(
    modes: &ModeSet,
    spec: &NoiseSpec,
    nu: f64,
    t: f64,
    beta: SobolevIndex,
) -> f64 {
    let mut s = 0.0;
    for k in modes.modes() {
        let lambda = k.norm_sq() as f64;
        let sigma = spec.sigma_of(k).expect("nonzero mode");
        // two tangential complex components per mode, doubled for the pair
        s += 2.0 * 2.0 * lambda.powf(beta) * sigma * sigma * (1.0 - (-2.0 * nu * lambda * t).exp())
            / (2.0 * nu * lambda);
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub beta: f64,
    pub eps: f64,
    pub k: f64,
    pub n_samples: u64,
    pub n_exceed: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailFitSummary {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_se: f64,
    /// set when the run violated `beta < 1 + 2 alpha0`
    pub hypothesis_violated: bool,
}

#[derive(Debug, Serialize)]
pub struct TailMcResult {
    pub rows: Vec<TailRow>,
    pub fit: Option<TailFitSummary>,
    pub hypothesis_violated: bool,
}

/// Monte Carlo tail of `sup_{s <= eps} ||z(s)||_beta` over a refined sub-grid,
/// with Wilson intervals per threshold and a least-squares slope of
/// `log p` against `K^2 / eps` restricted to thresholds with at least 10
/// exceedances.
#[allow(clippy::too_many_arguments)]
pub fn sup_norm_tail_mc(
    modes: &Arc<ModeSet>,
    spec: &NoiseSpec,
    beta: SobolevIndex,
    eps: f64,
    k_values: &[f64],
    samples: u64,
    nu: f64,
    refine: usize,
    seed: u64,
) -> Result<TailMcResult> {
    if eps <= 0.0 {
        return Err(SnsError::invalid("eps", "must be positive"));
    }
    if k_values.iter().any(|&k| k < 0.5) {
        return Err(SnsError::invalid("K", "thresholds must be at least 1/2"));
    }
    let hypothesis_violated = beta >= spec.regularity_ceiling();
    let grid = uniform_grid(eps / refine as f64, refine);

    let sups: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let path = sample_z_path(modes, &grid, nu, spec, &mut rng).expect("valid grid");
            path.fields
                .iter()
                .map(|f| f.sobolev_norm(beta))
                .fold(0.0_f64, f64::max)
        })
        .collect();

    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let n_exceed = sups.iter().filter(|&&s| s >= k).count() as u64;
        let p_hat = n_exceed as f64 / samples as f64;
        let (ci_lo, ci_hi) = wilson_ci(n_exceed, samples);
        rows.push(TailRow {
            beta,
            eps,
            k,
            n_samples: samples,
            n_exceed,
            p_hat,
            ci_lo,
            ci_hi,
        });
    }

    // fit only where at least 10 exceedances keep the estimate out of pure noise
    let fit_rows: Vec<&TailRow> = rows
        .iter()
        .filter(|r| r.n_exceed >= 10 && r.p_hat < 1.0)
        .collect();
    let fit = if fit_rows.len() >= 2 {
        let x: Vec<f64> = fit_rows.iter().map(|r| r.k * r.k / eps).collect();
        let y: Vec<f64> = fit_rows.iter().map(|r| r.p_hat.ln()).collect();
        let (slope, intercept, r2, slope_se) = linear_fit(&x, &y);
        Some(TailFitSummary {
            slope,
            intercept,
            r2,
            slope_se,
            hypothesis_violated,
        })
    } else {
        None
    };
    Ok(TailMcResult {
        rows,
        fit,
        hypothesis_violated,
    })
}
