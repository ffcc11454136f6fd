//! Monte Carlo study of the stopping time `tau` (first exit of the cut-off
//! solution from the ball of radius R): the event "the driving path stays
//! below R/3 up to T" forces `tau >= T` whenever `T <= c' R^{-theta}` with
//! `theta = 4/((2 alpha - 1) ^ 2)` (minimum with 2). The empirical `c'` is
//! the largest constant with zero violations over the sampled paths, and
//! the unconditional exit probability is tabulated against `R^2 / T`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cutoff::CutoffSpec;
use crate::dynamics::{simulate, RecordOptions, SimConfig};
use crate::error::{Result, SnsError};
use crate::noise::{sample_z_path, uniform_grid, NoiseSpec, TailFitSummary};
use crate::rng::stream_rng;
use crate::spectral::field::SpectralField;
use crate::stats::{linear_fit, wilson_ci};

#[derive(Debug, Clone, Serialize)]
pub struct BlowupParams {
    pub cutoff: CutoffSpec,
    pub noise: NoiseSpec,
    pub nu: f64,
    pub dt: f64,
    pub horizon: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupRow {
    pub t: f64,
    /// abscissa of the tail plot, `R^2 / t`
    pub x: f64,
    pub n_samples: usize,
    pub n_exit: usize,
    pub p_exit: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupResult {
    /// `4 / ((2 alpha - 1) ^ 2)`
    pub theta: f64,
    /// largest c with zero violations of the inclusion at `T = c R^{-theta}`
    pub c_prime: f64,
    /// re-counted violations at `c'` (0 by construction, re-checked)
    pub violations_at_c_prime: usize,
    /// fraction of paths whose driving sup stayed below R/3 on the horizon
    pub z_event_rate: f64,
    pub rows: Vec<BlowupRow>,
    /// least squares of `log p_exit` against `R^2 / t`
    pub fit: Option<TailFitSummary>,
}

/// Per replica: the stopping time (infinity if never) and the first time
/// the driving sup exceeds R/3 (infinity if never).
fn replica(
    x: &SpectralField,
    params: &BlowupParams,
    cfg: &SimConfig,
    stream: u64,
) -> Result<(f64, f64)> {
    let modes = x.mode_set();
    let grid = uniform_grid(params.dt, cfg.steps());
    let z = sample_z_path(
        modes,
        &grid,
        params.nu,
        &params.noise,
        &mut stream_rng(params.seed, stream),
    )?;
    let opts = RecordOptions {
        alphas: vec![params.cutoff.alpha],
        snapshot_every: None,
    };
    let rec = simulate(x, cfg, Some(&params.cutoff), &z, &opts)?;
    let tau = rec.tau.unwrap_or(f64::INFINITY);
    let limit = params.cutoff.r / 3.0;
    let mut t_z = f64::INFINITY;
    for (i, zf) in z.fields.iter().enumerate() {
        if zf.sobolev_norm(params.cutoff.alpha) > limit {
            t_z = grid[i];
            break;
        }
    }
    Ok((tau, t_z))
}

pub fn blowup_mc(x: &SpectralField, params: &BlowupParams, t_grid: &[f64]) -> Result<BlowupResult> {
    let r = params.cutoff.r;
    let alpha = params.cutoff.alpha;
    if x.sobolev_norm(alpha) > r / 3.0 + 1e-12 {
        return Err(SnsError::invalid("x", "must satisfy ||x|| <= R/3"));
    }
    if t_grid.iter().any(|&t| t <= 0.0 || t > params.horizon) {
        return Err(SnsError::invalid(
            "t_grid",
            "times must lie in (0, horizon]",
        ));
    }
    let cfg = SimConfig {
        nu: params.nu,
        dt: params.dt,
        t_end: params.horizon,
        n_modes: x.mode_set().cutoff(),
        integrator: crate::dynamics::Integrator::ExponentialEuler,
        seed: params.seed,
        linear_only: false,
    };
    let outcomes: Vec<(f64, f64)> = (0..params.samples)
        .into_par_iter()
        .map(|i| replica(x, params, &cfg, i as u64))
        .collect::<Result<_>>()?;

    let theta = 4.0 / (2.0 * alpha - 1.0).min(2.0);
    // the inclusion can only fail on replicas where the exit comes before
    // the driving path leaves the small ball; the safe horizon is the
    // earliest such exit
    let t_star = outcomes
        .iter()
        .filter(|(tau, t_z)| tau < t_z)
        .map(|(tau, _)| *tau)
        .fold(params.horizon, f64::min);
    let c_prime = t_star * r.powf(theta);
    let t_check = t_star * (1.0 - 1e-9);
    let violations_at_c_prime = outcomes
        .iter()
        .filter(|(tau, t_z)| *t_z > t_check && *tau < t_check)
        .count();
    let z_event_rate =
        outcomes.iter().filter(|(_, t_z)| t_z.is_infinite()).count() as f64 / params.samples as f64;

    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let n_exit = outcomes.iter().filter(|(tau, _)| *tau <= t).count();
        let (ci_lo, ci_hi) = wilson_ci(n_exit as u64, params.samples as u64);
        rows.push(BlowupRow {
            t,
            x: r * r / t,
            n_samples: params.samples,
            n_exit,
            p_exit: n_exit as f64 / params.samples as f64,
            ci_lo,
            ci_hi,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|row| row.n_exit >= 5 && row.n_exit < row.n_samples)
        .map(|row| (row.x, (row.p_exit).ln()))
        .collect();
    let fit = if pts.len() >= 3 {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (slope, intercept, r2, slope_se) = linear_fit(&xs, &ys);
        Some(TailFitSummary {
            slope,
            intercept,
            r2,
            slope_se,
            hypothesis_violated: false,
        })
    } else {
        None
    };
    Ok(BlowupResult {
        theta,
        c_prime,
        violations_at_c_prime,
        z_event_rate,
        rows,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::spectral::field::{random_field, ModeSet};

    fn params(c0: f64, samples: usize) -> BlowupParams {
        BlowupParams {
            cutoff: CutoffSpec::new(1.2, 2.0, 0.25).unwrap(),
            noise: NoiseSpec::new(0.25, c0).unwrap(),
            nu: 1.0,
            dt: 0.02,
            horizon: 1.0,
            samples,
            seed: 77,
        }
    }

    fn start(r: f64, alpha: f64) -> SpectralField {
        let modes = ModeSet::new(2);
        let x = random_field(&modes, 1.2, 1.0, &mut stream_rng(70, 0));
        let scale = (r / 3.0) / x.sobolev_norm(alpha);
        x.scaled(scale)
    }

    #[test]
    fn noiseless_inclusion_is_vacuous() {
        let p = params(0.0, 20);
        let x = start(2.0, 1.2);
        let res = blowup_mc(&x, &p, &[0.25, 0.5, 1.0]).unwrap();
        assert_eq!(res.z_event_rate, 1.0);
        assert_eq!(res.violations_at_c_prime, 0);
        assert!(res.c_prime > 0.0);
    }

    #[test]
    fn inclusion_holds_at_the_fitted_constant() {
        let p = params(1.5, 200);
        let x = start(2.0, 1.2);
        let res = blowup_mc(&x, &p, &[0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        assert_eq!(res.violations_at_c_prime, 0, "{res:?}");
        assert!(res.c_prime > 0.0);
    }

    #[test]
    fn starting_outside_the_small_ball_is_rejected() {
        let p = params(1.0, 10);
        let modes = ModeSet::new(2);
        let x = random_field(&modes, 1.2, 1.0, &mut stream_rng(71, 0));
        let x = x.scaled(2.0 * p.cutoff.r / x.sobolev_norm(1.2));
        assert!(blowup_mc(&x, &p, &[0.5]).is_err());
    }
}
