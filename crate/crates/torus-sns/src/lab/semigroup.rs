//! Monte Carlo probes of the transition semigroup: plain functional
//! averages and the log-Lipschitz continuity modulus, both with split RNG
//! streams and (for differences) common random numbers.

use rayon::prelude::*;
use serde::Serialize;

use crate::cutoff::CutoffSpec;
use crate::dynamics::{simulate, Integrator, RecordOptions, SimConfig};
use crate::error::Result;
use crate::lab::functionals::TestFunctional;
use crate::noise::{sample_z_path, uniform_grid, NoiseSpec, ZPath};
use crate::rng::stream_rng;
use crate::spectral::field::SpectralField;
use crate::stats::mean_se;

/// z-path grid matching a config: the midpoint scheme needs half-step
/// samples, the Euler scheme step samples.
pub(crate) fn driving_grid(config: &SimConfig) -> (Vec<f64>, usize) {
    let refine = match config.integrator {
        Integrator::ExponentialEuler => 1,
        Integrator::ExponentialMidpoint => 2,
    };
    (
        uniform_grid(config.dt / refine as f64, config.steps() * refine),
        refine,
    )
}

pub(crate) fn sample_driving_path(
    x: &SpectralField,
    config: &SimConfig,
    noise: &NoiseSpec,
    seed: u64,
    stream: u64,
) -> Result<ZPath> {
    let (grid, _) = driving_grid(config);
    sample_z_path(
        x.mode_set(),
        &grid,
        config.nu,
        noise,
        &mut stream_rng(seed, stream),
    )
}

fn terminal_u(
    x: &SpectralField,
    config: &SimConfig,
    cutoff: Option<&CutoffSpec>,
    z: &ZPath,
) -> Result<SpectralField> {
    let opts = RecordOptions {
        alphas: vec![cutoff.map(|c| c.alpha).unwrap_or(1.0)],
        snapshot_every: None,
    };
    let rec = simulate(x, config, cutoff, z, &opts)?;
    rec.final_v.add(z.fields.last().unwrap())
}

#[derive(Debug, Clone, Serialize)]
pub struct SemigroupEstimate {
    pub functional: String,
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub samples: usize,
}

/// `E[phi(u_x(t))]` over independent driving paths started from `x`.
pub fn transition_estimate(
    phi: &TestFunctional,
    x: &SpectralField,
    config: &SimConfig,
    cutoff: Option<&CutoffSpec>,
    noise: &NoiseSpec,
    samples: usize,
    seed: u64,
) -> Result<SemigroupEstimate> {
    phi.validate()?;
    config.validate()?;
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let z = sample_driving_path(x, config, noise, seed, i as u64)?;
            Ok(phi.eval(&terminal_u(x, config, cutoff, &z)?))
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_se(&values);
    Ok(SemigroupEstimate {
        functional: phi.label(),
        t: config.t_end,
        mean,
        se,
        samples,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulusRow {
    pub h_norm: f64,
    /// paired-sample estimate of `P_t phi(x + h) - P_t phi(x)`
    pub diff: f64,
    pub diff_se: f64,
    /// `||h|| log(e / ||h||)`
    pub modulus: f64,
    pub ratio: f64,
}

/// Continuity-modulus table: for each displacement size the semigroup
/// difference is estimated with common random numbers (one driving path per
/// sample, shared by the base and every displaced start).
pub fn feller_modulus(
    phi: &TestFunctional,
    x: &SpectralField,
    direction: &SpectralField,
    h_values: &[f64],
    config: &SimConfig,
    cutoff: Option<&CutoffSpec>,
    noise: &NoiseSpec,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<ModulusRow>> {
    phi.validate()?;
    config.validate()?;
    let dir_norm = direction.sobolev_norm(alpha);
    // per sample: phi at the base start and at every displaced start,
    // all along the same driving path
    let per_sample: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let z = sample_driving_path(x, config, noise, seed, i as u64)?;
            let base = phi.eval(&terminal_u(x, config, cutoff, &z)?);
            let mut diffs = Vec::with_capacity(h_values.len());
            for &h in h_values {
                let mut xp = x.clone();
                xp.axpy(h, direction);
                let shifted = phi.eval(&terminal_u(&xp, config, cutoff, &z)?);
                diffs.push(shifted - base);
            }
            Ok(diffs)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(h_values.len());
    for (j, &h) in h_values.iter().enumerate() {
        let col: Vec<f64> = per_sample.iter().map(|d| d[j]).collect();
        let (diff, diff_se) = mean_se(&col);
        let h_norm = h.abs() * dir_norm;
        let modulus = if h_norm > 0.0 {
            h_norm * (std::f64::consts::E / h_norm).ln().max(1.0)
        } else {
            0.0
        };
        let ratio = if modulus > 0.0 {
            diff.abs() / modulus
        } else {
            0.0
        };
        rows.push(ModulusRow {
            h_norm,
            diff,
            diff_se,
            modulus,
            ratio,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::spectral::field::{random_field, ModeSet, WaveVector};

    fn small_config(linear_only: bool) -> SimConfig {
        SimConfig {
            nu: 1.0,
            dt: 0.05,
            t_end: 0.25,
            n_modes: 2,
            integrator: Integrator::ExponentialEuler,
            seed: 0,
            linear_only,
        }
    }

    #[test]
    fn constant_functional_has_zero_spread() {
        let modes = ModeSet::new(2);
        let x = random_field(&modes, 1.0, 0.3, &mut stream_rng(1, 0));
        let noise = NoiseSpec::new(0.25, 0.4).unwrap();
        let est = transition_estimate(
            &TestFunctional::Constant { value: 1.0 },
            &x,
            &small_config(false),
            None,
            &noise,
            50,
            5,
        )
        .unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn standard_error_shrinks_like_root_n() {
        let modes = ModeSet::new(2);
        let x = random_field(&modes, 1.0, 0.3, &mut stream_rng(2, 0));
        let noise = NoiseSpec::new(0.25, 0.4).unwrap();
        let phi = TestFunctional::ClippedNorm {
            alpha: 1.0,
            cap: 10.0,
        };
        let cfg = small_config(false);
        let e1 = transition_estimate(&phi, &x, &cfg, None, &noise, 200, 7).unwrap();
        let e4 = transition_estimate(&phi, &x, &cfg, None, &noise, 800, 7).unwrap();
        let ratio = e1.se / e4.se;
        assert!((1.2..3.5).contains(&ratio), "se ratio {ratio}");
    }

    #[test]
    fn linear_regime_matches_the_heat_factor() {
        // B off: the recorded coordinate is Gaussian around e^{-nu |k|^2 t} x_k
        let modes = ModeSet::new(2);
        let mut x = SpectralField::zero(modes.clone());
        let k = WaveVector::new(0, 0, 1);
        x.set_coeff(
            &k,
            [
                num_complex::Complex64::new(0.05, 0.0),
                num_complex::Complex64::new(0.0, 0.0),
                num_complex::Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let noise = NoiseSpec::new(0.25, 0.2).unwrap();
        let phi = TestFunctional::SquashedCoord {
            k: [0, 0, 1],
            component: 0,
            scale: 1e4,
        };
        let cfg = small_config(true);
        let est = transition_estimate(&phi, &x, &cfg, None, &noise, 4000, 11).unwrap();
        let expected = 0.05 * (-cfg.t_end).exp();
        assert!(
            (est.mean - expected).abs() < 3.0 * est.se,
            "mean {} expected {} se {}",
            est.mean,
            expected,
            est.se
        );
    }

    #[test]
    fn zero_displacement_gives_zero_difference() {
        let modes = ModeSet::new(2);
        let x = random_field(&modes, 1.0, 0.3, &mut stream_rng(3, 0));
        let dir = random_field(&modes, 1.0, 1.0, &mut stream_rng(3, 1));
        let noise = NoiseSpec::new(0.25, 0.4).unwrap();
        let phi = TestFunctional::ClippedNorm {
            alpha: 1.0,
            cap: 10.0,
        };
        let rows = feller_modulus(
            &phi,
            &x,
            &dir,
            &[0.0, 0.1],
            &small_config(false),
            None,
            &noise,
            1.2,
            30,
            9,
        )
        .unwrap();
        assert_eq!(rows[0].diff, 0.0);
        assert_eq!(rows[0].diff_se, 0.0);
        assert!(rows[1].diff.abs() > 0.0);
    }

    #[test]
    fn modulus_ratio_does_not_double_under_halving() {
        let modes = ModeSet::new(2);
        let x = random_field(&modes, 1.0, 0.3, &mut stream_rng(4, 0));
        let dir = random_field(&modes, 1.0, 1.0, &mut stream_rng(4, 1));
        let noise = NoiseSpec::new(0.25, 0.4).unwrap();
        let phi = TestFunctional::ClippedNorm {
            alpha: 1.0,
            cap: 10.0,
        };
        let hs = [0.2, 0.1, 0.05, 0.025];
        let rows = feller_modulus(
            &phi,
            &x,
            &dir,
            &hs,
            &small_config(false),
            None,
            &noise,
            1.2,
            400,
            13,
        )
        .unwrap();
        let first = rows[0].ratio.max(1e-12);
        for r in &rows[1..] {
            assert!(r.ratio < 5.0 * first, "ratio blow-up: {rows:?}");
        }
    }
}
