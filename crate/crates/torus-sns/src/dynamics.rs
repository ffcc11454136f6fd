//! Pathwise integration of the Galerkin Navier-Stokes system, free or with
//! the norm cut-off on the nonlinearity, driven by a pre-sampled path of the
//! Stokes process.
//!
//! The state integrated is `v = u - z`, which solves a random ODE given `z`:
//! the noise enters only through `z`, so the free and cut-off systems can be
//! run against literally the same path. The stiff Stokes part is diagonal
//! and propagated exactly (exponential integrators); the nonlinearity is
//! explicit.
//!
//! ```
//! use torus_sns::cutoff::CutoffSpec;
//! use torus_sns::dynamics::{simulate, Integrator, RecordOptions, SimConfig};
//! use torus_sns::noise::{sample_z_path, uniform_grid, NoiseSpec};
//! use torus_sns::rng::stream_rng;
//! use torus_sns::spectral::{random_field, ModeSet};
//!
//! let config = SimConfig {
//!     nu: 1.0,
//!     dt: 0.01,
//!     t_end: 0.2,
//!     n_modes: 2,
//!     integrator: Integrator::ExponentialEuler,
//!     seed: 0,
//!     linear_only: false,
//! };
//! let modes = ModeSet::new(config.n_modes);
//! let cutoff = CutoffSpec::new(1.2, 5.0, 0.25).unwrap();
//! let noise = NoiseSpec::new(0.25, 0.5).unwrap();
//! let x = random_field(&modes, 1.2, 0.5, &mut stream_rng(3, 0));
//! let grid = uniform_grid(config.dt, config.steps());
//! let z = sample_z_path(&modes, &grid, config.nu, &noise, &mut stream_rng(3, 1)).unwrap();
//!
//! let opts = RecordOptions { alphas: vec![1.2], snapshot_every: None };
//! let record = simulate(&x, &config, Some(&cutoff), &z, &opts).unwrap();
//! assert!(!record.aborted);
//! assert_eq!(record.times.len(), config.steps() + 1);
//! // the recorded norm of u = v + z at the cut-off index, per time step
//! let norms = record.norms_for(1.2).unwrap();
//! assert!(norms.iter().all(|n| n.is_finite()));
//! ```

use serde::{Deserialize, Serialize};

use crate::cutoff::CutoffSpec;
use crate::error::{Result, SnsError};
use crate::noise::ZPath;
use crate::spectral::bilinear::bilinear_auto;
use crate::spectral::field::{ModeSet, SobolevIndex, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Linear part exact, nonlinearity frozen at the left endpoint. Order 1.
    ExponentialEuler,
    /// Midpoint quadrature of the variation-of-constants integral. Order 2.
    ExponentialMidpoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n_modes: u32,
    pub integrator: Integrator,
    pub seed: u64,
    /// disables the bilinear term entirely (pure Stokes/OU dynamics)
    #[serde(default)]
    pub linear_only: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nu <= 0.0 {
            return Err(SnsError::invalid("nu", "must be positive"));
        }
        if self.dt <= 0.0 {
            return Err(SnsError::invalid("dt", "must be positive"));
        }
        if self.dt >= self.t_end {
            return Err(SnsError::invalid("dt", "must be smaller than the horizon"));
        }
        if self.n_modes < 1 {
            return Err(SnsError::invalid("N", "must be at least 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// What to record along a trajectory.
#[derive(Debug, Clone)]
pub struct RecordOptions {
    /// norm indices sampled at every grid point
    pub alphas: Vec<SobolevIndex>,
    /// store a full snapshot of `u` every this many steps (0-th included)
    pub snapshot_every: Option<usize>,
}

impl Default for RecordOptions {
    fn default() -> Self {
        RecordOptions {
            alphas: vec![1.0],
            snapshot_every: None,
        }
    }
}

/// Sampled output of one integration.
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub alphas: Vec<SobolevIndex>,
    /// `u_norms[a][i]` is `||u(t_i)||` at `alphas[a]`
    pub u_norms: Vec<Vec<f64>>,
    pub v_h: Vec<f64>,
    pub v_v: Vec<f64>,
    /// energy-ledger work integrand `chi_R(||u||_alpha) <z, B(u, v)>`
    pub work: Vec<f64>,
    /// relative divergence of `u` at every grid point (0 by construction,
    /// recorded as a running invariant check)
    pub div_rel: Vec<f64>,
    pub snapshots: Vec<(usize, SpectralField)>,
    pub final_v: SpectralField,
    pub aborted: bool,
    /// first time `||u||_alpha` reached R (cut-off runs only)
    pub tau: Option<f64>,
}

impl TrajectoryRecord {
    pub fn norms_for(&self, alpha: SobolevIndex) -> Result<&[f64]> {
        self.alphas
            .iter()
            .position(|&a| a == alpha)
            .map(|i| self.u_norms[i].as_slice())
            .ok_or_else(|| SnsError::invalid("alpha", "norm index was not recorded"))
    }
}

fn phi1(x: f64) -> f64 {
    // (1 - e^{-x}) / x, stable near 0
    if x.abs() < 1e-8 {
        1.0 - x / 2.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// `-nu A v - chi_R(||v + z||_alpha) B(v + z, v + z)`; with no cut-off the
/// prefactor is 1, with `linear_only` the bilinear term is dropped.
pub fn rhs_v(
    v: &SpectralField,
    z: &SpectralField,
    cutoff: Option<&CutoffSpec>,
    nu: f64,
    linear_only: bool,
) -> Result<SpectralField> {
    let mut out = v.apply_stokes_power(1.0).scaled(-nu);
    if !linear_only {
        let u = v.add(z)?;
        let factor = match cutoff {
            Some(spec) => spec.chi(u.sobolev_norm(spec.alpha)),
            None => 1.0,
        };
        if factor != 0.0 {
            let b = bilinear_auto(&u, &u)?;
            out.axpy(-factor, &b);
        }
    }
    Ok(out)
}

/// Nonlinear part only (the exponential integrators treat the Stokes part
/// exactly).
fn nonlinear_term(
    v: &SpectralField,
    z: &SpectralField,
    cutoff: Option<&CutoffSpec>,
    linear_only: bool,
) -> Result<SpectralField> {
    if linear_only {
        return Ok(SpectralField::zero(v.mode_set().clone()));
    }
    let u = v.add(z)?;
    let factor = match cutoff {
        Some(spec) => spec.chi(u.sobolev_norm(spec.alpha)),
        None => 1.0,
    };
    if factor == 0.0 {
        return Ok(SpectralField::zero(v.mode_set().clone()));
    }
    Ok(bilinear_auto(&u, &u)?.scaled(-factor))
}

struct EtdWeights {
    /// e^{-nu |k|^2 h} per mode
    decay: Vec<f64>,
    /// h phi1(nu |k|^2 h) per mode
    weight: Vec<f64>,
}

impl EtdWeights {
    fn new(modes: &ModeSet, nu: f64, h: f64) -> Self {
        let decay = modes
            .norm_sq()
            .iter()
            .map(|&k2| (-nu * k2 * h).exp())
            .collect();
        let weight = modes
            .norm_sq()
            .iter()
            .map(|&k2| h * phi1(nu * k2 * h))
            .collect();
        EtdWeights { decay, weight }
    }

    fn apply(&self, v: &SpectralField, n: &SpectralField) -> SpectralField {
        let mut out = v.clone();
        for ((c, nc), (&d, &w)) in out
            .coeffs_mut()
            .iter_mut()
            .zip(n.coeffs())
            .zip(self.decay.iter().zip(&self.weight))
        {
            for i in 0..3 {
                c[i] = d * c[i] + w * nc[i];
            }
        }
        out
    }
}

/// Checks that the z-path grid refines the simulation grid and returns the
/// stride between simulation steps on the fine grid.
fn z_stride(config: &SimConfig, z_path: &ZPath) -> Result<usize> {
    let steps = config.steps();
    if z_path.times.len() < 2 {
        return Err(SnsError::invalid("z_path", "needs at least one step"));
    }
    let dt_z = z_path.times[1] - z_path.times[0];
    let ratio = config.dt / dt_z;
    let stride = ratio.round() as usize;
    if stride == 0 || (ratio - stride as f64).abs() > 1e-9 {
        return Err(SnsError::invalid(
            "z_path",
            "grid must refine the simulation grid by an integer factor",
        ));
    }
    if (z_path.times.len() - 1) < steps * stride {
        return Err(SnsError::invalid("z_path", "shorter than the horizon"));
    }
    if config.integrator == Integrator::ExponentialMidpoint && stride % 2 != 0 {
        return Err(SnsError::invalid(
            "z_path",
            "midpoint integrator needs z at half steps (even refinement)",
        ));
    }
    Ok(stride)
}

/// Integrates `v` pathwise given `z` and records `u = v + z`.
/// Deterministic given the initial state and the path.
pub fn simulate(
    x: &SpectralField,
    config: &SimConfig,
    cutoff: Option<&CutoffSpec>,
    z_path: &ZPath,
    opts: &RecordOptions,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let stride = z_stride(config, z_path)?;
    let steps = config.steps();
    let modes = x.mode_set().clone();
    let h = config.dt;
    let full = EtdWeights::new(&modes, config.nu, h);
    let half = EtdWeights::new(&modes, config.nu, h / 2.0);

    let mut v = x.clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut u_norms = vec![Vec::with_capacity(steps + 1); opts.alphas.len()];
    let mut v_h = Vec::with_capacity(steps + 1);
    let mut v_v = Vec::with_capacity(steps + 1);
    let mut work = Vec::with_capacity(steps + 1);
    let mut div_rel = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    let mut aborted = false;

    let record = |step: usize,
                  v: &SpectralField,
                  z: &SpectralField,
                  times: &mut Vec<f64>,
                  u_norms: &mut Vec<Vec<f64>>,
                  v_h: &mut Vec<f64>,
                  v_v: &mut Vec<f64>,
                  work: &mut Vec<f64>,
                  div_rel: &mut Vec<f64>,
                  snapshots: &mut Vec<(usize, SpectralField)>|
     -> Result<()> {
        let u = v.add(z)?;
        times.push(step as f64 * h);
        for (dst, &a) in u_norms.iter_mut().zip(&opts.alphas) {
            dst.push(u.sobolev_norm(a));
        }
        v_h.push(v.sobolev_norm(0.0));
        v_v.push(v.sobolev_norm(1.0));
        div_rel.push(u.max_divergence_rel());
        let w = if config.linear_only {
            0.0
        } else {
            let factor = match cutoff {
                Some(spec) => spec.chi(u.sobolev_norm(spec.alpha)),
                None => 1.0,
            };
            if factor == 0.0 {
                0.0
            } else {
                factor * bilinear_auto(&u, v)?.pairing(z)?
            }
        };
        work.push(w);
        if let Some(every) = opts.snapshot_every {
            if every > 0 && step % every == 0 {
                snapshots.push((step, u));
            }
        }
        Ok(())
    };

    record(
        0,
        &v,
        &z_path.fields[0],
        &mut times,
        &mut u_norms,
        &mut v_h,
        &mut v_v,
        &mut work,
        &mut div_rel,
        &mut snapshots,
    )?;

    for step in 0..steps {
        let z_now = &z_path.fields[step * stride];
        match config.integrator {
            Integrator::ExponentialEuler => {
                let n = nonlinear_term(&v, z_now, cutoff, config.linear_only)?;
                v = full.apply(&v, &n);
            }
            Integrator::ExponentialMidpoint => {
                let z_mid = &z_path.fields[step * stride + stride / 2];
                let n1 = nonlinear_term(&v, z_now, cutoff, config.linear_only)?;
                let v_mid = half.apply(&v, &n1);
                let n2 = nonlinear_term(&v_mid, z_mid, cutoff, config.linear_only)?;
                // v_{n+1} = E_h v_n + h E_{h/2} N(midpoint)
                let mut out = v.clone();
                for ((c, nc), (&d, &dh)) in out
                    .coeffs_mut()
                    .iter_mut()
                    .zip(n2.coeffs())
                    .zip(full.decay.iter().zip(&half.decay))
                {
                    for i in 0..3 {
                        c[i] = d * c[i] + h * dh * nc[i];
                    }
                }
                v = out;
            }
        }
        let z_next = &z_path.fields[(step + 1) * stride];
        if v.has_nan() || v.sobolev_norm(0.0) > 1e8 {
            aborted = true;
            break;
        }
        record(
            step + 1,
            &v,
            z_next,
            &mut times,
            &mut u_norms,
            &mut v_h,
            &mut v_v,
            &mut work,
            &mut div_rel,
            &mut snapshots,
        )?;
    }

    let mut rec = TrajectoryRecord {
        times,
        alphas: opts.alphas.clone(),
        u_norms,
        v_h,
        v_v,
        work,
        div_rel,
        snapshots,
        final_v: v,
        aborted,
        tau: None,
    };
    if let Some(spec) = cutoff {
        if opts.alphas.contains(&spec.alpha) {
            rec.tau = detect_stopping(&rec, spec.alpha, spec.r)?;
        }
    }
    Ok(rec)
}

/// First grid time with `||u||_alpha >= R`, refined by linear interpolation
/// between the bracketing samples. `None` means "never" on the horizon.
pub fn detect_stopping(
    record: &TrajectoryRecord,
    alpha: SobolevIndex,
    r: f64,
) -> Result<Option<f64>> {
    let norms = record.norms_for(alpha)?;
    for (i, &n) in norms.iter().enumerate() {
        if n >= r {
            if i == 0 {
                return Ok(Some(record.times[0]));
            }
            let (t0, t1) = (record.times[i - 1], record.times[i]);
            let (n0, n1) = (norms[i - 1], norms[i]);
            let frac = if n1 > n0 { (r - n0) / (n1 - n0) } else { 1.0 };
            return Ok(Some(t0 + frac * (t1 - t0)));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub tau: Option<f64>,
    /// sup over grid times up to tau of `||u_cut - u_free||_alpha`
    pub sup_pre_tau: f64,
    /// sup over the remaining horizon (unconstrained, reported only)
    pub sup_post_tau: f64,
    /// local integrator tolerance used as the yardstick
    pub local_tol: f64,
    pub free_aborted: bool,
}

/// Runs the cut-off and the free system against the same z-path and reports
/// the discrepancy before and after the stopping time.
pub fn couple_and_compare(
    x: &SpectralField,
    config: &SimConfig,
    cutoff: &CutoffSpec,
    z_path: &ZPath,
) -> Result<CouplingReport> {
    if x.sobolev_norm(cutoff.alpha) > cutoff.r {
        return Err(SnsError::invalid("x", "must start inside the cut-off ball"));
    }
    let opts = RecordOptions {
        alphas: vec![cutoff.alpha],
        snapshot_every: Some(1),
    };
    let cut = simulate(x, config, Some(cutoff), z_path, &opts)?;
    let free = simulate(x, config, None, z_path, &opts)?;
    let tau = cut.tau;
    let tau_val = tau.unwrap_or(f64::INFINITY);

    let mut sup_pre: f64 = 0.0;
    let mut sup_post: f64 = 0.0;
    for ((step, uc), (_, uf)) in cut.snapshots.iter().zip(&free.snapshots) {
        let t = *step as f64 * config.dt;
        let d = uc.sub(uf)?.sobolev_norm(cutoff.alpha);
        if t <= tau_val {
            sup_pre = sup_pre.max(d);
        } else {
            sup_post = sup_post.max(d);
        }
    }
    let local_tol = config.dt * config.dt * (1.0 + cutoff.r.powi(3));
    Ok(CouplingReport {
        tau,
        sup_pre_tau: sup_pre,
        sup_post_tau: sup_post,
        local_tol,
        free_aborted: free.aborted,
    })
}

/// Base flow and its directional derivative, advanced jointly.
pub struct TangentFlow {
    pub times: Vec<f64>,
    /// `u = v + z` along the base trajectory
    pub base_u: Vec<SpectralField>,
    /// derivative of the flow in the initial direction `h`
    pub tangent: Vec<SpectralField>,
}

/// Integrates the derivative of the discrete flow along the base trajectory:
/// the linearization of the same exponential Euler map, so finite-difference
/// comparisons converge at first order in the displacement.
///
/// The cut-off derivative term uses `chi_R'(||u||_alpha) <u, t>_alpha / ||u||_alpha`
/// and is defined as 0 at `u = 0` (the cut-off is flat below `R >= 1`).
pub fn tangent_integrate(
    x: &SpectralField,
    h_dir: &SpectralField,
    config: &SimConfig,
    cutoff: Option<&CutoffSpec>,
    z_path: &ZPath,
) -> Result<TangentFlow> {
    config.validate()?;
    if config.integrator != Integrator::ExponentialEuler {
        return Err(SnsError::invalid(
            "integrator",
            "the tangent flow is linearized through the exponential Euler map",
        ));
    }
    let stride = z_stride(config, z_path)?;
    let steps = config.steps();
    let modes = x.mode_set().clone();
    let full = EtdWeights::new(&modes, config.nu, config.dt);

    let mut v = x.clone();
    let mut tangent = h_dir.clone();
    let mut times = vec![0.0];
    let mut base_u = vec![v.add(&z_path.fields[0])?];
    let mut tangents = vec![tangent.clone()];

    for step in 0..steps {
        let z_now = &z_path.fields[step * stride];
        let u = v.add(z_now)?;
        let n = nonlinear_term(&v, z_now, cutoff, config.linear_only)?;

        // linearized nonlinearity along the current base state
        let g = if config.linear_only {
            SpectralField::zero(modes.clone())
        } else {
            let norm_u = match cutoff {
                Some(spec) => u.sobolev_norm(spec.alpha),
                None => 0.0,
            };
            let (factor, dfactor) = match cutoff {
                Some(spec) => {
                    let f = spec.chi(norm_u);
                    let d = if norm_u > 0.0 {
                        spec.chi_prime(norm_u) * u.pairing_alpha(&tangent, spec.alpha)? / norm_u
                    } else {
                        0.0
                    };
                    (f, d)
                }
                None => (1.0, 0.0),
            };
            let mut g = SpectralField::zero(modes.clone());
            if factor != 0.0 {
                let b1 = bilinear_auto(&tangent, &u)?;
                let b2 = bilinear_auto(&u, &tangent)?;
                g.axpy(-factor, &b1);
                g.axpy(-factor, &b2);
            }
            if dfactor != 0.0 {
                let buu = bilinear_auto(&u, &u)?;
                g.axpy(-dfactor, &buu);
            }
            g
        };

        v = full.apply(&v, &n);
        tangent = full.apply(&tangent, &g);
        if v.has_nan() || tangent.has_nan() {
            return Err(SnsError::NumericAbort(
                "tangent integration diverged".to_string(),
            ));
        }
        times.push((step + 1) as f64 * config.dt);
        base_u.push(v.add(&z_path.fields[(step + 1) * stride])?);
        tangents.push(tangent.clone());
    }
    Ok(TangentFlow {
        times,
        base_u,
        tangent: tangents,
    })
}

/// Residual of the pathwise energy balance between grid times `s < t`:
/// `1/2 ||v_t||^2 + nu int ||v||_V^2 - int chi_R <z, B(u, v)> - 1/2 ||v_s||^2`
/// with trapezoidal quadrature on the stored samples.
pub fn energy_ledger(record: &TrajectoryRecord, nu: f64, s: f64, t: f64) -> Result<f64> {
    let locate = |x: f64| -> Result<usize> {
        record
            .times
            .iter()
            .position(|&ti| (ti - x).abs() < 1e-9)
            .ok_or_else(|| SnsError::invalid("time", "not a grid time of the record"))
    };
    let i0 = locate(s)?;
    let i1 = locate(t)?;
    if i0 >= i1 {
        return Err(SnsError::invalid("s", "needs s < t"));
    }
    let trapz = |f: &dyn Fn(usize) -> f64| -> f64 {
        let mut acc = 0.0;
        for i in i0..i1 {
            let dt = record.times[i + 1] - record.times[i];
            acc += 0.5 * dt * (f(i) + f(i + 1));
        }
        acc
    };
    let dissipation = nu * trapz(&|i| record.v_v[i] * record.v_v[i]);
    let work_term = trapz(&|i| record.work[i]);
    let kinetic_t = 0.5 * record.v_h[i1] * record.v_h[i1];
    let kinetic_s = 0.5 * record.v_h[i0] * record.v_h[i0];
    Ok(kinetic_t - kinetic_s + dissipation - work_term)
}
