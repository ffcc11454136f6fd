//! Lattice checks for the trilinear advection estimate and the two
//! convolution-series bounds it rests on.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SnsError};
use crate::rng::stream_rng;
use crate::spectral::bilinear::bilinear_auto;
use crate::spectral::field::{random_field, ModeSet, WaveVector};

/// Empirical constant for `<B(u,v), w> <= c ||u||_a ||v||_b ||w||_{c+1}`
/// observed over random fields at one lattice cutoff.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// max observed ratio; never decreases as `trials` grows for a fixed seed
    pub empirical_constant: f64,
    pub trials: usize,
    pub skipped: usize,
    pub cutoff: u32,
    /// `2(a+b+c) >= 3`, `a >= (-c) v 0`, `b >= (-c) v 0`
    pub admissible: bool,
    /// some exponent sits at 3/2, where the estimate needs strict slack
    pub boundary_case: bool,
}

pub fn trilinear_admissible(a: f64, b: f64, c: f64) -> bool {
    2.0 * (a + b + c) >= 3.0 - 1e-12 && a >= (-c).max(0.0) - 1e-12 && b >= (-c).max(0.0) - 1e-12
}

/// Maximizes `<B(u,v), w> / (||u||_a ||v||_b ||w||_{c+1})` over random
/// divergence-free fields with varied spectral slopes. Trials with a zero
/// denominator are skipped. Deterministic given `seed`; the running max is
/// monotone in `trials` because trial `i` always uses RNG stream `i`.
pub fn trilinear_check(
    a: f64,
    b: f64,
    c: f64,
    trials: usize,
    n: u32,
    seed: u64,
) -> Result<InequalityReport> {
    let modes = ModeSet::new(n);
    let ratios: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            // spectral slope varied per trial so the max probes different
            // energy distributions across the lattice
            let slope = |r: &mut crate::rng::SimRng| {
                use rand::Rng;
                r.gen_range(0.5..2.5)
            };
            let du = slope(&mut rng);
            let dv = slope(&mut rng);
            let dw = slope(&mut rng);
            let u = random_field(&modes, du, 1.0, &mut rng);
            let v = random_field(&modes, dv, 1.0, &mut rng);
            let w = random_field(&modes, dw, 1.0, &mut rng);
            let denom = u.sobolev_norm(a) * v.sobolev_norm(b) * w.sobolev_norm(c + 1.0);
            if denom == 0.0 {
                return Ok(None);
            }
            let num = bilinear_auto(&u, &v)?.pairing(&w)?.abs();
            Ok(Some(num / denom))
        })
        .collect::<Result<_>>()?;
    let mut max = 0.0f64;
    let mut skipped = 0;
    for r in &ratios {
        match r {
            Some(x) => max = max.max(*x),
            None => skipped += 1,
        }
    }
    Ok(InequalityReport {
        a,
        b,
        c,
        empirical_constant: max,
        trials,
        skipped,
        cutoff: n,
        admissible: trilinear_admissible(a, b, c),
        boundary_case: [a, b, c].iter().any(|&x| x == 1.5),
    })
}

/// Smoothing gain of the bilinear map between Sobolev levels.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeltaBound {
    pub delta: f64,
    /// at `a v b` in {0, 3/2} only exponents strictly below `delta` work
    pub strict: bool,
}

/// `delta = a ^ b - (3/2 - a v b)_+ - 1`, with the two exceptional values
/// of `a v b` flagged as open-interval bounds.
pub fn smoothing_delta(a: f64, b: f64) -> Result<DeltaBound> {
    if a < 0.0 || b < 0.0 {
        return Err(SnsError::invalid("a", "exponents must be non-negative"));
    }
    let lo = a.min(b);
    let hi = a.max(b);
    let strict = hi == 1.5 || hi == 0.0;
    let delta = if strict {
        lo - 1.0
    } else {
        lo - (1.5 - hi).max(0.0) - 1.0
    };
    Ok(DeltaBound { delta, strict })
}

/// Exact lattice sum of `|k|^alpha` over `0 < |k| <= k0`.
pub fn series1(alpha: f64, k0: u32) -> f64 {
    let k0 = k0 as i64;
    let k0_sq = k0 * k0;
    let mut sum = 0.0;
    for kx in -k0..=k0 {
        for ky in -k0..=k0 {
            for kz in -k0..=k0 {
                let n2 = kx * kx + ky * ky + kz * kz;
                if n2 > 0 && n2 <= k0_sq {
                    sum += (n2 as f64).powf(alpha / 2.0);
                }
            }
        }
    }
    sum
}

/// Ratio of [`series1`] to its growth envelope: `k0^{(alpha+3) v 0}` away
/// from `alpha = -3`, `log(1 + k0)` at it.
pub fn series1_bound_ratio(alpha: f64, k0: u32) -> f64 {
    let sum = series1(alpha, k0);
    let envelope = if (alpha + 3.0).abs() < 1e-12 {
        (1.0 + k0 as f64).ln()
    } else {
        (k0 as f64).powf((alpha + 3.0).max(0.0))
    };
    sum / envelope
}

/// Truncated lattice sum of `|l|^{-2 alpha} |m|^{-2 beta} |l+m|^{-2 gamma}`
/// over the cone `{m != 0 : |l+m| > 2|m|}`, `|m| <= cutoff`.
pub fn series2(alpha: f64, beta: f64, gamma: f64, l: &WaveVector, cutoff: u32) -> Result<f64> {
    let l_norm_sq = l.norm_sq();
    if l_norm_sq <= 1 {
        return Err(SnsError::invalid("l", "needs |l| > 1"));
    }
    let c = cutoff as i32;
    let mut sum = 0.0;
    let lf = (l_norm_sq as f64).powf(-alpha);
    for mx in -c..=c {
        for my in -c..=c {
            for mz in -c..=c {
                let m = WaveVector::new(mx, my, mz);
                let m2 = m.norm_sq();
                if m2 == 0 {
                    continue;
                }
                let lm2 = l.add(&m).norm_sq();
                if lm2 <= 4 * m2 {
                    continue;
                }
                sum += lf * (m2 as f64).powf(-beta) * (lm2 as f64).powf(-gamma);
            }
        }
    }
    Ok(sum)
}

/// Every member of the cone `{m : |l+m| > 2|m|}` satisfies
/// `(2/3)|l| <= |l+m| <= 2|l|`; checked by enumeration up to `cutoff`.
pub fn series2_constraint_holds(l: &WaveVector, cutoff: u32) -> bool {
    let c = cutoff as i32;
    let l2 = l.norm_sq() as f64;
    for mx in -c..=c {
        for my in -c..=c {
            for mz in -c..=c {
                let m = WaveVector::new(mx, my, mz);
                let lm2 = l.add(&m).norm_sq() as f64;
                if lm2 > 4.0 * m.norm_sq() as f64 {
                    let lm = lm2.sqrt();
                    let ln = l2.sqrt();
                    if lm < (2.0 / 3.0) * ln - 1e-12 || lm > 2.0 * ln + 1e-12 {
                        return false;
                    }
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn admissible_triple_is_bounded_in_cutoff() {
        // 2(a+b+c) = 3 exactly
        let mut prev = 0.0f64;
        for n in [2u32, 4] {
            let rep = trilinear_check(1.0, 1.0, -0.5, 40, n, 7).unwrap();
            assert!(rep.admissible);
            assert!(rep.empirical_constant.is_finite());
            // loose sanity cap: the constant may grow a little with the
            // lattice but must not explode
            if prev > 0.0 {
                assert!(rep.empirical_constant < 10.0 * prev.max(1.0));
            }
            prev = rep.empirical_constant;
        }
    }

    #[test]
    fn running_max_is_monotone_in_trials() {
        let r20 = trilinear_check(1.0, 1.0, -0.5, 20, 2, 3).unwrap();
        let r40 = trilinear_check(1.0, 1.0, -0.5, 40, 2, 3).unwrap();
        assert!(r40.empirical_constant >= r20.empirical_constant);
    }

    #[test]
    fn admissibility_flags() {
        assert!(trilinear_admissible(1.0, 1.0, -0.5));
        assert!(!trilinear_admissible(0.0, 0.0, 0.0));
        assert!(!trilinear_admissible(2.0, 0.0, -0.5));
    }

    #[test]
    fn delta_formula_and_exceptions() {
        assert_relative_eq!(smoothing_delta(2.0, 2.0).unwrap().delta, 1.0);
        assert_relative_eq!(smoothing_delta(1.0, 1.0).unwrap().delta, -0.5);
        let edge = smoothing_delta(1.5, 1.5).unwrap();
        assert!(edge.strict);
        assert_relative_eq!(edge.delta, 0.5);
        assert!(smoothing_delta(-1.0, 2.0).is_err());
    }

    #[test]
    fn series1_unit_ball_counts_the_six_neighbours() {
        assert_eq!(series1(0.0, 1), 6.0);
    }

    #[test]
    fn series1_log_case_is_bounded() {
        let mut max = 0.0f64;
        for k0 in [1u32, 2, 4, 8, 16, 32, 64] {
            max = max.max(series1_bound_ratio(-3.0, k0));
        }
        assert!(max.is_finite());
        // the ratio should flatten out, not keep doubling
        let r32 = series1_bound_ratio(-3.0, 32);
        let r64 = series1_bound_ratio(-3.0, 64);
        assert!(r64 / r32 < 1.5, "{r32} -> {r64}");
    }

    #[test]
    fn series1_supercritical_decay_converges() {
        let tail = series1(-4.0, 64) - series1(-4.0, 32);
        let prev_tail = series1(-4.0, 32) - series1(-4.0, 16);
        assert!(tail < prev_tail);
        assert!(tail < 0.2);
    }

    #[test]
    fn series2_stable_under_cutoff_doubling() {
        let l = WaveVector::new(2, 0, 0);
        let s16 = series2(1.0, 1.0, 0.0, &l, 16).unwrap();
        let s32 = series2(1.0, 1.0, 0.0, &l, 32).unwrap();
        assert!(s16.is_finite() && s16 > 0.0);
        assert!((s32 - s16) / s16 < 0.05, "{s16} -> {s32}");
    }

    #[test]
    fn series2_rejects_short_l() {
        assert!(series2(1.0, 1.0, 0.0, &WaveVector::new(1, 0, 0), 8).is_err());
    }

    #[test]
    fn series2_cone_is_an_annulus_around_l() {
        for l in [
            WaveVector::new(2, 0, 0),
            WaveVector::new(3, 1, 0),
            WaveVector::new(0, 2, 5),
        ] {
            assert!(series2_constraint_holds(&l, 12));
        }
    }
}
