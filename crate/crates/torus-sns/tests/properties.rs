//! Randomized structural invariants, complementing the example-based unit
//! tests: these hold for *every* field and parameter choice, not just the
//! tuned ones.

use proptest::prelude::*;

use torus_sns::cutoff::chi;
use torus_sns::noise::{sample_z_path, uniform_grid, NoiseSpec};
use torus_sns::rng::stream_rng;
use torus_sns::spectral::{bilinear_direct, random_field, ModeSet};

fn field(n: u32, seed: u64, decay: f64, amp: f64) -> torus_sns::spectral::SpectralField {
    random_field(&ModeSet::new(n), decay, amp, &mut stream_rng(seed, 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// log-convexity of `alpha -> ||u||_alpha^2`: for a < b < c,
    /// `||u||_b <= ||u||_a^{(c-b)/(c-a)} ||u||_c^{(b-a)/(c-a)}`
    #[test]
    fn interpolation_inequality(
        seed in 0u64..1_000_000,
        a in -1.0f64..1.0,
        gap1 in 0.05f64..1.0,
        gap2 in 0.05f64..1.0,
    ) {
        let b = a + gap1;
        let c = b + gap2;
        let u = field(3, seed, 1.0, 1.0);
        let theta = (c - b) / (c - a);
        let lhs = u.sobolev_norm(b);
        let rhs = u.sobolev_norm(a).powf(theta) * u.sobolev_norm(c).powf(1.0 - theta);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }

    /// the trilinear energy flux vanishes: `<B(u, v), v> = 0`
    #[test]
    fn bilinear_skew_symmetry(
        seed in 0u64..1_000_000,
        decay in 0.5f64..2.0,
    ) {
        let modes = ModeSet::new(2);
        let mut rng = stream_rng(seed, 1);
        let u = random_field(&modes, decay, 1.0, &mut rng);
        let v = random_field(&modes, 1.0, 1.0, &mut rng);
        let b = bilinear_direct(&u, &v).unwrap();
        let scale = b.sobolev_norm(0.0) * v.sobolev_norm(0.0);
        prop_assert!(b.pairing(&v).unwrap().abs() <= 1e-12 * scale.max(1e-300));
    }

    /// the bilinear term is incompressible after projection
    #[test]
    fn bilinear_is_divergence_free(
        seed in 0u64..1_000_000,
        decay in 0.5f64..2.0,
    ) {
        let modes = ModeSet::new(2);
        let mut rng = stream_rng(seed, 2);
        let u = random_field(&modes, decay, 1.0, &mut rng);
        let v = random_field(&modes, 1.0, 1.0, &mut rng);
        prop_assert!(bilinear_direct(&u, &v).unwrap().max_divergence_rel() <= 1e-12);
    }

    /// heat semigroup: composition law and contraction in every norm
    #[test]
    fn semigroup_composes_and_contracts(
        seed in 0u64..1_000_000,
        t1 in 0.01f64..1.0,
        t2 in 0.01f64..1.0,
        alpha in -1.0f64..2.0,
    ) {
        let u = field(3, seed, 1.0, 1.0);
        let mut once = u.clone();
        once.apply_semigroup(1.0, t1 + t2);
        let mut twice = u.clone();
        twice.apply_semigroup(1.0, t1);
        twice.apply_semigroup(1.0, t2);
        let gap = once.sub(&twice).unwrap().sobolev_norm(alpha);
        prop_assert!(gap <= 1e-12 * u.sobolev_norm(alpha));
        prop_assert!(once.sobolev_norm(alpha) <= u.sobolev_norm(alpha) * (1.0 + 1e-12));
    }

    /// the cut-off profile is a non-increasing [0, 1]-valued plateau
    #[test]
    fn cutoff_profile_shape(x in 0.0f64..4.0, y in 0.0f64..4.0) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!((0.0..=1.0).contains(&chi(x)));
        prop_assert!(chi(lo) >= chi(hi));
        if hi <= 1.0 { prop_assert_eq!(chi(hi), 1.0); }
        if lo >= 2.0 { prop_assert_eq!(chi(lo), 0.0); }
    }

    /// sampled driving paths stay divergence-free and restriction is exact
    #[test]
    fn z_path_invariants(seed in 0u64..1_000_000) {
        let modes = ModeSet::new(2);
        let noise = NoiseSpec::new(0.25, 0.5).unwrap();
        let z = sample_z_path(
            &modes,
            &uniform_grid(0.02, 8),
            1.0,
            &noise,
            &mut stream_rng(seed, 3),
        )
        .unwrap();
        for f in &z.fields {
            prop_assert!(f.max_divergence_rel() <= 1e-12);
        }
        let coarse = z.subsample(4);
        prop_assert_eq!(coarse.fields.len(), 3);
        // restriction keeps the endpoint fields bit-identical ...
        let gap = coarse.fields[2].sub(&z.fields[8]).unwrap().sobolev_norm(0.0);
        prop_assert_eq!(gap, 0.0);
        // ... and merged Brownian increments add exactly
        let merged: num_complex::Complex64 =
            (0..4).map(|i| z.increments[i][0][0]).sum();
        prop_assert!((merged - coarse.increments[0][0][0]).norm() <= 1e-15);
    }
}
