//! Divergence-free Fourier fields on the 3D torus `[0, 2pi]^3`.
//!
//! A field is stored as one complex 3-vector per Hermitian representative
//! mode; the conjugate half of the lattice is implied, so the physical field
//! is real by construction. The Stokes operator acts diagonally with
//! eigenvalue `|k|^2` per mode.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnsError};

/// Regularity exponent on the V_alpha scale (V_0 = H, V_1 = V).
pub type SobolevIndex = f64;

/// Integer wavenumber on the 2pi-periodic torus. The zero vector is never
/// an active mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WaveVector {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl WaveVector {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        WaveVector { x, y, z }
    }

    pub fn is_zero(&self) -> bool {
        self.x == 0 && self.y == 0 && self.z == 0
    }

    /// `|k|^2`, the Stokes eigenvalue of this mode.
    pub fn norm_sq(&self) -> i64 {
        let (x, y, z) = (self.x as i64, self.y as i64, self.z as i64);
        x * x + y * y + z * z
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn neg(&self) -> Self {
        WaveVector::new(-self.x, -self.y, -self.z)
    }

    pub fn add(&self, other: &WaveVector) -> Self {
        WaveVector::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    pub fn sub(&self, other: &WaveVector) -> Self {
        WaveVector::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn sup_norm(&self) -> i32 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    /// The stored representative of the pair `{k, -k}` is the one whose first
    /// nonzero component is positive.
    pub fn is_representative(&self) -> bool {
        if self.x != 0 {
            self.x > 0
        } else if self.y != 0 {
            self.y > 0
        } else {
            self.z > 0
        }
    }

    /// Dot product against a complex 3-vector.
    pub fn dot_c(&self, v: &[Complex64; 3]) -> Complex64 {
        v[0] * self.x as f64 + v[1] * self.y as f64 + v[2] * self.z as f64
    }
}

/// Projection of `v` onto the plane orthogonal to `k`.
pub fn leray_project(k: &WaveVector, v: &[Complex64; 3]) -> Result<[Complex64; 3]> {
    if k.is_zero() {
        return Err(SnsError::ZeroWaveVector);
    }
    let kv = k.dot_c(v);
    let scale = kv / k.norm_sq() as f64;
    Ok([
        v[0] - scale * k.x as f64,
        v[1] - scale * k.y as f64,
        v[2] - scale * k.z as f64,
    ])
}

/// Precomputed convolution table: for each output mode, the list of
/// `(l, m)` pairs with `l + m = k` inside the truncated lattice.
pub(crate) struct ConvPlan {
    /// Per output mode: terms (l_idx, l_conj, m_idx, m_conj).
    pub terms: Vec<Vec<(u32, bool, u32, bool)>>,
}

/// Truncated lattice of representative modes, `0 < sup-norm(k) <= N`,
/// ordered lexicographically so runs are reproducible.
pub struct ModeSet {
    cutoff: i32,
    modes: Vec<WaveVector>,
    index: HashMap<WaveVector, usize>,
    /// `|k|^2` per mode, kept as f64 for the norm kernels.
    norm_sq: Vec<f64>,
    conv_plan: std::sync::OnceLock<ConvPlan>,
}

impl std::fmt::Debug for ModeSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModeSet")
            .field("cutoff", &self.cutoff)
            .field("modes", &self.modes.len())
            .finish()
    }
}

impl ModeSet {
    pub fn new(cutoff: u32) -> Arc<Self> {
        assert!(cutoff >= 1, "mode cutoff must be at least 1");
        let n = cutoff as i32;
        let mut modes = Vec::new();
        for x in -n..=n {
            for y in -n..=n {
                for z in -n..=n {
                    let k = WaveVector::new(x, y, z);
                    if !k.is_zero() && k.is_representative() {
                        modes.push(k);
                    }
                }
            }
        }
        modes.sort();
        let index = modes.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let norm_sq = modes.iter().map(|k| k.norm_sq() as f64).collect();
        Arc::new(ModeSet {
            cutoff: n,
            modes,
            index,
            norm_sq,
            conv_plan: std::sync::OnceLock::new(),
        })
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff as u32
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[WaveVector] {
        &self.modes
    }

    pub fn norm_sq(&self) -> &[f64] {
        &self.norm_sq
    }

    /// Index of the representative of `{k, -k}` plus a flag telling whether
    /// the stored coefficient must be conjugated to give the one at `k`.
    pub fn locate(&self, k: &WaveVector) -> Option<(usize, bool)> {
        if k.is_representative() {
            self.index.get(k).map(|&i| (i, false))
        } else {
            self.index.get(&k.neg()).map(|&i| (i, true))
        }
    }

    pub fn contains(&self, k: &WaveVector) -> bool {
        !k.is_zero() && k.sup_norm() <= self.cutoff
    }

    pub(crate) fn conv_plan(&self) -> &ConvPlan {
        self.conv_plan.get_or_init(|| {
            let mut terms = Vec::with_capacity(self.modes.len());
            for k in &self.modes {
                let mut row = Vec::new();
                for (li, l) in self.modes.iter().enumerate() {
                    for (l_full, l_conj) in [(*l, false), (l.neg(), true)] {
                        let m = k.sub(&l_full);
                        if let Some((mi, m_conj)) =
                            (self.contains(&m)).then(|| self.locate(&m)).flatten()
                        {
                            row.push((li as u32, l_conj, mi as u32, m_conj));
                        }
                    }
                }
                terms.push(row);
            }
            ConvPlan { terms }
        })
    }
}

/// A divergence-free, Hermitian-symmetric velocity field on a `ModeSet`.
#[derive(Clone)]
pub struct SpectralField {
    modes: Arc<ModeSet>,
    coeffs: Vec<[Complex64; 3]>,
}

impl std::fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralField")
            .field("modes", &self.modes)
            .finish()
    }
}

impl SpectralField {
    pub fn zero(modes: Arc<ModeSet>) -> Self {
        let coeffs = vec![[Complex64::ZERO; 3]; modes.len()];
        SpectralField { modes, coeffs }
    }

    /// Builds a field from raw coefficients without projecting; the caller
    /// must guarantee divergence-freeness.
    pub(crate) fn from_raw(modes: Arc<ModeSet>, coeffs: Vec<[Complex64; 3]>) -> Self {
        debug_assert_eq!(coeffs.len(), modes.len());
        SpectralField { modes, coeffs }
    }

    pub fn mode_set(&self) -> &Arc<ModeSet> {
        &self.modes
    }

    pub fn coeffs(&self) -> &[[Complex64; 3]] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [[Complex64; 3]] {
        &mut self.coeffs
    }

    pub fn same_mode_set(&self, other: &SpectralField) -> bool {
        Arc::ptr_eq(&self.modes, &other.modes) || self.modes.cutoff() == other.modes.cutoff()
    }

    /// Coefficient at an arbitrary lattice point (conjugated if `k` is the
    /// implied half), zero outside the mode set.
    pub fn coeff_at(&self, k: &WaveVector) -> [Complex64; 3] {
        match self.modes.locate(k) {
            Some((i, false)) => self.coeffs[i],
            Some((i, true)) => {
                let c = self.coeffs[i];
                [c[0].conj(), c[1].conj(), c[2].conj()]
            }
            None => [Complex64::ZERO; 3],
        }
    }

    pub fn set_coeff(&mut self, k: &WaveVector, v: [Complex64; 3]) -> Result<()> {
        match self.modes.locate(k) {
            Some((i, false)) => {
                self.coeffs[i] = v;
                Ok(())
            }
            Some((i, true)) => {
                self.coeffs[i] = [v[0].conj(), v[1].conj(), v[2].conj()];
                Ok(())
            }
            None => Err(SnsError::invalid("k", "outside the mode set")),
        }
    }

    /// `||u||_alpha = sqrt( sum over the full lattice of |k|^(2 alpha) |u_k|^2 )`.
    /// Full-lattice sums double the stored representative contributions.
    pub fn sobolev_norm(&self, alpha: SobolevIndex) -> f64 {
        let mut s = 0.0;
        for (c, &k2) in self.coeffs.iter().zip(self.modes.norm_sq()) {
            let a2 = c[0].norm_sqr() + c[1].norm_sqr() + c[2].norm_sqr();
            let w = if alpha == 0.0 { 1.0 } else { k2.powf(alpha) };
            s += w * a2;
        }
        (2.0 * s).sqrt()
    }

    /// H inner product over the full lattice; real by Hermitian symmetry.
    pub fn pairing(&self, other: &SpectralField) -> Result<f64> {
        if !self.same_mode_set(other) {
            return Err(SnsError::ModeSetMismatch);
        }
        let mut s = 0.0;
        for (a, b) in self.coeffs.iter().zip(&other.coeffs) {
            s += (a[0] * b[0].conj() + a[1] * b[1].conj() + a[2] * b[2].conj()).re;
        }
        Ok(2.0 * s)
    }

    /// Weighted pairing `<u, v>_{V_alpha} = sum |k|^(2 alpha) u_k . conj(v_k)`.
    pub fn pairing_alpha(&self, other: &SpectralField, alpha: SobolevIndex) -> Result<f64> {
        if !self.same_mode_set(other) {
            return Err(SnsError::ModeSetMismatch);
        }
        let mut s = 0.0;
        for ((a, b), &k2) in self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .zip(self.modes.norm_sq())
        {
            let w = if alpha == 0.0 { 1.0 } else { k2.powf(alpha) };
            s += w * (a[0] * b[0].conj() + a[1] * b[1].conj() + a[2] * b[2].conj()).re;
        }
        Ok(2.0 * s)
    }

    /// Heat semigroup `e^{-nu A t}`: multiplies each coefficient by
    /// `exp(-nu |k|^2 t)`. `t = 0` is the identity.
    pub fn apply_semigroup(&self, nu: f64, t: f64) -> Result<SpectralField> {
        if t < 0.0 {
            return Err(SnsError::NegativeTime(t));
        }
        let mut out = self.clone();
        out.decay_in_place(nu, t);
        Ok(out)
    }

    pub(crate) fn decay_in_place(&mut self, nu: f64, t: f64) {
        if t == 0.0 {
            return;
        }
        for (c, &k2) in self.coeffs.iter_mut().zip(self.modes.norm_sq()) {
            let d = (-nu * k2 * t).exp();
            for comp in c.iter_mut() {
                *comp *= d;
            }
        }
    }

    /// Fractional power of the Stokes operator, `A^p` with eigenvalue `|k|^(2p)`.
    pub fn apply_stokes_power(&self, p: f64) -> SpectralField {
        let mut out = self.clone();
        for (c, &k2) in out.coeffs.iter_mut().zip(self.modes.norm_sq()) {
            let w = k2.powf(p);
            for comp in c.iter_mut() {
                *comp *= w;
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> SpectralField {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            for comp in c.iter_mut() {
                *comp *= s;
            }
        }
        out
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        if !self.same_mode_set(other) {
            return Err(SnsError::ModeSetMismatch);
        }
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            for i in 0..3 {
                a[i] += b[i];
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        Ok(self.add(&other.scaled(-1.0))?)
    }

    /// In-place `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &SpectralField) {
        debug_assert!(self.same_mode_set(other));
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            for i in 0..3 {
                a[i] += s * b[i];
            }
        }
    }

    /// Worst relative divergence residual, `max_k |k . u_k| / ||u||_H`.
    pub fn max_divergence_rel(&self) -> f64 {
        let h = self.sobolev_norm(0.0);
        if h == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for (c, k) in self.coeffs.iter().zip(self.modes.modes()) {
            worst = worst.max(k.dot_c(c).norm());
        }
        worst / h
    }

    /// Re-applies the Leray projection mode by mode.
    pub fn project(&mut self) {
        for (c, k) in self.coeffs.iter_mut().zip(self.modes.modes()) {
            *c = leray_project(k, c).expect("mode sets never contain k = 0");
        }
    }

    pub fn has_nan(&self) -> bool {
        self.coeffs
            .iter()
            .any(|c| c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
    }
}

/// Gaussian random field with `|u_k| ~ amplitude * |k|^(-decay)`, projected
/// divergence-free. Deterministic for a given rng state.
pub fn random_field<R: Rng>(
    modes: &Arc<ModeSet>,
    decay: f64,
    amplitude: f64,
    rng: &mut R,
) -> SpectralField {
    let mut field = SpectralField::zero(modes.clone());
    for (i, k) in modes.modes().iter().enumerate() {
        let sd = amplitude * k.norm().powf(-decay) / std::f64::consts::SQRT_2;
        let mut c = [Complex64::ZERO; 3];
        for comp in c.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *comp = Complex64::new(sd * re, sd * im);
        }
        field.coeffs[i] = leray_project(k, &c).expect("nonzero mode");
    }
    field
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn leray_kills_first_component() {
        let k = WaveVector::new(1, 0, 0);
        let v = [c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)];
        let p = leray_project(&k, &v).unwrap();
        assert_relative_eq!(p[0].re, 0.0);
        assert_relative_eq!(p[1].re, 2.0);
        assert_relative_eq!(p[2].re, 3.0);
    }

    #[test]
    fn leray_parallel_vanishes() {
        let k = WaveVector::new(1, 1, 0);
        let v = [c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let p = leray_project(&k, &v).unwrap();
        for comp in p {
            assert!(comp.norm() < 1e-15);
        }
    }

    #[test]
    fn leray_kills_third_component() {
        let k = WaveVector::new(0, 0, 2);
        let v = [c(1.0, 0.0), c(0.0, 0.0), c(5.0, 0.0)];
        let p = leray_project(&k, &v).unwrap();
        assert_relative_eq!(p[0].re, 1.0);
        assert_relative_eq!(p[1].re, 0.0);
        assert_relative_eq!(p[2].re, 0.0);
    }

    #[test]
    fn leray_rejects_zero_mode() {
        let k = WaveVector::new(0, 0, 0);
        assert!(leray_project(&k, &[Complex64::ZERO; 3]).is_err());
    }

    #[test]
    fn mode_set_has_no_double_pairs() {
        let ms = ModeSet::new(2);
        for k in ms.modes() {
            assert!(k.is_representative());
            assert!(ms.locate(&k.neg()).is_some());
            assert!(!k.is_zero());
            assert!(k.sup_norm() <= 2);
        }
        // (2N+1)^3 - 1 lattice points, half of them representatives.
        assert_eq!(ms.len(), (5 * 5 * 5 - 1) / 2);
    }

    #[test]
    fn norm_single_pair_unit_mode() {
        let ms = ModeSet::new(1);
        let mut u = SpectralField::zero(ms);
        u.set_coeff(
            &WaveVector::new(1, 0, 0),
            [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        for alpha in [0.0, 0.5, 1.0, 2.0, -1.0] {
            assert_relative_eq!(u.sobolev_norm(alpha), 2.0_f64.sqrt(), epsilon = 1e-14);
        }
    }

    /// Scalar brute-force oracle summing over the full doubled lattice.
    fn brute_force_norm(u: &SpectralField, alpha: f64) -> f64 {
        let n = u.mode_set().cutoff() as i32;
        let mut s = 0.0;
        for x in -n..=n {
            for y in -n..=n {
                for z in -n..=n {
                    let k = WaveVector::new(x, y, z);
                    if k.is_zero() {
                        continue;
                    }
                    let cfs = u.coeff_at(&k);
                    let a2: f64 = cfs.iter().map(|v| v.norm_sqr()).sum();
                    s += (k.norm_sq() as f64).powf(alpha) * a2;
                }
            }
        }
        s.sqrt()
    }

    #[test]
    fn norm_hand_sum_against_oracle() {
        let ms = ModeSet::new(1);
        let mut u = SpectralField::zero(ms);
        // k = (1,1,0), u_k = (1,-1,0): divergence-free since k.u = 0.
        u.set_coeff(
            &WaveVector::new(1, 1, 0),
            [c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        assert!(u.max_divergence_rel() < 1e-15);
        // alpha = 1: 2 * |k|^2 * |u_k|^2 = 2 * 2 * 2 = 8
        assert_relative_eq!(u.sobolev_norm(1.0), 8.0_f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(
            u.sobolev_norm(1.0),
            brute_force_norm(&u, 1.0),
            epsilon = 1e-14
        );
        // alpha = 2: 2 * 4 * 2 = 16
        assert_relative_eq!(u.sobolev_norm(2.0), 4.0, epsilon = 1e-14);
        assert_relative_eq!(
            u.sobolev_norm(2.0),
            brute_force_norm(&u, 2.0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn semigroup_halves_coefficient() {
        let ms = ModeSet::new(2);
        let mut u = SpectralField::zero(ms);
        let k = WaveVector::new(2, 0, 0); // |k|^2 = 4
        u.set_coeff(&k, [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
            .unwrap();
        let t = std::f64::consts::LN_2 / 4.0;
        let decayed = u.apply_semigroup(1.0, t).unwrap();
        assert_relative_eq!(decayed.coeff_at(&k)[1].re, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn semigroup_identity_and_domain() {
        let ms = ModeSet::new(2);
        let mut rng = stream_rng(1, 0);
        let u = random_field(&ms, 1.0, 1.0, &mut rng);
        let same = u.apply_semigroup(1.0, 0.0).unwrap();
        for (a, b) in u.coeffs().iter().zip(same.coeffs()) {
            assert_eq!(a, b);
        }
        assert!(u.apply_semigroup(1.0, -0.1).is_err());
    }

    #[test]
    fn semigroup_smoothing_envelope() {
        // sup_k |k|^(2 gamma) e^{-nu |k|^2 t} <= (gamma / (e nu t))^gamma
        let ms = ModeSet::new(8);
        for (gamma, nu, t) in [(0.5, 1.0, 0.1), (1.0, 0.5, 0.05), (2.0, 1.0, 0.3)] {
            let bound = (gamma / (std::f64::consts::E * nu * t)).powf(gamma);
            for k in ms.modes() {
                let k2 = k.norm_sq() as f64;
                assert!(k2.powf(gamma) * (-nu * k2 * t).exp() <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn pairing_orthogonality_and_norm() {
        let ms = ModeSet::new(1);
        let mut u = SpectralField::zero(ms.clone());
        u.set_coeff(
            &WaveVector::new(1, 0, 0),
            [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        let mut v = SpectralField::zero(ms);
        v.set_coeff(
            &WaveVector::new(0, 1, 0),
            [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        assert_relative_eq!(u.pairing(&v).unwrap(), 0.0);
        assert_relative_eq!(u.pairing(&u).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn stokes_power_is_symmetric_in_pairing() {
        let ms = ModeSet::new(3);
        let mut rng = stream_rng(2, 0);
        let u = random_field(&ms, 1.5, 1.0, &mut rng);
        let v = random_field(&ms, 1.5, 1.0, &mut rng);
        for alpha in [0.5, 1.0, 1.7] {
            let lhs = u.apply_stokes_power(alpha).pairing(&v).unwrap();
            let rhs = u.pairing(&v.apply_stokes_power(alpha)).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn random_field_contract() {
        let ms = ModeSet::new(3);
        let zero = random_field(&ms, 1.0, 0.0, &mut stream_rng(3, 0));
        assert_eq!(zero.sobolev_norm(0.0), 0.0);

        let u = random_field(&ms, 1.0, 1.0, &mut stream_rng(3, 1));
        assert!(u.max_divergence_rel() < 1e-14);

        let v = random_field(&ms, 1.0, 1.0, &mut stream_rng(3, 1));
        for (a, b) in u.coeffs().iter().zip(v.coeffs()) {
            assert_eq!(a, b);
        }
    }
}
