//! Divergence-free Fourier calculus on the 3D torus: fields, Sobolev norms,
//! the Stokes semigroup and the Navier-Stokes bilinear term.
//!
//! The bilinear term is computed two independent ways — a direct mode-by-mode
//! convolution and a dealiased FFT pseudo-spectral product — and the two are
//! held to machine agreement. The trilinear pairing `<B(u, v), v>` vanishes
//! identically, which pins the sign and projection conventions:
//!
//! ```
//! use torus_sns::rng::stream_rng;
//! use torus_sns::spectral::{bilinear_direct, bilinear_fft, random_field, ModeSet};
//!
//! let modes = ModeSet::new(3);
//! let mut rng = stream_rng(7, 0);
//! let u = random_field(&modes, 1.0, 1.0, &mut rng);
//! let v = random_field(&modes, 1.3, 1.0, &mut rng);
//!
//! let direct = bilinear_direct(&u, &v).unwrap();
//! let fft = bilinear_fft(&u, &v).unwrap();
//! let gap = fft.sub(&direct).unwrap().sobolev_norm(0.0) / direct.sobolev_norm(0.0);
//! assert!(gap < 1e-12);
//!
//! let skew = direct.pairing(&v).unwrap().abs();
//! assert!(skew < 1e-12 * direct.sobolev_norm(0.0) * v.sobolev_norm(0.0));
//! assert!(direct.max_divergence_rel() < 1e-13);
//! ```

pub mod bilinear;
pub mod field;
pub mod io;

pub use bilinear::{bilinear_auto, bilinear_direct, bilinear_fft, fft_grid_size};
pub use field::{leray_project, random_field, ModeSet, SobolevIndex, SpectralField, WaveVector};
