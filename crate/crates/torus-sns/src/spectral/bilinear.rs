//! The Navier-Stokes bilinear term on the truncated lattice,
//! `B(u, v)_k = i P_k sum_{l+m=k} (k . u_l) v_m`,
//! in a direct-convolution form (the oracle) and an FFT form (the fast path).
//! The FFT grid is padded past the 2/3 rule so no aliased product lands on a
//! retained mode; the two paths then agree to rounding.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Result, SnsError};
use crate::spectral::field::{leray_project, SpectralField};

/// Exact convolution over all `(l, m)` pairs inside the mode set, truncated
/// back to the mode set. Quadratic in the lattice size; meant for small `N`
/// and as the oracle for the FFT path.
pub fn bilinear_direct(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    if !u.same_mode_set(v) {
        return Err(SnsError::ModeSetMismatch);
    }
    let modes = u.mode_set().clone();
    let plan = modes.conv_plan();
    let uc = u.coeffs();
    let vc = v.coeffs();
    let mut out = Vec::with_capacity(modes.len());
    for (k, row) in modes.modes().iter().zip(&plan.terms) {
        let mut s = [Complex64::new(0.0, 0.0); 3];
        for &(li, lconj, mi, mconj) in row {
            let ul = uc[li as usize];
            let kx = k.x as f64;
            let ky = k.y as f64;
            let kz = k.z as f64;
            let kdot = if lconj {
                ul[0].conj() * kx + ul[1].conj() * ky + ul[2].conj() * kz
            } else {
                ul[0] * kx + ul[1] * ky + ul[2] * kz
            };
            let vm = vc[mi as usize];
            if mconj {
                s[0] += kdot * vm[0].conj();
                s[1] += kdot * vm[1].conj();
                s[2] += kdot * vm[2].conj();
            } else {
                s[0] += kdot * vm[0];
                s[1] += kdot * vm[1];
                s[2] += kdot * vm[2];
            }
        }
        let i = Complex64::new(0.0, 1.0);
        let si = [i * s[0], i * s[1], i * s[2]];
        out.push(leray_project(k, &si)?);
    }
    Ok(SpectralField::from_raw(modes, out))
}

fn fft_cache() -> &'static Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut cache = fft_cache().lock().unwrap();
    cache
        .entry((len, forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            let dir = if forward {
                FftDirection::Forward
            } else {
                FftDirection::Inverse
            };
            planner.plan_fft(len, dir)
        })
        .clone()
}

/// In-place 3D FFT over a cube of side `m`, index layout `(x * m + y) * m + z`.
fn fft3(data: &mut [Complex64], m: usize, forward: bool) {
    let fft = plan(m, forward);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // z axis: contiguous rows
    for row in data.chunks_exact_mut(m) {
        fft.process_with_scratch(row, &mut scratch);
    }
    // y axis
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for x in 0..m {
        for z in 0..m {
            for y in 0..m {
                buf[y] = data[(x * m + y) * m + z];
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for y in 0..m {
                data[(x * m + y) * m + z] = buf[y];
            }
        }
    }
    // x axis
    for y in 0..m {
        for z in 0..m {
            for x in 0..m {
                buf[x] = data[(x * m + y) * m + z];
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for x in 0..m {
                data[(x * m + y) * m + z] = buf[x];
            }
        }
    }
}

fn grid_index(k: i32, m: usize) -> usize {
    k.rem_euclid(m as i32) as usize
}

/// Smallest transform size with no aliasing for products of modes with
/// sup-norm up to `n`: needs `m > 3 n`.
pub fn fft_grid_size(n: u32) -> usize {
    let need = 3 * n as usize + 1;
    need.next_power_of_two().max(8)
}

/// FFT evaluation of the same operator. Identical to [`bilinear_direct`] up
/// to floating-point rounding on every retained coefficient.
pub fn bilinear_fft(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    if !u.same_mode_set(v) {
        return Err(SnsError::ModeSetMismatch);
    }
    let modes = u.mode_set().clone();
    let n = modes.cutoff();
    let m = fft_grid_size(n);
    if 3 * n as usize + 1 > m {
        return Err(SnsError::Config(format!(
            "transform size {m} too small for cutoff {n}"
        )));
    }
    let vol = m * m * m;

    // physical u components
    let mut phys_u: Vec<Vec<Complex64>> = Vec::with_capacity(3);
    for j in 0..3 {
        let mut grid = vec![Complex64::new(0.0, 0.0); vol];
        for (k, c) in modes.modes().iter().zip(u.coeffs()) {
            let idx = (grid_index(k.x, m) * m + grid_index(k.y, m)) * m + grid_index(k.z, m);
            grid[idx] = c[j];
            let kn = k.neg();
            let idxn = (grid_index(kn.x, m) * m + grid_index(kn.y, m)) * m + grid_index(kn.z, m);
            grid[idxn] = c[j].conj();
        }
        fft3(&mut grid, m, false);
        phys_u.push(grid);
    }

    // physical derivatives d_i v_j, spectral coefficient i * m_i * v_j
    let mut phys_dv: Vec<Vec<Complex64>> = Vec::with_capacity(9);
    for i_axis in 0..3 {
        for j in 0..3 {
            let mut grid = vec![Complex64::new(0.0, 0.0); vol];
            for (k, c) in modes.modes().iter().zip(v.coeffs()) {
                let ki = [k.x, k.y, k.z][i_axis] as f64;
                let val = Complex64::new(0.0, ki) * c[j];
                let idx = (grid_index(k.x, m) * m + grid_index(k.y, m)) * m + grid_index(k.z, m);
                grid[idx] = val;
                let kn = k.neg();
                let idxn =
                    (grid_index(kn.x, m) * m + grid_index(kn.y, m)) * m + grid_index(kn.z, m);
                grid[idxn] = val.conj();
            }
            fft3(&mut grid, m, false);
            phys_dv.push(grid);
        }
    }

    // pointwise advection (u . grad) v, then back to spectral space
    let norm = 1.0 / vol as f64;
    let mut out_coeffs = vec![[Complex64::new(0.0, 0.0); 3]; modes.len()];
    for j in 0..3 {
        let mut w = vec![Complex64::new(0.0, 0.0); vol];
        for idx in 0..vol {
            let mut acc = Complex64::new(0.0, 0.0);
            for i_axis in 0..3 {
                acc += phys_u[i_axis][idx] * phys_dv[i_axis * 3 + j][idx];
            }
            w[idx] = acc;
        }
        fft3(&mut w, m, true);
        for (out, k) in out_coeffs.iter_mut().zip(modes.modes()) {
            let idx = (grid_index(k.x, m) * m + grid_index(k.y, m)) * m + grid_index(k.z, m);
            out[j] = w[idx] * norm;
        }
    }
    for (out, k) in out_coeffs.iter_mut().zip(modes.modes()) {
        *out = leray_project(k, out)?;
    }
    Ok(SpectralField::from_raw(modes, out_coeffs))
}

/// Picks the direct path on small lattices and the FFT path above `N = 4`.
pub fn bilinear_auto(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    if u.mode_set().cutoff() <= 4 {
        bilinear_direct(u, v)
    } else {
        bilinear_fft(u, v)
    }
}
