//! Separable truncated-Gaussian smoothing, plus the support-normalized variant
//! used to extrapolate sparse maps.
//!
//! Kernels are truncated at 4 sigma and renormalized. Plain smoothing uses
//! replicate-edge padding; the support-normalized variant zero-pads (outside
//! the grid there is no support, so it must not contribute mass).

use crate::error::{Error, Result};
use crate::volume::{MaskVolume, ScalarVolume};
use rayon::prelude::*;

/// Sampled Gaussian kernel, unit sum, radius `ceil(4*sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i as f64).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Sampled Gaussian first-derivative kernel for correlation, scaled so that a
/// unit ramp responds with exactly 1 (per voxel unit).
pub fn gaussian_deriv1_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| {
            let x = i as f64;
            x / (sigma * sigma) * (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    // antisymmetric by construction; scale so sum(i * k[i]) = 1
    let scale: f64 = (-radius..=radius)
        .zip(k.iter())
        .map(|(i, &v)| i as f64 * v)
        .sum();
    for v in &mut k {
        *v /= scale;
    }
    k
}

/// Sampled Gaussian second-derivative kernel for correlation: exact zero sum
/// (constants map to 0) and unit response to `x^2 / 2` (per voxel unit).
pub fn gaussian_deriv2_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as i64;
    let s2 = sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| {
            let x = i as f64;
            (x * x - s2) / (s2 * s2) * (-(x * x) / (2.0 * s2)).exp()
        })
        .collect();
    let n = k.len() as f64;
    let mean: f64 = k.iter().sum::<f64>() / n;
    for v in &mut k {
        *v -= mean;
    }
    let scale: f64 = (-radius..=radius)
        .zip(k.iter())
        .map(|(i, &v)| (i as f64).powi(2) / 2.0 * v)
        .sum();
    for v in &mut k {
        *v /= scale;
    }
    k
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Replicate,
    Zero,
}

/// One correlation pass along `axis` (0=x, 1=y, 2=z).
pub fn correlate_axis(v: &ScalarVolume, kernel: &[f64], axis: usize, pad: Padding) -> ScalarVolume {
    correlate_axis_impl(v, kernel, axis, pad, false)
}

/// Correlation for zero-sum kernels (derivatives): accumulates
/// `sum w[k] * (v[i+k] - v[i])`, which is algebraically identical but maps
/// constants to exactly 0.0 regardless of rounding in the kernel weights.
pub fn correlate_axis_centered(
    v: &ScalarVolume,
    kernel: &[f64],
    axis: usize,
    pad: Padding,
) -> ScalarVolume {
    correlate_axis_impl(v, kernel, axis, pad, true)
}

fn correlate_axis_impl(
    v: &ScalarVolume,
    kernel: &[f64],
    axis: usize,
    pad: Padding,
    centered: bool,
) -> ScalarVolume {
    let (nx, ny, nz) = v.grid.dims;
    let n_axis = [nx, ny, nz][axis] as i64;
    let radius = (kernel.len() / 2) as i64;
    let stride = match axis {
        0 => 1,
        1 => nx,
        _ => nx * ny,
    };
    // enumerate the start index of every line along `axis`
    let lines: Vec<usize> = match axis {
        0 => (0..ny * nz).map(|i| i * nx).collect(),
        1 => (0..nz)
            .flat_map(|z| (0..nx).map(move |x| x + z * nx * ny))
            .collect(),
        _ => (0..nx * ny).collect(),
    };

    let mut out = vec![0.0; v.data.len()];
    let src = &v.data;
    // each line writes a disjoint slice of `out`
    let chunks: Vec<(usize, Vec<f64>)> = lines
        .par_iter()
        .map(|&start| {
            let mut line = vec![0.0; n_axis as usize];
            for (i, slot) in line.iter_mut().enumerate() {
                let center = if centered {
                    src[start + i * stride]
                } else {
                    0.0
                };
                let mut acc = 0.0;
                for (kidx, &w) in kernel.iter().enumerate() {
                    let off = kidx as i64 - radius;
                    let j = i as i64 + off;
                    let val = if j < 0 || j >= n_axis {
                        match pad {
                            Padding::Replicate => {
                                let jc = j.clamp(0, n_axis - 1);
                                src[start + jc as usize * stride]
                            }
                            Padding::Zero => 0.0,
                        }
                    } else {
                        src[start + j as usize * stride]
                    };
                    acc += w * (val - center);
                }
                *slot = acc;
            }
            (start, line)
        })
        .collect();
    for (start, line) in chunks {
        for (i, val) in line.into_iter().enumerate() {
            out[start + i * stride] = val;
        }
    }
    ScalarVolume {
        grid: v.grid,
        data: out,
    }
}

/// Separable convolution with per-axis kernels.
pub fn separable(v: &ScalarVolume, kernels: [&[f64]; 3], pad: Padding) -> ScalarVolume {
    let a = correlate_axis(v, kernels[0], 0, pad);
    let b = correlate_axis(&a, kernels[1], 1, pad);
    correlate_axis(&b, kernels[2], 2, pad)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::Parameter(format!(
            "gaussian sigma must be finite and > 0, got {sigma}"
        )));
    }
    Ok(())
}

/// Separable truncated-Gaussian smoothing with `sigma` in voxels.
///
/// Without a support mask this is plain replicate-padded convolution. With a
/// support mask it is normalized convolution `smooth(v*m)/smooth(m)`, defined
/// only where the smoothed mask mass exceeds 1e-12; undefined voxels are 0.
pub fn gaussian_smooth(
    v: &ScalarVolume,
    sigma_voxels: f64,
    support: Option<&MaskVolume>,
) -> Result<ScalarVolume> {
    match support {
        None => {
            check_sigma(sigma_voxels)?;
            let k = gaussian_kernel(sigma_voxels);
            Ok(separable(v, [&k, &k, &k], Padding::Replicate))
        }
        Some(m) => {
            let (smoothed, _) = gaussian_smooth_with_mass(v, m, sigma_voxels)?;
            Ok(smoothed)
        }
    }
}

/// Support-normalized smoothing returning both the normalized values and the
/// smoothed support mass (useful to decide which voxels gained coverage).
pub fn gaussian_smooth_with_mass(
    v: &ScalarVolume,
    support: &MaskVolume,
    sigma_voxels: f64,
) -> Result<(ScalarVolume, ScalarVolume)> {
    check_sigma(sigma_voxels)?;
    v.grid.check_same(&support.grid, "gaussian_smooth support")?;
    let k = gaussian_kernel(sigma_voxels);
    let masked = ScalarVolume {
        grid: v.grid,
        data: v
            .data
            .iter()
            .zip(&support.data)
            .map(|(&val, &m)| if m { val } else { 0.0 })
            .collect(),
    };
    let mask_field = ScalarVolume {
        grid: v.grid,
        data: support
            .data
            .iter()
            .map(|&m| if m { 1.0 } else { 0.0 })
            .collect(),
    };
    let num = separable(&masked, [&k, &k, &k], Padding::Zero);
    let mass = separable(&mask_field, [&k, &k, &k], Padding::Zero);
    let data = num
        .data
        .iter()
        .zip(&mass.data)
        .map(|(&n, &d)| if d > 1e-12 { n / d } else { 0.0 })
        .collect();
    Ok((
        ScalarVolume {
            grid: v.grid,
            data,
        },
        mass,
    ))
}
