//! Finite-difference gradient and scale-space Hessian eigen-decomposition.

use crate::error::{Error, Result};
use crate::smooth::{
    correlate_axis, correlate_axis_centered, gaussian_deriv1_kernel, gaussian_deriv2_kernel,
    gaussian_kernel, Padding,
};
use crate::volume::{ScalarVolume, VectorField};
use rayon::prelude::*;

/// Central-difference gradient in mm^-1 (one-sided at the faces).
pub fn gradient(v: &ScalarVolume) -> Result<VectorField> {
    let (nx, ny, nz) = v.grid.dims;
    if nx < 3 || ny < 3 || nz < 3 {
        return Err(Error::Geometry(format!(
            "gradient needs >= 3 voxels per axis, got {:?}",
            v.grid.dims
        )));
    }
    let (sx, sy, sz) = v.grid.spacing;
    let grid = v.grid;
    let data: Vec<[f64; 3]> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (x, y, z) = grid.coords(idx);
            let diff = |lo: f64, hi: f64, two_h: f64| (hi - lo) / two_h;
            let gx = if x == 0 {
                diff(v.at(0, y, z), v.at(1, y, z), sx)
            } else if x == nx - 1 {
                diff(v.at(nx - 2, y, z), v.at(nx - 1, y, z), sx)
            } else {
                diff(v.at(x - 1, y, z), v.at(x + 1, y, z), 2.0 * sx)
            };
            let gy = if y == 0 {
                diff(v.at(x, 0, z), v.at(x, 1, z), sy)
            } else if y == ny - 1 {
                diff(v.at(x, ny - 2, z), v.at(x, ny - 1, z), sy)
            } else {
                diff(v.at(x, y - 1, z), v.at(x, y + 1, z), 2.0 * sy)
            };
            let gz = if z == 0 {
                diff(v.at(x, y, 0), v.at(x, y, 1), sz)
            } else if z == nz - 1 {
                diff(v.at(x, y, nz - 2), v.at(x, y, nz - 1), sz)
            } else {
                diff(v.at(x, y, z - 1), v.at(x, y, z + 1), 2.0 * sz)
            };
            [gx, gy, gz]
        })
        .collect();
    Ok(VectorField { grid, data })
}

/// Per-voxel eigenvalues of the scale-space Hessian, sorted |l1| <= |l2| <= |l3|,
/// plus the eigenvector of l3 (sign fixed: largest nonzero of (z, y, x) >= 0).
#[derive(Debug, Clone)]
pub struct HessianEigen {
    pub grid: crate::grid::Grid,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub lambda3: Vec<f64>,
    pub e3: Vec<[f64; 3]>,
}

/// The six distinct Gaussian-smoothed second derivatives, in mm^-2.
#[derive(Debug, Clone)]
pub struct HessianField {
    pub hxx: ScalarVolume,
    pub hyy: ScalarVolume,
    pub hzz: ScalarVolume,
    pub hxy: ScalarVolume,
    pub hxz: ScalarVolume,
    pub hyz: ScalarVolume,
}

impl HessianField {
    #[inline]
    pub fn matrix(&self, i: usize) -> [[f64; 3]; 3] {
        [
            [self.hxx.data[i], self.hxy.data[i], self.hxz.data[i]],
            [self.hxy.data[i], self.hyy.data[i], self.hyz.data[i]],
            [self.hxz.data[i], self.hyz.data[i], self.hzz.data[i]],
        ]
    }

    /// Frobenius norm of the Hessian at voxel `i`.
    #[inline]
    pub fn frobenius(&self, i: usize) -> f64 {
        let (xx, yy, zz) = (self.hxx.data[i], self.hyy.data[i], self.hzz.data[i]);
        let (xy, xz, yz) = (self.hxy.data[i], self.hxz.data[i], self.hyz.data[i]);
        (xx * xx + yy * yy + zz * zz + 2.0 * (xy * xy + xz * xz + yz * yz)).sqrt()
    }
}

/// Gaussian-smoothed Hessian components at physical scale `scale_mm`,
/// converted per axis to voxel sigmas (each must be >= 0.25).
pub fn hessian_field(v: &ScalarVolume, scale_mm: f64) -> Result<HessianField> {
    if !scale_mm.is_finite() || scale_mm <= 0.0 {
        return Err(Error::Parameter(format!(
            "hessian scale must be finite and > 0, got {scale_mm}"
        )));
    }
    let (sx, sy, sz) = v.grid.spacing;
    let sig = [scale_mm / sx, scale_mm / sy, scale_mm / sz];
    for (axis, s) in sig.iter().enumerate() {
        if *s < 0.25 {
            return Err(Error::Parameter(format!(
                "scale {scale_mm} mm is {s:.3} voxels on axis {axis}; need >= 0.25"
            )));
        }
    }
    let g: Vec<Vec<f64>> = sig.iter().map(|&s| gaussian_kernel(s)).collect();
    let d1: Vec<Vec<f64>> = sig.iter().map(|&s| gaussian_deriv1_kernel(s)).collect();
    let d2: Vec<Vec<f64>> = sig.iter().map(|&s| gaussian_deriv2_kernel(s)).collect();

    // kernels produce voxel-unit derivatives; convert to mm^-2. Derivative
    // axes use the centered pass so constants map to exactly zero.
    let second = |a: usize| -> ScalarVolume {
        let mut kernels: [&[f64]; 3] = [&g[0], &g[1], &g[2]];
        kernels[a] = &d2[a];
        let mut centered = [false; 3];
        centered[a] = true;
        let mut out = separable_all(v, kernels, centered);
        let h2 = [sx, sy, sz][a].powi(2);
        out.data.iter_mut().for_each(|x| *x /= h2);
        out
    };
    let mixed = |a: usize, b: usize| -> ScalarVolume {
        let mut kernels: [&[f64]; 3] = [&g[0], &g[1], &g[2]];
        kernels[a] = &d1[a];
        kernels[b] = &d1[b];
        let mut centered = [false; 3];
        centered[a] = true;
        centered[b] = true;
        let mut out = separable_all(v, kernels, centered);
        let hh = [sx, sy, sz][a] * [sx, sy, sz][b];
        out.data.iter_mut().for_each(|x| *x /= hh);
        out
    };

    Ok(HessianField {
        hxx: second(0),
        hyy: second(1),
        hzz: second(2),
        hxy: mixed(0, 1),
        hxz: mixed(0, 2),
        hyz: mixed(1, 2),
    })
}

/// Eigen-decomposition of the scale-space Hessian at every voxel.
pub fn hessian_eigen(v: &ScalarVolume, scale_mm: f64) -> Result<HessianEigen> {
    let field = hessian_field(v, scale_mm)?;
    Ok(eigen_of_field(&field))
}

/// Eigen-decomposition of an already computed Hessian field.
pub fn eigen_of_field(field: &HessianField) -> HessianEigen {
    let grid = field.hxx.grid;
    let n = grid.len();
    let eig: Vec<([f64; 3], [f64; 3])> = (0..n)
        .into_par_iter()
        .map(|i| symmetric_eigen_3x3(field.matrix(i)))
        .collect();

    let mut out = HessianEigen {
        grid,
        lambda1: Vec::with_capacity(n),
        lambda2: Vec::with_capacity(n),
        lambda3: Vec::with_capacity(n),
        e3: Vec::with_capacity(n),
    };
    for (vals, vec3) in eig {
        out.lambda1.push(vals[0]);
        out.lambda2.push(vals[1]);
        out.lambda3.push(vals[2]);
        out.e3.push(vec3);
    }
    out
}

fn separable_all(v: &ScalarVolume, kernels: [&[f64]; 3], centered: [bool; 3]) -> ScalarVolume {
    let pass = |vol: &ScalarVolume, axis: usize| {
        if centered[axis] {
            correlate_axis_centered(vol, kernels[axis], axis, Padding::Replicate)
        } else {
            correlate_axis(vol, kernels[axis], axis, Padding::Replicate)
        }
    };
    let a = pass(v, 0);
    let b = pass(&a, 1);
    pass(&b, 2)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 3x3 matrix. Returns
/// eigenvalues stably sorted by ascending magnitude and the eigenvector of the
/// largest-magnitude one.
pub fn symmetric_eigen_3x3(h: [[f64; 3]; 3]) -> ([f64; 3], [f64; 3]) {
    let mut a = h;
    let mut q = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _sweep in 0..32 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for (p, r) in [(0, 1), (0, 2), (1, 2)] {
            let apr = a[p][r];
            if apr == 0.0 {
                continue;
            }
            let theta = (a[r][r] - a[p][p]) / (2.0 * apr);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // rotate rows/cols p and r
            for k in 0..3 {
                let akp = a[k][p];
                let akr = a[k][r];
                a[k][p] = c * akp - s * akr;
                a[k][r] = s * akp + c * akr;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let ark = a[r][k];
                a[p][k] = c * apk - s * ark;
                a[r][k] = s * apk + c * ark;
            }
            for row in &mut q {
                let qp = row[p];
                let qr = row[r];
                row[p] = c * qp - s * qr;
                row[r] = s * qp + c * qr;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    let vals = [a[0][0], a[1][1], a[2][2]];
    // stable sort by |.| keeps deterministic tie handling
    order.sort_by(|&i, &j| {
        vals[i]
            .abs()
            .partial_cmp(&vals[j].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted = [vals[order[0]], vals[order[1]], vals[order[2]]];
    let mut e3 = [q[0][order[2]], q[1][order[2]], q[2][order[2]]];
    // deterministic sign: make the largest-magnitude of (z, y, x) nonnegative
    let pick = if e3[2] != 0.0 {
        e3[2]
    } else if e3[1] != 0.0 {
        e3[1]
    } else {
        e3[0]
    };
    if pick < 0.0 {
        for c in &mut e3 {
            *c = -*c;
        }
    }
    (sorted, e3)
}
