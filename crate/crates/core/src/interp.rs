//! Trilinear interpolation at continuous voxel coordinates.

use crate::error::{Error, Result};
use crate::volume::ScalarVolume;

/// Standard trilinear interpolation of `v` at a point in voxel coordinates.
/// Exact at lattice points. `p` must lie in `[0, dim-1]` per axis.
pub fn trilinear_sample(v: &ScalarVolume, p: [f64; 3]) -> Result<f64> {
    let (nx, ny, nz) = v.grid.dims;
    let dims = [nx as f64, ny as f64, nz as f64];
    for a in 0..3 {
        if !p[a].is_finite() || p[a] < 0.0 || p[a] > dims[a] - 1.0 {
            return Err(Error::Domain(format!(
                "sample point {p:?} outside [0, dim-1] for dims {:?}",
                v.grid.dims
            )));
        }
    }
    Ok(trilinear_unchecked(v, p))
}

/// Trilinear interpolation without the domain check; caller guarantees bounds.
pub(crate) fn trilinear_unchecked(v: &ScalarVolume, p: [f64; 3]) -> f64 {
    let (nx, ny, _) = v.grid.dims;
    // lower cell corner and fraction; at the upper face the fraction is 1 with
    // the cell shifted down so corner+1 stays valid
    let base = |val: f64, n: usize| -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let i = (val.floor() as usize).min(n - 2);
        (i, i + 1, val - i as f64)
    };
    let (x0, x1, fx) = base(p[0], v.grid.dims.0);
    let (y0, y1, fy) = base(p[1], v.grid.dims.1);
    let (z0, z1, fz) = base(p[2], v.grid.dims.2);
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let d = &v.data;
    let c00 = d[idx(x0, y0, z0)] * (1.0 - fx) + d[idx(x1, y0, z0)] * fx;
    let c10 = d[idx(x0, y1, z0)] * (1.0 - fx) + d[idx(x1, y1, z0)] * fx;
    let c01 = d[idx(x0, y0, z1)] * (1.0 - fx) + d[idx(x1, y0, z1)] * fx;
    let c11 = d[idx(x0, y1, z1)] * (1.0 - fx) + d[idx(x1, y1, z1)] * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    c0 * (1.0 - fz) + c1 * fz
}
