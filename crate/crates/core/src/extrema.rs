//! Two-sided directional extremum tests: keep a voxel when it is a local
//! maximum (or minimum) of a scalar field along a per-voxel direction,
//! sampled trilinearly one voxel away on each side.
//!
//! Both samples must be fully defined (inside the grid, all interpolation
//! corners valid); a voxel whose probe leaves the valid region is never an
//! extremum. Plateaus survive: the test is `>=` (`<=`) on both sides with
//! strict inequality on at least one.

use crate::volume::{MaskVolume, ScalarVolume, VectorField};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumMode {
    Maximum,
    Minimum,
}

/// Trilinear sample that returns None when the point leaves the grid or any
/// corner with non-negligible weight is outside `valid`.
fn sample_masked(field: &ScalarVolume, valid: &MaskVolume, p: [f64; 3]) -> Option<f64> {
    let dims = field.grid.dims;
    let lims = [dims.0 as f64 - 1.0, dims.1 as f64 - 1.0, dims.2 as f64 - 1.0];
    for a in 0..3 {
        if !p[a].is_finite() || p[a] < 0.0 || p[a] > lims[a] {
            return None;
        }
    }
    let cell = |v: f64, n: usize| -> (usize, f64) {
        if n == 1 {
            return (0, 0.0);
        }
        let i = (v.floor() as usize).min(n - 2);
        (i, v - i as f64)
    };
    let (x0, fx) = cell(p[0], dims.0);
    let (y0, fy) = cell(p[1], dims.1);
    let (z0, fz) = cell(p[2], dims.2);
    let mut acc = 0.0;
    for dz in 0..2usize {
        for dy in 0..2usize {
            for dx in 0..2usize {
                let w = (if dx == 0 { 1.0 - fx } else { fx })
                    * (if dy == 0 { 1.0 - fy } else { fy })
                    * (if dz == 0 { 1.0 - fz } else { fz });
                if w <= 1e-12 {
                    continue;
                }
                let (x, y, z) = (
                    (x0 + dx).min(dims.0 - 1),
                    (y0 + dy).min(dims.1 - 1),
                    (z0 + dz).min(dims.2 - 1),
                );
                let idx = field.grid.index(x, y, z);
                if !valid.data[idx] {
                    return None;
                }
                let v = field.data[idx];
                if !v.is_finite() {
                    return None;
                }
                acc += w * v;
            }
        }
    }
    Some(acc)
}

/// Directional extrema of `field` over `candidates`, probing along
/// `directions` (mm-space vectors; zero means undefined and excludes the
/// voxel). The direction is converted to voxel space and normalized to a unit
/// voxel step.
pub fn directional_extrema(
    field: &ScalarVolume,
    valid: &MaskVolume,
    candidates: &MaskVolume,
    directions: &VectorField,
    mode: ExtremumMode,
) -> MaskVolume {
    let grid = field.grid;
    let (sx, sy, sz) = grid.spacing;
    let kept: Vec<bool> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if !candidates.data[idx] || !valid.data[idx] {
                return false;
            }
            let center = field.data[idx];
            if !center.is_finite() {
                return false;
            }
            let d = directions.data[idx];
            // mm direction to voxel-space step of unit length
            let step = [d[0] / sx, d[1] / sy, d[2] / sz];
            let norm = (step[0] * step[0] + step[1] * step[1] + step[2] * step[2]).sqrt();
            if norm < 1e-12 {
                return false;
            }
            let (x, y, z) = grid.coords(idx);
            let p = [x as f64, y as f64, z as f64];
            let probe = |sign: f64| -> Option<f64> {
                sample_masked(
                    field,
                    valid,
                    [
                        p[0] + sign * step[0] / norm,
                        p[1] + sign * step[1] / norm,
                        p[2] + sign * step[2] / norm,
                    ],
                )
            };
            let (Some(fwd), Some(bwd)) = (probe(1.0), probe(-1.0)) else {
                return false;
            };
            match mode {
                ExtremumMode::Maximum => {
                    center >= fwd && center >= bwd && (center > fwd || center > bwd)
                }
                ExtremumMode::Minimum => {
                    center <= fwd && center <= bwd && (center < fwd || center < bwd)
                }
            }
        })
        .collect();
    MaskVolume { grid, data: kept }
}

/// Gradient of a field defined only on `valid` voxels: central differences
/// where both neighbors are valid, one-sided where one is, zero otherwise.
/// Returned vectors are in mm^-1 and NOT normalized.
pub fn masked_gradient(field: &ScalarVolume, valid: &MaskVolume) -> VectorField {
    let grid = field.grid;
    let (nx, ny, nz) = grid.dims;
    let sp = [grid.spacing.0, grid.spacing.1, grid.spacing.2];
    let data: Vec<[f64; 3]> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if !valid.data[idx] || !field.data[idx].is_finite() {
                return [0.0; 3];
            }
            let (x, y, z) = grid.coords(idx);
            let mut g = [0.0f64; 3];
            let coords = [x as i64, y as i64, z as i64];
            let dims = [nx as i64, ny as i64, nz as i64];
            for a in 0..3 {
                let mut lo_ok = false;
                let mut hi_ok = false;
                let mut lo = 0.0;
                let mut hi = 0.0;
                let mut c = coords;
                c[a] -= 1;
                if c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] < dims[0] && c[1] < dims[1] && c[2] < dims[2] {
                    let j = grid.index(c[0] as usize, c[1] as usize, c[2] as usize);
                    if valid.data[j] && field.data[j].is_finite() {
                        lo = field.data[j];
                        lo_ok = true;
                    }
                }
                let mut c = coords;
                c[a] += 1;
                if c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] < dims[0] && c[1] < dims[1] && c[2] < dims[2] {
                    let j = grid.index(c[0] as usize, c[1] as usize, c[2] as usize);
                    if valid.data[j] && field.data[j].is_finite() {
                        hi = field.data[j];
                        hi_ok = true;
                    }
                }
                let center = field.data[idx];
                g[a] = match (lo_ok, hi_ok) {
                    (true, true) => (hi - lo) / (2.0 * sp[a]),
                    (true, false) => (center - lo) / sp[a],
                    (false, true) => (hi - center) / sp[a],
                    (false, false) => 0.0,
                };
            }
            g
        })
        .collect();
    VectorField { grid, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn monotone_ramp_has_no_extrema() {
        let g = Grid::isotropic((10, 10, 10), 1.0).unwrap();
        let field = ScalarVolume::from_fn(g, |x, _, _| x as f64);
        let valid = MaskVolume::full(g);
        let dirs = masked_gradient(&field, &valid);
        let out = directional_extrema(&field, &valid, &valid, &dirs, ExtremumMode::Maximum);
        assert_eq!(out.count(), 0);
    }

    #[test]
    fn tent_plateau_is_kept() {
        // D = min(x, 9 - x): two-voxel plateau at x in {4, 5}
        let g = Grid::isotropic((10, 6, 6), 1.0).unwrap();
        let field = ScalarVolume::from_fn(g, |x, _, _| (x as f64).min(9.0 - x as f64));
        let valid = MaskVolume::full(g);
        let dirs = masked_gradient(&field, &valid);
        let out = directional_extrema(&field, &valid, &valid, &dirs, ExtremumMode::Maximum);
        for y in 1..5 {
            for z in 1..5 {
                assert!(out.at(4, y, z) && out.at(5, y, z), "plateau dropped at y={y} z={z}");
                for x in [0, 1, 2, 3, 6, 7, 8, 9] {
                    assert!(!out.at(x, y, z), "spurious max at x={x}");
                }
            }
        }
    }

    #[test]
    fn matches_brute_force_on_radial_field() {
        // oracle: re-apply the two-sided condition literally at every voxel
        let g = Grid::isotropic((14, 14, 14), 1.0).unwrap();
        let c = 6.5;
        let field = ScalarVolume::from_fn(g, |x, y, z| {
            ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt()
        });
        let valid = MaskVolume::full(g);
        let dirs = masked_gradient(&field, &valid);
        let got = directional_extrema(&field, &valid, &valid, &dirs, ExtremumMode::Maximum);

        for idx in 0..g.len() {
            let d = dirs.data[idx];
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let expect = if norm < 1e-12 {
                false
            } else {
                let (x, y, z) = g.coords(idx);
                let u = [d[0] / norm, d[1] / norm, d[2] / norm];
                let sample = |s: f64| {
                    sample_masked(
                        &field,
                        &valid,
                        [x as f64 + s * u[0], y as f64 + s * u[1], z as f64 + s * u[2]],
                    )
                };
                match (sample(1.0), sample(-1.0)) {
                    (Some(f), Some(b)) => {
                        let v = field.data[idx];
                        v >= f && v >= b && (v > f || v > b)
                    }
                    _ => false,
                }
            };
            assert_eq!(got.data[idx], expect, "mismatch at {:?}", g.coords(idx));
        }
    }

    #[test]
    fn minimum_mode_mirrors_maximum() {
        let g = Grid::isotropic((12, 6, 6), 1.0).unwrap();
        let vee = ScalarVolume::from_fn(g, |x, _, _| (x as f64 - 5.0).abs());
        let valid = MaskVolume::full(g);
        let dirs = VectorField {
            grid: g,
            data: vec![[1.0, 0.0, 0.0]; g.len()],
        };
        let out = directional_extrema(&vee, &valid, &valid, &dirs, ExtremumMode::Minimum);
        for y in 1..5 {
            for z in 1..5 {
                assert!(out.at(5, y, z));
                assert!(!out.at(3, y, z) && !out.at(8, y, z));
            }
        }
    }
}
