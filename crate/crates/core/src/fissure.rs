//! Fissure sheet extraction by geodesic distance skeletonization: smooth the
//! image into a speed map, march geodesic distance from the WM/GM boundary,
//! keep directional maxima of the distance along its own gradient, then thin
//! the kept ridge to a single-voxel sheet with topology-preserving removal.

use crate::eikonal::{solve_eikonal, GeodesicDistance};
use crate::error::{Error, Result};
use crate::extrema::{directional_extrema, masked_gradient, ExtremumMode};
use crate::grid::Connectivity;
use crate::smooth::gaussian_smooth;
use crate::volume::{MaskVolume, ScalarVolume};

/// Default smoothing for the speed map, in voxels.
pub const DEFAULT_SPEED_SIGMA: f64 = 1.5;

/// Speed map F = smooth(image), clamped below at 1e-6 * max(F) so dark
/// fissures slow the march without stalling it.
pub fn speed_map(v: &ScalarVolume, sigma_voxels: f64) -> Result<ScalarVolume> {
    let mut f = gaussian_smooth(v, sigma_voxels, None)?;
    let max = f.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::Data(format!(
            "speed map has no positive values (max = {max}); image must be standardized"
        )));
    }
    let floor = 1e-6 * max;
    for x in f.data.iter_mut() {
        if *x < floor {
            *x = floor;
        }
    }
    Ok(f)
}

/// WM voxels that touch GM across a face: the march source.
pub fn wm_gm_boundary(wm: &MaskVolume, gm: &MaskVolume) -> Result<MaskVolume> {
    wm.grid.check_same(&gm.grid, "wm/gm boundary")?;
    let mut out = MaskVolume::empty(wm.grid);
    for i in wm.indices() {
        if gm.any_neighbor_set(i, Connectivity::Six) {
            out.data[i] = true;
        }
    }
    Ok(out)
}

/// Directional maxima of the geodesic distance along its own gradient.
/// Gradients below 1e-9 mm^-1 are excluded; probes that leave the finite
/// region disqualify the voxel.
pub fn directional_maxima(dist: &GeodesicDistance, domain: &MaskVolume) -> Result<MaskVolume> {
    dist.dist.grid.check_same(&domain.grid, "directional maxima domain")?;
    let grid = dist.dist.grid;
    let valid = MaskVolume {
        grid,
        data: (0..grid.len())
            .map(|i| domain.data[i] && dist.dist.data[i].is_finite())
            .collect(),
    };
    let mut dirs = masked_gradient(&dist.dist, &valid);
    for g in dirs.data.iter_mut() {
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if norm < 1e-9 {
            *g = [0.0; 3];
        }
    }
    Ok(directional_extrema(
        &dist.dist,
        &valid,
        &valid,
        &dirs,
        ExtremumMode::Maximum,
    ))
}

// ---- topology-preserving thinning ---------------------------------------

/// 26-neighborhood offsets once, with their local adjacency tables.
fn neighborhood_offsets() -> [(i64, i64, i64); 26] {
    let mut out = [(0i64, 0i64, 0i64); 26];
    let mut n = 0;
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if (dx, dy, dz) != (0, 0, 0) {
                    out[n] = (dx, dy, dz);
                    n += 1;
                }
            }
        }
    }
    out
}

/// Simple-point test for (26, 6) connectivity: removal keeps exactly one
/// 26-connected foreground component in the 26-neighborhood and exactly one
/// 6-connected background component in the 18-neighborhood that touches a
/// face neighbor.
fn is_simple_point(set: &[bool], grid: &crate::grid::Grid, idx: usize) -> bool {
    let offsets = neighborhood_offsets();
    let (x, y, z) = grid.coords(idx);
    // fg[i]: neighbor i exists and is foreground; bg cells include out-of-grid
    let mut fg = [false; 26];
    for (i, &(dx, dy, dz)) in offsets.iter().enumerate() {
        let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
        if grid.contains(nx, ny, nz) {
            fg[i] = set[grid.index(nx as usize, ny as usize, nz as usize)];
        }
    }

    // foreground: 26-components among fg positions
    let mut seen = [false; 26];
    let mut fg_components = 0;
    for start in 0..26 {
        if !fg[start] || seen[start] {
            continue;
        }
        fg_components += 1;
        if fg_components > 1 {
            return false;
        }
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (ix, iy, iz) = offsets[i];
            for (j, &(jx, jy, jz)) in offsets.iter().enumerate() {
                if fg[j]
                    && !seen[j]
                    && (ix - jx).abs() <= 1
                    && (iy - jy).abs() <= 1
                    && (iz - jz).abs() <= 1
                {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    if fg_components != 1 {
        return false;
    }

    // background: 6-components within the 18-neighborhood, counted only when
    // they contain a face neighbor
    let in_18 = |i: usize| {
        let (dx, dy, dz) = offsets[i];
        dx.abs() + dy.abs() + dz.abs() <= 2
    };
    let is_face = |i: usize| {
        let (dx, dy, dz) = offsets[i];
        dx.abs() + dy.abs() + dz.abs() == 1
    };
    let mut seen_bg = [false; 26];
    let mut bg_components_with_face = 0;
    for start in 0..26 {
        if !in_18(start) || fg[start] || seen_bg[start] {
            continue;
        }
        let mut touches_face = false;
        let mut stack = vec![start];
        seen_bg[start] = true;
        while let Some(i) = stack.pop() {
            if is_face(i) {
                touches_face = true;
            }
            let (ix, iy, iz) = offsets[i];
            for (j, &(jx, jy, jz)) in offsets.iter().enumerate() {
                if in_18(j)
                    && !fg[j]
                    && !seen_bg[j]
                    && (ix - jx).abs() + (iy - jy).abs() + (iz - jz).abs() == 1
                {
                    seen_bg[j] = true;
                    stack.push(j);
                }
            }
        }
        if touches_face {
            bg_components_with_face += 1;
            if bg_components_with_face > 1 {
                return false;
            }
        }
    }
    bg_components_with_face == 1
}

/// Thin a candidate ridge to a single-voxel sheet.
///
/// A voxel is removable only when it is the face of an exact cross-axis pair
/// (a run of exactly two candidates along some axis: background behind it, a
/// partner ahead, background beyond the partner) and it is a simple point, so
/// foreground 26-connectivity and background 6-connectivity are preserved.
/// Pair removal reduces thickness but never sheet extent: rim voxels of an
/// already-thin sheet sit in in-plane runs longer than two and are left
/// alone. Removal attempts run in ascending distance order, keeping the
/// maximal-distance (medial) member of each pair, and repeat to fixpoint.
pub fn thin_to_sheet(
    candidates: &MaskVolume,
    dist: &ScalarVolume,
    domain: &MaskVolume,
) -> Result<MaskVolume> {
    candidates.grid.check_same(&dist.grid, "thinning distance")?;
    candidates.grid.check_same(&domain.grid, "thinning domain")?;
    let grid = candidates.grid;
    let mut set = candidates.data.clone();

    let mut order: Vec<usize> = candidates.indices().collect();
    order.sort_by(|&a, &b| {
        dist.data[a]
            .partial_cmp(&dist.data[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let side_in = |set: &[bool], x: usize, y: usize, z: usize, axis: usize, dir: i64| -> bool {
        let mut c = [x as i64, y as i64, z as i64];
        c[axis] += dir;
        grid.contains(c[0], c[1], c[2]) && set[grid.index(c[0] as usize, c[1] as usize, c[2] as usize)]
    };

    loop {
        let mut changed = false;
        for &idx in &order {
            if !set[idx] {
                continue;
            }
            let (x, y, z) = grid.coords(idx);
            let mut pair_face = false;
            for axis in 0..3 {
                for sign in [-1i64, 1] {
                    if !side_in(&set, x, y, z, axis, -sign)
                        && side_in(&set, x, y, z, axis, sign)
                        && !side_in(&set, x, y, z, axis, 2 * sign)
                    {
                        pair_face = true;
                    }
                }
            }
            if !pair_face {
                continue;
            }
            if is_simple_point(&set, &grid, idx) {
                set[idx] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(MaskVolume { grid, data: set })
}

/// Pial surface: extracted fissures plus background voxels face-adjacent to
/// GM but not to WM.
pub fn build_pial(gm: &MaskVolume, wm: &MaskVolume, fissures: &MaskVolume) -> Result<MaskVolume> {
    gm.grid.check_same(&wm.grid, "pial inputs")?;
    gm.grid.check_same(&fissures.grid, "pial inputs")?;
    if gm.overlaps(wm) {
        return Err(Error::Data("gm and wm masks overlap".into()));
    }
    let grid = gm.grid;
    let mut pial = fissures.clone();
    for i in 0..grid.len() {
        if gm.data[i] || wm.data[i] {
            continue;
        }
        if gm.any_neighbor_set(i, Connectivity::Six) && !wm.any_neighbor_set(i, Connectivity::Six) {
            pial.data[i] = true;
        }
    }
    Ok(pial)
}

/// Full fissure stage: speed map, march, ridge detection, thinning.
pub struct FissureResult {
    pub speed: ScalarVolume,
    pub distance: GeodesicDistance,
    pub candidates: MaskVolume,
    pub sheet: MaskVolume,
}

pub fn extract_fissures(
    image: &ScalarVolume,
    wm: &MaskVolume,
    gm: &MaskVolume,
    sigma_voxels: f64,
) -> Result<FissureResult> {
    let speed = speed_map(image, sigma_voxels)?;
    let source = wm_gm_boundary(wm, gm)?;
    if source.count() == 0 {
        return Err(Error::Data("no WM voxel touches GM; cannot seed the march".into()));
    }
    let distance = solve_eikonal(&speed, &source, gm)?;
    let candidates = directional_maxima(&distance, gm)?;
    let sheet = thin_to_sheet(&candidates, &distance.dist, gm)?;
    Ok(FissureResult {
        speed,
        distance,
        candidates,
        sheet,
    })
}
