//! Binary morphology and connected-component labeling on masks.

use crate::error::Result;
use crate::grid::Connectivity;
use crate::volume::{LabelVolume, MaskVolume};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
}

/// Binary erosion/dilation with the structuring element given by
/// `connectivity` (plus center). Voxels outside the grid count as background.
/// With `condition`, changes apply only at voxels inside the condition mask.
pub fn morphology(
    m: &MaskVolume,
    op: MorphOp,
    connectivity: Connectivity,
    condition: Option<&MaskVolume>,
) -> Result<MaskVolume> {
    if let Some(c) = condition {
        m.grid.check_same(&c.grid, "morphology condition")?;
    }
    let grid = m.grid;
    let offsets = connectivity.offsets();
    let mut out = m.clone();
    for z in 0..grid.dims.2 {
        for y in 0..grid.dims.1 {
            for x in 0..grid.dims.0 {
                let idx = grid.index(x, y, z);
                if let Some(c) = condition {
                    if !c.data[idx] {
                        continue;
                    }
                }
                let new = match op {
                    MorphOp::Erode => {
                        m.data[idx]
                            && offsets.iter().all(|&(dx, dy, dz)| {
                                let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                                grid.contains(nx, ny, nz)
                                    && m.data[grid.index(nx as usize, ny as usize, nz as usize)]
                            })
                    }
                    MorphOp::Dilate => {
                        m.data[idx]
                            || offsets.iter().any(|&(dx, dy, dz)| {
                                let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                                grid.contains(nx, ny, nz)
                                    && m.data[grid.index(nx as usize, ny as usize, nz as usize)]
                            })
                    }
                };
                out.data[idx] = new;
            }
        }
    }
    Ok(out)
}

/// Deterministic connected-component labeling: labels 1..=k assigned in
/// ascending first-voxel scan order. Returns the label map and per-label sizes
/// (`sizes[l-1]` is the voxel count of label `l`).
pub fn connected_components(m: &MaskVolume, connectivity: Connectivity) -> (LabelVolume, Vec<usize>) {
    let grid = m.grid;
    let mut labels = LabelVolume::zeros(grid);
    let mut sizes = Vec::new();
    let offsets = connectivity.offsets();
    let mut queue = VecDeque::new();
    let mut next_label = 0u32;
    for start in 0..grid.len() {
        if !m.data[start] || labels.data[start] != 0 {
            continue;
        }
        next_label += 1;
        let mut size = 0usize;
        labels.data[start] = next_label;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (x, y, z) = grid.coords(idx);
            for &(dx, dy, dz) in &offsets {
                let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                if grid.contains(nx, ny, nz) {
                    let nidx = grid.index(nx as usize, ny as usize, nz as usize);
                    if m.data[nidx] && labels.data[nidx] == 0 {
                        labels.data[nidx] = next_label;
                        queue.push_back(nidx);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keep only components with at least `min_voxels` voxels.
pub fn drop_small_components(
    m: &MaskVolume,
    connectivity: Connectivity,
    min_voxels: usize,
) -> MaskVolume {
    let (labels, sizes) = connected_components(m, connectivity);
    let mut out = MaskVolume::empty(m.grid);
    for i in 0..m.grid.len() {
        let l = labels.data[i];
        if l != 0 && sizes[(l - 1) as usize] >= min_voxels {
            out.data[i] = true;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn cube(grid: Grid, lo: usize, hi: usize) -> MaskVolume {
        MaskVolume::from_fn(grid, |x, y, z| {
            (lo..hi).contains(&x) && (lo..hi).contains(&y) && (lo..hi).contains(&z)
        })
    }

    #[test]
    fn opening_never_grows() {
        let g = Grid::isotropic((13, 13, 13), 1.0).unwrap();
        let m = cube(g, 2, 11);
        let eroded = morphology(&m, MorphOp::Erode, Connectivity::Six, None).unwrap();
        let opened = morphology(&eroded, MorphOp::Dilate, Connectivity::Six, None).unwrap();
        assert!(opened.count() <= m.count());
        // opening of a big solid cube with the 6-SE recovers everything but
        // nothing outside
        for i in 0..g.len() {
            assert!(!opened.data[i] || m.data[i]);
        }
    }

    #[test]
    fn erode_isolated_voxel_to_empty() {
        let g = Grid::isotropic((5, 5, 5), 1.0).unwrap();
        let mut m = MaskVolume::empty(g);
        m.set(2, 2, 2, true);
        let eroded = morphology(&m, MorphOp::Erode, Connectivity::Six, None).unwrap();
        assert_eq!(eroded.count(), 0);
    }

    #[test]
    fn conditional_with_empty_condition_is_identity() {
        let g = Grid::isotropic((7, 7, 7), 1.0).unwrap();
        let m = cube(g, 1, 6);
        let cond = MaskVolume::empty(g);
        let out = morphology(&m, MorphOp::Erode, Connectivity::TwentySix, Some(&cond)).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn erode_dilate_duality_under_complement() {
        // on a padded grid (foreground away from faces), !erode(m) == dilate(!m)
        let g = Grid::isotropic((11, 11, 11), 1.0).unwrap();
        let m = MaskVolume::from_fn(g, |x, y, z| {
            (3..8).contains(&x) && (3..8).contains(&y) && ((x + y + z) % 3 != 0) && (3..8).contains(&z)
        });
        for conn in [Connectivity::Six, Connectivity::TwentySix] {
            let eroded = morphology(&m, MorphOp::Erode, conn, None).unwrap();
            let dual = morphology(&m.complement(), MorphOp::Dilate, conn, None).unwrap();
            for z in 1..10 {
                for y in 1..10 {
                    for x in 1..10 {
                        assert_eq!(
                            !eroded.at(x, y, z),
                            dual.at(x, y, z),
                            "duality broken at ({x},{y},{z}) conn {conn:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn geometry_mismatch_rejected() {
        let g = Grid::isotropic((4, 4, 4), 1.0).unwrap();
        let g2 = Grid::isotropic((4, 4, 5), 1.0).unwrap();
        let m = MaskVolume::empty(g);
        let c = MaskVolume::empty(g2);
        assert!(morphology(&m, MorphOp::Erode, Connectivity::Six, Some(&c)).is_err());
    }

    #[test]
    fn two_disjoint_cubes() {
        let g = Grid::isotropic((12, 6, 6), 1.0).unwrap();
        let m = MaskVolume::from_fn(g, |x, y, z| {
            let in_a = x < 3 && y < 3 && z < 3;
            let in_b = (8..11).contains(&x) && y < 3 && z < 3;
            in_a || in_b
        });
        let (_, sizes) = connected_components(&m, Connectivity::TwentySix);
        assert_eq!(sizes, vec![27, 27]);
    }

    #[test]
    fn empty_mask_has_zero_components() {
        let g = Grid::isotropic((4, 4, 4), 1.0).unwrap();
        let (labels, sizes) = connected_components(&MaskVolume::empty(g), Connectivity::Six);
        assert!(sizes.is_empty());
        assert!(labels.data.iter().all(|&l| l == 0));
    }

    #[test]
    fn touching_cubes_by_connectivity() {
        let g = Grid::isotropic((8, 8, 8), 1.0).unwrap();
        // face-touching: 6-connectivity joins them
        let face = MaskVolume::from_fn(g, |x, y, z| {
            (x < 2 || (2..4).contains(&x)) && y < 2 && z < 2
        });
        let (_, s) = connected_components(&face, Connectivity::Six);
        assert_eq!(s.len(), 1);
        // corner-touching: disjoint under 6, joined under 26
        let corner = MaskVolume::from_fn(g, |x, y, z| {
            (x < 2 && y < 2 && z < 2) || ((2..4).contains(&x) && (2..4).contains(&y) && (2..4).contains(&z))
        });
        let (_, s6) = connected_components(&corner, Connectivity::Six);
        assert_eq!(s6.len(), 2);
        let (_, s26) = connected_components(&corner, Connectivity::TwentySix);
        assert_eq!(s26.len(), 1);
    }

    #[test]
    fn sizes_sum_to_mask_count() {
        let g = Grid::isotropic((9, 9, 9), 1.0).unwrap();
        let m = MaskVolume::from_fn(g, |x, y, z| (x * 5 + y * 3 + z * 7) % 4 == 0);
        let (_, sizes) = connected_components(&m, Connectivity::Six);
        assert_eq!(sizes.iter().sum::<usize>(), m.count());
    }
}
