//! Grid geometry: dimensions, physical spacing, linear indexing and neighbor
//! enumeration shared by every volume type.
//!
//! Voxel data is stored x-fastest: `index = x + nx*(y + ny*z)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Face (6), face+edge (18) or full (26) neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Connectivity {
    /// Neighbor offsets for this connectivity, in deterministic scan order.
    pub fn offsets(self) -> Vec<(i64, i64, i64)> {
        let mut out = Vec::new();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::Eighteen => manhattan <= 2,
                        Connectivity::TwentySix => true,
                    };
                    if keep {
                        out.push((dx, dy, dz));
                    }
                }
            }
        }
        out
    }
}

/// Dimensions plus per-axis physical spacing in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: (usize, usize, usize),
    pub spacing: (f64, f64, f64),
}

impl Grid {
    pub fn new(dims: (usize, usize, usize), spacing: (f64, f64, f64)) -> Result<Self> {
        if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
            return Err(Error::Geometry(format!("zero-sized dims {dims:?}")));
        }
        for s in [spacing.0, spacing.1, spacing.2] {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::Geometry(format!("non-positive spacing {spacing:?}")));
            }
        }
        Ok(Grid { dims, spacing })
    }

    pub fn isotropic(dims: (usize, usize, usize), spacing: f64) -> Result<Self> {
        Grid::new(dims, (spacing, spacing, spacing))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.dims.0 && y < self.dims.1 && z < self.dims.2);
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.dims.0;
        let rest = idx / self.dims.0;
        (x, rest % self.dims.1, rest / self.dims.1)
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.dims.0
            && (y as usize) < self.dims.1
            && (z as usize) < self.dims.2
    }

    /// Physical position of a voxel center in mm (origin at voxel (0,0,0)).
    #[inline]
    pub fn position(&self, x: usize, y: usize, z: usize) -> (f64, f64, f64) {
        (
            x as f64 * self.spacing.0,
            y as f64 * self.spacing.1,
            z as f64 * self.spacing.2,
        )
    }

    /// Volume of one voxel in mm^3.
    #[inline]
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.0 * self.spacing.1 * self.spacing.2
    }

    /// Linear indices of in-bounds neighbors of `idx` for the given connectivity.
    pub fn neighbors(&self, idx: usize, conn: Connectivity, out: &mut Vec<usize>) {
        out.clear();
        let (x, y, z) = self.coords(idx);
        for (dx, dy, dz) in conn.offsets() {
            let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
            if self.contains(nx, ny, nz) {
                out.push(self.index(nx as usize, ny as usize, nz as usize));
            }
        }
    }

    /// Spacing-equality is exact on dims and tight on spacing; volumes read back
    /// from f32 headers must still match their in-memory companions.
    pub fn same_geometry(&self, other: &Grid) -> bool {
        if self.dims != other.dims {
            return false;
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0);
        close(self.spacing.0, other.spacing.0)
            && close(self.spacing.1, other.spacing.1)
            && close(self.spacing.2, other.spacing.2)
    }

    pub fn check_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::Geometry(format!(
                "{what}: {:?}@{:?} vs {:?}@{:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip_is_x_fastest() {
        let g = Grid::isotropic((3, 4, 5), 1.0).unwrap();
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 3);
        assert_eq!(g.index(0, 0, 1), 12);
        for idx in 0..g.len() {
            let (x, y, z) = g.coords(idx);
            assert_eq!(g.index(x, y, z), idx);
        }
    }

    #[test]
    fn connectivity_counts() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::Eighteen.offsets().len(), 18);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
    }

    #[test]
    fn rejects_degenerate_geometry() {
        assert!(Grid::new((0, 2, 2), (1.0, 1.0, 1.0)).is_err());
        assert!(Grid::new((2, 2, 2), (0.0, 1.0, 1.0)).is_err());
        assert!(Grid::new((2, 2, 2), (f64::NAN, 1.0, 1.0)).is_err());
    }
}
