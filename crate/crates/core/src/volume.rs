//! Volume containers: scalar fields, binary masks, integer label maps and
//! per-voxel 3-vectors, all sharing the same x-fastest grid layout.

use crate::error::{Error, Result};
use crate::grid::{Connectivity, Grid};

/// 3-D grid of real values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl ScalarVolume {
    pub fn filled(grid: Grid, value: f64) -> Self {
        ScalarVolume {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::filled(grid, 0.0)
    }

    pub fn from_data(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Geometry(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                grid.dims
            )));
        }
        Ok(ScalarVolume { grid, data })
    }

    /// Build a volume from a function of voxel coordinates.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for z in 0..grid.dims.2 {
            for y in 0..grid.dims.1 {
                for x in 0..grid.dims.0 {
                    data.push(f(x, y, z));
                }
            }
        }
        ScalarVolume { grid, data }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.grid.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.grid.index(x, y, z);
        self.data[i] = v;
    }

    /// Values at the set voxels of `mask`.
    pub fn masked_values(&self, mask: &MaskVolume) -> Vec<f64> {
        self.data
            .iter()
            .zip(mask.data.iter())
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect()
    }
}

/// 3-D binary membership mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVolume {
    pub grid: Grid,
    pub data: Vec<bool>,
}

impl MaskVolume {
    pub fn empty(grid: Grid) -> Self {
        MaskVolume {
            grid,
            data: vec![false; grid.len()],
        }
    }

    pub fn full(grid: Grid) -> Self {
        MaskVolume {
            grid,
            data: vec![true; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for z in 0..grid.dims.2 {
            for y in 0..grid.dims.1 {
                for x in 0..grid.dims.0 {
                    data.push(f(x, y, z));
                }
            }
        }
        MaskVolume { grid, data }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.grid.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.grid.index(x, y, z);
        self.data[i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn union(&self, other: &MaskVolume) -> Result<MaskVolume> {
        self.grid.check_same(&other.grid, "mask union")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a || b)
            .collect();
        Ok(MaskVolume {
            grid: self.grid,
            data,
        })
    }

    pub fn intersect(&self, other: &MaskVolume) -> Result<MaskVolume> {
        self.grid.check_same(&other.grid, "mask intersection")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a && b)
            .collect();
        Ok(MaskVolume {
            grid: self.grid,
            data,
        })
    }

    pub fn minus(&self, other: &MaskVolume) -> Result<MaskVolume> {
        self.grid.check_same(&other.grid, "mask difference")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a && !b)
            .collect();
        Ok(MaskVolume {
            grid: self.grid,
            data,
        })
    }

    pub fn complement(&self) -> MaskVolume {
        MaskVolume {
            grid: self.grid,
            data: self.data.iter().map(|&b| !b).collect(),
        }
    }

    pub fn overlaps(&self, other: &MaskVolume) -> bool {
        self.data.iter().zip(&other.data).any(|(&a, &b)| a && b)
    }

    /// True if any neighbor of linear index `idx` (given connectivity) is set.
    pub fn any_neighbor_set(&self, idx: usize, conn: Connectivity) -> bool {
        let (x, y, z) = self.grid.coords(idx);
        for (dx, dy, dz) in conn.offsets() {
            let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
            if self.grid.contains(nx, ny, nz)
                && self.data[self.grid.index(nx as usize, ny as usize, nz as usize)]
            {
                return true;
            }
        }
        false
    }
}

/// 3-D grid of small-integer region labels; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub grid: Grid,
    pub data: Vec<u32>,
}

impl LabelVolume {
    pub fn zeros(grid: Grid) -> Self {
        LabelVolume {
            grid,
            data: vec![0; grid.len()],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> u32 {
        self.data[self.grid.index(x, y, z)]
    }

    pub fn labels(&self) -> Vec<u32> {
        let mut ls: Vec<u32> = self.data.iter().copied().filter(|&l| l != 0).collect();
        ls.sort_unstable();
        ls.dedup();
        ls
    }
}

/// 3-D grid of 3-vectors. Inside its support every vector is unit-norm;
/// outside it is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub data: Vec<[f64; 3]>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField {
            grid,
            data: vec![[0.0; 3]; grid.len()],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        self.data[self.grid.index(x, y, z)]
    }

    pub fn component(&self, axis: usize) -> ScalarVolume {
        ScalarVolume {
            grid: self.grid,
            data: self.data.iter().map(|v| v[axis]).collect(),
        }
    }

    pub fn from_components(x: &ScalarVolume, y: &ScalarVolume, z: &ScalarVolume) -> Result<Self> {
        x.grid.check_same(&y.grid, "vector components")?;
        x.grid.check_same(&z.grid, "vector components")?;
        let data = (0..x.data.len())
            .map(|i| [x.data[i], y.data[i], z.data[i]])
            .collect();
        Ok(VectorField { grid: x.grid, data })
    }
}
