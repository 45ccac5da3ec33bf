//! folia-core: voxel-grid numerics for laminar (sub)layer thickness estimation.
//!
//! The library covers the full measurement chain on segmented 3-D volumes:
//! intensity standardization, EM tissue segmentation with spatial priors,
//! geodesic fissure extraction, Laplace/Eulerian thickness PDEs, mid-layer
//! (Purkinje-style) sheet detection and completion, region statistics with
//! FDR control, and analytic phantoms to validate all of it.

pub mod deriv;
pub mod eikonal;
pub mod extrema;
pub mod fissure;
pub mod nifti;
pub mod phantom;
pub mod segment;
pub mod purkinje;
pub mod report;
pub mod standardize;
pub mod stats;
pub mod error;
pub mod grid;
pub mod interp;
pub mod laplace;
pub mod morph;
pub mod smooth;
pub mod volume;

pub use error::{Error, Result};
pub use grid::{Connectivity, Grid};
pub use volume::{LabelVolume, MaskVolume, ScalarVolume, VectorField};
