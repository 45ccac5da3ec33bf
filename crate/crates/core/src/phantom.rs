//! Synthetic phantoms with analytically known geometry: a flat slab, a
//! spherical shell, and a folded two-lobe sheet with a sub-voxel fissure.
//! Truth masks and thickness values come from the analytic interfaces, never
//! from the rendered image.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::smooth::gaussian_smooth;
use crate::volume::{LabelVolume, MaskVolume, ScalarVolume};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    Slab,
    SphericalShell,
    FoldedSheet,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TissueIntensities {
    pub background: f64,
    pub wm: f64,
    pub granular: f64,
    pub purkinje: f64,
    pub molecular: f64,
}

impl Default for TissueIntensities {
    fn default() -> Self {
        TissueIntensities {
            background: 10.0,
            wm: 90.0,
            granular: 40.0,
            purkinje: 70.0,
            molecular: 55.0,
        }
    }
}

fn default_spacing() -> (f64, f64, f64) {
    (1.0, 1.0, 1.0)
}
fn default_depth() -> f64 {
    0.4
}
fn default_noise() -> f64 {
    1.0
}
fn default_blur() -> f64 {
    0.4
}
fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub dims: (usize, usize, usize),
    #[serde(default = "default_spacing")]
    pub spacing: (f64, f64, f64),
    /// GM band thickness (shell: r2 - r1).
    pub cortex_thickness_mm: f64,
    /// Fractional depth of the mid layer inside the GM band, in (0, 1).
    #[serde(default = "default_depth")]
    pub mid_layer_depth: f64,
    /// Shell only: inner (WM) radius in mm.
    #[serde(default)]
    pub inner_radius_mm: Option<f64>,
    /// Folded sheet only: pial fold amplitude in mm.
    #[serde(default)]
    pub fold_amplitude_mm: f64,
    /// Folded sheet only: pial fold wavelength in mm.
    #[serde(default)]
    pub fold_wavelength_mm: f64,
    /// Folded sheet only: analytic fissure gap (sub-voxel) in mm.
    #[serde(default)]
    pub fissure_gap_mm: f64,
    #[serde(default)]
    pub intensities: TissueIntensities,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default = "default_blur")]
    pub pv_blur_sigma_voxels: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Everything the pipeline can be checked against.
#[derive(Debug, Clone)]
pub struct PhantomTruth {
    pub wm: MaskVolume,
    pub gm: MaskVolume,
    pub mid_layer: MaskVolume,
    pub fissures: MaskVolume,
    /// Analytic T_GM per GM voxel (constant for slab/shell).
    pub t_gm: ScalarVolume,
    /// Octant parcellation, a convenience for region statistics.
    pub parcellation: LabelVolume,
    /// Voxel-count TIV (WM + GM) and its analytic counterpart.
    pub tiv_mm3: f64,
    pub analytic_tiv_mm3: f64,
    /// GM band thickness actually realized (clamped to fit the grid).
    pub cortex_thickness_mm: f64,
    /// Analytic distance from the WM interface to the mid layer.
    pub t_gran_mm: f64,
    pub t_mol_mm: f64,
    /// Shell only: radius of the mid-layer sphere.
    pub mid_layer_radius_mm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: ScalarVolume,
    pub truth: PhantomTruth,
}

#[derive(Clone, Copy, PartialEq)]
enum Tissue {
    Background,
    Wm,
    Granular,
    Molecular,
}

fn octants(grid: Grid) -> LabelVolume {
    let (nx, ny, nz) = grid.dims;
    let mut parc = LabelVolume::zeros(grid);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let label = 1
                    + (x >= nx / 2) as u32
                    + 2 * (y >= ny / 2) as u32
                    + 4 * (z >= nz / 2) as u32;
                parc.data[grid.index(x, y, z)] = label;
            }
        }
    }
    parc
}

fn render(
    spec: &PhantomSpec,
    grid: Grid,
    tissue_of: impl Fn(usize, usize, usize) -> Tissue,
    mid_layer: &MaskVolume,
    fissure_weight: impl Fn(usize, usize, usize) -> f64,
) -> Result<ScalarVolume> {
    let ints = spec.intensities;
    let mut image = ScalarVolume::from_fn(grid, |x, y, z| {
        let base = if mid_layer.at(x, y, z) {
            ints.purkinje
        } else {
            match tissue_of(x, y, z) {
                Tissue::Background => ints.background,
                Tissue::Wm => ints.wm,
                Tissue::Granular => ints.granular,
                Tissue::Molecular => ints.molecular,
            }
        };
        let w = fissure_weight(x, y, z).clamp(0.0, 1.0);
        base * (1.0 - w) + ints.background * w
    });
    if spec.pv_blur_sigma_voxels > 0.0 {
        image = gaussian_smooth(&image, spec.pv_blur_sigma_voxels, None)?;
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noise = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::Spec(format!("bad noise sigma: {e}")))?;
        for v in image.data.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    Ok(image)
}

/// Generate the phantom described by `spec`.
pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    let grid = Grid::new(spec.dims, spec.spacing)?;
    if !(spec.mid_layer_depth > 0.0 && spec.mid_layer_depth < 1.0) {
        return Err(Error::Spec(format!(
            "mid layer depth must be strictly inside (0,1), got {}",
            spec.mid_layer_depth
        )));
    }
    if !(spec.cortex_thickness_mm > 0.0) {
        return Err(Error::Spec("cortex thickness must be > 0".into()));
    }
    match spec.kind {
        PhantomKind::Slab => generate_slab(spec, grid),
        PhantomKind::SphericalShell => generate_shell(spec, grid),
        PhantomKind::FoldedSheet => generate_folded(spec, grid),
    }
}

fn generate_slab(spec: &PhantomSpec, grid: Grid) -> Result<Phantom> {
    let (_, _, nz) = grid.dims;
    let sz = grid.spacing.2;
    let lz = nz as f64 * sz;
    if spec.cortex_thickness_mm > lz {
        return Err(Error::Spec(format!(
            "cortex {} mm does not fit the {} mm z extent",
            spec.cortex_thickness_mm, lz
        )));
    }
    // GM layers [n_lo, n_hi); at least one WM and one background layer
    let n_gm_req = (spec.cortex_thickness_mm / sz).round() as usize;
    let n_lo = ((nz - n_gm_req.min(nz)) / 2).max(1);
    let n_hi = (n_lo + n_gm_req).min(nz - 1);
    if n_hi <= n_lo {
        return Err(Error::Spec(format!(
            "no room for a GM band: dims z = {nz}, cortex {} mm at {} mm spacing",
            spec.cortex_thickness_mm, sz
        )));
    }
    if n_hi - n_lo < n_gm_req {
        log::warn!(
            "slab phantom: cortex clamped from {} to {} layers to keep margins",
            n_gm_req,
            n_hi - n_lo
        );
    }
    // interfaces sit on voxel boundaries
    let wm_top = (n_lo as f64 - 0.5) * sz;
    let pial = (n_hi as f64 - 0.5) * sz;
    let t_actual = pial - wm_top;
    let z_mid = wm_top + spec.mid_layer_depth * t_actual;

    let tissue_of = move |_x: usize, _y: usize, z: usize| -> Tissue {
        let zc = z as f64 * sz;
        if zc < wm_top {
            Tissue::Wm
        } else if zc < z_mid {
            Tissue::Granular
        } else if zc < pial {
            Tissue::Molecular
        } else {
            Tissue::Background
        }
    };
    let wm = MaskVolume::from_fn(grid, |x, y, z| tissue_of(x, y, z) == Tissue::Wm);
    let gm = MaskVolume::from_fn(grid, |x, y, z| {
        matches!(tissue_of(x, y, z), Tissue::Granular | Tissue::Molecular)
    });
    let mid_layer = MaskVolume::from_fn(grid, |_, _, z| (z as f64 * sz - z_mid).abs() < 0.5 * sz);
    let fissures = MaskVolume::empty(grid);
    let t_gm = ScalarVolume {
        grid,
        data: gm.data.iter().map(|&g| if g { t_actual } else { 0.0 }).collect(),
    };
    let image = render(spec, grid, tissue_of, &mid_layer, |_, _, _| 0.0)?;
    let tiv = (wm.count() + gm.count()) as f64 * grid.voxel_volume();
    let lx = grid.dims.0 as f64 * grid.spacing.0;
    let ly = grid.dims.1 as f64 * grid.spacing.1;
    let analytic_tiv = lx * ly * (pial + 0.5 * sz);
    Ok(Phantom {
        image,
        truth: PhantomTruth {
            wm,
            gm,
            mid_layer,
            fissures,
            t_gm,
            parcellation: octants(grid),
            tiv_mm3: tiv,
            analytic_tiv_mm3: analytic_tiv,
            cortex_thickness_mm: t_actual,
            t_gran_mm: spec.mid_layer_depth * t_actual,
            t_mol_mm: (1.0 - spec.mid_layer_depth) * t_actual,
            mid_layer_radius_mm: None,
        },
    })
}

fn generate_shell(spec: &PhantomSpec, grid: Grid) -> Result<Phantom> {
    let r1 = spec
        .inner_radius_mm
        .ok_or_else(|| Error::Spec("spherical_shell needs inner_radius_mm".into()))?;
    if r1 <= 0.0 {
        return Err(Error::Spec(format!("inner radius must be > 0, got {r1}")));
    }
    let r2 = r1 + spec.cortex_thickness_mm;
    let half = [
        (grid.dims.0 as f64 - 1.0) / 2.0 * grid.spacing.0,
        (grid.dims.1 as f64 - 1.0) / 2.0 * grid.spacing.1,
        (grid.dims.2 as f64 - 1.0) / 2.0 * grid.spacing.2,
    ];
    let max_half = half.iter().cloned().fold(f64::INFINITY, f64::min);
    let margin = 2.0 * grid.spacing.0.max(grid.spacing.1).max(grid.spacing.2);
    if r2 + margin > max_half {
        return Err(Error::Spec(format!(
            "outer radius {r2} mm plus margin exceeds the half extent {max_half} mm"
        )));
    }
    let c = half;
    let (sx, sy, sz) = grid.spacing;
    let r_of = move |x: usize, y: usize, z: usize| -> f64 {
        let dx = x as f64 * sx - c[0];
        let dy = y as f64 * sy - c[1];
        let dz = z as f64 * sz - c[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    };
    let r_mid = r1 + spec.mid_layer_depth * (r2 - r1);
    let tissue_of = move |x: usize, y: usize, z: usize| -> Tissue {
        let r = r_of(x, y, z);
        if r < r1 {
            Tissue::Wm
        } else if r < r_mid {
            Tissue::Granular
        } else if r < r2 {
            Tissue::Molecular
        } else {
            Tissue::Background
        }
    };
    let wm = MaskVolume::from_fn(grid, |x, y, z| tissue_of(x, y, z) == Tissue::Wm);
    let gm = MaskVolume::from_fn(grid, |x, y, z| {
        matches!(tissue_of(x, y, z), Tissue::Granular | Tissue::Molecular)
    });
    let mid_layer = MaskVolume::from_fn(grid, |x, y, z| {
        let r = r_of(x, y, z);
        if r < 1e-9 {
            return false;
        }
        let dx = (x as f64 * sx - c[0]) / r;
        let dy = (y as f64 * sy - c[1]) / r;
        let dz = (z as f64 * sz - c[2]) / r;
        let extent = dx.abs() * sx + dy.abs() * sy + dz.abs() * sz;
        (r - r_mid).abs() < 0.5 * extent
    });
    let fissures = MaskVolume::empty(grid);
    let t_gm = ScalarVolume {
        grid,
        data: gm
            .data
            .iter()
            .map(|&g| if g { r2 - r1 } else { 0.0 })
            .collect(),
    };
    let image = render(spec, grid, tissue_of, &mid_layer, |_, _, _| 0.0)?;
    let tiv = (wm.count() + gm.count()) as f64 * grid.voxel_volume();
    let analytic_tiv = 4.0 / 3.0 * std::f64::consts::PI * r2.powi(3);
    Ok(Phantom {
        image,
        truth: PhantomTruth {
            wm,
            gm,
            mid_layer,
            fissures,
            t_gm,
            parcellation: octants(grid),
            tiv_mm3: tiv,
            analytic_tiv_mm3: analytic_tiv,
            cortex_thickness_mm: r2 - r1,
            t_gran_mm: spec.mid_layer_depth * (r2 - r1),
            t_mol_mm: (1.0 - spec.mid_layer_depth) * (r2 - r1),
            mid_layer_radius_mm: Some(r_mid),
        },
    })
}

fn generate_folded(spec: &PhantomSpec, grid: Grid) -> Result<Phantom> {
    let (nx, _, nz) = grid.dims;
    let (sx, _, sz) = grid.spacing;
    let lz = nz as f64 * sz;
    let amp = spec.fold_amplitude_mm;
    let wavelength = spec.fold_wavelength_mm;
    if amp < 0.0 || wavelength <= 0.0 {
        return Err(Error::Spec(
            "folded_sheet needs fold_amplitude_mm >= 0 and fold_wavelength_mm > 0".into(),
        ));
    }
    if spec.cortex_thickness_mm + 2.0 * amp + 2.0 * sz > lz {
        return Err(Error::Spec(format!(
            "cortex {} mm + fold amplitude {amp} mm does not fit the {lz} mm z extent",
            spec.cortex_thickness_mm
        )));
    }
    // both interfaces displaced by the same sinusoid: a parallel folded band
    // of constant thickness, folia-like when the flanks are steep
    let margin = ((lz - spec.cortex_thickness_mm - 2.0 * amp) / 2.0).max(sz);
    let wm_base = margin + amp;
    let two_pi = 2.0 * std::f64::consts::PI;
    let wm_top_of = move |xc: f64| wm_base + amp * (two_pi * xc / wavelength).cos();
    let pial_of = move |xc: f64| wm_top_of(xc) + spec.cortex_thickness_mm;
    let tissue_of = move |x: usize, _y: usize, z: usize| -> Tissue {
        let xc = x as f64 * sx;
        let zc = z as f64 * sz;
        let wm_top = wm_top_of(xc);
        let z_mid = wm_top + spec.mid_layer_depth * spec.cortex_thickness_mm;
        if zc < wm_top {
            Tissue::Wm
        } else if zc < z_mid {
            Tissue::Granular
        } else if zc < pial_of(xc) {
            Tissue::Molecular
        } else {
            Tissue::Background
        }
    };
    // fissure planes at the fold valleys, spanning the GM band between lobes
    let lx = nx as f64 * sx;
    let mut valleys = Vec::new();
    let mut k = 0;
    loop {
        let xv = wavelength / 2.0 + k as f64 * wavelength;
        if xv >= lx {
            break;
        }
        valleys.push(xv);
        k += 1;
    }
    if valleys.is_empty() {
        return Err(Error::Spec(
            "fold wavelength leaves no fissure valley inside the volume".into(),
        ));
    }
    let gap = if spec.fissure_gap_mm > 0.0 {
        spec.fissure_gap_mm
    } else {
        0.5 * sx
    };
    // fissures reach down to a fraction of the band, not to the WM: the
    // crease between folia stays clear of the deep white matter
    let clearance = (0.3 * spec.cortex_thickness_mm).max(2.0 * sz);
    let valleys_for_mask = valleys.clone();
    let fissures = MaskVolume::from_fn(grid, |x, _, z| {
        let xc = x as f64 * sx;
        let zc = z as f64 * sz;
        valleys_for_mask.iter().any(|&xv| {
            (xc - xv).abs() < 0.5 * sx && zc >= wm_top_of(xv) + clearance && zc < pial_of(xv)
        })
    });
    let valleys_for_pv = valleys.clone();
    let fissure_weight = move |x: usize, _y: usize, z: usize| -> f64 {
        let xc = x as f64 * sx;
        let zc = z as f64 * sz;
        valleys_for_pv
            .iter()
            .map(|&xv| {
                if zc >= wm_top_of(xv) + clearance && zc < pial_of(xv) {
                    ((gap / 2.0 + sx / 2.0 - (xc - xv).abs()) / sx).clamp(0.0, gap / sx)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    };
    let wm = MaskVolume::from_fn(grid, |x, y, z| tissue_of(x, y, z) == Tissue::Wm);
    let gm = MaskVolume::from_fn(grid, |x, y, z| {
        matches!(tissue_of(x, y, z), Tissue::Granular | Tissue::Molecular)
    });
    let mid_layer = MaskVolume::from_fn(grid, |x, _, z| {
        let xc = x as f64 * sx;
        let zc = z as f64 * sz;
        let z_mid = wm_top_of(xc) + spec.mid_layer_depth * spec.cortex_thickness_mm;
        // local mid-sheet normal tilts with the fold slope
        let slope = -amp * two_pi / wavelength * (two_pi * xc / wavelength).sin();
        let norm = (1.0 + slope * slope).sqrt();
        let (nx_, nz_) = (-slope / norm, 1.0 / norm);
        let extent = nx_.abs() * sx + nz_.abs() * sz;
        // normal distance to the tilted sheet through (xc, z_mid)
        let d = (zc - z_mid) * nz_;
        d.abs() < 0.5 * extent && zc >= wm_top_of(xc) && zc < pial_of(xc)
    });
    let t_gm = ScalarVolume::from_fn(grid, |x, y, z| {
        if gm.at(x, y, z) {
            spec.cortex_thickness_mm
        } else {
            0.0
        }
    });
    let image = render(spec, grid, tissue_of, &mid_layer, fissure_weight)?;
    let tiv = (wm.count() + gm.count()) as f64 * grid.voxel_volume();
    // integrate the pial height per column for the analytic volume
    let ly = grid.dims.1 as f64 * grid.spacing.1;
    let analytic_tiv: f64 = (0..nx)
        .map(|x| (pial_of(x as f64 * sx) + 0.5 * sz) * sx * ly)
        .sum();
    let t_mean = spec.cortex_thickness_mm;
    Ok(Phantom {
        image,
        truth: PhantomTruth {
            wm,
            gm,
            mid_layer,
            fissures,
            t_gm,
            parcellation: octants(grid),
            tiv_mm3: tiv,
            analytic_tiv_mm3: analytic_tiv,
            cortex_thickness_mm: t_mean,
            t_gran_mm: spec.mid_layer_depth * t_mean,
            t_mol_mm: (1.0 - spec.mid_layer_depth) * t_mean,
            mid_layer_radius_mm: None,
        },
    })
}
