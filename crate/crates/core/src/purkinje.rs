//! Mid-layer (Purkinje) sheet detection and completion: a plate-selective
//! Hessian filter seeds the sheet, and the gaps are recovered by multi-level
//! support-normalized smoothing of the WM thickness ratio followed by
//! directional minima of the mismatch map along the streamline field.

use crate::deriv::{eigen_of_field, hessian_field};
use crate::error::{Error, Result};
use crate::extrema::{directional_extrema, ExtremumMode};
use crate::grid::Connectivity;
use crate::laplace::ThicknessBundle;
use crate::morph::drop_small_components;
use crate::smooth::gaussian_smooth_with_mass;
use crate::volume::{MaskVolume, ScalarVolume};
use serde::{Deserialize, Serialize};

/// Planar filter and extrapolation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanarFilterParams {
    /// Filter scale in mm.
    pub scale_mm: f64,
    /// Plate-vs-tube selectivity threshold.
    pub alpha: f64,
    /// Blob suppression threshold.
    pub beta: f64,
    /// Structureness threshold; None picks half the maximum in-mask
    /// structureness of the volume at hand.
    pub c: Option<f64>,
    /// Response threshold for the initial sheet mask.
    pub tau_p: f64,
    /// Mismatch threshold for recovered sheet voxels.
    pub tau_lambda: f64,
    /// Number of smoothing levels in the extrapolation.
    pub levels: usize,
    /// First (broadest) smoothing sigma in voxels.
    pub sigma_hi_voxels: f64,
    /// Last (narrowest) smoothing sigma in voxels.
    pub sigma_lo_voxels: f64,
    /// Minimum voxel count for initial-sheet components.
    pub min_component_voxels: usize,
}

impl Default for PlanarFilterParams {
    fn default() -> Self {
        PlanarFilterParams {
            scale_mm: 0.04,
            alpha: 0.5,
            beta: 0.5,
            c: None,
            tau_p: 0.05,
            tau_lambda: 0.05,
            levels: 10,
            sigma_hi_voxels: 15.0,
            sigma_lo_voxels: 1.0,
            min_component_voxels: 5,
        }
    }
}

/// Response of the plate filter plus the structureness threshold in effect.
#[derive(Debug, Clone)]
pub struct PlanarResponse {
    pub response: ScalarVolume,
    pub c_used: f64,
}

/// Plate-selective filter: per GM voxel, from the Hessian eigenvalues
/// (|l1| <= |l2| <= |l3|) compute
///   P = 0                                              if l2 > 0 or l3 > 0
///   P = exp(-Ra^2/2a^2) exp(-Rb^2/2b^2) (1 - exp(-S^2/2c^2))   otherwise
/// with Ra = |l2|/|l3|, Rb = |l1|/sqrt(|l2 l3|), S the Hessian Frobenius
/// norm. A bright plate gives one strong negative eigenvalue, so Ra stays
/// near zero where tubes score Ra near one.
pub fn planar_response(
    v: &ScalarVolume,
    gm: &MaskVolume,
    params: &PlanarFilterParams,
) -> Result<PlanarResponse> {
    v.grid.check_same(&gm.grid, "planar filter mask")?;
    for (name, val) in [
        ("alpha", params.alpha),
        ("beta", params.beta),
        ("tau_p", params.tau_p),
    ] {
        if !val.is_finite() || val <= 0.0 {
            return Err(Error::Parameter(format!("{name} must be > 0, got {val}")));
        }
    }
    let field = hessian_field(v, params.scale_mm)?;
    let eig = eigen_of_field(&field);
    let c = match params.c {
        Some(c) if c > 0.0 && c.is_finite() => c,
        Some(c) => return Err(Error::Parameter(format!("c must be > 0, got {c}"))),
        None => {
            let max_s = gm
                .indices()
                .map(|i| field.frobenius(i))
                .fold(0.0f64, f64::max);
            if max_s <= 0.0 {
                return Err(Error::Data(
                    "no structureness inside the mask; cannot derive c".into(),
                ));
            }
            0.5 * max_s
        }
    };
    let mut out = ScalarVolume::zeros(v.grid);
    for i in gm.indices() {
        let (l1, l2, l3) = (eig.lambda1[i], eig.lambda2[i], eig.lambda3[i]);
        if l2 > 0.0 || l3 > 0.0 || l3 == 0.0 {
            continue;
        }
        let ra = l2.abs() / l3.abs();
        let prod = (l2 * l3).abs();
        let rb = if prod > 0.0 {
            l1.abs() / prod.sqrt()
        } else {
            0.0
        };
        let s = field.frobenius(i);
        let p = (-(ra * ra) / (2.0 * params.alpha * params.alpha)).exp()
            * (-(rb * rb) / (2.0 * params.beta * params.beta)).exp()
            * (1.0 - (-(s * s) / (2.0 * c * c)).exp());
        out.data[i] = p;
    }
    Ok(PlanarResponse {
        response: out,
        c_used: c,
    })
}

/// Initial sheet mask: threshold the filter response, strip voxels
/// 26-adjacent to WM or to the pial/fissure surface, and drop specks.
/// An empty result is a stage error (the extrapolation needs seeds).
pub fn initial_purkinje(
    p: &PlanarResponse,
    gm: &MaskVolume,
    wm: &MaskVolume,
    pial: &MaskVolume,
    params: &PlanarFilterParams,
) -> Result<MaskVolume> {
    let grid = p.response.grid;
    grid.check_same(&gm.grid, "initial sheet mask")?;
    grid.check_same(&wm.grid, "initial sheet mask")?;
    grid.check_same(&pial.grid, "initial sheet mask")?;
    let forbidden = wm.union(pial)?;
    let mut seed = MaskVolume::empty(grid);
    for i in gm.indices() {
        if p.response.data[i] >= params.tau_p
            && !forbidden.data[i]
            && !forbidden.any_neighbor_set(i, Connectivity::TwentySix)
        {
            seed.data[i] = true;
        }
    }
    let seed = drop_small_components(&seed, Connectivity::TwentySix, params.min_component_voxels);
    if seed.count() == 0 {
        return Err(Error::Data(
            "initial sheet mask is empty (threshold too high or sheet touches a boundary)".into(),
        ));
    }
    Ok(seed)
}

/// The thickness-ratio maps of the extrapolation stage.
#[derive(Debug, Clone)]
pub struct RatioMaps {
    /// R_WM = D_WM / T_GM on GM where T_GM > 0.
    pub r_wm: ScalarVolume,
    /// Seeded ratio R_P = R_WM restricted to the initial sheet.
    pub r_p: ScalarVolume,
    /// Extrapolated ratio after the smoothing levels.
    pub r_p_s: ScalarVolume,
    /// Mismatch lambda = |R_P_S - R_WM| where both are defined.
    pub lambda: ScalarVolume,
    /// Voxels where R_P_S (and hence lambda) is defined.
    pub covered: MaskVolume,
}

/// Result of the extrapolation: the ratio maps, the completed sheet, and the
/// covered-voxel count after each smoothing level (monotone by construction).
#[derive(Debug, Clone)]
pub struct Extrapolation {
    pub maps: RatioMaps,
    pub m_pf: MaskVolume,
    pub recovered: MaskVolume,
    pub known_counts: Vec<usize>,
}

/// Complete the sheet: smooth the seeded ratio map over its growing support
/// with exponentially shrinking kernels (sigma_hi down to sigma_lo over
/// `levels`), writing only previously unassigned voxels, then keep
/// directional minima of the mismatch along the streamline field that fall
/// below tau_lambda.
pub fn extrapolate_purkinje(
    m_p0: &MaskVolume,
    bundle: &ThicknessBundle,
    gm: &MaskVolume,
    params: &PlanarFilterParams,
) -> Result<Extrapolation> {
    let grid = gm.grid;
    grid.check_same(&m_p0.grid, "extrapolation seed")?;
    grid.check_same(&bundle.t_gm.grid, "extrapolation bundle")?;
    if m_p0.count() == 0 {
        return Err(Error::Data("initial sheet mask is empty".into()));
    }
    if params.levels == 0 {
        return Err(Error::Parameter("need at least one smoothing level".into()));
    }

    // R_WM is defined on GM voxels with a usable thickness value
    let mut r_wm = ScalarVolume::zeros(grid);
    let mut eligible = MaskVolume::empty(grid);
    for i in gm.indices() {
        let t = bundle.t_gm.data[i];
        if t > 1e-12 && t.is_finite() {
            r_wm.data[i] = bundle.d_wm.data[i] / t;
            eligible.data[i] = true;
        }
    }
    for i in m_p0.indices() {
        if !eligible.data[i] {
            return Err(Error::Data(format!(
                "seed voxel {i} has no defined thickness ratio"
            )));
        }
    }

    let mut r_p = ScalarVolume::zeros(grid);
    for i in m_p0.indices() {
        r_p.data[i] = r_wm.data[i];
    }

    let mut known = m_p0.clone();
    let mut r_p_s = r_p.clone();
    let mut known_counts = vec![known.count()];
    let levels = params.levels;
    for level in 0..levels {
        let sigma = if levels == 1 {
            params.sigma_hi_voxels
        } else {
            let frac = level as f64 / (levels - 1) as f64;
            params.sigma_hi_voxels
                * (params.sigma_lo_voxels / params.sigma_hi_voxels).powf(frac)
        };
        let (smoothed, mass) = gaussian_smooth_with_mass(&r_p_s, &known, sigma)?;
        let mut grew = Vec::new();
        for i in eligible.indices() {
            if !known.data[i] && mass.data[i] > 1e-6 {
                grew.push(i);
            }
        }
        for &i in &grew {
            r_p_s.data[i] = smoothed.data[i];
            known.data[i] = true;
        }
        known_counts.push(known.count());
    }

    // mismatch map; exactly zero on the seeds since their values were never
    // rewritten
    let mut lambda = ScalarVolume::filled(grid, f64::INFINITY);
    for i in known.indices() {
        lambda.data[i] = (r_p_s.data[i] - r_wm.data[i]).abs();
    }

    let mut candidates = MaskVolume::empty(grid);
    for i in known.indices() {
        if !m_p0.data[i] && lambda.data[i] < params.tau_lambda {
            candidates.data[i] = true;
        }
    }
    let recovered = directional_extrema(
        &lambda,
        &known,
        &candidates,
        &bundle.vhat,
        ExtremumMode::Minimum,
    );
    let m_pf = m_p0.union(&recovered)?;
    Ok(Extrapolation {
        maps: RatioMaps {
            r_wm,
            r_p,
            r_p_s,
            lambda,
            covered: known,
        },
        m_pf,
        recovered,
        known_counts,
    })
}

/// Per-voxel sublayer thickness rows sampled at the completed sheet:
/// (x, y, z, T_Gran, T_Mol, T_GM); T_Gran + T_Mol = T_GM exactly.
pub fn sublayer_thickness(
    m_pf: &MaskVolume,
    bundle: &ThicknessBundle,
    gm: &MaskVolume,
) -> Result<Vec<(usize, usize, usize, f64, f64, f64)>> {
    m_pf.grid.check_same(&bundle.t_gm.grid, "sublayer bundle")?;
    let mut rows = Vec::with_capacity(m_pf.count());
    for i in m_pf.indices() {
        if !gm.data[i] {
            let (x, y, z) = m_pf.grid.coords(i);
            return Err(Error::Data(format!(
                "sheet voxel ({x},{y},{z}) lies outside GM"
            )));
        }
        let (x, y, z) = m_pf.grid.coords(i);
        let t_gran = bundle.d_wm.data[i];
        let t_mol = bundle.d_pial.data[i];
        rows.push((x, y, z, t_gran, t_mol, t_gran + t_mol));
    }
    Ok(rows)
}
