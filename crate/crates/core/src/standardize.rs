//! Landmark-based piecewise linear intensity standardization across subjects.
//!
//! Eleven histogram landmarks (1st and 99th percentile ends plus the deciles)
//! are mapped subject-by-subject onto a common [0, 1000] scale; the standard
//! landmark set is the mean of the mapped landmarks over the training cohort.

use crate::error::{Error, Result};
use crate::volume::{MaskVolume, ScalarVolume};
use serde::{Deserialize, Serialize};

pub const STANDARD_SCALE: (f64, f64) = (0.0, 1000.0);

/// The 11 landmark percentile positions.
pub const LANDMARK_PERCENTILES: [f64; 11] = [
    1.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 99.0,
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandmarkModel {
    /// Standard scale [lo, hi] the landmark targets live on.
    pub scale: [f64; 2],
    /// Percentile positions of the landmarks (strictly increasing).
    pub percentiles: Vec<f64>,
    /// Target intensities on the standard scale (non-decreasing).
    pub targets: Vec<f64>,
}

impl LandmarkModel {
    pub fn validate(&self) -> Result<()> {
        if self.percentiles.len() != 11 || self.targets.len() != 11 {
            return Err(Error::Data(format!(
                "landmark model must have 11 landmarks, got {} / {}",
                self.percentiles.len(),
                self.targets.len()
            )));
        }
        if !self.percentiles.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Data("landmark percentiles must be strictly increasing".into()));
        }
        if !self.targets.windows(2).all(|w| w[0] <= w[1]) {
            return Err(Error::Data("landmark targets must be non-decreasing".into()));
        }
        Ok(())
    }
}

/// Percentile by linear interpolation of the empirical CDF over sorted values:
/// position q/100 * (n-1), interpolated between adjacent order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn subject_landmarks(v: &ScalarVolume, mask: &MaskVolume) -> Result<Vec<f64>> {
    v.grid.check_same(&mask.grid, "standardization mask")?;
    let mut vals = v.masked_values(mask);
    if vals.is_empty() {
        return Err(Error::Data("empty mask: no voxels to standardize on".into()));
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if !vals.iter().all(|x| x.is_finite()) {
        return Err(Error::Data("non-finite intensities in mask".into()));
    }
    let lm: Vec<f64> = LANDMARK_PERCENTILES
        .iter()
        .map(|&q| percentile(&vals, q))
        .collect();
    if lm[10] <= lm[0] {
        return Err(Error::Data(
            "degenerate intensity distribution: 1st and 99th percentile coincide".into(),
        ));
    }
    Ok(lm)
}

/// Map a subject landmark vector onto [lo, hi] so that the end landmarks land
/// exactly on the scale ends.
fn map_to_scale(lm: &[f64], scale: [f64; 2]) -> Vec<f64> {
    let (p_min, p_max) = (lm[0], lm[10]);
    let span = p_max - p_min;
    lm.iter()
        .map(|&l| scale[0] + (l - p_min) / span * (scale[1] - scale[0]))
        .collect()
}

/// Train the standard landmark set from one or more subjects.
pub fn train_landmarks(volumes: &[&ScalarVolume], masks: &[&MaskVolume]) -> Result<LandmarkModel> {
    if volumes.is_empty() || volumes.len() != masks.len() {
        return Err(Error::Data(format!(
            "need >= 1 subject with matching masks, got {} volumes / {} masks",
            volumes.len(),
            masks.len()
        )));
    }
    let mut acc = vec![0.0f64; 11];
    for (v, m) in volumes.iter().zip(masks) {
        let mapped = map_to_scale(&subject_landmarks(v, m)?, [STANDARD_SCALE.0, STANDARD_SCALE.1]);
        for (a, l) in acc.iter_mut().zip(&mapped) {
            *a += l;
        }
    }
    let n = volumes.len() as f64;
    let mut targets: Vec<f64> = acc.into_iter().map(|a| a / n).collect();
    // averaging cannot reorder, but enforce monotonicity against rounding
    for i in 1..targets.len() {
        if targets[i] < targets[i - 1] {
            targets[i] = targets[i - 1];
        }
    }
    let model = LandmarkModel {
        scale: [STANDARD_SCALE.0, STANDARD_SCALE.1],
        percentiles: LANDMARK_PERCENTILES.to_vec(),
        targets,
    };
    model.validate()?;
    Ok(model)
}

/// Piecewise linear transfer sending each subject landmark to its standard
/// target, with linear extrapolation beyond the end landmarks. Non-decreasing
/// by construction.
pub struct TransferMap {
    knots: Vec<f64>,
    targets: Vec<f64>,
}

impl TransferMap {
    pub fn apply(&self, x: f64) -> f64 {
        let k = &self.knots;
        let t = &self.targets;
        let n = k.len();
        // segment lookup; ends extrapolate with the adjacent segment slope
        let seg = if x < k[0] {
            0
        } else if x >= k[n - 1] {
            n - 2
        } else {
            match k.binary_search_by(|probe| probe.partial_cmp(&x).unwrap()) {
                Ok(i) => i.min(n - 2),
                Err(i) => i - 1,
            }
        };
        let dx = k[seg + 1] - k[seg];
        if dx <= 0.0 {
            return t[seg];
        }
        let slope = (t[seg + 1] - t[seg]) / dx;
        t[seg] + slope * (x - k[seg])
    }
}

/// Build the transfer map for a subject under the given model.
pub fn transfer_map(v: &ScalarVolume, mask: &MaskVolume, model: &LandmarkModel) -> Result<TransferMap> {
    model.validate()?;
    let knots = subject_landmarks(v, mask)?;
    Ok(TransferMap {
        knots,
        targets: model.targets.clone(),
    })
}

/// Standardize a volume: every voxel (inside and outside the mask) is passed
/// through the subject's piecewise linear transfer.
pub fn standardize(v: &ScalarVolume, mask: &MaskVolume, model: &LandmarkModel) -> Result<ScalarVolume> {
    let map = transfer_map(v, mask, model)?;
    let data = v.data.iter().map(|&x| map.apply(x)).collect();
    ScalarVolume::from_data(v.grid, data)
}
