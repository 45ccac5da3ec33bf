//! Gaussian-mixture tissue classification with per-voxel spatial priors,
//! fitted by expectation-maximisation.
//!
//! Priors are fixed per-voxel mixing proportions (renormalized internally);
//! the M-step updates only the class means and variances. Reductions use
//! fixed-size chunking so results are bit-identical for any worker count.

use crate::error::{Error, Result};
use crate::volume::{MaskVolume, ScalarVolume};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const CHUNK: usize = 4096;
const LN_2PI: f64 = 1.8378770664093453;

/// Fitted mixture parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmModel {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Classes whose responsibility mass collapsed below 1e-6 during fitting.
    pub degenerate: Vec<bool>,
    pub variance_floor: f64,
}

/// Per-class responsibility volumes; rows sum to 1 inside the mask.
#[derive(Debug, Clone)]
pub struct PosteriorStack {
    pub probs: Vec<ScalarVolume>,
    pub mask: MaskVolume,
}

impl PosteriorStack {
    pub fn k(&self) -> usize {
        self.probs.len()
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GmmModel,
    pub posteriors: PosteriorStack,
    /// Log-likelihood trace: entry 0 is at the initial parameters, then one
    /// entry per EM iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Which anatomical class a mixture component maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TissueClass {
    Wm,
    Gm,
    Csf,
    Other,
}

struct Problem<'a> {
    values: Vec<f64>,
    voxel_idx: Vec<usize>,
    /// Per-voxel prior row, renormalized to sum 1; length values.len() * k.
    priors: Vec<f64>,
    mask: &'a MaskVolume,
}

fn build_problem<'a>(
    v: &ScalarVolume,
    mask: &'a MaskVolume,
    priors: &[&ScalarVolume],
    k: usize,
) -> Result<Problem<'a>> {
    if k < 2 {
        return Err(Error::Parameter(format!("EM needs K >= 2 classes, got {k}")));
    }
    v.grid.check_same(&mask.grid, "EM mask")?;
    if !priors.is_empty() && priors.len() != k {
        return Err(Error::Data(format!(
            "got {} prior volumes for K = {k}",
            priors.len()
        )));
    }
    for p in priors {
        v.grid.check_same(&p.grid, "EM prior")?;
    }
    let voxel_idx: Vec<usize> = mask.indices().collect();
    if voxel_idx.len() <= 10 * k {
        return Err(Error::Data(format!(
            "mask has {} voxels; need more than {} for K = {k}",
            voxel_idx.len(),
            10 * k
        )));
    }
    let values: Vec<f64> = voxel_idx.iter().map(|&i| v.data[i]).collect();
    if !values.iter().all(|x| x.is_finite()) {
        return Err(Error::Data("non-finite intensities inside mask".into()));
    }
    let mut prow = Vec::with_capacity(values.len() * k);
    if priors.is_empty() {
        prow.resize(values.len() * k, 1.0 / k as f64);
    } else {
        for &i in &voxel_idx {
            let mut sum = 0.0;
            for p in priors {
                let val = p.data[i];
                if !val.is_finite() || val < 0.0 {
                    return Err(Error::Data(format!(
                        "invalid prior value {val} at voxel {i}"
                    )));
                }
                sum += val;
            }
            if sum <= 1e-12 {
                return Err(Error::Data(format!(
                    "prior volumes sum to {sum} at in-mask voxel {i}; cannot normalize"
                )));
            }
            for p in priors {
                prow.push(p.data[i] / sum);
            }
        }
    }
    Ok(Problem {
        values,
        voxel_idx,
        priors: prow,
        mask,
    })
}

/// Initial means at equally spaced in-mask intensity percentiles
/// (100*(j+1)/(K+1)), shared variance = in-mask variance / K.
fn initialize(values: &[f64], k: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let means: Vec<f64> = (0..k)
        .map(|j| {
            let q = 100.0 * (j + 1) as f64 / (k + 1) as f64;
            crate::standardize::percentile(&sorted, q)
        })
        .collect();
    let n = values.len() as f64;
    let mean: f64 = values.iter().sum::<f64>() / n;
    let var: f64 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let range = sorted[sorted.len() - 1] - sorted[0];
    let floor = (1e-3 * range).powi(2).max(1e-300);
    let variances = vec![(var / k as f64).max(floor); k];
    (means, variances, floor)
}

/// One stabilized E-step row: responsibilities and the voxel's log-evidence.
#[inline]
fn e_step_row(
    value: f64,
    priors: &[f64],
    means: &[f64],
    variances: &[f64],
    out: &mut [f64],
) -> f64 {
    let k = means.len();
    let mut max_log = f64::NEG_INFINITY;
    for j in 0..k {
        let log_n = -0.5 * (LN_2PI + variances[j].ln() + (value - means[j]).powi(2) / variances[j]);
        let lp = if priors[j] > 0.0 {
            priors[j].ln() + log_n
        } else {
            f64::NEG_INFINITY
        };
        out[j] = lp;
        if lp > max_log {
            max_log = lp;
        }
    }
    let mut sum = 0.0;
    for r in out.iter_mut() {
        *r = (*r - max_log).exp();
        sum += *r;
    }
    for r in out.iter_mut() {
        *r /= sum;
    }
    max_log + sum.ln()
}

/// Fit the mixture. `priors` may be empty (flat priors). The log-likelihood
/// trace is non-decreasing; convergence is `|dLL| / |LL| < tol`.
pub fn fit_em(
    v: &ScalarVolume,
    mask: &MaskVolume,
    priors: &[&ScalarVolume],
    k: usize,
    tol: f64,
    max_iter: usize,
) -> Result<EmFit> {
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::Parameter(format!("EM tol must be >= 0, got {tol}")));
    }
    let prob = build_problem(v, mask, priors, k)?;
    let (mut means, mut variances, floor) = initialize(&prob.values, k);
    let mut degenerate = vec![false; k];

    let n = prob.values.len();
    let mut resp = vec![0.0f64; n * k];

    // chunked E-step + partial sums keeps reductions order-independent
    let e_step = |means: &[f64], variances: &[f64], resp: &mut [f64]| -> f64 {
        let partials: Vec<f64> = resp
            .par_chunks_mut(CHUNK * k)
            .enumerate()
            .map(|(ci, chunk)| {
                let base = ci * CHUNK;
                let mut ll = 0.0;
                for (row, r) in chunk.chunks_mut(k).enumerate() {
                    let i = base + row;
                    ll += e_step_row(
                        prob.values[i],
                        &prob.priors[i * k..(i + 1) * k],
                        means,
                        variances,
                        r,
                    );
                }
                ll
            })
            .collect();
        partials.iter().sum()
    };

    let mut trace = vec![e_step(&means, &variances, &mut resp)];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iter {
        // M-step: per-chunk partial sums folded in fixed order
        let partials: Vec<Vec<f64>> = resp
            .par_chunks(CHUNK * k)
            .enumerate()
            .map(|(ci, chunk)| {
                let base = ci * CHUNK;
                let mut acc = vec![0.0f64; 3 * k]; // [mass, sum, sumsq] per class
                for (row, r) in chunk.chunks(k).enumerate() {
                    let val = prob.values[base + row];
                    for j in 0..k {
                        acc[3 * j] += r[j];
                        acc[3 * j + 1] += r[j] * val;
                        acc[3 * j + 2] += r[j] * val * val;
                    }
                }
                acc
            })
            .collect();
        let mut acc = vec![0.0f64; 3 * k];
        for p in &partials {
            for (a, b) in acc.iter_mut().zip(p) {
                *a += b;
            }
        }
        for j in 0..k {
            let mass = acc[3 * j];
            if mass < 1e-6 {
                degenerate[j] = true;
                variances[j] = floor;
                log::warn!("EM class {j} collapsed (mass {mass:.3e}); variance floored");
                continue;
            }
            let mu = acc[3 * j + 1] / mass;
            let var = (acc[3 * j + 2] / mass - mu * mu).max(floor);
            means[j] = mu;
            variances[j] = var;
        }
        iterations += 1;
        let ll = e_step(&means, &variances, &mut resp);
        let prev = *trace.last().unwrap();
        trace.push(ll);
        if (ll - prev).abs() / ll.abs().max(1e-300) < tol {
            converged = true;
            break;
        }
    }

    // scatter responsibilities back onto the grid
    let mut probs: Vec<ScalarVolume> = (0..k).map(|_| ScalarVolume::zeros(v.grid)).collect();
    for (row, &vox) in prob.voxel_idx.iter().enumerate() {
        for (j, p) in probs.iter_mut().enumerate() {
            p.data[vox] = resp[row * k + j];
        }
    }
    Ok(EmFit {
        model: GmmModel {
            means,
            variances,
            degenerate,
            variance_floor: floor,
        },
        posteriors: PosteriorStack {
            probs,
            mask: prob.mask.clone(),
        },
        log_likelihood: trace,
        iterations,
        converged,
    })
}

/// Per-voxel argmax with lowest-index tie-break; returns the union masks of
/// classes mapped to WM and GM (always disjoint).
pub fn hard_segment(
    post: &PosteriorStack,
    class_map: &[TissueClass],
) -> Result<(MaskVolume, MaskVolume)> {
    if class_map.len() != post.k() {
        return Err(Error::Data(format!(
            "class map covers {} classes but posteriors have {}",
            class_map.len(),
            post.k()
        )));
    }
    let grid = post.mask.grid;
    let mut wm = MaskVolume::empty(grid);
    let mut gm = MaskVolume::empty(grid);
    for i in 0..grid.len() {
        if !post.mask.data[i] {
            continue;
        }
        let mut best = 0usize;
        let mut best_p = post.probs[0].data[i];
        for (j, p) in post.probs.iter().enumerate().skip(1) {
            if p.data[i] > best_p {
                best_p = p.data[i];
                best = j;
            }
        }
        match class_map[best] {
            TissueClass::Wm => wm.data[i] = true,
            TissueClass::Gm => gm.data[i] = true,
            _ => {}
        }
    }
    Ok((wm, gm))
}
