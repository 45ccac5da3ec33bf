//! Region-wise aggregation and group statistics: per-region means over the
//! sheet mask, TIV normalization, Welch two-sample t tests, Benjamini-
//! Hochberg FDR control, and sheet surface-area estimation.

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, MaskVolume, ScalarVolume, VectorField};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::BTreeMap;

/// Mean of a per-voxel map over `support` within each parcellation region.
/// Regions with no support voxel are absent from the result.
pub fn regional_means(
    values: &ScalarVolume,
    support: &MaskVolume,
    parcellation: &LabelVolume,
) -> Result<BTreeMap<u32, (usize, f64)>> {
    values.grid.check_same(&support.grid, "regional means support")?;
    values.grid.check_same(&parcellation.grid, "regional means parcellation")?;
    let mut acc: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for i in support.indices() {
        let label = parcellation.data[i];
        if label == 0 {
            continue;
        }
        let e = acc.entry(label).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += values.data[i];
    }
    Ok(acc
        .into_iter()
        .map(|(l, (n, sum))| (l, (n, sum / n as f64)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TivMode {
    Ratio,
    Cuberoot,
    None,
}

/// Normalize a thickness value by the total intracranial volume.
pub fn tiv_normalize(value: f64, tiv_mm3: f64, mode: TivMode) -> Result<f64> {
    if !(tiv_mm3 > 0.0) {
        return Err(Error::Parameter(format!("TIV must be > 0, got {tiv_mm3}")));
    }
    Ok(match mode {
        TivMode::Ratio => value / tiv_mm3,
        TivMode::Cuberoot => value / tiv_mm3.cbrt(),
        TivMode::None => value,
    })
}

/// Welch two-sample t statistic, Welch-Satterthwaite degrees of freedom and
/// two-sided p value.
#[derive(Debug, Clone, Copy)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

pub fn welch_t_test(group_a: &[f64], group_b: &[f64]) -> Result<WelchResult> {
    let (na, nb) = (group_a.len(), group_b.len());
    if na < 2 || nb < 2 {
        return Err(Error::Data(format!(
            "Welch test needs >= 2 observations per group, got {na} / {nb}"
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let (ma, mb) = (mean(group_a), mean(group_b));
    let (va, vb) = (var(group_a, ma), var(group_b, mb));
    let sa = va / na as f64;
    let sb = vb / nb as f64;
    let se2 = sa + sb;
    if se2 == 0.0 {
        // both groups constant: equal means are maximally unsurprising,
        // unequal means are impossible under any variance model
        return Ok(if ma == mb {
            WelchResult { t: 0.0, df: f64::NAN, p: 1.0 }
        } else {
            WelchResult {
                t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
                df: f64::NAN,
                p: 0.0,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na as f64 - 1.0) + sb * sb / (nb as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Data(format!("t distribution with df {df}: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(WelchResult { t, df, p })
}

/// Benjamini-Hochberg step-up procedure: reject the hypotheses belonging to
/// the largest k with p_(k) <= (k/m) q. Returns one decision per input, in
/// input order.
pub fn fdr_correct(p_values: &[f64], q: f64) -> Result<Vec<bool>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Parameter(format!("FDR q must be in (0,1), got {q}")));
    }
    let m = p_values.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Data(format!("p value {p} outside [0,1]")));
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).unwrap());
    let mut threshold = None;
    for (rank, &idx) in order.iter().enumerate() {
        let k = rank + 1;
        if p_values[idx] <= k as f64 / m as f64 * q {
            threshold = Some(p_values[idx]);
        }
    }
    let mut out = vec![false; m];
    if let Some(thr) = threshold {
        for (o, &p) in out.iter_mut().zip(p_values) {
            *o = p <= thr;
        }
    }
    Ok(out)
}

/// Surface area of a one-voxel sheet: each voxel contributes its volume
/// divided by its extent along the sheet normal (approximated by the
/// streamline direction). Zero-direction voxels fall back to the z axis and
/// are counted in the returned flag tally.
pub fn purkinje_area(sheet: &MaskVolume, vhat: &VectorField) -> Result<(f64, usize)> {
    sheet.grid.check_same(&vhat.grid, "area sheet")?;
    let (sx, sy, sz) = sheet.grid.spacing;
    let voxvol = sheet.grid.voxel_volume();
    let mut area = 0.0;
    let mut fallbacks = 0;
    for i in sheet.indices() {
        let v = vhat.data[i];
        let extent = v[0].abs() * sx + v[1].abs() * sy + v[2].abs() * sz;
        if extent > 1e-12 {
            area += voxvol / extent;
        } else {
            fallbacks += 1;
            area += voxvol / sz;
        }
    }
    Ok((area, fallbacks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn regional_means_basic_cases() {
        let g = Grid::isotropic((4, 4, 4), 1.0).unwrap();
        let values = ScalarVolume::from_fn(g, |x, _, _| if x < 2 { 2.0 } else { 4.0 });
        let support = MaskVolume::full(g);
        // single region covering everything: mean equals the global mean
        let mut all = LabelVolume::zeros(g);
        all.data.fill(1);
        let means = regional_means(&values, &support, &all).unwrap();
        assert_eq!(means.len(), 1);
        assert_eq!(means[&1].1, 3.0);
        // two regions with constant values
        let two = LabelVolume {
            grid: g,
            data: values.data.iter().map(|&v| if v == 2.0 { 1 } else { 2 }).collect(),
        };
        let means = regional_means(&values, &support, &two).unwrap();
        assert_eq!(means[&1], (32, 2.0));
        assert_eq!(means[&2], (32, 4.0));
    }

    #[test]
    fn regional_means_match_brute_force() {
        let g = Grid::isotropic((6, 6, 6), 1.0).unwrap();
        let values = ScalarVolume::from_fn(g, |x, y, z| ((x * 31 + y * 7 + z * 13) % 17) as f64);
        let support = MaskVolume::from_fn(g, |x, y, z| (x + y + z) % 3 != 0);
        let parc = LabelVolume {
            grid: g,
            data: (0..g.len()).map(|i| (i % 4) as u32).collect(),
        };
        let means = regional_means(&values, &support, &parc).unwrap();
        // brute-force single-pass accumulation per label
        for label in 1..4u32 {
            let mut n = 0;
            let mut sum = 0.0;
            for i in 0..g.len() {
                if support.data[i] && parc.data[i] == label {
                    n += 1;
                    sum += values.data[i];
                }
            }
            let (gn, gmean) = means[&label];
            assert_eq!(gn, n);
            assert!((gmean - sum / n as f64).abs() < 1e-12);
        }
        // region absent from support is absent from the result
        let empty_support = MaskVolume::empty(g);
        assert!(regional_means(&values, &empty_support, &parc).unwrap().is_empty());
    }

    #[test]
    fn regional_means_commute_with_label_permutation() {
        let g = Grid::isotropic((5, 5, 5), 1.0).unwrap();
        let values = ScalarVolume::from_fn(g, |x, y, z| (x + 2 * y + 3 * z) as f64);
        let support = MaskVolume::full(g);
        let parc = LabelVolume {
            grid: g,
            data: (0..g.len()).map(|i| 1 + (i % 3) as u32).collect(),
        };
        let perm = |l: u32| match l {
            1 => 3,
            2 => 1,
            3 => 2,
            other => other,
        };
        let permuted = LabelVolume {
            grid: g,
            data: parc.data.iter().map(|&l| perm(l)).collect(),
        };
        let a = regional_means(&values, &support, &parc).unwrap();
        let b = regional_means(&values, &support, &permuted).unwrap();
        for (&l, &v) in &a {
            assert_eq!(b[&perm(l)], v);
        }
    }

    #[test]
    fn tiv_modes() {
        assert_eq!(tiv_normalize(3.0, 1.0, TivMode::Ratio).unwrap(), 3.0);
        assert_eq!(tiv_normalize(3.0, 8.0, TivMode::Cuberoot).unwrap(), 1.5);
        assert_eq!(tiv_normalize(3.0, 8.0, TivMode::None).unwrap(), 3.0);
        assert!(tiv_normalize(3.0, 0.0, TivMode::Ratio).is_err());
        // positive scaling preserves rank order
        let vals = [2.0, 5.0, 3.0];
        let normed: Vec<f64> = vals
            .iter()
            .map(|&v| tiv_normalize(v, 123.4, TivMode::Ratio).unwrap())
            .collect();
        assert!(normed[0] < normed[2] && normed[2] < normed[1]);
    }

    #[test]
    fn welch_matches_frozen_oracle() {
        // oracle: direct evaluation of the Welch formulas at high precision
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [3.0, 4.0, 5.0, 6.0, 7.0];
        let r = welch_t_test(&a, &b).unwrap();
        assert!((r.t - (-2.0)).abs() < 1e-12, "t = {}", r.t);
        assert!((r.df - 8.0).abs() < 1e-12);
        assert!((r.p - 0.08051623795726257).abs() < 1e-9, "p = {}", r.p);

        let a2 = [10.0, 12.5, 11.1, 9.8, 13.0, 10.4];
        let b2 = [8.1, 9.0, 7.7, 8.8];
        let r2 = welch_t_test(&a2, &b2).unwrap();
        assert!((r2.t - 4.376212856255777).abs() < 1e-10);
        assert!((r2.df - 7.382419342455497).abs() < 1e-10);
        assert!((r2.p - 0.002861425904909097).abs() < 1e-9, "p = {}", r2.p);
    }

    #[test]
    fn welch_symmetries() {
        let a = [4.1, 3.3, 5.2, 4.8, 2.9];
        let b = [5.0, 6.1, 4.4, 5.9];
        let ab = welch_t_test(&a, &b).unwrap();
        let ba = welch_t_test(&b, &a).unwrap();
        assert!((ab.t + ba.t).abs() < 1e-12, "label swap should negate t");
        assert!((ab.p - ba.p).abs() < 1e-12);
        // shifting both groups by a constant changes nothing
        let shift = 17.3;
        let a2: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let b2: Vec<f64> = b.iter().map(|x| x + shift).collect();
        let r = welch_t_test(&a2, &b2).unwrap();
        assert!((r.t - ab.t).abs() < 1e-9);
        assert!((r.p - ab.p).abs() < 1e-9);
    }

    #[test]
    fn welch_degenerate_cases() {
        let same = [2.0, 3.0, 4.0];
        let r = welch_t_test(&same, &same).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
        // zero variance in both groups
        let ca = [5.0, 5.0, 5.0];
        let cb = [5.0, 5.0];
        let r = welch_t_test(&ca, &cb).unwrap();
        assert_eq!(r.p, 1.0);
        let cc = [6.0, 6.0];
        let r = welch_t_test(&ca, &cc).unwrap();
        assert_eq!(r.p, 0.0);
        assert!(r.t.is_infinite());
        // degenerate n
        assert!(welch_t_test(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn bh_worked_example() {
        let p = [0.01, 0.02, 0.04, 0.2];
        let d = fdr_correct(&p, 0.1).unwrap();
        assert_eq!(d, vec![true, true, true, false]);
    }

    #[test]
    fn bh_all_or_nothing() {
        let ones = [1.0; 6];
        assert!(fdr_correct(&ones, 0.1).unwrap().iter().all(|&d| !d));
        let zeros = [0.0; 6];
        assert!(fdr_correct(&zeros, 0.1).unwrap().iter().all(|&d| d));
    }

    #[test]
    fn bh_matches_exhaustive_oracle() {
        // oracle: literally check the BH condition at every k on sorted p
        let mut state = 0xdeadbeefu64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for trial in 0..1000 {
            let m = 1 + (trial % 17);
            let p: Vec<f64> = (0..m).map(|_| next()).collect();
            let q = 0.1;
            let got = fdr_correct(&p, q).unwrap();

            let mut sorted: Vec<f64> = p.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut best_k = 0;
            for k in 1..=m {
                if sorted[k - 1] <= k as f64 / m as f64 * q {
                    best_k = k;
                }
            }
            let expected: Vec<bool> = if best_k == 0 {
                vec![false; m]
            } else {
                let thr = sorted[best_k - 1];
                p.iter().map(|&x| x <= thr).collect()
            };
            assert_eq!(got, expected, "trial {trial}: p = {p:?}");
        }
    }

    #[test]
    fn bh_monotone_in_q() {
        let mut state = 99u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let p: Vec<f64> = (0..12).map(|_| next()).collect();
            let lo = fdr_correct(&p, 0.05).unwrap();
            let hi = fdr_correct(&p, 0.2).unwrap();
            for (l, h) in lo.iter().zip(&hi) {
                assert!(!l | h, "raising q removed a rejection");
            }
        }
    }

    #[test]
    fn bh_decisions_form_sorted_prefix() {
        let p = [0.3, 0.01, 0.02, 0.9, 0.015];
        let d = fdr_correct(&p, 0.2).unwrap();
        let mut pairs: Vec<(f64, bool)> = p.iter().copied().zip(d.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut seen_reject_end = false;
        for (_, rejected) in pairs {
            if !rejected {
                seen_reject_end = true;
            } else {
                assert!(!seen_reject_end, "rejection after an acceptance in sorted order");
            }
        }
    }

    #[test]
    fn flat_sheet_area_is_voxel_count() {
        let g = Grid::isotropic((8, 8, 5), 1.0).unwrap();
        let sheet = MaskVolume::from_fn(g, |_, _, z| z == 2);
        let vhat = VectorField {
            grid: g,
            data: vec![[0.0, 0.0, 1.0]; g.len()],
        };
        let (area, fallbacks) = purkinje_area(&sheet, &vhat).unwrap();
        assert_eq!(fallbacks, 0);
        assert!((area - 64.0).abs() < 1e-9);
    }

    #[test]
    fn tilted_sheet_area_gains_sqrt2() {
        // rasterize a 45-degree plane one voxel thick along its normal:
        // voxels within half the projected voxel extent of the plane
        let n = 32usize;
        let g = Grid::isotropic((n, n, n), 1.0).unwrap();
        let normal = [1.0 / 2f64.sqrt(), 0.0, 1.0 / 2f64.sqrt()];
        let extent = normal[0].abs() + normal[2].abs(); // per unit spacing
        let c = (n / 2) as f64 + 0.1; // avoid exact-tie rasterization
        let sheet = MaskVolume::from_fn(g, |x, y, z| {
            let d = (x as f64 - c) * normal[0] + (z as f64 - c) * normal[2];
            let _ = y;
            d.abs() < 0.5 * extent
        });
        let vhat = VectorField {
            grid: g,
            data: vec![normal; g.len()],
        };
        let (area, _) = purkinje_area(&sheet, &vhat).unwrap();
        // interior columns only: compare per-area against the analytic plane
        // over the full cross-section, n * n * sqrt(2) scaled by coverage
        let expect = (n as f64) * (n as f64) * 2f64.sqrt();
        let rel = (area - expect).abs() / expect;
        assert!(rel < 0.05, "area {area} vs {expect} (rel {rel})");
    }

    #[test]
    fn zero_direction_falls_back_with_flag() {
        let g = Grid::isotropic((4, 4, 4), 1.0).unwrap();
        let sheet = MaskVolume::from_fn(g, |_, _, z| z == 1);
        let vhat = VectorField::zeros(g);
        let (area, fallbacks) = purkinje_area(&sheet, &vhat).unwrap();
        assert_eq!(fallbacks, 16);
        assert!((area - 16.0).abs() < 1e-9);
    }

    #[test]
    fn sphere_area_within_five_percent() {
        // mid-surface of a spherical shell at 64^3: voxels within half the
        // local projected extent of the radius-r sphere, radial directions
        let n = 64usize;
        let g = Grid::isotropic((n, n, n), 1.0).unwrap();
        let c = (n as f64 - 1.0) / 2.0;
        let r = 14.0f64;
        let mut sheet = MaskVolume::empty(g);
        let mut vhat = VectorField::zeros(g);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let d = [x as f64 - c, y as f64 - c, z as f64 - c];
                    let rr = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    if rr < 1e-9 {
                        continue;
                    }
                    let nrm = [d[0] / rr, d[1] / rr, d[2] / rr];
                    let extent = nrm[0].abs() + nrm[1].abs() + nrm[2].abs();
                    let i = g.index(x, y, z);
                    vhat.data[i] = nrm;
                    if (rr - r).abs() < 0.5 * extent {
                        sheet.data[i] = true;
                    }
                }
            }
        }
        let (area, fallbacks) = purkinje_area(&sheet, &vhat).unwrap();
        assert_eq!(fallbacks, 0);
        let expect = 4.0 * std::f64::consts::PI * r * r;
        let rel = (area - expect).abs() / expect;
        assert!(rel < 0.05, "area {area} vs sphere {expect} (rel {rel})");
    }
}
