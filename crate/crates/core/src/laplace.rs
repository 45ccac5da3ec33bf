//! Harmonic-field thickness estimation: Jacobi solve of the Laplace equation
//! between the WM and pial boundaries, normalized streamline field, and the
//! Eulerian first-order transport solves for the streamline lengths D_WM and
//! D_Pial, with T_GM = D_WM + D_Pial.

use crate::error::{Error, Result};
use crate::volume::{MaskVolume, ScalarVolume, VectorField};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 5000;

/// Outcome of the Jacobi Laplace solve.
#[derive(Debug, Clone)]
pub struct LaplaceSolution {
    /// Harmonic field in [0, 1]; 0 on the WM band, 1 on the pial band,
    /// untouched (0) outside domain and bands.
    pub psi: ScalarVolume,
    pub iterations: usize,
    pub converged: bool,
    pub final_update: f64,
}

/// Solver diagnostics persisted next to the volumes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub converged: bool,
    pub final_update: f64,
}

/// The full thickness stack over the GM domain.
#[derive(Debug, Clone)]
pub struct ThicknessBundle {
    pub psi: ScalarVolume,
    pub vhat: VectorField,
    pub d_wm: ScalarVolume,
    pub d_pial: ScalarVolume,
    pub t_gm: ScalarVolume,
    /// GM voxels the solves ran on (gm minus boundary bands).
    pub domain: MaskVolume,
    /// Voxels where the gradient of psi was degenerate (zero V assigned).
    pub degenerate: MaskVolume,
    pub laplace: SolveStats,
    pub transport: SolveStats,
}

/// Hop-distance BFS from a seed set through `open` voxels (6-connectivity).
fn bfs_hops(seeds: &MaskVolume, open: &MaskVolume) -> Vec<u32> {
    let grid = seeds.grid;
    let mut dist = vec![u32::MAX; grid.len()];
    let mut queue = VecDeque::new();
    for i in seeds.indices() {
        dist[i] = 0;
        queue.push_back(i);
    }
    let (nx, ny, nz) = grid.dims;
    while let Some(idx) = queue.pop_front() {
        let (x, y, z) = grid.coords(idx);
        let d = dist[idx] + 1;
        let mut push = |cond: bool, j: usize| {
            if cond && open.data[j] && dist[j] == u32::MAX {
                dist[j] = d;
                queue.push_back(j);
            }
        };
        push(x > 0, idx.wrapping_sub(1));
        push(x + 1 < nx, idx + 1);
        push(y > 0, idx.wrapping_sub(nx));
        push(y + 1 < ny, idx + nx);
        push(z > 0, idx.wrapping_sub(nx * ny));
        push(z + 1 < nz, idx + nx * ny);
    }
    dist
}

/// Jacobi iteration of the anisotropic 7-point Laplacian over the GM domain
/// with Dirichlet values 0 on `wm_boundary` and 1 on `pial`. Neighbors that
/// belong to none of domain/bands reflect the center value (zero-flux).
///
/// The iteration starts from a hop-distance ratio field, which is already
/// harmonic on slab-like geometry; Jacobi updates then polish it to `tol`.
pub fn solve_laplace(
    gm: &MaskVolume,
    wm_boundary: &MaskVolume,
    pial: &MaskVolume,
    tol: f64,
    max_iter: usize,
) -> Result<LaplaceSolution> {
    gm.grid.check_same(&wm_boundary.grid, "laplace wm band")?;
    gm.grid.check_same(&pial.grid, "laplace pial band")?;
    if wm_boundary.overlaps(pial) {
        return Err(Error::Data("wm and pial boundary bands overlap".into()));
    }
    let grid = gm.grid;
    // solve domain: gm voxels not claimed by a boundary band
    let domain = MaskVolume {
        grid,
        data: (0..grid.len())
            .map(|i| gm.data[i] && !wm_boundary.data[i] && !pial.data[i])
            .collect(),
    };

    // reachability check doubles as the initial guess
    let open = domain.clone();
    let from_wm = bfs_hops(wm_boundary, &open);
    let from_pial = bfs_hops(pial, &open);
    let mut offenders = Vec::new();
    for i in domain.indices() {
        if from_wm[i] == u32::MAX || from_pial[i] == u32::MAX {
            offenders.push(i);
        }
    }
    if !offenders.is_empty() {
        let examples: Vec<(usize, usize, usize)> = offenders
            .iter()
            .take(5)
            .map(|&i| grid.coords(i))
            .collect();
        return Err(Error::Topology(format!(
            "{} GM voxels cannot reach both boundaries; first offenders (x,y,z): {examples:?}",
            offenders.len()
        )));
    }

    let mut psi = vec![0.0f64; grid.len()];
    for i in pial.indices() {
        psi[i] = 1.0;
    }
    for i in domain.indices() {
        let (a, b) = (from_wm[i] as f64, from_pial[i] as f64);
        psi[i] = a / (a + b);
    }

    let (sx, sy, sz) = grid.spacing;
    let wx = 1.0 / (sx * sx);
    let wy = 1.0 / (sy * sy);
    let wz = 1.0 / (sz * sz);
    let (nx, ny, _) = grid.dims;
    let domain_idx: Vec<usize> = domain.indices().collect();
    let known: Vec<bool> = (0..grid.len())
        .map(|i| domain.data[i] || wm_boundary.data[i] || pial.data[i])
        .collect();

    let mut next = psi.clone();
    let mut iterations = 0;
    let mut final_update = f64::INFINITY;
    let mut converged = false;
    for _ in 0..max_iter {
        let updates: Vec<(usize, f64)> = domain_idx
            .par_iter()
            .map(|&i| {
                let (x, y, z) = grid.coords(i);
                let mut num = 0.0;
                let mut den = 0.0;
                let mut tap = |cond: bool, j: usize, w: f64| {
                    let v = if cond && known[j] { psi[j] } else { psi[i] };
                    num += w * v;
                    den += w;
                };
                tap(x > 0, i.wrapping_sub(1), wx);
                tap(x + 1 < nx, i + 1, wx);
                tap(y > 0, i.wrapping_sub(nx), wy);
                tap(y + 1 < ny, i + nx, wy);
                tap(z > 0, i.wrapping_sub(nx * ny), wz);
                tap(z + 1 < grid.dims.2, i + nx * ny, wz);
                (i, num / den)
            })
            .collect();
        let mut max_change: f64 = 0.0;
        for &(i, v) in &updates {
            max_change = max_change.max((v - psi[i]).abs());
            next[i] = v;
        }
        std::mem::swap(&mut psi, &mut next);
        iterations += 1;
        final_update = max_change;
        if max_change < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "laplace: no convergence after {iterations} iterations (last update {final_update:.3e})"
        );
    }
    Ok(LaplaceSolution {
        psi: ScalarVolume { grid, data: psi },
        iterations,
        converged,
        final_update,
    })
}

/// Normalized gradient of psi over the domain: V = grad psi / |grad psi|.
/// Degenerate voxels (|grad| <= 1e-12) get the zero vector and a flag.
pub fn normalize_gradient(
    psi: &ScalarVolume,
    domain: &MaskVolume,
    wm_boundary: &MaskVolume,
    pial: &MaskVolume,
) -> Result<(VectorField, MaskVolume)> {
    psi.grid.check_same(&domain.grid, "gradient domain")?;
    let grid = psi.grid;
    let known = MaskVolume {
        grid,
        data: (0..grid.len())
            .map(|i| domain.data[i] || wm_boundary.data[i] || pial.data[i])
            .collect(),
    };
    let grad = crate::extrema::masked_gradient(psi, &known);
    let mut out = VectorField::zeros(grid);
    let mut degenerate = MaskVolume::empty(grid);
    for i in domain.indices() {
        let g = grad.data[i];
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if norm > 1e-12 {
            out.data[i] = [g[0] / norm, g[1] / norm, g[2] / norm];
        } else {
            degenerate.data[i] = true;
        }
    }
    Ok((out, degenerate))
}

/// First-order upwind transport solve: grad D . dir = 1 with D = 0 on the
/// seed band. The update D(x) = (1 + sum_a w_a D(upwind_a)) / sum_a w_a with
/// w_a = |V_a| / h_a is iterated Gauss-Seidel style from D = 0 in 8
/// alternating sweep orientations; values grow monotonically to the fixed
/// point. Convergence requires a full 8-orientation cycle with every change
/// below tol. `flip` selects the -V direction (for D_Pial).
fn transport_lengths(
    vhat: &VectorField,
    domain: &MaskVolume,
    seed: &MaskVolume,
    flip: bool,
    tol: f64,
    max_sweeps: usize,
) -> (ScalarVolume, usize, bool, f64, MaskVolume) {
    let grid = vhat.grid;
    let (nx, ny, nz) = grid.dims;
    let (sx, sy, sz) = grid.spacing;
    let known: Vec<bool> = (0..grid.len())
        .map(|i| domain.data[i] || seed.data[i])
        .collect();
    let mut d = vec![0.0f64; grid.len()];
    let sgn = if flip { -1.0 } else { 1.0 };

    // voxels whose upwind stencil is empty (zero vector or no usable taps)
    let mut flagged = MaskVolume::empty(grid);

    let mut sweeps = 0;
    let mut converged = false;
    let mut final_change = f64::INFINITY;
    let mut cycle_max: f64 = 0.0;
    let orders: [(bool, bool, bool); 8] = [
        (false, false, false),
        (true, false, false),
        (false, true, false),
        (false, false, true),
        (true, true, false),
        (true, false, true),
        (false, true, true),
        (true, true, true),
    ];
    for sweep in 0..max_sweeps {
        let (rx, ry, rz) = orders[sweep % 8];
        let mut max_change: f64 = 0.0;
        for zz in 0..nz {
            let z = if rz { nz - 1 - zz } else { zz };
            for yy in 0..ny {
                let y = if ry { ny - 1 - yy } else { yy };
                for xx in 0..nx {
                    let x = if rx { nx - 1 - xx } else { xx };
                    let i = grid.index(x, y, z);
                    if !domain.data[i] {
                        continue;
                    }
                    let v = vhat.data[i];
                    let (vx, vy, vz) = (sgn * v[0], sgn * v[1], sgn * v[2]);
                    let mut num = 1.0;
                    let mut den = 0.0;
                    let mut tap = |comp: f64, h: f64, lo: Option<usize>, hi: Option<usize>| {
                        let w = comp.abs() / h;
                        if w <= 0.0 {
                            return;
                        }
                        // upwind neighbor: where the characteristic comes from
                        let up = if comp > 0.0 { lo } else { hi };
                        if let Some(j) = up {
                            if known[j] {
                                num += w * d[j];
                                den += w;
                            }
                        }
                    };
                    tap(
                        vx,
                        sx,
                        (x > 0).then(|| i - 1),
                        (x + 1 < nx).then(|| i + 1),
                    );
                    tap(
                        vy,
                        sy,
                        (y > 0).then(|| i - nx),
                        (y + 1 < ny).then(|| i + nx),
                    );
                    tap(
                        vz,
                        sz,
                        (z > 0).then(|| i - nx * ny),
                        (z + 1 < nz).then(|| i + nx * ny),
                    );
                    if den <= 0.0 {
                        flagged.data[i] = true;
                        continue;
                    }
                    let cand = num / den;
                    let change = (cand - d[i]).abs();
                    if change > 0.0 {
                        max_change = max_change.max(change);
                        d[i] = cand;
                    }
                }
            }
        }
        sweeps += 1;
        cycle_max = cycle_max.max(max_change);
        // one quiet orientation proves nothing; require a full 8-sweep cycle
        if sweep % 8 == 7 {
            final_change = cycle_max;
            if cycle_max < tol {
                converged = true;
                break;
            }
            cycle_max = 0.0;
        }
    }

    // degenerate-stencil voxels take the average of their usable 6-neighbors
    if flagged.count() > 0 {
        for i in flagged.indices() {
            let (x, y, z) = grid.coords(i);
            let mut sum = 0.0;
            let mut n = 0;
            let mut take = |cond: bool, j: usize| {
                if cond && known[j] && !flagged.data[j] {
                    sum += d[j];
                    n += 1;
                }
            };
            take(x > 0, i.wrapping_sub(1));
            take(x + 1 < nx, i + 1);
            take(y > 0, i.wrapping_sub(nx));
            take(y + 1 < ny, i + nx);
            take(z > 0, i.wrapping_sub(nx * ny));
            take(z + 1 < nz, i + nx * ny);
            if n > 0 {
                d[i] = sum / n as f64;
            }
        }
        log::warn!(
            "transport: {} voxels had no usable upwind stencil; filled from neighbor averages",
            flagged.count()
        );
    }
    (
        ScalarVolume { grid, data: d },
        sweeps,
        converged,
        final_change,
        flagged,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn streamline_lengths(
    vhat: &VectorField,
    domain: &MaskVolume,
    wm_boundary: &MaskVolume,
    pial: &MaskVolume,
    tol: f64,
    max_sweeps: usize,
) -> Result<(ScalarVolume, ScalarVolume, SolveStats)> {
    vhat.grid.check_same(&domain.grid, "transport domain")?;
    let (mut d_wm, s1, c1, f1, _) =
        transport_lengths(vhat, domain, wm_boundary, false, tol, max_sweeps);
    let (mut d_pial, s2, c2, f2, _) =
        transport_lengths(vhat, domain, pial, true, tol, max_sweeps);
    // The Dirichlet zero sits at the band voxel centers, but the tissue
    // interface lies at the band/domain voxel boundary, half an upwind step
    // closer. Shift each length by half the local streamline step so the
    // lengths measure from the interface, not the band centers.
    let (sx, sy, sz) = vhat.grid.spacing;
    for i in domain.indices() {
        let v = vhat.data[i];
        let w = v[0].abs() / sx + v[1].abs() / sy + v[2].abs() / sz;
        if w > 1e-12 {
            let half = 0.5 / w;
            d_wm.data[i] = (d_wm.data[i] - half).max(0.0);
            d_pial.data[i] = (d_pial.data[i] - half).max(0.0);
        }
    }
    Ok((
        d_wm,
        d_pial,
        SolveStats {
            iterations: s1.max(s2),
            converged: c1 && c2,
            final_update: f1.max(f2),
        },
    ))
}

/// Voxelwise sum T_GM = D_WM + D_Pial.
pub fn assemble_thickness(d_wm: &ScalarVolume, d_pial: &ScalarVolume) -> Result<ScalarVolume> {
    d_wm.grid.check_same(&d_pial.grid, "thickness sum")?;
    let data = d_wm
        .data
        .iter()
        .zip(&d_pial.data)
        .map(|(&a, &b)| a + b)
        .collect();
    ScalarVolume::from_data(d_wm.grid, data)
}

/// Run the full thickness stage over GM between the WM band and the pial
/// surface (fissures included in `pial`).
pub fn compute_thickness_bundle(
    gm: &MaskVolume,
    wm_boundary: &MaskVolume,
    pial: &MaskVolume,
    tol: f64,
    max_iter: usize,
) -> Result<ThicknessBundle> {
    let lap = solve_laplace(gm, wm_boundary, pial, tol, max_iter)?;
    let grid = gm.grid;
    let domain = MaskVolume {
        grid,
        data: (0..grid.len())
            .map(|i| gm.data[i] && !wm_boundary.data[i] && !pial.data[i])
            .collect(),
    };
    let (vhat, degenerate) = normalize_gradient(&lap.psi, &domain, wm_boundary, pial)?;
    let (d_wm, d_pial, transport) =
        streamline_lengths(&vhat, &domain, wm_boundary, pial, tol, max_iter)?;
    let t_gm = assemble_thickness(&d_wm, &d_pial)?;
    Ok(ThicknessBundle {
        psi: lap.psi.clone(),
        vhat,
        d_wm,
        d_pial,
        t_gm,
        domain,
        degenerate,
        laplace: SolveStats {
            iterations: lap.iterations,
            converged: lap.converged,
            final_update: lap.final_update,
        },
        transport,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    /// Slab fixture: WM band at z < 2, pial band at z > 2 + n, GM between.
    fn slab(n: usize, spacing: f64) -> (Grid, MaskVolume, MaskVolume, MaskVolume) {
        let g = Grid::isotropic((12, 12, n + 4), spacing).unwrap();
        let gm = MaskVolume::from_fn(g, |_, _, z| (2..2 + n).contains(&z));
        let wm_band = MaskVolume::from_fn(g, |_, _, z| z == 1);
        let pial = MaskVolume::from_fn(g, |_, _, z| z == 2 + n);
        (g, gm, wm_band, pial)
    }

    #[test]
    fn slab_psi_is_linear() {
        let (_, gm, wm, pial) = slab(9, 1.0);
        let sol = solve_laplace(&gm, &wm, &pial, 1e-8, 5000).unwrap();
        assert!(sol.converged);
        // psi at depth i of a 10-gap slab converges to i/10
        for z in 2..11usize {
            let i = z - 1; // hops from the wm band
            let expect = i as f64 / 10.0;
            let got = sol.psi.at(6, 6, z);
            assert!(
                (got - expect).abs() < 1e-4,
                "z={z}: psi {got} vs linear {expect}"
            );
        }
    }

    #[test]
    fn psi_respects_maximum_principle() {
        let (_, gm, wm, pial) = slab(7, 0.5);
        let sol = solve_laplace(&gm, &wm, &pial, 1e-7, 5000).unwrap();
        for i in gm.indices() {
            if !wm.data[i] && !pial.data[i] {
                assert!(sol.psi.data[i] > 0.0 && sol.psi.data[i] < 1.0);
            }
        }
    }

    /// Shell fixture: GM between radii r1 and r2, one-voxel Dirichlet bands
    /// just outside. Returns (grid, gm, wm_band, pial, r_of).
    fn shell(
        n: usize,
        r1: f64,
        r2: f64,
    ) -> (
        Grid,
        MaskVolume,
        MaskVolume,
        MaskVolume,
        impl Fn(usize, usize, usize) -> f64,
    ) {
        let g = Grid::isotropic((n, n, n), 1.0).unwrap();
        let c = (n as f64 - 1.0) / 2.0;
        let r_of = move |x: usize, y: usize, z: usize| {
            ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt()
        };
        let gm = MaskVolume::from_fn(g, |x, y, z| {
            let r = r_of(x, y, z);
            r > r1 && r < r2
        });
        let wm_band = MaskVolume::from_fn(g, |x, y, z| {
            let r = r_of(x, y, z);
            r <= r1 && r > r1 - 1.0
        });
        let pial = MaskVolume::from_fn(g, |x, y, z| {
            let r = r_of(x, y, z);
            r >= r2 && r < r2 + 1.0
        });
        (g, gm, wm_band, pial, r_of)
    }

    /// Effective radius of a jagged Dirichlet band: its values enter the
    /// discrete system only through band-to-domain stencil couplings, so the
    /// effective surface is the coupling-weighted mean of the band radii.
    fn effective_band_radius(
        band: &MaskVolume,
        gm: &MaskVolume,
        r_of: &dyn Fn(usize, usize, usize) -> f64,
    ) -> f64 {
        use crate::grid::Connectivity;
        let g = band.grid;
        let mut wsum = 0.0;
        let mut rsum = 0.0;
        for i in band.indices() {
            let (x, y, z) = g.coords(i);
            let mut w = 0.0;
            for (dx, dy, dz) in Connectivity::Six.offsets() {
                let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                if g.contains(nx, ny, nz) && gm.data[g.index(nx as usize, ny as usize, nz as usize)]
                {
                    w += 1.0;
                }
            }
            wsum += w;
            rsum += w * r_of(x, y, z);
        }
        rsum / wsum
    }

    #[test]
    fn spherical_shell_matches_harmonic_closed_form() {
        // between concentric spheres psi(r) = (1/a - 1/r) / (1/a - 1/b),
        // with a and b the effective radii of the voxelized Dirichlet bands
        let (r1, r2) = (8.0, 16.0);
        let (_, gm, wm_band, pial, r_of) = shell(48, r1, r2);
        let sol = solve_laplace(&gm, &wm_band, &pial, 1e-7, 20000).unwrap();
        assert!(sol.converged);
        let a = effective_band_radius(&wm_band, &gm, &r_of);
        let b = effective_band_radius(&pial, &gm, &r_of);
        let exact = |r: f64| (1.0 / a - 1.0 / r) / (1.0 / a - 1.0 / b);
        let mut checked = 0;
        for i in gm.indices() {
            let (x, y, z) = gm.grid.coords(i);
            let r = r_of(x, y, z);
            if r < r1 + 1.5 || r > r2 - 1.5 {
                continue; // interior voxels only
            }
            let got = sol.psi.data[i];
            assert!(
                (got - exact(r)).abs() < 0.02,
                "r={r:.2}: psi {got:.4} vs closed form {:.4}",
                exact(r)
            );
            checked += 1;
        }
        assert!(checked > 1000, "only {checked} interior voxels checked");
    }

    #[test]
    fn disconnected_gm_is_a_topology_error() {
        let g = Grid::isotropic((8, 8, 12), 1.0).unwrap();
        // an isolated GM pocket away from both bands
        let gm = MaskVolume::from_fn(g, |x, y, z| {
            ((2..6).contains(&z) && x < 4) || (z == 9 && x == 7 && y == 7)
        });
        let wm = MaskVolume::from_fn(g, |x, _, z| z == 1 && x < 4);
        let pial = MaskVolume::from_fn(g, |x, _, z| z == 6 && x < 4);
        let err = solve_laplace(&gm, &wm, &pial, 1e-6, 100).unwrap_err();
        assert!(matches!(err, Error::Topology(_)), "{err}");
    }

    #[test]
    fn slab_vhat_is_axial() {
        let (_, gm, wm, pial) = slab(8, 1.0);
        let bundle = compute_thickness_bundle(&gm, &wm, &pial, 1e-7, 5000).unwrap();
        for i in bundle.domain.indices() {
            let v = bundle.vhat.data[i];
            assert!(v[2].abs() > 0.999, "vhat {v:?} not axial");
            let norm: f64 = v.iter().map(|c| c * c).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-6);
        }
        assert_eq!(bundle.degenerate.count(), 0);
    }

    #[test]
    fn slab_thickness_matches_band_gap() {
        // 4 mm slab: 8 GM voxels at 0.5 mm; bands one voxel outside
        let (_, gm, wm, pial) = slab(8, 0.5);
        let bundle = compute_thickness_bundle(&gm, &wm, &pial, 1e-7, 5000).unwrap();
        let mut n_ok = 0;
        let mut n = 0;
        for i in bundle.domain.indices() {
            let t = bundle.t_gm.data[i];
            assert!(t.is_finite());
            if (t - 4.0).abs() <= 0.1 {
                n_ok += 1;
            }
            n += 1;
        }
        assert!(n_ok as f64 >= 0.99 * n as f64, "{n_ok}/{n} within 4 +- 0.1 mm");
    }

    #[test]
    fn thickness_sum_identity_is_exact() {
        let (_, gm, wm, pial) = slab(8, 0.5);
        let bundle = compute_thickness_bundle(&gm, &wm, &pial, 1e-7, 5000).unwrap();
        for i in bundle.domain.indices() {
            assert_eq!(
                bundle.t_gm.data[i],
                bundle.d_wm.data[i] + bundle.d_pial.data[i]
            );
            assert!(bundle.t_gm.data[i] >= bundle.d_wm.data[i].max(bundle.d_pial.data[i]));
            assert!(bundle.d_wm.data[i] >= 0.0 && bundle.d_pial.data[i] >= 0.0);
        }
    }

    #[test]
    fn d_wm_vanishes_on_first_gm_layer() {
        let (_, gm, wm, pial) = slab(8, 1.0);
        let bundle = compute_thickness_bundle(&gm, &wm, &pial, 1e-7, 5000).unwrap();
        for y in 0..12 {
            for x in 0..12 {
                let d = bundle.d_wm.at(x, y, 2);
                assert!(d <= 1.0 + 1e-9, "first-layer D_WM {d} too large");
            }
        }
    }

    #[test]
    fn shell_thickness_within_three_percent() {
        // radial streamlines: T equals the analytic shell gap r2 - r1
        let (r1, r2) = (8.0, 16.0);
        let (_, gm, wm_band, pial, r_of) = shell(48, r1, r2);
        let bundle = compute_thickness_bundle(&gm, &wm_band, &pial, 1e-7, 20000).unwrap();
        let expect = r2 - r1;
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for i in gm.indices() {
            let (x, y, z) = gm.grid.coords(i);
            let r = r_of(x, y, z);
            if r < r1 + 3.0 || r > r2 - 3.0 {
                continue; // interior: clear of the jagged band voxels
            }
            let t = bundle.t_gm.data[i];
            worst = worst.max((t - expect).abs() / expect);
            count += 1;
        }
        assert!(count > 1000);
        assert!(worst <= 0.03, "worst relative deviation {worst}");
    }

    #[test]
    fn halving_tol_barely_moves_thickness() {
        let (_, gm, wm, pial) = slab(8, 0.5);
        let a = compute_thickness_bundle(&gm, &wm, &pial, 1e-5, 20000).unwrap();
        let b = compute_thickness_bundle(&gm, &wm, &pial, 5e-6, 20000).unwrap();
        let mut worst: f64 = 0.0;
        for i in a.domain.indices() {
            worst = worst.max((a.t_gm.data[i] - b.t_gm.data[i]).abs());
        }
        assert!(worst <= 1e-5 * 10.0, "tol halving moved T by {worst} mm");
    }

    #[test]
    fn non_convergence_is_flagged_not_fatal() {
        // the shell's hop-ratio initial guess is not harmonic, so two
        // iterations cannot reach 1e-14
        let (_, gm, wm_band, pial, _) = shell(32, 5.0, 11.0);
        let sol = solve_laplace(&gm, &wm_band, &pial, 1e-14, 2).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
        assert!(sol.psi.data.iter().all(|v| v.is_finite()));
    }
}
