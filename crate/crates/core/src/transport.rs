//! Semi-Lagrangian reconstruction at the feet of the characteristics.
//!
//! For velocity plane `j₁` the foot of node `i` is `x_i − v_{j₁}Δt`. In cell
//! units this is `i − θ` with `θ = v_{j₁}Δt/Δx`, so the left neighbour is
//! `i + floor(−θ)` and the weight of the right neighbour is `frac(−θ)`. Both
//! depend only on `j₁`, which is why a single table serves every cell and
//! every step. Displacements of any size are allowed; there is no CFL bound.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{DistributionGrid, SpatialGrid, VelocityGrid};

/// Foot data for one velocity plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootEntry {
    /// Offset of the left interpolation node relative to the arrival node.
    pub s_offset: i64,
    /// Weight of the right node, in `[0, 1)`.
    pub alpha: f64,
}

/// Precomputed feet for every `j₁`, valid for all cells and all steps.
#[derive(Debug, Clone, PartialEq)]
pub struct FootTable {
    entries: Vec<FootEntry>,
    spatial: SpatialGrid,
    velocity: VelocityGrid,
    dt: f64,
}

/// Foot entry for a displacement of `theta` cells.
pub fn foot_entry(theta: f64) -> FootEntry {
    let back = -theta;
    let mut s_offset = back.floor();
    let mut alpha = back - s_offset;
    // frac(-θ) can round up to 1 for tiny negative arguments.
    if alpha >= 1.0 {
        s_offset += 1.0;
        alpha = 0.0;
    }
    FootEntry {
        s_offset: s_offset as i64,
        alpha,
    }
}

pub fn build_foot_table(vgrid: &VelocityGrid, dt: f64, sgrid: &SpatialGrid) -> FootTable {
    assert!(dt > 0.0, "time step must be positive");
    let ratio = dt / sgrid.dx();
    let entries = vgrid
        .axis_values()
        .into_iter()
        .map(|v| foot_entry(v * ratio))
        .collect();
    FootTable {
        entries,
        spatial: *sgrid,
        velocity: *vgrid,
        dt,
    }
}

impl FootTable {
    /// Entry for axis position `k` (lattice index `k − J`).
    pub fn entry(&self, k: usize) -> FootEntry {
        self.entries[k]
    }

    pub fn entries(&self) -> &[FootEntry] {
        &self.entries
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn spatial(&self) -> &SpatialGrid {
        &self.spatial
    }

    pub fn velocity(&self) -> &VelocityGrid {
        &self.velocity
    }

    /// Foot of whole-line node `i` for axis position `k`: the left node `s(i, j)`
    /// (unwrapped) and the right-node weight.
    pub fn foot_of(&self, i: i64, k: usize) -> (i64, f64) {
        let e = self.entries[k];
        (i + e.s_offset, e.alpha)
    }

    fn check(&self, f: &DistributionGrid) -> Result<()> {
        if *f.spatial() != self.spatial || *f.velocity() != self.velocity {
            return Err(Error::GridMismatch(
                "foot table was built for different grids".into(),
            ));
        }
        Ok(())
    }
}

/// Linear interpolation `α·right + (1−α)·left`, kept inside `[min, max]` of the pair.
#[inline]
pub(crate) fn interpolate(left: f64, right: f64, alpha: f64) -> f64 {
    let value = alpha * right + (1.0 - alpha) * left;
    // roundoff can push the affine combination one ulp outside the hull
    value.clamp(left.min(right), left.max(right))
}

/// Reconstructs `f̃ⁿ` from `fⁿ`.
pub fn reconstruct(f: &DistributionGrid, table: &FootTable) -> Result<DistributionGrid> {
    let mut out = DistributionGrid::zeros(*f.spatial(), *f.velocity());
    reconstruct_into(f, table, &mut out)?;
    Ok(out)
}

/// As [`reconstruct`], writing into a caller-owned grid of the same shape.
pub fn reconstruct_into(
    f: &DistributionGrid,
    table: &FootTable,
    out: &mut DistributionGrid,
) -> Result<()> {
    table.check(f)?;
    if !f.same_shape(out) {
        return Err(Error::GridMismatch("output grid shape differs".into()));
    }
    let n = f.velocity().n_per_axis();
    let plane = n * n;
    let n_v = f.velocity().n_nodes();
    out.set_time_index(f.time_index());
    out.values_mut()
        .par_chunks_mut(n_v)
        .enumerate()
        .for_each(|(i, cell)| {
            for (k, dst) in cell.chunks_exact_mut(plane).enumerate() {
                let (s, alpha) = table.foot_of(i as i64, k);
                let left = &f.cell(s)[k * plane..(k + 1) * plane];
                if alpha == 0.0 {
                    dst.copy_from_slice(left);
                    continue;
                }
                let right = &f.cell(s + 1)[k * plane..(k + 1) * plane];
                for ((d, &l), &r) in dst.iter_mut().zip(left).zip(right) {
                    *d = interpolate(l, r, alpha);
                }
            }
        });
    Ok(())
}

/// A phase-space density that can be evaluated at arbitrary `(x, v)`.
pub trait PhaseSpaceDensity: Sync {
    fn density(&self, x: f64, v: [f64; 3]) -> f64;
}

impl<F> PhaseSpaceDensity for F
where
    F: Fn(f64, [f64; 3]) -> f64 + Sync,
{
    fn density(&self, x: f64, v: [f64; 3]) -> f64 {
        self(x, v)
    }
}

/// Exact initial reconstruction `f̃⁰_{i,j} = f₀(x_i − v_{j₁}Δt, v_j)`.
pub fn reconstruct_initial(
    f0: &dyn PhaseSpaceDensity,
    sgrid: &SpatialGrid,
    vgrid: &VelocityGrid,
    dt: f64,
) -> DistributionGrid {
    DistributionGrid::from_fn(*sgrid, *vgrid, |x, v| f0.density(x - v[0] * dt, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grids;
    use std::f64::consts::PI;

    #[test]
    fn zero_velocity_is_identity() {
        let e = foot_entry(0.0);
        assert_eq!(e, FootEntry { s_offset: 0, alpha: 0.0 });
        let e = foot_entry(-0.0);
        assert_eq!(e.s_offset, 0);
        assert_eq!(e.alpha, 0.0);
    }

    #[test]
    fn integer_displacement_is_pure_shift() {
        // v Δt = 2Δx exactly: Δv = 1, Δt = 0.5, Δx = 0.25, j₁ = 1.
        let (s, v) = make_grids(4, 1, 1.0).unwrap();
        let t = build_foot_table(&v, 0.5, &s);
        assert_eq!(t.entry(2), FootEntry { s_offset: -2, alpha: 0.0 });
        assert_eq!(t.entry(0), FootEntry { s_offset: 2, alpha: 0.0 });
    }

    #[test]
    fn half_cell_displacement() {
        let (s, v) = make_grids(8, 1, 1.0).unwrap();
        let t = build_foot_table(&v, 0.0625, &s);
        let e = t.entry(2);
        assert_eq!(e, FootEntry { s_offset: -1, alpha: 0.5 });
        // Def. check: linear data f(x) = x is reproduced exactly at the foot.
        let i = 5i64;
        let (sn, alpha) = t.foot_of(i, 2);
        let foot = s.x(i) - 1.0 * 0.0625;
        let value = alpha * s.x(sn + 1) + (1.0 - alpha) * s.x(sn);
        assert!((value - foot).abs() < 1e-15);
        assert!(foot >= s.x(sn) && foot < s.x(sn + 1));
    }

    #[test]
    fn negative_velocity_foot() {
        // θ = −0.3: the foot lies 0.3 cells to the right.
        let e = foot_entry(-0.3);
        assert_eq!(e.s_offset, 0);
        assert!((e.alpha - 0.3).abs() < 1e-15);
        let e = foot_entry(2.75);
        assert_eq!(e.s_offset, -3);
        assert!((e.alpha - 0.25).abs() < 1e-15);
    }

    #[test]
    fn alpha_never_reaches_one() {
        let e = foot_entry(1e-18);
        assert!(e.alpha < 1.0);
        assert_eq!((e.s_offset, e.alpha), (0, 0.0));
    }

    #[test]
    fn constants_are_reproduced() {
        let (s, v) = make_grids(16, 2, 0.7).unwrap();
        let f = DistributionGrid::from_fn(s, v, |_, w| 1.0 + w[0] * w[0] + 0.1 * w[2]);
        let t = build_foot_table(&v, 0.173, &s);
        let ft = reconstruct(&f, &t).unwrap();
        assert_eq!(ft.values(), f.values());
    }

    #[test]
    fn sine_midpoint_average() {
        let n = 32;
        let (s, v) = make_grids(n, 1, 1.0).unwrap();
        let dx = s.dx();
        // v = 1 and Δt = Δx/2 puts the foot midway between nodes.
        let t = build_foot_table(&v, 0.5 * dx, &s);
        let f = DistributionGrid::from_fn(s, v, |x, _| 2.0 + (2.0 * PI * x).sin());
        let ft = reconstruct(&f, &t).unwrap();
        let bound = dx * dx * (2.0 * PI).powi(2) / 8.0;
        let plane = v.flat_index([1, 0, 0]).unwrap();
        for i in 0..n as i64 {
            let got = ft.get(i, plane);
            let avg = 0.5 * (f.get(i - 1, plane) + f.get(i, plane));
            assert!((got - avg).abs() < 1e-15);
            let exact = 2.0 + (2.0 * PI * (s.x(i) - 0.5 * dx)).sin();
            assert!((got - exact).abs() <= bound);
        }
        let zero = v.flat_index([0, 0, 1]).unwrap();
        for i in 0..n as i64 {
            assert_eq!(ft.get(i, zero), f.get(i, zero));
        }
    }

    #[test]
    fn large_displacements_wrap() {
        let (s, v) = make_grids(8, 2, 1.5).unwrap();
        // θ = 2·1.5·0.4·8 = 9.6 cells for the fastest plane.
        let t = build_foot_table(&v, 0.4, &s);
        let f = DistributionGrid::from_fn(s, v, |x, _| 1.0 + x);
        let ft = reconstruct(&f, &t).unwrap();
        for k in 0..v.n_per_axis() {
            let (sn, alpha) = t.foot_of(3, k);
            let flat = k * 25;
            let expect = alpha * f.get(sn + 1, flat) + (1.0 - alpha) * f.get(sn, flat);
            assert!((ft.get(3, flat) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn mismatched_grids_rejected() {
        let (s, v) = make_grids(8, 2, 1.5).unwrap();
        let t = build_foot_table(&v, 0.4, &s);
        let (s2, _) = make_grids(9, 2, 1.5).unwrap();
        let f = DistributionGrid::zeros(s2, v);
        assert!(matches!(reconstruct(&f, &t), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn exact_initial_sampling() {
        let (s, v) = make_grids(16, 2, 0.5).unwrap();
        let m = |w: [f64; 3]| (-(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]) / 2.0).exp();
        let g = |x: f64| 1.0 + 0.3 * (2.0 * PI * x).cos();
        let dt = 0.03;
        let sep = move |x: f64, w: [f64; 3]| g(x) * m(w);
        let ft = reconstruct_initial(&sep, &s, &v, dt);
        for i in 0..16 {
            for flat in 0..v.n_nodes() {
                let w = v.node(flat);
                assert_eq!(ft.get(i, flat), g(s.x(i) - w[0] * dt) * m(w));
            }
        }
        // x-independent data: equals plain sampling
        let flat_f = |_: f64, w: [f64; 3]| m(w);
        let a = reconstruct_initial(&flat_f, &s, &v, dt);
        let b = DistributionGrid::from_fn(s, v, flat_f);
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn exact_and_lattice_reconstruction_agree_to_second_order() {
        let m = |w: [f64; 3]| (-(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]) / 2.0).exp();
        let g = |x: f64| 1.0 + 0.3 * (2.0 * PI * x).sin();
        let f0 = move |x: f64, w: [f64; 3]| g(x) * m(w);
        let weights_q = 6.0;
        let mut prev = None;
        for n in [16usize, 32, 64] {
            let (s, v) = make_grids(n, 4, 0.75).unwrap();
            let dt = 0.37 / n as f64;
            let lattice = reconstruct(
                &DistributionGrid::from_fn(s, v, f0),
                &build_foot_table(&v, dt, &s),
            )
            .unwrap();
            let exact = reconstruct_initial(&f0, &s, &v, dt);
            let w = v.weights(weights_q);
            let err = lattice
                .values()
                .iter()
                .zip(exact.values())
                .enumerate()
                .map(|(k, (a, b))| (a - b).abs() * w[k % v.n_nodes()])
                .fold(0.0, f64::max);
            // |g''| ≤ 0.3(2π)², interpolation error ≤ Δx²/8 · max|f_xx|.
            let bound = s.dx().powi(2) / 8.0 * 0.3 * (2.0 * PI).powi(2)
                * (0..v.n_nodes()).map(|k| m(v.node(k)) * w[k]).fold(0.0, f64::max);
            assert!(err <= bound, "n={n}: {err:e} > {bound:e}");
            if let Some(p) = prev {
                let ratio: f64 = p / err;
                assert!(ratio > 3.0, "ratio {ratio}");
            }
            prev = Some(err);
        }
    }
}
