//! Discrete macroscopic fields of a single spatial cell.
//!
//! All sums run over the velocity lattice in storage order. Each `j₃` line is
//! summed plainly, and line totals are accumulated with Neumaier compensation,
//! so results are independent of thread count and accurate to a few ulps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_volume, VelocityGrid};
pub use crate::tensor::SymTensor3;

/// Densities at or below this value are treated as vacuum.
pub const RHO_FLOOR: f64 = 1e-30;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Macroscopic fields `(ρ, U, T, Θ, 𝒯_ν̃)` of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroFields {
    pub rho: f64,
    pub u: [f64; 3],
    pub temp: f64,
    /// Centered second moment per unit density.
    pub theta: SymTensor3,
    /// `(1−ν̃)·T·Id + ν̃·Θ`.
    pub tensor_nu: SymTensor3,
    pub nu_eff: f64,
}

/// Raw lattice sums `Σf`, `Σf·v`, `Σf·v⊗v` (without the `Δv³` factor).
#[derive(Debug, Clone, Copy)]
pub(crate) struct RawSums {
    pub zeroth: f64,
    pub first: [f64; 3],
    pub second: SymTensor3,
}

pub(crate) fn raw_sums(slice: &[f64], vgrid: &VelocityGrid) -> RawSums {
    let n = vgrid.n_per_axis();
    let axis = vgrid.axis_values();
    let mut s0 = CompensatedSum::default();
    let mut s1 = [CompensatedSum::default(); 3];
    let mut s2 = [CompensatedSum::default(); 6];
    for (k1, &v1) in axis.iter().enumerate() {
        for (k2, &v2) in axis.iter().enumerate() {
            let start = (k1 * n + k2) * n;
            let line = &slice[start..start + n];
            let (mut l0, mut l3, mut l33) = (0.0, 0.0, 0.0);
            for (&f, &v3) in line.iter().zip(&axis) {
                l0 += f;
                l3 += f * v3;
                l33 += f * v3 * v3;
            }
            s0.add(l0);
            s1[0].add(v1 * l0);
            s1[1].add(v2 * l0);
            s1[2].add(l3);
            s2[0].add(v1 * v1 * l0);
            s2[1].add(v2 * v2 * l0);
            s2[2].add(l33);
            s2[3].add(v1 * v2 * l0);
            s2[4].add(v1 * l3);
            s2[5].add(v2 * l3);
        }
    }
    RawSums {
        zeroth: s0.value(),
        first: s1.map(|s| s.value()),
        second: SymTensor3::new(
            s2[0].value(),
            s2[1].value(),
            s2[2].value(),
            s2[3].value(),
            s2[4].value(),
            s2[5].value(),
        ),
    }
}

/// Moments of one cell's velocity block with effective relaxation parameter `nu_eff`.
///
/// Second moments are centered as `Σf v⊗v/Σf − U⊗U`; `T` is `tr(Θ)/3`, so the
/// trace identity holds by construction.
pub fn compute_moments(slice: &[f64], vgrid: &VelocityGrid, nu_eff: f64) -> Result<MacroFields> {
    if slice.len() != vgrid.n_nodes() {
        return Err(Error::GridMismatch(format!(
            "velocity block has {} entries, lattice has {}",
            slice.len(),
            vgrid.n_nodes()
        )));
    }
    let sums = raw_sums(slice, vgrid);
    let all_finite = sums.zeroth.is_finite()
        && sums.first.iter().all(|v| v.is_finite())
        && sums.second.max_abs().is_finite();
    if !all_finite {
        if let Some((index, &value)) = slice.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index, value });
        }
        return Err(Error::NonFiniteInput {
            index: 0,
            value: f64::INFINITY,
        });
    }
    let rho = sums.zeroth * cell_volume(vgrid);
    if rho <= RHO_FLOOR {
        return Err(Error::VacuumCell {
            rho,
            floor: RHO_FLOOR,
        });
    }
    let inv = 1.0 / sums.zeroth;
    let u = sums.first.map(|m| m * inv);
    let theta = sums.second * inv - SymTensor3::outer(u);
    let temp = theta.trace() / 3.0;
    Ok(MacroFields {
        rho,
        u,
        temp,
        theta,
        tensor_nu: tensor_from_t_theta(temp, theta, nu_eff),
        nu_eff,
    })
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > -0.5 && nu < 1.0 {
        Ok(())
    } else {
        Err(Error::ParamOutOfRange {
            name: "nu",
            value: nu,
            reason: "must lie in (-0.5, 1)",
        })
    }
}

/// `ν̃ = κν/(κ+Δt)`.
pub fn effective_nu(kappa: f64, nu: f64, dt: f64) -> Result<f64> {
    check_nu(nu)?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::ParamOutOfRange {
            name: "kappa",
            value: kappa,
            reason: "must be positive",
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::ParamOutOfRange {
            name: "dt",
            value: dt,
            reason: "must be positive",
        });
    }
    Ok(kappa * nu / (kappa + dt))
}

/// Fixed collision frequency `A_ν = 1/(1−ν)`.
///
/// Accepts the closed endpoint `ν = −1/2`, where the frequency is still finite.
pub fn collision_frequency(nu: f64) -> Result<f64> {
    if (-0.5..1.0).contains(&nu) {
        Ok(1.0 / (1.0 - nu))
    } else {
        Err(Error::ParamOutOfRange {
            name: "nu",
            value: nu,
            reason: "must lie in [-0.5, 1)",
        })
    }
}

/// `(1−ν̃)·T·Id + ν̃·Θ`.
pub fn tensor_from_t_theta(temp: f64, theta: SymTensor3, nu_eff: f64) -> SymTensor3 {
    SymTensor3::scaled_identity((1.0 - nu_eff) * temp) + theta * nu_eff
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn maxwellian_slice(vg: &VelocityGrid, rho: f64, u: [f64; 3], t: f64) -> Vec<f64> {
        let norm = rho / (2.0 * std::f64::consts::PI * t).powf(1.5);
        (0..vg.n_nodes())
            .map(|k| {
                let v = vg.node(k);
                let d2: f64 = (0..3).map(|a| (v[a] - u[a]).powi(2)).sum();
                norm * (-d2 / (2.0 * t)).exp()
            })
            .collect()
    }

    /// Two-pass centered moments, straight from the defining sums.
    fn two_pass(slice: &[f64], vg: &VelocityGrid) -> (f64, [f64; 3], f64, SymTensor3) {
        let dv3 = cell_volume(vg);
        let rho: f64 = slice.iter().sum::<f64>() * dv3;
        let mut m = [0.0; 3];
        for (k, f) in slice.iter().enumerate() {
            let v = vg.node(k);
            for a in 0..3 {
                m[a] += f * v[a] * dv3;
            }
        }
        let u = m.map(|x| x / rho);
        let mut theta = SymTensor3::ZERO;
        let mut e = 0.0;
        for (k, f) in slice.iter().enumerate() {
            let v = vg.node(k);
            let d = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
            theta = theta + SymTensor3::outer(d) * (f * dv3 / rho);
            e += f * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) * dv3;
        }
        (rho, u, e / (3.0 * rho), theta)
    }

    #[test]
    fn single_point_mass() {
        let vg = VelocityGrid::new(1, 0.5).unwrap();
        let mut slice = vec![0.0; 27];
        slice[13] = 1.0;
        let m = compute_moments(&slice, &vg, 0.3).unwrap();
        assert_eq!(m.rho, 0.125);
        assert_eq!(m.u, [0.0; 3]);
        assert_eq!(m.temp, 0.0);
        assert_eq!(m.theta, SymTensor3::ZERO);
    }

    #[test]
    fn two_point_symmetry() {
        let vg = VelocityGrid::new(1, 1.0).unwrap();
        let mut slice = vec![0.0; 27];
        slice[vg.flat_index([1, 0, 0]).unwrap()] = 1.0;
        slice[vg.flat_index([-1, 0, 0]).unwrap()] = 1.0;
        let m = compute_moments(&slice, &vg, 0.0).unwrap();
        assert_eq!(m.u, [0.0; 3]);
        assert_eq!(m.theta, SymTensor3::diag(1.0, 0.0, 0.0));
        assert!((m.temp - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn vacuum_and_non_finite() {
        let vg = VelocityGrid::new(1, 1.0).unwrap();
        let slice = vec![0.0; 27];
        assert!(matches!(
            compute_moments(&slice, &vg, 0.0),
            Err(Error::VacuumCell { .. })
        ));
        let mut bad = vec![1.0; 27];
        bad[5] = f64::NAN;
        assert!(matches!(
            compute_moments(&bad, &vg, 0.0),
            Err(Error::NonFiniteInput { index: 5, .. })
        ));
        assert!(matches!(
            compute_moments(&bad[..26], &vg, 0.0),
            Err(Error::GridMismatch(_))
        ));
    }

    /// Second-moment mass lost per axis when a unit Gaussian is cut at ±a:
    /// `2(aφ(a) + Q(a))`, with `Q` integrated numerically.
    fn axis_second_moment_tail(a: f64) -> f64 {
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let (hi, n) = (a + 40.0, 200_000);
        let h = (hi - a) / n as f64;
        let mut q = phi(a) + phi(hi);
        for k in 1..n {
            q += if k % 2 == 1 { 4.0 } else { 2.0 } * phi(a + k as f64 * h);
        }
        q *= h / 3.0;
        2.0 * (a * phi(a) + q)
    }

    #[test]
    fn lattice_maxwellian_moments() {
        let vg = VelocityGrid::new(16, 0.375).unwrap();
        let slice = maxwellian_slice(&vg, 1.0, [0.0; 3], 1.0);
        let m = compute_moments(&slice, &vg, 0.0).unwrap();

        // High-resolution oracle: same lattice spacing scale, much larger box.
        let fine = VelocityGrid::new(64, 0.1).unwrap();
        let fine_m = compute_moments(&maxwellian_slice(&fine, 1.0, [0.0; 3], 1.0), &fine, 0.0)
            .unwrap();
        assert!((fine_m.rho - 1.0).abs() < 1e-8);

        assert!((m.rho - 1.0).abs() < 1e-8, "rho {}", m.rho);
        assert!((m.rho - fine_m.rho).abs() < 1e-8);
        for a in 0..3 {
            assert!(m.u[a].abs() < 1e-8);
        }
        // Cutting the box at v_max = 6 removes about 7e-8 of the second
        // moment, so T is pinned to the truncation estimate instead of 1e-8.
        let tail = axis_second_moment_tail(vg.v_max() + 0.5 * vg.dv());
        let deficit = 1.0 - m.temp;
        assert!(deficit > 0.0 && deficit < 1.5 * axis_second_moment_tail(vg.v_max()));
        assert!(deficit > 0.5 * tail, "deficit {deficit:e}, tail {tail:e}");
    }

    #[test]
    fn raw_and_centered_agree_on_maxwellians() {
        let vg = VelocityGrid::new(16, 0.375).unwrap();
        for (rho, u, t) in [
            (1.0, [0.0, 0.0, 0.0], 1.0),
            (0.7, [0.3, -0.2, 0.1], 0.8),
            (1.3, [-0.5, 0.4, 0.0], 0.6),
        ] {
            let slice = maxwellian_slice(&vg, rho, u, t);
            let m = compute_moments(&slice, &vg, 0.0).unwrap();
            let (r2, u2, t2, th2) = two_pass(&slice, &vg);
            assert!((m.rho - r2).abs() <= 1e-12 * r2);
            for a in 0..3 {
                assert!((m.u[a] - u2[a]).abs() <= 1e-12);
            }
            assert!((m.temp - t2).abs() <= 1e-12 * t2);
            assert!((m.theta - th2).max_abs() <= 1e-12 * th2.max_abs());
        }
    }

    #[test]
    fn effective_nu_examples() {
        assert_eq!(effective_nu(1.0, 0.5, 1.0).unwrap(), 0.25);
        assert_eq!(effective_nu(3.7, 0.0, 0.2).unwrap(), 0.0);
        let v = effective_nu(1e6, -0.4, 1e-3).unwrap();
        assert!((v + 0.4).abs() < 1e-9);
        assert!(effective_nu(1.0, 1.0, 0.1).is_err());
        assert!(effective_nu(1.0, -0.5, 0.1).is_err());
        assert!(effective_nu(0.0, 0.1, 0.1).is_err());
        assert!(effective_nu(1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn collision_frequency_examples() {
        assert_eq!(collision_frequency(0.0).unwrap(), 1.0);
        assert!((collision_frequency(-0.5).unwrap() - 2.0 / 3.0).abs() < 1e-16);
        assert_eq!(collision_frequency(0.5).unwrap(), 2.0);
        assert!(collision_frequency(1.0).is_err());
        assert!(collision_frequency(-0.6).is_err());
    }

    #[test]
    fn tensor_examples() {
        let theta = SymTensor3::new(2.0, 0.3, 0.9, 0.1, -0.2, 0.05);
        assert_eq!(
            tensor_from_t_theta(1.5, theta, 0.0),
            SymTensor3::scaled_identity(1.5)
        );
        for nu in [-0.4, 0.0, 0.3, 0.9] {
            let iso = SymTensor3::scaled_identity(0.8);
            let t = tensor_from_t_theta(0.8, iso, nu);
            assert!((t - iso).max_abs() < 1e-15);
        }
        assert_eq!(
            tensor_from_t_theta(1.0, SymTensor3::diag(2.0, 0.5, 0.5), 0.25),
            SymTensor3::diag(1.25, 0.875, 0.875)
        );
    }

    fn random_slice(vg: &VelocityGrid, seed: &[f64]) -> Vec<f64> {
        (0..vg.n_nodes())
            .map(|k| 0.01 + seed[k % seed.len()].abs())
            .collect()
    }

    proptest! {
        #[test]
        fn lemma_sandwiches_hold(
            seed in prop::collection::vec(0.0f64..2.0, 7..40),
            nu_eff in -0.49f64..0.99,
        ) {
            let vg = VelocityGrid::new(2, 0.7).unwrap();
            let slice = random_slice(&vg, &seed);
            let m = compute_moments(&slice, &vg, nu_eff).unwrap();
            let lo = (1.0 - nu_eff).min(1.0 + 2.0 * nu_eff);
            let hi = (1.0 - nu_eff).max(1.0 + 2.0 * nu_eff);
            let slack = 1e-10 * m.temp;
            let e = m.tensor_nu.eigenvalues();
            prop_assert!(e[0] >= lo * m.temp - slack);
            prop_assert!(e[2] <= hi * m.temp + slack);
            let det = m.tensor_nu.det();
            let t3 = m.temp.powi(3);
            prop_assert!(det >= lo.powi(3) * t3 * (1.0 - 1e-10));
            prop_assert!(det <= hi.powi(3) * t3 * (1.0 + 1e-10));
            prop_assert!(m.theta.min_eigenvalue() >= -1e-12 * m.temp);
        }

        #[test]
        fn trace_identity(seed in prop::collection::vec(0.0f64..2.0, 7..40)) {
            let vg = VelocityGrid::new(2, 0.5).unwrap();
            let slice = random_slice(&vg, &seed);
            let m = compute_moments(&slice, &vg, 0.2).unwrap();
            let (rho, u, _, _) = two_pass(&slice, &vg);
            let dv3 = cell_volume(&vg);
            let energy: f64 = slice.iter().enumerate().map(|(k, f)| {
                let v = vg.node(k);
                f * ((v[0]-u[0]).powi(2) + (v[1]-u[1]).powi(2) + (v[2]-u[2]).powi(2)) * dv3
            }).sum();
            prop_assert!((3.0 * rho * m.temp - energy).abs() <= 1e-12 * energy);
            prop_assert!((m.theta.trace() - 3.0 * m.temp).abs() <= 10.0 * f64::EPSILON * m.theta.trace());
        }

        #[test]
        fn galilean_lattice_shift(
            seed in prop::collection::vec(0.0f64..2.0, 7..40),
            shift in prop::array::uniform3(-2i64..=2),
        ) {
            // Support confined to |j| <= 2 inside a J = 4 box so shifts stay inside.
            let small = VelocityGrid::new(2, 0.5).unwrap();
            let big = VelocityGrid::new(4, 0.5).unwrap();
            let base = random_slice(&small, &seed);
            let mut a = vec![0.0; big.n_nodes()];
            let mut b = vec![0.0; big.n_nodes()];
            for (k, &f) in base.iter().enumerate() {
                let j = small.lattice_index(k);
                a[big.flat_index(j).unwrap()] = f;
                let js = [j[0] + shift[0], j[1] + shift[1], j[2] + shift[2]];
                b[big.flat_index(js).unwrap()] = f;
            }
            let ma = compute_moments(&a, &big, 0.0).unwrap();
            let mb = compute_moments(&b, &big, 0.0).unwrap();
            for ax in 0..3 {
                let expect = ma.u[ax] + shift[ax] as f64 * 0.5;
                prop_assert!((mb.u[ax] - expect).abs() < 1e-12);
            }
            prop_assert!((ma.temp - mb.temp).abs() < 1e-11);
            prop_assert!((ma.theta - mb.theta).max_abs() < 1e-11);
        }
    }
}
