//! Time stepping for the semi-explicit scheme.
//!
//! One step is: reconstruct `f̃ⁿ` at the characteristic feet, take the moments
//! of `f̃ⁿ` with `ν̃ = κν/(κ+Δt)`, build the ellipsoidal Gaussian from them and
//! blend
//!
//! ```text
//! fⁿ⁺¹ = κ/(κ+A_νΔt) · f̃ⁿ + A_νΔt/(κ+A_νΔt) · M_ν̃(f̃ⁿ)
//! ```
//!
//! The relaxation coefficient carries `A_ν` while `ν̃` does not; the tensor
//! update is where `A_ν(1−ν) = 1` cancels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{conserved_totals, tail_mass_isotropic_bound, weighted_sup_norm, Totals};
use crate::error::{Error, Result};
use crate::gaussian::{for_each_node, prepare};
use crate::grid::{DistributionGrid, SpatialGrid, VelocityGrid};
use crate::moments::{compute_moments, effective_nu, MacroFields};
use crate::transport::{
    build_foot_table, reconstruct, reconstruct_initial, reconstruct_into, FootTable,
    PhaseSpaceDensity,
};

/// Scheme parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Knudsen number.
    pub kappa: f64,
    pub nu: f64,
    pub dt: f64,
    /// Exponent of the `(1+|v|)^q` weight.
    pub q_weight: f64,
    pub n_steps: usize,
}

impl SchemeParams {
    pub fn new(kappa: f64, nu: f64, dt: f64, q_weight: f64, n_steps: usize) -> Result<Self> {
        let p = Self {
            kappa,
            nu,
            dt,
            q_weight,
            n_steps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        effective_nu(self.kappa, self.nu, self.dt)?;
        if !(self.q_weight > 5.0 && self.q_weight.is_finite()) {
            return Err(Error::ParamOutOfRange {
                name: "q_weight",
                value: self.q_weight,
                reason: "must exceed 5",
            });
        }
        Ok(())
    }

    /// `A_ν = 1/(1−ν)`.
    pub fn a_nu(&self) -> f64 {
        1.0 / (1.0 - self.nu)
    }

    /// `ν̃ = κν/(κ+Δt)`.
    pub fn nu_eff(&self) -> f64 {
        self.kappa * self.nu / (self.kappa + self.dt)
    }

    /// Relaxation weight `A_νΔt/(κ+A_νΔt)`.
    pub fn blend(&self) -> f64 {
        let a_dt = self.a_nu() * self.dt;
        a_dt / (self.kappa + a_dt)
    }

    /// Transport weight, `1 − blend`, so the two always sum to one.
    pub fn keep(&self) -> f64 {
        1.0 - self.blend()
    }
}

/// Per-cell by-products of a relaxation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRelaxation {
    /// Moments of `f̃ⁿ` for this cell.
    pub fields: MacroFields,
    pub tensor_min_eig: f64,
    pub tensor_max_eig: f64,
    pub tensor_det: f64,
    /// `max_j f̃_{i,j}(1+|v_j|)^q`.
    pub reconstructed_norm: f64,
    /// `max_j M_{i,j}(1+|v_j|)^q`.
    pub gaussian_norm: f64,
    /// Gaussian mass outside the velocity box.
    pub tail_mass: f64,
}

/// Totals and extrema after a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Index of the state this report describes.
    pub step: usize,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    pub min_value: f64,
    pub max_weighted_norm: f64,
    /// Minimum eigenvalue of `𝒯_ν̃` over all cells.
    pub tensor_min_eig: f64,
    /// `‖M_ν̃(f̃)‖_q / ‖f̃‖_q`.
    pub gaussian_ratio: f64,
    /// `‖f̃‖_q` of the reconstruction that produced this state.
    pub reconstructed_norm: f64,
    pub tail_mass_max: f64,
}

/// Everything an observer can see about one step.
pub struct StepTrace<'a> {
    pub step: usize,
    pub params: &'a SchemeParams,
    pub previous: &'a DistributionGrid,
    pub reconstructed: &'a DistributionGrid,
    pub next: &'a DistributionGrid,
    pub cells: &'a [CellRelaxation],
    pub report: &'a StepReport,
}

/// Final state plus the per-step reports.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_state: DistributionGrid,
    pub reports: Vec<StepReport>,
}

/// Steps a fixed configuration; owns the foot table and the weight array.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: SchemeParams,
    table: FootTable,
    weights: Vec<f64>,
}

impl Stepper {
    pub fn new(params: SchemeParams, spatial: &SpatialGrid, velocity: &VelocityGrid) -> Result<Self> {
        params.validate()?;
        Self::with_table(params, build_foot_table(velocity, params.dt, spatial))
    }

    pub fn with_table(params: SchemeParams, table: FootTable) -> Result<Self> {
        params.validate()?;
        if table.dt() != params.dt {
            return Err(Error::GridMismatch(format!(
                "foot table built for dt={}, params have dt={}",
                table.dt(),
                params.dt
            )));
        }
        let weights = table.velocity().weights(params.q_weight);
        Ok(Self {
            params,
            table,
            weights,
        })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn table(&self) -> &FootTable {
        &self.table
    }

    /// `(1+|v_j|)^q` in storage order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Relaxes a reconstructed grid into `out`; returns the per-cell by-products.
    pub fn relax_into(
        &self,
        tilde: &DistributionGrid,
        out: &mut DistributionGrid,
    ) -> Result<Vec<CellRelaxation>> {
        if !tilde.same_shape(out) || *tilde.velocity() != *self.table.velocity() {
            return Err(Error::GridMismatch("relaxation buffers differ in shape".into()));
        }
        let vg = *tilde.velocity();
        let n_v = vg.n_nodes();
        let nu_eff = self.params.nu_eff();
        let relax = self.params.blend();
        let keep = 1.0 - relax;
        let weights = &self.weights;
        let results: Vec<Result<CellRelaxation>> = out
            .values_mut()
            .par_chunks_mut(n_v)
            .zip(tilde.values().par_chunks(n_v))
            .enumerate()
            .map(|(i, (dst, src))| {
                relax_cell(src, dst, &vg, nu_eff, keep, relax, weights).map_err(|e| e.in_cell(i))
            })
            .collect();
        out.set_time_index(tilde.time_index() + 1);
        results.into_iter().collect()
    }

    fn report(&self, step: usize, next: &DistributionGrid, cells: &[CellRelaxation]) -> StepReport {
        let totals: Totals = conserved_totals(next);
        let fold = |f: fn(&CellRelaxation) -> f64, init: f64, op: fn(f64, f64) -> f64| {
            cells.iter().map(f).fold(init, op)
        };
        let reconstructed_norm = fold(|c| c.reconstructed_norm, 0.0, f64::max);
        StepReport {
            step,
            mass: totals.mass,
            momentum: totals.momentum,
            energy: totals.energy,
            min_value: next.min_value(),
            max_weighted_norm: weighted_sup_norm(next, self.params.q_weight),
            tensor_min_eig: fold(|c| c.tensor_min_eig, f64::INFINITY, f64::min),
            gaussian_ratio: fold(|c| c.gaussian_norm, 0.0, f64::max) / reconstructed_norm,
            reconstructed_norm,
            tail_mass_max: fold(|c| c.tail_mass, 0.0, f64::max),
        }
    }

    /// One step from `f`.
    pub fn step(&self, f: &DistributionGrid) -> Result<(DistributionGrid, StepReport)> {
        let tilde = reconstruct(f, &self.table)?;
        let mut next = DistributionGrid::zeros(*f.spatial(), *f.velocity());
        let cells = self.relax_into(&tilde, &mut next)?;
        let report = self.report(f.time_index() + 1, &next, &cells);
        Ok((next, report))
    }

    /// Runs `n_steps` steps from `f0`.
    ///
    /// When `initial` is given, the first reconstruction samples it exactly at
    /// the feet instead of interpolating `f0`.
    pub fn run(
        &self,
        f0: &DistributionGrid,
        initial: Option<&dyn PhaseSpaceDensity>,
        observer: &mut dyn FnMut(&StepTrace),
    ) -> Result<RunOutcome> {
        f0.validate()?;
        let mut prev = f0.clone();
        let mut tilde = DistributionGrid::zeros(*f0.spatial(), *f0.velocity());
        let mut next = tilde.clone();
        let mut reports = Vec::with_capacity(self.params.n_steps);
        for n in 0..self.params.n_steps {
            let step = prev.time_index() + 1;
            let attempt = (|| {
                match (n, initial) {
                    (0, Some(ic)) => {
                        tilde = reconstruct_initial(ic, f0.spatial(), f0.velocity(), self.params.dt);
                        tilde.set_time_index(f0.time_index());
                    }
                    _ => reconstruct_into(&prev, &self.table, &mut tilde)?,
                }
                self.relax_into(&tilde, &mut next)
            })();
            let cells = attempt.map_err(|e| e.at_step(step))?;
            let report = self.report(step, &next, &cells);
            observer(&StepTrace {
                step,
                params: &self.params,
                previous: &prev,
                reconstructed: &tilde,
                next: &next,
                cells: &cells,
                report: &report,
            });
            reports.push(report);
            std::mem::swap(&mut prev, &mut next);
        }
        Ok(RunOutcome {
            final_state: prev,
            reports,
        })
    }
}

fn relax_cell(
    src: &[f64],
    dst: &mut [f64],
    vg: &VelocityGrid,
    nu_eff: f64,
    keep: f64,
    relax: f64,
    weights: &[f64],
) -> Result<CellRelaxation> {
    let fields = compute_moments(src, vg, nu_eff)?;
    let gauss = prepare(&fields)?;
    let mut gaussian_norm = 0.0_f64;
    let mut reconstructed_norm = 0.0_f64;
    let mut finite = true;
    for_each_node(&gauss, vg, |k, m| {
        let ft = src[k];
        let value = (keep * ft + relax * m).clamp(ft.min(m), ft.max(m));
        finite &= value.is_finite();
        dst[k] = value;
        gaussian_norm = gaussian_norm.max(m * weights[k]);
        reconstructed_norm = reconstructed_norm.max(ft * weights[k]);
    });
    if !finite {
        let index = dst.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::NonFiniteState { index });
    }
    Ok(CellRelaxation {
        fields,
        tensor_min_eig: gauss.min_eigenvalue,
        tensor_max_eig: gauss.max_eigenvalue,
        tensor_det: gauss.det_tensor,
        reconstructed_norm,
        gaussian_norm,
        tail_mass: tail_mass_isotropic_bound(fields.rho, fields.u, gauss.max_eigenvalue, vg.v_max()),
    })
}

/// One step of the scheme.
pub fn step(
    f: &DistributionGrid,
    params: &SchemeParams,
    table: &FootTable,
) -> Result<(DistributionGrid, StepReport)> {
    Stepper::with_table(*params, table.clone())?.step(f)
}

/// `params.n_steps` steps from `f0`, calling `observer` after each one.
pub fn run(
    f0: &DistributionGrid,
    params: &SchemeParams,
    table: &FootTable,
    initial: Option<&dyn PhaseSpaceDensity>,
    observer: &mut dyn FnMut(&StepTrace),
) -> Result<RunOutcome> {
    Stepper::with_table(*params, table.clone())?.run(f0, initial, observer)
}

/// Classical BGK step coded without the tensor machinery, for use as a test oracle.
///
/// Feet are located from physical positions, moments are two-pass sums and
/// the equilibrium is the scalar Maxwellian. Only `ν = 0` is accepted.
pub fn step_bgk_reference(
    f: &DistributionGrid,
    params: &SchemeParams,
    table: &FootTable,
) -> Result<DistributionGrid> {
    params.validate()?;
    if params.nu != 0.0 {
        return Err(Error::ParamOutOfRange {
            name: "nu",
            value: params.nu,
            reason: "the BGK reference step requires nu = 0",
        });
    }
    if *f.spatial() != *table.spatial() || *f.velocity() != *table.velocity() {
        return Err(Error::GridMismatch("foot table was built for different grids".into()));
    }
    let sg = *f.spatial();
    let vg = *f.velocity();
    let n_v = vg.n_nodes();
    let dx = sg.dx();
    let dt = params.dt;
    let dv = vg.dv();
    let keep = params.kappa / (params.kappa + dt);
    let nodes: Vec<[f64; 3]> = (0..n_v).map(|k| vg.node(k)).collect();

    let mut out = DistributionGrid::zeros(sg, vg);
    let results: Vec<Result<()>> = out
        .values_mut()
        .par_chunks_mut(n_v)
        .enumerate()
        .map(|(i, cell)| {
            let xi = i as f64 * dx;
            for (k, value) in cell.iter_mut().enumerate() {
                let foot = xi - nodes[k][0] * dt;
                let s = (foot / dx).floor();
                let w = foot / dx - s;
                let s = s as i64;
                *value = w * f.get(s + 1, k) + (1.0 - w) * f.get(s, k);
            }
            let dv3 = dv * dv * dv;
            let rho: f64 = cell.iter().sum::<f64>() * dv3;
            if !(rho > crate::moments::RHO_FLOOR) {
                return Err(Error::VacuumCell {
                    rho,
                    floor: crate::moments::RHO_FLOOR,
                }
                .in_cell(i));
            }
            let mut u = [0.0; 3];
            for (value, v) in cell.iter().zip(&nodes) {
                for a in 0..3 {
                    u[a] += value * v[a] * dv3;
                }
            }
            let u = u.map(|m| m / rho);
            let mut energy = 0.0;
            for (value, v) in cell.iter().zip(&nodes) {
                let c2 = (v[0] - u[0]).powi(2) + (v[1] - u[1]).powi(2) + (v[2] - u[2]).powi(2);
                energy += value * c2 * dv3;
            }
            let temp = energy / (3.0 * rho);
            let norm = rho / (2.0 * std::f64::consts::PI * temp).powf(1.5);
            for (value, v) in cell.iter_mut().zip(&nodes) {
                let c2 = (v[0] - u[0]).powi(2) + (v[1] - u[1]).powi(2) + (v[2] - u[2]).powi(2);
                let m = norm * (-c2 / (2.0 * temp)).exp();
                *value = keep * *value + (1.0 - keep) * m;
            }
            Ok(())
        })
        .collect();
    results.into_iter().collect::<Result<Vec<()>>>()?;
    out.set_time_index(f.time_index() + 1);
    Ok(out)
}

/// `max_{i,j} |a − b|(1+|v_j|)^q` between two grids of the same shape.
pub fn weighted_sup_distance(a: &DistributionGrid, b: &DistributionGrid, q: f64) -> f64 {
    assert!(a.same_shape(b), "grids differ in shape");
    let w = a.velocity().weights(q);
    let n_v = w.len();
    a.values()
        .par_chunks(n_v)
        .zip(b.values().par_chunks(n_v))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .zip(&w)
                .map(|((p, r), wk)| (p - r).abs() * wk)
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}
