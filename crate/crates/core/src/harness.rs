//! Refinement ladders, self-convergence, BGK equivalence and relaxation-limit probes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{fill_gaussian, prepare};
use crate::grid::{make_grids, DistributionGrid, SpatialGrid, VelocityGrid};
use crate::initcond::{sample_ic, InitialCondition};
use crate::moments::compute_moments;
use crate::stepper::{step_bgk_reference, weighted_sup_distance, SchemeParams, Stepper};
use crate::transport::build_foot_table;

/// How the discretisation parameters move together along a ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// `Δx = Δt`, `Δv` fixed.
    DxEqualsDt,
    /// `Δt` refined, `Δx` and `Δv` fixed.
    FixedDvRefineDt,
    /// `Δt` fixed, `Δx` refined.
    FixedDtRefineDx,
}

/// One rung of a ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub dt: f64,
    pub n_cells: usize,
    pub j_half: usize,
    pub dv: f64,
}

impl Level {
    pub fn dx(&self) -> f64 {
        1.0 / self.n_cells as f64
    }
}

/// Levels ordered coarse to fine; the last level is the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementLadder {
    pub levels: Vec<Level>,
    pub coupling: Coupling,
    /// `κ`, `ν` and `q`; `dt` and `n_steps` are set per level.
    pub base: SchemeParams,
    pub ic: InitialCondition,
    pub final_time: f64,
}

impl RefinementLadder {
    /// `Δx = Δt` ladder over `dts` (coarse to fine, reference last).
    pub fn dx_equals_dt(
        dts: &[f64],
        j_half: usize,
        dv: f64,
        base: SchemeParams,
        ic: InitialCondition,
        final_time: f64,
    ) -> Result<Self> {
        let levels = dts
            .iter()
            .map(|&dt| {
                let n = (1.0 / dt).round();
                if !(n >= 2.0) || (n * dt - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidLadder(format!("1/dt = {} is not an integer", 1.0 / dt)));
                }
                Ok(Level {
                    dt,
                    n_cells: n as usize,
                    j_half,
                    dv,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            levels,
            coupling: Coupling::DxEqualsDt,
            base,
            ic,
            final_time,
        })
    }

    /// Integer step count reaching `final_time` at `dt`.
    pub fn step_count(&self, dt: f64) -> Result<usize> {
        let n = (self.final_time / dt).round();
        if !(n >= 0.0) || (n * dt - self.final_time).abs() > 1e-12 * self.final_time.max(1.0) {
            return Err(Error::InvalidLadder(format!(
                "final time {} is not a whole number of steps of {dt}",
                self.final_time
            )));
        }
        Ok(n as usize)
    }

    /// The quantity the coupling refines.
    fn refined(&self, level: &Level) -> f64 {
        match self.coupling {
            Coupling::FixedDtRefineDx => level.dx(),
            _ => level.dt,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.levels.len() < 3 {
            return Err(Error::InvalidLadder(format!(
                "need ≥ 3 levels, got {}",
                self.levels.len()
            )));
        }
        let coarse = self.refined(&self.levels[0]);
        let fine = self.refined(self.levels.last().expect("non-empty"));
        if fine * 4.0 > coarse * (1.0 + 1e-12) && coarse != fine {
            return Err(Error::InvalidLadder(format!(
                "reference must be at least 4x finer than the coarsest level ({coarse} vs {fine})"
            )));
        }
        for l in &self.levels {
            if self.coupling == Coupling::DxEqualsDt && (l.dt * l.n_cells as f64 - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidLadder(format!(
                    "dx = 1/{} differs from dt = {}",
                    l.n_cells, l.dt
                )));
            }
            self.step_count(l.dt)?;
        }
        let reference = self.levels.last().expect("non-empty");
        for l in &self.levels[..self.levels.len() - 1] {
            nesting(l, reference)?;
        }
        Ok(())
    }
}

/// Spatial and velocity refinement ratios of `fine` over `coarse`.
fn nesting(coarse: &Level, fine: &Level) -> Result<(usize, usize)> {
    if !fine.n_cells.is_multiple_of(coarse.n_cells) {
        return Err(Error::LatticeNotNested(format!(
            "{} cells do not divide {} cells",
            coarse.n_cells, fine.n_cells
        )));
    }
    let ratio = coarse.dv / fine.dv;
    let rv = ratio.round();
    if !(rv >= 1.0) || (ratio - rv).abs() > 1e-12 * ratio {
        return Err(Error::LatticeNotNested(format!(
            "dv = {} is not an integer multiple of dv = {}",
            coarse.dv, fine.dv
        )));
    }
    let rv = rv as usize;
    if coarse.j_half * rv > fine.j_half {
        return Err(Error::LatticeNotNested(format!(
            "velocity box of half-width {} exceeds the reference box",
            coarse.j_half as f64 * coarse.dv
        )));
    }
    Ok((fine.n_cells / coarse.n_cells, rv))
}

/// Error of one level against the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: usize,
    pub dt: f64,
    pub dx: f64,
    pub dv: f64,
    pub n_steps: usize,
    /// `max |f_coarse − f_ref|(1+|v|)^q` over the coarse lattice.
    pub error: f64,
    /// `log(e_{k−1}/e_k) / log(h_{k−1}/h_k)`; absent on the first level.
    pub local_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub coupling: Coupling,
    pub final_time: f64,
    pub levels: Vec<LevelResult>,
    /// Least-squares slope of `log error` against `log h`; absent when degenerate.
    pub order: Option<f64>,
    pub reference: String,
}

/// Runs `n_steps` from `ic` with exact initial sampling.
pub fn run_level(
    ic: &InitialCondition,
    params: SchemeParams,
    spatial: SpatialGrid,
    velocity: VelocityGrid,
) -> Result<DistributionGrid> {
    let f0 = sample_ic(ic, spatial, velocity)?;
    let stepper = Stepper::new(params, &spatial, &velocity)?;
    Ok(stepper.run(&f0, Some(ic), &mut |_| {})?.final_state)
}

fn level_params(ladder: &RefinementLadder, level: &Level) -> Result<SchemeParams> {
    let mut p = ladder.base;
    p.dt = level.dt;
    p.n_steps = ladder.step_count(level.dt)?;
    p.validate()?;
    Ok(p)
}

/// Weighted sup error of `coarse` against `fine` on the coarse lattice.
fn nested_error(coarse: &DistributionGrid, fine: &DistributionGrid, rx: usize, rv: usize, q: f64) -> f64 {
    let cv = *coarse.velocity();
    let fv = *fine.velocity();
    let w = cv.weights(q);
    let map: Vec<usize> = (0..cv.n_nodes())
        .map(|k| {
            let j = cv.lattice_index(k).map(|c| c * rv as i64);
            fv.flat_index(j).expect("nested velocity lattice")
        })
        .collect();
    coarse
        .values()
        .par_chunks(cv.n_nodes())
        .enumerate()
        .map(|(i, cell)| {
            let fcell = fine.cell((i * rx) as i64);
            cell.iter()
                .zip(&map)
                .zip(&w)
                .map(|((c, &k), wk)| (c - fcell[k]).abs() * wk)
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Least-squares slope of `y` against `x`; `None` when `x` has no spread or data are not finite.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 || x.iter().chain(y).any(|v| !v.is_finite()) {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 1e-24) {
        return None;
    }
    Some(sxy / sxx)
}

/// Measures the observed order of a ladder against its finest level.
pub fn self_converge(ladder: &RefinementLadder) -> Result<ConvergenceReport> {
    ladder.validate()?;
    let states: Vec<Result<DistributionGrid>> = ladder
        .levels
        .par_iter()
        .map(|l| {
            let (s, v) = make_grids(l.n_cells, l.j_half, l.dv)?;
            run_level(&ladder.ic, level_params(ladder, l)?, s, v)
        })
        .collect();
    let states = states.into_iter().collect::<Result<Vec<_>>>()?;
    let reference = states.last().expect("non-empty");
    let ref_level = ladder.levels.last().expect("non-empty");
    let q = ladder.base.q_weight;

    let mut levels = Vec::new();
    for (idx, (l, f)) in ladder.levels.iter().zip(&states).enumerate().take(states.len() - 1) {
        let (rx, rv) = nesting(l, ref_level)?;
        let error = nested_error(f, reference, rx, rv, q);
        let local_order = levels.last().and_then(|prev: &LevelResult| {
            let h_prev = match ladder.coupling {
                Coupling::FixedDtRefineDx => prev.dx,
                _ => prev.dt,
            };
            let ratio = (h_prev / ladder.refined(l)).ln();
            let o = (prev.error / error).ln() / ratio;
            o.is_finite().then_some(o)
        });
        levels.push(LevelResult {
            level: idx,
            dt: l.dt,
            dx: l.dx(),
            dv: l.dv,
            n_steps: ladder.step_count(l.dt)?,
            error,
            local_order,
        });
    }
    let positive = levels.iter().all(|r| r.error > 0.0);
    let order = if positive {
        let x: Vec<f64> = ladder.levels[..levels.len()]
            .iter()
            .map(|l| ladder.refined(l).ln())
            .collect();
        let y: Vec<f64> = levels.iter().map(|r| r.error.ln()).collect();
        fit_slope(&x, &y)
    } else {
        None
    };
    Ok(ConvergenceReport {
        coupling: ladder.coupling,
        final_time: ladder.final_time,
        levels,
        order,
        reference: format!(
            "self-run at dt={}, n_cells={}, J={}, dv={}",
            ref_level.dt, ref_level.n_cells, ref_level.j_half, ref_level.dv
        ),
    })
}

/// Largest weighted sup deviation between the stepper and the classical BGK
/// oracle over `params.n_steps` steps from `f0`. Requires `ν = 0`.
pub fn bgk_equivalence(f0: &DistributionGrid, params: &SchemeParams) -> Result<f64> {
    let table = build_foot_table(f0.velocity(), params.dt, f0.spatial());
    let stepper = Stepper::with_table(*params, table.clone())?;
    let mut a = f0.clone();
    let mut b = f0.clone();
    let mut worst = 0.0_f64;
    for n in 0..params.n_steps {
        let next_b = step_bgk_reference(&b, params, &table).map_err(|e| e.at_step(n + 1))?;
        a = stepper.step(&a).map_err(|e| e.at_step(n + 1))?.0;
        b = next_b;
        worst = worst.max(weighted_sup_distance(&a, &b, params.q_weight));
    }
    Ok(worst)
}

/// `M_ν̃` built cell by cell from `f`'s own moments.
pub fn local_gaussian(f: &DistributionGrid, nu_eff: f64) -> Result<DistributionGrid> {
    let vg = *f.velocity();
    let mut out = DistributionGrid::zeros(*f.spatial(), vg);
    let results: Vec<Result<()>> = out
        .values_mut()
        .par_chunks_mut(vg.n_nodes())
        .zip(f.values().par_chunks(vg.n_nodes()))
        .enumerate()
        .map(|(i, (dst, src))| {
            let fields = compute_moments(src, &vg, nu_eff).map_err(|e| e.in_cell(i))?;
            let g = prepare(&fields).map_err(|e| e.in_cell(i))?;
            fill_gaussian(&g, &vg, dst);
            Ok(())
        })
        .collect();
    results.into_iter().collect::<Result<Vec<()>>>()?;
    out.set_time_index(f.time_index());
    Ok(out)
}

/// Residual series of a near-Euler run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerProbe {
    /// `‖fⁿ⁺¹ − M_ν̃(f̃ⁿ)‖_q` per step.
    pub projection_gap: Vec<f64>,
    /// `‖fⁿ⁺¹ − M_ν̃(fⁿ⁺¹)‖_q` per step.
    pub residual: Vec<f64>,
    /// `‖f̃⁰ − M_ν̃(f̃⁰)‖_q`.
    pub initial_gap: f64,
    /// `‖f⁰‖_q`.
    pub initial_norm: f64,
}

/// Runs `params.n_steps` steps from `ic` (exact initial sampling) and records
/// the distance of each new state to local equilibrium. Requires `κ ≤ 10⁻⁴Δt`.
pub fn euler_limit_probe(
    ic: &InitialCondition,
    params: &SchemeParams,
    spatial: SpatialGrid,
    velocity: VelocityGrid,
) -> Result<EulerProbe> {
    params.validate()?;
    if params.kappa > 1e-4 * params.dt {
        return Err(Error::ParamOutOfRange {
            name: "kappa",
            value: params.kappa,
            reason: "the Euler-limit probe needs kappa <= 1e-4 dt",
        });
    }
    let nu_eff = params.nu_eff();
    let q = params.q_weight;
    let f0 = sample_ic(ic, spatial, velocity)?;
    let stepper = Stepper::new(*params, &spatial, &velocity)?;
    let mut probe = EulerProbe {
        projection_gap: Vec::new(),
        residual: Vec::new(),
        initial_gap: 0.0,
        initial_norm: crate::diagnostics::weighted_sup_norm(&f0, q),
    };
    let mut failure = None;
    stepper.run(&f0, Some(ic), &mut |trace| {
        if failure.is_some() {
            return;
        }
        let measured = (|| -> Result<(f64, f64)> {
            let m_tilde = local_gaussian(trace.reconstructed, nu_eff)?;
            if trace.step == 1 {
                probe.initial_gap = weighted_sup_distance(trace.reconstructed, &m_tilde, q);
            }
            let m_next = local_gaussian(trace.next, nu_eff)?;
            Ok((
                weighted_sup_distance(trace.next, &m_tilde, q),
                weighted_sup_distance(trace.next, &m_next, q),
            ))
        })();
        match measured {
            Ok((gap, res)) => {
                probe.projection_gap.push(gap);
                probe.residual.push(res);
            }
            Err(e) => failure = Some(e.at_step(trace.step)),
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(probe),
    }
}
