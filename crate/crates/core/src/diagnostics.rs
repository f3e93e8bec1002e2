//! Norms, conserved totals, stability-ladder quantities and tail metrics.
//!
//! Nothing here enforces the analytic bounds; the ladder constants of the
//! convergence theory are existence-type, so the measured proxies are reported
//! and the provable inequalities (norm non-expansion, the positivity recursion,
//! the tensor sandwiches) are checked exactly or to a stated slack.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::Result;
use crate::gaussian::{fill_gaussian, prepare};
use crate::grid::{cell_volume, DistributionGrid, VelocityGrid};
use crate::moments::{compute_moments, raw_sums, CompensatedSum, MacroFields};
use crate::stepper::{SchemeParams, StepTrace};

/// `sup_{i,j} |f_{i,j}|(1+|v_j|)^q`.
pub fn weighted_sup_norm(f: &DistributionGrid, q: f64) -> f64 {
    let w = f.velocity().weights(q);
    f.values()
        .par_chunks(w.len())
        .map(|cell| {
            cell.iter()
                .zip(&w)
                .map(|(v, wk)| v.abs() * wk)
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Mass `ΣfΔv³Δx`, momentum `Σf·vΔv³Δx` and energy `Σf|v|²Δv³Δx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
}

pub fn conserved_totals(f: &DistributionGrid) -> Totals {
    let vg = *f.velocity();
    let per_cell: Vec<_> = f
        .values()
        .par_chunks(vg.n_nodes())
        .map(|cell| raw_sums(cell, &vg))
        .collect();
    let mut mass = CompensatedSum::default();
    let mut mom = [CompensatedSum::default(); 3];
    let mut energy = CompensatedSum::default();
    for s in &per_cell {
        mass.add(s.zeroth);
        for a in 0..3 {
            mom[a].add(s.first[a]);
        }
        energy.add(s.second.trace());
    }
    let scale = cell_volume(&vg) * f.spatial().dx();
    Totals {
        mass: mass.value() * scale,
        momentum: mom.map(|m| m.value() * scale),
        energy: energy.value() * scale,
    }
}

/// Weighted sup norm, minimum entry and totals together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSet {
    pub weighted_sup: f64,
    pub min_value: f64,
    pub totals: Totals,
}

pub fn norm_set(f: &DistributionGrid, q: f64) -> NormSet {
    NormSet {
        weighted_sup: weighted_sup_norm(f, q),
        min_value: f.min_value(),
        totals: conserved_totals(f),
    }
}

/// Mass of `N(U, σ²Id)` scaled by `rho` lying outside `[−v_max, v_max]³`.
pub fn tail_mass_isotropic_bound(rho: f64, u: [f64; 3], sigma2: f64, v_max: f64) -> f64 {
    let scale = (2.0 * sigma2).sqrt();
    let log_inside: f64 = u
        .iter()
        .map(|&ua| {
            let outside = 0.5 * erfc((v_max - ua) / scale) + 0.5 * erfc((v_max + ua) / scale);
            (-outside.min(1.0)).ln_1p()
        })
        .sum();
    -rho * log_inside.exp_m1()
}

/// Gaussian mass of a cell outside the velocity box, using the isotropic
/// envelope `λ_max(𝒯_ν̃)·Id` along every axis.
pub fn tail_mass(fields: &MacroFields, vgrid: &VelocityGrid) -> f64 {
    let lambda_max = fields.tensor_nu.eigenvalues()[2];
    tail_mass_isotropic_bound(fields.rho, fields.u, lambda_max, vgrid.v_max())
}

/// Discrete entropy `Σ f ln f Δv³Δx` over positive entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HValue {
    pub value: f64,
    /// Entries `≤ 0` left out of the sum.
    pub excluded: usize,
}

pub fn h_functional(f: &DistributionGrid) -> HValue {
    let n_v = f.velocity().n_nodes();
    let per_cell: Vec<(f64, usize)> = f
        .values()
        .par_chunks(n_v)
        .map(|cell| {
            let mut sum = CompensatedSum::default();
            let mut excluded = 0;
            for &v in cell {
                if v > 0.0 {
                    sum.add(v * v.ln());
                } else {
                    excluded += 1;
                }
            }
            (sum.value(), excluded)
        })
        .collect();
    let mut total = CompensatedSum::default();
    let mut excluded = 0;
    for (s, e) in per_cell {
        total.add(s);
        excluded += e;
    }
    HValue {
        value: total.value() * cell_volume(f.velocity()) * f.spatial().dx(),
        excluded,
    }
}

/// Quadrature tolerance `ε_quad`: worst relative mismatch between a cell's
/// moments and the moments of the lattice Gaussian built from them.
///
/// Mass is relative to `ρ`, momentum to `ρ√T`, energy to `ρ(|U|²+3T)`.
pub fn quadrature_tolerance(f: &DistributionGrid, nu_eff: f64) -> Result<f64> {
    let vg = *f.velocity();
    let per_cell: Vec<Result<f64>> = f
        .values()
        .par_chunks(vg.n_nodes())
        .enumerate()
        .map(|(i, cell)| {
            let eps = (|| {
                let fields = compute_moments(cell, &vg, nu_eff)?;
                let params = prepare(&fields)?;
                let mut buf = vec![0.0; vg.n_nodes()];
                fill_gaussian(&params, &vg, &mut buf);
                let back = compute_moments(&buf, &vg, nu_eff)?;
                Ok(moment_mismatch(&fields, &back))
            })();
            eps.map_err(|e: crate::Error| e.in_cell(i))
        })
        .collect();
    let mut worst = 0.0_f64;
    for r in per_cell {
        worst = worst.max(r?);
    }
    Ok(worst)
}

fn moment_mismatch(a: &MacroFields, b: &MacroFields) -> f64 {
    let energy = |m: &MacroFields| m.rho * (m.u.iter().map(|x| x * x).sum::<f64>() + 3.0 * m.temp);
    let mass = (a.rho - b.rho).abs() / a.rho;
    let thermal = a.rho * a.temp.sqrt();
    let momentum = (0..3)
        .map(|k| (a.rho * a.u[k] - b.rho * b.u[k]).abs() / thermal)
        .fold(0.0, f64::max);
    let en = (energy(a) - energy(b)).abs() / energy(a);
    mass.max(momentum).max(en)
}

/// Relative amount by which a cell's tensor leaves the sandwich
/// `min{1−ν̃,1+2ν̃}·T ≤ λ ≤ max{1−ν̃,1+2ν̃}·T` (eigenvalues) and its cube (determinant).
/// Zero or negative when the bounds hold.
pub fn sandwich_excess(fields: &MacroFields, eigenvalues: [f64; 3], det: f64) -> f64 {
    let nu = fields.nu_eff;
    let t = fields.temp;
    let lo = (1.0 - nu).min(1.0 + 2.0 * nu);
    let hi = (1.0 - nu).max(1.0 + 2.0 * nu);
    let eig_excess = ((lo * t - eigenvalues[0]) / t).max((eigenvalues[2] - hi * t) / t);
    let t3 = t * t * t;
    let det_excess = ((lo.powi(3) * t3 - det) / t3).max((det - hi.powi(3) * t3) / t3);
    eig_excess.max(det_excess)
}

/// Per-step stability quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub step: usize,
    pub min_rho: f64,
    pub min_temp: f64,
    pub min_tensor_eig: f64,
    pub max_rho: f64,
    pub max_speed: f64,
    pub max_temp: f64,
    /// `‖M_ν̃(f̃)‖_q / ‖f̃‖_q` for this step.
    pub gaussian_ratio: f64,
    /// Running maximum of `gaussian_ratio`, standing in for `C_𝓜`.
    pub ratio_running_max: f64,
    /// `min_i (3ρ̃T̃ / 8π‖f̃‖_q)^{1/5}`, the optimal splitting radius of the
    /// density moment estimate; the estimate needs it to exceed `Δv`.
    pub radius_proxy: f64,
    /// `max_i ρ̃/(T̃^{3/2}‖f̃‖_q)`, a lower estimate of `C_M`.
    pub moment_proxy: f64,
    /// Worst relative sandwich excess over cells (≤ 0 when the bounds hold).
    pub sandwich_excess: f64,
    /// `(keep + blend·C)^n · ‖f̃⁰‖_q` with `C` the running ratio maximum.
    pub norm_bound: f64,
    pub norm: f64,
}

/// Ledger of stability quantities along a run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StabilityLedger {
    pub entries: Vec<LedgerEntry>,
    ratio_max: f64,
    base_norm: Option<f64>,
}

impl StabilityLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ratio_running_max(&self) -> f64 {
        self.ratio_max
    }

    /// True when the monitored norm growth bound held at every recorded step.
    pub fn norm_bound_holds(&self) -> bool {
        self.norm_bound_usage() <= 1.0 + 1e-12
    }

    /// Largest `‖fⁿ‖_q / bound_n` over the recorded steps.
    pub fn norm_bound_usage(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.norm / e.norm_bound)
            .fold(0.0, f64::max)
    }
}

/// Appends the quantities of one step to the ledger.
pub fn ledger_update<'l>(ledger: &'l mut StabilityLedger, trace: &StepTrace) -> &'l LedgerEntry {
    let params: &SchemeParams = trace.params;
    let tilde_norm = trace.report.reconstructed_norm;
    let base = *ledger.base_norm.get_or_insert(tilde_norm);
    ledger.ratio_max = ledger.ratio_max.max(trace.report.gaussian_ratio);

    let mut e = LedgerEntry {
        step: trace.step,
        min_rho: f64::INFINITY,
        min_temp: f64::INFINITY,
        min_tensor_eig: f64::INFINITY,
        max_rho: 0.0,
        max_speed: 0.0,
        max_temp: 0.0,
        gaussian_ratio: trace.report.gaussian_ratio,
        ratio_running_max: ledger.ratio_max,
        radius_proxy: f64::INFINITY,
        moment_proxy: 0.0,
        sandwich_excess: f64::NEG_INFINITY,
        norm_bound: 0.0,
        norm: trace.report.max_weighted_norm,
    };
    for c in trace.cells {
        let m = &c.fields;
        e.min_rho = e.min_rho.min(m.rho);
        e.max_rho = e.max_rho.max(m.rho);
        e.min_temp = e.min_temp.min(m.temp);
        e.max_temp = e.max_temp.max(m.temp);
        e.max_speed = e.max_speed.max(m.u.iter().map(|x| x * x).sum::<f64>().sqrt());
        e.min_tensor_eig = e.min_tensor_eig.min(c.tensor_min_eig);
        let r = (3.0 * m.rho * m.temp / (8.0 * std::f64::consts::PI * tilde_norm)).powf(0.2);
        e.radius_proxy = e.radius_proxy.min(r);
        e.moment_proxy = e.moment_proxy.max(m.rho / (m.temp.powf(1.5) * tilde_norm));
        let eig = m.tensor_nu.eigenvalues();
        e.sandwich_excess = e.sandwich_excess.max(sandwich_excess(m, eig, c.tensor_det));
    }
    let growth = params.keep() + params.blend() * ledger.ratio_max;
    e.norm_bound = growth.powi(ledger.entries.len() as i32 + 1) * base;
    ledger.entries.push(e);
    ledger.entries.last().expect("just pushed")
}

/// One row of the per-step diagnostics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    pub min_f: f64,
    pub sup_norm_q: f64,
    pub min_eig_tensor: f64,
    pub gaussian_ratio: f64,
    pub h_value: f64,
    pub tail_mass_max: f64,
}

/// Format tag written above the CSV header.
pub const STEP_CSV_VERSION: &str = "# esbgk-steps v1";

pub const STEP_CSV_HEADER: &str = "step,time,mass,momentum_x,momentum_y,momentum_z,energy,min_f,sup_norm_q,min_eig_tensor,gaussian_ratio,h_value,tail_mass_max";

impl StepDiagnostics {
    /// Diagnostics of an initial state: the relaxation columns describe the
    /// Gaussian built directly from `f`'s own moments.
    pub fn initial(f: &DistributionGrid, params: &SchemeParams) -> Result<Self> {
        let vg = *f.velocity();
        let nu_eff = params.nu_eff();
        let w = vg.weights(params.q_weight);
        let per_cell: Vec<Result<(f64, f64, f64)>> = f
            .values()
            .par_chunks(vg.n_nodes())
            .enumerate()
            .map(|(i, cell)| {
                let r = (|| {
                    let fields = compute_moments(cell, &vg, nu_eff)?;
                    let g = prepare(&fields)?;
                    let mut buf = vec![0.0; vg.n_nodes()];
                    fill_gaussian(&g, &vg, &mut buf);
                    let m_norm = buf.iter().zip(&w).map(|(m, wk)| m * wk).fold(0.0, f64::max);
                    let tail = tail_mass_isotropic_bound(fields.rho, fields.u, g.max_eigenvalue, vg.v_max());
                    Ok((g.min_eigenvalue, m_norm, tail))
                })();
                r.map_err(|e: crate::Error| e.in_cell(i))
            })
            .collect();
        let mut min_eig = f64::INFINITY;
        let mut m_norm = 0.0_f64;
        let mut tail = 0.0_f64;
        for r in per_cell {
            let (e, m, t) = r?;
            min_eig = min_eig.min(e);
            m_norm = m_norm.max(m);
            tail = tail.max(t);
        }
        let norms = norm_set(f, params.q_weight);
        Ok(Self {
            step: f.time_index(),
            time: f.time_index() as f64 * params.dt,
            mass: norms.totals.mass,
            momentum: norms.totals.momentum,
            energy: norms.totals.energy,
            min_f: norms.min_value,
            sup_norm_q: norms.weighted_sup,
            min_eig_tensor: min_eig,
            gaussian_ratio: m_norm / norms.weighted_sup,
            h_value: h_functional(f).value,
            tail_mass_max: tail,
        })
    }

    pub fn from_trace(trace: &StepTrace) -> Self {
        let r = trace.report;
        Self {
            step: trace.step,
            time: trace.step as f64 * trace.params.dt,
            mass: r.mass,
            momentum: r.momentum,
            energy: r.energy,
            min_f: r.min_value,
            sup_norm_q: r.max_weighted_norm,
            min_eig_tensor: r.tensor_min_eig,
            gaussian_ratio: r.gaussian_ratio,
            h_value: h_functional(trace.next).value,
            tail_mass_max: r.tail_mass_max,
        }
    }

    /// CSV row with round-trip float formatting.
    pub fn csv_row(&self) -> String {
        let vals = [
            self.time,
            self.mass,
            self.momentum[0],
            self.momentum[1],
            self.momentum[2],
            self.energy,
            self.min_f,
            self.sup_norm_q,
            self.min_eig_tensor,
            self.gaussian_ratio,
            self.h_value,
            self.tail_mass_max,
        ];
        let mut row = self.step.to_string();
        for v in vals {
            row.push(',');
            row.push_str(&format!("{v:.17e}"));
        }
        row
    }
}

/// Outcome of one named invariant check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Step observer that tracks the provable invariants along a run.
#[derive(Debug, Clone)]
pub struct InvariantAudit {
    q: f64,
    keep: f64,
    eps_quad: f64,
    initial: Totals,
    thermal_speed: f64,
    pub steps: usize,
    /// Largest `‖f̃‖_q − ‖f‖_q` seen (must stay ≤ 0).
    pub max_norm_increase: f64,
    /// Entries with `fⁿ⁺¹ < keep·f̃ⁿ`.
    pub lower_bound_violations: usize,
    pub min_value: f64,
    pub max_sandwich_excess: f64,
    pub max_mass_drift: f64,
    pub max_momentum_drift: f64,
    pub max_energy_drift: f64,
    pub ledger: StabilityLedger,
}

impl InvariantAudit {
    /// `f0` is the initial state, `eps_quad` the measured quadrature tolerance.
    pub fn new(f0: &DistributionGrid, params: &SchemeParams, eps_quad: f64) -> Self {
        let initial = conserved_totals(f0);
        let mean_u2: f64 = initial.momentum.iter().map(|p| (p / initial.mass).powi(2)).sum();
        let temp = (initial.energy / initial.mass - mean_u2) / 3.0;
        Self {
            q: params.q_weight,
            keep: params.keep(),
            eps_quad,
            initial,
            thermal_speed: temp.sqrt(),
            steps: 0,
            max_norm_increase: f64::NEG_INFINITY,
            lower_bound_violations: 0,
            min_value: f0.min_value(),
            max_sandwich_excess: f64::NEG_INFINITY,
            max_mass_drift: 0.0,
            max_momentum_drift: 0.0,
            max_energy_drift: 0.0,
            ledger: StabilityLedger::new(),
        }
    }

    pub fn observe(&mut self, trace: &StepTrace) {
        self.steps += 1;
        let before = weighted_sup_norm(trace.previous, self.q);
        let after = trace.report.reconstructed_norm;
        self.max_norm_increase = self.max_norm_increase.max(after - before);
        let keep = self.keep;
        self.lower_bound_violations += trace
            .next
            .values()
            .par_iter()
            .zip(trace.reconstructed.values().par_iter())
            .filter(|(n, t)| **n < keep * **t)
            .count();
        self.min_value = self.min_value.min(trace.report.min_value);
        let entry = ledger_update(&mut self.ledger, trace);
        self.max_sandwich_excess = self.max_sandwich_excess.max(entry.sandwich_excess);
        let r = trace.report;
        let m0 = self.initial.mass;
        self.max_mass_drift = self.max_mass_drift.max((r.mass - m0).abs() / m0);
        for a in 0..3 {
            let d = (r.momentum[a] - self.initial.momentum[a]).abs() / (m0 * self.thermal_speed);
            self.max_momentum_drift = self.max_momentum_drift.max(d);
        }
        let e0 = self.initial.energy;
        self.max_energy_drift = self.max_energy_drift.max((r.energy - e0).abs() / e0);
    }

    pub fn checks(&self) -> Vec<CheckResult> {
        let check = |name: &str, value: f64, threshold: f64, passed: bool| CheckResult {
            name: name.to_string(),
            value,
            threshold,
            passed,
        };
        let drift_tol = 10.0 * self.eps_quad;
        vec![
            check("mass drift", self.max_mass_drift, drift_tol, self.max_mass_drift <= drift_tol),
            check(
                "momentum drift",
                self.max_momentum_drift,
                drift_tol,
                self.max_momentum_drift <= drift_tol,
            ),
            check(
                "energy drift",
                self.max_energy_drift,
                drift_tol,
                self.max_energy_drift <= drift_tol,
            ),
            check("positivity (min f)", self.min_value, 0.0, self.min_value > 0.0),
            check(
                "lower-bound recursion violations",
                self.lower_bound_violations as f64,
                0.0,
                self.lower_bound_violations == 0,
            ),
            check(
                "reconstruction norm increase",
                self.max_norm_increase,
                0.0,
                self.max_norm_increase <= 0.0,
            ),
            check(
                "tensor sandwich excess",
                self.max_sandwich_excess,
                1e-10,
                self.max_sandwich_excess <= 1e-10,
            ),
            check(
                "norm growth bound usage",
                self.ledger.norm_bound_usage(),
                1.0 + 1e-12,
                self.ledger.norm_bound_holds(),
            ),
        ]
    }
}
