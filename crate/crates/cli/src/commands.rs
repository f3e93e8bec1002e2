//! `run`, `converge` and `check`.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use esbgk::diagnostics::{
    quadrature_tolerance, weighted_sup_norm, CheckResult, InvariantAudit, StepDiagnostics, STEP_CSV_HEADER,
    STEP_CSV_VERSION,
};
use esbgk::harness::{bgk_equivalence, self_converge, ConvergenceReport};
use esbgk::initcond::sample_ic;
use esbgk::stepper::weighted_sup_distance;
use esbgk::transport::build_foot_table;
use esbgk::{DistributionGrid, InitialCondition, Stepper};
use serde_json::json;

use crate::config::{ConfigError, RunConfig};
use crate::output::{encode_state, write_atomic, OutputError};

pub const STEPS_CSV: &str = "steps.csv";
pub const FINAL_STATE: &str = "final_state.bin";
pub const STABILITY_JSON: &str = "stability.json";
pub const METADATA_JSON: &str = "metadata.json";
pub const CONVERGENCE_JSON: &str = "convergence.json";
pub const CONVERGENCE_CSV: &str = "convergence.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] esbgk::Error),
    #[error(transparent)]
    Output(#[from] OutputError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Values that vary between invocations; they only reach the metadata sidecar.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub seed: Option<u64>,
}

fn write_metadata(dir: &Path, command: &str, cfg: &RunConfig, inv: &Invocation, extra: serde_json::Value) -> Result<(), CliError> {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({
        "command": command,
        "timestamp_unix": timestamp,
        "threads": rayon::current_num_threads(),
        "seed": inv.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "result": extra,
    });
    let text = serde_json::to_string_pretty(&meta).expect("serialisable metadata");
    write_atomic(&dir.join(METADATA_JSON), text.as_bytes())?;
    Ok(())
}

/// Outcome of `run`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub eps_quad: f64,
    pub rows: Vec<StepDiagnostics>,
    pub final_state: DistributionGrid,
    pub audit: InvariantAudit,
}

/// Runs the configured problem; writes the step CSV, the final state and the
/// stability ledger to `dir`.
pub fn cmd_run(cfg: &RunConfig, dir: &Path, inv: &Invocation) -> Result<RunSummary, CliError> {
    let params = cfg.params();
    let (s, v) = cfg.grids();
    let f0 = sample_ic(&cfg.ic, s, v)?;
    let eps_quad = quadrature_tolerance(&f0, params.nu_eff())?;
    let mut rows = vec![StepDiagnostics::initial(&f0, &params)?];
    let mut audit = InvariantAudit::new(&f0, &params, eps_quad);
    let stepper = Stepper::new(params, &s, &v)?;
    let every = cfg.output.csv_every;
    let last = params.n_steps;
    let outcome = stepper.run(&f0, Some(&cfg.ic), &mut |trace| {
        audit.observe(trace);
        if trace.step % every == 0 || trace.step == last {
            rows.push(StepDiagnostics::from_trace(trace));
        }
    })?;

    let mut csv = format!("{STEP_CSV_VERSION}\n{STEP_CSV_HEADER}\n");
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    write_atomic(&dir.join(STEPS_CSV), csv.as_bytes())?;
    write_atomic(&dir.join(FINAL_STATE), &encode_state(&outcome.final_state, &params))?;
    let ledger = json!({
        "eps_quad": eps_quad,
        "entries": audit.ledger.entries,
        "checks": audit.checks(),
    });
    write_atomic(
        &dir.join(STABILITY_JSON),
        serde_json::to_string_pretty(&ledger).expect("serialisable ledger").as_bytes(),
    )?;
    write_metadata(dir, "run", cfg, inv, json!({ "eps_quad": eps_quad, "steps": last }))?;
    Ok(RunSummary {
        eps_quad,
        rows,
        final_state: outcome.final_state,
        audit,
    })
}

/// Runs the configured refinement ladder; writes the JSON report and CSV table.
pub fn cmd_converge(cfg: &RunConfig, dir: &Path, inv: &Invocation) -> Result<ConvergenceReport, CliError> {
    let report = self_converge(&cfg.ladder()?)?;
    let mut csv = String::from("# esbgk-convergence v1\nlevel,dt,dx,dv,error,local_order\n");
    for l in &report.levels {
        let order = l.local_order.map(|o| format!("{o:.17e}")).unwrap_or_default();
        csv.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
            l.level, l.dt, l.dx, l.dv, l.error, order
        ));
    }
    write_atomic(&dir.join(CONVERGENCE_CSV), csv.as_bytes())?;
    write_atomic(
        &dir.join(CONVERGENCE_JSON),
        serde_json::to_string_pretty(&report).expect("serialisable report").as_bytes(),
    )?;
    write_metadata(dir, "converge", cfg, inv, json!({ "order": report.order }))?;
    Ok(report)
}

fn check(name: &str, value: f64, threshold: f64, passed: bool) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        value,
        threshold,
        passed,
    }
}

/// Runs the invariant suite on the configured problem.
pub fn cmd_check(cfg: &RunConfig) -> Result<Vec<CheckResult>, CliError> {
    let params = cfg.params();
    let (s, v) = cfg.grids();
    let f0 = sample_ic(&cfg.ic, s, v)?;
    let eps_quad = quadrature_tolerance(&f0, params.nu_eff())?;
    let mut results = vec![check("quadrature tolerance", eps_quad, 1e-6, eps_quad <= 1e-6)];

    let mut audit = InvariantAudit::new(&f0, &params, eps_quad);
    Stepper::new(params, &s, &v)?.run(&f0, Some(&cfg.ic), &mut |t| audit.observe(t))?;
    results.extend(audit.checks());

    let table = build_foot_table(&v, params.dt, &s);
    let mut constant = true;
    for k in 0..v.n_per_axis() {
        let (mut node, alpha) = table.foot_of(0, k);
        for _ in 0..10 {
            let (next, a) = table.foot_of(node, k);
            constant &= a.to_bits() == alpha.to_bits();
            node = next;
        }
    }
    results.push(check("foot weight constancy", 0.0, 0.0, constant));

    let mut bgk = params;
    bgk.nu = 0.0;
    bgk.n_steps = params.n_steps.min(10);
    let norm = weighted_sup_norm(&f0, params.q_weight);
    let dev = bgk_equivalence(&f0, &bgk)? / norm;
    results.push(check("BGK equivalence (relative)", dev, 1e-12, dev <= 1e-12));

    let eq = InitialCondition::UniformMaxwellian {
        rho: 1.0,
        u: [0.0; 3],
        temp: 1.0,
    };
    let g0 = sample_ic(&eq, s, v)?;
    let (g1, _) = Stepper::new(params, &s, &v)?.step(&g0)?;
    let dev = weighted_sup_distance(&g1, &g0, params.q_weight) / weighted_sup_norm(&g0, params.q_weight);
    results.push(check("equilibrium fixed point (relative)", dev, 1e-6, dev <= 1e-6));
    Ok(results)
}

/// `PASS`/`FAIL` table, one line per check.
pub fn format_checks(results: &[CheckResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&format!(
            "{} {:<36} value={:.3e} threshold={:.3e}\n",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.value,
            r.threshold
        ));
    }
    out
}
