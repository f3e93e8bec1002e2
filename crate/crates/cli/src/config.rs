//! JSON run configuration with defaults, `ESBGK_` environment overrides and
//! field-level validation.

use std::path::PathBuf;

use esbgk::harness::{Coupling, RefinementLadder};
use esbgk::{make_grids, InitialCondition, SchemeParams, SpatialGrid, VelocityGrid};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Prefix of environment overrides: `ESBGK_<SECTION>_<KEY>`.
pub const ENV_PREFIX: &str = "ESBGK_";

/// Tolerance on `N_t·Δt = T^f`.
pub const FINAL_TIME_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub kappa: f64,
    pub nu: f64,
    /// Defaults to `Δx`.
    pub dt: Option<f64>,
    pub q: f64,
    /// Defaults to `final_time/dt` when `final_time` is set, else 32.
    pub n_steps: Option<usize>,
    pub final_time: Option<f64>,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            nu: -0.4,
            dt: None,
            q: 6.0,
            n_steps: None,
            final_time: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n_cells: usize,
    pub j_half: usize,
    pub dv: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n_cells: 64,
            j_half: 16,
            dv: 0.375,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write every `csv_every`-th step; the last step is always written.
    pub csv_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("esbgk-out"),
            csv_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSection {
    /// Time steps coarse to fine; the last is the reference.
    pub dts: Vec<f64>,
    pub coupling: Coupling,
    pub final_time: f64,
    pub j_half: usize,
    pub dv: f64,
    /// Cell count for couplings that keep `Δx` fixed.
    pub n_cells: Option<usize>,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        Self {
            dts: vec![0.1, 0.05, 0.025, 0.0125, 0.00625],
            coupling: Coupling::DxEqualsDt,
            final_time: 0.5,
            j_half: 12,
            dv: 0.5,
            n_cells: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: SchemeSection,
    pub grid: GridSection,
    pub ic: InitialCondition,
    pub output: OutputSection,
    pub converge: ConvergeSection,
}

/// Parses and validates a JSON document; an empty document gives the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_with_env(text, std::iter::empty())
}

/// As [`parse_config`], applying `ESBGK_<SECTION>_<KEY>=value` overrides first.
pub fn parse_with_env(
    text: &str,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<RunConfig, ConfigError> {
    let mut doc: Value = if text.trim().is_empty() {
        Value::Object(Default::default())
    } else {
        serde_json::from_str(text).map_err(|e| invalid("<document>", e.to_string()))?
    };
    apply_env(&mut doc, vars)?;
    let mut cfg: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        invalid(&path, e.into_inner().to_string())
    })?;
    cfg.resolve()?;
    Ok(cfg)
}

fn apply_env(doc: &mut Value, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
    let mut vars: Vec<_> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let rest = key[ENV_PREFIX.len()..].to_ascii_lowercase();
        let Some((section, field)) = rest.split_once('_') else {
            return Err(invalid(&key, "expected ESBGK_<SECTION>_<KEY>"));
        };
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let root = doc
            .as_object_mut()
            .ok_or_else(|| invalid("<document>", "top level must be an object"))?;
        let entry = root
            .entry(section.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        let obj = entry
            .as_object_mut()
            .ok_or_else(|| invalid(section, "must be an object"))?;
        obj.insert(field.to_string(), value);
    }
    Ok(())
}

impl RunConfig {
    /// Fills `dt` and `n_steps` and checks every field.
    fn resolve(&mut self) -> Result<(), ConfigError> {
        let g = &self.grid;
        if g.n_cells < 2 {
            return Err(invalid("grid.n_cells", "must be at least 2"));
        }
        if g.j_half < 1 {
            return Err(invalid("grid.j_half", "must be at least 1"));
        }
        if !(g.dv > 0.0 && g.dv.is_finite()) {
            return Err(invalid("grid.dv", "must be positive"));
        }
        let s = &mut self.scheme;
        if !(s.kappa > 0.0 && s.kappa.is_finite()) {
            return Err(invalid("scheme.kappa", "must be positive"));
        }
        if !(s.nu > -0.5 && s.nu < 1.0) {
            return Err(invalid("scheme.nu", "nu out of (-0.5,1)"));
        }
        if !(s.q > 5.0 && s.q.is_finite()) {
            return Err(invalid("scheme.q", "q must exceed 5"));
        }
        let dt = s.dt.unwrap_or(1.0 / g.n_cells as f64);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("scheme.dt", "must be positive"));
        }
        s.dt = Some(dt);
        match (s.final_time, s.n_steps) {
            (Some(tf), _) if !(tf >= 0.0 && tf.is_finite()) => {
                return Err(invalid("scheme.final_time", "must be nonnegative"));
            }
            (Some(tf), Some(n)) => {
                if (n as f64 * dt - tf).abs() > FINAL_TIME_TOL {
                    return Err(invalid(
                        "scheme.n_steps",
                        format!("n_steps*dt = {} differs from final_time = {tf}", n as f64 * dt),
                    ));
                }
            }
            (Some(tf), None) => {
                let n = (tf / dt).round();
                if (n * dt - tf).abs() > FINAL_TIME_TOL {
                    return Err(invalid(
                        "scheme.final_time",
                        format!("final_time = {tf} is not a whole number of steps of {dt}"),
                    ));
                }
                s.n_steps = Some(n as usize);
            }
            (None, None) => s.n_steps = Some(32),
            (None, Some(_)) => {}
        }
        self.ic.validate().map_err(|e| match e {
            esbgk::Error::ParamOutOfRange { name, .. } => invalid(&format!("ic.{name}"), e.to_string()),
            other => invalid("ic", other.to_string()),
        })?;
        if self.output.csv_every < 1 {
            return Err(invalid("output.csv_every", "must be at least 1"));
        }
        let c = &self.converge;
        if let Some(i) = c.dts.iter().position(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(invalid(&format!("converge.dts[{i}]"), "must be positive"));
        }
        if !(c.final_time > 0.0 && c.final_time.is_finite()) {
            return Err(invalid("converge.final_time", "must be positive"));
        }
        if c.j_half < 1 || !(c.dv > 0.0 && c.dv.is_finite()) {
            return Err(invalid("converge", "velocity lattice must be non-empty"));
        }
        Ok(())
    }

    pub fn params(&self) -> SchemeParams {
        let s = &self.scheme;
        SchemeParams {
            kappa: s.kappa,
            nu: s.nu,
            dt: s.dt.expect("resolved"),
            q_weight: s.q,
            n_steps: s.n_steps.expect("resolved"),
        }
    }

    pub fn grids(&self) -> (SpatialGrid, VelocityGrid) {
        make_grids(self.grid.n_cells, self.grid.j_half, self.grid.dv).expect("validated grid")
    }

    /// Refinement ladder described by the `converge` section.
    pub fn ladder(&self) -> Result<RefinementLadder, esbgk::Error> {
        let c = &self.converge;
        let mut base = self.params();
        base.n_steps = 0;
        match c.coupling {
            Coupling::DxEqualsDt => {
                RefinementLadder::dx_equals_dt(&c.dts, c.j_half, c.dv, base, self.ic, c.final_time)
            }
            coupling => {
                let fixed_cells = c.n_cells.unwrap_or(self.grid.n_cells);
                let levels = c
                    .dts
                    .iter()
                    .enumerate()
                    .map(|(k, &dt)| esbgk::harness::Level {
                        dt: if coupling == Coupling::FixedDtRefineDx { c.dts[0] } else { dt },
                        n_cells: if coupling == Coupling::FixedDtRefineDx {
                            fixed_cells << k
                        } else {
                            fixed_cells
                        },
                        j_half: c.j_half,
                        dv: c.dv,
                    })
                    .collect();
                Ok(RefinementLadder {
                    levels,
                    coupling,
                    base,
                    ic: self.ic,
                    final_time: c.final_time,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap();
        let p = cfg.params();
        assert_eq!((p.kappa, p.nu, p.q_weight), (1.0, -0.4, 6.0));
        assert_eq!((cfg.grid.j_half, cfg.grid.dv), (16, 0.375));
        assert_eq!(p.dt, 1.0 / 64.0);
        assert_eq!(cfg.ic, InitialCondition::default());
        assert_eq!(parse_config("{}").unwrap(), cfg);
    }

    #[test]
    fn nu_out_of_range() {
        let err = parse_config(r#"{"scheme":{"nu":1.5}}"#).unwrap_err();
        assert_eq!(err.to_string(), "scheme.nu: nu out of (-0.5,1)");
    }

    #[test]
    fn inconsistent_final_time() {
        let err = parse_config(r#"{"scheme":{"dt":0.1,"n_steps":4,"final_time":0.5}}"#).unwrap_err();
        assert!(err.to_string().starts_with("scheme.n_steps"), "{err}");
        let cfg = parse_config(r#"{"scheme":{"dt":0.1,"final_time":0.5}}"#).unwrap();
        assert_eq!(cfg.params().n_steps, 5);
        assert!(parse_config(r#"{"scheme":{"dt":0.3,"final_time":0.5}}"#).is_err());
    }

    #[test]
    fn errors_name_the_offending_key() {
        let err = parse_config(r#"{"grid":{"dv":"wide"}}"#).unwrap_err();
        assert!(err.to_string().starts_with("grid.dv"), "{err}");
        let err = parse_config(r#"{"grid":{"cells":3}}"#).unwrap_err();
        assert!(err.to_string().starts_with("grid"), "{err}");
        let err = parse_config(
            r#"{"ic":{"kind":"smooth_wave","rho0":1,"u0":[0,0,0],"temp0":1,"delta":0.7,"k":1}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("ic.delta"), "{err}");
    }

    #[test]
    fn environment_overrides() {
        let vars = [
            ("ESBGK_SCHEME_KAPPA".to_string(), "0.25".to_string()),
            ("ESBGK_OUTPUT_CSV_EVERY".to_string(), "4".to_string()),
            ("ESBGK_OUTPUT_DIR".to_string(), "somewhere".to_string()),
            ("HOME".to_string(), "/".to_string()),
        ];
        let cfg = parse_with_env(r#"{"scheme":{"kappa":2}}"#, vars).unwrap();
        assert_eq!(cfg.scheme.kappa, 0.25);
        assert_eq!(cfg.output.csv_every, 4);
        assert_eq!(cfg.output.dir, PathBuf::from("somewhere"));
        let bad = [("ESBGK_SCHEME_NU".to_string(), "2".to_string())];
        assert!(parse_with_env("", bad).is_err());
    }

    #[test]
    fn ladder_from_defaults() {
        let cfg = parse_config("").unwrap();
        let l = cfg.ladder().unwrap();
        assert_eq!(l.levels.len(), 5);
        assert_eq!(l.levels[4].n_cells, 160);
        assert_eq!(l.levels[0].n_cells, 10);
    }
}
