//! Strict experiment-config parsing: JSON documents are validated against
//! the known schema with every violation collected (not just the first),
//! unknown keys rejected, and defaults filled from the experiment's tuned
//! baseline.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;
use tentlab_core::experiments::{default_config, CoeffSpec, ExperimentConfig, EXPERIMENT_NAMES};

#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.join("; "))
    }
}

fn expect_f64(v: &Value, key: &str, errors: &mut Vec<String>) -> Option<f64> {
    match v.as_f64() {
        Some(x) => Some(x),
        None => {
            errors.push(format!("`{key}` must be a number"));
            None
        }
    }
}

fn expect_usize(v: &Value, key: &str, errors: &mut Vec<String>) -> Option<usize> {
    match v.as_u64() {
        Some(x) => Some(x as usize),
        None => {
            errors.push(format!("`{key}` must be a non-negative integer"));
            None
        }
    }
}

/// Parse and validate a config document. `experiment_hint` is the name
/// given on the command line, if any.
pub fn parse_config_value(
    doc: &Value,
    experiment_hint: Option<&str>,
) -> Result<ExperimentConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let obj = match doc.as_object() {
        Some(o) => o,
        None => {
            return Err(ConfigErrors(vec![
                "config root must be a JSON object".into()
            ]))
        }
    };

    const TOP_KEYS: &[&str] = &[
        "experiment",
        "grid",
        "coeffs",
        "m",
        "components",
        "p_list",
        "solver",
        "t_final",
        "seed",
        "samples",
        "tolerances",
    ];
    for key in obj.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            errors.push(format!("unknown key `{key}`"));
        }
    }

    let experiment = match (
        obj.get("experiment").and_then(|v| v.as_str()),
        experiment_hint,
    ) {
        (Some(a), Some(b)) if a != b => {
            errors.push(format!(
                "config names experiment `{a}` but the command line asked for `{b}`"
            ));
            b.to_string()
        }
        (Some(a), _) => a.to_string(),
        (None, Some(b)) => b.to_string(),
        (None, None) => {
            errors.push("missing required key `experiment`".into());
            String::new()
        }
    };
    if !experiment.is_empty() && !EXPERIMENT_NAMES.contains(&experiment.as_str()) {
        errors.push(format!("unknown experiment `{experiment}`"));
    }

    let mut cfg = default_config(&experiment);
    cfg.experiment = experiment;

    if let Some(g) = obj.get("grid") {
        match g.as_object() {
            Some(go) => {
                for key in go.keys() {
                    if !["n", "points", "box_length"].contains(&key.as_str()) {
                        errors.push(format!("unknown key `grid.{key}`"));
                    }
                }
                if let Some(v) = go.get("n") {
                    if let Some(n) = expect_usize(v, "grid.n", &mut errors) {
                        cfg.grid.n = n;
                    }
                }
                if let Some(v) = go.get("points") {
                    if let Some(p) = expect_usize(v, "grid.points", &mut errors) {
                        cfg.grid.points = p;
                    }
                }
                if let Some(v) = go.get("box_length") {
                    if let Some(l) = expect_f64(v, "grid.box_length", &mut errors) {
                        cfg.grid.box_length = l;
                    }
                }
            }
            None => errors.push("`grid` must be an object".into()),
        }
    }
    if let Some(v) = obj.get("coeffs") {
        match v.as_str() {
            Some(s) => cfg.coeffs = s.to_string(),
            None => errors.push("`coeffs` must be a preset string".into()),
        }
    }
    if let Some(v) = obj.get("m") {
        if let Some(m) = expect_usize(v, "m", &mut errors) {
            cfg.m = m;
        }
    }
    if let Some(v) = obj.get("components") {
        if let Some(n) = expect_usize(v, "components", &mut errors) {
            cfg.components = n;
        }
    }
    if let Some(v) = obj.get("p_list") {
        match v.as_array() {
            Some(arr) => {
                let mut ps = Vec::new();
                for (i, p) in arr.iter().enumerate() {
                    if let Some(x) = expect_f64(p, &format!("p_list[{i}]"), &mut errors) {
                        ps.push(x);
                    }
                }
                cfg.p_list = ps;
            }
            None => errors.push("`p_list` must be an array of numbers".into()),
        }
    }
    if let Some(s) = obj.get("solver") {
        match s.as_object() {
            Some(so) => {
                for key in so.keys() {
                    if !["dt", "theta", "tol_lin", "max_lin_iters"].contains(&key.as_str()) {
                        errors.push(format!("unknown key `solver.{key}`"));
                    }
                }
                if let Some(v) = so.get("dt") {
                    if let Some(x) = expect_f64(v, "solver.dt", &mut errors) {
                        cfg.solver.dt = x;
                    }
                }
                if let Some(v) = so.get("theta") {
                    if let Some(x) = expect_f64(v, "solver.theta", &mut errors) {
                        cfg.solver.theta = x;
                    }
                }
                if let Some(v) = so.get("tol_lin") {
                    if let Some(x) = expect_f64(v, "solver.tol_lin", &mut errors) {
                        cfg.solver.tol_lin = x;
                    }
                }
                if let Some(v) = so.get("max_lin_iters") {
                    if let Some(x) = expect_usize(v, "solver.max_lin_iters", &mut errors) {
                        cfg.solver.max_lin_iters = x;
                    }
                }
            }
            None => errors.push("`solver` must be an object".into()),
        }
    }
    if let Some(v) = obj.get("t_final") {
        if let Some(x) = expect_f64(v, "t_final", &mut errors) {
            cfg.t_final = x;
        }
    }
    if let Some(v) = obj.get("seed") {
        match v.as_u64() {
            Some(x) => cfg.seed = x,
            None => errors.push("`seed` must be a non-negative integer".into()),
        }
    }
    if let Some(v) = obj.get("samples") {
        if let Some(x) = expect_usize(v, "samples", &mut errors) {
            cfg.samples = x;
        }
    }
    if let Some(v) = obj.get("tolerances") {
        match v.as_object() {
            Some(to) => {
                let mut map = BTreeMap::new();
                for (k, val) in to {
                    match val.as_f64() {
                        Some(x) if x > 0.0 => {
                            map.insert(k.clone(), x);
                        }
                        Some(x) => {
                            errors.push(format!("tolerance `{k}` must be positive, got {x}"))
                        }
                        None => errors.push(format!("tolerance `{k}` must be a number")),
                    }
                }
                cfg.tolerances = map;
            }
            None => errors.push("`tolerances` must be an object".into()),
        }
    }

    // Domain validation on the assembled config.
    if let Err(e) = cfg.grid.build() {
        errors.push(e.to_string());
    }
    if let Err(e) = CoeffSpec::parse(&cfg.coeffs) {
        errors.push(e.to_string());
    }
    if let Err(e) = cfg.solver.validate() {
        errors.push(e.to_string());
    }
    if cfg.m == 0 || cfg.m > 3 {
        errors.push(format!("`m` = {} out of the supported range 1..=3", cfg.m));
    }
    if cfg.components == 0 {
        errors.push("`components` must be >= 1".into());
    }
    if !(cfg.t_final > 0.0) {
        errors.push(format!("`t_final` = {} must be positive", cfg.t_final));
    }
    for p in &cfg.p_list {
        if !(*p >= 1.0) {
            errors.push(format!("p = {p} must be >= 1"));
        }
    }

    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errors))
    }
}

pub fn parse_config(
    path: &Path,
    experiment_hint: Option<&str>,
) -> Result<ExperimentConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| ConfigErrors(vec![format!("invalid JSON in {}: {e}", path.display())]))?;
    parse_config_value(&doc, experiment_hint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn minimal_config_fills_defaults() {
        let doc = json!({"experiment": "run_energy_identity"});
        let cfg = parse_config_value(&doc, None).unwrap();
        assert_eq!(cfg.grid.points, 256);
        assert_eq!(cfg.solver.dt, 1e-3);
    }

    #[test]
    fn unknown_keys_and_bad_contrast_all_reported() {
        let doc = json!({
            "experiment": "run_energy_identity",
            "coeffs": "rough(0.5,1)",
            "mystery": 1,
            "grid": {"n": 1, "points": 100, "box_length": 16.0, "extra": true}
        });
        let err = parse_config_value(&doc, None).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("unknown key `mystery`"), "{text}");
        assert!(text.contains("unknown key `grid.extra`"), "{text}");
        assert!(text.contains("contrast"), "{text}");
        assert!(text.contains("power of two"), "{text}");
        assert!(err.0.len() >= 4, "all errors listed: {text}");
    }

    #[test]
    fn roundtrip_preserves_hash() {
        let cfg = default_config("run_carleson_bmo");
        let text = serde_json::to_string(&cfg).unwrap();
        let doc: Value = serde_json::from_str(&text).unwrap();
        let back = parse_config_value(&doc, None).unwrap();
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn experiment_mismatch_is_an_error() {
        let doc = json!({"experiment": "run_energy_identity"});
        assert!(parse_config_value(&doc, Some("run_conservation")).is_err());
    }
}
