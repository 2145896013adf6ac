//! Flat JSON run configuration. Missing keys fall back to the reference
//! scenario (50 m × 50 m area, 50 workers, h = 5 m, g = 90 dB, B = 60 MHz,
//! a1 = 1000, a2 = 200, η = 0.5, Γ = −30 dB, α = 2, b ∈ [1e-4, 1.5e-4]).
//! Decibel values are converted to linear here and nowhere else.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::deployment::{LowerMedian, Mechanism, Med, Opt};
use crate::error::{Error, Result};
use crate::experiments::ExperimentConfig;
use crate::game::SolverConfig;
use crate::model::RadioParams;

pub const VALID_KEYS: &[&str] = &[
    "a1",
    "a2",
    "alpha",
    "alpha_values",
    "area_side",
    "b_max",
    "b_min",
    "bandwidth",
    "br_max_iters",
    "br_tolerance",
    "cnr_db",
    "eta",
    "foc_tolerance",
    "gamma_db",
    "height",
    "mechanism",
    "misreport_grid",
    "n_values",
    "n_workers",
    "pc_grid_points",
    "pc_upper_bound",
    "refine_iters",
    "replications",
    "seed",
    "verify_mechanism",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismChoice {
    /// Coordinatewise median; even rosters average the two middle reports.
    Med,
    /// Generalized median with lower-median phantoms.
    Gmed,
    /// Utility-maximizing placement.
    Opt,
}

impl MechanismChoice {
    pub fn mechanism(self) -> &'static dyn Mechanism {
        match self {
            MechanismChoice::Med => &Med,
            MechanismChoice::Gmed => &LowerMedian,
            MechanismChoice::Opt => &Opt,
        }
    }

    fn parse(key: &'static str, s: &str) -> Result<Self> {
        match s {
            "med" => Ok(Self::Med),
            "gmed" => Ok(Self::Gmed),
            "opt" => Ok(Self::Opt),
            other => Err(Error::Config(format!(
                "{key} must be one of med, gmed, opt; got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    a1: Option<f64>,
    a2: Option<f64>,
    alpha: Option<f64>,
    alpha_values: Option<Vec<f64>>,
    area_side: Option<f64>,
    b_max: Option<f64>,
    b_min: Option<f64>,
    bandwidth: Option<f64>,
    br_max_iters: Option<usize>,
    br_tolerance: Option<f64>,
    cnr_db: Option<f64>,
    eta: Option<f64>,
    foc_tolerance: Option<f64>,
    gamma_db: Option<f64>,
    height: Option<f64>,
    mechanism: Option<String>,
    misreport_grid: Option<usize>,
    n_values: Option<Vec<usize>>,
    n_workers: Option<usize>,
    pc_grid_points: Option<usize>,
    pc_upper_bound: Option<f64>,
    refine_iters: Option<usize>,
    replications: Option<usize>,
    seed: Option<u64>,
    verify_mechanism: Option<String>,
}

/// Everything a run needs, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParsedConfig {
    pub radio: RadioParams,
    pub experiment: ExperimentConfig,
    pub solver: SolverConfig,
    /// Roster size for `solve`, `deploy` and `verify`.
    pub n_workers: usize,
    /// Mechanism used by `deploy`.
    pub mechanism: MechanismChoice,
    /// Mechanism whose strategyproofness `verify` checks.
    pub verify_mechanism: MechanismChoice,
    pub misreport_grid: usize,
}

impl Default for ParsedConfig {
    fn default() -> Self {
        parse_config("").expect("empty config is valid")
    }
}

impl ParsedConfig {
    /// SHA-256 of the canonical JSON of the resolved configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn seed(&self) -> u64 {
        self.experiment.seed
    }
}

pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    let value: serde_json::Value = if text.trim().is_empty() {
        serde_json::Value::Object(Default::default())
    } else {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed JSON: {e}")))?
    };
    let map = value
        .as_object()
        .ok_or_else(|| Error::Config("top level must be a JSON object".into()))?;
    for key in map.keys() {
        if !VALID_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "unknown key `{key}`; valid keys: {}",
                VALID_KEYS.join(", ")
            )));
        }
    }
    for (key, v) in map {
        let single = serde_json::json!({ key.clone(): v.clone() });
        serde_json::from_value::<RawConfig>(single)
            .map_err(|e| Error::Config(format!("key `{key}`: {e}")))?;
    }
    let raw: RawConfig = serde_json::from_value(value)?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<ParsedConfig> {
    let named = |e: Error| match e {
        Error::InvalidParameter { reason, .. } => Error::Config(reason),
        other => other,
    };
    let alpha = raw.alpha.unwrap_or(2.0);
    let radio = RadioParams::from_db(
        raw.bandwidth.unwrap_or(6e7),
        raw.cnr_db.unwrap_or(90.0),
        alpha,
        raw.height.unwrap_or(5.0),
        raw.eta.unwrap_or(0.5),
        raw.gamma_db.unwrap_or(-30.0),
        raw.a1.unwrap_or(1000.0),
        raw.a2.unwrap_or(200.0),
    )
    .map_err(named)?;

    let defaults = SolverConfig::default();
    let solver = SolverConfig {
        br_tolerance: raw.br_tolerance.unwrap_or(defaults.br_tolerance),
        br_max_iters: raw.br_max_iters.unwrap_or(defaults.br_max_iters),
        foc_tolerance: raw.foc_tolerance.unwrap_or(defaults.foc_tolerance),
        pc_grid_points: raw.pc_grid_points.unwrap_or(defaults.pc_grid_points),
        pc_upper_bound: raw.pc_upper_bound.or(defaults.pc_upper_bound),
        refine_iters: raw.refine_iters.unwrap_or(defaults.refine_iters),
    };
    solver.validate().map_err(named)?;

    let base = ExperimentConfig::default();
    let experiment = ExperimentConfig {
        n_values: raw.n_values.unwrap_or(base.n_values),
        alpha_values: raw.alpha_values.unwrap_or_else(|| vec![alpha]),
        replications: raw.replications.unwrap_or(base.replications),
        base_radio: radio,
        task_side: raw.area_side.unwrap_or(base.task_side),
        b_range: (
            raw.b_min.unwrap_or(base.b_range.0),
            raw.b_max.unwrap_or(base.b_range.1),
        ),
        seed: raw.seed.unwrap_or(base.seed),
    };
    experiment.validate().map_err(named)?;

    let n_workers = raw.n_workers.unwrap_or(50);
    if n_workers == 0 {
        return Err(Error::Config("n_workers must be >= 1".into()));
    }
    let misreport_grid = raw.misreport_grid.unwrap_or(21);
    if misreport_grid < 2 {
        return Err(Error::Config("misreport_grid must be >= 2".into()));
    }
    let mechanism = match raw.mechanism {
        Some(s) => MechanismChoice::parse("mechanism", &s)?,
        None => MechanismChoice::Med,
    };
    let verify_mechanism = match raw.verify_mechanism {
        Some(s) => MechanismChoice::parse("verify_mechanism", &s)?,
        None => MechanismChoice::Gmed,
    };
    Ok(ParsedConfig {
        radio,
        experiment,
        solver,
        n_workers,
        mechanism,
        verify_mechanism,
        misreport_grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_reference_scenario() {
        for text in ["", "  \n", "{}"] {
            let c = parse_config(text).unwrap();
            assert_eq!(c.radio, RadioParams::default());
            assert_eq!(c.radio.cnr, 1e9);
            assert_eq!(c.radio.bandwidth, 6e7);
            assert_eq!(c.radio.height, 5.0);
            assert_eq!((c.radio.a1, c.radio.a2), (1000.0, 200.0));
            assert!((c.radio.kappa - 2000.0).abs() < 1e-9);
            assert_eq!(c.radio.pathloss_alpha, 2.0);
            assert_eq!(c.n_workers, 50);
            assert_eq!(c.experiment.task_side, 50.0);
            assert_eq!(c.experiment.b_range, (1e-4, 1.5e-4));
            assert_eq!(c.solver, SolverConfig::default());
            assert_eq!(c.mechanism, MechanismChoice::Med);
        }
    }

    #[test]
    fn db_inputs_convert_to_kappa() {
        let c = parse_config(r#"{"gamma_db": -30, "eta": 0.5}"#).unwrap();
        assert!((c.radio.kappa - 2000.0).abs() < 1e-9);
        let c = parse_config(r#"{"gamma_db": -20, "eta": 0.25}"#).unwrap();
        assert!((c.radio.kappa - 400.0).abs() < 1e-9);
    }

    #[test]
    fn small_alpha_is_rejected_by_name() {
        let err = parse_config(r#"{"alpha": 1.5}"#).unwrap_err().to_string();
        assert!(err.contains("pathloss_alpha must be ≥ 2"), "{err}");
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = parse_config(r#"{"alpah": 2}"#).unwrap_err().to_string();
        assert!(err.contains("alpah"), "{err}");
        assert!(
            err.contains("gamma_db") && err.contains("n_workers"),
            "{err}"
        );
    }

    #[test]
    fn wrong_type_names_the_key() {
        let err = parse_config(r#"{"n_workers": "many"}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("n_workers"), "{err}");
        let err = parse_config(r#"{"mechanism": "dictator"}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("mechanism"), "{err}");
    }

    #[test]
    fn out_of_range_values_name_the_invariant() {
        let err = parse_config(r#"{"eta": 1.5}"#).unwrap_err().to_string();
        assert!(err.contains("eta"), "{err}");
        let err = parse_config(r#"{"replications": 0}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("replications"), "{err}");
        let err = parse_config(r#"{"b_min": 2e-4}"#).unwrap_err().to_string();
        assert!(err.contains("b_min"), "{err}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse_config("{}").unwrap();
        let b = parse_config(r#"{"seed": 0}"#).unwrap();
        let c = parse_config(r#"{"seed": 1}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
