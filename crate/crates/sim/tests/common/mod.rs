#![allow(dead_code)]

use std::path::PathBuf;

use dampc::config::{Experiment, ExperimentConfig};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn paper_config() -> ExperimentConfig {
    let text = std::fs::read_to_string(config_path("paper_example.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn feasible_config() -> ExperimentConfig {
    let text = std::fs::read_to_string(config_path("paper_example_feasible_start.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// The feasible-start example with `edit` applied.
pub fn feasible_with(edit: impl FnOnce(&mut ExperimentConfig)) -> Experiment {
    let mut cfg = feasible_config();
    edit(&mut cfg);
    Experiment::new(cfg).unwrap()
}

/// Two states, one inert parameter, no disturbance: the plant is known
/// exactly and `x⁺ = A₀x + u`.
pub fn certain_config_json() -> String {
    r#"{
      "schema_version": 1,
      "system": {
        "a": [[[0.7, 0.2], [0.0, 0.8]], [[0.0, 0.0], [0.0, 0.0]]],
        "b": [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0], [0.0, 0.0]]],
        "theta": {"box": [[-1.0, 1.0]]},
        "disturbance": {"box": [[0.0, 0.0], [0.0, 0.0]]},
        "constraints": {"state_bounds": [[-5.0, 5.0], [-5.0, 5.0]], "input_bounds": [[-1.0, 1.0], [-1.0, 1.0]]}
      },
      "tube": {
        "shape": {"box": [[-1.0, 1.0], [-1.0, 1.0]]},
        "vertices": [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]],
        "gain": [[0.0, 0.0], [0.0, 0.0]],
        "horizon": 5,
        "n_hat": [2]
      },
      "identification": {"theta_hat0": [0.0]},
      "run": {"x0": [2.0, -1.5], "steps": 6, "seeds": [0], "theta_star": [0.3]},
      "weights": {"q": [[1.0, 0.0], [0.0, 1.0]], "r": [[1.0, 0.0], [0.0, 1.0]]}
    }"#
    .to_string()
}
