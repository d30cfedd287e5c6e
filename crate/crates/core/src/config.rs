//! File formats for synthesis configs, controllers, manifests and the
//! embedded example presets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::datalab::{dataset_to_json, Dataset};
use crate::io::{self, IoError, MatrixRecord};
use crate::lmi::{box_constraint_rows, make_constraint_rows, BoxBound, ConstraintRows, LmiError, Mode, Weights};
use crate::plants::{parse_plant, Plant, PlantError};
use crate::synthesis::{Controller, SynthSettings, Synthesis};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub q: MatrixRecord,
    pub r: MatrixRecord,
}

/// Explicit `C x + D u ≤ 1` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSpec {
    pub c: MatrixRecord,
    pub d: MatrixRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintSpec {
    pub state: Vec<BoxBound>,
    pub input: Vec<BoxBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<RowSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LureSpec {
    pub h: MatrixRecord,
    pub beta: MatrixRecord,
}

/// Synthesis problem description (TOML or JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub mode: Mode,
    pub x0: Vec<f64>,
    pub weights: WeightSpec,
    #[serde(default)]
    pub constraints: ConstraintSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lure: Option<LureSpec>,
    #[serde(default)]
    pub settings: SynthSettings,
}

impl SynthConfig {
    pub fn x0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }

    pub fn weights(&self) -> Result<Weights, ConfigError> {
        Ok(Weights::new(self.weights.q.to_matrix("weights.q")?, self.weights.r.to_matrix("weights.r")?)?)
    }

    /// Box rows first, then explicit rows.
    pub fn rows(&self, n: usize, m: usize) -> Result<ConstraintRows, ConfigError> {
        let mut rows = box_constraint_rows(n, m, &self.constraints.state, &self.constraints.input)?;
        if let Some(spec) = &self.constraints.rows {
            let c = spec.c.to_matrix("constraints.rows.c")?;
            let d = spec.d.to_matrix("constraints.rows.d")?;
            if c.nrows() != d.nrows() || c.ncols() != n || d.ncols() != m {
                return Err(ConfigError::Invalid(format!(
                    "constraints.rows: C is {}x{}, D is {}x{}, expected rx{n} and rx{m}",
                    c.nrows(),
                    c.ncols(),
                    d.nrows(),
                    d.ncols()
                )));
            }
            let extra = make_constraint_rows(&c, &DMatrix::zeros(0, m))?;
            for (i, mut row) in extra.rows.into_iter().enumerate() {
                row.d = d.row(i).iter().copied().collect();
                rows.rows.push(row);
            }
        }
        Ok(rows)
    }

    pub fn lure_matrices(&self) -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>, ConfigError> {
        self.lure.as_ref().map(|l| Ok((l.h.to_matrix("lure.h")?, l.beta.to_matrix("lure.beta")?))).transpose()
    }

    pub fn check_dims(&self, n: usize, m: usize) -> Result<(), ConfigError> {
        if self.x0.len() != n {
            return Err(ConfigError::Invalid(format!("x0 has length {}, data have n = {n}", self.x0.len())));
        }
        let w = self.weights()?;
        if w.n() != n || w.m() != m {
            return Err(ConfigError::Invalid(format!("weights are for (n, m) = ({}, {}), data have ({n}, {m})", w.n(), w.m())));
        }
        Ok(())
    }
}

pub fn parse_synth_config(text: &str, origin: &str) -> Result<SynthConfig, ConfigError> {
    Ok(if origin.ends_with(".json") { io::from_json(text, origin)? } else { io::from_toml(text, origin)? })
}

/// On-disk controller: the gain, its certificate inputs and provenance digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerFile {
    pub controller: Controller,
    pub config: SynthConfig,
    pub settings_digest: String,
    pub dataset_digests: Vec<String>,
    pub solver_status: String,
    pub cap_used: f64,
}

impl ControllerFile {
    pub fn new(syn: &Synthesis, config: &SynthConfig, datasets: &[Dataset]) -> Self {
        Self {
            controller: syn.controller.clone(),
            config: config.clone(),
            settings_digest: io::digest_bytes(io::to_json(&config.settings).as_bytes()),
            dataset_digests: datasets.iter().map(dataset_digest).collect(),
            solver_status: syn.solution.status.as_str().to_string(),
            cap_used: syn.cap_used,
        }
    }
}

pub fn dataset_digest(d: &Dataset) -> String {
    io::digest_bytes(dataset_to_json(d).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self, IoError> {
        Ok(Self { path: path.display().to_string(), sha256: io::digest_file(path)? })
    }
}

/// Everything needed to re-run a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub parameters: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub plants: Vec<String>,
    pub x0: Vec<f64>,
    pub length: usize,
    pub seeds: Vec<u64>,
    pub input_bounds: Vec<f64>,
    #[serde(default)]
    pub record_w: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub plant: String,
    pub x0: Vec<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub k: MatrixRecord,
}

/// A complete example: experiment design, synthesis problem, validation run
/// and a published reference gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub version: u32,
    pub name: String,
    pub title: String,
    pub experiment: ExperimentSpec,
    pub synth: SynthConfig,
    pub simulation: SimulationSpec,
    pub reference: ReferenceSpec,
}

const RESOURCES: &[(&str, &str)] = &[
    ("one.toml", include_str!("../presets/one.toml")),
    ("one_vertex1.toml", include_str!("../presets/one_vertex1.toml")),
    ("one_vertex2.toml", include_str!("../presets/one_vertex2.toml")),
    ("one_mixture.toml", include_str!("../presets/one_mixture.toml")),
    ("two.toml", include_str!("../presets/two.toml")),
    ("two_plant.toml", include_str!("../presets/two_plant.toml")),
];

pub fn preset_resource(name: &str) -> Option<&'static str> {
    RESOURCES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Result<Preset, ConfigError> {
    let file = format!("{name}.toml");
    let text = preset_resource(&file).ok_or_else(|| ConfigError::Invalid(format!("unknown example {name:?} (expected one or two)")))?;
    Ok(io::from_toml(text, &file)?)
}

pub fn preset_plant(file: &str) -> Result<Plant, ConfigError> {
    let text = preset_resource(file).ok_or_else(|| ConfigError::Invalid(format!("preset plant {file:?} is not embedded")))?;
    Ok(parse_plant(text, file)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_agree_on_dimensions() {
        for name in ["one", "two"] {
            let p = preset(name).unwrap();
            let plants: Vec<Plant> = p.experiment.plants.iter().map(|f| preset_plant(f).unwrap()).collect();
            let (n, m) = (plants[0].n(), plants[0].m());
            p.synth.check_dims(n, m).unwrap();
            assert_eq!(p.experiment.seeds.len(), plants.len());
            assert_eq!(p.reference.k.to_matrix("k").unwrap().shape(), (m, n));
            assert_eq!(preset_plant(&p.simulation.plant).unwrap().n(), n);
        }
        assert!(preset("three").is_err());
    }

    #[test]
    fn example_two_rows() {
        let p = preset("two").unwrap();
        let rows = p.synth.rows(4, 1).unwrap();
        assert_eq!(rows.len(), 6);
        assert!((rows.rows[0].c[0] - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(p.synth.mode, Mode::Lure);
        assert!(p.synth.lure_matrices().unwrap().is_some());
    }

    #[test]
    fn explicit_rows_are_appended() {
        let text = r#"
mode = "nominal"
x0 = [0.5]
weights = { q = { rows = 1, cols = 1, data = [1.0] }, r = { rows = 1, cols = 1, data = [1.0] } }
[constraints]
input = [{ index = 0, lower = -2.0, upper = 4.0 }]
rows = { c = { rows = 1, cols = 1, data = [0.5] }, d = { rows = 1, cols = 1, data = [0.25] } }
[settings.solver]
delta = 1e-7
"#;
        let cfg = parse_synth_config(text, "cfg.toml").unwrap();
        let rows = cfg.rows(1, 1).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows.rows[0].d, vec![0.25]);
        assert_eq!(rows.rows[1].d, vec![-0.5]);
        assert_eq!((rows.rows[2].c.clone(), rows.rows[2].d.clone()), (vec![0.5], vec![0.25]));
        assert_eq!(cfg.settings.solver.delta, 1e-7);
        assert_eq!(cfg.settings.solver.feas_tol, 1e-8);
    }

    #[test]
    fn config_errors_name_the_location() {
        let err = parse_synth_config("mode = \"nominal\"\nx0 = [\"a\"]\n", "bad.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.toml"), "{msg}");
    }
}
