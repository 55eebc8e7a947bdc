//! JSON run configuration shared by every subcommand, so prediction, sweep
//! and comparison always see the same parameters.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelSpec, NodeState};
use crate::error::{Error, Result};
use crate::layer_model::{analytic_layers, LayerParams};
use crate::network::{bfs_shells, load_edge_list};
use crate::simulate::{linspace, ControlTemplate, NetworkRecipe, NodeSelection, SimOptions, DEFAULT_DT, MAX_DT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkConfig {
    Er { n: usize, k: f64 },
    Ba { n: usize, m: usize },
    File { path: PathBuf },
}

fn default_duration() -> f64 {
    60.0
}

fn default_selection() -> NodeSelection {
    NodeSelection::Random
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub u_s: f64,
    pub v_s: f64,
    #[serde(default = "default_selection")]
    pub selection: NodeSelection,
    #[serde(rename = "T", default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub post_release_time: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_stride() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            record_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisConfig {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.points)
    }
}

impl Default for AxisConfig {
    fn default() -> Self {
        Self {
            min: 0.0,
            max: 3.0,
            points: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub u_axis: AxisConfig,
    #[serde(default)]
    pub v_axis: AxisConfig,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_reps() -> usize {
    10
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            u_axis: AxisConfig::default(),
            v_axis: AxisConfig::default(),
            reps: default_reps(),
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    #[serde(default = "default_rays")]
    pub n_rays: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_rays() -> usize {
    21
}

fn default_tol() -> f64 {
    1e-3
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            n_rays: default_rays(),
            tol: default_tol(),
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub model: ModelSpec,
    pub control: ControlConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match &self.network {
            NetworkConfig::Er { n, k } if *n < 3 || !(*k > 0.0) || *k > (*n as f64 - 1.0) => {
                return bad(format!("er network needs n >= 3 and 0 < k <= n-1 (n={n}, k={k})"));
            }
            NetworkConfig::Ba { n, m } if *m < 1 || *n <= *m => {
                return bad(format!("ba network needs n > m >= 1 (n={n}, m={m})"));
            }
            _ => {}
        }
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        let c = &self.control;
        if !NodeState::new(c.u_s, c.v_s).is_valid() {
            return bad(format!("clamp ({}, {}) must be finite and non-negative", c.u_s, c.v_s));
        }
        if !(c.duration > 0.0) || !(c.post_release_time >= 0.0) {
            return bad("control T must be > 0 and post_release_time >= 0".into());
        }
        if let NodeSelection::Ids { ids } = &c.selection {
            if ids.is_empty() {
                return bad("control id list is empty".into());
            }
        }
        if !(self.numerics.dt > 0.0 && self.numerics.dt <= MAX_DT) {
            return bad(format!("dt must lie in (0, {MAX_DT}]"));
        }
        let s = &self.sweep;
        for axis in [&s.u_axis, &s.v_axis] {
            if axis.points == 0 || !(axis.min >= 0.0) || axis.max < axis.min {
                return bad(format!("invalid sweep axis {axis:?}"));
            }
        }
        if s.reps == 0 {
            return bad("sweep reps must be >= 1".into());
        }
        if self.boundary.n_rays < 2 || !(self.boundary.tol > 0.0) {
            return bad("boundary needs n_rays >= 2 and tol > 0".into());
        }
        Ok(())
    }

    pub fn recipe(&self) -> Result<NetworkRecipe> {
        Ok(match &self.network {
            NetworkConfig::Er { n, k } => NetworkRecipe::Er { n: *n, k: *k },
            NetworkConfig::Ba { n, m } => NetworkRecipe::Ba { n: *n, m: *m },
            NetworkConfig::File { path } => NetworkRecipe::Fixed(Arc::new(load_edge_list(path)?.0)),
        })
    }

    pub fn control_template(&self) -> ControlTemplate {
        ControlTemplate {
            selection: self.control.selection.clone(),
            duration: self.control.duration,
            post_release_time: self.control.post_release_time,
        }
    }

    /// Analytic layers for the configured network. A single controlled node
    /// seeds the first layer with `k` nodes; larger sets use the first-shell
    /// size measured on the network drawn from `master_seed`.
    pub fn prediction_layers(&self, recipe: &NetworkRecipe) -> Result<LayerParams> {
        let (n, k) = recipe.nominal();
        let seed_layer = match self.control.selection {
            NodeSelection::Random => k,
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.sweep.master_seed);
                let g = recipe.build(rng.next_u64())?;
                let nodes = self.control.selection.pick(&g, &mut rng)?;
                bfs_shells(&g, &nodes)?.members(1).len() as f64
            }
        };
        analytic_layers(n, k, seed_layer)
    }

    pub fn clamp(&self) -> NodeState {
        NodeState::new(self.control.u_s, self.control.v_s)
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            dt: self.numerics.dt,
            record_stride: self.numerics.record_stride,
            ..SimOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "network": {"type": "ba", "n": 5000, "m": 5},
        "model": {"variant": "GeneRegulationNormalized", "params": {"B1": 1.3, "B2": 1.5}},
        "control": {"u_s": 2.0, "v_s": 2.0, "T": 60},
        "sweep": {"reps": 10, "master_seed": 42}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(SAMPLE).unwrap();
        assert_eq!(c.numerics.dt, 0.01);
        assert_eq!(c.sweep.u_axis.values().len(), 11);
        assert_eq!(c.control.selection, NodeSelection::Random);
        assert_eq!(c.boundary.n_rays, 21);
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn round_trip_is_identical() {
        let c = RunConfig::from_json(SAMPLE).unwrap();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), c.to_json());
    }

    #[test]
    fn unknown_keys_rejected() {
        let extra = SAMPLE.replace("\"T\": 60", "\"T\": 60, \"speed\": 3");
        assert!(matches!(RunConfig::from_json(&extra), Err(Error::Config(_))));
        let top = SAMPLE.replacen('{', "{\"bogus\": 1,", 1);
        assert!(RunConfig::from_json(&top).is_err());
        let param = SAMPLE.replace("\"B2\": 1.5", "\"B2\": 1.5, \"B3\": 2");
        assert!(RunConfig::from_json(&param).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for (from, to) in [
            ("\"m\": 5", "\"m\": 0"),
            ("\"B1\": 1.3", "\"B1\": -1.3"),
            ("\"u_s\": 2.0", "\"u_s\": -2.0"),
            ("\"reps\": 10", "\"reps\": 0"),
        ] {
            let text = SAMPLE.replace(from, to);
            assert!(RunConfig::from_json(&text).is_err(), "{to}");
        }
    }
}
