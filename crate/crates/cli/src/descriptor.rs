//! Experiment descriptors: a base configuration plus sweep axes, expanded to
//! a grid of [`SimConfig`]s.
//!
//! ```json
//! {
//!   "name": "high-reuse",
//!   "base": {"m": "3lnn", "gamma_r": 1.5, "policy": {"kind": "zipf", "gamma_c": 1.5},
//!            "r": {"auto": {"c": 1.5}}, "trials": 200},
//!   "axes": [{"param": "n", "values": [250, 500, 1000]}],
//!   "output": "high-reuse.csv"
//! }
//! ```
//!
//! The seed comes from the command line and must not appear in `base`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use d2dcache::harness::SimConfig;
use serde::Deserialize;
use serde_json::{Map, Value};

/// Config fields an axis may vary.
pub const AXIS_FIELDS: [&str; 7] = ["n", "m", "gamma_r", "policy", "r", "trials", "exact_cutoff"];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDescriptor {
    pub name: String,
    pub base: Map<String, Value>,
    #[serde(default)]
    pub axes: Vec<Axis>,
    pub output: PathBuf,
}

impl ExperimentDescriptor {
    pub fn parse(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| format!("descriptor field `{}`: {}", e.path(), e.inner()))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    /// Cartesian product of the axes over `base`, first axis outermost.
    pub fn expand(&self, seed: u64) -> Result<Vec<SimConfig>, String> {
        if self.base.contains_key("seed") {
            return Err("`base.seed` is not allowed; pass --seed".into());
        }
        let mut seen = HashSet::new();
        for (i, axis) in self.axes.iter().enumerate() {
            if !AXIS_FIELDS.contains(&axis.param.as_str()) {
                return Err(format!("axes[{i}].param: unknown config field `{}`", axis.param));
            }
            if !seen.insert(axis.param.as_str()) {
                return Err(format!("axes[{i}].param: `{}` appears twice", axis.param));
            }
            if axis.values.is_empty() {
                return Err(format!("axes[{i}].values: empty"));
            }
            let mut distinct = HashSet::new();
            for v in &axis.values {
                if !distinct.insert(v.to_string()) {
                    return Err(format!("axes[{i}].values: duplicate value {v}"));
                }
            }
        }

        let mut points = vec![self.base.clone()];
        points[0].insert("seed".into(), Value::from(seed));
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(axis.param.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        points
            .into_iter()
            .enumerate()
            .map(|(k, p)| {
                serde_path_to_error::deserialize(Value::Object(p))
                    .map_err(|e| format!("grid point {k}, field `{}`: {}", e.path(), e.inner()))
            })
            .collect()
    }
}
