use std::path::Path;

use serde::{Deserialize, Serialize};

use linsys_core::kernel::{BcppJson, KernelJson, KernelSpec};
use linsys_core::{Kernel, Site};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSite {
    pub x: Vec<i32>,
    pub mass: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative tolerance in `max(rel |reference|, k SE)`.
    pub rel: Option<f64>,
    pub k: Option<f64>,
    /// Growth slack for the overlap decay check.
    pub slack: Option<f64>,
    /// Accepted log-log slope window for the overlap decay check.
    pub slope_window: Option<[f64; 2]>,
    /// Required variance reduction for the central limit check.
    pub variance_shrink: Option<f64>,
}

/// Output file names, relative to `--output-dir`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub json: Option<String>,
    pub csv: Option<String>,
}

/// Everything a subcommand may read. Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bcpp: Option<BcppJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelJson>,
    #[serde(default)]
    pub initial: Vec<InitialSite>,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    pub replicas: Option<u64>,
    pub samples: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dual: bool,
    /// Box radius (oracle, truncated Green solver).
    pub radius: Option<usize>,
    /// Quadrature resolution or Green box radius.
    pub resolution: Option<usize>,
    /// Green solver name.
    pub method: Option<String>,
    /// Weighted-walk path sampler name.
    pub sampler: Option<String>,
    /// `"one"` or `"delta0"` for the fk3 subcommand.
    pub observable: Option<String>,
    /// Offsets at which to report G, h or covariances.
    #[serde(default)]
    pub offsets: Vec<Vec<i32>>,
    pub max_occupied: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: Outputs,
}

impl RunConfig {
    /// Reads a file path, or inline JSON when the argument starts with `{`.
    pub fn load(arg: &str) -> Result<RunConfig, CliError> {
        let text = if arg.trim_start().starts_with('{') {
            arg.to_string()
        } else {
            std::fs::read_to_string(Path::new(arg)).map_err(|e| CliError::Config(format!("reading {arg}: {e}")))?
        };
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        match (&self.bcpp, &self.kernel) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either \"bcpp\" or \"kernel\", not both".into())),
            (None, None) => return Err(CliError::Config("missing kernel: expected \"bcpp\": {d, lambda} or \"kernel\": {d, atoms}".into())),
            _ => {}
        }
        for (i, s) in self.initial.iter().enumerate() {
            if !(s.mass.is_finite() && s.mass > 0.0) {
                return Err(CliError::Config(format!("initial[{i}].mass must be a positive number, got {}", s.mass)));
            }
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("t_grid must be nonnegative and strictly increasing".into()));
        }
        Ok(())
    }

    pub fn kernel(&self) -> linsys_core::Result<Kernel> {
        match (&self.bcpp, &self.kernel) {
            (Some(b), _) => KernelSpec::Bcpp(b.clone()).build(),
            (_, Some(k)) => KernelSpec::Atoms(k.clone()).build(),
            _ => unreachable!("checked at parse time"),
        }
    }

    pub fn dim(&self) -> usize {
        self.bcpp.as_ref().map(|b| b.d).or(self.kernel.as_ref().map(|k| k.d)).unwrap_or(0)
    }

    /// The initial configuration; a unit mass at the origin when omitted.
    pub fn initial_sites(&self) -> linsys_core::Result<Vec<(Site, f64)>> {
        if self.initial.is_empty() {
            return Ok(vec![(Site::origin(self.dim()), 1.0)]);
        }
        self.initial.iter().map(|s| Ok((Site::new(&s.x)?, s.mass))).collect()
    }

    pub fn offset_sites(&self, default: &[Vec<i32>]) -> linsys_core::Result<Vec<Site>> {
        let list = if self.offsets.is_empty() { default } else { &self.offsets };
        list.iter().map(|x| Site::new(x)).collect()
    }

    pub fn grid_or(&self, default: &[f64]) -> Vec<f64> {
        if self.t_grid.is_empty() {
            default.to_vec()
        } else {
            self.t_grid.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_instance_parses() {
        let c = RunConfig::parse(
            r#"{"bcpp":{"d":3,"lambda":1.0},"initial":[{"x":[0,0,0],"mass":1}],"t_grid":[1,5,10],"replicas":10000,"seed":42}"#,
        )
        .unwrap();
        assert_eq!(c.replicas, Some(10000));
        assert_eq!(c.seed, 42);
        assert_eq!(c.kernel().unwrap().dim(), 3);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::parse(r#"{"bcpp":{"d":3,"lambda":1.0},"replica":5}"#).unwrap_err();
        assert!(e.to_string().contains("replica"), "{e}");
    }

    #[test]
    fn probability_sum_error_names_atoms() {
        let c = RunConfig::parse(
            r#"{"kernel":{"d":1,"atoms":[{"p":0.5,"v":[{"x":[0],"val":1}]},{"p":0.4,"v":[]}]}}"#,
        )
        .unwrap();
        let e = c.kernel().unwrap_err();
        assert!(e.to_string().contains("atoms[*].p"), "{e}");
    }

    #[test]
    fn default_initial_is_origin() {
        let c = RunConfig::parse(r#"{"bcpp":{"d":2,"lambda":1.0}}"#).unwrap();
        assert_eq!(c.initial_sites().unwrap(), vec![(Site::origin(2), 1.0)]);
    }

    #[test]
    fn bad_grid_rejected() {
        assert!(RunConfig::parse(r#"{"bcpp":{"d":2,"lambda":1.0},"t_grid":[2,1]}"#).is_err());
    }
}
