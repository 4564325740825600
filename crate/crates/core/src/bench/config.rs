//! Experiment specs, read from TOML.
//!
//! ```toml
//! [experiment]
//! scenario = "dataset"      # or "grid"
//! poi = "sf_poi.csv"        # dataset scenario: POI CSV, relative to the spec
//! samples = 5000
//! seed = 7
//! q_max = 1.5               # optional worst-case bound (km)
//!
//! [[mechanism]]
//! kind = "laplace"
//! range = [0.4, 40.0]       # or: values = [...]
//! points = 20
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{LppmError, Result};
use crate::geo::DistanceFn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    #[default]
    Dataset,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemapKind {
    #[default]
    Optimal,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceKind {
    #[default]
    Euclidean,
    SquaredEuclidean,
    TagHamming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Laplace,
    Gaussian,
    Circular,
    Coin,
    Exponential,
    Ba,
    Shokri,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Laplace => "laplace",
            MechanismKind::Gaussian => "gaussian",
            MechanismKind::Circular => "circular",
            MechanismKind::Coin => "coin",
            MechanismKind::Exponential => "exponential",
            MechanismKind::Ba => "ba",
            MechanismKind::Shokri => "shokri",
        }
    }

    pub fn is_sampler(self) -> bool {
        matches!(self, MechanismKind::Laplace | MechanismKind::Gaussian | MechanismKind::Circular)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

pub const DEFAULT_POINTS: usize = 20;
pub const DEFAULT_SAMPLES: usize = 5000;

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_side() -> usize {
    5
}

fn default_cell() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default)]
    pub scenario: ScenarioKind,
    /// POI/prior CSV for the dataset scenario.
    pub poi: Option<PathBuf>,
    /// Keep only this many highest-mass POIs (prior renormalised).
    pub max_pois: Option<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    pub q_max: Option<f64>,
    #[serde(default)]
    pub remap: RemapKind,
    #[serde(default)]
    pub dq: DistanceKind,
    #[serde(default)]
    pub dp: DistanceKind,
    /// Spacing (km) of a regular output grid for discrete mechanisms;
    /// outputs are the POIs themselves when absent.
    pub output_grid_km: Option<f64>,
    #[serde(default = "default_side")]
    pub grid_side: usize,
    #[serde(default = "default_cell")]
    pub cell_km: f64,
    pub tags: Option<Vec<String>>,
    /// Optional metrics to report, among `p_gi`, `p_wc_ae`, `p_wc_ce`.
    /// The loss, average-error and entropy columns are always filled.
    pub metrics: Option<Vec<String>>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSweep {
    pub kind: MechanismKind,
    pub values: Option<Vec<f64>>,
    pub range: Option<[f64; 2]>,
    pub points: Option<usize>,
    #[serde(default)]
    pub spacing: Spacing,
}

impl MechanismSweep {
    pub fn parameters(&self) -> Result<Vec<f64>> {
        let kind = self.kind.name();
        let params = match (&self.values, &self.range) {
            (Some(v), None) => v.clone(),
            (None, Some([lo, hi])) => {
                let n = self.points.unwrap_or(DEFAULT_POINTS);
                if n == 0 || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(LppmError::Config(format!("{kind}: bad range [{lo}, {hi}] with {n} points")));
                }
                if n == 1 {
                    return Ok(vec![*lo]);
                }
                let t = |i: usize| i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => (0..n).map(|i| lo + (hi - lo) * t(i)).collect(),
                    Spacing::Log => {
                        if !(*lo > 0.0) {
                            return Err(LppmError::Config(format!("{kind}: log spacing needs a positive range")));
                        }
                        let (a, b) = (lo.ln(), hi.ln());
                        (0..n).map(|i| if i == n - 1 { *hi } else { (a + (b - a) * t(i)).exp() }).collect()
                    }
                }
            }
            _ => return Err(LppmError::Config(format!("{kind}: give exactly one of `values` or `range`"))),
        };
        if params.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(LppmError::Config(format!("{kind}: parameters must be finite and non-negative")));
        }
        if self.kind.is_sampler() && params.iter().any(|&p| p <= 0.0) {
            return Err(LppmError::Config(format!("{kind}: parameters must be positive")));
        }
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    #[serde(rename = "mechanism", default)]
    pub mechanisms: Vec<MechanismSweep>,
}

pub const OPTIONAL_METRICS: [&str; 3] = ["p_gi", "p_wc_ae", "p_wc_ce"];

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| LppmError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        let mut spec = Self::parse(&text)?;
        if let (Some(poi), Some(dir)) = (&spec.experiment.poi, path.parent()) {
            if poi.is_relative() {
                spec.experiment.poi = Some(dir.join(poi));
            }
        }
        Ok((spec, spec_hash(&text)))
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.samples == 0 {
            return Err(LppmError::Config("samples must be at least 1".into()));
        }
        if let Some(q) = e.q_max {
            if !(q > 0.0) {
                return Err(LppmError::Config(format!("q_max {q} must be positive")));
            }
        }
        if let Some(g) = e.output_grid_km {
            if !(g > 0.0) {
                return Err(LppmError::Config(format!("output_grid_km {g} must be positive")));
            }
        }
        if e.max_pois == Some(0) {
            return Err(LppmError::Config("max_pois must be at least 1".into()));
        }
        if e.scenario == ScenarioKind::Dataset && e.poi.is_none() {
            return Err(LppmError::Config("the dataset scenario needs `poi`".into()));
        }
        if e.dq == DistanceKind::TagHamming {
            return Err(LppmError::Config("tag-hamming is only supported as the privacy distance".into()));
        }
        if e.dp == DistanceKind::TagHamming && e.scenario != ScenarioKind::Grid {
            return Err(LppmError::Config("tag-hamming needs the grid scenario".into()));
        }
        if let Some(m) = &e.metrics {
            if let Some(bad) = m.iter().find(|m| !OPTIONAL_METRICS.contains(&m.as_str()) && !REQUIRED_METRICS.contains(&m.as_str())) {
                return Err(LppmError::Config(format!("unknown metric {bad:?}")));
            }
        }
        for m in &self.mechanisms {
            m.parameters()?;
        }
        Ok(())
    }

    pub fn wants(&self, metric: &str) -> bool {
        self.experiment.metrics.as_ref().is_none_or(|m| m.iter().any(|x| x == metric))
    }
}

pub const REQUIRED_METRICS: [&str; 4] = ["q_avg", "q_wc", "p_ae", "p_ce"];

/// Hex SHA-256 of the spec text.
pub fn spec_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn distance_fn(kind: DistanceKind, tags: Option<crate::geo::TagTable>) -> Result<DistanceFn> {
    Ok(match kind {
        DistanceKind::Euclidean => DistanceFn::Euclidean,
        DistanceKind::SquaredEuclidean => DistanceFn::SquaredEuclidean,
        DistanceKind::TagHamming => DistanceFn::TagHamming(std::sync::Arc::new(
            tags.ok_or_else(|| LppmError::Config("tag-hamming needs tagged POIs".into()))?,
        )),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_range() {
        let m = MechanismSweep { kind: MechanismKind::Laplace, values: None, range: Some([0.4, 40.0]), points: None, spacing: Spacing::Log };
        let p = m.parameters().unwrap();
        assert_eq!(p.len(), 20);
        assert_eq!(p[0], 0.4);
        assert_eq!(p[19], 40.0);
        assert!(p.windows(2).all(|w| (w[1] / w[0] - p[1] / p[0]).abs() < 1e-12));
    }

    #[test]
    fn parse_minimal() {
        let s = ExperimentSpec::parse(
            "[experiment]\nscenario = \"grid\"\n[[mechanism]]\nkind = \"coin\"\nrange = [0, 2]\nspacing = \"linear\"\npoints = 5\n",
        )
        .unwrap();
        assert_eq!(s.experiment.samples, DEFAULT_SAMPLES);
        assert_eq!(s.mechanisms[0].parameters().unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ExperimentSpec::parse("[experiment]\nsamples = 0\nscenario = \"grid\"\n").is_err());
        assert!(ExperimentSpec::parse("[experiment]\n").is_err());
        assert!(ExperimentSpec::parse("[experiment]\nscenario = \"grid\"\nbogus = 1\n").is_err());
        assert!(ExperimentSpec::parse("[experiment]\nscenario = \"grid\"\n[[mechanism]]\nkind = \"laplace\"\nvalues = [0.0]\n").is_err());
        assert!(ExperimentSpec::parse("[experiment]\nscenario = \"grid\"\nmetrics = [\"p_xx\"]\n").is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(spec_hash(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
