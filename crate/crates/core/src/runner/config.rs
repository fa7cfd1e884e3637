use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::TargetManifold;
use crate::norms::LateralSample;
use crate::spectral::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetName {
    Sphere,
    Hyperbolic,
}

impl TargetName {
    pub fn manifold(self) -> TargetManifold {
        match self {
            TargetName::Sphere => TargetManifold::SPHERE,
            TargetName::Hyperbolic => TargetManifold::HYPERBOLIC,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Constant,
    GaussianBump,
    Equivariant,
    Bubble,
    RandomBand,
}

impl ScenarioName {
    /// Parameter names accepted in `scenario_params`.
    pub fn parameters(self) -> &'static [&'static str] {
        match self {
            ScenarioName::Constant => &[],
            ScenarioName::GaussianBump => &["amplitude", "width"],
            ScenarioName::Equivariant => &["amplitude", "radius", "degree"],
            ScenarioName::Bubble => &["scale"],
            ScenarioName::RandomBand => &["energy", "band"],
        }
    }
}

/// Flat run configuration; one key per field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub target: TargetName,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub s_max: f64,
    /// Heat steps on the initial linear ramp of the s-grid.
    pub n_s_slices: usize,
    pub scenario: ScenarioName,
    #[serde(default)]
    pub scenario_params: BTreeMap<String, f64>,
    pub delta: f64,
    pub sigma_max: u32,
    pub angle_count: usize,
    /// Boost samples as multiples of `2^k` at band k.
    pub lambda_samples: Vec<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Stride between retained t-slices; defaults to `⌈T/(10 dt)⌉`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retain_every: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            target: TargetName::Sphere,
            n: 64,
            l: 8.0,
            dt: 1e-4,
            t_final: 1e-3,
            s_max: 64.0,
            n_s_slices: 8,
            scenario: ScenarioName::GaussianBump,
            scenario_params: BTreeMap::new(),
            delta: 0.1,
            sigma_max: 1,
            angle_count: 4,
            lambda_samples: LateralSample::default().lambda_factors,
            seed: 0,
            output_dir: PathBuf::from("out"),
            retain_every: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("L", self.l),
            ("dt", self.dt),
            ("T", self.t_final),
            ("s_max", self.s_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.n_s_slices == 0 || self.angle_count == 0 {
            return bad("n_s_slices and angle_count must be positive".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.lambda_samples.is_empty() || self.lambda_samples.iter().any(|v| !v.is_finite()) {
            return bad("lambda_samples must be a nonempty list of finite numbers".into());
        }
        if self.retain_every == Some(0) {
            return bad("retain_every must be positive".into());
        }
        let allowed = self.scenario.parameters();
        for (k, v) in &self.scenario_params {
            if !allowed.contains(&k.as_str()) {
                return bad(format!("unknown parameter {k:?} for scenario {:?}", self.scenario));
            }
            if !v.is_finite() {
                return bad(format!("scenario parameter {k} is not finite"));
            }
        }
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, self.l)
    }

    pub fn param(&self, name: &str, default: f64) -> f64 {
        self.scenario_params.get(name).copied().unwrap_or(default)
    }

    pub fn lateral_sample(&self) -> LateralSample {
        LateralSample {
            angle_count: self.angle_count,
            lambda_factors: self.lambda_samples.clone(),
        }
    }

    /// Number of SM steps, rounded to the nearest integer.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn retain_stride(&self) -> usize {
        self.retain_every
            .unwrap_or_else(|| ((self.t_final / (10.0 * self.dt)).ceil() as usize).max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
target = "hyperbolic"
N = 32
L = 8.0
dt = 1e-4
T = 2e-3
s_max = 32.0
n_s_slices = 4
scenario = "gaussian_bump"
scenario_params = { amplitude = 0.2, width = 0.7 }
delta = 0.1
sigma_max = 1
angle_count = 4
lambda_samples = [0.0, 0.25, -0.25]
seed = 7
output_dir = "run"
"#;

    #[test]
    fn parses_flat_config() {
        let c = RunConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(c.target, TargetName::Hyperbolic);
        assert_eq!(c.n, 32);
        assert_eq!(c.scenario, ScenarioName::GaussianBump);
        assert_eq!(c.param("width", 1.0), 0.7);
        assert_eq!(c.steps(), 20);
        assert_eq!(c.retain_stride(), 2);
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let extra = format!("{SAMPLE}\nworkers = 3\n");
        assert!(matches!(RunConfig::from_toml_str(&extra), Err(Error::Config(_))));
        let neg = SAMPLE.replace("dt = 1e-4", "dt = -1e-4");
        assert!(matches!(RunConfig::from_toml_str(&neg), Err(Error::Config(_))));
        let param = SAMPLE.replace("width = 0.7", "scale = 0.7");
        assert!(matches!(RunConfig::from_toml_str(&param), Err(Error::Config(_))));
        let scen = SAMPLE.replace("gaussian_bump", "soliton");
        assert!(matches!(RunConfig::from_toml_str(&scen), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("target = "), Err(Error::Config(_))));
    }
}
