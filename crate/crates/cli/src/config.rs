//! Experiment configuration: a JSON document, validated on load.

use copolymer::{ChargeSet, Endpoint};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub charges: ChargeConfig,
    /// Probability of each of the two nonzero steps.
    pub p: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_x_max")]
    pub x_max: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub localization: LocalizationConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Raw charges; sequences left out are zero.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeConfig {
    pub period: usize,
    pub omega_plus: Option<Vec<f64>>,
    pub omega_minus: Option<Vec<f64>>,
    pub omega_zero: Option<Vec<f64>>,
    pub omega_zero_tilde: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Residue class of the lengths checked; defaults to that of `horizon`.
    pub eta: Option<usize>,
    /// Defaults to the dyadic lengths in the class, closed by `horizon`.
    pub n_list: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_endpoint")]
    pub endpoint: Endpoint,
    /// Full paths written to `paths.jsonl`.
    #[serde(default)]
    pub paths: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { count: default_count(), endpoint: default_endpoint(), paths: 0 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationConfig {
    #[serde(default = "default_batch")]
    pub count: usize,
    #[serde(default = "default_periods")]
    pub periods: Vec<usize>,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self { count: default_batch(), periods: default_periods() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_eps_crit")]
    pub eps_crit: f64,
    #[serde(default = "default_zero_tol")]
    pub zero_tol: f64,
    #[serde(default = "default_localized_band")]
    pub localized_band: [f64; 2],
    #[serde(default = "default_critical_band")]
    pub critical_band: [f64; 2],
    #[serde(default = "default_delocalized_band")]
    pub delocalized_band: [f64; 2],
    #[serde(default = "default_delocalized_free_band")]
    pub delocalized_free_band: [f64; 2],
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_crit: default_eps_crit(),
            zero_tol: default_zero_tol(),
            localized_band: default_localized_band(),
            critical_band: default_critical_band(),
            delocalized_band: default_delocalized_band(),
            delocalized_free_band: default_delocalized_free_band(),
        }
    }
}

fn default_horizon() -> usize {
    2000
}
fn default_x_max() -> usize {
    copolymer::kernel::DEFAULT_X_MAX
}
fn default_count() -> usize {
    copolymer::polymer::MIN_SAMPLES
}
fn default_endpoint() -> Endpoint {
    Endpoint::Free
}
fn default_batch() -> usize {
    200
}
fn default_periods() -> Vec<usize> {
    vec![2, 3, 4, 6]
}
fn default_eps_crit() -> f64 {
    copolymer::spectral::DEFAULT_EPS_CRIT
}
fn default_zero_tol() -> f64 {
    copolymer::charges::DEFAULT_ZERO_TOL
}
fn default_localized_band() -> [f64; 2] {
    [0.99, 1.01]
}
fn default_critical_band() -> [f64; 2] {
    [0.90, 1.10]
}
fn default_delocalized_band() -> [f64; 2] {
    [0.97, 1.03]
}
fn default_delocalized_free_band() -> [f64; 2] {
    [0.95, 1.05]
}

/// A validated configuration and the digest of its source text.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
}

impl LoadedConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        config.validate(text)?;
        let sha256 = format!("{:x}", Sha256::digest(text.as_bytes()));
        Ok(Self { config, sha256 })
    }
}

/// Line of the first occurrence of `"key"`, for pointing at a bad value.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

fn at(text: &str, key: &str, msg: String) -> CliError {
    match line_of(text, key) {
        Some(line) => CliError::Config(format!("line {line}: `{key}` {msg}")),
        None => CliError::Config(format!("`{key}` {msg}")),
    }
}

impl ExperimentConfig {
    fn validate(&self, text: &str) -> Result<(), CliError> {
        if !(self.p > 0.0 && self.p < 0.5) {
            return Err(at(text, "p", format!("must lie in (0, 1/2), got {}", self.p)));
        }
        let t = self.charges.period;
        if t == 0 {
            return Err(at(text, "period", "must be at least 1".into()));
        }
        for (key, seq) in self.charges.sequences() {
            if let Some(v) = seq {
                if v.len() != t {
                    return Err(at(text, key, format!("has {} entries, period is {t}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(at(text, key, "must be finite".into()));
                }
            }
        }
        if self.horizon == 0 {
            return Err(at(text, "horizon", "must be at least 1".into()));
        }
        if self.x_max < self.horizon {
            return Err(at(text, "x_max", format!("must be at least horizon = {}", self.horizon)));
        }
        if let Some(list) = &self.verify.n_list {
            if list.is_empty() || list.iter().any(|&n| n == 0 || n > self.horizon) {
                return Err(at(text, "n_list", format!("entries must lie in 1..={}", self.horizon)));
            }
        }
        if self.localization.periods.iter().any(|&t| t < 2) {
            return Err(at(text, "periods", "copolymer periods must be at least 2".into()));
        }
        let tol = &self.tolerances;
        for (key, band) in [
            ("localized_band", tol.localized_band),
            ("critical_band", tol.critical_band),
            ("delocalized_band", tol.delocalized_band),
            ("delocalized_free_band", tol.delocalized_free_band),
        ] {
            if !(band[0] <= 1.0 && 1.0 <= band[1]) {
                return Err(at(text, key, "must contain 1".into()));
            }
        }
        if !(tol.eps_crit > 0.0 && tol.zero_tol > 0.0) {
            return Err(at(text, "tolerances", "must be positive".into()));
        }
        Ok(())
    }

    pub fn charge_set(&self) -> Result<ChargeSet<f64>, CliError> {
        let t = self.charges.period;
        let get = |v: &Option<Vec<f64>>| v.clone().unwrap_or_else(|| vec![0.0; t]);
        let c = &self.charges;
        ChargeSet::new(get(&c.omega_plus), get(&c.omega_minus), get(&c.omega_zero), get(&c.omega_zero_tilde))
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

impl ChargeConfig {
    fn sequences(&self) -> [(&'static str, &Option<Vec<f64>>); 4] {
        [
            ("omega_plus", &self.omega_plus),
            ("omega_minus", &self.omega_minus),
            ("omega_zero", &self.omega_zero),
            ("omega_zero_tilde", &self.omega_zero_tilde),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syntax_errors_carry_a_position() {
        let err = LoadedConfig::parse("{\n  \"p\": 0.3,\n  \"charges\": {\"period\": 1,}\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn range_errors_point_at_the_key() {
        let err = LoadedConfig::parse("{\n  \"charges\": {\"period\": 1},\n  \"p\": 0.5\n}").unwrap_err();
        assert!(err.to_string().contains("line 3: `p`"), "{err}");
        let err = LoadedConfig::parse("{\"charges\": {\"period\": 2, \"omega_zero\": [1]}, \"p\": 0.3}").unwrap_err();
        assert!(err.to_string().contains("omega_zero"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = LoadedConfig::parse("{\"charges\": {\"period\": 1}, \"p\": 0.3, \"sede\": 4}").unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn digest_tracks_the_text() {
        let a = LoadedConfig::parse("{\"charges\": {\"period\": 1}, \"p\": 0.3}").unwrap();
        let b = LoadedConfig::parse("{\"charges\": {\"period\": 1}, \"p\": 0.30}").unwrap();
        assert_eq!(a.sha256.len(), 64);
        assert_ne!(a.sha256, b.sha256);
        assert_eq!(a.config.horizon, 2000);
    }
}
