//! Engine hyperparameters and their flat TOML / JSON serialization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{EntropyStats, MappingMode};
use crate::trace::{FunctionalCategory, TokenRecord};

/// All EDR / ANC / refinement hyperparameters. Defaults are the published
/// default table; the absolute clip bounds default to 0.05 / 0.95.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_abs_min: f64,
    pub gamma_abs_max: f64,
    pub gamma_base: f64,
    /// Reference rate the target-ratio modulation of N compares against.
    pub gamma_reference: f64,
    /// Carried for completeness; no rule consumes it.
    pub entropy_delta: f64,
    pub s_gamma: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub window: usize,
    pub s_n: f64,
    pub theta_critical: f64,
    pub delta_high: f64,
    pub delta_low: f64,
    pub stability_run: usize,
    pub n_shrink: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_target: Option<f64>,
    pub mapping_mode: MappingMode,
    pub ignore_space_tokens: bool,
    pub ignored_token_ids: Vec<i64>,
    /// Extreme low-importance override (prune below `theta_critical * tau`).
    pub extreme_override: bool,
    /// Entropy-gradient refinement of N.
    pub entropy_gradient: bool,
    /// Optional per-category multiplier on GoGI; `None` is the identity weighting.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category_weights: Option<BTreeMap<FunctionalCategory, f64>>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            gamma_min: 0.2,
            gamma_max: 0.8,
            gamma_abs_min: 0.05,
            gamma_abs_max: 0.95,
            gamma_base: 0.6,
            gamma_reference: 0.6,
            entropy_delta: 0.3,
            s_gamma: 1.8,
            n_min: 1,
            n_max: 9,
            window: 9,
            s_n: 1.8,
            theta_critical: 0.4,
            delta_high: 0.3,
            delta_low: 0.05,
            stability_run: 3,
            n_shrink: 0.8,
            gamma_target: None,
            mapping_mode: MappingMode::Auto,
            ignore_space_tokens: true,
            ignored_token_ids: Vec::new(),
            extreme_override: true,
            entropy_gradient: true,
            category_weights: None,
        }
    }
}

fn bound(ok: bool, bound: &'static str, detail: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config { bound, detail: detail() })
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.gamma_min,
            self.gamma_max,
            self.gamma_abs_min,
            self.gamma_abs_max,
            self.gamma_base,
            self.gamma_reference,
            self.entropy_delta,
            self.s_gamma,
            self.s_n,
            self.theta_critical,
            self.delta_high,
            self.delta_low,
            self.n_shrink,
        ];
        bound(finite.iter().all(|v| v.is_finite()), "finite", || "all real parameters must be finite".into())?;
        bound(self.gamma_abs_min > 0.0, "gamma_abs_min > 0", || format!("gamma_abs_min = {}", self.gamma_abs_min))?;
        bound(self.gamma_abs_min <= self.gamma_min, "gamma_abs_min <= gamma_min", || {
            format!("{} > {}", self.gamma_abs_min, self.gamma_min)
        })?;
        bound(self.gamma_min <= self.gamma_base, "gamma_min <= gamma_base", || {
            format!("{} > {}", self.gamma_min, self.gamma_base)
        })?;
        bound(self.gamma_base <= self.gamma_max, "gamma_base <= gamma_max", || {
            format!("{} > {}", self.gamma_base, self.gamma_max)
        })?;
        bound(self.gamma_max <= self.gamma_abs_max, "gamma_max <= gamma_abs_max", || {
            format!("{} > {}", self.gamma_max, self.gamma_abs_max)
        })?;
        bound(self.gamma_abs_max <= 1.0, "gamma_abs_max <= 1", || format!("gamma_abs_max = {}", self.gamma_abs_max))?;
        bound(self.gamma_reference > 0.0 && self.gamma_reference <= 1.0, "0 < gamma_reference <= 1", || {
            format!("gamma_reference = {}", self.gamma_reference)
        })?;
        bound(self.n_min >= 1, "n_min >= 1", || format!("n_min = {}", self.n_min))?;
        bound(self.n_min <= self.n_max, "n_min <= n_max", || format!("{} > {}", self.n_min, self.n_max))?;
        bound(self.window % 2 == 1, "window odd and >= 1", || format!("window = {}", self.window))?;
        bound(self.s_gamma > 0.0, "s_gamma > 0", || format!("s_gamma = {}", self.s_gamma))?;
        bound(self.s_n > 0.0, "s_n > 0", || format!("s_n = {}", self.s_n))?;
        bound(self.theta_critical > 0.0 && self.theta_critical < 1.0, "0 < theta_critical < 1", || {
            format!("theta_critical = {}", self.theta_critical)
        })?;
        bound(self.delta_low > 0.0, "delta_low > 0", || format!("delta_low = {}", self.delta_low))?;
        bound(self.delta_low < self.delta_high, "delta_low < delta_high", || {
            format!("{} >= {}", self.delta_low, self.delta_high)
        })?;
        bound(self.stability_run >= 1, "stability_run >= 1", || format!("stability_run = {}", self.stability_run))?;
        bound(self.n_shrink > 0.0 && self.n_shrink <= 1.0, "0 < n_shrink <= 1", || {
            format!("n_shrink = {}", self.n_shrink)
        })?;
        if let Some(g) = self.gamma_target {
            bound(g > 0.0 && g <= 1.0, "0 < gamma_target <= 1", || format!("gamma_target = {g}"))?;
        }
        if let Some(w) = &self.category_weights {
            bound(w.values().all(|v| v.is_finite() && *v >= 0.0), "category_weights >= 0", || format!("{w:?}"))?;
        }
        Ok(())
    }

    /// Membership in the valid set: extractor flag, space filter, ignored ids.
    pub fn is_valid(&self, tok: &TokenRecord) -> bool {
        tok.valid && !(self.ignore_space_tokens && tok.is_space()) && !self.ignored_token_ids.contains(&tok.token_id)
    }

    /// Optional type-weighting of a score; identity unless weights are configured.
    pub fn weighted_gogi(&self, tok: &TokenRecord) -> f64 {
        match &self.category_weights {
            Some(w) => tok.gogi * w.get(&tok.category).copied().unwrap_or(1.0),
            None => tok.gogi,
        }
    }
}

/// On-disk configuration document: the engine parameters plus optional
/// pre-estimated entropy statistics, all as flat keys.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub engine: EngineConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_std: Option<f64>,
}

// Written by hand because `flatten` would swallow unknown keys.
impl<'de> Deserialize<'de> for ConfigFile {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut map = serde_json::Map::<String, serde_json::Value>::deserialize(deserializer)?;
        let mut take = |key: &str| -> std::result::Result<Option<f64>, D::Error> {
            match map.remove(key) {
                None => Ok(None),
                Some(v) => v.as_f64().map(Some).ok_or_else(|| D::Error::custom(format!("{key} must be a number"))),
            }
        };
        let h_median = take("h_median")?;
        let h_std = take("h_std")?;
        let engine = EngineConfig::deserialize(serde_json::Value::Object(map)).map_err(D::Error::custom)?;
        Ok(ConfigFile { engine, h_median, h_std })
    }
}

impl ConfigFile {
    pub fn stats(&self) -> Result<Option<EntropyStats>> {
        match (self.h_median, self.h_std) {
            (Some(m), Some(s)) => EntropyStats::new(m, s).map(Some),
            (None, None) => Ok(None),
            _ => Err(Error::ConfigFormat("h_median and h_std must be given together".into())),
        }
    }

    fn is_json(path: &Path) -> bool {
        path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::ConfigFormat(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigFormat(e.to_string()))
    }

    /// Load from `.json` or (otherwise) TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if Self::is_json(path) {
            serde_json::from_str(&text).map_err(|e| Error::ConfigFormat(e.to_string()))
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn render(&self, path: &Path) -> Result<String> {
        if Self::is_json(path) {
            serde_json::to_string_pretty(self).map(|s| s + "\n").map_err(|e| Error::ConfigFormat(e.to_string()))
        } else {
            self.to_toml_string()
        }
    }
}
