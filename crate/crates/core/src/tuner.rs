//! Corpus-level parameter tuning: feature extraction, target-ratio
//! estimation and config update.

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::mapping::{estimate_global_stats, EntropyStats, EPS};
use crate::policy::quantile_sorted;
use crate::trace::Trace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFeatures {
    pub traces: usize,
    pub mean_len: f64,
    pub len_std: f64,
    pub h_mean: f64,
    pub h_median: f64,
    pub h_std: f64,
    /// Mean over traces of the per-trace maximum valid-token entropy.
    pub h_max_mean: f64,
    /// Share of valid tokens scoring strictly above the corpus 90th percentile.
    pub gogi_tail_ratio: f64,
}

impl DatasetFeatures {
    pub fn entropy_stats(&self) -> EntropyStats {
        EntropyStats { h_median: self.h_median, h_std: self.h_std }
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Exact sample statistics over the concatenated corpus. Entropy and score
/// statistics use valid tokens only.
pub fn extract_features(traces: &[Trace], cfg: &EngineConfig) -> Result<DatasetFeatures> {
    if traces.is_empty() {
        return Err(Error::contract("feature extraction needs at least one trace"));
    }
    let lens: Vec<f64> = traces.iter().map(|t| t.len() as f64).collect();
    let (mean_len, len_std) = mean_std(&lens);

    let mut entropies = Vec::new();
    let mut scores = Vec::new();
    let mut maxima = Vec::new();
    for trace in traces {
        let mut max: Option<f64> = None;
        for tok in trace.tokens.iter().filter(|t| cfg.is_valid(t)) {
            entropies.push(tok.entropy);
            scores.push(tok.gogi);
            max = Some(max.map_or(tok.entropy, |m| m.max(tok.entropy)));
        }
        maxima.extend(max);
    }
    if entropies.is_empty() {
        return Err(Error::contract("corpus has no valid tokens"));
    }
    let stats = estimate_global_stats(&entropies)?;
    let (h_mean, _) = mean_std(&entropies);
    let (h_max_mean, _) = mean_std(&maxima);

    scores.sort_by(f64::total_cmp);
    let p90 = quantile_sorted(&scores, 0.9);
    let tail = scores.iter().filter(|&&g| g > p90).count();

    Ok(DatasetFeatures {
        traces: traces.len(),
        mean_len,
        len_std,
        h_mean,
        h_median: stats.h_median,
        h_std: stats.h_std,
        h_max_mean,
        gogi_tail_ratio: tail as f64 / scores.len() as f64,
    })
}

/// Global retention target from entropy dispersion: higher `h_std / h_median`
/// moves the target from below `gamma_base` towards `gamma_max`.
pub fn estimate_target_ratio(features: &DatasetFeatures, cfg: &EngineConfig) -> f64 {
    let dispersion = (features.h_std / features.h_median.max(EPS)).min(1.0);
    let raise = 0.5 * (cfg.gamma_max - cfg.gamma_base) * dispersion;
    let lower = 0.25 * (cfg.gamma_base - cfg.gamma_min) * (1.0 - dispersion);
    (cfg.gamma_base + raise - lower).clamp(cfg.gamma_min, cfg.gamma_max)
}

/// Recentre the soft retention bounds on `gamma_target`, keeping their
/// half-width and clipping to the hard bounds.
pub fn update_params(cfg: &EngineConfig, gamma_target: f64) -> Result<EngineConfig> {
    if !(gamma_target > 0.0 && gamma_target < 1.0) {
        return Err(Error::Config { bound: "0 < gamma_target < 1", detail: format!("gamma_target = {gamma_target}") });
    }
    let half = (cfg.gamma_max - cfg.gamma_min) / 2.0;
    let mut out = cfg.clone();
    out.gamma_target = Some(gamma_target);
    out.gamma_base = gamma_target.clamp(cfg.gamma_abs_min, cfg.gamma_abs_max);
    out.gamma_min = (gamma_target - half).clamp(cfg.gamma_abs_min, cfg.gamma_abs_max);
    out.gamma_max = (gamma_target + half).clamp(cfg.gamma_abs_min, cfg.gamma_abs_max);
    out.validate()?;
    Ok(out)
}

/// Result of a full tuning pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub features: DatasetFeatures,
    pub gamma_target: f64,
    pub config: EngineConfig,
}

/// Extract features, estimate the target and update `cfg`.
pub fn tune(traces: &[Trace], cfg: &EngineConfig) -> Result<TuneReport> {
    cfg.validate()?;
    let features = extract_features(traces, cfg)?;
    let gamma_target = estimate_target_ratio(&features, cfg);
    let config = update_params(cfg, gamma_target)?;
    Ok(TuneReport { features, gamma_target, config })
}
