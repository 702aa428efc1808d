//! Per-position policy quantities: the entropy-driven retention rate and
//! score threshold, windowed entropy, and the adaptive consecutive-prune cap.

use crate::config::EngineConfig;
use crate::error::{Error, Result};

/// Local retention rate: linear in normalized entropy between the soft
/// bounds, then clipped to the hard bounds.
pub fn retention_rate(h_hat: f64, cfg: &EngineConfig) -> f64 {
    (cfg.gamma_min + (cfg.gamma_max - cfg.gamma_min) * h_hat).clamp(cfg.gamma_abs_min, cfg.gamma_abs_max)
}

/// Linear-interpolation ("type 7") quantile of an ascending slice, `p` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Sorted multiset of valid-token scores, built once per trace so every
/// per-position threshold is a constant-time lookup.
#[derive(Clone, Debug)]
pub struct ScoreQuantiles {
    sorted: Vec<f64>,
}

impl ScoreQuantiles {
    pub fn new(scores: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut sorted: Vec<f64> = scores.into_iter().collect();
        if sorted.is_empty() {
            return Err(Error::contract("threshold needs at least one valid score"));
        }
        sorted.sort_by(f64::total_cmp);
        Ok(ScoreQuantiles { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Threshold at the `(1 - gamma) * 100`-th percentile.
    pub fn threshold(&self, gamma: f64) -> f64 {
        quantile_sorted(&self.sorted, 1.0 - gamma)
    }
}

/// One-shot form of [`ScoreQuantiles::threshold`].
pub fn dynamic_threshold(gamma: f64, valid_scores: &[f64]) -> Result<f64> {
    Ok(ScoreQuantiles::new(valid_scores.iter().copied())?.threshold(gamma))
}

/// Mean entropy over a centred window of width `window`, replicating the
/// first / last value past the sequence ends so every window has `window` terms.
pub fn windowed_entropy(entropies: &[f64], t: usize, window: usize) -> f64 {
    let last = entropies.len() as isize - 1;
    let half = (window / 2) as isize;
    let t = t as isize;
    let sum: f64 = (t - half..=t + half).map(|j| entropies[j.clamp(0, last) as usize]).sum();
    sum / window as f64
}

/// Consecutive-prune cap from normalized windowed entropy: high entropy gives a small cap.
pub fn adaptive_n(hbar_hat: f64, cfg: &EngineConfig) -> usize {
    let (lo, hi) = (cfg.n_min as f64, cfg.n_max as f64);
    let raw = lo + (hi - lo) * (1.0 - hbar_hat);
    (raw.clamp(lo, hi) + 0.5).floor() as usize
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Entropy-gradient and target-ratio refinement of a cap `n_t`.
///
/// A jump in normalized entropy above `delta_high` shrinks the cap; a run of
/// `stability_run` small changes (below `delta_low`) grows it by one. With no
/// previous valid position the gradient step is skipped. When a global
/// `gamma_target` is set the cap is then scaled by `gamma_reference / gamma_target`.
pub fn refine_n(
    n_t: usize,
    hhat_now: f64,
    hhat_prev: Option<f64>,
    stable_count: usize,
    cfg: &EngineConfig,
) -> (usize, usize) {
    let mut n = n_t;
    let mut stable = stable_count;
    if cfg.entropy_gradient {
        if let Some(prev) = hhat_prev {
            let delta = (hhat_now - prev).abs();
            if delta > cfg.delta_high {
                n = round_half_up(n_t as f64 * cfg.n_shrink).max(cfg.n_min);
                stable = 0;
            } else if delta < cfg.delta_low {
                stable += 1;
                if stable >= cfg.stability_run {
                    n = (n_t + 1).min(cfg.n_max);
                }
            } else {
                stable = 0;
            }
        }
    }
    if let Some(target) = cfg.gamma_target {
        let scaled = round_half_up(n as f64 * (cfg.gamma_reference / target));
        n = scaled.clamp(cfg.n_min, cfg.n_max);
    }
    (n, stable)
}
