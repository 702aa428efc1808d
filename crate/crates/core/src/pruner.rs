//! The adaptive pruning loop, its ablation variants, and the static top-k baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::mapping::{effective_mode, map_entropy, EntropyStats};
use crate::policy::{adaptive_n, refine_n, retention_rate, windowed_entropy, ScoreQuantiles};
use crate::trace::{KeepMask, PositionDiag, Trace};

/// Which parts of the adaptive policy are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Entropy-driven rate and adaptive N-constraint.
    #[default]
    Full,
    /// Entropy-driven rate only; the cap never forces a keep.
    NoAnc,
    /// Fixed rate `gamma_base` with the N-constraint active.
    NoEdr,
    /// Fixed rate `gamma_base`, no N-constraint: a static score quantile.
    NoAds,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoAnc, Variant::NoEdr, Variant::NoAds];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoAnc => "no_anc",
            Variant::NoEdr => "no_edr",
            Variant::NoAds => "no_ads",
        }
    }

    fn adaptive_rate(self) -> bool {
        matches!(self, Variant::Full | Variant::NoAnc)
    }

    fn cap_active(self) -> bool {
        matches!(self, Variant::Full | Variant::NoEdr)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| Error::ConfigFormat(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneOutcome {
    pub mask: KeepMask,
    pub compressed_len: usize,
    /// kept / total.
    pub retention_ratio: f64,
    /// kept valid / total valid (1.0 when there are no valid tokens).
    pub valid_retention_ratio: f64,
    pub valid_count: usize,
    /// Set when the trace had no valid tokens and everything was kept.
    pub no_valid_tokens: bool,
}

impl PruneOutcome {
    fn from_mask(mask: KeepMask, valid: &[bool]) -> Self {
        let total = mask.len();
        let compressed_len = mask.kept();
        let valid_count = valid.iter().filter(|&&v| v).count();
        let kept_valid = mask.keep.iter().zip(valid).filter(|(&k, &v)| k && v).count();
        PruneOutcome {
            compressed_len,
            retention_ratio: if total == 0 { 1.0 } else { compressed_len as f64 / total as f64 },
            valid_retention_ratio: if valid_count == 0 { 1.0 } else { kept_valid as f64 / valid_count as f64 },
            valid_count,
            no_valid_tokens: valid_count == 0,
            mask,
        }
    }
}

/// Run the full adaptive policy.
pub fn prune(trace: &Trace, cfg: &EngineConfig, stats: EntropyStats) -> Result<PruneOutcome> {
    ablation_prune(trace, cfg, stats, Variant::Full)
}

/// Run the pruning loop with parts of the policy disabled.
///
/// Invalid positions are always kept and reset the consecutive counter. For a
/// valid position the threshold comes from the local retention rate; a weighted
/// score under `theta_critical * tau` is pruned outright (when the override is
/// enabled), otherwise the token is kept if it clears the threshold or if
/// pruning it would reach the consecutive-prune cap.
pub fn ablation_prune(
    trace: &Trace,
    cfg: &EngineConfig,
    stats: EntropyStats,
    variant: Variant,
) -> Result<PruneOutcome> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    cfg.validate()?;
    let m = trace.len();
    let valid: Vec<bool> = trace.tokens.iter().map(|t| cfg.is_valid(t)).collect();
    let scores = trace.tokens.iter().zip(&valid).filter(|(_, &v)| v).map(|(t, _)| t.gogi);
    let quantiles = match ScoreQuantiles::new(scores) {
        Ok(q) => q,
        Err(_) => return Ok(PruneOutcome::from_mask(KeepMask::all_keep(m), &valid)),
    };

    let mode = effective_mode(cfg.mapping_mode, stats);
    let entropies = trace.entropies();
    let no_cap = m + 1;
    let fixed_tau = quantiles.threshold(cfg.gamma_base);

    let mut mask =
        KeepMask { keep: Vec::with_capacity(m), consec: Vec::with_capacity(m), per_pos: Vec::with_capacity(m) };
    let mut prev_count = 0usize;
    let mut prev_h_hat: Option<f64> = None;
    let mut stable = 0usize;

    for (t, tok) in trace.tokens.iter().enumerate() {
        if !valid[t] {
            mask.keep.push(true);
            mask.consec.push(0);
            mask.per_pos.push(None);
            prev_count = 0;
            continue;
        }

        let h_hat = map_entropy(tok.entropy, stats, mode, cfg.s_gamma);
        let (gamma, tau) = if variant.adaptive_rate() {
            let gamma = retention_rate(h_hat, cfg);
            (gamma, quantiles.threshold(gamma))
        } else {
            (cfg.gamma_base, fixed_tau)
        };

        let hbar = windowed_entropy(&entropies, t, cfg.window);
        let hbar_hat = map_entropy(hbar, stats, mode, cfg.s_n);
        let (refined, next_stable) = refine_n(adaptive_n(hbar_hat, cfg), h_hat, prev_h_hat, stable, cfg);
        stable = next_stable;
        prev_h_hat = Some(h_hat);
        let n = if variant.cap_active() { refined } else { no_cap };

        let score = cfg.weighted_gogi(tok);
        let below_tau = score < tau;
        let override_fired = cfg.extreme_override && score < cfg.theta_critical * tau;
        let keep = !override_fired && (!below_tau || prev_count + 1 >= n);

        prev_count = if keep { 0 } else { prev_count + 1 };
        mask.keep.push(keep);
        mask.consec.push(prev_count);
        mask.per_pos.push(Some(PositionDiag { h_hat, gamma, tau, hbar_hat, n, below_tau, override_fired }));
    }

    Ok(PruneOutcome::from_mask(mask, &valid))
}

/// Static-rate baseline: keep the `ceil(gamma * |valid|)` highest-scoring
/// valid tokens (ties go to the lower index) and every invalid token.
pub fn static_prune(trace: &Trace, gamma: f64, cfg: &EngineConfig) -> Result<PruneOutcome> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::contract(format!("static retention {gamma} outside (0, 1]")));
    }
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let valid: Vec<bool> = trace.tokens.iter().map(|t| cfg.is_valid(t)).collect();
    let mut ranked: Vec<usize> = (0..trace.len()).filter(|&t| valid[t]).collect();
    if ranked.is_empty() {
        return Err(Error::contract("static prune needs at least one valid token"));
    }
    // Stable sort on descending score keeps lower indices first among ties.
    ranked.sort_by(|&a, &b| trace.tokens[b].gogi.total_cmp(&trace.tokens[a].gogi));
    // Absorb representation error such as 0.3 * 10 = 3.0000000000000004.
    let quota = ((gamma * ranked.len() as f64 - 1e-9).ceil() as usize).clamp(1, ranked.len());

    let mut keep: Vec<bool> = valid.iter().map(|v| !v).collect();
    for &t in &ranked[..quota] {
        keep[t] = true;
    }
    let mask = KeepMask::from_keep(keep);
    Ok(PruneOutcome::from_mask(mask, &valid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TokenRecord;

    fn at_median(scores: &[f64]) -> (Trace, EntropyStats) {
        let trace = Trace::from_scores("t", scores, &vec![1.0; scores.len()]).unwrap();
        (trace, EntropyStats { h_median: 1.0, h_std: 0.0 })
    }

    fn kept_scores(trace: &Trace, out: &PruneOutcome) -> Vec<f64> {
        trace.tokens.iter().zip(&out.mask.keep).filter(|(_, &k)| k).map(|(t, _)| t.gogi).collect()
    }

    #[test]
    fn ten_token_fixture() {
        // Piecewise at the median gives h_hat = 0.5, gamma = 0.5, tau = 5.5,
        // N = 5; scores 1 and 2 trip the override, the stability run lifts N
        // to 6 before the low run reaches it.
        let scores: Vec<f64> = (1..=10).map(f64::from).collect();
        let (trace, stats) = at_median(&scores);
        let out = prune(&trace, &EngineConfig::default(), stats).unwrap();
        assert_eq!(kept_scores(&trace, &out), vec![6.0, 7.0, 8.0, 9.0, 10.0]);
        let d0 = out.mask.per_pos[0].unwrap();
        assert_eq!((d0.gamma, d0.tau, d0.n), (0.5, 5.5, 5));
        assert!(d0.override_fired && out.mask.per_pos[1].unwrap().override_fired);
        assert!(!out.mask.per_pos[2].unwrap().override_fired);
        let caps: Vec<usize> = out.mask.per_pos.iter().map(|d| d.unwrap().n).collect();
        assert_eq!(caps, vec![5, 5, 5, 6, 6, 6, 6, 6, 6, 6]);
        assert_eq!(out.mask.consec, vec![1, 2, 3, 4, 5, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn every_third_low_token_is_forced() {
        // 6 low + 6 high; tau = 5.5, N = 1 + 4 * 0.5 = 3.
        let mut scores = vec![1.0; 6];
        scores.extend([10.0; 6]);
        let (trace, stats) = at_median(&scores);
        let cfg = EngineConfig { n_max: 5, extreme_override: false, entropy_gradient: false, ..Default::default() };
        let out = prune(&trace, &cfg, stats).unwrap();
        let expect: Vec<bool> = [false, false, true, false, false, true].into_iter().chain([true; 6]).collect();
        assert_eq!(out.mask.keep, expect);
        assert_eq!(out.compressed_len, 8);
    }

    #[test]
    fn override_beats_the_cap() {
        // 0.3 * tau sits below theta_critical * tau; C would otherwise force a keep.
        let (trace, stats) = at_median(&[10.0, 10.0, 3.0, 10.0, 10.0]);
        let cfg = EngineConfig { n_min: 1, n_max: 1, ..Default::default() };
        let out = prune(&trace, &cfg, stats).unwrap();
        let d = out.mask.per_pos[2].unwrap();
        assert_eq!(d.n, 1);
        assert!(d.below_tau && d.override_fired);
        assert!(!out.mask.keep[2]);
        assert!(3.0 < 0.4 * d.tau && 3.0 >= 0.3 * d.tau);
    }

    #[test]
    fn everything_above_threshold_is_kept() {
        let (trace, stats) = at_median(&[4.0; 8]);
        let out = prune(&trace, &EngineConfig::default(), stats).unwrap();
        assert_eq!(out.retention_ratio, 1.0);
    }

    #[test]
    fn invalid_tokens_kept_and_reset_counter() {
        let mut trace = Trace::from_scores("t", &[1.0, 1.0, 9.0, 1.0, 1.0], &[1.0; 5]).unwrap();
        trace.tokens[1].valid = false;
        trace.tokens[3].token_text = "  ".into();
        let stats = EntropyStats { h_median: 1.0, h_std: 0.0 };
        let out = prune(&trace, &EngineConfig::default(), stats).unwrap();
        assert!(out.mask.keep[1] && out.mask.keep[3]);
        assert_eq!(out.mask.consec[1], 0);
        assert_eq!(out.mask.per_pos[1], None);
        assert_eq!(out.valid_count, 3);
    }

    #[test]
    fn no_valid_tokens_keeps_all() {
        let mut trace = Trace::from_scores("t", &[1.0, 2.0], &[1.0, 1.0]).unwrap();
        for t in &mut trace.tokens {
            t.valid = false;
        }
        let out = prune(&trace, &EngineConfig::default(), EntropyStats { h_median: 1.0, h_std: 0.5 }).unwrap();
        assert!(out.no_valid_tokens);
        assert_eq!(out.mask.keep, vec![true, true]);
        assert!(static_prune(&trace, 0.5, &EngineConfig::default()).is_err());
    }

    #[test]
    fn static_examples() {
        let cfg = EngineConfig::default();
        let scores: Vec<f64> = (1..=10).map(f64::from).collect();
        let trace = Trace::from_scores("t", &scores, &[1.0; 10]).unwrap();
        assert_eq!(static_prune(&trace, 1.0, &cfg).unwrap().mask.keep, vec![true; 10]);
        let half = static_prune(&trace, 0.5, &cfg).unwrap();
        assert_eq!(kept_scores(&trace, &half), vec![6.0, 7.0, 8.0, 9.0, 10.0]);
        // ceil(0.34 * 3) = 2, ties resolved towards lower indices.
        let ties = Trace::from_scores("t", &[7.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(static_prune(&ties, 0.34, &cfg).unwrap().mask.keep, vec![true, true, false]);
        assert!(static_prune(&trace, 0.0, &cfg).is_err());
        assert!(static_prune(&trace, 1.1, &cfg).is_err());
    }

    #[test]
    fn no_ads_matches_static_on_fixture() {
        let scores: Vec<f64> = (1..=10).map(f64::from).collect();
        let (trace, stats) = at_median(&scores);
        let cfg = EngineConfig::default();
        let a = ablation_prune(&trace, &cfg, stats, Variant::NoAds).unwrap();
        let s = static_prune(&trace, cfg.gamma_base, &cfg).unwrap();
        assert_eq!(a.mask.keep, s.mask.keep);
    }

    #[test]
    fn full_keeps_more_than_no_anc_on_long_low_run() {
        let mut scores = vec![5.0; 12];
        scores.extend([20.0; 12]);
        let (trace, stats) = at_median(&scores);
        let cfg = EngineConfig::default();
        let full = prune(&trace, &cfg, stats).unwrap();
        let no_anc = ablation_prune(&trace, &cfg, stats, Variant::NoAnc).unwrap();
        assert!(full.compressed_len > no_anc.compressed_len);
        for (t, tok) in trace.tokens.iter().enumerate() {
            if no_anc.mask.keep[t] {
                assert!(tok.gogi >= no_anc.mask.per_pos[t].unwrap().tau);
            }
        }
    }

    #[test]
    fn category_weighting_hook() {
        let mut trace = Trace::from_scores("t", &[1.0, 2.0, 3.0, 4.0], &[1.0; 4]).unwrap();
        trace.tokens[0] = TokenRecord::new(0, "therefore", 0, 1.0, 1.0);
        let stats = EntropyStats { h_median: 1.0, h_std: 0.0 };
        let mut cfg = EngineConfig::default();
        assert!(!prune(&trace, &cfg, stats).unwrap().mask.keep[0]);
        cfg.category_weights = Some([(crate::trace::FunctionalCategory::Connectives, 10.0)].into());
        assert!(prune(&trace, &cfg, stats).unwrap().mask.keep[0]);
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("no-anc".parse::<Variant>().unwrap(), Variant::NoAnc);
        assert!("bogus".parse::<Variant>().is_err());
    }
}
