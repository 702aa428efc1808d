//! Test-only reference implementation of the pruning loop and a fuzz corpus
//! generator. The oracle shares only data types with the crate: mapping,
//! quantile, window and cap arithmetic are written out again here, following
//! the published pseudocode with 1-based positions.
#![allow(dead_code)]

use gogiskip_core::{EngineConfig, EntropyStats, MappingMode, TokenRecord, Trace, Variant};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleStep {
    pub gamma: f64,
    pub tau: f64,
    pub n: usize,
    pub weighted: f64,
    pub overridden: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub keep: Vec<bool>,
    pub consec: Vec<usize>,
    pub steps: Vec<Option<OracleStep>>,
}

fn oracle_mode(mode: MappingMode, median: f64, std: f64) -> MappingMode {
    if mode == MappingMode::Auto {
        if std == 0.0 {
            MappingMode::Piecewise
        } else if median == 0.0 {
            MappingMode::Sigmoid
        } else if std / median < 0.05 {
            MappingMode::Gaussian
        } else if std / median <= 2.0 {
            MappingMode::Sigmoid
        } else {
            MappingMode::Tanh
        }
    } else if std == 0.0 {
        MappingMode::Piecewise
    } else {
        mode
    }
}

/// M / M': median-centred, std-scaled map into [0, 1].
fn oracle_map(h: f64, median: f64, std: f64, mode: MappingMode, s: f64) -> f64 {
    let eps = 1e-9;
    let z = s * (h - median) / if std > eps { std } else { eps };
    let v = match oracle_mode(mode, median, std) {
        MappingMode::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        MappingMode::Tanh => (z.tanh() + 1.0) / 2.0,
        MappingMode::Gaussian => (-z * z / 2.0).exp(),
        _ => {
            let d = h - median;
            let sgn = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            let base = if median > eps { median } else { eps };
            let rel = if d.abs() / base < 2.0 { d.abs() / base } else { 2.0 };
            0.5 + 0.25 * sgn * rel
        }
    };
    v.clamp(0.0, 1.0)
}

/// Linear interpolation between order statistics at fraction `p`.
pub fn oracle_quantile(sorted: &[f64], p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let pos = p * (sorted.len() - 1) as f64;
    let k = pos.floor() as usize;
    if k + 1 < sorted.len() {
        sorted[k] + (pos - k as f64) * (sorted[k + 1] - sorted[k])
    } else {
        sorted[k]
    }
}

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

fn half_up(x: f64) -> usize {
    let r = (x + 0.5).floor();
    if r < 0.0 {
        0
    } else {
        r as usize
    }
}

pub fn oracle_prune(trace: &Trace, cfg: &EngineConfig, stats: EntropyStats, variant: Variant) -> OracleResult {
    let m = trace.tokens.len();
    // x, G, H are 1-based.
    let tok = |t: usize| -> &TokenRecord { &trace.tokens[t - 1] };
    let h_of = |j: usize| tok(j).entropy;

    let in_valid = |t: usize| {
        let x = tok(t);
        let is_space = x.token_text.chars().all(|c| c.is_whitespace());
        x.valid && !(cfg.ignore_space_tokens && is_space) && !cfg.ignored_token_ids.contains(&x.token_id)
    };
    let mut valid_scores: Vec<f64> = (1..=m).filter(|&t| in_valid(t)).map(|t| tok(t).gogi).collect();
    if valid_scores.is_empty() {
        return OracleResult { keep: vec![true; m], consec: vec![0; m], steps: vec![None; m] };
    }
    valid_scores.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let (med, sd) = (stats.h_median, stats.h_std);
    let half_w = (cfg.window / 2) as i64;
    let adaptive_rate = matches!(variant, Variant::Full | Variant::NoAnc);
    let anc = matches!(variant, Variant::Full | Variant::NoEdr);

    let mut k = vec![false; m + 1];
    let mut c = vec![0usize; m + 1];
    let mut steps: Vec<Option<OracleStep>> = vec![None; m + 1];
    c[0] = 0;
    let mut last_h_hat: Option<f64> = None;
    let mut calm_steps = 0usize;

    for t in 1..=m {
        if !in_valid(t) {
            k[t] = true;
            c[t] = 0;
            continue;
        }
        let h_hat = oracle_map(h_of(t), med, sd, cfg.mapping_mode, cfg.s_gamma);
        let mut gamma_t =
            clip(cfg.gamma_min + (cfg.gamma_max - cfg.gamma_min) * h_hat, cfg.gamma_abs_min, cfg.gamma_abs_max);
        if !adaptive_rate {
            gamma_t = cfg.gamma_base;
        }
        let tau_t = oracle_quantile(&valid_scores, 1.0 - gamma_t);

        // Edge-value padded window.
        let mut acc = 0.0;
        for j in (t as i64 - half_w)..=(t as i64 + half_w) {
            let jj = if j < 1 {
                1
            } else if j > m as i64 {
                m
            } else {
                j as usize
            };
            acc += h_of(jj);
        }
        let hbar = acc / cfg.window as f64;
        let hbar_hat = oracle_map(hbar, med, sd, cfg.mapping_mode, cfg.s_n);
        let n_tilde = cfg.n_min as f64 + (cfg.n_max as f64 - cfg.n_min as f64) * (1.0 - hbar_hat);
        let mut n_t = half_up(clip(n_tilde, cfg.n_min as f64, cfg.n_max as f64));

        // Entropy gradient detection.
        let base_n = n_t;
        if cfg.entropy_gradient {
            if let Some(prev) = last_h_hat {
                let jump = (h_hat - prev).abs();
                if jump > cfg.delta_high {
                    n_t = half_up(base_n as f64 * cfg.n_shrink);
                    if n_t < cfg.n_min {
                        n_t = cfg.n_min;
                    }
                    calm_steps = 0;
                } else if jump < cfg.delta_low {
                    calm_steps += 1;
                    if calm_steps >= cfg.stability_run {
                        n_t = if base_n + 1 > cfg.n_max { cfg.n_max } else { base_n + 1 };
                    }
                } else {
                    calm_steps = 0;
                }
            }
        }
        last_h_hat = Some(h_hat);
        // Target-ratio modulation.
        if let Some(target) = cfg.gamma_target {
            let scaled = half_up(n_t as f64 * (cfg.gamma_reference / target));
            n_t = if scaled < cfg.n_min {
                cfg.n_min
            } else if scaled > cfg.n_max {
                cfg.n_max
            } else {
                scaled
            };
        }
        if !anc {
            n_t = m + 1;
        }

        let g_prime = match &cfg.category_weights {
            Some(w) => tok(t).gogi * w.get(&tok(t).category).copied().unwrap_or(1.0),
            None => tok(t).gogi,
        };
        let overridden = cfg.extreme_override && g_prime < cfg.theta_critical * tau_t;
        if overridden {
            k[t] = false;
            c[t] = c[t - 1] + 1;
        } else if g_prime >= tau_t || c[t - 1] + 1 >= n_t {
            k[t] = true;
            c[t] = 0;
        } else {
            k[t] = false;
            c[t] = c[t - 1] + 1;
        }
        steps[t] = Some(OracleStep { gamma: gamma_t, tau: tau_t, n: n_t, weighted: g_prime, overridden });
    }
    OracleResult { keep: k[1..].to_vec(), consec: c[1..].to_vec(), steps: steps[1..].to_vec() }
}

const WORDS: &[&str] = &["the", "value", "therefore", "so", "x", "we", "get", "=", "+", "12", "\\pi", "**", "\n", " "];

/// Random trace with mixed score regimes (ties, zeros, heavy tails),
/// piecewise-constant entropy stretches, invalid and space tokens.
pub fn fuzz_trace(rng: &mut ChaCha8Rng, id: usize, len: usize) -> Trace {
    let unit = Uniform::new(0.0f64, 1.0);
    let tie_levels = rng.gen_bool(0.3);
    let h_scale = rng.gen_range(0.05..3.0);
    let mut tokens = Vec::with_capacity(len);
    let mut h_run = 0usize;
    let mut h_val = 0.0;
    for t in 0..len {
        let u: f64 = unit.sample(rng);
        let mut gogi = -u.max(1e-300).ln() * rng.gen_range(0.1..5.0);
        if tie_levels {
            gogi = (gogi * 2.0).round() / 2.0;
        }
        if rng.gen_bool(0.05) {
            gogi = 0.0;
        }
        if h_run == 0 {
            h_run = rng.gen_range(1..20);
            h_val = -unit.sample(rng).max(1e-300).ln() * h_scale;
        }
        h_run -= 1;
        let entropy = if rng.gen_bool(0.7) { h_val } else { -unit.sample(rng).max(1e-300).ln() * h_scale };
        let text = WORDS[rng.gen_range(0..WORDS.len())];
        let mut rec = TokenRecord::new(t, text, rng.gen_range(0..50), gogi, entropy);
        rec.valid = rng.gen_bool(0.92);
        tokens.push(rec);
    }
    Trace { id: format!("fuzz-{id}"), tokens, ..Trace::default() }
}

/// Random but valid engine configuration.
pub fn fuzz_config(rng: &mut ChaCha8Rng) -> EngineConfig {
    let modes =
        [MappingMode::Auto, MappingMode::Sigmoid, MappingMode::Tanh, MappingMode::Gaussian, MappingMode::Piecewise];
    if rng.gen_bool(0.3) {
        return EngineConfig { mapping_mode: modes[rng.gen_range(0..modes.len())], ..EngineConfig::default() };
    }
    let gamma_min = rng.gen_range(0.05..0.5);
    let gamma_max = rng.gen_range(gamma_min..0.95);
    let n_min = rng.gen_range(1..4);
    EngineConfig {
        gamma_min,
        gamma_max,
        gamma_base: rng.gen_range(gamma_min..=gamma_max),
        s_gamma: rng.gen_range(0.2..4.0),
        s_n: rng.gen_range(0.2..4.0),
        n_min,
        n_max: n_min + rng.gen_range(0..12),
        window: 2 * rng.gen_range(0..8) + 1,
        theta_critical: rng.gen_range(0.05..0.95),
        gamma_target: rng.gen_bool(0.3).then(|| rng.gen_range(0.1..1.0)),
        mapping_mode: modes[rng.gen_range(0..modes.len())],
        ignore_space_tokens: rng.gen_bool(0.8),
        ignored_token_ids: if rng.gen_bool(0.2) { vec![rng.gen_range(0..50)] } else { Vec::new() },
        extreme_override: rng.gen_bool(0.7),
        entropy_gradient: rng.gen_bool(0.7),
        ..EngineConfig::default()
    }
}

pub fn fuzz_stats(rng: &mut ChaCha8Rng, trace: &Trace) -> EntropyStats {
    match rng.gen_range(0..4) {
        0 => EntropyStats { h_median: rng.gen_range(0.0..3.0), h_std: 0.0 },
        1 => EntropyStats { h_median: 0.0, h_std: rng.gen_range(0.01..2.0) },
        _ => gogiskip_core::estimate_global_stats(&trace.entropies()).unwrap(),
    }
}

/// Order statistic by counting rather than sorting: the value `v` with
/// `#{x < v} <= k < #{x <= v}`.
pub fn order_statistic_by_count(xs: &[f64], k: usize) -> f64 {
    for &v in xs {
        let below = xs.iter().filter(|&&x| x < v).count();
        let upto = xs.iter().filter(|&&x| x <= v).count();
        if below <= k && k < upto {
            return v;
        }
    }
    unreachable!("k out of range")
}

/// Type-7 quantile from counted order statistics.
pub fn brute_quantile(xs: &[f64], p: f64) -> f64 {
    let pos = p * (xs.len() - 1) as f64;
    let k = pos.floor() as usize;
    let lo = order_statistic_by_count(xs, k);
    let hi = if k + 1 < xs.len() { order_statistic_by_count(xs, k + 1) } else { lo };
    lo + (pos - k as f64) * (hi - lo)
}

/// Spearman's rho from O(n^2) mid-ranks and a two-pass Pearson.
pub fn brute_spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let ranks = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let less = v.iter().filter(|&&b| b < a).count() as f64;
                let equal = v.iter().filter(|&&b| b == a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..rx.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}
