//! Entropy normalization to `[0, 1]` from global median / standard deviation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard for divisions by a median or standard deviation that may be zero.
pub const EPS: f64 = 1e-9;

/// Global entropy normalization parameters, in nats.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyStats {
    pub h_median: f64,
    pub h_std: f64,
}

impl EntropyStats {
    pub fn new(h_median: f64, h_std: f64) -> Result<Self> {
        if !(h_median.is_finite() && h_median >= 0.0 && h_std.is_finite() && h_std >= 0.0) {
            return Err(Error::contract(format!(
                "entropy stats must be finite and non-negative (median {h_median}, std {h_std})"
            )));
        }
        Ok(EntropyStats { h_median, h_std })
    }
}

/// Exact sample median (mean of the middle pair for even counts) and
/// population standard deviation.
pub fn estimate_global_stats(entropies: &[f64]) -> Result<EntropyStats> {
    if entropies.is_empty() {
        return Err(Error::contract("cannot estimate entropy stats from an empty sequence"));
    }
    if let Some(bad) = entropies.iter().find(|h| !h.is_finite() || **h < 0.0) {
        return Err(Error::contract(format!("entropy {bad} is not a finite non-negative value")));
    }
    let mut sorted = entropies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let h_median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / n as f64;
    EntropyStats::new(h_median, var.sqrt())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingMode {
    #[default]
    Auto,
    Sigmoid,
    Tanh,
    Gaussian,
    Piecewise,
}

impl fmt::Display for MappingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MappingMode::Auto => "auto",
            MappingMode::Sigmoid => "sigmoid",
            MappingMode::Tanh => "tanh",
            MappingMode::Gaussian => "gaussian",
            MappingMode::Piecewise => "piecewise",
        })
    }
}

impl FromStr for MappingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(MappingMode::Auto),
            "sigmoid" => Ok(MappingMode::Sigmoid),
            "tanh" => Ok(MappingMode::Tanh),
            "gaussian" => Ok(MappingMode::Gaussian),
            "piecewise" => Ok(MappingMode::Piecewise),
            other => Err(Error::ConfigFormat(format!("unknown mapping mode {other:?}"))),
        }
    }
}

/// Pick a concrete transformation from the dispersion ratio `h_std / h_median`.
pub fn resolve_auto(stats: EntropyStats) -> MappingMode {
    if stats.h_std == 0.0 {
        return MappingMode::Piecewise;
    }
    if stats.h_median == 0.0 {
        return MappingMode::Sigmoid;
    }
    let ratio = stats.h_std / stats.h_median;
    if ratio < 0.05 {
        MappingMode::Gaussian
    } else if ratio <= 2.0 {
        MappingMode::Sigmoid
    } else {
        MappingMode::Tanh
    }
}

/// Resolve `Auto` and the zero-deviation fallback to the mode actually applied.
pub fn effective_mode(mode: MappingMode, stats: EntropyStats) -> MappingMode {
    match mode {
        MappingMode::Auto => resolve_auto(stats),
        _ if stats.h_std == 0.0 => MappingMode::Piecewise,
        m => m,
    }
}

/// Map a raw entropy to `[0, 1]`.
///
/// With `z = scale * (h - h_median) / h_std`: sigmoid `1/(1+e^-z)`, tanh
/// `(tanh z + 1)/2`, gaussian `exp(-z^2/2)`. Piecewise is linear in the
/// median-relative deviation, saturating at twice the median.
pub fn map_entropy(h: f64, stats: EntropyStats, mode: MappingMode, scale: f64) -> f64 {
    let mode = effective_mode(mode, stats);
    let dev = h - stats.h_median;
    let z = || scale * dev / stats.h_std.max(EPS);
    let v = match mode {
        MappingMode::Sigmoid => 1.0 / (1.0 + (-z()).exp()),
        MappingMode::Tanh => (z().tanh() + 1.0) / 2.0,
        MappingMode::Gaussian => {
            let z = z();
            (-z * z / 2.0).exp()
        }
        MappingMode::Piecewise | MappingMode::Auto => {
            let rel = (dev.abs() / stats.h_median.max(EPS)).min(2.0);
            0.5 + 0.25 * sign(dev) * rel
        }
    };
    v.clamp(0.0, 1.0)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(m: f64, s: f64) -> EntropyStats {
        EntropyStats::new(m, s).unwrap()
    }

    #[test]
    fn global_stats_examples() {
        let s = estimate_global_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.h_median, 2.0);
        assert!((s.h_std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(estimate_global_stats(&[5.0; 4]).unwrap(), stats(5.0, 0.0));
        assert_eq!(estimate_global_stats(&[0.0, 4.0]).unwrap(), stats(2.0, 2.0));
        assert!(estimate_global_stats(&[]).is_err());
        assert!(estimate_global_stats(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn sigmoid_reference_values() {
        let s = stats(1.2, 0.7);
        assert_eq!(map_entropy(1.2, s, MappingMode::Sigmoid, 1.8), 0.5);
        assert_eq!(map_entropy(1.2, s, MappingMode::Tanh, 1.8), 0.5);
        let one_sd = map_entropy(1.9, s, MappingMode::Sigmoid, 1.8);
        assert!((one_sd - 1.0 / (1.0 + (-1.8f64).exp())).abs() < 1e-12);
        assert!((one_sd - 0.858).abs() < 1e-3);
        // z >= 7 saturates
        assert!(map_entropy(1.2 + 7.0 * 0.7 / 1.8, s, MappingMode::Sigmoid, 1.8) >= 0.999);
        assert_eq!(map_entropy(1e9, s, MappingMode::Sigmoid, 1.8), 1.0);
    }

    #[test]
    fn gaussian_peaks_at_median() {
        let s = stats(2.0, 0.05);
        assert_eq!(map_entropy(2.0, s, MappingMode::Gaussian, 1.0), 1.0);
        assert!(map_entropy(2.5, s, MappingMode::Gaussian, 1.0) < 1e-6);
    }

    #[test]
    fn zero_std_falls_back_to_piecewise() {
        let s = stats(2.0, 0.0);
        assert_eq!(map_entropy(2.0, s, MappingMode::Sigmoid, 1.8), 0.5);
        assert_eq!(map_entropy(3.0, s, MappingMode::Tanh, 1.8), 0.625);
        assert_eq!(map_entropy(0.0, s, MappingMode::Gaussian, 1.8), 0.25);
        assert_eq!(map_entropy(100.0, s, MappingMode::Piecewise, 1.8), 1.0);
    }

    #[test]
    fn auto_resolution_table() {
        assert_eq!(resolve_auto(stats(1.0, 0.0)), MappingMode::Piecewise);
        assert_eq!(resolve_auto(stats(0.0, 0.3)), MappingMode::Sigmoid);
        assert_eq!(resolve_auto(stats(1.0, 0.01)), MappingMode::Gaussian);
        assert_eq!(resolve_auto(stats(1.0, 0.5)), MappingMode::Sigmoid);
        assert_eq!(resolve_auto(stats(1.0, 2.0)), MappingMode::Sigmoid);
        assert_eq!(resolve_auto(stats(1.0, 2.5)), MappingMode::Tanh);
    }

    #[test]
    fn mode_names_parse() {
        for m in
            [MappingMode::Auto, MappingMode::Sigmoid, MappingMode::Tanh, MappingMode::Gaussian, MappingMode::Piecewise]
        {
            assert_eq!(m.to_string().parse::<MappingMode>().unwrap(), m);
        }
        assert!("cubic".parse::<MappingMode>().is_err());
    }

    fn any_mode() -> impl Strategy<Value = MappingMode> {
        prop_oneof![
            Just(MappingMode::Auto),
            Just(MappingMode::Sigmoid),
            Just(MappingMode::Tanh),
            Just(MappingMode::Gaussian),
            Just(MappingMode::Piecewise),
        ]
    }

    proptest! {
        #[test]
        fn output_in_unit_interval(
            m in 0.0f64..10.0, s in 0.0f64..10.0, h in 0.0f64..100.0,
            scale in 0.01f64..10.0, mode in any_mode(),
        ) {
            let v = map_entropy(h, stats(m, s), mode, scale);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn monotone_families(
            m in 0.0f64..10.0, s in 0.0f64..10.0, a in 0.0f64..50.0, b in 0.0f64..50.0,
            scale in 0.01f64..10.0,
            mode in prop_oneof![Just(MappingMode::Sigmoid), Just(MappingMode::Tanh), Just(MappingMode::Piecewise)],
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let st = stats(m, s);
            prop_assert!(map_entropy(lo, st, mode, scale) <= map_entropy(hi, st, mode, scale));
        }
    }
}
