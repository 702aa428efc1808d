//! Diagnostic analyses over traces and masks: retention by category, ANC
//! preservation, rank correlations, entropy distribution summaries, layer
//! contribution aggregation and decision-surface grids.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::mapping::{map_entropy, EntropyStats};
use crate::policy::{quantile_sorted, retention_rate};
use crate::pruner::prune;
use crate::trace::{FunctionalCategory, KeepMask, Trace};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryRetention {
    pub total: u64,
    pub kept: u64,
    pub rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub per_category: BTreeMap<FunctionalCategory, CategoryRetention>,
    pub total: u64,
    pub kept: u64,
    pub overall_ratio: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Exact kept/total counts per functional category over paired traces and masks.
pub fn retention_by_category(traces: &[Trace], masks: &[KeepMask]) -> Result<RetentionReport> {
    if traces.len() != masks.len() {
        return Err(Error::contract(format!("{} traces but {} masks", traces.len(), masks.len())));
    }
    let mut report = RetentionReport::default();
    for (trace, mask) in traces.iter().zip(masks) {
        if trace.len() != mask.len() {
            return Err(Error::contract(format!(
                "trace {:?} has {} tokens but its mask has {}",
                trace.id,
                trace.len(),
                mask.len()
            )));
        }
        for (tok, &keep) in trace.tokens.iter().zip(&mask.keep) {
            let entry = report.per_category.entry(tok.category).or_default();
            entry.total += 1;
            entry.kept += u64::from(keep);
        }
    }
    for entry in report.per_category.values_mut() {
        entry.rate = ratio(entry.kept, entry.total);
        report.total += entry.total;
        report.kept += entry.kept;
    }
    report.overall_ratio = ratio(report.kept, report.total);
    Ok(report)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryPreservation {
    pub total: u64,
    /// Valid tokens whose weighted score fell below the local threshold.
    pub initially_pruned: u64,
    /// Of those, tokens the N-constraint kept anyway.
    pub preserved_by_anc: u64,
    pub preservation_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AncPreservationReport {
    pub per_category: BTreeMap<FunctionalCategory, CategoryPreservation>,
    pub aggregate: CategoryPreservation,
}

impl AncPreservationReport {
    pub fn merge(&mut self, other: &AncPreservationReport) {
        for (cat, p) in &other.per_category {
            let e = self.per_category.entry(*cat).or_default();
            e.total += p.total;
            e.initially_pruned += p.initially_pruned;
            e.preserved_by_anc += p.preserved_by_anc;
        }
        self.finish();
    }

    fn finish(&mut self) {
        let mut agg = CategoryPreservation::default();
        for p in self.per_category.values_mut() {
            p.preservation_rate = ratio(p.preserved_by_anc, p.initially_pruned);
            agg.total += p.total;
            agg.initially_pruned += p.initially_pruned;
            agg.preserved_by_anc += p.preserved_by_anc;
        }
        agg.preservation_rate = ratio(agg.preserved_by_anc, agg.initially_pruned);
        self.aggregate = agg;
    }
}

/// Count below-threshold tokens and how many of them the full policy kept.
///
/// The counterfactual uses the full run's own thresholds. Override-pruned
/// positions count as initially pruned and never as preserved.
pub fn anc_preservation(trace: &Trace, cfg: &EngineConfig, stats: EntropyStats) -> Result<AncPreservationReport> {
    let full = prune(trace, cfg, stats)?;
    let mut report = AncPreservationReport::default();
    for (t, tok) in trace.tokens.iter().enumerate() {
        let e = report.per_category.entry(tok.category).or_default();
        e.total += 1;
        if let Some(d) = full.mask.per_pos[t] {
            if d.below_tau {
                e.initially_pruned += 1;
                if full.mask.keep[t] {
                    e.preserved_by_anc += 1;
                }
            }
        }
    }
    report.finish();
    Ok(report)
}

pub fn anc_preservation_corpus(
    traces: &[Trace],
    cfg: &EngineConfig,
    stats: EntropyStats,
) -> Result<AncPreservationReport> {
    let mut total = AncPreservationReport::default();
    for trace in traces {
        total.merge(&anc_preservation(trace, cfg, stats)?);
    }
    Ok(total)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::contract(format!("length mismatch {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two observations"));
    }
    pearson(&average_ranks(xs), &average_ranks(ys)).ok_or(Error::UndefinedCorrelation("constant input"))
}

/// Per-trace GoGI and entropy statistics over valid tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub id: String,
    pub length: f64,
    pub gogi_mean: f64,
    pub gogi_max: f64,
    pub gogi_std: f64,
    /// Fraction of valid tokens scoring below 1% of the trace maximum.
    pub gogi_sparsity: f64,
    pub entropy_mean: f64,
    pub entropy_max: f64,
    pub entropy_std: f64,
}

pub const SUMMARY_METRICS: [&str; 8] =
    ["length", "gogi_mean", "gogi_max", "gogi_std", "gogi_sparsity", "entropy_mean", "entropy_max", "entropy_std"];

impl TraceSummary {
    pub fn from_trace(trace: &Trace, cfg: &EngineConfig) -> Option<TraceSummary> {
        let valid: Vec<_> = trace.tokens.iter().filter(|t| cfg.is_valid(t)).collect();
        if valid.is_empty() {
            return None;
        }
        let g: Vec<f64> = valid.iter().map(|t| t.gogi).collect();
        let h: Vec<f64> = valid.iter().map(|t| t.entropy).collect();
        let (gogi_mean, gogi_std) = moments(&g);
        let (entropy_mean, entropy_std) = moments(&h);
        let gogi_max = g.iter().copied().fold(0.0, f64::max);
        let sparse = g.iter().filter(|&&x| x < 0.01 * gogi_max).count();
        Some(TraceSummary {
            id: trace.id.clone(),
            length: trace.len() as f64,
            gogi_mean,
            gogi_max,
            gogi_std,
            gogi_sparsity: sparse as f64 / g.len() as f64,
            entropy_mean,
            entropy_max: h.iter().copied().fold(0.0, f64::max),
            entropy_std,
        })
    }

    pub fn metric(&self, name: &str) -> f64 {
        match name {
            "length" => self.length,
            "gogi_mean" => self.gogi_mean,
            "gogi_max" => self.gogi_max,
            "gogi_std" => self.gogi_std,
            "gogi_sparsity" => self.gogi_sparsity,
            "entropy_mean" => self.entropy_mean,
            "entropy_max" => self.entropy_max,
            "entropy_std" => self.entropy_std,
            _ => f64::NAN,
        }
    }
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// Row-major; `None` where a metric is constant across traces.
    pub values: Vec<Vec<Option<f64>>>,
    pub samples: usize,
}

/// Spearman matrix across per-trace summary metrics.
pub fn correlation_matrix(summaries: &[TraceSummary]) -> CorrelationMatrix {
    let columns: Vec<Vec<f64>> =
        SUMMARY_METRICS.iter().map(|m| summaries.iter().map(|s| s.metric(m)).collect()).collect();
    let values = columns.iter().map(|a| columns.iter().map(|b| spearman(a, b).ok()).collect()).collect();
    CorrelationMatrix {
        labels: SUMMARY_METRICS.iter().map(|s| s.to_string()).collect(),
        values,
        samples: summaries.len(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    /// Population skewness; 0 for constant samples.
    pub skewness: f64,
}

impl DistributionSummary {
    pub fn of(xs: &[f64]) -> Option<DistributionSummary> {
        if xs.is_empty() {
            return None;
        }
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (mean, std) = moments(&sorted);
        let skewness = if std > 0.0 {
            sorted.iter().map(|x| ((x - mean) / std).powi(3)).sum::<f64>() / sorted.len() as f64
        } else {
            0.0
        };
        Some(DistributionSummary {
            count: sorted.len(),
            mean,
            std,
            min: sorted[0],
            q25: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q75: quantile_sorted(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
            skewness,
        })
    }
}

/// Distributions of per-trace mean, max and std entropy, plus the pooled
/// token-level distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub token_level: DistributionSummary,
    pub trace_mean: DistributionSummary,
    pub trace_max: DistributionSummary,
    pub trace_std: DistributionSummary,
    /// Spearman correlation of per-trace mean / max / std entropy with trace length.
    pub length_correlation: BTreeMap<String, Option<f64>>,
}

pub fn entropy_report(traces: &[Trace], cfg: &EngineConfig) -> Result<EntropyReport> {
    let summaries: Vec<TraceSummary> = traces.iter().filter_map(|t| TraceSummary::from_trace(t, cfg)).collect();
    let tokens: Vec<f64> =
        traces.iter().flat_map(|t| t.tokens.iter().filter(|k| cfg.is_valid(k)).map(|k| k.entropy)).collect();
    let none = || Error::contract("no valid tokens in corpus");
    let col = |f: fn(&TraceSummary) -> f64| summaries.iter().map(f).collect::<Vec<f64>>();
    let lengths = col(|s| s.length);
    let mut length_correlation = BTreeMap::new();
    for (name, xs) in [
        ("entropy_mean", col(|s| s.entropy_mean)),
        ("entropy_max", col(|s| s.entropy_max)),
        ("entropy_std", col(|s| s.entropy_std)),
    ] {
        length_correlation.insert(name.to_string(), spearman(&xs, &lengths).ok());
    }
    Ok(EntropyReport {
        token_level: DistributionSummary::of(&tokens).ok_or_else(none)?,
        trace_mean: DistributionSummary::of(&col(|s| s.entropy_mean)).ok_or_else(none)?,
        trace_max: DistributionSummary::of(&col(|s| s.entropy_max)).ok_or_else(none)?,
        trace_std: DistributionSummary::of(&col(|s| s.entropy_std)).ok_or_else(none)?,
        length_correlation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerContribution {
    /// Mean per-layer gradient L1 norm over all valid positions of all traces.
    pub per_layer: Vec<f64>,
    /// `per_layer` scaled so its maximum is 1 (unchanged when all zero).
    pub normalized: Vec<f64>,
    pub positions: usize,
}

impl LayerContribution {
    /// Index of the last layer whose normalized contribution is within
    /// `tolerance` of the peak.
    pub fn latest_peak(&self, tolerance: f64) -> Option<usize> {
        self.normalized.iter().rposition(|&v| v >= 1.0 - tolerance && v > 0.0)
    }
}

/// Pooled per-layer mean of supplied gradient norms.
pub fn layer_contribution_aggregate(traces: &[Trace]) -> Result<LayerContribution> {
    let mut layers: Option<usize> = None;
    let mut sums: Vec<f64> = Vec::new();
    let mut positions = 0usize;
    for trace in traces {
        let grads = trace
            .layer_grads
            .as_ref()
            .ok_or_else(|| Error::contract(format!("trace {:?} has no layer_grads", trace.id)))?;
        let count = trace.layer_count().unwrap_or(0);
        match layers {
            None => {
                layers = Some(count);
                sums = vec![0.0; count];
            }
            Some(l) if l != count => {
                return Err(Error::contract(format!("trace {:?} has {count} layers, expected {l}", trace.id)))
            }
            Some(_) => {}
        }
        for (tok, row) in trace.tokens.iter().zip(grads) {
            if !tok.valid {
                continue;
            }
            for (s, g) in sums.iter_mut().zip(row) {
                *s += g;
            }
            positions += 1;
        }
    }
    if layers.is_none() {
        return Err(Error::contract("no traces"));
    }
    let per_layer: Vec<f64> = if positions == 0 { sums } else { sums.iter().map(|s| s / positions as f64).collect() };
    let peak = per_layer.iter().copied().fold(0.0, f64::max);
    let normalized = if peak > 0.0 { per_layer.iter().map(|v| v / peak).collect() } else { per_layer.clone() };
    Ok(LayerContribution { per_layer, normalized, positions })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub h: f64,
    pub q: f64,
    pub h_hat: f64,
    pub gamma: f64,
    /// Score quantile at which the threshold sits, `1 - gamma`.
    pub tau_quantile: f64,
    pub passes: bool,
    /// Score quantile coincides with the threshold quantile.
    pub boundary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionSurface {
    pub h_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
    /// `cells[i][j]` for `h_grid[i]`, `q_grid[j]`.
    pub cells: Vec<Vec<SurfaceCell>>,
    /// Fraction of score quantiles passing, per entropy row.
    pub keep_fraction: Vec<f64>,
}

const BOUNDARY_TOL: f64 = 1e-12;

/// Joint policy grid over raw entropy and score quantile: a token at score
/// quantile `q` passes the threshold iff `q >= 1 - gamma(H)`.
pub fn decision_surface(
    cfg: &EngineConfig,
    stats: EntropyStats,
    h_grid: &[f64],
    q_grid: &[f64],
) -> Result<DecisionSurface> {
    if h_grid.is_empty() || q_grid.is_empty() {
        return Err(Error::contract("decision surface needs non-empty grids"));
    }
    let mut cells = Vec::with_capacity(h_grid.len());
    let mut keep_fraction = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        let h_hat = map_entropy(h, stats, cfg.mapping_mode, cfg.s_gamma);
        let gamma = retention_rate(h_hat, cfg);
        let tau_quantile = 1.0 - gamma;
        let row: Vec<SurfaceCell> = q_grid
            .iter()
            .map(|&q| SurfaceCell {
                h,
                q,
                h_hat,
                gamma,
                tau_quantile,
                passes: q >= tau_quantile - BOUNDARY_TOL,
                boundary: (q - tau_quantile).abs() <= BOUNDARY_TOL,
            })
            .collect();
        keep_fraction.push(row.iter().filter(|c| c.passes).count() as f64 / q_grid.len() as f64);
        cells.push(row);
    }
    Ok(DecisionSurface { h_grid: h_grid.to_vec(), q_grid: q_grid.to_vec(), cells, keep_fraction })
}

impl DecisionSurface {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,q,h_hat,gamma,tau_quantile,passes,boundary\n");
        for c in self.cells.iter().flatten() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.h,
                c.q,
                c.h_hat,
                c.gamma,
                c.tau_quantile,
                u8::from(c.passes),
                u8::from(c.boundary)
            );
        }
        out
    }
}
