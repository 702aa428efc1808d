use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gogiskip_core::analysis::{
    anc_preservation_corpus, correlation_matrix, decision_surface, entropy_report, layer_contribution_aggregate,
    retention_by_category, TraceSummary,
};
use gogiskip_core::{
    ablation_prune, estimate_global_stats, static_prune, tune, write_compressed, write_trace, ConfigFile, EngineConfig,
    EntropyStats, KeepMask, MaskSidecar, PruneOutcome, Trace, Variant,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::{AblateArgs, CompressArgs, LayersArgs, ParamArgs, StatsArgs, SurfaceArgs, SynthArgs, TuneArgs};
use crate::io::{discover, load_all, load_all_strict, stem, write_atomic, write_json, MissingInput, PartialFailure};
use crate::synth::{synth_trace, SynthSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsSource {
    Flags,
    Config,
    TraceMeta,
    Corpus,
}

/// Config resolved from defaults, an optional file and flag overrides.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub cfg: EngineConfig,
    pub flag_stats: Option<EntropyStats>,
    pub file_stats: Option<EntropyStats>,
}

impl Resolved {
    /// Stats for one trace: flags, then config file, then the trace's meta
    /// line, then the corpus estimate.
    pub fn stats_for(&self, trace: &Trace, corpus: Option<EntropyStats>) -> Result<(EntropyStats, StatsSource)> {
        if let Some(s) = self.flag_stats {
            return Ok((s, StatsSource::Flags));
        }
        if let Some(s) = self.file_stats {
            return Ok((s, StatsSource::Config));
        }
        if let Some(s) = trace.stats {
            return Ok((s, StatsSource::TraceMeta));
        }
        corpus.map(|s| (s, StatsSource::Corpus)).ok_or_else(|| anyhow!("no entropy statistics available"))
    }

    /// Stats shared by the whole corpus (flags, config or corpus estimate).
    pub fn global_stats(&self, traces: &[&Trace]) -> Result<(EntropyStats, StatsSource)> {
        if let Some(s) = self.flag_stats {
            return Ok((s, StatsSource::Flags));
        }
        if let Some(s) = self.file_stats {
            return Ok((s, StatsSource::Config));
        }
        Ok((corpus_stats(&self.cfg, traces)?, StatsSource::Corpus))
    }
}

/// Median and population std over the valid tokens of every trace.
pub fn corpus_stats(cfg: &EngineConfig, traces: &[&Trace]) -> Result<EntropyStats> {
    let all: Vec<f64> =
        traces.iter().flat_map(|t| t.tokens.iter().filter(|x| cfg.is_valid(x)).map(|x| x.entropy)).collect();
    if all.is_empty() {
        bail!("corpus has no valid tokens to estimate entropy statistics");
    }
    Ok(estimate_global_stats(&all)?)
}

pub fn resolve(params: &ParamArgs) -> Result<Resolved> {
    let file = match &params.config {
        Some(path) => {
            if !path.exists() {
                return Err(MissingInput(path.display().to_string()).into());
            }
            ConfigFile::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => ConfigFile::default(),
    };
    let file_stats = file.stats()?;
    let mut cfg = file.engine;
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = params.$f { cfg.$f = v; } )* };
    }
    set!(
        gamma_min,
        gamma_max,
        gamma_abs_min,
        gamma_abs_max,
        gamma_base,
        gamma_reference,
        entropy_delta,
        s_gamma,
        n_min,
        n_max,
        window,
        s_n,
        theta_critical,
        delta_high,
        delta_low,
        mapping_mode
    );
    if params.gamma_target.is_some() {
        cfg.gamma_target = params.gamma_target;
    }
    if params.no_override {
        cfg.extreme_override = false;
    }
    if params.no_gradient {
        cfg.entropy_gradient = false;
    }
    if params.keep_space_tokens {
        cfg.ignore_space_tokens = false;
    }
    cfg.ignored_token_ids.extend(&params.ignored_token_ids);
    cfg.validate()?;
    let flag_stats = match (params.h_median, params.h_std) {
        (Some(m), Some(s)) => Some(EntropyStats::new(m, s)?),
        _ => None,
    };
    Ok(Resolved { cfg, flag_stats, file_stats })
}

fn init_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Serialize)]
struct TraceRecord {
    id: String,
    input: String,
    total: usize,
    kept: usize,
    retention_ratio: f64,
    valid_retention_ratio: f64,
    no_valid_tokens: bool,
    stats: EntropyStats,
    stats_source: StatsSource,
}

#[derive(Serialize)]
struct ErrorRecord {
    input: String,
    error: String,
}

pub fn compress(args: &CompressArgs) -> Result<()> {
    let resolved = resolve(&args.params)?;
    let paths = discover(&args.input)?;
    init_dir(&args.out)?;
    let loaded = load_all(&paths);

    let parsed: Vec<&Trace> = loaded.iter().filter_map(|(_, t)| t.as_ref().ok()).collect();
    let needs_corpus =
        resolved.flag_stats.is_none() && resolved.file_stats.is_none() && parsed.iter().any(|t| t.stats.is_none());
    let corpus = if needs_corpus { corpus_stats(&resolved.cfg, &parsed).ok() } else { None };

    let results: Vec<(PathBuf, Result<TraceRecord>)> = loaded
        .par_iter()
        .map(|(path, trace)| {
            let rec = trace
                .as_ref()
                .map_err(|e| anyhow!("{e:#}"))
                .and_then(|t| compress_one(path, t, &resolved, corpus, args.variant, &args.out));
            (path.clone(), rec)
        })
        .collect();

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (path, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                warn!("{}: {e:#}", path.display());
                errors.push(ErrorRecord { input: path.display().to_string(), error: format!("{e:#}") });
            }
        }
    }
    let kept: usize = records.iter().map(|r| r.kept).sum();
    let total: usize = records.iter().map(|r| r.total).sum();
    let summary = json!({
        "variant": args.variant,
        "gamma_target": resolved.cfg.gamma_target,
        "stats": resolved.flag_stats.or(resolved.file_stats).or(corpus),
        "stats_source": if resolved.flag_stats.is_some() {
            Some(StatsSource::Flags)
        } else if resolved.file_stats.is_some() {
            Some(StatsSource::Config)
        } else {
            corpus.map(|_| StatsSource::Corpus)
        },
        "config": resolved.cfg,
        "inputs": paths.len(),
        "succeeded": records.len(),
        "failed": errors.len(),
        "total_tokens": total,
        "kept_tokens": kept,
        "retention_ratio": if total == 0 { None } else { Some(kept as f64 / total as f64) },
        "traces": records,
    });
    write_json(&args.out.join("summary.json"), &summary)?;
    info!("compressed {} traces, kept {kept} of {total} tokens", summary["succeeded"]);
    if !errors.is_empty() {
        write_json(&args.out.join("errors.json"), &errors)?;
        return Err(PartialFailure { failed: errors.len(), total: paths.len() }.into());
    }
    Ok(())
}

fn compress_one(
    path: &Path,
    trace: &Trace,
    resolved: &Resolved,
    corpus: Option<EntropyStats>,
    variant: Variant,
    out: &Path,
) -> Result<TraceRecord> {
    let (stats, source) = resolved.stats_for(trace, corpus)?;
    let outcome = ablation_prune(trace, &resolved.cfg, stats, variant)?;
    let name = stem(path);
    let mut buf = Vec::new();
    write_compressed(trace, &outcome.mask, &mut buf)?;
    write_atomic(&out.join(format!("{name}.jsonl")), &buf)?;

    let mut sidecar = MaskSidecar::new(trace, &outcome.mask);
    sidecar.extra.insert("variant".into(), json!(variant));
    sidecar.extra.insert("stats".into(), json!(stats));
    sidecar.extra.insert("no_valid_tokens".into(), json!(outcome.no_valid_tokens));
    let mut side = Vec::new();
    sidecar.write(&mut side)?;
    write_atomic(&out.join(format!("{name}.diag.json")), &side)?;

    Ok(TraceRecord {
        id: trace.id.clone(),
        input: path.display().to_string(),
        total: trace.len(),
        kept: outcome.compressed_len,
        retention_ratio: outcome.retention_ratio,
        valid_retention_ratio: outcome.valid_retention_ratio,
        no_valid_tokens: outcome.no_valid_tokens,
        stats,
        stats_source: source,
    })
}

pub fn tune_cmd(args: &TuneArgs) -> Result<()> {
    let resolved = resolve(&args.params)?;
    let traces: Vec<Trace> = load_all_strict(&args.input)?.into_iter().map(|(_, t)| t).collect();
    let report = tune(&traces, &resolved.cfg)?;
    let stats = report.features.entropy_stats();
    let file = ConfigFile { engine: report.config.clone(), h_median: Some(stats.h_median), h_std: Some(stats.h_std) };
    write_atomic(&args.out_config, file.render(&args.out_config)?.as_bytes())?;
    if let Some(p) = &args.features {
        write_json(p, &json!({ "features": report.features, "gamma_target": report.gamma_target }))?;
    }
    info!("gamma_target = {}", report.gamma_target);
    Ok(())
}

pub fn stats_cmd(args: &StatsArgs) -> Result<()> {
    let resolved = resolve(&args.params)?;
    let loaded = load_all_strict(&args.input)?;
    let traces: Vec<Trace> = loaded.iter().map(|(_, t)| t.clone()).collect();
    let refs: Vec<&Trace> = traces.iter().collect();
    let (stats, source) = resolved.global_stats(&refs)?;
    init_dir(&args.out)?;

    let masks: Vec<KeepMask> = match &args.masks {
        Some(dir) => loaded
            .iter()
            .map(|(path, trace)| {
                let side = dir.join(format!("{}.diag.json", stem(path)));
                let file = fs::File::open(&side).map_err(|_| MissingInput(side.display().to_string()))?;
                let s = MaskSidecar::read(file)?;
                if s.total != trace.len() {
                    bail!("{} covers {} tokens, trace has {}", side.display(), s.total, trace.len());
                }
                Ok(s.mask)
            })
            .collect::<Result<_>>()?,
        None => traces
            .par_iter()
            .map(|t| Ok(ablation_prune(t, &resolved.cfg, stats, Variant::Full)?.mask))
            .collect::<Result<_>>()?,
    };

    write_json(&args.out.join("retention.json"), &retention_by_category(&traces, &masks)?)?;
    write_json(
        &args.out.join("anc_preservation.json"),
        &json!({
            "stats": stats,
            "stats_source": source,
            "report": anc_preservation_corpus(&traces, &resolved.cfg, stats)?,
        }),
    )?;
    let summaries: Vec<TraceSummary> =
        traces.iter().filter_map(|t| TraceSummary::from_trace(t, &resolved.cfg)).collect();
    write_json(&args.out.join("trace_summaries.json"), &summaries)?;
    write_json(&args.out.join("correlation.json"), &correlation_matrix(&summaries))?;
    write_json(&args.out.join("entropy.json"), &entropy_report(&traces, &resolved.cfg)?)?;
    Ok(())
}

/// `start:stop:count` (inclusive, evenly spaced) or `a,b,c`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = if parts.len() == 3 {
        let start: f64 = parts[0].trim().parse()?;
        let stop: f64 = parts[1].trim().parse()?;
        let count: usize = parts[2].trim().parse()?;
        match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => (0..count).map(|i| start + (stop - start) * i as f64 / (count - 1) as f64).collect(),
        }
    } else {
        spec.split(',').map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|v: &f64| !v.is_finite()) {
        bail!("grid {spec:?} must contain finite values");
    }
    Ok(grid)
}

pub fn surface_cmd(args: &SurfaceArgs) -> Result<()> {
    let resolved = resolve(&args.params)?;
    let stats = resolved
        .flag_stats
        .or(resolved.file_stats)
        .ok_or_else(|| anyhow!("surface needs --h-median/--h-std or a config carrying them"))?;
    let q_grid = parse_grid(&args.q_grid)?;
    if q_grid.iter().any(|q| !(0.0..=1.0).contains(q)) {
        bail!("score quantiles must lie in [0, 1]");
    }
    let surface = decision_surface(&resolved.cfg, stats, &parse_grid(&args.h_grid)?, &q_grid)?;
    write_atomic(&args.out, surface.to_csv().as_bytes())?;
    write_json(&args.out.with_extension("json"), &json!({ "stats": stats, "surface": surface }))?;
    Ok(())
}

pub fn layers_cmd(args: &LayersArgs) -> Result<()> {
    let traces: Vec<Trace> = load_all_strict(&args.input)?.into_iter().map(|(_, t)| t).collect();
    let profile = layer_contribution_aggregate(&traces)?;
    write_json(
        &args.out,
        &json!({
            "traces": traces.len(),
            "latest_peak_layer": profile.latest_peak(1e-9),
            "profile": profile,
        }),
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub traces: usize,
    pub tokens: usize,
    pub kept: usize,
    pub retention_ratio: f64,
    pub valid_retention_ratio: f64,
    pub mean_trace_retention: f64,
}

fn ablation_row(name: &str, outcomes: &[PruneOutcome]) -> AblationRow {
    let tokens: usize = outcomes.iter().map(|o| o.mask.len()).sum();
    let kept: usize = outcomes.iter().map(|o| o.compressed_len).sum();
    let valid: usize = outcomes.iter().map(|o| o.valid_count).sum();
    let kept_valid: f64 = outcomes.iter().map(|o| o.valid_retention_ratio * o.valid_count as f64).sum();
    AblationRow {
        variant: name.to_string(),
        traces: outcomes.len(),
        tokens,
        kept,
        retention_ratio: kept as f64 / tokens.max(1) as f64,
        valid_retention_ratio: if valid == 0 { 1.0 } else { kept_valid.round() / valid as f64 },
        mean_trace_retention: outcomes.iter().map(|o| o.retention_ratio).sum::<f64>() / outcomes.len().max(1) as f64,
    }
}

pub fn ablate_cmd(args: &AblateArgs) -> Result<()> {
    let resolved = resolve(&args.params)?;
    let traces: Vec<Trace> = load_all_strict(&args.input)?.into_iter().map(|(_, t)| t).collect();
    let refs: Vec<&Trace> = traces.iter().collect();
    let (stats, source) = resolved.global_stats(&refs)?;
    let cfg = &resolved.cfg;

    let mut rows = Vec::new();
    for variant in Variant::ALL {
        let outcomes: Vec<PruneOutcome> =
            traces.par_iter().map(|t| ablation_prune(t, cfg, stats, variant)).collect::<Result<_, _>>()?;
        rows.push(ablation_row(variant.as_str(), &outcomes));
    }
    let statics: Vec<PruneOutcome> = traces
        .par_iter()
        .filter(|t| t.tokens.iter().any(|x| cfg.is_valid(x)))
        .map(|t| static_prune(t, cfg.gamma_base, cfg))
        .collect::<Result<_, _>>()?;
    rows.push(ablation_row("static", &statics));

    init_dir(&args.out)?;
    let mut csv =
        String::from("variant,traces,tokens,kept,retention_ratio,valid_retention_ratio,mean_trace_retention\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.variant, r.traces, r.tokens, r.kept, r.retention_ratio, r.valid_retention_ratio, r.mean_trace_retention
        ));
    }
    write_atomic(&args.out.join("ablation.csv"), csv.as_bytes())?;
    let by_name: BTreeMap<&str, &AblationRow> = rows.iter().map(|r| (r.variant.as_str(), r)).collect();
    write_json(
        &args.out.join("ablation.json"),
        &json!({ "stats": stats, "stats_source": source, "static_gamma": cfg.gamma_base, "variants": by_name }),
    )
}

pub fn synth_cmd(args: &SynthArgs) -> Result<()> {
    if args.len == 0 {
        bail!("--len must be positive");
    }
    init_dir(&args.out)?;
    let spec = SynthSpec { mean_len: args.len, layers: args.layers, ..SynthSpec::default() };
    (0..args.n).into_par_iter().try_for_each(|i| {
        let trace = synth_trace(args.seed, i, &spec);
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf)?;
        write_atomic(&args.out.join(format!("{}.jsonl", trace.id)), &buf)
    })
}
