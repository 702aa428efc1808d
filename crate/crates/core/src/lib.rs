//! Goal-gradient guided, entropy-adaptive compression of chain-of-thought traces.
//!
//! Given per-token goal-gradient importance (GoGI) scores and predictive
//! entropies, the engine decides which reasoning tokens to keep:
//!
//! * [`mapping`] normalizes entropies with global median / std statistics;
//! * [`policy`] turns normalized entropy into a local retention rate, a score
//!   threshold and a cap on consecutive pruned tokens;
//! * [`pruner`] runs the keep/prune loop (plus ablations and a static baseline);
//! * [`tuner`] derives a corpus-level retention target and adjusts parameters;
//! * [`analysis`] produces retention, preservation, correlation, layer and
//!   decision-surface reports.

pub mod analysis;
pub mod config;
pub mod error;
pub mod mapping;
pub mod policy;
pub mod pruner;
pub mod trace;
pub mod tuner;

pub use config::{ConfigFile, EngineConfig};
pub use error::{Error, Result};
pub use mapping::{estimate_global_stats, map_entropy, resolve_auto, EntropyStats, MappingMode};
pub use policy::{adaptive_n, dynamic_threshold, refine_n, retention_rate, windowed_entropy, ScoreQuantiles};
pub use pruner::{ablation_prune, prune, static_prune, PruneOutcome, Variant};
pub use trace::{
    classify_token, parse_trace, write_compressed, write_trace, FunctionalCategory, KeepMask, MaskSidecar,
    PositionDiag, TokenRecord, Trace,
};
pub use tuner::{estimate_target_ratio, extract_features, tune, update_params, DatasetFeatures, TuneReport};
