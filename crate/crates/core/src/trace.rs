//! Scored reasoning traces: token records, the JSON-lines trace format,
//! keep masks and functional token categories.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::mapping::EntropyStats;

/// Coarse functional role of a token, used for retention and ANC reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalCategory {
    Numerals,
    Operators,
    Symbols,
    Formatting,
    Connectives,
    General,
}

impl FunctionalCategory {
    pub const ALL: [FunctionalCategory; 6] = [
        FunctionalCategory::Numerals,
        FunctionalCategory::Operators,
        FunctionalCategory::Symbols,
        FunctionalCategory::Formatting,
        FunctionalCategory::Connectives,
        FunctionalCategory::General,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionalCategory::Numerals => "numerals",
            FunctionalCategory::Operators => "operators",
            FunctionalCategory::Symbols => "symbols",
            FunctionalCategory::Formatting => "formatting",
            FunctionalCategory::Connectives => "connectives",
            FunctionalCategory::General => "general",
        }
    }
}

impl fmt::Display for FunctionalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionalCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FunctionalCategory::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::contract(format!("unknown category {s:?}")))
    }
}

const OPERATORS: &[&str] =
    &["+", "-", "\u{2212}", "*", "/", "=", "<", ">", "^", "\u{b7}", "\u{b1}", "\\frac", "\\cdot"];

const CONNECTIVES: &[&str] =
    &["therefore", "so", "since", "then", "thus", "because", "hence", "implies", "next", "also"];

/// Word-boundary and newline markers used by common BPE / sentencepiece vocabularies.
const TOKENIZER_MARKERS: &[char] = &['\u{2581}', '\u{120}', '\u{10a}'];

/// Deterministic rule-table classification of a token's surface form.
///
/// Rules are checked in order: numeric literal, operator set, LaTeX command or
/// math glyph, whitespace/markup, connective lexicon, and finally `General`.
pub fn classify_token(token_text: &str) -> FunctionalCategory {
    let surface = token_text.trim_matches(|c: char| c.is_whitespace() || TOKENIZER_MARKERS.contains(&c));
    if surface.is_empty() {
        return FunctionalCategory::Formatting;
    }
    if is_numeric_literal(surface) {
        return FunctionalCategory::Numerals;
    }
    if OPERATORS.contains(&surface) {
        return FunctionalCategory::Operators;
    }
    if is_math_symbol(surface) {
        return FunctionalCategory::Symbols;
    }
    if is_markup(surface) {
        return FunctionalCategory::Formatting;
    }
    let word = surface.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase();
    if CONNECTIVES.contains(&word.as_str()) {
        return FunctionalCategory::Connectives;
    }
    FunctionalCategory::General
}

fn is_numeric_literal(s: &str) -> bool {
    let body = s.strip_prefix(['-', '+', '\u{2212}']).unwrap_or(s);
    body.starts_with(|c: char| c.is_ascii_digit() || c == '.')
        && body.chars().any(|c| c.is_ascii_digit())
        && body.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',')
}

fn is_math_glyph(c: char) -> bool {
    matches!(c,
        '\u{370}'..='\u{3ff}'       // Greek
        | '\u{2070}'..='\u{209f}'   // super/subscripts
        | '\u{2100}'..='\u{214f}'   // letterlike
        | '\u{2190}'..='\u{21ff}'   // arrows
        | '\u{2200}'..='\u{22ff}'   // mathematical operators
        | '\u{27c0}'..='\u{27ef}'
        | '\u{2a00}'..='\u{2aff}'
        | '\u{d7}' | '\u{f7}' | '\u{b0}'
        | '(' | ')' | '[' | ']' | '{' | '}' | '|' | '%')
}

fn is_math_symbol(s: &str) -> bool {
    if let Some(cmd) = s.strip_prefix('\\') {
        return !cmd.is_empty() && cmd.chars().all(|c| c.is_ascii_alphabetic());
    }
    s.chars().all(is_math_glyph)
}

fn is_markup(s: &str) -> bool {
    s.chars().all(|c| {
        c.is_whitespace()
            || TOKENIZER_MARKERS.contains(&c)
            || matches!(
                c,
                '#' | '*' | '_' | '`' | '~' | '>' | '$' | '&' | '-' | '\\' | '\u{2022}' | '(' | ')' | '[' | ']'
            )
    })
}

/// One chain-of-thought token with its importance score and entropy.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenRecord {
    pub index: usize,
    pub token_text: String,
    pub token_id: i64,
    /// Goal-gradient importance (L1 gradient norm), finite and non-negative.
    pub gogi: f64,
    /// Predictive entropy in nats, finite and non-negative.
    pub entropy: f64,
    pub category: FunctionalCategory,
    pub valid: bool,
}

impl TokenRecord {
    pub fn new(index: usize, token_text: impl Into<String>, token_id: i64, gogi: f64, entropy: f64) -> Self {
        let token_text = token_text.into();
        let category = classify_token(&token_text);
        TokenRecord { index, token_text, token_id, gogi, entropy, category, valid: true }
    }

    pub fn is_space(&self) -> bool {
        self.token_text.chars().all(char::is_whitespace)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub id: String,
    pub problem: Option<String>,
    pub answer: Option<String>,
    pub tokens: Vec<TokenRecord>,
    /// Per-position, per-layer gradient L1 norms: `layer_grads[t][l]`.
    pub layer_grads: Option<Vec<Vec<f64>>>,
    /// Global entropy statistics carried on the meta line, if any.
    pub stats: Option<EntropyStats>,
}

impl Trace {
    /// Build a trace from bare scores; token text is a placeholder word.
    pub fn from_scores(id: impl Into<String>, gogi: &[f64], entropy: &[f64]) -> Result<Trace> {
        if gogi.len() != entropy.len() {
            return Err(Error::contract("gogi and entropy lengths differ"));
        }
        let tokens = gogi
            .iter()
            .zip(entropy)
            .enumerate()
            .map(|(t, (&g, &h))| TokenRecord::new(t, format!("w{t}"), t as i64, g, h))
            .collect();
        let trace = Trace { id: id.into(), tokens, ..Trace::default() };
        trace.validate()?;
        Ok(trace)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn entropies(&self) -> Vec<f64> {
        self.tokens.iter().map(|t| t.entropy).collect()
    }

    pub fn layer_count(&self) -> Option<usize> {
        self.layer_grads.as_ref().and_then(|g| g.first().map(Vec::len))
    }

    /// Check every record-level and trace-level invariant.
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::EmptyTrace);
        }
        for (t, tok) in self.tokens.iter().enumerate() {
            let line = t + 1;
            if tok.index != t {
                return Err(Error::Validation { line, message: format!("expected index {t}, found {}", tok.index) });
            }
            check_score("gogi", tok.gogi, line)?;
            check_score("entropy", tok.entropy, line)?;
        }
        if let Some(grads) = &self.layer_grads {
            if grads.len() != self.tokens.len() {
                return Err(Error::contract("layer_grads rows must match token count"));
            }
            let layers = grads.first().map_or(0, Vec::len);
            for (t, row) in grads.iter().enumerate() {
                if row.len() != layers {
                    return Err(Error::Validation {
                        line: t + 1,
                        message: format!("expected {layers} layer_grads, found {}", row.len()),
                    });
                }
                for &g in row {
                    check_score("layer_grads", g, t + 1)?;
                }
            }
        }
        Ok(())
    }
}

fn check_score(field: &str, v: f64, line: usize) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Validation { line, message: format!("{field} is not finite") });
    }
    if v < 0.0 {
        return Err(Error::Validation { line, message: format!("{field} is negative ({v})") });
    }
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct MetaLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    problem: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h_median: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layer_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_len: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TokenLine {
    index: usize,
    token_text: String,
    token_id: i64,
    gogi: f64,
    entropy: f64,
    #[serde(default = "default_true")]
    valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<FunctionalCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layer_grads: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orig_index: Option<usize>,
}

fn default_true() -> bool {
    true
}

/// Replace bare `NaN` / `Infinity` literals (as written by Python's `json`)
/// outside of strings, so the line can be decoded and reported as a
/// validation failure rather than a syntax error.
fn mask_non_finite(line: &str) -> Option<String> {
    let mut out = String::with_capacity(line.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut replaced = false;
    let mut rest = line;
    while let Some(c) = rest.chars().next() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
        } else if c == '"' {
            in_string = true;
        } else {
            let lit = ["-Infinity", "Infinity", "NaN"].into_iter().find(|l| rest.starts_with(l));
            if let Some(lit) = lit {
                out.push_str("null");
                rest = &rest[lit.len()..];
                replaced = true;
                continue;
            }
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    replaced.then_some(out)
}

/// Parse a JSON-lines trace: an optional leading `{"meta": ...}` line followed
/// by one token object per line. Blank lines are skipped and unknown fields ignored.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Trace> {
    let mut trace = Trace::default();
    let mut meta_seen = false;
    let mut grads: Vec<Vec<f64>> = Vec::new();
    let mut any_grads = false;
    let mut layer_count: Option<usize> = None;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(source) => {
                if mask_non_finite(&line).is_some_and(|l| serde_json::from_str::<Value>(&l).is_ok()) {
                    return Err(Error::Validation { line: line_no, message: "non-finite number".into() });
                }
                return Err(Error::Parse { line: line_no, source });
            }
        };
        if let Some(meta) = value.get("meta") {
            if meta_seen || !trace.tokens.is_empty() {
                return Err(Error::Validation { line: line_no, message: "meta line must be the first line".into() });
            }
            meta_seen = true;
            let meta: MetaLine =
                serde_json::from_value(meta.clone()).map_err(|source| Error::Parse { line: line_no, source })?;
            trace.id = meta.id.unwrap_or_default();
            trace.problem = meta.problem;
            trace.answer = meta.answer;
            layer_count = meta.layer_count;
            trace.stats = match (meta.h_median, meta.h_std) {
                (Some(h_median), Some(h_std)) => Some(
                    EntropyStats::new(h_median, h_std)
                        .map_err(|e| Error::Validation { line: line_no, message: e.to_string() })?,
                ),
                _ => None,
            };
            continue;
        }
        let tok: TokenLine = serde_json::from_value(value).map_err(|source| Error::Parse { line: line_no, source })?;
        let t = trace.tokens.len();
        if tok.index != t {
            return Err(Error::Validation {
                line: line_no,
                message: format!("non-contiguous index: expected {t}, found {}", tok.index),
            });
        }
        check_score("gogi", tok.gogi, line_no)?;
        check_score("entropy", tok.entropy, line_no)?;
        match tok.layer_grads {
            Some(row) => {
                if t > 0 && !any_grads {
                    return Err(Error::Validation {
                        line: line_no,
                        message: "layer_grads present on some tokens but not others".into(),
                    });
                }
                let expected = layer_count.or(grads.first().map(Vec::len)).unwrap_or(row.len());
                if row.len() != expected {
                    return Err(Error::Validation {
                        line: line_no,
                        message: format!("expected {expected} layer_grads, found {}", row.len()),
                    });
                }
                for &g in &row {
                    check_score("layer_grads", g, line_no)?;
                }
                any_grads = true;
                grads.push(row);
            }
            None if any_grads => {
                return Err(Error::Validation { line: line_no, message: "layer_grads missing".into() });
            }
            None => {}
        }
        let category = tok.category.unwrap_or_else(|| classify_token(&tok.token_text));
        trace.tokens.push(TokenRecord {
            index: tok.index,
            token_text: tok.token_text,
            token_id: tok.token_id,
            gogi: tok.gogi,
            entropy: tok.entropy,
            category,
            valid: tok.valid,
        });
    }
    if trace.tokens.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if any_grads {
        trace.layer_grads = Some(grads);
    }
    Ok(trace)
}

/// Per-position diagnostics recorded by the pruning policy for valid tokens.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionDiag {
    pub h_hat: f64,
    pub gamma: f64,
    pub tau: f64,
    pub hbar_hat: f64,
    /// Effective consecutive-prune cap after refinements.
    pub n: usize,
    /// Weighted score fell below the threshold (before ANC / override).
    pub below_tau: bool,
    pub override_fired: bool,
}

/// Keep/prune decisions plus the consecutive-prune counter after each position.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KeepMask {
    pub keep: Vec<bool>,
    pub consec: Vec<usize>,
    /// `None` for positions outside the valid set.
    pub per_pos: Vec<Option<PositionDiag>>,
}

impl KeepMask {
    pub fn all_keep(len: usize) -> Self {
        KeepMask { keep: vec![true; len], consec: vec![0; len], per_pos: vec![None; len] }
    }

    /// Mask from plain decisions; counters are derived.
    pub fn from_keep(keep: Vec<bool>) -> Self {
        let mut c = 0;
        let consec = keep
            .iter()
            .map(|&k| {
                c = if k { 0 } else { c + 1 };
                c
            })
            .collect();
        let per_pos = vec![None; keep.len()];
        KeepMask { keep, consec, per_pos }
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

fn write_json_line<W: Write, T: Serialize>(sink: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *sink, value).map_err(|e| Error::Io(e.into()))?;
    sink.write_all(b"\n")?;
    Ok(())
}

fn write_tokens<W: Write>(trace: &Trace, mask: Option<&KeepMask>, sink: &mut W) -> Result<usize> {
    let meta = MetaLine {
        id: Some(trace.id.clone()),
        problem: trace.problem.clone(),
        answer: trace.answer.clone(),
        h_median: trace.stats.map(|s| s.h_median),
        h_std: trace.stats.map(|s| s.h_std),
        layer_count: trace.layer_count(),
        source_len: mask.map(|_| trace.len()),
    };
    write_json_line(sink, &serde_json::json!({ "meta": meta }))?;
    let mut written = 0;
    for (t, tok) in trace.tokens.iter().enumerate() {
        if mask.is_some_and(|m| !m.keep[t]) {
            continue;
        }
        let line = TokenLine {
            index: written,
            token_text: tok.token_text.clone(),
            token_id: tok.token_id,
            gogi: tok.gogi,
            entropy: tok.entropy,
            valid: tok.valid,
            category: Some(tok.category),
            layer_grads: trace.layer_grads.as_ref().map(|g| g[t].clone()),
            orig_index: mask.map(|_| t),
        };
        write_json_line(sink, &line)?;
        written += 1;
    }
    sink.flush()?;
    Ok(written)
}

/// Serialize a trace in the JSON-lines trace format.
pub fn write_trace<W: Write>(trace: &Trace, sink: &mut W) -> Result<usize> {
    write_tokens(trace, None, sink)
}

/// Emit the kept tokens in original order as a re-parseable trace. Token
/// lines are renumbered contiguously and carry `orig_index`. Returns the
/// number of tokens written.
pub fn write_compressed<W: Write>(trace: &Trace, mask: &KeepMask, sink: &mut W) -> Result<usize> {
    if mask.len() != trace.len() {
        return Err(Error::contract(format!("mask length {} does not match trace length {}", mask.len(), trace.len())));
    }
    write_tokens(trace, Some(mask), sink)
}

/// Diagnostics sidecar written next to every compressed trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub id: String,
    pub total: usize,
    pub kept: usize,
    pub mask: KeepMask,
    #[serde(default)]
    pub extra: BTreeMap<String, Value>,
}

impl MaskSidecar {
    pub fn new(trace: &Trace, mask: &KeepMask) -> Self {
        MaskSidecar {
            id: trace.id.clone(),
            total: trace.len(),
            kept: mask.kept(),
            mask: mask.clone(),
            extra: BTreeMap::new(),
        }
    }

    pub fn write<W: Write>(&self, sink: &mut W) -> Result<()> {
        serde_json::to_writer_pretty(&mut *sink, self).map_err(|e| Error::Io(e.into()))?;
        sink.write_all(b"\n")?;
        sink.flush()?;
        Ok(())
    }

    pub fn read<R: std::io::Read>(reader: R) -> Result<Self> {
        serde_json::from_reader(reader).map_err(|source| Error::Parse { line: 0, source })
    }
}
