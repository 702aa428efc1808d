//! Input discovery, trace loading and atomic output.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use gogiskip_core::{parse_trace, Trace};
use rayon::prelude::*;
use serde::Serialize;
use tempfile::NamedTempFile;

/// Input path, directory or pattern that resolves to nothing.
#[derive(Debug)]
pub struct MissingInput(pub String);

impl std::fmt::Display for MissingInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "no input found at {}", self.0)
    }
}

impl std::error::Error for MissingInput {}

/// Some items of a batch failed; successful outputs were kept.
#[derive(Debug)]
pub struct PartialFailure {
    pub failed: usize,
    pub total: usize,
}

impl std::fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} of {} inputs failed, see errors.json", self.failed, self.total)
    }
}

impl std::error::Error for PartialFailure {}

/// A file, every `*.jsonl` in a directory, or a glob pattern; sorted.
pub fn discover(input: &str) -> Result<Vec<PathBuf>> {
    let path = Path::new(input);
    let mut found: Vec<PathBuf> = if path.is_dir() {
        fs::read_dir(path)
            .with_context(|| format!("reading {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "jsonl"))
            .collect()
    } else if path.is_file() {
        vec![path.to_path_buf()]
    } else if input.contains(['*', '?', '[']) {
        glob::glob(input)
            .map_err(|e| anyhow!("bad pattern {input:?}: {e}"))?
            .filter_map(|p| p.ok())
            .filter(|p| p.is_file())
            .collect()
    } else {
        Vec::new()
    };
    if found.is_empty() {
        return Err(MissingInput(input.to_string()).into());
    }
    found.sort();
    let mut stems = BTreeSet::new();
    for p in &found {
        if !stems.insert(stem(p)) {
            return Err(anyhow!("two inputs share the file stem {:?}", stem(p)));
        }
    }
    Ok(found)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn load_trace(path: &Path) -> Result<Trace> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut trace = parse_trace(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?;
    if trace.id.is_empty() {
        trace.id = stem(path);
    }
    Ok(trace)
}

/// Parse every input in parallel, preserving input order.
pub fn load_all(paths: &[PathBuf]) -> Vec<(PathBuf, Result<Trace>)> {
    paths.par_iter().map(|p| (p.clone(), load_trace(p))).collect()
}

/// Load every input or fail on the first error.
pub fn load_all_strict(input: &str) -> Result<Vec<(PathBuf, Trace)>> {
    let paths = discover(input)?;
    load_all(&paths).into_iter().map(|(p, t)| t.map(|t| (p, t))).collect()
}

/// Write through a temporary file in the target directory and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}
