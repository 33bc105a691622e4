//! Stage orchestration over a data directory: ingest, features, score.
//!
//! Raw and feature layers are keyed by dataset only. Likelihoods, gate
//! states and snapshots live under the config hash that produced them, so
//! a parameter change never touches stored features and outputs from two
//! configurations are never mixed in one file.

mod snapshot;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{partition_date, Clock, ClockError};
use crate::fasl::{gate_series, score_day, DailyLikelihood, GateDay, LoadedParameters, ValidationError};
use crate::features::{DailyFeatureVector, FeatureConfig, FeatureEngine};
use crate::identity::{LocalPrefixes, Registry, RegistryError};
use crate::ingest::{
    parse_capture, partition, read_partition, read_summaries, summarize_window, write_partitions,
    write_summaries, IngestError, ParseOptions, WindowSummary,
};

pub use snapshot::{snapshot_at, CriterionStatus, IndicatorSnapshot};
pub use store::{DataDir, DatasetManifest};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error("invalid parameters: {0}")]
    Config(#[from] ValidationError),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("invalid name: {0}")]
    BadName(String),
    #[error("dataset was ingested with {existing}, not {requested}")]
    ManifestMismatch { existing: String, requested: String },
    #[error("corrupt artifact {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub dataset: String,
    pub captures: usize,
    pub records: u64,
    pub rejected: u64,
    pub malformed: u64,
    pub partitions: usize,
    pub dates: Vec<NaiveDate>,
    pub local_addresses: Vec<std::net::IpAddr>,
}

/// Parses captures into window partitions and rebuilds the per-day
/// summaries of every date they touch.
pub fn ingest(
    data: &DataDir,
    manifest: &DatasetManifest,
    captures: &[PathBuf],
) -> Result<IngestReport, PipelineError> {
    let ds = manifest.dataset.as_str();
    let clock = manifest.clock()?;
    match data.manifest(ds) {
        Ok(existing) if existing != *manifest => {
            return Err(PipelineError::ManifestMismatch {
                existing: format!("{} / {} s", existing.timezone, existing.delta_secs),
                requested: format!("{} / {} s", manifest.timezone, manifest.delta_secs),
            })
        }
        Ok(_) => {}
        Err(PipelineError::MissingInput(_)) => data.write_manifest(manifest)?,
        Err(e) => return Err(e),
    }

    let options = ParseOptions::default();
    let mut records = Vec::new();
    let mut malformed = 0;
    for path in captures {
        let file = fs::File::open(path)
            .map_err(|e| PipelineError::MissingInput(format!("{}: {e}", path.display())))?;
        let (mut recs, stats) = parse_capture(std::io::BufReader::new(file), &options)?;
        malformed += stats.malformed;
        records.append(&mut recs);
    }
    let local = crate::identity::observed_local_addresses(
        records.iter().map(|r| (&r.src_addr, &r.dst_addr)),
        &options.local_prefixes,
    );
    let count = records.len() as u64;
    let set = partition(records, &clock, ds);
    let dir = data.processed_dir(ds)?;
    write_partitions(&dir, &set)?;

    let dates: BTreeSet<NaiveDate> = set.files.keys().filter_map(|n| partition_date(n)).collect();
    let registry = Registry::load(data.root())?;
    rebuild_summaries(data, ds, &clock, &registry, &options.local_prefixes, &dates)?;
    Ok(IngestReport {
        dataset: ds.to_string(),
        captures: captures.len(),
        records: count - set.rejected,
        rejected: set.rejected,
        malformed,
        partitions: set.files.len(),
        dates: dates.into_iter().collect(),
        local_addresses: local.into_iter().collect(),
    })
}

fn rebuild_summaries(
    data: &DataDir,
    ds: &str,
    clock: &Clock,
    registry: &Registry,
    local: &LocalPrefixes,
    dates: &BTreeSet<NaiveDate>,
) -> Result<(), PipelineError> {
    let dir = data.processed_dir(ds)?;
    let mut by_date: BTreeMap<NaiveDate, Vec<PathBuf>> = BTreeMap::new();
    for entry in fs::read_dir(&dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if !name.ends_with(".jsonl") {
            continue;
        }
        if let Some(d) = partition_date(&name).filter(|d| dates.contains(d)) {
            by_date.entry(d).or_default().push(dir.join(name));
        }
    }
    for (date, mut files) in by_date {
        files.sort();
        let mut summaries: Vec<WindowSummary> = Vec::new();
        for f in files {
            summaries.extend(summarize_window(&read_partition(&f)?, clock, registry, local));
        }
        summaries.sort_by(|a, b| (a.window_start, &a.user_id).cmp(&(b.window_start, &b.user_id)));
        write_summaries(&data.summaries_path(ds, date)?, &summaries)?;
    }
    Ok(())
}

/// Recomputes summaries for every ingested date, for use after a registry
/// change.
pub fn reattribute(data: &DataDir, ds: &str) -> Result<usize, PipelineError> {
    let clock = data.manifest(ds)?.clock()?;
    let dir = data.processed_dir(ds)?;
    let mut dates = BTreeSet::new();
    if dir.exists() {
        for entry in fs::read_dir(&dir)? {
            if let Some(d) = partition_date(&entry?.file_name().to_string_lossy()) {
                dates.insert(d);
            }
        }
    }
    let registry = Registry::load(data.root())?;
    rebuild_summaries(data, ds, &clock, &registry, &LocalPrefixes::default(), &dates)?;
    Ok(dates.len())
}

fn stored_range(dates: &[NaiveDate]) -> Option<(NaiveDate, NaiveDate)> {
    Some((*dates.first()?, *dates.last()?))
}

/// Computes and stores daily feature vectors for every user seen in the
/// summaries. Summaries up to 31 days before `from` seed the baselines.
pub fn compute_features(
    data: &DataDir,
    ds: &str,
    range: Option<(NaiveDate, NaiveDate)>,
    validity_threshold: f64,
) -> Result<Vec<DailyFeatureVector>, PipelineError> {
    let clock = data.manifest(ds)?.clock()?;
    let stored = data.summary_dates(ds)?;
    let Some((from, to)) = range.or_else(|| stored_range(&stored)) else {
        return Ok(Vec::new());
    };
    let earliest = from - Duration::days(31);
    let mut summaries = Vec::new();
    for d in stored.iter().filter(|d| **d >= earliest && **d <= to) {
        summaries.extend(read_summaries(&data.summaries_path(ds, *d)?)?);
    }
    let engine = FeatureEngine::new(clock, FeatureConfig::default(), validity_threshold);
    let vectors = engine.compute(summaries, from, to);
    for v in &vectors {
        v.write(&data.features_path(ds, &v.user_id, v.date)?)?;
    }
    Ok(vectors)
}

/// Gate state of one criterion on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionGateDay {
    pub criterion: u8,
    #[serde(flatten)]
    pub day: GateDay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserScores {
    pub user_id: String,
    pub likelihoods: Vec<DailyLikelihood>,
    pub gates: Vec<CriterionGateDay>,
    pub snapshot: IndicatorSnapshot,
}

/// Scores one user's feature vectors, which must be date-ordered.
pub fn score_user(user: &str, vectors: &[DailyFeatureVector], params: &LoadedParameters, ds: &str) -> UserScores {
    let p = &params.parameters;
    let mut likelihoods = Vec::new();
    let mut gates = Vec::new();
    for crit in &p.criteria {
        let scored: Vec<DailyLikelihood> = vectors
            .iter()
            .map(|v| score_day(v, crit, p.gate.tau, p.gate.validity_threshold))
            .collect();
        let series: Vec<(NaiveDate, Option<f64>)> = scored.iter().map(|l| (l.date, l.likelihood)).collect();
        gates.extend(gate_series(&series, &p.gate).into_iter().map(|day| CriterionGateDay {
            criterion: crit.criterion_id,
            day,
        }));
        likelihoods.extend(scored);
    }
    likelihoods.sort_by_key(|l| (l.date, l.criterion));
    gates.sort_by_key(|g| (g.day.date, g.criterion));
    let as_of = vectors.last().map(|v| v.date);
    let snapshot = snapshot_at(user, ds, params, &likelihoods, &gates, as_of);
    UserScores {
        user_id: user.to_string(),
        likelihoods,
        gates,
        snapshot,
    }
}

/// Reads stored features and writes likelihoods, gate states and a
/// snapshot per user under the parameters' config hash.
pub fn score(
    data: &DataDir,
    ds: &str,
    params: &LoadedParameters,
    range: Option<(NaiveDate, NaiveDate)>,
) -> Result<Vec<UserScores>, PipelineError> {
    data.manifest(ds)?;
    let hash = params.config_hash.as_str();
    let mut out = Vec::new();
    for user in data.feature_users(ds)? {
        let dates: Vec<NaiveDate> = data
            .feature_dates(ds, &user)?
            .into_iter()
            .filter(|d| range.is_none_or(|(f, t)| *d >= f && *d <= t))
            .collect();
        let mut vectors = Vec::with_capacity(dates.len());
        for d in dates {
            if let Some(v) = data.read_features(ds, &user, d)? {
                vectors.push(v);
            }
        }
        let scores = score_user(&user, &vectors, params, ds);
        store::write_jsonl(&data.likelihoods_path(ds, hash, &user)?, &scores.likelihoods)?;
        store::write_jsonl(&data.gates_path(ds, hash, &user)?, &scores.gates)?;
        store::write_json(&data.snapshot_path(ds, hash, &user)?, &scores.snapshot)?;
        out.push(scores);
    }
    Ok(out)
}

pub fn read_likelihoods(data: &DataDir, ds: &str, hash: &str, user: &str) -> Result<Vec<DailyLikelihood>, PipelineError> {
    store::read_jsonl(&data.likelihoods_path(ds, hash, user)?)
}

pub fn read_gates(data: &DataDir, ds: &str, hash: &str, user: &str) -> Result<Vec<CriterionGateDay>, PipelineError> {
    store::read_jsonl(&data.gates_path(ds, hash, user)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub millis: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub run_id: String,
    pub dataset: String,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub config_hash: String,
    pub stages: Vec<StageReport>,
}

/// Optional ingest, then features and scoring. Rerunning with the same
/// inputs and parameters rewrites identical artifacts; the run record
/// itself carries wall-clock timings and sits outside that guarantee.
pub fn run_pipeline(
    data: &DataDir,
    manifest: &DatasetManifest,
    captures: &[PathBuf],
    range: Option<(NaiveDate, NaiveDate)>,
    params: &LoadedParameters,
) -> Result<PipelineRun, PipelineError> {
    let ds = manifest.dataset.as_str();
    let mut stages = Vec::new();
    let mut timed = |stage: &str, started: Instant, count: u64| {
        stages.push(StageReport {
            stage: stage.to_string(),
            millis: started.elapsed().as_millis() as u64,
            count,
        })
    };
    if !captures.is_empty() {
        let t = Instant::now();
        let report = ingest(data, manifest, captures)?;
        timed("ingest", t, report.records);
    } else {
        data.manifest(ds)?;
    }
    let empty = matches!(range, Some((f, t)) if f > t);
    let range = if empty {
        range
    } else {
        range.or_else(|| stored_range(&data.summary_dates(ds).unwrap_or_default()))
    };

    let t = Instant::now();
    let vectors = if empty {
        Vec::new()
    } else {
        compute_features(data, ds, range, params.parameters.gate.validity_threshold)?
    };
    timed("features", t, vectors.len() as u64);

    let t = Instant::now();
    let scores = if empty { Vec::new() } else { score(data, ds, params, range)? };
    timed("score", t, scores.iter().map(|s| s.likelihoods.len() as u64).sum());

    let (from, to) = match range {
        Some((f, t)) => (Some(f), Some(t)),
        None => (None, None),
    };
    let span = |d: Option<NaiveDate>| d.map_or("none".to_string(), |d| d.format("%Y%m%d").to_string());
    let run = PipelineRun {
        run_id: format!("{}-{}-{}", span(from), span(to), params.config_hash),
        dataset: ds.to_string(),
        from,
        to,
        config_hash: params.config_hash.clone(),
        stages,
    };
    store::write_json(&data.run_path(ds, &run.run_id)?, &run)?;
    Ok(run)
}

/// Every file under the deterministic artifact layers, relative to `root`,
/// paired with its bytes. Run records are excluded.
pub fn artifact_files(root: &Path) -> std::io::Result<BTreeMap<PathBuf, Vec<u8>>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(base, &path, out)?;
            } else {
                let rel = path.strip_prefix(base).expect("under base").to_path_buf();
                out.insert(rel, fs::read(&path)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    for layer in ["processed", "summaries", "features", "likelihoods", "gates", "snapshots"] {
        let dir = root.join(layer);
        if dir.exists() {
            walk(root, &dir, &mut out)?;
        }
    }
    Ok(out)
}
