//! Plain-file layout of a data directory.
//!
//! ```text
//! <root>/
//!   profiles.json, ip_mappings.json
//!   config/parameters.json
//!   datasets/<ds>.json
//!   processed/<ds>/<ds>__YYYYMMDD_HHMM.jsonl
//!   summaries/<ds>/YYYY-MM-DD.jsonl
//!   features/<ds>/<user>/YYYY-MM-DD.json
//!   likelihoods/<ds>/<hash>/<user>.jsonl
//!   gates/<ds>/<hash>/<user>.jsonl
//!   snapshots/<ds>/<hash>/<user>.json
//!   runs/<ds>/<run_id>.json
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::clock::{Clock, DEFAULT_DELTA_SECS};
use crate::fasl::params::PARAMETERS_FILE;
use crate::fasl::{load_parameters, shipped, LoadedParameters, ParameterSet};
use crate::features::DailyFeatureVector;

/// Clock settings fixed when a dataset is first ingested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset: String,
    pub timezone: String,
    pub delta_secs: u32,
}

impl DatasetManifest {
    pub fn clock(&self) -> Result<Clock, PipelineError> {
        Ok(Clock::new(Clock::parse_tz(&self.timezone)?, self.delta_secs)?)
    }
}

impl Default for DatasetManifest {
    fn default() -> Self {
        DatasetManifest {
            dataset: String::new(),
            timezone: "UTC".into(),
            delta_secs: DEFAULT_DELTA_SECS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

fn check_component(kind: &str, name: &str) -> Result<(), PipelineError> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(PipelineError::BadName(format!("{kind} {name:?}")))
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_vec_pretty(value).expect("artifacts serialize");
    text.push(b'\n');
    write_atomic(path, &text)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).expect("artifacts serialize");
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Corrupt {
                path: path.to_path_buf(),
                detail: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

fn list_dir(dir: &Path) -> Result<Vec<String>, PipelineError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut names = Vec::new();
    for e in entries {
        let name = e?.file_name().to_string_lossy().into_owned();
        if !name.ends_with(".tmp") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config").join(PARAMETERS_FILE)
    }

    pub fn manifest_path(&self, ds: &str) -> Result<PathBuf, PipelineError> {
        check_component("dataset", ds)?;
        Ok(self.root.join("datasets").join(format!("{ds}.json")))
    }

    pub fn processed_dir(&self, ds: &str) -> Result<PathBuf, PipelineError> {
        check_component("dataset", ds)?;
        Ok(self.root.join("processed").join(ds))
    }

    pub fn summaries_path(&self, ds: &str, date: NaiveDate) -> Result<PathBuf, PipelineError> {
        check_component("dataset", ds)?;
        Ok(self.root.join("summaries").join(ds).join(format!("{date}.jsonl")))
    }

    pub fn features_path(&self, ds: &str, user: &str, date: NaiveDate) -> Result<PathBuf, PipelineError> {
        check_component("dataset", ds)?;
        check_component("user", user)?;
        Ok(self.root.join("features").join(ds).join(user).join(format!("{date}.json")))
    }

    fn derived(&self, layer: &str, ds: &str, hash: &str, user: &str, ext: &str) -> Result<PathBuf, PipelineError> {
        check_component("dataset", ds)?;
        check_component("config hash", hash)?;
        check_component("user", user)?;
        Ok(self.root.join(layer).join(ds).join(hash).join(format!("{user}.{ext}")))
    }

    pub fn likelihoods_path(&self, ds: &str, hash: &str, user: &str) -> Result<PathBuf, PipelineError> {
        self.derived("likelihoods", ds, hash, user, "jsonl")
    }

    pub fn gates_path(&self, ds: &str, hash: &str, user: &str) -> Result<PathBuf, PipelineError> {
        self.derived("gates", ds, hash, user, "jsonl")
    }

    pub fn snapshot_path(&self, ds: &str, hash: &str, user: &str) -> Result<PathBuf, PipelineError> {
        self.derived("snapshots", ds, hash, user, "json")
    }

    pub fn run_path(&self, ds: &str, run_id: &str) -> Result<PathBuf, PipelineError> {
        check_component("dataset", ds)?;
        check_component("run id", run_id)?;
        Ok(self.root.join("runs").join(ds).join(format!("{run_id}.json")))
    }

    pub fn datasets(&self) -> Result<Vec<String>, PipelineError> {
        Ok(list_dir(&self.root.join("datasets"))?
            .into_iter()
            .filter_map(|n| n.strip_suffix(".json").map(str::to_string))
            .collect())
    }

    pub fn manifest(&self, ds: &str) -> Result<DatasetManifest, PipelineError> {
        let path = self.manifest_path(ds)?;
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| PipelineError::Corrupt {
                path,
                detail: e.to_string(),
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                Err(PipelineError::MissingInput(format!("dataset {ds:?} has not been ingested")))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn write_manifest(&self, m: &DatasetManifest) -> Result<(), PipelineError> {
        Ok(write_json(&self.manifest_path(&m.dataset)?, m)?)
    }

    /// The active parameter set: `config/parameters.json` if present,
    /// otherwise the shipped defaults.
    pub fn parameters(&self) -> Result<LoadedParameters, PipelineError> {
        match fs::read_to_string(self.config_path()) {
            Ok(text) => Ok(load_parameters(&text)?),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(shipped()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save_parameters(&self, set: &ParameterSet) -> Result<(), PipelineError> {
        Ok(write_json(&self.config_path(), set)?)
    }

    /// Dates with a stored summary file, ascending.
    pub fn summary_dates(&self, ds: &str) -> Result<Vec<NaiveDate>, PipelineError> {
        check_component("dataset", ds)?;
        Ok(list_dir(&self.root.join("summaries").join(ds))?
            .iter()
            .filter_map(|n| n.strip_suffix(".jsonl"))
            .filter_map(|d| d.parse().ok())
            .collect())
    }

    pub fn feature_users(&self, ds: &str) -> Result<Vec<String>, PipelineError> {
        check_component("dataset", ds)?;
        list_dir(&self.root.join("features").join(ds))
    }

    pub fn feature_dates(&self, ds: &str, user: &str) -> Result<Vec<NaiveDate>, PipelineError> {
        check_component("dataset", ds)?;
        check_component("user", user)?;
        Ok(list_dir(&self.root.join("features").join(ds).join(user))?
            .iter()
            .filter_map(|n| n.strip_suffix(".json"))
            .filter_map(|d| d.parse().ok())
            .collect())
    }

    pub fn read_features(&self, ds: &str, user: &str, date: NaiveDate) -> Result<Option<DailyFeatureVector>, PipelineError> {
        let path = self.features_path(ds, user, date)?;
        match DailyFeatureVector::read(&path) {
            Ok(v) => Ok(Some(v)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) if e.kind() == io::ErrorKind::InvalidData => Err(PipelineError::Corrupt {
                path,
                detail: e.to_string(),
            }),
            Err(e) => Err(e.into()),
        }
    }

    /// Users with derived outputs under `hash`.
    pub fn scored_users(&self, ds: &str, hash: &str) -> Result<Vec<String>, PipelineError> {
        check_component("dataset", ds)?;
        check_component("config hash", hash)?;
        Ok(list_dir(&self.root.join("likelihoods").join(ds).join(hash))?
            .iter()
            .filter_map(|n| n.strip_suffix(".jsonl").map(str::to_string))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_path_escapes() {
        let d = DataDir::new("/tmp/x");
        assert!(d.processed_dir("../etc").is_err());
        assert!(d.features_path("ds", "a/b", NaiveDate::MIN).is_err());
        assert!(d.processed_dir("home-1").is_ok());
    }

    #[test]
    fn missing_config_falls_back_to_shipped() {
        let tmp = tempfile::tempdir().unwrap();
        let d = DataDir::new(tmp.path());
        assert_eq!(d.parameters().unwrap().config_hash, shipped().config_hash);
    }
}
