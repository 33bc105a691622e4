use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{IngestError, PacketRecord};
use crate::clock::{Clock, Micros};

/// 1990-01-01T00:00:00Z
pub const MIN_TIMESTAMP: Micros = 631_152_000_000_000;
/// 2100-01-01T00:00:00Z (exclusive)
pub const MAX_TIMESTAMP: Micros = 4_102_444_800_000_000;

/// Records grouped by partition name, each group sorted by timestamp.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct PartitionSet {
    pub files: BTreeMap<String, Vec<PacketRecord>>,
    pub rejected: u64,
}

impl PartitionSet {
    pub fn record_count(&self) -> usize {
        self.files.values().map(Vec::len).sum()
    }
}

/// Assigns every record to exactly one half-open window `[start, start + Δ)`.
pub fn partition<I>(records: I, clock: &Clock, dataset: &str) -> PartitionSet
where
    I: IntoIterator<Item = PacketRecord>,
{
    let mut set = PartitionSet::default();
    for record in records {
        if record.timestamp < MIN_TIMESTAMP || record.timestamp >= MAX_TIMESTAMP {
            set.rejected += 1;
            continue;
        }
        let name = clock.partition_name(dataset, record.timestamp);
        set.files.entry(name).or_default().push(record);
    }
    for records in set.files.values_mut() {
        // Stable: ties keep capture order.
        records.sort_by_key(|r| r.timestamp);
    }
    set
}

pub fn write_partitions(dir: &Path, set: &PartitionSet) -> Result<Vec<PathBuf>, IngestError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(set.files.len());
    for (name, records) in &set.files {
        let path = dir.join(format!("{name}.jsonl"));
        let mut out = Vec::new();
        for r in records {
            serde_json::to_writer(&mut out, r).expect("records serialize");
            out.push(b'\n');
        }
        let tmp = path.with_extension("jsonl.tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&out)?;
        f.sync_all()?;
        fs::rename(&tmp, &path)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_partition(path: &Path) -> Result<Vec<PacketRecord>, IngestError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| IngestError::BadRecord {
            file: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}
