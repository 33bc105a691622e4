//! User profiles, local-address-to-user mappings and the direction heuristic.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{NaiveTime, Weekday};
use ipnet::IpNet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Micros;

/// Fallback group for traffic that cannot be attributed to a profile.
pub const ALL_OTHER: &str = "ALL_OTHER";

pub const PROFILES_FILE: &str = "profiles.json";
pub const MAPPINGS_FILE: &str = "ip_mappings.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    Upstream,
    Downstream,
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocalPrefixes(Vec<IpNet>);

impl Default for LocalPrefixes {
    /// RFC 1918 private ranges.
    fn default() -> Self {
        LocalPrefixes(
            ["10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16"]
                .iter()
                .map(|p| p.parse().expect("static prefix"))
                .collect(),
        )
    }
}

impl LocalPrefixes {
    pub fn new(prefixes: Vec<IpNet>) -> Result<Self, RegistryError> {
        if prefixes.is_empty() {
            return Err(RegistryError::NoLocalPrefixes);
        }
        Ok(LocalPrefixes(prefixes))
    }

    pub fn contains(&self, addr: &IpAddr) -> bool {
        self.0.iter().any(|net| net.contains(addr))
    }
}

pub fn classify_direction(src: &IpAddr, dst: &IpAddr, local: &LocalPrefixes) -> Direction {
    match (local.contains(src), local.contains(dst)) {
        (true, false) => Direction::Upstream,
        (false, true) => Direction::Downstream,
        (true, true) => Direction::Internal,
        (false, false) => Direction::External,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    #[serde(default)]
    pub display_name: String,
    pub habitual_wake: NaiveTime,
    pub habitual_sleep: NaiveTime,
    /// Kept sorted Monday first, without duplicates.
    #[serde(default)]
    pub workdays: Vec<Weekday>,
    #[serde(default)]
    pub notes: String,
}

/// One address-to-user assignment, active on `[valid_from, valid_to)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IpMapping {
    pub address: IpAddr,
    pub user_id: String,
    pub valid_from: Micros,
    #[serde(default)]
    pub valid_to: Option<Micros>,
}

impl IpMapping {
    pub fn is_active(&self, at: Micros) -> bool {
        at >= self.valid_from && self.valid_to.is_none_or(|end| at < end)
    }

    fn overlaps(&self, other: &IpMapping) -> bool {
        if self.address != other.address {
            return false;
        }
        let self_end = self.valid_to.unwrap_or(Micros::MAX);
        let other_end = other.valid_to.unwrap_or(Micros::MAX);
        self.valid_from < other_end && other.valid_from < self_end
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("profile {0:?} already exists")]
    DuplicateProfile(String),
    #[error("unknown profile {0:?}")]
    UnknownProfile(String),
    #[error("mapping for {address} overlaps an existing active mapping to {existing_user:?}")]
    OverlappingMapping {
        address: IpAddr,
        existing_user: String,
    },
    #[error("invalid mapping for {address}: {reason}")]
    InvalidMapping { address: IpAddr, reason: String },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("local prefix set must not be empty")]
    NoLocalPrefixes,
    #[error("registry document {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfilesDocument {
    version: Micros,
    profiles: Vec<UserProfile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MappingsDocument {
    version: Micros,
    mappings: Vec<IpMapping>,
}

/// Immutable snapshot of profiles and mappings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    profiles: BTreeMap<String, UserProfile>,
    mappings: Vec<IpMapping>,
}

impl Registry {
    pub fn from_parts(
        profiles: Vec<UserProfile>,
        mappings: Vec<IpMapping>,
    ) -> Result<Self, RegistryError> {
        let mut registry = Registry::default();
        for p in profiles {
            registry.create_profile(p)?;
        }
        for m in mappings {
            registry.insert_mapping(m)?;
        }
        Ok(registry)
    }

    /// Resolution is a pure function of `(addr, at, self)`.
    pub fn resolve(&self, addr: &IpAddr, at: Micros) -> &str {
        self.mappings
            .iter()
            .find(|m| m.address == *addr && m.is_active(at))
            .map(|m| m.user_id.as_str())
            .unwrap_or(ALL_OTHER)
    }

    pub fn profile(&self, user_id: &str) -> Option<&UserProfile> {
        self.profiles.get(user_id)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &UserProfile> {
        self.profiles.values()
    }

    pub fn mappings(&self) -> &[IpMapping] {
        &self.mappings
    }

    fn check_profile(p: &UserProfile) -> Result<(), RegistryError> {
        if p.user_id.trim().is_empty() {
            return Err(RegistryError::InvalidProfile("user_id is empty".into()));
        }
        if p.user_id == ALL_OTHER {
            return Err(RegistryError::InvalidProfile(format!(
                "{ALL_OTHER} is reserved"
            )));
        }
        Ok(())
    }

    fn normalize_profile(p: &mut UserProfile) {
        p.workdays.sort_by_key(|d| d.num_days_from_monday());
        p.workdays.dedup();
    }

    pub fn create_profile(&mut self, mut p: UserProfile) -> Result<&UserProfile, RegistryError> {
        Self::check_profile(&p)?;
        Self::normalize_profile(&mut p);
        if self.profiles.contains_key(&p.user_id) {
            return Err(RegistryError::DuplicateProfile(p.user_id));
        }
        let id = p.user_id.clone();
        self.profiles.insert(id.clone(), p);
        Ok(&self.profiles[&id])
    }

    pub fn upsert_profile(&mut self, mut p: UserProfile) -> Result<&UserProfile, RegistryError> {
        Self::check_profile(&p)?;
        Self::normalize_profile(&mut p);
        let id = p.user_id.clone();
        self.profiles.insert(id.clone(), p);
        Ok(&self.profiles[&id])
    }

    fn insert_mapping(&mut self, m: IpMapping) -> Result<(), RegistryError> {
        Self::check_mapping(&m)?;
        if let Some(existing) = self.mappings.iter().find(|e| e.overlaps(&m)) {
            return Err(RegistryError::OverlappingMapping {
                address: m.address,
                existing_user: existing.user_id.clone(),
            });
        }
        self.mappings.push(m);
        self.mappings
            .sort_by_key(|a| (a.address, a.valid_from));
        Ok(())
    }

    fn check_mapping(m: &IpMapping) -> Result<(), RegistryError> {
        let invalid = |reason: &str| RegistryError::InvalidMapping {
            address: m.address,
            reason: reason.to_string(),
        };
        if m.user_id.trim().is_empty() {
            return Err(invalid("user_id is empty"));
        }
        if m.user_id == ALL_OTHER {
            return Err(invalid("ALL_OTHER is reserved"));
        }
        if matches!(m.valid_to, Some(end) if end <= m.valid_from) {
            return Err(invalid("valid_to must be after valid_from"));
        }
        Ok(())
    }

    /// Inserts a mapping, or replaces the one with the same address and
    /// `valid_from` (the way a mapping is closed by setting `valid_to`).
    pub fn upsert_mapping(&mut self, m: IpMapping) -> Result<&IpMapping, RegistryError> {
        let mut candidate = self.clone();
        candidate
            .mappings
            .retain(|e| !(e.address == m.address && e.valid_from == m.valid_from));
        candidate.insert_mapping(m.clone())?;
        *self = candidate;
        Ok(self
            .mappings
            .iter()
            .find(|e| e.address == m.address && e.valid_from == m.valid_from)
            .expect("just inserted"))
    }

    pub fn replace_profiles(&mut self, profiles: Vec<UserProfile>) -> Result<(), RegistryError> {
        let fresh = Registry::from_parts(profiles, Vec::new())?;
        self.profiles = fresh.profiles;
        Ok(())
    }

    pub fn replace_mappings(&mut self, mappings: Vec<IpMapping>) -> Result<(), RegistryError> {
        let fresh = Registry::from_parts(Vec::new(), mappings)?;
        self.mappings = fresh.mappings;
        Ok(())
    }

    /// Loads `profiles.json` and `ip_mappings.json`; missing files mean empty.
    pub fn load(dir: &Path) -> Result<Self, RegistryError> {
        let profiles: Vec<UserProfile> = match read_doc::<ProfilesDocument>(&dir.join(PROFILES_FILE))? {
            Some(doc) => doc.profiles,
            None => Vec::new(),
        };
        let mappings = match read_doc::<MappingsDocument>(&dir.join(MAPPINGS_FILE))? {
            Some(doc) => doc.mappings,
            None => Vec::new(),
        };
        Registry::from_parts(profiles, mappings)
    }

    pub fn save(&self, dir: &Path, version: Micros) -> Result<(), RegistryError> {
        fs::create_dir_all(dir)?;
        let profiles = ProfilesDocument {
            version,
            profiles: self.profiles.values().cloned().collect(),
        };
        let mappings = MappingsDocument {
            version,
            mappings: self.mappings.clone(),
        };
        write_doc(&dir.join(PROFILES_FILE), &profiles)?;
        write_doc(&dir.join(MAPPINGS_FILE), &mappings)?;
        Ok(())
    }
}

fn read_doc<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, RegistryError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|source| RegistryError::Parse {
            path: path.to_path_buf(),
            source,
        })
}

fn write_doc<T: Serialize>(path: &Path, doc: &T) -> Result<(), RegistryError> {
    let mut text = serde_json::to_string_pretty(doc).expect("registry documents serialize");
    text.push('\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text)?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// Single-writer store handing out immutable registry snapshots.
#[derive(Debug)]
pub struct RegistryStore {
    dir: PathBuf,
    current: RwLock<Arc<Registry>>,
}

impl RegistryStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let dir = dir.into();
        let registry = Registry::load(&dir)?;
        Ok(RegistryStore {
            dir,
            current: RwLock::new(Arc::new(registry)),
        })
    }

    pub fn snapshot(&self) -> Arc<Registry> {
        self.current.read().expect("registry lock").clone()
    }

    /// Applies `edit` to a copy and publishes it only if it succeeds and persists.
    pub fn update<F>(&self, version: Micros, edit: F) -> Result<Arc<Registry>, RegistryError>
    where
        F: FnOnce(&mut Registry) -> Result<(), RegistryError>,
    {
        let mut guard = self.current.write().expect("registry lock");
        let mut next = (**guard).clone();
        edit(&mut next)?;
        next.save(&self.dir, version)?;
        let next = Arc::new(next);
        *guard = next.clone();
        Ok(next)
    }
}

/// Passive device inventory: distinct local addresses seen in a batch of records.
pub fn observed_local_addresses<'a, I>(pairs: I, local: &LocalPrefixes) -> BTreeSet<IpAddr>
where
    I: IntoIterator<Item = (&'a IpAddr, &'a IpAddr)>,
{
    let mut seen = BTreeSet::new();
    for (src, dst) in pairs {
        for addr in [src, dst] {
            if local.contains(addr) {
                seen.insert(*addr);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ip(s: &str) -> IpAddr {
        s.parse().unwrap()
    }

    fn profile(id: &str) -> UserProfile {
        UserProfile {
            user_id: id.into(),
            display_name: id.to_uppercase(),
            habitual_wake: NaiveTime::from_hms_opt(7, 0, 0).unwrap(),
            habitual_sleep: NaiveTime::from_hms_opt(23, 0, 0).unwrap(),
            workdays: vec![Weekday::Mon, Weekday::Tue],
            notes: String::new(),
        }
    }

    fn mapping(addr: &str, user: &str, from: Micros, to: Option<Micros>) -> IpMapping {
        IpMapping {
            address: ip(addr),
            user_id: user.into(),
            valid_from: from,
            valid_to: to,
        }
    }

    #[test]
    fn direction_rules() {
        let local = LocalPrefixes::default();
        let d = |a, b| classify_direction(&ip(a), &ip(b), &local);
        assert_eq!(d("192.168.1.5", "8.8.8.8"), Direction::Upstream);
        assert_eq!(d("8.8.8.8", "192.168.1.5"), Direction::Downstream);
        assert_eq!(d("192.168.1.5", "192.168.1.9"), Direction::Internal);
        assert_eq!(d("1.1.1.1", "8.8.8.8"), Direction::External);
        assert_eq!(d("172.20.0.1", "10.1.1.1"), Direction::Internal);
    }

    #[test]
    fn empty_prefix_set_rejected() {
        assert!(matches!(
            LocalPrefixes::new(vec![]),
            Err(RegistryError::NoLocalPrefixes)
        ));
    }

    #[test]
    fn resolve_within_window_and_after_expiry() {
        let reg = Registry::from_parts(
            vec![profile("alice")],
            vec![mapping("192.168.1.10", "alice", 100, Some(200))],
        )
        .unwrap();
        assert_eq!(reg.resolve(&ip("192.168.1.10"), 150), "alice");
        assert_eq!(reg.resolve(&ip("192.168.1.10"), 200), ALL_OTHER);
        assert_eq!(reg.resolve(&ip("192.168.1.10"), 99), ALL_OTHER);
        assert_eq!(reg.resolve(&ip("192.168.1.11"), 150), ALL_OTHER);
    }

    #[test]
    fn overlapping_mappings_rejected_at_load() {
        let err = Registry::from_parts(
            vec![],
            vec![
                mapping("192.168.1.10", "alice", 0, None),
                mapping("192.168.1.10", "bob", 500, Some(900)),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, RegistryError::OverlappingMapping { .. }));
        // Adjacent half-open intervals do not overlap.
        Registry::from_parts(
            vec![],
            vec![
                mapping("192.168.1.10", "alice", 0, Some(500)),
                mapping("192.168.1.10", "bob", 500, None),
            ],
        )
        .unwrap();
    }

    #[test]
    fn create_then_get_and_duplicate() {
        let mut reg = Registry::default();
        reg.create_profile(profile("alice")).unwrap();
        assert_eq!(reg.profile("alice"), Some(&profile("alice")));
        assert!(matches!(
            reg.create_profile(profile("alice")),
            Err(RegistryError::DuplicateProfile(_))
        ));
    }

    #[test]
    fn closing_a_mapping_expires_it() {
        let mut reg = Registry::default();
        reg.upsert_mapping(mapping("10.0.0.2", "bob", 0, None)).unwrap();
        assert_eq!(reg.resolve(&ip("10.0.0.2"), 1_000), "bob");
        reg.upsert_mapping(mapping("10.0.0.2", "bob", 0, Some(1_000)))
            .unwrap();
        assert_eq!(reg.resolve(&ip("10.0.0.2"), 1_000), ALL_OTHER);
        assert_eq!(reg.mappings().len(), 1);
    }

    #[test]
    fn failed_upsert_leaves_registry_untouched() {
        let mut reg = Registry::default();
        reg.upsert_mapping(mapping("10.0.0.2", "bob", 0, None)).unwrap();
        let before = reg.clone();
        assert!(reg
            .upsert_mapping(mapping("10.0.0.2", "carol", 10, None))
            .is_err());
        assert_eq!(reg, before);
    }

    #[test]
    fn store_persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let store = RegistryStore::open(dir.path()).unwrap();
        store
            .update(1, |r| {
                r.create_profile(profile("alice"))?;
                r.upsert_mapping(mapping("192.168.1.10", "alice", 0, None))?;
                Ok(())
            })
            .unwrap();
        let reloaded = Registry::load(dir.path()).unwrap();
        assert_eq!(reloaded, *store.snapshot());
        assert_eq!(reloaded.resolve(&ip("192.168.1.10"), 5), "alice");
    }

    #[test]
    fn inventory_lists_local_addresses_only() {
        let a = ip("192.168.1.5");
        let b = ip("8.8.8.8");
        let c = ip("192.168.1.9");
        let pairs = [(&a, &b), (&b, &c)];
        let seen = observed_local_addresses(pairs, &LocalPrefixes::default());
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![a, c]);
    }
}
