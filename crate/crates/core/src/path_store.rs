//! Deduplicated, indexed collection of country paths for one dataset.
//!
//! Paths are kept per monitor so leave-one-monitor-out queries work; the
//! per-(source, destination) index is derived from the same records.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use thiserror::Error;

use crate::ingest::MonitorTable;
use crate::trace_model::{CountryCode, CountryPath, DatasetKind, MonitorId};

pub const STORE_MAGIC: &str = "expo-store v1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("path {path} from monitor {monitor} does not start in its country {expected}")]
    SourceMismatch {
        monitor: MonitorId,
        expected: CountryCode,
        path: CountryPath,
    },
    #[error("unknown monitor {0}")]
    UnknownMonitor(MonitorId),
    #[error("store format error at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

static NO_PATHS: BTreeSet<CountryPath> = BTreeSet::new();

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathStore {
    dataset: DatasetKind,
    monitors: MonitorTable,
    by_monitor: BTreeMap<MonitorId, BTreeSet<CountryPath>>,
    by_pair: BTreeMap<(CountryCode, CountryCode), BTreeSet<CountryPath>>,
    records: usize,
}

impl PathStore {
    pub fn new(dataset: DatasetKind, monitors: MonitorTable) -> Self {
        Self {
            dataset,
            monitors,
            by_monitor: BTreeMap::new(),
            by_pair: BTreeMap::new(),
            records: 0,
        }
    }

    pub fn dataset(&self) -> DatasetKind {
        self.dataset
    }

    pub fn monitors(&self) -> &MonitorTable {
        &self.monitors
    }

    /// Number of distinct (monitor, path) records.
    pub fn len(&self) -> usize {
        self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }

    /// Adds a monitor after construction. Fails with the already recorded
    /// country on conflict.
    pub fn register_monitor(
        &mut self,
        monitor: MonitorId,
        country: CountryCode,
    ) -> Result<(), CountryCode> {
        self.monitors.insert(monitor, country)
    }

    /// Returns whether the record was new.
    pub fn insert(&mut self, monitor: &MonitorId, path: CountryPath) -> Result<bool, StoreError> {
        let expected = self
            .monitors
            .get(monitor)
            .ok_or_else(|| StoreError::UnknownMonitor(monitor.clone()))?;
        if path.source() != expected {
            return Err(StoreError::SourceMismatch {
                monitor: monitor.clone(),
                expected,
                path,
            });
        }
        let paths = self.by_monitor.entry(monitor.clone()).or_default();
        if paths.contains(&path) {
            return Ok(false);
        }
        paths.insert(path.clone());
        self.by_pair
            .entry((path.source(), path.destination()))
            .or_default()
            .insert(path);
        self.records += 1;
        Ok(true)
    }

    /// All records, ordered by monitor then path.
    pub fn records(&self) -> impl Iterator<Item = (&MonitorId, &CountryPath)> {
        self.by_monitor
            .iter()
            .flat_map(|(m, paths)| paths.iter().map(move |p| (m, p)))
    }

    /// Distinct paths revealed by a single monitor (empty if it has none).
    pub fn paths_of(&self, monitor: &MonitorId) -> &BTreeSet<CountryPath> {
        self.by_monitor.get(monitor).unwrap_or(&NO_PATHS)
    }

    /// Union of the paths revealed by every monitor in `monitors`.
    pub fn revealed<'a, I>(&self, monitors: I) -> Result<BTreeSet<&CountryPath>, StoreError>
    where
        I: IntoIterator<Item = &'a MonitorId>,
    {
        let mut out = BTreeSet::new();
        for m in monitors {
            if !self.monitors.contains(m) {
                return Err(StoreError::UnknownMonitor(m.clone()));
            }
            out.extend(self.paths_of(m));
        }
        Ok(out)
    }

    /// Distinct paths from `x` to `y`, across all monitors.
    pub fn paths_between(&self, x: CountryCode, y: CountryCode) -> &BTreeSet<CountryPath> {
        self.by_pair.get(&(x, y)).unwrap_or(&NO_PATHS)
    }

    /// Every destination reachable from `x` with its path set, sorted by destination.
    pub fn targets_from(
        &self,
        x: CountryCode,
    ) -> impl Iterator<Item = (CountryCode, &BTreeSet<CountryPath>)> {
        let lo = (x, CountryCode::from_index(0).expect("AA"));
        self.by_pair
            .range(lo..)
            .take_while(move |((s, _), _)| *s == x)
            .map(|((_, d), paths)| (*d, paths))
    }

    /// All (source, destination) buckets.
    pub fn pairs(
        &self,
    ) -> impl Iterator<Item = ((CountryCode, CountryCode), &BTreeSet<CountryPath>)> {
        self.by_pair.iter().map(|(k, v)| (*k, v))
    }

    /// Countries that are the source of at least one path.
    pub fn sources(&self) -> BTreeSet<CountryCode> {
        self.by_pair.keys().map(|(s, _)| *s).collect()
    }

    /// Every country that appears as a hop of some stored path.
    pub fn countries(&self) -> BTreeSet<CountryCode> {
        self.by_pair
            .values()
            .flatten()
            .flat_map(|p| p.hops().iter().copied())
            .collect()
    }

    /// Writes the canonical, sorted store file.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{STORE_MAGIC}\tdataset={}", self.dataset)?;
        let mut monitor_lines: Vec<String> = self
            .monitors
            .iter()
            .map(|(m, c)| format!("M\t{m}\t{c}"))
            .collect();
        monitor_lines.sort_unstable();
        let mut path_lines: Vec<String> = self
            .records()
            .map(|(m, p)| format!("P\t{m}\t{p}"))
            .collect();
        path_lines.sort_unstable();
        for line in monitor_lines.iter().chain(&path_lines) {
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let fmt_err = |line: usize, reason: String| StoreError::Format { line, reason };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        let (_, header) = lines
            .next()
            .ok_or_else(|| fmt_err(1, "missing header".into()))?;
        let dataset = header
            .strip_prefix(STORE_MAGIC)
            .and_then(|rest| rest.strip_prefix("\tdataset="))
            .ok_or_else(|| fmt_err(1, format!("bad header {header:?}")))?
            .parse::<DatasetKind>()
            .map_err(|e| fmt_err(1, e.to_string()))?;

        let mut monitors = MonitorTable::new();
        let mut paths: Vec<(usize, MonitorId, CountryPath)> = Vec::new();
        let mut in_paths = false;
        for (n, line) in lines {
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["M", m, c] if !in_paths => {
                    let m = MonitorId::new(*m).map_err(|e| fmt_err(n, e.to_string()))?;
                    let c = CountryCode::new(c).map_err(|e| fmt_err(n, e.to_string()))?;
                    monitors
                        .insert(m.clone(), c)
                        .map_err(|_| fmt_err(n, format!("conflicting country for monitor {m}")))?;
                }
                ["M", ..] => return Err(fmt_err(n, "monitor line after path lines".into())),
                ["P", m, p] => {
                    in_paths = true;
                    let m = MonitorId::new(*m).map_err(|e| fmt_err(n, e.to_string()))?;
                    let p: CountryPath = p.parse().map_err(|e| fmt_err(n, format!("{e}")))?;
                    paths.push((n, m, p));
                }
                _ => return Err(fmt_err(n, format!("unrecognized line {line:?}"))),
            }
        }
        let mut store = PathStore::new(dataset, monitors);
        for (n, m, p) in paths {
            store.insert(&m, p).map_err(|e| fmt_err(n, e.to_string()))?;
        }
        Ok(store)
    }
}
