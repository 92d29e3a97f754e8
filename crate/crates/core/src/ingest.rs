//! Line-oriented parsers for trace, BGP and monitor files, plus dedup.
//!
//! Formats (UTF-8, one record per line, `#` starts a comment line, tokens
//! never contain tabs):
//!
//! * traces:   `monitor_id TAB hop,hop,...` where a hop is an IPv4 address or `*`
//! * bgp:      `monitor_id TAB prefix TAB asn asn ...`
//! * monitors: `monitor_id TAB country_code`
//! * remap:    `country_code TAB country_code`

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::hash::Hash;
use std::net::Ipv4Addr;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::trace_model::{CountryCode, CountryPath, CountryRemap, MonitorId};

/// Why a single line was rejected.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LineError {
    #[error("{0}")]
    Malformed(String),
    #[error("AS-set tokens are not supported")]
    AsSetUnsupported,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: LineError },
    #[error("line {line}: monitor {monitor} assigned to both {first} and {second}")]
    ConflictingMonitor {
        line: usize,
        monitor: MonitorId,
        first: CountryCode,
        second: CountryCode,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What to do with a malformed line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    /// Drop the line and count it.
    #[default]
    Skip,
    /// Fail on the first malformed line.
    Abort,
}

impl FromStr for ErrorPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "skip" => Ok(ErrorPolicy::Skip),
            "abort" => Ok(ErrorPolicy::Abort),
            other => Err(format!(
                "unknown error policy {other:?}: expected skip or abort"
            )),
        }
    }
}

/// One hop token of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hop {
    Addr(Ipv4Addr),
    /// The `*` marker for a hop that did not answer.
    Unresolved,
}

impl fmt::Display for Hop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hop::Addr(a) => write!(f, "{a}"),
            Hop::Unresolved => f.write_str("*"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub monitor: MonitorId,
    pub hops: Vec<Hop>,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t", self.monitor)?;
        for (i, hop) in self.hops.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{hop}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsPathRecord {
    pub monitor: MonitorId,
    /// Destination prefix, kept for provenance only.
    pub prefix: String,
    /// AS numbers with prepending already collapsed.
    pub asns: Vec<u32>,
}

impl fmt::Display for AsPathRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t", self.monitor, self.prefix)?;
        for (i, asn) in self.asns.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{asn}")?;
        }
        Ok(())
    }
}

fn malformed(reason: impl Into<String>) -> LineError {
    LineError::Malformed(reason.into())
}

fn parse_monitor(token: &str) -> Result<MonitorId, LineError> {
    MonitorId::new(token).map_err(|e| malformed(e.to_string()))
}

pub fn parse_trace_line(line: &str) -> Result<TraceRecord, LineError> {
    let (monitor, hops) = line
        .split_once('\t')
        .ok_or_else(|| malformed("expected monitor_id TAB hops"))?;
    let monitor = parse_monitor(monitor)?;
    if hops.is_empty() {
        return Err(malformed("empty hop list"));
    }
    if hops.contains('\t') {
        return Err(malformed("unexpected extra field"));
    }
    let hops = hops
        .split(',')
        .map(|tok| match tok {
            "*" => Ok(Hop::Unresolved),
            _ => tok
                .parse::<Ipv4Addr>()
                .map(Hop::Addr)
                .map_err(|_| malformed(format!("invalid hop {tok:?}"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TraceRecord { monitor, hops })
}

/// Parses an ASN, accepting an optional `AS` prefix. Range is 1..=2^32-1.
pub fn parse_asn(token: &str) -> Result<u32, LineError> {
    let digits = token
        .strip_prefix("AS")
        .or_else(|| token.strip_prefix("as"))
        .unwrap_or(token);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(format!("invalid ASN {token:?}")));
    }
    match digits.parse::<u32>() {
        Ok(0) | Err(_) => Err(malformed(format!("ASN out of range {token:?}"))),
        Ok(asn) => Ok(asn),
    }
}

pub fn parse_bgp_line(line: &str) -> Result<AsPathRecord, LineError> {
    let mut fields = line.split('\t');
    let (Some(monitor), Some(prefix), Some(path), None) =
        (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(malformed("expected monitor_id TAB prefix TAB as_path"));
    };
    let monitor = parse_monitor(monitor)?;
    if prefix.is_empty() || prefix.contains(' ') {
        return Err(malformed(format!("invalid prefix {prefix:?}")));
    }
    let mut asns: Vec<u32> = Vec::new();
    for tok in path.split(' ') {
        if tok.contains('{') || tok.contains('}') {
            return Err(LineError::AsSetUnsupported);
        }
        // Plain ASNs only on the path; the `AS` prefix is a registry-file affordance.
        if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed(format!("invalid ASN {tok:?}")));
        }
        let asn = parse_asn(tok)?;
        if asns.last() != Some(&asn) {
            asns.push(asn);
        }
    }
    Ok(AsPathRecord {
        monitor,
        prefix: prefix.to_string(),
        asns,
    })
}

fn parse_two_fields(line: &str) -> Result<(&str, &str), LineError> {
    let mut fields = line.split('\t');
    match (fields.next(), fields.next(), fields.next()) {
        (Some(a), Some(b), None) => Ok((a, b)),
        _ => Err(malformed("expected exactly two TAB-separated fields")),
    }
}

fn parse_country(token: &str) -> Result<CountryCode, LineError> {
    CountryCode::new(token).map_err(|e| malformed(e.to_string()))
}

pub fn parse_monitor_line(line: &str) -> Result<(MonitorId, CountryCode), LineError> {
    let (m, c) = parse_two_fields(line)?;
    Ok((parse_monitor(m)?, parse_country(c)?))
}

pub fn parse_remap_line(line: &str) -> Result<(CountryCode, CountryCode), LineError> {
    let (from, to) = parse_two_fields(line)?;
    Ok((parse_country(from)?, parse_country(to)?))
}

pub(crate) fn is_skippable(line: &str) -> bool {
    line.is_empty() || line.starts_with('#')
}

/// Per-file parse counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub lines: usize,
    pub parsed: usize,
    pub malformed: usize,
    /// First few rejections, as `line N: reason`.
    pub samples: Vec<String>,
}

pub(crate) const MAX_SAMPLES: usize = 10;

impl ParseStats {
    pub fn merge(&mut self, other: &ParseStats) {
        self.lines += other.lines;
        self.parsed += other.parsed;
        self.malformed += other.malformed;
        for s in &other.samples {
            if self.samples.len() < MAX_SAMPLES {
                self.samples.push(s.clone());
            }
        }
    }
}

/// Parses every record line of `text` in parallel, keeping file order.
///
/// Comment and blank lines are not records. Line numbers are 1-based.
pub fn parse_lines<T, F>(
    text: &str,
    parse: F,
    policy: ErrorPolicy,
) -> Result<(Vec<T>, ParseStats), IngestError>
where
    T: Send,
    F: Fn(&str) -> Result<T, LineError> + Sync,
{
    let (numbered, stats) = parse_numbered_lines(text, parse, policy)?;
    Ok((numbered.into_iter().map(|(_, rec)| rec).collect(), stats))
}

/// Like [`parse_lines`], but each record carries its line number.
pub fn parse_numbered_lines<T, F>(
    text: &str,
    parse: F,
    policy: ErrorPolicy,
) -> Result<(Vec<(usize, T)>, ParseStats), IngestError>
where
    T: Send,
    F: Fn(&str) -> Result<T, LineError> + Sync,
{
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !is_skippable(l))
        .collect();
    let results: Vec<(usize, Result<T, LineError>)> =
        lines.par_iter().map(|&(n, l)| (n, parse(l))).collect();

    let mut stats = ParseStats {
        lines: results.len(),
        ..ParseStats::default()
    };
    let mut records = Vec::with_capacity(results.len());
    for (line, result) in results {
        match result {
            Ok(rec) => {
                stats.parsed += 1;
                records.push((line, rec));
            }
            Err(reason) => match policy {
                ErrorPolicy::Abort => return Err(IngestError::Parse { line, reason }),
                ErrorPolicy::Skip => {
                    stats.malformed += 1;
                    if stats.samples.len() < MAX_SAMPLES {
                        stats.samples.push(format!("line {line}: {reason}"));
                    }
                }
            },
        }
    }
    Ok((records, stats))
}

/// Monitor to country assignment; each monitor maps to exactly one country.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MonitorTable {
    map: BTreeMap<MonitorId, CountryCode>,
}

impl MonitorTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an assignment. Re-adding the same pair is a no-op; a different
    /// country for a known monitor is rejected and returns the existing one.
    pub fn insert(&mut self, monitor: MonitorId, country: CountryCode) -> Result<(), CountryCode> {
        match self.map.get(&monitor) {
            Some(&existing) if existing != country => Err(existing),
            Some(_) => Ok(()),
            None => {
                self.map.insert(monitor, country);
                Ok(())
            }
        }
    }

    pub fn get(&self, monitor: &MonitorId) -> Option<CountryCode> {
        self.map.get(monitor).copied()
    }

    pub fn contains(&self, monitor: &MonitorId) -> bool {
        self.map.contains_key(monitor)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Sorted by monitor id.
    pub fn iter(&self) -> impl Iterator<Item = (&MonitorId, CountryCode)> {
        self.map.iter().map(|(m, c)| (m, *c))
    }

    /// Monitors located in `country`, sorted.
    pub fn monitors_in(&self, country: CountryCode) -> Vec<&MonitorId> {
        self.map
            .iter()
            .filter(|(_, c)| **c == country)
            .map(|(m, _)| m)
            .collect()
    }

    pub fn apply_remap(&mut self, remap: &CountryRemap) {
        for c in self.map.values_mut() {
            *c = remap.apply(*c);
        }
    }

    pub fn parse(text: &str, policy: ErrorPolicy) -> Result<(Self, ParseStats), IngestError> {
        let (rows, stats) = parse_numbered_lines(text, parse_monitor_line, policy)?;
        let mut table = Self::new();
        for (line, (monitor, country)) in rows {
            // Conflicts are a data-integrity problem, never skipped.
            if let Err(first) = table.insert(monitor.clone(), country) {
                return Err(IngestError::ConflictingMonitor {
                    line,
                    monitor,
                    first,
                    second: country,
                });
            }
        }
        Ok((table, stats))
    }
}

pub fn parse_remap(text: &str, policy: ErrorPolicy) -> Result<CountryRemap, IngestError> {
    let (rows, _) = parse_lines(text, parse_remap_line, policy)?;
    let mut remap = CountryRemap::new();
    for (from, to) in rows {
        remap.insert(from, to);
    }
    Ok(remap)
}

/// Drops repeated items, keeping the first occurrence of each in input order.
pub fn dedup_paths<I, T>(items: I) -> impl Iterator<Item = T>
where
    I: IntoIterator<Item = T>,
    T: Eq + Hash + Clone,
{
    let mut seen: HashSet<T> = HashSet::new();
    items
        .into_iter()
        .filter(move |item| seen.insert(item.clone()))
}

/// Convenience alias for the pairs flowing out of conversion.
pub type MonitorPath = (MonitorId, CountryPath);
