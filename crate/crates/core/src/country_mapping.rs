//! Resolution of hops to countries and conversion of raw records into
//! [`CountryPath`]s.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use thiserror::Error;

use crate::ingest::{
    parse_asn, parse_numbered_lines, AsPathRecord, ErrorPolicy, Hop, IngestError, LineError,
    MonitorTable, ParseStats, TraceRecord,
};
use crate::trace_model::{normalize_country_path, CountryCode, CountryPath, CountryRemap};

/// IPv4 CIDR block with host bits cleared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ipv4Prefix {
    network: u32,
    len: u8,
}

fn mask(len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        u32::MAX << (32 - len)
    }
}

impl Ipv4Prefix {
    /// Rejects prefixes with host bits set.
    pub fn new(addr: Ipv4Addr, len: u8) -> Result<Self, String> {
        if len > 32 {
            return Err(format!("prefix length {len} out of range"));
        }
        let network = u32::from(addr);
        if network & !mask(len) != 0 {
            return Err(format!("{addr}/{len} has host bits set"));
        }
        Ok(Self { network, len })
    }

    pub fn network(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.network)
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    /// True only for `0.0.0.0/0`.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        u32::from(ip) & mask(self.len) == self.network
    }
}

impl fmt::Display for Ipv4Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.network(), self.len)
    }
}

impl FromStr for Ipv4Prefix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, len) = s
            .split_once('/')
            .ok_or_else(|| format!("invalid CIDR {s:?}"))?;
        let addr: Ipv4Addr = addr.parse().map_err(|_| format!("invalid CIDR {s:?}"))?;
        if len.is_empty() || !len.bytes().all(|b| b.is_ascii_digit()) || len.len() > 2 {
            return Err(format!("invalid CIDR {s:?}"));
        }
        Self::new(
            addr,
            len.parse().map_err(|_| format!("invalid CIDR {s:?}"))?,
        )
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MappingError {
    #[error("no prefix covers {0}")]
    Unresolved(Ipv4Addr),
    #[error("duplicate prefix {0}")]
    DuplicatePrefix(Ipv4Prefix),
    #[error("ASN {asn} registered to both {first} and {second}")]
    ConflictingAsn {
        asn: u32,
        first: CountryCode,
        second: CountryCode,
    },
}

/// Longest-prefix-match table from IPv4 blocks to countries.
///
/// One hash map per prefix length; lookups probe only the lengths present,
/// longest first.
#[derive(Debug, Clone)]
pub struct GeoTable {
    by_len: Vec<HashMap<u32, CountryCode>>,
    lengths: Vec<u8>,
    entries: usize,
}

impl GeoTable {
    pub fn new() -> Self {
        Self {
            by_len: vec![HashMap::new(); 33],
            lengths: Vec::new(),
            entries: 0,
        }
    }

    pub fn insert(&mut self, prefix: Ipv4Prefix, country: CountryCode) -> Result<(), MappingError> {
        let bucket = &mut self.by_len[prefix.len as usize];
        if bucket.contains_key(&prefix.network) {
            return Err(MappingError::DuplicatePrefix(prefix));
        }
        bucket.insert(prefix.network, country);
        if let Err(pos) = self.lengths.binary_search_by(|l| prefix.len.cmp(l)) {
            self.lengths.insert(pos, prefix.len);
        }
        self.entries += 1;
        Ok(())
    }

    pub fn lookup(&self, ip: Ipv4Addr) -> Result<CountryCode, MappingError> {
        let bits = u32::from(ip);
        for &len in &self.lengths {
            if let Some(c) = self.by_len[len as usize].get(&(bits & mask(len))) {
                return Ok(*c);
            }
        }
        Err(MappingError::Unresolved(ip))
    }

    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    /// All entries, sorted by prefix.
    pub fn entries(&self) -> Vec<(Ipv4Prefix, CountryCode)> {
        let mut out: Vec<_> = self
            .by_len
            .iter()
            .enumerate()
            .flat_map(|(len, m)| {
                m.iter().map(move |(&network, &c)| {
                    (
                        Ipv4Prefix {
                            network,
                            len: len as u8,
                        },
                        c,
                    )
                })
            })
            .collect();
        out.sort();
        out
    }

    pub fn apply_remap(&mut self, remap: &CountryRemap) {
        for bucket in &mut self.by_len {
            for c in bucket.values_mut() {
                *c = remap.apply(*c);
            }
        }
    }

    /// Loads `CIDR TAB country` lines. Duplicate prefixes are always fatal.
    pub fn parse(text: &str, policy: ErrorPolicy) -> Result<(Self, ParseStats), IngestError> {
        let (rows, stats) = parse_numbered_lines(text, parse_geo_line, policy)?;
        let mut table = Self::new();
        for (line, (prefix, country)) in rows {
            table
                .insert(prefix, country)
                .map_err(|e| IngestError::Parse {
                    line,
                    reason: LineError::Malformed(e.to_string()),
                })?;
        }
        Ok((table, stats))
    }
}

impl Default for GeoTable {
    fn default() -> Self {
        Self::new()
    }
}

/// Convenience for geo lookups, matching the free-function form.
pub fn geo_lookup(table: &GeoTable, ip: Ipv4Addr) -> Result<CountryCode, MappingError> {
    table.lookup(ip)
}

fn two_fields(line: &str) -> Result<(&str, &str), LineError> {
    let mut it = line.split('\t');
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => Ok((a, b)),
        _ => Err(LineError::Malformed(
            "expected exactly two TAB-separated fields".into(),
        )),
    }
}

fn parse_geo_line(line: &str) -> Result<(Ipv4Prefix, CountryCode), LineError> {
    let (prefix, country) = two_fields(line)?;
    let prefix = prefix.parse().map_err(LineError::Malformed)?;
    let country = CountryCode::new(country).map_err(|e| LineError::Malformed(e.to_string()))?;
    Ok((prefix, country))
}

fn parse_asreg_line(line: &str) -> Result<(u32, CountryCode), LineError> {
    let (asn, country) = two_fields(line)?;
    let asn = parse_asn(asn)?;
    let country = CountryCode::new(country).map_err(|e| LineError::Malformed(e.to_string()))?;
    Ok((asn, country))
}

/// ASN to country-of-registration map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AsRegistry {
    map: BTreeMap<u32, CountryCode>,
}

impl AsRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Re-registering an ASN to the same country is a no-op.
    pub fn insert(&mut self, asn: u32, country: CountryCode) -> Result<(), MappingError> {
        match self.map.get(&asn) {
            Some(&first) if first != country => Err(MappingError::ConflictingAsn {
                asn,
                first,
                second: country,
            }),
            _ => {
                self.map.insert(asn, country);
                Ok(())
            }
        }
    }

    pub fn get(&self, asn: u32) -> Option<CountryCode> {
        self.map.get(&asn).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn apply_remap(&mut self, remap: &CountryRemap) {
        for c in self.map.values_mut() {
            *c = remap.apply(*c);
        }
    }

    /// Loads `ASN TAB country` lines; `AS3356` and `3356` are equivalent.
    pub fn parse(text: &str, policy: ErrorPolicy) -> Result<(Self, ParseStats), IngestError> {
        let (rows, stats) = parse_numbered_lines(text, parse_asreg_line, policy)?;
        let mut reg = Self::new();
        for (line, (asn, country)) in rows {
            reg.insert(asn, country).map_err(|e| IngestError::Parse {
                line,
                reason: LineError::Malformed(e.to_string()),
            })?;
        }
        Ok((reg, stats))
    }
}

/// Why a parsed record produced no country path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DiscardReason {
    /// An unresolved hop without the same country on both sides.
    UnflankedUnresolved,
    MonitorUnknown,
    UnregisteredAsn,
    /// The path does not start in the monitor's recorded country.
    SourceMismatch,
}

impl DiscardReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiscardReason::UnflankedUnresolved => "unflanked unresolved hop",
            DiscardReason::MonitorUnknown => "monitor unknown",
            DiscardReason::UnregisteredAsn => "unregistered ASN",
            DiscardReason::SourceMismatch => "source mismatch",
        }
    }
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fills maximal runs of unresolved hops whose nearest resolved neighbours
/// on both sides agree. Any other unresolved hop, including one at either
/// end, discards the whole trace.
pub fn fill_flanked(resolved: &[Option<CountryCode>]) -> Option<Vec<CountryCode>> {
    let mut out = Vec::with_capacity(resolved.len());
    let mut i = 0;
    while i < resolved.len() {
        match resolved[i] {
            Some(c) => {
                out.push(c);
                i += 1;
            }
            None => {
                let start = i;
                while i < resolved.len() && resolved[i].is_none() {
                    i += 1;
                }
                let left = start.checked_sub(1).and_then(|j| resolved[j]);
                let right = resolved.get(i).copied().flatten();
                match (left, right) {
                    (Some(l), Some(r)) if l == r => {
                        out.extend(std::iter::repeat_n(l, i - start));
                    }
                    _ => return None,
                }
            }
        }
    }
    Some(out)
}

/// Converts a router-level trace into a country path rooted at the
/// monitor's country. The monitor's country comes from the monitor table,
/// never from geolocating its first hop.
pub fn trace_to_country_path(
    rec: &TraceRecord,
    geo: &GeoTable,
    monitors: &MonitorTable,
) -> Result<CountryPath, DiscardReason> {
    let source = monitors
        .get(&rec.monitor)
        .ok_or(DiscardReason::MonitorUnknown)?;
    let resolved: Vec<Option<CountryCode>> = rec
        .hops
        .iter()
        .map(|hop| match hop {
            Hop::Addr(ip) => geo.lookup(*ip).ok(),
            Hop::Unresolved => None,
        })
        .collect();
    let hops = fill_flanked(&resolved).ok_or(DiscardReason::UnflankedUnresolved)?;
    // Non-empty: the source is always present.
    Ok(normalize_country_path(std::iter::once(source).chain(hops)).expect("non-empty path"))
}

pub fn aspath_to_country_path(
    rec: &AsPathRecord,
    reg: &AsRegistry,
) -> Result<CountryPath, DiscardReason> {
    let codes = rec
        .asns
        .iter()
        .map(|asn| reg.get(*asn).ok_or(DiscardReason::UnregisteredAsn))
        .collect::<Result<Vec<_>, _>>()?;
    normalize_country_path(codes).map_err(|_| DiscardReason::UnregisteredAsn)
}
