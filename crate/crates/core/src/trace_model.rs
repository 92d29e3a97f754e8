//! Domain types shared by every stage of the pipeline.
//!
//! A [`CountryPath`] is the unit all analyses operate on: the ordered list of
//! countries a route traverses, with consecutive repeats collapsed.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Errors raised while constructing or parsing the core domain types.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid country code {0:?}: expected two characters A-Z")]
    InvalidCountry(String),
    #[error("invalid monitor id {0:?}: must be non-empty and contain no whitespace")]
    InvalidMonitor(String),
    #[error("empty country path")]
    EmptyPath,
    #[error("country path {0:?} is not in compressed form")]
    NotCompressed(String),
    #[error("unknown dataset kind {0:?}: expected geo or reg")]
    InvalidDataset(String),
}

/// Two-letter uppercase country token.
///
/// Codes are opaque: equality and ordering are all the analyses need, so no
/// registry lookup is done. `EU` and test tokens like `ZZ` are accepted.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn new(code: &str) -> Result<Self, ModelError> {
        match code.as_bytes() {
            &[a, b] if a.is_ascii_uppercase() && b.is_ascii_uppercase() => Ok(Self([a, b])),
            _ => Err(ModelError::InvalidCountry(code.to_string())),
        }
    }

    pub fn as_str(&self) -> &str {
        // Both bytes are validated ASCII uppercase at construction.
        std::str::from_utf8(&self.0).expect("ascii country code")
    }

    pub fn as_bytes(&self) -> [u8; 2] {
        self.0
    }

    /// Dense index in `0..676`, handy for bitsets over the code space.
    pub fn index(&self) -> usize {
        (self.0[0] - b'A') as usize * 26 + (self.0[1] - b'A') as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        if index >= 26 * 26 {
            return None;
        }
        Some(Self([b'A' + (index / 26) as u8, b'A' + (index % 26) as u8]))
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CountryCode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// Ordered, compressed sequence of countries from source to destination.
///
/// Invariants: at least one hop, and no two consecutive hops are equal.
/// Non-consecutive repeats (`US>DE>US`) are allowed and kept verbatim.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryPath(Vec<CountryCode>);

impl CountryPath {
    /// Builds a path from hops that must already be compressed.
    pub fn from_compressed(hops: Vec<CountryCode>) -> Result<Self, ModelError> {
        if hops.is_empty() {
            return Err(ModelError::EmptyPath);
        }
        if hops.windows(2).any(|w| w[0] == w[1]) {
            return Err(ModelError::NotCompressed(join_codes(&hops)));
        }
        Ok(Self(hops))
    }

    pub fn hops(&self) -> &[CountryCode] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for the `len`/`is_empty` pairing lint.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn source(&self) -> CountryCode {
        self.0[0]
    }

    pub fn destination(&self) -> CountryCode {
        self.0[self.0.len() - 1]
    }

    /// Number of country-to-country edges traversed (hop count minus one).
    pub fn distance(&self) -> usize {
        self.0.len() - 1
    }

    /// Hops strictly between the endpoints.
    pub fn interior(&self) -> &[CountryCode] {
        if self.0.len() <= 2 {
            &[]
        } else {
            &self.0[1..self.0.len() - 1]
        }
    }
}

fn join_codes(hops: &[CountryCode]) -> String {
    let mut out = String::with_capacity(hops.len() * 3);
    for (i, hop) in hops.iter().enumerate() {
        if i > 0 {
            out.push('>');
        }
        out.push_str(hop.as_str());
    }
    out
}

/// Canonical `US>DE>FR` form used in store files and reports.
impl fmt::Display for CountryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&join_codes(&self.0))
    }
}

impl fmt::Debug for CountryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CountryPath({self})")
    }
}

impl FromStr for CountryPath {
    type Err = ModelError;

    /// Parses the canonical form. The input must already be compressed.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(ModelError::EmptyPath);
        }
        let hops = s
            .split('>')
            .map(CountryCode::new)
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_compressed(hops)
    }
}

/// Collapses consecutive duplicate codes; everything else is kept in order.
pub fn normalize_country_path<I>(raw: I) -> Result<CountryPath, ModelError>
where
    I: IntoIterator<Item = CountryCode>,
{
    let mut hops: Vec<CountryCode> = Vec::new();
    for code in raw {
        if hops.last() != Some(&code) {
            hops.push(code);
        }
    }
    if hops.is_empty() {
        return Err(ModelError::EmptyPath);
    }
    Ok(CountryPath(hops))
}

/// Which resolution authority turned hops into countries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DatasetKind {
    /// Router hops attributed by physical location (longest-prefix geolocation).
    Geolocation,
    /// AS hops attributed by the owning AS's country of registration.
    Registration,
}

impl DatasetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetKind::Geolocation => "geo",
            DatasetKind::Registration => "reg",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "geo" => Ok(DatasetKind::Geolocation),
            "reg" => Ok(DatasetKind::Registration),
            other => Err(ModelError::InvalidDataset(other.to_string())),
        }
    }
}

/// Opaque vantage-point identifier (probing host or BGP feed router).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonitorId(String);

impl MonitorId {
    pub fn new(id: impl Into<String>) -> Result<Self, ModelError> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(ModelError::InvalidMonitor(id));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MonitorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for MonitorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MonitorId({})", self.0)
    }
}

impl FromStr for MonitorId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// Optional code-to-code rewrite applied to every resolved country at ingest,
/// e.g. folding member-state codes into `EU`. Empty by default.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountryRemap {
    map: BTreeMap<CountryCode, CountryCode>,
}

impl CountryRemap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, from: CountryCode, to: CountryCode) {
        self.map.insert(from, to);
    }

    pub fn apply(&self, code: CountryCode) -> CountryCode {
        self.map.get(&code).copied().unwrap_or(code)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
