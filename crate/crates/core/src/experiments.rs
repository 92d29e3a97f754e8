//! The three exposure experiments over a [`PathStore`]:
//!
//! * monitor generalization: how much of one monitor's view is covered by the
//!   other monitors of its country;
//! * involved countries: every third country on any recorded path between a
//!   pair of countries;
//! * excluded countries: Monte Carlo estimate of how often all, none or some
//!   of the recorded paths avoid a random untrusted set.
//!
//! All reports serialize to CSV with six fractional digits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::path_store::PathStore;
use crate::trace_model::{CountryCode, CountryPath, MonitorId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExperimentError {
    #[error("unknown monitor {0}")]
    UnknownMonitor(MonitorId),
    #[error("monitor {0} revealed no paths")]
    NoPaths(MonitorId),
    #[error("monitor {0} is the only monitor in its country")]
    LonelyMonitor(MonitorId),
    #[error("no recorded paths from {0} to {1}")]
    NoPathsBetween(CountryCode, CountryCode),
    #[error("excluded set contains endpoint {0}")]
    ExcludedEndpoint(CountryCode),
    #[error("no reachable targets from {0}")]
    NoTargets(CountryCode),
    #[error("invalid size range: {0}")]
    InvalidSizes(String),
}

/// Fixed-width bitset over the 676 two-letter codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct CountryBits([u64; 11]);

impl CountryBits {
    fn insert(&mut self, c: CountryCode) {
        let i = c.index();
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn intersects(&self, other: &CountryBits) -> bool {
        self.0.iter().zip(&other.0).any(|(a, b)| a & b != 0)
    }

    fn of<'a>(codes: impl IntoIterator<Item = &'a CountryCode>) -> Self {
        let mut bits = Self::default();
        for c in codes {
            bits.insert(*c);
        }
        bits
    }
}

pub(crate) fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

// ---------------------------------------------------------------------------
// Generalization
// ---------------------------------------------------------------------------

/// Fraction of `x`'s paths also revealed by some other monitor in its country.
pub fn generalization_ratio(store: &PathStore, x: &MonitorId) -> Result<f64, ExperimentError> {
    let country = store
        .monitors()
        .get(x)
        .ok_or_else(|| ExperimentError::UnknownMonitor(x.clone()))?;
    let own = store.paths_of(x);
    if own.is_empty() {
        return Err(ExperimentError::NoPaths(x.clone()));
    }
    let peers: Vec<&MonitorId> = store
        .monitors()
        .monitors_in(country)
        .into_iter()
        .filter(|m| *m != x)
        .collect();
    if peers.is_empty() {
        return Err(ExperimentError::LonelyMonitor(x.clone()));
    }
    let covered = own
        .iter()
        .filter(|p| peers.iter().any(|m| store.paths_of(m).contains(*p)))
        .count();
    Ok(covered as f64 / own.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationRow {
    pub country: CountryCode,
    pub monitor_count: usize,
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeneralizationReport {
    pub rows: Vec<GeneralizationRow>,
    /// Countries skipped because they have a single monitor.
    pub lonely_countries: usize,
    /// Countries skipped because one of their monitors revealed nothing.
    pub incomplete_countries: usize,
}

impl GeneralizationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("country,monitor_count,mean_ratio\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{}",
                r.country,
                r.monitor_count,
                fmt6(r.mean_ratio)
            )
            .unwrap();
        }
        out
    }
}

/// Mean generalization ratio per country with at least two monitors.
pub fn generalization_report(store: &PathStore) -> GeneralizationReport {
    let mut by_country: BTreeMap<CountryCode, Vec<&MonitorId>> = BTreeMap::new();
    for (m, c) in store.monitors().iter() {
        by_country.entry(c).or_default().push(m);
    }
    let mut report = GeneralizationReport::default();
    let outcomes: Vec<(CountryCode, Option<GeneralizationRow>, bool)> = by_country
        .into_par_iter()
        .map(|(country, monitors)| {
            if monitors.len() < 2 {
                return (country, None, true);
            }
            if monitors.iter().any(|m| store.paths_of(m).is_empty()) {
                return (country, None, false);
            }
            // How many of this country's monitors reveal each path.
            let mut seen_by: HashMap<&CountryPath, usize> = HashMap::new();
            for m in &monitors {
                for p in store.paths_of(m) {
                    *seen_by.entry(p).or_default() += 1;
                }
            }
            let sum: f64 = monitors
                .iter()
                .map(|m| {
                    let own = store.paths_of(m);
                    let shared = own.iter().filter(|p| seen_by[p] >= 2).count();
                    shared as f64 / own.len() as f64
                })
                .sum();
            let row = GeneralizationRow {
                country,
                monitor_count: monitors.len(),
                mean_ratio: sum / monitors.len() as f64,
            };
            (country, Some(row), false)
        })
        .collect();
    for (_, row, lonely) in outcomes {
        match row {
            Some(row) => report.rows.push(row),
            None if lonely => report.lonely_countries += 1,
            None => report.incomplete_countries += 1,
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Involved countries
// ---------------------------------------------------------------------------

/// Every country on any recorded path from `x` to `y`, minus `x` and `y`.
pub fn involved(store: &PathStore, x: CountryCode, y: CountryCode) -> BTreeSet<CountryCode> {
    involved_in(store.paths_between(x, y), x, y)
}

fn involved_in<'a>(
    paths: impl IntoIterator<Item = &'a CountryPath>,
    x: CountryCode,
    y: CountryCode,
) -> BTreeSet<CountryCode> {
    paths
        .into_iter()
        .flat_map(|p| p.hops().iter().copied())
        .filter(|c| *c != x && *c != y)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvolvedPoint {
    pub target: CountryCode,
    pub mean_distance: f64,
    pub min_distance: usize,
    pub involved_count: usize,
    /// Distance bin: `mean_distance` rounded half-up.
    pub bin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvolvedCurve {
    pub bin: usize,
    pub target_count: usize,
    pub mean_involved: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvolvedReport {
    pub source: CountryCode,
    pub points: Vec<InvolvedPoint>,
    pub curves: Vec<InvolvedCurve>,
}

pub const INVOLVED_POINTS_HEADER: &str =
    "source,target,mean_distance,min_distance,involved_count\n";
pub const INVOLVED_CURVES_HEADER: &str = "source,distance_bin,target_count,mean_involved\n";

impl InvolvedReport {
    pub fn points_csv_rows(&self, out: &mut String) {
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.source,
                p.target,
                fmt6(p.mean_distance),
                p.min_distance,
                p.involved_count
            )
            .unwrap();
        }
    }

    pub fn curves_csv_rows(&self, out: &mut String) {
        for c in &self.curves {
            writeln!(
                out,
                "{},{},{},{}",
                self.source,
                c.bin,
                c.target_count,
                fmt6(c.mean_involved)
            )
            .unwrap();
        }
    }
}

/// Points and curves CSV documents for a batch of reports, in order.
pub fn involved_csv(reports: &[InvolvedReport]) -> (String, String) {
    let mut points = String::from(INVOLVED_POINTS_HEADER);
    let mut curves = String::from(INVOLVED_CURVES_HEADER);
    for r in reports {
        r.points_csv_rows(&mut points);
        r.curves_csv_rows(&mut curves);
    }
    (points, curves)
}

/// Per-target distances and involved counts for one source country.
///
/// Targets equal to the source (paths that loop back home) are skipped:
/// their distance and involved set are not meaningful.
pub fn involved_report(store: &PathStore, x: CountryCode) -> InvolvedReport {
    let mut points = Vec::new();
    for (y, paths) in store.targets_from(x) {
        if y == x {
            continue;
        }
        let count = paths.len();
        let total: usize = paths.iter().map(CountryPath::distance).sum();
        let min_distance = paths.iter().map(CountryPath::distance).min().unwrap_or(0);
        // floor(total / count + 1/2) in integers.
        let bin = (2 * total + count) / (2 * count);
        points.push(InvolvedPoint {
            target: y,
            mean_distance: total as f64 / count as f64,
            min_distance,
            involved_count: involved_in(paths, x, y).len(),
            bin,
        });
    }
    let mut bins: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for p in &points {
        let e = bins.entry(p.bin).or_default();
        e.0 += 1;
        e.1 += p.involved_count;
    }
    let curves = bins
        .into_iter()
        .map(|(bin, (n, sum))| InvolvedCurve {
            bin,
            target_count: n,
            mean_involved: sum as f64 / n as f64,
        })
        .collect();
    InvolvedReport {
        source: x,
        points,
        curves,
    }
}

// ---------------------------------------------------------------------------
// Excluded countries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrialClass {
    /// Every path avoids the excluded set.
    NoneExcluded,
    /// Every path crosses the excluded set.
    AllExcluded,
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub class: TrialClass,
    pub clean: usize,
    pub total: usize,
}

impl TrialOutcome {
    fn from_counts(clean: usize, total: usize) -> Self {
        let class = if clean == total {
            TrialClass::NoneExcluded
        } else if clean == 0 {
            TrialClass::AllExcluded
        } else {
            TrialClass::Mixture
        };
        Self {
            class,
            clean,
            total,
        }
    }

    pub fn clean_ratio(&self) -> f64 {
        self.clean as f64 / self.total as f64
    }
}

/// Classifies the `x` to `y` paths against one excluded set. A path is
/// clean when none of its interior hops is excluded.
pub fn excluded_trial(
    store: &PathStore,
    x: CountryCode,
    y: CountryCode,
    excluded: &BTreeSet<CountryCode>,
) -> Result<TrialOutcome, ExperimentError> {
    for endpoint in [x, y] {
        if excluded.contains(&endpoint) {
            return Err(ExperimentError::ExcludedEndpoint(endpoint));
        }
    }
    let paths = store.paths_between(x, y);
    if paths.is_empty() {
        return Err(ExperimentError::NoPathsBetween(x, y));
    }
    let clean = paths
        .iter()
        .filter(|p| !p.interior().iter().any(|c| excluded.contains(c)))
        .count();
    Ok(TrialOutcome::from_counts(clean, paths.len()))
}

/// Inclusive `min:max:step` list of excluded-set sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeRange {
    pub min: usize,
    pub max: usize,
    pub step: usize,
}

impl SizeRange {
    pub fn new(min: usize, max: usize, step: usize) -> Result<Self, ExperimentError> {
        if step == 0 {
            return Err(ExperimentError::InvalidSizes(
                "step must be positive".into(),
            ));
        }
        if min > max {
            return Err(ExperimentError::InvalidSizes(format!(
                "min {min} exceeds max {max}"
            )));
        }
        Ok(Self { min, max, step })
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> {
        (self.min..=self.max).step_by(self.step)
    }
}

impl Default for SizeRange {
    /// 0 to 190 in steps of 10.
    fn default() -> Self {
        Self {
            min: 0,
            max: 190,
            step: 10,
        }
    }
}

impl FromStr for SizeRange {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [min, max, step] = parts.as_slice() else {
            return Err(ExperimentError::InvalidSizes(format!(
                "{s:?} is not min:max:step"
            )));
        };
        let num = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| ExperimentError::InvalidSizes(format!("{t:?} is not a count")))
        };
        Self::new(num(min)?, num(max)?, num(step)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedRow {
    pub size: usize,
    pub trials: usize,
    pub none_count: usize,
    pub all_count: usize,
    pub mixture_count: usize,
    /// Mean clean ratio over mixture trials; 0 when there were none.
    pub mixture_mean_clean_ratio: f64,
}

impl ExcludedRow {
    pub fn none_ratio(&self) -> f64 {
        self.none_count as f64 / self.trials as f64
    }

    pub fn all_ratio(&self) -> f64 {
        self.all_count as f64 / self.trials as f64
    }

    pub fn mixture_trial_ratio(&self) -> f64 {
        self.mixture_count as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedReport {
    pub source: CountryCode,
    pub seed: u64,
    pub rows: Vec<ExcludedRow>,
}

pub const EXCLUDED_HEADER: &str =
    "source,size,none_ratio,all_ratio,mixture_trial_ratio,mixture_mean_clean_ratio,trials,seed\n";

impl ExcludedReport {
    pub fn csv_rows(&self, out: &mut String) {
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.source,
                r.size,
                fmt6(r.none_ratio()),
                fmt6(r.all_ratio()),
                fmt6(r.mixture_trial_ratio()),
                fmt6(r.mixture_mean_clean_ratio),
                r.trials,
                self.seed
            )
            .unwrap();
        }
    }
}

pub fn excluded_csv(reports: &[ExcludedReport]) -> String {
    let mut out = String::from(EXCLUDED_HEADER);
    for r in reports {
        r.csv_rows(&mut out);
    }
    out
}

/// Generator for one trial, keyed by every coordinate of the trial so the
/// result does not depend on scheduling.
pub fn trial_rng(
    seed: u64,
    source: CountryCode,
    size_index: usize,
    trial_index: usize,
) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..10].copy_from_slice(&source.as_bytes());
    key[16..24].copy_from_slice(&(size_index as u64).to_le_bytes());
    key[24..].copy_from_slice(&(trial_index as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

struct Target {
    code: CountryCode,
    /// Interior hops of each distinct path.
    interiors: Vec<CountryBits>,
    /// Candidate excluded countries: the universe minus source and target.
    candidates: Vec<CountryCode>,
}

/// Monte Carlo excluded-country experiment for source `x`.
///
/// Each trial draws a destination uniformly from the countries reachable
/// from `x`, then an excluded set uniformly without replacement from every
/// other country in the store (never `x` or the destination), of size
/// `min(size, available)`.
pub fn excluded_experiment(
    store: &PathStore,
    x: CountryCode,
    sizes: SizeRange,
    trials_per_size: usize,
    seed: u64,
) -> Result<ExcludedReport, ExperimentError> {
    let universe = store.countries();
    let targets: Vec<Target> = store
        .targets_from(x)
        .filter(|(y, _)| *y != x)
        .map(|(y, paths)| Target {
            code: y,
            interiors: paths
                .iter()
                .map(|p| CountryBits::of(p.interior()))
                .collect(),
            candidates: universe
                .iter()
                .copied()
                .filter(|c| *c != x && *c != y)
                .collect(),
        })
        .collect();
    if targets.is_empty() {
        return Err(ExperimentError::NoTargets(x));
    }

    let rows = sizes
        .sizes()
        .enumerate()
        .map(|(size_index, size)| {
            let outcomes: Vec<TrialOutcome> = (0..trials_per_size)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = trial_rng(seed, x, size_index, trial);
                    let target = &targets[rng.random_range(0..targets.len())];
                    let k = size.min(target.candidates.len());
                    let mut excluded = CountryBits::default();
                    for i in index::sample(&mut rng, target.candidates.len(), k) {
                        excluded.insert(target.candidates[i]);
                    }
                    let clean = target
                        .interiors
                        .iter()
                        .filter(|p| !p.intersects(&excluded))
                        .count();
                    debug_assert!(target.code != x);
                    TrialOutcome::from_counts(clean, target.interiors.len())
                })
                .collect();
            let mut row = ExcludedRow {
                size,
                trials: trials_per_size,
                none_count: 0,
                all_count: 0,
                mixture_count: 0,
                mixture_mean_clean_ratio: 0.0,
            };
            let mut mixture_sum = 0.0;
            for o in &outcomes {
                match o.class {
                    TrialClass::NoneExcluded => row.none_count += 1,
                    TrialClass::AllExcluded => row.all_count += 1,
                    TrialClass::Mixture => {
                        row.mixture_count += 1;
                        mixture_sum += o.clean_ratio();
                    }
                }
            }
            if row.mixture_count > 0 {
                row.mixture_mean_clean_ratio = mixture_sum / row.mixture_count as f64;
            }
            row
        })
        .collect();

    Ok(ExcludedReport {
        source: x,
        seed,
        rows,
    })
}
