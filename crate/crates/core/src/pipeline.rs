//! End-to-end ingest: raw trace or BGP text to a populated [`PathStore`].
//!
//! Input is processed in fixed-size chunks of lines. Each chunk is parsed and
//! converted in parallel, then inserted in file order, so the result does not
//! depend on the thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::country_mapping::{
    aspath_to_country_path, trace_to_country_path, AsRegistry, DiscardReason, GeoTable,
};
use crate::ingest::{
    is_skippable, parse_bgp_line, parse_trace_line, ErrorPolicy, IngestError, LineError,
    MonitorTable, ParseStats, MAX_SAMPLES,
};
use crate::path_store::PathStore;
use crate::trace_model::{CountryPath, DatasetKind, MonitorId};

const CHUNK_LINES: usize = 1 << 16;

/// Counters for one ingest run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub parse: ParseStats,
    pub discarded: BTreeMap<DiscardReason, usize>,
    /// Records whose (monitor, country path) was already stored.
    pub duplicates: usize,
    pub inserted: usize,
    /// Registration-dataset monitors absent from the monitor table whose
    /// country was taken from their first path.
    pub inferred_monitors: usize,
}

impl IngestSummary {
    pub fn discarded_total(&self) -> usize {
        self.discarded.values().sum()
    }

    fn discard(&mut self, reason: DiscardReason) {
        *self.discarded.entry(reason).or_default() += 1;
    }
}

type Converted = (MonitorId, Result<CountryPath, DiscardReason>);

fn for_each_record<P, F>(
    text: &str,
    policy: ErrorPolicy,
    stats: &mut ParseStats,
    parse: P,
    mut sink: F,
) -> Result<(), IngestError>
where
    P: Fn(&str) -> Result<Converted, LineError> + Sync,
    F: FnMut(Converted),
{
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !is_skippable(l))
        .peekable();
    let mut chunk = Vec::with_capacity(CHUNK_LINES);
    while lines.peek().is_some() {
        chunk.clear();
        chunk.extend(lines.by_ref().take(CHUNK_LINES));
        let results: Vec<(usize, Result<Converted, LineError>)> =
            chunk.par_iter().map(|&(n, l)| (n, parse(l))).collect();
        for (line, result) in results {
            stats.lines += 1;
            match result {
                Ok(rec) => {
                    stats.parsed += 1;
                    sink(rec);
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
    }
    Ok(())
}

/// Builds a geolocation store from trace files. Traces from monitors missing
/// in `monitors` are discarded.
pub fn ingest_traces<'a>(
    inputs: impl IntoIterator<Item = &'a str>,
    geo: &GeoTable,
    monitors: MonitorTable,
    policy: ErrorPolicy,
) -> Result<(PathStore, IngestSummary), IngestError> {
    let mut store = PathStore::new(DatasetKind::Geolocation, monitors.clone());
    let mut summary = IngestSummary::default();
    for text in inputs {
        let mut stats = ParseStats::default();
        let parse = |line: &str| {
            let rec = parse_trace_line(line)?;
            let path = trace_to_country_path(&rec, geo, &monitors);
            Ok((rec.monitor, path))
        };
        for_each_record(
            text,
            policy,
            &mut stats,
            parse,
            |(monitor, path)| match path {
                Ok(path) => match store.insert(&monitor, path) {
                    Ok(true) => summary.inserted += 1,
                    Ok(false) => summary.duplicates += 1,
                    Err(_) => summary.discard(DiscardReason::SourceMismatch),
                },
                Err(reason) => summary.discard(reason),
            },
        )?;
        summary.parse.merge(&stats);
    }
    Ok((store, summary))
}

/// Builds a registration store from BGP files. A monitor absent from
/// `monitors` is assigned the source country of its first convertible path;
/// later paths starting elsewhere are discarded.
pub fn ingest_bgp<'a>(
    inputs: impl IntoIterator<Item = &'a str>,
    registry: &AsRegistry,
    monitors: MonitorTable,
    policy: ErrorPolicy,
) -> Result<(PathStore, IngestSummary), IngestError> {
    let mut store = PathStore::new(DatasetKind::Registration, monitors);
    let mut summary = IngestSummary::default();
    for text in inputs {
        let mut stats = ParseStats::default();
        let parse = |line: &str| {
            let rec = parse_bgp_line(line)?;
            let path = aspath_to_country_path(&rec, registry);
            Ok((rec.monitor, path))
        };
        for_each_record(
            text,
            policy,
            &mut stats,
            parse,
            |(monitor, path)| match path {
                Ok(path) => {
                    let expected = match store.monitors().get(&monitor) {
                        Some(c) => c,
                        None => {
                            store
                                .register_monitor(monitor.clone(), path.source())
                                .expect("monitor was absent");
                            summary.inferred_monitors += 1;
                            path.source()
                        }
                    };
                    if path.source() != expected {
                        summary.discard(DiscardReason::SourceMismatch);
                        return;
                    }
                    match store.insert(&monitor, path) {
                        Ok(true) => summary.inserted += 1,
                        Ok(false) => summary.duplicates += 1,
                        Err(_) => summary.discard(DiscardReason::SourceMismatch),
                    }
                }
                Err(reason) => summary.discard(reason),
            },
        )?;
        summary.parse.merge(&stats);
    }
    Ok((store, summary))
}
