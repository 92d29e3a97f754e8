//! Deterministic synthetic corpora with known ground truth.
//!
//! Countries are joined by degree-weighted preferential attachment. Each
//! country owns `10.c.0.0/16` and a chain of routers; every country link
//! becomes one router link between random routers of the two countries.
//! Routes are weighted shortest paths; alternates come from penalizing a
//! random edge of the latest route and searching again.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt::Write as _;
use std::io;
use std::net::Ipv4Addr;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::trace_model::{normalize_country_path, CountryCode};

pub const MAX_COUNTRIES: usize = 256;
pub const MAX_ROUTERS_PER_COUNTRY: usize = 250 * 256;
const DOMESTIC_WEIGHT: std::ops::RangeInclusive<u64> = 1..=3;
const FOREIGN_WEIGHT: std::ops::RangeInclusive<u64> = 10..=14;
const DEVIATION_PENALTY: u64 = 10;
const BLANK_PROBABILITY: f64 = 0.1;
const DECOY_PROBABILITY: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("n_countries must be in 3..={MAX_COUNTRIES}, got {0}")]
    Countries(usize),
    #[error("n_routers_per_country must be in 1..={MAX_ROUTERS_PER_COUNTRY}, got {0}")]
    Routers(usize),
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("n_monitors ({monitors}) exceeds the router count ({routers})")]
    TooManyMonitors { monitors: usize, routers: usize },
    #[error("attachment_exponent must be finite")]
    Exponent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_countries: usize,
    /// Router count of a country, multiplied by its degree when
    /// `scale_routers_by_degree` is set.
    pub n_routers_per_country: usize,
    pub scale_routers_by_degree: bool,
    /// Attachment weight is `degree ^ attachment_exponent`; above 1 favours hubs.
    pub attachment_exponent: f64,
    /// Existing countries each new country links to.
    pub attach_links: usize,
    pub n_monitors: usize,
    /// Destination countries sampled per monitor (capped at all others).
    pub paths_per_monitor: usize,
    /// Distinct routes attempted per (monitor, destination).
    pub multipath_factor: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_countries: 10,
            n_routers_per_country: 2,
            scale_routers_by_degree: true,
            attachment_exponent: 1.5,
            attach_links: 2,
            n_monitors: 10,
            paths_per_monitor: usize::MAX,
            multipath_factor: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(3..=MAX_COUNTRIES).contains(&self.n_countries) {
            return Err(ConfigError::Countries(self.n_countries));
        }
        if !(1..=MAX_ROUTERS_PER_COUNTRY).contains(&self.n_routers_per_country) {
            return Err(ConfigError::Routers(self.n_routers_per_country));
        }
        for (name, v) in [
            ("attach_links", self.attach_links),
            ("n_monitors", self.n_monitors),
            ("paths_per_monitor", self.paths_per_monitor),
            ("multipath_factor", self.multipath_factor),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        // With degree scaling the final count is only known after generation.
        let routers = self.n_countries * self.n_routers_per_country;
        if !self.scale_routers_by_degree && self.n_monitors > routers {
            return Err(ConfigError::TooManyMonitors {
                monitors: self.n_monitors,
                routers,
            });
        }
        if !self.attachment_exponent.is_finite() {
            return Err(ConfigError::Exponent);
        }
        Ok(())
    }
}

/// Country code for synthetic country `i`: `AA`, `AB`, ..., `AZ`, `BA`, ...
pub fn synth_country(i: usize) -> CountryCode {
    CountryCode::from_index(i).expect("country index in range")
}

/// The generated files, as text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub traces: String,
    pub bgp: String,
    pub monitors: String,
    pub geo: String,
    pub asreg: String,
    pub ground_truth: String,
    /// Country-level links of the generated topology, sorted.
    pub country_links: Vec<(CountryCode, CountryCode)>,
}

impl Corpus {
    pub const TRACES: &'static str = "traces.tsv";
    pub const BGP: &'static str = "bgp.tsv";
    pub const MONITORS: &'static str = "monitors.tsv";
    pub const GEO: &'static str = "geo.tsv";
    pub const ASREG: &'static str = "asreg.tsv";
    pub const GROUND_TRUTH: &'static str = "ground_truth.tsv";

    pub fn files(&self) -> [(&'static str, &str); 6] {
        [
            (Self::TRACES, &self.traces),
            (Self::BGP, &self.bgp),
            (Self::MONITORS, &self.monitors),
            (Self::GEO, &self.geo),
            (Self::ASREG, &self.asreg),
            (Self::GROUND_TRUTH, &self.ground_truth),
        ]
    }

    pub fn write_to_dir(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in self.files() {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

struct Topology {
    n_routers: usize,
    /// Country of each router.
    country: Vec<usize>,
    /// Index of each router within its country.
    local: Vec<usize>,
    /// First router of each country, plus a final sentinel.
    first: Vec<usize>,
    /// `(neighbour, edge id)` per router.
    adj: Vec<Vec<(usize, usize)>>,
    weights: Vec<u64>,
    country_links: BTreeSet<(usize, usize)>,
}

impl Topology {
    fn router_count(&self, c: usize) -> usize {
        self.first[c + 1] - self.first[c]
    }

    fn random_router(&self, c: usize, rng: &mut ChaCha8Rng) -> usize {
        self.first[c] + rng.random_range(0..self.router_count(c))
    }

    fn addr(&self, r: usize) -> Ipv4Addr {
        let local = self.local[r];
        Ipv4Addr::new(
            10,
            self.country[r] as u8,
            (local / 250) as u8,
            (local % 250 + 1) as u8,
        )
    }

    fn asn(&self, r: usize) -> u32 {
        router_asn(self.country[r], self.local[r])
    }
}

fn router_asn(country: usize, local: usize) -> u32 {
    100_000 + country as u32 * 65_536 + (local / 2) as u32
}

fn attach_countries(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> BTreeSet<(usize, usize)> {
    let mut degree = vec![0usize; cfg.n_countries];
    let mut links = BTreeSet::new();
    for c in 1..cfg.n_countries {
        let m = cfg.attach_links.min(c);
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        for _ in 0..m {
            let weights: Vec<f64> = (0..c)
                .map(|t| {
                    if chosen.contains(&t) {
                        0.0
                    } else {
                        (degree[t].max(1) as f64).powf(cfg.attachment_exponent)
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = (0..c).rev().find(|t| !chosen.contains(t)).unwrap();
            for (t, w) in weights.iter().enumerate() {
                if *w > 0.0 && u < *w {
                    pick = t;
                    break;
                }
                u -= w;
            }
            chosen.push(pick);
        }
        for t in chosen {
            degree[t] += 1;
            degree[c] += 1;
            links.insert((t.min(c), t.max(c)));
        }
    }
    links
}

fn build_topology(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Topology {
    let country_links = attach_countries(cfg, rng);
    let mut degree = vec![0usize; cfg.n_countries];
    for &(a, b) in &country_links {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut first = vec![0];
    for c in 0..cfg.n_countries {
        let size = if cfg.scale_routers_by_degree {
            cfg.n_routers_per_country * degree[c]
        } else {
            cfg.n_routers_per_country
        };
        first.push(first[c] + size.min(MAX_ROUTERS_PER_COUNTRY));
    }
    let n_routers = first[cfg.n_countries];
    let mut topo = Topology {
        n_routers,
        country: (0..cfg.n_countries)
            .flat_map(|c| std::iter::repeat_n(c, first[c + 1] - first[c]))
            .collect(),
        local: (0..cfg.n_countries)
            .flat_map(|c| 0..first[c + 1] - first[c])
            .collect(),
        first,
        adj: vec![Vec::new(); n_routers],
        weights: Vec::new(),
        country_links: BTreeSet::new(),
    };
    let add_edge = |topo: &mut Topology, a: usize, b: usize, w: u64| {
        let id = topo.weights.len();
        topo.weights.push(w);
        topo.adj[a].push((b, id));
        topo.adj[b].push((a, id));
    };
    // Each country's routers form a random tree of cheap domestic links.
    for c in 0..cfg.n_countries {
        let base = topo.first[c];
        for local in 1..topo.router_count(c) {
            let parent = base + rng.random_range(0..local);
            let w = rng.random_range(DOMESTIC_WEIGHT);
            add_edge(&mut topo, parent, base + local, w);
        }
    }
    for &(a, b) in &country_links {
        let ra = topo.random_router(a, rng);
        let rb = topo.random_router(b, rng);
        let w = rng.random_range(FOREIGN_WEIGHT);
        add_edge(&mut topo, ra, rb, w);
    }
    topo.country_links = country_links;
    topo
}

/// Router sequence and edge ids of the cheapest route, ties broken by the
/// lowest router index.
fn shortest_route(
    topo: &Topology,
    weights: &[u64],
    from: usize,
    to: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut dist = vec![u64::MAX; topo.n_routers];
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; topo.n_routers];
    let mut heap = BinaryHeap::from([Reverse((0u64, from))]);
    dist[from] = 0;
    while let Some(Reverse((d, v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        if v == to {
            break;
        }
        for &(w, e) in &topo.adj[v] {
            let nd = d + weights[e];
            if nd < dist[w] || (nd == dist[w] && prev[w].is_some_and(|(p, _)| v < p)) {
                dist[w] = nd;
                prev[w] = Some((v, e));
                heap.push(Reverse((nd, w)));
            }
        }
    }
    let mut routers = vec![to];
    let mut edges = Vec::new();
    let mut cur = to;
    while let Some((p, e)) = prev[cur] {
        routers.push(p);
        edges.push(e);
        cur = p;
    }
    assert_eq!(cur, from, "router graph is connected");
    routers.reverse();
    edges.reverse();
    (routers, edges)
}

struct MonitorOutput {
    traces: String,
    bgp: String,
    truth: BTreeSet<String>,
}

fn emit_monitor(
    cfg: &SynthConfig,
    topo: &Topology,
    monitor: &str,
    router: usize,
    rng: &mut ChaCha8Rng,
) -> MonitorOutput {
    let home = topo.country[router];
    let mut dests: Vec<usize> = (0..cfg.n_countries).filter(|&c| c != home).collect();
    dests.shuffle(rng);
    dests.truncate(cfg.paths_per_monitor);
    dests.sort_unstable();

    let mut out = MonitorOutput {
        traces: String::new(),
        bgp: String::new(),
        truth: BTreeSet::new(),
    };
    for dest in dests {
        let target = topo.random_router(dest, rng);
        let mut weights = topo.weights.clone();
        let mut routes: Vec<Vec<usize>> = Vec::new();
        let mut latest_edges = Vec::new();
        for attempt in 0..cfg.multipath_factor * 3 {
            if routes.len() == cfg.multipath_factor {
                break;
            }
            if attempt > 0 {
                let e = latest_edges[rng.random_range(0..latest_edges.len())];
                weights[e] += DEVIATION_PENALTY;
            }
            let (route, edges) = shortest_route(topo, &weights, router, target);
            latest_edges = edges;
            if !routes.contains(&route) {
                routes.push(route);
            }
        }
        for route in routes {
            let countries = route.iter().map(|&r| synth_country(topo.country[r]));
            let path = normalize_country_path(countries).expect("non-empty route");
            out.truth.insert(format!("{monitor}\t{path}"));
            write_trace(&mut out.traces, monitor, topo, &route[1..], rng);
            write_bgp(&mut out.bgp, monitor, topo, &route, dest, rng);
        }
    }
    out
}

fn write_trace(
    out: &mut String,
    monitor: &str,
    topo: &Topology,
    hops: &[usize],
    rng: &mut ChaCha8Rng,
) {
    let mut tokens: Vec<String> = Vec::with_capacity(hops.len());
    let mut prev_blank = false;
    for i in 0..hops.len() {
        // Blank a hop only when both neighbours are resolved and share its
        // country, so the pipeline can restore it.
        let flanked = i > 0
            && i + 1 < hops.len()
            && !prev_blank
            && topo.country[hops[i - 1]] == topo.country[hops[i]]
            && topo.country[hops[i + 1]] == topo.country[hops[i]];
        if flanked && rng.random_bool(BLANK_PROBABILITY) {
            tokens.push("*".into());
            prev_blank = true;
        } else {
            tokens.push(topo.addr(hops[i]).to_string());
            prev_blank = false;
        }
    }
    writeln!(out, "{monitor}\t{}", tokens.join(",")).unwrap();
    if rng.random_bool(DECOY_PROBABILITY) {
        // Same route with an unresolved final hop; the pipeline must drop it.
        let mut decoy = tokens;
        *decoy.last_mut().unwrap() = "*".into();
        writeln!(out, "{monitor}\t{}", decoy.join(",")).unwrap();
    }
}

fn write_bgp(
    out: &mut String,
    monitor: &str,
    topo: &Topology,
    route: &[usize],
    dest: usize,
    rng: &mut ChaCha8Rng,
) {
    let mut asns: Vec<u32> = route.iter().map(|&r| topo.asn(r)).collect();
    asns.dedup();
    let mut tokens = Vec::with_capacity(asns.len() * 2);
    for asn in asns {
        let repeats = if rng.random_bool(0.2) {
            rng.random_range(2..=3)
        } else {
            1
        };
        for _ in 0..repeats {
            tokens.push(asn.to_string());
        }
    }
    writeln!(out, "{monitor}\t10.{dest}.0.0/16\t{}", tokens.join(" ")).unwrap();
}

/// One monitor per country while countries last, then uniformly random
/// unused routers, so larger countries host more monitors.
fn pick_monitor_routers(cfg: &SynthConfig, topo: &Topology, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut countries: Vec<usize> = (0..cfg.n_countries).collect();
    countries.shuffle(rng);
    let mut chosen: Vec<usize> = countries
        .iter()
        .take(cfg.n_monitors)
        .map(|&c| topo.random_router(c, rng))
        .collect();
    let taken: BTreeSet<usize> = chosen.iter().copied().collect();
    let mut rest: Vec<usize> = (0..topo.n_routers).filter(|r| !taken.contains(r)).collect();
    rest.shuffle(rng);
    chosen.extend(
        rest.into_iter()
            .take(cfg.n_monitors.saturating_sub(chosen.len())),
    );
    chosen
}

/// Generates a corpus; output depends only on `cfg`.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus, ConfigError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let topo = build_topology(cfg, &mut rng);
    if cfg.n_monitors > topo.n_routers {
        return Err(ConfigError::TooManyMonitors {
            monitors: cfg.n_monitors,
            routers: topo.n_routers,
        });
    }
    let routers = pick_monitor_routers(cfg, &topo, &mut rng);

    let outputs: Vec<MonitorOutput> = routers
        .par_iter()
        .enumerate()
        .map(|(i, &router)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            emit_monitor(cfg, &topo, &monitor_name(i), router, &mut rng)
        })
        .collect();

    let mut corpus = Corpus {
        traces: String::new(),
        bgp: String::new(),
        monitors: String::new(),
        geo: String::new(),
        asreg: String::new(),
        ground_truth: String::new(),
        country_links: topo
            .country_links
            .iter()
            .map(|&(a, b)| (synth_country(a), synth_country(b)))
            .collect(),
    };
    for (i, &router) in routers.iter().enumerate() {
        writeln!(
            corpus.monitors,
            "{}\t{}",
            monitor_name(i),
            synth_country(topo.country[router])
        )
        .unwrap();
    }
    let mut truth = BTreeSet::new();
    for out in outputs {
        corpus.traces.push_str(&out.traces);
        corpus.bgp.push_str(&out.bgp);
        truth.extend(out.truth);
    }
    for line in truth {
        corpus.ground_truth.push_str(&line);
        corpus.ground_truth.push('\n');
    }
    for c in 0..cfg.n_countries {
        writeln!(corpus.geo, "10.{c}.0.0/16\t{}", synth_country(c)).unwrap();
        let mut asns: Vec<u32> = (0..topo.router_count(c))
            .map(|local| router_asn(c, local))
            .collect();
        asns.dedup();
        for asn in asns {
            writeln!(corpus.asreg, "AS{asn}\t{}", synth_country(c)).unwrap();
        }
    }
    Ok(corpus)
}

fn monitor_name(i: usize) -> String {
    format!("mon{i:04}")
}
