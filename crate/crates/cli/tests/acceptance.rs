//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line per criterion and exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use expo_core::country_graph::{
    build_graph, centrality_scatter, closeness_vector, degree_vector, eigenvector_vector,
    load_counts, CountryGraph, GraphError,
};
use expo_core::experiments::{excluded_experiment, generalization_report, involved, SizeRange};
use expo_core::trace_model::normalize_country_path;
use expo_core::{
    generate_corpus, ingest_bgp, ingest_traces, AsRegistry, Corpus, CountryCode, CountryPath,
    DatasetKind, ErrorPolicy, GeoTable, MonitorId, MonitorTable, PathStore, SynthConfig,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn node(i: usize) -> CountryCode {
    CountryCode::from_index(i).unwrap()
}

fn mid(s: &str) -> MonitorId {
    MonitorId::new(s).unwrap()
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

// ---------------------------------------------------------------------------
// 1. Involved sets against a brute-force union
// ---------------------------------------------------------------------------

fn random_store(rng: &mut ChaCha8Rng) -> PathStore {
    let n_countries = rng.random_range(2..=30);
    let countries: Vec<CountryCode> = {
        let mut all: Vec<usize> = (0..676).collect();
        all.shuffle(rng);
        all[..n_countries].iter().map(|&i| node(i)).collect()
    };
    let n_monitors = rng.random_range(1..=12);
    let mut table = MonitorTable::new();
    let mut monitors = Vec::new();
    for i in 0..n_monitors {
        let m = mid(&format!("m{i}"));
        let c = countries[rng.random_range(0..n_countries)];
        table.insert(m.clone(), c).unwrap();
        monitors.push((m, c));
    }
    let mut store = PathStore::new(DatasetKind::Geolocation, table);
    for _ in 0..rng.random_range(1..=500) {
        let (m, c) = &monitors[rng.random_range(0..n_monitors)];
        let len = rng.random_range(0..=6);
        let hops = std::iter::once(*c)
            .chain((0..len).map(|_| countries[rng.random_range(0..n_countries)]));
        store
            .insert(m, normalize_country_path(hops).unwrap())
            .unwrap();
    }
    store
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pairs = 0usize;
    let mut mismatches = 0usize;
    for _ in 0..1000 {
        let store = random_store(&mut rng);
        let records: Vec<&CountryPath> = store.records().map(|(_, p)| p).collect();
        let universe: Vec<CountryCode> = records
            .iter()
            .flat_map(|p| p.hops().iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for &x in &universe {
            for &y in &universe {
                let mut oracle = BTreeSet::new();
                for p in &records {
                    if p.source() == x && p.destination() == y {
                        oracle.extend(p.hops().iter().copied().filter(|c| *c != x && *c != y));
                    }
                }
                pairs += 1;
                if involved(&store, x, y) != oracle {
                    mismatches += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches == 0 && elapsed < Duration::from_secs(30),
        format!(
            "1000 stores, {pairs} pairs, {mismatches} mismatches, {}",
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Centralities against independent oracles
// ---------------------------------------------------------------------------

/// Edge list of a graph on `n` nodes.
#[derive(Clone)]
struct SmallGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl SmallGraph {
    fn matrix(&self) -> Vec<Vec<bool>> {
        let mut a = vec![vec![false; self.n]; self.n];
        for &(u, v) in &self.edges {
            a[u][v] = true;
            a[v][u] = true;
        }
        a
    }

    fn to_country_graph(&self) -> CountryGraph {
        CountryGraph::from_edges(
            (0..self.n).map(node),
            self.edges.iter().map(|&(a, b)| (node(a), node(b))),
        )
    }
}

fn pair_index(n: usize) -> Vec<Vec<usize>> {
    let mut idx = vec![vec![usize::MAX; n]; n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            idx[i][j] = k;
            idx[j][i] = k;
            k += 1;
        }
    }
    idx
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Every connected graph on `n <= 7` nodes up to isomorphism, as edge
/// bitmasks over `pair_index(n)`. Built by attaching a new vertex to a
/// non-empty subset of each smaller graph; the canonical form is the minimum
/// mask over all relabelings.
fn connected_graphs(max_n: usize) -> Vec<Vec<SmallGraph>> {
    let mut by_n: Vec<Vec<SmallGraph>> = vec![
        Vec::new(),
        vec![SmallGraph {
            n: 1,
            edges: vec![],
        }],
    ];
    let mut prev_masks: Vec<u32> = vec![0];
    for n in 2..=max_n {
        let idx = pair_index(n);
        let small_idx = pair_index(n - 1);
        let perms = permutations(n);
        let n_pairs = n * (n - 1) / 2;
        // New label of each edge bit under each permutation.
        let edge_maps: Vec<Vec<usize>> = perms
            .iter()
            .map(|p| {
                let mut map = vec![0; n_pairs];
                for i in 0..n {
                    for j in i + 1..n {
                        map[idx[i][j]] = idx[p[i]][p[j]];
                    }
                }
                map
            })
            .collect();
        let canonical = |mask: u32| -> u32 {
            edge_maps
                .iter()
                .map(|map| {
                    let mut out = 0u32;
                    let mut m = mask;
                    while m != 0 {
                        let b = m.trailing_zeros() as usize;
                        out |= 1 << map[b];
                        m &= m - 1;
                    }
                    out
                })
                .min()
                .unwrap()
        };
        let mut found = BTreeSet::new();
        for &small in &prev_masks {
            // Re-index the smaller graph's edges in the n-node numbering.
            let mut base = 0u32;
            for i in 0..n - 1 {
                for j in i + 1..n - 1 {
                    if small & (1 << small_idx[i][j]) != 0 {
                        base |= 1 << idx[i][j];
                    }
                }
            }
            for subset in 1u32..(1 << (n - 1)) {
                let mut mask = base;
                for v in 0..n - 1 {
                    if subset & (1 << v) != 0 {
                        mask |= 1 << idx[v][n - 1];
                    }
                }
                found.insert(canonical(mask));
            }
        }
        prev_masks = found.iter().copied().collect();
        by_n.push(
            prev_masks
                .iter()
                .map(|&mask| {
                    let mut edges = Vec::new();
                    for i in 0..n {
                        for j in i + 1..n {
                            if mask & (1 << idx[i][j]) != 0 {
                                edges.push((i, j));
                            }
                        }
                    }
                    SmallGraph { n, edges }
                })
                .collect(),
        );
    }
    by_n
}

fn random_connected_graph(rng: &mut ChaCha8Rng) -> SmallGraph {
    let n = rng.random_range(2..=12);
    let density = rng.random_range(0.05..0.9);
    let mut edges = BTreeSet::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for i in 1..n {
        let parent = order[rng.random_range(0..i)];
        let (a, b) = (parent.min(order[i]), parent.max(order[i]));
        edges.insert((a, b));
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(density) {
                edges.insert((a, b));
            }
        }
    }
    SmallGraph {
        n,
        edges: edges.into_iter().collect(),
    }
}

/// Shortest paths enumerated as simple paths of increasing length until the
/// target appears; returns per-node interior counts and the total.
fn exhaustive_load(g: &SmallGraph) -> (Vec<u128>, u128) {
    let a = g.matrix();
    let mut through = vec![0u128; g.n];
    let mut total = 0u128;
    for s in 0..g.n {
        for t in 0..g.n {
            if s == t {
                continue;
            }
            for len in 1..g.n {
                let mut found: Vec<Vec<usize>> = Vec::new();
                let mut stack = vec![vec![s]];
                while let Some(path) = stack.pop() {
                    let last = *path.last().unwrap();
                    if path.len() == len + 1 {
                        if last == t {
                            found.push(path);
                        }
                        continue;
                    }
                    for w in 0..g.n {
                        if a[last][w] && !path.contains(&w) {
                            let mut next = path.clone();
                            next.push(w);
                            stack.push(next);
                        }
                    }
                }
                if !found.is_empty() {
                    total += found.len() as u128;
                    for p in &found {
                        for &v in &p[1..p.len() - 1] {
                            through[v] += 1;
                        }
                    }
                    break;
                }
            }
        }
    }
    (through, total)
}

fn floyd_closeness(g: &SmallGraph) -> Vec<f64> {
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; g.n]; g.n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(u, v) in &g.edges {
        d[u][v] = 1;
        d[v][u] = 1;
    }
    for k in 0..g.n {
        for i in 0..g.n {
            for j in 0..g.n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    (0..g.n)
        .map(|v| {
            let reach: Vec<usize> = (0..g.n)
                .filter(|&w| w != v && d[v][w] < inf)
                .map(|w| d[v][w])
                .collect();
            if reach.is_empty() {
                0.0
            } else {
                let r = reach.len() as f64;
                (r / (g.n - 1) as f64) * (r / reach.iter().sum::<usize>() as f64)
            }
        })
        .collect()
}

fn dense_eigenvector(g: &SmallGraph) -> Vec<f64> {
    let a = g.matrix();
    let m = DMatrix::<f64>::from_fn(g.n, g.n, |i, j| if a[i][j] { 1.0 } else { 0.0 });
    let eig = SymmetricEigen::new(m);
    let top = (0..g.n)
        .max_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]))
        .unwrap();
    let v = eig.eigenvectors.column(top);
    let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
    let norm = v.norm();
    v.iter().map(|x| sign * x / norm).collect()
}

#[derive(Default)]
struct CentralityTally {
    graphs: usize,
    degree_bad: usize,
    load_bad: usize,
    closeness_err: f64,
    eigen_err: f64,
    eigen_bad: usize,
}

fn check_graph(g: &SmallGraph, tally: &mut CentralityTally) {
    tally.graphs += 1;
    let cg = g.to_country_graph();
    let oracle_degree: Vec<usize> = g
        .matrix()
        .iter()
        .map(|r| r.iter().filter(|&&x| x).count())
        .collect();
    if degree_vector(&cg) != oracle_degree {
        tally.degree_bad += 1;
    }
    let (through, total) = exhaustive_load(g);
    let lc = load_counts(&cg);
    // Equal fractions compared by cross-multiplication.
    let same_load = lc.total == total
        && through
            .iter()
            .zip(&lc.through)
            .all(|(o, c)| o * lc.total == c * total);
    if !same_load {
        tally.load_bad += 1;
    }
    for (a, b) in closeness_vector(&cg).iter().zip(floyd_closeness(g)) {
        tally.closeness_err = tally.closeness_err.max((a - b).abs());
    }
    match eigenvector_vector(&cg) {
        Ok(e) => {
            for (a, b) in e.iter().zip(dense_eigenvector(g)) {
                tally.eigen_err = tally.eigen_err.max((a - b).abs());
            }
        }
        Err(GraphError::NoEdges) if g.edges.is_empty() => {}
        Err(_) => tally.eigen_bad += 1,
    }
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let graphs = connected_graphs(7);
    let counts: Vec<usize> = graphs[1..].iter().map(Vec::len).collect();
    let expected_counts = vec![1, 1, 2, 6, 21, 112, 853];
    let mut tally = CentralityTally::default();
    for g in graphs.iter().flatten() {
        check_graph(g, &mut tally);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        check_graph(&random_connected_graph(&mut rng), &mut tally);
    }
    let elapsed = start.elapsed();
    let pass = counts == expected_counts
        && tally.degree_bad == 0
        && tally.load_bad == 0
        && tally.closeness_err <= 1e-9
        && tally.eigen_err <= 1e-6
        && tally.eigen_bad == 0
        && elapsed < Duration::from_secs(120);
    verdict(
        pass,
        format!(
            "{} graphs (per-size counts {:?}), degree mismatches {}, load mismatches {}, max closeness err {:.1e}, max eigenvector err {:.1e}, eigen failures {}, {}",
            tally.graphs, counts, tally.degree_bad, tally.load_bad, tally.closeness_err, tally.eigen_err, tally.eigen_bad, secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Excluded-experiment exactness
// ---------------------------------------------------------------------------

fn subsets_of_size(n: usize, k: usize) -> Vec<u32> {
    (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == k)
        .collect()
}

/// Exact (none, all, mixture) probabilities by enumerating every destination
/// and every excluded set of the given size.
fn exact_triple(store: &PathStore, x: CountryCode, size: usize) -> [f64; 3] {
    let universe: BTreeSet<CountryCode> = store
        .records()
        .flat_map(|(_, p)| p.hops().to_vec())
        .collect();
    let mut by_target: BTreeMap<CountryCode, BTreeSet<&CountryPath>> = BTreeMap::new();
    for (_, p) in store.records() {
        if p.source() == x && p.destination() != x {
            by_target.entry(p.destination()).or_default().insert(p);
        }
    }
    let mut probs = [0.0; 3];
    for (&y, paths) in &by_target {
        let candidates: Vec<CountryCode> = universe
            .iter()
            .copied()
            .filter(|c| *c != x && *c != y)
            .collect();
        let k = size.min(candidates.len());
        let sets = subsets_of_size(candidates.len(), k);
        let mut counts = [0usize; 3];
        for &mask in &sets {
            let excluded: BTreeSet<CountryCode> = (0..candidates.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| candidates[i])
                .collect();
            let clean = paths
                .iter()
                .filter(|p| p.interior().iter().all(|c| !excluded.contains(c)))
                .count();
            let class = if clean == paths.len() {
                0
            } else if clean == 0 {
                1
            } else {
                2
            };
            counts[class] += 1;
        }
        for c in 0..3 {
            probs[c] += counts[c] as f64 / sets.len() as f64 / by_target.len() as f64;
        }
    }
    probs
}

fn five_country_store() -> PathStore {
    let countries: Vec<CountryCode> = (0..5).map(node).collect();
    let mut table = MonitorTable::new();
    for (i, &c) in countries.iter().enumerate() {
        table.insert(mid(&format!("m{i}")), c).unwrap();
    }
    let mut store = PathStore::new(DatasetKind::Geolocation, table);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (i, &x) in countries.iter().enumerate() {
        for &y in &countries {
            if x == y {
                continue;
            }
            for _ in 0..rng.random_range(1..=3) {
                let mut others: Vec<CountryCode> = countries
                    .iter()
                    .copied()
                    .filter(|c| *c != x && *c != y)
                    .collect();
                others.shuffle(&mut rng);
                let len = rng.random_range(0..=others.len());
                let hops = std::iter::once(x)
                    .chain(others[..len].iter().copied())
                    .chain(std::iter::once(y));
                store
                    .insert(
                        &mid(&format!("m{i}")),
                        normalize_country_path(hops).unwrap(),
                    )
                    .unwrap();
            }
        }
    }
    store
}

fn criterion_3() -> Verdict {
    let store = five_country_store();
    let trials = 2000;
    let mut worst_z = 0.0f64;
    let mut exact_failures = Vec::new();
    let mut comparisons = 0;
    for x in store.sources() {
        let report =
            excluded_experiment(&store, x, SizeRange::new(0, 3, 1).unwrap(), trials, 1).unwrap();
        for row in &report.rows {
            if row.none_count + row.all_count + row.mixture_count != row.trials {
                exact_failures.push(format!(
                    "{x} size {}: counts do not partition trials",
                    row.size
                ));
            }
            if row.size == 0 && row.none_ratio() != 1.0 {
                exact_failures.push(format!("{x} size 0: none_ratio {}", row.none_ratio()));
            }
            let exact = exact_triple(&store, x, row.size);
            let estimates = [row.none_ratio(), row.all_ratio(), row.mixture_trial_ratio()];
            for (p, est) in exact.iter().zip(estimates) {
                comparisons += 1;
                let sigma = (p * (1.0 - p) / trials as f64).sqrt();
                if sigma < 1e-12 {
                    if (est - p).abs() > 1e-12 {
                        exact_failures.push(format!(
                            "{x} size {}: estimate {est} for certain outcome {p}",
                            row.size
                        ));
                    }
                } else {
                    worst_z = worst_z.max((est - p).abs() / sigma);
                }
            }
        }
    }
    verdict(
        exact_failures.is_empty() && worst_z <= 3.0,
        format!(
            "{comparisons} ratio estimates at {trials} trials, max |z| {worst_z:.2} (bound 3){}",
            if exact_failures.is_empty() {
                String::new()
            } else {
                format!(", failures: {exact_failures:?}")
            }
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Determinism across runs and thread counts
// ---------------------------------------------------------------------------

fn expo(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_expo"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "expo {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn run_pipeline(
    root: &Path,
    data: &Path,
    threads: &str,
) -> Result<BTreeMap<String, Vec<u8>>, String> {
    fs::create_dir_all(root).map_err(|e| e.to_string())?;
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let geo_store = root.join("geo.store");
    let reg_store = root.join("reg.store");
    let reports = root.join("reports");
    expo(&[
        "ingest",
        "--threads",
        threads,
        "--dataset",
        "geo",
        "--geo",
        &s(&data.join("geo.tsv")),
        "--monitors",
        &s(&data.join("monitors.tsv")),
        "--out",
        &s(&geo_store),
        &s(&data.join("traces.tsv")),
    ])?;
    expo(&[
        "ingest",
        "--threads",
        threads,
        "--dataset",
        "reg",
        "--asreg",
        &s(&data.join("asreg.tsv")),
        "--monitors",
        &s(&data.join("monitors.tsv")),
        "--out",
        &s(&reg_store),
        &s(&data.join("bgp.tsv")),
    ])?;
    for cmd in [
        vec!["generalize"],
        vec!["involved"],
        vec![
            "exclude", "--source", "all", "--sizes", "0:30:5", "--trials", "300", "--seed", "42",
        ],
        vec!["centrality"],
    ] {
        let mut args: Vec<String> = cmd.iter().map(|a| a.to_string()).collect();
        args.extend([
            "--threads".into(),
            threads.into(),
            "--store".into(),
            s(&geo_store),
            "--out".into(),
            s(&reports),
        ]);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        expo(&refs)?;
    }
    let mut files = BTreeMap::new();
    for dir in [root.to_path_buf(), reports] {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_file() {
                files.insert(
                    path.file_name().unwrap().to_string_lossy().into_owned(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    Ok(files)
}

fn criterion_4() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut synth_outputs = Vec::new();
    for (i, threads) in ["1", "8"].iter().enumerate() {
        let data = tmp.path().join(format!("data{i}"));
        let s = data.to_str().unwrap();
        if let Err(e) = expo(&[
            "synth",
            "--threads",
            threads,
            "--countries",
            "40",
            "--monitors",
            "5",
            "--multipath",
            "3",
            "--seed",
            "4",
            "--out",
            s,
        ]) {
            return verdict(false, e);
        }
        let mut files = BTreeMap::new();
        for name in [
            Corpus::TRACES,
            Corpus::BGP,
            Corpus::MONITORS,
            Corpus::GEO,
            Corpus::ASREG,
            Corpus::GROUND_TRUTH,
        ] {
            files.insert(name, fs::read(data.join(name)).unwrap());
        }
        synth_outputs.push(files);
    }
    let data = tmp.path().join("data0");
    let mut runs = Vec::new();
    for (i, threads) in ["1", "8", "1", "8"].iter().enumerate() {
        match run_pipeline(&tmp.path().join(format!("run{i}")), &data, threads) {
            Ok(files) => runs.push(files),
            Err(e) => return verdict(false, e),
        }
    }
    let same = runs.windows(2).all(|w| w[0] == w[1]) && synth_outputs[0] == synth_outputs[1];
    let csvs = runs[0].keys().filter(|k| k.ends_with(".csv")).count();
    let stores = runs[0].keys().filter(|k| k.ends_with(".store")).count();
    verdict(
        same && csvs == 5 && stores == 2,
        format!("{} files per run ({csvs} CSVs, {stores} stores) identical across 4 runs at --threads 1/8; synth identical", runs[0].len()),
    )
}

// ---------------------------------------------------------------------------
// 5. Degree vs exposure on an ensemble
// ---------------------------------------------------------------------------

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn ensemble_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_countries: 30,
        n_routers_per_country: 2,
        scale_routers_by_degree: true,
        attachment_exponent: 1.5,
        attach_links: 2,
        n_monitors: 90,
        paths_per_monitor: usize::MAX,
        multipath_factor: 3,
        seed,
    }
}

fn ingest_geo(corpus: &Corpus) -> PathStore {
    let monitors = MonitorTable::parse(&corpus.monitors, ErrorPolicy::Abort)
        .unwrap()
        .0;
    let geo = GeoTable::parse(&corpus.geo, ErrorPolicy::Abort).unwrap().0;
    ingest_traces([corpus.traces.as_str()], &geo, monitors, ErrorPolicy::Abort)
        .unwrap()
        .0
}

fn ensemble() -> Vec<PathStore> {
    (1..=20)
        .map(|seed| ingest_geo(&generate_corpus(&ensemble_config(seed)).unwrap()))
        .collect()
}

fn criterion_5(stores: &[PathStore]) -> Verdict {
    let rhos: Vec<f64> = stores
        .iter()
        .map(|store| {
            let g = build_graph(store);
            let scatter = centrality_scatter(store, &g).unwrap();
            let degree: Vec<f64> = scatter.rows.iter().map(|r| r.degree as f64).collect();
            let exposure: Vec<f64> = scatter.rows.iter().map(|r| r.mean_involved).collect();
            spearman(&degree, &exposure)
        })
        .collect();
    let positive = rhos.iter().filter(|r| **r > 0.0).count();
    let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
    verdict(
        positive >= 18 && mean >= 0.3,
        format!(
            "positive in {positive}/20 corpora, ensemble mean rho {mean:.3}, min {:.3}",
            rhos.iter().cloned().fold(f64::INFINITY, f64::min)
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. Avoidance probability decays with list size
// ---------------------------------------------------------------------------

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact probability that a random excluded set of `size` touches no path
/// from `x`: the k-subsets avoiding a target's involved countries number
/// C(N - |I|, k) out of C(N, k).
fn exact_none(store: &PathStore, x: CountryCode, size: usize) -> f64 {
    let universe = store.countries();
    let targets: Vec<CountryCode> = store
        .targets_from(x)
        .map(|(y, _)| y)
        .filter(|y| *y != x)
        .collect();
    targets
        .iter()
        .map(|&y| {
            let n = universe.len() - 2;
            let k = size.min(n);
            let touched = involved(store, x, y).len();
            binomial(n - touched, k) as f64 / binomial(n, k) as f64
        })
        .sum::<f64>()
        / targets.len() as f64
}

fn criterion_6(stores: &[PathStore]) -> Verdict {
    let trials = 5000;
    let mut exact_rises = 0;
    let mut worst_mc_rise = 0.0f64;
    let mut worst_gap = 0.0f64;
    for (i, store) in stores.iter().enumerate() {
        let g = build_graph(store);
        let degree = degree_vector(&g);
        // The best-connected source (lowest code on ties).
        let hub = (0..g.node_count())
            .max_by_key(|&v| (degree[v], std::cmp::Reverse(v)))
            .unwrap();
        let x = g.nodes()[hub];
        let max_size = store.countries().len() - 2;
        let exact: Vec<f64> = (0..=max_size).map(|k| exact_none(store, x, k)).collect();
        exact_rises += exact.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
        let report = excluded_experiment(
            store,
            x,
            SizeRange::new(0, max_size, 1).unwrap(),
            trials,
            6 + i as u64,
        )
        .unwrap();
        let mc: Vec<f64> = report.rows.iter().map(|r| r.none_ratio()).collect();
        for w in mc.windows(2) {
            worst_mc_rise = worst_mc_rise.max(w[1] - w[0]);
        }
        for (a, b) in mc.iter().zip(&exact) {
            worst_gap = worst_gap.max((a - b).abs());
        }
    }
    verdict(
        exact_rises == 0 && worst_mc_rise <= 0.02,
        format!(
            "20 corpora, exact curve rises {exact_rises} times, max Monte Carlo rise {worst_mc_rise:.4} (bound 0.02), max |MC - exact| {worst_gap:.4}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Generalization grows with monitor count
// ---------------------------------------------------------------------------

fn criterion_7() -> Verdict {
    let home = node(0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pool: BTreeSet<CountryPath> = BTreeSet::new();
    while pool.len() < 200 {
        let len = rng.random_range(1..=4);
        let hops = std::iter::once(home).chain((0..len).map(|_| node(rng.random_range(1..20))));
        pool.insert(normalize_country_path(hops).unwrap());
    }
    let pool: Vec<CountryPath> = pool.into_iter().collect();
    let replicates = 200;
    let mut sums = [0.0f64; 21];
    let mut worst_oracle_err = 0.0f64;
    for _ in 0..replicates {
        let samples: Vec<BTreeSet<&CountryPath>> = (0..20)
            .map(|_| {
                rand::seq::index::sample(&mut rng, pool.len(), 50)
                    .into_iter()
                    .map(|i| &pool[i])
                    .collect()
            })
            .collect();
        for m in 2..=20 {
            let mut table = MonitorTable::new();
            for i in 0..m {
                table.insert(mid(&format!("m{i:02}")), home).unwrap();
            }
            let mut store = PathStore::new(DatasetKind::Geolocation, table);
            for (i, sample) in samples[..m].iter().enumerate() {
                for p in sample {
                    store
                        .insert(&mid(&format!("m{i:02}")), (*p).clone())
                        .unwrap();
                }
            }
            let report = generalization_report(&store);
            let got = report.rows[0].mean_ratio;
            let oracle = (0..m)
                .map(|i| {
                    let others: BTreeSet<&CountryPath> = (0..m)
                        .filter(|&j| j != i)
                        .flat_map(|j| samples[j].iter().copied())
                        .collect();
                    samples[i].iter().filter(|p| others.contains(*p)).count() as f64
                        / samples[i].len() as f64
                })
                .sum::<f64>()
                / m as f64;
            worst_oracle_err = worst_oracle_err.max((got - oracle).abs());
            sums[m] += got;
        }
    }
    let means: Vec<f64> = (2..=20).map(|m| sums[m] / replicates as f64).collect();
    let increasing = means.windows(2).all(|w| w[1] > w[0]);
    let worst_theory = (2..=20)
        .map(|m| (means[m - 2] - (1.0 - 0.75f64.powi(m as i32 - 1))).abs())
        .fold(0.0, f64::max);
    verdict(
        increasing && worst_oracle_err <= 1e-12,
        format!(
            "means {:.3} (m=2) .. {:.4} (m=20), strictly increasing: {increasing}, max oracle err {worst_oracle_err:.1e}, max |mean - (1 - 0.75^(m-1))| {worst_theory:.4}",
            means[0],
            means[18]
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. Pipeline reproduces ground truth
// ---------------------------------------------------------------------------

fn truth(corpus: &Corpus) -> BTreeSet<String> {
    corpus.ground_truth.lines().map(str::to_string).collect()
}

fn contents(store: &PathStore) -> BTreeSet<String> {
    store.records().map(|(m, p)| format!("{m}\t{p}")).collect()
}

fn criterion_8() -> Verdict {
    let mut checked = 0;
    let mut failures = Vec::new();
    for seed in 0..12u64 {
        let n_countries = 5 + (seed as usize * 7) % 40;
        let n_routers_per_country = 1 + seed as usize % 4;
        let cfg = SynthConfig {
            n_countries,
            n_routers_per_country,
            scale_routers_by_degree: seed % 3 != 0,
            attachment_exponent: [0.5, 1.0, 1.5, 2.0][seed as usize % 4],
            attach_links: 1 + seed as usize % 3,
            n_monitors: (3 + seed as usize * 5).min(n_countries * n_routers_per_country),
            paths_per_monitor: if seed % 2 == 0 { usize::MAX } else { 4 },
            multipath_factor: 1 + seed as usize % 3,
            seed,
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let expected = truth(&corpus);
        if contents(&ingest_geo(&corpus)) != expected {
            failures.push(format!("seed {seed} geo"));
        }
        let registry = AsRegistry::parse(&corpus.asreg, ErrorPolicy::Abort)
            .unwrap()
            .0;
        let monitors = MonitorTable::parse(&corpus.monitors, ErrorPolicy::Abort)
            .unwrap()
            .0;
        let (reg_store, _) = ingest_bgp(
            [corpus.bgp.as_str()],
            &registry,
            monitors,
            ErrorPolicy::Abort,
        )
        .unwrap();
        if contents(&reg_store) != expected {
            failures.push(format!("seed {seed} reg"));
        }
        let (inferred, _) = ingest_bgp(
            [corpus.bgp.as_str()],
            &registry,
            MonitorTable::new(),
            ErrorPolicy::Abort,
        )
        .unwrap();
        if contents(&inferred) != expected {
            failures.push(format!("seed {seed} reg without monitor table"));
        }
        checked += 1;
    }
    verdict(
        failures.is_empty(),
        format!(
            "{checked} corpora x 3 ingest modes, set-equal to ground truth{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failures: {failures:?}")
            }
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. Throughput and memory
// ---------------------------------------------------------------------------

fn peak_rss_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn criterion_9() -> Verdict {
    let cfg = SynthConfig {
        n_countries: 60,
        n_monitors: 200,
        multipath_factor: 3,
        seed: 9,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg).unwrap();
    let base_lines: Vec<(&str, &str)> = corpus
        .traces
        .lines()
        .map(|l| l.split_once('\t').unwrap())
        .collect();
    let target: usize = 1_000_000;
    let copies = target.div_ceil(base_lines.len());
    let mut traces = String::with_capacity(corpus.traces.len() * copies + target * 4);
    let mut monitors = String::new();
    let mut lines = 0;
    'outer: for copy in 0..copies {
        for l in corpus.monitors.lines() {
            monitors.push_str(&format!("r{copy:03}{l}\n"));
        }
        for (m, hops) in &base_lines {
            if lines == target {
                break 'outer;
            }
            traces.push_str(&format!("r{copy:03}{m}\t{hops}\n"));
            lines += 1;
        }
    }
    let geo_text = corpus.geo.clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let start = Instant::now();
    let (store, summary) = pool.install(|| {
        let table = MonitorTable::parse(&monitors, ErrorPolicy::Abort)
            .unwrap()
            .0;
        let geo = GeoTable::parse(&geo_text, ErrorPolicy::Abort).unwrap().0;
        ingest_traces([traces.as_str()], &geo, table, ErrorPolicy::Abort).unwrap()
    });
    let elapsed = start.elapsed();
    let rss = peak_rss_bytes();
    let rss_ok = rss.is_some_and(|b| b < 2 << 30);
    verdict(
        summary.parse.lines == target && elapsed < Duration::from_secs(60) && rss_ok,
        format!(
            "{} trace lines, {} stored paths, {} single-threaded, peak RSS {}",
            summary.parse.lines,
            store.len(),
            secs(elapsed),
            rss.map_or("unavailable".into(), |b| format!(
                "{:.0} MiB",
                b as f64 / (1 << 20) as f64
            ))
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |n: usize, name: &'static str, v: Verdict| {
        println!(
            "criterion {n} ({name}): {} - {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((n, name, v));
    };
    record(1, "involved-set oracle", criterion_1());
    record(2, "centrality oracles", criterion_2());
    record(3, "excluded-experiment exactness", criterion_3());
    record(4, "determinism", criterion_4());
    let stores = ensemble();
    record(5, "degree vs exposure", criterion_5(&stores));
    record(6, "avoidance decay", criterion_6(&stores));
    record(7, "generalization growth", criterion_7());
    record(8, "pipeline fidelity", criterion_8());
    record(9, "ingest throughput", criterion_9());
    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, _, v)| !v.pass)
        .map(|(n, _, _)| *n)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: FAILED criteria {failed:?}");
        std::process::exit(1);
    }
}
