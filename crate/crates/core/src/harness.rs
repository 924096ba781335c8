//! Seeded Monte Carlo engine: one trial runs the full pipeline (placement,
//! caching, requests, links, conflict graph, the three schedulers and the
//! cluster accounting). On top of it sit estimation, resumable sweeps,
//! log-log fits and the collaboration-distance search.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::caching::{assign_centralized_topk, assign_random_zipf, CacheAssignment, EPSILON_MAX};
use crate::error::{invalid_param, invalid_range, Error, Result};
use crate::network::{place_nodes, ClusterGrid, ClusterState, NeighborTable, Placement, SpatialIndex};
use crate::popularity::ZipfLaw;
use crate::scheduling::{
    cluster_schedule, conflict_graph_from_table, exact_mis, good_clusters, greedy_mis,
    is_node_disjoint, ConflictGraph, GoodCluster, DEFAULT_EXACT_CUTOFF, MAX_EXACT_CUTOFF,
};
use crate::theory::{predicted_r_opt, Regime};
use crate::traffic::{links_from_table, sample_requests, self_served, PotentialLink, RequestVector};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "D2DCACHE_WORKERS";

/// Clusters one active cluster can disable, plus itself.
pub const BLOCKING_FACTOR: usize = 17;

// ---------------------------------------------------------------------------
// Configuration

/// Library size: a number, or the `"3lnn"` schedule `max(8, ⌈3 ln n⌉)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LibrarySize {
    Fixed(usize),
    Schedule(MSchedule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MSchedule {
    #[serde(rename = "3lnn")]
    ThreeLnN,
}

impl LibrarySize {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            LibrarySize::Fixed(m) => m,
            LibrarySize::Schedule(MSchedule::ThreeLnN) => three_ln_n(n),
        }
    }
}

pub fn three_ln_n(n: usize) -> usize {
    ((3.0 * (n as f64).ln()).ceil() as usize).max(8)
}

/// How caches are filled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Policy {
    /// Every node draws its file independently from Zipf(`gamma_c`).
    Zipf { gamma_c: f64 },
    /// Each cluster's members hold files `1, 2, …` in node order.
    Topk,
}

impl Policy {
    pub fn gamma_c(&self) -> Option<f64> {
        match self {
            Policy::Zipf { gamma_c } => Some(*gamma_c),
            Policy::Topk => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Zipf { .. } => "zipf",
            Policy::Topk => "topk",
        }
    }
}

/// Parameters of the regime-derived radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoRadius {
    #[serde(default = "default_c")]
    pub c: f64,
    /// Only used when `gamma_r < 1`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_c() -> f64 {
    1.5
}

fn default_epsilon() -> f64 {
    0.05
}

impl Default for AutoRadius {
    fn default() -> Self {
        Self {
            c: default_c(),
            epsilon: default_epsilon(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoWord {
    #[serde(rename = "auto")]
    Auto,
}

/// Collaboration distance: a number, `"auto"`, or `{"auto": {"c": …, "epsilon": …}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Radius {
    Fixed(f64),
    Auto(AutoWord),
    Tuned { auto: AutoRadius },
}

impl Radius {
    pub fn auto() -> Self {
        Radius::Auto(AutoWord::Auto)
    }
}

/// One simulation point as written in a descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub m: LibrarySize,
    pub gamma_r: f64,
    pub policy: Policy,
    pub r: Radius,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_cutoff")]
    pub exact_cutoff: usize,
}

fn default_trials() -> usize {
    100
}

fn default_cutoff() -> usize {
    DEFAULT_EXACT_CUTOFF
}

/// A configuration with every derived quantity pinned to a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub n: usize,
    pub m: usize,
    pub gamma_r: f64,
    pub policy: Policy,
    pub r: f64,
    pub seed: u64,
    pub trials: usize,
    pub exact_cutoff: usize,
}

/// A resolved configuration and any reasons it sits outside the regime where
/// the asymptotic forms are meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub config: ResolvedConfig,
    pub warnings: Vec<String>,
}

fn finite_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid_param(format!("{name} must be finite and >= 0, got {v}")))
    }
}

impl SimConfig {
    pub fn resolve(&self) -> Result<Resolution> {
        if self.n < 2 {
            return Err(invalid_param(format!("n must be at least 2, got {}", self.n)));
        }
        let m = self.m.resolve(self.n);
        if m < 1 {
            return Err(invalid_param("m must be at least 1"));
        }
        finite_nonneg("gamma_r", self.gamma_r)?;
        if let Some(gc) = self.policy.gamma_c() {
            finite_nonneg("gamma_c", gc)?;
        }
        if self.trials < 1 {
            return Err(invalid_param("trials must be at least 1"));
        }
        if self.exact_cutoff > MAX_EXACT_CUTOFF {
            return Err(invalid_param(format!(
                "exact_cutoff is at most {MAX_EXACT_CUTOFF}, got {}",
                self.exact_cutoff
            )));
        }
        let mut warnings = Vec::new();
        let r = match self.r {
            Radius::Fixed(r) => r,
            Radius::Auto(_) => auto_radius(self.gamma_r, self.n, m, AutoRadius::default(), &mut warnings)?,
            Radius::Tuned { auto } => auto_radius(self.gamma_r, self.n, m, auto, &mut warnings)?,
        };
        if !(r > 0.0 && r <= std::f64::consts::SQRT_2) {
            return Err(invalid_range(format!("r must lie in (0, √2], got {r}")));
        }
        Ok(Resolution {
            config: ResolvedConfig {
                n: self.n,
                m,
                gamma_r: self.gamma_r,
                policy: self.policy,
                r,
                seed: self.seed,
                trials: self.trials,
                exact_cutoff: self.exact_cutoff,
            },
            warnings,
        })
    }

    pub fn with_radius(mut self, r: f64) -> Self {
        self.r = Radius::Fixed(r);
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }
}

fn auto_radius(gamma_r: f64, n: usize, m: usize, auto: AutoRadius, warnings: &mut Vec<String>) -> Result<f64> {
    let regime = Regime::classify(gamma_r, auto.epsilon)?;
    if matches!(regime, Regime::LowReuse { .. }) && !(auto.epsilon > 0.0 && auto.epsilon < EPSILON_MAX) {
        warnings.push(format!("epsilon {} outside (0, 1/6)", auto.epsilon));
    }
    let p = predicted_r_opt(regime, n, m, auto.c)?;
    if p.flagged {
        warnings.push(format!("ln ln m <= 1 at m = {m}; the critical form is unreliable"));
    }
    if p.clamped {
        warnings.push("predicted radius exceeds √2 and was clamped".to_string());
    }
    Ok(p.value)
}

/// Fields that shape a realization; trials and the solver cutoff do not.
#[derive(Serialize)]
struct RealizationKey {
    n: usize,
    m: usize,
    gamma_r: f64,
    policy: Policy,
    r: f64,
    seed: u64,
}

impl ResolvedConfig {
    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Seed of trial `index`. Independent of `trials`, so a longer run extends
    /// a shorter one.
    pub fn trial_seed(&self, index: u64) -> [u8; 32] {
        let key = RealizationKey {
            n: self.n,
            m: self.m,
            gamma_r: self.gamma_r,
            policy: self.policy,
            r: self.r,
            seed: self.seed,
        };
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&key).expect("key serializes"));
        h.update(self.seed.to_le_bytes());
        h.update(index.to_le_bytes());
        h.finalize().into()
    }
}

// ---------------------------------------------------------------------------
// One trial

/// Everything drawn for one trial, before scheduling.
#[derive(Debug, Clone)]
pub struct Realization {
    pub placement: Placement,
    pub caches: CacheAssignment,
    pub requests: RequestVector,
    pub served: Vec<usize>,
    pub links: Vec<PotentialLink>,
    pub graph: ConflictGraph,
    pub grid: ClusterGrid,
    pub good: Vec<GoodCluster>,
    pub occupancy: OccupancySummary,
}

/// Cluster occupancy histogram, collapsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancySummary {
    pub clusters: usize,
    pub empty: usize,
    pub single: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    pub potential: usize,
    pub self_served: usize,
    pub l_greedy: usize,
    /// Absent when the conflict graph exceeds the cutoff.
    pub l_exact: Option<usize>,
    pub l_cluster: usize,
    pub good: usize,
    pub occupancy: OccupancySummary,
}

pub fn realize(cfg: &ResolvedConfig, trial: u64) -> Result<Realization> {
    let mut rng = ChaCha8Rng::from_seed(cfg.trial_seed(trial));
    let placement = place_nodes(cfg.n, &mut rng)?;
    let grid = ClusterGrid::new(cfg.r)?;
    let partition = grid.partition(&placement);
    let caches = match cfg.policy {
        Policy::Zipf { gamma_c } => assign_random_zipf(cfg.n, cfg.m, gamma_c, &mut rng)?,
        Policy::Topk => assign_centralized_topk(&partition, cfg.m)?,
    };
    let requests = sample_requests(cfg.n, &ZipfLaw::new(cfg.gamma_r, cfg.m)?, &mut rng);
    let served = self_served(&caches, &requests)?;

    let index = SpatialIndex::new(&placement, cfg.r)?;
    let table = NeighborTable::build(&index);
    let links = links_from_table(&table, &caches, &requests)?;
    let graph = conflict_graph_from_table(&links, &table);

    let mut occupancy = OccupancySummary {
        clusters: partition.cells.len(),
        empty: 0,
        single: 0,
        max: 0,
    };
    let mut crowded = Vec::new();
    for (id, members) in partition.cells.into_iter().enumerate() {
        occupancy.max = occupancy.max.max(members.len());
        match members.len() {
            0 => occupancy.empty += 1,
            1 => occupancy.single += 1,
            // A good cluster needs two members; skip building the rest.
            _ => {
                let files = members.iter().map(|&i| caches.file(i)).collect();
                crowded.push(ClusterState { id, members, files });
            }
        }
    }
    let good = good_clusters(&crowded, &requests, 1);
    Ok(Realization {
        placement,
        caches,
        requests,
        served,
        links,
        graph,
        grid,
        good,
        occupancy,
    })
}

fn violated(msg: String) -> Error {
    Error::InvariantViolated(msg)
}

impl Realization {
    /// Checks every potential link against its definition.
    pub fn check_links(&self, r: f64) -> Result<()> {
        let mut is_served = vec![false; self.placement.len()];
        for &i in &self.served {
            is_served[i] = true;
        }
        for l in &self.links {
            let ok = l.tx != l.rx
                && self.placement.pos(l.tx).within(self.placement.pos(l.rx), r)
                && self.caches.file(l.tx) == l.file
                && self.requests.file(l.rx) == l.file
                && self.caches.file(l.rx) != l.file
                && !is_served[l.rx];
            if !ok {
                return Err(violated(format!("bad potential link {l:?}")));
            }
        }
        Ok(())
    }

    fn check_schedule(&self, name: &str, set: &[usize]) -> Result<()> {
        if !self.graph.is_independent(set) || !is_node_disjoint(&self.links, set) {
            return Err(violated(format!("{name} schedule is not independent")));
        }
        Ok(())
    }

    /// Runs the three schedulers and verifies the per-trial invariants.
    pub fn schedule(&self, r: f64, exact_cutoff: usize) -> Result<TrialResult> {
        self.check_links(r)?;
        let n = self.placement.len();

        let greedy = greedy_mis(&self.graph);
        self.check_schedule("greedy", &greedy.links)?;

        let exact = match exact_mis(&self.graph, exact_cutoff) {
            Ok(s) => {
                self.check_schedule("exact", &s.links)?;
                Some(s.links.len())
            }
            Err(Error::TooLarge { .. }) => None,
            Err(e) => return Err(e),
        };

        let kept = cluster_schedule(&self.grid, &self.good, &self.placement, r);
        let mut as_links = Vec::with_capacity(kept.len());
        for &i in &kept.links {
            let w = self.good[i].witness;
            let idx = self
                .links
                .binary_search_by(|l| (l.rx, l.tx).cmp(&(w.rx, w.tx)))
                .map_err(|_| violated(format!("witness {w:?} is not a potential link")))?;
            as_links.push(idx);
        }
        as_links.sort_unstable();
        self.check_schedule("cluster", &as_links)?;

        let result = TrialResult {
            potential: self.links.len(),
            self_served: self.served.len(),
            l_greedy: greedy.links.len(),
            l_exact: exact,
            l_cluster: as_links.len(),
            good: self.good.len(),
            occupancy: self.occupancy,
        };
        result.check(n)?;
        Ok(result)
    }
}

impl TrialResult {
    /// Count invariants that hold on every realization.
    pub fn check(&self, n: usize) -> Result<()> {
        if self.l_cluster < self.good.div_ceil(BLOCKING_FACTOR) {
            return Err(violated(format!(
                "{} cluster links for {} good clusters",
                self.l_cluster, self.good
            )));
        }
        if let Some(e) = self.l_exact {
            if e < self.l_greedy || e < self.l_cluster {
                return Err(violated(format!(
                    "exact {e} below greedy {} or cluster {}",
                    self.l_greedy, self.l_cluster
                )));
            }
        }
        let counts = [self.self_served, self.l_greedy, self.l_cluster, self.good];
        if counts.iter().chain(self.l_exact.iter()).any(|&c| c > n) {
            return Err(violated(format!("a count exceeds n = {n}: {self:?}")));
        }
        Ok(())
    }
}

/// One full trial. Deterministic in `(cfg, trial)`.
pub fn run_trial(cfg: &ResolvedConfig, trial: u64) -> Result<TrialResult> {
    realize(cfg, trial)?.schedule(cfg.r, cfg.exact_cutoff)
}

// ---------------------------------------------------------------------------
// Estimation

/// Worker count from the environment, if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .map(Some)
            .ok_or_else(|| invalid_param(format!("{WORKERS_ENV} must be a positive integer, got {s:?}"))),
        Err(_) => Ok(None),
    }
}

fn build_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    b.build().map_err(|e| invalid_param(format!("thread pool: {e}")))
}

fn env_pool() -> Result<&'static rayon::ThreadPool> {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    if let Some(p) = POOL.get() {
        return Ok(p);
    }
    let pool = build_pool(workers_from_env()?)?;
    Ok(POOL.get_or_init(|| pool))
}

fn trials_in(pool: &rayon::ThreadPool, cfg: &ResolvedConfig) -> Result<Vec<TrialResult>> {
    pool.install(|| {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| run_trial(cfg, t))
            .collect()
    })
}

/// All trials of `cfg`, in trial order, on the environment-sized pool.
pub fn run_trials(cfg: &ResolvedConfig) -> Result<Vec<TrialResult>> {
    trials_in(env_pool()?, cfg)
}

/// As [`run_trials`] with an explicit worker count.
pub fn run_trials_with(cfg: &ResolvedConfig, workers: usize) -> Result<Vec<TrialResult>> {
    trials_in(&build_pool(Some(workers.max(1)))?, cfg)
}

/// Sample mean and its standard error (absent below two samples).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: Option<f64>,
}

pub fn summarize(values: &[f64]) -> Stat {
    let k = values.len();
    if k == 0 {
        return Stat { mean: f64::NAN, se: None };
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let se = (k >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (k - 1) as f64 / k as f64).sqrt()
    });
    Stat { mean, se }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub trials: usize,
    pub potential: Stat,
    pub self_served: Stat,
    pub l_greedy: Stat,
    /// Present only when every trial was solved exactly.
    pub l_exact: Option<Stat>,
    pub l_cluster: Stat,
    pub good: Stat,
}

impl Estimate {
    /// Aggregates trial results; the order of `results` is the trial order.
    pub fn from_trials(results: &[TrialResult]) -> Self {
        let col = |f: &dyn Fn(&TrialResult) -> usize| -> Stat {
            summarize(&results.iter().map(|t| f(t) as f64).collect::<Vec<_>>())
        };
        let exact: Option<Vec<f64>> = results.iter().map(|t| t.l_exact.map(|v| v as f64)).collect();
        Self {
            trials: results.len(),
            potential: col(&|t| t.potential),
            self_served: col(&|t| t.self_served),
            l_greedy: col(&|t| t.l_greedy),
            l_exact: exact.filter(|v| !v.is_empty()).map(|v| summarize(&v)),
            l_cluster: col(&|t| t.l_cluster),
            good: col(&|t| t.good),
        }
    }
}

pub fn estimate(cfg: &ResolvedConfig) -> Result<Estimate> {
    Ok(Estimate::from_trials(&run_trials(cfg)?))
}

// ---------------------------------------------------------------------------
// Sweep tables

pub const CSV_HEADER: [&str; 20] = [
    "config_digest",
    "n",
    "m",
    "gamma_r",
    "gamma_c",
    "policy",
    "r",
    "trials",
    "seed",
    "potential_mean",
    "potential_se",
    "self_served_mean",
    "L_greedy_mean",
    "L_greedy_se",
    "L_exact_mean",
    "L_exact_se",
    "L_cluster_mean",
    "L_cluster_se",
    "G_mean",
    "G_se",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config_digest: String,
    pub n: usize,
    pub m: usize,
    pub gamma_r: f64,
    pub gamma_c: Option<f64>,
    pub policy: String,
    pub r: f64,
    pub trials: usize,
    pub seed: u64,
    pub potential_mean: f64,
    pub potential_se: Option<f64>,
    pub self_served_mean: f64,
    #[serde(rename = "L_greedy_mean")]
    pub l_greedy_mean: f64,
    #[serde(rename = "L_greedy_se")]
    pub l_greedy_se: Option<f64>,
    #[serde(rename = "L_exact_mean")]
    pub l_exact_mean: Option<f64>,
    #[serde(rename = "L_exact_se")]
    pub l_exact_se: Option<f64>,
    #[serde(rename = "L_cluster_mean")]
    pub l_cluster_mean: f64,
    #[serde(rename = "L_cluster_se")]
    pub l_cluster_se: Option<f64>,
    #[serde(rename = "G_mean")]
    pub g_mean: f64,
    #[serde(rename = "G_se")]
    pub g_se: Option<f64>,
}

impl SweepRow {
    pub fn new(cfg: &ResolvedConfig, est: &Estimate) -> Self {
        Self {
            config_digest: cfg.digest(),
            n: cfg.n,
            m: cfg.m,
            gamma_r: cfg.gamma_r,
            gamma_c: cfg.policy.gamma_c(),
            policy: cfg.policy.name().to_string(),
            r: cfg.r,
            trials: est.trials,
            seed: cfg.seed,
            potential_mean: est.potential.mean,
            potential_se: est.potential.se,
            self_served_mean: est.self_served.mean,
            l_greedy_mean: est.l_greedy.mean,
            l_greedy_se: est.l_greedy.se,
            l_exact_mean: est.l_exact.map(|s| s.mean),
            l_exact_se: est.l_exact.and_then(|s| s.se),
            l_cluster_mean: est.l_cluster.mean,
            l_cluster_se: est.l_cluster.se,
            g_mean: est.good.mean,
            g_se: est.good.se,
        }
    }

    /// Numeric column by its CSV name. `Ok(None)` for an empty cell.
    pub fn field(&self, name: &str) -> Result<Option<f64>> {
        Ok(match name {
            "n" => Some(self.n as f64),
            "m" => Some(self.m as f64),
            "gamma_r" => Some(self.gamma_r),
            "gamma_c" => self.gamma_c,
            "r" => Some(self.r),
            "trials" => Some(self.trials as f64),
            "potential_mean" => Some(self.potential_mean),
            "potential_se" => self.potential_se,
            "self_served_mean" => Some(self.self_served_mean),
            "L_greedy_mean" => Some(self.l_greedy_mean),
            "L_greedy_se" => self.l_greedy_se,
            "L_exact_mean" => self.l_exact_mean,
            "L_exact_se" => self.l_exact_se,
            "L_cluster_mean" => Some(self.l_cluster_mean),
            "L_cluster_se" => self.l_cluster_se,
            "G_mean" => Some(self.g_mean),
            "G_se" => self.g_se,
            other => return Err(invalid_param(format!("unknown numeric column {other:?}"))),
        })
    }
}

/// Rows keyed uniquely by config digest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(CSV_HEADER)?;
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(r);
        let header: Vec<String> = input.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(Error::InvalidData(format!("unexpected CSV header {header:?}")));
        }
        let rows = input.deserialize().collect::<Result<Vec<SweepRow>, _>>()?;
        let table = Self { rows };
        table.check_unique()?;
        Ok(table)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        // Write then rename so an interrupted run never leaves a torn file.
        let tmp = path.with_extension("csv.partial");
        self.write_csv(std::fs::File::create(&tmp)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for row in &self.rows {
            if !seen.insert(row.config_digest.as_str()) {
                return Err(Error::DuplicateDigest(row.config_digest.clone()));
            }
        }
        Ok(())
    }

    /// `(x, y)` pairs of two numeric columns.
    pub fn columns(&self, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut xs = Vec::with_capacity(self.rows.len());
        let mut ys = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let missing = |c: &str| Error::InvalidData(format!("row {} has no {c}", row.config_digest));
            xs.push(row.field(x)?.ok_or_else(|| missing(x))?);
            ys.push(row.field(y)?.ok_or_else(|| missing(y))?);
        }
        Ok((xs, ys))
    }
}

/// Runs every config of `grid` not already present in `done`, calling
/// `progress` with the completed rows after each new one. Rows come back in
/// grid order, stably sorted by `n`.
pub fn sweep_resume(
    grid: &[SimConfig],
    done: &SweepTable,
    mut progress: impl FnMut(&SweepTable) -> Result<()>,
) -> Result<SweepTable> {
    if grid.is_empty() {
        return Err(invalid_param("empty sweep grid"));
    }
    let mut resolved = Vec::with_capacity(grid.len());
    let mut digests = HashSet::new();
    for cfg in grid {
        let c = cfg.resolve()?.config;
        let d = c.digest();
        if !digests.insert(d.clone()) {
            return Err(Error::DuplicateDigest(d));
        }
        resolved.push((c, d));
    }
    done.check_unique()?;
    let mut have: HashMap<String, SweepRow> = done
        .rows
        .iter()
        .filter(|row| digests.contains(&row.config_digest))
        .map(|row| (row.config_digest.clone(), row.clone()))
        .collect();

    let ordered = |have: &HashMap<String, SweepRow>| {
        let mut rows: Vec<SweepRow> = resolved.iter().filter_map(|(_, d)| have.get(d).cloned()).collect();
        rows.sort_by_key(|row| row.n);
        SweepTable { rows }
    };
    for (cfg, d) in &resolved {
        if have.contains_key(d) {
            continue;
        }
        let row = SweepRow::new(cfg, &estimate(cfg)?);
        have.insert(d.clone(), row);
        progress(&ordered(&have))?;
    }
    Ok(ordered(&have))
}

pub fn sweep(grid: &[SimConfig]) -> Result<SweepTable> {
    sweep_resume(grid, &SweepTable::default(), |_| Ok(()))
}

// ---------------------------------------------------------------------------
// Fitting

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub points: usize,
}

pub fn fit_log_log(xs: &[f64], ys: &[f64]) -> Result<Fit> {
    if xs.len() != ys.len() {
        return Err(invalid_param("x and y differ in length"));
    }
    let k = xs.len();
    if k < 3 {
        return Err(Error::InvalidData(format!("need at least 3 points, got {k}")));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidData(format!("log fit needs positive values, got {v}")));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let kf = k as f64;
    let mx = lx.iter().sum::<f64>() / kf;
    let my = ly.iter().sum::<f64>() / kf;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidData("all x values are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(Fit {
        slope,
        intercept,
        slope_se: (ssr / (kf - 2.0) / sxx).sqrt(),
        points: k,
    })
}

pub fn fit_exponent(table: &SweepTable, x: &str, y: &str) -> Result<Fit> {
    let (xs, ys) = table.columns(x, y)?;
    fit_log_log(&xs, &ys)
}

// ---------------------------------------------------------------------------
// Collaboration-distance search

/// Geometric grid over `[lo, hi]` for [`optimize_r`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSearch {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub trials: usize,
    /// Stop once the mean falls below this fraction of the best so far while
    /// still declining. The link graph grows like `r⁴`, so points far past the
    /// peak are both useless and expensive. `None` evaluates every point.
    pub prune_below: Option<f64>,
}

impl RSearch {
    pub fn new(lo: f64, hi: f64, points: usize, trials: usize) -> Self {
        Self {
            lo,
            hi,
            points,
            trials,
            prune_below: Some(0.6),
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.lo > 0.0 && self.lo <= self.hi && self.hi <= std::f64::consts::SQRT_2) {
            return Err(invalid_range(format!(
                "window must satisfy 0 < lo <= hi <= √2, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.points < 1 {
            return Err(invalid_param("need at least one grid point"));
        }
        if self.lo == self.hi || self.points == 1 {
            return Ok(vec![self.lo]);
        }
        let last = self.points - 1;
        let ratio = (self.hi / self.lo).ln();
        Ok((0..self.points)
            .map(|k| if k == last { self.hi } else { self.lo * (ratio * k as f64 / last as f64).exp() })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub r: f64,
    /// `None` for points skipped by pruning.
    pub estimate: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RProfile {
    pub best_r: f64,
    pub best_index: usize,
    pub best: Stat,
    /// The maximum sits at either end of the window.
    pub boundary: bool,
    pub points: Vec<ProfilePoint>,
}

/// Maximizes estimated `E[L_greedy]` over the search grid; ties go to the
/// smaller radius. The radius in `cfg` is ignored.
pub fn optimize_r(cfg: &SimConfig, search: &RSearch) -> Result<RProfile> {
    let radii = search.grid()?;
    let mut points: Vec<ProfilePoint> = radii.iter().map(|&r| ProfilePoint { r, estimate: None }).collect();
    let mut best: Option<(usize, Stat)> = None;
    let mut prev = f64::NEG_INFINITY;
    for (k, &r) in radii.iter().enumerate() {
        let c = cfg.with_radius(r).with_trials(search.trials).resolve()?.config;
        let est = estimate(&c)?;
        let mean = est.l_greedy.mean;
        points[k].estimate = Some(est);
        if best.is_none_or(|(_, b)| mean > b.mean) {
            best = Some((k, est.l_greedy));
        }
        let top = best.map_or(mean, |(_, b)| b.mean);
        if let Some(f) = search.prune_below {
            if mean < prev && mean < f * top {
                break;
            }
        }
        prev = mean;
    }
    let (best_index, best) = best.expect("grid is non-empty");
    Ok(RProfile {
        best_r: radii[best_index],
        best_index,
        best,
        boundary: radii.len() > 1 && (best_index == 0 || best_index == radii.len() - 1),
        points,
    })
}
