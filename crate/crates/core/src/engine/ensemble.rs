//! Replica ensembles with deterministic, schedule-independent reduction.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::observe::{observables, ObservableRecord};
use super::state::ProcessState;
use super::update::rule_for;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelJson};
use crate::lattice::Site;
use crate::stats::RunningStats;
use crate::FORMAT_VERSION;

/// Replicas handled by one work item. Fixed so that the reduction tree does
/// not depend on the number of threads.
const CHUNK: u64 = 64;

/// Extra per-replica functionals recorded at every grid time.
pub trait Probe: Send + Sync {
    fn names(&self) -> Vec<String>;
    /// Appends one value per name to `out`.
    fn evaluate(&self, state: &ProcessState, out: &mut Vec<f64>);
}

/// Un-normalized products `eta_{t,x} eta_{t,x~}` for all ordered pairs of `sites`.
pub struct PairProductProbe {
    pub sites: Vec<Site>,
}

impl Probe for PairProductProbe {
    fn names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for a in &self.sites {
            for b in &self.sites {
                v.push(format!("eta{a}*eta{b}"));
            }
        }
        v
    }

    fn evaluate(&self, state: &ProcessState, out: &mut Vec<f64>) {
        let m: Vec<f64> = self.sites.iter().map(|s| state.mass(s)).collect();
        for a in &m {
            for b in &m {
                out.push(a * b);
            }
        }
    }
}

/// Un-normalized masses `eta_{t,x}` at the listed sites.
pub struct SiteMassProbe {
    pub sites: Vec<Site>,
}

impl Probe for SiteMassProbe {
    fn names(&self) -> Vec<String> {
        self.sites.iter().map(|s| format!("eta{s}")).collect()
    }

    fn evaluate(&self, state: &ProcessState, out: &mut Vec<f64>) {
        out.extend(self.sites.iter().map(|s| state.mass(s)));
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub kernel: Arc<Kernel>,
    pub initial: Vec<(Site, f64)>,
    pub t_grid: Vec<f64>,
    pub replicas: u64,
    pub seed: u64,
    pub dual: bool,
    /// Replicas exceeding this many occupied sites are dropped as truncated.
    pub max_occupied: Option<usize>,
    /// Keep every record for trajectory output.
    pub keep_records: bool,
}

impl EnsembleConfig {
    pub fn new(kernel: Arc<Kernel>, initial: Vec<(Site, f64)>, t_grid: Vec<f64>, replicas: u64, seed: u64) -> Self {
        EnsembleConfig {
            kernel,
            initial,
            t_grid,
            replicas,
            seed,
            dual: false,
            max_occupied: None,
            keep_records: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::InvalidArgument("replicas must be at least 1".into()));
        }
        if self.t_grid.is_empty() {
            return Err(Error::InvalidArgument("t_grid must be nonempty".into()));
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidArgument("t_grid entries must be finite and nonnegative".into()));
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("t_grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Mean, variance and standard error of every observable at one time.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ObservableStats {
    pub normalized_total: RunningStats,
    pub normalized_total_sq: RunningStats,
    pub rho_star: RunningStats,
    pub overlap: RunningStats,
    pub occupied: RunningStats,
    pub weighted_moment_1: Vec<RunningStats>,
    pub weighted_moment_2: Vec<RunningStats>,
    pub probes: Vec<RunningStats>,
}

impl ObservableStats {
    fn new(d: usize, probes: usize) -> Self {
        ObservableStats {
            weighted_moment_1: vec![RunningStats::new(); d],
            weighted_moment_2: vec![RunningStats::new(); d * d],
            probes: vec![RunningStats::new(); probes],
            ..Default::default()
        }
    }

    fn push(&mut self, r: &ObservableRecord, probes: &[f64]) {
        self.normalized_total.push(r.normalized_total);
        self.normalized_total_sq.push(r.normalized_total * r.normalized_total);
        self.rho_star.push(r.rho_star);
        self.overlap.push(r.overlap);
        self.occupied.push(r.occupied as f64);
        for (s, v) in self.weighted_moment_1.iter_mut().zip(&r.weighted_moment_1) {
            s.push(*v);
        }
        for (s, v) in self.weighted_moment_2.iter_mut().zip(&r.weighted_moment_2) {
            s.push(*v);
        }
        for (s, v) in self.probes.iter_mut().zip(probes) {
            s.push(*v);
        }
    }

    fn merge(&mut self, o: &ObservableStats) {
        self.normalized_total.merge(&o.normalized_total);
        self.normalized_total_sq.merge(&o.normalized_total_sq);
        self.rho_star.merge(&o.rho_star);
        self.overlap.merge(&o.overlap);
        self.occupied.merge(&o.occupied);
        let pairs = self
            .weighted_moment_1
            .iter_mut()
            .zip(&o.weighted_moment_1)
            .chain(self.weighted_moment_2.iter_mut().zip(&o.weighted_moment_2))
            .chain(self.probes.iter_mut().zip(&o.probes));
        for (a, b) in pairs {
            a.merge(b);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeSummary {
    pub t: f64,
    pub all: ObservableStats,
    /// Replicas with `|eta_t| > 0` at this time.
    pub survivors: ObservableStats,
    pub survival_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleMetadata {
    pub format_version: &'static str,
    pub kernel: KernelJson,
    pub initial: Vec<(Site, f64)>,
    pub seed: u64,
    pub dual: bool,
    pub update_rule: &'static str,
    pub replica_streams: &'static str,
    pub conditioning: &'static str,
    pub max_occupied: Option<usize>,
    pub probe_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub t_grid: Vec<f64>,
    pub replicas: u64,
    /// Replicas that hit the occupied-site cap; excluded from all statistics.
    pub truncated: u64,
    pub times: Vec<TimeSummary>,
    pub metadata: EnsembleMetadata,
}

impl EnsembleSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Records of one replica, in grid order.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaRecords {
    pub replica: u64,
    pub records: Vec<ObservableRecord>,
}

#[derive(Clone, Debug)]
pub struct EnsembleOutput {
    pub summary: EnsembleSummary,
    pub records: Vec<ReplicaRecords>,
}

struct Partial {
    times: Vec<(ObservableStats, ObservableStats, u64, u64)>,
    truncated: u64,
    records: Vec<ReplicaRecords>,
}

fn run_chunk(cfg: &EnsembleConfig, probes: &[&dyn Probe], nprobe: usize, range: std::ops::Range<u64>) -> Result<Partial> {
    let d = cfg.kernel.dim();
    let rule = rule_for(cfg.dual);
    let mut part = Partial {
        times: (0..cfg.t_grid.len())
            .map(|_| (ObservableStats::new(d, nprobe), ObservableStats::new(d, nprobe), 0, 0))
            .collect(),
        truncated: 0,
        records: Vec::new(),
    };
    let mut values = Vec::with_capacity(nprobe);
    let mut rows: Vec<(ObservableRecord, Vec<f64>)> = Vec::with_capacity(cfg.t_grid.len());
    for r in range {
        let mut state = ProcessState::with_stream(cfg.kernel.clone(), &cfg.initial, rule.clone(), cfg.seed, r)?;
        state.max_occupied = cfg.max_occupied;
        rows.clear();
        for &t in &cfg.t_grid {
            state.advance_to(t)?;
            if state.is_truncated() {
                break;
            }
            values.clear();
            for p in probes {
                p.evaluate(&state, &mut values);
            }
            rows.push((observables(&state), values.clone()));
        }
        if state.is_truncated() {
            part.truncated += 1;
            continue;
        }
        for ((rec, vals), slot) in rows.iter().zip(part.times.iter_mut()) {
            slot.0.push(rec, vals);
            slot.3 += 1;
            if !rec.extinct {
                slot.1.push(rec, vals);
                slot.2 += 1;
            }
        }
        if cfg.keep_records {
            part.records.push(ReplicaRecords {
                replica: r,
                records: rows.iter().map(|(rec, _)| rec.clone()).collect(),
            });
        }
    }
    Ok(part)
}

/// Runs `cfg.replicas` independent trajectories; replica `r` uses random
/// stream `(seed, r)`.
pub fn run_ensemble_with(cfg: &EnsembleConfig, probes: &[&dyn Probe]) -> Result<EnsembleOutput> {
    cfg.validate()?;
    let names: Vec<String> = probes.iter().flat_map(|p| p.names()).collect();
    let nprobe = names.len();
    let chunks = cfg.replicas.div_ceil(CHUNK);
    let parts: Vec<Result<Partial>> = (0..chunks)
        .into_par_iter()
        .map(|c| run_chunk(cfg, probes, nprobe, c * CHUNK..((c + 1) * CHUNK).min(cfg.replicas)))
        .collect();
    let d = cfg.kernel.dim();
    let mut acc: Vec<(ObservableStats, ObservableStats, u64, u64)> = (0..cfg.t_grid.len())
        .map(|_| (ObservableStats::new(d, nprobe), ObservableStats::new(d, nprobe), 0, 0))
        .collect();
    let mut truncated = 0;
    let mut records = Vec::new();
    for part in parts {
        let part = part?;
        truncated += part.truncated;
        records.extend(part.records);
        for (a, p) in acc.iter_mut().zip(&part.times) {
            a.0.merge(&p.0);
            a.1.merge(&p.1);
            a.2 += p.2;
            a.3 += p.3;
        }
    }
    let times = cfg
        .t_grid
        .iter()
        .zip(acc)
        .map(|(&t, (all, survivors, nsurv, n))| TimeSummary {
            t,
            all,
            survivors,
            survival_fraction: if n == 0 { 0.0 } else { nsurv as f64 / n as f64 },
        })
        .collect();
    let summary = EnsembleSummary {
        t_grid: cfg.t_grid.clone(),
        replicas: cfg.replicas,
        truncated,
        times,
        metadata: EnsembleMetadata {
            format_version: FORMAT_VERSION,
            kernel: KernelJson::from(cfg.kernel.as_ref()),
            initial: cfg.initial.clone(),
            seed: cfg.seed,
            dual: cfg.dual,
            update_rule: rule_for(cfg.dual).name(),
            replica_streams: "chacha8(seed, stream = replica index)",
            conditioning: "survivors: |eta_t| > 0 at the evaluation time (finite-time proxy)",
            max_occupied: cfg.max_occupied,
            probe_names: names,
        },
    };
    Ok(EnsembleOutput { summary, records })
}

/// Ensemble without extra probes.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleSummary> {
    Ok(run_ensemble_with(cfg, &[])?.summary)
}

/// Writes trajectory records as CSV with columns
/// `replica,t,normalized_total,rho_star,overlap,occupied,extinct,m1_*,m2_**`.
pub fn write_trajectory_csv<W: Write>(out: W, dim: usize, replicas: &[ReplicaRecords]) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidArgument(format!("writing trajectory CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["replica", "t", "normalized_total", "rho_star", "overlap", "occupied", "extinct"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=dim).map(|i| format!("m1_{i}")));
    for i in 1..=dim {
        header.extend((1..=dim).map(|j| format!("m2_{i}{j}")));
    }
    w.write_record(&header).map_err(io)?;
    for rep in replicas {
        for r in &rep.records {
            let mut row = vec![
                rep.replica.to_string(),
                r.t.to_string(),
                r.normalized_total.to_string(),
                r.rho_star.to_string(),
                r.overlap.to_string(),
                r.occupied.to_string(),
                r.extinct.to_string(),
            ];
            row.extend(r.weighted_moment_1.iter().map(|v| v.to_string()));
            row.extend(r.weighted_moment_2.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("writing trajectory CSV: {e}")))?;
    Ok(())
}
