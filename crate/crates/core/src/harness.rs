//! Seeded episodes, batches and report files.
//!
//! A trial draws its prior, target, start cell, sensor noise and planner
//! randomness from separate streams derived from `(master_seed, trial_index)`,
//! so results do not depend on scheduling or on the number of workers.
//!
//! Planning wall time is recorded but kept out of everything that must be
//! reproducible: `results.csv` holds only seeded outcomes and timings go to
//! `timings.csv` and `summary.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::gridworld::{generate_prior, sample_target, step, AgentState, BeliefMap, Cell, GridSpec, Heading, PriorConfig};
use crate::planners::{Planner, PlannerConfig, PlannerKind};
use crate::rng::{trial_rng, Stream};
use crate::roi::{RoiSet, DEFAULT_THRESHOLD_FRACTION};
use crate::sensing::{apply_exact_posterior, sample_observation, FovMask};

/// Where a trial's prior comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSource {
    /// Fresh Gaussian mixture per trial. The config's own `rng_seed` is
    /// replaced by one drawn from the trial's prior stream.
    Random(PriorConfig),
    /// The same fixed map for every trial.
    Map(Arc<BeliefMap>),
}

/// ROI threshold τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Fraction of the prior's maximum cell mass.
    Fraction(f64),
    Absolute(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Fraction(DEFAULT_THRESHOLD_FRACTION)
    }
}

impl Threshold {
    pub fn resolve(self, prior: &BeliefMap) -> f64 {
        match self {
            Threshold::Fraction(f) => f * prior.max_mass(),
            Threshold::Absolute(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    /// Built-in mask name (`point`, `donut`, `forward`) or fixture path.
    pub mask: String,
    pub p_tp: f64,
    pub p_tn: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            mask: "point".into(),
            p_tp: 0.9,
            p_tn: 0.9,
        }
    }
}

impl SensorConfig {
    pub fn resolve(&self) -> Result<FovMask> {
        FovMask::resolve(&self.mask, self.p_tp, self.p_tn)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub grid: GridSpec,
    pub prior: PriorSource,
    pub sensor: SensorConfig,
    pub planner: PlannerConfig,
    pub threshold: Threshold,
    pub max_steps: u32,
    pub master_seed: u64,
    pub trial_index: u64,
    /// Fixed start cell; drawn uniformly when `None`.
    pub start: Option<Cell>,
    /// Fixed target cell; drawn from the prior when `None`.
    pub target: Option<Cell>,
    /// JSON-lines trace destination.
    pub trace: Option<PathBuf>,
}

impl EpisodeConfig {
    pub fn new(planner: PlannerKind) -> Self {
        EpisodeConfig {
            grid: GridSpec::new(200, 200).expect("default grid"),
            prior: PriorSource::Random(PriorConfig::default()),
            sensor: SensorConfig::default(),
            planner: PlannerConfig::new(planner),
            threshold: Threshold::default(),
            max_steps: 20_000,
            master_seed: 0,
            trial_index: 0,
            start: None,
            target: None,
            trace: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEpisodeConfig(m));
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1".into());
        }
        self.planner.validate()?;
        match &self.prior {
            PriorSource::Random(p) => p.validate()?,
            PriorSource::Map(m) => {
                if m.grid() != self.grid {
                    return bad(format!("prior map is {} but the grid is {}", m.grid(), self.grid));
                }
            }
        }
        for (what, cell) in [("start", self.start), ("target", self.target)] {
            if let Some(c) = cell {
                if !self.grid.contains(c) {
                    return bad(format!("{what} cell ({}, {}) is outside the {} grid", c.row, c.col, self.grid));
                }
            }
        }
        match self.threshold {
            Threshold::Fraction(f) if !(0.0..=1.0).contains(&f) => bad(format!("threshold fraction {f} is outside [0, 1]")),
            Threshold::Absolute(t) if !(t >= 0.0) => bad(format!("threshold {t} must be non-negative")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub trial_index: u64,
    pub planner: PlannerKind,
    pub found: bool,
    /// Primitive steps executed, options included.
    pub steps_to_find: u32,
    pub decisions: u32,
    /// Planning wall time of each decision, in microseconds.
    pub plan_time_us: Vec<f64>,
    pub observed_cells: usize,
    pub coverage_fraction: f64,
    pub start: Cell,
    pub target: Cell,
    pub region_count: usize,
    pub trace: Option<PathBuf>,
}

impl EpisodeRecord {
    /// The record with wall-clock data removed; equal for equal seeds.
    pub fn without_timings(&self) -> EpisodeRecord {
        EpisodeRecord {
            plan_time_us: Vec::new(),
            ..self.clone()
        }
    }

    pub fn median_plan_time_us(&self) -> f64 {
        percentiles(&self.plan_time_us, &[50.0]).map_or(0.0, |p| p[0])
    }
}

/// Cells observed at least once.
struct Coverage {
    seen: Vec<bool>,
    count: usize,
}

impl Coverage {
    fn new(area: usize) -> Self {
        Coverage {
            seen: vec![false; area],
            count: 0,
        }
    }

    fn mark(&mut self, grid: GridSpec, cells: &[Cell]) {
        for &c in cells {
            let i = grid.index(c);
            if !self.seen[i] {
                self.seen[i] = true;
                self.count += 1;
            }
        }
    }
}

/// The prior trial `cfg.trial_index` searches over.
pub fn trial_prior(cfg: &EpisodeConfig) -> Result<BeliefMap> {
    match &cfg.prior {
        PriorSource::Random(p) => {
            let seed = trial_rng(cfg.master_seed, cfg.trial_index, Stream::Prior).random();
            generate_prior(cfg.grid, &PriorConfig { rng_seed: seed, ..*p })
        }
        PriorSource::Map(m) => Ok((**m).clone()),
    }
}

/// Runs one seeded episode to detection or to `max_steps`.
pub fn run_episode(cfg: &EpisodeConfig) -> Result<EpisodeRecord> {
    cfg.validate()?;
    let mask = cfg.sensor.resolve()?;
    episode(cfg, &mask)
}

fn episode(cfg: &EpisodeConfig, mask: &FovMask) -> Result<EpisodeRecord> {
    let grid = cfg.grid;
    let prior = trial_prior(cfg)?;
    let target = match cfg.target {
        Some(t) => t,
        None => sample_target(&prior, &mut trial_rng(cfg.master_seed, cfg.trial_index, Stream::Target))?,
    };
    let start = cfg.start.unwrap_or_else(|| {
        let mut rng = trial_rng(cfg.master_seed, cfg.trial_index, Stream::Start);
        grid.cell_at(rng.random_range(0..grid.area()))
    });
    let roi = if cfg.planner.kind.uses_regions() {
        RoiSet::segment(&prior, cfg.threshold.resolve(&prior))?
    } else {
        RoiSet::empty(grid)
    };
    let mut sensor_rng = trial_rng(cfg.master_seed, cfg.trial_index, Stream::Sensor);
    let mut planner_rng = trial_rng(cfg.master_seed, cfg.trial_index, Stream::Planner);
    let mut planner = Planner::new(cfg.planner, grid)?;

    let mut trace = match &cfg.trace {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            let header = json!({
                "kind": "header",
                "planner": cfg.planner.kind.as_str(),
                "master_seed": cfg.master_seed,
                "trial_index": cfg.trial_index,
                "grid": grid.to_string(),
                "mask": mask.name(),
                "p_tp": mask.p_tp(),
                "p_tn": mask.p_tn(),
                "max_steps": cfg.max_steps,
                "start": start,
                "target": target,
                "regions": roi.len(),
            });
            writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
            Some((path.clone(), w))
        }
        None => None,
    };

    let mut belief = prior;
    let mut state = AgentState::new(start, Heading::North);
    let mut coverage = Coverage::new(grid.area());
    let mut steps = 0u32;
    let mut plan_time_us = Vec::new();

    // Looks from the current state; true on a positive reading at the target.
    let mut look = |state: AgentState, belief: &mut BeliefMap, coverage: &mut Coverage| {
        let cells = mask.cells(state, grid).collect::<Vec<_>>();
        coverage.mark(grid, &cells);
        let obs = sample_observation(&cells, target, mask, &mut sensor_rng);
        match apply_exact_posterior(belief, &obs, mask) {
            // Only reachable through underflow; keep the previous belief.
            Err(Error::DegenerateEvidence) => {}
            other => other.expect("posterior inputs are valid"),
        }
        obs.detects(target)
    };

    let mut found = look(state, &mut belief, &mut coverage);
    'episode: while !found && steps < cfg.max_steps {
        let t0 = Instant::now();
        let decision = planner.plan(&belief, state, &roi, mask, &mut planner_rng);
        let elapsed = t0.elapsed().as_secs_f64() * 1e6;
        plan_time_us.push(elapsed);

        if let Some((path, w)) = trace.as_mut() {
            let line = json!({
                "kind": "decision",
                "decision": plan_time_us.len() - 1,
                "step": steps,
                "position": state.position,
                "heading": state.heading,
                "option": decision.option.kind,
                "target": decision.option.target,
                "length": decision.option.trajectory.len(),
                "children": decision.children,
                "plan_time_us": elapsed,
            });
            writeln!(w, "{line}").map_err(|e| Error::io(&*path, e))?;
        }

        assert!(!decision.option.trajectory.is_empty(), "planner returned an empty option");
        for &a in &decision.option.trajectory {
            state = step(state, a, grid);
            steps += 1;
            if look(state, &mut belief, &mut coverage) {
                found = true;
                break 'episode;
            }
            if steps == cfg.max_steps {
                break 'episode;
            }
        }
    }

    if let Some((path, mut w)) = trace {
        w.flush().map_err(|e| Error::io(path, e))?;
    }

    Ok(EpisodeRecord {
        trial_index: cfg.trial_index,
        planner: cfg.planner.kind,
        found,
        steps_to_find: steps,
        decisions: plan_time_us.len() as u32,
        plan_time_us,
        observed_cells: coverage.count,
        coverage_fraction: coverage.count as f64 / grid.area() as f64,
        start,
        target,
        region_count: roi.len(),
        trace: cfg.trace.clone(),
    })
}

/// The percentile points reported everywhere.
pub const REPORTED_PERCENTILES: [f64; 5] = [5.0, 25.0, 50.0, 75.0, 95.0];

/// Linear-interpolation percentiles with inclusive endpoints: rank
/// `p / 100 * (n - 1)` in the sorted sample.
pub fn percentiles(values: &[f64], ps: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(ps
        .iter()
        .map(|&p| {
            let rank = p.clamp(0.0, 100.0) / 100.0 * (n - 1) as f64;
            let lo = rank.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            v[lo] + (rank - lo as f64) * (v[hi] - v[lo])
        })
        .collect())
}

/// 5th/25th/50th/75th/95th percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Result<Self> {
        let p = percentiles(values, &REPORTED_PERCENTILES)?;
        Ok(Quantiles {
            p5: p[0],
            p25: p[1],
            p50: p[2],
            p75: p[3],
            p95: p[4],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepStats {
    /// Every trial, unfound ones counted at `max_steps`.
    pub clamped: Quantiles,
    /// Found trials only; absent when nothing was found.
    pub found_only: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub planner: PlannerKind,
    pub trials: usize,
    pub found: usize,
    pub steps_to_find: StepStats,
    /// Pooled over every decision of every trial.
    pub plan_time_us: Option<Quantiles>,
    pub coverage: Quantiles,
}

impl Summary {
    pub fn of(records: &[EpisodeRecord]) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptySample)?;
        let steps: Vec<f64> = records.iter().map(|r| r.steps_to_find as f64).collect();
        let found: Vec<f64> = records.iter().filter(|r| r.found).map(|r| r.steps_to_find as f64).collect();
        let times: Vec<f64> = records.iter().flat_map(|r| r.plan_time_us.iter().copied()).collect();
        let coverage: Vec<f64> = records.iter().map(|r| r.coverage_fraction).collect();
        Ok(Summary {
            planner: first.planner,
            trials: records.len(),
            found: found.len(),
            steps_to_find: StepStats {
                clamped: Quantiles::of(&steps)?,
                found_only: Quantiles::of(&found).ok(),
            },
            plan_time_us: Quantiles::of(&times).ok(),
            coverage: Quantiles::of(&coverage)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    /// In trial order.
    pub records: Vec<EpisodeRecord>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchOptions {
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    /// Writes `trace_<trial>.jsonl` per trial into this directory.
    pub trace_dir: Option<PathBuf>,
}

/// Runs trials `0..n_trials` of `base` (its `trial_index` is ignored).
pub fn run_batch(base: &EpisodeConfig, n_trials: u32, opts: &BatchOptions) -> Result<BatchResult> {
    if n_trials < 1 {
        return Err(Error::InvalidEpisodeConfig("a batch needs at least one trial".into()));
    }
    base.validate()?;
    let mask = base.sensor.resolve()?;
    let workers = match opts.workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidEpisodeConfig(format!("cannot start {workers} workers: {e}")))?;
    let records = pool.install(|| {
        (0..n_trials as u64)
            .into_par_iter()
            .map(|trial| {
                let cfg = EpisodeConfig {
                    trial_index: trial,
                    trace: opts.trace_dir.as_ref().map(|d| d.join(format!("trace_{trial}.jsonl"))),
                    ..base.clone()
                };
                episode(&cfg, &mask)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = Summary::of(&records)?;
    Ok(BatchResult { records, summary })
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub const RESULTS_HEADER: &str = "scenario,trial_index,planner,found,steps,coverage";

/// Records of one named scenario.
pub type Scenario<'a> = (&'a str, &'a [EpisodeRecord]);

/// Seeded outcomes only, one row per trial; byte-identical across reruns.
pub fn write_results_csv(path: &Path, scenarios: &[Scenario<'_>]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{RESULTS_HEADER}")?;
        for (name, records) in scenarios {
            for r in *records {
                writeln!(
                    w,
                    "{name},{},{},{},{},{}",
                    r.trial_index, r.planner, r.found, r.steps_to_find, r.coverage_fraction
                )?;
            }
        }
        Ok(())
    })
}

/// Wall-clock planning times per trial.
pub fn write_timings_csv(path: &Path, scenarios: &[Scenario<'_>]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "scenario,trial_index,planner,decisions,median_step_time_us")?;
        for (name, records) in scenarios {
            for r in *records {
                writeln!(
                    w,
                    "{name},{},{},{},{:.3}",
                    r.trial_index,
                    r.planner,
                    r.decisions,
                    r.median_plan_time_us()
                )?;
            }
        }
        Ok(())
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}
