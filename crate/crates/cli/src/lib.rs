//! Library side of the `roisearch` command: configuration handling and the
//! `bench`, `run` and `segment` commands. The binary is a thin clap wrapper.

pub mod config;
pub mod ini;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use roisearch::harness::{
    run_batch, run_episode, trial_prior, write_json, write_results_csv, write_timings_csv, BatchOptions,
    EpisodeConfig, Summary,
};
use roisearch::RoiSet;

pub use config::{ConfigError, Overrides, Settings};

/// Command failure, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: exit code 2.
    Config(String),
    /// Runtime I/O failure: exit code 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Library errors raised after configuration was accepted.
fn runtime(e: roisearch::Error) -> CliError {
    match e {
        roisearch::Error::Io { .. } => CliError::Io(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Where settings come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Defaults,
    Config(PathBuf),
    Manifest(PathBuf),
}

pub fn load_settings(source: &Source, overrides: &Overrides) -> Result<Settings, CliError> {
    match source {
        Source::Defaults => {
            let mut s = Settings::defaults();
            s.scenarios[0].name = s.scenarios[0].planner.kind.to_string();
            s.apply(overrides);
            if let Some(p) = overrides.planner {
                s.scenarios[0].name = p.to_string();
            }
            Ok(s)
        }
        Source::Config(path) => Ok(Settings::from_file(path, overrides)?),
        Source::Manifest(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: cannot read manifest: {e}", path.display())))?;
            if !text.lines().any(|l| l.trim() == "[manifest]") {
                return Err(CliError::Config(format!("{}: not a run manifest (no [manifest] section)", path.display())));
            }
            Ok(Settings::from_str(&text, path, overrides)?)
        }
    }
}

#[derive(Debug, Serialize)]
struct ScenarioSummary<'a> {
    name: &'a str,
    mask: &'a str,
    #[serde(flatten)]
    summary: &'a Summary,
}

#[derive(Debug, Serialize)]
struct BenchSummary<'a> {
    version: &'static str,
    master_seed: u64,
    trials: u32,
    scenarios: Vec<ScenarioSummary<'a>>,
}

/// Batch outcome of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub name: String,
    pub config: EpisodeConfig,
    pub batch: roisearch::harness::BatchResult,
}

/// Runs every scenario and writes `manifest.ini`, `results.csv`,
/// `timings.csv` and `summary.json` into the output directory. The manifest
/// is written before the first trial starts.
pub fn bench(settings: &Settings, trace: bool, log: &mut dyn Write) -> Result<Vec<ScenarioResult>, CliError> {
    let prepared = settings.prepare()?;
    let out = &settings.out;
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let manifest = out.join("manifest.ini");
    std::fs::write(&manifest, settings.manifest()).map_err(|e| io(&manifest, e))?;

    let mut results = Vec::with_capacity(prepared.len());
    for (name, cfg) in prepared {
        let trace_dir = if trace {
            let dir = out.join("traces").join(&name);
            std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
            Some(dir)
        } else {
            None
        };
        let opts = BatchOptions { workers: settings.workers, trace_dir };
        let batch = run_batch(&cfg, settings.trials, &opts).map_err(runtime)?;
        let s = &batch.summary;
        let q = s.steps_to_find.clamped;
        let _ = writeln!(
            log,
            "{name:<20} {:<18} found {:>4}/{:<4} steps p5 {:>8.1} p25 {:>8.1} p50 {:>8.1} p75 {:>8.1} p95 {:>8.1}  coverage p50 {:.4}  plan p50 {:.1} us",
            s.planner.as_str(),
            s.found,
            s.trials,
            q.p5,
            q.p25,
            q.p50,
            q.p75,
            q.p95,
            s.coverage.p50,
            s.plan_time_us.map_or(0.0, |t| t.p50),
        );
        results.push(ScenarioResult { name, config: cfg, batch });
    }

    let scenarios: Vec<(&str, &[roisearch::harness::EpisodeRecord])> =
        results.iter().map(|r| (r.name.as_str(), r.batch.records.as_slice())).collect();
    write_results_csv(&out.join("results.csv"), &scenarios).map_err(runtime)?;
    write_timings_csv(&out.join("timings.csv"), &scenarios).map_err(runtime)?;
    let summary = BenchSummary {
        version: env!("CARGO_PKG_VERSION"),
        master_seed: settings.seed,
        trials: settings.trials,
        scenarios: results
            .iter()
            .map(|r| ScenarioSummary {
                name: &r.name,
                mask: &r.config.sensor.mask,
                summary: &r.batch.summary,
            })
            .collect(),
    };
    write_json(&out.join("summary.json"), &summary).map_err(runtime)?;
    Ok(results)
}

fn pick<'a>(
    prepared: &'a [(String, EpisodeConfig)],
    scenario: Option<&str>,
) -> Result<&'a (String, EpisodeConfig), CliError> {
    match scenario {
        None => Ok(&prepared[0]),
        Some(name) => prepared.iter().find(|(n, _)| n == name).ok_or_else(|| {
            let known: Vec<&str> = prepared.iter().map(|(n, _)| n.as_str()).collect();
            CliError::Config(format!("no scenario named {name:?} (have: {})", known.join(", ")))
        }),
    }
}

/// Runs a single episode of one scenario; with `trace` the JSON-lines trace
/// goes to `<out>/trace.jsonl`.
pub fn run(
    settings: &Settings,
    scenario: Option<&str>,
    trial: u64,
    trace: bool,
    log: &mut dyn Write,
) -> Result<roisearch::harness::EpisodeRecord, CliError> {
    let prepared = settings.prepare()?;
    let (name, cfg) = pick(&prepared, scenario)?;
    let mut cfg = EpisodeConfig { trial_index: trial, ..cfg.clone() };
    if trace {
        std::fs::create_dir_all(&settings.out).map_err(|e| io(&settings.out, e))?;
        cfg.trace = Some(settings.out.join("trace.jsonl"));
    }
    let r = run_episode(&cfg).map_err(runtime)?;
    let _ = writeln!(log, "scenario {name}");
    let _ = writeln!(log, "planner {}", r.planner);
    let _ = writeln!(log, "found {}", r.found);
    let _ = writeln!(log, "steps {}", r.steps_to_find);
    let _ = writeln!(log, "coverage {}", r.coverage_fraction);
    if let Some(path) = &r.trace {
        let _ = writeln!(log, "trace {}", path.display());
    }
    Ok(r)
}

/// Segments a scenario's prior and writes `labels.csv`, `regions.json` and
/// `regions.ppm`.
pub fn segment(
    settings: &Settings,
    scenario: Option<&str>,
    trial: u64,
    log: &mut dyn Write,
) -> Result<RoiSet, CliError> {
    let prepared = settings.prepare()?;
    let (name, cfg) = pick(&prepared, scenario)?;
    let cfg = EpisodeConfig { trial_index: trial, ..cfg.clone() };
    let prior = trial_prior(&cfg).map_err(runtime)?;
    let roi = RoiSet::segment(&prior, cfg.threshold.resolve(&prior)).map_err(runtime)?;
    let out = &settings.out;
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let labels = out.join("labels.csv");
    std::fs::write(&labels, roi.labels_csv()).map_err(|e| io(&labels, e))?;
    write_json(&out.join("regions.json"), &roi.summary()).map_err(runtime)?;
    let ppm = out.join("regions.ppm");
    std::fs::write(&ppm, roi.render_ppm(&prior)).map_err(|e| io(&ppm, e))?;
    let _ = writeln!(log, "scenario {name}");
    let _ = writeln!(log, "threshold {}", roi.threshold());
    let _ = writeln!(log, "regions {}", roi.len());
    for r in roi.regions() {
        let _ = writeln!(
            log,
            "  region {} seed ({}, {}) cells {} mean mass {:e}",
            r.id, r.seed.row, r.seed.col, r.cell_count, r.mean_mass
        );
    }
    Ok(roi)
}
