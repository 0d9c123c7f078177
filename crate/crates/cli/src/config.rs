//! Experiment configuration: INI file, scenario sections and command-line
//! overrides, resolved into fully materialized settings.
//!
//! ```text
//! [experiment]
//! seed = 7
//! trials = 250
//! planner = puct_regions
//!
//! [sensor]
//! mask = donut
//!
//! [scenario lite]
//! planner = puct_regions_lite
//! lite.density_factor = 1e-5
//! ```
//!
//! Plain sections set the base of every scenario. A `[scenario NAME]`
//! section overrides keys as `section.key` (`planner`, `grid`, `max_steps`,
//! `start` and `target` may be given bare). Flags beat scenario keys, which
//! beat the base, which beats built-in defaults. Paths to prior maps and mask
//! fixtures are relative to the config file; `out` is relative to the
//! working directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use roisearch::harness::{EpisodeConfig, PriorSource, SensorConfig, Threshold};
use roisearch::planners::{PlannerConfig, PlannerKind};
use roisearch::{BeliefMap, Cell, FovMask, GridSpec, PriorConfig, SpreadUnit};

use crate::ini::{Entry, Ini};

pub const DEFAULT_OUT: &str = "roisearch-out";

/// A configuration problem, located as precisely as possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        ConfigError { file: None, line: None, field: None, message: message.into() }
    }

    fn at(file: &Path, line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            file: Some(file.to_path_buf()),
            line: Some(line),
            field: Some(field.into()),
            message: message.into(),
        }
    }

    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { field: Some(field.into()), ..ConfigError::new(message) }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{}:", file.display())?;
            if let Some(line) = self.line {
                write!(f, "{line}:")?;
            }
            f.write_str(" ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "{field}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Everything one scenario needs except the seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub planner: PlannerConfig,
    pub grid: GridSpec,
    pub max_steps: u32,
    pub start: Option<Cell>,
    pub target: Option<Cell>,
    pub prior: PriorConfig,
    /// Fixed prior map (`.csv` or binary); replaces the random mixture.
    pub prior_file: Option<PathBuf>,
    pub sensor: SensorConfig,
    pub threshold: Threshold,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        let episode = EpisodeConfig::new(PlannerKind::PuctRegions);
        ScenarioSpec {
            name: String::new(),
            planner: episode.planner,
            grid: episode.grid,
            max_steps: episode.max_steps,
            start: None,
            target: None,
            prior: PriorConfig::default(),
            prior_file: None,
            sensor: episode.sensor,
            threshold: episode.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub trials: u32,
    /// 0 means one worker per core.
    pub workers: usize,
    pub out: PathBuf,
    pub scenarios: Vec<ScenarioSpec>,
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u32>,
    pub planner: Option<PlannerKind>,
    pub mask: Option<String>,
    pub grid: Option<GridSpec>,
    pub max_steps: Option<u32>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

fn parse_num<T: FromStr>(v: &str, what: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("expected {what}, got {v:?}"))
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = parse_num(v, "a number")?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite number, got {v:?}"))
    }
}

fn parse_pair<T: FromStr>(v: &str, what: &str) -> Result<(T, T), String> {
    let (a, b) = v
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated {what}, got {v:?}"))?;
    Ok((parse_num(a.trim(), what)?, parse_num(b.trim(), what)?))
}

pub fn parse_grid(v: &str) -> Result<GridSpec, String> {
    let (r, c) = v
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got {v:?}"))?;
    let rows = parse_num(r.trim(), "a row count")?;
    let cols = parse_num(c.trim(), "a column count")?;
    GridSpec::new(rows, cols).map_err(|e| e.to_string())
}

fn parse_cell(v: &str) -> Result<Option<Cell>, String> {
    if v == "random" {
        return Ok(None);
    }
    let (r, c) = parse_pair(v, "1-based coordinates")?;
    Ok(Some(Cell::new(r, c)))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn parse_planner(v: &str) -> Result<PlannerKind, String> {
    v.parse::<PlannerKind>().map_err(|e| e.to_string())
}

fn relative_to(base: &Path, v: &str) -> PathBuf {
    let p = Path::new(v);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Sets one scenario field. `section` is the plain section name.
fn set(spec: &mut ScenarioSpec, section: &str, key: &str, v: &str, base: &Path) -> Result<(), String> {
    let p = &mut spec.planner;
    match (section, key) {
        ("experiment", "planner") => p.kind = parse_planner(v)?,
        ("experiment", "grid") => spec.grid = parse_grid(v)?,
        ("experiment", "max_steps") => spec.max_steps = parse_num(v, "a step count")?,
        ("experiment", "start") => spec.start = parse_cell(v)?,
        ("experiment", "target") => spec.target = parse_cell(v)?,
        ("prior", "components") => spec.prior.num_components = parse_pair(v, "integers")?,
        ("prior", "std") => {
            spec.prior.spread = parse_pair(v, "numbers")?;
            spec.prior.unit = SpreadUnit::StdDev;
        }
        ("prior", "variance") => {
            spec.prior.spread = parse_pair(v, "numbers")?;
            spec.prior.unit = SpreadUnit::Variance;
        }
        ("prior", "file") => {
            spec.prior_file = if v == "none" { None } else { Some(relative_to(base, v)) };
        }
        ("sensor", "mask") => {
            spec.sensor.mask = if FovMask::BUILTIN.contains(&v) {
                v.to_string()
            } else {
                relative_to(base, v).display().to_string()
            };
        }
        ("sensor", "p_tp") => spec.sensor.p_tp = parse_f64(v)?,
        ("sensor", "p_tn") => spec.sensor.p_tn = parse_f64(v)?,
        ("roi", "threshold_fraction") => spec.threshold = Threshold::Fraction(parse_f64(v)?),
        ("roi", "threshold") => spec.threshold = Threshold::Absolute(parse_f64(v)?),
        ("puct", "iterations") => p.puct.iterations = parse_num(v, "an iteration count")?,
        ("puct", "rollout_depth") => p.puct.rollout_depth = parse_num(v, "a step count")?,
        ("puct", "exploration") => p.puct.exploration = parse_f64(v)?,
        ("puct", "time_penalty") => {
            p.puct.time_penalty = if v == "auto" { None } else { Some(parse_f64(v)?) };
        }
        ("puct", "discount") => p.puct.discount = parse_f64(v)?,
        ("puct", "rollout_options") => p.puct.rollout_options = parse_bool(v)?,
        ("puct", "seed") => p.puct.rng_seed = parse_num(v, "an unsigned integer")?,
        ("lite", "density_factor") => p.density_factor = parse_f64(v)?,
        ("horizon", "horizon") => p.horizon.horizon = parse_num(v, "a step count")?,
        ("horizon", "epsilon") => p.horizon.epsilon = parse_f64(v)?,
        ("horizon", "rollouts_per_action") => p.horizon.rollouts_per_action = parse_num(v, "a count")?,
        _ => return Err(format!("unknown key `{key}` in [{section}]")),
    }
    Ok(())
}

/// Serializes a scenario as `section.key = value` lines, defaults included.
fn dump(spec: &ScenarioSpec) -> Vec<(String, String)> {
    let cell = |c: Option<Cell>| c.map_or("random".to_string(), |c| format!("{},{}", c.row, c.col));
    let p = &spec.planner;
    let mut out = vec![
        ("planner", p.kind.to_string()),
        ("grid", spec.grid.to_string()),
        ("max_steps", spec.max_steps.to_string()),
        ("start", cell(spec.start)),
        ("target", cell(spec.target)),
        ("prior.components", format!("{},{}", spec.prior.num_components.0, spec.prior.num_components.1)),
        (
            match spec.prior.unit {
                SpreadUnit::StdDev => "prior.std",
                SpreadUnit::Variance => "prior.variance",
            },
            format!("{},{}", spec.prior.spread.0, spec.prior.spread.1),
        ),
        (
            "prior.file",
            spec.prior_file.as_ref().map_or("none".to_string(), |f| f.display().to_string()),
        ),
        ("sensor.mask", spec.sensor.mask.clone()),
        ("sensor.p_tp", spec.sensor.p_tp.to_string()),
        ("sensor.p_tn", spec.sensor.p_tn.to_string()),
    ];
    out.push(match spec.threshold {
        Threshold::Fraction(f) => ("roi.threshold_fraction", f.to_string()),
        Threshold::Absolute(t) => ("roi.threshold", t.to_string()),
    });
    out.extend([
        ("puct.iterations", p.puct.iterations.to_string()),
        ("puct.rollout_depth", p.puct.rollout_depth.to_string()),
        ("puct.exploration", p.puct.exploration.to_string()),
        ("puct.time_penalty", p.puct.time_penalty.map_or("auto".to_string(), |d| d.to_string())),
        ("puct.discount", p.puct.discount.to_string()),
        ("puct.rollout_options", p.puct.rollout_options.to_string()),
        ("puct.seed", p.puct.rng_seed.to_string()),
        ("lite.density_factor", p.density_factor.to_string()),
        ("horizon.horizon", p.horizon.horizon.to_string()),
        ("horizon.epsilon", p.horizon.epsilon.to_string()),
        ("horizon.rollouts_per_action", p.horizon.rollouts_per_action.to_string()),
    ]);
    out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Splits a scenario key into `(section, key)`; bare keys live in
/// `[experiment]`.
fn scenario_key(key: &str) -> (&str, &str) {
    key.split_once('.').unwrap_or(("experiment", key))
}

const RUN_KEYS: [&str; 4] = ["seed", "trials", "workers", "out"];

impl Settings {
    /// Built-in defaults with a single scenario.
    pub fn defaults() -> Settings {
        Settings {
            seed: 0,
            trials: 250,
            workers: 0,
            out: PathBuf::from(DEFAULT_OUT),
            scenarios: vec![ScenarioSpec::default()],
        }
    }

    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Settings, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { file: Some(path.to_path_buf()), ..ConfigError::new(format!("cannot read: {e}")) })?;
        Settings::from_str(&text, path, overrides)
    }

    /// Parses `text`, read from `path`. Relative paths inside resolve
    /// against the file's directory.
    pub fn from_str(text: &str, path: &Path, overrides: &Overrides) -> Result<Settings, ConfigError> {
        let ini = Ini::parse(text).map_err(|e| ConfigError {
            file: Some(path.to_path_buf()),
            line: Some(e.line),
            field: None,
            message: e.message,
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut settings = Settings::defaults();
        let mut base = ScenarioSpec::default();
        let mut scenarios: Vec<(String, Vec<Entry>)> = Vec::new();

        for section in &ini.sections {
            if let Some(name) = section.name.strip_prefix("scenario ") {
                let name = name.trim();
                if name.contains(',') {
                    return Err(ConfigError::at(path, section.line, "scenario", format!("name {name:?} contains a comma")));
                }
                if scenarios.iter().any(|(n, _)| n == name) {
                    return Err(ConfigError::at(path, section.line, "scenario", format!("duplicate scenario {name:?}")));
                }
                scenarios.push((name.to_string(), section.entries.clone()));
                continue;
            }
            for e in &section.entries {
                let field = format!("[{}] {}", section.name, e.key);
                let err = |m: String| ConfigError::at(path, e.line, field.clone(), m);
                match (section.name.as_str(), e.key.as_str()) {
                    ("manifest", _) => {}
                    ("experiment", "seed") => settings.seed = parse_num(&e.value, "an unsigned integer").map_err(err)?,
                    ("experiment", "trials") => settings.trials = parse_num(&e.value, "a trial count").map_err(err)?,
                    ("experiment", "workers") => settings.workers = parse_num(&e.value, "a worker count").map_err(err)?,
                    ("experiment", "out") => {
                        settings.out = PathBuf::from(&e.value);
                    }
                    (s, k) => set(&mut base, s, k, &e.value, &base_dir).map_err(err)?,
                }
            }
        }

        settings.scenarios = if scenarios.is_empty() {
            vec![ScenarioSpec { name: base.planner.kind.to_string(), ..base }]
        } else {
            let mut out = Vec::with_capacity(scenarios.len());
            for (name, entries) in scenarios {
                let mut spec = ScenarioSpec { name: name.clone(), ..base.clone() };
                for e in &entries {
                    let (s, k) = scenario_key(&e.key);
                    let field = format!("[scenario {name}] {}", e.key);
                    if s == "experiment" && RUN_KEYS.contains(&k) {
                        return Err(ConfigError::at(path, e.line, field, "applies to the whole run; set it in [experiment]"));
                    }
                    set(&mut spec, s, k, &e.value, &base_dir).map_err(|m| ConfigError::at(path, e.line, field, m))?;
                }
                out.push(spec);
            }
            out
        };
        settings.apply(overrides);
        Ok(settings)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.trials {
            self.trials = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        for s in &mut self.scenarios {
            if let Some(v) = o.planner {
                s.planner.kind = v;
            }
            if let Some(v) = &o.mask {
                s.sensor.mask = v.clone();
            }
            if let Some(v) = o.grid {
                s.grid = v;
            }
            if let Some(v) = o.max_steps {
                s.max_steps = v;
            }
        }
    }

    /// Fully materialized configuration; parses back to the same settings.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        out.push_str("# Resolved run configuration. Re-run with `roisearch bench --from-manifest <this file>`.\n");
        out.push_str(&format!("[manifest]\nversion = {}\n\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!(
            "[experiment]\nseed = {}\ntrials = {}\nworkers = {}\nout = {}\n",
            self.seed,
            self.trials,
            self.workers,
            self.out.display()
        ));
        for s in &self.scenarios {
            out.push_str(&format!("\n[scenario {}]\n", s.name));
            for (k, v) in dump(s) {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    /// Loads prior maps and masks and checks every scenario.
    pub fn prepare(&self) -> Result<Vec<(String, EpisodeConfig)>, ConfigError> {
        if self.trials < 1 {
            return Err(ConfigError::field("[experiment] trials", "must be at least 1"));
        }
        self.scenarios
            .iter()
            .map(|s| {
                let field = |k: &str| format!("[scenario {}] {k}", s.name);
                let prior = match &s.prior_file {
                    Some(file) => {
                        let map = BeliefMap::load(file).map_err(|e| ConfigError::field(field("prior.file"), e.to_string()))?;
                        PriorSource::Map(Arc::new(map))
                    }
                    None => PriorSource::Random(s.prior),
                };
                let cfg = EpisodeConfig {
                    grid: match &prior {
                        // A map fixes the grid unless a flag overrode it, in
                        // which case validation reports the mismatch.
                        PriorSource::Map(m) if s.grid == ScenarioSpec::default().grid => m.grid(),
                        _ => s.grid,
                    },
                    prior,
                    sensor: s.sensor.clone(),
                    planner: s.planner,
                    threshold: s.threshold,
                    max_steps: s.max_steps,
                    master_seed: self.seed,
                    trial_index: 0,
                    start: s.start,
                    target: s.target,
                    trace: None,
                };
                cfg.sensor.resolve().map_err(|e| ConfigError::field(field("sensor.mask"), e.to_string()))?;
                cfg.validate().map_err(|e| ConfigError::field(field("settings"), e.to_string()))?;
                Ok((s.name.clone(), cfg))
            })
            .collect()
    }
}
