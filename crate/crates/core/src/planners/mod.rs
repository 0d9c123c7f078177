//! Online planners. Every planner looks at the current belief and agent
//! state and returns the next option to execute.
//!
//! | id                  | search | options | in-search belief              |
//! |---------------------|--------|---------|-------------------------------|
//! | `puct`              | PUCT   | no      | depleted per simulated step   |
//! | `puct_regions`      | PUCT   | yes     | depleted per simulated step   |
//! | `puct_regions_lite` | PUCT   | yes     | frozen; goto scored by density|
//! | `greedy`            | argmax | no      | frozen                        |
//! | `dps`               | ε-greedy rollouts | no | depleted per simulated step |

mod horizon;
mod overlay;
mod puct;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{step, AgentState, BeliefMap, Cell, GridSpec};
use crate::options::{greedy_path, OptionKind, PlanOption};
use crate::roi::RoiSet;
use crate::sensing::{resolve_fov, FovMask};

pub use horizon::{dps_plan, greedy_plan};
pub use puct::{puct_plan, puct_search, Formulation, SearchReport};

pub(crate) use horizon::{dps_decide, greedy_decide};
pub(crate) use overlay::Depletion;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuctConfig {
    pub iterations: u32,
    pub rollout_depth: u32,
    pub exploration: f64,
    /// Per-step time penalty `d`; `None` means `1 / (rows * cols)`.
    pub time_penalty: Option<f64>,
    pub discount: f64,
    /// Let rollouts draw goto options as well as primitives. Off by default:
    /// a rollout that can jump straight to the best region gives every root
    /// child nearly the same value, and the tree stops telling them apart.
    pub rollout_options: bool,
    pub rng_seed: u64,
}

impl Default for PuctConfig {
    fn default() -> Self {
        PuctConfig {
            iterations: 40,
            rollout_depth: 60,
            exploration: 0.5,
            time_penalty: None,
            discount: 1.0,
            rollout_options: false,
            rng_seed: 0,
        }
    }
}

impl PuctConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlannerConfig(m));
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.exploration >= 0.0) {
            return bad(format!("exploration {} must be non-negative", self.exploration));
        }
        if let Some(d) = self.time_penalty {
            if !(d >= 0.0) {
                return bad(format!("time penalty {d} must be non-negative"));
            }
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!("discount {} is outside (0, 1]", self.discount));
        }
        Ok(())
    }

    pub fn time_penalty_for(&self, grid: GridSpec) -> f64 {
        self.time_penalty.unwrap_or(1.0 / grid.area() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiteConfig {
    pub puct: PuctConfig,
    /// Density tuning factor `f` of the goto reward.
    pub density_factor: f64,
}

impl Default for LiteConfig {
    fn default() -> Self {
        LiteConfig {
            puct: PuctConfig::default(),
            density_factor: 8e-6,
        }
    }
}

impl LiteConfig {
    pub fn validate(&self) -> Result<()> {
        self.puct.validate()?;
        if !(self.density_factor > 0.0) {
            return Err(Error::InvalidPlannerConfig(format!(
                "density factor {} must be positive",
                self.density_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonConfig {
    pub horizon: u32,
    /// Random-action probability of the DPS rollout policy.
    pub epsilon: f64,
    pub rollouts_per_action: u32,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig {
            horizon: 20,
            epsilon: 0.65,
            rollouts_per_action: 10,
        }
    }
}

impl HorizonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidPlannerConfig("horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidPlannerConfig(format!("epsilon {} is outside [0, 1]", self.epsilon)));
        }
        if self.rollouts_per_action < 1 {
            return Err(Error::InvalidPlannerConfig("rollouts_per_action must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-step reward of the full formulation.
///
/// For a primitive this is the footprint mass after the move minus `d`. For a
/// goto option every trajectory step contributes its own footprint mass minus
/// `d`, read after the previous step's planning update. `option` must be
/// expanded.
pub fn reward_full(belief: &BeliefMap, option: &PlanOption, d: f64, p_tp: f64) -> f64 {
    let grid = belief.grid();
    let mut scratch = Depletion::new(grid.area());
    scratch.reset();
    option
        .swept_cells
        .iter()
        .map(|cells| {
            let mass: f64 = cells
                .iter()
                .map(|&c| belief.mass_at(grid.index(c)) * scratch.factor(grid.index(c)))
                .sum();
            for &c in cells {
                scratch.deplete(grid.index(c), 1.0 - p_tp);
            }
            mass - d
        })
        .sum()
}

/// Reward of the lite formulation.
///
/// Primitives score the footprint mass after the move on the frozen map,
/// minus `d`. `GotoRoi(k)` scores `f * mean_k / (A^2 * dist_k)` with
/// `A = rows * cols`, `mean_k` the current mean mass of region `k`, and
/// `dist_k` the Euclidean distance from the agent to the region centroid,
/// floored at one cell.
pub fn reward_lite(
    state: AgentState,
    option: &PlanOption,
    roi: &RoiSet,
    belief: &BeliefMap,
    mask: &FovMask,
    cfg: &LiteConfig,
) -> f64 {
    let grid = belief.grid();
    match option.kind {
        OptionKind::Primitive(a) => {
            let next = step(state, a, grid);
            let mass: f64 = mask.cells(next, grid).map(|c| belief.mass(c)).sum();
            mass - cfg.puct.time_penalty_for(grid)
        }
        OptionKind::GotoRoi(k) => density_reward(
            cfg.density_factor,
            roi.mean_mass_in(k, belief),
            grid.area() as f64,
            centroid_distance(state, roi.region(k).centroid),
        ),
    }
}

pub(crate) fn centroid_distance(state: AgentState, centroid: (f64, f64)) -> f64 {
    let dr = state.position.row as f64 - centroid.0;
    let dc = state.position.col as f64 - centroid.1;
    (dr * dr + dc * dc).sqrt()
}

#[inline]
pub(crate) fn density_reward(f: f64, mean_mass: f64, area: f64, distance: f64) -> f64 {
    f * mean_mass / (area * area * distance.max(1.0))
}

/// Expands an option whose goto target is already fixed.
pub(crate) fn materialize(
    state: AgentState,
    kind: OptionKind,
    target: Option<Cell>,
    mask: &FovMask,
    grid: GridSpec,
) -> PlanOption {
    let trajectory = match (kind, target) {
        (OptionKind::Primitive(a), _) => vec![a],
        (OptionKind::GotoRoi(_), Some(t)) => greedy_path(state.position, t),
        (OptionKind::GotoRoi(_), None) => unreachable!("goto options carry their target"),
    };
    let mut at = state;
    let swept_cells = trajectory
        .iter()
        .map(|&a| {
            at = step(at, a, grid);
            resolve_fov(mask, at, grid)
        })
        .collect();
    PlanOption {
        kind,
        target,
        trajectory,
        swept_cells,
    }
}

/// Planner identifiers as used in configuration files and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Puct,
    PuctRegions,
    PuctRegionsLite,
    Greedy,
    Dps,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 5] = [
        PlannerKind::Puct,
        PlannerKind::PuctRegions,
        PlannerKind::PuctRegionsLite,
        PlannerKind::Greedy,
        PlannerKind::Dps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerKind::Puct => "puct",
            PlannerKind::PuctRegions => "puct_regions",
            PlannerKind::PuctRegionsLite => "puct_regions_lite",
            PlannerKind::Greedy => "greedy",
            PlannerKind::Dps => "dps",
        }
    }

    /// Planners that plan over region options and need a segmentation.
    pub fn uses_regions(self) -> bool {
        matches!(self, PlannerKind::PuctRegions | PlannerKind::PuctRegionsLite)
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidPlannerConfig(format!(
                    "unknown planner {s:?} (expected one of puct, puct_regions, puct_regions_lite, greedy, dps)"
                ))
            })
    }
}

/// Everything needed to build any planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub kind: PlannerKind,
    pub puct: PuctConfig,
    pub density_factor: f64,
    pub horizon: HorizonConfig,
}

impl PlannerConfig {
    pub fn new(kind: PlannerKind) -> Self {
        PlannerConfig {
            kind,
            puct: PuctConfig::default(),
            density_factor: LiteConfig::default().density_factor,
            horizon: HorizonConfig::default(),
        }
    }

    pub fn lite(&self) -> LiteConfig {
        LiteConfig {
            puct: self.puct,
            density_factor: self.density_factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PlannerKind::Puct | PlannerKind::PuctRegions => self.puct.validate(),
            PlannerKind::PuctRegionsLite => self.lite().validate(),
            PlannerKind::Greedy | PlannerKind::Dps => self.horizon.validate(),
        }
    }
}

/// Statistics of one root choice, for traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildSummary {
    pub option: OptionKind,
    pub visits: u32,
    pub value: f64,
}

/// Outcome of one planning call.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// Expanded option to execute.
    pub option: PlanOption,
    pub children: Vec<ChildSummary>,
}

/// A planner bound to one episode; owns reusable scratch memory.
#[derive(Debug)]
pub struct Planner {
    cfg: PlannerConfig,
    scratch: Depletion,
}

impl Planner {
    pub fn new(cfg: PlannerConfig, grid: GridSpec) -> Result<Self> {
        cfg.validate()?;
        Ok(Planner {
            cfg,
            scratch: Depletion::new(grid.area()),
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    pub fn kind(&self) -> PlannerKind {
        self.cfg.kind
    }

    /// Chooses the next option. `roi` is ignored by planners without options.
    pub fn plan<R: Rng + ?Sized>(
        &mut self,
        belief: &BeliefMap,
        state: AgentState,
        roi: &RoiSet,
        mask: &FovMask,
        rng: &mut R,
    ) -> Decision {
        let no_regions = RoiSet::empty(belief.grid());
        match self.cfg.kind {
            PlannerKind::Puct => puct::search(
                belief,
                state,
                &no_regions,
                mask,
                &self.cfg.puct,
                Formulation::Full,
                &mut self.scratch,
                rng,
            )
            .decision,
            PlannerKind::PuctRegions => puct::search(
                belief,
                state,
                roi,
                mask,
                &self.cfg.puct,
                Formulation::Full,
                &mut self.scratch,
                rng,
            )
            .decision,
            PlannerKind::PuctRegionsLite => puct::search(
                belief,
                state,
                roi,
                mask,
                &self.cfg.puct,
                Formulation::Lite {
                    density_factor: self.cfg.density_factor,
                },
                &mut self.scratch,
                rng,
            )
            .decision,
            PlannerKind::Greedy => greedy_decide(belief, state, mask, &self.cfg.horizon),
            PlannerKind::Dps => dps_decide(belief, state, mask, &self.cfg.horizon, &mut self.scratch, rng),
        }
    }
}
