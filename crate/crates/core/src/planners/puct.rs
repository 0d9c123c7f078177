//! PUCT over the option-augmented search problem.
//!
//! Selection maximizes `Q(s,o) + c * P(o) * sqrt(N(s)) / (1 + N(s,o))` with a
//! uniform `P(o)` over the options available at `s`. Each simulation adds one
//! child (options in listing order), runs a uniform-random rollout from it,
//! and backs the discounted return up the path as a running mean.
//!
//! Simulated transitions are deterministic: the planner assumes every reading
//! is negative. The full formulation depletes observed cells through a
//! [`Depletion`] overlay that is reset per simulation, so the caller's belief
//! is never written. The lite formulation reads the belief as a frozen map and
//! scores goto options with the density heuristic instead of their sweep.

use rand::Rng;

use super::{centroid_distance, density_reward, materialize, ChildSummary, Decision, Depletion, PuctConfig};
use crate::gridworld::{step, Action, AgentState, BeliefMap, Cell, GridSpec};
use crate::options::{greedy_step, OptionKind, PlanOption};
use crate::roi::{roi_target_cell, RoiSet, TargetIndex};
use crate::rng;
use crate::sensing::FovMask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Formulation {
    /// Belief MDP with options: per-step planning updates and swept rewards.
    Full,
    /// Frozen-map MDP with options: density-scored goto rewards.
    Lite { density_factor: f64 },
}

/// Search result with the root statistics exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub decision: Decision,
    /// `N(root)`: one for the root itself plus one per simulation.
    pub root_visits: u32,
    pub tree_size: usize,
}

struct Transition {
    state: AgentState,
    reward: f64,
    steps: u32,
}

enum Targets {
    Live(TargetIndex),
    Frozen(Vec<Cell>),
}

struct Model<'a> {
    belief: &'a BeliefMap,
    grid: GridSpec,
    roi: &'a RoiSet,
    mask: &'a FovMask,
    keep: f64,
    penalty: f64,
    discount: f64,
    rollout_options: bool,
    formulation: Formulation,
    targets: Targets,
    region_means: Vec<f64>,
}

impl<'a> Model<'a> {
    fn new(
        belief: &'a BeliefMap,
        roi: &'a RoiSet,
        mask: &'a FovMask,
        cfg: &PuctConfig,
        formulation: Formulation,
    ) -> Self {
        let grid = belief.grid();
        let (targets, region_means) = match formulation {
            Formulation::Full => (
                Targets::Live(TargetIndex::build(roi, belief, TargetIndex::DEFAULT_DEPTH)),
                Vec::new(),
            ),
            Formulation::Lite { .. } => (
                Targets::Frozen((1..=roi.len()).map(|k| roi_target_cell(roi, k, belief)).collect()),
                (1..=roi.len()).map(|k| roi.mean_mass_in(k, belief)).collect(),
            ),
        };
        Model {
            belief,
            grid,
            roi,
            mask,
            keep: 1.0 - mask.p_tp(),
            penalty: cfg.time_penalty_for(grid),
            discount: cfg.discount,
            rollout_options: cfg.rollout_options,
            formulation,
            targets,
            region_means,
        }
    }

    fn target(&self, k: usize, overlay: &Depletion) -> Cell {
        match &self.targets {
            Targets::Live(index) => {
                let mass = self.belief.as_slice();
                self.grid
                    .cell_at(index.target(self.roi, k, |i| mass[i] * overlay.factor(i)))
            }
            Targets::Frozen(cells) => cells[k - 1],
        }
    }

    fn available(&self, state: AgentState, overlay: &Depletion) -> Vec<(OptionKind, Option<Cell>)> {
        let mut out: Vec<(OptionKind, Option<Cell>)> =
            Action::ALL.iter().map(|&a| (OptionKind::Primitive(a), None)).collect();
        for k in 1..=self.roi.len() {
            let t = self.target(k, overlay);
            if t != state.position {
                out.push((OptionKind::GotoRoi(k), Some(t)));
            }
        }
        out
    }

    /// Footprint reward of standing in `state`, then the depletion it causes.
    #[inline]
    fn observe(&self, state: AgentState, overlay: &mut Depletion) -> f64 {
        let mass = self.belief.as_slice();
        let mut sum = 0.0;
        for c in self.mask.cells(state, self.grid) {
            let i = self.grid.index(c);
            sum += mass[i] * overlay.factor(i);
            if let Formulation::Full = self.formulation {
                overlay.deplete(i, self.keep);
            }
        }
        sum - self.penalty
    }

    fn transition(
        &self,
        state: AgentState,
        kind: OptionKind,
        target: Option<Cell>,
        overlay: &mut Depletion,
        budget: u32,
    ) -> Transition {
        match kind {
            OptionKind::Primitive(a) => {
                let next = step(state, a, self.grid);
                Transition {
                    state: next,
                    reward: self.observe(next, overlay),
                    steps: 1,
                }
            }
            OptionKind::GotoRoi(k) => {
                let target = target.unwrap_or_else(|| self.target(k, overlay));
                match self.formulation {
                    Formulation::Full => {
                        let mut at = state;
                        let mut reward = 0.0;
                        let mut weight = 1.0;
                        let mut steps = 0;
                        while steps < budget {
                            let Some(a) = greedy_step(at.position, target) else { break };
                            at = step(at, a, self.grid);
                            reward += weight * self.observe(at, overlay);
                            weight *= self.discount;
                            steps += 1;
                        }
                        Transition { state: at, reward, steps }
                    }
                    Formulation::Lite { density_factor } => {
                        let reward = density_reward(
                            density_factor,
                            self.region_means[k - 1],
                            self.grid.area() as f64,
                            centroid_distance(state, self.roi.region(k).centroid),
                        );
                        let mut at = state;
                        let mut steps = 0;
                        while let Some(a) = greedy_step(at.position, target) {
                            at = step(at, a, self.grid);
                            steps += 1;
                        }
                        Transition {
                            state: at,
                            reward,
                            steps: steps.min(budget),
                        }
                    }
                }
            }
        }
    }

    /// Uniform-random rollout for `depth` primitive steps, over primitives
    /// only unless `rollout_options` admits goto options too.
    fn rollout<R: Rng + ?Sized>(
        &self,
        mut state: AgentState,
        depth: u32,
        overlay: &mut Depletion,
        rng: &mut R,
    ) -> f64 {
        let n = if self.rollout_options {
            Action::ALL.len() + self.roi.len()
        } else {
            Action::ALL.len()
        };
        let mut remaining = depth;
        let mut ret = 0.0;
        let mut weight = 1.0;
        while remaining > 0 {
            // Rejection keeps the draw uniform over the options actually available.
            let (kind, target) = loop {
                let pick = rng.random_range(0..n);
                if pick < Action::ALL.len() {
                    break (OptionKind::Primitive(Action::ALL[pick]), None);
                }
                let k = pick - Action::ALL.len() + 1;
                let t = self.target(k, overlay);
                if t != state.position {
                    break (OptionKind::GotoRoi(k), Some(t));
                }
            };
            let tr = self.transition(state, kind, target, overlay, remaining);
            ret += weight * tr.reward;
            weight *= self.discount.powi(tr.steps as i32);
            remaining -= tr.steps;
            state = tr.state;
        }
        ret
    }
}

struct Node {
    state: AgentState,
    kind: OptionKind,
    target: Option<Cell>,
    visits: u32,
    value_sum: f64,
    options: Option<Vec<(OptionKind, Option<Cell>)>>,
    children: Vec<usize>,
}

impl Node {
    fn new(state: AgentState, kind: OptionKind, target: Option<Cell>) -> Self {
        Node {
            state,
            kind,
            target,
            visits: 0,
            value_sum: 0.0,
            options: None,
            children: Vec::new(),
        }
    }

    fn q(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

fn select(nodes: &[Node], parent: usize, exploration: f64) -> usize {
    let p = &nodes[parent];
    let prior = 1.0 / p.options.as_ref().map_or(1, Vec::len) as f64;
    let sqrt_n = (p.visits as f64).sqrt();
    let mut best = p.children[0];
    let mut best_score = f64::NEG_INFINITY;
    for &c in &p.children {
        let child = &nodes[c];
        let score = child.q() + exploration * prior * sqrt_n / (1.0 + child.visits as f64);
        if score > best_score {
            best_score = score;
            best = c;
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn search<R: Rng + ?Sized>(
    belief: &BeliefMap,
    state: AgentState,
    roi: &RoiSet,
    mask: &FovMask,
    cfg: &PuctConfig,
    formulation: Formulation,
    overlay: &mut Depletion,
    rng: &mut R,
) -> SearchReport {
    let grid = belief.grid();
    let model = Model::new(belief, roi, mask, cfg, formulation);
    overlay.reset_for(grid.area());

    let mut root = Node::new(state, OptionKind::Primitive(Action::Up), None);
    root.visits = 1;
    root.options = Some(model.available(state, overlay));
    let mut nodes = vec![root];
    let mut path: Vec<(usize, f64, u32)> = Vec::new();

    for _ in 0..cfg.iterations {
        overlay.reset();
        path.clear();
        let mut node = 0;
        let mut at = state;
        // One horizon per simulation, counted from the root, so options of
        // different lengths are compared over the same number of steps. The
        // first option is always simulated.
        let mut remaining = cfg.rollout_depth;
        while remaining > 0 || path.is_empty() {
            if nodes[node].options.is_none() {
                nodes[node].options = Some(model.available(at, overlay));
            }
            let opts = nodes[node].options.as_ref().unwrap();
            let expanded = nodes[node].children.len();
            if expanded < opts.len() {
                let (kind, target) = opts[expanded];
                let tr = model.transition(at, kind, target, overlay, remaining);
                let id = nodes.len();
                nodes.push(Node::new(tr.state, kind, target));
                nodes[node].children.push(id);
                path.push((id, tr.reward, tr.steps));
                remaining = remaining.saturating_sub(tr.steps);
                at = tr.state;
                break;
            }
            let child = select(&nodes, node, cfg.exploration);
            let tr = model.transition(at, nodes[child].kind, nodes[child].target, overlay, remaining);
            debug_assert_eq!(tr.state, nodes[child].state);
            path.push((child, tr.reward, tr.steps));
            remaining = remaining.saturating_sub(tr.steps);
            at = tr.state;
            node = child;
        }

        let mut ret = model.rollout(at, remaining, overlay, rng);
        for &(id, reward, steps) in path.iter().rev() {
            ret = reward + cfg.discount.powi(steps as i32) * ret;
            nodes[id].visits += 1;
            nodes[id].value_sum += ret;
        }
        nodes[0].visits += 1;
    }

    let root = &nodes[0];
    let children: Vec<ChildSummary> = root
        .children
        .iter()
        .map(|&c| ChildSummary {
            option: nodes[c].kind,
            visits: nodes[c].visits,
            value: nodes[c].q(),
        })
        .collect();

    let (kind, target) = if root.children.is_empty() {
        let opts = root.options.as_ref().unwrap();
        opts[rng.random_range(0..opts.len())]
    } else {
        let mut best = root.children[0];
        for &c in &root.children[1..] {
            let (b, n) = (&nodes[best], &nodes[c]);
            if n.visits > b.visits || (n.visits == b.visits && n.q() > b.q()) {
                best = c;
            }
        }
        (nodes[best].kind, nodes[best].target)
    };

    SearchReport {
        decision: Decision {
            option: materialize(state, kind, target, mask, grid),
            children,
        },
        root_visits: nodes[0].visits,
        tree_size: nodes.len(),
    }
}

/// Runs one PUCT search seeded from `cfg.rng_seed`.
pub fn puct_search(
    belief: &BeliefMap,
    state: AgentState,
    roi: &RoiSet,
    mask: &FovMask,
    cfg: &PuctConfig,
    formulation: Formulation,
) -> SearchReport {
    let mut overlay = Depletion::new(belief.grid().area());
    let mut rng = rng::seeded(cfg.rng_seed);
    search(belief, state, roi, mask, cfg, formulation, &mut overlay, &mut rng)
}

/// Next option chosen by PUCT; see [`puct_search`] for root statistics.
pub fn puct_plan(
    belief: &BeliefMap,
    state: AgentState,
    roi: &RoiSet,
    mask: &FovMask,
    cfg: &PuctConfig,
    formulation: Formulation,
) -> PlanOption {
    puct_search(belief, state, roi, mask, cfg, formulation).decision.option
}
