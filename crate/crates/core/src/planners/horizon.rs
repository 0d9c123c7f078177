//! Receding-horizon baselines: a greedy cell picker and direct policy search.

use rand::Rng;

use super::{materialize, ChildSummary, Decision, Depletion, HorizonConfig};
use crate::gridworld::{step, Action, AgentState, BeliefMap, Cell};
use crate::options::{greedy_step, OptionKind, PlanOption};
use crate::rng;
use crate::sensing::FovMask;

/// Footprint mass of `state` on `belief` scaled by the overlay.
#[inline]
fn live_mass(belief: &BeliefMap, mask: &FovMask, state: AgentState, overlay: &Depletion) -> f64 {
    let grid = belief.grid();
    mask.cells(state, grid)
        .map(|c| {
            let i = grid.index(c);
            belief.mass_at(i) * overlay.factor(i)
        })
        .sum()
}

pub(crate) fn greedy_decide(
    belief: &BeliefMap,
    state: AgentState,
    mask: &FovMask,
    cfg: &HorizonConfig,
) -> Decision {
    let grid = belief.grid();
    let h = cfg.horizon as isize;
    let (r0, c0) = (state.position.row as isize, state.position.col as isize);
    let mut best: Option<(f64, Cell)> = None;
    // Row-major scan, so a strict comparison keeps the lexicographic winner.
    for dr in -h..=h {
        let span = h - dr.abs();
        for dc in -span..=span {
            let Some(cell) = grid.checked_cell(r0 + dr, c0 + dc) else { continue };
            let Some(first) = greedy_step(state.position, cell) else { continue };
            let probe = AgentState::new(cell, first.heading());
            let score: f64 = mask.cells(probe, grid).map(|c| belief.mass(c)).sum();
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, cell));
            }
        }
    }
    // The horizon is at least one and every grid has a neighbour unless it is 1x1.
    let action = best
        .and_then(|(_, cell)| greedy_step(state.position, cell))
        .unwrap_or(Action::Up);
    Decision {
        option: materialize(state, OptionKind::Primitive(action), None, mask, grid),
        children: Vec::new(),
    }
}

pub(crate) fn dps_decide<R: Rng + ?Sized>(
    belief: &BeliefMap,
    state: AgentState,
    mask: &FovMask,
    cfg: &HorizonConfig,
    overlay: &mut Depletion,
    rng: &mut R,
) -> Decision {
    let grid = belief.grid();
    let keep = 1.0 - mask.p_tp();
    overlay.reset_for(grid.area());

    let observe = |at: AgentState, overlay: &mut Depletion| {
        let mut sum = 0.0;
        for c in mask.cells(at, grid) {
            let i = grid.index(c);
            sum += belief.mass_at(i) * overlay.factor(i);
            overlay.deplete(i, keep);
        }
        sum
    };

    let mut children = Vec::with_capacity(4);
    for first in Action::ALL {
        let mut total = 0.0;
        for _ in 0..cfg.rollouts_per_action {
            overlay.reset();
            let mut at = step(state, first, grid);
            let mut ret = observe(at, overlay);
            for _ in 1..cfg.horizon {
                let a = if rng.random::<f64>() < cfg.epsilon {
                    Action::ALL[rng.random_range(0..4)]
                } else {
                    let mut best = Action::Up;
                    let mut best_mass = f64::NEG_INFINITY;
                    for a in Action::ALL {
                        let m = live_mass(belief, mask, step(at, a, grid), overlay);
                        if m > best_mass {
                            best_mass = m;
                            best = a;
                        }
                    }
                    best
                };
                at = step(at, a, grid);
                ret += observe(at, overlay);
            }
            total += ret;
        }
        children.push(ChildSummary {
            option: OptionKind::Primitive(first),
            visits: cfg.rollouts_per_action,
            value: total / cfg.rollouts_per_action as f64,
        });
    }

    let mut best = 0;
    for (i, c) in children.iter().enumerate().skip(1) {
        if c.value > children[best].value {
            best = i;
        }
    }
    Decision {
        option: materialize(state, children[best].option, None, mask, grid),
        children,
    }
}

/// First step toward the cell with the largest footprint mass within
/// `cfg.horizon` moves. The footprint at a candidate cell is taken with the
/// heading of the first step toward it. Ties go to the smallest `(row, col)`.
pub fn greedy_plan(belief: &BeliefMap, state: AgentState, mask: &FovMask, cfg: &HorizonConfig) -> PlanOption {
    greedy_decide(belief, state, mask, cfg).option
}

/// Direct policy search: for each first move, the mean footprint mass
/// collected by `cfg.rollouts_per_action` ε-greedy rollouts of `cfg.horizon`
/// steps, with planning updates along each rollout. Returns the first move
/// with the highest mean.
pub fn dps_plan(belief: &BeliefMap, state: AgentState, mask: &FovMask, cfg: &HorizonConfig, seed: u64) -> PlanOption {
    let mut overlay = Depletion::new(belief.grid().area());
    let mut rng = rng::seeded(seed);
    dps_decide(belief, state, mask, cfg, &mut overlay, &mut rng).option
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{GridSpec, Heading};
    use crate::options::greedy_path;

    fn first_action(opt: &PlanOption) -> Action {
        match opt.kind {
            OptionKind::Primitive(a) => a,
            OptionKind::GotoRoi(_) => panic!("baselines only return primitives"),
        }
    }

    #[test]
    fn greedy_heads_for_the_only_mass() {
        let grid = GridSpec::new(30, 30).unwrap();
        let mask = FovMask::point(0.9, 0.9).unwrap();
        let start = AgentState::new(Cell::new(15, 15), Heading::North);
        let cfg = HorizonConfig::default();
        for target in [(20, 22), (3, 15), (15, 1), (10, 18)] {
            let target = Cell::new(target.0, target.1);
            let belief = BeliefMap::point_mass(grid, target).unwrap();
            let opt = greedy_plan(&belief, start, &mask, &cfg);
            assert_eq!(first_action(&opt), greedy_path(start.position, target)[0]);
            assert_eq!(opt.swept_cells.len(), 1);
        }
    }

    #[test]
    fn greedy_tie_break_on_a_uniform_belief() {
        let grid = GridSpec::new(30, 30).unwrap();
        let belief = BeliefMap::uniform(grid);
        let mask = FovMask::point(0.9, 0.9).unwrap();
        let start = AgentState::new(Cell::new(15, 15), Heading::East);
        let opt = greedy_plan(&belief, start, &mask, &HorizonConfig::default());
        assert_eq!(first_action(&opt), Action::Up);
    }

    #[test]
    fn greedy_is_total_on_a_blank_horizon() {
        let grid = GridSpec::new(40, 40).unwrap();
        let mut w = vec![0.0; grid.area()];
        w[grid.index(Cell::new(40, 40))] = 1.0;
        let belief = BeliefMap::from_masses(grid, w).unwrap();
        let mask = FovMask::point(0.9, 0.9).unwrap();
        let start = AgentState::new(Cell::new(1, 1), Heading::North);
        let cfg = HorizonConfig { horizon: 5, ..Default::default() };
        let opt = greedy_plan(&belief, start, &mask, &cfg);
        assert!(opt.is_primitive());

        let tiny = GridSpec::new(1, 1).unwrap();
        let one = BeliefMap::uniform(tiny);
        let opt = greedy_plan(&one, AgentState::new(Cell::new(1, 1), Heading::North), &mask, &cfg);
        assert!(opt.is_primitive());
    }

    #[test]
    fn dps_without_exploration_steps_onto_adjacent_mass() {
        let grid = GridSpec::new(9, 9).unwrap();
        let mask = FovMask::point(0.9, 0.9).unwrap();
        let start = AgentState::new(Cell::new(5, 5), Heading::North);
        let cfg = HorizonConfig { epsilon: 0.0, horizon: 5, rollouts_per_action: 3 };
        for (cell, want) in [
            ((4, 5), Action::Up),
            ((6, 5), Action::Down),
            ((5, 4), Action::Left),
            ((5, 6), Action::Right),
        ] {
            let mut w = vec![0.001; grid.area()];
            w[grid.index(Cell::new(cell.0, cell.1))] = 1.0;
            let belief = BeliefMap::from_weights(grid, w).unwrap();
            assert_eq!(first_action(&dps_plan(&belief, start, &mask, &cfg, 9)), want);
        }
    }

    #[test]
    fn dps_random_rollouts_are_symmetric_on_a_uniform_belief() {
        let grid = GridSpec::new(41, 41).unwrap();
        let belief = BeliefMap::uniform(grid);
        let mask = FovMask::donut(0.9, 0.9).unwrap();
        let start = AgentState::new(Cell::new(21, 21), Heading::North);
        let cfg = HorizonConfig { epsilon: 1.0, horizon: 10, rollouts_per_action: 4000 };
        let mut overlay = Depletion::new(grid.area());
        let mut rng = rng::seeded(5);
        let d = dps_decide(&belief, start, &mask, &cfg, &mut overlay, &mut rng);
        let values: Vec<f64> = d.children.iter().map(|c| c.value).collect();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((hi - lo) / hi < 0.05, "{values:?}");
    }

    #[test]
    fn dps_is_deterministic_and_non_mutating() {
        let grid = GridSpec::new(20, 20).unwrap();
        let belief = crate::gridworld::generate_prior(grid, &Default::default()).unwrap();
        let before = belief.to_bytes();
        let mask = FovMask::forward(0.9, 0.9).unwrap();
        let start = AgentState::new(Cell::new(10, 10), Heading::South);
        let cfg = HorizonConfig::default();
        assert_eq!(dps_plan(&belief, start, &mask, &cfg, 4), dps_plan(&belief, start, &mask, &cfg, 4));
        assert_eq!(belief.to_bytes(), before);
    }
}
