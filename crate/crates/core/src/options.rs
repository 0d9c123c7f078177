//! Macro-actions ("options") that carry the agent to a region's best cell.
//!
//! The option set at any state is the four primitive moves plus one
//! `GotoRoi(k)` per region whose current target cell is not the agent's own
//! cell. Goto options are produced unexpanded; [`expand_option`] fixes the
//! target from the live belief and lays out the path. With no obstacles the
//! axis-priority greedy walk is already a shortest path.

use serde::{Deserialize, Serialize};

use crate::gridworld::{step, Action, AgentState, BeliefMap, Cell, GridSpec};
use crate::roi::{roi_target_cell, RoiSet};
use crate::sensing::{resolve_fov, FovMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Primitive(Action),
    /// Travel to the most probable cell of region `k` (1-based).
    GotoRoi(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanOption {
    pub kind: OptionKind,
    /// Goto target once expanded.
    pub target: Option<Cell>,
    pub trajectory: Vec<Action>,
    /// Footprint after each trajectory step.
    pub swept_cells: Vec<Vec<Cell>>,
}

impl PlanOption {
    pub fn primitive(action: Action) -> Self {
        PlanOption {
            kind: OptionKind::Primitive(action),
            target: None,
            trajectory: vec![action],
            swept_cells: Vec::new(),
        }
    }

    pub fn goto(k: usize) -> Self {
        PlanOption {
            kind: OptionKind::GotoRoi(k),
            target: None,
            trajectory: Vec::new(),
            swept_cells: Vec::new(),
        }
    }

    pub fn is_primitive(&self) -> bool {
        matches!(self.kind, OptionKind::Primitive(_))
    }
}

/// Next move of the axis-priority greedy walk from `from` to `to`: the axis
/// with the larger remaining displacement goes first, rows on a tie.
#[inline]
pub fn greedy_step(from: Cell, to: Cell) -> Option<Action> {
    let dr = to.row as isize - from.row as isize;
    let dc = to.col as isize - from.col as isize;
    if dr == 0 && dc == 0 {
        None
    } else if dr.abs() >= dc.abs() {
        Some(if dr > 0 { Action::Down } else { Action::Up })
    } else {
        Some(if dc > 0 { Action::Right } else { Action::Left })
    }
}

/// Full greedy walk; its length is always the Manhattan distance.
pub fn greedy_path(from: Cell, to: Cell) -> Vec<Action> {
    let mut path = Vec::with_capacity(from.manhattan(to));
    let mut at = from;
    while let Some(a) = greedy_step(at, to) {
        let (dr, dc) = a.delta();
        at = Cell::new((at.row as isize + dr) as usize, (at.col as isize + dc) as usize);
        path.push(a);
    }
    path
}

pub fn available_options(state: AgentState, roi: &RoiSet, belief: &BeliefMap) -> Vec<PlanOption> {
    let mut out: Vec<PlanOption> = Action::ALL.iter().map(|&a| PlanOption::primitive(a)).collect();
    out.extend(
        (1..=roi.len())
            .filter(|&k| roi_target_cell(roi, k, belief) != state.position)
            .map(PlanOption::goto),
    );
    out
}

/// Fills in a goto option's target, trajectory and swept footprints from
/// `state`. Primitive options get their single footprint.
pub fn expand_option(
    opt: &PlanOption,
    state: AgentState,
    roi: &RoiSet,
    belief: &BeliefMap,
    mask: &FovMask,
    spec: GridSpec,
) -> PlanOption {
    let (target, trajectory) = match opt.kind {
        OptionKind::Primitive(a) => (None, vec![a]),
        OptionKind::GotoRoi(k) => {
            let target = roi_target_cell(roi, k, belief);
            (Some(target), greedy_path(state.position, target))
        }
    };
    let mut at = state;
    let swept_cells = trajectory
        .iter()
        .map(|&a| {
            at = step(at, a, spec);
            resolve_fov(mask, at, spec)
        })
        .collect();
    PlanOption {
        kind: opt.kind,
        target,
        trajectory,
        swept_cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::Heading;
    use crate::roi::watershed;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    /// Breadth-first shortest path length on an obstacle-free grid.
    fn bfs_distance(spec: GridSpec, from: Cell, to: Cell) -> usize {
        let mut dist = vec![usize::MAX; spec.area()];
        let mut queue = VecDeque::from([from]);
        dist[spec.index(from)] = 0;
        while let Some(c) = queue.pop_front() {
            if c == to {
                return dist[spec.index(c)];
            }
            for a in Action::ALL {
                let (dr, dc) = a.delta();
                if let Some(n) = spec.checked_cell(c.row as isize + dr, c.col as isize + dc) {
                    if dist[spec.index(n)] == usize::MAX {
                        dist[spec.index(n)] = dist[spec.index(c)] + 1;
                        queue.push_back(n);
                    }
                }
            }
        }
        unreachable!()
    }

    fn three_regions() -> (RoiSet, BeliefMap) {
        let spec = GridSpec::new(9, 9).unwrap();
        let mut w = vec![0.001; 81];
        for c in [Cell::new(2, 2), Cell::new(5, 8), Cell::new(8, 3)] {
            w[spec.index(c)] = 1.0;
        }
        let belief = BeliefMap::from_weights(spec, w).unwrap();
        let seeds = [Cell::new(2, 2), Cell::new(5, 8), Cell::new(8, 3)];
        let roi = watershed(&belief, &seeds, 0.1).unwrap();
        (roi, belief)
    }

    #[test]
    fn option_counts() {
        let (roi, belief) = three_regions();
        let spec = belief.grid();
        let away = AgentState::new(Cell::new(5, 5), Heading::North);
        assert_eq!(available_options(away, &RoiSet::empty(spec), &belief).len(), 4);
        assert_eq!(available_options(away, &roi, &belief).len(), 7);
        let on_two = AgentState::new(Cell::new(5, 8), Heading::North);
        let opts = available_options(on_two, &roi, &belief);
        assert_eq!(opts.len(), 6);
        assert!(!opts.iter().any(|o| o.kind == OptionKind::GotoRoi(2)));
    }

    #[test]
    fn straight_line_expansion() {
        let spec = GridSpec::new(5, 5).unwrap();
        let mut w = vec![0.0; 25];
        w[spec.index(Cell::new(1, 5))] = 1.0;
        let belief = BeliefMap::from_masses(spec, w).unwrap();
        let roi = watershed(&belief, &[Cell::new(1, 5)], 0.5).unwrap();
        let mask = FovMask::point(0.9, 0.9).unwrap();
        let start = AgentState::new(Cell::new(1, 1), Heading::North);
        let opt = expand_option(&PlanOption::goto(1), start, &roi, &belief, &mask, spec);
        assert_eq!(opt.trajectory, vec![Action::Right; 4]);
        assert_eq!(opt.swept_cells.len(), 4);
        assert_eq!(opt.swept_cells[3], vec![Cell::new(1, 5)]);
        assert_eq!(opt.target, Some(Cell::new(1, 5)));

        let there = AgentState::new(Cell::new(1, 5), Heading::East);
        let opt = expand_option(&PlanOption::goto(1), there, &roi, &belief, &mask, spec);
        assert!(opt.trajectory.is_empty());
    }

    #[test]
    fn diagonal_path_takes_rows_first() {
        let path = greedy_path(Cell::new(1, 1), Cell::new(4, 3));
        assert_eq!(path.len(), 5);
        assert_eq!(path.len(), bfs_distance(GridSpec::new(6, 6).unwrap(), Cell::new(1, 1), Cell::new(4, 3)));
        assert_eq!(path, vec![Action::Down, Action::Down, Action::Right, Action::Down, Action::Right]);
    }

    #[test]
    fn swept_cells_follow_heading() {
        let (roi, belief) = three_regions();
        let spec = belief.grid();
        let mask = FovMask::forward(0.9, 0.9).unwrap();
        let start = AgentState::new(Cell::new(9, 9), Heading::West);
        let opt = expand_option(&PlanOption::goto(1), start, &roi, &belief, &mask, spec);
        let mut at = start;
        for (a, swept) in opt.trajectory.iter().zip(&opt.swept_cells) {
            at = step(at, *a, spec);
            assert_eq!(at.heading, a.heading());
            assert_eq!(swept, &resolve_fov(&mask, at, spec));
        }
        assert_eq!(at.position, Cell::new(2, 2));
        assert_eq!(opt, expand_option(&PlanOption::goto(1), start, &roi, &belief, &mask, spec));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn greedy_paths_are_shortest(r0 in 1usize..=30, c0 in 1usize..=30, r1 in 1usize..=30, c1 in 1usize..=30) {
            let spec = GridSpec::new(30, 30).unwrap();
            let (from, to) = (Cell::new(r0, c0), Cell::new(r1, c1));
            let path = greedy_path(from, to);
            prop_assert_eq!(path.len(), bfs_distance(spec, from, to));
            let mut at = AgentState::new(from, Heading::North);
            for a in path {
                at = step(at, a, spec);
            }
            prop_assert_eq!(at.position, to);
        }
    }
}
