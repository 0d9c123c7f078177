//! Field-of-view geometry, observation sampling and belief updates.
//!
//! Two updates live here. [`exact_posterior`] is the full Bayes update used by
//! the simulator after every real step. [`planning_update`] is the cheap
//! approximation used inside planners: every observed cell is assumed to read
//! negative, only observed cells are touched, and nothing is renormalized.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{AgentState, BeliefMap, Cell, GridSpec, Heading};

/// Offset `(d_row, d_col)` relative to the agent, in the north-facing frame.
pub type Offset = (isize, isize);

/// Sensor footprint and detection rates.
///
/// Offsets are stored in the canonical north-facing frame; the four rotated
/// copies are precomputed so resolving a footprint never allocates more than
/// the output.
#[derive(Debug, Clone, PartialEq)]
pub struct FovMask {
    name: String,
    rotated: [Vec<Offset>; 4],
    p_tp: f64,
    p_tn: f64,
}

/// One clockwise quarter turn: north-frame `(di, dj)` becomes `(dj, -di)`.
pub fn rotate_quarter((di, dj): Offset) -> Offset {
    (dj, -di)
}

impl FovMask {
    pub const BUILTIN: [&'static str; 3] = ["point", "donut", "forward"];

    pub fn new(name: impl Into<String>, offsets: Vec<Offset>, p_tp: f64, p_tn: f64) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidMask("a mask needs at least one observable cell".into()));
        }
        for (label, p) in [("p_tp", p_tp), ("p_tn", p_tn)] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidMask(format!("{label} = {p} is outside (0, 1]")));
            }
        }
        let unique: BTreeSet<Offset> = offsets.iter().copied().collect();
        if unique.len() != offsets.len() {
            return Err(Error::InvalidMask("duplicate offsets".into()));
        }
        let east: Vec<Offset> = offsets.iter().map(|&o| rotate_quarter(o)).collect();
        let south: Vec<Offset> = east.iter().map(|&o| rotate_quarter(o)).collect();
        let west: Vec<Offset> = south.iter().map(|&o| rotate_quarter(o)).collect();
        Ok(FovMask {
            name: name.into(),
            rotated: [offsets, east, south, west],
            p_tp,
            p_tn,
        })
    }

    pub fn point(p_tp: f64, p_tn: f64) -> Result<Self> {
        Self::new("point", vec![(0, 0)], p_tp, p_tn)
    }

    /// Ring of Chebyshev radius 2 around the agent (16 cells).
    pub fn donut(p_tp: f64, p_tn: f64) -> Result<Self> {
        let offsets = (-2..=2isize)
            .flat_map(|di| (-2..=2isize).map(move |dj| (di, dj)))
            .filter(|&(di, dj)| di.abs().max(dj.abs()) == 2)
            .collect();
        Self::new("donut", offsets, p_tp, p_tn)
    }

    /// Three cells wide one step ahead, five wide two steps ahead.
    pub fn forward(p_tp: f64, p_tn: f64) -> Result<Self> {
        let mut offsets: Vec<Offset> = (-1..=1).map(|dj| (-1, dj)).collect();
        offsets.extend((-2..=2).map(|dj| (-2, dj)));
        Self::new("forward", offsets, p_tp, p_tn)
    }

    pub fn builtin(name: &str, p_tp: f64, p_tn: f64) -> Option<Result<Self>> {
        match name {
            "point" => Some(Self::point(p_tp, p_tn)),
            "donut" => Some(Self::donut(p_tp, p_tn)),
            "forward" => Some(Self::forward(p_tp, p_tn)),
            _ => None,
        }
    }

    /// Parses the text fixture format.
    ///
    /// Lines starting with `#` are comments. Every other non-blank line is a
    /// row of `.` (hidden) and `X` (observed). Exactly one agent marker must
    /// appear: `@` when the agent's own cell is hidden, `*` when it is
    /// observed. North is up.
    pub fn parse(name: impl Into<String>, text: &str, p_tp: f64, p_tn: f64) -> Result<Self> {
        let mut observed = Vec::new();
        let mut agent = None;
        let rows = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
        for (r, line) in rows.enumerate() {
            for (c, ch) in line.chars().enumerate() {
                let here = (r as isize, c as isize);
                match ch {
                    '.' | ' ' => {}
                    'X' | 'x' => observed.push(here),
                    '@' | '*' => {
                        if agent.replace(here).is_some() {
                            return Err(Error::InvalidMask("more than one agent marker".into()));
                        }
                        if ch == '*' {
                            observed.push(here);
                        }
                    }
                    other => {
                        return Err(Error::InvalidMask(format!(
                            "unexpected character {other:?} on mask row {}",
                            r + 1
                        )))
                    }
                }
            }
        }
        let (ar, ac) = agent.ok_or_else(|| Error::InvalidMask("no agent marker ('@' or '*')".into()))?;
        let offsets = observed.into_iter().map(|(r, c)| (r - ar, c - ac)).collect();
        Self::new(name, offsets, p_tp, p_tn)
    }

    pub fn load(path: &Path, p_tp: f64, p_tn: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self::parse(name, &text, p_tp, p_tn)
    }

    /// Built-in name or fixture path.
    pub fn resolve(name_or_path: &str, p_tp: f64, p_tn: f64) -> Result<Self> {
        match Self::builtin(name_or_path, p_tp, p_tn) {
            Some(mask) => mask,
            None => Self::load(Path::new(name_or_path), p_tp, p_tn),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// North-frame offsets.
    pub fn offsets(&self) -> &[Offset] {
        &self.rotated[0]
    }

    pub fn offsets_for(&self, heading: Heading) -> &[Offset] {
        &self.rotated[heading.quarter_turns()]
    }

    pub fn p_tp(&self) -> f64 {
        self.p_tp
    }

    pub fn p_tn(&self) -> f64 {
        self.p_tn
    }

    pub fn len(&self) -> usize {
        self.rotated[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// In-bounds footprint cells for `state`, in mask order.
    #[inline]
    pub fn cells<'a>(&'a self, state: AgentState, spec: GridSpec) -> impl Iterator<Item = Cell> + 'a {
        let (r, c) = (state.position.row as isize, state.position.col as isize);
        self.offsets_for(state.heading)
            .iter()
            .filter_map(move |&(di, dj)| spec.checked_cell(r + di, c + dj))
    }
}

/// Rotates the mask to the agent's heading, translates it to the agent's
/// cell, and drops out-of-bounds cells. May be empty near borders.
pub fn resolve_fov(mask: &FovMask, state: AgentState, spec: GridSpec) -> Vec<Cell> {
    mask.cells(state, spec).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reading {
    pub cell: Cell,
    pub positive: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub readings: Vec<Reading>,
}

impl Observation {
    pub fn reading_at(&self, cell: Cell) -> Option<bool> {
        self.readings.iter().find(|r| r.cell == cell).map(|r| r.positive)
    }

    /// True when the target's own cell was observed and read positive.
    pub fn detects(&self, target: Cell) -> bool {
        self.reading_at(target) == Some(true)
    }
}

/// Independent per-cell readings: the target cell reads positive with
/// probability `p_tp`, every other cell with probability `1 - p_tn`.
pub fn sample_observation<R: Rng + ?Sized>(
    fov_cells: &[Cell],
    target: Cell,
    mask: &FovMask,
    rng: &mut R,
) -> Observation {
    let readings = fov_cells
        .iter()
        .map(|&cell| {
            let p_positive = if cell == target { mask.p_tp } else { 1.0 - mask.p_tn };
            Reading {
                cell,
                positive: rng.random::<f64>() < p_positive,
            }
        })
        .collect();
    Observation { readings }
}

/// Likelihood of one reading given that the target is at the read cell.
#[inline]
fn likelihood_here(positive: bool, mask: &FovMask) -> f64 {
    if positive {
        mask.p_tp
    } else {
        1.0 - mask.p_tp
    }
}

/// Likelihood of one reading given that the target is elsewhere.
#[inline]
fn likelihood_elsewhere(positive: bool, mask: &FovMask) -> f64 {
    if positive {
        1.0 - mask.p_tn
    } else {
        mask.p_tn
    }
}

/// Joint Bayes update over all readings of one observation.
///
/// Every hypothesis outside the footprint sees the same likelihood, so the
/// update only rescales observed cells relative to the rest and then
/// renormalizes once.
pub fn exact_posterior(prior: &BeliefMap, obs: &Observation, mask: &FovMask) -> Result<BeliefMap> {
    let mut post = prior.clone();
    apply_exact_posterior(&mut post, obs, mask)?;
    Ok(post)
}

/// In-place form of [`exact_posterior`]. On error the map is left unchanged.
pub fn apply_exact_posterior(belief: &mut BeliefMap, obs: &Observation, mask: &FovMask) -> Result<()> {
    let grid = belief.grid();
    let n = obs.readings.len();
    if n == 0 {
        return Ok(());
    }
    let elsewhere: Vec<f64> = obs
        .readings
        .iter()
        .map(|r| likelihood_elsewhere(r.positive, mask))
        .collect();

    // Per observed cell, the likelihood relative to an unobserved hypothesis.
    // With a zero "elsewhere" factor the common factor vanishes, so fall back
    // to absolute likelihoods built from prefix/suffix products.
    let (outside, inside): (f64, Vec<f64>) = if elsewhere.iter().all(|&e| e > 0.0) {
        let ratios = obs
            .readings
            .iter()
            .zip(&elsewhere)
            .map(|(r, e)| likelihood_here(r.positive, mask) / e)
            .collect();
        (1.0, ratios)
    } else {
        let mut prefix = vec![1.0; n + 1];
        for k in 0..n {
            prefix[k + 1] = prefix[k] * elsewhere[k];
        }
        let mut suffix = vec![1.0; n + 1];
        for k in (0..n).rev() {
            suffix[k] = suffix[k + 1] * elsewhere[k];
        }
        let abs = (0..n)
            .map(|k| prefix[k] * suffix[k + 1] * likelihood_here(obs.readings[k].positive, mask))
            .collect();
        (prefix[n], abs)
    };

    let indices: Vec<usize> = obs.readings.iter().map(|r| grid.index(r.cell)).collect();
    let slice = belief.as_mut_slice();
    let saved: Vec<f64> = indices.iter().map(|&k| slice[k]).collect();
    if outside == 1.0 {
        for (&k, w) in indices.iter().zip(&inside) {
            slice[k] *= w;
        }
        let total: f64 = slice.iter().sum();
        if !(total > 0.0) {
            for (&k, p) in indices.iter().zip(&saved) {
                slice[k] = *p;
            }
            return Err(Error::DegenerateEvidence);
        }
        let inv = 1.0 / total;
        slice.iter_mut().for_each(|m| *m *= inv);
    } else {
        let mut scratch: Vec<f64> = slice.iter().map(|m| m * outside).collect();
        for ((&k, w), p) in indices.iter().zip(&inside).zip(&saved) {
            scratch[k] = p * w;
        }
        let total: f64 = scratch.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateEvidence);
        }
        let inv = 1.0 / total;
        for (m, s) in slice.iter_mut().zip(&scratch) {
            *m = s * inv;
        }
    }
    Ok(())
}

/// Planner-side update: each footprint cell is scaled by `1 - p_tp` (an
/// assumed negative reading); other cells are untouched and the result is
/// not renormalized.
pub fn planning_update(belief: &BeliefMap, fov_cells: &[Cell], p_tp: f64) -> BeliefMap {
    let mut out = belief.clone();
    let grid = out.grid();
    let slice = out.as_mut_slice();
    for &c in fov_cells {
        slice[grid.index(c)] *= 1.0 - p_tp;
    }
    out
}

/// Sum of belief mass over footprint cells.
pub fn fov_mass(belief: &BeliefMap, fov_cells: &[Cell]) -> f64 {
    fov_cells.iter().map(|&c| belief.mass(c)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    const FIXTURES: [(&str, &str); 3] = [
        ("point", include_str!("../masks/point.mask")),
        ("donut", include_str!("../masks/donut.mask")),
        ("forward", include_str!("../masks/forward.mask")),
    ];

    fn spec(r: usize, c: usize) -> GridSpec {
        GridSpec::new(r, c).unwrap()
    }

    fn sorted(mut v: Vec<Offset>) -> Vec<Offset> {
        v.sort();
        v
    }

    #[test]
    fn builtins_match_fixture_files() {
        for (name, text) in FIXTURES {
            let parsed = FovMask::parse(name, text, 0.9, 0.9).unwrap();
            let built = FovMask::builtin(name, 0.9, 0.9).unwrap().unwrap();
            assert_eq!(sorted(parsed.offsets().to_vec()), sorted(built.offsets().to_vec()), "{name}");
        }
        assert_eq!(FovMask::donut(0.9, 0.9).unwrap().len(), 16);
        assert_eq!(FovMask::forward(0.9, 0.9).unwrap().len(), 8);
    }

    #[test]
    fn mask_parse_errors() {
        assert!(FovMask::parse("m", "X.X\n", 0.9, 0.9).is_err());
        assert!(FovMask::parse("m", "@@\n", 0.9, 0.9).is_err());
        assert!(FovMask::parse("m", "@\n", 0.9, 0.9).is_err());
        assert!(FovMask::parse("m", "X?@\n", 0.9, 0.9).is_err());
        assert!(FovMask::point(0.0, 0.9).is_err());
        assert!(FovMask::point(0.9, 1.5).is_err());
    }

    #[test]
    fn point_mask_ignores_heading() {
        let mask = FovMask::point(0.9, 0.9).unwrap();
        for h in Heading::ALL {
            let state = AgentState::new(Cell::new(5, 5), h);
            assert_eq!(resolve_fov(&mask, state, spec(9, 9)), vec![Cell::new(5, 5)]);
        }
    }

    #[test]
    fn forward_mask_rotates_with_heading() {
        let mask = FovMask::parse("forward", FIXTURES[2].1, 0.9, 0.9).unwrap();
        let grid = spec(20, 20);
        let at = Cell::new(10, 10);
        // Oracle: brute-force rotation by the explicit matrix for each turn.
        let turn = |(di, dj): Offset, k: usize| -> Offset {
            (0..k).fold((di, dj), |(a, b), _| (b, -a))
        };
        for h in Heading::ALL {
            let got = resolve_fov(&mask, AgentState::new(at, h), grid);
            let want: Vec<Cell> = mask
                .offsets()
                .iter()
                .map(|&o| {
                    let (di, dj) = turn(o, h.quarter_turns());
                    Cell::new((10 + di) as usize, (10 + dj) as usize)
                })
                .collect();
            assert_eq!(got, want);
        }
        // Facing east the nearest row of the camera sits one column ahead.
        let east = resolve_fov(&mask, AgentState::new(at, Heading::East), grid);
        assert!(east.contains(&Cell::new(10, 11)));
        assert!(east.contains(&Cell::new(8, 12)));
        assert!(east.iter().all(|c| c.col > 10));
    }

    #[test]
    fn donut_is_clipped_at_the_corner() {
        let mask = FovMask::donut(0.9, 0.9).unwrap();
        let got = resolve_fov(&mask, AgentState::new(Cell::new(1, 1), Heading::North), spec(10, 10));
        let want = vec![Cell::new(1, 3), Cell::new(2, 3), Cell::new(3, 1), Cell::new(3, 2), Cell::new(3, 3)];
        let mut got = got;
        got.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn observation_sampling_edge_rates() {
        let mut rng = rng::seeded(3);
        let cells = [Cell::new(1, 1), Cell::new(1, 2), Cell::new(2, 2)];
        let sure = FovMask::point(1.0, 0.9).unwrap();
        for _ in 0..1000 {
            assert!(sample_observation(&cells, Cell::new(1, 2), &sure, &mut rng).detects(Cell::new(1, 2)));
        }
        let clean = FovMask::point(0.9, 1.0).unwrap();
        for _ in 0..1000 {
            let obs = sample_observation(&cells, Cell::new(5, 5), &clean, &mut rng);
            assert!(obs.readings.iter().all(|r| !r.positive));
        }
    }

    #[test]
    fn observation_frequency_matches_rate() {
        let mask = FovMask::point(0.9, 0.9).unwrap();
        let mut rng = rng::seeded(4);
        let target = Cell::new(2, 2);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| sample_observation(&[target], target, &mask, &mut rng).detects(target))
            .count();
        assert!((hits as f64 / n as f64 - 0.9).abs() < 0.01);
    }

    #[test]
    fn posterior_after_single_negative_reading() {
        let grid = spec(1, 2);
        let prior = BeliefMap::uniform(grid);
        let mask = FovMask::point(0.9, 0.9).unwrap();
        let obs = Observation {
            readings: vec![Reading { cell: Cell::new(1, 1), positive: false }],
        };
        let post = exact_posterior(&prior, &obs, &mask).unwrap();
        assert!((post.mass(Cell::new(1, 1)) - 0.1).abs() < 1e-15);
        assert!((post.mass(Cell::new(1, 2)) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn posterior_special_cases() {
        let grid = spec(3, 3);
        let mask = FovMask::point(0.9, 0.9).unwrap();
        let point = BeliefMap::point_mass(grid, Cell::new(2, 2)).unwrap();
        let obs = Observation {
            readings: vec![Reading { cell: Cell::new(2, 2), positive: true }],
        };
        assert_eq!(exact_posterior(&point, &obs, &mask).unwrap(), point);

        let coin = FovMask::point(0.5, 0.5).unwrap();
        let prior = BeliefMap::from_weights(grid, (1..=9).map(f64::from).collect()).unwrap();
        let obs = Observation {
            readings: vec![
                Reading { cell: Cell::new(1, 1), positive: true },
                Reading { cell: Cell::new(3, 2), positive: false },
            ],
        };
        let post = exact_posterior(&prior, &obs, &coin).unwrap();
        for (a, b) in post.as_slice().iter().zip(prior.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn contradictory_evidence_is_reported() {
        let grid = spec(1, 2);
        let prior = BeliefMap::point_mass(grid, Cell::new(1, 1)).unwrap();
        let blind = FovMask::point(1.0, 0.9).unwrap();
        let obs = Observation {
            readings: vec![Reading { cell: Cell::new(1, 1), positive: false }],
        };
        assert!(matches!(exact_posterior(&prior, &obs, &blind), Err(Error::DegenerateEvidence)));

        // p_tn = 1 with a positive reading: only the read cell survives.
        let clean = FovMask::point(0.9, 1.0).unwrap();
        let prior = BeliefMap::uniform(grid);
        let obs = Observation {
            readings: vec![Reading { cell: Cell::new(1, 2), positive: true }],
        };
        let post = exact_posterior(&prior, &obs, &clean).unwrap();
        assert_eq!(post.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn planning_update_examples() {
        let grid = spec(1, 2);
        let b = BeliefMap::uniform(grid);
        let cell = [Cell::new(1, 1)];
        let once = planning_update(&b, &cell, 0.9);
        assert!((once.mass(Cell::new(1, 1)) - 0.05).abs() < 1e-15);
        assert_eq!(once.mass(Cell::new(1, 2)), 0.5);
        assert_eq!(planning_update(&b, &cell, 0.0), b);

        let unit = BeliefMap::point_mass(grid, Cell::new(1, 1)).unwrap();
        let twice = planning_update(&planning_update(&unit, &cell, 0.9), &cell, 0.9);
        assert!((twice.mass(Cell::new(1, 1)) - 0.01).abs() < 1e-15);
    }

    /// Direct joint-likelihood enumeration over every hypothesis cell.
    fn enumerate_posterior(prior: &BeliefMap, obs: &Observation, p_tp: f64, p_tn: f64) -> Vec<f64> {
        let grid = prior.grid();
        let un: Vec<f64> = grid
            .cells()
            .map(|h| {
                let like: f64 = obs
                    .readings
                    .iter()
                    .map(|r| match (r.cell == h, r.positive) {
                        (true, true) => p_tp,
                        (true, false) => 1.0 - p_tp,
                        (false, true) => 1.0 - p_tn,
                        (false, false) => p_tn,
                    })
                    .product();
                prior.mass(h) * like
            })
            .collect();
        let z: f64 = un.iter().sum();
        un.into_iter().map(|u| u / z).collect()
    }

    proptest! {
        #[test]
        fn posterior_matches_enumeration(
            rows in 1usize..6,
            cols in 1usize..6,
            weights in proptest::collection::vec(0.01f64..1.0, 25),
            picks in proptest::collection::vec((0usize..25, any::<bool>()), 1..4),
            p_tp in 0.05f64..0.99,
            p_tn in 0.05f64..0.99,
        ) {
            let grid = spec(rows, cols);
            let prior = BeliefMap::from_weights(grid, weights[..grid.area()].to_vec()).unwrap();
            let mut seen = BTreeSet::new();
            let readings: Vec<Reading> = picks
                .iter()
                .filter(|(k, _)| seen.insert(k % grid.area()))
                .map(|&(k, positive)| Reading { cell: grid.cell_at(k % grid.area()), positive })
                .collect();
            let obs = Observation { readings };
            let mask = FovMask::point(p_tp, p_tn).unwrap();
            let post = exact_posterior(&prior, &obs, &mask).unwrap();
            let oracle = enumerate_posterior(&prior, &obs, p_tp, p_tn);
            for (a, b) in post.as_slice().iter().zip(&oracle) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!(post.is_normalized(1e-9));
        }

        #[test]
        fn planning_update_never_adds_mass(
            weights in proptest::collection::vec(0.0f64..1.0, 16),
            picks in proptest::collection::vec(0usize..16, 0..6),
            p_tp in 0.0f64..=1.0,
        ) {
            let grid = spec(4, 4);
            let b = BeliefMap::from_masses(grid, weights).unwrap();
            let mut cells: Vec<Cell> = picks.iter().map(|&k| grid.cell_at(k)).collect();
            cells.dedup();
            let after = planning_update(&b, &cells, p_tp);
            for (x, y) in after.as_slice().iter().zip(b.as_slice()) {
                prop_assert!(x <= y);
            }
            prop_assert!(after.total() <= b.total() + 1e-15);
        }

        #[test]
        fn four_quarter_turns_are_identity(di in -5isize..=5, dj in -5isize..=5) {
            let mut o = (di, dj);
            for _ in 0..4 {
                o = rotate_quarter(o);
            }
            prop_assert_eq!(o, (di, dj));
        }

        #[test]
        fn negative_reading_lowers_observed_cell(
            weights in proptest::collection::vec(0.01f64..1.0, 9),
            k in 0usize..9,
            p in 0.51f64..0.99,
        ) {
            let grid = spec(3, 3);
            let prior = BeliefMap::from_weights(grid, weights).unwrap();
            let cell = grid.cell_at(k);
            let mask = FovMask::point(p, p).unwrap();
            let obs = Observation { readings: vec![Reading { cell, positive: false }] };
            let post = exact_posterior(&prior, &obs, &mask).unwrap();
            for other in grid.cells().filter(|&c| c != cell) {
                // The observed cell loses ground relative to every unobserved one.
                prop_assert!(post.mass(cell) / post.mass(other) < prior.mass(cell) / prior.mass(other));
            }
        }
    }
}
