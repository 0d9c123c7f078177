//! Region-of-interest segmentation.
//!
//! Seeds are the local maxima of the prior at or above a threshold `τ`. A
//! marker-based watershed then grows every seed over 4-connected neighbours
//! in order of decreasing mass; a cell belongs to whichever region reaches it
//! first, and growth never enters cells below `τ`. Segmentation runs once on
//! the initial prior and region membership is frozen from then on.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{BeliefMap, Cell, GridSpec};

/// Default `τ` as a fraction of the largest prior cell mass.
pub const DEFAULT_THRESHOLD_FRACTION: f64 = 0.25;

const NEIGHBORS_4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

fn neighbors(
    spec: GridSpec,
    cell: Cell,
    offsets: &'static [(isize, isize)],
) -> impl Iterator<Item = Cell> {
    offsets
        .iter()
        .filter_map(move |&(dr, dc)| spec.checked_cell(cell.row as isize + dr, cell.col as isize + dc))
}

/// Statistics of one region, computed on the prior it was segmented from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    pub seed: Cell,
    /// Mean 1-based `(row, col)` of member cells.
    pub centroid: (f64, f64),
    pub cell_count: usize,
    pub mean_mass: f64,
}

/// Labeled partition of the high-probability cells.
///
/// Label 0 is background; regions are numbered `1..=Q` in seed order.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiSet {
    grid: GridSpec,
    threshold: f64,
    labels: Vec<u32>,
    regions: Vec<Region>,
    members: Vec<Vec<usize>>,
}

impl RoiSet {
    /// No regions at all.
    pub fn empty(grid: GridSpec) -> Self {
        RoiSet {
            grid,
            threshold: 1.0,
            labels: vec![0; grid.area()],
            regions: Vec::new(),
            members: Vec::new(),
        }
    }

    /// Seeds and grows regions on `prior` with an absolute threshold.
    pub fn segment(prior: &BeliefMap, threshold: f64) -> Result<Self> {
        let seeds = find_seeds(prior, threshold);
        watershed(prior, &seeds, threshold)
    }

    /// Segments with `τ = fraction * max mass`.
    pub fn segment_relative(prior: &BeliefMap, fraction: f64) -> Result<Self> {
        Self::segment(prior, fraction * prior.max_mass())
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Number of regions `Q`.
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn label(&self, cell: Cell) -> u32 {
        self.labels[self.grid.index(cell)]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Region `k` (1-based).
    pub fn region(&self, k: usize) -> &Region {
        &self.regions[k - 1]
    }

    /// Flat indices of region `k`'s cells, ascending.
    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k - 1]
    }

    pub fn seeds(&self) -> Vec<Cell> {
        self.regions.iter().map(|r| r.seed).collect()
    }

    /// Mean of `belief` over region `k`.
    pub fn mean_mass_in(&self, k: usize, belief: &BeliefMap) -> f64 {
        let cells = self.members(k);
        cells.iter().map(|&i| belief.mass_at(i)).sum::<f64>() / cells.len() as f64
    }

    /// Label matrix as CSV, one line per grid row.
    pub fn labels_csv(&self) -> String {
        let mut out = String::new();
        for row in self.labels.chunks(self.grid.cols) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> RoiSummary {
        RoiSummary {
            rows: self.grid.rows,
            cols: self.grid.cols,
            threshold: self.threshold,
            region_count: self.regions.len(),
            regions: self.regions.clone(),
        }
    }

    /// Binary PPM (P6) rendering: prior mass in grey, regions tinted with
    /// distinct hues, seeds in white.
    pub fn render_ppm(&self, prior: &BeliefMap) -> Vec<u8> {
        let max = prior.max_mass().max(f64::MIN_POSITIVE);
        let mut out = format!("P6\n{} {}\n255\n", self.grid.cols, self.grid.rows).into_bytes();
        let seeds: Vec<usize> = self.regions.iter().map(|r| self.grid.index(r.seed)).collect();
        for (k, &label) in self.labels.iter().enumerate() {
            let shade = (prior.mass_at(k) / max).clamp(0.0, 1.0);
            let rgb = if seeds.contains(&k) {
                [255, 255, 255]
            } else if label == 0 {
                let g = (shade * 96.0).round() as u8;
                [g, g, g]
            } else {
                let [r, g, b] = region_color(label as usize);
                let s = 0.45 + 0.55 * shade;
                [
                    (r as f64 * s).round() as u8,
                    (g as f64 * s).round() as u8,
                    (b as f64 * s).round() as u8,
                ]
            };
            out.extend_from_slice(&rgb);
        }
        out
    }
}

/// Golden-angle hue walk so neighbouring ids get well separated colours.
fn region_color(id: usize) -> [u8; 3] {
    let hue = (id as f64 * 137.507_764) % 360.0;
    let x = 1.0 - ((hue / 60.0) % 2.0 - 1.0).abs();
    let (r, g, b) = match (hue / 60.0) as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

/// JSON summary for the segmentation debug dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiSummary {
    pub rows: usize,
    pub cols: usize,
    pub threshold: f64,
    pub region_count: usize,
    pub regions: Vec<Region>,
}

/// Local maxima with mass at least `threshold`.
///
/// A cell qualifies when no 8-neighbour is heavier. Cells tied with a
/// neighbour form a plateau; a plateau that nothing around it exceeds yields
/// a single seed, its lexicographically smallest cell. Output is sorted by
/// descending mass, then by `(row, col)`.
pub fn find_seeds(prior: &BeliefMap, threshold: f64) -> Vec<Cell> {
    let spec = prior.grid();
    let mut visited = vec![false; spec.area()];
    let mut seeds = Vec::new();
    for idx in 0..spec.area() {
        if visited[idx] {
            continue;
        }
        let m = prior.mass_at(idx);
        if m < threshold {
            continue;
        }
        let cell = spec.cell_at(idx);
        let mut higher = false;
        let mut tied = false;
        for n in neighbors(spec, cell, &NEIGHBORS_8) {
            let nm = prior.mass(n);
            higher |= nm > m;
            tied |= nm == m;
        }
        if higher {
            continue;
        }
        if !tied {
            seeds.push(cell);
            continue;
        }
        // Walk the plateau; it is a maximum only if nothing borders it from above.
        let mut stack = vec![idx];
        visited[idx] = true;
        let mut smallest = idx;
        let mut is_max = true;
        while let Some(k) = stack.pop() {
            smallest = smallest.min(k);
            for n in neighbors(spec, spec.cell_at(k), &NEIGHBORS_8) {
                let ni = spec.index(n);
                let nm = prior.mass_at(ni);
                if nm > m {
                    is_max = false;
                } else if nm == m && !visited[ni] {
                    visited[ni] = true;
                    stack.push(ni);
                }
            }
        }
        if is_max {
            seeds.push(spec.cell_at(smallest));
        }
    }
    seeds.sort_by(|a, b| prior.mass(*b).total_cmp(&prior.mass(*a)).then(a.cmp(b)));
    seeds
}

#[derive(Debug, PartialEq)]
struct Pending {
    mass: f64,
    seq: u64,
    index: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        // Heaviest first; among equals, earliest claimed first.
        self.mass
            .total_cmp(&other.mass)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Marker-based watershed from `seeds` over cells with mass `>= threshold`.
pub fn watershed(prior: &BeliefMap, seeds: &[Cell], threshold: f64) -> Result<RoiSet> {
    let spec = prior.grid();
    let mut labels = vec![0u32; spec.area()];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for (k, &seed) in seeds.iter().enumerate() {
        spec.check(seed)?;
        let idx = spec.index(seed);
        if labels[idx] != 0 {
            return Err(Error::InvalidBelief(format!("seed {seed} listed twice")));
        }
        if prior.mass_at(idx) < threshold {
            return Err(Error::InvalidBelief(format!(
                "seed {seed} has mass below the threshold {threshold}"
            )));
        }
        labels[idx] = k as u32 + 1;
        heap.push(Pending { mass: prior.mass_at(idx), seq, index: idx });
        seq += 1;
    }
    while let Some(Pending { index, .. }) = heap.pop() {
        let label = labels[index];
        for n in neighbors(spec, spec.cell_at(index), &NEIGHBORS_4) {
            let ni = spec.index(n);
            let nm = prior.mass_at(ni);
            if labels[ni] == 0 && nm >= threshold {
                labels[ni] = label;
                heap.push(Pending { mass: nm, seq, index: ni });
                seq += 1;
            }
        }
    }

    let mut members = vec![Vec::new(); seeds.len()];
    for (idx, &l) in labels.iter().enumerate() {
        if l > 0 {
            members[l as usize - 1].push(idx);
        }
    }
    let regions = seeds
        .iter()
        .zip(&members)
        .enumerate()
        .map(|(k, (&seed, cells))| {
            let n = cells.len() as f64;
            let (sr, sc, sm) = cells.iter().fold((0.0, 0.0, 0.0), |(r, c, m), &i| {
                let cell = spec.cell_at(i);
                (r + cell.row as f64, c + cell.col as f64, m + prior.mass_at(i))
            });
            Region {
                id: k + 1,
                seed,
                centroid: (sr / n, sc / n),
                cell_count: cells.len(),
                mean_mass: sm / n,
            }
        })
        .collect();
    Ok(RoiSet {
        grid: spec,
        threshold,
        labels,
        regions,
        members,
    })
}

/// Most probable cell of region `k` under the live `belief`; ties go to the
/// lexicographically smallest cell.
pub fn roi_target_cell(roi: &RoiSet, k: usize, belief: &BeliefMap) -> Cell {
    let spec = roi.grid();
    let mut best = roi.members(k)[0];
    for &i in &roi.members(k)[1..] {
        if belief.mass_at(i) > belief.mass_at(best) {
            best = i;
        }
    }
    spec.cell_at(best)
}

/// Per-region candidates sorted by mass for fast argmax under depletion.
///
/// Planners query region targets many times per decision on a belief that
/// only ever *loses* mass relative to the snapshot the index was built from.
/// Scanning the sorted candidates and stopping once the snapshot mass drops
/// below the best live mass found so far gives the exact argmax without
/// touching the whole region.
#[derive(Debug, Clone)]
pub struct TargetIndex {
    candidates: Vec<Vec<(f64, usize)>>,
}

impl TargetIndex {
    pub const DEFAULT_DEPTH: usize = 48;

    pub fn build(roi: &RoiSet, belief: &BeliefMap, depth: usize) -> Self {
        let depth = depth.max(1);
        let candidates = (1..=roi.len())
            .map(|k| {
                let mut all: Vec<(f64, usize)> =
                    roi.members(k).iter().map(|&i| (belief.mass_at(i), i)).collect();
                let by_rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
                if all.len() > depth {
                    all.select_nth_unstable_by(depth - 1, by_rank);
                    all.truncate(depth);
                }
                all.sort_unstable_by(by_rank);
                all
            })
            .collect();
        TargetIndex { candidates }
    }

    /// Flat index of region `k`'s argmax under `live`, which must never
    /// exceed the snapshot mass of any cell.
    pub fn target(&self, roi: &RoiSet, k: usize, live: impl Fn(usize) -> f64) -> usize {
        let list = &self.candidates[k - 1];
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        let better = |m: f64, i: usize, best: (f64, usize)| m > best.0 || (m == best.0 && i < best.1);
        for &(base, i) in list {
            if base < best.0 {
                return best.1;
            }
            let m = live(i);
            if better(m, i, best) {
                best = (m, i);
            }
        }
        if list.len() == roi.members(k).len() {
            return best.1;
        }
        for &i in roi.members(k) {
            let m = live(i);
            if better(m, i, best) {
                best = (m, i);
            }
        }
        best.1
    }
}
