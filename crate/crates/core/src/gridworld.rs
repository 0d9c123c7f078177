//! Grid environment, agent kinematics, prior maps and target placement.
//!
//! Cells use 1-based `(row, col)` coordinates with row 1 at the top (north).
//! Internally maps are stored row-major in flat vectors; [`GridSpec::index`]
//! and [`GridSpec::cell_at`] convert between the two.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGrid {
                rows,
                cols,
                reason: "both dimensions must be at least 1",
            });
        }
        Ok(GridSpec { rows, cols })
    }

    /// Total cell count `N * M`.
    pub fn area(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, cell: Cell) -> bool {
        (1..=self.rows).contains(&cell.row) && (1..=self.cols).contains(&cell.col)
    }

    /// Bounds check for signed coordinates, returning the cell when inside.
    pub fn checked_cell(&self, row: isize, col: isize) -> Option<Cell> {
        if row >= 1 && col >= 1 && row as usize <= self.rows && col as usize <= self.cols {
            Some(Cell::new(row as usize, col as usize))
        } else {
            None
        }
    }

    /// Row-major flat index of an in-bounds cell.
    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        debug_assert!(self.contains(cell), "{cell} outside {self}");
        (cell.row - 1) * self.cols + (cell.col - 1)
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.cols + 1, index % self.cols + 1)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.area()).map(|k| self.cell_at(k))
    }

    pub fn check(&self, cell: Cell) -> Result<()> {
        if self.contains(cell) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                row: cell.row,
                col: cell.col,
                rows: self.rows,
                cols: self.cols,
            })
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// A grid cell in 1-based `(row, col)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    /// Number of clockwise quarter turns from north.
    pub fn quarter_turns(self) -> usize {
        match self {
            Heading::North => 0,
            Heading::East => 1,
            Heading::South => 2,
            Heading::West => 3,
        }
    }
}

/// Primitive moves. The declaration order is the canonical option order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn heading(self) -> Heading {
        match self {
            Action::Up => Heading::North,
            Action::Down => Heading::South,
            Action::Left => Heading::West,
            Action::Right => Heading::East,
        }
    }

    /// `(d_row, d_col)` displacement.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Cell,
    pub heading: Heading,
}

impl AgentState {
    pub fn new(position: Cell, heading: Heading) -> Self {
        AgentState { position, heading }
    }
}

/// Moves one cell, clamping at the border. The heading always follows the
/// action, including when the move is blocked by the edge of the grid.
pub fn step(state: AgentState, action: Action, spec: GridSpec) -> AgentState {
    let (dr, dc) = action.delta();
    let row = (state.position.row as isize + dr).clamp(1, spec.rows as isize) as usize;
    let col = (state.position.col as isize + dc).clamp(1, spec.cols as isize) as usize;
    AgentState {
        position: Cell::new(row, col),
        heading: action.heading(),
    }
}

/// Non-negative mass over the cells of a grid.
///
/// Maps built by [`BeliefMap::from_weights`], [`generate_prior`] and the exact
/// posterior are normalized. The planning update deliberately produces
/// unnormalized maps, so normalization is not a type-level invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMap {
    grid: GridSpec,
    mass: Vec<f64>,
}

impl BeliefMap {
    /// Wraps raw masses without normalizing. Entries must be finite and non-negative.
    pub fn from_masses(grid: GridSpec, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.area() {
            return Err(Error::InvalidBelief(format!(
                "{} entries for a {grid} grid",
                mass.len()
            )));
        }
        if let Some(k) = mass.iter().position(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidBelief(format!(
                "entry {} at {} is not a finite non-negative number",
                mass[k],
                grid.cell_at(k)
            )));
        }
        Ok(BeliefMap { grid, mass })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(grid: GridSpec, weights: Vec<f64>) -> Result<Self> {
        let mut map = Self::from_masses(grid, weights)?;
        map.normalize()?;
        Ok(map)
    }

    pub fn uniform(grid: GridSpec) -> Self {
        let p = 1.0 / grid.area() as f64;
        BeliefMap {
            grid,
            mass: vec![p; grid.area()],
        }
    }

    pub fn point_mass(grid: GridSpec, cell: Cell) -> Result<Self> {
        grid.check(cell)?;
        let mut mass = vec![0.0; grid.area()];
        mass[grid.index(cell)] = 1.0;
        Ok(BeliefMap { grid, mass })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn mass(&self, cell: Cell) -> f64 {
        self.mass[self.grid.index(cell)]
    }

    #[inline]
    pub fn mass_at(&self, index: usize) -> f64 {
        self.mass[index]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn max_mass(&self) -> f64 {
        self.mass.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.total() - 1.0).abs() <= tol
    }

    pub fn normalize(&mut self) -> Result<()> {
        let total = self.total();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidBelief(format!(
                "cannot normalize a map with total mass {total}"
            )));
        }
        let inv = 1.0 / total;
        self.mass.iter_mut().for_each(|m| *m *= inv);
        Ok(())
    }

    /// Row-major CSV, one line per grid row.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.mass.len() * 24);
        for row in self.mass.chunks(self.grid.cols) {
            for (j, m) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                // `{:?}` is the shortest representation that round-trips.
                out.push_str(&format!("{m:?}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV form. Values are taken as-is (no normalization).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = 0;
        let mut cols = None;
        let mut mass = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let before = mass.len();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::MalformedMap(format!("line {}: bad number {field:?}", lineno + 1))
                })?;
                mass.push(v);
            }
            let width = mass.len() - before;
            match cols {
                None => cols = Some(width),
                Some(c) if c != width => {
                    return Err(Error::MalformedMap(format!(
                        "line {}: {width} columns, expected {c}",
                        lineno + 1
                    )))
                }
                _ => {}
            }
            rows += 1;
        }
        let cols = cols.ok_or_else(|| Error::MalformedMap("empty map".into()))?;
        Self::from_masses(GridSpec::new(rows, cols)?, mass)
    }

    pub const MAGIC: [u8; 4] = *b"BMAP";

    /// Binary form: `"BMAP"`, `u32` rows, `u32` cols, `u32` reserved (zero),
    /// then `rows * cols` little-endian `f64` values in row-major order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.mass.len());
        out.extend_from_slice(&Self::MAGIC);
        out.extend_from_slice(&(self.grid.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid.cols as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for m in &self.mass {
            out.extend_from_slice(&m.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || bytes[..4] != Self::MAGIC {
            return Err(Error::MalformedMap("missing BMAP header".into()));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap()) as usize;
        let grid = GridSpec::new(word(4), word(8))?;
        let body = &bytes[16..];
        if body.len() != 8 * grid.area() {
            return Err(Error::MalformedMap(format!(
                "{} payload bytes for a {grid} grid",
                body.len()
            )));
        }
        let mass = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_masses(grid, mass)
    }

    /// Loads a map, choosing the format by extension (`.csv`, otherwise binary).
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::MalformedMap(format!("{} is not UTF-8", path.display())))?;
            Self::from_csv(&text)
        } else {
            Self::from_bytes(&bytes)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let data = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            self.to_csv().into_bytes()
        } else {
            self.to_bytes()
        };
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&data))
            .map_err(|e| Error::io(path, e))
    }
}

/// How the values drawn from [`PriorConfig::spread`] are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadUnit {
    /// Per-axis standard deviation.
    StdDev,
    /// Per-axis variance.
    Variance,
}

/// Parameters of the random Gaussian-mixture prior.
///
/// Spreads are in normalized map units, where the grid spans `[0, 1]` on
/// each axis. Each component draws one spread per axis uniformly from
/// `spread`. The default reads `[0.04, 0.12]` as standard deviations,
/// that is 8 to 24 cells on a 200x200 grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub num_components: (u32, u32),
    pub spread: (f64, f64),
    pub unit: SpreadUnit,
    pub rng_seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            num_components: (1, 5),
            spread: (0.04, 0.12),
            unit: SpreadUnit::StdDev,
            rng_seed: 0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let (klo, khi) = self.num_components;
        let (vlo, vhi) = self.spread;
        if klo == 0 || klo > khi {
            return Err(Error::InvalidPriorConfig(format!(
                "component range [{klo}, {khi}] must be non-empty and start at 1 or more"
            )));
        }
        if !(vlo > 0.0) || !(vlo <= vhi) || !vhi.is_finite() {
            return Err(Error::InvalidPriorConfig(format!(
                "spread range [{vlo}, {vhi}] must be positive and ordered"
            )));
        }
        Ok(())
    }
}

/// One axis-aligned Gaussian of the prior mixture, in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean_row: f64,
    pub mean_col: f64,
    pub var_row: f64,
    pub var_col: f64,
}

impl GaussianComponent {
    /// Density at a normalized point.
    pub fn density(&self, y: f64, x: f64) -> f64 {
        let dy = y - self.mean_row;
        let dx = x - self.mean_col;
        let e = dy * dy / (2.0 * self.var_row) + dx * dx / (2.0 * self.var_col);
        (-e).exp() / (2.0 * std::f64::consts::PI * (self.var_row * self.var_col).sqrt())
    }

    /// The grid cell containing the mean.
    pub fn mean_cell(&self, spec: GridSpec) -> Cell {
        let r = ((self.mean_row * spec.rows as f64).floor() as usize + 1).min(spec.rows);
        let c = ((self.mean_col * spec.cols as f64).floor() as usize + 1).min(spec.cols);
        Cell::new(r, c)
    }
}

/// Normalized coordinates of a cell center.
pub fn cell_center(spec: GridSpec, cell: Cell) -> (f64, f64) {
    (
        (cell.row as f64 - 0.5) / spec.rows as f64,
        (cell.col as f64 - 0.5) / spec.cols as f64,
    )
}

pub fn sample_components<R: Rng + ?Sized>(cfg: &PriorConfig, rng: &mut R) -> Vec<GaussianComponent> {
    let (klo, khi) = cfg.num_components;
    let (vlo, vhi) = cfg.spread;
    let var = |s: f64| match cfg.unit {
        SpreadUnit::StdDev => s * s,
        SpreadUnit::Variance => s,
    };
    let k = rng.random_range(klo..=khi);
    (0..k)
        .map(|_| GaussianComponent {
            mean_row: rng.random::<f64>(),
            mean_col: rng.random::<f64>(),
            var_row: var(rng.random_range(vlo..=vhi)),
            var_col: var(rng.random_range(vlo..=vhi)),
        })
        .collect()
}

/// Evaluates the mixture at every cell center and normalizes.
pub fn render_mixture(spec: GridSpec, components: &[GaussianComponent]) -> Result<BeliefMap> {
    let weights = spec
        .cells()
        .map(|cell| {
            let (y, x) = cell_center(spec, cell);
            components.iter().map(|g| g.density(y, x)).sum()
        })
        .collect();
    BeliefMap::from_weights(spec, weights).map_err(|_| {
        Error::InvalidPriorConfig("mixture density vanishes on every cell center".into())
    })
}

/// Random Gaussian-mixture prior, deterministic in `cfg.rng_seed`.
pub fn generate_prior(spec: GridSpec, cfg: &PriorConfig) -> Result<BeliefMap> {
    cfg.validate()?;
    if spec.rows < 2 || spec.cols < 2 {
        return Err(Error::InvalidGrid {
            rows: spec.rows,
            cols: spec.cols,
            reason: "priors need at least a 2x2 grid",
        });
    }
    let mut rng = rng::seeded(cfg.rng_seed);
    render_mixture(spec, &sample_components(cfg, &mut rng))
}

/// Draws the target cell from the categorical distribution `prior`.
pub fn sample_target<R: Rng + ?Sized>(prior: &BeliefMap, rng: &mut R) -> Result<Cell> {
    let dist = WeightedIndex::new(prior.as_slice())
        .map_err(|e| Error::InvalidBelief(format!("cannot sample target: {e}")))?;
    Ok(prior.grid().cell_at(dist.sample(rng)))
}
