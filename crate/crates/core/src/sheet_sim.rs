//! Exact sampling of Lévy sheets restricted to rectangular grids.
//!
//! A sheet realization is stored as independent cell increments plus their
//! 2-D prefix sum (the cumulative field `L(x_i, y_j)` at grid nodes). Cell
//! increments are drawn exactly in law — `Normal(-drift·A, σ²A)` for the
//! Gaussian driver, sums of `size·PoissonCount(mass·A)` for compound Poisson,
//! and the Chambers–Mallows–Stuck transform for the symmetric stable driver —
//! so no discretization bias exists at node level; only quadrature over cells
//! (performed downstream) is approximate.
//!
//! Everything is deterministic given an [`RngStream`]: increments are drawn
//! in row-major order (`y` rows outer, `x` cells inner), and replicate-level
//! parallelism assigns one stream per replicate.

use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use thiserror::Error;

use crate::levy_char::{ExponentModel, JumpAtom, LevyCharError};

#[derive(Debug, Error)]
pub enum SheetError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Model(#[from] LevyCharError),
    #[error("coordinate {coord} along {axis} is not a grid node (spacing {spacing})")]
    NotGridAligned {
        axis: char,
        coord: f64,
        spacing: f64,
    },
    #[error("rectangle corners must satisfy (s,t) <= (s',t')")]
    BadRectangle,
    #[error("dump i/o: {0}")]
    Io(#[from] io::Error),
    #[error("dump format: {0}")]
    BadDump(String),
}

/// Uniform rectangular grid covering `[0, x_max] × [0, y_max]` with
/// `nx × ny` cells. Grids are kept dense and row-major; sizes up to roughly
/// 4096² cells fit comfortably in memory, larger sheets should be streamed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_max: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_max: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self, SheetError> {
        if !(x_max.is_finite() && x_max > 0.0 && y_max.is_finite() && y_max > 0.0) {
            return Err(SheetError::InvalidGrid(format!(
                "extents must be finite and positive, got ({x_max}, {y_max})"
            )));
        }
        if nx == 0 || ny == 0 {
            return Err(SheetError::InvalidGrid("nx and ny must be >= 1".into()));
        }
        if nx.checked_mul(ny).is_none_or(|c| c > (1 << 31)) {
            return Err(SheetError::InvalidGrid(format!(
                "grid {nx} x {ny} exceeds the dense-storage limit"
            )));
        }
        Ok(Self {
            x_max,
            y_max,
            nx,
            ny,
        })
    }

    pub fn dx(&self) -> f64 {
        self.x_max / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.y_max / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn node_x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn node_y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    /// Resolves a coordinate to a node index, or fails if it is not aligned
    /// (relative tolerance 1e-9 of the grid extent).
    pub fn node_index_x(&self, coord: f64) -> Result<usize, SheetError> {
        Self::resolve(coord, self.dx(), self.nx, self.x_max, 'x')
    }

    pub fn node_index_y(&self, coord: f64) -> Result<usize, SheetError> {
        Self::resolve(coord, self.dy(), self.ny, self.y_max, 'y')
    }

    fn resolve(coord: f64, spacing: f64, n: usize, max: f64, axis: char) -> Result<usize, SheetError> {
        let misaligned = || SheetError::NotGridAligned {
            axis,
            coord,
            spacing,
        };
        if !coord.is_finite() || coord < -1e-9 * max || coord > max * (1.0 + 1e-9) {
            return Err(misaligned());
        }
        let idx = (coord / spacing).round();
        if (coord - idx * spacing).abs() > 1e-9 * max {
            return Err(misaligned());
        }
        Ok((idx as usize).min(n))
    }
}

/// Seed plus stream id for a counter-based generator. Distinct stream ids
/// give statistically independent streams; the same pair reproduces the same
/// draws bit-exactly on every run and thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Stream for replicate `replicate` of experiment lane `lane`. Lanes keep
    /// the stream spaces of unrelated experiments disjoint.
    pub fn for_replicate(seed: u64, lane: u32, replicate: u32) -> Self {
        Self::new(seed, (u64::from(lane) << 32) | u64::from(replicate))
    }

    /// Shifts the stream id; sub-experiments within a lane use disjoint
    /// offset blocks.
    pub fn substream_offset(&self, offset: u64) -> Self {
        Self::new(self.seed, self.stream_id + offset)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Exact sampler for one cell increment of fixed area, with per-distribution
/// state precomputed once per grid.
#[derive(Debug, Clone)]
pub(crate) enum IncrementSampler {
    Gaussian { mean: f64, sd: f64 },
    Compound { atoms: Vec<(f64, Poisson<f64>)> },
    Stable { alpha: f64, factor: f64 },
    Zero,
}

impl IncrementSampler {
    pub(crate) fn new(model: &ExponentModel, area: f64) -> Result<Self, SheetError> {
        model.validate()?;
        Ok(match model {
            ExponentModel::Brownian { sigma, drift } => IncrementSampler::Gaussian {
                mean: -drift * area,
                sd: sigma * area.sqrt(),
            },
            ExponentModel::Poisson { rate, jump } => Self::compound(
                &[JumpAtom {
                    size: *jump,
                    mass: *rate,
                }],
                area,
            ),
            ExponentModel::CompoundPoissonDiscrete { atoms } => Self::compound(atoms, area),
            // a(ξ) = scale·|ξ|^α over area A means the increment is
            // (scale·A)^{1/α} times a standard symmetric α-stable draw.
            ExponentModel::SymmetricStable { alpha, scale } => IncrementSampler::Stable {
                alpha: *alpha,
                factor: (scale * area).powf(1.0 / alpha),
            },
        })
    }

    fn compound(atoms: &[JumpAtom], area: f64) -> Self {
        let atoms = atoms
            .iter()
            .map(|a| {
                let dist = Poisson::new(a.mass * area).expect("validated positive intensity");
                (a.size, dist)
            })
            .collect();
        IncrementSampler::Compound { atoms }
    }

    pub(crate) fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            IncrementSampler::Gaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            IncrementSampler::Compound { atoms } => atoms
                .iter()
                .map(|(size, dist)| size * dist.sample(rng))
                .sum(),
            IncrementSampler::Stable { alpha, factor } => {
                factor * standard_symmetric_stable(*alpha, rng)
            }
            IncrementSampler::Zero => 0.0,
        }
    }
}

/// One standard normal draw from a stream-derived generator.
pub fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Standard symmetric α-stable draw (characteristic function `e^{-|ξ|^α}`)
/// via the Chambers–Mallows–Stuck transform; `α = 1` is the Cauchy case.
pub fn standard_symmetric_stable(alpha: f64, rng: &mut ChaCha8Rng) -> f64 {
    let v = (rng.random::<f64>() - 0.5) * std::f64::consts::PI;
    if alpha == 1.0 {
        return v.tan();
    }
    let e: f64 = Exp1.sample(rng);
    let lead = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    lead * (((1.0 - alpha) * v).cos() / e).powf((1.0 - alpha) / alpha)
}

/// Draws one increment over a unit-area rectangle; the basis of the
/// empirical-characteristic-function consistency checks.
pub fn sample_unit_area_increment(
    model: &ExponentModel,
    rng: &mut ChaCha8Rng,
) -> Result<f64, SheetError> {
    Ok(IncrementSampler::new(model, 1.0)?.sample(rng))
}

/// One Lévy sheet realization on a grid: independent cell increments and the
/// cumulative node values `L(x_i, y_j)` (zero on both axes).
#[derive(Debug, Clone, PartialEq)]
pub struct SheetPath {
    grid: GridSpec,
    /// `nx × ny`, row-major with `y` as the row index: `cell(i, j) = [j*nx + i]`.
    cell_increments: Vec<f64>,
    /// `(nx+1) × (ny+1)`, row-major: `node(i, j) = [j*(nx+1) + i]`.
    cumulative: Vec<f64>,
}

impl SheetPath {
    /// The all-zero sheet (the rate→0 limit); used by forced-driver modes and
    /// quadrature oracles.
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            cell_increments: vec![0.0; grid.nx * grid.ny],
            cumulative: vec![0.0; (grid.nx + 1) * (grid.ny + 1)],
        }
    }

    fn from_increments(grid: GridSpec, cell_increments: Vec<f64>) -> Self {
        debug_assert_eq!(cell_increments.len(), grid.nx * grid.ny);
        let (nx, ny) = (grid.nx, grid.ny);
        let mut cumulative = vec![0.0; (nx + 1) * (ny + 1)];
        for j in 0..ny {
            let mut row_sum = 0.0;
            for i in 0..nx {
                row_sum += cell_increments[j * nx + i];
                cumulative[(j + 1) * (nx + 1) + i + 1] = cumulative[j * (nx + 1) + i + 1] + row_sum;
            }
        }
        Self {
            grid,
            cell_increments,
            cumulative,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn cell_increment(&self, i: usize, j: usize) -> f64 {
        self.cell_increments[j * self.grid.nx + i]
    }

    pub fn cell_increments(&self) -> &[f64] {
        &self.cell_increments
    }

    /// Cumulative value `L(x_i, y_j)` at a node.
    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.cumulative[j * (self.grid.nx + 1) + i]
    }

    /// Cumulative row `j` of node values (length `nx + 1`).
    pub fn node_row(&self, j: usize) -> &[f64] {
        let w = self.grid.nx + 1;
        &self.cumulative[j * w..(j + 1) * w]
    }

    /// Piecewise-constant evaluation of `L` at an arbitrary point: the value
    /// at the lower-left node of the cell containing `(x, y)`.
    pub fn eval_lower_left(&self, x: f64, y: f64) -> f64 {
        let i = ((x / self.grid.dx()).floor() as usize).min(self.grid.nx);
        let j = ((y / self.grid.dy()).floor() as usize).min(self.grid.ny);
        self.node(i, j)
    }

    /// Rectangular increment `Δ_{s,t}L(s',t')` for grid-aligned corners.
    pub fn rect_increment(&self, s: f64, t: f64, s2: f64, t2: f64) -> Result<f64, SheetError> {
        let i0 = self.grid.node_index_x(s)?;
        let j0 = self.grid.node_index_y(t)?;
        let i1 = self.grid.node_index_x(s2)?;
        let j1 = self.grid.node_index_y(t2)?;
        if i0 > i1 || j0 > j1 {
            return Err(SheetError::BadRectangle);
        }
        Ok(rect_increment_nodes(|i, j| self.node(i, j), i0, j0, i1, j1))
    }

    /// Binary dump: header (magic, model tag, grid spec) followed by the cell
    /// increments as little-endian f64, row-major.
    pub fn write_dump<W: Write>(&self, model_tag: &str, w: &mut W) -> Result<(), SheetError> {
        w.write_all(b"LVSHEET1")?;
        let tag = model_tag.as_bytes();
        w.write_all(&(tag.len() as u32).to_le_bytes())?;
        w.write_all(tag)?;
        w.write_all(&self.grid.x_max.to_le_bytes())?;
        w.write_all(&self.grid.y_max.to_le_bytes())?;
        w.write_all(&(self.grid.nx as u64).to_le_bytes())?;
        w.write_all(&(self.grid.ny as u64).to_le_bytes())?;
        for v in &self.cell_increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`SheetPath::write_dump`]; returns the path and
    /// the model tag recorded in the header.
    pub fn read_dump<R: Read>(r: &mut R) -> Result<(Self, String), SheetError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"LVSHEET1" {
            return Err(SheetError::BadDump("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let tag_len = u32::from_le_bytes(b4) as usize;
        if tag_len > 256 {
            return Err(SheetError::BadDump("unreasonable tag length".into()));
        }
        let mut tag = vec![0u8; tag_len];
        r.read_exact(&mut tag)?;
        let tag = String::from_utf8(tag).map_err(|_| SheetError::BadDump("tag not utf-8".into()))?;
        let mut b8 = [0u8; 8];
        let mut read_f64 = |r: &mut R| -> Result<f64, SheetError> {
            r.read_exact(&mut b8)?;
            Ok(f64::from_le_bytes(b8))
        };
        let x_max = read_f64(r)?;
        let y_max = read_f64(r)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let nx = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let ny = u64::from_le_bytes(b8) as usize;
        let grid = GridSpec::new(x_max, y_max, nx, ny)?;
        let mut cells = vec![0.0; nx * ny];
        for v in &mut cells {
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        Ok((Self::from_increments(grid, cells), tag))
    }
}

/// `Δ` of a gridded field over the node rectangle `[i0, i1] × [j0, j1]`:
/// `f(i1,j1) - f(i0,j1) - f(i1,j0) + f(i0,j0)`.
pub fn rect_increment_nodes<T, F>(node: F, i0: usize, j0: usize, i1: usize, j1: usize) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T>,
    F: Fn(usize, usize) -> T,
{
    node(i1, j1) - node(i0, j1) - node(i1, j0) + node(i0, j0)
}

/// Samples a full sheet realization with exact independent cell increments.
pub fn sample_sheet(
    model: &ExponentModel,
    grid: GridSpec,
    stream: RngStream,
) -> Result<SheetPath, SheetError> {
    let sampler = IncrementSampler::new(model, grid.cell_area())?;
    let mut rng = stream.rng();
    let mut cells = vec![0.0; grid.nx * grid.ny];
    for v in &mut cells {
        *v = sampler.sample(&mut rng);
    }
    Ok(SheetPath::from_increments(grid, cells))
}

/// Streams the cumulative node rows of a sheet realization without
/// materializing the full grid. Draw order matches [`sample_sheet`]
/// (row-major), so consuming the rows reproduces exactly the node values a
/// dense [`SheetPath`] would hold for the same stream.
pub(crate) struct SheetRowCursor {
    sampler: IncrementSampler,
    rng: ChaCha8Rng,
    nx: usize,
    rows_left: usize,
    row: Vec<f64>,
    started: bool,
}

impl SheetRowCursor {
    pub(crate) fn new(
        model: Option<&ExponentModel>,
        grid: GridSpec,
        stream: RngStream,
    ) -> Result<Self, SheetError> {
        let sampler = match model {
            Some(m) => IncrementSampler::new(m, grid.cell_area())?,
            None => IncrementSampler::Zero,
        };
        Ok(Self {
            sampler,
            rng: stream.rng(),
            nx: grid.nx,
            rows_left: grid.ny + 1,
            row: vec![0.0; grid.nx + 1],
            started: false,
        })
    }

    /// Next cumulative node row (row `j` holds `L(x_i, y_j)`), or `None`
    /// after row `ny`.
    pub(crate) fn next_row(&mut self) -> Option<&[f64]> {
        if self.rows_left == 0 {
            return None;
        }
        self.rows_left -= 1;
        if !self.started {
            self.started = true;
            return Some(&self.row);
        }
        let mut run = 0.0;
        for i in 0..self.nx {
            run += self.sampler.sample(&mut self.rng);
            self.row[i + 1] += run;
        }
        Some(&self.row)
    }
}
