//! Construction of the complex random fields driven by a Lévy sheet, the
//! classic real parity field driven by a Poisson sheet, and the smooth
//! Kac–Stroock kernels derived from the same construction.
//!
//! The field at an evaluation point `(s, t)` is the quadrature
//! `ε·K·Σ_cells √(x̄·ȳ)·e^{iθ·L(cell)}·Δx·Δy` over the sheet cells inside the
//! window `[0, s/ε] × [0, t/ε]`, with two fixed conventions:
//!
//! * the rough factor `e^{iθL}` is evaluated at the cell's lower-left node
//!   (piecewise-constant evaluation, measurable with respect to the cell's
//!   past);
//! * the smooth weight `√(xy)` is evaluated at the midpoint of the part of
//!   the cell actually covered, and boundary cells are clipped by their exact
//!   covered fraction.
//!
//! One engine implements the rule for dense [`SheetPath`] grids and for
//! streamed rows (`O(nx)` memory), with identical results for the same
//! stream; the streamed form is what the statistical harness runs at scale.

use num_complex::Complex64;
use thiserror::Error;

use crate::levy_char::{LevyCharError, ThetaConfig};
use crate::sheet_sim::{GridSpec, RngStream, SheetError, SheetPath, SheetRowCursor};
use crate::ExponentModel;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("window for eval point ({s}, {t}) maps to fewer than {min} cells per side; refine the sheet grid")]
    GridTooCoarse { s: f64, t: f64, min: usize },
    #[error("window for eval point ({s}, {t}) extends past the sheet grid ({x_max} x {y_max})")]
    WindowOutsideGrid {
        s: f64,
        t: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("classic mode needs an integer-valued sheet; found node value {0}")]
    NonIntegerDriver(f64),
    #[error("kernel order n must be >= 1")]
    BadKernelOrder,
    #[error("path grid covers ({x_max}, {y_max}) but the kernels need [0, {need}]^2")]
    PathTooSmall { x_max: f64, y_max: f64, need: f64 },
    #[error("epsilon must be finite and > 0, got {0}")]
    BadEpsilon(f64),
    #[error("eval point ({0}, {1}) must have nonnegative coordinates")]
    BadEvalPoint(f64, f64),
    #[error(transparent)]
    Sheet(#[from] SheetError),
    #[error(transparent)]
    Model(#[from] LevyCharError),
}

/// Minimum number of cells per window side below which the quadrature is
/// refused as meaningless.
pub const MIN_CELLS_PER_WINDOW: usize = 4;

/// One realization of the complex field evaluated at a list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFieldSample {
    pub eps: f64,
    pub theta: f64,
    pub k: f64,
    pub model_tag: String,
    pub points: Vec<(f64, f64)>,
    pub values: Vec<Complex64>,
}

impl ComplexFieldSample {
    /// Value at `points[idx]`.
    pub fn value(&self, idx: usize) -> Complex64 {
        self.values[idx]
    }
}

// ---------------------------------------------------------------------------
// Quadrature engine
// ---------------------------------------------------------------------------

trait Integrand {
    type Out: Copy
        + std::ops::Add<Output = Self::Out>
        + std::ops::Sub<Output = Self::Out>
        + std::ops::Mul<f64, Output = Self::Out>;
    fn zero() -> Self::Out;
    fn eval(&self, l: f64) -> Self::Out;
    fn check_row(&self, _row: &[f64]) -> Result<(), FieldError> {
        Ok(())
    }
}

struct ComplexExp {
    theta: f64,
}

impl Integrand for ComplexExp {
    type Out = Complex64;
    fn zero() -> Complex64 {
        Complex64::new(0.0, 0.0)
    }
    #[inline]
    fn eval(&self, l: f64) -> Complex64 {
        let (sin, cos) = (self.theta * l).sin_cos();
        Complex64::new(cos, sin)
    }
}

struct Parity;

impl Integrand for Parity {
    type Out = f64;
    fn zero() -> f64 {
        0.0
    }
    #[inline]
    fn eval(&self, l: f64) -> f64 {
        // (-1)^l for integer l; rows are validated by check_row.
        if (l as i64) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
    fn check_row(&self, row: &[f64]) -> Result<(), FieldError> {
        for &v in row {
            if v.fract() != 0.0 || v.abs() >= 9.0e15 {
                return Err(FieldError::NonIntegerDriver(v));
            }
        }
        Ok(())
    }
}

trait RowProvider {
    /// Cumulative node row `j` (`L(x_i, y_j)`, length `nx + 1`), starting at
    /// `j = 0`.
    fn next_row(&mut self) -> Option<&[f64]>;
}

impl RowProvider for SheetRowCursor {
    fn next_row(&mut self) -> Option<&[f64]> {
        SheetRowCursor::next_row(self)
    }
}

struct PathRows<'a> {
    path: &'a SheetPath,
    j: usize,
}

impl RowProvider for PathRows<'_> {
    fn next_row(&mut self) -> Option<&[f64]> {
        if self.j > self.path.grid().ny {
            return None;
        }
        let row = self.path.node_row(self.j);
        self.j += 1;
        Some(row)
    }
}

/// Window integration targets, one per eval point, in sheet coordinates.
struct Window {
    by: f64,
    snap_idx: usize,
}

/// Integrates `√(xy)·integrand(L)` over `[0, bx_p] × [0, by_p]` for every
/// requested window in a single row-major pass over the sheet.
fn integrate_windows<I, R>(
    integrand: &I,
    grid: GridSpec,
    rows: &mut R,
    targets: &[(f64, f64)],
) -> Result<Vec<I::Out>, FieldError>
where
    I: Integrand,
    R: RowProvider,
{
    let dx = grid.dx();
    let dy = grid.dy();

    // Deduplicated, sorted x-boundaries; each window points at its snapshot.
    let mut xs: Vec<f64> = targets
        .iter()
        .filter(|(bx, by)| *bx > 0.0 && *by > 0.0)
        .map(|(bx, _)| *bx)
        .collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite boundaries"));
    xs.dedup();

    let mut windows: Vec<Option<Window>> = Vec::with_capacity(targets.len());
    for &(bx, by) in targets {
        if bx == 0.0 || by == 0.0 {
            windows.push(None);
            continue;
        }
        let snap_idx = xs.binary_search_by(|p| p.partial_cmp(&bx).unwrap()).unwrap();
        windows.push(Some(Window { by, snap_idx }));
    }

    let max_by = windows
        .iter()
        .flatten()
        .map(|w| w.by)
        .fold(0.0_f64, f64::max);
    let rows_needed = if max_by == 0.0 {
        0
    } else {
        (max_by / dy).ceil() as usize
    };

    // Precomputed full-cell x weights √(x̄_i)·Δx.
    let wx: Vec<f64> = (0..grid.nx)
        .map(|i| ((i as f64 + 0.5) * dx).sqrt() * dx)
        .collect();

    let mut accs: Vec<I::Out> = vec![I::zero(); targets.len()];
    let mut snaps: Vec<I::Out> = vec![I::zero(); xs.len()];

    for j in 0..rows_needed {
        let row = rows.next_row().expect("grid covers every window");
        integrand.check_row(&row[..grid.nx])?;
        let y0 = j as f64 * dy;
        let y1 = (j + 1) as f64 * dy;

        // Snapshot of the x-prefix sum at every distinct boundary.
        let mut prefix = I::zero();
        let mut cell = 0usize;
        for (b_idx, &bx) in xs.iter().enumerate() {
            let ib = ((bx / dx).floor() as usize).min(grid.nx);
            while cell < ib {
                prefix = prefix + integrand.eval(row[cell]) * wx[cell];
                cell += 1;
            }
            let mut snap = prefix;
            if ib < grid.nx {
                let x0 = ib as f64 * dx;
                let w = bx - x0;
                if w > 0.0 {
                    snap = snap + integrand.eval(row[ib]) * (((x0 + bx) * 0.5).sqrt() * w);
                }
            }
            snaps[b_idx] = snap;
        }

        for (t_idx, window) in windows.iter().enumerate() {
            let Some(w) = window else { continue };
            let row_weight = if y1 <= w.by {
                ((y0 + y1) * 0.5).sqrt() * dy
            } else if y0 < w.by {
                ((y0 + w.by) * 0.5).sqrt() * (w.by - y0)
            } else {
                continue;
            };
            accs[t_idx] = accs[t_idx] + snaps[w.snap_idx] * row_weight;
        }
    }

    Ok(accs)
}

/// Eval points → window boundaries, with the precondition checks shared by
/// every field operation: points inside the grid, at least
/// [`MIN_CELLS_PER_WINDOW`] cells per window side.
fn window_targets(
    grid: GridSpec,
    eps: f64,
    points: &[(f64, f64)],
) -> Result<Vec<(f64, f64)>, FieldError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(FieldError::BadEpsilon(eps));
    }
    let mut targets = Vec::with_capacity(points.len());
    for &(s, t) in points {
        if !(s.is_finite() && t.is_finite() && s >= 0.0 && t >= 0.0) {
            return Err(FieldError::BadEvalPoint(s, t));
        }
        let (bx, by) = (s / eps, t / eps);
        if bx == 0.0 || by == 0.0 {
            targets.push((0.0, 0.0));
            continue;
        }
        let slack = 1.0 + 1e-9;
        if bx > grid.x_max * slack || by > grid.y_max * slack {
            return Err(FieldError::WindowOutsideGrid {
                s,
                t,
                x_max: grid.x_max,
                y_max: grid.y_max,
            });
        }
        if bx / grid.dx() < MIN_CELLS_PER_WINDOW as f64 - 1e-9
            || by / grid.dy() < MIN_CELLS_PER_WINDOW as f64 - 1e-9
        {
            return Err(FieldError::GridTooCoarse {
                s,
                t,
                min: MIN_CELLS_PER_WINDOW,
            });
        }
        targets.push((bx.min(grid.x_max), by.min(grid.y_max)));
    }
    Ok(targets)
}

// ---------------------------------------------------------------------------
// Field operations
// ---------------------------------------------------------------------------

/// Realization of the complex field on a sampled sheet path.
pub fn approx_field(
    path: &SheetPath,
    cfg: &ThetaConfig,
    eps: f64,
    points: &[(f64, f64)],
) -> Result<ComplexFieldSample, FieldError> {
    let mut sample = approx_field_with_k(path, cfg.theta(), cfg.k(), eps, points)?;
    sample.model_tag = cfg.model().tag().to_string();
    Ok(sample)
}

/// Same quadrature with an explicit normalization constant; the diagnostic
/// entry used by forced-driver modes and quadrature oracles (`L ≡ 0`, `K = 1`).
pub fn approx_field_with_k(
    path: &SheetPath,
    theta: f64,
    k: f64,
    eps: f64,
    points: &[(f64, f64)],
) -> Result<ComplexFieldSample, FieldError> {
    let grid = path.grid();
    let targets = window_targets(grid, eps, points)?;
    let mut rows = PathRows { path, j: 0 };
    let raw = integrate_windows(&ComplexExp { theta }, grid, &mut rows, &targets)?;
    Ok(ComplexFieldSample {
        eps,
        theta,
        k,
        model_tag: String::new(),
        points: points.to_vec(),
        values: raw.into_iter().map(|v| v * (eps * k)).collect(),
    })
}

/// Streamed equivalent of [`approx_field`] that samples the sheet and
/// integrates in one pass with `O(nx)` memory. `model = None` forces the
/// zero driver. Bit-identical to sampling a dense path from the same stream
/// and integrating it.
#[allow(clippy::too_many_arguments)]
pub fn sample_approx_field(
    model: Option<&ExponentModel>,
    theta: f64,
    k: f64,
    eps: f64,
    grid: GridSpec,
    points: &[(f64, f64)],
    stream: RngStream,
) -> Result<ComplexFieldSample, FieldError> {
    let targets = window_targets(grid, eps, points)?;
    let mut rows = SheetRowCursor::new(model, grid, stream)?;
    let raw = integrate_windows(&ComplexExp { theta }, grid, &mut rows, &targets)?;
    Ok(ComplexFieldSample {
        eps,
        theta,
        k,
        model_tag: model.map(|m| m.tag()).unwrap_or("zero").to_string(),
        points: points.to_vec(),
        values: raw.into_iter().map(|v| v * (eps * k)).collect(),
    })
}

/// The classic real parity field `ε·Σ √(x̄ȳ)·(-1)^{N(cell)}·ΔxΔy` on an
/// integer-valued path; no normalization constant.
pub fn classic_kac_stroock(
    path: &SheetPath,
    eps: f64,
    points: &[(f64, f64)],
) -> Result<Vec<f64>, FieldError> {
    let grid = path.grid();
    let targets = window_targets(grid, eps, points)?;
    let mut rows = PathRows { path, j: 0 };
    let raw = integrate_windows(&Parity, grid, &mut rows, &targets)?;
    Ok(raw.into_iter().map(|v| v * eps).collect())
}

// ---------------------------------------------------------------------------
// Exact evaluation of the classic field from Poisson jump points
// ---------------------------------------------------------------------------

/// Segment tree over the signed base integrals of y-segments, supporting
/// suffix sign flips; drives the exact sweep of the parity integral.
struct FlipTree {
    n: usize,
    sum: Vec<f64>,
    flip: Vec<bool>,
}

impl FlipTree {
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let mut t = Self {
            n,
            sum: vec![0.0; 4 * n.max(1)],
            flip: vec![false; 4 * n.max(1)],
        };
        if n > 0 {
            t.build(1, 0, n - 1, weights);
        }
        t
    }

    fn build(&mut self, node: usize, lo: usize, hi: usize, w: &[f64]) {
        if lo == hi {
            self.sum[node] = w[lo];
            return;
        }
        let mid = (lo + hi) / 2;
        self.build(2 * node, lo, mid, w);
        self.build(2 * node + 1, mid + 1, hi, w);
        self.sum[node] = self.sum[2 * node] + self.sum[2 * node + 1];
    }

    fn apply(&mut self, node: usize) {
        self.sum[node] = -self.sum[node];
        self.flip[node] = !self.flip[node];
    }

    fn push(&mut self, node: usize) {
        if self.flip[node] {
            self.apply(2 * node);
            self.apply(2 * node + 1);
            self.flip[node] = false;
        }
    }

    fn flip_range(&mut self, node: usize, lo: usize, hi: usize, from: usize) {
        if from <= lo {
            self.apply(node);
            return;
        }
        if from > hi {
            return;
        }
        self.push(node);
        let mid = (lo + hi) / 2;
        self.flip_range(2 * node, lo, mid, from);
        self.flip_range(2 * node + 1, mid + 1, hi, from);
        self.sum[node] = self.sum[2 * node] + self.sum[2 * node + 1];
    }

    /// Flips the sign of every segment with index >= `from`.
    fn suffix_flip(&mut self, from: usize) {
        if self.n > 0 && from < self.n {
            self.flip_range(1, 0, self.n - 1, from);
        }
    }

    fn total(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum[1]
        }
    }
}

fn antideriv_sqrt(lo: f64, hi: f64) -> f64 {
    (2.0 / 3.0) * (hi.powf(1.5) - lo.powf(1.5))
}

/// Exact parity integral `∬_{[0,a]×[0,b]} √(xy)·(-1)^{N(x,y)} dx dy` for a
/// fixed set of Poisson points. The plane splits into constant-parity
/// rectangles at the point coordinates, so a sweep over x with suffix sign
/// flips in y integrates the field without quadrature error.
pub fn parity_integral_exact(points: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, y)| x <= a && y <= b)
        .collect();
    pts.sort_by(|p, q| p.0.partial_cmp(&q.0).expect("finite coordinates"));

    let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    ys.sort_by(|p, q| p.partial_cmp(q).expect("finite coordinates"));

    // Segment j spans [ys[j-1], ys[j]) with ys[-1] = 0 and a final segment up
    // to b; flipping at a point with y-rank r flips segments r..=P.
    let p = ys.len();
    let mut weights = Vec::with_capacity(p + 1);
    let mut prev = 0.0;
    for &y in &ys {
        weights.push(antideriv_sqrt(prev, y));
        prev = y;
    }
    weights.push(antideriv_sqrt(prev, b));

    let mut tree = FlipTree::new(&weights);
    let mut integral = 0.0;
    let mut x_prev = 0.0;
    for &(x, y) in &pts {
        integral += antideriv_sqrt(x_prev, x) * tree.total();
        let rank = ys.partition_point(|&v| v < y);
        tree.suffix_flip(rank + 1);
        x_prev = x;
    }
    integral += antideriv_sqrt(x_prev, a) * tree.total();
    integral
}

/// Samples the classic parity field exactly: Poisson jump points are drawn
/// over the largest window and the integral is evaluated without any grid.
/// Same law as [`classic_kac_stroock`] on an infinitely fine grid.
pub fn classic_field_exact(
    rate: f64,
    eps: f64,
    points: &[(f64, f64)],
    stream: RngStream,
) -> Result<Vec<f64>, FieldError> {
    use rand::Rng;
    use rand_distr::{Distribution, Poisson};

    if !(eps.is_finite() && eps > 0.0) {
        return Err(FieldError::BadEpsilon(eps));
    }
    let mut a_max = 0.0_f64;
    let mut b_max = 0.0_f64;
    for &(s, t) in points {
        if !(s.is_finite() && t.is_finite() && s >= 0.0 && t >= 0.0) {
            return Err(FieldError::BadEvalPoint(s, t));
        }
        a_max = a_max.max(s / eps);
        b_max = b_max.max(t / eps);
    }

    let mut jump_points = Vec::new();
    if a_max > 0.0 && b_max > 0.0 {
        let mut rng = stream.rng();
        let count = Poisson::new(rate * a_max * b_max)
            .expect("positive intensity")
            .sample(&mut rng) as usize;
        jump_points.reserve(count);
        for _ in 0..count {
            let x = rng.random::<f64>() * a_max;
            let y = rng.random::<f64>() * b_max;
            jump_points.push((x, y));
        }
    }

    Ok(points
        .iter()
        .map(|&(s, t)| {
            if s == 0.0 || t == 0.0 {
                0.0
            } else {
                eps * parity_integral_exact(&jump_points, s / eps, t / eps)
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Kac–Stroock kernels
// ---------------------------------------------------------------------------

/// Gridded smooth kernels `θ_n^1(s,y) = n·K·√(sy)·cos(θ·L(√n s, √n y))` and
/// the sine companion, on the unit square `(s, y) ∈ [0,1]²`.
///
/// The trigonometric factors are stored at the nodes; kernel values are
/// reconstructed on demand, which keeps the node identity
/// `θ₁² + θ₂² = n²K²·s·y` exact by construction of `cos² + sin² = 1`.
#[derive(Debug, Clone)]
pub struct KernelPath {
    pub n: u64,
    pub theta: f64,
    pub k: f64,
    /// Cells along s (time) and y (space); nodes are `(nt+1) × (nx+1)`.
    pub nt: usize,
    pub nx: usize,
    trig_cos: Vec<f64>,
    trig_sin: Vec<f64>,
}

/// Which of the two kernels to use: 1 = cosine, 2 = sine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelComponent {
    Cos,
    Sin,
}

impl KernelComponent {
    pub fn index(self) -> u8 {
        match self {
            KernelComponent::Cos => 1,
            KernelComponent::Sin => 2,
        }
    }
}

impl KernelPath {
    pub fn node_s(&self, kt: usize) -> f64 {
        kt as f64 / self.nt as f64
    }

    pub fn node_y(&self, jx: usize) -> f64 {
        jx as f64 / self.nx as f64
    }

    fn trig(&self, component: KernelComponent, kt: usize, jx: usize) -> f64 {
        let idx = kt * (self.nx + 1) + jx;
        match component {
            KernelComponent::Cos => self.trig_cos[idx],
            KernelComponent::Sin => self.trig_sin[idx],
        }
    }

    /// Kernel value at node `(s_kt, y_jx)`.
    pub fn value(&self, component: KernelComponent, kt: usize, jx: usize) -> f64 {
        let sy = self.node_s(kt) * self.node_y(jx);
        self.n as f64 * self.k * sy.sqrt() * self.trig(component, kt, jx)
    }

    /// `∫₀^t ∫₀^x θ_n^i(s, y) dy ds` with the same quadrature conventions as
    /// the field construction (lower-left trig factor, midpoint weight,
    /// exact clipping); for `t, x` in `[0, 1]`.
    pub fn time_integral(&self, component: KernelComponent, t: f64, x: f64) -> f64 {
        self.weighted_integral(component, 0.0, t, 0.0, x, |_, _| 1.0)
    }

    /// `∬_{[s0,s1]×[y0,y1]} f(s,y)·θ_n^i(s,y) dy ds`, with `f` evaluated at
    /// the midpoints of the covered cell fractions.
    pub fn weighted_integral<F>(
        &self,
        component: KernelComponent,
        s0: f64,
        s1: f64,
        y0: f64,
        y1: f64,
        f: F,
    ) -> f64
    where
        F: Fn(f64, f64) -> f64,
    {
        let ds = 1.0 / self.nt as f64;
        let dy = 1.0 / self.nx as f64;
        let nk = self.n as f64 * self.k;
        let mut acc = 0.0;
        let kt_lo = (s0 / ds).floor() as usize;
        let kt_hi = ((s1 / ds).ceil() as usize).min(self.nt);
        let jx_lo = (y0 / dy).floor() as usize;
        let jx_hi = ((y1 / dy).ceil() as usize).min(self.nx);
        for kt in kt_lo..kt_hi {
            let (cs0, cs1) = ((kt as f64 * ds).max(s0), ((kt + 1) as f64 * ds).min(s1));
            if cs1 <= cs0 {
                continue;
            }
            let s_mid = 0.5 * (cs0 + cs1);
            for jx in jx_lo..jx_hi {
                let (cy0, cy1) = ((jx as f64 * dy).max(y0), ((jx + 1) as f64 * dy).min(y1));
                if cy1 <= cy0 {
                    continue;
                }
                let y_mid = 0.5 * (cy0 + cy1);
                acc += f(s_mid, y_mid)
                    * nk
                    * (s_mid * y_mid).sqrt()
                    * self.trig(component, kt, jx)
                    * (cs1 - cs0)
                    * (cy1 - cy0);
            }
        }
        acc
    }
}

/// Builds the gridded kernels of order `n` from a sheet path covering
/// `[0, √n]²`; kernel nodes map one-to-one onto the path nodes.
pub fn kac_stroock_kernels(
    path: &SheetPath,
    cfg: &ThetaConfig,
    n: u64,
) -> Result<KernelPath, FieldError> {
    if n == 0 {
        return Err(FieldError::BadKernelOrder);
    }
    let grid = path.grid();
    let need = (n as f64).sqrt();
    if grid.x_max < need * (1.0 - 1e-12) || grid.y_max < need * (1.0 - 1e-12) {
        return Err(FieldError::PathTooSmall {
            x_max: grid.x_max,
            y_max: grid.y_max,
            need,
        });
    }
    if grid.nx < MIN_CELLS_PER_WINDOW || grid.ny < MIN_CELLS_PER_WINDOW {
        return Err(FieldError::GridTooCoarse {
            s: 1.0,
            t: 1.0,
            min: MIN_CELLS_PER_WINDOW,
        });
    }
    let (nt, nx) = (grid.nx, grid.ny);
    let theta = cfg.theta();
    let mut trig_cos = Vec::with_capacity((nt + 1) * (nx + 1));
    let mut trig_sin = Vec::with_capacity((nt + 1) * (nx + 1));
    for kt in 0..=nt {
        for jx in 0..=nx {
            let (sin, cos) = (theta * path.node(kt, jx)).sin_cos();
            trig_cos.push(cos);
            trig_sin.push(sin);
        }
    }
    Ok(KernelPath {
        n,
        theta,
        k: cfg.k(),
        nt,
        nx,
        trig_cos,
        trig_sin,
    })
}

/// Grid resolution rule for the field quadrature. The integrand `e^{iθL}`
/// decorrelates over an x-distance of about `1/(a(θ)·y)`, so resolving the
/// worst scale in a window of extent `w` needs about `a(θ)·w²` cells per
/// side; `kappa` is the oversampling factor.
pub fn quadrature_cells(
    decay_rate: f64,
    window_extent: f64,
    kappa: f64,
    min_cells: usize,
    max_cells: usize,
) -> usize {
    let suggested = (kappa * decay_rate * window_extent * window_extent).ceil();
    let cells = if suggested.is_finite() && suggested > 0.0 {
        suggested as usize
    } else {
        0
    };
    cells.max(min_cells).max(MIN_CELLS_PER_WINDOW).min(max_cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_char::ExponentModel;
    use crate::sheet_sim::sample_sheet;

    fn zero_field_value(eps: f64, s: f64, t: f64, cells: usize) -> Complex64 {
        let w = (s / eps).max(t / eps);
        let grid = GridSpec::new(w, w, cells, cells).unwrap();
        let path = SheetPath::zeros(grid);
        approx_field_with_k(&path, 1.0, 1.0, eps, &[(s, t)])
            .unwrap()
            .value(0)
    }

    /// Closed form of the zero-driver field: ε·∬√(xy) = (4/9)(st)^{3/2}/ε².
    fn zero_field_exact(eps: f64, s: f64, t: f64) -> f64 {
        (4.0 / 9.0) * (s * t).powf(1.5) / (eps * eps)
    }

    #[test]
    fn zero_driver_matches_closed_form() {
        // h = 1e-2 over a unit window.
        let v = zero_field_value(1.0, 1.0, 1.0, 100);
        let exact = zero_field_exact(1.0, 1.0, 1.0);
        assert_eq!(exact, 4.0 / 9.0);
        assert!((v.re - exact).abs() / exact < 1e-3, "got {v}");
        assert_eq!(v.im, 0.0);

        // Same h at ε = 0.5: window [0,2]², 200 cells.
        let v = zero_field_value(0.5, 1.0, 1.0, 200);
        let exact = zero_field_exact(0.5, 1.0, 1.0);
        assert_eq!(exact, 16.0 / 9.0);
        assert!((v.re - exact).abs() / exact < 1e-3, "got {v}");
    }

    #[test]
    fn zero_driver_error_decreases_under_refinement() {
        let exact = zero_field_exact(1.0, 1.0, 1.0);
        let errs: Vec<f64> = [50, 100, 200, 400]
            .iter()
            .map(|&c| (zero_field_value(1.0, 1.0, 1.0, c).re - exact).abs())
            .collect();
        for w in errs.windows(2) {
            // Observed order >= 1: halving h at least halves the error
            // (small slack for round-off).
            assert!(w[1] <= w[0] * 0.55, "errors {errs:?}");
        }
    }

    #[test]
    fn off_grid_windows_are_clipped_exactly() {
        // Boundary in mid-cell: compare a clipped window against the closed
        // form; exact area clipping keeps the error at quadrature level.
        let grid = GridSpec::new(1.0, 1.0, 128, 128).unwrap();
        let path = SheetPath::zeros(grid);
        let s = 0.7371;
        let t = 0.5113;
        let v = approx_field_with_k(&path, 1.0, 1.0, 1.0, &[(s, t)])
            .unwrap()
            .value(0);
        let exact = zero_field_exact(1.0, s, t);
        assert!((v.re - exact).abs() / exact < 1e-3, "got {} want {exact}", v.re);
    }

    #[test]
    fn axis_points_vanish() {
        let grid = GridSpec::new(1.0, 1.0, 16, 16).unwrap();
        let model = ExponentModel::Brownian {
            sigma: 1.0,
            drift: 0.0,
        };
        let path = sample_sheet(&model, grid, RngStream::new(1, 0)).unwrap();
        let cfg = ThetaConfig::new(1.0, model).unwrap();
        let sample = approx_field(&path, &cfg, 1.0, &[(0.0, 0.5), (0.5, 0.0), (0.0, 0.0)]).unwrap();
        for v in &sample.values {
            assert_eq!(*v, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn too_coarse_and_outside_windows_error() {
        let grid = GridSpec::new(1.0, 1.0, 16, 16).unwrap();
        let path = SheetPath::zeros(grid);
        // 0.1/ (1/16) = 1.6 cells per side.
        assert!(matches!(
            approx_field_with_k(&path, 1.0, 1.0, 1.0, &[(0.1, 0.5)]),
            Err(FieldError::GridTooCoarse { .. })
        ));
        assert!(matches!(
            approx_field_with_k(&path, 1.0, 1.0, 0.5, &[(1.0, 1.0)]),
            Err(FieldError::WindowOutsideGrid { .. })
        ));
    }

    #[test]
    fn streaming_matches_dense_path() {
        let model = ExponentModel::Brownian {
            sigma: 1.0,
            drift: 0.3,
        };
        let grid = GridSpec::new(2.0, 2.0, 64, 64).unwrap();
        let stream = RngStream::new(5, 17);
        let points = [(1.0, 1.0), (0.51, 0.77), (1.0, 0.65)];
        let dense = {
            let path = sample_sheet(&model, grid, stream).unwrap();
            approx_field_with_k(&path, 1.0, 0.25, 0.5, &points).unwrap()
        };
        let streamed =
            sample_approx_field(Some(&model), 1.0, 0.25, 0.5, grid, &points, stream).unwrap();
        assert_eq!(dense.values, streamed.values);
    }

    #[test]
    fn conjugation_symmetry_for_integer_drivers() {
        use std::f64::consts::PI;
        let model = ExponentModel::Poisson {
            rate: 1.0,
            jump: 1.0,
        };
        let grid = GridSpec::new(4.0, 4.0, 32, 32).unwrap();
        let path = sample_sheet(&model, grid, RngStream::new(23, 2)).unwrap();
        let theta = PI / 2.0;
        let cfg = ThetaConfig::new(theta, model.clone()).unwrap();
        let cfg_conj = ThetaConfig::new(2.0 * PI - theta, model).unwrap();
        assert!((cfg.k() - cfg_conj.k()).abs() < 1e-12);
        let points = [(1.0, 1.0), (0.8, 0.35)];
        let a = approx_field(&path, &cfg, 0.25, &points).unwrap();
        let b = approx_field(&path, &cfg_conj, 0.25, &points).unwrap();
        for (va, vb) in a.values.iter().zip(&b.values) {
            assert!((va.re - vb.re).abs() <= 1e-10);
            assert!((va.im + vb.im).abs() <= 1e-10);
        }
    }

    #[test]
    fn classic_zero_driver_matches_closed_form() {
        let grid = GridSpec::new(1.0, 1.0, 100, 100).unwrap();
        let path = SheetPath::zeros(grid);
        let v = classic_kac_stroock(&path, 1.0, &[(1.0, 1.0)]).unwrap()[0];
        assert!((v - 4.0 / 9.0).abs() / (4.0 / 9.0) < 1e-3);
    }

    #[test]
    fn classic_rejects_non_integer_paths() {
        let grid = GridSpec::new(1.0, 1.0, 8, 8).unwrap();
        let path = sample_sheet(
            &ExponentModel::Brownian {
                sigma: 1.0,
                drift: 0.0,
            },
            grid,
            RngStream::new(3, 0),
        )
        .unwrap();
        assert!(matches!(
            classic_kac_stroock(&path, 1.0, &[(1.0, 1.0)]),
            Err(FieldError::NonIntegerDriver(_))
        ));
    }

    /// Brute-force arrangement sum: the plane decomposes into rectangles of
    /// constant parity at the jump coordinates.
    fn parity_integral_brute(points: &[(f64, f64)], a: f64, b: f64) -> f64 {
        let mut xs: Vec<f64> = points.iter().map(|p| p.0).filter(|&x| x < a).collect();
        let mut ys: Vec<f64> = points.iter().map(|p| p.1).filter(|&y| y < b).collect();
        xs.push(0.0);
        xs.push(a);
        ys.push(0.0);
        ys.push(b);
        xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
        ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let mut acc = 0.0;
        for i in 0..xs.len() - 1 {
            for j in 0..ys.len() - 1 {
                let count = points
                    .iter()
                    .filter(|&&(x, y)| x <= xs[i] && y <= ys[j])
                    .count();
                let sign = if count % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * antideriv_sqrt(xs[i], xs[i + 1]) * antideriv_sqrt(ys[j], ys[j + 1]);
            }
        }
        acc
    }

    #[test]
    fn exact_parity_integral_matches_brute_force() {
        use rand::Rng;
        let mut rng = RngStream::new(7, 7).rng();
        for trial in 0..40 {
            let count = trial % 13;
            let pts: Vec<(f64, f64)> = (0..count)
                .map(|_| (rng.random::<f64>() * 3.0, rng.random::<f64>() * 2.0))
                .collect();
            let fast = parity_integral_exact(&pts, 2.5, 1.5);
            let brute = parity_integral_brute(&pts, 2.5, 1.5);
            assert!(
                (fast - brute).abs() < 1e-10,
                "trial {trial}: {fast} vs {brute}"
            );
        }
    }

    #[test]
    fn exact_parity_with_no_points_is_the_closed_form() {
        let v = parity_integral_exact(&[], 2.0, 3.0);
        assert!((v - (4.0 / 9.0) * (2.0_f64 * 3.0).powf(1.5) * ((2.0 / 2.0) * (3.0 / 3.0))).abs() < 1e-12);
        assert!((v - antideriv_sqrt(0.0, 2.0) * antideriv_sqrt(0.0, 3.0)).abs() < 1e-12);
    }

    #[test]
    fn exact_classic_field_axis_and_determinism() {
        let stream = RngStream::new(9, 100);
        let a = classic_field_exact(1.0, 0.1, &[(0.0, 1.0), (1.0, 1.0)], stream).unwrap();
        let b = classic_field_exact(1.0, 0.1, &[(0.0, 1.0), (1.0, 1.0)], stream).unwrap();
        assert_eq!(a[0], 0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn kernels_on_zero_path_reduce_to_the_weight() {
        let n = 4u64;
        let grid = GridSpec::new(2.0, 2.0, 16, 16).unwrap();
        let path = SheetPath::zeros(grid);
        let cfg = ThetaConfig::new(
            1.0,
            ExponentModel::Brownian {
                sigma: 1.0,
                drift: 0.0,
            },
        )
        .unwrap();
        let kernel = kac_stroock_kernels(&path, &cfg, n).unwrap();
        let nk = n as f64 * cfg.k();
        for kt in [0, 3, 16] {
            for jx in [0, 7, 16] {
                let sy = kernel.node_s(kt) * kernel.node_y(jx);
                let want = nk * sy.sqrt();
                assert!((kernel.value(KernelComponent::Cos, kt, jx) - want).abs() < 1e-12);
                assert_eq!(kernel.value(KernelComponent::Sin, kt, jx), 0.0);
            }
        }
    }

    #[test]
    fn kernel_pythagorean_identity() {
        let n = 9u64;
        let model = ExponentModel::Brownian {
            sigma: 1.0,
            drift: 0.0,
        };
        let grid = GridSpec::new(3.0, 3.0, 24, 24).unwrap();
        let path = sample_sheet(&model, grid, RngStream::new(31, 0)).unwrap();
        let cfg = ThetaConfig::new(1.0, model).unwrap();
        let kernel = kac_stroock_kernels(&path, &cfg, n).unwrap();
        let n2k2 = (n as f64 * cfg.k()).powi(2);
        for kt in 0..=kernel.nt {
            for jx in 0..=kernel.nx {
                let t1 = kernel.value(KernelComponent::Cos, kt, jx);
                let t2 = kernel.value(KernelComponent::Sin, kt, jx);
                let want = n2k2 * kernel.node_s(kt) * kernel.node_y(jx);
                assert!((t1 * t1 + t2 * t2 - want).abs() <= 1e-10 * want.max(1.0));
            }
        }
    }

    #[test]
    fn kernel_time_integral_matches_rescaled_field() {
        // ∫∫ θ_n^1 over [0,t]×[0,x] is the real part of the field at
        // ε = n^{-1/2} after the change of variables; both sides use the same
        // quadrature so they agree to round-off.
        let n = 4u64;
        let model = ExponentModel::Poisson {
            rate: 1.0,
            jump: 1.0,
        };
        let grid = GridSpec::new(2.0, 2.0, 32, 32).unwrap();
        let path = sample_sheet(&model, grid, RngStream::new(12, 3)).unwrap();
        let cfg = ThetaConfig::new(1.0, model).unwrap();
        let kernel = kac_stroock_kernels(&path, &cfg, n).unwrap();
        let eps = 1.0 / (n as f64).sqrt();
        for &(t, x) in &[(1.0, 1.0), (0.75, 0.5), (0.625, 0.9375)] {
            let lhs1 = kernel.time_integral(KernelComponent::Cos, t, x);
            let lhs2 = kernel.time_integral(KernelComponent::Sin, t, x);
            let rhs = approx_field(&path, &cfg, eps, &[(t, x)]).unwrap().value(0);
            assert!((lhs1 - rhs.re).abs() < 1e-6, "cos {lhs1} vs {}", rhs.re);
            assert!((lhs2 - rhs.im).abs() < 1e-6, "sin {lhs2} vs {}", rhs.im);
        }
    }

    #[test]
    fn resolution_rule_scales_with_window() {
        assert_eq!(quadrature_cells(0.5, 4.0, 2.0, 64, 8192), 64);
        assert_eq!(quadrature_cells(0.5, 50.0, 2.0, 64, 8192), 2500);
        assert_eq!(quadrature_cells(0.5, 500.0, 2.0, 64, 8192), 8192);
    }
}
