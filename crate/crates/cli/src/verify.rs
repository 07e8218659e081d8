//! The convergence verification suite: one criterion per quantitative claim,
//! each reported as auditable rows (target, estimate, standard error,
//! tolerance, verdict) plus a per-criterion pass line.
//!
//! Randomness discipline: every experiment owns a disjoint stream lane, and
//! replicate `r` of a lane uses stream `lane_base + r`. Replicates run in
//! parallel but are collected in replicate order and reduced sequentially,
//! so a fixed seed produces bit-identical reports on any thread count.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;

use levysheet::field_approx::{
    approx_field, approx_field_with_k, classic_field_exact, kac_stroock_kernels,
    sample_approx_field, KernelComponent,
};
use levysheet::levy_char::ThetaConfig;
use levysheet::sheet_sim::{sample_sheet, sample_unit_area_increment, GridSpec, RngStream, SheetPath};
use levysheet::spde_solver::{green_function, white_noise_variance_series, Drift, HeatConfig, HeatSolver};
use levysheet::stat_harness::{
    fourth_moment_bound_scan, ks_p_value, ks_two_sample_statistic, mc_moments, normality_test,
    replicate_map, McEstimate, TestReport,
};
use levysheet::{ExponentModel, JumpAtom};

use crate::config::ExperimentConfig;

// Stream lanes; replicate ids stay in the low 32 bits.
const LANE_ECF: u32 = 1;
const LANE_MAIN: u32 = 2;
const LANE_SCAN: u32 = 3;
const LANE_GAUSS: u32 = 4;
const LANE_CLASSIC: u32 = 5;
const LANE_SPDE_REF: u32 = 6;
const LANE_SPDE_REF_SANITY: u32 = 7;
const LANE_KERNEL: u32 = 8; // + kernel-order index
const LANE_KERNEL_EXTRA: u32 = 20;
pub const LANE_SHEET_DUMP: u32 = 24;
pub const LANE_FIELD_CSV: u32 = 25;
pub const LANE_PLOT: u32 = 26;
pub const LANE_SPDE_RUN: u32 = 27;

/// One row of the report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub test: String,
    pub target: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ReportRow {
    fn new(test: impl Into<String>, target: f64, estimate: f64, stderr: f64, tolerance: f64) -> Self {
        Self {
            test: test.into(),
            target,
            estimate,
            stderr,
            tolerance,
            pass: (estimate - target).abs() <= tolerance,
        }
    }

    fn from_report(r: &TestReport) -> Self {
        Self {
            test: r.name.clone(),
            target: r.target,
            estimate: r.estimate.mean,
            stderr: r.estimate.stderr,
            tolerance: r.tolerance,
            pass: r.pass,
        }
    }

    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "pass"
        } else {
            "fail"
        }
    }

    fn bits_equal(&self, other: &Self) -> bool {
        self.test == other.test
            && self.target.to_bits() == other.target.to_bits()
            && self.estimate.to_bits() == other.estimate.to_bits()
            && self.stderr.to_bits() == other.stderr.to_bits()
            && self.tolerance.to_bits() == other.tolerance.to_bits()
            && self.pass == other.pass
    }
}

/// Verdict of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Criterion {
    pub id: String,
    pub label: String,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub criteria: Vec<Criterion>,
    pub rows: Vec<ReportRow>,
    pub pass: bool,
    pub seconds: f64,
}

impl VerifyReport {
    /// One line per criterion, plus the overall verdict.
    pub fn render_summary(&self) -> String {
        let mut out = String::new();
        for c in &self.criteria {
            out.push_str(&format!(
                "[{}] {}: {} ({:.1}s) {}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.id,
                c.label,
                c.seconds,
                c.detail
            ));
        }
        out.push_str(&format!(
            "overall: {} ({} criteria, {:.1}s)\n",
            if self.pass { "PASS" } else { "FAIL" },
            self.criteria.len(),
            self.seconds
        ));
        out
    }
}

fn unbiased_variance(xs: &[f64]) -> f64 {
    McEstimate::from_samples(xs).expect("enough samples").variance
}

/// Unbiased variance and its standard error from the empirical fourth
/// central moment: Var(s²) ≈ (m₄ - var²)/n.
fn variance_with_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (var, ((m4 - var * var).max(0.0) / n).sqrt())
}

fn covariance(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let est = levysheet::stat_harness::covariance_estimate(xs, ys).expect("enough samples");
    (est.mean, est.stderr)
}

// ---------------------------------------------------------------------------
// Shared runs
// ---------------------------------------------------------------------------

/// The main-ε field run shared by the limit-moment, increment, scan, and
/// Gaussianity criteria: per replicate, the field at every needed point.
struct MainFieldRun {
    points: Vec<(f64, f64)>,
    /// `replicates × points`.
    values: Vec<Vec<Complex64>>,
}

impl MainFieldRun {
    fn index(&self, p: (f64, f64)) -> usize {
        self.points
            .iter()
            .position(|&q| q == p)
            .expect("point registered during run construction")
    }

    fn series(&self, p: (f64, f64)) -> Vec<Complex64> {
        let idx = self.index(p);
        self.values.iter().map(|v| v[idx]).collect()
    }

    fn increments(&self, rect: (f64, f64, f64, f64)) -> Vec<Complex64> {
        let c00 = self.index((rect.0, rect.1));
        let c10 = self.index((rect.2, rect.1));
        let c01 = self.index((rect.0, rect.3));
        let c11 = self.index((rect.2, rect.3));
        self.values
            .iter()
            .map(|v| v[c11] - v[c01] - v[c10] + v[c00])
            .collect()
    }
}

fn rect_corners(rect: (f64, f64, f64, f64)) -> [(f64, f64); 4] {
    [
        (rect.0, rect.1),
        (rect.2, rect.1),
        (rect.0, rect.3),
        (rect.2, rect.3),
    ]
}

fn field_grid(cfg: &ExperimentConfig, eps: f64, points: &[(f64, f64)]) -> GridSpec {
    let theta_cfg = cfg.theta_config();
    let extent = points
        .iter()
        .flat_map(|&(s, t)| [s, t])
        .fold(0.0_f64, f64::max)
        / eps;
    let cells = cfg
        .quadrature
        .cells(cfg.model.exponent_a(theta_cfg.theta()), extent);
    GridSpec::new(extent, extent, cells, cells).expect("valid grid")
}

fn run_main_field(cfg: &ExperimentConfig) -> MainFieldRun {
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut push = |p: (f64, f64)| {
        if !points.contains(&p) {
            points.push(p);
        }
    };
    for &p in &cfg.eval_points {
        push(p);
    }
    push(cfg.covariance_pair.0);
    push(cfg.covariance_pair.1);
    for c in rect_corners(cfg.lemma_rect) {
        push(c);
    }
    for &r in &cfg.scan_rects {
        for c in rect_corners(r) {
            push(c);
        }
    }

    let eps = cfg.main_epsilon();
    let grid = field_grid(cfg, eps, &points);
    let theta_cfg = cfg.theta_config();
    let base = RngStream::for_replicate(cfg.seed, LANE_MAIN, 0);
    let points_ref = &points;
    let model = cfg.model.clone();
    let values = replicate_map(cfg.replicates, base, move |s| {
        sample_approx_field(
            Some(&model),
            theta_cfg.theta(),
            theta_cfg.k(),
            eps,
            grid,
            points_ref,
            s,
        )
        .expect("validated configuration")
        .values
    });
    MainFieldRun { points, values }
}

/// Per-probe marginal samples of a heat-equation solution family.
struct SpdeFamily {
    per_probe: Vec<Vec<f64>>,
}

fn run_spde_white(cfg: &ExperimentConfig, lane: u32) -> SpdeFamily {
    let heat = HeatConfig::zero_u0(Drift::Zero, cfg.heat.nt, cfg.heat.nx, cfg.heat.green_terms);
    let solver = HeatSolver::new(heat).expect("validated heat config");
    let probes = cfg.probe_points.clone();
    let rows = replicate_map(
        cfg.replicates,
        RngStream::for_replicate(cfg.seed, lane, 0),
        move |s| {
            let field = solver.solve_white_noise(s);
            probes
                .iter()
                .map(|&(t, x)| field.at(t, x).expect("validated probes"))
                .collect::<Vec<f64>>()
        },
    );
    SpdeFamily {
        per_probe: transpose(rows, cfg.probe_points.len()),
    }
}

fn run_spde_kernel(cfg: &ExperimentConfig, n: u64, lane: u32) -> SpdeFamily {
    let heat = HeatConfig::zero_u0(Drift::Zero, cfg.heat.nt, cfg.heat.nx, cfg.heat.green_terms);
    let solver = HeatSolver::new(heat).expect("validated heat config");
    let theta_cfg = cfg.theta_config();
    let component = if cfg.kernel_component == 1 {
        KernelComponent::Cos
    } else {
        KernelComponent::Sin
    };
    let side = (n as f64).sqrt();
    let grid = GridSpec::new(side, side, cfg.heat.nt, cfg.heat.nx).expect("valid kernel grid");
    let probes = cfg.probe_points.clone();
    let model = cfg.model.clone();
    let rows = replicate_map(
        cfg.replicates,
        RngStream::for_replicate(cfg.seed, lane, 0),
        move |s| {
            let path = sample_sheet(&model, grid, s).expect("valid grid");
            let kernel = kac_stroock_kernels(&path, &theta_cfg, n).expect("kernel grid fits");
            let field = solver
                .solve_kernel_driven(&kernel, component)
                .expect("grids match");
            probes
                .iter()
                .map(|&(t, x)| field.at(t, x).expect("validated probes"))
                .collect::<Vec<f64>>()
        },
    );
    SpdeFamily {
        per_probe: transpose(rows, cfg.probe_points.len()),
    }
}

fn transpose(rows: Vec<Vec<f64>>, width: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(rows.len()); width];
    for row in rows {
        for (k, v) in row.into_iter().enumerate() {
            out[k].push(v);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

fn criterion_exact_identities(cfg: &ExperimentConfig, rows: &mut Vec<ReportRow>) -> Criterion {
    let started = Instant::now();
    let first = rows.len();

    // Sheet and field vanish on the axes, exactly.
    let grid = GridSpec::new(2.0, 2.0, 24, 24).unwrap();
    let brownian = ExponentModel::Brownian {
        sigma: 1.0,
        drift: 0.0,
    };
    let path = sample_sheet(&brownian, grid, RngStream::for_replicate(cfg.seed, 0, 1)).unwrap();
    let mut axis_dev = 0.0_f64;
    for i in 0..=24 {
        axis_dev = axis_dev.max(path.node(i, 0).abs()).max(path.node(0, i).abs());
    }
    let theta_cfg = ThetaConfig::new(1.0, brownian.clone()).unwrap();
    let sample = approx_field(&path, &theta_cfg, 1.0, &[(0.0, 1.0), (1.0, 0.0), (0.0, 0.0)]).unwrap();
    for v in &sample.values {
        axis_dev = axis_dev.max(v.norm());
    }
    rows.push(ReportRow::new("exact.axis_vanishing", 0.0, axis_dev, 0.0, 0.0));

    // Rectangular-increment additivity: integer driver bit-exact, real
    // driver to 1e-10 relative.
    let poisson = ExponentModel::Poisson {
        rate: 2.0,
        jump: 1.0,
    };
    let int_path = sample_sheet(
        &poisson,
        GridSpec::new(2.0, 1.0, 8, 8).unwrap(),
        RngStream::for_replicate(cfg.seed, 0, 2),
    )
    .unwrap();
    let whole = int_path.rect_increment(0.0, 0.0, 2.0, 1.0).unwrap();
    let left = int_path.rect_increment(0.0, 0.0, 1.0, 1.0).unwrap();
    let right = int_path.rect_increment(1.0, 0.0, 2.0, 1.0).unwrap();
    rows.push(ReportRow::new(
        "exact.additivity_integer",
        0.0,
        (whole - (left + right)).abs(),
        0.0,
        0.0,
    ));
    let real_path = sample_sheet(
        &brownian,
        GridSpec::new(2.0, 1.0, 8, 8).unwrap(),
        RngStream::for_replicate(cfg.seed, 0, 3),
    )
    .unwrap();
    let whole = real_path.rect_increment(0.0, 0.0, 2.0, 1.0).unwrap();
    let parts = real_path.rect_increment(0.0, 0.0, 1.0, 1.0).unwrap()
        + real_path.rect_increment(1.0, 0.0, 2.0, 1.0).unwrap();
    rows.push(ReportRow::new(
        "exact.additivity_real_rel",
        0.0,
        (whole - parts).abs() / whole.abs().max(1e-300),
        0.0,
        1e-10,
    ));

    // Green function: symmetry bit-exact, boundary zeros, hard zero at y=0.
    let mut green_sym = 0.0_f64;
    let mut green_bound = 0.0_f64;
    for i in 1..8 {
        for j in 1..8 {
            let (x, y) = (i as f64 / 8.0, j as f64 / 8.0);
            let a = green_function(0.05, x, y, cfg.heat.green_terms).unwrap();
            let b = green_function(0.05, y, x, cfg.heat.green_terms).unwrap();
            green_sym = green_sym.max((a - b).abs());
        }
        let x = i as f64 / 8.0;
        green_bound = green_bound.max(
            green_function(0.05, x, 0.0, cfg.heat.green_terms)
                .unwrap()
                .abs(),
        );
        green_bound = green_bound.max(
            green_function(0.05, x, 1.0, cfg.heat.green_terms)
                .unwrap()
                .abs(),
        );
    }
    rows.push(ReportRow::new("exact.green_symmetry", 0.0, green_sym, 0.0, 0.0));
    rows.push(ReportRow::new(
        "exact.green_boundary",
        0.0,
        green_bound,
        0.0,
        1e-12,
    ));

    // Kernel node identity θ₁² + θ₂² = n²K²·s·y.
    let kernel_path = sample_sheet(
        &brownian,
        GridSpec::new(4.0, 4.0, 32, 32).unwrap(),
        RngStream::for_replicate(cfg.seed, 0, 4),
    )
    .unwrap();
    let kernel = kac_stroock_kernels(&kernel_path, &theta_cfg, 16).unwrap();
    let n2k2 = (16.0 * theta_cfg.k()).powi(2);
    let mut kernel_dev = 0.0_f64;
    for kt in 0..=kernel.nt {
        for jx in 0..=kernel.nx {
            let t1 = kernel.value(KernelComponent::Cos, kt, jx);
            let t2 = kernel.value(KernelComponent::Sin, kt, jx);
            let want = n2k2 * kernel.node_s(kt) * kernel.node_y(jx);
            kernel_dev = kernel_dev.max((t1 * t1 + t2 * t2 - want).abs() / want.max(1.0));
        }
    }
    rows.push(ReportRow::new(
        "exact.kernel_pythagorean_rel",
        0.0,
        kernel_dev,
        0.0,
        1e-10,
    ));

    // Conjugation symmetry θ ↔ 2π - θ on an integer-valued path.
    let conj_path = sample_sheet(
        &ExponentModel::Poisson {
            rate: 1.0,
            jump: 1.0,
        },
        GridSpec::new(4.0, 4.0, 32, 32).unwrap(),
        RngStream::for_replicate(cfg.seed, 0, 5),
    )
    .unwrap();
    let unit_poisson = ExponentModel::Poisson {
        rate: 1.0,
        jump: 1.0,
    };
    let t_a = ThetaConfig::new(PI / 2.0, unit_poisson.clone()).unwrap();
    let t_b = ThetaConfig::new(2.0 * PI - PI / 2.0, unit_poisson).unwrap();
    let pts = [(1.0, 1.0), (0.7, 0.4)];
    let fa = approx_field(&conj_path, &t_a, 0.25, &pts).unwrap();
    let fb = approx_field(&conj_path, &t_b, 0.25, &pts).unwrap();
    let mut conj_dev = 0.0_f64;
    for (a, b) in fa.values.iter().zip(&fb.values) {
        conj_dev = conj_dev.max((a.re - b.re).abs()).max((a.im + b.im).abs());
    }
    rows.push(ReportRow::new(
        "exact.conjugation_symmetry",
        0.0,
        conj_dev,
        0.0,
        1e-10,
    ));

    finish(
        "1",
        "exact identities (axes, additivity, Green, kernels, conjugation)",
        rows,
        first,
        started,
        String::new(),
    )
}

fn criterion_sampler_laws(cfg: &ExperimentConfig, rows: &mut Vec<ReportRow>) -> Criterion {
    let started = Instant::now();
    let first = rows.len();
    let models: [(&str, ExponentModel); 4] = [
        (
            "brownian",
            ExponentModel::Brownian {
                sigma: 1.0,
                drift: 0.3,
            },
        ),
        (
            "poisson",
            ExponentModel::Poisson {
                rate: 1.0,
                jump: 1.0,
            },
        ),
        (
            "compound_poisson",
            ExponentModel::CompoundPoissonDiscrete {
                atoms: vec![
                    JumpAtom {
                        size: 1.0,
                        mass: 0.75,
                    },
                    JumpAtom {
                        size: -2.0,
                        mass: 0.25,
                    },
                ],
            },
        ),
        (
            "symmetric_stable",
            ExponentModel::SymmetricStable {
                alpha: 1.5,
                scale: 1.0,
            },
        ),
    ];

    for (m_idx, (name, model)) in models.iter().enumerate() {
        let draws = replicate_map(
            cfg.ecf_replicates,
            RngStream::for_replicate(cfg.seed, LANE_ECF, 0)
                .substream_offset((m_idx as u64) << 24),
            |s| sample_unit_area_increment(model, &mut s.rng()).expect("valid model"),
        );
        for &xi in &[0.5, 1.0, 2.0] {
            let a = model.exponent_a(xi);
            let b = model.exponent_b(xi);
            // E e^{iξΔ} = e^{-a}(cos b - i sin b) for unit area.
            let cos_samples: Vec<f64> = draws.iter().map(|&x| (xi * x).cos()).collect();
            let sin_samples: Vec<f64> = draws.iter().map(|&x| (xi * x).sin()).collect();
            let est_c = McEstimate::from_samples(&cos_samples).unwrap();
            let est_s = McEstimate::from_samples(&sin_samples).unwrap();
            rows.push(ReportRow::new(
                format!("ecf.{name}.xi{xi}.re"),
                (-a).exp() * b.cos(),
                est_c.mean,
                est_c.stderr,
                cfg.tolerances.se_multiplier * est_c.stderr,
            ));
            rows.push(ReportRow::new(
                format!("ecf.{name}.xi{xi}.im"),
                -(-a).exp() * b.sin(),
                est_s.mean,
                est_s.stderr,
                cfg.tolerances.se_multiplier * est_s.stderr,
            ));
        }
    }
    finish(
        "2",
        format!(
            "sampler law checks: empirical CF vs e^(-Ψ) at ξ in {{0.5, 1, 2}}, M = {}",
            cfg.ecf_replicates
        ),
        rows,
        first,
        started,
        String::new(),
    )
}

fn zero_driver_value(eps: f64, cells: usize) -> f64 {
    let w = 1.0 / eps;
    let grid = GridSpec::new(w, w, cells, cells).unwrap();
    approx_field_with_k(&SheetPath::zeros(grid), 1.0, 1.0, eps, &[(1.0, 1.0)])
        .unwrap()
        .value(0)
        .re
}

fn criterion_quadrature_oracle(cfg: &ExperimentConfig, rows: &mut Vec<ReportRow>) -> Criterion {
    let started = Instant::now();
    let first = rows.len();
    let rel = cfg.tolerances.quadrature_oracle_rel;

    // Closed form ε·∬√(xy) = (4/9)(st)^{3/2}/ε² at h = 1e-2.
    let exact_1 = 4.0 / 9.0;
    let v1 = zero_driver_value(1.0, 100);
    rows.push(ReportRow::new(
        "quadrature.zero_driver_eps1",
        exact_1,
        v1,
        0.0,
        rel * exact_1,
    ));
    let exact_half = 16.0 / 9.0;
    let v2 = zero_driver_value(0.5, 200);
    rows.push(ReportRow::new(
        "quadrature.zero_driver_eps0.5",
        exact_half,
        v2,
        0.0,
        rel * exact_half,
    ));

    // Halving the cell size must at least halve the error (order >= 1).
    let errs: Vec<f64> = [50usize, 100, 200, 400]
        .iter()
        .map(|&c| (zero_driver_value(1.0, c) - exact_1).abs())
        .collect();
    let max_ratio = errs
        .windows(2)
        .map(|w| w[1] / w[0])
        .fold(0.0_f64, f64::max);
    rows.push(ReportRow::new(
        "quadrature.refinement_ratio_max",
        0.0,
        max_ratio,
        0.0,
        0.5,
    ));
    finish(
        "3",
        "forced-zero-driver quadrature oracle and refinement order",
        rows,
        first,
        started,
        format!("errors under refinement: {errs:?}"),
    )
}

fn criterion_limit_moments(
    cfg: &ExperimentConfig,
    run: &MainFieldRun,
    run_seconds: f64,
    rows: &mut Vec<ReportRow>,
) -> Criterion {
    let started = Instant::now();
    let first = rows.len();
    let tol = &cfg.tolerances;
    let corner = cfg.eval_points[0];
    let target_var = corner.0 * corner.1;

    let series = run.series(corner);
    let re: Vec<f64> = series.iter().map(|v| v.re).collect();
    let im: Vec<f64> = series.iter().map(|v| v.im).collect();
    for (tag, samples) in [("re", &re), ("im", &im)] {
        let (var, se) = variance_with_se(samples);
        rows.push(ReportRow::new(
            format!("thm_limit.var_{tag}@{corner:?}"),
            target_var,
            var,
            se,
            tol.se_multiplier * se + tol.bias_allowance,
        ));
    }
    let (cross, cross_se) = covariance(&re, &im);
    rows.push(ReportRow::new(
        format!("thm_limit.cov_re_im@{corner:?}"),
        0.0,
        cross,
        cross_se,
        tol.cross_covariance,
    ));

    let (p1, p2) = cfg.covariance_pair;
    let s1 = run.series(p1);
    let s2 = run.series(p2);
    let target_cov = p1.0.min(p2.0) * p1.1.min(p2.1);
    let re1: Vec<f64> = s1.iter().map(|v| v.re).collect();
    let re2: Vec<f64> = s2.iter().map(|v| v.re).collect();
    let im1: Vec<f64> = s1.iter().map(|v| v.im).collect();
    let im2: Vec<f64> = s2.iter().map(|v| v.im).collect();
    let (c_re, se_re) = covariance(&re1, &re2);
    rows.push(ReportRow::new(
        format!("thm_limit.cov_re_re@{p1:?}x{p2:?}"),
        target_cov,
        c_re,
        se_re,
        tol.se_multiplier * se_re + tol.bias_allowance,
    ));
    let (c_im, se_im) = covariance(&im1, &im2);
    rows.push(ReportRow::new(
        format!("thm_limit.cov_im_im@{p1:?}x{p2:?}"),
        target_cov,
        c_im,
        se_im,
        tol.se_multiplier * se_im + tol.bias_allowance,
    ));
    let (c_x, x_se) = covariance(&re1, &im2);
    rows.push(ReportRow::new(
        format!("thm_limit.cov_re_im@{p1:?}x{p2:?}"),
        0.0,
        c_x,
        x_se,
        tol.cross_covariance,
    ));

    let mut crit = finish(
        "4",
        format!(
            "limit moments at ε = {} (M = {})",
            cfg.main_epsilon(),
            cfg.replicates
        ),
        rows,
        first,
        started,
        format!("shared field run {run_seconds:.1}s"),
    );
    crit.seconds += run_seconds;
    crit
}

fn criterion_increment_second_moment(
    cfg: &ExperimentConfig,
    run: &MainFieldRun,
    rows: &mut Vec<ReportRow>,
) -> Criterion {
    let started = Instant::now();
    let first = rows.len();
    let rect = cfg.lemma_rect;
    let target = 2.0 * (rect.2 - rect.0) * (rect.3 - rect.1);
    let samples: Vec<f64> = run
        .increments(rect)
        .iter()
        .map(|v| v.norm_sqr())
        .collect();
    let est = McEstimate::from_samples(&samples).unwrap();
    rows.push(ReportRow::new(
        format!("increment.second_moment@{rect:?}"),
        target,
        est.mean,
        est.stderr,
        cfg.tolerances.second_moment_rel * target,
    ));
    finish(
        "5",
        "increment second moment vs 2(s'-s)(t'-t)",
        rows,
        first,
        started,
        String::new(),
    )
}

fn criterion_fourth_moment_scan(
    cfg: &ExperimentConfig,
    rows: &mut Vec<ReportRow>,
) -> Criterion {
    let started = Instant::now();
    let first = rows.len();
    let theta_cfg = cfg.theta_config();
    let cap = cfg.tolerances.fourth_moment_cap;

    // Deduplicated corner list shared by all scan rectangles.
    let mut corners: Vec<(f64, f64)> = Vec::new();
    for &r in &cfg.scan_rects {
        for c in rect_corners(r) {
            if !corners.contains(&c) {
                corners.push(c);
            }
        }
    }
    let corner_idx = |p: (f64, f64)| corners.iter().position(|&q| q == p).unwrap();
    let rect_idx: Vec<[usize; 4]> = cfg
        .scan_rects
        .iter()
        .map(|&r| {
            [
                corner_idx((r.0, r.1)),
                corner_idx((r.2, r.1)),
                corner_idx((r.0, r.3)),
                corner_idx((r.2, r.3)),
            ]
        })
        .collect();

    let model = cfg.model.clone();
    let scan = fourth_moment_bound_scan(
        |eps, stream| {
            let grid = field_grid(cfg, eps, &corners);
            let sample = sample_approx_field(
                Some(&model),
                theta_cfg.theta(),
                theta_cfg.k(),
                eps,
                grid,
                &corners,
                stream,
            )
            .expect("validated configuration");
            rect_idx
                .iter()
                .map(|&[c00, c10, c01, c11]| {
                    sample.values[c11] - sample.values[c01] - sample.values[c10]
                        + sample.values[c00]
                })
                .collect()
        },
        &cfg.epsilons,
        &cfg.scan_rects,
        cfg.scan_replicates,
        RngStream::for_replicate(cfg.seed, LANE_SCAN, 0),
        cap,
    )
    .expect("enough replicates");

    for e in &scan.entries {
        rows.push(ReportRow::new(
            format!("tightness.ratio.eps{}.rect{:?}", e.eps, e.rect),
            0.0,
            e.ratio,
            e.stderr,
            cap,
        ));
    }
    rows.push(ReportRow::new(
        "tightness.no_growth_trend",
        1.0,
        if scan.trend_ok { 1.0 } else { 0.0 },
        0.0,
        0.0,
    ));

    // Complex-Gaussian reference: the ratio E|ΔZ|⁴/v² equals 8.
    let gauss = mc_moments(
        |s| {
            let mut rng = s.rng();
            let a = levysheet::sheet_sim::sample_standard_normal(&mut rng);
            let b = levysheet::sheet_sim::sample_standard_normal(&mut rng);
            let z = Complex64::new(a, b);
            z.norm_sqr().powi(2)
        },
        cfg.gaussian_reference_replicates,
        RngStream::for_replicate(cfg.seed, LANE_GAUSS, 0),
    )
    .unwrap();
    rows.push(ReportRow::new(
        "tightness.gaussian_reference",
        8.0,
        gauss.mean,
        gauss.stderr,
        cfg.tolerances.se_multiplier * gauss.stderr,
    ));

    finish(
        "6",
        format!(
            "fourth-moment ratio scan over ε in {:?} (cap {cap}, M = {})",
            cfg.epsilons, cfg.scan_replicates
        ),
        rows,
        first,
        started,
        format!("max ratio {:.2}", scan.max_ratio),
    )
}

/// Deterministic finite-ε mean of the real part,
/// `E[Re X_ε(s,t)] = εK·∬ √(xy)·e^{-a·xy}·cos(b·xy) dx dy` over the window,
/// by direct 2-D Simpson quadrature after substituting `x = p², y = q²`
/// (which removes the square-root singularity). Independent of the field
/// quadrature path.
fn field_mean_oracle(eps: f64, point: (f64, f64), a: f64, b: f64, k: f64) -> f64 {
    let wp = (point.0 / eps).sqrt();
    let wq = (point.1 / eps).sqrt();
    let n = 1200usize; // even
    let (hp, hq) = (wp / n as f64, wq / n as f64);
    let weight = |i: usize| -> f64 {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut acc = 0.0;
    for i in 0..=n {
        let p = i as f64 * hp;
        let mut inner = 0.0;
        for j in 0..=n {
            let q = j as f64 * hq;
            let z = p * p * q * q;
            inner += weight(j) * 4.0 * p * p * q * q * (-a * z).exp() * (b * z).cos();
        }
        acc += weight(i) * inner * hq / 3.0;
    }
    eps * k * acc * hp / 3.0
}

fn criterion_gaussianity(
    cfg: &ExperimentConfig,
    run: &MainFieldRun,
    rows: &mut Vec<ReportRow>,
) -> Criterion {
    let started = Instant::now();
    let first = rows.len();
    let corner = cfg.eval_points[0];
    let scale = (corner.0 * corner.1).sqrt();
    let samples: Vec<f64> = run.series(corner).iter().map(|v| v.re / scale).collect();

    // The criterion as stated: the marginal against the limit law N(0, 1).
    // At finite ε the field has a nonzero deterministic mean (~ ε·ln(1/ε)),
    // so this is expected to fail at the shipped ε; the two diagnostic rows
    // below pin the failure to exactly that mean.
    let report = normality_test(
        &samples,
        0.0,
        1.0,
        cfg.tolerances.ks_p_min,
        format!("gaussianity.ks_re@{corner:?}"),
    )
    .expect("positive variance");
    let literal_notes = report.notes.clone();
    rows.push(ReportRow::from_report(&report));

    // Diagnostic 1: the empirical mean equals the deterministic finite-ε
    // mean integral, computed by an independent quadrature.
    let theta_cfg = cfg.theta_config();
    let a = cfg.model.exponent_a(theta_cfg.theta());
    let b = cfg.model.exponent_b(theta_cfg.theta());
    let mean_oracle =
        field_mean_oracle(cfg.main_epsilon(), corner, a, b, theta_cfg.k()) / scale;
    let est = McEstimate::from_samples(&samples).expect("enough samples");
    rows.push(ReportRow::new(
        format!("gaussianity.diagnostic.mean_vs_oracle@{corner:?}"),
        mean_oracle,
        est.mean,
        est.stderr,
        cfg.tolerances.se_multiplier * est.stderr,
    ));

    // Diagnostic 2: centered samples are Gaussian to KS resolution.
    let centered: Vec<f64> = samples.iter().map(|x| x - est.mean).collect();
    let centered_report = normality_test(
        &centered,
        0.0,
        1.0,
        cfg.tolerances.ks_p_min,
        format!("gaussianity.diagnostic.ks_centered@{corner:?}"),
    )
    .expect("positive variance");
    let centered_notes = centered_report.notes.clone();
    rows.push(ReportRow::from_report(&centered_report));

    finish(
        "7",
        "KS normality of the real part at the corner point",
        rows,
        first,
        started,
        format!(
            "{literal_notes}; finite-ε mean: empirical {:.4}, oracle {:.4}; centered: {centered_notes}",
            est.mean, mean_oracle
        ),
    )
}

fn criterion_classic_mode(cfg: &ExperimentConfig, rows: &mut Vec<ReportRow>) -> Criterion {
    let started = Instant::now();
    let first = rows.len();
    let eps = cfg.main_epsilon();
    let rate = cfg.classic_rate;
    let draws = replicate_map(
        cfg.replicates,
        RngStream::for_replicate(cfg.seed, LANE_CLASSIC, 0),
        |s| classic_field_exact(rate, eps, &[(1.0, 1.0)], s).expect("valid parameters")[0],
    );
    let (var, se) = variance_with_se(&draws);
    rows.push(ReportRow::new(
        "classic.variance@(1,1)",
        1.0,
        var,
        se,
        cfg.tolerances.se_multiplier * se + cfg.tolerances.bias_allowance,
    ));
    let mean = McEstimate::from_samples(&draws).unwrap();
    finish(
        "8",
        format!("classic parity field variance at ε = {eps} (exact jump evaluation)"),
        rows,
        first,
        started,
        format!("mean {:.4} (finite-ε offset)", mean.mean),
    )
}

/// Independent oracle for `∫₀^t ∫₀^1 G_{t-s}(x,y)² dy ds`: direct 2-D
/// quadrature of pointwise Green evaluations, substituting `r = u²` to tame
/// the short-time ridge. No series identities are used.
pub fn white_noise_variance_quadrature(t: f64, x: f64, n_terms: usize) -> f64 {
    let nu = 256;
    let ny = 256;
    let du = t.sqrt() / nu as f64;
    let hy = 1.0 / ny as f64;
    let mut acc = 0.0;
    for iu in 0..nu {
        let u = (iu as f64 + 0.5) * du;
        let r = u * u;
        let mut inner = 0.0;
        for jy in 0..=ny {
            let y = jy as f64 * hy;
            let g = green_function(r, x, y, n_terms).expect("r > 0");
            let w = if jy == 0 || jy == ny {
                1.0
            } else if jy % 2 == 1 {
                4.0
            } else {
                2.0
            };
            inner += w * g * g;
        }
        acc += inner * (hy / 3.0) * 2.0 * u * du;
    }
    acc
}

fn criterion_spde_oracle(
    cfg: &ExperimentConfig,
    reference: &SpdeFamily,
    rows: &mut Vec<ReportRow>,
) -> Criterion {
    let started = Instant::now();
    let first = rows.len();
    let tol = &cfg.tolerances;

    for (p_idx, &(t, x)) in cfg.probe_points.iter().enumerate() {
        let series_target = white_noise_variance_series(t, x, cfg.heat.green_terms);
        let quad_target = white_noise_variance_quadrature(t, x, cfg.heat.green_terms);
        rows.push(ReportRow::new(
            format!("spde.variance_oracle_consistency@({t},{x})"),
            series_target,
            quad_target,
            0.0,
            1e-3 * series_target,
        ));

        let samples = &reference.per_probe[p_idx];
        let (var, se) = variance_with_se(samples);
        rows.push(ReportRow::new(
            format!("spde.white_variance@({t},{x})"),
            quad_target,
            var,
            se,
            tol.se_multiplier * se + tol.spde_variance_rel * quad_target,
        ));
        let mean = McEstimate::from_samples(samples).unwrap();
        rows.push(ReportRow::new(
            format!("spde.white_mean@({t},{x})"),
            0.0,
            mean.mean,
            mean.stderr,
            tol.se_multiplier * mean.stderr,
        ));
    }

    // Deterministic eigenfunction decay: u0 = sin(πx) evolves to
    // e^{-π²t}·sin(πx).
    let nx = cfg.heat.nx;
    let heat = HeatConfig {
        u0: (0..=nx).map(|j| (PI * j as f64 / nx as f64).sin()).collect(),
        drift: Drift::Zero,
        nt: cfg.heat.nt,
        nx,
        green_terms: cfg.heat.green_terms,
    };
    let solver = HeatSolver::new(heat).expect("validated heat config");
    let field = solver.solve_deterministic();
    let got = field.at(0.5, 0.5).expect("node-aligned");
    let want = (-PI * PI * 0.5).exp() * (PI * 0.5).sin();
    rows.push(ReportRow::new(
        "spde.eigenfunction_decay@(0.5,0.5)",
        want,
        got,
        0.0,
        0.01 * want.abs(),
    ));

    finish(
        "9",
        format!("white-noise variance oracle and heat semigroup (M = {})", cfg.replicates),
        rows,
        first,
        started,
        String::new(),
    )
}

fn criterion_kernel_laws(
    cfg: &ExperimentConfig,
    reference: &SpdeFamily,
    rows: &mut Vec<ReportRow>,
) -> Criterion {
    let started = Instant::now();
    let first = rows.len();
    let tol = &cfg.tolerances;
    let last_n = *cfg.kernel_orders.last().expect("validated non-empty");

    // Same-law sanity: two independent reference families must agree.
    let sanity = run_spde_white(cfg, LANE_SPDE_REF_SANITY);
    for (p_idx, &(t, x)) in cfg.probe_points.iter().enumerate() {
        let (d, n_eff) =
            ks_two_sample_statistic(&reference.per_probe[p_idx], &sanity.per_probe[p_idx]);
        let p = ks_p_value(d, n_eff);
        rows.push(ReportRow::new(
            format!("thm_heat.same_law_sanity.ks_p@({t},{x})"),
            1.0,
            p,
            0.0,
            1.0 - tol.ks_p_min,
        ));
    }

    let mut ratio_detail = String::new();
    for (n_idx, &n) in cfg.kernel_orders.iter().enumerate() {
        let family = run_spde_kernel(cfg, n, LANE_KERNEL + n_idx as u32);
        let gated = n == last_n;
        for (p_idx, &(t, x)) in cfg.probe_points.iter().enumerate() {
            let ref_samples = &reference.per_probe[p_idx];
            let approx_samples = &family.per_probe[p_idx];
            let var_ratio =
                unbiased_variance(approx_samples) / unbiased_variance(ref_samples);
            ratio_detail.push_str(&format!("n={n}: ratio {var_ratio:.3}; "));
            // The one-sided variance deficit follows ~const/√n (the heat
            // kernel's short-time singularity is smoothed at the kernel
            // decorrelation scale); report the rescaled deficit so the law
            // is auditable across the n-grid.
            rows.push(ReportRow::new(
                format!("thm_heat.diagnostic.deficit_sqrt_n.n{n}@({t},{x})"),
                0.0,
                (1.0 - var_ratio) * (n as f64).sqrt(),
                0.0,
                f64::INFINITY,
            ));
            let gate_tag = if gated { "" } else { "ungated." };
            rows.push(ReportRow::new(
                format!("thm_heat.{gate_tag}variance_ratio.n{n}@({t},{x})"),
                1.0,
                var_ratio,
                0.0,
                if gated {
                    tol.variance_ratio_band
                } else {
                    f64::INFINITY
                },
            ));
            if gated {
                let mean = McEstimate::from_samples(approx_samples).unwrap();
                rows.push(ReportRow::new(
                    format!("thm_heat.kernel_mean.n{n}@({t},{x})"),
                    0.0,
                    mean.mean,
                    mean.stderr,
                    tol.se_multiplier * mean.stderr,
                ));
                let (d, n_eff) = ks_two_sample_statistic(ref_samples, approx_samples);
                let p = ks_p_value(d, n_eff);
                rows.push(ReportRow::new(
                    format!("thm_heat.ks_p.n{n}@({t},{x})"),
                    1.0,
                    p,
                    0.0,
                    1.0 - tol.ks_p_min,
                ));
                let mean_diff =
                    (mean.mean - McEstimate::from_samples(ref_samples).unwrap().mean).abs();
                rows.push(ReportRow::new(
                    format!("thm_heat.mean_diff.n{n}@({t},{x})"),
                    0.0,
                    mean_diff,
                    0.0,
                    tol.mean_diff_tol,
                ));
            }
        }
    }

    // Extrapolation diagnostic: one more quadrupling of n on a doubled
    // solver grid (the ~const/√n deficit halves again and the ratio enters
    // the band; beyond the criterion's stated n-grid, hence diagnostic).
    let n_extra = last_n * 4;
    let extra = extrapolation_ratio(cfg, n_extra);
    for (p_idx, &(t, x)) in cfg.probe_points.iter().enumerate() {
        rows.push(ReportRow::new(
            format!("thm_heat.diagnostic.extrapolation_ratio.n{n_extra}@({t},{x})"),
            1.0,
            extra[p_idx],
            0.0,
            tol.variance_ratio_band,
        ));
        ratio_detail.push_str(&format!("n={n_extra} (extrapolation): ratio {:.3}; ", extra[p_idx]));
    }

    finish(
        "10",
        format!(
            "kernel-driven solutions approach the white-noise law (n in {:?}, gate at n = {last_n})",
            cfg.kernel_orders
        ),
        rows,
        first,
        started,
        ratio_detail,
    )
}

/// Kernel-driven variance ratio at `n` on a doubled solver grid, against the
/// truncated-series reference variance (exact for the spectrally sampled
/// white-noise law at that truncation).
fn extrapolation_ratio(cfg: &ExperimentConfig, n: u64) -> Vec<f64> {
    let nt = cfg.heat.nt * 2;
    let nx = cfg.heat.nx * 2;
    let terms = (cfg.heat.green_terms * 2).min(nx - 1);
    let solver = HeatSolver::new(HeatConfig::zero_u0(Drift::Zero, nt, nx, terms))
        .expect("doubled grid stays valid");
    let theta_cfg = cfg.theta_config();
    let component = if cfg.kernel_component == 1 {
        KernelComponent::Cos
    } else {
        KernelComponent::Sin
    };
    let side = (n as f64).sqrt();
    let grid = GridSpec::new(side, side, nt, nx).expect("valid kernel grid");
    let probes = cfg.probe_points.clone();
    let model = cfg.model.clone();
    let rows = replicate_map(
        cfg.replicates,
        RngStream::for_replicate(cfg.seed, LANE_KERNEL_EXTRA, 0),
        move |s| {
            let path = sample_sheet(&model, grid, s).expect("valid grid");
            let kernel = kac_stroock_kernels(&path, &theta_cfg, n).expect("kernel grid fits");
            let field = solver
                .solve_kernel_driven(&kernel, component)
                .expect("grids match");
            probes
                .iter()
                .map(|&(t, x)| field.at(t, x).expect("validated probes"))
                .collect::<Vec<f64>>()
        },
    );
    let per_probe = transpose(rows, cfg.probe_points.len());
    cfg.probe_points
        .iter()
        .zip(per_probe)
        .map(|(&(t, x), samples)| {
            unbiased_variance(&samples) / white_noise_variance_series(t, x, terms)
        })
        .collect()
}

fn criterion_determinism(cfg: &ExperimentConfig) -> Criterion {
    let started = Instant::now();
    let small = downscaled(cfg);
    let run_with = |threads: usize| -> Vec<ReportRow> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| collect_rows(&small).1)
    };
    let a = run_with(1);
    let b = run_with(2);
    let c = run_with(2);
    let identical = a.len() == b.len()
        && a.iter().zip(&b).all(|(x, y)| x.bits_equal(y))
        && b.iter().zip(&c).all(|(x, y)| x.bits_equal(y));
    Criterion {
        id: "11".into(),
        label: "bit-identical reports across runs and thread counts (downscaled config)".into(),
        pass: identical,
        detail: format!("{} rows compared", a.len()),
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Reduced copy of a config for the determinism check: same code paths,
/// desk-scale counts.
fn downscaled(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut small = cfg.clone();
    small.replicates = 48;
    small.ecf_replicates = 2000;
    small.scan_replicates = 24;
    small.gaussian_reference_replicates = 500;
    small.epsilons = vec![0.2, 0.1];
    small.kernel_orders = vec![16];
    small.heat = crate::config::HeatGrid {
        nt: 32,
        nx: 32,
        green_terms: 16,
    };
    small.quadrature.max_cells = 256;
    small
        .validate()
        .expect("downscaled config stays valid");
    small
}

fn finish(
    id: &str,
    label: impl Into<String>,
    rows: &[ReportRow],
    first: usize,
    started: Instant,
    extra_detail: String,
) -> Criterion {
    let slice = &rows[first..];
    let pass = slice.iter().all(|r| r.pass);
    let failing: Vec<&str> = slice
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.test.as_str())
        .collect();
    let mut detail = extra_detail;
    if !failing.is_empty() {
        if !detail.is_empty() {
            detail.push_str("; ");
        }
        detail.push_str(&format!("failing: {failing:?}"));
    }
    Criterion {
        id: id.into(),
        label: label.into(),
        pass,
        detail,
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn collect_rows(cfg: &ExperimentConfig) -> (Vec<Criterion>, Vec<ReportRow>) {
    let mut rows = Vec::new();
    let mut criteria = Vec::new();
    criteria.push(criterion_exact_identities(cfg, &mut rows));
    criteria.push(criterion_sampler_laws(cfg, &mut rows));
    criteria.push(criterion_quadrature_oracle(cfg, &mut rows));

    let run_started = Instant::now();
    let main_run = run_main_field(cfg);
    let run_seconds = run_started.elapsed().as_secs_f64();
    criteria.push(criterion_limit_moments(cfg, &main_run, run_seconds, &mut rows));
    criteria.push(criterion_increment_second_moment(cfg, &main_run, &mut rows));
    criteria.push(criterion_fourth_moment_scan(cfg, &mut rows));
    criteria.push(criterion_gaussianity(cfg, &main_run, &mut rows));
    criteria.push(criterion_classic_mode(cfg, &mut rows));

    let ref_started = Instant::now();
    let reference = run_spde_white(cfg, LANE_SPDE_REF);
    let ref_seconds = ref_started.elapsed().as_secs_f64();
    let mut spde = criterion_spde_oracle(cfg, &reference, &mut rows);
    spde.seconds += ref_seconds;
    criteria.push(spde);
    criteria.push(criterion_kernel_laws(cfg, &reference, &mut rows));
    (criteria, rows)
}

/// Runs the full verification suite, including the determinism criterion.
pub fn verify_all(cfg: &ExperimentConfig) -> VerifyReport {
    let started = Instant::now();
    let (mut criteria, rows) = collect_rows(cfg);
    criteria.push(criterion_determinism(cfg));
    let pass = criteria.iter().all(|c| c.pass);
    VerifyReport {
        criteria,
        rows,
        pass,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// The inner suite without the determinism criterion (used by the
/// determinism criterion itself and by tests that manage their own pools).
pub fn verify_once(cfg: &ExperimentConfig) -> VerifyReport {
    let started = Instant::now();
    let (criteria, rows) = collect_rows(cfg);
    let pass = criteria.iter().all(|c| c.pass);
    VerifyReport {
        criteria,
        rows,
        pass,
        seconds: started.elapsed().as_secs_f64(),
    }
}
