//! Experiment configuration: a JSON document with a mandatory seed, a driver
//! model, and defaulted experiment geometry, replicate counts, and tolerance
//! overrides. Parsing and validation are separate stages so a malformed
//! document reports a parse error while a well-formed one reports every
//! range or assumption violation at once.

use levysheet::levy_char::ThetaConfig;
use levysheet::spde_solver::{Drift, HeatConfig};
use levysheet::ExponentModel;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
}

/// Heat-equation grid settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatGrid {
    pub nt: usize,
    pub nx: usize,
    pub green_terms: usize,
}

impl Default for HeatGrid {
    fn default() -> Self {
        Self {
            nt: 128,
            nx: 128,
            green_terms: 64,
        }
    }
}

/// Sheet-grid resolution rule for the field quadrature: cells per window
/// side = clamp(kappa·a(θ)·w², min_cells, max_cells) for window extent `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureRule {
    pub kappa: f64,
    pub min_cells: usize,
    pub max_cells: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self {
            kappa: 1.7,
            min_cells: 64,
            max_cells: 8192,
        }
    }
}

impl QuadratureRule {
    pub fn cells(&self, decay_rate: f64, window_extent: f64) -> usize {
        levysheet::field_approx::quadrature_cells(
            decay_rate,
            window_extent,
            self.kappa,
            self.min_cells,
            self.max_cells,
        )
    }
}

/// Tolerance knobs of the verification suite. Statistical tolerances are
/// `se_multiplier` standard errors plus the stated bias allowance; the
/// limits come without convergence rates, so the allowances are explicit
/// engineering budgets, not claims.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub se_multiplier: f64,
    /// Absolute allowance on limit variances/covariances (finite-ε bias).
    pub bias_allowance: f64,
    /// Relative tolerance of the increment second-moment target.
    pub second_moment_rel: f64,
    /// Absolute bound for the Re/Im cross covariance at the tested points.
    pub cross_covariance: f64,
    /// Cap for the fourth-moment ratio scan.
    pub fourth_moment_cap: f64,
    /// Minimum KS p-value.
    pub ks_p_min: f64,
    /// Relative allowance of the white-noise variance oracle match.
    pub spde_variance_rel: f64,
    /// Half-width of the admissible variance-ratio band around 1.
    pub variance_ratio_band: f64,
    /// Absolute mean-difference tolerance in the law comparison.
    pub mean_diff_tol: f64,
    /// Relative tolerance of the forced-zero-driver quadrature oracle.
    pub quadrature_oracle_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            se_multiplier: 5.0,
            bias_allowance: 0.05,
            second_moment_rel: 0.15,
            cross_covariance: 0.1,
            fourth_moment_cap: 50.0,
            ks_p_min: 0.01,
            spde_variance_rel: 0.05,
            variance_ratio_band: 0.2,
            mean_diff_tol: 0.1,
            quadrature_oracle_rel: 1e-3,
        }
    }
}

/// Full experiment description. `epsilons` is ordered coarse to fine; the
/// last entry drives the main statistical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ExponentModel,
    pub theta: f64,
    pub epsilons: Vec<f64>,
    pub kernel_orders: Vec<u64>,
    pub kernel_component: u8,
    pub eval_points: Vec<(f64, f64)>,
    pub covariance_pair: ((f64, f64), (f64, f64)),
    pub lemma_rect: (f64, f64, f64, f64),
    pub scan_rects: Vec<(f64, f64, f64, f64)>,
    pub probe_points: Vec<(f64, f64)>,
    pub replicates: u32,
    pub ecf_replicates: u32,
    pub scan_replicates: u32,
    pub gaussian_reference_replicates: u32,
    pub classic_rate: f64,
    pub drift: Drift,
    pub heat: HeatGrid,
    pub quadrature: QuadratureRule,
    pub tolerances: Tolerances,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            model: ExponentModel::Brownian {
                sigma: 1.0,
                drift: 0.0,
            },
            theta: 1.0,
            epsilons: vec![0.2, 0.1, 0.05, 0.02],
            kernel_orders: vec![16, 64, 256],
            kernel_component: 1,
            eval_points: vec![(1.0, 1.0), (0.5, 1.0), (1.0, 0.5)],
            covariance_pair: ((0.5, 1.0), (1.0, 0.5)),
            lemma_rect: (0.25, 0.25, 0.75, 0.75),
            scan_rects: vec![
                (0.0, 0.0, 1.0, 1.0),
                (0.25, 0.25, 0.75, 0.75),
                (0.5, 0.25, 1.0, 0.75),
            ],
            probe_points: vec![(0.5, 0.5)],
            replicates: 2000,
            ecf_replicates: 100_000,
            scan_replicates: 500,
            gaussian_reference_replicates: 10_000,
            classic_rate: 1.0,
            drift: Drift::Zero,
            heat: HeatGrid::default(),
            quadrature: QuadratureRule::default(),
            tolerances: Tolerances::default(),
            output_dir: "out".to_string(),
        }
    }
}

/// Loose mirror of [`ExperimentConfig`] for two-stage loading: everything is
/// optional except the seed, so a well-formed document can be validated as a
/// whole and report every violation.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    model: Option<ExponentModel>,
    theta: Option<f64>,
    epsilons: Option<Vec<f64>>,
    kernel_orders: Option<Vec<u64>>,
    kernel_component: Option<u8>,
    eval_points: Option<Vec<(f64, f64)>>,
    covariance_pair: Option<((f64, f64), (f64, f64))>,
    lemma_rect: Option<(f64, f64, f64, f64)>,
    scan_rects: Option<Vec<(f64, f64, f64, f64)>>,
    probe_points: Option<Vec<(f64, f64)>>,
    replicates: Option<u32>,
    ecf_replicates: Option<u32>,
    scan_replicates: Option<u32>,
    gaussian_reference_replicates: Option<u32>,
    classic_rate: Option<f64>,
    drift: Option<Drift>,
    heat: Option<HeatGrid>,
    quadrature: Option<QuadratureRule>,
    tolerances: Option<Tolerances>,
    output_dir: Option<String>,
}

impl ExperimentConfig {
    /// Parses and validates a JSON config document.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_json::from_str(text)?;
        let defaults = Self::default();
        let mut violations = Vec::new();

        if raw.seed.is_none() {
            violations.push("seed: mandatory (runs must be reproducible; no wall-clock seeding)".into());
        }
        let cfg = Self {
            seed: raw.seed.unwrap_or(0),
            model: raw.model.unwrap_or(defaults.model),
            theta: raw.theta.unwrap_or(defaults.theta),
            epsilons: raw.epsilons.unwrap_or(defaults.epsilons),
            kernel_orders: raw.kernel_orders.unwrap_or(defaults.kernel_orders),
            kernel_component: raw.kernel_component.unwrap_or(defaults.kernel_component),
            eval_points: raw.eval_points.unwrap_or(defaults.eval_points),
            covariance_pair: raw.covariance_pair.unwrap_or(defaults.covariance_pair),
            lemma_rect: raw.lemma_rect.unwrap_or(defaults.lemma_rect),
            scan_rects: raw.scan_rects.unwrap_or(defaults.scan_rects),
            probe_points: raw.probe_points.unwrap_or(defaults.probe_points),
            replicates: raw.replicates.unwrap_or(defaults.replicates),
            ecf_replicates: raw.ecf_replicates.unwrap_or(defaults.ecf_replicates),
            scan_replicates: raw.scan_replicates.unwrap_or(defaults.scan_replicates),
            gaussian_reference_replicates: raw
                .gaussian_reference_replicates
                .unwrap_or(defaults.gaussian_reference_replicates),
            classic_rate: raw.classic_rate.unwrap_or(defaults.classic_rate),
            drift: raw.drift.unwrap_or(defaults.drift),
            heat: raw.heat.unwrap_or(defaults.heat),
            quadrature: raw.quadrature.unwrap_or(defaults.quadrature),
            tolerances: raw.tolerances.unwrap_or(defaults.tolerances),
            output_dir: raw.output_dir.unwrap_or(defaults.output_dir),
        };
        cfg.collect_violations(&mut violations);
        if violations.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Validation(violations))
        }
    }

    /// Validates a fully-populated config (used after programmatic edits).
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut violations = Vec::new();
        self.collect_violations(&mut violations);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(violations))
        }
    }

    fn collect_violations(&self, out: &mut Vec<String>) {
        if let Err(e) = self.model.validate() {
            out.push(format!("model: {e}"));
        } else if let Err(e) = ThetaConfig::new(self.theta, self.model.clone()) {
            out.push(format!("theta: {e}"));
        }

        if self.epsilons.is_empty() {
            out.push("epsilons: at least one value required".into());
        }
        for &e in &self.epsilons {
            if !(e.is_finite() && e > 0.0 && e <= 1.0) {
                out.push(format!("epsilons: {e} outside (0, 1]"));
            }
        }
        if self.kernel_orders.is_empty() {
            out.push("kernel_orders: at least one value required".into());
        }
        if self.kernel_component != 1 && self.kernel_component != 2 {
            out.push(format!(
                "kernel_component: {} (must be 1 = cos or 2 = sin)",
                self.kernel_component
            ));
        }
        if self.eval_points.is_empty() {
            out.push("eval_points: at least one point required".into());
        }
        for &(s, t) in self
            .eval_points
            .iter()
            .chain([self.covariance_pair.0, self.covariance_pair.1].iter())
        {
            if !(s.is_finite() && t.is_finite() && (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t))
            {
                out.push(format!("eval point ({s}, {t}) outside [0, 1]²"));
            }
        }
        for &(s0, t0, s1, t1) in self.scan_rects.iter().chain(std::iter::once(&self.lemma_rect)) {
            let ok = s0 >= 0.0 && t0 >= 0.0 && s1 > s0 && t1 > t0 && s1 <= 1.0 && t1 <= 1.0;
            if !ok {
                out.push(format!(
                    "rectangle ({s0}, {t0}, {s1}, {t1}) must be inside [0,1]² with positive sides"
                ));
            }
        }
        if self.probe_points.is_empty() {
            out.push("probe_points: at least one point required".into());
        }
        for &(t, x) in &self.probe_points {
            let on_grid = |v: f64, n: usize| (v * n as f64 - (v * n as f64).round()).abs() < 1e-9;
            if !((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&x)) {
                out.push(format!("probe ({t}, {x}) outside [0, 1]²"));
            } else if !(on_grid(t, self.heat.nt) && on_grid(x, self.heat.nx)) {
                out.push(format!(
                    "probe ({t}, {x}) is not a node of the {}x{} heat grid",
                    self.heat.nt, self.heat.nx
                ));
            }
        }
        for (name, m) in [
            ("replicates", self.replicates),
            ("ecf_replicates", self.ecf_replicates),
            ("scan_replicates", self.scan_replicates),
            ("gaussian_reference_replicates", self.gaussian_reference_replicates),
        ] {
            if m < 2 {
                out.push(format!("{name}: must be >= 2, got {m}"));
            }
        }
        if !(self.classic_rate.is_finite() && self.classic_rate > 0.0) {
            out.push(format!("classic_rate: must be > 0, got {}", self.classic_rate));
        }
        if let Err(e) = self.drift.validate() {
            out.push(format!("drift: {e}"));
        }
        if let Err(e) =
            HeatConfig::zero_u0(self.drift, self.heat.nt, self.heat.nx, self.heat.green_terms)
                .validate()
        {
            out.push(format!("heat: {e}"));
        }
        if !(self.quadrature.kappa.is_finite() && self.quadrature.kappa > 0.0) {
            out.push("quadrature.kappa: must be > 0".into());
        }
        if self.quadrature.min_cells < 4 || self.quadrature.max_cells < self.quadrature.min_cells {
            out.push("quadrature: need 4 <= min_cells <= max_cells".into());
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("se_multiplier", t.se_multiplier),
            ("bias_allowance", t.bias_allowance),
            ("second_moment_rel", t.second_moment_rel),
            ("cross_covariance", t.cross_covariance),
            ("fourth_moment_cap", t.fourth_moment_cap),
            ("spde_variance_rel", t.spde_variance_rel),
            ("variance_ratio_band", t.variance_ratio_band),
            ("mean_diff_tol", t.mean_diff_tol),
            ("quadrature_oracle_rel", t.quadrature_oracle_rel),
        ] {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("tolerances.{name}: must be > 0, got {v}"));
            }
        }
        if !(t.ks_p_min > 0.0 && t.ks_p_min < 1.0) {
            out.push(format!("tolerances.ks_p_min: must lie in (0, 1), got {}", t.ks_p_min));
        }
        if self.output_dir.is_empty() {
            out.push("output_dir: must not be empty".into());
        }
    }

    /// Main (finest) epsilon of the run.
    pub fn main_epsilon(&self) -> f64 {
        *self
            .epsilons
            .last()
            .expect("validated config has at least one epsilon")
    }

    /// The validated theta/model pairing.
    pub fn theta_config(&self) -> ThetaConfig {
        ThetaConfig::new(self.theta, self.model.clone()).expect("validated at load time")
    }

    /// Canonical JSON serialization (field order fixed by the struct).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// FNV-1a hash of the canonical serialization, for output headers.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_json().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }
}
