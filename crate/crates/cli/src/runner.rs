//! Subcommand implementations: path dumps, field sampling CSV, the
//! verification suite, heat-equation runs, law comparison, and plot data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use levysheet::field_approx::{sample_approx_field, kac_stroock_kernels, KernelComponent};
use levysheet::sheet_sim::{sample_sheet, GridSpec, RngStream};
use levysheet::spde_solver::{compare_marginals, HeatConfig, HeatSolver, LawComparisonCriteria};
use levysheet::stat_harness::replicate_map;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::csvio::{atomic_write, csv_field, provenance_line};
use crate::verify::{
    verify_all, LANE_FIELD_CSV, LANE_PLOT, LANE_SHEET_DUMP, LANE_SPDE_RUN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SimulateSheet,
    ApproxField,
    VerifyConvergence,
    SpdeRun,
    SpdeCompare,
    EmitPlotData,
    DefaultConfig,
}

impl Command {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "simulate-sheet" => Command::SimulateSheet,
            "approx-field" => Command::ApproxField,
            "verify-convergence" => Command::VerifyConvergence,
            "spde-run" => Command::SpdeRun,
            "spde-compare" => Command::SpdeCompare,
            "emit-plot-data" => Command::EmitPlotData,
            "default-config" => Command::DefaultConfig,
            _ => return None,
        })
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error writing {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

/// A parsed invocation; `seed`/`out` override the config document.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config_path: Option<PathBuf>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn load_config(inv: &Invocation) -> Result<ExperimentConfig, RunError> {
    let path = inv.config_path.as_ref().ok_or_else(|| {
        RunError::Internal("this subcommand needs --config <path>".to_string())
    })?;
    let text = std::fs::read_to_string(path).map_err(|source| RunError::ReadConfig {
        path: path.clone(),
        source,
    })?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = inv.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &inv.out {
        cfg.output_dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn write_artifact(cfg: &ExperimentConfig, name: &str, contents: &[u8]) -> Result<PathBuf, RunError> {
    let path = Path::new(&cfg.output_dir).join(name);
    atomic_write(&path, contents).map_err(|source| RunError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Executes one invocation; returns the process exit code.
pub fn execute(inv: &Invocation) -> Result<i32, RunError> {
    if let Some(threads) = inv.threads {
        // Ignore the error when a pool already exists (tests call execute
        // repeatedly in one process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match inv.command {
        Command::DefaultConfig => {
            println!("{}", ExperimentConfig::default().to_json());
            Ok(0)
        }
        Command::SimulateSheet => simulate_sheet(&load_config(inv)?),
        Command::ApproxField => approx_field_csv(&load_config(inv)?),
        Command::VerifyConvergence => verify_convergence(&load_config(inv)?),
        Command::SpdeRun => spde_run(&load_config(inv)?),
        Command::SpdeCompare => spde_compare(&load_config(inv)?),
        Command::EmitPlotData => emit_plot_data(&load_config(inv)?),
    }
}

fn field_grid_for(cfg: &ExperimentConfig, eps: f64, cap: Option<usize>) -> GridSpec {
    let extent = cfg
        .eval_points
        .iter()
        .flat_map(|&(s, t)| [s, t])
        .fold(0.0_f64, f64::max)
        / eps;
    let mut cells = cfg
        .quadrature
        .cells(cfg.model.exponent_a(cfg.theta), extent);
    if let Some(cap) = cap {
        cells = cells.min(cap);
    }
    GridSpec::new(extent, extent, cells, cells).expect("valid grid")
}

fn simulate_sheet(cfg: &ExperimentConfig) -> Result<i32, RunError> {
    // Dense dumps are capped at the documented in-memory grid limit.
    const DENSE_CAP: usize = 4096;
    for (e_idx, &eps) in cfg.epsilons.iter().enumerate() {
        let grid = field_grid_for(cfg, eps, Some(DENSE_CAP));
        let stream = RngStream::for_replicate(cfg.seed, LANE_SHEET_DUMP, e_idx as u32);
        let path = sample_sheet(&cfg.model, grid, stream)
            .map_err(|e| RunError::Internal(e.to_string()))?;
        let mut buf = Vec::new();
        path.write_dump(cfg.model.tag(), &mut buf)
            .map_err(|e| RunError::Internal(e.to_string()))?;
        let file = write_artifact(cfg, &format!("sheet_eps{eps}.bin"), &buf)?;
        println!(
            "wrote {} ({} x {} cells over [0,{:.1}]²)",
            file.display(),
            grid.nx,
            grid.ny,
            grid.x_max
        );
    }
    Ok(0)
}

fn approx_field_csv(cfg: &ExperimentConfig) -> Result<i32, RunError> {
    let eps = cfg.main_epsilon();
    let grid = field_grid_for(cfg, eps, None);
    let theta_cfg = cfg.theta_config();
    let points = cfg.eval_points.clone();
    let model = cfg.model.clone();
    let draws = replicate_map(
        cfg.replicates,
        RngStream::for_replicate(cfg.seed, LANE_FIELD_CSV, 0),
        |s| {
            sample_approx_field(
                Some(&model),
                theta_cfg.theta(),
                theta_cfg.k(),
                eps,
                grid,
                &points,
                s,
            )
            .expect("validated configuration")
            .values
        },
    );
    let mut out = String::new();
    writeln!(out, "{}", provenance_line(cfg.seed, cfg.hash())).unwrap();
    writeln!(out, "replicate,s,t,re,im").unwrap();
    for (r, values) in draws.iter().enumerate() {
        for (p, v) in cfg.eval_points.iter().zip(values) {
            writeln!(out, "{r},{},{},{},{}", p.0, p.1, v.re, v.im).unwrap();
        }
    }
    let file = write_artifact(cfg, "field.csv", out.as_bytes())?;
    println!(
        "wrote {} ({} replicates x {} points at eps = {eps})",
        file.display(),
        cfg.replicates,
        cfg.eval_points.len()
    );
    Ok(0)
}

fn verify_convergence(cfg: &ExperimentConfig) -> Result<i32, RunError> {
    let report = verify_all(cfg);
    print!("{}", report.render_summary());
    let mut out = String::new();
    writeln!(out, "{}", provenance_line(cfg.seed, cfg.hash())).unwrap();
    writeln!(out, "test,target,estimate,stderr,tolerance,verdict").unwrap();
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&row.test),
            row.target,
            row.estimate,
            row.stderr,
            row.tolerance,
            row.verdict()
        )
        .unwrap();
    }
    let file = write_artifact(cfg, "report.csv", out.as_bytes())?;
    println!("wrote {}", file.display());
    Ok(if report.pass { 0 } else { 1 })
}

fn spde_run(cfg: &ExperimentConfig) -> Result<i32, RunError> {
    let heat = HeatConfig::zero_u0(cfg.drift, cfg.heat.nt, cfg.heat.nx, cfg.heat.green_terms);
    let solver = HeatSolver::new(heat).map_err(|e| RunError::Internal(e.to_string()))?;
    let probes = cfg.probe_points.clone();

    let mut out = String::new();
    writeln!(out, "{}", provenance_line(cfg.seed, cfg.hash())).unwrap();
    writeln!(out, "noise,n,replicate,t,x,value").unwrap();

    let white = replicate_map(
        cfg.replicates,
        RngStream::for_replicate(cfg.seed, LANE_SPDE_RUN, 0),
        |s| {
            let field = solver.solve_white_noise(s);
            probes
                .iter()
                .map(|&(t, x)| field.at(t, x).expect("validated probes"))
                .collect::<Vec<_>>()
        },
    );
    for (r, vals) in white.iter().enumerate() {
        for (&(t, x), v) in cfg.probe_points.iter().zip(vals) {
            writeln!(out, "white,0,{r},{t},{x},{v}").unwrap();
        }
    }

    let component = if cfg.kernel_component == 1 {
        KernelComponent::Cos
    } else {
        KernelComponent::Sin
    };
    let theta_cfg = cfg.theta_config();
    for (n_idx, &n) in cfg.kernel_orders.iter().enumerate() {
        let side = (n as f64).sqrt();
        let grid = GridSpec::new(side, side, cfg.heat.nt, cfg.heat.nx)
            .map_err(|e| RunError::Internal(e.to_string()))?;
        let model = cfg.model.clone();
        let kernel_draws = replicate_map(
            cfg.replicates,
            RngStream::for_replicate(cfg.seed, LANE_SPDE_RUN + 1 + n_idx as u32, 0),
            |s| {
                let path = sample_sheet(&model, grid, s).expect("valid grid");
                let kernel = kac_stroock_kernels(&path, &theta_cfg, n).expect("kernel fits");
                let field = solver
                    .solve_kernel_driven(&kernel, component)
                    .expect("grids match");
                probes
                    .iter()
                    .map(|&(t, x)| field.at(t, x).expect("validated probes"))
                    .collect::<Vec<_>>()
            },
        );
        for (r, vals) in kernel_draws.iter().enumerate() {
            for (&(t, x), v) in cfg.probe_points.iter().zip(vals) {
                writeln!(out, "kernel{},{n},{r},{t},{x},{v}", cfg.kernel_component).unwrap();
            }
        }
    }

    let file = write_artifact(cfg, "spde_marginals.csv", out.as_bytes())?;
    println!("wrote {}", file.display());
    Ok(0)
}

fn spde_compare(cfg: &ExperimentConfig) -> Result<i32, RunError> {
    let heat = HeatConfig::zero_u0(cfg.drift, cfg.heat.nt, cfg.heat.nx, cfg.heat.green_terms);
    let solver = HeatSolver::new(heat).map_err(|e| RunError::Internal(e.to_string()))?;
    let probes = cfg.probe_points.clone();
    let collect_probes = |rows: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); probes.len()];
        for row in rows {
            for (k, v) in row.into_iter().enumerate() {
                out[k].push(v);
            }
        }
        out
    };

    let reference = collect_probes(replicate_map(
        cfg.replicates,
        RngStream::for_replicate(cfg.seed, LANE_SPDE_RUN, 0),
        |s| {
            let field = solver.solve_white_noise(s);
            probes
                .iter()
                .map(|&(t, x)| field.at(t, x).expect("validated probes"))
                .collect::<Vec<_>>()
        },
    ));

    let criteria = LawComparisonCriteria {
        mean_diff_tol: cfg.tolerances.mean_diff_tol,
        variance_ratio_band: cfg.tolerances.variance_ratio_band,
        ks_p_min: cfg.tolerances.ks_p_min,
    };
    let component = if cfg.kernel_component == 1 {
        KernelComponent::Cos
    } else {
        KernelComponent::Sin
    };
    let theta_cfg = cfg.theta_config();

    let mut out = String::new();
    writeln!(out, "{}", provenance_line(cfg.seed, cfg.hash())).unwrap();
    writeln!(
        out,
        "probe_t,probe_x,n,mean_ref,mean_approx,var_ratio,ks_d,ks_p,verdict"
    )
    .unwrap();
    let mut all_pass = true;
    for (n_idx, &n) in cfg.kernel_orders.iter().enumerate() {
        let side = (n as f64).sqrt();
        let grid = GridSpec::new(side, side, cfg.heat.nt, cfg.heat.nx)
            .map_err(|e| RunError::Internal(e.to_string()))?;
        let model = cfg.model.clone();
        let approx = collect_probes(replicate_map(
            cfg.replicates,
            RngStream::for_replicate(cfg.seed, LANE_SPDE_RUN + 1 + n_idx as u32, 0),
            |s| {
                let path = sample_sheet(&model, grid, s).expect("valid grid");
                let kernel = kac_stroock_kernels(&path, &theta_cfg, n).expect("kernel fits");
                let field = solver
                    .solve_kernel_driven(&kernel, component)
                    .expect("grids match");
                probes
                    .iter()
                    .map(|&(t, x)| field.at(t, x).expect("validated probes"))
                    .collect::<Vec<_>>()
            },
        ));
        let report = compare_marginals(&cfg.probe_points, &reference, &approx, criteria)
            .map_err(|e| RunError::Internal(e.to_string()))?;
        all_pass &= report.pass;
        for p in &report.probes {
            writeln!(
                out,
                "{},{},{n},{},{},{},{},{},{}",
                p.probe.0,
                p.probe.1,
                p.reference.mean,
                p.approx.mean,
                p.variance_ratio,
                p.ks_distance,
                p.ks_p,
                if p.pass { "pass" } else { "fail" }
            )
            .unwrap();
        }
    }
    let file = write_artifact(cfg, "spde_compare.csv", out.as_bytes())?;
    println!(
        "wrote {} (all comparisons pass: {all_pass})",
        file.display()
    );
    Ok(0)
}

fn emit_plot_data(cfg: &ExperimentConfig) -> Result<i32, RunError> {
    let theta_cfg = cfg.theta_config();
    let mut out = String::new();
    writeln!(out, "{}", provenance_line(cfg.seed, cfg.hash())).unwrap();
    writeln!(out, "epsilon,replicate,s,t,re,im").unwrap();
    for (e_idx, &eps) in cfg.epsilons.iter().enumerate() {
        let grid = field_grid_for(cfg, eps, None);
        let points = cfg.eval_points.clone();
        let model = cfg.model.clone();
        let draws = replicate_map(
            cfg.scan_replicates,
            RngStream::for_replicate(cfg.seed, LANE_PLOT, 0)
                .substream_offset((e_idx as u64) << 24),
            |s| {
                sample_approx_field(
                    Some(&model),
                    theta_cfg.theta(),
                    theta_cfg.k(),
                    eps,
                    grid,
                    &points,
                    s,
                )
                .expect("validated configuration")
                .values
            },
        );
        for (r, values) in draws.iter().enumerate() {
            for (p, v) in cfg.eval_points.iter().zip(values) {
                writeln!(out, "{eps},{r},{},{},{},{}", p.0, p.1, v.re, v.im).unwrap();
            }
        }
    }
    let file = write_artifact(cfg, "plot_data.csv", out.as_bytes())?;
    println!("wrote {}", file.display());
    Ok(0)
}
