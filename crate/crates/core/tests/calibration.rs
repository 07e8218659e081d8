//! Resolution and runtime calibration probes for the field quadrature.
//! Ignored by default; run explicitly when retuning grid defaults:
//!
//! ```text
//! cargo test -p levysheet --test calibration -- --ignored --nocapture
//! ```

use std::time::Instant;

use levysheet::field_approx::{classic_field_exact, sample_approx_field};
use levysheet::sheet_sim::GridSpec;
use levysheet::stat_harness::{replicate_map, McEstimate};
use levysheet::{ExponentModel, RngStream, ThetaConfig};

#[test]
#[ignore]
fn variance_bias_vs_resolution() {
    let model = ExponentModel::Brownian {
        sigma: 1.0,
        drift: 0.0,
    };
    let cfg = ThetaConfig::new(1.0, model.clone()).unwrap();
    let eps = 0.02;
    let w = 1.0 / eps;
    let m = 400u32;

    for cells in [768usize, 1024, 1536, 2048, 2560] {
        let grid = GridSpec::new(w, w, cells, cells).unwrap();
        let started = Instant::now();
        let draws = replicate_map(m, RngStream::new(4242, 0), |s| {
            sample_approx_field(
                Some(&model),
                cfg.theta(),
                cfg.k(),
                eps,
                grid,
                &[(1.0, 1.0)],
                s,
            )
            .unwrap()
            .value(0)
        });
        let secs = started.elapsed().as_secs_f64();
        let re: Vec<f64> = draws.iter().map(|v| v.re).collect();
        let im: Vec<f64> = draws.iter().map(|v| v.im).collect();
        let var_re = McEstimate::from_samples(&re).unwrap().variance;
        let var_im = McEstimate::from_samples(&im).unwrap().variance;
        println!(
            "cells {cells:>5}: var_re {var_re:.4} var_im {var_im:.4} \
             ({:.3} s/replicate, {:.1} s total)",
            secs / f64::from(m),
            secs
        );
    }
}

#[test]
#[ignore]
fn classic_exact_variance_and_speed() {
    let eps = 0.02;
    let m = 2000u32;
    let started = Instant::now();
    let draws = replicate_map(m, RngStream::new(777, 0), |s| {
        classic_field_exact(1.0, eps, &[(1.0, 1.0)], s).unwrap()[0]
    });
    let secs = started.elapsed().as_secs_f64();
    let est = McEstimate::from_samples(&draws).unwrap();
    println!(
        "classic exact: mean {:.4} var {:.4} stderr(var) ~{:.4} ({:.2} s for {m})",
        est.mean,
        est.variance,
        est.variance * (2.0 / f64::from(m)).sqrt(),
        secs
    );
}

#[test]
#[ignore]
fn main_epsilon_law_probe() {
    let model = ExponentModel::Brownian {
        sigma: 1.0,
        drift: 0.0,
    };
    let cfg = ThetaConfig::new(1.0, model.clone()).unwrap();
    let eps = 0.02;
    let w = 1.0 / eps;
    let m = 2000u32;
    let cells = 1024usize;
    let grid = GridSpec::new(w, w, cells, cells).unwrap();
    let pts = [
        (1.0, 1.0),
        (0.5, 1.0),
        (1.0, 0.5),
        (0.25, 0.25),
        (0.75, 0.25),
        (0.25, 0.75),
        (0.75, 0.75),
    ];
    let started = Instant::now();
    let draws = replicate_map(m, RngStream::new(4242, 1 << 32), |s| {
        sample_approx_field(Some(&model), cfg.theta(), cfg.k(), eps, grid, &pts, s)
            .unwrap()
            .values
    });
    println!("run took {:.1} s", started.elapsed().as_secs_f64());

    let series = |idx: usize| -> (Vec<f64>, Vec<f64>) {
        (
            draws.iter().map(|v| v[idx].re).collect(),
            draws.iter().map(|v| v[idx].im).collect(),
        )
    };
    let (re, im) = series(0);
    let est_re = McEstimate::from_samples(&re).unwrap();
    let est_im = McEstimate::from_samples(&im).unwrap();
    println!(
        "X(1,1): mean_re {:.4} (se {:.4}) var_re {:.4}; mean_im {:.4} var_im {:.4}",
        est_re.mean, est_re.stderr, est_re.variance, est_im.mean, est_im.variance
    );
    let ks = levysheet::stat_harness::normality_test(&re, 0.0, 1.0, 0.01, "ks").unwrap();
    println!("KS vs N(0,1): D {:.4} {}", ks.estimate.mean, ks.notes);
    let centered: Vec<f64> = re.iter().map(|x| x - est_re.mean).collect();
    let ks_c =
        levysheet::stat_harness::normality_test(&centered, 0.0, 1.0, 0.01, "ks centered").unwrap();
    println!("KS centered: D {:.4} {}", ks_c.estimate.mean, ks_c.notes);

    // Lemma increment over (0.25,0.25)-(0.75,0.75).
    let inc: Vec<f64> = draws
        .iter()
        .map(|v| (v[6] - v[5] - v[4] + v[3]).norm_sqr())
        .collect();
    let est_inc = McEstimate::from_samples(&inc).unwrap();
    println!(
        "E|increment|^2 = {:.4} (se {:.4}), target 0.5",
        est_inc.mean, est_inc.stderr
    );

    // Covariance pair.
    let (re1, im1) = series(1);
    let (re2, im2) = series(2);
    let cov = levysheet::stat_harness::covariance_estimate(&re1, &re2).unwrap();
    println!("cov re-re @pair: {:.4} (se {:.4}), target 0.25", cov.mean, cov.stderr);
    let cov_ii = levysheet::stat_harness::covariance_estimate(&im1, &im2).unwrap();
    println!("cov im-im @pair: {:.4} (se {:.4})", cov_ii.mean, cov_ii.stderr);
    let cross = levysheet::stat_harness::covariance_estimate(&re, &im).unwrap();
    println!("cov re-im @(1,1): {:.4} (se {:.4})", cross.mean, cross.stderr);
}

#[test]
#[ignore]
fn kernel_variance_ratio_probe() {
    use levysheet::field_approx::{kac_stroock_kernels, KernelComponent};
    use levysheet::spde_solver::{Drift, HeatConfig, HeatSolver, white_noise_variance_series};
    use levysheet::sheet_sim::sample_sheet;

    let model = ExponentModel::Brownian { sigma: 1.0, drift: 0.0 };
    let cfg = ThetaConfig::new(1.0, model.clone()).unwrap();
    let m = 600u32;

    for (nt, nx, terms) in [(128usize, 128usize, 64usize), (256, 256, 128), (512, 512, 255)] {
        for n in [256u64, 1024] {
            let solver = HeatSolver::new(HeatConfig::zero_u0(Drift::Zero, nt, nx, terms)).unwrap();
            let side = (n as f64).sqrt();
            let grid = GridSpec::new(side, side, nt, nx).unwrap();
            let started = Instant::now();
            let vals = replicate_map(m, RngStream::new(999, n << 33), |s| {
                let path = sample_sheet(&model, grid, s).unwrap();
                let kernel = kac_stroock_kernels(&path, &cfg, n).unwrap();
                solver
                    .solve_kernel_driven(&kernel, KernelComponent::Cos)
                    .unwrap()
                    .at(0.5, 0.5)
                    .unwrap()
            });
            let est = McEstimate::from_samples(&vals).unwrap();
            let reference = white_noise_variance_series(0.5, 0.5, terms);
            println!(
                "grid {nt}x{nx} terms {terms} n {n}: ratio {:.3} (var {:.4} vs {:.4}; mean {:.4}; {:.1}s)",
                est.variance / reference,
                est.variance,
                reference,
                est.mean,
                started.elapsed().as_secs_f64()
            );
        }
    }
}
