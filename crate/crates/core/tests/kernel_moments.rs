//! Functional moment inequalities for the smooth kernels over doubling
//! windows, with the kernel integrals evaluated by the field quadrature.

use levysheet::field_approx::{kac_stroock_kernels, KernelComponent};
use levysheet::sheet_sim::{sample_sheet, GridSpec};
use levysheet::stat_harness::{
    functional_moment_inequality_test, DoublingWindow, MomentOrder, StatError,
};
use levysheet::{ExponentModel, RngStream, ThetaConfig};

const WINDOW: DoublingWindow = DoublingWindow {
    s0: 0.5,
    s1: 0.9,
    x0: 0.5,
    x1: 0.9,
};

fn kernel_integral(n: u64, stream: RngStream, f: impl Fn(f64, f64) -> f64) -> f64 {
    let model = ExponentModel::Brownian {
        sigma: 1.0,
        drift: 0.0,
    };
    let cfg = ThetaConfig::new(1.0, model.clone()).unwrap();
    let side = (n as f64).sqrt();
    // Resolve the kernel decorrelation scale ~1/(a·n·y) in kernel coords.
    let cells = levysheet::field_approx::quadrature_cells(0.5, side, 2.0, 64, 1024);
    let grid = GridSpec::new(side, side, cells, cells).unwrap();
    let path = sample_sheet(&model, grid, stream).unwrap();
    let kernel = kac_stroock_kernels(&path, &cfg, n).unwrap();
    kernel.weighted_integral(
        KernelComponent::Cos,
        WINDOW.s0,
        WINDOW.s1,
        WINDOW.x0,
        WINDOW.x1,
        f,
    )
}

fn window_f_l2(f: impl Fn(f64, f64) -> f64) -> f64 {
    // Midpoint quadrature of ∬ f² over the window.
    let n = 200;
    let (hs, hx) = (
        (WINDOW.s1 - WINDOW.s0) / n as f64,
        (WINDOW.x1 - WINDOW.x0) / n as f64,
    );
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = WINDOW.s0 + (i as f64 + 0.5) * hs;
            let x = WINDOW.x0 + (j as f64 + 0.5) * hx;
            acc += f(s, x) * f(s, x) * hs * hx;
        }
    }
    acc
}

#[test]
fn second_moment_approaches_the_isometry() {
    let f = |_: f64, _: f64| 1.0;
    let f_l2 = window_f_l2(f);
    let area = (WINDOW.s1 - WINDOW.s0) * (WINDOW.x1 - WINDOW.x0);
    assert!((f_l2 - area).abs() < 1e-12);

    let report = functional_moment_inequality_test(
        |n, s| kernel_integral(n, s, f),
        f_l2,
        WINDOW,
        MomentOrder::Two,
        &[16, 64],
        200,
        RngStream::for_replicate(2024, 11, 0),
        50.0,
    )
    .unwrap();
    assert!(report.pass, "{report:?}");
    // At the larger order the ratio should sit near the white-noise isometry
    // value 1 (loose band: desk-scale M and finite n).
    let last = report.entries.last().unwrap();
    assert!(
        last.ratio > 0.4 && last.ratio < 2.0,
        "ratio {} at n = {}",
        last.ratio,
        last.n
    );
}

#[test]
fn fourth_moment_stays_bounded_for_nonconstant_f() {
    let f = |s: f64, x: f64| (2.0 * s - x).sin() + 0.5;
    let f_l2 = window_f_l2(f);
    let report = functional_moment_inequality_test(
        |n, s| kernel_integral(n, s, f),
        f_l2,
        WINDOW,
        MomentOrder::Four,
        &[16, 64],
        200,
        RngStream::for_replicate(2024, 12, 0),
        50.0,
    )
    .unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn window_violation_is_reported() {
    let bad = DoublingWindow {
        s0: 0.2,
        s1: 0.6, // 3·s0
        x0: 0.5,
        x1: 0.9,
    };
    let err = functional_moment_inequality_test(
        |_, _| 0.0,
        1.0,
        bad,
        MomentOrder::Two,
        &[16],
        8,
        RngStream::new(0, 0),
        50.0,
    )
    .unwrap_err();
    assert!(matches!(err, StatError::WindowViolation { .. }));
}
