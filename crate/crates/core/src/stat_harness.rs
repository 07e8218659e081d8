//! Monte Carlo estimation and the statistical tests that check the testable
//! limit claims: second moments and covariances of the complex field, the
//! fourth-moment tightness bound, Gaussianity of marginals, and the
//! functional moment inequalities for the smooth kernels.
//!
//! Estimator policy: replicates are evaluated in parallel, one RNG stream per
//! replicate, collected in replicate order, and reduced sequentially with a
//! plain two-pass mean/variance. Results are therefore bit-identical for a
//! fixed seed regardless of thread count. Statistical tolerances are a
//! standard-error multiple plus an explicit discretization-bias allowance;
//! the limits come without rates, so the allowances are engineering choices
//! recorded in each report.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::sheet_sim::RngStream;

#[derive(Debug, Error)]
pub enum StatError {
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("variance must be positive, got {0}")]
    DegenerateVariance(f64),
    #[error("window ({s0}, {s1}) x ({x0}, {x1}) violates the doubling constraints 0 < lo < hi < 2·lo")]
    WindowViolation { s0: f64, s1: f64, x0: f64, x1: f64 },
    #[error("empty sample set")]
    EmptySampleSet,
}

/// Runs `f` once per replicate with its own derived stream, in parallel,
/// returning results in replicate order.
pub fn replicate_map<T, F>(m: u32, base: RngStream, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(RngStream) -> T + Sync,
{
    (0..m)
        .into_par_iter()
        .map(|r| f(RngStream::new(base.seed, base.stream_id + u64::from(r))))
        .collect()
}

/// Mean, unbiased sample variance, and standard error of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl McEstimate {
    /// Two-pass mean and unbiased variance; `stderr = sqrt(variance / n)`.
    pub fn from_samples(samples: &[f64]) -> Result<Self, StatError> {
        let n = samples.len();
        if n < 2 {
            return Err(StatError::TooFewSamples(n));
        }
        let nf = n as f64;
        let mean = samples.iter().sum::<f64>() / nf;
        let variance = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
        Ok(Self {
            mean,
            variance,
            stderr: (variance / nf).sqrt(),
            n_samples: n,
        })
    }

    /// Degenerate estimate for a single known statistic (e.g. a KS distance).
    pub fn point(value: f64, n_samples: usize) -> Self {
        Self {
            mean: value,
            variance: 0.0,
            stderr: 0.0,
            n_samples,
        }
    }
}

/// Unbiased mean/variance of `M` independent replicates of a scalar sampler.
pub fn mc_moments<F>(sampler: F, m: u32, base: RngStream) -> Result<McEstimate, StatError>
where
    F: Fn(RngStream) -> f64 + Sync,
{
    McEstimate::from_samples(&replicate_map(m, base, sampler))
}

/// One verdict of the verification suite; `pass` holds exactly when
/// `|estimate.mean - target| <= tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub name: String,
    pub target: f64,
    pub estimate: McEstimate,
    pub tolerance: f64,
    pub pass: bool,
    pub notes: String,
}

impl TestReport {
    pub fn evaluate(
        name: impl Into<String>,
        target: f64,
        estimate: McEstimate,
        tolerance: f64,
        notes: impl Into<String>,
    ) -> Self {
        let pass = (estimate.mean - target).abs() <= tolerance;
        Self {
            name: name.into(),
            target,
            estimate,
            tolerance,
            pass,
            notes: notes.into(),
        }
    }

    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "pass"
        } else {
            "fail"
        }
    }
}

// ---------------------------------------------------------------------------
// Error function and normal CDF
// ---------------------------------------------------------------------------

/// erf via its confluent series for small arguments and a continued fraction
/// for the tail; accurate to ~1e-14 over the whole line.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x <= 3.0 {
        // erf(x) = (2/√π)·e^{-x²}·Σ_{n>=0} x·(2x²)^n / (2n+1)!!
        // All terms are positive, so there is no cancellation.
        let x2 = 2.0 * x * x;
        let mut term = x;
        let mut sum = x;
        let mut n = 1.0;
        while term > 1e-18 * sum {
            term *= x2 / (2.0 * n + 1.0);
            sum += term;
            n += 1.0;
        }
        2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
    } else {
        1.0 - erfc_tail(x)
    }
}

pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else if x < 3.0 {
        // 1 - erf keeps full absolute accuracy; from x = 3 the continued
        // fraction is both fast and relatively accurate.
        1.0 - erf(x)
    } else {
        erfc_tail(x)
    }
}

/// Laplace continued fraction for erfc at x >= 3 (modified Lentz):
/// √π·e^{x²}·erfc(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))).
fn erfc_tail(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut c: f64 = 1.0 / tiny;
    let mut d: f64 = 1.0 / x;
    let mut h = d;
    for k in 1..200 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() * h / std::f64::consts::PI.sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

// ---------------------------------------------------------------------------
// Kolmogorov–Smirnov
// ---------------------------------------------------------------------------

/// One-sample KS distance of `samples` against the CDF `cdf`.
pub fn ks_statistic<F>(samples: &[f64], cdf: F) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("samples must not contain NaN"));
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Two-sample KS distance and the effective sample count `n1·n2/(n1+n2)`.
pub fn ks_two_sample_statistic(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|p, q| p.partial_cmp(q).expect("samples must not contain NaN"));
    xb.sort_by(|p, q| p.partial_cmp(q).expect("samples must not contain NaN"));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0_f64;
    while i < xa.len() && j < xb.len() {
        let (va, vb) = (xa[i], xb[j]);
        if va <= vb {
            i += 1;
        }
        if vb <= va {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    (d, na * nb / (na + nb))
}

/// Asymptotic KS p-value `Q(λ) = 2·Σ_{k>=1} (-1)^{k-1} e^{-2k²λ²}` with
/// `λ = √n_eff·d`, truncated at 100 terms and clamped to `[0, 1]`.
/// Below λ = 0.2 the tail probability is 1 to well past double precision
/// and the alternating series is outside its useful range.
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let lambda = n_eff.sqrt() * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100u32 {
        let kf = f64::from(k);
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        if k % 2 == 1 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS distance whose asymptotic p-value equals `p` at sample count `n_eff`
/// (bisection on the decreasing tail function).
pub fn ks_critical_distance(p: f64, n_eff: f64) -> f64 {
    let (mut lo, mut hi) = (1e-3, 8.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ks_p_value(mid / n_eff.sqrt(), n_eff) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) / n_eff.sqrt()
}

/// One-sample KS test of `samples` against `Normal(mu, var)`; passes when the
/// asymptotic p-value is at least `p_min`.
pub fn normality_test(
    samples: &[f64],
    mu: f64,
    var: f64,
    p_min: f64,
    name: impl Into<String>,
) -> Result<TestReport, StatError> {
    if !var.is_finite() || var <= 0.0 {
        return Err(StatError::DegenerateVariance(var));
    }
    if samples.len() < 2 {
        return Err(StatError::TooFewSamples(samples.len()));
    }
    let sd = var.sqrt();
    let d = ks_statistic(samples, |x| normal_cdf((x - mu) / sd));
    let n = samples.len() as f64;
    let p = ks_p_value(d, n);
    let d_crit = ks_critical_distance(p_min, n);
    Ok(TestReport::evaluate(
        name,
        0.0,
        McEstimate::point(d, samples.len()),
        d_crit,
        format!("KS distance vs Normal({mu}, {var}); p = {p:.4}, pass iff p >= {p_min}"),
    ))
}

// ---------------------------------------------------------------------------
// Covariance and moment tests
// ---------------------------------------------------------------------------

/// Sample covariance (unbiased) with a standard error computed from the
/// spread of the centered products.
pub fn covariance_estimate(xs: &[f64], ys: &[f64]) -> Result<McEstimate, StatError> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(StatError::TooFewSamples(n.min(ys.len())));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let cov = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (nf - 1.0);
    let spread = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| ((x - mx) * (y - my) - cov).powi(2))
        .sum::<f64>()
        / (nf - 1.0);
    Ok(McEstimate {
        mean: cov,
        variance: spread,
        stderr: (spread / nf).sqrt(),
        n_samples: n,
    })
}

/// Tolerance policy shared by the limit-moment tests: a standard-error
/// multiple plus an absolute allowance for finite-ε and quadrature bias.
#[derive(Debug, Clone, Copy)]
pub struct MomentTolerance {
    pub se_multiplier: f64,
    pub bias_allowance: f64,
}

impl MomentTolerance {
    pub fn of(&self, stderr: f64) -> f64 {
        self.se_multiplier * stderr + self.bias_allowance
    }
}

/// Compares the empirical covariances of the field at two points against the
/// Brownian-sheet limit `Cov = min(s,s')·min(t,t')` per component (and zero
/// across components). Returns the three reports (re-re, im-im, re-im).
#[allow(clippy::too_many_arguments)]
pub fn covariance_limit_test<F>(
    sampler: F,
    p1: (f64, f64),
    p2: (f64, f64),
    m: u32,
    base: RngStream,
    tol: MomentTolerance,
    cross_tolerance: f64,
    name: &str,
) -> Result<Vec<TestReport>, StatError>
where
    F: Fn(RngStream) -> (Complex64, Complex64) + Sync,
{
    let draws = replicate_map(m, base, sampler);
    let re1: Vec<f64> = draws.iter().map(|d| d.0.re).collect();
    let im1: Vec<f64> = draws.iter().map(|d| d.0.im).collect();
    let re2: Vec<f64> = draws.iter().map(|d| d.1.re).collect();
    let im2: Vec<f64> = draws.iter().map(|d| d.1.im).collect();

    let target = p1.0.min(p2.0) * p1.1.min(p2.1);
    let re_re = covariance_estimate(&re1, &re2)?;
    let im_im = covariance_estimate(&im1, &im2)?;
    let re_im = covariance_estimate(&re1, &im2)?;
    Ok(vec![
        TestReport::evaluate(
            format!("{name}.re_re"),
            target,
            re_re,
            tol.of(re_re.stderr),
            format!("Cov(Re X{p1:?}, Re X{p2:?}) vs min·min"),
        ),
        TestReport::evaluate(
            format!("{name}.im_im"),
            target,
            im_im,
            tol.of(im_im.stderr),
            format!("Cov(Im X{p1:?}, Im X{p2:?}) vs min·min"),
        ),
        TestReport::evaluate(
            format!("{name}.re_im"),
            0.0,
            re_im,
            cross_tolerance,
            "cross covariance of the limit components is zero",
        ),
    ])
}

/// Checks `E|Δ_{s,t} X(s',t')|²` against the limit `2(s'-s)(t'-t)` at a
/// relative tolerance.
pub fn increment_second_moment_test<F>(
    sampler: F,
    rect: (f64, f64, f64, f64),
    m: u32,
    base: RngStream,
    rel_tolerance: f64,
    name: &str,
) -> Result<TestReport, StatError>
where
    F: Fn(RngStream) -> Complex64 + Sync,
{
    let target = 2.0 * (rect.2 - rect.0) * (rect.3 - rect.1);
    let est = mc_moments(|s| sampler(s).norm_sqr(), m, base)?;
    Ok(TestReport::evaluate(
        name,
        target,
        est,
        rel_tolerance * target.abs(),
        format!("mean |Δ X|² over {rect:?}; tolerance {rel_tolerance} relative"),
    ))
}

/// One row of the fourth-moment ratio scan.
#[derive(Debug, Clone)]
pub struct ScanEntry {
    pub eps: f64,
    pub rect: (f64, f64, f64, f64),
    pub ratio: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    pub entries: Vec<ScanEntry>,
    pub max_ratio: f64,
    pub cap: f64,
    pub trend_ok: bool,
    pub pass: bool,
}

/// Scans `Ê|Δ X_ε|⁴ / ((s'-s)²(t'-t)²)` over an ε-grid and a rectangle list.
/// Passes when the maximum ratio stays under `cap` and the finest-ε value
/// shows no growth trend (at most twice the per-rectangle median).
pub fn fourth_moment_bound_scan<F>(
    sampler: F,
    eps_list: &[f64],
    rects: &[(f64, f64, f64, f64)],
    m: u32,
    base: RngStream,
    cap: f64,
) -> Result<ScanReport, StatError>
where
    F: Fn(f64, RngStream) -> Vec<Complex64> + Sync,
{
    let mut entries = Vec::new();
    for (e_idx, &eps) in eps_list.iter().enumerate() {
        let lane = RngStream::new(base.seed, base.stream_id + (e_idx as u64) * (1 << 24));
        let draws = replicate_map(m, lane, |s| sampler(eps, s));
        for (r_idx, &rect) in rects.iter().enumerate() {
            let denom = ((rect.2 - rect.0) * (rect.3 - rect.1)).powi(2);
            let samples: Vec<f64> = draws
                .iter()
                .map(|d| d[r_idx].norm_sqr().powi(2) / denom)
                .collect();
            let est = McEstimate::from_samples(&samples)?;
            entries.push(ScanEntry {
                eps,
                rect,
                ratio: est.mean,
                stderr: est.stderr,
            });
        }
    }

    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0_f64, f64::max);
    let mut trend_ok = true;
    for r_idx in 0..rects.len() {
        let mut ratios: Vec<f64> = entries
            .iter()
            .skip(r_idx)
            .step_by(rects.len())
            .map(|e| e.ratio)
            .collect();
        let last = *ratios.last().expect("at least one epsilon");
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = ratios[ratios.len() / 2];
        if last > 2.0 * median {
            trend_ok = false;
        }
    }
    let pass = max_ratio <= cap && trend_ok;
    Ok(ScanReport {
        entries,
        max_ratio,
        cap,
        trend_ok,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Functional moment inequality (smooth kernels)
// ---------------------------------------------------------------------------

/// Integration window subject to the doubling constraints
/// `0 < s0 < s1 < 2·s0` and `0 < x0 < x1 < 2·x0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublingWindow {
    pub s0: f64,
    pub s1: f64,
    pub x0: f64,
    pub x1: f64,
}

impl DoublingWindow {
    pub fn validate(&self) -> Result<(), StatError> {
        let ok = |lo: f64, hi: f64| lo > 0.0 && lo < hi && hi < 2.0 * lo;
        if ok(self.s0, self.s1) && ok(self.x0, self.x1) {
            Ok(())
        } else {
            Err(StatError::WindowViolation {
                s0: self.s0,
                s1: self.s1,
                x0: self.x0,
                x1: self.x1,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentOrder {
    Two,
    Four,
}

impl MomentOrder {
    pub fn exponent(self) -> i32 {
        match self {
            MomentOrder::Two => 2,
            MomentOrder::Four => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FunctionalMomentEntry {
    pub n: u64,
    pub moment: f64,
    pub stderr: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct FunctionalMomentReport {
    pub entries: Vec<FunctionalMomentEntry>,
    pub c_test: f64,
    pub cap: f64,
    pub pass: bool,
}

/// Estimates `E[(∬_W f·θ_n^i)^m]` over the kernel orders in `n_list` and
/// verifies boundedness against `C·(∬_W f²)^{m/2}`: the reported `C_test`
/// must stay under `cap` and the largest-n value must not exceed twice the
/// median (no growth in `n`).
#[allow(clippy::too_many_arguments)]
pub fn functional_moment_inequality_test<F>(
    integral_sampler: F,
    f_l2: f64,
    window: DoublingWindow,
    order: MomentOrder,
    n_list: &[u64],
    m: u32,
    base: RngStream,
    cap: f64,
) -> Result<FunctionalMomentReport, StatError>
where
    F: Fn(u64, RngStream) -> f64 + Sync,
{
    window.validate()?;
    let power = order.exponent();
    let bound = f_l2.powi(power / 2);
    let mut entries = Vec::new();
    for (n_idx, &n) in n_list.iter().enumerate() {
        let lane = RngStream::new(base.seed, base.stream_id + (n_idx as u64) * (1 << 24));
        let est = mc_moments(|s| integral_sampler(n, s).powi(power), m, lane)?;
        let ratio = if bound > 0.0 {
            est.mean / bound
        } else {
            // f ≡ 0: the moment itself must vanish.
            est.mean.abs()
        };
        entries.push(FunctionalMomentEntry {
            n,
            moment: est.mean,
            stderr: est.stderr,
            ratio,
        });
    }
    let c_test = entries.iter().map(|e| e.ratio).fold(0.0_f64, f64::max);
    let mut ratios: Vec<f64> = entries.iter().map(|e| e.ratio).collect();
    let last = *ratios.last().expect("n_list must not be empty");
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = ratios[ratios.len() / 2];
    let trend_ok = bound == 0.0 || last <= 2.0 * median.max(f64::MIN_POSITIVE);
    let pass = c_test <= cap && trend_ok;
    Ok(FunctionalMomentReport {
        entries,
        c_test,
        cap,
        pass,
    })
}
