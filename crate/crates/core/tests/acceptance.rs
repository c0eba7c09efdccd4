//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use ladder_core::analysis::{stationarity_test, tune_horizon, TestSettings};
use ladder_core::flux::{self, FluxCurve, ShockPair};
use ladder_core::kernels::{Kernel, TwoLaneRates};
use ladder_core::measures::{solve_f, MeasureSpec};
use ladder_core::rng::rng_from_seed;
use ladder_core::verify::{self, CheckResult};
use ladder_core::LaneGeometry;
use rand::Rng;

const SEED: u64 = 20_240_611;

type Outcome = ladder_core::Result<Vec<CheckResult>>;

fn check(name: &str, passed: bool, detail: impl Into<String>) -> CheckResult {
    CheckResult::new(name, passed, detail)
}

/// Lane-0 density on the F-curve, straight from the closed forms.
fn rho0_oracle(p: f64, q: f64, rho: f64) -> f64 {
    if p == q {
        rho / 2.0
    } else if p == 0.0 {
        rho.min(1.0)
    } else if q == 0.0 {
        (rho - 1.0).max(0.0)
    } else {
        let r = q / p;
        let disc = (r + 1.0).powi(2) + rho * (r - 1.0).powi(2) * (rho - 2.0);
        rho / 2.0 + (r + 1.0 - disc.sqrt()) / (2.0 * (r - 1.0))
    }
}

/// Lane-0 density on the F-curve by bisection on the residual.
fn rho0_bisect(p: f64, q: f64, rho: f64) -> f64 {
    let lo0 = (rho - 1.0).max(0.0);
    let hi0 = rho.min(1.0);
    let f = |a: f64| p * a * (1.0 - (rho - a)) - q * (rho - a) * (1.0 - a);
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn flux_oracle(g0: f64, g1: f64, p: f64, q: f64, rho: f64) -> f64 {
    let a = rho0_bisect(p, q, rho);
    let b = rho - a;
    g0 * a * (1.0 - a) + g1 * b * (1.0 - b)
}

fn criterion_1() -> Outcome {
    let r0 = flux::r0();
    let s = (-7.0 + 52f64.sqrt()).sqrt();
    let independent = (1.0 - 2.0 * s) / (1.0 + 2.0 * s);
    let res = flux::r0_residual(r0);
    Ok(vec![
        check("three decimals", format!("{r0:.3}") == "0.042", format!("r0 = {r0:.12}")),
        check("matches (1-2s)/(1+2s)", (r0 - independent).abs() < 1e-12, format!("{independent:.12}")),
        check("boundary residual", res.abs() < 1e-10, format!("{res:.3e}")),
    ])
}

fn criterion_2() -> Outcome {
    let mut rng = rng_from_seed(SEED);
    let mut pairs: Vec<(f64, f64)> = vec![(1.0, 1.0), (2.0, 0.0), (0.0, 3.0), (4.0, 1.0), (1.0, 1.0 + 1e-9)];
    while pairs.len() < 100 {
        pairs.push((rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0)));
    }
    let (mut f_worst, mut oracle_worst, mut sum_breaks, mut bisect_worst) = (0.0f64, 0.0f64, 0, 0.0f64);
    let mut oracle_ok = true;
    for &(p, q) in &pairs {
        for k in 0..1000 {
            let rho = 2.0 * k as f64 / 999.0;
            let (a, b) = solve_f(p, q, rho)?;
            if a + b != rho {
                sum_breaks += 1;
            }
            f_worst = f_worst.max((p * a * (1.0 - b) - q * b * (1.0 - a)).abs());
            let err = (a - rho0_oracle(p, q, rho)).abs();
            let r = q / p;
            let tol = if p != q && p * q != 0.0 {
                1e-12 * (1.0 + (r + 1.0) / (r - 1.0).abs())
            } else {
                1e-15
            };
            oracle_ok &= err <= tol;
            oracle_worst = oracle_worst.max(err / tol);
            bisect_worst = bisect_worst.max((a - rho0_bisect(p, q, rho)).abs());
        }
    }
    Ok(vec![
        check("F-equation to 1e-12", f_worst < 1e-12, format!("max residual {f_worst:.2e}")),
        check("rho0 + rho1 = rho exactly", sum_breaks == 0, format!("{sum_breaks} inexact sums")),
        check(
            "closed forms per case",
            oracle_ok,
            format!("worst error/tolerance {oracle_worst:.3}"),
        ),
        check("bisection agrees", bisect_worst < 1e-12, format!("{bisect_worst:.2e}")),
    ])
}

fn criterion_3() -> Outcome {
    let mut rng = rng_from_seed(SEED + 3);
    let grid: Vec<f64> = (0..=200).map(|k| k as f64 / 100.0).collect();
    let mut zero_ok = true;
    let (mut sym, mut hom, mut r0_err, mut r1_err, mut fd_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..40 {
        let g0 = rng.gen_range(-2.0..2.0);
        let g1 = rng.gen_range(-2.0..2.0);
        let r = rng.gen_range(0.01..5.0);
        let g = FluxCurve::new(g0, g1, r)?;
        zero_ok &= g.value(0.0)? == 0.0 && g.value(2.0)? == 0.0;
        let swapped = FluxCurve::new(g1, g0, r)?;
        let inverted = FluxCurve::new(g0, g1, 1.0 / r)?;
        for &rho in &grid {
            let a = g.value(2.0 - rho)?;
            sym = sym
                .max((a - swapped.value(rho)?).abs())
                .max((a - inverted.value(rho)?).abs());
            let s = g0 + g1;
            if s.abs() > 1e-3 {
                let red = FluxCurve::reduced(g0 / s, r)?;
                hom = hom.max((g.value(rho)? - s * red.value(rho)?).abs());
            }
        }
        let one_sided = FluxCurve::new(g0, g1, 0.0)?;
        let balanced = FluxCurve::new(g0, g1, 1.0)?;
        for &rho in &grid {
            let piecewise = if rho <= 1.0 {
                g1 * rho * (1.0 - rho)
            } else {
                g0 * (rho - 1.0) * (2.0 - rho)
            };
            r0_err = r0_err
                .max((one_sided.value_closed_form(rho)? - piecewise).abs())
                .max((one_sided.value(rho)? - piecewise).abs());
            let parabola = (g0 + g1) / 4.0 * rho * (2.0 - rho);
            r1_err = r1_err.max((balanced.value(rho)? - parabola).abs());
            r1_err = r1_err.max((g.value(rho)? - flux_oracle(g0, g1, 1.0, r, rho)).abs());
        }
        let h = 1e-4;
        for k in 1..40 {
            let rho = 0.05 * k as f64;
            let v = |x: f64| g.value(x).unwrap();
            let d = |x: f64| g.derivative(x, 1).unwrap();
            let d2 = |x: f64| g.derivative(x, 2).unwrap();
            let fd1 = (v(rho + h) - v(rho - h)) / (2.0 * h);
            let fd2 = (d(rho + h) - d(rho - h)) / (2.0 * h);
            let fd3 = (d2(rho + h) - d2(rho - h)) / (2.0 * h);
            for (order, fd) in [(1, fd1), (2, fd2), (3, fd3)] {
                let exact = g.derivative(rho, order)?;
                fd_err = fd_err.max((exact - fd).abs() / (1.0 + exact.abs()));
            }
        }
    }
    Ok(vec![
        check("G(0) = G(2) = 0 exactly", zero_ok, ""),
        check("symmetry to 1e-12", sym < 1e-12, format!("{sym:.2e}")),
        check("homogeneity to 1e-12", hom < 1e-12, format!("{hom:.2e}")),
        check("r = 0 piecewise form to 1e-10", r0_err < 1e-10, format!("{r0_err:.2e}")),
        check("r = 1 parabola and F-curve composition to 1e-10", r1_err < 1e-10, format!("{r1_err:.2e}")),
        check("derivatives vs central differences to 1e-6", fd_err < 1e-6, format!("{fd_err:.2e}")),
    ])
}

fn criterion_4() -> Outcome {
    let mut out = Vec::new();
    let cases: [(f64, Vec<ShockPair>); 3] = [
        (0.5, vec![ShockPair::new(0.5, 1.5)]),
        (0.03, vec![]),
        (
            0.0,
            vec![ShockPair::new(1.5, 0.5), ShockPair::new(0.0, 1.0), ShockPair::new(1.0, 2.0)],
        ),
    ];
    for (r, expected) in cases {
        let rates = TwoLaneRates::new(0.5, 0.0, 0.5, 0.0, 1.0, r)?;
        let got = flux::classify_r0(&rates)?.shocks;
        let same = got.len() == expected.len()
            && expected.iter().all(|e| got.iter().any(|s| s.approx_eq(e, 1e-9)));
        out.push(check(&format!("d = 1/2, r = {r}"), same, format!("{got:?}")));
    }
    let flip = verify::z_flip_point(0.5, 0.01, 0.2)?;
    out.push(check(
        "Z membership flips at r0",
        (flip - flux::r0()).abs() < 1e-3,
        format!("flip at {flip:.6}, r0 = {:.6}", flux::r0()),
    ));
    Ok(out)
}

fn criterion_5() -> Outcome {
    verify::reversibility_checks(50)
}

fn criterion_6() -> Outcome {
    let mut rng = rng_from_seed(SEED + 6);
    let g = LaneGeometry::two_lane_ring(256)?;
    let mut out = Vec::new();
    for k in 0..5u64 {
        let rates = verify::random_normalized_rates(&mut rng)?;
        let kernel = Kernel::TwoLane(rates);
        let seed = SEED + 100 * (k + 1);
        let control = MeasureSpec::TwoRateBernoulli { rho0: 0.5, rho1: 0.5 };
        let horizon = tune_horizon(0.5, 64.0, |t| {
            Ok(!stationarity_test(&control, &kernel, &g, &TestSettings::new(t, 200, seed))?.passed)
        })?;
        out.push(check(
            &format!("{rates}: F-violating control fails"),
            horizon.is_some(),
            format!("tuned T = {horizon:?}"),
        ));
        let t = horizon.unwrap_or(64.0).max(verify::MIN_STATIONARITY_HORIZON);
        let (p, q) = (rates.p(), rates.q());
        for (j, rho) in [0.5, 1.0, 1.5].into_iter().enumerate() {
            let settings = TestSettings::new(t, 200, seed + 1 + j as u64);
            let spec = MeasureSpec::BernoulliTotal { rho, pq: Some([p, q]) };
            let rep = stationarity_test(&spec, &kernel, &g, &settings)?;
            let worst = rep.comparisons.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
            out.push(check(
                &format!("{rates}, rho = {rho}: stationary"),
                rep.passed,
                format!("max |z| {worst:.2} < {:.2}", rep.critical_z),
            ));
            let a = rho0_bisect(p, q, rho);
            for (lane, target) in [(0, a), (1, rho - a)] {
                let e = rep.lane_density[lane];
                out.push(check(
                    &format!("{rates}, rho = {rho}: lane {lane} density"),
                    e.within(target, 3.0),
                    format!("z = {:.2}", e.z_score(target)),
                ));
            }
            let target = flux_oracle(rates.gamma(0), rates.gamma(1), p, q, rho);
            let cur = rep.current.expect("ring");
            out.push(check(
                &format!("{rates}, rho = {rho}: current"),
                cur.within(target, 3.0),
                format!("{:.5} vs {target:.5}, z = {:.2}", cur.mean, cur.z_score(target)),
            ));
        }
    }
    Ok(out)
}

fn criterion_7() -> Outcome {
    verify::blocking_invariance(30, &TestSettings::new(20.0, 200, SEED + 7))
}

fn criterion_8() -> Outcome {
    verify::tasep_absorption(6, 200, 400.0, SEED + 8)
}

fn criterion_9() -> Outcome {
    let mut out = verify::coupling_runs(1000, SEED + 9)?;
    out.extend(verify::pair_mixture(3.0, 1.0, 10_000, SEED + 90)?);
    Ok(out)
}

fn criterion_10() -> Outcome {
    let mut out = verify::multilane_checks(&TestSettings::new(10.0, 200, SEED + 10))?;
    let target = (3.0 * 0.7) * 0.4 * 0.6;
    let lib = flux::multilane_flux(
        &ladder_core::MultiLaneRates::homogeneous(3, 1.0, 0.3, vec![0.0, 0.8, 0.4])?,
        1.2,
    )?;
    out.push(check(
        "multilane flux formula",
        (lib - target).abs() < 1e-14,
        format!("{lib} vs {target}"),
    ));
    Ok(out)
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "r0 reproduction", criterion_1),
        (2, "F-curve bijection", criterion_2),
        (3, "flux identities", criterion_3),
        (4, "shock classifier", criterion_4),
        (5, "detailed balance", criterion_5),
        (6, "Bernoulli stationarity", criterion_6),
        (7, "blocking-measure stationarity", criterion_7),
        (8, "totally asymmetric absorption", criterion_8),
        (9, "coupling", criterion_9),
        (10, "multilane torus", criterion_10),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, title, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (passed, lines) = match run() {
            Ok(checks) => {
                let passed = checks.iter().all(|c| c.passed);
                let lines: Vec<String> = checks
                    .iter()
                    .map(|c| {
                        let tag = if c.passed { "ok  " } else { "FAIL" };
                        format!("    {tag} {}: {}", c.name, c.detail)
                    })
                    .collect();
                (passed, lines)
            }
            Err(e) => (false, vec![format!("    error: {e}")]),
        };
        let verdict = if passed { "PASS" } else { "FAIL" };
        println!(
            "{verdict} criterion {n}: {title} ({:.1} s)",
            start.elapsed().as_secs_f64()
        );
        for l in lines {
            println!("{l}");
        }
        if !passed {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
