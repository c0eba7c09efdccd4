//! Named verification suites: groups of exact and Monte Carlo checks with a
//! pass/fail verdict each. Used by the `verify` subcommand and the
//! acceptance tests.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    absorbing_state_check, compare_measures, detailed_balance_check, rotation_invariance_test,
    rotation_invariance_test_with, single_lane_detailed_balance, stationarity_test, tune_horizon,
    Estimate, TestSettings,
};
use crate::dynamics::{CoupledConfig, Simulator};
use crate::error::{Error, Result};
use crate::flux::{self, FluxCurve, ShockPair};
use crate::kernels::{normalization, Kernel, MultiLaneRates, TwoLaneRates};
use crate::lattice::{Config, LaneGeometry, Site};
use crate::measures::{
    multilane_nu_rho, solve_f_rates, step_config, MeasureSpec, MultilaneVariant, PairKind,
    Parity, PartialKind, StepPos,
};
use crate::rng::{replica_rng, rng_from_seed};

/// Lower bound on the horizon of the Bernoulli stationarity runs. The tuned
/// horizon alone is often the first doubling step.
pub const MIN_STATIONARITY_HORIZON: f64 = 16.0;

/// Family-wise false-failure level of each Monte Carlo suite.
pub const SUITE_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Invariance,
    Reversibility,
    Coupling,
    Shocks,
    Multilane,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Invariance,
        Suite::Reversibility,
        Suite::Coupling,
        Suite::Shocks,
        Suite::Multilane,
    ];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Invariance => "invariance",
            Suite::Reversibility => "reversibility",
            Suite::Coupling => "coupling",
            Suite::Shocks => "shocks",
            Suite::Multilane => "multilane",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.to_string() == s)
            .ok_or_else(|| Error::Parse(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

/// Problem sizes: `Full` uses the acceptance parameters, `Quick` fewer
/// kernels and replicas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Quick,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    pub scale: Scale,
}

pub fn run_suite(suite: Suite, options: &SuiteOptions) -> Result<SuiteReport> {
    let full = options.scale == Scale::Full;
    let seed = options.seed;
    let checks = match suite {
        Suite::Reversibility => reversibility_checks(50)?,
        Suite::Shocks => shock_checks()?,
        Suite::Invariance => {
            let mut out = Vec::new();
            let mut rng = rng_from_seed(seed);
            let kernels = if full { 5 } else { 1 };
            let densities: &[f64] = if full { &[0.5, 1.0, 1.5] } else { &[1.0] };
            // Four checks per (kernel, density), two for the blocking measure.
            let checks = 4 * kernels * densities.len() + 2;
            for k in 0..kernels {
                let rates = random_normalized_rates(&mut rng)?;
                let kseed = seed.wrapping_add(1000 * (k as u64 + 1));
                let (control, horizon) = f_violation_control(&rates, 256, 200, kseed, 0.5, 64.0)?;
                out.push(control);
                let t = horizon.unwrap_or(64.0).max(MIN_STATIONARITY_HORIZON);
                for (j, &rho) in densities.iter().enumerate() {
                    let settings = TestSettings::new(t, 200, kseed + 1 + j as u64).family(SUITE_ALPHA, checks);
                    out.extend(bernoulli_invariance(&rates, rho, 256, &settings)?);
                }
            }
            out.extend(blocking_invariance(30, &TestSettings::new(20.0, 200, seed).family(SUITE_ALPHA, checks))?);
            out.extend(tasep_absorption(6, if full { 200 } else { 50 }, 400.0, seed)?);
            out
        }
        Suite::Coupling => {
            let mut out = coupling_runs(if full { 1000 } else { 200 }, seed)?;
            out.extend(pair_mixture(3.0, 1.0, if full { 10_000 } else { 2000 }, seed)?);
            out.push(vertical_chain(if full { 10_000 } else { 2000 }, 0.7, seed)?);
            out
        }
        Suite::Multilane => multilane_checks(&TestSettings::new(10.0, 200, seed).family(SUITE_ALPHA, 4))?,
    };
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport {
        suite,
        checks,
        passed,
    })
}

fn within_detail(e: &Estimate, target: f64) -> String {
    format!(
        "{:.6} +- {:.6} vs {:.6} (z = {:.2})",
        e.mean,
        e.stderr,
        target,
        e.z_score(target)
    )
}

/// A random normalized two-lane kernel with `0.1 p <= q <= 0.8 p`.
pub fn random_normalized_rates<R: Rng + ?Sized>(rng: &mut R) -> Result<TwoLaneRates> {
    let mut u = |a: f64, b: f64| rng.gen_range(a..b);
    let p = u(0.5, 2.0);
    let q = p * u(0.1, 0.8);
    let raw = TwoLaneRates::new(u(0.0, 1.5), u(0.0, 1.5), u(0.0, 1.5), u(0.0, 1.5), p, q)?;
    Ok(normalization(&raw)?.image)
}

/// Detailed-balance residuals of the reversible product families on a
/// closed window of `2 half_width + 1` columns.
pub fn reversibility_checks(half_width: usize) -> Result<Vec<CheckResult>> {
    const TOL: f64 = 1e-14;
    let g = LaneGeometry::two_lane_closed(half_width)?;
    let m = half_width as i64;
    let mut out = Vec::new();
    let mut push = |name: String, residual: f64| {
        out.push(CheckResult::new(name, residual < TOL, format!("max residual {residual:.3e}")));
    };
    let theta = Kernel::TwoLane(TwoLaneRates::new(2.0, 1.0, 1.0, 0.5, 3.0, 1.0)?);
    for c in [0.5, 1.0, 4.0] {
        let spec = MeasureSpec::ReversibleProfile {
            theta: 2.0,
            c,
            lambda: 3.0,
            center: 0,
        };
        push(format!("theta profile, c = {c}"), detailed_balance_check(&spec, &theta, &g)?);
    }
    for (d, l, c) in [(2.0, 1.0, 1.0), (0.5, 1.5, 3.0)] {
        push(
            format!("single-lane profile d = {d}, l = {l}, c = {c}"),
            single_lane_detailed_balance(d, l, c, 0, -m, m)?,
        );
    }
    for c in [0.0, 1.0, 2.5] {
        push(
            format!("totally asymmetric step profile, c = {c}"),
            single_lane_detailed_balance(1.0, 0.0, c, 0, -m, m)?,
        );
    }
    let partial = [
        (TwoLaneRates::new(2.0, 1.0, 3.0, 1.0, 1.0, 0.0)?, PartialKind::EmptyLane0, 3.0, 1.0),
        (TwoLaneRates::new(2.0, 1.0, 3.0, 1.0, 1.0, 0.0)?, PartialKind::FullLane1, 2.0, 1.0),
        (TwoLaneRates::new(2.0, 1.0, 1.0, 3.0, 1.0, 0.0)?, PartialKind::EmptyLane0Reflected, 1.0, 3.0),
        (TwoLaneRates::new(2.0, 0.0, 3.0, 0.0, 1.0, 0.0)?, PartialKind::EmptyLane0, 3.0, 0.0),
    ];
    for (rates, kind, d, l) in partial {
        let spec = MeasureSpec::PartialBlocking {
            kind,
            n: 2,
            d,
            l,
            c: 1.5,
        };
        push(
            format!("partial blocking {kind:?}, rates {rates}"),
            detailed_balance_check(&spec, &Kernel::TwoLane(rates), &g)?,
        );
    }
    let mismatched = Kernel::TwoLane(TwoLaneRates::new(2.0, 1.0, 3.0, 1.0, 3.0, 1.0)?);
    let spec = MeasureSpec::ReversibleProfile {
        theta: 2.0,
        c: 1.0,
        lambda: 3.0,
        center: 0,
    };
    let residual = detailed_balance_check(&spec, &mismatched, &g)?;
    out.push(CheckResult::new(
        "negative control: lane-mismatched theta is not balanced",
        residual > 1e-6,
        format!("max residual {residual:.3e}"),
    ));
    Ok(out)
}

/// Exact checks of the shock classifier and the constant `r0`.
pub fn shock_checks() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let r0 = flux::r0();
    out.push(CheckResult::new(
        "r0 to three decimals",
        format!("{r0:.3}") == "0.042",
        format!("r0 = {r0:.10}"),
    ));
    let res = flux::r0_residual(r0);
    out.push(CheckResult::new("r0 boundary residual", res.abs() < 1e-10, format!("{res:.3e}")));

    let cases: [(f64, Vec<ShockPair>); 3] = [
        (0.5, vec![ShockPair::new(0.5, 1.5)]),
        (0.03, vec![]),
        (
            0.0,
            vec![ShockPair::new(1.5, 0.5), ShockPair::new(0.0, 1.0), ShockPair::new(1.0, 2.0)],
        ),
    ];
    for (r, expected) in cases {
        let rep = FluxCurve::reduced(0.5, r)?.classify_r0();
        let same = rep.shocks.len() == expected.len()
            && expected
                .iter()
                .all(|e| rep.shocks.iter().any(|s| s.approx_eq(e, 1e-9)));
        out.push(CheckResult::new(
            format!("R0 at d = 1/2, r = {r}"),
            same,
            format!("{:?}", rep.shocks),
        ));
    }
    let flip = z_flip_point(0.5, 0.01, 0.2)?;
    out.push(CheckResult::new(
        "Z membership flips at r0",
        (flip - r0).abs() < 1e-3
            && flux::in_z(0.5, r0 - 1e-3)?
            && !flux::in_z(0.5, r0 + 1e-3)?,
        format!("flip at r = {flip:.6}"),
    ));
    let mut worst = 0usize;
    let mut in_b1 = false;
    for i in 0..=20 {
        for j in 1..=20 {
            let rep = FluxCurve::reduced(i as f64 / 20.0, j as f64 / 20.0)?.classify_r0();
            worst = worst.max(rep.shocks.len());
            in_b1 |= rep.shocks.iter().any(|s| s.in_b1());
        }
    }
    out.push(CheckResult::new(
        "q > 0: at most one amplitude-1 shock, never in B1",
        worst <= 1 && !in_b1,
        format!("largest R0 has {worst} elements on a 21x20 grid"),
    ));
    Ok(out)
}

/// The `r` in `(lo, hi)` where `in_z(d, r)` changes value, by bisection.
pub fn z_flip_point(d: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let at_lo = flux::in_z(d, lo)?;
    if flux::in_z(d, hi)? == at_lo {
        return Err(Error::InvalidArgument(format!(
            "Z membership does not change on [{lo}, {hi}]"
        )));
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if flux::in_z(d, mid)? == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Tunes the horizon by doubling until the product measure with lane
/// densities `(1/2, 1/2)`, which violates the F-relation when `p != q`, is
/// rejected by the stationarity test.
pub fn f_violation_control(
    rates: &TwoLaneRates,
    length: usize,
    replicas: usize,
    seed: u64,
    start: f64,
    max: f64,
) -> Result<(CheckResult, Option<f64>)> {
    let g = LaneGeometry::two_lane_ring(length)?;
    let kernel = Kernel::TwoLane(*rates);
    let control = MeasureSpec::TwoRateBernoulli { rho0: 0.5, rho1: 0.5 };
    let mut worst_z = 0.0;
    let horizon = tune_horizon(start, max, |t| {
        let rep = stationarity_test(&control, &kernel, &g, &TestSettings::new(t, replicas, seed))?;
        worst_z = rep.comparisons.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
        Ok(!rep.passed)
    })?;
    let detail = match horizon {
        Some(t) => format!("rejected at T = {t} (max |z| = {worst_z:.1})"),
        None => format!("not rejected up to T = {max}"),
    };
    Ok((
        CheckResult::new(format!("negative control fails for {rates}"), horizon.is_some(), detail),
        horizon,
    ))
}

/// Stationarity of `nu_rho` on a ring, per-lane densities against the
/// F-curve and the current against `G(rho)`.
pub fn bernoulli_invariance(
    rates: &TwoLaneRates,
    rho: f64,
    length: usize,
    settings: &TestSettings,
) -> Result<Vec<CheckResult>> {
    let g = LaneGeometry::two_lane_ring(length)?;
    let spec = MeasureSpec::BernoulliTotal {
        rho,
        pq: Some([rates.p(), rates.q()]),
    };
    let rep = stationarity_test(&spec, &Kernel::TwoLane(*rates), &g, settings)?;
    let worst = rep.comparisons.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    let tag = format!("rho = {rho}, {rates}, T = {}", settings.horizon);
    let mut out = vec![CheckResult::new(
        format!("nu_rho stationary ({tag})"),
        rep.passed,
        format!("max |z| = {worst:.2}, critical {:.2}", rep.critical_z),
    )];
    let (r0, r1) = solve_f_rates(rates, rho)?;
    for (lane, target) in [(0, r0), (1, r1)] {
        let e = &rep.lane_density[lane];
        out.push(CheckResult::new(
            format!("lane {lane} density ({tag})"),
            e.within(target, settings.sigmas),
            within_detail(e, target),
        ));
    }
    let g_rho = FluxCurve::from_rates(rates)?.value(rho)?;
    let current = rep.current.expect("ring geometry");
    out.push(CheckResult::new(
        format!("current matches G ({tag})"),
        current.within(g_rho, settings.sigmas),
        within_detail(&current, g_rho),
    ));
    Ok(out)
}

/// The conditioned blocking measure with `H2 = 0`, `theta = 2` on both
/// lanes: stationarity, exact height conservation, independence of `c`,
/// and rejection of a mis-specified profile.
pub fn blocking_invariance(half_width: usize, settings: &TestSettings) -> Result<Vec<CheckResult>> {
    let g = LaneGeometry::two_lane_closed(half_width)?;
    let rates = TwoLaneRates::new(2.0, 1.0, 1.0, 0.5, 2.0, 1.0)?;
    let kernel = Kernel::TwoLane(rates);
    let spec = |theta: f64, c: f64| MeasureSpec::ConditionedBlocking {
        kind: Parity::Even,
        n: 0,
        theta,
        lambda: 2.0,
        c,
    };
    let rep = stationarity_test(&spec(2.0, 1.0), &kernel, &g, settings)?;
    let worst = rep.comparisons.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    let mut out = vec![
        CheckResult::new(
            "conditioned blocking measure stationary",
            rep.passed,
            format!("max |z| = {worst:.2}, critical {:.2}", rep.critical_z),
        ),
        CheckResult::new(
            "H2 = 0 along every trajectory",
            rep.height_range == Some((0, 0)) && rep.count_changes == 0,
            format!("H2 range {:?}", rep.height_range),
        ),
    ];
    let cmp = compare_measures(
        &spec(2.0, 1.0),
        &spec(2.0, 2.0),
        &g,
        2000,
        settings.seed,
        settings.alpha,
    )?;
    let worst = cmp.comparisons.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    out.push(CheckResult::new(
        "c = 1 and c = 2 give the same conditioned law",
        cmp.passed,
        format!("max |z| = {worst:.2}, critical {:.2}", cmp.critical_z),
    ));
    let wrong = stationarity_test(&spec(1.2, 1.0), &kernel, &g, settings)?;
    let worst = wrong.comparisons.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    out.push(CheckResult::new(
        "negative control: theta = 1.2 profile is not stationary",
        !wrong.passed,
        format!("max |z| = {worst:.2}"),
    ));
    Ok(out)
}

fn step_of(config: &Config, lane: usize) -> Option<StepPos> {
    let g = config.geometry();
    let lane_bits: Vec<bool> = g.columns().map(|z| config.occupied(Site::new(z, lane))).collect();
    let first = lane_bits.iter().position(|&b| b);
    match first {
        None => Some(StepPos::PlusInf),
        Some(0) if lane_bits.iter().all(|&b| b) => Some(StepPos::MinusInf),
        Some(k) if lane_bits[k..].iter().all(|&b| b) => Some(StepPos::Finite(g.column_at(k) - 1)),
        Some(_) => None,
    }
}

/// Totally asymmetric degenerate case `l0 = l1 = q = 0 < p`: the step
/// configurations with `i >= j` are exactly the absorbing ones, and random
/// states end in one of them.
pub fn tasep_absorption(half_width: usize, states: usize, horizon: f64, seed: u64) -> Result<Vec<CheckResult>> {
    let g = LaneGeometry::two_lane_closed(half_width)?;
    let kernel = Kernel::TwoLane(TwoLaneRates::new(1.0, 0.0, 0.7, 0.0, 1.0, 0.0)?);
    let mut positions = vec![StepPos::MinusInf];
    positions.extend((g.min_column()..g.max_column()).map(StepPos::Finite));
    positions.push(StepPos::PlusInf);
    let (mut bad_absorbing, mut bad_enabled, mut total) = (0, 0, 0);
    for &i in &positions {
        for &j in &positions {
            let c = step_config(g, i, j)?;
            let absorbing = absorbing_state_check(&c, &kernel)?;
            total += 1;
            if i >= j && !absorbing {
                bad_absorbing += 1;
            }
            if i < j && absorbing {
                bad_enabled += 1;
            }
        }
    }
    let mut out = vec![
        CheckResult::new(
            "step configurations with i >= j are absorbing",
            bad_absorbing == 0,
            format!("{bad_absorbing} exceptions among {total} pairs"),
        ),
        CheckResult::new(
            "step configurations with i < j are not absorbing",
            bad_enabled == 0,
            format!("{bad_enabled} exceptions among {total} pairs"),
        ),
    ];
    let sim = Simulator::new(&kernel, &g)?;
    let results: Vec<bool> = (0..states as u64)
        .into_par_iter()
        .map(|k| -> Result<bool> {
            let mut rng = replica_rng(seed, k);
            let c = Config::from_fn(g, |_| rng.gen_bool(0.5));
            let fin = sim.run(&c, horizon, &[], &mut rng)?.final_config;
            let steps = (step_of(&fin, 0), step_of(&fin, 1));
            Ok(match steps {
                (Some(i), Some(j)) => i >= j && absorbing_state_check(&fin, &kernel)?,
                _ => false,
            })
        })
        .collect::<Result<_>>()?;
    let absorbed = results.iter().filter(|&&b| b).count();
    out.push(CheckResult::new(
        "random states absorb into a step configuration",
        absorbed == states,
        format!("{absorbed} of {states} absorbed by T = {horizon}"),
    ));
    Ok(out)
}

/// Basic-coupled runs with random kernels, half from ordered pairs.
pub fn coupling_runs(runs: usize, seed: u64) -> Result<Vec<CheckResult>> {
    struct Outcome {
        order_breaks: u64,
        snapshot_breaks: usize,
        increases: u64,
        bad_path: bool,
        coalescences: u64,
    }
    let outcomes: Vec<Outcome> = (0..runs as u64)
        .into_par_iter()
        .map(|k| -> Result<Outcome> {
            let mut rng = replica_rng(seed, k);
            let rate = |rng: &mut crate::rng::SimRng| {
                if rng.gen_bool(0.25) {
                    0.0
                } else {
                    rng.gen_range(0.1..2.0)
                }
            };
            let r: Vec<f64> = (0..6).map(|_| rate(&mut rng)).collect();
            let kernel = Kernel::TwoLane(TwoLaneRates::new(r[0], r[1], r[2], r[3], r[4], r[5])?);
            let g = if k % 2 == 0 {
                LaneGeometry::two_lane_ring(24)?
            } else {
                LaneGeometry::two_lane_closed(10)?
            };
            let density = rng.gen_range(0.1..0.9);
            let eta = Config::from_fn(g, |_| rng.gen_bool(density));
            let ordered = k % 4 < 2;
            let xi = if ordered {
                Config::from_fn(g, |s| eta.occupied(s) || rng.gen_bool(0.2))
            } else {
                Config::from_fn(g, |_| rng.gen_bool(density))
            };
            let cc = CoupledConfig::new(eta, xi)?;
            let times: Vec<f64> = (1..=10).map(|t| t as f64).collect();
            let tr = Simulator::new(&kernel, &g)?.run_coupled(&cc, 10.0, &times, &mut rng)?;
            let snapshot_breaks = if ordered {
                tr.snapshots.iter().filter(|(_, s)| !s.eta.le(&s.xi)).count()
            } else {
                0
            };
            let bad_path = tr
                .discrepancy_path
                .windows(2)
                .any(|w| w[1].1 >= w[0].1 || (w[0].1 - w[1].1) % 2 != 0);
            Ok(Outcome {
                order_breaks: tr.order_violations,
                snapshot_breaks,
                increases: tr.discrepancy_increases,
                bad_path,
                coalescences: tr.coalescences,
            })
        })
        .collect::<Result<_>>()?;
    let order: u64 = outcomes.iter().map(|o| o.order_breaks + o.snapshot_breaks as u64).sum();
    let inc: u64 = outcomes.iter().map(|o| o.increases).sum();
    let bad = outcomes.iter().filter(|o| o.bad_path).count();
    let coal: u64 = outcomes.iter().map(|o| o.coalescences).sum();
    Ok(vec![
        CheckResult::new(
            "attractiveness: ordered pairs stay ordered",
            order == 0,
            format!("{order} violations in {runs} runs"),
        ),
        CheckResult::new(
            "no discrepancy is ever created",
            inc == 0,
            format!("{inc} violations in {runs} runs"),
        ),
        CheckResult::new(
            "D only drops, by 2 per coalescence",
            bad == 0 && coal > 0,
            format!("{bad} bad paths, {coal} coalescences"),
        ),
    ])
}

/// The two-configuration measure with the extra particle at column 0:
/// weight `p/(p+q)` on lane 1, both for direct draws and after running the
/// totally asymmetric dynamics from the lane-0 configuration.
pub fn pair_mixture(p: f64, q: f64, replicas: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let g = LaneGeometry::two_lane_closed(5)?;
    let target = p / (p + q);
    let spec = MeasureSpec::TasepPairBlocking {
        kind: PairKind::Hat,
        z: 0,
        p,
        q,
    };
    let mut rng = rng_from_seed(seed);
    let mut hits = Vec::with_capacity(replicas);
    for _ in 0..replicas {
        let c = spec.sample(&g, &mut rng)?;
        hits.push(f64::from(u8::from(c.occupied(Site::new(0, 1)))));
    }
    let drawn = Estimate::from_samples(&hits);

    let kernel = Kernel::TwoLane(TwoLaneRates::new(1.0, 0.0, 0.5, 0.0, p, q)?);
    let sim = Simulator::new(&kernel, &g)?;
    let base = Config::from_fn(g, |s| s.column > 0);
    let mut lane0 = base.clone();
    lane0.set(Site::new(0, 0), true)?;
    let mut lane1 = base;
    lane1.set(Site::new(0, 1), true)?;
    let cc = CoupledConfig::new(lane0, lane1)?;
    let finals: Vec<(f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64)> {
            let tr = sim.run_coupled(&cc, 10.0, &[], &mut replica_rng(seed, k))?;
            let on = |c: &Config| f64::from(u8::from(c.occupied(Site::new(0, 1))));
            Ok((on(&tr.final_state.eta), on(&tr.final_state.xi)))
        })
        .collect::<Result<_>>()?;
    let eta = Estimate::from_samples(&finals.iter().map(|x| x.0).collect::<Vec<_>>());
    let xi = Estimate::from_samples(&finals.iter().map(|x| x.1).collect::<Vec<_>>());
    Ok(vec![
        CheckResult::new("pair mixture weight, direct draws", drawn.within(target, 3.0), within_detail(&drawn, target)),
        CheckResult::new(
            "pair mixture weight reached by the coupled dynamics",
            eta.within(target, 3.0) && xi.within(target, 3.0),
            format!("eta {}, xi {}", within_detail(&eta, target), within_detail(&xi, target)),
        ),
    ])
}

/// One particle, `p = 1` and no other rate: the fraction on lane 1 at `T`
/// is `1 - exp(-T)`.
pub fn vertical_chain(replicas: usize, horizon: f64, seed: u64) -> Result<CheckResult> {
    let g = LaneGeometry::two_lane_ring(4)?;
    let kernel = Kernel::TwoLane(TwoLaneRates::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0)?);
    let sim = Simulator::new(&kernel, &g)?;
    let mut c = Config::empty(g);
    c.set(Site::new(0, 0), true)?;
    let hits: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let fin = sim.run(&c, horizon, &[], &mut replica_rng(seed, k))?.final_config;
            Ok(f64::from(u8::from(fin.occupied(Site::new(0, 1)))))
        })
        .collect::<Result<_>>()?;
    let e = Estimate::from_samples(&hits);
    let target = 1.0 - (-horizon).exp();
    Ok(CheckResult::new("single-particle lane switch probability", e.within(target, 3.0), within_detail(&e, target)))
}

/// Three-lane torus with lane-independent horizontal rates.
pub fn multilane_checks(settings: &TestSettings) -> Result<Vec<CheckResult>> {
    let n = 3;
    let rates = MultiLaneRates::homogeneous(n, 1.0, 0.3, vec![0.0, 0.8, 0.4])?;
    let kernel = Kernel::MultiLane(rates.clone());
    let g = LaneGeometry::torus_ring(n, 128)?;
    let rho = 1.2;
    let spec = multilane_nu_rho(n, rho)?;
    let rep = stationarity_test(&spec, &kernel, &g, settings)?;
    let worst = rep.comparisons.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    let mut out = vec![CheckResult::new(
        "nu_rho stationary on the torus",
        rep.passed,
        format!("max |z| = {worst:.2}, critical {:.2}", rep.critical_z),
    )];
    let target = flux::multilane_flux(&rates, rho)?;
    let current = rep.current.expect("ring geometry");
    out.push(CheckResult::new(
        "multilane current matches (sum gamma)(rho/n)(1 - rho/n)",
        current.within(target, settings.sigmas),
        within_detail(&current, target),
    ));
    let rot = rotation_invariance_test(&spec, &kernel, &g, settings)?;
    out.push(CheckResult::new(
        "nu_rho rotation invariant",
        rot.passed,
        format!(
            "max |z| = {:.2}",
            rot.comparisons.iter().map(|c| c.z.abs()).fold(0.0, f64::max)
        ),
    ));
    let closed = LaneGeometry::torus_closed(n, 20)?;
    let blocking = MeasureSpec::MultilaneBlocking {
        i: 1,
        variant: MultilaneVariant::UniformSubset,
    };
    let rot = rotation_invariance_test(&blocking, &kernel, &closed, settings)?;
    out.push(CheckResult::new(
        "uniform-subset blocking measure rotation invariant",
        rot.passed,
        format!(
            "max |z| = {:.2}",
            rot.comparisons.iter().map(|c| c.z.abs()).fold(0.0, f64::max)
        ),
    ));
    let biased = Config::from_fn(g, |s| s.lane == 0);
    let control = TestSettings {
        horizon: 0.0,
        ..*settings
    };
    let rot = rotation_invariance_test_with(|_| Ok(biased.clone()), &kernel, &g, &control)?;
    out.push(CheckResult::new(
        "negative control: lane-biased start is not rotation invariant",
        !rot.passed,
        "all replicas start from lane 0 full".to_string(),
    ));
    Ok(out)
}
