//! Invariant-measure families: construction, exact sampling, marginals and
//! density ratios.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioned;
use crate::error::{check_range, Error, Result};
use crate::kernels::TwoLaneRates;
use crate::lattice::{Config, HBoundary, LaneGeometry, Site, VTopology};
use crate::rng::rng_from_seed;

/// Lane densities `(rho0, rho1)` on the F-curve with `rho0 + rho1 = rho`.
///
/// The F-curve is `p rho0 (1 - rho1) = q rho1 (1 - rho0)`. The two
/// coordinates are returned so that they add up to `rho` exactly.
pub fn solve_f(p: f64, q: f64, rho: f64) -> Result<(f64, f64)> {
    if !(p >= 0.0 && q >= 0.0 && p + q > 0.0 && (p + q).is_finite()) {
        return Err(Error::DecoupledLanes);
    }
    check_range("rho", rho, 0.0, 2.0)?;
    if p == q {
        let half = rho / 2.0;
        return Ok((half, rho - half));
    }
    let phi = f_offset(p, q, rho);
    // The fuller lane first; the other one is then an exact difference.
    let big = (rho / 2.0 + phi.abs()).min(rho).min(1.0);
    let small = rho - big;
    Ok(if phi >= 0.0 { (big, small) } else { (small, big) })
}

/// [`solve_f`] for two-lane rates.
pub fn solve_f_rates(rates: &TwoLaneRates, rho: f64) -> Result<(f64, f64)> {
    solve_f(rates.p(), rates.q(), rho)
}

/// `phi = rho0 - rho / 2` on the F-curve, in a form free of cancellation.
///
/// With `c = (q - p)/(q + p)` this is `c rho (2 - rho) / (2 (1 + sqrt(psi)))`
/// where `psi = 4pq/(p+q)^2 + c^2 (rho - 1)^2`.
pub(crate) fn f_offset(p: f64, q: f64, rho: f64) -> f64 {
    let s = p + q;
    let c = (q - p) / s;
    let psi = 4.0 * (p / s) * (q / s) + c * c * (rho - 1.0) * (rho - 1.0);
    0.5 * c * rho * (2.0 - rho) / (1.0 + psi.sqrt())
}

/// `p rho0 (1 - rho1) - q rho1 (1 - rho0)`.
pub fn f_residual(p: f64, q: f64, rho0: f64, rho1: f64) -> f64 {
    p * rho0 * (1.0 - rho1) - q * rho1 * (1.0 - rho0)
}

/// `(rho, 1 - rho)` for a site with the given odds, both without cancellation.
pub fn density_from_odds(odds: f64) -> (f64, f64) {
    if odds.is_infinite() {
        (1.0, 0.0)
    } else {
        (odds / (1.0 + odds), 1.0 / (1.0 + odds))
    }
}

fn odds_power(base: f64, exponent: i64) -> f64 {
    if exponent == 0 {
        1.0
    } else {
        base.powi(exponent.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
    }
}

/// Reversible two-lane profile `c theta^z lambda^i / (1 + c theta^z lambda^i)`.
pub fn profile_density(theta: f64, lambda: f64, c: f64, site: Site) -> (f64, f64) {
    density_from_odds(c * odds_power(theta, site.column) * odds_power(lambda, site.lane as i64))
}

/// Reversible profile for two-lane rates with `theta = d0/l0 = d1/l1` and
/// `lambda = p/q`.
pub fn blocking_profile(rates: &TwoLaneRates, site: Site, c: f64) -> Result<f64> {
    let (theta, lambda) = reversible_parameters(rates)?;
    check_positive("c", c)?;
    Ok(profile_density(theta, lambda, c, site).0)
}

/// `(theta, p/q)` when the rates admit a reversible product profile.
pub fn reversible_parameters(rates: &TwoLaneRates) -> Result<(f64, f64)> {
    if rates.l(0) <= 0.0 || rates.l(1) <= 0.0 || rates.q() <= 0.0 || rates.p() <= 0.0 {
        return Err(Error::InvalidRates(
            "reversible profile needs l0, l1, p, q > 0".into(),
        ));
    }
    let t0 = rates.d(0) / rates.l(0);
    let t1 = rates.d(1) / rates.l(1);
    if (t0 - t1).abs() > 1e-12 * t0.max(t1) {
        return Err(Error::InvalidRates(format!(
            "d0/l0 = {t0} differs from d1/l1 = {t1}"
        )));
    }
    Ok((t0, rates.p() / rates.q()))
}

/// Single-lane reversible profile `c (d/l)^x / (1 + c (d/l)^x)`.
pub fn single_lane_profile(d: f64, l: f64, c: f64, x: i64) -> Result<(f64, f64)> {
    if l <= 0.0 {
        return Err(Error::InvalidRates("single-lane profile needs l > 0".into()));
    }
    Ok(density_from_odds(c * odds_power(d / l, x)))
}

/// Totally asymmetric profile `1{x > n} + c/(1+c) 1{x = n}`.
pub fn tasep_profile(n: i64, c: f64, x: i64) -> (f64, f64) {
    match x.cmp(&n) {
        std::cmp::Ordering::Greater => (1.0, 0.0),
        std::cmp::Ordering::Less => (0.0, 1.0),
        std::cmp::Ordering::Equal => density_from_odds(c),
    }
}

fn check_positive(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: x,
            min: 0.0,
            max: f64::INFINITY,
        })
    }
}

fn one() -> f64 {
    1.0
}

/// A step position `i` of `eta*_i = 1{z > i}`, possibly infinite.
///
/// `+inf` is the empty lane and `-inf` the full lane. In JSON a finite
/// position is an integer and the infinite ones are the strings `"+inf"` and
/// `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepPos {
    MinusInf,
    Finite(i64),
    PlusInf,
}

impl StepPos {
    /// `eta*_i(z)`.
    pub fn occupied(self, z: i64) -> bool {
        match self {
            StepPos::MinusInf => true,
            StepPos::PlusInf => false,
            StepPos::Finite(i) => z > i,
        }
    }
}

impl fmt::Display for StepPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepPos::MinusInf => f.write_str("-inf"),
            StepPos::PlusInf => f.write_str("+inf"),
            StepPos::Finite(i) => write!(f, "{i}"),
        }
    }
}

impl std::str::FromStr for StepPos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+inf" | "inf" => Ok(StepPos::PlusInf),
            "-inf" => Ok(StepPos::MinusInf),
            t => t
                .parse()
                .map(StepPos::Finite)
                .map_err(|_| Error::Parse(format!("invalid step position {s:?}"))),
        }
    }
}

impl Serialize for StepPos {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepPos::Finite(i) => s.serialize_i64(*i),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for StepPos {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(i) => Ok(StepPos::Finite(i)),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// `eta^{bot,i,j}`: lane 0 is `eta*_i`, lane 1 is `eta*_j`. No order is
/// imposed between `i` and `j`.
pub fn step_config(geometry: LaneGeometry, i: StepPos, j: StepPos) -> Result<Config> {
    if geometry.n_lanes() != 2 {
        return Err(Error::IncompatibleGeometry(
            "step configurations live on two lanes".into(),
        ));
    }
    Ok(Config::from_fn(geometry, |s| {
        if s.lane == 0 {
            i.occupied(s.column)
        } else {
            j.occupied(s.column)
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    /// `H2 = 2n`.
    Even,
    /// `H2 = 2n + 1`.
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialKind {
    /// Lane 0 empty, lane 1 a single-lane blocking measure.
    EmptyLane0,
    /// Lane 1 full, lane 0 a single-lane blocking measure.
    FullLane1,
    /// Lane 0 empty, lane 1 a left-moving blocking measure (full on the left).
    EmptyLane0Reflected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// The step `1{x(0) > z}`.
    Breve,
    /// The step plus one particle at column `z`, on lane 1 with probability
    /// `p/(p+q)`.
    Hat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MultilaneVariant {
    /// Product profile `c theta^z` on every lane conditioned on `H_n = i`.
    ConditionedProfile {
        theta: f64,
        #[serde(default = "one")]
        c: f64,
    },
    /// `1{z >= 0} + 1{z = -1, lane in A}` with `A` a uniform `i`-subset.
    UniformSubset,
}

/// One member of an invariant-measure family.
///
/// Every variant carries the parameters needed to sample it, so a spec can
/// be serialized and replayed without the kernel it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    /// Product measure with density `rho_i` on lane `i`.
    TwoRateBernoulli { rho0: f64, rho1: f64 },
    /// Product measure of total density `rho`. With `pq = [p, q]` the lane
    /// densities solve the F-relation; without it every site has `rho/n`.
    BernoulliTotal {
        rho: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pq: Option<[f64; 2]>,
    },
    /// Product measure with odds `c theta^(z - center) lambda^i`.
    ReversibleProfile {
        theta: f64,
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "one")]
        lambda: f64,
        #[serde(default)]
        center: i64,
    },
    /// Reversible profile conditioned on `H2 = 2n` (even) or `2n + 1` (odd).
    ConditionedBlocking {
        kind: Parity,
        n: i64,
        theta: f64,
        #[serde(default = "one")]
        lambda: f64,
        #[serde(default = "one")]
        c: f64,
    },
    /// One lane frozen, the other a single-lane blocking measure with rates
    /// `(d, l)` whose step sits at column `n`.
    PartialBlocking {
        kind: PartialKind,
        n: i64,
        d: f64,
        l: f64,
        #[serde(default = "one")]
        c: f64,
    },
    /// Dirac mass at `eta^{bot,i,j}`, `i >= j`.
    DiracStep { i: StepPos, j: StepPos },
    TasepPairBlocking { kind: PairKind, z: i64, p: f64, q: f64 },
    MultilaneBlocking { i: usize, variant: MultilaneVariant },
}

/// Homogeneous product measure with density `rho/n` on each of `n` lanes.
pub fn multilane_nu_rho(n: usize, rho: f64) -> Result<MeasureSpec> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2 lanes, got {n}")));
    }
    check_range("rho", rho, 0.0, n as f64)?;
    Ok(MeasureSpec::BernoulliTotal { rho, pq: None })
}

/// How conditioned families are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionedSampler {
    /// Draw the unconditioned product until the height matches.
    Rejection { budget: u64 },
    /// Sequential draw from the exact conditional law.
    Exact,
}

impl Default for ConditionedSampler {
    fn default() -> Self {
        ConditionedSampler::Rejection { budget: 1_000_000 }
    }
}

/// Law of a configuration on a window, reduced to what the samplers need.
enum WindowLaw {
    Product(Vec<(f64, f64)>),
    /// Product measure conditioned on the occupation count of `sites`.
    Conditioned {
        densities: Vec<(f64, f64)>,
        sites: Option<Vec<usize>>,
        target: usize,
        frozen: Config,
    },
    Dirac(Config),
    Mixture(Vec<(f64, Config)>),
    UniformSubset { n_lanes: usize, size: usize },
}

impl MeasureSpec {
    pub fn family(&self) -> &'static str {
        match self {
            MeasureSpec::TwoRateBernoulli { .. } => "two_rate_bernoulli",
            MeasureSpec::BernoulliTotal { .. } => "bernoulli_total",
            MeasureSpec::ReversibleProfile { .. } => "reversible_profile",
            MeasureSpec::ConditionedBlocking { .. } => "conditioned_blocking",
            MeasureSpec::PartialBlocking { .. } => "partial_blocking",
            MeasureSpec::DiracStep { .. } => "dirac_step",
            MeasureSpec::TasepPairBlocking { .. } => "tasep_pair_blocking",
            MeasureSpec::MultilaneBlocking { .. } => "multilane_blocking",
        }
    }

    /// Translation-invariant product families, realized on rings.
    pub fn is_translation_invariant(&self) -> bool {
        matches!(
            self,
            MeasureSpec::TwoRateBernoulli { .. } | MeasureSpec::BernoulliTotal { .. }
        )
    }

    pub fn is_product(&self) -> bool {
        self.is_translation_invariant() || matches!(self, MeasureSpec::ReversibleProfile { .. })
    }

    /// Checks parameter ranges and that the spec can live on `geometry`.
    pub fn check(&self, geometry: &LaneGeometry) -> Result<()> {
        let n = geometry.n_lanes();
        let two_lanes = || {
            if geometry.v_topology() == VTopology::TwoLane {
                Ok(())
            } else {
                Err(Error::IncompatibleGeometry(format!(
                    "{} needs the two-lane topology",
                    self.family()
                )))
            }
        };
        if self.is_translation_invariant() {
            if geometry.h_boundary() != HBoundary::Periodic {
                return Err(Error::IncompatibleGeometry(format!(
                    "{} is translation invariant and needs a periodic window",
                    self.family()
                )));
            }
        } else if geometry.h_boundary() != HBoundary::Closed {
            return Err(Error::IncompatibleGeometry(format!(
                "{} needs a closed window",
                self.family()
            )));
        }
        match *self {
            MeasureSpec::TwoRateBernoulli { rho0, rho1 } => {
                two_lanes()?;
                check_range("rho0", rho0, 0.0, 1.0)?;
                check_range("rho1", rho1, 0.0, 1.0)
            }
            MeasureSpec::BernoulliTotal { rho, pq } => {
                check_range("rho", rho, 0.0, n as f64)?;
                if let Some([p, q]) = pq {
                    two_lanes()?;
                    solve_f(p, q, rho).map(|_| ())
                } else {
                    Ok(())
                }
            }
            MeasureSpec::ReversibleProfile {
                theta, c, lambda, ..
            } => {
                check_positive("theta", theta)?;
                check_positive("c", c)?;
                check_positive("lambda", lambda)
            }
            MeasureSpec::ConditionedBlocking {
                theta, lambda, c, ..
            } => {
                two_lanes()?;
                check_positive("theta", theta)?;
                check_positive("c", c)?;
                check_positive("lambda", lambda)
            }
            MeasureSpec::PartialBlocking { d, l, c, .. } => {
                two_lanes()?;
                if !(d >= 0.0 && l >= 0.0 && d + l > 0.0 && (d + l).is_finite()) {
                    return Err(Error::InvalidRates(format!(
                        "partial blocking lane rates d = {d}, l = {l}"
                    )));
                }
                if c.is_finite() && c >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::OutOfRange {
                        name: "c",
                        value: c,
                        min: 0.0,
                        max: f64::INFINITY,
                    })
                }
            }
            MeasureSpec::DiracStep { i, j } => {
                two_lanes()?;
                if i < j {
                    return Err(Error::InvalidArgument(format!(
                        "DiracStep needs i >= j, got i = {i}, j = {j}"
                    )));
                }
                Ok(())
            }
            MeasureSpec::TasepPairBlocking { z, p, q, .. } => {
                two_lanes()?;
                geometry.column_index(z)?;
                if !(p >= 0.0 && q >= 0.0 && p + q > 0.0) {
                    return Err(Error::DecoupledLanes);
                }
                Ok(())
            }
            MeasureSpec::MultilaneBlocking { i, variant } => {
                if geometry.v_topology() != VTopology::Torus {
                    return Err(Error::IncompatibleGeometry(
                        "multilane blocking measures need the torus topology".into(),
                    ));
                }
                if i >= n {
                    return Err(Error::OutOfRange {
                        name: "i",
                        value: i as f64,
                        min: 0.0,
                        max: (n - 1) as f64,
                    });
                }
                match variant {
                    MultilaneVariant::ConditionedProfile { theta, c } => {
                        check_positive("theta", theta)?;
                        check_positive("c", c)
                    }
                    MultilaneVariant::UniformSubset => {
                        if geometry.min_column() > -1 {
                            Err(Error::IncompatibleGeometry(
                                "uniform-subset blocking needs column -1 in the window".into(),
                            ))
                        } else {
                            Ok(())
                        }
                    }
                }
            }
        }
    }

    /// Density `(rho, 1 - rho)` at `site` of the product measure underlying
    /// the spec: the measure itself for product families, the unconditioned
    /// profile for conditioned families, and the frozen values for Dirac
    /// families.
    pub fn product_density(&self, geometry: &LaneGeometry, site: Site) -> Result<(f64, f64)> {
        geometry.check_site(site)?;
        let z = site.column;
        Ok(match *self {
            MeasureSpec::TwoRateBernoulli { rho0, rho1 } => {
                let r = if site.lane == 0 { rho0 } else { rho1 };
                (r, 1.0 - r)
            }
            MeasureSpec::BernoulliTotal { rho, pq } => {
                let r = match pq {
                    Some([p, q]) => {
                        let (r0, r1) = solve_f(p, q, rho)?;
                        if site.lane == 0 {
                            r0
                        } else {
                            r1
                        }
                    }
                    None => rho / geometry.n_lanes() as f64,
                };
                (r, 1.0 - r)
            }
            MeasureSpec::ReversibleProfile {
                theta,
                c,
                lambda,
                center,
            } => profile_density(theta, lambda, c, Site::new(z - center, site.lane)),
            MeasureSpec::ConditionedBlocking {
                n, theta, lambda, c, ..
            } => profile_density(theta, lambda, c, Site::new(z + n, site.lane)),
            MeasureSpec::PartialBlocking { kind, n, d, l, c } => {
                let frozen = match kind {
                    PartialKind::EmptyLane0 | PartialKind::EmptyLane0Reflected => (0, Some(false)),
                    PartialKind::FullLane1 => (1, Some(true)),
                };
                if site.lane == frozen.0 {
                    if frozen.1 == Some(true) {
                        (1.0, 0.0)
                    } else {
                        (0.0, 1.0)
                    }
                } else if kind == PartialKind::EmptyLane0Reflected {
                    single_lane_step_density(l, d, c, n, -z)
                } else {
                    single_lane_step_density(d, l, c, n, z)
                }
            }
            MeasureSpec::DiracStep { i, j } => {
                let on = if site.lane == 0 { i } else { j }.occupied(z);
                if on {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            MeasureSpec::TasepPairBlocking { kind, z: z0, p, q } => {
                if z > z0 {
                    (1.0, 0.0)
                } else if z < z0 || kind == PairKind::Breve {
                    (0.0, 1.0)
                } else {
                    let w = if site.lane == 1 { p / (p + q) } else { q / (p + q) };
                    (w, 1.0 - w)
                }
            }
            MeasureSpec::MultilaneBlocking { variant, .. } => match variant {
                MultilaneVariant::ConditionedProfile { theta, c } => {
                    profile_density(theta, 1.0, c, Site::new(z, 0))
                }
                MultilaneVariant::UniformSubset => {
                    if z >= 0 {
                        (1.0, 0.0)
                    } else {
                        (0.0, 1.0)
                    }
                }
            },
        })
    }

    fn window_law(&self, geometry: &LaneGeometry) -> Result<WindowLaw> {
        self.check(geometry)?;
        let g = *geometry;
        let densities = || -> Result<Vec<(f64, f64)>> {
            g.sites().map(|s| self.product_density(&g, s)).collect()
        };
        let right_columns = g.max_column().max(0);
        Ok(match *self {
            MeasureSpec::TwoRateBernoulli { .. }
            | MeasureSpec::BernoulliTotal { .. }
            | MeasureSpec::ReversibleProfile { .. } => WindowLaw::Product(densities()?),
            MeasureSpec::ConditionedBlocking { kind, n, .. } => {
                let h2 = 2 * n + i64::from(kind == Parity::Odd);
                WindowLaw::Conditioned {
                    densities: densities()?,
                    sites: None,
                    target: height_target(&g, h2, 2 * right_columns, g.n_sites())?,
                    frozen: Config::empty(g),
                }
            }
            MeasureSpec::MultilaneBlocking { i, variant } => match variant {
                MultilaneVariant::ConditionedProfile { .. } => {
                    let n = g.n_lanes() as i64;
                    WindowLaw::Conditioned {
                        densities: densities()?,
                        sites: None,
                        target: height_target(&g, i as i64, n * right_columns, g.n_sites())?,
                        frozen: Config::empty(g),
                    }
                }
                MultilaneVariant::UniformSubset => WindowLaw::UniformSubset {
                    n_lanes: g.n_lanes(),
                    size: i,
                },
            },
            MeasureSpec::PartialBlocking { kind, n, d, l, .. } => {
                let (active, frozen) = match kind {
                    PartialKind::EmptyLane0 | PartialKind::EmptyLane0Reflected => {
                        (1, Config::empty(g))
                    }
                    PartialKind::FullLane1 => (0, Config::from_fn(g, |s| s.lane == 1)),
                };
                // the active lane moves right unless the kind is reflected
                let l_eff = if kind == PartialKind::EmptyLane0Reflected { d } else { l };
                if l_eff == 0.0 {
                    let mut c = frozen;
                    for z in g.columns() {
                        let on = if kind == PartialKind::EmptyLane0Reflected {
                            -z > n
                        } else {
                            z > n
                        };
                        c.set(Site::new(z, active), on)?;
                    }
                    WindowLaw::Dirac(c)
                } else {
                    let lane_sites: Vec<usize> =
                        (0..g.length()).map(|k| active * g.length() + k).collect();
                    // single-lane height -n: the step of the profile sits at n
                    let target = height_target(&g, -n, right_columns, g.length())?;
                    WindowLaw::Conditioned {
                        densities: densities()?,
                        sites: Some(lane_sites),
                        target,
                        frozen,
                    }
                }
            }
            MeasureSpec::DiracStep { i, j } => WindowLaw::Dirac(step_config(g, i, j)?),
            MeasureSpec::TasepPairBlocking { kind, z, p, q } => {
                let base = Config::from_fn(g, |s| s.column > z);
                match kind {
                    PairKind::Breve => WindowLaw::Dirac(base),
                    PairKind::Hat => {
                        let mut on0 = base.clone();
                        on0.set(Site::new(z, 0), true)?;
                        let mut on1 = base;
                        on1.set(Site::new(z, 1), true)?;
                        WindowLaw::Mixture(vec![(q / (p + q), on0), (p / (p + q), on1)])
                    }
                }
            }
        })
    }

    /// One exact draw, using the default sampler for conditioned families.
    pub fn sample<R: Rng + ?Sized>(&self, geometry: &LaneGeometry, rng: &mut R) -> Result<Config> {
        self.sample_with(geometry, ConditionedSampler::default(), rng)
    }

    pub fn sample_seeded(&self, geometry: &LaneGeometry, seed: u64) -> Result<Config> {
        self.sample(geometry, &mut rng_from_seed(seed))
    }

    pub fn sample_with<R: Rng + ?Sized>(
        &self,
        geometry: &LaneGeometry,
        sampler: ConditionedSampler,
        rng: &mut R,
    ) -> Result<Config> {
        let g = *geometry;
        match self.window_law(geometry)? {
            WindowLaw::Product(densities) => {
                let mut c = Config::empty(g);
                for (site, (p, _)) in g.sites().zip(densities) {
                    if rng.gen::<f64>() < p {
                        c.set(site, true)?;
                    }
                }
                Ok(c)
            }
            WindowLaw::Conditioned {
                densities,
                sites,
                target,
                frozen,
            } => {
                let all: Vec<usize> = match sites {
                    Some(s) => s,
                    None => (0..g.n_sites()).collect(),
                };
                let sub: Vec<(f64, f64)> = all.iter().map(|&k| densities[k]).collect();
                let bits = match sampler {
                    ConditionedSampler::Exact => conditioned::sample_exact(&sub, target, rng)?,
                    ConditionedSampler::Rejection { budget } => {
                        conditioned::sample_rejection(&sub, target, budget, rng)?
                    }
                };
                let mut c = frozen;
                for (&k, on) in all.iter().zip(bits) {
                    c.set(site_at(&g, k), on)?;
                }
                Ok(c)
            }
            WindowLaw::Dirac(c) => Ok(c),
            WindowLaw::Mixture(parts) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let last = parts.len() - 1;
                for (k, (w, c)) in parts.into_iter().enumerate() {
                    acc += w;
                    if u < acc || k == last {
                        return Ok(c);
                    }
                }
                unreachable!()
            }
            WindowLaw::UniformSubset { n_lanes, size } => {
                let chosen = rand::seq::index::sample(rng, n_lanes, size);
                let mut c = Config::from_fn(g, |s| s.column >= 0);
                for lane in chosen.iter() {
                    c.set(Site::new(-1, lane), true)?;
                }
                Ok(c)
            }
        }
    }

    /// Exact one-site marginals, indexed `[lane][column index]`.
    pub fn marginals(&self, geometry: &LaneGeometry) -> Result<Vec<Vec<f64>>> {
        let g = *geometry;
        let flat: Vec<f64> = match self.window_law(geometry)? {
            WindowLaw::Product(d) => d.into_iter().map(|(p, _)| p).collect(),
            WindowLaw::Conditioned {
                densities,
                sites,
                target,
                frozen,
            } => {
                let mut out: Vec<f64> = g.sites().map(|s| f64::from(u8::from(frozen.occupied(s)))).collect();
                let all: Vec<usize> = match sites {
                    Some(s) => s,
                    None => (0..g.n_sites()).collect(),
                };
                let sub: Vec<(f64, f64)> = all.iter().map(|&k| densities[k]).collect();
                for (&k, m) in all.iter().zip(conditioned::marginals(&sub, target)?) {
                    out[k] = m;
                }
                out
            }
            WindowLaw::Dirac(c) => g.sites().map(|s| f64::from(u8::from(c.occupied(s)))).collect(),
            WindowLaw::Mixture(parts) => {
                let mut out = vec![0.0; g.n_sites()];
                for (w, c) in parts {
                    for (k, s) in g.sites().enumerate() {
                        if c.occupied(s) {
                            out[k] += w;
                        }
                    }
                }
                out
            }
            WindowLaw::UniformSubset { n_lanes, size } => g
                .sites()
                .map(|s| match s.column {
                    z if z >= 0 => 1.0,
                    -1 => size as f64 / n_lanes as f64,
                    _ => 0.0,
                })
                .collect(),
        };
        Ok(flat.chunks(g.length()).map(<[f64]>::to_vec).collect())
    }

    /// `ln(mu(a) / mu(b))` for a product family.
    pub fn log_density_ratio(&self, a: &Config, b: &Config) -> Result<f64> {
        if !self.is_product() {
            return Err(Error::InvalidArgument(format!(
                "{} is not a product measure",
                self.family()
            )));
        }
        let g = *a.geometry();
        if g != *b.geometry() {
            return Err(Error::InvalidGeometry("configurations have different windows".into()));
        }
        self.check(&g)?;
        let mut total = 0.0;
        for site in g.sites() {
            let (x, y) = (a.occupied(site), b.occupied(site));
            if x == y {
                continue;
            }
            let log_odds = match *self {
                MeasureSpec::ReversibleProfile {
                    theta,
                    c,
                    lambda,
                    center,
                } => {
                    c.ln() + (site.column - center) as f64 * theta.ln() + site.lane as f64 * lambda.ln()
                }
                _ => {
                    let (p, h) = self.product_density(&g, site)?;
                    p.ln() - h.ln()
                }
            };
            if !log_odds.is_finite() {
                return Err(Error::DegenerateRatio {
                    column: site.column,
                    lane: site.lane,
                });
            }
            total += if x { log_odds } else { -log_odds };
        }
        Ok(total)
    }
}

fn single_lane_step_density(d: f64, l: f64, c: f64, n: i64, x: i64) -> (f64, f64) {
    if l == 0.0 {
        tasep_profile(n, c, x)
    } else {
        density_from_odds(c * odds_power(d / l, x - n))
    }
}

fn site_at(g: &LaneGeometry, flat: usize) -> Site {
    Site::new(g.column_at(flat % g.length()), flat / g.length())
}

/// Particle count that realizes height `h` given the number of holes counted
/// on the right of the origin when the window right of it is empty.
fn height_target(g: &LaneGeometry, h: i64, offset: i64, max: usize) -> Result<usize> {
    let target = h + offset;
    if target < 0 || target > max as i64 {
        return Err(Error::InvalidArgument(format!(
            "height {h} is not attainable on window {g}"
        )));
    }
    Ok(target as usize)
}

/// Single-lane height `sum_{x<=0} eta - sum_{x>0} (1 - eta)` of one lane.
pub fn lane_height(config: &Config, lane: usize) -> Result<i64> {
    let g = config.geometry();
    if g.is_periodic() {
        return Err(Error::IncompatibleGeometry(
            "height functional is undefined on a ring".into(),
        ));
    }
    g.check_lane(lane)?;
    Ok(config.lane_count(lane) as i64 - g.max_column().max(0))
}
