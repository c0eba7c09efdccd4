//! Jump rates, symmetry operators and connectivity of the site graph.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Config, LaneGeometry, Site, VTopology};

/// Two-lane rates `(d0, l0, d1, l1, p, q)`.
///
/// `d_i`/`l_i` are the right/left jump rates on lane `i`, `p` the rate from
/// lane 0 to lane 1 and `q` the rate from lane 1 to lane 0. Construction only
/// checks that rates are finite and nonnegative; use
/// [`TwoLaneRates::check_movable`] and [`TwoLaneRates::check_coupled`] where
/// the stronger standing assumptions matter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RatesRecord", into = "RatesRecord")]
pub struct TwoLaneRates {
    d: [f64; 2],
    l: [f64; 2],
    p: f64,
    q: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RatesRecord {
    d0: f64,
    l0: f64,
    d1: f64,
    l1: f64,
    p: f64,
    q: f64,
}

impl TryFrom<RatesRecord> for TwoLaneRates {
    type Error = Error;

    fn try_from(r: RatesRecord) -> Result<Self> {
        TwoLaneRates::new(r.d0, r.l0, r.d1, r.l1, r.p, r.q)
    }
}

impl From<TwoLaneRates> for RatesRecord {
    fn from(r: TwoLaneRates) -> Self {
        RatesRecord {
            d0: r.d[0],
            l0: r.l[0],
            d1: r.d[1],
            l1: r.l[1],
            p: r.p,
            q: r.q,
        }
    }
}

fn check_rate(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidRates(format!("{name} = {x} must be finite and >= 0")))
    }
}

impl TwoLaneRates {
    pub fn new(d0: f64, l0: f64, d1: f64, l1: f64, p: f64, q: f64) -> Result<Self> {
        for (name, x) in [("d0", d0), ("l0", l0), ("d1", d1), ("l1", l1), ("p", p), ("q", q)] {
            check_rate(name, x)?;
        }
        Ok(Self {
            d: [d0, d1],
            l: [l0, l1],
            p,
            q,
        })
    }

    /// `(d0, l0, d1, l1, p, q)`.
    pub fn as_tuple(&self) -> (f64, f64, f64, f64, f64, f64) {
        (self.d[0], self.l[0], self.d[1], self.l[1], self.p, self.q)
    }

    pub fn d(&self, lane: usize) -> f64 {
        self.d[lane]
    }

    pub fn l(&self, lane: usize) -> f64 {
        self.l[lane]
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Mean drift `gamma_i = d_i - l_i`.
    pub fn gamma(&self, lane: usize) -> f64 {
        self.d[lane] - self.l[lane]
    }

    /// `r = q/p`; infinite when `p = 0 < q`.
    pub fn r(&self) -> Result<f64> {
        self.check_coupled()?;
        Ok(if self.p > 0.0 {
            self.q / self.p
        } else {
            f64::INFINITY
        })
    }

    /// `d = gamma0 / (gamma0 + gamma1)`, defined when the total drift is nonzero.
    pub fn reduced_d(&self) -> Option<f64> {
        let s = self.gamma(0) + self.gamma(1);
        (s != 0.0).then(|| self.gamma(0) / s)
    }

    /// `(d0 + l0)(d1 + l1) > 0`: particles can move horizontally on both lanes.
    pub fn check_movable(&self) -> Result<()> {
        if (self.d[0] + self.l[0]) * (self.d[1] + self.l[1]) > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidRates(
                "some lane has no horizontal jumps ((d0+l0)(d1+l1) = 0)".into(),
            ))
        }
    }

    /// `p + q > 0`.
    pub fn check_coupled(&self) -> Result<()> {
        if self.p + self.q > 0.0 {
            Ok(())
        } else {
            Err(Error::DecoupledLanes)
        }
    }

    /// Total jump rate out of one column when every jump is enabled.
    pub fn column_mass(&self) -> f64 {
        self.d[0] + self.l[0] + self.d[1] + self.l[1] + self.p + self.q
    }
}

impl fmt::Display for TwoLaneRates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(d0={}, l0={}, d1={}, l1={}, p={}, q={})",
            self.d[0], self.l[0], self.d[1], self.l[1], self.p, self.q
        )
    }
}

/// Rates of the `n`-lane model on the torus `T_n`.
///
/// `vertical[k]` is the rate of a jump from lane `i` to lane `i + k mod n`;
/// entry 0 must be zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MultiLaneRecord", into = "MultiLaneRecord")]
pub struct MultiLaneRates {
    d: Vec<f64>,
    l: Vec<f64>,
    vertical: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiLaneRecord {
    d: Vec<f64>,
    l: Vec<f64>,
    #[serde(rename = "Q")]
    vertical: Vec<f64>,
}

impl TryFrom<MultiLaneRecord> for MultiLaneRates {
    type Error = Error;

    fn try_from(r: MultiLaneRecord) -> Result<Self> {
        MultiLaneRates::new(r.d, r.l, r.vertical)
    }
}

impl From<MultiLaneRates> for MultiLaneRecord {
    fn from(r: MultiLaneRates) -> Self {
        MultiLaneRecord {
            d: r.d,
            l: r.l,
            vertical: r.vertical,
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl MultiLaneRates {
    /// Validates lane counts, nonnegativity and irreducibility of `Q`.
    ///
    /// Horizontal rates may vanish on a lane (`d_i + l_i = 0`); such kernels
    /// are accepted so that pure vertical chains can be built, but
    /// [`MultiLaneRates::check_movable`] reports them.
    pub fn new(d: Vec<f64>, l: Vec<f64>, vertical: Vec<f64>) -> Result<Self> {
        let n = d.len();
        if n < 2 || l.len() != n || vertical.len() != n {
            return Err(Error::InvalidRates(format!(
                "need n >= 2 lanes with d, l, Q all of length n (got {}, {}, {})",
                d.len(),
                l.len(),
                vertical.len()
            )));
        }
        for (i, (&di, &li)) in d.iter().zip(&l).enumerate() {
            check_rate(&format!("d[{i}]"), di)?;
            check_rate(&format!("l[{i}]"), li)?;
        }
        for (k, &x) in vertical.iter().enumerate() {
            check_rate(&format!("Q[{k}]"), x)?;
        }
        if vertical[0] != 0.0 {
            return Err(Error::InvalidRates("Q[0] must be 0".into()));
        }
        let g = vertical
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .fold(n, |g, (k, _)| gcd(g, k));
        if g != 1 {
            return Err(Error::InvalidRates(format!(
                "vertical kernel is not irreducible on the torus of {n} lanes"
            )));
        }
        Ok(Self { d, l, vertical })
    }

    /// Same horizontal rates on every lane.
    pub fn homogeneous(n: usize, d: f64, l: f64, vertical: Vec<f64>) -> Result<Self> {
        Self::new(vec![d; n], vec![l; n], vertical)
    }

    pub fn n_lanes(&self) -> usize {
        self.d.len()
    }

    pub fn d(&self, lane: usize) -> f64 {
        self.d[lane]
    }

    pub fn l(&self, lane: usize) -> f64 {
        self.l[lane]
    }

    pub fn gamma(&self, lane: usize) -> f64 {
        self.d[lane] - self.l[lane]
    }

    /// `Q(k)`, the rate of a jump by `k` lanes.
    pub fn q_at(&self, k: usize) -> f64 {
        self.vertical[k % self.n_lanes()]
    }

    pub fn lane_independent(&self) -> bool {
        self.d.iter().all(|&x| x == self.d[0]) && self.l.iter().all(|&x| x == self.l[0])
    }

    pub fn check_movable(&self) -> Result<()> {
        match self.d.iter().zip(&self.l).position(|(d, l)| d + l <= 0.0) {
            None => Ok(()),
            Some(i) => Err(Error::InvalidRates(format!(
                "lane {i} has no horizontal jumps"
            ))),
        }
    }
}

/// Any supported jump kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    TwoLane(TwoLaneRates),
    MultiLane(MultiLaneRates),
}

impl From<TwoLaneRates> for Kernel {
    fn from(r: TwoLaneRates) -> Self {
        Kernel::TwoLane(r)
    }
}

impl From<MultiLaneRates> for Kernel {
    fn from(r: MultiLaneRates) -> Self {
        Kernel::MultiLane(r)
    }
}

impl Kernel {
    pub fn n_lanes(&self) -> usize {
        match self {
            Kernel::TwoLane(_) => 2,
            Kernel::MultiLane(m) => m.n_lanes(),
        }
    }

    /// `(d_i, l_i)`.
    pub fn horizontal(&self, lane: usize) -> (f64, f64) {
        match self {
            Kernel::TwoLane(r) => (r.d(lane), r.l(lane)),
            Kernel::MultiLane(m) => (m.d(lane), m.l(lane)),
        }
    }

    pub fn gamma(&self, lane: usize) -> f64 {
        let (d, l) = self.horizontal(lane);
        d - l
    }

    /// Rate of a vertical jump from lane `i` to lane `j` within a column.
    pub fn vertical(&self, from: usize, to: usize) -> f64 {
        if from == to {
            return 0.0;
        }
        match self {
            Kernel::TwoLane(r) => {
                if from == 0 {
                    r.p()
                } else {
                    r.q()
                }
            }
            Kernel::MultiLane(m) => {
                let n = m.n_lanes();
                m.q_at((to + n - from) % n)
            }
        }
    }

    pub fn two_lane(&self) -> Option<&TwoLaneRates> {
        match self {
            Kernel::TwoLane(r) => Some(r),
            Kernel::MultiLane(_) => None,
        }
    }

    pub fn check_geometry(&self, geometry: &LaneGeometry) -> Result<()> {
        if self.n_lanes() != geometry.n_lanes() {
            return Err(Error::InvalidGeometry(format!(
                "kernel has {} lanes, geometry has {}",
                self.n_lanes(),
                geometry.n_lanes()
            )));
        }
        match (self, geometry.v_topology()) {
            (Kernel::TwoLane(_), VTopology::TwoLane) | (Kernel::MultiLane(_), VTopology::Torus) => {
                Ok(())
            }
            _ => Err(Error::InvalidGeometry(
                "two-lane kernels need two-lane topology, multilane kernels a torus".into(),
            )),
        }
    }

    /// Reads a kernel from TOML.
    ///
    /// Two-lane files use the keys `d0, l0, d1, l1, p, q`; multilane files use
    /// arrays `d`, `l` and `Q`. Integer values are accepted as rates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let mut numbers = BTreeMap::new();
        let mut arrays = BTreeMap::new();
        for (key, value) in &table {
            match value {
                toml::Value::Array(items) => {
                    let xs = items
                        .iter()
                        .map(|v| toml_number(key, v))
                        .collect::<Result<Vec<_>>>()?;
                    arrays.insert(key.as_str(), xs);
                }
                v => {
                    numbers.insert(key.as_str(), toml_number(key, v)?);
                }
            }
        }
        if arrays.is_empty() {
            const KEYS: [&str; 6] = ["d0", "l0", "d1", "l1", "p", "q"];
            if let Some(k) = numbers.keys().find(|k| !KEYS.contains(k)) {
                return Err(Error::Parse(format!("unknown kernel key {k:?}")));
            }
            let get = |k: &str| {
                numbers
                    .get(k)
                    .copied()
                    .ok_or_else(|| Error::Parse(format!("missing kernel key {k:?}")))
            };
            Ok(Kernel::TwoLane(TwoLaneRates::new(
                get("d0")?,
                get("l0")?,
                get("d1")?,
                get("l1")?,
                get("p")?,
                get("q")?,
            )?))
        } else {
            if let Some(k) = numbers.keys().next() {
                return Err(Error::Parse(format!(
                    "scalar key {k:?} in a multilane kernel file"
                )));
            }
            if let Some(k) = arrays.keys().find(|k| !["d", "l", "Q"].contains(k)) {
                return Err(Error::Parse(format!("unknown kernel key {k:?}")));
            }
            let mut take = |k: &str| {
                arrays
                    .remove(k)
                    .ok_or_else(|| Error::Parse(format!("missing kernel key {k:?}")))
            };
            let (d, l, q) = (take("d")?, take("l")?, take("Q")?);
            Ok(Kernel::MultiLane(MultiLaneRates::new(d, l, q)?))
        }
    }
}

fn toml_number(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => Err(Error::Parse(format!(
            "kernel key {key:?}: expected a number, got {}",
            other.type_str()
        ))),
    }
}

/// A directed bond `from -> to` of the site graph with its jump rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectedRate {
    pub from: Site,
    pub to: Site,
    pub rate: f64,
}

/// Every positive-rate directed bond inside the window.
///
/// Horizontal bonds join nearest neighbours within a lane (wrapping on a
/// ring, cut at the ends of a closed window); vertical bonds join lanes
/// within a column. Bonds are listed lane by lane, then column by column.
pub fn enumerate_bonds(kernel: &Kernel, geometry: &LaneGeometry) -> Result<Vec<DirectedRate>> {
    kernel.check_geometry(geometry)?;
    let n = geometry.n_lanes();
    let mut bonds = Vec::new();
    for lane in 0..n {
        let (d, l) = kernel.horizontal(lane);
        for z in geometry.columns() {
            let Some(y) = geometry.right_of(z) else {
                continue;
            };
            if d > 0.0 {
                bonds.push(DirectedRate {
                    from: Site::new(z, lane),
                    to: Site::new(y, lane),
                    rate: d,
                });
            }
            if l > 0.0 {
                bonds.push(DirectedRate {
                    from: Site::new(y, lane),
                    to: Site::new(z, lane),
                    rate: l,
                });
            }
        }
    }
    for z in geometry.columns() {
        for i in 0..n {
            for j in 0..n {
                let rate = kernel.vertical(i, j);
                if rate > 0.0 {
                    bonds.push(DirectedRate {
                        from: Site::new(z, i),
                        to: Site::new(z, j),
                        rate,
                    });
                }
            }
        }
    }
    Ok(bonds)
}

/// The three involutions of the two-lane model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    /// `sigma`: `z -> -z`.
    LaneReflect,
    /// `sigma'`: swap the two lanes.
    LaneExchange,
    /// `sigma''`: exchange particles and holes.
    ParticleHole,
}

impl Symmetry {
    pub const ALL: [Symmetry; 3] = [
        Symmetry::LaneReflect,
        Symmetry::LaneExchange,
        Symmetry::ParticleHole,
    ];
}

/// Image of a configuration under one of the involutions.
///
/// Reflection maps column `z` to `-z` on a closed window (which is centered)
/// and to `-z mod L` on a ring.
pub fn apply_symmetry(which: Symmetry, config: &Config) -> Result<Config> {
    let g = *config.geometry();
    Ok(match which {
        Symmetry::LaneReflect => {
            let len = g.length() as i64;
            Config::from_fn(g, |s| {
                let z = if g.is_periodic() {
                    (-s.column).rem_euclid(len)
                } else {
                    -s.column
                };
                config.occupied(Site::new(z, s.lane))
            })
        }
        Symmetry::LaneExchange => {
            if g.n_lanes() != 2 {
                return Err(Error::InvalidGeometry(format!(
                    "lane exchange needs 2 lanes, got {}",
                    g.n_lanes()
                )));
            }
            Config::from_fn(g, |s| config.occupied(Site::new(s.column, 1 - s.lane)))
        }
        Symmetry::ParticleHole => Config::from_fn(g, |s| !config.occupied(s)),
    })
}

/// Parameters of the image process under a symmetry.
pub fn conjugate_rates(which: Symmetry, rates: &TwoLaneRates) -> TwoLaneRates {
    let (d0, l0, d1, l1, p, q) = rates.as_tuple();
    let (d0, l0, d1, l1, p, q) = match which {
        Symmetry::LaneReflect => (l0, d0, l1, d1, p, q),
        Symmetry::LaneExchange => (d1, l1, d0, l0, q, p),
        Symmetry::ParticleHole => (l0, d0, l1, d1, q, p),
    };
    TwoLaneRates { d: [d0, d1], l: [l0, l1], p, q }
}

/// Result of searching the symmetry group for normalized parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    /// True when the input already satisfies the normalization.
    pub already_normalized: bool,
    /// Symmetries to apply, in order, to reach `image`.
    pub conjugation: Vec<Symmetry>,
    pub image: TwoLaneRates,
}

/// `gamma0 >= 0`, `gamma0 + gamma1 >= 0`, `p >= q`, `p > 0`.
pub fn is_normalized(rates: &TwoLaneRates) -> bool {
    let (g0, g1) = (rates.gamma(0), rates.gamma(1));
    g0 >= 0.0 && g0 + g1 >= 0.0 && rates.p() >= rates.q() && rates.p() > 0.0
}

/// Finds a composition of symmetries that normalizes the rates.
///
/// Always succeeds when `p + q > 0`.
pub fn normalization(rates: &TwoLaneRates) -> Result<Normalization> {
    rates.check_coupled()?;
    for mask in 0u8..8 {
        let conjugation: Vec<Symmetry> = Symmetry::ALL
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, s)| *s)
            .collect();
        let image = conjugation
            .iter()
            .fold(*rates, |r, s| conjugate_rates(*s, &r));
        if is_normalized(&image) {
            return Ok(Normalization {
                already_normalized: mask == 0,
                conjugation,
                image,
            });
        }
    }
    unreachable!("the symmetry group always normalizes coupled rates")
}

/// Whether every pair of distinct sites is joined by a directed
/// positive-rate path in at least one direction.
///
/// Two-lane kernels use the closed-form criterion: the answer is negative
/// when `p + q = 0`, and when `min(p, q) = 0` with both lanes totally
/// asymmetric in the same direction. Kernels where some lane cannot move
/// horizontally fall outside that criterion and are decided on a window.
/// Multilane kernels with irreducible `Q` and movable lanes always qualify.
pub fn is_weakly_irreducible(kernel: &Kernel) -> bool {
    match kernel {
        Kernel::TwoLane(r) => {
            if r.check_coupled().is_err() {
                return false;
            }
            if r.check_movable().is_err() {
                return window_weakly_irreducible(kernel, 5);
            }
            let (d0, l0, d1, l1, p, q) = r.as_tuple();
            let same_direction_tasep = d0 * l0 + d1 * l1 == 0.0 && d0 * d1 + l0 * l1 > 0.0;
            !(p.min(q) == 0.0 && same_direction_tasep)
        }
        Kernel::MultiLane(m) => {
            m.check_movable().is_ok() || window_weakly_irreducible(kernel, 5)
        }
    }
}

/// Brute-force connectivity of the bond graph on a closed window of `length`
/// columns (rounded up to odd).
pub fn window_weakly_irreducible(kernel: &Kernel, length: usize) -> bool {
    let n = kernel.n_lanes();
    let topology = match kernel {
        Kernel::TwoLane(_) => VTopology::TwoLane,
        Kernel::MultiLane(_) => VTopology::Torus,
    };
    let length = length | 1;
    let Ok(g) = LaneGeometry::new(n, length, crate::lattice::HBoundary::Closed, topology) else {
        return false;
    };
    let Ok(bonds) = enumerate_bonds(kernel, &g) else {
        return false;
    };
    let index = |s: Site| s.lane * length + (s.column - g.min_column()) as usize;
    let size = g.n_sites();
    let mut adjacency = vec![Vec::new(); size];
    for b in &bonds {
        adjacency[index(b.from)].push(index(b.to));
    }
    let reach: Vec<Vec<bool>> = (0..size)
        .map(|start| {
            let mut seen = vec![false; size];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for &w in &adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            seen
        })
        .collect();
    (0..size).all(|a| (0..size).all(|b| reach[a][b] || reach[b][a]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rates(t: (f64, f64, f64, f64, f64, f64)) -> TwoLaneRates {
        TwoLaneRates::new(t.0, t.1, t.2, t.3, t.4, t.5).unwrap()
    }

    #[test]
    fn bond_enumeration_examples() {
        let k = Kernel::TwoLane(rates((1.0, 0.0, 0.0, 0.0, 0.0, 0.0)));
        let bonds = enumerate_bonds(&k, &LaneGeometry::two_lane_ring(2).unwrap()).unwrap();
        assert_eq!(bonds.len(), 2);
        assert!(bonds.iter().all(|b| b.from.lane == 0 && b.to.lane == 0 && b.rate == 1.0));

        let k = Kernel::TwoLane(rates((0.0, 0.0, 0.0, 0.0, 1.0, 0.0)));
        let bonds = enumerate_bonds(&k, &LaneGeometry::two_lane_closed(1).unwrap()).unwrap();
        assert_eq!(bonds.len(), 3);
        assert!(bonds.iter().all(|b| b.from.lane == 0 && b.to.lane == 1));

        let k = Kernel::MultiLane(
            MultiLaneRates::homogeneous(3, 0.0, 0.0, vec![0.0, 1.0, 0.0]).unwrap(),
        );
        let bonds = enumerate_bonds(&k, &LaneGeometry::torus_closed(3, 0).unwrap()).unwrap();
        let mut edges: Vec<(usize, usize)> = bonds.iter().map(|b| (b.from.lane, b.to.lane)).collect();
        edges.sort();
        assert_eq!(edges, vec![(0, 1), (1, 2), (2, 0)]);
    }

    #[test]
    fn closed_window_has_no_wrap_bonds() {
        let k = Kernel::TwoLane(rates((1.0, 1.0, 1.0, 1.0, 0.0, 0.0)));
        let bonds = enumerate_bonds(&k, &LaneGeometry::two_lane_closed(2).unwrap()).unwrap();
        assert_eq!(bonds.len(), 4 * 4);
    }

    #[test]
    fn lane_count_mismatch_is_rejected() {
        let k = Kernel::MultiLane(
            MultiLaneRates::homogeneous(3, 1.0, 0.0, vec![0.0, 1.0, 0.0]).unwrap(),
        );
        assert!(enumerate_bonds(&k, &LaneGeometry::two_lane_ring(4).unwrap()).is_err());
    }

    #[test]
    fn conjugations_match_image_processes() {
        let r = rates((2.0, 1.0, 3.0, 0.0, 5.0, 4.0));
        let t = |s| conjugate_rates(s, &r).as_tuple();
        assert_eq!(t(Symmetry::LaneReflect), (1.0, 2.0, 0.0, 3.0, 5.0, 4.0));
        assert_eq!(t(Symmetry::LaneExchange), (3.0, 0.0, 2.0, 1.0, 4.0, 5.0));
        assert_eq!(t(Symmetry::ParticleHole), (1.0, 2.0, 0.0, 3.0, 4.0, 5.0));
    }

    #[test]
    fn configuration_symmetries() {
        let g = LaneGeometry::two_lane_closed(3).unwrap();
        assert_eq!(
            apply_symmetry(Symmetry::ParticleHole, &Config::empty(g)).unwrap(),
            Config::full(g)
        );
        let lane0 = Config::from_fn(g, |s| s.lane == 0);
        let lane1 = Config::from_fn(g, |s| s.lane == 1);
        assert_eq!(apply_symmetry(Symmetry::LaneExchange, &lane0).unwrap(), lane1);

        let step = Config::from_fn(g, |s| s.column > 1);
        let reflected = apply_symmetry(Symmetry::LaneReflect, &step).unwrap();
        assert_eq!(reflected, Config::from_fn(g, |s| s.column < -1));

        let tri = LaneGeometry::torus_ring(3, 4).unwrap();
        assert!(apply_symmetry(Symmetry::LaneExchange, &Config::empty(tri)).is_err());
    }

    #[test]
    fn weak_irreducibility_examples() {
        let wi = |t| is_weakly_irreducible(&Kernel::TwoLane(rates(t)));
        assert!(!wi((1.0, 0.0, 1.0, 0.0, 1.0, 0.0)));
        assert!(wi((1.0, 0.0, 1.0, 0.0, 1.0, 0.5)));
        assert!(wi((1.0, 0.0, 0.0, 1.0, 1.0, 0.0)));
        assert!(!wi((1.0, 1.0, 1.0, 1.0, 0.0, 0.0)));
    }

    #[test]
    fn multilane_irreducibility() {
        assert!(MultiLaneRates::homogeneous(4, 1.0, 0.0, vec![0.0, 0.0, 1.0, 0.0]).is_err());
        assert!(MultiLaneRates::homogeneous(4, 1.0, 0.0, vec![0.0, 0.0, 1.0, 1.0]).is_ok());
        assert!(MultiLaneRates::homogeneous(3, 1.0, 0.0, vec![1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn toml_kernels() {
        let k = Kernel::from_toml_str("d0 = 2\nl0 = 0.5\nd1 = 1\nl1 = 0\np = 4\nq = 1\n").unwrap();
        assert_eq!(k.two_lane().unwrap().as_tuple(), (2.0, 0.5, 1.0, 0.0, 4.0, 1.0));
        assert!(Kernel::from_toml_str("d0 = 2\nl0 = 0\nd1 = 1\nl1 = 0\np = 4\n").is_err());
        assert!(Kernel::from_toml_str("d0=1\nl0=0\nd1=1\nl1=0\np=1\nq=0\nx=3\n").is_err());
        assert!(Kernel::from_toml_str("d0=-1\nl0=0\nd1=1\nl1=0\np=1\nq=0\n").is_err());

        let m = Kernel::from_toml_str("d = [1, 1, 1]\nl = [0.5, 0.5, 0.5]\nQ = [0, 1, 0.25]\n").unwrap();
        assert_eq!(m.n_lanes(), 3);
        assert_eq!(m.vertical(2, 0), 1.0);
        assert_eq!(m.vertical(0, 2), 0.25);
    }

    #[test]
    fn kernel_json_roundtrip() {
        let k = Kernel::TwoLane(rates((2.0, 1.0, 3.0, 0.0, 5.0, 4.0)));
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(serde_json::from_str::<Kernel>(&s).unwrap(), k);
    }

    fn rate_strategy() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), 0.01f64..5.0]
    }

    proptest! {
        #[test]
        fn normalization_always_succeeds(
            d0 in rate_strategy(), l0 in rate_strategy(), d1 in rate_strategy(),
            l1 in rate_strategy(), p in rate_strategy(), q in 0.01f64..5.0,
        ) {
            let r = rates((d0, l0, d1, l1, p, q));
            let n = normalization(&r).unwrap();
            prop_assert!(is_normalized(&n.image));
            let replay = n.conjugation.iter().fold(r, |acc, s| conjugate_rates(*s, &acc));
            prop_assert_eq!(replay, n.image);
        }

        #[test]
        fn closed_form_matches_window_reachability(
            d0 in rate_strategy(), l0 in rate_strategy(), d1 in rate_strategy(),
            l1 in rate_strategy(), p in rate_strategy(), q in rate_strategy(),
        ) {
            let k = Kernel::TwoLane(rates((d0, l0, d1, l1, p, q)));
            prop_assert_eq!(is_weakly_irreducible(&k), window_weakly_irreducible(&k, 5));
        }

        #[test]
        fn involutions(bits in proptest::collection::vec(any::<bool>(), 2 * 9)) {
            let g = LaneGeometry::two_lane_closed(4).unwrap();
            let c = Config::from_fn(g, |s| bits[s.lane * 9 + (s.column + 4) as usize]);
            for s in Symmetry::ALL {
                let twice = apply_symmetry(s, &apply_symmetry(s, &c).unwrap()).unwrap();
                prop_assert_eq!(&twice, &c);
            }
        }

        #[test]
        fn periodic_bond_mass(
            d0 in rate_strategy(), l0 in rate_strategy(), d1 in rate_strategy(),
            l1 in rate_strategy(), p in rate_strategy(), q in rate_strategy(), len in 2usize..40,
        ) {
            let r = rates((d0, l0, d1, l1, p, q));
            let bonds = enumerate_bonds(&Kernel::TwoLane(r), &LaneGeometry::two_lane_ring(len).unwrap()).unwrap();
            let mass: f64 = bonds.iter().map(|b| b.rate).sum();
            prop_assert!((mass - len as f64 * r.column_mass()).abs() <= 1e-9 * (1.0 + mass));
        }
    }
}
