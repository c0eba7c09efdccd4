//! Finite windows of the lattice `Z x W` and occupancy configurations on them.
//!
//! Two horizontal boundary conventions are supported:
//!
//! * [`HBoundary::Periodic`]: columns `0..L`, indexed modulo `L`. Translation
//!   invariant product measures are exactly invariant on such a ring.
//! * [`HBoundary::Closed`]: columns `-M..=M` with `L = 2M + 1`. No horizontal
//!   jump crosses the ends; the exterior is read as empty to the left and
//!   full to the right, which is the support convention of blocking measures.
//!
//! Occupancies are bit-packed per lane.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HBoundary {
    Periodic,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VTopology {
    /// Two lanes with directed vertical rates `p` (0 to 1) and `q` (1 to 0).
    TwoLane,
    /// Lanes on the discrete torus `T_n` with a translation invariant kernel.
    Torus,
}

/// A site `(z, i)`: column `z` on lane `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub column: i64,
    pub lane: usize,
}

impl Site {
    pub const fn new(column: i64, lane: usize) -> Self {
        Self { column, lane }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.column, self.lane)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GeometryRecord", into = "GeometryRecord")]
pub struct LaneGeometry {
    n_lanes: usize,
    length: usize,
    h_boundary: HBoundary,
    v_topology: VTopology,
}

#[derive(Serialize, Deserialize)]
struct GeometryRecord {
    n_lanes: usize,
    length: usize,
    h_boundary: HBoundary,
    v_topology: VTopology,
}

impl TryFrom<GeometryRecord> for LaneGeometry {
    type Error = Error;

    fn try_from(r: GeometryRecord) -> Result<Self> {
        LaneGeometry::new(r.n_lanes, r.length, r.h_boundary, r.v_topology)
    }
}

impl From<LaneGeometry> for GeometryRecord {
    fn from(g: LaneGeometry) -> Self {
        GeometryRecord {
            n_lanes: g.n_lanes,
            length: g.length,
            h_boundary: g.h_boundary,
            v_topology: g.v_topology,
        }
    }
}

impl LaneGeometry {
    /// Validates the lane/column counts against the boundary and topology.
    ///
    /// Closed windows need an odd length so that they are centered on column 0.
    pub fn new(
        n_lanes: usize,
        length: usize,
        h_boundary: HBoundary,
        v_topology: VTopology,
    ) -> Result<Self> {
        if n_lanes < 2 {
            return Err(Error::InvalidGeometry(format!(
                "need at least 2 lanes, got {n_lanes}"
            )));
        }
        if v_topology == VTopology::TwoLane && n_lanes != 2 {
            return Err(Error::InvalidGeometry(format!(
                "two-lane topology with {n_lanes} lanes"
            )));
        }
        match h_boundary {
            HBoundary::Periodic if length < 2 => Err(Error::InvalidGeometry(format!(
                "periodic window needs at least 2 columns, got {length}"
            ))),
            HBoundary::Closed if length.is_multiple_of(2) => Err(Error::InvalidGeometry(format!(
                "closed window length must be odd (2M+1), got {length}"
            ))),
            _ => Ok(Self {
                n_lanes,
                length,
                h_boundary,
                v_topology,
            }),
        }
    }

    pub fn two_lane_ring(length: usize) -> Result<Self> {
        Self::new(2, length, HBoundary::Periodic, VTopology::TwoLane)
    }

    /// Two-lane window on columns `-half_width..=half_width`.
    pub fn two_lane_closed(half_width: usize) -> Result<Self> {
        Self::new(2, 2 * half_width + 1, HBoundary::Closed, VTopology::TwoLane)
    }

    pub fn torus_ring(n_lanes: usize, length: usize) -> Result<Self> {
        Self::new(n_lanes, length, HBoundary::Periodic, VTopology::Torus)
    }

    pub fn torus_closed(n_lanes: usize, half_width: usize) -> Result<Self> {
        Self::new(
            n_lanes,
            2 * half_width + 1,
            HBoundary::Closed,
            VTopology::Torus,
        )
    }

    pub fn n_lanes(&self) -> usize {
        self.n_lanes
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn h_boundary(&self) -> HBoundary {
        self.h_boundary
    }

    pub fn v_topology(&self) -> VTopology {
        self.v_topology
    }

    pub fn is_periodic(&self) -> bool {
        self.h_boundary == HBoundary::Periodic
    }

    pub fn n_sites(&self) -> usize {
        self.n_lanes * self.length
    }

    pub fn min_column(&self) -> i64 {
        match self.h_boundary {
            HBoundary::Periodic => 0,
            HBoundary::Closed => -((self.length / 2) as i64),
        }
    }

    pub fn max_column(&self) -> i64 {
        self.min_column() + self.length as i64 - 1
    }

    pub fn columns(&self) -> impl Iterator<Item = i64> + Clone {
        self.min_column()..=self.max_column()
    }

    /// Sites in lane-major order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.n_lanes).flat_map(move |lane| self.columns().map(move |z| Site::new(z, lane)))
    }

    /// Position `0..L` of column `z` inside the window.
    pub fn column_index(&self, z: i64) -> Result<usize> {
        let (min, max) = (self.min_column(), self.max_column());
        if z < min || z > max {
            return Err(Error::ColumnOutOfRange {
                column: z,
                min,
                max,
            });
        }
        Ok((z - min) as usize)
    }

    pub fn column_at(&self, index: usize) -> i64 {
        self.min_column() + index as i64
    }

    pub fn check_lane(&self, lane: usize) -> Result<()> {
        if lane < self.n_lanes {
            Ok(())
        } else {
            Err(Error::LaneOutOfRange {
                lane,
                n_lanes: self.n_lanes,
            })
        }
    }

    pub fn check_site(&self, site: Site) -> Result<()> {
        self.check_lane(site.lane)?;
        self.column_index(site.column).map(|_| ())
    }

    /// Column to the right of `z`, wrapping on a ring; `None` at a closed end.
    pub fn right_of(&self, z: i64) -> Option<i64> {
        if z < self.max_column() {
            Some(z + 1)
        } else if self.is_periodic() {
            Some(self.min_column())
        } else {
            None
        }
    }

    pub(crate) fn words_per_lane(&self) -> usize {
        self.length.div_ceil(64)
    }

    /// Bit position of a site inside the packed occupancy buffer.
    pub(crate) fn bit_position(&self, lane: usize, col_index: usize) -> usize {
        lane * self.words_per_lane() * 64 + col_index
    }

    fn describe(&self) -> String {
        let b = match self.h_boundary {
            HBoundary::Periodic => "periodic",
            HBoundary::Closed => "closed",
        };
        let torus = if self.n_lanes == 2 && self.v_topology == VTopology::Torus {
            ":torus"
        } else {
            ""
        };
        format!("{}x{}:{}{}", self.length, self.n_lanes, b, torus)
    }
}

/// Parses `LxN:periodic` or `LxN:closed`, with an optional `:torus` suffix.
///
/// `N > 2` always means the torus topology. For a closed window `L` is the
/// full odd width `2M + 1`.
impl std::str::FromStr for LaneGeometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("geometry {s:?} is not of the form LxN:periodic|closed"));
        let mut parts = s.trim().split(':');
        let dims = parts.next().ok_or_else(bad)?;
        let boundary = match parts.next().ok_or_else(bad)? {
            "periodic" | "ring" => HBoundary::Periodic,
            "closed" => HBoundary::Closed,
            _ => return Err(bad()),
        };
        let torus = match parts.next() {
            None => false,
            Some("torus") => true,
            Some(_) => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        let (l, n) = dims.split_once(['x', 'X']).ok_or_else(bad)?;
        let length: usize = l.parse().map_err(|_| bad())?;
        let n_lanes: usize = n.parse().map_err(|_| bad())?;
        let topology = if torus || n_lanes > 2 {
            VTopology::Torus
        } else {
            VTopology::TwoLane
        };
        LaneGeometry::new(n_lanes, length, boundary, topology)
    }
}

impl fmt::Display for LaneGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Occupancy field `eta: window -> {0,1}`.
///
/// Lane views and column sums are always computed from the packed bits.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Config {
    geometry: LaneGeometry,
    words: Vec<u64>,
}

impl Config {
    pub fn empty(geometry: LaneGeometry) -> Self {
        let words = vec![0; geometry.words_per_lane() * geometry.n_lanes()];
        Self { geometry, words }
    }

    pub fn full(geometry: LaneGeometry) -> Self {
        let mut c = Self::empty(geometry);
        for site in geometry.sites() {
            c.set_unchecked(site, true);
        }
        c
    }

    /// Builds a configuration from an occupancy predicate.
    pub fn from_fn(geometry: LaneGeometry, mut occupied: impl FnMut(Site) -> bool) -> Self {
        let mut c = Self::empty(geometry);
        for site in geometry.sites() {
            if occupied(site) {
                c.set_unchecked(site, true);
            }
        }
        c
    }

    /// Builds a configuration from one 0/1 vector per lane.
    pub fn from_lanes(geometry: LaneGeometry, lanes: &[Vec<u8>]) -> Result<Self> {
        if lanes.len() != geometry.n_lanes() {
            return Err(Error::InvalidGeometry(format!(
                "{} lanes supplied for {} lanes",
                lanes.len(),
                geometry.n_lanes()
            )));
        }
        let mut c = Self::empty(geometry);
        for (lane, values) in lanes.iter().enumerate() {
            if values.len() != geometry.length() {
                return Err(Error::InvalidGeometry(format!(
                    "lane {lane} has {} columns, expected {}",
                    values.len(),
                    geometry.length()
                )));
            }
            for (k, &v) in values.iter().enumerate() {
                match v {
                    0 => {}
                    1 => c.set_bit(geometry.bit_position(lane, k), true),
                    _ => {
                        return Err(Error::Parse(format!("occupancy {v} is not 0 or 1")));
                    }
                }
            }
        }
        Ok(c)
    }

    pub fn geometry(&self) -> &LaneGeometry {
        &self.geometry
    }

    pub fn get(&self, site: Site) -> Result<bool> {
        self.geometry.check_lane(site.lane)?;
        let k = self.geometry.column_index(site.column)?;
        Ok(self.bit(self.geometry.bit_position(site.lane, k)))
    }

    /// Reads a site assumed to lie in the window.
    pub fn occupied(&self, site: Site) -> bool {
        let k = (site.column - self.geometry.min_column()) as usize;
        self.bit(self.geometry.bit_position(site.lane, k))
    }

    pub fn set(&mut self, site: Site, value: bool) -> Result<()> {
        self.geometry.check_site(site)?;
        self.set_unchecked(site, value);
        Ok(())
    }

    fn set_unchecked(&mut self, site: Site, value: bool) {
        let k = (site.column - self.geometry.min_column()) as usize;
        self.set_bit(self.geometry.bit_position(site.lane, k), value);
    }

    pub(crate) fn bit(&self, pos: usize) -> bool {
        self.words[pos >> 6] >> (pos & 63) & 1 == 1
    }

    pub(crate) fn set_bit(&mut self, pos: usize, value: bool) {
        let mask = 1u64 << (pos & 63);
        if value {
            self.words[pos >> 6] |= mask;
        } else {
            self.words[pos >> 6] &= !mask;
        }
    }


    /// `eta^i` restricted to the window, leftmost column first.
    pub fn lane_view(&self, lane: usize) -> Result<Vec<u8>> {
        self.geometry.check_lane(lane)?;
        Ok((0..self.geometry.length())
            .map(|k| u8::from(self.bit(self.geometry.bit_position(lane, k))))
            .collect())
    }

    /// Number of occupied lanes at column `z`.
    pub fn column_sum(&self, z: i64) -> Result<usize> {
        let k = self.geometry.column_index(z)?;
        Ok((0..self.geometry.n_lanes())
            .filter(|&lane| self.bit(self.geometry.bit_position(lane, k)))
            .count())
    }

    pub fn lane_count(&self, lane: usize) -> usize {
        let w = self.geometry.words_per_lane();
        self.words[lane * w..(lane + 1) * w]
            .iter()
            .map(|x| x.count_ones() as usize)
            .sum()
    }

    pub fn particle_count(&self) -> usize {
        self.words.iter().map(|x| x.count_ones() as usize).sum()
    }

    /// Height functional `sum_{z <= origin} col(z) - sum_{z > origin} (n - col(z))`.
    ///
    /// Only defined on closed windows; on a closed window it equals the
    /// particle count minus a constant, so every jump conserves it.
    pub fn height(&self, origin: i64) -> Result<i64> {
        if self.geometry.is_periodic() {
            return Err(Error::IncompatibleGeometry(
                "height functional is undefined on a ring".into(),
            ));
        }
        self.geometry.column_index(origin)?;
        let n = self.geometry.n_lanes() as i64;
        let right_columns = self.geometry.max_column() - origin;
        Ok(self.particle_count() as i64 - n * right_columns)
    }

    /// [`Config::height`] about column 0.
    pub fn h2(&self) -> Result<i64> {
        self.height(0)
    }

    /// Pointwise order `self <= other`.
    pub fn le(&self, other: &Config) -> bool {
        self.geometry == other.geometry
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| a & !b == 0)
    }

    /// Number of sites where the two configurations differ.
    pub fn hamming(&self, other: &Config) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Horizontal translate `(tau_k eta)(z, i) = eta(z + k, i)`.
    ///
    /// On a closed window the vacated columns are filled with the exterior
    /// convention: empty on the left, full on the right.
    pub fn translate(&self, k: i64) -> Config {
        let g = self.geometry;
        Config::from_fn(g, |site| {
            let z = site.column + k;
            if g.is_periodic() {
                let len = g.length() as i64;
                let zz = (z - g.min_column()).rem_euclid(len) + g.min_column();
                self.occupied(Site::new(zz, site.lane))
            } else if z < g.min_column() {
                false
            } else if z > g.max_column() {
                true
            } else {
                self.occupied(Site::new(z, site.lane))
            }
        })
    }

    pub fn lane_string(&self, lane: usize) -> String {
        (0..self.geometry.length())
            .map(|k| {
                if self.bit(self.geometry.bit_position(lane, k)) {
                    '1'
                } else {
                    '0'
                }
            })
            .collect()
    }
}

impl fmt::Debug for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lanes: Vec<String> = (0..self.geometry.n_lanes())
            .map(|i| self.lane_string(i))
            .collect();
        f.debug_struct("Config")
            .field("geometry", &self.geometry.describe())
            .field("lanes", &lanes)
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct ConfigRecord {
    geometry: LaneGeometry,
    lanes: Vec<String>,
}

impl Serialize for Config {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConfigRecord {
            geometry: self.geometry,
            lanes: (0..self.geometry.n_lanes())
                .map(|i| self.lane_string(i))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Config {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let record = ConfigRecord::deserialize(d)?;
        let lanes: Vec<Vec<u8>> = record
            .lanes
            .iter()
            .map(|s| {
                s.chars()
                    .map(|ch| match ch {
                        '0' => Ok(0),
                        '1' => Ok(1),
                        other => Err(serde::de::Error::custom(format!(
                            "invalid occupancy character {other:?}"
                        ))),
                    })
                    .collect()
            })
            .collect::<std::result::Result<_, _>>()?;
        Config::from_lanes(record.geometry, &lanes).map_err(serde::de::Error::custom)
    }
}
