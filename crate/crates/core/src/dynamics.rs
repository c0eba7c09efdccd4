//! Continuous-time simulation on a finite window, single and basic-coupled.
//!
//! Every directed bond of positive rate carries its own Poisson clock. The
//! superposition has constant total rate `Lambda`, so the engine draws
//! `Exp(Lambda)` waiting times and picks a bond with probability
//! `rate / Lambda`. The jump is applied iff the source is occupied and the
//! target is vacant. In a coupled run both copies read the same clocks.

use rand::Rng;
use rand_distr::{Distribution, Exp, WeightedAliasIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{enumerate_bonds, DirectedRate, Kernel};
use crate::lattice::{Config, LaneGeometry, Site};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy)]
struct Slot {
    from: usize,
    to: usize,
    /// Column index of the cut crossed by a horizontal bond and the sign of
    /// the crossing (+1 rightwards).
    cut: Option<(usize, i8)>,
}

/// Bond table and clock of one kernel on one window.
#[derive(Debug, Clone)]
pub struct Simulator {
    kernel: Kernel,
    geometry: LaneGeometry,
    bonds: Vec<DirectedRate>,
    slots: Vec<Slot>,
    alias: Option<WeightedAliasIndex<f64>>,
    total_rate: f64,
}

impl Simulator {
    pub fn new(kernel: &Kernel, geometry: &LaneGeometry) -> Result<Self> {
        let bonds = enumerate_bonds(kernel, geometry)?;
        let g = *geometry;
        let pos = |s: Site| -> Result<usize> {
            Ok(g.bit_position(s.lane, g.column_index(s.column)?))
        };
        let mut slots = Vec::with_capacity(bonds.len());
        for b in &bonds {
            let cut = if b.from.lane != b.to.lane {
                None
            } else if g.right_of(b.from.column) == Some(b.to.column) {
                Some((g.column_index(b.from.column)?, 1))
            } else {
                Some((g.column_index(b.to.column)?, -1))
            };
            slots.push(Slot {
                from: pos(b.from)?,
                to: pos(b.to)?,
                cut,
            });
        }
        let total_rate: f64 = bonds.iter().map(|b| b.rate).sum();
        let alias = if bonds.is_empty() {
            None
        } else {
            Some(
                WeightedAliasIndex::new(bonds.iter().map(|b| b.rate).collect())
                    .map_err(|e| Error::InvalidRates(format!("bond weights: {e}")))?,
            )
        };
        Ok(Self {
            kernel: kernel.clone(),
            geometry: g,
            bonds,
            slots,
            alias,
            total_rate,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn geometry(&self) -> &LaneGeometry {
        &self.geometry
    }

    pub fn bonds(&self) -> &[DirectedRate] {
        &self.bonds
    }

    /// `Lambda`, the sum of all bond rates.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    fn check_config(&self, c: &Config) -> Result<()> {
        if c.geometry() != &self.geometry {
            return Err(Error::IncompatibleGeometry(format!(
                "configuration lives on {}, simulator on {}",
                c.geometry(),
                self.geometry
            )));
        }
        Ok(())
    }

    /// Drives the clock up to `horizon`, calling `on_event` for each bond
    /// ring and `on_snapshot` at each snapshot time.
    fn drive<R: Rng + ?Sized>(
        &self,
        horizon: f64,
        snapshots: &[f64],
        rng: &mut R,
        mut on_event: impl FnMut(f64, usize) -> bool,
        mut on_snapshot: impl FnMut(f64),
    ) -> Result<u64> {
        check_times(horizon, snapshots)?;
        let mut next_snap = 0;
        let mut rings = 0u64;
        if let Some(alias) = &self.alias {
            let exp = Exp::new(self.total_rate)
                .map_err(|e| Error::InvalidRates(format!("total rate: {e}")))?;
            let mut t = 0.0;
            loop {
                let next = t + exp.sample(rng);
                while next_snap < snapshots.len() && snapshots[next_snap] < next {
                    on_snapshot(snapshots[next_snap]);
                    next_snap += 1;
                }
                if next > horizon {
                    break;
                }
                t = next;
                rings += 1;
                if !on_event(t, alias.sample(rng)) {
                    break;
                }
            }
        }
        for &s in &snapshots[next_snap..] {
            on_snapshot(s);
        }
        Ok(rings)
    }

    /// Single run with observers invoked at the snapshot times.
    pub fn run_observed<R: Rng + ?Sized>(
        &self,
        initial: &Config,
        horizon: f64,
        snapshots: &[f64],
        rng: &mut R,
        observer: &mut dyn Observer,
    ) -> Result<RunSummary> {
        self.check_config(initial)?;
        let mut config = initial.clone();
        let mut crossings = vec![0i64; self.geometry.length()];
        let mut accepted = 0u64;
        let cell = std::cell::RefCell::new((&mut config, &mut crossings, &mut accepted));
        let rings = self.drive(
            horizon,
            snapshots,
            rng,
            |_, k| {
                let mut st = cell.borrow_mut();
                let s = self.slots[k];
                if st.0.bit(s.from) && !st.0.bit(s.to) {
                    st.0.set_bit(s.from, false);
                    st.0.set_bit(s.to, true);
                    *st.2 += 1;
                    if let Some((c, sign)) = s.cut {
                        st.1[c] += i64::from(sign);
                    }
                }
                true
            },
            |t| {
                let st = cell.borrow();
                observer.observe(t, st.0, st.1);
            },
        )?;
        Ok(RunSummary {
            rings,
            accepted,
            final_config: config,
            crossings,
        })
    }

    /// Single run recording configurations at the snapshot times.
    pub fn run<R: Rng + ?Sized>(
        &self,
        initial: &Config,
        horizon: f64,
        snapshots: &[f64],
        rng: &mut R,
    ) -> Result<Trajectory> {
        let mut rec = Recorder::default();
        let summary = self.run_observed(initial, horizon, snapshots, rng, &mut rec)?;
        Ok(Trajectory {
            horizon,
            snapshots: rec.snapshots,
            rings: summary.rings,
            accepted: summary.accepted,
            crossings: summary.crossings,
            final_config: summary.final_config,
        })
    }

    pub fn run_seeded(
        &self,
        initial: &Config,
        horizon: f64,
        snapshots: &[f64],
        seed: u64,
    ) -> Result<Trajectory> {
        self.run(initial, horizon, snapshots, &mut rng_from_seed(seed))
    }

    /// Basic coupling of two copies driven by the same clocks.
    pub fn run_coupled<R: Rng + ?Sized>(
        &self,
        initial: &CoupledConfig,
        horizon: f64,
        snapshots: &[f64],
        rng: &mut R,
    ) -> Result<CoupledTrajectory> {
        self.check_config(&initial.eta)?;
        self.check_config(&initial.xi)?;
        let mut cc = initial.clone();
        let mut out = CoupledTrajectory {
            horizon,
            snapshots: Vec::new(),
            rings: 0,
            coalescences: 0,
            discrepancy_increases: 0,
            order_violations: 0,
            discrepancy_path: vec![(0.0, cc.discrepancy_count())],
            final_state: initial.clone(),
        };
        let ordered = cc.ordering();
        let cell = std::cell::RefCell::new((&mut cc, &mut out));
        let rings = self.drive(
            horizon,
            snapshots,
            rng,
            |t, k| {
                let mut st = cell.borrow_mut();
                let (cc, out) = &mut *st;
                let s = self.slots[k];
                let before = (cc.pair_at(s.from), cc.pair_at(s.to));
                if !cc.apply(s.from, s.to) {
                    return true;
                }
                let after = (cc.pair_at(s.from), cc.pair_at(s.to));
                let (eb, xb) = disc_counts(before);
                let (ea, xa) = disc_counts(after);
                if ea > eb || xa > xb {
                    out.discrepancy_increases += 1;
                }
                if ea + xa + 2 == eb + xb {
                    out.coalescences += 1;
                }
                if ea + xa != eb + xb {
                    let d = out.discrepancy_path.last().map_or(0, |x| x.1) + ea + xa - eb - xb;
                    out.discrepancy_path.push((t, d));
                }
                let local_break = match ordered {
                    Some(Ordering::Le) => ea > 0,
                    Some(Ordering::Ge) => xa > 0,
                    None => false,
                };
                if local_break {
                    out.order_violations += 1;
                }
                true
            },
            |t| {
                let mut st = cell.borrow_mut();
                let snap = (t, st.0.clone());
                st.1.snapshots.push(snap);
            },
        )?;
        out.rings = rings;
        out.final_state = cc;
        Ok(out)
    }

    /// Follows one discrepancy until it coalesces or the horizon is reached.
    ///
    /// The tag starts at `start`, or at the first discrepancy in lane-major
    /// order. Horizontal moves are also accumulated as an unwrapped
    /// displacement so that speeds on a ring are meaningful.
    pub fn track_tagged_discrepancy<R: Rng + ?Sized>(
        &self,
        initial: &CoupledConfig,
        start: Option<Site>,
        horizon: f64,
        rng: &mut R,
    ) -> Result<TaggedPath> {
        self.check_config(&initial.eta)?;
        self.check_config(&initial.xi)?;
        let g = self.geometry;
        let start = match start {
            Some(s) => {
                g.check_site(s)?;
                if initial.mark(s) == Mark::Coupled || initial.mark(s) == Mark::Hole {
                    return Err(Error::NoDiscrepancy);
                }
                s
            }
            None => initial.discrepancy_sites().next().ok_or(Error::NoDiscrepancy)?,
        };
        let mut cc = initial.clone();
        let mut tag = g.bit_position(start.lane, g.column_index(start.column)?);
        let kind = initial.mark(start);
        let mut path = TaggedPath {
            steps: vec![TaggedStep {
                time: 0.0,
                site: start,
                displacement: 0,
            }],
            coalesced_at: None,
            horizon,
        };
        let site_of = |pos: usize| -> Site {
            let wpl = g.words_per_lane() * 64;
            Site::new(g.column_at(pos % wpl), pos / wpl)
        };
        let mut displacement = 0i64;
        let kind_bits = |k: Mark| match k {
            Mark::EtaDisc => (true, false),
            _ => (false, true),
        };
        let want = kind_bits(kind);
        self.drive(
            horizon,
            &[],
            rng,
            |t, k| {
                let s = self.slots[k];
                if s.from != tag && s.to != tag {
                    cc.apply(s.from, s.to);
                    return true;
                }
                if !cc.apply(s.from, s.to) {
                    return true;
                }
                let other = if s.from == tag { s.to } else { s.from };
                if cc.pair_at(tag) == want {
                    return true;
                }
                if cc.pair_at(other) == want {
                    if let Some((_, sign)) = s.cut {
                        let forward = other == s.to;
                        displacement += if forward { i64::from(sign) } else { -i64::from(sign) };
                    }
                    tag = other;
                    path.steps.push(TaggedStep {
                        time: t,
                        site: site_of(tag),
                        displacement,
                    });
                    true
                } else {
                    path.coalesced_at = Some(t);
                    false
                }
            },
            |_| {},
        )?;
        Ok(path)
    }
}

fn check_times(horizon: f64, snapshots: &[f64]) -> Result<()> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be finite and >= 0")));
    }
    if snapshots.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
        return Err(Error::InvalidArgument("snapshot times must lie in [0, T]".into()));
    }
    if snapshots.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("snapshot times must be sorted".into()));
    }
    Ok(())
}

fn disc_counts(pairs: ((bool, bool), (bool, bool))) -> (usize, usize) {
    let e = usize::from(pairs.0 .0 && !pairs.0 .1) + usize::from(pairs.1 .0 && !pairs.1 .1);
    let x = usize::from(!pairs.0 .0 && pairs.0 .1) + usize::from(!pairs.1 .0 && pairs.1 .1);
    (e, x)
}

/// Callback at snapshot times. `crossings[k]` is the net number of jumps
/// across the bond right of column index `k` so far.
pub trait Observer {
    fn observe(&mut self, time: f64, config: &Config, crossings: &[i64]);
}

impl<F: FnMut(f64, &Config, &[i64])> Observer for F {
    fn observe(&mut self, time: f64, config: &Config, crossings: &[i64]) {
        self(time, config, crossings)
    }
}

#[derive(Debug, Default)]
struct Recorder {
    snapshots: Vec<Snapshot>,
}

impl Observer for Recorder {
    fn observe(&mut self, time: f64, config: &Config, _: &[i64]) {
        self.snapshots.push(Snapshot {
            time,
            config: config.clone(),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub config: Config,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Clock rings, accepted or not.
    pub rings: u64,
    pub accepted: u64,
    pub final_config: Config,
    pub crossings: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub horizon: f64,
    pub snapshots: Vec<Snapshot>,
    pub rings: u64,
    pub accepted: u64,
    /// Net crossings per cut, indexed by the column index left of the cut.
    pub crossings: Vec<i64>,
    pub final_config: Config,
}

/// Convenience wrapper around [`Simulator::run_seeded`].
pub fn run(
    initial: &Config,
    kernel: &Kernel,
    horizon: f64,
    snapshots: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    Simulator::new(kernel, initial.geometry())?.run_seeded(initial, horizon, snapshots, seed)
}

/// Per-site state of a coupled pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    /// `eta = 1 > xi = 0`.
    EtaDisc,
    /// `xi = 1 > eta = 0`.
    XiDisc,
    Coupled,
    Hole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ordering {
    Le,
    Ge,
}

/// Relation between the two copies of a coupled pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    Equal,
    Le,
    Ge,
    /// The sup-inf relation with the window-relative tail conditions.
    BowtieCandidate,
    SupInf,
    Unordered,
}

/// Two configurations on the same window. The discrepancy registry is read
/// off the pair, so it is consistent by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledConfig {
    pub eta: Config,
    pub xi: Config,
}

impl CoupledConfig {
    pub fn new(eta: Config, xi: Config) -> Result<Self> {
        if eta.geometry() != xi.geometry() {
            return Err(Error::IncompatibleGeometry(format!(
                "eta on {}, xi on {}",
                eta.geometry(),
                xi.geometry()
            )));
        }
        Ok(Self { eta, xi })
    }

    pub fn geometry(&self) -> &LaneGeometry {
        self.eta.geometry()
    }

    pub fn mark(&self, site: Site) -> Mark {
        match (self.eta.occupied(site), self.xi.occupied(site)) {
            (true, false) => Mark::EtaDisc,
            (false, true) => Mark::XiDisc,
            (true, true) => Mark::Coupled,
            (false, false) => Mark::Hole,
        }
    }

    fn pair_at(&self, pos: usize) -> (bool, bool) {
        (self.eta.bit(pos), self.xi.bit(pos))
    }

    /// Applies a ring of the bond `from -> to` to both copies. Returns
    /// whether either copy moved.
    fn apply(&mut self, from: usize, to: usize) -> bool {
        let mut moved = false;
        for c in [&mut self.eta, &mut self.xi] {
            if c.bit(from) && !c.bit(to) {
                c.set_bit(from, false);
                c.set_bit(to, true);
                moved = true;
            }
        }
        moved
    }

    pub fn discrepancy_sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.geometry()
            .sites()
            .filter(move |&s| matches!(self.mark(s), Mark::EtaDisc | Mark::XiDisc))
    }

    pub fn discrepancy_count(&self) -> usize {
        self.eta.hamming(&self.xi)
    }

    fn ordering(&self) -> Option<Ordering> {
        if self.eta.le(&self.xi) {
            Some(Ordering::Le)
        } else if self.xi.le(&self.eta) {
            Some(Ordering::Ge)
        } else {
            None
        }
    }

    /// Number of discrepancies in columns `m..=n`.
    pub fn count_discrepancies(&self, m: i64, n: i64) -> Result<usize> {
        let g = self.geometry();
        g.column_index(m)?;
        g.column_index(n)?;
        if m > n {
            return Err(Error::InvalidArgument(format!("empty column range {m}..={n}")));
        }
        Ok((m..=n)
            .flat_map(|z| (0..g.n_lanes()).map(move |i| Site::new(z, i)))
            .filter(|&s| self.eta.occupied(s) != self.xi.occupied(s))
            .count())
    }

    /// Order relation between the copies, for two-lane windows.
    pub fn classify(&self) -> Result<PairClass> {
        let g = self.geometry();
        if g.n_lanes() != 2 {
            return Err(Error::IncompatibleGeometry(
                "pair classification is defined for two lanes".into(),
            ));
        }
        if self.eta == self.xi {
            return Ok(PairClass::Equal);
        }
        match self.ordering() {
            Some(Ordering::Le) => return Ok(PairClass::Le),
            Some(Ordering::Ge) => return Ok(PairClass::Ge),
            None => {}
        }
        let discs = |lane: usize| -> Vec<(i64, Mark)> {
            g.columns()
                .map(|z| (z, self.mark(Site::new(z, lane))))
                .filter(|(_, m)| matches!(m, Mark::EtaDisc | Mark::XiDisc))
                .collect()
        };
        let (lane0, lane1) = (discs(0), discs(1));
        let (Some(&(x, top)), Some(&(y, bottom))) = (lane1.last(), lane0.first()) else {
            return Ok(PairClass::Unordered);
        };
        // a single discrepancy type per lane gives the lane-wise order
        let uniform = |v: &[(i64, Mark)], m: Mark| v.iter().all(|&(_, k)| k == m);
        let sup_inf = x < y && top != bottom && uniform(&lane1, top) && uniform(&lane0, bottom);
        if !sup_inf {
            return Ok(PairClass::Unordered);
        }
        let coupled_right = g
            .columns()
            .filter(|&z| z > x)
            .all(|z| self.mark(Site::new(z, 1)) == Mark::Coupled);
        let holes_left = g
            .columns()
            .filter(|&z| z < y)
            .all(|z| self.mark(Site::new(z, 0)) == Mark::Hole);
        Ok(if coupled_right && holes_left {
            PairClass::BowtieCandidate
        } else {
            PairClass::SupInf
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledTrajectory {
    pub horizon: f64,
    pub snapshots: Vec<(f64, CoupledConfig)>,
    pub rings: u64,
    /// Events that merged an opposite pair.
    pub coalescences: u64,
    /// Events after which either discrepancy count grew. Always 0.
    pub discrepancy_increases: u64,
    /// Events breaking an initial pointwise order. Always 0.
    pub order_violations: u64,
    /// `(time, D)` at time 0 and at every change of the discrepancy count.
    pub discrepancy_path: Vec<(f64, usize)>,
    pub final_state: CoupledConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedStep {
    pub time: f64,
    pub site: Site,
    /// Net horizontal steps since time 0.
    pub displacement: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedPath {
    pub steps: Vec<TaggedStep>,
    pub coalesced_at: Option<f64>,
    pub horizon: f64,
}

impl TaggedPath {
    /// Largest `|displacement| / T`, with `T` the coalescence time or horizon.
    pub fn max_speed(&self) -> f64 {
        let t = self.coalesced_at.unwrap_or(self.horizon);
        if t <= 0.0 {
            return 0.0;
        }
        self.steps
            .iter()
            .map(|s| s.displacement.unsigned_abs())
            .max()
            .unwrap_or(0) as f64
            / t
    }
}
