//! Statistical and exact checks of invariance claims.
//!
//! Replicas run in parallel; replica `k` draws everything (initial sample and
//! dynamics) from the stream `replica_rng(seed, k)`, so reports do not depend
//! on the thread count.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dynamics::{CoupledConfig, Simulator, Trajectory};
use crate::error::{check_range, Error, Result};
use crate::kernels::{enumerate_bonds, Kernel};
use crate::lattice::{Config, HBoundary, LaneGeometry, Site, VTopology};
use crate::measures::{single_lane_profile, tasep_profile, MeasureSpec};
use crate::rng::{replica_rng, SimRng};

/// Replica count, horizon, master seed and significance level of a test.
/// `sigmas` is the half-width, in standard errors, of interval checks
/// against exact targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSettings {
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub alpha: f64,
    pub sigmas: f64,
}

impl TestSettings {
    pub fn new(horizon: f64, replicas: usize, seed: u64) -> Self {
        Self {
            horizon,
            replicas,
            seed,
            alpha: 0.01,
            sigmas: 3.0,
        }
    }

    /// Splits a family-wise level `alpha` evenly over `checks` checks:
    /// each stationarity test runs at `alpha / checks` and each interval
    /// check gets the matching two-sided width.
    pub fn family(self, alpha: f64, checks: usize) -> Self {
        let per_check = alpha / checks.max(1) as f64;
        Self {
            alpha: per_check,
            sigmas: bonferroni_critical_z(per_check, 1),
            ..self
        }
    }

    fn check(&self) -> Result<()> {
        if self.replicas < 2 {
            return Err(Error::InvalidArgument("at least two replicas are needed".into()));
        }
        check_range("alpha", self.alpha, f64::MIN_POSITIVE, 1.0)?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad horizon {}", self.horizon)));
        }
        Ok(())
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            samples: n,
        }
    }

    /// `(mean - target) / stderr`, infinite when a zero-variance estimate
    /// misses the target.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = self.mean - target;
        if self.stderr > 0.0 {
            diff / self.stderr
        } else if diff.abs() <= 1e-12 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        self.z_score(target).abs() <= sigmas
    }
}

/// Two-sided Bonferroni threshold for `tests` simultaneous z-tests.
pub fn bonferroni_critical_z(alpha: f64, tests: usize) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(1.0 - alpha / (2.0 * tests.max(1) as f64))
}

fn replicate<T: Send>(
    settings: &TestSettings,
    f: impl Fn(&mut SimRng) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..settings.replicas as u64)
        .into_par_iter()
        .map(|k| f(&mut replica_rng(settings.seed, k)))
        .collect()
}

/// Named scalar observables of a configuration: per-lane density, per-lane
/// horizontal nearest-neighbour products, vertical products between
/// neighbouring lanes and, on closed windows, per-lane densities of the four
/// column quarters.
pub fn observables(config: &Config) -> Vec<(String, f64)> {
    let g = config.geometry();
    let n = g.n_lanes();
    let len = g.length() as f64;
    let mut out = Vec::new();
    for lane in 0..n {
        out.push((format!("density[{lane}]"), config.lane_count(lane) as f64 / len));
    }
    for lane in 0..n {
        let mut pairs = 0usize;
        let mut bonds = 0usize;
        for z in g.columns() {
            if let Some(y) = g.right_of(z) {
                bonds += 1;
                pairs += usize::from(
                    config.occupied(Site::new(z, lane)) && config.occupied(Site::new(y, lane)),
                );
            }
        }
        out.push((format!("hpair[{lane}]"), pairs as f64 / bonds.max(1) as f64));
    }
    let vertical: Vec<(usize, usize)> = if g.v_topology() == VTopology::TwoLane {
        vec![(0, 1)]
    } else {
        (0..n).map(|i| (i, (i + 1) % n)).collect()
    };
    for (a, b) in vertical {
        let both = g
            .columns()
            .filter(|&z| config.occupied(Site::new(z, a)) && config.occupied(Site::new(z, b)))
            .count();
        out.push((format!("vpair[{a},{b}]"), both as f64 / len));
    }
    if g.h_boundary() == HBoundary::Closed && g.length() >= 4 {
        let cols: Vec<i64> = g.columns().collect();
        for lane in 0..n {
            for q in 0..4 {
                let chunk = &cols[q * cols.len() / 4..(q + 1) * cols.len() / 4];
                let occ = chunk
                    .iter()
                    .filter(|&&z| config.occupied(Site::new(z, lane)))
                    .count();
                out.push((format!("quarter[{lane}][{q}]"), occ as f64 / chunk.len() as f64));
            }
        }
    }
    out
}

/// Paired comparison of one observable between two times or two lanes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub first: Estimate,
    pub second: Estimate,
    pub difference: Estimate,
    pub z: f64,
    pub significant: bool,
}

fn paired_comparisons(
    names: &[String],
    first: &[Vec<f64>],
    second: &[Vec<f64>],
    critical: f64,
) -> Vec<Comparison> {
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let a: Vec<f64> = first.iter().map(|v| v[k]).collect();
            let b: Vec<f64> = second.iter().map(|v| v[k]).collect();
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y - x).collect();
            let difference = Estimate::from_samples(&d);
            let z = difference.z_score(0.0);
            Comparison {
                name: name.clone(),
                first: Estimate::from_samples(&a),
                second: Estimate::from_samples(&b),
                difference,
                z,
                significant: z.abs() > critical,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub settings: TestSettings,
    /// Time 0 in `first`, time `T` in `second`.
    pub comparisons: Vec<Comparison>,
    pub critical_z: f64,
    pub passed: bool,
    /// Per-lane densities at time `T`.
    pub lane_density: Vec<Estimate>,
    /// Current per cut and unit time, on rings.
    pub current: Option<Estimate>,
    /// Snapshots whose particle count differs from the initial one.
    pub count_changes: u64,
    /// Smallest and largest `H2` seen at the snapshots, on closed two-lane
    /// windows.
    pub height_range: Option<(i64, i64)>,
}

const CONSERVATION_SNAPSHOTS: usize = 8;

/// Paired z-tests of each observable between time 0 and time `T`,
/// Bonferroni-corrected at level `alpha`.
pub fn stationarity_test(
    spec: &MeasureSpec,
    kernel: &Kernel,
    geometry: &LaneGeometry,
    settings: &TestSettings,
) -> Result<StationarityReport> {
    settings.check()?;
    spec.check(geometry)?;
    let sim = Simulator::new(kernel, geometry)?;
    let t = settings.horizon;
    let snaps: Vec<f64> = (1..=CONSERVATION_SNAPSHOTS)
        .map(|k| t * k as f64 / CONSERVATION_SNAPSHOTS as f64)
        .collect();
    let track_height =
        geometry.h_boundary() == HBoundary::Closed && geometry.v_topology() == VTopology::TwoLane;

    struct Replica {
        start: Vec<f64>,
        end: Vec<f64>,
        lanes: Vec<f64>,
        current: f64,
        count_changes: u64,
        heights: (i64, i64),
    }

    let runs = replicate(settings, |rng| {
        let initial = spec.sample(geometry, rng)?;
        let start: Vec<f64> = observables(&initial).into_iter().map(|x| x.1).collect();
        let count0 = initial.particle_count();
        let mut count_changes = 0u64;
        let h0 = if track_height { initial.h2()? } else { 0 };
        let mut heights = (h0, h0);
        let mut watch = |_: f64, c: &Config, _: &[i64]| {
            if c.particle_count() != count0 {
                count_changes += 1;
            }
            if track_height {
                let h = c.h2().expect("closed window");
                heights = (heights.0.min(h), heights.1.max(h));
            }
        };
        let summary = sim.run_observed(&initial, t, &snaps, rng, &mut watch)?;
        let fin = &summary.final_config;
        let current = if geometry.is_periodic() && t > 0.0 {
            summary.crossings.iter().sum::<i64>() as f64 / (geometry.length() as f64 * t)
        } else {
            0.0
        };
        Ok(Replica {
            start,
            end: observables(fin).into_iter().map(|x| x.1).collect(),
            lanes: (0..geometry.n_lanes())
                .map(|i| fin.lane_count(i) as f64 / geometry.length() as f64)
                .collect(),
            current,
            count_changes,
            heights,
        })
    })?;

    let names: Vec<String> = observables(&Config::empty(*geometry))
        .into_iter()
        .map(|x| x.0)
        .collect();
    let critical_z = bonferroni_critical_z(settings.alpha, names.len());
    let start: Vec<Vec<f64>> = runs.iter().map(|r| r.start.clone()).collect();
    let end: Vec<Vec<f64>> = runs.iter().map(|r| r.end.clone()).collect();
    let comparisons = paired_comparisons(&names, &start, &end, critical_z);
    let passed = comparisons.iter().all(|c| !c.significant);
    let lane_density = (0..geometry.n_lanes())
        .map(|i| Estimate::from_samples(&runs.iter().map(|r| r.lanes[i]).collect::<Vec<_>>()))
        .collect();
    let current = (geometry.is_periodic() && t > 0.0).then(|| {
        Estimate::from_samples(&runs.iter().map(|r| r.current).collect::<Vec<_>>())
    });
    let height_range = track_height.then(|| {
        runs.iter().fold((i64::MAX, i64::MIN), |acc, r| {
            (acc.0.min(r.heights.0), acc.1.max(r.heights.1))
        })
    });
    Ok(StationarityReport {
        settings: *settings,
        comparisons,
        critical_z,
        passed,
        lane_density,
        current,
        count_changes: runs.iter().map(|r| r.count_changes).sum(),
        height_range,
    })
}

/// Doubles the horizon from `start` until `detects` returns true, giving up
/// beyond `max`.
pub fn tune_horizon(
    start: f64,
    max: f64,
    mut detects: impl FnMut(f64) -> Result<bool>,
) -> Result<Option<f64>> {
    if start.is_nan() || start <= 0.0 {
        return Err(Error::InvalidArgument("the starting horizon must be positive".into()));
    }
    let mut t = start;
    while t <= max {
        if detects(t)? {
            return Ok(Some(t));
        }
        t *= 2.0;
    }
    Ok(None)
}

/// Largest violation of `rho_x (1 - rho_y) pi(x, y) = rho_y (1 - rho_x) pi(y, x)`
/// over all bonds, for the product measure underlying `spec`.
pub fn detailed_balance_check(
    spec: &MeasureSpec,
    kernel: &Kernel,
    geometry: &LaneGeometry,
) -> Result<f64> {
    let bonds = enumerate_bonds(kernel, geometry)?;
    let rate: HashMap<(Site, Site), f64> = bonds.iter().map(|b| ((b.from, b.to), b.rate)).collect();
    let mut worst = 0.0f64;
    for b in &bonds {
        let (x, hx) = spec.product_density(geometry, b.from)?;
        let (y, hy) = spec.product_density(geometry, b.to)?;
        let back = rate.get(&(b.to, b.from)).copied().unwrap_or(0.0);
        worst = worst.max((x * hy * b.rate - y * hx * back).abs());
    }
    Ok(worst)
}

/// Detailed-balance residual of a single-lane profile on the columns
/// `lo..=hi`: the reversible profile when `l > 0`, the step profile at `n`
/// otherwise.
pub fn single_lane_detailed_balance(d: f64, l: f64, c: f64, n: i64, lo: i64, hi: i64) -> Result<f64> {
    let density = |x: i64| -> Result<(f64, f64)> {
        if l > 0.0 {
            single_lane_profile(d, l, c, x - n)
        } else {
            Ok(tasep_profile(n, c, x))
        }
    };
    let mut worst = 0.0f64;
    for x in lo..hi {
        let (a, ha) = density(x)?;
        let (b, hb) = density(x + 1)?;
        worst = worst.max((a * hb * d - b * ha * l).abs());
    }
    Ok(worst)
}

/// Whether no bond has an occupied source and a vacant target.
pub fn absorbing_state_check(config: &Config, kernel: &Kernel) -> Result<bool> {
    Ok(enumerate_bonds(kernel, config.geometry())?
        .iter()
        .all(|b| !config.occupied(b.from) || config.occupied(b.to)))
}

/// Net crossings per unit time across `cut`, or averaged over every cut of
/// a ring when `cut` is `None`, with the spread taken across trajectories.
pub fn empirical_flux(trajectories: &[Trajectory], cut: Option<i64>) -> Result<Estimate> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidArgument("no trajectories".into()))?;
    let g = *first.final_config.geometry();
    let index = match cut {
        Some(z) => {
            let k = g.column_index(z)?;
            if g.right_of(z).is_none() {
                return Err(Error::InvalidArgument(format!(
                    "column {z} is the right end of a closed window"
                )));
            }
            Some(k)
        }
        None if g.is_periodic() => None,
        None => {
            return Err(Error::InvalidArgument(
                "averaging over all cuts needs a ring".into(),
            ))
        }
    };
    let mut xs = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        if t.final_config.geometry() != &g || t.horizon <= 0.0 {
            return Err(Error::InvalidArgument(
                "trajectories must share a geometry and have positive horizons".into(),
            ));
        }
        xs.push(match index {
            Some(k) => t.crossings[k] as f64 / t.horizon,
            None => t.crossings.iter().sum::<i64>() as f64 / (g.length() as f64 * t.horizon),
        });
    }
    Ok(Estimate::from_samples(&xs))
}

/// Runs `replicas` trajectories from draws of `spec`.
pub fn sample_trajectories(
    spec: &MeasureSpec,
    kernel: &Kernel,
    geometry: &LaneGeometry,
    settings: &TestSettings,
) -> Result<Vec<Trajectory>> {
    let sim = Simulator::new(kernel, geometry)?;
    replicate(settings, |rng| {
        let initial = spec.sample(geometry, rng)?;
        sim.run(&initial, settings.horizon, &[], rng)
    })
}

/// Per-column, per-lane densities at time `T` with the outer-tail averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEstimate {
    pub columns: Vec<i64>,
    /// `density[lane][column index]`.
    pub density: Vec<Vec<Estimate>>,
    /// Per-lane mean density of the leftmost tenth of the columns.
    pub left_tail: Vec<Estimate>,
    pub right_tail: Vec<Estimate>,
}

pub fn shock_profile(
    spec: &MeasureSpec,
    kernel: &Kernel,
    geometry: &LaneGeometry,
    settings: &TestSettings,
) -> Result<ProfileEstimate> {
    settings.check()?;
    if geometry.h_boundary() != HBoundary::Closed {
        return Err(Error::IncompatibleGeometry("shock profiles need a closed window".into()));
    }
    spec.check(geometry)?;
    let finals: Vec<Config> = sample_trajectories(spec, kernel, geometry, settings)?
        .into_iter()
        .map(|t| t.final_config)
        .collect();
    let columns: Vec<i64> = geometry.columns().collect();
    let tail = (columns.len() / 10).max(1);
    let n = geometry.n_lanes();
    let at = |lane: usize, cols: &[i64]| -> Estimate {
        let xs: Vec<f64> = finals
            .iter()
            .map(|c| {
                cols.iter().filter(|&&z| c.occupied(Site::new(z, lane))).count() as f64
                    / cols.len() as f64
            })
            .collect();
        Estimate::from_samples(&xs)
    };
    Ok(ProfileEstimate {
        density: (0..n)
            .map(|lane| columns.iter().map(|&z| at(lane, &[z])).collect())
            .collect(),
        left_tail: (0..n).map(|lane| at(lane, &columns[..tail])).collect(),
        right_tail: (0..n).map(|lane| at(lane, &columns[columns.len() - tail..])).collect(),
        columns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComparison {
    /// Draws of the first measure in `first`, of the second in `second`.
    pub comparisons: Vec<Comparison>,
    pub critical_z: f64,
    pub passed: bool,
}

/// Unpaired z-tests of every observable between independent draws of two
/// measures, Bonferroni-corrected. Replica `k` of `b` uses the stream
/// `replicas + k`.
pub fn compare_measures(
    a: &MeasureSpec,
    b: &MeasureSpec,
    geometry: &LaneGeometry,
    replicas: usize,
    seed: u64,
    alpha: f64,
) -> Result<SampleComparison> {
    let settings = TestSettings {
        horizon: 0.0,
        replicas,
        seed,
        alpha,
        sigmas: 3.0,
    };
    settings.check()?;
    let draw = |spec: &MeasureSpec, offset: u64| -> Result<Vec<Vec<f64>>> {
        (0..replicas as u64)
            .into_par_iter()
            .map(|k| {
                let c = spec.sample(geometry, &mut replica_rng(seed, offset + k))?;
                Ok(observables(&c).into_iter().map(|x| x.1).collect())
            })
            .collect()
    };
    let xs = draw(a, 0)?;
    let ys = draw(b, replicas as u64)?;
    let names: Vec<String> = observables(&Config::empty(*geometry))
        .into_iter()
        .map(|x| x.0)
        .collect();
    let critical_z = bonferroni_critical_z(alpha, names.len());
    let comparisons: Vec<Comparison> = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let first = Estimate::from_samples(&xs.iter().map(|v| v[k]).collect::<Vec<_>>());
            let second = Estimate::from_samples(&ys.iter().map(|v| v[k]).collect::<Vec<_>>());
            let difference = Estimate {
                mean: second.mean - first.mean,
                stderr: first.stderr.hypot(second.stderr),
                samples: replicas,
            };
            let z = difference.z_score(0.0);
            Comparison {
                name: name.clone(),
                first,
                second,
                difference,
                z,
                significant: z.abs() > critical_z,
            }
        })
        .collect();
    let passed = comparisons.iter().all(|c| !c.significant);
    Ok(SampleComparison {
        comparisons,
        critical_z,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationReport {
    pub settings: TestSettings,
    /// Lane `i` in `first`, lane `i + 1` in `second`.
    pub comparisons: Vec<Comparison>,
    pub critical_z: f64,
    pub passed: bool,
}

/// Compares every lane observable at time `T` with its image under the
/// rotation `i -> i + 1`, starting from draws of `spec`.
pub fn rotation_invariance_test(
    spec: &MeasureSpec,
    kernel: &Kernel,
    geometry: &LaneGeometry,
    settings: &TestSettings,
) -> Result<RotationReport> {
    spec.check(geometry)?;
    rotation_invariance_test_with(|rng| spec.sample(geometry, rng), kernel, geometry, settings)
}

/// [`rotation_invariance_test`] with an arbitrary initial law.
pub fn rotation_invariance_test_with(
    initial: impl Fn(&mut SimRng) -> Result<Config> + Sync,
    kernel: &Kernel,
    geometry: &LaneGeometry,
    settings: &TestSettings,
) -> Result<RotationReport> {
    settings.check()?;
    let Kernel::MultiLane(rates) = kernel else {
        return Err(Error::InvalidRates("rotation invariance needs a multilane kernel".into()));
    };
    if !rates.lane_independent() {
        return Err(Error::InvalidRates(
            "horizontal rates depend on the lane; rotation invariance is not claimed".into(),
        ));
    }
    let sim = Simulator::new(kernel, geometry)?;
    let n = geometry.n_lanes();
    let finals: Vec<Vec<(String, f64)>> = replicate(settings, |rng| {
        let c = initial(rng)?;
        Ok(observables(&sim.run(&c, settings.horizon, &[], rng)?.final_config))
    })?;
    let value = |obs: &[(String, f64)], name: &str| -> f64 {
        obs.iter().find(|x| x.0 == name).map(|x| x.1).expect("observable exists")
    };
    let mut names = Vec::new();
    let mut first = vec![Vec::new(); finals.len()];
    let mut second = vec![Vec::new(); finals.len()];
    for i in 0..n {
        let j = (i + 1) % n;
        let k = (j + 1) % n;
        for (a, b) in [
            (format!("density[{i}]"), format!("density[{j}]")),
            (format!("hpair[{i}]"), format!("hpair[{j}]")),
            (format!("vpair[{i},{j}]"), format!("vpair[{j},{k}]")),
        ] {
            names.push(format!("{a} vs {b}"));
            for (r, obs) in finals.iter().enumerate() {
                first[r].push(value(obs, &a));
                second[r].push(value(obs, &b));
            }
        }
    }
    let critical_z = bonferroni_critical_z(settings.alpha, names.len());
    let comparisons = paired_comparisons(&names, &first, &second, critical_z);
    let passed = comparisons.iter().all(|c| !c.significant);
    Ok(RotationReport {
        settings: *settings,
        comparisons,
        critical_z,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    /// Largest `|displacement| / t` of the tagged discrepancy over replicas.
    pub max_speed: f64,
    pub mean_speed: Estimate,
    /// Total horizontal rate per column, `sum_i (d_i + l_i)`.
    pub rate_mass: f64,
    pub coalesced: usize,
}

/// Speed of a tagged discrepancy started from `initial` in every replica.
pub fn propagation_speed(
    kernel: &Kernel,
    initial: &CoupledConfig,
    settings: &TestSettings,
) -> Result<SpeedReport> {
    settings.check()?;
    let sim = Simulator::new(kernel, initial.geometry())?;
    let paths = replicate(settings, |rng| {
        sim.track_tagged_discrepancy(initial, None, settings.horizon, rng)
    })?;
    let speeds: Vec<f64> = paths.iter().map(|p| p.max_speed()).collect();
    Ok(SpeedReport {
        max_speed: speeds.iter().copied().fold(0.0, f64::max),
        mean_speed: Estimate::from_samples(&speeds),
        rate_mass: (0..kernel.n_lanes())
            .map(|i| {
                let (d, l) = kernel.horizontal(i);
                d + l
            })
            .sum(),
        coalesced: paths.iter().filter(|p| p.coalesced_at.is_some()).count(),
    })
}
