//! Microscopic current, macroscopic flux `G` and the amplitude-1 entropy
//! shock classifier.
//!
//! For the two-lane model `G` only depends on the drifts `gamma0, gamma1` and
//! on `r = q/p`. Writing `c = (r - 1)/(r + 1)`, `psi = 1 + c^2 rho (rho - 2)`
//! and `phi` for the offset of lane 0 from `rho/2` on the F-curve,
//!
//! ```text
//! G = (g0 + g1) (rho/2)(1 - rho/2) + (g0 - g1)(1 - rho) phi - (g0 + g1) phi^2
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::kernels::{is_normalized, Kernel, MultiLaneRates, TwoLaneRates};
use crate::lattice::{Config, Site};
use crate::measures::{f_offset, solve_f};

/// Equality tolerance for flux values.
pub const FLUX_TOL: f64 = 1e-10;
/// Minimal margin for membership in an open set.
pub const OPEN_SET_MARGIN: f64 = 1e-9;
const SCAN_POINTS: usize = 10_000;
const GOLDEN_TOL: f64 = 1e-12;

/// The flux function `G_{gamma0, gamma1, r}` on `[0, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxCurve {
    pub gamma0: f64,
    pub gamma1: f64,
    /// `q/p` in `[0, inf]`.
    pub r: f64,
}

impl FluxCurve {
    pub fn new(gamma0: f64, gamma1: f64, r: f64) -> Result<Self> {
        if !gamma0.is_finite() || !gamma1.is_finite() {
            return Err(Error::InvalidRates("drifts must be finite".into()));
        }
        if r.is_nan() || r < 0.0 {
            return Err(Error::OutOfRange {
                name: "r",
                value: r,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        Ok(Self { gamma0, gamma1, r })
    }

    /// `G_{d, 1-d, r}`.
    pub fn reduced(d: f64, r: f64) -> Result<Self> {
        Self::new(d, 1.0 - d, r)
    }

    pub fn from_rates(rates: &TwoLaneRates) -> Result<Self> {
        Self::new(rates.gamma(0), rates.gamma(1), rates.r()?)
    }

    pub fn total_drift(&self) -> f64 {
        self.gamma0 + self.gamma1
    }

    /// `gamma0 / (gamma0 + gamma1)`.
    pub fn d(&self) -> Option<f64> {
        let s = self.total_drift();
        (s != 0.0).then(|| self.gamma0 / s)
    }

    /// `(r - 1)/(r + 1)`, equal to 1 when `r` is infinite.
    pub fn c(&self) -> f64 {
        if self.r.is_infinite() {
            1.0
        } else {
            (self.r - 1.0) / (self.r + 1.0)
        }
    }

    /// One lane is never entered: `r = 0` or `r = inf`.
    pub fn is_one_sided(&self) -> bool {
        self.r == 0.0 || self.r.is_infinite()
    }

    /// `(p, q)` representatives with `q/p = r`.
    fn pq(&self) -> (f64, f64) {
        if self.r.is_infinite() {
            (0.0, 1.0)
        } else {
            (1.0, self.r)
        }
    }

    fn check_rho(rho: f64) -> Result<()> {
        check_range("rho", rho, 0.0, 2.0)
    }

    /// `phi(rho)`.
    pub fn phi(&self, rho: f64) -> f64 {
        let (p, q) = self.pq();
        f_offset(p, q, rho)
    }

    /// `psi(rho) = 1 + c^2 rho (rho - 2)`, computed as `1 - c^2 + c^2 (rho-1)^2`.
    pub fn psi(&self, rho: f64) -> f64 {
        let c = self.c();
        let one_minus_c2 = if self.r.is_infinite() {
            0.0
        } else {
            4.0 * self.r / ((self.r + 1.0) * (self.r + 1.0))
        };
        one_minus_c2 + c * c * (rho - 1.0) * (rho - 1.0)
    }

    /// `G(rho)`: piecewise parabolas when `r` is 0 or infinite, the `phi`
    /// form otherwise.
    pub fn value(&self, rho: f64) -> Result<f64> {
        Self::check_rho(rho)?;
        if self.r == 0.0 {
            return Ok(self.one_sided_value(rho));
        }
        if self.r.is_infinite() {
            return Ok(self.mirrored().one_sided_value(2.0 - rho));
        }
        Ok(self.value_closed_form_unchecked(rho))
    }

    /// `G` via the `phi` form, also at `r = 0`.
    pub fn value_closed_form(&self, rho: f64) -> Result<f64> {
        Self::check_rho(rho)?;
        Ok(self.value_closed_form_unchecked(rho))
    }

    fn value_closed_form_unchecked(&self, rho: f64) -> f64 {
        let phi = self.phi(rho);
        let s = self.total_drift();
        s * (rho / 2.0) * (1.0 - rho / 2.0) + (self.gamma0 - self.gamma1) * (1.0 - rho) * phi
            - s * phi * phi
    }

    /// `G = gamma0 G0(rho0) + gamma1 G0(rho1)` with `G0(x) = x(1-x)` and
    /// `(rho0, rho1)` on the F-curve.
    pub fn value_composed(&self, rho: f64) -> Result<f64> {
        let (p, q) = self.pq();
        let (a, b) = solve_f(p, q, rho)?;
        Ok(self.gamma0 * a * (1.0 - a) + self.gamma1 * b * (1.0 - b))
    }

    fn one_sided_value(&self, rho: f64) -> f64 {
        if rho <= 1.0 {
            self.gamma1 * rho * (1.0 - rho)
        } else {
            self.gamma0 * (rho - 1.0) * (2.0 - rho)
        }
    }

    /// `G_{gamma0,gamma1,1/r}`.
    fn mirrored(&self) -> FluxCurve {
        let r = if self.r.is_infinite() {
            0.0
        } else if self.r == 0.0 {
            f64::INFINITY
        } else {
            1.0 / self.r
        };
        FluxCurve { r, ..*self }
    }

    /// `G^(order)(rho)` for `order` in `1..=3`.
    ///
    /// When `r` is 0 or infinite `G` has a kink at `rho = 1`, where every
    /// derivative is rejected.
    pub fn derivative(&self, rho: f64, order: u8) -> Result<f64> {
        Self::check_rho(rho)?;
        if !(1..=3).contains(&order) {
            return Err(Error::InvalidArgument(format!(
                "derivative order {order} not in 1..=3"
            )));
        }
        if self.is_one_sided() {
            if rho == 1.0 {
                return Err(Error::Degenerate(
                    "G is not differentiable at rho = 1 when one vertical rate vanishes".into(),
                ));
            }
            let (x, sign) = if self.r == 0.0 {
                (rho, 1.0)
            } else {
                (2.0 - rho, if order % 2 == 1 { -1.0 } else { 1.0 })
            };
            let (g, offset) = if x < 1.0 {
                (self.gamma1, 0.0)
            } else {
                (self.gamma0, 1.0)
            };
            // g (x - offset)(1 + offset - x)
            let v = match order {
                1 => g * (1.0 + 2.0 * offset - 2.0 * x),
                2 => -2.0 * g,
                _ => 0.0,
            };
            return Ok(sign * v);
        }
        let c = self.c();
        let one_minus_c2 = 4.0 * self.r / ((self.r + 1.0) * (self.r + 1.0));
        let psi = self.psi(rho);
        let sq = psi.sqrt();
        let phi = self.phi(rho);
        let phi1 = -0.5 * c * (rho - 1.0) / sq;
        let phi2 = -0.5 * c * one_minus_c2 / (psi * sq);
        let phi3 = 1.5 * c * c * c * one_minus_c2 * (rho - 1.0) / (psi * psi * sq);
        let (s, t) = (self.total_drift(), self.gamma0 - self.gamma1);
        Ok(match order {
            1 => s * 0.5 * (1.0 - rho) + t * (-phi + (1.0 - rho) * phi1) - 2.0 * s * phi * phi1,
            2 => -0.5 * s + t * (-2.0 * phi1 + (1.0 - rho) * phi2) - 2.0 * s * (phi1 * phi1 + phi * phi2),
            _ => t * (-3.0 * phi2 + (1.0 - rho) * phi3) - s * (6.0 * phi1 * phi2 + 2.0 * phi * phi3),
        })
    }

    /// `G'''` in factored form; its sign is the sign of the bracket.
    pub fn third_derivative_factored(&self, rho: f64) -> Result<f64> {
        Self::check_rho(rho)?;
        let r = self.r;
        if self.is_one_sided() || r == 1.0 {
            return self.derivative(rho, 3);
        }
        let psi = self.psi(rho);
        let prefactor = 6.0 * r * (r - 1.0).powi(2) / (r + 1.0).powi(4) / psi.powf(2.5);
        let bracket = (self.gamma0 - self.gamma1) * 4.0 * r / ((r - 1.0) * (r + 1.0))
            + self.total_drift() * (1.0 - rho);
        Ok(prefactor * bracket)
    }

    /// Point where `G'''` changes sign, when the total drift is nonzero and
    /// `r` is neither 0, 1 nor infinite. It may lie outside `[0, 2]`.
    pub fn third_derivative_root(&self) -> Option<f64> {
        let r = self.r;
        let s = self.total_drift();
        if s == 0.0 || self.is_one_sided() || r == 1.0 {
            return None;
        }
        Some(1.0 + (self.gamma0 - self.gamma1) / s * 4.0 * r / ((r - 1.0) * (r + 1.0)))
    }

    /// `G(1)` in closed form: `(gamma0 + gamma1) sqrt(r) / (sqrt(r) + 1)^2`.
    pub fn value_at_one(&self) -> f64 {
        if self.is_one_sided() {
            return 0.0;
        }
        let s = self.r.sqrt();
        self.total_drift() * s / ((s + 1.0) * (s + 1.0))
    }

    /// `G'(1) = ((gamma1 - gamma0)/2) (sqrt(r) - 1)/(sqrt(r) + 1)` for `0 < r < inf`.
    pub fn slope_at_one(&self) -> Option<f64> {
        if self.is_one_sided() {
            return None;
        }
        let s = self.r.sqrt();
        Some(0.5 * (self.gamma1 - self.gamma0) * (s - 1.0) / (s + 1.0))
    }

    /// `G'(2) = -(gamma0 + r gamma1)/(r + 1)` for finite `r`.
    pub fn slope_at_two(&self) -> Option<f64> {
        (!self.r.is_infinite()).then(|| -(self.gamma0 + self.r * self.gamma1) / (self.r + 1.0))
    }

    /// `F(rho) = G(rho + 1) - G(rho)` on `[0, 1]`.
    pub fn amplitude_one_gap(&self, rho: f64) -> Result<f64> {
        check_range("rho", rho, 0.0, 1.0)?;
        Ok(self.value(rho + 1.0)? - self.value(rho)?)
    }

    fn g(&self, rho: f64) -> f64 {
        self.value(rho.clamp(0.0, 2.0)).expect("rho clamped to [0, 2]")
    }

    /// Minimum of `G` on `[a, b]` as `(argmin, min)`.
    pub fn minimum(&self, a: f64, b: f64) -> (f64, f64) {
        extremum(|x| self.g(x), a, b, false)
    }

    /// Maximum of `G` on `[a, b]` as `(argmax, max)`.
    pub fn maximum(&self, a: f64, b: f64) -> (f64, f64) {
        extremum(|x| self.g(x), a, b, true)
    }

    /// Which of the parameter sets excluded from the classification applies.
    pub fn degeneracy(&self) -> Option<Degeneracy> {
        let (g0, g1) = (self.gamma0, self.gamma1);
        if self.r == 1.0 && g0 + g1 == 0.0 {
            Some(Degeneracy::SymmetricVerticalZeroDrift)
        } else if g0 == 0.0 && g1 == 0.0 {
            Some(Degeneracy::NoDrift)
        } else if self.is_one_sided() && g0 * g1 == 0.0 {
            Some(Degeneracy::OneSidedWithDriftlessLane)
        } else {
            None
        }
    }

    /// Whether `shock` is an entropy shock for `G`: equal flux at both ends,
    /// equal to the minimum of `G` between them for an increasing shock and
    /// to the maximum for a decreasing one.
    pub fn entropy_condition(&self, shock: ShockPair) -> Result<bool> {
        let (a, b) = (shock.rho_minus, shock.rho_plus);
        Self::check_rho(a)?;
        Self::check_rho(b)?;
        if a == b {
            return Err(Error::InvalidArgument("a shock needs rho- != rho+".into()));
        }
        let (ga, gb) = (self.g(a), self.g(b));
        if (ga - gb).abs() > FLUX_TOL {
            return Ok(false);
        }
        Ok(if a < b {
            self.minimum(a, b).1 >= ga.min(gb) - FLUX_TOL
        } else {
            self.maximum(b, a).1 <= ga.max(gb) + FLUX_TOL
        })
    }

    /// Entropy shocks of amplitude 1 (the set `R0`).
    ///
    /// Degenerate parameter sets are reported instead of classified.
    pub fn classify_r0(&self) -> R0Report {
        if let Some(d) = self.degeneracy() {
            return R0Report {
                shocks: Vec::new(),
                degenerate: Some(d),
            };
        }
        let gap = |x: f64| self.g(x + 1.0) - self.g(x);
        let grid: Vec<(f64, f64)> = (0..=SCAN_POINTS)
            .map(|k| {
                let x = k as f64 / SCAN_POINTS as f64;
                (x, gap(x))
            })
            .collect();
        let flat = grid.iter().all(|(_, v)| v.abs() <= 1e-13);
        let mut candidates = Vec::new();
        if flat {
            // G has period 1; only the extrema of G can qualify
            candidates.extend([0.0, 1.0, self.minimum(0.0, 1.0).0, self.maximum(0.0, 1.0).0]);
        } else {
            for w in grid.windows(2) {
                let ((x0, f0), (x1, f1)) = (w[0], w[1]);
                if f0.abs() <= 1e-13 {
                    candidates.push(x0);
                } else if f0 * f1 < 0.0 && f1.abs() > 1e-13 {
                    candidates.push(bisect(gap, x0, x1));
                }
            }
            if grid[SCAN_POINTS].1.abs() <= 1e-13 {
                candidates.push(1.0);
            }
        }
        candidates.sort_by(f64::total_cmp);
        candidates.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

        let mut shocks = Vec::new();
        for x in candidates {
            for shock in [ShockPair::new(x, x + 1.0), ShockPair::new(x + 1.0, x)] {
                if self.entropy_condition(shock).unwrap_or(false) {
                    shocks.push(shock);
                }
            }
        }
        R0Report {
            shocks,
            degenerate: None,
        }
    }
}

/// Parameter sets excluded from the shock classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// `p = q` and `gamma0 + gamma1 = 0`: `G` vanishes identically.
    SymmetricVerticalZeroDrift,
    /// `gamma0 = gamma1 = 0`: `G` vanishes identically.
    NoDrift,
    /// `q = 0 = gamma0 gamma1`.
    OneSidedWithDriftlessLane,
}

/// A pair `(rho-, rho+)` with `rho- != rho+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockPair {
    pub rho_minus: f64,
    pub rho_plus: f64,
}

impl ShockPair {
    pub fn new(rho_minus: f64, rho_plus: f64) -> Self {
        Self {
            rho_minus,
            rho_plus,
        }
    }

    pub fn amplitude(&self) -> f64 {
        (self.rho_plus - self.rho_minus).abs()
    }

    /// Whether the pair is one of `(0,1), (1,0), (1,2), (2,1)`.
    pub fn in_b1(&self) -> bool {
        const B1: [(f64, f64); 4] = [(0.0, 1.0), (1.0, 0.0), (1.0, 2.0), (2.0, 1.0)];
        B1.iter()
            .any(|&(a, b)| (self.rho_minus - a).abs() < 1e-9 && (self.rho_plus - b).abs() < 1e-9)
    }

    pub fn approx_eq(&self, other: &ShockPair, tol: f64) -> bool {
        (self.rho_minus - other.rho_minus).abs() <= tol
            && (self.rho_plus - other.rho_plus).abs() <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R0Report {
    pub shocks: Vec<ShockPair>,
    pub degenerate: Option<Degeneracy>,
}

/// `R0` for normalized two-lane rates.
pub fn classify_r0(rates: &TwoLaneRates) -> Result<R0Report> {
    rates.check_coupled()?;
    if !is_normalized(rates) {
        return Err(Error::InvalidRates(format!(
            "rates {rates} are not normalized; conjugate them first"
        )));
    }
    Ok(FluxCurve::from_rates(rates)?.classify_r0())
}

/// `r0 = (1 - 2s)/(1 + 2s)` with `s = sqrt(-7 + sqrt(52))`.
pub fn r0() -> f64 {
    let s = (52f64.sqrt() - 7.0).sqrt();
    (1.0 - 2.0 * s) / (1.0 + 2.0 * s)
}

/// `3 - (7/2) c^2 - c^4/16` with `c = (r-1)/(r+1)`; vanishes at `r0`.
pub fn r0_residual(r: f64) -> f64 {
    let c2 = ((r - 1.0) / (r + 1.0)).powi(2);
    3.0 - 3.5 * c2 - c2 * c2 / 16.0
}

/// The root `rho(d, r)` in `[0, 1]` of `G(rho + 1) = G(rho)` for
/// `G = G_{d, 1-d, r}`.
pub fn solve_rho_dr(d: f64, r: f64) -> Result<f64> {
    check_range("d", d, 0.0, 1.0)?;
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Degenerate(format!(
            "rho(d, r) needs r in (0, 1], got {r}"
        )));
    }
    let curve = FluxCurve::reduced(d, r)?;
    let gap = |x: f64| curve.g(x + 1.0) - curve.g(x);
    Ok(bisect(gap, 0.0, 1.0))
}

/// Margins of the strict inequalities `I < G(rho*) < S` defining `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZMembership {
    pub rho_star: f64,
    /// `G(rho*) - I(d, r)`.
    pub lower_margin: f64,
    /// `S(d, r) - G(rho*)`.
    pub upper_margin: f64,
}

impl ZMembership {
    pub fn inside(&self) -> bool {
        self.lower_margin > OPEN_SET_MARGIN && self.upper_margin > OPEN_SET_MARGIN
    }

    /// A margin is positive but too small to decide.
    pub fn near_boundary(&self) -> bool {
        let m = self.lower_margin.min(self.upper_margin);
        m > 0.0 && m <= OPEN_SET_MARGIN
    }
}

pub fn z_membership(d: f64, r: f64) -> Result<ZMembership> {
    let rho_star = solve_rho_dr(d, r)?;
    let curve = FluxCurve::reduced(d, r)?;
    let g = curve.g(rho_star);
    let lo = curve.minimum(rho_star, rho_star + 1.0).1;
    let hi = curve.maximum(rho_star, rho_star + 1.0).1;
    Ok(ZMembership {
        rho_star,
        lower_margin: g - lo,
        upper_margin: hi - g,
    })
}

/// Whether `(d, r)` lies in the open set `Z`, where `R0` is empty.
pub fn in_z(d: f64, r: f64) -> Result<bool> {
    Ok(z_membership(d, r)?.inside())
}

/// Expected current of the `n`-lane torus model under `nu_rho`:
/// `(sum_i gamma_i)(rho/n)(1 - rho/n)`.
pub fn multilane_flux(rates: &MultiLaneRates, rho: f64) -> Result<f64> {
    let n = rates.n_lanes() as f64;
    check_range("rho", rho, 0.0, n)?;
    let total: f64 = (0..rates.n_lanes()).map(|i| rates.gamma(i)).sum();
    Ok(total * (rho / n) * (1.0 - rho / n))
}

/// Instantaneous expected current across the bond `cut -> cut + 1`:
/// `sum_i d_i eta^i(cut)(1 - eta^i(cut+1)) - l_i eta^i(cut+1)(1 - eta^i(cut))`.
pub fn micro_current(config: &Config, kernel: &Kernel, cut: i64) -> Result<f64> {
    let g = config.geometry();
    kernel.check_geometry(g)?;
    g.column_index(cut)?;
    let Some(next) = g.right_of(cut) else {
        return Err(Error::InvalidArgument(format!(
            "no bond to the right of column {cut} on a closed window"
        )));
    };
    let mut j = 0.0;
    for lane in 0..g.n_lanes() {
        let (d, l) = kernel.horizontal(lane);
        let a = config.occupied(Site::new(cut, lane));
        let b = config.occupied(Site::new(next, lane));
        if a && !b {
            j += d;
        } else if b && !a {
            j -= l;
        }
    }
    Ok(j)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    let lo_positive = flo > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Grid scan followed by golden-section refinement around the best point.
fn extremum(f: impl Fn(f64) -> f64, a: f64, b: f64, maximize: bool) -> (f64, f64) {
    let sign = if maximize { -1.0 } else { 1.0 };
    let h = |x: f64| sign * f(x);
    let step = (b - a) / SCAN_POINTS as f64;
    let mut best = (a, h(a));
    for k in 1..=SCAN_POINTS {
        let x = if k == SCAN_POINTS { b } else { a + k as f64 * step };
        let v = h(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let (mut lo, mut hi) = ((best.0 - step).max(a), (best.0 + step).min(b));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (h(x1), h(x2));
    while hi - lo > GOLDEN_TOL {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = h(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = h(x2);
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v < best.1 {
            best = (x, v);
        }
    }
    (best.0, sign * best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LaneGeometry;
    use proptest::prelude::*;

    fn curve(g0: f64, g1: f64, r: f64) -> FluxCurve {
        FluxCurve::new(g0, g1, r).unwrap()
    }

    #[test]
    fn flux_values() {
        assert!((curve(1.0, 1.0, 1.0).value(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((curve(3.0, 1.0, 0.0).value(0.5).unwrap() - 0.25).abs() < 1e-15);
        // G(1) = (gamma0 + gamma1) sqrt(r)/(sqrt(r)+1)^2
        let c = curve(1.0, 1.0, 0.25);
        assert!((c.value(1.0).unwrap() - 4.0 / 9.0).abs() < 1e-15);
        assert!((curve(0.5, 0.5, 0.25).value(1.0).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        for c in [curve(1.0, 2.0, 0.3), curve(2.0, -1.0, 0.0), curve(1.0, 0.5, f64::INFINITY)] {
            assert_eq!(c.value(0.0).unwrap(), 0.0);
            assert_eq!(c.value(2.0).unwrap(), 0.0);
        }
        assert!(c.value(2.1).is_err());
    }

    #[test]
    fn slopes() {
        for r in [0.1, 0.5, 2.0] {
            assert!(curve(1.3, 1.3, r).derivative(1.0, 1).unwrap().abs() < 1e-15);
        }
        assert!((curve(1.0, 0.0, 0.5).derivative(2.0, 1).unwrap() + 2.0 / 3.0).abs() < 1e-14);
        let c = curve(1.7, 0.4, 0.3);
        assert!((c.derivative(1.0, 1).unwrap() - c.slope_at_one().unwrap()).abs() < 1e-14);
        assert!((c.derivative(2.0, 1).unwrap() - c.slope_at_two().unwrap()).abs() < 1e-14);
        assert!(curve(1.0, 1.0, 0.0).derivative(1.0, 1).is_err());
    }

    #[test]
    fn one_sided_curves_match_closed_form() {
        for c in [curve(2.0, 0.7, 0.0), curve(-1.0, 0.5, 0.0)] {
            for k in 0..=200 {
                let rho = k as f64 / 100.0;
                let a = c.value(rho).unwrap();
                let b = c.value_closed_form(rho).unwrap();
                assert!((a - b).abs() < 1e-12, "{rho}: {a} vs {b}");
            }
        }
        let c = curve(2.0, 0.7, f64::INFINITY);
        for k in 0..=200 {
            let rho = k as f64 / 100.0;
            assert!((c.value(rho).unwrap() - c.value_composed(rho).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn r0_constant() {
        let r = r0();
        assert_eq!((r * 1000.0).floor(), 42.0);
        assert!(r0_residual(r).abs() < 1e-10);
        let below = curve(1.0, 1.0, r - 1e-3);
        let above = curve(1.0, 1.0, r + 1e-3);
        assert!(below.value(0.5).unwrap() > below.value(1.0).unwrap());
        assert!(above.value(0.5).unwrap() < above.value(1.0).unwrap());
    }

    #[test]
    fn rho_dr_examples() {
        for r in [0.01, 0.3, 1.0] {
            assert!((solve_rho_dr(0.5, r).unwrap() - 0.5).abs() < 1e-12);
        }
        for d in [0.0, 0.2, 0.9] {
            assert!((solve_rho_dr(d, 1.0).unwrap() - 0.5).abs() < 1e-12);
        }
        assert!(solve_rho_dr(0.5, 0.0).is_err());
    }

    #[test]
    fn classifier_symmetric_drift() {
        let rep = FluxCurve::reduced(0.5, 0.5).unwrap().classify_r0();
        assert_eq!(rep.shocks.len(), 1);
        assert!(rep.shocks[0].approx_eq(&ShockPair::new(0.5, 1.5), 1e-9));
        assert!(FluxCurve::reduced(0.5, 0.03).unwrap().classify_r0().shocks.is_empty());
        let rep = FluxCurve::reduced(0.5, 0.0).unwrap().classify_r0();
        let expected = [
            ShockPair::new(0.0, 1.0),
            ShockPair::new(1.5, 0.5),
            ShockPair::new(1.0, 2.0),
        ];
        assert_eq!(rep.shocks.len(), 3);
        for e in expected {
            assert!(rep.shocks.iter().any(|s| s.approx_eq(&e, 1e-9)), "{e:?} missing");
        }
    }

    #[test]
    fn degenerate_cases_are_flagged() {
        assert_eq!(
            curve(1.0, -1.0, 1.0).classify_r0().degenerate,
            Some(Degeneracy::SymmetricVerticalZeroDrift)
        );
        assert_eq!(curve(0.0, 0.0, 0.5).classify_r0().degenerate, Some(Degeneracy::NoDrift));
        assert_eq!(
            curve(1.0, 0.0, 0.0).classify_r0().degenerate,
            Some(Degeneracy::OneSidedWithDriftlessLane)
        );
        let unnormalized = TwoLaneRates::new(1.0, 0.0, 1.0, 0.0, 1.0, 2.0).unwrap();
        assert!(classify_r0(&unnormalized).is_err());
    }

    #[test]
    fn entropy_condition_examples() {
        let c = curve(1.0, 2.0, 0.4);
        assert!(c.entropy_condition(ShockPair::new(0.0, 2.0)).unwrap());
        assert!(!c.entropy_condition(ShockPair::new(2.0, 0.0)).unwrap());
        let neg = curve(1.0, -0.5, 0.0);
        assert!(neg.entropy_condition(ShockPair::new(1.0, 0.0)).unwrap());
    }

    #[test]
    fn z_examples() {
        assert!(in_z(0.5, 0.02).unwrap());
        assert!(!in_z(0.5, 0.5).unwrap());
        assert!(in_z(0.5, r0() - 1e-4).unwrap());
        assert!(!in_z(0.5, r0() + 1e-4).unwrap());
    }

    #[test]
    fn micro_current_examples() {
        let g = LaneGeometry::two_lane_ring(6).unwrap();
        let k = Kernel::TwoLane(TwoLaneRates::new(1.0, 0.0, 2.0, 0.5, 1.0, 1.0).unwrap());
        assert_eq!(micro_current(&Config::full(g), &k, 2).unwrap(), 0.0);
        assert_eq!(micro_current(&Config::empty(g), &k, 2).unwrap(), 0.0);
        let mut c = Config::empty(g);
        c.set(Site::new(2, 0), true).unwrap();
        assert_eq!(micro_current(&c, &k, 2).unwrap(), 1.0);
        let mut c = Config::empty(g);
        c.set(Site::new(0, 1), true).unwrap();
        assert_eq!(micro_current(&c, &k, 5).unwrap(), -0.5);
        let closed = LaneGeometry::two_lane_closed(2).unwrap();
        assert!(micro_current(&Config::empty(closed), &k, 2).is_err());
    }

    #[test]
    fn third_derivative_forms_agree() {
        let c = curve(1.4, 0.3, 0.2);
        let root = c.third_derivative_root().unwrap();
        for k in 0..=100 {
            let rho = k as f64 / 50.0;
            let a = c.derivative(rho, 3).unwrap();
            let b = c.third_derivative_factored(rho).unwrap();
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{rho}: {a} vs {b}");
            if (rho - root).abs() > 1e-6 {
                assert_eq!(a > 0.0, b > 0.0);
            }
        }
    }

    fn drift() -> impl Strategy<Value = f64> {
        -3.0f64..3.0
    }

    proptest! {
        #[test]
        fn closed_form_matches_composition(g0 in drift(), g1 in drift(), r in 0.0f64..5.0) {
            let c = curve(g0, g1, r);
            for k in 0..=1000 {
                let rho = k as f64 / 500.0;
                let a = c.value(rho).unwrap();
                let b = c.value_composed(rho).unwrap();
                prop_assert!((a - b).abs() < 1e-12, "rho={} {} vs {}", rho, a, b);
            }
        }

        #[test]
        fn symmetry_and_homogeneity(g0 in drift(), g1 in drift(), r in 0.01f64..5.0) {
            let c = curve(g0, g1, r);
            let swapped = curve(g1, g0, r);
            let inverted = curve(g0, g1, 1.0 / r);
            for k in 0..=400 {
                let rho = k as f64 / 200.0;
                let base = c.value(2.0 - rho).unwrap();
                prop_assert!((base - swapped.value(rho).unwrap()).abs() < 1e-12);
                prop_assert!((base - inverted.value(rho).unwrap()).abs() < 1e-12);
            }
            let s = g0 + g1;
            prop_assume!(s.abs() > 1e-3);
            let reduced = FluxCurve::reduced(g0 / s, r).unwrap();
            for k in 0..=400 {
                let rho = k as f64 / 200.0;
                prop_assert!((c.value(rho).unwrap() - s * reduced.value(rho).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn derivatives_match_finite_differences(g0 in drift(), g1 in drift(), r in 0.05f64..5.0) {
            let c = curve(g0, g1, r);
            let h = 1e-5;
            for k in 1..100 {
                let rho = k as f64 / 50.0;
                let d1 = (c.value(rho + h).unwrap() - c.value(rho - h).unwrap()) / (2.0 * h);
                let d2 = (c.derivative(rho + h, 1).unwrap() - c.derivative(rho - h, 1).unwrap()) / (2.0 * h);
                let d3 = (c.derivative(rho + h, 2).unwrap() - c.derivative(rho - h, 2).unwrap()) / (2.0 * h);
                prop_assert!((d1 - c.derivative(rho, 1).unwrap()).abs() < 1e-6);
                prop_assert!((d2 - c.derivative(rho, 2).unwrap()).abs() < 1e-6);
                prop_assert!((d3 - c.derivative(rho, 3).unwrap()).abs() < 1e-6);
            }
        }

        #[test]
        fn rho_star_is_a_root(d in 0.0f64..=1.0, r in 0.001f64..=1.0) {
            let x = solve_rho_dr(d, r).unwrap();
            let c = FluxCurve::reduced(d, r).unwrap();
            prop_assert!(c.amplitude_one_gap(x).unwrap().abs() < 1e-12);
            prop_assert!((x + solve_rho_dr(1.0 - d, r).unwrap() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn gap_slope_at_one_is_negative(d in 0.5f64..=1.0, r in 0.001f64..=1.0) {
            let c = FluxCurve::reduced(d, r).unwrap();
            // F'(1) = G'(2) - G'(1)
            let slope = c.derivative(2.0, 1).unwrap() - c.derivative(1.0, 1).unwrap();
            prop_assert!(slope < 0.0);
        }

        #[test]
        fn second_derivative_peaks_at_third_derivative_root(
            d in 0.0f64..=1.0, r in 0.01f64..0.99,
        ) {
            let c = FluxCurve::reduced(d, r).unwrap();
            let root = c.third_derivative_root().unwrap();
            let mut prev = c.derivative(0.0, 2).unwrap();
            for k in 1..=400 {
                let rho = k as f64 / 200.0;
                let cur = c.derivative(rho, 2).unwrap();
                if rho < root - 1e-2 {
                    prop_assert!(cur >= prev - 1e-12);
                } else if rho - 1.0 / 200.0 > root + 1e-2 {
                    prop_assert!(cur <= prev + 1e-12);
                }
                prev = cur;
            }
        }

        #[test]
        fn at_most_one_shock_with_q_positive(d in 0.0f64..=1.0, r in 0.001f64..=1.0) {
            let rep = FluxCurve::reduced(d, r).unwrap().classify_r0();
            prop_assert!(rep.degenerate.is_none());
            prop_assert!(rep.shocks.len() <= 1);
            prop_assert!(rep.shocks.iter().all(|s| !s.in_b1()));
        }
    }
}
