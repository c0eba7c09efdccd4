//! Independent Bernoulli sites conditioned on their sum.
//!
//! Conditioned blocking measures are product measures conditioned on a
//! conserved height, which on a closed window is the particle count up to a
//! constant. Everything here works on a flat list of site densities given as
//! `(rho, 1 - rho)` pairs, so that densities extremely close to 1 keep their
//! hole probability exactly.

use rand::Rng;

use crate::error::{Error, Result};

/// `tail[k][s] = P(sites k.. sum to s)` for `s <= target`.
fn tail_table(densities: &[(f64, f64)], target: usize) -> Vec<Vec<f64>> {
    let n = densities.len();
    let mut tail = vec![vec![0.0; target + 1]; n + 1];
    tail[n][0] = 1.0;
    for k in (0..n).rev() {
        let (p, h) = densities[k];
        for s in 0..=target {
            let mut v = h * tail[k + 1][s];
            if s > 0 {
                v += p * tail[k + 1][s - 1];
            }
            tail[k][s] = v;
        }
    }
    tail
}

fn check_target(densities: &[(f64, f64)], target: usize, tail: &[Vec<f64>]) -> Result<()> {
    if target > densities.len() || tail[0][target] <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "site count {target} has zero probability under the product measure on {} sites",
            densities.len()
        )));
    }
    Ok(())
}

/// Probability that the sites sum to `target`.
pub fn sum_probability(densities: &[(f64, f64)], target: usize) -> f64 {
    if target > densities.len() {
        return 0.0;
    }
    tail_table(densities, target)[0][target]
}

/// Exact draw from the product measure conditioned on `sum = target`.
pub fn sample_exact<R: Rng + ?Sized>(
    densities: &[(f64, f64)],
    target: usize,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let tail = tail_table(densities, target.min(densities.len()));
    check_target(densities, target, &tail)?;
    let mut remaining = target;
    let mut out = Vec::with_capacity(densities.len());
    for (k, &(p, _)) in densities.iter().enumerate() {
        let occupied = if remaining == 0 {
            false
        } else {
            let on = p * tail[k + 1][remaining - 1];
            let total = tail[k][remaining];
            rng.gen::<f64>() * total < on
        };
        if occupied {
            remaining -= 1;
        }
        out.push(occupied);
    }
    debug_assert_eq!(remaining, 0);
    Ok(out)
}

/// Draws from the product measure until the sum equals `target`.
pub fn sample_rejection<R: Rng + ?Sized>(
    densities: &[(f64, f64)],
    target: usize,
    budget: u64,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let mut out = vec![false; densities.len()];
    for attempt in 1..=budget {
        let mut count = 0;
        for (slot, &(p, _)) in out.iter_mut().zip(densities) {
            *slot = rng.gen::<f64>() < p;
            count += usize::from(*slot);
        }
        if count == target {
            return Ok(out);
        }
        if attempt == budget {
            break;
        }
    }
    Err(Error::RejectionBudget {
        attempts: budget,
        rate: sum_probability(densities, target),
    })
}

/// One-site marginals of the conditioned measure.
pub fn marginals(densities: &[(f64, f64)], target: usize) -> Result<Vec<f64>> {
    let n = densities.len();
    let tail = tail_table(densities, target.min(n));
    check_target(densities, target, &tail)?;
    let z = tail[0][target];
    // head[s] = P(sites ..k sum to s), advanced site by site.
    let mut head = vec![0.0; target + 1];
    head[0] = 1.0;
    let mut out = Vec::with_capacity(n);
    for (k, &(p, h)) in densities.iter().enumerate() {
        let mut on = 0.0;
        for s in 0..target {
            on += head[s] * tail[k + 1][target - 1 - s];
        }
        out.push((p * on / z).clamp(0.0, 1.0));
        for s in (0..=target).rev() {
            let mut v = h * head[s];
            if s > 0 {
                v += p * head[s - 1];
            }
            head[s] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn brute_force_marginals(densities: &[(f64, f64)], target: usize) -> Vec<f64> {
        let n = densities.len();
        let mut num = vec![0.0; n];
        let mut z = 0.0;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != target {
                continue;
            }
            let w: f64 = (0..n)
                .map(|k| if mask >> k & 1 == 1 { densities[k].0 } else { densities[k].1 })
                .product();
            z += w;
            for (k, slot) in num.iter_mut().enumerate() {
                if mask >> k & 1 == 1 {
                    *slot += w;
                }
            }
        }
        num.iter().map(|x| x / z).collect()
    }

    fn pairs(ps: &[f64]) -> Vec<(f64, f64)> {
        ps.iter().map(|&p| (p, 1.0 - p)).collect()
    }

    #[test]
    fn marginals_match_enumeration() {
        let d = pairs(&[0.1, 0.9, 0.5, 0.3, 0.0, 1.0, 0.7, 0.2]);
        for target in 1..7 {
            let exact = marginals(&d, target).unwrap();
            let oracle = brute_force_marginals(&d, target);
            for (a, b) in exact.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
        assert!(marginals(&d, 8).is_err());
    }

    #[test]
    fn exact_sampler_hits_target() {
        let d = pairs(&[0.1, 0.9, 0.5, 0.3, 0.0, 1.0, 0.7, 0.2]);
        let mut rng = rng_from_seed(3);
        for _ in 0..200 {
            let s = sample_exact(&d, 4, &mut rng).unwrap();
            assert_eq!(s.iter().filter(|&&b| b).count(), 4);
            assert!(!s[4] && s[5]);
        }
    }

    #[test]
    fn rejection_reports_budget() {
        let d = pairs(&[0.01; 10]);
        let mut rng = rng_from_seed(1);
        match sample_rejection(&d, 10, 50, &mut rng) {
            Err(Error::RejectionBudget { attempts, rate }) => {
                assert_eq!(attempts, 50);
                assert!(rate < 1e-19);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
