//! Symmetric Nash equilibria of the simultaneous preference game.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::policy::{softmax_unchecked, Policy};
use crate::preference::PreferenceMatrix;
use crate::solvers::objective::exploitability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NashMethod {
    /// Exact maximin strategy of each context's constant-sum game (τ = 0).
    LpExact,
    /// Fixed point `π = softmax(P·π / τ, π_ref)` of the regularised game (τ > 0).
    RegularizedFixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashSolution {
    pub policy: Policy,
    /// Unregularised exploitability per context.
    pub exploitability: Vec<f64>,
    /// Sup-norm of `π − softmax(P·π/τ, π_ref)` for the regularised method,
    /// zero for the LP.
    pub residual: f64,
    pub iterations: usize,
}

const LP_EPS: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 100;
const FIXED_POINT_TOL: f64 = 1e-9;

/// Maximin strategy of the row player for payoff `m` (row-major `n×n`).
///
/// Solves the column player's LP `max Σw  s.t.  (m + 1)·w ≤ 1, w ≥ 0` with a
/// dense tableau and Bland's rule; the row strategy is read off the slack
/// columns of the final objective row.
pub(crate) fn maximin_lp(m: &[f64], n: usize) -> Result<(Vec<f64>, f64)> {
    let cols = 2 * n + 1;
    let mut t = vec![0.0; (n + 1) * cols];
    for i in 0..n {
        for j in 0..n {
            t[i * cols + j] = m[i * n + j] + 1.0;
        }
        t[i * cols + n + i] = 1.0;
        t[i * cols + 2 * n] = 1.0;
    }
    for j in 0..n {
        t[n * cols + j] = -1.0;
    }
    let mut basis: Vec<usize> = (n..2 * n).collect();
    let max_pivots = 50 * (2 * n).pow(2);
    for _ in 0..max_pivots {
        let Some(q) = (0..2 * n).find(|&j| t[n * cols + j] < -LP_EPS) else {
            let u: Vec<f64> = (0..n).map(|i| t[n * cols + n + i].max(0.0)).collect();
            let s: f64 = u.iter().sum();
            let x = u.iter().map(|v| v / s).collect();
            // game value of the shifted payoff is 1/s
            return Ok((x, 1.0 / s - 1.0));
        };
        let mut r = None;
        let mut best = f64::INFINITY;
        for i in 0..n {
            let a = t[i * cols + q];
            if a > LP_EPS {
                let ratio = t[i * cols + 2 * n] / a;
                let better = match r {
                    None => true,
                    Some(k) => ratio < best - LP_EPS || (ratio <= best + LP_EPS && basis[i] < basis[k]),
                };
                if better {
                    best = ratio;
                    r = Some(i);
                }
            }
        }
        let r = r.ok_or_else(|| Error::invalid("linear program", "unbounded; payoff not positive"))?;
        let piv = t[r * cols + q];
        for j in 0..cols {
            t[r * cols + j] /= piv;
        }
        for i in 0..=n {
            if i == r {
                continue;
            }
            let f = t[i * cols + q];
            if f != 0.0 {
                for j in 0..cols {
                    t[i * cols + j] -= f * t[r * cols + j];
                }
            }
        }
        basis[r] = q;
    }
    Err(Error::NoConvergence {
        iterations: max_pivots,
        residual: f64::NAN,
    })
}

/// Solves `ℓ_i − ln ref_i − (A·e^ℓ)_i/τ − c = 0`, `Σ e^ℓ = 1` for `(ℓ, c)` by
/// Newton's method in log-probabilities, where `A = P − ½` is skew-symmetric.
fn regularized_newton(a: &[f64], n: usize, reference: &[f64], tau: f64, start: &[f64]) -> Option<(Vec<f64>, usize)> {
    let lref: Vec<f64> = reference.iter().map(|r| r.ln()).collect();
    let m = n + 1;
    let residual = |z: &[f64]| -> (Vec<f64>, f64) {
        let p: Vec<f64> = z[..n].iter().map(|v| v.exp()).collect();
        let mut r = vec![0.0; m];
        for i in 0..n {
            let ap: f64 = (0..n).map(|j| a[i * n + j] * p[j]).sum();
            r[i] = z[i] - lref[i] - ap / tau - z[n];
        }
        r[n] = p.iter().sum::<f64>() - 1.0;
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        (r, norm)
    };
    let mut z: Vec<f64> = start.iter().map(|p| p.max(1e-300).ln()).collect();
    let p0: Vec<f64> = start.to_vec();
    let c0 = (0..n)
        .map(|i| {
            let ap: f64 = (0..n).map(|j| a[i * n + j] * p0[j]).sum();
            p0[i] * (z[i] - lref[i] - ap / tau)
        })
        .sum();
    z.push(c0);
    let (mut r, mut norm) = residual(&z);
    for it in 0..NEWTON_MAX_ITERS {
        if norm < 1e-13 {
            return Some((z[..n].to_vec(), it));
        }
        let p: Vec<f64> = z[..n].iter().map(|v| v.exp()).collect();
        let mut jac = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                jac[i * m + j] = -a[i * n + j] * p[j] / tau;
            }
            jac[i * m + i] += 1.0;
            jac[i * m + n] = -1.0;
            jac[n * m + i] = p[i];
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let d = linalg::solve(jac, rhs)?;
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(&d).map(|(v, dv)| v + step * dv).collect();
            let (tr, tn) = residual(&trial);
            if tn < norm * (1.0 - 1e-4 * step) || step < 1e-10 {
                z = trial;
                r = tr;
                norm = tn;
                break;
            }
            step *= 0.5;
        }
    }
    (norm < 1e-10).then(|| (z[..n].to_vec(), NEWTON_MAX_ITERS))
}

fn fixed_point_residual(a: &[f64], n: usize, reference: &[f64], tau: f64, p: &[f64]) -> f64 {
    let scores: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i * n + j] * p[j]).sum()).collect();
    let br = softmax_unchecked(&scores, reference, tau);
    br.iter().zip(p).map(|(b, q)| (b - q).abs()).fold(0.0, f64::max)
}

/// Symmetric Nash equilibrium per context.
///
/// `LpExact` needs `tau == 0`; `RegularizedFixedPoint` needs `tau > 0` and a
/// strictly positive reference. The regularised solve follows a homotopy in
/// τ from a strongly regularised start, running Newton's method at each stage.
pub fn nash_solve(pref: &PreferenceMatrix, reference: &Policy, tau: f64, method: NashMethod) -> Result<NashSolution> {
    let n = pref.num_actions();
    reference.check_shape(pref.num_contexts(), n)?;
    let mut rows = Vec::with_capacity(pref.num_contexts());
    let mut residual: f64 = 0.0;
    let mut iterations = 0;
    match method {
        NashMethod::LpExact => {
            if tau != 0.0 {
                return Err(Error::invalid("Nash method", "the LP path solves the unregularised game (τ = 0)"));
            }
            for x in 0..pref.num_contexts() {
                let m: Vec<f64> = pref.rows(x).concat();
                let (strategy, _) = maximin_lp(&m, n)?;
                rows.push(strategy);
            }
        }
        NashMethod::RegularizedFixedPoint => {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::invalid("temperature", format!("τ = {tau} must be positive")));
            }
            if !reference.is_strictly_positive() {
                return Err(Error::invalid("reference policy", "entries must be strictly positive"));
            }
            for x in 0..pref.num_contexts() {
                let a: Vec<f64> = pref.rows(x).concat().iter().map(|v| v - 0.5).collect();
                let r = reference.probs(x);
                let mut p = r.to_vec();
                let mut stage_tau = tau.max(1.0);
                loop {
                    let (l, it) = regularized_newton(&a, n, r, stage_tau, &p).ok_or_else(|| {
                        Error::NoConvergence {
                            iterations: NEWTON_MAX_ITERS,
                            residual: fixed_point_residual(&a, n, r, stage_tau, &p),
                        }
                    })?;
                    iterations += it;
                    let e: Vec<f64> = l.iter().map(|v| v.exp()).collect();
                    let s: f64 = e.iter().sum();
                    p = e.into_iter().map(|v| v / s).collect();
                    if stage_tau == tau {
                        break;
                    }
                    stage_tau = (stage_tau * 0.5).max(tau);
                }
                let res = fixed_point_residual(&a, n, r, tau, &p);
                if res > FIXED_POINT_TOL {
                    return Err(Error::NoConvergence { iterations, residual: res });
                }
                residual = residual.max(res);
                rows.push(p);
            }
        }
    }
    let policy = Policy::from_rows_unchecked(rows);
    let exploitability = exploitability(pref, &policy)?;
    Ok(NashSolution {
        policy,
        exploitability,
        residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::AnnotatorPopulation;
    use crate::preference::aggregate_population;
    use crate::space::ActionSpace;

    fn game(alpha: [f64; 3]) -> PreferenceMatrix {
        let pop = AnnotatorPopulation::condorcet(alpha).unwrap();
        aggregate_population(&pop, &ActionSpace::single(&["A", "B", "C"]).unwrap()).unwrap()
    }

    #[test]
    fn uniform_population_gives_uniform_equilibrium() {
        let s = nash_solve(&game([1.0 / 3.0; 3]), &Policy::uniform(1, 3), 0.0, NashMethod::LpExact).unwrap();
        for p in s.policy.probs(0) {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(s.exploitability[0] < 1e-12);
    }

    #[test]
    fn closed_form_condorcet_equilibrium() {
        let s = nash_solve(&game([0.4, 0.35, 0.25]), &Policy::uniform(1, 3), 0.0, NashMethod::LpExact).unwrap();
        let want = [0.5, 0.2, 0.3];
        for (p, w) in s.policy.probs(0).iter().zip(want) {
            assert!((p - w).abs() < 1e-12, "{:?}", s.policy);
        }
    }

    #[test]
    fn condorcet_winner_is_pure_equilibrium() {
        let s = nash_solve(&game([0.6, 0.2, 0.2]), &Policy::uniform(1, 3), 0.0, NashMethod::LpExact).unwrap();
        assert_eq!(s.policy.probs(0), &[1.0, 0.0, 0.0]);
        assert_eq!(s.exploitability[0], 0.0);
    }

    #[test]
    fn regularized_fixed_point_holds() {
        let p = game([0.4, 0.35, 0.25]);
        for tau in [1.0, 0.1, 0.01, 0.001] {
            let s = nash_solve(&p, &Policy::uniform(1, 3), tau, NashMethod::RegularizedFixedPoint).unwrap();
            assert!(s.residual <= 1e-8, "τ = {tau}: residual {}", s.residual);
        }
        // small τ approaches the unregularised equilibrium
        let s = nash_solve(&p, &Policy::uniform(1, 3), 1e-4, NashMethod::RegularizedFixedPoint).unwrap();
        assert!(s.policy.tv_distance(&Policy::new(vec![vec![0.5, 0.2, 0.3]]).unwrap()) < 1e-2);
    }

    #[test]
    fn method_and_tau_must_agree() {
        let p = game([0.4, 0.35, 0.25]);
        assert!(nash_solve(&p, &Policy::uniform(1, 3), 0.1, NashMethod::LpExact).is_err());
        assert!(nash_solve(&p, &Policy::uniform(1, 3), 0.0, NashMethod::RegularizedFixedPoint).is_err());
    }
}
