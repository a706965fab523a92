//! The sequential preference objective
//!
//! `f(π, ω) = E_x[ E_{y∼π}[ E_{y'∼ω}[p(y ≻ y')] + τ^F·KL_{x,y}(ω ‖ ω_ref) ] − τ^L·KL_x(π ‖ π_ref) ]`
//!
//! together with its exact partial derivatives and saddle-point diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{
    kl_unchecked, project_simplex_unchecked, softmax_unchecked, ConditionalPolicy, Policy,
    ReferencePair, PROB_FLOOR,
};
use crate::preference::PreferenceMatrix;

/// Leader and follower KL coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub leader: f64,
    pub follower: f64,
}

impl Regularization {
    pub fn new(leader: f64, follower: f64) -> Result<Self> {
        if !(leader >= 0.0 && follower >= 0.0 && leader.is_finite() && follower.is_finite()) {
            return Err(Error::invalid(
                "regularization",
                format!("τ^L = {leader}, τ^F = {follower} must be finite and nonnegative"),
            ));
        }
        Ok(Regularization { leader, follower })
    }

    pub fn none() -> Self {
        Regularization {
            leader: 0.0,
            follower: 0.0,
        }
    }

    pub fn both(tau: f64) -> Result<Self> {
        Self::new(tau, tau)
    }
}

/// Gradient tables with the shapes of `π` and `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub leader: Vec<Vec<f64>>,
    pub follower: Vec<Vec<Vec<f64>>>,
}

/// A preference game with fixed references and regularisation.
#[derive(Debug, Clone, Copy)]
pub struct SlhfProblem<'a> {
    pub pref: &'a PreferenceMatrix,
    pub refs: &'a ReferencePair,
    pub reg: Regularization,
}

impl<'a> SlhfProblem<'a> {
    pub fn new(pref: &'a PreferenceMatrix, refs: &'a ReferencePair, reg: Regularization) -> Result<Self> {
        if refs.num_contexts() != pref.num_contexts() || refs.num_actions() != pref.num_actions() {
            return Err(Error::Shape(format!(
                "references are {}x{}, preferences are {}x{}",
                refs.num_contexts(),
                refs.num_actions(),
                pref.num_contexts(),
                pref.num_actions()
            )));
        }
        Ok(SlhfProblem { pref, refs, reg })
    }

    fn n(&self) -> usize {
        self.pref.num_actions()
    }

    fn rho(&self) -> &[f64] {
        self.pref.space().context_dist()
    }

    pub(crate) fn check(&self, pi: &Policy, omega: &ConditionalPolicy) -> Result<()> {
        pi.check_shape(self.pref.num_contexts(), self.n())?;
        omega.check_shape(self.pref.num_contexts(), self.n())
    }

    /// `E_{y'∼ω(·|x,y)}[p(y ≻ y')] + τ^F·KL(ω(·|x,y) ‖ ω_ref)`.
    fn follower_cost(&self, x: usize, y: usize, w: &[f64]) -> f64 {
        let row = self.pref.row(x, y);
        let mut v: f64 = row.iter().zip(w).map(|(p, q)| p * q).sum();
        if self.reg.follower > 0.0 {
            v += self.reg.follower * kl_unchecked(w, self.refs.follower().probs(x, y));
        }
        v
    }

    pub fn objective(&self, pi: &Policy, omega: &ConditionalPolicy) -> Result<f64> {
        self.check(pi, omega)?;
        Ok(self.objective_unchecked(pi, omega))
    }

    pub(crate) fn objective_unchecked(&self, pi: &Policy, omega: &ConditionalPolicy) -> f64 {
        let mut total = 0.0;
        for (x, &rho) in self.rho().iter().enumerate() {
            let p = pi.probs(x);
            let mut v = 0.0;
            for y in 0..self.n() {
                if p[y] > 0.0 {
                    v += p[y] * self.follower_cost(x, y, omega.probs(x, y));
                }
            }
            if self.reg.leader > 0.0 {
                v -= self.reg.leader * kl_unchecked(p, self.refs.leader().probs(x));
            }
            total += rho * v;
        }
        total
    }

    /// Exact unconstrained partial derivatives of [`Self::objective`].
    ///
    /// With `leader_follower_kl = false` the leader gradient omits the
    /// `τ^F·KL_{x,y}` term that the follower cost contributes.
    pub fn gradients(&self, pi: &Policy, omega: &ConditionalPolicy, leader_follower_kl: bool) -> Result<Gradients> {
        self.check(pi, omega)?;
        Ok(self.gradients_unchecked(pi, omega, leader_follower_kl))
    }

    pub(crate) fn gradients_unchecked(
        &self,
        pi: &Policy,
        omega: &ConditionalPolicy,
        leader_follower_kl: bool,
    ) -> Gradients {
        let n = self.n();
        let Regularization { leader: tl, follower: tf } = self.reg;
        let mut gl = Vec::with_capacity(self.rho().len());
        let mut gf = Vec::with_capacity(self.rho().len());
        for (x, &rho) in self.rho().iter().enumerate() {
            let p = pi.probs(x);
            let pref_l = self.refs.leader().probs(x);
            let mut lrow = vec![0.0; n];
            let mut fctx = Vec::with_capacity(n);
            for y in 0..n {
                let w = omega.probs(x, y);
                let wref = self.refs.follower().probs(x, y);
                let prow = self.pref.row(x, y);
                let mut cost: f64 = prow.iter().zip(w).map(|(a, b)| a * b).sum();
                if tf > 0.0 && leader_follower_kl {
                    cost += tf * kl_unchecked(w, wref);
                }
                let mut g = rho * cost;
                if tl > 0.0 {
                    g -= rho * tl * ((p[y].max(PROB_FLOOR) / pref_l[y]).ln() + 1.0);
                }
                lrow[y] = g;

                let scale = rho * p[y];
                let frow: Vec<f64> = (0..n)
                    .map(|b| {
                        let mut d = prow[b];
                        if tf > 0.0 {
                            d += tf * ((w[b].max(PROB_FLOOR) / wref[b]).ln() + 1.0);
                        }
                        scale * d
                    })
                    .collect();
                fctx.push(frow);
            }
            gl.push(lrow);
            gf.push(fctx);
        }
        Gradients {
            leader: gl,
            follower: gf,
        }
    }

    /// Norm of the unit-step projected-gradient map: zero exactly at a
    /// constrained stationary point of the saddle problem.
    pub fn stationarity(&self, pi: &Policy, omega: &ConditionalPolicy) -> Result<f64> {
        self.check(pi, omega)?;
        Ok(self.stationarity_unchecked(pi, omega, &self.gradients_unchecked(pi, omega, true)))
    }

    pub(crate) fn stationarity_unchecked(&self, pi: &Policy, omega: &ConditionalPolicy, g: &Gradients) -> f64 {
        let mut s = 0.0;
        for x in 0..self.rho().len() {
            let p = pi.probs(x);
            let step: Vec<f64> = p.iter().zip(&g.leader[x]).map(|(a, b)| a + b).collect();
            let proj = project_simplex_unchecked(&step);
            s += p.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            for y in 0..self.n() {
                let w = omega.probs(x, y);
                let step: Vec<f64> = w.iter().zip(&g.follower[x][y]).map(|(a, b)| a - b).collect();
                let proj = project_simplex_unchecked(&step);
                s += w.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            }
        }
        s.sqrt()
    }

    /// Follower's best response to every leader action: the closed-form
    /// softmax for `τ^F > 0`, lowest-index argmin otherwise.
    pub fn follower_best_response(&self) -> ConditionalPolicy {
        let n = self.n();
        let tf = self.reg.follower;
        let probs = (0..self.rho().len())
            .map(|x| {
                (0..n)
                    .map(|y| {
                        if tf > 0.0 {
                            // scores p(y' ≻ y | x): the follower wants to beat y
                            let scores: Vec<f64> = (0..n).map(|b| self.pref.get(x, b, y)).collect();
                            softmax_unchecked(&scores, self.refs.follower().probs(x, y), tf)
                        } else {
                            let row = self.pref.row(x, y);
                            let mut best = 0;
                            for b in 1..n {
                                if row[b] < row[best] {
                                    best = b;
                                }
                            }
                            let mut v = vec![0.0; n];
                            v[best] = 1.0;
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        ConditionalPolicy::from_rows_unchecked(probs)
    }

    /// `min_ω' f(π, ω')`.
    fn min_over_follower(&self, pi: &Policy) -> f64 {
        let br = self.follower_best_response();
        self.objective_unchecked(pi, &br)
    }

    /// `max_π' f(π', ω)`.
    fn max_over_leader(&self, omega: &ConditionalPolicy) -> f64 {
        let tl = self.reg.leader;
        let mut total = 0.0;
        for (x, &rho) in self.rho().iter().enumerate() {
            let costs: Vec<f64> = (0..self.n())
                .map(|y| self.follower_cost(x, y, omega.probs(x, y)))
                .collect();
            let v = if tl > 0.0 {
                // τ ln Σ ref·exp(c/τ), evaluated with a max shift
                let r = self.refs.leader().probs(x);
                let m = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = costs.iter().zip(r).map(|(c, q)| q * ((c - m) / tl).exp()).sum();
                m + tl * s.ln()
            } else {
                costs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            total += rho * v;
        }
        total
    }

    /// Duality gap `max_π' f(π', ω) − min_ω' f(π, ω')`; nonnegative, zero
    /// exactly at a saddle point.
    pub fn duality_gap(&self, pi: &Policy, omega: &ConditionalPolicy) -> Result<f64> {
        self.check(pi, omega)?;
        Ok(self.duality_gap_unchecked(pi, omega))
    }

    pub(crate) fn duality_gap_unchecked(&self, pi: &Policy, omega: &ConditionalPolicy) -> f64 {
        (self.max_over_leader(omega) - self.min_over_follower(pi)).max(0.0)
    }
}

pub fn slhf_objective(
    pref: &PreferenceMatrix,
    pi: &Policy,
    omega: &ConditionalPolicy,
    refs: &ReferencePair,
    reg: Regularization,
) -> Result<f64> {
    SlhfProblem::new(pref, refs, reg)?.objective(pi, omega)
}

pub fn slhf_gradients(
    pref: &PreferenceMatrix,
    pi: &Policy,
    omega: &ConditionalPolicy,
    refs: &ReferencePair,
    reg: Regularization,
) -> Result<Gradients> {
    SlhfProblem::new(pref, refs, reg)?.gradients(pi, omega, true)
}

/// `max_{y'} Σ_y π(y|x)·p(y' ≻ y|x) − 0.5` per context, clamped at zero.
pub fn exploitability(pref: &PreferenceMatrix, pi: &Policy) -> Result<Vec<f64>> {
    pi.check_shape(pref.num_contexts(), pref.num_actions())?;
    let n = pref.num_actions();
    Ok((0..pref.num_contexts())
        .map(|x| {
            let p = pi.probs(x);
            let best = (0..n)
                .map(|b| (0..n).map(|y| p[y] * pref.get(x, b, y)).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            (best - 0.5).max(0.0)
        })
        .collect())
}
