//! Closed-form Stackelberg equilibrium of the regularised game and the
//! deterministic equilibria of the unregularised one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{kl_unchecked, softmax_unchecked, ConditionalPolicy, Policy, ReferencePair};
use crate::preference::PreferenceMatrix;
use crate::solvers::objective::{Regularization, SlhfProblem};

/// Ties between deterministic values closer than this are treated as equal.
pub const VALUE_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackelbergSolution {
    pub leader: Policy,
    pub follower: ConditionalPolicy,
    pub value: f64,
    /// Closed form or enumeration, as opposed to an iterative estimate.
    pub is_exact: bool,
}

/// Leader reward after the follower's regularised best response:
/// `E_{y'∼ω*}[p(y ≻ y')] + τ^F·KL(ω*(·|x,y) ‖ ω_ref)`.
pub fn leader_reward(pref: &PreferenceMatrix, refs: &ReferencePair, tau_f: f64, follower: &ConditionalPolicy) -> Vec<Vec<f64>> {
    let n = pref.num_actions();
    (0..pref.num_contexts())
        .map(|x| {
            (0..n)
                .map(|y| {
                    let w = follower.probs(x, y);
                    let e: f64 = pref.row(x, y).iter().zip(w).map(|(p, q)| p * q).sum();
                    e + tau_f * kl_unchecked(w, refs.follower().probs(x, y))
                })
                .collect()
        })
        .collect()
}

/// The unique equilibrium for `τ^L, τ^F > 0`.
///
/// The follower plays `ω*(y'|x,y) ∝ ω_ref(y'|x,y)·exp(p(y' ≻ y|x)/τ^F)`; the
/// leader then faces the reward of [`leader_reward`] and plays its KL-regularised
/// softmax against `π_ref`.
pub fn stackelberg_exact(pref: &PreferenceMatrix, refs: &ReferencePair, reg: Regularization) -> Result<StackelbergSolution> {
    if !(reg.leader > 0.0 && reg.follower > 0.0) {
        return Err(Error::invalid(
            "regularization",
            "closed form needs τ^L, τ^F > 0; use stackelberg_enumerate for the unregularised game",
        ));
    }
    let problem = SlhfProblem::new(pref, refs, reg)?;
    let follower = problem.follower_best_response();
    let reward = leader_reward(pref, refs, reg.follower, &follower);
    let leader = Policy::from_rows_unchecked(
        reward
            .iter()
            .enumerate()
            .map(|(x, r)| softmax_unchecked(r, refs.leader().probs(x), reg.leader))
            .collect(),
    );
    let value = problem.objective_unchecked(&leader, &follower);
    Ok(StackelbergSolution {
        leader,
        follower,
        value,
        is_exact: true,
    })
}

/// Deterministic equilibria of one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEquilibria {
    /// `best_responses[y]`: every follower action minimising `p(y ≻ ·)`.
    pub best_responses: Vec<Vec<usize>>,
    /// Leader's guaranteed value `min_{y'} p(y ≻ y')` for each action.
    pub action_values: Vec<f64>,
    /// Leader actions attaining the maximal guaranteed value.
    pub leader_set: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicEquilibria {
    pub contexts: Vec<ContextEquilibria>,
    /// ρ-weighted game value.
    pub value: f64,
}

impl DeterministicEquilibria {
    /// The equilibrium picking the lowest index from every tie set.
    pub fn canonical(&self) -> StackelbergSolution {
        let n = self.contexts[0].action_values.len();
        let leader = Policy::deterministic(
            &self.contexts.iter().map(|c| c.leader_set[0]).collect::<Vec<_>>(),
            n,
        );
        let follower = ConditionalPolicy::deterministic(
            &self
                .contexts
                .iter()
                .map(|c| c.best_responses.iter().map(|b| b[0]).collect())
                .collect::<Vec<_>>(),
        );
        StackelbergSolution {
            leader,
            follower,
            value: self.value,
            is_exact: true,
        }
    }

    /// Lowest-index follower response per context and leader action.
    pub fn follower_map(&self) -> Vec<Vec<usize>> {
        self.contexts
            .iter()
            .map(|c| c.best_responses.iter().map(|b| b[0]).collect())
            .collect()
    }

    /// Number of distinct deterministic equilibria.
    pub fn count(&self) -> u128 {
        self.contexts
            .iter()
            .map(|c| {
                let follower: u128 = c.best_responses.iter().map(|b| b.len() as u128).product();
                c.leader_set.len() as u128 * follower
            })
            .product()
    }
}

/// Enumerates the deterministic equilibria of the unregularised game.
pub fn stackelberg_enumerate(pref: &PreferenceMatrix) -> DeterministicEquilibria {
    let n = pref.num_actions();
    let contexts: Vec<ContextEquilibria> = (0..pref.num_contexts())
        .map(|x| {
            let mut best_responses = Vec::with_capacity(n);
            let mut action_values = Vec::with_capacity(n);
            for y in 0..n {
                let row = pref.row(x, y);
                let m = row.iter().copied().fold(f64::INFINITY, f64::min);
                best_responses.push((0..n).filter(|&b| row[b] <= m + VALUE_TIE_TOL).collect());
                action_values.push(m);
            }
            let value = action_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let leader_set = (0..n)
                .filter(|&y| action_values[y] >= value - VALUE_TIE_TOL)
                .collect();
            ContextEquilibria {
                best_responses,
                action_values,
                leader_set,
                value,
            }
        })
        .collect();
    let value = contexts
        .iter()
        .zip(pref.space().context_dist())
        .map(|(c, r)| r * c.value)
        .sum();
    DeterministicEquilibria { contexts, value }
}
