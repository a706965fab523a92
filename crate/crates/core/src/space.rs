//! Finite context and action sets with a fixed context distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for exact-arithmetic construction invariants.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActionSpaceRepr", into = "ActionSpaceRepr")]
pub struct ActionSpace {
    contexts: Vec<String>,
    actions: Vec<Vec<String>>,
    context_dist: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionSpaceRepr {
    contexts: Vec<String>,
    actions: Vec<Vec<String>>,
    context_dist: Vec<f64>,
}

impl TryFrom<ActionSpaceRepr> for ActionSpace {
    type Error = Error;

    fn try_from(r: ActionSpaceRepr) -> Result<Self> {
        ActionSpace::new(r.contexts, r.actions, r.context_dist)
    }
}

impl From<ActionSpace> for ActionSpaceRepr {
    fn from(s: ActionSpace) -> Self {
        ActionSpaceRepr {
            contexts: s.contexts,
            actions: s.actions,
            context_dist: s.context_dist,
        }
    }
}

impl ActionSpace {
    pub fn new(
        contexts: Vec<String>,
        actions: Vec<Vec<String>>,
        context_dist: Vec<f64>,
    ) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::invalid("action space", "no contexts"));
        }
        if actions.len() != contexts.len() || context_dist.len() != contexts.len() {
            return Err(Error::invalid(
                "action space",
                format!(
                    "{} contexts but {} action lists and {} distribution entries",
                    contexts.len(),
                    actions.len(),
                    context_dist.len()
                ),
            ));
        }
        let n = actions[0].len();
        for (x, acts) in actions.iter().enumerate() {
            if acts.len() < 2 {
                return Err(Error::invalid(
                    "action space",
                    format!("context {x} has {} actions, need at least 2", acts.len()),
                ));
            }
            if acts.len() != n {
                return Err(Error::invalid(
                    "action space",
                    format!("context {x} has {} actions, context 0 has {n}", acts.len()),
                ));
            }
            for (i, a) in acts.iter().enumerate() {
                if acts[..i].contains(a) {
                    return Err(Error::invalid(
                        "action space",
                        format!("duplicate action label {a:?} in context {x}"),
                    ));
                }
            }
        }
        check_distribution("context distribution", &context_dist, PROB_TOL)?;
        Ok(ActionSpace {
            contexts,
            actions,
            context_dist,
        })
    }

    /// One context, uniform weight, the given action labels.
    pub fn single(actions: &[&str]) -> Result<Self> {
        Self::new(
            vec!["x0".to_string()],
            vec![actions.iter().map(|s| s.to_string()).collect()],
            vec![1.0],
        )
    }

    /// `contexts` contexts sharing `actions` actions labelled `a0, a1, ...`,
    /// with the given context distribution (uniform when `None`).
    pub fn uniform(contexts: usize, actions: usize, dist: Option<Vec<f64>>) -> Result<Self> {
        let ctx = (0..contexts).map(|x| format!("x{x}")).collect();
        let acts = (0..contexts)
            .map(|_| (0..actions).map(|a| format!("a{a}")).collect())
            .collect();
        let dist = dist.unwrap_or_else(|| vec![1.0 / contexts as f64; contexts]);
        Self::new(ctx, acts, dist)
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    /// Actions per context (fixed across contexts).
    pub fn num_actions(&self) -> usize {
        self.actions[0].len()
    }

    pub fn contexts(&self) -> &[String] {
        &self.contexts
    }

    pub fn actions(&self, context: usize) -> &[String] {
        &self.actions[context]
    }

    pub fn context_dist(&self) -> &[f64] {
        &self.context_dist
    }

    pub fn context_index(&self, label: &str) -> Option<usize> {
        self.contexts.iter().position(|c| c == label)
    }

    pub fn action_index(&self, context: usize, label: &str) -> Option<usize> {
        self.actions.get(context)?.iter().position(|a| a == label)
    }
}

pub(crate) fn check_distribution(what: &'static str, v: &[f64], tol: f64) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(what, "empty probability vector"));
    }
    if let Some(bad) = v.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::invalid(what, format!("entry {bad} is not a probability")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(Error::invalid(what, format!("entries sum to {s}, expected 1")));
    }
    Ok(())
}
