//! Policy tables, simplex projection, KL divergence and the KL-regularised
//! softmax closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for simplex membership of policy vectors.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Floor applied to iterate probabilities before any log is taken.
pub const PROB_FLOOR: f64 = 1e-12;

pub const POLICY_SCHEMA: &str = "prefgame.policy.v1";
pub const CONDITIONAL_POLICY_SCHEMA: &str = "prefgame.conditional-policy.v1";

/// Leader table: one distribution over actions per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyRepr", into = "PolicyRepr")]
pub struct Policy {
    probs: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyRepr {
    schema: String,
    probs: Vec<Vec<f64>>,
}

impl TryFrom<PolicyRepr> for Policy {
    type Error = Error;

    fn try_from(r: PolicyRepr) -> Result<Self> {
        if r.schema != POLICY_SCHEMA {
            return Err(Error::invalid("policy", format!("unknown schema tag {:?}", r.schema)));
        }
        Policy::new(r.probs)
    }
}

impl From<Policy> for PolicyRepr {
    fn from(p: Policy) -> Self {
        PolicyRepr {
            schema: POLICY_SCHEMA.to_string(),
            probs: p.probs,
        }
    }
}

fn check_simplex(what: &'static str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(what, "empty probability vector"));
    }
    if let Some(bad) = v.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::invalid(what, format!("entry {bad} is not a probability")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(what, format!("entries sum to {s}")));
    }
    Ok(())
}

impl Policy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("policy", "no contexts"));
        }
        let n = probs[0].len();
        for row in &probs {
            if row.len() != n {
                return Err(Error::Shape("ragged policy table".into()));
            }
            check_simplex("policy", row)?;
        }
        Ok(Policy { probs })
    }

    pub fn uniform(contexts: usize, actions: usize) -> Self {
        Policy {
            probs: vec![vec![1.0 / actions as f64; actions]; contexts],
        }
    }

    /// Point mass on `action` in every context.
    pub fn delta(contexts: usize, actions: usize, action: usize) -> Self {
        let mut row = vec![0.0; actions];
        row[action] = 1.0;
        Policy {
            probs: vec![row; contexts],
        }
    }

    /// Point mass on `actions[x]` in context `x`.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Self {
        Policy {
            probs: actions
                .iter()
                .map(|&a| {
                    let mut row = vec![0.0; num_actions];
                    row[a] = 1.0;
                    row
                })
                .collect(),
        }
    }

    pub fn num_contexts(&self) -> usize {
        self.probs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn probs(&self, context: usize) -> &[f64] {
        &self.probs[context]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.probs
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().flatten().all(|p| *p > 0.0)
    }

    pub(crate) fn from_rows_unchecked(probs: Vec<Vec<f64>>) -> Self {
        debug_assert!(probs.iter().all(|r| check_simplex("policy", r).is_ok()));
        Policy { probs }
    }

    pub fn check_shape(&self, contexts: usize, actions: usize) -> Result<()> {
        if self.num_contexts() != contexts || self.num_actions() != actions {
            return Err(Error::Shape(format!(
                "policy is {}x{}, expected {contexts}x{actions}",
                self.num_contexts(),
                self.num_actions()
            )));
        }
        Ok(())
    }

    /// Floors every entry at [`PROB_FLOOR`] and renormalises.
    pub fn floored(&self) -> Self {
        Policy {
            probs: self.probs.iter().map(|r| floor_renormalize(r)).collect(),
        }
    }

    /// Largest per-context total-variation distance.
    pub fn tv_distance(&self, other: &Policy) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| total_variation(a, b))
            .fold(0.0, f64::max)
    }
}

/// Follower table: a distribution over actions for every `(context, leader action)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConditionalRepr", into = "ConditionalRepr")]
pub struct ConditionalPolicy {
    probs: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConditionalRepr {
    schema: String,
    probs: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<ConditionalRepr> for ConditionalPolicy {
    type Error = Error;

    fn try_from(r: ConditionalRepr) -> Result<Self> {
        if r.schema != CONDITIONAL_POLICY_SCHEMA {
            return Err(Error::invalid(
                "conditional policy",
                format!("unknown schema tag {:?}", r.schema),
            ));
        }
        ConditionalPolicy::new(r.probs)
    }
}

impl From<ConditionalPolicy> for ConditionalRepr {
    fn from(p: ConditionalPolicy) -> Self {
        ConditionalRepr {
            schema: CONDITIONAL_POLICY_SCHEMA.to_string(),
            probs: p.probs,
        }
    }
}

impl ConditionalPolicy {
    pub fn new(probs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if probs.is_empty() || probs[0].is_empty() {
            return Err(Error::invalid("conditional policy", "empty table"));
        }
        let n = probs[0].len();
        for ctx in &probs {
            if ctx.len() != n || ctx.iter().any(|r| r.len() != n) {
                return Err(Error::Shape("conditional policy must be n×n per context".into()));
            }
            for row in ctx {
                check_simplex("conditional policy", row)?;
            }
        }
        Ok(ConditionalPolicy { probs })
    }

    pub fn uniform(contexts: usize, actions: usize) -> Self {
        ConditionalPolicy {
            probs: vec![vec![vec![1.0 / actions as f64; actions]; actions]; contexts],
        }
    }

    /// Deterministic follower: `map[x][y]` is the response to leader action `y`.
    pub fn deterministic(map: &[Vec<usize>]) -> Self {
        let n = map[0].len();
        ConditionalPolicy {
            probs: map
                .iter()
                .map(|ctx| {
                    ctx.iter()
                        .map(|&b| {
                            let mut row = vec![0.0; n];
                            row[b] = 1.0;
                            row
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// The same leader-independent distribution `π(·|x)` after every leader action.
    pub fn from_policy(pi: &Policy) -> Self {
        let n = pi.num_actions();
        ConditionalPolicy {
            probs: pi.rows().iter().map(|r| vec![r.clone(); n]).collect(),
        }
    }

    pub fn num_contexts(&self) -> usize {
        self.probs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn probs(&self, context: usize, leader_action: usize) -> &[f64] {
        &self.probs[context][leader_action]
    }

    pub fn rows(&self) -> &[Vec<Vec<f64>>] {
        &self.probs
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().flatten().flatten().all(|p| *p > 0.0)
    }

    pub(crate) fn from_rows_unchecked(probs: Vec<Vec<Vec<f64>>>) -> Self {
        ConditionalPolicy { probs }
    }

    pub fn check_shape(&self, contexts: usize, actions: usize) -> Result<()> {
        if self.num_contexts() != contexts || self.num_actions() != actions {
            return Err(Error::Shape(format!(
                "conditional policy is {}x{}, expected {contexts}x{actions}",
                self.num_contexts(),
                self.num_actions()
            )));
        }
        Ok(())
    }

    pub fn floored(&self) -> Self {
        ConditionalPolicy {
            probs: self
                .probs
                .iter()
                .map(|c| c.iter().map(|r| floor_renormalize(r)).collect())
                .collect(),
        }
    }

    /// Total-variation distance averaged over `x ∼ ρ, y ∼ weights(·|x)`.
    pub fn weighted_tv_distance(&self, other: &Self, rho: &[f64], weights: &Policy) -> f64 {
        let mut d = 0.0;
        for (x, w) in rho.iter().enumerate() {
            for y in 0..self.num_actions() {
                d += w * weights.probs(x)[y] * total_variation(self.probs(x, y), other.probs(x, y));
            }
        }
        d
    }

    /// Largest total-variation distance over all `(x, y)`.
    pub fn max_tv_distance(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .flatten()
            .zip(other.probs.iter().flatten())
            .map(|(a, b)| total_variation(a, b))
            .fold(0.0, f64::max)
    }
}

/// Reference policies for the leader and the follower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RefRepr", into = "RefRepr")]
pub struct ReferencePair {
    leader: Policy,
    follower: ConditionalPolicy,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RefRepr {
    leader: Policy,
    follower: ConditionalPolicy,
}

impl TryFrom<RefRepr> for ReferencePair {
    type Error = Error;

    fn try_from(r: RefRepr) -> Result<Self> {
        ReferencePair::new(r.leader, r.follower)
    }
}

impl From<ReferencePair> for RefRepr {
    fn from(r: ReferencePair) -> Self {
        RefRepr {
            leader: r.leader,
            follower: r.follower,
        }
    }
}

impl ReferencePair {
    pub fn new(leader: Policy, follower: ConditionalPolicy) -> Result<Self> {
        follower.check_shape(leader.num_contexts(), leader.num_actions())?;
        if !leader.is_strictly_positive() || !follower.is_strictly_positive() {
            return Err(Error::invalid(
                "reference policies",
                "every reference probability must be strictly positive",
            ));
        }
        Ok(ReferencePair { leader, follower })
    }

    pub fn uniform(contexts: usize, actions: usize) -> Self {
        ReferencePair {
            leader: Policy::uniform(contexts, actions),
            follower: ConditionalPolicy::uniform(contexts, actions),
        }
    }

    pub fn leader(&self) -> &Policy {
        &self.leader
    }

    pub fn follower(&self) -> &ConditionalPolicy {
        &self.follower
    }

    pub fn num_contexts(&self) -> usize {
        self.leader.num_contexts()
    }

    pub fn num_actions(&self) -> usize {
        self.leader.num_actions()
    }
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub(crate) fn floor_renormalize(v: &[f64]) -> Vec<f64> {
    let out: Vec<f64> = v.iter().map(|p| p.max(PROB_FLOOR)).collect();
    let s: f64 = out.iter().sum();
    out.into_iter().map(|p| p / s).collect()
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::invalid("projection input", "empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("projection input", "non-finite entry"));
    }
    Ok(project_simplex_unchecked(v))
}

pub(crate) fn project_simplex_unchecked(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Result of a KL divergence evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kl {
    Finite(f64),
    /// `p` puts mass where `q` has none.
    Infinite,
}

impl Kl {
    pub fn value(self) -> f64 {
        match self {
            Kl::Finite(v) => v,
            Kl::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Kl::Infinite)
    }
}

/// `KL(p ‖ q) = Σ p_i ln(p_i / q_i)` in nats, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<Kl> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("KL between lengths {} and {}", p.len(), q.len())));
    }
    if p.iter().chain(q).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("KL input", "entries must be finite and nonnegative"));
    }
    let mut s = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(Kl::Infinite);
        }
        s += pi * (pi / qi).ln();
    }
    Ok(Kl::Finite(s.max(0.0)))
}

pub(crate) fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

/// `ref_i · exp(scores_i / τ)`, normalised: the maximiser of
/// `⟨scores, u⟩ − τ·KL(u ‖ ref)` over the simplex.
pub fn softmax_policy(scores: &[f64], reference: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid("temperature", format!("τ = {tau} must be positive")));
    }
    if scores.len() != reference.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} reference entries",
            scores.len(),
            reference.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores", "non-finite entry"));
    }
    if reference.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::invalid("reference policy", "entries must be strictly positive"));
    }
    Ok(softmax_unchecked(scores, reference, tau))
}

pub(crate) fn softmax_unchecked(scores: &[f64], reference: &[f64], tau: f64) -> Vec<f64> {
    // shift by the max of the log-weights so the largest term is exp(0)
    let logits: Vec<f64> = scores
        .iter()
        .zip(reference)
        .map(|(s, r)| s / tau + r.ln())
        .collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn projection_examples() {
        assert!(close(&project_simplex(&[0.2, 0.3, 0.5]).unwrap(), &[0.2, 0.3, 0.5], 1e-15));
        assert_eq!(project_simplex(&[2.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(close(&project_simplex(&[1.0, 0.5, 0.0]).unwrap(), &[0.75, 0.25, 0.0], 1e-15));
        assert!(project_simplex(&[1.0, f64::NAN]).is_err());
        assert!(project_simplex(&[]).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_divergence(&p, &p).unwrap(), Kl::Finite(0.0));
        let u = [1.0 / 3.0; 3];
        let v = kl_divergence(&u, &[0.5, 0.25, 0.25]).unwrap().value();
        assert!((v - (32.0f64 / 27.0).ln() / 3.0).abs() < 1e-12);
        assert!((v - 0.056633).abs() < 1e-6);
        let v = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap().value();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), Kl::Infinite);
        assert!(kl_divergence(&[0.5, f64::NAN], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let r = [0.2, 0.3, 0.5];
        assert!(close(&softmax_policy(&[0.7; 3], &r, 0.3).unwrap(), &r, 1e-15));
        let out = softmax_policy(&[1.0, 0.0, 0.5], &r, 1e6).unwrap();
        assert!(close(&out, &r, 1e-5));
        let out = softmax_policy(&[1.0, 0.0, 0.0], &[1.0 / 3.0; 3], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!(close(&out, &[e / (e + 2.0), 1.0 / (e + 2.0), 1.0 / (e + 2.0)], 1e-15));
        assert!(close(&out, &[0.57612, 0.21194, 0.21194], 1e-5));
        assert!(softmax_policy(&[1.0, 0.0], &[0.5, 0.5], 0.0).is_err());
        assert!(softmax_policy(&[1.0, 0.0], &[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn softmax_survives_tiny_temperature() {
        let out = softmax_policy(&[1.0, 0.0], &[0.5, 0.5], 1e-6).unwrap();
        assert_eq!(out, vec![1.0, 0.0]);
    }

    #[test]
    fn reference_pair_requires_positive_entries() {
        let l = Policy::delta(1, 2, 0);
        assert!(ReferencePair::new(l, ConditionalPolicy::uniform(1, 2)).is_err());
    }

    #[test]
    fn policy_json_round_trip() {
        let p = Policy::new(vec![vec![0.25, 0.75], vec![1.0, 0.0]]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Policy>(&s).unwrap(), p);
        let bad = r#"{"schema":"prefgame.policy.v1","probs":[[0.5,0.6]]}"#;
        assert!(serde_json::from_str::<Policy>(bad).is_err());
    }

    #[test]
    fn floor_keeps_simplex() {
        let p = Policy::delta(1, 3, 1).floored();
        assert!(p.is_strictly_positive());
        assert!((p.probs(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
