use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{argmax, softmax_unchecked, Policy};
use crate::reward::RewardTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlhfPolicy {
    pub policy: Policy,
    /// Set when `τ ≤ 0` and the greedy limit policy was returned.
    pub limit_case: bool,
}

/// KL-regularised reward maximiser `π(y|x) ∝ π_ref(y|x)·exp(r(x,y)/τ)`.
///
/// For `τ ≤ 0` returns the greedy policy (lowest index on ties) and flags it.
pub fn rlhf_policy(rewards: &RewardTable, reference: &Policy, tau: f64) -> Result<RlhfPolicy> {
    reference.check_shape(rewards.num_contexts(), rewards.num_actions())?;
    if tau.is_nan() {
        return Err(Error::invalid("temperature", "τ is NaN"));
    }
    if tau <= 0.0 {
        let greedy: Vec<usize> = (0..rewards.num_contexts()).map(|x| argmax(rewards.row(x))).collect();
        return Ok(RlhfPolicy {
            policy: Policy::deterministic(&greedy, rewards.num_actions()),
            limit_case: true,
        });
    }
    if !reference.is_strictly_positive() {
        return Err(Error::invalid("reference policy", "entries must be strictly positive"));
    }
    let rows = (0..rewards.num_contexts())
        .map(|x| softmax_unchecked(rewards.row(x), reference.probs(x), tau))
        .collect();
    Ok(RlhfPolicy {
        policy: Policy::from_rows_unchecked(rows),
        limit_case: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rewards_return_reference() {
        let r = RewardTable::new(vec![vec![2.0; 3]]).unwrap();
        let reference = Policy::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let out = rlhf_policy(&r, &reference, 0.5).unwrap();
        assert!(out.policy.tv_distance(&reference) < 1e-15);
    }

    #[test]
    fn softmax_example() {
        let r = RewardTable::new(vec![vec![1.0, 0.0, 0.0]]).unwrap();
        let out = rlhf_policy(&r, &Policy::uniform(1, 3), 1.0).unwrap();
        let want = [0.57612, 0.21194, 0.21194];
        for (p, w) in out.policy.probs(0).iter().zip(want) {
            assert!((p - w).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_temperature_is_greedy_with_low_index_ties() {
        let r = RewardTable::new(vec![vec![0.0, 1.0, 1.0]]).unwrap();
        let out = rlhf_policy(&r, &Policy::uniform(1, 3), 0.0).unwrap();
        assert!(out.limit_case);
        assert_eq!(out.policy.probs(0), &[0.0, 1.0, 0.0]);
    }
}
