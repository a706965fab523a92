//! Inference-time refinement: repeated sampling chains and Best-of-N metrics.
//!
//! A chain draws `y₁ ∼ π(·|x)` and then `y_i ∼ ω(·|x, y_{i−1})`; i.i.d.
//! resampling is the special case where the follower ignores the previous
//! action.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{ConditionalPolicy, Policy};
use crate::reward::RewardTable;
use crate::sampling::{categorical, stream};

/// How successive samples are drawn within one context.
#[derive(Debug, Clone, Copy)]
pub enum SamplingLaw<'a> {
    Iid(&'a Policy),
    Chain {
        leader: &'a Policy,
        follower: &'a ConditionalPolicy,
    },
}

impl<'a> SamplingLaw<'a> {
    fn check(&self) -> Result<()> {
        if let SamplingLaw::Chain { leader, follower } = self {
            follower.check_shape(leader.num_contexts(), leader.num_actions())?;
        }
        Ok(())
    }

    fn leader(&self) -> &'a Policy {
        match self {
            SamplingLaw::Iid(p) => p,
            SamplingLaw::Chain { leader, .. } => leader,
        }
    }

    pub fn num_contexts(&self) -> usize {
        self.leader().num_contexts()
    }

    pub fn num_actions(&self) -> usize {
        self.leader().num_actions()
    }

    fn first(&self, x: usize) -> &'a [f64] {
        self.leader().probs(x)
    }

    fn next(&self, x: usize, prev: usize) -> &'a [f64] {
        match self {
            SamplingLaw::Iid(p) => p.probs(x),
            SamplingLaw::Chain { follower, .. } => follower.probs(x, prev),
        }
    }

    fn draw<R: rand::Rng + ?Sized>(&self, x: usize, n: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        let mut y = categorical(self.first(x), rng);
        out.push(y);
        for _ in 1..n {
            y = categorical(self.next(x, y), rng);
            out.push(y);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementChain {
    pub context: usize,
    pub actions: Vec<usize>,
    pub seed: u64,
}

/// Samples one leader-then-follower chain of length `n` in context `x`.
pub fn sample_chain(pi: &Policy, omega: &ConditionalPolicy, x: usize, n: usize, seed: u64) -> Result<RefinementChain> {
    let law = SamplingLaw::Chain { leader: pi, follower: omega };
    law.check()?;
    if n < 1 {
        return Err(Error::invalid("chain length", "N must be at least 1"));
    }
    if x >= pi.num_contexts() {
        return Err(Error::Shape(format!("context {x} out of range")));
    }
    let mut rng = stream(seed, 0);
    Ok(RefinementChain {
        context: x,
        actions: law.draw(x, n, &mut rng),
        seed,
    })
}

/// The set of actions a user is satisfied with, per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSpec {
    /// Explicit action indices per context.
    Actions(Vec<Vec<usize>>),
    /// The maximisers of an annotator's reward.
    TopReward(RewardTable),
}

impl TargetSpec {
    fn masks(&self, contexts: usize, n: usize) -> Result<Vec<Vec<bool>>> {
        match self {
            TargetSpec::Actions(sets) => {
                if sets.len() != contexts {
                    return Err(Error::Shape(format!("{} target sets for {contexts} contexts", sets.len())));
                }
                sets.iter()
                    .enumerate()
                    .map(|(x, s)| {
                        if s.is_empty() {
                            return Err(Error::invalid("target", format!("context {x}: empty target set")));
                        }
                        let mut m = vec![false; n];
                        for &a in s {
                            if a >= n {
                                return Err(Error::invalid("target", format!("context {x}: action {a} out of range")));
                            }
                            m[a] = true;
                        }
                        Ok(m)
                    })
                    .collect()
            }
            TargetSpec::TopReward(r) => {
                if r.num_contexts() != contexts || r.num_actions() != n {
                    return Err(Error::Shape("target reward table does not match the policy".into()));
                }
                Ok((0..contexts)
                    .map(|x| {
                        let row = r.row(x);
                        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        row.iter().map(|v| *v == m).collect()
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    Analytic,
    MonteCarlo { seed: u64, trials: u64 },
}

/// A probability per context, its ρ-weighted mean and, for Monte Carlo
/// estimates, the normal-approximation standard error of the mean. The error
/// uses the proportion `(hits + ½)/(trials + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub per_context: Vec<f64>,
    pub mean: f64,
    pub stderr: Option<f64>,
}

fn check_rho(rho: &[f64], contexts: usize) -> Result<()> {
    if rho.len() != contexts {
        return Err(Error::Shape(format!("{} context weights for {contexts} contexts", rho.len())));
    }
    Ok(())
}

fn monte_carlo(rho: &[f64], trials: u64, seed: u64, mut hit: impl FnMut(usize, &mut crate::sampling::StreamRng) -> bool) -> Estimate {
    let mut per_context = Vec::with_capacity(rho.len());
    let mut var = 0.0;
    for (x, w) in rho.iter().enumerate() {
        let mut hits = 0u64;
        for t in 0..trials {
            let mut rng = stream(seed, x as u64 * trials + t);
            if hit(x, &mut rng) {
                hits += 1;
            }
        }
        let p = hits as f64 / trials as f64;
        // smoothed proportion, so an all-hit or no-hit run keeps a nonzero error
        let q = (hits as f64 + 0.5) / (trials as f64 + 1.0);
        var += w * w * q * (1.0 - q) / trials as f64;
        per_context.push(p);
    }
    let mean = per_context.iter().zip(rho).map(|(p, w)| p * w).sum();
    Estimate { per_context, mean, stderr: Some(var.sqrt()) }
}

/// Probability that at least one of `y₁ … y_N` lands in the target set.
///
/// The analytic mode propagates the not-yet-hit mass through the chain with
/// the target states made absorbing, summing the mass absorbed at each step.
pub fn hit_probability(law: SamplingLaw<'_>, rho: &[f64], target: &TargetSpec, n: usize, mode: EvalMode) -> Result<Estimate> {
    law.check()?;
    if n < 1 {
        return Err(Error::invalid("sample count", "N must be at least 1"));
    }
    let (contexts, k) = (law.num_contexts(), law.num_actions());
    check_rho(rho, contexts)?;
    let masks = target.masks(contexts, k)?;
    match mode {
        EvalMode::Analytic => {
            let per_context: Vec<f64> = (0..contexts)
                .map(|x| {
                    let mask = &masks[x];
                    let first = law.first(x);
                    let mut hit: f64 = first.iter().zip(mask).filter(|(_, t)| **t).map(|(p, _)| p).sum();
                    let mut miss: Vec<f64> = first.iter().zip(mask).map(|(p, t)| if *t { 0.0 } else { *p }).collect();
                    for _ in 1..n {
                        let mut next = vec![0.0; k];
                        for (a, m) in miss.iter().enumerate() {
                            if *m == 0.0 {
                                continue;
                            }
                            for (b, q) in law.next(x, a).iter().enumerate() {
                                if mask[b] {
                                    hit += m * q;
                                } else {
                                    next[b] += m * q;
                                }
                            }
                        }
                        miss = next;
                    }
                    hit.clamp(0.0, 1.0)
                })
                .collect();
            let mean = per_context.iter().zip(rho).map(|(p, w)| p * w).sum();
            Ok(Estimate { per_context, mean, stderr: None })
        }
        EvalMode::MonteCarlo { seed, trials } => {
            if trials < 1 {
                return Err(Error::invalid("trials", "need at least one Monte Carlo trial"));
            }
            Ok(monte_carlo(rho, trials, seed, |x, rng| {
                law.draw(x, n, rng).iter().any(|&a| masks[x][a])
            }))
        }
    }
}

/// `max_i r(x, y_i)` over a nonempty sample set.
pub fn best_of_n_value(r: &RewardTable, x: usize, samples: &[usize]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("samples", "Best-of-N needs at least one sample"));
    }
    if x >= r.num_contexts() || samples.iter().any(|&a| a >= r.num_actions()) {
        return Err(Error::Shape("sample outside the reward table".into()));
    }
    Ok(samples.iter().map(|&a| r.get(x, a)).fold(f64::NEG_INFINITY, f64::max))
}

/// Distribution of the level index of `max_i r(x, y_i)` over `N` draws.
fn max_level_distribution(law: &SamplingLaw<'_>, x: usize, levels: &[usize], num_levels: usize, n: usize) -> Vec<f64> {
    let k = levels.len();
    // state: (last action, running max level)
    let mut d = vec![0.0; k * num_levels];
    for (a, p) in law.first(x).iter().enumerate() {
        d[a * num_levels + levels[a]] += p;
    }
    for _ in 1..n {
        let mut next = vec![0.0; k * num_levels];
        for a in 0..k {
            for l in 0..num_levels {
                let m = d[a * num_levels + l];
                if m == 0.0 {
                    continue;
                }
                for (b, q) in law.next(x, a).iter().enumerate() {
                    next[b * num_levels + l.max(levels[b])] += m * q;
                }
            }
        }
        d = next;
    }
    let mut out = vec![0.0; num_levels];
    for a in 0..k {
        for l in 0..num_levels {
            out[l] += d[a * num_levels + l];
        }
    }
    out
}

/// `P[ max_i r(y_i) ≥ max_i r(y'_i) ]` with `y₁:N` from `first` and `y'₁:N`
/// from `second`, drawn independently. Ties count for `first`.
pub fn bon_preference(
    first: SamplingLaw<'_>,
    second: SamplingLaw<'_>,
    r: &RewardTable,
    rho: &[f64],
    n: usize,
    mode: EvalMode,
) -> Result<Estimate> {
    first.check()?;
    second.check()?;
    if n < 1 {
        return Err(Error::invalid("sample count", "N must be at least 1"));
    }
    let (contexts, k) = (first.num_contexts(), first.num_actions());
    if second.num_contexts() != contexts || second.num_actions() != k || r.num_contexts() != contexts || r.num_actions() != k {
        return Err(Error::Shape("policies and reward table disagree in shape".into()));
    }
    check_rho(rho, contexts)?;
    match mode {
        EvalMode::Analytic => {
            let per_context: Vec<f64> = (0..contexts)
                .map(|x| {
                    let row = r.row(x);
                    let mut values = row.to_vec();
                    values.sort_by(f64::total_cmp);
                    values.dedup();
                    let levels: Vec<usize> = row
                        .iter()
                        .map(|v| values.iter().position(|u| u == v).expect("level"))
                        .collect();
                    let ma = max_level_distribution(&first, x, &levels, values.len(), n);
                    let mb = max_level_distribution(&second, x, &levels, values.len(), n);
                    let mut cdf_b = 0.0;
                    let mut s = 0.0;
                    for l in 0..values.len() {
                        cdf_b += mb[l];
                        s += ma[l] * cdf_b;
                    }
                    s.clamp(0.0, 1.0)
                })
                .collect();
            let mean = per_context.iter().zip(rho).map(|(p, w)| p * w).sum();
            Ok(Estimate { per_context, mean, stderr: None })
        }
        EvalMode::MonteCarlo { seed, trials } => {
            if trials < 1 {
                return Err(Error::invalid("trials", "need at least one Monte Carlo trial"));
            }
            Ok(monte_carlo(rho, trials, seed, |x, rng| {
                let a = first.draw(x, n, rng);
                let b = second.draw(x, n, rng);
                let best = |s: &[usize]| s.iter().map(|&y| r.get(x, y)).fold(f64::NEG_INFINITY, f64::max);
                best(&a) >= best(&b)
            }))
        }
    }
}
