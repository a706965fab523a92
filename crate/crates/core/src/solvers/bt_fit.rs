//! Bradley–Terry reward fitting from pairwise comparisons.
//!
//! Minimises, independently per context,
//!
//! `Σ_k c_k·[−ln σ(r_w − r_l)] + λ·c_k·(r_w + r_l)²`
//!
//! with a damped Newton method. The second term is the centring penalty; with
//! `λ = 0` rewards are only identified up to a shift per connected component of
//! the comparison graph, and each component is reported sum-centred.

use serde::{Deserialize, Serialize};

use crate::dataset::{ComparisonDataset, IndexedComparison};
use crate::error::{Error, Result};
use crate::linalg;
use crate::preference::sigmoid;
use crate::reward::RewardTable;
use crate::space::ActionSpace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BtFitOptions {
    /// Stop once the sup-norm of the gradient is below this.
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for BtFitOptions {
    fn default() -> Self {
        BtFitOptions {
            grad_tol: 1e-9,
            max_iters: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtFit {
    pub rewards: RewardTable,
    /// `(context, action)` pairs that never appear in a comparison; their
    /// reward is pinned to 0.
    pub unobserved: Vec<(usize, usize)>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct ContextFit<'a> {
    records: Vec<&'a IndexedComparison>,
    lambda: f64,
    // observed action indices, and the component id of each
    vars: Vec<usize>,
    component: Vec<usize>,
    components: usize,
}

impl ContextFit<'_> {
    fn index(&self, action: usize) -> usize {
        self.vars.iter().position(|&a| a == action).expect("observed action")
    }

    fn loss(&self, r: &[f64]) -> f64 {
        let mut l = 0.0;
        for c in &self.records {
            let (w, ls) = (r[self.index(c.chosen)], r[self.index(c.rejected)]);
            let k = c.count as f64;
            l += k * softplus(-(w - ls)) + self.lambda * k * (w + ls).powi(2);
        }
        if self.lambda == 0.0 {
            for comp in 0..self.components {
                let s: f64 = (0..self.vars.len()).filter(|&i| self.component[i] == comp).map(|i| r[i]).sum();
                l += 0.5 * s * s;
            }
        }
        l
    }

    fn grad_hess(&self, r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.vars.len();
        let mut g = vec![0.0; m];
        let mut h = vec![0.0; m * m];
        for c in &self.records {
            let (wi, li) = (self.index(c.chosen), self.index(c.rejected));
            let k = c.count as f64;
            let d = r[wi] - r[li];
            let s = sigmoid(d);
            g[wi] -= k * (1.0 - s);
            g[li] += k * (1.0 - s);
            let curv = k * s * (1.0 - s);
            h[wi * m + wi] += curv;
            h[li * m + li] += curv;
            h[wi * m + li] -= curv;
            h[li * m + wi] -= curv;
            if self.lambda > 0.0 {
                let t = 2.0 * self.lambda * k;
                let sum = r[wi] + r[li];
                g[wi] += t * sum;
                g[li] += t * sum;
                for (a, b) in [(wi, wi), (li, li), (wi, li), (li, wi)] {
                    h[a * m + b] += t;
                }
            }
        }
        (g, h)
    }

    fn grad_norm(&self, r: &[f64]) -> f64 {
        let (g, _, lik) = self.full_grad_hess(r);
        lik.max(g.iter().fold(0.0f64, |a, v| a.max(v.abs())))
    }

    /// Gradient including the gauge penalty.
    fn full_grad_hess(&self, r: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let m = self.vars.len();
        let (mut g, mut h) = self.grad_hess(r);
        // the likelihood gradient alone decides convergence
        let lik_norm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if self.lambda == 0.0 {
            for comp in 0..self.components {
                let members: Vec<usize> = (0..m).filter(|&i| self.component[i] == comp).collect();
                let s: f64 = members.iter().map(|&i| r[i]).sum();
                for &i in &members {
                    g[i] += s;
                    for &j in &members {
                        h[i * m + j] += 1.0;
                    }
                }
            }
        }
        (g, h, lik_norm)
    }
}

/// Fits Bradley–Terry rewards to `data` by penalised maximum likelihood.
pub fn fit_bt_mle(data: &ComparisonDataset, space: &ActionSpace, lambda: f64, opts: BtFitOptions) -> Result<BtFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("BT regularizer", format!("λ = {lambda} must be nonnegative")));
    }
    let resolved = data.resolve(space)?;
    let n = space.num_actions();
    let mut rewards = vec![vec![0.0; n]; space.num_contexts()];
    let mut unobserved = Vec::new();
    let mut iterations = 0;
    let mut grad_norm: f64 = 0.0;
    let mut converged = true;

    for (x, row) in rewards.iter_mut().enumerate() {
        let records: Vec<&IndexedComparison> =
            resolved.iter().filter(|c| c.context == x && c.count > 0).collect();
        let mut seen = vec![false; n];
        for c in &records {
            seen[c.chosen] = true;
            seen[c.rejected] = true;
        }
        let vars: Vec<usize> = (0..n).filter(|&a| seen[a]).collect();
        for a in (0..n).filter(|&a| !seen[a]) {
            log::warn!("context {x}: action {a} never compared; reward pinned to 0");
            unobserved.push((x, a));
        }
        if vars.is_empty() {
            continue;
        }
        // connected components of the comparison graph (union-find)
        let mut parent: Vec<usize> = (0..vars.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut i = i;
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for c in &records {
            let a = find(&mut parent, vars.iter().position(|&v| v == c.chosen).unwrap());
            let b = find(&mut parent, vars.iter().position(|&v| v == c.rejected).unwrap());
            parent[a] = b;
        }
        let mut roots = Vec::new();
        let component: Vec<usize> = (0..vars.len())
            .map(|i| {
                let r = find(&mut parent, i);
                match roots.iter().position(|&q| q == r) {
                    Some(k) => k,
                    None => {
                        roots.push(r);
                        roots.len() - 1
                    }
                }
            })
            .collect();
        let fit = ContextFit {
            records,
            lambda,
            components: roots.len(),
            vars,
            component,
        };

        let m = fit.vars.len();
        let mut r = vec![0.0; m];
        let mut loss = fit.loss(&r);
        let mut ok = false;
        let mut norm = f64::INFINITY;
        for it in 0..opts.max_iters {
            let (g, mut h, lik_norm) = fit.full_grad_hess(&r);
            norm = lik_norm.max(g.iter().fold(0.0f64, |a, v| a.max(v.abs())));
            iterations = iterations.max(it);
            if norm <= opts.grad_tol {
                ok = true;
                break;
            }
            let diag = (0..m).map(|i| h[i * m + i]).fold(0.0f64, f64::max);
            for i in 0..m {
                h[i * m + i] += 1e-12 * (1.0 + diag);
            }
            let d = linalg::solve(h, g.iter().map(|v| -v).collect())
                .ok_or_else(|| Error::invalid("BT fit", "singular Newton system"))?;
            let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let mut step = 1.0;
            loop {
                let trial: Vec<f64> = r.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                let tl = fit.loss(&trial);
                // Close to the optimum the decrease of a Newton step is below the
                // rounding error of the loss; a full step that shrinks the
                // gradient is taken regardless.
                let accept = tl <= loss + 1e-4 * step * slope
                    || step < 1e-12
                    || (step == 1.0 && fit.grad_norm(&trial) < 0.5 * norm);
                if accept {
                    r = trial;
                    loss = tl;
                    break;
                }
                step *= 0.5;
            }
        }
        if !ok {
            log::warn!("context {x}: BT fit stopped with gradient norm {norm:e}");
            converged = false;
        }
        grad_norm = grad_norm.max(norm);
        for (i, &a) in fit.vars.iter().enumerate() {
            row[a] = r[i];
        }
    }
    Ok(BtFit {
        rewards: RewardTable::new(rewards)?,
        unobserved,
        iterations,
        grad_norm,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Comparison;

    fn abc() -> ActionSpace {
        ActionSpace::single(&["A", "B", "C"]).unwrap()
    }

    #[test]
    fn chain_data_orders_rewards() {
        let d = ComparisonDataset::new(vec![
            Comparison::new("x0", "A", "B", 100),
            Comparison::new("x0", "B", "C", 100),
        ])
        .unwrap();
        let fit = fit_bt_mle(&d, &abc(), 0.0, BtFitOptions::default()).unwrap();
        let r = fit.rewards.row(0);
        assert!(r[0] > r[1] && r[1] > r[2], "{r:?}");
        assert!(r.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn balanced_data_gives_equal_rewards() {
        let s = ActionSpace::single(&["A", "B"]).unwrap();
        let d = ComparisonDataset::new(vec![
            Comparison::new("x0", "A", "B", 5),
            Comparison::new("x0", "B", "A", 5),
        ])
        .unwrap();
        let fit = fit_bt_mle(&d, &s, 0.0, BtFitOptions::default()).unwrap();
        assert!((fit.rewards.get(0, 0) - fit.rewards.get(0, 1)).abs() < 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn three_of_four_gives_log_three() {
        let s = ActionSpace::single(&["A", "B"]).unwrap();
        let d = ComparisonDataset::new(vec![
            Comparison::new("x0", "A", "B", 3),
            Comparison::new("x0", "B", "A", 1),
        ])
        .unwrap();
        let fit = fit_bt_mle(&d, &s, 0.0, BtFitOptions::default()).unwrap();
        let diff = fit.rewards.get(0, 0) - fit.rewards.get(0, 1);
        assert!((diff - 3f64.ln()).abs() < 1e-4);
        assert!((fit.rewards.get(0, 0) + fit.rewards.get(0, 1)).abs() < 1e-9);
    }

    #[test]
    fn unobserved_action_is_pinned() {
        let d = ComparisonDataset::new(vec![Comparison::new("x0", "A", "B", 3), Comparison::new("x0", "B", "A", 1)]).unwrap();
        let fit = fit_bt_mle(&d, &abc(), 0.0, BtFitOptions::default()).unwrap();
        assert_eq!(fit.unobserved, vec![(0, 2)]);
        assert_eq!(fit.rewards.get(0, 2), 0.0);
    }

    #[test]
    fn centring_penalty_shrinks_sum() {
        let s = ActionSpace::single(&["A", "B"]).unwrap();
        let d = ComparisonDataset::new(vec![Comparison::new("x0", "A", "B", 3), Comparison::new("x0", "B", "A", 1)]).unwrap();
        let fit = fit_bt_mle(&d, &s, 0.01, BtFitOptions::default()).unwrap();
        // the penalty is symmetric in the pair, so the optimum is exactly centred
        assert!((fit.rewards.get(0, 0) + fit.rewards.get(0, 1)).abs() < 1e-9);
        assert!((fit.rewards.get(0, 0) - fit.rewards.get(0, 1) - 3f64.ln()).abs() < 1e-6);
        assert!(fit_bt_mle(&d, &s, -1.0, BtFitOptions::default()).is_err());
    }
}
