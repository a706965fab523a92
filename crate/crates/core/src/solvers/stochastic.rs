//! Sampled two-timescale GDA with score-function gradient estimates.
//!
//! Policies are stored as logit tables (`π = softmax(θ)`, `ω = softmax(φ)`).
//! Each iteration draws `B` tuples `(x, y, y', p(y ≻ y'|x))` and forms
//!
//! `ĝ_θ = (1/B) Σ (p_b − τ^L k^L_b) ∇_θ ln π(y_b|x_b)`
//! `ĝ_φ = (1/B) Σ (p_b − τ^F k^F_b) ∇_φ ln ω(y'_b|x_b, y_b)`
//!
//! with likelihood ratios `k = π/π_ref` and `k = ω/ω_ref`. The leader ascends
//! `ĝ_θ` with step `η^L`; the follower descends `ĝ_φ` with step `κ·η^L`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{softmax_unchecked, ConditionalPolicy, Policy, ReferencePair, PROB_FLOOR};
use crate::preference::PreferenceMatrix;
use crate::sampling::{categorical, seeded};
use crate::solvers::exact::StackelbergSolution;
use crate::solvers::gda::{Averager, GdaConfig, GdaOutcome, SolveTrace, TraceRow};
use crate::solvers::objective::{Gradients, Regularization, SlhfProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    #[default]
    None,
    /// Subtract the mean weight of the other samples in the batch
    /// (leave-one-out, so the estimate stays unbiased). No-op for `B = 1`.
    BatchMean,
}

/// How the KL penalty enters the per-sample weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlEstimator {
    /// Likelihood ratios `p − τ·k` for both players.
    #[default]
    AsPrinted,
    /// Log-ratio weights whose expectation is exactly the chain-rule
    /// gradient of the objective in logit coordinates:
    /// leader `p + τ^F ln k^F − τ^L ln k^L`, follower `p + τ^F ln k^F`.
    ExactKl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochasticGdaConfig {
    pub gda: GdaConfig,
    pub batch_size: usize,
    pub baseline: Baseline,
    pub kl_estimator: KlEstimator,
    pub seed: u64,
}

impl Default for StochasticGdaConfig {
    fn default() -> Self {
        StochasticGdaConfig {
            gda: GdaConfig::default(),
            batch_size: 32,
            baseline: Baseline::None,
            kl_estimator: KlEstimator::AsPrinted,
            seed: 0,
        }
    }
}

impl StochasticGdaConfig {
    pub fn validate(&self) -> Result<()> {
        self.gda.validate()?;
        if self.batch_size < 1 {
            return Err(Error::invalid("stochastic GDA config", "batch size must be at least 1"));
        }
        Ok(())
    }
}

/// One draw of the batch estimator, in logit coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ScoreEstimator<'a> {
    pub pref: &'a PreferenceMatrix,
    pub refs: &'a ReferencePair,
    pub reg: Regularization,
    pub kl: KlEstimator,
    pub baseline: Baseline,
    pub leader_follower_kl: bool,
}

struct Sample {
    x: usize,
    y: usize,
    y2: usize,
    w_leader: f64,
    w_follower: f64,
}

impl ScoreEstimator<'_> {
    pub fn estimate<R: Rng + ?Sized>(
        &self,
        pi: &Policy,
        omega: &ConditionalPolicy,
        batch: usize,
        rng: &mut R,
    ) -> Gradients {
        let rho = self.pref.space().context_dist();
        let Regularization { leader: tl, follower: tf } = self.reg;
        let mut samples: Vec<Sample> = (0..batch)
            .map(|_| {
                let x = categorical(rho, rng);
                let y = categorical(pi.probs(x), rng);
                let y2 = categorical(omega.probs(x, y), rng);
                let p = self.pref.get(x, y, y2);
                let kl = pi.probs(x)[y].max(PROB_FLOOR) / self.refs.leader().probs(x)[y];
                let kf = omega.probs(x, y)[y2].max(PROB_FLOOR) / self.refs.follower().probs(x, y)[y2];
                let (w_leader, w_follower) = match self.kl {
                    KlEstimator::AsPrinted => (p - tl * kl, p - tf * kf),
                    KlEstimator::ExactKl => {
                        let fk = tf * kf.ln();
                        let lead = p - tl * kl.ln() + if self.leader_follower_kl { fk } else { 0.0 };
                        (lead, p + fk)
                    }
                };
                Sample { x, y, y2, w_leader, w_follower }
            })
            .collect();
        if self.baseline == Baseline::BatchMean && batch > 1 {
            let sl: f64 = samples.iter().map(|s| s.w_leader).sum();
            let sf: f64 = samples.iter().map(|s| s.w_follower).sum();
            let others = (batch - 1) as f64;
            for s in &mut samples {
                s.w_leader -= (sl - s.w_leader) / others;
                s.w_follower -= (sf - s.w_follower) / others;
            }
        }
        let n = pi.num_actions();
        let mut leader = vec![vec![0.0; n]; pi.num_contexts()];
        let mut follower = vec![vec![vec![0.0; n]; n]; pi.num_contexts()];
        let inv_b = 1.0 / batch as f64;
        for s in &samples {
            // ∇_θ ln softmax(θ)_y = e_y − π
            let p = pi.probs(s.x);
            for a in 0..n {
                let e = if a == s.y { 1.0 } else { 0.0 };
                leader[s.x][a] += inv_b * s.w_leader * (e - p[a]);
            }
            let w = omega.probs(s.x, s.y);
            for a in 0..n {
                let e = if a == s.y2 { 1.0 } else { 0.0 };
                follower[s.x][s.y][a] += inv_b * s.w_follower * (e - w[a]);
            }
        }
        Gradients { leader, follower }
    }
}

/// Sampled StackelbergGDA on tabular logits. Deterministic for a given seed.
pub fn stackelberg_gda_stochastic(
    pref: &PreferenceMatrix,
    refs: &ReferencePair,
    cfg: &StochasticGdaConfig,
) -> Result<GdaOutcome> {
    cfg.validate()?;
    let g = &cfg.gda;
    let problem = SlhfProblem::new(pref, refs, g.regularization())?;
    let estimator = ScoreEstimator {
        pref,
        refs,
        reg: g.regularization(),
        kl: cfg.kl_estimator,
        baseline: cfg.baseline,
        leader_follower_kl: g.leader_follower_kl,
    };
    let (pi0, omega0) = g.initial(refs)?;
    let mut theta: Vec<Vec<f64>> = pi0.floored().rows().iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();
    let mut phi: Vec<Vec<Vec<f64>>> = omega0
        .floored()
        .rows()
        .iter()
        .map(|c| c.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect())
        .collect();
    let n = pref.num_actions();
    let uniform = vec![1.0 / n as f64; n];
    let materialize = |theta: &Vec<Vec<f64>>, phi: &Vec<Vec<Vec<f64>>>| {
        let pi = Policy::from_rows_unchecked(theta.iter().map(|t| softmax_unchecked(t, &uniform, 1.0)).collect());
        let omega = ConditionalPolicy::from_rows_unchecked(
            phi.iter()
                .map(|c| c.iter().map(|t| softmax_unchecked(t, &uniform, 1.0)).collect())
                .collect(),
        );
        (pi, omega)
    };
    let (mut pi, mut omega) = materialize(&theta, &phi);
    let mut rng = seeded(cfg.seed);
    let mut avg = Averager::new(g, &pi, &omega);
    let mut rows = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let eta_l = g.eta_leader;
    let eta_f = g.kappa * g.eta_leader;

    for i in 1..=g.max_iters {
        let record = i % g.record_every == 0 || i == g.max_iters;
        let objective = problem.objective_unchecked(&pi, &omega);
        if !objective.is_finite() || theta.iter().flatten().any(|v| !v.is_finite()) {
            let trace = SolveTrace {
                rows,
                last_leader: pi.clone(),
                last_follower: omega.clone(),
                avg_leader: pi,
                avg_follower: omega,
                iterations,
                converged: false,
            };
            return Err(Error::Diverged { iteration: i, trace: Box::new(trace) });
        }
        if record || g.tol > 0.0 {
            let (fpi, fomega) = (pi.floored(), omega.floored());
            let exact = problem.gradients_unchecked(&fpi, &fomega, true);
            let stationarity = problem.stationarity_unchecked(&pi, &omega, &exact);
            if record || stationarity <= g.tol {
                rows.push(TraceRow {
                    iteration: i,
                    objective,
                    exploitability: problem.duality_gap_unchecked(&pi, &omega),
                    stationarity,
                });
            }
            if stationarity <= g.tol {
                converged = true;
                break;
            }
        }
        let est = estimator.estimate(&pi, &omega, cfg.batch_size, &mut rng);
        for (t, d) in theta.iter_mut().zip(&est.leader) {
            t.iter_mut().zip(d).for_each(|(a, b)| *a += eta_l * b);
        }
        for (t, d) in phi.iter_mut().flatten().zip(est.follower.iter().flatten()) {
            t.iter_mut().zip(d).for_each(|(a, b)| *a -= eta_f * b);
        }
        (pi, omega) = materialize(&theta, &phi);
        iterations = i;
        avg.push(i, &pi, &omega);
    }

    let (avg_leader, avg_follower) = avg.finish(&pi, &omega);
    let value = problem.objective_unchecked(&avg_leader, &avg_follower);
    Ok(GdaOutcome {
        solution: StackelbergSolution {
            leader: avg_leader.clone(),
            follower: avg_follower.clone(),
            value,
            is_exact: false,
        },
        trace: SolveTrace {
            rows,
            last_leader: pi,
            last_follower: omega,
            avg_leader,
            avg_follower,
            iterations,
            converged,
        },
    })
}
