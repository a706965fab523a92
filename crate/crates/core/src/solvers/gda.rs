//! Two-timescale projected gradient descent-ascent on the sequential objective.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{project_simplex_unchecked, ConditionalPolicy, Policy, ReferencePair};
use crate::preference::PreferenceMatrix;
use crate::solvers::exact::StackelbergSolution;
use crate::solvers::objective::{Regularization, SlhfProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdaConfig {
    /// Leader step size `η^L`.
    pub eta_leader: f64,
    /// Two-timescale ratio `κ = η^F / η^L`. In the sampled solver the same
    /// number weights the follower term of the single-model loss, which for
    /// score-function updates is the same thing as scaling its step.
    pub kappa: f64,
    pub tau_leader: f64,
    pub tau_follower: f64,
    pub max_iters: usize,
    /// Length of the Cesàro tail averaged into the ergodic iterate; `None`
    /// averages the whole run.
    pub average_tail: Option<usize>,
    /// Stop once the projected-gradient stationarity norm of the last iterate
    /// falls below this.
    pub tol: f64,
    /// Include `τ^F·KL_{x,y}(ω ‖ ω_ref)` in the leader gradient.
    pub leader_follower_kl: bool,
    /// Record a trace row every this many iterations (the last iteration is
    /// always recorded).
    pub record_every: usize,
    pub init_leader: Option<Policy>,
    pub init_follower: Option<ConditionalPolicy>,
}

impl Default for GdaConfig {
    fn default() -> Self {
        GdaConfig {
            eta_leader: 0.05,
            kappa: 5.0,
            tau_leader: 0.001,
            tau_follower: 0.001,
            max_iters: 10_000,
            average_tail: None,
            tol: 1e-8,
            leader_follower_kl: true,
            record_every: 1,
            init_leader: None,
            init_follower: None,
        }
    }
}

impl GdaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("GDA config", reason));
        if !(self.eta_leader >= 0.0 && self.eta_leader.is_finite()) {
            return bad(format!("η^L = {} must be finite and nonnegative", self.eta_leader));
        }
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return bad(format!("κ = {} must be at least 1", self.kappa));
        }
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1".into());
        }
        if self.record_every < 1 {
            return bad("record_every must be at least 1".into());
        }
        if !(self.tol >= 0.0) {
            return bad(format!("tol = {} must be nonnegative", self.tol));
        }
        Regularization::new(self.tau_leader, self.tau_follower)?;
        Ok(())
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            leader: self.tau_leader,
            follower: self.tau_follower,
        }
    }

    pub(crate) fn initial(&self, refs: &ReferencePair) -> Result<(Policy, ConditionalPolicy)> {
        let pi = self.init_leader.clone().unwrap_or_else(|| refs.leader().clone());
        let omega = self.init_follower.clone().unwrap_or_else(|| refs.follower().clone());
        pi.check_shape(refs.num_contexts(), refs.num_actions())?;
        omega.check_shape(refs.num_contexts(), refs.num_actions())?;
        Ok((pi, omega))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// `f(π_i, ω_i)`.
    pub objective: f64,
    /// Duality gap of the iterate pair; zero at the equilibrium.
    pub exploitability: f64,
    pub stationarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
    pub last_leader: Policy,
    pub last_follower: ConditionalPolicy,
    pub avg_leader: Policy,
    pub avg_follower: ConditionalPolicy,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveTrace {
    pub const CSV_HEADER: &'static str = "iteration,objective,exploitability,stationarity";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.iteration, r.objective, r.exploitability, r.stationarity)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdaOutcome {
    pub trace: SolveTrace,
    /// Built from the averaged iterates.
    pub solution: StackelbergSolution,
}

/// Running sums for the ergodic iterate.
pub(crate) struct Averager {
    start: usize,
    count: usize,
    leader: Vec<Vec<f64>>,
    follower: Vec<Vec<Vec<f64>>>,
}

impl Averager {
    pub(crate) fn new(cfg: &GdaConfig, pi: &Policy, omega: &ConditionalPolicy) -> Self {
        let start = match cfg.average_tail {
            Some(t) => cfg.max_iters.saturating_sub(t),
            None => 0,
        };
        Averager {
            start,
            count: 0,
            leader: vec![vec![0.0; pi.num_actions()]; pi.num_contexts()],
            follower: vec![vec![vec![0.0; pi.num_actions()]; pi.num_actions()]; omega.num_contexts()],
        }
    }

    /// Adds the iterate produced by iteration `i` (1-based).
    pub(crate) fn push(&mut self, i: usize, pi: &Policy, omega: &ConditionalPolicy) {
        if i <= self.start {
            return;
        }
        self.count += 1;
        for (acc, p) in self.leader.iter_mut().zip(pi.rows()) {
            acc.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        for (acc, w) in self.follower.iter_mut().flatten().zip(omega.rows().iter().flatten()) {
            acc.iter_mut().zip(w).for_each(|(a, b)| *a += b);
        }
    }

    /// Falls back to the last iterate if the run stopped before the tail began.
    pub(crate) fn finish(self, pi: &Policy, omega: &ConditionalPolicy) -> (Policy, ConditionalPolicy) {
        if self.count == 0 {
            return (pi.clone(), omega.clone());
        }
        let c = self.count as f64;
        let norm = |v: &Vec<f64>| {
            let s: f64 = v.iter().sum::<f64>() / c;
            v.iter().map(|a| a / c / s).collect::<Vec<_>>()
        };
        let leader = self.leader.iter().map(norm).collect();
        let follower = self.follower.iter().map(|ctx| ctx.iter().map(norm).collect()).collect();
        (Policy::from_rows_unchecked(leader), ConditionalPolicy::from_rows_unchecked(follower))
    }
}

/// Projected two-timescale GDA: leader ascent with step `η^L`, follower
/// descent with step `κ·η^L`, both on the exact gradients of the current pair.
pub fn stackelberg_gda(pref: &PreferenceMatrix, refs: &ReferencePair, cfg: &GdaConfig) -> Result<GdaOutcome> {
    cfg.validate()?;
    let problem = SlhfProblem::new(pref, refs, cfg.regularization())?;
    let (mut pi, mut omega) = cfg.initial(refs)?;
    let eta_l = cfg.eta_leader;
    let eta_f = cfg.kappa * cfg.eta_leader;
    let mut avg = Averager::new(cfg, &pi, &omega);
    let mut rows = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for i in 1..=cfg.max_iters {
        let (fpi, fomega) = (pi.floored(), omega.floored());
        let g = problem.gradients_unchecked(&fpi, &fomega, cfg.leader_follower_kl);
        let objective = problem.objective_unchecked(&pi, &omega);
        let stationarity = if cfg.leader_follower_kl {
            problem.stationarity_unchecked(&pi, &omega, &g)
        } else {
            let full = problem.gradients_unchecked(&fpi, &fomega, true);
            problem.stationarity_unchecked(&pi, &omega, &full)
        };
        if !objective.is_finite() || !stationarity.is_finite() {
            let trace = SolveTrace {
                rows,
                last_leader: pi.clone(),
                last_follower: omega.clone(),
                avg_leader: pi,
                avg_follower: omega,
                iterations,
                converged: false,
            };
            return Err(Error::Diverged {
                iteration: i,
                trace: Box::new(trace),
            });
        }
        if i % cfg.record_every == 0 || i == cfg.max_iters || stationarity <= cfg.tol {
            rows.push(TraceRow {
                iteration: i,
                objective,
                exploitability: problem.duality_gap_unchecked(&pi, &omega),
                stationarity,
            });
        }
        if stationarity <= cfg.tol {
            converged = true;
            break;
        }
        let leader: Vec<Vec<f64>> = pi
            .rows()
            .iter()
            .zip(&g.leader)
            .map(|(p, d)| {
                let step: Vec<f64> = p.iter().zip(d).map(|(a, b)| a + eta_l * b).collect();
                project_simplex_unchecked(&step)
            })
            .collect();
        let follower: Vec<Vec<Vec<f64>>> = omega
            .rows()
            .iter()
            .zip(&g.follower)
            .map(|(ctx, dctx)| {
                ctx.iter()
                    .zip(dctx)
                    .map(|(w, d)| {
                        let step: Vec<f64> = w.iter().zip(d).map(|(a, b)| a - eta_f * b).collect();
                        project_simplex_unchecked(&step)
                    })
                    .collect()
            })
            .collect();
        pi = Policy::from_rows_unchecked(leader);
        omega = ConditionalPolicy::from_rows_unchecked(follower);
        iterations = i;
        avg.push(i, &pi, &omega);
    }

    let (avg_leader, avg_follower) = avg.finish(&pi, &omega);
    let value = problem.objective_unchecked(&avg_leader, &avg_follower);
    let solution = StackelbergSolution {
        leader: avg_leader.clone(),
        follower: avg_follower.clone(),
        value,
        is_exact: false,
    };
    Ok(GdaOutcome {
        trace: SolveTrace {
            rows,
            last_leader: pi,
            last_follower: omega,
            avg_leader,
            avg_follower,
            iterations,
            converged,
        },
        solution,
    })
}
