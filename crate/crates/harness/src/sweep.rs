//! One-dimensional sweeps: rerun a scenario template at each grid point and
//! flatten the reports into long-format rows.
//!
//! CSV columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `point` | grid index |
//! | `axis`, `axis_value` | swept parameter and its value as written in the grid |
//! | `status` | `ok` or `failed` for the whole point |
//! | `subject` | solver id, refinement policy id, or failing component |
//! | `kind` | solver kind, `refinement`, or `error` |
//! | `n` | refinement sample count |
//! | `leader_mode` | greedy leader action per context, `;`-separated labels |
//! | `leader_probs` | leader rows, actions `\|`-separated, contexts `;`-separated |
//! | `value` | objective value of sequential solvers |
//! | `tv_to_deterministic` | largest per-context TV distance from the leader to the lowest-index deterministic equilibrium leader |
//! | `exploitability` | ρ-weighted leader exploitability |
//! | `analytic`, `estimate`, `stderr` | refinement hit probability |
//! | `error` | diagnostic message of a failed component |

use std::io::Write;
use std::str::FromStr;

use prefgame_core::solvers::{stackelberg_enumerate, NashMethod};
use prefgame_core::{AnnotatorPopulation, AnnotatorType};
use serde::{Deserialize, Serialize};

use crate::config::{GameSource, ScenarioConfig, SolverSpec};
use crate::error::{HarnessError, Result};
use crate::report::{RunReport, Status};
use crate::run::{build_game, mode, run_scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    /// Annotator weights of a population game.
    Alpha,
    /// Both temperatures of every regularised solver.
    Tau,
    /// Two-timescale ratio of the gradient solvers.
    Kappa,
    /// Sample count of every refinement task.
    N,
}

impl FromStr for Axis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Axis::Alpha),
            "tau" => Ok(Axis::Tau),
            "kappa" => Ok(Axis::Kappa),
            "n" | "N" => Ok(Axis::N),
            _ => Err(HarnessError::Sweep(format!("unknown axis {s:?} (alpha, tau, kappa, n)"))),
        }
    }
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Alpha => "alpha",
            Axis::Tau => "tau",
            Axis::Kappa => "kappa",
            Axis::N => "n",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridPoint {
    Weights(Vec<f64>),
    Scalar(f64),
    Count(usize),
}

const MAX_RANGE: usize = 10_000;

/// Parses a grid. Points are `;`-separated for `alpha` (each a `,`-separated
/// weight vector) and `,`-separated otherwise; `n` also accepts `a..b`
/// (inclusive).
pub fn parse_grid(axis: Axis, grid: &str) -> Result<Vec<GridPoint>> {
    let num = |s: &str| -> Result<f64> {
        let v: f64 = s.trim().parse().map_err(|_| HarnessError::Sweep(format!("bad grid value {s:?}")))?;
        if !v.is_finite() {
            return Err(HarnessError::Sweep(format!("grid value {s:?} is not finite")));
        }
        Ok(v)
    };
    let count = |s: &str| -> Result<usize> {
        s.trim().parse().map_err(|_| HarnessError::Sweep(format!("bad sample count {s:?}")))
    };
    let points: Vec<GridPoint> = match axis {
        Axis::Alpha => grid
            .split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.split(',').map(num).collect::<Result<Vec<_>>>().map(GridPoint::Weights))
            .collect::<Result<_>>()?,
        Axis::Tau | Axis::Kappa => grid
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| num(p).map(GridPoint::Scalar))
            .collect::<Result<_>>()?,
        Axis::N => {
            let mut v = Vec::new();
            for p in grid.split(',').filter(|p| !p.trim().is_empty()) {
                match p.split_once("..") {
                    Some((a, b)) => {
                        let (a, b) = (count(a)?, count(b)?);
                        if b < a || b - a >= MAX_RANGE {
                            return Err(HarnessError::Sweep(format!("range {a}..{b} is empty or longer than {MAX_RANGE}")));
                        }
                        v.extend((a..=b).map(GridPoint::Count))
                    }
                    None => v.push(GridPoint::Count(count(p)?)),
                }
            }
            v
        }
    };
    if points.is_empty() {
        return Err(HarnessError::Sweep("empty grid".into()));
    }
    Ok(points)
}

fn point_label(p: &GridPoint) -> String {
    match p {
        GridPoint::Weights(w) => w.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        GridPoint::Scalar(v) => v.to_string(),
        GridPoint::Count(n) => n.to_string(),
    }
}

/// The template with the axis set to `point`.
pub fn apply(template: &ScenarioConfig, axis: Axis, point: &GridPoint) -> Result<ScenarioConfig> {
    let mut cfg = template.clone();
    let mut touched = false;
    match (axis, point) {
        (Axis::Alpha, GridPoint::Weights(w)) => {
            let GameSource::Population { population, .. } = &mut cfg.game else {
                return Err(HarnessError::Sweep("the alpha axis needs a population game".into()));
            };
            if w.len() != population.types().len() {
                return Err(HarnessError::Sweep(format!(
                    "{} weights for {} annotator types",
                    w.len(),
                    population.types().len()
                )));
            }
            let types = population
                .types()
                .iter()
                .zip(w)
                .map(|(t, &weight)| AnnotatorType { weight, ..t.clone() })
                .collect();
            *population = AnnotatorPopulation::new(types)?;
            touched = true;
        }
        (Axis::Tau, GridPoint::Scalar(t)) => {
            for s in &mut cfg.solvers {
                match s {
                    SolverSpec::Nash { method: NashMethod::RegularizedFixedPoint, tau, .. } | SolverSpec::Rlhf { tau, .. } => *tau = *t,
                    SolverSpec::StackelbergExact { tau_leader, tau_follower, .. } => {
                        *tau_leader = *t;
                        *tau_follower = *t;
                    }
                    SolverSpec::StackelbergGda { config, .. } => {
                        config.tau_leader = *t;
                        config.tau_follower = *t;
                    }
                    SolverSpec::StackelbergGdaStochastic { config, .. } => {
                        config.gda.tau_leader = *t;
                        config.gda.tau_follower = *t;
                    }
                    _ => continue,
                }
                touched = true;
            }
        }
        (Axis::Kappa, GridPoint::Scalar(k)) => {
            for s in &mut cfg.solvers {
                match s {
                    SolverSpec::StackelbergGda { config, .. } => config.kappa = *k,
                    SolverSpec::StackelbergGdaStochastic { config, .. } => config.gda.kappa = *k,
                    _ => continue,
                }
                touched = true;
            }
        }
        (Axis::N, GridPoint::Count(n)) => {
            for t in &mut cfg.refinement {
                t.n = vec![*n];
                touched = true;
            }
        }
        _ => return Err(HarnessError::Sweep(format!("grid point does not fit the {} axis", axis.name()))),
    }
    if !touched {
        return Err(HarnessError::Sweep(format!("nothing in the template depends on {}", axis.name())));
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: usize,
    pub axis: String,
    pub axis_value: String,
    pub status: String,
    pub subject: String,
    pub kind: String,
    pub n: Option<usize>,
    pub leader_mode: Option<String>,
    pub leader_probs: Option<String>,
    pub value: Option<f64>,
    pub tv_to_deterministic: Option<f64>,
    pub exploitability: Option<f64>,
    pub analytic: Option<f64>,
    pub estimate: Option<f64>,
    pub stderr: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub reports: Vec<RunReport>,
}

impl SweepOutcome {
    pub fn failed(&self) -> bool {
        self.rows.iter().any(|r| r.status != "ok")
    }
}

fn rows_for(point: usize, axis: Axis, label: &str, report: &RunReport) -> Vec<SweepRow> {
    let status = match report.status {
        Status::Ok => "ok",
        Status::Failed => "failed",
    };
    let base = SweepRow {
        point,
        axis: axis.name().to_string(),
        axis_value: label.to_string(),
        status: status.to_string(),
        ..SweepRow::default()
    };
    let mut rows = Vec::new();
    if let Some(game) = &report.game {
        let deterministic = build_game(&report.config.game)
            .ok()
            .map(|g| stackelberg_enumerate(&g.pref).canonical().leader);
        let rho = game.space.context_dist();
        for s in &report.solutions {
            let labels: Vec<&str> = mode(&s.leader)
                .iter()
                .enumerate()
                .map(|(x, &a)| game.space.actions(x)[a].as_str())
                .collect();
            let probs: Vec<String> = s
                .leader
                .rows()
                .iter()
                .map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join("|"))
                .collect();
            rows.push(SweepRow {
                subject: s.id.clone(),
                kind: s.kind.clone(),
                leader_mode: Some(labels.join(";")),
                leader_probs: Some(probs.join(";")),
                value: s.diagnostics.value,
                tv_to_deterministic: deterministic.as_ref().map(|d| s.leader.tv_distance(d)),
                exploitability: Some(s.diagnostics.exploitability.iter().zip(rho).map(|(e, w)| e * w).sum()),
                ..base.clone()
            });
        }
    }
    for r in &report.refinement {
        rows.push(SweepRow {
            subject: r.policy.clone(),
            kind: "refinement".into(),
            n: Some(r.n),
            analytic: Some(r.analytic),
            estimate: r.estimate,
            stderr: r.stderr,
            ..base.clone()
        });
    }
    for e in &report.errors {
        rows.push(SweepRow {
            subject: e.component.clone(),
            kind: "error".into(),
            error: Some(e.diagnostic.message.clone()),
            ..base.clone()
        });
    }
    rows
}

/// Runs the template at every grid point, points in parallel. A point that
/// cannot be built or fails at run time contributes `failed` rows; the other
/// points are unaffected. Every point keeps the template's master seed.
pub fn sweep(template: &ScenarioConfig, axis: Axis, grid: &[GridPoint]) -> Result<SweepOutcome> {
    if grid.is_empty() {
        return Err(HarnessError::Sweep("empty grid".into()));
    }
    let results: Vec<(String, std::result::Result<RunReport, HarnessError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = grid
            .iter()
            .map(|p| scope.spawn(move || (point_label(p), apply(template, axis, p).map(|c| run_scenario(&c)))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (i, (label, res)) in results.into_iter().enumerate() {
        match res {
            Ok(report) => {
                rows.extend(rows_for(i, axis, &label, &report));
                reports.push(report);
            }
            Err(e) => rows.push(SweepRow {
                point: i,
                axis: axis.name().to_string(),
                axis_value: label,
                status: "failed".into(),
                subject: "config".into(),
                kind: "error".into(),
                error: Some(e.to_string()),
                ..SweepRow::default()
            }),
        }
    }
    Ok(SweepOutcome { rows, reports })
}

pub fn write_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| HarnessError::Csv(e.into()))?;
    Ok(())
}
