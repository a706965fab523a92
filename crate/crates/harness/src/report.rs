use std::collections::BTreeMap;
use std::io::Write;

use prefgame_core::solvers::TraceRow;
use prefgame_core::{ActionSpace, ConditionalPolicy, CycleReport, Policy, RewardTable};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Diagnostic, HarnessError, Result};

pub const REPORT_SCHEMA: &str = "prefgame.run-report.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentError {
    pub component: String,
    #[serde(flatten)]
    pub diagnostic: Diagnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSummary {
    pub space: ActionSpace,
    pub condorcet_winners: Vec<Option<String>>,
    /// Absent when some pair is tied at exactly 0.5.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<CycleReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Objective value of the returned pair (sequential solvers).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Unregularised exploitability of the leader, per context.
    pub exploitability: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duality_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<RewardTable>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unobserved: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub id: String,
    pub kind: String,
    pub leader: Policy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follower: Option<ConditionalPolicy>,
    /// Marginal of the follower's answer `y' ∼ ω(·|x, y)`, `y ∼ π(·|x)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<Policy>,
    pub diagnostics: Diagnostics,
}

/// Round-robin table: `matrix[i][j]` is the probability that a response of
/// `policies[i]` is preferred to one of `policies[j]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub policies: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub policy: String,
    pub target: String,
    pub n: usize,
    pub analytic: f64,
    pub estimate: Option<f64>,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub components: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub config: ScenarioConfig,
    pub status: Status,
    pub errors: Vec<ComponentError>,
    pub game: Option<GameSummary>,
    pub solutions: Vec<SolutionRecord>,
    pub comparison: ComparisonTable,
    pub refinement: Vec<RefinementRow>,
    /// Wall-clock figures; the only field that differs between reruns.
    pub timing: Option<Timing>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| HarnessError::parse("run report", e))
    }

    /// Parses a report; every embedded policy is re-validated.
    pub fn from_json(s: &str) -> Result<Self> {
        let r: RunReport = serde_json::from_str(s).map_err(|e| HarnessError::parse("run report", e))?;
        if r.schema != REPORT_SCHEMA {
            return Err(HarnessError::Config(format!("unknown report schema {:?}", r.schema)));
        }
        Ok(r)
    }

    pub fn without_timing(&self) -> Self {
        RunReport { timing: None, ..self.clone() }
    }

    pub fn policy(&self, id: &str) -> Option<&Policy> {
        let (solver, part) = id.split_once(':').unwrap_or((id, ""));
        let s = self.solutions.iter().find(|s| s.id == solver)?;
        match (part, &s.chain) {
            ("leader", _) | ("", None) => Some(&s.leader),
            ("chain", Some(c)) => Some(c),
            _ => None,
        }
    }
}

pub fn write_refinement_csv<W: Write>(rows: &[RefinementRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| HarnessError::Csv(e.into()))?;
    Ok(())
}

/// One row per `(solver, context, action)` with the leader probability and,
/// for sequential solvers, the chain marginal.
pub fn write_solutions_csv<W: Write>(report: &RunReport, w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        solver: &'a str,
        context: &'a str,
        action: &'a str,
        leader: f64,
        chain: Option<f64>,
    }
    let mut out = csv::Writer::from_writer(w);
    if let Some(game) = &report.game {
        for s in &report.solutions {
            for x in 0..game.space.num_contexts() {
                for (a, label) in game.space.actions(x).iter().enumerate() {
                    out.serialize(Row {
                        solver: &s.id,
                        context: &game.space.contexts()[x],
                        action: label,
                        leader: s.leader.probs(x)[a],
                        chain: s.chain.as_ref().map(|c| c.probs(x)[a]),
                    })?;
                }
            }
        }
    }
    out.flush().map_err(|e| HarnessError::Csv(e.into()))?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(table: &ComparisonTable, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["policy".to_string()];
    header.extend(table.policies.iter().cloned());
    out.write_record(&header)?;
    for (id, row) in table.policies.iter().zip(&table.matrix) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(f64::to_string));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| HarnessError::Csv(e.into()))?;
    Ok(())
}
