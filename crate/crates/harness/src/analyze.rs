//! Order structure of a stored preference matrix.

use std::path::Path;

use prefgame_core::{condorcet_winner, cycle_stats, ActionSpace, CycleOptions, CycleReport, PreferenceMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const ANALYSIS_SCHEMA: &str = "prefgame.analysis.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub schema: String,
    pub space: ActionSpace,
    /// Condorcet winner label per context.
    pub condorcet_winners: Vec<Option<String>>,
    pub cycles: CycleReport,
}

pub fn analyze(p: &PreferenceMatrix, opts: CycleOptions) -> Result<Analysis> {
    let space = p.space().clone();
    let condorcet_winners = condorcet_winner(p)
        .into_iter()
        .enumerate()
        .map(|(x, w)| w.map(|a| space.actions(x)[a].clone()))
        .collect();
    Ok(Analysis {
        schema: ANALYSIS_SCHEMA.to_string(),
        cycles: cycle_stats(p, None, opts)?,
        space,
        condorcet_winners,
    })
}

/// Parses matrix JSON; schema violations carry their line and column.
pub fn analyze_json(text: &str, opts: CycleOptions) -> Result<Analysis> {
    let p: PreferenceMatrix = serde_json::from_str(text).map_err(|e| HarnessError::parse("preference matrix", e))?;
    analyze(&p, opts)
}

pub fn analyze_file(path: &Path, opts: CycleOptions) -> Result<Analysis> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    analyze_json(&text, opts)
}
