//! Weighted populations of annotators with strict rankings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{check_distribution, PROB_TOL};

pub const POPULATION_SCHEMA: &str = "prefgame.annotator-population.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorType {
    pub name: String,
    /// Action labels, most preferred first.
    pub ranking: Vec<String>,
    pub weight: f64,
}

impl AnnotatorType {
    /// Rank position of each label in `actions`; fails unless the ranking is a
    /// permutation of `actions`.
    pub(crate) fn positions(&self, actions: &[String]) -> Result<Vec<usize>, String> {
        if self.ranking.len() != actions.len() {
            return Err(format!(
                "ranking of {:?} has {} entries, context has {} actions",
                self.name,
                self.ranking.len(),
                actions.len()
            ));
        }
        actions
            .iter()
            .map(|a| {
                self.ranking
                    .iter()
                    .position(|r| r == a)
                    .ok_or_else(|| format!("ranking of {:?} does not contain action {a:?}", self.name))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PopulationRepr", into = "PopulationRepr")]
pub struct AnnotatorPopulation {
    types: Vec<AnnotatorType>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PopulationRepr {
    schema: String,
    types: Vec<AnnotatorType>,
}

impl TryFrom<PopulationRepr> for AnnotatorPopulation {
    type Error = Error;

    fn try_from(r: PopulationRepr) -> Result<Self> {
        if r.schema != POPULATION_SCHEMA {
            return Err(Error::invalid(
                "annotator population",
                format!("unknown schema tag {:?}", r.schema),
            ));
        }
        AnnotatorPopulation::new(r.types)
    }
}

impl From<AnnotatorPopulation> for PopulationRepr {
    fn from(p: AnnotatorPopulation) -> Self {
        PopulationRepr {
            schema: POPULATION_SCHEMA.to_string(),
            types: p.types,
        }
    }
}

impl AnnotatorPopulation {
    pub fn new(types: Vec<AnnotatorType>) -> Result<Self> {
        if types.is_empty() {
            return Err(Error::invalid("annotator population", "no annotator types"));
        }
        let weights: Vec<f64> = types.iter().map(|t| t.weight).collect();
        check_distribution("annotator weights", &weights, PROB_TOL)?;
        for t in &types {
            for (i, a) in t.ranking.iter().enumerate() {
                if t.ranking[..i].contains(a) {
                    return Err(Error::invalid(
                        "annotator population",
                        format!("ranking of {:?} repeats {a:?}", t.name),
                    ));
                }
            }
        }
        Ok(AnnotatorPopulation { types })
    }

    /// The three-type population `A≻B≻C`, `B≻C≻A`, `C≻A≻B` with weights `alpha`.
    pub fn condorcet(alpha: [f64; 3]) -> Result<Self> {
        let rankings = [["A", "B", "C"], ["B", "C", "A"], ["C", "A", "B"]];
        Self::new(
            rankings
                .iter()
                .zip(alpha)
                .enumerate()
                .map(|(k, (r, w))| AnnotatorType {
                    name: format!("a{}", k + 1),
                    ranking: r.iter().map(|s| s.to_string()).collect(),
                    weight: w,
                })
                .collect(),
        )
    }

    /// `w·a + (1 − w)·b`, keeping every type of both populations.
    pub fn mixture(a: &Self, b: &Self, w: f64) -> Result<Self> {
        let scaled = |p: &Self, s: f64| -> Vec<AnnotatorType> {
            p.types
                .iter()
                .map(|t| AnnotatorType {
                    weight: t.weight * s,
                    ..t.clone()
                })
                .collect()
        };
        let mut types = scaled(a, w);
        types.extend(scaled(b, 1.0 - w));
        Self::new(types)
    }

    pub fn types(&self) -> &[AnnotatorType] {
        &self.types
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::aggregate_population;
    use crate::space::ActionSpace;

    #[test]
    fn rejects_repeated_ranking() {
        let t = AnnotatorType {
            name: "bad".into(),
            ranking: vec!["A".into(), "A".into(), "B".into()],
            weight: 1.0,
        };
        assert!(AnnotatorPopulation::new(vec![t]).is_err());
    }

    #[test]
    fn rejects_ranking_missing_an_action() {
        let t = AnnotatorType {
            name: "short".into(),
            ranking: vec!["A".into(), "B".into(), "D".into()],
            weight: 1.0,
        };
        let pop = AnnotatorPopulation::new(vec![t]).unwrap();
        let space = ActionSpace::single(&["A", "B", "C"]).unwrap();
        let err = aggregate_population(&pop, &space).unwrap_err();
        assert!(err.to_string().contains("does not contain action"));
    }

    #[test]
    fn rejects_weights_off_simplex() {
        assert!(AnnotatorPopulation::condorcet([0.5, 0.5, 0.5]).is_err());
        assert!(AnnotatorPopulation::condorcet([1.2, -0.1, -0.1]).is_err());
    }

    #[test]
    fn json_rejects_unknown_schema() {
        let s = r#"{"schema":"nope","types":[{"name":"a","ranking":["A","B"],"weight":1.0}]}"#;
        assert!(serde_json::from_str::<AnnotatorPopulation>(s).is_err());
    }
}
