//! Pairwise comparison records `(x, y_w, y_l)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::ActionSpace;

pub const DATASET_SCHEMA: &str = "prefgame.comparison-dataset.v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub context: String,
    pub chosen: String,
    pub rejected: String,
    /// Number of identical copies of this record.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub count: u32,
}

fn one() -> u32 {
    1
}

fn is_one(c: &u32) -> bool {
    *c == 1
}

impl Comparison {
    pub fn new(context: &str, chosen: &str, rejected: &str, count: u32) -> Self {
        Comparison {
            context: context.to_string(),
            chosen: chosen.to_string(),
            rejected: rejected.to_string(),
            count,
        }
    }
}

/// A comparison with labels resolved against an [`ActionSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexedComparison {
    pub context: usize,
    pub chosen: usize,
    pub rejected: usize,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr", into = "DatasetRepr")]
pub struct ComparisonDataset {
    records: Vec<Comparison>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRepr {
    schema: String,
    records: Vec<Comparison>,
}

impl TryFrom<DatasetRepr> for ComparisonDataset {
    type Error = Error;

    fn try_from(r: DatasetRepr) -> Result<Self> {
        if r.schema != DATASET_SCHEMA {
            return Err(Error::invalid(
                "comparison dataset",
                format!("unknown schema tag {:?}", r.schema),
            ));
        }
        ComparisonDataset::new(r.records)
    }
}

impl From<ComparisonDataset> for DatasetRepr {
    fn from(d: ComparisonDataset) -> Self {
        DatasetRepr {
            schema: DATASET_SCHEMA.to_string(),
            records: d.records,
        }
    }
}

impl ComparisonDataset {
    pub fn new(records: Vec<Comparison>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if r.chosen == r.rejected {
                return Err(Error::invalid(
                    "comparison dataset",
                    format!("record {i} compares {:?} with itself", r.chosen),
                ));
            }
        }
        Ok(ComparisonDataset { records })
    }

    pub fn records(&self) -> &[Comparison] {
        &self.records
    }

    /// Total number of comparisons, counting repeats.
    pub fn len(&self) -> u64 {
        self.records.iter().map(|r| r.count as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn resolve(&self, space: &ActionSpace) -> Result<Vec<IndexedComparison>> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let unknown = |what: &str, label: &str| {
                    Error::invalid("comparison dataset", format!("record {i}: unknown {what} {label:?}"))
                };
                let x = space
                    .context_index(&r.context)
                    .ok_or_else(|| unknown("context", &r.context))?;
                let w = space
                    .action_index(x, &r.chosen)
                    .ok_or_else(|| unknown("action", &r.chosen))?;
                let l = space
                    .action_index(x, &r.rejected)
                    .ok_or_else(|| unknown("action", &r.rejected))?;
                Ok(IndexedComparison {
                    context: x,
                    chosen: w,
                    rejected: l,
                    count: r.count,
                })
            })
            .collect()
    }
}
