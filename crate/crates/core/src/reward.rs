use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real-valued scores `r(x, y)`, one vector per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct RewardTable {
    values: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for RewardTable {
    type Error = Error;

    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        RewardTable::new(v)
    }
}

impl From<RewardTable> for Vec<Vec<f64>> {
    fn from(r: RewardTable) -> Self {
        r.values
    }
}

impl RewardTable {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() || values[0].is_empty() {
            return Err(Error::invalid("reward table", "empty"));
        }
        let n = values[0].len();
        for (x, row) in values.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape(format!(
                    "reward row {x} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::invalid("reward table", format!("non-finite entry {v} in context {x}")));
            }
        }
        Ok(RewardTable { values })
    }

    pub fn num_contexts(&self) -> usize {
        self.values.len()
    }

    pub fn num_actions(&self) -> usize {
        self.values[0].len()
    }

    #[inline]
    pub fn get(&self, context: usize, action: usize) -> f64 {
        self.values[context][action]
    }

    pub fn row(&self, context: usize) -> &[f64] {
        &self.values[context]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(RewardTable::new(vec![vec![0.0, f64::NAN]]).is_err());
        assert!(RewardTable::new(vec![vec![0.0, f64::INFINITY]]).is_err());
    }
}
