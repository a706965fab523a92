//! Pairwise preference functions `p(y ≻ y' | x)` over a finite action space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::population::AnnotatorPopulation;
use crate::reward::RewardTable;
use crate::space::{ActionSpace, PROB_TOL};

pub const PREFERENCE_SCHEMA: &str = "prefgame.preference-matrix.v1";

/// Per-context square matrices with `m[x][i][j] = p(y_i ≻ y_j | x)`.
///
/// Every constructed matrix is complementary (`P + Pᵀ = 1`) with an exact
/// `0.5` diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PreferenceRepr", into = "PreferenceRepr")]
pub struct PreferenceMatrix {
    space: ActionSpace,
    n: usize,
    // row-major n×n per context
    data: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreferenceRepr {
    schema: String,
    space: ActionSpace,
    matrices: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<PreferenceRepr> for PreferenceMatrix {
    type Error = Error;

    fn try_from(r: PreferenceRepr) -> Result<Self> {
        if r.schema != PREFERENCE_SCHEMA {
            return Err(Error::invalid(
                "preference matrix",
                format!("unknown schema tag {:?}", r.schema),
            ));
        }
        PreferenceMatrix::from_rows(r.space, r.matrices)
    }
}

impl From<PreferenceMatrix> for PreferenceRepr {
    fn from(p: PreferenceMatrix) -> Self {
        let n = p.n;
        let matrices = p
            .data
            .iter()
            .map(|m| m.chunks(n).map(|r| r.to_vec()).collect())
            .collect();
        PreferenceRepr {
            schema: PREFERENCE_SCHEMA.to_string(),
            space: p.space,
            matrices,
        }
    }
}

impl PreferenceMatrix {
    /// Builds from nested per-context rows, validating complementarity.
    pub fn from_rows(space: ActionSpace, matrices: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = space.num_actions();
        if matrices.len() != space.num_contexts() {
            return Err(Error::Shape(format!(
                "{} matrices for {} contexts",
                matrices.len(),
                space.num_contexts()
            )));
        }
        let mut data = Vec::with_capacity(matrices.len());
        for (x, rows) in matrices.into_iter().enumerate() {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Shape(format!("context {x}: matrix is not {n}x{n}")));
            }
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            check_matrix(x, n, &flat)?;
            data.push(flat);
        }
        Ok(PreferenceMatrix { space, n, data })
    }

    /// Builds from the strict upper triangle `upper[x][i][j - i - 1] = p(y_i ≻ y_j)`;
    /// the rest follows from complementarity.
    pub fn from_upper(space: ActionSpace, upper: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let n = space.num_actions();
        let mut data = Vec::with_capacity(space.num_contexts());
        for x in 0..space.num_contexts() {
            let mut m = vec![0.5; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    let p = upper(x, i, j);
                    m[i * n + j] = p;
                    m[j * n + i] = 1.0 - p;
                }
            }
            check_matrix(x, n, &m)?;
            data.push(m);
        }
        Ok(PreferenceMatrix { space, n, data })
    }

    /// Independent uniform upper-triangle entries in every context.
    pub fn random<R: Rng + ?Sized>(space: ActionSpace, rng: &mut R) -> Self {
        let n = space.num_actions();
        let draws: Vec<f64> = (0..space.num_contexts() * n * n).map(|_| rng.gen::<f64>()).collect();
        Self::from_upper(space, |x, i, j| draws[(x * n + i) * n + j])
            .expect("uniform draws are probabilities")
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn num_contexts(&self) -> usize {
        self.data.len()
    }

    pub fn num_actions(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, context: usize, i: usize, j: usize) -> f64 {
        self.data[context][i * self.n + j]
    }

    pub fn row(&self, context: usize, i: usize) -> &[f64] {
        &self.data[context][i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self, context: usize) -> Vec<Vec<f64>> {
        self.data[context].chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_matrix(x: usize, n: usize, m: &[f64]) -> Result<()> {
    for i in 0..n {
        if m[i * n + i] != 0.5 {
            return Err(Error::invalid(
                "preference matrix",
                format!("context {x}: diagonal entry ({i},{i}) is {}, must be 0.5", m[i * n + i]),
            ));
        }
        for j in 0..n {
            let p = m[i * n + j];
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(
                    "preference matrix",
                    format!("context {x}: entry ({i},{j}) = {p} is not a probability"),
                ));
            }
            if (p + m[j * n + i] - 1.0).abs() > PROB_TOL {
                return Err(Error::invalid(
                    "preference matrix",
                    format!("context {x}: entries ({i},{j}) and ({j},{i}) do not sum to 1"),
                ));
            }
        }
    }
    Ok(())
}

/// Aggregates strict annotator rankings: `P[i][j] = Σ_k α_k 1{y_i ≻_k y_j}`.
pub fn aggregate_population(
    pop: &AnnotatorPopulation,
    space: &ActionSpace,
) -> Result<PreferenceMatrix> {
    let n = space.num_actions();
    let mut data = Vec::with_capacity(space.num_contexts());
    for x in 0..space.num_contexts() {
        let mut m = vec![0.0; n * n];
        for ty in pop.types() {
            // position of each action in this annotator's ranking
            let pos = ty.positions(space.actions(x)).map_err(|reason| {
                Error::invalid("annotator population", format!("context {x}: {reason}"))
            })?;
            for i in 0..n {
                for j in 0..n {
                    if pos[i] < pos[j] {
                        m[i * n + j] += ty.weight;
                    }
                }
            }
        }
        for i in 0..n {
            m[i * n + i] = 0.5;
            for j in i + 1..n {
                // weights sum to 1 only up to rounding; clamp the upper entry
                // and pin the lower one by complement
                m[i * n + j] = m[i * n + j].clamp(0.0, 1.0);
                m[j * n + i] = 1.0 - m[i * n + j];
            }
        }
        check_matrix(x, n, &m)?;
        data.push(m);
    }
    Ok(PreferenceMatrix {
        space: space.clone(),
        n,
        data,
    })
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bradley–Terry preferences `P[i][j] = σ(r(x, y_i) − r(x, y_j))`.
pub fn bt_preference(r: &RewardTable, space: &ActionSpace) -> Result<PreferenceMatrix> {
    if r.num_contexts() != space.num_contexts() || r.num_actions() != space.num_actions() {
        return Err(Error::Shape(format!(
            "reward table is {}x{}, action space is {}x{}",
            r.num_contexts(),
            r.num_actions(),
            space.num_contexts(),
            space.num_actions()
        )));
    }
    PreferenceMatrix::from_upper(space.clone(), |x, i, j| {
        sigmoid(r.get(x, i) - r.get(x, j))
    })
}

/// Per-context `E_{y∼π, y'∼π'}[p(y ≻ y' | x)]` and its ρ-weighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPreference {
    pub per_context: Vec<f64>,
    pub mean: f64,
}

pub fn policy_preference(
    p: &PreferenceMatrix,
    pi: &Policy,
    pi_prime: &Policy,
) -> Result<PolicyPreference> {
    pi.check_shape(p.num_contexts(), p.num_actions())?;
    pi_prime.check_shape(p.num_contexts(), p.num_actions())?;
    let n = p.num_actions();
    let per_context: Vec<f64> = (0..p.num_contexts())
        .map(|x| {
            let (a, b) = (pi.probs(x), pi_prime.probs(x));
            let mut s = 0.0;
            for i in 0..n {
                if a[i] == 0.0 {
                    continue;
                }
                let row = p.row(x, i);
                s += a[i] * row.iter().zip(b).map(|(pij, bj)| pij * bj).sum::<f64>();
            }
            s
        })
        .collect();
    let mean = per_context
        .iter()
        .zip(p.space().context_dist())
        .map(|(v, w)| v * w)
        .sum();
    Ok(PolicyPreference { per_context, mean })
}

/// The action beating every other action with probability `> 0.5`, per context.
pub fn condorcet_winner(p: &PreferenceMatrix) -> Vec<Option<usize>> {
    let n = p.num_actions();
    (0..p.num_contexts())
        .map(|x| (0..n).find(|&i| (0..n).all(|j| j == i || p.get(x, i, j) > 0.5)))
        .collect()
}
