//! Tabular preference games.
//!
//! Builds preference functions over finite context/action sets (from annotator
//! populations or Bradley–Terry rewards), analyses their cycle structure, and
//! computes three solution concepts on them: the KL-regularised reward
//! maximiser (RLHF), the symmetric Nash equilibrium (NLHF) and the
//! leader/follower Stackelberg equilibrium (SLHF), the last both in closed
//! form and by two-timescale gradient descent-ascent. The [`refinement`]
//! module evaluates leader-then-follower sampling chains at inference time.

pub mod dataset;
pub mod error;
mod linalg;
pub mod policy;
pub mod population;
pub mod preference;
pub mod refinement;
pub mod reward;
pub mod sampling;
pub mod solvers;
pub mod space;
pub mod tournament;

pub use dataset::{Comparison, ComparisonDataset};
pub use error::{Error, Result};
pub use policy::{kl_divergence, project_simplex, softmax_policy, ConditionalPolicy, Kl, Policy, ReferencePair};
pub use population::{AnnotatorPopulation, AnnotatorType};
pub use preference::{aggregate_population, bt_preference, condorcet_winner, policy_preference, PreferenceMatrix};
pub use reward::RewardTable;
pub use space::ActionSpace;
pub use tournament::{cycle_stats, CycleOptions, CycleReport, TieBreak};
