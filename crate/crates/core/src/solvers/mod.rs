//! RLHF, NLHF and SLHF solution concepts.

pub mod bt_fit;
pub mod exact;
pub mod gda;
pub mod nash;
pub mod objective;
pub mod rlhf;
pub mod stochastic;

pub use bt_fit::{fit_bt_mle, BtFit, BtFitOptions};
pub use exact::{
    leader_reward, stackelberg_enumerate, stackelberg_exact, ContextEquilibria, DeterministicEquilibria,
    StackelbergSolution,
};
pub use gda::{stackelberg_gda, GdaConfig, GdaOutcome, SolveTrace, TraceRow};
pub use nash::{nash_solve, NashMethod, NashSolution};
pub use objective::{exploitability, slhf_gradients, slhf_objective, Gradients, Regularization, SlhfProblem};
pub use rlhf::{rlhf_policy, RlhfPolicy};
pub use stochastic::{stackelberg_gda_stochastic, Baseline, KlEstimator, ScoreEstimator, StochasticGdaConfig};
