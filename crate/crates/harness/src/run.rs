//! Executes one scenario: game, solvers, comparison table, refinement tables.

use std::collections::BTreeMap;
use std::time::Instant;

use prefgame_core::policy::argmax;
use prefgame_core::refinement::{hit_probability, EvalMode, SamplingLaw, TargetSpec};
use prefgame_core::sampling::{seeded, stream};
use prefgame_core::solvers::{
    exploitability, fit_bt_mle, nash_solve, rlhf_policy, stackelberg_enumerate, stackelberg_exact, stackelberg_gda,
    stackelberg_gda_stochastic, BtFitOptions, GdaOutcome, Regularization, SlhfProblem, StackelbergSolution,
};
use prefgame_core::{
    aggregate_population, bt_preference, condorcet_winner, cycle_stats, policy_preference, ActionSpace,
    AnnotatorPopulation, Comparison, ComparisonDataset, ConditionalPolicy, CycleOptions, Policy, PreferenceMatrix,
    ReferencePair,
};
use rand::Rng;

use crate::config::{DatasetSpec, GameSource, LeaderTies, RefinementTask, ScenarioConfig, SolverSpec, TargetRef};
use crate::error::{HarnessError, Result};
use crate::report::{
    ComparisonTable, ComponentError, Diagnostics, GameSummary, RefinementRow, RunReport, SolutionRecord, Status, Timing,
    REPORT_SCHEMA,
};

const SOLVER_DOMAIN: u64 = 1;
const REFINEMENT_DOMAIN: u64 = 2;

/// Seed of the `index`-th component of a domain. Each component gets its own
/// stream, so adding or reordering components elsewhere never shifts it.
pub fn derive_seed(master: u64, domain: u64, index: usize) -> u64 {
    stream(master, (domain << 32) | index as u64).gen()
}

pub struct Game {
    pub pref: PreferenceMatrix,
    pub population: Option<AnnotatorPopulation>,
}

pub fn build_game(src: &GameSource) -> Result<Game> {
    let (pref, population) = match src {
        GameSource::Population { space, population } => {
            (aggregate_population(population, space)?, Some(population.clone()))
        }
        GameSource::Matrix { matrix } => (matrix.clone(), None),
        GameSource::MatrixFile { path } => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            let m: PreferenceMatrix = serde_json::from_str(&text).map_err(|e| HarnessError::parse("preference matrix", e))?;
            (m, None)
        }
        GameSource::BtRewards { space, rewards } => (bt_preference(rewards, space)?, None),
        GameSource::Random { contexts, actions, seed } => {
            let space = ActionSpace::uniform(*contexts, *actions, None)?;
            (PreferenceMatrix::random(space, &mut seeded(*seed)), None)
        }
    };
    Ok(Game { pref, population })
}

/// Solver ids in config order; unnamed solvers take their kind, suffixed
/// `-2`, `-3`, … on repeats.
pub fn solver_ids(solvers: &[SolverSpec]) -> Vec<String> {
    let taken: Vec<&str> = solvers.iter().filter_map(SolverSpec::explicit_id).collect();
    let mut ids: Vec<String> = Vec::with_capacity(solvers.len());
    for s in solvers {
        let id = match s.explicit_id() {
            Some(id) => id.to_string(),
            None => {
                let base = s.kind();
                let mut k = 1;
                let mut id = base.to_string();
                while taken.contains(&id.as_str()) || ids.contains(&id) {
                    k += 1;
                    id = format!("{base}-{k}");
                }
                id
            }
        };
        ids.push(id);
    }
    ids
}

fn chain_marginal(pi: &Policy, omega: &ConditionalPolicy) -> Result<Policy> {
    let n = pi.num_actions();
    let rows = (0..pi.num_contexts())
        .map(|x| {
            let mut m = vec![0.0; n];
            for (y, p) in pi.probs(x).iter().enumerate() {
                for (m, w) in m.iter_mut().zip(omega.probs(x, y)) {
                    *m += p * w;
                }
            }
            m
        })
        .collect();
    Ok(Policy::new(rows)?)
}

fn sequential(id: &str, kind: &str, pref: &PreferenceMatrix, sol: StackelbergSolution, mut d: Diagnostics) -> Result<SolutionRecord> {
    d.value = Some(sol.value);
    d.exploitability = exploitability(pref, &sol.leader)?;
    let chain = chain_marginal(&sol.leader, &sol.follower)?;
    Ok(SolutionRecord {
        id: id.to_string(),
        kind: kind.to_string(),
        leader: sol.leader,
        follower: Some(sol.follower),
        chain: Some(chain),
        diagnostics: d,
    })
}

fn gda_record(id: &str, kind: &str, pref: &PreferenceMatrix, refs: &ReferencePair, reg: Regularization, out: GdaOutcome) -> Result<SolutionRecord> {
    let problem = SlhfProblem::new(pref, refs, reg)?;
    let d = Diagnostics {
        duality_gap: Some(problem.duality_gap(&out.solution.leader, &out.solution.follower)?),
        stationarity: Some(problem.stationarity(&out.solution.leader, &out.solution.follower)?),
        iterations: Some(out.trace.iterations),
        converged: Some(out.trace.converged),
        trace: out.trace.rows,
        ..Diagnostics::default()
    };
    sequential(id, kind, pref, out.solution, d)
}

/// Bernoulli outcomes drawn from `p`: for each context and listed pair,
/// `per_pair` comparisons, aggregated into at most two records.
pub fn sample_dataset(pref: &PreferenceMatrix, pairs: &[[String; 2]], per_pair: u32, seed: u64) -> Result<ComparisonDataset> {
    let space = pref.space();
    let mut rng = seeded(seed);
    let mut records = Vec::new();
    for x in 0..space.num_contexts() {
        let ctx = &space.contexts()[x];
        for [a, b] in pairs {
            let lookup = |l: &str| {
                space
                    .action_index(x, l)
                    .ok_or_else(|| HarnessError::Config(format!("context {ctx:?} has no action {l:?}")))
            };
            let (i, j) = (lookup(a)?, lookup(b)?);
            let p = pref.get(x, i, j);
            let wins = (0..per_pair).filter(|_| rng.gen::<f64>() < p).count() as u32;
            if wins > 0 {
                records.push(Comparison::new(ctx, a, b, wins));
            }
            if wins < per_pair {
                records.push(Comparison::new(ctx, b, a, per_pair - wins));
            }
        }
    }
    Ok(ComparisonDataset::new(records)?)
}

fn run_solver(spec: &SolverSpec, id: &str, index: usize, master: Option<u64>, pref: &PreferenceMatrix, refs: &ReferencePair) -> Result<SolutionRecord> {
    let kind = spec.kind();
    let seed = || master.map(|m| derive_seed(m, SOLVER_DOMAIN, index)).ok_or_else(|| HarnessError::Config("no master seed".into()));
    match spec {
        SolverSpec::Nash { method, tau, .. } => {
            let sol = nash_solve(pref, refs.leader(), *tau, *method)?;
            Ok(SolutionRecord {
                id: id.to_string(),
                kind: kind.to_string(),
                leader: sol.policy,
                follower: None,
                chain: None,
                diagnostics: Diagnostics {
                    exploitability: sol.exploitability,
                    fixed_point_residual: Some(sol.residual),
                    iterations: Some(sol.iterations),
                    ..Diagnostics::default()
                },
            })
        }
        SolverSpec::StackelbergExact { tau_leader, tau_follower, .. } => {
            let reg = Regularization::new(*tau_leader, *tau_follower)?;
            let sol = stackelberg_exact(pref, refs, reg)?;
            let problem = SlhfProblem::new(pref, refs, reg)?;
            let d = Diagnostics {
                duality_gap: Some(problem.duality_gap(&sol.leader, &sol.follower)?),
                ..Diagnostics::default()
            };
            sequential(id, kind, pref, sol, d)
        }
        SolverSpec::StackelbergEnumerate { leader_ties, .. } => {
            let eq = stackelberg_enumerate(pref);
            let mut sol = eq.canonical();
            if *leader_ties == LeaderTies::Uniform {
                let n = pref.num_actions();
                let rows = eq
                    .contexts
                    .iter()
                    .map(|c| {
                        let mut row = vec![0.0; n];
                        for &a in &c.leader_set {
                            row[a] = 1.0 / c.leader_set.len() as f64;
                        }
                        row
                    })
                    .collect();
                sol.leader = Policy::new(rows)?;
            }
            let d = Diagnostics {
                equilibria: Some(u64::try_from(eq.count()).unwrap_or(u64::MAX)),
                ..Diagnostics::default()
            };
            sequential(id, kind, pref, sol, d)
        }
        SolverSpec::StackelbergGda { config, .. } => {
            let out = stackelberg_gda(pref, refs, config)?;
            gda_record(id, kind, pref, refs, config.regularization(), out)
        }
        SolverSpec::StackelbergGdaStochastic { config, .. } => {
            let mut cfg = config.clone();
            cfg.seed = seed()?;
            let out = stackelberg_gda_stochastic(pref, refs, &cfg)?;
            gda_record(id, kind, pref, refs, cfg.gda.regularization(), out)
        }
        SolverSpec::Rlhf { dataset, lambda, tau, .. } => {
            let data = match dataset {
                DatasetSpec::Inline { dataset } => dataset.clone(),
                DatasetSpec::File { path } => {
                    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                    serde_json::from_str(&text).map_err(|e| HarnessError::parse("comparison dataset", e))?
                }
                DatasetSpec::Sampled { pairs, per_pair } => sample_dataset(pref, pairs, *per_pair, seed()?)?,
            };
            let fit = fit_bt_mle(&data, pref.space(), *lambda, BtFitOptions::default())?;
            let pol = rlhf_policy(&fit.rewards, refs.leader(), *tau)?;
            Ok(SolutionRecord {
                id: id.to_string(),
                kind: kind.to_string(),
                diagnostics: Diagnostics {
                    exploitability: exploitability(pref, &pol.policy)?,
                    iterations: Some(fit.iterations),
                    converged: Some(fit.converged),
                    rewards: Some(fit.rewards),
                    unobserved: fit.unobserved,
                    ..Diagnostics::default()
                },
                leader: pol.policy,
                follower: None,
                chain: None,
            })
        }
    }
}

/// Policy ids entering the comparison table, with their policies.
pub fn comparison_policies(solutions: &[SolutionRecord]) -> Vec<(String, &Policy)> {
    let mut out = Vec::new();
    for s in solutions {
        match &s.chain {
            Some(c) => {
                out.push((format!("{}:leader", s.id), &s.leader));
                out.push((format!("{}:chain", s.id), c));
            }
            None => out.push((s.id.clone(), &s.leader)),
        }
    }
    out
}

fn comparison(pref: &PreferenceMatrix, solutions: &[SolutionRecord]) -> Result<ComparisonTable> {
    let pols = comparison_policies(solutions);
    let mut matrix = vec![vec![0.0; pols.len()]; pols.len()];
    for (i, (_, a)) in pols.iter().enumerate() {
        for (j, (_, b)) in pols.iter().enumerate() {
            matrix[i][j] = policy_preference(pref, a, b)?.mean;
        }
    }
    Ok(ComparisonTable {
        policies: pols.into_iter().map(|(id, _)| id).collect(),
        matrix,
    })
}

fn target_label(t: &TargetRef) -> String {
    match t {
        TargetRef::Annotator(name) => format!("annotator:{name}"),
        TargetRef::Actions(sets) => {
            let ctx: Vec<String> = sets.iter().map(|s| s.join("|")).collect();
            format!("actions:{}", ctx.join(";"))
        }
    }
}

fn resolve_target(t: &TargetRef, game: &Game) -> Result<TargetSpec> {
    let space = game.pref.space();
    let sets = match t {
        TargetRef::Annotator(name) => {
            let pop = game
                .population
                .as_ref()
                .ok_or_else(|| HarnessError::Config("annotator targets need a population game".into()))?;
            let ty = pop
                .types()
                .iter()
                .find(|t| &t.name == name)
                .ok_or_else(|| HarnessError::Config(format!("no annotator type {name:?}")))?;
            (0..space.num_contexts())
                .map(|x| {
                    let top = space.actions(x).iter().position(|a| a == &ty.ranking[0]);
                    top.map(|a| vec![a])
                        .ok_or_else(|| HarnessError::Config(format!("annotator {name:?} ranks an unknown action first")))
                })
                .collect::<Result<Vec<_>>>()?
        }
        TargetRef::Actions(labels) => {
            if labels.len() != space.num_contexts() {
                return Err(HarnessError::Config(format!(
                    "{} target lists for {} contexts",
                    labels.len(),
                    space.num_contexts()
                )));
            }
            labels
                .iter()
                .enumerate()
                .map(|(x, ls)| {
                    ls.iter()
                        .map(|l| {
                            space
                                .action_index(x, l)
                                .ok_or_else(|| HarnessError::Config(format!("context {x} has no action {l:?}")))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(TargetSpec::Actions(sets))
}

fn refinement_law<'a>(id: &str, solutions: &'a [SolutionRecord]) -> Result<SamplingLaw<'a>> {
    let (solver, part) = id.split_once(':').unwrap_or((id, ""));
    let s = solutions
        .iter()
        .find(|s| s.id == solver)
        .ok_or_else(|| HarnessError::Config(format!("refinement policy {id:?}: no such solver output")))?;
    match (part, &s.follower, &s.chain) {
        ("", Some(f), _) => Ok(SamplingLaw::Chain { leader: &s.leader, follower: f }),
        ("", None, _) | ("leader", _, _) => Ok(SamplingLaw::Iid(&s.leader)),
        ("chain", _, Some(c)) => Ok(SamplingLaw::Iid(c)),
        _ => Err(HarnessError::Config(format!("refinement policy {id:?}: unknown part {part:?}"))),
    }
}

fn run_refinement(task: &RefinementTask, index: usize, master: Option<u64>, game: &Game, solutions: &[SolutionRecord]) -> Result<Vec<RefinementRow>> {
    let law = refinement_law(&task.policy, solutions)?;
    let target = resolve_target(&task.target, game)?;
    let rho = game.pref.space().context_dist();
    let label = target_label(&task.target);
    let seed = task.seed.or_else(|| master.map(|m| derive_seed(m, REFINEMENT_DOMAIN, index)));
    task.n
        .iter()
        .map(|&n| {
            let analytic = hit_probability(law, rho, &target, n, EvalMode::Analytic)?.mean;
            let mc = match (task.trials, seed) {
                (0, _) => None,
                (trials, Some(seed)) => Some(hit_probability(law, rho, &target, n, EvalMode::MonteCarlo { seed, trials })?),
                (_, None) => return Err(HarnessError::Config("Monte Carlo refinement needs a seed".into())),
            };
            Ok(RefinementRow {
                policy: task.policy.clone(),
                target: label.clone(),
                n,
                analytic,
                estimate: mc.as_ref().map(|e| e.mean),
                stderr: mc.and_then(|e| e.stderr),
            })
        })
        .collect()
}

fn summarize(pref: &PreferenceMatrix) -> GameSummary {
    let space = pref.space().clone();
    let condorcet_winners = condorcet_winner(pref)
        .into_iter()
        .enumerate()
        .map(|(x, w)| w.map(|a| space.actions(x)[a].clone()))
        .collect();
    GameSummary {
        cycles: cycle_stats(pref, None, CycleOptions::default()).ok(),
        space,
        condorcet_winners,
    }
}

/// Runs every component of `cfg`. A failing component is recorded in
/// `errors` and the run carries on with whatever does not depend on it.
pub fn run_scenario(cfg: &ScenarioConfig) -> RunReport {
    let start = Instant::now();
    let mut timing = BTreeMap::new();
    let mut errors = Vec::new();
    let fail = |component: String, e: HarnessError, errors: &mut Vec<ComponentError>| {
        log::warn!("{component}: {e}");
        errors.push(ComponentError { component, diagnostic: e.diagnostic() });
    };
    let mut report = RunReport {
        schema: REPORT_SCHEMA.to_string(),
        config: cfg.clone(),
        status: Status::Ok,
        errors: Vec::new(),
        game: None,
        solutions: Vec::new(),
        comparison: ComparisonTable::default(),
        refinement: Vec::new(),
        timing: None,
    };
    if let Err(e) = cfg.validate() {
        fail("config".into(), e, &mut errors);
        report.status = Status::Failed;
        report.errors = errors;
        return report;
    }

    let t = Instant::now();
    let game = match build_game(&cfg.game) {
        Ok(g) => g,
        Err(e) => {
            fail("game".into(), e, &mut errors);
            report.status = Status::Failed;
            report.errors = errors;
            return report;
        }
    };
    report.game = Some(summarize(&game.pref));
    timing.insert("game".to_string(), t.elapsed().as_secs_f64());

    let (xs, n) = (game.pref.num_contexts(), game.pref.num_actions());
    let refs = cfg.reference.clone().unwrap_or_else(|| ReferencePair::uniform(xs, n));
    let refs_ok = refs.num_contexts() == xs && refs.num_actions() == n;
    if !refs_ok {
        let e = HarnessError::Core(prefgame_core::Error::Shape(format!(
            "reference is {}x{}, game is {xs}x{n}",
            refs.num_contexts(),
            refs.num_actions()
        )));
        fail("reference".into(), e, &mut errors);
    }

    for (i, (spec, id)) in cfg.solvers.iter().zip(solver_ids(&cfg.solvers)).enumerate() {
        if !refs_ok {
            break;
        }
        let t = Instant::now();
        match run_solver(spec, &id, i, cfg.seed, &game.pref, &refs) {
            Ok(rec) => report.solutions.push(rec),
            Err(e) => fail(format!("solver:{id}"), e, &mut errors),
        }
        timing.insert(format!("solver:{id}"), t.elapsed().as_secs_f64());
    }

    match comparison(&game.pref, &report.solutions) {
        Ok(c) => report.comparison = c,
        Err(e) => fail("comparison".into(), e, &mut errors),
    }

    for (i, task) in cfg.refinement.iter().enumerate() {
        let t = Instant::now();
        match run_refinement(task, i, cfg.seed, &game, &report.solutions) {
            Ok(rows) => report.refinement.extend(rows),
            Err(e) => fail(format!("refinement:{i}"), e, &mut errors),
        }
        timing.insert(format!("refinement:{i}"), t.elapsed().as_secs_f64());
    }

    if !errors.is_empty() {
        report.status = Status::Failed;
    }
    report.errors = errors;
    report.timing = Some(Timing {
        total_seconds: start.elapsed().as_secs_f64(),
        components: timing,
    });
    report
}

/// Greedy action of each context, for summaries.
pub fn mode(p: &Policy) -> Vec<usize> {
    (0..p.num_contexts()).map(|x| argmax(p.probs(x))).collect()
}
