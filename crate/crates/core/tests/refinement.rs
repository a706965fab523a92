mod common;

use prefgame_core::refinement::{bon_preference, hit_probability, sample_chain, EvalMode, SamplingLaw, TargetSpec};
use prefgame_core::sampling::seeded;
use prefgame_core::{ConditionalPolicy, Policy, RewardTable};
use rand::Rng;

#[test]
fn analytic_hit_probability_matches_monte_carlo() {
    let mut rng = seeded(31);
    for case in 0..30 {
        let xs = rng.gen_range(1..=2);
        let n = rng.gen_range(2..=4);
        let pi = common::policy(&mut rng, xs, n);
        let omega = common::conditional(&mut rng, xs, n);
        let rho = common::simplex(&mut rng, xs);
        let target = TargetSpec::Actions((0..xs).map(|_| vec![rng.gen_range(0..n)]).collect());
        let big_n = rng.gen_range(1..=5);
        for law in [SamplingLaw::Iid(&pi), SamplingLaw::Chain { leader: &pi, follower: &omega }] {
            let a = hit_probability(law, &rho, &target, big_n, EvalMode::Analytic).unwrap();
            let mc = hit_probability(law, &rho, &target, big_n, EvalMode::MonteCarlo { seed: case, trials: 20_000 }).unwrap();
            let se = mc.stderr.unwrap();
            assert!((a.mean - mc.mean).abs() <= 4.0 * se, "case {case}: {} vs {} (se {se})", a.mean, mc.mean);
        }
    }
}

#[test]
fn analytic_bon_preference_matches_monte_carlo() {
    let mut rng = seeded(32);
    for case in 0..20 {
        let n = rng.gen_range(2..=4);
        let a = common::policy(&mut rng, 1, n);
        let b = common::policy(&mut rng, 1, n);
        let omega = common::conditional(&mut rng, 1, n);
        let r = RewardTable::new(vec![(0..n).map(|_| f64::from(rng.gen_range(0u8..3))).collect()]).unwrap();
        let big_n = rng.gen_range(1..=4);
        let first = SamplingLaw::Chain { leader: &a, follower: &omega };
        let second = SamplingLaw::Iid(&b);
        let exact = bon_preference(first, second, &r, &[1.0], big_n, EvalMode::Analytic).unwrap();
        let mc = bon_preference(first, second, &r, &[1.0], big_n, EvalMode::MonteCarlo { seed: case, trials: 20_000 }).unwrap();
        let se = mc.stderr.unwrap();
        assert!((exact.mean - mc.mean).abs() <= 4.0 * se, "case {case}: {} vs {}", exact.mean, mc.mean);
    }
}

#[test]
fn monte_carlo_is_reproducible_per_seed() {
    let pi = Policy::uniform(1, 3);
    let omega = ConditionalPolicy::uniform(1, 3);
    let law = SamplingLaw::Chain { leader: &pi, follower: &omega };
    let t = TargetSpec::Actions(vec![vec![1]]);
    let run = |seed| hit_probability(law, &[1.0], &t, 2, EvalMode::MonteCarlo { seed, trials: 1000 }).unwrap();
    assert_eq!(run(3), run(3));
    assert_ne!(run(3).mean, run(4).mean);
    assert_eq!(sample_chain(&pi, &omega, 0, 6, 9).unwrap(), sample_chain(&pi, &omega, 0, 6, 9).unwrap());
}

#[test]
fn shape_errors() {
    let pi = Policy::uniform(1, 3);
    let t = TargetSpec::Actions(vec![vec![0], vec![1]]);
    assert!(hit_probability(SamplingLaw::Iid(&pi), &[1.0], &t, 1, EvalMode::Analytic).is_err());
    let t = TargetSpec::Actions(vec![vec![5]]);
    assert!(hit_probability(SamplingLaw::Iid(&pi), &[1.0], &t, 1, EvalMode::Analytic).is_err());
    let omega = ConditionalPolicy::uniform(2, 3);
    assert!(sample_chain(&pi, &omega, 0, 2, 0).is_err());
    assert!(sample_chain(&pi, &ConditionalPolicy::uniform(1, 3), 0, 0, 0).is_err());
}
