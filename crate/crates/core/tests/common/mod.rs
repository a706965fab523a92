//! Independent oracles and random instance generators shared by the
//! integration tests. Nothing here calls into the solvers under test.

#![allow(dead_code)]

use std::collections::BTreeMap;

use prefgame_core::sampling::StreamRng;
use prefgame_core::{ActionSpace, AnnotatorPopulation, ConditionalPolicy, Policy, PreferenceMatrix, ReferencePair};
use rand::Rng;

pub fn abc() -> ActionSpace {
    ActionSpace::single(&["A", "B", "C"]).unwrap()
}

pub fn condorcet_game(alpha: [f64; 3]) -> PreferenceMatrix {
    let pop = AnnotatorPopulation::condorcet(alpha).unwrap();
    prefgame_core::aggregate_population(&pop, &abc()).unwrap()
}

/// Strictly positive point of the simplex (normalised exponentials).
pub fn simplex(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-3).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn policy(rng: &mut StreamRng, xs: usize, ys: usize) -> Policy {
    Policy::new((0..xs).map(|_| simplex(rng, ys)).collect()).unwrap()
}

pub fn conditional(rng: &mut StreamRng, xs: usize, ys: usize) -> ConditionalPolicy {
    ConditionalPolicy::new((0..xs).map(|_| (0..ys).map(|_| simplex(rng, ys)).collect()).collect()).unwrap()
}

pub fn refs(rng: &mut StreamRng, xs: usize, ys: usize) -> ReferencePair {
    ReferencePair::new(policy(rng, xs, ys), conditional(rng, xs, ys)).unwrap()
}

/// Random game with `1..=max_x` contexts, `2..=max_y` actions and a random
/// context distribution.
pub fn game(rng: &mut StreamRng, max_x: usize, max_y: usize) -> PreferenceMatrix {
    let xs = rng.gen_range(1..=max_x);
    let ys = rng.gen_range(2..=max_y);
    let dist = simplex(rng, xs);
    let space = ActionSpace::uniform(xs, ys, Some(dist)).unwrap();
    PreferenceMatrix::random(space, rng)
}

/// The objective written out directly over raw arrays, so it can be
/// evaluated off the simplex for finite differences.
pub fn raw_objective(
    p: &PreferenceMatrix,
    pi: &[Vec<f64>],
    omega: &[Vec<Vec<f64>>],
    refs: &ReferencePair,
    tau_l: f64,
    tau_f: f64,
) -> f64 {
    let n = p.num_actions();
    let mut f = 0.0;
    for (x, rho) in p.space().context_dist().iter().enumerate() {
        let mut v = 0.0;
        for y in 0..n {
            let mut inner = 0.0;
            for y2 in 0..n {
                let w = omega[x][y][y2];
                inner += w * p.get(x, y, y2);
                inner += tau_f * w * (w / refs.follower().probs(x, y)[y2]).ln();
            }
            v += pi[x][y] * inner;
            v -= tau_l * pi[x][y] * (pi[x][y] / refs.leader().probs(x)[y]).ln();
        }
        f += rho * v;
    }
    f
}

/// Central finite differences of [`raw_objective`] in every coordinate.
pub fn fd_gradients(
    p: &PreferenceMatrix,
    pi: &Policy,
    omega: &ConditionalPolicy,
    refs: &ReferencePair,
    tau_l: f64,
    tau_f: f64,
    h: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let pi0 = pi.rows().to_vec();
    let om0 = omega.rows().to_vec();
    let f = |a: &[Vec<f64>], b: &[Vec<Vec<f64>>]| raw_objective(p, a, b, refs, tau_l, tau_f);
    let mut gl = pi0.clone();
    for x in 0..pi0.len() {
        for y in 0..pi0[x].len() {
            let (mut up, mut dn) = (pi0.clone(), pi0.clone());
            up[x][y] += h;
            dn[x][y] -= h;
            gl[x][y] = (f(&up, &om0) - f(&dn, &om0)) / (2.0 * h);
        }
    }
    let mut gf = om0.clone();
    for x in 0..om0.len() {
        for y in 0..om0[x].len() {
            for z in 0..om0[x][y].len() {
                let (mut up, mut dn) = (om0.clone(), om0.clone());
                up[x][y][z] += h;
                dn[x][y][z] -= h;
                gf[x][y][z] = (f(&pi0, &up) - f(&pi0, &dn)) / (2.0 * h);
            }
        }
    }
    (gl, gf)
}

/// Elementary cycles of the digraph `j → i iff beats(i, j)`, by trying every
/// vertex subset and every ordering that starts at the subset's minimum.
pub fn brute_force_cycles(n: usize, beats: &dyn Fn(usize, usize) -> bool) -> BTreeMap<usize, u64> {
    fn permute(rest: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == rest.len() {
            f(rest);
            return;
        }
        for i in k..rest.len() {
            rest.swap(k, i);
            permute(rest, k + 1, f);
            rest.swap(k, i);
        }
    }
    let edge = |u: usize, v: usize| beats(v, u);
    let mut hist = BTreeMap::new();
    for mask in 0u32..(1 << n) {
        let nodes: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        if nodes.len() < 2 {
            continue;
        }
        let head = nodes[0];
        let mut rest = nodes[1..].to_vec();
        let mut count = 0u64;
        permute(&mut rest, 0, &mut |order| {
            let mut u = head;
            for &v in order {
                if !edge(u, v) {
                    return;
                }
                u = v;
            }
            if edge(u, head) {
                count += 1;
            }
        });
        if count > 0 {
            *hist.entry(nodes.len()).or_insert(0) += count;
        }
    }
    hist
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
