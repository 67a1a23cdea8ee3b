//! Seeded random instances: connected graphs, targets, chains, MDPs,
//! approximators and parameter draws.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::approx::{make_linear, make_tabular, make_two_layer_one_hot, Approximator};
use crate::chain::Chain;
use crate::error::Result;
use crate::mdp::{ActionSpec, Mdp, StateSpec};
use crate::reversible::{metropolis_chain, Graph, TargetWeights};

/// Generator for trial `trial` of a run seeded with `seed`; trials use
/// disjoint ChaCha streams so they can be evaluated in any order.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Uniform spanning tree of `K_n` (Aldous–Broder) plus `extra` uniformly
/// drawn additional edges.
pub fn random_connected_graph<R: Rng + ?Sized>(n: usize, extra: usize, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    if n > 1 {
        let mut visited = vec![false; n];
        let mut current = rng.random_range(0..n);
        visited[current] = true;
        let mut seen = 1;
        while seen < n {
            let mut next = rng.random_range(0..n - 1);
            if next >= current {
                next += 1;
            }
            if !visited[next] {
                visited[next] = true;
                seen += 1;
                edges.push((current, next));
            }
            current = next;
        }
        for _ in 0..extra {
            let u = rng.random_range(0..n);
            let mut v = rng.random_range(0..n - 1);
            if v >= u {
                v += 1;
            }
            edges.push((u, v));
        }
    }
    Graph::new(n, &edges).expect("generated edges are in range")
}

/// `f` log-uniform in `[lo, hi]`.
pub fn log_uniform_target<R: Rng + ?Sized>(
    n: usize,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> TargetWeights {
    let (a, b) = (lo.ln(), hi.ln());
    TargetWeights::new(DVector::from_fn(n, |_, _| rng.random_range(a..b).exp()))
        .expect("exp is positive")
}

pub fn normal_vector<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn uniform_vector<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// A random Metropolis chain with its graph and target.
#[derive(Debug, Clone)]
pub struct ReversibleInstance {
    pub graph: Graph,
    pub target: TargetWeights,
    pub chain: Chain,
}

/// Metropolis chain on a random connected graph with `n` nodes and a
/// log-uniform target in `[0.1, 10]`.
pub fn random_reversible_instance<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ReversibleInstance {
    let extra = rng.random_range(0..=n);
    let graph = random_connected_graph(n, extra, rng);
    let target = log_uniform_target(n, 0.1, 10.0, rng);
    let chain = metropolis_chain(&graph, &target).expect("connected graph, positive target");
    ReversibleInstance {
        graph,
        target,
        chain,
    }
}

/// Dense chain with entries drawn uniformly then row-normalized; generically
/// irreducible, aperiodic and not reversible.
pub fn random_dense_chain<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Chain {
    let mut p = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.05..1.0));
    normalize_rows(&mut p);
    Chain::new(p).expect("normalized rows")
}

/// Row-stochastic chain supported on the edges (and loops) of a random
/// connected graph, with unrelated weights in each direction.
pub fn random_symmetric_support_chain<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Chain {
    let graph = random_connected_graph(n, rng.random_range(0..=n), rng);
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        p[(s, s)] = rng.random_range(0.0..1.0);
        for t in graph.neighbors(s) {
            p[(s, t)] = rng.random_range(0.05..1.0);
        }
    }
    normalize_rows(&mut p);
    Chain::new(p).expect("normalized rows")
}

fn normalize_rows(p: &mut DMatrix<f64>) {
    for mut row in p.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    // make each row sum to one up to the last ulp
    for i in 0..p.nrows() {
        let off: f64 = p.row(i).iter().sum::<f64>() - 1.0;
        let j = (0..p.ncols()).fold(0, |b, k| if p[(i, k)] > p[(i, b)] { k } else { b });
        p[(i, j)] -= off;
    }
}

/// Deterministic rotation `s → s + 1 mod n`.
pub fn directed_cycle(n: usize) -> Chain {
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        p[(s, (s + 1) % n)] = 1.0;
    }
    Chain::new(p).expect("permutation matrix")
}

/// MDP with dense random kernels (hence an irreducible induced chain for any
/// interior policy), `2..=max_actions` actions per state and normal rewards.
pub fn random_mdp<R: Rng + ?Sized>(n: usize, max_actions: usize, rng: &mut R) -> Mdp {
    let states = (0..n)
        .map(|_| {
            let k = rng.random_range(2..=max_actions.max(2));
            let actions = (0..k)
                .map(|a| {
                    let mut kernel: Vec<f64> =
                        (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
                    let total: f64 = kernel.iter().sum();
                    kernel.iter_mut().for_each(|q| *q /= total);
                    let fix = kernel.iter().sum::<f64>() - 1.0;
                    kernel[0] -= fix;
                    let rewards = (0..n)
                        .map(|_| rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    ActionSpec::dense(format!("a{a}"), kernel, rewards)
                })
                .collect();
            StateSpec { actions }
        })
        .collect();
    Mdp::new(states, 0.0).expect("generated MDP is valid")
}

/// Tabular, linear (random features) and two-layer one-hot approximators on
/// `n` states, in that order.
pub fn standard_families<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Approximator> {
    let k = n.clamp(1, 3);
    let features = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    let seed = rng.random();
    vec![
        make_tabular(n).expect("n > 0"),
        make_linear(features).expect("non-empty features"),
        make_two_layer_one_hot(n, 3, seed).expect("width 3"),
    ]
}

/// Random state permutation, handy for relabelling fixtures.
pub fn permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    v
}

/// Six-node navigation fixture: a Metropolis walk on a hexagon with one
/// chord, Gibbs-like target, and smooth edge rewards; plus three features
/// that cannot represent its value function exactly.
pub fn navigation_fixture() -> Result<(Chain, DMatrix<f64>, DMatrix<f64>)> {
    let graph = Graph::new(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)])?;
    let target = TargetWeights::new(DVector::from_vec(vec![1.0, 2.0, 1.5, 0.5, 1.0, 3.0]))?;
    let chain = metropolis_chain(&graph, &target)?;
    let bonus = [0.0, 1.0, -0.5, 2.0, 0.3, -1.0];
    let rewards = DMatrix::from_fn(6, 6, |s, t| bonus[t] - 0.25 * bonus[s]);
    let features = DMatrix::from_fn(6, 3, |s, k| {
        let x = s as f64 / 5.0;
        match k {
            0 => 1.0,
            1 => x,
            _ => (std::f64::consts::PI * x).sin(),
        }
    });
    Ok((chain, rewards, features))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_graphs_are_connected() {
        let mut rng = trial_rng(1, 0);
        for n in 1..15 {
            let g = random_connected_graph(n, n / 2, &mut rng);
            assert!(g.is_connected(), "n = {n}");
        }
    }

    #[test]
    fn trial_streams_are_reproducible_and_distinct() {
        let a: u64 = trial_rng(7, 3).random();
        let b: u64 = trial_rng(7, 3).random();
        let c: u64 = trial_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn random_chains_are_stochastic() {
        let mut rng = trial_rng(2, 0);
        for n in 2..8 {
            let c = random_symmetric_support_chain(n, &mut rng);
            assert!(c.mu().is_ok());
            let d = random_dense_chain(n, &mut rng);
            assert!(d.mu().is_ok());
        }
    }
}
