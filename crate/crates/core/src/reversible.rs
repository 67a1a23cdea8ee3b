//! Chains that are reversible by construction: simple random walks on
//! undirected graphs and Metropolis–Hastings chains toward a positive
//! target, plus the navigation MDP that realizes a chain as a policy.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::connected_components;
use petgraph::graph::UnGraph;

use crate::chain::{ensure_irreducible, Chain};
use crate::error::{check_len, Error, Result};
use crate::mdp::{ActionSpec, Mdp, PolicyTable, StateSpec};

/// Undirected graph on nodes `0..n`. Self-loops count once toward the degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl Graph {
    /// Duplicate edges (in either orientation) are merged.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![BTreeSet::new(); n];
        let mut unique = BTreeSet::new();
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            unique.insert((u.min(v), u.max(v)));
            adjacency[u].insert(v);
            adjacency[v].insert(u);
        }
        Ok(Graph {
            n,
            edges: unique.into_iter().collect(),
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn deg(&self, s: usize) -> usize {
        self.adjacency[s].len()
    }

    pub fn neighbors(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[s].iter().copied()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut g = UnGraph::<(), ()>::with_capacity(self.n, self.edges.len());
        let nodes: Vec<_> = (0..self.n).map(|_| g.add_node(())).collect();
        for &(u, v) in &self.edges {
            g.add_edge(nodes[u], nodes[v], ());
        }
        connected_components(&g) == 1
    }

    fn ensure_walkable(&self) -> Result<()> {
        if let Some(s) = (0..self.n).find(|&s| self.deg(s) == 0) {
            if self.n > 1 {
                return Err(Error::InvalidArgument(format!("node {s} is isolated")));
            }
        }
        if !self.is_connected() {
            return Err(Error::InvalidArgument("graph is disconnected".into()));
        }
        Ok(())
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &edges).expect("valid path")
    }

    pub fn cycle(n: usize) -> Self {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::new(n, &edges).expect("valid cycle")
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        Graph::new(n, &edges).expect("valid complete graph")
    }
}

/// Strictly positive target weights `f` over states.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetWeights {
    f: DVector<f64>,
}

impl TargetWeights {
    pub fn new(f: DVector<f64>) -> Result<Self> {
        if let Some((i, v)) = f
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "target weight f[{i}] = {v} must be positive and finite"
            )));
        }
        Ok(TargetWeights { f })
    }

    pub fn uniform(n: usize) -> Self {
        TargetWeights {
            f: DVector::from_element(n, 1.0),
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.f
    }

    /// `f / Σf`.
    pub fn normalized(&self) -> DVector<f64> {
        &self.f / self.f.sum()
    }
}

/// `P(s, s') = 1/deg(s)` on edges.
pub fn simple_random_walk(graph: &Graph) -> Result<Chain> {
    graph.ensure_walkable()?;
    let n = graph.n();
    if n == 1 {
        return Chain::new(DMatrix::identity(1, 1));
    }
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        let w = 1.0 / graph.deg(s) as f64;
        for t in graph.neighbors(s) {
            p[(s, t)] = w;
        }
    }
    Chain::new(p)
}

/// Fills each diagonal entry with the mass the off-diagonal row leaves.
fn complete_rows(mut p: DMatrix<f64>) -> DMatrix<f64> {
    for s in 0..p.nrows() {
        p[(s, s)] = 0.0;
        let off: f64 = p.row(s).sum();
        p[(s, s)] = (1.0 - off).max(0.0);
    }
    p
}

/// Metropolis–Hastings walk on `graph` toward `f`:
/// `P_f(s, s') = min(1/deg(s), f(s') / (f(s) deg(s')))` for adjacent `s ≠ s'`,
/// remaining mass on the diagonal. Its stationary law is `f/Σf`.
pub fn metropolis_chain(graph: &Graph, target: &TargetWeights) -> Result<Chain> {
    graph.ensure_walkable()?;
    let n = graph.n();
    check_len("target weights", n, target.values().len())?;
    let f = target.values();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        let ds = graph.deg(s) as f64;
        for t in graph.neighbors(s).filter(|&t| t != s) {
            let dt = graph.deg(t) as f64;
            p[(s, t)] = f64::min(1.0 / ds, f[t] / (f[s] * dt));
        }
    }
    let p = complete_rows(p);
    Chain::with_mu(p, target.normalized())
}

/// Metropolis correction of a default chain `p0` with symmetric support:
/// `P_f(s, s') = min(P₀(s, s'), f(s') P₀(s', s) / f(s))` off the diagonal.
pub fn metropolis_from_default(p0: &Chain, target: &TargetWeights) -> Result<Chain> {
    let n = p0.n();
    check_len("target weights", n, target.values().len())?;
    let p = p0.p();
    for s in 0..n {
        for t in (s + 1)..n {
            if (p[(s, t)] > 0.0) != (p[(t, s)] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "default chain support is asymmetric at ({s}, {t})"
                )));
            }
        }
    }
    let f = target.values();
    let mut out = DMatrix::zeros(n, n);
    for s in 0..n {
        for t in 0..n {
            if s != t && p[(s, t)] > 0.0 {
                out[(s, t)] = f64::min(p[(s, t)], f[t] * p[(t, s)] / f[s]);
            }
        }
    }
    let out = complete_rows(out);
    let chain = Chain::new(out)?;
    ensure_irreducible(&chain)?;
    Chain::with_mu(chain.p().clone(), target.normalized())
}

/// `f = exp(β (v − max v))`; the shift leaves every Metropolis ratio unchanged.
pub fn gibbs_target(v: &DVector<f64>, beta: f64) -> Result<TargetWeights> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "beta {beta} must be a nonnegative real"
        )));
    }
    if v.is_empty() {
        return Err(Error::InvalidArgument("empty value vector".into()));
    }
    let max = v.max();
    TargetWeights::new(v.map(|x| (beta * (x - max)).exp()))
}

/// MDP whose actions at `s` are the next states `s'` with `P(s, s') > 0`,
/// each a deterministic move, together with the policy `π(s, s') = P(s, s')`
/// that reproduces `chain`.
pub fn navigation_mdp_from_chain(
    chain: &Chain,
    edge_rewards: &DMatrix<f64>,
) -> Result<(Mdp, PolicyTable)> {
    ensure_irreducible(chain)?;
    let n = chain.n();
    check_len("edge rewards rows", n, edge_rewards.nrows())?;
    check_len("edge rewards columns", n, edge_rewards.ncols())?;
    let p = chain.p();
    let mut states = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(n);
    for s in 0..n {
        let mut actions = Vec::new();
        let mut row = Vec::new();
        for t in 0..n {
            if p[(s, t)] > 0.0 {
                actions.push(ActionSpec::point_mass(
                    format!("to:{t}"),
                    n,
                    t,
                    edge_rewards[(s, t)],
                ));
                row.push(p[(s, t)]);
            }
        }
        states.push(StateSpec { actions });
        probs.push(row);
    }
    let mdp = Mdp::new(states, 0.0)?;
    Ok((mdp, PolicyTable::new(probs)))
}
