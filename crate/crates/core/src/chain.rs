//! Markov chains on a finite state space: stationary distributions,
//! detailed-balance certificates, μ-weighted norms, Dirichlet forms and
//! spectral gaps.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::mdp::STOCHASTIC_TOL;

/// Default absolute tolerance on detailed-balance violations.
pub const REVERSIBILITY_TOL: f64 = 1e-10;

/// Stationarity residual `‖μᵀP − μᵀ‖∞` accepted for a computed μ.
pub const STATIONARY_TOL: f64 = 1e-10;

/// Eigenvalues below `-PSD_TOL` make a chain non-psd.
pub const PSD_TOL: f64 = 1e-10;

/// Row-stochastic transition matrix with a lazily computed stationary law.
#[derive(Debug, Clone)]
pub struct Chain {
    p: DMatrix<f64>,
    mu: OnceLock<DVector<f64>>,
}

impl PartialEq for Chain {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
    }
}

impl Chain {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != p.ncols() {
            return Err(Error::Dimension {
                context: "transition matrix columns",
                expected: p.nrows(),
                found: p.ncols(),
            });
        }
        if p.nrows() == 0 {
            return Err(Error::InvalidArgument("empty transition matrix".into()));
        }
        for (i, row) in p.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            if !(min >= 0.0) || !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                return Err(Error::NotStochastic { row: i, sum, min });
            }
        }
        Ok(Chain {
            p,
            mu: OnceLock::new(),
        })
    }

    /// Chain with a caller-supplied stationary law, checked against `p`.
    pub fn with_mu(p: DMatrix<f64>, mu: DVector<f64>) -> Result<Self> {
        let chain = Chain::new(p)?;
        check_len("stationary distribution", chain.n(), mu.len())?;
        let residual = stationarity_residual(&chain.p, &mu);
        if mu.iter().any(|&m| m < 0.0)
            || (mu.sum() - 1.0).abs() > STATIONARY_TOL
            || residual > STATIONARY_TOL
        {
            return Err(Error::InvalidArgument(format!(
                "supplied mu is not stationary (residual {residual:e})"
            )));
        }
        let _ = chain.mu.set(mu);
        Ok(chain)
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Stationary distribution, computed on first use.
    pub fn mu(&self) -> Result<&DVector<f64>> {
        if let Some(mu) = self.mu.get() {
            return Ok(mu);
        }
        let mu = stationary_distribution(self)?;
        Ok(self.mu.get_or_init(|| mu))
    }

    /// `true` when μ has already been computed or supplied.
    pub fn has_mu(&self) -> bool {
        self.mu.get().is_some()
    }
}

/// `‖μᵀP − μᵀ‖∞`.
pub fn stationarity_residual(p: &DMatrix<f64>, mu: &DVector<f64>) -> f64 {
    (p.transpose() * mu - mu).amax()
}

/// Strongly connected components of the positive-support digraph, each
/// sorted, listed in order of their smallest state.
pub fn communicating_classes(p: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = p.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut comps: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|ix| ix.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    comps.sort_by_key(|c| c[0]);
    comps
}

pub fn ensure_irreducible(chain: &Chain) -> Result<()> {
    let comps = communicating_classes(chain.p());
    if comps.len() > 1 {
        return Err(Error::Reducible { components: comps });
    }
    Ok(())
}

/// Solves `(Pᵀ − I)μ = 0, Σμ = 1` directly, falling back to power iteration
/// on the lazy chain `(P + I)/2` when the direct solve is inaccurate.
pub fn stationary_distribution(chain: &Chain) -> Result<DVector<f64>> {
    ensure_irreducible(chain)?;
    let n = chain.n();
    let p = chain.p();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;

    if let Some(mu) = a.lu().solve(&b) {
        let mu = clean_distribution(mu);
        if stationarity_residual(p, &mu) <= STATIONARY_TOL {
            return Ok(mu);
        }
    }
    power_iteration(p)
}

fn clean_distribution(mut mu: DVector<f64>) -> DVector<f64> {
    for m in mu.iter_mut() {
        if *m < 0.0 {
            *m = 0.0;
        }
    }
    let total = mu.sum();
    mu / total
}

fn power_iteration(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let lazy_t = (p + DMatrix::identity(n, n)).transpose() * 0.5;
    let mut mu = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..1_000_000 {
        let next = &lazy_t * &mu;
        let delta = (&next - &mu).amax();
        mu = next;
        if delta < 1e-15 {
            break;
        }
    }
    let mu = clean_distribution(mu);
    if stationarity_residual(p, &mu) <= STATIONARY_TOL {
        Ok(mu)
    } else {
        Err(Error::Singular("stationary distribution did not converge"))
    }
}

/// Outcome of a detailed-balance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversibilityCertificate {
    pub tolerance: f64,
    pub max_violation: f64,
    /// Pairs with `P(s, s') > 0` but `P(s', s) = 0`, as `(s, s')`.
    pub structural_pairs: Vec<(usize, usize)>,
    pub pass: bool,
}

/// Max of `|μ(s)P(s,s') − μ(s')P(s',s)|` for an explicit μ.
pub fn detailed_balance_violation(p: &DMatrix<f64>, mu: &DVector<f64>) -> f64 {
    let n = p.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((mu[i] * p[(i, j)] - mu[j] * p[(j, i)]).abs());
        }
    }
    worst
}

pub fn structural_irreversibility(p: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = p.nrows();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && p[(i, j)] > 0.0 && p[(j, i)] == 0.0 {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

pub fn check_reversibility(chain: &Chain, tol: f64) -> Result<ReversibilityCertificate> {
    let mu = chain.mu()?;
    let max_violation = detailed_balance_violation(chain.p(), mu);
    let structural_pairs = structural_irreversibility(chain.p());
    Ok(ReversibilityCertificate {
        tolerance: tol,
        max_violation,
        pass: max_violation <= tol && structural_pairs.is_empty(),
        structural_pairs,
    })
}

pub fn mu_inner(f: &DVector<f64>, g: &DVector<f64>, mu: &DVector<f64>) -> Result<f64> {
    check_len("mu_inner f", mu.len(), f.len())?;
    check_len("mu_inner g", mu.len(), g.len())?;
    Ok(mu
        .iter()
        .zip(f.iter())
        .zip(g.iter())
        .map(|((m, a), b)| m * a * b)
        .sum())
}

pub fn mu_norm_sq(f: &DVector<f64>, mu: &DVector<f64>) -> Result<f64> {
    mu_inner(f, f, mu)
}

/// `E_μ f`.
pub fn mu_mean(f: &DVector<f64>, mu: &DVector<f64>) -> Result<f64> {
    check_len("mu_mean", mu.len(), f.len())?;
    Ok(mu.dot(f))
}

/// `‖f − E_μ f‖²_μ`.
pub fn centered_mu_norm_sq(f: &DVector<f64>, mu: &DVector<f64>) -> Result<f64> {
    let m = mu_mean(f, mu)?;
    let centered = f.map(|x| x - m);
    mu_norm_sq(&centered, mu)
}

/// `½ Σ μ(s) P(s,s') (f(s') − f(s))²` with an explicit μ.
pub fn dirichlet_form(p: &DMatrix<f64>, mu: &DVector<f64>, f: &DVector<f64>) -> f64 {
    let n = p.nrows();
    let mut acc = 0.0;
    for s in 0..n {
        let mut row = 0.0;
        for t in 0..n {
            let q = p[(s, t)];
            if q != 0.0 {
                let d = f[t] - f[s];
                row += q * d * d;
            }
        }
        acc += mu[s] * row;
    }
    0.5 * acc
}

pub fn dirichlet_norm_sq(f: &DVector<f64>, chain: &Chain) -> Result<f64> {
    check_len("dirichlet_norm_sq", chain.n(), f.len())?;
    Ok(dirichlet_form(chain.p(), chain.mu()?, f))
}

/// `⟨(I − P) f, f⟩_μ`.
pub fn dirichlet_via_operator(f: &DVector<f64>, chain: &Chain) -> Result<f64> {
    check_len("dirichlet_via_operator", chain.n(), f.len())?;
    let lf = f - chain.p() * f;
    mu_inner(&lf, f, chain.mu()?)
}

/// Spectrum summary of a reversible chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralReport {
    pub beta: f64,
    pub lambda2: f64,
    pub lambda_min: f64,
    pub psd: bool,
}

/// Spectral gap via the symmetrization `D^{1/2} P D^{-1/2}`, `D = diag(μ)`.
///
/// The one-state chain has no spectrum below 1; its gap is reported as 2.
pub fn spectral_gap(chain: &Chain) -> Result<SpectralReport> {
    ensure_irreducible(chain)?;
    let cert = check_reversibility(chain, REVERSIBILITY_TOL)?;
    if !cert.pass {
        return Err(Error::NotReversible {
            violation: cert.max_violation,
            structural: cert.structural_pairs.len(),
        });
    }
    let n = chain.n();
    if n == 1 {
        return Ok(SpectralReport {
            beta: 2.0,
            lambda2: -1.0,
            lambda_min: 1.0,
            psd: true,
        });
    }
    let mu = chain.mu()?;
    let sq: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
    let p = chain.p();
    let s = DMatrix::from_fn(n, n, |i, j| sq[i] * p[(i, j)] / sq[j]);
    let sym = (&s + s.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let lambda2 = eig[1];
    let lambda_min = eig[n - 1];
    Ok(SpectralReport {
        beta: 1.0 - lambda2,
        lambda2,
        lambda_min,
        psd: lambda_min >= -PSD_TOL,
    })
}
