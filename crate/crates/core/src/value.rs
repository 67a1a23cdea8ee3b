//! Exact value functions, relative values and state advantages.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chain::{dirichlet_form, mu_norm_sq, Chain};
use crate::error::{check_len, Error, Result};
use crate::mdp::{Mdp, PolicyTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ValueKind {
    /// Discounted value with the given decay factor.
    Discounted(f64),
    /// Relative (bias) value, normalized to `E_μ U = 0`.
    Relative,
}

impl ValueKind {
    /// Decay factor seen by Bellman-type expressions (`1` for relative values).
    pub fn gamma(&self) -> f64 {
        match *self {
            ValueKind::Discounted(g) => g,
            ValueKind::Relative => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector {
    pub values: DVector<f64>,
    pub kind: ValueKind,
}

impl ValueVector {
    pub fn new(values: DVector<f64>, kind: ValueKind) -> Self {
        ValueVector { values, kind }
    }
}

/// Solves `(I − γP) V = R` for `0 ≤ γ < 1`.
pub fn value_function(chain: &Chain, rewards: &DVector<f64>, gamma: f64) -> Result<ValueVector> {
    check_len("value_function rewards", chain.n(), rewards.len())?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "gamma = {gamma} needs 0 <= gamma < 1; use relative_value for gamma = 1"
        )));
    }
    let n = chain.n();
    let a = DMatrix::identity(n, n) - chain.p() * gamma;
    let values = a
        .lu()
        .solve(rewards)
        .ok_or(Error::Singular("I - gamma P"))?;
    Ok(ValueVector::new(values, ValueKind::Discounted(gamma)))
}

/// `‖R + γPV − V‖∞`.
pub fn bellman_residual(
    chain: &Chain,
    rewards: &DVector<f64>,
    value: &DVector<f64>,
    gamma: f64,
) -> f64 {
    (rewards + chain.p() * value * gamma - value).amax()
}

/// `E_μ R`.
pub fn average_reward_scalar(rewards: &DVector<f64>, mu: &DVector<f64>) -> Result<f64> {
    check_len("average_reward_scalar", mu.len(), rewards.len())?;
    Ok(mu.dot(rewards))
}

/// Solves `(I − P) U = R − E_μR` with `E_μ U = 0`.
///
/// The last row of `I − P` is swapped for `μᵀ`; for an irreducible chain
/// any `n − 1` rows of `I − P` are independent, so the system is regular.
pub fn relative_value(chain: &Chain, rewards: &DVector<f64>) -> Result<ValueVector> {
    check_len("relative_value rewards", chain.n(), rewards.len())?;
    let mu = chain.mu()?;
    let n = chain.n();
    let avg = mu.dot(rewards);
    let mut a = DMatrix::identity(n, n) - chain.p();
    let mut b = rewards.map(|r| r - avg);
    a.row_mut(n - 1).copy_from(&mu.transpose());
    b[n - 1] = 0.0;
    let values = a
        .lu()
        .solve(&b)
        .ok_or(Error::Singular("relative value system"))?;
    Ok(ValueVector::new(values, ValueKind::Relative))
}

/// `‖(R − E_μR) + PU − U‖∞`.
pub fn centered_bellman_residual(
    chain: &Chain,
    rewards: &DVector<f64>,
    value: &DVector<f64>,
) -> Result<f64> {
    let avg = average_reward_scalar(rewards, chain.mu()?)?;
    let centered = rewards.map(|r| r - avg);
    Ok(bellman_residual(chain, &centered, value, 1.0))
}

/// `E[r(s, s')]` marginalized over actions: the `P(s, s')`-conditional mean
/// of `r(s, a, s')`. Entries off the support of `P` are zero and never read.
pub fn mean_edge_reward(mdp: &Mdp, policy: &PolicyTable) -> Result<DMatrix<f64>> {
    policy.validate(mdp)?;
    let n = mdp.n_states;
    let mut flow = DMatrix::<f64>::zeros(n, n);
    let mut mass = DMatrix::<f64>::zeros(n, n);
    for s in 0..n {
        for (a, act) in mdp.states[s].actions.iter().enumerate() {
            let w = policy.prob(s, a);
            for (next, &q) in act.kernel.iter().enumerate() {
                if w * q > 0.0 {
                    mass[(s, next)] += w * q;
                    flow[(s, next)] += w * q * mdp.mean_reward(s, a, next);
                }
            }
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if mass[(i, j)] > 0.0 {
            flow[(i, j)] / mass[(i, j)]
        } else {
            0.0
        }
    }))
}

/// `A(s'|s) = E[r(s,s')] + γ V(s') − V(s)` on the support of `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageMatrix {
    values: DMatrix<f64>,
    support: DMatrix<bool>,
    pub gamma: f64,
}

impl AdvantageMatrix {
    pub fn get(&self, s: usize, next: usize) -> Result<f64> {
        if s >= self.support.nrows() || next >= self.support.ncols() || !self.support[(s, next)] {
            return Err(Error::InvalidArgument(format!(
                "advantage requested off the chain support at ({s}, {next})"
            )));
        }
        Ok(self.values[(s, next)])
    }

    /// Dense view; off-support entries are zero.
    pub fn dense(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn on_support(&self, s: usize, next: usize) -> bool {
        self.support[(s, next)]
    }
}

pub fn state_advantage(
    chain: &Chain,
    value: &ValueVector,
    edge_reward: &DMatrix<f64>,
) -> Result<AdvantageMatrix> {
    let n = chain.n();
    check_len("state_advantage value", n, value.values.len())?;
    check_len("state_advantage edge rewards", n, edge_reward.nrows())?;
    check_len("state_advantage edge rewards", n, edge_reward.ncols())?;
    let gamma = value.kind.gamma();
    let v = &value.values;
    let p = chain.p();
    let support = DMatrix::from_fn(n, n, |i, j| p[(i, j)] > 0.0);
    let values = DMatrix::from_fn(n, n, |i, j| {
        if support[(i, j)] {
            edge_reward[(i, j)] + gamma * v[j] - v[i]
        } else {
            0.0
        }
    });
    Ok(AdvantageMatrix {
        values,
        support,
        gamma,
    })
}

/// Both sides of the advantage-error identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdvantageIdentity {
    /// `E_{s∼μ} E_{s'∼P(s,·)} (A(s'|s) − A_θ(s'|s))²`.
    pub lhs: f64,
    /// `2‖U − U_θ‖²_Dir`.
    pub rhs_gamma1: f64,
    /// `2γ‖V − V_θ‖²_Dir + (1 − γ)²‖V − V_θ‖²_μ`.
    pub rhs_gamma_lt1: f64,
}

pub fn advantage_error_identity(
    chain: &Chain,
    value_true: &ValueVector,
    value_approx: &ValueVector,
    edge_reward: &DMatrix<f64>,
    gamma: f64,
) -> Result<AdvantageIdentity> {
    if std::mem::discriminant(&value_true.kind) != std::mem::discriminant(&value_approx.kind) {
        return Err(Error::InvalidArgument(
            "true and approximate values must be of the same kind".into(),
        ));
    }
    let n = chain.n();
    check_len("advantage identity approx", n, value_approx.values.len())?;
    let mu = chain.mu()?;
    let p = chain.p();
    let with_gamma = |v: &ValueVector| ValueVector::new(v.values.clone(), kind_with_gamma(gamma));
    let a = state_advantage(chain, &with_gamma(value_true), edge_reward)?;
    let a_hat = state_advantage(chain, &with_gamma(value_approx), edge_reward)?;

    let mut lhs = 0.0;
    for s in 0..n {
        let mut row = 0.0;
        for t in 0..n {
            if a.on_support(s, t) {
                let d = a.dense()[(s, t)] - a_hat.dense()[(s, t)];
                row += p[(s, t)] * d * d;
            }
        }
        lhs += mu[s] * row;
    }

    let diff = &value_true.values - &value_approx.values;
    let dir = dirichlet_form(p, mu, &diff);
    let l2 = mu_norm_sq(&diff, mu)?;
    Ok(AdvantageIdentity {
        lhs,
        rhs_gamma1: 2.0 * dir,
        rhs_gamma_lt1: 2.0 * gamma * dir + (1.0 - gamma).powi(2) * l2,
    })
}

fn kind_with_gamma(gamma: f64) -> ValueKind {
    if gamma == 1.0 {
        ValueKind::Relative
    } else {
        ValueKind::Discounted(gamma)
    }
}
