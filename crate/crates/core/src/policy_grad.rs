//! Softmax policies, stationary average reward, exact and approximate
//! policy gradients, and the Dirichlet-norm bound on their difference.

use nalgebra::DVector;
use serde::Serialize;

use crate::chain::{centered_mu_norm_sq, dirichlet_norm_sq, Chain};
use crate::error::{check_len, Result};
use crate::mdp::{expected_reward_vector, induced_chain, Mdp, PolicyTable};
use crate::value::relative_value;

/// Per-state softmax over the actions available at each state.
///
/// Logits are flattened state by state: `φ[offset(s) + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxFamily {
    offsets: Vec<usize>,
}

impl SoftmaxFamily {
    pub fn for_mdp(mdp: &Mdp) -> Self {
        SoftmaxFamily {
            offsets: mdp.action_offsets(),
        }
    }

    pub fn n_params(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn n_states(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn index(&self, s: usize, a: usize) -> usize {
        self.offsets[s] + a
    }

    pub fn probs(&self, phi: &DVector<f64>, s: usize) -> Vec<f64> {
        let logits = &phi.as_slice()[self.offsets[s]..self.offsets[s + 1]];
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    pub fn policy_table(&self, phi: &DVector<f64>) -> Result<PolicyTable> {
        check_len("softmax parameters", self.n_params(), phi.len())?;
        Ok(PolicyTable::new(
            (0..self.n_states()).map(|s| self.probs(phi, s)).collect(),
        ))
    }

    /// `∂_φ ln π_φ(s, a) = e_{(s,a)} − Σ_b π_φ(s, b) e_{(s,b)}`.
    pub fn log_prob_grad(&self, phi: &DVector<f64>, s: usize, a: usize) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_params());
        for (b, p) in self.probs(phi, s).into_iter().enumerate() {
            g[self.offsets[s] + b] = -p;
        }
        g[self.offsets[s] + a] += 1.0;
        g
    }
}

/// Stationary distribution over transitions `ξ(s, a, s') = μ(s)π(s,a)P_env`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDistribution {
    /// `(s, a, s', ξ)` for every positive-probability transition.
    pub xi: Vec<(usize, usize, usize, f64)>,
}

impl TransitionDistribution {
    pub fn total(&self) -> f64 {
        self.xi.iter().map(|t| t.3).sum()
    }
}

/// Everything the gradient routines need about the current policy.
struct PolicyState {
    chain: Chain,
    policy: PolicyTable,
    rewards: DVector<f64>,
}

impl PolicyState {
    fn new(mdp: &Mdp, family: &SoftmaxFamily, phi: &DVector<f64>) -> Result<Self> {
        let policy = family.policy_table(phi)?;
        let chain = induced_chain(mdp, &policy)?;
        let rewards = expected_reward_vector(mdp, &policy)?;
        chain.mu()?;
        Ok(PolicyState {
            chain,
            policy,
            rewards,
        })
    }

    fn xi(&self, mdp: &Mdp) -> TransitionDistribution {
        let mu = self.chain.mu().expect("computed in PolicyState::new");
        let mut xi = Vec::new();
        for s in 0..mdp.n_states {
            for (a, act) in mdp.states[s].actions.iter().enumerate() {
                let w = mu[s] * self.policy.prob(s, a);
                for (next, &q) in act.kernel.iter().enumerate() {
                    if w * q > 0.0 {
                        xi.push((s, a, next, w * q));
                    }
                }
            }
        }
        TransitionDistribution { xi }
    }
}

pub fn transition_distribution(
    mdp: &Mdp,
    family: &SoftmaxFamily,
    phi: &DVector<f64>,
) -> Result<TransitionDistribution> {
    Ok(PolicyState::new(mdp, family, phi)?.xi(mdp))
}

/// `R(φ) = Σ_s μ_φ(s) R_φ(s)`.
pub fn average_reward(mdp: &Mdp, family: &SoftmaxFamily, phi: &DVector<f64>) -> Result<f64> {
    let st = PolicyState::new(mdp, family, phi)?;
    Ok(st.chain.mu()?.dot(&st.rewards))
}

/// Central differences of [`average_reward`] with step `h·(1 + |φ_i|)`.
pub fn average_reward_fd_gradient(
    mdp: &Mdp,
    family: &SoftmaxFamily,
    phi: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let mut probe = phi.clone();
    let mut g = DVector::zeros(phi.len());
    for i in 0..phi.len() {
        let step = h * (1.0 + phi[i].abs());
        probe[i] = phi[i] + step;
        let up = average_reward(mdp, family, &probe)?;
        probe[i] = phi[i] - step;
        let down = average_reward(mdp, family, &probe)?;
        probe[i] = phi[i];
        g[i] = (up - down) / (2.0 * step);
    }
    Ok(g)
}

/// State-dependent baseline subtracted inside the gradient sum.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    None,
    /// The value vector used for the next-state term.
    Value,
    Custom(DVector<f64>),
}

fn gradient_sum(
    mdp: &Mdp,
    family: &SoftmaxFamily,
    phi: &DVector<f64>,
    st: &PolicyState,
    u: &DVector<f64>,
    baseline: &Baseline,
) -> Result<DVector<f64>> {
    check_len("value vector", mdp.n_states, u.len())?;
    let b = match baseline {
        Baseline::None => DVector::zeros(mdp.n_states),
        Baseline::Value => u.clone(),
        Baseline::Custom(b) => {
            check_len("baseline", mdp.n_states, b.len())?;
            b.clone()
        }
    };
    let mut g = DVector::zeros(family.n_params());
    for (s, a, next, w) in st.xi(mdp).xi {
        let coef = mdp.mean_reward(s, a, next) + u[next] - b[s];
        g.axpy(w * coef, &family.log_prob_grad(phi, s, a), 1.0);
    }
    Ok(g)
}

/// `E_ξ[(r(s,a,s') + U(s') − b(s)) ∂_φ ln π_φ(s,a)]` with the exact relative
/// value `U` of `π_φ`.
pub fn policy_gradient_exact(
    mdp: &Mdp,
    family: &SoftmaxFamily,
    phi: &DVector<f64>,
    baseline: &Baseline,
) -> Result<DVector<f64>> {
    let st = PolicyState::new(mdp, family, phi)?;
    let u = relative_value(&st.chain, &st.rewards)?.values;
    gradient_sum(mdp, family, phi, &st, &u, baseline)
}

/// Same sum with an approximation `Û` in place of `U`.
pub fn approx_policy_gradient(
    mdp: &Mdp,
    family: &SoftmaxFamily,
    phi: &DVector<f64>,
    u_hat: &DVector<f64>,
    baseline: &Baseline,
) -> Result<DVector<f64>> {
    let st = PolicyState::new(mdp, family, phi)?;
    gradient_sum(mdp, family, phi, &st, u_hat, baseline)
}

/// Exact relative value of `π_φ`.
pub fn policy_relative_value(
    mdp: &Mdp,
    family: &SoftmaxFamily,
    phi: &DVector<f64>,
) -> Result<DVector<f64>> {
    let st = PolicyState::new(mdp, family, phi)?;
    Ok(relative_value(&st.chain, &st.rewards)?.values)
}

/// `E_{s∼μ_φ} E_{a∼π_φ} ‖∂_φ ln π_φ(s,a)‖²`.
pub fn fisher_trace(mdp: &Mdp, family: &SoftmaxFamily, phi: &DVector<f64>) -> Result<f64> {
    let st = PolicyState::new(mdp, family, phi)?;
    let mu = st.chain.mu()?;
    let mut total = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions(s) {
            let p = st.policy.prob(s, a);
            if p > 0.0 {
                total += mu[s] * p * family.log_prob_grad(phi, s, a).norm_squared();
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasBound {
    /// `‖Δφ̂ − Δφ‖²`.
    pub lhs: f64,
    /// `2‖U − Û‖²_Dir · tr F`.
    pub rhs: f64,
    pub slack: f64,
    /// The weaker bound with `‖U − Û − E_μ(U − Û)‖²_μ` in place of the Dirichlet norm.
    pub rhs_mu: f64,
    pub fisher_trace: f64,
}

pub fn bias_bound_check(
    mdp: &Mdp,
    family: &SoftmaxFamily,
    phi: &DVector<f64>,
    u_hat: &DVector<f64>,
) -> Result<BiasBound> {
    let st = PolicyState::new(mdp, family, phi)?;
    let u = relative_value(&st.chain, &st.rewards)?.values;
    let exact = gradient_sum(mdp, family, phi, &st, &u, &Baseline::None)?;
    let approx = gradient_sum(mdp, family, phi, &st, u_hat, &Baseline::None)?;
    let lhs = (approx - exact).norm_squared();
    let diff = &u - u_hat;
    let dir = dirichlet_norm_sq(&diff, &st.chain)?;
    let var = centered_mu_norm_sq(&diff, st.chain.mu()?)?;
    let trace = fisher_trace(mdp, family, phi)?;
    let rhs = 2.0 * dir * trace;
    Ok(BiasBound {
        lhs,
        rhs,
        slack: rhs - lhs,
        rhs_mu: 2.0 * var * trace,
        fisher_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionSpec, StateSpec};
    use approx::assert_abs_diff_eq;

    fn one_state_two_actions(r0: f64, r1: f64) -> Mdp {
        Mdp::new(
            vec![StateSpec {
                actions: vec![
                    ActionSpec::point_mass("a", 1, 0, r0),
                    ActionSpec::point_mass("b", 1, 0, r1),
                ],
            }],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn softmax_rows_and_scores() {
        let mdp = one_state_two_actions(0.0, 0.0);
        let fam = SoftmaxFamily::for_mdp(&mdp);
        let phi = DVector::from_vec(vec![0.3, -1.2]);
        let p = fam.probs(&phi, 0);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        let mut acc = DVector::zeros(2);
        for a in 0..2 {
            acc += fam.log_prob_grad(&phi, 0, a) * p[a];
        }
        assert!(acc.amax() < 1e-15);
    }

    #[test]
    fn single_state_average_reward() {
        let mdp = one_state_two_actions(3.0, 3.0);
        let fam = SoftmaxFamily::for_mdp(&mdp);
        let phi = DVector::from_vec(vec![0.1, 0.9]);
        assert_abs_diff_eq!(
            average_reward(&mdp, &fam, &phi).unwrap(),
            3.0,
            epsilon = 1e-14
        );
        let zero = one_state_two_actions(0.0, 0.0);
        assert_eq!(average_reward(&zero, &fam, &phi).unwrap(), 0.0);
    }

    #[test]
    fn fisher_trace_examples() {
        let mdp = one_state_two_actions(0.0, 0.0);
        let fam = SoftmaxFamily::for_mdp(&mdp);
        assert_abs_diff_eq!(
            fisher_trace(&mdp, &fam, &DVector::zeros(2)).unwrap(),
            0.5,
            epsilon = 1e-15
        );

        let single = Mdp::new(
            vec![StateSpec {
                actions: vec![ActionSpec::point_mass("only", 1, 0, 1.0)],
            }],
            0.0,
        )
        .unwrap();
        let fam = SoftmaxFamily::for_mdp(&single);
        assert_eq!(
            fisher_trace(&single, &fam, &DVector::from_vec(vec![2.0])).unwrap(),
            0.0
        );
    }

    #[test]
    fn transition_distribution_sums_to_one() {
        let mdp = one_state_two_actions(1.0, 2.0);
        let fam = SoftmaxFamily::for_mdp(&mdp);
        let xi = transition_distribution(&mdp, &fam, &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert_abs_diff_eq!(xi.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn wrong_parameter_length_is_rejected() {
        let mdp = one_state_two_actions(1.0, 2.0);
        let fam = SoftmaxFamily::for_mdp(&mdp);
        assert!(average_reward(&mdp, &fam, &DVector::zeros(3)).is_err());
    }
}
