//! Approximate TD(0): sampled and expected updates, the mixed norm they
//! descend on reversible chains, and stochastic training runs.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::approx::{expect_states, fd_step, Approximator, ValueFamily};
use crate::chain::{dirichlet_form, mu_norm_sq, Chain};
use crate::error::{check_len, Error, Result};
use crate::mdp::{
    expected_reward_vector, induced_chain, sample_index, sample_transition, Mdp, PolicyTable,
    Transition,
};
use crate::value::{relative_value, value_function, ValueVector};

/// `(r + γ V_θ(s') − V_θ(s)) ∂_θ V_θ(s)`.
pub fn td_step(
    family: &ValueFamily,
    theta: &DVector<f64>,
    tr: &Transition,
    gamma: f64,
) -> DVector<f64> {
    let gap =
        tr.reward + gamma * family.value(theta, tr.next_state) - family.value(theta, tr.state);
    family.grad(theta, tr.state) * gap
}

/// Undiscounted TD step on rewards centered by `avg_reward`.
pub fn centered_td_step(
    family: &ValueFamily,
    theta: &DVector<f64>,
    tr: &Transition,
    avg_reward: f64,
) -> DVector<f64> {
    let centered = Transition {
        reward: tr.reward - avg_reward,
        ..*tr
    };
    td_step(family, theta, &centered, 1.0)
}

fn centered(rewards: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
    let avg = mu.dot(rewards);
    rewards.map(|r| r - avg)
}

/// `Σ_s μ(s) ∂_θV_θ(s) (R(s) + γ(PV_θ)(s) − V_θ(s))`; rewards are centered
/// by `E_μR` when `γ = 1`.
pub fn expected_td_step(
    family: &ValueFamily,
    theta: &DVector<f64>,
    chain: &Chain,
    rewards: &DVector<f64>,
    gamma: f64,
) -> Result<DVector<f64>> {
    expect_states(family, chain.n())?;
    check_len("expected_td_step rewards", chain.n(), rewards.len())?;
    let mu = chain.mu()?;
    let r = if gamma == 1.0 {
        centered(rewards, mu)
    } else {
        rewards.clone()
    };
    let v = family.values(theta);
    let gap = r + chain.p() * &v * gamma - &v;
    let weighted = gap.component_mul(mu);
    Ok(family.jacobian(theta).transpose() * weighted)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixedNorm {
    /// `γ‖f‖²_Dir + (1 − γ)‖f‖²_μ` with `f = V_θ − V`.
    pub mixed: f64,
    /// `‖f‖²_Dir`.
    pub dir_part: f64,
    /// `‖f‖²_μ`.
    pub mu_part: f64,
}

pub fn mixed_norm_sq(
    family: &ValueFamily,
    theta: &DVector<f64>,
    chain: &Chain,
    value_true: &ValueVector,
    gamma: f64,
) -> Result<MixedNorm> {
    expect_states(family, chain.n())?;
    check_len("mixed_norm_sq value", chain.n(), value_true.values.len())?;
    let mu = chain.mu()?;
    let f = family.values(theta) - &value_true.values;
    let dir_part = dirichlet_form(chain.p(), mu, &f);
    let mu_part = mu_norm_sq(&f, mu)?;
    Ok(MixedNorm {
        mixed: gamma * dir_part + (1.0 - gamma) * mu_part,
        dir_part,
        mu_part,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Closed form through the design matrix; tabular and linear only.
    AnalyticLinear,
    /// Central differences with step `1e-5·(1 + |θ_i|)`.
    FiniteDifference,
}

pub fn mixed_norm_gradient(
    family: &ValueFamily,
    theta: &DVector<f64>,
    chain: &Chain,
    value_true: &ValueVector,
    gamma: f64,
    mode: GradientMode,
) -> Result<DVector<f64>> {
    match mode {
        GradientMode::AnalyticLinear => {
            let phi = family.design_matrix().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "analytic mixed-norm gradient is only available for linear families, not {}",
                    family.name()
                ))
            })?;
            expect_states(family, chain.n())?;
            check_len(
                "mixed_norm_gradient value",
                chain.n(),
                value_true.values.len(),
            )?;
            let mu = chain.mu()?;
            let p = chain.p();
            let n = chain.n();
            let f = &phi * theta - &value_true.values;
            // coefficient of ∂f(s) in the differentiated objective
            let mut coef = f.component_mul(mu) * (2.0 * (1.0 - gamma));
            for s in 0..n {
                for t in 0..n {
                    let q = p[(s, t)];
                    if q != 0.0 {
                        let w = gamma * mu[s] * q * (f[t] - f[s]);
                        coef[t] += w;
                        coef[s] -= w;
                    }
                }
            }
            Ok(phi.transpose() * coef)
        }
        GradientMode::FiniteDifference => {
            let mut probe = theta.clone();
            let mut grad = DVector::zeros(theta.len());
            for i in 0..theta.len() {
                let h = fd_step(theta[i]);
                probe[i] = theta[i] + h;
                let up = mixed_norm_sq(family, &probe, chain, value_true, gamma)?.mixed;
                probe[i] = theta[i] - h;
                let down = mixed_norm_sq(family, &probe, chain, value_true, gamma)?.mixed;
                probe[i] = theta[i];
                grad[i] = (up - down) / (2.0 * h);
            }
            Ok(grad)
        }
    }
}

/// Expected TD step against minus half the gradient of its candidate objective.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityGap {
    pub expected_step: DVector<f64>,
    pub neg_half_grad: DVector<f64>,
    pub gap_inf_norm: f64,
}

impl IdentityGap {
    fn new(expected_step: DVector<f64>, grad: DVector<f64>) -> Self {
        let neg_half_grad = grad * -0.5;
        let gap_inf_norm = (&expected_step - &neg_half_grad).amax();
        IdentityGap {
            expected_step,
            neg_half_grad,
            gap_inf_norm,
        }
    }

    /// `max(1e-6, 1e-4·‖E[Δθ]‖∞)`, the certification tolerance.
    pub fn tolerance(&self) -> f64 {
        f64::max(1e-6, 1e-4 * self.expected_step.amax())
    }
}

/// Compares the expected discounted TD step with `−½ ∂_θ` of the mixed norm,
/// the gradient taken by finite differences.
pub fn theorem1_gap(
    family: &ValueFamily,
    theta: &DVector<f64>,
    chain: &Chain,
    rewards: &DVector<f64>,
    gamma: f64,
) -> Result<IdentityGap> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "discounted identity needs 0 <= gamma < 1, got {gamma}"
        )));
    }
    let v = value_function(chain, rewards, gamma)?;
    let step = expected_td_step(family, theta, chain, rewards, gamma)?;
    let grad = mixed_norm_gradient(
        family,
        theta,
        chain,
        &v,
        gamma,
        GradientMode::FiniteDifference,
    )?;
    Ok(IdentityGap::new(step, grad))
}

/// Centered undiscounted TD step against `−½ ∂_θ‖U_θ − U‖²_Dir`.
pub fn theorem2_gap(
    family: &ValueFamily,
    theta: &DVector<f64>,
    chain: &Chain,
    rewards: &DVector<f64>,
) -> Result<IdentityGap> {
    let u = relative_value(chain, rewards)?;
    let step = expected_td_step(family, theta, chain, rewards, 1.0)?;
    let grad = mixed_norm_gradient(
        family,
        theta,
        chain,
        &u,
        1.0,
        GradientMode::FiniteDifference,
    )?;
    Ok(IdentityGap::new(step, grad))
}

/// `2 Σ μ(s)P(s,s') ∂V_θ(s') (V_θ(s') − V_θ(s) − V(s') + V(s))`, the term
/// separating TD from the Dirichlet gradient on non-reversible chains. It
/// needs the true values, which is why TD cannot follow it.
pub fn nonreversible_correction(
    family: &ValueFamily,
    theta: &DVector<f64>,
    chain: &Chain,
    value_true: &ValueVector,
) -> Result<DVector<f64>> {
    expect_states(family, chain.n())?;
    check_len("correction value", chain.n(), value_true.values.len())?;
    let mu = chain.mu()?;
    let p = chain.p();
    let n = chain.n();
    let f = family.values(theta) - &value_true.values;
    let mut weight = DVector::zeros(n);
    for s in 0..n {
        for t in 0..n {
            let q = p[(s, t)];
            if q != 0.0 {
                weight[t] += mu[s] * q * (f[t] - f[s]);
            }
        }
    }
    Ok(family.jacobian(theta).transpose() * weight * 2.0)
}

/// `θ*` minimizing the mixed norm over a linear family (pseudo-inverse when
/// the objective is flat along some direction, e.g. constants at `γ = 1`).
pub fn linear_mixed_norm_minimizer(
    family: &ValueFamily,
    chain: &Chain,
    value_true: &ValueVector,
    gamma: f64,
) -> Result<DVector<f64>> {
    let phi = family.design_matrix().ok_or_else(|| {
        Error::InvalidArgument("closed-form minimizer needs a linear family".into())
    })?;
    expect_states(family, chain.n())?;
    let mu = chain.mu()?;
    let n = chain.n();
    let d = DMatrix::from_diagonal(mu);
    let dl = &d * (DMatrix::identity(n, n) - chain.p());
    let l = (&dl + dl.transpose()) * 0.5;
    let m = l * gamma + d * (1.0 - gamma);
    let lhs = phi.transpose() * &m * &phi;
    let rhs = phi.transpose() * &m * &value_true.values;
    let scale = lhs.amax().max(1e-300);
    lhs.svd(true, true)
        .solve(&rhs, 1e-12 * scale)
        .map_err(|_| Error::Singular("mixed-norm normal equations"))
}

/// Step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Constant(f64),
    /// `α₀ / (1 + t/τ)`.
    Decaying {
        alpha0: f64,
        tau: f64,
    },
}

impl LearningRate {
    pub fn rate(&self, t: u64) -> f64 {
        match *self {
            LearningRate::Constant(a) => a,
            LearningRate::Decaying { alpha0, tau } => alpha0 / (1.0 + t as f64 / tau),
        }
    }
}

impl fmt::Display for LearningRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearningRate::Constant(a) => write!(f, "const:{a}"),
            LearningRate::Decaying { alpha0, tau } => write!(f, "decay:{alpha0}:{tau}"),
        }
    }
}

/// Accepts `A`, `const:A` or `decay:A0:TAU`.
impl FromStr for LearningRate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidArgument(format!(
                "invalid learning-rate schedule '{s}' (expected A, const:A or decay:A0:TAU)"
            ))
        };
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
        };
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [a] => num(a).map(LearningRate::Constant).ok_or_else(bad),
            ["const", a] => num(a).map(LearningRate::Constant).ok_or_else(bad),
            ["decay", a, t] => {
                let alpha0 = num(a).ok_or_else(bad)?;
                let tau = num(t).filter(|t| *t > 0.0).ok_or_else(bad)?;
                Ok(LearningRate::Decaying { alpha0, tau })
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for LearningRate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// How rewards are centered in undiscounted runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    None,
    /// Subtract the exact `E_μR`.
    Known,
    /// Subtract an exponential moving average updated at rate `min(1, 10·α_t)`.
    Running,
}

impl FromStr for Centering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Centering::None),
            "known" => Ok(Centering::Known),
            "running" => Ok(Centering::Running),
            other => Err(Error::InvalidArgument(format!(
                "unknown centering '{other}' (expected none, known or running)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TdConfig {
    pub gamma: f64,
    pub steps: u64,
    pub learning_rate: LearningRate,
    pub seed: u64,
    pub centering: Centering,
    pub log_interval: u64,
}

impl TdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!(
                "gamma {} outside [0, 1]",
                self.gamma
            )));
        }
        if self.gamma == 1.0 && self.centering == Centering::None {
            return Err(Error::InvalidArgument(
                "gamma = 1 requires reward centering (known or running)".into(),
            ));
        }
        if self.gamma < 1.0 && self.centering != Centering::None {
            return Err(Error::InvalidArgument(
                "reward centering only applies to undiscounted runs (gamma = 1)".into(),
            ));
        }
        if self.steps == 0 || self.log_interval == 0 {
            return Err(Error::InvalidArgument(
                "steps and log interval must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TdRecord {
    pub step: u64,
    pub mixed_norm: f64,
    pub dir_norm_sq: f64,
    pub mu_norm_sq: f64,
    pub expected_step_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TdReport {
    pub config: TdConfig,
    pub family: &'static str,
    pub records: Vec<TdRecord>,
    #[serde(serialize_with = "serialize_vector")]
    pub final_theta: DVector<f64>,
}

fn serialize_vector<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

/// Runs TD along one trajectory of `policy`, started from a μ-distributed
/// state, logging the mixed norm against the exact value function every
/// `log_interval` steps and after the last step.
pub fn run_td(
    mdp: &Mdp,
    policy: &PolicyTable,
    approx: &Approximator,
    config: &TdConfig,
) -> Result<TdReport> {
    config.validate()?;
    let family = &approx.family;
    expect_states(family, mdp.n_states)?;
    let chain = induced_chain(mdp, policy)?;
    let rewards = expected_reward_vector(mdp, policy)?;
    let mu = chain.mu()?.clone();
    let gamma = config.gamma;
    let target = if gamma < 1.0 {
        value_function(&chain, &rewards, gamma)?
    } else {
        relative_value(&chain, &rewards)?
    };
    let avg = mu.dot(&rewards);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mu_weights: Vec<f64> = mu.iter().copied().collect();
    let mut state = sample_index(&mu_weights, &mut rng);
    let mut theta = approx.theta.clone();
    let mut running = 0.0;
    let mut records = Vec::with_capacity((config.steps / config.log_interval + 1) as usize);

    for t in 0..config.steps {
        let tr = sample_transition(mdp, policy, state, &mut rng)?;
        let alpha = config.learning_rate.rate(t);
        let delta = match config.centering {
            Centering::None => td_step(family, &theta, &tr, gamma),
            Centering::Known => centered_td_step(family, &theta, &tr, avg),
            Centering::Running => {
                let d = centered_td_step(family, &theta, &tr, running);
                running += (10.0 * alpha).min(1.0) * (tr.reward - running);
                d
            }
        };
        theta.axpy(alpha, &delta, 1.0);
        state = tr.next_state;

        let done = t + 1;
        if done % config.log_interval == 0 || done == config.steps {
            let norm = mixed_norm_sq(family, &theta, &chain, &target, gamma)?;
            let step = expected_td_step(family, &theta, &chain, &rewards, gamma)?;
            records.push(TdRecord {
                step: done,
                mixed_norm: norm.mixed,
                dir_norm_sq: norm.dir_part,
                mu_norm_sq: norm.mu_part,
                expected_step_norm: step.norm(),
            });
        }
    }

    Ok(TdReport {
        config: config.clone(),
        family: family.name(),
        records,
        final_theta: theta,
    })
}
