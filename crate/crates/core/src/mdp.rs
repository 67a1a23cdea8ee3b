//! Finite MDP model, tabular policies and the state chain a policy induces.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::chain::Chain;
use crate::error::{check_len, Error, Result};

/// Row sums must match 1 within this absolute tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// One action available at a state.
///
/// `kernel[s']` is `P_env((s, a), s')`; `rewards[s']` is the mean reward
/// `r(s, a, s')` collected when the transition lands in `s'`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub name: String,
    pub kernel: Vec<f64>,
    pub rewards: Vec<Option<f64>>,
}

impl ActionSpec {
    /// Deterministic move to `next` with reward `reward`.
    pub fn point_mass(name: impl Into<String>, n_states: usize, next: usize, reward: f64) -> Self {
        let mut kernel = vec![0.0; n_states];
        let mut rewards = vec![None; n_states];
        kernel[next] = 1.0;
        rewards[next] = Some(reward);
        ActionSpec {
            name: name.into(),
            kernel,
            rewards,
        }
    }

    /// Action with a dense kernel and a dense reward row.
    pub fn dense(name: impl Into<String>, kernel: Vec<f64>, rewards: Vec<f64>) -> Self {
        ActionSpec {
            name: name.into(),
            kernel,
            rewards: rewards.into_iter().map(Some).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpec {
    pub actions: Vec<ActionSpec>,
}

/// Finite Markov decision process with transition-attached mean rewards.
///
/// Fields are public so that ill-formed models can be built and passed to
/// [`validate_mdp`]; [`Mdp::new`] refuses anything that does not validate.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    pub n_states: usize,
    pub states: Vec<StateSpec>,
    pub reward_noise_std: f64,
}

impl Mdp {
    pub fn new(states: Vec<StateSpec>, reward_noise_std: f64) -> Result<Self> {
        let mdp = Mdp {
            n_states: states.len(),
            states,
            reward_noise_std,
        };
        let diags = validate_mdp(&mdp);
        if diags.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(diags))
        }
    }

    pub fn n_actions(&self, s: usize) -> usize {
        self.states[s].actions.len()
    }

    pub fn action(&self, s: usize, a: usize) -> &ActionSpec {
        &self.states[s].actions[a]
    }

    /// Mean reward `r(s, a, s')`; zero where the model leaves it undefined.
    pub fn mean_reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.states[s].actions[a].rewards[next].unwrap_or(0.0)
    }

    /// Offsets of each state's first action in a flattened `(s, a)` index.
    pub fn action_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.n_states + 1);
        let mut acc = 0;
        for st in &self.states {
            offsets.push(acc);
            acc += st.actions.len();
        }
        offsets.push(acc);
        offsets
    }
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    StateCount {
        declared: usize,
        found: usize,
    },
    NoActions {
        state: usize,
    },
    KernelLength {
        state: usize,
        action: usize,
        len: usize,
    },
    RewardLength {
        state: usize,
        action: usize,
        len: usize,
    },
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
        p: f64,
    },
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
    },
    MissingReward {
        state: usize,
        action: usize,
        next: usize,
    },
    NonFiniteReward {
        state: usize,
        action: usize,
        next: usize,
    },
    NoiseStd {
        value: f64,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::StateCount { declared, found } => {
                write!(f, "n_states: declared {declared} but {found} states listed")
            }
            Diagnostic::NoActions { state } => write!(f, "states[{state}].actions: empty"),
            Diagnostic::KernelLength { state, action, len } => write!(
                f,
                "states[{state}].actions[{action}].kernel: length {len} does not match n_states"
            ),
            Diagnostic::RewardLength { state, action, len } => write!(
                f,
                "states[{state}].actions[{action}].rewards: length {len} does not match n_states"
            ),
            Diagnostic::NegativeProbability {
                state,
                action,
                next,
                p,
            } => write!(
                f,
                "states[{state}].actions[{action}].kernel: negative probability {p} for next state {next}"
            ),
            Diagnostic::RowSum { state, action, sum } => write!(
                f,
                "states[{state}].actions[{action}].kernel: row sum {sum} != 1"
            ),
            Diagnostic::MissingReward {
                state,
                action,
                next,
            } => write!(
                f,
                "states[{state}].actions[{action}].rewards: missing reward for next state {next}"
            ),
            Diagnostic::NonFiniteReward {
                state,
                action,
                next,
            } => write!(
                f,
                "states[{state}].actions[{action}].rewards: non-finite reward for next state {next}"
            ),
            Diagnostic::NoiseStd { value } => {
                write!(f, "reward_noise_std: {value} is not a nonnegative real")
            }
        }
    }
}

/// Lists every violated invariant of `mdp`. An empty list means well-formed.
pub fn validate_mdp(mdp: &Mdp) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let n = mdp.n_states;
    if mdp.states.len() != n {
        diags.push(Diagnostic::StateCount {
            declared: n,
            found: mdp.states.len(),
        });
    }
    if !(mdp.reward_noise_std >= 0.0 && mdp.reward_noise_std.is_finite()) {
        diags.push(Diagnostic::NoiseStd {
            value: mdp.reward_noise_std,
        });
    }
    for (s, st) in mdp.states.iter().enumerate() {
        if st.actions.is_empty() {
            diags.push(Diagnostic::NoActions { state: s });
        }
        for (a, act) in st.actions.iter().enumerate() {
            if act.kernel.len() != n {
                diags.push(Diagnostic::KernelLength {
                    state: s,
                    action: a,
                    len: act.kernel.len(),
                });
                continue;
            }
            if act.rewards.len() != n {
                diags.push(Diagnostic::RewardLength {
                    state: s,
                    action: a,
                    len: act.rewards.len(),
                });
            }
            for (next, &p) in act.kernel.iter().enumerate() {
                if !(p >= 0.0) {
                    diags.push(Diagnostic::NegativeProbability {
                        state: s,
                        action: a,
                        next,
                        p,
                    });
                }
            }
            let sum: f64 = act.kernel.iter().sum();
            if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                diags.push(Diagnostic::RowSum {
                    state: s,
                    action: a,
                    sum,
                });
            }
            if act.rewards.len() == n {
                for (next, &p) in act.kernel.iter().enumerate() {
                    match act.rewards[next] {
                        None if p > 0.0 => diags.push(Diagnostic::MissingReward {
                            state: s,
                            action: a,
                            next,
                        }),
                        Some(r) if !r.is_finite() => diags.push(Diagnostic::NonFiniteReward {
                            state: s,
                            action: a,
                            next,
                        }),
                        _ => {}
                    }
                }
            }
        }
    }
    diags
}

/// Tabular policy: `probs[s][a]` is the probability of action `a` at `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub probs: Vec<Vec<f64>>,
}

impl PolicyTable {
    pub fn new(probs: Vec<Vec<f64>>) -> Self {
        PolicyTable { probs }
    }

    /// Uniform over the actions available at each state.
    pub fn uniform(mdp: &Mdp) -> Self {
        let probs = mdp
            .states
            .iter()
            .map(|st| {
                let k = st.actions.len();
                vec![1.0 / k as f64; k]
            })
            .collect();
        PolicyTable { probs }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    /// Checks shape against `mdp` and that every row is a distribution.
    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        check_len("policy states", mdp.n_states, self.probs.len())?;
        for (s, row) in self.probs.iter().enumerate() {
            if row.len() != mdp.n_actions(s) {
                return Err(Error::InvalidPolicy(format!(
                    "state {s} has {} actions but policy lists {}",
                    mdp.n_actions(s),
                    row.len()
                )));
            }
            if let Some(p) = row.iter().find(|p| !(**p >= 0.0)) {
                return Err(Error::InvalidPolicy(format!(
                    "state {s} has negative probability {p}"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "state {s} probabilities sum to {sum}"
                )));
            }
        }
        Ok(())
    }

    /// Pointwise `(1 - lambda) * self + lambda * other`.
    pub fn mix(&self, other: &PolicyTable, lambda: f64) -> PolicyTable {
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (1.0 - lambda) * x + lambda * y)
                    .collect()
            })
            .collect();
        PolicyTable { probs }
    }
}

/// State-to-state chain `P(s, s') = sum_a pi(s, a) P_env((s, a), s')`.
pub fn induced_chain(mdp: &Mdp, policy: &PolicyTable) -> Result<Chain> {
    policy.validate(mdp)?;
    let n = mdp.n_states;
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        for (a, act) in mdp.states[s].actions.iter().enumerate() {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for (next, &q) in act.kernel.iter().enumerate() {
                p[(s, next)] += w * q;
            }
        }
    }
    Chain::new(p)
}

/// Mean instantaneous reward `R(s)` under `policy`.
pub fn expected_reward_vector(mdp: &Mdp, policy: &PolicyTable) -> Result<DVector<f64>> {
    policy.validate(mdp)?;
    let n = mdp.n_states;
    Ok(DVector::from_fn(n, |s, _| {
        mdp.states[s]
            .actions
            .iter()
            .enumerate()
            .map(|(a, act)| {
                let inner: f64 = act
                    .kernel
                    .iter()
                    .enumerate()
                    .filter(|(_, &q)| q > 0.0)
                    .map(|(next, &q)| q * mdp.mean_reward(s, a, next))
                    .sum();
                policy.prob(s, a) * inner
            })
            .sum()
    }))
}

/// One observed step `s --a--> s'` with realized reward `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
}

/// Draws an index from a discrete distribution given by `weights`.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    // rounding: u landed above the accumulated total
    last
}

/// Samples `a ~ pi(s, .)`, `s' ~ P_env((s, a), .)` and the realized reward.
pub fn sample_transition<R: Rng + ?Sized>(
    mdp: &Mdp,
    policy: &PolicyTable,
    s: usize,
    rng: &mut R,
) -> Result<Transition> {
    if s >= mdp.n_states {
        return Err(Error::InvalidArgument(format!(
            "state {s} out of range for {} states",
            mdp.n_states
        )));
    }
    let a = sample_index(&policy.probs[s], rng);
    let next = sample_index(&mdp.states[s].actions[a].kernel, rng);
    let mut reward = mdp.mean_reward(s, a, next);
    if mdp.reward_noise_std > 0.0 {
        let noise = Normal::new(0.0, mdp.reward_noise_std)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        reward += noise.sample(rng);
    }
    Ok(Transition {
        state: s,
        action: a,
        next_state: next,
        reward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_choice_mdp(r0: f64, r1: f64) -> Mdp {
        Mdp::new(
            vec![
                StateSpec {
                    actions: vec![
                        ActionSpec::point_mass("left", 2, 0, r0),
                        ActionSpec::point_mass("right", 2, 1, r1),
                    ],
                },
                StateSpec {
                    actions: vec![ActionSpec::dense("stay", vec![0.5, 0.5], vec![0.0, 0.0])],
                },
            ],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn single_state_chain_is_identity() {
        let mdp = Mdp::new(
            vec![StateSpec {
                actions: vec![
                    ActionSpec::point_mass("a", 1, 0, 1.0),
                    ActionSpec::point_mass("b", 1, 0, 2.0),
                ],
            }],
            0.0,
        )
        .unwrap();
        let policy = PolicyTable::new(vec![vec![0.25, 0.75]]);
        let chain = induced_chain(&mdp, &policy).unwrap();
        assert_eq!(chain.p()[(0, 0)], 1.0);
    }

    #[test]
    fn single_action_copies_kernel() {
        let act = ActionSpec::dense("x", vec![0.5, 0.5], vec![0.0, 0.0]);
        let mdp = Mdp::new(
            vec![
                StateSpec {
                    actions: vec![act.clone()],
                },
                StateSpec { actions: vec![act] },
            ],
            0.0,
        )
        .unwrap();
        let chain = induced_chain(&mdp, &PolicyTable::uniform(&mdp)).unwrap();
        assert_eq!(chain.p(), &DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn mixture_of_point_masses() {
        let mdp = two_choice_mdp(2.0, -1.0);
        let policy = PolicyTable::new(vec![vec![0.3, 0.7], vec![1.0]]);
        let chain = induced_chain(&mdp, &policy).unwrap();
        assert!((chain.p()[(0, 0)] - 0.3).abs() < 1e-15);
        assert!((chain.p()[(0, 1)] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn expected_rewards() {
        let mdp = two_choice_mdp(2.0, -1.0);
        let policy = PolicyTable::new(vec![vec![0.5, 0.5], vec![1.0]]);
        let r = expected_reward_vector(&mdp, &policy).unwrap();
        assert_eq!(r[0], 0.5);
        assert_eq!(r[1], 0.0);

        let zero = two_choice_mdp(0.0, 0.0);
        let r = expected_reward_vector(&zero, &policy).unwrap();
        assert!(r.iter().all(|&x| x == 0.0));

        let det = Mdp::new(
            vec![StateSpec {
                actions: vec![ActionSpec::point_mass("go", 1, 0, 1.0)],
            }],
            0.0,
        )
        .unwrap();
        let r = expected_reward_vector(&det, &PolicyTable::uniform(&det)).unwrap();
        assert_eq!(r[0], 1.0);
    }

    #[test]
    fn policy_shape_mismatch_is_an_error() {
        let mdp = two_choice_mdp(0.0, 0.0);
        let bad = PolicyTable::new(vec![vec![1.0]]);
        assert!(matches!(
            induced_chain(&mdp, &bad),
            Err(Error::Dimension { .. })
        ));
        let bad = PolicyTable::new(vec![vec![1.0], vec![1.0]]);
        assert!(matches!(
            induced_chain(&mdp, &bad),
            Err(Error::InvalidPolicy(_))
        ));
    }

    #[test]
    fn validate_reports_row_sum_and_missing_reward() {
        let good = two_choice_mdp(1.0, 1.0);
        assert!(validate_mdp(&good).is_empty());

        let mut bad = good.clone();
        bad.states[1].actions[0].kernel = vec![0.4, 0.5];
        let diags = validate_mdp(&bad);
        assert_eq!(diags.len(), 1);
        assert!(matches!(diags[0], Diagnostic::RowSum { state: 1, .. }));

        let mut bad = good.clone();
        bad.states[0].actions[1].rewards[1] = None;
        let diags = validate_mdp(&bad);
        assert_eq!(
            diags,
            vec![Diagnostic::MissingReward {
                state: 0,
                action: 1,
                next: 1
            }]
        );
        assert!(diags[0].to_string().contains("rewards"));
    }

    #[test]
    fn deterministic_sampling_without_noise() {
        let mdp = two_choice_mdp(2.0, -1.0);
        let policy = PolicyTable::new(vec![vec![0.0, 1.0], vec![1.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = sample_transition(&mdp, &policy, 0, &mut rng).unwrap();
            assert_eq!((t.action, t.next_state, t.reward), (1, 1, -1.0));
        }
        assert!(sample_transition(&mdp, &policy, 7, &mut rng).is_err());
    }

    #[test]
    fn sampling_frequencies_match_within_three_sigma() {
        let mdp = Mdp::new(
            vec![
                StateSpec {
                    actions: vec![
                        ActionSpec::dense("a", vec![0.2, 0.5, 0.3], vec![1.0, 2.0, 3.0]),
                        ActionSpec::dense("b", vec![0.6, 0.0, 0.4], vec![0.0, 0.0, 0.0]),
                    ],
                },
                StateSpec {
                    actions: vec![ActionSpec::point_mass("x", 3, 0, 0.0)],
                },
                StateSpec {
                    actions: vec![ActionSpec::point_mass("x", 3, 0, 0.0)],
                },
            ],
            0.0,
        )
        .unwrap();
        let policy = PolicyTable::new(vec![vec![0.35, 0.65], vec![1.0], vec![1.0]]);
        let trials = 100_000;
        let mut counts = [[0usize; 3]; 2];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..trials {
            let t = sample_transition(&mdp, &policy, 0, &mut rng).unwrap();
            counts[t.action][t.next_state] += 1;
        }
        for a in 0..2 {
            for next in 0..3 {
                let p = policy.prob(0, a) * mdp.action(0, a).kernel[next];
                let expected = p * trials as f64;
                let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
                let got = counts[a][next] as f64;
                assert!(
                    (got - expected).abs() <= 3.0 * sigma.max(1e-9),
                    "({a},{next}): {got} vs {expected} ± {sigma}"
                );
            }
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let mut mdp = two_choice_mdp(2.0, -1.0);
        mdp.reward_noise_std = 0.5;
        let policy = PolicyTable::new(vec![vec![0.4, 0.6], vec![1.0]]);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = 0;
            let mut out = Vec::new();
            for _ in 0..100 {
                let t = sample_transition(&mdp, &policy, s, &mut rng).unwrap();
                s = t.next_state;
                out.push(t);
            }
            out
        };
        assert_eq!(run(5), run(5));
    }
}
