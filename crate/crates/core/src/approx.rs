//! Parametric value families `V_θ(s)` with analytic parameter gradients.
//!
//! Parameters of the two-layer family are flattened as
//! `θ = (W row-major [width × input], b [width], w [width], c)`, giving
//! `V_θ(s) = wᵀ tanh(W x_s + b) + c`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ValueFamily {
    Tabular {
        n_states: usize,
    },
    Linear {
        features: DMatrix<f64>,
    },
    TwoLayer {
        embedding: DMatrix<f64>,
        width: usize,
    },
}

/// A value family together with its current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Approximator {
    pub family: ValueFamily,
    pub theta: DVector<f64>,
}

pub fn make_tabular(n_states: usize) -> Result<Approximator> {
    if n_states == 0 {
        return Err(Error::InvalidArgument(
            "tabular family needs at least one state".into(),
        ));
    }
    Ok(Approximator {
        family: ValueFamily::Tabular { n_states },
        theta: DVector::zeros(n_states),
    })
}

pub fn make_linear(features: DMatrix<f64>) -> Result<Approximator> {
    if features.nrows() == 0 || features.ncols() == 0 {
        return Err(Error::InvalidArgument("feature matrix is empty".into()));
    }
    let k = features.ncols();
    Ok(Approximator {
        family: ValueFamily::Linear { features },
        theta: DVector::zeros(k),
    })
}

/// Two-layer tanh network on per-state input rows `embedding`, weights drawn
/// uniformly from `(-0.5, 0.5)` by a generator seeded with `init_seed`.
pub fn make_two_layer(
    embedding: DMatrix<f64>,
    width: usize,
    init_seed: u64,
) -> Result<Approximator> {
    if width < 1 {
        return Err(Error::InvalidArgument(
            "two-layer width must be at least 1".into(),
        ));
    }
    if embedding.nrows() == 0 || embedding.ncols() == 0 {
        return Err(Error::InvalidArgument("embedding is empty".into()));
    }
    let family = ValueFamily::TwoLayer { embedding, width };
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let theta = DVector::from_fn(family.n_params(), |_, _| rng.random_range(-0.5..0.5));
    Ok(Approximator { family, theta })
}

/// Two-layer family with one-hot state inputs.
pub fn make_two_layer_one_hot(
    n_states: usize,
    width: usize,
    init_seed: u64,
) -> Result<Approximator> {
    make_two_layer(DMatrix::identity(n_states, n_states), width, init_seed)
}

/// Checks that the family covers exactly `n_states` states.
pub fn expect_states(family: &ValueFamily, n_states: usize) -> Result<()> {
    if family.n_states() != n_states {
        return Err(Error::Dimension {
            context: "approximator states",
            expected: n_states,
            found: family.n_states(),
        });
    }
    Ok(())
}

impl ValueFamily {
    pub fn n_states(&self) -> usize {
        match self {
            ValueFamily::Tabular { n_states } => *n_states,
            ValueFamily::Linear { features } => features.nrows(),
            ValueFamily::TwoLayer { embedding, .. } => embedding.nrows(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            ValueFamily::Tabular { n_states } => *n_states,
            ValueFamily::Linear { features } => features.ncols(),
            ValueFamily::TwoLayer { embedding, width } => width * embedding.ncols() + 2 * width + 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ValueFamily::Tabular { .. } => "tabular",
            ValueFamily::Linear { .. } => "linear",
            ValueFamily::TwoLayer { .. } => "two_layer",
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, ValueFamily::TwoLayer { .. })
    }

    /// Feature matrix `Φ` with `V_θ = Φθ`, for the linear-in-θ families.
    pub fn design_matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            ValueFamily::Tabular { n_states } => Some(DMatrix::identity(*n_states, *n_states)),
            ValueFamily::Linear { features } => Some(features.clone()),
            ValueFamily::TwoLayer { .. } => None,
        }
    }

    pub fn value(&self, theta: &DVector<f64>, s: usize) -> f64 {
        match self {
            ValueFamily::Tabular { .. } => theta[s],
            ValueFamily::Linear { features } => features.row(s).transpose().dot(theta),
            ValueFamily::TwoLayer { embedding, width } => {
                let m = embedding.ncols();
                let h = *width;
                let (b0, w0, c) = (h * m, h * m + h, h * m + 2 * h);
                let mut out = theta[c];
                for j in 0..h {
                    let mut pre = theta[b0 + j];
                    for k in 0..m {
                        pre += theta[j * m + k] * embedding[(s, k)];
                    }
                    out += theta[w0 + j] * pre.tanh();
                }
                out
            }
        }
    }

    pub fn grad(&self, theta: &DVector<f64>, s: usize) -> DVector<f64> {
        match self {
            ValueFamily::Tabular { n_states } => {
                let mut g = DVector::zeros(*n_states);
                g[s] = 1.0;
                g
            }
            ValueFamily::Linear { features } => features.row(s).transpose(),
            ValueFamily::TwoLayer { embedding, width } => {
                let m = embedding.ncols();
                let h = *width;
                let (b0, w0, c) = (h * m, h * m + h, h * m + 2 * h);
                let mut g = DVector::zeros(self.n_params());
                for j in 0..h {
                    let mut pre = theta[b0 + j];
                    for k in 0..m {
                        pre += theta[j * m + k] * embedding[(s, k)];
                    }
                    let t = pre.tanh();
                    let back = theta[w0 + j] * (1.0 - t * t);
                    for k in 0..m {
                        g[j * m + k] = back * embedding[(s, k)];
                    }
                    g[b0 + j] = back;
                    g[w0 + j] = t;
                }
                g[c] = 1.0;
                g
            }
        }
    }

    /// `V_θ` on every state.
    pub fn values(&self, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            ValueFamily::Tabular { .. } => theta.clone(),
            ValueFamily::Linear { features } => features * theta,
            ValueFamily::TwoLayer { .. } => {
                DVector::from_fn(self.n_states(), |s, _| self.value(theta, s))
            }
        }
    }

    /// Jacobian with rows `∂_θ V_θ(s)`.
    pub fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        match self {
            ValueFamily::Tabular { n_states } => DMatrix::identity(*n_states, *n_states),
            ValueFamily::Linear { features } => features.clone(),
            ValueFamily::TwoLayer { .. } => {
                let n = self.n_states();
                let mut j = DMatrix::zeros(n, self.n_params());
                for s in 0..n {
                    j.row_mut(s).copy_from(&self.grad(theta, s).transpose());
                }
                j
            }
        }
    }
}

impl Approximator {
    pub fn value(&self, s: usize) -> f64 {
        self.family.value(&self.theta, s)
    }

    pub fn grad(&self, s: usize) -> DVector<f64> {
        self.family.grad(&self.theta, s)
    }

    pub fn values(&self) -> DVector<f64> {
        self.family.values(&self.theta)
    }
}

/// Central-difference step `1e-5·(1 + |θ_i|)` used throughout.
pub fn fd_step(theta_i: f64) -> f64 {
    1e-5 * (1.0 + theta_i.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheck {
    /// Largest `|g_i − fd_i| / (1 + |g_i|)`.
    pub max_deviation: f64,
    pub worst_param: usize,
}

/// Compares the analytic gradient at `state` with central differences of
/// step `h·(1 + |θ_i|)`.
pub fn grad_check(
    family: &ValueFamily,
    theta: &DVector<f64>,
    state: usize,
    h: f64,
) -> Result<GradCheck> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    let g = family.grad(theta, state);
    let mut worst = GradCheck {
        max_deviation: 0.0,
        worst_param: 0,
    };
    let mut probe = theta.clone();
    for i in 0..theta.len() {
        let step = h * (1.0 + theta[i].abs());
        probe[i] = theta[i] + step;
        let up = family.value(&probe, state);
        probe[i] = theta[i] - step;
        let down = family.value(&probe, state);
        probe[i] = theta[i];
        let fd = (up - down) / (2.0 * step);
        let dev = (g[i] - fd).abs() / (1.0 + g[i].abs());
        if dev > worst.max_deviation {
            worst = GradCheck {
                max_deviation: dev,
                worst_param: i,
            };
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabular_value_and_grad() {
        let mut a = make_tabular(3).unwrap();
        a.theta = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(a.value(1), 2.0);
        assert_eq!(a.grad(1), DVector::from_vec(vec![0.0, 1.0, 0.0]));
        // a dyadic step keeps θ ± h exact, so the quotient is exact too
        let h = 2f64.powi(-17);
        assert!(grad_check(&a.family, &a.theta, 2, h).unwrap().max_deviation <= 1e-12);
    }

    #[test]
    fn identity_features_reduce_to_tabular() {
        let mut lin = make_linear(DMatrix::identity(3, 3)).unwrap();
        let mut tab = make_tabular(3).unwrap();
        let theta = DVector::from_vec(vec![-1.0, 0.5, 4.0]);
        lin.theta = theta.clone();
        tab.theta = theta;
        for s in 0..3 {
            assert_eq!(lin.value(s), tab.value(s));
            assert_eq!(lin.grad(s), tab.grad(s));
        }
        assert!(
            grad_check(&lin.family, &lin.theta, 0, 1e-5)
                .unwrap()
                .max_deviation
                <= 1e-12
        );
    }

    #[test]
    fn two_layer_with_zero_output_weights_is_constant() {
        let mut a = make_two_layer_one_hot(4, 3, 9).unwrap();
        let (m, h) = (4, 3);
        for j in 0..h {
            a.theta[h * m + h + j] = 0.0;
        }
        a.theta[h * m + 2 * h] = 5.0;
        for s in 0..4 {
            assert_eq!(a.value(s), 5.0);
            let g = a.grad(s);
            assert!(g.rows(0, h * m + h).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn two_layer_init_is_seeded_and_bounded() {
        let a = make_two_layer_one_hot(5, 4, 1).unwrap();
        let b = make_two_layer_one_hot(5, 4, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.theta.len(), 4 * 5 + 2 * 4 + 1);
        assert!(a.theta.iter().all(|x| (-0.5..0.5).contains(x)));
    }

    #[test]
    fn constructor_errors() {
        assert!(make_two_layer(DMatrix::identity(3, 3), 0, 0).is_err());
        assert!(make_tabular(0).is_err());
        assert!(grad_check(
            &ValueFamily::Tabular { n_states: 2 },
            &DVector::zeros(2),
            0,
            0.0
        )
        .is_err());
    }

    #[test]
    fn two_layer_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let embedding = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let a = make_two_layer(embedding, 5, 7).unwrap();
        for _ in 0..20 {
            let theta = DVector::from_fn(a.family.n_params(), |_, _| rng.random_range(-2.0..2.0));
            for s in 0..6 {
                let chk = grad_check(&a.family, &theta, s, 1e-5).unwrap();
                assert!(chk.max_deviation <= 1e-6, "{chk:?}");
            }
        }
    }

    #[test]
    fn jacobian_rows_are_gradients() {
        let a = make_two_layer_one_hot(3, 2, 0).unwrap();
        let j = a.family.jacobian(&a.theta);
        for s in 0..3 {
            assert_eq!(j.row(s).transpose(), a.grad(s));
        }
    }
}
