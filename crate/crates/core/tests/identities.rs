use nalgebra::{DMatrix, DVector};

use tdlab::approx::{make_tabular, Approximator};
use tdlab::chain::Chain;
use tdlab::fixtures::{
    directed_cycle, normal_vector, random_dense_chain, random_reversible_instance,
    standard_families, trial_rng, uniform_vector,
};
use tdlab::td::{
    expected_td_step, mixed_norm_gradient, mixed_norm_sq, nonreversible_correction, theorem1_gap,
    theorem2_gap, GradientMode,
};
use tdlab::value::{
    advantage_error_identity, relative_value, value_function, ValueKind, ValueVector,
};

fn with_theta(a: &Approximator, theta: DVector<f64>) -> Approximator {
    Approximator {
        family: a.family.clone(),
        theta,
    }
}

#[test]
fn discounted_identity_on_reversible_chains() {
    for t in 0..5 {
        let mut rng = trial_rng(21, t);
        let inst = random_reversible_instance(3 + 2 * t as usize, &mut rng);
        let r = normal_vector(inst.chain.n(), 1.0, &mut rng);
        for a in standard_families(inst.chain.n(), &mut rng) {
            for gamma in [0.0, 0.3, 0.9, 0.99] {
                for _ in 0..3 {
                    let theta = uniform_vector(a.family.n_params(), -1.0, 1.0, &mut rng);
                    let g = theorem1_gap(&a.family, &theta, &inst.chain, &r, gamma).unwrap();
                    assert!(
                        g.gap_inf_norm <= g.tolerance(),
                        "{} γ={gamma}: {g:?}",
                        a.family.name()
                    );
                }
            }
        }
    }
}

#[test]
fn centered_identity_on_reversible_chains() {
    for t in 0..5 {
        let mut rng = trial_rng(22, t);
        let inst = random_reversible_instance(2 + 2 * t as usize, &mut rng);
        let r = normal_vector(inst.chain.n(), 1.0, &mut rng);
        for a in standard_families(inst.chain.n(), &mut rng) {
            let theta = uniform_vector(a.family.n_params(), -1.0, 1.0, &mut rng);
            let g = theorem2_gap(&a.family, &theta, &inst.chain, &r).unwrap();
            assert!(
                g.gap_inf_norm <= g.tolerance(),
                "{}: {g:?}",
                a.family.name()
            );
        }
    }
}

#[test]
fn directed_cycle_breaks_the_discounted_identity() {
    let c = directed_cycle(3);
    let tab = make_tabular(3).unwrap();
    let theta = DVector::from_vec(vec![0.0, 1.0, 2.0]);
    let g = theorem1_gap(&tab.family, &theta, &c, &DVector::zeros(3), 0.9).unwrap();
    // hand value: (γ/6)·max|θ(s+1) − θ(s−1)| = 0.15·2
    assert!((g.gap_inf_norm - 0.3).abs() < 1e-8, "{g:?}");
    let r = normal_vector(3, 1.0, &mut trial_rng(5, 0));
    let g2 = theorem2_gap(&tab.family, &theta, &c, &r).unwrap();
    assert!(g2.gap_inf_norm > 1e-3, "{g2:?}");
}

#[test]
fn exact_representation_zeroes_both_sides() {
    let mut rng = trial_rng(23, 0);
    let inst = random_reversible_instance(6, &mut rng);
    let r = normal_vector(6, 1.0, &mut rng);
    let tab = make_tabular(6).unwrap();
    let v = value_function(&inst.chain, &r, 0.9).unwrap();
    let g = theorem1_gap(&tab.family, &v.values, &inst.chain, &r, 0.9).unwrap();
    assert!(g.expected_step.amax() <= 1e-12);
    assert!(g.neg_half_grad.amax() <= 1e-12);
    assert!(g.gap_inf_norm <= 1e-12);

    let u = relative_value(&inst.chain, &r).unwrap();
    let shifted = u.values.add_scalar(2.5);
    let g = theorem2_gap(&tab.family, &shifted, &inst.chain, &r).unwrap();
    assert!(g.expected_step.amax() <= 1e-12, "{g:?}");
    assert!(g.neg_half_grad.amax() <= 1e-9, "{g:?}");
}

#[test]
fn tabular_expected_step_is_weighted_bellman_gap() {
    let mut rng = trial_rng(24, 0);
    let c = random_dense_chain(5, &mut rng);
    let r = normal_vector(5, 1.0, &mut rng);
    let theta = normal_vector(5, 1.0, &mut rng);
    let step = expected_td_step(&make_tabular(5).unwrap().family, &theta, &c, &r, 0.7).unwrap();
    let mu = c.mu().unwrap();
    let gap = &r + c.p() * &theta * 0.7 - &theta;
    assert!((step - gap.component_mul(mu)).amax() <= 1e-14);
}

/// `½ Σ μ(s)P(s,s') (f(s') − f(s)) (∇V_θ(s') + ∇V_θ(s))` with `f = V_θ − U`:
/// the undiscounted gap between the expected step and `−½∂‖f‖²_Dir`,
/// derived directly from the definitions.
fn direct_gap(a: &Approximator, chain: &Chain, u: &DVector<f64>) -> DVector<f64> {
    let mu = chain.mu().unwrap();
    let p = chain.p();
    let f = a.values() - u;
    let mut out = DVector::zeros(a.family.n_params());
    for s in 0..chain.n() {
        for t in 0..chain.n() {
            let w = 0.5 * mu[s] * p[(s, t)] * (f[t] - f[s]);
            out += (a.grad(t) + a.grad(s)) * w;
        }
    }
    out
}

#[test]
fn non_reversible_gap_matches_direct_derivation() {
    for t in 0..4 {
        let mut rng = trial_rng(25, t);
        let c = random_dense_chain(5, &mut rng);
        let r = normal_vector(5, 1.0, &mut rng);
        let u = relative_value(&c, &r).unwrap();
        for a in standard_families(5, &mut rng) {
            let a = with_theta(&a, uniform_vector(a.family.n_params(), -1.0, 1.0, &mut rng));
            let g = theorem2_gap(&a.family, &a.theta, &c, &r).unwrap();
            let diff = &g.expected_step - &g.neg_half_grad;
            let want = direct_gap(&a, &c, &u.values);
            assert!((diff - want).amax() <= 1e-6, "{}", a.family.name());
        }
    }
}

#[test]
fn correction_term_vanishes_for_constant_errors() {
    let mut rng = trial_rng(26, 0);
    let c = random_dense_chain(4, &mut rng);
    let v = ValueVector::new(normal_vector(4, 1.0, &mut rng), ValueKind::Discounted(0.5));
    for a in standard_families(4, &mut rng) {
        let theta = uniform_vector(a.family.n_params(), -1.0, 1.0, &mut rng);
        let vt = a.family.values(&theta);
        let exact = ValueVector::new(vt.clone(), v.kind);
        assert!(
            nonreversible_correction(&a.family, &theta, &c, &exact)
                .unwrap()
                .amax()
                <= 1e-12
        );
        let offset = ValueVector::new(vt.add_scalar(-1.75), v.kind);
        assert!(
            nonreversible_correction(&a.family, &theta, &c, &offset)
                .unwrap()
                .amax()
                <= 1e-12
        );
    }
    let inst = random_reversible_instance(5, &mut rng);
    let tab = make_tabular(5).unwrap();
    let theta = normal_vector(5, 1.0, &mut rng);
    let v = ValueVector::new(normal_vector(5, 1.0, &mut rng), ValueKind::Discounted(0.9));
    let corr = nonreversible_correction(&tab.family, &theta, &inst.chain, &v).unwrap();
    assert!(corr.iter().all(|x| x.is_finite()));
}

#[test]
fn advantage_identities_are_algebraic() {
    for t in 0..10 {
        let mut rng = trial_rng(27, t);
        let n = 2 + t as usize;
        let c = if t % 2 == 0 {
            random_reversible_instance(n, &mut rng).chain
        } else {
            random_dense_chain(n, &mut rng)
        };
        let edge = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let r = c.p().component_mul(&edge).column_sum();
        let u = relative_value(&c, &r).unwrap();
        let u_hat = ValueVector::new(
            &u.values + normal_vector(n, 1.0, &mut rng),
            ValueKind::Relative,
        );
        let id = advantage_error_identity(&c, &u, &u_hat, &edge, 1.0).unwrap();
        assert!((id.lhs - id.rhs_gamma1).abs() <= 1e-12 * (1.0 + id.lhs));
        for gamma in [0.3, 0.9] {
            let v = value_function(&c, &r, gamma).unwrap();
            let v_hat = ValueVector::new(&v.values + normal_vector(n, 1.0, &mut rng), v.kind);
            let id = advantage_error_identity(&c, &v, &v_hat, &edge, gamma).unwrap();
            assert!((id.lhs - id.rhs_gamma_lt1).abs() <= 1e-12 * (1.0 + id.lhs));
            if gamma == 0.9 {
                let tab = make_tabular(n).unwrap();
                let mixed = mixed_norm_sq(&tab.family, &v_hat.values, &c, &v, gamma)
                    .unwrap()
                    .mixed;
                assert!((id.lhs - mixed).abs() > 1e-6);
            }
        }
    }
}

#[test]
fn value_solvers_agree_with_independent_oracles() {
    for t in 0..6 {
        let mut rng = trial_rng(28, t);
        let n = 2 + t as usize;
        let c = random_dense_chain(n, &mut rng);
        let r = normal_vector(n, 1.0, &mut rng);
        // Neumann series Σ γ^k P^k R
        let gamma = 0.6;
        let mut term = r.clone();
        let mut series = DVector::zeros(n);
        for _ in 0..200 {
            series += &term;
            term = c.p() * term * gamma;
        }
        let v = value_function(&c, &r, gamma).unwrap();
        assert!((&v.values - series).amax() <= 1e-10);

        // fundamental matrix Z = (I − P + 1μᵀ)^{-1}
        let mu = c.mu().unwrap();
        let ones_mu = DMatrix::from_fn(n, n, |_, j| mu[j]);
        let z = (DMatrix::identity(n, n) - c.p() + ones_mu)
            .try_inverse()
            .unwrap();
        let rho = mu.dot(&r);
        let mut want = z * r.add_scalar(-rho);
        let m = mu.dot(&want);
        want.add_scalar_mut(-m);
        let u = relative_value(&c, &r).unwrap();
        assert!((&u.values - want).amax() <= 1e-10);
    }
}

#[test]
fn analytic_gradient_vanishes_at_the_minimizer() {
    let mut rng = trial_rng(29, 0);
    let inst = random_reversible_instance(5, &mut rng);
    let r = normal_vector(5, 1.0, &mut rng);
    let v = value_function(&inst.chain, &r, 0.9).unwrap();
    let tab = make_tabular(5).unwrap();
    let g = mixed_norm_gradient(
        &tab.family,
        &v.values,
        &inst.chain,
        &v,
        0.9,
        GradientMode::AnalyticLinear,
    )
    .unwrap();
    assert!(g.amax() <= 1e-12);
    let two_layer = &standard_families(5, &mut rng)[2];
    assert!(mixed_norm_gradient(
        &two_layer.family,
        &two_layer.theta,
        &inst.chain,
        &v,
        0.9,
        GradientMode::AnalyticLinear
    )
    .is_err());
}
