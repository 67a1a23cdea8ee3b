use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use tdlab::approx::{grad_check, make_tabular};
use tdlab::chain::{
    centered_mu_norm_sq, check_reversibility, detailed_balance_violation, dirichlet_norm_sq,
    dirichlet_via_operator, mu_norm_sq, spectral_gap, stationarity_residual, Chain,
};
use tdlab::fixtures::{
    log_uniform_target, normal_vector, random_dense_chain, random_mdp, random_reversible_instance,
    random_symmetric_support_chain, standard_families, trial_rng, uniform_vector,
};
use tdlab::mdp::{induced_chain, PolicyTable};
use tdlab::reversible::{gibbs_target, metropolis_from_default, simple_random_walk};
use tdlab::td::{expected_td_step, mixed_norm_gradient, mixed_norm_sq, GradientMode};
use tdlab::value::{relative_value, value_function};

fn random_policy<R: Rng>(mdp: &tdlab::mdp::Mdp, rng: &mut R) -> PolicyTable {
    PolicyTable::new(
        (0..mdp.n_states)
            .map(|s| {
                let w: Vec<f64> = (0..mdp.n_actions(s))
                    .map(|_| rng.random_range(0.0..1.0))
                    .collect();
                let total: f64 = w.iter().sum();
                let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
                let fix: f64 = p.iter().sum::<f64>() - 1.0;
                p[0] -= fix;
                p
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn induced_rows_are_stochastic_and_linear_in_policy(seed in any::<u64>(), n in 1usize..9, lambda in 0.0f64..1.0) {
        let mut rng = trial_rng(seed, 0);
        let mdp = random_mdp(n, 3, &mut rng);
        let a = random_policy(&mdp, &mut rng);
        let b = random_policy(&mdp, &mut rng);
        let pa = induced_chain(&mdp, &a).unwrap();
        let pb = induced_chain(&mdp, &b).unwrap();
        for row in pa.p().row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
        }
        let mixed = induced_chain(&mdp, &a.mix(&b, lambda)).unwrap();
        let want = pa.p() * (1.0 - lambda) + pb.p() * lambda;
        prop_assert!((mixed.p() - want).amax() <= 1e-12);
    }

    #[test]
    fn metropolis_chains_are_reversible_with_target_law(seed in any::<u64>(), n in 1usize..13) {
        let mut rng = trial_rng(seed, 1);
        let inst = random_reversible_instance(n, &mut rng);
        let want = inst.target.normalized();
        prop_assert!(detailed_balance_violation(inst.chain.p(), &want) <= 1e-12);
        let solved = Chain::new(inst.chain.p().clone()).unwrap();
        prop_assert!((solved.mu().unwrap() - &want).amax() <= 1e-12);
        for row in inst.chain.p().row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn metropolis_from_default_is_reversible(seed in any::<u64>(), n in 2usize..10) {
        let mut rng = trial_rng(seed, 2);
        let p0 = random_symmetric_support_chain(n, &mut rng);
        let target = log_uniform_target(n, 0.1, 10.0, &mut rng);
        let chain = metropolis_from_default(&p0, &target).unwrap();
        prop_assert!(detailed_balance_violation(chain.p(), &target.normalized()) <= 1e-12);
        prop_assert!(stationarity_residual(chain.p(), &target.normalized()) <= 1e-12);
    }

    #[test]
    fn gibbs_targets_of_uniform_potentials_are_uniform(c in -50.0f64..50.0, n in 1usize..8, beta in 0.0f64..3.0) {
        let t = gibbs_target(&DVector::from_element(n, c), beta).unwrap();
        let u = t.normalized();
        prop_assert!(u.iter().all(|&x| (x - 1.0 / n as f64).abs() <= 1e-15));
    }

    #[test]
    fn dirichlet_operator_form_needs_only_stationarity(seed in any::<u64>(), n in 2usize..10, shift in -10.0f64..10.0) {
        let mut rng = trial_rng(seed, 3);
        let chain = random_dense_chain(n, &mut rng);
        let f = normal_vector(n, 1.0, &mut rng);
        let dir = dirichlet_norm_sq(&f, &chain).unwrap();
        let op = dirichlet_via_operator(&f, &chain).unwrap();
        prop_assert!((dir - op).abs() <= 1e-12 * (1.0 + f.norm_squared()));
        let shifted = dirichlet_norm_sq(&f.add_scalar(shift), &chain).unwrap();
        prop_assert!((dir - shifted).abs() <= 1e-12);
    }

    #[test]
    fn norm_equivalence_on_reversible_chains(seed in any::<u64>(), n in 1usize..13) {
        let mut rng = trial_rng(seed, 4);
        let inst = random_reversible_instance(n, &mut rng);
        let mu = inst.chain.mu().unwrap();
        let spec = spectral_gap(&inst.chain).unwrap();
        let f = normal_vector(n, 2.0, &mut rng);
        let dir = dirichlet_norm_sq(&f, &inst.chain).unwrap();
        let var = centered_mu_norm_sq(&f, mu).unwrap();
        prop_assert!(spec.beta * var <= dir + 1e-10);
        prop_assert!(var <= mu_norm_sq(&f, mu).unwrap() + 1e-12);
        prop_assert!(dir <= (1.0 - spec.lambda_min) * var + 1e-10);
        if spec.psd {
            prop_assert!(dir <= var + 1e-10);
        }
    }

    #[test]
    fn exact_solvers_have_small_residuals(seed in any::<u64>(), n in 1usize..13) {
        let mut rng = trial_rng(seed, 5);
        let chain = if seed % 2 == 0 {
            random_reversible_instance(n, &mut rng).chain
        } else {
            random_dense_chain(n, &mut rng)
        };
        let r = normal_vector(n, 1.0, &mut rng);
        for gamma in [0.0, 0.3, 0.9, 0.99] {
            let v = value_function(&chain, &r, gamma).unwrap();
            let res = &r + chain.p() * &v.values * gamma - &v.values;
            prop_assert!(res.amax() <= 1e-10);
        }
        let u = relative_value(&chain, &r).unwrap();
        let mu = chain.mu().unwrap();
        let rho = mu.dot(&r);
        let res = r.add_scalar(-rho) + chain.p() * &u.values - &u.values;
        prop_assert!(res.amax() <= 1e-10);
        prop_assert!(mu.dot(&u.values).abs() <= 1e-10);
    }

    #[test]
    fn bellman_gap_is_the_propagated_error(seed in any::<u64>(), n in 2usize..10, gamma in 0.0f64..0.99) {
        let mut rng = trial_rng(seed, 6);
        let chain = random_dense_chain(n, &mut rng);
        let r = normal_vector(n, 1.0, &mut rng);
        let v = value_function(&chain, &r, gamma).unwrap().values;
        let v_theta = normal_vector(n, 1.0, &mut rng);
        let f = &v_theta - &v;
        let lhs = &r + chain.p() * &v_theta * gamma - &v_theta;
        let rhs = chain.p() * &f * gamma - &f;
        prop_assert!((lhs - rhs).amax() <= 1e-12 * (1.0 + v.amax()));
    }

    #[test]
    fn every_family_passes_the_gradient_check(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = trial_rng(seed, 7);
        for a in standard_families(n, &mut rng) {
            let theta = uniform_vector(a.family.n_params(), -1.0, 1.0, &mut rng);
            let s = rng.random_range(0..n);
            prop_assert!(grad_check(&a.family, &theta, s, 1e-5).unwrap().max_deviation <= 1e-6);
        }
    }

    #[test]
    fn analytic_and_numeric_mixed_norm_gradients_agree(seed in any::<u64>(), n in 2usize..10, gamma in 0.0f64..=1.0) {
        let mut rng = trial_rng(seed, 8);
        let chain = random_dense_chain(n, &mut rng);
        let r = normal_vector(n, 1.0, &mut rng);
        let target = if gamma < 1.0 { value_function(&chain, &r, gamma).unwrap() } else { relative_value(&chain, &r).unwrap() };
        let a = &standard_families(n, &mut rng)[1];
        let theta = uniform_vector(a.family.n_params(), -1.0, 1.0, &mut rng);
        let g_an = mixed_norm_gradient(&a.family, &theta, &chain, &target, gamma, GradientMode::AnalyticLinear).unwrap();
        let g_fd = mixed_norm_gradient(&a.family, &theta, &chain, &target, gamma, GradientMode::FiniteDifference).unwrap();
        prop_assert!((&g_an - &g_fd).amax() <= 1e-6 * (1.0 + g_an.amax()));
    }

    #[test]
    fn dirichlet_gradient_is_orthogonal_to_constants(seed in any::<u64>(), n in 2usize..10) {
        let mut rng = trial_rng(seed, 9);
        let chain = random_dense_chain(n, &mut rng);
        let r = normal_vector(n, 1.0, &mut rng);
        let u = relative_value(&chain, &r).unwrap();
        let tab = make_tabular(n).unwrap();
        let theta = normal_vector(n, 1.0, &mut rng);
        let g = mixed_norm_gradient(&tab.family, &theta, &chain, &u, 1.0, GradientMode::AnalyticLinear).unwrap();
        prop_assert!(g.sum().abs() <= 1e-12 * (1.0 + g.amax()));
        let shifted = mixed_norm_sq(&tab.family, &theta.add_scalar(3.0), &chain, &u, 1.0).unwrap();
        let base = mixed_norm_sq(&tab.family, &theta, &chain, &u, 1.0).unwrap();
        prop_assert!((shifted.mixed - base.mixed).abs() <= 1e-12 * (1.0 + base.mixed));
    }

    #[test]
    fn step_size_scales_the_expected_update_exactly(seed in any::<u64>(), n in 2usize..8, alpha in 0.001f64..1.0) {
        let mut rng = trial_rng(seed, 10);
        let chain = random_dense_chain(n, &mut rng);
        let r = normal_vector(n, 1.0, &mut rng);
        let a = &standard_families(n, &mut rng)[2];
        let theta = uniform_vector(a.family.n_params(), -1.0, 1.0, &mut rng);
        let step = expected_td_step(&a.family, &theta, &chain, &r, 0.5).unwrap();
        prop_assert_eq!(&step * (2.0 * alpha), (&step * alpha) * 2.0);
    }
}

#[test]
fn simple_random_walk_is_degree_stationary() {
    let mut rng = trial_rng(3, 0);
    for n in 2..10 {
        let g = tdlab::fixtures::random_connected_graph(n, n, &mut rng);
        let c = simple_random_walk(&g).unwrap();
        let total: usize = (0..n).map(|s| g.deg(s)).sum();
        let want = DVector::from_fn(n, |s, _| g.deg(s) as f64 / total as f64);
        assert!((c.mu().unwrap() - want).amax() <= 1e-12);
        assert!(check_reversibility(&c, 1e-12).unwrap().pass);
    }
}

#[test]
fn flip_chain_breaks_the_upper_comparison() {
    let c = Chain::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
    let f = DVector::from_vec(vec![1.0, -1.0]);
    let spec = spectral_gap(&c).unwrap();
    assert!(!spec.psd);
    let dir = dirichlet_norm_sq(&f, &c).unwrap();
    let var = centered_mu_norm_sq(&f, c.mu().unwrap()).unwrap();
    assert_eq!((dir, var), (2.0, 1.0));
}

#[test]
fn hundred_gradient_checks_per_family() {
    let mut rng = trial_rng(99, 0);
    let families = standard_families(7, &mut rng);
    for a in &families {
        for _ in 0..100 {
            let theta = uniform_vector(a.family.n_params(), -1.0, 1.0, &mut rng);
            let s = rng.random_range(0..7);
            let chk = grad_check(&a.family, &theta, s, 1e-5).unwrap();
            assert!(chk.max_deviation <= 1e-6, "{} {chk:?}", a.family.name());
        }
    }
}
