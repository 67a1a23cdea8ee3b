//! Randomized verification suites. Each suite draws seeded instances,
//! evaluates both sides of an identity or inequality, and collects one
//! [`CheckRecord`] per comparison into a [`VerificationReport`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::approx::Approximator;
use crate::chain::{
    centered_mu_norm_sq, detailed_balance_violation, dirichlet_norm_sq, dirichlet_via_operator,
    mu_norm_sq, spectral_gap, stationary_distribution, Chain,
};
use crate::error::{Error, Result};
use crate::fixtures::{
    log_uniform_target, normal_vector, random_dense_chain, random_mdp, random_reversible_instance,
    random_symmetric_support_chain, standard_families, trial_rng, uniform_vector,
};
use crate::formats::{content_hash, ChainFile, MdpFile};
use crate::grid::{gaussian_bump, grid_taylor_check, GridSpec};
use crate::mdp::Mdp;
use crate::policy_grad::{
    approx_policy_gradient, average_reward_fd_gradient, bias_bound_check, policy_gradient_exact,
    policy_relative_value, Baseline, SoftmaxFamily,
};
use crate::reversible::{
    metropolis_chain, metropolis_from_default, navigation_mdp_from_chain, Graph, TargetWeights,
};
use crate::td::{theorem1_gap, theorem2_gap, IdentityGap};
use crate::value::{
    advantage_error_identity, relative_value, value_function, ValueKind, ValueVector,
};

/// Discount factors exercised by the discounted identity.
pub const THEOREM1_GAMMAS: [f64; 4] = [0.0, 0.3, 0.9, 0.99];
/// Parameter draws per (instance, family, γ); the worst one is reported.
pub const THETA_DRAWS: usize = 10;
/// Largest chain drawn by the randomized suites.
pub const MAX_STATES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Theorem1,
    Theorem2,
    Advantage,
    PgBias,
    Metropolis,
    Grid,
    Norms,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 8] = [
        "theorem1",
        "theorem2",
        "advantage",
        "pg-bias",
        "metropolis",
        "grid",
        "norms",
        "all",
    ];

    fn parts(self) -> Vec<Suite> {
        use Suite::*;
        match self {
            All => vec![
                Theorem1, Theorem2, Advantage, PgBias, Metropolis, Grid, Norms,
            ],
            s => vec![s],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = match self {
            Suite::Theorem1 => 0,
            Suite::Theorem2 => 1,
            Suite::Advantage => 2,
            Suite::PgBias => 3,
            Suite::Metropolis => 4,
            Suite::Grid => 5,
            Suite::Norms => 6,
            Suite::All => 7,
        };
        f.write_str(Suite::NAMES[i])
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Suite::*;
        Ok(match s {
            "theorem1" => Theorem1,
            "theorem2" => Theorem2,
            "advantage" => Advantage,
            "pg-bias" => PgBias,
            "metropolis" => Metropolis,
            "grid" => Grid,
            "norms" => Norms,
            "all" => All,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown suite {other:?}; expected one of {}",
                    Suite::NAMES.join(", ")
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub trials: usize,
    pub seed: u64,
    /// Replaces every check's default tolerance when set.
    pub tol: Option<f64>,
}

/// One comparison. For equalities `gap = |lhs − rhs|`; for upper bounds
/// `lhs ≤ rhs` it is `lhs − rhs`. Either way the check passes iff
/// `gap ≤ tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check_id: String,
    pub anchor: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn equality(
        check_id: String,
        anchor: &'static str,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
    ) -> Self {
        let gap = (lhs - rhs).abs();
        CheckRecord {
            check_id,
            anchor,
            lhs,
            rhs,
            gap,
            tolerance,
            pass: gap <= tolerance,
        }
    }

    pub fn at_most(
        check_id: String,
        anchor: &'static str,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
    ) -> Self {
        let gap = lhs - rhs;
        CheckRecord {
            check_id,
            anchor,
            lhs,
            rhs,
            gap,
            tolerance,
            pass: gap <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceDescriptor {
    pub id: String,
    pub kind: &'static str,
    pub n_states: usize,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub seed: u64,
    pub trials: usize,
    pub tolerance_override: Option<f64>,
    pub instances: Vec<InstanceDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub suite: String,
    pub pass: bool,
    pub n_checks: usize,
    pub n_failed: usize,
    pub checks: Vec<CheckRecord>,
    pub environment: Environment,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

struct Collector {
    cfg: VerifyConfig,
    checks: Vec<CheckRecord>,
    instances: Vec<InstanceDescriptor>,
}

impl Collector {
    fn tol(&self, default: f64) -> f64 {
        self.cfg.tol.unwrap_or(default)
    }

    fn push(&mut self, c: CheckRecord) {
        self.checks.push(c);
    }

    fn chain_instance(&mut self, id: String, kind: &'static str, chain: &Chain) -> Result<()> {
        let hash = content_hash(&ChainFile::from_chain(chain)?);
        self.instances.push(InstanceDescriptor {
            id,
            kind,
            n_states: chain.n(),
            hash,
        });
        Ok(())
    }

    fn mdp_instance(&mut self, id: String, kind: &'static str, mdp: &Mdp) {
        self.instances.push(InstanceDescriptor {
            id,
            kind,
            n_states: mdp.n_states,
            hash: content_hash(&MdpFile::from_mdp(mdp)),
        });
    }
}

/// Runs `suite` (every part of it, for `all`) and assembles the report in
/// trial order.
pub fn run_suite(suite: Suite, cfg: &VerifyConfig) -> Result<VerificationReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    if let Some(t) = cfg.tol {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tolerance {t} must be a nonnegative real"
            )));
        }
    }
    let mut col = Collector {
        cfg: *cfg,
        checks: Vec::new(),
        instances: Vec::new(),
    };
    for part in suite.parts() {
        match part {
            Suite::Theorem1 => theorem1_suite(&mut col)?,
            Suite::Theorem2 => theorem2_suite(&mut col)?,
            Suite::Advantage => advantage_suite(&mut col)?,
            Suite::PgBias => pg_bias_suite(&mut col)?,
            Suite::Metropolis => metropolis_suite(&mut col)?,
            Suite::Grid => grid_suite(&mut col)?,
            Suite::Norms => norms_suite(&mut col)?,
            Suite::All => unreachable!("expanded by parts()"),
        }
    }
    let n_failed = col.checks.iter().filter(|c| !c.pass).count();
    Ok(VerificationReport {
        suite: suite.to_string(),
        pass: n_failed == 0,
        n_checks: col.checks.len(),
        n_failed,
        checks: col.checks,
        environment: Environment {
            seed: cfg.seed,
            trials: cfg.trials,
            tolerance_override: cfg.tol,
            instances: col.instances,
        },
    })
}

// Each part uses its own stream family so that `all` reproduces the
// individual suites exactly.
fn part_rng(col: &Collector, part: u64, trial: usize) -> rand_chacha::ChaCha8Rng {
    trial_rng(col.cfg.seed, (part << 32) | trial as u64)
}

fn random_theta<R: Rng + ?Sized>(approx: &Approximator, rng: &mut R) -> DVector<f64> {
    uniform_vector(approx.family.n_params(), -1.0, 1.0, rng)
}

/// Runs `gap` on `THETA_DRAWS` parameter draws and reports the draw with
/// the largest gap-to-tolerance ratio.
fn worst_identity_gap<R: Rng + ?Sized>(
    col: &mut Collector,
    id: String,
    anchor: &'static str,
    approx: &Approximator,
    rng: &mut R,
    gap: impl Fn(&DVector<f64>) -> Result<IdentityGap>,
) -> Result<()> {
    let mut worst: Option<(f64, CheckRecord)> = None;
    for _ in 0..THETA_DRAWS {
        let theta = random_theta(approx, rng);
        let g = gap(&theta)?;
        let tol = col.tol(g.tolerance());
        let rec = CheckRecord {
            check_id: id.clone(),
            anchor,
            lhs: g.expected_step.amax(),
            rhs: g.neg_half_grad.amax(),
            gap: g.gap_inf_norm,
            tolerance: tol,
            pass: g.gap_inf_norm <= tol,
        };
        let ratio = if tol > 0.0 {
            g.gap_inf_norm / tol
        } else {
            g.gap_inf_norm
        };
        if worst
            .as_ref()
            .is_none_or(|(r, _)| ratio > *r || ratio.is_nan())
        {
            worst = Some((ratio, rec));
        }
    }
    col.push(worst.expect("THETA_DRAWS > 0").1);
    Ok(())
}

const ANCHOR_T1: &str = "expected TD step = -1/2 gradient of the mixed norm (reversible)";
const ANCHOR_T2: &str =
    "expected centered TD step = -1/2 gradient of the Dirichlet norm (reversible)";

fn theorem1_suite(col: &mut Collector) -> Result<()> {
    for t in 0..col.cfg.trials {
        let mut rng = part_rng(col, 1, t);
        let n = rng.random_range(2..=MAX_STATES);
        let inst = random_reversible_instance(n, &mut rng);
        col.chain_instance(format!("theorem1/t{t:03}"), "metropolis", &inst.chain)?;
        let rewards = normal_vector(n, 1.0, &mut rng);
        for approx in standard_families(n, &mut rng) {
            for gamma in THEOREM1_GAMMAS {
                let id = format!("theorem1/t{t:03}/{}/gamma={gamma}", approx.family.name());
                worst_identity_gap(col, id, ANCHOR_T1, &approx, &mut rng, |theta| {
                    theorem1_gap(&approx.family, theta, &inst.chain, &rewards, gamma)
                })?;
            }
        }
    }
    Ok(())
}

fn theorem2_suite(col: &mut Collector) -> Result<()> {
    for t in 0..col.cfg.trials {
        let mut rng = part_rng(col, 2, t);
        let n = rng.random_range(2..=MAX_STATES);
        let inst = random_reversible_instance(n, &mut rng);
        col.chain_instance(format!("theorem2/t{t:03}"), "metropolis", &inst.chain)?;
        let rewards = normal_vector(n, 1.0, &mut rng);
        for approx in standard_families(n, &mut rng) {
            let id = format!("theorem2/t{t:03}/{}", approx.family.name());
            worst_identity_gap(col, id, ANCHOR_T2, &approx, &mut rng, |theta| {
                theorem2_gap(&approx.family, theta, &inst.chain, &rewards)
            })?;
        }
    }
    Ok(())
}

/// `R(s) = Σ_t P(s,t) r(s,t)`.
pub fn expected_edge_reward(chain: &Chain, edge_reward: &DMatrix<f64>) -> DVector<f64> {
    chain.p().component_mul(edge_reward).column_sum()
}

fn advantage_suite(col: &mut Collector) -> Result<()> {
    for t in 0..col.cfg.trials {
        let mut rng = part_rng(col, 3, t);
        let n = rng.random_range(2..=MAX_STATES);
        let (chain, kind) = if t % 2 == 0 {
            (random_reversible_instance(n, &mut rng).chain, "metropolis")
        } else {
            (random_dense_chain(n, &mut rng), "dense")
        };
        col.chain_instance(format!("advantage/t{t:03}"), kind, &chain)?;
        let edge = DMatrix::from_fn(n, n, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let rewards = expected_edge_reward(&chain, &edge);

        let u = relative_value(&chain, &rewards)?;
        let u_hat = ValueVector::new(
            &u.values + normal_vector(n, 1.0, &mut rng),
            ValueKind::Relative,
        );
        let id = advantage_error_identity(&chain, &u, &u_hat, &edge, 1.0)?;
        let tol = col.tol(1e-12 * (1.0 + id.lhs));
        col.push(CheckRecord::equality(
            format!("advantage/t{t:03}/gamma=1"),
            "E(A - A_theta)^2 = 2 |U - U_theta|^2_Dir",
            id.lhs,
            id.rhs_gamma1,
            tol,
        ));
        for gamma in [0.3, 0.9] {
            let v = value_function(&chain, &rewards, gamma)?;
            let v_hat = ValueVector::new(&v.values + normal_vector(n, 1.0, &mut rng), v.kind);
            let id = advantage_error_identity(&chain, &v, &v_hat, &edge, gamma)?;
            let tol = col.tol(1e-12 * (1.0 + id.lhs));
            col.push(CheckRecord::equality(
                format!("advantage/t{t:03}/gamma={gamma}"),
                "E(A - A_theta)^2 = 2g|V - V_theta|^2_Dir + (1-g)^2 |V - V_theta|^2_mu",
                id.lhs,
                id.rhs_gamma_lt1,
                tol,
            ));
        }
    }
    Ok(())
}

/// Perturbation sizes `λ` in `Û = U + λg`, cycled over trials.
pub const BIAS_SCALES: [f64; 3] = [0.01, 0.1, 1.0];

const ANCHOR_BIAS: &str = "|approx PG - PG|^2 <= 2 |U - U_hat|^2_Dir tr F";

fn pg_bias_suite(col: &mut Collector) -> Result<()> {
    for t in 0..col.cfg.trials {
        let mut rng = part_rng(col, 4, t);
        let n = rng.random_range(2..=6);
        let mdp = random_mdp(n, 3, &mut rng);
        col.mdp_instance(format!("pg-bias/t{t:03}"), "random-mdp", &mdp);
        let fam = SoftmaxFamily::for_mdp(&mdp);
        let phi = normal_vector(fam.n_params(), 1.0, &mut rng);
        let u = policy_relative_value(&mdp, &fam, &phi)?;
        let noise = normal_vector(n, 1.0, &mut rng);
        let tid = format!("pg-bias/t{t:03}");

        let lambda = BIAS_SCALES[t % BIAS_SCALES.len()];
        let b = bias_bound_check(&mdp, &fam, &phi, &(&u + &noise * lambda))?;
        col.push(CheckRecord::at_most(
            format!("{tid}/bound"),
            ANCHOR_BIAS,
            b.lhs,
            b.rhs,
            col.tol(1e-10),
        ));
        col.push(CheckRecord::at_most(
            format!("{tid}/bound-mu"),
            "|approx PG - PG|^2 <= 2 Var_mu(U - U_hat) tr F",
            b.lhs,
            b.rhs_mu,
            col.tol(1e-10),
        ));

        let small = bias_bound_check(&mdp, &fam, &phi, &(&u + &noise * 0.1))?;
        let half = bias_bound_check(&mdp, &fam, &phi, &(&u + &noise * 0.05))?;
        col.push(CheckRecord::equality(
            format!("{tid}/quadratic"),
            "bias is quadratic in the value error",
            small.lhs / half.lhs,
            4.0,
            col.tol(0.2),
        ));

        let exact = policy_gradient_exact(&mdp, &fam, &phi, &Baseline::None)?;
        let fd = average_reward_fd_gradient(&mdp, &fam, &phi, 1e-5)?;
        col.push(CheckRecord::at_most(
            format!("{tid}/pg-finite-difference"),
            "policy gradient equals the derivative of the average reward",
            (&exact - &fd).amax(),
            0.0,
            col.tol(1e-4 * (1.0 + exact.amax())),
        ));

        let mut worst = 0.0f64;
        for _ in 0..10 {
            let b = Baseline::Custom(normal_vector(n, 1.0, &mut rng));
            let g = approx_policy_gradient(&mdp, &fam, &phi, &u, &b)?;
            worst = worst.max((&g - &exact).amax());
        }
        col.push(CheckRecord::at_most(
            format!("{tid}/baseline"),
            "state baselines leave the policy gradient unchanged",
            worst,
            0.0,
            col.tol(1e-12),
        ));

        // A reversible navigation policy, where the variance bound is
        // comparable with the Dirichlet bound on psd chains.
        let inst = random_reversible_instance(n, &mut rng);
        let edge = DMatrix::from_fn(n, n, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let (nav, policy) = navigation_mdp_from_chain(&inst.chain, &edge)?;
        col.mdp_instance(
            format!("pg-bias/t{t:03}/navigation"),
            "navigation-mdp",
            &nav,
        );
        let nav_fam = SoftmaxFamily::for_mdp(&nav);
        let mut nav_phi = DVector::zeros(nav_fam.n_params());
        for s in 0..nav.n_states {
            for a in 0..nav.n_actions(s) {
                nav_phi[nav_fam.index(s, a)] = policy.prob(s, a).ln();
            }
        }
        let nav_u = policy_relative_value(&nav, &nav_fam, &nav_phi)?;
        let nb = bias_bound_check(
            &nav,
            &nav_fam,
            &nav_phi,
            &(&nav_u + normal_vector(n, 0.5, &mut rng)),
        )?;
        col.push(CheckRecord::at_most(
            format!("{tid}/navigation/bound"),
            ANCHOR_BIAS,
            nb.lhs,
            nb.rhs,
            col.tol(1e-10),
        ));
        if spectral_gap(&inst.chain)?.psd {
            col.push(CheckRecord::at_most(
                format!("{tid}/navigation/mu-weaker"),
                "Dirichlet bound is sharper than the variance bound (psd chain)",
                nb.rhs,
                nb.rhs_mu,
                col.tol(1e-10),
            ));
        }
    }
    Ok(())
}

const ANCHOR_BALANCE: &str = "Metropolis chain satisfies detailed balance";
const ANCHOR_TARGET: &str = "Metropolis chain has stationary law f / sum f";

fn metropolis_suite(col: &mut Collector) -> Result<()> {
    let mut max_violation = 0.0f64;
    for t in 0..col.cfg.trials {
        let mut rng = part_rng(col, 5, t);
        let n = rng.random_range(2..=MAX_STATES);
        let inst = random_reversible_instance(n, &mut rng);
        let tid = format!("metropolis/t{t:03}");
        col.chain_instance(tid.clone(), "metropolis", &inst.chain)?;
        max_violation = max_violation.max(metropolis_checks(col, &tid, &inst.chain, &inst.target)?);

        let p0 = random_symmetric_support_chain(n, &mut rng);
        let target = log_uniform_target(n, 0.1, 10.0, &mut rng);
        let chain = metropolis_from_default(&p0, &target)?;
        col.chain_instance(format!("{tid}/default"), "metropolis-from-default", &chain)?;
        max_violation = max_violation.max(metropolis_checks(
            col,
            &format!("{tid}/default"),
            &chain,
            &target,
        )?);
    }
    col.push(CheckRecord::at_most(
        "metropolis/max-violation".into(),
        ANCHOR_BALANCE,
        max_violation,
        0.0,
        col.tol(1e-12),
    ));

    let tri = metropolis_chain(
        &Graph::complete(3),
        &TargetWeights::new(DVector::from_vec(vec![1.0, 2.0, 1.0]))?,
    )?;
    for (s, t, want) in [(0, 1, 0.5), (1, 0, 0.25)] {
        col.push(CheckRecord::equality(
            format!("metropolis/triangle/P({s},{t})"),
            "hand-computed Metropolis entries",
            tri.p()[(s, t)],
            want,
            col.tol(0.0),
        ));
    }
    Ok(())
}

/// Balance and stationary-law checks; returns the balance violation.
fn metropolis_checks(
    col: &mut Collector,
    id: &str,
    chain: &Chain,
    target: &TargetWeights,
) -> Result<f64> {
    let want = target.normalized();
    let violation = detailed_balance_violation(chain.p(), &want);
    col.push(CheckRecord::at_most(
        format!("{id}/balance"),
        ANCHOR_BALANCE,
        violation,
        0.0,
        col.tol(1e-12),
    ));
    let solved = stationary_distribution(&Chain::new(chain.p().clone())?)?;
    col.push(CheckRecord::at_most(
        format!("{id}/stationary"),
        ANCHOR_TARGET,
        (&solved - &want).amax(),
        0.0,
        col.tol(1e-12),
    ));
    Ok(violation)
}

const ANCHOR_GRID: &str = "grid Dirichlet form ~ (eps^2 / 2d) x gradient energy";

/// Deviation `|ratio − 1|` for the Gaussian bump on the `d`-cube.
pub fn grid_deviation(dim: usize, eps: f64, sigma: f64) -> Result<f64> {
    let spec = GridSpec::unit_cube(dim, eps)?;
    let f = spec.sample(gaussian_bump(0.5, sigma));
    Ok((grid_taylor_check(&f, &spec)?.ratio - 1.0).abs())
}

fn grid_suite(col: &mut Collector) -> Result<()> {
    let d1 = grid_deviation(1, 0.01, 0.05)?;
    col.push(CheckRecord::at_most(
        "grid/d1/eps=0.01".into(),
        ANCHOR_GRID,
        d1,
        0.0,
        col.tol(0.1),
    ));
    let d1_half = grid_deviation(1, 0.005, 0.05)?;
    col.push(CheckRecord::at_most(
        "grid/d1/halving".into(),
        "deviation shrinks when eps is halved",
        1.5,
        d1 / d1_half,
        col.tol(0.0),
    ));
    let d2 = grid_deviation(2, 0.05, 0.06)?;
    col.push(CheckRecord::at_most(
        "grid/d2/eps=0.05".into(),
        ANCHOR_GRID,
        d2,
        0.0,
        col.tol(0.5),
    ));
    Ok(())
}

fn norms_suite(col: &mut Collector) -> Result<()> {
    for t in 0..col.cfg.trials {
        let mut rng = part_rng(col, 7, t);
        let n = rng.random_range(2..=MAX_STATES);
        let inst = random_reversible_instance(n, &mut rng);
        let tid = format!("norms/t{t:03}");
        col.chain_instance(tid.clone(), "metropolis", &inst.chain)?;
        let mu = inst.chain.mu()?;
        let spec = spectral_gap(&inst.chain)?;
        let f = normal_vector(n, 1.0, &mut rng);
        let dir = dirichlet_norm_sq(&f, &inst.chain)?;
        let var = centered_mu_norm_sq(&f, mu)?;
        col.push(CheckRecord::at_most(
            format!("{tid}/lower"),
            "beta Var_mu f <= |f|^2_Dir",
            spec.beta * var,
            dir,
            col.tol(1e-10),
        ));
        if spec.psd {
            col.push(CheckRecord::at_most(
                format!("{tid}/upper"),
                "|f|^2_Dir <= Var_mu f (psd chain)",
                dir,
                var,
                col.tol(1e-10),
            ));
        }
        col.push(CheckRecord::at_most(
            format!("{tid}/variance"),
            "Var_mu f <= |f|^2_mu",
            var,
            mu_norm_sq(&f, mu)?,
            col.tol(1e-12),
        ));
        let op = dirichlet_via_operator(&f, &inst.chain)?;
        col.push(CheckRecord::equality(
            format!("{tid}/operator"),
            "Dirichlet form = <(I - P) f, f>_mu",
            dir,
            op,
            col.tol(1e-12 * (1.0 + f.norm_squared())),
        ));
        let shifted = f.add_scalar(rng.random_range(-5.0..5.0));
        col.push(CheckRecord::equality(
            format!("{tid}/shift"),
            "Dirichlet form ignores constants",
            dir,
            dirichlet_norm_sq(&shifted, &inst.chain)?,
            col.tol(1e-12),
        ));
    }
    for n in [20usize, 50] {
        let cycle = crate::reversible::simple_random_walk(&Graph::cycle(n))?;
        let beta = spectral_gap(&cycle)?.beta;
        let exact = 1.0 - (2.0 * std::f64::consts::PI / n as f64).cos();
        if n == 20 {
            col.push(CheckRecord::equality(
                "norms/cycle20/exact".into(),
                "cycle gap = 1 - cos(2 pi / n)",
                beta,
                exact,
                col.tol(1e-10),
            ));
        }
        let approx = 2.0 * std::f64::consts::PI.powi(2) / (n * n) as f64;
        col.push(CheckRecord::at_most(
            format!("norms/cycle{n}/asymptotic"),
            "cycle gap ~ 2 pi^2 / n^2",
            (beta / approx - 1.0).abs(),
            0.0,
            col.tol(0.05),
        ));
    }
    Ok(())
}
