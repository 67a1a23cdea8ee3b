use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use tdlab::approx::{
    make_linear, make_tabular, make_two_layer, make_two_layer_one_hot, Approximator,
};
use tdlab::chain::{
    check_reversibility, spectral_gap, stationarity_residual, ReversibilityCertificate,
    SpectralReport, REVERSIBILITY_TOL,
};
use tdlab::fixtures::{normal_vector, trial_rng};
use tdlab::formats::{self, content_hash, to_json, ChainFile, MdpFile, PolicyFile};
use tdlab::mdp::{expected_reward_vector, induced_chain, Mdp, PolicyTable};
use tdlab::policy_grad::{bias_bound_check, policy_relative_value, SoftmaxFamily};
use tdlab::reversible::{gibbs_target, metropolis_chain, TargetWeights};
use tdlab::td::{run_td, Centering, LearningRate, TdConfig, TdRecord};
use tdlab::value::average_reward_scalar;
use tdlab::verify::{run_suite, Suite, VerifyConfig};

/// Slack below which a bias-bound row counts as a violation.
const SLACK_TOL: f64 = 1e-10;
/// Detailed-balance tolerance certified for constructed chains.
const METROPOLIS_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(
    name = "tdlab",
    version,
    about = "Finite-MDP laboratory for TD learning and reversible chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary law, reversibility certificate, spectral gap and average
    /// reward of the chain induced by a policy.
    Analyze {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Detailed-balance tolerance.
        #[arg(long, default_value_t = REVERSIBILITY_TOL)]
        tol: f64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a randomized verification suite; exits 1 if any check fails.
    Verify {
        /// One of theorem1, theorem2, advantage, pg-bias, metropolis, grid, norms, all.
        suite: String,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, env = "TDLAB_SEED", default_value_t = 0)]
        seed: u64,
        /// Override every check's tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stochastic TD(0) run; writes a CSV curve and a JSON sidecar.
    Td {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// tabular | linear:FEATURES_FILE | two-layer:WIDTH[:EMBEDDING_FILE]
        #[arg(long)]
        family: String,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        steps: u64,
        /// A | const:A | decay:A0:TAU
        #[arg(long)]
        lr: String,
        #[arg(long, env = "TDLAB_SEED", default_value_t = 0)]
        seed: u64,
        /// none | known | running; required (not none) when gamma = 1.
        #[arg(long, default_value = "none")]
        center: String,
        /// Steps between logged records.
        #[arg(long, default_value_t = 100)]
        interval: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep value perturbations and compare the policy-gradient bias with
    /// its bound; exits 1 if any slack is below -1e-10.
    PgBias {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        phi: PathBuf,
        /// Comma-separated perturbation sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        uhat_noise: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, env = "TDLAB_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the Metropolis chain of a graph and target.
    Metropolis {
        #[arg(long)]
        graph: PathBuf,
        /// uniform | file:WEIGHTS_FILE | gibbs:BETA:VALUES_FILE
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(passed)` or an input error.
fn run(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::Analyze {
            mdp,
            policy,
            tol,
            out,
        } => analyze(&mdp, &policy, tol, out.as_deref()),
        Command::Verify {
            suite,
            trials,
            seed,
            tol,
            out,
        } => verify(&suite, trials, seed, tol, out.as_deref()),
        Command::Td {
            mdp,
            policy,
            family,
            gamma,
            steps,
            lr,
            seed,
            center,
            interval,
            out,
        } => {
            let learning_rate: LearningRate = lr.parse().map_err(|e| anyhow!("--lr: {e}"))?;
            let centering: Centering = center.parse().map_err(|e| anyhow!("--center: {e}"))?;
            let config = TdConfig {
                gamma,
                steps,
                learning_rate,
                seed,
                centering,
                log_interval: interval,
            };
            td(&mdp, &policy, &family, config, &out)
        }
        Command::PgBias {
            mdp,
            phi,
            uhat_noise,
            trials,
            seed,
            out,
        } => pg_bias(&mdp, &phi, &uhat_noise, trials, seed, out.as_deref()),
        Command::Metropolis { graph, target, out } => metropolis(&graph, &target, &out),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load<T>(path: &Path, parse: impl FnOnce(&str) -> tdlab::Result<T>) -> anyhow::Result<T> {
    let text = read(path)?;
    parse(&text).with_context(|| format!("in {}", path.display()))
}

fn load_mdp_policy(mdp: &Path, policy: &Path) -> anyhow::Result<(Mdp, PolicyTable)> {
    let m = load(mdp, formats::parse_mdp)?;
    let p = load(policy, |t| formats::parse_policy(t, &m))?;
    Ok((m, p))
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct AnalyzeReport {
    mdp_hash: String,
    policy_hash: String,
    n_states: usize,
    mu: Vec<f64>,
    stationarity_residual: f64,
    reversibility: ReversibilityCertificate,
    /// Present only for certified reversible chains.
    spectral: Option<SpectralReport>,
    average_reward: f64,
}

fn analyze(
    mdp_path: &Path,
    policy_path: &Path,
    tol: f64,
    out: Option<&Path>,
) -> anyhow::Result<bool> {
    let (mdp, policy) = load_mdp_policy(mdp_path, policy_path)?;
    let chain = induced_chain(&mdp, &policy)?;
    let mu = chain.mu()?.clone();
    let cert = check_reversibility(&chain, tol)?;
    // the gap needs reversibility at the library tolerance, which a looser --tol may not imply
    let spectral = if cert.pass {
        spectral_gap(&chain).ok()
    } else {
        None
    };
    let rewards = expected_reward_vector(&mdp, &policy)?;
    let report = AnalyzeReport {
        mdp_hash: content_hash(&MdpFile::from_mdp(&mdp)),
        policy_hash: content_hash(&PolicyFile::from_policy(&policy)),
        n_states: mdp.n_states,
        stationarity_residual: stationarity_residual(chain.p(), &mu),
        mu: mu.iter().copied().collect(),
        reversibility: cert,
        spectral,
        average_reward: average_reward_scalar(&rewards, &mu)?,
    };
    emit(out, &to_json(&report))?;
    Ok(true)
}

fn verify(
    suite: &str,
    trials: usize,
    seed: u64,
    tol: Option<f64>,
    out: Option<&Path>,
) -> anyhow::Result<bool> {
    let suite: Suite = suite.parse()?;
    let report = run_suite(suite, &VerifyConfig { trials, seed, tol })?;
    emit(out, &to_json(&report))?;
    eprintln!(
        "{}: {} checks, {} failed",
        report.suite, report.n_checks, report.n_failed
    );
    for c in report.failures().take(10) {
        eprintln!(
            "  FAIL {} gap {:e} > tol {:e}",
            c.check_id, c.gap, c.tolerance
        );
    }
    Ok(report.pass)
}

fn parse_family(spec: &str, n_states: usize, seed: u64) -> anyhow::Result<Approximator> {
    let parts: Vec<&str> = spec.splitn(3, ':').collect();
    let approx = match parts.as_slice() {
        ["tabular"] => make_tabular(n_states)?,
        ["linear", path] => {
            let features = load(Path::new(path), formats::parse_features)?;
            make_linear(features)?
        }
        ["two-layer", width] | ["two-layer", width, _] => {
            let width: usize = width
                .parse()
                .with_context(|| format!("--family: bad width {width:?}"))?;
            match parts.get(2) {
                Some(path) => {
                    make_two_layer(load(Path::new(path), formats::parse_features)?, width, seed)?
                }
                None => make_two_layer_one_hot(n_states, width, seed)?,
            }
        }
        _ => {
            bail!("--family: expected tabular | linear:FILE | two-layer:WIDTH[:FILE], got {spec:?}")
        }
    };
    if approx.family.n_states() != n_states {
        bail!(
            "--family: features have {} rows but the MDP has {n_states} states",
            approx.family.n_states()
        );
    }
    Ok(approx)
}

#[derive(Serialize)]
struct TdSidecar<'a> {
    mdp_hash: String,
    policy_hash: String,
    family: &'a str,
    family_kind: &'static str,
    config: &'a TdConfig,
    n_records: usize,
    final_record: Option<&'a TdRecord>,
    final_theta: Vec<f64>,
}

fn td(
    mdp_path: &Path,
    policy_path: &Path,
    family: &str,
    config: TdConfig,
    out: &Path,
) -> anyhow::Result<bool> {
    let (mdp, policy) = load_mdp_policy(mdp_path, policy_path)?;
    config.validate()?;
    let approx = parse_family(family, mdp.n_states, config.seed)?;
    let report = run_td(&mdp, &policy, &approx, &config)?;

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out)
        .with_context(|| format!("writing {}", out.display()))?;
    for r in &report.records {
        w.serialize(r)?;
    }
    w.flush()?;

    let sidecar = TdSidecar {
        mdp_hash: content_hash(&MdpFile::from_mdp(&mdp)),
        policy_hash: content_hash(&PolicyFile::from_policy(&policy)),
        family,
        family_kind: report.family,
        config: &report.config,
        n_records: report.records.len(),
        final_record: report.records.last(),
        final_theta: report.final_theta.iter().copied().collect(),
    };
    let json_path = out.with_extension("json");
    if json_path == out {
        bail!("--out must not end in .json; the sidecar is written next to it");
    }
    fs::write(&json_path, to_json(&sidecar))
        .with_context(|| format!("writing {}", json_path.display()))?;
    Ok(true)
}

#[derive(Serialize)]
struct BiasRow {
    trial: usize,
    lambda: f64,
    lhs: f64,
    rhs: f64,
    slack: f64,
    rhs_mu: f64,
    fisher_trace: f64,
}

fn pg_bias(
    mdp_path: &Path,
    phi_path: &Path,
    lambdas: &[f64],
    trials: usize,
    seed: u64,
    out: Option<&Path>,
) -> anyhow::Result<bool> {
    let mdp = load(mdp_path, formats::parse_mdp)?;
    let phi = load(phi_path, |t| formats::parse_phi(t, &mdp))?;
    if let Some(l) = lambdas.iter().find(|l| !l.is_finite()) {
        bail!("--uhat-noise: {l} is not finite");
    }
    let family = SoftmaxFamily::for_mdp(&mdp);
    let u = policy_relative_value(&mdp, &family, &phi)?;

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut pass = true;
    for trial in 0..trials {
        let direction = normal_vector(mdp.n_states, 1.0, &mut trial_rng(seed, trial as u64));
        for &lambda in lambdas {
            let b = bias_bound_check(&mdp, &family, &phi, &(&u + &direction * lambda))?;
            pass &= b.slack >= -SLACK_TOL;
            w.serialize(BiasRow {
                trial,
                lambda,
                lhs: b.lhs,
                rhs: b.rhs,
                slack: b.slack,
                rhs_mu: b.rhs_mu,
                fisher_trace: b.fisher_trace,
            })?;
        }
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("csv: {e}"))?;
    emit(out, std::str::from_utf8(&bytes)?)?;
    Ok(pass)
}

#[derive(Serialize)]
struct MetropolisOutput {
    p: Vec<Vec<f64>>,
    mu: Option<Vec<f64>>,
    target: String,
    graph_hash: String,
    certificate: ReversibilityCertificate,
}

fn parse_target(spec: &str, n: usize) -> anyhow::Result<TargetWeights> {
    let target = match spec.split_once(':') {
        None if spec == "uniform" => TargetWeights::uniform(n),
        Some(("file", path)) => load(Path::new(path), formats::parse_weights)?,
        Some(("gibbs", rest)) => {
            let (beta, path) = rest.split_once(':').ok_or_else(|| {
                anyhow!("--target: expected gibbs:BETA:VALUES_FILE, got {spec:?}")
            })?;
            let beta: f64 = beta
                .parse()
                .with_context(|| format!("--target: bad beta {beta:?}"))?;
            let values = load(Path::new(path), formats::parse_values)?;
            gibbs_target(&values, beta)?
        }
        _ => bail!("--target: expected uniform | file:PATH | gibbs:BETA:PATH, got {spec:?}"),
    };
    if target.values().len() != n {
        bail!(
            "--target: {} weights for a graph with {n} nodes",
            target.values().len()
        );
    }
    Ok(target)
}

fn metropolis(graph_path: &Path, target: &str, out: &Path) -> anyhow::Result<bool> {
    let text = read(graph_path)?;
    let graph =
        formats::parse_graph(&text).with_context(|| format!("in {}", graph_path.display()))?;
    let weights = parse_target(target, graph.n())?;
    let chain = metropolis_chain(&graph, &weights)?;
    let certificate = check_reversibility(&chain, METROPOLIS_TOL)?;
    let pass = certificate.pass;
    let file = ChainFile::from_chain(&chain)?;
    let graph_file: formats::GraphFile = formats::parse_json(&text)?;
    let output = MetropolisOutput {
        p: file.p,
        mu: file.mu,
        target: target.to_string(),
        graph_hash: content_hash(&graph_file),
        certificate,
    };
    fs::write(out, to_json(&output)).with_context(|| format!("writing {}", out.display()))?;
    Ok(pass)
}
