//! JSON file schemas for MDPs, policies, graphs, chains and parameter
//! vectors, plus content hashes used to identify instances in reports.
//!
//! Sparse entries are written as `[index, value]` pairs; omitted entries
//! are zero. Parse errors carry the path of the offending field.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::Chain;
use crate::error::{Error, Result};
use crate::mdp::{ActionSpec, Mdp, PolicyTable, StateSpec};
use crate::policy_grad::SoftmaxFamily;
use crate::reversible::{Graph, TargetWeights};

/// Parses `text` as `T`, reporting the JSON path of the first bad field.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Format {
            field: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

/// Pretty JSON with a trailing newline. Struct fields keep declaration
/// order, so equal values always produce equal bytes.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// First 16 hex digits of the SHA-256 of the compact JSON encoding.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("report types serialize");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

fn format_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Format {
        field: field.into(),
        message: message.into(),
    }
}

/// Expands `[index, value]` pairs into a dense vector of length `n`.
fn sparse_to_dense(field: &str, n: usize, entries: &[(usize, f64)]) -> Result<Vec<Option<f64>>> {
    let mut out = vec![None; n];
    for (k, &(i, v)) in entries.iter().enumerate() {
        if i >= n {
            return Err(format_err(
                format!("{field}[{k}]"),
                format!("state {i} out of range 0..{n}"),
            ));
        }
        if out[i].replace(v).is_some() {
            return Err(format_err(
                format!("{field}[{k}]"),
                format!("duplicate entry for state {i}"),
            ));
        }
    }
    Ok(out)
}

fn rows_to_matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(format_err(field, "matrix must be non-empty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(format_err(
            format!("{field}[{i}]"),
            format!("row has {} entries, expected {ncols}", rows[i].len()),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionFile {
    #[serde(default)]
    pub name: String,
    pub kernel: Vec<(usize, f64)>,
    pub rewards: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub actions: Vec<ActionFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub n_states: usize,
    pub states: Vec<StateFile>,
    #[serde(default)]
    pub reward_noise_std: f64,
}

impl MdpFile {
    pub fn from_mdp(mdp: &Mdp) -> Self {
        let states = mdp
            .states
            .iter()
            .map(|st| StateFile {
                actions: st
                    .actions
                    .iter()
                    .map(|a| ActionFile {
                        name: a.name.clone(),
                        kernel: a
                            .kernel
                            .iter()
                            .enumerate()
                            .filter(|(_, &p)| p != 0.0)
                            .map(|(t, &p)| (t, p))
                            .collect(),
                        rewards: a
                            .rewards
                            .iter()
                            .enumerate()
                            .filter_map(|(t, r)| r.map(|r| (t, r)))
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        MdpFile {
            n_states: mdp.n_states,
            states,
            reward_noise_std: mdp.reward_noise_std,
        }
    }

    pub fn into_mdp(self) -> Result<Mdp> {
        let n = self.n_states;
        if self.states.len() != n {
            return Err(format_err(
                "states",
                format!("{} entries but n_states = {n}", self.states.len()),
            ));
        }
        let mut states = Vec::with_capacity(n);
        for (s, st) in self.states.into_iter().enumerate() {
            let mut actions = Vec::with_capacity(st.actions.len());
            for (a, act) in st.actions.into_iter().enumerate() {
                let base = format!("states[{s}].actions[{a}]");
                let kernel = sparse_to_dense(&format!("{base}.kernel"), n, &act.kernel)?
                    .into_iter()
                    .map(|p| p.unwrap_or(0.0))
                    .collect();
                let rewards = sparse_to_dense(&format!("{base}.rewards"), n, &act.rewards)?;
                let name = if act.name.is_empty() {
                    format!("a{a}")
                } else {
                    act.name
                };
                actions.push(ActionSpec {
                    name,
                    kernel,
                    rewards,
                });
            }
            states.push(StateSpec { actions });
        }
        Mdp::new(states, self.reward_noise_std)
    }
}

pub fn parse_mdp(text: &str) -> Result<Mdp> {
    parse_json::<MdpFile>(text)?.into_mdp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    /// `[state, action index, probability]` triples.
    pub probs: Vec<(usize, usize, f64)>,
}

impl PolicyFile {
    pub fn from_policy(policy: &PolicyTable) -> Self {
        let probs = policy
            .probs
            .iter()
            .enumerate()
            .flat_map(|(s, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(move |(a, &p)| (s, a, p))
            })
            .collect();
        PolicyFile { probs }
    }

    pub fn into_policy(self, mdp: &Mdp) -> Result<PolicyTable> {
        let mut probs: Vec<Vec<f64>> = (0..mdp.n_states)
            .map(|s| vec![0.0; mdp.n_actions(s)])
            .collect();
        let mut seen = BTreeSet::new();
        for (k, &(s, a, p)) in self.probs.iter().enumerate() {
            let field = format!("probs[{k}]");
            if s >= mdp.n_states {
                return Err(format_err(
                    field,
                    format!("state {s} out of range 0..{}", mdp.n_states),
                ));
            }
            if a >= mdp.n_actions(s) {
                return Err(format_err(
                    field,
                    format!(
                        "action {a} out of range 0..{} for state {s}",
                        mdp.n_actions(s)
                    ),
                ));
            }
            if !seen.insert((s, a)) {
                return Err(format_err(
                    field,
                    format!("duplicate entry for state {s}, action {a}"),
                ));
            }
            probs[s][a] = p;
        }
        let policy = PolicyTable::new(probs);
        policy.validate(mdp)?;
        Ok(policy)
    }
}

pub fn parse_policy(text: &str, mdp: &Mdp) -> Result<PolicyTable> {
    parse_json::<PolicyFile>(text)?.into_policy(mdp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

pub fn parse_graph(text: &str) -> Result<Graph> {
    let g: GraphFile = parse_json(text)?;
    for (k, &(u, v)) in g.edges.iter().enumerate() {
        if u >= g.n || v >= g.n {
            return Err(format_err(
                format!("edges[{k}]"),
                format!("edge ({u}, {v}) out of range 0..{}", g.n),
            ));
        }
    }
    Graph::new(g.n, &g.edges)
}

/// Transition matrix with optional stationary law. Unknown keys (such as a
/// certificate written alongside) are ignored on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    pub p: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
}

impl ChainFile {
    pub fn from_chain(chain: &Chain) -> Result<Self> {
        Ok(ChainFile {
            p: matrix_to_rows(chain.p()),
            mu: Some(chain.mu()?.iter().copied().collect()),
        })
    }

    pub fn into_chain(self) -> Result<Chain> {
        let p = rows_to_matrix("p", &self.p)?;
        if p.nrows() != p.ncols() {
            return Err(format_err(
                "p",
                format!("matrix is {}x{}, expected square", p.nrows(), p.ncols()),
            ));
        }
        match self.mu {
            Some(mu) => {
                if mu.len() != p.nrows() {
                    return Err(format_err(
                        "mu",
                        format!("{} entries, expected {}", mu.len(), p.nrows()),
                    ));
                }
                Chain::with_mu(p, DVector::from_vec(mu))
            }
            None => Chain::new(p),
        }
    }
}

pub fn parse_chain(text: &str) -> Result<Chain> {
    parse_json::<ChainFile>(text)?.into_chain()
}

/// Per-state softmax logits: `phi[s]` has one entry per action of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiFile {
    pub phi: Vec<Vec<f64>>,
}

impl PhiFile {
    pub fn into_phi(self, mdp: &Mdp) -> Result<DVector<f64>> {
        if self.phi.len() != mdp.n_states {
            return Err(format_err(
                "phi",
                format!("{} rows, expected {}", self.phi.len(), mdp.n_states),
            ));
        }
        let family = SoftmaxFamily::for_mdp(mdp);
        let mut phi = DVector::zeros(family.n_params());
        for (s, row) in self.phi.iter().enumerate() {
            if row.len() != mdp.n_actions(s) {
                return Err(format_err(
                    format!("phi[{s}]"),
                    format!(
                        "{} logits, state has {} actions",
                        row.len(),
                        mdp.n_actions(s)
                    ),
                ));
            }
            for (a, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(format_err(format!("phi[{s}][{a}]"), "logit must be finite"));
                }
                phi[family.index(s, a)] = x;
            }
        }
        Ok(phi)
    }
}

pub fn parse_phi(text: &str, mdp: &Mdp) -> Result<DVector<f64>> {
    parse_json::<PhiFile>(text)?.into_phi(mdp)
}

/// Positive target weights `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub f: Vec<f64>,
}

pub fn parse_weights(text: &str) -> Result<TargetWeights> {
    let w: WeightsFile = parse_json(text)?;
    if let Some(i) = w.f.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(format_err(
            format!("f[{i}]"),
            format!("weight {} must be positive", w.f[i]),
        ));
    }
    TargetWeights::new(DVector::from_vec(w.f))
}

/// A real value per state (e.g. a potential for a Gibbs target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuesFile {
    pub values: Vec<f64>,
}

pub fn parse_values(text: &str) -> Result<DVector<f64>> {
    let v: ValuesFile = parse_json(text)?;
    if let Some(i) = v.values.iter().position(|x| !x.is_finite()) {
        return Err(format_err(format!("values[{i}]"), "value must be finite"));
    }
    Ok(DVector::from_vec(v.values))
}

/// Feature rows, one per state, for linear value families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesFile {
    pub features: Vec<Vec<f64>>,
}

pub fn parse_features(text: &str) -> Result<DMatrix<f64>> {
    let f: FeaturesFile = parse_json(text)?;
    rows_to_matrix("features", &f.features)
}
