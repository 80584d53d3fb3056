//! Posterior queries by variable elimination.

use std::collections::BTreeSet;

use super::factor::{Evidence, Factor, FactorError, VarId};
use super::network::{DiscreteNetwork, NetworkError, Violation};

/// Errors from posterior queries.
#[derive(Debug, thiserror::Error)]
pub enum InferError {
    #[error("network is invalid: {0:?}")]
    InvalidNetwork(Vec<Violation>),
    #[error("query has no target variables")]
    EmptyTargets,
    #[error("target variable {0} is repeated")]
    DuplicateTarget(VarId),
    #[error("variable {0} is not declared in the network")]
    UnknownVariable(VarId),
    #[error("target variable {0} is also observed as evidence")]
    TargetObserved(VarId),
    #[error("evidence state {state} is out of range for {var} ({card} states)")]
    EvidenceStateOutOfRange { var: VarId, state: usize, card: usize },
    #[error("evidence has zero probability; the posterior is undefined")]
    ZeroEvidence,
    #[error("elimination order {0:?} does not cover exactly the variables to eliminate")]
    BadEliminationOrder(Vec<VarId>),
    #[error(transparent)]
    Factor(#[from] FactorError),
}

impl From<NetworkError> for InferError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Invalid(v) => InferError::InvalidNetwork(v),
            NetworkError::UnknownVariable(v) => InferError::UnknownVariable(v),
            NetworkError::Factor(f) => InferError::Factor(f),
            NetworkError::JointTooLarge { .. } => {
                unreachable!("joint enumeration is not used by elimination queries")
            }
        }
    }
}

/// Result of a posterior query.
#[derive(Debug, Clone)]
pub struct QueryResult {
    /// Normalized posterior over the targets, scope in the order requested.
    pub posterior: Factor,
    /// Probability of the evidence, `P(e)` (1 for empty evidence).
    pub evidence_probability: f64,
}

/// Variable-elimination order chosen by the min-fill heuristic.
///
/// `scopes` are the scopes of the factors in play (after evidence
/// reduction); `eliminate` lists the variables to order. At each step the
/// variable whose elimination adds the fewest fill-in edges between its
/// not-yet-connected neighbours is chosen, with ties broken by position in
/// `eliminate` so the order is deterministic.
pub fn min_fill_order(scopes: &[Vec<VarId>], eliminate: &[VarId]) -> Vec<VarId> {
    // Undirected adjacency over all variables seen in the scopes.
    let mut vars: Vec<VarId> = Vec::new();
    for scope in scopes {
        for v in scope {
            if !vars.contains(v) {
                vars.push(v.clone());
            }
        }
    }
    let index_of = |v: &VarId| vars.iter().position(|w| w == v);
    let n = vars.len();
    let mut adj = vec![vec![false; n]; n];
    for scope in scopes {
        let idx: Vec<usize> = scope.iter().filter_map(&index_of).collect();
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }

    let mut remaining: Vec<usize> = eliminate.iter().filter_map(&index_of).collect();
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let fill_count = |v: usize, alive: &[bool], adj: &[Vec<bool>]| -> usize {
            let nbrs: Vec<usize> =
                (0..n).filter(|&u| alive[u] && u != v && adj[v][u]).collect();
            let mut fill = 0;
            for (a, &i) in nbrs.iter().enumerate() {
                for &j in &nbrs[a + 1..] {
                    if !adj[i][j] {
                        fill += 1;
                    }
                }
            }
            fill
        };
        let (pick_slot, _) = remaining
            .iter()
            .enumerate()
            .map(|(slot, &v)| (slot, fill_count(v, &alive, &adj)))
            .min_by_key(|&(slot, fill)| (fill, slot))
            .expect("remaining is non-empty");
        let v = remaining.remove(pick_slot);

        // Connect the neighbourhood of v, then drop v.
        let nbrs: Vec<usize> = (0..n).filter(|&u| alive[u] && u != v && adj[v][u]).collect();
        for (a, &i) in nbrs.iter().enumerate() {
            for &j in &nbrs[a + 1..] {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
        alive[v] = false;
        order.push(vars[v].clone());
    }

    // Variables requested for elimination but absent from every scope can be
    // eliminated trivially at any point; append them in the given order.
    for v in eliminate {
        if index_of(v).is_none() && !order.contains(v) {
            order.push(v.clone());
        }
    }
    order
}

/// Posterior over `targets` given `evidence`, eliminating the remaining
/// variables in min-fill order.
///
/// Fails with [`InferError::ZeroEvidence`] when the evidence has zero
/// probability under the network — the posterior is undefined in that case
/// and callers are expected to treat it as a distinct outcome, not as an
/// empty distribution.
pub fn query(
    net: &DiscreteNetwork,
    targets: &[VarId],
    evidence: &Evidence,
) -> Result<QueryResult, InferError> {
    let (factors, eliminate) = prepare(net, targets, evidence)?;
    let order = min_fill_order(
        &factors.iter().map(|f| f.scope().to_vec()).collect::<Vec<_>>(),
        &eliminate,
    );
    run_elimination(factors, &order, targets)
}

/// Like [`query`], but eliminating in the caller-supplied order, which must
/// be a permutation of the non-target, non-evidence variables. Posteriors
/// are independent of the order up to floating-point round-off.
pub fn query_with_order(
    net: &DiscreteNetwork,
    targets: &[VarId],
    evidence: &Evidence,
    order: &[VarId],
) -> Result<QueryResult, InferError> {
    let (factors, eliminate) = prepare(net, targets, evidence)?;
    let want: BTreeSet<&VarId> = eliminate.iter().collect();
    let got: BTreeSet<&VarId> = order.iter().collect();
    if want != got || order.len() != eliminate.len() {
        return Err(InferError::BadEliminationOrder(order.to_vec()));
    }
    run_elimination(factors, order, targets)
}

/// Validates the query and returns the evidence-reduced factors plus the
/// list of variables to eliminate, in declaration order.
fn prepare(
    net: &DiscreteNetwork,
    targets: &[VarId],
    evidence: &Evidence,
) -> Result<(Vec<Factor>, Vec<VarId>), InferError> {
    net.require_valid()?;
    if targets.is_empty() {
        return Err(InferError::EmptyTargets);
    }
    for (i, t) in targets.iter().enumerate() {
        if net.card(t).is_none() {
            return Err(InferError::UnknownVariable(t.clone()));
        }
        if targets[..i].contains(t) {
            return Err(InferError::DuplicateTarget(t.clone()));
        }
        if evidence.get(t).is_some() {
            return Err(InferError::TargetObserved(t.clone()));
        }
    }
    for (v, state) in evidence.iter() {
        match net.card(v) {
            None => return Err(InferError::UnknownVariable(v.clone())),
            Some(card) if state >= card => {
                return Err(InferError::EvidenceStateOutOfRange {
                    var: v.clone(),
                    state,
                    card,
                })
            }
            Some(_) => {}
        }
    }
    let factors: Vec<Factor> = net
        .cpt_factors()
        .into_iter()
        .map(|f| f.reduce(evidence))
        .collect::<Result<_, _>>()?;
    let eliminate: Vec<VarId> = net
        .variable_ids()
        .filter(|v| !targets.contains(v) && evidence.get(v).is_none())
        .cloned()
        .collect();
    Ok((factors, eliminate))
}

fn run_elimination(
    mut factors: Vec<Factor>,
    order: &[VarId],
    targets: &[VarId],
) -> Result<QueryResult, InferError> {
    for var in order {
        let (with, without): (Vec<Factor>, Vec<Factor>) = factors
            .into_iter()
            .partition(|f| f.scope().contains(var));
        factors = without;
        if with.is_empty() {
            continue;
        }
        let mut product = with[0].clone();
        for f in &with[1..] {
            product = product.product(f)?;
        }
        factors.push(product.marginalize(var)?);
    }
    let mut joint = Factor::scalar(1.0)?;
    for f in &factors {
        joint = joint.product(f)?;
    }
    let evidence_probability = joint.total();
    if !(evidence_probability > 0.0) {
        return Err(InferError::ZeroEvidence);
    }
    let (normalized, _) = joint.normalized()?;
    let posterior = normalized.reorder(targets)?;
    Ok(QueryResult {
        posterior,
        evidence_probability,
    })
}

/// Brute-force joint distribution over all variables; thin wrapper around
/// [`DiscreteNetwork::enumerate_joint`] for use as an inference oracle.
pub fn enumerate_joint(net: &DiscreteNetwork, cap: usize) -> Result<Factor, NetworkError> {
    net.enumerate_joint(cap)
}
