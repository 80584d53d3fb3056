//! Network structure: variables, parent sets, CPTs, and validation.

use indexmap::IndexMap;

use super::factor::{Factor, FactorError, VarId};

/// Tolerance used when checking that CPT rows sum to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// A structural or numerical defect found by [`DiscreteNetwork::validate`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("variable {0} is declared more than once")]
    DuplicateVariable(VarId),
    #[error("variable {0} has no states")]
    EmptyStates(VarId),
    #[error("variable {child} lists unknown parent {parent}")]
    UnknownParent { child: VarId, parent: VarId },
    #[error("variable {child} lists parent {parent} more than once")]
    DuplicateParent { child: VarId, parent: VarId },
    #[error("graph contains a cycle through {0}")]
    Cycle(VarId),
    #[error("variable {0} has no conditional probability table")]
    MissingCpt(VarId),
    #[error("CPT for {child} has scope {found:?}, expected parents then child {expected:?}")]
    CptScopeMismatch {
        child: VarId,
        expected: Vec<VarId>,
        found: Vec<VarId>,
    },
    #[error("CPT for {child} gives {var} cardinality {found}, expected {expected}")]
    CptCardinalityMismatch {
        child: VarId,
        var: VarId,
        expected: usize,
        found: usize,
    },
    #[error(
        "CPT for {child} fails normalization: row {row} sums to {sum} (tolerance {ROW_SUM_TOLERANCE})"
    )]
    RowNotNormalized { child: VarId, row: usize, sum: f64 },
}

/// Errors from network-level operations.
#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("network is invalid: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("joint table would have {entries} entries, above the cap of {cap}")]
    JointTooLarge { entries: u128, cap: usize },
    #[error("unknown variable {0}")]
    UnknownVariable(VarId),
    #[error(transparent)]
    Factor(#[from] FactorError),
}

fn format_violations(vs: &[Violation]) -> String {
    let mut out = String::new();
    for (i, v) in vs.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        out.push_str(&v.to_string());
    }
    out
}

/// A discrete Bayesian network: variables with state labels, a parent list
/// per variable, and one CPT per variable with scope `[parents..., child]`.
///
/// Construction is permissive so that defective inputs can be loaded and
/// then diagnosed: call [`Self::validate`] to obtain the full list of
/// violations (an empty list means the network is well-formed).
#[derive(Debug, Clone, Default)]
pub struct DiscreteNetwork {
    variables: IndexMap<VarId, Vec<String>>,
    parents: IndexMap<VarId, Vec<VarId>>,
    cpts: IndexMap<VarId, Factor>,
    duplicate_declarations: Vec<VarId>,
}

impl DiscreteNetwork {
    /// Empty network.
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a variable with its state labels. Re-declaring an existing
    /// identifier is recorded and later reported by [`Self::validate`].
    pub fn add_variable(&mut self, id: impl Into<VarId>, states: Vec<String>) {
        let id = id.into();
        if self.variables.contains_key(&id) {
            self.duplicate_declarations.push(id);
        } else {
            self.variables.insert(id, states);
        }
    }

    /// Convenience for unlabeled states `"s0".."s{n-1}"`.
    pub fn add_variable_with_card(&mut self, id: impl Into<VarId>, card: usize) {
        let states = (0..card).map(|i| format!("s{i}")).collect();
        self.add_variable(id, states);
    }

    /// Sets the parent list and CPT for `child`.
    pub fn set_cpt(&mut self, child: impl Into<VarId>, parents: Vec<VarId>, cpt: Factor) {
        let child = child.into();
        self.parents.insert(child.clone(), parents);
        self.cpts.insert(child, cpt);
    }

    /// Records a parent list for `child` without attaching a CPT, e.g. when
    /// a document declares structure whose table could not be materialized.
    /// Validation will report the missing table.
    pub fn set_cpt_parents_only(&mut self, child: impl Into<VarId>, parents: Vec<VarId>) {
        let child = child.into();
        self.cpts.shift_remove(&child);
        self.parents.insert(child, parents);
    }

    /// Declared variable identifiers, in declaration order.
    pub fn variable_ids(&self) -> impl Iterator<Item = &VarId> {
        self.variables.keys()
    }

    /// Number of declared variables.
    pub fn len(&self) -> usize {
        self.variables.len()
    }

    /// True when no variable is declared.
    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// State labels of `id`, if declared.
    pub fn states(&self, id: &VarId) -> Option<&[String]> {
        self.variables.get(id).map(|s| s.as_slice())
    }

    /// Cardinality of `id`, if declared.
    pub fn card(&self, id: &VarId) -> Option<usize> {
        self.variables.get(id).map(|s| s.len())
    }

    /// Parent list of `id` (empty slice when none was set).
    pub fn parents(&self, id: &VarId) -> &[VarId] {
        self.parents.get(id).map(|p| p.as_slice()).unwrap_or(&[])
    }

    /// CPT of `id`, if one was set.
    pub fn cpt(&self, id: &VarId) -> Option<&Factor> {
        self.cpts.get(id)
    }

    /// All CPT factors, in declaration order of their child variables.
    pub fn cpt_factors(&self) -> Vec<&Factor> {
        self.variables
            .keys()
            .filter_map(|id| self.cpts.get(id))
            .collect()
    }

    /// Checks the network and returns every violation found: duplicate or
    /// empty variable declarations, unknown or repeated parents, directed
    /// cycles, missing CPTs, CPT scopes that are not `[parents..., child]`,
    /// cardinality conflicts, and CPT rows that fail normalization within
    /// [`ROW_SUM_TOLERANCE`].
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for id in &self.duplicate_declarations {
            out.push(Violation::DuplicateVariable(id.clone()));
        }
        for (id, states) in &self.variables {
            if states.is_empty() {
                out.push(Violation::EmptyStates(id.clone()));
            }
        }
        for (child, parents) in &self.parents {
            for (i, p) in parents.iter().enumerate() {
                if !self.variables.contains_key(p) {
                    out.push(Violation::UnknownParent {
                        child: child.clone(),
                        parent: p.clone(),
                    });
                } else if parents[..i].contains(p) {
                    out.push(Violation::DuplicateParent {
                        child: child.clone(),
                        parent: p.clone(),
                    });
                }
            }
        }
        if let Err(v) = self.topological_order() {
            out.push(v);
        }
        for id in self.variables.keys() {
            let Some(cpt) = self.cpts.get(id) else {
                out.push(Violation::MissingCpt(id.clone()));
                continue;
            };
            let mut expected: Vec<VarId> = self
                .parents(id)
                .iter()
                .filter(|p| self.variables.contains_key(*p))
                .cloned()
                .collect();
            expected.push(id.clone());
            if cpt.scope() != expected.as_slice() {
                out.push(Violation::CptScopeMismatch {
                    child: id.clone(),
                    expected,
                    found: cpt.scope().to_vec(),
                });
                continue;
            }
            let mut card_ok = true;
            for (v, &c) in cpt.scope().iter().zip(cpt.cards()) {
                let declared = self.card(v).unwrap_or(0);
                if declared != c {
                    out.push(Violation::CptCardinalityMismatch {
                        child: id.clone(),
                        var: v.clone(),
                        expected: declared,
                        found: c,
                    });
                    card_ok = false;
                }
            }
            if !card_ok {
                continue;
            }
            let child_card = *cpt.cards().last().expect("scope includes the child");
            for (row, chunk) in cpt.values().chunks(child_card).enumerate() {
                let sum: f64 = chunk.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    out.push(Violation::RowNotNormalized {
                        child: id.clone(),
                        row,
                        sum,
                    });
                }
            }
        }
        out
    }

    /// Validates and wraps any violations in [`NetworkError::Invalid`].
    pub fn require_valid(&self) -> Result<(), NetworkError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(NetworkError::Invalid(violations))
        }
    }

    /// Topological order of the variables (parents before children), with
    /// declaration order breaking ties deterministically. Fails on a cycle.
    pub fn topological_order(&self) -> Result<Vec<VarId>, Violation> {
        let ids: Vec<&VarId> = self.variables.keys().collect();
        let index_of = |id: &VarId| ids.iter().position(|v| *v == id);
        let n = ids.len();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut in_degree = vec![0usize; n];
        for (child, parents) in &self.parents {
            let Some(c) = index_of(child) else { continue };
            for p in parents {
                if let Some(p) = index_of(p) {
                    children[p].push(c);
                    in_degree[c] += 1;
                }
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut ready: Vec<usize> = (0..n).filter(|&i| in_degree[i] == 0).collect();
        while let Some(&next) = ready.iter().min() {
            ready.retain(|&i| i != next);
            order.push(ids[next].clone());
            for &c in &children[next] {
                in_degree[c] -= 1;
                if in_degree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n)
                .find(|&i| in_degree[i] > 0)
                .expect("some variable remains with unresolved parents");
            return Err(Violation::Cycle(ids[stuck].clone()));
        }
        Ok(order)
    }

    /// Brute-force joint distribution over all variables, in declaration
    /// order, computed by multiplying every CPT at every full assignment.
    ///
    /// Intended as an oracle for small networks; fails if the joint table
    /// would exceed `cap` entries or the network is invalid.
    pub fn enumerate_joint(&self, cap: usize) -> Result<Factor, NetworkError> {
        self.require_valid()?;
        let scope: Vec<VarId> = self.variables.keys().cloned().collect();
        let cards: Vec<usize> = self.variables.values().map(|s| s.len()).collect();
        let entries: u128 = cards.iter().map(|&c| c as u128).product();
        if entries > cap as u128 {
            return Err(NetworkError::JointTooLarge { entries, cap });
        }

        // For each CPT, the positions of its scope variables in the global
        // assignment vector.
        let positions: Vec<(&Factor, Vec<usize>)> = scope
            .iter()
            .map(|id| {
                let cpt = self.cpts.get(id).expect("validated");
                let pos = cpt
                    .scope()
                    .iter()
                    .map(|v| scope.iter().position(|s| s == v).expect("validated"))
                    .collect();
                (cpt, pos)
            })
            .collect();

        let total = entries as usize;
        let mut values = Vec::with_capacity(total);
        let mut digits = vec![0usize; scope.len()];
        let mut assignment = vec![0usize; scope.len()];
        for flat in 0..total {
            // Decode the assignment (last variable fastest).
            let mut rem = flat;
            for k in (0..scope.len()).rev() {
                digits[k] = rem % cards[k];
                rem /= cards[k];
            }
            assignment.copy_from_slice(&digits);
            let mut p = 1.0;
            for (cpt, pos) in &positions {
                let mut idx = 0usize;
                for (&slot, &c) in pos.iter().zip(cpt.cards()) {
                    idx = idx * c + assignment[slot];
                }
                p *= cpt.values()[idx];
            }
            values.push(p);
        }
        Ok(Factor::new(scope, cards, values)?)
    }
}
