//! JSON document forms for networks and standalone factors.
//!
//! The on-disk network layout mirrors the in-memory convention: one entry
//! per variable, a parent list per variable, and flat row-major CPT arrays
//! over `[parents..., child]` with the child varying fastest.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::factor::{Factor, VarId};
use super::network::DiscreteNetwork;

/// A declared variable: identifier plus state labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableDoc {
    pub id: String,
    pub labels: Vec<String>,
}

/// Serializable network document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub variables: Vec<VariableDoc>,
    /// Parent identifiers per variable, in CPT scope order.
    pub parents: IndexMap<String, Vec<String>>,
    /// Flat row-major CPT values per variable (child varies fastest).
    pub cpts: IndexMap<String, Vec<f64>>,
}

/// A problem encountered while materializing CPTs from a document. The
/// resulting network is still returned (without the affected CPTs) so that
/// structural validation can report everything else it finds.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DocIssue {
    #[error("document provides a CPT for undeclared variable {0}")]
    CptForUnknownVariable(String),
    #[error("CPT for {child} cannot be shaped: {parent} is not a declared variable")]
    UnshapedCpt { child: String, parent: String },
    #[error("CPT for {child} has {found} values, expected {expected}")]
    WrongCptLength {
        child: String,
        expected: usize,
        found: usize,
    },
    #[error("CPT for {child} holds an invalid value: {detail}")]
    InvalidCptValue { child: String, detail: String },
}

impl NetworkDoc {
    /// Captures a network into document form. CPT values are emitted in the
    /// canonical `[parents..., child]` scope order; factors stored with a
    /// permuted scope are re-laid-out first.
    pub fn from_network(net: &DiscreteNetwork) -> Self {
        let variables: Vec<VariableDoc> = net
            .variable_ids()
            .map(|id| VariableDoc {
                id: id.to_string(),
                labels: net.states(id).unwrap_or(&[]).to_vec(),
            })
            .collect();
        let mut parents = IndexMap::new();
        let mut cpts = IndexMap::new();
        for id in net.variable_ids() {
            parents.insert(
                id.to_string(),
                net.parents(id).iter().map(|p| p.to_string()).collect(),
            );
            if let Some(cpt) = net.cpt(id) {
                let mut order: Vec<VarId> = net.parents(id).to_vec();
                order.push(id.clone());
                let values = match cpt.reorder(&order) {
                    Ok(f) => f.into_values(),
                    // Scope doesn't match the parent list; emit as stored
                    // and let validation flag the mismatch after reload.
                    Err(_) => cpt.values().to_vec(),
                };
                cpts.insert(id.to_string(), values);
            }
        }
        NetworkDoc {
            variables,
            parents,
            cpts,
        }
    }

    /// Materializes the document into a network plus any issues that kept
    /// individual CPTs from being shaped. Run
    /// [`DiscreteNetwork::validate`] on the result for full diagnostics.
    pub fn to_network(&self) -> (DiscreteNetwork, Vec<DocIssue>) {
        let mut net = DiscreteNetwork::new();
        let mut issues = Vec::new();
        for v in &self.variables {
            net.add_variable(v.id.as_str(), v.labels.clone());
        }
        // First declaration wins, matching `add_variable` semantics.
        let mut cards_by_id = std::collections::HashMap::new();
        for v in &self.variables {
            cards_by_id.entry(v.id.as_str()).or_insert(v.labels.len());
        }
        let card = |id: &str| -> Option<usize> { cards_by_id.get(id).copied().filter(|&c| c > 0) };

        // Every declared variable picks up its parent list; CPTs follow
        // when they can be shaped.
        for v in &self.variables {
            let parent_names: Vec<String> =
                self.parents.get(&v.id).cloned().unwrap_or_default();
            let parent_ids: Vec<VarId> = parent_names.iter().map(|p| VarId::from(p.as_str())).collect();

            let Some(values) = self.cpts.get(&v.id) else {
                if !parent_ids.is_empty() {
                    // Record the structure even without a table so that
                    // validation can see the declared parents.
                    net.set_cpt_parents_only(v.id.as_str(), parent_ids);
                }
                continue;
            };
            let mut scope: Vec<VarId> = parent_ids.clone();
            scope.push(VarId::from(v.id.as_str()));
            let mut cards = Vec::with_capacity(scope.len());
            let mut shaped = true;
            for s in &scope {
                match card(s.as_str()) {
                    Some(c) => cards.push(c),
                    None => {
                        issues.push(DocIssue::UnshapedCpt {
                            child: v.id.clone(),
                            parent: s.to_string(),
                        });
                        shaped = false;
                        break;
                    }
                }
            }
            if !shaped {
                net.set_cpt_parents_only(v.id.as_str(), parent_ids);
                continue;
            }
            let expected: usize = cards.iter().product();
            if values.len() != expected {
                issues.push(DocIssue::WrongCptLength {
                    child: v.id.clone(),
                    expected,
                    found: values.len(),
                });
                net.set_cpt_parents_only(v.id.as_str(), parent_ids);
                continue;
            }
            match Factor::new(scope, cards, values.clone()) {
                Ok(f) => net.set_cpt(v.id.as_str(), parent_ids, f),
                Err(e) => {
                    issues.push(DocIssue::InvalidCptValue {
                        child: v.id.clone(),
                        detail: e.to_string(),
                    });
                    net.set_cpt_parents_only(v.id.as_str(), parent_ids);
                }
            }
        }
        for name in self.cpts.keys() {
            if !self.variables.iter().any(|v| &v.id == name) {
                issues.push(DocIssue::CptForUnknownVariable(name.clone()));
            }
        }
        (net, issues)
    }
}

/// Serializable standalone factor: scope with cardinalities plus the flat
/// row-major value table (last scope variable fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDoc {
    pub scope: Vec<ScopeEntry>,
    pub values: Vec<f64>,
}

/// One scope variable of a [`FactorDoc`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeEntry {
    pub id: String,
    pub card: usize,
}

impl FactorDoc {
    /// Captures a factor into document form.
    pub fn from_factor(f: &Factor) -> Self {
        FactorDoc {
            scope: f
                .scope()
                .iter()
                .zip(f.cards())
                .map(|(v, &c)| ScopeEntry {
                    id: v.to_string(),
                    card: c,
                })
                .collect(),
            values: f.values().to_vec(),
        }
    }

    /// Rebuilds the factor, validating shape and values.
    pub fn to_factor(&self) -> Result<Factor, super::FactorError> {
        Factor::new(
            self.scope.iter().map(|s| VarId::from(s.id.as_str())).collect(),
            self.scope.iter().map(|s| s.card).collect(),
            self.values.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::Violation;

    fn var(s: &str) -> VarId {
        VarId::from(s)
    }

    fn doc_round_trip_net() -> DiscreteNetwork {
        let mut net = DiscreteNetwork::new();
        net.add_variable("x", vec!["no".into(), "yes".into()]);
        net.add_variable("y", vec!["lo".into(), "mid".into(), "hi".into()]);
        net.set_cpt(
            "x",
            vec![],
            Factor::new(vec![var("x")], vec![2], vec![0.25, 0.75]).unwrap(),
        );
        net.set_cpt(
            "y",
            vec![var("x")],
            Factor::new(
                vec![var("x"), var("y")],
                vec![2, 3],
                vec![0.1, 0.2, 0.7, 0.3, 0.3, 0.4],
            )
            .unwrap(),
        );
        net
    }

    #[test]
    fn network_round_trips_through_json() {
        let net = doc_round_trip_net();
        let doc = NetworkDoc::from_network(&net);
        let text = serde_json::to_string_pretty(&doc).unwrap();
        let parsed: NetworkDoc = serde_json::from_str(&text).unwrap();
        let (rebuilt, issues) = parsed.to_network();
        assert!(issues.is_empty());
        assert!(rebuilt.validate().is_empty());
        assert_eq!(rebuilt.cpt(&var("y")).unwrap(), net.cpt(&var("y")).unwrap());
        assert_eq!(rebuilt.states(&var("y")).unwrap(), net.states(&var("y")).unwrap());
    }

    #[test]
    fn wrong_length_cpt_is_reported_and_network_still_validates_structurally() {
        let mut doc = NetworkDoc::from_network(&doc_round_trip_net());
        doc.cpts.insert("y".into(), vec![0.5; 5]);
        let (net, issues) = doc.to_network();
        assert!(matches!(
            issues.as_slice(),
            [DocIssue::WrongCptLength { expected: 6, found: 5, .. }]
        ));
        // The CPT was dropped, so validation reports it as missing.
        assert!(net
            .validate()
            .iter()
            .any(|v| matches!(v, Violation::MissingCpt(ref id) if id == &var("y"))));
    }

    #[test]
    fn undeclared_parent_in_document_is_diagnosed() {
        let mut doc = NetworkDoc::from_network(&doc_round_trip_net());
        doc.parents.insert("y".into(), vec!["ghost".into()]);
        let (net, issues) = doc.to_network();
        assert!(issues
            .iter()
            .any(|i| matches!(i, DocIssue::UnshapedCpt { parent, .. } if parent == "ghost")));
        assert!(net
            .validate()
            .iter()
            .any(|v| matches!(v, Violation::UnknownParent { .. })));
    }

    #[test]
    fn factor_doc_round_trips() {
        let f = Factor::new(
            vec![var("p"), var("q")],
            vec![2, 4],
            (0..8).map(|i| i as f64 / 10.0).collect(),
        )
        .unwrap();
        let doc = FactorDoc::from_factor(&f);
        let text = serde_json::to_string(&doc).unwrap();
        let parsed: FactorDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.to_factor().unwrap(), f);
    }
}
