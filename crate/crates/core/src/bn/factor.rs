//! Dense factors over named discrete variables.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Interned variable identifier. Cloning is cheap; comparisons are by value.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(Arc<str>);

impl VarId {
    /// The identifier as a string slice.
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VarId {
    fn from(s: &str) -> Self {
        VarId(Arc::from(s))
    }
}

impl From<String> for VarId {
    fn from(s: String) -> Self {
        VarId(Arc::from(s.as_str()))
    }
}

impl From<&VarId> for VarId {
    fn from(v: &VarId) -> Self {
        v.clone()
    }
}

impl serde::Serialize for VarId {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&self.0)
    }
}

impl<'de> serde::Deserialize<'de> for VarId {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        Ok(String::deserialize(de)?.into())
    }
}

/// Observed states for a set of variables, keyed by identifier.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evidence(BTreeMap<VarId, usize>);

impl Evidence {
    /// Empty evidence set.
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds (or replaces) an observation, returning `self` for chaining.
    pub fn with(mut self, var: impl Into<VarId>, state: usize) -> Self {
        self.0.insert(var.into(), state);
        self
    }

    /// Observed state for `var`, if any.
    pub fn get(&self, var: &VarId) -> Option<usize> {
        self.0.get(var).copied()
    }

    /// Iterates over `(variable, state)` pairs in identifier order.
    pub fn iter(&self) -> impl Iterator<Item = (&VarId, usize)> {
        self.0.iter().map(|(v, &s)| (v, s))
    }

    /// Number of observed variables.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// True when no variable is observed.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<V: Into<VarId>> FromIterator<(V, usize)> for Evidence {
    fn from_iter<T: IntoIterator<Item = (V, usize)>>(iter: T) -> Self {
        Evidence(iter.into_iter().map(|(v, s)| (v.into(), s)).collect())
    }
}

/// Errors from constructing or combining factors.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FactorError {
    #[error("scope and cardinality lists differ in length ({scope} vs {cards})")]
    ScopeCardMismatch { scope: usize, cards: usize },
    #[error("variable {0} appears more than once in a factor scope")]
    DuplicateVariable(VarId),
    #[error("variable {0} has zero states")]
    ZeroCardinality(VarId),
    #[error("value table has {found} entries but the scope implies {expected}")]
    WrongValueCount { expected: usize, found: usize },
    #[error("factor value at flat index {index} is {value}, which is not finite and non-negative")]
    InvalidValue { index: usize, value: f64 },
    #[error("variable {0} is not in the factor scope")]
    UnknownVariable(VarId),
    #[error("state {state} is out of range for variable {var} with {card} states")]
    StateOutOfRange { var: VarId, state: usize, card: usize },
    #[error("factors disagree on the cardinality of {var} ({left} vs {right})")]
    CardinalityConflict { var: VarId, left: usize, right: usize },
    #[error("cannot normalize a factor whose total mass is {0}")]
    ZeroMass(f64),
    #[error("assignment has {found} coordinates but the scope has {expected}")]
    WrongAssignmentLength { expected: usize, found: usize },
}

/// Dense non-negative table over a scope of discrete variables.
///
/// Storage is row-major with the last scope variable varying fastest:
/// the flat index of an assignment `(s_0, .., s_{k-1})` is
/// `s_0 * c_1 * .. * c_{k-1} + .. + s_{k-2} * c_{k-1} + s_{k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    scope: Vec<VarId>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    /// Builds a factor, validating scope uniqueness, table length, and that
    /// every value is finite and non-negative.
    pub fn new(
        scope: Vec<VarId>,
        cards: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, FactorError> {
        if scope.len() != cards.len() {
            return Err(FactorError::ScopeCardMismatch {
                scope: scope.len(),
                cards: cards.len(),
            });
        }
        for (i, v) in scope.iter().enumerate() {
            if scope[..i].contains(v) {
                return Err(FactorError::DuplicateVariable(v.clone()));
            }
        }
        if let Some(i) = cards.iter().position(|&c| c == 0) {
            return Err(FactorError::ZeroCardinality(scope[i].clone()));
        }
        let expected: usize = cards.iter().product();
        if values.len() != expected {
            return Err(FactorError::WrongValueCount {
                expected,
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(FactorError::InvalidValue {
                index,
                value: values[index],
            });
        }
        Ok(Self {
            scope,
            cards,
            values,
        })
    }

    /// Scalar factor with empty scope.
    pub fn scalar(value: f64) -> Result<Self, FactorError> {
        Self::new(Vec::new(), Vec::new(), vec![value])
    }

    /// Ordered scope.
    pub fn scope(&self) -> &[VarId] {
        &self.scope
    }

    /// Cardinalities, parallel to [`Self::scope`].
    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    /// Flat value table (row-major, last variable fastest).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the value table; lengths and scope are fixed.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Consumes the factor, returning its flat value table.
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Number of table entries.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True for a scalar (empty-scope) factor.
    pub fn is_empty(&self) -> bool {
        self.scope.is_empty()
    }

    /// Cardinality of `var`, if present in the scope.
    pub fn card_of(&self, var: &VarId) -> Option<usize> {
        self.position(var).map(|i| self.cards[i])
    }

    fn position(&self, var: &VarId) -> Option<usize> {
        self.scope.iter().position(|v| v == var)
    }

    /// Strides of each scope variable in the flat table.
    fn strides(&self) -> Vec<usize> {
        strides_for(&self.cards)
    }

    /// Flat index of a full assignment (one state per scope variable).
    pub fn flat_index(&self, assignment: &[usize]) -> Result<usize, FactorError> {
        if assignment.len() != self.scope.len() {
            return Err(FactorError::WrongAssignmentLength {
                expected: self.scope.len(),
                found: assignment.len(),
            });
        }
        let mut idx = 0usize;
        for (k, (&s, &c)) in assignment.iter().zip(&self.cards).enumerate() {
            if s >= c {
                return Err(FactorError::StateOutOfRange {
                    var: self.scope[k].clone(),
                    state: s,
                    card: c,
                });
            }
            idx = idx * c + s;
        }
        Ok(idx)
    }

    /// Value at a full assignment.
    pub fn value_at(&self, assignment: &[usize]) -> Result<f64, FactorError> {
        Ok(self.values[self.flat_index(assignment)?])
    }

    /// Total mass of the table.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Pointwise product. The result scope is this factor's scope followed
    /// by the other factor's variables not already present, in their
    /// original order; shared variables must agree on cardinality.
    pub fn product(&self, other: &Factor) -> Result<Factor, FactorError> {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        for (v, &c) in other.scope.iter().zip(&other.cards) {
            match self.position(v) {
                Some(i) => {
                    if self.cards[i] != c {
                        return Err(FactorError::CardinalityConflict {
                            var: v.clone(),
                            left: self.cards[i],
                            right: c,
                        });
                    }
                }
                None => {
                    scope.push(v.clone());
                    cards.push(c);
                }
            }
        }
        let total: usize = cards.iter().product();

        // Strides of each result variable within each operand (0 when absent).
        let self_strides = operand_strides(&scope, self);
        let other_strides = operand_strides(&scope, other);

        let mut values = vec![0.0; total];
        let mut digits = vec![0usize; scope.len()];
        let mut ia = 0usize;
        let mut ib = 0usize;
        for slot in values.iter_mut() {
            *slot = self.values[ia] * other.values[ib];
            // Odometer increment over the result assignment, updating both
            // operand indices incrementally.
            for k in (0..scope.len()).rev() {
                digits[k] += 1;
                ia += self_strides[k];
                ib += other_strides[k];
                if digits[k] < cards[k] {
                    break;
                }
                digits[k] = 0;
                ia -= cards[k] * self_strides[k];
                ib -= cards[k] * other_strides[k];
            }
        }
        Factor::new(scope, cards, values)
    }

    /// Sums out one variable.
    pub fn marginalize(&self, var: &VarId) -> Result<Factor, FactorError> {
        let pos = self
            .position(var)
            .ok_or_else(|| FactorError::UnknownVariable(var.clone()))?;
        let keep: Vec<VarId> = self
            .scope
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != pos)
            .map(|(_, v)| v.clone())
            .collect();
        self.marginalize_onto(&keep)
    }

    /// Sums out every variable not listed in `keep`. The result scope is
    /// `keep` in the order given; each entry must be in the current scope.
    pub fn marginalize_onto(&self, keep: &[VarId]) -> Result<Factor, FactorError> {
        let mut keep_pos = Vec::with_capacity(keep.len());
        for v in keep {
            match self.position(v) {
                Some(i) => keep_pos.push(i),
                None => return Err(FactorError::UnknownVariable(v.clone())),
            }
        }
        for (i, v) in keep.iter().enumerate() {
            if keep[..i].contains(v) {
                return Err(FactorError::DuplicateVariable(v.clone()));
            }
        }
        let cards: Vec<usize> = keep_pos.iter().map(|&i| self.cards[i]).collect();
        let total: usize = cards.iter().product();
        let result_strides = strides_for(&cards);

        // For each source variable, its stride in the result (0 if dropped).
        let mut into_result = vec![0usize; self.scope.len()];
        for (slot, &src) in keep_pos.iter().enumerate() {
            into_result[src] = result_strides[slot];
        }

        let mut values = vec![0.0; total];
        let mut digits = vec![0usize; self.scope.len()];
        let mut out = 0usize;
        for &v in &self.values {
            values[out] += v;
            for k in (0..self.scope.len()).rev() {
                digits[k] += 1;
                out += into_result[k];
                if digits[k] < self.cards[k] {
                    break;
                }
                digits[k] = 0;
                out -= self.cards[k] * into_result[k];
            }
        }
        Factor::new(keep.to_vec(), cards, values)
    }

    /// Restricts the table to entries consistent with `evidence`, dropping
    /// the observed variables from the scope. Variables in the evidence but
    /// not in the scope are ignored.
    pub fn reduce(&self, evidence: &Evidence) -> Result<Factor, FactorError> {
        let mut fixed: Vec<Option<usize>> = vec![None; self.scope.len()];
        let mut any = false;
        for (var, state) in evidence.iter() {
            if let Some(i) = self.position(var) {
                if state >= self.cards[i] {
                    return Err(FactorError::StateOutOfRange {
                        var: var.clone(),
                        state,
                        card: self.cards[i],
                    });
                }
                fixed[i] = Some(state);
                any = true;
            }
        }
        if !any {
            return Ok(self.clone());
        }
        let keep_pos: Vec<usize> = (0..self.scope.len()).filter(|&i| fixed[i].is_none()).collect();
        let scope: Vec<VarId> = keep_pos.iter().map(|&i| self.scope[i].clone()).collect();
        let cards: Vec<usize> = keep_pos.iter().map(|&i| self.cards[i]).collect();
        let strides = self.strides();
        let base: usize = fixed
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| s * strides[i]))
            .sum();

        let total: usize = cards.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut digits = vec![0usize; keep_pos.len()];
        let mut src = base;
        for _ in 0..total {
            values.push(self.values[src]);
            for k in (0..keep_pos.len()).rev() {
                digits[k] += 1;
                src += strides[keep_pos[k]];
                if digits[k] < cards[k] {
                    break;
                }
                digits[k] = 0;
                src -= cards[k] * strides[keep_pos[k]];
            }
        }
        Factor::new(scope, cards, values)
    }

    /// Returns the table scaled to unit mass, along with the original mass.
    pub fn normalized(&self) -> Result<(Factor, f64), FactorError> {
        let total = self.total();
        if !(total > 0.0) || !total.is_finite() {
            return Err(FactorError::ZeroMass(total));
        }
        let values = self.values.iter().map(|v| v / total).collect();
        Ok((
            Factor::new(self.scope.clone(), self.cards.clone(), values)?,
            total,
        ))
    }

    /// Permutes the scope to `order`, which must contain exactly the same
    /// variables. The value table is re-laid-out accordingly.
    pub fn reorder(&self, order: &[VarId]) -> Result<Factor, FactorError> {
        if order.len() != self.scope.len() {
            return Err(FactorError::WrongAssignmentLength {
                expected: self.scope.len(),
                found: order.len(),
            });
        }
        let mut perm = Vec::with_capacity(order.len());
        for v in order {
            match self.position(v) {
                Some(i) => perm.push(i),
                None => return Err(FactorError::UnknownVariable(v.clone())),
            }
        }
        for (i, v) in order.iter().enumerate() {
            if order[..i].contains(v) {
                return Err(FactorError::DuplicateVariable(v.clone()));
            }
        }
        let cards: Vec<usize> = perm.iter().map(|&i| self.cards[i]).collect();
        let src_strides = self.strides();

        let mut values = vec![0.0; self.values.len()];
        let mut digits = vec![0usize; order.len()];
        let mut src = 0usize;
        for slot in values.iter_mut() {
            *slot = self.values[src];
            for k in (0..order.len()).rev() {
                digits[k] += 1;
                src += src_strides[perm[k]];
                if digits[k] < cards[k] {
                    break;
                }
                digits[k] = 0;
                src -= cards[k] * src_strides[perm[k]];
            }
        }
        Factor::new(order.to_vec(), cards, values)
    }
}

/// Row-major strides (last variable fastest) for a cardinality list.
pub(crate) fn strides_for(cards: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; cards.len()];
    for k in (0..cards.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * cards[k + 1];
    }
    strides
}

/// For each variable of `result_scope`, its stride inside `operand`'s flat
/// table, or 0 when the operand does not contain it.
fn operand_strides(result_scope: &[VarId], operand: &Factor) -> Vec<usize> {
    let op_strides = operand.strides();
    result_scope
        .iter()
        .map(|v| operand.position(v).map_or(0, |i| op_strides[i]))
        .collect()
}
