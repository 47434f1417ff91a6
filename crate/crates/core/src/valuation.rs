//! Valuation DSL: ordered clauses over outcome patterns, each optionally
//! gated on commitment thresholds and carrying a sum of monomials in the
//! commuters' commitment probabilities.
//!
//! Exponents above one and non-trivial threshold gates are the only sources
//! of non-linearity in commitment.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{Allocation, CommuterId, Role};

/// Max residual for the numeric linearity identity.
pub const LINEARITY_TOLERANCE: f64 = 1e-9;
/// Max value change for the numeric independence sweep.
pub const INDEPENDENCE_TOLERANCE: f64 = 1e-12;
/// The numeric checkers sweep at most this many referenced subjects.
pub const MAX_LATTICE_SUBJECTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PartnerConstraint {
    #[default]
    Any,
    Exact(BTreeSet<CommuterId>),
    AtLeast(usize),
}

impl PartnerConstraint {
    fn is_any(&self) -> bool {
        matches!(self, PartnerConstraint::Any)
    }

    fn matches(&self, partners: &BTreeSet<CommuterId>) -> bool {
        match self {
            PartnerConstraint::Any => true,
            PartnerConstraint::Exact(set) => set == partners,
            PartnerConstraint::AtLeast(k) => partners.len() >= *k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomePattern {
    pub role: Role,
    #[serde(default, skip_serializing_if = "PartnerConstraint::is_any")]
    pub partners: PartnerConstraint,
}

impl OutcomePattern {
    pub fn matches(&self, role: Role, partners: &BTreeSet<CommuterId>) -> bool {
        self.role == role && self.partners.matches(partners)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDirection {
    /// Passes when `p >= bound`.
    AtLeast,
    /// Passes when `p < bound`.
    Below,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdGate {
    pub subject: CommuterId,
    pub bound: f64,
    pub direction: GateDirection,
}

impl ThresholdGate {
    pub fn at_least(subject: CommuterId, bound: f64) -> Self {
        Self {
            subject,
            bound,
            direction: GateDirection::AtLeast,
        }
    }

    pub fn below(subject: CommuterId, bound: f64) -> Self {
        Self {
            subject,
            bound,
            direction: GateDirection::Below,
        }
    }

    /// An absent subject never passes.
    fn passes(&self, p: Option<f64>) -> bool {
        match (p, self.direction) {
            (None, _) => false,
            (Some(p), GateDirection::AtLeast) => p >= self.bound,
            (Some(p), GateDirection::Below) => p < self.bound,
        }
    }

    /// Constant over `p in [0, 1]`: `AtLeast 0` always passes, `Below 0`
    /// never does. Every other bound splits the unit interval.
    pub fn is_trivial(&self) -> bool {
        self.bound <= 0.0
    }
}

fn is_one(e: &u32) -> bool {
    *e == 1
}

fn one() -> u32 {
    1
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Factor {
    pub subject: CommuterId,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub exponent: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coefficient: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<Factor>,
}

impl Monomial {
    pub fn constant(coefficient: f64) -> Self {
        Self {
            coefficient,
            factors: Vec::new(),
        }
    }

    /// `coefficient * prod(p_s)` over the given subjects, each to the first power.
    pub fn product(coefficient: f64, subjects: &[CommuterId]) -> Self {
        Self {
            coefficient,
            factors: subjects
                .iter()
                .map(|&subject| Factor { subject, exponent: 1 })
                .collect(),
        }
    }

    pub fn with_factor(mut self, subject: CommuterId, exponent: u32) -> Self {
        self.factors.push(Factor { subject, exponent });
        self
    }

    /// Total exponent per subject; repeated factors merge.
    pub fn degrees(&self) -> BTreeMap<CommuterId, u32> {
        let mut out = BTreeMap::new();
        for f in &self.factors {
            *out.entry(f.subject).or_insert(0) += f.exponent;
        }
        out
    }

    pub(crate) fn eval(&self, prob: &impl Fn(CommuterId) -> Option<f64>) -> f64 {
        self.factors.iter().fold(self.coefficient, |acc, f| {
            acc * prob(f.subject).unwrap_or(0.0).powi(f.exponent as i32)
        })
    }

    fn is_zero(&self) -> bool {
        self.coefficient == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Clause {
    pub pattern: OutcomePattern,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gates: Vec<ThresholdGate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<Monomial>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub excluded: bool,
}

impl Clause {
    pub fn new(role: Role, partners: PartnerConstraint) -> Self {
        Self {
            pattern: OutcomePattern { role, partners },
            gates: Vec::new(),
            terms: Vec::new(),
            excluded: false,
        }
    }

    pub fn excluded(role: Role, partners: PartnerConstraint) -> Self {
        Self {
            excluded: true,
            ..Self::new(role, partners)
        }
    }

    pub fn term(mut self, m: Monomial) -> Self {
        self.terms.push(m);
        self
    }

    pub fn gate(mut self, g: ThresholdGate) -> Self {
        self.gates.push(g);
        self
    }

    /// Clauses whose value can vary: not excluded and with a non-zero term.
    fn is_effective(&self) -> bool {
        !self.excluded && self.terms.iter().any(|m| !m.is_zero())
    }
}

/// Result of evaluating a valuation at an allocation.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Value {
    Finite(f64),
    Excluded,
}

impl Value {
    pub fn finite(self) -> Option<f64> {
        match self {
            Value::Finite(v) => Some(v),
            Value::Excluded => None,
        }
    }

    pub fn is_excluded(self) -> bool {
        matches!(self, Value::Excluded)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuationSpec {
    pub owner: CommuterId,
    #[serde(default)]
    pub clauses: Vec<Clause>,
    #[serde(default)]
    pub default_value: f64,
}

impl ValuationSpec {
    pub fn new(owner: CommuterId) -> Self {
        Self {
            owner,
            clauses: Vec::new(),
            default_value: 0.0,
        }
    }

    /// Worth zero everywhere.
    pub fn zero(owner: CommuterId) -> Self {
        Self::new(owner)
    }

    pub fn clause(mut self, c: Clause) -> Self {
        self.clauses.push(c);
        self
    }

    /// Everything `self` would report with every monomial coefficient scaled.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for m in out.clauses.iter_mut().flat_map(|c| c.terms.iter_mut()) {
            m.coefficient *= factor;
        }
        out
    }

    /// Load-time checks against a scenario of `n` commuters.
    pub fn problems(&self, owner: CommuterId, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.owner != owner {
            out.push(format!("owner {} does not match commuter {}", self.owner, owner));
        }
        if !self.default_value.is_finite() {
            out.push("default_value is not finite".into());
        }
        for (ci, c) in self.clauses.iter().enumerate() {
            match &c.pattern.partners {
                PartnerConstraint::Exact(set) => {
                    if set.contains(&self.owner) {
                        out.push(format!("clauses[{ci}]: exact partners include the owner"));
                    }
                    if let Some(bad) = set.iter().find(|s| s.0 >= n) {
                        out.push(format!("clauses[{ci}]: unknown partner {bad}"));
                    }
                }
                PartnerConstraint::AtLeast(0) => {
                    out.push(format!("clauses[{ci}]: at_least partner count must be >= 1"));
                }
                _ => {}
            }
            if c.excluded && !c.terms.is_empty() {
                out.push(format!("clauses[{ci}]: excluded clause carries terms"));
            }
            for (gi, g) in c.gates.iter().enumerate() {
                if !(0.0..=1.0).contains(&g.bound) {
                    out.push(format!("clauses[{ci}].gates[{gi}]: bound {} outside [0, 1]", g.bound));
                }
                if g.subject.0 >= n {
                    out.push(format!("clauses[{ci}].gates[{gi}]: unknown subject {}", g.subject));
                }
            }
            for (ti, m) in c.terms.iter().enumerate() {
                if !m.coefficient.is_finite() {
                    out.push(format!("clauses[{ci}].terms[{ti}]: coefficient is not finite"));
                }
                for f in &m.factors {
                    if f.exponent == 0 {
                        out.push(format!("clauses[{ci}].terms[{ti}]: exponent must be >= 1"));
                    }
                    if f.subject.0 >= n {
                        out.push(format!("clauses[{ci}].terms[{ti}]: unknown subject {}", f.subject));
                    }
                }
            }
        }
        out
    }

    fn matching_clause(&self, a: &Allocation) -> Option<&Clause> {
        let own = a.get(self.owner);
        self.clauses
            .iter()
            .find(|c| c.pattern.matches(own.role, &own.partners))
    }

    /// Value at allocation `a` with probabilities `p` (one entry per commuter).
    pub fn evaluate(&self, a: &Allocation, p: &[f64]) -> Value {
        self.evaluate_with(a, |id| p.get(id.0).copied())
    }

    /// Value with an explicit probability lookup. `None` marks an absent
    /// commuter: its factors are zero and gates on it fail.
    pub fn evaluate_with(&self, a: &Allocation, prob: impl Fn(CommuterId) -> Option<f64>) -> Value {
        let Some(clause) = self.matching_clause(a) else {
            return Value::Finite(self.default_value);
        };
        if clause.excluded {
            return Value::Excluded;
        }
        if !clause.gates.iter().all(|g| g.passes(prob(g.subject))) {
            return Value::Finite(0.0);
        }
        Value::Finite(clause.terms.iter().map(|m| m.eval(&prob)).sum())
    }

    /// Subjects whose probability can move the value, sorted.
    pub fn referenced_subjects(&self) -> Vec<CommuterId> {
        let mut set = BTreeSet::new();
        for c in self.clauses.iter().filter(|c| c.is_effective()) {
            for m in c.terms.iter().filter(|m| !m.is_zero()) {
                set.extend(m.factors.iter().map(|f| f.subject));
            }
            set.extend(c.gates.iter().map(|g| g.subject));
        }
        set.into_iter().collect()
    }

    /// Structural check: no effective clause depends on another
    /// commuter's probability.
    pub fn is_external_commit_independent(&self) -> bool {
        self.referenced_subjects().iter().all(|&s| s == self.owner)
    }

    /// Structural check: every non-zero monomial is multilinear and no
    /// effective clause carries a gate that splits `[0, 1]`.
    pub fn is_linear_in_commitment(&self) -> bool {
        self.clauses.iter().filter(|c| c.is_effective()).all(|c| {
            c.gates.iter().all(ThresholdGate::is_trivial)
                && c
                    .terms
                    .iter()
                    .filter(|m| !m.is_zero())
                    .all(|m| m.degrees().values().all(|&d| d == 1))
        })
    }

    fn lattice_subjects(&self) -> Vec<CommuterId> {
        let mut subjects = self.referenced_subjects();
        subjects.truncate(MAX_LATTICE_SUBJECTS);
        subjects
    }

    fn probe_len(&self, a: &Allocation) -> usize {
        let max_ref = self
            .referenced_subjects()
            .last()
            .map_or(0, |s| s.0 + 1);
        a.len().max(max_ref).max(self.owner.0 + 1)
    }

    /// Largest residual of the identity
    /// `v(p) = p_j v(1, p_-j) + (1 - p_j) v(0, p_-j)` over a uniform
    /// `grid`-point lattice on the referenced subjects, for every subject `j`.
    /// Excluded outcomes contribute nothing.
    pub fn linearity_residual(&self, a: &Allocation, grid: usize) -> f64 {
        assert!(grid >= 3, "linearity lattice needs at least 3 points");
        let subjects = self.lattice_subjects();
        let len = self.probe_len(a);
        let mut worst: f64 = 0.0;
        for_each_lattice_point(subjects.len(), grid, |coords| {
            let mut p = vec![0.0; len];
            for (s, &q) in subjects.iter().zip(coords) {
                p[s.0] = q;
            }
            let Value::Finite(lhs) = self.evaluate(a, &p) else {
                return;
            };
            for s in &subjects {
                let q = p[s.0];
                let mut hi = p.clone();
                hi[s.0] = 1.0;
                let mut lo = p.clone();
                lo[s.0] = 0.0;
                let (Value::Finite(v1), Value::Finite(v0)) = (self.evaluate(a, &hi), self.evaluate(a, &lo))
                else {
                    continue;
                };
                worst = worst.max((lhs - (q * v1 + (1.0 - q) * v0)).abs());
            }
        });
        worst
    }

    pub fn check_linearity_numeric(&self, a: &Allocation, grid: usize) -> bool {
        self.linearity_residual(a, grid) <= LINEARITY_TOLERANCE
    }

    /// Largest change in value when the non-owner coordinates move over the
    /// lattice while the owner's probability is held fixed.
    pub fn independence_residual(&self, a: &Allocation, grid: usize) -> f64 {
        assert!(grid >= 3, "independence lattice needs at least 3 points");
        let others: Vec<CommuterId> = self
            .lattice_subjects()
            .into_iter()
            .filter(|&s| s != self.owner)
            .collect();
        let len = self.probe_len(a);
        let mut worst: f64 = 0.0;
        for k in 0..grid {
            let own = lattice_value(k, grid);
            let mut base = vec![0.0; len];
            base[self.owner.0] = own;
            let reference = self.evaluate(a, &base);
            for_each_lattice_point(others.len(), grid, |coords| {
                let mut p = base.clone();
                for (s, &q) in others.iter().zip(coords) {
                    p[s.0] = q;
                }
                let delta = match (reference, self.evaluate(a, &p)) {
                    (Value::Finite(r), Value::Finite(v)) => (v - r).abs(),
                    (Value::Excluded, Value::Excluded) => 0.0,
                    _ => f64::INFINITY,
                };
                worst = worst.max(delta);
            });
        }
        worst
    }

    pub fn check_independence_numeric(&self, a: &Allocation, grid: usize) -> bool {
        self.independence_residual(a, grid) <= INDEPENDENCE_TOLERANCE
    }
}

/// `k`-th point of a uniform `grid`-point lattice on `[0, 1]`.
pub fn lattice_value(k: usize, grid: usize) -> f64 {
    if grid <= 1 {
        return 0.0;
    }
    k as f64 / (grid - 1) as f64
}

fn for_each_lattice_point(dims: usize, grid: usize, mut f: impl FnMut(&[f64])) {
    let mut idx = vec![0usize; dims];
    let mut coords = vec![0.0; dims];
    loop {
        for (c, &i) in coords.iter_mut().zip(&idx) {
            *c = lattice_value(i, grid);
        }
        f(&coords);
        let mut d = dims;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < grid {
                break;
            }
            idx[d] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const I: CommuterId = CommuterId(0);
    const J: CommuterId = CommuterId(1);

    fn j_rides_i() -> Allocation {
        Allocation::from_driver_map(&[None, Some(I)])
    }

    fn driver_spec(alpha: f64) -> ValuationSpec {
        ValuationSpec::new(I)
            .clause(
                Clause::new(Role::Drive, PartnerConstraint::Exact([J].into()))
                    .term(Monomial::product(alpha, &[I, J])),
            )
            .clause(Clause::excluded(Role::Ride, PartnerConstraint::Any))
            .clause(Clause::new(Role::None, PartnerConstraint::Any))
    }

    fn rider_spec(beta: f64, r: f64) -> ValuationSpec {
        ValuationSpec::new(J)
            .clause(
                Clause::new(Role::Ride, PartnerConstraint::Exact([I].into()))
                    .gate(ThresholdGate::at_least(I, r))
                    .term(Monomial::product(beta, &[I, J])),
            )
            .clause(Clause::excluded(Role::Drive, PartnerConstraint::Any))
            .clause(Clause::new(Role::None, PartnerConstraint::Any))
    }

    fn quadratic_owner() -> ValuationSpec {
        ValuationSpec::new(I).clause(
            Clause::new(Role::None, PartnerConstraint::Any).term(Monomial::constant(1.0).with_factor(I, 2)),
        )
    }

    fn constant_spec() -> ValuationSpec {
        ValuationSpec::new(I)
            .clause(Clause::new(Role::Drive, PartnerConstraint::Any).term(Monomial::constant(-1.0)))
    }

    #[test]
    fn driver_cost_evaluates_to_product() {
        let v = driver_spec(-2.0).evaluate(&j_rides_i(), &[0.5, 0.8]);
        assert!(matches!(v, Value::Finite(x) if (x + 0.8).abs() < 1e-15));
    }

    #[test]
    fn failed_gate_zeroes_the_clause() {
        let v = rider_spec(5.0, 0.6).evaluate(&j_rides_i(), &[0.5, 0.8]);
        assert_eq!(v, Value::Finite(0.0));
        let v = rider_spec(5.0, 0.6).evaluate(&j_rides_i(), &[0.6, 0.8]);
        assert!(matches!(v, Value::Finite(x) if (x - 2.4).abs() < 1e-12));
    }

    #[test]
    fn travel_alone_clause_is_zero() {
        let a = Allocation::all_none(2);
        assert_eq!(driver_spec(-2.0).evaluate(&a, &[0.5, 0.8]), Value::Finite(0.0));
        assert_eq!(rider_spec(5.0, 0.6).evaluate(&a, &[0.5, 0.8]), Value::Finite(0.0));
    }

    #[test]
    fn excluded_and_default_values() {
        let rides = Allocation::from_driver_map(&[Some(J), None]);
        assert_eq!(driver_spec(-2.0).evaluate(&rides, &[0.5, 0.8]), Value::Excluded);
        let mut spec = ValuationSpec::new(I);
        spec.default_value = 0.25;
        assert_eq!(spec.evaluate(&rides, &[0.5, 0.8]), Value::Finite(0.25));
    }

    #[test]
    fn absent_subject_reads_as_zero_and_fails_gates() {
        let a = j_rides_i();
        let lookup = |id: CommuterId| if id == I { None } else { Some(0.8) };
        assert_eq!(driver_spec(-2.0).evaluate_with(&a, lookup), Value::Finite(-0.0));
        let below = ValuationSpec::new(J).clause(
            Clause::new(Role::Ride, PartnerConstraint::Any)
                .gate(ThresholdGate::below(I, 0.5))
                .term(Monomial::constant(1.0)),
        );
        assert_eq!(below.evaluate_with(&a, lookup), Value::Finite(0.0));
    }

    #[test]
    fn structural_independence() {
        assert!(!driver_spec(-2.0).is_external_commit_independent());
        assert!(constant_spec().is_external_commit_independent());
        assert!(quadratic_owner().is_external_commit_independent());
    }

    #[test]
    fn structural_linearity() {
        assert!(driver_spec(-2.0).is_linear_in_commitment());
        assert!(!rider_spec(5.0, 0.6).is_linear_in_commitment());
        assert!(!quadratic_owner().is_linear_in_commitment());
        // Bound one still splits [0, 1].
        assert!(!rider_spec(5.0, 1.0).is_linear_in_commitment());
        assert!(rider_spec(5.0, 0.0).is_linear_in_commitment());
        // Zero coefficients carry no structure.
        assert!(rider_spec(0.0, 0.6).is_linear_in_commitment());
    }

    #[test]
    fn numeric_linearity() {
        let a = j_rides_i();
        assert!(driver_spec(-2.0).check_linearity_numeric(&a, 5));
        assert!(!rider_spec(5.0, 0.6).check_linearity_numeric(&a, 5));
        assert!(constant_spec().check_linearity_numeric(&Allocation::from_driver_map(&[None, Some(I)]), 5));
        assert!(!quadratic_owner().check_linearity_numeric(&Allocation::all_none(1), 5));
        assert!(rider_spec(5.0, 0.6).linearity_residual(&a, 5) > 1e-3);
    }

    #[test]
    fn numeric_independence() {
        let a = j_rides_i();
        assert!(!driver_spec(-2.0).check_independence_numeric(&a, 5));
        assert!(constant_spec().check_independence_numeric(&a, 5));
        assert!(quadratic_owner().check_independence_numeric(&Allocation::all_none(1), 5));
    }

    #[test]
    fn load_time_problems() {
        let mut bad = driver_spec(-2.0);
        bad.clauses[0].terms[0].factors.push(Factor {
            subject: CommuterId(7),
            exponent: 1,
        });
        bad.clauses[1].terms.push(Monomial::constant(1.0));
        let problems = bad.problems(I, 2);
        assert_eq!(problems.len(), 2, "{problems:?}");
        assert_eq!(driver_spec(-2.0).problems(J, 2).len(), 1);
    }

    #[test]
    fn lattice_walk_covers_grid() {
        let mut seen = Vec::new();
        for_each_lattice_point(2, 3, |c| seen.push(c.to_vec()));
        assert_eq!(seen.len(), 9);
        assert_eq!(seen[1], vec![0.0, 0.5]);
        let mut zero_dims = 0;
        for_each_lattice_point(0, 3, |_| zero_dims += 1);
        assert_eq!(zero_dims, 1);
    }
}
