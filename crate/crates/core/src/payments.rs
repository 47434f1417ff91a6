//! Groves payments with a zero or Clarke pivot, and commit-based payments
//! that charge one amount when the commuter commits and another when she
//! does not.
//!
//! Sign convention: a positive amount is paid by the commuter to the
//! system; a negative amount is received.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{efficient_allocation, efficient_allocation_excluding};
use crate::model::{Allocation, CommuterId, Scenario};
use crate::valuation::Value;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PivotRule {
    Zero,
    Clarke,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payment {
    Unconditional(f64),
    Conditional { on_commit: f64, on_fail: f64 },
}

impl Payment {
    /// Amount charged given the commuter's own realized commitment.
    pub fn charged(self, committed: bool) -> f64 {
        match self {
            Payment::Unconditional(x) => x,
            Payment::Conditional { on_commit, on_fail } => {
                if committed {
                    on_commit
                } else {
                    on_fail
                }
            }
        }
    }
}

impl fmt::Display for Payment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `+ 0.0` prints negative zero as 0.
            Payment::Unconditional(x) => write!(f, "{}", x + 0.0),
            Payment::Conditional { on_commit, on_fail } => {
                write!(f, "({}, {})", on_commit + 0.0, on_fail + 0.0)
            }
        }
    }
}

/// Payments together with the allocation they were computed for.
#[derive(Clone, Debug, PartialEq)]
pub struct PaymentSchedule {
    pub allocation: Allocation,
    pub entries: Vec<Payment>,
}

impl PaymentSchedule {
    pub fn get(&self, id: CommuterId) -> Payment {
        self.entries[id.0]
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    GrovesZero,
    /// Zero pivot with commitment probabilities known to the mechanism.
    GrovesZeroPublicP,
    GrovesClarke,
    /// Clarke pivot with commitment probabilities known to the mechanism.
    GrovesClarkePublicP,
    CommitBased,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [
        Mechanism::GrovesZero,
        Mechanism::GrovesZeroPublicP,
        Mechanism::GrovesClarke,
        Mechanism::GrovesClarkePublicP,
        Mechanism::CommitBased,
    ];

    pub fn run(self, s: &Scenario) -> PaymentSchedule {
        match self {
            Mechanism::GrovesZero => groves_payments(s, PivotRule::Zero, None),
            Mechanism::GrovesZeroPublicP => groves_payments(s, PivotRule::Zero, Some(&s.true_probabilities())),
            Mechanism::GrovesClarke => groves_payments(s, PivotRule::Clarke, None),
            Mechanism::GrovesClarkePublicP => {
                groves_payments(s, PivotRule::Clarke, Some(&s.true_probabilities()))
            }
            Mechanism::CommitBased => commit_payments(s),
        }
    }

    /// Whether the mechanism ignores reported probabilities.
    pub fn uses_public_p(self) -> bool {
        matches!(self, Mechanism::GrovesZeroPublicP | Mechanism::GrovesClarkePublicP)
    }

    /// The same payment rule with probabilities made public, where one exists.
    pub fn with_public_p(self) -> Option<Mechanism> {
        match self {
            Mechanism::GrovesZero | Mechanism::GrovesZeroPublicP => Some(Mechanism::GrovesZeroPublicP),
            Mechanism::GrovesClarke | Mechanism::GrovesClarkePublicP => Some(Mechanism::GrovesClarkePublicP),
            Mechanism::CommitBased => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::GrovesZero => "groves-zero",
            Mechanism::GrovesZeroPublicP => "groves-zero-public-p",
            Mechanism::GrovesClarke => "groves-clarke",
            Mechanism::GrovesClarkePublicP => "groves-clarke-public-p",
            Mechanism::CommitBased => "commit",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown mechanism `{0}` (expected groves-zero, groves-zero-public-p, groves-clarke, groves-clarke-public-p or commit)")]
pub struct UnknownMechanism(pub String);

impl FromStr for Mechanism {
    type Err = UnknownMechanism;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| UnknownMechanism(s.to_owned()))
    }
}

/// Copy of `s` whose reported probabilities are replaced by `p`.
fn with_public_p(s: &Scenario, p: &[f64]) -> Scenario {
    let mut out = s.clone();
    for (c, &q) in out.commuters.iter_mut().zip(p) {
        c.reported_type.p_commit = q;
    }
    out
}

/// Groves payments `h_i - V_-i` at the efficient allocation. With
/// `public_p`, the supplied probabilities replace the reported ones
/// everywhere, including inside the pivot.
pub fn groves_payments(s: &Scenario, pivot: PivotRule, public_p: Option<&[f64]>) -> PaymentSchedule {
    let substituted;
    let s = match public_p {
        Some(p) => {
            substituted = with_public_p(s, p);
            &substituted
        }
        None => s,
    };
    let eff = efficient_allocation(s);
    let entries = s
        .ids()
        .map(|i| {
            let others: f64 = eff
                .per_commuter
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i.0)
                .filter_map(|(_, v)| *v)
                .sum();
            let h = match pivot {
                PivotRule::Zero => 0.0,
                PivotRule::Clarke => efficient_allocation_excluding(s, i).welfare,
            };
            Payment::Unconditional(h - others)
        })
        .collect();
    PaymentSchedule {
        allocation: eff.allocation,
        entries,
    }
}

/// Others' reported welfare at `a` with `i`'s probability pinned to `pin`.
fn others_welfare_pinned(s: &Scenario, a: &Allocation, i: CommuterId, pin: f64) -> f64 {
    let lookup = |id: CommuterId| {
        if id == i {
            Some(pin)
        } else {
            s.commuters.get(id.0).map(|c| c.reported_type.p_commit)
        }
    };
    s.commuters
        .iter()
        .filter(|c| c.id != i)
        .map(|c| match c.reported_type.valuation.evaluate_with(a, lookup) {
            Value::Finite(v) => v,
            // Only reachable through the all-None fallback, which scores
            // an excluded travel-alone clause as zero.
            Value::Excluded => 0.0,
        })
        .sum()
}

/// Commit-based payments: `h_i - V1_-i` if `i` commits, `h_i - V0_-i`
/// otherwise, where `h_i` is the others' best welfare without `i`.
pub fn commit_payments(s: &Scenario) -> PaymentSchedule {
    let eff = efficient_allocation(s);
    let entries = s
        .ids()
        .map(|i| {
            let h = efficient_allocation_excluding(s, i).welfare;
            let v1 = others_welfare_pinned(s, &eff.allocation, i, 1.0);
            let v0 = others_welfare_pinned(s, &eff.allocation, i, 0.0);
            Payment::Conditional {
                on_commit: h - v1,
                on_fail: h - v0,
            }
        })
        .collect();
    PaymentSchedule {
        allocation: eff.allocation,
        entries,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UtilityError {
    #[error("commuter {0}'s true valuation excludes the chosen allocation")]
    ExcludedOutcome(CommuterId),
}

/// Expected utility of `i` under its true type and the true probabilities.
///
/// Unconditional payments are subtracted from the expected value; a
/// conditional pair is settled on `i`'s own commitment, with the valuation
/// evaluated at `p_i = 1` and `p_i = 0` respectively.
pub fn expected_utility(
    s: &Scenario,
    i: CommuterId,
    schedule: &PaymentSchedule,
) -> Result<f64, UtilityError> {
    let truth = &s.commuter(i).true_type;
    let p = s.true_probabilities();
    let a = &schedule.allocation;
    let value_at = |pin: Option<f64>| {
        let lookup = |id: CommuterId| match pin {
            Some(q) if id == i => Some(q),
            _ => p.get(id.0).copied(),
        };
        truth
            .valuation
            .evaluate_with(a, lookup)
            .finite()
            .ok_or(UtilityError::ExcludedOutcome(i))
    };
    match schedule.get(i) {
        Payment::Unconditional(x) => Ok(value_at(None)? - x),
        Payment::Conditional { on_commit, on_fail } => {
            let pi = truth.p_commit;
            Ok(pi * (value_at(Some(1.0))? - on_commit) + (1.0 - pi) * (value_at(Some(0.0))? - on_fail))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    const I: CommuterId = CommuterId(0);
    const J: CommuterId = CommuterId(1);

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn unconditional(p: Payment) -> f64 {
        match p {
            Payment::Unconditional(x) => x,
            other => panic!("expected unconditional, got {other:?}"),
        }
    }

    fn pair(p: Payment) -> (f64, f64) {
        match p {
            Payment::Conditional { on_commit, on_fail } => (on_commit, on_fail),
            other => panic!("expected conditional, got {other:?}"),
        }
    }

    #[test]
    fn clarke_public_p_pays_driver_the_riders_value() {
        let s = corpus::linear_pair(-2.0, 5.0, 0.5, 0.8);
        let sched = groves_payments(&s, PivotRule::Clarke, Some(&s.true_probabilities()));
        assert!(close(unconditional(sched.get(I)), -2.0));
    }

    #[test]
    fn single_commuter_pays_nothing() {
        let s = corpus::single(0.5, 0.0);
        let sched = groves_payments(&s, PivotRule::Clarke, None);
        assert_eq!(unconditional(sched.get(I)), 0.0);
    }

    #[test]
    fn private_p_overreport_raises_transfer() {
        let truthful = corpus::linear_pair(-2.0, 5.0, 0.5, 0.8);
        let mut report = truthful.commuter(I).true_type.clone();
        report.p_commit = 1.0;
        let lying = truthful.with_report(I, report);
        let sched = groves_payments(&lying, PivotRule::Clarke, None);
        assert!(close(unconditional(sched.get(I)), -4.0));
        assert!(close(expected_utility(&lying, I, &sched).unwrap(), 3.2));
        let honest = groves_payments(&truthful, PivotRule::Clarke, None);
        assert!(close(expected_utility(&truthful, I, &honest).unwrap(), 1.2));
    }

    #[test]
    fn commit_pair_for_threshold_misreport() {
        let s = corpus::threshold_pair_misreport(-2.0, 5.0, 0.6, 0.5, 0.8, 0.6);
        let sched = commit_payments(&s);
        let (c, f) = pair(sched.get(I));
        assert!(close(c, -4.0) && close(f, 0.0), "{c} {f}");
        assert!(close(expected_utility(&s, I, &sched).unwrap(), 1.2));
    }

    #[test]
    fn commit_pair_for_linear_pair() {
        let s = corpus::linear_pair(-2.0, 5.0, 0.5, 0.8);
        let sched = commit_payments(&s);
        let (c, f) = pair(sched.get(I));
        assert!(close(c, -4.0) && close(f, 0.0));
        assert!(close(expected_utility(&s, I, &sched).unwrap(), 1.2));
    }

    #[test]
    fn bystander_gets_zero_pair() {
        let s = corpus::pair_with_bystander();
        let sched = commit_payments(&s);
        let by = CommuterId(2);
        assert_eq!(sched.get(by), Payment::Conditional { on_commit: 0.0, on_fail: 0.0 });
        assert_eq!(expected_utility(&s, by, &sched).unwrap(), 0.0);
    }

    #[test]
    fn groves_zero_public_p_hands_everyone_total_welfare() {
        for s in corpus::linear_corpus() {
            let p = s.true_probabilities();
            let sched = groves_payments(&s, PivotRule::Zero, Some(&p));
            let total: f64 = s
                .commuters
                .iter()
                .map(|c| c.true_type.valuation.evaluate(&sched.allocation, &p).finite().unwrap())
                .sum();
            for i in s.ids() {
                let u = expected_utility(&s, i, &sched).unwrap();
                assert!((u - total).abs() < 1e-12, "{}: {u} vs {total}", s.name());
            }
        }
    }

    #[test]
    fn excluded_true_value_is_flagged() {
        // Rider reports a valuation that hides its true exclusion of riding.
        let s = corpus::linear_pair(-2.0, 5.0, 0.5, 0.8);
        let mut truth = s.commuter(J).true_type.clone();
        truth.valuation.clauses[0].excluded = true;
        truth.valuation.clauses[0].terms.clear();
        let mut s2 = s.clone();
        s2.commuters[1].true_type = truth;
        let sched = commit_payments(&s2);
        assert_eq!(expected_utility(&s2, J, &sched), Err(UtilityError::ExcludedOutcome(J)));
    }

    #[test]
    fn mechanism_names_round_trip() {
        for m in Mechanism::ALL {
            assert_eq!(m.as_str().parse::<Mechanism>().unwrap(), m);
        }
        assert!("vcg".parse::<Mechanism>().is_err());
    }
}
