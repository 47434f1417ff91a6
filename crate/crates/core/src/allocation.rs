//! Efficient allocation: maximize reported expected social welfare over all
//! feasible allocations. Ties go to the first maximizer in enumeration order.

use crate::model::{
    enumerate_feasible_allocations, enumerate_feasible_allocations_without, Allocation, CommuterId,
    Scenario,
};
use crate::valuation::{ValuationSpec, Value};

#[derive(Clone, Debug, PartialEq)]
pub struct WelfareReport {
    pub allocation: Allocation,
    /// Sum of reported valuations at reported probabilities.
    pub welfare: f64,
    /// Reported value per commuter; `None` for a commuter held out of the solve.
    pub per_commuter: Vec<Option<f64>>,
}

/// Reported probability lookup with an optional absent commuter.
pub(crate) fn reported_lookup(
    s: &Scenario,
    absent: Option<CommuterId>,
) -> impl Fn(CommuterId) -> Option<f64> + '_ {
    move |id| {
        if Some(id) == absent {
            None
        } else {
            s.commuters.get(id.0).map(|c| c.reported_type.p_commit)
        }
    }
}

/// Reported values of every present commuter, or `None` if any is excluded.
fn score(s: &Scenario, a: &Allocation, absent: Option<CommuterId>) -> Option<(f64, Vec<Option<f64>>)> {
    let lookup = reported_lookup(s, absent);
    let mut per = Vec::with_capacity(s.len());
    let mut total = 0.0;
    for c in &s.commuters {
        if Some(c.id) == absent {
            per.push(None);
            continue;
        }
        let v = c.reported_type.valuation.evaluate_with(a, &lookup).finite()?;
        total += v;
        per.push(Some(v));
    }
    Some((total, per))
}

fn best_of(
    s: &Scenario,
    absent: Option<CommuterId>,
    candidates: impl Iterator<Item = Allocation>,
) -> WelfareReport {
    let mut best: Option<WelfareReport> = None;
    for a in candidates {
        let Some((welfare, per_commuter)) = score(s, &a, absent) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| welfare > b.welfare) {
            best = Some(WelfareReport {
                allocation: a,
                welfare,
                per_commuter,
            });
        }
    }
    best.unwrap_or_else(|| all_none_report(s, absent))
}

/// The all-None allocation is never excluded: an excluded travel-alone
/// clause is scored as zero here.
fn all_none_report(s: &Scenario, absent: Option<CommuterId>) -> WelfareReport {
    let a = Allocation::all_none(s.len());
    let lookup = reported_lookup(s, absent);
    let per_commuter: Vec<Option<f64>> = s
        .commuters
        .iter()
        .map(|c| {
            (Some(c.id) != absent)
                .then(|| c.reported_type.valuation.evaluate_with(&a, &lookup).finite().unwrap_or(0.0))
        })
        .collect();
    let welfare = per_commuter.iter().flatten().sum();
    WelfareReport {
        allocation: a,
        welfare,
        per_commuter,
    }
}

/// Welfare-maximizing feasible allocation under reported types.
pub fn efficient_allocation(s: &Scenario) -> WelfareReport {
    best_of(s, None, enumerate_feasible_allocations(s))
}

/// Welfare-maximizing allocation of everybody except `i`. The absent
/// commuter never commits: its probability factors read as zero and gates
/// on it fail.
pub fn efficient_allocation_excluding(s: &Scenario, i: CommuterId) -> WelfareReport {
    best_of(s, Some(i), enumerate_feasible_allocations_without(s, i))
}

/// Branch-and-bound over the same rider -> driver encoding as the
/// enumerator. Returns the same report as [`efficient_allocation`].
///
/// A commuter that rides is settled as soon as its digit is placed. Every
/// other commuter is bounded by the best value any of its clauses can take
/// at the reported probabilities.
pub fn efficient_allocation_bnb(s: &Scenario) -> WelfareReport {
    let n = s.len();
    let p = s.reported_probabilities();
    let caps: Vec<f64> = s
        .commuters
        .iter()
        .map(|c| clause_ceiling(&c.reported_type.valuation, &p))
        .collect();
    let mut search = Bnb {
        s,
        p: &p,
        caps: &caps,
        digits: vec![0; n],
        load: vec![0; n],
        best: None,
    };
    search.descend(0);
    search.best.unwrap_or_else(|| all_none_report(s, None))
}

/// Upper bound on a valuation over all outcomes at fixed probabilities.
/// A gated-off clause is worth zero, hence the floor.
fn clause_ceiling(v: &ValuationSpec, p: &[f64]) -> f64 {
    let lookup = |id: CommuterId| p.get(id.0).copied();
    v.clauses
        .iter()
        .filter(|c| !c.excluded)
        .map(|c| c.terms.iter().map(|m| m.eval(&lookup)).sum::<f64>())
        .fold(v.default_value.max(0.0), f64::max)
}

struct Bnb<'a> {
    s: &'a Scenario,
    p: &'a [f64],
    caps: &'a [f64],
    digits: Vec<usize>,
    load: Vec<usize>,
    best: Option<WelfareReport>,
}

impl Bnb<'_> {
    fn allowed(&self, k: usize, digit: usize) -> bool {
        if digit == 0 {
            return true;
        }
        let d = digit - 1;
        d != k
            && self.s.compatibility[k][d]
            && self.load[d] < self.s.commuters[d].seats()
            && self.load[k] == 0
            && !(d < k && self.digits[d] != 0)
    }

    fn bound(&self, placed: usize) -> f64 {
        let map = self.driver_map();
        let partial = Allocation::from_driver_map(&map);
        let mut total = 0.0;
        for (i, c) in self.s.commuters.iter().enumerate() {
            let settled = i < placed && self.digits[i] != 0;
            if settled {
                match c.reported_type.valuation.evaluate(&partial, self.p) {
                    Value::Finite(v) => total += v,
                    Value::Excluded => return f64::NEG_INFINITY,
                }
            } else {
                total += self.caps[i];
            }
        }
        total
    }

    fn driver_map(&self) -> Vec<Option<CommuterId>> {
        self.digits
            .iter()
            .map(|&d| (d != 0).then(|| CommuterId(d - 1)))
            .collect()
    }

    fn descend(&mut self, k: usize) {
        let n = self.digits.len();
        if k == n {
            let a = Allocation::from_driver_map(&self.driver_map());
            if let Some((welfare, per_commuter)) = score(self.s, &a, None) {
                if self.best.as_ref().is_none_or(|b| welfare > b.welfare) {
                    self.best = Some(WelfareReport {
                        allocation: a,
                        welfare,
                        per_commuter,
                    });
                }
            }
            return;
        }
        for digit in 0..=n {
            if !self.allowed(k, digit) {
                continue;
            }
            self.digits[k] = digit;
            if digit != 0 {
                self.load[digit - 1] += 1;
            }
            let prune = match &self.best {
                // Equal-welfare allocations later in order never replace the
                // incumbent. The slack absorbs rounding in the bound's sum.
                Some(b) => {
                    let ub = self.bound(k + 1);
                    ub + 1e-9 * (1.0 + ub.abs()) < b.welfare
                }
                None => false,
            };
            if !prune {
                self.descend(k + 1);
            }
            if digit != 0 {
                self.load[digit - 1] -= 1;
            }
            self.digits[k] = 0;
        }
    }
}
