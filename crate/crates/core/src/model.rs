//! Core domain types: commuters, trip types, allocations and scenarios.
//!
//! Schedules are abstracted to "with whom": a rider is assigned exactly one
//! driver, and a driver carries a non-empty set of riders bounded by their
//! seat capacity. Times and locations are folded into the scenario's
//! compatibility matrix and into the valuations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::valuation::ValuationSpec;

/// Dense commuter index, `0..N` within a scenario.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommuterId(pub usize);

impl CommuterId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for CommuterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Drive,
    Ride,
    None,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Drive => "drive",
            Role::Ride => "ride",
            Role::None => "none",
        })
    }
}

/// A commuter's trip: valuation plus probability of commitment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripType {
    pub p_commit: f64,
    pub valuation: ValuationSpec,
}

impl TripType {
    pub fn new(valuation: ValuationSpec, p_commit: f64) -> Self {
        Self { p_commit, valuation }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Commuter {
    pub id: CommuterId,
    pub has_vehicle: bool,
    pub seat_capacity: u32,
    pub true_type: TripType,
    pub reported_type: TripType,
}

impl Commuter {
    /// A truthful commuter: the reported type starts as a copy of the true type.
    pub fn new(id: usize, has_vehicle: bool, seat_capacity: u32, true_type: TripType) -> Self {
        Self {
            id: CommuterId(id),
            has_vehicle,
            seat_capacity,
            reported_type: true_type.clone(),
            true_type,
        }
    }

    pub fn rider(id: usize, true_type: TripType) -> Self {
        Self::new(id, false, 0, true_type)
    }

    pub fn driver(id: usize, seats: u32, true_type: TripType) -> Self {
        Self::new(id, true, seats, true_type)
    }

    pub fn with_report(mut self, reported: TripType) -> Self {
        self.reported_type = reported;
        self
    }

    /// Seats this commuter can offer when assigned to drive.
    pub fn seats(&self) -> usize {
        if self.has_vehicle {
            self.seat_capacity as usize
        } else {
            0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub role: Role,
    pub partners: BTreeSet<CommuterId>,
}

impl Assignment {
    pub fn none() -> Self {
        Self {
            role: Role::None,
            partners: BTreeSet::new(),
        }
    }
}

/// Per-commuter (role, partner set) assignment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Allocation {
    assignments: Vec<Assignment>,
}

impl Allocation {
    /// Everyone travels alone.
    pub fn all_none(n: usize) -> Self {
        Self {
            assignments: vec![Assignment::none(); n],
        }
    }

    /// Builds an allocation from a rider -> driver map. Entries that are
    /// `None` travel alone unless some rider points at them.
    pub fn from_driver_map(driver_of: &[Option<CommuterId>]) -> Self {
        let mut assignments = vec![Assignment::none(); driver_of.len()];
        for (rider, driver) in driver_of.iter().enumerate() {
            if let Some(d) = driver {
                assignments[rider].role = Role::Ride;
                assignments[rider].partners.insert(*d);
                let slot = &mut assignments[d.0];
                slot.role = Role::Drive;
                slot.partners.insert(CommuterId(rider));
            }
        }
        Self { assignments }
    }

    /// Raw constructor; the result is not checked, see [`validate_allocation`].
    pub fn from_assignments(assignments: Vec<Assignment>) -> Self {
        Self { assignments }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn get(&self, id: CommuterId) -> &Assignment {
        &self.assignments[id.0]
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn role(&self, id: CommuterId) -> Role {
        self.assignments[id.0].role
    }

    pub fn is_all_none(&self) -> bool {
        self.assignments.iter().all(|a| a.role == Role::None)
    }

    pub fn driver_of(&self, id: CommuterId) -> Option<CommuterId> {
        let a = &self.assignments[id.0];
        match a.role {
            Role::Ride => a.partners.iter().next().copied(),
            _ => None,
        }
    }

    /// Canonical encoding used for ordering: `0` for "not riding",
    /// `d + 1` for "rides with driver d".
    pub fn encoding(&self) -> Vec<usize> {
        (0..self.len())
            .map(|i| self.driver_of(CommuterId(i)).map_or(0, |d| d.0 + 1))
            .collect()
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_all_none() {
            return f.write_str("all travel alone");
        }
        let mut first = true;
        for (i, a) in self.assignments.iter().enumerate() {
            if a.role != Role::Drive {
                continue;
            }
            if !first {
                f.write_str("; ")?;
            }
            first = false;
            let riders: Vec<String> = a.partners.iter().map(|r| r.to_string()).collect();
            write!(f, "{} drives {{{}}}", i, riders.join(","))?;
        }
        Ok(())
    }
}

/// A set of commuters plus pairwise compatibility.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub commuters: Vec<Commuter>,
    /// `compatibility[i][j]`: may `i` and `j` share a vehicle at all.
    pub compatibility: Vec<Vec<bool>>,
    pub metadata: BTreeMap<String, String>,
}

impl Scenario {
    /// Scenario in which everybody is mutually compatible.
    pub fn fully_compatible(commuters: Vec<Commuter>) -> Self {
        let n = commuters.len();
        Self {
            commuters,
            compatibility: vec![vec![true; n]; n],
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, key: &str, value: &str) -> Self {
        self.metadata.insert(key.to_owned(), value.to_owned());
        self
    }

    pub fn with_incompatible(mut self, a: usize, b: usize) -> Self {
        self.compatibility[a][b] = false;
        self.compatibility[b][a] = false;
        self
    }

    pub fn len(&self) -> usize {
        self.commuters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commuters.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = CommuterId> {
        (0..self.commuters.len()).map(CommuterId)
    }

    pub fn commuter(&self, id: CommuterId) -> &Commuter {
        &self.commuters[id.0]
    }

    pub fn reported_probabilities(&self) -> Vec<f64> {
        self.commuters.iter().map(|c| c.reported_type.p_commit).collect()
    }

    pub fn true_probabilities(&self) -> Vec<f64> {
        self.commuters.iter().map(|c| c.true_type.p_commit).collect()
    }

    /// Copy of the scenario in which every commuter reports truthfully.
    pub fn truthful(&self) -> Self {
        let mut s = self.clone();
        for c in &mut s.commuters {
            c.reported_type = c.true_type.clone();
        }
        s
    }

    /// Copy of the scenario with one commuter's report replaced.
    pub fn with_report(&self, id: CommuterId, report: TripType) -> Self {
        let mut s = self.clone();
        s.commuters[id.0].reported_type = report;
        s
    }

    pub fn name(&self) -> &str {
        self.metadata.get("name").map(String::as_str).unwrap_or("unnamed")
    }
}

/// Which of a commuter's two types a violation refers to.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TypeSide {
    True,
    Reported,
}

impl fmt::Display for TypeSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TypeSide::True => "true type",
            TypeSide::Reported => "reported type",
        })
    }
}

/// A broken scenario invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Empty,
    IdOutOfPlace { position: usize, id: CommuterId },
    SeatsWithoutVehicle { commuter: CommuterId, seat_capacity: u32 },
    Probability { commuter: CommuterId, side: TypeSide, value: f64 },
    CompatibilityShape { rows: usize, expected: usize },
    Asymmetric { a: CommuterId, b: CommuterId },
    FalseDiagonal { commuter: CommuterId },
    Valuation { commuter: CommuterId, side: TypeSide, problem: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => f.write_str("scenario has no commuters"),
            Violation::IdOutOfPlace { position, id } => {
                write!(f, "commuters[{position}]: id {id} does not match its position")
            }
            Violation::SeatsWithoutVehicle { commuter, seat_capacity } => write!(
                f,
                "commuter {commuter}: seat_capacity {seat_capacity} but has_vehicle is false"
            ),
            Violation::Probability { commuter, side, value } => {
                write!(f, "commuter {commuter}: {side} p_commit {value} outside [0, 1]")
            }
            Violation::CompatibilityShape { rows, expected } => {
                write!(f, "compatibility must be {expected}x{expected}, found {rows} rows or a ragged row")
            }
            Violation::Asymmetric { a, b } => {
                write!(f, "compatibility is asymmetric at ({a}, {b})")
            }
            Violation::FalseDiagonal { commuter } => {
                write!(f, "compatibility[{commuter}][{commuter}] must be true")
            }
            Violation::Valuation { commuter, side, problem } => {
                write!(f, "commuter {commuter}: {side} valuation: {problem}")
            }
        }
    }
}

/// Every broken scenario invariant; empty iff the scenario is valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let n = s.commuters.len();
    let mut out = Vec::new();
    if n == 0 {
        out.push(Violation::Empty);
    }
    for (pos, c) in s.commuters.iter().enumerate() {
        if c.id.0 != pos {
            out.push(Violation::IdOutOfPlace { position: pos, id: c.id });
        }
        if !c.has_vehicle && c.seat_capacity != 0 {
            out.push(Violation::SeatsWithoutVehicle {
                commuter: c.id,
                seat_capacity: c.seat_capacity,
            });
        }
        for (side, ty) in [(TypeSide::True, &c.true_type), (TypeSide::Reported, &c.reported_type)] {
            if !(0.0..=1.0).contains(&ty.p_commit) {
                out.push(Violation::Probability {
                    commuter: c.id,
                    side,
                    value: ty.p_commit,
                });
            }
            for problem in ty.valuation.problems(c.id, n) {
                out.push(Violation::Valuation {
                    commuter: c.id,
                    side,
                    problem,
                });
            }
        }
    }
    let m = &s.compatibility;
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        out.push(Violation::CompatibilityShape {
            rows: m.len(),
            expected: n,
        });
        return out;
    }
    for i in 0..n {
        if !m[i][i] {
            out.push(Violation::FalseDiagonal { commuter: CommuterId(i) });
        }
        for j in (i + 1)..n {
            if m[i][j] != m[j][i] {
                out.push(Violation::Asymmetric {
                    a: CommuterId(i),
                    b: CommuterId(j),
                });
            }
        }
    }
    out
}

/// A broken allocation invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AllocationViolation {
    WrongLength { found: usize, expected: usize },
    DriverWithoutRiders(CommuterId),
    OverCapacity { driver: CommuterId, riders: usize, seats: usize },
    RiderPartnerCount(CommuterId),
    PartnerNotDriving { rider: CommuterId, driver: CommuterId },
    PartnerNotRiding { driver: CommuterId, rider: CommuterId },
    RiderNotMutual { rider: CommuterId, driver: CommuterId },
    LoneWithPartners(CommuterId),
    SelfPartner(CommuterId),
    UnknownPartner { owner: CommuterId, partner: CommuterId },
    Incompatible { rider: CommuterId, driver: CommuterId },
}

/// Checks the structural allocation invariants plus capacity and
/// compatibility against `s`.
pub fn validate_allocation(s: &Scenario, a: &Allocation) -> Vec<AllocationViolation> {
    use AllocationViolation as V;
    let n = s.len();
    if a.len() != n {
        return vec![V::WrongLength {
            found: a.len(),
            expected: n,
        }];
    }
    let mut out = Vec::new();
    for (i, asg) in a.assignments().iter().enumerate() {
        let me = CommuterId(i);
        if asg.partners.contains(&me) {
            out.push(V::SelfPartner(me));
        }
        if let Some(bad) = asg.partners.iter().find(|p| p.0 >= n) {
            out.push(V::UnknownPartner { owner: me, partner: *bad });
            continue;
        }
        match asg.role {
            Role::None => {
                if !asg.partners.is_empty() {
                    out.push(V::LoneWithPartners(me));
                }
            }
            Role::Drive => {
                if asg.partners.is_empty() {
                    out.push(V::DriverWithoutRiders(me));
                }
                let seats = s.commuters[i].seats();
                if asg.partners.len() > seats {
                    out.push(V::OverCapacity {
                        driver: me,
                        riders: asg.partners.len(),
                        seats,
                    });
                }
                for r in &asg.partners {
                    let ra = a.get(*r);
                    if ra.role != Role::Ride {
                        out.push(V::PartnerNotRiding { driver: me, rider: *r });
                    } else if ra.partners.len() != 1 || !ra.partners.contains(&me) {
                        out.push(V::RiderNotMutual { rider: *r, driver: me });
                    }
                }
            }
            Role::Ride => {
                if asg.partners.len() != 1 {
                    out.push(V::RiderPartnerCount(me));
                    continue;
                }
                let d = *asg.partners.iter().next().expect("one partner");
                let da = a.get(d);
                if da.role != Role::Drive {
                    out.push(V::PartnerNotDriving { rider: me, driver: d });
                } else if !da.partners.contains(&me) {
                    out.push(V::RiderNotMutual { rider: me, driver: d });
                }
                if d.0 != i && !s.compatibility[i][d.0] {
                    out.push(V::Incompatible { rider: me, driver: d });
                }
            }
        }
    }
    out
}

/// Every feasible allocation of `s`, in lexicographic order of
/// [`Allocation::encoding`]. The all-None allocation comes first.
pub fn enumerate_feasible_allocations(s: &Scenario) -> FeasibleAllocations<'_> {
    FeasibleAllocations::new(s, None)
}

/// As [`enumerate_feasible_allocations`] with one commuter held out: the
/// absent commuter neither drives nor rides.
pub fn enumerate_feasible_allocations_without(
    s: &Scenario,
    absent: CommuterId,
) -> FeasibleAllocations<'_> {
    FeasibleAllocations::new(s, Some(absent))
}

/// Depth-first odometer over rider -> driver maps with prefix pruning.
///
/// Digit `k` is `0` when commuter `k` does not ride, `d + 1` when it rides
/// with `d`. A choice is feasible when the driver is not the rider, is
/// present, is compatible, has a free seat, and does not itself ride.
pub struct FeasibleAllocations<'a> {
    scenario: &'a Scenario,
    absent: Option<CommuterId>,
    digits: Vec<usize>,
    load: Vec<usize>,
    started: bool,
    done: bool,
}

impl<'a> FeasibleAllocations<'a> {
    fn new(scenario: &'a Scenario, absent: Option<CommuterId>) -> Self {
        let n = scenario.len();
        Self {
            scenario,
            absent,
            digits: vec![0; n],
            load: vec![0; n],
            started: false,
            done: false,
        }
    }

    fn feasible(&self, k: usize, digit: usize) -> bool {
        if digit == 0 {
            return true;
        }
        let d = digit - 1;
        if d == k || self.absent.is_some_and(|a| a.0 == d || a.0 == k) {
            return false;
        }
        let s = self.scenario;
        if !s.compatibility[k][d] || self.load[d] >= s.commuters[d].seats() {
            return false;
        }
        // k becomes a rider: nobody before k may be riding with k.
        if self.load[k] > 0 {
            return false;
        }
        // d must not be riding (if d was already placed).
        if d < k && self.digits[d] != 0 {
            return false;
        }
        true
    }

    fn set(&mut self, k: usize, digit: usize) {
        if self.digits[k] != 0 {
            self.load[self.digits[k] - 1] -= 1;
        }
        self.digits[k] = digit;
        if digit != 0 {
            self.load[digit - 1] += 1;
        }
    }

    /// Moves to the next feasible digit vector. Positions right of the one
    /// being incremented are always zero when `feasible` is consulted, so
    /// `load` only counts riders placed earlier.
    fn advance(&mut self) -> bool {
        let n = self.digits.len();
        let mut k = n;
        while k > 0 {
            k -= 1;
            let mut next = self.digits[k] + 1;
            let mut placed = false;
            self.set(k, 0);
            while next <= n {
                if self.feasible(k, next) {
                    self.set(k, next);
                    placed = true;
                    break;
                }
                next += 1;
            }
            if placed {
                for j in (k + 1)..n {
                    self.set(j, 0);
                }
                return true;
            }
        }
        false
    }

    fn current(&self) -> Allocation {
        let map: Vec<Option<CommuterId>> = self
            .digits
            .iter()
            .map(|&d| if d == 0 { None } else { Some(CommuterId(d - 1)) })
            .collect();
        Allocation::from_driver_map(&map)
    }
}

impl Iterator for FeasibleAllocations<'_> {
    type Item = Allocation;

    fn next(&mut self) -> Option<Allocation> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.current());
        }
        if self.advance() {
            Some(self.current())
        } else {
            self.done = true;
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::ValuationSpec;

    fn trip(id: usize, p: f64) -> TripType {
        TripType::new(ValuationSpec::zero(CommuterId(id)), p)
    }

    #[test]
    fn single_commuter_is_valid() {
        let s = Scenario::fully_compatible(vec![Commuter::rider(0, trip(0, 1.0))]);
        assert!(validate_scenario(&s).is_empty());
    }

    #[test]
    fn seats_without_vehicle_is_named() {
        let mut c = Commuter::rider(0, trip(0, 1.0));
        c.seat_capacity = 2;
        let v = validate_scenario(&Scenario::fully_compatible(vec![c]));
        assert_eq!(
            v,
            vec![Violation::SeatsWithoutVehicle {
                commuter: CommuterId(0),
                seat_capacity: 2
            }]
        );
    }

    #[test]
    fn asymmetric_matrix_names_pair() {
        let mut s = Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, trip(0, 1.0)),
            Commuter::rider(1, trip(1, 1.0)),
        ]);
        s.compatibility[0][1] = false;
        let v = validate_scenario(&s);
        assert_eq!(
            v,
            vec![Violation::Asymmetric {
                a: CommuterId(0),
                b: CommuterId(1)
            }]
        );
    }

    #[test]
    fn probability_out_of_range() {
        let s = Scenario::fully_compatible(vec![Commuter::rider(0, trip(0, 1.5))]);
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 2, "both true and reported copies are flagged: {v:?}");
    }

    #[test]
    fn enumerate_small_cases() {
        let one = Scenario::fully_compatible(vec![Commuter::rider(0, trip(0, 1.0))]);
        assert_eq!(enumerate_feasible_allocations(&one).count(), 1);

        let two = Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, trip(0, 1.0)),
            Commuter::rider(1, trip(1, 1.0)),
        ]);
        let all: Vec<_> = enumerate_feasible_allocations(&two).collect();
        assert_eq!(all.len(), 2);
        assert!(all[0].is_all_none());
        assert_eq!(all[1].driver_of(CommuterId(1)), Some(CommuterId(0)));

        let blocked = two.clone().with_incompatible(0, 1);
        assert_eq!(enumerate_feasible_allocations(&blocked).count(), 1);
    }

    #[test]
    fn two_drivers_can_ride_with_each_other() {
        let s = Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, trip(0, 1.0)),
            Commuter::driver(1, 1, trip(1, 1.0)),
        ]);
        let encs: Vec<_> = enumerate_feasible_allocations(&s).map(|a| a.encoding()).collect();
        assert_eq!(encs, vec![vec![0, 0], vec![0, 1], vec![2, 0]]);
    }

    #[test]
    fn excluding_a_commuter_removes_its_rides() {
        let s = Scenario::fully_compatible(vec![
            Commuter::driver(0, 2, trip(0, 1.0)),
            Commuter::rider(1, trip(1, 1.0)),
            Commuter::rider(2, trip(2, 1.0)),
        ]);
        assert_eq!(enumerate_feasible_allocations(&s).count(), 4);
        assert_eq!(enumerate_feasible_allocations_without(&s, CommuterId(0)).count(), 1);
        assert_eq!(enumerate_feasible_allocations_without(&s, CommuterId(1)).count(), 2);
    }

    #[test]
    fn yielded_allocations_are_valid_and_sorted() {
        let s = Scenario::fully_compatible(vec![
            Commuter::driver(0, 2, trip(0, 1.0)),
            Commuter::driver(1, 1, trip(1, 1.0)),
            Commuter::rider(2, trip(2, 1.0)),
            Commuter::rider(3, trip(3, 1.0)),
        ]);
        let all: Vec<_> = enumerate_feasible_allocations(&s).collect();
        for a in &all {
            assert!(validate_allocation(&s, a).is_empty(), "{a:?}");
        }
        let encs: Vec<_> = all.iter().map(Allocation::encoding).collect();
        let mut sorted = encs.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(encs, sorted);
    }

    #[test]
    fn allocation_checker_rejects_broken_shapes() {
        let s = Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, trip(0, 1.0)),
            Commuter::rider(1, trip(1, 1.0)),
        ]);
        let lonely_driver = Allocation::from_assignments(vec![
            Assignment {
                role: Role::Drive,
                partners: BTreeSet::new(),
            },
            Assignment::none(),
        ]);
        assert!(validate_allocation(&s, &lonely_driver)
            .contains(&AllocationViolation::DriverWithoutRiders(CommuterId(0))));
        let reversed = Allocation::from_driver_map(&[Some(CommuterId(1)), None]);
        assert!(validate_allocation(&s, &reversed).iter().any(|v| matches!(
            v,
            AllocationViolation::OverCapacity { .. }
        )));
    }

    #[test]
    fn display_lists_drivers() {
        let a = Allocation::from_driver_map(&[None, Some(CommuterId(0)), Some(CommuterId(0))]);
        assert_eq!(a.to_string(), "0 drives {1,2}");
        assert_eq!(Allocation::all_none(3).to_string(), "all travel alone");
    }
}
