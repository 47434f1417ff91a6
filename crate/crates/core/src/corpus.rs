//! Bundled scenarios: the two-commuter driver/rider cases, their linear,
//! constant, threshold and quadratic variants, and a set of small
//! all-linear scenarios with up to four commuters.
//!
//! Every linear scenario keeps travel-alone values non-negative and only
//! references another commuter's probability where that commuter shares
//! the ride (or adds a positive externality), so truthful participation is
//! individually rational.

use crate::model::{Commuter, CommuterId, Role, Scenario, TripType};
use crate::valuation::{Clause, Monomial, PartnerConstraint, ThresholdGate, ValuationSpec};

fn id(i: usize) -> CommuterId {
    CommuterId(i)
}

fn exact(ids: &[usize]) -> PartnerConstraint {
    PartnerConstraint::Exact(ids.iter().map(|&i| CommuterId(i)).collect())
}

fn prod(coefficient: f64, ids: &[usize]) -> Monomial {
    Monomial::product(coefficient, &ids.iter().map(|&i| CommuterId(i)).collect::<Vec<_>>())
}

/// Clause "owner drives exactly `riders`" worth `coefficient * p_owner * prod p_r`.
fn drives(owner: usize, riders: &[usize], coefficient: f64) -> Clause {
    let mut subjects = vec![owner];
    subjects.extend_from_slice(riders);
    Clause::new(Role::Drive, exact(riders)).term(prod(coefficient, &subjects))
}

/// Clause "owner rides with `driver`" worth `coefficient * p_driver * p_owner`.
fn rides(owner: usize, driver: usize, coefficient: f64) -> Clause {
    Clause::new(Role::Ride, exact(&[driver])).term(prod(coefficient, &[driver, owner]))
}

fn alone(value: f64) -> Clause {
    let c = Clause::new(Role::None, PartnerConstraint::Any);
    if value == 0.0 {
        c
    } else {
        c.term(Monomial::constant(value))
    }
}

fn no_ride() -> Clause {
    Clause::excluded(Role::Ride, PartnerConstraint::Any)
}

fn no_drive() -> Clause {
    Clause::excluded(Role::Drive, PartnerConstraint::Any)
}

fn spec(owner: usize, clauses: Vec<Clause>) -> ValuationSpec {
    clauses
        .into_iter()
        .fold(ValuationSpec::new(id(owner)), ValuationSpec::clause)
}

fn named(s: Scenario, name: &str) -> Scenario {
    s.with_label("name", name)
}

/// One commuter without a vehicle whose travel-alone value is `alone_value`.
pub fn single(p: f64, alone_value: f64) -> Scenario {
    let v = spec(0, vec![alone(alone_value)]);
    named(
        Scenario::fully_compatible(vec![Commuter::rider(0, TripType::new(v, p))]),
        "single",
    )
}

/// Driver 0 (one seat) and rider 1 with `v_0 = alpha p0 p1` when 1 rides
/// with 0 and `v_1 = beta p0 p1`, both zero alone.
pub fn linear_pair(alpha: f64, beta: f64, p_driver: f64, p_rider: f64) -> Scenario {
    let v0 = spec(0, vec![drives(0, &[1], alpha), no_ride(), alone(0.0)]);
    let v1 = spec(1, vec![rides(1, 0, beta), no_drive(), alone(0.0)]);
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, TripType::new(v0, p_driver)),
            Commuter::rider(1, TripType::new(v1, p_rider)),
        ]),
        "linear-pair",
    )
}

/// Rider valuation `beta p0 p1` if `p0 >= r`, otherwise zero.
pub fn threshold_rider(beta: f64, r: f64) -> ValuationSpec {
    spec(
        1,
        vec![
            rides(1, 0, beta).gate(ThresholdGate::at_least(id(0), r)),
            no_drive(),
            alone(0.0),
        ],
    )
}

/// The driver/rider pair where the rider only values the ride when the
/// driver's commitment probability reaches `r`.
pub fn threshold_pair(alpha: f64, beta: f64, r: f64, p_driver: f64, p_rider: f64) -> Scenario {
    let v0 = spec(0, vec![drives(0, &[1], alpha), no_ride(), alone(0.0)]);
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, TripType::new(v0, p_driver)),
            Commuter::rider(1, TripType::new(threshold_rider(beta, r), p_rider)),
        ]),
        "threshold-pair",
    )
}

/// [`threshold_pair`] with the driver reporting `p_hat` instead of her true
/// probability.
pub fn threshold_pair_misreport(
    alpha: f64,
    beta: f64,
    r: f64,
    p_driver: f64,
    p_rider: f64,
    p_hat: f64,
) -> Scenario {
    let mut s = threshold_pair(alpha, beta, r, p_driver, p_rider);
    s.commuters[0].reported_type.p_commit = p_hat;
    named(s, "threshold-pair-misreport")
}

/// Driver/rider pair where the rider's value is quadratic in the driver's
/// probability: `beta p0^2 p1`.
pub fn quadratic_pair(alpha: f64, beta: f64, p_driver: f64, p_rider: f64) -> Scenario {
    let v0 = spec(0, vec![drives(0, &[1], alpha), no_ride(), alone(0.0)]);
    let v1 = spec(
        1,
        vec![
            Clause::new(Role::Ride, exact(&[0]))
                .term(Monomial::constant(beta).with_factor(id(0), 2).with_factor(id(1), 1)),
            no_drive(),
            alone(0.0),
        ],
    );
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, TripType::new(v0, p_driver)),
            Commuter::rider(1, TripType::new(v1, p_rider)),
        ]),
        "quadratic-pair",
    )
}

/// Driver/rider pair with probability-free valuations.
pub fn constant_pair(cost: f64, benefit: f64, p_driver: f64, p_rider: f64) -> Scenario {
    let v0 = spec(
        0,
        vec![
            Clause::new(Role::Drive, exact(&[1])).term(Monomial::constant(cost)),
            no_ride(),
            alone(0.0),
        ],
    );
    let v1 = spec(
        1,
        vec![
            Clause::new(Role::Ride, exact(&[0])).term(Monomial::constant(benefit)),
            no_drive(),
            alone(0.0),
        ],
    );
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, TripType::new(v0, p_driver)),
            Commuter::rider(1, TripType::new(v1, p_rider)),
        ]),
        "constant-pair",
    )
}

/// Two one-seat drivers and a rider; the drivers may also ride with each other.
pub fn two_drivers_one_rider() -> Scenario {
    let v0 = spec(
        0,
        vec![
            drives(0, &[2], -1.5),
            drives(0, &[1], -0.5),
            rides(0, 1, 0.8),
            alone(0.0),
        ],
    );
    let v1 = spec(
        1,
        vec![
            drives(1, &[2], -1.0),
            drives(1, &[0], -0.4),
            rides(1, 0, 0.6),
            alone(0.0),
        ],
    );
    let v2 = spec(2, vec![rides(2, 0, 4.0), rides(2, 1, 3.0), no_drive(), alone(0.0)]);
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, TripType::new(v0, 0.7)),
            Commuter::driver(1, 1, TripType::new(v1, 0.9)),
            Commuter::rider(2, TripType::new(v2, 0.6)),
        ]),
        "two-drivers-one-rider",
    )
}

/// The linear pair plus an incompatible commuter nobody's valuation mentions.
pub fn pair_with_bystander() -> Scenario {
    let mut base = linear_pair(-2.0, 5.0, 0.5, 0.8);
    let v2 = spec(2, vec![alone(0.0)]);
    base.commuters.push(Commuter::rider(2, TripType::new(v2, 0.3)));
    base.compatibility = vec![
        vec![true, true, false],
        vec![true, true, false],
        vec![false, false, true],
    ];
    named(base, "pair-with-bystander")
}

fn one_driver_two_riders() -> Scenario {
    let v0 = spec(
        0,
        vec![
            drives(0, &[1], -1.0),
            drives(0, &[2], -1.0),
            Clause::new(Role::Drive, PartnerConstraint::AtLeast(2)).term(prod(-2.5, &[0, 1, 2])),
            no_ride(),
            alone(0.0),
        ],
    );
    let v1 = spec(1, vec![rides(1, 0, 2.0), no_drive(), alone(0.2)]);
    let v2 = spec(2, vec![rides(2, 0, 1.5), no_drive(), alone(0.0)]);
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 2, TripType::new(v0, 0.9)),
            Commuter::rider(1, TripType::new(v1, 0.7)),
            Commuter::rider(2, TripType::new(v2, 0.5)),
        ]),
        "one-driver-two-riders",
    )
}

fn compatibility_blocked() -> Scenario {
    let v0 = spec(0, vec![drives(0, &[1], -1.0), drives(0, &[2], -1.5), no_ride(), alone(0.0)]);
    let v1 = spec(1, vec![rides(1, 0, 5.0), no_drive(), alone(0.0)]);
    let v2 = spec(2, vec![rides(2, 0, 2.0), no_drive(), alone(0.0)]);
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, TripType::new(v0, 0.8)),
            Commuter::rider(1, TripType::new(v1, 0.9)),
            Commuter::rider(2, TripType::new(v2, 0.6)),
        ])
        .with_incompatible(0, 1),
        "compatibility-blocked",
    )
}

fn unprofitable_sharing() -> Scenario {
    named(linear_pair(-3.0, 2.0, 0.6, 0.7), "unprofitable-sharing")
}

fn four_commuters() -> Scenario {
    let v0 = spec(
        0,
        vec![
            drives(0, &[2], -1.0),
            drives(0, &[3], -0.8),
            drives(0, &[1], -0.6),
            Clause::new(Role::Drive, PartnerConstraint::AtLeast(2)).term(prod(-1.2, &[0])),
            no_ride(),
            alone(0.0),
        ],
    );
    let v1 = spec(
        1,
        vec![
            drives(1, &[2], -0.7),
            drives(1, &[3], -0.9),
            rides(1, 0, 0.9),
            alone(0.1),
        ],
    );
    let v2 = spec(2, vec![rides(2, 0, 2.0), rides(2, 1, 2.5), no_drive(), alone(0.0)]);
    let v3 = spec(3, vec![rides(3, 0, 1.8), rides(3, 1, 1.2), no_drive(), alone(0.3)]);
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 2, TripType::new(v0, 0.8)),
            Commuter::driver(1, 1, TripType::new(v1, 0.6)),
            Commuter::rider(2, TripType::new(v2, 0.9)),
            Commuter::rider(3, TripType::new(v3, 0.5)),
        ]),
        "four-commuters",
    )
}

/// The rider falls back to public transport when the driver does not show:
/// `2 p0 p1 + 0.3 (1 - p0) p1`.
fn transit_fallback() -> Scenario {
    let v0 = spec(
        0,
        vec![
            Clause::new(Role::Drive, exact(&[1]))
                .term(Monomial::constant(0.5))
                .term(prod(-0.6, &[0, 1])),
            no_ride(),
            alone(0.5),
        ],
    );
    let v1 = spec(
        1,
        vec![
            Clause::new(Role::Ride, exact(&[0]))
                .term(prod(2.0, &[0, 1]))
                .term(prod(0.3, &[1]))
                .term(prod(-0.3, &[0, 1])),
            no_drive(),
            Clause::new(Role::None, PartnerConstraint::Any).term(prod(0.4, &[1])),
        ],
    );
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, TripType::new(v0, 0.7)),
            Commuter::rider(1, TripType::new(v1, 0.85)),
        ]),
        "transit-fallback",
    )
}

fn high_reliability() -> Scenario {
    let v0 = spec(
        0,
        vec![
            drives(0, &[1], -1.0),
            drives(0, &[2], -1.0),
            Clause::new(Role::Drive, exact(&[1, 2])).term(prod(-1.8, &[0, 1, 2])),
            no_ride(),
            alone(0.0),
        ],
    );
    let v1 = spec(1, vec![rides(1, 0, 1.5), no_drive(), alone(0.0)]);
    let v2 = spec(2, vec![rides(2, 0, 1.1), no_drive(), alone(0.0)]);
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 2, TripType::new(v0, 0.95)),
            Commuter::rider(1, TripType::new(v1, 1.0)),
            Commuter::rider(2, TripType::new(v2, 0.9)),
        ]),
        "high-reliability",
    )
}

/// Rider 2 also gains when rider 1 commits (shared fuel), whether or not
/// they end up in the same car.
fn rider_externality() -> Scenario {
    let v0 = spec(
        0,
        vec![
            drives(0, &[1], -1.0),
            drives(0, &[2], -1.0),
            Clause::new(Role::Drive, exact(&[1, 2])).term(prod(-2.2, &[0, 1, 2])),
            no_ride(),
            alone(0.0),
        ],
    );
    let v1 = spec(1, vec![rides(1, 0, 1.6), no_drive(), alone(0.0)]);
    let v2 = spec(
        2,
        vec![
            Clause::new(Role::Ride, exact(&[0]))
                .term(prod(1.2, &[0, 2]))
                .term(prod(0.5, &[0, 1, 2])),
            no_drive(),
            alone(0.0),
        ],
    );
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 2, TripType::new(v0, 0.75)),
            Commuter::rider(1, TripType::new(v1, 0.6)),
            Commuter::rider(2, TripType::new(v2, 0.8)),
        ]),
        "rider-externality",
    )
}

fn low_probability() -> Scenario {
    let v0 = spec(0, vec![drives(0, &[2], -0.5), rides(0, 1, 0.2), alone(0.0)]);
    let v1 = spec(1, vec![drives(1, &[2], -0.4), drives(1, &[0], -0.3), alone(0.0)]);
    let v2 = spec(2, vec![rides(2, 0, 1.0), rides(2, 1, 0.8), no_drive(), alone(0.05)]);
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, TripType::new(v0, 0.15)),
            Commuter::driver(1, 1, TripType::new(v1, 0.3)),
            Commuter::rider(2, TripType::new(v2, 0.2)),
        ]),
        "low-probability",
    )
}

fn two_cars_two_riders() -> Scenario {
    let v0 = spec(0, vec![drives(0, &[2], -1.2), drives(0, &[3], -1.0), no_ride(), alone(0.0)]);
    let v1 = spec(1, vec![drives(1, &[2], -0.9), drives(1, &[3], -1.1), no_ride(), alone(0.0)]);
    let v2 = spec(2, vec![rides(2, 0, 2.4), rides(2, 1, 1.9), no_drive(), alone(0.0)]);
    let v3 = spec(3, vec![rides(3, 0, 2.0), rides(3, 1, 2.6), no_drive(), alone(0.0)]);
    named(
        Scenario::fully_compatible(vec![
            Commuter::driver(0, 1, TripType::new(v0, 0.65)),
            Commuter::driver(1, 1, TripType::new(v1, 0.85)),
            Commuter::rider(2, TripType::new(v2, 0.7)),
            Commuter::rider(3, TripType::new(v3, 0.55)),
        ])
        .with_incompatible(0, 3),
        "two-cars-two-riders",
    )
}

/// Rider-only scenario: nobody can share, valuations constant.
fn no_vehicles() -> Scenario {
    let v0 = spec(0, vec![alone(0.4)]);
    let v1 = spec(1, vec![alone(0.0)]);
    named(
        Scenario::fully_compatible(vec![
            Commuter::rider(0, TripType::new(v0, 0.5)),
            Commuter::rider(1, TripType::new(v1, 0.5)),
        ]),
        "no-vehicles",
    )
}

/// Scenarios in which every valuation is linear in commitment.
pub fn linear_corpus() -> Vec<Scenario> {
    vec![
        linear_pair(-2.0, 5.0, 0.5, 0.8),
        constant_pair(-1.0, 3.0, 0.4, 0.9),
        two_drivers_one_rider(),
        one_driver_two_riders(),
        compatibility_blocked(),
        unprofitable_sharing(),
        four_commuters(),
        transit_fallback(),
        high_reliability(),
        rider_externality(),
        low_probability(),
        two_cars_two_riders(),
        pair_with_bystander(),
        no_vehicles(),
        single(0.7, 0.3),
    ]
}

/// Scenarios containing a valuation that is not linear in commitment.
pub fn nonlinear_corpus() -> Vec<Scenario> {
    vec![
        threshold_pair(-2.0, 5.0, 0.6, 0.5, 0.8),
        quadratic_pair(-3.0, 5.0, 0.5, 0.8),
    ]
}

pub fn all_scenarios() -> Vec<Scenario> {
    let mut out = linear_corpus();
    out.extend(nonlinear_corpus());
    out.push(threshold_pair_misreport(-2.0, 5.0, 0.6, 0.5, 0.8, 0.6));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_scenario;

    #[test]
    fn corpus_is_valid_and_named() {
        let all = all_scenarios();
        for s in &all {
            assert!(validate_scenario(s).is_empty(), "{}: {:?}", s.name(), validate_scenario(s));
        }
        let mut names: Vec<_> = all.iter().map(|s| s.name().to_owned()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), all.len());
    }

    #[test]
    fn linear_corpus_is_linear() {
        let linear = linear_corpus();
        assert!(linear.len() >= 10);
        for s in &linear {
            assert!(s.len() <= 4);
            for c in &s.commuters {
                assert!(c.true_type.valuation.is_linear_in_commitment(), "{} / {}", s.name(), c.id);
            }
        }
        for s in nonlinear_corpus() {
            assert!(s.commuters.iter().any(|c| !c.true_type.valuation.is_linear_in_commitment()));
        }
    }
}
