//! Ridesharing allocation and payment mechanisms for commuters whose trips
//! may not happen.
//!
//! Each commuter reports a commitment probability and a valuation over
//! allocation outcomes. The crate computes efficient allocations, Groves
//! style and commitment-contingent payments, simulates realized
//! commitments, and searches for profitable misreports.

pub mod allocation;
pub mod audit;
pub mod cli;
pub mod corpus;
pub mod model;
pub mod payments;
pub mod simulate;
pub mod valuation;

pub use allocation::{efficient_allocation, efficient_allocation_bnb, efficient_allocation_excluding, WelfareReport};
pub use audit::{audit_dominant, audit_expost, theorem_suite, AuditReport, DeviationSpace, Notion, Verdict};
pub use model::{
    enumerate_feasible_allocations, validate_allocation, validate_scenario, Allocation, Commuter, CommuterId, Role,
    Scenario, TripType,
};
pub use payments::{expected_utility, Mechanism, Payment, PaymentSchedule, PivotRule};
pub use simulate::{run_trials, SimulationRun};
pub use valuation::{Clause, Monomial, PartnerConstraint, ThresholdGate, ValuationSpec};
