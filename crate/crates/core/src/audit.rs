//! Brute-force deviation search for ex-post and dominant-strategy
//! truthfulness, plus the bundled theorem suite.
//!
//! A deviation rescales the reported monomial coefficients, moves the
//! reported commitment probability along a uniform grid, and optionally
//! drops or adds one threshold gate. `NoViolationFound` is always relative
//! to the grid that was searched.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::allocation::efficient_allocation_excluding;
use crate::corpus;
use crate::model::{enumerate_feasible_allocations, Allocation, CommuterId, Scenario, TripType};
use crate::payments::{expected_utility, Mechanism, Payment, UtilityError};
use crate::valuation::{lattice_value, ThresholdGate};

/// A deviation must beat truthful reporting by more than this.
pub const GAIN_TOLERANCE: f64 = 1e-9;
/// Beyond this many scalable monomials, one common scale is used.
pub const MAX_SCALED_MONOMIALS: usize = 4;
/// Bounds tried when adding a gate.
pub const ADDED_GATE_BOUNDS: [f64; 3] = [0.25, 0.5, 0.75];
/// Largest scenario `audit_dominant` accepts.
pub const DOMINANT_MAX_COMMUTERS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationSpace {
    pub p_grid: usize,
    pub coefficient_scales: Vec<f64>,
    pub gate_toggles: bool,
}

impl Default for DeviationSpace {
    fn default() -> Self {
        Self {
            p_grid: 21,
            // Identity first, so among equal gains the plainest misreport wins.
            coefficient_scales: vec![1.0, 0.0, 0.5, 2.0, 10.0],
            gate_toggles: true,
        }
    }
}

impl DeviationSpace {
    pub fn with_grid(p_grid: usize) -> Self {
        Self {
            p_grid,
            ..Self::default()
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Notion {
    Dominant,
    ExPost,
}

impl fmt::Display for Notion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Notion::Dominant => "dominant",
            Notion::ExPost => "expost",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoViolationFound,
    Violated,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::NoViolationFound => "no violation found",
            Verdict::Violated => "violated",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GateEdit {
    Keep,
    Drop { clause: usize },
    Add { clause: usize, gate: ThresholdGate },
}

/// One point of the deviation space, applied to a truthful type.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Deviation {
    pub p_index: usize,
    pub p_hat: f64,
    pub gate: GateEdit,
    /// Scale per scalable monomial, in clause/term order.
    pub scales: Vec<f64>,
}

impl Deviation {
    pub fn apply(&self, truth: &TripType) -> TripType {
        let mut out = truth.clone();
        out.p_commit = self.p_hat;
        let mut k = 0;
        let common = self.scales.len() == 1;
        for c in out.valuation.clauses.iter_mut().filter(|c| !c.excluded) {
            for m in c.terms.iter_mut().filter(|m| m.coefficient != 0.0) {
                let s = if common { self.scales[0] } else { self.scales[k] };
                m.coefficient *= s;
                k += 1;
            }
        }
        match &self.gate {
            GateEdit::Keep => {}
            GateEdit::Drop { clause } => out.valuation.clauses[*clause].gates.clear(),
            GateEdit::Add { clause, gate } => out.valuation.clauses[*clause].gates.push(*gate),
        }
        out
    }
}

impl fmt::Display for Deviation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p_hat={} scales={:?}", self.p_hat, self.scales)?;
        match &self.gate {
            GateEdit::Keep => Ok(()),
            GateEdit::Drop { clause } => write!(f, " drop-gates(clause {clause})"),
            GateEdit::Add { clause, gate } => write!(
                f,
                " add-gate(clause {clause}: p_{} {:?} {})",
                gate.subject, gate.direction, gate.bound
            ),
        }
    }
}

fn gate_edits(truth: &TripType) -> Vec<GateEdit> {
    let v = &truth.valuation;
    let mut out = vec![GateEdit::Keep];
    for (ci, c) in v.clauses.iter().enumerate() {
        if c.excluded || c.terms.is_empty() {
            continue;
        }
        if !c.gates.is_empty() {
            out.push(GateEdit::Drop { clause: ci });
            continue;
        }
        let mut subjects: Vec<CommuterId> = c
            .terms
            .iter()
            .flat_map(|m| m.factors.iter().map(|f| f.subject))
            .filter(|&s| s != v.owner)
            .collect();
        subjects.sort();
        subjects.dedup();
        for s in subjects {
            for b in ADDED_GATE_BOUNDS {
                out.push(GateEdit::Add {
                    clause: ci,
                    gate: ThresholdGate::at_least(s, b),
                });
            }
        }
    }
    out
}

fn scale_combos(truth: &TripType, scales: &[f64]) -> Vec<Vec<f64>> {
    let slots = truth
        .valuation
        .clauses
        .iter()
        .filter(|c| !c.excluded)
        .flat_map(|c| c.terms.iter())
        .filter(|m| m.coefficient != 0.0)
        .count();
    if slots == 0 {
        return vec![vec![1.0]];
    }
    if slots > MAX_SCALED_MONOMIALS {
        return scales.iter().map(|&s| vec![s]).collect();
    }
    let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..slots {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                scales.iter().map(move |&s| {
                    let mut next = prefix.clone();
                    next.push(s);
                    next
                })
            })
            .collect();
    }
    combos
}

/// Every deviation for `truth`, ordered by (p index, gate edit, scales).
pub fn deviations(truth: &TripType, space: &DeviationSpace) -> Vec<Deviation> {
    let edits = if space.gate_toggles {
        gate_edits(truth)
    } else {
        vec![GateEdit::Keep]
    };
    let combos = scale_combos(truth, &space.coefficient_scales);
    let mut out = Vec::with_capacity(space.p_grid * edits.len() * combos.len());
    for k in 0..space.p_grid {
        let p_hat = lattice_value(k, space.p_grid);
        for e in &edits {
            for sc in &combos {
                out.push(Deviation {
                    p_index: k,
                    p_hat,
                    gate: e.clone(),
                    scales: sc.clone(),
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub commuter: CommuterId,
    pub deviation: Deviation,
    pub reported: TripType,
    /// Everyone's reports other than the deviator's, when they differ from
    /// the truth (dominant-strategy audits only).
    pub opponents: Option<Vec<TripType>>,
    pub truthful_utility: f64,
    pub deviated_utility: f64,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub mechanism: Mechanism,
    pub notion: Notion,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub p_grid: usize,
    pub profiles_checked: u64,
    /// Profiles skipped because a true valuation excluded the outcome.
    pub flagged: u64,
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} / {}: {} ({} profiles, p-grid {}, {} flagged)",
            self.mechanism, self.notion, self.verdict, self.profiles_checked, self.p_grid, self.flagged
        )?;
        if let Some(w) = &self.witness {
            writeln!(f, "witness: commuter {} reports {}", w.commuter, w.deviation)?;
            writeln!(f, "  truthful utility {}", w.truthful_utility + 0.0)?;
            writeln!(f, "  deviated utility {}", w.deviated_utility + 0.0)?;
            writeln!(f, "  gain {}", w.gain + 0.0)?;
            if w.opponents.is_some() {
                writeln!(f, "  (against misreporting opponents)")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuditError {
    #[error("dominant-strategy audit is limited to {max} commuters, scenario has {found}")]
    TooLarge { found: usize, max: usize },
}

/// Utility of one commuter as a function of her own report, everyone
/// else's reports held fixed. Caches what does not depend on that report:
/// the feasible set, the pivot term and, per reported probability, the
/// others' reported values at every allocation.
struct ResponseEvaluator<'a> {
    /// Scenario with the mechanism's probability regime already applied.
    base: Scenario,
    truth: &'a Scenario,
    i: CommuterId,
    mechanism: Mechanism,
    candidates: Vec<Allocation>,
    pivot: f64,
    others_at: HashMap<u64, Vec<Option<Vec<f64>>>>,
    pinned: HashMap<(usize, bool), f64>,
}

impl<'a> ResponseEvaluator<'a> {
    fn new(truth: &'a Scenario, reports: &Scenario, i: CommuterId, mechanism: Mechanism) -> Self {
        let mut base = reports.clone();
        if mechanism.uses_public_p() {
            for (c, t) in base.commuters.iter_mut().zip(&truth.commuters) {
                c.reported_type.p_commit = t.true_type.p_commit;
            }
        }
        let pivot = match mechanism {
            Mechanism::GrovesZero | Mechanism::GrovesZeroPublicP => 0.0,
            _ => efficient_allocation_excluding(&base, i).welfare,
        };
        let candidates = enumerate_feasible_allocations(&base).collect();
        Self {
            base,
            truth,
            i,
            mechanism,
            candidates,
            pivot,
            others_at: HashMap::new(),
            pinned: HashMap::new(),
        }
    }

    fn reported_p(&self, report: &TripType) -> f64 {
        if self.mechanism.uses_public_p() {
            self.truth.commuters[self.i.0].true_type.p_commit
        } else {
            report.p_commit
        }
    }

    fn others_values(&mut self, p_hat: f64) -> &Vec<Option<Vec<f64>>> {
        let (base, i, candidates) = (&self.base, self.i, &self.candidates);
        self.others_at.entry(p_hat.to_bits()).or_insert_with(|| {
            let lookup = |id: CommuterId| {
                if id == i {
                    Some(p_hat)
                } else {
                    base.commuters.get(id.0).map(|c| c.reported_type.p_commit)
                }
            };
            candidates
                .iter()
                .map(|a| {
                    base.commuters
                        .iter()
                        .map(|c| {
                            if c.id == i {
                                Some(0.0)
                            } else {
                                c.reported_type.valuation.evaluate_with(a, lookup).finite()
                            }
                        })
                        .collect()
                })
                .collect()
        })
    }

    /// Others' reported welfare at candidate `k` with `i` pinned to 1 or 0.
    fn pinned_others(&mut self, k: usize, commit: bool) -> f64 {
        let (base, i, candidates) = (&self.base, self.i, &self.candidates);
        *self.pinned.entry((k, commit)).or_insert_with(|| {
            let pin = if commit { 1.0 } else { 0.0 };
            let lookup = |id: CommuterId| {
                if id == i {
                    Some(pin)
                } else {
                    base.commuters.get(id.0).map(|c| c.reported_type.p_commit)
                }
            };
            base.commuters
                .iter()
                .filter(|c| c.id != i)
                .map(|c| {
                    c.reported_type
                        .valuation
                        .evaluate_with(&candidates[k], lookup)
                        .finite()
                        .unwrap_or(0.0)
                })
                .sum()
        })
    }

    /// Expected utility of `i` (true type, true probabilities) when she
    /// reports `report`. Mirrors `Mechanism::run` + `expected_utility`.
    fn utility(&mut self, report: &TripType) -> Result<f64, UtilityError> {
        let i = self.i;
        let p_hat = self.reported_p(report);
        let mut own_lookup_p: Vec<f64> = self.base.reported_probabilities();
        own_lookup_p[i.0] = p_hat;
        let own: Vec<Option<f64>> = self
            .candidates
            .iter()
            .map(|a| report.valuation.evaluate(a, &own_lookup_p).finite())
            .collect();
        let others = self.others_values(p_hat).clone();
        let mut best: Option<(usize, f64)> = None;
        for (k, (row, mine)) in others.iter().zip(&own).enumerate() {
            let (Some(row), Some(mine)) = (row, mine) else {
                continue;
            };
            // Same summation order as the allocator: commuter id order.
            let mut total = 0.0;
            for (j, v) in row.iter().enumerate() {
                total += if j == i.0 { *mine } else { *v };
            }
            if best.is_none_or(|(_, w)| total > w) {
                best = Some((k, total));
            }
        }
        let k = match best {
            Some((k, _)) => k,
            None => return self.fallback_utility(report),
        };
        let payment = match self.mechanism {
            Mechanism::CommitBased => Payment::Conditional {
                on_commit: self.pivot - self.pinned_others(k, true),
                on_fail: self.pivot - self.pinned_others(k, false),
            },
            _ => {
                let row = others[k].as_ref().expect("scored row");
                let v_others: f64 = row
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i.0)
                    .map(|(_, v)| *v)
                    .sum();
                Payment::Unconditional(self.pivot - v_others)
            }
        };
        let allocation = self.candidates[k].clone();
        utility_of(self.truth, i, &allocation, payment)
    }

    /// No candidate survived (every allocation excluded by some report):
    /// defer to the reference path.
    fn fallback_utility(&self, report: &TripType) -> Result<f64, UtilityError> {
        let s = self.base.with_report(self.i, report.clone());
        let sched = self.mechanism.run(&s);
        expected_utility(&with_truth(self.truth, &s), self.i, &sched)
    }
}

/// Scenario with `reports`' reported types and `truth`'s true types.
fn with_truth(truth: &Scenario, reports: &Scenario) -> Scenario {
    let mut s = reports.clone();
    for (c, t) in s.commuters.iter_mut().zip(&truth.commuters) {
        c.true_type = t.true_type.clone();
    }
    s
}

fn utility_of(truth: &Scenario, i: CommuterId, a: &Allocation, payment: Payment) -> Result<f64, UtilityError> {
    let sched = crate::payments::PaymentSchedule {
        allocation: a.clone(),
        entries: truth.ids().map(|j| if j == i { payment } else { Payment::Unconditional(0.0) }).collect(),
    };
    expected_utility(truth, i, &sched)
}

/// Recomputes both sides of a witness from scratch through
/// `Mechanism::run` and `expected_utility`. Returns (truthful, deviated).
pub fn replay(s: &Scenario, mechanism: Mechanism, w: &Witness) -> Result<(f64, f64), UtilityError> {
    let mut reports = s.truthful();
    if let Some(opps) = &w.opponents {
        for (c, r) in reports.commuters.iter_mut().zip(opps) {
            c.reported_type = r.clone();
        }
    }
    let honest = reports.with_report(w.commuter, s.commuter(w.commuter).true_type.clone());
    let lying = reports.with_report(w.commuter, w.reported.clone());
    let u_honest = expected_utility(&honest, w.commuter, &mechanism.run(&honest))?;
    let u_lying = expected_utility(&lying, w.commuter, &mechanism.run(&lying))?;
    Ok((u_honest, u_lying))
}

/// Best deviation found for one (commuter, opponent profile) cell.
struct CellResult {
    best: Option<Witness>,
    checked: u64,
    flagged: u64,
}

fn search_cell(
    s: &Scenario,
    reports: &Scenario,
    opponents: Option<Vec<TripType>>,
    i: CommuterId,
    mechanism: Mechanism,
    devs: &[Deviation],
) -> CellResult {
    let mut eval = ResponseEvaluator::new(s, reports, i, mechanism);
    let truth = &s.commuter(i).true_type;
    let mut out = CellResult {
        best: None,
        checked: 0,
        flagged: 0,
    };
    let honest = match eval.utility(truth) {
        Ok(u) => u,
        Err(_) => {
            out.flagged += 1;
            return out;
        }
    };
    for d in devs {
        let report = d.apply(truth);
        out.checked += 1;
        let u = match eval.utility(&report) {
            Ok(u) => u,
            Err(_) => {
                out.flagged += 1;
                continue;
            }
        };
        let gain = u - honest;
        if gain > GAIN_TOLERANCE && out.best.as_ref().is_none_or(|b| gain > b.gain) {
            out.best = Some(Witness {
                commuter: i,
                deviation: d.clone(),
                reported: report,
                opponents: opponents.clone(),
                truthful_utility: honest,
                deviated_utility: u,
                gain,
            });
        }
    }
    out
}

struct Cell {
    i: CommuterId,
    reports: Scenario,
    opponents: Option<Vec<TripType>>,
}

fn run_cells(s: &Scenario, mechanism: Mechanism, notion: Notion, space: &DeviationSpace, cells: Vec<Cell>) -> AuditReport {
    let devs: Vec<Vec<Deviation>> = s.commuters.iter().map(|c| deviations(&c.true_type, space)).collect();
    let work = |cell: &Cell| {
        search_cell(s, &cell.reports, cell.opponents.clone(), cell.i, mechanism, &devs[cell.i.0])
    };
    #[cfg(feature = "parallel")]
    let results: Vec<CellResult> = {
        use rayon::prelude::*;
        cells.par_iter().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<CellResult> = cells.iter().map(work).collect();

    // Cells are in (commuter, opponent profile) order; strict `>` keeps the
    // earliest maximizer.
    let mut witness: Option<Witness> = None;
    let mut checked = 0;
    let mut flagged = 0;
    for r in results {
        checked += r.checked;
        flagged += r.flagged;
        if let Some(w) = r.best {
            if witness.as_ref().is_none_or(|b| w.gain > b.gain) {
                witness = Some(w);
            }
        }
    }
    AuditReport {
        mechanism,
        notion,
        verdict: if witness.is_some() {
            Verdict::Violated
        } else {
            Verdict::NoViolationFound
        },
        witness,
        p_grid: space.p_grid,
        profiles_checked: checked,
        flagged,
    }
}

/// Ex-post audit: everybody else reports truthfully; each commuter tries
/// every deviation in `space`.
pub fn audit_expost(s: &Scenario, mechanism: Mechanism, space: &DeviationSpace) -> AuditReport {
    let truthful = s.truthful();
    let cells = s
        .ids()
        .map(|i| Cell {
            i,
            reports: truthful.clone(),
            opponents: None,
        })
        .collect();
    run_cells(s, mechanism, Notion::ExPost, space, cells)
}

/// Dominant-strategy audit: as [`audit_expost`], and additionally over
/// every profile of the opponents' reports drawn from `opponent_space`
/// (truthful reports included).
pub fn audit_dominant(
    s: &Scenario,
    mechanism: Mechanism,
    space: &DeviationSpace,
    opponent_space: &DeviationSpace,
) -> Result<AuditReport, AuditError> {
    if s.len() > DOMINANT_MAX_COMMUTERS {
        return Err(AuditError::TooLarge {
            found: s.len(),
            max: DOMINANT_MAX_COMMUTERS,
        });
    }
    let truthful = s.truthful();
    let options: Vec<Vec<TripType>> = s
        .commuters
        .iter()
        .map(|c| {
            std::iter::once(c.true_type.clone())
                .chain(deviations(&c.true_type, opponent_space).iter().map(|d| d.apply(&c.true_type)))
                .collect()
        })
        .collect();
    let mut cells = Vec::new();
    for i in s.ids() {
        let others: Vec<usize> = (0..s.len()).filter(|&j| j != i.0).collect();
        let mut idx = vec![0usize; others.len()];
        loop {
            let mut reports = truthful.clone();
            for (slot, &j) in others.iter().enumerate() {
                reports.commuters[j].reported_type = options[j][idx[slot]].clone();
            }
            let misreported = idx.iter().any(|&x| x != 0);
            let opponents = misreported.then(|| reports.commuters.iter().map(|c| c.reported_type.clone()).collect());
            cells.push(Cell { i, reports, opponents });
            let mut d = others.len();
            let mut done = true;
            while d > 0 {
                d -= 1;
                idx[d] += 1;
                if idx[d] < options[others[d]].len() {
                    done = false;
                    break;
                }
                idx[d] = 0;
            }
            if done {
                break;
            }
        }
    }
    Ok(run_cells(s, mechanism, Notion::Dominant, space, cells))
}

#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: String,
    pub scenario: Scenario,
    pub mechanism: Mechanism,
    pub notion: Notion,
    pub expected: Verdict,
}

impl SuiteEntry {
    fn new(name: &str, scenario: Scenario, mechanism: Mechanism, notion: Notion, expected: Verdict) -> Self {
        Self {
            name: name.to_owned(),
            scenario,
            mechanism,
            notion,
            expected,
        }
    }

    /// Runs the entry with the default deviation space (and the same space
    /// for opponents in dominant entries).
    pub fn run(&self, space: &DeviationSpace) -> AuditReport {
        match self.notion {
            Notion::ExPost => audit_expost(&self.scenario, self.mechanism, space),
            Notion::Dominant => audit_dominant(&self.scenario, self.mechanism, space, space)
                .expect("suite dominant entries are small"),
        }
    }
}

/// The bundled possibility and impossibility cases.
pub fn theorem_suite() -> Vec<SuiteEntry> {
    use Mechanism::*;
    use Notion::*;
    use Verdict::*;
    let s2 = corpus::linear_pair(-2.0, 5.0, 0.5, 0.8);
    let mut out = vec![
        SuiteEntry::new("groves-private-p/linear-pair", s2.clone(), GrovesClarke, ExPost, Violated),
        SuiteEntry::new("groves-zero-private-p/linear-pair", s2.clone(), GrovesZero, ExPost, Violated),
        SuiteEntry::new("groves-public-p/linear-pair", s2.clone(), GrovesClarkePublicP, Dominant, NoViolationFound),
        SuiteEntry::new(
            "groves-constant-valuations",
            corpus::constant_pair(-1.0, 3.0, 0.4, 0.9),
            GrovesClarke,
            Dominant,
            NoViolationFound,
        ),
        SuiteEntry::new("commit-dominant/linear-pair", s2, CommitBased, Dominant, Violated),
    ];
    for s in corpus::linear_corpus() {
        let name = format!("commit-expost/{}", s.name());
        out.push(SuiteEntry::new(&name, s, CommitBased, ExPost, NoViolationFound));
    }
    out.push(SuiteEntry::new(
        "commit-threshold-gate",
        corpus::threshold_pair(-2.0, 5.0, 0.6, 0.5, 0.8),
        CommitBased,
        ExPost,
        Violated,
    ));
    out.push(SuiteEntry::new(
        "commit-quadratic",
        corpus::quadratic_pair(-3.0, 5.0, 0.5, 0.8),
        CommitBased,
        ExPost,
        Violated,
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payments::commit_payments;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn deviation_space_shape() {
        let s = corpus::linear_pair(-2.0, 5.0, 0.5, 0.8);
        let devs = deviations(&s.commuters[0].true_type, &DeviationSpace::default());
        // 21 p-points x (keep + 3 added gates) x 5 scales.
        assert_eq!(devs.len(), 21 * 4 * 5);
        assert_eq!(devs[0].p_hat, 0.0);
        assert_eq!(devs.last().unwrap().p_hat, 1.0);
        let no_gates = DeviationSpace {
            gate_toggles: false,
            ..DeviationSpace::default()
        };
        assert_eq!(deviations(&s.commuters[0].true_type, &no_gates).len(), 21 * 5);
    }

    #[test]
    fn threshold_gate_edit_is_a_drop() {
        let s = corpus::threshold_pair(-2.0, 5.0, 0.6, 0.5, 0.8);
        let edits = gate_edits(&s.commuters[1].true_type);
        assert_eq!(edits, vec![GateEdit::Keep, GateEdit::Drop { clause: 0 }]);
    }

    #[test]
    fn evaluator_matches_reference_path() {
        let space = DeviationSpace {
            p_grid: 5,
            coefficient_scales: vec![0.0, 1.0, 2.0],
            gate_toggles: true,
        };
        for s in corpus::all_scenarios() {
            let truthful = s.truthful();
            for mech in Mechanism::ALL {
                for i in s.ids() {
                    let mut eval = ResponseEvaluator::new(&s, &truthful, i, mech);
                    for d in deviations(&s.commuter(i).true_type, &space) {
                        let report = d.apply(&s.commuter(i).true_type);
                        let fast = eval.utility(&report);
                        let lying = truthful.with_report(i, report);
                        let slow = expected_utility(&lying, i, &mech.run(&lying));
                        assert_eq!(fast, slow, "{} {mech} {i} {d}", s.name());
                    }
                }
            }
        }
    }

    #[test]
    fn threshold_manipulation_is_found() {
        let s = corpus::threshold_pair(-2.0, 5.0, 0.6, 0.5, 0.8);
        let r = audit_expost(&s, Mechanism::CommitBased, &DeviationSpace::default());
        assert_eq!(r.verdict, Verdict::Violated);
        let w = r.witness.unwrap();
        assert_eq!(w.commuter, CommuterId(0));
        assert_eq!(w.deviation.p_hat, 0.6);
        assert!(close(w.gain, 1.2), "{}", w.gain);
    }

    #[test]
    fn linear_pair_commit_is_expost_truthful() {
        let s = corpus::linear_pair(-2.0, 5.0, 0.5, 0.8);
        let r = audit_expost(&s, Mechanism::CommitBased, &DeviationSpace::default());
        assert_eq!(r.verdict, Verdict::NoViolationFound, "{r}");
    }

    #[test]
    fn groves_private_p_overreport() {
        let s = corpus::linear_pair(-2.0, 5.0, 0.5, 0.8);
        let r = audit_expost(&s, Mechanism::GrovesClarke, &DeviationSpace::default());
        let w = r.witness.expect("violation");
        assert_eq!(w.commuter, CommuterId(0));
        assert_eq!(w.deviation.p_hat, 1.0);
        assert!(close(w.gain, 2.0));
        assert!(close(w.truthful_utility, 1.2) && close(w.deviated_utility, 3.2));
    }

    #[test]
    fn witnesses_replay() {
        for entry in theorem_suite().into_iter().filter(|e| e.notion == Notion::ExPost) {
            let r = entry.run(&DeviationSpace::with_grid(11));
            if let Some(w) = r.witness {
                let (h, l) = replay(&entry.scenario, entry.mechanism, &w).unwrap();
                assert!(close(h, w.truthful_utility) && close(l, w.deviated_utility), "{}", entry.name);
                assert!(close(l - h, w.gain));
            }
        }
    }

    #[test]
    fn dominant_guard() {
        use crate::model::Commuter;
        use crate::valuation::ValuationSpec;
        let s = Scenario::fully_compatible(
            (0..5)
                .map(|i| Commuter::rider(i, TripType::new(ValuationSpec::zero(CommuterId(i)), 0.5)))
                .collect(),
        );
        let err = audit_dominant(&s, Mechanism::CommitBased, &DeviationSpace::default(), &DeviationSpace::default());
        assert_eq!(err.unwrap_err(), AuditError::TooLarge { found: 5, max: 4 });
    }

    #[test]
    fn commit_dominant_fails_against_misreports() {
        let s = corpus::linear_pair(-2.0, 5.0, 0.5, 0.8);
        let small = DeviationSpace::with_grid(5);
        let r = audit_dominant(&s, Mechanism::CommitBased, &small, &small).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        let w = r.witness.unwrap();
        assert!(w.opponents.is_some());
        let (h, l) = replay(&s, Mechanism::CommitBased, &w).unwrap();
        assert!(close(l - h, w.gain));
    }

    #[test]
    fn constant_valuations_are_vcg_truthful() {
        let s = corpus::constant_pair(-1.0, 3.0, 0.4, 0.9);
        let small = DeviationSpace::with_grid(5);
        let r = audit_dominant(&s, Mechanism::GrovesClarke, &small, &small).unwrap();
        assert_eq!(r.verdict, Verdict::NoViolationFound, "{r}");
    }

    #[test]
    fn suite_lists_every_family() {
        let suite = theorem_suite();
        assert!(suite.len() >= 5);
        let quad = suite.iter().find(|e| e.name == "commit-quadratic").unwrap();
        assert!(quad
            .scenario
            .commuters
            .iter()
            .any(|c| !c.true_type.valuation.is_linear_in_commitment()));
        let _ = commit_payments(&quad.scenario);
    }
}
