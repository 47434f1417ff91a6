//! Seeded Monte Carlo realization of commitments and settlement of realized
//! utilities against the payment schedule.
//!
//! Draws come from ChaCha8 used as a counter-based generator: the key is
//! derived from the run seed, the stream is the trial index and the word
//! position is the commuter index. Any (trial, commuter) cell can be
//! recomputed in isolation, so trial order and thread count never change
//! the output.

use std::io::Write;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Allocation, CommuterId, Scenario};
use crate::payments::PaymentSchedule;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CommitVector(pub Vec<bool>);

impl CommitVector {
    pub fn as_probabilities(&self) -> Vec<f64> {
        self.0.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect()
    }
}

/// Uniform in `[0, 1)` for one (seed, trial, commuter) cell.
pub fn uniform(seed: u64, trial: u64, commuter: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng.set_word_pos(2 * commuter as u128);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Independent Bernoulli draws, one per commuter, for trial `trial`.
pub fn realize_trial(p: &[f64], seed: u64, trial: u64) -> CommitVector {
    CommitVector(
        p.iter()
            .enumerate()
            .map(|(i, &q)| uniform(seed, trial, i) < q)
            .collect(),
    )
}

pub fn realize(p: &[f64], seed: u64) -> CommitVector {
    realize_trial(p, seed, 0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub trial: u64,
    pub commit: CommitVector,
    /// Realized true value per commuter; `None` when the outcome is excluded.
    pub values: Vec<Option<f64>>,
    pub payments: Vec<f64>,
    pub utilities: Vec<Option<f64>>,
    pub total_welfare: Option<f64>,
    /// Negated sum of payments: what the mechanism pays out.
    pub deficit: f64,
}

impl TrialRecord {
    pub fn flagged(&self) -> bool {
        self.values.iter().any(Option::is_none)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub trials: u64,
    /// Trials with an excluded realized value; left out of the estimates.
    pub flagged: u64,
    pub commit_rate: Vec<Estimate>,
    pub value: Vec<Estimate>,
    pub payment: Vec<Estimate>,
    pub utility: Vec<Estimate>,
    pub welfare: Estimate,
    pub deficit: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationRun {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
}

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("trials must be positive")]
    NoTrials,
    #[error("payment schedule has {found} entries for {expected} commuters")]
    ScheduleMismatch { found: usize, expected: usize },
    #[error("failed to write CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Realized value of each commuter's true valuation at a 0/1 commitment vector.
pub fn realized_values(s: &Scenario, a: &Allocation, commit: &CommitVector) -> Vec<Option<f64>> {
    let c = commit.as_probabilities();
    s.commuters
        .iter()
        .map(|m| m.true_type.valuation.evaluate(a, &c).finite())
        .collect()
}

fn settle(s: &Scenario, schedule: &PaymentSchedule, seed: u64, trial: u64) -> TrialRecord {
    let commit = realize_trial(&s.true_probabilities(), seed, trial);
    let values = realized_values(s, &schedule.allocation, &commit);
    let payments: Vec<f64> = s
        .ids()
        .map(|i| schedule.get(i).charged(commit.0[i.0]))
        .collect();
    let utilities = values
        .iter()
        .zip(&payments)
        .map(|(v, x)| v.map(|v| v - x))
        .collect();
    let total_welfare = values.iter().copied().sum::<Option<f64>>();
    let deficit = -pairwise_sum(&payments);
    TrialRecord {
        seed,
        trial,
        commit,
        values,
        payments,
        utilities,
        total_welfare,
        deficit,
    }
}

/// Pairwise (cascade) summation with a fixed split, so the result depends
/// only on the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

fn estimate(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            std_error: f64::NAN,
        };
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return Estimate { mean, std_error: 0.0 };
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    Estimate {
        mean,
        std_error: (var / n as f64).sqrt(),
    }
}

fn summarize(n: usize, records: &[TrialRecord]) -> Summary {
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| !r.flagged()).collect();
    let column = |f: &dyn Fn(&TrialRecord) -> f64| -> Estimate {
        let xs: Vec<f64> = ok.iter().map(|r| f(r)).collect();
        estimate(&xs)
    };
    let per = |f: &dyn Fn(&TrialRecord, usize) -> f64| -> Vec<Estimate> {
        (0..n).map(|i| column(&|r| f(r, i))).collect()
    };
    Summary {
        trials: records.len() as u64,
        flagged: (records.len() - ok.len()) as u64,
        commit_rate: per(&|r, i| if r.commit.0[i] { 1.0 } else { 0.0 }),
        value: per(&|r, i| r.values[i].unwrap_or(f64::NAN)),
        payment: per(&|r, i| r.payments[i]),
        utility: per(&|r, i| r.utilities[i].unwrap_or(f64::NAN)),
        welfare: column(&|r| r.total_welfare.unwrap_or(f64::NAN)),
        deficit: column(&|r| r.deficit),
    }
}

/// Runs `trials` independent realizations. Deterministic in
/// `(s, schedule, trials, seed)` regardless of parallelism.
pub fn run_trials(
    s: &Scenario,
    schedule: &PaymentSchedule,
    trials: u64,
    seed: u64,
) -> Result<SimulationRun, SimulateError> {
    if trials == 0 {
        return Err(SimulateError::NoTrials);
    }
    if schedule.entries.len() != s.len() {
        return Err(SimulateError::ScheduleMismatch {
            found: schedule.entries.len(),
            expected: s.len(),
        });
    }
    #[cfg(feature = "parallel")]
    let records: Vec<TrialRecord> = {
        use rayon::prelude::*;
        (0..trials)
            .into_par_iter()
            .map(|t| settle(s, schedule, seed, t))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let records: Vec<TrialRecord> = (0..trials).map(|t| settle(s, schedule, seed, t)).collect();
    let summary = summarize(s.len(), &records);
    Ok(SimulationRun { records, summary })
}

/// Exact expectation of every commuter's realized utility, summing over all
/// `2^N` commitment vectors. `None` for a commuter if any vector with
/// positive probability lands on an excluded outcome.
pub fn exact_expected_utilities(s: &Scenario, schedule: &PaymentSchedule) -> Vec<Option<f64>> {
    let n = s.len();
    assert!(n <= 20, "exact enumeration is limited to 20 commuters");
    let p = s.true_probabilities();
    let mut acc: Vec<Option<f64>> = vec![Some(0.0); n];
    for mask in 0u64..(1u64 << n) {
        let commit = CommitVector((0..n).map(|i| mask >> i & 1 == 1).collect());
        let weight: f64 = commit
            .0
            .iter()
            .zip(&p)
            .map(|(&c, &q)| if c { q } else { 1.0 - q })
            .product();
        if weight == 0.0 {
            continue;
        }
        let values = realized_values(s, &schedule.allocation, &commit);
        for i in 0..n {
            let x = schedule.get(CommuterId(i)).charged(commit.0[i]);
            acc[i] = match (acc[i], values[i]) {
                (Some(a), Some(v)) => Some(a + weight * (v - x)),
                _ => None,
            };
        }
    }
    acc
}

/// Writes per-trial rows (`trial,commuter,committed,value,payment,utility`)
/// followed by `mean` and `se` rows per commuter.
pub fn write_csv<W: Write>(run: &SimulationRun, out: W) -> Result<(), SimulateError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "commuter", "committed", "value", "payment", "utility"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &run.records {
        for i in 0..r.values.len() {
            w.write_record([
                r.trial.to_string(),
                i.to_string(),
                u8::from(r.commit.0[i]).to_string(),
                opt(r.values[i]),
                r.payments[i].to_string(),
                opt(r.utilities[i]),
            ])?;
        }
    }
    let s = &run.summary;
    for (label, pick) in [
        ("mean", (|e: &Estimate| e.mean) as fn(&Estimate) -> f64),
        ("se", |e: &Estimate| e.std_error),
    ] {
        for i in 0..s.utility.len() {
            w.write_record([
                label.to_owned(),
                i.to_string(),
                pick(&s.commit_rate[i]).to_string(),
                pick(&s.value[i]).to_string(),
                pick(&s.payment[i]).to_string(),
                pick(&s.utility[i]).to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
