//! Scenario files, the `rideshare` subcommands and their text/CSV output.
//!
//! Exit codes: 0 success or no violation, 1 violation found, 2 input
//! error, 3 IO error.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::efficient_allocation;
use crate::audit::{audit_dominant, audit_expost, replay, theorem_suite, AuditError, DeviationSpace, Notion, Verdict};
use crate::model::{validate_scenario, Commuter, CommuterId, Scenario, TripType};
use crate::payments::Mechanism;
use crate::simulate::{run_trials, write_csv, SimulateError};
use crate::valuation::ValuationSpec;

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub scenario: ScenarioBody,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBody {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
    pub commuters: Vec<CommuterEntry>,
    /// Defaults to everybody compatible when omitted.
    #[serde(default)]
    pub compatibility: Option<Vec<Vec<bool>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommuterEntry {
    pub id: CommuterId,
    pub has_vehicle: bool,
    #[serde(default)]
    pub seat_capacity: u32,
    #[serde(rename = "type")]
    pub true_type: TripType,
    /// Parts of the report that differ from the true type.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported: Option<ReportOverride>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_commit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valuation: Option<ValuationSpec>,
}

impl ScenarioFile {
    pub fn from_scenario(s: &Scenario) -> Self {
        let commuters = s
            .commuters
            .iter()
            .map(|c| {
                let t = &c.true_type;
                let r = &c.reported_type;
                let p_commit = (r.p_commit.to_bits() != t.p_commit.to_bits()).then_some(r.p_commit);
                let valuation = (r.valuation != t.valuation).then(|| r.valuation.clone());
                let reported = (p_commit.is_some() || valuation.is_some())
                    .then_some(ReportOverride { p_commit, valuation });
                CommuterEntry {
                    id: c.id,
                    has_vehicle: c.has_vehicle,
                    seat_capacity: c.seat_capacity,
                    true_type: t.clone(),
                    reported,
                }
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: ScenarioBody {
                metadata: s.metadata.clone(),
                commuters,
                compatibility: Some(s.compatibility.clone()),
            },
        }
    }

    pub fn into_scenario(self) -> Result<Scenario, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "schema_version: expected {SCHEMA_VERSION}, found {}",
                self.schema_version
            )));
        }
        let body = self.scenario;
        let n = body.commuters.len();
        let commuters = body
            .commuters
            .into_iter()
            .map(|e| {
                let mut reported = e.true_type.clone();
                if let Some(o) = e.reported {
                    if let Some(p) = o.p_commit {
                        reported.p_commit = p;
                    }
                    if let Some(v) = o.valuation {
                        reported.valuation = v;
                    }
                }
                Commuter {
                    id: e.id,
                    has_vehicle: e.has_vehicle,
                    seat_capacity: e.seat_capacity,
                    true_type: e.true_type,
                    reported_type: reported,
                }
            })
            .collect();
        let s = Scenario {
            commuters,
            compatibility: body.compatibility.unwrap_or_else(|| vec![vec![true; n]; n]),
            metadata: body.metadata,
        };
        let problems = validate_scenario(&s);
        if !problems.is_empty() {
            let lines: Vec<String> = problems.iter().map(ToString::to_string).collect();
            return Err(CliError::Input(lines.join("\n")));
        }
        Ok(s)
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| CliError::Input(e.to_string()))?;
    file.into_scenario()
}

/// Canonical text form: pretty JSON with a trailing newline.
pub fn serialize_scenario(s: &Scenario) -> String {
    let mut out = serde_json::to_string_pretty(&ScenarioFile::from_scenario(s)).expect("scenario serializes");
    out.push('\n');
    out
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "rideshare", version, about = "Ridesharing mechanisms for commuters who may not show up")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the efficient allocation under reported types.
    Allocate { path: PathBuf },
    /// Print every commuter's payment.
    Pay {
        path: PathBuf,
        #[command(flatten)]
        mechanism: MechanismArgs,
    },
    /// Draw commitments, settle payments and write per-trial CSV.
    Simulate {
        path: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        mechanism: MechanismArgs,
    },
    /// Search for a profitable misreport.
    Audit {
        path: PathBuf,
        #[command(flatten)]
        mechanism: MechanismArgs,
        #[arg(long, value_enum, default_value_t = NotionArg::Expost)]
        notion: NotionArg,
        /// Number of points on the reported-probability grid.
        #[arg(long, default_value_t = 21)]
        grid: usize,
    },
    /// Run the bundled truthfulness cases and print a pass/fail table.
    Suite {
        #[arg(long, default_value_t = 21)]
        grid: usize,
    },
}

#[derive(Args, Debug, Clone)]
pub struct MechanismArgs {
    /// groves-zero, groves-clarke or commit.
    #[arg(long, default_value = "commit")]
    pub mechanism: String,
    /// Treat commitment probabilities as known to the mechanism.
    #[arg(long)]
    pub public_p: bool,
}

impl MechanismArgs {
    pub fn resolve(&self) -> Result<Mechanism, CliError> {
        let m: Mechanism = self.mechanism.parse().map_err(|e: crate::payments::UnknownMechanism| {
            CliError::Input(format!("--mechanism: {e}"))
        })?;
        if !self.public_p {
            return Ok(m);
        }
        m.with_public_p()
            .ok_or_else(|| CliError::Input(format!("--public-p: not available for mechanism {m}")))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum NotionArg {
    Dominant,
    Expost,
}

impl From<NotionArg> for Notion {
    fn from(n: NotionArg) -> Self {
        match n {
            NotionArg::Dominant => Notion::Dominant,
            NotionArg::Expost => Notion::ExPost,
        }
    }
}

/// Prints `-0` as `0`.
fn num(x: f64) -> f64 {
    x + 0.0
}

pub fn cmd_allocate(path: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let s = load_scenario(path)?;
    let r = efficient_allocation(&s);
    writeln!(out, "{}, welfare {}", r.allocation, num(r.welfare))?;
    if s.len() > 1 {
        for i in s.ids() {
            let v = r.per_commuter[i.0].map_or("excluded".to_owned(), |v| num(v).to_string());
            writeln!(out, "  {i}: {}, value {v}", r.allocation.role(i))?;
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_pay(path: &Path, mechanism: &MechanismArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let m = mechanism.resolve()?;
    let s = load_scenario(path)?;
    let sched = m.run(&s);
    writeln!(out, "{m}: {}", sched.allocation)?;
    for i in s.ids() {
        writeln!(out, "{i}: {}", sched.get(i))?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_simulate(
    path: &Path,
    trials: u64,
    seed: u64,
    csv_path: &Path,
    mechanism: &MechanismArgs,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let m = mechanism.resolve()?;
    let s = load_scenario(path)?;
    let sched = m.run(&s);
    let run = run_trials(&s, &sched, trials, seed).map_err(|e| match e {
        SimulateError::NoTrials => CliError::Input(format!("--trials: {e}")),
        other => CliError::Input(other.to_string()),
    })?;
    let file = fs::File::create(csv_path).map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
    write_csv(&run, io::BufWriter::new(file)).map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
    let sum = &run.summary;
    writeln!(out, "{m}: {} trials, seed {seed}, {} flagged", sum.trials, sum.flagged)?;
    writeln!(out, "commuter  commit_rate  mean_value  mean_payment  mean_utility  se_utility")?;
    for i in 0..s.len() {
        writeln!(
            out,
            "{:>8}  {:>11.6}  {:>10.6}  {:>12.6}  {:>12.6}  {:>10.6}",
            i,
            sum.commit_rate[i].mean,
            sum.value[i].mean,
            sum.payment[i].mean,
            sum.utility[i].mean,
            sum.utility[i].std_error
        )?;
    }
    writeln!(out, "welfare {:.6} (se {:.6})", sum.welfare.mean, sum.welfare.std_error)?;
    writeln!(out, "deficit {:.6} (se {:.6})", sum.deficit.mean, sum.deficit.std_error)?;
    writeln!(out, "csv written to {}", csv_path.display())?;
    Ok(EXIT_OK)
}

pub fn cmd_audit(
    path: &Path,
    mechanism: &MechanismArgs,
    notion: Notion,
    grid: usize,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let m = mechanism.resolve()?;
    if grid < 2 {
        return Err(CliError::Input("--grid: need at least 2 points".into()));
    }
    let s = load_scenario(path)?;
    let space = DeviationSpace::with_grid(grid);
    let report = match notion {
        Notion::ExPost => audit_expost(&s, m, &space),
        Notion::Dominant => audit_dominant(&s, m, &space, &space).map_err(|e| match e {
            AuditError::TooLarge { .. } => CliError::Input(e.to_string()),
        })?,
    };
    write!(out, "{report}")?;
    if let Some(w) = &report.witness {
        let reported = serde_json::to_string(&w.reported).expect("trip type serializes");
        writeln!(out, "  reported type {reported}")?;
        if let Some(opps) = &w.opponents {
            let opps = serde_json::to_string(opps).expect("trip types serialize");
            writeln!(out, "  opponent reports {opps}")?;
        }
        if let Ok((h, l)) = replay(&s, m, w) {
            writeln!(out, "  replayed: truthful {}, deviated {}", num(h), num(l))?;
        }
    }
    Ok(match report.verdict {
        Verdict::Violated => EXIT_VIOLATION,
        Verdict::NoViolationFound => EXIT_OK,
    })
}

pub fn cmd_suite(grid: usize, out: &mut dyn Write) -> Result<i32, CliError> {
    if grid < 2 {
        return Err(CliError::Input("--grid: need at least 2 points".into()));
    }
    let space = DeviationSpace::with_grid(grid);
    let mut all = true;
    writeln!(out, "{:<44} {:<24} {:<9} {:<18} {:<18} result", "case", "mechanism", "notion", "expected", "found")?;
    for e in theorem_suite() {
        let r = e.run(&space);
        let ok = r.verdict == e.expected;
        all &= ok;
        writeln!(
            out,
            "{:<44} {:<24} {:<9} {:<18} {:<18} {}",
            e.name,
            e.mechanism.to_string(),
            e.notion.to_string(),
            e.expected.to_string(),
            r.verdict.to_string(),
            if ok { "pass" } else { "FAIL" }
        )?;
    }
    Ok(if all { EXIT_OK } else { EXIT_VIOLATION })
}

/// Sizes the global worker pool from `RIDESHARE_THREADS` (0 or unset: automatic).
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("RIDESHARE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Input(format!("RIDESHARE_THREADS: expected a non-negative integer, found `{raw}`")))?;
    #[cfg(feature = "parallel")]
    if n > 0 {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

/// Runs one parsed command, writing results to `out` and errors to `err`.
/// Returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Allocate { path } => cmd_allocate(path, out),
        Command::Pay { path, mechanism } => cmd_pay(path, mechanism, out),
        Command::Simulate {
            path,
            trials,
            seed,
            out: csv_path,
            mechanism,
        } => cmd_simulate(path, *trials, *seed, csv_path, mechanism, out),
        Command::Audit {
            path,
            mechanism,
            notion,
            grid,
        } => cmd_audit(path, mechanism, (*notion).into(), *grid, out),
        Command::Suite { grid } => cmd_suite(*grid, out),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn corpus_round_trips() {
        for s in corpus::all_scenarios() {
            let text = serialize_scenario(&s);
            let back = parse_scenario(&text).unwrap();
            assert_eq!(back, s, "{}", s.name());
            assert_eq!(serialize_scenario(&back), text);
        }
    }

    #[test]
    fn misreport_survives_as_override() {
        let s = corpus::threshold_pair_misreport(-2.0, 5.0, 0.6, 0.5, 0.8, 0.6);
        let text = serialize_scenario(&s);
        assert!(text.contains("\"reported\""));
        assert_eq!(parse_scenario(&text).unwrap(), s);
    }

    #[test]
    fn rejects_unknown_fields_and_versions() {
        let s = corpus::single(0.5, 1.0);
        let text = serialize_scenario(&s);
        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 2");
        let e = parse_scenario(&bumped).unwrap_err();
        assert!(e.to_string().contains("schema_version"));
        let extra = text.replacen("\"schema_version\": 1,", "\"schema_version\": 1, \"colour\": 3,", 1);
        let e = parse_scenario(&extra).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        assert_eq!(e.exit_code(), EXIT_INPUT);
    }

    #[test]
    fn bad_probability_names_the_field() {
        let text = serialize_scenario(&corpus::single(0.5, 1.0)).replace("\"p_commit\": 0.5", "\"p_commit\": 1.5");
        let e = parse_scenario(&text).unwrap_err();
        assert!(e.to_string().contains("p_commit"), "{e}");
    }

    #[test]
    fn compatibility_defaults_to_all_true() {
        let text = r#"{"schema_version": 1, "scenario": {"commuters": [
            {"id": 0, "has_vehicle": false, "type": {"p_commit": 1.0, "valuation": {"owner": 0}}}
        ]}}"#;
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.compatibility, vec![vec![true]]);
    }

    #[test]
    fn public_p_mapping() {
        let args = |m: &str, p| MechanismArgs {
            mechanism: m.into(),
            public_p: p,
        };
        assert_eq!(args("groves-clarke", true).resolve().unwrap(), Mechanism::GrovesClarkePublicP);
        assert_eq!(args("groves-zero", true).resolve().unwrap(), Mechanism::GrovesZeroPublicP);
        assert_eq!(args("commit", false).resolve().unwrap(), Mechanism::CommitBased);
        assert_eq!(args("commit", true).resolve().unwrap_err().exit_code(), EXIT_INPUT);
        assert_eq!(args("vcg", false).resolve().unwrap_err().exit_code(), EXIT_INPUT);
    }
}
