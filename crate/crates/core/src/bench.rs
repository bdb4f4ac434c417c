//! Execution-time comparison of token turns against their standard SQL,
//! over synthetic databases of increasing size.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{build_interactions, generate_queries, BuildError, Vocabulary};
use crate::decompose::{inline_all, DecomposeConfig};
use crate::io::InteractionRecord;
use crate::nlq::NlqGenerator;
use crate::session::{is_ordered, results_match, Database, ResultSet, Session, SessionError};
use crate::sql::{extract_token_refs, render_select, TokenKind};
use crate::synth::{synth_db, SynthDbSpec, SynthError, GENERATOR_VERSION};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("execution failed: {0}")]
    Execution(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// Wall times of repeated executions, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub samples: Vec<f64>,
    pub avg: f64,
    pub median: f64,
}

impl Timing {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        Timing {
            avg: mean(&samples),
            median: median(&samples),
            samples,
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Execute `sql` `reps` times, each on a fresh connection, timing the
/// execution only. Returns the timing and the last result.
pub fn time_query(db: &Path, sql: &str, reps: usize) -> Result<(Timing, ResultSet), BenchError> {
    time_with_overhead(db, sql, reps, Duration::ZERO)
}

fn time_with_overhead(
    db: &Path,
    sql: &str,
    reps: usize,
    overhead: Duration,
) -> Result<(Timing, ResultSet), BenchError> {
    if reps == 0 {
        return Err(BenchError::NoRepetitions);
    }
    let mut samples = Vec::with_capacity(reps);
    let mut last = None;
    for _ in 0..reps {
        let conn = Database::open(db)?;
        let (rs, t) = conn
            .query(sql)
            .map_err(|e| BenchError::Execution(e.to_string()))?;
        samples.push((t + overhead).as_secs_f64());
        last = Some(rs);
    }
    Ok((Timing::from_samples(samples), last.expect("reps >= 1")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    Seconds,
    Deciseconds,
    Milliseconds,
}

impl TimeUnit {
    pub fn factor(self) -> f64 {
        match self {
            TimeUnit::Seconds => 1.0,
            TimeUnit::Deciseconds => 10.0,
            TimeUnit::Milliseconds => 1000.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TimeUnit::Seconds => "s",
            TimeUnit::Deciseconds => "ds",
            TimeUnit::Milliseconds => "ms",
        }
    }
}

impl std::str::FromStr for TimeUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "s" | "seconds" => Ok(TimeUnit::Seconds),
            "ds" | "deciseconds" => Ok(TimeUnit::Deciseconds),
            "ms" | "milliseconds" => Ok(TimeUnit::Milliseconds),
            other => Err(format!("unknown time unit '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub reps: usize,
    /// Rows whose standard time is below this are left out of aggregates.
    pub near_zero: f64,
    pub unit: TimeUnit,
    /// Time every turn instead of only turns with RESULT tokens.
    pub all_turns: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            reps: 3,
            near_zero: 0.001,
            unit: TimeUnit::Deciseconds,
            all_turns: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub query_id: String,
    pub turn_index: usize,
    pub has_result_token: bool,
    pub standard: Option<Timing>,
    pub tokenized: Option<Timing>,
    pub reduction_pct: Option<f64>,
    /// Both variants returned the same result.
    pub equivalent: bool,
    pub excluded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rows: usize,
    pub standard_avg: f64,
    pub standard_median: f64,
    pub tokenized_avg: f64,
    pub tokenized_median: f64,
    pub reduction_pct: f64,
}

impl Aggregate {
    fn over<'a>(rows: impl Iterator<Item = &'a TimingRow>) -> Self {
        let (mut sa, mut sm, mut ta, mut tm) = (vec![], vec![], vec![], vec![]);
        for r in rows {
            if let (Some(s), Some(t)) = (&r.standard, &r.tokenized) {
                sa.push(s.avg);
                sm.push(s.median);
                ta.push(t.avg);
                tm.push(t.median);
            }
        }
        let standard_avg = mean(&sa);
        let tokenized_avg = mean(&ta);
        Aggregate {
            rows: sa.len(),
            standard_avg,
            standard_median: median(&sm),
            tokenized_avg,
            tokenized_median: median(&tm),
            reduction_pct: reduction(standard_avg, tokenized_avg),
        }
    }
}

fn reduction(standard: f64, tokenized: f64) -> f64 {
    if standard > 0.0 {
        (standard - tokenized) / standard * 100.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub reps: usize,
    pub near_zero: f64,
    pub unit: TimeUnit,
    pub rows: Vec<TimingRow>,
    /// Included rows with RESULT tokens.
    pub result_subset: Aggregate,
    /// All included rows.
    pub full_set: Aggregate,
}

impl TimingReport {
    pub fn included(&self) -> usize {
        self.rows.iter().filter(|r| !r.excluded).count()
    }

    pub fn excluded(&self) -> usize {
        self.rows.iter().filter(|r| r.excluded).count()
    }

    pub fn to_table(&self) -> String {
        let f = self.unit.factor();
        let u = self.unit.label();
        let mut out = format!(
            "rows {} (included {}, excluded {}), reps {}, unit {u}\n",
            self.rows.len(),
            self.included(),
            self.excluded(),
            self.reps
        );
        out.push_str("set             rows   std avg  std med   tok avg  tok med  reduction\n");
        for (name, a) in [("result tokens", &self.result_subset), ("all turns", &self.full_set)] {
            out.push_str(&format!(
                "{name:<14} {:>5} {:>9.4} {:>8.4} {:>9.4} {:>8.4} {:>9.1}%\n",
                a.rows,
                a.standard_avg * f,
                a.standard_median * f,
                a.tokenized_avg * f,
                a.tokenized_median * f,
                a.reduction_pct
            ));
        }
        out
    }
}

fn has_result_token(stmt: &crate::sql::Statement) -> bool {
    extract_token_refs(stmt)
        .iter()
        .any(|t| t.kind == TokenKind::Result)
}

/// Time each qualifying turn two ways on `db`: its standard SQL (all
/// references inlined) and its token form resolved from memoized results
/// of the earlier turns. Both must return the same result.
pub fn compare_execution(
    corpus: &[InteractionRecord],
    db: &Path,
    config: &BenchConfig,
) -> Result<TimingReport, BenchError> {
    if config.reps == 0 {
        return Err(BenchError::NoRepetitions);
    }
    let mut rows = Vec::new();
    for record in corpus {
        let turns = match record.to_turns() {
            Ok(t) => t,
            Err(e) => {
                rows.push(failed_row(record, 0, false, e.to_string()));
                continue;
            }
        };
        let mut session = Session::open(db)?;
        for t in &turns {
            let result_token = has_result_token(&t.stmt);
            let qualifies = result_token || config.all_turns;
            let outcome = session.execute_turn(&t.sql()).clone();
            if !qualifies {
                continue;
            }
            if let Err(e) = &outcome.result {
                rows.push(failed_row(record, t.index, result_token, e.to_string()));
                continue;
            }
            rows.push(time_turn(record, &turns, t.index, &session, db, config, result_token));
        }
    }
    Ok(finish(rows, config))
}

fn failed_row(record: &InteractionRecord, turn: usize, result_token: bool, error: String) -> TimingRow {
    TimingRow {
        query_id: record.interaction_id.clone(),
        turn_index: turn,
        has_result_token: result_token,
        standard: None,
        tokenized: None,
        reduction_pct: None,
        equivalent: false,
        excluded: true,
        error: Some(error),
    }
}

fn time_turn(
    record: &InteractionRecord,
    turns: &[crate::decompose::TurnSql],
    index: usize,
    session: &Session,
    db: &Path,
    config: &BenchConfig,
    result_token: bool,
) -> TimingRow {
    let attempt = || -> Result<TimingRow, String> {
        let standard_sql = render_select(&inline_all(turns, index).map_err(|e| e.to_string())?);
        let started = Instant::now();
        let resolved = session
            .resolve_tokens(&turns[index - 1].stmt)
            .map_err(|e| e.to_string())?;
        let resolve_time = started.elapsed();
        let tokenized_sql = render_select(&resolved);
        let (standard, std_rs) =
            time_query(db, &standard_sql, config.reps).map_err(|e| e.to_string())?;
        let (tokenized, tok_rs) = time_with_overhead(db, &tokenized_sql, config.reps, resolve_time)
            .map_err(|e| e.to_string())?;
        let equivalent = results_match(&std_rs, &tok_rs, is_ordered(&resolved));
        Ok(TimingRow {
            query_id: record.interaction_id.clone(),
            turn_index: index,
            has_result_token: result_token,
            reduction_pct: Some(reduction(standard.avg, tokenized.avg)),
            excluded: standard.avg < config.near_zero,
            standard: Some(standard),
            tokenized: Some(tokenized),
            equivalent,
            error: None,
        })
    };
    attempt().unwrap_or_else(|e| failed_row(record, index, result_token, e))
}

fn finish(rows: Vec<TimingRow>, config: &BenchConfig) -> TimingReport {
    let included = || rows.iter().filter(|r| !r.excluded);
    TimingReport {
        reps: config.reps,
        near_zero: config.near_zero,
        unit: config.unit,
        result_subset: Aggregate::over(included().filter(|r| r.has_result_token)),
        full_set: Aggregate::over(included()),
        rows,
    }
}

/// Default database sizes of the scale ladder.
pub const DEFAULT_SCALES: [usize; 3] = [100, 1_000, 10_000];

/// Event volume of the ladder databases: five times the default chart and
/// lab rows, which brings the 1,000-patient file to roughly 50 MB.
pub fn ladder_spec(n_patients: usize, seed: u64) -> SynthDbSpec {
    let mut spec = SynthDbSpec::new(n_patients, seed);
    spec.multipliers.chartevents_per_icustay *= 5.0;
    spec.multipliers.labevents_per_admission *= 5.0;
    spec
}

/// Path of the ladder database for `n_patients` under `dir`, generated on
/// first use.
pub fn ladder_db(dir: &Path, n_patients: usize, seed: u64) -> Result<PathBuf, BenchError> {
    let stem = format!("ladder-v{GENERATOR_VERSION}-{n_patients}-{seed}");
    let path = dir.join(format!("{stem}.sqlite"));
    if !path.exists() {
        let tmp = dir.join(format!("{stem}.{}.partial", std::process::id()));
        let _ = std::fs::remove_file(&tmp);
        synth_db(&ladder_spec(n_patients, seed), &tmp)?;
        std::fs::rename(&tmp, &path).map_err(SynthError::from)?;
    }
    Ok(path)
}

/// Benchmark corpus for a database: seeded queries over its own values,
/// decomposed without merging.
pub fn bench_corpus(
    db: &Path,
    n_queries: usize,
    seed: u64,
) -> Result<Vec<InteractionRecord>, BenchError> {
    let conn = Database::open(db)?;
    let vocab = Vocabulary::from_connection(conn.connection())
        .map_err(|e| BenchError::Execution(e.to_string()))?;
    Ok(build_interactions(
        &generate_queries(&vocab, n_queries, seed),
        &DecomposeConfig::default(),
        None,
        &NlqGenerator::bundled_plain(),
        seed,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderStep {
    pub n_patients: usize,
    pub report: TimingReport,
}

/// Run [`compare_execution`] on each scale, timing runs strictly in
/// sequence.
pub fn run_ladder(
    dir: &Path,
    scales: &[usize],
    db_seed: u64,
    n_queries: usize,
    query_seed: u64,
    config: &BenchConfig,
) -> Result<Vec<LadderStep>, BenchError> {
    scales
        .iter()
        .map(|&n| {
            let db = ladder_db(dir, n, db_seed)?;
            let corpus = bench_corpus(&db, n_queries, query_seed)?;
            Ok(LadderStep {
                n_patients: n,
                report: compare_execution(&corpus, &db, config)?,
            })
        })
        .collect()
}

/// Whether the aggregate reduction never drops by more than `tolerance`
/// points from one scale to the next.
pub fn trend_holds(steps: &[LadderStep], tolerance: f64) -> bool {
    steps.windows(2).all(|w| {
        w[1].report.result_subset.reduction_pct + tolerance >= w[0].report.result_subset.reduction_pct
    })
}
