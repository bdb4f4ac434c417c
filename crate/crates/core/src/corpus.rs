//! Seeded generator of standalone EHR questions in SQL form, drawn from a
//! fixed set of query families whose condition values are sampled from a
//! synthetic database, and assembly of those questions into interactions.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rusqlite::Connection;
use thiserror::Error;

use crate::decompose::{
    decompose_pipeline, merge_frequent, DecomposeConfig, DecomposeError, DecompositionPlan,
    MergeConfig,
};
use crate::io::{InteractionRecord, InteractionTurn, Provenance, INTERACTION_FORMAT_VERSION};
use crate::nlq::{categorize_turn, NlqError, NlqGenerator};
use crate::sql::{parse_select, render_select, Statement};

use crate::synth::{CHART_ITEMS, DIAGNOSES, DRUGS, INPUT_ITEMS, LAB_ITEMS, NOW, OUTPUT_ITEMS};

/// Condition values available in a database.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub subjects: Vec<i64>,
    /// Patients with an open admission.
    pub current_subjects: Vec<i64>,
    /// Patients whose open admission has an open ICU stay.
    pub current_icu_subjects: Vec<i64>,
    pub years: Vec<i32>,
}

impl Vocabulary {
    pub fn from_connection(conn: &Connection) -> rusqlite::Result<Self> {
        let ids = |sql: &str| -> rusqlite::Result<Vec<i64>> {
            let mut stmt = conn.prepare(sql)?;
            let rows = stmt.query_map([], |r| r.get(0))?;
            rows.collect()
        };
        let subjects = ids("SELECT DISTINCT subject_id FROM admissions ORDER BY subject_id")?;
        let current_subjects = ids(
            "SELECT DISTINCT subject_id FROM admissions WHERE dischtime IS NULL ORDER BY subject_id",
        )?;
        let current_icu_subjects = ids(
            "SELECT DISTINCT subject_id FROM icustays WHERE outtime IS NULL ORDER BY subject_id",
        )?;
        let years = ids(
            "SELECT DISTINCT CAST(STRFTIME('%Y', admittime) AS INTEGER) AS y FROM admissions ORDER BY y",
        )?
        .into_iter()
        .map(|y| y as i32)
        .collect();
        Ok(Vocabulary {
            subjects,
            current_subjects,
            current_icu_subjects,
            years,
        })
    }

    fn subject(&self, rng: &mut ChaCha8Rng) -> i64 {
        *self.subjects.choose(rng).expect("database has patients")
    }

    fn current_subject(&self, rng: &mut ChaCha8Rng) -> i64 {
        match self.current_subjects.choose(rng) {
            Some(s) => *s,
            None => self.subject(rng),
        }
    }

    fn current_icu_subject(&self, rng: &mut ChaCha8Rng) -> i64 {
        match self.current_icu_subjects.choose(rng) {
            Some(s) => *s,
            None => self.current_subject(rng),
        }
    }

    fn year(&self, rng: &mut ChaCha8Rng) -> i32 {
        self.years.choose(rng).copied().unwrap_or(2105)
    }
}

/// One generated question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedQuery {
    pub id: String,
    pub family: &'static str,
    pub sql: String,
}

type FamilyFn = fn(&mut ChaCha8Rng, &Vocabulary) -> String;

/// Query families in generation order.
pub const FAMILIES: &[(&str, FamilyFn)] = &[
    ("vital_last_current_icu", vital_last_current_icu),
    ("vital_difference", vital_difference),
    ("vital_comparison", vital_comparison),
    ("vital_aggregate", vital_aggregate),
    ("lab_comparison", lab_comparison),
    ("lab_first_visit", lab_first_visit),
    ("lab_count_since", lab_count_since),
    ("drug_any_this_year", drug_any_this_year),
    ("input_total_current_icu", input_total_current_icu),
    ("diagnosis_patient_count", diagnosis_patient_count),
    ("drugs_current_visit", drugs_current_visit),
    ("top_drugs_after_drug", top_drugs_after_drug),
    ("top_lab_tests", top_lab_tests),
    ("drugs_n_times", drugs_n_times),
    ("cost_current_visit", cost_current_visit),
    ("age_group_count", age_group_count),
    ("micro_last_specimen", micro_last_specimen),
    ("first_procedure", first_procedure),
    ("output_total", output_total),
    ("diagnosis_count", diagnosis_count),
    ("last_prescription_time", last_prescription_time),
    ("drug_patient_list", drug_patient_list),
    ("drug_route", drug_route),
    ("lab_cost", lab_cost),
    ("current_patient_count", current_patient_count),
    ("patient_gender", patient_gender),
];

/// `n` queries cycling through the families, values drawn with `seed`.
pub fn generate_queries(vocab: &Vocabulary, n: usize, seed: u64) -> Vec<GeneratedQuery> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (family, f) = FAMILIES[i % FAMILIES.len()];
            GeneratedQuery {
                id: format!("q{:05}", i + 1),
                family,
                sql: f(&mut rng, vocab),
            }
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("{id}: {source}")]
    Decompose {
        id: String,
        source: DecomposeError,
    },
    #[error("{id} turn {turn}: {source}")]
    Nlq {
        id: String,
        turn: usize,
        source: NlqError,
    },
}

/// Decompose queries, optionally merge frequent turn pairs, and attach
/// questions and categories. Questions draw paraphrases from one seeded
/// stream in corpus order.
pub fn build_interactions(
    queries: &[GeneratedQuery],
    decompose: &DecomposeConfig,
    merge: Option<&MergeConfig>,
    nlq: &NlqGenerator,
    seed: u64,
) -> Result<Vec<InteractionRecord>, BuildError> {
    let mut plans = Vec::with_capacity(queries.len());
    for q in queries {
        let err = |source| BuildError::Decompose {
            id: q.id.clone(),
            source,
        };
        let source = parse_select(&q.sql).map_err(|e| err(e.into()))?;
        plans.push(decompose_pipeline(&q.id, &source, decompose).map_err(err)?);
    }
    if let Some(m) = merge {
        plans = merge_frequent(&plans, m, &decompose.mask).0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    queries
        .iter()
        .zip(&plans)
        .map(|(q, plan)| interaction_of(plan, Some(q.family), nlq, &mut rng))
        .collect()
}

/// Parameters of the bundled mini corpus: database size and seed, query
/// count and seed, question seed.
pub const MINI_CORPUS_DB: (usize, u64) = (1000, 1);
pub const MINI_CORPUS_QUERIES: (usize, u64) = (130, 2024);
pub const MINI_CORPUS_NLQ_SEED: u64 = 7;

const MINI_CORPUS: &str = include_str!("../data/mini_corpus.jsonl");

/// The bundled mini corpus.
pub fn bundled_interactions() -> Vec<InteractionRecord> {
    crate::io::read_versioned(MINI_CORPUS.as_bytes()).expect("bundled corpus parses")
}

/// Rebuild the mini corpus from a database generated with
/// [`MINI_CORPUS_DB`].
pub fn build_mini_corpus(conn: &Connection) -> Result<Vec<InteractionRecord>, BuildError> {
    let vocab = Vocabulary::from_connection(conn).expect("synthetic schema");
    let (n, seed) = MINI_CORPUS_QUERIES;
    build_interactions(
        &generate_queries(&vocab, n, seed),
        &DecomposeConfig::default(),
        Some(&MergeConfig::default()),
        &NlqGenerator::bundled(),
        MINI_CORPUS_NLQ_SEED,
    )
}

/// Interaction record of one plan.
pub fn interaction_of(
    plan: &DecompositionPlan,
    family: Option<&str>,
    nlq: &NlqGenerator,
    rng: &mut ChaCha8Rng,
) -> Result<InteractionRecord, BuildError> {
    let nlq_err = |turn, source| BuildError::Nlq {
        id: plan.id.clone(),
        turn,
        source,
    };
    let source = Statement::from(plan.source.clone());
    let goal = nlq.generate_with(&source, rng).map_err(|e| nlq_err(0, e))?;
    let turns = plan
        .turns
        .iter()
        .map(|t| {
            Ok(InteractionTurn {
                index: t.index,
                nlq: nlq.generate_with(&t.stmt, rng).map_err(|e| nlq_err(t.index, e))?,
                sql: t.sql(),
                origin: Some(t.origin),
                categories: categorize_turn(&plan.turns, t.index),
            })
        })
        .collect::<Result<Vec<_>, BuildError>>()?;
    Ok(InteractionRecord {
        format_version: INTERACTION_FORMAT_VERSION,
        interaction_id: plan.id.clone(),
        goal_nlq: Some(goal),
        turns,
        provenance: Provenance {
            source: Some(render_select(&plan.source)),
            family: family.map(str::to_string),
            ..Provenance::default()
        },
    })
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    items.choose(rng).expect("non-empty vocabulary")
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

fn admissions_of(subject: i64, open: bool) -> String {
    let open = if open { " AND admissions.dischtime IS NULL" } else { "" };
    format!("SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = {subject}{open}")
}

fn icustays_of(subject: i64, open_admission: bool, open_stay: bool) -> String {
    let open = if open_stay { " AND icustays.outtime IS NULL" } else { "" };
    format!(
        "SELECT icustays.icustay_id FROM icustays WHERE icustays.hadm_id IN ( {} ){open}",
        admissions_of(subject, open_admission)
    )
}

fn item_of(label: &str, linksto: &str) -> String {
    format!(
        "SELECT d_items.itemid FROM d_items WHERE d_items.label = {} AND d_items.linksto = '{linksto}'",
        quote(label)
    )
}

fn lab_item_of(label: &str) -> String {
    format!(
        "SELECT d_labitems.itemid FROM d_labitems WHERE d_labitems.label = {}",
        quote(label)
    )
}

fn chart_label(rng: &mut ChaCha8Rng) -> &'static str {
    pick(rng, &CHART_ITEMS).0
}

fn lab_label(rng: &mut ChaCha8Rng) -> &'static str {
    pick(rng, &LAB_ITEMS).0
}

fn drug(rng: &mut ChaCha8Rng) -> &'static str {
    pick(rng, &DRUGS).0
}

fn direction(rng: &mut ChaCha8Rng) -> &'static str {
    if rng.random_bool(0.5) {
        "DESC"
    } else {
        "ASC"
    }
}

/// Relative calendar filter: this or last year, month or day.
fn calendar_filter(rng: &mut ChaCha8Rng, column: &str, units: &[&str]) -> String {
    let unit = *pick(rng, units);
    let back = rng.random_range(0..=1);
    format!("DATETIME({column}, 'start of {unit}') = DATETIME('{NOW}', 'start of {unit}', '-{back} {unit}')")
}

fn since_filter(rng: &mut ChaCha8Rng, column: &str, unit: &str, max: u32) -> String {
    let n = rng.random_range(1..=max);
    format!("DATETIME({column}) >= DATETIME('{NOW}', '-{n} {unit}')")
}

fn year_filter(rng: &mut ChaCha8Rng, vocab: &Vocabulary, column: &str, ops: &[&str]) -> String {
    let op = *pick(rng, ops);
    format!("STRFTIME('%Y', {column}) {op} '{}'", vocab.year(rng))
}

fn month_filter(rng: &mut ChaCha8Rng, vocab: &Vocabulary, column: &str, ops: &[&str]) -> String {
    let op = *pick(rng, ops);
    let month = rng.random_range(1..=12);
    format!("STRFTIME('%Y-%m', {column}) {op} '{}-{month:02}'", vocab.year(rng))
}

fn chart_value(subject: i64, label: &str, open_admission: bool, open_stay: bool, tail: &str) -> String {
    format!(
        "SELECT chartevents.valuenum FROM chartevents WHERE chartevents.icustay_id IN ( {} ) AND chartevents.itemid IN ( {} ) {tail}",
        icustays_of(subject, open_admission, open_stay),
        item_of(label, "chartevents")
    )
}

fn lab_value(admissions: &str, label: &str, tail: &str) -> String {
    format!(
        "SELECT labevents.valuenum FROM labevents WHERE labevents.hadm_id IN ( {admissions} ) AND labevents.itemid IN ( {} ) {tail}",
        lab_item_of(label)
    )
}

fn vital_last_current_icu(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.current_icu_subject(rng);
    let label = chart_label(rng);
    let dir = direction(rng);
    chart_value(s, label, true, false, &format!("ORDER BY chartevents.charttime {dir} LIMIT 1"))
}

fn vital_difference(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.current_icu_subject(rng);
    let label = chart_label(rng);
    let last = chart_value(s, label, true, false, "ORDER BY chartevents.charttime DESC LIMIT 1");
    let other = if rng.random_bool(0.5) {
        "ORDER BY chartevents.charttime ASC LIMIT 1"
    } else {
        "ORDER BY chartevents.charttime DESC LIMIT 1 OFFSET 1"
    };
    let other = chart_value(s, label, true, false, other);
    format!("SELECT ( {last} ) - ( {other} )")
}

fn vital_comparison(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.current_icu_subject(rng);
    let label = chart_label(rng);
    let op = *pick(rng, &[">", "<"]);
    let last = chart_value(s, label, false, true, "ORDER BY chartevents.charttime DESC LIMIT 1");
    let prior = chart_value(s, label, false, true, "ORDER BY chartevents.charttime DESC LIMIT 1 OFFSET 1");
    format!("SELECT ( {last} ) {op} ( {prior} )")
}

fn vital_aggregate(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.current_icu_subject(rng);
    let label = chart_label(rng);
    let agg = *pick(rng, &["MAX", "MIN", "AVG"]);
    let filter = if rng.random_bool(0.5) {
        calendar_filter(rng, "chartevents.charttime", &["day"])
    } else {
        since_filter(rng, "chartevents.charttime", "day", 10)
    };
    format!(
        "SELECT {agg}(chartevents.valuenum) FROM chartevents WHERE chartevents.icustay_id IN ( {} ) AND chartevents.itemid IN ( {} ) AND {filter}",
        icustays_of(s, false, false),
        item_of(label, "chartevents")
    )
}

fn lab_comparison(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.current_subject(rng);
    let label = lab_label(rng);
    let op = *pick(rng, &[">", "<"]);
    let adm = admissions_of(s, true);
    let last = lab_value(&adm, label, "ORDER BY labevents.charttime DESC LIMIT 1");
    let prior = lab_value(&adm, label, "ORDER BY labevents.charttime DESC LIMIT 1 OFFSET 1");
    format!("SELECT ( {last} ) {op} ( {prior} )")
}

fn lab_first_visit(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.subject(rng);
    let label = lab_label(rng);
    let dir = direction(rng);
    let adm = format!(
        "SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = {s} AND admissions.dischtime IS NOT NULL ORDER BY admissions.admittime ASC LIMIT 1"
    );
    lab_value(&adm, label, &format!("ORDER BY labevents.charttime {dir} LIMIT 1"))
}

fn lab_count_since(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.subject(rng);
    let label = lab_label(rng);
    let filter = since_filter(rng, "labevents.charttime", "year", 5);
    format!(
        "SELECT COUNT(*) FROM labevents WHERE labevents.itemid IN ( {} ) AND labevents.hadm_id IN ( {} ) AND {filter}",
        lab_item_of(label),
        admissions_of(s, false)
    )
}

fn drug_any_this_year(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.subject(rng);
    let d = drug(rng);
    let filter = calendar_filter(rng, "prescriptions.startdate", &["year"]);
    format!(
        "SELECT COUNT(*) > 0 FROM prescriptions WHERE prescriptions.hadm_id IN ( {} ) AND prescriptions.drug = {} AND {filter}",
        admissions_of(s, false),
        quote(d)
    )
}

fn input_total_current_icu(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.current_icu_subject(rng);
    let label = *pick(rng, &INPUT_ITEMS);
    format!(
        "SELECT SUM(inputevents_cv.amount) FROM inputevents_cv WHERE inputevents_cv.icustay_id IN ( {} ) AND inputevents_cv.itemid IN ( {} )",
        icustays_of(s, false, true),
        item_of(label, "inputevents_cv")
    )
}

fn diagnosis_patient_count(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let code = *pick(rng, &DIAGNOSES);
    let filter = year_filter(rng, vocab, "diagnoses_icd.charttime", &["=", ">="]);
    format!(
        "SELECT COUNT(DISTINCT admissions.subject_id) FROM admissions WHERE admissions.hadm_id IN ( SELECT diagnoses_icd.hadm_id FROM diagnoses_icd WHERE diagnoses_icd.icd9_code = '{code}' AND {filter} )"
    )
}

fn drugs_current_visit(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.current_subject(rng);
    let filter = calendar_filter(rng, "prescriptions.startdate", &["day"]);
    format!(
        "SELECT prescriptions.drug FROM prescriptions WHERE prescriptions.hadm_id IN ( {} ) AND {filter}",
        admissions_of(s, true)
    )
}

fn top_drugs_after_drug(rng: &mut ChaCha8Rng, _vocab: &Vocabulary) -> String {
    let d = drug(rng);
    let back = rng.random_range(0..=1);
    let n = rng.random_range(3..=5);
    let window = *pick(rng, &["month", "day"]);
    let year = format!("DATETIME(prescriptions.startdate, 'start of year') = DATETIME('{NOW}', 'start of year', '-{back} year')");
    format!(
        "SELECT t3.drug FROM ( SELECT t2.drug, DENSE_RANK() OVER ( ORDER BY COUNT(*) DESC ) AS c1 FROM ( SELECT admissions.subject_id, prescriptions.startdate FROM prescriptions JOIN admissions ON prescriptions.hadm_id = admissions.hadm_id WHERE prescriptions.drug = {} AND {year} ) AS t1 JOIN ( SELECT admissions.subject_id, prescriptions.drug, prescriptions.startdate FROM prescriptions JOIN admissions ON prescriptions.hadm_id = admissions.hadm_id WHERE {year} ) AS t2 ON t1.subject_id = t2.subject_id WHERE t1.startdate < t2.startdate AND DATETIME(t1.startdate, 'start of {window}') = DATETIME(t2.startdate, 'start of {window}') GROUP BY t2.drug ) AS t3 WHERE t3.c1 <= {n}",
        quote(d)
    )
}

fn top_lab_tests(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let n = rng.random_range(3..=5);
    let filter = if rng.random_bool(0.5) {
        since_filter(rng, "labevents.charttime", "year", 5)
    } else {
        year_filter(rng, vocab, "labevents.charttime", &["="])
    };
    format!(
        "SELECT d_labitems.label FROM d_labitems WHERE d_labitems.itemid IN ( SELECT t1.itemid FROM ( SELECT labevents.itemid, DENSE_RANK() OVER ( ORDER BY COUNT(*) DESC ) AS c1 FROM labevents WHERE {filter} GROUP BY labevents.itemid ) AS t1 WHERE t1.c1 <= {n} )"
    )
}

fn drugs_n_times(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.subject(rng);
    let times = rng.random_range(2..=3);
    let filter = month_filter(rng, vocab, "prescriptions.startdate", &["=", ">="]);
    format!(
        "SELECT prescriptions.drug FROM prescriptions WHERE prescriptions.hadm_id IN ( {} ) AND {filter} GROUP BY prescriptions.drug HAVING COUNT(*) >= {times}",
        admissions_of(s, false)
    )
}

fn cost_current_visit(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.current_subject(rng);
    format!(
        "SELECT SUM(cost.cost) FROM cost WHERE cost.hadm_id IN ( {} )",
        admissions_of(s, true)
    )
}

fn age_group_count(rng: &mut ChaCha8Rng, _vocab: &Vocabulary) -> String {
    let age = match rng.random_range(0..5) {
        4 => "admissions.age >= 60".to_string(),
        k => {
            let lo = 20 + 10 * k;
            format!("admissions.age BETWEEN {lo} AND {}", lo + 9)
        }
    };
    let filter = calendar_filter(rng, "admissions.admittime", &["year"]);
    format!(
        "SELECT COUNT(DISTINCT admissions.subject_id) FROM admissions WHERE {age} AND {filter}"
    )
}

fn micro_last_specimen(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.subject(rng);
    let filter = month_filter(rng, vocab, "microbiologyevents.charttime", &[">="]);
    format!(
        "SELECT microbiologyevents.spec_type_desc FROM microbiologyevents WHERE microbiologyevents.hadm_id IN ( {} ) AND microbiologyevents.org_name IS NOT NULL AND {filter} ORDER BY microbiologyevents.charttime DESC LIMIT 1",
        admissions_of(s, false)
    )
}

fn first_procedure(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.subject(rng);
    let filter = year_filter(rng, vocab, "procedures_icd.charttime", &["=", ">="]);
    format!(
        "SELECT procedures_icd.icd9_code FROM procedures_icd WHERE procedures_icd.hadm_id IN ( {} ) AND {filter} ORDER BY procedures_icd.charttime ASC LIMIT 1",
        admissions_of(s, false)
    )
}

fn output_total(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.current_icu_subject(rng);
    let label = *pick(rng, &OUTPUT_ITEMS);
    let filter = since_filter(rng, "outputevents.charttime", "day", 10);
    format!(
        "SELECT SUM(outputevents.value) FROM outputevents WHERE outputevents.icustay_id IN ( {} ) AND outputevents.itemid IN ( {} ) AND {filter}",
        icustays_of(s, false, false),
        item_of(label, "outputevents")
    )
}

fn diagnosis_count(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.subject(rng);
    let code = *pick(rng, &DIAGNOSES);
    format!(
        "SELECT COUNT(*) FROM diagnoses_icd WHERE diagnoses_icd.icd9_code = '{code}' AND diagnoses_icd.hadm_id IN ( {} )",
        admissions_of(s, false)
    )
}

fn last_prescription_time(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    let s = vocab.subject(rng);
    let d = drug(rng);
    let filter = year_filter(rng, vocab, "prescriptions.startdate", &[">="]);
    format!(
        "SELECT prescriptions.startdate FROM prescriptions WHERE prescriptions.hadm_id IN ( {} ) AND prescriptions.drug = {} AND {filter} ORDER BY prescriptions.startdate DESC LIMIT 1",
        admissions_of(s, false),
        quote(d)
    )
}

fn drug_patient_list(rng: &mut ChaCha8Rng, _vocab: &Vocabulary) -> String {
    let d = drug(rng);
    let filter = calendar_filter(rng, "prescriptions.startdate", &["year"]);
    format!(
        "SELECT admissions.subject_id, prescriptions.startdate FROM prescriptions JOIN admissions ON prescriptions.hadm_id = admissions.hadm_id WHERE prescriptions.drug = {} AND {filter}",
        quote(d)
    )
}

fn drug_route(rng: &mut ChaCha8Rng, _vocab: &Vocabulary) -> String {
    format!(
        "SELECT DISTINCT prescriptions.route FROM prescriptions WHERE prescriptions.drug = {}",
        quote(drug(rng))
    )
}

fn lab_cost(rng: &mut ChaCha8Rng, _vocab: &Vocabulary) -> String {
    format!(
        "SELECT DISTINCT cost.cost FROM cost WHERE cost.event_type = 'labevents' AND cost.event_id IN ( SELECT labevents.row_id FROM labevents WHERE labevents.itemid IN ( {} ) )",
        lab_item_of(lab_label(rng))
    )
}

fn current_patient_count(_rng: &mut ChaCha8Rng, _vocab: &Vocabulary) -> String {
    "SELECT COUNT(DISTINCT admissions.subject_id) FROM admissions WHERE admissions.dischtime IS NULL".to_string()
}

fn patient_gender(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> String {
    format!(
        "SELECT DISTINCT admissions.gender FROM admissions WHERE admissions.subject_id = {}",
        vocab.subject(rng)
    )
}
