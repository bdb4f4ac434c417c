#![allow(dead_code)]

/// Five-turn ICU weight interaction: two lookups, last and first weight,
/// then their difference.
pub const ICU_WEIGHT_TURNS: [&str; 5] = [
    "SELECT icustays.icustay_id FROM icustays WHERE icustays.hadm_id IN ( SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = 30826 AND admissions.dischtime IS NULL )",
    "SELECT d_items.itemid FROM d_items WHERE d_items.label = 'admit wt' AND d_items.linksto = 'chartevents'",
    "SELECT chartevents.valuenum FROM chartevents WHERE chartevents.icustay_id IN ( PREV_RESULT1 ) AND chartevents.itemid IN ( PREV_RESULT2 ) ORDER BY chartevents.charttime DESC LIMIT 1",
    "SELECT chartevents.valuenum FROM chartevents WHERE chartevents.icustay_id IN ( PREV_RESULT1 ) AND chartevents.itemid IN ( PREV_RESULT2 ) ORDER BY chartevents.charttime ASC LIMIT 1",
    "SELECT ( PREV_RESULT3 ) - ( PREV_RESULT4 )",
];

pub const ICU_WEIGHT_LAST_STANDARD: &str = "SELECT chartevents.valuenum FROM chartevents WHERE chartevents.icustay_id IN ( SELECT icustays.icustay_id FROM icustays WHERE icustays.hadm_id IN ( SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = 30826 AND admissions.dischtime IS NULL ) ) AND chartevents.itemid IN ( SELECT d_items.itemid FROM d_items WHERE d_items.label = 'admit wt' AND d_items.linksto = 'chartevents' ) ORDER BY chartevents.charttime DESC LIMIT 1";

pub const ICU_WEIGHT_DIFF_STANDARD: &str = "SELECT ( SELECT chartevents.valuenum FROM chartevents WHERE chartevents.icustay_id IN ( SELECT icustays.icustay_id FROM icustays WHERE icustays.hadm_id IN ( SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = 30826 AND admissions.dischtime IS NULL ) ) AND chartevents.itemid IN ( SELECT d_items.itemid FROM d_items WHERE d_items.label = 'admit wt' AND d_items.linksto = 'chartevents' ) ORDER BY chartevents.charttime DESC LIMIT 1 ) - ( SELECT chartevents.valuenum FROM chartevents WHERE chartevents.icustay_id IN ( SELECT icustays.icustay_id FROM icustays WHERE icustays.hadm_id IN ( SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = 30826 AND admissions.dischtime IS NULL ) ) AND chartevents.itemid IN ( SELECT d_items.itemid FROM d_items WHERE d_items.label = 'admit wt' AND d_items.linksto = 'chartevents' ) ORDER BY chartevents.charttime ASC LIMIT 1 )";

/// Replace the patient id of the ICU weight texts.
pub fn with_patient(text: &str, subject_id: i64) -> String {
    text.replace("30826", &subject_id.to_string())
}

/// Three compositions: a lab-value comparison, a maximum vital value and a
/// vital-value comparison whose clauses all occur in the first two.
pub const COMPOSITION_TRIPLE: [&str; 3] = [
    "SELECT ( SELECT labevents.valuenum FROM labevents WHERE labevents.hadm_id IN ( SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = 71192 AND admissions.dischtime IS NULL ) AND labevents.itemid IN ( SELECT d_labitems.itemid FROM d_labitems WHERE d_labitems.label = 'glucose' ) ORDER BY labevents.charttime DESC LIMIT 1 ) < ( SELECT labevents.valuenum FROM labevents WHERE labevents.hadm_id IN ( SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = 71192 AND admissions.dischtime IS NULL ) AND labevents.itemid IN ( SELECT d_labitems.itemid FROM d_labitems WHERE d_labitems.label = 'glucose' ) ORDER BY labevents.charttime DESC LIMIT 1 OFFSET 1 )",
    "SELECT MAX(chartevents.valuenum) FROM chartevents WHERE chartevents.icustay_id IN ( SELECT icustays.icustay_id FROM icustays WHERE icustays.hadm_id IN ( SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = 18866 ) ) AND chartevents.itemid IN ( SELECT d_items.itemid FROM d_items WHERE d_items.label = 'arterial bp [diastolic]' AND d_items.linksto = 'chartevents' ) AND DATETIME(chartevents.charttime, 'start of day') = DATETIME('2105-12-31 23:59:00', 'start of day', '-1 day')",
    "SELECT ( SELECT chartevents.valuenum FROM chartevents WHERE chartevents.icustay_id IN ( SELECT icustays.icustay_id FROM icustays WHERE icustays.hadm_id IN ( SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = 25461 ) AND icustays.outtime IS NULL ) AND chartevents.itemid IN ( SELECT d_items.itemid FROM d_items WHERE d_items.label = 'arterial bp [diastolic]' AND d_items.linksto = 'chartevents' ) ORDER BY chartevents.charttime DESC LIMIT 1 ) > ( SELECT chartevents.valuenum FROM chartevents WHERE chartevents.icustay_id IN ( SELECT icustays.icustay_id FROM icustays WHERE icustays.hadm_id IN ( SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = 25461 ) AND icustays.outtime IS NULL ) AND chartevents.itemid IN ( SELECT d_items.itemid FROM d_items WHERE d_items.label = 'arterial bp [diastolic]' AND d_items.linksto = 'chartevents' ) ORDER BY chartevents.charttime DESC LIMIT 1 OFFSET 1 )",
];

pub const NATEGLINIDE_LIST: &str = "SELECT admissions.subject_id, prescriptions.startdate FROM prescriptions JOIN admissions ON prescriptions.hadm_id = admissions.hadm_id WHERE prescriptions.drug = 'nateglinide' AND DATETIME(prescriptions.startdate, 'start of year') = DATETIME('2105-12-31 23:59:00', 'start of year', '-1 year')";

pub const NATEGLINIDE_LIST_NLQ: &str =
    "List all patient ids and their prescription time associated with nateglinide last year.";

/// Path of a cached synthetic database for the given size and seed,
/// generating it on first use.
pub fn synth_db_path(n_patients: usize, seed: u64) -> std::path::PathBuf {
    use seqsql::synth::{synth_db, SynthDbSpec, GENERATOR_VERSION};
    static LOCK: std::sync::Mutex<()> = std::sync::Mutex::new(());
    let dir = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let path = dir.join(format!("synth-v{GENERATOR_VERSION}-{n_patients}-{seed}.db"));
    let _guard = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    if !path.exists() {
        let tmp = dir.join(format!(
            "synth-v{GENERATOR_VERSION}-{n_patients}-{seed}.{}.tmp",
            std::process::id()
        ));
        let _ = std::fs::remove_file(&tmp);
        synth_db(&SynthDbSpec::new(n_patients, seed), &tmp).expect("generate database");
        std::fs::rename(&tmp, &path).expect("publish database");
    }
    path
}

/// A patient whose open admission has an ICU stay.
pub fn current_icu_patient(db: &seqsql::session::Database) -> i64 {
    db.connection()
        .query_row(
            "SELECT a.subject_id FROM admissions AS a JOIN icustays AS i ON a.hadm_id = i.hadm_id WHERE a.dischtime IS NULL ORDER BY a.subject_id LIMIT 1",
            [],
            |r| r.get(0),
        )
        .expect("an open admission with an ICU stay")
}

/// An interaction record over the given turn texts with placeholder
/// questions.
pub fn record_of(id: &str, sqls: &[&str]) -> seqsql::io::InteractionRecord {
    use seqsql::decompose::{Origin, TurnSql};
    use seqsql::io::{InteractionRecord, InteractionTurn, Provenance, INTERACTION_FORMAT_VERSION};
    let turns: Vec<TurnSql> = sqls
        .iter()
        .enumerate()
        .map(|(i, s)| TurnSql::new(i + 1, seqsql::sql::parse_sql(s).expect("turn parses"), Origin::Stage1))
        .collect();
    InteractionRecord {
        format_version: INTERACTION_FORMAT_VERSION,
        interaction_id: id.to_string(),
        goal_nlq: None,
        turns: turns
            .iter()
            .map(|t| InteractionTurn {
                index: t.index,
                nlq: format!("question {}", t.index),
                sql: t.sql(),
                origin: None,
                categories: seqsql::nlq::categorize_turn(&turns, t.index),
            })
            .collect(),
        provenance: Provenance::default(),
    }
}
