//! Seeded synthetic EHR-style database with a 13-table schema.

use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rusqlite::{params, Connection};
use serde::{Deserialize, Serialize};

/// Reference "current time" that relative time filters are anchored to.
pub const NOW: &str = "2105-12-31 23:59:00";

pub const TABLES: [&str; 13] = [
    "admissions",
    "icustays",
    "d_items",
    "chartevents",
    "d_labitems",
    "labevents",
    "prescriptions",
    "microbiologyevents",
    "outputevents",
    "inputevents_cv",
    "cost",
    "diagnoses_icd",
    "procedures_icd",
];

pub const SCHEMA: &str = "
CREATE TABLE admissions (row_id INTEGER PRIMARY KEY, subject_id INTEGER NOT NULL, hadm_id INTEGER NOT NULL, admittime TEXT NOT NULL, dischtime TEXT, admission_type TEXT, admission_location TEXT, discharge_location TEXT, insurance TEXT, age INTEGER, dob TEXT, dod TEXT, gender TEXT);
CREATE TABLE icustays (row_id INTEGER PRIMARY KEY, subject_id INTEGER NOT NULL, hadm_id INTEGER NOT NULL, icustay_id INTEGER NOT NULL, first_careunit TEXT, intime TEXT, outtime TEXT);
CREATE TABLE d_items (row_id INTEGER PRIMARY KEY, itemid INTEGER NOT NULL, label TEXT, linksto TEXT);
CREATE TABLE chartevents (row_id INTEGER PRIMARY KEY, subject_id INTEGER NOT NULL, hadm_id INTEGER NOT NULL, icustay_id INTEGER NOT NULL, itemid INTEGER NOT NULL, charttime TEXT, valuenum REAL, valueuom TEXT);
CREATE TABLE d_labitems (row_id INTEGER PRIMARY KEY, itemid INTEGER NOT NULL, label TEXT);
CREATE TABLE labevents (row_id INTEGER PRIMARY KEY, subject_id INTEGER NOT NULL, hadm_id INTEGER NOT NULL, itemid INTEGER NOT NULL, charttime TEXT, valuenum REAL, valueuom TEXT);
CREATE TABLE prescriptions (row_id INTEGER PRIMARY KEY, subject_id INTEGER NOT NULL, hadm_id INTEGER NOT NULL, startdate TEXT, enddate TEXT, drug TEXT, dose_val_rx REAL, dose_unit_rx TEXT, route TEXT);
CREATE TABLE microbiologyevents (row_id INTEGER PRIMARY KEY, subject_id INTEGER NOT NULL, hadm_id INTEGER NOT NULL, charttime TEXT, spec_type_desc TEXT, org_name TEXT);
CREATE TABLE outputevents (row_id INTEGER PRIMARY KEY, subject_id INTEGER NOT NULL, hadm_id INTEGER NOT NULL, icustay_id INTEGER NOT NULL, charttime TEXT, itemid INTEGER NOT NULL, value REAL);
CREATE TABLE inputevents_cv (row_id INTEGER PRIMARY KEY, subject_id INTEGER NOT NULL, hadm_id INTEGER NOT NULL, icustay_id INTEGER NOT NULL, charttime TEXT, itemid INTEGER NOT NULL, amount REAL);
CREATE TABLE cost (row_id INTEGER PRIMARY KEY, subject_id INTEGER NOT NULL, hadm_id INTEGER NOT NULL, event_type TEXT, event_id INTEGER NOT NULL, chargetime TEXT, cost REAL);
CREATE TABLE diagnoses_icd (row_id INTEGER PRIMARY KEY, subject_id INTEGER NOT NULL, hadm_id INTEGER NOT NULL, icd9_code TEXT, charttime TEXT);
CREATE TABLE procedures_icd (row_id INTEGER PRIMARY KEY, subject_id INTEGER NOT NULL, hadm_id INTEGER NOT NULL, icd9_code TEXT, charttime TEXT);
";

/// Chart items with their unit.
pub const CHART_ITEMS: [(&str, &str); 9] = [
    ("admit wt", "kg"),
    ("admit ht", "cm"),
    ("arterial bp [diastolic]", "mmhg"),
    ("arterial bp [systolic]", "mmhg"),
    ("arterial bp mean", "mmhg"),
    ("heart rate", "bpm"),
    ("respiratory rate", "bpm"),
    ("sao2", "%"),
    ("temperature c (calc)", "deg. c"),
];
pub const INPUT_ITEMS: [&str; 5] = ["d5w", "tpn", "ns", "lr", "insulin drip"];
pub const OUTPUT_ITEMS: [&str; 4] = [
    "urine out foley",
    "chest tubes cticu ct 1",
    "ostomy (output)",
    "gastric oral",
];
pub const LAB_ITEMS: [(&str, &str); 10] = [
    ("glucose", "mg/dl"),
    ("hemoglobin", "g/dl"),
    ("potassium", "meq/l"),
    ("sodium", "meq/l"),
    ("creatinine", "mg/dl"),
    ("chloride", "meq/l"),
    ("bicarbonate", "meq/l"),
    ("white blood cells", "k/ul"),
    ("platelet count", "k/ul"),
    ("magnesium", "mg/dl"),
];
/// Drugs with their dose unit and route.
pub const DRUGS: [(&str, &str, &str); 12] = [
    ("nateglinide", "mg", "po"),
    ("aspirin", "mg", "po"),
    ("insulin", "unit", "sc"),
    ("furosemide", "mg", "iv"),
    ("metoprolol", "mg", "po"),
    ("heparin", "unit", "sc"),
    ("acetaminophen", "mg", "po"),
    ("vancomycin", "g", "iv"),
    ("potassium chloride", "meq", "iv"),
    ("docusate sodium", "mg", "po"),
    ("pantoprazole", "mg", "iv"),
    ("lisinopril", "mg", "po"),
];
pub const DIAGNOSES: [&str; 10] = [
    "4019", "4280", "42731", "41401", "5849", "25000", "2724", "51881", "5990", "53081",
];
pub const PROCEDURES: [&str; 8] = ["3893", "9604", "9671", "3961", "8856", "9904", "3995", "9672"];
pub const SPECIMENS: [&str; 5] = ["blood culture", "urine", "sputum", "mrsa screen", "swab"];
pub const ORGANISMS: [&str; 4] = [
    "staph aureus coag +",
    "escherichia coli",
    "klebsiella pneumoniae",
    "pseudomonas aeruginosa",
];
const CAREUNITS: [&str; 5] = ["micu", "sicu", "ccu", "csru", "tsicu"];
const ADMISSION_TYPES: [&str; 3] = ["emergency", "elective", "urgent"];
const ADMIT_LOCATIONS: [&str; 3] = [
    "emergency room admit",
    "phys referral/normal deli",
    "transfer from hosp/extram",
];
const DISCHARGE_LOCATIONS: [&str; 4] = ["home", "home health care", "snf", "rehab/distinct part hosp"];
const INSURANCE: [&str; 4] = ["medicare", "private", "medicaid", "government"];

/// Bumped whenever generated content changes for a given spec.
pub const GENERATOR_VERSION: u32 = 1;

pub const FIRST_SUBJECT_ID: i64 = 10001;
const FIRST_HADM_ID: i64 = 100001;
const FIRST_ICUSTAY_ID: i64 = 200001;
pub const FIRST_CHART_ITEMID: i64 = 211;
pub const FIRST_LAB_ITEMID: i64 = 50801;

/// Mean row counts of the per-patient generative process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMultipliers {
    pub admissions_per_patient: f64,
    pub icustays_per_admission: f64,
    pub chartevents_per_icustay: f64,
    pub inputevents_per_icustay: f64,
    pub outputevents_per_icustay: f64,
    pub labevents_per_admission: f64,
    pub prescriptions_per_admission: f64,
    pub microbiology_per_admission: f64,
    pub diagnoses_per_admission: f64,
    pub procedures_per_admission: f64,
    /// Probability that a patient's latest admission is still open.
    pub current_admission_rate: f64,
}

impl Default for RowMultipliers {
    fn default() -> Self {
        RowMultipliers {
            admissions_per_patient: 1.6,
            icustays_per_admission: 1.0,
            chartevents_per_icustay: 40.0,
            inputevents_per_icustay: 6.0,
            outputevents_per_icustay: 6.0,
            labevents_per_admission: 30.0,
            prescriptions_per_admission: 8.0,
            microbiology_per_admission: 2.0,
            diagnoses_per_admission: 4.0,
            procedures_per_admission: 2.0,
            current_admission_rate: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDbSpec {
    pub n_patients: usize,
    pub seed: u64,
    pub multipliers: RowMultipliers,
    /// Create secondary indexes on key columns.
    pub indexes: bool,
}

impl SynthDbSpec {
    pub fn new(n_patients: usize, seed: u64) -> Self {
        SynthDbSpec {
            n_patients,
            seed,
            multipliers: RowMultipliers::default(),
            indexes: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("database error: {0}")]
    Db(#[from] rusqlite::Error),
    #[error("{path} already exists")]
    Exists { path: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn now() -> NaiveDateTime {
    NaiveDateTime::parse_from_str(NOW, "%Y-%m-%d %H:%M:%S").expect("valid constant")
}

fn fmt(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%d %H:%M:%S").to_string()
}

/// Draw a count with the given mean: floor plus a Bernoulli remainder,
/// jittered by up to +-50%.
fn count(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let m = mean * rng.random_range(0.5..1.5);
    let base = m.floor();
    base as usize + usize::from(rng.random_bool(m - base))
}

fn minutes_between(rng: &mut ChaCha8Rng, from: NaiveDateTime, to: NaiveDateTime) -> NaiveDateTime {
    let span = (to - from).num_minutes().max(1);
    from + Duration::minutes(rng.random_range(0..span))
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

struct Counters {
    row: [i64; 13],
    hadm: i64,
    icustay: i64,
}

impl Counters {
    fn next(&mut self, table: usize) -> i64 {
        self.row[table] += 1;
        self.row[table]
    }
}

const T_ADM: usize = 0;
const T_ICU: usize = 1;
const T_CHART: usize = 3;
const T_LAB: usize = 5;
const T_RX: usize = 6;
const T_MICRO: usize = 7;
const T_OUT: usize = 8;
const T_IN: usize = 9;
const T_COST: usize = 10;
const T_DX: usize = 11;
const T_PX: usize = 12;

/// Write a fresh database at `path`. Refuses to overwrite an existing file.
pub fn synth_db(spec: &SynthDbSpec, path: &Path) -> Result<(), SynthError> {
    if path.exists() {
        return Err(SynthError::Exists {
            path: path.display().to_string(),
        });
    }
    let mut conn = Connection::open(path)?;
    conn.execute_batch("PRAGMA journal_mode = OFF; PRAGMA synchronous = OFF;")?;
    populate(spec, &mut conn)?;
    Ok(())
}

/// Fill an empty connection with the schema and generated rows.
pub fn populate(spec: &SynthDbSpec, conn: &mut Connection) -> Result<(), SynthError> {
    let tx = conn.transaction()?;
    tx.execute_batch(SCHEMA)?;
    insert_dictionaries(&tx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut c = Counters {
        row: [0; 13],
        hadm: FIRST_HADM_ID - 1,
        icustay: FIRST_ICUSTAY_ID - 1,
    };
    for p in 0..spec.n_patients {
        patient(&tx, &mut rng, &mut c, FIRST_SUBJECT_ID + p as i64, &spec.multipliers)?;
    }
    if spec.indexes {
        tx.execute_batch(INDEXES)?;
    }
    tx.commit()?;
    Ok(())
}

const INDEXES: &str = "
CREATE INDEX ix_admissions_subject ON admissions(subject_id);
CREATE INDEX ix_admissions_hadm ON admissions(hadm_id);
CREATE INDEX ix_icustays_hadm ON icustays(hadm_id);
CREATE INDEX ix_chartevents_icustay ON chartevents(icustay_id);
CREATE INDEX ix_labevents_hadm ON labevents(hadm_id);
CREATE INDEX ix_prescriptions_hadm ON prescriptions(hadm_id);
CREATE INDEX ix_cost_event ON cost(event_id);
";

fn insert_dictionaries(tx: &rusqlite::Transaction<'_>) -> rusqlite::Result<()> {
    let mut st = tx.prepare("INSERT INTO d_items VALUES (?1, ?2, ?3, ?4)")?;
    let items = CHART_ITEMS
        .iter()
        .map(|(l, _)| (*l, "chartevents"))
        .chain(INPUT_ITEMS.iter().map(|l| (*l, "inputevents_cv")))
        .chain(OUTPUT_ITEMS.iter().map(|l| (*l, "outputevents")));
    for (k, (label, linksto)) in items.enumerate() {
        st.execute(params![k as i64 + 1, FIRST_CHART_ITEMID + k as i64, label, linksto])?;
    }
    let mut st = tx.prepare("INSERT INTO d_labitems VALUES (?1, ?2, ?3)")?;
    for (k, (label, _)) in LAB_ITEMS.iter().enumerate() {
        st.execute(params![k as i64 + 1, FIRST_LAB_ITEMID + k as i64, label])?;
    }
    Ok(())
}

pub fn chart_itemid(k: usize) -> i64 {
    FIRST_CHART_ITEMID + k as i64
}

pub fn input_itemid(k: usize) -> i64 {
    FIRST_CHART_ITEMID + (CHART_ITEMS.len() + k) as i64
}

pub fn output_itemid(k: usize) -> i64 {
    FIRST_CHART_ITEMID + (CHART_ITEMS.len() + INPUT_ITEMS.len() + k) as i64
}

fn chart_value(rng: &mut ChaCha8Rng, k: usize) -> f64 {
    let (lo, hi) = match CHART_ITEMS[k].0 {
        "admit wt" => (45.0, 130.0),
        "admit ht" => (150.0, 195.0),
        "arterial bp [diastolic]" => (40.0, 100.0),
        "arterial bp [systolic]" => (90.0, 180.0),
        "arterial bp mean" => (60.0, 120.0),
        "heart rate" => (50.0, 130.0),
        "respiratory rate" => (10.0, 30.0),
        "sao2" => (88.0, 100.0),
        _ => (35.5, 39.5),
    };
    round1(rng.random_range(lo..hi))
}

fn patient(
    tx: &rusqlite::Transaction<'_>,
    rng: &mut ChaCha8Rng,
    c: &mut Counters,
    subject_id: i64,
    m: &RowMultipliers,
) -> rusqlite::Result<()> {
    let gender = if rng.random_bool(0.5) { "m" } else { "f" };
    let first_age: i64 = rng.random_range(18..90);
    let start = NaiveDate::from_ymd_opt(2100, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let end = now();
    let n_adm = count(rng, m.admissions_per_patient).max(1);
    let current = rng.random_bool(m.current_admission_rate.clamp(0.0, 1.0));
    let first_admit = minutes_between(rng, start, end - Duration::days(400));
    let dob = first_admit - Duration::days(first_age * 365 + rng.random_range(0..365));
    let dies = rng.random_bool(0.05) && !current;

    let mut admits: Vec<NaiveDateTime> = vec![first_admit];
    for _ in 1..n_adm {
        let prev = *admits.last().unwrap();
        let next = minutes_between(rng, prev + Duration::days(20), prev + Duration::days(500));
        if next >= end - Duration::days(30) {
            break;
        }
        admits.push(next);
    }
    if current {
        admits.push(minutes_between(rng, end - Duration::days(12), end - Duration::hours(6)));
    }

    let mut adm_st = tx.prepare_cached(
        "INSERT INTO admissions VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13)",
    )?;
    let last = admits.len() - 1;
    let insurance = *INSURANCE.choose(rng).unwrap();
    for (a, &admit) in admits.iter().enumerate() {
        c.hadm += 1;
        let hadm_id = c.hadm;
        let open = current && a == last;
        let disch = if open {
            None
        } else {
            Some(admit + Duration::minutes(rng.random_range(24 * 60..16 * 24 * 60)))
        };
        let stop = disch.unwrap_or(end);
        let age = (admit - dob).num_days() / 365;
        let dod = if dies && a == last { disch.map(fmt) } else { None };
        adm_st.execute(params![
            c.next(T_ADM),
            subject_id,
            hadm_id,
            fmt(admit),
            disch.map(fmt),
            *ADMISSION_TYPES.choose(rng).unwrap(),
            *ADMIT_LOCATIONS.choose(rng).unwrap(),
            disch.map(|_| *DISCHARGE_LOCATIONS.choose(rng).unwrap()),
            insurance,
            age,
            fmt(dob),
            dod,
            gender,
        ])?;
        stay_events(tx, rng, c, subject_id, hadm_id, (admit, stop), open, a == 0, m)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn stay_events(
    tx: &rusqlite::Transaction<'_>,
    rng: &mut ChaCha8Rng,
    c: &mut Counters,
    subject_id: i64,
    hadm_id: i64,
    (admit, stop): (NaiveDateTime, NaiveDateTime),
    open: bool,
    first: bool,
    m: &RowMultipliers,
) -> rusqlite::Result<()> {
    // A patient's first admission has at least one row of every kind, so
    // even a one-patient database fills every table.
    let floor = usize::from(first);
    let n_icu = count(rng, m.icustays_per_admission).max(usize::from(first || open));
    let mut icu_st = tx.prepare_cached("INSERT INTO icustays VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)")?;
    let mut chart_st =
        tx.prepare_cached("INSERT INTO chartevents VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)")?;
    let mut in_st = tx.prepare_cached("INSERT INTO inputevents_cv VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)")?;
    let mut out_st = tx.prepare_cached("INSERT INTO outputevents VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)")?;
    let mut cursor = admit;
    for i in 0..n_icu {
        c.icustay += 1;
        let icustay_id = c.icustay;
        let intime = minutes_between(rng, cursor, cursor + (stop - cursor) / 3);
        let last_open = open && i + 1 == n_icu;
        let outtime = if last_open {
            None
        } else {
            Some(minutes_between(rng, intime + Duration::hours(4), stop.max(intime + Duration::hours(5))))
        };
        let until = outtime.unwrap_or(stop);
        cursor = until;
        icu_st.execute(params![
            c.next(T_ICU),
            subject_id,
            hadm_id,
            icustay_id,
            *CAREUNITS.choose(rng).unwrap(),
            fmt(intime),
            outtime.map(fmt),
        ])?;
        // Every stay records the admission weight at least once.
        let n_chart = count(rng, m.chartevents_per_icustay).max(1);
        for j in 0..n_chart {
            let k = if j == 0 { 0 } else { rng.random_range(0..CHART_ITEMS.len()) };
            chart_st.execute(params![
                c.next(T_CHART),
                subject_id,
                hadm_id,
                icustay_id,
                chart_itemid(k),
                fmt(minutes_between(rng, intime, until)),
                chart_value(rng, k),
                CHART_ITEMS[k].1,
            ])?;
        }
        for _ in 0..count(rng, m.inputevents_per_icustay).max(floor) {
            let k = rng.random_range(0..INPUT_ITEMS.len());
            in_st.execute(params![
                c.next(T_IN),
                subject_id,
                hadm_id,
                icustay_id,
                fmt(minutes_between(rng, intime, until)),
                input_itemid(k),
                round1(rng.random_range(5.0..500.0)),
            ])?;
        }
        for _ in 0..count(rng, m.outputevents_per_icustay).max(floor) {
            let k = rng.random_range(0..OUTPUT_ITEMS.len());
            out_st.execute(params![
                c.next(T_OUT),
                subject_id,
                hadm_id,
                icustay_id,
                fmt(minutes_between(rng, intime, until)),
                output_itemid(k),
                round1(rng.random_range(10.0..800.0)),
            ])?;
        }
    }

    let mut cost_st = tx.prepare_cached("INSERT INTO cost VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)")?;
    let mut lab_st = tx.prepare_cached("INSERT INTO labevents VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)")?;
    for _ in 0..count(rng, m.labevents_per_admission).max(floor) {
        let k = rng.random_range(0..LAB_ITEMS.len());
        let t = minutes_between(rng, admit, stop);
        let row = c.next(T_LAB);
        lab_st.execute(params![
            row,
            subject_id,
            hadm_id,
            FIRST_LAB_ITEMID + k as i64,
            fmt(t),
            round1(rng.random_range(1.0..200.0)),
            LAB_ITEMS[k].1,
        ])?;
        cost_st.execute(params![c.next(T_COST), subject_id, hadm_id, "labevents", row, fmt(t), round1(rng.random_range(1.0..50.0))])?;
    }
    let mut rx_st = tx.prepare_cached("INSERT INTO prescriptions VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)")?;
    for _ in 0..count(rng, m.prescriptions_per_admission).max(floor) {
        let (drug, unit, route) = *DRUGS.choose(rng).unwrap();
        let t = minutes_between(rng, admit, stop);
        let row = c.next(T_RX);
        rx_st.execute(params![
            row,
            subject_id,
            hadm_id,
            fmt(t),
            fmt(t + Duration::days(rng.random_range(1..8))),
            drug,
            f64::from(rng.random_range(1u32..40) * 5),
            unit,
            route,
        ])?;
        cost_st.execute(params![c.next(T_COST), subject_id, hadm_id, "prescriptions", row, fmt(t), round1(rng.random_range(1.0..80.0))])?;
    }
    let mut micro_st = tx.prepare_cached("INSERT INTO microbiologyevents VALUES (?1, ?2, ?3, ?4, ?5, ?6)")?;
    for _ in 0..count(rng, m.microbiology_per_admission).max(floor) {
        let org = if rng.random_bool(0.6) {
            Some(*ORGANISMS.choose(rng).unwrap())
        } else {
            None
        };
        micro_st.execute(params![
            c.next(T_MICRO),
            subject_id,
            hadm_id,
            fmt(minutes_between(rng, admit, stop)),
            *SPECIMENS.choose(rng).unwrap(),
            org,
        ])?;
    }
    for (table, codes, event_type, mean) in [
        (T_DX, &DIAGNOSES[..], "diagnoses_icd", m.diagnoses_per_admission),
        (T_PX, &PROCEDURES[..], "procedures_icd", m.procedures_per_admission),
    ] {
        let mut st = tx.prepare_cached(&format!("INSERT INTO {event_type} VALUES (?1, ?2, ?3, ?4, ?5)"))?;
        for _ in 0..count(rng, mean).max(floor) {
            let t = minutes_between(rng, admit, stop);
            let row = c.next(table);
            st.execute(params![row, subject_id, hadm_id, *codes.choose(rng).unwrap(), fmt(t)])?;
            cost_st.execute(params![c.next(T_COST), subject_id, hadm_id, event_type, row, fmt(t), round1(rng.random_range(10.0..900.0))])?;
        }
    }
    Ok(())
}

/// Row count of every schema table, in schema order.
pub fn table_counts(conn: &Connection) -> rusqlite::Result<Vec<(String, i64)>> {
    TABLES
        .iter()
        .map(|t| {
            let n: i64 = conn.query_row(&format!("SELECT COUNT(*) FROM {t}"), [], |r| r.get(0))?;
            Ok((t.to_string(), n))
        })
        .collect()
}
