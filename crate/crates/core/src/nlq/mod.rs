//! Question generation for decomposed turns: normalize a turn to an
//! abstract template, look up the matching question template and fill its
//! slots from the schema lexicon and the turn's own values.

pub mod phrases;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::TurnSql;
use crate::sql::{
    extract_token_refs, mask_statement, MaskConfig, MaskPolicy, Select, Slot, SlotClause,
    SlotRole, SqlTemplate, Statement,
};

const BUNDLED_TEMPLATES: &str = include_str!("../../data/nlq_templates.tsv");
const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");
const BUNDLED_PARAPHRASES: &str = include_str!("../../data/paraphrases.json");

pub const PARAPHRASE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NlqError {
    #[error("no question template for '{0}'")]
    Unmatched(String),
    #[error("no lexicon entry for column '{0}'")]
    LexiconMiss(String),
    #[error("placeholder {placeholder} has no slot to bind in '{template}'")]
    MissingSlot {
        placeholder: String,
        template: String,
    },
    #[error("unknown placeholder {0}")]
    UnknownPlaceholder(String),
    #[error("cannot phrase {placeholder} for '{value}'")]
    Unphrasable { placeholder: String, value: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("paraphrase bank: {0}")]
    Bank(String),
}

/// Natural-language names of schema columns and tables. Keys are
/// `table.column`, `*.column` (any qualifier) or a bare table name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchemaLexicon {
    entries: BTreeMap<String, (String, String)>,
}

impl SchemaLexicon {
    /// Tab-separated `key, name, list_name`; `#` lines are comments.
    pub fn parse(text: &str) -> Result<Self, NlqError> {
        let mut entries = BTreeMap::new();
        for (i, line) in data_lines(text) {
            let fields: Vec<&str> = line.split('\t').collect();
            let [key, name, list] = fields[..] else {
                return Err(NlqError::Format {
                    line: i,
                    message: format!("expected 3 fields, found {}", fields.len()),
                });
            };
            if entries
                .insert(key.to_string(), (name.to_string(), list.to_string()))
                .is_some()
            {
                return Err(NlqError::Format {
                    line: i,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        Ok(SchemaLexicon { entries })
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon parses")
    }

    fn entry(&self, key: &str) -> Option<&(String, String)> {
        self.entries.get(key).or_else(|| {
            let (_, column) = key.split_once('.')?;
            self.entries.get(&format!("*.{column}"))
        })
    }

    /// Singular expression for a column or table.
    pub fn name(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.0.as_str())
    }

    /// Expression used when listing several values.
    pub fn list_name(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.1.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NlqTemplate {
    pub template_id: String,
    /// NLQ_NORM text of the queries this template describes.
    pub sql_template: String,
    pub text: String,
}

/// Question templates keyed by normalized SQL template text.
#[derive(Debug, Clone, Default)]
pub struct TemplateTable {
    templates: Vec<NlqTemplate>,
    by_sql: HashMap<String, usize>,
    by_id: HashMap<String, usize>,
}

impl TemplateTable {
    /// Tab-separated `template_id, sql_template, nlq_template`.
    pub fn parse(text: &str) -> Result<Self, NlqError> {
        let mut table = TemplateTable::default();
        for (i, line) in data_lines(text) {
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, sql, nlq] = fields[..] else {
                return Err(NlqError::Format {
                    line: i,
                    message: format!("expected 3 fields, found {}", fields.len()),
                });
            };
            let template = NlqTemplate {
                template_id: id.to_string(),
                sql_template: sql.to_string(),
                text: nlq.to_string(),
            };
            check_template(&template).map_err(|message| NlqError::Format { line: i, message })?;
            table.push(template).map_err(|message| NlqError::Format { line: i, message })?;
        }
        Ok(table)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TEMPLATES).expect("bundled templates parse")
    }

    fn push(&mut self, t: NlqTemplate) -> Result<(), String> {
        if self.by_sql.contains_key(&t.sql_template) {
            return Err(format!("duplicate sql template for {}", t.template_id));
        }
        if self.by_id.contains_key(&t.template_id) {
            return Err(format!("duplicate template id {}", t.template_id));
        }
        let k = self.templates.len();
        self.by_sql.insert(t.sql_template.clone(), k);
        self.by_id.insert(t.template_id.clone(), k);
        self.templates.push(t);
        Ok(())
    }

    pub fn lookup(&self, sql_template: &str) -> Option<&NlqTemplate> {
        self.by_sql.get(sql_template).map(|&k| &self.templates[k])
    }

    pub fn get(&self, template_id: &str) -> Option<&NlqTemplate> {
        self.by_id.get(template_id).map(|&k| &self.templates[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = &NlqTemplate> {
        self.templates.iter()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

/// Placeholders must be unique, known, and countable against the SQL
/// template where the SQL text shows their occurrences.
fn check_template(t: &NlqTemplate) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for p in placeholders(&t.text) {
        if !seen.insert(p.raw.clone()) {
            return Err(format!("{}: placeholder {} repeats", t.template_id, p.raw));
        }
        let kind = Kind::of(&p.name).ok_or_else(|| format!("{}: unknown {}", t.template_id, p.raw))?;
        if let Some(marker) = kind.sql_marker(&p.name) {
            let available = t.sql_template.matches(&marker).count();
            let wanted = p.index.unwrap_or(0);
            if wanted >= available {
                return Err(format!(
                    "{}: {} has no matching {} in the sql template",
                    t.template_id, p.raw, marker
                ));
            }
        }
    }
    Ok(())
}

/// A placeholder occurrence such as `[SELECT.cols.1]` or `[PREV]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placeholder {
    pub raw: String,
    pub name: String,
    pub index: Option<usize>,
    pub start: usize,
    pub end: usize,
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\[([A-Za-z_]+(?:\.[a-z]+)?[0-9]*)(?:[.:]([0-9]+))?\]").expect("static pattern")
});

pub fn placeholders(text: &str) -> Vec<Placeholder> {
    PLACEHOLDER
        .captures_iter(text)
        .map(|c| {
            let m = c.get(0).expect("whole match");
            Placeholder {
                raw: m.as_str().to_string(),
                name: c[1].to_string(),
                index: c.get(2).and_then(|i| i.as_str().parse().ok()),
                start: m.start(),
                end: m.end(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Value,
    Token,
    Column { clause: Option<SlotClause>, list: bool },
    Table { list: bool },
    Aggregate,
    Comparison,
    Rank,
    Times,
    TimeGlobal,
    TimeExact,
    TimeWithin,
    AgeGroup,
}

impl Kind {
    fn of(name: &str) -> Option<Kind> {
        let column = |clause, list| Some(Kind::Column { clause, list });
        match name {
            "val_placeholder" => Some(Kind::Value),
            "PREV" => Some(Kind::Token),
            "SELECT.col" => column(Some(SlotClause::Select), false),
            "SELECT.cols" => column(Some(SlotClause::Select), true),
            "WHERE.col" => column(Some(SlotClause::Where), false),
            "WHERE.cols" => column(Some(SlotClause::Where), true),
            "GROUP.col" => column(Some(SlotClause::GroupBy), false),
            "GROUP.cols" => column(Some(SlotClause::GroupBy), true),
            "col" => column(None, false),
            "cols" => column(None, true),
            "FROM.table" => Some(Kind::Table { list: false }),
            "FROM.tables" => Some(Kind::Table { list: true }),
            "agg_function" => Some(Kind::Aggregate),
            "comparison" => Some(Kind::Comparison),
            "n_rank" => Some(Kind::Rank),
            "n_times" => Some(Kind::Times),
            "time_filter_within" => Some(Kind::TimeWithin),
            "age_group" => Some(Kind::AgeGroup),
            n if numbered(n, "time_filter_global") => Some(Kind::TimeGlobal),
            n if numbered(n, "time_filter_exact") => Some(Kind::TimeExact),
            _ => None,
        }
    }

    /// Text marking one bindable occurrence in an NLQ_NORM template.
    fn sql_marker(self, name: &str) -> Option<String> {
        Some(match self {
            Kind::Value => "[val_placeholder]".into(),
            Kind::Token => "[PREV]".into(),
            Kind::Aggregate => "[agg_function]".into(),
            Kind::Comparison => "[comparison]".into(),
            Kind::Rank => "[n_rank]".into(),
            Kind::Times => "[n_times]".into(),
            Kind::TimeWithin => "[time_filter_within]".into(),
            Kind::AgeGroup => "[age_group]".into(),
            Kind::TimeGlobal | Kind::TimeExact => format!("[{name}]"),
            Kind::Column { .. } | Kind::Table { .. } => return None,
        })
    }

    fn matches(self, slot: &Slot, name: &str) -> bool {
        match self {
            Kind::Value => slot.role == SlotRole::Value,
            Kind::Token => slot.role == SlotRole::Token,
            Kind::Column { clause, .. } => {
                slot.role == SlotRole::Column
                    && slot.detail.is_some()
                    && clause.is_none_or(|c| c == slot.clause)
            }
            Kind::Table { .. } => {
                slot.role == SlotRole::Table
                    && slot.detail.is_some()
                    && slot.clause == SlotClause::From
            }
            Kind::Aggregate => slot.role == SlotRole::Aggregate,
            Kind::Comparison => slot.role == SlotRole::Comparison,
            Kind::Rank => slot.role == SlotRole::Rank,
            Kind::Times => slot.role == SlotRole::Times,
            Kind::TimeWithin => slot.role == SlotRole::TimeWithin,
            Kind::AgeGroup => slot.role == SlotRole::AgeGroup,
            Kind::TimeGlobal | Kind::TimeExact => slot.placeholder == format!("[{name}]"),
        }
    }

    /// Placeholders sharing an implicit position counter.
    fn counter_key(name: &str) -> &str {
        name.strip_suffix('s')
            .filter(|n| n.ends_with(".col") || n.ends_with(".table") || *n == "col")
            .unwrap_or(name)
    }
}

fn numbered(name: &str, prefix: &str) -> bool {
    name.strip_prefix(prefix)
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

/// The NLQ_NORM template of a turn; its slots are the ordered bindings.
pub fn normalize_subquery(stmt: &Statement) -> SqlTemplate {
    mask_statement(stmt, &MaskConfig::new(MaskPolicy::NlqNorm))
}

/// Literal text of a canonical SQL literal: quotes removed, escapes undone.
pub fn literal_text(sql: &str) -> String {
    match sql.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')) {
        Some(inner) => inner.replace("''", "'"),
        None => sql.to_string(),
    }
}

/// Reference phrase for a token pointing at turn `turn`.
pub fn reference_phrase(turn: usize) -> String {
    format!("result{turn}")
}

/// Fill the placeholders of `text` from the bindings of `template`.
pub fn fill_template(
    text: &str,
    template: &SqlTemplate,
    lexicon: &SchemaLexicon,
) -> Result<String, NlqError> {
    let mut out = String::with_capacity(text.len() * 2);
    let mut counters: HashMap<String, usize> = HashMap::new();
    let mut last = 0;
    for p in placeholders(text) {
        out.push_str(&text[last..p.start]);
        last = p.end;
        let kind = Kind::of(&p.name).ok_or_else(|| NlqError::UnknownPlaceholder(p.raw.clone()))?;
        let position = match p.index {
            Some(i) => i,
            None => {
                let c = counters.entry(Kind::counter_key(&p.name).to_string()).or_insert(0);
                *c += 1;
                *c - 1
            }
        };
        let slot = template
            .slots
            .iter()
            .filter(|s| kind.matches(s, &p.name))
            .nth(position)
            .ok_or_else(|| NlqError::MissingSlot {
                placeholder: p.raw.clone(),
                template: template.text.clone(),
            })?;
        out.push_str(&render_slot(kind, slot, &p, lexicon)?);
    }
    out.push_str(&text[last..]);
    Ok(out)
}

fn render_slot(
    kind: Kind,
    slot: &Slot,
    p: &Placeholder,
    lexicon: &SchemaLexicon,
) -> Result<String, NlqError> {
    let unphrasable = || NlqError::Unphrasable {
        placeholder: p.raw.clone(),
        value: slot.value.clone(),
    };
    Ok(match kind {
        Kind::Value => literal_text(&slot.value),
        Kind::Token => {
            let digits: String = slot.value.chars().filter(char::is_ascii_digit).collect();
            reference_phrase(digits.parse().map_err(|_| unphrasable())?)
        }
        Kind::Column { list, .. } | Kind::Table { list } => {
            let key = slot.detail.as_deref().unwrap_or(&slot.value);
            let found = if list {
                lexicon.list_name(key)
            } else {
                lexicon.name(key)
            };
            found
                .ok_or_else(|| NlqError::LexiconMiss(key.to_string()))?
                .to_string()
        }
        Kind::Aggregate => phrases::aggregate(&slot.value).ok_or_else(unphrasable)?.to_string(),
        Kind::Comparison => phrases::comparison(&slot.value)
            .ok_or_else(unphrasable)?
            .to_string(),
        Kind::Rank | Kind::Times => slot.value.clone(),
        Kind::TimeGlobal => phrases::time_global(&slot.value).ok_or_else(unphrasable)?,
        Kind::TimeExact => phrases::time_exact(&slot.value).ok_or_else(unphrasable)?,
        Kind::TimeWithin => phrases::time_within(&slot.value).ok_or_else(unphrasable)?,
        Kind::AgeGroup => phrases::age_group(&slot.value).ok_or_else(unphrasable)?,
    })
}

/// Paraphrase variants of question templates, keyed by template id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphraseBank {
    pub format_version: u32,
    pub paraphrases: BTreeMap<String, Vec<String>>,
}

impl ParaphraseBank {
    pub fn empty() -> Self {
        ParaphraseBank {
            format_version: PARAPHRASE_FORMAT_VERSION,
            paraphrases: BTreeMap::new(),
        }
    }

    /// Parse and validate every variant against its template.
    pub fn from_json(text: &str, templates: &TemplateTable) -> Result<Self, NlqError> {
        let bank: ParaphraseBank =
            serde_json::from_str(text).map_err(|e| NlqError::Bank(e.to_string()))?;
        for (id, variants) in &bank.paraphrases {
            let t = templates
                .get(id)
                .ok_or_else(|| NlqError::Bank(format!("unknown template id {id}")))?;
            for v in variants {
                if let Err(violation) = validate_paraphrase(&t.text, v) {
                    return Err(NlqError::Bank(format!("{id}: '{v}': {violation}")));
                }
            }
        }
        Ok(bank)
    }

    pub fn bundled(templates: &TemplateTable) -> Self {
        Self::from_json(BUNDLED_PARAPHRASES, templates).expect("bundled paraphrases are valid")
    }

    pub fn variants(&self, template_id: &str) -> &[String] {
        self.paraphrases
            .get(template_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bank serializes")
    }
}

/// External paraphrasing service: submit a template, receive candidates.
pub trait ParaphraseClient {
    fn paraphrase(&self, template: &NlqTemplate) -> Result<Vec<String>, NlqError>;
}

impl ParaphraseClient for ParaphraseBank {
    fn paraphrase(&self, template: &NlqTemplate) -> Result<Vec<String>, NlqError> {
        Ok(self.variants(&template.template_id).to_vec())
    }
}

/// A candidate rejected by [`collect_paraphrases`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejected {
    pub template_id: String,
    pub candidate: String,
    pub violation: Violation,
}

/// Query `client` for every template, keeping only slot-preserving,
/// distinct candidates.
pub fn collect_paraphrases<C: ParaphraseClient + ?Sized>(
    client: &C,
    templates: &TemplateTable,
) -> Result<(ParaphraseBank, Vec<Rejected>), NlqError> {
    let mut bank = ParaphraseBank::empty();
    let mut rejected = Vec::new();
    for t in templates.iter() {
        let mut kept: Vec<String> = Vec::new();
        for candidate in client.paraphrase(t)? {
            match validate_paraphrase(&t.text, &candidate) {
                Ok(()) if candidate != t.text && !kept.contains(&candidate) => kept.push(candidate),
                Ok(()) => {}
                Err(violation) => rejected.push(Rejected {
                    template_id: t.template_id.clone(),
                    candidate,
                    violation,
                }),
            }
        }
        if !kept.is_empty() {
            bank.paraphrases.insert(t.template_id.clone(), kept);
        }
    }
    Ok((bank, rejected))
}

/// Placeholders a paraphrase failed to preserve exactly once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Violation {
    pub missing: Vec<String>,
    pub duplicated: Vec<String>,
    pub unexpected: Vec<String>,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        for (label, list) in [
            ("missing", &self.missing),
            ("duplicated", &self.duplicated),
            ("unexpected", &self.unexpected),
        ] {
            if !list.is_empty() {
                parts.push(format!("{label}: {}", list.join(", ")));
            }
        }
        f.write_str(&parts.join("; "))
    }
}

/// Every placeholder of `original` must occur exactly once in
/// `paraphrase`, and no other placeholder may occur.
pub fn validate_paraphrase(original: &str, paraphrase: &str) -> Result<(), Violation> {
    let count = |text: &str| {
        let mut m: BTreeMap<String, usize> = BTreeMap::new();
        for p in placeholders(text) {
            *m.entry(p.raw).or_default() += 1;
        }
        m
    };
    let want = count(original);
    let got = count(paraphrase);
    let mut v = Violation::default();
    for name in want.keys() {
        match got.get(name).copied().unwrap_or(0) {
            0 => v.missing.push(name.clone()),
            1 => {}
            _ => v.duplicated.push(name.clone()),
        }
    }
    for name in got.keys() {
        if !want.contains_key(name) {
            v.unexpected.push(name.clone());
        }
    }
    if v == Violation::default() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Template table, lexicon and optional paraphrase bank used together.
#[derive(Debug, Clone)]
pub struct NlqGenerator {
    pub templates: TemplateTable,
    pub lexicon: SchemaLexicon,
    pub bank: ParaphraseBank,
}

impl NlqGenerator {
    pub fn new(templates: TemplateTable, lexicon: SchemaLexicon, bank: ParaphraseBank) -> Self {
        NlqGenerator {
            templates,
            lexicon,
            bank,
        }
    }

    /// Bundled templates, lexicon and paraphrases.
    pub fn bundled() -> Self {
        let templates = TemplateTable::bundled();
        let bank = ParaphraseBank::bundled(&templates);
        NlqGenerator::new(templates, SchemaLexicon::bundled(), bank)
    }

    /// Bundled templates and lexicon without paraphrases.
    pub fn bundled_plain() -> Self {
        NlqGenerator::new(
            TemplateTable::bundled(),
            SchemaLexicon::bundled(),
            ParaphraseBank::empty(),
        )
    }

    pub fn template_for(&self, stmt: &Statement) -> Result<&NlqTemplate, NlqError> {
        let norm = normalize_subquery(stmt);
        self.templates
            .lookup(&norm.text)
            .ok_or(NlqError::Unmatched(norm.text))
    }

    /// Question for `stmt`, choosing among the template and its
    /// paraphrases with `rng`.
    pub fn generate_with<R: Rng + ?Sized>(
        &self,
        stmt: &Statement,
        rng: &mut R,
    ) -> Result<String, NlqError> {
        let norm = normalize_subquery(stmt);
        let template = self
            .templates
            .lookup(&norm.text)
            .ok_or_else(|| NlqError::Unmatched(norm.text.clone()))?;
        let variants = self.bank.variants(&template.template_id);
        let pick = rng.random_range(0..=variants.len());
        let text = if pick == 0 {
            &template.text
        } else {
            &variants[pick - 1]
        };
        fill_template(text, &norm, &self.lexicon)
    }

    pub fn generate(&self, stmt: &Statement, seed: u64) -> Result<String, NlqError> {
        self.generate_with(stmt, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// Question for one turn; see [`NlqGenerator::generate`].
pub fn generate_nlq(
    turn: &TurnSql,
    lexicon: &SchemaLexicon,
    templates: &TemplateTable,
    bank: Option<&ParaphraseBank>,
    seed: u64,
) -> Result<String, NlqError> {
    let generator = NlqGenerator {
        templates: templates.clone(),
        lexicon: lexicon.clone(),
        bank: bank.cloned().unwrap_or_else(ParaphraseBank::empty),
    };
    generator.generate(&turn.stmt, seed)
}

/// Columns whose values follow from other conditions of the query, such
/// as the event table an item id belongs to.
pub const IMPLIED_COLUMNS: [&str; 2] = ["d_items.linksto", "cost.event_type"];

/// Values and token indices of `stmt` absent from `nlq`. Condition values
/// must occur as whole words; token indices as whole digit runs. Values
/// compared with an implied column may be omitted.
pub fn missing_information(stmt: &Statement, nlq: &str) -> Vec<String> {
    let composition = mask_statement(stmt, &MaskConfig::new(MaskPolicy::Composition));
    let implied = implied_values(stmt);
    let mut missing = Vec::new();
    for slot in composition.slots_with_role(SlotRole::Value) {
        let text = literal_text(&slot.value);
        if !contains_word(nlq, &text) && !implied.contains(&slot.value) {
            missing.push(text);
        }
    }
    let digit_runs: BTreeSet<&str> = nlq
        .split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .collect();
    let mut indices: Vec<usize> = extract_token_refs(stmt).iter().map(|t| t.turn).collect();
    indices.sort_unstable();
    indices.dedup();
    for i in indices {
        if !digit_runs.contains(i.to_string().as_str()) {
            missing.push(format!("turn index {i}"));
        }
    }
    missing
}

/// Canonical literals compared for equality with an implied column.
pub fn implied_values(stmt: &Statement) -> BTreeSet<String> {
    let sql = crate::sql::render_sql(stmt);
    IMPLIED_COLUMNS
        .iter()
        .flat_map(|c| {
            let prefix = format!("{c} = ");
            sql.match_indices(&prefix)
                .filter_map(|(at, _)| literal_at(&sql[at + prefix.len()..]))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Quoted literal at the start of `s`.
fn literal_at(s: &str) -> Option<String> {
    let rest = s.strip_prefix('\'')?;
    let mut end = 0;
    let bytes = rest.as_bytes();
    while end < bytes.len() {
        if bytes[end] == b'\'' {
            if bytes.get(end + 1) == Some(&b'\'') {
                end += 2;
                continue;
            }
            return Some(format!("'{}'", &rest[..end]));
        }
        end += 1;
    }
    None
}

fn contains_word(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return true;
    }
    let alnum = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric());
    let mut from = 0;
    while let Some(rel) = hay[from..].find(needle) {
        let at = from + rel;
        let before = hay[..at].chars().next_back();
        let after = hay[at + needle.len()..].chars().next();
        let edge_before = !alnum(needle.chars().next()) || !alnum(before);
        let edge_after = !alnum(needle.chars().next_back()) || !alnum(after);
        if edge_before && edge_after {
            return true;
        }
        from = at + needle.chars().next().map_or(1, char::len_utf8);
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Category {
    Independent,
    Referential,
    Filtering,
    Modifying,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Independent,
        Category::Referential,
        Category::Filtering,
        Category::Modifying,
    ];
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Category::Independent => "INDEPENDENT",
            Category::Referential => "REFERENTIAL",
            Category::Filtering => "FILTERING",
            Category::Modifying => "MODIFYING",
        })
    }
}

/// Non-empty category set of a turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TurnCategory(BTreeSet<Category>);

impl FromIterator<Category> for TurnCategory {
    fn from_iter<I: IntoIterator<Item = Category>>(iter: I) -> Self {
        TurnCategory(iter.into_iter().collect())
    }
}

impl TurnCategory {
    pub fn contains(&self, c: Category) -> bool {
        self.0.contains(&c)
    }

    pub fn iter(&self) -> impl Iterator<Item = Category> + '_ {
        self.0.iter().copied()
    }

    pub fn is_independent(&self) -> bool {
        self.contains(Category::Independent)
    }
}

/// Categories of turn `index` (1-based) within `turns`.
pub fn categorize_turn(turns: &[TurnSql], index: usize) -> TurnCategory {
    let turn = &turns[index - 1];
    let mut set = BTreeSet::new();
    if extract_token_refs(&turn.stmt).is_empty() {
        set.insert(Category::Independent);
        return TurnCategory(set);
    }
    set.insert(Category::Referential);
    if matches!(turn.stmt, Statement::Refine(_)) {
        set.insert(Category::Filtering);
    }
    if index >= 2 && modifies(&turns[index - 2].stmt, &turn.stmt) {
        set.insert(Category::Modifying);
    }
    TurnCategory(set)
}

/// Same statement shape with exactly one clause changed.
fn modifies(prev: &Statement, cur: &Statement) -> bool {
    match (prev, cur) {
        (Statement::Select(a), Statement::Select(b)) => clause_differences(a, b) == 1,
        (Statement::Refine(a), Statement::Refine(b)) => {
            a.base == b.base
                && a.clauses.len() == b.clauses.len()
                && a.clauses.iter().zip(&b.clauses).filter(|(x, y)| x != y).count() == 1
        }
        _ => false,
    }
}

fn clause_differences(a: &Select, b: &Select) -> usize {
    [
        a.distinct != b.distinct || a.items != b.items,
        a.from != b.from,
        a.selection != b.selection,
        a.group_by != b.group_by,
        a.having != b.having,
        a.order_by != b.order_by || a.limit != b.limit,
    ]
    .iter()
    .filter(|d| **d)
    .count()
}
