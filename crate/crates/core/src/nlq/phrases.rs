//! Natural-language renderings of the structural slots of a masked query:
//! time filters, ordering picks, age groups, aggregates and comparisons.
//! Each function takes the canonical SQL text the slot stands for.

use std::sync::LazyLock;

use regex::Regex;

fn re(pattern: &str) -> Regex {
    Regex::new(pattern).expect("static pattern")
}

const COL: &str = r"[A-Za-z_][A-Za-z0-9_]*\.[A-Za-z_][A-Za-z0-9_]*";

static RELATIVE_CALENDAR: LazyLock<Regex> = LazyLock::new(|| {
    re(&format!(
        r"^DATETIME\({COL}, 'start of (year|month|day)'\) = DATETIME\('[^']*', 'start of (year|month|day)', '-(\d+) (year|month|day)'\)$"
    ))
});
static SINCE_AGO: LazyLock<Regex> = LazyLock::new(|| {
    re(&format!(
        r"^DATETIME\({COL}\) (>=|>|<=|<) DATETIME\('[^']*', '-(\d+) (year|month|day|hour)s?'\)$"
    ))
});
static STRFTIME: LazyLock<Regex> = LazyLock::new(|| {
    re(&format!(
        r"^STRFTIME\('(%Y|%Y-%m|%Y-%m-%d)', {COL}\) (=|>=|>|<=|<) '([0-9-]+)'$"
    ))
});
static OPEN_STAY: LazyLock<Regex> =
    LazyLock::new(|| re(r"^([A-Za-z_]+)\.(dischtime|outtime) IS (NOT )?NULL$"));
static SAME_PERIOD: LazyLock<Regex> = LazyLock::new(|| {
    re(&format!(
        r"^DATETIME\({COL}, 'start of (year|month|day)'\) = DATETIME\({COL}, 'start of (year|month|day)'\)$"
    ))
});
static WITHIN_DAYS: LazyLock<Regex> = LazyLock::new(|| {
    re(&format!(
        r"^DATETIME\({COL}\) BETWEEN DATETIME\({COL}\) AND DATETIME\({COL}, '\+(\d+) (day|month)'\)$"
    ))
});
static EXACT: LazyLock<Regex> = LazyLock::new(|| {
    re(&format!(
        r"^ORDER BY {COL}( ASC| DESC)? LIMIT 1(?: OFFSET (\d+))?$"
    ))
});
static AGE_RANGE: LazyLock<Regex> =
    LazyLock::new(|| re(&format!(r"^{COL} BETWEEN (\d+) AND (\d+)$")));
static AGE_BOUND: LazyLock<Regex> = LazyLock::new(|| re(&format!(r"^{COL} (>=|>|<=|<) (\d+)$")));

fn plural(n: u64, unit: &str) -> String {
    if n == 1 {
        format!("1 {unit}")
    } else {
        format!("{n} {unit}s")
    }
}

/// Split a conjunct run on its top-level ` AND `s. BETWEEN bounds are kept
/// with their conjunct.
fn conjuncts(sql: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut depth = 0i32;
    let mut quoted = false;
    let mut start = 0;
    let bytes = sql.as_bytes();
    let mut i = 0;
    let mut between_pending = false;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\'' {
            quoted = !quoted;
        } else if !quoted {
            if c == b'(' {
                depth += 1;
            } else if c == b')' {
                depth -= 1;
            } else if depth == 0 && sql[i..].starts_with(" BETWEEN ") {
                between_pending = true;
            } else if depth == 0 && sql[i..].starts_with(" AND ") {
                if between_pending {
                    between_pending = false;
                } else {
                    out.push(sql[start..i].to_string());
                    start = i + 5;
                    i += 5;
                    continue;
                }
            }
        }
        i += 1;
    }
    out.push(sql[start..].to_string());
    out
}

fn join_phrases<F: Fn(&str) -> Option<String>>(sql: &str, f: F) -> Option<String> {
    let parts: Option<Vec<String>> = conjuncts(sql).iter().map(|c| f(c)).collect();
    parts.map(|p| p.join(" and "))
}

/// Phrase for a run of conjuncts bounding one temporal column.
pub fn time_global(sql: &str) -> Option<String> {
    join_phrases(sql, time_global_one)
}

fn time_global_one(sql: &str) -> Option<String> {
    if let Some(c) = RELATIVE_CALENDAR.captures(sql) {
        let (unit, unit2, back, unit3) = (&c[1], &c[2], &c[3], &c[4]);
        if unit != unit2 || unit != unit3 {
            return None;
        }
        let back: u64 = back.parse().ok()?;
        return Some(match (unit, back) {
            ("day", 0) => "today".to_string(),
            ("day", 1) => "yesterday".to_string(),
            (u, 0) => format!("this {u}"),
            (u, 1) => format!("last {u}"),
            (u, n) => format!("{} ago", plural(n, u)),
        });
    }
    if let Some(c) = SINCE_AGO.captures(sql) {
        let n: u64 = c[2].parse().ok()?;
        let span = plural(n, &c[3]);
        return Some(match &c[1] {
            ">=" | ">" => format!("since {span} ago"),
            _ => format!("until {span} ago"),
        });
    }
    if let Some(c) = STRFTIME.captures(sql) {
        let value = &c[3];
        let shown = match &c[1] {
            "%Y" if value.len() == 4 => value.to_string(),
            "%Y-%m" if value.len() == 7 => format!("{}/{}", &value[5..7], &value[..4]),
            "%Y-%m-%d" if value.len() == 10 => value.to_string(),
            _ => return None,
        };
        let at = if c[1].len() == 8 { "on" } else { "in" };
        return Some(match &c[2] {
            "=" => format!("{at} {shown}"),
            ">=" => format!("since {shown}"),
            ">" => format!("after {shown}"),
            "<=" => format!("until {shown}"),
            _ => format!("before {shown}"),
        });
    }
    if let Some(c) = OPEN_STAY.captures(sql) {
        let visit = match &c[2] {
            "dischtime" => "hospital visit",
            _ => "icu visit",
        };
        return Some(if c.get(3).is_some() {
            format!("on a completed {visit}")
        } else {
            format!("on the current {visit}")
        });
    }
    None
}

/// Phrase for a conjunct run relating two temporal columns.
pub fn time_within(sql: &str) -> Option<String> {
    join_phrases(sql, |c| {
        if let Some(m) = SAME_PERIOD.captures(c) {
            return (m[1] == m[2]).then(|| format!("within the same {}", &m[1]));
        }
        if let Some(m) = WITHIN_DAYS.captures(c) {
            let n: u64 = m[1].parse().ok()?;
            return Some(format!("within {}", plural(n, &m[2])));
        }
        None
    })
}

/// Ordinal word for small positions (1-based).
pub fn ordinal(n: u64) -> String {
    const WORDS: [&str; 10] = [
        "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
        "tenth",
    ];
    match WORDS.get(n.saturating_sub(1) as usize) {
        Some(w) if n > 0 => w.to_string(),
        _ => {
            let suffix = match (n % 10, n % 100) {
                (1, r) if r != 11 => "st",
                (2, r) if r != 12 => "nd",
                (3, r) if r != 13 => "rd",
                _ => "th",
            };
            format!("{n}{suffix}")
        }
    }
}

/// Phrase for `ORDER BY <time> [ASC|DESC] LIMIT 1 [OFFSET k]`.
pub fn time_exact(sql: &str) -> Option<String> {
    let c = EXACT.captures(sql)?;
    let descending = c.get(1).is_some_and(|d| d.as_str() == " DESC");
    let offset: u64 = match c.get(2) {
        Some(o) => o.as_str().parse().ok()?,
        None => 0,
    };
    Some(match (descending, offset) {
        (true, 0) => "last".to_string(),
        (false, 0) => "first".to_string(),
        (true, k) => format!("{} to last", ordinal(k + 1)),
        (false, k) => ordinal(k + 1),
    })
}

/// Phrase for an age-group conjunct run.
pub fn age_group(sql: &str) -> Option<String> {
    join_phrases(sql, |c| {
        if let Some(m) = AGE_RANGE.captures(c) {
            let lo: u64 = m[1].parse().ok()?;
            let hi: u64 = m[2].parse().ok()?;
            if lo.is_multiple_of(10) && hi == lo + 9 {
                return Some(format!("in the {lo}s"));
            }
            return Some(format!("between {lo} and {hi}"));
        }
        if let Some(m) = AGE_BOUND.captures(c) {
            let n = &m[2];
            return Some(match &m[1] {
                ">=" => format!("{n} or above"),
                ">" => format!("above {n}"),
                "<=" => format!("{n} or below"),
                _ => format!("below {n}"),
            });
        }
        None
    })
}

pub fn aggregate(name: &str) -> Option<&'static str> {
    Some(match name {
        "MAX" => "maximum",
        "MIN" => "minimum",
        "AVG" => "average",
        "SUM" => "total",
        _ => return None,
    })
}

/// Comparative for `a <op> b`, read as "is a ... than b".
pub fn comparison(op: &str) -> Option<&'static str> {
    Some(match op {
        ">" => "greater",
        "<" => "less",
        ">=" => "not less",
        "<=" => "not greater",
        _ => return None,
    })
}
