use super::SqlError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// Bare word, uppercased copy kept for keyword matching.
    Word { raw: String, upper: String },
    Integer(i64),
    Real(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Semicolon,
    /// `[PREV_QUERY1]`-style bracketed token as printed in some tables.
    Bracketed(String),
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub pos: usize,
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Spanned>, SqlError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            '.' if !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i += 1;
                Tok::Dot
            }
            '*' => {
                i += 1;
                Tok::Star
            }
            '+' => {
                i += 1;
                Tok::Plus
            }
            '-' => {
                if bytes.get(i + 1) == Some(&b'-') {
                    return Err(SqlError::unsupported("comment", start));
                }
                i += 1;
                Tok::Minus
            }
            '/' => {
                i += 1;
                Tok::Slash
            }
            ';' => {
                i += 1;
                Tok::Semicolon
            }
            '=' => {
                i += if bytes.get(i + 1) == Some(&b'=') { 2 } else { 1 };
                Tok::Eq
            }
            '!' if bytes.get(i + 1) == Some(&b'=') => {
                i += 2;
                Tok::NotEq
            }
            '<' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    Tok::LtEq
                }
                Some(b'>') => {
                    i += 2;
                    Tok::NotEq
                }
                _ => {
                    i += 1;
                    Tok::Lt
                }
            },
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    Tok::GtEq
                } else {
                    i += 1;
                    Tok::Gt
                }
            }
            '\'' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match text[i..].chars().next() {
                        None => return Err(SqlError::syntax("unterminated string literal", start)),
                        Some('\'') => {
                            if bytes.get(i + 1) == Some(&b'\'') {
                                s.push('\'');
                                i += 2;
                            } else {
                                i += 1;
                                break;
                            }
                        }
                        Some(ch) => {
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                Tok::Str(s)
            }
            '"' | '`' => return Err(SqlError::unsupported("quoted identifier", start)),
            '[' => {
                let end = text[i..]
                    .find(']')
                    .map(|e| i + e)
                    .ok_or_else(|| SqlError::syntax("unterminated '['", start))?;
                let inner = text[i + 1..end].trim().to_string();
                i = end + 1;
                Tok::Bracketed(inner)
            }
            c if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut real = false;
                if i < bytes.len() && bytes[i] == b'.' {
                    real = true;
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        real = true;
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit = &text[start..i];
                if real {
                    Tok::Real(
                        lit.parse()
                            .map_err(|_| SqlError::syntax("malformed number", start))?,
                    )
                } else {
                    match lit.parse::<i64>() {
                        Ok(v) => Tok::Integer(v),
                        Err(_) => Tok::Real(
                            lit.parse()
                                .map_err(|_| SqlError::syntax("malformed number", start))?,
                        ),
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let raw = text[start..i].to_string();
                let upper = raw.to_ascii_uppercase();
                Tok::Word { raw, upper }
            }
            other => {
                return Err(SqlError::syntax(
                    format!("unexpected character '{other}'"),
                    start,
                ))
            }
        };
        out.push(Spanned { tok, pos: start });
    }
    Ok(out)
}
