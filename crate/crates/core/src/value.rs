//! Value domain: every cell is one of NULL, int64, float64, string, blob.
//!
//! Columns are typed, so ordering is only ever asked of same-type values
//! (plus NULL, which sorts before everything). Floats compare by the IEEE
//! total order: NaN equals NaN and sorts above +inf, -0.0 sorts below 0.0.
//! That one convention is shared by key encoding, predicate evaluation, and
//! uniqueness checks, so an index probe and a table scan always agree.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnType {
    Int64,
    Float64,
    String,
    Blob,
}

impl ColumnType {
    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Int64 => "int64",
            ColumnType::Float64 => "float64",
            ColumnType::String => "string",
            ColumnType::Blob => "blob",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "int64" | "int" => Ok(ColumnType::Int64),
            "float64" | "float" => Ok(ColumnType::Float64),
            "string" | "text" => Ok(ColumnType::String),
            "blob" => Ok(ColumnType::Blob),
            other => Err(Error::Parse(format!("unknown column type '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Int(i64),
    Float(f64),
    Str(String),
    Blob(Vec<u8>),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn type_of(&self) -> Option<ColumnType> {
        match self {
            Value::Null => None,
            Value::Int(_) => Some(ColumnType::Int64),
            Value::Float(_) => Some(ColumnType::Float64),
            Value::Str(_) => Some(ColumnType::String),
            Value::Blob(_) => Some(ColumnType::Blob),
        }
    }

    pub fn matches_type(&self, ty: ColumnType) -> bool {
        match self.type_of() {
            None => true,
            Some(t) => t == ty,
        }
    }

    /// Total order used everywhere: NULL first, then the payload. Values of
    /// different non-null types never meet in practice (columns are typed);
    /// if they do, the order is by type tag so sorting stays well-defined.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        use Value::*;
        match (self, other) {
            (Null, Null) => Ordering::Equal,
            (Null, _) => Ordering::Less,
            (_, Null) => Ordering::Greater,
            (Int(a), Int(b)) => a.cmp(b),
            (Float(a), Float(b)) => a.total_cmp(b),
            (Str(a), Str(b)) => a.cmp(b),
            (Blob(a), Blob(b)) => a.cmp(b),
            (a, b) => rank(a).cmp(&rank(b)),
        }
    }

    pub fn total_eq(&self, other: &Value) -> bool {
        self.total_cmp(other) == Ordering::Equal
    }

    /// Literal form accepted back by [`parse_literal`]. Used in trace
    /// records and CLI row output.
    pub fn to_literal(&self) -> String {
        match self {
            Value::Null => "NULL".into(),
            Value::Int(v) => v.to_string(),
            Value::Float(v) => format_float(*v),
            Value::Str(s) => quote_str(s),
            Value::Blob(b) => {
                let mut out = String::with_capacity(3 + b.len() * 2);
                out.push_str("x'");
                for byte in b {
                    out.push_str(&format!("{byte:02x}"));
                }
                out.push('\'');
                out
            }
        }
    }

    /// CSV cell form: unquoted payload, empty string meaning NULL. The csv
    /// crate handles field-level quoting, so strings go out raw.
    pub fn to_csv_field(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Int(v) => v.to_string(),
            Value::Float(v) => format_float(*v),
            Value::Str(s) => s.clone(),
            Value::Blob(b) => b.iter().map(|x| format!("{x:02x}")).collect(),
        }
    }

    /// Parse a CSV cell under a known column type. Empty means NULL.
    pub fn from_csv_field(field: &str, ty: ColumnType) -> Result<Value> {
        if field.is_empty() {
            return Ok(Value::Null);
        }
        match ty {
            ColumnType::Int64 => field
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| Error::Parse(format!("invalid int64 '{field}'"))),
            ColumnType::Float64 => field
                .parse::<f64>()
                .map(Value::Float)
                .map_err(|_| Error::Parse(format!("invalid float64 '{field}'"))),
            ColumnType::String => Ok(Value::Str(field.to_string())),
            ColumnType::Blob => parse_hex(field).map(Value::Blob),
        }
    }
}

fn rank(v: &Value) -> u8 {
    match v {
        Value::Null => 0,
        Value::Int(_) => 1,
        Value::Float(_) => 2,
        Value::Str(_) => 3,
        Value::Blob(_) => 4,
    }
}

/// Floats always render with a decimal point or exponent (or as NaN/inf) so
/// the literal parser can tell them apart from integers; `{:?}` on f64 gives
/// the shortest string that round-trips.
fn format_float(v: f64) -> String {
    format!("{v:?}")
}

fn quote_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\'' => out.push_str("''"),
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

fn parse_hex(s: &str) -> Result<Vec<u8>> {
    if s.len() % 2 != 0 {
        return Err(Error::Parse(format!("odd-length hex literal '{s}'")));
    }
    let mut out = Vec::with_capacity(s.len() / 2);
    let bytes = s.as_bytes();
    for pair in bytes.chunks(2) {
        let hi = hex_digit(pair[0])?;
        let lo = hex_digit(pair[1])?;
        out.push(hi << 4 | lo);
    }
    Ok(out)
}

fn hex_digit(b: u8) -> Result<u8> {
    match b {
        b'0'..=b'9' => Ok(b - b'0'),
        b'a'..=b'f' => Ok(b - b'a' + 10),
        b'A'..=b'F' => Ok(b - b'A' + 10),
        _ => Err(Error::Parse(format!("invalid hex digit '{}'", b as char))),
    }
}

/// Parse one literal from the front of `s`, returning the value and the
/// number of bytes consumed. Accepts the grammar forms (integers, decimal
/// floats, single-quoted strings with doubled-quote escape) plus NULL,
/// x'..' blob literals, and backslash escapes inside strings (the form the
/// trace writer emits for control characters).
pub fn parse_literal(s: &str) -> Result<(Value, usize)> {
    let b = s.as_bytes();
    if b.is_empty() {
        return Err(Error::Parse("expected literal, found end of input".into()));
    }
    if let Some(rest) = s.strip_prefix("NULL") {
        if rest.as_bytes().first().is_none_or(|c| !c.is_ascii_alphanumeric()) {
            return Ok((Value::Null, 4));
        }
    }
    if (s.starts_with("x'") || s.starts_with("X'")) && s.len() >= 2 {
        let body = &s[2..];
        let end = body
            .find('\'')
            .ok_or_else(|| Error::Parse("unterminated blob literal".into()))?;
        let v = parse_hex(&body[..end])?;
        return Ok((Value::Blob(v), 2 + end + 1));
    }
    if b[0] == b'\'' {
        return parse_quoted(s);
    }
    // Numeric: consume [+-]?[0-9.eE+-]* plus the NaN/inf spellings.
    for word in ["NaN", "inf", "-inf", "+inf"] {
        if let Some(rest) = s.strip_prefix(word) {
            if rest.as_bytes().first().is_none_or(|c| !c.is_ascii_alphanumeric()) {
                return Ok((Value::Float(word.parse::<f64>().unwrap()), word.len()));
            }
        }
    }
    let mut end = 0;
    let mut is_float = false;
    while end < b.len() {
        let c = b[end];
        let numeric = c.is_ascii_digit()
            || c == b'.'
            || c == b'e'
            || c == b'E'
            || ((c == b'+' || c == b'-')
                && (end == 0 || b[end - 1] == b'e' || b[end - 1] == b'E'));
        if !numeric {
            break;
        }
        if c == b'.' || c == b'e' || c == b'E' {
            is_float = true;
        }
        end += 1;
    }
    if end == 0 {
        return Err(Error::Parse(format!("expected literal at '{s}'")));
    }
    let tok = &s[..end];
    if is_float {
        let v = tok
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("invalid float literal '{tok}'")))?;
        Ok((Value::Float(v), end))
    } else {
        let v = tok
            .parse::<i64>()
            .map_err(|_| Error::Parse(format!("invalid integer literal '{tok}'")))?;
        Ok((Value::Int(v), end))
    }
}

fn parse_quoted(s: &str) -> Result<(Value, usize)> {
    let b = s.as_bytes();
    debug_assert_eq!(b[0], b'\'');
    let mut out = String::new();
    let mut i = 1;
    while i < b.len() {
        match b[i] {
            b'\'' => {
                if b.get(i + 1) == Some(&b'\'') {
                    out.push('\'');
                    i += 2;
                } else {
                    return Ok((Value::Str(out), i + 1));
                }
            }
            b'\\' => {
                let esc = b
                    .get(i + 1)
                    .ok_or_else(|| Error::Parse("dangling backslash in string".into()))?;
                match esc {
                    b'\\' => out.push('\\'),
                    b't' => out.push('\t'),
                    b'n' => out.push('\n'),
                    b'r' => out.push('\r'),
                    other => {
                        return Err(Error::Parse(format!(
                            "unknown escape '\\{}'",
                            *other as char
                        )))
                    }
                }
                i += 2;
            }
            _ => {
                // Copy one whole UTF-8 scalar.
                let ch = s[i..].chars().next().unwrap();
                out.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    Err(Error::Parse("unterminated string literal".into()))
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_literal())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(v: Value) {
        let lit = v.to_literal();
        let (back, used) = parse_literal(&lit).unwrap();
        assert_eq!(used, lit.len(), "partial parse of {lit}");
        assert!(v.total_eq(&back), "{lit} parsed as {back:?}");
    }

    #[test]
    fn literal_roundtrips() {
        roundtrip(Value::Null);
        roundtrip(Value::Int(0));
        roundtrip(Value::Int(i64::MIN));
        roundtrip(Value::Int(i64::MAX));
        roundtrip(Value::Float(0.1));
        roundtrip(Value::Float(-0.0));
        roundtrip(Value::Float(f64::NAN));
        roundtrip(Value::Float(f64::NEG_INFINITY));
        roundtrip(Value::Float(1e300));
        roundtrip(Value::Str(String::new()));
        roundtrip(Value::Str("it's a 'test'".into()));
        roundtrip(Value::Str("tab\tnewline\nquote'backslash\\".into()));
        roundtrip(Value::Str("héllo wörld".into()));
        roundtrip(Value::Blob(vec![]));
        roundtrip(Value::Blob(vec![0, 0xFF, 0x7F]));
    }

    #[test]
    fn control_chars_never_leak_into_literals() {
        let v = Value::Str("a\tb\nc".into());
        let lit = v.to_literal();
        assert!(!lit.contains('\t'));
        assert!(!lit.contains('\n'));
    }

    #[test]
    fn float_literals_stay_floats() {
        let (v, _) = parse_literal("1.0").unwrap();
        assert!(matches!(v, Value::Float(_)));
        let (v, _) = parse_literal("1").unwrap();
        assert!(matches!(v, Value::Int(_)));
        let (v, _) = parse_literal("1e3").unwrap();
        assert!(matches!(v, Value::Float(_)));
    }

    #[test]
    fn total_order_semantics() {
        use std::cmp::Ordering::*;
        assert_eq!(Value::Null.total_cmp(&Value::Int(i64::MIN)), Less);
        assert_eq!(
            Value::Float(f64::NAN).total_cmp(&Value::Float(f64::NAN)),
            Equal
        );
        assert_eq!(
            Value::Float(f64::NAN).total_cmp(&Value::Float(f64::INFINITY)),
            Greater
        );
        assert_eq!(Value::Float(-0.0).total_cmp(&Value::Float(0.0)), Less);
        assert_eq!(Value::Str("a".into()).total_cmp(&Value::Str("ab".into())), Less);
    }

    #[test]
    fn csv_fields() {
        assert!(Value::from_csv_field("", ColumnType::Int64).unwrap().is_null());
        assert_eq!(
            Value::from_csv_field("-7", ColumnType::Int64).unwrap().to_literal(),
            "-7"
        );
        assert!(Value::from_csv_field("x", ColumnType::Int64).is_err());
        assert_eq!(
            Value::from_csv_field("00ff", ColumnType::Blob).unwrap().to_literal(),
            "x'00ff'"
        );
        let v = Value::Str("plain, text".into());
        assert_eq!(v.to_csv_field(), "plain, text");
    }
}
