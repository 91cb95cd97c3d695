//! Predicates: conjunctions of simple atoms over named columns.
//!
//! Atom forms: `col = lit`, `col < lit`, `col > lit`, `col BETWEEN lo AND
//! hi`, `col IS NULL`, `col IS NOT NULL`. Comparison atoms never match NULL
//! cells, and NULL literals are rejected at bind time, so the only way to
//! select NULLs is IS NULL. Floats compare by total order here exactly as
//! they do in key encoding.
//!
//! Beyond evaluation, this module answers two structural questions the
//! planner depends on: what interval a predicate pins a column to
//! ([`Predicate::interval_for`]), and whether one predicate syntactically
//! implies another ([`implies`]), which gates filtered-index eligibility.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::value::{parse_literal, ColumnType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Atom {
    Cmp { col: String, op: CmpOp, lit: Value },
    Between { col: String, lo: Value, hi: Value },
    IsNull { col: String },
    IsNotNull { col: String },
}

impl PartialEq for Atom {
    fn eq(&self, other: &Atom) -> bool {
        use Atom::*;
        match (self, other) {
            (Cmp { col: a, op: o1, lit: l1 }, Cmp { col: b, op: o2, lit: l2 }) => {
                a == b && o1 == o2 && l1.total_eq(l2)
            }
            (Between { col: a, lo: l1, hi: h1 }, Between { col: b, lo: l2, hi: h2 }) => {
                a == b && l1.total_eq(l2) && h1.total_eq(h2)
            }
            (IsNull { col: a }, IsNull { col: b }) => a == b,
            (IsNotNull { col: a }, IsNotNull { col: b }) => a == b,
            _ => false,
        }
    }
}

impl Atom {
    pub fn col(&self) -> &str {
        match self {
            Atom::Cmp { col, .. }
            | Atom::Between { col, .. }
            | Atom::IsNull { col }
            | Atom::IsNotNull { col } => col,
        }
    }

    /// Does a single cell satisfy this atom? Comparisons are false against
    /// NULL cells.
    pub fn matches_value(&self, v: &Value) -> bool {
        match self {
            Atom::IsNull { .. } => v.is_null(),
            Atom::IsNotNull { .. } => !v.is_null(),
            _ if v.is_null() => false,
            Atom::Cmp { op, lit, .. } => {
                let ord = v.total_cmp(lit);
                match op {
                    CmpOp::Eq => ord == Ordering::Equal,
                    CmpOp::Lt => ord == Ordering::Less,
                    CmpOp::Gt => ord == Ordering::Greater,
                }
            }
            Atom::Between { lo, hi, .. } => {
                v.total_cmp(lo) != Ordering::Less && v.total_cmp(hi) != Ordering::Greater
            }
        }
    }

    /// Could any row in a group with the given column summary satisfy this
    /// atom? `min`/`max` cover non-null values only; None means the group
    /// has no non-null values. Used for rowgroup elimination.
    pub fn possibly_matches(
        &self,
        min: Option<&Value>,
        max: Option<&Value>,
        null_count: u64,
        row_count: u64,
    ) -> bool {
        match self {
            Atom::IsNull { .. } => null_count > 0,
            Atom::IsNotNull { .. } => null_count < row_count,
            Atom::Cmp { op, lit, .. } => match (min, max) {
                (Some(min), Some(max)) => match op {
                    CmpOp::Eq => {
                        min.total_cmp(lit) != Ordering::Greater
                            && max.total_cmp(lit) != Ordering::Less
                    }
                    CmpOp::Lt => min.total_cmp(lit) == Ordering::Less,
                    CmpOp::Gt => max.total_cmp(lit) == Ordering::Greater,
                },
                _ => false,
            },
            Atom::Between { lo, hi, .. } => match (min, max) {
                (Some(min), Some(max)) => {
                    max.total_cmp(lo) != Ordering::Less && min.total_cmp(hi) != Ordering::Greater
                }
                _ => false,
            },
        }
    }

    fn render(&self) -> String {
        match self {
            Atom::Cmp { col, op, lit } => format!("{col} {} {}", op.symbol(), lit.to_literal()),
            Atom::Between { col, lo, hi } => {
                format!("{col} BETWEEN {} AND {}", lo.to_literal(), hi.to_literal())
            }
            Atom::IsNull { col } => format!("{col} IS NULL"),
            Atom::IsNotNull { col } => format!("{col} IS NOT NULL"),
        }
    }
}

/// Conjunction of atoms. Empty means "matches every row".
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predicate {
    pub atoms: Vec<Atom>,
}

impl Predicate {
    pub fn empty() -> Predicate {
        Predicate { atoms: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Parse `atom AND atom AND ...`. At least one atom; for the empty
    /// predicate use [`Predicate::empty`].
    pub fn parse(s: &str) -> Result<Predicate> {
        let mut cur = Cursor::new(s);
        let p = cur.predicate()?;
        cur.expect_end()?;
        Ok(p)
    }

    pub fn render(&self) -> String {
        self.atoms
            .iter()
            .map(Atom::render)
            .collect::<Vec<_>>()
            .join(" AND ")
    }

    /// Type-check against a schema and return the normalized predicate:
    /// every column resolves, literals match the column type (integer
    /// literals are widened for float64 columns), NULL literals are refused
    /// in comparisons, and BETWEEN bounds are ordered.
    pub fn bind(&self, mut col_type: impl FnMut(&str) -> Option<ColumnType>) -> Result<Predicate> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for atom in &self.atoms {
            let col = atom.col();
            let ty = col_type(col).ok_or_else(|| Error::UnknownColumn(col.to_string()))?;
            let bound = match atom {
                Atom::Cmp { col, op, lit } => Atom::Cmp {
                    col: col.clone(),
                    op: *op,
                    lit: coerce(lit, ty, col)?,
                },
                Atom::Between { col, lo, hi } => {
                    let lo = coerce(lo, ty, col)?;
                    let hi = coerce(hi, ty, col)?;
                    if lo.total_cmp(&hi) == Ordering::Greater {
                        return Err(Error::Parse(format!(
                            "BETWEEN bounds out of order on '{col}': {} > {}",
                            lo.to_literal(),
                            hi.to_literal()
                        )));
                    }
                    Atom::Between { col: col.clone(), lo, hi }
                }
                other => other.clone(),
            };
            atoms.push(bound);
        }
        Ok(Predicate { atoms })
    }

    /// The columns this predicate touches, in atom order, deduplicated.
    pub fn columns(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for a in &self.atoms {
            if !out.contains(&a.col()) {
                out.push(a.col());
            }
        }
        out
    }

    /// Resolve column positions once; the result evaluates rows cheaply.
    pub fn resolve(&self, cols: &[String]) -> Result<ResolvedPredicate<'_>> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let idx = cols
                .iter()
                .position(|c| c == a.col())
                .ok_or_else(|| Error::UnknownColumn(a.col().to_string()))?;
            atoms.push((idx, a));
        }
        Ok(ResolvedPredicate { atoms })
    }

    /// Combined constraint this predicate places on one column. Multiple
    /// atoms on the column intersect.
    pub fn interval_for(&self, col: &str) -> ColRange {
        let mut r = ColRange::default();
        for a in self.atoms.iter().filter(|a| a.col() == col) {
            match a {
                Atom::IsNull { .. } => r.is_null = true,
                Atom::IsNotNull { .. } => r.not_null = true,
                Atom::Cmp { op: CmpOp::Eq, lit, .. } => {
                    r.tighten_lo(lit, false);
                    r.tighten_hi(lit, false);
                }
                Atom::Cmp { op: CmpOp::Lt, lit, .. } => r.tighten_hi(lit, true),
                Atom::Cmp { op: CmpOp::Gt, lit, .. } => r.tighten_lo(lit, true),
                Atom::Between { lo, hi, .. } => {
                    r.tighten_lo(lo, false);
                    r.tighten_hi(hi, false);
                }
            }
        }
        r
    }

    /// The single value the predicate pins `col` to, if any. IS NULL with
    /// no competing bounds pins the column to NULL (hash indexes treat that
    /// as an equality probe).
    pub fn equality_value(&self, col: &str) -> Option<Value> {
        let r = self.interval_for(col);
        if r.is_null && r.lo.is_none() && r.hi.is_none() {
            return Some(Value::Null);
        }
        match (&r.lo, &r.hi) {
            (Some((lv, false)), Some((hv, false))) if lv.total_eq(hv) && !r.is_null => {
                Some(lv.clone())
            }
            _ => None,
        }
    }
}

/// One column's accumulated constraint: an interval (each bound tagged
/// strict/closed) plus null flags.
#[derive(Debug, Clone, Default)]
pub struct ColRange {
    pub lo: Option<(Value, bool)>,
    pub hi: Option<(Value, bool)>,
    pub is_null: bool,
    pub not_null: bool,
}

impl ColRange {
    pub fn is_unconstrained(&self) -> bool {
        self.lo.is_none() && self.hi.is_none() && !self.is_null && !self.not_null
    }

    fn tighten_lo(&mut self, v: &Value, strict: bool) {
        let replace = match &self.lo {
            None => true,
            Some((cur, cur_strict)) => match v.total_cmp(cur) {
                Ordering::Greater => true,
                Ordering::Equal => strict && !cur_strict,
                Ordering::Less => false,
            },
        };
        if replace {
            self.lo = Some((v.clone(), strict));
        }
    }

    fn tighten_hi(&mut self, v: &Value, strict: bool) {
        let replace = match &self.hi {
            None => true,
            Some((cur, cur_strict)) => match v.total_cmp(cur) {
                Ordering::Less => true,
                Ordering::Equal => strict && !cur_strict,
                Ordering::Greater => false,
            },
        };
        if replace {
            self.hi = Some((v.clone(), strict));
        }
    }

    /// Is this range at least as tight as `outer` on the low side?
    fn lo_within(&self, outer: &Option<(Value, bool)>) -> bool {
        match (outer, &self.lo) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some((ov, os)), Some((sv, ss))) => match sv.total_cmp(ov) {
                Ordering::Greater => true,
                Ordering::Equal => *ss || !os,
                Ordering::Less => false,
            },
        }
    }

    fn hi_within(&self, outer: &Option<(Value, bool)>) -> bool {
        match (outer, &self.hi) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some((ov, os)), Some((sv, ss))) => match sv.total_cmp(ov) {
                Ordering::Less => true,
                Ordering::Equal => *ss || !os,
                Ordering::Greater => false,
            },
        }
    }
}

/// Does every row satisfying `query` also satisfy `filter`? Syntactic and
/// conservative: equality match, interval containment per column, and
/// comparison atoms implying IS NOT NULL. A `false` answer is always safe
/// (the planner just skips the filtered index). Both predicates must
/// already be bound against the same schema.
pub fn implies(query: &Predicate, filter: &Predicate) -> bool {
    filter.atoms.iter().all(|f| {
        let qr = query.interval_for(f.col());
        match f {
            Atom::IsNull { .. } => qr.is_null,
            Atom::IsNotNull { .. } => qr.not_null || qr.lo.is_some() || qr.hi.is_some(),
            _ => {
                // Interval containment; NULL-selecting queries match rows
                // that no comparison atom accepts.
                if qr.is_null {
                    return false;
                }
                let fr = filter_atom_range(f);
                qr.lo_within(&fr.lo) && qr.hi_within(&fr.hi)
            }
        }
    })
}

fn filter_atom_range(a: &Atom) -> ColRange {
    let mut r = ColRange::default();
    match a {
        Atom::Cmp { op: CmpOp::Eq, lit, .. } => {
            r.tighten_lo(lit, false);
            r.tighten_hi(lit, false);
        }
        Atom::Cmp { op: CmpOp::Lt, lit, .. } => r.tighten_hi(lit, true),
        Atom::Cmp { op: CmpOp::Gt, lit, .. } => r.tighten_lo(lit, true),
        Atom::Between { lo, hi, .. } => {
            r.tighten_lo(lo, false);
            r.tighten_hi(hi, false);
        }
        _ => unreachable!("null atoms handled by caller"),
    }
    r
}

pub struct ResolvedPredicate<'p> {
    atoms: Vec<(usize, &'p Atom)>,
}

impl ResolvedPredicate<'_> {
    pub fn matches(&self, row: &[Value]) -> bool {
        self.atoms.iter().all(|(i, a)| a.matches_value(&row[*i]))
    }
}

fn coerce(lit: &Value, ty: ColumnType, col: &str) -> Result<Value> {
    match (lit, ty) {
        (Value::Null, _) => Err(Error::TypeMismatch(format!(
            "comparison with NULL on '{col}' never matches; use IS NULL"
        ))),
        (Value::Int(i), ColumnType::Float64) => Ok(Value::Float(*i as f64)),
        (v, ty) if v.type_of() == Some(ty) => Ok(v.clone()),
        (v, ty) => Err(Error::TypeMismatch(format!(
            "column '{col}' is {} but literal {} is {}",
            ty.name(),
            v.to_literal(),
            v.type_of().map_or("null", ColumnType::name),
        ))),
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

// ---- parsing ----

pub(crate) struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(s: &'a str) -> Cursor<'a> {
        Cursor { s, pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.s[self.pos..].starts_with(|c: char| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    pub(crate) fn expect_end(&mut self) -> Result<()> {
        self.skip_ws();
        if self.pos == self.s.len() {
            Ok(())
        } else {
            Err(Error::Parse(format!("unexpected input at '{}'", self.rest())))
        }
    }

    /// Consume `kw` if it appears next as a whole word (case-insensitive).
    pub(crate) fn keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let rest = self.rest();
        if rest.len() >= kw.len()
            && rest[..kw.len()].eq_ignore_ascii_case(kw)
            && rest[kw.len()..]
                .chars()
                .next()
                .is_none_or(|c| !c.is_ascii_alphanumeric() && c != '_')
        {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.keyword(kw) {
            Ok(())
        } else {
            Err(Error::Parse(format!("expected {kw} at '{}'", self.rest())))
        }
    }

    pub(crate) fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let rest = self.rest();
        let mut end = 0;
        for c in rest.chars() {
            let ok = if end == 0 {
                c.is_ascii_alphabetic() || c == '_'
            } else {
                c.is_ascii_alphanumeric() || c == '_'
            };
            if !ok {
                break;
            }
            end += c.len_utf8();
        }
        if end == 0 {
            return Err(Error::Parse(format!("expected identifier at '{rest}'")));
        }
        self.pos += end;
        Ok(rest[..end].to_string())
    }

    pub(crate) fn punct(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    pub(crate) fn literal(&mut self) -> Result<Value> {
        self.skip_ws();
        let (v, used) = parse_literal(self.rest())?;
        self.pos += used;
        Ok(v)
    }

    fn atom(&mut self) -> Result<Atom> {
        let col = self.ident()?;
        if self.keyword("IS") {
            let not = self.keyword("NOT");
            self.expect_keyword("NULL")?;
            return Ok(if not {
                Atom::IsNotNull { col }
            } else {
                Atom::IsNull { col }
            });
        }
        if self.keyword("BETWEEN") {
            let lo = self.literal()?;
            self.expect_keyword("AND")?;
            let hi = self.literal()?;
            return Ok(Atom::Between { col, lo, hi });
        }
        self.skip_ws();
        let op = if self.punct('=') {
            CmpOp::Eq
        } else if self.punct('<') {
            CmpOp::Lt
        } else if self.punct('>') {
            CmpOp::Gt
        } else {
            return Err(Error::Parse(format!(
                "expected =, <, >, BETWEEN, or IS after '{col}'"
            )));
        };
        let lit = self.literal()?;
        Ok(Atom::Cmp { col, op, lit })
    }

    pub(crate) fn predicate(&mut self) -> Result<Predicate> {
        let mut atoms = vec![self.atom()?];
        while self.keyword("AND") {
            atoms.push(self.atom()?);
        }
        Ok(Predicate { atoms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Predicate {
        Predicate::parse(s).unwrap()
    }

    fn schema(col: &str) -> Option<ColumnType> {
        match col {
            "a" | "b" => Some(ColumnType::Int64),
            "f" => Some(ColumnType::Float64),
            "s" => Some(ColumnType::String),
            "raw" => Some(ColumnType::Blob),
            _ => None,
        }
    }

    #[test]
    fn parse_render_roundtrip() {
        for src in [
            "a = 5",
            "a < -3 AND b > 12",
            "a BETWEEN 1 AND 10",
            "s = 'and AND between'",
            "s = 'it''s'",
            "a IS NULL",
            "b IS NOT NULL",
            "f = NaN",
            "f BETWEEN -inf AND 0.5",
            "raw = x'00ff'",
            "a = 1 AND a = 1 AND s > 'x'",
        ] {
            let parsed = p(src);
            let rendered = parsed.render();
            assert_eq!(Predicate::parse(&rendered).unwrap(), parsed, "src={src}");
        }
        // Keywords are case-insensitive, canonical render is upper.
        assert_eq!(p("a between 1 and 2"), p("a BETWEEN 1 AND 2"));
        assert_eq!(p("a is not null"), p("a IS NOT NULL"));
    }

    #[test]
    fn parse_rejects_malformed() {
        for src in [
            "",
            "a",
            "a =",
            "= 5",
            "a = 5 AND",
            "a BETWEEN 1",
            "a BETWEEN 1 AND",
            "a IS",
            "a IS NOT",
            "s = 'unterminated",
            "a = 5 garbage",
            "a >= 5",
            "1 = a",
        ] {
            assert!(Predicate::parse(src).is_err(), "accepted: {src}");
        }
    }

    #[test]
    fn bind_checks_types() {
        assert!(p("a = 5").bind(schema).is_ok());
        assert!(p("q = 5").bind(schema).is_err());
        assert!(matches!(
            p("a = 'x'").bind(schema),
            Err(Error::TypeMismatch(_))
        ));
        assert!(matches!(
            p("a = NULL").bind(schema),
            Err(Error::TypeMismatch(_))
        ));
        assert!(matches!(
            p("a BETWEEN 9 AND 1").bind(schema),
            Err(Error::Parse(_))
        ));

        // Integer literals widen for float columns.
        let bound = p("f > 2 AND f BETWEEN 1 AND 10").bind(schema).unwrap();
        assert_eq!(bound.render(), "f > 2.0 AND f BETWEEN 1.0 AND 10.0");
    }

    #[test]
    fn null_semantics() {
        let lt = &p("a < 5").atoms[0];
        let isnull = &p("a IS NULL").atoms[0];
        let notnull = &p("a IS NOT NULL").atoms[0];
        assert!(!lt.matches_value(&Value::Null));
        assert!(lt.matches_value(&Value::Int(4)));
        assert!(isnull.matches_value(&Value::Null));
        assert!(!isnull.matches_value(&Value::Int(4)));
        assert!(!notnull.matches_value(&Value::Null));
        assert!(notnull.matches_value(&Value::Int(4)));
    }

    #[test]
    fn float_total_order_in_atoms() {
        let eq_nan = &p("f = NaN").atoms[0];
        assert!(eq_nan.matches_value(&Value::Float(f64::NAN)));
        let gt_inf = &p("f > inf").atoms[0];
        assert!(gt_inf.matches_value(&Value::Float(f64::NAN)));
        assert!(!gt_inf.matches_value(&Value::Float(f64::INFINITY)));
    }

    #[test]
    fn resolve_and_match_rows() {
        let cols: Vec<String> = ["a", "b", "s"].iter().map(|s| s.to_string()).collect();
        let pred = p("a > 1 AND s = 'x'");
        let r = pred.resolve(&cols).unwrap();
        assert!(r.matches(&[Value::Int(2), Value::Null, Value::Str("x".into())]));
        assert!(!r.matches(&[Value::Int(1), Value::Null, Value::Str("x".into())]));
        assert!(!r.matches(&[Value::Int(2), Value::Null, Value::Str("y".into())]));
        assert!(pred.resolve(&cols[..2].to_vec()).is_err());
    }

    #[test]
    fn interval_intersection() {
        let pred = p("a > 1 AND a < 10 AND a > 3");
        let r = pred.interval_for("a");
        assert!(matches!(&r.lo, Some((v, true)) if v.total_eq(&Value::Int(3))));
        assert!(matches!(&r.hi, Some((v, true)) if v.total_eq(&Value::Int(10))));

        // Equality pins both sides closed; BETWEEN tightens a strict bound
        // at the same value.
        let r = p("a = 7").interval_for("a");
        assert!(matches!(&r.lo, Some((_, false))));
        assert!(matches!(&r.hi, Some((_, false))));
        let r = p("a < 5 AND a BETWEEN 0 AND 5").interval_for("a");
        assert!(matches!(&r.hi, Some((v, true)) if v.total_eq(&Value::Int(5))));

        assert!(p("b = 1").interval_for("a").is_unconstrained());
    }

    #[test]
    fn equality_extraction() {
        assert!(p("a = 7").equality_value("a").unwrap().total_eq(&Value::Int(7)));
        assert!(p("a BETWEEN 7 AND 7").equality_value("a").unwrap().total_eq(&Value::Int(7)));
        assert!(p("a IS NULL").equality_value("a").unwrap().is_null());
        assert!(p("a > 7").equality_value("a").is_none());
        assert!(p("a = 7").equality_value("b").is_none());
        assert!(p("a = 7 AND a IS NULL").equality_value("a").is_none());
    }

    #[test]
    fn implication_table() {
        let yes = [
            ("a = 5", "a IS NOT NULL"),
            ("a > 5", "a IS NOT NULL"),
            ("a BETWEEN 1 AND 2", "a IS NOT NULL"),
            ("a IS NOT NULL", "a IS NOT NULL"),
            ("a IS NULL", "a IS NULL"),
            ("a = 5", "a = 5"),
            ("a = 5", "a > 4"),
            ("a = 5", "a BETWEEN 5 AND 9"),
            ("a BETWEEN 3 AND 4", "a BETWEEN 1 AND 10"),
            ("a BETWEEN 3 AND 4", "a > 2"),
            ("a > 5", "a > 5"),
            ("a > 6", "a > 5"),
            ("a < 5", "a < 5"),
            ("a > 2 AND a < 4", "a BETWEEN 2 AND 4"),
            ("a = 5 AND b = 1", "a > 0"),
            ("a = 5 AND b = 1", "b IS NOT NULL AND a = 5"),
            ("s > 'm'", "s > 'a'"),
        ];
        for (q, f) in yes {
            assert!(implies(&p(q), &p(f)), "{q} should imply {f}");
        }
        let no = [
            ("a > 4", "a = 5"),
            ("a > 5", "a > 6"),
            ("a BETWEEN 1 AND 10", "a BETWEEN 3 AND 4"),
            ("a IS NULL", "a IS NOT NULL"),
            ("a IS NOT NULL", "a = 5"),
            ("a IS NOT NULL", "a IS NULL"),
            ("a = 5", "a IS NULL"),
            ("a = 5", "b = 5"),
            ("b = 5", "a IS NOT NULL"),
            ("a IS NULL", "a > 0"),
            ("a > 5", "a BETWEEN 6 AND 10"),
            ("a < 5 AND a > 10", "a IS NULL"),
        ];
        for (q, f) in no {
            assert!(!implies(&p(q), &p(f)), "{q} should not imply {f}");
        }
        // Strictness edges: x > 5 implies x > 4 and "x >= 5"-shaped
        // BETWEENs only when the bound really is inside.
        assert!(implies(&p("a > 5"), &p("a BETWEEN 5 AND 100")) == false);
        assert!(implies(&p("a BETWEEN 5 AND 100"), &p("a > 4")));
        assert!(!implies(&p("a BETWEEN 5 AND 100"), &p("a > 5")));
    }

    #[test]
    fn elimination_bounds() {
        let one = Value::Int(1);
        let hundred = Value::Int(100);
        let minmax = (Some(&one), Some(&hundred));
        let eq150 = &p("a = 150").atoms[0];
        let eq100 = &p("a = 100").atoms[0];
        let lt1 = &p("a < 1").atoms[0];
        let gt100 = &p("a > 100").atoms[0];
        let bt = &p("a BETWEEN 90 AND 200").atoms[0];
        assert!(!eq150.possibly_matches(minmax.0, minmax.1, 0, 10));
        assert!(eq100.possibly_matches(minmax.0, minmax.1, 0, 10));
        assert!(!lt1.possibly_matches(minmax.0, minmax.1, 0, 10));
        assert!(!gt100.possibly_matches(minmax.0, minmax.1, 0, 10));
        assert!(bt.possibly_matches(minmax.0, minmax.1, 0, 10));

        let isnull = &p("a IS NULL").atoms[0];
        let notnull = &p("a IS NOT NULL").atoms[0];
        assert!(!isnull.possibly_matches(minmax.0, minmax.1, 0, 10));
        assert!(isnull.possibly_matches(None, None, 10, 10));
        assert!(!notnull.possibly_matches(None, None, 10, 10));
        // All-null group can never match a comparison.
        assert!(!eq100.possibly_matches(None, None, 10, 10));
    }

    // Random predicate pairs over a tiny integer domain: whenever the
    // checker claims implication, exhaustive row evaluation must agree.
    fn arb_atom() -> impl Strategy<Value = Atom> {
        let col = prop_oneof![Just("a".to_string()), Just("b".to_string())];
        let lit = (-3i64..=3).prop_map(Value::Int);
        prop_oneof![
            (col.clone(), prop_oneof![Just(CmpOp::Eq), Just(CmpOp::Lt), Just(CmpOp::Gt)], lit.clone())
                .prop_map(|(col, op, lit)| Atom::Cmp { col, op, lit }),
            (col.clone(), -3i64..=3, -3i64..=3).prop_map(|(col, x, y)| Atom::Between {
                col,
                lo: Value::Int(x.min(y)),
                hi: Value::Int(x.max(y)),
            }),
            col.clone().prop_map(|col| Atom::IsNull { col }),
            col.prop_map(|col| Atom::IsNotNull { col }),
        ]
    }

    proptest! {
        #[test]
        fn implication_is_sound(
            q in proptest::collection::vec(arb_atom(), 1..4),
            f in proptest::collection::vec(arb_atom(), 1..3),
        ) {
            let q = Predicate { atoms: q };
            let f = Predicate { atoms: f };
            if implies(&q, &f) {
                let cols: Vec<String> = vec!["a".into(), "b".into()];
                let rq = q.resolve(&cols).unwrap();
                let rf = f.resolve(&cols).unwrap();
                let domain: Vec<Value> =
                    (-4i64..=4).map(Value::Int).chain([Value::Null]).collect();
                for va in &domain {
                    for vb in &domain {
                        let row = [va.clone(), vb.clone()];
                        if rq.matches(&row) {
                            prop_assert!(
                                rf.matches(&row),
                                "{} implies {} but row ({va:?},{vb:?}) splits them",
                                q.render(),
                                f.render()
                            );
                        }
                    }
                }
            }
        }

        #[test]
        fn roundtrip_random(atoms in proptest::collection::vec(arb_atom(), 1..5)) {
            let pred = Predicate { atoms };
            prop_assert_eq!(Predicate::parse(&pred.render()).unwrap(), pred);
        }
    }
}
