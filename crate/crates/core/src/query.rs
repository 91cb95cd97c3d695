//! The query surface: single-table SELECT with a column list or one
//! aggregate, and an optional WHERE conjunction.

use std::fmt;

use crate::error::{Error, Result};
use crate::predicate::{Cursor, Predicate};

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Cols(Vec<String>),
    Count,
    Sum(String),
}

impl Projection {
    /// Columns the projection itself needs from the row.
    pub fn columns(&self) -> Vec<&str> {
        match self {
            Projection::Cols(cols) => cols.iter().map(String::as_str).collect(),
            Projection::Count => Vec::new(),
            Projection::Sum(col) => vec![col.as_str()],
        }
    }

    pub fn is_aggregate(&self) -> bool {
        !matches!(self, Projection::Cols(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub table: String,
    pub projection: Projection,
    pub predicate: Predicate,
}

impl Query {
    pub fn parse(s: &str) -> Result<Query> {
        let mut cur = Cursor::new(s);
        cur.expect_keyword("SELECT")?;
        let projection = if cur.keyword("COUNT") {
            if !(cur.punct('(') && cur.punct('*') && cur.punct(')')) {
                return Err(Error::Parse("expected COUNT(*)".into()));
            }
            Projection::Count
        } else if cur.keyword("SUM") {
            if !cur.punct('(') {
                return Err(Error::Parse("expected SUM(col)".into()));
            }
            let col = cur.ident()?;
            if !cur.punct(')') {
                return Err(Error::Parse("expected ) after SUM column".into()));
            }
            Projection::Sum(col)
        } else {
            let mut cols = vec![cur.ident()?];
            while cur.punct(',') {
                cols.push(cur.ident()?);
            }
            Projection::Cols(cols)
        };
        cur.expect_keyword("FROM")?;
        let table = cur.ident()?;
        let predicate = if cur.keyword("WHERE") {
            cur.predicate()?
        } else {
            Predicate::empty()
        };
        cur.expect_end()?;
        Ok(Query { table, projection, predicate })
    }

    pub fn render(&self) -> String {
        let proj = match &self.projection {
            Projection::Cols(cols) => cols.join(", "),
            Projection::Count => "COUNT(*)".into(),
            Projection::Sum(col) => format!("SUM({col})"),
        };
        if self.predicate.is_empty() {
            format!("SELECT {proj} FROM {}", self.table)
        } else {
            format!("SELECT {proj} FROM {} WHERE {}", self.table, self.predicate.render())
        }
    }

    /// Every column the query reads: projection plus predicate columns,
    /// deduplicated in first-use order.
    pub fn referenced_columns(&self) -> Vec<&str> {
        let mut out = self.projection.columns();
        for c in self.predicate.columns() {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips() {
        for src in [
            "SELECT a FROM t",
            "SELECT a, b, c FROM t WHERE a = 5",
            "SELECT COUNT(*) FROM t WHERE x IS NOT NULL AND y BETWEEN 1 AND 2",
            "SELECT SUM(amount) FROM orders WHERE region = 'west, east'",
        ] {
            let q = Query::parse(src).unwrap();
            assert_eq!(Query::parse(&q.render()).unwrap(), q, "src={src}");
            assert_eq!(q.render(), src);
        }
        // Case-insensitive keywords; canonical render normalizes.
        let q = Query::parse("select a from t where a = 1").unwrap();
        assert_eq!(q.render(), "SELECT a FROM t WHERE a = 1");
    }

    #[test]
    fn rejects_malformed() {
        for src in [
            "",
            "SELECT",
            "SELECT FROM t",
            "SELECT a",
            "SELECT a FROM",
            "SELECT a, FROM t",
            "SELECT COUNT(a) FROM t",
            "SELECT SUM(*) FROM t",
            "SELECT a FROM t WHERE",
            "SELECT a FROM t trailing",
            "SELECT a, COUNT(*) FROM t",
            "INSERT INTO t",
        ] {
            assert!(Query::parse(src).is_err(), "accepted: {src}");
        }
    }

    #[test]
    fn referenced_columns_dedup() {
        let q = Query::parse("SELECT a, b FROM t WHERE b = 1 AND c > 2").unwrap();
        assert_eq!(q.referenced_columns(), vec!["a", "b", "c"]);
        let q = Query::parse("SELECT SUM(a) FROM t WHERE a > 0").unwrap();
        assert_eq!(q.referenced_columns(), vec!["a"]);
        assert!(q.projection.is_aggregate());
    }
}
