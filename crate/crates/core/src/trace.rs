//! Physical operation trace: one tab-separated line per event, appended to
//! `<db>.trace` next to the database file.
//!
//! Line format: `seq<TAB>kind<TAB>table<TAB>detail`. Sequence numbers are
//! strictly increasing and continue across sessions (reopening picks up
//! after the last line). Details carry full row literals, which is what
//! makes a trace replayable; value literals escape tabs and newlines so a
//! line never breaks the framing.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::value::{parse_literal, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Insert,
    Delete,
    UpdateInPlace,
    IndexMaintain,
    TupleMove,
    PlanChosen,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Insert => "INSERT",
            EventKind::Delete => "DELETE",
            EventKind::UpdateInPlace => "UPDATE_IN_PLACE",
            EventKind::IndexMaintain => "INDEX_MAINTAIN",
            EventKind::TupleMove => "TUPLE_MOVE",
            EventKind::PlanChosen => "PLAN_CHOSEN",
        }
    }

    pub fn parse(s: &str) -> Result<EventKind> {
        Ok(match s {
            "INSERT" => EventKind::Insert,
            "DELETE" => EventKind::Delete,
            "UPDATE_IN_PLACE" => EventKind::UpdateInPlace,
            "INDEX_MAINTAIN" => EventKind::IndexMaintain,
            "TUPLE_MOVE" => EventKind::TupleMove,
            "PLAN_CHOSEN" => EventKind::PlanChosen,
            other => return Err(Error::Parse(format!("unknown trace event kind '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    pub table: String,
    pub detail: String,
}

pub struct Trace {
    path: PathBuf,
    file: Option<File>,
    next_seq: u64,
}

impl Trace {
    /// The trace path for a database file: `<db>.trace`.
    pub fn path_for(db_path: &Path) -> PathBuf {
        let mut os = db_path.as_os_str().to_os_string();
        os.push(".trace");
        PathBuf::from(os)
    }

    /// Open (or create) the trace for a database. When disabled, emits are
    /// no-ops and no file is touched. Sequence numbering resumes after the
    /// last line already in the file.
    pub fn open(db_path: &Path, enabled: bool) -> Result<Trace> {
        let path = Trace::path_for(db_path);
        if !enabled {
            return Ok(Trace { path, file: None, next_seq: 1 });
        }
        let next_seq = match read_events(&path) {
            Ok(events) => events.last().map_or(1, |e| e.seq + 1),
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => 1,
            Err(e) => return Err(e),
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Trace { path, file: Some(file), next_seq })
    }

    pub fn is_enabled(&self) -> bool {
        self.file.is_some()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn emit(&mut self, kind: EventKind, table: &str, detail: &str) -> Result<()> {
        let Some(file) = &mut self.file else {
            return Ok(());
        };
        debug_assert!(!table.contains(['\t', '\n']));
        debug_assert!(!detail.contains(['\t', '\n']), "unescaped detail: {detail}");
        writeln!(file, "{}\t{}\t{}\t{}", self.next_seq, kind.name(), table, detail)?;
        self.next_seq += 1;
        Ok(())
    }
}

/// Parse a whole trace file back into events.
pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(4, '\t');
        let (seq, kind, table, detail) =
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
                _ => {
                    return Err(Error::Parse(format!(
                        "trace line {}: expected 4 tab-separated fields",
                        lineno + 1
                    )))
                }
            };
        let seq = seq
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("trace line {}: bad seq '{seq}'", lineno + 1)))?;
        out.push(Event {
            seq,
            kind: EventKind::parse(kind)?,
            table: table.to_string(),
            detail: detail.to_string(),
        });
    }
    Ok(out)
}

/// Render a row as the `(lit, lit, ...)` tuple used in event details.
pub fn row_tuple(row: &[Value]) -> String {
    let parts: Vec<String> = row.iter().map(Value::to_literal).collect();
    format!("({})", parts.join(", "))
}

/// Parse one `(lit, lit, ...)` tuple out of the front of `s`, returning
/// the values and bytes consumed. The inverse of [`row_tuple`]; replay
/// tooling uses it to reconstruct rows from event details.
pub fn parse_row_tuple(s: &str) -> Result<(Vec<Value>, usize)> {
    let inner = s
        .strip_prefix('(')
        .ok_or_else(|| Error::Parse(format!("expected '(' at '{s}'")))?;
    let mut pos = 1usize;
    let mut out = Vec::new();
    if let Some(rest) = inner.strip_prefix(')') {
        let _ = rest;
        return Ok((out, 2));
    }
    loop {
        let (v, used) = parse_literal(&s[pos..])?;
        out.push(v);
        pos += used;
        if s[pos..].starts_with(", ") {
            pos += 2;
        } else if s[pos..].starts_with(')') {
            return Ok((out, pos + 1));
        } else {
            return Err(Error::Parse(format!(
                "expected ', ' or ')' at '{}'",
                &s[pos..]
            )));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    #[test]
    fn emit_read_roundtrip_and_seq_resume() {
        let dir = TempDir::new().unwrap();
        let db = dir.path().join("t.pdx");

        let mut tr = Trace::open(&db, true).unwrap();
        tr.emit(EventKind::Insert, "orders", "row=(1, 'a')").unwrap();
        tr.emit(EventKind::Delete, "orders", "row=(1, 'a')").unwrap();
        drop(tr);

        let events = read_events(&Trace::path_for(&db)).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].seq, 1);
        assert_eq!(events[0].kind, EventKind::Insert);
        assert_eq!(events[1].seq, 2);
        assert_eq!(events[1].detail, "row=(1, 'a')");

        // Reopening continues the numbering.
        let mut tr = Trace::open(&db, true).unwrap();
        tr.emit(EventKind::TupleMove, "orders", "rows=4096").unwrap();
        drop(tr);
        let events = read_events(&Trace::path_for(&db)).unwrap();
        assert_eq!(events[2].seq, 3);
        let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
        assert!(seqs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn disabled_trace_writes_nothing() {
        let dir = TempDir::new().unwrap();
        let db = dir.path().join("t.pdx");
        let mut tr = Trace::open(&db, false).unwrap();
        assert!(!tr.is_enabled());
        tr.emit(EventKind::Insert, "t", "row=(1)").unwrap();
        assert!(!Trace::path_for(&db).exists());
    }

    #[test]
    fn row_tuples_roundtrip_hostile_values() {
        let rows = vec![
            vec![],
            vec![Value::Int(-5)],
            vec![
                Value::Null,
                Value::Str("tab\there, (comma), 'quote'".into()),
                Value::Float(f64::NAN),
                Value::Blob(vec![0xDE, 0xAD]),
            ],
        ];
        for row in rows {
            let s = row_tuple(&row);
            assert!(!s.contains('\t') && !s.contains('\n'));
            let (back, used) = parse_row_tuple(&s).unwrap();
            assert_eq!(used, s.len());
            assert_eq!(back.len(), row.len());
            for (a, b) in row.iter().zip(&back) {
                assert!(a.total_eq(b), "{s}");
            }
        }
        // Embedded tuple inside a larger detail string parses by prefix.
        let detail = "(1, 'x') -> (2, 'y')";
        let (first, used) = parse_row_tuple(detail).unwrap();
        assert_eq!(first.len(), 2);
        let rest = &detail[used..];
        assert!(rest.starts_with(" -> "));
        let (second, _) = parse_row_tuple(&rest[4..]).unwrap();
        assert!(second[0].total_eq(&Value::Int(2)));
    }

    #[test]
    fn malformed_lines_are_reported() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("bad.trace");
        std::fs::write(&path, "1\tINSERT\tt\tok\nnot a line\n").unwrap();
        assert!(matches!(read_events(&path), Err(Error::Parse(_))));
        std::fs::write(&path, "1\tNOPE\tt\tok\n").unwrap();
        assert!(read_events(&path).is_err());
    }
}
