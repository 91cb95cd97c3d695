//! Exact statistics. Everything here is computed by full scan: at the
//! scale this engine targets that is affordable, and it removes sampling
//! error as a variable when checking the planner's estimates.

use crate::catalog::IndexKind;
use crate::engine::{key_positions, open_tree, project, Engine, IxCtx};
use crate::error::{Error, Result};
use crate::key::encode_key;
use crate::predicate::Predicate;

/// Shape of one index, as the planner and advisor consume it.
///
/// depth and leaf_pages describe B-trees directly. A hash index reports
/// depth 1 (one bucket probe) and zero leaf pages (it is memory-resident);
/// a columnstore reports depth 1 and its sealed segment pages.
#[derive(Debug, Clone)]
pub struct IndexStats {
    pub depth: u32,
    pub leaf_pages: u64,
    /// 1 / distinct key tuples among indexed rows; 1.0 when empty.
    pub density: f64,
    pub row_count: u64,
}

#[derive(Debug, Clone)]
pub struct SelectivityReport {
    pub predicate: Predicate,
    pub matched: u64,
    pub total: u64,
    pub fraction: f64,
}

/// Distinct count under the index key encoding, which gives every value
/// one canonical byte form (NaNs collapse, -0.0 and 0.0 stay distinct).
pub(crate) fn distinct_keys(rows: &[Vec<crate::value::Value>], pos: &[usize]) -> Result<u64> {
    let mut seen = std::collections::HashSet::new();
    for row in rows {
        seen.insert(encode_key(&project(row, pos))?);
    }
    Ok(seen.len() as u64)
}

impl Engine {
    /// Density of a column tuple: 1 / distinct, computed exactly.
    pub fn density(&mut self, table: &str, cols: &[String]) -> Result<f64> {
        let tdef = self.catalog().table(table)?.clone();
        let pos = key_positions(&tdef, cols)?;
        if cols.is_empty() {
            return Err(Error::UnknownColumn("(none)".into()));
        }
        let rows: Vec<_> = self
            .base_rows(table)?
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyTable(table.to_string()));
        }
        Ok(1.0 / distinct_keys(&rows, &pos)? as f64)
    }

    /// Exact matched fraction of a bound predicate.
    pub fn selectivity(&mut self, table: &str, pred: &Predicate) -> Result<SelectivityReport> {
        let tdef = self.catalog().table(table)?.clone();
        let rp = pred.resolve(&tdef.col_names())?;
        let mut total = 0u64;
        let mut matched = 0u64;
        for (_, row) in self.base_rows(table)? {
            total += 1;
            if rp.matches(&row) {
                matched += 1;
            }
        }
        let fraction = if total == 0 {
            0.0
        } else {
            matched as f64 / total as f64
        };
        Ok(SelectivityReport { predicate: pred.clone(), matched, total, fraction })
    }

    pub fn index_stats(&mut self, index: &str) -> Result<IndexStats> {
        let def = self.catalog().index(index)?.clone();
        let tdef = self.catalog().table(&def.table)?.clone();
        let col_names = tdef.col_names();
        let ctx = IxCtx::build(def.clone(), &tdef)?;
        let filt = ctx.filter(&col_names)?;
        let indexed: Vec<_> = self
            .base_rows(&def.table)?
            .into_iter()
            .map(|(_, r)| r)
            .filter(|r| filt.as_ref().map(|f| f.matches(r)).unwrap_or(true))
            .collect();
        let row_count = indexed.len() as u64;
        let density = if row_count == 0 {
            1.0
        } else {
            1.0 / distinct_keys(&indexed, &ctx.key_pos)? as f64
        };
        let (depth, leaf_pages) = match def.kind {
            IndexKind::Clustered | IndexKind::NonClustered => {
                let tree = open_tree(&def);
                let depth = tree.depth(&mut self.pager)?;
                let (leaves, _) = tree.leaf_stats(&mut self.pager)?;
                (depth, leaves)
            }
            IndexKind::Hash => (1, 0),
            IndexKind::Columnstore => {
                let cs = self.stores.get(&def.name).ok_or_else(|| {
                    Error::Corrupt(format!("no columnstore handle for '{}'", def.name))
                })?;
                (1, cs.disk_pages())
            }
        };
        Ok(IndexStats { depth, leaf_pages, density, row_count })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ColumnDef;
    use crate::engine::IndexSpec;
    use crate::value::{ColumnType, Value};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use tempfile::TempDir;

    fn setup(vals: &[i64]) -> (TempDir, Engine) {
        let dir = TempDir::new().unwrap();
        let mut e = Engine::create_with(&dir.path().join("t.pdex"), false).unwrap();
        e.create_table(
            "t",
            vec![ColumnDef { name: "x".into(), ty: ColumnType::Int64, nullable: true }],
            None,
        )
        .unwrap();
        let rows = vals.iter().map(|&v| vec![Value::Int(v)]).collect();
        e.insert_rows("t", rows).unwrap();
        (dir, e)
    }

    #[test]
    fn density_is_one_over_distinct() {
        let (_d, mut e) = setup(&[7; 100]);
        assert_eq!(e.density("t", &["x".into()]).unwrap(), 1.0);

        let all: Vec<i64> = (0..100).collect();
        let (_d, mut e) = setup(&all);
        assert_eq!(e.density("t", &["x".into()]).unwrap(), 0.01);

        let (_d, mut e) = setup(&[1, 1, 2, 2]);
        assert_eq!(e.density("t", &["x".into()]).unwrap(), 0.5);
    }

    #[test]
    fn density_errors_on_empty_table() {
        let (_d, mut e) = setup(&[]);
        assert!(matches!(
            e.density("t", &["x".into()]).unwrap_err(),
            Error::EmptyTable(_)
        ));
    }

    #[test]
    fn selectivity_matches_count_oracle() {
        let vals: Vec<i64> = (1..=1000).collect();
        let (_d, mut e) = setup(&vals);
        let tdef = e.catalog().table("t").unwrap().clone();
        let p = Predicate::parse("x BETWEEN 1 AND 100")
            .unwrap()
            .bind(|c| tdef.col_type(c))
            .unwrap();
        let rep = e.selectivity("t", &p).unwrap();
        assert_eq!(rep.matched, 100);
        assert_eq!(rep.total, 1000);
        assert_eq!(rep.fraction, 0.1);

        let p = Predicate::parse("x = -1").unwrap().bind(|c| tdef.col_type(c)).unwrap();
        assert_eq!(e.selectivity("t", &p).unwrap().fraction, 0.0);
    }

    #[test]
    fn selectivity_ignores_indexes_and_order() {
        let mut rng = StdRng::seed_from_u64(11);
        let mut vals: Vec<i64> = (0..500).map(|_| rng.random_range(0..50)).collect();
        let (_d, mut e) = setup(&vals);
        let tdef = e.catalog().table("t").unwrap().clone();
        let p = Predicate::parse("x > 25").unwrap().bind(|c| tdef.col_type(c)).unwrap();
        let before = e.selectivity("t", &p).unwrap();

        // same multiset, different physical layout + an index
        vals.reverse();
        let (_d2, mut e2) = setup(&vals);
        e2.create_index(IndexSpec::new(
            "ix",
            "t",
            crate::catalog::IndexKind::NonClustered,
            vec!["x".into()],
        ))
        .unwrap();
        let after = e2.selectivity("t", &p).unwrap();
        assert_eq!(before.matched, after.matched);
        assert_eq!(before.fraction, after.fraction);
    }

    #[test]
    fn index_stats_shapes() {
        let (_d, mut e) = setup(&[]);
        e.create_index(IndexSpec::new(
            "ix",
            "t",
            crate::catalog::IndexKind::NonClustered,
            vec!["x".into()],
        ))
        .unwrap();
        let s = e.index_stats("ix").unwrap();
        assert_eq!(s.depth, 1);
        assert_eq!(s.leaf_pages, 1);
        assert_eq!(s.row_count, 0);
        assert_eq!(s.density, 1.0);

        let vals: Vec<i64> = (0..200).collect();
        let (_d, mut e) = setup(&vals);
        let mut spec = IndexSpec::new(
            "ux",
            "t",
            crate::catalog::IndexKind::NonClustered,
            vec!["x".into()],
        );
        spec.unique = true;
        e.create_index(spec).unwrap();
        let s = e.index_stats("ux").unwrap();
        assert_eq!(s.row_count, 200);
        assert_eq!(s.density, 1.0 / 200.0);
        assert!(s.depth >= 1);
        assert!((1.0 / s.row_count as f64) <= s.density && s.density <= 1.0);
    }

    #[test]
    fn filtered_index_stats_cover_only_indexed_rows() {
        let dir = TempDir::new().unwrap();
        let mut e = Engine::create_with(&dir.path().join("t.pdex"), false).unwrap();
        e.create_table(
            "t",
            vec![ColumnDef { name: "x".into(), ty: ColumnType::Int64, nullable: true }],
            None,
        )
        .unwrap();
        let rows = (0..100)
            .map(|i| vec![if i < 90 { Value::Null } else { Value::Int(i) }])
            .collect();
        e.insert_rows("t", rows).unwrap();
        let mut spec = IndexSpec::new(
            "fx",
            "t",
            crate::catalog::IndexKind::NonClustered,
            vec!["x".into()],
        );
        spec.filter = Some("x IS NOT NULL".into());
        e.create_index(spec).unwrap();
        let s = e.index_stats("fx").unwrap();
        assert_eq!(s.row_count, 10);
        assert_eq!(s.density, 0.1);
    }
}
