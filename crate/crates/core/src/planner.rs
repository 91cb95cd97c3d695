//! Access-path selection. Plans are costed in estimated logical page
//! reads from exact statistics, the cheapest wins under a deterministic
//! tie-break, and execution reports the pager's actual read counter so
//! estimates can be checked against reality.

use crate::btree::{Hi, Lo};
use crate::catalog::{IndexDef, IndexKind, Organization, TableDef};
use crate::engine::{key_positions, nc_payload_parts, open_tree, project, Engine, IxCtx};
use crate::error::{Error, Result};
use crate::heap::Rid;
use crate::key::{decode_value, encode_value};
use crate::predicate::{implies, Predicate};
use crate::query::{Projection, Query};
use crate::row::{decode_row, Row};
use crate::trace::EventKind;
use crate::value::{ColumnType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    HeapScan,
    ClusteredScan,
    ClusteredSeek,
    NcSeekLookup,
    NcCoveringSeek,
    HashProbe,
    ColumnstoreScan,
}

impl PlanKind {
    pub fn name(self) -> &'static str {
        match self {
            PlanKind::HeapScan => "heap_scan",
            PlanKind::ClusteredScan => "clustered_scan",
            PlanKind::ClusteredSeek => "clustered_seek",
            PlanKind::NcSeekLookup => "nc_seek_lookup",
            PlanKind::NcCoveringSeek => "nc_covering_seek",
            PlanKind::HashProbe => "hash_probe",
            PlanKind::ColumnstoreScan => "columnstore_scan",
        }
    }

    /// Tie-break order when estimated reads are equal: seeks that avoid
    /// lookups first, scans last.
    fn rank(self) -> u8 {
        match self {
            PlanKind::NcCoveringSeek => 0,
            PlanKind::ClusteredSeek => 1,
            PlanKind::NcSeekLookup => 2,
            PlanKind::HashProbe => 3,
            PlanKind::ColumnstoreScan => 4,
            PlanKind::HeapScan | PlanKind::ClusteredScan => 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AccessPlan {
    pub kind: PlanKind,
    /// Catalog name of the index driving the plan; None for a heap scan.
    pub index: Option<String>,
    pub estimated_reads: u64,
    pub covering: bool,
}

impl AccessPlan {
    fn line(&self, chosen: bool) -> String {
        format!(
            "{} index={} est_reads={} covering={} chosen={}",
            self.kind.name(),
            self.index.as_deref().unwrap_or("-"),
            self.estimated_reads,
            if self.covering { "y" } else { "n" },
            if chosen { "y" } else { "n" },
        )
    }
}

#[derive(Debug, Clone)]
pub struct PlanExplain {
    pub chosen: AccessPlan,
    /// Every candidate, best first (cost, then kind rank, then name).
    pub candidates: Vec<AccessPlan>,
    pub rendered: String,
}

#[derive(Debug)]
pub struct QueryOutput {
    /// Projected rows; a single one-value row for aggregates.
    pub rows: Vec<Row>,
    pub actual_reads: u64,
    pub explain: PlanExplain,
}

/// How a predicate drives a composite key: a run of equality-pinned
/// columns, then optional bounds on the next column. `sargable` says the
/// leading column is constrained at all.
pub(crate) struct SeekShape {
    eq_vals: Vec<Value>,
    lo: Option<(Value, bool)>,
    hi: Option<(Value, bool)>,
    not_null: bool,
    pub(crate) sargable: bool,
}

impl SeekShape {
    pub(crate) fn of(pred: &Predicate, key_cols: &[String]) -> SeekShape {
        let mut eq_vals = Vec::new();
        for (i, col) in key_cols.iter().enumerate() {
            if let Some(v) = pred.equality_value(col) {
                eq_vals.push(v);
                continue;
            }
            let r = pred.interval_for(col);
            let has_range = r.lo.is_some() || r.hi.is_some() || r.not_null;
            return SeekShape {
                eq_vals,
                lo: r.lo,
                hi: r.hi,
                not_null: r.not_null,
                sargable: i > 0 || has_range,
            };
        }
        SeekShape {
            sargable: !key_cols.is_empty(),
            eq_vals,
            lo: None,
            hi: None,
            not_null: false,
        }
    }

    fn is_full_equality(&self, key_cols: &[String]) -> bool {
        self.eq_vals.len() == key_cols.len()
    }

    /// B-tree bounds. A range bound on the column after the equality run
    /// must skip NULLs (which sort first) because comparisons never match
    /// them.
    fn bounds(&self) -> Result<(Lo, Hi)> {
        let mut prefix = Vec::new();
        for v in &self.eq_vals {
            encode_value(&mut prefix, v)?;
        }
        let lo = if let Some((v, strict)) = &self.lo {
            let mut k = prefix.clone();
            encode_value(&mut k, v)?;
            if *strict {
                Lo::AfterPrefix(k)
            } else {
                Lo::AtPrefix(k)
            }
        } else if self.hi.is_some() || self.not_null {
            let mut k = prefix.clone();
            encode_value(&mut k, &Value::Null)?;
            Lo::AfterPrefix(k)
        } else {
            Lo::AtPrefix(prefix.clone())
        };
        let hi = if let Some((v, strict)) = &self.hi {
            let mut k = prefix;
            encode_value(&mut k, v)?;
            if *strict {
                Hi::BeforePrefix(k)
            } else {
                Hi::WithPrefix(k)
            }
        } else {
            Hi::WithPrefix(prefix)
        };
        Ok((lo, hi))
    }

    /// Does this row's key tuple land inside the scanned range? Mirrors
    /// `bounds` exactly; used to count range rows for costing.
    pub(crate) fn admits(&self, key_vals: &[Value]) -> bool {
        for (i, want) in self.eq_vals.iter().enumerate() {
            if !key_vals[i].total_eq(want) {
                return false;
            }
        }
        let i = self.eq_vals.len();
        if self.lo.is_none() && self.hi.is_none() && !self.not_null {
            return true;
        }
        // a bounded column never admits NULL
        let v = &key_vals[i];
        if matches!(v, Value::Null) {
            return false;
        }
        if let Some((lo, strict)) = &self.lo {
            let ord = v.total_cmp(lo);
            if ord == std::cmp::Ordering::Less || (*strict && ord == std::cmp::Ordering::Equal) {
                return false;
            }
        }
        if let Some((hi, strict)) = &self.hi {
            let ord = v.total_cmp(hi);
            if ord == std::cmp::Ordering::Greater || (*strict && ord == std::cmp::Ordering::Equal)
            {
                return false;
            }
        }
        true
    }
}

/// Leaves touched by a range that yields `range_rows` of `entries` total
/// spread over `leaf_pages`: at least the landing leaf.
pub(crate) fn est_leaves(range_rows: u64, entries: u64, leaf_pages: u64) -> u64 {
    if entries == 0 || range_rows == 0 {
        return 1;
    }
    let need = (range_rows as u128 * leaf_pages as u128).div_ceil(entries as u128) as u64;
    need.max(1)
}

fn cmp_plans(a: &AccessPlan, b: &AccessPlan) -> std::cmp::Ordering {
    (a.estimated_reads, a.kind.rank(), a.index.as_deref().unwrap_or(""))
        .cmp(&(b.estimated_reads, b.kind.rank(), b.index.as_deref().unwrap_or("")))
}

impl Engine {
    /// Type-check the query and bind its predicate to the table.
    fn bind_query(&self, q: &Query) -> Result<(Query, TableDef)> {
        let tdef = self.catalog().table(&q.table)?.clone();
        for c in q.projection.columns() {
            tdef.col(c)
                .ok_or_else(|| Error::UnknownColumn(c.to_string()))?;
        }
        if let Projection::Sum(c) = &q.projection {
            let ty = tdef.col_type(c).unwrap();
            if !matches!(ty, ColumnType::Int64 | ColumnType::Float64) {
                return Err(Error::TypeMismatch(format!(
                    "SUM over non-numeric column '{c}'"
                )));
            }
        }
        let predicate = q.predicate.bind(|c| tdef.col_type(c))?;
        let q = Query { table: q.table.clone(), projection: q.projection.clone(), predicate };
        Ok((q, tdef))
    }

    /// Every executable access path for the query, each costed in
    /// estimated logical reads. Unsorted; `explain` orders them.
    pub fn enumerate_plans(&mut self, q: &Query) -> Result<Vec<AccessPlan>> {
        let (q, tdef) = self.bind_query(q)?;
        let col_names = tdef.col_names();
        let referenced: Vec<String> = dedup_referenced(&q);
        let rows: Vec<Row> = self
            .base_rows(&q.table)?
            .into_iter()
            .map(|(_, r)| r)
            .collect();

        let mut plans = Vec::new();

        // A full scan of the base structure is always on the table.
        let (scan_kind, scan_index) = match &tdef.organization {
            Organization::Heap { .. } => (PlanKind::HeapScan, None),
            Organization::Clustered { index } => (PlanKind::ClusteredScan, Some(index.clone())),
        };
        plans.push(AccessPlan {
            kind: scan_kind,
            index: scan_index,
            estimated_reads: self.table_pages(&q.table)?,
            covering: false,
        });

        let defs: Vec<IndexDef> = self
            .catalog()
            .indexes_on(&q.table)
            .into_iter()
            .cloned()
            .collect();
        for def in defs {
            match def.kind {
                IndexKind::Clustered => {
                    let shape = SeekShape::of(&q.predicate, &def.key_cols);
                    if !shape.sargable {
                        continue;
                    }
                    let key_pos = key_positions(&tdef, &def.key_cols)?;
                    let range_rows = rows
                        .iter()
                        .filter(|r| shape.admits(&project(r, &key_pos)))
                        .count() as u64;
                    let tree = open_tree(&def);
                    let depth = tree.depth(&mut self.pager)? as u64;
                    let (leaf_pages, entries) = tree.leaf_stats(&mut self.pager)?;
                    let est = depth + est_leaves(range_rows, entries, leaf_pages) - 1;
                    // clustered leaves hold whole rows, so a clustered seek
                    // never needs lookups
                    plans.push(AccessPlan {
                        kind: PlanKind::ClusteredSeek,
                        index: Some(def.name.clone()),
                        estimated_reads: est,
                        covering: true,
                    });
                }
                IndexKind::NonClustered => {
                    let shape = SeekShape::of(&q.predicate, &def.key_cols);
                    if !shape.sargable {
                        continue;
                    }
                    if let Some(f) = &def.filter {
                        if !implies(&q.predicate, f) {
                            continue;
                        }
                    }
                    let ctx = IxCtx::build(def.clone(), &tdef)?;
                    let filt = ctx.filter(&col_names)?;
                    let range_rows = rows
                        .iter()
                        .filter(|r| filt.as_ref().map(|f| f.matches(r)).unwrap_or(true))
                        .filter(|r| shape.admits(&project(r, &ctx.key_pos)))
                        .count() as u64;
                    let tree = open_tree(&def);
                    let depth = tree.depth(&mut self.pager)? as u64;
                    let (leaf_pages, entries) = tree.leaf_stats(&mut self.pager)?;
                    let seek_cost = depth + est_leaves(range_rows, entries, leaf_pages) - 1;
                    let carried = def.carried_cols();
                    let covering = referenced.iter().all(|c| carried.contains(&c.as_str()));
                    if covering {
                        plans.push(AccessPlan {
                            kind: PlanKind::NcCoveringSeek,
                            index: Some(def.name.clone()),
                            estimated_reads: seek_cost,
                            covering: true,
                        });
                    } else {
                        let est = seek_cost + range_rows * self.lookup_cost(&tdef)?;
                        plans.push(AccessPlan {
                            kind: PlanKind::NcSeekLookup,
                            index: Some(def.name.clone()),
                            estimated_reads: est,
                            covering: false,
                        });
                    }
                }
                IndexKind::Hash => {
                    // every key column must be pinned by an equality
                    let eq_vals: Option<Vec<Value>> = def
                        .key_cols
                        .iter()
                        .map(|c| q.predicate.equality_value(c))
                        .collect();
                    let Some(eq_vals) = eq_vals else { continue };
                    let key_pos = key_positions(&tdef, &def.key_cols)?;
                    let matched = rows
                        .iter()
                        .filter(|r| {
                            project(r, &key_pos)
                                .iter()
                                .zip(&eq_vals)
                                .all(|(a, b)| a.total_eq(b))
                        })
                        .count() as u64;
                    let h = self.hashes.get(&def.name).ok_or_else(|| {
                        Error::Corrupt(format!("no hash handle for '{}'", def.name))
                    })?;
                    let chain = h.len().div_ceil(h.bucket_count().max(1));
                    let covering = referenced
                        .iter()
                        .all(|c| def.key_cols.iter().any(|k| k == c));
                    let mut est = 1 + chain;
                    if !covering {
                        est += matched * self.lookup_cost(&tdef)?;
                    }
                    plans.push(AccessPlan {
                        kind: PlanKind::HashProbe,
                        index: Some(def.name.clone()),
                        estimated_reads: est,
                        covering,
                    });
                }
                IndexKind::Columnstore => {
                    if !q.projection.is_aggregate() {
                        continue;
                    }
                    let cs = self.stores.get(&def.name).ok_or_else(|| {
                        Error::Corrupt(format!("no columnstore handle for '{}'", def.name))
                    })?;
                    let needed: Option<Vec<usize>> =
                        referenced.iter().map(|c| cs.col_index(c)).collect();
                    let Some(needed) = needed else { continue };
                    let (pages, _) = cs.scan_cost(&needed, &q.predicate, true);
                    plans.push(AccessPlan {
                        kind: PlanKind::ColumnstoreScan,
                        index: Some(def.name.clone()),
                        estimated_reads: pages,
                        covering: true,
                    });
                }
            }
        }
        Ok(plans)
    }

    /// One base-row fetch: 1 page for a heap RID (plus forwarding, seen
    /// only in actuals), or a full descent for a clustered key.
    pub(crate) fn lookup_cost(&mut self, tdef: &TableDef) -> Result<u64> {
        match &tdef.organization {
            Organization::Heap { .. } => Ok(1),
            Organization::Clustered { index } => {
                let tree = open_tree(self.catalog.index(index)?);
                Ok(tree.depth(&mut self.pager)? as u64)
            }
        }
    }

    /// Cost all candidates and pick the winner; no execution.
    pub fn explain(&mut self, q: &Query) -> Result<PlanExplain> {
        let mut candidates = self.enumerate_plans(q)?;
        candidates.sort_by(cmp_plans);
        let chosen = candidates[0].clone();
        let rendered: Vec<String> = candidates
            .iter()
            .enumerate()
            .map(|(i, p)| p.line(i == 0))
            .collect();
        Ok(PlanExplain { chosen, candidates, rendered: rendered.join("\n") })
    }

    /// Plan, execute the chosen plan, and report actual logical reads.
    /// The pager's read counter is reset at execution start so the actual
    /// figure covers exactly the plan's page accesses.
    pub fn execute(&mut self, q: &Query) -> Result<QueryOutput> {
        let mut explain = self.explain(q)?;
        self.trace.emit(
            EventKind::PlanChosen,
            &q.table,
            &format!(
                "plan={} index={} est_reads={} query={}",
                explain.chosen.kind.name(),
                explain.chosen.index.as_deref().unwrap_or("-"),
                explain.chosen.estimated_reads,
                q.render()
            ),
        )?;
        self.reset_io();
        let rows = self.execute_plan(q, &explain.chosen)?;
        let actual = self.io().logical_reads;
        explain.rendered.push_str(&format!("\nactual_reads={actual}"));
        Ok(QueryOutput { rows, actual_reads: actual, explain })
    }

    /// Execute one specific plan. Any enumerated plan returns the same
    /// multiset of rows; only the page reads differ.
    pub fn execute_plan(&mut self, q: &Query, plan: &AccessPlan) -> Result<Vec<Row>> {
        let (q, tdef) = self.bind_query(q)?;
        let col_names = tdef.col_names();
        let referenced = dedup_referenced(&q);
        let rp = q.predicate.resolve(&col_names)?;
        let ref_pos = key_positions(&tdef, &referenced)?;

        // Rows narrowed to the referenced columns, predicate applied.
        let available: Vec<Row> = match plan.kind {
            PlanKind::HeapScan | PlanKind::ClusteredScan => self
                .base_rows(&q.table)?
                .into_iter()
                .map(|(_, r)| r)
                .filter(|r| rp.matches(r))
                .map(|r| project(&r, &ref_pos))
                .collect(),
            PlanKind::ClusteredSeek => {
                let def = self
                    .catalog
                    .index(plan.index.as_deref().unwrap_or_default())?
                    .clone();
                let shape = SeekShape::of(&q.predicate, &def.key_cols);
                let (lo, hi) = shape.bounds()?;
                let limit = if def.unique && shape.is_full_equality(&def.key_cols) {
                    Some(1)
                } else {
                    None
                };
                let tree = open_tree(&def);
                let types = tdef.col_types();
                let mut out = Vec::new();
                for item in tree.range(&mut self.pager, lo, hi)?.take(limit.unwrap_or(usize::MAX))
                {
                    let (_, img) = item?;
                    let row = decode_row(&types, &img)?;
                    if rp.matches(&row) {
                        out.push(project(&row, &ref_pos));
                    }
                }
                out
            }
            PlanKind::NcCoveringSeek | PlanKind::NcSeekLookup => {
                let def = self
                    .catalog
                    .index(plan.index.as_deref().unwrap_or_default())?
                    .clone();
                let shape = SeekShape::of(&q.predicate, &def.key_cols);
                let (lo, hi) = shape.bounds()?;
                let limit = if def.unique && shape.is_full_equality(&def.key_cols) {
                    1
                } else {
                    usize::MAX
                };
                let key_types: Vec<ColumnType> = def
                    .key_cols
                    .iter()
                    .map(|c| tdef.col_type(c).unwrap())
                    .collect();
                let include_types: Vec<ColumnType> = def
                    .include
                    .iter()
                    .map(|c| tdef.col_type(c).unwrap())
                    .collect();
                let entries: Vec<(Vec<u8>, Vec<u8>)> = {
                    let tree = open_tree(&def);
                    let mut v = Vec::new();
                    for item in tree.range(&mut self.pager, lo, hi)?.take(limit) {
                        v.push(item?);
                    }
                    v
                };
                let mut out = Vec::new();
                if plan.kind == PlanKind::NcCoveringSeek {
                    // rebuild the carried columns straight from the entry
                    let carried: Vec<String> =
                        def.carried_cols().iter().map(|c| c.to_string()).collect();
                    let crp = q.predicate.resolve(&carried)?;
                    let cref = positions_in(&carried, &referenced)?;
                    for (stored, payload) in entries {
                        let mut vals = Vec::with_capacity(carried.len());
                        let mut pos = 0;
                        for ty in &key_types {
                            vals.push(decode_value(&stored, &mut pos, *ty)?);
                        }
                        let (_, include_img) = nc_payload_parts(&payload)?;
                        vals.extend(decode_row(&include_types, include_img)?);
                        if crp.matches(&vals) {
                            out.push(project(&vals, &cref));
                        }
                    }
                } else {
                    let types = tdef.col_types();
                    for (_, payload) in entries {
                        let (locb, _) = nc_payload_parts(&payload)?;
                        let row = self.fetch_by_loc(&tdef, locb)?;
                        let row = decode_row(&types, &row)?;
                        if rp.matches(&row) {
                            out.push(project(&row, &ref_pos));
                        }
                    }
                }
                out
            }
            PlanKind::HashProbe => {
                let def = self
                    .catalog
                    .index(plan.index.as_deref().unwrap_or_default())?
                    .clone();
                let eq_vals: Vec<Value> = def
                    .key_cols
                    .iter()
                    .map(|c| {
                        q.predicate.equality_value(c).ok_or_else(|| {
                            Error::Corrupt("hash plan without full-key equality".into())
                        })
                    })
                    .collect::<Result<_>>()?;
                let key = crate::key::encode_key(&eq_vals)?;
                let h = self.hashes.get(&def.name).ok_or_else(|| {
                    Error::Corrupt(format!("no hash handle for '{}'", def.name))
                })?;
                let (locators, _) = h.lookup_equal(&key);
                let mut out = Vec::new();
                if plan.covering {
                    // key columns are pinned constants; the probe only
                    // tells us how many rows carry them
                    let crp = q.predicate.resolve(&def.key_cols)?;
                    let cref = positions_in(&def.key_cols, &referenced)?;
                    for _ in &locators {
                        if crp.matches(&eq_vals) {
                            out.push(project(&eq_vals, &cref));
                        }
                    }
                } else {
                    let types = tdef.col_types();
                    for locb in &locators {
                        let img = self.fetch_by_loc(&tdef, locb)?;
                        let row = decode_row(&types, &img)?;
                        if rp.matches(&row) {
                            out.push(project(&row, &ref_pos));
                        }
                    }
                }
                out
            }
            PlanKind::ColumnstoreScan => {
                let name = plan.index.as_deref().unwrap_or_default();
                let cs = self.stores.get(&name.to_string()).ok_or_else(|| {
                    Error::Corrupt(format!("no columnstore handle for '{name}'"))
                })?;
                let needed: Vec<usize> = referenced
                    .iter()
                    .map(|c| {
                        cs.col_index(c).ok_or_else(|| {
                            Error::Corrupt(format!("column '{c}' not in columnstore '{name}'"))
                        })
                    })
                    .collect::<Result<_>>()?;
                cs.scan(&mut self.pager, &needed, &q.predicate, true)?.rows
            }
        };

        // available rows are in deduped referenced order; map to output
        let out_pos = positions_in(&referenced, &output_columns(&q))?;
        match &q.projection {
            Projection::Cols(_) => Ok(available
                .iter()
                .map(|r| project(r, &out_pos))
                .collect()),
            Projection::Count => Ok(vec![vec![Value::Int(available.len() as i64)]]),
            Projection::Sum(_) => {
                let p = out_pos[0];
                let mut int_sum: i64 = 0;
                let mut float_sum: f64 = 0.0;
                let mut saw = (false, false);
                for r in &available {
                    match &r[p] {
                        Value::Null => {}
                        Value::Int(v) => {
                            int_sum = int_sum.checked_add(*v).ok_or(Error::Overflow)?;
                            saw.0 = true;
                        }
                        Value::Float(v) => {
                            float_sum += v;
                            saw.1 = true;
                        }
                        other => {
                            return Err(Error::TypeMismatch(format!(
                                "SUM over non-numeric value {}",
                                other.to_literal()
                            )))
                        }
                    }
                }
                let total = match saw {
                    (false, false) => Value::Null,
                    (true, false) => Value::Int(int_sum),
                    _ => Value::Float(float_sum + int_sum as f64),
                };
                Ok(vec![vec![total]])
            }
        }
    }

    /// Fetch one base row image by its locator bytes.
    fn fetch_by_loc(&mut self, tdef: &TableDef, locb: &[u8]) -> Result<Vec<u8>> {
        match &tdef.organization {
            Organization::Heap { .. } => {
                let rid = Rid::decode(locb)?;
                let heap = self.heaps.get(&tdef.name).ok_or_else(|| {
                    Error::Corrupt(format!("no heap handle for '{}'", tdef.name))
                })?;
                heap.fetch(&mut self.pager, rid)
            }
            Organization::Clustered { index } => {
                let tree = open_tree(self.catalog.index(index)?);
                match tree.seek(&mut self.pager, locb)?.next() {
                    Some(Ok((_, img))) => Ok(img),
                    Some(Err(e)) => Err(e),
                    None => Err(Error::Corrupt("dangling row locator in index".into())),
                }
            }
        }
    }
}

/// Referenced columns, deduplicated, projection first.
fn dedup_referenced(q: &Query) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in q.referenced_columns() {
        if !out.iter().any(|x| x == c) {
            out.push(c.to_string());
        }
    }
    out
}

/// Columns the final output is built from, in output order.
fn output_columns(q: &Query) -> Vec<String> {
    match &q.projection {
        Projection::Cols(cols) => cols.clone(),
        Projection::Count => Vec::new(),
        Projection::Sum(c) => vec![c.clone()],
    }
}

fn positions_in(have: &[String], want: &[String]) -> Result<Vec<usize>> {
    want.iter()
        .map(|c| {
            have.iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::UnknownColumn(c.clone()))
        })
        .collect()
}
