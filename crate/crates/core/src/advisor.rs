//! Workload-driven index recommendations. Candidates are derived from the
//! sargable shape of each query (rules R1..R8), scored as weighted read
//! reduction minus an estimated maintenance cost, and can be verified by
//! replaying the workload against a scratch copy of the database.
//!
//! Rules:
//!   R1  key = equality columns ordered by distinctness, then one range column
//!   R2  carry projected columns as INCLUDE so the seek covers the query
//!   R3  filter the index to non-null rows when the column is mostly NULL
//!       and the query touches a small fraction
//!   R4  update-heavy tables get at most three new indexes
//!   R5  tables of eight pages or fewer get no new indexes
//!   R6  blob columns never enter an index key
//!   R7  a heap with a narrow unique non-null column should cluster on it
//!   R8  a key that is distinct across the table gets the unique flag

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::btree::REC_OVERHEAD;
use crate::catalog::{IndexDef, IndexKind, Organization, TableDef};
use crate::engine::{key_positions, project, Engine, IndexSpec, IxCtx, Loc};
use crate::error::{Error, Result};
use crate::key::encode_value;
use crate::page::{PageId, PAGE_USABLE, SLOT_SIZE};
use crate::planner::{est_leaves, SeekShape};
use crate::predicate::{implies, Predicate};
use crate::query::Query;
use crate::row::{encode_row, Row};
use crate::stats::distinct_keys;
use crate::value::{ColumnType, Value};

/// Relative write pressure on one table, in the same units as query weights.
#[derive(Debug, Clone, Copy, Default)]
pub struct DmlMix {
    pub ins: f64,
    pub upd: f64,
    pub del: f64,
}

#[derive(Debug, Default)]
pub struct Workload {
    pub entries: Vec<(Query, f64)>,
    pub dml_mix: HashMap<String, DmlMix>,
    /// Per table: how often each column is assigned by updates.
    pub updated_columns: HashMap<String, HashMap<String, f64>>,
}

impl Workload {
    /// Line format: `weight:<n> <query>`, `dml:<table>:<ins>,<upd>,<del>`,
    /// `upd:<table>:<col>=<w>,...`; `#` comments and blank lines skipped.
    pub fn parse(text: &str) -> Result<Workload> {
        let mut w = Workload::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("weight:") {
                let (num, sql) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| bad_line(no, "expected 'weight:<n> <query>'"))?;
                let weight: f64 = num
                    .parse()
                    .map_err(|_| bad_line(no, "weight is not a number"))?;
                if !(weight > 0.0) {
                    return Err(bad_line(no, "weight must be positive"));
                }
                w.entries.push((Query::parse(sql.trim())?, weight));
            } else if let Some(rest) = line.strip_prefix("dml:") {
                let (table, nums) = rest
                    .split_once(':')
                    .ok_or_else(|| bad_line(no, "expected 'dml:<table>:<ins>,<upd>,<del>'"))?;
                let parts: Vec<&str> = nums.split(',').collect();
                if parts.len() != 3 {
                    return Err(bad_line(no, "expected three comma-separated weights"));
                }
                let mut v = [0.0; 3];
                for (slot, p) in v.iter_mut().zip(&parts) {
                    *slot = p
                        .trim()
                        .parse()
                        .map_err(|_| bad_line(no, "dml weight is not a number"))?;
                }
                w.dml_mix
                    .insert(table.to_string(), DmlMix { ins: v[0], upd: v[1], del: v[2] });
            } else if let Some(rest) = line.strip_prefix("upd:") {
                let (table, items) = rest
                    .split_once(':')
                    .ok_or_else(|| bad_line(no, "expected 'upd:<table>:<col>=<w>,...'"))?;
                let per = w.updated_columns.entry(table.to_string()).or_default();
                for item in items.split(',') {
                    let (col, wt) = item
                        .split_once('=')
                        .ok_or_else(|| bad_line(no, "expected '<col>=<weight>'"))?;
                    let wt: f64 = wt
                        .trim()
                        .parse()
                        .map_err(|_| bad_line(no, "update weight is not a number"))?;
                    *per.entry(col.trim().to_string()).or_insert(0.0) += wt;
                }
            } else {
                return Err(bad_line(no, "unrecognized directive"));
            }
        }
        if w.entries.is_empty() {
            return Err(Error::EmptyWorkload);
        }
        Ok(w)
    }
}

fn bad_line(no: usize, msg: &str) -> Error {
    Error::Parse(format!("workload line {}: {msg}", no + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Create,
    Avoid,
    DropCandidate,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Create => "create",
            Action::Avoid => "avoid",
            Action::DropCandidate => "drop-candidate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Recommendation {
    pub action: Action,
    pub table: String,
    pub kind: IndexKind,
    pub key_cols: Vec<String>,
    pub include: Vec<String>,
    pub filter: Option<String>,
    pub unique: bool,
    /// Generated name for creates; the existing name for drop candidates.
    pub name: String,
    pub rules: Vec<&'static str>,
    pub rationale: String,
    /// Weighted read reduction minus maintenance estimate.
    pub score: f64,
}

impl Recommendation {
    pub fn line(&self) -> String {
        let mut s =
            format!("{} {} on {}", self.action.name(), self.kind.name(), self.table);
        if !self.key_cols.is_empty() {
            s.push_str(&format!(" ({})", self.key_cols.join(", ")));
        }
        if !self.include.is_empty() {
            s.push_str(&format!(" include ({})", self.include.join(", ")));
        }
        if let Some(f) = &self.filter {
            s.push_str(&format!(" filter ({f})"));
        }
        if self.action == Action::DropCandidate {
            s.push_str(&format!(" name={}", self.name));
        }
        s.push_str(&format!(" rules=[{}] score={:.1}", self.rules.join(","), self.score));
        s
    }

    pub fn to_spec(&self) -> IndexSpec {
        let mut spec = IndexSpec::new(&self.name, &self.table, self.kind, self.key_cols.clone());
        spec.include = self.include.clone();
        spec.filter = self.filter.clone();
        spec.unique = self.unique;
        spec
    }
}

/// A derived index shape before scoring.
struct Candidate {
    table: String,
    kind: IndexKind,
    key_cols: Vec<String>,
    include: Vec<String>,
    filter: Option<String>,
    unique: bool,
    rules: Vec<&'static str>,
    rationale: String,
}

/// Estimated physical shape of an index that does not exist yet.
struct HypoGeom {
    depth: u64,
    leaf_pages: u64,
    entries: u64,
}

/// Bulk-build arithmetic over exact per-entry footprints: leaves packed to
/// the page, internal fanout from the average separator entry.
fn geometry(footprints: &[usize], avg_sep_key: usize) -> HypoGeom {
    let total: usize = footprints.iter().sum();
    let leaf_pages = (total.div_ceil(PAGE_USABLE)).max(1) as u64;
    let fanout = (PAGE_USABLE / (REC_OVERHEAD + avg_sep_key + 6 + SLOT_SIZE)).max(2) as u64;
    let mut depth = 1u64;
    let mut n = leaf_pages;
    while n > 1 {
        n = n.div_ceil(fanout);
        depth += 1;
    }
    HypoGeom { depth, leaf_pages, entries: footprints.len() as u64 }
}

pub struct EvalReport {
    /// Weighted actual reads replaying the workload before / after the
    /// create recommendations are applied.
    pub before: f64,
    pub after: f64,
}

impl Engine {
    pub fn recommend(&mut self, w: &Workload) -> Result<Vec<Recommendation>> {
        if w.entries.is_empty() {
            return Err(Error::EmptyWorkload);
        }

        // Per-query context: bound predicate and the current best cost.
        let mut bound: Vec<(Query, f64)> = Vec::new();
        let mut cost_now: Vec<u64> = Vec::new();
        for (q, wt) in &w.entries {
            let tdef = self.catalog().table(&q.table)?.clone();
            let predicate = q.predicate.bind(|c| tdef.col_type(c))?;
            bound.push((
                Query { table: q.table.clone(), projection: q.projection.clone(), predicate },
                *wt,
            ));
            cost_now.push(self.explain(q)?.chosen.estimated_reads);
        }

        let mut row_cache: HashMap<String, Vec<(Loc, Row)>> = HashMap::new();
        let mut query_weight: HashMap<String, f64> = HashMap::new();
        for (q, wt) in &bound {
            *query_weight.entry(q.table.clone()).or_insert(0.0) += wt;
            if !row_cache.contains_key(&q.table) {
                row_cache.insert(q.table.clone(), self.base_rows(&q.table)?);
            }
        }

        let mut cands: Vec<Candidate> = Vec::new();
        let mut refused: Vec<Candidate> = Vec::new();
        for (q, _) in &bound {
            let tdef = self.catalog().table(&q.table)?.clone();
            let rows = &row_cache[&q.table];
            self.derive_candidate(q, &tdef, rows, &mut cands, &mut refused)?;
        }
        for table in tables_in_order(&bound) {
            let tdef = self.catalog().table(&table)?.clone();
            if let Some(c) = clustering_candidate(&tdef, &row_cache[&table])? {
                cands.push(c);
            }
        }
        let cands = merge_candidates(cands);
        let cands: Vec<Candidate> = cands
            .into_iter()
            .filter(|c| !self.already_exists(c))
            .collect();

        // Score each candidate against every query on its table. R5 vetoes
        // small tables outright; otherwise a non-positive score demotes.
        let mut recs: Vec<Recommendation> = Vec::new();
        let mut taken: HashSet<String> = HashSet::new();
        for cand in cands {
            let tdef = self.catalog().table(&cand.table)?.clone();
            let rows = &row_cache[&cand.table];
            let (benefit, geom) = self.score_candidate(&cand, &tdef, rows, &bound, &cost_now)?;
            let penalty = self.maintenance_penalty(w, &cand.table, &carried(&cand), geom.depth);
            let score = benefit - penalty;
            let small = self.table_pages(&cand.table)? <= 8;
            let name = self.pick_name(&mut taken, &cand);
            let mut rec = Recommendation {
                action: Action::Create,
                table: cand.table,
                kind: cand.kind,
                key_cols: cand.key_cols,
                include: cand.include,
                filter: cand.filter,
                unique: cand.unique,
                name,
                rules: cand.rules,
                rationale: cand.rationale,
                score,
            };
            if small {
                rec.action = Action::Avoid;
                rec.rules.push("R5");
                rec.rationale.push_str("; table fits in eight pages, a scan is fine");
            } else if score <= 0.0 {
                rec.action = Action::Avoid;
                rec.rationale.push_str("; maintenance outweighs estimated savings");
            }
            recs.push(rec);
        }

        // Blob-keyed shapes are reported, never created.
        let mut seen_refusals: Vec<(String, String)> = Vec::new();
        for c in refused {
            let id = (c.table.clone(), c.rationale.clone());
            if seen_refusals.contains(&id) {
                continue;
            }
            seen_refusals.push(id);
            let name = self.pick_name(&mut taken, &c);
            recs.push(Recommendation {
                action: Action::Avoid,
                table: c.table,
                kind: c.kind,
                key_cols: c.key_cols,
                include: c.include,
                filter: c.filter,
                unique: c.unique,
                name,
                rules: c.rules,
                rationale: c.rationale,
                score: 0.0,
            });
        }

        // R4: cap creates on update-heavy tables to the best three.
        let tables: Vec<String> = tables_in_order(&bound);
        for table in &tables {
            let upd = w.dml_mix.get(table).map(|m| m.upd).unwrap_or(0.0);
            let qw = query_weight.get(table).copied().unwrap_or(0.0);
            if upd <= 2.0 * qw {
                continue;
            }
            let mut ranked: Vec<usize> = recs
                .iter()
                .enumerate()
                .filter(|(_, r)| r.action == Action::Create && r.table == *table)
                .map(|(i, _)| i)
                .collect();
            ranked.sort_by(|&a, &b| recs[b].score.total_cmp(&recs[a].score));
            for &i in ranked.iter().skip(3) {
                recs[i].action = Action::Avoid;
                recs[i].rules.push("R4");
                recs[i]
                    .rationale
                    .push_str("; table is update-heavy, keeping only the best three");
            }
        }

        recs.extend(self.drop_candidates(w, &bound)?);

        for rec in &mut recs {
            rec.rules.sort();
            rec.rules.dedup();
        }
        recs.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.name.cmp(&b.name))
        });
        Ok(recs)
    }

    /// One candidate from one query's sargable shape (R1/R2/R3/R6/R8).
    fn derive_candidate(
        &mut self,
        q: &Query,
        tdef: &TableDef,
        rows: &[(Loc, Row)],
        out: &mut Vec<Candidate>,
        refused: &mut Vec<Candidate>,
    ) -> Result<()> {
        let plain: Vec<Row> = rows.iter().map(|(_, r)| r.clone()).collect();
        let mut eq_cols: Vec<String> = Vec::new();
        let mut range_cols: Vec<String> = Vec::new();
        for c in q.predicate.columns() {
            let ty = tdef.col_type(c).unwrap();
            let is_eq = q.predicate.equality_value(c).is_some();
            let r = q.predicate.interval_for(c);
            let is_range = !is_eq && (r.lo.is_some() || r.hi.is_some());
            if !is_eq && !is_range {
                continue;
            }
            if ty == ColumnType::Blob {
                // The offending column is named only in the rationale; a
                // recommendation never carries a blob column as a key.
                refused.push(Candidate {
                    table: q.table.clone(),
                    kind: IndexKind::NonClustered,
                    key_cols: Vec::new(),
                    include: Vec::new(),
                    filter: None,
                    unique: false,
                    rules: vec!["R6"],
                    rationale: format!("column '{c}' is a blob and cannot be an index key"),
                });
                continue;
            }
            if is_eq {
                eq_cols.push(c.to_string());
            } else {
                range_cols.push(c.to_string());
            }
        }
        if eq_cols.is_empty() && range_cols.is_empty() {
            return Ok(());
        }

        // R1: most distinct equality column first; ties by name.
        let mut keyed: Vec<(u64, String)> = eq_cols
            .into_iter()
            .map(|c| {
                let pos = key_positions(tdef, &[c.clone()])?;
                Ok((distinct_keys(&plain, &pos)?, c))
            })
            .collect::<Result<_>>()?;
        keyed.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let mut key_cols: Vec<String> = keyed.into_iter().map(|(_, c)| c).collect();
        if let Some(rc) = pick_range_col(tdef, &plain, &range_cols)? {
            key_cols.push(rc);
        }
        if key_cols.is_empty() {
            return Ok(());
        }

        // R2: carry the rest of the query's columns.
        let mut include: Vec<String> = Vec::new();
        for c in q.referenced_columns() {
            if key_cols.iter().any(|k| k == c) || include.iter().any(|k| k == c) {
                continue;
            }
            if tdef.col_type(c).unwrap() == ColumnType::Blob {
                continue;
            }
            include.push(c.to_string());
        }

        let mut rules = vec!["R1"];
        let mut rationale = format!("seek on ({})", key_cols.join(", "));
        if !include.is_empty() {
            rules.push("R2");
            rationale.push_str(", covering the projection");
        }

        // R3: mostly-null leading column plus a selective query.
        let mut filter = None;
        let lead = &key_cols[0];
        let lead_pos = tdef.col(lead).unwrap().0;
        let n = plain.len() as f64;
        if n > 0.0 {
            let nulls = plain
                .iter()
                .filter(|r| matches!(r[lead_pos], Value::Null))
                .count() as f64;
            let matched = self.selectivity(&q.table, &q.predicate)?.fraction;
            if nulls / n >= 0.5 && matched <= 0.1 {
                let f = Predicate::parse(&format!("{lead} IS NOT NULL"))?
                    .bind(|c| tdef.col_type(c))?;
                if implies(&q.predicate, &f) {
                    filter = Some(f.render());
                    rules.push("R3");
                    rationale.push_str(&format!(
                        ", filtered to the {:.0}% non-null rows",
                        (1.0 - nulls / n) * 100.0
                    ));
                }
            }
        }

        // R8: distinct key across the (filter-passing) rows.
        let key_pos = key_positions(tdef, &key_cols)?;
        let in_scope: Vec<Row> = match &filter {
            None => plain.clone(),
            Some(src) => {
                let f = Predicate::parse(src)?.bind(|c| tdef.col_type(c))?;
                let rf = f.resolve(&tdef.col_names())?;
                plain.iter().filter(|r| rf.matches(r)).cloned().collect()
            }
        };
        let unique =
            !in_scope.is_empty() && distinct_keys(&in_scope, &key_pos)? == in_scope.len() as u64;
        if unique {
            rules.push("R8");
        }

        out.push(Candidate {
            table: q.table.clone(),
            kind: IndexKind::NonClustered,
            key_cols,
            include,
            filter,
            unique,
            rules,
            rationale,
        });
        Ok(())
    }

    fn already_exists(&self, c: &Candidate) -> bool {
        self.catalog().indexes_on(&c.table).iter().any(|ix| {
            ix.kind == c.kind
                && ix.key_cols == c.key_cols
                && ix.filter.as_ref().map(|f| f.render()) == c.filter
                && c.include
                    .iter()
                    .all(|col| ix.carried_cols().contains(&col.as_str()))
        })
    }

    /// Weighted read reduction across the workload, plus the candidate's
    /// estimated geometry.
    fn score_candidate(
        &mut self,
        cand: &Candidate,
        tdef: &TableDef,
        rows: &[(Loc, Row)],
        bound: &[(Query, f64)],
        cost_now: &[u64],
    ) -> Result<(f64, HypoGeom)> {
        let filter_pred = match &cand.filter {
            None => None,
            Some(src) => Some(Predicate::parse(src)?.bind(|c| tdef.col_type(c))?),
        };
        let (geom, indexed) = match cand.kind {
            IndexKind::Clustered => self.clustered_geometry(cand, tdef, rows)?,
            _ => self.nc_geometry(cand, tdef, rows, &filter_pred)?,
        };
        let key_pos = key_positions(tdef, &cand.key_cols)?;
        let carried = carried(cand);

        let mut benefit = 0.0;
        for ((q, wt), &now) in bound.iter().zip(cost_now) {
            if q.table != cand.table {
                continue;
            }
            let shape = SeekShape::of(&q.predicate, &cand.key_cols);
            if !shape.sargable {
                continue;
            }
            if let Some(f) = &filter_pred {
                if !implies(&q.predicate, f) {
                    continue;
                }
            }
            let range_rows = indexed
                .iter()
                .filter(|r| shape.admits(&project(r, &key_pos)))
                .count() as u64;
            let mut cost =
                geom.depth + est_leaves(range_rows, geom.entries, geom.leaf_pages) - 1;
            let covering = cand.kind == IndexKind::Clustered
                || q.referenced_columns()
                    .iter()
                    .all(|c| carried.iter().any(|k| k == c));
            if !covering {
                cost += range_rows * self.lookup_cost(tdef)?;
            }
            benefit += wt * now.saturating_sub(cost) as f64;
        }
        Ok((benefit, geom))
    }

    /// Exact entry footprints for a hypothetical nonclustered index, sized
    /// with the same encoders the real build uses.
    fn nc_geometry(
        &self,
        cand: &Candidate,
        tdef: &TableDef,
        rows: &[(Loc, Row)],
        filter_pred: &Option<Predicate>,
    ) -> Result<(HypoGeom, Vec<Row>)> {
        let def = IndexDef {
            name: String::new(),
            table: cand.table.clone(),
            kind: IndexKind::NonClustered,
            key_cols: cand.key_cols.clone(),
            include: cand.include.clone(),
            filter: filter_pred.clone(),
            unique: cand.unique,
            fill_factor: 1.0,
            buckets: 0,
            root: PageId::NONE,
            first_leaf: PageId::NONE,
            meta_page: PageId::NONE,
        };
        let ctx = IxCtx::build(def, tdef)?;
        let col_names = tdef.col_names();
        let filt = ctx.filter(&col_names)?;
        let mut footprints = Vec::new();
        let mut indexed = Vec::new();
        let mut key_bytes = 0usize;
        for (loc, row) in rows {
            if let Some(e) = ctx.nc_entry(filt.as_ref(), row, loc)? {
                key_bytes += e.key.len();
                footprints.push(REC_OVERHEAD + e.key.len() + e.payload.len() + SLOT_SIZE);
                indexed.push(row.clone());
            }
        }
        let avg_key = if footprints.is_empty() { 8 } else { key_bytes / footprints.len() };
        Ok((geometry(&footprints, avg_key), indexed))
    }

    /// Geometry of clustering the table on the candidate key: leaves hold
    /// full row images.
    fn clustered_geometry(
        &self,
        cand: &Candidate,
        tdef: &TableDef,
        rows: &[(Loc, Row)],
    ) -> Result<(HypoGeom, Vec<Row>)> {
        let key_pos = key_positions(tdef, &cand.key_cols)?;
        let types = tdef.col_types();
        let mut footprints = Vec::new();
        let mut indexed = Vec::new();
        let mut key_bytes = 0usize;
        for (_, row) in rows {
            let mut key = Vec::new();
            for v in project(row, &key_pos) {
                encode_value(&mut key, &v)?;
            }
            let img = encode_row(&types, row)?;
            key_bytes += key.len();
            footprints.push(REC_OVERHEAD + key.len() + img.len() + SLOT_SIZE);
            indexed.push(row.clone());
        }
        let avg_key = if footprints.is_empty() { 8 } else { key_bytes / footprints.len() };
        Ok((geometry(&footprints, avg_key), indexed))
    }

    /// Writes pay one descent per touched entry: inserts and deletes always,
    /// updates only when they assign a carried column.
    fn maintenance_penalty(
        &self,
        w: &Workload,
        table: &str,
        carried: &[String],
        depth: u64,
    ) -> f64 {
        let mix = w.dml_mix.get(table).copied().unwrap_or_default();
        let upd_w: f64 = w
            .updated_columns
            .get(table)
            .map(|per| {
                carried
                    .iter()
                    .filter_map(|c| per.get(c))
                    .sum()
            })
            .unwrap_or(0.0);
        (mix.ins + mix.del + upd_w) * depth as f64
    }

    /// Existing secondary indexes no workload query plans through, on
    /// tables that still pay index maintenance.
    fn drop_candidates(
        &mut self,
        w: &Workload,
        bound: &[(Query, f64)],
    ) -> Result<Vec<Recommendation>> {
        let mut chosen: HashSet<String> = HashSet::new();
        for (q, _) in bound {
            if let Some(ix) = self.explain(q)?.chosen.index {
                chosen.insert(ix);
            }
        }
        let defs: Vec<IndexDef> = self
            .catalog()
            .indexes
            .iter()
            .filter(|ix| ix.kind != IndexKind::Clustered)
            .cloned()
            .collect();
        let mut out = Vec::new();
        for def in defs {
            if chosen.contains(&def.name) {
                continue;
            }
            let mix = w.dml_mix.get(&def.table).copied().unwrap_or_default();
            if mix.ins + mix.upd + mix.del <= 0.0 {
                continue;
            }
            let depth = match def.kind {
                IndexKind::NonClustered => self.index_stats(&def.name)?.depth as u64,
                _ => 1,
            };
            let carried: Vec<String> =
                def.carried_cols().iter().map(|c| c.to_string()).collect();
            let score = self.maintenance_penalty(w, &def.table, &carried, depth);
            out.push(Recommendation {
                action: Action::DropCandidate,
                table: def.table.clone(),
                kind: def.kind,
                key_cols: def.key_cols.clone(),
                include: def.include.clone(),
                filter: def.filter.as_ref().map(|f| f.render()),
                unique: def.unique,
                name: def.name.clone(),
                rules: Vec::new(),
                rationale: "no workload query plans through this index; it only costs maintenance"
                    .into(),
                score,
            });
        }
        Ok(out)
    }

    fn pick_name(&self, taken: &mut HashSet<String>, c: &Candidate) -> String {
        let prefix = if c.kind == IndexKind::Clustered { "cx" } else { "ix" };
        let mut base = if c.key_cols.is_empty() {
            format!("{prefix}_{}", c.table)
        } else {
            format!("{prefix}_{}_{}", c.table, c.key_cols.join("_"))
        };
        if c.filter.is_some() {
            base.push_str("_f");
        }
        let mut name = base.clone();
        let mut i = 2;
        while taken.contains(&name) || self.catalog().index(&name).is_ok() {
            name = format!("{base}_{i}");
            i += 1;
        }
        taken.insert(name.clone());
        name
    }
}

/// R7: narrowest unique non-nullable column of a heap table.
fn clustering_candidate(tdef: &TableDef, rows: &[(Loc, Row)]) -> Result<Option<Candidate>> {
    if !matches!(tdef.organization, Organization::Heap { .. }) || rows.is_empty() {
        return Ok(None);
    }
    let plain: Vec<Row> = rows.iter().map(|(_, r)| r.clone()).collect();
    let mut best: Option<(usize, String)> = None;
    for (i, col) in tdef.cols.iter().enumerate() {
        if col.nullable || col.ty == ColumnType::Blob {
            continue;
        }
        if distinct_keys(&plain, &[i])? != plain.len() as u64 {
            continue;
        }
        let width: usize = plain
            .iter()
            .map(|r| {
                let mut b = Vec::new();
                encode_value(&mut b, &r[i]).map(|_| b.len())
            })
            .sum::<Result<usize>>()?
            / plain.len();
        let beat = match &best {
            None => true,
            Some((w, name)) => width < *w || (width == *w && col.name < *name),
        };
        if beat {
            best = Some((width, col.name.clone()));
        }
    }
    Ok(best.map(|(_, col)| Candidate {
        table: tdef.name.clone(),
        kind: IndexKind::Clustered,
        key_cols: vec![col.clone()],
        include: Vec::new(),
        filter: None,
        unique: true,
        rules: vec!["R7", "R8"],
        rationale: format!("'{col}' is unique and non-null; clustering makes every seek covering"),
    }))
}

fn pick_range_col(
    tdef: &TableDef,
    rows: &[Row],
    range_cols: &[String],
) -> Result<Option<String>> {
    let mut best: Option<(u64, String)> = None;
    for c in range_cols {
        let pos = key_positions(tdef, std::slice::from_ref(c))?;
        let d = distinct_keys(rows, &pos)?;
        let beat = match &best {
            None => true,
            Some((bd, bn)) => d > *bd || (d == *bd && *c < *bn),
        };
        if beat {
            best = Some((d, c.clone()));
        }
    }
    Ok(best.map(|(_, c)| c))
}

fn carried(c: &Candidate) -> Vec<String> {
    let mut out = c.key_cols.clone();
    for col in &c.include {
        if !out.contains(col) {
            out.push(col.clone());
        }
    }
    out
}

fn tables_in_order(bound: &[(Query, f64)]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for (q, _) in bound {
        if !out.contains(&q.table) {
            out.push(q.table.clone());
        }
    }
    out
}

/// Merge duplicate shapes derived from different queries: includes union,
/// rules union, rationale from the first.
fn merge_candidates(cands: Vec<Candidate>) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    for c in cands {
        if let Some(prev) = out.iter_mut().find(|p| {
            p.table == c.table
                && p.kind == c.kind
                && p.key_cols == c.key_cols
                && p.filter == c.filter
        }) {
            for col in c.include {
                if !prev.include.contains(&col) && !prev.key_cols.contains(&col) {
                    prev.include.push(col);
                }
            }
            for r in c.rules {
                if !prev.rules.contains(&r) {
                    prev.rules.push(r);
                }
            }
            if !prev.include.is_empty() && !prev.rules.contains(&"R2") {
                prev.rules.push("R2");
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Copy the database to `scratch`, replay the workload, apply the create
/// recommendations, replay again. The scratch file is removed afterwards.
pub fn evaluate(
    db: &Path,
    scratch: &Path,
    w: &Workload,
    recs: &[Recommendation],
) -> Result<EvalReport> {
    if scratch.exists() {
        return Err(Error::DuplicateName(format!("scratch {}", scratch.display())));
    }
    std::fs::copy(db, scratch)?;
    let result = (|| {
        let mut e = Engine::open_with(scratch, false)?;
        let before = weighted_reads(&mut e, w)?;
        for rec in recs.iter().filter(|r| r.action == Action::Create) {
            e.create_index(rec.to_spec())?;
        }
        let after = weighted_reads(&mut e, w)?;
        Ok(EvalReport { before, after })
    })();
    let _ = std::fs::remove_file(scratch);
    result
}

fn weighted_reads(e: &mut Engine, w: &Workload) -> Result<f64> {
    let mut total = 0.0;
    for (q, wt) in &w.entries {
        total += wt * e.execute(q)?.actual_reads as f64;
    }
    Ok(total)
}
