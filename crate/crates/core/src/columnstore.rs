//! Columnstore: sealed rowgroups of up to 4096 rows, one encoded segment
//! per column per rowgroup, plus a row-shaped deltastore for the tail.
//!
//! Segments are write-once page chains; everything mutable (the directory
//! of rowgroups, delete bitmaps, deltastore rows) lives in one blob on its
//! own chain, rewritten after each mutating statement and kept resident in
//! memory between statements. Scans therefore cost exactly the pages of
//! the segments they decode, and rowgroup elimination via seal-time
//! min/max shows up directly in the read counters.
//!
//! Encoding per segment: dictionary for low-cardinality strings (distinct
//! ratio at most 0.5), run-length when the average run is at least 4, raw
//! otherwise. Deletes set a bit in the rowgroup's bitmap; the segment
//! bytes and its min/max stay as sealed, which keeps elimination
//! conservative rather than exact.

use std::collections::HashSet;

use crate::catalog::ColumnDef;
use crate::error::{Error, Result};
use crate::page::{PageId, PageKind, MAX_RECORD};
use crate::pager::{read_chain, rewrite_chain, Pager};
use crate::predicate::Predicate;
use crate::value::{ColumnType, Value};
use crate::wire::{Reader, Writer};

/// Rows per sealed rowgroup; the tuple mover drains the deltastore in full
/// multiples of this.
pub const ROWGROUP_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Raw,
    Rle,
    Dict,
}

impl Encoding {
    pub fn name(self) -> &'static str {
        match self {
            Encoding::Raw => "raw",
            Encoding::Rle => "rle",
            Encoding::Dict => "dictionary",
        }
    }

    fn tag(self) -> u8 {
        match self {
            Encoding::Raw => 0,
            Encoding::Rle => 1,
            Encoding::Dict => 2,
        }
    }

    fn from_tag(v: u8) -> Result<Encoding> {
        Ok(match v {
            0 => Encoding::Raw,
            1 => Encoding::Rle,
            2 => Encoding::Dict,
            other => return Err(Error::Corrupt(format!("bad encoding tag {other}"))),
        })
    }
}

/// One column's slice of a sealed rowgroup: encoded payload on a page
/// chain, summarized here for elimination and costing.
#[derive(Debug, Clone)]
pub struct Segment {
    pub encoding: Encoding,
    /// Min/max over non-null values as sealed; None when all values were
    /// null. Deletes do not tighten them.
    pub min: Option<Value>,
    pub max: Option<Value>,
    pub null_count: u64,
    pub first_page: PageId,
    pub byte_len: u64,
    pub page_count: u32,
}

#[derive(Debug, Clone)]
pub struct RowGroup {
    pub row_count: u64,
    deleted: Vec<u8>,
    /// Locator bytes per ordinal, raw-encoded; never eliminated.
    pub locators: Segment,
    /// Parallel to the stored column list.
    pub segments: Vec<Segment>,
}

impl RowGroup {
    pub fn is_deleted(&self, ordinal: usize) -> bool {
        self.deleted[ordinal / 8] & (1 << (ordinal % 8)) != 0
    }

    fn set_deleted(&mut self, ordinal: usize) {
        self.deleted[ordinal / 8] |= 1 << (ordinal % 8);
    }

    pub fn live_rows(&self) -> u64 {
        (0..self.row_count as usize)
            .filter(|&i| !self.is_deleted(i))
            .count() as u64
    }
}

#[derive(Debug, Clone)]
pub struct DeltaRow {
    pub locator: Vec<u8>,
    pub values: Vec<Value>,
}

pub struct Columnstore {
    /// Columns this index stores, a subset of the base table's, fixed at
    /// creation.
    pub cols: Vec<ColumnDef>,
    pub rowgroups: Vec<RowGroup>,
    pub delta: Vec<DeltaRow>,
    /// Directory chain head; NONE until first saved.
    pub head: PageId,
}

/// What a scan did: rows out (projected to the requested columns), pages
/// pulled from segment chains, and rowgroups proven empty from metadata.
pub struct ScanResult {
    pub rows: Vec<Vec<Value>>,
    pub pages_read: u64,
    pub segments_skipped: u64,
}

impl Columnstore {
    pub fn create(cols: Vec<ColumnDef>) -> Columnstore {
        Columnstore { cols, rowgroups: Vec::new(), delta: Vec::new(), head: PageId::NONE }
    }

    pub fn col_index(&self, name: &str) -> Option<usize> {
        self.cols.iter().position(|c| c.name == name)
    }

    pub fn total_rows(&self) -> u64 {
        self.rowgroups.iter().map(RowGroup::live_rows).sum::<u64>() + self.delta.len() as u64
    }

    /// Pages held by sealed segments, locator lists included. The
    /// directory chain and the deltastore are not counted; both live in
    /// the directory, which stays memory-resident.
    pub fn disk_pages(&self) -> u64 {
        self.rowgroups
            .iter()
            .map(|rg| {
                rg.locators.page_count as u64
                    + rg.segments.iter().map(|s| s.page_count as u64).sum::<u64>()
            })
            .sum()
    }

    /// Stage one row in the deltastore. The caller validates the values
    /// against the base schema; this checks only shape.
    pub fn append(&mut self, locator: Vec<u8>, values: Vec<Value>) -> Result<()> {
        if values.len() != self.cols.len() {
            return Err(Error::SchemaMismatch(format!(
                "columnstore row has {} values, expected {}",
                values.len(),
                self.cols.len()
            )));
        }
        for (v, c) in values.iter().zip(&self.cols) {
            if !v.matches_type(c.ty) {
                return Err(Error::TypeMismatch(format!(
                    "columnstore column '{}' is {}, got {}",
                    c.name,
                    c.ty.name(),
                    v.to_literal()
                )));
            }
        }
        self.delta.push(DeltaRow { locator, values });
        Ok(())
    }

    /// Seal full rowgroups out of the deltastore, oldest rows first.
    /// Returns the number of rows moved (a multiple of [`ROWGROUP_SIZE`]);
    /// the caller persists the directory afterwards.
    pub fn tuple_move(&mut self, pager: &mut Pager) -> Result<u64> {
        let mut moved = 0u64;
        while self.delta.len() >= ROWGROUP_SIZE {
            let batch: Vec<DeltaRow> = self.delta.drain(..ROWGROUP_SIZE).collect();
            let rg = seal(pager, &self.cols, &batch)?;
            self.rowgroups.push(rg);
            moved += ROWGROUP_SIZE as u64;
        }
        Ok(moved)
    }

    /// Remove the row with this locator: drop it from the deltastore, or
    /// mark its bit in the owning rowgroup. False when no row matches.
    pub fn delete(&mut self, pager: &mut Pager, locator: &[u8]) -> Result<bool> {
        if let Some(pos) = self.delta.iter().position(|r| r.locator == locator) {
            self.delta.remove(pos);
            return Ok(true);
        }
        for rg_i in 0..self.rowgroups.len() {
            let locs = read_locators(pager, &self.rowgroups[rg_i].locators)?;
            if let Some(ord) = locs.iter().position(|l| l == locator) {
                if !self.rowgroups[rg_i].is_deleted(ord) {
                    self.rowgroups[rg_i].set_deleted(ord);
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    /// Rowgroup elimination judgment for one group under a predicate: the
    /// index of the first segment whose metadata disproves its atom, if
    /// any. Shared by scans and the planner's cost estimate so the two
    /// always agree.
    fn eliminating_segment(&self, rg: &RowGroup, pred: &Predicate) -> Option<usize> {
        for atom in &pred.atoms {
            if let Some(ci) = self.col_index(atom.col()) {
                let seg = &rg.segments[ci];
                if !atom.possibly_matches(
                    seg.min.as_ref(),
                    seg.max.as_ref(),
                    seg.null_count,
                    rg.row_count,
                ) {
                    return Some(ci);
                }
            }
        }
        None
    }

    /// Pages a scan with these projected columns would read, plus how many
    /// rowgroups elimination would skip. Exact, not an estimate: the
    /// directory already holds every segment's page count.
    pub fn scan_cost(&self, needed: &[usize], pred: &Predicate, elimination: bool) -> (u64, u64) {
        let mut pages = 0u64;
        let mut skipped = 0u64;
        for rg in &self.rowgroups {
            if elimination && self.eliminating_segment(rg, pred).is_some() {
                skipped += 1;
                continue;
            }
            pages += needed.iter().map(|&i| rg.segments[i].page_count as u64).sum::<u64>();
        }
        (pages, skipped)
    }

    /// Scan the store, returning rows projected to `needed` (indices into
    /// [`Columnstore::cols`]) that satisfy `pred`. Only the needed
    /// segments of surviving rowgroups are decoded; deltastore rows are
    /// memory-resident and cost no reads.
    pub fn scan(
        &self,
        pager: &mut Pager,
        needed: &[usize],
        pred: &Predicate,
        elimination: bool,
    ) -> Result<ScanResult> {
        let needed_names: Vec<String> =
            needed.iter().map(|&i| self.cols[i].name.clone()).collect();
        let resolved = pred.resolve(&needed_names)?;

        let mut rows = Vec::new();
        let mut pages_read = 0u64;
        let mut segments_skipped = 0u64;

        for rg in &self.rowgroups {
            if elimination && self.eliminating_segment(rg, pred).is_some() {
                segments_skipped += 1;
                continue;
            }
            let mut decoded: Vec<Vec<Value>> = Vec::with_capacity(needed.len());
            for &ci in needed {
                let seg = &rg.segments[ci];
                let bytes = read_chain(pager, seg.first_page, PageKind::ColumnMeta)?;
                pages_read += seg.page_count as u64;
                decoded.push(decode_segment(&bytes, seg.encoding, rg.row_count as usize)?);
            }
            for ord in 0..rg.row_count as usize {
                if rg.is_deleted(ord) {
                    continue;
                }
                let row: Vec<Value> = decoded.iter().map(|col| col[ord].clone()).collect();
                if resolved.matches(&row) {
                    rows.push(row);
                }
            }
        }

        for dr in &self.delta {
            let row: Vec<Value> = needed.iter().map(|&i| dr.values[i].clone()).collect();
            if resolved.matches(&row) {
                rows.push(row);
            }
        }

        Ok(ScanResult { rows, pages_read, segments_skipped })
    }

    /// Every live (locator, full stored row) pair, rowgroups in seal order
    /// then the deltastore. Used by the consistency audit.
    pub fn all_rows(&self, pager: &mut Pager) -> Result<Vec<(Vec<u8>, Vec<Value>)>> {
        let mut out = Vec::new();
        for rg in &self.rowgroups {
            let locs = read_locators(pager, &rg.locators)?;
            let mut decoded = Vec::with_capacity(self.cols.len());
            for seg in &rg.segments {
                let bytes = read_chain(pager, seg.first_page, PageKind::ColumnMeta)?;
                decoded.push(decode_segment(&bytes, seg.encoding, rg.row_count as usize)?);
            }
            for ord in 0..rg.row_count as usize {
                if rg.is_deleted(ord) {
                    continue;
                }
                let row: Vec<Value> = decoded.iter().map(|col| col[ord].clone()).collect();
                out.push((locs[ord].clone(), row));
            }
        }
        for dr in &self.delta {
            out.push((dr.locator.clone(), dr.values.clone()));
        }
        Ok(out)
    }

    // ---- persistence ----

    pub fn save(&mut self, pager: &mut Pager) -> Result<()> {
        let mut w = Writer::new();
        w.u16(self.cols.len() as u16);
        for c in &self.cols {
            w.string(&c.name);
            w.u8(match c.ty {
                ColumnType::Int64 => 0,
                ColumnType::Float64 => 1,
                ColumnType::String => 2,
                ColumnType::Blob => 3,
            });
            w.u8(c.nullable as u8);
        }
        w.u32(self.rowgroups.len() as u32);
        for rg in &self.rowgroups {
            w.u64(rg.row_count);
            w.blob(&rg.deleted);
            put_segment(&mut w, &rg.locators);
            for seg in &rg.segments {
                put_segment(&mut w, seg);
            }
        }
        w.u32(self.delta.len() as u32);
        for dr in &self.delta {
            w.blob(&dr.locator);
            for v in &dr.values {
                put_value(&mut w, v);
            }
        }
        self.head = rewrite_chain(pager, self.head, PageKind::ColumnMeta, &w.into_vec())?;
        Ok(())
    }

    pub fn load(pager: &mut Pager, head: PageId) -> Result<Columnstore> {
        let bytes = read_chain(pager, head, PageKind::ColumnMeta)?;
        let mut r = Reader::new(&bytes);
        let mut cols = Vec::new();
        for _ in 0..r.u16()? {
            let name = r.string()?;
            let ty = match r.u8()? {
                0 => ColumnType::Int64,
                1 => ColumnType::Float64,
                2 => ColumnType::String,
                3 => ColumnType::Blob,
                other => return Err(Error::Corrupt(format!("bad column type tag {other}"))),
            };
            let nullable = r.u8()? != 0;
            cols.push(ColumnDef { name, ty, nullable });
        }
        let mut rowgroups = Vec::new();
        for _ in 0..r.u32()? {
            let row_count = r.u64()?;
            let deleted = r.blob()?.to_vec();
            let locators = get_segment(&mut r)?;
            let mut segments = Vec::with_capacity(cols.len());
            for _ in 0..cols.len() {
                segments.push(get_segment(&mut r)?);
            }
            rowgroups.push(RowGroup { row_count, deleted, locators, segments });
        }
        let mut delta = Vec::new();
        for _ in 0..r.u32()? {
            let locator = r.blob()?.to_vec();
            let mut values = Vec::with_capacity(cols.len());
            for _ in 0..cols.len() {
                values.push(get_value(&mut r)?);
            }
            delta.push(DeltaRow { locator, values });
        }
        if !r.is_empty() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after columnstore directory",
                r.remaining()
            )));
        }
        Ok(Columnstore { cols, rowgroups, delta, head })
    }
}

/// Encode one column of a full batch, pick its encoding, write the payload
/// chain, and summarize.
fn seal(pager: &mut Pager, cols: &[ColumnDef], batch: &[DeltaRow]) -> Result<RowGroup> {
    let n = batch.len();
    debug_assert_eq!(n, ROWGROUP_SIZE);

    let mut deleted = vec![0u8; n.div_ceil(8)];
    deleted.fill(0);

    let mut lw = Writer::new();
    lw.u32(n as u32);
    for dr in batch {
        lw.blob(&dr.locator);
    }
    let locators = write_segment(pager, Encoding::Raw, lw.into_vec(), None, None, 0)?;

    let mut segments = Vec::with_capacity(cols.len());
    for (ci, col) in cols.iter().enumerate() {
        let values: Vec<&Value> = batch.iter().map(|dr| &dr.values[ci]).collect();
        let encoding = choose_encoding(col.ty, &values);
        let payload = encode_segment(encoding, &values);

        let mut min: Option<&Value> = None;
        let mut max: Option<&Value> = None;
        let mut null_count = 0u64;
        for v in &values {
            if v.is_null() {
                null_count += 1;
                continue;
            }
            if min.is_none_or(|m| v.total_cmp(m).is_lt()) {
                min = Some(v);
            }
            if max.is_none_or(|m| v.total_cmp(m).is_gt()) {
                max = Some(v);
            }
        }
        segments.push(write_segment(
            pager,
            encoding,
            payload,
            min.cloned(),
            max.cloned(),
            null_count,
        )?);
    }

    Ok(RowGroup { row_count: n as u64, deleted, locators, segments })
}

fn write_segment(
    pager: &mut Pager,
    encoding: Encoding,
    payload: Vec<u8>,
    min: Option<Value>,
    max: Option<Value>,
    null_count: u64,
) -> Result<Segment> {
    let first_page = rewrite_chain(pager, PageId::NONE, PageKind::ColumnMeta, &payload)?;
    let page_count = payload.len().div_ceil(MAX_RECORD).max(1) as u32;
    Ok(Segment {
        encoding,
        min,
        max,
        null_count,
        first_page,
        byte_len: payload.len() as u64,
        page_count,
    })
}

fn read_locators(pager: &mut Pager, seg: &Segment) -> Result<Vec<Vec<u8>>> {
    let bytes = read_chain(pager, seg.first_page, PageKind::ColumnMeta)?;
    let mut r = Reader::new(&bytes);
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(r.blob()?.to_vec());
    }
    Ok(out)
}

/// Dictionary for low-cardinality strings, run-length when runs average 4+
/// rows, raw otherwise.
fn choose_encoding(ty: ColumnType, values: &[&Value]) -> Encoding {
    if ty == ColumnType::String {
        let mut distinct: HashSet<&str> = HashSet::new();
        let mut has_null = false;
        for v in values {
            match v {
                Value::Str(s) => {
                    distinct.insert(s);
                }
                _ => has_null = true,
            }
        }
        let d = distinct.len() + has_null as usize;
        if (d as f64) / (values.len() as f64) <= 0.5 {
            return Encoding::Dict;
        }
    }
    let mut runs = 1usize;
    for w in values.windows(2) {
        if !w[0].total_eq(w[1]) {
            runs += 1;
        }
    }
    if values.len() as f64 / runs as f64 >= 4.0 {
        Encoding::Rle
    } else {
        Encoding::Raw
    }
}

fn encode_segment(encoding: Encoding, values: &[&Value]) -> Vec<u8> {
    let mut w = Writer::new();
    match encoding {
        Encoding::Raw => {
            w.u32(values.len() as u32);
            for v in values {
                put_value(&mut w, v);
            }
        }
        Encoding::Rle => {
            let mut runs: Vec<(u32, &Value)> = Vec::new();
            for v in values {
                match runs.last_mut() {
                    Some((count, rv)) if rv.total_eq(v) => *count += 1,
                    _ => runs.push((1, v)),
                }
            }
            w.u32(runs.len() as u32);
            for (count, v) in runs {
                w.u32(count);
                put_value(&mut w, v);
            }
        }
        Encoding::Dict => {
            let mut dict: Vec<&Value> = Vec::new();
            let mut codes: Vec<u16> = Vec::with_capacity(values.len());
            for v in values {
                if v.is_null() {
                    codes.push(u16::MAX);
                    continue;
                }
                let code = match dict.iter().position(|d| d.total_eq(v)) {
                    Some(i) => i,
                    None => {
                        dict.push(v);
                        dict.len() - 1
                    }
                };
                codes.push(code as u16);
            }
            w.u32(dict.len() as u32);
            for v in dict {
                put_value(&mut w, v);
            }
            w.u32(codes.len() as u32);
            for c in codes {
                w.u16(c);
            }
        }
    }
    w.into_vec()
}

fn decode_segment(bytes: &[u8], encoding: Encoding, expect_rows: usize) -> Result<Vec<Value>> {
    let mut r = Reader::new(bytes);
    let out = match encoding {
        Encoding::Raw => {
            let n = r.u32()? as usize;
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(get_value(&mut r)?);
            }
            out
        }
        Encoding::Rle => {
            let runs = r.u32()? as usize;
            let mut out = Vec::new();
            for _ in 0..runs {
                let count = r.u32()? as usize;
                let v = get_value(&mut r)?;
                out.extend(std::iter::repeat_n(v, count));
            }
            out
        }
        Encoding::Dict => {
            let dlen = r.u32()? as usize;
            let mut dict = Vec::with_capacity(dlen);
            for _ in 0..dlen {
                dict.push(get_value(&mut r)?);
            }
            let n = r.u32()? as usize;
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let code = r.u16()?;
                if code == u16::MAX {
                    out.push(Value::Null);
                } else {
                    let v = dict.get(code as usize).ok_or_else(|| {
                        Error::Corrupt(format!("dictionary code {code} out of range {dlen}"))
                    })?;
                    out.push(v.clone());
                }
            }
            out
        }
    };
    if out.len() != expect_rows {
        return Err(Error::Corrupt(format!(
            "segment decoded to {} rows, rowgroup has {expect_rows}",
            out.len()
        )));
    }
    Ok(out)
}

fn put_value(w: &mut Writer, v: &Value) {
    match v {
        Value::Null => {
            w.u8(0);
        }
        Value::Int(i) => {
            w.u8(1).i64(*i);
        }
        Value::Float(f) => {
            w.u8(2).f64(*f);
        }
        Value::Str(s) => {
            w.u8(3).string(s);
        }
        Value::Blob(b) => {
            w.u8(4).blob(b);
        }
    }
}

fn get_value(r: &mut Reader) -> Result<Value> {
    Ok(match r.u8()? {
        0 => Value::Null,
        1 => Value::Int(r.i64()?),
        2 => Value::Float(r.f64()?),
        3 => Value::Str(r.string()?),
        4 => Value::Blob(r.blob()?.to_vec()),
        other => return Err(Error::Corrupt(format!("bad value tag {other}"))),
    })
}

fn put_segment(w: &mut Writer, s: &Segment) {
    w.u8(s.encoding.tag());
    match &s.min {
        Some(v) => {
            w.u8(1);
            put_value(w, v);
        }
        None => {
            w.u8(0);
        }
    }
    match &s.max {
        Some(v) => {
            w.u8(1);
            put_value(w, v);
        }
        None => {
            w.u8(0);
        }
    }
    w.u64(s.null_count);
    w.u16(s.first_page.file_id).u32(s.first_page.page_no);
    w.u64(s.byte_len);
    w.u32(s.page_count);
}

fn get_segment(r: &mut Reader) -> Result<Segment> {
    let encoding = Encoding::from_tag(r.u8()?)?;
    let min = if r.u8()? != 0 { Some(get_value(r)?) } else { None };
    let max = if r.u8()? != 0 { Some(get_value(r)?) } else { None };
    let null_count = r.u64()?;
    let file_id = r.u16()?;
    let page_no = r.u32()?;
    let byte_len = r.u64()?;
    let page_count = r.u32()?;
    Ok(Segment {
        encoding,
        min,
        max,
        null_count,
        first_page: PageId { file_id, page_no },
        byte_len,
        page_count,
    })
}
