//! The engine ties catalog, base tables, and indexes into one database
//! with statement-level semantics.
//!
//! Mutations follow a validate-then-apply discipline: everything a
//! statement could violate (arity, types, nullability, unique keys) is
//! checked against both the current database and the rest of the
//! statement before any page is touched, so a rejected statement leaves
//! no partial state. Hard failures mid-apply (I/O, corruption) are not
//! rolled back; there is no write-ahead log here.

use std::collections::{HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use crate::btree::{BTree, Hi, IndexEntry, Lo};
use crate::catalog::{Catalog, ColumnDef, IndexDef, IndexKind, Organization, TableDef};
use crate::columnstore::Columnstore;
use crate::error::{Error, Result};
use crate::hash::HashIndex;
use crate::heap::{HeapFile, Rid};
use crate::key::encode_key;
use crate::page::PageId;
use crate::pager::{IoCounters, Pager};
use crate::predicate::{Predicate, ResolvedPredicate};
use crate::row::{decode_row, encode_row, Row};
use crate::trace::{row_tuple, EventKind, Trace};
use crate::value::{ColumnType, Value};
use crate::wire::Writer;

/// Where a row lives: a heap RID, or its clustered key (the stored key,
/// uniquifier included) when the table is organized by a clustered index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Loc {
    Rid(Rid),
    Key(Vec<u8>),
}

impl Loc {
    pub fn bytes(&self) -> Vec<u8> {
        match self {
            Loc::Rid(r) => r.encode().to_vec(),
            Loc::Key(k) => k.clone(),
        }
    }
}

/// Exclusive-access guard: `<db>.lock` is created with create_new and
/// removed on drop. Stale locks (crashed process) must be deleted by hand.
struct Lock {
    path: PathBuf,
}

impl Lock {
    fn acquire(db: &Path) -> Result<Lock> {
        let mut os = db.as_os_str().to_os_string();
        os.push(".lock");
        let path = PathBuf::from(os);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Lock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::DatabaseLocked(format!(
                    "{} exists; another process has this database open",
                    path.display()
                )))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Everything needed to maintain one index during a statement, resolved
/// against the table definition once instead of per row.
pub(crate) struct IxCtx {
    pub(crate) def: IndexDef,
    pub(crate) key_pos: Vec<usize>,
    pub(crate) include_pos: Vec<usize>,
    pub(crate) include_types: Vec<ColumnType>,
}

impl IxCtx {
    pub(crate) fn build(def: IndexDef, table: &TableDef) -> Result<IxCtx> {
        let key_pos = key_positions(table, &def.key_cols)?;
        let include_pos = key_positions(table, &def.include)?;
        let include_types = def
            .include
            .iter()
            .map(|c| table.col_type(c).unwrap())
            .collect();
        Ok(IxCtx { def, key_pos, include_pos, include_types })
    }

    pub(crate) fn filter<'a>(&'a self, col_names: &[String]) -> Result<Option<ResolvedPredicate<'a>>> {
        match &self.def.filter {
            None => Ok(None),
            Some(f) => Ok(Some(f.resolve(col_names)?)),
        }
    }

    pub(crate) fn user_key(&self, row: &[Value]) -> Result<Vec<u8>> {
        encode_key(&project(row, &self.key_pos))
    }

    /// Leaf entry for a nonclustered index, or None when the row falls
    /// outside the index filter. Stored key is the user key, suffixed
    /// with the locator when the index is not unique; the payload is the
    /// locator (length-prefixed) followed by the INCLUDE column image.
    pub(crate) fn nc_entry(
        &self,
        filter: Option<&ResolvedPredicate<'_>>,
        row: &[Value],
        loc: &Loc,
    ) -> Result<Option<IndexEntry>> {
        if let Some(f) = filter {
            if !f.matches(row) {
                return Ok(None);
            }
        }
        let user = self.user_key(row)?;
        let locb = loc.bytes();
        let mut stored = user.clone();
        if !self.def.unique {
            stored.extend_from_slice(&locb);
        }
        let include_img = encode_row(&self.include_types, &project(row, &self.include_pos))?;
        let mut w = Writer::new();
        w.u16(locb.len() as u16).bytes(&locb).bytes(&include_img);
        Ok(Some(IndexEntry::new(stored, user.len(), w.into_vec())))
    }
}

/// Split a nonclustered leaf payload into (locator bytes, include image).
pub(crate) fn nc_payload_parts(payload: &[u8]) -> Result<(&[u8], &[u8])> {
    if payload.len() < 2 {
        return Err(Error::Corrupt("truncated index payload".into()));
    }
    let n = u16::from_le_bytes([payload[0], payload[1]]) as usize;
    if payload.len() < 2 + n {
        return Err(Error::Corrupt("truncated index locator".into()));
    }
    Ok((&payload[2..2 + n], &payload[2 + n..]))
}

pub(crate) fn key_positions(table: &TableDef, cols: &[String]) -> Result<Vec<usize>> {
    cols.iter()
        .map(|c| {
            table
                .col(c)
                .map(|(i, _)| i)
                .ok_or_else(|| Error::UnknownColumn(c.clone()))
        })
        .collect()
}

pub(crate) fn project(row: &[Value], pos: &[usize]) -> Vec<Value> {
    pos.iter().map(|&i| row[i].clone()).collect()
}

pub(crate) fn open_tree(def: &IndexDef) -> BTree {
    BTree::open(def.root, def.first_leaf, def.unique)
}

/// Rewrap a DuplicateKey raised inside an index structure (which does not
/// know its own catalog name) with the index's real name.
fn named_dup(e: Error, name: &str) -> Error {
    match e {
        Error::DuplicateKey { key, .. } => Error::DuplicateKey { index: name.to_string(), key },
        other => other,
    }
}

fn trace_env() -> bool {
    std::env::var("PDEX_TRACE").map(|v| v == "1").unwrap_or(false)
}

/// All rows of a table with their locators, in base order (heap scan
/// order, or clustered key order).
pub(crate) fn collect_rows(
    pager: &mut Pager,
    catalog: &Catalog,
    heaps: &HashMap<String, HeapFile>,
    table: &TableDef,
) -> Result<Vec<(Loc, Row)>> {
    let types = table.col_types();
    match &table.organization {
        Organization::Heap { .. } => {
            let heap = heaps
                .get(&table.name)
                .ok_or_else(|| Error::Corrupt(format!("no heap handle for '{}'", table.name)))?;
            let mut out = Vec::new();
            for item in heap.scan(pager) {
                let (rid, img) = item?;
                out.push((Loc::Rid(rid), decode_row(&types, &img)?));
            }
            Ok(out)
        }
        Organization::Clustered { index } => {
            let tree = open_tree(catalog.index(index)?);
            let mut out = Vec::new();
            for item in tree.range(pager, Lo::First, Hi::Last)? {
                let (k, v) = item?;
                out.push((Loc::Key(k), decode_row(&types, &v)?));
            }
            Ok(out)
        }
    }
}

/// Requested shape of a new index; `Engine::create_index` validates it
/// against the catalog and builds the structure.
#[derive(Debug, Clone)]
pub struct IndexSpec {
    pub name: String,
    pub table: String,
    pub kind: IndexKind,
    pub key_cols: Vec<String>,
    pub include: Vec<String>,
    /// Filter predicate source text, parsed and bound at creation.
    pub filter: Option<String>,
    pub unique: bool,
    pub fill_factor: f64,
    /// Hash only: requested bucket count (rounded up to a power of two).
    pub buckets: u64,
}

impl IndexSpec {
    pub fn new(name: &str, table: &str, kind: IndexKind, key_cols: Vec<String>) -> IndexSpec {
        IndexSpec {
            name: name.to_string(),
            table: table.to_string(),
            kind,
            key_cols,
            include: Vec::new(),
            filter: None,
            unique: false,
            fill_factor: 1.0,
            buckets: 4096,
        }
    }
}

pub struct Engine {
    pub(crate) pager: Pager,
    pub(crate) catalog: Catalog,
    pub(crate) heaps: HashMap<String, HeapFile>,
    pub(crate) hashes: HashMap<String, HashIndex>,
    pub(crate) stores: HashMap<String, Columnstore>,
    pub(crate) trace: Trace,
    path: PathBuf,
    /// Catalog head as last written to the page-0 header.
    synced_head: PageId,
    _lock: Lock,
}

impl Engine {
    pub fn create(path: &Path) -> Result<Engine> {
        Self::create_with(path, trace_env())
    }

    pub fn create_with(path: &Path, trace_on: bool) -> Result<Engine> {
        if path.exists() {
            return Err(Error::DuplicateName(format!("database {}", path.display())));
        }
        let lock = Lock::acquire(path)?;
        let mut pager = Pager::create(path)?;
        // Page 0 is the database header; burn it so the slotted world
        // starts at page 1.
        pager.allocate_page(crate::page::PageKind::Catalog)?;
        let mut catalog = Catalog::new();
        catalog.save(&mut pager)?;
        pager.write_db_header(catalog.head)?;
        let synced_head = catalog.head;
        let trace = Trace::open(path, trace_on)?;
        Ok(Engine {
            pager,
            catalog,
            heaps: HashMap::new(),
            hashes: HashMap::new(),
            stores: HashMap::new(),
            trace,
            path: path.to_path_buf(),
            synced_head,
            _lock: lock,
        })
    }

    pub fn open(path: &Path) -> Result<Engine> {
        Self::open_with(path, trace_env())
    }

    pub fn open_with(path: &Path, trace_on: bool) -> Result<Engine> {
        let lock = Lock::acquire(path)?;
        let mut pager = Pager::open(path)?;
        let head = pager.read_db_header()?;
        let catalog = if head.is_none() {
            Catalog::new()
        } else {
            Catalog::load(&mut pager, head)?
        };

        let mut heaps = HashMap::new();
        for t in &catalog.tables {
            if let Organization::Heap { first_page } = t.organization {
                heaps.insert(t.name.clone(), HeapFile::open(&mut pager, first_page)?);
            }
        }
        let mut stores = HashMap::new();
        for ix in &catalog.indexes {
            if ix.kind == IndexKind::Columnstore {
                stores.insert(ix.name.clone(), Columnstore::load(&mut pager, ix.meta_page)?);
            }
        }
        // Hash indexes live in memory only and are rebuilt from the base
        // table at every open.
        let mut hashes = HashMap::new();
        for ix in &catalog.indexes {
            if ix.kind != IndexKind::Hash {
                continue;
            }
            let table = catalog.table(&ix.table)?;
            let pos = key_positions(table, &ix.key_cols)?;
            let rows = collect_rows(&mut pager, &catalog, &heaps, table)?;
            let mut h = HashIndex::create(ix.buckets, ix.unique)?;
            for (loc, row) in &rows {
                h.insert(encode_key(&project(row, &pos))?, loc.bytes())
                    .map_err(|e| named_dup(e, &ix.name))?;
            }
            hashes.insert(ix.name.clone(), h);
        }

        let trace = Trace::open(path, trace_on)?;
        Ok(Engine {
            pager,
            catalog,
            heaps,
            hashes,
            stores,
            trace,
            path: path.to_path_buf(),
            synced_head: head,
            _lock: lock,
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn io(&self) -> IoCounters {
        self.pager.io
    }

    pub fn reset_io(&mut self) {
        self.pager.io = IoCounters::default();
    }

    pub fn is_tracing(&self) -> bool {
        self.trace.is_enabled()
    }

    /// All rows of a table with their locators.
    pub fn base_rows(&mut self, table: &str) -> Result<Vec<(Loc, Row)>> {
        let t = self.catalog.table(table)?;
        collect_rows(&mut self.pager, &self.catalog, &self.heaps, t)
    }

    /// Pages in the base structure: heap page count, or clustered leaf
    /// count. This is what a full scan of the table reads.
    pub fn table_pages(&mut self, table: &str) -> Result<u64> {
        let t = self.catalog.table(table)?;
        match &t.organization {
            Organization::Heap { .. } => Ok(self.heaps[&t.name].page_count() as u64),
            Organization::Clustered { index } => {
                let tree = open_tree(self.catalog.index(index)?);
                let (leaves, _) = tree.leaf_stats(&mut self.pager)?;
                Ok(leaves)
            }
        }
    }

    fn bind_predicate(&self, table: &TableDef, src: &str) -> Result<Predicate> {
        if src.trim().is_empty() {
            return Ok(Predicate::empty());
        }
        Predicate::parse(src)?.bind(|c| table.col_type(c))
    }

    /// Save catalog (and the touched table's columnstore directories),
    /// then sync the page-0 pointer if the chain head moved.
    fn persist(&mut self, table: Option<&str>) -> Result<()> {
        if let Some(t) = table {
            let names: Vec<String> = self
                .catalog
                .indexes_on(t)
                .iter()
                .filter(|d| d.kind == IndexKind::Columnstore)
                .map(|d| d.name.clone())
                .collect();
            for n in names {
                let cs = self
                    .stores
                    .get_mut(&n)
                    .ok_or_else(|| Error::Corrupt(format!("no columnstore handle for '{n}'")))?;
                cs.save(&mut self.pager)?;
                self.catalog.index_mut(&n)?.meta_page = cs.head;
            }
        }
        self.catalog.save(&mut self.pager)?;
        if self.catalog.head != self.synced_head {
            self.pager.write_db_header(self.catalog.head)?;
            self.synced_head = self.catalog.head;
        }
        Ok(())
    }

    /// Drain full rowgroups from the deltastores of every columnstore on
    /// `table`, tracing the move.
    fn run_tuple_mover(&mut self, table: &str) -> Result<()> {
        let names: Vec<String> = self
            .catalog
            .indexes_on(table)
            .iter()
            .filter(|d| d.kind == IndexKind::Columnstore)
            .map(|d| d.name.clone())
            .collect();
        for n in names {
            let cs = self
                .stores
                .get_mut(&n)
                .ok_or_else(|| Error::Corrupt(format!("no columnstore handle for '{n}'")))?;
            let moved = cs.tuple_move(&mut self.pager)?;
            if moved > 0 {
                self.trace
                    .emit(EventKind::TupleMove, table, &format!("index={n} rows={moved}"))?;
            }
        }
        Ok(())
    }

    // ---- DDL ----

    pub fn create_table(
        &mut self,
        name: &str,
        cols: Vec<ColumnDef>,
        pk: Option<Vec<String>>,
    ) -> Result<()> {
        if cols.is_empty() {
            return Err(Error::SchemaMismatch("a table needs at least one column".into()));
        }
        let mut seen = HashSet::new();
        for c in &cols {
            if !seen.insert(c.name.clone()) {
                return Err(Error::DuplicateName(format!("column '{}'", c.name)));
            }
        }
        if self.catalog.table(name).is_ok() {
            return Err(Error::DuplicateName(format!("table '{name}'")));
        }
        let heap = HeapFile::create(&mut self.pager)?;
        let t = TableDef {
            name: name.to_string(),
            cols,
            organization: Organization::Heap { first_page: heap.first_page() },
            next_uniquifier: 0,
        };
        self.catalog.add_table(t)?;
        self.heaps.insert(name.to_string(), heap);
        match pk {
            Some(pk_cols) => self.declare_primary_key(name, &pk_cols),
            None => self.persist(None),
        }
    }

    /// Declare a primary key: the columns become NOT NULL and get a unique
    /// index named `pk_<table>`, clustered unless the table already has a
    /// clustered index (then it falls back to nonclustered).
    pub fn declare_primary_key(&mut self, table: &str, cols: &[String]) -> Result<()> {
        let tdef = self.catalog.table(table)?.clone();
        let pos = key_positions(&tdef, cols)?;
        for (_, row) in self.base_rows(table)? {
            for &i in &pos {
                if matches!(row[i], Value::Null) {
                    return Err(Error::SchemaMismatch(format!(
                        "primary key column '{}' has NULL values",
                        tdef.cols[i].name
                    )));
                }
            }
        }
        {
            let t = self.catalog.table_mut(table)?;
            for &i in &pos {
                t.cols[i].nullable = false;
            }
        }
        let kind = if self.catalog.clustered_index_of(table).is_some() {
            IndexKind::NonClustered
        } else {
            IndexKind::Clustered
        };
        let mut spec = IndexSpec::new(&format!("pk_{table}"), table, kind, cols.to_vec());
        spec.unique = true;
        self.create_index(spec)
    }

    pub fn create_index(&mut self, spec: IndexSpec) -> Result<()> {
        if self.catalog.index(&spec.name).is_ok() {
            return Err(Error::DuplicateName(format!("index '{}'", spec.name)));
        }
        let tdef = self.catalog.table(&spec.table)?.clone();
        if spec.key_cols.is_empty() {
            return Err(Error::InvalidIndexDef("no key columns".into()));
        }
        let mut seen = HashSet::new();
        for c in &spec.key_cols {
            if !seen.insert(c.as_str()) {
                return Err(Error::InvalidIndexDef(format!("duplicate key column '{c}'")));
            }
        }
        for c in spec.key_cols.iter().chain(&spec.include) {
            let (_, cd) = tdef.col(c).ok_or_else(|| Error::UnknownColumn(c.clone()))?;
            if cd.ty == ColumnType::Blob {
                return Err(Error::BlobKeyColumn(c.clone()));
            }
        }
        for c in &spec.include {
            if spec.key_cols.contains(c) {
                return Err(Error::InvalidIndexDef(format!(
                    "include column '{c}' is already a key column"
                )));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::InvalidIndexDef(format!("duplicate include column '{c}'")));
            }
        }
        if !(0.5..=1.0).contains(&spec.fill_factor) {
            return Err(Error::InvalidIndexDef(format!(
                "fill factor {} outside [0.5, 1.0]",
                spec.fill_factor
            )));
        }
        match spec.kind {
            IndexKind::Clustered | IndexKind::Hash | IndexKind::Columnstore => {
                if !spec.include.is_empty() {
                    return Err(Error::InvalidIndexDef(format!(
                        "{} index cannot have INCLUDE columns",
                        spec.kind.name()
                    )));
                }
                if spec.filter.is_some() {
                    return Err(Error::InvalidIndexDef(format!(
                        "{} index cannot be filtered",
                        spec.kind.name()
                    )));
                }
            }
            IndexKind::NonClustered => {}
        }
        if spec.kind == IndexKind::Clustered && self.catalog.clustered_index_of(&spec.table).is_some()
        {
            return Err(Error::SecondClusteredIndex(spec.table.clone()));
        }
        if spec.kind == IndexKind::Columnstore && spec.unique {
            return Err(Error::InvalidIndexDef("columnstore cannot be unique".into()));
        }
        let filter = match &spec.filter {
            None => None,
            Some(src) => {
                let p = self.bind_predicate(&tdef, src)?;
                if p.is_empty() {
                    None
                } else {
                    Some(p)
                }
            }
        };

        let rows = self.base_rows(&spec.table)?;
        let mut def = IndexDef {
            name: spec.name.clone(),
            table: spec.table.clone(),
            kind: spec.kind,
            key_cols: spec.key_cols.clone(),
            include: spec.include.clone(),
            filter,
            unique: spec.unique,
            fill_factor: spec.fill_factor,
            buckets: 0,
            root: PageId::NONE,
            first_leaf: PageId::NONE,
            meta_page: PageId::NONE,
        };

        match spec.kind {
            IndexKind::NonClustered => {
                let ctx = IxCtx::build(def, &tdef)?;
                let col_names = tdef.col_names();
                let filt = ctx.filter(&col_names)?;
                let mut entries = Vec::new();
                for (loc, row) in &rows {
                    if let Some(e) = ctx.nc_entry(filt.as_ref(), row, loc)? {
                        entries.push(e);
                    }
                }
                let dup_name = ctx.def.name.clone();
                let tree =
                    BTree::bulk_build(&mut self.pager, entries, spec.fill_factor, spec.unique)
                        .map_err(|e| named_dup(e, &dup_name))?;
                def = ctx.def;
                def.root = tree.root;
                def.first_leaf = tree.first_leaf;
                self.catalog.add_index(def)?;
            }
            IndexKind::Hash => {
                let pos = key_positions(&tdef, &spec.key_cols)?;
                let mut h = HashIndex::create(spec.buckets, spec.unique)?;
                for (loc, row) in &rows {
                    h.insert(encode_key(&project(row, &pos))?, loc.bytes())
                        .map_err(|e| named_dup(e, &spec.name))?;
                }
                def.buckets = h.bucket_count();
                self.catalog.add_index(def)?;
                self.hashes.insert(spec.name.clone(), h);
            }
            IndexKind::Columnstore => {
                let pos = key_positions(&tdef, &spec.key_cols)?;
                let stored: Vec<ColumnDef> =
                    pos.iter().map(|&i| tdef.cols[i].clone()).collect();
                let mut cs = Columnstore::create(stored);
                for (loc, row) in &rows {
                    cs.append(loc.bytes(), project(row, &pos))?;
                }
                let moved = cs.tuple_move(&mut self.pager)?;
                cs.save(&mut self.pager)?;
                def.meta_page = cs.head;
                self.catalog.add_index(def)?;
                self.stores.insert(spec.name.clone(), cs);
                if moved > 0 {
                    self.trace.emit(
                        EventKind::TupleMove,
                        &spec.table,
                        &format!("index={} rows={moved}", spec.name),
                    )?;
                }
            }
            IndexKind::Clustered => {
                // Converting a heap into a clustered table: rebuild the base
                // as a B-tree keyed on the new clustered key, then rebuild
                // every secondary index with key locators instead of RIDs.
                // The old heap pages are orphaned, not reclaimed.
                let types = tdef.col_types();
                let pos = key_positions(&tdef, &spec.key_cols)?;
                let mut next_u = tdef.next_uniquifier;
                let mut entries = Vec::with_capacity(rows.len());
                let mut relocated = Vec::with_capacity(rows.len());
                for (_, row) in rows {
                    let user = encode_key(&project(&row, &pos))?;
                    let stored = if spec.unique {
                        user.clone()
                    } else {
                        let mut s = user.clone();
                        s.extend_from_slice(&next_u.to_be_bytes());
                        next_u += 1;
                        s
                    };
                    entries.push(IndexEntry::new(
                        stored.clone(),
                        user.len(),
                        encode_row(&types, &row)?,
                    ));
                    relocated.push((Loc::Key(stored), row));
                }
                let tree =
                    BTree::bulk_build(&mut self.pager, entries, spec.fill_factor, spec.unique)
                        .map_err(|e| named_dup(e, &spec.name))?;
                def.root = tree.root;
                def.first_leaf = tree.first_leaf;
                self.catalog.add_index(def)?;
                self.rebuild_secondaries(&tdef, &relocated, &spec.name)?;
                {
                    let t = self.catalog.table_mut(&spec.table)?;
                    t.organization = Organization::Clustered { index: spec.name.clone() };
                    t.next_uniquifier = next_u;
                }
                self.heaps.remove(&spec.table);
            }
        }
        self.persist(Some(&spec.table))
    }

    /// Rebuild every index on `table` except `skip` from `rows`, replacing
    /// old structures in place. Used when the base organization changes
    /// and every locator with it.
    fn rebuild_secondaries(
        &mut self,
        table: &TableDef,
        rows: &[(Loc, Row)],
        skip: &str,
    ) -> Result<()> {
        let names: Vec<String> = self
            .catalog
            .indexes_on(&table.name)
            .iter()
            .map(|d| d.name.clone())
            .filter(|n| n != skip)
            .collect();
        let col_names = table.col_names();
        for name in names {
            let def = self.catalog.index(&name)?.clone();
            match def.kind {
                IndexKind::Clustered => {
                    return Err(Error::Corrupt(format!(
                        "clustered index '{name}' left behind during reorganization"
                    )))
                }
                IndexKind::NonClustered => {
                    let fill = def.fill_factor;
                    let unique = def.unique;
                    let ctx = IxCtx::build(def, table)?;
                    let filt = ctx.filter(&col_names)?;
                    let mut entries = Vec::new();
                    for (loc, row) in rows {
                        if let Some(e) = ctx.nc_entry(filt.as_ref(), row, loc)? {
                            entries.push(e);
                        }
                    }
                    let tree = BTree::bulk_build(&mut self.pager, entries, fill, unique)
                        .map_err(|e| named_dup(e, &name))?;
                    let d = self.catalog.index_mut(&name)?;
                    d.root = tree.root;
                    d.first_leaf = tree.first_leaf;
                }
                IndexKind::Hash => {
                    let pos = key_positions(table, &def.key_cols)?;
                    let mut h = HashIndex::create(def.buckets, def.unique)?;
                    for (loc, row) in rows {
                        h.insert(encode_key(&project(row, &pos))?, loc.bytes())
                            .map_err(|e| named_dup(e, &name))?;
                    }
                    self.catalog.index_mut(&name)?.buckets = h.bucket_count();
                    self.hashes.insert(name, h);
                }
                IndexKind::Columnstore => {
                    let pos = key_positions(table, &def.key_cols)?;
                    let stored: Vec<ColumnDef> =
                        pos.iter().map(|&i| table.cols[i].clone()).collect();
                    let mut cs = Columnstore::create(stored);
                    for (loc, row) in rows {
                        cs.append(loc.bytes(), project(row, &pos))?;
                    }
                    let moved = cs.tuple_move(&mut self.pager)?;
                    cs.save(&mut self.pager)?;
                    self.catalog.index_mut(&name)?.meta_page = cs.head;
                    if moved > 0 {
                        self.trace.emit(
                            EventKind::TupleMove,
                            &table.name,
                            &format!("index={name} rows={moved}"),
                        )?;
                    }
                    self.stores.insert(name, cs);
                }
            }
        }
        Ok(())
    }

    pub fn drop_index(&mut self, name: &str) -> Result<()> {
        let def = self.catalog.index(name)?.clone();
        if def.kind != IndexKind::Clustered {
            self.catalog.remove_index(name)?;
            self.hashes.remove(name);
            self.stores.remove(name);
            return self.persist(None);
        }
        // Dropping the clustered index converts the table back to a heap:
        // every row gets a fresh RID and every secondary is rebuilt.
        let tdef = self.catalog.table(&def.table)?.clone();
        let types = tdef.col_types();
        let rows = self.base_rows(&def.table)?;
        let mut heap = HeapFile::create(&mut self.pager)?;
        let mut relocated = Vec::with_capacity(rows.len());
        for (_, row) in rows {
            let rid = heap.insert(&mut self.pager, &encode_row(&types, &row)?)?;
            relocated.push((Loc::Rid(rid), row));
        }
        {
            let t = self.catalog.table_mut(&def.table)?;
            t.organization = Organization::Heap { first_page: heap.first_page() };
        }
        self.heaps.insert(def.table.clone(), heap);
        self.catalog.remove_index(name)?;
        self.rebuild_secondaries(&tdef, &relocated, name)?;
        self.persist(Some(&def.table))
    }

    // ---- DML ----

    pub fn insert(&mut self, table: &str, row: Row) -> Result<()> {
        self.insert_rows(table, vec![row]).map(|_| ())
    }

    pub fn insert_rows(&mut self, table: &str, rows: Vec<Row>) -> Result<u64> {
        let tdef = self.catalog.table(table)?.clone();
        let col_names = tdef.col_names();
        let types = tdef.col_types();
        let rows: Vec<Row> = rows
            .into_iter()
            .map(|r| normalize_row(&tdef, r))
            .collect::<Result<_>>()?;

        let ctxs: Vec<IxCtx> = self
            .catalog
            .indexes_on(table)
            .into_iter()
            .cloned()
            .map(|d| IxCtx::build(d, &tdef))
            .collect::<Result<_>>()?;

        // Unique pre-check: probe existing structures and the rest of the
        // batch before touching anything.
        for ctx in &ctxs {
            if !ctx.def.unique {
                continue;
            }
            let filt = ctx.filter(&col_names)?;
            let mut batch: HashSet<Vec<u8>> = HashSet::new();
            for row in &rows {
                if let Some(f) = &filt {
                    if !f.matches(row) {
                        continue;
                    }
                }
                let user = ctx.user_key(row)?;
                if self.key_occupied(&ctx.def, &user)? || !batch.insert(user) {
                    return Err(Error::DuplicateKey {
                        index: ctx.def.name.clone(),
                        key: row_tuple(&project(row, &ctx.key_pos)),
                    });
                }
            }
        }

        let clustered_name = match &tdef.organization {
            Organization::Clustered { index } => Some(index.clone()),
            Organization::Heap { .. } => None,
        };
        let (base_ctx, sec_ctxs): (Vec<IxCtx>, Vec<IxCtx>) = ctxs
            .into_iter()
            .partition(|c| Some(&c.def.name) == clustered_name.as_ref());
        let base_ctx = base_ctx.into_iter().next();
        let filts: Vec<Option<ResolvedPredicate<'_>>> = sec_ctxs
            .iter()
            .map(|c| c.filter(&col_names))
            .collect::<Result<_>>()?;

        let mut trees: HashMap<String, BTree> = HashMap::new();
        let mut next_u = tdef.next_uniquifier;
        let mut inserted = 0u64;
        for row in &rows {
            let img = encode_row(&types, row)?;
            let loc = match &base_ctx {
                None => {
                    let heap = self.heaps.get_mut(table).ok_or_else(|| {
                        Error::Corrupt(format!("no heap handle for '{table}'"))
                    })?;
                    Loc::Rid(heap.insert(&mut self.pager, &img)?)
                }
                Some(c) => {
                    let user = c.user_key(row)?;
                    let stored = if c.def.unique {
                        user.clone()
                    } else {
                        let mut s = user.clone();
                        s.extend_from_slice(&next_u.to_be_bytes());
                        next_u += 1;
                        s
                    };
                    let tree = trees
                        .entry(c.def.name.clone())
                        .or_insert_with(|| open_tree(&c.def));
                    tree.insert(
                        &mut self.pager,
                        IndexEntry::new(stored.clone(), user.len(), img.clone()),
                    )
                    .map_err(|e| named_dup(e, &c.def.name))?;
                    Loc::Key(stored)
                }
            };
            for (c, filt) in sec_ctxs.iter().zip(&filts) {
                match c.def.kind {
                    IndexKind::NonClustered => {
                        if let Some(e) = c.nc_entry(filt.as_ref(), row, &loc)? {
                            let tree = trees
                                .entry(c.def.name.clone())
                                .or_insert_with(|| open_tree(&c.def));
                            tree.insert(&mut self.pager, e)
                                .map_err(|e| named_dup(e, &c.def.name))?;
                        }
                    }
                    IndexKind::Hash => {
                        let h = self.hashes.get_mut(&c.def.name).ok_or_else(|| {
                            Error::Corrupt(format!("no hash handle for '{}'", c.def.name))
                        })?;
                        h.insert(c.user_key(row)?, loc.bytes())
                            .map_err(|e| named_dup(e, &c.def.name))?;
                    }
                    IndexKind::Columnstore => {
                        let cs = self.stores.get_mut(&c.def.name).ok_or_else(|| {
                            Error::Corrupt(format!("no columnstore handle for '{}'", c.def.name))
                        })?;
                        cs.append(loc.bytes(), project(row, &c.key_pos))?;
                    }
                    IndexKind::Clustered => {
                        return Err(Error::Corrupt(
                            "clustered index enumerated as secondary".into(),
                        ))
                    }
                }
            }
            self.trace
                .emit(EventKind::Insert, table, &format!("row={}", row_tuple(row)))?;
            inserted += 1;
        }
        if inserted == 0 {
            self.trace.emit(EventKind::Insert, table, "rows=0")?;
        }

        for (name, tree) in trees {
            let d = self.catalog.index_mut(&name)?;
            d.root = tree.root;
            d.first_leaf = tree.first_leaf;
        }
        self.catalog.table_mut(table)?.next_uniquifier = next_u;
        self.run_tuple_mover(table)?;
        self.persist(Some(table))?;
        Ok(inserted)
    }

    /// Does any entry with this full user key exist in the index?
    fn key_occupied(&mut self, def: &IndexDef, user: &[u8]) -> Result<bool> {
        if def.kind == IndexKind::Hash {
            let h = self
                .hashes
                .get(&def.name)
                .ok_or_else(|| Error::Corrupt(format!("no hash handle for '{}'", def.name)))?;
            return Ok(!h.lookup_equal(user).0.is_empty());
        }
        let tree = open_tree(def);
        match tree.seek(&mut self.pager, user)?.next() {
            None => Ok(false),
            Some(Ok(_)) => Ok(true),
            Some(Err(e)) => Err(e),
        }
    }

    pub fn delete_where(&mut self, table: &str, pred_src: &str) -> Result<u64> {
        let tdef = self.catalog.table(table)?.clone();
        let col_names = tdef.col_names();
        let pred = self.bind_predicate(&tdef, pred_src)?;
        let rp = pred.resolve(&col_names)?;
        let victims: Vec<(Loc, Row)> = self
            .base_rows(table)?
            .into_iter()
            .filter(|(_, r)| rp.matches(r))
            .collect();
        drop(rp);

        let ctxs: Vec<IxCtx> = self
            .catalog
            .indexes_on(table)
            .into_iter()
            .cloned()
            .map(|d| IxCtx::build(d, &tdef))
            .collect::<Result<_>>()?;
        let clustered_name = match &tdef.organization {
            Organization::Clustered { index } => Some(index.clone()),
            Organization::Heap { .. } => None,
        };
        let sec_ctxs: Vec<IxCtx> = ctxs
            .into_iter()
            .filter(|c| Some(&c.def.name) != clustered_name.as_ref())
            .collect();
        let filts: Vec<Option<ResolvedPredicate<'_>>> = sec_ctxs
            .iter()
            .map(|c| c.filter(&col_names))
            .collect::<Result<_>>()?;

        let mut trees: HashMap<String, BTree> = HashMap::new();
        for (loc, row) in &victims {
            for (c, filt) in sec_ctxs.iter().zip(&filts) {
                self.unindex_row(c, filt.as_ref(), row, loc, &mut trees)?;
            }
            match loc {
                Loc::Rid(rid) => {
                    let heap = self.heaps.get_mut(table).ok_or_else(|| {
                        Error::Corrupt(format!("no heap handle for '{table}'"))
                    })?;
                    heap.delete(&mut self.pager, *rid)?;
                }
                Loc::Key(stored) => {
                    let cname = clustered_name.as_ref().ok_or_else(|| {
                        Error::Corrupt("key locator on a heap table".into())
                    })?;
                    let def = self.catalog.index(cname)?.clone();
                    let tree = trees
                        .entry(cname.clone())
                        .or_insert_with(|| open_tree(&def));
                    tree.delete(&mut self.pager, stored)?;
                }
            }
            self.trace
                .emit(EventKind::Delete, table, &format!("row={}", row_tuple(row)))?;
        }
        if victims.is_empty() {
            self.trace.emit(EventKind::Delete, table, "rows=0")?;
        }

        for (name, tree) in trees {
            let d = self.catalog.index_mut(&name)?;
            d.root = tree.root;
            d.first_leaf = tree.first_leaf;
        }
        self.persist(Some(table))?;
        Ok(victims.len() as u64)
    }

    /// Remove one row's entry from a secondary index, if present.
    fn unindex_row(
        &mut self,
        c: &IxCtx,
        filt: Option<&ResolvedPredicate<'_>>,
        row: &Row,
        loc: &Loc,
        trees: &mut HashMap<String, BTree>,
    ) -> Result<()> {
        match c.def.kind {
            IndexKind::NonClustered => {
                if let Some(e) = c.nc_entry(filt, row, loc)? {
                    let tree = trees
                        .entry(c.def.name.clone())
                        .or_insert_with(|| open_tree(&c.def));
                    tree.delete(&mut self.pager, &e.key).map_err(|err| {
                        out_of_sync(err, &c.def.name)
                    })?;
                }
            }
            IndexKind::Hash => {
                let h = self.hashes.get_mut(&c.def.name).ok_or_else(|| {
                    Error::Corrupt(format!("no hash handle for '{}'", c.def.name))
                })?;
                h.delete(&c.user_key(row)?, &loc.bytes())
                    .map_err(|err| out_of_sync(err, &c.def.name))?;
            }
            IndexKind::Columnstore => {
                let cs = self.stores.get_mut(&c.def.name).ok_or_else(|| {
                    Error::Corrupt(format!("no columnstore handle for '{}'", c.def.name))
                })?;
                if !cs.delete(&mut self.pager, &loc.bytes())? {
                    return Err(Error::Corrupt(format!(
                        "index '{}' is missing a row the base table has",
                        c.def.name
                    )));
                }
            }
            IndexKind::Clustered => {
                return Err(Error::Corrupt(
                    "clustered index enumerated as secondary".into(),
                ))
            }
        }
        Ok(())
    }

    pub fn update_where(
        &mut self,
        table: &str,
        pred_src: &str,
        set: &[(String, Value)],
    ) -> Result<u64> {
        let tdef = self.catalog.table(table)?.clone();
        let col_names = tdef.col_names();
        let types = tdef.col_types();
        if set.is_empty() {
            return Err(Error::Parse("empty SET list".into()));
        }
        let mut assigns: Vec<(usize, Value)> = Vec::with_capacity(set.len());
        let mut assigned = HashSet::new();
        for (col, v) in set {
            let (i, cd) = tdef
                .col(col)
                .ok_or_else(|| Error::UnknownColumn(col.clone()))?;
            if !assigned.insert(i) {
                return Err(Error::Parse(format!("column '{col}' assigned twice")));
            }
            assigns.push((i, coerce_value(v.clone(), cd)?));
        }

        let pred = self.bind_predicate(&tdef, pred_src)?;
        let rp = pred.resolve(&col_names)?;
        let updates: Vec<(Loc, Row, Row)> = self
            .base_rows(table)?
            .into_iter()
            .filter(|(_, r)| rp.matches(r))
            .map(|(loc, old)| {
                let mut new = old.clone();
                for (i, v) in &assigns {
                    new[*i] = v.clone();
                }
                (loc, old, new)
            })
            .collect();
        drop(rp);

        let ctxs: Vec<IxCtx> = self
            .catalog
            .indexes_on(table)
            .into_iter()
            .cloned()
            .map(|d| IxCtx::build(d, &tdef))
            .collect::<Result<_>>()?;

        // Unique pre-check: a key is acceptable if it is new to the index,
        // or currently held by a row this same statement moves away.
        for ctx in &ctxs {
            if !ctx.def.unique {
                continue;
            }
            let filt = ctx.filter(&col_names)?;
            let passes = |r: &Row| filt.as_ref().map(|f| f.matches(r)).unwrap_or(true);
            let outgoing: HashSet<Vec<u8>> = updates
                .iter()
                .filter(|(_, old, _)| passes(old))
                .map(|(_, old, _)| ctx.user_key(old))
                .collect::<Result<_>>()?;
            let mut landed: HashSet<Vec<u8>> = HashSet::new();
            for (_, _, new) in &updates {
                if !passes(new) {
                    continue;
                }
                let user = ctx.user_key(new)?;
                let taken = !outgoing.contains(&user) && self.key_occupied(&ctx.def, &user)?;
                if taken || !landed.insert(user) {
                    return Err(Error::DuplicateKey {
                        index: ctx.def.name.clone(),
                        key: row_tuple(&project(new, &ctx.key_pos)),
                    });
                }
            }
        }

        let clustered_name = match &tdef.organization {
            Organization::Clustered { index } => Some(index.clone()),
            Organization::Heap { .. } => None,
        };
        let (base_ctx, sec_ctxs): (Vec<IxCtx>, Vec<IxCtx>) = ctxs
            .into_iter()
            .partition(|c| Some(&c.def.name) == clustered_name.as_ref());
        let base_ctx = base_ctx.into_iter().next();
        let filts: Vec<Option<ResolvedPredicate<'_>>> = sec_ctxs
            .iter()
            .map(|c| c.filter(&col_names))
            .collect::<Result<_>>()?;

        let mut trees: HashMap<String, BTree> = HashMap::new();
        let mut next_u = tdef.next_uniquifier;
        for (loc, old, new) in &updates {
            let key_moved = match &base_ctx {
                Some(c) => c.user_key(old)? != c.user_key(new)?,
                None => false,
            };
            if key_moved {
                // The row's clustered key changed, so the row moves and
                // every locator with it: a full delete + reinsert, traced
                // as such.
                let c = base_ctx.as_ref().unwrap();
                for (sc, filt) in sec_ctxs.iter().zip(&filts) {
                    self.unindex_row(sc, filt.as_ref(), old, loc, &mut trees)?;
                }
                let stored_old = match loc {
                    Loc::Key(k) => k,
                    Loc::Rid(_) => {
                        return Err(Error::Corrupt("rid locator on a clustered table".into()))
                    }
                };
                let user = c.user_key(new)?;
                let stored_new = if c.def.unique {
                    user.clone()
                } else {
                    let mut s = user.clone();
                    s.extend_from_slice(&next_u.to_be_bytes());
                    next_u += 1;
                    s
                };
                {
                    let tree = trees
                        .entry(c.def.name.clone())
                        .or_insert_with(|| open_tree(&c.def));
                    tree.delete(&mut self.pager, stored_old)?;
                    tree.insert(
                        &mut self.pager,
                        IndexEntry::new(stored_new.clone(), user.len(), encode_row(&types, new)?),
                    )
                    .map_err(|e| named_dup(e, &c.def.name))?;
                }
                let new_loc = Loc::Key(stored_new);
                for (sc, filt) in sec_ctxs.iter().zip(&filts) {
                    self.index_row(sc, filt.as_ref(), new, &new_loc, &mut trees)?;
                }
                self.trace
                    .emit(EventKind::Delete, table, &format!("row={}", row_tuple(old)))?;
                self.trace
                    .emit(EventKind::Insert, table, &format!("row={}", row_tuple(new)))?;
                continue;
            }

            // In-place update: the locator survives, and only indexes whose
            // entries actually change are touched.
            let img = encode_row(&types, new)?;
            match loc {
                Loc::Rid(rid) => {
                    let heap = self.heaps.get_mut(table).ok_or_else(|| {
                        Error::Corrupt(format!("no heap handle for '{table}'"))
                    })?;
                    heap.update(&mut self.pager, *rid, &img)?;
                }
                Loc::Key(stored) => {
                    let c = base_ctx.as_ref().ok_or_else(|| {
                        Error::Corrupt("key locator on a heap table".into())
                    })?;
                    let user_len = c.user_key(old)?.len();
                    let tree = trees
                        .entry(c.def.name.clone())
                        .or_insert_with(|| open_tree(&c.def));
                    tree.update_payload(&mut self.pager, stored, user_len, &img)?;
                }
            }
            for (sc, filt) in sec_ctxs.iter().zip(&filts) {
                let changed = match sc.def.kind {
                    IndexKind::NonClustered => {
                        let e_old = sc.nc_entry(filt.as_ref(), old, loc)?;
                        let e_new = sc.nc_entry(filt.as_ref(), new, loc)?;
                        match (&e_old, &e_new) {
                            (None, None) => false,
                            (Some(a), Some(b)) if a.key == b.key && a.payload == b.payload => {
                                false
                            }
                            _ => {
                                if let Some(e) = e_old {
                                    let tree = trees
                                        .entry(sc.def.name.clone())
                                        .or_insert_with(|| open_tree(&sc.def));
                                    tree.delete(&mut self.pager, &e.key)
                                        .map_err(|err| out_of_sync(err, &sc.def.name))?;
                                }
                                if let Some(e) = e_new {
                                    let tree = trees
                                        .entry(sc.def.name.clone())
                                        .or_insert_with(|| open_tree(&sc.def));
                                    tree.insert(&mut self.pager, e)
                                        .map_err(|e| named_dup(e, &sc.def.name))?;
                                }
                                true
                            }
                        }
                    }
                    IndexKind::Hash => {
                        let k_old = sc.user_key(old)?;
                        let k_new = sc.user_key(new)?;
                        if k_old == k_new {
                            false
                        } else {
                            let h = self.hashes.get_mut(&sc.def.name).ok_or_else(|| {
                                Error::Corrupt(format!("no hash handle for '{}'", sc.def.name))
                            })?;
                            h.delete(&k_old, &loc.bytes())
                                .map_err(|err| out_of_sync(err, &sc.def.name))?;
                            h.insert(k_new, loc.bytes())
                                .map_err(|e| named_dup(e, &sc.def.name))?;
                            true
                        }
                    }
                    IndexKind::Columnstore => {
                        let p_old = project(old, &sc.key_pos);
                        let p_new = project(new, &sc.key_pos);
                        let same = p_old.len() == p_new.len()
                            && p_old.iter().zip(&p_new).all(|(a, b)| a.total_eq(b));
                        if same {
                            false
                        } else {
                            let cs = self.stores.get_mut(&sc.def.name).ok_or_else(|| {
                                Error::Corrupt(format!(
                                    "no columnstore handle for '{}'",
                                    sc.def.name
                                ))
                            })?;
                            if !cs.delete(&mut self.pager, &loc.bytes())? {
                                return Err(Error::Corrupt(format!(
                                    "index '{}' is missing a row the base table has",
                                    sc.def.name
                                )));
                            }
                            cs.append(loc.bytes(), p_new)?;
                            true
                        }
                    }
                    IndexKind::Clustered => {
                        return Err(Error::Corrupt(
                            "clustered index enumerated as secondary".into(),
                        ))
                    }
                };
                if changed {
                    self.trace.emit(
                        EventKind::IndexMaintain,
                        table,
                        &format!("index={}", sc.def.name),
                    )?;
                }
            }
            self.trace.emit(
                EventKind::UpdateInPlace,
                table,
                &format!("old={} new={}", row_tuple(old), row_tuple(new)),
            )?;
        }
        if updates.is_empty() {
            self.trace.emit(EventKind::UpdateInPlace, table, "rows=0")?;
        }

        for (name, tree) in trees {
            let d = self.catalog.index_mut(&name)?;
            d.root = tree.root;
            d.first_leaf = tree.first_leaf;
        }
        self.catalog.table_mut(table)?.next_uniquifier = next_u;
        self.run_tuple_mover(table)?;
        self.persist(Some(table))?;
        Ok(updates.len() as u64)
    }

    /// Add one row's entry to a secondary index.
    fn index_row(
        &mut self,
        c: &IxCtx,
        filt: Option<&ResolvedPredicate<'_>>,
        row: &Row,
        loc: &Loc,
        trees: &mut HashMap<String, BTree>,
    ) -> Result<()> {
        match c.def.kind {
            IndexKind::NonClustered => {
                if let Some(e) = c.nc_entry(filt, row, loc)? {
                    let tree = trees
                        .entry(c.def.name.clone())
                        .or_insert_with(|| open_tree(&c.def));
                    tree.insert(&mut self.pager, e)
                        .map_err(|e| named_dup(e, &c.def.name))?;
                }
            }
            IndexKind::Hash => {
                let h = self.hashes.get_mut(&c.def.name).ok_or_else(|| {
                    Error::Corrupt(format!("no hash handle for '{}'", c.def.name))
                })?;
                h.insert(c.user_key(row)?, loc.bytes())
                    .map_err(|e| named_dup(e, &c.def.name))?;
            }
            IndexKind::Columnstore => {
                let cs = self.stores.get_mut(&c.def.name).ok_or_else(|| {
                    Error::Corrupt(format!("no columnstore handle for '{}'", c.def.name))
                })?;
                cs.append(loc.bytes(), project(row, &c.key_pos))?;
            }
            IndexKind::Clustered => {
                return Err(Error::Corrupt(
                    "clustered index enumerated as secondary".into(),
                ))
            }
        }
        Ok(())
    }

    // ---- consistency ----

    /// Re-derive every index from its base table and compare against the
    /// stored structures, entry by entry. Any divergence is Corrupt.
    pub fn audit(&mut self) -> Result<()> {
        let tables = self.catalog.tables.clone();
        for tdef in &tables {
            let col_names = tdef.col_names();
            let rows = self.base_rows(&tdef.name)?;
            let defs: Vec<IndexDef> = self
                .catalog
                .indexes_on(&tdef.name)
                .into_iter()
                .cloned()
                .collect();
            for def in defs {
                match def.kind {
                    IndexKind::Clustered => {
                        let tree = open_tree(&def);
                        if let Some(v) = tree.validate(&mut self.pager)? {
                            return Err(Error::Corrupt(format!("index '{}': {v}", def.name)));
                        }
                        let (_, entries) = tree.leaf_stats(&mut self.pager)?;
                        if entries != rows.len() as u64 {
                            return Err(Error::Corrupt(format!(
                                "index '{}' holds {entries} entries for {} rows",
                                def.name,
                                rows.len()
                            )));
                        }
                    }
                    IndexKind::NonClustered => {
                        let ctx = IxCtx::build(def, tdef)?;
                        let filt = ctx.filter(&col_names)?;
                        let mut expected = Vec::new();
                        for (loc, row) in &rows {
                            if let Some(e) = ctx.nc_entry(filt.as_ref(), row, loc)? {
                                expected.push((e.key, e.payload));
                            }
                        }
                        expected.sort();
                        let tree = open_tree(&ctx.def);
                        if let Some(v) = tree.validate(&mut self.pager)? {
                            return Err(Error::Corrupt(format!("index '{}': {v}", ctx.def.name)));
                        }
                        let mut actual = Vec::new();
                        for item in tree.range(&mut self.pager, Lo::First, Hi::Last)? {
                            actual.push(item?);
                        }
                        if expected != actual {
                            return Err(Error::Corrupt(format!(
                                "index '{}' diverges from its base table ({} entries vs {} expected)",
                                ctx.def.name,
                                actual.len(),
                                expected.len()
                            )));
                        }
                    }
                    IndexKind::Hash => {
                        let ctx = IxCtx::build(def, tdef)?;
                        let mut expected = Vec::new();
                        for (loc, row) in &rows {
                            expected.push((ctx.user_key(row)?, loc.bytes()));
                        }
                        expected.sort();
                        let h = self.hashes.get(&ctx.def.name).ok_or_else(|| {
                            Error::Corrupt(format!("no hash handle for '{}'", ctx.def.name))
                        })?;
                        let mut actual: Vec<(Vec<u8>, Vec<u8>)> = h
                            .iter()
                            .map(|(k, l)| (k.to_vec(), l.to_vec()))
                            .collect();
                        actual.sort();
                        if expected != actual {
                            return Err(Error::Corrupt(format!(
                                "index '{}' diverges from its base table ({} entries vs {} expected)",
                                ctx.def.name,
                                actual.len(),
                                expected.len()
                            )));
                        }
                    }
                    IndexKind::Columnstore => {
                        let ctx = IxCtx::build(def, tdef)?;
                        let mut expected: Vec<(Vec<u8>, String)> = rows
                            .iter()
                            .map(|(loc, row)| {
                                (loc.bytes(), row_tuple(&project(row, &ctx.key_pos)))
                            })
                            .collect();
                        expected.sort();
                        let cs = self.stores.get(&ctx.def.name).ok_or_else(|| {
                            Error::Corrupt(format!("no columnstore handle for '{}'", ctx.def.name))
                        })?;
                        let mut actual: Vec<(Vec<u8>, String)> = cs
                            .all_rows(&mut self.pager)?
                            .into_iter()
                            .map(|(loc, vals)| (loc, row_tuple(&vals)))
                            .collect();
                        actual.sort();
                        if expected != actual {
                            return Err(Error::Corrupt(format!(
                                "index '{}' diverges from its base table ({} rows vs {} expected)",
                                ctx.def.name,
                                actual.len(),
                                expected.len()
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// An index delete/lookup that failed because the entry was not there
/// means the index no longer agrees with its base table.
fn out_of_sync(e: Error, index: &str) -> Error {
    match e {
        Error::EntryNotFound => Error::Corrupt(format!(
            "index '{index}' is missing a row the base table has"
        )),
        other => other,
    }
}

fn normalize_row(t: &TableDef, row: Row) -> Result<Row> {
    if row.len() != t.cols.len() {
        return Err(Error::SchemaMismatch(format!(
            "table '{}' has {} columns, row has {}",
            t.name,
            t.cols.len(),
            row.len()
        )));
    }
    row.into_iter()
        .zip(&t.cols)
        .map(|(v, c)| coerce_value(v, c))
        .collect()
}

fn coerce_value(v: Value, c: &ColumnDef) -> Result<Value> {
    match (&v, c.ty) {
        (Value::Null, _) => {
            if c.nullable {
                Ok(v)
            } else {
                Err(Error::SchemaMismatch(format!("column '{}' is NOT NULL", c.name)))
            }
        }
        (Value::Int(i), ColumnType::Float64) => Ok(Value::Float(*i as f64)),
        _ if v.matches_type(c.ty) => Ok(v),
        _ => Err(Error::TypeMismatch(format!(
            "column '{}' expects {}, got {}",
            c.name,
            c.ty.name(),
            v.to_literal()
        ))),
    }
}

/// Parse `col = literal, col = literal, ...` into SET assignments.
pub fn parse_assignments(src: &str) -> Result<Vec<(String, Value)>> {
    let mut cur = crate::predicate::Cursor::new(src);
    let mut out = Vec::new();
    loop {
        let col = cur.ident()?;
        if !cur.punct('=') {
            return Err(Error::Parse(format!("expected '=' after '{col}'")));
        }
        out.push((col, cur.literal()?));
        if !cur.punct(',') {
            break;
        }
    }
    cur.expect_end()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::read_events;
    use tempfile::TempDir;

    fn col(name: &str, ty: ColumnType) -> ColumnDef {
        ColumnDef { name: name.to_string(), ty, nullable: true }
    }

    fn i(v: i64) -> Value {
        Value::Int(v)
    }

    fn s(v: &str) -> Value {
        Value::Str(v.to_string())
    }

    fn orders_schema() -> Vec<ColumnDef> {
        vec![
            col("id", ColumnType::Int64),
            col("customer", ColumnType::String),
            col("qty", ColumnType::Int64),
            col("note", ColumnType::String),
        ]
    }

    fn order(id: i64, customer: &str, qty: i64) -> Row {
        vec![i(id), s(customer), i(qty), s("x")]
    }

    struct Db {
        dir: TempDir,
    }

    impl Db {
        fn new() -> Db {
            Db { dir: TempDir::new().unwrap() }
        }

        fn path(&self) -> PathBuf {
            self.dir.path().join("t.pdex")
        }

        fn create(&self) -> Engine {
            Engine::create_with(&self.path(), true).unwrap()
        }

        fn open(&self) -> Engine {
            Engine::open_with(&self.path(), true).unwrap()
        }
    }

    #[test]
    fn heap_table_roundtrip_survives_reopen() {
        let db = Db::new();
        {
            let mut e = db.create();
            e.create_table("orders", orders_schema(), None).unwrap();
            let n = e
                .insert_rows("orders", vec![order(1, "ada", 5), order(2, "bob", 3)])
                .unwrap();
            assert_eq!(n, 2);
        }
        let mut e = db.open();
        let rows = e.base_rows("orders").unwrap();
        assert_eq!(rows.len(), 2);
        assert!(matches!(rows[0].0, Loc::Rid(_)));
        assert!(rows[0].1[0].total_eq(&i(1)));
        assert!(rows[1].1[1].total_eq(&s("bob")));
        e.audit().unwrap();
    }

    #[test]
    fn second_open_is_locked_out() {
        let db = Db::new();
        let e = db.create();
        let err = Engine::open(&db.path()).err().unwrap();
        assert!(matches!(err, Error::DatabaseLocked(_)));
        drop(e);
        Engine::open(&db.path()).unwrap();
    }

    #[test]
    fn primary_key_builds_clustered_base_and_rejects_duplicates() {
        let db = Db::new();
        let mut e = db.create();
        e.create_table("orders", orders_schema(), Some(vec!["id".into()]))
            .unwrap();
        let t = e.catalog().table("orders").unwrap();
        assert!(t.is_clustered());
        assert!(!t.cols[0].nullable);
        e.insert_rows("orders", vec![order(2, "bob", 3), order(1, "ada", 5)])
            .unwrap();
        // clustered order, not insertion order
        let rows = e.base_rows("orders").unwrap();
        assert!(rows[0].1[0].total_eq(&i(1)));

        let err = e.insert("orders", order(2, "eve", 9)).unwrap_err();
        match err {
            Error::DuplicateKey { index, key } => {
                assert_eq!(index, "pk_orders");
                assert_eq!(key, "(2)");
            }
            other => panic!("wrong error: {other}"),
        }
        // NULL pk rejected
        let err = e
            .insert("orders", vec![Value::Null, s("x"), i(1), s("x")])
            .unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
        e.audit().unwrap();
    }

    #[test]
    fn batch_with_duplicate_inside_inserts_nothing() {
        let db = Db::new();
        let mut e = db.create();
        e.create_table("orders", orders_schema(), Some(vec!["id".into()]))
            .unwrap();
        e.insert("orders", order(1, "ada", 5)).unwrap();
        let err = e
            .insert_rows(
                "orders",
                vec![order(10, "new", 1), order(11, "new", 1), order(10, "dup", 2)],
            )
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { .. }));
        assert_eq!(e.base_rows("orders").unwrap().len(), 1);
        e.audit().unwrap();
    }

    #[test]
    fn secondary_indexes_stay_in_sync_through_dml() {
        let db = Db::new();
        let mut e = db.create();
        e.create_table("orders", orders_schema(), Some(vec!["id".into()]))
            .unwrap();
        for id in 0..200 {
            e.insert("orders", order(id, &format!("c{}", id % 7), id % 13))
                .unwrap();
        }
        e.create_index(IndexSpec::new(
            "ix_customer",
            "orders",
            IndexKind::NonClustered,
            vec!["customer".into()],
        ))
        .unwrap();
        let mut hash_spec = IndexSpec::new(
            "hx_qty",
            "orders",
            IndexKind::Hash,
            vec!["qty".into()],
        );
        hash_spec.buckets = 64;
        e.create_index(hash_spec).unwrap();
        e.create_index(IndexSpec::new(
            "cs_orders",
            "orders",
            IndexKind::Columnstore,
            vec!["id".into(), "qty".into()],
        ))
        .unwrap();
        e.audit().unwrap();

        e.update_where("orders", "qty = 5", &[("note".into(), s("flagged"))])
            .unwrap();
        e.audit().unwrap();
        e.update_where("orders", "id = 17", &[("customer".into(), s("zed"))])
            .unwrap();
        e.audit().unwrap();
        let n = e.delete_where("orders", "customer = 'c3'").unwrap();
        assert!(n > 0);
        e.audit().unwrap();
        // key-change update on the clustered key: delete + reinsert
        e.update_where("orders", "id = 0", &[("id".into(), i(1000))])
            .unwrap();
        e.audit().unwrap();

        drop(e);
        let mut e = db.open();
        e.audit().unwrap();
    }

    #[test]
    fn filtered_index_only_carries_matching_rows() {
        let db = Db::new();
        let mut e = db.create();
        e.create_table("orders", orders_schema(), None).unwrap();
        for id in 0..50 {
            let qty = if id % 5 == 0 { Value::Null } else { i(id % 10) };
            e.insert("orders", vec![i(id), s("c"), qty, s("x")]).unwrap();
        }
        let mut spec = IndexSpec::new(
            "ix_qty_notnull",
            "orders",
            IndexKind::NonClustered,
            vec!["qty".into()],
        );
        spec.filter = Some("qty IS NOT NULL".into());
        e.create_index(spec).unwrap();
        let def = e.catalog().index("ix_qty_notnull").unwrap().clone();
        let tree = open_tree(&def);
        let (_, entries) = tree.leaf_stats(&mut e.pager).unwrap();
        assert_eq!(entries, 40);
        e.audit().unwrap();

        // row leaves the filter: entry disappears
        e.update_where("orders", "id = 1", &[("qty".into(), Value::Null)])
            .unwrap();
        let (_, entries) = open_tree(&def).leaf_stats(&mut e.pager).unwrap();
        assert_eq!(entries, 39);
        // row enters the filter: entry appears
        e.update_where("orders", "id = 5", &[("qty".into(), i(7))])
            .unwrap();
        let (_, entries) = open_tree(&def).leaf_stats(&mut e.pager).unwrap();
        assert_eq!(entries, 40);
        e.audit().unwrap();
    }

    #[test]
    fn unique_nonclustered_treats_nulls_as_equal() {
        let db = Db::new();
        let mut e = db.create();
        e.create_table("orders", orders_schema(), None).unwrap();
        let mut spec = IndexSpec::new(
            "ux_qty",
            "orders",
            IndexKind::NonClustered,
            vec!["qty".into()],
        );
        spec.unique = true;
        e.create_index(spec).unwrap();
        e.insert("orders", vec![i(1), s("a"), Value::Null, s("x")])
            .unwrap();
        let err = e
            .insert("orders", vec![i(2), s("b"), Value::Null, s("x")])
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { .. }));
    }

    #[test]
    fn clustered_conversion_and_back() {
        let db = Db::new();
        let mut e = db.create();
        e.create_table("orders", orders_schema(), None).unwrap();
        for id in 0..300 {
            e.insert("orders", order(id, &format!("c{}", id % 11), id % 6))
                .unwrap();
        }
        e.create_index(IndexSpec::new(
            "ix_customer",
            "orders",
            IndexKind::NonClustered,
            vec!["customer".into()],
        ))
        .unwrap();
        let mut hs = IndexSpec::new("hx_id", "orders", IndexKind::Hash, vec!["id".into()]);
        hs.buckets = 128;
        e.create_index(hs).unwrap();
        e.audit().unwrap();

        // heap -> clustered: locators become keys, secondaries rebuilt
        let mut cl = IndexSpec::new(
            "cx_orders",
            "orders",
            IndexKind::Clustered,
            vec!["customer".into()],
        );
        cl.fill_factor = 0.9;
        e.create_index(cl).unwrap();
        assert!(e.catalog().table("orders").unwrap().is_clustered());
        let rows = e.base_rows("orders").unwrap();
        assert_eq!(rows.len(), 300);
        assert!(matches!(rows[0].0, Loc::Key(_)));
        e.audit().unwrap();

        // second clustered rejected
        let err = e
            .create_index(IndexSpec::new(
                "cx2",
                "orders",
                IndexKind::Clustered,
                vec!["id".into()],
            ))
            .unwrap_err();
        assert!(matches!(err, Error::SecondClusteredIndex(_)));

        // DML against the clustered base keeps everything consistent
        e.delete_where("orders", "id BETWEEN 10 AND 20").unwrap();
        e.update_where("orders", "id = 100", &[("customer".into(), s("moved"))])
            .unwrap();
        e.audit().unwrap();

        // clustered -> heap again
        e.drop_index("cx_orders").unwrap();
        assert!(!e.catalog().table("orders").unwrap().is_clustered());
        let rows = e.base_rows("orders").unwrap();
        assert_eq!(rows.len(), 289);
        assert!(matches!(rows[0].0, Loc::Rid(_)));
        e.audit().unwrap();

        drop(e);
        let mut e = db.open();
        e.audit().unwrap();
    }

    #[test]
    fn update_can_swap_unique_keys_within_one_statement() {
        let db = Db::new();
        let mut e = db.create();
        e.create_table("orders", orders_schema(), Some(vec!["id".into()]))
            .unwrap();
        e.insert_rows("orders", vec![order(1, "a", 10), order(2, "b", 20)])
            .unwrap();
        // shift both keys up by one: 2 must not collide with the old 2
        let n = e
            .update_where("orders", "qty > 5", &[("qty".into(), i(0))])
            .unwrap();
        assert_eq!(n, 2);
        // genuine collision still caught
        let err = e
            .update_where("orders", "id = 1", &[("id".into(), i(2))])
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { .. }));
        assert_eq!(e.base_rows("orders").unwrap().len(), 2);
        e.audit().unwrap();
    }

    #[test]
    fn trace_records_statement_shape() {
        let db = Db::new();
        let mut e = db.create();
        e.create_table("orders", orders_schema(), Some(vec!["id".into()]))
            .unwrap();
        e.create_index(IndexSpec::new(
            "ix_qty",
            "orders",
            IndexKind::NonClustered,
            vec!["qty".into()],
        ))
        .unwrap();
        e.insert_rows("orders", vec![order(1, "a", 10), order(2, "b", 20)])
            .unwrap();
        // in-place update touching one secondary
        e.update_where("orders", "id = 1", &[("qty".into(), i(11))])
            .unwrap();
        // in-place update touching no index at all
        e.update_where("orders", "id = 1", &[("note".into(), s("y"))])
            .unwrap();
        // clustered key change: full move
        e.update_where("orders", "id = 2", &[("id".into(), i(3))])
            .unwrap();
        e.delete_where("orders", "id = 999").unwrap();

        let events = read_events(&Trace::path_for(&db.path())).unwrap();
        let shape: Vec<(String, String)> = events
            .iter()
            .map(|ev| (ev.kind.name().to_string(), ev.detail.clone()))
            .collect();
        assert_eq!(shape[0].0, "INSERT");
        assert_eq!(shape[0].1, "row=(1, 'a', 10, 'x')");
        assert_eq!(shape[1].0, "INSERT");
        // update 1: UPDATE_IN_PLACE preceded by exactly one INDEX_MAINTAIN
        assert_eq!(shape[2].0, "INDEX_MAINTAIN");
        assert_eq!(shape[2].1, "index=ix_qty");
        assert_eq!(shape[3].0, "UPDATE_IN_PLACE");
        assert_eq!(shape[3].1, "old=(1, 'a', 10, 'x') new=(1, 'a', 11, 'x')");
        // update 2: no index touched, no INDEX_MAINTAIN
        assert_eq!(shape[4].0, "UPDATE_IN_PLACE");
        // update 3: key change becomes DELETE + INSERT
        assert_eq!(shape[5].0, "DELETE");
        assert_eq!(shape[6].0, "INSERT");
        assert_eq!(shape[6].1, "row=(3, 'b', 20, 'x')");
        // empty delete still emits one event
        assert_eq!(shape[7].0, "DELETE");
        assert_eq!(shape[7].1, "rows=0");
        assert_eq!(events.len(), 8);
    }

    #[test]
    fn deltastore_drains_through_tuple_mover() {
        let db = Db::new();
        let mut e = db.create();
        e.create_table(
            "m",
            vec![col("k", ColumnType::Int64), col("v", ColumnType::Int64)],
            None,
        )
        .unwrap();
        e.create_index(IndexSpec::new(
            "cs_m",
            "m",
            IndexKind::Columnstore,
            vec!["k".into(), "v".into()],
        ))
        .unwrap();
        let rows: Vec<Row> = (0..5000).map(|k| vec![i(k), i(k % 3)]).collect();
        e.insert_rows("m", rows).unwrap();
        let cs = &e.stores["cs_m"];
        assert_eq!(cs.total_rows(), 5000);
        assert_eq!(cs.rowgroups.len(), 1);
        assert_eq!(cs.delta.len(), 5000 - 4096);
        let events = read_events(&Trace::path_for(&db.path())).unwrap();
        assert!(events
            .iter()
            .any(|ev| ev.kind.name() == "TUPLE_MOVE" && ev.detail == "index=cs_m rows=4096"));
        e.audit().unwrap();
        drop(e);
        let mut e = db.open();
        e.audit().unwrap();
    }

    #[test]
    fn assignments_parse() {
        let set = parse_assignments("qty = 5, note = 'it''s'").unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set[0].0, "qty");
        assert!(set[0].1.total_eq(&i(5)));
        assert!(set[1].1.total_eq(&s("it's")));
        assert!(parse_assignments("qty = ").is_err());
        assert!(parse_assignments("qty = 5,").is_err());
    }

    #[test]
    fn type_and_arity_validation() {
        let db = Db::new();
        let mut e = db.create();
        e.create_table("orders", orders_schema(), None).unwrap();
        assert!(matches!(
            e.insert("orders", vec![i(1), s("a")]).unwrap_err(),
            Error::SchemaMismatch(_)
        ));
        assert!(matches!(
            e.insert("orders", vec![s("one"), s("a"), i(1), s("x")]).unwrap_err(),
            Error::TypeMismatch(_)
        ));
        // int literal into a float column widens
        e.create_table(
            "f",
            vec![col("x", ColumnType::Float64)],
            None,
        )
        .unwrap();
        e.insert("f", vec![i(3)]).unwrap();
        assert!(e.base_rows("f").unwrap()[0].1[0].total_eq(&Value::Float(3.0)));
    }

    #[test]
    fn index_definition_validation() {
        let db = Db::new();
        let mut e = db.create();
        e.create_table(
            "t",
            vec![
                col("a", ColumnType::Int64),
                col("b", ColumnType::Blob),
            ],
            None,
        )
        .unwrap();
        let err = e
            .create_index(IndexSpec::new("x1", "t", IndexKind::NonClustered, vec!["b".into()]))
            .unwrap_err();
        assert!(matches!(err, Error::BlobKeyColumn(_)));
        let err = e
            .create_index(IndexSpec::new("x2", "t", IndexKind::NonClustered, vec![]))
            .unwrap_err();
        assert!(matches!(err, Error::InvalidIndexDef(_)));
        let mut spec = IndexSpec::new("x3", "t", IndexKind::Hash, vec!["a".into()]);
        spec.filter = Some("a > 1".into());
        assert!(matches!(
            e.create_index(spec).unwrap_err(),
            Error::InvalidIndexDef(_)
        ));
        let mut spec = IndexSpec::new("x4", "t", IndexKind::Columnstore, vec!["a".into()]);
        spec.unique = true;
        assert!(matches!(
            e.create_index(spec).unwrap_err(),
            Error::InvalidIndexDef(_)
        ));
        // failed creation leaves no catalog entry
        assert!(e.catalog().index("x1").is_err());
    }

    #[test]
    fn create_index_duplicate_key_leaves_catalog_unchanged() {
        let db = Db::new();
        let mut e = db.create();
        e.create_table("orders", orders_schema(), None).unwrap();
        e.insert_rows("orders", vec![order(1, "a", 5), order(2, "b", 5)])
            .unwrap();
        let mut spec = IndexSpec::new(
            "ux_qty",
            "orders",
            IndexKind::NonClustered,
            vec!["qty".into()],
        );
        spec.unique = true;
        let err = e.create_index(spec).unwrap_err();
        match err {
            Error::DuplicateKey { index, .. } => assert_eq!(index, "ux_qty"),
            other => panic!("wrong error: {other}"),
        }
        assert!(e.catalog().index("ux_qty").is_err());
        e.audit().unwrap();
    }
}
