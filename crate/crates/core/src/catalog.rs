//! The catalog: every table and index definition, serialized as one blob
//! and chunked one record per page across a chain of catalog pages. The
//! database header points at the chain head. Saving reuses the existing
//! chain and extends or truncates it; pages cut loose by a shrinking
//! catalog are orphaned, consistent with the no-reclamation storage policy.

use crate::error::{Error, Result};
use crate::page::{PageId, PageKind, MAX_RECORD};
use crate::pager::{read_chain, rewrite_chain, Pager};
use crate::predicate::Predicate;
use crate::value::ColumnType;
use crate::wire::{Reader, Writer};

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDef {
    pub name: String,
    pub ty: ColumnType,
    pub nullable: bool,
}

/// How a table's rows are stored: a heap of unordered pages, or the leaf
/// level of a clustered index (named, so the IndexDef holds the tree).
#[derive(Debug, Clone, PartialEq)]
pub enum Organization {
    Heap { first_page: PageId },
    Clustered { index: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableDef {
    pub name: String,
    pub cols: Vec<ColumnDef>,
    pub organization: Organization,
    /// Next suffix for non-unique clustered keys; monotone, never reused.
    pub next_uniquifier: u64,
}

impl TableDef {
    pub fn col(&self, name: &str) -> Option<(usize, &ColumnDef)> {
        self.cols
            .iter()
            .enumerate()
            .find(|(_, c)| c.name == name)
    }

    pub fn col_type(&self, name: &str) -> Option<ColumnType> {
        self.col(name).map(|(_, c)| c.ty)
    }

    pub fn col_names(&self) -> Vec<String> {
        self.cols.iter().map(|c| c.name.clone()).collect()
    }

    pub fn col_types(&self) -> Vec<ColumnType> {
        self.cols.iter().map(|c| c.ty).collect()
    }

    pub fn is_clustered(&self) -> bool {
        matches!(self.organization, Organization::Clustered { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Clustered,
    NonClustered,
    Hash,
    Columnstore,
}

impl IndexKind {
    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Clustered => "clustered",
            IndexKind::NonClustered => "nonclustered",
            IndexKind::Hash => "hash",
            IndexKind::Columnstore => "columnstore",
        }
    }

    fn tag(self) -> u8 {
        match self {
            IndexKind::Clustered => 0,
            IndexKind::NonClustered => 1,
            IndexKind::Hash => 2,
            IndexKind::Columnstore => 3,
        }
    }

    fn from_tag(v: u8) -> Result<Self> {
        Ok(match v {
            0 => IndexKind::Clustered,
            1 => IndexKind::NonClustered,
            2 => IndexKind::Hash,
            3 => IndexKind::Columnstore,
            other => return Err(Error::Corrupt(format!("bad index kind tag {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexDef {
    pub name: String,
    pub table: String,
    pub kind: IndexKind,
    pub key_cols: Vec<String>,
    /// Extra columns carried in nonclustered leaf payloads.
    pub include: Vec<String>,
    /// Rows the index covers; None means all rows.
    pub filter: Option<Predicate>,
    pub unique: bool,
    /// Leaf fill fraction targeted by bulk build.
    pub fill_factor: f64,
    /// Hash only: actual (power-of-two) bucket count.
    pub buckets: u64,
    /// B-tree only: root (stable for the index's lifetime) and leftmost leaf.
    pub root: PageId,
    pub first_leaf: PageId,
    /// Columnstore only: head of the directory page chain.
    pub meta_page: PageId,
}

impl IndexDef {
    /// Columns available inside the index without touching the base table.
    pub fn carried_cols(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.key_cols.iter().map(String::as_str).collect();
        for c in &self.include {
            if !out.contains(&c.as_str()) {
                out.push(c);
            }
        }
        out
    }
}

#[derive(Debug)]
pub struct Catalog {
    pub tables: Vec<TableDef>,
    pub indexes: Vec<IndexDef>,
    /// Head of the on-disk page chain; NONE until first saved.
    pub head: PageId,
}

impl Default for Catalog {
    fn default() -> Catalog {
        Catalog { tables: Vec::new(), indexes: Vec::new(), head: PageId::NONE }
    }
}

impl Catalog {
    pub fn new() -> Catalog {
        Catalog::default()
    }

    pub fn table(&self, name: &str) -> Result<&TableDef> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn table_mut(&mut self, name: &str) -> Result<&mut TableDef> {
        self.tables
            .iter_mut()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn index(&self, name: &str) -> Result<&IndexDef> {
        self.indexes
            .iter()
            .find(|i| i.name == name)
            .ok_or_else(|| Error::UnknownIndex(name.to_string()))
    }

    pub fn index_mut(&mut self, name: &str) -> Result<&mut IndexDef> {
        self.indexes
            .iter_mut()
            .find(|i| i.name == name)
            .ok_or_else(|| Error::UnknownIndex(name.to_string()))
    }

    /// Indexes on one table, in creation order.
    pub fn indexes_on<'c>(&'c self, table: &str) -> Vec<&'c IndexDef> {
        self.indexes.iter().filter(|i| i.table == table).collect()
    }

    pub fn clustered_index_of(&self, table: &str) -> Option<&IndexDef> {
        self.indexes
            .iter()
            .find(|i| i.table == table && i.kind == IndexKind::Clustered)
    }

    pub fn add_table(&mut self, t: TableDef) -> Result<()> {
        if self.tables.iter().any(|x| x.name == t.name) {
            return Err(Error::DuplicateName(t.name));
        }
        self.tables.push(t);
        Ok(())
    }

    pub fn add_index(&mut self, i: IndexDef) -> Result<()> {
        if self.indexes.iter().any(|x| x.name == i.name) {
            return Err(Error::DuplicateName(i.name));
        }
        self.indexes.push(i);
        Ok(())
    }

    pub fn remove_index(&mut self, name: &str) -> Result<IndexDef> {
        let pos = self
            .indexes
            .iter()
            .position(|i| i.name == name)
            .ok_or_else(|| Error::UnknownIndex(name.to_string()))?;
        Ok(self.indexes.remove(pos))
    }

    // ---- persistence ----

    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u16(self.tables.len() as u16);
        for t in &self.tables {
            w.string(&t.name);
            w.u16(t.cols.len() as u16);
            for c in &t.cols {
                w.string(&c.name);
                w.u8(type_tag(c.ty));
                w.u8(c.nullable as u8);
            }
            match &t.organization {
                Organization::Heap { first_page } => {
                    w.u8(0);
                    put_page_id(&mut w, *first_page);
                }
                Organization::Clustered { index } => {
                    w.u8(1);
                    w.string(index);
                }
            }
            w.u64(t.next_uniquifier);
        }
        w.u16(self.indexes.len() as u16);
        for i in &self.indexes {
            w.string(&i.name);
            w.string(&i.table);
            w.u8(i.kind.tag());
            w.u8(i.unique as u8);
            w.u16(i.key_cols.len() as u16);
            for c in &i.key_cols {
                w.string(c);
            }
            w.u16(i.include.len() as u16);
            for c in &i.include {
                w.string(c);
            }
            // Filters are stored in their rendered text form and re-parsed
            // at load; the grammar round-trips exactly.
            match &i.filter {
                Some(p) => w.u8(1).string(&p.render()),
                None => w.u8(0),
            };
            w.f64(i.fill_factor);
            w.u64(i.buckets);
            put_page_id(&mut w, i.root);
            put_page_id(&mut w, i.first_leaf);
            put_page_id(&mut w, i.meta_page);
        }
        w.into_vec()
    }

    fn from_bytes(buf: &[u8]) -> Result<Catalog> {
        let mut r = Reader::new(buf);
        let mut cat = Catalog::new();
        for _ in 0..r.u16()? {
            let name = r.string()?;
            let mut cols = Vec::new();
            for _ in 0..r.u16()? {
                let cname = r.string()?;
                let ty = type_from_tag(r.u8()?)?;
                let nullable = r.u8()? != 0;
                cols.push(ColumnDef { name: cname, ty, nullable });
            }
            let organization = match r.u8()? {
                0 => Organization::Heap { first_page: get_page_id(&mut r)? },
                1 => Organization::Clustered { index: r.string()? },
                other => return Err(Error::Corrupt(format!("bad organization tag {other}"))),
            };
            let next_uniquifier = r.u64()?;
            cat.tables.push(TableDef { name, cols, organization, next_uniquifier });
        }
        for _ in 0..r.u16()? {
            let name = r.string()?;
            let table = r.string()?;
            let kind = IndexKind::from_tag(r.u8()?)?;
            let unique = r.u8()? != 0;
            let mut key_cols = Vec::new();
            for _ in 0..r.u16()? {
                key_cols.push(r.string()?);
            }
            let mut include = Vec::new();
            for _ in 0..r.u16()? {
                include.push(r.string()?);
            }
            let filter = if r.u8()? != 0 {
                Some(Predicate::parse(&r.string()?)
                    .map_err(|e| Error::Corrupt(format!("stored filter does not parse: {e}")))?)
            } else {
                None
            };
            let fill_factor = r.f64()?;
            let buckets = r.u64()?;
            let root = get_page_id(&mut r)?;
            let first_leaf = get_page_id(&mut r)?;
            let meta_page = get_page_id(&mut r)?;
            cat.indexes.push(IndexDef {
                name,
                table,
                kind,
                key_cols,
                include,
                filter,
                unique,
                fill_factor,
                buckets,
                root,
                first_leaf,
                meta_page,
            });
        }
        if !r.is_empty() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after catalog",
                r.remaining()
            )));
        }
        Ok(cat)
    }

    /// Write the catalog to its page chain, reusing pages in place and
    /// allocating or unlinking at the tail as the blob grows or shrinks.
    /// Updates `self.head`; the caller refreshes the database header when
    /// the head moves (it only moves on the very first save).
    pub fn save(&mut self, pager: &mut Pager) -> Result<()> {
        self.head = rewrite_chain(pager, self.head, PageKind::Catalog, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(pager: &mut Pager, head: PageId) -> Result<Catalog> {
        let bytes = read_chain(pager, head, PageKind::Catalog)?;
        let mut cat = Catalog::from_bytes(&bytes)?;
        cat.head = head;
        Ok(cat)
    }
}

fn type_tag(t: ColumnType) -> u8 {
    match t {
        ColumnType::Int64 => 0,
        ColumnType::Float64 => 1,
        ColumnType::String => 2,
        ColumnType::Blob => 3,
    }
}

fn type_from_tag(v: u8) -> Result<ColumnType> {
    Ok(match v {
        0 => ColumnType::Int64,
        1 => ColumnType::Float64,
        2 => ColumnType::String,
        3 => ColumnType::Blob,
        other => return Err(Error::Corrupt(format!("bad column type tag {other}"))),
    })
}

fn put_page_id(w: &mut Writer, id: PageId) {
    w.u16(id.file_id).u32(id.page_no);
}

fn get_page_id(r: &mut Reader) -> Result<PageId> {
    let file_id = r.u16()?;
    let page_no = r.u32()?;
    Ok(PageId { file_id, page_no })
}
