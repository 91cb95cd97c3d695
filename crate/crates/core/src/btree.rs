//! Paged B+ tree over encoded keys.
//!
//! Entry record: `[u16 klen][u16 user_len][key][payload]`. `key` is the
//! full stored key; for non-unique indexes the engine appends the row
//! locator to the user key so stored keys are strictly unique, and
//! `user_len` marks where the user key ends. Leaf payloads are opaque to
//! the tree; internal payloads are the 6-byte child PageId.
//!
//! Separators are suffix-truncated at the user-key boundary: when a node
//! boundary falls between two distinct user keys, the parent stores just
//! the user-key prefix of the right node's first entry. A point seek for
//! that user key then routes directly to the node where its run starts,
//! which is what makes "seek cost == depth" hold exactly; only a run of
//! duplicates genuinely spanning nodes costs extra sibling hops.
//!
//! The root page id never changes: growing the tree allocates two children
//! and rewrites the root in place one level higher. Shrinking never
//! happens (deletes leave underfull, possibly empty, leaves). `first_leaf`
//! therefore changes only when a root that is itself a leaf splits.
//!
//! Splits pick the byte-balanced split point closest to the middle that
//! leaves both halves within page capacity; entries are capped at
//! [`MAX_ENTRY`] key+payload bytes so a page always holds at least two.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::page::{Page, PageId, PageKind, PAGE_USABLE, SLOT_SIZE};
use crate::pager::Pager;
use crate::wire::{get_u16, put_u16};

/// Per-record framing: u16 key length + u16 user-key length.
pub const REC_OVERHEAD: usize = 4;
/// Largest key+payload: two maximal entries must fit one page.
pub const MAX_ENTRY: usize = PAGE_USABLE / 2 - REC_OVERHEAD - SLOT_SIZE;

/// One index entry: stored key, length of its user-key prefix, payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub key: Vec<u8>,
    pub user_len: usize,
    pub payload: Vec<u8>,
}

impl IndexEntry {
    pub fn new(key: Vec<u8>, user_len: usize, payload: Vec<u8>) -> Self {
        IndexEntry { key, user_len, payload }
    }
}

fn encode_rec(key: &[u8], user_len: usize, payload: &[u8]) -> Vec<u8> {
    let mut rec = Vec::with_capacity(REC_OVERHEAD + key.len() + payload.len());
    rec.extend_from_slice(&[0; REC_OVERHEAD]);
    put_u16(&mut rec, 0, key.len() as u16);
    put_u16(&mut rec, 2, user_len as u16);
    rec.extend_from_slice(key);
    rec.extend_from_slice(payload);
    rec
}

fn rec_key(rec: &[u8]) -> &[u8] {
    let klen = get_u16(rec, 0) as usize;
    &rec[REC_OVERHEAD..REC_OVERHEAD + klen]
}

fn rec_user_len(rec: &[u8]) -> usize {
    get_u16(rec, 2) as usize
}

fn rec_payload(rec: &[u8]) -> &[u8] {
    let klen = get_u16(rec, 0) as usize;
    &rec[REC_OVERHEAD + klen..]
}

fn key_at(page: &Page, i: usize) -> &[u8] {
    rec_key(page.record(i).expect("btree pages have no tombstones"))
}

fn child_at(page: &Page, i: usize) -> PageId {
    let rec = page.record(i).expect("btree pages have no tombstones");
    PageId::read_from(rec_payload(rec), 0)
}

/// Decode the record at slot `i` of a btree page. Also serves inspection
/// tools that dump pages without going through a tree handle.
pub fn entry_at(page: &Page, i: usize) -> IndexEntry {
    let rec = page.record(i).expect("btree pages have no tombstones");
    IndexEntry {
        key: rec_key(rec).to_vec(),
        user_len: rec_user_len(rec),
        payload: rec_payload(rec).to_vec(),
    }
}

fn decode_entries(page: &Page) -> Vec<IndexEntry> {
    (0..page.slot_count()).map(|i| entry_at(page, i)).collect()
}

/// First slot whose key is >= target.
fn lower_bound(page: &Page, target: &[u8]) -> usize {
    let (mut l, mut r) = (0, page.slot_count());
    while l < r {
        let m = (l + r) / 2;
        if key_at(page, m) < target {
            l = m + 1;
        } else {
            r = m;
        }
    }
    l
}

/// Child index to descend into: the last separator <= target, clamped to
/// entry 0 (whose key is only a decoration; parent routing already
/// guarantees every key reaching this node belongs at or after it).
fn route(page: &Page, target: &[u8]) -> usize {
    let (mut l, mut r) = (0, page.slot_count());
    while l < r {
        let m = (l + r) / 2;
        if key_at(page, m) <= target {
            l = m + 1;
        } else {
            r = m;
        }
    }
    l.saturating_sub(1)
}

/// Shortest valid separator between adjacent entries: the right entry's
/// user-key prefix when that alone clears the left key, else its full key.
/// Distinct neighboring user keys therefore always yield a separator of
/// exactly the user-key bytes, which keeps internal entry sizes uniform
/// and capacity arithmetic exact.
fn separator(left_last: &[u8], right_first: &IndexEntry) -> (Vec<u8>, usize) {
    let user = &right_first.key[..right_first.user_len];
    if user > left_last {
        (user.to_vec(), right_first.user_len)
    } else {
        (right_first.key.clone(), right_first.user_len)
    }
}

fn footprint(e: &IndexEntry) -> usize {
    REC_OVERHEAD + e.key.len() + e.payload.len() + SLOT_SIZE
}

/// Split index for an overflowing entry list: both sides must fit a page;
/// among feasible cuts, the one closest to half the bytes. Feasibility is
/// guaranteed because a single entry never exceeds half the usable space.
fn split_point(entries: &[IndexEntry]) -> usize {
    let total: usize = entries.iter().map(footprint).sum();
    let mut best = None;
    let mut prefix = 0usize;
    for mid in 1..entries.len() {
        prefix += footprint(&entries[mid - 1]);
        if prefix > PAGE_USABLE || total - prefix > PAGE_USABLE {
            continue;
        }
        let skew = prefix.abs_diff(total / 2);
        if best.is_none_or(|(s, _)| skew < s) {
            best = Some((skew, mid));
        }
    }
    best.expect("an overflowing node always has a feasible split").1
}

fn page_id_bytes(id: PageId) -> Vec<u8> {
    let mut b = vec![0u8; 6];
    id.write_to(&mut b, 0);
    b
}

fn rebuild(page_no: u32, kind: PageKind, level: u8, sibling: PageId, entries: &[IndexEntry]) -> Result<Page> {
    let mut p = Page::new(page_no, kind);
    p.set_level(level);
    p.set_right_sibling(sibling);
    for (i, e) in entries.iter().enumerate() {
        p.insert_at(i, &encode_rec(&e.key, e.user_len, &e.payload))?;
    }
    Ok(p)
}

fn duplicate_key_err(key: &[u8]) -> Error {
    let hex: String = key.iter().map(|b| format!("{b:02x}")).collect();
    Error::DuplicateKey { index: String::new(), key: hex }
}

#[derive(Debug, Clone, Copy)]
pub struct BTree {
    pub root: PageId,
    pub first_leaf: PageId,
    pub unique: bool,
}

/// Lower edge of a scan, in terms of the user-key prefix `p`.
pub enum Lo {
    First,
    /// First entry whose key is >= p; extensions of p are included.
    AtPrefix(Vec<u8>),
    /// First entry beyond p and all its extensions.
    AfterPrefix(Vec<u8>),
}

/// Upper edge of a scan.
pub enum Hi {
    Last,
    /// Include extensions of p: stop at the first key > p that does not
    /// extend p.
    WithPrefix(Vec<u8>),
    /// Exclude p and its extensions: stop at the first key >= p.
    BeforePrefix(Vec<u8>),
}

fn beyond(key: &[u8], hi: &Hi) -> bool {
    match hi {
        Hi::Last => false,
        Hi::WithPrefix(p) => key > p.as_slice() && !key.starts_with(p),
        Hi::BeforePrefix(p) => key >= p.as_slice(),
    }
}

impl BTree {
    /// Fresh empty index: a single leaf that is also the root.
    pub fn create(pager: &mut Pager, unique: bool) -> Result<BTree> {
        let (id, _) = pager.allocate_page(PageKind::BtreeLeaf)?;
        Ok(BTree { root: id, first_leaf: id, unique })
    }

    pub fn open(root: PageId, first_leaf: PageId, unique: bool) -> BTree {
        BTree { root, first_leaf, unique }
    }

    /// Build from scratch, packing leaves to `fill_factor` of the usable
    /// page bytes and internal nodes full. Entries may arrive in any
    /// order; they are sorted here.
    pub fn bulk_build(
        pager: &mut Pager,
        mut entries: Vec<IndexEntry>,
        fill_factor: f64,
        unique: bool,
    ) -> Result<BTree> {
        entries.sort_by(|a, b| a.key.cmp(&b.key));
        for pair in entries.windows(2) {
            let same = if unique {
                pair[0].key[..pair[0].user_len] == pair[1].key[..pair[1].user_len]
            } else {
                pair[0].key == pair[1].key
            };
            if same {
                return Err(duplicate_key_err(&pair[1].key));
            }
        }
        for e in &entries {
            Self::check_entry(e)?;
        }
        if entries.is_empty() {
            return Self::create(pager, unique);
        }

        let leaf_budget = (fill_factor * PAGE_USABLE as f64).floor() as usize;
        let leaf_groups = chunk_by_budget(&entries, leaf_budget);

        // Allocate ids first so sibling links can be written in one pass.
        let mut leaf_ids = Vec::with_capacity(leaf_groups.len());
        for _ in 0..leaf_groups.len() {
            leaf_ids.push(pager.allocate_page(PageKind::BtreeLeaf)?.0);
        }
        let mut level_entries: Vec<IndexEntry> = Vec::with_capacity(leaf_groups.len());
        for (i, group) in leaf_groups.iter().enumerate() {
            let sibling = leaf_ids.get(i + 1).copied().unwrap_or(PageId::NONE);
            let mut page = rebuild(leaf_ids[i].page_no, PageKind::BtreeLeaf, 0, sibling, group)?;
            pager.write_page(&mut page)?;
            let (sep, sep_user) = if i == 0 {
                // Leftmost separator is decorative; use the user prefix so
                // its size matches every other separator.
                (group[0].key[..group[0].user_len].to_vec(), group[0].user_len)
            } else {
                separator(&leaf_groups[i - 1].last().unwrap().key, &group[0])
            };
            level_entries.push(IndexEntry::new(sep, sep_user, page_id_bytes(leaf_ids[i])));
        }
        let first_leaf = leaf_ids[0];

        let mut level = 1u8;
        while level_entries.len() > 1 {
            let groups = chunk_by_budget(&level_entries, PAGE_USABLE);
            let mut next = Vec::with_capacity(groups.len());
            for group in &groups {
                let (id, _) = pager.allocate_page(PageKind::BtreeInternal)?;
                let mut page = rebuild(id.page_no, PageKind::BtreeInternal, level, PageId::NONE, group)?;
                pager.write_page(&mut page)?;
                let head = &group[0];
                next.push(IndexEntry::new(head.key.clone(), head.user_len, page_id_bytes(id)));
            }
            level_entries = next;
            level += 1;
        }

        let root = PageId::read_from(&level_entries[0].payload, 0);
        Ok(BTree { root, first_leaf, unique })
    }

    fn check_entry(e: &IndexEntry) -> Result<()> {
        if e.key.len() + e.payload.len() > MAX_ENTRY {
            return Err(Error::EntryTooLarge { len: e.key.len() + e.payload.len(), max: MAX_ENTRY });
        }
        if e.user_len > e.key.len() {
            return Err(Error::Corrupt("user_len exceeds key length".into()));
        }
        Ok(())
    }

    /// Number of levels, root to leaf inclusive.
    pub fn depth(&self, pager: &mut Pager) -> Result<u32> {
        Ok(pager.read_page(self.root)?.level() as u32 + 1)
    }

    /// (leaf pages, entries) by walking the leaf chain.
    pub fn leaf_stats(&self, pager: &mut Pager) -> Result<(u64, u64)> {
        let mut pages = 0u64;
        let mut entries = 0u64;
        let mut cursor = self.first_leaf;
        while !cursor.is_none() {
            let page = pager.read_page(cursor)?;
            pages += 1;
            entries += page.slot_count() as u64;
            cursor = page.right_sibling();
        }
        Ok((pages, entries))
    }

    fn descend(&self, pager: &mut Pager, target: &[u8]) -> Result<(Page, Option<Vec<u8>>)> {
        let mut page = pager.read_page(self.root)?;
        let mut hint = None;
        while page.kind()? == PageKind::BtreeInternal {
            let idx = route(&page, target);
            if idx + 1 < page.slot_count() {
                hint = Some(key_at(&page, idx + 1).to_vec());
            }
            page = pager.read_page(child_at(&page, idx))?;
        }
        Ok((page, hint))
    }

    pub fn insert(&mut self, pager: &mut Pager, entry: IndexEntry) -> Result<()> {
        Self::check_entry(&entry)?;
        let mut path: Vec<(PageId, usize)> = Vec::new();
        let mut page = pager.read_page(self.root)?;
        while page.kind()? == PageKind::BtreeInternal {
            let idx = route(&page, &entry.key);
            path.push((page.id(), idx));
            page = pager.read_page(child_at(&page, idx))?;
        }

        let pos = lower_bound(&page, &entry.key);
        if pos < page.slot_count() {
            let existing = key_at(&page, pos);
            let clash = if self.unique {
                existing[..rec_user_len(page.record(pos).unwrap()).min(existing.len())]
                    == entry.key[..entry.user_len]
            } else {
                existing == entry.key.as_slice()
            };
            if clash {
                return Err(duplicate_key_err(&entry.key));
            }
        }
        if self.unique && pos > 0 {
            let prev = page.record(pos - 1).unwrap();
            if rec_key(prev)[..rec_user_len(prev)] == entry.key[..entry.user_len] {
                return Err(duplicate_key_err(&entry.key));
            }
        }

        let rec = encode_rec(&entry.key, entry.user_len, &entry.payload);
        match page.insert_at(pos, &rec) {
            Ok(()) => return pager.write_page(&mut page),
            Err(Error::PageFull { .. }) => {}
            Err(e) => return Err(e),
        }

        // Leaf split.
        let mut entries = decode_entries(&page);
        entries.insert(pos, entry);
        let mid = split_point(&entries);
        let sep = separator(&entries[mid - 1].key, &entries[mid]);
        let right_entries = entries.split_off(mid);
        let left_entries = entries;

        if page.id() == self.root {
            let (lid, _) = pager.allocate_page(PageKind::BtreeLeaf)?;
            let (rid, _) = pager.allocate_page(PageKind::BtreeLeaf)?;
            let mut left = rebuild(lid.page_no, PageKind::BtreeLeaf, 0, rid, &left_entries)?;
            let mut right = rebuild(rid.page_no, PageKind::BtreeLeaf, 0, PageId::NONE, &right_entries)?;
            pager.write_page(&mut left)?;
            pager.write_page(&mut right)?;
            self.replace_root(pager, 1, lid, rid, sep, &left_entries[0])?;
            self.first_leaf = lid;
            return Ok(());
        }

        let (rid, _) = pager.allocate_page(PageKind::BtreeLeaf)?;
        let mut right = rebuild(rid.page_no, PageKind::BtreeLeaf, 0, page.right_sibling(), &right_entries)?;
        let mut left = rebuild(page.page_no(), PageKind::BtreeLeaf, 0, rid, &left_entries)?;
        pager.write_page(&mut right)?;
        pager.write_page(&mut left)?;

        let mut carry = IndexEntry::new(sep.0, sep.1, page_id_bytes(rid));
        while let Some((pid, idx)) = path.pop() {
            let mut node = pager.read_page(pid)?;
            let rec = encode_rec(&carry.key, carry.user_len, &carry.payload);
            match node.insert_at(idx + 1, &rec) {
                Ok(()) => return pager.write_page(&mut node),
                Err(Error::PageFull { .. }) => {}
                Err(e) => return Err(e),
            }

            let mut entries = decode_entries(&node);
            entries.insert(idx + 1, carry);
            let mid = split_point(&entries);
            let promoted = entries[mid].clone();
            let right_entries = entries.split_off(mid);
            let left_entries = entries;
            let level = node.level();

            if pid == self.root {
                let (lid, _) = pager.allocate_page(PageKind::BtreeInternal)?;
                let (rid2, _) = pager.allocate_page(PageKind::BtreeInternal)?;
                let mut left = rebuild(lid.page_no, PageKind::BtreeInternal, level, PageId::NONE, &left_entries)?;
                let mut right = rebuild(rid2.page_no, PageKind::BtreeInternal, level, PageId::NONE, &right_entries)?;
                pager.write_page(&mut left)?;
                pager.write_page(&mut right)?;
                let sep = (promoted.key, promoted.user_len);
                self.replace_root(pager, level + 1, lid, rid2, sep, &left_entries[0])?;
                return Ok(());
            }

            let (rid2, _) = pager.allocate_page(PageKind::BtreeInternal)?;
            let mut right = rebuild(rid2.page_no, PageKind::BtreeInternal, level, PageId::NONE, &right_entries)?;
            let mut left = rebuild(pid.page_no, PageKind::BtreeInternal, level, PageId::NONE, &left_entries)?;
            pager.write_page(&mut right)?;
            pager.write_page(&mut left)?;
            carry = IndexEntry::new(promoted.key, promoted.user_len, page_id_bytes(rid2));
        }
        unreachable!("split bubbled past the root");
    }

    /// Rewrite the root page, one level up, over two new children.
    fn replace_root(
        &mut self,
        pager: &mut Pager,
        level: u8,
        left: PageId,
        right: PageId,
        sep: (Vec<u8>, usize),
        left_first: &IndexEntry,
    ) -> Result<()> {
        let user = &left_first.key[..left_first.user_len];
        let entries = [
            IndexEntry::new(user.to_vec(), left_first.user_len, page_id_bytes(left)),
            IndexEntry::new(sep.0, sep.1, page_id_bytes(right)),
        ];
        let mut root = rebuild(self.root.page_no, PageKind::BtreeInternal, level, PageId::NONE, &entries)?;
        pager.write_page(&mut root)
    }

    /// Remove the entry with this exact stored key. No merging: pages may
    /// go empty and depth never shrinks.
    pub fn delete(&mut self, pager: &mut Pager, key: &[u8]) -> Result<()> {
        let (mut page, _) = self.descend(pager, key)?;
        let pos = lower_bound(&page, key);
        if pos >= page.slot_count() || key_at(&page, pos) != key {
            return Err(Error::EntryNotFound);
        }
        page.remove_at(pos);
        pager.write_page(&mut page)
    }

    /// Replace the payload of an existing stored key. Falls back to
    /// remove+insert when the new payload does not fit the page.
    pub fn update_payload(&mut self, pager: &mut Pager, key: &[u8], user_len: usize, payload: &[u8]) -> Result<()> {
        let (mut page, _) = self.descend(pager, key)?;
        let pos = lower_bound(&page, key);
        if pos >= page.slot_count() || key_at(&page, pos) != key {
            return Err(Error::EntryNotFound);
        }
        let entry = IndexEntry::new(key.to_vec(), user_len, payload.to_vec());
        Self::check_entry(&entry)?;
        let rec = encode_rec(key, user_len, payload);
        page.remove_at(pos);
        match page.insert_at(pos, &rec) {
            Ok(()) => pager.write_page(&mut page),
            Err(Error::PageFull { .. }) => {
                pager.write_page(&mut page)?;
                self.insert(pager, entry)
            }
            Err(e) => Err(e),
        }
    }

    /// All entries whose stored key extends `prefix` (equality seek on a
    /// full user key, or on a leading column group).
    pub fn seek<'p>(&self, pager: &'p mut Pager, prefix: &[u8]) -> Result<BTreeRange<'p>> {
        self.range(pager, Lo::AtPrefix(prefix.to_vec()), Hi::WithPrefix(prefix.to_vec()))
    }

    pub fn range<'p>(&self, pager: &'p mut Pager, lo: Lo, hi: Hi) -> Result<BTreeRange<'p>> {
        let (page, idx, hint, skip) = match &lo {
            Lo::First => {
                let page = pager.read_page(self.first_leaf)?;
                (page, 0usize, None, None)
            }
            Lo::AtPrefix(p) => {
                let (page, hint) = self.descend(pager, p)?;
                let idx = lower_bound(&page, p);
                (page, idx, Some(hint), None)
            }
            Lo::AfterPrefix(p) => {
                let (page, hint) = self.descend(pager, p)?;
                let idx = lower_bound(&page, p);
                (page, idx, Some(hint), Some(p.clone()))
            }
        };
        // `hint` is Some(inner) only when a descent happened; on the
        // descent leaf the innermost right separator decides whether a
        // sibling hop can still yield matches without reading the sibling.
        let (on_descent_leaf, hint) = match hint {
            Some(h) => (true, h),
            None => (false, None),
        };
        Ok(BTreeRange {
            pager,
            hi,
            skip,
            page: Some(page),
            idx,
            on_descent_leaf,
            hint,
            done: false,
        })
    }

    /// Structural check: returns the first violation, or None when sound.
    pub fn validate(&self, pager: &mut Pager) -> Result<Option<String>> {
        let root = pager.read_page(self.root)?;
        let expect_level = root.level();
        let mut leaves = Vec::new();
        if let Some(v) = self.validate_node(pager, &root, expect_level, None, None, &mut leaves)? {
            return Ok(Some(v));
        }
        // Leaf chain must mirror recursion order.
        if leaves.first() != Some(&self.first_leaf) {
            return Ok(Some(format!(
                "first_leaf is {:?}, leftmost leaf is {:?}",
                self.first_leaf,
                leaves.first()
            )));
        }
        for w in leaves.windows(2) {
            let page = pager.read_page(w[0])?;
            if page.right_sibling() != w[1] {
                return Ok(Some(format!(
                    "leaf {} sibling {:?} != next leaf {:?}",
                    w[0].page_no,
                    page.right_sibling(),
                    w[1]
                )));
            }
        }
        let last = pager.read_page(*leaves.last().unwrap())?;
        if !last.right_sibling().is_none() {
            return Ok(Some("last leaf has a right sibling".into()));
        }
        Ok(None)
    }

    #[allow(clippy::too_many_arguments)]
    fn validate_node(
        &self,
        pager: &mut Pager,
        page: &Page,
        level: u8,
        lo: Option<&[u8]>,
        hi: Option<&[u8]>,
        leaves: &mut Vec<PageId>,
    ) -> Result<Option<String>> {
        let pn = page.page_no();
        if page.level() != level {
            return Ok(Some(format!(
                "page {pn}: level {} where {} expected (unbalanced)",
                page.level(),
                level
            )));
        }
        let kind = page.kind()?;
        let want = if level == 0 { PageKind::BtreeLeaf } else { PageKind::BtreeInternal };
        if kind != want {
            return Ok(Some(format!("page {pn}: kind {kind:?} at level {level}")));
        }
        let n = page.slot_count();
        if kind == PageKind::BtreeInternal && n == 0 {
            return Ok(Some(format!("page {pn}: empty internal node")));
        }
        for i in 0..n {
            let Some(rec) = page.record(i) else {
                return Ok(Some(format!("page {pn}: tombstone at slot {i}")));
            };
            if rec_user_len(rec) > rec_key(rec).len() {
                return Ok(Some(format!("page {pn} slot {i}: user_len out of range")));
            }
            if i > 0 {
                match key_at(page, i - 1).cmp(key_at(page, i)) {
                    Ordering::Less => {}
                    _ => return Ok(Some(format!("page {pn}: slots {} and {i} out of order", i - 1))),
                }
            }
            if self.unique && kind == PageKind::BtreeLeaf && i > 0 {
                let a = page.record(i - 1).unwrap();
                let b = rec;
                if rec_key(a)[..rec_user_len(a)] == rec_key(b)[..rec_user_len(b)] {
                    return Ok(Some(format!("page {pn}: duplicate user key in unique index")));
                }
            }
        }

        if kind == PageKind::BtreeLeaf {
            // Entry 0 of each internal node is decorative, so the inherited
            // lower bound applies only via real routing separators.
            for i in 0..n {
                let k = key_at(page, i);
                if let Some(lo) = lo {
                    if k < lo {
                        return Ok(Some(format!("page {pn} slot {i}: key below separator")));
                    }
                }
                if let Some(hi) = hi {
                    if k >= hi {
                        return Ok(Some(format!("page {pn} slot {i}: key at or above next separator")));
                    }
                }
            }
            leaves.push(page.id());
            return Ok(None);
        }

        for i in 0..n {
            let sep = key_at(page, i).to_vec();
            if i > 0 {
                if let Some(lo) = lo {
                    if sep.as_slice() < lo {
                        return Ok(Some(format!("page {pn}: separator {i} below inherited bound")));
                    }
                }
                if let Some(hi) = hi {
                    if sep.as_slice() >= hi {
                        return Ok(Some(format!("page {pn}: separator {i} above inherited bound")));
                    }
                }
            }
            let child = pager.read_page(child_at(page, i))?;
            let child_lo = if i == 0 { lo } else { Some(sep.as_slice()) };
            let next_sep;
            let child_hi = if i + 1 < n {
                next_sep = key_at(page, i + 1).to_vec();
                Some(next_sep.as_slice())
            } else {
                hi
            };
            if let Some(v) = self.validate_node(pager, &child, level - 1, child_lo, child_hi, leaves)? {
                return Ok(Some(v));
            }
        }
        Ok(None)
    }
}

/// Group entries greedily under a byte budget; every group holds at least
/// one entry.
fn chunk_by_budget(entries: &[IndexEntry], budget: usize) -> Vec<Vec<IndexEntry>> {
    let mut groups = Vec::new();
    let mut cur: Vec<IndexEntry> = Vec::new();
    let mut used = 0usize;
    for e in entries {
        let fp = footprint(e);
        if !cur.is_empty() && used + fp > budget {
            groups.push(std::mem::take(&mut cur));
            used = 0;
        }
        used += fp;
        cur.push(e.clone());
    }
    if !cur.is_empty() {
        groups.push(cur);
    }
    groups
}

/// Ordered cursor over leaf entries between two bounds. Yields
/// (stored key, payload) pairs.
pub struct BTreeRange<'p> {
    pager: &'p mut Pager,
    hi: Hi,
    /// While set, entries extending this prefix are filtered out
    /// (exclusive lower bound).
    skip: Option<Vec<u8>>,
    page: Option<Page>,
    idx: usize,
    /// True until the first sibling hop; on the descent leaf the stored
    /// hint can prove the next leaf holds no matches without reading it.
    on_descent_leaf: bool,
    hint: Option<Vec<u8>>,
    done: bool,
}

impl Iterator for BTreeRange<'_> {
    type Item = Result<(Vec<u8>, Vec<u8>)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            let Some(page) = &self.page else {
                self.done = true;
                return None;
            };
            while self.idx < page.slot_count() {
                let rec = page.record(self.idx).expect("btree pages have no tombstones");
                let key = rec_key(rec);
                if beyond(key, &self.hi) {
                    self.done = true;
                    return None;
                }
                if let Some(skip) = &self.skip {
                    if key.starts_with(skip) {
                        self.idx += 1;
                        continue;
                    }
                    self.skip = None;
                }
                self.idx += 1;
                return Some(Ok((key.to_vec(), rec_payload(rec).to_vec())));
            }

            // Page exhausted: decide whether the next leaf can still hold
            // matches. On the descent leaf the separator hint answers that
            // without touching the sibling.
            if self.on_descent_leaf {
                if let Some(h) = &self.hint {
                    if beyond(h, &self.hi) {
                        self.done = true;
                        return None;
                    }
                }
            }
            let sibling = page.right_sibling();
            if sibling.is_none() {
                self.done = true;
                return None;
            }
            match self.pager.read_page(sibling) {
                Ok(p) => {
                    self.page = Some(p);
                    self.idx = 0;
                    self.on_descent_leaf = false;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
    }
}
