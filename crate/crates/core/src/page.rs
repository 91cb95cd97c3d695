//! Slotted 8 KB pages.
//!
//! Layout:
//!
//! ```text
//! offset 0        4        6     7      8          10          12             18         22       32
//!        +--------+--------+-----+------+----------+-----------+--------------+----------+--------+----
//!        | page_no| file_id| kind| level| slot_cnt | free_off  | right_sibling| checksum | unused | records ...
//!        +--------+--------+-----+------+----------+-----------+--------------+----------+--------+----
//!                                                                ... free space ...    <- slot dir |8192
//! ```
//!
//! Records grow upward from byte 32, the slot directory (4 bytes per slot:
//! u16 offset, u16 length) grows downward from byte 8192. A slot of (0, 0)
//! is a tombstone: offset 0 lies inside the header, so no live record can
//! have it.
//!
//! Two usage styles share this structure. Heap pages treat slot ordinals as
//! stable (`append_record`, `tombstone`); tombstoned slots are never reused
//! and the record area is never compacted, so a Rid stays valid for the
//! life of the row. B-tree pages keep slots in key order (`insert_at`,
//! `remove_at`) and may compact the record area, since nothing outside the
//! tree refers to their slot positions.

use crate::error::{Error, Result};
use crate::wire::{get_u16, get_u32, put_u16, put_u32};

pub const PAGE_SIZE: usize = 8192;
pub const PAGE_HEADER: usize = 32;
pub const SLOT_SIZE: usize = 4;
/// Space available to records plus their slot entries.
pub const PAGE_USABLE: usize = PAGE_SIZE - PAGE_HEADER;
/// Largest single record: one slot entry must fit beside it.
pub const MAX_RECORD: usize = PAGE_USABLE - SLOT_SIZE;

const OFF_PAGE_NO: usize = 0;
const OFF_FILE_ID: usize = 4;
const OFF_KIND: usize = 6;
const OFF_LEVEL: usize = 7;
const OFF_SLOT_COUNT: usize = 8;
const OFF_FREE_OFF: usize = 10;
const OFF_RIGHT_SIBLING: usize = 12;
pub(crate) const OFF_CHECKSUM: usize = 18;

/// The single data file of a database.
pub const DATA_FILE_ID: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PageId {
    pub file_id: u16,
    pub page_no: u32,
}

impl PageId {
    /// Sentinel meaning "no page"; real pages always have file_id 1.
    pub const NONE: PageId = PageId { file_id: 0, page_no: 0 };

    pub fn new(page_no: u32) -> Self {
        PageId { file_id: DATA_FILE_ID, page_no }
    }

    pub fn is_none(self) -> bool {
        self.file_id == 0
    }

    pub fn write_to(self, buf: &mut [u8], at: usize) {
        put_u16(buf, at, self.file_id);
        put_u32(buf, at + 2, self.page_no);
    }

    pub fn read_from(buf: &[u8], at: usize) -> Self {
        PageId {
            file_id: get_u16(buf, at),
            page_no: get_u32(buf, at + 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PageKind {
    Catalog = 0,
    Heap = 1,
    BtreeInternal = 2,
    BtreeLeaf = 3,
    ColumnMeta = 4,
}

impl PageKind {
    pub fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => PageKind::Catalog,
            1 => PageKind::Heap,
            2 => PageKind::BtreeInternal,
            3 => PageKind::BtreeLeaf,
            4 => PageKind::ColumnMeta,
            other => return Err(Error::Corrupt(format!("unknown page kind {other}"))),
        })
    }
}

pub struct Page {
    pub buf: Box<[u8; PAGE_SIZE]>,
}

impl std::fmt::Debug for Page {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Page")
            .field("page_no", &self.page_no())
            .field("kind", &self.buf[OFF_KIND])
            .field("level", &self.level())
            .field("slots", &self.slot_count())
            .finish_non_exhaustive()
    }
}

impl Page {
    pub fn new(page_no: u32, kind: PageKind) -> Self {
        let mut p = Page { buf: vec![0u8; PAGE_SIZE].into_boxed_slice().try_into().unwrap() };
        put_u32(&mut p.buf[..], OFF_PAGE_NO, page_no);
        put_u16(&mut p.buf[..], OFF_FILE_ID, DATA_FILE_ID);
        p.buf[OFF_KIND] = kind as u8;
        put_u16(&mut p.buf[..], OFF_FREE_OFF, PAGE_HEADER as u16);
        PageId::NONE.write_to(&mut p.buf[..], OFF_RIGHT_SIBLING);
        p
    }

    pub fn from_buf(buf: Box<[u8; PAGE_SIZE]>) -> Self {
        Page { buf }
    }

    pub fn page_no(&self) -> u32 {
        get_u32(&self.buf[..], OFF_PAGE_NO)
    }

    pub fn id(&self) -> PageId {
        PageId::new(self.page_no())
    }

    pub fn kind(&self) -> Result<PageKind> {
        PageKind::from_u8(self.buf[OFF_KIND])
    }

    pub fn set_kind(&mut self, kind: PageKind) {
        self.buf[OFF_KIND] = kind as u8;
    }

    pub fn level(&self) -> u8 {
        self.buf[OFF_LEVEL]
    }

    pub fn set_level(&mut self, level: u8) {
        self.buf[OFF_LEVEL] = level;
    }

    pub fn right_sibling(&self) -> PageId {
        PageId::read_from(&self.buf[..], OFF_RIGHT_SIBLING)
    }

    pub fn set_right_sibling(&mut self, id: PageId) {
        id.write_to(&mut self.buf[..], OFF_RIGHT_SIBLING);
    }

    pub fn slot_count(&self) -> usize {
        get_u16(&self.buf[..], OFF_SLOT_COUNT) as usize
    }

    fn set_slot_count(&mut self, n: usize) {
        put_u16(&mut self.buf[..], OFF_SLOT_COUNT, n as u16);
    }

    fn free_off(&self) -> usize {
        get_u16(&self.buf[..], OFF_FREE_OFF) as usize
    }

    fn set_free_off(&mut self, off: usize) {
        put_u16(&mut self.buf[..], OFF_FREE_OFF, off as u16);
    }

    fn slot_pos(&self, i: usize) -> usize {
        PAGE_SIZE - SLOT_SIZE * (i + 1)
    }

    pub fn slot(&self, i: usize) -> (usize, usize) {
        let at = self.slot_pos(i);
        (get_u16(&self.buf[..], at) as usize, get_u16(&self.buf[..], at + 2) as usize)
    }

    fn set_slot(&mut self, i: usize, off: usize, len: usize) {
        let at = self.slot_pos(i);
        put_u16(&mut self.buf[..], at, off as u16);
        put_u16(&mut self.buf[..], at + 2, len as u16);
    }

    /// Live record bytes at slot `i`, or None for a tombstone.
    pub fn record(&self, i: usize) -> Option<&[u8]> {
        let (off, len) = self.slot(i);
        if off == 0 {
            return None;
        }
        Some(&self.buf[off..off + len])
    }

    pub fn record_mut(&mut self, i: usize) -> Option<&mut [u8]> {
        let (off, len) = self.slot(i);
        if off == 0 {
            return None;
        }
        Some(&mut self.buf[off..off + len])
    }

    /// Bytes left between the record area and the slot directory.
    pub fn contiguous_free(&self) -> usize {
        PAGE_SIZE - SLOT_SIZE * self.slot_count() - self.free_off()
    }

    /// Free space counting holes left by removed or shrunken records.
    /// B-tree pages can reach it via `compact`; heap pages never reclaim it.
    pub fn total_free(&self) -> usize {
        let live: usize = (0..self.slot_count())
            .map(|i| {
                let (off, len) = self.slot(i);
                if off == 0 { 0 } else { len }
            })
            .sum();
        PAGE_USABLE - live - SLOT_SIZE * self.slot_count()
    }

    fn check_record_len(len: usize) -> Result<()> {
        if len > MAX_RECORD {
            return Err(Error::RecordTooLarge { len, max: MAX_RECORD });
        }
        Ok(())
    }

    fn write_record_body(&mut self, rec: &[u8]) -> usize {
        let off = self.free_off();
        self.buf[off..off + rec.len()].copy_from_slice(rec);
        self.set_free_off(off + rec.len());
        off
    }

    /// Heap-style insert: record appended, new slot at the end, ordinal
    /// stable for the record's lifetime.
    pub fn append_record(&mut self, rec: &[u8]) -> Result<usize> {
        Self::check_record_len(rec.len())?;
        if self.contiguous_free() < rec.len() + SLOT_SIZE {
            return Err(Error::PageFull { need: rec.len() + SLOT_SIZE, free: self.contiguous_free() });
        }
        let off = self.write_record_body(rec);
        let i = self.slot_count();
        self.set_slot_count(i + 1);
        self.set_slot(i, off, rec.len());
        Ok(i)
    }

    /// Overwrite the record at a live slot. Shrinking is done in place;
    /// growth must fit the contiguous free area (the old bytes become a
    /// hole). Errors leave the page unchanged.
    pub fn overwrite_record(&mut self, i: usize, rec: &[u8]) -> Result<()> {
        Self::check_record_len(rec.len())?;
        let (off, len) = self.slot(i);
        assert!(off != 0, "overwrite of tombstoned slot");
        if rec.len() <= len {
            self.buf[off..off + rec.len()].copy_from_slice(rec);
            self.set_slot(i, off, rec.len());
            return Ok(());
        }
        if self.contiguous_free() < rec.len() {
            return Err(Error::PageFull { need: rec.len(), free: self.contiguous_free() });
        }
        let new_off = self.write_record_body(rec);
        self.set_slot(i, new_off, rec.len());
        Ok(())
    }

    /// Heap-style delete: the slot becomes a tombstone and is never reused.
    pub fn tombstone(&mut self, i: usize) {
        self.set_slot(i, 0, 0);
    }

    /// B-tree-style insert keeping the directory ordered: later slots shift
    /// by one. Compacts the record area first when the hole space suffices
    /// but the contiguous area does not.
    pub fn insert_at(&mut self, pos: usize, rec: &[u8]) -> Result<()> {
        Self::check_record_len(rec.len())?;
        let need = rec.len() + SLOT_SIZE;
        if self.contiguous_free() < need {
            if self.total_free() < need {
                return Err(Error::PageFull { need, free: self.total_free() });
            }
            self.compact();
        }
        let off = self.write_record_body(rec);
        let n = self.slot_count();
        assert!(pos <= n);
        // Shift directory entries for slots pos..n down one position. The
        // directory grows toward lower addresses, so slot pos..n occupy the
        // byte range [slot_pos(n-1), slot_pos(pos-1}).
        let src_lo = self.slot_pos(n.max(1) - 1);
        let dst_lo = self.slot_pos(n);
        if n > pos {
            let len = (n - pos) * SLOT_SIZE;
            self.buf.copy_within(src_lo..src_lo + len, dst_lo);
        }
        self.set_slot_count(n + 1);
        self.set_slot(pos, off, rec.len());
        Ok(())
    }

    /// B-tree-style remove: later slots shift back by one; record bytes
    /// become a hole until the next `compact`.
    pub fn remove_at(&mut self, pos: usize) {
        let n = self.slot_count();
        assert!(pos < n);
        if pos + 1 < n {
            // Slots pos+1..n live in [slot_pos(n-1), slot_pos(pos)); moving
            // each one index earlier shifts the block up one slot entry.
            let src_lo = self.slot_pos(n - 1);
            let len = (n - 1 - pos) * SLOT_SIZE;
            self.buf.copy_within(src_lo..src_lo + len, src_lo + SLOT_SIZE);
        }
        self.set_slot_count(n - 1);
    }

    /// Rewrite live records contiguously from the header, preserving slot
    /// order. Only meaningful for b-tree pages; heap slots keep their
    /// original offsets forever.
    pub fn compact(&mut self) {
        let n = self.slot_count();
        let mut records: Vec<(usize, Vec<u8>)> = Vec::with_capacity(n);
        for i in 0..n {
            if let Some(rec) = self.record(i) {
                records.push((i, rec.to_vec()));
            }
        }
        let mut off = PAGE_HEADER;
        for (i, rec) in records {
            self.buf[off..off + rec.len()].copy_from_slice(&rec);
            self.set_slot(i, off, rec.len());
            off += rec.len();
        }
        self.set_free_off(off);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_page_has_full_usable_space() {
        let p = Page::new(3, PageKind::Heap);
        assert_eq!(p.contiguous_free(), PAGE_USABLE);
        assert_eq!(p.total_free(), PAGE_USABLE);
        assert_eq!(p.page_no(), 3);
        assert_eq!(p.kind().unwrap(), PageKind::Heap);
        assert_eq!(p.slot_count(), 0);
    }

    #[test]
    fn hundred_byte_record_free_space_arithmetic() {
        let mut p = Page::new(0, PageKind::Heap);
        let slot = p.append_record(&[7u8; 100]).unwrap();
        assert_eq!(slot, 0);
        assert_eq!(p.contiguous_free(), PAGE_USABLE - 100 - SLOT_SIZE);
        assert_eq!(p.record(0).unwrap(), &[7u8; 100][..]);
    }

    #[test]
    fn record_size_limit() {
        let mut p = Page::new(0, PageKind::Heap);
        assert!(matches!(
            p.append_record(&vec![0u8; MAX_RECORD + 1]),
            Err(Error::RecordTooLarge { len: 8157, .. })
        ));
        p.append_record(&vec![1u8; MAX_RECORD]).unwrap();
        assert_eq!(p.contiguous_free(), 0);
    }

    #[test]
    fn page_full_rejected() {
        let mut p = Page::new(0, PageKind::Heap);
        p.append_record(&vec![0u8; MAX_RECORD - 110]).unwrap();
        // 110 - SLOT_SIZE bytes of record space remain: 106 fits, 107 does not.
        assert!(matches!(p.append_record(&vec![0u8; 107]), Err(Error::PageFull { .. })));
        p.append_record(&vec![0u8; 106]).unwrap();
    }

    #[test]
    fn tombstone_keeps_ordinals_stable() {
        let mut p = Page::new(0, PageKind::Heap);
        p.append_record(b"aaa").unwrap();
        p.append_record(b"bbb").unwrap();
        p.append_record(b"ccc").unwrap();
        p.tombstone(1);
        assert!(p.record(1).is_none());
        assert_eq!(p.record(0).unwrap(), b"aaa");
        assert_eq!(p.record(2).unwrap(), b"ccc");
        // Tombstoned slot is not reused: the next append takes ordinal 3.
        assert_eq!(p.append_record(b"ddd").unwrap(), 3);
    }

    #[test]
    fn overwrite_in_place_and_relocated() {
        let mut p = Page::new(0, PageKind::Heap);
        p.append_record(&[1u8; 50]).unwrap();
        p.overwrite_record(0, &[2u8; 30]).unwrap();
        assert_eq!(p.record(0).unwrap(), &[2u8; 30][..]);
        p.overwrite_record(0, &[3u8; 200]).unwrap();
        assert_eq!(p.record(0).unwrap(), &[3u8; 200][..]);
    }

    #[test]
    fn positional_insert_and_remove() {
        let mut p = Page::new(0, PageKind::BtreeLeaf);
        p.insert_at(0, b"m").unwrap();
        p.insert_at(0, b"a").unwrap();
        p.insert_at(2, b"z").unwrap();
        p.insert_at(1, b"c").unwrap();
        let collect = |p: &Page| -> Vec<Vec<u8>> {
            (0..p.slot_count()).map(|i| p.record(i).unwrap().to_vec()).collect()
        };
        assert_eq!(collect(&p), vec![b"a".to_vec(), b"c".to_vec(), b"m".to_vec(), b"z".to_vec()]);
        p.remove_at(1);
        assert_eq!(collect(&p), vec![b"a".to_vec(), b"m".to_vec(), b"z".to_vec()]);
        p.remove_at(2);
        assert_eq!(collect(&p), vec![b"a".to_vec(), b"m".to_vec()]);
        p.remove_at(0);
        assert_eq!(collect(&p), vec![b"m".to_vec()]);
    }

    #[test]
    fn compact_reclaims_holes() {
        let mut p = Page::new(0, PageKind::BtreeLeaf);
        // Two large records fill most of the page; removing one leaves a
        // hole that only compaction can hand back as contiguous space.
        p.insert_at(0, &vec![1u8; 4000]).unwrap();
        p.insert_at(1, &vec![2u8; 4000]).unwrap();
        p.remove_at(0);
        assert!(p.contiguous_free() < 4000);
        assert!(p.total_free() >= 4000);
        p.insert_at(0, &vec![3u8; 4000]).unwrap();
        assert_eq!(p.record(0).unwrap()[0], 3);
        assert_eq!(p.record(1).unwrap()[0], 2);
    }

    #[test]
    fn slot_shift_preserves_bytes() {
        let mut p = Page::new(0, PageKind::BtreeLeaf);
        for i in 0..20u8 {
            p.insert_at(i as usize, &[i; 3]).unwrap();
        }
        p.insert_at(10, &[99; 3]).unwrap();
        assert_eq!(p.record(10).unwrap(), &[99; 3]);
        assert_eq!(p.record(9).unwrap(), &[9; 3]);
        assert_eq!(p.record(11).unwrap(), &[10; 3]);
        assert_eq!(p.record(20).unwrap(), &[19; 3]);
    }
}
