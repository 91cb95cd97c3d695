//! Single-file page store with logical I/O accounting.
//!
//! There is deliberately no buffer pool: every `read_page` hits the file
//! and bumps `logical_reads`, so the counters are exact and every cost
//! claim in the planner can be checked against them. Checksums are stamped
//! on write and verified on read; a mismatch is a hard error.
//!
//! Page 0 is the database header, not a slotted page: magic bytes at
//! offset 0, checksum at offset 8, then version and the catalog head. All
//! other pages carry their checksum inside the 32-byte page header.

use std::fs::{File, OpenOptions};
use std::os::unix::fs::FileExt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::page::{Page, PageId, PageKind, DATA_FILE_ID, OFF_CHECKSUM, PAGE_SIZE};
use crate::wire::{get_u32, put_u32};

pub const MAGIC: &[u8; 8] = b"PDEXv1\0\0";
pub const FORMAT_VERSION: u32 = 1;

const P0_CHECKSUM: usize = 8;
const P0_VERSION: usize = 12;
const P0_CATALOG_HEAD: usize = 16;

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct IoCounters {
    pub logical_reads: u64,
    pub logical_writes: u64,
}

pub struct Pager {
    file: File,
    page_count: u32,
    pub io: IoCounters,
}

impl Pager {
    /// Create a fresh, zero-page database file. Fails if the file exists.
    pub fn create(path: &Path) -> Result<Pager> {
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create_new(true)
            .open(path)?;
        Ok(Pager { file, page_count: 0, io: IoCounters::default() })
    }

    pub fn open(path: &Path) -> Result<Pager> {
        let file = OpenOptions::new().read(true).write(true).open(path)?;
        let len = file.metadata()?.len();
        if len % PAGE_SIZE as u64 != 0 {
            return Err(Error::Corrupt(format!(
                "file length {len} is not a multiple of the page size"
            )));
        }
        Ok(Pager {
            file,
            page_count: (len / PAGE_SIZE as u64) as u32,
            io: IoCounters::default(),
        })
    }

    pub fn page_count(&self) -> u32 {
        self.page_count
    }

    fn bounds_check(&self, id: PageId) -> Result<()> {
        if id.file_id != DATA_FILE_ID || id.page_no >= self.page_count {
            return Err(Error::PageOutOfRange {
                file_id: id.file_id,
                page_no: id.page_no,
                allocated: self.page_count,
            });
        }
        Ok(())
    }

    /// Extend the file by one zero-initialized page with a stamped header.
    pub fn allocate_page(&mut self, kind: PageKind) -> Result<(PageId, Page)> {
        let page_no = self.page_count;
        let mut page = Page::new(page_no, kind);
        self.page_count += 1;
        self.write_page(&mut page).map_err(|e| match e {
            Error::Io(io) => Error::StorageFull(io.to_string()),
            other => other,
        })?;
        Ok((PageId::new(page_no), page))
    }

    pub fn read_page(&mut self, id: PageId) -> Result<Page> {
        self.bounds_check(id)?;
        let mut buf: Box<[u8; PAGE_SIZE]> =
            vec![0u8; PAGE_SIZE].into_boxed_slice().try_into().unwrap();
        self.file
            .read_exact_at(&mut buf[..], id.page_no as u64 * PAGE_SIZE as u64)?;
        self.io.logical_reads += 1;

        let at = checksum_offset(id.page_no);
        let stored = get_u32(&buf[..], at);
        put_u32(&mut buf[..], at, 0);
        let computed = checksum(&buf);
        put_u32(&mut buf[..], at, stored);
        if stored != computed {
            return Err(Error::Corrupt(format!(
                "checksum mismatch on page {}: stored {stored:#010x}, computed {computed:#010x}",
                id.page_no
            )));
        }
        Ok(Page::from_buf(buf))
    }

    /// Stamp the checksum and persist the page.
    pub fn write_page(&mut self, page: &mut Page) -> Result<()> {
        let page_no = page.page_no();
        if page_no >= self.page_count {
            return Err(Error::PageOutOfRange {
                file_id: DATA_FILE_ID,
                page_no,
                allocated: self.page_count,
            });
        }
        let at = checksum_offset(page_no);
        put_u32(&mut page.buf[..], at, 0);
        let sum = checksum(&page.buf);
        put_u32(&mut page.buf[..], at, sum);
        self.file
            .write_all_at(&page.buf[..], page_no as u64 * PAGE_SIZE as u64)?;
        self.io.logical_writes += 1;
        Ok(())
    }

    /// Write the database header into page 0. The page must already be
    /// allocated (it is the first allocation of `create_db`). Page 0 is
    /// not a slotted page: the magic occupies the bytes where ordinary
    /// pages keep their page number, so it bypasses `write_page`.
    pub fn write_db_header(&mut self, catalog_head: PageId) -> Result<()> {
        if self.page_count == 0 {
            return Err(Error::PageOutOfRange { file_id: DATA_FILE_ID, page_no: 0, allocated: 0 });
        }
        let mut buf = [0u8; PAGE_SIZE];
        buf[..MAGIC.len()].copy_from_slice(MAGIC);
        put_u32(&mut buf, P0_VERSION, FORMAT_VERSION);
        catalog_head.write_to(&mut buf, P0_CATALOG_HEAD);
        let sum = checksum(&buf);
        put_u32(&mut buf, P0_CHECKSUM, sum);
        self.file.write_all_at(&buf, 0)?;
        self.io.logical_writes += 1;
        Ok(())
    }

    /// Validate the magic and version of page 0 and return the catalog head.
    pub fn read_db_header(&mut self) -> Result<PageId> {
        let page = self.read_page(PageId::new(0))?;
        if &page.buf[..MAGIC.len()] != MAGIC {
            return Err(Error::Corrupt("bad magic: not a pdex database".into()));
        }
        let version = get_u32(&page.buf[..], P0_VERSION);
        if version != FORMAT_VERSION {
            return Err(Error::Corrupt(format!(
                "unsupported format version {version}"
            )));
        }
        Ok(PageId::read_from(&page.buf[..], P0_CATALOG_HEAD))
    }
}

/// Rewrite a blob across a chain of single-record pages, reusing the chain
/// at `head` front to back: pages are overwritten in place, the tail is
/// extended with fresh allocations when the blob grew, and cut loose when
/// it shrank (orphans are never reclaimed). Returns the head, which only
/// changes when `head` was NONE. The catalog and columnstore directories
/// both persist this way.
pub fn rewrite_chain(
    pager: &mut Pager,
    head: PageId,
    kind: PageKind,
    bytes: &[u8],
) -> Result<PageId> {
    let chunks: Vec<&[u8]> = if bytes.is_empty() {
        vec![&[][..]]
    } else {
        bytes.chunks(crate::page::MAX_RECORD).collect()
    };

    let mut chain = Vec::new();
    let mut cursor = head;
    while !cursor.is_none() && chain.len() < chunks.len() {
        let page = pager.read_page(cursor)?;
        chain.push(cursor);
        cursor = page.right_sibling();
    }
    while chain.len() < chunks.len() {
        let (id, _) = pager.allocate_page(kind)?;
        chain.push(id);
    }

    for (i, chunk) in chunks.iter().enumerate() {
        let mut page = Page::new(chain[i].page_no, kind);
        page.append_record(chunk)?;
        let next = if i + 1 < chunks.len() { chain[i + 1] } else { PageId::NONE };
        page.set_right_sibling(next);
        pager.write_page(&mut page)?;
    }
    Ok(chain[0])
}

/// Read a whole chain written by [`rewrite_chain`] back into one blob.
pub fn read_chain(pager: &mut Pager, head: PageId, kind: PageKind) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    let mut cursor = head;
    while !cursor.is_none() {
        let page = pager.read_page(cursor)?;
        if page.kind()? != kind {
            return Err(Error::Corrupt(format!(
                "page {} in chain has kind {:?}, expected {kind:?}",
                cursor.page_no,
                page.kind()?
            )));
        }
        let rec = page
            .record(0)
            .ok_or_else(|| Error::Corrupt("chain page with no record".into()))?;
        bytes.extend_from_slice(rec);
        cursor = page.right_sibling();
    }
    Ok(bytes)
}

fn checksum_offset(page_no: u32) -> usize {
    if page_no == 0 {
        P0_CHECKSUM
    } else {
        OFF_CHECKSUM
    }
}

/// Word-at-a-time mix over the whole page. Not cryptographic; it needs to
/// catch torn or misdirected writes while staying cheap enough to run on
/// every logical read.
fn checksum(buf: &[u8; PAGE_SIZE]) -> u32 {
    let mut h: u64 = 0x9E3779B97F4A7C15;
    for chunk in buf.chunks_exact(8) {
        let w = u64::from_le_bytes(chunk.try_into().unwrap());
        h = (h.rotate_left(5) ^ w).wrapping_mul(0x517CC1B727220A95);
    }
    (h ^ (h >> 32)) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::page::MAX_RECORD;

    /// Fresh pager with page 0 initialized as the header page, the state
    /// every real database starts from. Slotted pages live at 1+.
    fn temp_pager() -> (tempfile::TempDir, Pager) {
        let dir = tempfile::tempdir().unwrap();
        let mut pager = Pager::create(&dir.path().join("t.pdx")).unwrap();
        pager.allocate_page(PageKind::Catalog).unwrap();
        pager.write_db_header(PageId::NONE).unwrap();
        (dir, pager)
    }

    #[test]
    fn allocation_is_sequential_and_extends_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pdx");
        let mut pager = Pager::create(&path).unwrap();
        for want in 0..5u32 {
            let (id, _) = pager.allocate_page(PageKind::Heap).unwrap();
            assert_eq!(id, PageId { file_id: 1, page_no: want });
            let len = std::fs::metadata(&path).unwrap().len();
            assert_eq!(len, (want as u64 + 1) * PAGE_SIZE as u64);
        }
    }

    #[test]
    fn write_read_roundtrip_and_counters() {
        let (_dir, mut pager) = temp_pager();
        let (id, mut page) = pager.allocate_page(PageKind::Heap).unwrap();
        page.append_record(&vec![0xAB; MAX_RECORD]).unwrap();
        pager.write_page(&mut page).unwrap();

        let before = pager.io;
        let got = pager.read_page(id).unwrap();
        let got2 = pager.read_page(id).unwrap();
        assert_eq!(pager.io.logical_reads, before.logical_reads + 2);
        assert_eq!(&got.buf[..], &page.buf[..]);
        assert_eq!(&got2.buf[..], &page.buf[..]);
    }

    #[test]
    fn out_of_range_read() {
        let (_dir, mut pager) = temp_pager();
        for _ in 0..9 {
            pager.allocate_page(PageKind::Heap).unwrap();
        }
        let err = pager.read_page(PageId::new(999)).unwrap_err();
        assert!(matches!(err, Error::PageOutOfRange { page_no: 999, allocated: 10, .. }));
        // The sentinel file id is never readable either.
        assert!(pager.read_page(PageId::NONE).is_err());
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pdx");
        let mut pager = Pager::create(&path).unwrap();
        pager.allocate_page(PageKind::Catalog).unwrap();
        pager.write_db_header(PageId::NONE).unwrap();
        let (id, mut page) = pager.allocate_page(PageKind::Heap).unwrap();
        page.append_record(b"payload").unwrap();
        pager.write_page(&mut page).unwrap();
        drop(pager);

        // Flip one record byte behind the pager's back.
        let file = OpenOptions::new().write(true).open(&path).unwrap();
        file.write_all_at(&[0xFF], PAGE_SIZE as u64 + 40).unwrap();

        let mut pager = Pager::open(&path).unwrap();
        assert!(matches!(pager.read_page(id), Err(Error::Corrupt(_))));
    }

    #[test]
    fn db_header_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pdx");
        let mut pager = Pager::create(&path).unwrap();
        let (p0, _) = pager.allocate_page(PageKind::Catalog).unwrap();
        assert_eq!(p0.page_no, 0);
        pager.write_db_header(PageId::new(7)).unwrap();
        drop(pager);

        let mut pager = Pager::open(&path).unwrap();
        assert_eq!(pager.read_db_header().unwrap(), PageId::new(7));

        // Magic sits at byte 0 of the file.
        let mut head = [0u8; 8];
        let file = File::open(&path).unwrap();
        file.read_exact_at(&mut head, 0).unwrap();
        assert_eq!(&head, MAGIC);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pdx");
        std::fs::write(&path, vec![0u8; PAGE_SIZE]).unwrap();
        let mut pager = Pager::open(&path).unwrap();
        assert!(matches!(pager.read_db_header(), Err(Error::Corrupt(_))));
    }
}
