use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the engine and all index structures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("storage full: {0}")]
    StorageFull(String),
    #[error("page out of range: file {file_id} page {page_no} (allocated {allocated})")]
    PageOutOfRange {
        file_id: u16,
        page_no: u32,
        allocated: u32,
    },
    #[error("page full: need {need} bytes, {free} free")]
    PageFull { need: usize, free: usize },
    #[error("record too large: {len} bytes (max {max})")]
    RecordTooLarge { len: usize, max: usize },
    #[error("corrupt database: {0}")]
    Corrupt(String),
    #[error("database locked: {0}")]
    DatabaseLocked(String),

    #[error("row not found")]
    RowNotFound,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("duplicate key in index '{index}': {key}")]
    DuplicateKey { index: String, key: String },
    #[error("entry too large for index page: {len} bytes (max {max})")]
    EntryTooLarge { len: usize, max: usize },
    #[error("entry not found")]
    EntryNotFound,

    #[error("invalid bucket count: {0}")]
    InvalidBucketCount(u64),

    #[error("arithmetic overflow in aggregate")]
    Overflow,
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("empty table: {0}")]
    EmptyTable(String),
    #[error("missing statistics for {0}")]
    MissingStats(String),

    #[error("duplicate name: {0}")]
    DuplicateName(String),
    #[error("table '{0}' already has a clustered index")]
    SecondClusteredIndex(String),
    #[error("column '{0}' has a large-object type and cannot be an index key column")]
    BlobKeyColumn(String),
    #[error("invalid index definition: {0}")]
    InvalidIndexDef(String),
    #[error("unknown table: {0}")]
    UnknownTable(String),
    #[error("unknown column: {0}")]
    UnknownColumn(String),
    #[error("unknown index: {0}")]
    UnknownIndex(String),

    #[error("empty workload")]
    EmptyWorkload,
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True when the error is the caller's fault (bad arguments, bad input
    /// files, constraint violations) rather than an internal failure.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Corrupt(_) | Error::StorageFull(_) | Error::MissingStats(_)
        )
    }
}
