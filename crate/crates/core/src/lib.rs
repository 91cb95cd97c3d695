//! pdex: an embedded, single-file, page-based storage engine for studying
//! physical database design. One database is one file of 8 KiB slotted
//! pages holding heaps, B+ tree indexes (clustered, non-clustered, unique,
//! filtered), and columnstores, plus a catalog describing them. Every page
//! access is counted, which makes index depth, scan cost, and access-path
//! choice directly observable.

pub mod btree;
pub mod catalog;
pub mod columnstore;
pub mod engine;
pub mod error;
pub mod hash;
pub mod heap;
pub mod key;
pub mod advisor;
pub mod page;
pub mod pager;
pub mod planner;
pub mod predicate;
pub mod query;
pub mod row;
pub mod stats;
pub mod trace;
pub mod value;
mod wire;

pub use error::{Error, Result};
pub use value::{ColumnType, Value};
