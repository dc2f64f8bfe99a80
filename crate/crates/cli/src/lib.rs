//! Building blocks of the `gjrdf` command-line tool.

pub mod input;
pub mod report;
pub mod row;
