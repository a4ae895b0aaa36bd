//! File formats, parallel drivers and the `fscap` command line on top of
//! `fscap-core`.

pub mod cli;
pub mod format;
pub mod parallel;
pub mod registry;
pub mod report;
pub mod sweep;
