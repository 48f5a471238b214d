//! File formats, JSON reports and the command-line front-end for
//! [`gpz_core`].

pub mod cli;
pub mod format;
pub mod json;
pub mod params;
pub mod pipeline;
pub mod report;
