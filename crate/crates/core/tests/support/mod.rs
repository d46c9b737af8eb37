//! Shared by the integration test targets; not every target uses every item.
#![allow(dead_code)]

pub mod gen;
pub mod oracle;
