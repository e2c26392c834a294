//! Independent reference implementations and random input generators
//! shared by the integration tests.

#![allow(dead_code)]

pub mod gen;
pub mod mini;
pub mod oracles;

use std::path::PathBuf;

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}
