//! Coverage-based selection of the passing tests related to a patch.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariant::MethodId;

/// Methods covered by each test. On disk:
/// `{"tests": {"<testId>": ["<Class>.<method>(<params>)", ...]}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageMap {
    pub tests: BTreeMap<String, BTreeSet<MethodId>>,
}

#[derive(Serialize, Deserialize)]
struct CoverageFile {
    tests: BTreeMap<String, Vec<String>>,
}

impl CoverageMap {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: CoverageFile =
            serde_json::from_str(text).map_err(|e| Error::json("coverage file", e))?;
        let mut tests = BTreeMap::new();
        for (id, methods) in file.tests {
            let mut covered = BTreeSet::new();
            for m in methods {
                let method = MethodId::parse(&m).ok_or_else(|| {
                    Error::InvalidConfig(format!("test `{id}`: bad method name `{m}`"))
                })?;
                covered.insert(method);
            }
            tests.insert(id, covered);
        }
        Ok(CoverageMap { tests })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = CoverageFile {
            tests: self
                .tests
                .iter()
                .map(|(id, ms)| (id.clone(), ms.iter().map(MethodId::to_string).collect()))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("coverage serialization is infallible")
    }
}

/// Tests covering at least one modified method, sorted by identifier.
pub fn select_related_tests(
    coverage: &CoverageMap,
    modified_methods: &BTreeSet<MethodId>,
) -> Result<Vec<String>> {
    if modified_methods.is_empty() {
        return Err(Error::EmptyModifiedSet);
    }
    // BTreeMap iteration is already sorted by test id
    Ok(coverage
        .tests
        .iter()
        .filter(|(_, covered)| !covered.is_disjoint(modified_methods))
        .map(|(id, _)| id.clone())
        .collect())
}

/// Splits a comma-separated method list, ignoring commas inside parameter
/// lists: `A.f(int, long),B.g()` -> `[A.f(int, long), B.g()]`.
pub fn parse_method_list(list: &str) -> Result<BTreeSet<MethodId>> {
    let mut out = BTreeSet::new();
    let mut depth = 0i32;
    let mut start = 0;
    let mut push = |piece: &str| -> Result<()> {
        let piece = piece.trim();
        if piece.is_empty() {
            return Ok(());
        }
        let m = MethodId::parse(piece)
            .ok_or_else(|| Error::InvalidConfig(format!("bad method name `{piece}`")))?;
        out.insert(m);
        Ok(())
    };
    for (i, c) in list.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                push(&list[start..i])?;
                start = i + 1;
            }
            _ => {}
        }
    }
    push(&list[start..])?;
    Ok(out)
}
