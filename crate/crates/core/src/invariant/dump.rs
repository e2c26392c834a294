//! Text format for invariant dumps.
//!
//! A dump is a sequence of records separated by lines of at least 40 `=`.
//! Each record starts with a program point header
//! (`pkg.Class.method(params):::ENTER` or `:::EXIT[n]`) followed by one
//! invariant per non-empty line. Text before the first separator that is not
//! a header (tool banner) is ignored, as are `:::OBJECT` / `:::CLASS` records.
//!
//! A corpus document wraps six such dumps, one per (variant, partition)
//! slot, behind `%% slot <variant> <partition>` marker lines.

use std::fmt::Write as _;

use super::{Invariant, InvariantCorpus, Partition, PointKind, PointMap, ProgramPoint, Variant};
use crate::error::{Error, Result};

const MIN_SEPARATOR: usize = 40;
const SEPARATOR: &str =
    "===========================================================================";
const CORPUS_HEADER: &str = "%% invariant-corpus v1";
const SLOT_MARKER: &str = "%% slot ";

fn is_separator(line: &str) -> bool {
    let t = line.trim();
    t.len() >= MIN_SEPARATOR && t.bytes().all(|b| b == b'=')
}

enum Header {
    Point(ProgramPoint),
    /// Object/class invariant points; not method points.
    Skip,
}

fn parse_header(line: &str) -> Option<Header> {
    let line = line.trim();
    let (target, suffix) = line.split_once(":::")?;
    let kind = match suffix {
        "ENTER" => PointKind::Enter,
        "EXIT" => PointKind::Exit(None),
        "OBJECT" | "CLASS" => return Some(Header::Skip),
        s => {
            let digits = s.strip_prefix("EXIT")?;
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            PointKind::Exit(Some(digits.parse().ok()?))
        }
    };
    let method = super::MethodId::parse(target)?;
    Some(Header::Point(ProgramPoint {
        class_name: method.class_name,
        method_signature: method.method_signature,
        kind,
    }))
}

/// Parses records into a point map; an input without records yields an
/// empty map.
fn parse_records(text: &str, first_line_no: usize) -> Result<PointMap> {
    let mut map = PointMap::new();
    let mut seen_separator = false;
    // (header line number, lines)
    let mut chunk: Vec<(usize, &str)> = Vec::new();
    let mut chunks: Vec<(bool, Vec<(usize, &str)>)> = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if is_separator(line) {
            chunks.push((seen_separator, std::mem::take(&mut chunk)));
            seen_separator = true;
        } else {
            chunk.push((first_line_no + i, line));
        }
    }
    chunks.push((seen_separator, chunk));

    for (after_separator, lines) in chunks {
        let mut lines = lines.into_iter().filter(|(_, l)| !l.trim().is_empty());
        let Some((line_no, header)) = lines.next() else {
            continue;
        };
        let point = match parse_header(header) {
            Some(Header::Point(p)) => p,
            Some(Header::Skip) => continue,
            // banner text ahead of the first record
            None if !after_separator && !header.contains(":::") => continue,
            None => {
                return Err(Error::MalformedHeader {
                    line: line_no,
                    text: header.trim().to_string(),
                })
            }
        };
        let set = map.entry(point.clone()).or_default();
        for (_, line) in lines {
            let line = line.trim();
            if line == "Exiting Daikon." {
                continue;
            }
            set.insert(Invariant::parse(point.clone(), line));
        }
    }
    Ok(map)
}

/// Parses one invariant dump into a map from program point to invariants.
pub fn parse_invariant_file(text: &str) -> Result<PointMap> {
    let map = parse_records(text, 1)?;
    if map.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(map)
}

/// Renders a point map in dump format: points in key order, invariants
/// sorted by canonical text.
pub fn serialize_point_map(map: &PointMap) -> String {
    let mut out = String::new();
    write_point_map(&mut out, map);
    out
}

fn write_point_map(out: &mut String, map: &PointMap) {
    for (point, set) in map {
        out.push_str(SEPARATOR);
        out.push('\n');
        let _ = writeln!(out, "{point}");
        let mut items: Vec<(String, &str)> = set
            .entries()
            .map(|(key, inv)| (key.to_string(), inv.raw_text.as_str()))
            .collect();
        items.sort();
        for (_, raw) in items {
            out.push_str(raw);
            out.push('\n');
        }
    }
}

/// Serializes all six corpus slots. Empty slots are omitted; an empty
/// corpus is just the document header.
pub fn serialize_corpus(corpus: &InvariantCorpus) -> String {
    let mut out = String::new();
    out.push_str(CORPUS_HEADER);
    out.push('\n');
    for (variant, partition, map) in corpus.slots() {
        if map.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{SLOT_MARKER}{} {}", variant.name(), partition.name());
        write_point_map(&mut out, map);
    }
    out
}

fn parse_slot(spec: &str) -> Option<(Variant, Partition)> {
    let mut parts = spec.split_whitespace();
    let (v, p) = (parts.next()?, parts.next()?);
    if parts.next().is_some() {
        return None;
    }
    let variant = Variant::ALL.into_iter().find(|x| x.name() == v)?;
    let partition = Partition::ALL.into_iter().find(|x| x.name() == p)?;
    Some((variant, partition))
}

/// Parses a document produced by [`serialize_corpus`].
pub fn parse_corpus(text: &str) -> Result<InvariantCorpus> {
    let mut corpus = InvariantCorpus::new();
    let mut lines = text.lines().enumerate().peekable();
    match lines.next() {
        Some((_, l)) if l.trim_end() == CORPUS_HEADER => {}
        Some((_, l)) => {
            return Err(Error::MalformedHeader {
                line: 1,
                text: l.to_string(),
            })
        }
        None => return Err(Error::EmptyInput),
    }

    let mut current: Option<(usize, (Variant, Partition), String)> = None;
    let flush = |corpus: &mut InvariantCorpus,
                 current: Option<(usize, (Variant, Partition), String)>|
     -> Result<()> {
        if let Some((start, (v, p), body)) = current {
            let map = parse_records(&body, start)?;
            corpus.set_slot(v, p, map);
        }
        Ok(())
    };
    for (i, line) in lines {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if let Some(spec) = line.strip_prefix(SLOT_MARKER) {
            let slot = parse_slot(spec).ok_or_else(|| Error::MalformedHeader {
                line: i + 1,
                text: line.to_string(),
            })?;
            flush(&mut corpus, current.take())?;
            current = Some((i + 2, slot, String::new()));
        } else if let Some((_, _, body)) = current.as_mut() {
            body.push_str(line);
            body.push('\n');
        } else if !line.trim().is_empty() {
            return Err(Error::MalformedHeader {
                line: i + 1,
                text: line.to_string(),
            });
        }
    }
    flush(&mut corpus, current)?;
    Ok(corpus)
}
