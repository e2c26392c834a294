//! Typed model of likely invariants reported at method entry/exit points.
//!
//! Invariant text is parsed into an [`InvariantAtom`]. A small fragment is
//! understood structurally (linear comparisons, class equality, one-of sets);
//! everything else is kept as [`InvariantAtom::Opaque`] and compared by its
//! whitespace-normalized text.

mod atom;
mod dump;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::equivalence::{normalize, CanonicalAtom};

pub use atom::parse_atom;
pub use dump::{parse_corpus, parse_invariant_file, serialize_corpus, serialize_point_map};

/// Method entry or exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PointKind {
    Enter,
    /// `:::EXIT` (index absent) or `:::EXITn`.
    Exit(Option<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProgramPoint {
    pub class_name: String,
    /// Method name plus the verbatim parameter list, e.g. `fit3(double[])`.
    pub method_signature: String,
    pub kind: PointKind,
}

impl ProgramPoint {
    pub fn new(
        class_name: impl Into<String>,
        method_signature: impl Into<String>,
        kind: PointKind,
    ) -> Self {
        ProgramPoint {
            class_name: class_name.into(),
            method_signature: method_signature.into(),
            kind,
        }
    }

    pub fn enter(class_name: impl Into<String>, method_signature: impl Into<String>) -> Self {
        Self::new(class_name, method_signature, PointKind::Enter)
    }

    pub fn method(&self) -> MethodId {
        MethodId {
            class_name: self.class_name.clone(),
            method_signature: self.method_signature.clone(),
        }
    }
}

impl fmt::Display for ProgramPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}:::", self.class_name, self.method_signature)?;
        match self.kind {
            PointKind::Enter => f.write_str("ENTER"),
            PointKind::Exit(None) => f.write_str("EXIT"),
            PointKind::Exit(Some(n)) => write!(f, "EXIT{n}"),
        }
    }
}

/// A method identified by class and exact signature string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MethodId {
    pub class_name: String,
    pub method_signature: String,
}

impl MethodId {
    pub fn new(class_name: impl Into<String>, method_signature: impl Into<String>) -> Self {
        MethodId {
            class_name: class_name.into(),
            method_signature: method_signature.into(),
        }
    }

    /// Parses `pkg.Class.method(params)`. The class is everything before the
    /// last `.` that precedes the parameter list.
    pub fn parse(text: &str) -> Option<MethodId> {
        let text = text.trim();
        let open = text.find('(')?;
        if !text.ends_with(')') {
            return None;
        }
        let dot = text[..open].rfind('.')?;
        let class_name = &text[..dot];
        let method_signature = &text[dot + 1..];
        if class_name.is_empty() || method_signature.len() <= open - dot {
            return None;
        }
        // method name must be non-empty
        if open == dot + 1 {
            return None;
        }
        Some(MethodId::new(class_name, method_signature))
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.class_name, self.method_signature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Eq => "==",
            Relation::Ne => "!=",
            Relation::Ge => ">=",
            Relation::Gt => ">",
        }
    }

    /// The relation obtained by multiplying both sides by -1.
    pub fn mirrored(self) -> Relation {
        match self {
            Relation::Lt => Relation::Gt,
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
            Relation::Gt => Relation::Lt,
            r => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Term {
    pub coefficient: i64,
    pub variable: String,
}

impl Term {
    pub fn new(coefficient: i64, variable: impl Into<String>) -> Self {
        Term {
            coefficient,
            variable: variable.into(),
        }
    }
}

/// One parsed invariant. `LinearComparison` reads as
/// `sum(coefficient * variable) <relation> constant`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InvariantAtom {
    LinearComparison {
        terms: Vec<Term>,
        relation: Relation,
        constant: i64,
    },
    ClassEquality {
        expression: String,
        class_literal: String,
    },
    OneOf {
        expression: String,
        values: Vec<String>,
    },
    Opaque {
        normalized_text: String,
    },
}

/// Prefix marking a pre-state (`orig(x)`) variable.
pub const ORIG_PREFIX: &str = "orig$";

impl InvariantAtom {
    pub fn opaque(text: &str) -> Self {
        InvariantAtom::Opaque {
            normalized_text: collapse_whitespace(text),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, InvariantAtom::LinearComparison { .. })
    }

    /// Variables referenced by a linear atom, sorted.
    pub fn variables(&self) -> BTreeSet<&str> {
        match self {
            InvariantAtom::LinearComparison { terms, .. } => {
                terms.iter().map(|t| t.variable.as_str()).collect()
            }
            _ => BTreeSet::new(),
        }
    }
}

fn write_variable(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    match name.strip_prefix(ORIG_PREFIX) {
        Some(inner) => write!(f, "orig({inner})"),
        None => f.write_str(name),
    }
}

impl fmt::Display for InvariantAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvariantAtom::LinearComparison {
                terms,
                relation,
                constant,
            } => {
                if terms.is_empty() {
                    f.write_str("0")?;
                }
                for (i, term) in terms.iter().enumerate() {
                    let c = term.coefficient;
                    if i == 0 {
                        if c < 0 {
                            f.write_str("-")?;
                        }
                    } else {
                        f.write_str(if c < 0 { " - " } else { " + " })?;
                    }
                    if c.abs() != 1 {
                        write!(f, "{} * ", c.abs())?;
                    }
                    write_variable(f, &term.variable)?;
                }
                write!(f, " {} {}", relation.symbol(), constant)
            }
            InvariantAtom::ClassEquality {
                expression,
                class_literal,
            } => write!(f, "{expression}.getClass() == {class_literal}.class"),
            InvariantAtom::OneOf { expression, values } => {
                write!(f, "{expression} one of {{ {} }}", values.join(", "))
            }
            InvariantAtom::Opaque { normalized_text } => f.write_str(normalized_text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Invariant {
    pub point: ProgramPoint,
    pub raw_text: String,
    pub atom: InvariantAtom,
}

impl Invariant {
    /// Parses `text` at `point`; text outside the fragment becomes opaque.
    pub fn parse(point: ProgramPoint, text: &str) -> Self {
        let raw_text = collapse_whitespace(text);
        let atom = parse_atom(&raw_text);
        Invariant {
            point,
            raw_text,
            atom,
        }
    }

    pub fn canonical(&self) -> CanonicalAtom {
        normalize(&self.atom)
    }
}

/// Invariants at one program point, deduplicated by canonical atom.
/// Iteration order is the canonical-atom order, so two sets holding the same
/// invariants compare equal regardless of insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvariantSet {
    items: BTreeMap<CanonicalAtom, Invariant>,
}

impl InvariantSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts unless an invariant with the same canonical atom exists.
    /// Returns whether the set changed.
    pub fn insert(&mut self, inv: Invariant) -> bool {
        let key = inv.canonical();
        if self.items.contains_key(&key) {
            return false;
        }
        self.items.insert(key, inv);
        true
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains_canonical(&self, key: &CanonicalAtom) -> bool {
        self.items.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Invariant> {
        self.items.values()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&CanonicalAtom, &Invariant)> {
        self.items.iter()
    }
}

impl FromIterator<Invariant> for InvariantSet {
    fn from_iter<I: IntoIterator<Item = Invariant>>(iter: I) -> Self {
        let mut set = InvariantSet::new();
        for inv in iter {
            set.insert(inv);
        }
        set
    }
}

impl<'a> IntoIterator for &'a InvariantSet {
    type Item = &'a Invariant;
    type IntoIter = std::collections::btree_map::Values<'a, CanonicalAtom, Invariant>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.values()
    }
}

impl Serialize for InvariantSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.items.values())
    }
}

pub type PointMap = BTreeMap<ProgramPoint, InvariantSet>;

/// Builds a point map from `(point, invariant text)` pairs.
pub fn point_map_from<'a, I>(pairs: I) -> PointMap
where
    I: IntoIterator<Item = (ProgramPoint, &'a str)>,
{
    let mut map = PointMap::new();
    for (point, text) in pairs {
        let inv = Invariant::parse(point.clone(), text);
        map.entry(point).or_default().insert(inv);
    }
    map
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Buggy,
    #[serde(rename = "groundtruth")]
    GroundTruth,
    Patched,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Buggy, Variant::GroundTruth, Variant::Patched];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Buggy => "buggy",
            Variant::GroundTruth => "groundtruth",
            Variant::Patched => "patched",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partition {
    #[serde(rename = "passing")]
    PassingTraces,
    #[serde(rename = "failing")]
    FailingTraces,
}

impl Partition {
    pub const ALL: [Partition; 2] = [Partition::PassingTraces, Partition::FailingTraces];

    pub fn name(self) -> &'static str {
        match self {
            Partition::PassingTraces => "passing",
            Partition::FailingTraces => "failing",
        }
    }
}

/// Invariants for every (variant, partition) slot. All six slots always exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantCorpus {
    entries: BTreeMap<(Variant, Partition), PointMap>,
}

impl Default for InvariantCorpus {
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        for v in Variant::ALL {
            for p in Partition::ALL {
                entries.insert((v, p), PointMap::new());
            }
        }
        InvariantCorpus { entries }
    }
}

impl InvariantCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn slot(&self, variant: Variant, partition: Partition) -> &PointMap {
        &self.entries[&(variant, partition)]
    }

    pub fn slot_mut(&mut self, variant: Variant, partition: Partition) -> &mut PointMap {
        self.entries
            .get_mut(&(variant, partition))
            .expect("all corpus slots are populated at construction")
    }

    pub fn set_slot(&mut self, variant: Variant, partition: Partition, map: PointMap) {
        self.entries.insert((variant, partition), map);
    }

    pub fn slots(&self) -> impl Iterator<Item = (Variant, Partition, &PointMap)> {
        self.entries.iter().map(|(&(v, p), m)| (v, p, m))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(|m| m.is_empty())
    }

    /// Applies [`filter_by_methods`] to every slot.
    pub fn restrict(&self, granularity: Granularity, methods: &BTreeSet<MethodId>) -> Self {
        InvariantCorpus {
            entries: self
                .entries
                .iter()
                .map(|(k, m)| (*k, filter_by_methods(m, granularity, methods)))
                .collect(),
        }
    }
}

/// Which program points participate in specification inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// Every method executed by the tests.
    #[default]
    #[serde(alias = "executed_methods")]
    Executed,
    /// Only the methods changed by the developer fix.
    #[serde(alias = "buggy_methods")]
    Buggy,
}

/// Keeps the points whose method is in `methods` (exact signature match).
/// With [`Granularity::Executed`] the map is returned unchanged.
pub fn filter_by_methods(
    points: &PointMap,
    granularity: Granularity,
    methods: &BTreeSet<MethodId>,
) -> PointMap {
    match granularity {
        Granularity::Executed => points.clone(),
        Granularity::Buggy => points
            .iter()
            .filter(|(pt, _)| methods.contains(&pt.method()))
            .map(|(pt, set)| (pt.clone(), set.clone()))
            .collect(),
    }
}

pub(crate) fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
