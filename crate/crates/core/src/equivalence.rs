//! Semantic equivalence of invariant atoms.
//!
//! Linear comparisons are brought into a canonical form that is unique per
//! solution set over the rationals:
//!
//! * `>=`/`>` are rewritten to `<=`/`<` by negating both sides,
//! * terms are sorted by variable name,
//! * the gcd of all coefficients and the constant is divided out,
//! * `==`/`!=` atoms get a positive leading coefficient.
//!
//! Strict inequalities are not tightened (`x < 1` is not `x <= 0`), so the
//! forms agree with rational, not integer, semantics. Atoms whose variables
//! all cancel are constant truths and collapse to `0 == 0` or `0 != 0`.
//!
//! An external SMT solver can optionally be consulted for linear pairs whose
//! canonical forms differ; see [`SolverHook`].

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariant::{InvariantAtom, Relation, Term, ORIG_PREFIX};

/// Environment variable naming the optional solver command.
pub const SOLVER_ENV: &str = "PATCHCHECK_SOLVER";

/// An atom in canonical form. Only [`normalize`] constructs one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CanonicalAtom(InvariantAtom);

impl CanonicalAtom {
    pub fn atom(&self) -> &InvariantAtom {
        &self.0
    }

    pub fn into_atom(self) -> InvariantAtom {
        self.0
    }
}

impl fmt::Display for CanonicalAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn holds_constant(lhs: i64, relation: Relation, rhs: i64) -> bool {
    match relation {
        Relation::Lt => lhs < rhs,
        Relation::Le => lhs <= rhs,
        Relation::Eq => lhs == rhs,
        Relation::Ne => lhs != rhs,
        Relation::Ge => lhs >= rhs,
        Relation::Gt => lhs > rhs,
    }
}

fn normalize_linear(terms: &[Term], relation: Relation, constant: i64) -> InvariantAtom {
    // merge duplicates defensively; the parser already does this
    let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
    for t in terms {
        match merged.iter_mut().find(|m| m.variable == t.variable) {
            Some(m) => m.coefficient += t.coefficient,
            None => merged.push(t.clone()),
        }
    }
    merged.retain(|t| t.coefficient != 0);

    if merged.is_empty() {
        let truth = holds_constant(0, relation, constant);
        return InvariantAtom::LinearComparison {
            terms: Vec::new(),
            relation: if truth { Relation::Eq } else { Relation::Ne },
            constant: 0,
        };
    }

    let (mut relation, mut constant) = (relation, constant);
    if matches!(relation, Relation::Ge | Relation::Gt) {
        for t in &mut merged {
            t.coefficient = -t.coefficient;
        }
        constant = -constant;
        relation = relation.mirrored();
    }

    merged.sort_by(|a, b| a.variable.cmp(&b.variable));

    let g = merged
        .iter()
        .fold(constant.abs(), |g, t| gcd(g, t.coefficient));
    if g > 1 {
        for t in &mut merged {
            t.coefficient /= g;
        }
        constant /= g;
    }

    if matches!(relation, Relation::Eq | Relation::Ne) && merged[0].coefficient < 0 {
        for t in &mut merged {
            t.coefficient = -t.coefficient;
        }
        constant = -constant;
    }

    InvariantAtom::LinearComparison {
        terms: merged,
        relation,
        constant,
    }
}

/// Canonical form of `atom`. Idempotent; preserves the solution set of
/// linear comparisons.
pub fn normalize(atom: &InvariantAtom) -> CanonicalAtom {
    let canonical = match atom {
        InvariantAtom::LinearComparison {
            terms,
            relation,
            constant,
        } => normalize_linear(terms, *relation, *constant),
        InvariantAtom::ClassEquality { .. } => atom.clone(),
        InvariantAtom::OneOf { expression, values } => {
            let values: BTreeSet<&String> = values.iter().collect();
            InvariantAtom::OneOf {
                expression: expression.clone(),
                values: values.into_iter().cloned().collect(),
            }
        }
        InvariantAtom::Opaque { normalized_text } => InvariantAtom::opaque(normalized_text),
    };
    CanonicalAtom(canonical)
}

/// True iff the canonical forms coincide. Cross-kind pairs are never
/// equivalent.
pub fn equivalent(a: &InvariantAtom, b: &InvariantAtom) -> bool {
    normalize(a) == normalize(b)
}

fn smt_symbol(name: &str) -> String {
    let shown = match name.strip_prefix(ORIG_PREFIX) {
        Some(inner) => format!("orig({inner})"),
        None => name.to_string(),
    };
    // quoted symbols may not contain '|' or '\'
    format!("|{}|", shown.replace(['|', '\\'], "_"))
}

fn smt_int(n: i64) -> String {
    if n < 0 {
        format!("(- {})", n.unsigned_abs())
    } else {
        n.to_string()
    }
}

fn smt_linear(terms: &[Term], relation: Relation, constant: i64) -> String {
    let rendered: Vec<String> = terms
        .iter()
        .map(|t| match t.coefficient {
            1 => smt_symbol(&t.variable),
            c => format!("(* {} {})", smt_int(c), smt_symbol(&t.variable)),
        })
        .collect();
    let lhs = match rendered.len() {
        0 => "0".to_string(),
        1 => rendered.into_iter().next().unwrap(),
        _ => format!("(+ {})", rendered.join(" ")),
    };
    let rhs = smt_int(constant);
    match relation {
        Relation::Ne => format!("(not (= {lhs} {rhs}))"),
        r => {
            let op = match r {
                Relation::Lt => "<",
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
                Relation::Gt => ">",
                Relation::Ne => unreachable!(),
            };
            format!("({op} {lhs} {rhs})")
        }
    }
}

fn linear_parts(atom: &InvariantAtom) -> Result<(&[Term], Relation, i64)> {
    match atom {
        InvariantAtom::LinearComparison {
            terms,
            relation,
            constant,
        } => Ok((terms, *relation, *constant)),
        other => Err(Error::UnsupportedAtom(other.to_string())),
    }
}

/// SMT-LIB2 query asserting that `a` and `b` are NOT equivalent over the
/// reals. `unsat` means the atoms are equivalent.
pub fn emit_equivalence_query(a: &InvariantAtom, b: &InvariantAtom) -> Result<String> {
    let (ta, ra, ca) = linear_parts(a)?;
    let (tb, rb, cb) = linear_parts(b)?;
    let vars: BTreeSet<&str> = ta
        .iter()
        .chain(tb)
        .map(|t| t.variable.as_str())
        .collect();

    let fa = smt_linear(ta, ra, ca);
    let fb = smt_linear(tb, rb, cb);
    let mut out = String::new();
    out.push_str("; unsat <=> equivalent\n");
    out.push_str(&format!("; A: {a}\n; B: {b}\n"));
    out.push_str("(set-logic QF_LRA)\n");
    for v in vars {
        out.push_str(&format!("(declare-const {} Real)\n", smt_symbol(v)));
    }
    out.push_str(&format!(
        "(assert (not (and (=> {fa} {fb}) (=> {fb} {fa}))))\n"
    ));
    out.push_str("(check-sat)\n");
    Ok(out)
}

/// Solver answer for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverAnswer {
    Sat,
    Unsat,
    Unknown,
}

/// External command that reads an SMT-LIB2 query on stdin and prints
/// `sat`/`unsat`. Any other output, or a failure to run, is `Unknown`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverHook {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl SolverHook {
    /// Splits a command line on whitespace, e.g. `"z3 -in -smt2"`.
    pub fn from_command_line(cmd: &str) -> Option<SolverHook> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(SolverHook {
            program,
            args: parts.collect(),
        })
    }

    pub fn from_env() -> Option<SolverHook> {
        std::env::var(SOLVER_ENV)
            .ok()
            .and_then(|c| Self::from_command_line(&c))
    }

    pub fn check(&self, query: &str) -> SolverAnswer {
        let child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn();
        let Ok(mut child) = child else {
            return SolverAnswer::Unknown;
        };
        if let Some(mut stdin) = child.stdin.take() {
            if stdin.write_all(query.as_bytes()).is_err() {
                let _ = child.kill();
                return SolverAnswer::Unknown;
            }
        }
        let Ok(output) = child.wait_with_output() else {
            return SolverAnswer::Unknown;
        };
        let stdout = String::from_utf8_lossy(&output.stdout);
        match stdout.split_whitespace().next() {
            Some("unsat") => SolverAnswer::Unsat,
            Some("sat") => SolverAnswer::Sat,
            _ => SolverAnswer::Unknown,
        }
    }
}

/// Equivalence checker: the normalizer, optionally backed by a solver for
/// linear pairs the normalizer calls different.
#[derive(Debug, Clone, Default)]
pub struct Equivalence {
    solver: Option<SolverHook>,
}

impl Equivalence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_solver(solver: Option<SolverHook>) -> Self {
        Equivalence { solver }
    }

    pub fn has_solver(&self) -> bool {
        self.solver.is_some()
    }

    pub fn equivalent(&self, a: &InvariantAtom, b: &InvariantAtom) -> bool {
        self.equivalent_canonical(&normalize(a), &normalize(b))
    }

    pub fn equivalent_canonical(&self, a: &CanonicalAtom, b: &CanonicalAtom) -> bool {
        if a == b {
            return true;
        }
        let Some(solver) = &self.solver else {
            return false;
        };
        match emit_equivalence_query(a.atom(), b.atom()) {
            Ok(query) => solver.check(&query) == SolverAnswer::Unsat,
            Err(_) => false,
        }
    }
}
