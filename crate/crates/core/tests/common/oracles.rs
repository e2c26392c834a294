//! Straight-line reference computations. None of these call into the code
//! they check, except for parsing and the pairwise equivalence predicate
//! where noted.

use std::collections::{BTreeMap, BTreeSet};

use patchcheck_core::equivalence::equivalent;
use patchcheck_core::invariant::{InvariantAtom, MethodId, PointMap, ProgramPoint, Relation};
use patchcheck_core::semantic::Rule;
use patchcheck_core::Correctness;

// ---------------------------------------------------------------------------
// linear atom semantics

/// `(coefficients aligned with vars, relation, constant)`.
fn dense(atom: &InvariantAtom, vars: &[&str]) -> (Vec<i64>, Relation, i64) {
    let InvariantAtom::LinearComparison {
        terms,
        relation,
        constant,
    } = atom
    else {
        panic!("oracle only handles linear atoms");
    };
    let mut coefs = vec![0; vars.len()];
    for t in terms {
        let i = vars.iter().position(|v| *v == t.variable).unwrap();
        coefs[i] += t.coefficient;
    }
    (coefs, *relation, *constant)
}

/// Truth at the point `coords / den`, as `sum(c * coord) rel constant * den`
/// in exact integers.
fn holds_scaled(atom: &(Vec<i64>, Relation, i64), coords: &[i64], den: i64) -> bool {
    let (coefs, relation, constant) = atom;
    let lhs: i64 = coefs.iter().zip(coords).map(|(c, x)| c * x).sum();
    let rhs = constant * den;
    match relation {
        Relation::Lt => lhs < rhs,
        Relation::Le => lhs <= rhs,
        Relation::Eq => lhs == rhs,
        Relation::Ne => lhs != rhs,
        Relation::Ge => lhs >= rhs,
        Relation::Gt => lhs > rhs,
    }
}

fn vars_of<'a>(a: &'a InvariantAtom, b: &'a InvariantAtom) -> Vec<&'a str> {
    let mut v: BTreeSet<&str> = a.variables();
    v.extend(b.variables());
    v.into_iter().collect()
}

fn floor_div(a: i64, b: i64) -> i64 {
    let q = a / b;
    if a % b != 0 && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

/// Searches the grid `{k / den : |k| <= radius * den}^n` for a point where
/// exactly one of the atoms holds. The outer axes are enumerated; along the
/// last axis each atom's truth only changes at `t = r / c`, so the ends of
/// the range and the integers next to both breakpoints cover every segment.
fn grid_witness(a: &InvariantAtom, b: &InvariantAtom, radius: i64, den: i64) -> Option<Vec<i64>> {
    let vars = vars_of(a, b);
    let (da, db) = (dense(a, &vars), dense(b, &vars));
    let lim = radius * den;
    let n = vars.len();
    if n == 0 {
        let ok = holds_scaled(&da, &[], den) == holds_scaled(&db, &[], den);
        return if ok { None } else { Some(Vec::new()) };
    }
    let last = n - 1;
    let mut coords = vec![-lim; n];
    loop {
        let mut candidates = vec![-lim, lim];
        for atom in [&da, &db] {
            let c = atom.0[last];
            if c != 0 {
                let partial: i64 = atom.0[..last].iter().zip(&coords).map(|(c, x)| c * x).sum();
                let q = floor_div(atom.2 * den - partial, c);
                candidates.extend([q - 1, q, q + 1]);
            }
        }
        for t in candidates {
            if !(-lim..=lim).contains(&t) {
                continue;
            }
            coords[last] = t;
            if holds_scaled(&da, &coords, den) != holds_scaled(&db, &coords, den) {
                return Some(coords);
            }
        }
        // odometer increment over the outer axes
        let mut i = 0;
        loop {
            if i == last {
                return None;
            }
            if coords[i] < lim {
                coords[i] += 1;
                break;
            }
            coords[i] = -lim;
            i += 1;
        }
    }
}

/// Equivalence of two linear atoms over the rationals, decided by grid
/// enumeration: a coarse grid (step 1/2 on [-3, 3]) first, then a fine grid
/// (step 1/12 on [-6, 6]). 12 is a common multiple of every coefficient in
/// [-4, 4], so hyperplane points of such atoms with small constants lie on
/// the fine grid.
pub fn equivalent_by_enumeration(a: &InvariantAtom, b: &InvariantAtom) -> bool {
    grid_witness(a, b, 3, 2).is_none() && grid_witness(a, b, 6, 12).is_none()
}

/// Agreement of two linear atoms on every integer point of `[-r, r]^n`.
pub fn agree_on_integers(a: &InvariantAtom, b: &InvariantAtom, r: i64) -> bool {
    grid_witness(a, b, r, 1).is_none()
}

// ---------------------------------------------------------------------------
// classification rules as nested loops with pairwise equivalence

fn find_equivalent(set: Option<&Vec<InvariantAtom>>, atom: &InvariantAtom) -> bool {
    set.is_some_and(|s| s.iter().any(|x| equivalent(x, atom)))
}

fn atoms_by_point(map: &PointMap) -> BTreeMap<ProgramPoint, Vec<InvariantAtom>> {
    map.iter()
        .map(|(p, set)| (p.clone(), set.iter().map(|i| i.atom.clone()).collect()))
        .collect()
}

/// Outcome of the reference implementation: witnesses as
/// (rule, point header, atom text).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopVerdict {
    pub overfitting: bool,
    pub witnesses: BTreeSet<(Rule, String, String)>,
}

pub fn nested_loop_verdict(
    passing_buggy: &PointMap,
    passing_truth: &PointMap,
    failing_buggy: &PointMap,
    failing_truth: &PointMap,
    passing_patched: &PointMap,
    failing_patched: &PointMap,
) -> LoopVerdict {
    let (pb, pg) = (atoms_by_point(passing_buggy), atoms_by_point(passing_truth));
    let (fb, fg) = (atoms_by_point(failing_buggy), atoms_by_point(failing_truth));
    let (pp, fp) = (atoms_by_point(passing_patched), atoms_by_point(failing_patched));

    // C = I^P_B ∩ I^P_G ; E = I^F_B \ I^F_G, per program point
    let mut c: Vec<(ProgramPoint, InvariantAtom)> = Vec::new();
    for (point, atoms) in &pb {
        for atom in atoms {
            if find_equivalent(pg.get(point), atom) {
                c.push((point.clone(), atom.clone()));
            }
        }
    }
    let mut e: Vec<(ProgramPoint, InvariantAtom)> = Vec::new();
    for (point, atoms) in &fb {
        for atom in atoms {
            if !find_equivalent(fg.get(point), atom) {
                e.push((point.clone(), atom.clone()));
            }
        }
    }

    let mut witnesses = BTreeSet::new();
    for (point, atom) in &c {
        if !find_equivalent(pp.get(point), atom) {
            witnesses.insert((Rule::Overfitting1, point.to_string(), atom.to_string()));
        }
    }
    for (point, atom) in &e {
        if find_equivalent(fp.get(point), atom) {
            witnesses.insert((Rule::Overfitting2, point.to_string(), atom.to_string()));
        }
    }
    LoopVerdict {
        overfitting: !witnesses.is_empty(),
        witnesses,
    }
}

// ---------------------------------------------------------------------------
// test selection

pub fn select_brute_force(
    tests: &[(String, Vec<MethodId>)],
    modified: &[MethodId],
) -> Vec<String> {
    let mut out = Vec::new();
    for (id, covered) in tests {
        let mut hit = false;
        for m in covered {
            for x in modified {
                if m == x {
                    hit = true;
                }
            }
        }
        if hit && !out.contains(id) {
            out.push(id.clone());
        }
    }
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// metrics

/// Fraction of (overfitting, correct) pairs where overfitting scores higher,
/// ties counting one half.
pub fn auc_pairwise(scores: &[(f64, Correctness)]) -> f64 {
    let pos: Vec<f64> = scores.iter().filter(|s| s.1 == Correctness::Overfitting).map(|s| s.0).collect();
    let neg: Vec<f64> = scores.iter().filter(|s| s.1 == Correctness::Correct).map(|s| s.0).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

pub fn metrics(tp: u64, fn_: u64, fp: u64, tn: u64) -> Metrics {
    let div = |a: u64, b: u64| if b == 0 { None } else { Some(a as f64 / b as f64) };
    let recall = div(tp, tp + fn_);
    let precision = div(tp, tp + fp);
    let accuracy = div(tp + tn, tp + fn_ + fp + tn);
    let f1 = match (recall, precision) {
        (Some(r), Some(p)) if r + p > 0.0 => Some(2.0 * r * p / (p + r)),
        _ => None,
    };
    Metrics {
        recall,
        precision,
        accuracy,
        f1,
    }
}

/// Half-up rounding to 2 decimals via the decimal expansion.
pub fn round_half_up_2(x: f64) -> f64 {
    let s = format!("{x:.12}");
    let (int, frac) = s.split_once('.').unwrap();
    let mut cents: i64 = int.parse::<i64>().unwrap() * 100 + frac[..2].parse::<i64>().unwrap();
    if frac.as_bytes()[2] >= b'5' {
        cents += 1;
    }
    cents as f64 / 100.0
}

/// Smallest candidate threshold (scores, 0 and 1) with no correct patch
/// above it, found by trying every candidate.
pub fn threshold_by_sweep(scores: &[(f64, Correctness)]) -> Option<f64> {
    let mut candidates: Vec<f64> = scores.iter().map(|s| s.0).collect();
    candidates.push(0.0);
    candidates.push(1.0);
    candidates.sort_by(f64::total_cmp);
    candidates.into_iter().find(|&t| {
        scores.iter().all(|&(s, l)| !(l == Correctness::Correct && s > t))
    })
    .filter(|_| scores.iter().any(|s| s.1 == Correctness::Correct))
}

pub fn false_positives(scores: &[(f64, Correctness)], threshold: f64) -> usize {
    scores
        .iter()
        .filter(|&&(s, l)| l == Correctness::Correct && s > threshold)
        .count()
}

// ---------------------------------------------------------------------------
// syntactic stage

/// `[a-b | a*b | euclid | cosine]` written out term by term.
pub fn distance_pair(a: &[f64], b: &[f64]) -> Vec<f64> {
    let k = a.len();
    let mut out = vec![0.0; 2 * k + 2];
    let mut sq = 0.0;
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..k {
        out[i] = a[i] - b[i];
        out[k + i] = a[i] * b[i];
        sq += (a[i] - b[i]) * (a[i] - b[i]);
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    out[2 * k] = sq.sqrt();
    out[2 * k + 1] = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na.sqrt() * nb.sqrt()) };
    out
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean cross-entropy written with explicit logs, plus the L2 term.
/// `ln p = -ln(1 + e^-z)` and `ln(1 - p) = -ln(1 + e^z)`.
pub fn logistic_loss(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64], l2: f64) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b;
        let log_p = -(-z).exp().ln_1p();
        let log_q = -z.exp().ln_1p();
        total += -(y * log_p + (1.0 - y) * log_q);
    }
    let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * l2 / 2.0;
    total / xs.len() as f64 + reg
}
