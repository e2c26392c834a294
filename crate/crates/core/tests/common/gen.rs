//! Seeded random inputs.

use std::collections::{BTreeMap, BTreeSet};

use patchcheck_core::invariant::{
    point_map_from, InvariantAtom, InvariantCorpus, MethodId, Partition, PointKind, PointMap,
    ProgramPoint, Relation, Term, Variant,
};
use patchcheck_core::selection::CoverageMap;
use patchcheck_core::Correctness;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const VARS: [&str; 3] = ["x", "y", "orig$x"];
const RELATIONS: [Relation; 6] = [
    Relation::Lt,
    Relation::Le,
    Relation::Eq,
    Relation::Ne,
    Relation::Ge,
    Relation::Gt,
];

fn linear(terms: Vec<Term>, relation: Relation, constant: i64) -> InvariantAtom {
    InvariantAtom::LinearComparison {
        terms,
        relation,
        constant,
    }
}

fn parts(atom: &InvariantAtom) -> (Vec<Term>, Relation, i64) {
    match atom {
        InvariantAtom::LinearComparison {
            terms,
            relation,
            constant,
        } => (terms.clone(), *relation, *constant),
        _ => unreachable!(),
    }
}

/// 1–3 distinct variables, coefficients in [-4, 4] \ {0}, constant in [-4, 4].
pub fn linear_atom(rng: &mut impl Rng) -> InvariantAtom {
    let n = rng.gen_range(1..=3);
    let mut vars = VARS.to_vec();
    vars.shuffle(rng);
    let terms = vars[..n]
        .iter()
        .map(|v| {
            let mut c = 0;
            while c == 0 {
                c = rng.gen_range(-4..=4);
            }
            Term::new(c, *v)
        })
        .collect();
    linear(terms, *RELATIONS.choose(rng).unwrap(), rng.gen_range(-4..=4))
}

/// Same solution set: scale by a nonzero factor (mirroring the relation for
/// negative factors) and reorder the terms.
pub fn equivalent_variant(atom: &InvariantAtom, rng: &mut impl Rng) -> InvariantAtom {
    let (mut terms, mut relation, mut constant) = parts(atom);
    let factor: i64 = *[1, 2, 3, -1, -2, -3].choose(rng).unwrap();
    for t in &mut terms {
        t.coefficient *= factor;
    }
    constant *= factor;
    if factor < 0 {
        relation = relation.mirrored();
    }
    terms.shuffle(rng);
    linear(terms, relation, constant)
}

/// A small edit that usually changes the solution set.
pub fn perturbed(atom: &InvariantAtom, rng: &mut impl Rng) -> InvariantAtom {
    let (mut terms, mut relation, mut constant) = parts(atom);
    match rng.gen_range(0..4) {
        0 => {
            relation = match relation {
                Relation::Lt => Relation::Le,
                Relation::Le => Relation::Lt,
                Relation::Gt => Relation::Ge,
                Relation::Ge => Relation::Gt,
                Relation::Eq => Relation::Ne,
                Relation::Ne => Relation::Eq,
            }
        }
        1 => constant += if rng.gen_bool(0.5) { 1 } else { -1 },
        2 => {
            let i = rng.gen_range(0..terms.len());
            let c = terms[i].coefficient + if rng.gen_bool(0.5) { 1 } else { -1 };
            terms[i].coefficient = if c == 0 { 2 * terms[i].coefficient } else { c };
        }
        _ => relation = relation.mirrored(),
    }
    linear(terms, relation, constant)
}

/// Mix of unrelated, equivalent and near-miss pairs.
pub fn atom_pair(rng: &mut impl Rng) -> (InvariantAtom, InvariantAtom) {
    let a = linear_atom(rng);
    let b = match rng.gen_range(0..10) {
        0..=2 => linear_atom(rng),
        3..=6 => equivalent_variant(&a, rng),
        _ => {
            let near = perturbed(&a, rng);
            equivalent_variant(&near, rng)
        }
    };
    (a, b)
}

/// Invariant texts with several equivalent spellings.
pub const ATOM_POOL: [&str; 16] = [
    "x >= 0",
    "0 <= x",
    "x > 0",
    "x >= 1",
    "y == x + 1",
    "y - x == 1",
    "2 * y == 2 * x + 2",
    "y != x + 1",
    "x one of { 1, 2 }",
    "x one of { 2, 1 }",
    "this.f.getClass() == Foo.class",
    "this.f.getClass() == Bar.class",
    "this.f != null",
    "size(this.items[]) == orig(size(this.items[])) + 1",
    "this.count > orig(this.count)",
    "orig(this.count) < this.count",
];

pub fn point_pool() -> Vec<ProgramPoint> {
    vec![
        ProgramPoint::enter("pkg.A", "f(int)"),
        ProgramPoint::new("pkg.A", "f(int)", PointKind::Exit(None)),
        ProgramPoint::new("pkg.B", "g()", PointKind::Exit(Some(12))),
    ]
}

pub fn point_map(rng: &mut impl Rng, points: &[ProgramPoint], p_point: f64, p_atom: f64) -> PointMap {
    let mut pairs = Vec::new();
    for p in points {
        if !rng.gen_bool(p_point) {
            continue;
        }
        for text in ATOM_POOL {
            if rng.gen_bool(p_atom) {
                pairs.push((p.clone(), text));
            }
        }
    }
    point_map_from(pairs)
}

/// Six independent random slots. Patched slots are biased towards copies of
/// the buggy or ground-truth slots so that both outcomes occur.
pub fn corpus(rng: &mut impl Rng) -> InvariantCorpus {
    let points = point_pool();
    let mut c = InvariantCorpus::new();
    for v in [Variant::Buggy, Variant::GroundTruth] {
        for p in Partition::ALL {
            c.set_slot(v, p, point_map(rng, &points, 0.8, 0.4));
        }
    }
    for p in Partition::ALL {
        let map = match rng.gen_range(0..4) {
            0 => c.slot(Variant::GroundTruth, p).clone(),
            1 => c.slot(Variant::Buggy, p).clone(),
            _ => point_map(rng, &points, 0.8, 0.4),
        };
        c.set_slot(Variant::Patched, p, map);
    }
    c
}

pub fn method_pool(n: usize) -> Vec<MethodId> {
    (0..n)
        .map(|i| MethodId::new(format!("pkg.C{}", i % 7), format!("m{i}(int)")))
        .collect()
}

/// Up to 100 tests covering random subsets of `methods`.
pub fn coverage(rng: &mut impl Rng, methods: &[MethodId]) -> CoverageMap {
    let n_tests = rng.gen_range(0..=100);
    let density = rng.gen_range(0.0..0.3);
    let mut tests = BTreeMap::new();
    for t in 0..n_tests {
        let covered: BTreeSet<MethodId> = methods
            .iter()
            .filter(|_| rng.gen_bool(density))
            .cloned()
            .collect();
        tests.insert(format!("pkg.Test{}::test{}", t % 9, t), covered);
    }
    CoverageMap { tests }
}

/// Up to 50 scores drawn from a few distinct values (to force ties) or
/// from [0, 1), with at least one of each label.
pub fn labeled_scores(rng: &mut impl Rng) -> Vec<(f64, Correctness)> {
    let n = rng.gen_range(2..=50);
    let tied = rng.gen_bool(0.3);
    let mut out: Vec<(f64, Correctness)> = (0..n)
        .map(|_| {
            let s = if tied {
                rng.gen_range(0..5) as f64 / 4.0
            } else {
                rng.gen::<f64>()
            };
            let l = if rng.gen_bool(0.5) {
                Correctness::Overfitting
            } else {
                Correctness::Correct
            };
            (s, l)
        })
        .collect();
    out[0].1 = Correctness::Overfitting;
    out[1].1 = Correctness::Correct;
    out.shuffle(rng);
    out
}
