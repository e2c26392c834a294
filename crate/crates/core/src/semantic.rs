//! Correct/error specification inference and the two overfitting rules.
//!
//! * correct spec `C`: buggy passing-trace invariants that also hold on the
//!   ground truth at the same program point;
//! * error spec `E`: buggy failing-trace invariants with no ground-truth
//!   counterpart at that point.
//!
//! A patch is overfitting if it loses an invariant of `C` on the passing
//! traces (rule 1) or keeps an invariant of `E` on the failing traces
//! (rule 2). Invariants are matched only at identical program points.

use serde::{Deserialize, Serialize};

use crate::equivalence::Equivalence;
use crate::invariant::{
    Invariant, InvariantCorpus, InvariantSet, Partition, PointMap, ProgramPoint, Variant,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpecKind {
    Correct,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Specification {
    pub kind: SpecKind,
    pub items: PointMap,
}

impl Specification {
    pub fn len(&self) -> usize {
        self.items.values().map(InvariantSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// The patch violates the correct specification.
    Overfitting1,
    /// The patch maintains the error specification.
    Overfitting2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SemanticDecision {
    Overfitting,
    /// The invariants could not show overfitting; defer to the next stage.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub rule: Rule,
    pub point: ProgramPoint,
    pub invariant: Invariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SemanticVerdict {
    pub decision: SemanticDecision,
    pub fired_rules: Vec<Rule>,
    pub witnesses: Vec<Witness>,
}

impl SemanticVerdict {
    fn from_witnesses(witnesses: Vec<Witness>) -> Self {
        let mut fired_rules: Vec<Rule> = witnesses.iter().map(|w| w.rule).collect();
        fired_rules.dedup();
        let decision = if witnesses.is_empty() {
            SemanticDecision::Inconclusive
        } else {
            SemanticDecision::Overfitting
        };
        SemanticVerdict {
            decision,
            fired_rules,
            witnesses,
        }
    }

    pub fn is_overfitting(&self) -> bool {
        self.decision == SemanticDecision::Overfitting
    }
}

/// Matches invariants at one program point, using the canonical-form index
/// first and the equivalence checker's solver fallback for linear atoms.
#[derive(Debug, Clone, Default)]
pub struct SemanticClassifier {
    equivalence: Equivalence,
}

impl SemanticClassifier {
    pub fn new(equivalence: Equivalence) -> Self {
        SemanticClassifier { equivalence }
    }

    fn has_equivalent(&self, set: Option<&InvariantSet>, inv: &Invariant) -> bool {
        let Some(set) = set else {
            return false;
        };
        let key = inv.canonical();
        if set.contains_canonical(&key) {
            return true;
        }
        if !self.equivalence.has_solver() || !key.atom().is_linear() {
            return false;
        }
        set.entries()
            .filter(|(k, _)| k.atom().is_linear())
            .any(|(k, _)| self.equivalence.equivalent_canonical(&key, k))
    }

    pub fn build_correct_spec(&self, passing_buggy: &PointMap, passing_ground_truth: &PointMap) -> Specification {
        let mut items = PointMap::new();
        for (point, buggy) in passing_buggy {
            let Some(truth) = passing_ground_truth.get(point) else {
                continue;
            };
            let kept: InvariantSet = buggy
                .iter()
                .filter(|inv| self.has_equivalent(Some(truth), inv))
                .cloned()
                .collect();
            if !kept.is_empty() {
                items.insert(point.clone(), kept);
            }
        }
        Specification {
            kind: SpecKind::Correct,
            items,
        }
    }

    pub fn build_error_spec(&self, failing_buggy: &PointMap, failing_ground_truth: &PointMap) -> Specification {
        let mut items = PointMap::new();
        for (point, buggy) in failing_buggy {
            let truth = failing_ground_truth.get(point);
            let kept: InvariantSet = buggy
                .iter()
                .filter(|inv| !self.has_equivalent(truth, inv))
                .cloned()
                .collect();
            if !kept.is_empty() {
                items.insert(point.clone(), kept);
            }
        }
        Specification {
            kind: SpecKind::Error,
            items,
        }
    }

    /// Applies both rules and lists every firing `(rule, point, invariant)`,
    /// rule 1 first, then by point and canonical order.
    pub fn classify(
        &self,
        spec_c: &Specification,
        spec_e: &Specification,
        patched_passing: &PointMap,
        patched_failing: &PointMap,
    ) -> SemanticVerdict {
        debug_assert_eq!(spec_c.kind, SpecKind::Correct);
        debug_assert_eq!(spec_e.kind, SpecKind::Error);
        let mut witnesses = Vec::new();
        for (point, set) in &spec_c.items {
            let patched = patched_passing.get(point);
            for inv in set {
                if !self.has_equivalent(patched, inv) {
                    witnesses.push(Witness {
                        rule: Rule::Overfitting1,
                        point: point.clone(),
                        invariant: inv.clone(),
                    });
                }
            }
        }
        for (point, set) in &spec_e.items {
            let patched = patched_failing.get(point);
            for inv in set {
                if self.has_equivalent(patched, inv) {
                    witnesses.push(Witness {
                        rule: Rule::Overfitting2,
                        point: point.clone(),
                        invariant: inv.clone(),
                    });
                }
            }
        }
        SemanticVerdict::from_witnesses(witnesses)
    }

    /// Runs specification inference and classification on a full corpus.
    pub fn assess_corpus(&self, corpus: &InvariantCorpus) -> SemanticVerdict {
        use Partition::*;
        use Variant::*;
        let c = self.build_correct_spec(
            corpus.slot(Buggy, PassingTraces),
            corpus.slot(GroundTruth, PassingTraces),
        );
        let e = self.build_error_spec(
            corpus.slot(Buggy, FailingTraces),
            corpus.slot(GroundTruth, FailingTraces),
        );
        self.classify(
            &c,
            &e,
            corpus.slot(Patched, PassingTraces),
            corpus.slot(Patched, FailingTraces),
        )
    }
}

/// Correct specification using the normalizer alone.
pub fn build_correct_spec(passing_buggy: &PointMap, passing_ground_truth: &PointMap) -> Specification {
    SemanticClassifier::default().build_correct_spec(passing_buggy, passing_ground_truth)
}

/// Error specification using the normalizer alone.
pub fn build_error_spec(failing_buggy: &PointMap, failing_ground_truth: &PointMap) -> Specification {
    SemanticClassifier::default().build_error_spec(failing_buggy, failing_ground_truth)
}

pub fn classify_semantic(
    spec_c: &Specification,
    spec_e: &Specification,
    patched_passing: &PointMap,
    patched_failing: &PointMap,
) -> SemanticVerdict {
    SemanticClassifier::default().classify(spec_c, spec_e, patched_passing, patched_failing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariant::point_map_from;

    fn pt(sig: &str) -> ProgramPoint {
        ProgramPoint::enter("A", sig)
    }

    fn map(entries: &[(&str, &str)]) -> PointMap {
        point_map_from(entries.iter().map(|&(p, t)| (pt(p), t)))
    }

    fn texts(spec: &Specification) -> Vec<(String, String)> {
        spec.items
            .iter()
            .flat_map(|(p, s)| s.iter().map(move |i| (p.method_signature.clone(), i.raw_text.clone())))
            .collect()
    }

    #[test]
    fn correct_spec_of_identical_inputs_is_input() {
        let m = map(&[("f()", "x >= 0"), ("f()", "y == x")]);
        let c = build_correct_spec(&m, &m);
        assert_eq!(c.kind, SpecKind::Correct);
        assert_eq!(c.items, m);
    }

    #[test]
    fn correct_spec_is_equivalence_aware() {
        let c = build_correct_spec(&map(&[("f()", "a >= b")]), &map(&[("f()", "b <= a")]));
        assert_eq!(texts(&c), vec![("f()".into(), "a >= b".into())]);
    }

    #[test]
    fn correct_spec_needs_same_point() {
        let c = build_correct_spec(&map(&[("f()", "x >= 0")]), &map(&[("g()", "x >= 0")]));
        assert!(c.is_empty());
    }

    #[test]
    fn error_spec_keeps_buggy_only_invariants() {
        let e = build_error_spec(
            &map(&[("f()", "x == 1"), ("f()", "x >= 0")]),
            &map(&[("f()", "x >= 0")]),
        );
        assert_eq!(e.kind, SpecKind::Error);
        assert_eq!(texts(&e), vec![("f()".into(), "x == 1".into())]);
        let same = map(&[("f()", "x >= 0")]);
        assert!(build_error_spec(&same, &same).is_empty());
    }

    #[test]
    fn error_spec_point_absent_from_ground_truth() {
        let e = build_error_spec(&map(&[("f()", "x == 1"), ("g()", "y == 2")]), &map(&[("f()", "x == 1")]));
        assert_eq!(texts(&e), vec![("g()".into(), "y == 2".into())]);
    }

    #[test]
    fn class_equality_error_spec() {
        let fit3 = ProgramPoint::enter("org.apache.commons.math.optimization.fitting.GaussianFitter", "fit3(double[])");
        let buggy = point_map_from([(fit3.clone(), "f.getClass() == Gaussian$Parametric.class")]);
        let truth = point_map_from([(fit3.clone(), "f.getClass() == GaussianFitter$1.class")]);
        let e = build_error_spec(&buggy, &truth);
        assert_eq!(e.items, buggy);
    }

    #[test]
    fn inconclusive_when_everything_is_kept() {
        let c = build_correct_spec(&map(&[("f()", "x >= 0")]), &map(&[("f()", "x >= 0")]));
        let e = build_error_spec(&PointMap::new(), &PointMap::new());
        let v = classify_semantic(&c, &e, &map(&[("f()", "x >= 0")]), &PointMap::new());
        assert_eq!(v.decision, SemanticDecision::Inconclusive);
        assert!(v.fired_rules.is_empty() && v.witnesses.is_empty());
    }

    #[test]
    fn rule_one_fires_on_lost_invariant() {
        let both = map(&[("f()", "x >= 0"), ("f()", "y == x")]);
        let c = build_correct_spec(&both, &both);
        let e = build_error_spec(&PointMap::new(), &PointMap::new());
        let v = classify_semantic(&c, &e, &map(&[("f()", "x >= 0")]), &PointMap::new());
        assert_eq!(v.decision, SemanticDecision::Overfitting);
        assert_eq!(v.fired_rules, vec![Rule::Overfitting1]);
        assert_eq!(v.witnesses.len(), 1);
        assert_eq!(v.witnesses[0].invariant.raw_text, "y == x");
        assert_eq!(v.witnesses[0].point, pt("f()"));
    }

    #[test]
    fn rule_one_fires_when_point_disappears() {
        let both = map(&[("f()", "x >= 0"), ("f()", "y >= 0")]);
        let c = build_correct_spec(&both, &both);
        let v = classify_semantic(
            &c,
            &build_error_spec(&PointMap::new(), &PointMap::new()),
            &map(&[("g()", "x >= 0")]),
            &PointMap::new(),
        );
        assert_eq!(v.witnesses.len(), 2);
    }

    #[test]
    fn rule_two_fires_on_kept_error() {
        let fit3 = ProgramPoint::enter("GaussianFitter", "fit3(double[])");
        let buggy = point_map_from([(fit3.clone(), "f.getClass() == Gaussian$Parametric.class")]);
        let truth = point_map_from([(fit3.clone(), "f.getClass() == GaussianFitter$1.class")]);
        let c = build_correct_spec(&PointMap::new(), &PointMap::new());
        let e = build_error_spec(&buggy, &truth);
        let patched_failing = point_map_from([(fit3, "Gaussian$Parametric.class == f.getClass()")]);
        let v = classify_semantic(&c, &e, &PointMap::new(), &patched_failing);
        assert_eq!(v.decision, SemanticDecision::Overfitting);
        assert_eq!(v.fired_rules, vec![Rule::Overfitting2]);
    }

    #[test]
    fn both_rules_are_reported_in_order() {
        let c = build_correct_spec(&map(&[("f()", "x >= 0")]), &map(&[("f()", "x >= 0")]));
        let e = build_error_spec(&map(&[("g()", "y == 1")]), &PointMap::new());
        let v = classify_semantic(&c, &e, &PointMap::new(), &map(&[("g()", "y == 1")]));
        assert_eq!(v.fired_rules, vec![Rule::Overfitting1, Rule::Overfitting2]);
    }

    #[test]
    fn corpus_assessment_with_identical_programs() {
        let mut corpus = InvariantCorpus::new();
        let passing = map(&[("f()", "x >= 0"), ("f()", "iterations > orig(iterations)")]);
        let failing = map(&[("f()", "x == 3")]);
        for v in [Variant::Buggy, Variant::GroundTruth, Variant::Patched] {
            corpus.set_slot(v, Partition::PassingTraces, passing.clone());
            corpus.set_slot(v, Partition::FailingTraces, failing.clone());
        }
        let v = SemanticClassifier::default().assess_corpus(&corpus);
        assert_eq!(v.decision, SemanticDecision::Inconclusive);
    }
}
