use std::sync::Arc;

use super::dim::Dimension;
use super::error::PdslError;
use super::eval::check_dimensions;
use super::sig::{ActionLabel, Signature};

/// Numerical feature over the state: a variable, a dimensioned constant,
/// a sum/difference, or an application of a registered function.
#[derive(Clone, Debug, PartialEq)]
pub enum Feature {
    Var(String),
    Const(f64, Dimension),
    Add(Box<Feature>, Box<Feature>),
    Sub(Box<Feature>, Box<Feature>),
    App(String, Vec<Feature>),
}

impl Feature {
    pub fn var(name: impl Into<String>) -> Feature {
        Feature::Var(name.into())
    }

    pub fn sub(a: Feature, b: Feature) -> Feature {
        Feature::Sub(Box::new(a), Box::new(b))
    }

    pub fn add(a: Feature, b: Feature) -> Feature {
        Feature::Add(Box::new(a), Box::new(b))
    }

    pub fn app(name: impl Into<String>, args: Vec<Feature>) -> Feature {
        Feature::App(name.into(), args)
    }

    /// Node count: every variant is one node, plus one per numeric constant.
    pub fn size(&self) -> usize {
        match self {
            Feature::Var(_) => 1,
            Feature::Const(..) => 2,
            Feature::Add(a, b) | Feature::Sub(a, b) => 1 + a.size() + b.size(),
            Feature::App(_, args) => 1 + args.iter().map(Feature::size).sum::<usize>(),
        }
    }
}

/// Probability-valued expression inside a coin flip: either a constant
/// in [0, 1] or a logistic threshold over a feature.
#[derive(Clone, Debug, PartialEq)]
pub enum ProbExpr {
    Const(f64),
    Logistic { feature: Feature, x0: f64, k: f64 },
}

impl ProbExpr {
    pub fn logistic(feature: Feature, x0: f64, k: f64) -> ProbExpr {
        ProbExpr::Logistic { feature, x0, k }
    }

    pub fn size(&self) -> usize {
        match self {
            ProbExpr::Const(_) => 2,
            ProbExpr::Logistic { feature, .. } => 1 + 2 + feature.size(),
        }
    }
}

/// Probabilistic guard: a coin flip or a boolean combination of guards.
/// Component flips are independent.
#[derive(Clone, Debug, PartialEq)]
pub enum Guard {
    Flip(ProbExpr),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
}

impl Guard {
    pub fn flip(p: ProbExpr) -> Guard {
        Guard::Flip(p)
    }

    pub fn and(a: Guard, b: Guard) -> Guard {
        Guard::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Guard, b: Guard) -> Guard {
        Guard::Or(Box::new(a), Box::new(b))
    }

    pub fn size(&self) -> usize {
        match self {
            Guard::Flip(p) => 1 + p.size(),
            Guard::And(a, b) | Guard::Or(a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Leaves (flips) in depth-first, left-to-right order.
    pub fn leaves(&self) -> Vec<&ProbExpr> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'g>(&'g self, out: &mut Vec<&'g ProbExpr>) {
        match self {
            Guard::Flip(p) => out.push(p),
            Guard::And(a, b) | Guard::Or(a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
        }
    }

    pub fn validate(&self, sig: &Signature) -> Result<(), PdslError> {
        match self {
            Guard::Flip(ProbExpr::Const(r)) => {
                if !(0.0..=1.0).contains(r) {
                    return Err(PdslError::ProbabilityRange { value: *r });
                }
                Ok(())
            }
            Guard::Flip(ProbExpr::Logistic { feature, .. }) => {
                check_dimensions(feature, sig).map(|_| ())
            }
            Guard::And(a, b) | Guard::Or(a, b) => {
                a.validate(sig)?;
                b.validate(sig)
            }
        }
    }
}

/// One guarded transition: `if (guard and a == from) then to`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRule {
    pub from: ActionLabel,
    pub guard: Guard,
    pub to: ActionLabel,
}

impl TransitionRule {
    pub fn new(from: ActionLabel, guard: Guard, to: ActionLabel) -> Self {
        TransitionRule { from, guard, to }
    }

    pub fn size(&self) -> usize {
        1 + self.guard.size()
    }
}

/// An action-selection policy: an ordered list of guarded transition rules
/// over a fixed signature. Rule order is significant: at each step the rules
/// whose source matches the previous action are tried in order and the first
/// firing guard wins; if none fires the previous action is kept.
#[derive(Clone, Debug)]
pub struct Policy {
    rules: Vec<TransitionRule>,
    sig: Arc<Signature>,
    per_from: Vec<Vec<usize>>,
}

impl Policy {
    pub fn new(sig: Arc<Signature>, rules: Vec<TransitionRule>) -> Result<Self, PdslError> {
        let n = sig.actions.len();
        let mut per_from = vec![Vec::new(); n];
        for (i, rule) in rules.iter().enumerate() {
            if !sig.actions.contains(rule.from) {
                return Err(PdslError::UnknownAction { name: format!("#{}", rule.from.0) });
            }
            if !sig.actions.contains(rule.to) {
                return Err(PdslError::UnknownAction { name: format!("#{}", rule.to.0) });
            }
            rule.guard.validate(&sig)?;
            per_from[rule.from.0].push(i);
        }
        Ok(Policy { rules, sig, per_from })
    }

    pub fn signature(&self) -> &Arc<Signature> {
        &self.sig
    }

    pub fn rules(&self) -> &[TransitionRule] {
        &self.rules
    }

    /// Indices of the rules with the given source action, in rule order.
    pub fn rules_from(&self, from: ActionLabel) -> &[usize] {
        &self.per_from[from.0]
    }

    /// Copy of this policy with the rule at `index` carrying a new guard.
    pub fn with_guard(&self, index: usize, guard: Guard) -> Result<Policy, PdslError> {
        let mut rules = self.rules.clone();
        rules[index].guard = guard;
        Policy::new(self.sig.clone(), rules)
    }

    pub fn with_rule_appended(&self, rule: TransitionRule) -> Result<Policy, PdslError> {
        let mut rules = self.rules.clone();
        rules.push(rule);
        Policy::new(self.sig.clone(), rules)
    }
}

/// Total AST node count of a policy under the fixed counting convention:
/// one per rule, one per guard node, one per probability expression node,
/// one per feature node, and one per numeric parameter.
pub fn ast_size(policy: &Policy) -> usize {
    policy.rules().iter().map(TransitionRule::size).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdsl::sig::{ActionSet, FunctionRegistry};

    fn sig() -> Arc<Signature> {
        Signature::new(
            vec![("v".into(), Dimension::VELOCITY), ("vmax".into(), Dimension::VELOCITY)],
            ActionSet::new(["ACC", "CON", "DEC"]).unwrap(),
            FunctionRegistry::default(),
        )
    }

    #[test]
    fn ast_size_counts_rules_guards_and_parameters() {
        let s = sig();
        let empty = Policy::new(s.clone(), vec![]).unwrap();
        assert_eq!(ast_size(&empty), 0);

        let one = Policy::new(
            s.clone(),
            vec![TransitionRule::new(ActionLabel(0), Guard::flip(ProbExpr::Const(0.1)), ActionLabel(1))],
        )
        .unwrap();
        assert_eq!(ast_size(&one), 4);

        let mut rules = Vec::new();
        for from in 0..3 {
            for to in 0..3 {
                if from != to {
                    rules.push(TransitionRule::new(
                        ActionLabel(from),
                        Guard::flip(ProbExpr::Const(0.1)),
                        ActionLabel(to),
                    ));
                }
            }
        }
        let six = Policy::new(s, rules).unwrap();
        assert_eq!(ast_size(&six), 24);
    }

    #[test]
    fn logistic_rule_size() {
        let s = sig();
        let guard = Guard::flip(ProbExpr::logistic(
            Feature::sub(Feature::var("v"), Feature::var("vmax")),
            -0.4,
            1.3,
        ));
        let p = Policy::new(
            s,
            vec![TransitionRule::new(ActionLabel(0), guard, ActionLabel(1))],
        )
        .unwrap();
        // rule + flip + logistic + 2 params + (sub + var + var)
        assert_eq!(ast_size(&p), 8);
    }

    #[test]
    fn policy_rejects_bad_probability_and_unknown_action() {
        let s = sig();
        let bad = Policy::new(
            s.clone(),
            vec![TransitionRule::new(ActionLabel(0), Guard::flip(ProbExpr::Const(1.5)), ActionLabel(1))],
        );
        assert!(matches!(bad, Err(PdslError::ProbabilityRange { .. })));

        let bad = Policy::new(
            s,
            vec![TransitionRule::new(ActionLabel(0), Guard::flip(ProbExpr::Const(0.5)), ActionLabel(9))],
        );
        assert!(matches!(bad, Err(PdslError::UnknownAction { .. })));
    }
}
