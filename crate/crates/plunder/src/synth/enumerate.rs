//! Candidate structures for the synthesizer: the dimension-typed feature
//! pool, the syntactic neighborhood of a guard (five mutation kinds plus
//! reset sketches), and flat enumeration of bounded conjunctions and
//! disjunctions for the one-shot search.

use std::collections::BTreeSet;

use rand::Rng;

use crate::pdsl::{check_dimensions, Dimension, Feature, Guard, ProbExpr, Signature};
use crate::seeds::rng_for;

/// Which construction produced a sketch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Refit,
    Base,
    AddPredicate,
    RemovePredicate,
    SwapConnective,
    WrapFunction,
    StripFunction,
    FullEnumeration,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::Refit => "refit",
            Provenance::Base => "base",
            Provenance::AddPredicate => "add-predicate",
            Provenance::RemovePredicate => "remove-predicate",
            Provenance::SwapConnective => "swap-connective",
            Provenance::WrapFunction => "wrap-function",
            Provenance::StripFunction => "strip-function",
            Provenance::FullEnumeration => "full-enumeration",
        }
    }
}

/// A guard structure whose numeric parameters are to be (re)fit. Embedded
/// parameter values only seed the optimizer's warm start.
#[derive(Clone, Debug)]
pub struct Sketch {
    pub guard: Guard,
    pub provenance: Provenance,
}

/// Dimension-consistent features available to threshold predicates.
#[derive(Clone, Debug)]
pub struct FeaturePool {
    features: Vec<(Feature, Dimension)>,
}

impl FeaturePool {
    pub fn features(&self) -> impl Iterator<Item = &Feature> {
        self.features.iter().map(|(f, _)| f)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn contains(&self, f: &Feature) -> bool {
        self.features.iter().any(|(g, _)| g == f)
    }
}

/// Builds the pool from the allowed state variables: the variables
/// themselves, registered functions applied to dimension-legal variable
/// arguments, and canonical same-dimension differences. Subtractions are
/// emitted in one orientation only (function applications before plain
/// variables, earlier-declared variables first); the mirrored orientation
/// is the same threshold with the sharpness sign flipped.
pub fn build_feature_pool(sig: &Signature, vars: &[&str], pool_cap: usize) -> FeaturePool {
    let var_atoms: Vec<(Feature, Dimension)> = vars
        .iter()
        .filter_map(|name| sig.var_dim(name).map(|d| (Feature::var(*name), d)))
        .collect();

    let mut app_atoms: Vec<(Feature, Dimension)> = Vec::new();
    for def in sig.funcs.iter() {
        let mut arg_choices: Vec<Vec<Feature>> = Vec::new();
        for dim in &def.arg_dims {
            arg_choices.push(
                var_atoms
                    .iter()
                    .filter(|(_, d)| d == dim)
                    .map(|(f, _)| f.clone())
                    .collect(),
            );
        }
        if arg_choices.iter().any(Vec::is_empty) {
            continue;
        }
        let mut combos: Vec<Vec<Feature>> = vec![Vec::new()];
        for choices in &arg_choices {
            let mut next = Vec::new();
            for prefix in &combos {
                for c in choices {
                    let mut args = prefix.clone();
                    args.push(c.clone());
                    next.push(args);
                }
            }
            combos = next;
        }
        for args in combos {
            app_atoms.push((Feature::app(def.name.clone(), args), def.ret_dim));
        }
    }

    // Differences in canonical orientation: pairs (i < j) over
    // [applications..., variables...].
    let ordered: Vec<&(Feature, Dimension)> = app_atoms.iter().chain(var_atoms.iter()).collect();
    let mut subs = Vec::new();
    for i in 0..ordered.len() {
        for j in (i + 1)..ordered.len() {
            if ordered[i].1 == ordered[j].1 {
                subs.push((Feature::sub(ordered[i].0.clone(), ordered[j].0.clone()), ordered[i].1));
            }
        }
    }

    let mut features = Vec::new();
    features.extend(var_atoms);
    features.extend(app_atoms);
    features.extend(subs);
    features.truncate(pool_cap);
    debug_assert!(features.iter().all(|(f, d)| check_dimensions(f, sig) == Ok(*d)));
    FeaturePool { features }
}

fn threshold(feature: &Feature) -> Guard {
    Guard::Flip(ProbExpr::Logistic { feature: feature.clone(), x0: 0.0, k: 1.0 })
}

/// Structural dedup key: parameters erased, conjunction/disjunction operands
/// sorted, and top-level subtractions mirror-normalized (a threshold over
/// f - g is the same family as one over g - f).
fn structure_key(guard: &Guard) -> String {
    match guard {
        Guard::Flip(ProbExpr::Const(_)) => "flp".to_string(),
        Guard::Flip(ProbExpr::Logistic { feature, .. }) => {
            let key = match feature {
                Feature::Sub(a, b) => {
                    let (sa, sb) = (a.to_string(), b.to_string());
                    if sa <= sb {
                        format!("sub|{sa}|{sb}")
                    } else {
                        format!("sub|{sb}|{sa}")
                    }
                }
                other => other.to_string(),
            };
            format!("lgs({key})")
        }
        Guard::And(a, b) => {
            let (ka, kb) = (structure_key(a), structure_key(b));
            if ka <= kb {
                format!("and({ka},{kb})")
            } else {
                format!("and({kb},{ka})")
            }
        }
        Guard::Or(a, b) => {
            let (ka, kb) = (structure_key(a), structure_key(b));
            if ka <= kb {
                format!("or({ka},{kb})")
            } else {
                format!("or({kb},{ka})")
            }
        }
    }
}

fn leaf_count(guard: &Guard) -> usize {
    guard.leaves().len()
}

/// Guard with leaf `target` removed; `None` when it was the only leaf.
fn remove_leaf(guard: &Guard, target: usize, counter: &mut usize) -> Option<Guard> {
    match guard {
        Guard::Flip(_) => {
            let here = *counter;
            *counter += 1;
            if here == target {
                None
            } else {
                Some(guard.clone())
            }
        }
        Guard::And(a, b) | Guard::Or(a, b) => {
            let is_and = matches!(guard, Guard::And(..));
            let left = remove_leaf(a, target, counter);
            let right = remove_leaf(b, target, counter);
            match (left, right) {
                (Some(l), Some(r)) => Some(if is_and { Guard::and(l, r) } else { Guard::or(l, r) }),
                (Some(l), None) => Some(l),
                (None, Some(r)) => Some(r),
                (None, None) => None,
            }
        }
    }
}

/// Guard with internal node `target` (preorder) switched between
/// conjunction and disjunction.
fn swap_connective(guard: &Guard, target: usize, counter: &mut usize) -> Guard {
    match guard {
        Guard::Flip(_) => guard.clone(),
        Guard::And(a, b) | Guard::Or(a, b) => {
            let here = *counter;
            *counter += 1;
            let is_and = matches!(guard, Guard::And(..));
            let left = swap_connective(a, target, counter);
            let right = swap_connective(b, target, counter);
            let flipped = if here == target { !is_and } else { is_and };
            if flipped {
                Guard::and(left, right)
            } else {
                Guard::or(left, right)
            }
        }
    }
}

fn internal_node_count(guard: &Guard) -> usize {
    match guard {
        Guard::Flip(_) => 0,
        Guard::And(a, b) | Guard::Or(a, b) => 1 + internal_node_count(a) + internal_node_count(b),
    }
}

/// Replaces the feature of logistic leaf `target`, resetting its parameters.
fn replace_leaf_feature(guard: &Guard, target: usize, new: &Feature, counter: &mut usize) -> Guard {
    match guard {
        Guard::Flip(p) => {
            let here = *counter;
            *counter += 1;
            if here == target {
                Guard::Flip(ProbExpr::Logistic { feature: new.clone(), x0: 0.0, k: 1.0 })
            } else {
                Guard::Flip(p.clone())
            }
        }
        Guard::And(a, b) => {
            let left = replace_leaf_feature(a, target, new, counter);
            let right = replace_leaf_feature(b, target, new, counter);
            Guard::and(left, right)
        }
        Guard::Or(a, b) => {
            let left = replace_leaf_feature(a, target, new, counter);
            let right = replace_leaf_feature(b, target, new, counter);
            Guard::or(left, right)
        }
    }
}

/// All features reachable by deleting one function application (each
/// argument may stand in for the removed call).
fn strip_applications(feature: &Feature) -> Vec<Feature> {
    let mut out = Vec::new();
    match feature {
        Feature::Var(_) | Feature::Const(..) => {}
        Feature::Add(a, b) | Feature::Sub(a, b) => {
            let is_add = matches!(feature, Feature::Add(..));
            for sa in strip_applications(a) {
                out.push(if is_add {
                    Feature::add(sa, (**b).clone())
                } else {
                    Feature::sub(sa, (**b).clone())
                });
            }
            for sb in strip_applications(b) {
                out.push(if is_add {
                    Feature::add((**a).clone(), sb)
                } else {
                    Feature::sub((**a).clone(), sb)
                });
            }
        }
        Feature::App(name, args) => {
            out.extend(args.iter().cloned());
            for (i, arg) in args.iter().enumerate() {
                for stripped in strip_applications(arg) {
                    let mut new_args = args.clone();
                    new_args[i] = stripped;
                    out.push(Feature::app(name.clone(), new_args));
                }
            }
        }
    }
    out
}

/// Wrappings of `feature` in a registered function call, with the remaining
/// argument slots filled by pool variables of the right dimension.
fn wrap_applications(feature: &Feature, sig: &Signature, pool: &FeaturePool) -> Vec<Feature> {
    let Ok(dim) = check_dimensions(feature, sig) else {
        return Vec::new();
    };
    let vars: Vec<(&Feature, Dimension)> = pool
        .features
        .iter()
        .filter(|(f, _)| matches!(f, Feature::Var(_)))
        .map(|(f, d)| (f, *d))
        .collect();

    let mut out = Vec::new();
    for def in sig.funcs.iter() {
        for slot in 0..def.arg_dims.len() {
            if def.arg_dims[slot] != dim {
                continue;
            }
            let mut arg_choices: Vec<Vec<Feature>> = Vec::new();
            for (i, d) in def.arg_dims.iter().enumerate() {
                if i == slot {
                    arg_choices.push(vec![feature.clone()]);
                } else {
                    arg_choices.push(
                        vars.iter().filter(|(_, vd)| vd == d).map(|(f, _)| (*f).clone()).collect(),
                    );
                }
            }
            if arg_choices.iter().any(Vec::is_empty) {
                continue;
            }
            let mut combos: Vec<Vec<Feature>> = vec![Vec::new()];
            for choices in &arg_choices {
                let mut next = Vec::new();
                for prefix in &combos {
                    for c in choices {
                        let mut args = prefix.clone();
                        args.push(c.clone());
                        next.push(args);
                    }
                }
                combos = next;
            }
            for args in combos {
                out.push(Feature::app(def.name.clone(), args));
            }
        }
    }
    out
}

fn leaf_features(guard: &Guard) -> Vec<Option<Feature>> {
    guard
        .leaves()
        .iter()
        .map(|p| match p {
            ProbExpr::Const(_) => None,
            ProbExpr::Logistic { feature, .. } => Some(feature.clone()),
        })
        .collect()
}

/// The syntactic neighborhood of a guard: a structure refit, the reset set
/// of single-threshold sketches over the pool, and five mutation kinds.
/// Every sketch dimension-checks; structural duplicates are collapsed; each
/// mutation's output is truncated to `budget` by a seeded shuffle.
pub fn enumerate_neighborhood(
    guard: &Guard,
    pool: &FeaturePool,
    sig: &Signature,
    budget: usize,
    seed: u64,
) -> Vec<Sketch> {
    let mut sketches: Vec<Sketch> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut push = |sketches: &mut Vec<Sketch>, seen: &mut BTreeSet<String>, g: Guard, p: Provenance| {
        if g.validate(sig).is_err() {
            return;
        }
        if seen.insert(structure_key(&g)) {
            sketches.push(Sketch { guard: g, provenance: p });
        }
    };

    // Structure refit of the current guard.
    push(&mut sketches, &mut seen, guard.clone(), Provenance::Refit);

    // Reset set: a plain coin plus one threshold per pool feature.
    push(&mut sketches, &mut seen, Guard::Flip(ProbExpr::Const(0.1)), Provenance::Base);
    for f in pool.features() {
        push(&mut sketches, &mut seen, threshold(f), Provenance::Base);
    }

    // 1. Add a threshold predicate over a pool feature.
    let mut added = Vec::new();
    for f in pool.features() {
        added.push(Guard::and(guard.clone(), threshold(f)));
        added.push(Guard::or(guard.clone(), threshold(f)));
    }
    for g in truncate_budget(added, budget, seed, 1) {
        push(&mut sketches, &mut seen, g, Provenance::AddPredicate);
    }

    // 2. Remove an existing predicate.
    let n_leaves = leaf_count(guard);
    if n_leaves > 1 {
        for target in 0..n_leaves {
            let mut counter = 0;
            if let Some(g) = remove_leaf(guard, target, &mut counter) {
                push(&mut sketches, &mut seen, g, Provenance::RemovePredicate);
            }
        }
    }

    // 3. Swap conjunctions with disjunctions.
    for target in 0..internal_node_count(guard) {
        let mut counter = 0;
        let g = swap_connective(guard, target, &mut counter);
        push(&mut sketches, &mut seen, g, Provenance::SwapConnective);
    }

    // 4. Augment a leaf feature by a function application.
    let mut wrapped = Vec::new();
    for (leaf, feature) in leaf_features(guard).iter().enumerate() {
        if let Some(f) = feature {
            for new in wrap_applications(f, sig, pool) {
                let mut counter = 0;
                wrapped.push(replace_leaf_feature(guard, leaf, &new, &mut counter));
            }
        }
    }
    for g in truncate_budget(wrapped, budget, seed, 4) {
        push(&mut sketches, &mut seen, g, Provenance::WrapFunction);
    }

    // 5. Simplify a leaf feature by removing a function application.
    let mut stripped = Vec::new();
    for (leaf, feature) in leaf_features(guard).iter().enumerate() {
        if let Some(f) = feature {
            for new in strip_applications(f) {
                if check_dimensions(&new, sig).is_ok() {
                    let mut counter = 0;
                    stripped.push(replace_leaf_feature(guard, leaf, &new, &mut counter));
                }
            }
        }
    }
    for g in truncate_budget(stripped, budget, seed, 5) {
        push(&mut sketches, &mut seen, g, Provenance::StripFunction);
    }

    sketches
}

/// Seeded-shuffle truncation: enumeration stays exhaustive up to the
/// budget, and which candidates survive is reproducible.
fn truncate_budget(mut guards: Vec<Guard>, budget: usize, seed: u64, mutation: u64) -> Vec<Guard> {
    if guards.len() > budget {
        let mut rng = rng_for(seed, &[crate::seeds::STREAM_ENUMERATE, mutation]);
        for i in (1..guards.len()).rev() {
            let j = rng.random_range(0..=i);
            guards.swap(i, j);
        }
        guards.truncate(budget);
    }
    guards
}

/// Flat enumeration: every conjunction or disjunction of at most `depth`
/// atomic thresholds over the pool (homogeneous connectives). With an empty
/// pool only the constant-probability sketch remains.
pub fn enumerate_full(pool: &FeaturePool, depth: usize, sig: &Signature) -> Vec<Sketch> {
    assert!(depth >= 1);
    let mut sketches = Vec::new();
    let mut seen = BTreeSet::new();
    if pool.is_empty() {
        sketches.push(Sketch {
            guard: Guard::Flip(ProbExpr::Const(0.1)),
            provenance: Provenance::FullEnumeration,
        });
        return sketches;
    }
    let atoms: Vec<Guard> = pool.features().map(threshold).collect();
    let mut push = |g: Guard| {
        debug_assert!(g.validate(sig).is_ok());
        if seen.insert(structure_key(&g)) {
            sketches.push(Sketch { guard: g, provenance: Provenance::FullEnumeration });
        }
    };

    for a in &atoms {
        push(a.clone());
    }
    // Homogeneous combinations of k atoms, 2 <= k <= depth.
    let mut combos: Vec<Vec<usize>> = (0..atoms.len()).map(|i| vec![i]).collect();
    for _ in 2..=depth {
        let mut next = Vec::new();
        for c in &combos {
            let last = *c.last().unwrap();
            for j in (last + 1)..atoms.len() {
                let mut cc = c.clone();
                cc.push(j);
                next.push(cc);
            }
        }
        for c in &next {
            let mut and_g = atoms[c[0]].clone();
            let mut or_g = atoms[c[0]].clone();
            for &i in &c[1..] {
                and_g = Guard::and(and_g, atoms[i].clone());
                or_g = Guard::or(or_g, atoms[i].clone());
            }
            push(and_g);
            push(or_g);
        }
        combos = next;
    }
    sketches
}
