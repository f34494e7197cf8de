//! Inexpressibility witnesses: pairs of structures that agree on every UCV
//! sentence (certified by the homomorphism-agreement criterion) yet differ
//! on a given first-order query over the base vocabulary.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::find_homomorphism;
use crate::logic::{Const, Structure, Tuple, Var, Vocabulary};
use crate::sat::canonical_structures;

/// A small first-order language over base relations, used only to state
/// the query whose inexpressibility is being certified.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub enum Fo {
    Atom(String, Vec<Var>),
    Not(Box<Fo>),
    And(Box<Fo>, Box<Fo>),
    Or(Box<Fo>, Box<Fo>),
    Implies(Box<Fo>, Box<Fo>),
    Iff(Box<Fo>, Box<Fo>),
    Exists(Var, Box<Fo>),
    Forall(Var, Box<Fo>),
}

impl Fo {
    pub fn atom(rel: &str, vars: &[&str]) -> Fo {
        Fo::Atom(rel.into(), vars.iter().map(|v| Var::new(*v)).collect())
    }

    fn free_vars(&self, bound: &mut BTreeSet<Var>, out: &mut BTreeSet<Var>) {
        match self {
            Fo::Atom(_, vars) => {
                for v in vars {
                    if !bound.contains(v) {
                        out.insert(v.clone());
                    }
                }
            }
            Fo::Not(f) => f.free_vars(bound, out),
            Fo::And(a, b) | Fo::Or(a, b) | Fo::Implies(a, b) | Fo::Iff(a, b) => {
                a.free_vars(bound, out);
                b.free_vars(bound, out);
            }
            Fo::Exists(v, f) | Fo::Forall(v, f) => {
                let fresh = bound.insert(v.clone());
                f.free_vars(bound, out);
                if fresh {
                    bound.remove(v);
                }
            }
        }
    }

    pub fn is_sentence(&self) -> bool {
        let mut out = BTreeSet::new();
        self.free_vars(&mut BTreeSet::new(), &mut out);
        out.is_empty()
    }
}

fn fo_eval(f: &Fo, s: &Structure, env: &mut BTreeMap<Var, Const>) -> Result<bool> {
    Ok(match f {
        Fo::Atom(rel, vars) => {
            if s.vocab().arity(rel) != Some(vars.len()) {
                return Err(Error::Input(format!(
                    "atom {rel}/{} does not match the vocabulary",
                    vars.len()
                )));
            }
            let tuple: Option<Tuple> = vars.iter().map(|v| env.get(v).cloned()).collect();
            match tuple {
                Some(t) => s.tuples(rel).contains(&t),
                None => return Err(Error::Input("unbound variable in FO query".into())),
            }
        }
        Fo::Not(g) => !fo_eval(g, s, env)?,
        Fo::And(a, b) => fo_eval(a, s, env)? && fo_eval(b, s, env)?,
        Fo::Or(a, b) => fo_eval(a, s, env)? || fo_eval(b, s, env)?,
        Fo::Implies(a, b) => !fo_eval(a, s, env)? || fo_eval(b, s, env)?,
        Fo::Iff(a, b) => fo_eval(a, s, env)? == fo_eval(b, s, env)?,
        Fo::Exists(v, g) => {
            let saved = env.get(v).cloned();
            let mut found = false;
            for c in s.universe().clone() {
                env.insert(v.clone(), c);
                if fo_eval(g, s, env)? {
                    found = true;
                    break;
                }
            }
            restore(env, v, saved);
            found
        }
        Fo::Forall(v, g) => {
            let saved = env.get(v).cloned();
            let mut all = true;
            for c in s.universe().clone() {
                env.insert(v.clone(), c);
                if !fo_eval(g, s, env)? {
                    all = false;
                    break;
                }
            }
            restore(env, v, saved);
            all
        }
    })
}

fn restore(env: &mut BTreeMap<Var, Const>, v: &Var, saved: Option<Const>) {
    match saved {
        Some(c) => {
            env.insert(v.clone(), c);
        }
        None => {
            env.remove(v);
        }
    }
}

/// Evaluates a first-order sentence over a structure.
pub fn fo_check(f: &Fo, s: &Structure) -> Result<bool> {
    if !f.is_sentence() {
        return Err(Error::Input("FO query must be a sentence".into()));
    }
    fo_eval(f, s, &mut BTreeMap::new())
}

/// SYM: ∀x∀y (E(x,y) ↔ E(y,x)).
pub fn sym_query() -> Fo {
    Fo::Forall(
        Var::new("x"),
        Box::new(Fo::Forall(
            Var::new("y"),
            Box::new(Fo::Iff(
                Box::new(Fo::atom("E", &["x", "y"])),
                Box::new(Fo::atom("E", &["y", "x"])),
            )),
        )),
    )
}

/// TRANS: ∀x∀y∀z ((E(x,y) ∧ E(y,z)) → E(x,z)).
pub fn trans_query() -> Fo {
    Fo::Forall(
        Var::new("x"),
        Box::new(Fo::Forall(
            Var::new("y"),
            Box::new(Fo::Forall(
                Var::new("z"),
                Box::new(Fo::Implies(
                    Box::new(Fo::And(
                        Box::new(Fo::atom("E", &["x", "y"])),
                        Box::new(Fo::atom("E", &["y", "z"])),
                    )),
                    Box::new(Fo::atom("E", &["x", "z"])),
                )),
            )),
        )),
    )
}

/// ∃x∃y E(x,y) — expressible in UCV, so no witness can exist for it.
pub fn some_edge_query() -> Fo {
    Fo::Exists(
        Var::new("x"),
        Box::new(Fo::Exists(Var::new("y"), Box::new(Fo::atom("E", &["x", "y"])))),
    )
}

/// The homomorphism-agreement criterion: for every element a of A there are
/// homomorphisms h: A→B and g: B→A with g(h(a)) = a, and symmetrically for
/// every element of B. Such a pair agrees on all UCV sentences.
pub fn hom_agreement_check(a: &Structure, b: &Structure) -> Result<bool> {
    if a.vocab() != b.vocab() {
        return Err(Error::Input("structures must share a vocabulary".into()));
    }
    let pinned_pair = |src: &Structure, dst: &Structure, x: &Const| -> Result<bool> {
        for y in dst.universe() {
            let fwd: BTreeMap<Const, Const> = [(x.clone(), y.clone())].into();
            if find_homomorphism(src, dst, &fwd)?.is_some() {
                let back: BTreeMap<Const, Const> = [(y.clone(), x.clone())].into();
                if find_homomorphism(dst, src, &back)?.is_some() {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    };
    if a.universe().is_empty() || b.universe().is_empty() {
        return Ok(a.universe().is_empty() == b.universe().is_empty());
    }
    for x in a.universe() {
        if !pinned_pair(a, b, x)? {
            return Ok(false);
        }
    }
    for y in b.universe() {
        if !pinned_pair(b, a, y)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Rank-1 Ehrenfeucht–Fraïssé agreement of two unary structures: the
/// realized sets of predicate-membership signatures coincide.
pub fn ef_rank1_agree(ua: &Structure, ub: &Structure) -> Result<bool> {
    for s in [ua, ub] {
        if s.vocab().symbols().iter().any(|sym| sym.arity != 1) {
            return Err(Error::Input("ef_rank1_agree requires a unary vocabulary".into()));
        }
    }
    if ua.vocab() != ub.vocab() {
        return Err(Error::Input("structures must share a vocabulary".into()));
    }
    let realized = |s: &Structure| -> BTreeSet<Vec<bool>> {
        s.universe()
            .iter()
            .map(|c| {
                s.vocab()
                    .symbols()
                    .iter()
                    .map(|sym| s.tuples(&sym.name).contains(&vec![c.clone()]))
                    .collect()
            })
            .collect()
    };
    Ok(realized(ua) == realized(ub))
}

/// Size bounds for the witness search. Sizes whose full isomorphism-reduced
/// enumeration is infeasible are covered by derived candidates: disjoint
/// doubles of half-size structures with at most one cross tuple.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct WitnessBounds {
    pub a_sizes: Vec<usize>,
    pub b_sizes: Vec<usize>,
}

fn exhaustive_feasible(vocab: &Vocabulary, size: usize) -> bool {
    vocab
        .symbols()
        .iter()
        .map(|sym| size.pow(sym.arity as u32))
        .sum::<usize>()
        <= 16
}

/// Disjoint double of `s` plus every single-cross-tuple variant (tuples
/// mixing the two copies, with exactly one constant from the second).
fn doubled_candidates(s: &Structure) -> Result<Vec<Structure>> {
    let prime = |c: &Const| Const::new(format!("{}'", c.0));
    let mut base: Vec<(String, Tuple)> = Vec::new();
    for (rel, t) in s.facts() {
        base.push((rel.to_string(), t.clone()));
        base.push((rel.to_string(), t.iter().map(&prime).collect()));
    }
    let mut universe: BTreeSet<Const> = s.universe().clone();
    universe.extend(s.universe().iter().map(&prime));
    let mut out = vec![Structure::from_facts(
        s.vocab().clone(),
        base.clone(),
        Some(universe.clone()),
    )?];
    for sym in s.vocab().symbols() {
        if sym.arity < 2 {
            continue;
        }
        // Cross variants of existing tuples: prime exactly one position.
        let mut seen = BTreeSet::new();
        for t in s.tuples(&sym.name) {
            for i in 0..sym.arity {
                let mut cross = t.clone();
                cross[i] = prime(&cross[i]);
                if !seen.insert(cross.clone()) {
                    continue;
                }
                let mut facts = base.clone();
                facts.push((sym.name.clone(), cross));
                out.push(Structure::from_facts(
                    s.vocab().clone(),
                    facts,
                    Some(universe.clone()),
                )?);
            }
        }
    }
    Ok(out)
}

fn candidates(vocab: &Vocabulary, size: usize) -> Result<Vec<Structure>> {
    if exhaustive_feasible(vocab, size) {
        return canonical_structures(vocab, size);
    }
    if size % 2 == 0 && exhaustive_feasible(vocab, size / 2) {
        let mut out = Vec::new();
        for s in canonical_structures(vocab, size / 2)? {
            out.extend(doubled_candidates(&s)?);
        }
        return Ok(out);
    }
    Err(Error::Resource(format!(
        "witness search at size {size} exceeds the exhaustive-search budget"
    )))
}

/// Searches for a certified inexpressibility witness: the first pair
/// (A, B) in canonical order with differing query values and a passing
/// homomorphism-agreement check.
pub fn search_inexpressibility_witness(
    query: &Fo,
    vocab: &Vocabulary,
    bounds: &WitnessBounds,
) -> Result<Option<(Structure, Structure)>> {
    for &na in &bounds.a_sizes {
        let cand_a = candidates(vocab, na)?;
        for &nb in &bounds.b_sizes {
            let cand_b = candidates(vocab, nb)?;
            let vals_b: Vec<bool> =
                cand_b.iter().map(|b| fo_check(query, b)).collect::<Result<_>>()?;
            for a in &cand_a {
                let va = fo_check(query, a)?;
                for (b, &vb) in cand_b.iter().zip(&vals_b) {
                    if va == vb {
                        continue;
                    }
                    // Cheap necessary condition before the pinned checks.
                    if find_homomorphism(a, b, &BTreeMap::new())?.is_none()
                        || find_homomorphism(b, a, &BTreeMap::new())?.is_none()
                    {
                        continue;
                    }
                    if hom_agreement_check(a, b)? {
                        return Ok(Some((a.clone(), b.clone())));
                    }
                }
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_facts;

    fn vocab_e() -> Vocabulary {
        Vocabulary::new(vec![("E".into(), 2)]).unwrap()
    }

    #[test]
    fn fo_evaluator_on_known_structures() {
        let two_cycle = parse_facts("E(0,1). E(1,0).", &vocab_e()).unwrap();
        let edge = parse_facts("E(0,1).", &vocab_e()).unwrap();
        assert!(fo_check(&sym_query(), &two_cycle).unwrap());
        assert!(!fo_check(&sym_query(), &edge).unwrap());
        assert!(!fo_check(&trans_query(), &two_cycle).unwrap()); // E(0,1),E(1,0) but no E(0,0)
        assert!(fo_check(&trans_query(), &edge).unwrap());
        assert!(fo_check(&some_edge_query(), &edge).unwrap());
        let empty = parse_facts("universe 0.", &vocab_e()).unwrap();
        assert!(!fo_check(&some_edge_query(), &empty).unwrap());
    }

    #[test]
    fn agreement_identity_and_isomorphism() {
        let a = parse_facts("E(0,1). E(1,0).", &vocab_e()).unwrap();
        assert!(hom_agreement_check(&a, &a).unwrap());
        let b = parse_facts("E(7,9). E(9,7).", &vocab_e()).unwrap();
        assert!(hom_agreement_check(&a, &b).unwrap());
    }

    #[test]
    fn agreement_rejects_incomparable_structures() {
        let loop_s = parse_facts("E(0,0).", &vocab_e()).unwrap();
        let edge = parse_facts("E(0,1).", &vocab_e()).unwrap();
        assert!(!hom_agreement_check(&loop_s, &edge).unwrap());
    }

    #[test]
    fn agreement_on_loop_extension_pair() {
        // A = loop; B = two loops plus an asymmetric bridge: every element
        // folds onto a loop in both directions.
        let a = parse_facts("E(0,0).", &vocab_e()).unwrap();
        let b = parse_facts("E(0,0). E(1,1). E(0,1).", &vocab_e()).unwrap();
        assert!(hom_agreement_check(&a, &b).unwrap());
        assert_ne!(fo_check(&sym_query(), &a).unwrap(), fo_check(&sym_query(), &b).unwrap());
    }

    #[test]
    fn ef_rank1_on_unary_structures() {
        let vocab = Vocabulary::new(vec![("P".into(), 1), ("Q".into(), 1)]).unwrap();
        let ua = parse_facts("P(0). Q(1).", &vocab).unwrap();
        let ub = parse_facts("P(0). P(2). Q(1).", &vocab).unwrap();
        assert!(ef_rank1_agree(&ua, &ub).unwrap()); // multiplicity-invariant
        let uc = parse_facts("P(0). Q(0).", &vocab).unwrap();
        assert!(!ef_rank1_agree(&ua, &uc).unwrap());
        assert!(ef_rank1_agree(&parse_facts("E(0,0).", &vocab_e()).unwrap(), &ua).is_err());
    }

    #[test]
    fn sym_witness_found_within_size_four() {
        let bounds = WitnessBounds { a_sizes: vec![1, 2, 3, 4], b_sizes: vec![1, 2, 3, 4] };
        let found = search_inexpressibility_witness(&sym_query(), &vocab_e(), &bounds)
            .unwrap()
            .expect("SYM witness must exist within the bounds");
        let (a, b) = found;
        assert!(hom_agreement_check(&a, &b).unwrap());
        assert_ne!(fo_check(&sym_query(), &a).unwrap(), fo_check(&sym_query(), &b).unwrap());
    }

    #[test]
    fn trans_witness_found_at_three_and_six() {
        let bounds = WitnessBounds { a_sizes: vec![3], b_sizes: vec![6] };
        let found = search_inexpressibility_witness(&trans_query(), &vocab_e(), &bounds)
            .unwrap()
            .expect("TRANS witness must exist at |A|=3, |B|=6");
        let (a, b) = found;
        assert_eq!(a.universe().len(), 3);
        assert_eq!(b.universe().len(), 6);
        assert!(hom_agreement_check(&a, &b).unwrap());
        assert_ne!(
            fo_check(&trans_query(), &a).unwrap(),
            fo_check(&trans_query(), &b).unwrap()
        );
    }

    #[test]
    fn expressible_query_has_no_witness() {
        let bounds = WitnessBounds { a_sizes: vec![1, 2, 3], b_sizes: vec![1, 2, 3] };
        assert!(search_inexpressibility_witness(&some_edge_query(), &vocab_e(), &bounds)
            .unwrap()
            .is_none());
        let bounds = WitnessBounds { a_sizes: vec![3], b_sizes: vec![6] };
        assert!(search_inexpressibility_witness(&some_edge_query(), &vocab_e(), &bounds)
            .unwrap()
            .is_none());
    }
}
