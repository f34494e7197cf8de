//! View enumeration and conjunctive-query reasoning: containment and
//! equivalence via the canonical-database homomorphism test, cores, and
//! enumeration of all pairwise non-equivalent unary views of bounded length.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::eval::find_homomorphism;
use crate::logic::{Atom, ConjunctiveView, Const, Structure, Var, ViewRole, ViewSet, Vocabulary};

/// The canonical database of a view body: variables frozen into constants.
pub fn canonical_database(view: &ConjunctiveView, vocab: &Vocabulary) -> Result<Structure> {
    let facts = view.body.iter().map(|a| {
        (
            a.rel.clone(),
            a.args.iter().map(|v| Const::new(v.0.clone())).collect::<Vec<_>>(),
        )
    });
    Structure::from_facts(vocab.clone(), facts, None)
}

fn require_pure(view: &ConjunctiveView) -> Result<()> {
    if !view.is_pure() {
        return Err(Error::UnsupportedDialect(format!(
            "containment test requires pure conjunctive views; {} uses {}",
            view.name,
            view.dialect()
        )));
    }
    Ok(())
}

/// Decides `va ⊆ vb`: whether every element in `va`'s image also lies in
/// `vb`'s image, over every structure. Classical test: a homomorphism from
/// `vb`'s body into the canonical database of `va` mapping head to head.
pub fn cq_contains(va: &ConjunctiveView, vb: &ConjunctiveView, vocab: &Vocabulary) -> Result<bool> {
    require_pure(va)?;
    require_pure(vb)?;
    va.validate(vocab)?;
    vb.validate(vocab)?;
    let src = canonical_database(vb, vocab)?;
    let dst = canonical_database(va, vocab)?;
    let mut pins = BTreeMap::new();
    pins.insert(Const::new(vb.head.0.clone()), Const::new(va.head.0.clone()));
    Ok(find_homomorphism(&src, &dst, &pins)?.is_some())
}

pub fn cq_equivalent(va: &ConjunctiveView, vb: &ConjunctiveView, vocab: &Vocabulary) -> Result<bool> {
    Ok(cq_contains(va, vb, vocab)? && cq_contains(vb, va, vocab)?)
}

/// Computes a core: a minimal equivalent subview, by greedy atom removal in
/// canonical order with mutual-containment checks.
pub fn core(view: &ConjunctiveView, vocab: &Vocabulary) -> Result<ConjunctiveView> {
    require_pure(view)?;
    let mut current = view.clone();
    loop {
        let mut shrunk = false;
        for i in 0..current.body.len() {
            if current.body.len() == 1 {
                break;
            }
            let mut candidate = current.clone();
            candidate.body.remove(i);
            if candidate.validate(vocab).is_err() {
                continue; // removal would make the view unsafe
            }
            if cq_equivalent(&candidate, &current, vocab)? {
                current = candidate;
                shrunk = true;
                break;
            }
        }
        if !shrunk {
            return Ok(current);
        }
    }
}

/// Canonical rendered form of a pure view, invariant under alpha-renaming
/// and body reordering: minimize over atom permutations, renaming variables
/// in first-occurrence order with the head fixed as `x`.
pub fn canonical_form(view: &ConjunctiveView) -> String {
    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..n {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }
    let names = ["x", "y", "z", "w", "v", "u", "t", "s"];
    let mut best: Option<String> = None;
    for perm in permutations(view.body.len()) {
        let mut rename: BTreeMap<&Var, String> = BTreeMap::new();
        rename.insert(&view.head, "x".to_string());
        let mut next = 1usize;
        let mut parts = Vec::new();
        for &i in &perm {
            let atom = &view.body[i];
            let mut args = Vec::new();
            for v in &atom.args {
                let name = rename.entry(v).or_insert_with(|| {
                    let n = if next < names.len() {
                        names[next].to_string()
                    } else {
                        format!("x{next}")
                    };
                    next += 1;
                    n
                });
                args.push(name.clone());
            }
            parts.push(format!("{}({})", atom.rel, args.join(",")));
        }
        let rendered = format!("V(x) <- {}", parts.join(", "));
        if best.as_ref().is_none_or(|b| rendered < *b) {
            best = Some(rendered);
        }
    }
    best.unwrap_or_else(|| "V(x) <-".to_string())
}

/// All multisets of atoms (indices into `pool`, non-decreasing) whose total
/// arity is in `1..=m`.
fn bodies(pool: &[Atom], m: usize, cap: usize, out: &mut Vec<Vec<usize>>) -> Result<()> {
    fn rec(
        pool: &[Atom],
        start: usize,
        budget: usize,
        acc: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        cap: usize,
    ) -> Result<()> {
        if !acc.is_empty() {
            if out.len() >= cap {
                return Err(Error::Resource(format!(
                    "view enumeration exceeded the candidate cap of {cap}"
                )));
            }
            out.push(acc.clone());
        }
        for i in start..pool.len() {
            let arity = pool[i].args.len();
            if arity <= budget {
                acc.push(i);
                rec(pool, i, budget - arity, acc, out, cap)?;
                acc.pop();
            }
        }
        Ok(())
    }
    let mut acc = Vec::new();
    rec(pool, 0, m, &mut acc, out, cap)
}

/// Enumerates all pairwise non-equivalent safe unary conjunctive views of
/// length at most `m`, as cores in canonical order, named `V1..VN`.
/// The count is bounded by `m(mp)^m`.
pub fn enumerate_views(vocab: &Vocabulary, m: usize, cap: usize) -> Result<ViewSet> {
    if m < 1 {
        return Err(Error::Input("maximum view length must be at least 1".into()));
    }
    // Variable pool of size m suffices: a body of length <= m mentions at
    // most m distinct variables.
    let vars: Vec<Var> = (0..m).map(|i| Var::new(format!("u{i}"))).collect();
    let mut pool: Vec<Atom> = Vec::new();
    for sym in vocab.symbols() {
        if sym.arity > m {
            continue; // a single atom already exceeds the length bound
        }
        let mut idx = vec![0usize; sym.arity];
        loop {
            pool.push(Atom::new(
                sym.name.clone(),
                idx.iter().map(|&i| vars[i].clone()).collect(),
            ));
            // advance the mixed-radix counter over variable choices
            let mut k = sym.arity;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < m {
                    break;
                }
                idx[k] = 0;
                if k == 0 {
                    k = usize::MAX;
                    break;
                }
            }
            if k == usize::MAX {
                break;
            }
        }
    }

    let mut raw_bodies = Vec::new();
    bodies(&pool, m, cap, &mut raw_bodies)?;

    // (canonical core form) -> core view
    let mut seen: BTreeMap<String, ConjunctiveView> = BTreeMap::new();
    for body_idx in raw_bodies {
        let body: Vec<Atom> = body_idx.iter().map(|&i| pool[i].clone()).collect();
        let mut heads: BTreeSet<Var> = BTreeSet::new();
        for a in &body {
            heads.extend(a.args.iter().cloned());
        }
        for head in heads {
            let view = ConjunctiveView {
                name: "V".into(),
                head,
                body: body.clone(),
                extras: vec![],
            };
            let cored = core(&view, vocab)?;
            let key = canonical_form(&cored);
            seen.entry(key).or_insert(cored);
        }
    }

    // Canonical order: by length, then by canonical rendering.
    let mut reps: Vec<(usize, String, ConjunctiveView)> = seen
        .into_iter()
        .map(|(key, v)| (v.length(), key, v))
        .collect();
    reps.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    let views: Vec<ConjunctiveView> = reps
        .into_iter()
        .enumerate()
        .map(|(i, (_, _, mut v))| {
            v.name = format!("V{}", i + 1);
            v
        })
        .collect();
    Ok(ViewSet { views, role: ViewRole::Universe, m })
}

/// The containment lattice over a view set: `lattice[a]` is the bitmask of
/// views `b` with `views[a] ⊆ views[b]`.
pub fn containment_lattice(views: &ViewSet, vocab: &Vocabulary) -> Result<Vec<u64>> {
    let n = views.n();
    let mut out = vec![0u64; n];
    for a in 0..n {
        for b in 0..n {
            if cq_contains(&views.views[a], &views.views[b], vocab)? {
                out[a] |= 1 << b;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab_e() -> Vocabulary {
        Vocabulary::new(vec![("E".into(), 2)]).unwrap()
    }

    fn v(name: &str, head: &str, body: &[(&str, &[&str])]) -> ConjunctiveView {
        ConjunctiveView {
            name: name.into(),
            head: Var::new(head),
            body: body
                .iter()
                .map(|(rel, args)| Atom::new(*rel, args.iter().map(|a| Var::new(*a)).collect()))
                .collect(),
            extras: vec![],
        }
    }

    #[test]
    fn containment_of_walk_views() {
        let vocab = vocab_e();
        let short = v("V", "x", &[("E", &["x", "y"])]);
        let long = v("V'", "x", &[("E", &["x", "y"]), ("E", &["y", "z"])]);
        // A two-step walk implies a one-step walk, not conversely.
        assert!(cq_contains(&long, &short, &vocab).unwrap());
        assert!(!cq_contains(&short, &long, &vocab).unwrap());
        assert!(cq_contains(&short, &short, &vocab).unwrap());
    }

    #[test]
    fn directionality_matters() {
        let vocab = vocab_e();
        let fwd = v("F", "x", &[("E", &["x", "y"])]);
        let bwd = v("B", "x", &[("E", &["y", "x"])]);
        assert!(!cq_equivalent(&fwd, &bwd, &vocab).unwrap());
    }

    #[test]
    fn alpha_renamed_views_are_equivalent() {
        let vocab = vocab_e();
        let a = v("A", "x", &[("E", &["x", "y"]), ("E", &["y", "z"])]);
        let b = v("B", "p", &[("E", &["p", "q"]), ("E", &["q", "r"])]);
        assert!(cq_equivalent(&a, &b, &vocab).unwrap());
    }

    #[test]
    fn core_folds_duplicate_branches() {
        let vocab = vocab_e();
        let redundant = v("V", "x", &[("E", &["x", "y"]), ("E", &["x", "z"])]);
        let c = core(&redundant, &vocab).unwrap();
        assert_eq!(c.body.len(), 1);
        assert!(cq_equivalent(&c, &redundant, &vocab).unwrap());
        let simple = v("W", "x", &[("E", &["x", "y"])]);
        assert!(cq_equivalent(&c, &simple, &vocab).unwrap());
    }

    #[test]
    fn core_keeps_genuine_atoms() {
        let vocab = vocab_e();
        let walk2 = v("V", "x", &[("E", &["x", "y"]), ("E", &["y", "z"])]);
        assert_eq!(core(&walk2, &vocab).unwrap().body.len(), 2);
    }

    #[test]
    fn enumerate_e2_m2_gives_three_views() {
        let views = enumerate_views(&vocab_e(), 2, 100_000).unwrap();
        assert_eq!(views.n(), 3);
        let forms: BTreeSet<String> =
            views.views.iter().map(canonical_form).collect();
        let expected: BTreeSet<String> = [
            "V(x) <- E(x,x)",
            "V(x) <- E(x,y)",
            "V(x) <- E(y,x)",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(forms, expected);
    }

    #[test]
    fn enumerate_unary_m1_gives_one_view() {
        let vocab = Vocabulary::new(vec![("U".into(), 1)]).unwrap();
        let views = enumerate_views(&vocab, 1, 100_000).unwrap();
        assert_eq!(views.n(), 1);
        assert_eq!(canonical_form(&views.views[0]), "V(x) <- U(x)");
    }

    #[test]
    fn count_respects_counting_bound() {
        for p in 1..=2usize {
            let vocab = Vocabulary::new(
                (0..p).map(|i| (format!("R{i}"), 2)).collect(),
            )
            .unwrap();
            for m in 1..=3usize {
                let views = enumerate_views(&vocab, m, 1_000_000).unwrap();
                let bound = m * (m * p).pow(m as u32);
                assert!(
                    views.n() <= bound,
                    "p={p} m={m}: {} > bound {bound}",
                    views.n()
                );
                // No two outputs are equivalent.
                for a in 0..views.n() {
                    for b in (a + 1)..views.n() {
                        assert!(!cq_equivalent(&views.views[a], &views.views[b], &vocab).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let vocab = Vocabulary::new(vec![("R".into(), 2), ("S".into(), 2)]).unwrap();
        let err = enumerate_views(&vocab, 3, 5).unwrap_err();
        assert!(err.to_string().contains("cap"));
    }
}
