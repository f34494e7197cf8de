//! The satisfiability decider: rank-1 normalization over a view set,
//! propositional abstraction over class-nonemptiness flags with containment
//! pruning, bounded model search with canonical-form symmetry breaking, and
//! the exact theoretical size bound.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::One;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{model_check, ClassSignature};
use crate::logic::{Const, Dialect, Structure, UcvFormula, Var, ViewSet, Vocabulary};
use crate::viewenum::containment_lattice;

/// NNF boolean combination over class-nonemptiness literals `e_S`.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub enum Rank1Form {
    True,
    False,
    /// `e_S` when positive, `¬e_S` otherwise: "some element has signature S".
    Lit { sig: ClassSignature, positive: bool },
    And(Vec<Rank1Form>),
    Or(Vec<Rank1Form>),
}

impl Rank1Form {
    pub fn negate(&self) -> Rank1Form {
        match self {
            Rank1Form::True => Rank1Form::False,
            Rank1Form::False => Rank1Form::True,
            Rank1Form::Lit { sig, positive } => Rank1Form::Lit { sig: *sig, positive: !positive },
            Rank1Form::And(parts) => Rank1Form::Or(parts.iter().map(Rank1Form::negate).collect()),
            Rank1Form::Or(parts) => Rank1Form::And(parts.iter().map(Rank1Form::negate).collect()),
        }
    }

    /// Truth on a realized-signature set.
    pub fn evaluate(&self, realized: &BTreeSet<ClassSignature>) -> bool {
        match self {
            Rank1Form::True => true,
            Rank1Form::False => false,
            Rank1Form::Lit { sig, positive } => realized.contains(sig) == *positive,
            Rank1Form::And(parts) => parts.iter().all(|p| p.evaluate(realized)),
            Rank1Form::Or(parts) => parts.iter().any(|p| p.evaluate(realized)),
        }
    }
}

fn translate(
    formula: &UcvFormula,
    views: &ViewSet,
    env: &mut BTreeMap<Var, ClassSignature>,
) -> Result<Rank1Form> {
    Ok(match formula {
        UcvFormula::View(name, x) => {
            let j = views
                .index_of(name)
                .ok_or_else(|| Error::Input(format!("undefined view {name}")))?;
            let sig = env
                .get(x)
                .ok_or_else(|| Error::Input(format!("unbound variable {x}")))?;
            if sig.get(j) {
                Rank1Form::True
            } else {
                Rank1Form::False
            }
        }
        UcvFormula::Not(f) => translate(f, views, env)?.negate(),
        UcvFormula::And(a, b) => {
            Rank1Form::And(vec![translate(a, views, env)?, translate(b, views, env)?])
        }
        UcvFormula::Exists(x, f) => {
            // ∃x ψ holds iff some signature S is realized and ψ holds with
            // x's class fixed to S: the truth of ψ at x depends only on S.
            let saved = env.get(x).copied();
            let mut branches = Vec::new();
            for sig in ClassSignature::all(views.n()) {
                env.insert(x.clone(), sig);
                branches.push(Rank1Form::And(vec![
                    Rank1Form::Lit { sig, positive: true },
                    translate(f, views, env)?,
                ]));
            }
            match saved {
                Some(s) => {
                    env.insert(x.clone(), s);
                }
                None => {
                    env.remove(x);
                }
            }
            Rank1Form::Or(branches)
        }
    })
}

/// Rewrites a closed pure-UCV sentence into an equivalent rank-1 form over
/// class-nonemptiness literals: for every structure `I`, the sentence holds
/// in `I` iff the form evaluates true on the realized signatures of `I`.
pub fn normalize_rank1(sentence: &UcvFormula, views: &ViewSet) -> Result<Rank1Form> {
    if !sentence.is_sentence() {
        return Err(Error::Input("rank-1 normalization requires a sentence".into()));
    }
    if views.n() > 16 {
        return Err(Error::Resource(format!(
            "rank-1 normalization supports at most 16 views, got {}",
            views.n()
        )));
    }
    let mut env = BTreeMap::new();
    translate(sentence, views, &mut env)
}

/// Enumerates the nonempty signature sets on which the form evaluates true
/// and every signature respects the containment lattice (`V_a`-bit set and
/// `V_a ⊆ V_b` forces the `V_b`-bit). The lattice condition is necessary
/// for realizability, so an empty result certifies unsatisfiability.
pub fn pattern_candidates(
    form: &Rank1Form,
    lattice: &[u64],
    n_views: usize,
    cap: usize,
) -> Result<Vec<BTreeSet<ClassSignature>>> {
    if n_views > 4 {
        return Err(Error::Resource(format!(
            "pattern enumeration supports at most 4 views (2^{} signature sets), got {n_views}",
            1usize << n_views
        )));
    }
    let sigs: Vec<ClassSignature> = ClassSignature::all(n_views).collect();
    let respects = |s: &ClassSignature| {
        (0..n_views).all(|a| !s.get(a) || (s.bits & lattice[a]) == lattice[a])
    };
    let admissible: Vec<ClassSignature> = sigs.into_iter().filter(respects).collect();
    let mut out = Vec::new();
    for mask in 1u64..(1u64 << admissible.len()) {
        let set: BTreeSet<ClassSignature> = admissible
            .iter()
            .enumerate()
            .filter(|(i, _)| (mask >> i) & 1 == 1)
            .map(|(_, s)| *s)
            .collect();
        if form.evaluate(&set) {
            out.push(set);
            if out.len() >= cap {
                break;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Bounded model search
// ---------------------------------------------------------------------------

fn element_names(n: usize) -> Vec<Const> {
    (0..n).map(|i| Const::new(format!("{i}"))).collect()
}

/// Tuple index space for a vocabulary at a fixed universe size: one bit per
/// possible tuple, symbols in vocabulary order, tuples in mixed-radix order.
fn tuple_space(vocab: &Vocabulary, n: usize) -> Vec<(String, Vec<Vec<usize>>)> {
    let mut out = Vec::new();
    for sym in vocab.symbols() {
        let mut tuples = Vec::new();
        let mut idx = vec![0usize; sym.arity];
        loop {
            tuples.push(idx.clone());
            let mut k = sym.arity;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < n {
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
        out.push((sym.name.clone(), tuples));
    }
    out
}

fn structure_from_bits(
    vocab: &Vocabulary,
    n: usize,
    space: &[(String, Vec<Vec<usize>>)],
    bits: u128,
) -> Structure {
    let names = element_names(n);
    let universe: BTreeSet<Const> = names.iter().cloned().collect();
    let mut relations: BTreeMap<String, BTreeSet<Vec<Const>>> = BTreeMap::new();
    let mut bit = 0usize;
    for (rel, tuples) in space {
        let set = relations.entry(rel.clone()).or_default();
        for t in tuples {
            if (bits >> bit) & 1 == 1 {
                set.insert(t.iter().map(|&i| names[i].clone()).collect());
            }
            bit += 1;
        }
    }
    Structure::new(vocab.clone(), universe, relations).expect("constructed tuples are in range")
}

fn permutations_of(n: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in rec(n - 1) {
            for i in 0..n {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }
    rec(n)
}

/// Applies an element permutation to the bitmap encoding.
fn permute_bits(space: &[(String, Vec<Vec<usize>>)], n: usize, bits: u128, perm: &[usize]) -> u128 {
    // Position lookup: tuple (as mixed-radix number) -> bit offset per symbol.
    let mut out = 0u128;
    let mut base = 0usize;
    for (_, tuples) in space {
        let arity = tuples.first().map(|t| t.len()).unwrap_or(0);
        for (i, t) in tuples.iter().enumerate() {
            if (bits >> (base + i)) & 1 == 1 {
                // index of the permuted tuple in mixed-radix order
                let mut j = 0usize;
                for &e in t {
                    j = j * n + perm[e];
                }
                let _ = arity;
                out |= 1u128 << (base + j);
            }
        }
        base += tuples.len();
    }
    out
}

/// Lexicographically-minimal-encoding symmetry breaking: a bitmap is
/// canonical iff no element permutation yields a smaller encoding.
fn is_canonical(space: &[(String, Vec<Vec<usize>>)], n: usize, bits: u128, perms: &[Vec<usize>]) -> bool {
    perms.iter().all(|p| permute_bits(space, n, bits, p) >= bits)
}

/// Result of a complete search up to a size bound.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub enum SearchOutcome {
    Sat(Structure),
    NoModelUpTo(usize),
}

/// Search resource budget.
#[derive(Clone, Debug)]
pub struct Budget {
    pub max_size: usize,
    pub time: Duration,
    /// Cap on the number of candidate structures examined.
    pub candidates: u128,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_size: 4, time: Duration::from_secs(10), candidates: 5_000_000 }
    }
}

/// Complete enumeration of structures of exactly `size` elements over the
/// vocabulary (no symmetry breaking) — the brute-force oracle path.
pub fn all_structures(vocab: &Vocabulary, size: usize) -> Result<Vec<Structure>> {
    let space = tuple_space(vocab, size);
    let total_bits: usize = space.iter().map(|(_, t)| t.len()).sum();
    if total_bits > 24 {
        return Err(Error::Resource(format!(
            "exhaustive structure enumeration limited to 24 tuple bits, needs {total_bits}"
        )));
    }
    Ok((0u128..(1u128 << total_bits))
        .map(|bits| structure_from_bits(vocab, size, &space, bits))
        .collect())
}

/// One representative per isomorphism class among the structures of
/// exactly `size` elements, in canonical bitmap order.
pub fn canonical_structures(vocab: &Vocabulary, size: usize) -> Result<Vec<Structure>> {
    let space = tuple_space(vocab, size);
    let total_bits: usize = space.iter().map(|(_, t)| t.len()).sum();
    if total_bits > 24 {
        return Err(Error::Resource(format!(
            "exhaustive structure enumeration limited to 24 tuple bits, needs {total_bits}"
        )));
    }
    let perms = permutations_of(size);
    Ok((0u128..(1u128 << total_bits))
        .filter(|&bits| is_canonical(&space, size, bits, &perms))
        .map(|bits| structure_from_bits(vocab, size, &space, bits))
        .collect())
}

/// Exhaustive, symmetry-broken model search up to `max_size` elements.
/// Complete: returns `Sat` iff some structure of size ≤ `max_size`
/// satisfies the sentence; the returned model is the first in canonical
/// (size, bitmap) order and therefore deterministic.
pub fn bounded_model_search(
    sentence: &UcvFormula,
    views: &ViewSet,
    vocab: &Vocabulary,
    budget: &Budget,
) -> Result<SearchOutcome> {
    if budget.max_size < 1 {
        return Err(Error::Input("max_size must be at least 1".into()));
    }
    let start = Instant::now();
    let mut examined: u128 = 0;
    for n in 1..=budget.max_size {
        let space = tuple_space(vocab, n);
        let total_bits: usize = space.iter().map(|(_, t)| t.len()).sum();
        if total_bits >= 127 {
            return Err(Error::Resource(format!(
                "search space at size {n} needs {total_bits} tuple bits; not enumerable"
            )));
        }
        let count = 1u128 << total_bits;
        if examined.saturating_add(count) > budget.candidates {
            return Err(Error::Resource(format!(
                "candidate budget of {} structures exceeded at size {n}",
                budget.candidates
            )));
        }
        let perms = permutations_of(n);
        for bits in 0..count {
            examined += 1;
            if examined % 4096 == 0 && start.elapsed() > budget.time {
                return Err(Error::Resource(format!(
                    "time budget of {:?} exceeded after {examined} candidates",
                    budget.time
                )));
            }
            if !is_canonical(&space, n, bits, &perms) {
                continue;
            }
            let candidate = structure_from_bits(vocab, n, &space, bits);
            if model_check(sentence, views, &candidate)? {
                return Ok(SearchOutcome::Sat(candidate));
            }
        }
    }
    Ok(SearchOutcome::NoModelUpTo(budget.max_size))
}

// ---------------------------------------------------------------------------
// Verdicts and the decision pipeline
// ---------------------------------------------------------------------------

/// Why an UNSAT verdict is certified.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub enum UnsatCertificate {
    /// The propositional abstraction admits no candidate signature pattern.
    Abstraction,
    /// Exhaustive search reached the theoretical model-size bound.
    BoundExhausted { bound: BigUint },
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub enum Verdict {
    Sat { model: Structure },
    Unsat { certificate: UnsatCertificate },
    Unknown { reason: String },
}

/// The full decision pipeline: abstraction fast path, then bounded search.
/// SAT verdicts are re-verified by model checking before being returned;
/// UNSAT is certified only by the abstraction or by a search budget at or
/// above the theoretical bound (pure UCV only).
pub fn decide(
    sentence: &UcvFormula,
    views: &ViewSet,
    vocab: &Vocabulary,
    budget: &Budget,
) -> Result<Verdict> {
    if !sentence.is_sentence() {
        return Err(Error::Input("decide requires a sentence".into()));
    }
    let pure = views.dialect() == Dialect::Ucv;

    if pure && views.n() <= 4 {
        let form = normalize_rank1(sentence, views)?;
        let lattice = containment_lattice(views, vocab)?;
        let candidates = pattern_candidates(&form, &lattice, views.n(), 1)?;
        if candidates.is_empty() {
            return Ok(Verdict::Unsat { certificate: UnsatCertificate::Abstraction });
        }
    }

    match bounded_model_search(sentence, views, vocab, budget) {
        Ok(SearchOutcome::Sat(model)) => {
            if !model_check(sentence, views, &model)? {
                return Err(Error::Construction(
                    "search returned a structure that fails model checking".into(),
                ));
            }
            Ok(Verdict::Sat { model })
        }
        Ok(SearchOutcome::NoModelUpTo(size)) => {
            if pure {
                let bound = theoretical_bound(vocab.p().max(1), views.m.max(1), 1);
                if BigUint::from(size) >= bound {
                    return Ok(Verdict::Unsat {
                        certificate: UnsatCertificate::BoundExhausted { bound },
                    });
                }
            }
            Ok(Verdict::Unknown {
                reason: format!("no model up to size {size}; budget below the certified bound"),
            })
        }
        Err(Error::Resource(msg)) => Ok(Verdict::Unknown { reason: msg }),
        Err(e) => Err(e),
    }
}

/// Exact big-integer evaluation of the derived model-size bound:
/// N = m(mp)^m, h = g = c·m, δ = 2^N·(Nm)^h,
/// Δ = max(δ^g, ⌈((δ−1)^{g−1}−1)/(δ−2)⌉ when δ > 2),
/// bound = Δ·2^N·(Nm)^{h+1}.
pub fn theoretical_bound(p: usize, m: usize, c: usize) -> BigUint {
    assert!(p >= 1 && m >= 1 && c >= 1);
    let big = |x: usize| BigUint::from(x);
    let n: BigUint = big(m) * big(m * p).pow(m as u32);
    let h = (c * m) as u32;
    let g = h;
    let two_n = pow_big(&big(2), &n);
    let nm = &n * big(m);
    let delta: BigUint = &two_n * pow_big(&nm, &BigUint::from(h));
    let one = BigUint::one();
    let two = big(2);
    let mut cap_delta = pow_big(&delta, &BigUint::from(g));
    if delta > two {
        // ceil(((δ−1)^{g−1} − 1) / (δ − 2))
        let numer = pow_big(&(&delta - &one), &BigUint::from(g - 1)) - &one;
        let denom = &delta - &two;
        let floor = &numer / &denom;
        let rem = &numer % &denom;
        let needed = if rem == BigUint::ZERO { floor } else { floor + &one };
        if needed > cap_delta {
            cap_delta = needed;
        }
    }
    cap_delta * two_n * pow_big(&nm, &BigUint::from(h + 1))
}

/// `base^exp` for big exponents (exponents stay small enough in practice to
/// fit u32, but N = m(mp)^m can formally exceed it for large inputs).
fn pow_big(base: &BigUint, exp: &BigUint) -> BigUint {
    let mut result = BigUint::one();
    let mut b = base.clone();
    let mut e = exp.clone();
    let one = BigUint::one();
    while e > BigUint::ZERO {
        if &e & &one == one {
            result *= &b;
        }
        e >>= 1;
        if e > BigUint::ZERO {
            b = &b * &b;
        }
    }
    result
}
