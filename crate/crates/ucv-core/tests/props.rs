//! Randomized property tests: renderer/parser round trips, homomorphism
//! preservation of views, rank-1 normalization against direct model
//! checking, agreement transfer, and size-bound monotonicity.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ucv_core::apps::witness::{ef_rank1_agree, hom_agreement_check};
use ucv_core::eval::{eval_view, lambda_map, model_check, realized_signatures};
use ucv_core::frontend::{parse_theory, render_theory, Theory};
use ucv_core::logic::{
    Atom, ConjunctiveView, Const, Extra, Structure, Tuple, UcvFormula, Var, ViewSet, Vocabulary,
};
use ucv_core::sat::{normalize_rank1, theoretical_bound};

fn e2() -> Vocabulary {
    Vocabulary::new(vec![("E".into(), 2)]).unwrap()
}

/// A random safe unary view over E/2: one or two atoms connected to the
/// head, optionally with a disequality between body variables.
fn random_view(name: &str, rng: &mut ChaCha8Rng, allow_neq: bool) -> ConjunctiveView {
    let pool = [Var::new("x"), Var::new("y"), Var::new("z")];
    let head = pool[0].clone();
    let mut used = vec![head.clone()];
    let mut body = Vec::new();
    for _ in 0..rng.gen_range(1..=2) {
        let anchor = used[rng.gen_range(0..used.len())].clone();
        let other = pool[rng.gen_range(0..pool.len())].clone();
        if !used.contains(&other) {
            used.push(other.clone());
        }
        let args = if rng.gen_bool(0.5) {
            vec![anchor, other]
        } else {
            vec![other, anchor]
        };
        body.push(Atom::new("E", args));
    }
    let mut extras = Vec::new();
    if allow_neq && used.len() >= 2 && rng.gen_bool(0.3) {
        let a = used[rng.gen_range(0..used.len())].clone();
        let b = used[rng.gen_range(0..used.len())].clone();
        if a != b {
            extras.push(Extra::Neq(a, b));
        }
    }
    ConjunctiveView { name: name.into(), head, body, extras }
}

fn random_sentence(rng: &mut ChaCha8Rng, names: &[String]) -> UcvFormula {
    fn gen(
        rng: &mut ChaCha8Rng,
        names: &[String],
        free: &mut Vec<Var>,
        depth: usize,
        next: &mut usize,
    ) -> UcvFormula {
        let leaf = |rng: &mut ChaCha8Rng, free: &mut Vec<Var>, next: &mut usize| {
            if let Some(v) = (!free.is_empty()).then(|| free[rng.gen_range(0..free.len())].clone())
            {
                UcvFormula::view(&names[rng.gen_range(0..names.len())], v)
            } else {
                let v = Var::new(format!("q{next}"));
                *next += 1;
                UcvFormula::exists(
                    v.clone(),
                    UcvFormula::view(&names[rng.gen_range(0..names.len())], v),
                )
            }
        };
        if depth == 0 {
            return leaf(rng, free, next);
        }
        match rng.gen_range(0..4) {
            0 => UcvFormula::not(gen(rng, names, free, depth - 1, next)),
            1 => UcvFormula::and(
                gen(rng, names, free, depth - 1, next),
                gen(rng, names, free, depth - 1, next),
            ),
            2 => {
                let v = Var::new(format!("q{next}"));
                *next += 1;
                free.push(v.clone());
                let f = gen(rng, names, free, depth - 1, next);
                free.pop();
                UcvFormula::exists(v, f)
            }
            _ => leaf(rng, free, next),
        }
    }
    gen(rng, names, &mut Vec::new(), 3, &mut 0)
}

fn random_structure(rng: &mut ChaCha8Rng, vocab: &Vocabulary, max_size: usize) -> Structure {
    let size = rng.gen_range(1..=max_size);
    let universe: BTreeSet<Const> = (0..size).map(|i| Const::new(i.to_string())).collect();
    let mut facts: Vec<(String, Tuple)> = Vec::new();
    for a in 0..size {
        for b in 0..size {
            if rng.gen_bool(0.5) {
                facts.push((
                    "E".into(),
                    vec![Const::new(a.to_string()), Const::new(b.to_string())],
                ));
            }
        }
    }
    Structure::from_facts(vocab.clone(), facts, Some(universe)).unwrap()
}

fn random_theory(rng: &mut ChaCha8Rng, allow_neq: bool) -> Theory {
    let n_views = rng.gen_range(1..=3);
    let views: Vec<ConjunctiveView> = (0..n_views)
        .map(|i| random_view(&format!("W{}", i + 1), rng, allow_neq))
        .collect();
    let names: Vec<String> = views.iter().map(|v| v.name.clone()).collect();
    let views = ViewSet::theory(views);
    let query = random_sentence(rng, &names);
    let dialect = views.dialect();
    Theory { vocab: e2(), views, query, dialect }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Rendering a theory and parsing it back is the identity on the
    /// vocabulary, views, query, and dialect.
    #[test]
    fn render_parse_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theory = random_theory(&mut rng, true);
        let text = render_theory(&theory);
        let reparsed = parse_theory(&text).unwrap();
        prop_assert_eq!(&reparsed.vocab, &theory.vocab);
        prop_assert_eq!(&reparsed.views.views, &theory.views.views);
        prop_assert_eq!(&reparsed.query, &theory.query);
        prop_assert_eq!(reparsed.dialect, theory.dialect);
    }

    /// Pure conjunctive views are preserved under homomorphisms: if `a`
    /// satisfies a view in `A` and `h : A -> B` is a homomorphism, then
    /// `h(a)` satisfies the view in `B`.
    #[test]
    fn views_preserved_under_homomorphisms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = e2();
        let a = random_structure(&mut rng, &vocab, 3);

        // A random map on the universe induces a homomorphic image.
        let elements: Vec<Const> = a.universe().iter().cloned().collect();
        let mapping: BTreeMap<Const, Const> = elements
            .iter()
            .map(|c| (c.clone(), elements[rng.gen_range(0..elements.len())].clone()))
            .collect();
        let image_facts: Vec<(String, Tuple)> = a
            .facts()
            .map(|(rel, t)| {
                (rel.to_string(), t.iter().map(|c| mapping[c].clone()).collect())
            })
            .collect();
        let universe: BTreeSet<Const> = mapping.values().cloned().collect();
        let b = Structure::from_facts(vocab.clone(), image_facts, Some(universe)).unwrap();

        let view = random_view("W", &mut rng, false);
        let in_a = eval_view(&view, &a).unwrap();
        let in_b = eval_view(&view, &b).unwrap();
        for c in &in_a {
            prop_assert!(
                in_b.contains(&mapping[c]),
                "h({c:?}) escapes the view image in the homomorphic image"
            );
        }
    }

    /// Rank-1 normalization agrees with direct model checking on random
    /// pure sentences and structures.
    #[test]
    fn rank1_matches_model_check(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theory = random_theory(&mut rng, false);
        let structure = random_structure(&mut rng, &theory.vocab, 3);
        let form = normalize_rank1(&theory.query, &theory.views).unwrap();
        let realized = realized_signatures(&structure, &theory.views).unwrap();
        let direct = model_check(&theory.query, &theory.views, &structure).unwrap();
        prop_assert_eq!(form.evaluate(&realized), direct);
    }

    /// If two structures pass the homomorphism-agreement certificate, their
    /// view images agree on realized unary signatures, so no sentence over
    /// the views separates them.
    #[test]
    fn agreement_transfers_to_view_images(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = e2();
        let a = random_structure(&mut rng, &vocab, 3);
        let b = random_structure(&mut rng, &vocab, 3);
        if hom_agreement_check(&a, &b).unwrap() {
            let views: Vec<ConjunctiveView> = (0..rng.gen_range(1..=3))
                .map(|i| random_view(&format!("W{}", i + 1), &mut rng, false))
                .collect();
            let views = ViewSet::theory(views);
            let la = lambda_map(&a, &views).unwrap();
            let lb = lambda_map(&b, &views).unwrap();
            prop_assert!(ef_rank1_agree(&la, &lb).unwrap());
        }
    }

    /// The model-size bound is monotone in each parameter.
    #[test]
    fn bound_monotone(p in 1usize..=3, m in 1usize..=3, c in 1usize..=2) {
        let here = theoretical_bound(p, m, c);
        prop_assert!(here <= theoretical_bound(p + 1, m, c));
        prop_assert!(here <= theoretical_bound(p, m + 1, c));
        prop_assert!(here <= theoretical_bound(p, m, c + 1));
    }
}
