//! End-to-end acceptance suite. Each test covers one numbered criterion,
//! prints a single pass line with its runtime, and enforces the stated
//! time limit.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ucv_core::apps::twocm::{compile_2cm, encode_trace, failing_conjuncts, TwoCounterMachine};
use ucv_core::apps::witness::{
    fo_check, hom_agreement_check, search_inexpressibility_witness, some_edge_query, sym_query,
    trans_query, WitnessBounds,
};
use ucv_core::eval::{eval_view, lambda_map, model_check, realized_signatures};
use ucv_core::frontend::{parse_facts, parse_theory};
use ucv_core::logic::{
    Atom, ConjunctiveView, Const, Structure, Tuple, UcvFormula, Var, ViewSet, Vocabulary,
};
use ucv_core::pipeline::{
    generate_regular_girth, girth, minimal_admissible_delta_cap, run_pipeline, PipelineParams,
};
use ucv_core::sat::{
    all_structures, bounded_model_search, decide, normalize_rank1, theoretical_bound, Budget,
    SearchOutcome, UnsatCertificate, Verdict,
};
use ucv_core::viewenum::{cq_contains, cq_equivalent, enumerate_views};

fn finish(name: &str, limit: Duration, start: Instant) {
    let elapsed = start.elapsed();
    println!("acceptance {name}: pass ({elapsed:?})");
    assert!(
        elapsed <= limit,
        "{name}: took {elapsed:?}, limit {limit:?}"
    );
}

fn e2() -> Vocabulary {
    Vocabulary::new(vec![("E".into(), 2)]).unwrap()
}

const WALK: &str = "rel E/2.\n\
    view V(x) <- E(x,y).\n\
    view V'(x) <- E(x,y), E(y,z).\n\
    query exists x (V'(x) & !V(x)).\n";

const TOTAL_NOLOOP: &str = "rel E/2.\n\
    view V1(x) <- E(x,y).\n\
    view V2(x) <- E(x,x).\n\
    query forall x (V1(x) & !V2(x)).\n";

#[test]
fn criterion_01_lambda_example() {
    let start = Instant::now();
    let theory = parse_theory(WALK).unwrap();
    let path = parse_facts("E(1,2). E(2,3). E(3,4).", &theory.vocab).unwrap();
    assert_eq!(path.universe().len(), 4);

    let image = lambda_map(&path, &theory.views).unwrap();
    let names = |rel: &str| -> BTreeSet<String> {
        image.tuples(rel).iter().map(|t| t[0].0.clone()).collect()
    };
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    assert_eq!(names("V"), set(&["1", "2", "3"]));
    assert_eq!(names("V'"), set(&["1", "2"]));
    finish("1 (lambda example)", Duration::from_millis(100), start);
}

#[test]
fn criterion_02_view_enumeration() {
    let start = Instant::now();
    let vocab = e2();
    let universe = enumerate_views(&vocab, 2, 200_000).unwrap();
    assert_eq!(universe.n(), 3, "expected exactly three views over E/2 at m=2");

    // The three views up to equivalence: the loop, the out-edge, the in-edge.
    let mk = |body: Vec<Atom>| ConjunctiveView {
        name: "W".into(),
        head: Var::new("x"),
        body,
        extras: vec![],
    };
    let x = || Var::new("x");
    let y = || Var::new("y");
    let expected = [
        mk(vec![Atom::new("E", vec![x(), x()])]),
        mk(vec![Atom::new("E", vec![x(), y()])]),
        mk(vec![Atom::new("E", vec![y(), x()])]),
    ];
    for want in &expected {
        let hits = universe
            .views
            .iter()
            .filter(|v| cq_equivalent(want, v, &vocab).unwrap())
            .count();
        assert_eq!(hits, 1, "view {want:?} should match exactly one output");
    }

    // Count bound for all vocabularies with p <= 2 binary relations, m <= 3.
    for p in 1..=2usize {
        let rels: Vec<(String, usize)> = (0..p).map(|i| (format!("R{i}"), 2)).collect();
        let vocab = Vocabulary::new(rels).unwrap();
        for m in 1..=3usize {
            let views = enumerate_views(&vocab, m, 200_000).unwrap();
            let bound = m * (m * p).pow(m as u32);
            assert!(
                views.n() <= bound,
                "p={p} m={m}: {} exceeds bound {bound}",
                views.n()
            );
        }
    }
    finish("2 (view enumeration)", Duration::from_secs(5), start);
}

#[test]
fn criterion_03_unsat_fast_path() {
    let start = Instant::now();
    let theory = parse_theory(WALK).unwrap();
    let verdict = decide(&theory.query, &theory.views, &theory.vocab, &Budget::default()).unwrap();
    assert_eq!(
        verdict,
        Verdict::Unsat { certificate: UnsatCertificate::Abstraction },
        "expected an abstraction certificate with no model search"
    );
    finish("3a (abstraction UNSAT)", Duration::from_millis(100), start);

    let outcome =
        bounded_model_search(&theory.query, &theory.views, &theory.vocab, &Budget::default())
            .unwrap();
    assert_eq!(outcome, SearchOutcome::NoModelUpTo(4));
    println!("acceptance 3b (search confirms no model up to 4): pass");
}

#[test]
fn criterion_04_sat_with_model() {
    let start = Instant::now();
    let theory = parse_theory(TOTAL_NOLOOP).unwrap();
    let verdict = decide(&theory.query, &theory.views, &theory.vocab, &Budget::default()).unwrap();
    let model = match verdict {
        Verdict::Sat { model } => model,
        other => panic!("expected SAT, got {other:?}"),
    };
    assert_eq!(model.universe().len(), 2, "minimal model has exactly two elements");
    assert!(model_check(&theory.query, &theory.views, &model).unwrap());

    // Exhaustively confirm that no one-element structure is a model.
    for s in all_structures(&theory.vocab, 1).unwrap() {
        assert!(!model_check(&theory.query, &theory.views, &s).unwrap());
    }
    finish("4 (SAT with verified model)", Duration::from_secs(1), start);
}

// --- random generators shared by the oracle criteria ------------------------

/// A random unary view over E/2 with at most two atoms, connected to the
/// head (so its canonical counterexamples have at most three elements).
fn random_view(name: &str, rng: &mut ChaCha8Rng) -> ConjunctiveView {
    let pool = [Var::new("x"), Var::new("y"), Var::new("z")];
    let head = pool[0].clone();
    let mut used = vec![head.clone()];
    let n_atoms = rng.gen_range(1..=2);
    let mut body = Vec::new();
    for _ in 0..n_atoms {
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
    ConjunctiveView { name: name.into(), head, body, extras: vec![] }
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
    let mut free = Vec::new();
    let mut next = 0usize;
    gen(rng, names, &mut free, 3, &mut next)
}

fn random_structure(rng: &mut ChaCha8Rng, vocab: &Vocabulary, max_size: usize) -> Structure {
    let size = rng.gen_range(1..=max_size);
    let universe: BTreeSet<Const> =
        (0..size).map(|i| Const::new(i.to_string())).collect();
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

#[test]
fn criterion_05_normalization_oracle() {
    let start = Instant::now();
    let vocab = e2();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0usize;
    while checked < 1000 {
        let n_views = rng.gen_range(1..=3);
        let views: Vec<ConjunctiveView> = (0..n_views)
            .map(|i| random_view(&format!("W{}", i + 1), &mut rng))
            .collect();
        let names: Vec<String> = views.iter().map(|v| v.name.clone()).collect();
        let views = ViewSet::theory(views);
        let sentence = random_sentence(&mut rng, &names);
        let structure = random_structure(&mut rng, &vocab, 3);

        let form = normalize_rank1(&sentence, &views).unwrap();
        let realized = realized_signatures(&structure, &views).unwrap();
        let direct = model_check(&sentence, &views, &structure).unwrap();
        assert_eq!(
            form.evaluate(&realized),
            direct,
            "rank-1 mismatch for {sentence:?} on {structure:?}"
        );
        checked += 1;
    }
    finish("5 (rank-1 normalization oracle, 1000 pairs)", Duration::from_secs(60), start);
}

#[test]
fn criterion_06_containment_oracle() {
    let start = Instant::now();
    let vocab = e2();
    let structures: Vec<Structure> = (1..=3)
        .flat_map(|n| all_structures(&vocab, n).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..500 {
        let mut va = random_view("A", &mut rng);
        let mut vb = random_view("B", &mut rng);
        va.name = "A".into();
        vb.name = "B".into();
        let fast = cq_contains(&va, &vb, &vocab).unwrap();
        let brute = structures.iter().all(|s| {
            eval_view(&va, s).unwrap().is_subset(&eval_view(&vb, s).unwrap())
        });
        assert_eq!(fast, brute, "containment mismatch for {va:?} vs {vb:?}");
    }
    finish("6 (CQ-containment oracle, 500 pairs)", Duration::from_secs(120), start);
}

#[test]
fn criterion_07_pipeline_end_to_end() {
    let instances: Vec<(&str, String, &str)> = vec![
        (
            "cycle",
            TOTAL_NOLOOP.to_string(),
            "E(0,1). E(1,2). E(2,3). E(3,4). E(4,0).",
        ),
        (
            "finite path",
            "rel E/2.\n\
             view V(x) <- E(x,y).\n\
             view W(x) <- E(y,x).\n\
             query exists x (V(x) & !W(x)).\n"
                .to_string(),
            "E(0,1). E(1,2). E(2,3).",
        ),
        (
            "self-loop",
            "rel E/2.\n\
             view V1(x) <- E(x,y).\n\
             view V2(x) <- E(x,x).\n\
             query exists x V2(x).\n"
                .to_string(),
            "E(0,0).",
        ),
    ];
    for (label, theory_text, facts) in instances {
        let start = Instant::now();
        let theory = parse_theory(&theory_text).unwrap();
        let model = parse_facts(facts, &theory.vocab).unwrap();
        assert!(model_check(&theory.query, &theory.views, &model).unwrap());

        let outcome =
            run_pipeline(&model, &theory.query, &theory.views, &PipelineParams::default())
                .unwrap();
        for stage in &outcome.stages {
            assert!(
                stage.js_violations.is_empty(),
                "{label}: Invariant JS violated at {}: {:?}",
                stage.stage,
                stage.js_violations
            );
            assert!(
                stage.anchored_classes_preserved,
                "{label}: class preservation failed at {}",
                stage.stage
            );
        }
        assert!(outcome.final_preservation.equal, "{label}: final class set changed");
        assert!(outcome.final_model_checks, "{label}: final structure fails the sentence");
        assert!(
            BigUint::from(outcome.final_model.universe().len()) <= outcome.size_bound,
            "{label}: final size exceeds the bound"
        );
        assert!(outcome.size_within_bound);
        assert!(outcome.all_checks_passed, "{label}: pipeline checks failed");
        finish(&format!("7 (pipeline: {label})"), Duration::from_secs(60), start);
    }
}

#[test]
fn criterion_08_regular_graph_generator() {
    let start = Instant::now();
    for (delta, g) in [(2usize, 5usize), (3, 4), (3, 5)] {
        let cap = minimal_admissible_delta_cap(delta, g);
        let graph = generate_regular_girth(delta, g, cap, 8, 100).unwrap();
        assert!(graph.retries_used <= 100);

        // Independent degree verification.
        let mut degree = vec![0usize; graph.n];
        for &(a, b) in &graph.edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        assert!(
            degree.iter().all(|&d| d == delta),
            "({delta},{g}): not {delta}-regular: {degree:?}"
        );

        // Independent girth verification.
        let (got, _) = girth(graph.n, &graph.edges);
        assert!(
            got.is_none() || got.unwrap() >= g,
            "({delta},{g}): girth {got:?} below target"
        );
    }
    finish("8 (regular graphs (2,5),(3,4),(3,5))", Duration::from_secs(10), start);
}

#[test]
fn criterion_09_two_counter_round_trip() {
    let start = Instant::now();
    let corpus = [
        "state 1 halts.\nd(0,=,=) = (1,push,push).",
        "state 2 halts.\nd(0,=,=) = (1,push,push).\nd(1,>,>) = (2,pop,pop).",
        "state 1 halts.\nd(0,=,=) = (0,push,push).\nd(0,>,>) = (1,pop,push).",
        "state 2 halts.\nd(0,=,=) = (0,push,push).\nd(0,>,>) = (1,push,pop).\nd(1,>,=) = (2,pop,push).",
        "state 3 halts.\nd(0,=,=) = (1,push,push).\nd(1,>,>) = (2,push,push).\nd(2,>,>) = (3,pop,pop).",
    ];
    for text in corpus {
        let machine = TwoCounterMachine::parse(text).unwrap();
        let compiled = compile_2cm(&machine).unwrap();
        let trace = encode_trace(&machine, 10).unwrap();
        assert!(
            model_check(&compiled.theory.query, &compiled.theory.views, &trace).unwrap(),
            "trace of {text:?} should satisfy the compiled sentence"
        );

        // Corrupt the trace by dropping one succ tuple; some named conjunct
        // must flip.
        let mut relations = trace.relations().clone();
        let succ = relations.get_mut("succ").unwrap();
        let victim = succ.iter().next().unwrap().clone();
        succ.remove(&victim);
        let corrupted =
            Structure::new(trace.vocab().clone(), trace.universe().clone(), relations).unwrap();
        let flipped = failing_conjuncts(&compiled, &corrupted).unwrap();
        assert!(!flipped.is_empty(), "corruption of {text:?} flipped no conjunct");
    }
    finish("9 (2CM round trip, 5 machines)", Duration::from_secs(30), start);
}

#[test]
fn criterion_10_inexpressibility_witnesses() {
    let start = Instant::now();
    let vocab = e2();
    let small = WitnessBounds { a_sizes: vec![1, 2, 3, 4], b_sizes: vec![1, 2, 3, 4] };
    let trans_bounds = WitnessBounds { a_sizes: vec![3], b_sizes: vec![6] };

    let sym = sym_query();
    let (a, b) = search_inexpressibility_witness(&sym, &vocab, &small)
        .unwrap()
        .expect("SYM witness within sizes <= 4");
    assert!(hom_agreement_check(&a, &b).unwrap());
    assert_ne!(fo_check(&sym, &a).unwrap(), fo_check(&sym, &b).unwrap());

    let trans = trans_query();
    let (a, b) = search_inexpressibility_witness(&trans, &vocab, &trans_bounds)
        .unwrap()
        .expect("TRANS witness with |A|=3, |B|=6");
    assert_eq!(a.universe().len(), 3);
    assert_eq!(b.universe().len(), 6);
    assert!(hom_agreement_check(&a, &b).unwrap());
    assert_ne!(fo_check(&trans, &a).unwrap(), fo_check(&trans, &b).unwrap());

    let edge = some_edge_query();
    for bounds in [&small, &trans_bounds] {
        assert!(
            search_inexpressibility_witness(&edge, &vocab, bounds).unwrap().is_none(),
            "the expressible edge query must have no witness"
        );
    }
    finish("10 (inexpressibility witnesses)", Duration::from_secs(120), start);
}

#[test]
fn criterion_11_theoretical_bound() {
    let start = Instant::now();
    assert_eq!(theoretical_bound(1, 1, 1), BigUint::from(4u32));
    for c in 1..=3usize {
        for p in 1..=3usize {
            for m in 1..=3usize {
                let here = theoretical_bound(p, m, c);
                assert!(here <= theoretical_bound(p + 1, m, c), "not monotone in p at ({p},{m},{c})");
                assert!(here <= theoretical_bound(p, m + 1, c), "not monotone in m at ({p},{m},{c})");
            }
        }
    }
    finish("11 (theoretical bound, exact and monotone)", Duration::from_secs(5), start);
}
