//! `ucv`: command-line entry point for the UCV decision-procedure toolkit.
//!
//! Exit codes: 0 = definitive answer (SAT/UNSAT/CONTAINED/IMPLIED/witness or
//! proven absence), 1 = usage or input error, 2 = UNKNOWN or budget exhausted.

use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ucv_core::apps::deps::{check_containment, imply_dependencies, Containment, DepOp, Dependency, Implication};
use ucv_core::apps::twocm::{compile_2cm, encode_trace, failing_conjuncts, TwoCounterMachine};
use ucv_core::apps::witness::{
    fo_check, hom_agreement_check, search_inexpressibility_witness, some_edge_query, sym_query,
    trans_query, Fo, WitnessBounds,
};
use ucv_core::eval::{class_table, eval_view, model_check};
use ucv_core::frontend::{
    parse_facts, parse_theory, render_facts, render_theory, render_view, Theory,
};
use ucv_core::logic::{UcvFormula, Var, Vocabulary};
use ucv_core::pipeline::{run_pipeline, PipelineParams};
use ucv_core::sat::{decide, Budget, Verdict};
use ucv_core::viewenum::enumerate_views;
use ucv_core::Error as CoreError;

const EXIT_OK: i32 = 0;
const EXIT_INPUT: i32 = 1;
const EXIT_UNKNOWN: i32 = 2;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFmt {
    Text,
    Structured,
}

#[derive(Parser)]
#[command(name = "ucv", about = "Decision procedures for first-order unary-conjunctive-view logic", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Output format: human text or a stable-key structured document.
    #[arg(long, global = true, value_enum, default_value = "text")]
    out: OutFmt,
    /// RNG seed (default 0; env UCV_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model-search size budget (default 4; env UCV_MAX_SIZE).
    #[arg(long, global = true)]
    max_size: Option<usize>,
    /// Time budget in seconds (default 10; env UCV_TIME_SECS).
    #[arg(long, global = true)]
    time: Option<u64>,
    /// Worker count (execution is deterministic regardless).
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate a .ucv theory; report dialect and shape.
    Check { theory: PathBuf },
    /// Evaluate a theory against a .facts database: view images, class
    /// table, and the query's truth value.
    Eval { theory: PathBuf, facts: PathBuf },
    /// Enumerate the canonical view universe for a vocabulary and bound m.
    Views {
        /// Relation symbols as name/arity, e.g. --vocab E/2 (repeatable).
        #[arg(long, required = true)]
        vocab: Vec<String>,
        #[arg(long)]
        m: usize,
        /// Enumeration cap on candidate bodies.
        #[arg(long, default_value_t = 200_000)]
        cap: usize,
    },
    /// Decide satisfiability of the theory's query.
    Sat { theory: PathBuf },
    /// Run the model-shrinking pipeline on a satisfying database.
    Shrink {
        theory: PathBuf,
        facts: PathBuf,
        /// Height/girth multiplier (h = g = c·m).
        #[arg(long, default_value_t = 1)]
        c: usize,
        /// Override the number of copies Δ.
        #[arg(long)]
        delta: Option<usize>,
        /// Override the forest depth h.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Decide containment q1 ⊆ q2 between named views, under optional
    /// constraint sentences.
    Contain {
        theory: PathBuf,
        #[arg(long)]
        q1: String,
        #[arg(long)]
        q2: String,
        /// Constraint sentence over the theory's views (repeatable).
        #[arg(long)]
        constraint: Vec<String>,
    },
    /// Decide implication of a containment dependency from given ones.
    /// Dependencies are written `A <= B` (subset) or `A < B` (proper).
    Imply {
        theory: PathBuf,
        #[arg(long)]
        given: Vec<String>,
        #[arg(long)]
        target: String,
    },
    /// Compile a two-counter machine into a UCV≠ theory; optionally encode
    /// and verify its halting trace.
    #[command(name = "reduce-2cm")]
    Reduce2cm {
        machine: PathBuf,
        /// Also simulate up to this many steps and verify the encoded trace.
        #[arg(long)]
        trace: Option<usize>,
    },
    /// Search for an inexpressibility witness pair for a named query.
    Inexpress {
        /// Query: sym, trans, or edge.
        #[arg(long)]
        query: String,
        /// Candidate sizes for the first structure, e.g. 1,2,3,4.
        #[arg(long, default_value = "1,2,3,4")]
        a_sizes: String,
        /// Candidate sizes for the second structure.
        #[arg(long, default_value = "1,2,3,4")]
        b_sizes: String,
    },
}

fn env_num<T: std::str::FromStr>(name: &str) -> Option<T> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

fn budget(cli: &Cli) -> Budget {
    let defaults = Budget::default();
    Budget {
        max_size: cli.max_size.or_else(|| env_num("UCV_MAX_SIZE")).unwrap_or(defaults.max_size),
        time: Duration::from_secs(
            cli.time.or_else(|| env_num("UCV_TIME_SECS")).unwrap_or(defaults.time.as_secs()),
        ),
        candidates: env_num("UCV_CANDIDATES").unwrap_or(defaults.candidates),
    }
}

fn seed(cli: &Cli) -> u64 {
    cli.seed.or_else(|| env_num("UCV_SEED")).unwrap_or(0)
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn exit_for(err: &CoreError) -> i32 {
    match err {
        CoreError::Resource(_) => EXIT_UNKNOWN,
        _ => EXIT_INPUT,
    }
}

/// Parses a formula string in the context of a theory by substituting it
/// as the theory's query and reparsing.
fn parse_formula(theory: &Theory, text: &str) -> Result<UcvFormula, CoreError> {
    let mut src = String::new();
    for sym in theory.vocab.symbols() {
        src.push_str(&format!("rel {}/{}.\n", sym.name, sym.arity));
    }
    for view in &theory.views.views {
        src.push_str(&render_view(view));
        src.push('\n');
    }
    src.push_str(&format!("query {text}.\n"));
    Ok(parse_theory(&src)?.query)
}

fn parse_dependency(theory: &Theory, text: &str) -> Result<Dependency, String> {
    let (lhs, rhs, op) = if let Some((l, r)) = text.split_once("<=") {
        (l, r, DepOp::Subset)
    } else if let Some((l, r)) = text.split_once('<') {
        (l, r, DepOp::ProperSubset)
    } else {
        return Err(format!("dependency `{text}` must use `<=` or `<`"));
    };
    let (lhs, rhs) = (lhs.trim(), rhs.trim());
    for name in [lhs, rhs] {
        if theory.views.get(name).is_none() {
            return Err(format!("unknown view `{name}` in dependency `{text}`"));
        }
    }
    Ok(Dependency::between_views(lhs, rhs, op))
}

fn parse_sizes(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| format!("bad size list `{text}`")))
        .collect()
}

fn emit(out: OutFmt, text: String, doc: serde_json::Value) {
    use std::io::Write;
    let body = match out {
        OutFmt::Text => text,
        OutFmt::Structured => {
            serde_json::to_string_pretty(&doc).expect("serializable document")
        }
    };
    // Ignore write failures (e.g. a closed pipe downstream).
    let _ = writeln!(std::io::stdout(), "{body}");
}

fn run(cli: &Cli) -> Result<i32, (i32, String)> {
    let fail = |code: i32, msg: String| (code, msg);
    let core = |e: CoreError| (exit_for(&e), e.to_string());
    let io = |e: String| (EXIT_INPUT, e);
    match &cli.cmd {
        Cmd::Check { theory } => {
            let t = parse_theory(&read(theory).map_err(io)?).map_err(core)?;
            let text = format!(
                "ok: dialect={}, relations={}, views={}, query qrank={}",
                t.dialect,
                t.vocab.symbols().len(),
                t.views.n(),
                t.query.qrank()
            );
            let doc = json!({
                "status": "ok",
                "dialect": t.dialect.to_string(),
                "relations": t.vocab.symbols().len(),
                "views": t.views.views.iter().map(render_view).collect::<Vec<_>>(),
                "qrank": t.query.qrank(),
            });
            emit(cli.out, text, doc);
            Ok(EXIT_OK)
        }
        Cmd::Eval { theory, facts } => {
            let t = parse_theory(&read(theory).map_err(io)?).map_err(core)?;
            let db = parse_facts(&read(facts).map_err(io)?, &t.vocab).map_err(core)?;
            let mut lines = Vec::new();
            let mut images = serde_json::Map::new();
            for view in &t.views.views {
                let image = eval_view(view, &db).map_err(core)?;
                let elems: Vec<String> = image.iter().map(|c| c.0.clone()).collect();
                lines.push(format!("{} = {{{}}}", view.name, elems.join(", ")));
                images.insert(view.name.clone(), json!(elems));
            }
            let table = class_table(&db, &t.views).map_err(core)?;
            let realized: Vec<String> = table.realized.iter().map(|s| s.to_string()).collect();
            lines.push(format!("classes: {}", realized.join(" ")));
            let holds = model_check(&t.query, &t.views, &db).map_err(core)?;
            lines.push(format!("query: {holds}"));
            let doc = json!({
                "images": images,
                "realized_classes": realized,
                "classes": table.classes.iter()
                    .map(|(c, s)| (c.0.clone(), s.to_string()))
                    .collect::<std::collections::BTreeMap<_, _>>(),
                "query": holds,
            });
            emit(cli.out, lines.join("\n"), doc);
            Ok(EXIT_OK)
        }
        Cmd::Views { vocab, m, cap } => {
            let mut rels = Vec::new();
            for spec in vocab {
                let (name, arity) = spec
                    .split_once('/')
                    .ok_or_else(|| fail(EXIT_INPUT, format!("--vocab wants name/arity, got `{spec}`")))?;
                let arity: usize = arity
                    .parse()
                    .map_err(|_| fail(EXIT_INPUT, format!("bad arity in `{spec}`")))?;
                rels.push((name.to_string(), arity));
            }
            let vocab = Vocabulary::new(rels).map_err(core)?;
            let views = enumerate_views(&vocab, *m, *cap).map_err(core)?;
            let rendered: Vec<String> = views.views.iter().map(render_view).collect();
            let text = format!("{}\ncount: {}", rendered.join("\n"), views.n());
            emit(cli.out, text, json!({ "views": rendered, "count": views.n() }));
            Ok(EXIT_OK)
        }
        Cmd::Sat { theory } => {
            let t = parse_theory(&read(theory).map_err(io)?).map_err(core)?;
            let verdict = decide(&t.query, &t.views, &t.vocab, &budget(cli)).map_err(core)?;
            let (text, code) = match &verdict {
                Verdict::Sat { model } => (
                    format!(
                        "SAT: model of size {}\n{}",
                        model.universe().len(),
                        render_facts(model).trim_end()
                    ),
                    EXIT_OK,
                ),
                Verdict::Unsat { certificate } => {
                    (format!("UNSAT: certificate {certificate:?}"), EXIT_OK)
                }
                Verdict::Unknown { reason } => (format!("UNKNOWN: {reason}"), EXIT_UNKNOWN),
            };
            emit(cli.out, text, json!({ "verdict": verdict }));
            Ok(code)
        }
        Cmd::Shrink { theory, facts, c, delta, depth } => {
            let t = parse_theory(&read(theory).map_err(io)?).map_err(core)?;
            let db = parse_facts(&read(facts).map_err(io)?, &t.vocab).map_err(core)?;
            let params = PipelineParams {
                c: *c,
                depth_override: *depth,
                delta_cap_override: *delta,
                seed: seed(cli),
                ..Default::default()
            };
            let outcome = run_pipeline(&db, &t.query, &t.views, &params).map_err(core)?;
            let mut lines = Vec::new();
            for stage in &outcome.stages {
                lines.push(format!(
                    "{}: constants={}, nodes={}, invariant_js={}, classes_preserved={}",
                    stage.stage,
                    stage.constants,
                    stage.nodes,
                    if stage.js_violations.is_empty() { "ok" } else { "VIOLATED" },
                    stage.anchored_classes_preserved,
                ));
                for v in &stage.js_violations {
                    lines.push(format!("  ! {v}"));
                }
            }
            lines.push(format!(
                "final: size={} (bound {}), model_checks={}, class_preservation={}, all_checks={}",
                outcome.final_model.universe().len(),
                outcome.size_bound,
                outcome.final_model_checks,
                outcome.final_preservation.equal,
                outcome.all_checks_passed,
            ));
            lines.push(render_facts(&outcome.final_model).trim_end().to_string());
            emit(cli.out, lines.join("\n"), json!({ "outcome": outcome }));
            Ok(EXIT_OK)
        }
        Cmd::Contain { theory, q1, q2, constraint } => {
            let t = parse_theory(&read(theory).map_err(io)?).map_err(core)?;
            for name in [q1, q2] {
                if t.views.get(name).is_none() {
                    return Err(fail(EXIT_INPUT, format!("unknown view `{name}`")));
                }
            }
            let x = Var::new("x");
            let f1 = UcvFormula::view(q1.clone(), x.clone());
            let f2 = UcvFormula::view(q2.clone(), x);
            let constraints: Vec<UcvFormula> = constraint
                .iter()
                .map(|c| parse_formula(&t, c))
                .collect::<Result<_, _>>()
                .map_err(core)?;
            let got = check_containment(&f1, &f2, &t.views, &t.vocab, &constraints, &budget(cli))
                .map_err(core)?;
            let (text, code) = match &got {
                Containment::Contained => (format!("CONTAINED: {q1} <= {q2}"), EXIT_OK),
                Containment::Counterexample { model, element } => (
                    format!(
                        "NOT CONTAINED: element {element} separates them in\n{}",
                        render_facts(model).trim_end()
                    ),
                    EXIT_OK,
                ),
                Containment::Unknown { reason } => (format!("UNKNOWN: {reason}"), EXIT_UNKNOWN),
            };
            emit(cli.out, text, json!({ "result": got }));
            Ok(code)
        }
        Cmd::Imply { theory, given, target } => {
            let t = parse_theory(&read(theory).map_err(io)?).map_err(core)?;
            let given: Vec<Dependency> = given
                .iter()
                .map(|g| parse_dependency(&t, g))
                .collect::<Result<_, _>>()
                .map_err(|e| fail(EXIT_INPUT, e))?;
            let target = parse_dependency(&t, target).map_err(|e| fail(EXIT_INPUT, e))?;
            let got = imply_dependencies(&given, &target, &t.views, &t.vocab, &budget(cli))
                .map_err(core)?;
            let (text, code) = match &got {
                Implication::Implied => ("IMPLIED".to_string(), EXIT_OK),
                Implication::Counterexample { model } => (
                    format!("NOT IMPLIED: counterexample\n{}", render_facts(model).trim_end()),
                    EXIT_OK,
                ),
                Implication::Unknown { reason } => (format!("UNKNOWN: {reason}"), EXIT_UNKNOWN),
            };
            emit(cli.out, text, json!({ "result": got }));
            Ok(code)
        }
        Cmd::Reduce2cm { machine, trace } => {
            let m = TwoCounterMachine::parse(&read(machine).map_err(io)?).map_err(core)?;
            let compiled = compile_2cm(&m).map_err(core)?;
            let mut lines = vec![render_theory(&compiled.theory).trim_end().to_string()];
            let mut doc = json!({
                "theory": render_theory(&compiled.theory),
                "conjuncts": compiled.conjuncts.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
            });
            if let Some(steps) = trace {
                let db = encode_trace(&m, *steps).map_err(core)?;
                let failing = failing_conjuncts(&compiled, &db).map_err(core)?;
                lines.push(format!(
                    "# trace: {} constants, failing conjuncts: {}",
                    db.universe().len(),
                    if failing.is_empty() { "none".to_string() } else { failing.join(", ") }
                ));
                lines.push(render_facts(&db).trim_end().to_string());
                doc["trace"] = json!({
                    "facts": render_facts(&db),
                    "failing_conjuncts": failing,
                });
            }
            emit(cli.out, lines.join("\n"), doc);
            Ok(EXIT_OK)
        }
        Cmd::Inexpress { query, a_sizes, b_sizes } => {
            let q: Fo = match query.as_str() {
                "sym" => sym_query(),
                "trans" => trans_query(),
                "edge" => some_edge_query(),
                other => {
                    return Err(fail(
                        EXIT_INPUT,
                        format!("unknown query `{other}` (expected sym, trans, or edge)"),
                    ))
                }
            };
            let bounds = WitnessBounds {
                a_sizes: parse_sizes(a_sizes).map_err(|e| fail(EXIT_INPUT, e))?,
                b_sizes: parse_sizes(b_sizes).map_err(|e| fail(EXIT_INPUT, e))?,
            };
            let vocab =
                Vocabulary::new(vec![("E".to_string(), 2)]).expect("fixed vocabulary is valid");
            match search_inexpressibility_witness(&q, &vocab, &bounds).map_err(core)? {
                Some((a, b)) => {
                    let agree = hom_agreement_check(&a, &b).map_err(core)?;
                    let (va, vb) =
                        (fo_check(&q, &a).map_err(core)?, fo_check(&q, &b).map_err(core)?);
                    let universe_line = |s: &ucv_core::logic::Structure| {
                        let names: Vec<String> =
                            s.universe().iter().map(|c| c.0.clone()).collect();
                        names.join(" ")
                    };
                    let text = format!(
                        "WITNESS\nA (query={va}, universe {}):\n{}\nB (query={vb}, universe {}):\n{}\nhom_agreement: {agree}",
                        universe_line(&a),
                        render_facts(&a).trim_end(),
                        universe_line(&b),
                        render_facts(&b).trim_end(),
                    );
                    let doc = json!({
                        "witness": {
                            "a": render_facts(&a), "a_query": va,
                            "b": render_facts(&b), "b_query": vb,
                            "hom_agreement": agree,
                        }
                    });
                    emit(cli.out, text, doc);
                    Ok(EXIT_OK)
                }
                None => {
                    emit(cli.out, "NO WITNESS within the given bounds".to_string(), json!({ "witness": null }));
                    Ok(EXIT_OK)
                }
            }
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if cli.workers == 0 {
        eprintln!("error: --workers must be at least 1");
        std::process::exit(EXIT_INPUT);
    }
    match run(&cli) {
        Ok(code) => std::process::exit(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(code);
        }
    }
}
