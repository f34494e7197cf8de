//! Two-counter machines, their compilation into a UCV≠ theory whose
//! satisfiability encodes halting, and trace encoding for round-trip checks.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::model_check;
use crate::frontend::Theory;
use crate::logic::{
    Atom, ConjunctiveView, Const, Extra, Structure, Tuple, UcvFormula, Var, ViewSet, Vocabulary,
};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize)]
pub enum Guard {
    /// Counter equals zero (`=`).
    Eq,
    /// Counter is greater than zero (`>`).
    Gt,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize)]
pub enum CounterOp {
    /// Add one.
    Push,
    /// Subtract one.
    Pop,
}

/// A deterministic finite-state machine with two non-negative counters.
/// States are 0 (initial) through `halt_state` (halting/accepting).
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct TwoCounterMachine {
    pub halt_state: usize,
    pub transitions: BTreeMap<(usize, Guard, Guard), (usize, CounterOp, CounterOp)>,
}

impl TwoCounterMachine {
    pub fn new(
        halt_state: usize,
        transitions: Vec<((usize, Guard, Guard), (usize, CounterOp, CounterOp))>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (key, value) in transitions {
            if key.0 > halt_state || value.0 > halt_state {
                return Err(Error::Input(format!(
                    "transition mentions a state above the halting state {halt_state}"
                )));
            }
            if key.0 == halt_state {
                return Err(Error::Input("no transitions may leave the halting state".into()));
            }
            if map.insert(key, value).is_some() {
                return Err(Error::Input(format!(
                    "duplicate transition for state {} with guards {:?},{:?}",
                    key.0, key.1, key.2
                )));
            }
        }
        Ok(TwoCounterMachine { halt_state, transitions: map })
    }

    /// Parses the machine text format:
    /// ```text
    /// state 2 halts.
    /// d(0,=,=) = (1,push,push).
    /// d(1,>,>) = (2,pop,pop).
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        fn bad(line_no: usize, msg: &str) -> Error {
            Error::Parse { line: line_no, col: 1, msg: msg.to_string() }
        }
        let mut halt_state: Option<usize> = None;
        let mut transitions = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let line = line
                .strip_suffix('.')
                .ok_or_else(|| bad(line_no, "statement must end with '.'"))?
                .trim();
            if let Some(rest) = line.strip_prefix("state") {
                let rest = rest
                    .strip_suffix("halts")
                    .ok_or_else(|| bad(line_no, "expected `state N halts.`"))?;
                let n: usize = rest
                    .trim()
                    .parse()
                    .map_err(|_| bad(line_no, "halting state must be a number"))?;
                if halt_state.replace(n).is_some() {
                    return Err(bad(line_no, "halting state declared twice"));
                }
            } else if let Some(rest) = line.strip_prefix('d') {
                let close = rest
                    .find(')')
                    .ok_or_else(|| bad(line_no, "expected `d(j,g1,g2) = (k,o1,o2).`"))?;
                let lhs = rest[..=close].trim();
                let rhs = rest[close + 1..]
                    .trim()
                    .strip_prefix('=')
                    .ok_or_else(|| bad(line_no, "expected `=` between guard and action"))?
                    .trim();
                let parse_triple = |s: &str| -> Option<[String; 3]> {
                    let inner = s.strip_prefix('(')?.strip_suffix(')')?;
                    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
                    if parts.len() != 3 {
                        return None;
                    }
                    Some([parts[0].into(), parts[1].into(), parts[2].into()])
                };
                let key = parse_triple(lhs).ok_or_else(|| bad(line_no, "malformed guard triple"))?;
                let val = parse_triple(rhs).ok_or_else(|| bad(line_no, "malformed action triple"))?;
                let guard = |s: &str| match s {
                    "=" => Ok(Guard::Eq),
                    ">" => Ok(Guard::Gt),
                    _ => Err(bad(line_no, "guard must be `=` or `>`")),
                };
                let op = |s: &str| match s {
                    "push" => Ok(CounterOp::Push),
                    "pop" => Ok(CounterOp::Pop),
                    _ => Err(bad(line_no, "counter action must be `push` or `pop`")),
                };
                let j: usize =
                    key[0].parse().map_err(|_| bad(line_no, "source state must be a number"))?;
                let k: usize =
                    val[0].parse().map_err(|_| bad(line_no, "target state must be a number"))?;
                transitions.push((
                    (j, guard(&key[1])?, guard(&key[2])?),
                    (k, op(&val[1])?, op(&val[2])?),
                ));
            } else {
                return Err(bad(line_no, "expected `state ... halts.` or `d(...) = (...).`"));
            }
        }
        let halt_state =
            halt_state.ok_or_else(|| Error::Input("missing `state N halts.` declaration".into()))?;
        TwoCounterMachine::new(halt_state, transitions)
    }

    pub fn render(&self) -> String {
        let mut out = format!("state {} halts.\n", self.halt_state);
        for (&(j, g1, g2), &(k, o1, o2)) in &self.transitions {
            let g = |g: Guard| if g == Guard::Eq { "=" } else { ">" };
            let o = |o: CounterOp| if o == CounterOp::Push { "push" } else { "pop" };
            out.push_str(&format!("d({j},{},{}) = ({k},{},{}).\n", g(g1), g(g2), o(o1), o(o2)));
        }
        out
    }

    /// Runs the machine from `(state 0, 0, 0)`. Returns the configurations
    /// `(t, state, c1, c2)` ending in the halting state.
    pub fn simulate(&self, max_steps: usize) -> Result<Vec<(usize, usize, usize, usize)>> {
        let (mut s, mut c1, mut c2) = (0usize, 0usize, 0usize);
        let mut trace = vec![(0, s, c1, c2)];
        for t in 0..max_steps {
            if s == self.halt_state {
                return Ok(trace);
            }
            let key = (
                s,
                if c1 == 0 { Guard::Eq } else { Guard::Gt },
                if c2 == 0 { Guard::Eq } else { Guard::Gt },
            );
            let &(k, o1, o2) = self.transitions.get(&key).ok_or_else(|| {
                Error::Input(format!(
                    "machine is stuck at time {t}: no transition from state {s} with c1={c1}, c2={c2}"
                ))
            })?;
            let apply = |c: usize, op: CounterOp| match op {
                CounterOp::Push => Ok(c + 1),
                CounterOp::Pop => c.checked_sub(1).ok_or_else(|| {
                    Error::Input(format!("pop from an empty counter at time {t} in state {s}"))
                }),
            };
            c1 = apply(c1, o1)?;
            c2 = apply(c2, o2)?;
            s = k;
            trace.push((t + 1, s, c1, c2));
        }
        if s == self.halt_state {
            return Ok(trace);
        }
        Err(Error::Resource(format!(
            "machine did not halt within {max_steps} steps"
        )))
    }
}

/// The compiled theory together with its individually named conjuncts, so
/// that a failing model check can report which condition broke.
#[derive(Clone, Debug, Serialize)]
pub struct CompiledMachine {
    pub theory: Theory,
    pub conjuncts: Vec<(String, UcvFormula)>,
}

fn v(name: &str) -> Var {
    Var::new(name)
}

fn atom(rel: &str, args: &[&str]) -> Atom {
    Atom::new(rel, args.iter().map(|a| Var::new(*a)).collect())
}

fn view(name: &str, head: &str, body: Vec<Atom>, extras: Vec<Extra>) -> ConjunctiveView {
    ConjunctiveView { name: name.into(), head: v(head), body, extras }
}

/// The universe relation used to pad nullary views into unary ones.
pub const UNIVERSE_REL: &str = "U";

/// Compiles a machine into a UCV≠ theory whose sentence ψ is satisfiable
/// iff the database relations describe a halting computation: relations
/// `config/4, succ/2, zero/1, last/1, S0..Sh/1, U/1`, domain views, the
/// `bad` family (as unary views padded with the universe relation), and
/// one `goodstate`/`goodtrans` block per transition.
pub fn compile_2cm(machine: &TwoCounterMachine) -> Result<CompiledMachine> {
    let h = machine.halt_state;
    let mut rels: Vec<(String, usize)> = vec![
        ("config".into(), 4),
        ("succ".into(), 2),
        ("zero".into(), 1),
        ("last".into(), 1),
        (UNIVERSE_REL.into(), 1),
    ];
    for i in 0..=h {
        rels.push((format!("S{i}"), 1));
    }
    let vocab = Vocabulary::new(rels)?;

    let mut views: Vec<ConjunctiveView> = Vec::new();
    let mut conjuncts: Vec<(String, UcvFormula)> = Vec::new();
    let x = v("x");
    let uv = |name: &str| UcvFormula::view(name, v("x"));

    // Domain views.
    views.push(view("dT", "t", vec![atom("config", &["t", "s", "c1", "c2"])], vec![]));
    views.push(view("dP", "x", vec![atom("succ", &["z", "x"])], vec![]));
    views.push(view("dCol1", "x", vec![atom("succ", &["x", "y"])], vec![]));
    views.push(view("dCol2", "x", vec![atom("succ", &["y", "x"])], vec![]));
    // Views simulating the unary base relations.
    views.push(view("vZero", "x", vec![atom("zero", &["x"])], vec![]));
    views.push(view("vLast", "x", vec![atom("last", &["x"])], vec![]));
    for i in 0..=h {
        views.push(view(&format!("vS{i}"), "x", vec![atom(&format!("S{i}"), &["x"])], vec![]));
    }
    // dsucc = dCol1 ∨ dCol2, expanded at the formula level.
    let dsucc = UcvFormula::or(uv("dCol1"), uv("dCol2"));

    // The universe relation must be total, otherwise the padded `bad`
    // views below would be vacuous on elements outside U.
    views.push(view("vU", "x", vec![atom(UNIVERSE_REL, &["x"])], vec![]));
    conjuncts.push(("universe_total".into(), UcvFormula::forall(x.clone(), uv("vU"))));

    // The `bad` family: nullary rules padded to unary views over U. Each
    // yields the named conjunct ∀x ¬bad_*(x).
    let bad = |name: &str, body: Vec<Atom>, extras: Vec<Extra>, views: &mut Vec<ConjunctiveView>| {
        let view_name = format!("bad_{name}");
        let mut full = vec![atom(UNIVERSE_REL, &["x"])];
        full.extend(body);
        views.push(view(&view_name, "x", full, extras));
        (
            format!("notbad_{name}"),
            UcvFormula::forall(v("x"), UcvFormula::not(UcvFormula::view(view_name, v("x")))),
        )
    };
    let neq = |a: &str, b: &str| Extra::Neq(v(a), v(b));
    let mut bads: Vec<(String, UcvFormula)> = Vec::new();
    bads.push(bad(
        "two_succ",
        vec![atom("succ", &["a", "b"]), atom("succ", &["a", "c"])],
        vec![neq("b", "c")],
        &mut views,
    ));
    bads.push(bad(
        "two_pred",
        vec![atom("succ", &["b", "a"]), atom("succ", &["c", "a"])],
        vec![neq("b", "c")],
        &mut views,
    ));
    bads.push(bad("self_loop", vec![atom("succ", &["a", "a"])], vec![], &mut views));
    bads.push(bad(
        "last_succ",
        vec![atom("last", &["a"]), atom("succ", &["a", "b"])],
        vec![],
        &mut views,
    ));
    bads.push(bad(
        "zero_pred",
        vec![atom("zero", &["a"]), atom("succ", &["b", "a"])],
        vec![],
        &mut views,
    ));
    bads.push(bad(
        "zero_two",
        vec![atom("zero", &["a"]), atom("zero", &["b"])],
        vec![neq("a", "b")],
        &mut views,
    ));
    bads.push(bad(
        "last_two",
        vec![atom("last", &["a"]), atom("last", &["b"])],
        vec![neq("a", "b")],
        &mut views,
    ));
    bads.push(bad(
        "zero_last",
        vec![atom("zero", &["a"]), atom("last", &["a"])],
        vec![],
        &mut views,
    ));
    for i in 0..=h {
        let si = format!("S{i}");
        bads.push(bad(
            &format!("s{i}_two"),
            vec![atom(&si, &["a"]), atom(&si, &["b"])],
            vec![neq("a", "b")],
            &mut views,
        ));
        bads.push(bad(
            &format!("zero_s{i}"),
            vec![atom("zero", &["a"]), atom(&si, &["a"])],
            vec![],
            &mut views,
        ));
        bads.push(bad(
            &format!("last_s{i}"),
            vec![atom("last", &["a"]), atom(&si, &["a"])],
            vec![],
            &mut views,
        ));
        for j in (i + 1)..=h {
            bads.push(bad(
                &format!("s{i}_s{j}"),
                vec![atom(&si, &["a"]), atom(&format!("S{j}"), &["a"])],
                vec![],
                &mut views,
            ));
        }
    }
    // Timestamp is a key for config: one rule per non-key column.
    bads.push(bad(
        "key_state",
        vec![atom("config", &["t", "a", "p", "q"]), atom("config", &["t", "b", "r", "w"])],
        vec![neq("a", "b")],
        &mut views,
    ));
    bads.push(bad(
        "key_c1",
        vec![atom("config", &["t", "p", "a", "q"]), atom("config", &["t", "r", "b", "w"])],
        vec![neq("a", "b")],
        &mut views,
    ));
    bads.push(bad(
        "key_c2",
        vec![atom("config", &["t", "p", "q", "a"]), atom("config", &["t", "r", "w", "b"])],
        vec![neq("a", "b")],
        &mut views,
    ));
    conjuncts.extend(bads);

    conjuncts.push((
        "hasPred".into(),
        UcvFormula::forall(
            x.clone(),
            UcvFormula::implies(dsucc.clone(), UcvFormula::or(uv("vZero"), uv("dP"))),
        ),
    ));
    conjuncts.push((
        "sameDom".into(),
        UcvFormula::and(
            UcvFormula::forall(x.clone(), UcvFormula::implies(dsucc.clone(), uv("dT"))),
            UcvFormula::forall(x.clone(), UcvFormula::implies(uv("dT"), dsucc.clone())),
        ),
    ));
    conjuncts.push((
        "goodzero".into(),
        UcvFormula::forall(x.clone(), UcvFormula::implies(uv("vZero"), dsucc.clone())),
    ));
    conjuncts.push(("nempty".into(), UcvFormula::exists(x.clone(), dsucc.clone())));
    conjuncts.push((
        "hassuccnext".into(),
        UcvFormula::forall(
            x.clone(),
            UcvFormula::implies(uv("dCol2"), UcvFormula::or(uv("vLast"), uv("dCol1"))),
        ),
    ));
    conjuncts.push((
        "eligiblezero".into(),
        UcvFormula::forall(
            x.clone(),
            UcvFormula::implies(uv("dCol1"), UcvFormula::or(uv("dCol2"), uv("vZero"))),
        ),
    ));
    conjuncts.push((
        "eligiblelast".into(),
        UcvFormula::forall(
            x.clone(),
            UcvFormula::implies(uv("dCol2"), UcvFormula::or(uv("dCol1"), uv("vLast"))),
        ),
    ));

    // Configuration at time zero: the state seen at the zero timestamp is
    // S0, and every counter/timestamp seen together with a zero is zero.
    views.push(view(
        "Vzs",
        "s",
        vec![atom("zero", &["t"]), atom("config", &["t", "s", "a", "b"])],
        vec![],
    ));
    views.push(view(
        "Vzc1",
        "c",
        vec![atom("zero", &["t"]), atom("config", &["t", "a", "c", "b"])],
        vec![],
    ));
    views.push(view(
        "Vzc2",
        "c",
        vec![atom("zero", &["t"]), atom("config", &["t", "a", "b", "c"])],
        vec![],
    ));
    views.push(view(
        "Vys",
        "t",
        vec![atom("zero", &["s"]), atom("config", &["t", "s", "a", "b"])],
        vec![],
    ));
    views.push(view(
        "Vyc1",
        "c",
        vec![atom("zero", &["s"]), atom("config", &["t", "s", "c", "a"])],
        vec![],
    ));
    views.push(view(
        "Vyc2",
        "c",
        vec![atom("zero", &["s"]), atom("config", &["t", "s", "a", "c"])],
        vec![],
    ));
    let zero_like = [uv("Vzc1"), uv("Vzc2"), uv("Vys"), uv("Vyc1"), uv("Vyc2")]
        .into_iter()
        .reduce(UcvFormula::or)
        .expect("non-empty");
    conjuncts.push((
        "goodconfigzero".into(),
        UcvFormula::forall(
            x.clone(),
            UcvFormula::and(
                UcvFormula::implies(uv("Vzs"), uv("vS0")),
                UcvFormula::implies(zero_like, uv("vZero")),
            ),
        ),
    ));

    // Halting and successor configurations.
    views.push(view(
        "hlt",
        "t",
        vec![atom("config", &["t", "s", "c1", "c2"]), atom(&format!("S{h}"), &["s"])],
        vec![],
    ));
    views.push(view(
        "Vnext",
        "t",
        vec![atom("succ", &["t", "t2"]), atom("config", &["t2", "s", "c1", "c2"])],
        vec![],
    ));
    conjuncts.push(("halt".into(), UcvFormula::exists(x.clone(), uv("hlt"))));
    conjuncts.push((
        "hasconfignext".into(),
        UcvFormula::forall(
            x.clone(),
            UcvFormula::implies(
                UcvFormula::and(uv("dT"), UcvFormula::not(uv("hlt"))),
                uv("Vnext"),
            ),
        ),
    ));

    // Per-transition blocks. The firing-times view (Q2 in the proof) is
    // inlined into the state- and counter-checking views, since view bodies
    // range over base relations only.
    for (d, (&(j, g1, g2), &(k, o1, o2))) in machine.transitions.iter().enumerate() {
        let guard_atoms = |body: &mut Vec<Atom>| {
            match g1 {
                Guard::Eq => body.push(atom("zero", &["c1"])),
                Guard::Gt => body.push(atom("succ", &["p1", "c1"])),
            }
            match g2 {
                Guard::Eq => body.push(atom("zero", &["c2"])),
                Guard::Gt => body.push(atom("succ", &["p2", "c2"])),
            }
        };
        let mut fire_body = vec![
            atom("config", &["t", "s", "c1", "c2"]),
            atom("succ", &["t", "t2"]),
            atom(&format!("S{j}"), &["s"]),
        ];
        guard_atoms(&mut fire_body);
        views.push(view(&format!("Vd{d}"), "t2", fire_body.clone(), vec![]));

        let mut state_body = fire_body.clone();
        state_body.push(atom("config", &["t2", "s2", "d1", "d2"]));
        views.push(view(&format!("Vds{d}"), "s2", state_body, vec![]));
        conjuncts.push((
            format!("goodstate_d{d}"),
            UcvFormula::forall(
                x.clone(),
                UcvFormula::iff(
                    UcvFormula::view(format!("Vds{d}"), v("x")),
                    UcvFormula::view(format!("vS{k}"), v("x")),
                ),
            ),
        ));

        // Counter checks: the updated value is the successor (push) or
        // predecessor (pop) of the old one, and the next configuration must
        // carry it in the corresponding column.
        let mut c1_body = fire_body.clone();
        match o1 {
            CounterOp::Push => c1_body.push(atom("succ", &["c1", "u1"])),
            CounterOp::Pop => c1_body.push(atom("succ", &["u1", "c1"])),
        }
        c1_body.push(atom("config", &["t2", "s2", "u1", "d2"]));
        views.push(view(&format!("Q1a{d}"), "t2", c1_body, vec![]));
        conjuncts.push((
            format!("goodtrans_d{d}_c1"),
            UcvFormula::forall(
                x.clone(),
                UcvFormula::iff(
                    UcvFormula::view(format!("Q1a{d}"), v("x")),
                    UcvFormula::view(format!("Vd{d}"), v("x")),
                ),
            ),
        ));

        let mut c2_body = fire_body.clone();
        match o2 {
            CounterOp::Push => c2_body.push(atom("succ", &["c2", "u2"])),
            CounterOp::Pop => c2_body.push(atom("succ", &["u2", "c2"])),
        }
        c2_body.push(atom("config", &["t2", "s2", "d1", "u2"]));
        views.push(view(&format!("Q1b{d}"), "t2", c2_body, vec![]));
        conjuncts.push((
            format!("goodtrans_d{d}_c2"),
            UcvFormula::forall(
                x.clone(),
                UcvFormula::iff(
                    UcvFormula::view(format!("Q1b{d}"), v("x")),
                    UcvFormula::view(format!("Vd{d}"), v("x")),
                ),
            ),
        ));
    }

    for view in &views {
        view.validate(&vocab)?;
    }
    let psi = UcvFormula::conjoin_all(conjuncts.iter().map(|(_, f)| f.clone()).collect())
        .expect("at least one conjunct");
    let views = ViewSet::theory(views);
    let dialect = views.dialect();
    Ok(CompiledMachine {
        theory: Theory { vocab, views, query: psi, dialect },
        conjuncts,
    })
}

/// Encodes a halting run as a structure: a `succ` chain of timestamps from
/// `zero` to `last`, one `config` tuple per step, singleton state relations,
/// and the universe relation over every constant. Counter values live on
/// the same chain (a value at time t never exceeds t).
pub fn encode_trace(machine: &TwoCounterMachine, max_steps: usize) -> Result<Structure> {
    let trace = machine.simulate(max_steps)?;
    let t_max = trace.len() - 1;
    if t_max == 0 {
        return Err(Error::Precondition(
            "the run must take at least one step: zero and last must be distinct".into(),
        ));
    }
    let num = |n: usize| Const::new(n.to_string());
    let state = |s: usize| Const::new(format!("s{s}"));
    let mut facts: Vec<(String, Tuple)> = Vec::new();
    for t in 0..t_max {
        facts.push(("succ".into(), vec![num(t), num(t + 1)]));
    }
    facts.push(("zero".into(), vec![num(0)]));
    facts.push(("last".into(), vec![num(t_max)]));
    for i in 0..=machine.halt_state {
        facts.push((format!("S{i}"), vec![state(i)]));
    }
    for &(t, s, c1, c2) in &trace {
        facts.push(("config".into(), vec![num(t), state(s), num(c1), num(c2)]));
    }
    let mut universe: std::collections::BTreeSet<Const> = (0..=t_max).map(num).collect();
    universe.extend((0..=machine.halt_state).map(state));
    for c in &universe {
        facts.push((UNIVERSE_REL.into(), vec![c.clone()]));
    }
    let compiled = compile_2cm(machine)?;
    Structure::from_facts(compiled.theory.vocab.clone(), facts, Some(universe))
}

/// Names of the compiled conjuncts that the structure violates.
pub fn failing_conjuncts(compiled: &CompiledMachine, structure: &Structure) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (name, formula) in &compiled.conjuncts {
        if !model_check(formula, &compiled.theory.views, structure)? {
            out.push(name.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_theory, render_theory};
    use crate::logic::Dialect;
    use crate::sat::{bounded_model_search, Budget, SearchOutcome};
    use std::time::Duration;

    /// Machines whose runs exercise every transition in their tables; the
    /// goodstate biconditional requires each declared transition to fire.
    pub(crate) fn corpus() -> Vec<TwoCounterMachine> {
        let m = |text: &str| TwoCounterMachine::parse(text).unwrap();
        vec![
            m("state 1 halts.\n d(0,=,=) = (1,push,push)."),
            m("state 2 halts.\n d(0,=,=) = (1,push,push).\n d(1,>,>) = (2,pop,pop)."),
            m("state 1 halts.\n d(0,=,=) = (0,push,push).\n d(0,>,>) = (1,pop,push)."),
            m("state 2 halts.\n d(0,=,=) = (0,push,push).\n d(0,>,>) = (1,push,pop).\n \
               d(1,>,=) = (2,pop,push)."),
            m("state 3 halts.\n d(0,=,=) = (1,push,push).\n d(1,>,>) = (2,push,push).\n \
               d(2,>,>) = (3,pop,pop)."),
        ]
    }

    #[test]
    fn parse_and_render_round_trip() {
        let text = "state 2 halts.\nd(0,=,=) = (1,push,push).\nd(1,>,>) = (2,pop,pop).\n";
        let machine = TwoCounterMachine::parse(text).unwrap();
        assert_eq!(machine.render(), text);
        assert_eq!(machine.halt_state, 2);
        assert_eq!(machine.transitions.len(), 2);
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(TwoCounterMachine::parse("d(0,=,=) = (1,push,push).").is_err()); // no state line
        assert!(TwoCounterMachine::parse("state 1 halts.\nd(0,?,=) = (1,push,push).").is_err());
        assert!(TwoCounterMachine::parse("state 1 halts.\nd(0,=,=) = (2,push,push).").is_err());
        assert!(TwoCounterMachine::parse(
            "state 1 halts.\nd(0,=,=) = (1,push,push).\nd(0,=,=) = (0,pop,pop)."
        )
        .is_err());
    }

    #[test]
    fn simulate_counts_and_halts() {
        let machine = corpus().remove(3);
        let trace = machine.simulate(10).unwrap();
        assert_eq!(
            trace,
            vec![(0, 0, 0, 0), (1, 0, 1, 1), (2, 1, 2, 0), (3, 2, 1, 1)]
        );
        assert!(matches!(machine.simulate(2), Err(Error::Resource(_))));
    }

    #[test]
    fn simulate_detects_stuck_machines() {
        let machine = TwoCounterMachine::parse("state 1 halts.\nd(0,>,>) = (1,pop,pop).").unwrap();
        assert!(matches!(machine.simulate(5), Err(Error::Input(_))));
    }

    #[test]
    fn compiled_theory_parses_and_is_neq_dialect() {
        let machine = corpus().remove(1);
        let compiled = compile_2cm(&machine).unwrap();
        assert_eq!(compiled.theory.dialect, Dialect::UcvNeq);
        // Three conjunct families per transition.
        for d in 0..machine.transitions.len() {
            for name in [
                format!("goodstate_d{d}"),
                format!("goodtrans_d{d}_c1"),
                format!("goodtrans_d{d}_c2"),
            ] {
                assert!(compiled.conjuncts.iter().any(|(n, _)| *n == name));
            }
        }
        let rendered = render_theory(&compiled.theory);
        let reparsed = parse_theory(&rendered).unwrap();
        assert_eq!(reparsed.query, compiled.theory.query);
        assert_eq!(reparsed.views.views, compiled.theory.views.views);
    }

    #[test]
    fn traces_satisfy_compiled_sentence() {
        for machine in corpus() {
            let compiled = compile_2cm(&machine).unwrap();
            let trace = encode_trace(&machine, 10).unwrap();
            let failing = failing_conjuncts(&compiled, &trace).unwrap();
            assert!(failing.is_empty(), "machine {:?} fails {:?}", machine, failing);
            assert!(model_check(&compiled.theory.query, &compiled.theory.views, &trace).unwrap());
        }
    }

    #[test]
    fn single_tuple_corruption_flips_a_named_conjunct() {
        let machine = corpus().remove(1);
        let compiled = compile_2cm(&machine).unwrap();
        let trace = encode_trace(&machine, 10).unwrap();
        // Deleting any config or succ tuple breaks a named condition.
        for rel in ["config", "succ"] {
            for tuple in trace.tuples(rel).clone() {
                let facts: Vec<(String, Tuple)> = trace
                    .facts()
                    .filter(|(r, t)| !(*r == rel && **t == tuple))
                    .map(|(r, t)| (r.to_string(), t.clone()))
                    .collect();
                let corrupted = Structure::from_facts(
                    compiled.theory.vocab.clone(),
                    facts,
                    Some(trace.universe().clone()),
                )
                .unwrap();
                let failing = failing_conjuncts(&compiled, &corrupted).unwrap();
                assert!(!failing.is_empty(), "deleting {rel}{tuple:?} flips nothing");
            }
        }
        // Adding a second state at an existing timestamp violates the key.
        let mut facts: Vec<(String, Tuple)> =
            trace.facts().map(|(r, t)| (r.to_string(), t.clone())).collect();
        facts.push((
            "config".into(),
            vec![Const::new("0"), Const::new("s1"), Const::new("0"), Const::new("0")],
        ));
        let corrupted =
            Structure::from_facts(compiled.theory.vocab.clone(), facts, Some(trace.universe().clone()))
                .unwrap();
        let failing = failing_conjuncts(&compiled, &corrupted).unwrap();
        assert!(failing.contains(&"notbad_key_state".to_string()), "got {failing:?}");
    }

    #[test]
    fn looping_machine_has_no_tiny_model() {
        let machine = TwoCounterMachine::parse(
            "state 1 halts.\nd(0,=,=) = (0,push,push).\nd(0,>,>) = (0,push,push).",
        )
        .unwrap();
        let compiled = compile_2cm(&machine).unwrap();
        let budget = Budget { max_size: 1, time: Duration::from_secs(30), candidates: 1_000_000 };
        let outcome = bounded_model_search(
            &compiled.theory.query,
            &compiled.theory.views,
            &compiled.theory.vocab,
            &budget,
        )
        .unwrap();
        assert!(matches!(outcome, SearchOutcome::NoModelUpTo(1)));
    }

    #[test]
    fn trace_requires_at_least_one_step() {
        let machine = TwoCounterMachine::new(0, vec![]).unwrap();
        assert!(matches!(encode_trace(&machine, 5), Err(Error::Precondition(_))));
    }
}
