//! Query containment under constraints and implication of containment
//! dependencies, both by reduction to satisfiability.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::eval_open;
use crate::logic::{Const, Structure, UcvFormula, Var, ViewSet, Vocabulary};
use crate::sat::{decide, Budget, Verdict};

/// Substitutes `to` for free occurrences of `from`.
fn rename_free(f: &UcvFormula, from: &Var, to: &Var) -> UcvFormula {
    match f {
        UcvFormula::View(name, v) => {
            UcvFormula::View(name.clone(), if v == from { to.clone() } else { v.clone() })
        }
        UcvFormula::Not(g) => UcvFormula::not(rename_free(g, from, to)),
        UcvFormula::And(a, b) => {
            UcvFormula::and(rename_free(a, from, to), rename_free(b, from, to))
        }
        UcvFormula::Exists(v, g) => {
            if v == from {
                f.clone()
            } else {
                UcvFormula::exists(v.clone(), rename_free(g, from, to))
            }
        }
    }
}

fn single_free_var(f: &UcvFormula, what: &str) -> Result<Var> {
    let free = f.free_vars();
    if free.len() != 1 {
        return Err(Error::Input(format!(
            "{what} must have exactly one free variable, found {}",
            free.len()
        )));
    }
    Ok(free.into_iter().next().unwrap())
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub enum Containment {
    Contained,
    Counterexample { model: Structure, element: Const },
    Unknown { reason: String },
}

/// Decides `q1 ⊆ q2` under the given constraint sentences by testing
/// whether `∃x (q1(x) ∧ ¬q2(x)) ∧ C1 ∧ … ∧ Cn` is unsatisfiable.
pub fn check_containment(
    q1: &UcvFormula,
    q2: &UcvFormula,
    views: &ViewSet,
    vocab: &Vocabulary,
    constraints: &[UcvFormula],
    budget: &Budget,
) -> Result<Containment> {
    let x1 = single_free_var(q1, "q1")?;
    let x2 = single_free_var(q2, "q2")?;
    let q2 = rename_free(q2, &x2, &x1);
    for c in constraints {
        if !c.is_sentence() {
            return Err(Error::Input("constraints must be sentences".into()));
        }
    }
    let open = UcvFormula::and(q1.clone(), UcvFormula::not(q2));
    let mut sentence = UcvFormula::exists(x1, open.clone());
    for c in constraints {
        sentence = UcvFormula::and(sentence, c.clone());
    }
    match decide(&sentence, views, vocab, budget)? {
        Verdict::Unsat { .. } => Ok(Containment::Contained),
        Verdict::Sat { model } => {
            let element = eval_open(&open, views, &model)?
                .into_iter()
                .next()
                .ok_or_else(|| Error::Construction("model lost its witnessing element".into()))?;
            Ok(Containment::Counterexample { model, element })
        }
        Verdict::Unknown { reason } => Ok(Containment::Unknown { reason }),
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum DepOp {
    /// ⊆
    Subset,
    /// ⊂
    ProperSubset,
}

/// A unary containment dependency `lhs op rhs` between one-free-variable
/// UCV queries over a shared theory.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct Dependency {
    pub lhs: UcvFormula,
    pub rhs: UcvFormula,
    pub op: DepOp,
}

impl Dependency {
    pub fn between_views(lhs: &str, rhs: &str, op: DepOp) -> Dependency {
        let x = Var::new("x");
        Dependency {
            lhs: UcvFormula::view(lhs, x.clone()),
            rhs: UcvFormula::view(rhs, x),
            op,
        }
    }
}

/// `⊆` becomes `∀x (lhs → rhs)`; `⊂` additionally requires
/// `∃x (rhs ∧ ¬lhs)`.
pub fn encode_dependency(dep: &Dependency) -> Result<UcvFormula> {
    let xl = single_free_var(&dep.lhs, "dependency lhs")?;
    let xr = single_free_var(&dep.rhs, "dependency rhs")?;
    let rhs = rename_free(&dep.rhs, &xr, &xl);
    let subset = UcvFormula::forall(
        xl.clone(),
        UcvFormula::implies(dep.lhs.clone(), rhs.clone()),
    );
    Ok(match dep.op {
        DepOp::Subset => subset,
        DepOp::ProperSubset => UcvFormula::and(
            subset,
            UcvFormula::exists(xl, UcvFormula::and(rhs, UcvFormula::not(dep.lhs.clone()))),
        ),
    })
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub enum Implication {
    Implied,
    Counterexample { model: Structure },
    Unknown { reason: String },
}

/// The target is implied iff `(⋀ given) ∧ ¬encode(target)` is
/// unsatisfiable.
pub fn imply_dependencies(
    given: &[Dependency],
    target: &Dependency,
    views: &ViewSet,
    vocab: &Vocabulary,
    budget: &Budget,
) -> Result<Implication> {
    let mut sentence = UcvFormula::not(encode_dependency(target)?);
    for dep in given {
        sentence = UcvFormula::and(encode_dependency(dep)?, sentence);
    }
    match decide(&sentence, views, vocab, budget)? {
        Verdict::Unsat { .. } => Ok(Implication::Implied),
        Verdict::Sat { model } => Ok(Implication::Counterexample { model }),
        Verdict::Unknown { reason } => Ok(Implication::Unknown { reason }),
    }
}
