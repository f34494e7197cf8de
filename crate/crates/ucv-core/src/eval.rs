//! Semantics: conjunctive-view evaluation, the Λ mapping, class tables,
//! FO model checking of UCV formulas, and homomorphism search.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::logic::{Atom, ConjunctiveView, Const, Extra, Structure, UcvFormula, Var, ViewSet, Vocabulary};

/// Per-element bit-vector of view membership over an ordered ViewSet.
/// Bit `j` is set iff the element belongs to the `j`th view.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize)]
pub struct ClassSignature {
    pub bits: u64,
    pub width: usize,
}

impl ClassSignature {
    pub fn new(bits: u64, width: usize) -> Self {
        debug_assert!(width <= 64);
        ClassSignature { bits, width }
    }

    pub fn get(&self, j: usize) -> bool {
        (self.bits >> j) & 1 == 1
    }

    /// All signatures of the given width, in increasing bit order.
    pub fn all(width: usize) -> impl Iterator<Item = ClassSignature> {
        (0u64..(1u64 << width)).map(move |bits| ClassSignature { bits, width })
    }
}

impl fmt::Display for ClassSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C_")?;
        // Render most significant view first, mirroring C_101-style names
        // where the leftmost digit is view 1.
        for j in 0..self.width {
            write!(f, "{}", if self.get(j) { 1 } else { 0 })?;
        }
        Ok(())
    }
}

/// Mapping from elements to their class signatures, plus the realized set.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct ClassTable {
    pub classes: BTreeMap<Const, ClassSignature>,
    pub realized: BTreeSet<ClassSignature>,
}

impl ClassTable {
    pub fn signature_of(&self, c: &Const) -> Option<ClassSignature> {
        self.classes.get(c).copied()
    }
}

fn check_extras(extras: &[Extra], asg: &BTreeMap<Var, Const>, structure: &Structure) -> bool {
    extras.iter().all(|e| match e {
        Extra::Neq(a, b) => asg[a] != asg[b],
        Extra::NegAtom(atom) => {
            let t: Vec<Const> = atom.args.iter().map(|v| asg[v].clone()).collect();
            !structure.holds(&atom.rel, &t)
        }
    })
}

fn search_valuations(
    atoms: &[Atom],
    extras: &[Extra],
    structure: &Structure,
    asg: &mut BTreeMap<Var, Const>,
    head: &Var,
    out: &mut BTreeSet<Const>,
) {
    match atoms.split_first() {
        None => {
            if check_extras(extras, asg, structure) {
                out.insert(asg[head].clone());
            }
        }
        Some((atom, rest)) => {
            'tuples: for t in structure.tuples(&atom.rel) {
                let mut bound = Vec::new();
                for (v, c) in atom.args.iter().zip(t.iter()) {
                    match asg.get(v) {
                        Some(existing) if existing != c => {
                            for b in bound {
                                asg.remove(b);
                            }
                            continue 'tuples;
                        }
                        Some(_) => {}
                        None => {
                            asg.insert(v.clone(), c.clone());
                            bound.push(v);
                        }
                    }
                }
                search_valuations(rest, extras, structure, asg, head, out);
                for b in bound {
                    asg.remove(b);
                }
            }
        }
    }
}

/// The image of a unary view: all elements the head variable can take.
pub fn eval_view(view: &ConjunctiveView, structure: &Structure) -> Result<BTreeSet<Const>> {
    view.validate(structure.vocab())?;
    let mut out = BTreeSet::new();
    let mut asg = BTreeMap::new();
    // Order atoms so the most constrained (fewest tuples) are joined first.
    let mut atoms = view.body.clone();
    atoms.sort_by_key(|a| structure.tuples(&a.rel).len());
    search_valuations(&atoms, &view.extras, structure, &mut asg, &view.head, &mut out);
    Ok(out)
}

/// Λ: interprets each view by its image over the same universe, yielding a
/// structure on the unary view vocabulary.
pub fn lambda_map(structure: &Structure, views: &ViewSet) -> Result<Structure> {
    let vocab = Vocabulary::new(views.views.iter().map(|v| (v.name.clone(), 1)).collect())?;
    let mut relations: BTreeMap<String, BTreeSet<Vec<Const>>> = BTreeMap::new();
    for view in &views.views {
        let image = eval_view(view, structure)?;
        relations.insert(view.name.clone(), image.into_iter().map(|c| vec![c]).collect());
    }
    Structure::new(vocab, structure.universe().clone(), relations)
}

/// The class signature of every element, and the realized signature set.
pub fn class_table(structure: &Structure, views: &ViewSet) -> Result<ClassTable> {
    let width = views.n();
    if width > 64 {
        return Err(Error::Resource(format!(
            "class signatures support at most 64 views, got {width}"
        )));
    }
    let mut classes: BTreeMap<Const, ClassSignature> = structure
        .universe()
        .iter()
        .map(|c| (c.clone(), ClassSignature::new(0, width)))
        .collect();
    for (j, view) in views.views.iter().enumerate() {
        for c in eval_view(view, structure)? {
            classes.get_mut(&c).unwrap().bits |= 1 << j;
        }
    }
    let realized = classes.values().copied().collect();
    Ok(ClassTable { classes, realized })
}

/// The realized signature set only (convenience wrapper).
pub fn realized_signatures(structure: &Structure, views: &ViewSet) -> Result<BTreeSet<ClassSignature>> {
    Ok(class_table(structure, views)?.realized)
}

fn eval_formula(
    formula: &UcvFormula,
    images: &BTreeMap<String, BTreeSet<Const>>,
    universe: &BTreeSet<Const>,
    asg: &mut BTreeMap<Var, Const>,
) -> Result<bool> {
    Ok(match formula {
        UcvFormula::View(name, v) => {
            let image = images
                .get(name)
                .ok_or_else(|| Error::Input(format!("undefined view {name}")))?;
            let c = asg
                .get(v)
                .ok_or_else(|| Error::Input(format!("unbound variable {v}")))?;
            image.contains(c)
        }
        UcvFormula::Not(f) => !eval_formula(f, images, universe, asg)?,
        UcvFormula::And(a, b) => {
            eval_formula(a, images, universe, asg)? && eval_formula(b, images, universe, asg)?
        }
        UcvFormula::Exists(v, f) => {
            let saved = asg.get(v).cloned();
            let mut found = false;
            for c in universe {
                asg.insert(v.clone(), c.clone());
                if eval_formula(f, images, universe, asg)? {
                    found = true;
                    break;
                }
            }
            match saved {
                Some(c) => {
                    asg.insert(v.clone(), c);
                }
                None => {
                    asg.remove(v);
                }
            }
            found
        }
    })
}

fn view_images(
    formula: &UcvFormula,
    views: &ViewSet,
    structure: &Structure,
) -> Result<BTreeMap<String, BTreeSet<Const>>> {
    let mut images = BTreeMap::new();
    for name in formula.view_names() {
        let view = views
            .get(&name)
            .ok_or_else(|| Error::Input(format!("undefined view {name}")))?;
        images.insert(name, eval_view(view, structure)?);
    }
    Ok(images)
}

/// Tarskian truth of a closed UCV formula in a structure.
pub fn model_check(formula: &UcvFormula, views: &ViewSet, structure: &Structure) -> Result<bool> {
    if !formula.is_sentence() {
        return Err(Error::Input(format!(
            "model_check requires a sentence; free variables: {:?}",
            formula.free_vars()
        )));
    }
    let images = view_images(formula, views, structure)?;
    let mut asg = BTreeMap::new();
    eval_formula(formula, &images, structure.universe(), &mut asg)
}

/// Image of a UCV formula with exactly one free variable.
pub fn eval_open(formula: &UcvFormula, views: &ViewSet, structure: &Structure) -> Result<BTreeSet<Const>> {
    let free = formula.free_vars();
    if free.len() != 1 {
        return Err(Error::Input(format!(
            "expected exactly one free variable, found {}",
            free.len()
        )));
    }
    let x = free.into_iter().next().unwrap();
    let images = view_images(formula, views, structure)?;
    let mut out = BTreeSet::new();
    let mut asg = BTreeMap::new();
    for c in structure.universe() {
        asg.insert(x.clone(), c.clone());
        if eval_formula(formula, &images, structure.universe(), &mut asg)? {
            out.insert(c.clone());
        }
    }
    Ok(out)
}

/// Complete backtracking search for a homomorphism `src -> dst` extending
/// the given pins.
pub fn find_homomorphism(
    src: &Structure,
    dst: &Structure,
    pins: &BTreeMap<Const, Const>,
) -> Result<Option<BTreeMap<Const, Const>>> {
    for (a, b) in pins {
        if !src.universe().contains(a) {
            return Err(Error::Input(format!("pin source {a} not in the source universe")));
        }
        if !dst.universe().contains(b) {
            return Err(Error::Input(format!("pin target {b} not in the target universe")));
        }
    }
    // Order unpinned elements by descending degree in the source's facts so
    // the most constrained elements are assigned first.
    let mut degree: BTreeMap<&Const, usize> = src.universe().iter().map(|c| (c, 0)).collect();
    for (_, t) in src.facts() {
        for c in t {
            *degree.get_mut(c).unwrap() += 1;
        }
    }
    let mut order: Vec<&Const> = src.universe().iter().filter(|c| !pins.contains_key(c)).collect();
    order.sort_by_key(|c| std::cmp::Reverse(degree[*c]));

    let facts: Vec<(&str, &Vec<Const>)> = src.facts().collect();
    let mut asg = pins.clone();

    fn consistent(asg: &BTreeMap<Const, Const>, facts: &[(&str, &Vec<Const>)], dst: &Structure) -> bool {
        facts.iter().all(|(rel, t)| {
            let image: Option<Vec<Const>> = t.iter().map(|c| asg.get(c).cloned()).collect();
            match image {
                Some(img) => dst.holds(rel, &img),
                None => true, // not yet fully assigned
            }
        })
    }

    fn backtrack(
        order: &[&Const],
        idx: usize,
        asg: &mut BTreeMap<Const, Const>,
        facts: &[(&str, &Vec<Const>)],
        dst: &Structure,
    ) -> bool {
        if idx == order.len() {
            return consistent(asg, facts, dst);
        }
        let a = order[idx];
        let targets: Vec<Const> = dst.universe().iter().cloned().collect();
        for b in targets {
            asg.insert(a.clone(), b);
            if consistent(asg, facts, dst) && backtrack(order, idx + 1, asg, facts, dst) {
                return true;
            }
            asg.remove(a);
        }
        false
    }

    if !consistent(&asg, &facts, dst) {
        return Ok(None);
    }
    if backtrack(&order, 0, &mut asg, &facts, dst) {
        Ok(Some(asg))
    } else {
        Ok(None)
    }
}
