//! Core value types: vocabularies, structures, views, formulas, and the
//! Gaifman graph with its weighted distance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// An element of a structure's universe. Opaque, totally ordered.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize)]
pub struct Const(pub String);

impl Const {
    pub fn new(s: impl Into<String>) -> Self {
        Const(s.into())
    }
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A first-order variable.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize)]
pub struct Var(pub String);

impl Var {
    pub fn new(s: impl Into<String>) -> Self {
        Var(s.into())
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A relation symbol together with its arity.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct RelSym {
    pub name: String,
    pub arity: usize,
}

/// A relational vocabulary: an ordered list of relation symbols.
///
/// Constants and function symbols are absent by construction; arities are
/// at least one.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize)]
pub struct Vocabulary {
    symbols: Vec<RelSym>,
}

impl Vocabulary {
    pub fn new(symbols: Vec<(String, usize)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (name, arity) in &symbols {
            if *arity == 0 {
                return Err(Error::Input(format!(
                    "relation {name} has arity 0; nullary symbols are not allowed"
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::Input(format!("duplicate relation symbol {name}")));
            }
        }
        Ok(Vocabulary {
            symbols: symbols
                .into_iter()
                .map(|(name, arity)| RelSym { name, arity })
                .collect(),
        })
    }

    /// Number of relation symbols (the parameter p).
    pub fn p(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[RelSym] {
        &self.symbols
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.symbols.iter().find(|s| s.name == name).map(|s| s.arity)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arity(name).is_some()
    }

    /// Extends the vocabulary with a fresh symbol, keeping order.
    pub fn with_symbol(&self, name: &str, arity: usize) -> Result<Self> {
        if self.contains(name) {
            return Err(Error::Input(format!("relation symbol {name} already declared")));
        }
        let mut symbols: Vec<(String, usize)> = self
            .symbols
            .iter()
            .map(|s| (s.name.clone(), s.arity))
            .collect();
        symbols.push((name.to_string(), arity));
        Vocabulary::new(symbols)
    }
}

/// A ground fact `R(c1,...,ck)`.
pub type Tuple = Vec<Const>;

/// A finite relational structure (equivalently, a tuple database together
/// with its universe).
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct Structure {
    vocab: Vocabulary,
    universe: BTreeSet<Const>,
    relations: BTreeMap<String, BTreeSet<Tuple>>,
}

impl Structure {
    pub fn new(
        vocab: Vocabulary,
        universe: BTreeSet<Const>,
        relations: BTreeMap<String, BTreeSet<Tuple>>,
    ) -> Result<Self> {
        if universe.is_empty() {
            return Err(Error::Input("structure universe must be non-empty".into()));
        }
        let mut full: BTreeMap<String, BTreeSet<Tuple>> = BTreeMap::new();
        for sym in vocab.symbols() {
            full.insert(sym.name.clone(), BTreeSet::new());
        }
        for (rel, tuples) in relations {
            let arity = vocab
                .arity(&rel)
                .ok_or_else(|| Error::Input(format!("unknown relation {rel}")))?;
            for t in &tuples {
                if t.len() != arity {
                    return Err(Error::Input(format!(
                        "tuple {rel}({}) has {} arguments, expected {arity}",
                        t.iter().map(|c| c.0.as_str()).collect::<Vec<_>>().join(","),
                        t.len()
                    )));
                }
                for c in t {
                    if !universe.contains(c) {
                        return Err(Error::Input(format!(
                            "element {c} occurs in a tuple but not in the universe"
                        )));
                    }
                }
            }
            full.insert(rel, tuples);
        }
        Ok(Structure { vocab, universe, relations: full })
    }

    /// Builds a structure from a bag of facts; the universe is the active
    /// domain unless a larger one is supplied.
    pub fn from_facts(
        vocab: Vocabulary,
        facts: impl IntoIterator<Item = (String, Tuple)>,
        universe: Option<BTreeSet<Const>>,
    ) -> Result<Self> {
        let mut relations: BTreeMap<String, BTreeSet<Tuple>> = BTreeMap::new();
        let mut adom = BTreeSet::new();
        for (rel, t) in facts {
            adom.extend(t.iter().cloned());
            relations.entry(rel).or_default().insert(t);
        }
        let universe = match universe {
            Some(u) => {
                if !adom.is_subset(&u) {
                    return Err(Error::Input(
                        "declared universe does not contain every element in the facts".into(),
                    ));
                }
                u
            }
            None => adom,
        };
        Structure::new(vocab, universe, relations)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn universe(&self) -> &BTreeSet<Const> {
        &self.universe
    }

    pub fn tuples(&self, rel: &str) -> &BTreeSet<Tuple> {
        static EMPTY: std::sync::OnceLock<BTreeSet<Tuple>> = std::sync::OnceLock::new();
        self.relations
            .get(rel)
            .unwrap_or_else(|| EMPTY.get_or_init(BTreeSet::new))
    }

    pub fn relations(&self) -> &BTreeMap<String, BTreeSet<Tuple>> {
        &self.relations
    }

    pub fn holds(&self, rel: &str, t: &[Const]) -> bool {
        self.relations.get(rel).is_some_and(|s| s.contains(t))
    }

    /// All facts as (relation, tuple) pairs in canonical order.
    pub fn facts(&self) -> impl Iterator<Item = (&str, &Tuple)> {
        self.relations
            .iter()
            .flat_map(|(rel, tuples)| tuples.iter().map(move |t| (rel.as_str(), t)))
    }

    /// The active domain: elements occurring in at least one relation.
    pub fn adom(&self) -> BTreeSet<Const> {
        let mut out = BTreeSet::new();
        for (_, t) in self.facts() {
            out.extend(t.iter().cloned());
        }
        out
    }

    /// Renames every element through `map` (a total injective mapping).
    pub fn rename(&self, map: &BTreeMap<Const, Const>) -> Result<Self> {
        let get = |c: &Const| -> Result<Const> {
            map.get(c)
                .cloned()
                .ok_or_else(|| Error::Input(format!("no renaming given for element {c}")))
        };
        let universe = self
            .universe
            .iter()
            .map(get)
            .collect::<Result<BTreeSet<_>>>()?;
        if universe.len() != self.universe.len() {
            return Err(Error::Input("renaming is not injective".into()));
        }
        let mut relations = BTreeMap::new();
        for (rel, tuples) in &self.relations {
            let renamed = tuples
                .iter()
                .map(|t| t.iter().map(get).collect::<Result<Tuple>>())
                .collect::<Result<BTreeSet<_>>>()?;
            relations.insert(rel.clone(), renamed);
        }
        Structure::new(self.vocab.clone(), universe, relations)
    }
}

/// Which extensions a theory's views use.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize)]
pub enum Dialect {
    /// Pure unary conjunctive views.
    Ucv,
    /// Inequality atoms `x != y` in view bodies.
    UcvNeq,
    /// Safe negated atoms `!R(u)` in view bodies.
    UcvNeg,
    /// Recursive view definitions; recognized but not executed.
    UcvRec,
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dialect::Ucv => write!(f, "UCV"),
            Dialect::UcvNeq => write!(f, "UCV!="),
            Dialect::UcvNeg => write!(f, "UCV-neg"),
            Dialect::UcvRec => write!(f, "UCV-rec"),
        }
    }
}

/// A positive body atom `R(u)` over variables.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize)]
pub struct Atom {
    pub rel: String,
    pub args: Vec<Var>,
}

impl Atom {
    pub fn new(rel: impl Into<String>, args: Vec<Var>) -> Self {
        Atom { rel: rel.into(), args }
    }
}

/// Extended-dialect body conjuncts.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize)]
pub enum Extra {
    /// `x != y`
    Neq(Var, Var),
    /// `!R(u)` (safe: every variable also occurs in a positive atom)
    NegAtom(Atom),
}

/// A unary conjunctive view `V(x) <- R1(u1), ..., Rk(uk)` with optional
/// extended-dialect conjuncts.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize)]
pub struct ConjunctiveView {
    pub name: String,
    pub head: Var,
    pub body: Vec<Atom>,
    pub extras: Vec<Extra>,
}

impl ConjunctiveView {
    /// Checks safety and arities against a vocabulary.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.body.is_empty() {
            return Err(Error::Input(format!("view {} has an empty body", self.name)));
        }
        let mut positive_vars = BTreeSet::new();
        for atom in &self.body {
            let arity = vocab
                .arity(&atom.rel)
                .ok_or_else(|| Error::Input(format!("undeclared relation {}", atom.rel)))?;
            if atom.args.len() != arity {
                return Err(Error::Input(format!(
                    "atom {}/{} in view {} does not match declared arity {arity}",
                    atom.rel,
                    atom.args.len(),
                    self.name
                )));
            }
            positive_vars.extend(atom.args.iter().cloned());
        }
        if !positive_vars.contains(&self.head) {
            return Err(Error::Input(format!(
                "unsafe view {}: head variable {} does not occur in a positive body atom",
                self.name, self.head
            )));
        }
        for extra in &self.extras {
            match extra {
                Extra::Neq(a, b) => {
                    if !positive_vars.contains(a) || !positive_vars.contains(b) {
                        return Err(Error::Input(format!(
                            "inequality in view {} uses a variable outside the positive body",
                            self.name
                        )));
                    }
                }
                Extra::NegAtom(atom) => {
                    let arity = vocab
                        .arity(&atom.rel)
                        .ok_or_else(|| Error::Input(format!("undeclared relation {}", atom.rel)))?;
                    if atom.args.len() != arity {
                        return Err(Error::Input(format!(
                            "negated atom {} in view {} has wrong arity",
                            atom.rel, self.name
                        )));
                    }
                    if !atom.args.iter().all(|v| positive_vars.contains(v)) {
                        return Err(Error::Input(format!(
                            "unsafe negation in view {}: negated atom variable outside the positive body",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sum of the arities of the positive body atoms.
    pub fn length(&self) -> usize {
        self.body.iter().map(|a| a.args.len()).sum()
    }

    pub fn is_pure(&self) -> bool {
        self.extras.is_empty()
    }

    pub fn dialect(&self) -> Dialect {
        let mut d = Dialect::Ucv;
        for e in &self.extras {
            let de = match e {
                Extra::Neq(..) => Dialect::UcvNeq,
                Extra::NegAtom(..) => Dialect::UcvNeg,
            };
            d = d.max(de);
        }
        d
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for a in &self.body {
            out.extend(a.args.iter().cloned());
        }
        for e in &self.extras {
            match e {
                Extra::Neq(a, b) => {
                    out.insert(a.clone());
                    out.insert(b.clone());
                }
                Extra::NegAtom(a) => out.extend(a.args.iter().cloned()),
            }
        }
        out
    }
}

/// UCV formula AST; `Or`, `Implies`, `Iff`, `Forall` are desugared by the
/// parser into this core.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub enum UcvFormula {
    View(String, Var),
    Not(Box<UcvFormula>),
    And(Box<UcvFormula>, Box<UcvFormula>),
    Exists(Var, Box<UcvFormula>),
}

impl UcvFormula {
    pub fn view(name: impl Into<String>, v: Var) -> Self {
        UcvFormula::View(name.into(), v)
    }

    pub fn not(f: UcvFormula) -> Self {
        UcvFormula::Not(Box::new(f))
    }

    pub fn and(a: UcvFormula, b: UcvFormula) -> Self {
        UcvFormula::And(Box::new(a), Box::new(b))
    }

    pub fn exists(v: Var, f: UcvFormula) -> Self {
        UcvFormula::Exists(v, Box::new(f))
    }

    pub fn or(a: UcvFormula, b: UcvFormula) -> Self {
        Self::not(Self::and(Self::not(a), Self::not(b)))
    }

    pub fn implies(a: UcvFormula, b: UcvFormula) -> Self {
        Self::or(Self::not(a), b)
    }

    pub fn iff(a: UcvFormula, b: UcvFormula) -> Self {
        Self::and(Self::implies(a.clone(), b.clone()), Self::implies(b, a))
    }

    pub fn forall(v: Var, f: UcvFormula) -> Self {
        Self::not(Self::exists(v, Self::not(f)))
    }

    pub fn conjoin_all(mut parts: Vec<UcvFormula>) -> Option<UcvFormula> {
        let first = if parts.is_empty() { return None } else { parts.remove(0) };
        Some(parts.into_iter().fold(first, UcvFormula::and))
    }

    /// Maximum nesting depth of quantifiers.
    pub fn qrank(&self) -> usize {
        match self {
            UcvFormula::View(..) => 0,
            UcvFormula::Not(f) => f.qrank(),
            UcvFormula::And(a, b) => a.qrank().max(b.qrank()),
            UcvFormula::Exists(_, f) => 1 + f.qrank(),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        match self {
            UcvFormula::View(_, v) => BTreeSet::from([v.clone()]),
            UcvFormula::Not(f) => f.free_vars(),
            UcvFormula::And(a, b) => {
                let mut s = a.free_vars();
                s.extend(b.free_vars());
                s
            }
            UcvFormula::Exists(v, f) => {
                let mut s = f.free_vars();
                s.remove(v);
                s
            }
        }
    }

    pub fn is_sentence(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// Names of all views referenced, in first-occurrence order.
    pub fn view_names(&self) -> Vec<String> {
        fn walk(f: &UcvFormula, out: &mut Vec<String>) {
            match f {
                UcvFormula::View(name, _) => {
                    if !out.iter().any(|n| n == name) {
                        out.push(name.clone());
                    }
                }
                UcvFormula::Not(g) => walk(g, out),
                UcvFormula::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                UcvFormula::Exists(_, g) => walk(g, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

/// Role of a view set: the views of a formula, or the complete set of
/// non-equivalent views of bounded length.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum ViewRole {
    /// Views appearing in a theory.
    Theory,
    /// The full universe: all non-equivalent views of length <= m.
    Universe,
}

/// An ordered set of views.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct ViewSet {
    pub views: Vec<ConjunctiveView>,
    pub role: ViewRole,
    /// Maximum view length bound this set was built for.
    pub m: usize,
}

impl ViewSet {
    pub fn theory(views: Vec<ConjunctiveView>) -> Self {
        let m = views.iter().map(|v| v.length()).max().unwrap_or(1);
        ViewSet { views, role: ViewRole::Theory, m }
    }

    pub fn n(&self) -> usize {
        self.views.len()
    }

    pub fn get(&self, name: &str) -> Option<&ConjunctiveView> {
        self.views.iter().find(|v| v.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.views.iter().position(|v| v.name == name)
    }

    pub fn dialect(&self) -> Dialect {
        self.views
            .iter()
            .map(|v| v.dialect())
            .max()
            .unwrap_or(Dialect::Ucv)
    }
}

/// One edge of a Gaifman graph, labeled by the originating tuple and
/// weighted by its arity.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GaifmanEdge {
    pub a: Const,
    pub b: Const,
    pub weight: u64,
    pub label: (String, Tuple),
}

/// The weighted undirected multigraph on a structure's elements.
#[derive(Clone, Debug)]
pub struct GaifmanGraph {
    pub vertices: BTreeSet<Const>,
    pub edges: Vec<GaifmanEdge>,
    adjacency: BTreeMap<Const, Vec<(Const, u64)>>,
}

impl GaifmanGraph {
    pub fn of(structure: &Structure) -> Self {
        let mut edges = Vec::new();
        let mut adjacency: BTreeMap<Const, Vec<(Const, u64)>> = BTreeMap::new();
        for (rel, t) in structure.facts() {
            let weight = t.len() as u64;
            let elems: BTreeSet<&Const> = t.iter().collect();
            let elems: Vec<&Const> = elems.into_iter().collect();
            for i in 0..elems.len() {
                for j in (i + 1)..elems.len() {
                    edges.push(GaifmanEdge {
                        a: elems[i].clone(),
                        b: elems[j].clone(),
                        weight,
                        label: (rel.to_string(), t.clone()),
                    });
                    adjacency
                        .entry(elems[i].clone())
                        .or_default()
                        .push((elems[j].clone(), weight));
                    adjacency
                        .entry(elems[j].clone())
                        .or_default()
                        .push((elems[i].clone(), weight));
                }
            }
        }
        GaifmanGraph {
            vertices: structure.universe().clone(),
            edges,
            adjacency,
        }
    }

    /// Weighted shortest-path distance; `None` means unreachable.
    pub fn distance(&self, from: &BTreeSet<Const>, to: &BTreeSet<Const>) -> Option<u64> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        if from.iter().any(|c| to.contains(c)) {
            return Some(0);
        }
        let mut dist: BTreeMap<&Const, u64> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        for c in from {
            dist.insert(c, 0);
            heap.push(Reverse((0u64, c)));
        }
        while let Some(Reverse((d, c))) = heap.pop() {
            if dist.get(c).copied().unwrap_or(u64::MAX) < d {
                continue;
            }
            if to.contains(c) {
                return Some(d);
            }
            if let Some(nbrs) = self.adjacency.get(c) {
                for (n, w) in nbrs {
                    let nd = d + w;
                    if nd < dist.get(n).copied().unwrap_or(u64::MAX) {
                        dist.insert(n, nd);
                        heap.push(Reverse((nd, n)));
                    }
                }
            }
        }
        None
    }
}

/// Weighted Gaifman distance between two element sets of a structure.
pub fn gaifman_distance(
    structure: &Structure,
    from: &BTreeSet<Const>,
    to: &BTreeSet<Const>,
) -> Result<Option<u64>> {
    for c in from.iter().chain(to.iter()) {
        if !structure.universe().contains(c) {
            return Err(Error::Input(format!("element {c} is not in the structure")));
        }
    }
    if from.is_empty() || to.is_empty() {
        return Err(Error::Input("distance between empty element sets".into()));
    }
    Ok(GaifmanGraph::of(structure).distance(from, to))
}
