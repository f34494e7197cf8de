//! The finite-model construction as an executable, checker-instrumented
//! pipeline: I₀ → makeJF → rename1 → rename2 → copy → prune → I₅, plus the
//! δ-regular girth-g link-graph generator and per-stage invariant checkers.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{class_table, eval_view, model_check, ClassSignature};
use crate::logic::{Const, Structure, Tuple, UcvFormula, ViewSet, Vocabulary};
use crate::viewenum::enumerate_views;

/// A justification set: the tuples witnessing an anchor's positive views.
pub type Facts = BTreeSet<(String, Tuple)>;

fn facts_adom(facts: &Facts) -> BTreeSet<Const> {
    let mut out = BTreeSet::new();
    for (_, t) in facts {
        out.extend(t.iter().cloned());
    }
    out
}

fn facts_structure(vocab: &Vocabulary, facts: &Facts, extra: Option<&Const>) -> Result<Structure> {
    let mut universe = facts_adom(facts);
    if let Some(c) = extra {
        universe.insert(c.clone());
    }
    Structure::from_facts(vocab.clone(), facts.iter().cloned(), Some(universe))
}

fn rename_facts(facts: &Facts, map: &BTreeMap<Const, Const>) -> Facts {
    facts
        .iter()
        .map(|(rel, t)| {
            (
                rel.clone(),
                t.iter().map(|c| map.get(c).cloned().unwrap_or_else(|| c.clone())).collect(),
            )
        })
        .collect()
}

/// A `(S_a × C_i)`-labeled node: justification set, class, anchor.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct JustificationNode {
    pub anchor: Const,
    pub class: ClassSignature,
    pub facts: Facts,
    pub children: Vec<JustificationNode>,
}

impl JustificationNode {
    fn rename(&mut self, map: &BTreeMap<Const, Const>) {
        if let Some(c) = map.get(&self.anchor) {
            self.anchor = c.clone();
        }
        self.facts = rename_facts(&self.facts, map);
        for child in &mut self.children {
            child.rename(map);
        }
    }

    fn walk<'a>(&'a self, level: usize, f: &mut impl FnMut(&'a JustificationNode, usize)) {
        f(self, level);
        for child in &self.children {
            child.walk(level + 1, f);
        }
    }
}

/// Ordered trees, one per realized class of the source model.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct JustificationForest {
    pub vocab: Vocabulary,
    pub trees: Vec<JustificationNode>,
    pub depth: usize,
}

impl JustificationForest {
    /// The corresponding structure: the union of all node justification sets.
    pub fn structure(&self) -> Result<Structure> {
        let mut facts: Facts = BTreeSet::new();
        self.for_each_node(|node, _| {
            facts.extend(node.facts.iter().cloned());
        });
        if facts.is_empty() {
            return Err(Error::Construction("forest has no tuples".into()));
        }
        Structure::from_facts(self.vocab.clone(), facts.into_iter(), None)
    }

    pub fn for_each_node<'a>(&'a self, mut f: impl FnMut(&'a JustificationNode, usize)) {
        for tree in &self.trees {
            tree.walk(0, &mut f);
        }
    }

    pub fn adom(&self) -> BTreeSet<Const> {
        let mut out = BTreeSet::new();
        self.for_each_node(|node, _| {
            out.extend(facts_adom(&node.facts));
            out.insert(node.anchor.clone());
        });
        out
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.for_each_node(|_, _| n += 1);
        n
    }

    /// Nodes at the pruning frontier (level = depth), in traversal order.
    fn leaf_count(&self) -> usize {
        let mut n = 0;
        self.for_each_node(|_, level| {
            if level == self.depth {
                n += 1;
            }
        });
        n
    }
}

// ---------------------------------------------------------------------------
// makeJF
// ---------------------------------------------------------------------------

/// First tuple set witnessing `a` in the view's image, found by the same
/// backtracking join as evaluation but pinned to the anchor.
fn witness_tuples(
    view: &crate::logic::ConjunctiveView,
    structure: &Structure,
    a: &Const,
) -> Option<Facts> {
    fn rec(
        atoms: &[crate::logic::Atom],
        structure: &Structure,
        asg: &mut BTreeMap<crate::logic::Var, Const>,
        picked: &mut Vec<(String, Tuple)>,
        head: &crate::logic::Var,
        a: &Const,
    ) -> bool {
        match atoms.split_first() {
            None => asg.get(head) == Some(a),
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
                                if v == head && c != a {
                                    for b in bound {
                                        asg.remove(b);
                                    }
                                    continue 'tuples;
                                }
                                asg.insert(v.clone(), c.clone());
                                bound.push(v);
                            }
                        }
                    }
                    picked.push((atom.rel.clone(), t.clone()));
                    if rec(rest, structure, asg, picked, head, a) {
                        return true;
                    }
                    picked.pop();
                    for b in bound {
                        asg.remove(b);
                    }
                }
                false
            }
        }
    }
    let mut asg = BTreeMap::new();
    asg.insert(view.head.clone(), a.clone());
    let mut picked = Vec::new();
    if rec(&view.body, structure, &mut asg, &mut picked, &view.head, a) {
        Some(picked.into_iter().collect())
    } else {
        None
    }
}

/// Inclusion-minimal justification set for `a` with signature `sig`: the
/// union of one witness per positive view, then greedy tuple removal in
/// canonical order while all positive views stay witnessed.
fn minimal_justification(
    model: &Structure,
    views: &ViewSet,
    a: &Const,
    sig: ClassSignature,
) -> Result<Facts> {
    let mut facts: Facts = BTreeSet::new();
    for (j, view) in views.views.iter().enumerate() {
        if sig.get(j) {
            let w = witness_tuples(view, model, a).ok_or_else(|| {
                Error::Construction(format!(
                    "no witness for {a} in view {} despite its class bit",
                    view.name
                ))
            })?;
            facts.extend(w);
        }
    }
    let positives: Vec<usize> = (0..views.n()).filter(|&j| sig.get(j)).collect();
    let check = |facts: &Facts| -> Result<bool> {
        if facts.is_empty() {
            return Ok(positives.is_empty());
        }
        let sub = facts_structure(model.vocab(), facts, Some(a))?;
        for &j in &positives {
            if !eval_view(&views.views[j], &sub)?.contains(a) {
                return Ok(false);
            }
        }
        Ok(true)
    };
    loop {
        let mut shrunk = false;
        for fact in facts.clone() {
            let mut candidate = facts.clone();
            candidate.remove(&fact);
            if check(&candidate)? {
                facts = candidate;
                shrunk = true;
                break;
            }
        }
        if !shrunk {
            return Ok(facts);
        }
    }
}

/// Builds the justification forest of a finite model to the given depth:
/// one tree per realized class, children for every non-anchor constant of a
/// node's justification set.
pub fn make_jf(model: &Structure, views: &ViewSet, depth: usize) -> Result<JustificationForest> {
    let table = class_table(model, views)?;
    if table.realized.iter().any(|s| s.bits == 0) {
        return Err(Error::Precondition(
            "some element belongs to no view; add a universe relation first".into(),
        ));
    }

    fn build(
        model: &Structure,
        views: &ViewSet,
        table: &crate::eval::ClassTable,
        anchor: &Const,
        level: usize,
        depth: usize,
    ) -> Result<JustificationNode> {
        let class = table.signature_of(anchor).expect("anchor is in the model");
        let facts = minimal_justification(model, views, anchor, class)?;
        let mut children = Vec::new();
        if level < depth {
            for c in facts_adom(&facts) {
                if c != *anchor {
                    children.push(build(model, views, table, &c, level + 1, depth)?);
                }
            }
        }
        Ok(JustificationNode { anchor: anchor.clone(), class, facts, children })
    }

    let mut trees = Vec::new();
    for sig in &table.realized {
        // Canonical witnessing constant: the least element of the class.
        let anchor = table
            .classes
            .iter()
            .find(|(_, s)| *s == sig)
            .map(|(c, _)| c.clone())
            .expect("realized class has a member");
        trees.push(build(model, views, &table, &anchor, 0, depth)?);
    }
    Ok(JustificationForest { vocab: model.vocab().clone(), trees, depth })
}

/// Adds a fresh unary "universe" relation holding every element, so that no
/// class signature is all-negative. Returns the augmented model and the
/// relation name.
pub fn ensure_universe_relation(model: &Structure) -> Result<(Structure, String)> {
    let mut name = "U".to_string();
    let mut i = 0;
    while model.vocab().contains(&name) {
        i += 1;
        name = format!("U{i}");
    }
    let vocab = model.vocab().with_symbol(&name, 1)?;
    let mut facts: Vec<(String, Tuple)> = model
        .facts()
        .map(|(rel, t)| (rel.to_string(), t.clone()))
        .collect();
    for c in model.universe() {
        facts.push((name.clone(), vec![c.clone()]));
    }
    let augmented = Structure::from_facts(vocab, facts, Some(model.universe().clone()))?;
    Ok((augmented, name))
}

// ---------------------------------------------------------------------------
// rename1 / rename2 / copy
// ---------------------------------------------------------------------------

/// Makes tree domains pairwise disjoint by renaming each tree's constants
/// with a per-tree suffix.
pub fn rename1(forest: &JustificationForest) -> JustificationForest {
    let mut out = forest.clone();
    for (k, tree) in out.trees.iter_mut().enumerate() {
        let mut adom = BTreeSet::new();
        tree.walk(0, &mut |node, _| {
            adom.extend(facts_adom(&node.facts));
            adom.insert(node.anchor.clone());
        });
        let map: BTreeMap<Const, Const> = adom
            .into_iter()
            .map(|c| {
                let renamed = Const::new(format!("{}_t{k}", c.0));
                (c, renamed)
            })
            .collect();
        tree.rename(&map);
    }
    out
}

/// Restricts each constant to two consecutive levels (and one node label
/// per level) by renaming, per node, every non-anchor constant with that
/// node's (level, index) subscript and propagating to the child's anchor.
pub fn rename2(forest: &JustificationForest) -> JustificationForest {
    fn process(
        node: &mut JustificationNode,
        level: usize,
        counters: &mut BTreeMap<usize, usize>,
    ) {
        if level >= 1 {
            let l = counters.entry(level).or_insert(0);
            let idx = *l;
            *l += 1;
            let map: BTreeMap<Const, Const> = facts_adom(&node.facts)
                .into_iter()
                .filter(|c| *c != node.anchor)
                .map(|c| {
                    let renamed = Const::new(format!("{}_{level}_{idx}", c.0));
                    (c, renamed)
                })
                .collect();
            node.facts = rename_facts(&node.facts, &map);
            for child in &mut node.children {
                if let Some(renamed) = map.get(&child.anchor) {
                    let sub: BTreeMap<Const, Const> =
                        [(child.anchor.clone(), renamed.clone())].into();
                    child.facts = rename_facts(&child.facts, &sub);
                    child.anchor = renamed.clone();
                }
            }
        }
        for child in &mut node.children {
            process(child, level + 1, counters);
        }
    }
    let mut out = forest.clone();
    for tree in &mut out.trees {
        let mut counters = BTreeMap::new();
        process(tree, 0, &mut counters);
    }
    out
}

/// Δ disjoint isomorphic copies; copy 0 is the original.
pub fn copy_forest(forest: &JustificationForest, delta_cap: usize) -> Vec<JustificationForest> {
    let mut out = Vec::with_capacity(delta_cap);
    out.push(forest.clone());
    let adom = forest.adom();
    for k in 1..delta_cap {
        let map: BTreeMap<Const, Const> = adom
            .iter()
            .map(|c| (c.clone(), Const::new(format!("{}_k{k}", c.0))))
            .collect();
        let mut copy = forest.clone();
        for tree in &mut copy.trees {
            tree.rename(&map);
        }
        out.push(copy);
    }
    out
}

/// Union structure of a forest family.
pub fn family_structure(family: &[JustificationForest]) -> Result<Structure> {
    let vocab = family
        .first()
        .ok_or_else(|| Error::Input("empty forest family".into()))?
        .vocab
        .clone();
    let mut facts: Facts = BTreeSet::new();
    for forest in family {
        forest.for_each_node(|node, _| facts.extend(node.facts.iter().cloned()));
    }
    Structure::from_facts(vocab, facts.into_iter(), None)
}

// ---------------------------------------------------------------------------
// δ-regular girth-g graphs
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct RegularGraph {
    pub n: usize,
    pub delta: usize,
    pub girth_target: usize,
    /// Undirected edges, stored with the smaller endpoint first.
    pub edges: BTreeSet<(usize, usize)>,
    pub retries_used: usize,
}

impl RegularGraph {
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &(a, b) in &self.edges {
            if a == v {
                out.push(b);
            } else if b == v {
                out.push(a);
            }
        }
        out
    }

    pub fn degrees_ok(&self) -> bool {
        (0..self.n).all(|v| self.neighbors(v).len() == self.delta)
    }
}

/// BFS girth: length of the shortest cycle, `None` for forests. Also
/// returns one edge closing a shortest cycle.
pub fn girth(n: usize, edges: &BTreeSet<(usize, usize)>) -> (Option<usize>, Option<(usize, usize)>) {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut best: Option<usize> = None;
    let mut best_edge = None;
    for root in 0..n {
        let mut dist = vec![usize::MAX; n];
        let mut parent = vec![usize::MAX; n];
        dist[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    parent[w] = u;
                    queue.push_back(w);
                } else if parent[u] != w && parent[w] != u {
                    let len = dist[u] + dist[w] + 1;
                    if best.is_none_or(|b| len < b) {
                        best = Some(len);
                        best_edge = Some((u.min(w), u.max(w)));
                    }
                }
            }
        }
    }
    (best, best_edge)
}

/// Minimal Δ admissible for a δ-regular graph with girth ≥ g: Δ > δ, δ·Δ
/// even, the extremal lower bound when δ > 2, and Δ ≥ g when δ = 2 (a
/// 2-regular graph's girth is its shortest cycle length).
pub fn minimal_admissible_delta_cap(delta: usize, g: usize) -> usize {
    let mut cap = delta + 1;
    if delta == 1 {
        return 2;
    }
    if delta == 2 {
        cap = cap.max(g).max(3);
    }
    if delta > 2 {
        // ceil(((δ−1)^{g−1} − 1) / (δ − 2))
        let numer = (delta - 1).pow((g.max(1) - 1) as u32).saturating_sub(1);
        let bound = numer.div_ceil(delta - 2);
        cap = cap.max(bound);
    }
    while (delta * cap) % 2 != 0 {
        cap += 1;
    }
    cap
}

fn random_pairing(delta: usize, n: usize, rng: &mut ChaCha8Rng) -> Option<BTreeSet<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat(v).take(delta)).collect();
    stubs.shuffle(rng);
    let mut edges = BTreeSet::new();
    for pair in stubs.chunks(2) {
        let (a, b) = (pair[0], pair[1]);
        if a == b {
            return None; // self-loop
        }
        if !edges.insert((a.min(b), a.max(b))) {
            return None; // multi-edge
        }
    }
    Some(edges)
}

/// Randomized construction with edge-swap repair and bounded retries.
pub fn generate_regular_girth(
    delta: usize,
    g: usize,
    delta_cap: usize,
    seed: u64,
    max_retries: usize,
) -> Result<RegularGraph> {
    if delta < 1 || g < 1 {
        return Err(Error::Input("degree and girth target must be at least 1".into()));
    }
    if delta_cap <= delta {
        return Err(Error::Input(format!(
            "graph size {delta_cap} must exceed the degree {delta}"
        )));
    }
    if (delta * delta_cap) % 2 != 0 {
        return Err(Error::Input(format!(
            "parity violation: {delta}·{delta_cap} must be even"
        )));
    }
    if delta > 2 {
        let bound = (delta - 1).pow((g.max(1) - 1) as u32).saturating_sub(1).div_ceil(delta - 2);
        if delta_cap < bound {
            return Err(Error::Input(format!(
                "size {delta_cap} is below the extremal bound {bound} for degree {delta}, girth {g}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Degenerate degrees have deterministic witnesses: a perfect matching
    // (girth ∞) and a single cycle (girth = its length).
    if delta == 1 {
        if delta_cap % 2 != 0 {
            return Err(Error::Input("1-regular graphs need an even vertex count".into()));
        }
        let edges: BTreeSet<(usize, usize)> = (0..delta_cap / 2).map(|i| (2 * i, 2 * i + 1)).collect();
        return Ok(RegularGraph { n: delta_cap, delta, girth_target: g, edges, retries_used: 0 });
    }
    if delta == 2 {
        if delta_cap < g {
            return Err(Error::Input(format!(
                "a 2-regular graph on {delta_cap} vertices has girth at most {delta_cap} < {g}"
            )));
        }
        let mut order: Vec<usize> = (0..delta_cap).collect();
        order.shuffle(&mut rng);
        let edges: BTreeSet<(usize, usize)> = (0..delta_cap)
            .map(|i| {
                let (a, b) = (order[i], order[(i + 1) % delta_cap]);
                (a.min(b), a.max(b))
            })
            .collect();
        return Ok(RegularGraph { n: delta_cap, delta, girth_target: g, edges, retries_used: 0 });
    }

    for retry in 0..max_retries {
        let mut edges = loop {
            if let Some(e) = random_pairing(delta, delta_cap, &mut rng) {
                break e;
            }
        };
        // Edge-swap repair: break the shortest cycle by exchanging one of
        // its edges with a random disjoint edge; degrees are preserved.
        let mut ok = true;
        for _ in 0..200 * delta_cap {
            let (girth_now, closing) = girth(delta_cap, &edges);
            match girth_now {
                None => break,
                Some(len) if len >= g => break,
                Some(_) => {
                    let (u, v) = closing.expect("cycle implies a closing edge");
                    let all: Vec<(usize, usize)> = edges.iter().copied().collect();
                    let mut swapped = false;
                    for _ in 0..50 {
                        let &(x, y) = all.choose(&mut rng).expect("graph has edges");
                        let (x, y) = if rng.gen_bool(0.5) { (x, y) } else { (y, x) };
                        if [x, y].contains(&u) || [x, y].contains(&v) {
                            continue;
                        }
                        let e1 = (u.min(x), u.max(x));
                        let e2 = (v.min(y), v.max(y));
                        if edges.contains(&e1) || edges.contains(&e2) {
                            continue;
                        }
                        edges.remove(&(u.min(v), u.max(v)));
                        edges.remove(&(x.min(y), x.max(y)));
                        edges.insert(e1);
                        edges.insert(e2);
                        swapped = true;
                        break;
                    }
                    if !swapped {
                        ok = false;
                        break;
                    }
                }
            }
        }
        if ok {
            let graph = RegularGraph {
                n: delta_cap,
                delta,
                girth_target: g,
                edges,
                retries_used: retry,
            };
            let (girth_now, _) = girth(delta_cap, &graph.edges);
            if graph.degrees_ok() && girth_now.map_or(true, |x| x >= g) {
                return Ok(graph);
            }
        }
    }
    Err(Error::Resource(format!(
        "no {delta}-regular graph of size {delta_cap} with girth >= {g} found in {max_retries} retries"
    )))
}

// ---------------------------------------------------------------------------
// prune
// ---------------------------------------------------------------------------

/// Prunes each copy's level-h leaves and rejustifies them from root labels
/// of linked copies: leaf (anchor b, class C) routed along its out-arc to
/// copy k′ receives `S_c[b/c]` where `S_c` labels the root of class C in k′.
pub fn prune(
    family: &[JustificationForest],
    linkgraph: &RegularGraph,
    _views: &ViewSet,
) -> Result<Vec<JustificationForest>> {
    if family.len() != linkgraph.n {
        return Err(Error::Input(format!(
            "family size {} does not match link-graph size {}",
            family.len(),
            linkgraph.n
        )));
    }
    let depth = family[0].depth;
    // Root labels per copy, keyed by class.
    let mut roots: Vec<BTreeMap<ClassSignature, (Const, Facts)>> = Vec::new();
    for forest in family {
        let mut map = BTreeMap::new();
        for tree in &forest.trees {
            map.insert(tree.class, (tree.anchor.clone(), tree.facts.clone()));
        }
        roots.push(map);
    }

    let mut out = family.to_vec();
    for (k, forest) in out.iter_mut().enumerate() {
        let mut arcs: Vec<usize> = linkgraph.neighbors(k);
        arcs.sort_unstable();
        let leaves = forest.leaf_count();
        if leaves == 0 {
            continue;
        }
        if leaves != arcs.len() {
            return Err(Error::Input(format!(
                "copy {k} has {leaves} leaves but {} out-arcs; the out_k bijection is infeasible",
                arcs.len()
            )));
        }
        let mut next_arc = 0usize;
        fn relabel(
            node: &mut JustificationNode,
            level: usize,
            depth: usize,
            arcs: &[usize],
            next_arc: &mut usize,
            roots: &[BTreeMap<ClassSignature, (Const, Facts)>],
        ) -> Result<()> {
            if level == depth {
                let target = arcs[*next_arc];
                *next_arc += 1;
                let (c, s_c) = roots[target].get(&node.class).ok_or_else(|| {
                    Error::Construction(format!(
                        "leaf class {} has no root in linked copy {target}",
                        node.class
                    ))
                })?;
                let map: BTreeMap<Const, Const> = [(c.clone(), node.anchor.clone())].into();
                node.facts = rename_facts(s_c, &map);
                node.children.clear();
                return Ok(());
            }
            for child in &mut node.children {
                relabel(child, level + 1, depth, arcs, next_arc, roots)?;
            }
            Ok(())
        }
        for tree in &mut forest.trees {
            relabel(tree, 0, depth, &arcs, &mut next_arc, &roots)?;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Checkers
// ---------------------------------------------------------------------------

/// Invariant JS: every node's anchor has the labeled class in the ambient
/// structure, and the justification set alone witnesses each positive view.
pub fn check_invariant_js(
    family: &[JustificationForest],
    structure: &Structure,
    views: &ViewSet,
) -> Result<Vec<String>> {
    let table = class_table(structure, views)?;
    let mut violations = Vec::new();
    for (k, forest) in family.iter().enumerate() {
        let mut nodes: Vec<(&JustificationNode, usize)> = Vec::new();
        forest.for_each_node(|n, level| nodes.push((n, level)));
        for (node, level) in nodes {
            match table.signature_of(&node.anchor) {
                None => violations.push(format!(
                    "copy {k} level {level}: anchor {} missing from the structure",
                    node.anchor
                )),
                Some(sig) if sig != node.class => violations.push(format!(
                    "copy {k} level {level}: anchor {} labeled {} but has class {sig}",
                    node.anchor, node.class
                )),
                Some(_) => {}
            }
            if node.facts.is_empty() {
                violations.push(format!(
                    "copy {k} level {level}: empty justification set at {}",
                    node.anchor
                ));
                continue;
            }
            let sub = facts_structure(&forest.vocab, &node.facts, Some(&node.anchor))?;
            for (j, view) in views.views.iter().enumerate() {
                if node.class.get(j) && !eval_view(view, &sub)?.contains(&node.anchor) {
                    violations.push(format!(
                        "copy {k} level {level}: justification set at {} does not witness {}",
                        node.anchor, view.name
                    ));
                }
            }
        }
    }
    Ok(violations)
}

/// Signatures of anchored constants in the ambient structure. Frontier
/// constants (labels at the depth limit mention constants that anchor no
/// node) are excluded: their classes are an artifact of truncation.
pub fn anchored_realized(
    family: &[JustificationForest],
    structure: &Structure,
    views: &ViewSet,
) -> Result<BTreeSet<ClassSignature>> {
    let table = class_table(structure, views)?;
    let mut out = BTreeSet::new();
    for forest in family {
        let mut missing = None;
        forest.for_each_node(|node, _| match table.signature_of(&node.anchor) {
            Some(sig) => {
                out.insert(sig);
            }
            None => missing = Some(node.anchor.clone()),
        });
        if let Some(a) = missing {
            return Err(Error::Construction(format!("anchor {a} missing from the structure")));
        }
    }
    Ok(out)
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct PreservationReport {
    pub equal: bool,
    pub only_before: Vec<String>,
    pub only_after: Vec<String>,
}

/// Realized-signature-set equality: sufficient for agreement on all UCV
/// sentences over any subset of the view set.
pub fn check_class_preservation(
    before: &Structure,
    after: &Structure,
    views: &ViewSet,
) -> Result<PreservationReport> {
    let a = class_table(before, views)?.realized;
    let b = class_table(after, views)?.realized;
    Ok(PreservationReport {
        equal: a == b,
        only_before: a.difference(&b).map(|s| s.to_string()).collect(),
        only_after: b.difference(&a).map(|s| s.to_string()).collect(),
    })
}

/// rename2 postcondition: within each tree, every constant occurs in node
/// labels at no more than two consecutive levels, and in at most one node
/// label per level.
pub fn check_rename2_levels(forest: &JustificationForest) -> Vec<String> {
    let mut violations = Vec::new();
    for (t, tree) in forest.trees.iter().enumerate() {
        let mut occurrences: BTreeMap<Const, Vec<usize>> = BTreeMap::new();
        tree.walk(0, &mut |node, level| {
            for c in facts_adom(&node.facts) {
                occurrences.entry(c).or_default().push(level);
            }
        });
        for (c, mut levels) in occurrences {
            levels.sort_unstable();
            let distinct: BTreeSet<usize> = levels.iter().copied().collect();
            if distinct.len() > 2 {
                violations.push(format!("tree {t}: constant {c} spans levels {distinct:?}"));
            } else if distinct.len() == 2 {
                let lo = *distinct.iter().next().unwrap();
                let hi = *distinct.iter().last().unwrap();
                if hi != lo + 1 {
                    violations.push(format!(
                        "tree {t}: constant {c} occurs at non-consecutive levels {lo} and {hi}"
                    ));
                }
            }
            for level in &distinct {
                if levels.iter().filter(|&&l| l == *level).count() > 1 {
                    violations.push(format!(
                        "tree {t}: constant {c} occurs in several node labels at level {level}"
                    ));
                }
            }
        }
    }
    violations
}

// ---------------------------------------------------------------------------
// End-to-end pipeline
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct PipelineParams {
    pub c: usize,
    pub depth_override: Option<usize>,
    pub delta_cap_override: Option<usize>,
    pub seed: u64,
    pub enum_cap: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            c: 1,
            depth_override: None,
            delta_cap_override: None,
            seed: 0,
            enum_cap: 200_000,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub js_violations: Vec<String>,
    /// Anchored-constant realized classes equal the input model's realized
    /// classes (the frontier-truncation-safe per-stage statement).
    pub anchored_classes_preserved: bool,
    pub constants: usize,
    pub nodes: usize,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct PipelineOutcome {
    pub stages: Vec<StageReport>,
    pub final_model: Structure,
    pub final_preservation: PreservationReport,
    pub final_model_checks: bool,
    pub rename2_violations: Vec<String>,
    pub n_universe_views: usize,
    pub m: usize,
    pub h: usize,
    pub g: usize,
    pub delta: usize,
    pub delta_cap: usize,
    pub size_bound: BigUint,
    pub size_within_bound: bool,
    pub all_checks_passed: bool,
}

fn stage_report(
    name: &str,
    family: &[JustificationForest],
    views: &ViewSet,
    input_realized: &BTreeSet<ClassSignature>,
) -> Result<StageReport> {
    let structure = family_structure(family)?;
    let js_violations = check_invariant_js(family, &structure, views)?;
    let anchored = anchored_realized(family, &structure, views)?;
    Ok(StageReport {
        stage: name.to_string(),
        js_violations,
        anchored_classes_preserved: anchored == *input_realized,
        constants: structure.universe().len(),
        nodes: family.iter().map(|f| f.node_count()).sum(),
    })
}

/// Runs all five stages with checkers after each. Checker failures are
/// reported as diagnostics, not errors (parameter overrides may invalidate
/// the construction); hard construction failures are errors.
pub fn run_pipeline(
    model: &Structure,
    sentence: &UcvFormula,
    theory_views: &ViewSet,
    params: &PipelineParams,
) -> Result<PipelineOutcome> {
    if !model_check(sentence, theory_views, model)? {
        return Err(Error::Precondition(
            "the input model does not satisfy the sentence".into(),
        ));
    }
    let m = theory_views
        .views
        .iter()
        .map(|v| v.length())
        .max()
        .unwrap_or(1)
        .max(1);

    // Enumerate the complete view universe; add the universe relation if
    // some element would otherwise have an all-negative signature.
    let mut model0 = model.clone();
    let mut universe_views = enumerate_views(model0.vocab(), m, params.enum_cap)?;
    let table = class_table(&model0, &universe_views)?;
    if table.realized.iter().any(|s| s.bits == 0) {
        let (augmented, _) = ensure_universe_relation(&model0)?;
        model0 = augmented;
        universe_views = enumerate_views(model0.vocab(), m, params.enum_cap)?;
    }
    let n = universe_views.n();
    let input_realized = class_table(&model0, &universe_views)?.realized;

    let h = params.depth_override.unwrap_or(params.c * m);
    let g = params.c * m;

    let mut stages = Vec::new();

    let h1 = make_jf(&model0, &universe_views, h)?;
    stages.push(stage_report("makeJF", std::slice::from_ref(&h1), &universe_views, &input_realized)?);

    let h2 = rename1(&h1);
    stages.push(stage_report("rename1", std::slice::from_ref(&h2), &universe_views, &input_realized)?);

    let h3 = rename2(&h2);
    let rename2_violations = check_rename2_levels(&h3);
    stages.push(stage_report("rename2", std::slice::from_ref(&h3), &universe_views, &input_realized)?);

    let delta = h3.leaf_count();
    let (family, delta_cap, linkgraph) = if delta == 0 {
        (vec![h3.clone()], 1usize, None)
    } else {
        let delta_cap = params
            .delta_cap_override
            .unwrap_or_else(|| minimal_admissible_delta_cap(delta, g));
        let graph = generate_regular_girth(delta, g, delta_cap, params.seed, 100)?;
        (copy_forest(&h3, delta_cap), delta_cap, Some(graph))
    };
    stages.push(stage_report("copy", &family, &universe_views, &input_realized)?);

    let h5 = match &linkgraph {
        Some(graph) => prune(&family, graph, &universe_views)?,
        None => family.clone(),
    };
    stages.push(stage_report("prune", &h5, &universe_views, &input_realized)?);

    let final_model = family_structure(&h5)?;
    let final_preservation = check_class_preservation(&model0, &final_model, &universe_views)?;
    let final_model_checks = model_check(sentence, theory_views, &final_model)?;

    // |I₅| ≤ Δ · 2^N · (N·m)^{h+1}
    let size_bound = BigUint::from(delta_cap)
        * BigUint::from(2u32).pow(n as u32)
        * BigUint::from(n * m).pow((h + 1) as u32);
    let size_within_bound = BigUint::from(final_model.universe().len()) <= size_bound;

    let all_checks_passed = stages
        .iter()
        .all(|s| s.js_violations.is_empty() && s.anchored_classes_preserved)
        && rename2_violations.is_empty()
        && final_preservation.equal
        && final_model_checks
        && size_within_bound;

    Ok(PipelineOutcome {
        stages,
        final_model,
        final_preservation,
        final_model_checks,
        rename2_violations,
        n_universe_views: n,
        m,
        h,
        g,
        delta,
        delta_cap,
        size_bound,
        size_within_bound,
        all_checks_passed,
    })
}
