//! Text formats: `.ucv` theory files (vocabulary + views + query) and
//! `.facts` databases, with canonical renderers.
//!
//! Statements end with `.`; comments run from `#` to end of line. The
//! connective sugar `|`, `->`, `<->`, `forall` is desugared at parse time
//! into the `!` / `&` / `exists` core, so `parse(render(x)) == x` holds
//! structurally.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::logic::{
    Atom, ConjunctiveView, Const, Dialect, Extra, Structure, Tuple, UcvFormula, Var, ViewSet,
    Vocabulary,
};

/// A fully resolved theory: vocabulary, views, query, inferred dialect.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct Theory {
    pub vocab: Vocabulary,
    pub views: ViewSet,
    pub query: UcvFormula,
    pub dialect: Dialect,
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
enum Tok {
    Ident(String),
    Dot,
    Comma,
    LParen,
    RParen,
    Slash,
    Arrow,     // <-
    Iff,       // <->
    Implies,   // ->
    Neq,       // !=
    Bang,      // !
    Amp,       // &
    Pipe,      // |
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    macro_rules! push {
        ($tok:expr, $c:expr) => {
            out.push(Spanned { tok: $tok, line, col: $c })
        };
    }
    while let Some(&c) = chars.peek() {
        let start_col = col;
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '.' => {
                chars.next();
                col += 1;
                push!(Tok::Dot, start_col);
            }
            ',' => {
                chars.next();
                col += 1;
                push!(Tok::Comma, start_col);
            }
            '(' => {
                chars.next();
                col += 1;
                push!(Tok::LParen, start_col);
            }
            ')' => {
                chars.next();
                col += 1;
                push!(Tok::RParen, start_col);
            }
            '/' => {
                chars.next();
                col += 1;
                push!(Tok::Slash, start_col);
            }
            '&' => {
                chars.next();
                col += 1;
                push!(Tok::Amp, start_col);
            }
            '|' => {
                chars.next();
                col += 1;
                push!(Tok::Pipe, start_col);
            }
            '<' => {
                chars.next();
                col += 1;
                if chars.peek() != Some(&'-') {
                    return Err(Error::Parse { line, col, msg: "expected '<-' or '<->'".into() });
                }
                chars.next();
                col += 1;
                if chars.peek() == Some(&'>') {
                    chars.next();
                    col += 1;
                    push!(Tok::Iff, start_col);
                } else {
                    push!(Tok::Arrow, start_col);
                }
            }
            '-' => {
                chars.next();
                col += 1;
                if chars.peek() != Some(&'>') {
                    return Err(Error::Parse { line, col, msg: "expected '->'".into() });
                }
                chars.next();
                col += 1;
                push!(Tok::Implies, start_col);
            }
            '!' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'=') {
                    chars.next();
                    col += 1;
                    push!(Tok::Neq, start_col);
                } else {
                    push!(Tok::Bang, start_col);
                }
            }
            c if c.is_alphanumeric() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '\'' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Ident(s), start_col);
            }
            other => {
                return Err(Error::Parse {
                    line,
                    col,
                    msg: format!("unexpected character {other:?}"),
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        Ok(Parser { toks: lex(text)?, pos: 0 })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos) {
            Some(s) => (s.line, s.col),
            None => self
                .toks
                .last()
                .map(|s| (s.line, s.col + 1))
                .unwrap_or((1, 1)),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let (line, col) = self.here();
        Error::Parse { line, col, msg: msg.into() }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: Tok) -> Result<()> {
        match self.peek() {
            Some(t) if *t == tok => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.err(format!("expected {tok:?}, found {t:?}"))),
            None => Err(self.err(format!("expected {tok:?}, found end of input"))),
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            Some(t) => Err(self.err(format!("expected identifier, found {t:?}"))),
            None => Err(self.err("expected identifier, found end of input")),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

fn parse_atom_args(p: &mut Parser) -> Result<Vec<Var>> {
    p.eat(Tok::LParen)?;
    let mut args = vec![Var::new(p.ident()?)];
    while p.peek() == Some(&Tok::Comma) {
        p.next();
        args.push(Var::new(p.ident()?));
    }
    p.eat(Tok::RParen)?;
    Ok(args)
}

/// Formula grammar, loosest-binding first:
/// iff < implies (right-assoc) < or < and < unary (!, exists x, forall x) < primary.
fn parse_formula(p: &mut Parser) -> Result<UcvFormula> {
    parse_iff(p)
}

fn parse_iff(p: &mut Parser) -> Result<UcvFormula> {
    let mut lhs = parse_implies(p)?;
    while p.peek() == Some(&Tok::Iff) {
        p.next();
        let rhs = parse_implies(p)?;
        lhs = UcvFormula::iff(lhs, rhs);
    }
    Ok(lhs)
}

fn parse_implies(p: &mut Parser) -> Result<UcvFormula> {
    let lhs = parse_or(p)?;
    if p.peek() == Some(&Tok::Implies) {
        p.next();
        let rhs = parse_implies(p)?;
        Ok(UcvFormula::implies(lhs, rhs))
    } else {
        Ok(lhs)
    }
}

fn parse_or(p: &mut Parser) -> Result<UcvFormula> {
    let mut lhs = parse_and(p)?;
    while p.peek() == Some(&Tok::Pipe) {
        p.next();
        let rhs = parse_and(p)?;
        lhs = UcvFormula::or(lhs, rhs);
    }
    Ok(lhs)
}

fn parse_and(p: &mut Parser) -> Result<UcvFormula> {
    let mut lhs = parse_unary(p)?;
    while p.peek() == Some(&Tok::Amp) {
        p.next();
        let rhs = parse_unary(p)?;
        lhs = UcvFormula::and(lhs, rhs);
    }
    Ok(lhs)
}

fn parse_unary(p: &mut Parser) -> Result<UcvFormula> {
    match p.peek() {
        Some(Tok::Bang) => {
            p.next();
            Ok(UcvFormula::not(parse_unary(p)?))
        }
        Some(Tok::Ident(kw)) if kw == "exists" || kw == "forall" => {
            let kw = kw.clone();
            p.next();
            let v = Var::new(p.ident()?);
            let body = parse_unary(p)?;
            Ok(if kw == "exists" {
                UcvFormula::exists(v, body)
            } else {
                UcvFormula::forall(v, body)
            })
        }
        _ => parse_primary(p),
    }
}

fn parse_primary(p: &mut Parser) -> Result<UcvFormula> {
    match p.peek() {
        Some(Tok::LParen) => {
            p.next();
            let f = parse_formula(p)?;
            p.eat(Tok::RParen)?;
            Ok(f)
        }
        Some(Tok::Ident(_)) => {
            let name = p.ident()?;
            p.eat(Tok::LParen)?;
            let v = Var::new(p.ident()?);
            p.eat(Tok::RParen)?;
            Ok(UcvFormula::view(name, v))
        }
        Some(t) => Err(p.err(format!("expected formula, found {t:?}"))),
        None => Err(p.err("expected formula, found end of input")),
    }
}

/// Parses a `.ucv` theory file into a resolved [`Theory`].
pub fn parse_theory(text: &str) -> Result<Theory> {
    let mut p = Parser::new(text)?;
    let mut rels: Vec<(String, usize)> = Vec::new();
    let mut views: Vec<ConjunctiveView> = Vec::new();
    let mut query: Option<UcvFormula> = None;
    let mut recursive = false;

    while !p.at_end() {
        let kw = p.ident()?;
        match kw.as_str() {
            "rel" => {
                let name = p.ident()?;
                p.eat(Tok::Slash)?;
                let arity_str = p.ident()?;
                let arity: usize = arity_str
                    .parse()
                    .map_err(|_| p.err(format!("invalid arity {arity_str}")))?;
                rels.push((name, arity));
            }
            "view" => {
                let name = p.ident()?;
                p.eat(Tok::LParen)?;
                let head = Var::new(p.ident()?);
                p.eat(Tok::RParen)?;
                p.eat(Tok::Arrow)?;
                let mut body = Vec::new();
                let mut extras = Vec::new();
                loop {
                    match p.peek() {
                        Some(Tok::Bang) => {
                            p.next();
                            let rel = p.ident()?;
                            let args = parse_atom_args(&mut p)?;
                            extras.push(Extra::NegAtom(Atom::new(rel, args)));
                        }
                        Some(Tok::Ident(_)) => {
                            let first = p.ident()?;
                            if p.peek() == Some(&Tok::Neq) {
                                p.next();
                                let second = p.ident()?;
                                extras.push(Extra::Neq(Var::new(first), Var::new(second)));
                            } else {
                                let args = parse_atom_args(&mut p)?;
                                body.push(Atom::new(first, args));
                            }
                        }
                        _ => return Err(p.err("expected body atom")),
                    }
                    if p.peek() == Some(&Tok::Comma) {
                        p.next();
                    } else {
                        break;
                    }
                }
                views.push(ConjunctiveView { name, head, body, extras });
            }
            "query" => {
                if query.is_some() {
                    return Err(p.err("multiple query statements"));
                }
                query = Some(parse_formula(&mut p)?);
            }
            other => return Err(p.err(format!("unknown statement keyword {other}"))),
        }
        p.eat(Tok::Dot)?;
    }

    let vocab = Vocabulary::new(rels)?;

    // A body atom naming a view instead of a relation marks the recursive
    // dialect, which is recognized but not executed.
    let view_names: BTreeSet<&str> = views.iter().map(|v| v.name.as_str()).collect();
    for view in &views {
        for atom in &view.body {
            if !vocab.contains(&atom.rel) && view_names.contains(atom.rel.as_str()) {
                recursive = true;
            }
        }
    }
    if !recursive {
        for view in &views {
            view.validate(&vocab)?;
        }
    }

    let query = query.ok_or_else(|| Error::Input("theory has no query statement".into()))?;
    let views = ViewSet::theory(views);
    for name in query.view_names() {
        if views.get(&name).is_none() {
            return Err(Error::Input(format!("query references undefined view {name}")));
        }
    }

    let dialect = if recursive { Dialect::UcvRec } else { views.dialect() };
    Ok(Theory { vocab, views, query, dialect })
}

/// Parses a `.facts` database against a declared vocabulary.
pub fn parse_facts(text: &str, vocab: &Vocabulary) -> Result<Structure> {
    let mut p = Parser::new(text)?;
    let mut facts: Vec<(String, Tuple)> = Vec::new();
    let mut universe: Option<BTreeSet<Const>> = None;
    while !p.at_end() {
        let head = p.ident()?;
        if head == "universe" {
            let mut u = universe.unwrap_or_default();
            while let Some(Tok::Ident(_)) = p.peek() {
                u.insert(Const::new(p.ident()?));
            }
            universe = Some(u);
        } else {
            if !vocab.contains(&head) {
                return Err(p.err(format!("unknown relation {head}")));
            }
            p.eat(Tok::LParen)?;
            let mut args = vec![Const::new(p.ident()?)];
            while p.peek() == Some(&Tok::Comma) {
                p.next();
                args.push(Const::new(p.ident()?));
            }
            p.eat(Tok::RParen)?;
            facts.push((head, args));
        }
        p.eat(Tok::Dot)?;
    }
    Structure::from_facts(vocab.clone(), facts, universe)
}

// ---------------------------------------------------------------------------
// Renderers
// ---------------------------------------------------------------------------

pub fn render_formula(f: &UcvFormula) -> String {
    // Core connectives only, fully parenthesized where binding is ambiguous,
    // so the round trip is exact.
    match f {
        UcvFormula::View(name, v) => format!("{name}({v})"),
        UcvFormula::Not(g) => format!("!{}", render_sub(g)),
        UcvFormula::And(a, b) => format!("{} & {}", render_sub(a), render_sub(b)),
        UcvFormula::Exists(v, g) => format!("exists {v} {}", render_sub(g)),
    }
}

fn render_sub(f: &UcvFormula) -> String {
    match f {
        UcvFormula::View(..) => render_formula(f),
        _ => format!("({})", render_formula(f)),
    }
}

pub fn render_view(view: &ConjunctiveView) -> String {
    let mut parts: Vec<String> = view
        .body
        .iter()
        .map(|a| {
            format!(
                "{}({})",
                a.rel,
                a.args.iter().map(|v| v.0.as_str()).collect::<Vec<_>>().join(",")
            )
        })
        .collect();
    for e in &view.extras {
        parts.push(match e {
            Extra::Neq(a, b) => format!("{a} != {b}"),
            Extra::NegAtom(atom) => format!(
                "!{}({})",
                atom.rel,
                atom.args.iter().map(|v| v.0.as_str()).collect::<Vec<_>>().join(",")
            ),
        });
    }
    format!("view {}({}) <- {}.", view.name, view.head, parts.join(", "))
}

pub fn render_theory(theory: &Theory) -> String {
    let mut out = String::new();
    for sym in theory.vocab.symbols() {
        out.push_str(&format!("rel {}/{}.\n", sym.name, sym.arity));
    }
    for view in &theory.views.views {
        out.push_str(&render_view(view));
        out.push('\n');
    }
    out.push_str(&format!("query {}.\n", render_formula(&theory.query)));
    out
}

/// Renders a structure as a `.facts` file: facts in lexicographic order,
/// plus a `universe` line when the universe exceeds the active domain.
pub fn render_facts(structure: &Structure) -> String {
    let mut out = String::new();
    if structure.adom() != *structure.universe() {
        let elems: Vec<&str> = structure.universe().iter().map(|c| c.0.as_str()).collect();
        out.push_str(&format!("universe {}.\n", elems.join(" ")));
    }
    for (rel, t) in structure.facts() {
        let args: Vec<&str> = t.iter().map(|c| c.0.as_str()).collect();
        out.push_str(&format!("{rel}({}).\n", args.join(",")));
    }
    out
}

/// Machine-readable export of any serializable value (stable key order:
/// struct fields in declaration order, maps in key order).
pub fn to_structured<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::Input(format!("serialization failed: {e}")))
}

/// Parses a view written standalone in rule notation, e.g.
/// `V(x) <- E(x,y), x != y.` (the `view` keyword and final `.` optional).
pub fn parse_view_rule(text: &str, vocab: &Vocabulary) -> Result<ConjunctiveView> {
    let text = text.trim();
    let text = text.strip_prefix("view").map(str::trim).unwrap_or(text);
    let text = text.strip_suffix('.').unwrap_or(text);
    let mut p = Parser::new(&format!("view {text}."))?;
    let kw = p.ident()?;
    if kw != "view" {
        return Err(p.err("expected view rule"));
    }
    let name = p.ident()?;
    p.eat(Tok::LParen)?;
    let head = Var::new(p.ident()?);
    p.eat(Tok::RParen)?;
    p.eat(Tok::Arrow)?;
    let mut body = Vec::new();
    let mut extras = Vec::new();
    loop {
        match p.peek() {
            Some(Tok::Bang) => {
                p.next();
                let rel = p.ident()?;
                let args = parse_atom_args(&mut p)?;
                extras.push(Extra::NegAtom(Atom::new(rel, args)));
            }
            Some(Tok::Ident(_)) => {
                let first = p.ident()?;
                if p.peek() == Some(&Tok::Neq) {
                    p.next();
                    let second = p.ident()?;
                    extras.push(Extra::Neq(Var::new(first), Var::new(second)));
                } else {
                    let args = parse_atom_args(&mut p)?;
                    body.push(Atom::new(first, args));
                }
            }
            _ => return Err(p.err("expected body atom")),
        }
        if p.peek() == Some(&Tok::Comma) {
            p.next();
        } else {
            break;
        }
    }
    p.eat(Tok::Dot)?;
    let view = ConjunctiveView { name, head, body, extras };
    view.validate(vocab)?;
    Ok(view)
}
