//! The document format: tokens, syntax tree, parser and printer.
//!
//! ```text
//! # comment
//! poly P { edges: c; node b : [c, c] -> c }
//! tree T { edges: r l; node u : [l] -> r }
//! coll C { colours: c; op m : (c, c) -> c fixed-by: [1, 0] }
//! map F : S -> T { edge a -> x; edge b -> y; node u -> {v, w} }
//! presheaf X = doubled(nerve(P), T)
//! ```

use std::fmt::{self, Write as _};

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{pos}: {msg}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '\'' | '.' | '*' | '-' | '+' | '<' | '>' | '·')
}

fn lex(input: &str) -> Result<Vec<(Tok, Pos)>, SyntaxError> {
    let chars: Vec<char> = input.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                let ch = chars[i];
                advance(&mut i, &mut line, &mut col, ch);
            }
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            advance(&mut i, &mut line, &mut col, c);
            advance(&mut i, &mut line, &mut col, '>');
            out.push((Tok::Sym("->"), pos));
        } else if let Some(sym) = ["{", "}", "[", "]", "(", ")", ":", ";", ",", "="].into_iter().find(|s| s.starts_with(c)) {
            advance(&mut i, &mut line, &mut col, c);
            out.push((Tok::Sym(sym), pos));
        } else if c == '"' {
            advance(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(SyntaxError { pos, msg: "unterminated quoted label".into() });
                    }
                    Some('"') => {
                        advance(&mut i, &mut line, &mut col, '"');
                        break;
                    }
                    Some('\\') if matches!(chars.get(i + 1), Some('"') | Some('\\')) => {
                        s.push(chars[i + 1]);
                        advance(&mut i, &mut line, &mut col, '\\');
                        advance(&mut i, &mut line, &mut col, s.chars().last().unwrap());
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(&mut i, &mut line, &mut col, ch);
                    }
                }
            }
            out.push((Tok::Ident(s), pos));
        } else if is_ident_char(c) {
            let mut s = String::new();
            while i < chars.len() && is_ident_char(chars[i]) && !(chars[i] == '-' && chars.get(i + 1) == Some(&'>')) {
                let ch = chars[i];
                s.push(ch);
                advance(&mut i, &mut line, &mut col, ch);
            }
            out.push((Tok::Ident(s), pos));
        } else {
            return Err(SyntaxError { pos, msg: format!("unexpected character `{c}`") });
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

/// A name together with where it appeared.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Spanned {
    pub name: String,
    pub pos: Pos,
}

impl Spanned {
    pub fn new(name: impl Into<String>) -> Spanned {
        Spanned { name: name.into(), pos: Pos::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeDecl {
    pub name: Spanned,
    pub inputs: Vec<Spanned>,
    pub output: Spanned,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyDecl {
    pub name: Spanned,
    pub is_tree: bool,
    pub edges: Vec<Spanned>,
    pub nodes: Vec<NodeDecl>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpDecl {
    pub name: Spanned,
    pub inputs: Vec<Spanned>,
    pub output: Spanned,
    pub fixed_by: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollDecl {
    pub name: Spanned,
    pub colours: Vec<Spanned>,
    pub ops: Vec<OpDecl>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubtreeExpr {
    /// The subtree with these nodes.
    Nodes(Vec<Spanned>),
    /// The trivial subtree at an edge.
    Edge(Spanned),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapDecl {
    pub name: Spanned,
    pub source: Spanned,
    pub target: Spanned,
    pub edges: Vec<(Spanned, Spanned)>,
    pub nodes: Vec<(Spanned, SubtreeExpr)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PresheafExpr {
    /// A presheaf defined elsewhere in the document.
    Ref(Spanned),
    /// The nerve of an endofunctor, on tree embeddings.
    Nerve(Spanned),
    /// Maps into a tree, on the dendroidal site.
    Representable(Spanned),
    /// The extension of a collection, on tree embeddings.
    Extend(Spanned),
    /// The value at a tree doubled.
    Doubled(Box<PresheafExpr>, Spanned),
    /// One extra element per map onto a tree.
    ExtraCell(Box<PresheafExpr>, Spanned),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PresheafDecl {
    pub name: Spanned,
    pub expr: PresheafExpr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Item {
    Poly(PolyDecl),
    Coll(CollDecl),
    Map(MapDecl),
    Presheaf(PresheafDecl),
}

impl Item {
    pub fn name(&self) -> &Spanned {
        match self {
            Item::Poly(d) => &d.name,
            Item::Coll(d) => &d.name,
            Item::Map(d) => &d.name,
            Item::Presheaf(d) => &d.name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Document {
    pub items: Vec<Item>,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError { pos: self.pos(), msg: msg.into() })
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == w)
    }

    fn sym(&mut self, s: &str) -> Result<(), SyntaxError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", self.peek()))
        }
    }

    fn ident(&mut self) -> Result<Spanned, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let pos = self.pos();
                self.bump();
                Ok(Spanned { name, pos })
            }
            other => self.err(format!("expected a name, found {other}")),
        }
    }

    fn number(&mut self) -> Result<usize, SyntaxError> {
        let pos = self.pos();
        let id = self.ident()?;
        id.name
            .parse()
            .map_err(|_| SyntaxError { pos, msg: format!("expected a number, found `{}`", id.name) })
    }

    /// Names separated by commas, up to (not including) `close`.
    fn list(&mut self, close: &str) -> Result<Vec<Spanned>, SyntaxError> {
        let mut out = Vec::new();
        if self.is_sym(close) {
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            if self.is_sym(",") {
                self.bump();
            } else {
                return Ok(out);
            }
        }
    }

    /// Names separated by whitespace, up to `;` or `}`.
    fn words(&mut self) -> Result<Vec<Spanned>, SyntaxError> {
        let mut out = Vec::new();
        while let Tok::Ident(_) = self.peek() {
            out.push(self.ident()?);
        }
        Ok(out)
    }

    /// Statements inside braces, separated by `;`.
    fn block(&mut self, mut stmt: impl FnMut(&mut Parser) -> Result<(), SyntaxError>) -> Result<(), SyntaxError> {
        self.sym("{")?;
        loop {
            while self.is_sym(";") {
                self.bump();
            }
            if self.is_sym("}") {
                self.bump();
                return Ok(());
            }
            stmt(self)?;
            if !self.is_sym(";") && !self.is_sym("}") {
                return self.err(format!("expected `;` or `}}`, found {}", self.peek()));
            }
        }
    }

    fn poly(&mut self, is_tree: bool) -> Result<PolyDecl, SyntaxError> {
        self.bump();
        let name = self.ident()?;
        let mut edges = Vec::new();
        let mut nodes = Vec::new();
        self.block(|p| {
            if p.is_word("edges") {
                p.bump();
                p.sym(":")?;
                edges.extend(p.words()?);
            } else if p.is_word("node") {
                p.bump();
                let name = p.ident()?;
                p.sym(":")?;
                p.sym("[")?;
                let inputs = p.list("]")?;
                p.sym("]")?;
                p.sym("->")?;
                let output = p.ident()?;
                nodes.push(NodeDecl { name, inputs, output });
            } else {
                return p.err(format!("expected `edges` or `node`, found {}", p.peek()));
            }
            Ok(())
        })?;
        Ok(PolyDecl { name, is_tree, edges, nodes })
    }

    fn perm(&mut self) -> Result<Vec<usize>, SyntaxError> {
        self.sym("[")?;
        let mut out = Vec::new();
        if !self.is_sym("]") {
            loop {
                out.push(self.number()?);
                if self.is_sym(",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.sym("]")?;
        Ok(out)
    }

    fn coll(&mut self) -> Result<CollDecl, SyntaxError> {
        self.bump();
        let name = self.ident()?;
        let mut colours = Vec::new();
        let mut ops = Vec::new();
        self.block(|p| {
            if p.is_word("colours") {
                p.bump();
                p.sym(":")?;
                colours.extend(p.words()?);
            } else if p.is_word("op") {
                p.bump();
                let name = p.ident()?;
                p.sym(":")?;
                p.sym("(")?;
                let inputs = p.list(")")?;
                p.sym(")")?;
                p.sym("->")?;
                let output = p.ident()?;
                let mut fixed_by = Vec::new();
                if p.is_word("fixed-by") {
                    p.bump();
                    p.sym(":")?;
                    while p.is_sym("[") {
                        fixed_by.push(p.perm()?);
                    }
                }
                ops.push(OpDecl { name, inputs, output, fixed_by });
            } else {
                return p.err(format!("expected `colours` or `op`, found {}", p.peek()));
            }
            Ok(())
        })?;
        Ok(CollDecl { name, colours, ops })
    }

    fn map(&mut self) -> Result<MapDecl, SyntaxError> {
        self.bump();
        let name = self.ident()?;
        self.sym(":")?;
        let source = self.ident()?;
        self.sym("->")?;
        let target = self.ident()?;
        let mut edges = Vec::new();
        let mut nodes = Vec::new();
        self.block(|p| {
            if p.is_word("edge") {
                p.bump();
                let a = p.ident()?;
                p.sym("->")?;
                edges.push((a, p.ident()?));
            } else if p.is_word("node") {
                p.bump();
                let u = p.ident()?;
                p.sym("->")?;
                let expr = if p.is_sym("{") {
                    p.bump();
                    let ns = p.list("}")?;
                    p.sym("}")?;
                    SubtreeExpr::Nodes(ns)
                } else if p.is_word("edge") {
                    p.bump();
                    SubtreeExpr::Edge(p.ident()?)
                } else {
                    return p.err(format!("expected `{{` or `edge`, found {}", p.peek()));
                };
                nodes.push((u, expr));
            } else {
                return p.err(format!("expected `edge` or `node`, found {}", p.peek()));
            }
            Ok(())
        })?;
        Ok(MapDecl { name, source, target, edges, nodes })
    }

    fn presheaf_expr(&mut self) -> Result<PresheafExpr, SyntaxError> {
        let head = self.ident()?;
        if !self.is_sym("(") {
            return Ok(PresheafExpr::Ref(head));
        }
        self.bump();
        let expr = match head.name.as_str() {
            "nerve" => PresheafExpr::Nerve(self.ident()?),
            "representable" => PresheafExpr::Representable(self.ident()?),
            "extend" => PresheafExpr::Extend(self.ident()?),
            "doubled" | "extra-cell" => {
                let inner = self.presheaf_expr()?;
                self.sym(",")?;
                let at = self.ident()?;
                if head.name == "doubled" {
                    PresheafExpr::Doubled(Box::new(inner), at)
                } else {
                    PresheafExpr::ExtraCell(Box::new(inner), at)
                }
            }
            other => {
                return Err(SyntaxError {
                    pos: head.pos,
                    msg: format!("unknown presheaf constructor `{other}`"),
                })
            }
        };
        self.sym(")")?;
        Ok(expr)
    }

    fn presheaf(&mut self) -> Result<PresheafDecl, SyntaxError> {
        self.bump();
        let name = self.ident()?;
        self.sym("=")?;
        let expr = self.presheaf_expr()?;
        if self.is_sym(";") {
            self.bump();
        }
        Ok(PresheafDecl { name, expr })
    }

    fn document(&mut self) -> Result<Document, SyntaxError> {
        let mut items = Vec::new();
        loop {
            let item = match self.peek() {
                Tok::Eof => return Ok(Document { items }),
                Tok::Ident(w) if w == "poly" => Item::Poly(self.poly(false)?),
                Tok::Ident(w) if w == "tree" => Item::Poly(self.poly(true)?),
                Tok::Ident(w) if w == "coll" => Item::Coll(self.coll()?),
                Tok::Ident(w) if w == "map" => Item::Map(self.map()?),
                Tok::Ident(w) if w == "presheaf" => Item::Presheaf(self.presheaf()?),
                other => {
                    return self.err(format!(
                        "expected `poly`, `tree`, `coll`, `map` or `presheaf`, found {other}"
                    ))
                }
            };
            items.push(item);
        }
    }
}

pub fn parse(input: &str) -> Result<Document, SyntaxError> {
    let toks = lex(input)?;
    Parser { toks, i: 0 }.document()
}

const KEYWORDS: [&str; 11] = [
    "poly", "tree", "coll", "map", "presheaf", "edges", "node", "colours", "op", "edge", "fixed-by",
];

/// A label as it must be written to parse back to itself.
pub fn quote(s: &str) -> String {
    let plain = !s.is_empty()
        && s.chars().all(is_ident_char)
        && !s.contains("->")
        && !KEYWORDS.contains(&s);
    if plain {
        s.to_string()
    } else {
        format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

fn names(xs: &[Spanned]) -> Vec<String> {
    xs.iter().map(|x| quote(&x.name)).collect()
}

fn print_expr(e: &PresheafExpr, out: &mut String) {
    match e {
        PresheafExpr::Ref(x) => out.push_str(&quote(&x.name)),
        PresheafExpr::Nerve(x) => write!(out, "nerve({})", quote(&x.name)).unwrap(),
        PresheafExpr::Representable(x) => write!(out, "representable({})", quote(&x.name)).unwrap(),
        PresheafExpr::Extend(x) => write!(out, "extend({})", quote(&x.name)).unwrap(),
        PresheafExpr::Doubled(inner, t) | PresheafExpr::ExtraCell(inner, t) => {
            out.push_str(if matches!(e, PresheafExpr::Doubled(..)) { "doubled(" } else { "extra-cell(" });
            print_expr(inner, out);
            write!(out, ", {})", quote(&t.name)).unwrap();
        }
    }
}

pub fn print_item(item: &Item) -> String {
    let mut out = String::new();
    match item {
        Item::Poly(d) => {
            let kw = if d.is_tree { "tree" } else { "poly" };
            writeln!(out, "{kw} {} {{", quote(&d.name.name)).unwrap();
            writeln!(out, "  edges: {};", names(&d.edges).join(" ")).unwrap();
            for n in &d.nodes {
                writeln!(
                    out,
                    "  node {} : [{}] -> {};",
                    quote(&n.name.name),
                    names(&n.inputs).join(", "),
                    quote(&n.output.name)
                )
                .unwrap();
            }
            out.push_str("}\n");
        }
        Item::Coll(d) => {
            writeln!(out, "coll {} {{", quote(&d.name.name)).unwrap();
            writeln!(out, "  colours: {};", names(&d.colours).join(" ")).unwrap();
            for op in &d.ops {
                write!(
                    out,
                    "  op {} : ({}) -> {}",
                    quote(&op.name.name),
                    names(&op.inputs).join(", "),
                    quote(&op.output.name)
                )
                .unwrap();
                if !op.fixed_by.is_empty() {
                    out.push_str(" fixed-by:");
                    for p in &op.fixed_by {
                        let parts: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                        write!(out, " [{}]", parts.join(", ")).unwrap();
                    }
                }
                out.push_str(";\n");
            }
            out.push_str("}\n");
        }
        Item::Map(d) => {
            writeln!(
                out,
                "map {} : {} -> {} {{",
                quote(&d.name.name),
                quote(&d.source.name),
                quote(&d.target.name)
            )
            .unwrap();
            for (a, b) in &d.edges {
                writeln!(out, "  edge {} -> {};", quote(&a.name), quote(&b.name)).unwrap();
            }
            for (u, e) in &d.nodes {
                match e {
                    SubtreeExpr::Nodes(ns) => writeln!(out, "  node {} -> {{{}}};", quote(&u.name), names(ns).join(", ")),
                    SubtreeExpr::Edge(x) => writeln!(out, "  node {} -> edge {};", quote(&u.name), quote(&x.name)),
                }
                .unwrap();
            }
            out.push_str("}\n");
        }
        Item::Presheaf(d) => {
            write!(out, "presheaf {} = ", quote(&d.name.name)).unwrap();
            print_expr(&d.expr, &mut out);
            out.push_str(";\n");
        }
    }
    out
}

pub fn print(doc: &Document) -> String {
    doc.items.iter().map(print_item).collect::<Vec<_>>().join("\n")
}

/// Drops positions, so documents can be compared up to layout.
pub fn strip_positions(doc: &Document) -> Document {
    parse(&print(doc)).map(|d| erase(&d)).unwrap_or_default()
}

fn erase(doc: &Document) -> Document {
    fn s(x: &Spanned) -> Spanned {
        Spanned::new(x.name.clone())
    }
    fn ss(xs: &[Spanned]) -> Vec<Spanned> {
        xs.iter().map(s).collect()
    }
    fn expr(e: &PresheafExpr) -> PresheafExpr {
        match e {
            PresheafExpr::Ref(x) => PresheafExpr::Ref(s(x)),
            PresheafExpr::Nerve(x) => PresheafExpr::Nerve(s(x)),
            PresheafExpr::Representable(x) => PresheafExpr::Representable(s(x)),
            PresheafExpr::Extend(x) => PresheafExpr::Extend(s(x)),
            PresheafExpr::Doubled(i, t) => PresheafExpr::Doubled(Box::new(expr(i)), s(t)),
            PresheafExpr::ExtraCell(i, t) => PresheafExpr::ExtraCell(Box::new(expr(i)), s(t)),
        }
    }
    Document {
        items: doc
            .items
            .iter()
            .map(|item| match item {
                Item::Poly(d) => Item::Poly(PolyDecl {
                    name: s(&d.name),
                    is_tree: d.is_tree,
                    edges: ss(&d.edges),
                    nodes: d
                        .nodes
                        .iter()
                        .map(|n| NodeDecl { name: s(&n.name), inputs: ss(&n.inputs), output: s(&n.output) })
                        .collect(),
                }),
                Item::Coll(d) => Item::Coll(CollDecl {
                    name: s(&d.name),
                    colours: ss(&d.colours),
                    ops: d
                        .ops
                        .iter()
                        .map(|o| OpDecl {
                            name: s(&o.name),
                            inputs: ss(&o.inputs),
                            output: s(&o.output),
                            fixed_by: o.fixed_by.clone(),
                        })
                        .collect(),
                }),
                Item::Map(d) => Item::Map(MapDecl {
                    name: s(&d.name),
                    source: s(&d.source),
                    target: s(&d.target),
                    edges: d.edges.iter().map(|(a, b)| (s(a), s(b))).collect(),
                    nodes: d
                        .nodes
                        .iter()
                        .map(|(u, e)| {
                            (
                                s(u),
                                match e {
                                    SubtreeExpr::Nodes(ns) => SubtreeExpr::Nodes(ss(ns)),
                                    SubtreeExpr::Edge(x) => SubtreeExpr::Edge(s(x)),
                                },
                            )
                        })
                        .collect(),
                }),
                Item::Presheaf(d) => Item::Presheaf(PresheafDecl { name: s(&d.name), expr: expr(&d.expr) }),
            })
            .collect(),
    }
}
