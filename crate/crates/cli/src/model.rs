//! Resolving a parsed document into library objects.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use polytree::omega::OmegaMorphism;
use polytree::presheaf::{
    nerve_n0, representable, sheaf_extend, Collection, FinitePresheaf, OpSpec, Site, SiteKind,
};
use polytree::tree::{certify_tree, Tree};
use polytree::{FinSet, PolyEndo};
use thiserror::Error;

use crate::syntax::{
    self, CollDecl, Document, Item, MapDecl, NodeDecl, PolyDecl, Pos, PresheafExpr, Spanned, SubtreeExpr,
    SyntaxError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("{pos}: {msg}")]
    Semantic { pos: Pos, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Library(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

fn semantic<T>(at: &Spanned, msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Semantic { pos: at.pos, msg: msg.into() })
}

pub fn lib_err(e: impl std::fmt::Display) -> CliError {
    CliError::Library(e.to_string())
}

/// Everything a document defines.
#[derive(Default)]
pub struct Env {
    pub doc: Document,
    pub polys: BTreeMap<String, PolyEndo>,
    pub trees: BTreeMap<String, Arc<Tree>>,
    pub colls: BTreeMap<String, Collection>,
    pub maps: BTreeMap<String, OmegaMorphism>,
    pub presheaves: BTreeMap<String, PresheafExpr>,
    sites: RefCell<HashMap<(SiteKind, usize), Arc<Site>>>,
}

fn unique(xs: &[Spanned], what: &str) -> Result<(), CliError> {
    let mut seen: HashMap<&str, Pos> = HashMap::new();
    for x in xs {
        if let Some(first) = seen.insert(&x.name, x.pos) {
            return semantic(x, format!("duplicate {what} `{}` (first at {first})", x.name));
        }
    }
    Ok(())
}

fn known(x: &Spanned, set: &HashSet<&str>, what: &str) -> Result<(), CliError> {
    if set.contains(x.name.as_str()) {
        Ok(())
    } else {
        semantic(x, format!("unknown {what} `{}`", x.name))
    }
}

fn build_poly(d: &PolyDecl) -> Result<PolyEndo, CliError> {
    unique(&d.edges, "edge")?;
    let names: Vec<Spanned> = d.nodes.iter().map(|n| n.name.clone()).collect();
    unique(&names, "node")?;
    let edges: HashSet<&str> = d.edges.iter().map(|e| e.name.as_str()).collect();
    for NodeDecl { inputs, output, .. } in &d.nodes {
        for i in inputs {
            known(i, &edges, "edge")?;
        }
        known(output, &edges, "edge")?;
    }
    let edge_names: Vec<&str> = d.edges.iter().map(|e| e.name.as_str()).collect();
    let nodes: Vec<(&str, Vec<&str>, &str)> = d
        .nodes
        .iter()
        .map(|n| {
            (
                n.name.name.as_str(),
                n.inputs.iter().map(|i| i.name.as_str()).collect(),
                n.output.name.as_str(),
            )
        })
        .collect();
    PolyEndo::from_spec(&edge_names, &nodes).or_else(|e| semantic(&d.name, e.to_string()))
}

fn build_coll(d: &CollDecl) -> Result<Collection, CliError> {
    unique(&d.colours, "colour")?;
    let names: Vec<Spanned> = d.ops.iter().map(|o| o.name.clone()).collect();
    unique(&names, "operation")?;
    let colours = FinSet::new(d.colours.iter().map(|c| c.name.as_str())).map_err(lib_err)?;
    let mut specs = Vec::new();
    for op in &d.ops {
        let index = |c: &Spanned| {
            colours
                .index_of_str(&c.name)
                .map_or_else(|| semantic(c, format!("unknown colour `{}`", c.name)), Ok)
        };
        let inputs = op.inputs.iter().map(index).collect::<Result<Vec<_>, _>>()?;
        let output = index(&op.output)?;
        let n = inputs.len();
        for p in &op.fixed_by {
            let mut sorted = p.clone();
            sorted.sort_unstable();
            if sorted != (0..n).collect::<Vec<_>>() {
                return semantic(&op.name, format!("{p:?} is not a permutation of {n} inputs"));
            }
        }
        specs.push(OpSpec { name: op.name.name.clone(), inputs, output, fixed_by: op.fixed_by.clone() });
    }
    Collection::generated(colours, &specs).or_else(|e| semantic(&d.name, e.to_string()))
}

impl Env {
    pub fn parse(input: &str) -> Result<Env, CliError> {
        Env::load(syntax::parse(input)?)
    }

    pub fn load(doc: Document) -> Result<Env, CliError> {
        let names: Vec<Spanned> = doc.items.iter().map(|i| i.name().clone()).collect();
        unique(&names, "definition")?;
        let mut env = Env::default();
        for item in &doc.items {
            match item {
                Item::Poly(d) => {
                    let p = build_poly(d)?;
                    if d.is_tree {
                        let t = certify_tree(&p).or_else(|e| {
                            let axiom = e.axiom().map(|a| format!(" ({a:?} axiom)")).unwrap_or_default();
                            semantic(&d.name, format!("`{}` is not a tree{axiom}: {e}", d.name.name))
                        })?;
                        env.trees.insert(d.name.name.clone(), Arc::new(t));
                    }
                    env.polys.insert(d.name.name.clone(), p);
                }
                Item::Coll(d) => {
                    env.colls.insert(d.name.name.clone(), build_coll(d)?);
                }
                Item::Map(_) | Item::Presheaf(_) => {}
            }
        }
        for item in &doc.items {
            match item {
                Item::Map(d) => {
                    let m = env.build_map(d)?;
                    env.maps.insert(d.name.name.clone(), m);
                }
                Item::Presheaf(d) => {
                    env.presheaves.insert(d.name.name.clone(), d.expr.clone());
                }
                _ => {}
            }
        }
        for item in &doc.items {
            if let Item::Presheaf(d) = item {
                env.check_expr(&d.expr, &mut vec![d.name.name.clone()])?;
            }
        }
        env.doc = doc;
        Ok(env)
    }

    pub fn tree(&self, name: &str) -> Result<&Arc<Tree>, CliError> {
        self.trees
            .get(name)
            .ok_or_else(|| CliError::Usage(format!("`{name}` is not a tree of the document")))
    }

    pub fn poly(&self, name: &str) -> Result<&PolyEndo, CliError> {
        self.polys
            .get(name)
            .ok_or_else(|| CliError::Usage(format!("`{name}` is not an endofunctor of the document")))
    }

    fn tree_ref(&self, x: &Spanned) -> Result<&Arc<Tree>, CliError> {
        self.trees
            .get(&x.name)
            .map_or_else(|| semantic(x, format!("`{}` is not a tree", x.name)), Ok)
    }

    fn build_map(&self, d: &MapDecl) -> Result<OmegaMorphism, CliError> {
        let s = self.tree_ref(&d.source)?.clone();
        let t = self.tree_ref(&d.target)?.clone();
        let mut edges = vec![None; s.edge_count()];
        for (a, b) in &d.edges {
            let i = s
                .poly()
                .p0()
                .index_of_str(&a.name)
                .map_or_else(|| semantic(a, format!("unknown edge `{}` of `{}`", a.name, d.source.name)), Ok)?;
            let j = t
                .poly()
                .p0()
                .index_of_str(&b.name)
                .map_or_else(|| semantic(b, format!("unknown edge `{}` of `{}`", b.name, d.target.name)), Ok)?;
            if edges[i].replace(j).is_some() {
                return semantic(a, format!("edge `{}` mapped twice", a.name));
            }
        }
        let edges: Vec<usize> = edges
            .into_iter()
            .enumerate()
            .map(|(i, e)| e.map_or_else(|| semantic(&d.name, format!("edge `{}` is not mapped", s.edge_label(i))), Ok))
            .collect::<Result<_, _>>()?;
        let phi = OmegaMorphism::from_edge_map(s.clone(), t.clone(), edges).or_else(|e| semantic(&d.name, e.to_string()))?;
        for (u, expr) in &d.nodes {
            let b = s
                .poly()
                .p1()
                .index_of_str(&u.name)
                .map_or_else(|| semantic(u, format!("unknown node `{}` of `{}`", u.name, d.source.name)), Ok)?;
            let given = match expr {
                SubtreeExpr::Edge(x) => {
                    let e = t
                        .poly()
                        .p0()
                        .index_of_str(&x.name)
                        .map_or_else(|| semantic(x, format!("unknown edge `{}`", x.name)), Ok)?;
                    Some(t.trivial_subtree(e))
                }
                SubtreeExpr::Nodes(ns) => {
                    let idx = ns
                        .iter()
                        .map(|n| {
                            t.poly()
                                .p1()
                                .index_of_str(&n.name)
                                .map_or_else(|| semantic(n, format!("unknown node `{}`", n.name)), Ok)
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    t.subtree_from_nodes(&idx)
                }
            };
            if given.as_ref() != Some(&phi.nodes[b]) {
                return semantic(u, format!("node `{}` is not sent to that subtree by the edge map", u.name));
            }
        }
        Ok(phi)
    }

    fn check_expr(&self, e: &PresheafExpr, stack: &mut Vec<String>) -> Result<(), CliError> {
        match e {
            PresheafExpr::Ref(x) => {
                let Some(inner) = self.presheaves.get(&x.name) else {
                    return semantic(x, format!("`{}` is not a presheaf", x.name));
                };
                if stack.contains(&x.name) {
                    return semantic(x, format!("presheaf `{}` is defined in terms of itself", x.name));
                }
                stack.push(x.name.clone());
                self.check_expr(inner, stack)?;
                stack.pop();
                Ok(())
            }
            PresheafExpr::Nerve(x) => {
                if self.polys.contains_key(&x.name) {
                    Ok(())
                } else {
                    semantic(x, format!("`{}` is not an endofunctor", x.name))
                }
            }
            PresheafExpr::Representable(x) => self.tree_ref(x).map(|_| ()),
            PresheafExpr::Extend(x) => {
                if self.colls.contains_key(&x.name) {
                    Ok(())
                } else {
                    semantic(x, format!("`{}` is not a collection", x.name))
                }
            }
            PresheafExpr::Doubled(inner, t) | PresheafExpr::ExtraCell(inner, t) => {
                self.tree_ref(t)?;
                self.check_expr(inner, stack)
            }
        }
    }

    pub fn site(&self, kind: SiteKind, max_edges: usize) -> Arc<Site> {
        self.sites
            .borrow_mut()
            .entry((kind, max_edges))
            .or_insert_with(|| Site::new(kind, max_edges))
            .clone()
    }

    fn site_kind(&self, e: &PresheafExpr) -> SiteKind {
        match e {
            PresheafExpr::Ref(x) => self.site_kind(&self.presheaves[&x.name]),
            PresheafExpr::Nerve(_) | PresheafExpr::Extend(_) => SiteKind::Embeddings,
            PresheafExpr::Representable(_) => SiteKind::Omega,
            PresheafExpr::Doubled(i, _) | PresheafExpr::ExtraCell(i, _) => self.site_kind(i),
        }
    }

    /// Builds a presheaf of the document on the site truncated at
    /// `max_edges`.
    pub fn presheaf(&self, name: &str, max_edges: usize) -> Result<FinitePresheaf, CliError> {
        let expr = self
            .presheaves
            .get(name)
            .ok_or_else(|| CliError::Usage(format!("`{name}` is not a presheaf of the document")))?;
        self.eval(expr, max_edges)
    }

    fn object_at(&self, site: &Site, t: &Spanned) -> Result<usize, CliError> {
        let tree = self.tree_ref(t)?;
        site.object_of(tree).ok_or_else(|| {
            CliError::Usage(format!(
                "tree `{}` has {} edges, beyond the truncation at {}",
                t.name,
                tree.edge_count(),
                site.max_edges
            ))
        })
    }

    fn eval(&self, e: &PresheafExpr, max_edges: usize) -> Result<FinitePresheaf, CliError> {
        let site = self.site(self.site_kind(e), max_edges);
        match e {
            PresheafExpr::Ref(x) => self.eval(&self.presheaves[&x.name], max_edges),
            PresheafExpr::Nerve(p) => nerve_n0(&self.polys[&p.name], &site).map_err(lib_err),
            PresheafExpr::Representable(t) => Ok(representable(&site, &self.trees[&t.name])),
            PresheafExpr::Extend(c) => sheaf_extend(&self.colls[&c.name], &site).map_err(lib_err),
            PresheafExpr::Doubled(inner, t) => {
                if site.kind != SiteKind::Embeddings {
                    return Err(CliError::Usage(
                        "doubling is only functorial on tree embeddings; use extra-cell".into(),
                    ));
                }
                let x = self.eval(inner, max_edges)?;
                let a = self.object_at(&site, t)?;
                if x.values[a].is_empty() {
                    return Err(CliError::Usage(format!("the presheaf is empty at `{}`, so doubling changes nothing", t.name)));
                }
                Ok(x.doubled_at(a))
            }
            PresheafExpr::ExtraCell(inner, t) => {
                let x = self.eval(inner, max_edges)?;
                x.with_extra_cell(self.object_at(&site, t)?)
                    .ok_or_else(|| CliError::Usage(format!("the presheaf is empty at `{}`", t.name)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semantic_errors_point_at_labels() {
        let err = Env::parse("tree T { edges: r l; node u : [m] -> r }").err().unwrap();
        assert!(matches!(err, CliError::Semantic { pos, .. } if pos == Pos { line: 1, col: 32 }));
        let err = Env::parse("poly P { edges: c c; }").err().unwrap();
        assert!(err.to_string().contains("duplicate edge"));
        let err = Env::parse("poly P { edges: c; }\npoly P { edges: d; }").err().unwrap();
        assert!(err.to_string().starts_with("2:6"));
        let err = Env::parse("tree T { edges: r; node u : [] -> r; node v : [] -> r }").err().unwrap();
        assert!(err.to_string().contains("OutputsDistinct"));
        assert!(Env::parse("presheaf X = doubled(X, T)").is_err());
    }

    #[test]
    fn maps_resolve() {
        let env = Env::parse(
            "tree S { edges: a b; node u : [b] -> a }\n\
             tree T { edges: r l; node v : [l] -> r }\n\
             map F : S -> T { edge a -> r; edge b -> l; node u -> {v} }\n\
             map D : S -> T { edge a -> r; edge b -> r; node u -> edge r }",
        )
        .unwrap();
        assert!(env.maps["F"].is_free());
        assert!(!env.maps["D"].is_injective());
        let err = Env::parse(
            "tree S { edges: a b; node u : [b] -> a }\n\
             map F : S -> S { edge a -> a; edge b -> a; node u -> {u} }",
        );
        assert!(err.is_err());
    }
}
