//! The commands. Each returns a text report, a JSON value and a verdict.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use polytree::omega::{
    contract, factor_generic_free, factor_surj_inj, hom_omega, triple_factor, FreeMonad, OmegaMorphism,
};
use polytree::polyend::compose;
use polytree::presheaf::{
    nerve_n0, nerve_r0, nerve_theorem_check, restrict_to_elementary, segal_check, Collection, FinitePresheaf,
    NerveVerdict, PresheafError, SegalVerdict, SiteKind,
};
use polytree::ptree::{all_tree_classes, enumerate_ptrees, undecorated_tree_classes};
use polytree::tree::{automorphisms, graft, Subtree, Tree};
use polytree::PolyEndo;
use serde_json::{json, Value};

use crate::model::{lib_err, CliError, Env};
use crate::syntax::{print_item, Item, MapDecl, NodeDecl, PolyDecl, Spanned, SubtreeExpr};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug)]
pub struct Bounds {
    pub max_edges: usize,
    pub max_nodes: usize,
}

#[derive(Debug)]
pub struct Report {
    pub text: String,
    pub json: Value,
    /// False verdicts exit with status 1.
    pub ok: bool,
}

impl Report {
    fn new(text: String, json: Value, ok: bool) -> Report {
        Report { text, json, ok }
    }
}

fn plural(n: usize, one: &str, many: &str) -> String {
    format!("{n} {}", if n == 1 { one } else { many })
}

pub fn poly_item(name: &str, p: &PolyEndo, is_tree: bool) -> Item {
    Item::Poly(PolyDecl {
        name: Spanned::new(name),
        is_tree,
        edges: p.p0().iter().map(|l| Spanned::new(l.as_str())).collect(),
        nodes: (0..p.p1().len())
            .map(|b| NodeDecl {
                name: Spanned::new(p.p1().label(b).as_str()),
                inputs: p.fibre(b).iter().map(|&m| Spanned::new(p.p0().label(p.s().apply(m)).as_str())).collect(),
                output: Spanned::new(p.p0().label(p.output(b)).as_str()),
            })
            .collect(),
    })
}

pub fn tree_text(name: &str, t: &Tree) -> String {
    print_item(&poly_item(name, t.poly(), true))
}

pub fn map_item(name: &str, source: &str, target: &str, phi: &OmegaMorphism) -> Item {
    let (s, t) = (&phi.source, &phi.target);
    Item::Map(MapDecl {
        name: Spanned::new(name),
        source: Spanned::new(source),
        target: Spanned::new(target),
        edges: phi
            .edges
            .iter()
            .enumerate()
            .map(|(e, &f)| (Spanned::new(s.edge_label(e).as_str()), Spanned::new(t.edge_label(f).as_str())))
            .collect(),
        nodes: phi
            .nodes
            .iter()
            .enumerate()
            .map(|(b, sub)| {
                let expr = if sub.is_trivial() {
                    SubtreeExpr::Edge(Spanned::new(t.edge_label(sub.root).as_str()))
                } else {
                    SubtreeExpr::Nodes(sub.nodes.iter().map(|&v| Spanned::new(t.node_label(v).as_str())).collect())
                };
                (Spanned::new(s.node_label(b).as_str()), expr)
            })
            .collect(),
    })
}

fn labels(t: &Tree, edges: &[usize]) -> Vec<String> {
    edges.iter().map(|&e| t.edge_label(e).to_string()).collect()
}

fn subtree_json(t: &Tree, s: &Subtree) -> Value {
    json!({
        "root": t.edge_label(s.root).as_str(),
        "leaves": labels(t, &s.leaves),
        "nodes": s.nodes.iter().map(|&v| t.node_label(v).to_string()).collect::<Vec<_>>(),
    })
}

fn edge_map_json(phi: &OmegaMorphism) -> Value {
    let map: BTreeMap<String, String> = phi
        .edges
        .iter()
        .enumerate()
        .map(|(e, &f)| (phi.source.edge_label(e).to_string(), phi.target.edge_label(f).to_string()))
        .collect();
    json!(map)
}

fn edge_map_text(phi: &OmegaMorphism) -> String {
    phi.edges
        .iter()
        .enumerate()
        .map(|(e, &f)| format!("{}->{}", phi.source.edge_label(e), phi.target.edge_label(f)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn edge_of(t: &Tree, name: &str) -> Result<usize, CliError> {
    t.edge_index(name).map_err(lib_err)
}

pub fn validate(env: &Env, name: &str, bounds: Bounds) -> Result<Report, CliError> {
    if let Some(t) = env.trees.get(name) {
        let text = format!(
            "tree: OK, {}, {}, {}",
            plural(t.edge_count(), "edge", "edges"),
            plural(t.node_count(), "node", "nodes"),
            plural(t.leaves().len(), "leaf", "leaves")
        );
        let json = json!({"kind": "tree", "valid": true, "edges": t.edge_count(), "nodes": t.node_count(), "leaves": t.leaves().len()});
        return Ok(Report::new(text, json, true));
    }
    if let Some(p) = env.polys.get(name) {
        let tree = polytree::tree::certify_tree(p);
        let mut text = format!(
            "poly: OK, {}, {}, {}",
            plural(p.p0().len(), "colour", "colours"),
            plural(p.p1().len(), "node", "nodes"),
            plural(p.p2().len(), "input", "inputs")
        );
        match &tree {
            Ok(_) => text.push_str("; satisfies the tree axioms"),
            Err(e) => write!(text, "; not a tree: {e}").unwrap(),
        }
        let json = json!({
            "kind": "poly", "valid": true, "colours": p.p0().len(), "nodes": p.p1().len(), "inputs": p.p2().len(),
            "tree": tree.is_ok(),
            "violated_axiom": tree.err().and_then(|e| e.axiom()).map(|a| format!("{a:?}")),
        });
        return Ok(Report::new(text, json, true));
    }
    if let Some(c) = env.colls.get(name) {
        c.check().map_err(lib_err)?;
        let sizes: BTreeMap<usize, usize> = c.ops.iter().map(|(&n, o)| (n, o.elements.len())).collect();
        let text = format!(
            "coll: OK, {}, operations per arity {:?}",
            plural(c.colours.len(), "colour", "colours"),
            sizes
        );
        return Ok(Report::new(text, json!({"kind": "coll", "valid": true, "sizes": sizes}), true));
    }
    if let Some(m) = env.maps.get(name) {
        let text = format!("map: OK, {}", m.describe());
        let json = json!({"kind": "map", "valid": true, "edges": edge_map_json(m)});
        return Ok(Report::new(text, json, true));
    }
    if env.presheaves.contains_key(name) {
        let x = env.presheaf(name, bounds.max_edges)?;
        return Ok(match x.check() {
            Ok(()) => Report::new(
                format!("presheaf: OK, functorial on {} trees", x.site.len()),
                json!({"kind": "presheaf", "valid": true, "objects": x.site.len()}),
                true,
            ),
            Err(e) => Report::new(
                format!("presheaf: not functorial: {e}"),
                json!({"kind": "presheaf", "valid": false, "reason": e.to_string()}),
                false,
            ),
        });
    }
    Err(CliError::Usage(format!("`{name}` is not defined")))
}

pub fn subtrees(env: &Env, name: &str, count: bool) -> Result<Report, CliError> {
    let t = env.tree(name)?;
    let subs = t.enumerate_subtrees();
    let text = if count {
        subs.len().to_string()
    } else {
        subs.iter()
            .map(|s| {
                format!(
                    "root {} leaves [{}] nodes [{}]",
                    t.edge_label(s.root),
                    labels(t, &s.leaves).join(", "),
                    s.nodes.iter().map(|&v| t.node_label(v).to_string()).collect::<Vec<_>>().join(", ")
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let json = json!({"count": subs.len(), "subtrees": subs.iter().map(|s| subtree_json(t, s)).collect::<Vec<_>>()});
    Ok(Report::new(text, json, true))
}

pub fn graft_cmd(env: &Env, upper: &str, lower: &str, leaf: &str, out_name: Option<&str>) -> Result<Report, CliError> {
    let (s, t) = (env.tree(upper)?, env.tree(lower)?);
    let g = graft(s, t, edge_of(t, leaf)?).map_err(lib_err)?;
    let name = out_name.map(str::to_string).unwrap_or_else(|| format!("{upper}_on_{lower}"));
    let text = tree_text(&name, &g.tree);
    let json = json!({"name": name, "canonical_form": g.tree.canonical_form(), "document": text});
    Ok(Report::new(text.trim_end().to_string(), json, true))
}

pub fn prune_cmd(env: &Env, name: &str, edge: &str) -> Result<Report, CliError> {
    let t = env.tree(name)?;
    let (pruned, _) = t.subtree_as_tree(&t.prune(edge_of(t, edge)?));
    let out = format!("{name}_pruned");
    let text = tree_text(&out, &pruned);
    let json = json!({"name": out, "canonical_form": pruned.canonical_form(), "document": text});
    Ok(Report::new(text.trim_end().to_string(), json, true))
}

pub fn contract_cmd(env: &Env, name: &str, edge: &str) -> Result<Report, CliError> {
    let t = env.tree(name)?;
    let (c, phi) = contract(t, edge_of(t, edge)?).map_err(lib_err)?;
    let out = format!("{name}_contracted");
    let mut text = tree_text(&out, &c);
    text.push('\n');
    text.push_str(&print_item(&map_item(&format!("{out}_inclusion"), &out, name, &phi)));
    let json = json!({"name": out, "canonical_form": c.canonical_form(), "inclusion": edge_map_json(&phi), "document": text});
    Ok(Report::new(text.trim_end().to_string(), json, true))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HomFilter {
    All,
    Injective,
    Surjective,
    BoundaryPreserving,
    Free,
}

pub fn hom(env: &Env, s: &str, t: &str, filter: HomFilter, count: bool) -> Result<Report, CliError> {
    let (a, b) = (env.tree(s)?, env.tree(t)?);
    let maps: Vec<OmegaMorphism> = hom_omega(a, b)
        .into_iter()
        .filter(|m| match filter {
            HomFilter::All => true,
            HomFilter::Injective => m.is_injective(),
            HomFilter::Surjective => m.is_surjective(),
            HomFilter::BoundaryPreserving => m.is_boundary_preserving(),
            HomFilter::Free => m.is_free(),
        })
        .collect();
    let text = if count {
        maps.len().to_string()
    } else {
        maps.iter()
            .map(|m| format!("{}  ({})", edge_map_text(m), m.describe()))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let json = json!({"count": maps.len(), "maps": maps.iter().map(edge_map_json).collect::<Vec<_>>()});
    Ok(Report::new(text, json, true))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    SurjInj,
    GenericFree,
    Triple,
}

pub fn factor(env: &Env, name: &str, kind: FactorKind) -> Result<Report, CliError> {
    let phi = env
        .maps
        .get(name)
        .ok_or_else(|| CliError::Usage(format!("`{name}` is not a map of the document")))?;
    let decl = env
        .doc
        .items
        .iter()
        .find_map(|i| match i {
            Item::Map(d) if d.name.name == name => Some(d),
            _ => None,
        })
        .unwrap();
    let (src, tgt) = (decl.source.name.as_str(), decl.target.name.as_str());
    let mut doc = String::new();
    let factors: Vec<(String, String, String, OmegaMorphism)> = match kind {
        FactorKind::SurjInj => {
            let f = factor_surj_inj(phi);
            let m = format!("{name}_mid");
            doc.push_str(&tree_text(&m, f.middle()));
            vec![
                (format!("{name}_surj"), src.to_string(), m.clone(), f.left),
                (format!("{name}_inj"), m, tgt.to_string(), f.right),
            ]
        }
        FactorKind::GenericFree => {
            let f = factor_generic_free(phi);
            let m = format!("{name}_mid");
            doc.push_str(&tree_text(&m, f.middle()));
            vec![
                (format!("{name}_generic"), src.to_string(), m.clone(), f.left),
                (format!("{name}_free"), m, tgt.to_string(), f.right),
            ]
        }
        FactorKind::Triple => {
            let (x, y, z) = triple_factor(phi);
            let (m1, m2) = (format!("{name}_mid1"), format!("{name}_mid2"));
            doc.push_str(&tree_text(&m1, &x.target));
            doc.push('\n');
            doc.push_str(&tree_text(&m2, &y.target));
            vec![
                (format!("{name}_surj"), src.to_string(), m1.clone(), x),
                (format!("{name}_generic_inj"), m1, m2.clone(), y),
                (format!("{name}_free"), m2, tgt.to_string(), z),
            ]
        }
    };
    let mut json_factors = Vec::new();
    for (n, a, b, f) in &factors {
        doc.push('\n');
        doc.push_str(&print_item(&map_item(n, a, b, f)));
        json_factors.push(json!({"name": n, "source": a, "target": b, "edges": edge_map_json(f), "kind": f.describe()}));
    }
    let json = json!({"factors": json_factors, "document": doc});
    Ok(Report::new(doc.trim_end().to_string(), json, true))
}

pub fn enumerate_trees(bounds: Bounds, stumps: bool) -> Result<Report, CliError> {
    let trees = if stumps {
        all_tree_classes(bounds.max_edges)
    } else {
        undecorated_tree_classes(bounds.max_edges)
    };
    let mut by_edges: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for t in &trees {
        by_edges.entry(t.edge_count()).or_default().push(t.canonical_form());
    }
    let mut text = String::new();
    for (e, forms) in &by_edges {
        writeln!(text, "{}: {}", plural(*e, "edge", "edges"), forms.len()).unwrap();
        for f in forms {
            writeln!(text, "  {f}").unwrap();
        }
    }
    let counts: BTreeMap<usize, usize> = by_edges.iter().map(|(&e, v)| (e, v.len())).collect();
    let json = json!({"max_edges": bounds.max_edges, "stumps": stumps, "counts": counts, "trees": by_edges});
    Ok(Report::new(text.trim_end().to_string(), json, true))
}

pub fn enumerate_ptrees_cmd(env: &Env, name: &str, bounds: Bounds) -> Result<Report, CliError> {
    let p = env.poly(name)?;
    let w = enumerate_ptrees(p, bounds.max_nodes, bounds.max_edges);
    let lambek = w.lambek_check();
    let rendered: Vec<String> = w.classes.iter().map(|c| c.render(p)).collect();
    let mut text = format!(
        "{} with at most {} and {}; by edges {:?}; fixpoint {}\n",
        plural(w.len(), "class", "classes"),
        plural(bounds.max_nodes, "node", "nodes"),
        plural(bounds.max_edges, "edge", "edges"),
        w.counts_by_edges(),
        if lambek { "closed" } else { "NOT closed" }
    );
    for r in &rendered {
        writeln!(text, "  {r}").unwrap();
    }
    let json = json!({
        "count": w.len(), "counts_by_edges": w.counts_by_edges(), "counts_by_nodes": w.counts_by_nodes(),
        "lambek": lambek, "trees": rendered,
    });
    Ok(Report::new(text.trim_end().to_string(), json, lambek))
}

pub fn automorphisms_cmd(env: &Env, name: &str) -> Result<Report, CliError> {
    let t = env.tree(name)?;
    let autos = automorphisms(t);
    let maps: Vec<String> = autos
        .iter()
        .map(|a| {
            a.edges
                .iter()
                .enumerate()
                .filter(|(e, f)| e != *f)
                .map(|(e, &f)| format!("{}->{}", t.edge_label(e), t.edge_label(f)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let mut text = plural(autos.len(), "automorphism", "automorphisms");
    for m in &maps {
        write!(text, "\n  {}", if m.is_empty() { "identity" } else { m }).unwrap();
    }
    Ok(Report::new(text, json!({"count": autos.len(), "moved_edges": maps}), true))
}

pub fn free_monad_cmd(env: &Env, name: &str, bounds: Bounds) -> Result<Report, CliError> {
    let m = match env.trees.get(name) {
        Some(t) => FreeMonad::of_tree(t),
        None => FreeMonad::new(env.poly(name)?, bounds.max_nodes, bounds.max_edges),
    };
    let unit = m.check_unit_laws();
    let assoc = m.check_associativity();
    let c = &m.carrier;
    let text = format!(
        "free monad: {} trees, {} marked trees, {}{}\nunit laws: {}\nassociativity: {}",
        c.p1().len(),
        c.p2().len(),
        plural(c.p0().len(), "colour", "colours"),
        if m.exact { "" } else { " (truncated)" },
        if unit { "hold" } else { "FAIL" },
        if assoc { "holds" } else { "FAILS" }
    );
    let json = json!({
        "trees": c.p1().len(), "marked_trees": c.p2().len(), "colours": c.p0().len(), "exact": m.exact,
        "unit_laws": unit, "associativity": assoc,
    });
    Ok(Report::new(text, json, unit && assoc))
}

pub fn compose_cmd(env: &Env, p: &str, q: &str) -> Result<Report, CliError> {
    let c = compose(env.poly(p)?, env.poly(q)?).map_err(lib_err)?;
    let name = format!("{p}_after_{q}");
    let text = print_item(&poly_item(&name, &c.poly, false));
    let json = json!({"name": name, "nodes": c.poly.p1().len(), "inputs": c.poly.p2().len(), "document": text});
    Ok(Report::new(text.trim_end().to_string(), json, true))
}

/// A presheaf named in the document, or the nerve of an endofunctor.
fn presheaf_arg(env: &Env, name: &str, bounds: Bounds) -> Result<FinitePresheaf, CliError> {
    if env.presheaves.contains_key(name) {
        return env.presheaf(name, bounds.max_edges);
    }
    let p = env
        .polys
        .get(name)
        .ok_or_else(|| CliError::Usage(format!("`{name}` is neither a presheaf nor an endofunctor")))?;
    nerve_n0(p, &env.site(SiteKind::Embeddings, bounds.max_edges)).map_err(lib_err)
}

fn values_json(x: &FinitePresheaf) -> Value {
    let map: BTreeMap<String, usize> = x
        .site
        .objects
        .iter()
        .zip(&x.values)
        .map(|(t, v)| (t.canonical_form(), v.len()))
        .collect();
    json!(map)
}

pub fn nerve_cmd(env: &Env, name: &str, bounds: Bounds) -> Result<Report, CliError> {
    let x = presheaf_arg(env, name, bounds)?;
    let mut text = String::new();
    for (t, v) in x.site.objects.iter().zip(&x.values) {
        writeln!(text, "{:<16} {}", t.canonical_form(), v.len()).unwrap();
    }
    let json = json!({"max_edges": bounds.max_edges, "values": values_json(&x)});
    Ok(Report::new(text.trim_end().to_string(), json, true))
}

pub fn segal_cmd(env: &Env, name: &str, bounds: Bounds) -> Result<Report, CliError> {
    let x = presheaf_arg(env, name, bounds)?;
    Ok(match segal_check(&x).map_err(lib_err)? {
        SegalVerdict::Holds => Report::new(
            format!("Segal condition holds on all {} trees", x.site.len()),
            json!({"holds": true}),
            true,
        ),
        SegalVerdict::Fails { witness, value_size, family_count, injective } => Report::new(
            format!(
                "Segal condition fails at {witness}: {} against {}{}",
                plural(value_size, "value", "values"),
                plural(family_count, "compatible family", "compatible families"),
                if injective { "" } else { "; comparison map not injective" }
            ),
            json!({"holds": false, "witness": witness, "values": value_size, "families": family_count, "injective": injective}),
            false,
        ),
    })
}

fn flat_report(c: &Collection) -> Report {
    match c.is_flat() {
        Ok(()) => Report::new("flat".into(), json!({"flat": true}), true),
        Err(PresheafError::NotFlat { arity, element, stabiliser }) => Report::new(
            format!("not flat: `{element}` in arity {arity} is fixed by {stabiliser:?}"),
            json!({"flat": false, "arity": arity, "element": element.as_str(), "stabiliser": stabiliser}),
            false,
        ),
        Err(e) => Report::new(e.to_string(), json!({"flat": false, "reason": e.to_string()}), false),
    }
}

pub fn flat_cmd(env: &Env, name: &str, bounds: Bounds) -> Result<Report, CliError> {
    if let Some(c) = env.colls.get(name) {
        return Ok(flat_report(c));
    }
    if env.presheaves.contains_key(name) {
        let x = env.presheaf(name, bounds.max_edges)?;
        return Ok(flat_report(&restrict_to_elementary(&x).map_err(lib_err)?));
    }
    Ok(flat_report(&nerve_r0(env.poly(name)?)))
}

pub fn nerve_theorem_cmd(env: &Env, name: &str, bounds: Bounds) -> Result<Report, CliError> {
    let x = presheaf_arg(env, name, bounds)?;
    Ok(match nerve_theorem_check(&x).map_err(lib_err)? {
        NerveVerdict::IsPolynomialMonadNerve { poly } => {
            let doc = print_item(&poly_item(&format!("{name}_poly"), &poly, false));
            Report::new(
                format!("a nerve, of\n{}", doc.trim_end()),
                json!({"nerve": true, "document": doc}),
                true,
            )
        }
        NerveVerdict::NotSegal(SegalVerdict::Fails { witness, .. }) => Report::new(
            format!("not a nerve: Segal condition fails at {witness}"),
            json!({"nerve": false, "reason": "segal", "witness": witness}),
            false,
        ),
        NerveVerdict::NotSegal(SegalVerdict::Holds) => unreachable!("a failing verdict"),
        NerveVerdict::NotFlat(e) => Report::new(
            format!("not a nerve: elementary part is not flat: {e}"),
            json!({"nerve": false, "reason": "flatness", "detail": e.to_string()}),
            false,
        ),
    })
}

/// One digraph per tree. Nodes are circles; each edge is an arc pointing
/// down towards the root, with invisible points for leaves and the root.
pub fn dot(name: &str, t: &Tree) -> String {
    let mut out = String::new();
    writeln!(out, "// tree {name}: the left-to-right order of inputs in the drawing is arbitrary and carries no meaning").unwrap();
    writeln!(out, "digraph \"{}\" {{", name.replace('"', "\\\"")).unwrap();
    writeln!(out, "  rankdir=TB;").unwrap();
    writeln!(out, "  node [shape=circle, label=\"\"];").unwrap();
    for v in 0..t.node_count() {
        writeln!(out, "  n{v} [xlabel=\"{}\"];", t.node_label(v).as_str().replace('"', "\\\"")).unwrap();
    }
    for e in 0..t.edge_count() {
        let label = t.edge_label(e).as_str().replace('"', "\\\"");
        let upper = match t.producer(e) {
            Some(v) => format!("n{v}"),
            None => {
                writeln!(out, "  top{e} [shape=point, style=invis];").unwrap();
                format!("top{e}")
            }
        };
        let lower = match t.parent_node(e) {
            Some(v) => format!("n{v}"),
            None => {
                writeln!(out, "  bottom{e} [shape=point, style=invis];").unwrap();
                format!("bottom{e}")
            }
        };
        writeln!(out, "  {upper} -> {lower} [label=\"{label}\"];").unwrap();
    }
    out.push_str("}\n");
    out
}

pub fn export_dot(env: &Env, names: &[String]) -> Result<Report, CliError> {
    let chosen: Vec<(String, Arc<Tree>)> = if names.is_empty() {
        env.trees.iter().map(|(n, t)| (n.clone(), t.clone())).collect()
    } else {
        names.iter().map(|n| Ok((n.clone(), env.tree(n)?.clone()))).collect::<Result<_, CliError>>()?
    };
    let graphs: Vec<String> = chosen.iter().map(|(n, t)| dot(n, t)).collect();
    let json = json!({"graphs": chosen.iter().map(|(n, _)| n).zip(&graphs).map(|(n, g)| json!({"name": n, "dot": g})).collect::<Vec<_>>()});
    Ok(Report::new(graphs.join("\n").trim_end().to_string(), json, true))
}
