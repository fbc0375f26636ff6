//! The dendroidal category and free monads on polynomial endofunctors.
//!
//! A morphism `S -> T` here is a map of polynomial monads between free
//! monads on trees, which by adjunction is a map of endofunctors from `S`
//! into the free monad on `T`: each edge goes to an edge, and each node goes
//! to a subtree whose boundary is the image of the node's boundary. Such a
//! morphism is determined by its edge map.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use itertools::Itertools;
use thiserror::Error;

use crate::finset::{FinSet, Label};
use crate::polyend::{compose_nodes, identity_endofunctor, Composite, PolyEndo, PolyError, PolyMap};
use crate::ptree::{all_tree_classes, enumerate_ptrees, PTerm, PTree, PTreeClassSet};
use crate::tree::{
    are_isomorphic, certify_tree, hom_temb, isomorphisms, Embedding, Subtree, Tree, TreeError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OmegaError {
    #[error("`{0}` is not an inner edge")]
    NotInnerEdge(Label),
    #[error("expected a one-node tree")]
    NotOneNode,
    #[error("edge map is not induced by a morphism: {0}")]
    InvalidEdgeMap(String),
    #[error("result has {nodes} nodes and {edges} edges, beyond the bounds {max_nodes} nodes / {max_edges} edges")]
    BoundExceeded {
        nodes: usize,
        edges: usize,
        max_nodes: usize,
        max_edges: usize,
    },
    #[error("colours do not match")]
    ColourMismatch,
    #[error("morphisms are not composable")]
    NotComposable,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Subtrees and marked subtrees of a tree, with lookups by boundary.
#[derive(Clone, Debug)]
pub struct SubtreeIndex {
    pub subtrees: Vec<Subtree>,
    /// `(subtree, leaf)` pairs.
    pub marked: Vec<(usize, usize)>,
    by_boundary: HashMap<(usize, Vec<usize>), usize>,
    by_root_arity: HashMap<(usize, usize), Vec<usize>>,
    marked_lookup: HashMap<(usize, usize), usize>,
}

impl SubtreeIndex {
    pub fn new(t: &Tree) -> SubtreeIndex {
        let subtrees = t.enumerate_subtrees();
        let mut by_boundary = HashMap::new();
        let mut by_root_arity: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        let mut marked = Vec::new();
        let mut marked_lookup = HashMap::new();
        for (k, s) in subtrees.iter().enumerate() {
            by_boundary.insert((s.root, s.leaves.clone()), k);
            by_root_arity.entry((s.root, s.leaves.len())).or_default().push(k);
            for &l in &s.leaves {
                marked_lookup.insert((k, l), marked.len());
                marked.push((k, l));
            }
        }
        SubtreeIndex {
            subtrees,
            marked,
            by_boundary,
            by_root_arity,
            marked_lookup,
        }
    }

    pub fn index_of(&self, s: &Subtree) -> Option<usize> {
        self.by_boundary.get(&(s.root, s.leaves.clone())).copied()
    }

    pub fn with_boundary(&self, root: usize, leaves: &[usize]) -> Option<usize> {
        let mut leaves = leaves.to_vec();
        leaves.sort_unstable();
        self.by_boundary.get(&(root, leaves)).copied()
    }

    pub fn with_root_and_arity(&self, root: usize, arity: usize) -> &[usize] {
        self.by_root_arity.get(&(root, arity)).map_or(&[], |v| v.as_slice())
    }

    pub fn marked_index(&self, sub: usize, leaf: usize) -> Option<usize> {
        self.marked_lookup.get(&(sub, leaf)).copied()
    }
}

/// The free monad on a tree as an endofunctor: `T0 <- sub'(T) -> sub(T) -> T0`,
/// with subtrees and marks in [`SubtreeIndex`] order.
pub fn tree_monad_carrier(t: &Tree) -> (PolyEndo, SubtreeIndex) {
    let idx = SubtreeIndex::new(t);
    let name = |s: &Subtree| {
        format!(
            "{}<{}>",
            t.edge_label(s.root),
            s.leaves.iter().map(|&l| t.edge_label(l).as_str()).join(",")
        )
    };
    let p1 = FinSet::new(idx.subtrees.iter().map(name)).unwrap();
    let p2 = FinSet::new(
        idx.marked
            .iter()
            .map(|&(k, l)| format!("{}@{}", name(&idx.subtrees[k]), t.edge_label(l))),
    )
    .unwrap();
    let s = idx.marked.iter().map(|&(_, l)| l).collect();
    let p = idx.marked.iter().map(|&(k, _)| k).collect();
    let tt = idx.subtrees.iter().map(|s| s.root).collect();
    let poly = PolyEndo::from_indices(t.poly().p0().clone(), p1, p2, s, p, tt).unwrap();
    (poly, idx)
}

/// A morphism of the dendroidal category.
#[derive(Clone)]
pub struct OmegaMorphism {
    pub source: Arc<Tree>,
    pub target: Arc<Tree>,
    pub edges: Vec<usize>,
    /// Image subtree of each source node.
    pub nodes: Vec<Subtree>,
}

impl OmegaMorphism {
    /// The morphism with the given edge map, if there is one: each node's
    /// boundary must map to the boundary of a subtree.
    pub fn from_edge_map(source: Arc<Tree>, target: Arc<Tree>, edges: Vec<usize>) -> Result<Self, OmegaError> {
        if edges.len() != source.edge_count() || edges.iter().any(|&e| e >= target.edge_count()) {
            return Err(OmegaError::InvalidEdgeMap("wrong length or out of range".into()));
        }
        let nodes = (0..source.node_count())
            .map(|b| {
                let leaves: Vec<usize> = source.inputs(b).iter().map(|&e| edges[e]).collect();
                target
                    .subtree_with_boundary(edges[source.output(b)], &leaves)
                    .ok_or_else(|| {
                        OmegaError::InvalidEdgeMap(format!(
                            "no subtree of the target has the image boundary of node `{}`",
                            source.node_label(b)
                        ))
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OmegaMorphism {
            source,
            target,
            edges,
            nodes,
        })
    }

    pub fn identity(t: Arc<Tree>) -> Self {
        OmegaMorphism {
            edges: (0..t.edge_count()).collect(),
            nodes: t.one_node_subtrees(),
            source: t.clone(),
            target: t,
        }
    }

    /// The free morphism induced by a tree embedding.
    pub fn from_embedding(source: Arc<Tree>, target: Arc<Tree>, emb: &Embedding) -> Self {
        let nodes = emb
            .nodes
            .iter()
            .map(|&c| target.subtree_from_nodes(&[c]).unwrap())
            .collect();
        OmegaMorphism {
            source,
            target,
            edges: emb.edges.clone(),
            nodes,
        }
    }

    /// Image of a subtree of the source: the grafting of the images of its
    /// nodes, or a trivial subtree when all of them are deleted.
    pub fn image_of_subtree(&self, sub: &Subtree) -> Subtree {
        let mut nodes: Vec<usize> = sub.nodes.iter().flat_map(|&b| self.nodes[b].nodes.clone()).collect();
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() {
            self.target.trivial_subtree(self.edges[sub.root])
        } else {
            self.target.subtree_from_nodes(&nodes).expect("images of subtrees are subtrees")
        }
    }

    /// `next ∘ self`, by images of subtrees.
    pub fn then(&self, next: &OmegaMorphism) -> Result<OmegaMorphism, OmegaError> {
        if !same_tree(&self.target, &next.source) {
            return Err(OmegaError::NotComposable);
        }
        Ok(OmegaMorphism {
            source: self.source.clone(),
            target: next.target.clone(),
            edges: self.edges.iter().map(|&e| next.edges[e]).collect(),
            nodes: self.nodes.iter().map(|s| next.image_of_subtree(s)).collect(),
        })
    }

    pub fn image(&self) -> Subtree {
        self.image_of_subtree(&self.source.maximal_subtree())
    }

    pub fn is_boundary_preserving(&self) -> bool {
        self.image() == self.target.maximal_subtree()
    }

    /// The three components on subtrees: edges, subtrees, marked subtrees.
    fn components(&self) -> (SubtreeIndex, SubtreeIndex, Vec<usize>, Vec<usize>) {
        let si = SubtreeIndex::new(&self.source);
        let ti = SubtreeIndex::new(&self.target);
        let a1: Vec<usize> = si
            .subtrees
            .iter()
            .map(|s| ti.index_of(&self.image_of_subtree(s)).unwrap())
            .collect();
        let a2 = si
            .marked
            .iter()
            .map(|&(k, l)| ti.marked_index(a1[k], self.edges[l]).unwrap())
            .collect();
        (si, ti, a1, a2)
    }

    pub fn is_injective(&self) -> bool {
        let (_, _, a1, a2) = self.components();
        all_distinct(&self.edges) && all_distinct(&a1) && all_distinct(&a2)
    }

    pub fn is_surjective(&self) -> bool {
        let (_, ti, a1, a2) = self.components();
        let hits = |v: &[usize], n: usize| v.iter().copied().collect::<HashSet<_>>().len() == n;
        hits(&self.edges, self.target.edge_count()) && hits(&a1, ti.subtrees.len()) && hits(&a2, ti.marked.len())
    }

    pub fn is_isomorphism(&self) -> bool {
        self.is_injective() && self.is_surjective()
    }

    /// The seven characterisations of free maps, in order:
    /// induced by an embedding; distance preserving on edges; one-node
    /// subtrees go to one-node subtrees; every subtree's image is isomorphic
    /// to it; injective with hit subtrees closed under subtrees; injective
    /// with every edge of a hit subtree hit; injective with every edge of the
    /// image hit.
    pub fn free_conditions(&self) -> [bool; 7] {
        let s = &self.source;
        let t = &self.target;
        let c1 = hom_temb(s, t).iter().any(|e| e.edges == self.edges);
        let c2 = (0..s.edge_count()).all(|x| {
            (0..s.edge_count()).all(|y| match s.distance(x, y) {
                Ok(d) => t.distance(self.edges[x], self.edges[y]) == Ok(d),
                Err(_) => true,
            })
        });
        let c3 = self.nodes.iter().all(|n| n.nodes.len() == 1);
        let subs = s.enumerate_subtrees();
        let c4 = subs.iter().all(|r| {
            let (a, _) = s.subtree_as_tree(r);
            let (b, _) = t.subtree_as_tree(&self.image_of_subtree(r));
            are_isomorphic(&a, &b)
        });
        let injective = self.is_injective();
        let hit: Vec<Subtree> = subs.iter().map(|r| self.image_of_subtree(r)).collect();
        let hit_set: HashSet<&Subtree> = hit.iter().collect();
        let edge_hit: HashSet<usize> = self.edges.iter().copied().collect();
        let c5 = injective
            && hit.iter().all(|r| {
                let (rt, inc) = t.subtree_as_tree(r);
                rt.enumerate_subtrees().iter().all(|q| {
                    let img = embed_subtree(&inc, q, t);
                    hit_set.contains(&img)
                })
            });
        let c6 = injective && hit.iter().all(|r| r.edges(t).iter().all(|e| edge_hit.contains(e)));
        let c7 = injective && self.image().edges(t).iter().all(|e| edge_hit.contains(e));
        [c1, c2, c3, c4, c5, c6, c7]
    }

    /// Free, by the first characterisation.
    pub fn is_free(&self) -> bool {
        hom_temb(&self.source, &self.target).iter().any(|e| e.edges == self.edges)
    }

    /// The full map of endofunctors between free-monad carriers.
    pub fn to_carrier_map(&self) -> PolyMap {
        let (sp, _) = tree_monad_carrier(&self.source);
        let (tp, _) = tree_monad_carrier(&self.target);
        let (_, _, a1, a2) = self.components();
        PolyMap::from_indices(&sp, &tp, self.edges.clone(), a1, a2).expect("morphisms give carrier maps")
    }

    /// As a map into the carrier of the target: nodes to subtrees, inputs to
    /// marked subtrees.
    pub fn to_adjoint_map(&self) -> PolyMap {
        let (tp, ti) = tree_monad_carrier(&self.target);
        let s = &self.source;
        let a1: Vec<usize> = self.nodes.iter().map(|n| ti.index_of(n).unwrap()).collect();
        let a2 = (0..s.poly().p2().len())
            .map(|m| {
                let b = s.poly().p().apply(m);
                ti.marked_index(a1[b], self.edges[s.poly().s().apply(m)]).unwrap()
            })
            .collect();
        PolyMap::from_indices(s.poly(), &tp, self.edges.clone(), a1, a2).expect("morphisms give adjoint maps")
    }

    /// Human-readable edge map.
    pub fn describe(&self) -> String {
        (0..self.source.edge_count())
            .map(|e| format!("{} -> {}", self.source.edge_label(e), self.target.edge_label(self.edges[e])))
            .join(", ")
    }
}

fn embed_subtree(inc: &Embedding, q: &Subtree, t: &Tree) -> Subtree {
    if q.is_trivial() {
        t.trivial_subtree(inc.edges[q.root])
    } else {
        t.subtree_from_nodes(&q.nodes.iter().map(|&b| inc.nodes[b]).collect::<Vec<_>>())
            .unwrap()
    }
}

fn all_distinct(v: &[usize]) -> bool {
    v.iter().collect::<HashSet<_>>().len() == v.len()
}

fn same_tree(a: &Arc<Tree>, b: &Arc<Tree>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl PartialEq for OmegaMorphism {
    fn eq(&self, other: &Self) -> bool {
        self.edges == other.edges && same_tree(&self.source, &other.source) && same_tree(&self.target, &other.target)
    }
}

impl Eq for OmegaMorphism {}

impl fmt::Debug for OmegaMorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OmegaMorphism({})", self.describe())
    }
}

/// All morphisms `s -> t`: the root goes to any edge, then each node, from
/// the root up, goes to a subtree rooted at the image of its output with as
/// many leaves as it has inputs, matched by a bijection.
pub fn hom_omega(s: &Arc<Tree>, t: &Arc<Tree>) -> Vec<OmegaMorphism> {
    let idx = SubtreeIndex::new(t);
    let mut out = Vec::new();
    let mut edges = vec![usize::MAX; s.edge_count()];
    let mut nodes = vec![usize::MAX; s.node_count()];
    for y in 0..t.edge_count() {
        edges[s.root()] = y;
        hom_rec(s, &idx, vec![s.root()], &mut edges, &mut nodes, &mut |edges, nodes| {
            out.push(OmegaMorphism {
                source: s.clone(),
                target: t.clone(),
                edges: edges.to_vec(),
                nodes: nodes.iter().map(|&k| idx.subtrees[k].clone()).collect(),
            })
        });
    }
    out.sort_by(|a, b| a.edges.cmp(&b.edges));
    out
}

fn hom_rec(
    s: &Tree,
    idx: &SubtreeIndex,
    mut pending: Vec<usize>,
    edges: &mut Vec<usize>,
    nodes: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize], &[usize]),
) {
    let Some(x) = pending.pop() else {
        emit(edges, nodes);
        return;
    };
    let Some(b) = s.producer(x) else {
        hom_rec(s, idx, pending, edges, nodes, emit);
        return;
    };
    let ins = s.inputs(b);
    for &k in idx.with_root_and_arity(edges[x], ins.len()) {
        nodes[b] = k;
        let leaves = &idx.subtrees[k].leaves;
        for perm in leaves.iter().copied().permutations(leaves.len()) {
            for (&e, &f) in ins.iter().zip(&perm) {
                edges[e] = f;
            }
            let mut next = pending.clone();
            next.extend(&ins);
            hom_rec(s, idx, next, edges, nodes, emit);
        }
    }
}

/// Boundary-preserving maps from a one-node tree, counted by leaf
/// bijections that extend to a morphism.
pub fn count_boundary_preserving(e: &Arc<Tree>, r: &Arc<Tree>) -> Result<usize, OmegaError> {
    if !e.is_one_node() {
        return Err(OmegaError::NotOneNode);
    }
    let n = e.leaves().len();
    if r.leaves().len() != n {
        return Ok(0);
    }
    let mut count = 0;
    for perm in r.leaves().iter().copied().permutations(n) {
        let mut edges = vec![0; e.edge_count()];
        edges[e.root()] = r.root();
        for (&l, &m) in e.leaves().iter().zip(&perm) {
            edges[l] = m;
        }
        if let Ok(phi) = OmegaMorphism::from_edge_map(e.clone(), r.clone(), edges) {
            if phi.is_boundary_preserving() {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// A factorisation `right ∘ left`.
#[derive(Clone, Debug)]
pub struct Factorisation {
    pub left: OmegaMorphism,
    pub right: OmegaMorphism,
}

impl Factorisation {
    pub fn middle(&self) -> &Arc<Tree> {
        &self.left.target
    }

    pub fn compose(&self) -> OmegaMorphism {
        self.left.then(&self.right).unwrap()
    }
}

/// Surjection (deleting the nodes sent to trivial subtrees) followed by an
/// injection.
pub fn factor_surj_inj(phi: &OmegaMorphism) -> Factorisation {
    let s = &phi.source;
    let deleted: Vec<usize> = (0..s.node_count()).filter(|&b| phi.nodes[b].is_trivial()).collect();
    let mut uf = crate::polyend::UnionFind::new(s.edge_count());
    for &b in &deleted {
        uf.union(s.output(b), s.inputs(b)[0]);
    }
    // Each class is named after its lowest edge.
    let mut class_of = vec![usize::MAX; s.edge_count()];
    let mut reps = Vec::new();
    for e in (0..s.edge_count()).sorted_by_key(|&e| (s.depth(e), e)) {
        let r = uf.find(e);
        if class_of[r] == usize::MAX {
            class_of[r] = reps.len();
            reps.push(e);
        }
    }
    let cls = |e: usize, uf: &mut crate::polyend::UnionFind| class_of[uf.find(e)];
    let kept: Vec<usize> = (0..s.node_count()).filter(|b| !deleted.contains(b)).collect();
    let edge_labels: Vec<Label> = reps.iter().map(|&e| s.edge_label(e).clone()).collect();
    let mut inputs = Vec::new();
    let mut input_labels = Vec::new();
    let mut in_node = Vec::new();
    for (k, &b) in kept.iter().enumerate() {
        for &m in s.poly().fibre(b) {
            inputs.push(cls(s.poly().s().apply(m), &mut uf));
            input_labels.push(s.poly().p2().label(m).clone());
            in_node.push(k);
        }
    }
    let outs: Vec<usize> = kept.iter().map(|&b| cls(s.output(b), &mut uf)).collect();
    let middle = certify_tree(
        &PolyEndo::from_indices(
            FinSet::new(edge_labels).unwrap(),
            FinSet::new(kept.iter().map(|&b| s.node_label(b).clone())).unwrap(),
            FinSet::new(input_labels).unwrap(),
            inputs,
            in_node,
            outs,
        )
        .unwrap(),
    )
    .expect("deleting unary nodes leaves a tree");
    let middle = Arc::new(middle);
    let surj_edges: Vec<usize> = (0..s.edge_count()).map(|e| cls(e, &mut uf)).collect();
    let inj_edges: Vec<usize> = reps.iter().map(|&e| phi.edges[e]).collect();
    let left = OmegaMorphism::from_edge_map(s.clone(), middle.clone(), surj_edges).unwrap();
    let right = OmegaMorphism::from_edge_map(middle, phi.target.clone(), inj_edges).unwrap();
    Factorisation { left, right }
}

/// Boundary-preserving map onto the image subtree, followed by its
/// inclusion.
pub fn factor_generic_free(phi: &OmegaMorphism) -> Factorisation {
    let t = &phi.target;
    let (middle, inc) = t.subtree_as_tree(&phi.image());
    let middle = Arc::new(middle);
    let e_ix: HashMap<usize, usize> = inc.edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let left_edges = phi.edges.iter().map(|e| e_ix[e]).collect();
    let left = OmegaMorphism::from_edge_map(phi.source.clone(), middle.clone(), left_edges).unwrap();
    let right = OmegaMorphism::from_embedding(middle, t.clone(), &inc);
    Factorisation { left, right }
}

/// Surjection, then boundary-preserving injection, then free map.
pub fn triple_factor(phi: &OmegaMorphism) -> (OmegaMorphism, OmegaMorphism, OmegaMorphism) {
    let si = factor_surj_inj(phi);
    let gf = factor_generic_free(&si.right);
    (si.left, gf.left, gf.right)
}

/// Isomorphisms `a -> b` as morphisms.
pub fn omega_isomorphisms(a: &Arc<Tree>, b: &Arc<Tree>) -> Vec<OmegaMorphism> {
    isomorphisms(a, b)
        .iter()
        .map(|e| OmegaMorphism::from_embedding(a.clone(), b.clone(), e))
        .collect()
}

/// Isomorphisms `θ` between the middles with `θ ∘ f.left = g.left` and
/// `g.right ∘ θ = f.right`.
pub fn comparison_isomorphisms(f: &Factorisation, g: &Factorisation) -> Vec<OmegaMorphism> {
    omega_isomorphisms(f.middle(), g.middle())
        .into_iter()
        .filter(|th| f.left.then(th).unwrap().edges == g.left.edges && th.then(&g.right).unwrap().edges == f.right.edges)
        .collect()
}

/// All factorisations of morphisms `s -> t` through the given middle trees
/// whose factors satisfy the predicates, grouped by the composite edge map.
pub fn factorisation_table(
    s: &Arc<Tree>,
    t: &Arc<Tree>,
    middles: &[Arc<Tree>],
    left_ok: impl Fn(&OmegaMorphism) -> bool,
    right_ok: impl Fn(&OmegaMorphism) -> bool,
) -> BTreeMap<Vec<usize>, Vec<Factorisation>> {
    let mut table: BTreeMap<Vec<usize>, Vec<Factorisation>> = BTreeMap::new();
    for m in middles {
        let lefts: Vec<OmegaMorphism> = hom_omega(s, m).into_iter().filter(&left_ok).collect();
        if lefts.is_empty() {
            continue;
        }
        let rights: Vec<OmegaMorphism> = hom_omega(m, t).into_iter().filter(&right_ok).collect();
        for l in &lefts {
            for r in &rights {
                let edges: Vec<usize> = l.edges.iter().map(|&e| r.edges[e]).collect();
                table.entry(edges).or_default().push(Factorisation {
                    left: l.clone(),
                    right: r.clone(),
                });
            }
        }
    }
    table
}

/// Contracts the inner edge `x`, merging its two nodes into one labelled
/// `(lower,upper)`; the upper node's inputs take the place of `x` among the
/// lower node's inputs. Returns the contracted tree and its
/// boundary-preserving injection back into `t`.
pub fn contract(t: &Arc<Tree>, x: usize) -> Result<(Arc<Tree>, OmegaMorphism), OmegaError> {
    let (Some(upper), Some(lower)) = (t.producer(x), t.parent_node(x)) else {
        return Err(OmegaError::NotInnerEdge(t.edge_label(x).clone()));
    };
    let p = t.poly();
    let edges: Vec<usize> = (0..t.edge_count()).filter(|&e| e != x).collect();
    let e_ix: HashMap<usize, usize> = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let taken: HashSet<String> = p.p1().iter().map(|l| l.to_string()).collect();
    let mut merged = format!("({},{})", t.node_label(lower), t.node_label(upper));
    while taken.contains(&merged) {
        merged.push('\'');
    }
    let mut node_labels = Vec::new();
    let mut outs = Vec::new();
    let mut input_labels = Vec::new();
    let (mut s, mut pp) = (Vec::new(), Vec::new());
    for b in 0..t.node_count() {
        if b == upper {
            continue;
        }
        let k = node_labels.len();
        node_labels.push(if b == lower { merged.clone() } else { t.node_label(b).to_string() });
        outs.push(e_ix[&t.output(b)]);
        for &m in p.fibre(b) {
            let e = p.s().apply(m);
            let group: Vec<usize> = if e == x { p.fibre(upper).to_vec() } else { vec![m] };
            for m in group {
                input_labels.push(p.p2().label(m).to_string());
                s.push(e_ix[&p.s().apply(m)]);
                pp.push(k);
            }
        }
    }
    let poly = PolyEndo::from_indices(
        FinSet::new(edges.iter().map(|&e| t.edge_label(e).clone())).map_err(PolyError::from)?,
        FinSet::new(node_labels).map_err(PolyError::from)?,
        FinSet::new(input_labels).map_err(PolyError::from)?,
        s,
        pp,
        outs,
    )?;
    let contracted = Arc::new(certify_tree(&poly)?);
    let phi = OmegaMorphism::from_edge_map(contracted.clone(), t.clone(), edges)?;
    Ok((contracted, phi))
}

/// Contracts a set of inner edges, one at a time.
pub fn contract_set(t: &Arc<Tree>, xs: &[usize]) -> Result<(Arc<Tree>, OmegaMorphism), OmegaError> {
    let mut cur = t.clone();
    for &x in xs {
        if !t.inner_edges().contains(&x) {
            return Err(OmegaError::NotInnerEdge(t.edge_label(x).clone()));
        }
        let here = cur.edge_index(t.edge_label(x).as_str())?;
        cur = contract(&cur, here)?.0;
    }
    let edges = (0..cur.edge_count())
        .map(|e| t.edge_index(cur.edge_label(e).as_str()))
        .collect::<Result<Vec<_>, _>>()?;
    let phi = OmegaMorphism::from_edge_map(cur.clone(), t.clone(), edges)?;
    Ok((cur, phi))
}

/// Whether a family of subtrees is jointly surjective on nodes and on edges.
pub fn is_cover(t: &Tree, family: &[Subtree]) -> bool {
    let nodes: HashSet<usize> = family.iter().flat_map(|s| s.nodes.clone()).collect();
    let edges: HashSet<usize> = family.iter().flat_map(|s| s.edges(t)).collect();
    nodes.len() == t.node_count() && edges.len() == t.edge_count()
}

/// Whether a cover has each node in exactly one member and no removable
/// member.
pub fn is_reduced_cover(t: &Tree, family: &[Subtree]) -> bool {
    if !is_cover(t, family) {
        return false;
    }
    let once = (0..t.node_count()).all(|b| family.iter().filter(|s| s.nodes.contains(&b)).count() == 1);
    let minimal = (0..family.len()).all(|i| {
        let rest: Vec<Subtree> = family.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| s.clone()).collect();
        !is_cover(t, &rest)
    });
    once && minimal
}

/// The poset of reduced covers, ordered by refinement.
#[derive(Clone, Debug)]
pub struct RedCovPoset {
    pub covers: Vec<Vec<Subtree>>,
    /// Inner edges hit twice by each cover.
    pub cut: Vec<BTreeSet<usize>>,
    /// `leq[i][j]`: cover `i` refines cover `j`.
    pub leq: Vec<Vec<bool>>,
}

/// Reduced covers, found as partitions of the nodes into subtrees and
/// filtered by the cover conditions. The trivial tree has the single cover
/// by itself.
pub fn reduced_covers(t: &Tree) -> Result<RedCovPoset, OmegaError> {
    if t.is_trivial() {
        return Ok(RedCovPoset {
            covers: vec![vec![t.maximal_subtree()]],
            cut: vec![BTreeSet::new()],
            leq: vec![vec![true]],
        });
    }
    let mut covers = Vec::new();
    for partition in set_partitions(t.node_count()) {
        let blocks: Option<Vec<Subtree>> = partition.iter().map(|b| t.subtree_from_nodes(b)).collect();
        if let Some(family) = blocks {
            if is_reduced_cover(t, &family) {
                covers.push(family);
            }
        }
    }
    let cut = covers
        .iter()
        .map(|f| {
            t.inner_edges()
                .into_iter()
                .filter(|&e| f.iter().filter(|s| s.contains_edge(t, e)).count() == 2)
                .collect()
        })
        .collect();
    let leq = covers
        .iter()
        .map(|f| {
            covers
                .iter()
                .map(|g| f.iter().all(|a| g.iter().any(|b| b.contains(t, a))))
                .collect()
        })
        .collect();
    Ok(RedCovPoset { covers, cut, leq })
}

/// All set partitions of `0..n`.
fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = vec![Vec::new()];
    for x in 0..n {
        let mut next = Vec::new();
        for p in out {
            for i in 0..p.len() {
                let mut q: Vec<Vec<usize>> = p.clone();
                q[i].push(x);
                next.push(q);
            }
            let mut q = p.clone();
            q.push(vec![x]);
            next.push(q);
        }
        out = next;
    }
    out
}

/// The poset of generic injections into a tree, up to isomorphism over it.
#[derive(Clone, Debug)]
pub struct GenInjPoset {
    pub maps: Vec<OmegaMorphism>,
    /// Inner edges of the target hit by each map.
    pub hit: Vec<BTreeSet<usize>>,
    /// `leq[i][j]`: map `i` factors through map `j`.
    pub leq: Vec<Vec<bool>>,
}

/// Boundary-preserving injections into `t` from trees with at most as many
/// edges, one per image edge set.
pub fn generic_injections(t: &Arc<Tree>) -> Result<GenInjPoset, OmegaError> {
    let mut seen: BTreeMap<Vec<usize>, OmegaMorphism> = BTreeMap::new();
    for s in all_tree_classes(t.edge_count()) {
        let s = Arc::new(s);
        for phi in hom_omega(&s, t) {
            if phi.is_boundary_preserving() && phi.is_injective() {
                let key: Vec<usize> = phi.edges.iter().copied().sorted().collect();
                seen.entry(key).or_insert(phi);
            }
        }
    }
    let maps: Vec<OmegaMorphism> = seen.into_values().collect();
    let inner: BTreeSet<usize> = t.inner_edges().into_iter().collect();
    let hit = maps
        .iter()
        .map(|m| m.edges.iter().copied().filter(|e| inner.contains(e)).collect())
        .collect();
    let leq = maps
        .iter()
        .map(|a| {
            maps.iter()
                .map(|b| {
                    hom_omega(&a.source, &b.source)
                        .iter()
                        .any(|chi| chi.edges.iter().map(|&e| b.edges[e]).eq(a.edges.iter().copied()))
                })
                .collect()
        })
        .collect();
    Ok(GenInjPoset { maps, hit, leq })
}

/// Checks that reduced covers and generic injections both correspond to
/// subsets of inner edges, covers order-reversingly, and that contracting
/// the complement of each subset realises the matching generic injection.
pub fn redcov_geninj_correspondence(t: &Arc<Tree>) -> Result<bool, OmegaError> {
    let rc = reduced_covers(t)?;
    let gi = generic_injections(t)?;
    let inner = t.inner_edges();
    let expected = 1usize << inner.len();
    let distinct = |v: &[BTreeSet<usize>]| v.iter().collect::<HashSet<_>>().len() == v.len();
    if rc.covers.len() != expected || gi.maps.len() != expected || !distinct(&rc.cut) || !distinct(&gi.hit) {
        return Ok(false);
    }
    for i in 0..expected {
        for j in 0..expected {
            if rc.leq[i][j] != rc.cut[i].is_superset(&rc.cut[j]) {
                return Ok(false);
            }
            if gi.leq[i][j] != gi.hit[i].is_subset(&gi.hit[j]) {
                return Ok(false);
            }
        }
    }
    for j in &gi.hit {
        let rest: Vec<usize> = inner.iter().copied().filter(|e| !j.contains(e)).collect();
        let (_, phi) = contract_set(t, &rest)?;
        let key: Vec<usize> = phi.edges.iter().copied().sorted().collect();
        let matched = gi.maps.iter().any(|m| m.edges.iter().copied().sorted().eq(key.iter().copied()));
        if !matched || !phi.is_boundary_preserving() || !phi.is_injective() {
            return Ok(false);
        }
    }
    // Composite correspondence: the cover cut at J matches the generic
    // injection hitting J.
    for (k, j) in rc.cut.iter().enumerate() {
        if !gi.hit.contains(j) || rc.covers[k].len() != j.len() + 1 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether every commutative square `v ∘ g = f ∘ u`, with `g: a -> b` from
/// `lefts` and `f: c -> d` from `rights`, has exactly one diagonal
/// `δ: b -> c` with `δ ∘ g = u` and `f ∘ δ = v`.
pub fn unique_fillers(lefts: &[OmegaMorphism], rights: &[OmegaMorphism]) -> bool {
    for g in lefts {
        for f in rights {
            let diagonals = hom_omega(&g.target, &f.source);
            for u in hom_omega(&g.source, &f.source) {
                let fu: Vec<usize> = u.edges.iter().map(|&e| f.edges[e]).collect();
                for v in hom_omega(&g.target, &f.target) {
                    let vg: Vec<usize> = g.edges.iter().map(|&e| v.edges[e]).collect();
                    if vg != fu {
                        continue;
                    }
                    let fillers = diagonals
                        .iter()
                        .filter(|d| {
                            g.edges.iter().map(|&e| d.edges[e]).eq(u.edges.iter().copied())
                                && d.edges.iter().map(|&e| f.edges[e]).eq(v.edges.iter().copied())
                        })
                        .count();
                    if fillers != 1 {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// The free monad on `P`, cut at bounds. The carrier is
/// `P0 <- tr'(P) -> tr(P) -> P0`: classes of P-trees and classes with a
/// marked leaf, in left-to-right leaf order.
#[derive(Clone, Debug)]
pub struct FreeMonad {
    pub base: PolyEndo,
    pub classes: PTreeClassSet,
    pub carrier: PolyEndo,
    offsets: Vec<usize>,
    lookup: HashMap<PTerm, usize>,
    /// Whether the bounds lose nothing (true for trees).
    pub exact: bool,
}

impl FreeMonad {
    pub fn new(p: &PolyEndo, max_nodes: usize, max_edges: usize) -> FreeMonad {
        FreeMonad::from_classes(enumerate_ptrees(p, max_nodes, max_edges), false)
    }

    /// The free monad on a tree: every decorated tree embeds, so node and
    /// edge counts bound it exactly.
    pub fn of_tree(t: &Tree) -> FreeMonad {
        FreeMonad::from_classes(enumerate_ptrees(t.poly(), t.node_count(), t.edge_count()), true)
    }

    fn from_classes(classes: PTreeClassSet, exact: bool) -> FreeMonad {
        let p = classes.base.clone();
        let names: Vec<String> = classes.classes.iter().map(|c| c.render(&p)).collect();
        let mut offsets = Vec::new();
        let mut input_labels = Vec::new();
        let (mut s, mut pp) = (Vec::new(), Vec::new());
        for (k, c) in classes.classes.iter().enumerate() {
            offsets.push(input_labels.len());
            for (i, colour) in c.leaves().into_iter().enumerate() {
                input_labels.push(format!("{}@{}", names[k], i));
                s.push(colour);
                pp.push(k);
            }
        }
        let t = classes.classes.iter().map(|c| c.root_colour(&p)).collect();
        let carrier = PolyEndo::from_indices(
            p.p0().clone(),
            FinSet::new(names).expect("renderings are distinct"),
            FinSet::new(input_labels).unwrap(),
            s,
            pp,
            t,
        )
        .unwrap();
        let lookup = classes.classes.iter().cloned().enumerate().map(|(k, c)| (c, k)).collect();
        FreeMonad {
            base: p,
            classes,
            carrier,
            offsets,
            lookup,
            exact,
        }
    }

    pub fn class_index(&self, term: &PTerm) -> Option<usize> {
        self.lookup.get(term).copied()
    }

    pub fn class(&self, k: usize) -> &PTerm {
        &self.classes.classes[k]
    }

    /// Index in `tr'` of leaf `i` of class `k`.
    pub fn marked(&self, k: usize, i: usize) -> usize {
        self.offsets[k] + i
    }

    /// Sends a colour to the trivial P-tree.
    pub fn unit(&self) -> PolyMap {
        let id = identity_endofunctor(self.base.p0());
        let a1: Vec<usize> = (0..self.base.p0().len())
            .map(|c| self.class_index(&PTerm::Leaf(c)).unwrap())
            .collect();
        let a2 = a1.iter().map(|&k| self.marked(k, 0)).collect();
        PolyMap::from_indices(&id, &self.carrier, (0..self.base.p0().len()).collect(), a1, a2)
            .expect("unit is cartesian")
    }

    /// Grafts `grafts[i]` onto leaf `i` of `r`.
    pub fn multiply(&self, r: &PTerm, grafts: &[PTerm]) -> Result<PTerm, OmegaError> {
        let leaves = r.leaves();
        if leaves.len() != grafts.len()
            || leaves.iter().zip(grafts).any(|(&c, g)| g.root_colour(&self.base) != c)
        {
            return Err(OmegaError::ColourMismatch);
        }
        let out = r.substitute(grafts);
        if !self.classes.within_bounds(&out) {
            return Err(OmegaError::BoundExceeded {
                nodes: out.nodes(),
                edges: out.edges(),
                max_nodes: self.classes.max_nodes,
                max_edges: self.classes.max_edges,
            });
        }
        Ok(out)
    }

    /// The composite of the carrier with itself, cut to the pairs whose
    /// grafting stays within the bounds, and the multiplication on it.
    pub fn multiplication(&self) -> (Composite, PolyMap) {
        let mut pairs = Vec::new();
        for (r, term) in self.classes.classes.iter().enumerate() {
            let nodes = self.classes.max_nodes.saturating_sub(term.nodes());
            let edges = self.classes.max_edges.saturating_sub(term.edges());
            for f in self.graft_choices(&term.leaves(), nodes, edges) {
                pairs.push((r, f));
            }
        }
        let comp = compose_nodes(&self.carrier, &self.carrier, pairs).expect("same colours");
        let a1: Vec<usize> = comp
            .nodes
            .iter()
            .map(|(r, f)| {
                let grafts: Vec<PTerm> = f.iter().map(|&k| self.class(k).clone()).collect();
                self.class_index(&self.class(*r).substitute(&grafts)).expect("within bounds")
            })
            .collect();
        let a2 = comp
            .inputs
            .iter()
            .map(|&(node, i, m)| {
                let (_, f) = &comp.nodes[node];
                let before: usize = f[..i].iter().map(|&k| self.class(k).leaf_count()).sum();
                let j = m - self.offsets[f[i]];
                self.marked(a1[node], before + j)
            })
            .collect();
        let mult = PolyMap::from_indices(&comp.poly, &self.carrier, (0..self.base.p0().len()).collect(), a1, a2)
            .expect("multiplication is cartesian");
        (comp, mult)
    }

    /// Unit laws, elementwise through the multiplication map: grafting
    /// trivial trees on all leaves, or grafting onto a trivial tree, is the
    /// identity on nodes and on marked leaves.
    pub fn check_unit_laws(&self) -> bool {
        let (comp, mult) = self.multiplication();
        let unit = self.unit();
        for (k, c) in self.classes.classes.iter().enumerate() {
            let right: Vec<usize> = c.leaves().iter().map(|&col| unit.a1()[col]).collect();
            let Some(n) = comp.node_index(k, &right) else { return false };
            if mult.a1()[n] != k {
                return false;
            }
            let left = unit.a1()[c.root_colour(&self.base)];
            let Some(n2) = comp.node_index(left, &[k]) else { return false };
            if mult.a1()[n2] != k {
                return false;
            }
            for (idx, &(node, i, m)) in comp.inputs.iter().enumerate() {
                if node == n && mult.a2()[idx] != self.marked(k, i) {
                    return false;
                }
                if node == n2 && mult.a2()[idx] != m {
                    return false;
                }
            }
        }
        true
    }

    /// Associativity, elementwise: for every `(r, f, g)` within the bounds,
    /// both ways of multiplying agree on the node and on every marked leaf.
    pub fn check_associativity(&self) -> bool {
        let (comp, mult) = self.multiplication();
        let mut input_of: HashMap<(usize, usize, usize), usize> = HashMap::new();
        for (idx, &(node, i, m)) in comp.inputs.iter().enumerate() {
            input_of.insert((node, i, m), idx);
        }
        let mul_node = |r: usize, f: &[usize]| comp.node_index(r, f).map(|n| mult.a1()[n]);
        // Position in the product of leaf j of graft i.
        let mul_leaf = |r: usize, f: &[usize], i: usize, j: usize| {
            let n = comp.node_index(r, f)?;
            let idx = input_of.get(&(n, i, self.marked(f[i], j)))?;
            Some(mult.a2()[*idx] - self.offsets[mult.a1()[n]])
        };
        let (max_nodes, max_edges) = (self.classes.max_nodes, self.classes.max_edges);
        for r in 0..self.classes.len() {
            let rc = self.class(r).clone();
            let budget = (max_nodes.saturating_sub(rc.nodes()), max_edges.saturating_sub(rc.edges()));
            for f in self.graft_choices(&rc.leaves(), budget.0, budget.1) {
                let Some(s) = mul_node(r, &f) else { return false };
                let sc = self.class(s).clone();
                let budget = (max_nodes.saturating_sub(sc.nodes()), max_edges.saturating_sub(sc.edges()));
                for g in self.graft_choices(&sc.leaves(), budget.0, budget.1) {
                    let Some(left) = mul_node(s, &g) else { return false };
                    // Split g along the leaves of the f_i.
                    let mut h = Vec::new();
                    let mut blocks = Vec::new();
                    let mut pos = 0;
                    for &fi in &f {
                        let n = self.class(fi).leaf_count();
                        let block = g[pos..pos + n].to_vec();
                        pos += n;
                        match mul_node(fi, &block) {
                            Some(k) => h.push(k),
                            None => return false,
                        }
                        blocks.push(block);
                    }
                    if mul_node(r, &h) != Some(left) {
                        return false;
                    }
                    for i in 0..f.len() {
                        for j in 0..self.class(f[i]).leaf_count() {
                            let q = mul_leaf(r, &f, i, j).unwrap();
                            for l in 0..self.class(g[q]).leaf_count() {
                                let one = mul_leaf(s, &g, q, l);
                                let inner = mul_leaf(f[i], &blocks[i], j, l);
                                let two = inner.and_then(|x| mul_leaf(r, &h, i, x));
                                if one.is_none() || one != two {
                                    return false;
                                }
                            }
                        }
                    }
                }
            }
        }
        true
    }

    /// Assignments of classes to the given leaf colours adding at most
    /// `nodes` nodes and `edges` edges in total.
    fn graft_choices(&self, colours: &[usize], nodes: usize, edges: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut acc = Vec::new();
        self.graft_rec(colours, nodes, edges, &mut acc, &mut out);
        out
    }

    fn graft_rec(&self, colours: &[usize], nodes: usize, edges: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if acc.len() == colours.len() {
            out.push(acc.clone());
            return;
        }
        let c = colours[acc.len()];
        for (k, term) in self.classes.classes.iter().enumerate() {
            let extra = term.edges() - 1;
            if term.root_colour(&self.base) == c && term.nodes() <= nodes && extra <= edges {
                acc.push(k);
                self.graft_rec(colours, nodes - term.nodes(), edges - extra, acc, out);
                acc.pop();
            }
        }
    }

    /// For the free monad on a tree, the subtree each class decorates.
    pub fn subtree_of(&self, t: &Tree, k: usize) -> Subtree {
        let pt = PTree::from_term(&self.base, self.class(k)).unwrap();
        let d = &pt.decoration;
        if pt.tree.is_trivial() {
            t.trivial_subtree(d.a0()[pt.tree.root()])
        } else {
            t.subtree_from_nodes(d.a1()).unwrap()
        }
    }
}

/// Generic factorisation of an element `E -> free monad on P`, where `E` is
/// a one-node tree: the element picks a P-tree `R` and a bijection from the
/// leaves of `E` to the leaves of `R`; it factors as a boundary-preserving
/// map `E -> R` followed by the map `R -> free monad on P` given by the
/// decoration.
#[derive(Clone, Debug)]
pub struct ElementFactorisation {
    pub ptree: PTree,
    pub generic: OmegaMorphism,
}

pub fn factor_element(
    monad: &FreeMonad,
    e: &Arc<Tree>,
    class: usize,
    leaf_bijection: &[usize],
) -> Result<ElementFactorisation, OmegaError> {
    if !e.is_one_node() {
        return Err(OmegaError::NotOneNode);
    }
    let term = monad.class(class);
    let ptree = PTree::from_term(&monad.base, term)?;
    let r = Arc::new(ptree.tree.clone());
    if leaf_bijection.len() != e.leaves().len() || r.leaves().len() != e.leaves().len() {
        return Err(OmegaError::InvalidEdgeMap("leaf counts differ".into()));
    }
    // Leaves of R in left-to-right order, matching the marked leaves of the
    // class.
    let ordered = leaves_in_order(&r);
    let mut edges = vec![0; e.edge_count()];
    edges[e.root()] = r.root();
    for (k, &l) in e.leaves().iter().enumerate() {
        edges[l] = ordered[leaf_bijection[k]];
    }
    let generic = OmegaMorphism::from_edge_map(e.clone(), r, edges)?;
    Ok(ElementFactorisation { ptree, generic })
}

/// Leaves of a tree built by [`PTree::from_term`], in term order.
pub fn leaves_in_order(t: &Tree) -> Vec<usize> {
    fn walk(t: &Tree, e: usize, out: &mut Vec<usize>) {
        match t.producer(e) {
            None => out.push(e),
            Some(b) => t.inputs(b).into_iter().for_each(|x| walk(t, x, out)),
        }
    }
    let mut out = Vec::new();
    walk(t, t.root(), &mut out);
    out
}

/// The term of the restriction of a P-tree's decoration to a subtree.
pub fn restrict_term(pt: &PTree, sub: &Subtree) -> PTerm {
    let (tree, inc) = pt.tree.subtree_as_tree(sub);
    let d = &pt.decoration;
    let a0 = inc.edges.iter().map(|&e| d.a0()[e]).collect();
    let a1 = inc.nodes.iter().map(|&b| d.a1()[b]).collect();
    let a2 = inc.inputs(&tree, &pt.tree).iter().map(|&m| d.a2()[m]).collect();
    let decoration = PolyMap::from_indices(tree.poly(), d.target(), a0, a1, a2).expect("restriction is cartesian");
    PTree { tree, decoration }.term()
}
