//! Trees decorated over a polynomial endofunctor.
//!
//! A P-tree is a tree `T` with a cartesian map `T -> P`. P-trees have no
//! automorphisms over `P`, so an isomorphism class is captured exactly by a
//! [`PTerm`]: a leaf colour, or a node of `P` with one subterm per element
//! of its fibre, in the fibre's stored order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::polyend::{PolyEndo, PolyError, PolyMap};
use crate::tree::{automorphisms, certify_tree, shapes_with_edges, Tree};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PTreeError {
    #[error("node of arity {arity} exceeds the arity bound {bound} of the truncated endofunctor")]
    ArityUnsupported { arity: usize, bound: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Canonical form of a P-tree. Children of a node follow the stored order of
/// the node's fibre in `P`; the root colour of child `i` is `s` of the
/// `i`-th fibre element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PTerm {
    Leaf(usize),
    Node(usize, Vec<PTerm>),
}

impl PTerm {
    pub fn edges(&self) -> usize {
        match self {
            PTerm::Leaf(_) => 1,
            PTerm::Node(_, ch) => 1 + ch.iter().map(PTerm::edges).sum::<usize>(),
        }
    }

    pub fn nodes(&self) -> usize {
        match self {
            PTerm::Leaf(_) => 0,
            PTerm::Node(_, ch) => 1 + ch.iter().map(PTerm::nodes).sum::<usize>(),
        }
    }

    pub fn root_colour(&self, p: &PolyEndo) -> usize {
        match self {
            PTerm::Leaf(c) => *c,
            PTerm::Node(b, _) => p.output(*b),
        }
    }

    /// Leaf colours, left to right.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            PTerm::Leaf(c) => out.push(*c),
            PTerm::Node(_, ch) => ch.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            PTerm::Leaf(_) => 1,
            PTerm::Node(_, ch) => ch.iter().map(PTerm::leaf_count).sum(),
        }
    }

    pub fn has_nullary_node(&self) -> bool {
        match self {
            PTerm::Leaf(_) => false,
            PTerm::Node(_, ch) => ch.is_empty() || ch.iter().any(PTerm::has_nullary_node),
        }
    }

    /// Replaces the leaves, left to right, by the given terms. Colours are
    /// not checked; see [`PTerm::check`].
    pub fn substitute(&self, grafts: &[PTerm]) -> PTerm {
        let mut it = grafts.iter();
        let out = self.substitute_rec(&mut it);
        debug_assert!(it.next().is_none());
        out
    }

    fn substitute_rec<'a>(&self, it: &mut impl Iterator<Item = &'a PTerm>) -> PTerm {
        match self {
            PTerm::Leaf(_) => it.next().expect("one graft per leaf").clone(),
            PTerm::Node(b, ch) => PTerm::Node(*b, ch.iter().map(|c| c.substitute_rec(it)).collect()),
        }
    }

    /// Grafts `upper` onto leaf number `leaf` (left to right).
    pub fn graft_at(&self, leaf: usize, upper: &PTerm) -> PTerm {
        let mut grafts: Vec<PTerm> = self.leaves().into_iter().map(PTerm::Leaf).collect();
        grafts[leaf] = upper.clone();
        self.substitute(&grafts)
    }

    /// Whether the colours match up along every fibre.
    pub fn check(&self, p: &PolyEndo) -> bool {
        match self {
            PTerm::Leaf(c) => *c < p.p0().len(),
            PTerm::Node(b, ch) => {
                *b < p.p1().len()
                    && ch.len() == p.arity(*b)
                    && p.fibre(*b)
                        .iter()
                        .zip(ch)
                        .all(|(&m, c)| c.check(p) && c.root_colour(p) == p.s().apply(m))
            }
        }
    }

    /// Renders with `P`'s labels, e.g. `b(x, c(y))`.
    pub fn render(&self, p: &PolyEndo) -> String {
        match self {
            PTerm::Leaf(c) => p.p0().label(*c).to_string(),
            PTerm::Node(b, ch) => format!(
                "{}({})",
                p.p1().label(*b),
                ch.iter().map(|c| c.render(p)).collect::<Vec<_>>().join(", ")
            ),
        }
    }
}

/// A tree with a decoration over `P`.
#[derive(Clone, Debug)]
pub struct PTree {
    pub tree: Tree,
    pub decoration: PolyMap,
}

impl PTree {
    /// Builds the P-tree of a term, labelling edges `e0, ..` and nodes
    /// `n0, ..` depth-first from the root.
    pub fn from_term(p: &PolyEndo, term: &PTerm) -> Result<PTree, PolyError> {
        struct Acc {
            edges: Vec<String>,
            edge_colours: Vec<usize>,
            nodes: Vec<(String, Vec<String>, String)>,
            node_images: Vec<usize>,
            input_images: Vec<usize>,
        }
        fn walk(p: &PolyEndo, term: &PTerm, edge: usize, acc: &mut Acc) {
            if let PTerm::Node(b, ch) = term {
                let v = acc.nodes.len();
                acc.nodes.push((format!("n{v}"), Vec::new(), format!("e{edge}")));
                acc.node_images.push(*b);
                for (&m, c) in p.fibre(*b).iter().zip(ch) {
                    let e = acc.edges.len();
                    acc.edges.push(format!("e{e}"));
                    acc.edge_colours.push(c.root_colour(p));
                    acc.nodes[v].1.push(format!("e{e}"));
                    acc.input_images.push(m);
                    walk(p, c, e, acc);
                }
            }
        }
        if !term.check(p) {
            return Err(PolyError::ColourMismatch);
        }
        let mut acc = Acc {
            edges: vec!["e0".into()],
            edge_colours: vec![term.root_colour(p)],
            nodes: Vec::new(),
            node_images: Vec::new(),
            input_images: Vec::new(),
        };
        walk(p, term, 0, &mut acc);
        let poly = PolyEndo::from_spec(&acc.edges, &acc.nodes)?;
        let tree = certify_tree(&poly).expect("terms describe trees");
        // from_spec lays inputs out node by node; map each back through its
        // output edge.
        let mut inputs = vec![0; poly.p2().len()];
        let mut by_edge = vec![0; acc.edges.len()];
        for (k, &m) in acc.input_images.iter().enumerate() {
            by_edge[k + 1] = m;
        }
        for (m, slot) in inputs.iter_mut().enumerate() {
            *slot = by_edge[poly.s().apply(m)];
        }
        let decoration = PolyMap::from_indices(&poly, p, acc.edge_colours, acc.node_images, inputs)?;
        Ok(PTree { tree, decoration })
    }

    /// The canonical term, read off top-down through the decoration.
    pub fn term(&self) -> PTerm {
        self.term_at(self.tree.root())
    }

    fn term_at(&self, e: usize) -> PTerm {
        let d = &self.decoration;
        match self.tree.producer(e) {
            None => PTerm::Leaf(d.a0()[e]),
            Some(v) => {
                let b = d.a1()[v];
                let target = d.target();
                let children = target
                    .fibre(b)
                    .iter()
                    .map(|&m| {
                        let input = self
                            .tree
                            .poly()
                            .fibre(v)
                            .iter()
                            .copied()
                            .find(|&i| d.a2()[i] == m)
                            .expect("fibrewise bijection");
                        self.term_at(self.tree.poly().s().apply(input))
                    })
                    .collect();
                PTerm::Node(b, children)
            }
        }
    }

    pub fn base(&self) -> &PolyEndo {
        self.decoration.target()
    }

    pub fn root_colour(&self) -> usize {
        self.decoration.a0()[self.tree.root()]
    }
}

/// All decorations of `t` over `p`, found top-down: a colour for the root,
/// then for each node a node of `p` with the right output and arity and a
/// bijection of fibres.
pub fn decorations(t: &Tree, p: &PolyEndo) -> Result<Vec<PTree>, PTreeError> {
    Ok(decoration_maps(t, p)?
        .into_iter()
        .map(|(a0, a1, a2)| PTree {
            tree: t.clone(),
            decoration: PolyMap::from_indices(t.poly(), p, a0, a1, a2).expect("constructed decorations are valid"),
        })
        .collect())
}

/// Decorations as raw `(edges, nodes, inputs)` index vectors.
pub fn decoration_maps(t: &Tree, p: &PolyEndo) -> Result<Vec<(Vec<usize>, Vec<usize>, Vec<usize>)>, PTreeError> {
    if let Some(bound) = p.arity_bound() {
        if let Some(arity) = (0..t.node_count()).map(|v| t.arity(v)).find(|&a| a > bound) {
            return Err(PTreeError::ArityUnsupported { arity, bound });
        }
    }
    let mut out = Vec::new();
    let mut state = (
        vec![usize::MAX; t.edge_count()],
        vec![usize::MAX; t.node_count()],
        vec![usize::MAX; t.poly().p2().len()],
    );
    for c in 0..p.p0().len() {
        state.0[t.root()] = c;
        decorate_rec(t, p, vec![t.root()], &mut state, &mut out);
    }
    Ok(out)
}

type Deco = (Vec<usize>, Vec<usize>, Vec<usize>);

fn decorate_rec(t: &Tree, p: &PolyEndo, mut pending: Vec<usize>, state: &mut Deco, out: &mut Vec<Deco>) {
    let Some(x) = pending.pop() else {
        out.push(state.clone());
        return;
    };
    let Some(v) = t.producer(x) else {
        decorate_rec(t, p, pending, state, out);
        return;
    };
    let ins = t.poly().fibre(v).to_vec();
    for b in p.nodes_with_output(state.0[x]) {
        if p.arity(b) != ins.len() {
            continue;
        }
        state.1[v] = b;
        for perm in crate::permutations(ins.len()) {
            for (k, &i) in ins.iter().enumerate() {
                let m = p.fibre(b)[perm[k]];
                state.2[i] = m;
                state.0[t.poly().s().apply(i)] = p.s().apply(m);
            }
            let mut next = pending.clone();
            next.extend(ins.iter().map(|&i| t.poly().s().apply(i)));
            decorate_rec(t, p, next, state, out);
        }
    }
}

/// Automorphisms of the underlying tree that commute with the decoration.
pub fn automorphisms_over(pt: &PTree) -> usize {
    let t = &pt.tree;
    let d = &pt.decoration;
    automorphisms(t)
        .into_iter()
        .filter(|phi| {
            let inputs = phi.inputs(t, t);
            (0..t.edge_count()).all(|e| d.a0()[phi.edges[e]] == d.a0()[e])
                && (0..t.node_count()).all(|v| d.a1()[phi.nodes[v]] == d.a1()[v])
                && (0..inputs.len()).all(|m| d.a2()[inputs[m]] == d.a2()[m])
        })
        .count()
}

/// Whether the identity is the only automorphism over the base.
pub fn is_rigid(pt: &PTree) -> bool {
    automorphisms_over(pt) == 1
}

/// A bounded piece of the set of isomorphism classes of P-trees.
#[derive(Clone, Debug)]
pub struct PTreeClassSet {
    pub base: PolyEndo,
    pub classes: Vec<PTerm>,
    pub max_nodes: usize,
    pub max_edges: usize,
    /// Sizes of the successive fixpoint stages.
    pub stages: Vec<usize>,
}

impl PTreeClassSet {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, term: &PTerm) -> bool {
        self.classes.binary_search(term).is_ok()
    }

    pub fn within_bounds(&self, term: &PTerm) -> bool {
        term.nodes() <= self.max_nodes && term.edges() <= self.max_edges
    }

    /// Number of classes per edge count, index 0 unused.
    pub fn counts_by_edges(&self) -> Vec<usize> {
        counts_by(&self.classes, PTerm::edges, self.max_edges.min(max_of(&self.classes, PTerm::edges)))
    }

    pub fn counts_by_nodes(&self) -> Vec<usize> {
        counts_by(&self.classes, PTerm::nodes, self.max_nodes.min(max_of(&self.classes, PTerm::nodes)))
    }

    /// Root colour of each class.
    pub fn root_colours(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.root_colour(&self.base)).collect()
    }

    /// One application of `X |-> P0 + P(X)` to the classes, cut at the
    /// bounds.
    pub fn step(&self) -> BTreeSet<PTerm> {
        fixpoint_step(&self.base, &self.classes, self.max_nodes, self.max_edges)
    }

    /// Whether `P0 + P(W)`, cut at the bounds, is again `W`.
    pub fn lambek_check(&self) -> bool {
        self.step().into_iter().eq(self.classes.iter().cloned())
    }

    pub fn trees(&self) -> Vec<PTree> {
        self.classes
            .iter()
            .map(|c| PTree::from_term(&self.base, c).expect("enumerated terms are valid"))
            .collect()
    }
}

fn max_of(terms: &[PTerm], f: fn(&PTerm) -> usize) -> usize {
    terms.iter().map(f).max().unwrap_or(0)
}

fn counts_by(terms: &[PTerm], f: fn(&PTerm) -> usize, upto: usize) -> Vec<usize> {
    let mut out = vec![0; upto + 1];
    for t in terms {
        out[f(t)] += 1;
    }
    out
}

/// `P0 + P(W)` restricted to terms within the bounds.
pub fn fixpoint_step(p: &PolyEndo, w: &[PTerm], max_nodes: usize, max_edges: usize) -> BTreeSet<PTerm> {
    let mut by_colour: BTreeMap<usize, Vec<&PTerm>> = BTreeMap::new();
    for t in w {
        by_colour.entry(t.root_colour(p)).or_default().push(t);
    }
    let mut out = BTreeSet::new();
    if max_edges >= 1 {
        out.extend((0..p.p0().len()).map(PTerm::Leaf));
    }
    for b in 0..p.p1().len() {
        let colours: Vec<usize> = p.fibre(b).iter().map(|&m| p.s().apply(m)).collect();
        if max_nodes == 0 || max_edges < 1 + colours.len() {
            continue;
        }
        let mut chosen = Vec::new();
        choose_children(
            &colours,
            &by_colour,
            max_nodes - 1,
            max_edges - 1,
            &mut chosen,
            &mut |ch| {
                out.insert(PTerm::Node(b, ch.to_vec()));
            },
        );
    }
    out
}

fn choose_children(
    colours: &[usize],
    by_colour: &BTreeMap<usize, Vec<&PTerm>>,
    nodes_left: usize,
    edges_left: usize,
    chosen: &mut Vec<PTerm>,
    emit: &mut dyn FnMut(&[PTerm]),
) {
    let k = chosen.len();
    if k == colours.len() {
        emit(chosen);
        return;
    }
    // Each later child needs at least one edge.
    let reserve = colours.len() - k - 1;
    let Some(options) = by_colour.get(&colours[k]) else {
        return;
    };
    for t in options {
        let (n, e) = (t.nodes(), t.edges());
        if n <= nodes_left && e + reserve <= edges_left {
            chosen.push((*t).clone());
            choose_children(colours, by_colour, nodes_left - n, edges_left - e, chosen, emit);
            chosen.pop();
        }
    }
}

/// The least fixpoint of `X |-> P0 + P(X)` cut at the bounds, by iteration
/// from the nodeless P-trees.
pub fn enumerate_ptrees(p: &PolyEndo, max_nodes: usize, max_edges: usize) -> PTreeClassSet {
    let mut current: BTreeSet<PTerm> = if max_edges >= 1 {
        (0..p.p0().len()).map(PTerm::Leaf).collect()
    } else {
        BTreeSet::new()
    };
    let mut stages = vec![current.len()];
    loop {
        let w: Vec<PTerm> = current.iter().cloned().collect();
        let next = fixpoint_step(p, &w, max_nodes, max_edges);
        if next == current {
            break;
        }
        stages.push(next.len());
        current = next;
    }
    PTreeClassSet {
        base: p.clone(),
        classes: current.into_iter().collect(),
        max_nodes,
        max_edges,
        stages,
    }
}

/// Iso classes of trees with at most `max_edges` edges and no nullary
/// nodes, by edge count then canonical form.
pub fn undecorated_tree_classes(max_edges: usize) -> Vec<Tree> {
    (1..=max_edges)
        .flat_map(|n| shapes_with_edges(n, false))
        .map(|s| Tree::from_shape(&s))
        .collect()
}

/// Iso classes of trees with at most `max_edges` edges, nullary nodes
/// allowed.
pub fn all_tree_classes(max_edges: usize) -> Vec<Tree> {
    (1..=max_edges)
        .flat_map(|n| shapes_with_edges(n, true))
        .map(|s| Tree::from_shape(&s))
        .collect()
}

impl fmt::Display for PTreeClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.classes {
            writeln!(f, "{}", c.render(&self.base))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finset::FinSet;
    use crate::polyend::{free_monoid_truncated, identity_endofunctor};
    use crate::tree::Shape;

    fn one_binary() -> PolyEndo {
        PolyEndo::from_spec(&["c"], &[("b", vec!["c", "c"], "c")]).unwrap()
    }

    /// Decorate every tree class, then dedup by term.
    fn decorate_then_dedup(p: &PolyEndo, max_nodes: usize, max_edges: usize) -> BTreeSet<PTerm> {
        all_tree_classes(max_edges)
            .iter()
            .filter(|t| t.node_count() <= max_nodes)
            .flat_map(|t| match decorations(t, p) {
                Ok(ds) => ds,
                Err(_) => Vec::new(),
            })
            .map(|pt| pt.term())
            .collect()
    }

    /// Plane trees without nullary nodes, as nested child lists, by edges.
    fn plane_trees(edges: usize) -> Vec<Vec<usize>> {
        // Encoded as preorder arity sequences.
        fn go(edges: usize) -> Vec<Vec<usize>> {
            if edges == 1 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for k in 1..edges {
                for parts in compositions(edges - 1, k) {
                    let mut combos: Vec<Vec<usize>> = vec![vec![k]];
                    for part in parts {
                        let subs = go(part);
                        combos = combos
                            .into_iter()
                            .flat_map(|c| {
                                subs.iter().map(move |s| {
                                    let mut c = c.clone();
                                    c.extend(if s.is_empty() { vec![0] } else { s.clone() });
                                    c
                                })
                            })
                            .collect();
                    }
                    out.extend(combos);
                }
            }
            out
        }
        fn compositions(n: usize, k: usize) -> Vec<Vec<usize>> {
            if k == 1 {
                return vec![vec![n]];
            }
            (1..n).flat_map(|first| compositions(n - first, k - 1).into_iter().map(move |mut r| {
                r.insert(0, first);
                r
            })).collect()
        }
        go(edges)
    }

    #[test]
    fn decoration_examples() {
        let m = free_monoid_truncated(3);
        let triv = Tree::trivial("x");
        assert_eq!(decorations(&triv, &m).unwrap().len(), 1);
        let two = identity_endofunctor(&FinSet::new(["a", "b"]).unwrap());
        assert_eq!(decorations(&triv, &two).unwrap().len(), 2);
        assert_eq!(decorations(&Tree::corolla(2), &m).unwrap().len(), 2);
        let t = Tree::from_shape(&Shape::parse("((||))").unwrap());
        assert_eq!(decorations(&t, &m).unwrap().len(), 2);
        assert_eq!(
            decorations(&Tree::corolla(4), &m).unwrap_err(),
            PTreeError::ArityUnsupported { arity: 4, bound: 3 }
        );
    }

    #[test]
    fn planar_decoration_count_is_product_of_factorials() {
        let m = free_monoid_truncated(3);
        for t in all_tree_classes(6) {
            if (0..t.node_count()).any(|v| t.arity(v) > 3) {
                continue;
            }
            let expect: usize = (0..t.node_count()).map(|v| crate::factorial(t.arity(v))).product();
            assert_eq!(decorations(&t, &m).unwrap().len(), expect);
        }
    }

    #[test]
    fn terms_round_trip_and_are_rigid() {
        for p in [free_monoid_truncated(3), one_binary(), identity_endofunctor(&FinSet::range(2))] {
            for t in all_tree_classes(5) {
                let Ok(ds) = decorations(&t, &p) else { continue };
                for pt in ds {
                    assert!(is_rigid(&pt));
                    let term = pt.term();
                    let back = PTree::from_term(&p, &term).unwrap();
                    assert_eq!(back.term(), term);
                    assert!(crate::tree::are_isomorphic(&back.tree, &t));
                }
            }
        }
    }

    #[test]
    fn rigid_despite_symmetric_tree() {
        let t = Tree::from_shape(&Shape::parse("((||)(||))").unwrap());
        assert_eq!(automorphisms(&t).len(), 8);
        for pt in decorations(&t, &one_binary()).unwrap() {
            assert_eq!(automorphisms_over(&pt), 1);
        }
    }

    #[test]
    fn linear_classes_over_identity() {
        let id = identity_endofunctor(&FinSet::singleton("c"));
        let w = enumerate_ptrees(&id, 3, usize::MAX);
        assert_eq!(w.len(), 4);
        assert!(w.lambek_check());
        assert_eq!(enumerate_ptrees(&id, 6, usize::MAX).len(), 7);
    }

    #[test]
    fn one_binary_op_counts() {
        let w = enumerate_ptrees(&one_binary(), 3, usize::MAX);
        assert_eq!(w.counts_by_nodes(), vec![1, 1, 2, 5]);
        assert_eq!(
            w.classes.iter().cloned().collect::<BTreeSet<_>>(),
            decorate_then_dedup(&one_binary(), 3, 7)
        );
    }

    #[test]
    fn planar_counts_match_plane_tree_enumeration() {
        let m = free_monoid_truncated(4);
        let w = enumerate_ptrees(&m, usize::MAX, 5);
        let mut positive = vec![0; 6];
        for c in w.classes.iter().filter(|c| !c.has_nullary_node()) {
            positive[c.edges()] += 1;
        }
        let oracle: Vec<usize> = (0..=5).map(|n| if n == 0 { 0 } else { plane_trees(n).len() }).collect();
        assert_eq!(positive, oracle);
        assert_eq!(&oracle[1..], &[1, 1, 2, 5, 14]);
        assert_eq!(w.classes.iter().cloned().collect::<BTreeSet<_>>(), decorate_then_dedup(&m, 5, 5));
    }

    #[test]
    fn fixpoint_matches_decorate_then_dedup() {
        let two_colour = PolyEndo::from_spec(
            &["a", "b"],
            &[("f", vec!["a", "b"], "a"), ("g", vec![], "b"), ("h", vec!["a"], "b")],
        )
        .unwrap();
        for p in [two_colour, free_monoid_truncated(2), one_binary()] {
            for bound in 1..=5 {
                let w = enumerate_ptrees(&p, bound, bound + 1);
                assert!(w.lambek_check());
                let brute: BTreeSet<PTerm> = decorate_then_dedup(&p, bound, bound + 1);
                assert_eq!(w.classes.iter().cloned().collect::<BTreeSet<_>>(), brute);
            }
        }
    }

    #[test]
    fn substitution_grafts_leaves() {
        let m = free_monoid_truncated(2);
        let bin = PTerm::Node(2, vec![PTerm::Leaf(0), PTerm::Leaf(0)]);
        let g = bin.graft_at(1, &bin);
        assert_eq!(g.edges(), 5);
        assert!(g.check(&m));
        assert_eq!(g.render(&m), "2(*, 2(*, *))");
        assert_eq!(bin.substitute(&[PTerm::Leaf(0), PTerm::Leaf(0)]), bin);
    }

    #[test]
    fn undecorated_classes() {
        let counts: Vec<usize> = (1..=4).map(|n| undecorated_tree_classes(n).len()).collect();
        assert_eq!(counts, vec![1, 2, 4, 8]);
    }
}
