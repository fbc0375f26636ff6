//! Trees as polynomial endofunctors.
//!
//! A polynomial endofunctor `T0 <-s- T2 -p-> T1 -t-> T0` is a tree when it is
//! finite, `t` is injective, `s` is injective and misses exactly one edge
//! (the root), and walking from any edge towards the root terminates. Edges
//! outside the image of `t` are leaves.
//!
//! Subtrees are stored relative to their ambient tree as a root edge, a
//! sorted leaf list and a sorted node list. A nontrivial subtree is
//! determined by its nodes, and any subtree by its boundary.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use itertools::Itertools;
use thiserror::Error;

use crate::finset::{pushout_over_singleton, FinMap, FinSet, Label};
use crate::polyend::{PolyEndo, PolyError, PolyMap};

/// The tree axioms, for error reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axiom {
    /// All three sets are finite.
    Finite,
    /// Distinct nodes have distinct output edges.
    OutputsDistinct,
    /// Each edge is the input of at most one node, and exactly one edge (the
    /// root) is the input of none.
    SingleRoot,
    /// Every edge reaches the root by walking down.
    ReachesRoot,
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axiom::Finite => "finiteness",
            Axiom::OutputsDistinct => "t injective",
            Axiom::SingleRoot => "s injective with a single root",
            Axiom::ReachesRoot => "every edge reaches the root",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("not finite")]
    NotFinite,
    #[error("t is not injective: nodes `{0}` and `{1}` share an output edge")]
    TNotInjective(Label, Label),
    #[error("s is not injective: inputs `{0}` and `{1}` share an edge")]
    SNotInjective(Label, Label),
    #[error("the complement of the image of s has {size} elements, expected exactly one root")]
    SBadComplement { size: usize },
    #[error("walking towards the root cycles through {}", .cycle.iter().join(" -> "))]
    SigmaDiverges { cycle: Vec<Label> },
    #[error("edges `{0}` and `{1}` are incomparable")]
    DistanceUndefined(Label, Label),
    #[error("`{0}` is not a leaf")]
    NotALeaf(Label),
    #[error("`{0}` is not an edge of the tree")]
    UnknownEdge(String),
    #[error("not a subtree")]
    NotASubtree,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

impl TreeError {
    /// The axiom a certification error violates.
    pub fn axiom(&self) -> Option<Axiom> {
        match self {
            TreeError::NotFinite => Some(Axiom::Finite),
            TreeError::TNotInjective(..) => Some(Axiom::OutputsDistinct),
            TreeError::SNotInjective(..) | TreeError::SBadComplement { .. } => Some(Axiom::SingleRoot),
            TreeError::SigmaDiverges { .. } => Some(Axiom::ReachesRoot),
            _ => None,
        }
    }
}

/// A certified tree, with root, leaves and walk-to-the-root cached.
#[derive(Clone)]
pub struct Tree {
    poly: PolyEndo,
    root: usize,
    leaves: Vec<usize>,
    sigma: Vec<usize>,
    producer: Vec<Option<usize>>,
    consumer: Vec<Option<usize>>,
    depth: Vec<usize>,
}

/// Checks the tree axioms and caches the derived structure.
pub fn certify_tree(p: &PolyEndo) -> Result<Tree, TreeError> {
    let n0 = p.p0().len();
    let mut producer = vec![None; n0];
    for b in 0..p.p1().len() {
        let e = p.output(b);
        if let Some(other) = producer[e] {
            return Err(TreeError::TNotInjective(
                p.p1().label(other).clone(),
                p.p1().label(b).clone(),
            ));
        }
        producer[e] = Some(b);
    }
    let mut consumer = vec![None; n0];
    for m in 0..p.p2().len() {
        let e = p.s().apply(m);
        if let Some(other) = consumer[e] {
            return Err(TreeError::SNotInjective(
                p.p2().label(other).clone(),
                p.p2().label(m).clone(),
            ));
        }
        consumer[e] = Some(m);
    }
    let roots: Vec<usize> = (0..n0).filter(|&e| consumer[e].is_none()).collect();
    if roots.len() != 1 {
        return Err(TreeError::SBadComplement { size: roots.len() });
    }
    let root = roots[0];
    let sigma: Vec<usize> = (0..n0)
        .map(|e| match consumer[e] {
            None => e,
            Some(m) => p.output(p.p().apply(m)),
        })
        .collect();
    let mut depth = vec![0; n0];
    for x in 0..n0 {
        let mut y = x;
        let mut steps = 0;
        while y != root {
            y = sigma[y];
            steps += 1;
            if steps > n0 {
                return Err(TreeError::SigmaDiverges {
                    cycle: walk_cycle(&sigma, x).into_iter().map(|e| p.p0().label(e).clone()).collect(),
                });
            }
        }
        depth[x] = steps;
    }
    let leaves = (0..n0).filter(|&e| producer[e].is_none()).collect();
    Ok(Tree {
        poly: p.clone(),
        root,
        leaves,
        sigma,
        producer,
        consumer,
        depth,
    })
}

fn walk_cycle(sigma: &[usize], start: usize) -> Vec<usize> {
    let mut seen = HashMap::new();
    let mut path = Vec::new();
    let mut y = start;
    while !seen.contains_key(&y) {
        seen.insert(y, path.len());
        path.push(y);
        y = sigma[y];
    }
    path[seen[&y]..].to_vec()
}

fn fresh(base: &str, taken: &HashSet<String>) -> String {
    let mut name = base.to_string();
    while taken.contains(&name) {
        name.push('\'');
    }
    name
}

impl Tree {
    /// The tree `1 <- 0 -> 0 -> 1` with one edge.
    pub fn trivial(edge: impl Into<Label>) -> Tree {
        let p0 = FinSet::singleton(edge);
        let p = PolyEndo::from_indices(p0, FinSet::empty(), FinSet::empty(), vec![], vec![], vec![]).unwrap();
        certify_tree(&p).unwrap()
    }

    /// The one-node tree with the given leaves, a fresh root `r` and node `v`.
    pub fn one_node_tree(inputs: &FinSet) -> Tree {
        let taken: HashSet<String> = inputs.iter().map(|l| l.to_string()).collect();
        let root = fresh("r", &taken);
        let edges: Vec<String> = std::iter::once(root.clone())
            .chain(inputs.iter().map(|l| l.to_string()))
            .collect();
        let ins: Vec<String> = inputs.iter().map(|l| l.to_string()).collect();
        let p = PolyEndo::from_spec(&edges, &[("v".to_string(), ins, root)]).unwrap();
        certify_tree(&p).unwrap()
    }

    /// The one-node tree with `n` leaves.
    pub fn corolla(n: usize) -> Tree {
        Tree::from_shape(&Shape::corolla(n))
    }

    /// The linear tree with `n` unary nodes.
    pub fn linear(n: usize) -> Tree {
        Tree::from_shape(&Shape::linear(n))
    }

    /// Builds a tree from a shape, labelling edges `e0, e1, ..` and nodes
    /// `n0, n1, ..` in depth-first order from the root.
    pub fn from_shape(shape: &Shape) -> Tree {
        fn walk(shape: &Shape, edge: usize, edges: &mut usize, nodes: &mut Vec<(String, Vec<String>, String)>) {
            if let Shape::Node(children) = shape {
                let b = nodes.len();
                nodes.push((format!("n{b}"), Vec::new(), format!("e{edge}")));
                for child in children {
                    let e = *edges;
                    *edges += 1;
                    nodes[b].1.push(format!("e{e}"));
                    walk(child, e, edges, nodes);
                }
            }
        }
        let mut edges = 1;
        let mut nodes = Vec::new();
        walk(shape, 0, &mut edges, &mut nodes);
        let edge_labels: Vec<String> = (0..edges).map(|e| format!("e{e}")).collect();
        certify_tree(&PolyEndo::from_spec(&edge_labels, &nodes).unwrap()).unwrap()
    }

    pub fn poly(&self) -> &PolyEndo {
        &self.poly
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn sigma(&self) -> FinMap {
        FinMap::new(self.poly.p0().clone(), self.poly.p0().clone(), self.sigma.clone()).unwrap()
    }

    pub fn edge_count(&self) -> usize {
        self.poly.p0().len()
    }

    pub fn node_count(&self) -> usize {
        self.poly.p1().len()
    }

    pub fn is_trivial(&self) -> bool {
        self.node_count() == 0
    }

    pub fn edge_label(&self, e: usize) -> &Label {
        self.poly.p0().label(e)
    }

    pub fn node_label(&self, b: usize) -> &Label {
        self.poly.p1().label(b)
    }

    pub fn edge_index(&self, name: &str) -> Result<usize, TreeError> {
        self.poly
            .p0()
            .index_of_str(name)
            .ok_or_else(|| TreeError::UnknownEdge(name.to_string()))
    }

    /// The node whose output is `e`, if `e` is not a leaf.
    pub fn producer(&self, e: usize) -> Option<usize> {
        self.producer[e]
    }

    /// The input element sitting on `e`, if `e` is not the root.
    pub fn consumer(&self, e: usize) -> Option<usize> {
        self.consumer[e]
    }

    /// The node that has `e` as an input, if `e` is not the root.
    pub fn parent_node(&self, e: usize) -> Option<usize> {
        self.consumer[e].map(|m| self.poly.p().apply(m))
    }

    pub fn output(&self, b: usize) -> usize {
        self.poly.output(b)
    }

    /// Input edges of `b` in fibre order.
    pub fn inputs(&self, b: usize) -> Vec<usize> {
        self.poly.input_colours(b)
    }

    pub fn arity(&self, b: usize) -> usize {
        self.poly.arity(b)
    }

    pub fn is_leaf(&self, e: usize) -> bool {
        self.producer[e].is_none()
    }

    /// Edges that are both an input and an output.
    pub fn inner_edges(&self) -> Vec<usize> {
        (0..self.edge_count())
            .filter(|&e| self.producer[e].is_some() && self.consumer[e].is_some())
            .collect()
    }

    /// Number of steps from `e` down to the root.
    pub fn depth(&self, e: usize) -> usize {
        self.depth[e]
    }

    /// `x <= y` when `y` lies on the path from `x` to the root.
    pub fn leq(&self, x: usize, y: usize) -> bool {
        if self.depth[x] < self.depth[y] {
            return false;
        }
        let mut z = x;
        for _ in 0..self.depth[x] - self.depth[y] {
            z = self.sigma[z];
        }
        z == y
    }

    pub fn comparable(&self, x: usize, y: usize) -> bool {
        self.leq(x, y) || self.leq(y, x)
    }

    pub fn distance(&self, x: usize, y: usize) -> Result<usize, TreeError> {
        if self.leq(x, y) {
            Ok(self.depth[x] - self.depth[y])
        } else if self.leq(y, x) {
            Ok(self.depth[y] - self.depth[x])
        } else {
            Err(TreeError::DistanceUndefined(
                self.edge_label(x).clone(),
                self.edge_label(y).clone(),
            ))
        }
    }

    /// Nearest common ancestor.
    pub fn join(&self, x: usize, y: usize) -> usize {
        let (mut a, mut b) = (x, y);
        while self.depth[a] > self.depth[b] {
            a = self.sigma[a];
        }
        while self.depth[b] > self.depth[a] {
            b = self.sigma[b];
        }
        while a != b {
            a = self.sigma[a];
            b = self.sigma[b];
        }
        a
    }

    pub fn trivial_subtree(&self, e: usize) -> Subtree {
        Subtree {
            root: e,
            leaves: vec![e],
            nodes: vec![],
        }
    }

    /// The whole tree as a subtree of itself.
    pub fn maximal_subtree(&self) -> Subtree {
        if self.is_trivial() {
            self.trivial_subtree(self.root)
        } else {
            self.subtree_from_nodes(&(0..self.node_count()).collect::<Vec<_>>())
                .unwrap()
        }
    }

    /// The nontrivial subtree with the given node set, if the nodes form one:
    /// they must be nonempty and all but one must feed into another node of
    /// the set.
    pub fn subtree_from_nodes(&self, nodes: &[usize]) -> Option<Subtree> {
        let mut nodes = nodes.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() {
            return None;
        }
        let inside: HashSet<usize> = nodes.iter().copied().collect();
        let tops: Vec<usize> = nodes
            .iter()
            .copied()
            .filter(|&b| match self.parent_node(self.output(b)) {
                Some(c) => !inside.contains(&c),
                None => true,
            })
            .collect();
        if tops.len() != 1 {
            return None;
        }
        let mut leaves: Vec<usize> = nodes
            .iter()
            .flat_map(|&b| self.inputs(b))
            .filter(|&e| !matches!(self.producer[e], Some(c) if inside.contains(&c)))
            .collect();
        leaves.sort_unstable();
        Some(Subtree {
            root: self.output(tops[0]),
            leaves,
            nodes,
        })
    }

    /// The subtree with the given root and leaves, if there is one.
    pub fn subtree_with_boundary(&self, root: usize, leaves: &[usize]) -> Option<Subtree> {
        let mut leaves = leaves.to_vec();
        leaves.sort_unstable();
        if leaves.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        if leaves == [root] {
            return Some(self.trivial_subtree(root));
        }
        let nodes: Vec<usize> = (0..self.node_count())
            .filter(|&b| {
                let out = self.output(b);
                self.leq(out, root) && leaves.iter().all(|&l| !self.leq(out, l))
            })
            .collect();
        let sub = self.subtree_from_nodes(&nodes)?;
        (sub.root == root && sub.leaves == leaves).then_some(sub)
    }

    /// All subtrees: the trivial subtree at each edge, then the nontrivial
    /// ones ordered by size and node set.
    pub fn enumerate_subtrees(&self) -> Vec<Subtree> {
        let mut out: Vec<Subtree> = (0..self.edge_count()).map(|e| self.trivial_subtree(e)).collect();
        let mut nontrivial: Vec<Subtree> = (0..self.node_count())
            .flat_map(|b| self.node_sets_below(b))
            .map(|nodes| self.subtree_from_nodes(&nodes).expect("closed node sets are subtrees"))
            .collect();
        nontrivial.sort_by(|a, b| (a.nodes.len(), &a.nodes).cmp(&(b.nodes.len(), &b.nodes)));
        out.extend(nontrivial);
        out
    }

    /// Node sets of nontrivial subtrees whose top node is `b`.
    fn node_sets_below(&self, b: usize) -> Vec<Vec<usize>> {
        let mut sets = vec![vec![b]];
        for e in self.inputs(b) {
            if let Some(c) = self.producer[e] {
                let below = self.node_sets_below(c);
                let mut next = Vec::with_capacity(sets.len() * (below.len() + 1));
                for s in &sets {
                    next.push(s.clone());
                    for extra in &below {
                        let mut u = s.clone();
                        u.extend(extra);
                        next.push(u);
                    }
                }
                sets = next;
            }
        }
        sets
    }

    /// Pairs of a subtree and one of its leaves.
    pub fn enumerate_marked_subtrees(&self) -> Vec<(Subtree, usize)> {
        self.enumerate_subtrees()
            .into_iter()
            .flat_map(|s| s.leaves.clone().into_iter().map(move |l| (s.clone(), l)))
            .collect()
    }

    /// Everything at or above `z`.
    pub fn ideal_subtree(&self, z: usize) -> Subtree {
        let nodes: Vec<usize> = (0..self.node_count()).filter(|&b| self.leq(self.output(b), z)).collect();
        if nodes.is_empty() {
            self.trivial_subtree(z)
        } else {
            self.subtree_from_nodes(&nodes).unwrap()
        }
    }

    /// Everything except the nodes above `z`; `z` becomes a leaf.
    pub fn prune(&self, z: usize) -> Subtree {
        let nodes: Vec<usize> = (0..self.node_count()).filter(|&b| !self.leq(self.output(b), z)).collect();
        if nodes.is_empty() {
            self.trivial_subtree(self.root)
        } else {
            self.subtree_from_nodes(&nodes).unwrap()
        }
    }

    /// The one-node subtrees, one per node.
    pub fn one_node_subtrees(&self) -> Vec<Subtree> {
        (0..self.node_count())
            .map(|b| self.subtree_from_nodes(&[b]).unwrap())
            .collect()
    }

    /// A subtree as a tree in its own right, keeping labels, together with
    /// its inclusion.
    pub fn subtree_as_tree(&self, sub: &Subtree) -> (Tree, Embedding) {
        let edges = sub.edges(self);
        let inputs: Vec<usize> = sub.nodes.iter().flat_map(|&b| self.poly.fibre(b).to_vec()).collect();
        let p0 = FinSet::new(edges.iter().map(|&e| self.edge_label(e).clone())).unwrap();
        let p1 = FinSet::new(sub.nodes.iter().map(|&b| self.node_label(b).clone())).unwrap();
        let p2 = FinSet::new(inputs.iter().map(|&m| self.poly.p2().label(m).clone())).unwrap();
        let e_ix: HashMap<usize, usize> = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let b_ix: HashMap<usize, usize> = sub.nodes.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let s = inputs.iter().map(|&m| e_ix[&self.poly.s().apply(m)]).collect();
        let p = inputs.iter().map(|&m| b_ix[&self.poly.p().apply(m)]).collect();
        let t = sub.nodes.iter().map(|&b| e_ix[&self.output(b)]).collect();
        let tree = certify_tree(&PolyEndo::from_indices(p0, p1, p2, s, p, t).unwrap()).expect("subtrees are trees");
        let emb = Embedding {
            edges,
            nodes: sub.nodes.clone(),
        };
        (tree, emb)
    }

    /// Canonical form: `|` for a leaf edge, `(c1c2..)` for an edge with a
    /// node, children sorted.
    pub fn canonical_form(&self) -> String {
        self.canonical_at(self.root)
    }

    /// Canonical form of the ideal subtree at `e`.
    pub fn canonical_at(&self, e: usize) -> String {
        match self.producer[e] {
            None => "|".to_string(),
            Some(b) => {
                let mut parts: Vec<String> = self.inputs(b).into_iter().map(|x| self.canonical_at(x)).collect();
                parts.sort();
                format!("({})", parts.concat())
            }
        }
    }

    pub fn shape(&self) -> Shape {
        Shape::parse(&self.canonical_form()).unwrap()
    }

    pub fn is_linear(&self) -> bool {
        (0..self.node_count()).all(|b| self.arity(b) == 1)
    }

    pub fn is_one_node(&self) -> bool {
        self.node_count() == 1
    }

    /// Trivial or one-node.
    pub fn is_elementary(&self) -> bool {
        self.node_count() <= 1
    }

    pub fn recursive_decompose(&self) -> Decomposition {
        match self.producer[self.root] {
            None => Decomposition::Trivial(self.root),
            Some(b) => Decomposition::Node {
                node: b,
                branches: self.inputs(b).into_iter().map(|e| (e, self.ideal_subtree(e))).collect(),
            },
        }
    }

    /// Rebuilds a tree from its decomposition by grafting the branches onto
    /// the root node.
    pub fn regraft(&self, d: &Decomposition) -> Result<Tree, TreeError> {
        match d {
            Decomposition::Trivial(e) => Ok(Tree::trivial(self.edge_label(*e).clone())),
            Decomposition::Node { node, branches } => {
                let (mut acc, _) = self.subtree_as_tree(&self.subtree_from_nodes(&[*node]).unwrap());
                for (e, branch) in branches {
                    let (upper, _) = self.subtree_as_tree(branch);
                    let leaf = acc.edge_index(self.edge_label(*e).as_str())?;
                    acc = graft(&upper, &acc, leaf)?.tree;
                }
                Ok(acc)
            }
        }
    }

    /// Rebuilds the tree by grafting its one-node subtrees together over the
    /// inner edges, working down from the root.
    pub fn regraft_from_one_node_subtrees(&self) -> Result<Tree, TreeError> {
        if self.is_trivial() {
            return Ok(self.clone());
        }
        let order: Vec<usize> = (0..self.node_count())
            .sorted_by_key(|&b| self.depth[self.output(b)])
            .collect();
        let mut acc: Option<Tree> = None;
        for b in order {
            let (piece, _) = self.subtree_as_tree(&self.subtree_from_nodes(&[b]).unwrap());
            acc = Some(match acc {
                None => piece,
                Some(lower) => {
                    let leaf = lower.edge_index(self.edge_label(self.output(b)).as_str())?;
                    graft(&piece, &lower, leaf)?.tree
                }
            });
        }
        Ok(acc.unwrap())
    }

    /// All tree embeddings `self -> target`.
    pub fn embeddings_into(&self, target: &Tree) -> Vec<Embedding> {
        hom_temb(self, target)
    }
}

impl fmt::Debug for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tree({} ; root {})", self.poly, self.edge_label(self.root))
    }
}

impl PartialEq for Tree {
    fn eq(&self, other: &Self) -> bool {
        self.poly == other.poly
    }
}

impl Eq for Tree {}

/// A subtree of an ambient tree, by root, leaves and nodes (both sorted).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subtree {
    pub root: usize,
    pub leaves: Vec<usize>,
    pub nodes: Vec<usize>,
}

impl Subtree {
    pub fn is_trivial(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Edges of the subtree, sorted.
    pub fn edges(&self, tree: &Tree) -> Vec<usize> {
        if self.is_trivial() {
            return vec![self.root];
        }
        let mut edges: Vec<usize> = self
            .nodes
            .iter()
            .flat_map(|&b| std::iter::once(tree.output(b)).chain(tree.inputs(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    pub fn contains_edge(&self, tree: &Tree, e: usize) -> bool {
        self.edges(tree).contains(&e)
    }

    /// Whether `other` is contained in `self`.
    pub fn contains(&self, tree: &Tree, other: &Subtree) -> bool {
        if other.is_trivial() {
            return self.contains_edge(tree, other.root);
        }
        other.nodes.iter().all(|b| self.nodes.binary_search(b).is_ok())
    }

    pub fn edge_count(&self, tree: &Tree) -> usize {
        self.edges(tree).len()
    }
}

/// Either a trivial tree, or a root node with the ideal subtree above each
/// of its inputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decomposition {
    Trivial(usize),
    Node { node: usize, branches: Vec<(usize, Subtree)> },
}

/// A tree embedding, by its edge and node components; the input component
/// is determined by the edge component.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Embedding {
    pub edges: Vec<usize>,
    pub nodes: Vec<usize>,
}

impl Embedding {
    pub fn identity(tree: &Tree) -> Embedding {
        Embedding {
            edges: (0..tree.edge_count()).collect(),
            nodes: (0..tree.node_count()).collect(),
        }
    }

    /// Input component: the input on `edges[e]` for the input on `e`.
    pub fn inputs(&self, source: &Tree, target: &Tree) -> Vec<usize> {
        (0..source.poly().p2().len())
            .map(|m| {
                let e = source.poly().s().apply(m);
                target.consumer(self.edges[e]).expect("embeddings send inputs to inputs")
            })
            .collect()
    }

    pub fn to_poly_map(&self, source: &Tree, target: &Tree) -> Result<PolyMap, PolyError> {
        let inputs = (0..source.poly().p2().len())
            .map(|m| {
                let e = source.poly().s().apply(m);
                target
                    .consumer(self.edges[e])
                    .ok_or(PolyError::SquareNotCommuting("left"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        PolyMap::from_indices(source.poly(), target.poly(), self.edges.clone(), self.nodes.clone(), inputs)
    }

    pub fn from_poly_map(map: &PolyMap) -> Embedding {
        Embedding {
            edges: map.a0().to_vec(),
            nodes: map.a1().to_vec(),
        }
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &Embedding) -> Embedding {
        Embedding {
            edges: self.edges.iter().map(|&e| next.edges[e]).collect(),
            nodes: self.nodes.iter().map(|&b| next.nodes[b]).collect(),
        }
    }

    /// The image of the source as a subtree of the target.
    pub fn image(&self, source: &Tree, target: &Tree) -> Subtree {
        if source.is_trivial() {
            target.trivial_subtree(self.edges[source.root()])
        } else {
            target.subtree_from_nodes(&self.nodes).unwrap()
        }
    }

    pub fn is_root_preserving(&self, source: &Tree, target: &Tree) -> bool {
        self.edges[source.root()] == target.root()
    }

    /// Whether the image is an ideal subtree.
    pub fn is_ideal(&self, source: &Tree, target: &Tree) -> bool {
        self.image(source, target) == target.ideal_subtree(self.edges[source.root()])
    }
}

/// All embeddings `s -> t`, found top-down: the root goes to any edge, and a
/// node goes to the node producing the image of its output, with its inputs
/// matched bijectively.
pub fn hom_temb(s: &Tree, t: &Tree) -> Vec<Embedding> {
    let mut out = Vec::new();
    if s.edge_count() > t.edge_count() || s.node_count() > t.node_count() {
        return out;
    }
    for y in 0..t.edge_count() {
        let mut edges = vec![usize::MAX; s.edge_count()];
        let mut nodes = vec![usize::MAX; s.node_count()];
        edges[s.root()] = y;
        extend_embedding(s, t, vec![s.root()], &mut edges, &mut nodes, &mut out);
    }
    out.sort();
    out
}

fn extend_embedding(
    s: &Tree,
    t: &Tree,
    mut pending: Vec<usize>,
    edges: &mut Vec<usize>,
    nodes: &mut Vec<usize>,
    out: &mut Vec<Embedding>,
) {
    let Some(x) = pending.pop() else {
        out.push(Embedding {
            edges: edges.clone(),
            nodes: nodes.clone(),
        });
        return;
    };
    let Some(b) = s.producer(x) else {
        extend_embedding(s, t, pending, edges, nodes, out);
        return;
    };
    let Some(c) = t.producer(edges[x]) else {
        return;
    };
    if s.arity(b) != t.arity(c) {
        return;
    }
    nodes[b] = c;
    let (ins, tins) = (s.inputs(b), t.inputs(c));
    for perm in tins.iter().copied().permutations(tins.len()) {
        for (&e, &f) in ins.iter().zip(&perm) {
            edges[e] = f;
        }
        let mut next = pending.clone();
        next.extend(&ins);
        extend_embedding(s, t, next, edges, nodes, out);
    }
}

/// Isomorphisms `s -> t`: the root-preserving embeddings between trees of
/// the same size.
pub fn isomorphisms(s: &Tree, t: &Tree) -> Vec<Embedding> {
    if s.edge_count() != t.edge_count() || s.node_count() != t.node_count() || s.canonical_form() != t.canonical_form() {
        return Vec::new();
    }
    hom_temb(s, t)
        .into_iter()
        .filter(|e| e.edges[s.root()] == t.root())
        .collect()
}

pub fn automorphisms(t: &Tree) -> Vec<Embedding> {
    isomorphisms(t, t)
}

/// Size of the automorphism group: at each node, the product over classes
/// of isomorphic sibling branches of (multiplicity)!, times the
/// automorphisms of the branches.
pub fn automorphism_count(t: &Tree) -> usize {
    let mut count = 1;
    for b in 0..t.node_count() {
        let mut classes: BTreeMap<String, usize> = BTreeMap::new();
        for e in t.inputs(b) {
            *classes.entry(t.canonical_at(e)).or_default() += 1;
        }
        count *= classes.values().map(|&k| crate::factorial(k)).product::<usize>();
    }
    count
}

pub fn are_isomorphic(s: &Tree, t: &Tree) -> bool {
    s.canonical_form() == t.canonical_form()
}

/// The pushout of `upper` and `lower` over the trivial tree, gluing the root
/// of `upper` to the leaf `leaf` of `lower`.
#[derive(Clone, Debug)]
pub struct Grafting {
    pub tree: Tree,
    /// Root-preserving embedding of the lower tree.
    pub lower: Embedding,
    /// Ideal embedding of the upper tree.
    pub upper: Embedding,
}

/// Grafts `upper` onto the leaf `leaf` of `lower`. The glued edge keeps the
/// leaf's label; labels of `upper` that clash with `lower` get primes.
pub fn graft(upper: &Tree, lower: &Tree, leaf: usize) -> Result<Grafting, TreeError> {
    if !lower.is_leaf(leaf) {
        return Err(TreeError::NotALeaf(lower.edge_label(leaf).clone()));
    }
    let point = FinSet::singleton("*");
    let f = FinMap::new(point.clone(), lower.poly().p0().clone(), vec![leaf]).unwrap();
    let g = FinMap::new(point, upper.poly().p0().clone(), vec![upper.root()]).unwrap();
    let po = pushout_over_singleton(&f, &g).expect("singleton sources");

    let mut taken: HashSet<String> = lower.poly().p0().iter().map(|l| l.to_string()).collect();
    let mut names = vec![String::new(); po.set.len()];
    for (i, l) in lower.poly().p0().iter().enumerate() {
        names[po.left.apply(i)] = l.to_string();
    }
    for (i, l) in upper.poly().p0().iter().enumerate() {
        if i != upper.root() {
            let name = fresh(l.as_str(), &taken);
            taken.insert(name.clone());
            names[po.right.apply(i)] = name;
        }
    }
    let rename = |set: &FinSet, lower_set: &FinSet| -> (Vec<String>, Vec<String>) {
        let mut taken: HashSet<String> = lower_set.iter().map(|l| l.to_string()).collect();
        let low: Vec<String> = lower_set.iter().map(|l| l.to_string()).collect();
        let up = set
            .iter()
            .map(|l| {
                let name = fresh(l.as_str(), &taken);
                taken.insert(name.clone());
                name
            })
            .collect();
        (low, up)
    };
    let (low1, up1) = rename(upper.poly().p1(), lower.poly().p1());
    let (low2, up2) = rename(upper.poly().p2(), lower.poly().p2());
    let n1 = low1.len();
    let n2 = low2.len();
    let p0 = FinSet::new(names).unwrap();
    let p1 = FinSet::new(low1.into_iter().chain(up1)).unwrap();
    let p2 = FinSet::new(low2.into_iter().chain(up2)).unwrap();
    let lp = lower.poly();
    let up = upper.poly();
    let s = (0..lp.p2().len())
        .map(|m| po.left.apply(lp.s().apply(m)))
        .chain((0..up.p2().len()).map(|m| po.right.apply(up.s().apply(m))))
        .collect();
    let p = (0..lp.p2().len())
        .map(|m| lp.p().apply(m))
        .chain((0..up.p2().len()).map(|m| n1 + up.p().apply(m)))
        .collect();
    let t = (0..lp.p1().len())
        .map(|b| po.left.apply(lp.output(b)))
        .chain((0..up.p1().len()).map(|b| po.right.apply(up.output(b))))
        .collect();
    let _ = n2;
    let tree = certify_tree(&PolyEndo::from_indices(p0, p1, p2, s, p, t)?)?;
    Ok(Grafting {
        lower: Embedding {
            edges: po.left.images().to_vec(),
            nodes: (0..lp.p1().len()).collect(),
        },
        upper: Embedding {
            edges: po.right.images().to_vec(),
            nodes: (0..up.p1().len()).map(|b| n1 + b).collect(),
        },
        tree,
    })
}

/// Factorisation of an embedding as a root-preserving embedding followed by
/// an ideal embedding, through the ideal subtree at the image of the root.
#[derive(Clone, Debug)]
pub struct RootIdealFactorisation {
    pub middle: Tree,
    pub subtree: Subtree,
    pub root_preserving: Embedding,
    pub ideal: Embedding,
}

pub fn factor_root_ideal(s: &Tree, t: &Tree, phi: &Embedding) -> RootIdealFactorisation {
    let subtree = t.ideal_subtree(phi.edges[s.root()]);
    let (middle, ideal) = t.subtree_as_tree(&subtree);
    let e_ix: HashMap<usize, usize> = ideal.edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let b_ix: HashMap<usize, usize> = ideal.nodes.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let root_preserving = Embedding {
        edges: phi.edges.iter().map(|e| e_ix[e]).collect(),
        nodes: phi.nodes.iter().map(|b| b_ix[b]).collect(),
    };
    RootIdealFactorisation {
        middle,
        subtree,
        root_preserving,
        ideal,
    }
}

/// Abstract tree shapes up to isomorphism.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    Edge,
    Node(Vec<Shape>),
}

impl Shape {
    pub fn corolla(n: usize) -> Shape {
        Shape::Node(vec![Shape::Edge; n])
    }

    pub fn linear(n: usize) -> Shape {
        (0..n).fold(Shape::Edge, |acc, _| Shape::Node(vec![acc]))
    }

    pub fn edges(&self) -> usize {
        match self {
            Shape::Edge => 1,
            Shape::Node(ch) => 1 + ch.iter().map(Shape::edges).sum::<usize>(),
        }
    }

    pub fn nodes(&self) -> usize {
        match self {
            Shape::Edge => 0,
            Shape::Node(ch) => 1 + ch.iter().map(Shape::nodes).sum::<usize>(),
        }
    }

    pub fn encode(&self) -> String {
        match self {
            Shape::Edge => "|".to_string(),
            Shape::Node(ch) => {
                let mut parts: Vec<String> = ch.iter().map(Shape::encode).collect();
                parts.sort();
                format!("({})", parts.concat())
            }
        }
    }

    /// Parses the canonical-form syntax (`|`, `(..)`), in any child order.
    pub fn parse(s: &str) -> Option<Shape> {
        fn go(bytes: &[u8], i: &mut usize) -> Option<Shape> {
            match bytes.get(*i)? {
                b'|' => {
                    *i += 1;
                    Some(Shape::Edge)
                }
                b'(' => {
                    *i += 1;
                    let mut ch = Vec::new();
                    while *bytes.get(*i)? != b')' {
                        ch.push(go(bytes, i)?);
                    }
                    *i += 1;
                    Some(Shape::Node(ch))
                }
                _ => None,
            }
        }
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut i = 0;
        let shape = go(s.as_bytes(), &mut i)?;
        (i == s.len()).then_some(shape)
    }

    /// Sorts children recursively into canonical order.
    pub fn canonical(&self) -> Shape {
        Shape::parse(&self.encode()).unwrap()
    }
}

/// All shapes with exactly `n` edges, in canonical order. With
/// `nullary = false`, nodes have at least one input.
pub fn shapes_with_edges(n: usize, nullary: bool) -> Vec<Shape> {
    let mut memo: HashMap<usize, Vec<Shape>> = HashMap::new();
    let mut out = shapes_rec(n, nullary, &mut memo);
    out.sort_by_key(Shape::encode);
    out
}

fn shapes_rec(n: usize, nullary: bool, memo: &mut HashMap<usize, Vec<Shape>>) -> Vec<Shape> {
    if let Some(v) = memo.get(&n) {
        return v.clone();
    }
    let mut out = Vec::new();
    if n == 1 {
        out.push(Shape::Edge);
        if nullary {
            out.push(Shape::Node(vec![]));
        }
    } else if n > 1 {
        // A node whose children use n-1 edges in total, as a multiset of
        // shapes listed in non-increasing canonical order.
        let mut pool: Vec<(usize, Shape, String)> = Vec::new();
        for k in 1..n {
            for s in shapes_rec(k, nullary, memo) {
                let code = s.encode();
                pool.push((k, s, code));
            }
        }
        pool.sort_by(|a, b| a.2.cmp(&b.2));
        let mut children = Vec::new();
        multisets(&pool, 0, n - 1, &mut children, &mut out);
    }
    memo.insert(n, out.clone());
    out
}

fn multisets(pool: &[(usize, Shape, String)], from: usize, budget: usize, acc: &mut Vec<Shape>, out: &mut Vec<Shape>) {
    if budget == 0 {
        out.push(Shape::Node(acc.clone()));
        return;
    }
    for i in from..pool.len() {
        if pool[i].0 <= budget {
            acc.push(pool[i].1.clone());
            multisets(pool, i, budget - pool[i].0, acc, out);
            acc.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn chain2() -> Tree {
        Tree::linear(2)
    }

    /// Every nonempty node subset, generated and certified directly.
    fn naive_subtree_count(t: &Tree) -> usize {
        let mut count = t.edge_count();
        for mask in 1u32..(1 << t.node_count()) {
            let nodes: Vec<usize> = (0..t.node_count()).filter(|b| mask & (1 << b) != 0).collect();
            let mut edges: Vec<usize> = nodes
                .iter()
                .flat_map(|&b| std::iter::once(t.output(b)).chain(t.inputs(b)))
                .collect();
            edges.sort();
            edges.dedup();
            let names: Vec<String> = edges.iter().map(|&e| t.edge_label(e).to_string()).collect();
            let spec: Vec<(String, Vec<String>, String)> = nodes
                .iter()
                .map(|&b| {
                    (
                        t.node_label(b).to_string(),
                        t.inputs(b).iter().map(|&e| t.edge_label(e).to_string()).collect(),
                        t.edge_label(t.output(b)).to_string(),
                    )
                })
                .collect();
            if certify_tree(&PolyEndo::from_spec(&names, &spec).unwrap()).is_ok() {
                count += 1;
            }
        }
        count
    }

    fn brute_force_automorphisms(t: &Tree) -> usize {
        let n = t.edge_count();
        crate::permutations(n)
            .into_iter()
            .filter(|perm| {
                let nodes: Option<Vec<usize>> = (0..t.node_count())
                    .map(|b| t.producer(perm[t.output(b)]))
                    .collect();
                nodes.is_some_and(|nodes| {
                    Embedding {
                        edges: perm.clone(),
                        nodes,
                    }
                    .to_poly_map(t, t)
                    .is_ok()
                })
            })
            .count()
    }

    #[test]
    fn small_examples_certify() {
        let trivial = PolyEndo::from_spec(&["x"], &[]).unwrap();
        assert!(certify_tree(&trivial).unwrap().is_trivial());
        let nullary = PolyEndo::from_spec(&["r"], &[("b", vec![], "r")]).unwrap();
        let t = certify_tree(&nullary).unwrap();
        assert_eq!((t.edge_count(), t.leaves().len()), (1, 0));
        let unary = PolyEndo::from_spec(&["l", "r"], &[("u", vec!["l"], "r")]).unwrap();
        let t = certify_tree(&unary).unwrap();
        assert_eq!(t.edge_label(t.root()).as_str(), "r");
    }

    #[test]
    fn axioms_are_named() {
        let shared = PolyEndo::from_spec(&["a", "r"], &[("u", vec!["a"], "r"), ("v", vec![], "r")]).unwrap();
        assert_eq!(certify_tree(&shared).unwrap_err().axiom(), Some(Axiom::OutputsDistinct));
        let empty = PolyEndo::from_spec::<&str>(&[], &[]).unwrap();
        assert_eq!(certify_tree(&empty).unwrap_err(), TreeError::SBadComplement { size: 0 });
        let loop2 = PolyEndo::from_spec(&["a", "b"], &[("u", vec!["a"], "b"), ("v", vec!["b"], "a")]).unwrap();
        assert_eq!(certify_tree(&loop2).unwrap_err().axiom(), Some(Axiom::SingleRoot));
        let detached =
            PolyEndo::from_spec(&["r", "a", "b"], &[("u", vec!["a"], "b"), ("v", vec!["b"], "a")]).unwrap();
        assert!(matches!(certify_tree(&detached).unwrap_err(), TreeError::SigmaDiverges { .. }));
    }

    #[test]
    fn one_node_trees() {
        let t = Tree::one_node_tree(&FinSet::empty());
        assert_eq!((t.edge_count(), t.leaves().len()), (1, 0));
        let t = Tree::one_node_tree(&FinSet::new(["a", "b"]).unwrap());
        assert_eq!((t.edge_count(), t.leaves().len()), (3, 2));
        for n in 0..5 {
            let t = Tree::corolla(n);
            assert_eq!(t.enumerate_subtrees().len(), n + 2);
        }
    }

    #[test]
    fn order_on_small_trees() {
        let t = Tree::trivial("x");
        assert!(t.leq(0, 0));
        assert_eq!(t.distance(0, 0), Ok(0));
        let c = chain2();
        let leaf = c.leaves()[0];
        assert!(c.leq(leaf, c.root()));
        assert_eq!(c.distance(leaf, c.root()), Ok(2));
        let b = Tree::corolla(2);
        let (l1, l2) = (b.leaves()[0], b.leaves()[1]);
        assert!(!b.comparable(l1, l2));
        assert!(b.distance(l1, l2).is_err());
        assert_eq!(b.join(l1, l2), b.root());
    }

    #[test]
    fn subtree_counts_match_naive_enumeration() {
        assert_eq!(Tree::trivial("x").enumerate_subtrees().len(), 1);
        assert_eq!(Tree::trivial("x").enumerate_marked_subtrees().len(), 1);
        assert_eq!(chain2().enumerate_subtrees().len(), 6);
        assert_eq!(Tree::corolla(2).enumerate_subtrees().len(), 4);
        for n in 1..=6 {
            for shape in shapes_with_edges(n, true) {
                let t = Tree::from_shape(&shape);
                assert_eq!(t.enumerate_subtrees().len(), naive_subtree_count(&t), "{}", shape.encode());
            }
        }
    }

    #[test]
    fn ideal_and_prune_partition_nodes() {
        for n in 1..=6 {
            for shape in shapes_with_edges(n, true) {
                let t = Tree::from_shape(&shape);
                for z in 0..t.edge_count() {
                    let d = t.ideal_subtree(z);
                    let c = t.prune(z);
                    assert_eq!(d.root, z);
                    assert!(c.leaves.contains(&z) || c.is_trivial() && c.root == z);
                    let mut all: Vec<usize> = d.nodes.iter().chain(&c.nodes).copied().collect();
                    all.sort();
                    assert_eq!(all, (0..t.node_count()).collect::<Vec<_>>());
                    let de = d.edges(&t);
                    let shared: Vec<usize> = c.edges(&t).into_iter().filter(|e| de.contains(e)).collect();
                    assert_eq!(shared, vec![z]);
                    assert!(d.leaves.iter().all(|&l| t.is_leaf(l)));
                }
                assert_eq!(t.ideal_subtree(t.root()), t.maximal_subtree());
                assert!(t.prune(t.root()).is_trivial());
            }
        }
    }

    #[test]
    fn ideal_and_prune_on_chain() {
        let c = chain2();
        let inner = c.inner_edges()[0];
        assert_eq!(c.ideal_subtree(inner).nodes.len(), 1);
        assert_eq!(c.prune(inner).nodes.len(), 1);
        assert_eq!(c.prune(c.leaves()[0]), c.maximal_subtree());
        assert!(c.ideal_subtree(c.leaves()[0]).is_trivial());
    }

    #[test]
    fn incomparability_three_ways() {
        for n in 1..=6 {
            for shape in shapes_with_edges(n, true) {
                let t = Tree::from_shape(&shape);
                let subs = t.enumerate_subtrees();
                for x in 0..t.edge_count() {
                    for y in 0..t.edge_count() {
                        if x == y {
                            continue;
                        }
                        let dx = t.ideal_subtree(x).edges(&t);
                        let dy = t.ideal_subtree(y).edges(&t);
                        let disjoint = dx.iter().all(|e| !dy.contains(e));
                        let incomparable = !t.comparable(x, y);
                        let common = subs.iter().any(|s| s.leaves.contains(&x) && s.leaves.contains(&y));
                        assert_eq!(disjoint, incomparable);
                        assert_eq!(incomparable, common);
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_determines_subtree() {
        for n in 1..=6 {
            for shape in shapes_with_edges(n, true) {
                let t = Tree::from_shape(&shape);
                for s in t.enumerate_subtrees() {
                    assert_eq!(t.subtree_with_boundary(s.root, &s.leaves), Some(s));
                }
            }
        }
    }

    #[test]
    fn grafting_small_trees() {
        let triv = Tree::trivial("x");
        let c = Tree::corolla(2);
        let g = graft(&triv, &c, c.leaves()[0]).unwrap();
        assert!(are_isomorphic(&g.tree, &c));
        let u = Tree::linear(1);
        let g = graft(&u, &u, u.leaves()[0]).unwrap();
        assert_eq!((g.tree.edge_count(), g.tree.node_count()), (3, 2));
        assert!(are_isomorphic(&g.tree, &chain2()));
        let g = graft(&u, &c, c.leaves()[0]).unwrap();
        assert_eq!((g.tree.edge_count(), g.tree.node_count()), (4, 2));
        assert!(g.lower.is_root_preserving(&c, &g.tree));
        assert!(g.upper.is_ideal(&u, &g.tree));
        assert_eq!(graft(&u, &c, c.root()).unwrap_err(), TreeError::NotALeaf("e0".into()));
    }

    #[test]
    fn recursive_decomposition_regrafts() {
        assert!(matches!(Tree::trivial("x").recursive_decompose(), Decomposition::Trivial(0)));
        let c = Tree::corolla(3);
        match c.recursive_decompose() {
            Decomposition::Node { branches, .. } => assert!(branches.iter().all(|(_, b)| b.is_trivial())),
            _ => panic!(),
        }
        for n in 1..=6 {
            for shape in shapes_with_edges(n, true) {
                let t = Tree::from_shape(&shape);
                let back = t.regraft(&t.recursive_decompose()).unwrap();
                assert!(are_isomorphic(&back, &t));
                let back = t.regraft_from_one_node_subtrees().unwrap();
                assert!(are_isomorphic(&back, &t));
            }
        }
    }

    #[test]
    fn canonical_form_is_invariant_and_separating() {
        let a = PolyEndo::from_spec(&["r", "x", "y"], &[("v", vec!["x", "y"], "r")]).unwrap();
        let b = PolyEndo::from_spec(&["r", "x", "y"], &[("v", vec!["y", "x"], "r")]).unwrap();
        assert_eq!(
            certify_tree(&a).unwrap().canonical_form(),
            certify_tree(&b).unwrap().canonical_form()
        );
        assert_ne!(chain2().canonical_form(), Tree::corolla(2).canonical_form());
        // Equal forms exactly when an isomorphism exists.
        let trees: Vec<Tree> = (1..=5)
            .flat_map(|n| shapes_with_edges(n, true))
            .map(|s| Tree::from_shape(&s))
            .collect();
        for s in &trees {
            for t in &trees {
                let iso = s.edge_count() == t.edge_count()
                    && s.node_count() == t.node_count()
                    && hom_temb(s, t).iter().any(|e| e.edges[s.root()] == t.root());
                assert_eq!(iso, are_isomorphic(s, t));
            }
        }
    }

    #[test]
    fn automorphism_counts() {
        assert_eq!(automorphisms(&Tree::trivial("x")).len(), 1);
        assert_eq!(automorphisms(&Tree::corolla(2)).len(), 2);
        let t = Tree::from_shape(&Shape::parse("((|)(|)(||))").unwrap());
        assert_eq!(automorphisms(&t).len(), 4);
        let t = Tree::from_shape(&Shape::parse("((|)(|)|)").unwrap());
        assert_eq!(automorphisms(&t).len(), 2);
        for n in 1..=6 {
            for shape in shapes_with_edges(n, true) {
                let t = Tree::from_shape(&shape);
                let brute = brute_force_automorphisms(&t);
                assert_eq!(automorphisms(&t).len(), brute);
                assert_eq!(automorphism_count(&t), brute);
            }
        }
    }

    #[test]
    fn embeddings_of_small_trees() {
        let t = chain2();
        assert_eq!(hom_temb(&Tree::trivial("x"), &t).len(), t.edge_count());
        assert_eq!(hom_temb(&Tree::corolla(2), &Tree::corolla(2)).len(), 2);
        assert!(hom_temb(&Tree::corolla(1), &Tree::trivial("x")).is_empty());
    }

    #[test]
    fn embeddings_preserve_distance() {
        let trees: Vec<Tree> = (1..=5)
            .flat_map(|n| shapes_with_edges(n, true))
            .map(|s| Tree::from_shape(&s))
            .collect();
        for s in &trees {
            for t in &trees {
                for e in hom_temb(s, t) {
                    let map = e.to_poly_map(s, t).unwrap();
                    assert!(map.is_injective());
                    for x in 0..s.edge_count() {
                        for y in 0..s.edge_count() {
                            if let Ok(d) = s.distance(x, y) {
                                assert_eq!(t.distance(e.edges[x], e.edges[y]), Ok(d));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn root_ideal_factorisation_is_unique() {
        let trees: Vec<Tree> = (1..=5)
            .flat_map(|n| shapes_with_edges(n, true))
            .map(|s| Tree::from_shape(&s))
            .collect();
        for s in &trees {
            for t in &trees {
                for phi in hom_temb(s, t) {
                    let f = factor_root_ideal(s, t, &phi);
                    assert_eq!(f.root_preserving.then(&f.ideal), phi);
                    assert!(f.root_preserving.is_root_preserving(s, &f.middle));
                    assert!(f.ideal.is_ideal(&f.middle, t));
                    // Any other middle subtree admitting such a factorisation
                    // is the same subtree.
                    for sub in t.enumerate_subtrees() {
                        let (m, inc) = t.subtree_as_tree(&sub);
                        if !inc.is_ideal(&m, t) {
                            continue;
                        }
                        let through = hom_temb(s, &m).into_iter().any(|r| {
                            r.is_root_preserving(s, &m) && r.then(&inc) == phi
                        });
                        if through {
                            assert_eq!(sub, f.subtree);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn shape_counts() {
        let stump_free: Vec<usize> = (1..=6).map(|n| shapes_with_edges(n, false).len()).collect();
        assert_eq!(stump_free, vec![1, 1, 2, 4, 9, 20]);
        for n in 1..=6 {
            for s in shapes_with_edges(n, true) {
                assert_eq!(s.edges(), n);
                assert_eq!(Tree::from_shape(&s).canonical_form(), s.encode());
            }
        }
    }

    #[test]
    fn edges_nodes_leaves_balance() {
        for n in 1..=6 {
            for s in shapes_with_edges(n, true) {
                let t = Tree::from_shape(&s);
                assert_eq!(t.edge_count(), t.node_count() + t.leaves().len());
            }
        }
    }
}
