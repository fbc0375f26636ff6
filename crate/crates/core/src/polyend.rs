//! Polynomial endofunctors `P0 <-s- P2 -p-> P1 -t-> P0` and their
//! cartesian morphisms.
//!
//! Elements of `P0` are colours (edges, for trees), elements of `P1` are
//! operations (nodes), and `P2` holds one element per input slot of each
//! operation. The fibre `p⁻¹(b)` lists the inputs of `b` in stored order;
//! that order carries no meaning but is used to serialise labels.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use itertools::Itertools;
use thiserror::Error;

use crate::finset::{FinMap, FinSet, FinSetError, Label};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error(transparent)]
    Set(#[from] FinSetError),
    #[error("structure map `{0}` has the wrong source or target")]
    WrongEnds(&'static str),
    #[error("the {0} square does not commute")]
    SquareNotCommuting(&'static str),
    #[error("middle square is not cartesian at node `{node}`: fibre of size {source_arity} maps to fibre of size {target_arity}")]
    MiddleNotCartesian {
        node: Label,
        source_arity: usize,
        target_arity: usize,
    },
    #[error("colour sets differ")]
    ColourMismatch,
    #[error("arity {needed} exceeds the truncation bound {bound}")]
    BoundExceeded { bound: usize, needed: usize },
    #[error("`{0}` is not a node")]
    UnknownNode(String),
    #[error("`{0}` is not an edge")]
    UnknownEdge(String),
    #[error("structure map does not land in the base")]
    NotOverBase,
}

/// A polynomial endofunctor, stored as three finite sets and three maps.
#[derive(Clone)]
pub struct PolyEndo {
    p0: FinSet,
    p1: FinSet,
    p2: FinSet,
    s: FinMap,
    p: FinMap,
    t: FinMap,
    fibres: Vec<Vec<usize>>,
    arity_bound: Option<usize>,
}

fn reindexed(map: &FinMap, source: &FinSet, target: &FinSet, name: &'static str) -> Result<FinMap, PolyError> {
    if map.source() != source || map.target() != target {
        return Err(PolyError::WrongEnds(name));
    }
    if map.source().same_order(source) && map.target().same_order(target) {
        return Ok(FinMap::new(source.clone(), target.clone(), map.images().to_vec())?);
    }
    Ok(FinMap::from_fn(source.clone(), target.clone(), |i| {
        let image = map.apply_label(source.label(i)).unwrap();
        target.index_of(image).unwrap()
    })?)
}

impl PolyEndo {
    pub fn new(p0: FinSet, p1: FinSet, p2: FinSet, s: FinMap, p: FinMap, t: FinMap) -> Result<Self, PolyError> {
        let s = reindexed(&s, &p2, &p0, "s")?;
        let p = reindexed(&p, &p2, &p1, "p")?;
        let t = reindexed(&t, &p1, &p0, "t")?;
        let mut fibres = vec![Vec::new(); p1.len()];
        for (m, &b) in p.images().iter().enumerate() {
            fibres[b].push(m);
        }
        Ok(PolyEndo {
            p0,
            p1,
            p2,
            s,
            p,
            t,
            fibres,
            arity_bound: None,
        })
    }

    /// Builds from index vectors: `s[m]`, `p[m]` for each input and `t[b]`
    /// for each node.
    pub fn from_indices(
        p0: FinSet,
        p1: FinSet,
        p2: FinSet,
        s: Vec<usize>,
        p: Vec<usize>,
        t: Vec<usize>,
    ) -> Result<Self, PolyError> {
        let s = FinMap::new(p2.clone(), p0.clone(), s)?;
        let p = FinMap::new(p2.clone(), p1.clone(), p)?;
        let t = FinMap::new(p1.clone(), p0.clone(), t)?;
        PolyEndo::new(p0, p1, p2, s, p, t)
    }

    /// Builds from a list of colours and a list of `(node, inputs, output)`
    /// triples. Input elements are labelled `node:input`, with a `#k` suffix
    /// when a node lists the same input twice.
    pub fn from_spec<S: AsRef<str>>(edges: &[S], nodes: &[(S, Vec<S>, S)]) -> Result<Self, PolyError> {
        let p0 = FinSet::new(edges.iter().map(|e| e.as_ref()))?;
        let p1 = FinSet::new(nodes.iter().map(|(b, _, _)| b.as_ref()))?;
        let mut p2_labels = Vec::new();
        let (mut s, mut p, mut t) = (Vec::new(), Vec::new(), Vec::new());
        for (bi, (b, inputs, out)) in nodes.iter().enumerate() {
            let out = out.as_ref();
            t.push(p0.index_of_str(out).ok_or_else(|| PolyError::UnknownEdge(out.to_string()))?);
            let mut seen: HashMap<&str, usize> = HashMap::new();
            for e in inputs {
                let e = e.as_ref();
                let ei = p0.index_of_str(e).ok_or_else(|| PolyError::UnknownEdge(e.to_string()))?;
                let k = seen.entry(e).or_insert(0);
                let label = if *k == 0 {
                    format!("{}:{e}", b.as_ref())
                } else {
                    format!("{}:{e}#{k}", b.as_ref())
                };
                *k += 1;
                p2_labels.push(label);
                s.push(ei);
                p.push(bi);
            }
        }
        let p2 = FinSet::new(p2_labels)?;
        PolyEndo::from_indices(p0, p1, p2, s, p, t)
    }

    /// Marks this endofunctor as the truncation of one with arities beyond
    /// `bound`.
    pub fn with_arity_bound(mut self, bound: usize) -> Self {
        self.arity_bound = Some(bound);
        self
    }

    /// The arity bound, if this endofunctor is a truncation.
    pub fn arity_bound(&self) -> Option<usize> {
        self.arity_bound
    }

    /// Fails when `arity` lies beyond the truncation bound.
    pub fn check_arity(&self, arity: usize) -> Result<(), PolyError> {
        match self.arity_bound {
            Some(bound) if arity > bound => Err(PolyError::BoundExceeded { bound, needed: arity }),
            _ => Ok(()),
        }
    }

    pub fn p0(&self) -> &FinSet {
        &self.p0
    }

    pub fn p1(&self) -> &FinSet {
        &self.p1
    }

    pub fn p2(&self) -> &FinSet {
        &self.p2
    }

    pub fn s(&self) -> &FinMap {
        &self.s
    }

    pub fn p(&self) -> &FinMap {
        &self.p
    }

    pub fn t(&self) -> &FinMap {
        &self.t
    }

    /// Inputs of node `b`, in stored order.
    pub fn fibre(&self, b: usize) -> &[usize] {
        &self.fibres[b]
    }

    pub fn arity(&self, b: usize) -> usize {
        self.fibres[b].len()
    }

    pub fn max_arity(&self) -> usize {
        self.fibres.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Colours of the inputs of `b`, in fibre order.
    pub fn input_colours(&self, b: usize) -> Vec<usize> {
        self.fibres[b].iter().map(|&m| self.s.apply(m)).collect()
    }

    pub fn output(&self, b: usize) -> usize {
        self.t.apply(b)
    }

    /// Nodes with output colour `c`.
    pub fn nodes_with_output(&self, c: usize) -> Vec<usize> {
        (0..self.p1.len()).filter(|&b| self.t.apply(b) == c).collect()
    }

    pub fn node_index(&self, name: &str) -> Result<usize, PolyError> {
        self.p1
            .index_of_str(name)
            .ok_or_else(|| PolyError::UnknownNode(name.to_string()))
    }

    pub fn edge_index(&self, name: &str) -> Result<usize, PolyError> {
        self.p0
            .index_of_str(name)
            .ok_or_else(|| PolyError::UnknownEdge(name.to_string()))
    }

    /// Total number of elements across the three sets.
    pub fn size(&self) -> usize {
        self.p0.len() + self.p1.len() + self.p2.len()
    }
}

impl fmt::Debug for PolyEndo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for PolyEndo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "edges {}", self.p0)?;
        for b in 0..self.p1.len() {
            let ins = self.input_colours(b).iter().map(|&c| self.p0.label(c)).join(", ");
            write!(f, "; {} : [{}] -> {}", self.p1.label(b), ins, self.p0.label(self.output(b)))?;
        }
        Ok(())
    }
}

/// Structural equality of the underlying diagrams, label for label.
impl PartialEq for PolyEndo {
    fn eq(&self, other: &Self) -> bool {
        self.p0 == other.p0
            && self.p1 == other.p1
            && self.p2 == other.p2
            && self.s == other.s
            && self.p == other.p
            && self.t == other.t
    }
}

impl Eq for PolyEndo {}

/// `I <- I -> I -> I` with identities: every colour has one unary operation.
pub fn identity_endofunctor(colours: &FinSet) -> PolyEndo {
    let n = colours.len();
    let id: Vec<usize> = (0..n).collect();
    PolyEndo::from_indices(colours.clone(), colours.clone(), colours.clone(), id.clone(), id.clone(), id).unwrap()
}

/// The free-monoid endofunctor, keeping operations of arity at most
/// `max_arity`. Nodes are `0..=max_arity`, inputs are `(i,n)` with `i < n`.
pub fn free_monoid_truncated(max_arity: usize) -> PolyEndo {
    let p0 = FinSet::singleton("*");
    let p1 = FinSet::new((0..=max_arity).map(|n| n.to_string())).unwrap();
    let mut labels = Vec::new();
    let mut p = Vec::new();
    for n in 0..=max_arity {
        for i in 0..n {
            labels.push(format!("({i},{n})"));
            p.push(n);
        }
    }
    let p2 = FinSet::new(labels).unwrap();
    let s = vec![0; p2.len()];
    let t = vec![0; p1.len()];
    PolyEndo::from_indices(p0, p1, p2, s, p, t)
        .unwrap()
        .with_arity_bound(max_arity)
}

/// A cartesian morphism `source -> target`.
#[derive(Clone, Debug)]
pub struct PolyMap {
    source: PolyEndo,
    target: PolyEndo,
    a0: Vec<usize>,
    a1: Vec<usize>,
    a2: Vec<usize>,
}

/// Checks the three squares and the fibrewise cartesian condition.
pub fn validate_map(source: &PolyEndo, target: &PolyEndo, a0: &FinMap, a1: &FinMap, a2: &FinMap) -> Result<PolyMap, PolyError> {
    let a0 = reindexed(a0, source.p0(), target.p0(), "a0")?;
    let a1 = reindexed(a1, source.p1(), target.p1(), "a1")?;
    let a2 = reindexed(a2, source.p2(), target.p2(), "a2")?;
    PolyMap::from_indices(
        source,
        target,
        a0.images().to_vec(),
        a1.images().to_vec(),
        a2.images().to_vec(),
    )
}

impl PolyMap {
    /// Validates a morphism given as index vectors.
    pub fn from_indices(
        source: &PolyEndo,
        target: &PolyEndo,
        a0: Vec<usize>,
        a1: Vec<usize>,
        a2: Vec<usize>,
    ) -> Result<PolyMap, PolyError> {
        FinMap::new(source.p0().clone(), target.p0().clone(), a0.clone())?;
        FinMap::new(source.p1().clone(), target.p1().clone(), a1.clone())?;
        FinMap::new(source.p2().clone(), target.p2().clone(), a2.clone())?;
        for m in 0..source.p2().len() {
            if target.s().apply(a2[m]) != a0[source.s().apply(m)] {
                return Err(PolyError::SquareNotCommuting("left"));
            }
        }
        for m in 0..source.p2().len() {
            if target.p().apply(a2[m]) != a1[source.p().apply(m)] {
                return Err(PolyError::SquareNotCommuting("middle"));
            }
        }
        for b in 0..source.p1().len() {
            if target.t().apply(a1[b]) != a0[source.t().apply(b)] {
                return Err(PolyError::SquareNotCommuting("right"));
            }
        }
        for b in 0..source.p1().len() {
            let fibre = source.fibre(b);
            let target_fibre = target.fibre(a1[b]);
            let mut images: Vec<usize> = fibre.iter().map(|&m| a2[m]).collect();
            images.sort_unstable();
            images.dedup();
            if fibre.len() != target_fibre.len() || images.len() != fibre.len() {
                return Err(PolyError::MiddleNotCartesian {
                    node: source.p1().label(b).clone(),
                    source_arity: fibre.len(),
                    target_arity: target_fibre.len(),
                });
            }
        }
        Ok(PolyMap {
            source: source.clone(),
            target: target.clone(),
            a0,
            a1,
            a2,
        })
    }

    pub fn identity(p: &PolyEndo) -> PolyMap {
        PolyMap {
            source: p.clone(),
            target: p.clone(),
            a0: (0..p.p0().len()).collect(),
            a1: (0..p.p1().len()).collect(),
            a2: (0..p.p2().len()).collect(),
        }
    }

    pub fn source(&self) -> &PolyEndo {
        &self.source
    }

    pub fn target(&self) -> &PolyEndo {
        &self.target
    }

    pub fn a0(&self) -> &[usize] {
        &self.a0
    }

    pub fn a1(&self) -> &[usize] {
        &self.a1
    }

    pub fn a2(&self) -> &[usize] {
        &self.a2
    }

    pub fn map0(&self) -> FinMap {
        FinMap::new(self.source.p0().clone(), self.target.p0().clone(), self.a0.clone()).unwrap()
    }

    pub fn map1(&self) -> FinMap {
        FinMap::new(self.source.p1().clone(), self.target.p1().clone(), self.a1.clone()).unwrap()
    }

    pub fn map2(&self) -> FinMap {
        FinMap::new(self.source.p2().clone(), self.target.p2().clone(), self.a2.clone()).unwrap()
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &PolyMap) -> Result<PolyMap, PolyError> {
        if self.target != next.source {
            return Err(PolyError::NotOverBase);
        }
        let a0 = self.map0().then(&next.map0())?;
        let a1 = self.map1().then(&next.map1())?;
        let a2 = self.map2().then(&next.map2())?;
        PolyMap::from_indices(
            &self.source,
            &next.target,
            a0.images().to_vec(),
            a1.images().to_vec(),
            a2.images().to_vec(),
        )
    }

    pub fn is_injective(&self) -> bool {
        self.map0().is_injective() && self.map1().is_injective() && self.map2().is_injective()
    }

    pub fn is_surjective(&self) -> bool {
        self.map0().is_surjective() && self.map1().is_surjective() && self.map2().is_surjective()
    }

    pub fn is_isomorphism(&self) -> bool {
        self.map0().is_bijective() && self.map1().is_bijective() && self.map2().is_bijective()
    }
}

impl PartialEq for PolyMap {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
            && self.target == other.target
            && self.map0() == other.map0()
            && self.map1() == other.map1()
            && self.map2() == other.map2()
    }
}

impl Eq for PolyMap {}

/// A set over the colours of some endofunctor.
#[derive(Clone, Debug)]
pub struct Over {
    pub set: FinSet,
    pub colour: Vec<usize>,
}

impl Over {
    pub fn new(map: &FinMap) -> Self {
        Over {
            set: map.source().clone(),
            colour: map.images().to_vec(),
        }
    }

    pub fn elements_of_colour(&self, c: usize) -> Vec<usize> {
        (0..self.set.len()).filter(|&x| self.colour[x] == c).collect()
    }
}

/// Evaluation: elements are `b[x1,..,xn]` with one `x` over each input colour
/// of `b` (in fibre order); the result lies over `t(b)`.
pub fn evaluate(p: &PolyEndo, x: &FinMap) -> Result<FinMap, PolyError> {
    if x.target() != p.p0() {
        return Err(PolyError::ColourMismatch);
    }
    let x = reindexed(x, x.source(), p.p0(), "x")?;
    let over = Over::new(&x);
    let mut labels = Vec::new();
    let mut colour = Vec::new();
    for b in 0..p.p1().len() {
        let choices: Vec<Vec<usize>> = p
            .input_colours(b)
            .into_iter()
            .map(|c| over.elements_of_colour(c))
            .collect();
        for tuple in choices.into_iter().multi_cartesian_product_or_unit() {
            let args = tuple.iter().map(|&i| over.set.label(i)).join(",");
            labels.push(format!("{}[{}]", p.p1().label(b), args));
            colour.push(p.output(b));
        }
    }
    Ok(FinMap::new(FinSet::new(labels)?, p.p0().clone(), colour)?)
}

/// `multi_cartesian_product` yields nothing for an empty list of factors;
/// the empty product has one element.
pub(crate) trait ProductOrUnit: Iterator<Item = Vec<usize>> + Sized {
    fn multi_cartesian_product_or_unit(self) -> Box<dyn Iterator<Item = Vec<usize>>>;
}

impl<I> ProductOrUnit for I
where
    I: Iterator<Item = Vec<usize>> + 'static,
{
    fn multi_cartesian_product_or_unit(self) -> Box<dyn Iterator<Item = Vec<usize>>> {
        let factors: Vec<Vec<usize>> = self.collect();
        if factors.is_empty() {
            Box::new(std::iter::once(Vec::new()))
        } else {
            Box::new(factors.into_iter().multi_cartesian_product())
        }
    }
}

/// `P ∘ Q` with the bookkeeping needed to talk about its elements.
#[derive(Clone, Debug)]
pub struct Composite {
    pub poly: PolyEndo,
    /// Node `k` of the composite is `(b, f)`: a node `b` of `P` and, for each
    /// input of `b` in fibre order, a node of `Q`.
    pub nodes: Vec<(usize, Vec<usize>)>,
    /// Input `k` of the composite is `(node, i, m)`: the composite node, the
    /// position `i` in the fibre of `b`, and an input `m` of `f(i)` in `Q`.
    pub inputs: Vec<(usize, usize, usize)>,
    node_lookup: HashMap<(usize, Vec<usize>), usize>,
}

impl Composite {
    pub fn node_index(&self, b: usize, f: &[usize]) -> Option<usize> {
        self.node_lookup.get(&(b, f.to_vec())).copied()
    }
}

/// `P ∘ Q`, so that `(P ∘ Q)(X) ≅ P(Q(X))`. Nodes are labelled `b(q1,..,qn)`
/// with the `q`s in the fibre order of `b`; inputs are labelled
/// `b(q1,..,qn)/i/m` for position `i` and input `m` of `qi`.
pub fn compose(p: &PolyEndo, q: &PolyEndo) -> Result<Composite, PolyError> {
    compose_where(p, q, |_, _| true)
}

/// Like [`compose`], keeping only the nodes `(b, f)` accepted by `keep`.
pub fn compose_where(p: &PolyEndo, q: &PolyEndo, keep: impl Fn(usize, &[usize]) -> bool) -> Result<Composite, PolyError> {
    if p.p0() != q.p0() {
        return Err(PolyError::ColourMismatch);
    }
    let q = if p.p0().same_order(q.p0()) {
        q.clone()
    } else {
        relabel_colours(q, p.p0())
    };
    let mut nodes = Vec::new();
    for b in 0..p.p1().len() {
        let choices: Vec<Vec<usize>> = p
            .input_colours(b)
            .into_iter()
            .map(|c| q.nodes_with_output(c))
            .collect();
        for f in choices.into_iter().multi_cartesian_product_or_unit() {
            if keep(b, &f) {
                nodes.push((b, f));
            }
        }
    }
    compose_nodes(p, &q, nodes)
}

/// The part of `P ∘ Q` on an explicit list of nodes `(b, f)`, for when the
/// full product is too large to filter.
pub fn compose_nodes(p: &PolyEndo, q: &PolyEndo, nodes: Vec<(usize, Vec<usize>)>) -> Result<Composite, PolyError> {
    if p.p0() != q.p0() {
        return Err(PolyError::ColourMismatch);
    }
    let q = if p.p0().same_order(q.p0()) {
        q.clone()
    } else {
        relabel_colours(q, p.p0())
    };
    for (b, f) in &nodes {
        let ok = *b < p.p1().len()
            && f.len() == p.arity(*b)
            && p.input_colours(*b).iter().zip(f).all(|(&c, &qi)| qi < q.p1().len() && q.output(qi) == c);
        if !ok {
            return Err(PolyError::ColourMismatch);
        }
    }
    let node_labels: Vec<String> = nodes
        .iter()
        .map(|(b, f)| format!("{}({})", p.p1().label(*b), f.iter().map(|&c| q.p1().label(c)).join(",")))
        .collect();
    let mut inputs = Vec::new();
    let mut input_labels = Vec::new();
    let (mut s, mut pp) = (Vec::new(), Vec::new());
    for (k, (_, f)) in nodes.iter().enumerate() {
        for (i, &qi) in f.iter().enumerate() {
            for &m in q.fibre(qi) {
                inputs.push((k, i, m));
                input_labels.push(format!("{}/{}/{}", node_labels[k], i, q.p2().label(m)));
                s.push(q.s().apply(m));
                pp.push(k);
            }
        }
    }
    let t = nodes.iter().map(|(b, _)| p.output(*b)).collect();
    let poly = PolyEndo::from_indices(
        p.p0().clone(),
        FinSet::new(node_labels)?,
        FinSet::new(input_labels)?,
        s,
        pp,
        t,
    )?;
    let node_lookup = nodes.iter().cloned().enumerate().map(|(k, n)| (n, k)).collect();
    Ok(Composite {
        poly,
        nodes,
        inputs,
        node_lookup,
    })
}

fn relabel_colours(q: &PolyEndo, colours: &FinSet) -> PolyEndo {
    let to = |c: usize| colours.index_of(q.p0().label(c)).unwrap();
    PolyEndo::from_indices(
        colours.clone(),
        q.p1().clone(),
        q.p2().clone(),
        q.s().images().iter().map(|&c| to(c)).collect(),
        q.p().images().to_vec(),
        q.t().images().iter().map(|&c| to(c)).collect(),
    )
    .unwrap()
}

/// Constraints on an isomorphism search, e.g. commuting with maps to a base.
pub struct IsoConstraints<'a> {
    pub edge: &'a dyn Fn(usize, usize) -> bool,
    pub node: &'a dyn Fn(usize, usize) -> bool,
    pub input: &'a dyn Fn(usize, usize) -> bool,
}

impl Default for IsoConstraints<'_> {
    fn default() -> Self {
        IsoConstraints {
            edge: &|_, _| true,
            node: &|_, _| true,
            input: &|_, _| true,
        }
    }
}

/// An isomorphism `a -> b`, if one exists.
pub fn find_isomorphism(a: &PolyEndo, b: &PolyEndo) -> Option<PolyMap> {
    isomorphisms_with(a, b, &IsoConstraints::default(), 1).pop()
}

/// Up to `limit` isomorphisms `a -> b` satisfying the constraints, found by
/// backtracking over nodes, then their inputs, then leftover colours.
pub fn isomorphisms_with(a: &PolyEndo, b: &PolyEndo, cons: &IsoConstraints<'_>, limit: usize) -> Vec<PolyMap> {
    let mut out = Vec::new();
    if a.p0().len() != b.p0().len() || a.p1().len() != b.p1().len() || a.p2().len() != b.p2().len() {
        return out;
    }
    let arities = |p: &PolyEndo| {
        let mut v: Vec<usize> = (0..p.p1().len()).map(|n| p.arity(n)).collect();
        v.sort_unstable();
        v
    };
    if arities(a) != arities(b) {
        return out;
    }
    let mut search = IsoSearch {
        a,
        b,
        cons,
        a0: vec![None; a.p0().len()],
        b0: vec![None; b.p0().len()],
        a1: vec![None; a.p1().len()],
        b1: vec![None; b.p1().len()],
        a2: vec![None; a.p2().len()],
        limit,
        out: &mut out,
    };
    search.nodes(0);
    out
}

struct IsoSearch<'a, 'c> {
    a: &'a PolyEndo,
    b: &'a PolyEndo,
    cons: &'a IsoConstraints<'c>,
    a0: Vec<Option<usize>>,
    b0: Vec<Option<usize>>,
    a1: Vec<Option<usize>>,
    b1: Vec<Option<usize>>,
    a2: Vec<Option<usize>>,
    limit: usize,
    out: &'a mut Vec<PolyMap>,
}

impl IsoSearch<'_, '_> {
    fn done(&self) -> bool {
        self.out.len() >= self.limit
    }

    /// Assigns edge `x -> y`, returning whether it was newly assigned, or
    /// `None` on conflict.
    fn bind_edge(&mut self, x: usize, y: usize) -> Option<bool> {
        match (self.a0[x], self.b0[y]) {
            (Some(y2), _) if y2 == y => Some(false),
            (None, None) if (self.cons.edge)(x, y) => {
                self.a0[x] = Some(y);
                self.b0[y] = Some(x);
                Some(true)
            }
            _ => None,
        }
    }

    fn unbind_edge(&mut self, x: usize, y: usize) {
        self.a0[x] = None;
        self.b0[y] = None;
    }

    fn nodes(&mut self, n: usize) {
        if self.done() {
            return;
        }
        if n == self.a.p1().len() {
            self.edges(0);
            return;
        }
        for m in 0..self.b.p1().len() {
            if self.b1[m].is_some() || self.a.arity(n) != self.b.arity(m) || !(self.cons.node)(n, m) {
                continue;
            }
            let Some(new) = self.bind_edge(self.a.output(n), self.b.output(m)) else {
                continue;
            };
            self.a1[n] = Some(m);
            self.b1[m] = Some(n);
            self.inputs(n, 0);
            self.a1[n] = None;
            self.b1[m] = None;
            if new {
                self.unbind_edge(self.a.output(n), self.b.output(m));
            }
            if self.done() {
                return;
            }
        }
    }

    fn inputs(&mut self, n: usize, i: usize) {
        if self.done() {
            return;
        }
        let fibre = self.a.fibre(n);
        if i == fibre.len() {
            self.nodes(n + 1);
            return;
        }
        let x = fibre[i];
        let m = self.a1[n].unwrap();
        for &y in self.b.fibre(m) {
            if self.a2[..].contains(&Some(y)) || !(self.cons.input)(x, y) {
                continue;
            }
            let Some(new) = self.bind_edge(self.a.s().apply(x), self.b.s().apply(y)) else {
                continue;
            };
            self.a2[x] = Some(y);
            self.inputs(n, i + 1);
            self.a2[x] = None;
            if new {
                self.unbind_edge(self.a.s().apply(x), self.b.s().apply(y));
            }
            if self.done() {
                return;
            }
        }
    }

    fn edges(&mut self, x: usize) {
        if self.done() {
            return;
        }
        if x == self.a.p0().len() {
            let map = PolyMap::from_indices(
                self.a,
                self.b,
                self.a0.iter().map(|v| v.unwrap()).collect(),
                self.a1.iter().map(|v| v.unwrap()).collect(),
                self.a2.iter().map(|v| v.unwrap()).collect(),
            )
            .expect("search only builds valid maps");
            self.out.push(map);
            return;
        }
        if self.a0[x].is_some() {
            self.edges(x + 1);
            return;
        }
        for y in 0..self.b.p0().len() {
            if let Some(true) = self.bind_edge(x, y) {
                self.edges(x + 1);
                self.unbind_edge(x, y);
                if self.done() {
                    return;
                }
            }
        }
    }
}

/// Isomorphism over a common base: `qa -> base` and `qb -> base`.
pub fn find_isomorphism_over(qa: &PolyMap, qb: &PolyMap) -> Option<PolyMap> {
    let edge = |x: usize, y: usize| qa.a0()[x] == qb.a0()[y];
    let node = |x: usize, y: usize| qa.a1()[x] == qb.a1()[y];
    let input = |x: usize, y: usize| qa.a2()[x] == qb.a2()[y];
    let cons = IsoConstraints {
        edge: &edge,
        node: &node,
        input: &input,
    };
    isomorphisms_with(qa.source(), qb.source(), &cons, 1).pop()
}

/// An endofunctor together with a map into a fixed base.
#[derive(Clone, Debug)]
pub struct SlicedObject {
    pub total: PolyEndo,
    pub structure: PolyMap,
}

impl SlicedObject {
    pub fn new(structure: PolyMap) -> Self {
        SlicedObject {
            total: structure.source().clone(),
            structure,
        }
    }

    pub fn base(&self) -> &PolyEndo {
        self.structure.target()
    }
}

/// The bipartite category of elements: objects `P0 + P1`, generating arrows
/// `t:b` from `t(b)` to `b` and `s:m` from `s(m)` to `p(m)`.
#[derive(Clone, Debug)]
pub struct ElementsCategory {
    pub objects: FinSet,
    pub arrows: FinSet,
    pub source: FinMap,
    pub target: FinMap,
    colours: usize,
    nodes: usize,
}

impl ElementsCategory {
    /// Object index of colour `c`.
    pub fn colour(&self, c: usize) -> usize {
        c
    }

    /// Object index of node `b`.
    pub fn node(&self, b: usize) -> usize {
        self.colours + b
    }

    /// Arrow index of the output arrow of node `b`.
    pub fn output_arrow(&self, b: usize) -> usize {
        b
    }

    /// Arrow index of the arrow of input `m`.
    pub fn input_arrow(&self, m: usize) -> usize {
        self.nodes + m
    }
}

pub fn elements_category(p: &PolyEndo) -> ElementsCategory {
    let (n0, n1) = (p.p0().len(), p.p1().len());
    let objects = FinSet::new(
        p.p0()
            .iter()
            .map(|x| format!("c:{x}"))
            .chain(p.p1().iter().map(|b| format!("n:{b}"))),
    )
    .unwrap();
    let arrows = FinSet::new(
        p.p1()
            .iter()
            .map(|b| format!("t:{b}"))
            .chain(p.p2().iter().map(|m| format!("s:{m}"))),
    )
    .unwrap();
    let source = (0..n1)
        .map(|b| p.output(b))
        .chain((0..p.p2().len()).map(|m| p.s().apply(m)))
        .collect();
    let target = (0..n1)
        .map(|b| n0 + b)
        .chain((0..p.p2().len()).map(|m| n0 + p.p().apply(m)))
        .collect();
    ElementsCategory {
        source: FinMap::new(arrows.clone(), objects.clone(), source).unwrap(),
        target: FinMap::new(arrows.clone(), objects.clone(), target).unwrap(),
        objects,
        arrows,
        colours: n0,
        nodes: n1,
    }
}

/// A presheaf on `el(P)`: a set per object and, per generating arrow
/// `a: u -> v`, a map `X(v) -> X(u)`.
#[derive(Clone, Debug)]
pub struct ElPresheaf {
    pub base: PolyEndo,
    pub values: Vec<FinSet>,
    pub action: Vec<FinMap>,
}

impl ElPresheaf {
    pub fn check(&self) -> Result<(), PolyError> {
        let el = elements_category(&self.base);
        if self.values.len() != el.objects.len() || self.action.len() != el.arrows.len() {
            return Err(PolyError::NotOverBase);
        }
        for a in 0..el.arrows.len() {
            let (u, v) = (el.source.apply(a), el.target.apply(a));
            if self.action[a].source() != &self.values[v] || self.action[a].target() != &self.values[u] {
                return Err(PolyError::NotOverBase);
            }
        }
        Ok(())
    }
}

/// Value at a colour is its preimage in `Q0`, value at a node its preimage
/// in `Q1`; arrows read off outputs and the inputs matched by the fibre
/// bijection.
pub fn slice_to_presheaf(q: &SlicedObject) -> ElPresheaf {
    let base = q.base().clone();
    let total = &q.total;
    let map = &q.structure;
    let el = elements_category(&base);
    let mut values = Vec::with_capacity(el.objects.len());
    let colour_members: Vec<Vec<usize>> = (0..base.p0().len())
        .map(|c| (0..total.p0().len()).filter(|&x| map.a0()[x] == c).collect())
        .collect();
    let node_members: Vec<Vec<usize>> = (0..base.p1().len())
        .map(|b| (0..total.p1().len()).filter(|&n| map.a1()[n] == b).collect())
        .collect();
    for members in &colour_members {
        values.push(FinSet::new(members.iter().map(|&x| total.p0().label(x).clone())).unwrap());
    }
    for members in &node_members {
        values.push(FinSet::new(members.iter().map(|&n| total.p1().label(n).clone())).unwrap());
    }
    let position = |members: &[usize], x: usize| members.iter().position(|&y| y == x).unwrap();
    let mut action = Vec::with_capacity(el.arrows.len());
    for b in 0..base.p1().len() {
        let c = base.output(b);
        let images = node_members[b]
            .iter()
            .map(|&n| position(&colour_members[c], total.output(n)))
            .collect();
        action.push(FinMap::new(values[el.node(b)].clone(), values[el.colour(c)].clone(), images).unwrap());
    }
    for m in 0..base.p2().len() {
        let (b, c) = (base.p().apply(m), base.s().apply(m));
        let images = node_members[b]
            .iter()
            .map(|&n| {
                let input = total
                    .fibre(n)
                    .iter()
                    .copied()
                    .find(|&k| map.a2()[k] == m)
                    .expect("cartesian");
                position(&colour_members[c], total.s().apply(input))
            })
            .collect();
        action.push(FinMap::new(values[el.node(b)].clone(), values[el.colour(c)].clone(), images).unwrap());
    }
    ElPresheaf { base, values, action }
}

/// Inverse recipe: `Q0 = Σ X(c)`, `Q1 = Σ X(b)`, `Q2 = Σ_m X(p(m))`, with
/// elements labelled `object/element` and inputs `input/element`.
pub fn presheaf_to_slice(x: &ElPresheaf) -> Result<SlicedObject, PolyError> {
    x.check()?;
    let base = &x.base;
    let el = elements_category(base);
    let mut q0 = Vec::new();
    let mut a0 = Vec::new();
    let mut offset0 = Vec::new();
    for c in 0..base.p0().len() {
        offset0.push(q0.len());
        for e in x.values[el.colour(c)].iter() {
            q0.push(format!("{}/{}", base.p0().label(c), e));
            a0.push(c);
        }
    }
    let mut q1 = Vec::new();
    let mut a1 = Vec::new();
    let mut t = Vec::new();
    let mut offset1 = Vec::new();
    for b in 0..base.p1().len() {
        offset1.push(q1.len());
        let out = &x.action[el.output_arrow(b)];
        for (k, n) in x.values[el.node(b)].iter().enumerate() {
            q1.push(format!("{}/{}", base.p1().label(b), n));
            a1.push(b);
            t.push(offset0[base.output(b)] + out.apply(k));
        }
    }
    let (mut q2, mut a2, mut s, mut p) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for b in 0..base.p1().len() {
        for &m in base.fibre(b) {
            let arrow = &x.action[el.input_arrow(m)];
            for (k, n) in x.values[el.node(b)].iter().enumerate() {
                q2.push(format!("{}/{}", base.p2().label(m), n));
                a2.push(m);
                s.push(offset0[base.s().apply(m)] + arrow.apply(k));
                p.push(offset1[b] + k);
            }
        }
    }
    let total = PolyEndo::from_indices(FinSet::new(q0)?, FinSet::new(q1)?, FinSet::new(q2)?, s, p, t)?;
    let structure = PolyMap::from_indices(&total, base, a0, a1, a2)?;
    Ok(SlicedObject::new(structure))
}

/// The colimit of the canonical diagram of `P`: one trivial tree per colour,
/// one corolla per node, glued along the output and input arrows of
/// `el(P)`. Computed componentwise with a union-find on edges.
pub fn canonical_colimit(p: &PolyEndo) -> PolyEndo {
    // Edge slots: one per colour (the trivial trees), then per node its
    // root followed by one leaf per input.
    let n0 = p.p0().len();
    let mut root_slot = Vec::new();
    let mut leaf_slot = vec![0; p.p2().len()];
    let mut slots = n0;
    for b in 0..p.p1().len() {
        root_slot.push(slots);
        slots += 1;
        for &m in p.fibre(b) {
            leaf_slot[m] = slots;
            slots += 1;
        }
    }
    let mut uf = UnionFind::new(slots);
    for b in 0..p.p1().len() {
        uf.union(p.output(b), root_slot[b]);
    }
    for m in 0..p.p2().len() {
        uf.union(p.s().apply(m), leaf_slot[m]);
    }
    let mut class_of = BTreeMap::new();
    let mut labels = Vec::new();
    for slot in 0..slots {
        let r = uf.find(slot);
        if !class_of.contains_key(&r) {
            class_of.insert(r, labels.len());
            labels.push(format!("[{}]", labels.len()));
        }
    }
    let edge = |slot: usize, uf: &mut UnionFind| class_of[&uf.find(slot)];
    let s: Vec<usize> = (0..p.p2().len()).map(|m| edge(leaf_slot[m], &mut uf)).collect();
    let t: Vec<usize> = (0..p.p1().len()).map(|b| edge(root_slot[b], &mut uf)).collect();
    PolyEndo::from_indices(
        FinSet::new(labels).unwrap(),
        p.p1().clone(),
        p.p2().clone(),
        s,
        p.p().images().to_vec(),
        t,
    )
    .unwrap()
}

/// Whether the canonical diagram of `P` has colimit `P`, computed both
/// directly and through the round trip of the identity slice.
pub fn canonical_colimit_check(p: &PolyEndo) -> bool {
    let direct = find_isomorphism(&canonical_colimit(p), p).is_some();
    let identity = SlicedObject::new(PolyMap::identity(p));
    let round = presheaf_to_slice(&slice_to_presheaf(&identity))
        .map(|q| find_isomorphism_over(&q.structure, &identity.structure).is_some())
        .unwrap_or(false);
    direct && round
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut y = x;
        while self.parent[y] != r {
            let next = self.parent[y];
            self.parent[y] = r;
            y = next;
        }
        r
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finset::{is_cartesian, Square};

    fn binary() -> PolyEndo {
        PolyEndo::from_spec(&["c"], &[("b", vec!["c", "c"], "c")]).unwrap()
    }

    fn arities(list: &[usize]) -> PolyEndo {
        let nodes: Vec<(String, Vec<String>, String)> = list
            .iter()
            .enumerate()
            .map(|(i, &n)| (format!("b{i}"), vec!["c".to_string(); n], "c".to_string()))
            .collect();
        PolyEndo::from_spec(&["c".to_string()], &nodes).unwrap()
    }

    fn over(p: &PolyEndo, labels: &[&str], colours: &[usize]) -> FinMap {
        FinMap::new(FinSet::new(labels.iter().copied()).unwrap(), p.p0().clone(), colours.to_vec()).unwrap()
    }

    #[test]
    fn identity_on_one_colour() {
        let id = identity_endofunctor(&FinSet::singleton("x"));
        assert_eq!((id.p0().len(), id.p1().len(), id.p2().len()), (1, 1, 1));
        let empty = identity_endofunctor(&FinSet::empty());
        assert_eq!(empty.size(), 0);
    }

    #[test]
    fn identity_evaluates_to_its_argument() {
        let id = identity_endofunctor(&FinSet::new(["a", "b"]).unwrap());
        let x = over(&id, &["u", "v", "w"], &[0, 1, 1]);
        let fx = evaluate(&id, &x).unwrap();
        assert_eq!(fx.source().len(), 3);
        let mut colours = fx.images().to_vec();
        colours.sort();
        assert_eq!(colours, vec![0, 1, 1]);
    }

    #[test]
    fn free_monoid_fibres() {
        let m0 = free_monoid_truncated(0);
        assert_eq!((m0.p1().len(), m0.p2().len()), (1, 0));
        let m2 = free_monoid_truncated(2);
        assert_eq!(m2.p2().len(), 3);
        let m3 = free_monoid_truncated(3);
        assert_eq!(m3.p2().len(), 6);
        assert_eq!((0..4).map(|n| m3.arity(n)).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(m3.check_arity(4), Err(PolyError::BoundExceeded { bound: 3, needed: 4 }));
    }

    #[test]
    fn evaluation_counts_follow_sum_of_products() {
        let b = binary();
        assert_eq!(evaluate(&b, &over(&b, &["x", "y"], &[0, 0])).unwrap().source().len(), 4);
        let p = arities(&[0, 2]);
        assert_eq!(evaluate(&p, &over(&p, &["x", "y", "z"], &[0, 0, 0])).unwrap().source().len(), 10);
    }

    #[test]
    fn identity_map_validates_and_binary_to_unary_does_not() {
        let b = binary();
        let id = PolyMap::identity(&b);
        assert!(PolyMap::from_indices(&b, &b, id.a0().to_vec(), id.a1().to_vec(), id.a2().to_vec()).is_ok());
        let u = arities(&[1]);
        let err = PolyMap::from_indices(&b, &u, vec![0], vec![0], vec![0, 0]).unwrap_err();
        assert!(matches!(err, PolyError::MiddleNotCartesian { source_arity: 2, target_arity: 1, .. }));
    }

    #[test]
    fn fibrewise_check_agrees_with_pullback_test() {
        // Inclusion of the one-node tree at `u` into the two-node chain.
        let chain = PolyEndo::from_spec(&["a", "b", "c"], &[("u", vec!["a"], "b"), ("v", vec!["b"], "c")]).unwrap();
        let one = PolyEndo::from_spec(&["a", "b"], &[("u", vec!["a"], "b")]).unwrap();
        let map = PolyMap::from_indices(&one, &chain, vec![0, 1], vec![0], vec![0]).unwrap();
        let sq = Square {
            top: map.map2(),
            left: one.p().clone(),
            right: chain.p().clone(),
            bottom: map.map1(),
        };
        assert!(is_cartesian(&sq).unwrap());
    }

    #[test]
    fn non_commuting_square_is_named() {
        let chain = PolyEndo::from_spec(&["a", "b", "c"], &[("u", vec!["a"], "b"), ("v", vec!["b"], "c")]).unwrap();
        let one = PolyEndo::from_spec(&["a", "b"], &[("u", vec!["a"], "b")]).unwrap();
        let err = PolyMap::from_indices(&one, &chain, vec![0, 2], vec![0], vec![0]).unwrap_err();
        assert_eq!(err, PolyError::SquareNotCommuting("right"));
    }

    #[test]
    fn composite_of_binary_with_itself_has_one_quaternary_node() {
        let b = binary();
        let bb = compose(&b, &b).unwrap();
        assert_eq!(bb.poly.p1().len(), 1);
        assert_eq!(bb.poly.arity(0), 4);
    }

    #[test]
    fn composite_of_nullary_and_unary() {
        let p = arities(&[0, 1]);
        let pp = compose(&p, &p).unwrap();
        let mut ar: Vec<usize> = (0..3).map(|k| pp.poly.arity(k)).collect();
        ar.sort();
        assert_eq!(pp.poly.p1().len(), 3);
        assert_eq!(ar, vec![0, 0, 1]);
    }

    #[test]
    fn composite_evaluates_like_iterated_evaluation() {
        let p = arities(&[0, 2]);
        let q = arities(&[1, 1]);
        let x = over(&p, &["x", "y"], &[0, 0]);
        let lhs = evaluate(&compose(&p, &q).unwrap().poly, &x).unwrap();
        let rhs = evaluate(&p, &evaluate(&q, &x).unwrap()).unwrap();
        assert_eq!(lhs.source().len(), rhs.source().len());
    }

    #[test]
    fn compose_needs_common_colours() {
        let a = binary();
        let b = PolyEndo::from_spec(&["d"], &[("b", vec!["d"], "d")]).unwrap();
        assert_eq!(compose(&a, &b).unwrap_err(), PolyError::ColourMismatch);
    }

    #[test]
    fn elements_of_identity_are_two_parallel_arrows() {
        let el = elements_category(&identity_endofunctor(&FinSet::singleton("x")));
        assert_eq!(el.objects.len(), 2);
        assert_eq!(el.arrows.len(), 2);
        assert_eq!(el.source.images(), &[0, 0]);
        assert_eq!(el.target.images(), &[1, 1]);
    }

    #[test]
    fn elements_of_truncated_free_monoid() {
        let el = elements_category(&free_monoid_truncated(2));
        assert_eq!(el.objects.len(), 4);
        assert_eq!(el.arrows.len(), 3 + 3);
    }

    #[test]
    fn identity_slice_gives_singletons_at_nodes() {
        let b = binary();
        let id = SlicedObject::new(PolyMap::identity(&b));
        let x = slice_to_presheaf(&id);
        assert!(x.values.iter().all(|v| v.len() == 1));
        let back = presheaf_to_slice(&x).unwrap();
        assert!(find_isomorphism_over(&back.structure, &id.structure).is_some());
    }

    #[test]
    fn canonical_colimit_of_small_examples() {
        assert!(canonical_colimit_check(&binary()));
        assert!(canonical_colimit_check(&arities(&[0, 1, 3])));
        assert!(canonical_colimit_check(&free_monoid_truncated(3)));
    }

    #[test]
    fn isomorphism_search_distinguishes_shapes() {
        let chain = PolyEndo::from_spec(&["a", "b", "c"], &[("u", vec!["a"], "b"), ("v", vec!["b"], "c")]).unwrap();
        let other = PolyEndo::from_spec(&["x", "y", "z"], &[("p", vec!["y"], "z"), ("q", vec!["x"], "y")]).unwrap();
        assert!(find_isomorphism(&chain, &other).is_some());
        let loose = PolyEndo::from_spec(&["x", "y", "z"], &[("p", vec!["x"], "y"), ("q", vec!["x"], "z")]).unwrap();
        assert!(find_isomorphism(&chain, &loose).is_none());
    }
}
