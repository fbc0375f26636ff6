//! Labelled finite sets and maps between them.
//!
//! Everything else in the crate is a diagram of [`FinSet`]s and [`FinMap`]s,
//! so this module also hosts the few universal constructions the rest of the
//! crate needs: binary sums, pullbacks, pushouts over a singleton, and the
//! test for a commutative square being cartesian.
//!
//! Constructed sets get structured labels from a fixed scheme, so that the
//! same inputs always produce the same output:
//!
//! | construction | element label |
//! |---|---|
//! | sum | `L.x`, `R.y` |
//! | pullback | `(x,y)` |
//! | pushout over a point | `a=b` for the glued point, `L.x`, `R.y` otherwise |

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Cap on the size of test cones and cocones used by the universal-property
/// checks in [`universal`].
pub const DEFAULT_CONE_CAP: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FinSetError {
    #[error("duplicate label `{0}`")]
    DuplicateLabel(Label),
    #[error("unknown label `{0}`")]
    UnknownLabel(Label),
    #[error("map is undefined on `{0}`")]
    Undefined(Label),
    #[error("map has {found} images for a source of size {expected}")]
    WrongLength { expected: usize, found: usize },
    #[error("image index {index} out of range for a target of size {size}")]
    OutOfRange { index: usize, size: usize },
    #[error("maps do not share a codomain")]
    TargetMismatch,
    #[error("maps are not composable")]
    NotComposable,
    #[error("expected a map out of a singleton")]
    NotSingleton,
    #[error("square does not commute at `{0}`")]
    NonCommuting(Label),
}

/// An opaque, totally ordered atom naming an element of a finite set.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(Arc<str>);

impl Label {
    pub fn new(s: impl AsRef<str>) -> Self {
        Label(Arc::from(s.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::new(s)
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        Label(Arc::from(s))
    }
}

impl From<&String> for Label {
    fn from(s: &String) -> Self {
        Label::new(s)
    }
}

#[derive(Debug)]
struct SetInner {
    labels: Vec<Label>,
    index: HashMap<Label, usize>,
}

/// A finite set of distinct labels, iterated in stored order.
///
/// Cloning is cheap. Equality is equality of the underlying label sets; the
/// stored order only matters for iteration and for index-based maps.
#[derive(Clone)]
pub struct FinSet {
    inner: Arc<SetInner>,
}

impl FinSet {
    pub fn new<I, L>(labels: I) -> Result<Self, FinSetError>
    where
        I: IntoIterator<Item = L>,
        L: Into<Label>,
    {
        let labels: Vec<Label> = labels.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(FinSetError::DuplicateLabel(l.clone()));
            }
        }
        Ok(FinSet {
            inner: Arc::new(SetInner { labels, index }),
        })
    }

    pub fn empty() -> Self {
        FinSet::new(Vec::<Label>::new()).unwrap()
    }

    pub fn singleton(label: impl Into<Label>) -> Self {
        FinSet::new([label.into()]).unwrap()
    }

    /// `{0, 1, .., n-1}` with decimal labels.
    pub fn range(n: usize) -> Self {
        FinSet::new((0..n).map(|i| i.to_string())).unwrap()
    }

    pub fn len(&self) -> usize {
        self.inner.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.inner.labels
    }

    pub fn label(&self, i: usize) -> &Label {
        &self.inner.labels[i]
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        self.inner.index.get(label).copied()
    }

    pub fn index_of_str(&self, label: &str) -> Option<usize> {
        self.index_of(&Label::new(label))
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.inner.index.contains_key(label)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Label> {
        self.inner.labels.iter()
    }

    /// Same labels in the same order.
    pub fn same_order(&self, other: &FinSet) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.labels == other.inner.labels
    }
}

impl PartialEq for FinSet {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().all(|l| other.contains(l))
    }
}

impl Eq for FinSet {}

impl fmt::Debug for FinSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for FinSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, l) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "}}")
    }
}

/// A total map between finite sets, stored as target indices.
#[derive(Clone)]
pub struct FinMap {
    source: FinSet,
    target: FinSet,
    images: Vec<usize>,
}

impl FinMap {
    pub fn new(source: FinSet, target: FinSet, images: Vec<usize>) -> Result<Self, FinSetError> {
        if images.len() != source.len() {
            return Err(FinSetError::WrongLength {
                expected: source.len(),
                found: images.len(),
            });
        }
        if let Some(&index) = images.iter().find(|&&j| j >= target.len()) {
            return Err(FinSetError::OutOfRange {
                index,
                size: target.len(),
            });
        }
        Ok(FinMap {
            source,
            target,
            images,
        })
    }

    pub fn from_fn(source: FinSet, target: FinSet, f: impl Fn(usize) -> usize) -> Result<Self, FinSetError> {
        let images = (0..source.len()).map(f).collect();
        FinMap::new(source, target, images)
    }

    /// Builds a map from `(source label, target label)` pairs.
    pub fn from_pairs<A, B>(source: FinSet, target: FinSet, pairs: impl IntoIterator<Item = (A, B)>) -> Result<Self, FinSetError>
    where
        A: Into<Label>,
        B: Into<Label>,
    {
        let mut images = vec![None; source.len()];
        for (a, b) in pairs {
            let (a, b) = (a.into(), b.into());
            let i = source.index_of(&a).ok_or(FinSetError::UnknownLabel(a))?;
            let j = target.index_of(&b).ok_or(FinSetError::UnknownLabel(b))?;
            images[i] = Some(j);
        }
        let images = images
            .into_iter()
            .enumerate()
            .map(|(i, j)| j.ok_or_else(|| FinSetError::Undefined(source.label(i).clone())))
            .collect::<Result<Vec<_>, _>>()?;
        FinMap::new(source, target, images)
    }

    pub fn identity(set: &FinSet) -> Self {
        FinMap {
            source: set.clone(),
            target: set.clone(),
            images: (0..set.len()).collect(),
        }
    }

    pub fn source(&self) -> &FinSet {
        &self.source
    }

    pub fn target(&self) -> &FinSet {
        &self.target
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn apply_label(&self, label: &Label) -> Option<&Label> {
        self.source
            .index_of(label)
            .map(|i| self.target.label(self.images[i]))
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &FinMap) -> Result<FinMap, FinSetError> {
        if self.target.same_order(&next.source) {
            let images = self.images.iter().map(|&j| next.images[j]).collect();
            return FinMap::new(self.source.clone(), next.target.clone(), images);
        }
        if self.target != next.source {
            return Err(FinSetError::NotComposable);
        }
        let images = self
            .images
            .iter()
            .map(|&j| next.images[next.source.index_of(self.target.label(j)).unwrap()])
            .collect();
        FinMap::new(self.source.clone(), next.target.clone(), images)
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = vec![false; self.target.len()];
        self.images.iter().all(|&j| !std::mem::replace(&mut seen[j], true))
    }

    pub fn is_surjective(&self) -> bool {
        let mut seen = vec![false; self.target.len()];
        for &j in &self.images {
            seen[j] = true;
        }
        seen.into_iter().all(|b| b)
    }

    pub fn is_bijective(&self) -> bool {
        self.source.len() == self.target.len() && self.is_injective()
    }

    /// Indices of the source elements over target element `j`, in source order.
    pub fn fibre(&self, j: usize) -> Vec<usize> {
        (0..self.images.len()).filter(|&i| self.images[i] == j).collect()
    }

    pub fn inverse(&self) -> Option<FinMap> {
        if !self.is_bijective() {
            return None;
        }
        let mut inv = vec![0; self.target.len()];
        for (i, &j) in self.images.iter().enumerate() {
            inv[j] = i;
        }
        FinMap::new(self.target.clone(), self.source.clone(), inv).ok()
    }

    /// The label-level assignment, as pairs in source order.
    pub fn pairs(&self) -> impl Iterator<Item = (&Label, &Label)> + '_ {
        self.images
            .iter()
            .enumerate()
            .map(|(i, &j)| (self.source.label(i), self.target.label(j)))
    }
}

impl PartialEq for FinMap {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
            && self.target == other.target
            && self
                .pairs()
                .all(|(a, b)| other.apply_label(a) == Some(b))
    }
}

impl Eq for FinMap {}

impl fmt::Debug for FinMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.pairs()).finish()
    }
}

/// A binary coproduct with its two injections.
#[derive(Debug, Clone)]
pub struct Sum {
    pub set: FinSet,
    pub left: FinMap,
    pub right: FinMap,
}

pub fn sum(a: &FinSet, b: &FinSet) -> Sum {
    let labels = a
        .iter()
        .map(|x| format!("L.{x}"))
        .chain(b.iter().map(|y| format!("R.{y}")));
    let set = FinSet::new(labels).expect("tagged labels are distinct");
    let left = FinMap::from_fn(a.clone(), set.clone(), |i| i).unwrap();
    let right = FinMap::from_fn(b.clone(), set.clone(), |i| a.len() + i).unwrap();
    Sum { set, left, right }
}

/// Pullback of a cospan `A -f-> C <-g- B`, with its two projections.
#[derive(Debug, Clone)]
pub struct Pullback {
    pub set: FinSet,
    pub first: FinMap,
    pub second: FinMap,
    /// The underlying pairs of indices, in stored order.
    pub pairs: Vec<(usize, usize)>,
}

pub fn pullback(f: &FinMap, g: &FinMap) -> Result<Pullback, FinSetError> {
    if f.target() != g.target() {
        return Err(FinSetError::TargetMismatch);
    }
    let g = if f.target().same_order(g.target()) {
        g.clone()
    } else {
        g.then(&FinMap::from_fn(g.target().clone(), f.target().clone(), |j| {
            f.target().index_of(g.target().label(j)).unwrap()
        })?)?
    };
    let mut pairs = Vec::new();
    for x in 0..f.source().len() {
        for y in 0..g.source().len() {
            if f.apply(x) == g.apply(y) {
                pairs.push((x, y));
            }
        }
    }
    let set = FinSet::new(pairs.iter().map(|&(x, y)| {
        format!("({},{})", f.source().label(x), g.source().label(y))
    }))
    .expect("pairs are distinct");
    let first = FinMap::new(set.clone(), f.source().clone(), pairs.iter().map(|p| p.0).collect())?;
    let second = FinMap::new(set.clone(), g.source().clone(), pairs.iter().map(|p| p.1).collect())?;
    Ok(Pullback {
        set,
        first,
        second,
        pairs,
    })
}

/// A square
///
/// ```text
///   A --top--> B
///   |          |
/// left       right
///   v          v
///   C -bottom-> D
/// ```
#[derive(Debug, Clone)]
pub struct Square {
    pub top: FinMap,
    pub left: FinMap,
    pub right: FinMap,
    pub bottom: FinMap,
}

impl Square {
    pub fn check_commutes(&self) -> Result<(), FinSetError> {
        let via_top = self.top.then(&self.right)?;
        let via_left = self.left.then(&self.bottom)?;
        for (a, d) in via_top.pairs() {
            if via_left.apply_label(a) != Some(d) {
                return Err(FinSetError::NonCommuting(a.clone()));
            }
        }
        Ok(())
    }
}

/// Whether a commuting square is a pullback: the comparison map from its
/// corner into the computed pullback of `right` and `bottom` is a bijection.
pub fn is_cartesian(square: &Square) -> Result<bool, FinSetError> {
    square.check_commutes()?;
    let pb = pullback(&square.right, &square.bottom)?;
    if pb.set.len() != square.top.source().len() {
        return Ok(false);
    }
    let lookup: HashMap<(usize, usize), usize> =
        pb.pairs.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    let mut hit = vec![false; pb.set.len()];
    for a in 0..square.top.source().len() {
        let b = square
            .right
            .source()
            .index_of(square.top.target().label(square.top.apply(a)))
            .ok_or(FinSetError::NotComposable)?;
        let c = square
            .bottom
            .source()
            .index_of(square.left.target().label(square.left.apply(a)))
            .ok_or(FinSetError::NotComposable)?;
        let k = lookup[&(b, c)];
        if std::mem::replace(&mut hit[k], true) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Amalgamated sum of `A` and `B` over a singleton, with its two legs.
#[derive(Debug, Clone)]
pub struct Pushout {
    pub set: FinSet,
    pub left: FinMap,
    pub right: FinMap,
}

pub fn pushout_over_singleton(f: &FinMap, g: &FinMap) -> Result<Pushout, FinSetError> {
    if f.source().len() != 1 || g.source().len() != 1 {
        return Err(FinSetError::NotSingleton);
    }
    let (a, b) = (f.target(), g.target());
    let (ma, mb) = (f.apply(0), g.apply(0));
    let glued = format!("{}={}", a.label(ma), b.label(mb));
    let mut labels = Vec::with_capacity(a.len() + b.len() - 1);
    let mut left = Vec::with_capacity(a.len());
    for (i, x) in a.iter().enumerate() {
        left.push(labels.len());
        labels.push(if i == ma { glued.clone() } else { format!("L.{x}") });
    }
    let mut right = Vec::with_capacity(b.len());
    for (j, y) in b.iter().enumerate() {
        if j == mb {
            right.push(left[ma]);
        } else {
            right.push(labels.len());
            labels.push(format!("R.{y}"));
        }
    }
    let set = FinSet::new(labels).expect("tagged labels are distinct");
    Ok(Pushout {
        left: FinMap::new(a.clone(), set.clone(), left)?,
        right: FinMap::new(b.clone(), set.clone(), right)?,
        set,
    })
}

/// Exhaustive universal-property checks, for use at desk scale.
pub mod universal {
    use super::*;

    /// All functions `{0..n} -> {0..m}` as image vectors.
    pub fn all_functions(n: usize, m: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|f| {
                    (0..m).map(move |j| {
                        let mut g = f.clone();
                        g.push(j);
                        g
                    })
                })
                .collect();
        }
        out
    }

    /// Every cone over `A -f-> C <-g- B` from a set of size at most `cap`
    /// factors uniquely through `pb`.
    pub fn pullback_is_universal(f: &FinMap, g: &FinMap, pb: &Pullback, cap: usize) -> bool {
        for z in 0..=cap {
            for u in all_functions(z, f.source().len()) {
                for v in all_functions(z, g.source().len()) {
                    let commutes = (0..z).all(|k| {
                        f.target().label(f.apply(u[k])) == g.target().label(g.apply(v[k]))
                    });
                    if !commutes {
                        continue;
                    }
                    let factorisations = all_functions(z, pb.set.len())
                        .into_iter()
                        .filter(|h| {
                            (0..z).all(|k| pb.first.apply(h[k]) == u[k] && pb.second.apply(h[k]) == v[k])
                        })
                        .count();
                    if factorisations != 1 {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Every cocone under `A <-f- 1 -g-> B` into a set of size at most `cap`
    /// factors uniquely through `po`.
    pub fn pushout_is_universal(f: &FinMap, g: &FinMap, po: &Pushout, cap: usize) -> bool {
        for w in 1..=cap {
            for u in all_functions(f.target().len(), w) {
                for v in all_functions(g.target().len(), w) {
                    if u[f.apply(0)] != v[g.apply(0)] {
                        continue;
                    }
                    let factorisations = all_functions(po.set.len(), w)
                        .into_iter()
                        .filter(|h| {
                            (0..u.len()).all(|i| h[po.left.apply(i)] == u[i])
                                && (0..v.len()).all(|j| h[po.right.apply(j)] == v[j])
                        })
                        .count();
                    if factorisations != 1 {
                        return false;
                    }
                }
            }
        }
        true
    }
}
