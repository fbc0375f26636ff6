//! Polynomial endofunctors and trees, presented as diagrams of finite sets.
//!
//! A polynomial endofunctor is a diagram `P0 <-s- P2 -p-> P1 -t-> P0` of
//! finite sets: colours (or edges), marked inputs, and operations (or
//! nodes). Trees are the polynomial endofunctors satisfying a short list of
//! axioms, and most of tree combinatorics (subtrees, grafting, the
//! dendroidal category, free monads, nerves) becomes finite-set algebra.
//!
//! Module map:
//!
//! - [`finset`]: labelled finite sets, sums, pullbacks, pushouts over a point.
//! - [`polyend`]: endofunctors, their cartesian maps, evaluation, composition,
//!   and the category of elements.
//! - [`tree`]: certified trees, the tree order, subtrees, grafting, canonical
//!   forms, automorphisms, tree embeddings.
//! - [`ptree`]: trees decorated over an endofunctor, and bounded enumeration
//!   of all such trees as a least fixpoint.
//! - [`omega`]: free monads, morphisms of the dendroidal category, their
//!   factorisations, contractions, covers.
//! - [`presheaf`]: finite presheaves on truncated tree categories, nerves,
//!   the Segal condition, collections and flatness.
//!
//! Everything is bounded and finite. Values are immutable after
//! construction and safe to share across threads.

pub mod finset;
pub mod omega;
pub mod polyend;
pub mod presheaf;
pub mod ptree;
pub mod tree;

pub use finset::{FinMap, FinSet, Label};
pub use omega::{FreeMonad, OmegaMorphism};
pub use polyend::{PolyEndo, PolyMap};
pub use presheaf::{Collection, FinitePresheaf, NonSymCollection, Site, SiteKind};
pub use ptree::{PTerm, PTree, PTreeClassSet};
pub use tree::{Subtree, Tree};

/// Default edge bound for enumerations when the caller gives none.
pub const DEFAULT_MAX_EDGES: usize = 5;
/// Default node bound for enumerations when the caller gives none.
pub const DEFAULT_MAX_NODES: usize = 4;

/// All permutations of `0..n`, in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    use itertools::Itertools;
    (0..n).permutations(n).collect()
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}
