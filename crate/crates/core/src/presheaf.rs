//! Finite presheaves on truncated categories of trees, nerves, the Segal
//! condition, and collections.
//!
//! Sites are truncated by edge count. Their objects are the canonical trees
//! from [`all_tree_classes`] and their arrows are stored as edge maps, which
//! determine both tree embeddings and dendroidal morphisms.
//!
//! Collections carry a right action of the symmetric groups with
//! `input_j(c·σ) = input_σ(j)(c)`, so `c·(στ) = (c·σ)·τ` where `(στ)(j) =
//! σ(τ(j))`. The action is stored on the adjacent transpositions.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use itertools::Itertools;
use thiserror::Error;

use crate::finset::{FinSet, FinSetError, Label};
use crate::omega::{hom_omega, is_cover, reduced_covers, OmegaMorphism};
use crate::polyend::{PolyEndo, PolyError};
use crate::ptree::{all_tree_classes, decoration_maps, PTreeError};
use crate::tree::{hom_temb, Shape, Subtree, Tree};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PresheafError {
    #[error("node of arity {arity} exceeds the arity bound {bound} of the truncated endofunctor")]
    BoundExceeded { arity: usize, bound: usize },
    #[error("presheaves live on different sites")]
    SiteMismatch,
    #[error("tree with {edges} edges is beyond the site bound {bound}")]
    BeyondTruncation { edges: usize, bound: usize },
    #[error("not functorial at {0}")]
    NotFunctorial(String),
    #[error("the site has no corolla with {0} leaves")]
    MissingCorolla(usize),
    #[error("not a group action on arity {arity}: {reason}")]
    NotAnAction { arity: usize, reason: String },
    #[error("operation `{element}` in arity {arity} is fixed by {stabiliser:?}")]
    NotFlat {
        arity: usize,
        element: Label,
        stabiliser: Vec<Vec<usize>>,
    },
    #[error("`{0}` does not fix the colour profile of `{1}`")]
    BadFixer(String, String),
    #[error(transparent)]
    Set(#[from] FinSetError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

impl From<PTreeError> for PresheafError {
    fn from(e: PTreeError) -> Self {
        match e {
            PTreeError::ArityUnsupported { arity, bound } => PresheafError::BoundExceeded { arity, bound },
            PTreeError::Poly(p) => PresheafError::Poly(p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SiteKind {
    /// Trees and tree embeddings.
    Embeddings,
    /// Trees and dendroidal morphisms.
    Omega,
}

/// A truncated category of trees.
#[derive(Debug)]
pub struct Site {
    pub kind: SiteKind,
    pub max_edges: usize,
    pub objects: Vec<Arc<Tree>>,
    /// `homs[a][b]`: edge maps of the arrows `a -> b`.
    pub homs: Vec<Vec<Vec<Vec<usize>>>>,
    lookup: Vec<Vec<HashMap<Vec<usize>, usize>>>,
    by_form: HashMap<String, usize>,
}

impl Site {
    pub fn new(kind: SiteKind, max_edges: usize) -> Arc<Site> {
        let objects: Vec<Arc<Tree>> = all_tree_classes(max_edges).into_iter().map(Arc::new).collect();
        let homs: Vec<Vec<Vec<Vec<usize>>>> = objects
            .iter()
            .map(|a| {
                objects
                    .iter()
                    .map(|b| match kind {
                        SiteKind::Embeddings => hom_temb(a, b).into_iter().map(|e| e.edges).collect(),
                        SiteKind::Omega => hom_omega(a, b).into_iter().map(|m| m.edges).collect(),
                    })
                    .collect()
            })
            .collect();
        let lookup = homs
            .iter()
            .map(|row| {
                row.iter()
                    .map(|arrows| arrows.iter().cloned().enumerate().map(|(k, e)| (e, k)).collect())
                    .collect()
            })
            .collect();
        let by_form = objects.iter().enumerate().map(|(i, t)| (t.canonical_form(), i)).collect();
        Arc::new(Site {
            kind,
            max_edges,
            objects,
            homs,
            lookup,
            by_form,
        })
    }

    pub fn embeddings(max_edges: usize) -> Arc<Site> {
        Site::new(SiteKind::Embeddings, max_edges)
    }

    pub fn omega(max_edges: usize) -> Arc<Site> {
        Site::new(SiteKind::Omega, max_edges)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// The canonical object isomorphic to `t`.
    pub fn object_of(&self, t: &Tree) -> Option<usize> {
        self.by_form.get(&t.canonical_form()).copied()
    }

    pub fn corolla(&self, n: usize) -> Option<usize> {
        self.by_form.get(&Shape::corolla(n).encode()).copied()
    }

    pub fn trivial(&self) -> usize {
        self.by_form["|"]
    }

    pub fn arrow(&self, a: usize, b: usize, edges: &[usize]) -> Option<usize> {
        self.lookup[a][b].get(edges).copied()
    }

    /// Index of `g ∘ f` for `f: a -> b`, `g: b -> c`.
    pub fn compose(&self, a: usize, b: usize, c: usize, f: usize, g: usize) -> usize {
        let edges: Vec<usize> = self.homs[a][b][f].iter().map(|&e| self.homs[b][c][g][e]).collect();
        self.lookup[a][c][&edges]
    }

    pub fn identity(&self, a: usize) -> usize {
        let id: Vec<usize> = (0..self.objects[a].edge_count()).collect();
        self.lookup[a][a][&id]
    }

    pub fn morphism(&self, a: usize, b: usize, k: usize) -> OmegaMorphism {
        OmegaMorphism::from_edge_map(self.objects[a].clone(), self.objects[b].clone(), self.homs[a][b][k].clone())
            .expect("site arrows are morphisms")
    }

    /// The arrow `| -> a` picking edge `e`.
    pub fn edge_arrow(&self, a: usize, e: usize) -> usize {
        self.lookup[self.trivial()][a][&vec![e]]
    }

    /// For each node of object `a`: the corolla object and the arrow from it
    /// whose leaf `j` goes to the `j`-th input of the node.
    pub fn node_frames(&self, a: usize) -> Result<Vec<(usize, usize)>, PresheafError> {
        let t = &self.objects[a];
        (0..t.node_count())
            .map(|v| {
                let n = t.arity(v);
                let c = self.corolla(n).ok_or(PresheafError::MissingCorolla(n))?;
                let edges: Vec<usize> = std::iter::once(t.output(v)).chain(t.inputs(v)).collect();
                Ok((c, self.lookup[c][a][&edges]))
            })
            .collect()
    }
}

/// A presheaf with finitely many values on a site.
#[derive(Clone, Debug)]
pub struct FinitePresheaf {
    pub site: Arc<Site>,
    pub values: Vec<FinSet>,
    /// `action[a][b][k]`: the map `X(b) -> X(a)` for arrow `k: a -> b`.
    pub action: Vec<Vec<Vec<Vec<usize>>>>,
}

impl FinitePresheaf {
    /// Builds from values and a function giving the action of each arrow.
    pub fn from_fn(
        site: Arc<Site>,
        values: Vec<FinSet>,
        act: impl Fn(usize, usize, usize, usize) -> usize,
    ) -> FinitePresheaf {
        let n = site.len();
        let action = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        (0..site.homs[a][b].len())
                            .map(|k| (0..values[b].len()).map(|x| act(a, b, k, x)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        FinitePresheaf { site, values, action }
    }

    pub fn value(&self, a: usize) -> &FinSet {
        &self.values[a]
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.values.iter().map(FinSet::len).collect()
    }

    pub fn restrict(&self, a: usize, b: usize, k: usize, x: usize) -> usize {
        self.action[a][b][k][x]
    }

    /// Identities act trivially and `X(g∘f) = X(f)∘X(g)`.
    pub fn check(&self) -> Result<(), PresheafError> {
        let site = &self.site;
        let n = site.len();
        for a in 0..n {
            let id = site.identity(a);
            if self.action[a][a][id].iter().enumerate().any(|(x, &y)| x != y) {
                return Err(PresheafError::NotFunctorial(format!("identity of {}", site.objects[a].canonical_form())));
            }
        }
        for a in 0..n {
            for b in 0..n {
                for f in 0..site.homs[a][b].len() {
                    for c in 0..n {
                        for g in 0..site.homs[b][c].len() {
                            let gf = site.compose(a, b, c, f, g);
                            for x in 0..self.values[c].len() {
                                if self.action[a][c][gf][x] != self.action[a][b][f][self.action[b][c][g][x]] {
                                    return Err(PresheafError::NotFunctorial(format!(
                                        "{} -> {} -> {}",
                                        site.objects[a].canonical_form(),
                                        site.objects[b].canonical_form(),
                                        site.objects[c].canonical_form()
                                    )));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Doubles the value at object `t`, acting on the copy index trivially
    /// and landing in the first copy along arrows out of `t`. Functorial on
    /// the embeddings site, where no arrow leaves `t` and comes back.
    pub fn doubled_at(&self, t: usize) -> FinitePresheaf {
        let k = self.values[t].len();
        let mut values = self.values.clone();
        values[t] = FinSet::new(
            self.values[t]
                .iter()
                .map(|l| format!("{l}#0"))
                .chain(self.values[t].iter().map(|l| format!("{l}#1"))),
        )
        .unwrap();
        FinitePresheaf::from_fn(self.site.clone(), values, |a, b, arrow, x| {
            let base = if b == t { x % k } else { x };
            let y = self.action[a][b][arrow][base];
            if a == t && b == t {
                y + (x / k) * k
            } else {
                y
            }
        })
    }

    /// Adds one extra element at every object `s` for each arrow `s -> t`
    /// whose image is all of `t`. An extra element restricts to an extra
    /// element while the image stays whole, and otherwise to the restriction
    /// of a fixed element `x0` of `X(t)`. Functorial on both sites.
    pub fn with_extra_cell(&self, t: usize) -> Option<FinitePresheaf> {
        if self.values[t].is_empty() {
            return None;
        }
        let site = &self.site;
        let max = site.objects[t].maximal_subtree();
        let whole: Vec<Vec<usize>> = (0..site.len())
            .map(|s| {
                (0..site.homs[s][t].len())
                    .filter(|&k| site.morphism(s, t, k).image() == max)
                    .collect()
            })
            .collect();
        let values: Vec<FinSet> = (0..site.len())
            .map(|s| {
                FinSet::new(
                    self.values[s]
                        .iter()
                        .map(|l| l.to_string())
                        .chain(whole[s].iter().map(|&k| format!("extra<{}>", site.homs[s][t][k].iter().join(",")))),
                )
                .unwrap()
            })
            .collect();
        let position: Vec<HashMap<usize, usize>> = whole
            .iter()
            .map(|ks| ks.iter().enumerate().map(|(i, &k)| (k, i)).collect())
            .collect();
        Some(FinitePresheaf::from_fn(site.clone(), values, |a, b, f, x| {
            let base = self.values[b].len();
            if x < base {
                return self.action[a][b][f][x];
            }
            let phi = whole[b][x - base];
            let composite = site.compose(a, b, t, f, phi);
            match position[a].get(&composite) {
                Some(&i) => self.values[a].len() + i,
                None => self.action[a][t][composite][0],
            }
        }))
    }
}

/// The nerve of `P` on a site: `X(T)` is the set of decorations of `T`
/// over `P`, and arrows act by precomposition. On the dendroidal site only
/// the embeddings act this way, so the site must be the embeddings one.
pub fn nerve_n0(p: &PolyEndo, site: &Arc<Site>) -> Result<FinitePresheaf, PresheafError> {
    if site.kind != SiteKind::Embeddings {
        return Err(PresheafError::SiteMismatch);
    }
    let decos: Vec<Vec<(Vec<usize>, Vec<usize>, Vec<usize>)>> = site
        .objects
        .iter()
        .map(|t| decoration_maps(t, p))
        .collect::<Result<_, _>>()?;
    let lookups: Vec<HashMap<&(Vec<usize>, Vec<usize>, Vec<usize>), usize>> = decos
        .iter()
        .map(|ds| ds.iter().enumerate().map(|(i, d)| (d, i)).collect())
        .collect();
    let values = site
        .objects
        .iter()
        .zip(&decos)
        .map(|(t, ds)| FinSet::new(ds.iter().map(|d| decoration_label(p, t, d))))
        .collect::<Result<Vec<_>, _>>()?;
    let inputs: Vec<Vec<Vec<Vec<usize>>>> = (0..site.len())
        .map(|a| {
            (0..site.len())
                .map(|b| {
                    site.homs[a][b]
                        .iter()
                        .map(|edges| {
                            let (s, t) = (&site.objects[a], &site.objects[b]);
                            (0..s.poly().p2().len())
                                .map(|m| t.consumer(edges[s.poly().s().apply(m)]).unwrap())
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(FinitePresheaf::from_fn(site.clone(), values, |a, b, k, x| {
        let (s, t) = (&site.objects[a], &site.objects[b]);
        let edges = &site.homs[a][b][k];
        let (d0, d1, d2) = &decos[b][x];
        let r0: Vec<usize> = edges.iter().map(|&e| d0[e]).collect();
        let r1: Vec<usize> = (0..s.node_count())
            .map(|v| d1[t.producer(edges[s.output(v)]).unwrap()])
            .collect();
        let r2: Vec<usize> = inputs[a][b][k].iter().map(|&m| d2[m]).collect();
        lookups[a][&(r0, r1, r2)]
    }))
}

/// `b<π>` per node, where input `j` of the node goes to input `π(j)` of
/// `b`, joined by ` ; `; the colour alone on the trivial tree. Matches the
/// labels of [`nerve_r0`] on corollas.
fn decoration_label(p: &PolyEndo, t: &Tree, (a0, a1, a2): &(Vec<usize>, Vec<usize>, Vec<usize>)) -> String {
    if t.is_trivial() {
        return p.p0().label(a0[0]).to_string();
    }
    (0..t.node_count())
        .map(|v| {
            let b = a1[v];
            let fibre = p.fibre(b);
            let pi = t
                .poly()
                .fibre(v)
                .iter()
                .map(|&m| fibre.iter().position(|&x| x == a2[m]).unwrap().to_string())
                .join(",");
            format!("{}<{pi}>", p.p1().label(b))
        })
        .join(" ; ")
}

/// The representable presheaf `Hom(-, t)` on a site.
pub fn representable(site: &Arc<Site>, t: &Arc<Tree>) -> FinitePresheaf {
    let homs: Vec<Vec<Vec<usize>>> = site
        .objects
        .iter()
        .map(|s| match site.kind {
            SiteKind::Embeddings => hom_temb(s, t).into_iter().map(|e| e.edges).collect(),
            SiteKind::Omega => hom_omega(s, t).into_iter().map(|m| m.edges).collect(),
        })
        .collect();
    let lookups: Vec<HashMap<Vec<usize>, usize>> = homs
        .iter()
        .map(|hs| hs.iter().cloned().enumerate().map(|(i, h)| (h, i)).collect())
        .collect();
    let values = homs
        .iter()
        .map(|hs| FinSet::new(hs.iter().map(|h| h.iter().map(|&e| t.edge_label(e).as_str()).join(","))).unwrap())
        .collect();
    FinitePresheaf::from_fn(site.clone(), values, |a, b, k, x| {
        let composite: Vec<usize> = site.homs[a][b][k].iter().map(|&e| homs[b][x][e]).collect();
        lookups[a][&composite]
    })
}

/// Covering families on `t` worth checking: the minimal one made of
/// elementary subtrees, then the reduced covers.
pub fn covering_families(t: &Tree) -> Vec<Vec<Subtree>> {
    let minimal = if t.is_trivial() {
        vec![t.maximal_subtree()]
    } else {
        t.one_node_subtrees()
    };
    let mut out = vec![minimal];
    if let Ok(rc) = reduced_covers(t) {
        for f in rc.covers {
            if !out.contains(&f) {
                out.push(f);
            }
        }
    }
    debug_assert!(out.iter().all(|f| is_cover(t, f)));
    out
}

/// Result of a Segal check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SegalVerdict {
    Holds,
    Fails {
        /// Canonical form of the first object where the comparison map is
        /// not a bijection.
        witness: String,
        value_size: usize,
        family_count: usize,
        injective: bool,
    },
}

impl SegalVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, SegalVerdict::Holds)
    }
}

/// For every object, compares `X(T)` with the set of families over the
/// one-node subtrees agreeing on shared edges.
pub fn segal_check(x: &FinitePresheaf) -> Result<SegalVerdict, PresheafError> {
    let site = &x.site;
    let triv = site.trivial();
    for a in 0..site.len() {
        let t = &site.objects[a];
        if t.is_elementary() {
            continue;
        }
        let frames = site.node_frames(a)?;
        // Colour at each boundary edge of node v, for each element of the
        // node's corolla value.
        let colour = |v: usize, pos: usize, y: usize| {
            let (c, _) = frames[v];
            let leaf_arrow = site.edge_arrow(c, pos);
            x.restrict(triv, c, leaf_arrow, y)
        };
        let count = count_families(t, t.root(), &frames, x, &colour);
        let family_count: usize = count.values().sum();
        let mut seen = HashSet::new();
        for y in 0..x.values[a].len() {
            let fam: Vec<usize> = frames.iter().map(|&(c, k)| x.restrict(c, a, k, y)).collect();
            seen.insert(fam);
        }
        let injective = seen.len() == x.values[a].len();
        if !injective || family_count != x.values[a].len() {
            return Ok(SegalVerdict::Fails {
                witness: t.canonical_form(),
                value_size: x.values[a].len(),
                family_count,
                injective,
            });
        }
    }
    Ok(SegalVerdict::Holds)
}

/// Families on the ideal subtree above `e`, counted by the colour at `e`.
fn count_families(
    t: &Tree,
    e: usize,
    frames: &[(usize, usize)],
    x: &FinitePresheaf,
    colour: &dyn Fn(usize, usize, usize) -> usize,
) -> HashMap<usize, usize> {
    let mut out = HashMap::new();
    let Some(v) = t.producer(e) else {
        // A leaf: any colour, once.
        let triv = x.site.trivial();
        for c in 0..x.values[triv].len() {
            out.insert(c, 1);
        }
        return out;
    };
    let inputs = t.inputs(v);
    let below: Vec<HashMap<usize, usize>> = inputs.iter().map(|&i| count_families(t, i, frames, x, colour)).collect();
    let (c, _) = frames[v];
    for y in 0..x.values[c].len() {
        let mut n = 1;
        for (j, counts) in below.iter().enumerate() {
            n *= counts.get(&colour(v, j + 1, y)).copied().unwrap_or(0);
            if n == 0 {
                break;
            }
        }
        if n > 0 {
            *out.entry(colour(v, 0, y)).or_default() += n;
        }
    }
    out
}

/// Operations of one arity in a collection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArityOps {
    pub elements: FinSet,
    /// Input colours and output colour of each element.
    pub profiles: Vec<(Vec<usize>, usize)>,
    /// `generators[j][c]` is `c·(j j+1)`.
    pub generators: Vec<Vec<usize>>,
}

/// A symmetric collection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Collection {
    pub colours: FinSet,
    pub ops: BTreeMap<usize, ArityOps>,
}

/// An operation declared with the permutations that fix it.
#[derive(Clone, Debug)]
pub struct OpSpec {
    pub name: String,
    pub inputs: Vec<usize>,
    pub output: usize,
    pub fixed_by: Vec<Vec<usize>>,
}

/// Adjacent transpositions `j` with `σ = s_{j1} ∘ .. ∘ s_{jk}`.
pub fn adjacent_word(sigma: &[usize]) -> Vec<usize> {
    let mut pi = sigma.to_vec();
    let mut recorded = Vec::new();
    loop {
        match (0..pi.len().saturating_sub(1)).find(|&j| pi[j] > pi[j + 1]) {
            Some(j) => {
                pi.swap(j, j + 1);
                recorded.push(j);
            }
            None => break,
        }
    }
    recorded.reverse();
    recorded
}

/// `σ ∘ τ`.
pub fn compose_perm(sigma: &[usize], tau: &[usize]) -> Vec<usize> {
    tau.iter().map(|&j| sigma[j]).collect()
}

impl Collection {
    pub fn new(colours: FinSet, ops: BTreeMap<usize, ArityOps>) -> Result<Collection, PresheafError> {
        let c = Collection { colours, ops };
        c.check()?;
        Ok(c)
    }

    /// The collection generated by operations with given stabilisers: each
    /// spec contributes the orbit `S_n / H`, whose elements are named
    /// `name` for the identity coset and `name·[σ]` for the least `σ` in
    /// any other coset.
    pub fn generated(colours: FinSet, specs: &[OpSpec]) -> Result<Collection, PresheafError> {
        let mut ops: BTreeMap<usize, ArityOps> = BTreeMap::new();
        for spec in specs {
            let n = spec.inputs.len();
            let group = generated_subgroup(n, &spec.fixed_by);
            for h in &group {
                if (0..n).any(|j| spec.inputs[h[j]] != spec.inputs[j]) {
                    return Err(PresheafError::BadFixer(format!("{h:?}"), spec.name.clone()));
                }
            }
            // Cosets Hσ, keyed by their least element.
            let mut coset_of: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
            for sigma in crate::permutations(n) {
                let coset: Vec<Vec<usize>> = group.iter().map(|h| compose_perm(h, &sigma)).sorted().collect();
                coset_of.insert(sigma, coset[0].clone());
            }
            let reps: Vec<Vec<usize>> = coset_of.values().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            let entry = ops.entry(n).or_insert_with(|| ArityOps {
                elements: FinSet::empty(),
                profiles: Vec::new(),
                generators: vec![Vec::new(); n.saturating_sub(1)],
            });
            let offset = entry.elements.len();
            let identity: Vec<usize> = (0..n).collect();
            let mut labels: Vec<String> = entry.elements.iter().map(|l| l.to_string()).collect();
            for r in &reps {
                labels.push(if *r == identity {
                    spec.name.clone()
                } else {
                    format!("{}·[{}]", spec.name, r.iter().join(","))
                });
                entry
                    .profiles
                    .push(((0..n).map(|j| spec.inputs[r[j]]).collect(), spec.output));
            }
            entry.elements = FinSet::new(labels)?;
            let index: HashMap<&Vec<usize>, usize> = reps.iter().enumerate().map(|(i, r)| (r, i)).collect();
            for j in 0..n.saturating_sub(1) {
                let mut s = identity.clone();
                s.swap(j, j + 1);
                for r in &reps {
                    let moved = &coset_of[&compose_perm(r, &s)];
                    entry.generators[j].push(offset + index[moved]);
                }
            }
        }
        Collection::new(colours, ops)
    }

    pub fn arity(&self, n: usize) -> Option<&ArityOps> {
        self.ops.get(&n)
    }

    pub fn size(&self, n: usize) -> usize {
        self.ops.get(&n).map_or(0, |o| o.elements.len())
    }

    /// `c·σ` in arity `n`.
    pub fn act(&self, n: usize, c: usize, sigma: &[usize]) -> usize {
        let ops = &self.ops[&n];
        adjacent_word(sigma).into_iter().fold(c, |x, j| ops.generators[j][x])
    }

    /// Checks profiles are respected, and the Coxeter relations.
    pub fn check(&self) -> Result<(), PresheafError> {
        for (&n, ops) in &self.ops {
            let bad = |reason: String| PresheafError::NotAnAction { arity: n, reason };
            let size = ops.elements.len();
            if ops.profiles.len() != size || ops.generators.len() != n.saturating_sub(1) {
                return Err(bad("wrong number of profiles or generators".into()));
            }
            for (ins, out) in &ops.profiles {
                if ins.len() != n || *out >= self.colours.len() || ins.iter().any(|&c| c >= self.colours.len()) {
                    return Err(bad("profile out of range".into()));
                }
            }
            for (j, g) in ops.generators.iter().enumerate() {
                if g.len() != size || g.iter().any(|&y| y >= size) {
                    return Err(bad(format!("generator {j} is not a map")));
                }
                for c in 0..size {
                    if g[g[c]] != c {
                        return Err(bad(format!("generator {j} is not an involution")));
                    }
                    let (ins, out) = &ops.profiles[c];
                    let (gins, gout) = &ops.profiles[g[c]];
                    let mut swapped = ins.clone();
                    swapped.swap(j, j + 1);
                    if *gins != swapped || gout != out {
                        return Err(bad(format!("generator {j} does not permute inputs")));
                    }
                }
            }
            for i in 0..ops.generators.len() {
                for j in i + 1..ops.generators.len() {
                    let order = if j == i + 1 { 3 } else { 2 };
                    for c in 0..size {
                        let mut x = c;
                        for _ in 0..order {
                            x = ops.generators[j][ops.generators[i][x]];
                        }
                        if x != c {
                            return Err(bad(format!("generators {i} and {j} fail the braid relation")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Permutations fixing `c`.
    pub fn stabiliser(&self, n: usize, c: usize) -> Vec<Vec<usize>> {
        crate::permutations(n)
            .into_iter()
            .filter(|s| self.act(n, c, s) == c)
            .collect()
    }

    /// Orbits in arity `n`, each listed from its least element.
    pub fn orbits(&self, n: usize) -> Vec<Vec<usize>> {
        let Some(ops) = self.ops.get(&n) else {
            return Vec::new();
        };
        let mut seen = vec![false; ops.elements.len()];
        let mut out = Vec::new();
        for c in 0..ops.elements.len() {
            if seen[c] {
                continue;
            }
            let mut orbit = vec![c];
            seen[c] = true;
            let mut queue = VecDeque::from([c]);
            while let Some(x) = queue.pop_front() {
                for g in &ops.generators {
                    if !seen[g[x]] {
                        seen[g[x]] = true;
                        orbit.push(g[x]);
                        queue.push_back(g[x]);
                    }
                }
            }
            orbit.sort_unstable();
            out.push(orbit);
        }
        out
    }

    /// Flat when every stabiliser is trivial; otherwise returns an element
    /// with its stabiliser.
    pub fn is_flat(&self) -> Result<(), PresheafError> {
        for (&n, ops) in &self.ops {
            for orbit in self.orbits(n) {
                if orbit.len() != crate::factorial(n) {
                    let c = orbit[0];
                    return Err(PresheafError::NotFlat {
                        arity: n,
                        element: ops.elements.label(c).clone(),
                        stabiliser: self.stabiliser(n, c),
                    });
                }
            }
        }
        Ok(())
    }

    /// The endofunctor with one node per orbit, represented by the orbit's
    /// least element, with inputs in that element's order.
    pub fn flat_to_polyend(&self) -> Result<PolyEndo, PresheafError> {
        self.is_flat()?;
        let mut nodes: Vec<String> = Vec::new();
        let mut input_labels = Vec::new();
        let mut s = Vec::new();
        let mut p = Vec::new();
        let mut t = Vec::new();
        for (&n, ops) in &self.ops {
            for orbit in self.orbits(n) {
                let rep = orbit[0];
                let b = nodes.len();
                let name = ops.elements.label(rep).to_string();
                let (ins, out) = &ops.profiles[rep];
                for (j, &c) in ins.iter().enumerate() {
                    input_labels.push(format!("{name}:{j}"));
                    s.push(c);
                    p.push(b);
                }
                t.push(*out);
                nodes.push(name);
            }
        }
        Ok(PolyEndo::from_indices(
            self.colours.clone(),
            FinSet::new(nodes)?,
            FinSet::new(input_labels)?,
            s,
            p,
            t,
        )?)
    }

    pub fn forget(&self) -> NonSymCollection {
        NonSymCollection {
            colours: self.colours.clone(),
            ops: self
                .ops
                .iter()
                .map(|(&n, o)| (n, (o.elements.clone(), o.profiles.clone())))
                .collect(),
        }
    }
}

impl fmt::Display for Collection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "colours: {}", self.colours.iter().join(" "))?;
        for (n, ops) in &self.ops {
            for (c, (ins, out)) in ops.profiles.iter().enumerate() {
                writeln!(
                    f,
                    "  [{n}] {} : ({}) -> {}",
                    ops.elements.label(c),
                    ins.iter().map(|&i| self.colours.label(i).as_str()).join(","),
                    self.colours.label(*out)
                )?;
            }
        }
        Ok(())
    }
}

fn generated_subgroup(n: usize, gens: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let id: Vec<usize> = (0..n).collect();
    let mut group: BTreeSet<Vec<usize>> = BTreeSet::from([id.clone()]);
    let mut queue = VecDeque::from([id]);
    while let Some(g) = queue.pop_front() {
        for h in gens {
            let gh = compose_perm(&g, h);
            if group.insert(gh.clone()) {
                queue.push_back(gh);
            }
        }
    }
    group.into_iter().collect()
}

/// Whether there is an equivariant bijection matching colour labels and
/// profiles.
pub fn collections_isomorphic(c: &Collection, d: &Collection) -> bool {
    if c.colours != d.colours {
        return false;
    }
    let to_d: Vec<usize> = c.colours.iter().map(|l| d.colours.index_of(l).unwrap()).collect();
    let arities: BTreeSet<usize> = c.ops.keys().chain(d.ops.keys()).copied().collect();
    arities.into_iter().all(|n| {
        if c.size(n) != d.size(n) {
            return false;
        }
        if c.size(n) == 0 {
            return true;
        }
        let co = c.orbits(n);
        let dorb = d.orbits(n);
        match_orbits(c, d, n, &to_d, &co, &dorb, &mut vec![false; dorb.len()], 0)
    })
}

#[allow(clippy::too_many_arguments)]
fn match_orbits(
    c: &Collection,
    d: &Collection,
    n: usize,
    to_d: &[usize],
    co: &[Vec<usize>],
    dorb: &[Vec<usize>],
    used: &mut Vec<bool>,
    i: usize,
) -> bool {
    if i == co.len() {
        return true;
    }
    let rep = co[i][0];
    let perms = crate::permutations(n);
    for (k, orbit) in dorb.iter().enumerate() {
        if used[k] || orbit.len() != co[i].len() {
            continue;
        }
        for &target in orbit {
            // rep·σ ↦ target·σ must be well defined and respect profiles.
            let mut map: HashMap<usize, usize> = HashMap::new();
            let ok = perms.iter().all(|s| {
                let x = c.act(n, rep, s);
                let y = d.act(n, target, s);
                let (ins, out) = &c.ops[&n].profiles[x];
                let (dins, dout) = &d.ops[&n].profiles[y];
                let profile_ok = ins.iter().map(|&a| to_d[a]).eq(dins.iter().copied()) && to_d[*out] == *dout;
                profile_ok && *map.entry(x).or_insert(y) == y
            });
            if ok && map.values().collect::<HashSet<_>>().len() == map.len() {
                used[k] = true;
                if match_orbits(c, d, n, to_d, co, dorb, used, i + 1) {
                    return true;
                }
                used[k] = false;
            }
        }
    }
    false
}

/// `C(n)` is the set of maps from the one-node tree with `n` leaves to `P`:
/// a node `b` of arity `n` and a bijection from leaf positions to the fibre
/// of `b`, labelled `b<π>`. Permutations act by precomposition.
pub fn nerve_r0(p: &PolyEndo) -> Collection {
    let mut ops: BTreeMap<usize, ArityOps> = BTreeMap::new();
    let mut by_arity: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for b in 0..p.p1().len() {
        by_arity.entry(p.arity(b)).or_default().push(b);
    }
    for (n, nodes) in by_arity {
        let perms = crate::permutations(n);
        let mut labels = Vec::new();
        let mut profiles = Vec::new();
        let mut keys = Vec::new();
        for &b in &nodes {
            for pi in &perms {
                labels.push(format!("{}<{}>", p.p1().label(b), pi.iter().join(",")));
                let fibre = p.fibre(b);
                profiles.push(((0..n).map(|j| p.s().apply(fibre[pi[j]])).collect(), p.output(b)));
                keys.push((b, pi.clone()));
            }
        }
        let index: HashMap<(usize, Vec<usize>), usize> = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        let generators = (0..n.saturating_sub(1))
            .map(|j| {
                keys.iter()
                    .map(|(b, pi)| {
                        let mut moved = pi.clone();
                        moved.swap(j, j + 1);
                        index[&(*b, moved)]
                    })
                    .collect()
            })
            .collect();
        ops.insert(
            n,
            ArityOps {
                elements: FinSet::new(labels).unwrap(),
                profiles,
                generators,
            },
        );
    }
    Collection {
        colours: p.p0().clone(),
        ops,
    }
}

/// A collection without symmetries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NonSymCollection {
    pub colours: FinSet,
    pub ops: BTreeMap<usize, (FinSet, Vec<(Vec<usize>, usize)>)>,
}

impl NonSymCollection {
    pub fn size(&self, n: usize) -> usize {
        self.ops.get(&n).map_or(0, |(e, _)| e.len())
    }

    /// Builds from `(name, inputs, output)` triples.
    pub fn from_ops(colours: FinSet, ops: &[(&str, Vec<usize>, usize)]) -> Result<Self, PresheafError> {
        let mut out: BTreeMap<usize, (Vec<String>, Vec<(Vec<usize>, usize)>)> = BTreeMap::new();
        for (name, ins, o) in ops {
            let e = out.entry(ins.len()).or_default();
            e.0.push(name.to_string());
            e.1.push((ins.clone(), *o));
        }
        Ok(NonSymCollection {
            colours,
            ops: out
                .into_iter()
                .map(|(n, (l, p))| Ok((n, (FinSet::new(l)?, p))))
                .collect::<Result<_, FinSetError>>()?,
        })
    }
}

/// `S(C)(n) = S_n × C(n)`: the element `c<π>` has inputs
/// `input_π(j)(c)`, and `c<π>·σ = c<π∘σ>`.
pub fn symmetrise(c: &NonSymCollection) -> Collection {
    let mut ops = BTreeMap::new();
    for (&n, (elements, profiles)) in &c.ops {
        let perms = crate::permutations(n);
        let mut labels = Vec::new();
        let mut profs = Vec::new();
        let mut keys = Vec::new();
        for (k, (ins, out)) in profiles.iter().enumerate() {
            for pi in &perms {
                labels.push(format!("{}<{}>", elements.label(k), pi.iter().join(",")));
                profs.push(((0..n).map(|j| ins[pi[j]]).collect(), *out));
                keys.push((k, pi.clone()));
            }
        }
        let index: HashMap<(usize, Vec<usize>), usize> = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        let generators = (0..n.saturating_sub(1))
            .map(|j| {
                keys.iter()
                    .map(|(k, pi)| {
                        let mut moved = pi.clone();
                        moved.swap(j, j + 1);
                        index[&(*k, moved)]
                    })
                    .collect()
            })
            .collect();
        ops.insert(
            n,
            ArityOps {
                elements: FinSet::new(labels).unwrap(),
                profiles: profs,
                generators,
            },
        );
    }
    Collection {
        colours: c.colours.clone(),
        ops,
    }
}

/// The planar endofunctor of a nonsymmetric collection: one node per
/// operation, inputs in order.
pub fn nonsym_to_polyend(c: &NonSymCollection) -> PolyEndo {
    let mut node_labels = Vec::new();
    let mut input_labels = Vec::new();
    let (mut s, mut p, mut t) = (Vec::new(), Vec::new(), Vec::new());
    for (elements, profiles) in c.ops.values() {
        for (k, (ins, out)) in profiles.iter().enumerate() {
            let b = node_labels.len();
            node_labels.push(elements.label(k).to_string());
            for (j, &col) in ins.iter().enumerate() {
                input_labels.push(format!("{}:{j}", elements.label(k)));
                s.push(col);
                p.push(b);
            }
            t.push(*out);
        }
    }
    PolyEndo::from_indices(
        c.colours.clone(),
        FinSet::new(node_labels).unwrap(),
        FinSet::new(input_labels).unwrap(),
        s,
        p,
        t,
    )
    .unwrap()
}

/// Maps of collections `C -> D`: a colour map and equivariant maps
/// compatible with profiles.
pub fn count_collection_maps(c: &Collection, d: &Collection) -> usize {
    let mut total = 0;
    for f in crate::finset::universal::all_functions(c.colours.len(), d.colours.len()) {
        let mut count = 1;
        for (&n, _) in &c.ops {
            for orbit in c.orbits(n) {
                let rep = orbit[0];
                let stab = c.stabiliser(n, rep);
                let (ins, out) = &c.ops[&n].profiles[rep];
                let choices = d.ops.get(&n).map_or(0, |dops| {
                    (0..dops.elements.len())
                        .filter(|&y| {
                            let (dins, dout) = &dops.profiles[y];
                            dins.iter().copied().eq(ins.iter().map(|&a| f[a]))
                                && *dout == f[*out]
                                && stab.iter().all(|s| d.act(n, y, s) == y)
                        })
                        .count()
                });
                count *= choices;
            }
        }
        total += count;
    }
    total
}

/// Maps of nonsymmetric collections.
pub fn count_nonsym_maps(c: &NonSymCollection, d: &NonSymCollection) -> usize {
    let mut total = 0;
    for f in crate::finset::universal::all_functions(c.colours.len(), d.colours.len()) {
        let mut count = 1;
        for (n, (_, profiles)) in &c.ops {
            for (ins, out) in profiles {
                count *= d.ops.get(n).map_or(0, |(_, dp)| {
                    dp.iter()
                        .filter(|(dins, dout)| dins.iter().copied().eq(ins.iter().map(|&a| f[a])) && *dout == f[*out])
                        .count()
                });
            }
        }
        total += count;
    }
    total
}

/// Cartesian maps of endofunctors, counted by colour map, node map and
/// fibre bijections, each checked as a morphism.
pub fn count_poly_maps(p: &PolyEndo, q: &PolyEndo) -> usize {
    let mut total = 0;
    for a0 in crate::finset::universal::all_functions(p.p0().len(), q.p0().len()) {
        let options: Vec<Vec<(usize, Vec<usize>)>> = (0..p.p1().len())
            .map(|b| {
                (0..q.p1().len())
                    .filter(|&c| q.arity(c) == p.arity(b))
                    .flat_map(|c| {
                        crate::permutations(p.arity(b))
                            .into_iter()
                            .map(move |pi| (c, pi))
                    })
                    .collect()
            })
            .collect();
        for choice in options.into_iter().multi_cartesian_product_or_unit() {
            let a1: Vec<usize> = choice.iter().map(|(c, _)| *c).collect();
            let mut a2 = vec![0; p.p2().len()];
            for (b, (c, pi)) in choice.iter().enumerate() {
                for (j, &m) in p.fibre(b).iter().enumerate() {
                    a2[m] = q.fibre(*c)[pi[j]];
                }
            }
            if crate::polyend::PolyMap::from_indices(p, q, a0.clone(), a1, a2).is_ok() {
                total += 1;
            }
        }
    }
    total
}

trait ProductOrUnit: Iterator<Item = Vec<(usize, Vec<usize>)>> + Sized {
    fn multi_cartesian_product_or_unit(self) -> Box<dyn Iterator<Item = Vec<(usize, Vec<usize>)>>>;
}

impl<I> ProductOrUnit for I
where
    I: Iterator<Item = Vec<(usize, Vec<usize>)>> + 'static,
{
    fn multi_cartesian_product_or_unit(self) -> Box<dyn Iterator<Item = Vec<(usize, Vec<usize>)>>> {
        let factors: Vec<Vec<(usize, Vec<usize>)>> = self.collect();
        if factors.is_empty() {
            Box::new(std::iter::once(Vec::new()))
        } else {
            Box::new(factors.into_iter().multi_cartesian_product())
        }
    }
}

/// Colours are `X(|)` and `C(n)` is `X` of the corolla with `n` leaves;
/// profiles and the action come from the leaf and root inclusions and the
/// corolla's automorphisms.
pub fn restrict_to_elementary(x: &FinitePresheaf) -> Result<Collection, PresheafError> {
    let site = &x.site;
    let triv = site.trivial();
    let mut ops = BTreeMap::new();
    for n in 0..site.max_edges {
        let Some(c) = site.corolla(n) else { continue };
        if x.values[c].is_empty() {
            continue;
        }
        let leaf = |j: usize| site.edge_arrow(c, j + 1);
        let root = site.edge_arrow(c, 0);
        let profiles = (0..x.values[c].len())
            .map(|y| {
                (
                    (0..n).map(|j| x.restrict(triv, c, leaf(j), y)).collect(),
                    x.restrict(triv, c, root, y),
                )
            })
            .collect();
        let generators = (0..n.saturating_sub(1))
            .map(|j| {
                let mut edges: Vec<usize> = (0..=n).collect();
                edges.swap(j + 1, j + 2);
                let k = site.arrow(c, c, &edges).expect("corolla automorphism");
                (0..x.values[c].len()).map(|y| x.restrict(c, c, k, y)).collect()
            })
            .collect();
        ops.insert(
            n,
            ArityOps {
                elements: x.values[c].clone(),
                profiles,
                generators,
            },
        );
    }
    Collection::new(x.values[triv].clone(), ops)
}

/// The presheaf on the embeddings site whose value at `T` is the set of
/// families, one operation per node read in the node's input order, whose
/// colours agree along edges. Labels are operation labels joined by ` ; `.
pub fn sheaf_extend(c: &Collection, site: &Arc<Site>) -> Result<FinitePresheaf, PresheafError> {
    if site.kind != SiteKind::Embeddings {
        return Err(PresheafError::SiteMismatch);
    }
    let families: Vec<Vec<Vec<usize>>> = site.objects.iter().map(|t| extension_families(c, t)).collect();
    let lookups: Vec<HashMap<&Vec<usize>, usize>> = families
        .iter()
        .map(|fs| fs.iter().enumerate().map(|(i, f)| (f, i)).collect())
        .collect();
    let values = site
        .objects
        .iter()
        .zip(&families)
        .map(|(t, fs)| {
            FinSet::new(fs.iter().map(|f| {
                if t.is_trivial() {
                    c.colours.label(f[0]).to_string()
                } else {
                    f.iter()
                        .enumerate()
                        .map(|(v, &y)| c.ops[&t.arity(v)].elements.label(y).as_str())
                        .join(" ; ")
                }
            }))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FinitePresheaf::from_fn(site.clone(), values, |a, b, k, x| {
        let (s, t) = (&site.objects[a], &site.objects[b]);
        let edges = &site.homs[a][b][k];
        let fam = &families[b][x];
        let restricted: Vec<usize> = if s.is_trivial() {
            vec![edge_colour(c, t, fam, edges[s.root()])]
        } else {
            (0..s.node_count())
                .map(|u| {
                    let v = t.producer(edges[s.output(u)]).unwrap();
                    let tin = t.inputs(v);
                    let sigma: Vec<usize> = s
                        .inputs(u)
                        .iter()
                        .map(|&e| tin.iter().position(|&f| f == edges[e]).unwrap())
                        .collect();
                    c.act(s.arity(u), fam[v], &sigma)
                })
                .collect()
        };
        lookups[a][&restricted]
    }))
}

/// Colour of edge `e` under a family on `t`.
fn edge_colour(c: &Collection, t: &Tree, fam: &[usize], e: usize) -> usize {
    if t.is_trivial() {
        return fam[0];
    }
    match t.producer(e) {
        Some(v) => c.ops[&t.arity(v)].profiles[fam[v]].1,
        None => {
            let v = t.parent_node(e).unwrap();
            let j = t.inputs(v).iter().position(|&f| f == e).unwrap();
            c.ops[&t.arity(v)].profiles[fam[v]].0[j]
        }
    }
}

fn extension_families(c: &Collection, t: &Tree) -> Vec<Vec<usize>> {
    if t.is_trivial() {
        return (0..c.colours.len()).map(|k| vec![k]).collect();
    }
    let mut out = Vec::new();
    let mut fam = vec![usize::MAX; t.node_count()];
    let mut colour = vec![usize::MAX; t.edge_count()];
    // Nodes from the root up, so each node's output colour is known when
    // it is reached.
    let order: Vec<usize> = (0..t.node_count()).sorted_by_key(|&v| t.depth(t.output(v))).collect();
    extend_rec(c, t, &order, 0, &mut fam, &mut colour, &mut out);
    out
}

fn extend_rec(
    c: &Collection,
    t: &Tree,
    order: &[usize],
    i: usize,
    fam: &mut Vec<usize>,
    colour: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if i == order.len() {
        out.push(fam.clone());
        return;
    }
    let v = order[i];
    let Some(ops) = c.ops.get(&t.arity(v)) else { return };
    let out_edge = t.output(v);
    for (y, (ins, o)) in ops.profiles.iter().enumerate() {
        if colour[out_edge] != usize::MAX && colour[out_edge] != *o {
            continue;
        }
        let saved = colour.clone();
        colour[out_edge] = *o;
        for (j, e) in t.inputs(v).into_iter().enumerate() {
            colour[e] = ins[j];
        }
        fam[v] = y;
        extend_rec(c, t, order, i + 1, fam, colour, out);
        *colour = saved;
    }
}

/// Checks that `X` and the extension of its restriction are isomorphic by
/// the comparison map, naturally in every arrow.
pub fn extension_comparison_is_iso(x: &FinitePresheaf) -> Result<bool, PresheafError> {
    let c = restrict_to_elementary(x)?;
    let ext = sheaf_extend(&c, &x.site)?;
    let site = &x.site;
    let mut maps: Vec<Vec<usize>> = Vec::new();
    for a in 0..site.len() {
        let t = &site.objects[a];
        let frames = site.node_frames(a)?;
        let lookup: HashMap<&str, usize> = ext.values[a].iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut m = Vec::new();
        for y in 0..x.values[a].len() {
            let label = if t.is_trivial() {
                x.values[a].label(y).to_string()
            } else {
                frames
                    .iter()
                    .map(|&(cor, k)| x.values[cor].label(x.restrict(cor, a, k, y)).as_str())
                    .join(" ; ")
            };
            match lookup.get(label.as_str()) {
                Some(&i) => m.push(i),
                None => return Ok(false),
            }
        }
        if m.iter().collect::<HashSet<_>>().len() != ext.values[a].len() || m.len() != ext.values[a].len() {
            return Ok(false);
        }
        maps.push(m);
    }
    for a in 0..site.len() {
        for b in 0..site.len() {
            for k in 0..site.homs[a][b].len() {
                for y in 0..x.values[b].len() {
                    if maps[a][x.restrict(a, b, k, y)] != ext.restrict(a, b, k, maps[b][y]) {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

/// Outcome of the nerve theorem check.
#[derive(Clone, Debug)]
pub enum NerveVerdict {
    IsPolynomialMonadNerve { poly: PolyEndo },
    NotSegal(SegalVerdict),
    NotFlat(PresheafError),
}

impl NerveVerdict {
    pub fn is_nerve(&self) -> bool {
        matches!(self, NerveVerdict::IsPolynomialMonadNerve { .. })
    }
}

/// A presheaf is a nerve when it satisfies the Segal condition and its
/// elementary part is flat. On success the reconstructed endofunctor's
/// nerve is compared with `X` on every object of the embeddings site of the
/// same size.
pub fn nerve_theorem_check(x: &FinitePresheaf) -> Result<NerveVerdict, PresheafError> {
    let segal = segal_check(x)?;
    if !segal.holds() {
        return Ok(NerveVerdict::NotSegal(segal));
    }
    let c = restrict_to_elementary(x)?;
    if let Err(e) = c.is_flat() {
        return Ok(NerveVerdict::NotFlat(e));
    }
    let poly = c.flat_to_polyend()?;
    if !collections_isomorphic(&nerve_r0(&poly), &c) {
        return Err(PresheafError::NotFunctorial("reconstructed collection differs".into()));
    }
    let emb = if x.site.kind == SiteKind::Embeddings {
        x.site.clone()
    } else {
        Site::embeddings(x.site.max_edges)
    };
    let n = nerve_n0(&poly, &emb)?;
    if n.cardinalities() != x.cardinalities() {
        return Err(PresheafError::NotFunctorial("nerve of the reconstruction differs".into()));
    }
    Ok(NerveVerdict::IsPolynomialMonadNerve { poly })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyend::{find_isomorphism, free_monoid_truncated, identity_endofunctor};

    fn one_binary() -> PolyEndo {
        PolyEndo::from_spec(&["c"], &[("b", vec!["c", "c"], "c")]).unwrap()
    }

    fn mixed() -> PolyEndo {
        PolyEndo::from_spec(
            &["a", "b"],
            &[
                ("f", vec!["a", "b"], "a"),
                ("g", vec![], "b"),
                ("h", vec!["a", "a"], "b"),
                ("k", vec!["b"], "b"),
            ],
        )
        .unwrap()
    }

    fn commutative() -> Collection {
        Collection::generated(
            FinSet::singleton("c"),
            &[OpSpec {
                name: "m".into(),
                inputs: vec![0, 0],
                output: 0,
                fixed_by: vec![vec![1, 0]],
            }],
        )
        .unwrap()
    }

    #[test]
    fn nerve_values() {
        let site = Site::embeddings(4);
        let id = nerve_n0(&identity_endofunctor(&FinSet::singleton("c")), &site).unwrap();
        for (a, t) in site.objects.iter().enumerate() {
            assert_eq!(id.values[a].len(), usize::from(t.is_linear()));
        }
        let m = nerve_n0(&free_monoid_truncated(3), &site).unwrap();
        for (a, t) in site.objects.iter().enumerate() {
            let expect: usize = (0..t.node_count()).map(|v| crate::factorial(t.arity(v))).product();
            assert_eq!(m.values[a].len(), expect);
        }
        let triv = Tree::trivial("x");
        let n = nerve_n0(triv.poly(), &site).unwrap();
        for (a, t) in site.objects.iter().enumerate() {
            assert_eq!(n.values[a].len(), usize::from(t.is_trivial()));
        }
        assert!(matches!(
            nerve_n0(&free_monoid_truncated(2), &Site::embeddings(5)),
            Err(PresheafError::BoundExceeded { .. })
        ));
    }

    #[test]
    fn nerves_are_functorial_sheaves() {
        let site = Site::embeddings(5);
        for p in [one_binary(), mixed(), free_monoid_truncated(4)] {
            let x = nerve_n0(&p, &site).unwrap();
            x.check().unwrap();
            assert!(segal_check(&x).unwrap().holds());
            assert!(extension_comparison_is_iso(&x).unwrap());
        }
    }

    #[test]
    fn doubling_breaks_segal_at_the_doubled_tree() {
        let site = Site::embeddings(5);
        let x = nerve_n0(&mixed(), &site).unwrap();
        let t = site.object_of(&Tree::linear(2)).unwrap();
        let d = x.doubled_at(t);
        d.check().unwrap();
        match segal_check(&d).unwrap() {
            SegalVerdict::Fails { witness, .. } => assert_eq!(witness, site.objects[t].canonical_form()),
            SegalVerdict::Holds => panic!("doubling should fail"),
        }
    }

    #[test]
    fn representables_on_omega() {
        let site = Site::omega(4);
        let t = Arc::new(Tree::linear(2));
        let x = representable(&site, &t);
        x.check().unwrap();
        assert!(segal_check(&x).unwrap().holds());
        let verdict = nerve_theorem_check(&x).unwrap();
        let NerveVerdict::IsPolynomialMonadNerve { poly } = verdict else { panic!() };
        let (carrier, _) = crate::omega::tree_monad_carrier(&t);
        assert!(find_isomorphism(&poly, &carrier).is_some());
        let cell = x.with_extra_cell(site.object_of(&t).unwrap()).unwrap();
        cell.check().unwrap();
        assert!(!segal_check(&cell).unwrap().holds());
        assert!(matches!(nerve_theorem_check(&cell).unwrap(), NerveVerdict::NotSegal(_)));
    }

    #[test]
    fn covers() {
        let t = Tree::linear(2);
        let fams = covering_families(&t);
        assert!(fams.iter().all(|f| is_cover(&t, f)));
        assert_eq!(fams[0].len(), 2);
        let trivials: Vec<Subtree> = (0..t.edge_count()).map(|e| t.trivial_subtree(e)).collect();
        assert!(!is_cover(&t, &trivials));
        assert!(is_cover(&t, &[t.maximal_subtree()]));
    }

    #[test]
    fn r0_examples() {
        let c = nerve_r0(&one_binary());
        assert_eq!(c.size(2), 2);
        c.check().unwrap();
        assert!(c.is_flat().is_ok());
        let id = nerve_r0(&identity_endofunctor(&FinSet::singleton("c")));
        assert_eq!((id.size(1), id.size(0), id.size(2)), (1, 0, 0));
        let m = mixed();
        let c = nerve_r0(&m);
        for n in 0..4 {
            let nodes = (0..m.p1().len()).filter(|&b| m.arity(b) == n).count();
            assert_eq!(c.size(n), crate::factorial(n) * nodes);
        }
    }

    #[test]
    fn action_is_a_right_action() {
        let p = PolyEndo::from_spec(&["a", "b"], &[("f", vec!["a", "b", "a"], "a")]).unwrap();
        let c = nerve_r0(&p);
        let perms = crate::permutations(3);
        for x in 0..c.size(3) {
            for s in &perms {
                let xs = c.act(3, x, s);
                for j in 0..3 {
                    assert_eq!(c.ops[&3].profiles[xs].0[j], c.ops[&3].profiles[x].0[s[j]]);
                }
                for t in &perms {
                    assert_eq!(c.act(3, x, &compose_perm(s, t)), c.act(3, xs, t));
                }
            }
        }
    }

    #[test]
    fn flatness() {
        let err = commutative().is_flat().unwrap_err();
        match err {
            PresheafError::NotFlat { arity, stabiliser, .. } => {
                assert_eq!(arity, 2);
                assert_eq!(stabiliser.len(), 2);
            }
            _ => panic!(),
        }
        for p in [one_binary(), mixed(), free_monoid_truncated(3)] {
            let c = nerve_r0(&p);
            let q = c.flat_to_polyend().unwrap();
            assert!(find_isomorphism(&p, &q).is_some());
            assert!(collections_isomorphic(&nerve_r0(&q), &c));
        }
        assert!(!collections_isomorphic(&commutative(), &nerve_r0(&one_binary())));
    }

    #[test]
    fn symmetrisation() {
        let c = NonSymCollection::from_ops(FinSet::singleton("c"), &[("m", vec![0, 0], 0)]).unwrap();
        let s = symmetrise(&c);
        assert_eq!(s.size(2), 2);
        assert!(s.is_flat().is_ok());
        let empty = NonSymCollection::from_ops(FinSet::new(["a", "b"]).unwrap(), &[]).unwrap();
        let s = symmetrise(&empty);
        assert!(s.ops.is_empty());
        assert_eq!(s.colours.len(), 2);
        let unary = NonSymCollection::from_ops(FinSet::singleton("c"), &[("u", vec![0], 0), ("v", vec![0], 0)]).unwrap();
        assert_eq!(symmetrise(&unary).size(1), 2);
        let planar = nonsym_to_polyend(&c);
        assert!(collections_isomorphic(&nerve_r0(&planar), &symmetrise(&c)));
    }

    #[test]
    fn adjunction_and_kleisli_counts() {
        let two = FinSet::new(["a", "b"]).unwrap();
        let small: Vec<NonSymCollection> = vec![
            NonSymCollection::from_ops(FinSet::singleton("c"), &[("m", vec![0, 0], 0)]).unwrap(),
            NonSymCollection::from_ops(FinSet::singleton("c"), &[("u", vec![0], 0), ("e", vec![], 0)]).unwrap(),
            NonSymCollection::from_ops(two.clone(), &[("f", vec![0, 1], 0)]).unwrap(),
            NonSymCollection::from_ops(two, &[("g", vec![1, 1], 0), ("h", vec![0], 1)]).unwrap(),
        ];
        let targets: Vec<Collection> = vec![commutative(), nerve_r0(&mixed()), symmetrise(&small[2])];
        for c in &small {
            for d in &targets {
                assert_eq!(count_collection_maps(&symmetrise(c), d), count_nonsym_maps(c, &d.forget()));
            }
            for e in &small {
                assert_eq!(
                    count_poly_maps(&nonsym_to_polyend(c), &nonsym_to_polyend(e)),
                    count_collection_maps(&symmetrise(c), &symmetrise(e))
                );
            }
        }
    }

    #[test]
    fn restrict_and_extend() {
        let site = Site::embeddings(5);
        let id = nerve_r0(&identity_endofunctor(&FinSet::singleton("c")));
        let ext = sheaf_extend(&id, &site).unwrap();
        for (a, t) in site.objects.iter().enumerate() {
            assert_eq!(ext.values[a].len(), usize::from(t.is_linear()));
        }
        for c in [commutative(), nerve_r0(&mixed()), symmetrise(&NonSymCollection::from_ops(FinSet::singleton("c"), &[("m", vec![0, 0, 0], 0)]).unwrap())] {
            let ext = sheaf_extend(&c, &site).unwrap();
            ext.check().unwrap();
            assert!(segal_check(&ext).unwrap().holds());
            assert_eq!(restrict_to_elementary(&ext).unwrap(), c);
        }
        let ext = sheaf_extend(&commutative(), &site).unwrap();
        assert!(matches!(nerve_theorem_check(&ext).unwrap(), NerveVerdict::NotFlat(_)));
        let x = nerve_n0(&mixed(), &site).unwrap();
        let t = site.object_of(&Tree::linear(2)).unwrap();
        let doubled = x.doubled_at(t);
        let back = sheaf_extend(&restrict_to_elementary(&doubled).unwrap(), &site).unwrap();
        assert_ne!(back.values[t].len(), doubled.values[t].len());
    }

    #[test]
    fn nerve_theorem_on_nerves() {
        let site = Site::embeddings(5);
        for p in [one_binary(), mixed()] {
            let x = nerve_n0(&p, &site).unwrap();
            match nerve_theorem_check(&x).unwrap() {
                NerveVerdict::IsPolynomialMonadNerve { poly } => assert!(find_isomorphism(&p, &poly).is_some()),
                other => panic!("{other:?}"),
            }
        }
    }
}
