//! The acceptance criteria, one line of output each.
//!
//! Run with `cargo test -p polytree --test acceptance -- --nocapture` to see
//! the report.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use polytree::finset::FinSet;
use polytree::omega::{
    count_boundary_preserving, factor_generic_free, factor_surj_inj, generic_injections, hom_omega,
    omega_isomorphisms, redcov_geninj_correspondence, reduced_covers, triple_factor, Factorisation,
    FreeMonad, OmegaMorphism,
};
use polytree::polyend::{find_isomorphism, free_monoid_truncated, identity_endofunctor, PolyEndo};
use polytree::presheaf::{
    collections_isomorphic, count_collection_maps, count_nonsym_maps, count_poly_maps, nerve_n0, nerve_r0,
    nonsym_to_polyend, representable, segal_check, symmetrise, Collection, NonSymCollection, OpSpec,
    PresheafError, SegalVerdict, Site,
};
use polytree::ptree::{all_tree_classes, decorations, enumerate_ptrees, is_rigid, undecorated_tree_classes, PTerm};
use polytree::tree::{certify_tree, graft, hom_temb, Axiom, Tree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn arc_classes(max_edges: usize) -> Vec<Arc<Tree>> {
    all_tree_classes(max_edges).into_iter().map(Arc::new).collect()
}

/// Random endofunctors with at most four nodes of arity at most three.
fn random_polys(count: usize) -> Vec<PolyEndo> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..count)
        .map(|_| {
            let colours = rng.gen_range(1..=2usize);
            let nodes = rng.gen_range(1..=4usize);
            let (mut s, mut p, mut t, mut inputs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for b in 0..nodes {
                let arity = rng.gen_range(0..=3usize);
                for j in 0..arity {
                    s.push(rng.gen_range(0..colours));
                    p.push(b);
                    inputs.push(format!("f{b}:{j}"));
                }
                t.push(rng.gen_range(0..colours));
            }
            PolyEndo::from_indices(
                FinSet::new((0..colours).map(|i| format!("c{i}"))).unwrap(),
                FinSet::new((0..nodes).map(|b| format!("f{b}"))).unwrap(),
                FinSet::new(inputs).unwrap(),
                s,
                p,
                t,
            )
            .unwrap()
        })
        .collect()
}

fn diagram(edges: &[&str], nodes: &[(&str, Vec<&str>, &str)]) -> PolyEndo {
    PolyEndo::from_spec(edges, nodes).unwrap()
}

fn c1_examples_validate() -> Check {
    let trivial = diagram(&["e"], &[]);
    let stump = diagram(&["e"], &[("v", vec![], "e")]);
    let unary = diagram(&["a", "b"], &[("v", vec!["b"], "a")]);
    for (name, p, shape) in [("trivial", trivial, (1, 0, 0)), ("stump", stump, (1, 1, 0)), ("unary", unary, (2, 1, 1))] {
        let t = certify_tree(&p).map_err(|e| format!("{name} rejected: {e}"))?;
        ensure!(
            (t.edge_count(), t.node_count(), t.poly().p2().len()) == shape,
            "{name} has the wrong sizes"
        );
    }
    let empty = PolyEndo::from_indices(FinSet::empty(), FinSet::empty(), FinSet::empty(), vec![], vec![], vec![]).unwrap();
    let err = certify_tree(&empty).err().ok_or("empty diagram accepted")?;
    ensure!(err.axiom() == Some(Axiom::SingleRoot), "empty diagram blamed on {:?}", err.axiom());
    let clash = diagram(&["r", "x"], &[("u", vec!["x"], "r"), ("v", vec![], "r")]);
    let err = certify_tree(&clash).err().ok_or("non-injective t accepted")?;
    ensure!(err.axiom() == Some(Axiom::OutputsDistinct), "non-injective t blamed on {:?}", err.axiom());
    Ok(())
}

fn c2_embeddings_injective() -> Check {
    let trees = all_tree_classes(5);
    for s in &trees {
        for t in &trees {
            for e in hom_temb(s, t) {
                let map = e.to_poly_map(s, t).map_err(|e| e.to_string())?;
                ensure!(
                    [map.a0(), map.a1(), map.a2()].iter().all(|f| f.iter().collect::<BTreeSet<_>>().len() == f.len()),
                    "non-injective embedding {} -> {}",
                    s.canonical_form(),
                    t.canonical_form()
                );
            }
        }
    }
    Ok(())
}

fn c3_grafting() -> Check {
    let small = all_tree_classes(4);
    let targets = all_tree_classes(5);
    for lower in &small {
        for upper in &small {
            for &leaf in lower.leaves() {
                let g = graft(upper, lower, leaf).map_err(|e| e.to_string())?;
                let recert = certify_tree(g.tree.poly()).map_err(|e| e.to_string())?;
                ensure!(recert.edge_count() + 1 == lower.edge_count() + upper.edge_count(), "graft size");
                ensure!(g.lower.edges[leaf] == g.upper.edges[upper.root()], "graft legs disagree");
                for z in targets.iter().filter(|z| z.edge_count() >= g.tree.edge_count()) {
                    let mediators = hom_temb(&g.tree, z);
                    for f in hom_temb(lower, z) {
                        for h in hom_temb(upper, z) {
                            if f.edges[leaf] != h.edges[upper.root()] {
                                continue;
                            }
                            let fitting = mediators
                                .iter()
                                .filter(|u| g.lower.then(u).edges == f.edges && g.upper.then(u).edges == h.edges)
                                .count();
                            ensure!(
                                fitting == 1,
                                "{fitting} mediating maps for {} onto {} into {}",
                                upper.canonical_form(),
                                lower.canonical_form(),
                                z.canonical_form()
                            );
                        }
                    }
                }
            }
        }
    }
    // Units.
    for t in &small {
        let bar = Tree::trivial("u");
        for &leaf in t.leaves() {
            ensure!(graft(&bar, t, leaf).unwrap().tree.canonical_form() == t.canonical_form(), "right unit");
        }
        ensure!(graft(t, &bar, 0).unwrap().tree.canonical_form() == t.canonical_form(), "left unit");
    }
    // Associativity: r on a leaf of s, s on a leaf of t, in both orders.
    let tiny = all_tree_classes(3);
    for t in &tiny {
        for s in &tiny {
            for r in &tiny {
                for &l1 in t.leaves() {
                    for &l2 in s.leaves() {
                        let st = graft(s, t, l1).unwrap();
                        let left = graft(r, &st.tree, st.upper.edges[l2]).unwrap().tree;
                        let rs = graft(r, s, l2).unwrap().tree;
                        let right = graft(&rs, t, l1).unwrap().tree;
                        ensure!(left.canonical_form() == right.canonical_form(), "associativity");
                    }
                }
            }
        }
    }
    Ok(())
}

/// Plane trees with `edges` edges, as bracket strings, counted from scratch.
fn plane_trees(edges: usize, nullary: bool, max_arity: usize) -> Vec<String> {
    fn forests(edges: usize, k: usize, nullary: bool, max_arity: usize) -> Vec<Vec<String>> {
        if k == 0 {
            return if edges == 0 { vec![vec![]] } else { vec![] };
        }
        let mut out = Vec::new();
        for first in 1..=edges {
            for a in plane_trees(first, nullary, max_arity) {
                for mut rest in forests(edges - first, k - 1, nullary, max_arity) {
                    rest.insert(0, a.clone());
                    out.push(rest);
                }
            }
        }
        out
    }
    if edges == 0 {
        return vec![];
    }
    let mut out = Vec::new();
    if edges == 1 {
        out.push("|".to_string());
    }
    for k in 0..=max_arity {
        if k == 0 && !nullary {
            continue;
        }
        for children in forests(edges - 1, k, nullary, max_arity) {
            out.push(format!("({})", children.concat()));
        }
    }
    out
}

/// Sorts children recursively, turning a plane tree into an unordered one.
fn unorder(s: &str) -> String {
    if s == "|" {
        return s.to_string();
    }
    let inner = &s[1..s.len() - 1];
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0, 0);
    for (i, ch) in inner.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if depth == 0 {
            parts.push(unorder(&inner[start..=i]));
            start = i + 1;
        }
    }
    parts.sort();
    format!("({})", parts.concat())
}

fn term_string(t: &PTerm) -> String {
    match t {
        PTerm::Leaf(_) => "|".into(),
        PTerm::Node(_, ch) => format!("({})", ch.iter().map(term_string).collect::<String>()),
    }
}

fn c4_fixpoint_counts() -> Check {
    let id = identity_endofunctor(&FinSet::singleton("c"));
    let n = enumerate_ptrees(&id, 6, usize::MAX).len();
    ensure!(n == 7, "Id trees with at most 6 nodes: {n}");

    let m = free_monoid_truncated(4);
    let w = enumerate_ptrees(&m, usize::MAX, 5);
    ensure!(w.lambek_check(), "planar fixpoint is not closed");
    let mut positive = vec![0usize; 5];
    let mut all = vec![BTreeSet::new(); 5];
    for c in &w.classes {
        all[c.edges() - 1].insert(term_string(c));
        if !c.has_nullary_node() {
            positive[c.edges() - 1] += 1;
        }
    }
    ensure!(positive == [1, 1, 2, 5, 14], "positive-arity planar counts {positive:?}");
    for e in 1..=5 {
        let oracle_pos = plane_trees(e, false, 4).len();
        ensure!(positive[e - 1] == oracle_pos, "planar count at {e} edges vs plane-tree oracle {oracle_pos}");
        let oracle: BTreeSet<String> = plane_trees(e, true, 4).into_iter().collect();
        ensure!(all[e - 1] == oracle, "planar trees with stumps at {e} edges differ from the oracle");
    }

    let undecorated = undecorated_tree_classes(5);
    let stumpy = all_tree_classes(5);
    for e in 1..=5 {
        let ours = undecorated.iter().filter(|t| t.edge_count() == e).count();
        let oracle: BTreeSet<String> = plane_trees(e, false, 4).iter().map(|s| unorder(s)).collect();
        ensure!(ours == oracle.len(), "{ours} tree classes with {e} edges, oracle {}", oracle.len());
        let ours: BTreeSet<String> = stumpy.iter().filter(|t| t.edge_count() == e).map(|t| t.canonical_form()).collect();
        let oracle: BTreeSet<String> = plane_trees(e, true, 4).iter().map(|s| unorder(s)).collect();
        ensure!(ours.len() == oracle.len(), "tree classes with stumps at {e} edges");
    }
    Ok(())
}

fn c5_factorial_law() -> Check {
    let trees = arc_classes(5);
    for n in 0..=3 {
        let e = Arc::new(Tree::corolla(n));
        let fact = (1..=n).product::<usize>();
        for r in trees.iter().filter(|r| r.leaves().len() == n) {
            let count = count_boundary_preserving(&e, r).map_err(|e| e.to_string())?;
            let filtered = hom_omega(&e, r).iter().filter(|m| m.is_boundary_preserving()).count();
            ensure!(count == fact && filtered == fact, "{} has {count}/{filtered} boundary-preserving maps", r.canonical_form());
        }
    }
    Ok(())
}

struct Arrows {
    objects: Vec<Arc<Tree>>,
    homs: Vec<Vec<Vec<OmegaMorphism>>>,
}

impl Arrows {
    fn new(max_edges: usize) -> Arrows {
        let objects = arc_classes(max_edges);
        let homs = objects
            .iter()
            .map(|a| objects.iter().map(|b| hom_omega(a, b)).collect())
            .collect();
        Arrows { objects, homs }
    }

    /// Factorisations through canonical middles, grouped by composite.
    fn pairs(
        &self,
        s: usize,
        t: usize,
        left: impl Fn(&OmegaMorphism) -> bool,
        right: impl Fn(&OmegaMorphism) -> bool,
    ) -> BTreeMap<Vec<usize>, Vec<Factorisation>> {
        let mut out: BTreeMap<Vec<usize>, Vec<Factorisation>> = BTreeMap::new();
        for m in 0..self.objects.len() {
            for l in self.homs[s][m].iter().filter(|l| left(l)) {
                for r in self.homs[m][t].iter().filter(|r| right(r)) {
                    let e: Vec<usize> = l.edges.iter().map(|&x| r.edges[x]).collect();
                    out.entry(e).or_default().push(Factorisation { left: l.clone(), right: r.clone() });
                }
            }
        }
        out
    }
}

fn comparisons(f: &Factorisation, g: &Factorisation) -> usize {
    omega_isomorphisms(f.middle(), g.middle())
        .into_iter()
        .filter(|th| f.left.then(th).unwrap().edges == g.left.edges && th.then(&g.right).unwrap().edges == f.right.edges)
        .count()
}

fn stump_free(t: &Tree) -> bool {
    (0..t.node_count()).all(|v| t.arity(v) > 0)
}

fn c6_factorisation_systems() -> Check {
    let a = Arrows::new(4);
    let n = a.objects.len();
    let bp_inj = |m: &OmegaMorphism| m.is_boundary_preserving() && m.is_injective();
    for s in 0..n {
        for t in 0..n {
            let si = a.pairs(s, t, |l| l.is_surjective(), |r| r.is_injective());
            let gf = a.pairs(s, t, |l| l.is_boundary_preserving(), |r| r.is_free());
            for phi in &a.homs[s][t] {
                let here = format!("{} -> {} {:?}", a.objects[s].canonical_form(), a.objects[t].canonical_form(), phi.edges);
                let ours = factor_surj_inj(phi);
                ensure!(ours.left.is_surjective() && ours.right.is_injective(), "surj/inj classes at {here}");
                ensure!(ours.compose().edges == phi.edges, "surj/inj recomposition at {here}");
                let others = si.get(&phi.edges).ok_or(format!("no surj/inj factorisation found at {here}"))?;
                ensure!(others.iter().all(|g| comparisons(&ours, g) == 1), "surj/inj not unique at {here}");

                let ours = factor_generic_free(phi);
                ensure!(ours.left.is_boundary_preserving() && ours.right.is_free(), "generic/free classes at {here}");
                ensure!(ours.compose().edges == phi.edges, "generic/free recomposition at {here}");
                let others = gf.get(&phi.edges).ok_or(format!("no generic/free factorisation found at {here}"))?;
                ensure!(others.iter().all(|g| comparisons(&ours, g) == 1), "generic/free not unique at {here}");

                let (x, y, z) = triple_factor(phi);
                ensure!(x.is_surjective() && bp_inj(&y) && z.is_free(), "triple classes at {here}");
                ensure!(x.then(&y).unwrap().then(&z).unwrap().edges == phi.edges, "triple recomposition at {here}");
                let mut found = 0;
                for m1 in 0..n {
                    for m2 in 0..n {
                        for x2 in a.homs[s][m1].iter().filter(|m| m.is_surjective()) {
                            for y2 in a.homs[m1][m2].iter().filter(|m| bp_inj(m)) {
                                for z2 in a.homs[m2][t].iter().filter(|m| m.is_free()) {
                                    let e: Vec<usize> = x2.edges.iter().map(|&i| z2.edges[y2.edges[i]]).collect();
                                    if e != phi.edges {
                                        continue;
                                    }
                                    found += 1;
                                    let fitting = omega_isomorphisms(&x.target, &a.objects[m1])
                                        .iter()
                                        .flat_map(|t1| omega_isomorphisms(&y.target, &a.objects[m2]).into_iter().map(move |t2| (t1.clone(), t2)))
                                        .filter(|(t1, t2)| {
                                            x.then(t1).unwrap().edges == x2.edges
                                                && y.then(t2).unwrap().edges == t1.then(y2).unwrap().edges
                                                && t2.then(z2).unwrap().edges == z.edges
                                        })
                                        .count();
                                    ensure!(fitting == 1, "triple factorisation not unique at {here}");
                                }
                            }
                        }
                    }
                }
                ensure!(found > 0, "no triple factorisation found at {here}");

                let c = phi.free_conditions();
                let compare2 = stump_free(&a.objects[s]) && stump_free(&a.objects[t]);
                for (i, &ci) in c.iter().enumerate() {
                    if i == 1 && !compare2 {
                        continue;
                    }
                    ensure!(ci == c[0], "free condition {} disagrees at {here}", i + 1);
                }
            }
        }
    }
    Ok(())
}

fn c7_simplex_category() -> Check {
    for m in 0..=4 {
        for n in 0..=4 {
            let s = Arc::new(Tree::linear(m));
            let t = Arc::new(Tree::linear(n));
            let ours = hom_omega(&s, &t).len();
            let monotone = polytree::finset::universal::all_functions(m + 1, n + 1)
                .into_iter()
                .filter(|f| f.windows(2).all(|w| w[0] <= w[1]))
                .count();
            ensure!(ours == monotone, "{ours} maps between linear trees with {m} and {n} nodes, {monotone} monotone maps");
        }
    }
    Ok(())
}

fn c8_free_monad_laws() -> Check {
    for t in all_tree_classes(4) {
        let m = FreeMonad::of_tree(&t);
        ensure!(m.check_unit_laws(), "unit laws fail on {}", t.canonical_form());
        ensure!(m.check_associativity(), "associativity fails on {}", t.canonical_form());
    }
    let id = identity_endofunctor(&FinSet::singleton("c"));
    for (name, p) in [("Id", id), ("M", free_monoid_truncated(3))] {
        let m = FreeMonad::new(&p, 3, usize::MAX);
        ensure!(m.check_unit_laws(), "unit laws fail for {name}");
        ensure!(m.check_associativity(), "associativity fails for {name}");
    }
    Ok(())
}

fn c9_nerve_is_a_sheaf() -> Check {
    let site = Site::embeddings(5);
    let mut doctored = 0;
    for (i, p) in random_polys(25).iter().enumerate() {
        let x = nerve_n0(p, &site).map_err(|e| e.to_string())?;
        ensure!(segal_check(&x).unwrap().holds(), "nerve of random endofunctor {i} fails Segal");
        if let Some(t) = (0..site.len()).find(|&a| !site.objects[a].is_elementary() && !x.values[a].is_empty()) {
            let d = x.doubled_at(t);
            d.check().map_err(|e| e.to_string())?;
            match segal_check(&d).unwrap() {
                SegalVerdict::Fails { witness, injective, .. } => {
                    ensure!(witness == site.objects[t].canonical_form() && !injective, "wrong witness {witness}")
                }
                SegalVerdict::Holds => return Err(format!("doubled nerve {i} passes Segal")),
            }
            doctored += 1;
        }
    }
    ensure!(doctored > 0, "no random nerve could be doctored");
    let omega = Site::omega(4);
    let t = Arc::new(Tree::linear(2));
    let x = representable(&omega, &t);
    ensure!(segal_check(&x).unwrap().holds(), "representable fails Segal");
    let extra = x.with_extra_cell(omega.object_of(&t).unwrap()).unwrap();
    extra.check().map_err(|e| e.to_string())?;
    ensure!(!segal_check(&extra).unwrap().holds(), "extra cell passes Segal");
    Ok(())
}

fn random_nonsym(rng: &mut ChaCha8Rng) -> NonSymCollection {
    let colours = rng.gen_range(1..=2usize);
    let ops = rng.gen_range(0..=3usize);
    let names = ["f", "g", "h"];
    let specs: Vec<(&str, Vec<usize>, usize)> = (0..ops)
        .map(|k| {
            let arity = rng.gen_range(0..=3usize);
            (names[k], (0..arity).map(|_| rng.gen_range(0..colours)).collect(), rng.gen_range(0..colours))
        })
        .collect();
    NonSymCollection::from_ops(FinSet::new((0..colours).map(|i| format!("c{i}"))).unwrap(), &specs).unwrap()
}

fn c10_flatness() -> Check {
    for (i, p) in random_polys(25).iter().enumerate() {
        let c = nerve_r0(p);
        c.check().map_err(|e| e.to_string())?;
        ensure!(c.is_flat().is_ok(), "nerve of random endofunctor {i} is not flat");
        let q = c.flat_to_polyend().map_err(|e| e.to_string())?;
        ensure!(find_isomorphism(p, &q).is_some(), "reconstruction of random endofunctor {i} differs");
    }
    let commutative = Collection::generated(
        FinSet::singleton("c"),
        &[OpSpec { name: "m".into(), inputs: vec![0, 0], output: 0, fixed_by: vec![vec![1, 0]] }],
    )
    .unwrap();
    match commutative.is_flat() {
        Err(PresheafError::NotFlat { arity: 2, stabiliser, .. }) => {
            ensure!(stabiliser == vec![vec![0, 1], vec![1, 0]], "stabiliser witness {stabiliser:?}")
        }
        other => return Err(format!("commutative operation: {other:?}")),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xc011);
    let samples: Vec<NonSymCollection> = (0..12).map(|_| random_nonsym(&mut rng)).collect();
    for c in &samples {
        let s = symmetrise(c);
        ensure!(s.is_flat().is_ok(), "symmetrisation is not flat");
        ensure!(collections_isomorphic(&nerve_r0(&nonsym_to_polyend(c)), &s), "round trip differs from symmetrisation");
    }
    for c in samples.iter().take(6) {
        for d in samples.iter().take(6) {
            let (sc, sd) = (symmetrise(c), symmetrise(d));
            ensure!(
                count_collection_maps(&sc, &sd) == count_poly_maps(&nonsym_to_polyend(c), &nonsym_to_polyend(d)),
                "maps of symmetrisations differ from maps of planar endofunctors"
            );
            ensure!(count_collection_maps(&sc, &sd) == count_nonsym_maps(c, &sd.forget()), "adjunction count");
        }
    }
    Ok(())
}

fn c11_covers_and_injections() -> Check {
    for t in arc_classes(5) {
        let k = 1usize << t.inner_edges().len();
        let rc = reduced_covers(&t).map_err(|e| e.to_string())?;
        let gi = generic_injections(&t).map_err(|e| e.to_string())?;
        ensure!(rc.covers.len() == k && gi.maps.len() == k, "{}: {} covers, {} injections", t.canonical_form(), rc.covers.len(), gi.maps.len());
        ensure!(redcov_geninj_correspondence(&t).map_err(|e| e.to_string())?, "{}: correspondence fails", t.canonical_form());
    }
    Ok(())
}

fn c12_rigidity() -> Check {
    let mut polys = random_polys(25);
    polys.push(identity_endofunctor(&FinSet::singleton("c")));
    polys.push(free_monoid_truncated(3));
    let mut checked = 0usize;
    for p in &polys {
        for pt in enumerate_ptrees(p, 3, 6).trees() {
            ensure!(is_rigid(&pt), "{} is not rigid", pt.term().render(p));
            checked += 1;
        }
        for t in all_tree_classes(5) {
            if let Ok(ds) = decorations(&t, p) {
                for pt in ds {
                    ensure!(is_rigid(&pt), "decoration of {} is not rigid", t.canonical_form());
                    checked += 1;
                }
            }
        }
    }
    ensure!(checked > 0, "nothing to check");
    Ok(())
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("example diagrams validate", c1_examples_validate),
        ("embeddings are injective", c2_embeddings_injective),
        ("grafting is a pushout, unital, associative", c3_grafting),
        ("fixpoint counts", c4_fixpoint_counts),
        ("n! boundary-preserving maps", c5_factorial_law),
        ("factorisation systems", c6_factorisation_systems),
        ("linear trees form the simplex category", c7_simplex_category),
        ("free monad laws", c8_free_monad_laws),
        ("nerves satisfy Segal, doctored ones fail", c9_nerve_is_a_sheaf),
        ("flatness and symmetrisation", c10_flatness),
        ("reduced covers and generic injections", c11_covers_and_injections),
        ("P-trees are rigid", c12_rigidity),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let line = match outcome {
            Ok(()) => format!("criterion {:>2}: PASS  {name} ({secs:.1}s)\n", i + 1),
            Err(why) => {
                failed.push(i + 1);
                format!("criterion {:>2}: FAIL  {name}: {why} ({secs:.1}s)\n", i + 1)
            }
        };
        // Straight to the handle so the lines show without --nocapture.
        std::io::stderr().write_all(line.as_bytes()).unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
