use polytree_cli::syntax::{parse, print, strip_positions};
use proptest::prelude::*;

fn ident() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z][a-z0-9_]{0,4}",
        "[A-Z][a-z']{0,3}",
        // Forces quoting.
        "[a-z ]{1,4}",
        Just("tree".to_string()),
    ]
}

fn tree_doc() -> impl Strategy<Value = String> {
    (ident(), prop::collection::vec(ident(), 1..5), prop::collection::vec((ident(), prop::collection::vec(0usize..4, 0..3), 0usize..4), 0..3))
        .prop_map(|(name, edges, nodes)| {
            let q = |s: &str| polytree_cli::syntax::quote(s);
            let e = |i: usize| q(&edges[i % edges.len()]);
            let nodes: Vec<String> = nodes
                .iter()
                .map(|(n, ins, out)| {
                    let ins: Vec<String> = ins.iter().map(|&i| e(i)).collect();
                    format!("node {} : [{}] -> {}", q(n), ins.join(", "), e(*out))
                })
                .collect();
            let edges: Vec<String> = edges.iter().map(|x| q(x)).collect();
            let mut body = format!("edges: {}", edges.join(" "));
            for n in nodes {
                body.push_str("; ");
                body.push_str(&n);
            }
            format!("poly {} {{ {body} }}\ncoll C {{ colours: c; op m : (c, c) -> c fixed-by: [1, 0] }}\npresheaf X = extra-cell(doubled(nerve({}), T), T)\n", q(&name), q(&name))
        })
}

proptest! {
    #[test]
    fn printing_is_stable(src in tree_doc()) {
        let doc = parse(&src).unwrap();
        let printed = print(&doc);
        let again = parse(&printed).unwrap();
        prop_assert_eq!(strip_positions(&doc), strip_positions(&again));
        prop_assert_eq!(print(&again), printed);
    }
}

#[test]
fn fixture_round_trips() {
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/basic.pt")).unwrap();
    let doc = parse(&src).unwrap();
    assert_eq!(strip_positions(&parse(&print(&doc)).unwrap()), strip_positions(&doc));
}
