use anonq::format::{bits_string, parse_bits, parse_graph, serialize_graph, FormatError};
use anonq_core::graph::{enumerate_graphs, example1b, PortDigraph};
use proptest::prelude::*;

fn pool() -> Vec<PortDigraph> {
    let mut v: Vec<PortDigraph> = enumerate_graphs(3, 2).unwrap().collect();
    v.push(example1b());
    v
}

proptest! {
    #[test]
    fn graphs_round_trip(pick in any::<prop::sample::Index>(), numbering in any::<u64>()) {
        let all = pool();
        let g = pick.get(&all);
        let h = g.numbering(numbering as u128 % g.numbering_count());
        let text = serialize_graph(&h);
        prop_assert_eq!(parse_graph(&text).unwrap(), h);
    }

    #[test]
    fn bits_round_trip(x in prop::collection::vec(any::<bool>(), 0..12)) {
        prop_assert_eq!(parse_bits(&bits_string(&x)), Some(x));
    }
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let text = "# two-cycle\n2 2\n\n0 1 1 1  # forward\n1 0 1 1\n";
    let g = parse_graph(text).unwrap();
    assert_eq!(g.n(), 2);
    assert_eq!(g.edges().len(), 2);
}

#[test]
fn malformed_files_are_rejected() {
    assert!(matches!(parse_graph(""), Err(FormatError::Syntax { line: 1, .. })));
    assert!(matches!(parse_graph("2 2\n0 1 1 1\n"), Err(FormatError::EdgeCount { expected: 2, found: 1 })));
    assert!(matches!(parse_graph("2 1\n0 1 1\n"), Err(FormatError::Syntax { line: 2, .. })));
    assert!(matches!(parse_graph("2 2\n0 1 1 1\n1 0 2 1\n"), Err(FormatError::Graph(_))));
    assert_eq!(parse_bits("01x"), None);
}
