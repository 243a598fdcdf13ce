mod common;

use gatar::comms::{propagate_taint, CommGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn taint_reaches_exactly_the_hop_ball() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let n = rng.random_range(1..12);
        let p = rng.random_range(0.1..0.6);
        let nbrs = common::random_graph(&mut rng, n, p);
        let edges: Vec<(usize, usize)> =
            nbrs.iter().enumerate().flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j))).collect();
        let g = CommGraph::from_edges(n, edges);
        let source = rng.random_range(0..n);
        for rounds in 0..=6 {
            let got: Vec<usize> =
                propagate_taint(&g, source, rounds).unwrap().iter().enumerate().filter(|(_, t)| **t).map(|(i, _)| i).collect();
            let want: Vec<usize> = common::hop_ball(&nbrs, source, rounds).into_iter().collect();
            assert_eq!(got, want, "n={n} source={source} rounds={rounds}");
        }
    }
}
