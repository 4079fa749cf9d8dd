mod common;

use std::collections::{BTreeSet, VecDeque};

use proptest::prelude::*;
use towers::graph::{
    canonical_rotation, exists_path_bounded, girth, is_strongly_connected, reachable_in_exactly,
    simple_cycles, strongly_connected_components, trim_bi_infinite, Digraph, DEFAULT_CYCLE_BUDGET,
};

use common::{brute_simple_cycles, digraph};

fn arb_graph(max_n: usize) -> impl Strategy<Value = Digraph> {
    (1..=max_n).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..n * 3).prop_map(move |e| digraph(n, &e))
    })
}

fn bfs_dist(g: &Digraph, s: usize) -> Vec<Option<usize>> {
    let mut d = vec![None; g.len()];
    let mut q = VecDeque::new();
    for &v in g.succ(s) {
        if d[v].is_none() {
            d[v] = Some(1);
            q.push_back(v);
        }
    }
    while let Some(u) = q.pop_front() {
        for &v in g.succ(u) {
            if d[v].is_none() {
                d[v] = Some(d[u].unwrap() + 1);
                q.push_back(v);
            }
        }
    }
    d
}

proptest! {
    #[test]
    fn simple_cycles_match_dfs(g in arb_graph(7)) {
        let got = simple_cycles(&g, DEFAULT_CYCLE_BUDGET).unwrap();
        let mut got_sorted = got.clone();
        got_sorted.sort();
        prop_assert_eq!(got_sorted, brute_simple_cycles(&g));
    }

    #[test]
    fn girth_is_shortest_cycle(g in arb_graph(8)) {
        let brute = brute_simple_cycles(&g).iter().map(Vec::len).min();
        prop_assert_eq!(girth(&g), brute);
    }

    #[test]
    fn components_partition_by_mutual_reachability(g in arb_graph(8)) {
        let comps = strongly_connected_components(&g);
        let mut seen = BTreeSet::new();
        for c in &comps {
            for &v in c {
                prop_assert!(seen.insert(v));
            }
        }
        prop_assert_eq!(seen.len(), g.len());
        let reach: Vec<Vec<Option<usize>>> = (0..g.len()).map(|s| bfs_dist(&g, s)).collect();
        let mutual = |u: usize, v: usize| u == v || (reach[u][v].is_some() && reach[v][u].is_some());
        for c in &comps {
            for &u in c {
                for v in 0..g.len() {
                    prop_assert_eq!(c.contains(&v), mutual(u, v));
                }
            }
        }
        prop_assert_eq!(is_strongly_connected(&g), comps.len() == 1 && !g.is_empty());
    }

    #[test]
    fn bounded_path_is_shortest(g in arb_graph(8), s in 0usize..8, t in 0usize..8, cap in 1usize..10) {
        prop_assume!(s < g.len() && t < g.len());
        let d = bfs_dist(&g, s)[t];
        prop_assert_eq!(exists_path_bounded(&g, s, t, cap), d.filter(|&x| x <= cap));
    }

    #[test]
    fn exact_length_reach(g in arb_graph(6), s in 0usize..6, k in 0usize..6) {
        prop_assume!(s < g.len());
        let mut cur: BTreeSet<usize> = [s].into();
        for _ in 0..k {
            cur = cur.iter().flat_map(|&u| g.succ(u).iter().copied()).collect();
        }
        prop_assert_eq!(reachable_in_exactly(&g, &[s].into(), k), cur);
    }

    #[test]
    fn trim_keeps_exactly_cycle_reachable(g in arb_graph(8)) {
        let t = trim_bi_infinite(&g);
        for v in 0..t.len() {
            prop_assert!(!t.succ(v).is_empty() && !t.pred(v).is_empty());
        }
        // a vertex survives iff it lies between two cycles
        let on_cycle: BTreeSet<usize> = brute_simple_cycles(&g).into_iter().flatten().collect();
        let reach: Vec<Vec<Option<usize>>> = (0..g.len()).map(|s| bfs_dist(&g, s)).collect();
        let hits = |u: usize, v: usize| u == v || reach[u][v].is_some();
        let kept = (0..g.len())
            .filter(|&v| on_cycle.iter().any(|&c| hits(c, v)) && on_cycle.iter().any(|&c| hits(v, c)))
            .count();
        prop_assert_eq!(t.len(), kept);
    }

    #[test]
    fn canonical_rotation_is_least(c in proptest::collection::vec(0usize..4, 1..12), r in 0usize..12) {
        let rot: Vec<usize> = (0..c.len()).map(|i| c[(i + r) % c.len()]).collect();
        let least = (0..c.len()).map(|s| (0..c.len()).map(|i| c[(i + s) % c.len()]).collect::<Vec<_>>()).min().unwrap();
        prop_assert_eq!(canonical_rotation(&c), least.clone());
        prop_assert_eq!(canonical_rotation(&rot), least);
    }
}

#[test]
fn cycle_budget_is_enforced() {
    let g = Digraph::complete(&["a", "b", "c", "d", "e"]);
    assert!(simple_cycles(&g, 10).is_err());
    assert_eq!(simple_cycles(&g, DEFAULT_CYCLE_BUDGET).unwrap().len(), brute_simple_cycles(&g).len());
}

#[test]
fn long_chains_compress() {
    // a 400-cycle with a chord 250 -> 10: cycles of length 400 and 241
    let n = 400;
    let mut e: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    e.push((250, 10));
    let g = digraph(n, &e);
    assert_eq!(girth(&g), Some(241));
    assert_eq!(simple_cycles(&g, DEFAULT_CYCLE_BUDGET).unwrap().len(), 2);
}
