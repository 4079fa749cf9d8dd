mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use towers::graph::{girth, Digraph};
use towers::level::{
    circuit_windows, is_filtrating_interval, is_matching, is_primitive, lift_circuit, pattern_walk,
    refine_on_circuit, restrict_to, validate_level, Bridge, Circuit, PatternStep, SymbolicLevel,
};

use common::{brute_filtrating, digraph, example_e, q};

fn alphabet(s: usize) -> SymbolicLevel {
    let names: Vec<String> = (0..s).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
    SymbolicLevel::root(Digraph::complete(&names))
}

/// A primitive cycle over a complete root and an optional bridge back onto it.
fn arb_circuit() -> impl Strategy<Value = (usize, Circuit)> {
    (2usize..=3).prop_flat_map(|s| {
        (
            Just(s),
            proptest::collection::vec(0..s, 1..=5),
            proptest::option::of((0usize..5, proptest::collection::vec(0..s, 0..=2), 0usize..5)),
        )
            .prop_filter_map("needs a valid circuit", |(s, cyc, bridge)| {
                if !is_primitive(&cyc) {
                    return None;
                }
                let l = cyc.len();
                let bridges = match bridge {
                    None => vec![],
                    Some((fp, mid, tp)) => {
                        let (fp, tp) = (fp % l, tp % l);
                        let mut path = vec![cyc[fp]];
                        path.extend(mid);
                        path.push(cyc[tp]);
                        vec![Bridge { from: 0, from_phase: fp, path, to: 0, to_phase: tp }]
                    }
                };
                let k = Circuit { cycles: vec![cyc], bridges };
                k.validate(&alphabet(s).graph).ok()?;
                Some((s, k))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn refinement_invariants((s, k) in arb_circuit(), m in 0usize..9, n in 0usize..9) {
        prop_assume!(m + n >= 1);
        let root = alphabet(s);
        let lvl = refine_on_circuit(&root, &k, m, n, &q(1, 2)).unwrap();
        prop_assert!(validate_level(&lvl, Some(&root), &q(1, 2)).is_empty());
        let words: BTreeSet<Vec<usize>> = (0..lvl.len()).map(|v| lvl.window(v).to_vec()).collect();
        prop_assert_eq!(words.len(), lvl.len());
        prop_assert_eq!(words, circuit_windows(&k, m, n));
        // narrow windows can close up early: aaab at width 2 has aa -> aa, and a
        // bridge a -> b on aab gives abab at width 3
        let shortest = k.cycles.iter().map(Vec::len).min().unwrap();
        let longest = k.cycles.iter().map(Vec::len).max().unwrap();
        let excursion = k.bridges.iter().map(|b| b.path.len()).max().unwrap_or(0);
        if m.min(n) >= longest + excursion {
            prop_assert!(girth(&lvl.graph).unwrap() >= shortest);
        }
        // the parent is recorded as the window base
        for v in 0..lvl.len() {
            prop_assert_eq!(lvl.parent_of[v], lvl.base(v));
        }
    }

    #[test]
    fn lifted_circuit_projects_back((s, k) in arb_circuit(), m in 0usize..3, n in 1usize..4) {
        let root = alphabet(s);
        let lvl = refine_on_circuit(&root, &k, m, n, &q(1, 2)).unwrap();
        let lifted = lift_circuit(&k, &lvl).unwrap();
        prop_assert!(lifted.validate(&lvl.graph).is_ok());
        for (c, lc) in k.cycles.iter().zip(&lifted.cycles) {
            let bases: Vec<usize> = lc.iter().map(|&v| lvl.base(v)).collect();
            prop_assert_eq!(&bases, c);
        }
        prop_assert_eq!(lifted.bridges.len(), k.bridges.len());
    }

    #[test]
    fn deeper_windows_match_shallower((s, k) in arb_circuit(), m in 0usize..3, n in 1usize..3) {
        let root = alphabet(s);
        let coarse = refine_on_circuit(&root, &k, m, n, &q(1, 2)).unwrap();
        let fine = refine_on_circuit(&root, &k, m + 1, n + 1, &q(1, 2)).unwrap();
        // every fine window contains exactly one coarse window at its centre,
        // and every coarse window is hit
        let mut hit = BTreeSet::new();
        for f in 0..fine.len() {
            let w = &fine.window(f)[1..fine.window(f).len() - 1];
            let c = (0..coarse.len()).find(|&c| coarse.window(c) == w);
            prop_assert!(c.is_some());
            hit.insert(c.unwrap());
        }
        prop_assert_eq!(hit.len(), coarse.len());
        prop_assert!(is_matching(&coarse, &coarse));
    }

    #[test]
    fn filtrating_agrees_with_walks(n in 1usize..=8, edges in proptest::collection::vec((0usize..8, 0usize..8), 0..20), mask in 0u16..256) {
        let e: Vec<(usize, usize)> = edges.into_iter().filter(|&(u, v)| u < n && v < n).collect();
        let g = digraph(n, &e);
        let f: BTreeSet<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
        let got = is_filtrating_interval(&g, &f);
        prop_assert_eq!(got.is_ok(), brute_filtrating(&g, &f));
        if let Err(w) = got {
            // the witness is a real walk leaving f and coming back
            prop_assert!(w.len() >= 3);
            prop_assert!(f.contains(&w[0]) && f.contains(w.last().unwrap()));
            prop_assert!(w[1..w.len() - 1].iter().all(|v| !f.contains(v)));
            prop_assert!(w.windows(2).all(|p| g.has_edge(p[0], p[1])));
        }
    }
}

#[test]
fn example_e_windows() {
    let (root, k) = example_e();
    let name = |w: &[usize]| w.iter().map(|&a| root.graph.name(a)).collect::<String>();
    let w3: BTreeSet<String> = circuit_windows(&k, 1, 1).iter().map(|w| name(w)).collect();
    assert_eq!(w3, ["aab", "aba", "baa", "bab"].iter().map(|s| s.to_string()).collect());
    let w1: BTreeSet<String> = circuit_windows(&k, 0, 0).iter().map(|w| name(w)).collect();
    assert_eq!(w1.len(), 2);
    let lvl = refine_on_circuit(&root, &k, 1, 1, &q(1, 2)).unwrap();
    assert_eq!((lvl.len(), lvl.graph.edge_count()), (4, 5));
    assert_eq!(girth(&lvl.graph), Some(2));
    let loop_a = Circuit { cycles: vec![vec![0]], bridges: vec![] };
    let aaaaa = circuit_windows(&loop_a, 2, 2);
    assert_eq!(aaaaa, [vec![0; 5]].into());
}

#[test]
fn pattern_with_bridge_has_expected_period() {
    let (root, k) = example_e();
    let walk = pattern_walk(&k, &[PatternStep { cycle: 0, reps: 2, bridge: Some(0) }]).unwrap();
    assert_eq!(walk.len(), 7);
    let pat = Circuit { cycles: vec![walk], bridges: vec![] };
    let lvl = refine_on_circuit(&root, &pat, 8, 8, &q(1, 2)).unwrap();
    assert_eq!(lvl.len(), 7);
    assert_eq!(girth(&lvl.graph), Some(7));
}

#[test]
fn restriction_trims_and_keeps_windows() {
    let (root, k) = example_e();
    let lvl = refine_on_circuit(&root, &k, 1, 1, &q(1, 2)).unwrap();
    let pair: BTreeSet<usize> =
        ["a.b.a", "b.a.b"].iter().map(|s| lvl.graph.index_of(s).unwrap()).collect();
    let sub = restrict_to(&lvl, &pair).unwrap();
    assert_eq!(sub.len(), 2);
    for v in 0..sub.len() {
        let orig = lvl.graph.index_of(sub.graph.name(v)).unwrap();
        assert_eq!(sub.window(v), lvl.window(orig));
    }
    // a lone aab has no cycle and trims away
    let lone: BTreeSet<usize> = [lvl.graph.index_of("a.a.b").unwrap()].into();
    assert!(restrict_to(&lvl, &lone).is_err());
}

#[test]
fn broken_window_is_reported() {
    let (root, k) = example_e();
    let mut lvl = refine_on_circuit(&root, &k, 1, 1, &q(1, 2)).unwrap();
    let v = lvl.graph.index_of("a.b.a").unwrap();
    lvl.parent_of[v] = 0;
    let kinds: Vec<&str> = validate_level(&lvl, Some(&root), &q(1, 2)).iter().map(|x| x.kind()).collect();
    assert!(kinds.contains(&"nesting"));
}
