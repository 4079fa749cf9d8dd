//! Independent oracles shared by the integration tests. None of them call
//! the algorithm they check.
#![allow(dead_code)]

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use towers::graph::Digraph;
use towers::level::{Bridge, Circuit, SymbolicLevel, WindowStore};
use towers::Rational;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn q(p: i64, d: i64) -> Rational {
    Rational::new(p.into(), d.into())
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i:04}")).collect()
}

pub fn digraph(n: usize, edges: &[(usize, usize)]) -> Digraph {
    Digraph::from_sorted_names(names(n), edges)
}

pub fn random_digraph(r: &mut ChaCha8Rng, n: usize, p: f64) -> Digraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if r.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    digraph(n, &edges)
}

pub fn example_e() -> (SymbolicLevel, Circuit) {
    let root = SymbolicLevel::root(Digraph::complete(&["a", "b"]));
    let k = Circuit {
        cycles: vec![vec![0, 1]],
        bridges: vec![Bridge { from: 0, from_phase: 0, path: vec![0, 0, 1], to: 0, to_phase: 1 }],
    };
    (root, k)
}

/// A level over `parent_size` parent rectangles with the given graph and
/// bases, windows of width one.
pub fn based_level(graph: Digraph, bases: Vec<usize>) -> SymbolicLevel {
    let n = graph.len();
    SymbolicLevel {
        index: 1,
        graph,
        parent_of: bases.clone(),
        windows: Some(WindowStore::explicit(0, 0, bases.into_iter().map(|b| vec![b]).collect())),
        diam: q(1, 2),
        tags: vec![None; n],
    }
}

/// Some pair of distinct rectangles with equal bases extends to pair paths of
/// every length in both directions. With `P` same-base pairs, length `P` in
/// each direction already forces a bi-infinite pair path.
pub fn brute_non_expansive(child: &SymbolicLevel) -> bool {
    let n = child.len();
    let same = |u: usize, v: usize| child.parent_of[u] == child.parent_of[v];
    let pairs: usize = (0..n).map(|u| (0..n).filter(|&v| same(u, v)).count()).sum();
    let extend = |fwd: bool| {
        let mut alive = vec![vec![true; n]; n];
        for u in 0..n {
            for v in 0..n {
                alive[u][v] = same(u, v);
            }
        }
        for _ in 0..pairs {
            let mut next = vec![vec![false; n]; n];
            for u in 0..n {
                for v in 0..n {
                    if !alive[u][v] {
                        continue;
                    }
                    let (su, sv) = if fwd {
                        (child.graph.succ(u), child.graph.succ(v))
                    } else {
                        (child.graph.pred(u), child.graph.pred(v))
                    };
                    next[u][v] = su.iter().any(|&a| sv.iter().any(|&b| alive[a][b]));
                }
            }
            alive = next;
        }
        alive
    };
    let (f, b) = (extend(true), extend(false));
    (0..n).any(|u| (0..n).any(|v| u != v && f[u][v] && b[u][v]))
}

type Q = Ratio<i64>;

/// Solves `A x = b` restricted to the columns in `cols`; `Some` only when
/// the columns are independent and the system is consistent.
fn solve(a: &[Vec<i64>], b: &[i64], cols: &[usize]) -> Option<Vec<Q>> {
    let rows = a.len();
    let k = cols.len();
    let mut m: Vec<Vec<Q>> =
        (0..rows).map(|i| cols.iter().map(|&c| Q::from(a[i][c])).chain([Q::from(b[i])]).collect()).collect();
    let mut r = 0;
    for c in 0..k {
        let p = (r..rows).find(|&i| !m[i][c].is_zero())?;
        m.swap(r, p);
        let inv = Q::one() / m[r][c];
        for x in m[r].iter_mut() {
            *x *= inv;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c];
                for j in 0..=k {
                    let d = m[r][j] * f;
                    m[i][j] -= d;
                }
            }
        }
        r += 1;
    }
    if (r..rows).any(|i| !m[i][k].is_zero()) {
        return None;
    }
    Some((0..k).map(|i| m[i][k]).collect())
}

/// Vertices of the normalized circulation polytope, as vertex marginals.
/// A feasible point is a vertex iff its support columns are independent, so
/// every edge subset is tried as a candidate support.
pub fn circulation_vertices(g: &Digraph) -> Vec<Vec<Q>> {
    let edges: Vec<(usize, usize)> = g.edges().collect();
    let e = edges.len();
    assert!(e <= 16, "catalog graphs stay small");
    let n = g.len();
    let mut a = vec![vec![0i64; e]; n + 1];
    for (j, &(u, v)) in edges.iter().enumerate() {
        a[u][j] -= 1;
        a[v][j] += 1;
        a[n][j] = 1;
    }
    let mut b = vec![0i64; n + 1];
    b[n] = 1;
    let mut out = BTreeSet::new();
    for mask in 1u32..(1 << e) {
        if mask.count_ones() as usize > n {
            continue;
        }
        let cols: Vec<usize> = (0..e).filter(|&j| mask >> j & 1 == 1).collect();
        if let Some(x) = solve(&a, &b, &cols) {
            if x.iter().all(|v| v.is_positive()) {
                let mut marg = vec![Q::zero(); n];
                for (i, &j) in cols.iter().enumerate() {
                    marg[edges[j].0] += x[i];
                }
                out.insert(marg);
            }
        }
    }
    out.into_iter().collect()
}

/// Largest total variation over pairs of polytope vertices. TV is jointly
/// convex, so the maximum over the polytope is attained at a vertex pair.
pub fn circulation_diameter(g: &Digraph) -> Rational {
    let vs = circulation_vertices(g);
    let mut best = Q::zero();
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            let tv: Q = vs[i].iter().zip(&vs[j]).map(|(x, y)| (x - y).abs()).sum::<Q>() / 2;
            best = best.max(tv);
        }
    }
    Rational::new(BigInt::from(*best.numer()), BigInt::from(*best.denom()))
}

/// Fixed catalog of small graphs (≤ 8 vertices, ≤ 12 edges, at least one cycle).
pub fn diameter_catalog() -> Vec<Digraph> {
    let mut r = rng(0xd1a);
    let mut out = Vec::new();
    while out.len() < 50 {
        let n = r.gen_range(2..=8);
        let p = r.gen_range(0.15..0.45);
        let g = random_digraph(&mut r, n, p);
        if g.edge_count() >= 2 && g.edge_count() <= 12 && !brute_simple_cycles(&g).is_empty() {
            out.push(g);
        }
    }
    out
}

/// Walk enumeration: a walk that starts in `f`, steps outside and returns.
/// A shortest one visits distinct outside vertices, so length `|V|` suffices.
pub fn brute_filtrating(g: &Digraph, f: &BTreeSet<usize>) -> bool {
    fn returns(g: &Digraph, f: &BTreeSet<usize>, x: usize, left: usize) -> bool {
        if left == 0 {
            return false;
        }
        g.succ(x).iter().any(|&y| f.contains(&y) || returns(g, f, y, left - 1))
    }
    !f.iter().any(|&u| g.succ(u).iter().any(|&x| !f.contains(&x) && returns(g, f, x, g.len())))
}

/// Simple cycles by DFS from each minimum vertex, rotated to start there.
pub fn brute_simple_cycles(g: &Digraph) -> Vec<Vec<usize>> {
    fn dfs(g: &Digraph, s: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().unwrap();
        for &w in g.succ(last) {
            if w == s {
                out.push(path.clone());
            } else if w > s && !path.contains(&w) {
                path.push(w);
                dfs(g, s, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    for s in 0..g.len() {
        dfs(g, s, &mut vec![s], &mut out);
    }
    out.sort();
    out
}

/// Exact rank by elimination over the rationals.
pub fn brute_rank(rows: &[Vec<Rational>]) -> usize {
    let mut m = rows.to_vec();
    let cols = m.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, p);
        for i in 0..m.len() {
            if i != r && !m[i][c].is_zero() {
                let f = &m[i][c] / &m[r][c];
                for j in 0..cols {
                    let d = &m[r][j] * &f;
                    m[i][j] -= d;
                }
            }
        }
        r += 1;
    }
    r
}

/// Distribution of a closed walk over the rectangles of its level.
pub fn walk_marginal(size: usize, walk: &[usize]) -> Vec<Rational> {
    let mut w = vec![Rational::zero(); size];
    for &v in walk {
        w[v] += Rational::one();
    }
    let len = Rational::from_integer(walk.len().into());
    w.into_iter().map(|x| x / &len).collect()
}

/// `Σ_k 2^{-k} TV` of the pushes to every common level, summed directly.
pub fn brute_metric(levels: &[std::sync::Arc<SymbolicLevel>], a: (usize, &[Rational]), b: (usize, &[Rational])) -> Rational {
    let up = |(mut k, w): (usize, &[Rational]), to: usize| -> Vec<Rational> {
        let mut w = w.to_vec();
        while k > to {
            let mut p = vec![Rational::zero(); levels[k - 1].len()];
            for (v, x) in w.iter().enumerate() {
                p[levels[k].parent_of[v]] += x;
            }
            w = p;
            k -= 1;
        }
        w
    };
    let top = a.0.min(b.0);
    let mut total = Rational::zero();
    for k in 0..=top {
        let (x, y) = (up(a, k), up(b, k));
        let tv: Rational = x.iter().zip(&y).map(|(s, t)| (s - t).abs()).sum::<Rational>() / Rational::from_integer(2.into());
        total += tv / Rational::from_integer(BigInt::one() << k);
    }
    total
}
