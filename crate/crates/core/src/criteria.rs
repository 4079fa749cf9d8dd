//! Exact decision procedures for the finite-level criteria.

use std::borrow::Borrow;
use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::error::{GraphError, MeasureError};
use crate::graph::{self, Digraph};
use crate::level::{SymbolicLevel, Tag};
use crate::measure::{independence_radius, metric_d, MeasureVector};
use crate::Rational;

pub fn check_chain_transitive(level: &SymbolicLevel) -> bool {
    graph::is_strongly_connected(&level.graph)
}

/// Minimum period; `None` for an acyclic level.
pub fn min_period(level: &SymbolicLevel) -> Option<usize> {
    graph::girth(&level.graph)
}

/// First-hit times `n(a, v)`; entries are recomputed from the windows on demand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinimalityTable {
    /// `max_a n(a, v)` for every child rectangle.
    pub cover: Vec<usize>,
}

impl MinimalityTable {
    pub fn max_first_hit(&self) -> usize {
        self.cover.iter().copied().max().unwrap_or(0)
    }

    /// `n(a, v)`, the first `k ≥ 1` with `window(v)[k] = a`.
    pub fn first_hit(child: &SymbolicLevel, a: usize, v: usize) -> Option<usize> {
        child.forward(v).iter().position(|&x| x == a).map(|k| k + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinimalityFailure {
    pub v: usize,
    pub missing: usize,
}

/// Every child window's forward part contains every parent rectangle.
pub fn check_minimality(child: &SymbolicLevel, parent: &SymbolicLevel) -> Result<MinimalityTable, MinimalityFailure> {
    let np = parent.len();
    let mut stamp = vec![usize::MAX; np];
    let mut cover = Vec::with_capacity(child.len());
    for v in 0..child.len() {
        let fwd = child.forward(v);
        let mut seen = 0;
        let mut last = 0;
        for (k, &a) in fwd.iter().enumerate() {
            if stamp[a] != v {
                stamp[a] = v;
                seen += 1;
                last = k + 1;
                if seen == np {
                    break;
                }
            }
        }
        if seen < np {
            let missing = (0..np).find(|&a| stamp[a] != v).unwrap();
            return Err(MinimalityFailure { v, missing });
        }
        cover.push(last);
    }
    Ok(MinimalityTable { cover })
}

/// Product of the child with itself over equal base rectangles, trimmed.
/// Passing means only diagonal pairs lie on bi-infinite paths.
pub fn check_expansive_chains(child: &SymbolicLevel, _parent: &SymbolicLevel) -> Result<(), (usize, usize)> {
    let (pg, pairs) = same_base_product(child);
    let alive = graph::trim_mask(&pg);
    match (0..pairs.len()).find(|&i| alive[i] && pairs[i].0 != pairs[i].1) {
        Some(i) => Err(pairs[i]),
        None => Ok(()),
    }
}

/// Pairs `(u, v)` with equal bases and the componentwise edges between them.
pub fn same_base_product(child: &SymbolicLevel) -> (Digraph, Vec<(usize, usize)>) {
    let mut by_base: HashMap<usize, Vec<usize>> = HashMap::new();
    for v in 0..child.len() {
        by_base.entry(child.base(v)).or_default().push(v);
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for group in by_base.values() {
        for &u in group {
            for &v in group {
                pairs.push((u, v));
            }
        }
    }
    pairs.sort_unstable();
    let id: HashMap<(usize, usize), usize> = pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut edges = Vec::new();
    for (i, &(u, v)) in pairs.iter().enumerate() {
        for &u2 in child.graph.succ(u) {
            for &v2 in child.graph.succ(v) {
                if let Some(&j) = id.get(&(u2, v2)) {
                    edges.push((i, j));
                }
            }
        }
    }
    let names = (0..pairs.len()).map(|i| format!("{i:010}")).collect();
    (Digraph::from_sorted_names(names, &edges), pairs)
}

/// Ergodic diameter and the two cycles realizing it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErgodicDiameter {
    pub value: Rational,
    pub witness: Option<(Vec<usize>, Vec<usize>)>,
    /// Exact for strongly connected levels, an upper bound otherwise.
    pub exact: bool,
}

/// Largest total variation between uniform measures on simple cycles.
pub fn ergodic_diameter(level: &SymbolicLevel, budget: usize) -> Result<ErgodicDiameter, GraphError> {
    let cycles = graph::simple_cycles(&level.graph, budget)?;
    let exact = graph::is_strongly_connected(&level.graph);
    let sorted: Vec<Vec<usize>> = cycles
        .iter()
        .map(|c| {
            let mut s = c.clone();
            s.sort_unstable();
            s
        })
        .collect();
    // For simple cycles TV = 1 - |C ∩ D| / max(|C|, |D|).
    let mut best: Option<(usize, usize, usize, usize)> = None; // (shared, longest, i, j)
    for i in 0..cycles.len() {
        for j in i + 1..cycles.len() {
            let shared = intersection_size(&sorted[i], &sorted[j]);
            let longest = sorted[i].len().max(sorted[j].len());
            let better = match best {
                None => true,
                Some((s, l, _, _)) => (shared as u128) * (l as u128) < (s as u128) * (longest as u128),
            };
            if better {
                best = Some((shared, longest, i, j));
            }
        }
    }
    Ok(match best {
        None => ErgodicDiameter { value: Rational::zero(), witness: None, exact },
        Some((s, l, i, j)) => ErgodicDiameter {
            value: Rational::one() - Rational::new(BigInt::from(s), BigInt::from(l)),
            witness: Some((cycles[i].clone(), cycles[j].clone())),
            exact,
        },
    })
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// `ρ` of a marked family, with the singleton convention `ρ = 1`.
pub fn rho<L: Borrow<SymbolicLevel>>(levels: &[L], marked: &[MeasureVector]) -> Result<Rational, MeasureError> {
    if marked.len() == 1 {
        Ok(Rational::one())
    } else {
        independence_radius(levels, marked)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DriftReport {
    pub bound: Rational,
    pub drifts: Vec<Rational>,
    pub ok: bool,
}

/// `𝔡(μⁿᵢ, μⁿ⁺¹ᵢ) < λ₀ⁿ⁺¹ ρ(𝒞ₙ)` for every marked cycle of level `n`.
pub fn check_measure_drift<L: Borrow<SymbolicLevel>>(
    levels: &[L],
    gamma_n: &[MeasureVector],
    gamma_next: &[MeasureVector],
    lambda0: &Rational,
) -> Result<DriftReport, MeasureError> {
    let n = gamma_n.first().map_or(0, |m| m.level);
    if gamma_next.len() != gamma_n.len() + 1 {
        return Err(MeasureError::MixedLevels);
    }
    let r = rho(levels, gamma_n)?;
    let mut bound = r;
    for _ in 0..=n {
        bound *= lambda0;
    }
    let drifts: Vec<Rational> =
        gamma_n.iter().zip(gamma_next).map(|(a, b)| metric_d(levels, a, b)).collect();
    let ok = drifts.iter().all(|d| d < &bound);
    Ok(DriftReport { bound, drifts, ok })
}

/// Failure of the cumulative bound: (level n, index i, later level).
pub type CumulativeWitness = (usize, usize, usize);

/// `𝔡(μⁿᵢ, μⁿ⁺ᵏᵢ) < ½ ρ(𝒞ₙ)` for all recorded levels, by direct evaluation.
/// `marked[j]` is the marked family of some level; families are listed by increasing level.
pub fn check_cumulative_drift<L: Borrow<SymbolicLevel>>(
    levels: &[L],
    marked: &[Vec<MeasureVector>],
) -> Result<Result<(), CumulativeWitness>, MeasureError> {
    let half = Rational::new(1.into(), 2.into());
    for (a, fam) in marked.iter().enumerate() {
        if fam.is_empty() {
            continue;
        }
        let bound = &half * rho(levels, fam)?;
        for later in &marked[a + 1..] {
            for (i, mu) in fam.iter().enumerate() {
                let Some(nu) = later.get(i) else { continue };
                if metric_d(levels, mu, nu) >= bound {
                    return Ok(Err((mu.level, i, nu.level)));
                }
            }
        }
    }
    Ok(Ok(()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StableTables {
    pub i_plus: Vec<usize>,
    pub i_minus: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StableFailure {
    /// Clause (a): the window of `C` misses a parent rectangle on one side.
    Coverage { forward: bool, missing: usize },
    /// Clause (b): a parent rectangle contains no child rectangle.
    Empty { parent: usize },
    /// Clause (c): a path from (or to) `C` lands outside the required rectangle.
    Unstable { forward: bool, target: usize, path: Vec<usize> },
}

impl StableFailure {
    pub fn clause(&self) -> char {
        match self {
            StableFailure::Coverage { .. } => 'a',
            StableFailure::Empty { .. } => 'b',
            StableFailure::Unstable { .. } => 'c',
        }
    }
}

/// Stable transitivity through the designated child rectangle `c`.
pub fn check_stable_transitive(
    child: &SymbolicLevel,
    parent: &SymbolicLevel,
    c: usize,
) -> Result<StableTables, StableFailure> {
    let np = parent.len();
    let first_hits = |seq: &mut dyn Iterator<Item = usize>| {
        let mut t = vec![usize::MAX; np];
        for (k, a) in seq.enumerate() {
            if t[a] == usize::MAX {
                t[a] = k + 1;
            }
        }
        t
    };
    let i_plus = first_hits(&mut child.forward(c).iter().copied());
    let i_minus = first_hits(&mut child.backward(c).iter().rev().copied());
    if let Some(a) = (0..np).find(|&a| i_plus[a] == usize::MAX) {
        return Err(StableFailure::Coverage { forward: true, missing: a });
    }
    if let Some(a) = (0..np).find(|&a| i_minus[a] == usize::MAX) {
        return Err(StableFailure::Coverage { forward: false, missing: a });
    }
    let mut has_child = vec![false; np];
    for v in 0..child.len() {
        has_child[child.parent_of[v]] = true;
    }
    if let Some(a) = (0..np).find(|&a| !has_child[a]) {
        return Err(StableFailure::Empty { parent: a });
    }
    sweep(child, c, &i_plus, true)?;
    sweep(child, c, &i_minus, false)?;
    Ok(StableTables { i_plus, i_minus })
}

/// Level sets of paths from (or into) `c`; every rectangle reached after `i₀`
/// steps must read `A` at offset `i(A) - i₀` for each `A` with `i(A) ≥ i₀`.
fn sweep(child: &SymbolicLevel, c: usize, hit: &[usize], forward: bool) -> Result<(), StableFailure> {
    let g = &child.graph;
    let m = child.m();
    let depth = hit.iter().copied().max().unwrap_or(0);
    let mut by_time: Vec<usize> = (0..hit.len()).collect();
    by_time.sort_by_key(|&a| std::cmp::Reverse(hit[a]));
    let mut layers: Vec<Vec<usize>> = vec![vec![c]];
    for i0 in 0..=depth {
        if i0 > 0 {
            let prev = &layers[i0 - 1];
            let mut next = BTreeSet::new();
            for &u in prev {
                let nb = if forward { g.succ(u) } else { g.pred(u) };
                next.extend(nb.iter().copied());
            }
            layers.push(next.into_iter().collect());
        }
        for &w in &layers[i0] {
            let win = child.window(w);
            for &a in &by_time {
                if hit[a] < i0 {
                    break;
                }
                let off = hit[a] - i0;
                let pos = if forward { m + off } else { m - off };
                if win[pos] != a {
                    let path = witness_path(g, &layers, w, forward);
                    return Err(StableFailure::Unstable { forward, target: a, path });
                }
            }
        }
    }
    Ok(())
}

fn witness_path(g: &Digraph, layers: &[Vec<usize>], end: usize, forward: bool) -> Vec<usize> {
    let mut path = vec![end];
    let mut cur = end;
    for j in (0..layers.len() - 1).rev() {
        let back = if forward { g.pred(cur) } else { g.succ(cur) };
        cur = *back.iter().find(|x| layers[j].binary_search(x).is_ok()).expect("layer predecessor");
        path.push(cur);
    }
    if forward {
        path.reverse();
    }
    path
}

/// A cycle inside the tag-A rectangles and one inside the tag-B rectangles.
pub fn check_trapped_cycles(level: &SymbolicLevel) -> Result<(Vec<usize>, Vec<usize>), Tag> {
    let a = trapped_cycle(level, Tag::A).ok_or(Tag::A)?;
    let b = trapped_cycle(level, Tag::B).ok_or(Tag::B)?;
    Ok((a, b))
}

fn trapped_cycle(level: &SymbolicLevel, t: Tag) -> Option<Vec<usize>> {
    let keep: Vec<bool> = (0..level.len()).map(|v| level.tags[v] == Some(t)).collect();
    let (sub, old) = level.graph.induced(&keep);
    let alive = graph::trim_mask(&sub);
    let start = (0..sub.len()).find(|&v| alive[v])?;
    let mut seen: HashMap<usize, usize> = HashMap::new();
    let mut walk = Vec::new();
    let mut cur = start;
    loop {
        if let Some(&i) = seen.get(&cur) {
            return Some(walk[i..].iter().map(|&v| old[v]).collect());
        }
        seen.insert(cur, walk.len());
        walk.push(cur);
        cur = *sub.succ(cur).iter().find(|&&w| alive[w]).expect("trimmed vertex has a successor");
    }
}

/// Witness of a short chain between `A` and `B`: (from, to, length).
pub type SeparationWitness = (usize, usize, usize);

/// No walk of length ≤ `m_len` from `a` reaches `b`, and none from `b` reaches `a`.
pub fn check_nontransitive_separation(
    level: &SymbolicLevel,
    a: usize,
    b: usize,
    m_len: usize,
) -> Result<(), SeparationWitness> {
    if let Some(l) = graph::exists_path_bounded(&level.graph, a, b, m_len) {
        return Err((a, b, l));
    }
    if let Some(l) = graph::exists_path_bounded(&level.graph, b, a, m_len) {
        return Err((b, a, l));
    }
    Ok(())
}

/// Exactly one child rectangle sits in `parent_rect`.
pub fn check_unique_child_in(child: &SymbolicLevel, parent_rect: usize) -> bool {
    child.parent_of.iter().filter(|&&p| p == parent_rect).count() == 1
}

/// The child rectangles inside `parent_rect`.
pub fn children_in(child: &SymbolicLevel, parent_rect: usize) -> Vec<usize> {
    (0..child.len()).filter(|&v| child.parent_of[v] == parent_rect).collect()
}
