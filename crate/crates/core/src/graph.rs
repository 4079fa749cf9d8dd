//! Finite digraphs over sorted string identifiers and the exact algorithms
//! every other module leans on.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::error::GraphError;

/// Default number of simple cycles `simple_cycles` will produce before giving up.
pub const DEFAULT_CYCLE_BUDGET: usize = 1_000_000;

/// Digraph with vertices kept in sorted order; a vertex index is its rank.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Digraph {
    names: Vec<String>,
    out: Vec<Vec<usize>>,
    inn: Vec<Vec<usize>>,
}

impl Digraph {
    pub fn empty() -> Self {
        Digraph { names: vec![], out: vec![], inn: vec![] }
    }

    /// Builds a graph from named vertices and named edges. Duplicate edges collapse.
    pub fn from_named<S: AsRef<str>>(vertices: &[S], edges: &[(S, S)]) -> Result<Self, GraphError> {
        let mut names: Vec<String> = vertices.iter().map(|s| s.as_ref().to_string()).collect();
        names.sort();
        names.dedup();
        let index: HashMap<&str, usize> =
            names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut idx_edges = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            let iu = *index
                .get(u.as_ref())
                .ok_or_else(|| GraphError::UnknownVertex(u.as_ref().to_string()))?;
            let iv = *index
                .get(v.as_ref())
                .ok_or_else(|| GraphError::UnknownVertex(v.as_ref().to_string()))?;
            idx_edges.push((iu, iv));
        }
        Ok(Self::from_sorted_names(names, &idx_edges))
    }

    /// `names` must already be strictly increasing.
    pub fn from_sorted_names(names: Vec<String>, edges: &[(usize, usize)]) -> Self {
        debug_assert!(names.windows(2).all(|w| w[0] < w[1]));
        let n = names.len();
        let mut out = vec![Vec::new(); n];
        let mut inn = vec![Vec::new(); n];
        for &(u, v) in edges {
            out[u].push(v);
            inn[v].push(u);
        }
        for l in out.iter_mut().chain(inn.iter_mut()) {
            l.sort_unstable();
            l.dedup();
        }
        Digraph { names, out, inn }
    }

    /// Complete digraph (self-loops included) on the given names.
    pub fn complete<S: AsRef<str>>(vertices: &[S]) -> Self {
        let mut names: Vec<String> = vertices.iter().map(|s| s.as_ref().to_string()).collect();
        names.sort();
        names.dedup();
        let n = names.len();
        let edges: Vec<(usize, usize)> =
            (0..n).flat_map(|u| (0..n).map(move |v| (u, v))).collect();
        Self::from_sorted_names(names, &edges)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|s| s.as_str().cmp(name)).ok()
    }

    pub fn succ(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    pub fn pred(&self, v: usize) -> &[usize] {
        &self.inn[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.out[u].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// Edges in lexicographic order of (source, target).
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out.iter().enumerate().flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v)))
    }

    /// Subgraph induced by `keep`, plus the old index of each new vertex.
    pub fn induced(&self, keep: &[bool]) -> (Digraph, Vec<usize>) {
        let old: Vec<usize> = (0..self.len()).filter(|&v| keep[v]).collect();
        let mut new_of = vec![usize::MAX; self.len()];
        for (i, &v) in old.iter().enumerate() {
            new_of[v] = i;
        }
        let names = old.iter().map(|&v| self.names[v].clone()).collect();
        let mut edges = Vec::new();
        for &u in &old {
            for &v in &self.out[u] {
                if keep[v] {
                    edges.push((new_of[u], new_of[v]));
                }
            }
        }
        (Digraph::from_sorted_names(names, &edges), old)
    }

    pub fn reversed(&self) -> Digraph {
        Digraph { names: self.names.clone(), out: self.inn.clone(), inn: self.out.clone() }
    }
}

/// Tarjan's algorithm, iterative. Components come out in topological order:
/// if some edge runs from component `i` to component `j != i` then `i < j`.
pub fn strongly_connected_components(g: &Digraph) -> Vec<Vec<usize>> {
    let n = g.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0usize;
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let succ = g.succ(v);
            if *pos < succ.len() {
                let w = succ[*pos];
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    // Tarjan emits sinks first.
    comps.reverse();
    comps
}

pub fn is_strongly_connected(g: &Digraph) -> bool {
    !g.is_empty() && strongly_connected_components(g).len() == 1
}

/// Endpoints of walks of length exactly `k` starting in `start`.
pub fn reachable_in_exactly(g: &Digraph, start: &BTreeSet<usize>, k: usize) -> BTreeSet<usize> {
    let mut cur: Vec<bool> = vec![false; g.len()];
    for &v in start {
        cur[v] = true;
    }
    for _ in 0..k {
        let mut nxt = vec![false; g.len()];
        for u in 0..g.len() {
            if cur[u] {
                for &v in g.succ(u) {
                    nxt[v] = true;
                }
            }
        }
        cur = nxt;
    }
    (0..g.len()).filter(|&v| cur[v]).collect()
}

/// Smallest `1 <= L <= max_len` with a walk of length `L` from `from` to `to`.
pub fn exists_path_bounded(g: &Digraph, from: usize, to: usize, max_len: usize) -> Option<usize> {
    let mut cur = vec![false; g.len()];
    cur[from] = true;
    for len in 1..=max_len {
        let mut nxt = vec![false; g.len()];
        let mut any = false;
        for u in 0..g.len() {
            if cur[u] {
                for &v in g.succ(u) {
                    nxt[v] = true;
                    any = true;
                }
            }
        }
        if nxt[to] {
            return Some(len);
        }
        if !any {
            return None;
        }
        cur = nxt;
    }
    None
}

/// Mask of vertices surviving iterated removal of sources and sinks.
pub fn trim_mask(g: &Digraph) -> Vec<bool> {
    let n = g.len();
    let mut alive = vec![true; n];
    let mut indeg: Vec<usize> = (0..n).map(|v| g.pred(v).len()).collect();
    let mut outdeg: Vec<usize> = (0..n).map(|v| g.succ(v).len()).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0 || outdeg[v] == 0).collect();
    while let Some(v) = queue.pop_front() {
        if !alive[v] {
            continue;
        }
        alive[v] = false;
        for &w in g.succ(v) {
            if alive[w] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        for &w in g.pred(v) {
            if alive[w] {
                outdeg[w] -= 1;
                if outdeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
    }
    alive
}

pub fn trim_bi_infinite(g: &Digraph) -> Digraph {
    g.induced(&trim_mask(g)).0
}

/// Least rotation of a cyclic sequence.
pub fn canonical_rotation(c: &[usize]) -> Vec<usize> {
    let n = c.len();
    let k = least_rotation(c);
    (0..n).map(|i| c[(k + i) % n]).collect()
}

/// Start of the lexicographically least rotation (Booth).
fn least_rotation(c: &[usize]) -> usize {
    let n = c.len();
    if n == 0 {
        return 0;
    }
    let s: Vec<usize> = c.iter().chain(c).copied().collect();
    let mut f = vec![-1i64; s.len()];
    let mut k = 0usize;
    for j in 1..s.len() {
        let sj = s[j];
        let mut i = f[j - k - 1];
        while i != -1 && sj != s[k + i as usize + 1] {
            if sj < s[k + i as usize + 1] {
                k = j - i as usize - 1;
            }
            i = f[i as usize];
        }
        if sj != s[(k as i64 + i + 1) as usize] {
            if sj < s[k] {
                k = j;
            }
            f[j - k] = -1;
        } else {
            f[j - k] = i + 1;
        }
    }
    k
}

/// Graph with every maximal run of in/out-degree-one vertices collapsed.
/// Node `i < branch.len()` is vertex `branch[i]`; node `branch.len() + j`
/// stands for the interior of segment `j`. Cycles made only of degree-one
/// vertices are returned separately.
struct Compressed {
    graph: Digraph,
    branch: Vec<usize>,
    segments: Vec<Vec<usize>>,
    pure: Vec<Vec<usize>>,
}

fn compress(g: &Digraph) -> Compressed {
    let n = g.len();
    let is_branch: Vec<bool> = (0..n).map(|v| g.succ(v).len() != 1 || g.pred(v).len() != 1).collect();
    let branch: Vec<usize> = (0..n).filter(|&v| is_branch[v]).collect();
    let mut node_of = vec![usize::MAX; n];
    for (i, &v) in branch.iter().enumerate() {
        node_of[v] = i;
    }
    let mut seen = is_branch.clone();
    let mut segments = Vec::new();
    let mut arcs = Vec::new();
    for (i, &u) in branch.iter().enumerate() {
        for &w in g.succ(u) {
            let mut interior = Vec::new();
            let mut x = w;
            while !is_branch[x] {
                seen[x] = true;
                interior.push(x);
                x = g.succ(x)[0];
            }
            let sn = branch.len() + segments.len();
            arcs.push((i, sn));
            arcs.push((sn, node_of[x]));
            segments.push(interior);
        }
    }
    let mut pure = Vec::new();
    for v in 0..n {
        if seen[v] {
            continue;
        }
        let mut c = Vec::new();
        let mut x = v;
        while !seen[x] {
            seen[x] = true;
            c.push(x);
            x = g.succ(x)[0];
        }
        pure.push(c);
    }
    let total = branch.len() + segments.len();
    let names: Vec<String> = (0..total).map(|i| format!("{i:012}")).collect();
    Compressed { graph: Digraph::from_sorted_names(names, &arcs), branch, segments, pure }
}

/// Length of a shortest directed cycle, `None` standing for infinity.
/// Dijkstra over the collapsed graph from every branch vertex.
pub fn girth(g: &Digraph) -> Option<usize> {
    let c = compress(g);
    let mut best = c.pure.iter().map(Vec::len).min();
    let nb = c.branch.len();
    let total = c.graph.len();
    let mut dist = vec![usize::MAX; total];
    for s in 0..nb {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        let mut heap = std::collections::BinaryHeap::new();
        dist[s] = 0;
        heap.push(std::cmp::Reverse((0usize, s)));
        while let Some(std::cmp::Reverse((d, u))) = heap.pop() {
            if d > dist[u] || best.is_some_and(|b| d >= b) {
                continue;
            }
            for &x in c.graph.succ(u) {
                let nd = d + if x >= nb { c.segments[x - nb].len() } else { 1 };
                if x == s {
                    best = Some(best.map_or(nd, |b| b.min(nd)));
                } else if nd < dist[x] {
                    dist[x] = nd;
                    heap.push(std::cmp::Reverse((nd, x)));
                }
            }
        }
    }
    best
}

/// Every simple cycle once, as its least rotation, sorted by (length, word).
/// Johnson's algorithm with an explicit stack, run on the collapsed graph.
pub fn simple_cycles(g: &Digraph, budget: usize) -> Result<Vec<Vec<usize>>, GraphError> {
    let c = compress(g);
    let nb = c.branch.len();
    let mut cycles = c.pure.clone();
    if cycles.len() > budget {
        return Err(GraphError::CycleBudget(budget));
    }
    for cyc in johnson(&c.graph, budget - cycles.len())? {
        let mut full = Vec::new();
        for x in cyc {
            if x < nb {
                full.push(c.branch[x]);
            } else {
                full.extend_from_slice(&c.segments[x - nb]);
            }
        }
        cycles.push(full);
    }
    let mut out: Vec<Vec<usize>> = cycles.iter().map(|c| canonical_rotation(c)).collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(out)
}

fn johnson(g: &Digraph, budget: usize) -> Result<Vec<Vec<usize>>, GraphError> {
    let n = g.len();
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    let mut blocked = vec![false; n];
    let mut bset: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut active = vec![true; n];
    for s in 0..n {
        // strongly connected component of s in the subgraph on vertices >= s
        let mut keep = vec![false; n];
        keep[s..].copy_from_slice(&active[s..]);
        let (sub, old) = g.induced(&keep);
        let comps = strongly_connected_components(&sub);
        let s_new = old.iter().position(|&v| v == s).unwrap();
        let comp = comps.into_iter().find(|c| c.contains(&s_new)).unwrap();
        let mut in_comp = vec![false; n];
        for &v in &comp {
            in_comp[old[v]] = true;
        }
        active[s] = false;
        if comp.len() == 1 && !g.has_edge(s, s) {
            continue;
        }
        for &v in &comp {
            blocked[old[v]] = false;
            bset[old[v]].clear();
        }
        let mut path = vec![s];
        blocked[s] = true;
        // (vertex, next successor position, found-a-cycle flag)
        let mut stack: Vec<(usize, usize, bool)> = vec![(s, 0, false)];
        while let Some(&(v, start_pos, _)) = stack.last() {
            let succ = g.succ(v);
            let mut pos = start_pos;
            let mut found_here = false;
            let mut advanced = None;
            while pos < succ.len() {
                let w = succ[pos];
                pos += 1;
                if !in_comp[w] {
                    continue;
                }
                if w == s {
                    cycles.push(path.clone());
                    if cycles.len() > budget {
                        return Err(GraphError::CycleBudget(budget));
                    }
                    found_here = true;
                } else if !blocked[w] {
                    advanced = Some(w);
                    break;
                }
            }
            {
                let top = stack.last_mut().unwrap();
                top.1 = pos;
                top.2 |= found_here;
            }
            if let Some(w) = advanced {
                path.push(w);
                blocked[w] = true;
                stack.push((w, 0, false));
                continue;
            }
            let (v, _, found) = stack.pop().unwrap();
            if found {
                unblock(v, &mut blocked, &mut bset);
            } else {
                for &w in g.succ(v) {
                    if in_comp[w] {
                        bset[w].insert(v);
                    }
                }
            }
            path.pop();
            if let Some(top) = stack.last_mut() {
                top.2 |= found;
            }
        }
    }
    Ok(cycles)
}

fn unblock(v: usize, blocked: &mut [bool], bset: &mut [BTreeSet<usize>]) {
    let mut work = vec![v];
    while let Some(u) = work.pop() {
        if !blocked[u] {
            continue;
        }
        blocked[u] = false;
        let list: Vec<usize> = std::mem::take(&mut bset[u]).into_iter().collect();
        for w in list {
            if blocked[w] {
                work.push(w);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(vs: &[&str], es: &[(&str, &str)]) -> Digraph {
        Digraph::from_named(vs, es).unwrap()
    }

    fn named(g: &Digraph, vs: &[Vec<usize>]) -> Vec<Vec<String>> {
        vs.iter().map(|c| c.iter().map(|&v| g.name(v).to_string()).collect()).collect()
    }

    #[test]
    fn scc_order() {
        assert!(strongly_connected_components(&Digraph::empty()).is_empty());
        let full = Digraph::complete(&["a", "b"]);
        assert_eq!(strongly_connected_components(&full), vec![vec![0, 1]]);
        let ab = g(&["a", "b"], &[("a", "b")]);
        assert_eq!(strongly_connected_components(&ab), vec![vec![0], vec![1]]);
        let ba = g(&["a", "b"], &[("b", "a")]);
        assert_eq!(strongly_connected_components(&ba), vec![vec![1], vec![0]]);
    }

    #[test]
    fn girth_cases() {
        assert_eq!(girth(&Digraph::complete(&["a", "b"])), Some(1));
        assert_eq!(girth(&g(&["a", "b"], &[("a", "b"), ("b", "a")])), Some(2));
        assert_eq!(girth(&g(&["a", "b", "c"], &[("a", "b"), ("b", "c")])), None);
    }

    #[test]
    fn bounded_paths() {
        let p = g(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        assert_eq!(exists_path_bounded(&p, 0, 2, 1), None);
        assert_eq!(exists_path_bounded(&p, 0, 2, 5), Some(2));
        let s: BTreeSet<usize> = [0].into();
        assert_eq!(reachable_in_exactly(&p, &s, 2), [2].into());
        assert_eq!(reachable_in_exactly(&p, &s, 0), s);
        let loopy = g(&["v"], &[("v", "v")]);
        assert_eq!(exists_path_bounded(&loopy, 0, 0, 3), Some(1));
    }

    #[test]
    fn trimming() {
        let t = trim_bi_infinite(&g(&["a", "b", "c"], &[("a", "b"), ("b", "a"), ("c", "a")]));
        assert_eq!(t.names(), &["a".to_string(), "b".to_string()]);
        assert!(trim_bi_infinite(&g(&["a", "b", "c"], &[("a", "b"), ("b", "c")])).is_empty());
    }

    #[test]
    fn cycles_of_full_pair() {
        let full = Digraph::complete(&["a", "b"]);
        let cs = simple_cycles(&full, DEFAULT_CYCLE_BUDGET).unwrap();
        assert_eq!(named(&full, &cs), vec![vec!["a"], vec!["b"], vec!["a", "b"]]);
        assert!(simple_cycles(&g(&["a", "b"], &[("a", "b")]), 10).unwrap().is_empty());
        let k4 = Digraph::complete(&["a", "b", "c", "d"]);
        assert!(matches!(simple_cycles(&k4, 5), Err(GraphError::CycleBudget(5))));
    }
}
