//! One filtrating Markov partition level: a digraph of rectangles, each
//! carrying an itinerary window into the parent level. Circuits, window
//! refinement, sub-partitions, matching and bridge search live here too.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use num_traits::One;
use sha2::{Digest, Sha256};

use crate::error::LevelError;
use crate::graph::{self, Digraph};
use crate::intern;
use crate::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    A,
    B,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::A => write!(f, "A"),
            Tag::B => write!(f, "B"),
        }
    }
}

/// Windows of a refined level, stored as slices of a few long sequences over
/// parent rectangles. Window `v` is `seqs[s][o..o + m + n + 1]` for `loc[v] = (s, o)`;
/// its base (the parent rectangle containing `v`) sits at offset `m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowStore {
    pub m: usize,
    pub n: usize,
    pub seqs: Vec<Vec<usize>>,
    /// Child vertex read at every window start of every sequence;
    /// `usize::MAX` where the vertex was removed by a restriction.
    pub positions: Vec<Vec<usize>>,
    pub loc: Vec<(usize, usize)>,
    /// Leading sequences that are periodic lifts of circuit cycles.
    pub cycle_seqs: usize,
}

impl WindowStore {
    pub fn width(&self) -> usize {
        self.m + self.n + 1
    }

    pub fn window(&self, v: usize) -> &[usize] {
        let (s, o) = self.loc[v];
        &self.seqs[s][o..o + self.width()]
    }

    /// One sequence per window, for hand-built levels.
    pub fn explicit(m: usize, n: usize, words: Vec<Vec<usize>>) -> Self {
        let k = words.len();
        WindowStore {
            m,
            n,
            seqs: words,
            positions: (0..k).map(|i| vec![i]).collect(),
            loc: (0..k).map(|i| (i, 0)).collect(),
            cycle_seqs: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicLevel {
    pub index: usize,
    pub graph: Digraph,
    /// Declared parent rectangle of every vertex (empty at the root).
    pub parent_of: Vec<usize>,
    pub windows: Option<WindowStore>,
    pub diam: Rational,
    pub tags: Vec<Option<Tag>>,
}

impl SymbolicLevel {
    pub fn root(graph: Digraph) -> Self {
        let n = graph.len();
        SymbolicLevel {
            index: 0,
            graph,
            parent_of: vec![],
            windows: None,
            diam: Rational::one(),
            tags: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn m(&self) -> usize {
        self.windows.as_ref().map_or(0, |w| w.m)
    }

    pub fn n(&self) -> usize {
        self.windows.as_ref().map_or(0, |w| w.n)
    }

    pub fn window(&self, v: usize) -> &[usize] {
        self.windows.as_ref().expect("root level has no windows").window(v)
    }

    /// Parent rectangle read from the window.
    pub fn base(&self, v: usize) -> usize {
        let w = self.windows.as_ref().expect("root level has no windows");
        w.window(v)[w.m]
    }

    /// Forward part `window(v)[1..=n]`.
    pub fn forward(&self, v: usize) -> &[usize] {
        let m = self.m();
        &self.window(v)[m + 1..]
    }

    /// Backward part `window(v)[-m..=-1]`, nearest symbol last.
    pub fn backward(&self, v: usize) -> &[usize] {
        let m = self.m();
        &self.window(v)[..m]
    }

    pub fn with_tag(&self, t: Tag) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.tags[v] == Some(t)).collect()
    }

    pub fn set_tags(&mut self, tag_of: &[(&str, Tag)]) -> Result<(), LevelError> {
        for (name, t) in tag_of {
            let v = self
                .graph
                .index_of(name)
                .ok_or_else(|| LevelError::UnknownRectangle(name.to_string()))?;
            self.tags[v] = Some(*t);
        }
        Ok(())
    }

    /// Digest of the vertex list; seeds hashed identifiers of child levels.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.index as u64).to_le_bytes());
        for name in self.graph.names() {
            h.update(name.as_bytes());
            h.update(b"\n");
        }
        h.finalize().into()
    }

    pub fn window_words(&self, parent: &SymbolicLevel) -> Vec<Vec<String>> {
        (0..self.len())
            .map(|v| self.window(v).iter().map(|&a| parent.graph.name(a).to_string()).collect())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    Nesting { v: usize, declared: usize, base: usize },
    WindowLength { v: usize },
    WindowConsistency { v: usize, offset: usize },
    Overlap { u: usize, v: usize },
    DuplicateWindow { u: usize, v: usize },
    Diameter,
    Trim { v: usize },
    MissingParent,
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Nesting { .. } => "nesting",
            Violation::WindowLength { .. } => "window-length",
            Violation::WindowConsistency { .. } => "window",
            Violation::Overlap { .. } => "overlap",
            Violation::DuplicateWindow { .. } => "duplicate-window",
            Violation::Diameter => "diameter",
            Violation::Trim { .. } => "trim",
            Violation::MissingParent => "parent",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Nesting { v, declared, base } => {
                write!(f, "nesting: vertex {v} declares parent {declared} but window base is {base}")
            }
            Violation::WindowLength { v } => write!(f, "window-length: vertex {v}"),
            Violation::WindowConsistency { v, offset } => {
                write!(f, "window: vertex {v} has a non-edge at offset {offset}")
            }
            Violation::Overlap { u, v } => write!(f, "overlap: edge {u}->{v} windows do not overlap"),
            Violation::DuplicateWindow { u, v } => {
                write!(f, "duplicate-window: vertices {u} and {v} share a window")
            }
            Violation::Diameter => write!(f, "diameter: bound violated"),
            Violation::Trim { v } => write!(f, "trim: vertex {v} has no predecessor or successor"),
            Violation::MissingParent => write!(f, "parent: windowed level checked without parent"),
        }
    }
}

/// Every violated level invariant, with a witness. `gamma` is the shrink factor.
pub fn validate_level(
    level: &SymbolicLevel,
    parent: Option<&SymbolicLevel>,
    gamma: &Rational,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let g = &level.graph;
    for v in 0..g.len() {
        if g.succ(v).is_empty() || g.pred(v).is_empty() {
            out.push(Violation::Trim { v });
        }
    }
    let mut bound = Rational::one();
    for _ in 0..level.index {
        bound *= gamma;
    }
    if level.diam > bound {
        out.push(Violation::Diameter);
    }
    let Some(ws) = level.windows.as_ref() else {
        return out;
    };
    let Some(parent) = parent else {
        out.push(Violation::MissingParent);
        return out;
    };
    if level.diam >= parent.diam {
        out.push(Violation::Diameter);
    }
    let w = ws.width();
    let pg = &parent.graph;
    let mut seen: HashMap<&[usize], usize> = HashMap::new();
    for v in 0..g.len() {
        let (s, o) = ws.loc[v];
        if o + w > ws.seqs[s].len() {
            out.push(Violation::WindowLength { v });
            continue;
        }
        let win = ws.window(v);
        if win.iter().any(|&a| a >= pg.len()) {
            out.push(Violation::WindowLength { v });
            continue;
        }
        if level.parent_of.get(v) != Some(&win[ws.m]) {
            out.push(Violation::Nesting {
                v,
                declared: level.parent_of.get(v).copied().unwrap_or(usize::MAX),
                base: win[ws.m],
            });
        }
        if let Some(&u) = seen.get(win) {
            out.push(Violation::DuplicateWindow { u, v });
        } else {
            seen.insert(win, v);
        }
    }
    // Consistency is checked along the stored sequences; every symbol of a
    // sequence lies inside some window, so this covers all windows.
    let mut bad_seq_pair: HashMap<usize, usize> = HashMap::new();
    for (s, seq) in ws.seqs.iter().enumerate() {
        for i in 0..seq.len().saturating_sub(1) {
            if seq[i] >= pg.len() || seq[i + 1] >= pg.len() {
                continue;
            }
            if !pg.has_edge(seq[i], seq[i + 1]) {
                bad_seq_pair.entry(s).or_insert(i);
            }
        }
    }
    if !bad_seq_pair.is_empty() {
        for v in 0..g.len() {
            let (s, o) = ws.loc[v];
            if let Some(&i) = bad_seq_pair.get(&s) {
                if i >= o && i + 1 < o + w {
                    out.push(Violation::WindowConsistency { v, offset: i - o });
                }
            }
        }
    }
    for (u, v) in g.edges() {
        if out.iter().any(|x| matches!(x, Violation::WindowLength { v: z } if *z == u || *z == v)) {
            continue;
        }
        if ws.window(u)[1..] != ws.window(v)[..w - 1] {
            out.push(Violation::Overlap { u, v });
        }
    }
    out.sort();
    out
}

/// No walk leaves `f` and comes back. On failure, a shortest such walk.
pub fn is_filtrating_interval(ambient: &Digraph, f: &BTreeSet<usize>) -> Result<(), Vec<usize>> {
    let n = ambient.len();
    let inside: Vec<bool> = (0..n).map(|v| f.contains(&v)).collect();
    let mut prev = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for &u in f {
        for &x in ambient.succ(u) {
            if !inside[x] && prev[x] == usize::MAX {
                prev[x] = u;
                queue.push_back(x);
            }
        }
    }
    while let Some(x) = queue.pop_front() {
        for &y in ambient.succ(x) {
            if inside[y] {
                let mut walk = vec![y, x];
                let mut cur = x;
                while !inside[prev[cur]] {
                    cur = prev[cur];
                    walk.push(cur);
                }
                walk.push(prev[cur]);
                walk.reverse();
                return Err(walk);
            }
            if prev[y] == usize::MAX {
                prev[y] = x;
                queue.push_back(y);
            }
        }
    }
    Ok(())
}

/// A path leaving `cycles[from]` at `from_phase` and joining `cycles[to]` at `to_phase`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Bridge {
    pub from: usize,
    pub from_phase: usize,
    pub path: Vec<usize>,
    pub to: usize,
    pub to_phase: usize,
}

impl Bridge {
    pub fn len(&self) -> usize {
        self.path.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.path.len() < 2
    }
}

/// Closed walks plus bridges between them. Cycles are primitive closed walks;
/// they may revisit vertices and may share vertices with each other.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Circuit {
    pub cycles: Vec<Vec<usize>>,
    pub bridges: Vec<Bridge>,
}

pub fn is_primitive(c: &[usize]) -> bool {
    minimal_period(c) == c.len()
}

/// Smallest `p` dividing `c.len()` with `c` invariant under rotation by `p`.
pub fn minimal_period(c: &[usize]) -> usize {
    let l = c.len();
    (1..=l)
        .find(|&p| l.is_multiple_of(p) && (0..l).all(|i| c[i] == c[(i + p) % l]))
        .unwrap_or(l)
}

impl Circuit {
    pub fn validate(&self, g: &Digraph) -> Result<(), LevelError> {
        if self.cycles.is_empty() {
            return Err(LevelError::BadCircuit("no cycles".into()));
        }
        for (i, c) in self.cycles.iter().enumerate() {
            if c.is_empty() || c.iter().any(|&v| v >= g.len()) {
                return Err(LevelError::BadCircuit(format!("cycle {i} is empty or out of range")));
            }
            for k in 0..c.len() {
                if !g.has_edge(c[k], c[(k + 1) % c.len()]) {
                    return Err(LevelError::BadCircuit(format!("cycle {i} uses a non-edge")));
                }
            }
            if !is_primitive(c) {
                return Err(LevelError::BadCircuit(format!("cycle {i} is a proper power")));
            }
        }
        for (j, b) in self.bridges.iter().enumerate() {
            let bad = |s: &str| LevelError::BadCircuit(format!("bridge {j}: {s}"));
            if b.from >= self.cycles.len() || b.to >= self.cycles.len() {
                return Err(bad("unknown cycle"));
            }
            let c = &self.cycles[b.from];
            let d = &self.cycles[b.to];
            if b.path.len() < 2 || b.from_phase >= c.len() || b.to_phase >= d.len() {
                return Err(bad("too short or phase out of range"));
            }
            if b.path[0] != c[b.from_phase] || *b.path.last().unwrap() != d[b.to_phase] {
                return Err(bad("endpoints not anchored"));
            }
            if b.path[1] == c[(b.from_phase + 1) % c.len()] {
                return Err(bad("does not leave its source cycle"));
            }
            for k in 0..b.path.len() - 1 {
                if !g.has_edge(b.path[k], b.path[k + 1]) {
                    return Err(bad("uses a non-edge"));
                }
            }
        }
        let names: Vec<String> = (0..self.cycles.len()).map(|i| format!("{i:08}")).collect();
        let arcs: Vec<(usize, usize)> = self.bridges.iter().map(|b| (b.from, b.to)).collect();
        let q = Digraph::from_sorted_names(names, &arcs);
        if self.cycles.len() > 1 && !graph::is_strongly_connected(&q) {
            return Err(LevelError::BadCircuit("quotient is not strongly connected".into()));
        }
        Ok(())
    }

    /// Symbol `s(t)` of the homoclinic/heteroclinic sequence of bridge `j`,
    /// with `s(0)` the departure point and `s(len)` the arrival point.
    pub fn bridge_symbol(&self, j: usize, t: i64) -> usize {
        let b = &self.bridges[j];
        let l = b.len() as i64;
        if t <= 0 {
            let c = &self.cycles[b.from];
            c[(b.from_phase as i64 + t).rem_euclid(c.len() as i64) as usize]
        } else if t <= l {
            b.path[t as usize]
        } else {
            let d = &self.cycles[b.to];
            d[(b.to_phase as i64 + t - l).rem_euclid(d.len() as i64) as usize]
        }
    }

    /// Language sequences cut so that every window of width `w` appears, and
    /// the number of window starts in each. Cycle `i` comes first with its
    /// window at start `φ` based at phase `φ` (given base offset `m`).
    pub fn language(&self, m: usize, n: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
        let w = m + n + 1;
        let mut seqs = Vec::new();
        let mut starts = Vec::new();
        for c in &self.cycles {
            let l = c.len();
            let shift = l - m % l;
            seqs.push((0..l + w - 1).map(|j| c[(j + shift) % l]).collect());
            starts.push(l);
        }
        for (j, b) in self.bridges.iter().enumerate() {
            let len = b.len() as i64;
            let lo = -(w as i64 - 1);
            let hi = len + w as i64 - 1;
            seqs.push((lo..=hi).map(|t| self.bridge_symbol(j, t)).collect());
            starts.push(b.len() + w);
        }
        (seqs, starts)
    }
}

/// All distinct length-(m+n+1) factors of the circuit language.
pub fn circuit_windows(k: &Circuit, m: usize, n: usize) -> BTreeSet<Vec<usize>> {
    let (seqs, starts) = k.language(m, n);
    let w = m + n + 1;
    let mut out = BTreeSet::new();
    for (s, &st) in seqs.iter().zip(&starts) {
        for o in 0..st {
            out.insert(s[o..o + w].to_vec());
        }
    }
    out
}

/// Identifier of a refined rectangle: the window word, or a hash of it when long.
fn window_id(parent: &SymbolicLevel, parent_digest: &[u8; 32], win: &[usize], key: (u64, u64)) -> String {
    const MAX_RENDERED: usize = 64;
    let mut s = String::new();
    for (i, &a) in win.iter().enumerate() {
        if i > 0 {
            s.push('.');
        }
        let name = parent.graph.name(a);
        if name.contains('.') {
            s.push('(');
            s.push_str(name);
            s.push(')');
        } else {
            s.push_str(name);
        }
        if s.len() > MAX_RENDERED {
            break;
        }
    }
    if s.len() <= MAX_RENDERED {
        return s;
    }
    let mut h = Sha256::new();
    h.update(parent_digest);
    h.update((win.len() as u64).to_le_bytes());
    h.update(key.0.to_le_bytes());
    h.update(key.1.to_le_bytes());
    let d = h.finalize();
    format!("#{}", hex::encode(&d[..8]))
}

/// The `(m, n)`-refinement of `level` along circuit `k`.
pub fn refine_on_circuit(
    level: &SymbolicLevel,
    k: &Circuit,
    m: usize,
    n: usize,
    gamma: &Rational,
) -> Result<SymbolicLevel, LevelError> {
    if m + n == 0 {
        return Err(LevelError::NoRefinement);
    }
    k.validate(&level.graph)?;
    let w = m + n + 1;
    let (seqs, starts) = k.language(m, n);
    let interned = intern::intern(&seqs, &starts, w);
    let count = interned.first.len();
    let digest = level.digest();
    let ids: Vec<String> = interned
        .first
        .iter()
        .zip(&interned.keys)
        .map(|(&(s, o), &key)| window_id(level, &digest, &seqs[s][o..o + w], key))
        .collect();
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    let mut rank = vec![0usize; count];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }
    let names: Vec<String> = order.iter().map(|&v| ids[v].clone()).collect();
    let positions: Vec<Vec<usize>> =
        interned.positions.iter().map(|p| p.iter().map(|&v| rank[v]).collect()).collect();
    let mut edges = Vec::new();
    for (i, pos) in positions.iter().enumerate() {
        for o in 0..pos.len().saturating_sub(1) {
            edges.push((pos[o], pos[o + 1]));
        }
        if i < k.cycles.len() {
            edges.push((pos[pos.len() - 1], pos[0]));
        }
    }
    let graph = Digraph::from_sorted_names(names, &edges);
    let loc: Vec<(usize, usize)> = order.iter().map(|&v| interned.first[v]).collect();
    let store = WindowStore { m, n, seqs, positions, loc, cycle_seqs: k.cycles.len() };
    let parent_of: Vec<usize> = (0..count).map(|v| store.window(v)[m]).collect();
    let tags = parent_of.iter().map(|&a| level.tags[a]).collect();
    Ok(SymbolicLevel {
        index: level.index + 1,
        graph,
        parent_of,
        windows: Some(store),
        diam: &level.diam * gamma,
        tags,
    })
}

/// The circuit `k` read on its refinement `child`: lifted cycles and the ears
/// carved out by the bridges. Requires `child` to come from `refine_on_circuit(_, k, ..)`.
pub fn lift_circuit(k: &Circuit, child: &SymbolicLevel) -> Result<Circuit, LevelError> {
    let ws = child.windows.as_ref().ok_or(LevelError::NotRefined)?;
    if ws.cycle_seqs != k.cycles.len() || ws.positions.len() != k.cycles.len() + k.bridges.len() {
        return Err(LevelError::NotRefined);
    }
    let (m, n) = (ws.m, ws.n);
    let mut cycles = Vec::new();
    for i in 0..k.cycles.len() {
        let pos = &ws.positions[i];
        if pos.contains(&usize::MAX) {
            return Err(LevelError::NotRefined);
        }
        let p = minimal_period(pos);
        cycles.push(pos[..p].to_vec());
    }
    let mut bridges = Vec::new();
    for (j, b) in k.bridges.iter().enumerate() {
        let path = ws.positions[k.cycles.len() + j].clone();
        if path.contains(&usize::MAX) {
            return Err(LevelError::NotRefined);
        }
        let lf = cycles[b.from].len() as i64;
        let lt = cycles[b.to].len() as i64;
        bridges.push(Bridge {
            from: b.from,
            from_phase: (b.from_phase as i64 - n as i64).rem_euclid(lf) as usize,
            path,
            to: b.to,
            to_phase: ((b.to_phase + m) as i64).rem_euclid(lt) as usize,
        });
    }
    let lifted = Circuit { cycles, bridges };
    lifted.validate(&child.graph)?;
    Ok(lifted)
}

/// Sub-partition on `s`, trimmed. Windows, diameters and tags are inherited.
pub fn restrict_to(level: &SymbolicLevel, s: &BTreeSet<usize>) -> Result<SymbolicLevel, LevelError> {
    if s.is_empty() {
        return Err(LevelError::EmptyRestriction);
    }
    let keep0: Vec<bool> = (0..level.len()).map(|v| s.contains(&v)).collect();
    let (sub, old) = level.graph.induced(&keep0);
    let mask = graph::trim_mask(&sub);
    let keep: Vec<bool> = {
        let mut k = vec![false; level.len()];
        for (i, &o) in old.iter().enumerate() {
            k[o] = mask[i];
        }
        k
    };
    if !keep.iter().any(|&b| b) {
        return Err(LevelError::EmptyRestriction);
    }
    let (graph, kept) = level.graph.induced(&keep);
    let mut new_of = vec![usize::MAX; level.len()];
    for (i, &o) in kept.iter().enumerate() {
        new_of[o] = i;
    }
    let windows = level.windows.as_ref().map(|ws| WindowStore {
        m: ws.m,
        n: ws.n,
        seqs: ws.seqs.clone(),
        positions: ws
            .positions
            .iter()
            .map(|p| p.iter().map(|&v| if v == usize::MAX { v } else { new_of[v] }).collect())
            .collect(),
        loc: kept.iter().map(|&o| ws.loc[o]).collect(),
        cycle_seqs: ws.cycle_seqs,
    });
    Ok(SymbolicLevel {
        index: level.index,
        graph,
        parent_of: if level.parent_of.is_empty() {
            vec![]
        } else {
            kept.iter().map(|&o| level.parent_of[o]).collect()
        },
        windows,
        diam: level.diam.clone(),
        tags: kept.iter().map(|&o| level.tags[o]).collect(),
    })
}

/// Whether `coarse` rectangle `c` contains `fine` rectangle `f`; both levels
/// refine the same parent and `fine` has at least the window depths of `coarse`.
fn contains(coarse: &SymbolicLevel, c: usize, fine: &SymbolicLevel, f: usize) -> bool {
    match (&coarse.windows, &fine.windows) {
        (None, None) => coarse.graph.name(c) == fine.graph.name(f),
        (Some(cw), Some(fw)) => {
            if fw.m < cw.m || fw.n < cw.n {
                return false;
            }
            let d = fw.m - cw.m;
            &fw.window(f)[d..d + cw.width()] == cw.window(c)
        }
        _ => false,
    }
}

/// Every coarse rectangle contains exactly one fine rectangle.
pub fn is_matching(fine: &SymbolicLevel, coarse: &SymbolicLevel) -> bool {
    let mut count = vec![0usize; coarse.len()];
    let index: HashMap<&[usize], usize> = match &coarse.windows {
        Some(cw) => (0..coarse.len()).map(|c| (cw.window(c), c)).collect(),
        None => HashMap::new(),
    };
    for f in 0..fine.len() {
        match (&coarse.windows, &fine.windows) {
            (Some(cw), Some(fw)) if fw.m >= cw.m && fw.n >= cw.n => {
                let d = fw.m - cw.m;
                if let Some(&c) = index.get(&fw.window(f)[d..d + cw.width()]) {
                    count[c] += 1;
                }
            }
            _ => {
                for (c, slot) in count.iter_mut().enumerate() {
                    if contains(coarse, c, fine, f) {
                        *slot += 1;
                    }
                }
            }
        }
    }
    count.iter().all(|&c| c == 1)
}

/// The `k`-fold repetition of `cycle`: a child cycle of length `k·|cycle|`
/// whose rectangles all project along `cycle`. Windows are the bases alone,
/// so phases `L` apart are never told apart (the adding-machine level).
pub fn repetition_level(parent: &SymbolicLevel, cycle: &[usize], k: usize) -> SymbolicLevel {
    let len = cycle.len() * k;
    let names: Vec<String> = (0..len).map(|i| format!("r{i:08}")).collect();
    let edges: Vec<(usize, usize)> = (0..len).map(|i| (i, (i + 1) % len)).collect();
    let words: Vec<Vec<usize>> = (0..len).map(|i| vec![cycle[i % cycle.len()]]).collect();
    let parent_of: Vec<usize> = words.iter().map(|w| w[0]).collect();
    SymbolicLevel {
        index: parent.index + 1,
        graph: Digraph::from_sorted_names(names, &edges),
        tags: parent_of.iter().map(|&a| parent.tags[a]).collect(),
        parent_of,
        windows: Some(WindowStore::explicit(0, 0, words)),
        diam: &parent.diam / Rational::from_integer(2.into()),
    }
}

/// One step of a derived-cycle pattern: go round `cycle` `reps` times, then
/// (if given) advance to the departure phase of `bridge` and take it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatternStep {
    pub cycle: usize,
    pub reps: usize,
    pub bridge: Option<usize>,
}

/// Closed walk in the host of `k` spelled by `pattern`. Each block starts at
/// the arrival phase of the previous bridge (phase 0 if there is none).
pub fn pattern_walk(k: &Circuit, pattern: &[PatternStep]) -> Result<Vec<usize>, LevelError> {
    let bad = |s: &str| LevelError::Inadmissible(s.to_string());
    if pattern.is_empty() {
        return Err(bad("empty pattern"));
    }
    let last = pattern.last().unwrap();
    let (mut cur, mut phase) = match last.bridge {
        Some(j) => {
            let b = k.bridges.get(j).ok_or_else(|| bad("unknown bridge"))?;
            (b.to, b.to_phase)
        }
        None => {
            if pattern.len() > 1 {
                return Err(bad("only the last step may omit its bridge, and then only alone"));
            }
            (last.cycle, 0)
        }
    };
    let (start_cycle, start_phase) = (cur, phase);
    let mut walk = Vec::new();
    for (i, st) in pattern.iter().enumerate() {
        if st.cycle != cur || st.cycle >= k.cycles.len() {
            return Err(bad(&format!("step {i} does not continue on cycle {cur}")));
        }
        let c = &k.cycles[cur];
        let l = c.len();
        for t in 0..st.reps * l {
            walk.push(c[(phase + t) % l]);
        }
        match st.bridge {
            Some(j) => {
                if i + 1 < pattern.len() && pattern[i + 1].bridge.is_none() {
                    return Err(bad("only the last step may omit its bridge"));
                }
                let b = k.bridges.get(j).ok_or_else(|| bad("unknown bridge"))?;
                if b.from != cur {
                    return Err(bad(&format!("bridge {j} does not leave cycle {cur}")));
                }
                let d = (b.from_phase + l - phase) % l;
                for t in 0..d {
                    walk.push(c[(phase + t) % l]);
                }
                walk.extend_from_slice(&b.path[..b.path.len() - 1]);
                cur = b.to;
                phase = b.to_phase;
            }
            None => {
                if st.reps == 0 {
                    return Err(bad("empty walk"));
                }
            }
        }
    }
    if (cur, phase) != (start_cycle, start_phase) || walk.is_empty() {
        return Err(bad("pattern does not close up"));
    }
    if !is_primitive(&walk) {
        return Err(bad("pattern walk is a proper power"));
    }
    Ok(walk)
}

/// A long periodic orbit spelled by a pattern, with its window at every phase.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivedCycle {
    pub walk: Vec<usize>,
    pub windows: Vec<Vec<usize>>,
}

/// Derived long cycle read through `(m, n)` windows. The windows must be at
/// least as long as the period so that every window sees the whole pattern.
pub fn derive_long_cycle(
    k: &Circuit,
    pattern: &[PatternStep],
    m: usize,
    n: usize,
) -> Result<DerivedCycle, LevelError> {
    let walk = pattern_walk(k, pattern)?;
    let p = walk.len();
    if m + n + 1 < p {
        return Err(LevelError::WindowTooShallow { width: m + n + 1, period: p });
    }
    let windows = (0..p)
        .map(|phi| (0..m + n + 1).map(|j| walk[(phi + p * (m + 1) + j - m) % p]).collect())
        .collect();
    Ok(DerivedCycle { walk, windows })
}

/// Result of a bridge search: the path and every admissible anchoring phase.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoundBridge {
    pub path: Vec<usize>,
    pub from_phases: Vec<usize>,
    pub to_phases: Vec<usize>,
}

/// Largest `must_visit` handled by the subset search.
pub const MAX_MUST_VISIT: usize = 16;

/// Shortest path leaving `from_cycle` (at a step that departs from the cycle),
/// visiting all of `must_visit`, avoiding `must_avoid`, and ending on
/// `to_cycle`; lexicographically least among shortest.
pub fn find_bridge(
    g: &Digraph,
    from_cycle: &[usize],
    to_cycle: &[usize],
    must_visit: &BTreeSet<usize>,
    must_avoid: &BTreeSet<usize>,
) -> Result<Option<FoundBridge>, LevelError> {
    if must_visit.len() > MAX_MUST_VISIT {
        return Err(LevelError::TooManyVisits(must_visit.len()));
    }
    if must_visit.intersection(must_avoid).next().is_some() {
        return Err(LevelError::VisitAvoidOverlap);
    }
    let n = g.len();
    let vis: Vec<usize> = must_visit.iter().copied().collect();
    let bit = |v: usize| vis.iter().position(|&x| x == v).map_or(0u32, |i| 1u32 << i);
    let full: u32 = if vis.is_empty() { 0 } else { (1u32 << vis.len()) - 1 };
    let nstates = n << vis.len();
    let sid = |v: usize, mask: u32| ((mask as usize) * n) + v;
    let avoid: Vec<bool> = (0..n).map(|v| must_avoid.contains(&v)).collect();
    let on_target: Vec<bool> = {
        let mut t = vec![false; n];
        for &v in to_cycle {
            t[v] = true;
        }
        t
    };
    // Backward distances to a goal state.
    let mut dtg = vec![usize::MAX; nstates];
    let mut queue = VecDeque::new();
    for v in 0..n {
        if on_target[v] && !avoid[v] {
            let s = sid(v, full);
            dtg[s] = 0;
            queue.push_back((v, full));
        }
    }
    while let Some((v, mask)) = queue.pop_front() {
        let d = dtg[sid(v, mask)];
        for &u in g.pred(v) {
            if avoid[u] {
                continue;
            }
            // predecessor state (u, pm) with pm | bit(v) == mask and bit(u) ⊆ pm
            let bv = bit(v);
            if mask & bv == 0 && bv != 0 {
                continue;
            }
            let candidates: Vec<u32> = if bv == 0 { vec![mask] } else { vec![mask, mask & !bv] };
            for pm in candidates {
                let bu = bit(u);
                if pm & bu != bu {
                    continue;
                }
                let s = sid(u, pm);
                if dtg[s] == usize::MAX {
                    dtg[s] = d + 1;
                    queue.push_back((u, pm));
                }
            }
        }
    }
    // Best first step.
    let lf = from_cycle.len();
    let mut best: Option<usize> = None;
    for p in 0..lf {
        let v = from_cycle[p];
        if avoid[v] {
            continue;
        }
        let nxt = from_cycle[(p + 1) % lf];
        for &u in g.succ(v) {
            if u == nxt || avoid[u] {
                continue;
            }
            let mask = bit(v) | bit(u);
            let d = dtg[sid(u, mask)];
            if d != usize::MAX {
                best = Some(best.map_or(d + 1, |b| b.min(d + 1)));
            }
        }
    }
    let Some(total) = best else {
        return Ok(None);
    };
    // Lexicographically least path of that length.
    let mut start: Option<usize> = None;
    for p in 0..lf {
        let v = from_cycle[p];
        if avoid[v] {
            continue;
        }
        let nxt = from_cycle[(p + 1) % lf];
        let ok = g.succ(v).iter().any(|&u| {
            u != nxt && !avoid[u] && dtg[sid(u, bit(v) | bit(u))] == total - 1
        });
        if ok && start.is_none_or(|s| v < s) {
            start = Some(v);
        }
    }
    let v0 = start.expect("a start exists");
    let from_phases: Vec<usize> = (0..lf).filter(|&p| from_cycle[p] == v0).collect();
    let mut path = vec![v0];
    let mut mask = bit(v0);
    let first = g
        .succ(v0)
        .iter()
        .copied()
        .filter(|&u| {
            !avoid[u]
                && from_phases.iter().any(|&p| from_cycle[(p + 1) % lf] != u)
                && dtg[sid(u, mask | bit(u))] == total - 1
        })
        .min()
        .unwrap();
    path.push(first);
    mask |= bit(first);
    let from_phases: Vec<usize> =
        from_phases.into_iter().filter(|&p| from_cycle[(p + 1) % lf] != first).collect();
    let mut cur = first;
    for left in (0..total - 1).rev() {
        let nxt = g
            .succ(cur)
            .iter()
            .copied()
            .filter(|&u| !avoid[u] && dtg[sid(u, mask | bit(u))] == left)
            .min()
            .unwrap();
        path.push(nxt);
        mask |= bit(nxt);
        cur = nxt;
    }
    let to_phases = (0..to_cycle.len()).filter(|&q| to_cycle[q] == cur).collect();
    Ok(Some(FoundBridge { path, from_phases, to_phases }))
}
