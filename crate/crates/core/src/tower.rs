//! Towers of nested levels and the four constructions.
//!
//! Every construction reads the structure of the deepest level (the root
//! circuit, or the previous circuit lifted to the deepest level), spells new
//! cycles through it, attaches bridges, and refines along the result.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::criteria;
use crate::error::TowerError;
use crate::graph::{self, Digraph, DEFAULT_CYCLE_BUDGET};
use crate::level::{
    find_bridge, lift_circuit, pattern_walk, refine_on_circuit, repetition_level, Bridge, Circuit,
    FoundBridge, PatternStep, SymbolicLevel, Tag,
};
use crate::measure::{metric_d, parse_rational, MeasureVector};
use crate::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Behavior {
    MinimalExpansive,
    MinimalMultiErgodic,
    TransitiveNonMinimal,
    NonTransitiveUniquelyErgodic,
}

impl Behavior {
    pub const ALL: [Behavior; 4] = [
        Behavior::MinimalExpansive,
        Behavior::MinimalMultiErgodic,
        Behavior::TransitiveNonMinimal,
        Behavior::NonTransitiveUniquelyErgodic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Behavior::MinimalExpansive => "minimal-expansive",
            Behavior::MinimalMultiErgodic => "minimal-multiergodic",
            Behavior::TransitiveNonMinimal => "transitive-nonminimal",
            Behavior::NonTransitiveUniquelyErgodic => "nontransitive-uniquely-ergodic",
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Behavior {
    type Err = TowerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "nontransitive-ue" {
            return Ok(Behavior::NonTransitiveUniquelyErgodic);
        }
        Behavior::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| TowerError::Config(format!("unknown behavior {s:?}")))
    }
}

/// Constructor parameters and schedules.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    pub lambda0: Rational,
    pub gamma: Rational,
    /// `N(k) = period_base · 2^k`.
    pub period_base: usize,
    /// `M(k) = k + separation_offset`.
    pub separation_offset: usize,
    /// `ε(k) = epsilon_base · 2^{-k}`.
    pub epsilon_base: Rational,
    /// Added to both window depths chosen by the constructors.
    pub extra_depth: usize,
    pub max_alphabet: usize,
    pub cycle_budget: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            lambda0: parse_rational("1/4").unwrap(),
            gamma: parse_rational("1/2").unwrap(),
            period_base: 2,
            separation_offset: 1,
            epsilon_base: Rational::one(),
            extra_depth: 0,
            max_alphabet: 100_000,
            cycle_budget: DEFAULT_CYCLE_BUDGET,
        }
    }
}

impl Config {
    pub fn period(&self, k: usize) -> usize {
        self.period_base << k
    }

    pub fn separation(&self, k: usize) -> usize {
        k + self.separation_offset
    }

    pub fn epsilon(&self, k: usize) -> Rational {
        &self.epsilon_base / Rational::from_integer(BigInt::one() << k)
    }

    pub fn validate(&self) -> Result<(), TowerError> {
        let bad = |s: &str| Err(TowerError::Config(s.to_string()));
        if !crate::measure::lambda0_valid(&self.lambda0) {
            return bad("lambda0 fails the product bound");
        }
        if self.gamma <= Rational::zero() || self.gamma >= Rational::one() {
            return bad("gamma must lie in (0, 1)");
        }
        if self.period_base == 0 {
            return bad("period schedule must be positive");
        }
        if self.epsilon_base <= Rational::zero() {
            return bad("epsilon schedule must be positive");
        }
        if self.max_alphabet == 0 {
            return bad("alphabet budget must be positive");
        }
        Ok(())
    }
}

/// Repetition signature of the minimal-expansive constructor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Signature {
    /// Go round the lifted cycle `reps` times, then through the ear; the
    /// bridge goes round `slip` extra times at the ear entrance.
    Gap { reps: usize, slip: usize },
    /// The lifted cycle repeated `k` times and nothing else.
    PureRepetition(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tower {
    pub behavior: Behavior,
    pub config: Config,
    pub levels: Vec<Arc<SymbolicLevel>>,
    /// `circuits[k]` lives on level `k` and produced level `k + 1`.
    pub circuits: Vec<Circuit>,
    /// Marked closed walks of each level.
    pub marked: Vec<Vec<Vec<usize>>>,
    pub designated: Vec<Option<usize>>,
    pub ab_rects: Vec<Option<(usize, usize)>>,
    /// Branch taken at each extension (0 outside trees).
    pub choices: Vec<usize>,
    pub branching: bool,
}

impl Tower {
    pub fn root(behavior: Behavior, config: Config) -> Result<Tower, TowerError> {
        config.validate()?;
        let (root, ab) = root_level(behavior);
        Ok(Tower {
            behavior,
            config,
            levels: vec![Arc::new(root)],
            circuits: vec![],
            marked: vec![vec![]],
            designated: vec![None],
            ab_rects: vec![ab],
            choices: vec![],
            branching: false,
        })
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn deepest(&self) -> &SymbolicLevel {
        self.levels.last().unwrap()
    }

    /// Circuit structure of level `k` that the next construction spells through.
    pub fn structure(&self, k: usize) -> Result<Circuit, TowerError> {
        if k == 0 {
            Ok(root_structure(self.behavior))
        } else {
            Ok(lift_circuit(&self.circuits[k - 1], &self.levels[k])?)
        }
    }

    /// One more level with the behavior's own constructor.
    pub fn extend(&self) -> Result<Tower, TowerError> {
        self.extend_with(0)
    }

    pub fn extend_with(&self, choice: usize) -> Result<Tower, TowerError> {
        match self.behavior {
            Behavior::MinimalExpansive => {
                let sig = if self.branching {
                    Signature::Gap { reps: 1 + choice, slip: 2 }
                } else {
                    Signature::Gap { reps: 1, slip: 1 }
                };
                extend_minimal_expansive(self, sig, choice)
            }
            Behavior::MinimalMultiErgodic => extend_minimal_multiergodic(self),
            Behavior::TransitiveNonMinimal => extend_transitive_nonminimal(self),
            Behavior::NonTransitiveUniquelyErgodic => extend_nontransitive_uniqueerg(self),
        }
    }

    fn push(&self, circuit: Circuit, level: SymbolicLevel, choice: usize) -> Tower {
        let mut t = self.clone();
        t.levels.push(Arc::new(level));
        t.circuits.push(circuit);
        t.marked.push(vec![]);
        t.designated.push(None);
        t.ab_rects.push(None);
        t.choices.push(choice);
        t
    }
}

fn root_level(behavior: Behavior) -> (SymbolicLevel, Option<(usize, usize)>) {
    match behavior {
        Behavior::MinimalExpansive | Behavior::MinimalMultiErgodic => {
            (SymbolicLevel::root(Digraph::complete(&["a", "b"])), None)
        }
        Behavior::TransitiveNonMinimal => {
            let mut r = SymbolicLevel::root(Digraph::complete(&["a", "b", "c", "d", "e"]));
            r.set_tags(&[("a", Tag::A), ("b", Tag::A), ("d", Tag::B), ("e", Tag::B)]).unwrap();
            (r, None)
        }
        Behavior::NonTransitiveUniquelyErgodic => {
            let g = Digraph::from_named(
                &["a", "b", "c", "d"],
                &[("a", "a"), ("a", "b"), ("b", "a"), ("b", "b"), ("a", "c"), ("c", "b"), ("a", "d"), ("d", "b")],
            )
            .unwrap();
            let mut r = SymbolicLevel::root(g);
            r.set_tags(&[("c", Tag::A), ("d", Tag::B)]).unwrap();
            (r, Some((2, 3)))
        }
    }
}

fn bridge(from: usize, from_phase: usize, path: &[usize], to: usize, to_phase: usize) -> Bridge {
    Bridge { from, from_phase, path: path.to_vec(), to, to_phase }
}

/// Root circuits, in the shape every later lifted structure has.
fn root_structure(behavior: Behavior) -> Circuit {
    match behavior {
        // cycle [a,b], bridge a→a→b
        Behavior::MinimalExpansive | Behavior::MinimalMultiErgodic => Circuit {
            cycles: vec![vec![0, 1]],
            bridges: vec![bridge(0, 0, &[0, 0, 1], 0, 1)],
        },
        // p0 = abcde, pA = ab, pB = de; xA, xB, y0A, yA0, y0B, yB0
        Behavior::TransitiveNonMinimal => Circuit {
            cycles: vec![vec![0, 1, 2, 3, 4], vec![0, 1], vec![3, 4]],
            bridges: vec![
                bridge(1, 0, &[0, 0], 1, 0),
                bridge(2, 0, &[3, 3], 2, 0),
                bridge(0, 2, &[2, 0], 1, 0),
                bridge(1, 1, &[1, 2], 0, 2),
                bridge(0, 2, &[2, 4], 2, 1),
                bridge(2, 1, &[4, 2], 0, 2),
            ],
        },
        // p = a; γ0 = aba, γ1 = acba, γ2 = adba
        Behavior::NonTransitiveUniquelyErgodic => Circuit {
            cycles: vec![vec![0]],
            bridges: vec![
                bridge(0, 0, &[0, 1, 0], 0, 0),
                bridge(0, 0, &[0, 2, 1, 0], 0, 0),
                bridge(0, 0, &[0, 3, 1, 0], 0, 0),
            ],
        },
    }
}

/// For each `i < upto`, the least `l` with `seq[i+1..=i+l]` containing every
/// symbol below `alphabet`; `None` if some position never gets there.
fn forward_needs(seq: &[usize], alphabet: usize, upto: usize) -> Option<Vec<usize>> {
    let mut count = vec![0usize; alphabet];
    let mut distinct = 0;
    let mut hi = 1; // window is seq[i+1..hi]
    let mut out = Vec::with_capacity(upto);
    for i in 0..upto {
        if hi < i + 1 {
            hi = i + 1;
        }
        while distinct < alphabet && hi < seq.len() {
            if count[seq[hi]] == 0 {
                distinct += 1;
            }
            count[seq[hi]] += 1;
            hi += 1;
        }
        if distinct < alphabet {
            return None;
        }
        out.push(hi - (i + 1));
        let x = seq[i + 1];
        count[x] -= 1;
        if count[x] == 0 {
            distinct -= 1;
        }
    }
    Some(out)
}

/// Per-phase forward and backward covering lengths along a closed walk.
fn cycle_needs(c: &[usize], alphabet: usize) -> Option<(Vec<usize>, Vec<usize>)> {
    let l = c.len();
    let ext: Vec<usize> = (0..3 * l).map(|j| c[j % l]).collect();
    let fwd = forward_needs(&ext[l..], alphabet, l)?;
    let rev: Vec<usize> = ext.iter().rev().copied().collect();
    // reversed position l + i ↔ phase (l - 1 - i) mod l
    let back_rev = forward_needs(&rev[l..], alphabet, l)?;
    let mut bwd = vec![0; l];
    for (i, &b) in back_rev.iter().enumerate() {
        bwd[(2 * l - 1 - i) % l] = b;
    }
    Some((fwd, bwd))
}

/// Least `n` such that every window's forward part covers the whole parent
/// level, over every point of the circuit language.
pub fn forward_cover(k: &Circuit, alphabet: usize) -> Option<usize> {
    let mut best = 0;
    for c in &k.cycles {
        let (f, _) = cycle_needs(c, alphabet)?;
        best = best.max(f.into_iter().max().unwrap_or(0));
    }
    for (j, b) in k.bridges.iter().enumerate() {
        let lf = k.cycles[b.from].len() as i64;
        let lt = k.cycles[b.to].len() as i64;
        let l = b.len() as i64;
        let lo = -lf;
        let hi = l + 2 * lt + 1;
        let seq: Vec<usize> = (lo..=hi).map(|t| k.bridge_symbol(j, t)).collect();
        let f = forward_needs(&seq, alphabet, (l - lo + 1) as usize)?;
        best = best.max(f.into_iter().max().unwrap_or(0));
    }
    Some(best)
}

/// Least width at which all cyclic windows of `c` are distinct.
pub fn distinct_width(c: &[usize]) -> usize {
    let l = c.len();
    let ok = |w: usize| {
        let ext: Vec<usize> = (0..l + w).map(|j| c[j % l]).collect();
        let r = crate::intern::intern(&[ext], &[l], w);
        r.first.len() == l
    };
    let (mut lo, mut hi) = (1, l);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// One block `cycle^reps` followed by `bridge` (which must return to `cycle`),
/// and the index at which the bridge departs.
fn single_block(s: &Circuit, cycle: usize, reps: usize, bridge: usize) -> Result<(Vec<usize>, usize), TowerError> {
    let w = pattern_walk(s, &[PatternStep { cycle, reps, bridge: Some(bridge) }])?;
    let b = &s.bridges[bridge];
    let l = s.cycles[cycle].len();
    let e = reps * l + (b.from_phase + l - b.to_phase) % l;
    Ok((w, e))
}

/// Bridge on new cycle `target` that leaves at walk index `e` (where `walk`
/// takes old bridge `via`), goes `loops` extra times round the old cycle, and
/// rejoins at `e`.
fn slip(s: &Circuit, via: usize, target: usize, e: usize, loops: usize) -> Bridge {
    let b = &s.bridges[via];
    let c = &s.cycles[b.from];
    let l = c.len();
    let path: Vec<usize> = (0..=loops * l).map(|t| c[(b.from_phase + t) % l]).collect();
    bridge(target, e, &path, target, e)
}

fn anchored(fb: &FoundBridge, from: usize, to: usize) -> Bridge {
    bridge(from, fb.from_phases[0], &fb.path, to, fb.to_phases[0])
}

/// Anchoring whose arrival is closest to where the source walk itself would be.
fn anchored_near(fb: &FoundBridge, cycle: usize, len: usize) -> Bridge {
    let l = fb.path.len() - 1;
    let mut best = (usize::MAX, 0, 0);
    for &p in &fb.from_phases {
        for &q in &fb.to_phases {
            let target = (p + l) % len;
            let d = (q + len - target) % len;
            let d = d.min(len - d);
            if d < best.0 {
                best = (d, p, q);
            }
        }
    }
    bridge(cycle, best.1, &fb.path, cycle, best.2)
}

fn construction(level: usize, reason: impl Into<String>) -> TowerError {
    TowerError::Construction { level, reason: reason.into() }
}

/// Refines the deepest level along `k`, guarding the alphabet budget.
fn refine_guarded(
    t: &Tower,
    k: &Circuit,
    m: usize,
    n: usize,
    constraint: &str,
) -> Result<SymbolicLevel, TowerError> {
    let next = t.depth() + 1;
    let w = m + n + 1;
    let starts: usize = k.cycles.iter().map(Vec::len).sum::<usize>()
        + k.bridges.iter().map(|b| b.len() + w).sum::<usize>();
    let limit = t.config.max_alphabet;
    // the start count bounds the alphabet; refuse early if it is far over
    if starts > 2 * limit {
        return Err(TowerError::Budget { level: next, needed: starts, limit, constraint: constraint.into() });
    }
    let level = refine_on_circuit(t.deepest(), k, m, n, &t.config.gamma)?;
    if level.len() > limit {
        return Err(TowerError::Budget { level: next, needed: level.len(), limit, constraint: constraint.into() });
    }
    Ok(level)
}

const MAX_REPS: usize = 16;

/// Minimal-expansive step: one long cycle spelled by a gap signature, one
/// slip bridge, forward depth covering the whole parent level.
pub fn extend_minimal_expansive(t: &Tower, sig: Signature, choice: usize) -> Result<Tower, TowerError> {
    let k = t.depth();
    let s = t.structure(k)?;
    let level = t.deepest();
    if !graph::is_strongly_connected(&level.graph) {
        return Err(construction(k, "deepest level is not strongly connected"));
    }
    let (reps, slip_loops) = match sig {
        Signature::Gap { reps, slip } => (reps, slip),
        Signature::PureRepetition(r) => {
            let rep = repetition_level(level, &s.cycles[0], r);
            return match criteria::check_expansive_chains(&rep, level) {
                Err(witness) => Err(TowerError::NotExpansive { level: k + 1, witness }),
                Ok(()) => Err(construction(k + 1, "pure repetition has no gap signature")),
            };
        }
    };
    let extra = t.config.extra_depth;
    let (w, e) = single_block(&s, 0, reps, 0)?;
    let lc = s.cycles[0].len();
    let circuit = Circuit { cycles: vec![w], bridges: vec![slip(&s, 0, 0, e, slip_loops)] };
    let cover = forward_cover(&circuit, level.len())
        .ok_or_else(|| construction(k, "circuit does not visit every rectangle"))?;
    let (m, mut n) = if t.branching {
        // every window holds a complete block, slip blocks included
        let h = circuit.cycles[0].len() + slip_loops * lc;
        (h + extra, h.max(cover) + extra)
    } else {
        (extra, cover + extra)
    };
    // windows shorter than the longest run of the old cycle close short loops
    loop {
        let child = refine_guarded(t, &circuit, m, n, "forward cover of the minimal level")?;
        let period = criteria::min_period(&child).unwrap_or(0);
        if period >= t.config.period(k + 1) {
            return Ok(t.push(circuit, child, choice));
        }
        if t.branching || n > cover + (reps + slip_loops + 1) * lc + extra {
            return Err(construction(k + 1, format!("minimum period {period} below N = {}", t.config.period(k + 1))));
        }
        n += lc;
    }
}

/// Transitive non-minimal step: central cycle through everything, a cycle
/// inside each tag set, slips keeping the tag cycles branched, and four
/// bridges between the central cycle and the tag cycles.
pub fn extend_transitive_nonminimal(t: &Tower) -> Result<Tower, TowerError> {
    let k = t.depth();
    let level = t.deepest();
    if criteria::check_trapped_cycles(level).is_err() {
        return Err(construction(k, "a tag set contains no cycle"));
    }
    let s = t.structure(k)?;
    let g = &level.graph;
    let mut reps = 1;
    loop {
        let (pa, ea) = single_block(&s, 1, reps, 0)?;
        let (pb, eb) = single_block(&s, 2, reps, 1)?;
        let step = |cycle, bridge| PatternStep { cycle, reps: 1, bridge: Some(bridge) };
        let p0 = pattern_walk(&s, &[step(0, 2), step(1, 0), step(1, 3), step(0, 4), step(2, 1), step(2, 5)])?;
        let none = BTreeSet::new();
        let find = |from: &[usize], to: &[usize], fi, ti, what: &str| -> Result<Bridge, TowerError> {
            let fb = find_bridge(g, from, to, &none, &none)?
                .ok_or_else(|| construction(k, format!("no bridge {what}")))?;
            Ok(anchored(&fb, fi, ti))
        };
        let bridges = vec![
            slip(&s, 0, 1, ea, 1),
            slip(&s, 1, 2, eb, 1),
            find(&p0, &pa, 0, 1, "from the central cycle to A")?,
            find(&pa, &p0, 1, 0, "from A to the central cycle")?,
            find(&p0, &pb, 0, 2, "from the central cycle to B")?,
            find(&pb, &p0, 2, 0, "from B to the central cycle")?,
        ];
        let (fwd, bwd) = cycle_needs(&p0, level.len())
            .ok_or_else(|| construction(k, "central cycle misses a rectangle"))?;
        let phi = (0..p0.len()).min_by_key(|&i| (fwd[i] + bwd[i], i)).unwrap();
        let circuit = Circuit { cycles: vec![p0, pa, pb], bridges };
        let extra = t.config.extra_depth;
        let (m, n) = (bwd[phi] + extra, fwd[phi] + extra);
        let child = refine_guarded(t, &circuit, m, n, "two-sided cover at the designated rectangle")?;
        let period = criteria::min_period(&child).unwrap_or(0);
        if period < t.config.period(k + 1) {
            if reps >= MAX_REPS {
                return Err(construction(k + 1, format!("minimum period {period} below N = {}", t.config.period(k + 1))));
            }
            reps += 1;
            continue;
        }
        let c = child.windows.as_ref().unwrap().positions[0][phi];
        let mut out = t.push(circuit, child, 0);
        out.designated[k + 1] = Some(c);
        return Ok(out);
    }
}

/// Binary de Bruijn sequence of order `d`.
fn de_bruijn(d: usize) -> Vec<usize> {
    fn db(t: usize, p: usize, d: usize, a: &mut [usize], out: &mut Vec<usize>) {
        if t > d {
            if d.is_multiple_of(p) {
                out.extend_from_slice(&a[1..=p]);
            }
        } else {
            a[t] = a[t - p];
            db(t + 1, p, d, a, out);
            for j in a[t - p] + 1..2 {
                a[t] = j;
                db(t + 1, t, d, a, out);
            }
        }
    }
    let mut a = vec![0; d + 1];
    let mut out = Vec::new();
    db(1, 1, d, &mut a, &mut out);
    out
}

const MAX_ORDER: usize = 24;

/// Non-transitive uniquely ergodic step: a de Bruijn cycle of one- and
/// two-fold blocks avoiding A and B, and three bridges (avoiding both,
/// through A only, through B only) returning close to where they left.
pub fn extend_nontransitive_uniqueerg(t: &Tower) -> Result<Tower, TowerError> {
    let k = t.depth();
    let level = t.deepest();
    let (a, b) = t.ab_rects[k].ok_or_else(|| construction(k, "no designated A and B rectangles"))?;
    let s = t.structure(k)?;
    let g = &level.graph;
    let eps = t.config.epsilon(k + 1);
    let mut last_fail = String::new();
    for d in 1..=MAX_ORDER {
        let pattern: Vec<PatternStep> = de_bruijn(d)
            .into_iter()
            .map(|x| PatternStep { cycle: 0, reps: 1 + x, bridge: Some(0) })
            .collect();
        let p = pattern_walk(&s, &pattern)?;
        // the long cycle alone needs one rectangle per phase
        if p.len() > t.config.max_alphabet {
            return Err(TowerError::Budget {
                level: k + 1,
                needed: p.len(),
                limit: t.config.max_alphabet,
                constraint: format!("ergodic diameter at most epsilon ({last_fail})"),
            });
        }
        if p.contains(&a) || p.contains(&b) {
            return Err(construction(k, "long cycle meets A or B"));
        }
        // γ0 lengthens the first two-fold block to three-fold, a block the
        // cycle never spells, so the detour is new and does not shortcut.
        let lp = s.cycles[0].len();
        let e0 = &s.bridges[0];
        let block = |r: usize| r * lp + (e0.from_phase + lp - e0.to_phase) % lp + e0.len();
        let mut start = 0;
        let mut e = None;
        for st in &pattern {
            if st.reps == 2 {
                e = Some(start + 2 * lp + (e0.from_phase + lp - e0.to_phase) % lp);
                break;
            }
            start += block(st.reps);
        }
        let e = e.expect("a de Bruijn sequence has both digits");
        let mut bridges = vec![slip(&s, 0, 0, e, 1)];
        for (visit, avoid, what) in [
            (BTreeSet::from([a]), BTreeSet::from([b]), "through A avoiding B"),
            (BTreeSet::from([b]), BTreeSet::from([a]), "through B avoiding A"),
        ] {
            let fb = find_bridge(g, &p, &p, &visit, &avoid)?
                .ok_or_else(|| construction(k, format!("no bridge {what}")))?;
            bridges.push(anchored_near(&fb, 0, p.len()));
        }
        let w0 = distinct_width(&p);
        let extra = t.config.extra_depth;
        let m = (w0 - 1) / 2 + extra;
        let n = (w0 - 1 - (w0 - 1) / 2).max(1) + extra;
        let circuit = Circuit { cycles: vec![p], bridges };
        let child = refine_guarded(t, &circuit, m, n, "ergodic diameter at most epsilon")?;
        let kids_a = criteria::children_in(&child, a);
        let kids_b = criteria::children_in(&child, b);
        if kids_a.len() != 1 || kids_b.len() != 1 {
            return Err(construction(k + 1, "A or B does not hold exactly one rectangle"));
        }
        let (na, nb) = (kids_a[0], kids_b[0]);
        if let Err((_, _, len)) = criteria::check_nontransitive_separation(&child, na, nb, t.config.separation(k + 1)) {
            return Err(construction(k + 1, format!("A and B joined by a chain of length {len}")));
        }
        let period = criteria::min_period(&child).unwrap_or(0);
        let diam = criteria::ergodic_diameter(&child, t.config.cycle_budget)?;
        if period >= t.config.period(k + 1) && diam.value <= eps {
            let mut out = t.push(circuit, child, 0);
            out.ab_rects[k + 1] = Some((na, nb));
            return Ok(out);
        }
        last_fail = format!("order {d}: diameter {} period {period}", diam.value);
    }
    Err(construction(k + 1, format!("schedule not met up to order {MAX_ORDER} ({last_fail})")))
}

/// Closed walk from `start` through every vertex: repeatedly walk to the
/// nearest unvisited vertex, then back.
pub fn covering_walk(g: &Digraph, start: usize) -> Option<Vec<usize>> {
    let n = g.len();
    let mut seen = vec![false; n];
    let mut left = n;
    let mut walk = vec![start];
    seen[start] = true;
    left -= 1;
    let mut cur = start;
    let mut prev = vec![usize::MAX; n];
    let mut stamp = vec![usize::MAX; n];
    let mut round = 0;
    loop {
        let done = left == 0;
        round += 1;
        let mut queue = std::collections::VecDeque::from([cur]);
        stamp[cur] = round;
        let mut hit = None;
        'bfs: while let Some(u) = queue.pop_front() {
            for &v in g.succ(u) {
                if (done && v == start) || (!done && !seen[v]) {
                    prev[v] = u;
                    hit = Some(v);
                    break 'bfs;
                }
                if stamp[v] != round {
                    stamp[v] = round;
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        let v = hit?;
        let mut seg = vec![v];
        let mut x = prev[v];
        while x != cur {
            seg.push(x);
            x = prev[x];
        }
        seg.reverse();
        for &y in &seg {
            if !seen[y] {
                seen[y] = true;
                left -= 1;
            }
        }
        if done {
            seg.pop();
            walk.extend(seg);
            return Some(walk);
        }
        walk.extend(seg);
        cur = v;
    }
}

/// `𝔡` between the marked measure on `gamma` and the walk measure on `w`, both on level `n`.
fn walk_drift(levels: &[Arc<SymbolicLevel>], gamma: &[usize], w: &[usize]) -> Rational {
    let n = levels.len() - 1;
    let size = levels[n].len();
    metric_d(levels, &MeasureVector::on_walk(n, size, gamma), &MeasureVector::on_walk(n, size, w))
}

fn shadow(gamma: &[usize], a: usize, tour: &[usize]) -> Vec<usize> {
    let mut w = Vec::with_capacity(a * gamma.len() + tour.len());
    for _ in 0..a {
        w.extend_from_slice(gamma);
    }
    w.extend_from_slice(tour);
    w
}

/// Multi-ergodic step: every marked cycle is shadowed by a long cycle that
/// repeats it and then tours the level; one new touring cycle is added; all
/// are joined in a ring of bridges.
pub fn extend_minimal_multiergodic(t: &Tower) -> Result<Tower, TowerError> {
    let k = t.depth();
    let level = t.deepest();
    let g = &level.graph;
    let marked = &t.marked[k];
    let limit = t.config.max_alphabet;
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    if !marked.is_empty() {
        let measures: Vec<MeasureVector> =
            marked.iter().map(|c| MeasureVector::on_walk(k, level.len(), c)).collect();
        let mut bound = criteria::rho(&t.levels, &measures)?;
        for _ in 0..=k {
            bound *= &t.config.lambda0;
        }
        for (i, gamma) in marked.iter().enumerate() {
            let tour = covering_walk(g, gamma[0]).ok_or_else(|| construction(k, "level is not strongly connected"))?;
            let drift = |a: usize| walk_drift(&t.levels, gamma, &shadow(gamma, a, &tour));
            let size = |a: usize| a * gamma.len() + tour.len();
            // doubling, then bisection on the repetition count
            let mut hi = 1;
            while drift(hi) >= bound {
                if size(2 * hi) > limit {
                    return Err(TowerError::DriftUnachievable {
                        level: k + 1,
                        cycle: i,
                        best: crate::measure::fmt_rational(&drift(hi.max((limit - tour.len()) / gamma.len()))),
                        bound: crate::measure::fmt_rational(&bound),
                    });
                }
                hi *= 2;
            }
            let mut lo = hi / 2;
            while lo + 1 < hi {
                let mid = (lo + hi) / 2;
                if drift(mid) < bound {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mut a = hi;
            while !crate::level::is_primitive(&shadow(gamma, a, &tour)) {
                a += 1;
            }
            cycles.push(shadow(gamma, a, &tour));
        }
    }
    let fresh = if k == 0 {
        let mut w = vec![0; t.config.period(1).max(2) - 1];
        w.push(1);
        w
    } else {
        covering_walk(g, marked[0][0]).ok_or_else(|| construction(k, "level is not strongly connected"))?
    };
    if cycles.contains(&fresh) || !crate::level::is_primitive(&fresh) {
        return Err(construction(k, "new touring cycle coincides with a shadowing cycle"));
    }
    cycles.push(fresh);
    let none = BTreeSet::new();
    let r = cycles.len();
    let mut bridges = Vec::new();
    for i in 0..r {
        let j = (i + 1) % r;
        let fb = find_bridge(g, &cycles[i], &cycles[j], &none, &none)?
            .ok_or_else(|| construction(k, format!("no bridge from cycle {i} to cycle {j}")))?;
        bridges.push(anchored(&fb, i, j));
    }
    let circuit = Circuit { cycles, bridges };
    let cover = forward_cover(&circuit, level.len())
        .ok_or_else(|| construction(k, "a cycle misses a rectangle"))?;
    let extra = t.config.extra_depth;
    let child = refine_guarded(t, &circuit, extra, cover + extra, "drift of the shadowing cycles")?;
    let period = criteria::min_period(&child).unwrap_or(0);
    if period < t.config.period(k + 1) {
        return Err(construction(k + 1, format!("minimum period {period} below N = {}", t.config.period(k + 1))));
    }
    let lifted = lift_circuit(&circuit, &child)?;
    let mut out = t.push(circuit, child, 0);
    out.marked[k + 1] = lifted.cycles;
    Ok(out)
}

pub fn build_tower(behavior: Behavior, depth: usize, config: Config) -> Result<Tower, TowerError> {
    let mut t = Tower::root(behavior, config)?;
    for _ in 0..depth {
        t = t.extend()?;
    }
    Ok(t)
}

/// Leaves of a complete binary tree of towers, in path order. Sibling levels
/// come from different gap signatures with windows deep enough to see a
/// whole block, so their alphabets are disjoint.
#[derive(Clone, Debug)]
pub struct BranchTree {
    pub leaves: Vec<(Vec<usize>, Tower)>,
}

pub fn branch_tree(behavior: Behavior, depth: usize, config: Config) -> Result<BranchTree, TowerError> {
    if behavior != Behavior::MinimalExpansive {
        return Err(TowerError::NoBranching(behavior.name().to_string()));
    }
    let mut root = Tower::root(behavior, config)?;
    root.branching = true;
    let mut frontier = vec![(Vec::new(), root)];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for (path, t) in frontier {
            for c in 0..2 {
                let mut p = path.clone();
                p.push(c);
                next.push((p, t.extend_with(c)?));
            }
        }
        frontier = next;
    }
    Ok(BranchTree { leaves: frontier })
}

/// Two refinements of the same parent, viewed as cylinder sets: rectangles
/// `u` of `a` and `v` of `b` are disjoint when their windows differ somewhere
/// on the common index range. Returns a pair that may intersect.
pub fn overlapping_rectangles(a: &SymbolicLevel, b: &SymbolicLevel) -> Option<(usize, usize)> {
    let m = a.m().min(b.m());
    let n = a.n().min(b.n());
    let cut = |l: &'_ SymbolicLevel, v: usize| -> (usize, usize) {
        let (s, o) = l.windows.as_ref().expect("refined level").loc[v];
        (s, o + l.m() - m)
    };
    let (ha, hb) = (SeqHashes::new(a), SeqHashes::new(b));
    let w = m + n + 1;
    let mut seen: HashMap<u64, Vec<usize>> = HashMap::new();
    for u in 0..a.len() {
        let (s, o) = cut(a, u);
        seen.entry(ha.hash(s, o, w)).or_default().push(u);
    }
    let word = |l: &'_ SymbolicLevel, v: usize| -> Vec<usize> {
        let (s, o) = cut(l, v);
        l.windows.as_ref().unwrap().seqs[s][o..o + w].to_vec()
    };
    (0..b.len()).find_map(|v| {
        let (s, o) = cut(b, v);
        let cands = seen.get(&hb.hash(s, o, w))?;
        let wv = word(b, v);
        cands.iter().find(|&&u| word(a, u) == wv).map(|&u| (u, v))
    })
}

/// Polynomial prefix hashes modulo 2^61 - 1 over every window sequence.
struct SeqHashes {
    prefix: Vec<Vec<u64>>,
    pow: Vec<u64>,
}

impl SeqHashes {
    const P: u64 = (1 << 61) - 1;
    const BASE: u64 = 1_000_003;

    fn mul(a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % Self::P as u128) as u64
    }

    fn new(l: &SymbolicLevel) -> Self {
        let seqs = &l.windows.as_ref().expect("refined level").seqs;
        let longest = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut pow = vec![1u64; longest + 1];
        for i in 1..=longest {
            pow[i] = Self::mul(pow[i - 1], Self::BASE);
        }
        let prefix = seqs
            .iter()
            .map(|q| {
                let mut h = vec![0u64; q.len() + 1];
                for (i, &x) in q.iter().enumerate() {
                    h[i + 1] = (Self::mul(h[i], Self::BASE) + x as u64 + 1) % Self::P;
                }
                h
            })
            .collect();
        SeqHashes { prefix, pow }
    }

    fn hash(&self, s: usize, o: usize, len: usize) -> u64 {
        let h = &self.prefix[s];
        (h[o + len] + Self::P - Self::mul(h[o], self.pow[len])) % Self::P
    }
}

/// Checks every pair of leaves at the level where their paths split; leaf
/// rectangles lie inside their ancestors there, so this covers the leaves.
pub fn leaves_disjoint(tree: &BranchTree) -> Result<(), (usize, usize, usize)> {
    for i in 0..tree.leaves.len() {
        for j in i + 1..tree.leaves.len() {
            let (pi, ti) = &tree.leaves[i];
            let (pj, tj) = &tree.leaves[j];
            let Some(split) = pi.iter().zip(pj).position(|(x, y)| x != y) else {
                return Err((i, j, pi.len()));
            };
            // only compare each sibling pair once: the leftmost leaves below it
            let first = |p: &[usize]| p[split + 1..].iter().all(|&c| c == 0);
            if !(first(pi) && first(pj)) {
                continue;
            }
            let k = split + 1;
            if overlapping_rectangles(&ti.levels[k], &tj.levels[k]).is_some() {
                return Err((i, j, k));
            }
        }
    }
    Ok(())
}
