//! Finite-depth simulation of the limit shift. A point is a path in the
//! deepest graph, grown on demand by seeded choices; shallower itineraries
//! are read through window base symbols.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::criteria;
use crate::measure::MeasureVector;
use crate::tower::{Behavior, Tower};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("depth {depth} exceeds tower depth {max}")]
    Depth { depth: usize, max: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("horizon {given} is below the certified bound {needed}")]
    Horizon { needed: usize, given: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug)]
pub struct LimitPoint<'t> {
    tower: &'t Tower,
    pub depth: usize,
    pub seed: u64,
    /// Time of `path[0]`.
    lo: i64,
    path: VecDeque<usize>,
    pub cursor: i64,
    fwd: ChaCha8Rng,
    bwd: ChaCha8Rng,
}

impl<'t> LimitPoint<'t> {
    /// Start rectangle `seed mod |level D|`, path grown to `[-1, 1]`.
    pub fn from_seed(tower: &'t Tower, depth: usize, seed: u64) -> Result<Self, ProbeError> {
        if depth > tower.depth() {
            return Err(ProbeError::Depth { depth, max: tower.depth() });
        }
        let n = tower.levels[depth].len() as u64;
        let mut p = LimitPoint {
            tower,
            depth,
            seed,
            lo: 0,
            path: VecDeque::from([(seed % n) as usize]),
            cursor: 0,
            fwd: ChaCha8Rng::seed_from_u64(seed.wrapping_mul(2)),
            bwd: ChaCha8Rng::seed_from_u64(seed.wrapping_mul(2).wrapping_add(1)),
        };
        p.ensure(-1, 1);
        Ok(p)
    }

    /// Times covered by the grown path, inclusive.
    pub fn span(&self) -> (i64, i64) {
        (self.lo, self.lo + self.path.len() as i64 - 1)
    }

    fn ensure(&mut self, t0: i64, t1: i64) {
        let g = &self.tower.levels[self.depth].graph;
        while self.lo + (self.path.len() as i64) - 1 < t1 {
            let succ = g.succ(*self.path.back().unwrap());
            let v = succ[self.fwd.gen_range(0..succ.len())];
            self.path.push_back(v);
        }
        while self.lo > t0 {
            let pred = g.pred(*self.path.front().unwrap());
            let v = pred[self.bwd.gen_range(0..pred.len())];
            self.path.push_front(v);
            self.lo -= 1;
        }
    }

    /// Depth-`D` rectangle at time `t`.
    pub fn rect_at(&mut self, t: i64) -> usize {
        self.ensure(t, t);
        self.path[(t - self.lo) as usize]
    }

    pub fn current(&mut self) -> usize {
        self.rect_at(self.cursor)
    }

    pub fn step(&mut self, direction: i64) {
        self.cursor += direction.signum();
        self.ensure(self.cursor - 1, self.cursor + 1);
    }

    fn ancestor(&self, mut v: usize, k: usize) -> usize {
        for j in (k + 1..=self.depth).rev() {
            v = self.tower.levels[j].base(v);
        }
        v
    }

    /// Level-`k` rectangles at times `t0..t1` relative to the cursor.
    pub fn itinerary(&mut self, k: usize, t0: i64, t1: i64) -> Vec<usize> {
        assert!(k <= self.depth, "level below the point's depth");
        if t1 <= t0 {
            return vec![];
        }
        let (a, b) = (self.cursor + t0, self.cursor + t1 - 1);
        self.ensure(a, b);
        (a..=b).map(|t| self.ancestor(self.path[(t - self.lo) as usize], k)).collect()
    }

    /// Frequencies of the level-`k` itinerary over `[0, T)`.
    pub fn empirical_measure(&mut self, horizon: usize, k: usize) -> MeasureVector {
        let size = self.tower.levels[k].len();
        let mut counts = vec![0u64; size];
        for v in self.itinerary(k, 0, horizon as i64) {
            counts[v] += 1;
        }
        MeasureVector::from_counts(k, &counts)
    }

    pub fn stats(&mut self, horizon: usize) -> OrbitStats {
        let mut counts = Vec::new();
        for k in 0..=self.depth {
            let mut c = vec![0u64; self.tower.levels[k].len()];
            for v in self.itinerary(k, 0, horizon as i64) {
                c[v] += 1;
            }
            counts.push(c);
        }
        OrbitStats { horizon, counts }
    }
}

pub fn point_from_seed(tower: &Tower, depth: usize, seed: u64) -> Result<LimitPoint<'_>, ProbeError> {
    LimitPoint::from_seed(tower, depth, seed)
}

/// Visit counts along `[0, T)` at every level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrbitStats {
    pub horizon: usize,
    pub counts: Vec<Vec<u64>>,
}

impl OrbitStats {
    pub fn measure(&self, k: usize) -> MeasureVector {
        MeasureVector::from_counts(k, &self.counts[k])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinimalityProbe {
    pub depth: usize,
    pub level: usize,
    pub bound: usize,
    /// `(seed, rectangle, first visit time)`; `None` if never visited.
    pub visits: Vec<(u64, usize, Option<usize>)>,
    pub max_observed: usize,
    pub violations: usize,
}

impl MinimalityProbe {
    pub fn margin(&self) -> i64 {
        self.bound as i64 - self.max_observed as i64
    }
}

/// Level-`k` first-visit times of seeded depth-`D` orbits against the bound
/// read from the first-hit table of level `k + 1`.
pub fn minimality_probe(
    tower: &Tower,
    depth: usize,
    k: usize,
    seeds: &[u64],
    horizon: usize,
) -> Result<MinimalityProbe, ProbeError> {
    if depth > tower.depth() {
        return Err(ProbeError::Depth { depth, max: tower.depth() });
    }
    if k >= depth {
        return Err(ProbeError::Precondition(format!("no first-hit table below level {depth}")));
    }
    let table = criteria::check_minimality(&tower.levels[k + 1], &tower.levels[k])
        .map_err(|f| ProbeError::Precondition(format!("level {} is not minimal (rectangle {})", k + 1, f.v)))?;
    let bound = table.max_first_hit();
    if horizon < bound {
        return Err(ProbeError::Horizon { needed: bound, given: horizon });
    }
    let size = tower.levels[k].len();
    let mut visits = Vec::new();
    let mut max_observed = 0;
    let mut violations = 0;
    for &seed in seeds {
        let mut p = LimitPoint::from_seed(tower, depth, seed)?;
        let it = p.itinerary(k, 1, horizon as i64 + 1);
        let mut first = vec![None; size];
        for (i, &v) in it.iter().enumerate() {
            if first[v].is_none() {
                first[v] = Some(i + 1);
            }
        }
        for (v, f) in first.into_iter().enumerate() {
            match f {
                Some(t) if t <= bound => max_observed = max_observed.max(t),
                Some(t) => {
                    max_observed = max_observed.max(t);
                    violations += 1;
                }
                None => violations += 1,
            }
            visits.push((seed, v, f));
        }
    }
    Ok(MinimalityProbe { depth, level: k, bound, visits, max_observed, violations })
}

/// Shallowest level at which the two itineraries differ within `|t| ≤ horizon`,
/// with the earliest such time (by `|t|`, then sign).
pub fn expansivity_probe(p: &mut LimitPoint, q: &mut LimitPoint, horizon: usize) -> Option<(i64, usize)> {
    assert_eq!(p.depth, q.depth, "points over different depths");
    let h = horizon as i64;
    let mut times: Vec<i64> = (-h..=h).collect();
    times.sort_by_key(|&t| (t.abs(), t));
    for k in 0..=p.depth {
        let a = p.itinerary(k, -h, h + 1);
        let b = q.itinerary(k, -h, h + 1);
        if let Some(&t) = times.iter().find(|&&t| a[(t + h) as usize] != b[(t + h) as usize]) {
            return Some((t, k));
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NonTransitivityProbe {
    pub depth: usize,
    pub horizon: usize,
    /// Set when the requested horizon exceeded the certified `M(D)`.
    pub truncated: bool,
    pub orbits: usize,
    pub b_entries: usize,
}

impl NonTransitivityProbe {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "depth {}: {} orbits from A, {} B-entries within {} steps (evidence, not proof)",
            self.depth, self.orbits, self.b_entries, self.horizon
        );
        if self.truncated {
            s.push_str("; horizon truncated at the certified bound");
        }
        s
    }
}

/// Seeded orbits started in the A rectangle of the deepest level, watched for
/// the B rectangle up to `min(horizon, M(D))` steps.
pub fn nontransitivity_probe(tower: &Tower, seeds: &[u64], horizon: usize) -> Result<NonTransitivityProbe, ProbeError> {
    if tower.behavior != Behavior::NonTransitiveUniquelyErgodic {
        return Err(ProbeError::Precondition(format!("{} towers are transitive", tower.behavior)));
    }
    let d = tower.depth();
    let (a, b) = tower.ab_rects[d].ok_or_else(|| ProbeError::Precondition("no A/B rectangles".into()))?;
    let certified = tower.config.separation(d);
    let h = horizon.min(certified);
    let mut b_entries = 0;
    for &seed in seeds {
        let mut p = LimitPoint::from_seed(tower, d, 0)?;
        p.seed = seed;
        p.path = VecDeque::from([a]);
        p.lo = 0;
        p.fwd = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(2));
        p.bwd = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(2).wrapping_add(1));
        b_entries += p.itinerary(d, 1, h as i64 + 1).iter().filter(|&&v| v == b).count();
    }
    Ok(NonTransitivityProbe { depth: d, horizon: h, truncated: horizon > certified, orbits: seeds.len(), b_entries })
}

/// One CSV row: `time,level,rectangle,count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub time: i64,
    pub level: usize,
    pub rectangle: String,
    pub count: u64,
}

pub fn itinerary_rows(p: &mut LimitPoint, horizon: usize) -> Vec<Row> {
    let mut rows = Vec::new();
    for k in 0..=p.depth {
        let it = p.itinerary(k, 0, horizon as i64);
        let g = &p.tower.levels[k].graph;
        for (t, v) in it.into_iter().enumerate() {
            rows.push(Row { time: t as i64, level: k, rectangle: g.name(v).to_string(), count: 1 });
        }
    }
    rows
}

pub fn count_rows(tower: &Tower, stats: &OrbitStats) -> Vec<Row> {
    let mut rows = Vec::new();
    for (k, c) in stats.counts.iter().enumerate() {
        let g = &tower.levels[k].graph;
        for (v, &n) in c.iter().enumerate() {
            if n > 0 {
                rows.push(Row { time: stats.horizon as i64, level: k, rectangle: g.name(v).to_string(), count: n });
            }
        }
    }
    rows
}

pub fn write_csv<W: Write>(out: W, rows: &[Row]) -> Result<(), ProbeError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "level", "rectangle", "count"])?;
    for r in rows {
        w.write_record([r.time.to_string(), r.level.to_string(), r.rectangle.clone(), r.count.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
