//! The twelve acceptance criteria. Every criterion runs and prints one
//! PASS/FAIL line before the test asserts.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use towers::certify::certify;
use towers::criteria::{self, check_expansive_chains, check_nontransitive_separation, ergodic_diameter};
use towers::error::TowerError;
use towers::format::{load, save};
use towers::graph::{Digraph, DEFAULT_CYCLE_BUDGET};
use towers::level::{is_filtrating_interval, refine_on_circuit, repetition_level, SymbolicLevel};
use towers::limit::{minimality_probe, nontransitivity_probe, point_from_seed, ProbeError};
use towers::measure::{lambda0_bound, lambda0_valid, metric_d, MeasureVector};
use towers::tower::{branch_tree, build_tower, leaves_disjoint, Behavior, Config, Tower};
use towers::Rational;

use common::*;

const DEPTH: usize = 6;
const ALPHABET: usize = 100_000;

struct Build {
    tower: Tower,
    secs: f64,
    error: Option<TowerError>,
}

/// Extends level by level up to `depth`, keeping the deepest tower reached.
fn build_deepest(b: Behavior, depth: usize) -> Build {
    let start = Instant::now();
    let mut tower = Tower::root(b, Config::default()).unwrap();
    let mut error = None;
    while tower.depth() < depth {
        match tower.extend() {
            Ok(next) => tower = next,
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    Build { tower, secs: start.elapsed().as_secs_f64(), error }
}

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

fn record(out: &mut Vec<Outcome>, id: usize, pass: bool, detail: String) {
    println!("criterion {id:>2} {} {detail}", if pass { "PASS" } else { "FAIL" });
    out.push(Outcome { id, pass, detail });
}

fn expected_conclusion(b: Behavior) -> &'static [&'static str] {
    match b {
        Behavior::MinimalExpansive => &["p.minimale", "l.expansive"],
        Behavior::MinimalMultiErgodic => &["p.minimale", "p.nuergodique"],
        Behavior::TransitiveNonMinimal => &["l.transitive"],
        Behavior::NonTransitiveUniquelyErgodic => &["l.nontr", "l.urgo"],
    }
}

fn c1_four_behaviors(builds: &BTreeMap<Behavior, Build>) -> (bool, String) {
    let mut pass = true;
    let mut notes = Vec::new();
    for (b, run) in builds {
        let t = &run.tower;
        let widest = t.levels.iter().map(|l| l.len()).max().unwrap();
        let ok = match &run.error {
            Some(e) => {
                notes.push(format!("{b}: stopped at depth {} ({e})", t.depth()));
                false
            }
            None => {
                let r = certify(t);
                let cites = r.conclusion.as_slice() == expected_conclusion(*b);
                let ok = r.certified() && cites && run.secs < 60.0 && widest <= ALPHABET;
                notes.push(format!("{b}: {:.1}s max {widest} cites {:?}", run.secs, r.conclusion));
                ok
            }
        };
        pass &= ok;
    }
    (pass, notes.join("; "))
}

fn random_based_level(r: &mut rand_chacha::ChaCha8Rng) -> SymbolicLevel {
    let n = r.gen_range(1..=12);
    let np = r.gen_range(1..=3);
    let e: Vec<(usize, usize)> =
        (0..r.gen_range(0..n * 3)).map(|_| (r.gen_range(0..n), r.gen_range(0..n))).collect();
    let bases = (0..n).map(|_| r.gen_range(0..np)).collect();
    based_level(digraph(n, &e), bases)
}

fn c2_expansive_oracle() -> (bool, String) {
    let mut r = rng(0xe2);
    let parent = SymbolicLevel::root(Digraph::complete(&["a", "b", "c"]));
    let mut agree = 0;
    let mut positive = 0;
    let total = 300;
    for _ in 0..total {
        let child = random_based_level(&mut r);
        let brute = brute_non_expansive(&child);
        positive += usize::from(brute);
        agree += usize::from(check_expansive_chains(&child, &parent).is_err() == brute);
    }
    (agree == total, format!("{agree}/{total} agree, {positive} non-expansive"))
}

fn c3_odometer() -> (bool, String) {
    let mut r = rng(0x0d0);
    let mut rejected = 0;
    let mut total = 0;
    for _ in 0..50 {
        let s = r.gen_range(2..=4);
        let names: Vec<String> = (0..s).map(|i| format!("s{i}")).collect();
        let root = SymbolicLevel::root(Digraph::complete(&names));
        let len = r.gen_range(1..=8);
        let cycle: Vec<usize> = (0..len).map(|_| r.gen_range(0..s)).collect();
        for k in [2, 3, 4] {
            total += 1;
            rejected += usize::from(check_expansive_chains(&repetition_level(&root, &cycle, k), &root).is_err());
        }
    }
    (rejected == total, format!("{rejected}/{total} repetition levels rejected"))
}

fn c4_diameter() -> (bool, String) {
    let catalog = diameter_catalog();
    let exact = catalog
        .iter()
        .filter(|g| {
            let lvl = SymbolicLevel::root((*g).clone());
            ergodic_diameter(&lvl, DEFAULT_CYCLE_BUDGET).unwrap().value == circulation_diameter(g)
        })
        .count();
    let (root, k) = example_e();
    let w3 = refine_on_circuit(&root, &k, 1, 1, &q(1, 2)).unwrap();
    let e = ergodic_diameter(&w3, DEFAULT_CYCLE_BUDGET).unwrap().value;
    (exact == catalog.len() && e == q(2, 3), format!("{exact}/{} exact, example E {e}", catalog.len()))
}

fn c5_lambda() -> (bool, String) {
    // partial product and sum to 64 terms, then a separate tail estimate:
    // Σ_{i>64} λ^i = λ^65/(1-λ) =: τ and ∏_{i>64}(1+λ^i) ≤ e^τ ≤ 1 + 2τ for τ ≤ 1
    let bounds = |lam: &Rational| {
        let (mut prod, mut sum, mut p) = (Rational::one(), Rational::zero(), Rational::one());
        for _ in 0..64 {
            p *= lam;
            prod *= Rational::one() + &p;
            sum += &p;
        }
        let tau = &p * lam / (Rational::one() - lam);
        let upper = &prod * (Rational::one() + &tau * q(2, 1)) * (&sum + &tau);
        (&prod * &sum, upper)
    };
    let (lo, hi) = bounds(&q(1, 4));
    let certified = lambda0_bound(&q(1, 4)).unwrap();
    let (lo2, _) = bounds(&q(1, 2));
    let pass = lambda0_valid(&q(1, 4))
        && !lambda0_valid(&q(1, 2))
        && lo <= certified
        && certified <= hi
        && hi <= q(1, 2)
        && lo2 > q(1, 2);
    let f = |x: &Rational| format!("{:.6}", x.to_f64().unwrap());
    (pass, format!("1/4 in [{}, {}], certified {}; 1/2 at least {}", f(&lo), f(&hi), f(&certified), f(&lo2)))
}

fn c6_multiergodic() -> (bool, String) {
    let mut notes = Vec::new();
    let mut pass = true;
    for n in 1..=8 {
        let t = match build_tower(Behavior::MinimalMultiErgodic, n, Config::default()) {
            Ok(t) => t,
            Err(e) => {
                notes.push(format!("n={n} not built ({e})"));
                pass = false;
                break;
            }
        };
        let marg = |k: usize| -> Vec<Vec<Rational>> {
            t.marked[k].iter().map(|w| walk_marginal(t.levels[k].len(), w)).collect()
        };
        let rho = |k: usize| {
            let fam: Vec<MeasureVector> =
                t.marked[k].iter().map(|w| MeasureVector::on_walk(k, t.levels[k].len(), w)).collect();
            criteria::rho(&t.levels, &fam).unwrap()
        };
        let mut ok = brute_rank(&marg(n)) == n;
        // step drifts, then their running sums from each starting level
        let mut step = vec![vec![]; n + 1];
        for k in 1..n {
            let (a, b) = (marg(k), marg(k + 1));
            let mut bound = rho(k);
            for _ in 0..=k {
                bound *= &t.config.lambda0;
            }
            for i in 0..a.len() {
                let d = brute_metric(&t.levels, (k, &a[i]), (k + 1, &b[i]));
                ok &= d < bound;
                step[k].push(d);
            }
        }
        for k in 1..n {
            let half = rho(k) * q(1, 2);
            for i in 0..t.marked[k].len() {
                let mut sum = Rational::zero();
                for j in k..n {
                    sum += &step[j][i];
                    ok &= sum < half;
                }
            }
        }
        notes.push(format!("n={n} {}", if ok { "ok" } else { "violated" }));
        pass &= ok;
    }
    (pass, notes.join(", "))
}

fn c7_minimality(builds: &BTreeMap<Behavior, Build>) -> (bool, String) {
    let seeds: Vec<u64> = (0..100).collect();
    let mut pass = true;
    let mut notes = Vec::new();
    for b in [Behavior::MinimalExpansive, Behavior::MinimalMultiErgodic] {
        let run = &builds[&b];
        if let Some(e) = &run.error {
            notes.push(format!("{b}: depth {DEPTH} not built ({e})"));
            pass = false;
            continue;
        }
        // the horizon is the certificate's own first-hit bound
        let bound = match minimality_probe(&run.tower, DEPTH, 3, &seeds, 0) {
            Err(ProbeError::Horizon { needed, .. }) => needed,
            other => panic!("{b}: unexpected probe result {:?}", other.map(|p| p.bound)),
        };
        let probe = minimality_probe(&run.tower, DEPTH, 3, &seeds, bound).unwrap();
        let unvisited = probe.visits.iter().filter(|v| v.2.is_none()).count();
        notes.push(format!(
            "{b}: bound {} max first visit {} violations {}",
            probe.bound, probe.max_observed, probe.violations
        ));
        pass &= probe.violations == 0 && unvisited == 0;
    }
    (pass, notes.join("; "))
}

fn c8_unique_ergodicity() -> (bool, String) {
    let depth = 5;
    let t = match build_tower(Behavior::NonTransitiveUniquelyErgodic, depth, Config::default()) {
        Ok(t) => t,
        Err(e) => return (false, format!("depth {depth} not built ({e})")),
    };
    let measures: Vec<MeasureVector> = (0..20)
        .map(|s| point_from_seed(&t, depth, s).unwrap().empirical_measure(100_000, depth))
        .collect();
    let mut worst = Rational::zero();
    for i in 0..measures.len() {
        for j in i + 1..measures.len() {
            worst = worst.max(metric_d(&t.levels, &measures[i], &measures[j]));
        }
    }
    let bound = t.config.epsilon(depth) + q(1, 32);
    (worst <= bound, format!("max pairwise {worst} bound {bound}"))
}

fn c9_nontransitivity(builds: &BTreeMap<Behavior, Build>) -> (bool, String) {
    let run = &builds[&Behavior::NonTransitiveUniquelyErgodic];
    let t = &run.tower;
    let mut separated = true;
    for k in 0..=t.depth() {
        let (a, b) = t.ab_rects[k].unwrap();
        separated &= check_nontransitive_separation(&t.levels[k], a, b, t.config.separation(k)).is_ok();
    }
    let seeds: Vec<u64> = (0..100).collect();
    let probe = nontransitivity_probe(t, &seeds, usize::MAX).unwrap();
    let detail = format!("levels 0..={} separated {separated}, {}", t.depth(), probe.summary());
    match &run.error {
        Some(e) => (false, format!("depth {DEPTH} not built ({e}); {detail}")),
        None => (separated && probe.b_entries == 0, detail),
    }
}

fn c10_branching() -> (bool, String) {
    let tree = match branch_tree(Behavior::MinimalExpansive, 5, Config::default()) {
        Ok(t) => t,
        Err(e) => return (false, format!("tree not built ({e})")),
    };
    let paths: BTreeSet<&Vec<usize>> = tree.leaves.iter().map(|(p, _)| p).collect();
    let disjoint = leaves_disjoint(&tree);
    let certified = tree.leaves.iter().filter(|(_, t)| certify(t).certified()).count();
    let pass = tree.leaves.len() == 32 && paths.len() == 32 && disjoint.is_ok() && certified == 32;
    (pass, format!("{} leaves, disjoint {:?}, {certified} certified", tree.leaves.len(), disjoint.is_ok()))
}

fn c11_filtrating() -> (bool, String) {
    let mut r = rng(0xf17);
    let total = 600;
    let mut agree = 0;
    let mut yes = 0;
    for _ in 0..total {
        let n = r.gen_range(1..=10);
        let p = r.gen_range(0.05..0.35);
        let g = random_digraph(&mut r, n, p);
        let f: BTreeSet<usize> = (0..n).filter(|_| r.gen_bool(0.5)).collect();
        let brute = brute_filtrating(&g, &f);
        yes += usize::from(brute);
        agree += usize::from(is_filtrating_interval(&g, &f).is_ok() == brute);
    }
    (agree == total, format!("{agree}/{total} agree, {yes} filtrating"))
}

fn c12_serialization(builds: &BTreeMap<Behavior, Build>) -> (bool, String) {
    let mut pass = true;
    let mut notes = Vec::new();
    for (b, run) in builds {
        let report = certify(&run.tower).render();
        let same = match load(&save(&run.tower)) {
            Ok(back) => certify(&back).render() == report,
            Err(_) => false,
        };
        notes.push(format!("{b} depth {} {}", run.tower.depth(), if same { "identical" } else { "differs" }));
        pass &= same;
    }
    (pass, notes.join(", "))
}

#[test]
fn acceptance() {
    let builds: BTreeMap<Behavior, Build> = Behavior::ALL.iter().map(|&b| (b, build_deepest(b, DEPTH))).collect();
    let mut out = Vec::new();
    let (p, d) = c1_four_behaviors(&builds);
    record(&mut out, 1, p, d);
    let (p, d) = c2_expansive_oracle();
    record(&mut out, 2, p, d);
    let (p, d) = c3_odometer();
    record(&mut out, 3, p, d);
    let (p, d) = c4_diameter();
    record(&mut out, 4, p, d);
    let (p, d) = c5_lambda();
    record(&mut out, 5, p, d);
    let (p, d) = c6_multiergodic();
    record(&mut out, 6, p, d);
    let (p, d) = c7_minimality(&builds);
    record(&mut out, 7, p, d);
    let (p, d) = c8_unique_ergodicity();
    record(&mut out, 8, p, d);
    let (p, d) = c9_nontransitivity(&builds);
    record(&mut out, 9, p, d);
    let (p, d) = c10_branching();
    record(&mut out, 10, p, d);
    let (p, d) = c11_filtrating();
    record(&mut out, 11, p, d);
    let (p, d) = c12_serialization(&builds);
    record(&mut out, 12, p, d);
    let failed: Vec<String> = out.iter().filter(|o| !o.pass).map(|o| format!("{}: {}", o.id, o.detail)).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
