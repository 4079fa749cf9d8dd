//! Re-runs every criterion on a finished tower and names the limit
//! propositions whose hypotheses hold at every level.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::criteria;
use crate::level::{restrict_to, validate_level, SymbolicLevel, Violation};
use crate::measure::{fmt_rational, rank, MeasureVector};
use crate::tower::{Behavior, Tower};
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CriterionResult {
    pub name: &'static str,
    pub pass: bool,
    pub witness: String,
    pub lemma: &'static str,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelReport {
    pub level: usize,
    pub rectangles: usize,
    pub m: usize,
    pub n: usize,
    pub criteria: Vec<CriterionResult>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificationReport {
    pub behavior: Behavior,
    pub depth: usize,
    pub levels: Vec<LevelReport>,
    pub conclusion: Vec<&'static str>,
    pub notes: Vec<String>,
}

impl CertificationReport {
    pub fn certified(&self) -> bool {
        !self.conclusion.is_empty()
    }

    /// First failing criterion as (level, name, witness).
    pub fn first_failure(&self) -> Option<(usize, &'static str, &str)> {
        self.levels.iter().find_map(|l| {
            l.criteria.iter().find(|c| !c.pass).map(|c| (l.level, c.name, c.witness.as_str()))
        })
    }

    /// Canonical text form.
    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "behavior {}", self.behavior).unwrap();
        writeln!(s, "depth {}", self.depth).unwrap();
        for l in &self.levels {
            writeln!(s, "level {} rectangles {} m {} n {}", l.level, l.rectangles, l.m, l.n).unwrap();
            for c in &l.criteria {
                let verdict = if c.pass { "pass" } else { "FAIL" };
                writeln!(s, "  {} {} [{}] {}", c.name, verdict, c.lemma, c.witness).unwrap();
            }
        }
        for n in &self.notes {
            writeln!(s, "note {n}").unwrap();
        }
        if self.conclusion.is_empty() {
            writeln!(s, "conclusion none").unwrap();
        } else {
            writeln!(s, "conclusion {}", self.conclusion.join(" ")).unwrap();
        }
        s
    }
}

fn result(name: &'static str, lemma: &'static str, pass: bool, witness: impl Into<String>) -> CriterionResult {
    CriterionResult { name, pass, witness: witness.into(), lemma }
}

fn conclusion_of(b: Behavior) -> Vec<&'static str> {
    match b {
        Behavior::MinimalExpansive => vec!["p.minimale", "l.expansive"],
        Behavior::MinimalMultiErgodic => vec!["p.minimale", "p.nuergodique"],
        Behavior::TransitiveNonMinimal => vec!["l.transitive"],
        Behavior::NonTransitiveUniquelyErgodic => vec!["l.nontr", "l.urgo"],
    }
}

fn walk_measures(level: &SymbolicLevel, k: usize, walks: &[Vec<usize>]) -> Vec<MeasureVector> {
    walks.iter().map(|w| MeasureVector::on_walk(k, level.len(), w)).collect()
}

fn common(t: &Tower, k: usize, out: &mut Vec<CriterionResult>) {
    let level = &t.levels[k];
    let parent = if k == 0 { None } else { Some(&*t.levels[k - 1]) };
    let violations = validate_level(level, parent, &t.config.gamma);
    let (diam, other): (Vec<&Violation>, Vec<&Violation>) =
        violations.iter().partition(|v| matches!(v, Violation::Diameter));
    out.push(result(
        "nesting",
        "d.chaine",
        other.is_empty(),
        other.first().map_or(String::new(), |v| v.to_string()),
    ));
    out.push(result(
        "diameter",
        "p.chainrecurrence",
        diam.is_empty(),
        format!("diam {} bound gamma^{k}", fmt_rational(&level.diam)),
    ));
    let ct = criteria::check_chain_transitive(level);
    out.push(result("chain-transitive", "p.chainrecurrence", ct, if ct { "" } else { "several strong components" }));
    if k > 0 {
        let p = criteria::min_period(level);
        let need = t.config.period(k);
        let ok = p.is_some_and(|p| p >= need);
        let shown = p.map_or("none".to_string(), |p| p.to_string());
        out.push(result("min-period", "l.mini-peri", ok, format!("girth {shown} N {need}")));
    }
}

fn minimality(t: &Tower, k: usize, out: &mut Vec<CriterionResult>) {
    if k == 0 {
        return;
    }
    let (child, parent) = (&t.levels[k], &t.levels[k - 1]);
    match criteria::check_minimality(child, parent) {
        Ok(table) => out.push(result("minimality", "l.first-time", true, format!("max first hit {}", table.max_first_hit()))),
        Err(f) => out.push(result(
            "minimality",
            "l.first-time",
            false,
            format!("{} never reaches {}", child.graph.name(f.v), parent.graph.name(f.missing)),
        )),
    }
}

fn expansive(t: &Tower, k: usize, out: &mut Vec<CriterionResult>) {
    if k == 0 {
        return;
    }
    let (child, parent) = (&t.levels[k], &t.levels[k - 1]);
    match criteria::check_expansive_chains(child, parent) {
        Ok(()) => out.push(result("expansive", "l.circuit-expansive", true, "")),
        Err((u, v)) => out.push(result(
            "expansive",
            "l.circuit-expansive",
            false,
            format!("{} and {} never separate", child.graph.name(u), child.graph.name(v)),
        )),
    }
}

fn multiergodic(t: &Tower, k: usize, out: &mut Vec<CriterionResult>) {
    if k == 0 {
        return;
    }
    let level = &t.levels[k];
    let marked = &t.marked[k];
    let count_ok = marked.len() == k;
    out.push(result("marked-count", "p.nuergodique", count_ok, format!("{} marked cycles", marked.len())));
    let closed = marked.iter().all(|c| {
        !c.is_empty() && (0..c.len()).all(|i| level.graph.has_edge(c[i], c[(i + 1) % c.len()]))
    });
    out.push(result("marked-cycles", "p.nuergodique", closed, if closed { "" } else { "a marked walk uses a non-edge" }));
    if !count_ok || !closed {
        return;
    }
    let levels = &t.levels[..=k];
    let here = walk_measures(level, k, marked);
    let r = rank(&here.iter().map(|m| m.weights.clone()).collect::<Vec<_>>());
    out.push(result("independence", "l.inde", r == k, format!("rank {r} of {k}")));
    let rho = match criteria::rho(levels, &here) {
        Ok(r) => r,
        Err(e) => {
            out.push(result("marked-diameter", "p.nuergodique", false, e.to_string()));
            return;
        }
    };
    let mut bound: Rational = rho.clone();
    for _ in 0..=k {
        bound *= &t.config.lambda0;
    }
    let mut worst = None;
    for (i, c) in marked.iter().enumerate() {
        let set: BTreeSet<usize> = c.iter().copied().collect();
        let d = restrict_to(level, &set)
            .map_err(|e| e.to_string())
            .and_then(|sub| criteria::ergodic_diameter(&sub, t.config.cycle_budget).map_err(|e| e.to_string()));
        match d {
            Ok(d) if d.value < bound => {}
            Ok(d) => {
                worst.get_or_insert(format!("cycle {i}: {} not below {}", fmt_rational(&d.value), fmt_rational(&bound)));
            }
            Err(e) => {
                worst.get_or_insert(format!("cycle {i}: {e}"));
            }
        }
    }
    out.push(result(
        "marked-diameter",
        "p.nuergodique",
        worst.is_none(),
        worst.unwrap_or_else(|| format!("below {}", fmt_rational(&bound))),
    ));
    if k >= 2 {
        let prev = walk_measures(&t.levels[k - 1], k - 1, &t.marked[k - 1]);
        match criteria::check_measure_drift(levels, &prev, &here, &t.config.lambda0) {
            Ok(rep) => {
                let worst = rep.drifts.iter().max().cloned().unwrap_or_default();
                out.push(result(
                    "drift",
                    "p.nuergodique",
                    rep.ok,
                    format!("max {} bound {}", fmt_rational(&worst), fmt_rational(&rep.bound)),
                ));
            }
            Err(e) => out.push(result("drift", "p.nuergodique", false, e.to_string())),
        }
        let families: Vec<Vec<MeasureVector>> =
            (1..=k).map(|j| walk_measures(&t.levels[j], j, &t.marked[j])).collect();
        match criteria::check_cumulative_drift(levels, &families) {
            Ok(Ok(())) => out.push(result("cumulative-drift", "l.nuergodique", true, "")),
            Ok(Err((n, i, later))) => out.push(result(
                "cumulative-drift",
                "l.nuergodique",
                false,
                format!("cycle {i} of level {n} drifts too far by level {later}"),
            )),
            Err(e) => out.push(result("cumulative-drift", "l.nuergodique", false, e.to_string())),
        }
    }
}

fn transitive(t: &Tower, k: usize, out: &mut Vec<CriterionResult>) {
    let level = &t.levels[k];
    match criteria::check_trapped_cycles(level) {
        Ok((a, b)) => out.push(result("trapped-cycles", "l.transitive", true, format!("lengths {} {}", a.len(), b.len()))),
        Err(tag) => out.push(result("trapped-cycles", "l.transitive", false, format!("no cycle inside {tag}"))),
    }
    if k == 0 {
        return;
    }
    let Some(c) = t.designated[k] else {
        out.push(result("stable-transitive", "l.stab-tran", false, "no designated rectangle"));
        return;
    };
    match criteria::check_stable_transitive(level, &t.levels[k - 1], c) {
        Ok(tab) => out.push(result(
            "stable-transitive",
            "l.stab-tran",
            true,
            format!(
                "C {} i+ max {} i- max {}",
                level.graph.name(c),
                tab.i_plus.iter().max().unwrap_or(&0),
                tab.i_minus.iter().max().unwrap_or(&0)
            ),
        )),
        Err(f) => out.push(result("stable-transitive", "l.stab-tran", false, format!("clause ({}) {f:?}", f.clause()))),
    }
}

fn nontransitive(t: &Tower, k: usize, out: &mut Vec<CriterionResult>) {
    let level = &t.levels[k];
    let Some((a, b)) = t.ab_rects[k] else {
        out.push(result("separation", "l.nontr", false, "no A/B rectangles"));
        return;
    };
    if k > 0 {
        let unique = match t.ab_rects[k - 1] {
            Some((pa, pb)) => {
                criteria::children_in(level, pa) == vec![a] && criteria::children_in(level, pb) == vec![b]
            }
            None => false,
        };
        out.push(result("unique-child", "l.nontr", unique, if unique { "" } else { "A or B does not hold one rectangle" }));
    }
    let m = t.config.separation(k);
    match criteria::check_nontransitive_separation(level, a, b, m) {
        Ok(()) => out.push(result("separation", "l.nontr", true, format!("no chain of length <= {m}"))),
        Err((u, v, len)) => out.push(result(
            "separation",
            "l.nontr",
            false,
            format!("{} reaches {} in {len}", level.graph.name(u), level.graph.name(v)),
        )),
    }
    let eps = t.config.epsilon(k);
    match criteria::ergodic_diameter(level, t.config.cycle_budget) {
        Ok(d) => out.push(result(
            "ergodic-diameter",
            "l.urgo",
            d.value <= eps,
            format!("{} bound {}", fmt_rational(&d.value), fmt_rational(&eps)),
        )),
        Err(e) => out.push(result("ergodic-diameter", "l.urgo", false, e.to_string())),
    }
}

pub fn certify(t: &Tower) -> CertificationReport {
    let mut levels = Vec::new();
    for k in 0..t.levels.len() {
        let mut c = Vec::new();
        common(t, k, &mut c);
        match t.behavior {
            Behavior::MinimalExpansive => {
                minimality(t, k, &mut c);
                expansive(t, k, &mut c);
            }
            Behavior::MinimalMultiErgodic => {
                minimality(t, k, &mut c);
                multiergodic(t, k, &mut c);
            }
            Behavior::TransitiveNonMinimal => transitive(t, k, &mut c),
            Behavior::NonTransitiveUniquelyErgodic => nontransitive(t, k, &mut c),
        }
        let l = &t.levels[k];
        levels.push(LevelReport { level: k, rectangles: l.len(), m: l.m(), n: l.n(), criteria: c });
    }
    let all = levels.iter().all(|l| l.criteria.iter().all(|c| c.pass));
    CertificationReport {
        behavior: t.behavior,
        depth: t.depth(),
        levels,
        conclusion: if all { conclusion_of(t.behavior) } else { vec![] },
        notes: vec!["support: each level is built from windows of the previous level's circuit".to_string()],
    }
}
