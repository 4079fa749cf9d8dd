//! Canonical text format for towers. Line oriented, one record per line,
//! fields separated by single spaces, rationals as `p/q`. The last line is a
//! SHA-256 digest of every byte before it.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::Digraph;
use crate::level::{Bridge, Circuit, SymbolicLevel, Tag, WindowStore};
use crate::measure::{fmt_rational, parse_rational};
use crate::tower::{Behavior, Config, Tower};
use crate::Rational;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "towers-file";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("missing digest line")]
    NoDigest,
    #[error("digest mismatch: file says {stored}, content hashes to {actual}")]
    Digest { stored: String, actual: String },
    #[error("unsupported format version {0}")]
    Version(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

fn hash_hex(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

/// Appends the digest line to a body that ends in a newline.
pub fn seal(body: &str) -> String {
    format!("{body}digest {}\n", hash_hex(body))
}

fn list(out: &mut String, key: &str, head: &[String], xs: &[usize]) {
    out.push_str(key);
    for h in head {
        out.push(' ');
        out.push_str(h);
    }
    for &x in xs {
        if x == usize::MAX {
            out.push_str(" -");
        } else {
            let _ = write!(out, " {x}");
        }
    }
    out.push('\n');
}

fn opt(x: Option<usize>) -> String {
    x.map_or("-".into(), |v| v.to_string())
}

pub fn save(t: &Tower) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "{MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(o, "behavior {}", t.behavior.name());
    let c = &t.config;
    let _ = writeln!(o, "config lambda0 {}", fmt_rational(&c.lambda0));
    let _ = writeln!(o, "config gamma {}", fmt_rational(&c.gamma));
    let _ = writeln!(o, "config period_base {}", c.period_base);
    let _ = writeln!(o, "config separation_offset {}", c.separation_offset);
    let _ = writeln!(o, "config epsilon_base {}", fmt_rational(&c.epsilon_base));
    let _ = writeln!(o, "config extra_depth {}", c.extra_depth);
    let _ = writeln!(o, "config max_alphabet {}", c.max_alphabet);
    let _ = writeln!(o, "config cycle_budget {}", c.cycle_budget);
    let _ = writeln!(o, "branching {}", t.branching);
    list(&mut o, "choices", &[], &t.choices);
    let _ = writeln!(o, "levels {}", t.levels.len());
    for (k, lv) in t.levels.iter().enumerate() {
        let _ = writeln!(o, "level {k} {}", lv.index);
        let _ = writeln!(o, "diam {}", fmt_rational(&lv.diam));
        let _ = writeln!(o, "rectangles {}", lv.len());
        if let Some(w) = &lv.windows {
            let _ = writeln!(o, "windows {} {} {} {}", w.m, w.n, w.cycle_seqs, w.seqs.len());
            for (s, (seq, pos)) in w.seqs.iter().zip(&w.positions).enumerate() {
                list(&mut o, "seq", &[s.to_string()], seq);
                list(&mut o, "pos", &[s.to_string()], pos);
            }
        }
        for v in 0..lv.len() {
            let tag = lv.tags[v].map_or("-".to_string(), |t| t.to_string());
            let mut head = vec![lv.graph.name(v).to_string(), tag];
            if let Some(w) = &lv.windows {
                let (s, off) = w.loc[v];
                head.extend([lv.parent_of[v].to_string(), s.to_string(), off.to_string()]);
            }
            list(&mut o, "vertex", &head, &[]);
            list(&mut o, "succ", &[], lv.graph.succ(v));
        }
        let _ = writeln!(o, "marked {}", t.marked[k].len());
        for walk in &t.marked[k] {
            list(&mut o, "walk", &[], walk);
        }
        let _ = writeln!(o, "designated {}", opt(t.designated[k]));
        match t.ab_rects[k] {
            Some((a, b)) => {
                let _ = writeln!(o, "ab {a} {b}");
            }
            None => o.push_str("ab -\n"),
        }
        if let Some(circ) = t.circuits.get(k) {
            let _ = writeln!(o, "circuit {} {}", circ.cycles.len(), circ.bridges.len());
            for cyc in &circ.cycles {
                list(&mut o, "cycle", &[], cyc);
            }
            for b in &circ.bridges {
                let head = [b.from, b.from_phase, b.to, b.to_phase].map(|x| x.to_string());
                list(&mut o, "bridge", &head, &b.path);
            }
        }
    }
    seal(&o)
}

struct Lines<'a> {
    it: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FormatError> {
        Err(FormatError::Syntax { line: self.line, msg: msg.into() })
    }

    /// Next line, which must start with `key`; returns the remaining fields.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>, FormatError> {
        match self.it.next() {
            Some((i, l)) => {
                self.line = i + 1;
                let mut f = l.split(' ');
                if f.next() != Some(key) {
                    return self.err(format!("expected `{key}`"));
                }
                Ok(f.collect())
            }
            None => self.err(format!("unexpected end of file, expected `{key}`")),
        }
    }

    fn peek_is(&mut self, key: &str) -> bool {
        self.it.peek().is_some_and(|(_, l)| l.split(' ').next() == Some(key))
    }

    fn num<T: FromStr>(&self, s: &str) -> Result<T, FormatError> {
        s.parse().or_else(|_| self.err(format!("bad number {s:?}")))
    }

    fn one<T: FromStr>(&mut self, key: &str) -> Result<T, FormatError> {
        let f = self.expect(key)?;
        if f.len() != 1 {
            return self.err(format!("`{key}` takes one field"));
        }
        self.num(f[0])
    }

    fn rational(&self, s: &str) -> Result<Rational, FormatError> {
        parse_rational(s).map_or_else(|| self.err(format!("bad rational {s:?}")), Ok)
    }

    fn nums(&self, fs: &[&str], bound: usize) -> Result<Vec<usize>, FormatError> {
        fs.iter()
            .map(|s| {
                let x: usize = self.num(s)?;
                if x >= bound {
                    return self.err(format!("index {x} out of range {bound}"));
                }
                Ok(x)
            })
            .collect()
    }

    fn opt_nums(&self, fs: &[&str], bound: usize) -> Result<Vec<usize>, FormatError> {
        fs.iter()
            .map(|s| if *s == "-" { Ok(usize::MAX) } else { Ok(self.nums(&[s], bound)?[0]) })
            .collect()
    }

    fn config(&mut self, key: &str) -> Result<&'a str, FormatError> {
        let f = self.expect("config")?;
        if f.len() != 2 || f[0] != key {
            return self.err(format!("expected `config {key}`"));
        }
        Ok(f[1])
    }
}

/// Verifies the digest, then parses. Index ranges are checked so a loaded
/// tower can be certified without panicking; semantic defects are left to
/// the criteria.
pub fn load(text: &str) -> Result<Tower, FormatError> {
    let body_end = text.trim_end_matches('\n').rfind('\n').map_or(0, |i| i + 1);
    let (body, last) = text.split_at(body_end);
    let stored = last.trim_end().strip_prefix("digest ").ok_or(FormatError::NoDigest)?;
    let actual = hash_hex(body);
    if stored != actual {
        return Err(FormatError::Digest { stored: stored.to_string(), actual });
    }
    let mut r = Lines { it: body.lines().enumerate().peekable(), line: 0 };

    let head = r.expect(MAGIC)?;
    if head != [FORMAT_VERSION.to_string().as_str()] {
        return Err(FormatError::Version(head.join(" ")));
    }
    let b = r.expect("behavior")?;
    let behavior = match b.as_slice() {
        [name] => Behavior::from_str(name).or_else(|_| r.err(format!("unknown behavior {name:?}")))?,
        _ => return r.err("bad behavior"),
    };
    let config = Config {
        lambda0: { let s = r.config("lambda0")?; r.rational(s)? },
        gamma: { let s = r.config("gamma")?; r.rational(s)? },
        period_base: { let s = r.config("period_base")?; r.num(s)? },
        separation_offset: { let s = r.config("separation_offset")?; r.num(s)? },
        epsilon_base: { let s = r.config("epsilon_base")?; r.rational(s)? },
        extra_depth: { let s = r.config("extra_depth")?; r.num(s)? },
        max_alphabet: { let s = r.config("max_alphabet")?; r.num(s)? },
        cycle_budget: { let s = r.config("cycle_budget")?; r.num(s)? },
    };
    let branching: bool = r.one("branching")?;
    let f = r.expect("choices")?;
    let choices = r.nums(&f, usize::MAX)?;
    let count: usize = r.one("levels")?;
    if count == 0 {
        return r.err("a tower has at least one level");
    }

    let mut levels: Vec<Arc<SymbolicLevel>> = Vec::with_capacity(count);
    let (mut circuits, mut marked, mut designated, mut ab_rects) = (vec![], vec![], vec![], vec![]);
    for k in 0..count {
        let f = r.expect("level")?;
        if f.len() != 2 || f[0] != k.to_string() {
            return r.err(format!("expected level {k}"));
        }
        let index: usize = r.num(f[1])?;
        let f = r.expect("diam")?;
        let diam = r.rational(f.first().copied().unwrap_or(""))?;
        let size: usize = r.one("rectangles")?;
        let parent_len = levels.last().map_or(0, |p| p.len());

        let mut store = None;
        if k > 0 {
            let f = r.expect("windows")?;
            if f.len() != 4 {
                return r.err("`windows` takes m n cycle_seqs sequences");
            }
            let (m, n): (usize, usize) = (r.num(f[0])?, r.num(f[1])?);
            let cycle_seqs: usize = r.num(f[2])?;
            let nseq: usize = r.num(f[3])?;
            let (mut seqs, mut positions) = (vec![], vec![]);
            for s in 0..nseq {
                let f = r.expect("seq")?;
                if f.first() != Some(&s.to_string().as_str()) {
                    return r.err(format!("expected seq {s}"));
                }
                seqs.push(r.nums(&f[1..], parent_len)?);
                let f = r.expect("pos")?;
                if f.first() != Some(&s.to_string().as_str()) {
                    return r.err(format!("expected pos {s}"));
                }
                positions.push(r.opt_nums(&f[1..], size)?);
            }
            store = Some(WindowStore { m, n, seqs, positions, loc: vec![], cycle_seqs });
        }

        let (mut names, mut tags, mut parent_of, mut edges) = (vec![], vec![], vec![], vec![]);
        for v in 0..size {
            let f = r.expect("vertex")?;
            let want = if k > 0 { 5 } else { 2 };
            if f.len() != want {
                return r.err(format!("`vertex` takes {want} fields"));
            }
            if names.last().is_some_and(|p: &String| p.as_str() >= f[0]) {
                return r.err("vertex names must be strictly increasing");
            }
            names.push(f[0].to_string());
            tags.push(match f[1] {
                "-" => None,
                "A" => Some(Tag::A),
                "B" => Some(Tag::B),
                t => return r.err(format!("bad tag {t:?}")),
            });
            if let Some(w) = store.as_mut() {
                parent_of.push(r.nums(&f[2..3], parent_len)?[0]);
                let s: usize = r.nums(&f[3..4], w.seqs.len())?[0];
                let off: usize = r.num(f[4])?;
                if off + w.m + w.n + 1 > w.seqs[s].len() {
                    return r.err(format!("window of vertex {v} runs past its sequence"));
                }
                w.loc.push((s, off));
            }
            let f = r.expect("succ")?;
            for u in r.nums(&f, size)? {
                edges.push((v, u));
            }
        }
        let graph = Digraph::from_sorted_names(names, &edges);
        levels.push(Arc::new(SymbolicLevel { index, graph, parent_of, windows: store, diam, tags }));

        let nm: usize = r.one("marked")?;
        let mut walks = vec![];
        for _ in 0..nm {
            let f = r.expect("walk")?;
            walks.push(r.nums(&f, size)?);
        }
        marked.push(walks);
        let f = r.expect("designated")?;
        designated.push(match f.as_slice() {
            ["-"] => None,
            [v] => Some(r.nums(&[v], size)?[0]),
            _ => return r.err("bad designated"),
        });
        let f = r.expect("ab")?;
        ab_rects.push(match f.as_slice() {
            ["-"] => None,
            [a, b] => {
                let x = r.nums(&[a, b], size)?;
                Some((x[0], x[1]))
            }
            _ => return r.err("bad ab"),
        });
        if r.peek_is("circuit") {
            let f = r.expect("circuit")?;
            if f.len() != 2 {
                return r.err("`circuit` takes cycles bridges");
            }
            let (nc, nb): (usize, usize) = (r.num(f[0])?, r.num(f[1])?);
            let mut cycles = vec![];
            for _ in 0..nc {
                let f = r.expect("cycle")?;
                cycles.push(r.nums(&f, size)?);
            }
            let mut bridges = vec![];
            for _ in 0..nb {
                let f = r.expect("bridge")?;
                if f.len() < 4 {
                    return r.err("`bridge` takes from phase to phase path");
                }
                let h = r.nums(&f[..4], usize::MAX)?;
                bridges.push(Bridge { from: h[0], from_phase: h[1], to: h[2], to_phase: h[3], path: r.nums(&f[4..], size)? });
            }
            circuits.push(Circuit { cycles, bridges });
        }
    }
    if let Some((i, _)) = r.it.next() {
        r.line = i + 1;
        return r.err("trailing content");
    }
    if circuits.len() + 1 != count && circuits.len() != count {
        return Err(FormatError::Syntax { line: r.line, msg: "circuit count does not match levels".into() });
    }
    Ok(Tower { behavior, config, levels, circuits, marked, designated, ab_rects, choices, branching })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tower::build_tower;

    #[test]
    fn round_trip_root_and_depth_two() {
        for d in [0, 2] {
            let t = build_tower(Behavior::MinimalExpansive, d, Config::default()).unwrap();
            let s = save(&t);
            let u = load(&s).unwrap();
            assert_eq!(u, t);
            assert_eq!(save(&u), s);
        }
    }

    #[test]
    fn digest_guards_content() {
        let t = build_tower(Behavior::MinimalExpansive, 1, Config::default()).unwrap();
        let s = save(&t).replacen("branching false", "branching true", 1);
        assert!(matches!(load(&s), Err(FormatError::Digest { .. })));
        let cut = &s[..s.rfind("digest").unwrap()];
        assert!(matches!(load(cut), Err(FormatError::NoDigest)));
    }
}
