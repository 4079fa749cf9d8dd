use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use towers::certify::certify;
use towers::error::TowerError;
use towers::format::{load, save};
use towers::limit::{self, LimitPoint, Row};
use towers::measure::{fmt_rational, metric_d, parse_rational};
use towers::tower::{branch_tree, build_tower, Behavior, Config, Tower};
use towers::Rational;

#[derive(Parser)]
#[command(name = "towers", version, about = "Build, certify and simulate towers of filtrating Markov partitions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a tower (or a binary branch tree) and write it to a file.
    Build(BuildArgs),
    /// Certify a tower file; exits 0 iff the report reaches a conclusion.
    Check {
        file: PathBuf,
        /// Report destination (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a probe on seeded points of a tower and write CSV.
    Simulate(SimArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// minimal-expansive, minimal-multiergodic, transitive-nonminimal or nontransitive-uniquely-ergodic
    #[arg(long)]
    behavior: String,
    #[arg(long)]
    depth: usize,
    #[arg(long, default_value = "1/4")]
    lambda0: String,
    #[arg(long, default_value = "1/2")]
    gamma: String,
    /// N(k) = base * 2^k
    #[arg(long, default_value_t = 2)]
    schedule_period_base: usize,
    /// M(k) = k + offset
    #[arg(long, default_value_t = 1)]
    schedule_separation_offset: usize,
    /// epsilon(k) = base * 2^-k
    #[arg(long, default_value = "1")]
    schedule_epsilon_base: String,
    /// Added to the window depths chosen by the constructors.
    #[arg(long, default_value_t = 0)]
    schedule_extra_depth: usize,
    #[arg(long, default_value_t = 100_000)]
    max_alphabet: usize,
    #[arg(long, env = "TOWERS_CYCLE_BUDGET", default_value_t = towers::graph::DEFAULT_CYCLE_BUDGET)]
    cycle_budget: usize,
    /// Build the binary branch tree; --out names a directory of leaf towers.
    #[arg(long)]
    branch: bool,
    /// Destination (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Probe {
    Minimality,
    Expansivity,
    Nontransitivity,
    Measure,
    Itinerary,
}

#[derive(Args)]
struct SimArgs {
    file: PathBuf,
    #[arg(long, value_enum)]
    probe: Probe,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeded orbits (point pairs for the expansivity probe; the
    /// itinerary probe follows only the first seed).
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// Steps per orbit; the minimality probe defaults to its certified bound.
    #[arg(long)]
    horizon: Option<usize>,
    /// Level read by the minimality probe (default: min(3, depth - 1)).
    #[arg(long)]
    level: Option<usize>,
    /// CSV destination (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn rational(flag: &str, s: &str) -> Result<Rational> {
    parse_rational(s).ok_or_else(|| usage(format!("--{flag}: not a rational: {s:?}")))
}

fn emit(out: Option<&Path>, text: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().write_all(text).context("writing stdout"),
    }
}

fn read_tower(path: &Path) -> Result<Tower> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    load(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn build(a: BuildArgs) -> Result<u8> {
    let behavior: Behavior = a.behavior.parse().map_err(|e: TowerError| usage(e.to_string()))?;
    let config = Config {
        lambda0: rational("lambda0", &a.lambda0)?,
        gamma: rational("gamma", &a.gamma)?,
        period_base: a.schedule_period_base,
        separation_offset: a.schedule_separation_offset,
        epsilon_base: rational("schedule-epsilon-base", &a.schedule_epsilon_base)?,
        extra_depth: a.schedule_extra_depth,
        max_alphabet: a.max_alphabet,
        cycle_budget: a.cycle_budget,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let fail = |e: TowerError| -> Result<u8> {
        match e {
            TowerError::Config(_) | TowerError::NoBranching(_) => Err(usage(e.to_string())),
            e => {
                eprintln!("build failed: {e}");
                Ok(1)
            }
        }
    };
    if a.branch {
        let dir = a.out.ok_or_else(|| usage("--branch needs --out DIR"))?;
        let tree = match branch_tree(behavior, a.depth, config) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (path, t) in &tree.leaves {
            let name: String = path.iter().map(|c| c.to_string()).collect();
            let file = dir.join(format!("leaf-{name}.tower"));
            emit(Some(&file), save(t).as_bytes())?;
        }
        eprintln!("wrote {} leaves to {}", tree.leaves.len(), dir.display());
        return Ok(0);
    }
    match build_tower(behavior, a.depth, config) {
        Ok(t) => {
            emit(a.out.as_deref(), save(&t).as_bytes())?;
            Ok(0)
        }
        Err(e) => fail(e),
    }
}

fn check(file: &Path, out: Option<&Path>) -> Result<u8> {
    let t = read_tower(file)?;
    let report = certify(&t);
    emit(out, report.render().as_bytes())?;
    if report.certified() {
        Ok(0)
    } else {
        if let Some((level, name, witness)) = report.first_failure() {
            eprintln!("level {level}: {name} failed: {witness}");
        }
        Ok(1)
    }
}

fn csv_bytes(rows: &[Row]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    limit::write_csv(&mut buf, rows)?;
    Ok(buf)
}

fn simulate(a: SimArgs) -> Result<u8> {
    let t = read_tower(&a.file)?;
    let compatible = match a.probe {
        Probe::Minimality => matches!(t.behavior, Behavior::MinimalExpansive | Behavior::MinimalMultiErgodic),
        Probe::Expansivity => t.behavior == Behavior::MinimalExpansive,
        Probe::Nontransitivity => t.behavior == Behavior::NonTransitiveUniquelyErgodic,
        Probe::Measure | Probe::Itinerary => true,
    };
    if !compatible {
        return Err(usage(format!("{} probe does not apply to {} towers", probe_name(a.probe), t.behavior)));
    }
    if !certify(&t).certified() {
        return Err(usage("tower does not certify; run `check` for details"));
    }
    let d = t.depth();
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds).collect();
    let mut rows = Vec::new();
    let inconsistencies;
    let summary;
    match a.probe {
        Probe::Minimality => {
            let k = a.level.unwrap_or(3.min(d.saturating_sub(1)));
            let bound = t
                .levels
                .get(k + 1)
                .and_then(|c| towers::criteria::check_minimality(c, &t.levels[k]).ok())
                .map_or(0, |m| m.max_first_hit());
            let p = limit::minimality_probe(&t, d, k, &seeds, a.horizon.unwrap_or(bound))
                .map_err(|e| usage(e.to_string()))?;
            // One row per rectangle: latest first visit over all orbits, and
            // how many orbits reached it within the bound.
            let size = t.levels[k].len();
            let (mut latest, mut hits) = (vec![-1i64; size], vec![0u64; size]);
            for &(_, v, first) in &p.visits {
                if let Some(f) = first {
                    latest[v] = latest[v].max(f as i64);
                    if f <= p.bound {
                        hits[v] += 1;
                    }
                }
            }
            for v in 0..size {
                let name = t.levels[k].graph.name(v).to_string();
                rows.push(Row { time: latest[v], level: k, rectangle: name, count: hits[v] });
            }
            inconsistencies = p.violations;
            summary = format!(
                "minimality: {} orbits, level {k}, bound {}, max first visit {}, margin {}, {} inconsistencies",
                seeds.len(),
                p.bound,
                p.max_observed,
                p.margin(),
                p.violations
            );
        }
        Probe::Expansivity => {
            let h = a.horizon.unwrap_or(1000);
            let (mut deeper, mut none) = (0, 0);
            for &s in &seeds {
                let mut p = LimitPoint::from_seed(&t, d, 2 * s)?;
                let mut q = LimitPoint::from_seed(&t, d, 2 * s + 1)?;
                match limit::expansivity_probe(&mut p, &mut q, h) {
                    Some((time, level)) => {
                        if level > 0 {
                            deeper += 1;
                        }
                        let name = t.levels[level].graph.name(p.itinerary(level, time, time + 1)[0]).to_string();
                        rows.push(Row { time, level, rectangle: name, count: 1 });
                    }
                    None => none += 1,
                }
            }
            inconsistencies = 0;
            summary = format!(
                "expansivity: {} pairs, {} separated at level 0, {deeper} only deeper, {none} identical within {h}",
                seeds.len(),
                seeds.len() - deeper - none
            );
        }
        Probe::Nontransitivity => {
            let p = limit::nontransitivity_probe(&t, &seeds, a.horizon.unwrap_or(t.config.separation(d)))
                .map_err(|e| usage(e.to_string()))?;
            let (_, b) = t.ab_rects[d].expect("certified nontransitive tower has A/B");
            rows.push(Row {
                time: p.horizon as i64,
                level: d,
                rectangle: t.levels[d].graph.name(b).to_string(),
                count: p.b_entries as u64,
            });
            inconsistencies = p.b_entries;
            summary = format!("nontransitivity: {}", p.summary());
        }
        Probe::Measure => {
            let h = a.horizon.unwrap_or(10_000);
            let mut ms = Vec::new();
            for &s in &seeds {
                let mut p = LimitPoint::from_seed(&t, d, s)?;
                let st = p.stats(h);
                rows.extend(limit::count_rows(&t, &st).into_iter().filter(|r| r.level == d));
                ms.push(st.measure(d));
            }
            let mut worst = Rational::from_integer(0.into());
            for i in 0..ms.len() {
                for j in i + 1..ms.len() {
                    worst = worst.max(metric_d(&t.levels, &ms[i], &ms[j]));
                }
            }
            inconsistencies = 0;
            summary = format!("measure: {} orbits of {h} steps at depth {d}, max pairwise distance {}", seeds.len(), fmt_rational(&worst));
        }
        Probe::Itinerary => {
            let h = a.horizon.unwrap_or(100);
            let mut p = LimitPoint::from_seed(&t, d, a.seed)?;
            rows = limit::itinerary_rows(&mut p, h);
            inconsistencies = 0;
            summary = format!("itinerary: seed {}, {h} steps", a.seed);
        }
    }
    emit(a.out.as_deref(), &csv_bytes(&rows)?)?;
    // keep stdout clean when the CSV goes there
    if a.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(if inconsistencies == 0 { 0 } else { 1 })
}

fn probe_name(p: Probe) -> &'static str {
    match p {
        Probe::Minimality => "minimality",
        Probe::Expansivity => "expansivity",
        Probe::Nontransitivity => "nontransitivity",
        Probe::Measure => "measure",
        Probe::Itinerary => "itinerary",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Build(a) => build(a),
        Cmd::Check { file, out } => check(&file, out.as_deref()),
        Cmd::Simulate(a) => simulate(a),
    };
    match r {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
