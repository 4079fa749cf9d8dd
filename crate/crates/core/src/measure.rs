//! Vertex marginals, the cross-level metric and the constants governing
//! admissible measure drift.

use std::borrow::Borrow;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::MeasureError;
use crate::level::SymbolicLevel;
use crate::Rational;

/// Probability vector on the rectangles of level `level`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeasureVector {
    pub level: usize,
    pub weights: Vec<Rational>,
}

impl MeasureVector {
    pub fn new(level: usize, weights: Vec<Rational>) -> Result<Self, MeasureError> {
        if weights.iter().any(|w| w.is_negative()) {
            return Err(MeasureError::NotProbability);
        }
        let total: Rational = weights.iter().sum();
        if !total.is_one() {
            return Err(MeasureError::NotProbability);
        }
        Ok(MeasureVector { level, weights })
    }

    pub fn dirac(level: usize, size: usize, v: usize) -> Self {
        let mut w = vec![Rational::zero(); size];
        w[v] = Rational::one();
        MeasureVector { level, weights: w }
    }

    /// Uniform measure along a closed walk, counting multiplicity.
    pub fn on_walk(level: usize, size: usize, walk: &[usize]) -> Self {
        let mut counts = vec![0u64; size];
        for &v in walk {
            counts[v] += 1;
        }
        Self::from_counts(level, &counts)
    }

    pub fn from_counts(level: usize, counts: &[u64]) -> Self {
        let total: u64 = counts.iter().sum();
        let t = BigInt::from(total);
        let weights = counts
            .iter()
            .map(|&c| Rational::new(BigInt::from(c), t.clone()))
            .collect();
        MeasureVector { level, weights }
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&v| !self.weights[v].is_zero()).collect()
    }
}

/// Sum of child weights onto parents, `levels[k]` being level `k`.
pub fn push<L: Borrow<SymbolicLevel>>(levels: &[L], mu: &MeasureVector, k: usize) -> MeasureVector {
    assert!(k <= mu.level, "cannot push to a finer level");
    let mut w = mu.weights.clone();
    for j in (k + 1..=mu.level).rev() {
        let lvl = levels[j].borrow();
        let mut up = vec![Rational::zero(); levels[j - 1].borrow().len()];
        for (v, x) in w.iter().enumerate() {
            if !x.is_zero() {
                up[lvl.parent_of[v]] += x;
            }
        }
        w = up;
    }
    MeasureVector { level: k, weights: w }
}

/// Total variation, half the L1 distance.
pub fn tv(a: &[Rational], b: &[Rational]) -> Rational {
    let s: Rational = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    s / Rational::from_integer(2.into())
}

/// `Σ_{k ≤ min level} 2^{-k} TV_k(push_k μ, push_k ν)`.
pub fn metric_d<L: Borrow<SymbolicLevel>>(levels: &[L], mu: &MeasureVector, nu: &MeasureVector) -> Rational {
    let top = mu.level.min(nu.level);
    let mut pm = push(levels, mu, top);
    let mut pn = push(levels, nu, top);
    let mut total = Rational::zero();
    for k in (0..=top).rev() {
        if k < top {
            pm = push(levels, &pm, k);
            pn = push(levels, &pn, k);
        }
        let weight = Rational::new(BigInt::one(), BigInt::one() << k);
        total += weight * tv(&pm.weights, &pn.weights);
    }
    total
}

/// Rank of a list of rational vectors.
pub fn rank(rows: &[Vec<Rational>]) -> usize {
    let mut a: Vec<Vec<Rational>> = rows.to_vec();
    let cols = a.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..a.len()).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        let piv = a[r][c].clone();
        let pr: Vec<Rational> = a[r].iter().map(|x| x / &piv).collect();
        for (i, row) in a.iter_mut().enumerate() {
            if i != r && !row[c].is_zero() {
                let f = row[c].clone();
                for (x, y) in row.iter_mut().zip(&pr) {
                    *x -= &f * y;
                }
            }
        }
        a[r] = pr;
        r += 1;
        if r == a.len() {
            break;
        }
    }
    r
}

/// Radius below which every perturbation of the tuple stays linearly
/// independent. Exact for two measures, a certified lower bound beyond.
pub fn independence_radius<L: Borrow<SymbolicLevel>>(
    levels: &[L],
    measures: &[MeasureVector],
) -> Result<Rational, MeasureError> {
    if measures.len() < 2 {
        return Err(MeasureError::TooFewMeasures);
    }
    let top = measures[0].level;
    if measures.iter().any(|m| m.level != top) {
        return Err(MeasureError::MixedLevels);
    }
    let rows: Vec<Vec<Rational>> = measures.iter().map(|m| m.weights.clone()).collect();
    if rank(&rows) < measures.len() {
        return Err(MeasureError::Dependent);
    }
    if measures.len() == 2 {
        return Ok(metric_d(levels, &measures[0], &measures[1]) / Rational::from_integer(2.into()));
    }
    // On level K, a set carrying mass p_i of μ_i and none of the others
    // survives any TV perturbation below p_i / k; 𝔡 dominates 2^{-K} TV_K.
    let k = BigInt::from(measures.len());
    let mut best = Rational::zero();
    for lvl in 0..=top {
        let pushed: Vec<MeasureVector> = measures.iter().map(|m| push(levels, m, lvl)).collect();
        let mut worst: Option<Rational> = None;
        for (i, mi) in pushed.iter().enumerate() {
            let private: Rational = (0..mi.weights.len())
                .filter(|&v| pushed.iter().enumerate().all(|(j, mj)| j == i || mj.weights[v].is_zero()))
                .map(|v| mi.weights[v].clone())
                .sum();
            worst = Some(match worst {
                Some(w) if w <= private => w,
                _ => private,
            });
        }
        let r = worst.unwrap() / Rational::from_integer(k.clone())
            / Rational::from_integer(BigInt::one() << lvl);
        if r > best {
            best = r;
        }
    }
    Ok(best)
}

/// Number of exact factors in the certified product.
pub const LAMBDA_TERMS: u32 = 64;

/// Certified upper bound on `∏_{i≥1}(1+λ^i) · Σ_{i≥1} λ^i`.
/// Partial product to 64 terms; the tail contributes at most `exp(τ)` with
/// `τ = λ^65/(1-λ)`, and `exp(τ) ≤ 1/(1-τ)`.
pub fn lambda0_bound(lambda: &Rational) -> Result<Rational, MeasureError> {
    let one = Rational::one();
    if !lambda.is_positive() || *lambda >= one {
        return Err(MeasureError::LambdaRange);
    }
    let mut prod = one.clone();
    let mut pw = one.clone();
    for _ in 0..LAMBDA_TERMS {
        pw = &pw * lambda;
        prod *= &one + &pw;
    }
    let tau = &pw * lambda / (&one - lambda);
    let tail = &one / (&one - &tau);
    Ok(prod * tail * lambda / (&one - lambda))
}

pub fn lambda0_valid(lambda: &Rational) -> bool {
    match lambda0_bound(lambda) {
        Ok(b) => b <= Rational::new(1.into(), 2.into()),
        Err(_) => false,
    }
}

pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            if q.is_zero() {
                None
            } else {
                Some(Rational::new(p, q))
            }
        }
        None => s.parse::<BigInt>().ok().map(Rational::from_integer),
    }
}

pub fn fmt_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}
