//! Interning of equal-length windows cut from a family of sequences.
//! Double polynomial hashing modulo 2^61-1, confirmed by slice comparison.

use std::collections::HashMap;

const P: u64 = (1u64 << 61) - 1;
const B1: u64 = 1_000_003;
const B2: u64 = 998_244_353;

fn mulmod(a: u64, b: u64) -> u64 {
    let r = (a as u128) * (b as u128);
    let lo = (r as u64) & P;
    let hi = (r >> 61) as u64;
    let s = lo + hi;
    if s >= P {
        s - P
    } else {
        s
    }
}

fn addmod(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= P {
        s - P
    } else {
        s
    }
}

struct Prefix {
    h1: Vec<u64>,
    h2: Vec<u64>,
}

impl Prefix {
    fn new(seq: &[usize]) -> Self {
        let mut h1 = Vec::with_capacity(seq.len() + 1);
        let mut h2 = Vec::with_capacity(seq.len() + 1);
        h1.push(0);
        h2.push(0);
        for (i, &x) in seq.iter().enumerate() {
            let x = x as u64 + 1;
            h1.push(addmod(mulmod(h1[i], B1), x % P));
            h2.push(addmod(mulmod(h2[i], B2), x % P));
        }
        Prefix { h1, h2 }
    }

    fn window(&self, o: usize, w: usize, p1: u64, p2: u64) -> (u64, u64) {
        let a = addmod(self.h1[o + w], P - mulmod(self.h1[o], p1));
        let b = addmod(self.h2[o + w], P - mulmod(self.h2[o], p2));
        (a, b)
    }
}

/// Result of interning: for each sequence the id of the window starting at
/// each admissible offset, and for each id its first occurrence.
pub struct Interned {
    pub positions: Vec<Vec<usize>>,
    pub first: Vec<(usize, usize)>,
    /// Double hash of every distinct window.
    pub keys: Vec<(u64, u64)>,
}

/// `starts[i]` windows of length `w` are read from `seqs[i]` at offsets `0..starts[i]`.
pub fn intern(seqs: &[Vec<usize>], starts: &[usize], w: usize) -> Interned {
    let mut p1 = 1u64;
    let mut p2 = 1u64;
    for _ in 0..w {
        p1 = mulmod(p1, B1);
        p2 = mulmod(p2, B2);
    }
    let mut table: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
    let mut first: Vec<(usize, usize)> = Vec::new();
    let mut keys = Vec::new();
    let mut positions = Vec::with_capacity(seqs.len());
    for (i, seq) in seqs.iter().enumerate() {
        assert!(starts[i] == 0 || starts[i] - 1 + w <= seq.len(), "window runs past sequence end");
        let pre = Prefix::new(seq);
        let mut pos = Vec::with_capacity(starts[i]);
        for o in 0..starts[i] {
            let key = pre.window(o, w, p1, p2);
            let word = &seq[o..o + w];
            let bucket = table.entry(key).or_default();
            let found = bucket.iter().copied().find(|&id| {
                let (s, so) = first[id];
                &seqs[s][so..so + w] == word
            });
            let id = match found {
                Some(id) => id,
                None => {
                    let id = first.len();
                    first.push((i, o));
                    keys.push(key);
                    bucket.push(id);
                    id
                }
            };
            pos.push(id);
        }
        positions.push(pos);
    }
    Interned { positions, first, keys }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_windows_share_ids() {
        let seqs = vec![vec![0, 1, 0, 1, 0], vec![1, 0, 0, 1]];
        let r = intern(&seqs, &[3, 2], 3);
        assert_eq!(r.positions[0], vec![0, 1, 0]);
        assert_eq!(r.positions[1], vec![2, 3]);
        assert_eq!(r.first.len(), 4);
    }
}
