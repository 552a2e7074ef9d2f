//! Set partitions of `[m]` in restricted-growth-string order.
//!
//! A partition of the positions `0..m` is stored as its restricted growth
//! string (RGS): `rgs[p]` is the block label of position `p`, labels are
//! assigned in order of first appearance so `rgs[0] == 0` and
//! `rgs[p] <= 1 + max(rgs[..p])`. Lexicographic order of the RGS is the
//! canonical order; it fixes the layout of every coefficient vector in this
//! crate and must never change.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Default cap on the arity of enumerated partitions; `bell(8) = 4140`.
pub const DEFAULT_ARITY_CAP: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetPartition {
    rgs: Vec<u8>,
}

impl SetPartition {
    /// Builds a partition from a restricted growth string, validating it.
    pub fn from_rgs(rgs: &[u8]) -> Result<Self> {
        let mut next = 0u8;
        for (p, &label) in rgs.iter().enumerate() {
            if label > next {
                return Err(Error::InvalidPartition(format!(
                    "label {label} at position {p} skips ahead of {next}"
                )));
            }
            if label == next {
                next += 1;
            }
        }
        Ok(Self { rgs: rgs.to_vec() })
    }

    /// Builds a partition from 0-based blocks. Blocks may come in any order;
    /// the result is canonical.
    pub fn from_blocks(m: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut owner = vec![usize::MAX; m];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &p in block {
                if p >= m {
                    return Err(Error::InvalidPartition(format!(
                        "position {p} outside 0..{m}"
                    )));
                }
                if owner[p] != usize::MAX {
                    return Err(Error::InvalidPartition(format!(
                        "position {p} appears in two blocks"
                    )));
                }
                owner[p] = b;
            }
        }
        if owner.contains(&usize::MAX) {
            return Err(Error::InvalidPartition(
                "blocks do not cover every position".into(),
            ));
        }
        Ok(pattern_of(&owner))
    }

    pub fn empty() -> Self {
        Self { rgs: Vec::new() }
    }

    pub fn arity(&self) -> usize {
        self.rgs.len()
    }

    pub fn rgs(&self) -> &[u8] {
        &self.rgs
    }

    pub fn num_blocks(&self) -> usize {
        self.rgs.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    pub fn block_of(&self, position: usize) -> usize {
        self.rgs[position] as usize
    }

    /// Blocks as sorted lists of 0-based positions, ordered by minimum element.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.num_blocks()];
        for (p, &l) in self.rgs.iter().enumerate() {
            blocks[l as usize].push(p);
        }
        blocks
    }

    /// True when every block of `self` lies inside a block of `other`.
    pub fn refines(&self, other: &SetPartition) -> bool {
        if self.arity() != other.arity() {
            return false;
        }
        let mut image = vec![u8::MAX; self.num_blocks()];
        for (a, b) in self.rgs.iter().zip(&other.rgs) {
            let slot = &mut image[*a as usize];
            if *slot == u8::MAX {
                *slot = *b;
            } else if *slot != *b {
                return false;
            }
        }
        true
    }

    /// Restriction to a subset of positions (in the given order), re-canonicalized.
    pub fn restrict(&self, positions: &[usize]) -> SetPartition {
        let labels: Vec<usize> = positions.iter().map(|&p| self.block_of(p)).collect();
        pattern_of(&labels)
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.rgs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for SetPartition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::empty());
        }
        let rgs = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u8>()
                    .map_err(|e| Error::InvalidPartition(format!("bad label {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rgs(&rgs)
    }
}

/// All partitions of `[m]` in canonical order, with the default arity cap.
pub fn enumerate_partitions(m: usize) -> Result<Vec<SetPartition>> {
    enumerate_partitions_capped(m, DEFAULT_ARITY_CAP)
}

pub fn enumerate_partitions_capped(m: usize, cap: usize) -> Result<Vec<SetPartition>> {
    if m > cap {
        return Err(Error::ArityTooLarge { arity: m, cap });
    }
    if m == 0 {
        return Ok(vec![SetPartition::empty()]);
    }
    let mut out = Vec::new();
    let mut rgs = vec![0u8; m];
    // prefix_max[p] = max label over rgs[..=p]
    let mut prefix_max = vec![0u8; m];
    loop {
        out.push(SetPartition { rgs: rgs.clone() });
        // rightmost position that can still be incremented
        let mut p = m - 1;
        loop {
            if p == 0 {
                return Ok(out);
            }
            if rgs[p] <= prefix_max[p - 1] {
                break;
            }
            p -= 1;
        }
        rgs[p] += 1;
        prefix_max[p] = prefix_max[p - 1].max(rgs[p]);
        for q in p + 1..m {
            rgs[q] = 0;
            prefix_max[q] = prefix_max[p];
        }
    }
}

/// Bell number `b(m)`, from the Bell triangle.
pub fn bell(m: usize) -> Result<u64> {
    // b(25) is the largest Bell number that fits in a u64.
    if m > 25 {
        return Err(Error::ArityTooLarge { arity: m, cap: 25 });
    }
    let mut row = vec![1u64];
    for _ in 0..m {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for v in &row {
            let prev = *next.last().unwrap();
            next.push(prev + v);
        }
        row = next;
    }
    Ok(row[0])
}

/// Equality pattern of an index tuple: positions share a block iff their
/// entries are equal.
pub fn pattern_of<T: PartialEq>(tuple: &[T]) -> SetPartition {
    let mut rgs = Vec::with_capacity(tuple.len());
    let mut firsts: Vec<usize> = Vec::new();
    for (p, v) in tuple.iter().enumerate() {
        match firsts.iter().position(|&q| tuple[q] == *v) {
            Some(label) => rgs.push(label as u8),
            None => {
                rgs.push(firsts.len() as u8);
                firsts.push(p);
            }
        }
    }
    SetPartition { rgs }
}

/// Rank of a partition in the canonical order of its arity.
pub fn partition_index(p: &SetPartition) -> usize {
    Ranker::new(p.arity()).rank(p.rgs())
}

/// Table of restricted-growth completion counts, used to rank an RGS in
/// lexicographic order without enumerating.
///
/// `completions[r][j]` counts the ways to extend a prefix that already uses
/// `j` labels by `r` further positions.
#[derive(Clone, Debug)]
pub struct Ranker {
    m: usize,
    completions: Vec<Vec<usize>>,
}

impl Ranker {
    pub fn new(m: usize) -> Self {
        let width = m + 2;
        let mut completions = vec![vec![1usize; width]; m + 1];
        for r in 1..=m {
            for j in 0..width - 1 {
                completions[r][j] = j * completions[r - 1][j] + completions[r - 1][j + 1];
            }
        }
        Self { m, completions }
    }

    pub fn arity(&self) -> usize {
        self.m
    }

    /// Contribution of label `label` at position `pos` when the prefix uses
    /// `used` labels. Summing over positions gives the rank.
    #[inline]
    pub fn step(&self, pos: usize, used: usize, label: usize) -> usize {
        label * self.completions[self.m - pos - 1][used]
    }

    pub fn rank(&self, rgs: &[u8]) -> usize {
        debug_assert_eq!(rgs.len(), self.m);
        let mut used = 0usize;
        let mut rank = 0usize;
        for (pos, &l) in rgs.iter().enumerate() {
            let l = l as usize;
            rank += self.step(pos, used, l);
            if l == used {
                used += 1;
            }
        }
        rank
    }
}
