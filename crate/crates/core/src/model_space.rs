//! Models as inclusion masks over the selectable columns of a stage.
//!
//! Bit `i` of a mask corresponds to column `i` of the stage's design block, in
//! design-matrix order. The intercept is never part of a mask; it is always in
//! the model. Masks serialize as `K`-character `0`/`1` strings with the leftmost
//! character standing for the first selectable column.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Largest `K` for which exhaustive enumeration is attempted (2^25 models).
pub const DEFAULT_ENUMERATION_CAP: usize = 25;

const WORD: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InclusionMask {
    len: usize,
    words: SmallVec<[u64; 2]>,
}

impl InclusionMask {
    /// The empty model over `len` selectable columns.
    pub fn empty(len: usize) -> Self {
        let nwords = len.div_ceil(WORD);
        Self {
            len,
            words: SmallVec::from_elem(0, nwords),
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut mask = Self::empty(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            mask.set(i, b);
        }
        mask
    }

    pub fn from_indices(len: usize, included: &[usize]) -> Self {
        let mut mask = Self::empty(len);
        for &i in included {
            mask.set(i, true);
        }
        mask
    }

    /// The mask whose `K`-digit binary representation (leftmost digit = first
    /// column) equals `index`. Used by the enumerator.
    pub fn from_rank(len: usize, index: u64) -> Self {
        debug_assert!(len < 64);
        let mut mask = Self::empty(len);
        for col in 0..len {
            if (index >> (len - 1 - col)) & 1 == 1 {
                mask.set(col, true);
            }
        }
        mask
    }

    /// Inverse of [`from_rank`](Self::from_rank).
    pub fn rank(&self) -> u64 {
        debug_assert!(self.len < 64);
        self.iter_ones()
            .fold(0u64, |acc, col| acc | (1u64 << (self.len - 1 - col)))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        let bit = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= bit;
        } else {
            self.words[i / WORD] &= !bit;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    /// Copy of `self` with bit `i` flipped.
    pub fn flipped(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.flip(i);
        out
    }

    /// Number of included regressors, `k_M`.
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    pub fn indices(&self) -> Vec<usize> {
        self.iter_ones().collect()
    }

    pub fn hamming(&self, other: &Self) -> usize {
        assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }
}

impl fmt::Display for InclusionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for InclusionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InclusionMask({self})")
    }
}

impl FromStr for InclusionMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse {
                    line: 0,
                    message: format!("invalid mask character {other:?} in {s:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_bools(&bits))
    }
}

impl Serialize for InclusionMask {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InclusionMask {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One model of an enumerated or sampled space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub mask: InclusionMask,
    pub log_marginal_likelihood: f64,
    pub pmp: f64,
}

/// Log prior mass of every model under the uniform prior over 2^K models.
pub fn uniform_log_prior(k: usize) -> f64 {
    -(k as f64) * std::f64::consts::LN_2
}

/// Single-flip neighbour of `mask` with the flipped column drawn uniformly.
///
/// Panics if the mask has no columns.
pub fn propose_flip<R: Rng + ?Sized>(mask: &InclusionMask, rng: &mut R) -> InclusionMask {
    assert!(mask.len() >= 1, "cannot propose a flip over zero columns");
    let i = rng.random_range(0..mask.len());
    mask.flipped(i)
}

/// Column index to flip, drawn uniformly from `free`. `None` when nothing can move.
pub fn propose_flip_index<R: Rng + ?Sized>(free: &[usize], rng: &mut R) -> Option<usize> {
    if free.is_empty() {
        None
    } else {
        Some(free[rng.random_range(0..free.len())])
    }
}

/// Columns forced into or out of every model of a stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConstraints {
    #[serde(default)]
    pub forced_in: Vec<usize>,
    #[serde(default)]
    pub forced_out: Vec<usize>,
}

impl ModelConstraints {
    pub fn validate(&self, k: usize) -> Result<()> {
        for &i in self.forced_in.iter().chain(&self.forced_out) {
            if i >= k {
                return Err(Error::Config(format!(
                    "constrained column {i} is out of range for {k} columns"
                )));
            }
        }
        if let Some(i) = self.forced_in.iter().find(|i| self.forced_out.contains(i)) {
            return Err(Error::Config(format!(
                "column {i} is both forced in and forced out"
            )));
        }
        Ok(())
    }

    /// Columns a flip proposal may touch.
    pub fn free_columns(&self, k: usize) -> Vec<usize> {
        (0..k)
            .filter(|i| !self.forced_in.contains(i) && !self.forced_out.contains(i))
            .collect()
    }

    /// Starting mask: only the forced-in columns.
    pub fn initial_mask(&self, k: usize) -> InclusionMask {
        InclusionMask::from_indices(k, &self.forced_in)
    }
}

/// All 2^K masks in ascending binary order.
pub fn enumerate_all(k: usize, cap: usize) -> Result<Enumeration> {
    if k > cap || k >= 63 {
        return Err(Error::EnumerationCap { k, cap });
    }
    Ok(Enumeration {
        k,
        next: 0,
        end: 1u64 << k,
    })
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    k: usize,
    next: u64,
    end: u64,
}

impl Iterator for Enumeration {
    type Item = InclusionMask;

    fn next(&mut self) -> Option<InclusionMask> {
        if self.next == self.end {
            return None;
        }
        let mask = InclusionMask::from_rank(self.k, self.next);
        self.next += 1;
        Some(mask)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Enumeration {}
