//! The finite orthogonal Hadamard-type transform.
//!
//! The 2x2 kernel at mixing weight `lambda` sends `(a, b)` to
//! `(lambda a + s b, s a - lambda b)` with `s = sqrt(1 - lambda^2)`; the
//! depth-`n` transform is the n-fold Kronecker power of that kernel followed
//! by the bit-reversal reordering. Applied the other way round (reorder,
//! then butterflies) the same machinery inverts the transform, since the
//! kernel is symmetric and involutive.
//!
//! Output positions are indexed by polarization paths: the bits of
//! `k - 1` (most significant first) record the plus/minus branch choices
//! that produce output `k`, `k = 1..=2^n`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// A finite polarization path: branch bits, first transform level first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathSpec {
    bits: Vec<u8>,
}

impl PathSpec {
    /// Practical depth bound; 2^24 outputs is already past desk scale.
    pub const MAX_DEPTH: usize = 24;

    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.len() > Self::MAX_DEPTH {
            return Err(Error::invalid_parameter(format!(
                "path depth {} exceeds bound {}",
                bits.len(),
                Self::MAX_DEPTH
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid_parameter("path bits must be 0 or 1"));
        }
        Ok(PathSpec { bits })
    }

    pub fn empty() -> Self {
        PathSpec { bits: Vec::new() }
    }

    /// All 2^depth paths of the given depth, in index order.
    pub fn all(depth: usize) -> Result<Vec<PathSpec>> {
        if depth > Self::MAX_DEPTH {
            return Err(Error::invalid_parameter(format!("depth {depth} exceeds bound")));
        }
        Ok((0..1usize << depth)
            .map(|k| PathSpec {
                bits: (0..depth).map(|j| ((k >> (depth - 1 - j)) & 1) as u8).collect(),
            })
            .collect())
    }

    /// Path of the given depth whose 1-based output index is `index`.
    pub fn from_index(depth: usize, index: u64) -> Result<Self> {
        if depth > Self::MAX_DEPTH || index == 0 || index > (1u64 << depth) {
            return Err(Error::invalid_parameter(format!(
                "index {index} out of range for depth {depth}"
            )));
        }
        let k = index - 1;
        PathSpec::new((0..depth).map(|j| ((k >> (depth - 1 - j)) & 1) as u8).collect())
    }

    pub fn depth(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// 1-based output index: binary value of the bits, plus one.
    pub fn index(&self) -> u64 {
        let mut k = 0u64;
        for &b in &self.bits {
            k = (k << 1) | b as u64;
        }
        k + 1
    }

    /// Truncate to the first `depth` branch choices.
    pub fn prefix(&self, depth: usize) -> PathSpec {
        PathSpec { bits: self.bits[..depth.min(self.bits.len())].to_vec() }
    }

    /// Extend by the plus ("0") and minus ("1") branch respectively.
    pub fn children(&self) -> Result<(PathSpec, PathSpec)> {
        if self.bits.len() >= Self::MAX_DEPTH {
            return Err(Error::invalid_parameter(format!(
                "depth bound {} exceeded",
                Self::MAX_DEPTH
            )));
        }
        let mut plus = self.bits.clone();
        plus.push(0);
        let mut minus = self.bits.clone();
        minus.push(1);
        Ok((PathSpec { bits: plus }, PathSpec { bits: minus }))
    }
}

impl fmt::Display for PathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.bits.is_empty() {
            return write!(f, "-");
        }
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for PathSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "-" || s.is_empty() {
            return Ok(PathSpec::empty());
        }
        let bits: Result<Vec<u8>> = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::invalid_parameter(format!("bad path character '{other}'"))),
            })
            .collect();
        PathSpec::new(bits?)
    }
}

/// Mixing weight and depth of one transform instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformPlan {
    lambda: f64,
    n: usize,
}

impl TransformPlan {
    pub fn new(lambda: f64, n: usize) -> Result<Self> {
        crate::density::check_lambda(lambda)?;
        if n > PathSpec::MAX_DEPTH {
            return Err(Error::invalid_parameter(format!(
                "depth {n} exceeds bound {}",
                PathSpec::MAX_DEPTH
            )));
        }
        Ok(TransformPlan { lambda, n })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn depth(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        1usize << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Apply the transform in `O(N log N)`: butterfly stages pairing element
    /// `i` of each half-block with element `i` of the other half, then the
    /// bit-reversal reordering.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.len() {
            return Err(Error::invalid_input(format!(
                "expected vector of length {}, got {}",
                self.len(),
                x.len()
            )));
        }
        let mut v = x.to_vec();
        self.butterflies(&mut v);
        Ok(bit_reversal_permute(&v))
    }

    /// Inverse transform: reorder, then the same butterfly stages (the
    /// kernel is its own inverse).
    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.len() {
            return Err(Error::invalid_input(format!(
                "expected vector of length {}, got {}",
                self.len(),
                y.len()
            )));
        }
        let mut v = bit_reversal_permute(y);
        self.butterflies(&mut v);
        Ok(v)
    }

    fn butterflies(&self, v: &mut [f64]) {
        let s = (1.0 - self.lambda * self.lambda).sqrt();
        let n = v.len();
        let mut half = n / 2;
        while half >= 1 {
            let mut start = 0;
            while start < n {
                for i in start..start + half {
                    let a = v[i];
                    let b = v[i + half];
                    v[i] = self.lambda * a + s * b;
                    v[i + half] = s * a - self.lambda * b;
                }
                start += 2 * half;
            }
            half /= 2;
        }
    }
}

/// Indices reordered by reversing their binary representation. The
/// permutation is an involution.
pub fn bit_reversal_permute(v: &[f64]) -> Vec<f64> {
    debug_assert!(v.len().is_power_of_two());
    let bits = v.len().trailing_zeros();
    let mut out = vec![0.0; v.len()];
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = v[reverse_bits(j, bits)];
    }
    out
}

#[inline]
fn reverse_bits(x: usize, bits: u32) -> usize {
    let mut r = 0usize;
    let mut x = x;
    for _ in 0..bits {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    r
}
