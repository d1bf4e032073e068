//! Counter-based deterministic random numbers.
//!
//! Every draw is a pure function of `(seed, stream, trial, slot, counter)`,
//! so trial sets are bitwise identical no matter how work is scheduled
//! across threads. Streams separate unrelated uses (leaf sampling, side
//! information, subset selection) so adding draws to one never perturbs
//! another.

/// Stream identifiers. Keep the values stable: reports are reproducible
/// across versions only if the keying never changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    /// Leaf samples for SC trials; slot = leaf index.
    Leaf = 1,
    /// Side-information realizations in the CCLT experiment; slot = sample index.
    SideInfo = 2,
    /// Random subset selection in the compression experiment.
    Subset = 3,
    /// Source vectors for compression reconstruction trials; slot = leaf index.
    CompressLeaf = 4,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// One keyed draw: hash the full key down to a `u64`.
#[inline]
pub fn keyed_u64(seed: u64, stream: StreamId, trial: u64, slot: u64, counter: u64) -> u64 {
    let mut h = splitmix64(seed ^ 0xA0761D6478BD642F);
    h = splitmix64(h ^ (stream as u64).wrapping_mul(0xE7037ED1A0B428DB));
    h = splitmix64(h ^ trial.wrapping_mul(0x8EBC6AF09C88C6E3));
    h = splitmix64(h ^ slot.wrapping_mul(0x589965CC75374CC3));
    splitmix64(h ^ counter.wrapping_mul(0x1D8E4E27C47D124F))
}

/// Uniform in the open interval (0, 1); never returns 0.0 or 1.0, so it is
/// safe to feed straight into an inverse CDF.
#[inline]
pub fn keyed_unit(seed: u64, stream: StreamId, trial: u64, slot: u64, counter: u64) -> f64 {
    let bits = keyed_u64(seed, stream, trial, slot, counter);
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// A small stateful view over one `(seed, stream, trial, slot)` key that
/// hands out successive counters. Cheap to construct anywhere in a parallel
/// loop.
#[derive(Debug, Clone)]
pub struct Stream {
    seed: u64,
    stream: StreamId,
    trial: u64,
    slot: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64, stream: StreamId, trial: u64, slot: u64) -> Self {
        Stream { seed, stream, trial, slot, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = keyed_u64(self.seed, self.stream, self.trial, self.slot, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in (0, 1).
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        let v = keyed_unit(self.seed, self.stream, self.trial, self.slot, self.counter);
        self.counter += 1;
        v
    }

    /// Standard normal via Box-Muller (consumes two uniforms).
    pub fn next_standard_normal(&mut self) -> f64 {
        let u1 = self.next_unit();
        let u2 = self.next_unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
