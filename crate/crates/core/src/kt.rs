//! Krichevsky–Trofimov estimator.
//!
//! The Jeffreys (Dirichlet ½) mixture over multinomials, evaluated
//! sequentially from symbol counts:
//!
//! ```text
//! P(next = s | counts) = (counts[s] + 1/2) / (total + |alphabet| / 2)
//! ```

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A finite label alphabet `{0, .., size - 1}` with `size >= 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Alphabet(usize);

impl Alphabet {
    pub const BINARY: Alphabet = Alphabet(2);

    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::AlphabetTooSmall(size));
        }
        Ok(Alphabet(size))
    }

    #[inline]
    pub fn size(self) -> usize {
        self.0
    }

    #[inline]
    pub fn check(self, symbol: usize) -> Result<()> {
        if symbol < self.0 {
            Ok(())
        } else {
            Err(Error::SymbolOutOfRange {
                symbol,
                size: self.0,
            })
        }
    }
}

/// Per-symbol occurrence counters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolCounts {
    counts: Vec<u64>,
    total: u64,
}

impl SymbolCounts {
    pub fn new(alphabet: Alphabet) -> Self {
        SymbolCounts {
            counts: vec![0; alphabet.size()],
            total: 0,
        }
    }

    pub fn from_symbols(alphabet: Alphabet, symbols: &[usize]) -> Result<Self> {
        let mut counts = Self::new(alphabet);
        for &s in symbols {
            counts.observe(s)?;
        }
        Ok(counts)
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet(self.counts.len())
    }

    pub fn observe(&mut self, symbol: usize) -> Result<()> {
        self.alphabet().check(symbol)?;
        self.counts[symbol] += 1;
        self.total += 1;
        Ok(())
    }

    pub fn count(&self, symbol: usize) -> u64 {
        self.counts[symbol]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    /// KT predictive probability of `symbol` given these counts.
    pub fn kt_predictive<F: Real>(&self, symbol: usize) -> Result<F> {
        self.alphabet().check(symbol)?;
        Ok(kt_ratio(self.counts[symbol], self.total, self.counts.len()))
    }
}

/// `(count + 1/2) / (total + size / 2)`, computed as `(2 count + 1) / (2 total + size)`.
#[inline]
pub fn kt_ratio<F: Real>(count: u64, total: u64, alphabet_size: usize) -> F {
    let num = 2 * count + 1;
    let den = 2 * total + alphabet_size as u64;
    F::of(num as f64 / den as f64)
}

/// Natural-log KT probability of a whole sequence, accumulated sequentially.
/// The empty sequence has probability one.
pub fn kt_block_logprob<F: Real>(sequence: &[usize], alphabet: Alphabet) -> Result<F> {
    let mut counts = SymbolCounts::new(alphabet);
    let mut acc = F::zero();
    for &s in sequence {
        acc = acc + counts.kt_predictive::<F>(s)?.ln();
        counts.observe(s)?;
    }
    Ok(acc)
}
