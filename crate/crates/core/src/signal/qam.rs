//! Gray-coded square 64-QAM.
//!
//! Each symbol carries six bits `b0..b5`. The first three select the
//! in-phase level, the last three the quadrature level, through the same
//! per-axis Gray table (bits written MSB first):
//!
//! | bits | 000 | 001 | 011 | 010 | 110 | 111 | 101 | 100 |
//! |------|-----|-----|-----|-----|-----|-----|-----|-----|
//! | level| -7  | -5  | -3  | -1  | +1  | +3  | +5  | +7  |
//!
//! Levels are scaled by `1/sqrt(42)` so the constellation has unit mean power.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{Purpose, SeedStream};
use crate::error::{Error, Result};

pub const BITS_PER_SYMBOL: usize = 6;

/// Axis level (odd integer) for each 3-bit Gray word, indexed by the word.
const GRAY_TO_LEVEL: [i32; 8] = [-7, -5, -1, -3, 7, 5, 1, 3];

pub fn norm() -> f64 {
    1.0 / 42f64.sqrt()
}

/// Symbols together with the bits they were mapped from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolFrame {
    pub symbols: Vec<Complex64>,
    pub bits: Vec<u8>,
    pub seed: u64,
}

impl SymbolFrame {
    /// Draws `n_symbols` uniformly random symbols from `seed`.
    pub fn random(seed: u64, n_symbols: usize) -> Result<Self> {
        let mut rng = SeedStream::new(seed).rng(Purpose::Bits, 0);
        let bits: Vec<u8> = (0..n_symbols * BITS_PER_SYMBOL)
            .map(|_| rng.random::<bool>() as u8)
            .collect();
        let mut frame = qam64_map(&bits)?;
        frame.seed = seed;
        Ok(frame)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

fn axis_level(b: &[u8]) -> f64 {
    let word = ((b[0] & 1) << 2) | ((b[1] & 1) << 1) | (b[2] & 1);
    GRAY_TO_LEVEL[word as usize] as f64
}

/// Maps bits to symbols. The returned frame has seed 0.
pub fn qam64_map(bits: &[u8]) -> Result<SymbolFrame> {
    if !bits.len().is_multiple_of(BITS_PER_SYMBOL) {
        return Err(Error::invalid(format!(
            "bit count {} is not a multiple of {BITS_PER_SYMBOL}",
            bits.len()
        )));
    }
    let s = norm();
    let symbols = bits
        .chunks_exact(BITS_PER_SYMBOL)
        .map(|c| Complex64::new(axis_level(&c[..3]) * s, axis_level(&c[3..]) * s))
        .collect();
    Ok(SymbolFrame {
        symbols,
        bits: bits.to_vec(),
        seed: 0,
    })
}

fn decide_axis(v: f64, out: &mut Vec<u8>) {
    // Nearest odd level in [-7, 7].
    let level = ((v / 2.0 - 0.5).round() * 2.0 + 1.0).clamp(-7.0, 7.0) as i32;
    let word = GRAY_TO_LEVEL
        .iter()
        .position(|&l| l == level)
        .expect("level is an odd integer in [-7, 7]");
    out.push(((word >> 2) & 1) as u8);
    out.push(((word >> 1) & 1) as u8);
    out.push((word & 1) as u8);
}

/// Nearest-neighbour hard decision back to bits.
pub fn qam64_demap(symbols: &[Complex64]) -> Vec<u8> {
    let inv = 42f64.sqrt();
    let mut bits = Vec::with_capacity(symbols.len() * BITS_PER_SYMBOL);
    for s in symbols {
        decide_axis(s.re * inv, &mut bits);
        decide_axis(s.im * inv, &mut bits);
    }
    bits
}

/// All 64 constellation points, indexed by the 6-bit word.
pub fn constellation() -> Vec<Complex64> {
    (0..64u8)
        .map(|w| {
            let bits: Vec<u8> = (0..6).rev().map(|i| (w >> i) & 1).collect();
            qam64_map(&bits).unwrap().symbols[0]
        })
        .collect()
}
