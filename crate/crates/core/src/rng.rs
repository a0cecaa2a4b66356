//! Counter-based random numbers (Philox4x32-10).
//!
//! Each draw is a pure function of a 64-bit key and a 128-bit counter, so a
//! trial's coefficients can be regenerated in any order on any worker.

use std::f64::consts::TAU;

use num_complex::Complex64;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 bijection with 10 rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Stream of standard complex Gaussians addressed by `(trial, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: [u32; 2],
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
        }
    }

    pub fn block(&self, trial: u64, index: u64) -> [u32; 4] {
        philox4x32(
            [index as u32, (index >> 32) as u32, trial as u32, (trial >> 32) as u32],
            self.key,
        )
    }

    /// Two uniforms in `[0, 1)` with 53 bits each.
    pub fn uniform_pair(&self, trial: u64, index: u64) -> (f64, f64) {
        let b = self.block(trial, index);
        let u = ((b[0] as u64) << 32 | b[1] as u64) >> 11;
        let v = ((b[2] as u64) << 32 | b[3] as u64) >> 11;
        let scale = 1.0 / (1u64 << 53) as f64;
        (u as f64 * scale, v as f64 * scale)
    }

    /// `N_ℂ(0, 1)`: `|a|²` is exponential with mean one and the phase is
    /// uniform, so real and imaginary parts are independent `N(0, 1/2)`.
    pub fn complex_normal(&self, trial: u64, index: u64) -> Complex64 {
        let (u, v) = self.uniform_pair(trial, index);
        let radius = (-(1.0 - u).ln()).sqrt();
        Complex64::from_polar(radius, TAU * v)
    }
}

/// Box-independent code for a multi-index: 16 bits per coordinate for
/// `n ≤ 4`, a splitmix64 fold beyond that. Degrees are capped well below
/// `2^16`, so the packed form is injective.
pub fn multi_index_code(alpha: &[usize]) -> u64 {
    if alpha.len() <= 4 {
        alpha
            .iter()
            .enumerate()
            .fold(0u64, |acc, (j, &a)| acc | ((a as u64 & 0xFFFF) << (16 * j)))
    } else {
        alpha.iter().fold(0x243F_6A88_85A3_08D3u64, |acc, &a| {
            splitmix64(acc ^ (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        })
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
