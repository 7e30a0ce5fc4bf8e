//! Counter-based random number generation.
//!
//! Every random quantity in the crate is a pure function of
//! `(seed, stream, path, step, component)`. Nothing is mutated while
//! sampling, so paths can be generated in parallel, in any order, by any
//! number of workers, and the numbers come out bit-identical. Normal variates
//! are produced by inverting the standard normal CDF on a single uniform
//! draw, which keeps the one-draw-per-counter discipline (no rejection, no
//! cached spare values).
//!
//! The mixing function is the splitmix64 finalizer applied to a short chain
//! of key words. It is not cryptographic; it is a statistically solid hash
//! for Monte Carlo purposes.

/// splitmix64 finalizer: bijective avalanche mix of a 64-bit word.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a list of key words into a single 64-bit value.
///
/// Used both to derive sub-stream seeds (seed, tag, index, ...) and to key
/// individual variates. Order matters: `derive_key(&[a, b]) != derive_key(&[b, a])`.
pub fn derive_key(words: &[u64]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3; // pi fraction, arbitrary nonzero start
    for &w in words {
        h = mix64(h ^ w);
    }
    h
}

/// Stream tags keeping unrelated consumers of the same user seed independent.
pub mod tag {
    pub const SDE: u64 = 0x5de0_0001;
    pub const NODE: u64 = 0x90de_0002;
    pub const VALIDATE: u64 = 0xda7e_0003;
    pub const COUPLING: u64 = 0xc011_0004;
}

/// A keyed generator for one logical stream (for example: one path bundle).
///
/// The struct stores only the stream key; each draw hashes the remaining
/// counters on the fly.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    /// Create a stream from a user seed and a stream identifier.
    pub fn new(seed: u64, stream: u64) -> Self {
        CounterRng {
            key: derive_key(&[seed, stream]),
        }
    }

    /// Raw 64-bit draw for counters `(path, step, component)`.
    #[inline]
    pub fn next_u64(&self, path: u64, step: u64, component: u64) -> u64 {
        mix64(mix64(mix64(self.key ^ path) ^ step) ^ component)
    }

    /// Uniform draw in the open interval (0, 1).
    ///
    /// The top 53 bits are used and the value is centered on the lattice so
    /// that 0 and 1 are unreachable; the inverse CDF therefore never sees an
    /// endpoint.
    #[inline]
    pub fn uniform(&self, path: u64, step: u64, component: u64) -> f64 {
        let bits = self.next_u64(path, step, component) >> 11;
        (bits as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal draw via inverse CDF.
    #[inline]
    pub fn normal(&self, path: u64, step: u64, component: u64) -> f64 {
        inverse_normal_cdf(self.uniform(path, step, component))
    }
}

/// Inverse of the standard normal CDF (quantile function).
///
/// Rational approximation with distinct central and tail branches; absolute
/// relative error below 1.2e-9 over (0, 1), which is far below Monte Carlo
/// resolution at any feasible path count. Input must lie strictly inside
/// (0, 1); the uniform generator above guarantees that.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "quantile argument must be in (0,1)");

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
