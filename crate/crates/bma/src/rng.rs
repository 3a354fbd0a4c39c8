//! Counter-based random numbers.
//!
//! Every variate is a pure function of `(seed, stream, counter)`. Streams
//! index independent consumers (one per sample path), counters index draws
//! within a stream. Nothing is stateful, so parallel schedules cannot change
//! the output: path `p` sees the same numbers whether it is simulated first,
//! last, or concurrently.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_A: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_B: u64 = 0x94D0_49BB_1331_11EB;

/// SplitMix64 finalizer: full-avalanche bijection on `u64`.
#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(MIX_A);
    z ^= z >> 27;
    z = z.wrapping_mul(MIX_B);
    z ^= z >> 31;
    z
}

/// Raw 64-bit word at position `(seed, stream, counter)`.
#[inline]
pub fn word_at(seed: u64, stream: u64, counter: u64) -> u64 {
    let a = mix(seed ^ GOLDEN);
    let b = mix(a ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    mix(b.wrapping_add(counter.wrapping_mul(GOLDEN)))
}

/// Uniform variate in the open interval (0, 1).
#[inline]
pub fn uniform_at(seed: u64, stream: u64, counter: u64) -> f64 {
    // 53 mantissa bits, offset by half an ulp so 0 and 1 are unreachable.
    ((word_at(seed, stream, counter) >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Standard normal variate, the `n`-th in stream `stream`.
///
/// Box-Muller on two fresh uniforms; the sine branch is discarded so that
/// draw `n` consumes exactly counters `2n` and `2n + 1`.
#[inline]
pub fn normal_at(seed: u64, stream: u64, n: u64) -> f64 {
    let u1 = uniform_at(seed, stream, 2 * n);
    let u2 = uniform_at(seed, stream, 2 * n + 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
