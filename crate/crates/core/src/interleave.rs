//! Periodic interleaving of the coded stream X with the reconstruction
//! stream Y, and the bit-bias envelope that survives it.
//!
//! Output positions are numbered from 1. Position `i` takes the next X bit
//! when `i mod (k + l)` is in `1..=k` and the next Y bit otherwise.

use crate::bits::{BitStr, Bits};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InterleavePlan {
    k: u32,
    l: u32,
}

impl Default for InterleavePlan {
    fn default() -> Self {
        InterleavePlan { k: 8, l: 1 }
    }
}

impl InterleavePlan {
    pub fn new(k: u32, l: u32) -> Result<Self> {
        if k == 0 || l == 0 {
            return Err(Error::InvalidArgument(format!("interleave plan needs k, l >= 1, got ({k}, {l})")));
        }
        Ok(InterleavePlan { k, l })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn period(&self) -> u64 {
        self.k as u64 + self.l as u64
    }

    /// Whether 1-based position `i` belongs to X.
    #[inline]
    pub fn is_x_slot(&self, i: u64) -> bool {
        let r = i % self.period();
        r >= 1 && r <= self.k as u64
    }
}

/// Number of positions `≤ j` assigned to X:
/// `k·⌊j/(k+l)⌋ + min(j mod (k+l), k)`.
pub fn x_bit_count(plan: &InterleavePlan, j: u64) -> u64 {
    let p = plan.period();
    plan.k as u64 * (j / p) + (j % p).min(plan.k as u64)
}

/// Interleave by the plan. Once Y is exhausted the rest of X follows
/// contiguously; running out of X while Y still has bits is an error.
pub fn interleave(plan: &InterleavePlan, x: &BitStr, y: &BitStr) -> Result<Bits> {
    merge(plan, x, y, false)
}

/// As [`interleave`], but a leftover Y tail is also emitted contiguously.
/// Both lengths must be known to the decoder.
pub fn interleave_relaxed(plan: &InterleavePlan, x: &BitStr, y: &BitStr) -> Result<Bits> {
    merge(plan, x, y, true)
}

fn merge(plan: &InterleavePlan, x: &BitStr, y: &BitStr, y_tail: bool) -> Result<Bits> {
    let mut z = Bits::with_capacity(x.len() + y.len());
    let (mut xi, mut yi) = (0, 0);
    let (k, l) = (plan.k as usize, plan.l as usize);
    while xi < x.len() || yi < y.len() {
        if xi < x.len() {
            let take = k.min(x.len() - xi);
            z.extend_from_bitslice(&x[xi..xi + take]);
            xi += take;
            if take < k && yi < y.len() && !y_tail {
                return Err(Error::Exhausted(format!(
                    "X ran out with {} Y bits left",
                    y.len() - yi
                )));
            }
        } else if !y_tail {
            return Err(Error::Exhausted(format!("X ran out with {} Y bits left", y.len() - yi)));
        }
        let take = l.min(y.len() - yi);
        z.extend_from_bitslice(&y[yi..yi + take]);
        yi += take;
    }
    Ok(z)
}

/// Split `z` back into `(X, Y)` given their lengths. Handles tails of either
/// stream.
pub fn deinterleave(plan: &InterleavePlan, z: &BitStr, x_len: usize, y_len: usize) -> Result<(Bits, Bits)> {
    if x_len + y_len != z.len() {
        return Err(Error::LengthMismatch(format!(
            "{x_len} + {y_len} bits declared but {} present",
            z.len()
        )));
    }
    let mut x = Bits::with_capacity(x_len);
    let mut y = Bits::with_capacity(y_len);
    let (k, l) = (plan.k as usize, plan.l as usize);
    let mut pos = 0;
    while pos < z.len() {
        let take = k.min(x_len - x.len());
        x.extend_from_bitslice(&z[pos..pos + take]);
        pos += take;
        let take = l.min(y_len - y.len());
        y.extend_from_bitslice(&z[pos..pos + take]);
        pos += take;
    }
    Ok((x, y))
}

/// `2·exp(−⌊j/(2M − m)⌋/τ) / (1 − e^{−1/τ})`: bound on the bias of bit `j`
/// of the coded stream of a chain with mixing time `τ` and codeword lengths
/// in `[m, M]`.
pub fn stream_envelope(j: u64, max_len: u32, min_len: u32, tau: f64) -> f64 {
    let width = 2 * max_len as u64 - min_len as u64;
    2.0 * (-((j / width) as f64) / tau).exp() / (1.0 - (-1.0 / tau).exp())
}

/// Burn-in threshold below which the stream envelope is not claimed:
/// `n·(2M − m)`, scaled by `‖B‖₁` after transformation.
pub fn envelope_threshold(burn_in: f64, max_len: u32, min_len: u32, b_one_norm: f64) -> f64 {
    burn_in * b_one_norm * (2 * max_len - min_len) as f64
}

/// Bound on the bias of interleaved position `j` given per-index bounds on
/// the two inputs: `max(a(k_j), b(j − k_j))` with `k_j` X bits among the
/// first `j`. Indices passed to `a` and `b` are 1-based, and 0 means the
/// stream has not started (bound 0).
pub fn interleaved_bias_bound(plan: &InterleavePlan, j: u64, a: impl Fn(u64) -> f64, b: impl Fn(u64) -> f64) -> f64 {
    let kj = x_bit_count(plan, j);
    let x_term = if plan.is_x_slot(j) { a(kj) } else { 0.0 };
    let y_term = if plan.is_x_slot(j) { 0.0 } else { b(j - kj) };
    x_term.max(y_term)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    Bound(f64),
    /// `j'` is at or below the validity threshold, which is reported.
    NotApplicable { threshold: f64 },
}

impl Envelope {
    pub fn value(&self) -> Option<f64> {
        match self {
            Envelope::Bound(v) => Some(*v),
            Envelope::NotApplicable { .. } => None,
        }
    }
}

/// Parameters of the interleaved-stream bias envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams {
    pub max_len: u32,
    pub min_len: u32,
    pub tau: f64,
    pub b_one_norm: f64,
    /// Burn-in `n` of the validity threshold `j' > n‖B‖₁(2M − m)`.
    pub burn_in: f64,
}

/// Envelope for interleaved position `j`:
/// `max(2·exp(−⌊j'/(2M − m)⌋/(τ‖B‖₁)) / (1 − exp(−1/(τ‖B‖₁))), b(j − j'))`
/// with `j' = x_bit_count(plan, j)`.
pub fn bias_envelope(plan: &InterleavePlan, j: u64, params: &EnvelopeParams, y_bias: impl Fn(u64) -> f64) -> Envelope {
    let jp = x_bit_count(plan, j);
    envelope_at(jp, j - jp, params, y_bias)
}

/// [`bias_envelope`] with `j'` and `j − j'` supplied directly.
pub fn envelope_at(jp: u64, y_index: u64, params: &EnvelopeParams, y_bias: impl Fn(u64) -> f64) -> Envelope {
    let threshold = envelope_threshold(params.burn_in, params.max_len, params.min_len, params.b_one_norm);
    if jp as f64 <= threshold {
        return Envelope::NotApplicable { threshold };
    }
    let x_part = stream_envelope(jp, params.max_len, params.min_len, params.tau * params.b_one_norm);
    Envelope::Bound(x_part.max(y_bias(y_index)))
}
