//! Binary polar transform, encoder and successive-cancellation decoder.
//!
//! Everything here works in natural index order: the transform is
//! `x = u * F^{(x)n}` with `F = [[1, 0], [1, 1]]` and no bit-reversal
//! permutation. LLRs use the convention `ln(P[b = 0] / P[b = 1])`, so a
//! positive value favours bit 0, and an LLR of exactly zero decides 0.

use crate::error::{Result, invalid};

/// Saturation bound applied to every LLR produced by this crate.
pub const LLR_MAX: f64 = 40.0;

#[inline]
pub fn saturate(l: f64) -> f64 {
    if l.is_nan() { 0.0 } else { l.clamp(-LLR_MAX, LLR_MAX) }
}

/// Hard decision with ties going to 0.
#[inline]
pub fn hard_decision(l: f64) -> u8 {
    u8::from(l < 0.0)
}

/// Check-node combining rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckNodeMode {
    #[default]
    Exact,
    MinSum,
}

/// A polar code in natural order: block length, frozen positions and the
/// values those positions carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolarCode {
    stages: usize,
    frozen_mask: Vec<u8>,
    frozen_values: Vec<u8>,
    info_positions: Vec<usize>,
}

impl PolarCode {
    /// Builds a code with all-zero frozen values. `frozen_mask[i] == 1`
    /// freezes position `i`.
    pub fn new(frozen_mask: Vec<u8>) -> Result<Self> {
        let n = frozen_mask.len();
        Self::with_frozen_values(frozen_mask, vec![0; n])
    }

    pub fn with_frozen_values(frozen_mask: Vec<u8>, frozen_values: Vec<u8>) -> Result<Self> {
        let len = frozen_mask.len();
        if !is_power_of_two(len) {
            return invalid(format!("block length {len} is not a power of two"));
        }
        if frozen_values.len() != len {
            return invalid(format!(
                "frozen values have length {}, expected {len}",
                frozen_values.len()
            ));
        }
        check_bits(&frozen_mask, "frozen mask")?;
        check_bits(&frozen_values, "frozen values")?;
        let info_positions = (0..len).filter(|&i| frozen_mask[i] == 0).collect();
        Ok(Self {
            stages: len.trailing_zeros() as usize,
            frozen_mask,
            frozen_values,
            info_positions,
        })
    }

    /// Code with no frozen positions.
    pub fn all_info(block_len: usize) -> Result<Self> {
        Self::new(vec![0; block_len])
    }

    pub fn block_len(&self) -> usize {
        self.frozen_mask.len()
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn info_count(&self) -> usize {
        self.info_positions.len()
    }

    pub fn frozen_mask(&self) -> &[u8] {
        &self.frozen_mask
    }

    pub fn frozen_values(&self) -> &[u8] {
        &self.frozen_values
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen_mask[i] == 1
    }

    /// Scatters `msg` into the information positions; frozen positions take
    /// their frozen values.
    pub fn source_vector(&self, msg: &[u8]) -> Result<Vec<u8>> {
        if msg.len() != self.info_count() {
            return invalid(format!(
                "message has {} bits, code carries {}",
                msg.len(),
                self.info_count()
            ));
        }
        let mut u: Vec<u8> = self
            .frozen_mask
            .iter()
            .zip(&self.frozen_values)
            .map(|(&m, &v)| m & v)
            .collect();
        for (&pos, &b) in self.info_positions.iter().zip(msg) {
            u[pos] = b & 1;
        }
        Ok(u)
    }

    /// Information bits of a source vector, in index order.
    pub fn extract_message(&self, u: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&i| u[i]).collect()
    }
}

fn is_power_of_two(n: usize) -> bool {
    n.is_power_of_two()
}

fn check_bits(bits: &[u8], what: &str) -> Result<()> {
    match bits.iter().position(|&b| b > 1) {
        Some(i) => invalid(format!("{what}: element {i} is not a bit")),
        None => Ok(()),
    }
}

/// In-place butterfly evaluation of `u * F^{(x)n}`.
pub fn polar_transform_in_place(bits: &mut [u8]) {
    let n = bits.len();
    let mut half = 1;
    while half < n {
        for block in bits.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter()) {
                *a ^= *b;
            }
        }
        half *= 2;
    }
}

/// `u * F^{(x)n}` over GF(2). The transform is its own inverse.
pub fn polar_transform(u: &[u8]) -> Result<Vec<u8>> {
    if !is_power_of_two(u.len()) {
        return invalid(format!("length {} is not a power of two", u.len()));
    }
    check_bits(u, "input")?;
    let mut x = u.to_vec();
    polar_transform_in_place(&mut x);
    Ok(x)
}

pub fn polar_encode(msg: &[u8], code: &PolarCode) -> Result<Vec<u8>> {
    check_bits(msg, "message")?;
    let mut x = code.source_vector(msg)?;
    polar_transform_in_place(&mut x);
    Ok(x)
}

/// Boxplus of two LLRs.
///
/// The exact rule `2 atanh(tanh(a/2) tanh(b/2))` is evaluated as
/// `sign(a) sign(b) min(|a|, |b|) + ln(1 + e^{-|a+b|}) - ln(1 + e^{-|a-b|})`,
/// which stays finite for any finite input.
#[inline]
pub fn checknode_llr(a: f64, b: f64, mode: CheckNodeMode) -> f64 {
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    let mag = a.abs().min(b.abs());
    let v = match mode {
        CheckNodeMode::MinSum => sign * mag,
        CheckNodeMode::Exact => {
            if a == 0.0 || b == 0.0 {
                0.0
            } else {
                sign * mag + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
            }
        }
    };
    saturate(v)
}

#[inline]
pub fn varnode_llr(a: f64, b: f64, u_bit: u8) -> f64 {
    if u_bit == 0 { saturate(b + a) } else { saturate(b - a) }
}

/// Output of [`sc_decode`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScDecision {
    pub msg_hat: Vec<u8>,
    pub u_hat: Vec<u8>,
    pub x_hat: Vec<u8>,
}

/// Successive-cancellation decoding with the exact check-node rule.
pub fn sc_decode(llrs: &[f64], code: &PolarCode) -> Result<ScDecision> {
    sc_decode_with(llrs, code, CheckNodeMode::Exact)
}

pub fn sc_decode_with(llrs: &[f64], code: &PolarCode, mode: CheckNodeMode) -> Result<ScDecision> {
    let n = code.block_len();
    if llrs.len() != n {
        return invalid(format!("got {} LLRs for block length {n}", llrs.len()));
    }
    let mut u_hat = vec![0u8; n];
    let mut x_hat = vec![0u8; n];
    let mut scratch = vec![0.0; n];
    let mut leaf = |i: usize, l: f64| {
        if code.is_frozen(i) {
            code.frozen_values()[i]
        } else {
            hard_decision(l)
        }
    };
    sc_recurse(llrs, &mut scratch, &mut u_hat, &mut x_hat, 0, mode, &mut leaf);
    let msg_hat = code.extract_message(&u_hat);
    Ok(ScDecision { msg_hat, u_hat, x_hat })
}

/// Genie-aided probe of every synthesized bit channel.
///
/// Entry `i` is 1 when the SC decision on `u_i`, computed with all earlier
/// source bits set to their true values, disagrees with `u_true[i]`.
pub fn sc_genie_probe(llrs: &[f64], u_true: &[u8]) -> Result<Vec<u8>> {
    sc_genie_probe_with(llrs, u_true, CheckNodeMode::Exact)
}

pub fn sc_genie_probe_with(llrs: &[f64], u_true: &[u8], mode: CheckNodeMode) -> Result<Vec<u8>> {
    let n = u_true.len();
    if llrs.len() != n {
        return invalid(format!("got {} LLRs for {n} source bits", llrs.len()));
    }
    if !is_power_of_two(n) {
        return invalid(format!("length {n} is not a power of two"));
    }
    check_bits(u_true, "source vector")?;
    let mut errors = vec![0u8; n];
    let mut u = vec![0u8; n];
    let mut x = vec![0u8; n];
    let mut scratch = vec![0.0; n];
    let mut leaf = |i: usize, l: f64| {
        errors[i] = u8::from(hard_decision(l) != u_true[i]);
        u_true[i]
    };
    sc_recurse(llrs, &mut scratch, &mut u, &mut x, 0, mode, &mut leaf);
    Ok(errors)
}

/// One SC subtree. `x` receives the re-encoded partial sums of the subtree,
/// `scratch` must hold at least `llr.len()` values.
fn sc_recurse<F>(
    llr: &[f64],
    scratch: &mut [f64],
    u: &mut [u8],
    x: &mut [u8],
    base: usize,
    mode: CheckNodeMode,
    leaf: &mut F,
) where
    F: FnMut(usize, f64) -> u8,
{
    let n = llr.len();
    if n == 1 {
        let b = leaf(base, llr[0]);
        u[0] = b;
        x[0] = b;
        return;
    }
    let h = n / 2;
    let (cur, rest) = scratch.split_at_mut(h);
    let (left, right) = llr.split_at(h);
    for ((c, &a), &b) in cur.iter_mut().zip(left).zip(right) {
        *c = checknode_llr(a, b, mode);
    }
    let (u_lo, u_hi) = u.split_at_mut(h);
    let (x_lo, x_hi) = x.split_at_mut(h);
    sc_recurse(cur, rest, u_lo, x_lo, base, mode, leaf);
    for (((c, &a), &b), &p) in cur.iter_mut().zip(left).zip(right).zip(x_lo.iter()) {
        *c = varnode_llr(a, b, p);
    }
    sc_recurse(cur, rest, u_hi, x_hi, base + h, mode, leaf);
    for (lo, &hi) in x_lo.iter_mut().zip(x_hi.iter()) {
        *lo ^= hi;
    }
}
