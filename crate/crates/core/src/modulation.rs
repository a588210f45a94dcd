//! Constellations, labelings and soft demappers.
//!
//! Labels are `m`-bit integers read msb-first: bit 0 of a label is its most
//! significant bit, and for MLC it is level 0. Bit value 0 maps to the
//! positive amplitude, matching the LLR sign convention of [`crate::polar`].
//!
//! Two labelings are provided:
//!
//! * `Gray`: binary-reflected Gray code along each amplitude axis. For QAM
//!   the label is the I-axis label followed by the Q-axis label.
//! * `Natural`: the set-partitioning labeling. For ASK this is the binary
//!   index of the amplitude position (largest amplitude first). For QAM the
//!   grid is partitioned pairwise per axis significance, from the least
//!   significant position bit upwards: with per-axis natural position bits
//!   `i_j`, `q_j`, label bits `(2j, 2j + 1)` are `(i_j ^ q_j, q_j)`. Each
//!   level halves the current subset while growing its minimum distance;
//!   level 0 is the checkerboard split. For 4-QAM this is exactly the Gray
//!   mapper preceded by [`gray_sp_matrix`]`(2)` acting on the label.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, invalid};
use crate::polar::saturate;

const MAX_BITS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Labeling {
    Gray,
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationKind {
    Ask,
    Qam,
}

/// Constellation descriptor as it appears in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstellationSpec {
    #[serde(rename = "type")]
    pub kind: ConstellationKind,
    pub m: usize,
    pub labeling: Labeling,
}

impl ConstellationSpec {
    pub fn build(&self) -> Result<Constellation> {
        match self.kind {
            ConstellationKind::Ask => build_ask(self.m, self.labeling),
            ConstellationKind::Qam => build_square_qam(self.m, self.labeling),
        }
    }
}

/// Demapper evaluation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DemapMode {
    #[default]
    Exact,
    MaxLog,
}

/// A unit-energy signal set with a labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    spec: ConstellationSpec,
    /// `points[label]` is the point carrying `label`.
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn spec(&self) -> ConstellationSpec {
        self.spec
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.spec.m
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn labeling(&self) -> Labeling {
        self.spec.labeling
    }

    pub fn kind(&self) -> ConstellationKind {
        self.spec.kind
    }

    /// 1 for real (ASK) constellations, 2 for QAM.
    pub fn complex_dims(&self) -> u8 {
        match self.spec.kind {
            ConstellationKind::Ask => 1,
            ConstellationKind::Qam => 2,
        }
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Bit `j` (msb-first) of `label`.
    #[inline]
    pub fn label_bit(&self, label: usize, j: usize) -> u8 {
        ((label >> (self.spec.m - 1 - j)) & 1) as u8
    }
}

fn check_bits_per_symbol(m: usize) -> Result<()> {
    if m == 0 || m > MAX_BITS {
        return invalid(format!("bits per symbol must be in 1..={MAX_BITS}, got {m}"));
    }
    Ok(())
}

/// Binary-reflected Gray code: entry `k` is `k ^ (k >> 1)`.
pub fn gray_code(m: usize) -> Result<Vec<usize>> {
    check_bits_per_symbol(m)?;
    Ok((0..1usize << m).map(|k| k ^ (k >> 1)).collect())
}

/// msb-first bit vector of an `m`-bit label.
pub fn label_to_bits(label: usize, m: usize) -> Vec<u8> {
    (0..m).map(|j| ((label >> (m - 1 - j)) & 1) as u8).collect()
}

pub fn bits_to_label(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b & 1))
}

/// Unnormalized amplitude of position `k` in an `M`-ASK, largest first.
fn ask_amplitude(k: usize, size: usize) -> f64 {
    (size as f64 - 1.0) - 2.0 * k as f64
}

pub fn build_ask(m: usize, labeling: Labeling) -> Result<Constellation> {
    check_bits_per_symbol(m)?;
    let size = 1usize << m;
    let scale = ((size * size - 1) as f64 / 3.0).sqrt();
    let labels = match labeling {
        Labeling::Gray => gray_code(m)?,
        Labeling::Natural => (0..size).collect(),
    };
    let mut points = vec![Complex64::new(0.0, 0.0); size];
    for (k, &label) in labels.iter().enumerate() {
        points[label] = Complex64::new(ask_amplitude(k, size) / scale, 0.0);
    }
    Ok(Constellation {
        spec: ConstellationSpec { kind: ConstellationKind::Ask, m, labeling },
        points,
    })
}

pub fn build_square_qam(m: usize, labeling: Labeling) -> Result<Constellation> {
    check_bits_per_symbol(m)?;
    if !m.is_multiple_of(2) {
        return invalid(format!("square QAM needs an even number of bits, got {m}"));
    }
    let half = m / 2;
    let side = 1usize << half;
    let scale = (2.0 * (side * side - 1) as f64 / 3.0).sqrt();
    let gray = gray_code(half)?;
    let mut points = vec![Complex64::new(0.0, 0.0); 1 << m];
    for i in 0..side {
        for q in 0..side {
            let label = match labeling {
                Labeling::Gray => (gray[i] << half) | gray[q],
                Labeling::Natural => sp_qam_label(i, q, half),
            };
            points[label] = Complex64::new(ask_amplitude(i, side), ask_amplitude(q, side)) / scale;
        }
    }
    Ok(Constellation {
        spec: ConstellationSpec { kind: ConstellationKind::Qam, m, labeling },
        points,
    })
}

/// Set-partitioning label of grid position `(i, q)`, `half` bits per axis.
fn sp_qam_label(i: usize, q: usize, half: usize) -> usize {
    let m = 2 * half;
    let mut label = 0;
    for j in 0..half {
        let ib = (i >> j) & 1;
        let qb = (q >> j) & 1;
        // label bits are msb-first; significance j feeds bits 2j and 2j+1
        label |= (ib ^ qb) << (m - 1 - 2 * j);
        label |= qb << (m - 2 - 2 * j);
    }
    label
}

/// Square binary matrix, used for label transforms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: Vec<Vec<u8>>,
}

impl LabelMatrix {
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 || rows.iter().any(|r| r.len() != m || r.iter().any(|&b| b > 1)) {
            return invalid("label matrix must be a non-empty square binary matrix");
        }
        Ok(Self { rows })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    /// Row-vector product `bits * T` over GF(2).
    pub fn apply_row(&self, bits: &[u8]) -> Vec<u8> {
        let m = self.size();
        (0..m)
            .map(|c| (0..m).fold(0, |acc, r| acc ^ (bits[r] & self.rows[r][c])))
            .collect()
    }

    /// Column-vector product `T * bits` over GF(2).
    pub fn apply_col(&self, bits: &[u8]) -> Vec<u8> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(bits).fold(0, |acc, (&a, &b)| acc ^ (a & b)))
            .collect()
    }

    /// Rank over GF(2) equals the size.
    pub fn is_invertible(&self) -> bool {
        let m = self.size();
        let mut a = self.rows.clone();
        let mut rank = 0;
        for col in 0..m {
            let Some(p) = (rank..m).find(|&r| a[r][col] == 1) else {
                continue;
            };
            a.swap(rank, p);
            for r in 0..m {
                if r != rank && a[r][col] == 1 {
                    let pivot = a[rank].clone();
                    for (x, y) in a[r].iter_mut().zip(pivot) {
                        *x ^= y;
                    }
                }
            }
            rank += 1;
        }
        rank == m
    }
}

/// Upper-bidiagonal all-ones matrix `T` relating the two labelings:
/// `gray_code(m)[k] = binary(k) * T` with msb-first row vectors. For 4-QAM
/// the Gray label of the point carrying set-partitioning label `u` is
/// `T * u`, which is the polar kernel acting on the label.
pub fn gray_sp_matrix(m: usize) -> Result<LabelMatrix> {
    check_bits_per_symbol(m)?;
    let rows = (0..m)
        .map(|r| (0..m).map(|c| u8::from(c == r || c == r + 1)).collect())
        .collect();
    LabelMatrix::from_rows(rows)
}

pub fn map_bits(bits: &[u8], c: &Constellation) -> Result<Vec<Complex64>> {
    let m = c.bits_per_symbol();
    if !bits.len().is_multiple_of(m) {
        return invalid(format!("{} bits do not fill {m}-bit symbols", bits.len()));
    }
    Ok(bits.chunks_exact(m).map(|g| c.point(bits_to_label(g))).collect())
}

#[inline]
fn log_sum_exp(acc: &mut (f64, f64), v: f64) {
    // running (max, sum of exp(x - max))
    let (mx, s) = *acc;
    if v <= mx {
        acc.1 = s + (v - mx).exp();
    } else {
        *acc = (v, s * (mx - v).exp() + 1.0);
    }
}

#[inline]
fn finish(acc: (f64, f64), mode: DemapMode) -> f64 {
    match mode {
        DemapMode::Exact => acc.0 + acc.1.ln(),
        DemapMode::MaxLog => acc.0,
    }
}

const EMPTY: (f64, f64) = (f64::NEG_INFINITY, 0.0);

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return invalid(format!("noise variance must be positive, got {sigma2}"));
    }
    Ok(())
}

/// Per-bit LLRs of one received symbol (BICM metric).
pub fn demap_bicm_llrs(y: Complex64, sigma2: f64, c: &Constellation, mode: DemapMode) -> Result<Vec<f64>> {
    let mut out = vec![0.0; c.bits_per_symbol()];
    demap_bicm_into(y, sigma2, c, mode, &mut out)?;
    Ok(out)
}

/// As [`demap_bicm_llrs`], writing into `out` (length `m`).
pub fn demap_bicm_into(y: Complex64, sigma2: f64, c: &Constellation, mode: DemapMode, out: &mut [f64]) -> Result<()> {
    check_sigma2(sigma2)?;
    let m = c.bits_per_symbol();
    if out.len() != m {
        return invalid(format!("output holds {} LLRs, constellation has {m} bits", out.len()));
    }
    let inv = 1.0 / (2.0 * sigma2);
    let mut zero = [EMPTY; MAX_BITS];
    let mut one = [EMPTY; MAX_BITS];
    for (label, p) in c.points.iter().enumerate() {
        let metric = -(y - p).norm_sqr() * inv;
        for j in 0..m {
            if c.label_bit(label, j) == 0 {
                log_sum_exp(&mut zero[j], metric);
            } else {
                log_sum_exp(&mut one[j], metric);
            }
        }
    }
    for j in 0..m {
        out[j] = saturate(finish(zero[j], mode) - finish(one[j], mode));
    }
    Ok(())
}

/// LLR of label bit `level` given the already-decided bits of the lower
/// levels, marginalizing over the higher levels (MLC metric).
pub fn demap_mlc_level(y: Complex64, sigma2: f64, c: &Constellation, level: usize, lower_bits: &[u8]) -> Result<f64> {
    demap_mlc_level_with(y, sigma2, c, level, lower_bits, DemapMode::Exact)
}

pub fn demap_mlc_level_with(
    y: Complex64,
    sigma2: f64,
    c: &Constellation,
    level: usize,
    lower_bits: &[u8],
    mode: DemapMode,
) -> Result<f64> {
    check_sigma2(sigma2)?;
    let m = c.bits_per_symbol();
    if level >= m {
        return invalid(format!("level {level} out of range for {m}-bit constellation"));
    }
    if lower_bits.len() != level {
        return invalid(format!("level {level} needs {level} lower bits, got {}", lower_bits.len()));
    }
    let shift = m - level;
    let prefix = bits_to_label(lower_bits);
    let inv = 1.0 / (2.0 * sigma2);
    let (mut zero, mut one) = (EMPTY, EMPTY);
    // labels sharing the prefix form a contiguous block
    let start = prefix << shift;
    for label in start..start + (1 << shift) {
        let metric = -(y - c.points[label]).norm_sqr() * inv;
        if c.label_bit(label, level) == 0 {
            log_sum_exp(&mut zero, metric);
        } else {
            log_sum_exp(&mut one, metric);
        }
    }
    Ok(saturate(finish(zero, mode) - finish(one, mode)))
}

/// Monte-Carlo mutual information estimates, in bits per symbol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MutualInformation {
    /// `I(b_l ; Y | b_0 .. b_{l-1})` for each level.
    pub per_level: Vec<f64>,
    /// `I(X ; Y)` from the symbol-wise posterior.
    pub joint: f64,
}

/// Estimates per-level conditional and joint mutual information over
/// `samples` uniformly drawn symbols at the given noise variance.
pub fn mc_mutual_information(c: &Constellation, sigma2: f64, samples: usize, seed: u64) -> Result<MutualInformation> {
    use crate::channel::{NoiseModel, awgn_apply};
    let noise = NoiseModel::new(sigma2, c.complex_dims())?;
    let m = c.bits_per_symbol();
    let mut rng = crate::rng::stream(seed, &[]);
    let mut level_acc = vec![0.0; m];
    let mut joint_acc = 0.0;
    let inv = 1.0 / (2.0 * sigma2);
    for _ in 0..samples {
        let label = (rand::RngCore::next_u64(&mut rng) >> (64 - m)) as usize;
        let y = awgn_apply(&[c.point(label)], &noise, &mut rng)[0];
        let bits = label_to_bits(label, m);
        for l in 0..m {
            let llr = demap_mlc_level_unsaturated(y, inv, c, l, &bits[..l]);
            let s = if bits[l] == 0 { llr } else { -llr };
            // log2(1 + e^{-s})
            level_acc[l] += softplus(-s) / std::f64::consts::LN_2;
        }
        let own = -(y - c.point(label)).norm_sqr() * inv;
        let mut acc = EMPTY;
        for p in c.points() {
            log_sum_exp(&mut acc, -(y - p).norm_sqr() * inv - own);
        }
        joint_acc += finish(acc, DemapMode::Exact) / std::f64::consts::LN_2;
    }
    let n = samples as f64;
    Ok(MutualInformation {
        per_level: level_acc.iter().map(|a| 1.0 - a / n).collect(),
        joint: m as f64 - joint_acc / n,
    })
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() }
}

fn demap_mlc_level_unsaturated(y: Complex64, inv: f64, c: &Constellation, level: usize, lower: &[u8]) -> f64 {
    let shift = c.bits_per_symbol() - level;
    let start = bits_to_label(lower) << shift;
    let (mut zero, mut one) = (EMPTY, EMPTY);
    for label in start..start + (1 << shift) {
        let metric = -(y - c.points[label]).norm_sqr() * inv;
        if c.label_bit(label, level) == 0 {
            log_sum_exp(&mut zero, metric);
        } else {
            log_sum_exp(&mut one, metric);
        }
    }
    finish(zero, DemapMode::Exact) - finish(one, DemapMode::Exact)
}
