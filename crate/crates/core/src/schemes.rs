//! MLC and BICM transceivers over polar codes.
//!
//! Both kinds occupy exactly `n_sym` channel symbols per frame, so for the
//! same constellation they have the same structural delay.
//!
//! * MLC: one polar code of length `n_sym` per label bit. Symbol `t`
//!   carries bit `t` of the level-`l` codeword on label bit `l` of the
//!   set-partitioning (natural) labeling. The receiver decodes the levels
//!   in order, each conditioned on the re-encoded hard decisions of the
//!   levels before it.
//! * BICM: one polar code of length `m * n_sym`, an interleaver, and
//!   consecutive `m`-bit groups per symbol. The receiver computes all bit
//!   metrics in parallel and runs a single SC decoder.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::{NoiseModel, awgn_apply};
use crate::construction::{
    DesignSpec, Estimator, ReliabilityList, allocate_mlc, bec_bhattacharyya, bpsk_equivalent_esn0, bpsk_llr_mean,
    ga_density_evolution, mc_bit_channel_estimate, select_frozen,
};
use crate::error::{Result, invalid};
use crate::modulation::{
    Constellation, ConstellationKind, ConstellationSpec, DemapMode, Labeling, bits_to_label, demap_bicm_into,
    demap_mlc_level, gray_sp_matrix, label_to_bits, map_bits,
};
use crate::polar::{CheckNodeMode, PolarCode, checknode_llr, polar_encode, sc_decode, varnode_llr};
use crate::rng::{random_bits, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Mlc,
    Bicm,
}

/// Interleaver descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InterleaverSpec {
    #[default]
    Identity,
    /// Fisher-Yates shuffle driven by a stream derived from `seed`.
    SeededRandom { seed: u64 },
    /// Codeword bit `j * n_sym + t` goes to label bit `j` of symbol `t`.
    LevelMajor,
}

/// A permutation applied as `out[i] = seq[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
}

const INTERLEAVER_DOMAIN: u64 = 0x494e_544c;

impl Interleaver {
    pub fn from_permutation(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return invalid("interleaver is not a permutation");
            }
        }
        Ok(Self { perm })
    }

    pub fn identity(len: usize) -> Self {
        Self { perm: (0..len).collect() }
    }

    pub fn build(spec: InterleaverSpec, bits_per_symbol: usize, n_sym: usize) -> Self {
        let len = bits_per_symbol * n_sym;
        match spec {
            InterleaverSpec::Identity => Self::identity(len),
            InterleaverSpec::SeededRandom { seed } => {
                let mut perm: Vec<usize> = (0..len).collect();
                perm.shuffle(&mut stream(seed, &[INTERLEAVER_DOMAIN]));
                Self { perm }
            }
            InterleaverSpec::LevelMajor => {
                let mut perm = vec![0; len];
                for t in 0..n_sym {
                    for j in 0..bits_per_symbol {
                        perm[t * bits_per_symbol + j] = j * n_sym + t;
                    }
                }
                Self { perm }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave<T: Copy>(&self, seq: &[T]) -> Vec<T> {
        self.perm.iter().map(|&p| seq[p]).collect()
    }

    pub fn deinterleave<T: Copy + Default>(&self, seq: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); seq.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = seq[i];
        }
        out
    }
}

pub fn interleave<T: Copy>(seq: &[T], perm: &Interleaver) -> Result<Vec<T>> {
    if seq.len() != perm.len() {
        return invalid(format!("sequence of {} against permutation of {}", seq.len(), perm.len()));
    }
    Ok(perm.interleave(seq))
}

pub fn deinterleave<T: Copy + Default>(seq: &[T], perm: &Interleaver) -> Result<Vec<T>> {
    if seq.len() != perm.len() {
        return invalid(format!("sequence of {} against permutation of {}", seq.len(), perm.len()));
    }
    Ok(perm.deinterleave(seq))
}

/// Scheme descriptor as found in config files. The MLC labeling is always
/// natural; BICM uses whatever the descriptor names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub n_sym: usize,
    pub constellation: ConstellationSpec,
    #[serde(default)]
    pub interleaver: InterleaverSpec,
}

/// A fully specified transceiver.
#[derive(Debug, Clone)]
pub struct SchemeConfig {
    kind: SchemeKind,
    n_sym: usize,
    constellation: Constellation,
    codes: Vec<PolarCode>,
    interleaver_spec: InterleaverSpec,
    interleaver: Interleaver,
}

impl SchemeConfig {
    pub fn new_mlc(constellation: Constellation, codes: Vec<PolarCode>) -> Result<Self> {
        if constellation.labeling() != Labeling::Natural {
            return invalid("MLC requires the natural (set-partitioning) labeling");
        }
        let m = constellation.bits_per_symbol();
        if codes.len() != m {
            return invalid(format!("MLC over {m}-bit symbols needs {m} level codes, got {}", codes.len()));
        }
        let n_sym = codes[0].block_len();
        if codes.iter().any(|c| c.block_len() != n_sym) {
            return invalid("all MLC level codes must have the same length");
        }
        Ok(Self {
            kind: SchemeKind::Mlc,
            n_sym,
            constellation,
            codes,
            interleaver_spec: InterleaverSpec::Identity,
            interleaver: Interleaver::identity(0),
        })
    }

    pub fn new_bicm(constellation: Constellation, code: PolarCode, interleaver: InterleaverSpec) -> Result<Self> {
        let m = constellation.bits_per_symbol();
        if !code.block_len().is_multiple_of(m) {
            return invalid(format!("BICM code length {} is not a multiple of {m}", code.block_len()));
        }
        let n_sym = code.block_len() / m;
        Ok(Self {
            kind: SchemeKind::Bicm,
            n_sym,
            interleaver: Interleaver::build(interleaver, m, n_sym),
            interleaver_spec: interleaver,
            constellation,
            codes: vec![code],
        })
    }

    /// The scheme described by `spec` with every bit channel carrying
    /// information; used when only the channel structure matters.
    pub fn layout(spec: &SchemeSpec) -> Result<Self> {
        spec.validate()?;
        let c = spec.constellation_for_kind().build()?;
        let m = c.bits_per_symbol();
        match spec.kind {
            SchemeKind::Mlc => Self::new_mlc(c, vec![PolarCode::all_info(spec.n_sym)?; m]),
            SchemeKind::Bicm => Self::new_bicm(c, PolarCode::all_info(m * spec.n_sym)?, spec.interleaver),
        }
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn n_sym(&self) -> usize {
        self.n_sym
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn codes(&self) -> &[PolarCode] {
        &self.codes
    }

    pub fn interleaver(&self) -> &Interleaver {
        &self.interleaver
    }

    pub fn interleaver_spec(&self) -> InterleaverSpec {
        self.interleaver_spec
    }

    /// Channel symbols per frame.
    pub fn symbols_per_frame(&self) -> usize {
        self.n_sym
    }

    /// Synthesized bit channels over all codes.
    pub fn bit_channel_count(&self) -> usize {
        self.constellation.bits_per_symbol() * self.n_sym
    }

    pub fn info_bits(&self) -> usize {
        self.codes.iter().map(PolarCode::info_count).sum()
    }

    pub fn info_per_code(&self) -> Vec<usize> {
        self.codes.iter().map(PolarCode::info_count).collect()
    }

    /// Information bits per channel symbol.
    pub fn rate_per_symbol(&self) -> f64 {
        self.info_bits() as f64 / self.n_sym as f64
    }

    pub fn spec(&self) -> SchemeSpec {
        SchemeSpec {
            kind: self.kind,
            n_sym: self.n_sym,
            constellation: self.constellation.spec(),
            interleaver: self.interleaver_spec,
        }
    }

    pub fn encode(&self, msg: &[u8]) -> Result<Vec<Complex64>> {
        match self.kind {
            SchemeKind::Mlc => mlc_encode(msg, self),
            SchemeKind::Bicm => bicm_encode(msg, self),
        }
    }

    pub fn decode(&self, y: &[Complex64], sigma2: f64) -> Result<Vec<u8>> {
        match self.kind {
            SchemeKind::Mlc => mlc_msd_decode(y, sigma2, self),
            SchemeKind::Bicm => bicm_sc_decode(y, sigma2, self),
        }
    }
}

impl SchemeSpec {
    fn constellation_for_kind(&self) -> ConstellationSpec {
        match self.kind {
            SchemeKind::Mlc => ConstellationSpec { labeling: Labeling::Natural, ..self.constellation },
            SchemeKind::Bicm => self.constellation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n_sym.is_power_of_two() {
            return invalid(format!("n_sym = {} is not a power of two", self.n_sym));
        }
        let m = self.constellation.m;
        if self.kind == SchemeKind::Bicm && !(m * self.n_sym).is_power_of_two() {
            return invalid(format!("BICM code length {m} * {} is not a power of two", self.n_sym));
        }
        self.constellation.build().map(|_| ())
    }
}

/// Outcome of one decoded frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameResult {
    pub msg_hat: Vec<u8>,
    pub bit_errors: usize,
    pub frame_error: bool,
}

impl FrameResult {
    pub fn compare(msg: &[u8], msg_hat: Vec<u8>) -> Self {
        let bit_errors = msg.iter().zip(&msg_hat).filter(|(a, b)| a != b).count();
        Self { msg_hat, bit_errors, frame_error: bit_errors > 0 }
    }
}

fn check_kind(s: &SchemeConfig, kind: SchemeKind) -> Result<()> {
    if s.kind != kind {
        return invalid(format!("expected a {kind:?} scheme, got {:?}", s.kind));
    }
    Ok(())
}

fn check_msg(msg: &[u8], s: &SchemeConfig) -> Result<()> {
    if msg.len() != s.info_bits() {
        return invalid(format!("message has {} bits, scheme carries {}", msg.len(), s.info_bits()));
    }
    Ok(())
}

fn check_received(y: &[Complex64], s: &SchemeConfig) -> Result<()> {
    if y.len() != s.n_sym {
        return invalid(format!("received {} symbols, frame has {}", y.len(), s.n_sym));
    }
    Ok(())
}

/// Maps level codewords onto symbols: label bit `l` of symbol `t` is `xs[l][t]`.
pub fn mlc_modulate(xs: &[Vec<u8>], c: &Constellation) -> Result<Vec<Complex64>> {
    let m = c.bits_per_symbol();
    if xs.len() != m {
        return invalid(format!("{} level codewords for a {m}-bit constellation", xs.len()));
    }
    let n = xs[0].len();
    Ok((0..n)
        .map(|t| c.point(xs.iter().fold(0, |acc, x| (acc << 1) | usize::from(x[t]))))
        .collect())
}

pub fn mlc_encode(msg: &[u8], s: &SchemeConfig) -> Result<Vec<Complex64>> {
    check_kind(s, SchemeKind::Mlc)?;
    check_msg(msg, s)?;
    let mut rest = msg;
    let mut xs = Vec::with_capacity(s.codes.len());
    for code in &s.codes {
        let (head, tail) = rest.split_at(code.info_count());
        xs.push(polar_encode(head, code)?);
        rest = tail;
    }
    mlc_modulate(&xs, &s.constellation)
}

/// Multistage decoding with hard re-encoded decisions between levels.
pub fn mlc_msd_decode(y: &[Complex64], sigma2: f64, s: &SchemeConfig) -> Result<Vec<u8>> {
    Ok(mlc_msd_trace(y, sigma2, s)?.msg_hat)
}

/// Per-level internals of a multistage decode.
#[derive(Debug, Clone)]
pub struct MsdTrace {
    pub msg_hat: Vec<u8>,
    pub level_llrs: Vec<Vec<f64>>,
    pub level_codewords: Vec<Vec<u8>>,
}

pub fn mlc_msd_trace(y: &[Complex64], sigma2: f64, s: &SchemeConfig) -> Result<MsdTrace> {
    check_kind(s, SchemeKind::Mlc)?;
    check_received(y, s)?;
    let c = &s.constellation;
    let mut msg_hat = Vec::with_capacity(s.info_bits());
    let mut level_llrs = Vec::with_capacity(s.codes.len());
    let mut level_codewords: Vec<Vec<u8>> = Vec::with_capacity(s.codes.len());
    let mut lower = Vec::with_capacity(s.codes.len());
    for (l, code) in s.codes.iter().enumerate() {
        let llrs = y
            .iter()
            .enumerate()
            .map(|(t, yt)| {
                lower.clear();
                lower.extend(level_codewords.iter().map(|x| x[t]));
                demap_mlc_level(*yt, sigma2, c, l, &lower)
            })
            .collect::<Result<Vec<f64>>>()?;
        let d = sc_decode(&llrs, code)?;
        msg_hat.extend(d.msg_hat);
        level_llrs.push(llrs);
        level_codewords.push(d.x_hat);
    }
    Ok(MsdTrace { msg_hat, level_llrs, level_codewords })
}

pub fn bicm_encode(msg: &[u8], s: &SchemeConfig) -> Result<Vec<Complex64>> {
    check_kind(s, SchemeKind::Bicm)?;
    check_msg(msg, s)?;
    let x = polar_encode(msg, &s.codes[0])?;
    map_bits(&s.interleaver.interleave(&x), &s.constellation)
}

/// Bit LLRs in codeword order (after deinterleaving).
pub fn bicm_llrs(y: &[Complex64], sigma2: f64, s: &SchemeConfig, mode: DemapMode) -> Result<Vec<f64>> {
    check_kind(s, SchemeKind::Bicm)?;
    check_received(y, s)?;
    let m = s.constellation.bits_per_symbol();
    let mut llrs = vec![0.0; m * s.n_sym];
    for (yt, out) in y.iter().zip(llrs.chunks_exact_mut(m)) {
        demap_bicm_into(*yt, sigma2, &s.constellation, mode, out)?;
    }
    Ok(s.interleaver.deinterleave(&llrs))
}

pub fn bicm_sc_decode(y: &[Complex64], sigma2: f64, s: &SchemeConfig) -> Result<Vec<u8>> {
    let llrs = bicm_llrs(y, sigma2, s, DemapMode::Exact)?;
    Ok(sc_decode(&llrs, &s.codes[0])?.msg_hat)
}

/// Codes for a scheme together with the reliabilities they were chosen from.
#[derive(Debug, Clone)]
pub struct Design {
    pub scheme: SchemeConfig,
    /// Level-major for MLC.
    pub reliabilities: ReliabilityList,
}

/// Reliability list of every bit channel of `layout`. `Bec` and `Ga` treat
/// each coded bit as BPSK with the same energy per coded bit.
pub fn estimate_reliabilities(spec: &DesignSpec, layout: &SchemeConfig) -> Result<ReliabilityList> {
    let m = layout.constellation().bits_per_symbol();
    let per_code_len = match layout.kind() {
        SchemeKind::Mlc => layout.n_sym(),
        SchemeKind::Bicm => m * layout.n_sym(),
    };
    let stages = per_code_len.trailing_zeros() as usize;
    let copies = layout.codes().len();
    let bit_esn0 = bpsk_equivalent_esn0(spec.design_esn0_db, m);
    let one = match spec.estimator {
        Estimator::Mc => return mc_bit_channel_estimate(spec, layout),
        Estimator::Ga => ga_density_evolution(stages, bpsk_llr_mean(bit_esn0))?,
        Estimator::Bec => bec_bhattacharyya(stages, (-(10f64.powf(bit_esn0 / 10.0))).exp())?,
    };
    Ok(ReliabilityList {
        estimates: one.estimates.repeat(copies),
        source: one.source,
        design_point: one.design_point,
    })
}

/// Builds the codes of `spec` so that `design.info_bits` information bits
/// sit on the most reliable bit channels.
pub fn design_scheme(spec: &SchemeSpec, design: &DesignSpec) -> Result<Design> {
    spec.validate()?;
    let layout = SchemeConfig::layout(spec)?;
    let rel = estimate_reliabilities(design, &layout)?;
    let scheme = scheme_from_reliabilities(&layout, &rel, design.info_bits)?;
    Ok(Design { scheme, reliabilities: rel })
}

/// Applies a frozen-set selection to a layout: joint allocation for MLC,
/// plain selection for BICM.
pub fn scheme_from_reliabilities(layout: &SchemeConfig, rel: &ReliabilityList, k: usize) -> Result<SchemeConfig> {
    let c = layout.constellation().clone();
    match layout.kind() {
        SchemeKind::Mlc => {
            let levels = rel.split_levels(c.bits_per_symbol())?;
            let alloc = allocate_mlc(&levels, k)?;
            let codes = alloc.masks.into_iter().map(PolarCode::new).collect::<Result<Vec<_>>>()?;
            SchemeConfig::new_mlc(c, codes)
        }
        SchemeKind::Bicm => {
            let code = PolarCode::new(select_frozen(rel, k)?)?;
            SchemeConfig::new_bicm(c, code, layout.interleaver_spec())
        }
    }
}

/// Outcome of [`equivalence_check_4qam`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub label_identity_ok: bool,
    pub frozen_sets_match: bool,
    pub trials_run: u64,
    pub symbols_equal: u64,
    pub decisions_equal: u64,
    pub max_llr_gap: f64,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.label_identity_ok
            && self.frozen_sets_match
            && self.symbols_equal == self.trials_run
            && self.decisions_equal == self.trials_run
            && self.max_llr_gap <= 1e-6
    }
}

const EQUIV_DOMAIN: u64 = 0x4551_5556;

/// Checks that polar-coded BICM over Gray 4-QAM and MLC over set-partitioned
/// 4-QAM are the same transceiver.
///
/// Static part: the Gray mapper applied to `T * u`, `T = gray_sp_matrix(2)`,
/// equals the set-partitioning mapper applied to `u` for all four labels.
///
/// Dynamic part: the BICM code has length `2 n_sym` and places codeword
/// bits `t` and `t + n_sym` on the I and Q bits of symbol `t`. The outer
/// polar stage of that code then pairs the two bits of each symbol, and its
/// two halves are the MLC level codes. Both frozen sets come from one
/// reliability list. For each trial a common message and noise realization
/// is pushed through both receivers; the check-node and variable-node
/// combinations of the two Gray bit LLRs must reproduce the MLC level-0 and
/// level-1 metrics, and the decoded messages must coincide.
pub fn equivalence_check_4qam(n_sym: usize, k_total: usize, design: &DesignSpec, trials: u64, seed: u64) -> Result<EquivalenceReport> {
    equivalence_check(
        ConstellationSpec { kind: ConstellationKind::Qam, m: 2, labeling: Labeling::Gray },
        n_sym,
        k_total,
        design,
        trials,
        seed,
    )
}

pub fn equivalence_check(
    constellation: ConstellationSpec,
    n_sym: usize,
    k_total: usize,
    design: &DesignSpec,
    trials: u64,
    seed: u64,
) -> Result<EquivalenceReport> {
    if constellation.kind != ConstellationKind::Qam || constellation.m != 2 {
        return invalid("the equivalence check is defined for 4-QAM only");
    }
    if trials == 0 {
        return invalid("the equivalence check needs at least one trial");
    }
    let gray = ConstellationSpec { labeling: Labeling::Gray, ..constellation }.build()?;
    let sp = ConstellationSpec { labeling: Labeling::Natural, ..constellation }.build()?;

    let t = gray_sp_matrix(2)?;
    let label_identity_ok = (0..4).all(|u| gray.point(bits_to_label(&t.apply_col(&label_to_bits(u, 2)))) == sp.point(u));

    let bicm_spec = SchemeSpec { kind: SchemeKind::Bicm, n_sym, constellation: gray.spec(), interleaver: InterleaverSpec::LevelMajor };
    bicm_spec.validate()?;
    let bicm_layout = SchemeConfig::layout(&bicm_spec)?;
    let rel = estimate_reliabilities(&DesignSpec { kind: None, ..design.clone() }, &bicm_layout)?;
    let bicm = scheme_from_reliabilities(&bicm_layout, &rel, k_total)?;
    let mlc_layout = SchemeConfig::new_mlc(sp, vec![PolarCode::all_info(n_sym)?; 2])?;
    let mlc = scheme_from_reliabilities(&mlc_layout, &rel, k_total)?;
    let frozen_sets_match = bicm.codes()[0].frozen_mask()
        == [mlc.codes()[0].frozen_mask(), mlc.codes()[1].frozen_mask()].concat().as_slice();

    let noise = NoiseModel::from_esn0(design.design_esn0_db, 2)?;
    let sigma2 = noise.sigma2();
    let mut report = EquivalenceReport {
        label_identity_ok,
        frozen_sets_match,
        trials_run: trials,
        symbols_equal: 0,
        decisions_equal: 0,
        max_llr_gap: 0.0,
    };
    for trial in 0..trials {
        let mut rng = stream(seed, &[EQUIV_DOMAIN, trial]);
        let msg = random_bits(&mut rng, k_total);
        let tx_bicm = bicm_encode(&msg, &bicm)?;
        let tx_mlc = mlc_encode(&msg, &mlc)?;
        if tx_bicm.iter().zip(&tx_mlc).all(|(a, b)| (a - b).norm() < 1e-12) {
            report.symbols_equal += 1;
        }
        let y = awgn_apply(&tx_bicm, &noise, &mut rng);

        let gray_llrs = bicm_llrs(&y, sigma2, &bicm, DemapMode::Exact)?;
        let (l_i, l_q) = gray_llrs.split_at(n_sym);
        let trace = mlc_msd_trace(&y, sigma2, &mlc)?;
        for tt in 0..n_sym {
            let f = checknode_llr(l_i[tt], l_q[tt], CheckNodeMode::Exact);
            let g = varnode_llr(l_i[tt], l_q[tt], trace.level_codewords[0][tt]);
            let gap = (f - trace.level_llrs[0][tt]).abs().max((g - trace.level_llrs[1][tt]).abs());
            report.max_llr_gap = report.max_llr_gap.max(gap);
        }
        let bicm_hat = sc_decode(&gray_llrs, &bicm.codes()[0])?.msg_hat;
        if bicm_hat == trace.msg_hat {
            report.decisions_equal += 1;
        }
    }
    Ok(report)
}
