//! Bit-channel reliability estimation and frozen-set selection.
//!
//! Three estimators are available. `Bec` and `Ga` evaluate a binary-input
//! surrogate of the channel; `Mc` measures the synthesized bit channels of
//! the actual scheme (constellation, labeling, interleaver and receiver
//! metric) by genie-aided SC probing, which is what matching the code to a
//! higher-order constellation requires.
//!
//! Lists are in natural index order. The recursion producing index `2i`
//! (degraded, check-node child) and `2i + 1` (upgraded, variable-node child)
//! from index `i` matches the decoding order of [`crate::polar::sc_decode`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{NoiseModel, awgn_apply, snr_to_sigma2};
use crate::error::{Result, invalid};
use crate::modulation::{DemapMode, demap_bicm_into, demap_mlc_level, map_bits};
use crate::polar::{polar_transform_in_place, sc_genie_probe};
use crate::rng::{random_bits, stream};
use crate::schemes::{SchemeConfig, SchemeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Bec,
    #[default]
    Ga,
    Mc,
}

/// Per-bit-channel error probability proxies, lower is more reliable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityList {
    pub estimates: Vec<f64>,
    pub source: Estimator,
    /// Erasure probability for `Bec`, LLR mean for `Ga`, Es/N0 in dB for `Mc`.
    pub design_point: f64,
}

impl ReliabilityList {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    /// Splits a level-major list into `levels` equal parts.
    pub fn split_levels(&self, levels: usize) -> Result<Vec<ReliabilityList>> {
        if levels == 0 || !self.len().is_multiple_of(levels) {
            return invalid(format!("cannot split {} estimates into {levels} levels", self.len()));
        }
        Ok(self
            .estimates
            .chunks_exact(self.len() / levels)
            .map(|c| ReliabilityList { estimates: c.to_vec(), source: self.source, design_point: self.design_point })
            .collect())
    }
}

/// Which transmission a design targets. `Bpsk` is any single-bit scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Bpsk,
    Mlc,
    Bicm,
}

/// Parameters of a code construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    /// Checked against the scheme when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<DesignKind>,
    pub estimator: Estimator,
    pub design_esn0_db: f64,
    pub info_bits: usize,
    #[serde(default = "default_mc_trials")]
    pub mc_trials: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_mc_trials() -> u64 {
    10_000
}

pub fn bec_bhattacharyya(stages: usize, eps: f64) -> Result<ReliabilityList> {
    if !(0.0..=1.0).contains(&eps) {
        return invalid(format!("erasure probability {eps} outside [0, 1]"));
    }
    let mut z = vec![eps];
    for _ in 0..stages {
        z = z.iter().flat_map(|&v| [2.0 * v - v * v, v * v]).collect();
    }
    Ok(ReliabilityList { estimates: z, source: Estimator::Bec, design_point: eps })
}

// Piecewise approximation of
//   phi(x) = 1 - E[tanh(L/2)],  L ~ N(x, 2x),
// used by the check-node update of Gaussian-approximation density evolution:
//   0 < x <= x_s: phi(x) = min(1, exp(-0.4527 x^0.86 + 0.0218))
//   x > x_s:      phi(x) = sqrt(pi / x) exp(-x / 4) (1 - 10 / (7x))
// with phi(0) = 1. The split x_s = 14.3943... is where the two pieces
// intersect, which keeps phi continuous and strictly decreasing (the pieces
// disagree by about 2.5% at the commonly quoted split of 10). Everything
// below works with ln(phi) so very reliable channels do not underflow.
const PHI_A: f64 = 0.4527;
const PHI_B: f64 = 0.86;
const PHI_C: f64 = 0.0218;
const PHI_SPLIT: f64 = 14.394_352_942_168_423;

pub fn ln_phi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= PHI_SPLIT {
        (-PHI_A * x.powf(PHI_B) + PHI_C).min(0.0)
    } else {
        0.5 * (std::f64::consts::PI / x).ln() - x / 4.0 + (1.0 - 10.0 / (7.0 * x)).ln()
    }
}

/// Inverse of [`ln_phi`]: the mean `x` with `ln phi(x) = t`, `t <= 0`.
pub fn inv_ln_phi(t: f64) -> f64 {
    if t >= 0.0 {
        return 0.0;
    }
    if t >= ln_phi(PHI_SPLIT) {
        let x = ((PHI_C - t) / PHI_A).powf(1.0 / PHI_B);
        return x.min(PHI_SPLIT);
    }
    // ln_phi is strictly decreasing above the split: bracket then bisect
    let mut lo = PHI_SPLIT;
    let mut hi = 2.0 * PHI_SPLIT;
    while ln_phi(hi) > t {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ln_phi(mid) > t { lo = mid } else { hi = mid }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// LLR mean of the check-node child of a channel with mean `m`.
pub fn ga_check_mean(m: f64) -> f64 {
    // 1 - (1 - phi)^2 = phi (2 - phi)
    let lp = ln_phi(m);
    inv_ln_phi(lp + (2.0 - lp.exp()).ln())
}

/// Gaussian tail `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

pub fn ga_density_evolution(stages: usize, llr_mean: f64) -> Result<ReliabilityList> {
    if !(llr_mean >= 0.0) || !llr_mean.is_finite() {
        return invalid(format!("LLR mean must be finite and non-negative, got {llr_mean}"));
    }
    let means = ga_means(stages, llr_mean);
    Ok(ReliabilityList {
        estimates: means.iter().map(|&m| q_function((m / 2.0).sqrt())).collect(),
        source: Estimator::Ga,
        design_point: llr_mean,
    })
}

/// Final LLR means of every synthesized channel.
pub fn ga_means(stages: usize, llr_mean: f64) -> Vec<f64> {
    let mut means = vec![llr_mean];
    for _ in 0..stages {
        means = means.iter().flat_map(|&m| [ga_check_mean(m), 2.0 * m]).collect();
    }
    means
}

/// Binary-input AWGN LLR mean `2 / sigma2` at the given Es/N0.
pub fn bpsk_llr_mean(esn0_db: f64) -> f64 {
    2.0 / snr_to_sigma2(esn0_db, 1)
}

/// Es/N0 of the BPSK channel with the same energy per coded bit as an
/// `m`-bit constellation at `esn0_db`.
pub fn bpsk_equivalent_esn0(esn0_db: f64, bits_per_symbol: usize) -> f64 {
    esn0_db - 10.0 * (bits_per_symbol as f64).log10()
}

/// Indices with the `k` smallest estimates become information positions.
/// Among equal estimates the larger index is preferred for information.
pub fn select_frozen(rel: &ReliabilityList, k: usize) -> Result<Vec<u8>> {
    select_frozen_from(&rel.estimates, k)
}

fn select_frozen_from(estimates: &[f64], k: usize) -> Result<Vec<u8>> {
    let n = estimates.len();
    if k > n {
        return invalid(format!("cannot place {k} information bits on {n} channels"));
    }
    if estimates.iter().any(|e| e.is_nan()) {
        return invalid("reliability estimates contain NaN");
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| estimates[a].total_cmp(&estimates[b]).then(b.cmp(&a)));
    let mut mask = vec![1u8; n];
    for &i in &order[..k] {
        mask[i] = 0;
    }
    Ok(mask)
}

/// Result of a joint rate allocation over MLC levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MlcAllocation {
    pub masks: Vec<Vec<u8>>,
    pub info_per_level: Vec<usize>,
}

/// Selects the `k_total` best channels out of all levels jointly. Ties are
/// resolved in (level, index) order exactly as [`select_frozen`] would on the
/// level-major concatenation.
pub fn allocate_mlc(levels: &[ReliabilityList], k_total: usize) -> Result<MlcAllocation> {
    let Some(first) = levels.first() else {
        return invalid("no levels to allocate");
    };
    let n = first.len();
    if levels.iter().any(|l| l.len() != n) {
        return invalid("all levels must have the same number of bit channels");
    }
    let pooled: Vec<f64> = levels.iter().flat_map(|l| l.estimates.iter().copied()).collect();
    let mask = select_frozen_from(&pooled, k_total)?;
    let masks: Vec<Vec<u8>> = if n == 0 {
        vec![Vec::new(); levels.len()]
    } else {
        mask.chunks_exact(n).map(<[u8]>::to_vec).collect()
    };
    let info_per_level = masks.iter().map(|m| m.iter().filter(|&&b| b == 0).count()).collect();
    Ok(MlcAllocation { masks, info_per_level })
}

const MC_DOMAIN: u64 = 0x4d43_5452_4941_4c53;
const MC_CHUNK: u64 = 64;

/// Genie-aided Monte-Carlo estimate of every synthesized bit channel of
/// `scheme` at `spec.design_esn0_db`.
///
/// Each trial draws a fresh uniformly random source vector for every code
/// (the frozen set is not needed; genie probing conditions on the true
/// bits), transmits it and records which SC decisions fail. MLC levels are
/// demapped conditioned on the true bits of the lower levels and their
/// counts are concatenated level-major. Trial `t` uses its own random stream
/// derived from `(spec.seed, t)`, so the result is independent of the
/// thread count.
pub fn mc_bit_channel_estimate(spec: &DesignSpec, scheme: &SchemeConfig) -> Result<ReliabilityList> {
    if spec.mc_trials == 0 {
        return invalid("Monte-Carlo construction needs at least one trial");
    }
    check_kind(spec, scheme)?;
    let noise = NoiseModel::from_esn0(spec.design_esn0_db, scheme.constellation().complex_dims())?;
    let total = scheme.bit_channel_count();
    let chunks = spec.mc_trials.div_ceil(MC_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<u64>> {
            let mut acc = vec![0u64; total];
            let end = ((c + 1) * MC_CHUNK).min(spec.mc_trials);
            for t in c * MC_CHUNK..end {
                let errs = probe_trial(scheme, &noise, spec.seed, t)?;
                for (a, e) in acc.iter_mut().zip(errs) {
                    *a += u64::from(e);
                }
            }
            Ok(acc)
        })
        .try_reduce(
            || vec![0u64; total],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    let trials = spec.mc_trials as f64;
    Ok(ReliabilityList {
        estimates: counts.iter().map(|&c| c as f64 / trials).collect(),
        source: Estimator::Mc,
        design_point: spec.design_esn0_db,
    })
}

fn check_kind(spec: &DesignSpec, scheme: &SchemeConfig) -> Result<()> {
    let m = scheme.constellation().bits_per_symbol();
    let ok = match spec.kind {
        None => true,
        Some(DesignKind::Bpsk) => m == 1,
        Some(DesignKind::Mlc) => scheme.kind() == SchemeKind::Mlc,
        Some(DesignKind::Bicm) => scheme.kind() == SchemeKind::Bicm,
    };
    if !ok {
        return invalid(format!("design kind {:?} does not match a {:?} scheme with m = {m}", spec.kind, scheme.kind()));
    }
    Ok(())
}

fn probe_trial(scheme: &SchemeConfig, noise: &NoiseModel, seed: u64, trial: u64) -> Result<Vec<u8>> {
    let mut rng = stream(seed, &[MC_DOMAIN, trial]);
    let c = scheme.constellation();
    let m = c.bits_per_symbol();
    let n_sym = scheme.n_sym();
    match scheme.kind() {
        SchemeKind::Bicm => {
            let u = random_bits(&mut rng, m * n_sym);
            let mut x = u.clone();
            polar_transform_in_place(&mut x);
            let symbols = map_bits(&scheme.interleaver().interleave(&x), c)?;
            let y = awgn_apply(&symbols, noise, &mut rng);
            let mut llrs = vec![0.0; m * n_sym];
            for (yt, out) in y.iter().zip(llrs.chunks_exact_mut(m)) {
                demap_bicm_into(*yt, noise.sigma2(), c, DemapMode::Exact, out)?;
            }
            sc_genie_probe(&scheme.interleaver().deinterleave(&llrs), &u)
        }
        SchemeKind::Mlc => {
            let us: Vec<Vec<u8>> = (0..m).map(|_| random_bits(&mut rng, n_sym)).collect();
            let xs: Vec<Vec<u8>> = us
                .iter()
                .map(|u| {
                    let mut x = u.clone();
                    polar_transform_in_place(&mut x);
                    x
                })
                .collect();
            let symbols = crate::schemes::mlc_modulate(&xs, c)?;
            let y = awgn_apply(&symbols, noise, &mut rng);
            let mut out = Vec::with_capacity(m * n_sym);
            let mut lower = vec![0u8; m];
            for (l, u) in us.iter().enumerate() {
                let mut llrs = Vec::with_capacity(n_sym);
                for (t, yt) in y.iter().enumerate() {
                    for (j, x) in xs[..l].iter().enumerate() {
                        lower[j] = x[t];
                    }
                    llrs.push(demap_mlc_level(*yt, noise.sigma2(), c, l, &lower[..l])?);
                }
                out.extend(sc_genie_probe(&llrs, u)?);
            }
            Ok(out)
        }
    }
}
