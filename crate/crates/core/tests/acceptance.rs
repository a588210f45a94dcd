//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion failed.

use std::panic::{AssertUnwindSafe, catch_unwind};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use polarcm::channel::snr_to_sigma2;
use polarcm::construction::{
    DesignSpec, Estimator, bec_bhattacharyya, bpsk_llr_mean, ga_density_evolution, mc_bit_channel_estimate,
};
use polarcm::harness::{SimConfig, SnrReference, SnrSweep, StoppingRule, run_simulation, simulate_point};
use polarcm::modulation::{
    Constellation, ConstellationKind, ConstellationSpec, DemapMode, Labeling, demap_bicm_llrs, gray_code,
    gray_sp_matrix, label_to_bits, mc_mutual_information,
};
use polarcm::polar::{polar_transform, saturate};
use polarcm::rng::{random_bits, standard_normal_pair, stream};
use polarcm::schemes::{InterleaverSpec, SchemeConfig, SchemeKind, SchemeSpec, design_scheme, equivalence_check_4qam};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok { Ok(detail) } else { Err(detail) }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn xor(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

fn criterion_1() -> Outcome {
    let mut cases = 0u64;
    for n in [2usize, 4, 8] {
        let inputs: Vec<Vec<u8>> = (0..1usize << n).map(|v| (0..n).map(|i| ((v >> i) & 1) as u8).collect()).collect();
        let images: Vec<Vec<u8>> = inputs.iter().map(|u| polar_transform(u).unwrap()).collect();
        for (u, x) in inputs.iter().zip(&images) {
            if polar_transform(x).unwrap() != *u {
                return Err(format!("involution fails for N={n}, u={u:?}"));
            }
        }
        for (a, xa) in inputs.iter().zip(&images) {
            for (b, xb) in inputs.iter().zip(&images) {
                if polar_transform(&xor(a, b)).unwrap() != xor(xa, xb) {
                    return Err(format!("linearity fails for N={n}"));
                }
                cases += 1;
            }
        }
    }
    let mut rng = stream(1, &[1]);
    for _ in 0..10_000 {
        let a = random_bits(&mut rng, 16);
        let b = random_bits(&mut rng, 16);
        let (xa, xb) = (polar_transform(&a).unwrap(), polar_transform(&b).unwrap());
        if polar_transform(&xa).unwrap() != a || polar_transform(&xor(&a, &b)).unwrap() != xor(&xa, &xb) {
            return Err("N=16 random input fails".into());
        }
        cases += 1;
    }
    Ok(format!("{cases} input pairs"))
}

/// Rank over GF(2) of row bitmasks.
fn gf2_rank(rows: &[u64]) -> usize {
    let mut basis: Vec<u64> = Vec::new();
    for &r in rows {
        let mut v = r;
        for &b in &basis {
            v = v.min(v ^ b);
        }
        if v != 0 {
            basis.push(v);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

/// Erasure probability of each bit channel by enumerating erasure patterns.
/// Row `i` of the generator has a one in column `j` iff the bits of `j` are
/// a subset of the bits of `i`. Given the unerased positions `S` and the
/// earlier inputs, `u_i` is erased iff row `i` restricted to `S` lies in the
/// span of the later rows restricted to `S`.
fn brute_force_bec(n_len: usize, eps: f64) -> Vec<f64> {
    let rows: Vec<u64> =
        (0..n_len).map(|i| (0..n_len).filter(|&j| i & j == j).fold(0u64, |acc, j| acc | (1 << j))).collect();
    let mut p = vec![0.0; n_len];
    for known in 0u64..(1 << n_len) {
        let k = known.count_ones() as i32;
        let weight = (1.0 - eps).powi(k) * eps.powi(n_len as i32 - k);
        let masked: Vec<u64> = rows.iter().map(|r| r & known).collect();
        for i in 0..n_len {
            if gf2_rank(&masked[i..]) == gf2_rank(&masked[i + 1..]) {
                p[i] += weight;
            }
        }
    }
    p
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for stages in 1..=3 {
        for eps in [0.1, 0.5, 0.9] {
            let z = bec_bhattacharyya(stages, eps).unwrap().estimates;
            let oracle = brute_force_bec(1 << stages, eps);
            for (a, b) in z.iter().zip(&oracle) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    if worst > 1e-12 {
        return Err(format!("brute-force mismatch {worst:e}"));
    }
    let mut worst_cons = 0.0f64;
    for eps in [0.1, 0.5, 0.9] {
        let mut prev = bec_bhattacharyya(0, eps).unwrap().estimates;
        for stages in 1..=10 {
            let z = bec_bhattacharyya(stages, eps).unwrap().estimates;
            for (i, zp) in prev.iter().enumerate() {
                worst_cons = worst_cons.max((z[2 * i] + z[2 * i + 1] - 2.0 * zp).abs());
            }
            prev = z;
        }
    }
    check(worst_cons <= 1e-12, format!("max brute-force gap {worst:.1e}, max conservation gap {worst_cons:.1e}"))
}

fn bpsk_spec(n_sym: usize) -> SchemeSpec {
    SchemeSpec {
        kind: SchemeKind::Bicm,
        n_sym,
        constellation: ConstellationSpec { kind: ConstellationKind::Ask, m: 1, labeling: Labeling::Gray },
        interleaver: InterleaverSpec::Identity,
    }
}

fn criterion_3() -> Outcome {
    let trials = 100_000u64;
    let layout = SchemeConfig::layout(&bpsk_spec(8)).unwrap();
    let design = DesignSpec { kind: None, estimator: Estimator::Mc, design_esn0_db: 0.0, info_bits: 0, mc_trials: trials, seed: 3 };
    let mc = mc_bit_channel_estimate(&design, &layout).unwrap().estimates;
    let ga = ga_density_evolution(3, bpsk_llr_mean(0.0)).unwrap().estimates;
    let mut worst = (0usize, 0.0f64);
    let mut lines = Vec::new();
    for (i, (g, p)) in ga.iter().zip(&mc).enumerate() {
        let se = (p * (1.0 - p) / trials as f64).sqrt().max(f64::MIN_POSITIVE);
        let z = (g - p).abs() / se;
        lines.push(format!("{i}:{g:.4}/{p:.4}"));
        if z > worst.1 {
            worst = (i, z);
        }
    }
    check(
        worst.1 <= 3.0,
        format!("worst index {} at {:.1} SE; GA/MC {}", worst.0, worst.1, lines.join(" ")),
    )
}

fn brute_llrs(y: Complex64, sigma2: f64, c: &Constellation) -> Vec<f64> {
    let m = c.bits_per_symbol();
    let metrics: Vec<f64> = c.points().iter().map(|p| -(y - p).norm_sqr() / (2.0 * sigma2)).collect();
    let lse = |bit: usize, val: usize| {
        let sel: Vec<f64> =
            metrics.iter().enumerate().filter(|(l, _)| (l >> (m - 1 - bit)) & 1 == val).map(|(_, &v)| v).collect();
        let mx = sel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        mx + sel.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
    };
    (0..m).map(|j| saturate(lse(j, 0) - lse(j, 1))).collect()
}

fn criterion_4() -> Outcome {
    let cases = [
        (ConstellationKind::Ask, 1),
        (ConstellationKind::Ask, 2),
        (ConstellationKind::Qam, 2),
        (ConstellationKind::Qam, 4),
    ];
    let mut rng = stream(4, &[]);
    let mut worst = 0.0f64;
    for (kind, m) in cases {
        for labeling in [Labeling::Gray, Labeling::Natural] {
            let c = ConstellationSpec { kind, m, labeling }.build().unwrap();
            for _ in 0..1000 {
                let sigma2: f64 = rng.random_range(0.01..2.0);
                let (a, b) = standard_normal_pair(&mut rng);
                let p = c.point(rng.random_range(0..c.size()));
                let y = match kind {
                    ConstellationKind::Ask => Complex64::new(p.re + a * sigma2.sqrt(), 0.0),
                    ConstellationKind::Qam => p + Complex64::new(a, b) * sigma2.sqrt(),
                };
                let got = demap_bicm_llrs(y, sigma2, &c, DemapMode::Exact).unwrap();
                for (g, o) in got.iter().zip(brute_llrs(y, sigma2, &c)) {
                    worst = worst.max((g - o).abs());
                }
            }
        }
    }
    let bpsk = ConstellationSpec { kind: ConstellationKind::Ask, m: 1, labeling: Labeling::Gray }.build().unwrap();
    let mut worst_bpsk = 0.0f64;
    for _ in 0..1000 {
        let sigma2: f64 = rng.random_range(0.01..2.0);
        let y: f64 = rng.random_range(-3.0..3.0);
        let got = demap_bicm_llrs(Complex64::new(y, 0.0), sigma2, &bpsk, DemapMode::Exact).unwrap()[0];
        worst_bpsk = worst_bpsk.max((got - saturate(2.0 * y / sigma2)).abs());
    }
    check(
        worst <= 1e-9 && worst_bpsk <= 1e-12,
        format!("max brute-force gap {worst:.1e}, max BPSK closed-form gap {worst_bpsk:.1e}"),
    )
}

fn criterion_5() -> Outcome {
    for m in 1..=8 {
        let t = gray_sp_matrix(m).unwrap();
        let gray = gray_code(m).unwrap();
        for (k, &g) in gray.iter().enumerate() {
            if t.apply_row(&label_to_bits(k, m)) != label_to_bits(g, m) {
                return Err(format!("m={m}, k={k}: T does not map binary(k) to gray(k)"));
            }
        }
    }
    let t2 = gray_sp_matrix(2).unwrap();
    check(t2.rows() == [vec![1, 1], vec![0, 1]], format!("T(2) = {:?}", t2.rows()))
}

fn criterion_6() -> Outcome {
    let trials = 10_000;
    let design = DesignSpec { kind: None, estimator: Estimator::Ga, design_esn0_db: 3.0, info_bits: 64, mc_trials: 0, seed: 0 };
    let r = equivalence_check_4qam(64, 64, &design, trials, 6).unwrap();
    check(
        r.label_identity_ok && r.frozen_sets_match && r.decisions_equal == trials && r.max_llr_gap <= 1e-6,
        format!(
            "labels {}, frozen sets {}, decisions equal {}/{}, max LLR gap {:.1e}",
            r.label_identity_ok, r.frozen_sets_match, r.decisions_equal, r.trials_run, r.max_llr_gap
        ),
    )
}

/// Es/N0 at which the matched 16-QAM design reaches FER close to 1e-2.
const WATERFALL_ESN0_DB: f64 = 8.6;

fn criterion_7() -> Outcome {
    let spec = SchemeSpec {
        kind: SchemeKind::Bicm,
        n_sym: 256,
        constellation: ConstellationSpec { kind: ConstellationKind::Qam, m: 4, labeling: Labeling::Gray },
        interleaver: InterleaverSpec::Identity,
    };
    let design = |estimator| DesignSpec {
        kind: None,
        estimator,
        design_esn0_db: WATERFALL_ESN0_DB,
        info_bits: 512,
        mc_trials: 10_000,
        seed: 1,
    };
    // A: MC on the 16-QAM bit channels. B: BPSK design at the per-bit Es/N0.
    let a = design_scheme(&spec, &design(Estimator::Mc)).unwrap().scheme;
    let b = design_scheme(&spec, &design(Estimator::Ga)).unwrap().scheme;
    let stop = StoppingRule { min_frame_errors: 100, max_frames: 1_000_000 };
    let pa = simulate_point(&a, WATERFALL_ESN0_DB, stop, 42, 0, workers()).unwrap();
    let pb = simulate_point(&b, WATERFALL_ESN0_DB, stop, 42, 0, workers()).unwrap();
    let (fa, fb) = (pa.fer(), pb.fer());
    let se = (fa * (1.0 - fa) / pa.frames as f64 + fb * (1.0 - fb) / pb.frames as f64).sqrt();
    let z = (fb - fa) / se;
    check(
        pa.frame_errors >= 100 && pb.frame_errors >= 100 && z >= 3.0,
        format!(
            "Es/N0 {WATERFALL_ESN0_DB} dB: FER(A) {fa:.3e} ({} errors), FER(B) {fb:.3e} ({} errors), {z:.1} sigma",
            pa.frame_errors, pb.frame_errors
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for m in [2, 4] {
        let c = ConstellationSpec { kind: ConstellationKind::Qam, m, labeling: Labeling::Natural }.build().unwrap();
        let mi = mc_mutual_information(&c, snr_to_sigma2(5.0, 2), 1_000_000, 8).unwrap();
        let sum: f64 = mi.per_level.iter().sum();
        let gap = (sum - mi.joint).abs();
        ok &= gap <= 0.02;
        parts.push(format!("{}-QAM sum {sum:.4} joint {:.4} gap {gap:.1e}", 1 << m, mi.joint));
    }
    check(ok, parts.join("; "))
}

fn random_spec<R: Rng>(rng: &mut R, kind: SchemeKind) -> SchemeSpec {
    let n_sym = 1usize << rng.random_range(1..=6);
    let (ckind, m) = match kind {
        SchemeKind::Mlc => {
            if rng.random_bool(0.5) {
                (ConstellationKind::Ask, rng.random_range(1..=4))
            } else {
                (ConstellationKind::Qam, 2 * rng.random_range(1..=3))
            }
        }
        SchemeKind::Bicm => match rng.random_range(0..4) {
            0 => (ConstellationKind::Ask, 1),
            1 => (ConstellationKind::Ask, 2),
            2 => (ConstellationKind::Qam, 2),
            _ => (ConstellationKind::Qam, 4),
        },
    };
    let labeling = match kind {
        SchemeKind::Mlc => Labeling::Natural,
        SchemeKind::Bicm => [Labeling::Gray, Labeling::Natural][rng.random_range(0..2)],
    };
    let interleaver = match rng.random_range(0..3) {
        0 => InterleaverSpec::Identity,
        1 => InterleaverSpec::SeededRandom { seed: rng.random() },
        _ => InterleaverSpec::LevelMajor,
    };
    SchemeSpec { kind, n_sym, constellation: ConstellationSpec { kind: ckind, m, labeling }, interleaver }
}

fn criterion_9() -> Outcome {
    let mut rng = stream(9, &[]);
    for kind in [SchemeKind::Mlc, SchemeKind::Bicm] {
        for trial in 0..200 {
            let spec = random_spec(&mut rng, kind);
            let k = rng.random_range(0..=spec.n_sym * spec.constellation.m);
            let estimator = [Estimator::Bec, Estimator::Ga, Estimator::Mc][rng.random_range(0..3)];
            let design = DesignSpec {
                kind: None,
                estimator,
                design_esn0_db: rng.random_range(-2.0..15.0),
                info_bits: k,
                mc_trials: 20,
                seed: trial,
            };
            let s = design_scheme(&spec, &design).unwrap().scheme;
            let msg = random_bits(&mut rng, k);
            let tx = s.encode(&msg).unwrap();
            if s.decode(&tx, 1e-6).unwrap() != msg {
                return Err(format!("noiseless round trip fails for {spec:?}, K={k}"));
            }
        }
    }

    let cfg = |scheme: SchemeSpec, info_bits, snr: Vec<f64>, reference| SimConfig {
        version: "v1".into(),
        scheme,
        construction: DesignSpec { kind: None, estimator: Estimator::Ga, design_esn0_db: 0.0, info_bits, mc_trials: 0, seed: 0 },
        snr: SnrSweep { points_db: snr, reference },
        stopping: StoppingRule { min_frame_errors: 100, max_frames: 1_000_000 },
        seed: 99,
        workers: 1,
        output: None,
    };
    let qam = SchemeSpec {
        kind: SchemeKind::Mlc,
        n_sym: 64,
        constellation: ConstellationSpec { kind: ConstellationKind::Qam, m: 4, labeling: Labeling::Natural },
        interleaver: InterleaverSpec::Identity,
    };
    let mut c1 = cfg(qam, 128, vec![6.0, 8.0], SnrReference::Esn0);
    c1.construction.design_esn0_db = 8.0;
    let mut c8 = c1.clone();
    c8.workers = 8;
    let r1 = run_simulation(&c1).unwrap();
    let r8 = run_simulation(&c8).unwrap();
    if !r1.same_counts(&r8) {
        return Err("worker count changes the simulation counters".into());
    }

    let sweep = run_simulation(&cfg(bpsk_spec(256), 128, vec![0.0, 1.0, 2.0, 3.0, 4.0], SnrReference::Ebn0)).unwrap();
    let fer: Vec<f64> = sweep.points.iter().map(|p| p.fer()).collect();
    let ber: Vec<f64> = sweep.points.iter().map(|p| p.ber().unwrap()).collect();
    let monotone = fer.windows(2).all(|w| w[1] <= w[0]) && ber.windows(2).all(|w| w[1] <= w[0]);
    let enough = sweep.points.iter().all(|p| p.frame_errors >= 100);
    check(
        monotone && enough,
        format!(
            "400 round trips, determinism ok, BPSK FER {}",
            fer.iter().map(|f| format!("{f:.2e}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("polar transform involution and linearity", criterion_1),
        ("BEC recursion against brute force", criterion_2),
        ("GA against MC construction, BPSK N=8 at 0 dB", criterion_3),
        ("exact demapper against brute force", criterion_4),
        ("Gray/SP label transform", criterion_5),
        ("4-QAM BICM/MLC equivalence", criterion_6),
        ("matched against BPSK construction, 16-QAM BICM", criterion_7),
        ("MLC chain rule", criterion_8),
        ("end-to-end sanity", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {} PASS  {name} ({secs:.1}s): {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} FAIL  {name} ({secs:.1}s): {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
