//! Monte-Carlo BER/FER simulation.
//!
//! Frame `f` at SNR index `s` draws its message and noise from the stream
//! `(master_seed, s, f)`. Frames are evaluated in parallel batches and then
//! accumulated in frame order, stopping exactly at the frame that reaches
//! the error target, so the counters never depend on the worker count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{NoiseModel, awgn_apply, ebn0_to_esn0, esn0_to_ebn0};
use crate::construction::{DesignKind, DesignSpec, Estimator};
use crate::error::{Error, Result, config_err};
use crate::rng::{random_bits, stream};
use crate::schemes::{FrameResult, SchemeConfig, SchemeKind, SchemeSpec, design_scheme};

pub const CONFIG_VERSION: &str = "v1";

/// Column set of the CSV output, in order.
pub const CSV_COLUMNS: [&str; 10] =
    ["snr_db", "snr_ref", "frames", "info_bits", "bit_errors", "frame_errors", "ber", "fer", "seconds", "ber_undefined"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SnrReference {
    #[default]
    Esn0,
    Ebn0,
}

impl SnrReference {
    pub fn as_str(self) -> &'static str {
        match self {
            SnrReference::Esn0 => "esn0",
            SnrReference::Ebn0 => "ebn0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrSweep {
    pub points_db: Vec<f64>,
    #[serde(default)]
    pub reference: SnrReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingRule {
    #[serde(default = "default_min_frame_errors")]
    pub min_frame_errors: u64,
    #[serde(default = "default_max_frames")]
    pub max_frames: u64,
}

fn default_min_frame_errors() -> u64 {
    100
}

fn default_max_frames() -> u64 {
    10_000_000
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self { min_frame_errors: default_min_frame_errors(), max_frames: default_max_frames() }
    }
}

fn default_workers() -> usize {
    1
}

fn default_version() -> String {
    CONFIG_VERSION.to_string()
}

/// A simulation run, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_version")]
    pub version: String,
    pub scheme: SchemeSpec,
    pub construction: DesignSpec,
    pub snr: SnrSweep,
    #[serde(default)]
    pub stopping: StoppingRule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err("<root>", e.to_string()))
    }

    /// Reads and validates a config file. A missing or unreadable file is a
    /// config error naming the path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(path.display().to_string(), format!("cannot read config file: {e}")))?;
        let cfg: SimConfig = serde_json::from_str(&text)
            .map_err(|e| config_err(path.display().to_string(), format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(config_err("version", format!("unsupported version {:?}, expected {CONFIG_VERSION:?}", self.version)));
        }
        validate_design(&self.scheme, &self.construction)?;
        if self.snr.points_db.is_empty() {
            return Err(config_err("snr.points_db", "must not be empty"));
        }
        if let Some(i) = self.snr.points_db.iter().position(|v| !v.is_finite()) {
            return Err(config_err(format!("snr.points_db[{i}]"), "must be finite"));
        }
        if self.snr.reference == SnrReference::Ebn0 && self.construction.info_bits == 0 {
            return Err(config_err("snr.reference", "Eb/N0 is undefined without information bits"));
        }
        if self.stopping.min_frame_errors == 0 {
            return Err(config_err("stopping.min_frame_errors", "must be at least 1"));
        }
        if self.stopping.max_frames == 0 {
            return Err(config_err("stopping.max_frames", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(config_err("workers", "must be at least 1"));
        }
        Ok(())
    }

    /// Stable 64-bit FNV-1a hash of the canonical JSON form.
    pub fn hash(&self) -> u64 {
        let text = serde_json::to_string(self).unwrap_or_default();
        text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
    }
}

/// Checks the scheme and construction parts of a config.
pub fn validate_design(s: &SchemeSpec, d: &DesignSpec) -> Result<()> {
    if s.n_sym == 0 || !s.n_sym.is_power_of_two() {
        return Err(config_err("scheme.n_sym", "must be a power of two"));
    }
    if let Err(e) = s.constellation.build() {
        return Err(config_err("scheme.constellation", e.to_string()));
    }
    if let Err(e) = s.validate() {
        return Err(config_err("scheme", e.to_string()));
    }
    let channels = s.constellation.m * s.n_sym;
    if d.info_bits > channels {
        return Err(config_err("construction.info_bits", format!("{} exceeds the {channels} available bit channels", d.info_bits)));
    }
    if d.estimator == Estimator::Mc && d.mc_trials == 0 {
        return Err(config_err("construction.mc_trials", "must be at least 1"));
    }
    if !d.design_esn0_db.is_finite() {
        return Err(config_err("construction.design_esn0_db", "must be finite"));
    }
    let kind_ok = match d.kind {
        None => true,
        Some(DesignKind::Bpsk) => s.constellation.m == 1,
        Some(DesignKind::Mlc) => s.kind == SchemeKind::Mlc,
        Some(DesignKind::Bicm) => s.kind == SchemeKind::Bicm,
    };
    if !kind_ok {
        return Err(config_err("construction.kind", "does not match the scheme"));
    }
    Ok(())
}

/// Reads only the `scheme` and `construction` objects of a config file.
pub fn load_design(path: &Path) -> Result<(SchemeSpec, DesignSpec)> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| config_err(&name, format!("cannot read config file: {e}")))?;
    let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| config_err(&name, format!("invalid JSON: {e}")))?;
    let mut take = |key: &str| v.get_mut(key).map(serde_json::Value::take).ok_or_else(|| config_err(key, "missing"));
    let scheme_v = take("scheme")?;
    let design_v = take("construction")?;
    let scheme: SchemeSpec = serde_json::from_value(scheme_v).map_err(|e| config_err("scheme", e.to_string()))?;
    let design: DesignSpec = serde_json::from_value(design_v).map_err(|e| config_err("construction", e.to_string()))?;
    validate_design(&scheme, &design)?;
    Ok((scheme, design))
}

/// Output of the `construct` command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionReport {
    pub scheme: SchemeSpec,
    pub estimator: Estimator,
    pub design_esn0_db: f64,
    /// Estimator-specific operating point of the reliability list.
    pub design_point: f64,
    pub estimates: Vec<f64>,
    /// One mask per code, 1 = frozen. A single entry for BICM.
    pub frozen_masks: Vec<Vec<u8>>,
    pub info_per_level: Vec<usize>,
}

pub fn construct(scheme: &SchemeSpec, design: &DesignSpec) -> Result<ConstructionReport> {
    let d = design_scheme(scheme, design)?;
    Ok(ConstructionReport {
        scheme: *scheme,
        estimator: design.estimator,
        design_esn0_db: design.design_esn0_db,
        design_point: d.reliabilities.design_point,
        estimates: d.reliabilities.estimates,
        frozen_masks: d.scheme.codes().iter().map(|c| c.frozen_mask().to_vec()).collect(),
        info_per_level: d.scheme.info_per_code(),
    })
}

/// Summary printed by the `info` command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeSummary {
    pub kind: SchemeKind,
    pub constellation: String,
    pub bits_per_symbol: usize,
    pub codes: usize,
    pub code_length: usize,
    /// Channel symbols per frame; the same for MLC and BICM.
    pub delay_symbols: usize,
    /// Sequential SC leaf decisions per frame.
    pub sc_decisions: usize,
    pub info_bits: usize,
    pub rate_per_symbol: f64,
    pub code_rate: f64,
    pub info_per_level: Vec<usize>,
    pub frozen_per_level: Vec<usize>,
}

pub fn summarize(s: &SchemeConfig) -> SchemeSummary {
    let c = s.constellation();
    let info = s.info_per_code();
    let code_length = s.codes().first().map_or(0, |c| c.block_len());
    SchemeSummary {
        kind: s.kind(),
        constellation: format!("{}-{:?} {:?}", c.size(), c.kind(), c.labeling()).to_lowercase(),
        bits_per_symbol: c.bits_per_symbol(),
        codes: s.codes().len(),
        code_length,
        delay_symbols: s.symbols_per_frame(),
        sc_decisions: s.bit_channel_count(),
        info_bits: s.info_bits(),
        rate_per_symbol: s.rate_per_symbol(),
        code_rate: s.info_bits() as f64 / s.bit_channel_count() as f64,
        frozen_per_level: info.iter().map(|k| code_length - k).collect(),
        info_per_level: info,
    }
}

/// Counters of one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub snr_db: f64,
    pub snr_ref: SnrReference,
    pub esn0_db: f64,
    pub ebn0_db: Option<f64>,
    pub frames: u64,
    pub info_bits: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub seconds: f64,
}

impl PointResult {
    /// `None` when no information bits were sent.
    pub fn ber(&self) -> Option<f64> {
        (self.info_bits > 0).then(|| self.bit_errors as f64 / self.info_bits as f64)
    }

    pub fn fer(&self) -> f64 {
        if self.frames == 0 { 0.0 } else { self.frame_errors as f64 / self.frames as f64 }
    }

    pub fn same_counts(&self, other: &PointResult) -> bool {
        self.snr_db == other.snr_db
            && self.snr_ref == other.snr_ref
            && self.frames == other.frames
            && self.info_bits == other.info_bits
            && self.bit_errors == other.bit_errors
            && self.frame_errors == other.frame_errors
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub version: String,
    pub config: SimConfig,
    pub config_hash: String,
    pub info_bits_per_frame: usize,
    pub rate_per_symbol: f64,
    pub points: Vec<PointResult>,
}

impl SimResult {
    /// Equality of everything except wall-clock time.
    pub fn same_counts(&self, other: &SimResult) -> bool {
        self.points.len() == other.points.len() && self.points.iter().zip(&other.points).all(|(a, b)| a.same_counts(b))
    }
}

const SIM_DOMAIN: u64 = 0x5349_4d55;
const FIRST_BATCH: u64 = 64;
const MAX_BATCH: u64 = 16_384;

/// Transmits and decodes one frame.
pub fn run_frame(scheme: &SchemeConfig, noise: &NoiseModel, seed: u64, snr_index: u64, frame: u64) -> Result<FrameResult> {
    let mut rng = stream(seed, &[SIM_DOMAIN, snr_index, frame]);
    let msg = random_bits(&mut rng, scheme.info_bits());
    let tx = scheme.encode(&msg)?;
    let y = awgn_apply(&tx, noise, &mut rng);
    let msg_hat = scheme.decode(&y, noise.sigma2())?;
    Ok(FrameResult::compare(&msg, msg_hat))
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))
}

/// Simulates one operating point of a fixed scheme.
pub fn simulate_point(
    scheme: &SchemeConfig,
    esn0_db: f64,
    stopping: StoppingRule,
    seed: u64,
    snr_index: u64,
    workers: usize,
) -> Result<PointResult> {
    let pool = thread_pool(workers)?;
    simulate_point_in(&pool, scheme, esn0_db, stopping, seed, snr_index)
}

fn simulate_point_in(
    pool: &rayon::ThreadPool,
    scheme: &SchemeConfig,
    esn0_db: f64,
    stopping: StoppingRule,
    seed: u64,
    snr_index: u64,
) -> Result<PointResult> {
    let noise = NoiseModel::from_esn0(esn0_db, scheme.constellation().complex_dims())?;
    let k = scheme.info_bits() as u64;
    let start = Instant::now();
    let (mut frames, mut bit_errors, mut frame_errors) = (0u64, 0u64, 0u64);
    let mut batch = FIRST_BATCH;
    'outer: while frames < stopping.max_frames && frame_errors < stopping.min_frame_errors {
        let n = batch.min(stopping.max_frames - frames);
        let results: Vec<FrameResult> = pool.install(|| {
            (frames..frames + n)
                .into_par_iter()
                .map(|f| run_frame(scheme, &noise, seed, snr_index, f))
                .collect::<Result<Vec<_>>>()
        })?;
        for r in results {
            frames += 1;
            bit_errors += r.bit_errors as u64;
            frame_errors += u64::from(r.frame_error);
            if frame_errors >= stopping.min_frame_errors {
                break 'outer;
            }
        }
        batch = (batch * 2).min(MAX_BATCH);
    }
    let rate = scheme.rate_per_symbol();
    Ok(PointResult {
        snr_db: esn0_db,
        snr_ref: SnrReference::Esn0,
        esn0_db,
        ebn0_db: if rate > 0.0 { esn0_to_ebn0(esn0_db, rate).ok() } else { None },
        frames,
        info_bits: frames * k,
        bit_errors,
        frame_errors,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Designs the scheme of `cfg`, sweeps all SNR points and writes the CSV
/// when an output path is configured.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let design = design_scheme(&cfg.scheme, &cfg.construction)?;
    let result = run_with_scheme(cfg, &design.scheme)?;
    if let Some(path) = &cfg.output {
        write_csv(path, &result)?;
    }
    Ok(result)
}

/// Sweeps the SNR points of `cfg` over an already built scheme.
pub fn run_with_scheme(cfg: &SimConfig, scheme: &SchemeConfig) -> Result<SimResult> {
    let pool = thread_pool(cfg.workers)?;
    let rate = scheme.rate_per_symbol();
    let mut points = Vec::with_capacity(cfg.snr.points_db.len());
    for (i, &snr) in cfg.snr.points_db.iter().enumerate() {
        let esn0 = match cfg.snr.reference {
            SnrReference::Esn0 => snr,
            SnrReference::Ebn0 => ebn0_to_esn0(snr, rate)?,
        };
        let mut p = simulate_point_in(&pool, scheme, esn0, cfg.stopping, cfg.seed, i as u64)?;
        p.snr_db = snr;
        p.snr_ref = cfg.snr.reference;
        points.push(p);
    }
    Ok(SimResult {
        version: crate::VERSION.to_string(),
        config: cfg.clone(),
        config_hash: format!("{:016x}", cfg.hash()),
        info_bits_per_frame: scheme.info_bits(),
        rate_per_symbol: rate,
        points,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.display().to_string(), source },
        other => Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{other:?}")),
        },
    }
}

/// Renders the result as CSV: `#` metadata lines, one header, one row per point.
pub fn to_csv(result: &SimResult) -> String {
    let mut out = format!(
        "# polarcm {}\n# config_hash {}\n# scheme {} n_sym={} m={} info_bits={}\n",
        result.version,
        result.config_hash,
        serde_json::to_string(&result.config.scheme.kind).unwrap_or_default().trim_matches('"'),
        result.config.scheme.n_sym,
        result.config.scheme.constellation.m,
        result.info_bits_per_frame,
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    // writing into a Vec cannot fail
    w.write_record(CSV_COLUMNS).expect("csv header");
    for p in &result.points {
        let ber = p.ber().map(|b| format!("{b:e}")).unwrap_or_default();
        w.write_record([
            p.snr_db.to_string(),
            p.snr_ref.as_str().to_string(),
            p.frames.to_string(),
            p.info_bits.to_string(),
            p.bit_errors.to_string(),
            p.frame_errors.to_string(),
            ber,
            format!("{:e}", p.fer()),
            format!("{:.6}", p.seconds),
            u8::from(p.ber().is_none()).to_string(),
        ])
        .expect("csv row");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8"));
    out
}

pub fn write_csv(path: &Path, result: &SimResult) -> Result<()> {
    fs::write(path, to_csv(result)).map_err(io_err(path))
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub snr_db: f64,
    pub snr_ref: SnrReference,
    pub frames: u64,
    pub info_bits: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub ber: Option<f64>,
    pub fer: f64,
    pub seconds: f64,
    pub ber_undefined: u8,
}

pub fn parse_csv(text: &str) -> std::result::Result<Vec<CsvRow>, csv::Error> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize()
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_csv(&text).map_err(|e| csv_err(path, e))
}
