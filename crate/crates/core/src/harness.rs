//! Experiment configs, seeded Monte-Carlo campaigns and result emission.
//!
//! Seed splitting: every random stream gets its own ChaCha8 generator seeded
//! with [`child_seed`]`(master, channel, snr_index, role)`, a chain of
//! SplitMix64 finalizers. Channels use `snr_index = 0` with
//! [`ROLE_CHANNEL`], so all SNR points and precoders see the same channel
//! realizations; noise and data symbols use [`ROLE_DATA`] and are shared
//! across precoders (common random numbers).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{read_channels, ChannelRecord, ChannelSpec};
use crate::error::{FawpError, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::fbs::{FawpKind, FbsParams, InitMode};
use crate::sim::{
    ber, ber_stderr, build_precoder, evm, run_trial, BetaMode, MetricAccumulator, PrecoderSpec,
    PrecoderVariant, DEFAULT_T_MAX,
};
use crate::tune::{oracle_rows, refine_schedule, tune_params, OracleRow, TuneGrid, TuneResult};
use crate::types::{noise_for_snr_db, ChannelMatrix, Constellation, FiniteAlphabet, SystemConfig};
use crate::wf::kappa_from;

pub const ROLE_CHANNEL: u64 = 1;
pub const ROLE_DATA: u64 = 2;
pub const ROLE_TUNE: u64 = 3;
pub const ROLE_ORACLE: u64 = 4;

/// Rows with fewer bit errors than this are flagged as low-confidence.
pub const LOW_CONFIDENCE_ERRORS: u64 = 100;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable child seed: `mix(mix(mix(mix(master) ^ channel) ^ snr) ^ role)`.
pub fn child_seed(master: u64, channel: u64, snr_index: u64, role: u64) -> u64 {
    [channel, snr_index, role]
        .into_iter()
        .fold(splitmix64(master), |h, v| splitmix64(h ^ v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub bs_antennas: usize,
    pub ues: usize,
    #[serde(default = "one")]
    pub symbol_energy: f64,
    #[serde(default = "one")]
    pub total_power: f64,
}

fn one() -> f64 {
    1.0
}

impl SystemSection {
    pub fn at_snr_db(&self, snr_db: f64) -> Result<SystemConfig> {
        SystemConfig::new(
            self.bs_antennas,
            self.ues,
            self.symbol_energy,
            self.total_power,
            noise_for_snr_db(self.total_power, snr_db),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecoderEntry {
    pub variant: String,
    #[serde(default)]
    pub bits: Option<u32>,
    /// FBS schedule file, relative to the config file.
    #[serde(default)]
    pub params: Option<PathBuf>,
    /// Untuned FBS fallback when no `params` file is given.
    #[serde(default)]
    pub t_max: Option<usize>,
    #[serde(default)]
    pub init: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub kind: String,
    pub bits: u32,
    pub t_max: usize,
    #[serde(default)]
    pub init: Option<String>,
    pub snr_db: f64,
    pub num_channels: usize,
    #[serde(default)]
    pub tau_scale: Option<Vec<f64>>,
    #[serde(default)]
    pub nu: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    /// Coordinate-descent passes over per-iteration schedules after the
    /// grid search.
    #[serde(default)]
    pub refine_passes: usize,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub kind: String,
    pub bs_antennas: usize,
    pub ues: usize,
    pub bits: u32,
    pub instances: usize,
    pub snr_db: f64,
    #[serde(default)]
    pub index: usize,
    #[serde(default)]
    pub params: Option<PathBuf>,
    #[serde(default)]
    pub t_max: Option<usize>,
}

/// One experiment, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub system: SystemSection,
    #[serde(default)]
    pub channel: ChannelSpec,
    /// Pre-generated channels (see `channel-export`), used instead of
    /// `[channel]` when set.
    #[serde(default)]
    pub channel_file: Option<PathBuf>,
    pub constellation: String,
    #[serde(default)]
    pub precoder: Vec<PrecoderEntry>,
    pub snr_db: Vec<f64>,
    pub num_channels: usize,
    pub vectors_per_channel: usize,
    #[serde(default)]
    pub beta_mode: BetaMode,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Write measured wall time into the `seconds` column. Off by default,
    /// which keeps output byte-reproducible.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub tune: Option<TuneSection>,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| FawpError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FawpError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FawpError::Config(m));
        if self.num_channels == 0 || self.vectors_per_channel == 0 {
            return bad("num_channels and vectors_per_channel must be positive".into());
        }
        if self.snr_db.is_empty() {
            return bad("snr_db grid is empty".into());
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) || self.snr_db.windows(2).any(|w| w[1] <= w[0]) {
            return bad("snr_db grid must be finite and strictly increasing".into());
        }
        self.system.at_snr_db(self.snr_db[0])?;
        Constellation::from_name(&self.constellation, self.system.symbol_energy)?;
        if self.channel_file.is_none() {
            self.channel.validate(self.system.ues)?;
        }
        for p in &self.precoder {
            let v = PrecoderVariant::parse(&p.variant)?;
            if v.is_fawp() && p.bits.is_none() {
                return bad(format!("precoder {} needs `bits`", p.variant));
            }
            if let Some(b) = p.bits {
                FiniteAlphabet::new(b)?;
            }
        }
        Ok(())
    }

    /// Precoder specs with FBS schedules loaded.
    pub fn precoder_specs(&self) -> Result<Vec<PrecoderSpec>> {
        self.precoder
            .iter()
            .map(|p| {
                let variant = PrecoderVariant::parse(&p.variant)?;
                let fbs = if variant.is_fbs() {
                    match &p.params {
                        Some(path) => {
                            let path = self.resolve(path);
                            Some(FbsParams::load(&path).map_err(|e| {
                                FawpError::Config(format!("{}: {e}", path.display()))
                            })?)
                        }
                        None => None,
                    }
                } else {
                    None
                };
                Ok((variant, p, fbs))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .map(|(variant, p, fbs)| PrecoderSpec::new(variant, p.bits, fbs))
            .collect()
    }

    /// Untuned FBS schedule settings per precoder entry.
    fn untuned(&self, i: usize) -> Result<(usize, InitMode)> {
        let p = &self.precoder[i];
        let init = match &p.init {
            Some(s) => InitMode::parse(s)?,
            None => InitMode::Mrt,
        };
        Ok((p.t_max.unwrap_or(DEFAULT_T_MAX), init))
    }

    pub fn channel_source(&self) -> Result<ChannelSource> {
        match &self.channel_file {
            Some(f) => {
                let path = self.resolve(f);
                let recs = read_channels(&path)?;
                if recs.len() < self.num_channels {
                    return Err(FawpError::Config(format!(
                        "{} holds {} channels, need {}",
                        path.display(),
                        recs.len(),
                        self.num_channels
                    )));
                }
                for r in &recs {
                    if r.channel.num_ues() != self.system.ues
                        || r.channel.num_bs_antennas() != self.system.bs_antennas
                    {
                        return Err(FawpError::Config(format!(
                            "{}: channel dimensions do not match [system]",
                            path.display()
                        )));
                    }
                }
                Ok(ChannelSource::File(recs))
            }
            None => Ok(ChannelSource::Generated {
                spec: self.channel.clone(),
                master_seed: self.master_seed,
                bs_antennas: self.system.bs_antennas,
                ues: self.system.ues,
            }),
        }
    }
}

/// Where channel realizations come from.
#[derive(Debug, Clone)]
pub enum ChannelSource {
    Generated {
        spec: ChannelSpec,
        master_seed: u64,
        bs_antennas: usize,
        ues: usize,
    },
    File(Vec<ChannelRecord>),
}

impl ChannelSource {
    pub fn record(&self, index: usize) -> Result<ChannelRecord> {
        match self {
            Self::Generated {
                spec,
                master_seed,
                bs_antennas,
                ues,
            } => {
                let seed = child_seed(*master_seed, index as u64, 0, ROLE_CHANNEL);
                Ok(ChannelRecord {
                    kind: spec.kind.label().to_string(),
                    seed,
                    channel: spec.with_seed(seed).generate(*bs_antennas, *ues)?,
                })
            }
            Self::File(recs) => recs
                .get(index)
                .cloned()
                .ok_or_else(|| FawpError::Config(format!("no channel #{index} in file"))),
        }
    }

    pub fn channel(&self, index: usize) -> Result<ChannelMatrix> {
        Ok(self.record(index)?.channel)
    }
}

/// One `(precoder, SNR)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub precoder: String,
    pub bits: Option<u32>,
    pub snr_db: f64,
    pub ber: f64,
    pub ber_stderr: f64,
    pub evm_pct: f64,
    pub vectors: u64,
    pub bits_sent: u64,
    pub seconds: f64,
    pub low_confidence: bool,
}

impl ResultRow {
    fn from_acc(
        spec: &PrecoderSpec,
        snr_db: f64,
        acc: &MetricAccumulator,
        seconds: f64,
    ) -> Result<Self> {
        Ok(Self {
            precoder: spec.label().to_string(),
            bits: spec.bits,
            snr_db,
            ber: ber(acc)?,
            ber_stderr: ber_stderr(acc)?,
            evm_pct: evm(acc)?,
            vectors: acc.vectors_sent,
            bits_sent: acc.bits_sent,
            seconds,
            low_confidence: acc.bit_errors < LOW_CONFIDENCE_ERRORS,
        })
    }
}

/// Run every `(precoder, SNR)` point of the experiment.
///
/// Channels are processed in parallel (per `exec`); each worker builds all
/// precoders for its channel at every SNR point. Per-channel accumulators
/// are then summed in channel order, so the rows do not depend on the
/// number of threads.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    if cfg.precoder.is_empty() {
        return Err(FawpError::Config("no [[precoder]] entries".into()));
    }
    let specs = cfg.precoder_specs()?;
    let untuned: Vec<(usize, InitMode)> =
        (0..specs.len()).map(|i| cfg.untuned(i)).collect::<Result<_>>()?;
    let source = cfg.channel_source()?;
    let constellation = Constellation::from_name(&cfg.constellation, cfg.system.symbol_energy)?;
    let systems: Vec<SystemConfig> =
        cfg.snr_db.iter().map(|&s| cfg.system.at_snr_db(s)).collect::<Result<_>>()?;
    let points = specs.len() * systems.len();

    let per_channel = try_map_indexed(cfg.num_channels, exec, |c| {
        let h = source.channel(c)?;
        let mut out = Vec::with_capacity(points);
        for (si, sys) in systems.iter().enumerate() {
            let seed = child_seed(cfg.master_seed, c as u64, si as u64, ROLE_DATA);
            for (pi, spec) in specs.iter().enumerate() {
                let start = Instant::now();
                let spec = if spec.variant.is_fbs() && spec.fbs.is_none() {
                    let (t, init) = untuned[pi];
                    spec.clone().with_fbs(FbsParams::default_for(&h, t, init))
                } else {
                    spec.clone()
                };
                let handle = build_precoder(&spec, &h, sys, Execution::Sequential)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let acc = run_trial(
                    &handle,
                    &h,
                    sys,
                    &constellation,
                    cfg.vectors_per_channel,
                    cfg.beta_mode,
                    &mut rng,
                )?;
                out.push((acc, start.elapsed().as_secs_f64()));
            }
        }
        Ok(out)
    })?;

    let mut rows = Vec::with_capacity(points);
    for (pi, spec) in specs.iter().enumerate() {
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            let k = si * specs.len() + pi;
            let mut acc = MetricAccumulator::default();
            let mut secs = 0.0;
            for ch in &per_channel {
                acc.merge(&ch[k].0);
                secs += ch[k].1;
            }
            let secs = if cfg.record_timing { secs } else { 0.0 };
            rows.push(ResultRow::from_acc(spec, snr, &acc, secs)?);
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str =
    "precoder,bits,snr_db,ber,ber_stderr,evm_pct,vectors,bits_sent,seconds,low_confidence";

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV text with 17 significant digits per float. WF/MRT rows leave
/// `bits` empty.
pub fn format_csv(rows: &[ResultRow]) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.precoder,
            r.bits.map(|b| b.to_string()).unwrap_or_default(),
            sci(r.snr_db),
            sci(r.ber),
            sci(r.ber_stderr),
            sci(r.evm_pct),
            r.vectors,
            r.bits_sent,
            sci(r.seconds),
            r.low_confidence
        );
    }
    s
}

/// Parse text produced by [`format_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(FawpError::Parse("missing or wrong CSV header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 10 {
                return Err(FawpError::Parse(format!("expected 10 fields: {l}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| FawpError::Parse(format!("{s}: {e}")));
            let int = |s: &str| s.parse::<u64>().map_err(|e| FawpError::Parse(format!("{s}: {e}")));
            Ok(ResultRow {
                precoder: f[0].to_string(),
                bits: if f[1].is_empty() {
                    None
                } else {
                    Some(f[1].parse().map_err(|e| FawpError::Parse(format!("{}: {e}", f[1])))?)
                },
                snr_db: num(f[2])?,
                ber: num(f[3])?,
                ber_stderr: num(f[4])?,
                evm_pct: num(f[5])?,
                vectors: int(f[6])?,
                bits_sent: int(f[7])?,
                seconds: num(f[8])?,
                low_confidence: f[9]
                    .parse()
                    .map_err(|e| FawpError::Parse(format!("{}: {e}", f[9])))?,
            })
        })
        .collect()
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(FawpError::InvalidArgument("no rows to write".into()));
    }
    std::fs::write(path, format_csv(rows))?;
    Ok(())
}

/// JSON array of row objects (same keys as the CSV header). Floats are
/// written in shortest round-trip form, which parses back exactly.
pub fn format_json(rows: &[ResultRow]) -> Result<String> {
    serde_json::to_string_pretty(rows).map_err(|e| FawpError::Parse(e.to_string()))
}

pub fn emit_json(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(FawpError::InvalidArgument("no rows to write".into()));
    }
    std::fs::write(path, format_json(rows)? + "\n")?;
    Ok(())
}

/// Write rows as JSON if the path ends in `.json`, CSV otherwise.
pub fn emit(rows: &[ResultRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => emit_json(rows, path),
        _ => emit_csv(rows, path),
    }
}

fn training_channels(
    cfg: &ExperimentConfig,
    b: usize,
    u: usize,
    n: usize,
    role: u64,
) -> Result<Vec<ChannelMatrix>> {
    (0..n)
        .map(|i| {
            let seed = child_seed(cfg.master_seed, i as u64, 0, role);
            cfg.channel.with_seed(seed).generate(b, u)
        })
        .collect()
}

/// Run the `[tune]` section; returns the result and the path it should be
/// written to.
pub fn run_tune(cfg: &ExperimentConfig, exec: Execution) -> Result<(TuneResult, PathBuf)> {
    let t = cfg
        .tune
        .as_ref()
        .ok_or_else(|| FawpError::Config("config has no [tune] section".into()))?;
    let kind = FawpKind::parse(&t.kind)?;
    let init = t.init.as_deref().map(InitMode::parse).transpose()?.unwrap_or_default();
    let alphabet = FiniteAlphabet::new(t.bits)?;
    let sys = cfg.system.at_snr_db(t.snr_db)?;
    let kappa = kappa_from(sys.num_ues, sys.noise_variance, sys.total_power);
    let chans = training_channels(cfg, sys.num_bs_antennas, sys.num_ues, t.num_channels, ROLE_TUNE)?;
    let d = TuneGrid::default();
    let grid = TuneGrid {
        tau_scale: t.tau_scale.clone().unwrap_or(d.tau_scale),
        nu: t.nu.clone().unwrap_or(d.nu),
        gamma: t.gamma.clone().unwrap_or(d.gamma),
    };
    let r = tune_params(&chans, kappa, &alphabet, kind, t.t_max, init, &grid, exec)?;
    let r = refine_schedule(&chans, kappa, &alphabet, kind, &r, t.refine_passes, exec)?;
    Ok((r, cfg.resolve(&t.output)))
}

/// Run the `[oracle]` section.
pub fn run_oracle(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<OracleRow>> {
    let o = cfg
        .oracle
        .as_ref()
        .ok_or_else(|| FawpError::Config("config has no [oracle] section".into()))?;
    let kind = FawpKind::parse(&o.kind)?;
    let alphabet = FiniteAlphabet::new(o.bits)?;
    let noise = noise_for_snr_db(cfg.system.total_power, o.snr_db);
    let kappa = kappa_from(o.ues, noise, cfg.system.total_power);
    let chans = training_channels(cfg, o.bs_antennas, o.ues, o.instances, ROLE_ORACLE)?;
    let params = match &o.params {
        Some(p) => FbsParams::load(&cfg.resolve(p))?,
        None => FbsParams::default_for(&chans[0], o.t_max.unwrap_or(DEFAULT_T_MAX), InitMode::Mrt),
    };
    oracle_rows(&chans, o.index, kappa, &alphabet, kind, &params, exec)
}

pub fn format_oracle(rows: &[OracleRow]) -> String {
    let mut s = String::from("instance,index,fbs,fawp_wf,optimum,fbs_ratio\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.instance,
            r.index,
            sci(r.fbs),
            sci(r.fawp_wf),
            sci(r.optimum),
            sci(r.fbs_ratio())
        );
    }
    s
}
