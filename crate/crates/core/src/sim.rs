//! End-to-end downlink chain: precoding, AWGN channel, single-pilot β
//! estimation at the UEs, detection and BER/EVM bookkeeping.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::complex_gaussian;
use crate::error::{FawpError, Result};
use crate::exec::Execution;
use crate::fawp::{apply_post, apply_pre, quantize_post, quantize_pre, PostFawpMatrix, PreFawpMatrix};
use crate::fbs::{post_fawp_fbs_matrix, pre_fawp_fbs_matrix, FbsParams, InitMode};
use crate::types::{ChannelMatrix, CMatrix, CVector, Constellation, FiniteAlphabet, SymbolVector, SystemConfig, C64};
use crate::wf::{beta_from_frobenius_sq, compute_beta, compute_kappa, wf_woodbury};

/// Floor applied to non-positive pilot-based β estimates.
pub const BETA_FLOOR: f64 = 1e-6;

/// Iterations used when an FBS precoder comes without tuned parameters.
pub const DEFAULT_T_MAX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrecoderVariant {
    Wf,
    Mrt,
    PreFawpWf,
    PostFawpWf,
    PreFawpFbs,
    PostFawpFbs,
}

impl PrecoderVariant {
    pub const ALL: [Self; 6] = [
        Self::Wf,
        Self::Mrt,
        Self::PreFawpWf,
        Self::PostFawpWf,
        Self::PreFawpFbs,
        Self::PostFawpFbs,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Self::Wf => "WF",
            Self::Mrt => "MRT",
            Self::PreFawpWf => "PreFAWP-WF",
            Self::PostFawpWf => "PostFAWP-WF",
            Self::PreFawpFbs => "PreFAWP-FBS",
            Self::PostFawpFbs => "PostFAWP-FBS",
        }
    }

    /// Case-insensitive; `-`/`_` are ignored, so `pre-fawp-fbs`,
    /// `PreFAWP-FBS` and `pre_fawp_fbs` all work.
    pub fn parse(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|v| v.label().replace('-', "").to_ascii_lowercase() == key)
            .ok_or_else(|| FawpError::UnknownPrecoder(s.to_string()))
    }

    /// Uses a finite-alphabet matrix (needs a bit width).
    pub fn is_fawp(&self) -> bool {
        !matches!(self, Self::Wf | Self::Mrt)
    }

    pub fn is_fbs(&self) -> bool {
        matches!(self, Self::PreFawpFbs | Self::PostFawpFbs)
    }
}

/// What to build: a variant, its alphabet and (for FBS) its schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSpec {
    pub variant: PrecoderVariant,
    pub bits: Option<u32>,
    pub fbs: Option<FbsParams>,
}

impl PrecoderSpec {
    pub fn new(variant: PrecoderVariant, bits: Option<u32>, fbs: Option<FbsParams>) -> Result<Self> {
        if variant.is_fawp() && bits.is_none() {
            return Err(FawpError::InvalidArgument(format!(
                "{} needs an alphabet bit width",
                variant.label()
            )));
        }
        if let Some(b) = bits {
            FiniteAlphabet::new(b)?;
        }
        Ok(Self { variant, bits, fbs })
    }

    pub fn wf() -> Self {
        Self {
            variant: PrecoderVariant::Wf,
            bits: None,
            fbs: None,
        }
    }

    pub fn fawp(variant: PrecoderVariant, bits: u32) -> Result<Self> {
        Self::new(variant, Some(bits), None)
    }

    pub fn with_fbs(mut self, params: FbsParams) -> Self {
        self.fbs = Some(params);
        self
    }

    /// Display name, e.g. `PreFAWP-FBS`.
    pub fn label(&self) -> &'static str {
        self.variant.label()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dense(CMatrix),
    Pre(PreFawpMatrix),
    Post(PostFawpMatrix),
}

impl Payload {
    /// Equivalent dense `B x U` matrix.
    pub fn to_dense(&self) -> CMatrix {
        match self {
            Self::Dense(q) => q.clone(),
            Self::Pre(m) => m.to_dense(),
            Self::Post(m) => m.to_dense(),
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        match self {
            Self::Dense(q) => q.norm_squared(),
            Self::Pre(m) => m.frobenius_sq(),
            Self::Post(m) => m.frobenius_sq(),
        }
    }

    fn shape(&self) -> (usize, usize) {
        match self {
            Self::Dense(q) => q.shape(),
            Self::Pre(m) => (m.num_bs_antennas(), m.num_ues()),
            Self::Post(m) => (m.num_bs_antennas(), m.num_ues()),
        }
    }
}

/// A built precoder and its BS-side precoding factor.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderHandle {
    pub variant: PrecoderVariant,
    pub payload: Payload,
    pub beta: f64,
}

impl PrecoderHandle {
    pub fn new(variant: PrecoderVariant, payload: Payload, cfg: &SystemConfig) -> Result<Self> {
        let (b, u) = payload.shape();
        if b != cfg.num_bs_antennas || u != cfg.num_ues {
            return Err(FawpError::DimensionMismatch(format!(
                "precoder is {b}x{u}, system is {}x{}",
                cfg.num_bs_antennas, cfg.num_ues
            )));
        }
        let beta = beta_from_frobenius_sq(payload.frobenius_sq(), cfg.symbol_energy, cfg.total_power)?;
        Ok(Self {
            variant,
            payload,
            beta,
        })
    }
}

/// Build the precoder for one channel realization. `κ` follows from `cfg`.
pub fn build_precoder(
    spec: &PrecoderSpec,
    h: &ChannelMatrix,
    cfg: &SystemConfig,
    exec: Execution,
) -> Result<PrecoderHandle> {
    if h.num_ues() != cfg.num_ues || h.num_bs_antennas() != cfg.num_bs_antennas {
        return Err(FawpError::DimensionMismatch(format!(
            "channel is {}x{}, system is {}x{}",
            h.num_ues(),
            h.num_bs_antennas(),
            cfg.num_ues,
            cfg.num_bs_antennas
        )));
    }
    let kappa = compute_kappa(cfg);
    let alphabet = || -> Result<FiniteAlphabet> {
        FiniteAlphabet::new(spec.bits.ok_or_else(|| {
            FawpError::InvalidArgument(format!("{} needs a bit width", spec.label()))
        })?)
    };
    let fbs_params = || {
        spec.fbs
            .clone()
            .unwrap_or_else(|| FbsParams::default_for(h, DEFAULT_T_MAX, InitMode::Mrt))
    };
    let payload = match spec.variant {
        PrecoderVariant::Mrt => Payload::Dense(h.matrix().adjoint()),
        PrecoderVariant::Wf => Payload::Dense(wf_woodbury(h, kappa)?),
        PrecoderVariant::PreFawpWf => {
            let q = wf_woodbury(h, kappa)?;
            Payload::Pre(quantize_pre(&q, &alphabet()?, h, kappa)?)
        }
        PrecoderVariant::PostFawpWf => {
            let q = wf_woodbury(h, kappa)?;
            Payload::Post(quantize_post(&q, &alphabet()?, h, kappa)?)
        }
        PrecoderVariant::PreFawpFbs => {
            let q = wf_woodbury(h, kappa)?;
            let (m, _) = pre_fawp_fbs_matrix(h, kappa, &alphabet()?, &fbs_params(), &q, exec)?;
            Payload::Pre(m)
        }
        PrecoderVariant::PostFawpFbs => {
            let q = wf_woodbury(h, kappa)?;
            let (m, _) = post_fawp_fbs_matrix(h, kappa, &alphabet()?, &fbs_params(), &q, exec)?;
            Payload::Post(m)
        }
    };
    PrecoderHandle::new(spec.variant, payload, cfg)
}

/// `x = (1/β) Q s`.
pub fn precode(handle: &PrecoderHandle, s: &SymbolVector) -> Result<CVector> {
    let qs = match &handle.payload {
        Payload::Dense(q) => {
            if q.ncols() != s.len() {
                return Err(FawpError::DimensionMismatch(format!(
                    "Q has {} columns, s has {} entries",
                    q.ncols(),
                    s.len()
                )));
            }
            q * s.as_vector()
        }
        Payload::Pre(m) => apply_pre(m, s)?,
        Payload::Post(m) => apply_post(m, s)?,
    };
    Ok(qs / C64::new(handle.beta, 0.0))
}

/// `y = H x + n` with `n ~ CN(0, N0 I)`.
pub fn channel_pass<R: Rng + ?Sized>(
    h: &ChannelMatrix,
    x: &CVector,
    noise_variance: f64,
    rng: &mut R,
) -> Result<SymbolVector> {
    if x.len() != h.num_bs_antennas() {
        return Err(FawpError::DimensionMismatch(format!(
            "x has {} entries, channel has {} antennas",
            x.len(),
            h.num_bs_antennas()
        )));
    }
    let mut y = h.matrix() * x;
    if noise_variance > 0.0 {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, noise_variance);
        }
    }
    Ok(SymbolVector::new(y))
}

/// Per-UE single-pilot estimate `β̂_u = Re{√Es / y_u}`, floored at
/// [`BETA_FLOOR`].
pub fn estimate_beta_mle(y_pilot: &SymbolVector, symbol_energy: f64) -> Result<Vec<f64>> {
    let se = symbol_energy.sqrt();
    y_pilot
        .iter()
        .enumerate()
        .map(|(u, y)| {
            if *y == C64::new(0.0, 0.0) {
                return Err(FawpError::Degenerate(format!("pilot sample of UE {u} is zero")));
            }
            let b = (C64::new(se, 0.0) / y).re;
            Ok(if b > BETA_FLOOR { b } else { BETA_FLOOR })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BetaMode {
    Perfect,
    #[default]
    MlePilot,
}

impl BetaMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "perfect" => Ok(Self::Perfect),
            "mle-pilot" | "mle" | "pilot" | "estimated" => Ok(Self::MlePilot),
            other => Err(FawpError::Parse(format!("unknown beta mode `{other}`"))),
        }
    }
}

/// What the UEs use to scale their received samples.
#[derive(Debug, Clone, PartialEq)]
pub struct UeState {
    pub beta_hat: Vec<f64>,
    pub mode: BetaMode,
}

impl UeState {
    pub fn perfect(beta: f64, num_ues: usize) -> Self {
        Self {
            beta_hat: vec![beta; num_ues],
            mode: BetaMode::Perfect,
        }
    }

    /// Send one pilot `s = √Es 1` through the chain and estimate `β̂`.
    pub fn from_pilot<R: Rng + ?Sized>(
        handle: &PrecoderHandle,
        h: &ChannelMatrix,
        cfg: &SystemConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let pilot = SymbolVector::new(CVector::from_element(
            cfg.num_ues,
            C64::new(cfg.symbol_energy.sqrt(), 0.0),
        ));
        let x = precode(handle, &pilot)?;
        let y = channel_pass(h, &x, cfg.noise_variance, rng)?;
        Ok(Self {
            beta_hat: estimate_beta_mle(&y, cfg.symbol_energy)?,
            mode: BetaMode::MlePilot,
        })
    }
}

/// Soft estimates `ŝ_u = β̂_u y_u` and hard-decision point indices.
pub fn detect(
    y: &SymbolVector,
    beta_hat: &[f64],
    constellation: &Constellation,
) -> Result<(SymbolVector, Vec<usize>)> {
    if y.len() != beta_hat.len() {
        return Err(FawpError::DimensionMismatch(format!(
            "{} samples but {} β estimates",
            y.len(),
            beta_hat.len()
        )));
    }
    let soft = CVector::from_iterator(y.len(), y.iter().zip(beta_hat).map(|(y, b)| y * *b));
    let hard = soft.iter().map(|z| constellation.nearest(*z)).collect();
    Ok((SymbolVector::new(soft), hard))
}

/// Running BER/EVM totals. Merging is plain addition, so accumulators
/// reduced in a fixed order give identical totals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricAccumulator {
    pub bit_errors: u64,
    pub bits_sent: u64,
    pub evm_num: f64,
    pub evm_den: f64,
    pub vectors_sent: u64,
}

impl MetricAccumulator {
    /// Record one transmitted vector.
    pub fn record(
        &mut self,
        constellation: &Constellation,
        sent: &[usize],
        soft: &SymbolVector,
        detected: &[usize],
    ) {
        for ((&s, &d), z) in sent.iter().zip(detected).zip(soft.iter()) {
            let diff = constellation.label(s) ^ constellation.label(d);
            self.bit_errors += u64::from(diff.count_ones());
            self.bits_sent += u64::from(constellation.bits_per_symbol());
            let p = constellation.points()[s];
            self.evm_num += (z - p).norm_sqr();
            self.evm_den += p.norm_sqr();
        }
        self.vectors_sent += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.bit_errors += other.bit_errors;
        self.bits_sent += other.bits_sent;
        self.evm_num += other.evm_num;
        self.evm_den += other.evm_den;
        self.vectors_sent += other.vectors_sent;
    }
}

/// Uncoded BER.
pub fn ber(acc: &MetricAccumulator) -> Result<f64> {
    if acc.bits_sent == 0 {
        return Err(FawpError::InvalidArgument("no bits accumulated".into()));
    }
    Ok(acc.bit_errors as f64 / acc.bits_sent as f64)
}

/// EVM in percent: `100 sqrt(Σ|ŝ - s|^2 / Σ|s|^2)`.
pub fn evm(acc: &MetricAccumulator) -> Result<f64> {
    if !(acc.evm_den > 0.0) {
        return Err(FawpError::InvalidArgument("no symbols accumulated".into()));
    }
    Ok(100.0 * (acc.evm_num / acc.evm_den).sqrt())
}

/// BER standard error `sqrt(p (1 - p) / bits)`.
pub fn ber_stderr(acc: &MetricAccumulator) -> Result<f64> {
    let p = ber(acc)?;
    Ok((p * (1.0 - p) / acc.bits_sent as f64).sqrt())
}

/// Required EVM (percent) for a constellation.
pub fn evm_threshold(kind: crate::types::ConstellationKind) -> f64 {
    use crate::types::ConstellationKind::*;
    match kind {
        Qpsk => 17.5,
        Qam16 => 12.5,
        Qam64 => 8.0,
        Qam256 => 3.5,
    }
}

/// Draw uniform symbol indices for all UEs.
pub fn random_symbols<R: Rng + ?Sized>(
    constellation: &Constellation,
    num_ues: usize,
    rng: &mut R,
) -> (Vec<usize>, SymbolVector) {
    let idx: Vec<usize> = (0..num_ues).map(|_| rng.random_range(0..constellation.len())).collect();
    let s = SymbolVector::new(CVector::from_iterator(
        num_ues,
        idx.iter().map(|&i| constellation.points()[i]),
    ));
    (idx, s)
}

/// Run `vectors` data vectors (after one pilot in [`BetaMode::MlePilot`])
/// over a fixed channel and precoder.
pub fn run_trial<R: Rng + ?Sized>(
    handle: &PrecoderHandle,
    h: &ChannelMatrix,
    cfg: &SystemConfig,
    constellation: &Constellation,
    vectors: usize,
    mode: BetaMode,
    rng: &mut R,
) -> Result<MetricAccumulator> {
    let ue = match mode {
        BetaMode::Perfect => UeState::perfect(handle.beta, cfg.num_ues),
        BetaMode::MlePilot => UeState::from_pilot(handle, h, cfg, rng)?,
    };
    let mut acc = MetricAccumulator::default();
    for _ in 0..vectors {
        let (idx, s) = random_symbols(constellation, cfg.num_ues, rng);
        let x = precode(handle, &s)?;
        let y = channel_pass(h, &x, cfg.noise_variance, rng)?;
        let (soft, hard) = detect(&y, &ue.beta_hat, constellation)?;
        acc.record(constellation, &idx, &soft, &hard);
    }
    Ok(acc)
}

/// Convenience: WF precoding factor for a channel.
pub fn wf_beta(h: &ChannelMatrix, cfg: &SystemConfig) -> Result<f64> {
    let q = wf_woodbury(h, compute_kappa(cfg))?;
    compute_beta(&q, cfg.symbol_energy, cfg.total_power)
}
