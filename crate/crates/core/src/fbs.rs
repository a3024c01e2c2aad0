//! Forward-backward splitting (FBS) for the NP-hard FAWP column/row
//! problems.
//!
//! Each pre-FAWP column is relaxed to the unit hull square, then iterated as
//!
//! ```text
//! v = a - τ_t (H^H H a - γ_t h_u^H h_u a)
//! a = prox(v; ν_t)        element-wise clip of ν_t v onto [-1, 1]^2
//! ```
//!
//! and finally rounded to the alphabet. The post-FAWP variant swaps the
//! roles of `H` and `H^H` and works per antenna.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FawpError, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::fawp::{
    post_objective, post_scaling, pre_objective, pre_scaling, quantize_vector, PostFawpMatrix,
    PreFawpMatrix,
};
use crate::types::{ChannelMatrix, CMatrix, CVector, FiniteAlphabet, C64};
use crate::wf::wf_woodbury;

/// Starting point of the FBS iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Matched filter: `(h_u^r)^H` for pre-FAWP, `h_b` for post-FAWP.
    #[default]
    Mrt,
    /// The FAWP-WF quantized column, scaled into the unit hull.
    Wf,
}

impl InitMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mrt" => Ok(Self::Mrt),
            "wf" | "fawp-wf" => Ok(Self::Wf),
            other => Err(FawpError::Parse(format!("unknown init mode `{other}`"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Mrt => "mrt",
            Self::Wf => "wf",
        }
    }
}

/// Which FAWP structure a solver or tuner targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FawpKind {
    Pre,
    Post,
}

impl FawpKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pre" => Ok(Self::Pre),
            "post" => Ok(Self::Post),
            other => Err(FawpError::Parse(format!("unknown FAWP kind `{other}`"))),
        }
    }
}

/// Per-iteration schedules `{τ_t}`, `{ν_t}`, `{γ_t}`.
///
/// `ν_t` absorbs the hull regularization and the anti-zero term, so it is a
/// free parameter here rather than derived from `κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbsParams {
    pub tau: Vec<f64>,
    pub nu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub init: InitMode,
}

pub const DEFAULT_GAMMA: f64 = 1.2;

impl FbsParams {
    pub fn new(tau: Vec<f64>, nu: Vec<f64>, gamma: Vec<f64>, init: InitMode) -> Result<Self> {
        let p = Self {
            tau,
            nu,
            gamma,
            init,
        };
        p.validate()?;
        Ok(p)
    }

    /// Constant schedules of length `t_max`.
    pub fn constant(t_max: usize, tau: f64, nu: f64, gamma: f64, init: InitMode) -> Result<Self> {
        Self::new(vec![tau; t_max], vec![nu; t_max], vec![gamma; t_max], init)
    }

    /// Untuned starting point: `τ = 1/||H||_F^2` (a bound on the largest
    /// eigenvalue of `H^H H`), `ν = 1`, `γ = 1.2`.
    pub fn default_for(h: &ChannelMatrix, t_max: usize, init: InitMode) -> Self {
        Self::default_with_frobenius(h.frobenius_sq(), t_max, init)
    }

    pub fn default_with_frobenius(fro_sq: f64, t_max: usize, init: InitMode) -> Self {
        Self {
            tau: vec![1.0 / fro_sq; t_max],
            nu: vec![1.0; t_max],
            gamma: vec![DEFAULT_GAMMA; t_max],
            init,
        }
    }

    pub fn t_max(&self) -> usize {
        self.tau.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.tau.len();
        if self.nu.len() != t || self.gamma.len() != t {
            return Err(FawpError::InvalidArgument(format!(
                "schedule lengths differ: tau {}, nu {}, gamma {}",
                t,
                self.nu.len(),
                self.gamma.len()
            )));
        }
        if self.tau.iter().chain(&self.nu).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(FawpError::InvalidArgument(
                "tau and nu must be positive and finite".into(),
            ));
        }
        if self.gamma.iter().any(|v| !v.is_finite()) {
            return Err(FawpError::InvalidArgument("gamma must be finite".into()));
        }
        Ok(())
    }

    /// Plain-text `key=value` form: `t_max`, `tau`, `nu`, `gamma` (comma
    /// separated) and `init`.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "t_max={}", self.t_max());
        let _ = writeln!(s, "tau={}", join(&self.tau));
        let _ = writeln!(s, "nu={}", join(&self.nu));
        let _ = writeln!(s, "gamma={}", join(&self.gamma));
        let _ = writeln!(s, "init={}", self.init.label());
        s
    }

    /// Parse the text form. Blank lines and `#` comments are ignored, and a
    /// schedule with a single value is repeated `t_max` times.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut t_max = None;
        let mut tau = None;
        let mut nu = None;
        let mut gamma = None;
        let mut init = InitMode::Mrt;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| FawpError::Parse(format!("line {}: expected key=value", n + 1)))?;
            let list = |v: &str| -> Result<Vec<f64>> {
                v.split(',')
                    .map(|x| {
                        x.trim().parse::<f64>().map_err(|e| {
                            FawpError::Parse(format!("line {}: bad number `{}`: {e}", n + 1, x.trim()))
                        })
                    })
                    .collect()
            };
            match key.trim() {
                "t_max" => {
                    t_max = Some(value.trim().parse::<usize>().map_err(|e| {
                        FawpError::Parse(format!("line {}: bad t_max: {e}", n + 1))
                    })?)
                }
                "tau" => tau = Some(list(value)?),
                "nu" => nu = Some(list(value)?),
                "gamma" => gamma = Some(list(value)?),
                "init" => init = InitMode::parse(value)?,
                other => {
                    return Err(FawpError::Parse(format!("line {}: unknown key `{other}`", n + 1)))
                }
            }
        }
        let t_max = t_max.ok_or_else(|| FawpError::Parse("missing t_max".into()))?;
        let expand = |name: &str, v: Option<Vec<f64>>| -> Result<Vec<f64>> {
            let v = v.ok_or_else(|| FawpError::Parse(format!("missing {name}")))?;
            match v.len() {
                1 => Ok(vec![v[0]; t_max]),
                n if n == t_max => Ok(v),
                n => Err(FawpError::Parse(format!(
                    "{name} has {n} values, expected 1 or t_max = {t_max}"
                ))),
            }
        };
        Self::new(
            expand("tau", tau)?,
            expand("nu", nu)?,
            expand("gamma", gamma)?,
            init,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Diagnostics of one FBS run.
#[derive(Debug, Clone, PartialEq)]
pub struct FbsTrace {
    /// Ratio objective of the alphabet-projected iterate after each step.
    pub objectives: Vec<f64>,
    pub final_objective: f64,
    pub iterations: usize,
}

/// Output of FBS for one column (pre) or antenna (post).
#[derive(Debug, Clone, PartialEq)]
pub struct FbsColumn {
    pub vector: Vec<C64>,
    /// `α_u` (pre) or `ζ_b` (post).
    pub scale: C64,
    pub trace: FbsTrace,
    /// The projected result was unusable and the FAWP-WF vector was used.
    pub fell_back: bool,
}

fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Proximal step: `sgn(Re v) min{ν|Re v|, 1} + j sgn(Im v) min{ν|Im v|, 1}`.
pub fn prox_g(v: C64, nu: f64) -> C64 {
    C64::new(
        sgn(v.re) * (nu * v.re.abs()).min(1.0),
        sgn(v.im) * (nu * v.im.abs()).min(1.0),
    )
}

/// Smooth part `½||H a||² - (γ/2)|h_u^r a|²` of the relaxed pre-FAWP
/// problem.
pub fn pre_smooth_objective(h: &ChannelMatrix, a: &CVector, u: usize, gamma: f64) -> f64 {
    let g = h.matrix() * a;
    0.5 * g.norm_squared() - 0.5 * gamma * g[u].norm_sqr()
}

/// Gradient of [`pre_smooth_objective`] with respect to the real and
/// imaginary parts, packed as `∂/∂Re + j ∂/∂Im`:
/// `H^H H a - γ (h_u^r)^H h_u^r a`. One product by `H`, one by `H^H`.
pub fn pre_gradient(h: &ChannelMatrix, a: &CVector, u: usize, gamma: f64) -> CVector {
    let hm = h.matrix();
    let mut w = hm * a;
    w[u] *= 1.0 - gamma;
    hm.ad_mul(&w)
}

/// Smooth part `½||H^H z||² - (γ/2)|h_b^H z|²` of the relaxed post-FAWP
/// problem.
pub fn post_smooth_objective(h: &ChannelMatrix, z: &CVector, b: usize, gamma: f64) -> f64 {
    let g = h.matrix().ad_mul(z);
    0.5 * g.norm_squared() - 0.5 * gamma * g[b].norm_sqr()
}

/// Gradient of [`post_smooth_objective`]: `H H^H z - γ h_b h_b^H z`.
pub fn post_gradient(h: &ChannelMatrix, z: &CVector, b: usize, gamma: f64) -> CVector {
    let hm = h.matrix();
    let mut w = hm.ad_mul(z);
    w[b] *= 1.0 - gamma;
    hm * w
}

/// Gradient step `a - τ (H^H H a - γ (h_u^r)^H h_u^r a)`.
pub fn pre_fbs_step(h: &ChannelMatrix, a: &CVector, u: usize, tau: f64, gamma: f64) -> CVector {
    a - pre_gradient(h, a, u, gamma) * C64::new(tau, 0.0)
}

/// Gradient step `z - τ (H H^H z - γ h_b h_b^H z)`.
pub fn post_fbs_step(h: &ChannelMatrix, z: &CVector, b: usize, tau: f64, gamma: f64) -> CVector {
    z - post_gradient(h, z, b, gamma) * C64::new(tau, 0.0)
}

/// Round a hull iterate onto the alphabet: rescale so the largest
/// component magnitude equals `2^L - 1`, then take the nearest level per
/// real/imaginary part. `None` for the all-zero iterate.
pub fn project_to_alphabet(v: &[C64], alphabet: &FiniteAlphabet) -> Option<Vec<C64>> {
    let peak = v.iter().fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
    if !(peak > 0.0 && peak.is_finite()) {
        return None;
    }
    let s = alphabet.hull_bound() / peak;
    Some(
        v.iter()
            .map(|z| {
                C64::new(
                    alphabet.nearest_level(z.re * s),
                    alphabet.nearest_level(z.im * s),
                )
            })
            .collect(),
    )
}

struct Problem<'a> {
    h: &'a ChannelMatrix,
    index: usize,
    kappa: f64,
    kind: FawpKind,
}

impl Problem<'_> {
    fn step(&self, x: &CVector, tau: f64, gamma: f64) -> CVector {
        match self.kind {
            FawpKind::Pre => pre_fbs_step(self.h, x, self.index, tau, gamma),
            FawpKind::Post => post_fbs_step(self.h, x, self.index, tau, gamma),
        }
    }

    fn objective(&self, v: &[C64]) -> Result<f64> {
        match self.kind {
            FawpKind::Pre => pre_objective(self.h, v, self.index, self.kappa),
            FawpKind::Post => post_objective(self.h, v, self.index, self.kappa),
        }
    }

    fn scaling(&self, v: &[C64]) -> Result<C64> {
        match self.kind {
            FawpKind::Pre => pre_scaling(self.h, v, self.index, self.kappa),
            FawpKind::Post => post_scaling(self.h, v, self.index, self.kappa),
        }
    }

    fn mrt(&self) -> CVector {
        match self.kind {
            FawpKind::Pre => self.h.row(self.index).adjoint(),
            FawpKind::Post => self.h.col(self.index).into_owned(),
        }
    }
}

fn run_fbs(
    problem: &Problem<'_>,
    alphabet: &FiniteAlphabet,
    params: &FbsParams,
    wf_vector: &dyn Fn() -> Result<Vec<C64>>,
) -> Result<FbsColumn> {
    params.validate()?;
    let mut x = match params.init {
        InitMode::Mrt => problem.mrt(),
        InitMode::Wf => {
            let w = wf_vector()?;
            let hb = alphabet.hull_bound();
            CVector::from_iterator(w.len(), w.iter().map(|z| z / hb))
        }
    };
    let mut objectives = Vec::with_capacity(params.t_max());
    for t in 0..params.t_max() {
        let v = problem.step(&x, params.tau[t], params.gamma[t]);
        let nu = params.nu[t];
        x = v.map(|z| prox_g(z, nu));
        let obj = match project_to_alphabet(x.as_slice(), alphabet) {
            Some(p) => problem.objective(&p)?,
            None => f64::INFINITY,
        };
        objectives.push(obj);
    }
    let projected = project_to_alphabet(x.as_slice(), alphabet);
    let (vector, objective, fell_back) = match projected {
        Some(p) => {
            let obj = problem.objective(&p)?;
            if obj.is_finite() {
                (p, obj, false)
            } else {
                let w = wf_vector()?;
                let obj = problem.objective(&w)?;
                (w, obj, true)
            }
        }
        None => {
            let w = wf_vector()?;
            let obj = problem.objective(&w)?;
            (w, obj, true)
        }
    };
    let scale = problem.scaling(&vector)?;
    Ok(FbsColumn {
        vector,
        scale,
        trace: FbsTrace {
            iterations: objectives.len(),
            objectives,
            final_objective: objective,
        },
        fell_back,
    })
}

fn wf_column(h: &ChannelMatrix, kappa: f64, u: usize, alphabet: &FiniteAlphabet) -> Result<Vec<C64>> {
    let q = wf_woodbury(h, kappa)?;
    quantize_vector(q.column(u).iter(), alphabet)
}

fn wf_antenna(h: &ChannelMatrix, kappa: f64, b: usize, alphabet: &FiniteAlphabet) -> Result<Vec<C64>> {
    let q = wf_woodbury(h, kappa)?;
    Ok(quantize_vector(q.row(b).iter(), alphabet)?
        .into_iter()
        .map(|z| z.conj())
        .collect())
}

/// Pre-FAWP-FBS for user `u`: returns `a_u ∈ X^B`, `α_u` and the trace.
pub fn pre_fawp_fbs(
    h: &ChannelMatrix,
    u: usize,
    kappa: f64,
    alphabet: &FiniteAlphabet,
    params: &FbsParams,
) -> Result<FbsColumn> {
    check_index(u, h.num_ues(), "user")?;
    let problem = Problem {
        h,
        index: u,
        kappa,
        kind: FawpKind::Pre,
    };
    run_fbs(&problem, alphabet, params, &|| wf_column(h, kappa, u, alphabet))
}

/// Post-FAWP-FBS for antenna `b`: returns `z_b ∈ X^U`, `ζ_b` and the trace.
pub fn post_fawp_fbs(
    h: &ChannelMatrix,
    b: usize,
    kappa: f64,
    alphabet: &FiniteAlphabet,
    params: &FbsParams,
) -> Result<FbsColumn> {
    check_index(b, h.num_bs_antennas(), "antenna")?;
    let problem = Problem {
        h,
        index: b,
        kappa,
        kind: FawpKind::Post,
    };
    run_fbs(&problem, alphabet, params, &|| wf_antenna(h, kappa, b, alphabet))
}

fn check_index(i: usize, n: usize, what: &str) -> Result<()> {
    if i >= n {
        return Err(FawpError::InvalidArgument(format!(
            "{what} index {i} out of range (< {n})"
        )));
    }
    Ok(())
}

/// Run pre-FAWP-FBS for every user and assemble the matrix. `qwf` is the
/// WF matrix for the same `κ`, used for WF initialization and fallback.
pub fn pre_fawp_fbs_matrix(
    h: &ChannelMatrix,
    kappa: f64,
    alphabet: &FiniteAlphabet,
    params: &FbsParams,
    qwf: &CMatrix,
    exec: Execution,
) -> Result<(PreFawpMatrix, Vec<FbsTrace>)> {
    let cols = try_map_indexed(h.num_ues(), exec, |u| {
        let problem = Problem {
            h,
            index: u,
            kappa,
            kind: FawpKind::Pre,
        };
        run_fbs(&problem, alphabet, params, &|| {
            quantize_vector(qwf.column(u).iter(), alphabet)
        })
    })?;
    let (b, nu) = (h.num_bs_antennas(), h.num_ues());
    let mut a = CMatrix::zeros(b, nu);
    let mut alpha = CVector::zeros(nu);
    let mut traces = Vec::with_capacity(nu);
    for (u, col) in cols.into_iter().enumerate() {
        a.column_mut(u).copy_from_slice(&col.vector);
        alpha[u] = col.scale;
        traces.push(col.trace);
    }
    Ok((PreFawpMatrix::new(a, alpha, alphabet)?, traces))
}

/// Run post-FAWP-FBS for every antenna and assemble the matrix.
pub fn post_fawp_fbs_matrix(
    h: &ChannelMatrix,
    kappa: f64,
    alphabet: &FiniteAlphabet,
    params: &FbsParams,
    qwf: &CMatrix,
    exec: Execution,
) -> Result<(PostFawpMatrix, Vec<FbsTrace>)> {
    let cols = try_map_indexed(h.num_bs_antennas(), exec, |b| {
        let problem = Problem {
            h,
            index: b,
            kappa,
            kind: FawpKind::Post,
        };
        run_fbs(&problem, alphabet, params, &|| {
            Ok(quantize_vector(qwf.row(b).iter(), alphabet)?
                .into_iter()
                .map(|z| z.conj())
                .collect())
        })
    })?;
    let (nb, u) = (h.num_bs_antennas(), h.num_ues());
    let mut z = CMatrix::zeros(u, nb);
    let mut zeta = CVector::zeros(nb);
    let mut traces = Vec::with_capacity(nb);
    for (b, col) in cols.into_iter().enumerate() {
        z.column_mut(b).copy_from_slice(&col.vector);
        zeta[b] = col.scale;
        traces.push(col.trace);
    }
    Ok((PostFawpMatrix::new(z, zeta, alphabet)?, traces))
}
