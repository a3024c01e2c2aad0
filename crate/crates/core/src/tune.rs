//! Offline FBS parameter search and brute-force comparisons on small
//! instances.

use crate::error::{FawpError, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::fawp::{brute_force_post, brute_force_pre, quantize_vector, post_objective, pre_objective};
use crate::fbs::{post_fawp_fbs, pre_fawp_fbs, FawpKind, FbsParams, InitMode};
use crate::types::{ChannelMatrix, FiniteAlphabet, C64};
use crate::wf::wf_woodbury;

/// Candidate values for a grid search over constant schedules. `tau_scale`
/// is relative to `1/||H||_F^2` averaged over the training channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneGrid {
    pub tau_scale: Vec<f64>,
    pub nu: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Default for TuneGrid {
    fn default() -> Self {
        Self {
            tau_scale: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            nu: vec![0.5, 1.0, 2.0, 4.0],
            gamma: vec![0.0, 0.6, 1.2, 2.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub params: FbsParams,
    /// Mean per-column (pre) or per-antenna (post) MSE `1 - 1/ratio`.
    pub score: f64,
    pub evaluated: usize,
}

fn objective_to_mse(obj: f64) -> f64 {
    if obj.is_finite() {
        1.0 - 1.0 / obj
    } else {
        1.0
    }
}

/// Mean MSE contribution of FBS with `params` over every column/antenna
/// of every training channel.
pub fn score_params(
    channels: &[ChannelMatrix],
    kappa: f64,
    alphabet: &FiniteAlphabet,
    kind: FawpKind,
    params: &FbsParams,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for h in channels {
        let n = match kind {
            FawpKind::Pre => h.num_ues(),
            FawpKind::Post => h.num_bs_antennas(),
        };
        for i in 0..n {
            let r = match kind {
                FawpKind::Pre => pre_fawp_fbs(h, i, kappa, alphabet, params)?,
                FawpKind::Post => post_fawp_fbs(h, i, kappa, alphabet, params)?,
            };
            total += objective_to_mse(r.trace.final_objective);
            count += 1;
        }
    }
    if count == 0 {
        return Err(FawpError::InvalidArgument("no training problems".into()));
    }
    Ok(total / count as f64)
}

/// Grid search over constant `(τ, ν, γ)` schedules of length `t_max`,
/// minimizing [`score_params`]. Ties keep the earliest grid point.
#[allow(clippy::too_many_arguments)]
pub fn tune_params(
    channels: &[ChannelMatrix],
    kappa: f64,
    alphabet: &FiniteAlphabet,
    kind: FawpKind,
    t_max: usize,
    init: InitMode,
    grid: &TuneGrid,
    exec: Execution,
) -> Result<TuneResult> {
    if channels.is_empty() || t_max == 0 {
        return Err(FawpError::InvalidArgument(
            "tuning needs at least one channel and t_max > 0".into(),
        ));
    }
    if grid.tau_scale.is_empty() || grid.nu.is_empty() || grid.gamma.is_empty() {
        return Err(FawpError::InvalidArgument("empty tuning grid".into()));
    }
    let mean_fro = channels.iter().map(|h| h.frobenius_sq()).sum::<f64>() / channels.len() as f64;
    let mut candidates = Vec::new();
    for &ts in &grid.tau_scale {
        for &nu in &grid.nu {
            for &gamma in &grid.gamma {
                candidates.push(FbsParams::constant(t_max, ts / mean_fro, nu, gamma, init)?);
            }
        }
    }
    let scores = try_map_indexed(candidates.len(), exec, |i| {
        score_params(channels, kappa, alphabet, kind, &candidates[i])
    })?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(TuneResult {
        params: candidates[best].clone(),
        score: scores[best],
        evaluated: candidates.len(),
    })
}

/// Coordinate descent on per-iteration schedules, starting from `start`.
/// Each pass tries scaling every `τ_t` and `ν_t` and shifting every `γ_t`
/// by a few fixed factors, keeping any strict improvement.
pub fn refine_schedule(
    channels: &[ChannelMatrix],
    kappa: f64,
    alphabet: &FiniteAlphabet,
    kind: FawpKind,
    start: &TuneResult,
    passes: usize,
    exec: Execution,
) -> Result<TuneResult> {
    const FACTORS: [f64; 4] = [0.5, 0.8, 1.25, 2.0];
    const SHIFTS: [f64; 4] = [-0.5, -0.2, 0.2, 0.5];
    let mut best = start.clone();
    for _ in 0..passes {
        let before = best.score;
        for t in 0..best.params.t_max() {
            for which in 0..3 {
                let trials: Vec<FbsParams> = (0..4)
                    .map(|k| {
                        let mut p = best.params.clone();
                        match which {
                            0 => p.tau[t] *= FACTORS[k],
                            1 => p.nu[t] *= FACTORS[k],
                            _ => p.gamma[t] += SHIFTS[k],
                        }
                        p
                    })
                    .collect();
                let scores = try_map_indexed(trials.len(), exec, |i| {
                    score_params(channels, kappa, alphabet, kind, &trials[i])
                })?;
                best.evaluated += trials.len();
                for (p, s) in trials.into_iter().zip(scores) {
                    if s < best.score {
                        best.score = s;
                        best.params = p;
                    }
                }
            }
        }
        if best.score >= before {
            break;
        }
    }
    Ok(best)
}

/// One brute-force comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub instance: usize,
    pub index: usize,
    pub fbs: f64,
    pub fawp_wf: f64,
    pub optimum: f64,
}

impl OracleRow {
    pub fn fbs_ratio(&self) -> f64 {
        self.fbs / self.optimum
    }
}

/// Compare FBS and FAWP-WF against the exhaustive optimum for column
/// (pre) / antenna (post) `index` of each channel.
pub fn oracle_rows(
    channels: &[ChannelMatrix],
    index: usize,
    kappa: f64,
    alphabet: &FiniteAlphabet,
    kind: FawpKind,
    params: &FbsParams,
    exec: Execution,
) -> Result<Vec<OracleRow>> {
    try_map_indexed(channels.len(), exec, |n| {
        let h = &channels[n];
        let q = wf_woodbury(h, kappa)?;
        let (fbs, wf, opt) = match kind {
            FawpKind::Pre => {
                let a = quantize_vector(q.column(index).iter(), alphabet)?;
                (
                    pre_fawp_fbs(h, index, kappa, alphabet, params)?.trace.final_objective,
                    pre_objective(h, &a, index, kappa)?,
                    brute_force_pre(h, index, kappa, alphabet)?.objective,
                )
            }
            FawpKind::Post => {
                let z: Vec<C64> = quantize_vector(q.row(index).iter(), alphabet)?
                    .into_iter()
                    .map(|v| v.conj())
                    .collect();
                (
                    post_fawp_fbs(h, index, kappa, alphabet, params)?.trace.final_objective,
                    post_objective(h, &z, index, kappa)?,
                    brute_force_post(h, index, kappa, alphabet)?.objective,
                )
            }
        };
        Ok(OracleRow {
            instance: n,
            index,
            fbs,
            fawp_wf: wf,
            optimum: opt,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::gen_rayleigh;

    #[test]
    fn tuning_never_loses_to_its_own_grid_point() {
        let a1 = FiniteAlphabet::new(1).unwrap();
        let chans: Vec<_> = (0..6).map(|s| gen_rayleigh(8, 2, s)).collect();
        let grid = TuneGrid {
            tau_scale: vec![1.0, 4.0],
            nu: vec![1.0, 2.0],
            gamma: vec![0.0, 1.2],
        };
        let r = tune_params(&chans, 0.3, &a1, FawpKind::Pre, 5, InitMode::Mrt, &grid, Execution::Parallel)
            .unwrap();
        assert_eq!(r.evaluated, 8);
        let default = FbsParams::default_with_frobenius(
            chans.iter().map(|h| h.frobenius_sq()).sum::<f64>() / 6.0,
            5,
            InitMode::Mrt,
        );
        let d = score_params(&chans, 0.3, &a1, FawpKind::Pre, &FbsParams { gamma: vec![1.2; 5], ..default })
            .unwrap();
        assert!(r.score <= d);
        let seq = tune_params(&chans, 0.3, &a1, FawpKind::Pre, 5, InitMode::Mrt, &grid, Execution::Sequential)
            .unwrap();
        assert_eq!(seq, r);
    }

    #[test]
    fn oracle_dominance() {
        let a1 = FiniteAlphabet::new(1).unwrap();
        let chans: Vec<_> = (0..5).map(|s| gen_rayleigh(8, 4, s)).collect();
        let params = FbsParams::default_for(&chans[0], 10, InitMode::Mrt);
        for kind in [FawpKind::Pre, FawpKind::Post] {
            let rows = oracle_rows(&chans, 1, 0.5, &a1, kind, &params, Execution::Parallel).unwrap();
            for r in rows {
                assert!(r.fbs >= r.optimum * (1.0 - 1e-12));
                assert!(r.fawp_wf >= r.optimum * (1.0 - 1e-12));
            }
        }
    }
}
