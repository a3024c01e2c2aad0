//! Infinite-precision Wiener-filter (WF) precoding.
//!
//! `Q = (H^H H + κ I_B)^{-1} H^H = H^H (H H^H + κ I_U)^{-1}`, with
//! `κ = U N0 / P` and the precoding factor `β = sqrt(tr(Q^H Q) Es / P)`.
//! The Woodbury form only factors a `U x U` Hermitian matrix and is the
//! one used in simulations; the direct form is kept for cross-checks.

use nalgebra::Cholesky;

use crate::error::{FawpError, Result};
use crate::types::{ChannelMatrix, CMatrix, SystemConfig, C64};

/// WF regularization `κ = U N0 / P`.
pub fn compute_kappa(cfg: &SystemConfig) -> f64 {
    cfg.num_ues as f64 * cfg.noise_variance / cfg.total_power
}

/// Same as [`compute_kappa`] from raw values; `n0 = 0` gives the
/// zero-forcing limit.
pub fn kappa_from(num_ues: usize, noise_variance: f64, total_power: f64) -> f64 {
    num_ues as f64 * noise_variance / total_power
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(FawpError::InvalidArgument(format!(
            "kappa must be finite and non-negative, got {kappa}"
        )));
    }
    Ok(())
}

fn regularized_gram(m: &CMatrix, kappa: f64) -> CMatrix {
    let mut g = m * m.adjoint();
    for i in 0..g.nrows() {
        g[(i, i)] += C64::new(kappa, 0.0);
    }
    g
}

/// Direct form `(H^H H + κ I_B)^{-1} H^H`.
///
/// For `κ = 0` the `B x B` Gram matrix is singular whenever `U < B`, so the
/// minimum-norm least-squares solution `H^+` is computed from an SVD
/// instead.
pub fn wf_direct(h: &ChannelMatrix, kappa: f64) -> Result<CMatrix> {
    check_kappa(kappa)?;
    let hm = h.matrix();
    if kappa == 0.0 {
        let svd = hm.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * (hm.nrows().max(hm.ncols()) as f64) * f64::EPSILON;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if rank < hm.nrows() {
            return Err(FawpError::Singular(format!(
                "channel has rank {rank} < U = {} with kappa = 0",
                hm.nrows()
            )));
        }
        return svd
            .pseudo_inverse(tol)
            .map_err(|e| FawpError::Singular(e.to_string()));
    }
    let hh = hm.adjoint();
    let gram = regularized_gram(&hh, kappa);
    let chol = Cholesky::new(gram)
        .ok_or_else(|| FawpError::Singular("H^H H + κI is not positive definite".into()))?;
    Ok(chol.solve(&hh))
}

/// Woodbury form `H^H (H H^H + κ I_U)^{-1}`, computed as
/// `((H H^H + κ I_U)^{-1} H)^H` from a Cholesky factorization.
pub fn wf_woodbury(h: &ChannelMatrix, kappa: f64) -> Result<CMatrix> {
    check_kappa(kappa)?;
    let hm = h.matrix();
    let gram = regularized_gram(hm, kappa);
    let scale = (0..gram.nrows()).fold(0.0f64, |m, i| m.max(gram[(i, i)].re));
    let chol = Cholesky::new(gram).ok_or_else(|| {
        FawpError::Singular("H H^H + κI is not positive definite (rank-deficient H?)".into())
    })?;
    // Rounding can let a singular Gram matrix through; catch tiny pivots.
    let l = chol.l_dirty();
    let tiny = (0..l.nrows()).any(|i| l[(i, i)].re.powi(2) <= scale * 1e3 * f64::EPSILON);
    if tiny {
        return Err(FawpError::Singular(
            "H H^H + κI is numerically singular (rank-deficient H?)".into(),
        ));
    }
    Ok(chol.solve(hm).adjoint())
}

/// Precoding factor `β = sqrt(tr(Q^H Q) Es / P)`.
pub fn compute_beta(q: &CMatrix, symbol_energy: f64, total_power: f64) -> Result<f64> {
    beta_from_frobenius_sq(q.norm_squared(), symbol_energy, total_power)
}

/// [`compute_beta`] for a matrix given only by its squared Frobenius norm.
pub fn beta_from_frobenius_sq(fro_sq: f64, symbol_energy: f64, total_power: f64) -> Result<f64> {
    if !(fro_sq.is_finite() && fro_sq > 0.0) {
        return Err(FawpError::Degenerate(
            "precoding matrix is all-zero (or non-finite)".into(),
        ));
    }
    Ok((fro_sq * symbol_energy / total_power).sqrt())
}

/// Mean-square error `E||s - ŝ||^2` of `ŝ = β y` when the BS transmits
/// `x = (1/β) Q s`: `Es ||I_U - H Q||_F^2 + β^2 U N0`.
pub fn mse(
    h: &ChannelMatrix,
    q: &CMatrix,
    beta: f64,
    symbol_energy: f64,
    noise_variance: f64,
) -> Result<f64> {
    let hm = h.matrix();
    if q.nrows() != hm.ncols() || q.ncols() != hm.nrows() {
        return Err(FawpError::DimensionMismatch(format!(
            "Q is {}x{}, expected {}x{}",
            q.nrows(),
            q.ncols(),
            hm.ncols(),
            hm.nrows()
        )));
    }
    let u = hm.nrows();
    let mut residual = -(hm * q);
    for i in 0..u {
        residual[(i, i)] += C64::new(1.0, 0.0);
    }
    Ok(symbol_energy * residual.norm_squared() + beta * beta * u as f64 * noise_variance)
}

/// Objective minimized by `Q^WF`: `||I_U - H Q||_F^2 + κ ||Q||_F^2`.
pub fn wf_objective(h: &ChannelMatrix, q: &CMatrix, kappa: f64) -> f64 {
    let hm = h.matrix();
    let mut residual = -(hm * q);
    for i in 0..hm.nrows() {
        residual[(i, i)] += C64::new(1.0, 0.0);
    }
    residual.norm_squared() + kappa * q.norm_squared()
}
