//! Finite-alphabet WF precoding (FAWP) matrices.
//!
//! A pre-FAWP matrix is `Q = A diag(α*)` with `A ∈ X^{B×U}`: the `U` symbol
//! entries are scaled before the low-resolution product. A post-FAWP matrix
//! is `Q = diag(ζ) Z^H` with `Z ∈ X^{U×B}`: the `B` antenna outputs are
//! scaled after it. For a fixed low-resolution column (row) the best
//! scaling has a closed form, and the remaining search over the alphabet
//! reduces to minimizing a ratio objective per user (per antenna).

use crate::error::{FawpError, Result};
use crate::types::{ChannelMatrix, CMatrix, CVector, FiniteAlphabet, SymbolVector, C64};

/// Upper bound on `|X|^n` accepted by the exhaustive searches.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// `Q = A diag(α*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreFawpMatrix {
    a: CMatrix,
    alpha: CVector,
    bits: u32,
}

/// `Q = diag(ζ) Z^H`; `Z` is stored `U x B` so antenna column `z_b` is
/// contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct PostFawpMatrix {
    z: CMatrix,
    zeta: CVector,
    bits: u32,
}

fn check_membership(m: &CMatrix, alphabet: &FiniteAlphabet) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if !alphabet.contains(v) {
                return Err(FawpError::NotInAlphabet {
                    row: r,
                    col: c,
                    bits: alphabet.bits(),
                    value: v.to_string(),
                });
            }
        }
    }
    Ok(())
}

impl PreFawpMatrix {
    pub fn new(a: CMatrix, alpha: CVector, alphabet: &FiniteAlphabet) -> Result<Self> {
        if a.ncols() != alpha.len() {
            return Err(FawpError::DimensionMismatch(format!(
                "A has {} columns but α has {} entries",
                a.ncols(),
                alpha.len()
            )));
        }
        check_membership(&a, alphabet)?;
        Ok(Self {
            a,
            alpha,
            bits: alphabet.bits(),
        })
    }

    /// Low-resolution matrix `A` (`B x U`).
    pub fn low_res(&self) -> &CMatrix {
        &self.a
    }

    pub fn alpha(&self) -> &CVector {
        &self.alpha
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn num_bs_antennas(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_ues(&self) -> usize {
        self.a.ncols()
    }

    /// Dense `A diag(α*)`.
    pub fn to_dense(&self) -> CMatrix {
        let mut q = self.a.clone();
        for (u, mut col) in q.column_iter_mut().enumerate() {
            col *= self.alpha[u].conj();
        }
        q
    }

    /// `tr(Q^H Q) = Σ_u |α_u|^2 ||a_u||^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.a
            .column_iter()
            .zip(self.alpha.iter())
            .map(|(col, al)| al.norm_sqr() * col.norm_squared())
            .sum()
    }
}

impl PostFawpMatrix {
    pub fn new(z: CMatrix, zeta: CVector, alphabet: &FiniteAlphabet) -> Result<Self> {
        if z.ncols() != zeta.len() {
            return Err(FawpError::DimensionMismatch(format!(
                "Z has {} columns but ζ has {} entries",
                z.ncols(),
                zeta.len()
            )));
        }
        check_membership(&z, alphabet)?;
        Ok(Self {
            z,
            zeta,
            bits: alphabet.bits(),
        })
    }

    /// Low-resolution matrix `Z` (`U x B`).
    pub fn low_res(&self) -> &CMatrix {
        &self.z
    }

    pub fn zeta(&self) -> &CVector {
        &self.zeta
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn num_bs_antennas(&self) -> usize {
        self.z.ncols()
    }

    pub fn num_ues(&self) -> usize {
        self.z.nrows()
    }

    /// Dense `diag(ζ) Z^H`.
    pub fn to_dense(&self) -> CMatrix {
        let mut q = self.z.adjoint();
        for (b, mut row) in q.row_iter_mut().enumerate() {
            row *= self.zeta[b];
        }
        q
    }

    /// `tr(Q^H Q) = Σ_b |ζ_b|^2 ||z_b||^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.z
            .column_iter()
            .zip(self.zeta.iter())
            .map(|(col, ze)| ze.norm_sqr() * col.norm_squared())
            .sum()
    }
}

/// `Q s = A (diag(α*) s)`.
pub fn apply_pre(m: &PreFawpMatrix, s: &SymbolVector) -> Result<CVector> {
    if s.len() != m.num_ues() {
        return Err(FawpError::DimensionMismatch(format!(
            "symbol vector has {} entries, precoder serves {} users",
            s.len(),
            m.num_ues()
        )));
    }
    let scaled = CVector::from_iterator(
        s.len(),
        m.alpha.iter().zip(s.iter()).map(|(al, si)| al.conj() * si),
    );
    Ok(&m.a * scaled)
}

/// `Q s = diag(ζ) (Z^H s)`.
pub fn apply_post(m: &PostFawpMatrix, s: &SymbolVector) -> Result<CVector> {
    if s.len() != m.num_ues() {
        return Err(FawpError::DimensionMismatch(format!(
            "symbol vector has {} entries, precoder serves {} users",
            s.len(),
            m.num_ues()
        )));
    }
    let mut x = m.z.ad_mul(s.as_vector());
    for (xb, ze) in x.iter_mut().zip(m.zeta.iter()) {
        *xb *= ze;
    }
    Ok(x)
}

/// Quantities shared by the pre-FAWP scaling and objective for column `a`:
/// `(h_u^r a, ||H a||^2 + κ ||a||^2)`.
fn pre_terms(h: &ChannelMatrix, a: &[C64], u: usize, kappa: f64) -> Result<(C64, f64)> {
    let hm = h.matrix();
    if a.len() != hm.ncols() {
        return Err(FawpError::DimensionMismatch(format!(
            "column has {} entries, channel has {} antennas",
            a.len(),
            hm.ncols()
        )));
    }
    if u >= hm.nrows() {
        return Err(FawpError::InvalidArgument(format!(
            "user index {u} out of range for {} users",
            hm.nrows()
        )));
    }
    let mut signal = C64::new(0.0, 0.0);
    let mut energy = 0.0;
    for r in 0..hm.nrows() {
        let mut acc = C64::new(0.0, 0.0);
        for (b, ab) in a.iter().enumerate() {
            acc += hm[(r, b)] * ab;
        }
        if r == u {
            signal = acc;
        }
        energy += acc.norm_sqr();
    }
    let a_sq: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    Ok((signal, energy + kappa * a_sq))
}

/// `(h_b^H z, ||H^H z||^2 + κ ||z||^2)` for antenna `b`.
fn post_terms(h: &ChannelMatrix, z: &[C64], b: usize, kappa: f64) -> Result<(C64, f64)> {
    let hm = h.matrix();
    if z.len() != hm.nrows() {
        return Err(FawpError::DimensionMismatch(format!(
            "row has {} entries, channel has {} users",
            z.len(),
            hm.nrows()
        )));
    }
    if b >= hm.ncols() {
        return Err(FawpError::InvalidArgument(format!(
            "antenna index {b} out of range for {} antennas",
            hm.ncols()
        )));
    }
    let mut signal = C64::new(0.0, 0.0);
    let mut energy = 0.0;
    for (j, col) in hm.column_iter().enumerate() {
        let acc: C64 = col.iter().zip(z).map(|(hv, zv)| hv.conj() * zv).sum();
        if j == b {
            signal = acc;
        }
        energy += acc.norm_sqr();
    }
    let z_sq: f64 = z.iter().map(|v| v.norm_sqr()).sum();
    Ok((signal, energy + kappa * z_sq))
}

fn require_nonzero(v: &[C64], what: &str) -> Result<()> {
    if v.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(FawpError::Degenerate(format!("{what} is all-zero")));
    }
    Ok(())
}

/// Optimal per-user scaling `α_u = h_u^r a / (||H a||^2 + κ ||a||^2)`.
pub fn pre_scaling(h: &ChannelMatrix, a: &[C64], u: usize, kappa: f64) -> Result<C64> {
    require_nonzero(a, "pre-FAWP column")?;
    let (signal, denom) = pre_terms(h, a, u, kappa)?;
    if !(denom > 0.0) {
        return Err(FawpError::Degenerate(
            "column lies in the null space of H with κ = 0".into(),
        ));
    }
    Ok(signal / denom)
}

/// Optimal per-antenna scaling `ζ_b = h_b^H z / (||H^H z||^2 + κ ||z||^2)`.
pub fn post_scaling(h: &ChannelMatrix, z: &[C64], b: usize, kappa: f64) -> Result<C64> {
    require_nonzero(z, "post-FAWP column")?;
    let (signal, denom) = post_terms(h, z, b, kappa)?;
    if !(denom > 0.0) {
        return Err(FawpError::Degenerate(
            "column lies in the null space of H^H with κ = 0".into(),
        ));
    }
    Ok(signal / denom)
}

fn ratio(signal: C64, denom: f64) -> f64 {
    let s = signal.norm_sqr();
    if s == 0.0 {
        f64::INFINITY
    } else {
        denom / s
    }
}

/// Ratio objective `(||H a||^2 + κ ||a||^2) / |h_u^r a|^2`; `+inf` when the
/// candidate has no signal component for user `u`.
pub fn pre_objective(h: &ChannelMatrix, a: &[C64], u: usize, kappa: f64) -> Result<f64> {
    let (signal, denom) = pre_terms(h, a, u, kappa)?;
    Ok(ratio(signal, denom))
}

/// Ratio objective `(||H^H z||^2 + κ ||z||^2) / |h_b^H z|^2`; `+inf` when
/// `h_b^H z = 0`.
pub fn post_objective(h: &ChannelMatrix, z: &[C64], b: usize, kappa: f64) -> Result<f64> {
    let (signal, denom) = post_terms(h, z, b, kappa)?;
    Ok(ratio(signal, denom))
}

/// Column MSE `||e_u - H a α*||^2 + κ |α|^2 ||a||^2` for an arbitrary scaling.
pub fn pre_column_mse(h: &ChannelMatrix, a: &[C64], alpha: C64, u: usize, kappa: f64) -> Result<f64> {
    let (signal, denom) = pre_terms(h, a, u, kappa)?;
    Ok(1.0 - 2.0 * (alpha.conj() * signal).re + alpha.norm_sqr() * denom)
}

/// Row MSE `||e_b^H - ζ z^H H||^2 + κ |ζ|^2 ||z||^2` for an arbitrary scaling.
pub fn post_row_mse(h: &ChannelMatrix, z: &[C64], zeta: C64, b: usize, kappa: f64) -> Result<f64> {
    let (signal, denom) = post_terms(h, z, b, kappa)?;
    Ok(1.0 - 2.0 * (zeta * signal.conj()).re + zeta.norm_sqr() * denom)
}

/// Uniform-bin quantization of one column (or row) of `Q^WF` onto the
/// odd-integer alphabet.
///
/// The range `[-w_max, w_max]` is split into `2^L` equal bins, half-open
/// on the right except the last; each real and imaginary part is replaced by
/// its bin centroid, scaled by `2^L / w_max` to an odd integer.
pub fn quantize_vector<'a>(
    values: impl IntoIterator<Item = &'a C64> + Clone,
    alphabet: &FiniteAlphabet,
) -> Result<Vec<C64>> {
    let w_max = values
        .clone()
        .into_iter()
        .fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
    if !(w_max > 0.0 && w_max.is_finite()) {
        return Err(FawpError::Degenerate(
            "cannot quantize an all-zero vector".into(),
        ));
    }
    let bins = (1u64 << alphabet.bits()) as f64;
    let width = 2.0 * w_max / bins;
    let level = |x: f64| {
        let k = ((x + w_max) / width).floor().clamp(0.0, bins - 1.0);
        2.0 * k + 1.0 - bins
    };
    Ok(values
        .into_iter()
        .map(|z| C64::new(level(z.re), level(z.im)))
        .collect())
}

/// Pre-FAWP-WF: quantize each column of `Q^WF`, then apply the optimal
/// per-user scaling.
pub fn quantize_pre(
    qwf: &CMatrix,
    alphabet: &FiniteAlphabet,
    h: &ChannelMatrix,
    kappa: f64,
) -> Result<PreFawpMatrix> {
    let (b, u) = qwf.shape();
    let mut a = CMatrix::zeros(b, u);
    let mut alpha = CVector::zeros(u);
    for (j, col) in qwf.column_iter().enumerate() {
        let q = quantize_vector(col.iter(), alphabet)?;
        alpha[j] = pre_scaling(h, &q, j, kappa)?;
        a.column_mut(j).copy_from_slice(&q);
    }
    PreFawpMatrix::new(a, alpha, alphabet)
}

/// Post-FAWP-WF: quantize each row of `Q^WF` into the matching row of
/// `Z^H`, then apply the optimal per-antenna scaling.
pub fn quantize_post(
    qwf: &CMatrix,
    alphabet: &FiniteAlphabet,
    h: &ChannelMatrix,
    kappa: f64,
) -> Result<PostFawpMatrix> {
    let (b, u) = qwf.shape();
    let mut z = CMatrix::zeros(u, b);
    let mut zeta = CVector::zeros(b);
    for (j, row) in qwf.row_iter().enumerate() {
        let q = quantize_vector(row.iter(), alphabet)?;
        let zb: Vec<C64> = q.iter().map(|v| v.conj()).collect();
        zeta[j] = post_scaling(h, &zb, j, kappa)?;
        z.column_mut(j).copy_from_slice(&zb);
    }
    PostFawpMatrix::new(z, zeta, alphabet)
}

/// Result of an exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveOptimum {
    pub vector: Vec<C64>,
    pub objective: f64,
    pub candidates: usize,
}

/// Enumerate `X^n` with the first entry restricted to the first quadrant.
///
/// Every objective here is invariant under `v -> c v`, and `X` is closed
/// under multiplication by `j`, so each orbit `{v, jv, -v, -jv}` has exactly
/// one member whose first entry lies in the first quadrant. Candidates are
/// visited in lexicographic order of alphabet-point indices (first entry most
/// significant) and the first minimizer found is kept.
fn exhaustive<F>(n: usize, alphabet: &FiniteAlphabet, mut objective: F) -> Result<ExhaustiveOptimum>
where
    F: FnMut(&[C64]) -> Result<f64>,
{
    let points = alphabet.points();
    let total = (points.len() as f64).powi(n as i32);
    if total > BRUTE_FORCE_LIMIT {
        return Err(FawpError::TooLarge {
            candidates: total,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let first: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].re > 0.0 && points[i].im > 0.0)
        .collect();
    let radix = points.len();
    let tail = radix.pow(n.saturating_sub(1) as u32);
    let mut cand = vec![points[0]; n];
    let mut best = ExhaustiveOptimum {
        vector: Vec::new(),
        objective: f64::INFINITY,
        candidates: 0,
    };
    for &f in &first {
        cand[0] = points[f];
        for code in 0..tail {
            // Mixed-radix digits of `code`, last entry fastest.
            let mut rem = code;
            for pos in (1..n).rev() {
                cand[pos] = points[rem % radix];
                rem /= radix;
            }
            let value = objective(&cand)?;
            best.candidates += 1;
            if value < best.objective || best.vector.is_empty() {
                best.objective = value;
                best.vector = cand.clone();
            }
        }
    }
    Ok(best)
}

/// Exact minimizer of the pre-FAWP ratio objective for user `u`.
pub fn brute_force_pre(
    h: &ChannelMatrix,
    u: usize,
    kappa: f64,
    alphabet: &FiniteAlphabet,
) -> Result<ExhaustiveOptimum> {
    exhaustive(h.num_bs_antennas(), alphabet, |a| pre_objective(h, a, u, kappa))
}

/// Exact minimizer of the post-FAWP ratio objective for antenna `b`.
pub fn brute_force_post(
    h: &ChannelMatrix,
    b: usize,
    kappa: f64,
    alphabet: &FiniteAlphabet,
) -> Result<ExhaustiveOptimum> {
    exhaustive(h.num_ues(), alphabet, |z| post_objective(h, z, b, kappa))
}
