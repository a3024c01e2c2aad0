//! Shared domain types: system parameters, the downlink channel, QAM
//! constellations and the finite alphabets used by low-resolution matrices.

use nalgebra::{DMatrix, DVector, DVectorView, Dyn, MatrixView, U1};
use num_complex::Complex64;

use crate::error::{FawpError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Static parameters of the downlink: `B` transmit antennas serving `U`
/// single-antenna users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    pub num_bs_antennas: usize,
    pub num_ues: usize,
    /// Per-symbol variance `Es`.
    pub symbol_energy: f64,
    /// Total transmit power `P`.
    pub total_power: f64,
    /// Noise variance `N0` per complex entry.
    pub noise_variance: f64,
}

impl SystemConfig {
    pub fn new(
        num_bs_antennas: usize,
        num_ues: usize,
        symbol_energy: f64,
        total_power: f64,
        noise_variance: f64,
    ) -> Result<Self> {
        if num_ues == 0 || num_ues >= num_bs_antennas {
            return Err(FawpError::InvalidArgument(format!(
                "need 0 < U < B, got U={num_ues}, B={num_bs_antennas}"
            )));
        }
        for (name, v) in [
            ("Es", symbol_energy),
            ("P", total_power),
            ("N0", noise_variance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FawpError::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self {
            num_bs_antennas,
            num_ues,
            symbol_energy,
            total_power,
            noise_variance,
        })
    }

    /// Configuration with `Es = P = 1` and `N0` chosen so that `P/N0` equals
    /// `snr_db` decibels.
    pub fn at_snr_db(num_bs_antennas: usize, num_ues: usize, snr_db: f64) -> Result<Self> {
        Self::new(num_bs_antennas, num_ues, 1.0, 1.0, noise_for_snr_db(1.0, snr_db))
    }

    pub fn with_noise_variance(mut self, n0: f64) -> Result<Self> {
        if !(n0.is_finite() && n0 > 0.0) {
            return Err(FawpError::InvalidArgument(format!(
                "N0 must be positive and finite, got {n0}"
            )));
        }
        self.noise_variance = n0;
        Ok(self)
    }

    /// Normalized transmit power `P/N0` in dB.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.total_power / self.noise_variance).log10()
    }
}

/// Noise variance giving a normalized transmit power of `snr_db`.
pub fn noise_for_snr_db(total_power: f64, snr_db: f64) -> f64 {
    total_power / 10f64.powf(snr_db / 10.0)
}

/// The `U x B` downlink channel `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: CMatrix,
}

impl ChannelMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(FawpError::InvalidArgument("empty channel matrix".into()));
        }
        if entries.iter().any(|h| !(h.re.is_finite() && h.im.is_finite())) {
            return Err(FawpError::InvalidArgument(
                "channel matrix has non-finite entries".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn from_row_slice(num_ues: usize, num_bs_antennas: usize, data: &[C64]) -> Result<Self> {
        if data.len() != num_ues * num_bs_antennas {
            return Err(FawpError::DimensionMismatch(format!(
                "{} entries for a {num_ues}x{num_bs_antennas} channel",
                data.len()
            )));
        }
        Self::new(CMatrix::from_row_slice(num_ues, num_bs_antennas, data))
    }

    pub fn num_ues(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_bs_antennas(&self) -> usize {
        self.entries.ncols()
    }

    /// Row `h_u^r` of user `u`.
    pub fn row(&self, u: usize) -> MatrixView<'_, C64, U1, Dyn, U1, Dyn> {
        self.entries.row(u)
    }

    /// Column `h_b` of antenna `b`.
    pub fn col(&self, b: usize) -> DVectorView<'_, C64> {
        self.entries.column(b)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    /// Squared Frobenius norm `||H||_F^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|h| h.norm_sqr()).sum()
    }
}

/// A length-`U` vector of symbols, symbol estimates or received samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolVector(CVector);

impl SymbolVector {
    pub fn new(entries: CVector) -> Self {
        Self(entries)
    }

    pub fn from_slice(entries: &[C64]) -> Self {
        Self(CVector::from_column_slice(entries))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &CVector {
        &self.0
    }

    pub fn into_inner(self) -> CVector {
        self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &C64> {
        self.0.iter()
    }
}

impl std::ops::Index<usize> for SymbolVector {
    type Output = C64;

    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstellationKind {
    Qpsk,
    Qam16,
    Qam64,
    Qam256,
}

impl ConstellationKind {
    pub fn parse(name: &str) -> Result<Self> {
        let key: String = name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "qpsk" | "4qam" | "qam4" => Ok(Self::Qpsk),
            "16qam" | "qam16" => Ok(Self::Qam16),
            "64qam" | "qam64" => Ok(Self::Qam64),
            "256qam" | "qam256" => Ok(Self::Qam256),
            _ => Err(FawpError::UnknownConstellation(name.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Qpsk => "QPSK",
            Self::Qam16 => "16-QAM",
            Self::Qam64 => "64-QAM",
            Self::Qam256 => "256-QAM",
        }
    }

    pub fn bits_per_symbol(&self) -> u32 {
        match self {
            Self::Qpsk => 2,
            Self::Qam16 => 4,
            Self::Qam64 => 6,
            Self::Qam256 => 8,
        }
    }
}

/// Square Gray-mapped QAM constellation scaled to `E|s|^2 = Es`.
///
/// Point `i` sits at in-phase level `i / m` and quadrature level `i % m`,
/// where `m` is the number of levels per axis and levels ascend. The bit
/// label is the per-axis Gray code of the in-phase index (high bits)
/// followed by that of the quadrature index (low bits).
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    kind: ConstellationKind,
    symbol_energy: f64,
    levels_per_axis: usize,
    /// Spacing unit: per-axis levels are `(2i - (m-1)) * scale`.
    scale: f64,
    points: Vec<C64>,
    labels: Vec<u32>,
    by_label: Vec<usize>,
}

fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

impl Constellation {
    pub fn new(kind: ConstellationKind, symbol_energy: f64) -> Result<Self> {
        if !(symbol_energy.is_finite() && symbol_energy > 0.0) {
            return Err(FawpError::InvalidArgument(format!(
                "symbol energy must be positive, got {symbol_energy}"
            )));
        }
        let axis_bits = kind.bits_per_symbol() / 2;
        let m = 1usize << axis_bits;
        let order = (m * m) as f64;
        // Mean energy of the unscaled odd-integer grid is 2(M-1)/3.
        let scale = (3.0 * symbol_energy / (2.0 * (order - 1.0))).sqrt();
        let level = |i: usize| (2.0 * i as f64 - (m as f64 - 1.0)) * scale;

        let mut points = Vec::with_capacity(m * m);
        let mut labels = Vec::with_capacity(m * m);
        for i in 0..m {
            for q in 0..m {
                points.push(C64::new(level(i), level(q)));
                labels.push((gray(i as u32) << axis_bits) | gray(q as u32));
            }
        }
        let mut by_label = vec![0usize; m * m];
        for (idx, &label) in labels.iter().enumerate() {
            by_label[label as usize] = idx;
        }
        Ok(Self {
            kind,
            symbol_energy,
            levels_per_axis: m,
            scale,
            points,
            labels,
            by_label,
        })
    }

    pub fn from_name(name: &str, symbol_energy: f64) -> Result<Self> {
        Self::new(ConstellationKind::parse(name)?, symbol_energy)
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn symbol_energy(&self) -> f64 {
        self.symbol_energy
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.kind.bits_per_symbol()
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    /// Point carrying the bit tuple `label`.
    pub fn map_bits(&self, label: u32) -> C64 {
        self.points[self.by_label[label as usize]]
    }

    fn axis_index(&self, x: f64) -> usize {
        let m = self.levels_per_axis as f64;
        let t = (x / self.scale + (m - 1.0)) / 2.0;
        // ceil(t - 1/2) sends exact midpoints to the lower level.
        let i = (t - 0.5).ceil();
        if i <= 0.0 || i.is_nan() {
            0
        } else if i >= m - 1.0 {
            self.levels_per_axis - 1
        } else {
            i as usize
        }
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn nearest(&self, z: C64) -> usize {
        self.axis_index(z.re) * self.levels_per_axis + self.axis_index(z.im)
    }
}

/// Per-component finite alphabet: `X = {a + jb : a, b in {±1, ±3, ..., ±(2^L-1)}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteAlphabet {
    bits: u32,
    levels: Vec<f64>,
}

impl FiniteAlphabet {
    pub fn new(bits: u32) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(FawpError::InvalidArgument(format!(
                "alphabet resolution must be between 1 and 16 bits, got {bits}"
            )));
        }
        let n = 1i64 << bits;
        let levels = (0..n).map(|k| (2 * k - (n - 1)) as f64).collect();
        Ok(Self { bits, levels })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Ascending real levels.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Half-width `2^L - 1` of the convex-hull square per component.
    pub fn hull_bound(&self) -> f64 {
        ((1u64 << self.bits) - 1) as f64
    }

    /// Number of points `|X| = 4^L`.
    pub fn size(&self) -> usize {
        self.levels.len() * self.levels.len()
    }

    /// All points, real part major, both parts ascending.
    pub fn points(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.size());
        for &re in &self.levels {
            for &im in &self.levels {
                out.push(C64::new(re, im));
            }
        }
        out
    }

    pub fn contains_level(&self, x: f64) -> bool {
        let hw = self.hull_bound();
        x.abs() <= hw && x.fract() == 0.0 && (x.abs() as i64) % 2 == 1
    }

    pub fn contains(&self, z: C64) -> bool {
        self.contains_level(z.re) && self.contains_level(z.im)
    }

    /// Nearest level to `x`; exact midpoints go to the level of larger
    /// magnitude and zero maps to `+1`.
    pub fn nearest_level(&self, x: f64) -> f64 {
        let mag = x.abs();
        let n = ((mag - 1.0) / 2.0 + 0.5).floor().max(0.0);
        let level = (2.0 * n + 1.0).min(self.hull_bound());
        if x < 0.0 {
            -level
        } else {
            level
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn qpsk_unit_energy() {
        let c = Constellation::from_name("QPSK", 1.0).unwrap();
        assert_eq!(c.bits_per_symbol(), 2);
        let s = 1.0 / 2f64.sqrt();
        for p in c.points() {
            assert_relative_eq!(p.re.abs(), s, epsilon = 1e-15);
            assert_relative_eq!(p.im.abs(), s, epsilon = 1e-15);
        }
    }

    #[test]
    fn qam16_levels() {
        let c = Constellation::from_name("16-QAM", 1.0).unwrap();
        let mut re: Vec<f64> = c.points().iter().map(|p| p.re).collect();
        re.sort_by(f64::total_cmp);
        re.dedup();
        let u = 1.0 / 10f64.sqrt();
        let expected = [-3.0 * u, -u, u, 3.0 * u];
        for (a, b) in re.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn constellation_energy_and_mean() {
        for name in ["qpsk", "16qam", "64qam", "256qam"] {
            for es in [1.0, 2.5] {
                let c = Constellation::from_name(name, es).unwrap();
                let n = c.len() as f64;
                let mean: C64 = c.points().iter().sum::<C64>() / n;
                let energy: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / n;
                assert!(mean.norm() < 1e-12);
                assert!((energy - es).abs() < 1e-12, "{name}: {energy}");
            }
        }
    }

    #[test]
    fn gray_labels_are_a_bijection_with_unit_neighbor_distance() {
        for name in ["qpsk", "16qam", "64qam", "256qam"] {
            let c = Constellation::from_name(name, 1.0).unwrap();
            let m = (c.len() as f64).sqrt() as usize;
            let mut seen = vec![false; c.len()];
            for i in 0..c.len() {
                assert!(!seen[c.label(i) as usize]);
                seen[c.label(i) as usize] = true;
                assert_eq!(c.map_bits(c.label(i)), c.points()[i]);
            }
            for i in 0..m {
                for q in 0..m {
                    let idx = i * m + q;
                    if i + 1 < m {
                        let d = c.label(idx) ^ c.label(idx + m);
                        assert_eq!(d.count_ones(), 1);
                    }
                    if q + 1 < m {
                        let d = c.label(idx) ^ c.label(idx + 1);
                        assert_eq!(d.count_ones(), 1);
                    }
                }
            }
        }
    }

    #[test]
    fn nearest_point_and_ties() {
        let c = Constellation::from_name("16qam", 1.0).unwrap();
        for (i, p) in c.points().iter().enumerate() {
            assert_eq!(c.nearest(*p), i);
            assert_eq!(c.nearest(*p + C64::new(0.01, -0.02)), i);
        }
        // Origin is equidistant from the four inner points.
        let idx = c.nearest(C64::new(0.0, 0.0));
        let inner: Vec<usize> = (0..c.len())
            .filter(|&i| (c.points()[i].norm_sqr() - 0.2).abs() < 1e-12)
            .collect();
        assert_eq!(idx, *inner.iter().min().unwrap());
        // Far outside clamps to the corner.
        assert_eq!(c.nearest(C64::new(10.0, 10.0)), c.len() - 1);
    }

    #[test]
    fn unknown_constellation() {
        assert!(matches!(
            Constellation::from_name("8psk", 1.0),
            Err(FawpError::UnknownConstellation(_))
        ));
    }

    #[test]
    fn one_bit_alphabet() {
        let a = FiniteAlphabet::new(1).unwrap();
        let pts = a.points();
        assert_eq!(pts.len(), 4);
        for re in [-1.0, 1.0] {
            for im in [-1.0, 1.0] {
                assert!(pts.contains(&C64::new(re, im)));
            }
        }
        assert_eq!(a.hull_bound(), 1.0);
    }

    #[test]
    fn multi_bit_alphabets() {
        let a2 = FiniteAlphabet::new(2).unwrap();
        assert_eq!(a2.levels(), &[-3.0, -1.0, 1.0, 3.0]);
        assert_eq!(a2.size(), 16);
        let a3 = FiniteAlphabet::new(3).unwrap();
        assert_eq!(a3.levels(), &[-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0]);
        assert_eq!(a3.size(), 64);
        assert!(FiniteAlphabet::new(0).is_err());
    }

    #[test]
    fn alphabet_symmetry() {
        for bits in 1..=4 {
            let a = FiniteAlphabet::new(bits).unwrap();
            for x in a.points() {
                assert!(a.contains(-x));
                assert!(a.contains(x.conj()));
                assert!(a.contains(x * C64::i()));
            }
            assert!(!a.contains(C64::new(0.0, 1.0)));
            assert!(!a.contains(C64::new(2.0, 1.0)));
        }
    }

    #[test]
    fn nearest_level_rounding() {
        let a = FiniteAlphabet::new(2).unwrap();
        assert_eq!(a.nearest_level(0.0), 1.0);
        assert_eq!(a.nearest_level(-0.3), -1.0);
        assert_eq!(a.nearest_level(2.0), 3.0);
        assert_eq!(a.nearest_level(-2.0), -3.0);
        assert_eq!(a.nearest_level(1.99), 1.0);
        assert_eq!(a.nearest_level(9.0), 3.0);
    }

    #[test]
    fn system_config_validation() {
        assert!(SystemConfig::new(4, 4, 1.0, 1.0, 1.0).is_err());
        assert!(SystemConfig::new(8, 4, 0.0, 1.0, 1.0).is_err());
        let cfg = SystemConfig::at_snr_db(256, 16, 10.0).unwrap();
        assert_relative_eq!(cfg.noise_variance, 0.1, epsilon = 1e-15);
        assert_relative_eq!(cfg.snr_db(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn channel_rejects_non_finite() {
        let m = CMatrix::from_element(2, 3, C64::new(f64::NAN, 0.0));
        assert!(ChannelMatrix::new(m).is_err());
        let h = ChannelMatrix::from_row_slice(1, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 2.0)])
            .unwrap();
        assert_eq!(h.num_ues(), 1);
        assert_eq!(h.num_bs_antennas(), 2);
        assert_eq!(h.col(1)[0], C64::new(0.0, 2.0));
        assert_eq!(h.frobenius_sq(), 5.0);
    }
}
