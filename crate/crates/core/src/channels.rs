//! Channel realizations: i.i.d. Rayleigh fading and a geometric mmWave
//! cluster model with line-of-sight (LoS) and non-LoS modes.
//!
//! The geometric model uses a uniform linear array with half-wavelength
//! spacing. Users are dropped in a circular sector with a minimum angular
//! separation, and every row is rescaled to `||h_u^r||^2 = B` (perfect power
//! control).
//!
//! Realizations can be written to and read from a plain-text format so that
//! channels produced by other tools can be fed to the simulator:
//!
//! ```text
//! U,B,kind,seed
//! 2,3,rayleigh,7
//! re,im,re,im,re,im      <- one line per row of H (2B numbers)
//! re,im,re,im,re,im
//! ```
//!
//! Several blocks may be concatenated in one file.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FawpError, Result};
use crate::types::{ChannelMatrix, CMatrix, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    Rayleigh,
    GeomLos,
    GeomNlos,
}

impl ChannelKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Rayleigh => "rayleigh",
            Self::GeomLos => "geom-los",
            Self::GeomNlos => "geom-nlos",
        }
    }
}

/// Description of a channel generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub carrier_hz: f64,
    pub sector_deg: f64,
    pub min_sep_deg: f64,
    pub range_m: [f64; 2],
    pub num_paths: usize,
    /// Standard deviation of the Laplacian cluster angle spread (non-LoS).
    pub angular_spread_deg: f64,
    pub seed: u64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            kind: ChannelKind::Rayleigh,
            carrier_hz: 60e9,
            sector_deg: 120.0,
            min_sep_deg: 4.0,
            range_m: [10.0, 110.0],
            num_paths: 12,
            angular_spread_deg: 10.0,
            seed: 0,
        }
    }
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self, num_ues: usize) -> Result<()> {
        if self.kind == ChannelKind::Rayleigh {
            return Ok(());
        }
        let bad = |msg: String| Err(FawpError::InvalidArgument(msg));
        if !(self.carrier_hz > 0.0) {
            return bad(format!("carrier must be positive, got {}", self.carrier_hz));
        }
        if !(self.sector_deg > 0.0 && self.sector_deg <= 360.0) {
            return bad(format!("sector must be in (0, 360], got {}", self.sector_deg));
        }
        if !(self.min_sep_deg >= 0.0) {
            return bad(format!("min separation must be >= 0, got {}", self.min_sep_deg));
        }
        if self.min_sep_deg * num_ues as f64 > self.sector_deg {
            return Err(FawpError::Placement(format!(
                "{num_ues} users with {}° separation do not fit in a {}° sector",
                self.min_sep_deg, self.sector_deg
            )));
        }
        let [lo, hi] = self.range_m;
        if !(lo > 0.0 && hi >= lo) {
            return bad(format!("range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"));
        }
        if self.kind == ChannelKind::GeomNlos && self.num_paths == 0 {
            return bad("non-LoS mode needs at least one path".into());
        }
        Ok(())
    }

    pub fn generate(&self, num_bs_antennas: usize, num_ues: usize) -> Result<ChannelMatrix> {
        match self.kind {
            ChannelKind::Rayleigh => Ok(gen_rayleigh(num_bs_antennas, num_ues, self.seed)),
            _ => gen_geometric(self, num_bs_antennas, num_ues),
        }
    }
}

/// Draw a circularly-symmetric complex Gaussian with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

/// i.i.d. `CN(0, 1)` entries, deterministic in `seed`.
pub fn gen_rayleigh(num_bs_antennas: usize, num_ues: usize, seed: u64) -> ChannelMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<C64> = (0..num_ues * num_bs_antennas)
        .map(|_| complex_gaussian(&mut rng, 1.0))
        .collect();
    ChannelMatrix::from_row_slice(num_ues, num_bs_antennas, &data)
        .expect("gaussian entries are finite")
}

/// ULA array response `a_b(θ) = exp(jπ b sin θ)`, `b = 0..B-1`.
pub fn steering_vector(num_bs_antennas: usize, angle_rad: f64) -> Vec<C64> {
    let phase = PI * angle_rad.sin();
    (0..num_bs_antennas)
        .map(|b| C64::from_polar(1.0, phase * b as f64))
        .collect()
}

/// User drop: azimuth (radians, relative to broadside) and distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UePosition {
    pub angle_rad: f64,
    pub distance_m: f64,
}

/// Drop `num_ues` users uniformly in the sector subject to the minimum
/// angular separation.
///
/// Sorted angles with gaps of at least `sep` are in bijection with sorted
/// points in an interval shortened by `(U-1) sep`, so sampling there and
/// re-inserting the gaps yields exactly the distribution of rejection
/// sampling, without the rejection loop.
pub fn place_ues<R: Rng + ?Sized>(
    spec: &ChannelSpec,
    num_ues: usize,
    rng: &mut R,
) -> Result<Vec<UePosition>> {
    spec.validate(num_ues)?;
    let slack = spec.sector_deg - spec.min_sep_deg * (num_ues.saturating_sub(1)) as f64;
    let mut offsets: Vec<f64> = (0..num_ues).map(|_| rng.random::<f64>() * slack).collect();
    offsets.sort_by(f64::total_cmp);
    let mut angles: Vec<f64> = offsets
        .iter()
        .enumerate()
        .map(|(i, o)| (o + i as f64 * spec.min_sep_deg - spec.sector_deg / 2.0).to_radians())
        .collect();
    angles.shuffle(rng);
    let [lo, hi] = spec.range_m;
    Ok(angles
        .into_iter()
        .map(|angle_rad| {
            // Uniform over the annular sector area.
            let r2 = lo * lo + rng.random::<f64>() * (hi * hi - lo * lo);
            UePosition {
                angle_rad,
                distance_m: r2.sqrt(),
            }
        })
        .collect())
}

fn laplacian<R: Rng + ?Sized>(rng: &mut R, std_dev: f64) -> f64 {
    let scale = std_dev / 2f64.sqrt();
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Geometric mmWave channel realization for `spec.kind` in
/// `{GeomLos, GeomNlos}`.
pub fn gen_geometric(
    spec: &ChannelSpec,
    num_bs_antennas: usize,
    num_ues: usize,
) -> Result<ChannelMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ues = place_ues(spec, num_ues, &mut rng)?;
    channel_for_positions(spec, num_bs_antennas, &ues, &mut rng)
}

/// Build the channel for given user positions; the randomness left is the
/// LoS phase (from distance) and, in non-LoS mode, the cluster draws.
pub fn channel_for_positions<R: Rng + ?Sized>(
    spec: &ChannelSpec,
    num_bs_antennas: usize,
    ues: &[UePosition],
    rng: &mut R,
) -> Result<ChannelMatrix> {
    let wavelength = SPEED_OF_LIGHT / spec.carrier_hz;
    let b = num_bs_antennas;
    let mut h = CMatrix::zeros(ues.len(), b);
    for (u, ue) in ues.iter().enumerate() {
        let mut row = vec![C64::new(0.0, 0.0); b];
        match spec.kind {
            ChannelKind::GeomLos => {
                let phase = C64::from_polar(1.0, -2.0 * PI * ue.distance_m / wavelength);
                for (r, a) in row.iter_mut().zip(steering_vector(b, ue.angle_rad)) {
                    *r = phase * a;
                }
            }
            ChannelKind::GeomNlos => {
                let var = 1.0 / spec.num_paths as f64;
                for _ in 0..spec.num_paths {
                    let gain = complex_gaussian(rng, var);
                    let theta =
                        ue.angle_rad + laplacian(rng, spec.angular_spread_deg).to_radians();
                    for (r, a) in row.iter_mut().zip(steering_vector(b, theta)) {
                        *r += gain * a;
                    }
                }
            }
            ChannelKind::Rayleigh => {
                return Err(FawpError::InvalidArgument(
                    "Rayleigh channels have no geometry".into(),
                ))
            }
        }
        let norm_sq: f64 = row.iter().map(|z| z.norm_sqr()).sum();
        if !(norm_sq > 0.0) {
            return Err(FawpError::Degenerate(format!("user {u} has an all-zero channel")));
        }
        let scale = (b as f64 / norm_sq).sqrt();
        for (j, z) in row.into_iter().enumerate() {
            h[(u, j)] = z * scale;
        }
    }
    ChannelMatrix::new(h)
}

/// Mean over user pairs of `|h_u^H h_v| / (||h_u|| ||h_v||)`.
pub fn mean_row_correlation(h: &ChannelMatrix) -> f64 {
    let u = h.num_ues();
    if u < 2 {
        return 0.0;
    }
    let norms: Vec<f64> = (0..u).map(|i| h.row(i).norm()).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..u {
        for j in (i + 1)..u {
            let ip: C64 = h
                .row(i)
                .iter()
                .zip(h.row(j).iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            total += ip.norm() / (norms[i] * norms[j]);
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// One channel realization with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRecord {
    pub kind: String,
    pub seed: u64,
    pub channel: ChannelMatrix,
}

pub const CHANNEL_HEADER: &str = "U,B,kind,seed";

pub fn format_channels(records: &[ChannelRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        let h = &rec.channel;
        let _ = writeln!(out, "{CHANNEL_HEADER}");
        let _ = writeln!(
            out,
            "{},{},{},{}",
            h.num_ues(),
            h.num_bs_antennas(),
            rec.kind,
            rec.seed
        );
        for u in 0..h.num_ues() {
            let line: Vec<String> = h
                .row(u)
                .iter()
                .flat_map(|z| [format!("{:.16e}", z.re), format!("{:.16e}", z.im)])
                .collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
    }
    out
}

pub fn parse_channels(text: &str) -> Result<Vec<ChannelRecord>> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut out = Vec::new();
    let perr = |n: usize, msg: String| FawpError::Parse(format!("line {}: {msg}", n + 1));
    while let Some((n, header)) = lines.next() {
        if header != CHANNEL_HEADER {
            return Err(perr(n, format!("expected `{CHANNEL_HEADER}`, got `{header}`")));
        }
        let (n, meta) = lines
            .next()
            .ok_or_else(|| perr(n, "missing channel metadata line".into()))?;
        let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(perr(n, format!("expected 4 metadata fields, got {}", fields.len())));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| perr(n, format!("bad integer `{s}`: {e}")))
        };
        let u = parse_usize(fields[0])?;
        let b = parse_usize(fields[1])?;
        let kind = fields[2].to_string();
        let seed = fields[3]
            .parse::<u64>()
            .map_err(|e| perr(n, format!("bad seed `{}`: {e}", fields[3])))?;
        let mut data = Vec::with_capacity(u * b);
        for _ in 0..u {
            let (n, row) = lines
                .next()
                .ok_or_else(|| perr(n, "truncated channel block".into()))?;
            let nums: Vec<f64> = row
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| perr(n, format!("bad number `{s}`: {e}")))
                })
                .collect::<Result<_>>()?;
            if nums.len() != 2 * b {
                return Err(perr(n, format!("expected {} numbers, got {}", 2 * b, nums.len())));
            }
            data.extend(nums.chunks(2).map(|p| C64::new(p[0], p[1])));
        }
        out.push(ChannelRecord {
            kind,
            seed,
            channel: ChannelMatrix::from_row_slice(u, b, &data)?,
        });
    }
    Ok(out)
}

pub fn write_channels(path: &Path, records: &[ChannelRecord]) -> Result<()> {
    std::fs::write(path, format_channels(records))?;
    Ok(())
}

pub fn read_channels(path: &Path) -> Result<Vec<ChannelRecord>> {
    parse_channels(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rayleigh_statistics() {
        let h = gen_rayleigh(256, 16, 1);
        let mean_power = h.frobenius_sq() / 4096.0;
        assert!((mean_power - 1.0).abs() < 0.05, "{mean_power}");
        assert_eq!(h, gen_rayleigh(256, 16, 1));
        assert_ne!(h, gen_rayleigh(256, 16, 2));

        let big = gen_rayleigh(1000, 10, 5);
        let n = 10_000.0;
        let (mut sr, mut si, mut srr, mut sii, mut sri) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for z in big.matrix().iter() {
            sr += z.re;
            si += z.im;
            srr += z.re * z.re;
            sii += z.im * z.im;
            sri += z.re * z.im;
        }
        let cov = sri / n - (sr / n) * (si / n);
        let corr = cov / ((srr / n - (sr / n).powi(2)) * (sii / n - (si / n).powi(2))).sqrt();
        assert!(corr.abs() < 0.05, "{corr}");
    }

    #[test]
    fn los_rows_are_unit_modulus_with_power_control() {
        let spec = ChannelSpec::new(ChannelKind::GeomLos, 9);
        let h = spec.generate(64, 8).unwrap();
        for u in 0..8 {
            for z in h.row(u).iter() {
                assert!((z.norm() - 1.0).abs() < 1e-12);
            }
            assert!((h.row(u).norm_squared() - 64.0).abs() < 1e-9);
        }
    }

    #[test]
    fn nlos_power_control() {
        let spec = ChannelSpec::new(ChannelKind::GeomNlos, 4);
        let h = spec.generate(128, 16).unwrap();
        for u in 0..16 {
            assert!((h.row(u).norm_squared() - 128.0).abs() < 1e-9);
        }
        assert_eq!(h, spec.generate(128, 16).unwrap());
    }

    #[test]
    fn los_rows_at_equal_angles_are_parallel() {
        let spec = ChannelSpec::new(ChannelKind::GeomLos, 0);
        let ues = [
            UePosition { angle_rad: 0.3, distance_m: 20.0 },
            UePosition { angle_rad: 0.3, distance_m: 57.3 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = channel_for_positions(&spec, 32, &ues, &mut rng).unwrap();
        assert!((mean_row_correlation(&h) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn placement_respects_geometry() {
        let spec = ChannelSpec::new(ChannelKind::GeomLos, 0);
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ues = place_ues(&spec, 16, &mut rng).unwrap();
            let mut angles: Vec<f64> = ues.iter().map(|p| p.angle_rad.to_degrees()).collect();
            angles.sort_by(f64::total_cmp);
            assert!(angles[0] >= -60.0 - 1e-9 && angles[15] <= 60.0 + 1e-9);
            for w in angles.windows(2) {
                assert!(w[1] - w[0] >= 4.0 - 1e-9);
            }
            for p in &ues {
                assert!((10.0..=110.0).contains(&p.distance_m));
            }
        }
    }

    #[test]
    fn infeasible_placement() {
        let spec = ChannelSpec {
            min_sep_deg: 10.0,
            ..ChannelSpec::new(ChannelKind::GeomNlos, 0)
        };
        assert!(matches!(
            spec.generate(64, 16),
            Err(FawpError::Placement(_))
        ));
    }

    #[test]
    fn text_format_round_trip() {
        let records = vec![
            ChannelRecord {
                kind: "rayleigh".into(),
                seed: 3,
                channel: gen_rayleigh(5, 2, 3),
            },
            ChannelRecord {
                kind: "geom-los".into(),
                seed: 8,
                channel: ChannelSpec::new(ChannelKind::GeomLos, 8).generate(6, 3).unwrap(),
            },
        ];
        let text = format_channels(&records);
        assert!(text.starts_with("U,B,kind,seed\n2,5,rayleigh,3\n"));
        assert_eq!(parse_channels(&text).unwrap(), records);
    }

    #[test]
    fn text_format_errors() {
        assert!(parse_channels("U,B,kind\n").is_err());
        assert!(parse_channels("U,B,kind,seed\n1,2,x,0\n1,2,3\n").is_err());
        assert!(parse_channels("U,B,kind,seed\n2,1,x,0\n1,2\n").is_err());
        assert!(parse_channels("").unwrap().is_empty());
    }
}
