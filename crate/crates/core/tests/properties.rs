//! Property tests over randomized channels, alphabets and parameters.

use fawp::channels::{
    format_channels, gen_rayleigh, mean_row_correlation, parse_channels, place_ues, ChannelKind,
    ChannelRecord, ChannelSpec,
};
use fawp::fawp::{
    post_objective, post_row_mse, post_scaling, pre_column_mse, pre_objective, pre_scaling,
    quantize_post, quantize_pre, quantize_vector,
};
use fawp::fbs::{project_to_alphabet, prox_g, FbsParams, InitMode};
use fawp::harness::{format_csv, parse_csv, ResultRow};
use fawp::sim::{ber, evm, MetricAccumulator};
use fawp::types::{Constellation, ConstellationKind, C64};
use fawp::wf::{wf_direct, wf_woodbury};
use fawp::FiniteAlphabet;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cplx() -> impl Strategy<Value = C64> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..6).prop_flat_map(|u| (Just(u), u..(4 * u + 4)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn woodbury_matches_direct((u, b) in dims(), seed in any::<u64>(), kappa in 1e-3..50.0f64) {
        let h = gen_rayleigh(b, u, seed);
        let d = wf_direct(&h, kappa).unwrap();
        let w = wf_woodbury(&h, kappa).unwrap();
        prop_assert!((&d - &w).norm() <= 1e-9 * d.norm());
    }

    #[test]
    fn wf_tends_to_zero_forcing((u, b) in dims(), seed in any::<u64>()) {
        // Full row rank almost surely, so H Q -> I as κ -> 0.
        let h = gen_rayleigh(b + 1, u, seed);
        let q = wf_woodbury(&h, 1e-10).unwrap();
        let hq = h.matrix() * q;
        let eye = fawp::CMatrix::identity(u, u);
        prop_assert!((hq - eye).norm() < 1e-6);
    }

    #[test]
    fn quantized_entries_lie_in_alphabet(
        v in prop::collection::vec(cplx(), 1..40),
        bits in 1u32..5,
    ) {
        prop_assume!(v.iter().any(|z| z.re != 0.0 || z.im != 0.0));
        let alphabet = FiniteAlphabet::new(bits).unwrap();
        let q = quantize_vector(v.iter(), &alphabet).unwrap();
        prop_assert_eq!(q.len(), v.len());
        for z in &q {
            prop_assert!(alphabet.contains(*z), "{z} not in {bits}-bit alphabet");
        }
    }

    #[test]
    fn one_bit_quantization_is_sign(v in prop::collection::vec(cplx(), 1..40)) {
        prop_assume!(v.iter().any(|z| z.re != 0.0 || z.im != 0.0));
        let q = quantize_vector(v.iter(), &FiniteAlphabet::new(1).unwrap()).unwrap();
        let sign = |x: f64| if x < 0.0 { -1.0 } else { 1.0 };
        for (z, s) in v.iter().zip(&q) {
            prop_assert_eq!(s.re, sign(z.re));
            prop_assert_eq!(s.im, sign(z.im));
        }
    }

    #[test]
    fn quantization_is_scale_invariant(
        v in prop::collection::vec(cplx(), 1..20),
        scale in 0.01..100.0f64,
        bits in 1u32..4,
    ) {
        prop_assume!(v.iter().any(|z| z.re.abs() > 1e-3 || z.im.abs() > 1e-3));
        let alphabet = FiniteAlphabet::new(bits).unwrap();
        let scaled: Vec<C64> = v.iter().map(|z| z * scale).collect();
        let a = quantize_vector(v.iter(), &alphabet).unwrap();
        let b = quantize_vector(scaled.iter(), &alphabet).unwrap();
        // Bin edges may move by rounding only for values sitting on an edge.
        let diffs = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        prop_assert!(diffs <= 1);
    }

    #[test]
    fn optimal_scaling_matches_closed_form_mse(
        (u, b) in dims(),
        seed in any::<u64>(),
        kappa in 0.01..5.0f64,
        bits in 1u32..4,
    ) {
        let h = gen_rayleigh(b, u, seed);
        let alphabet = FiniteAlphabet::new(bits).unwrap();
        let q = wf_woodbury(&h, kappa).unwrap();
        let ui = (seed % u as u64) as usize;
        let a = quantize_vector(q.column(ui).iter(), &alphabet).unwrap();
        let alpha = pre_scaling(&h, &a, ui, kappa).unwrap();
        let mse = pre_column_mse(&h, &a, alpha, ui, kappa).unwrap();
        let ratio = pre_objective(&h, &a, ui, kappa).unwrap();
        prop_assert!((mse - (1.0 - 1.0 / ratio)).abs() < 1e-9);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&mse));

        let bi = (seed % b as u64) as usize;
        let z: Vec<C64> = quantize_vector(q.row(bi).iter(), &alphabet)
            .unwrap()
            .into_iter()
            .map(|v| v.conj())
            .collect();
        let zeta = post_scaling(&h, &z, bi, kappa).unwrap();
        let mse = post_row_mse(&h, &z, zeta, bi, kappa).unwrap();
        let ratio = post_objective(&h, &z, bi, kappa).unwrap();
        prop_assert!((mse - (1.0 - 1.0 / ratio)).abs() < 1e-9);
    }

    #[test]
    fn optimal_scaling_beats_perturbations(
        seed in any::<u64>(),
        kappa in 0.01..5.0f64,
        d in cplx(),
        mag in -8.0..1.0f64,
    ) {
        let h = gen_rayleigh(12, 3, seed);
        let alphabet = FiniteAlphabet::new(2).unwrap();
        let q = wf_woodbury(&h, kappa).unwrap();
        let a = quantize_vector(q.column(0).iter(), &alphabet).unwrap();
        let alpha = pre_scaling(&h, &a, 0, kappa).unwrap();
        let base = pre_column_mse(&h, &a, alpha, 0, kappa).unwrap();
        let moved = pre_column_mse(&h, &a, alpha + d * 10f64.powf(mag) * alpha.norm(), 0, kappa).unwrap();
        prop_assert!(moved >= base - 1e-12);
    }

    #[test]
    fn fawp_wf_matrices_use_alphabet((u, b) in dims(), seed in any::<u64>(), bits in 1u32..4) {
        let h = gen_rayleigh(b, u, seed);
        let alphabet = FiniteAlphabet::new(bits).unwrap();
        let q = wf_woodbury(&h, 0.5).unwrap();
        let pre = quantize_pre(&q, &alphabet, &h, 0.5).unwrap();
        prop_assert!(pre.low_res().iter().all(|z| alphabet.contains(*z)));
        let post = quantize_post(&q, &alphabet, &h, 0.5).unwrap();
        prop_assert!(post.low_res().iter().all(|z| alphabet.contains(*z)));
    }

    #[test]
    fn prox_output_is_bounded(v in prop::collection::vec(cplx(), 0..30), nu in 0.01..10.0f64) {
        for x in &v {
            let y = prox_g(*x, nu);
            prop_assert!(y.re.abs() <= 1.0 && y.im.abs() <= 1.0);
            prop_assert!(y.re.abs() <= nu * x.re.abs() + 1e-15);
            prop_assert!(y.re * x.re >= 0.0 && y.im * x.im >= 0.0);
        }
    }

    #[test]
    fn projection_hits_alphabet(v in prop::collection::vec(cplx(), 1..30), bits in 1u32..5) {
        let alphabet = FiniteAlphabet::new(bits).unwrap();
        match project_to_alphabet(&v, &alphabet) {
            Some(p) => {
                prop_assert!(p.iter().all(|z| alphabet.contains(*z)));
                // The largest-magnitude part always lands on the outermost level.
                let peak = p.iter().fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
                prop_assert_eq!(peak, alphabet.hull_bound());
            }
            None => prop_assert!(v.iter().all(|z| z.re == 0.0 && z.im == 0.0)),
        }
    }

    #[test]
    fn params_text_round_trip(
        steps in prop::collection::vec((1e-6..1.0f64, 0.01..10.0f64, -2.0..5.0f64), 1..12),
        wf_init in any::<bool>(),
    ) {
        let init = if wf_init { InitMode::Wf } else { InitMode::Mrt };
        let p = FbsParams::new(
            steps.iter().map(|s| s.0).collect(),
            steps.iter().map(|s| s.1).collect(),
            steps.iter().map(|s| s.2).collect(),
            init,
        ).unwrap();
        prop_assert_eq!(FbsParams::from_text(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn accumulator_merge_is_associative(counts in prop::collection::vec((0u64..50, 1u64..500, 0.0..10.0f64, 0.1..10.0f64), 1..10)) {
        let accs: Vec<MetricAccumulator> = counts
            .iter()
            .map(|&(e, n, num, den)| MetricAccumulator {
                bit_errors: e.min(n),
                bits_sent: n,
                evm_num: num,
                evm_den: den,
                vectors_sent: n,
            })
            .collect();
        let mut left = MetricAccumulator::default();
        for a in &accs {
            left.merge(a);
        }
        let mut right = MetricAccumulator::default();
        for a in accs.iter().rev() {
            right.merge(a);
        }
        prop_assert_eq!(left.bit_errors, right.bit_errors);
        prop_assert_eq!(left.bits_sent, right.bits_sent);
        let (l, r) = (evm(&left).unwrap(), evm(&right).unwrap());
        prop_assert!((l - r).abs() < 1e-9 * l.max(1.0));
        prop_assert!((0.0..=1.0).contains(&ber(&left).unwrap()));
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit(idx in 0usize..64) {
        let con = Constellation::new(ConstellationKind::Qam64, 1.0).unwrap();
        let p = con.points()[idx];
        let d_min = (con.points()[0] - con.points()[1]).norm().min((con.points()[0] - con.points()[8]).norm());
        for (j, q) in con.points().iter().enumerate() {
            if j != idx && ((p - q).norm() - d_min).abs() < 1e-9 {
                prop_assert_eq!((con.label(idx) ^ con.label(j)).count_ones(), 1);
            }
        }
    }

    #[test]
    fn csv_round_trip(ber in 0.0..0.5f64, evm in 0.0..100.0f64, snr in -10.0..40.0f64, bits in prop::option::of(1u32..5), n in 1u64..10_000) {
        let row = ResultRow {
            precoder: if bits.is_some() { "PreFAWP-WF".into() } else { "WF".into() },
            bits,
            snr_db: snr,
            ber,
            ber_stderr: (ber * (1.0 - ber) / (64 * n) as f64).sqrt(),
            evm_pct: evm,
            vectors: n,
            bits_sent: 64 * n,
            seconds: 0.0,
            low_confidence: ber * ((64 * n) as f64) < 100.0,
        };
        let back = parse_csv(&format_csv(std::slice::from_ref(&row))).unwrap();
        prop_assert_eq!(back, vec![row]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn geometric_rows_obey_power_control(seed in any::<u64>(), nlos in any::<bool>()) {
        let kind = if nlos { ChannelKind::GeomNlos } else { ChannelKind::GeomLos };
        let h = ChannelSpec::new(kind, seed).generate(64, 8).unwrap();
        for u in 0..8 {
            let p = h.row(u).norm_squared();
            prop_assert!((p - 64.0).abs() < 1e-9 * 64.0, "row {u} power {p}");
        }
    }

    #[test]
    fn placement_keeps_minimum_separation(seed in any::<u64>(), ues in 1usize..30) {
        let spec = ChannelSpec::new(ChannelKind::GeomLos, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = place_ues(&spec, ues, &mut rng).unwrap();
        let mut angles: Vec<f64> = pos.iter().map(|p| p.angle_rad.to_degrees()).collect();
        angles.sort_by(f64::total_cmp);
        for w in angles.windows(2) {
            prop_assert!(w[1] - w[0] >= spec.min_sep_deg - 1e-9);
        }
        for p in &pos {
            prop_assert!(p.angle_rad.to_degrees().abs() <= spec.sector_deg / 2.0 + 1e-9);
            prop_assert!(p.distance_m >= spec.range_m[0] && p.distance_m <= spec.range_m[1]);
        }
    }

    #[test]
    fn channel_text_round_trip(seed in any::<u64>(), (u, b) in dims()) {
        let recs = vec![
            ChannelRecord { kind: "rayleigh".into(), seed, channel: gen_rayleigh(b, u, seed) },
            ChannelRecord { kind: "rayleigh".into(), seed: seed ^ 1, channel: gen_rayleigh(b, u, seed ^ 1) },
        ];
        prop_assert_eq!(parse_channels(&format_channels(&recs)).unwrap(), recs);
    }
}

fn mean_correlation(kind: ChannelKind) -> f64 {
    (0..40)
        .map(|s| mean_row_correlation(&ChannelSpec::new(kind, s).generate(256, 16).unwrap()))
        .sum::<f64>()
        / 40.0
}

/// The expectation that line-of-sight rows are more correlated than
/// non-LoS ones does not hold for a half-wavelength array with 4° user
/// separation: beams are ~0.45° wide, so LoS rows are nearly orthogonal,
/// while scattering clusters overlap between users. See the decisions log.
#[test]
#[ignore = "does not hold for the configured array/separation; kept to document the gap"]
fn los_rows_more_correlated_than_nlos() {
    assert!(mean_correlation(ChannelKind::GeomLos) > mean_correlation(ChannelKind::GeomNlos));
}

#[test]
fn measured_row_correlation_ordering() {
    let los = mean_correlation(ChannelKind::GeomLos);
    let nlos = mean_correlation(ChannelKind::GeomNlos);
    let rayleigh = (0..40)
        .map(|s| mean_row_correlation(&gen_rayleigh(256, 16, s)))
        .sum::<f64>()
        / 40.0;
    assert!(los < nlos && nlos < rayleigh, "los {los}, nlos {nlos}, rayleigh {rayleigh}");
}
