use hfl_sim::channel::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn st(power: f64, beta: f64, h_mag2: f64) -> ChannelState {
    ChannelState { beta, h_mag2, power }
}

fn params(sigma_w2: f64) -> ChannelParams {
    ChannelParams {
        sigma_w2,
        ..ChannelParams::default()
    }
}

#[test]
fn capacity_anchors() {
    assert_eq!(capacity_from_snr(0.0).unwrap(), 0.0);
    assert_eq!(capacity_from_snr(1.0).unwrap(), 1.0);
    assert_eq!(capacity_from_snr(3.0).unwrap(), 2.0);
    assert_eq!(capacity(&st(0.0, 1.0, 1.0), &params(1.0)).unwrap(), 0.0);
    // log2(5) to 30 digits: 2.32192809488736234787031942948...
    let q = capacity(&st(0.5, 2.0, 1.0), &params(0.25)).unwrap();
    assert!((q - 2.321_928_094_887_362_3).abs() < 1e-15);
}

#[test]
fn capacity_rejects_bad_inputs() {
    assert!(capacity(&st(f64::NAN, 1.0, 1.0), &params(1.0)).is_err());
    assert!(capacity(&st(1.0, f64::INFINITY, 1.0), &params(1.0)).is_err());
    assert!(capacity(&st(1.0, 1.0, 1.0), &params(0.0)).is_err());
    assert!(capacity_from_snr(-1.0).is_err());
}

#[test]
fn block_fading_holds_within_a_block() {
    let p = ChannelParams {
        block_length: 2,
        ..ChannelParams::default()
    };
    assert_eq!(sample_channel(&p, 4, 9), sample_channel(&p, 5, 9));
    assert_ne!(sample_channel(&p, 5, 9), sample_channel(&p, 6, 9));
    assert_ne!(sample_channel(&p, 4, 9), sample_channel(&p, 4, 10));
    assert_eq!(sample_channel(&p, 7, 3).power, p.p_max);
}

#[test]
fn fading_power_has_unit_mean() {
    let p = ChannelParams::default();
    let n = 100_000;
    let mean = (0..n).map(|r| sample_channel(&p, r, 123).h_mag2).sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.02, "sample mean {mean}");
}

#[test]
fn privacy_noise_variance() {
    let spec = PrivacySpec { sigma_p2: 4.0, enabled: true };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000;
    let draws: Vec<Vec<f64>> = (0..n).map(|_| perturb_gradient(&[0.0, 0.0], &spec, &mut rng)).collect();
    for c in 0..2 {
        let mean = draws.iter().map(|d| d[c]).sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d[c] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / 4.0 - 1.0).abs() < 0.03, "coordinate {c}: variance {var}");
    }
    let off = PrivacySpec { sigma_p2: 4.0, enabled: false };
    let g = [1.0, -0.0, f64::MIN_POSITIVE];
    let out = perturb_gradient(&g, &off, &mut rng);
    assert!(g.iter().zip(&out).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn compression_examples() {
    let none = CompressionSpec::default();
    assert_eq!(compress(&[3.0, -1.0, 2.0], &none).unwrap().to_dense(), vec![3.0, -1.0, 2.0]);
    let half = CompressionSpec { mode: CompressionMode::TopFraction, keep_fraction: 0.5 };
    assert_eq!(compress(&[3.0, -1.0, 2.0, 0.5], &half).unwrap().to_dense(), vec![3.0, 0.0, 2.0, 0.0]);
    let all = CompressionSpec { mode: CompressionMode::TopFraction, keep_fraction: 1.0 };
    assert_eq!(compress(&[3.0, -1.0, 2.0, 0.5], &all).unwrap().to_dense(), vec![3.0, -1.0, 2.0, 0.5]);
    assert_eq!(compress(&[], &half), Err(ChannelError::EmptyVector));
}

/// Keeps index `i` iff fewer than `k` coordinates beat it (larger magnitude,
/// or equal magnitude at a lower index).
fn rank_oracle(g: &[f64], k: usize) -> Vec<f64> {
    (0..g.len())
        .map(|i| {
            let beaten_by = (0..g.len())
                .filter(|&j| g[j].abs() > g[i].abs() || (g[j].abs() == g[i].abs() && j < i))
                .count();
            if beaten_by < k {
                g[i]
            } else {
                0.0
            }
        })
        .collect()
}

#[test]
fn top_fraction_matches_rank_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..2000 {
        let d = rng.gen_range(1..40);
        // small integer grid so magnitude ties are common
        let g: Vec<f64> = (0..d).map(|_| f64::from(rng.gen_range(-4i32..=4))).collect();
        let keep: f64 = rng.gen_range(0.01..=1.0);
        let spec = CompressionSpec { mode: CompressionMode::TopFraction, keep_fraction: keep };
        let k = ((keep * d as f64) - 1e-9).ceil().max(1.0) as usize;
        let out = compress(&g, &spec).unwrap();
        assert_eq!(out.nnz(), k.min(d));
        assert_eq!(out.to_dense(), rank_oracle(&g, k));
    }
}

#[test]
fn pipeline_orders_agree_without_noise() {
    let g = [0.3, -2.0, 1.0, 0.1, -0.7];
    let privacy = PrivacySpec::default();
    let comp = CompressionSpec { mode: CompressionMode::TopFraction, keep_fraction: 0.4 };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = prepare_upload(&g, &privacy, &comp, PipelineOrder::PerturbThenCompress, &mut rng).unwrap();
    let b = prepare_upload(&g, &privacy, &comp, PipelineOrder::CompressThenPerturb, &mut rng).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.entries, vec![(1, -2.0), (2, 1.0)]);
}

#[test]
fn compress_then_perturb_keeps_the_support() {
    let g: Vec<f64> = (0..20).map(|i| f64::from(i) - 9.5).collect();
    let privacy = PrivacySpec { sigma_p2: 1.0, enabled: true };
    let comp = CompressionSpec { mode: CompressionMode::TopFraction, keep_fraction: 0.25 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let out = prepare_upload(&g, &privacy, &comp, PipelineOrder::CompressThenPerturb, &mut rng).unwrap();
    let idx: Vec<usize> = out.entries.iter().map(|e| e.0).collect();
    // ceil(0.25 * 20) = 5; |g_2| = |g_17| and the lower index wins
    assert_eq!(idx, vec![0, 1, 2, 18, 19]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn capacity_is_monotone(p in 0.0..10.0f64, b in 0.0..10.0f64, h in 0.0..10.0f64, bump in 0.0..5.0f64, which in 0usize..3) {
        let base = capacity(&st(p, b, h), &params(1.0)).unwrap();
        let mut v = [p, b, h];
        v[which] += bump;
        let up = capacity(&st(v[0], v[1], v[2]), &params(1.0)).unwrap();
        prop_assert!(up >= base);
        if bump > 1e-3 && [p, b, h].iter().enumerate().all(|(i, x)| i == which || *x > 1e-3) {
            prop_assert!(up > base);
        }
    }

    #[test]
    fn compression_never_grows_the_norm(g in prop::collection::vec(-1e3..1e3f64, 1..64), keep in 0.001..=1.0f64) {
        let spec = CompressionSpec { mode: CompressionMode::TopFraction, keep_fraction: keep };
        let out = compress(&g, &spec).unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(out.norm2() <= norm);
        prop_assert_eq!(out.nnz(), spec.support_size(g.len()));
    }

    #[test]
    fn sampling_is_deterministic(round in 0u64..1000, seed in any::<u64>(), len in 1u64..8) {
        let p = ChannelParams { block_length: len, ..ChannelParams::default() };
        prop_assert_eq!(sample_channel(&p, round, seed), sample_channel(&p, round, seed));
        let first = round - round % len;
        prop_assert_eq!(sample_channel(&p, round, seed), sample_channel(&p, first, seed));
    }
}
