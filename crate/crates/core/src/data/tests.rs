use proptest::prelude::{any, prop_assert, proptest};

use super::*;
use crate::metrics::{cc, psd, rrmse_spectral, rrmse_temporal};

fn noise(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    (0..n).map(|_| rng.normal()).collect()
}

fn synth(count: usize, kind: EpochKind, seed: u64) -> (EpochSet, EpochSet) {
    synth_generate(count, kind, &mut Rng::new(seed)).unwrap()
}

#[test]
fn lambda_closed_forms() {
    let x = noise(1, 512);
    let n: Vec<f64> = x.iter().rev().copied().collect();
    assert!((compute_lambda(&x, &n, 0.0).unwrap() - 1.0).abs() < 1e-12);
    assert!((compute_lambda(&x, &n, -7.0).unwrap() - 10f64.powf(0.7)).abs() < 1e-12);
    assert!((compute_lambda(&x, &n, 2.0).unwrap() - 10f64.powf(-0.2)).abs() < 1e-12);
    assert!((10f64.powf(0.7) - 5.01187).abs() < 1e-5);
    assert!((10f64.powf(-0.2) - 0.63096).abs() < 1e-5);
}

#[test]
fn silent_artifact_is_degenerate() {
    let x = noise(1, 8);
    assert!(matches!(compute_lambda(&x, &[0.0; 8], 0.0), Err(Error::Degenerate(_))));
    assert!(matches!(compute_lambda(&x, &[1.0; 7], 0.0), Err(Error::Dimension(_))));
}

#[test]
fn mix_edge_cases() {
    let x = noise(2, 16);
    let n = noise(3, 16);
    assert_eq!(mix(&x, &n, 0.0).unwrap(), x);
    let zero = vec![0.0; 16];
    let y = mix(&zero, &n, 1.5).unwrap();
    assert!(y.iter().zip(&n).all(|(y, n)| *y == 1.5 * n));
    assert!(mix(&x, &n[..15], 1.0).is_err());
}

proptest! {
    #[test]
    fn mixed_pair_hits_target_snr(seed in any::<u64>(), snr in -7.0f64..=2.0, amp in 0.01f64..100.0) {
        let x: Vec<f64> = noise(seed, 512).into_iter().map(|v| v * amp).collect();
        let n = noise(seed ^ 0x5eed, 512);
        let lambda = compute_lambda(&x, &n, snr).unwrap();
        prop_assert!(lambda > 0.0);
        let y = mix(&x, &n, lambda).unwrap();
        let art: Vec<f64> = y.iter().zip(&x).map(|(y, x)| y - x).collect();
        let measured = 10.0 * (rms(&x) / rms(&art)).log10();
        prop_assert!((measured - snr).abs() < 1e-9, "{measured} vs {snr}");
        prop_assert!((measured_snr(&x, &n, lambda) - snr).abs() < 1e-9);
    }

    #[test]
    fn mix_is_linear_in_artifact(seed in any::<u64>(), lambda in 0.0f64..10.0) {
        let x = noise(seed, 64);
        let n = noise(seed.wrapping_add(1), 64);
        let y = mix(&x, &n, lambda).unwrap();
        for i in 0..64 {
            prop_assert!(((y[i] - x[i]) - lambda * n[i]).abs() <= 1e-12 * (1.0 + x[i].abs()));
        }
    }
}

#[test]
fn normalization_gives_unit_std() {
    let y: Vec<f64> = [1.0, -1.0, 3.0, -3.0].to_vec();
    let (yn, xn, s) = normalize_pair(&y, &y).unwrap();
    assert_eq!(s, 5f64.sqrt());
    assert!((std_dev(&yn) - 1.0).abs() < 1e-15);
    assert_eq!(yn, xn);
    assert!(matches!(normalize_pair(&[2.0; 4], &[1.0; 4]), Err(Error::Degenerate(_))));
}

#[test]
fn denormalization_round_trip() {
    // a power-of-two scale makes x'·scale exact
    let y = [2.0, -2.0, 2.0, -2.0];
    let x = noise(5, 4);
    let (_, xn, s) = normalize_pair(&y, &x).unwrap();
    assert_eq!(s, 2.0);
    for (a, b) in xn.iter().zip(&x) {
        assert_eq!((a * s).to_bits(), b.to_bits());
    }
    // any other scale is exact to within one rounding of each operation
    let y = noise(6, 512);
    let (_, xn, s) = normalize_pair(&y, &x.repeat(128)).unwrap();
    for (a, b) in xn.iter().zip(x.repeat(128)) {
        assert!((a * s - b).abs() <= 2.0 * f64::EPSILON * b.abs());
    }
}

#[test]
fn metrics_are_scale_invariant() {
    let x = noise(7, 512);
    let xhat: Vec<f64> = x.iter().zip(noise(8, 512)).map(|(a, b)| a + 0.3 * b).collect();
    let y = noise(9, 512);
    let (_, xn, s) = normalize_pair(&y, &x).unwrap();
    let xhn: Vec<f64> = xhat.iter().map(|v| v / s).collect();
    let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    close(rrmse_temporal(&xhn, &xn).unwrap(), rrmse_temporal(&xhat, &x).unwrap());
    close(rrmse_spectral(&xhn, &xn).unwrap(), rrmse_spectral(&xhat, &x).unwrap());
    close(cc(&xhn, &xn).unwrap(), cc(&xhat, &x).unwrap());
}

#[test]
fn augmentation_multiplicity_and_ranges() {
    let (c, a) = synth(20, EpochKind::Muscle, 1);
    let pairs = augment(&c, &a, 10, SNR_RANGE, &mut Rng::new(2)).unwrap();
    assert_eq!(pairs.len(), 200);
    for (i, p) in pairs.pairs().iter().enumerate() {
        assert_eq!(p.clean, i / 10);
        assert!((-7.0..=2.0).contains(&p.mix.snr_db));
        assert!(p.mix.lambda > 0.0 && p.scale > 0.0);
        let y = pairs.noisy(i);
        let expect = mix(&pairs.clean(i), &pairs.artifact(i), p.mix.lambda).unwrap();
        assert_eq!(y, expect);
        assert!((measured_snr(&pairs.clean(i), &pairs.artifact(i), p.mix.lambda) - p.mix.snr_db).abs() < 1e-9);
        assert_eq!(p.scale, std_dev(&y));
    }
}

#[test]
fn single_epoch_sets_give_one_forced_pair() {
    let (c, a) = synth(1, EpochKind::Ocular, 3);
    let pairs = augment(&c, &a, 1, SNR_RANGE, &mut Rng::new(0)).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!((pairs.pairs()[0].clean, pairs.pairs()[0].artifact), (0, 0));
}

#[test]
fn augmentation_is_seeded() {
    let (c, a) = synth(5, EpochKind::Muscle, 4);
    let p1 = augment(&c, &a, 3, SNR_RANGE, &mut Rng::new(9)).unwrap();
    let p2 = augment(&c, &a, 3, SNR_RANGE, &mut Rng::new(9)).unwrap();
    assert_eq!(p1.pairs(), p2.pairs());
    let p3 = augment(&c, &a, 3, SNR_RANGE, &mut Rng::new(10)).unwrap();
    assert_ne!(p1.pairs(), p3.pairs());
}

#[test]
fn augmentation_rejects_bad_input() {
    let (c, a) = synth(2, EpochKind::Muscle, 4);
    let empty = EpochSet::new(EpochKind::Muscle, vec![]).unwrap();
    assert!(augment(&c, &a, 0, SNR_RANGE, &mut Rng::new(0)).is_err());
    assert!(augment(&c, &empty, 1, SNR_RANGE, &mut Rng::new(0)).is_err());
    assert!(augment(&c, &a, 1, (2.0, -7.0), &mut Rng::new(0)).is_err());
}

#[test]
fn full_corpus_split_counts() {
    let clean = EpochSet::new(EpochKind::Clean, (0..4514).map(|i| vec![i as f32 + 1.0; 512]).collect()).unwrap();
    let art = EpochSet::new(EpochKind::Ocular, vec![(0..512).map(|i| (i % 7) as f32).collect()]).unwrap();
    let pairs = augment(&clean, &art, AUGMENT_TIMES, SNR_RANGE, &mut Rng::new(0)).unwrap();
    assert_eq!(pairs.len(), 45140);
    let s = split(&pairs, SPLIT_RATIOS, &mut Rng::new(1)).unwrap();
    assert_eq!(
        (s.count(Split::Train), s.count(Split::Val), s.count(Split::Test)),
        (36110, 4510, 4520)
    );
}

#[test]
fn split_has_no_leakage() {
    let (c, a) = synth(37, EpochKind::Muscle, 5);
    let pairs = augment(&c, &a, 4, SNR_RANGE, &mut Rng::new(6)).unwrap();
    let s = split(&pairs, SPLIT_RATIOS, &mut Rng::new(7)).unwrap();
    assert_eq!(s.len(), pairs.len());
    let mut owner = std::collections::HashMap::new();
    for p in s.pairs() {
        assert_eq!(*owner.entry(p.clean).or_insert(p.split), p.split);
    }
    let mut a: Vec<_> = s.pairs().iter().map(|p| (p.clean, p.mix.snr_db.to_bits())).collect();
    let mut b: Vec<_> = pairs.pairs().iter().map(|p| (p.clean, p.mix.snr_db.to_bits())).collect();
    a.sort_unstable();
    b.sort_unstable();
    assert_eq!(a, b);
    let all = split(&pairs, [1.0, 0.0, 0.0], &mut Rng::new(0)).unwrap();
    assert_eq!(all.count(Split::Train), pairs.len());
    assert!(split(&pairs, [0.5, 0.2, 0.2], &mut Rng::new(0)).is_err());
    assert!(split(&pairs, [1.2, -0.1, -0.1], &mut Rng::new(0)).is_err());
}

#[test]
fn synthetic_epochs_are_valid_and_seeded() {
    for kind in [EpochKind::Ocular, EpochKind::Muscle] {
        let (c, a) = synth(8, kind, 11);
        assert_eq!((c.len(), a.len()), (8, 8));
        assert_eq!(a.kind(), kind);
        assert!(c.epochs().iter().chain(a.epochs()).all(|e| e.len() == 512 && e.iter().all(|v| v.is_finite())));
        assert_eq!(synth(8, kind, 11), (c, a));
    }
    assert!(synth_generate(0, EpochKind::Muscle, &mut Rng::new(0)).is_err());
    assert!(synth_generate(1, EpochKind::Clean, &mut Rng::new(0)).is_err());
}

#[test]
fn synthetic_spectra_sit_in_their_bands() {
    let (c, o) = synth(20, EpochKind::Ocular, 12);
    let (_, m) = synth(20, EpochKind::Muscle, 13);
    for i in 0..20 {
        let s = psd(&c.epoch_f64(i)).unwrap();
        assert!(s.band_power(40.0, 129.0) < 0.01 * s.total_power());
        let s = psd(&o.epoch_f64(i)).unwrap();
        assert!(s.band_power(0.0, 5.0) > 0.95 * s.total_power());
        let s = psd(&m.epoch_f64(i)).unwrap();
        assert!(s.band_power(40.0, 129.0) > 0.99 * s.total_power());
    }
}

#[test]
fn epk_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let (c, m) = synth(3, EpochKind::Muscle, 14);
    for set in [&c, &m] {
        for name in ["a.epk", "a.csv"] {
            let path = dir.path().join(name);
            save_epochs(&path, set).unwrap();
            let back = load_epochs(&path, Some(set.kind())).unwrap();
            for (e, f) in back.epochs().iter().zip(set.epochs()) {
                assert!(e.iter().zip(f).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
            assert_eq!(back.kind(), set.kind());
        }
    }
}

#[test]
fn epk_errors_carry_record_index() {
    let (c, _) = synth(3, EpochKind::Muscle, 15);
    let bytes = encode_epk(&c);
    let mut bad = bytes.clone();
    bad[0] = b'Q';
    assert!(matches!(decode_epk(&bad, None), Err(Error::Format { index: 0, .. })));
    assert!(matches!(
        decode_epk(&bytes[..bytes.len() - 10], None),
        Err(Error::Format { index: 2, .. })
    ));
    let mut nan = bytes.clone();
    let at = 13 + 4 * (512 + 7);
    nan[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(decode_epk(&nan, None), Err(Error::Format { index: 1, .. })));
    let mut short = bytes.clone();
    short[9..13].copy_from_slice(&511u32.to_le_bytes());
    assert!(matches!(decode_epk(&short, None), Err(Error::Format { index: 0, .. })));
    assert!(decode_epk(&bytes, Some(EpochKind::Ocular)).is_err());
    for cut in 0..13 {
        assert!(decode_epk(&bytes[..cut], None).is_err());
    }
}

#[test]
fn csv_rejects_short_row_with_its_index() {
    let row = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>().join(",");
    let text = format!("{}\n{}\n{}\n", row(512), row(512), row(511));
    match read_csv(text.as_bytes(), EpochKind::Clean) {
        Err(Error::Format { index, message }) => {
            assert_eq!(index, 2);
            assert!(message.contains("row 3"), "{message}");
        }
        other => panic!("expected format error, got {other:?}"),
    }
    let text = format!("{}\n", row(512).replace("5,", "x,"));
    assert!(matches!(read_csv(text.as_bytes(), EpochKind::Clean), Err(Error::Format { index: 0, .. })));
}

#[test]
fn missing_file_is_named() {
    let err = load_epochs(std::path::Path::new("/no/such/file.epk"), None).unwrap_err();
    assert!(err.to_string().contains("/no/such/file.epk"));
}
