use std::path::{Path, PathBuf};

use num_complex::Complex64;
use proptest::prelude::*;

use rfaug::augment::{select_transform, AugmentationPolicy, Transform};
use rfaug::channel::{rms_delay_spread, ChannelModel, ProfileId, TapProfile};
use rfaug::classifier::{balanced_epoch, probe_batch, Architecture, Network};
use rfaug::iq::{self, decode_iq, encode_iq, window_count};
use rfaug::manifest::ManifestRecord;
use rfaug::{DatasetManifest, Day, IqBuffer, Provenance, RecordingMeta, WaveformKind};

fn sample() -> impl Strategy<Value = Complex64> {
    (-1e6f32..1e6f32, -1e6f32..1e6f32).prop_map(|(re, im)| Complex64::new(re as f64, im as f64))
}

fn kind() -> impl Strategy<Value = WaveformKind> {
    prop::sample::select(WaveformKind::ALL.to_vec())
}

fn policy() -> impl Strategy<Value = AugmentationPolicy> {
    prop::sample::select(AugmentationPolicy::ALL.to_vec())
}

fn model() -> impl Strategy<Value = ChannelModel> {
    (prop::bool::ANY, prop::sample::select(ProfileId::ALL.to_vec()))
        .prop_map(|(cdl, id)| if cdl { ChannelModel::cdl(id) } else { ChannelModel::tdl(id) })
}

fn provenance() -> impl Strategy<Value = Provenance> {
    prop_oneof![
        Just(Provenance::Original),
        ("[a-z0-9+-]{1,12}", any::<u64>()).prop_map(|(policy, seed)| Provenance::Augmented { policy, seed }),
    ]
}

fn manifest() -> impl Strategy<Value = DatasetManifest> {
    (1usize..8, 1e3f64..1e9, 16usize..4096).prop_flat_map(|(num_tx, fs, w)| {
        let record = (
            "[a-z][a-z0-9_]{0,10}(/[a-z0-9_]{1,8}){0,2}\\.bin",
            kind(),
            0..num_tx,
            prop::bool::ANY,
            provenance(),
        )
            .prop_map(|(path, waveform, tx, d2, provenance)| ManifestRecord {
                path: PathBuf::from(path),
                meta: RecordingMeta {
                    waveform,
                    transmitter_id: tx,
                    day: if d2 { Day::Day2 } else { Day::Day1 },
                    provenance,
                },
            });
        prop::collection::vec(record, 0..40).prop_map(move |records| {
            let mut m = DatasetManifest::new(num_tx, fs, w);
            m.records = records;
            m
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn iq_bytes_round_trip(samples in prop::collection::vec(sample(), 0..2000)) {
        let bytes = encode_iq(&samples);
        prop_assert_eq!(bytes.len(), 8 * samples.len());
        let back = decode_iq(&bytes, Path::new("mem")).unwrap();
        prop_assert_eq!(back, samples);
    }

    #[test]
    fn truncated_bytes_rejected(samples in prop::collection::vec(sample(), 1..64), cut in 1usize..8) {
        let bytes = encode_iq(&samples);
        prop_assert!(decode_iq(&bytes[..bytes.len() - cut], Path::new("mem")).is_err());
    }

    #[test]
    fn manifest_csv_round_trip(m in manifest()) {
        let text = m.to_csv_string().unwrap();
        let back = DatasetManifest::parse(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.to_csv_string().unwrap(), text);
    }

    #[test]
    fn window_count_matches_slicing(len in 0usize..3000, w in 16usize..600, stride in 1usize..700) {
        let x = IqBuffer::new(vec![Complex64::new(1.0, 0.0); len], 1e6).unwrap();
        let meta = RecordingMeta {
            waveform: WaveformKind::Lte,
            transmitter_id: 0,
            day: Day::Day1,
            provenance: Provenance::Original,
        };
        let ex = iq::slice_examples(&x, &meta, w, stride).unwrap();
        prop_assert_eq!(ex.len(), window_count(len, w, stride));
        prop_assert!(ex.iter().all(|e| e.window.len() == w));
    }

    #[test]
    fn routing_invariants(p in policy(), k in kind()) {
        let t = select_transform(p, k);
        if p == AugmentationPolicy::NoAug {
            prop_assert_eq!(t, Transform::Passthrough);
        }
        if let Some(f) = t.family() {
            prop_assert!(p.uses(f));
        }
        if k == WaveformKind::Lte && p != AugmentationPolicy::UniformTdl && p != AugmentationPolicy::UniformCdl {
            prop_assert_eq!(t, Transform::Passthrough);
        }
    }

    #[test]
    fn scaled_profiles_hit_target(m in model(), target in 0.0f64..2e-6) {
        let p = m.scaled(target).unwrap();
        let lin: f64 = p.powers_db.iter().map(|d| 10f64.powf(d / 10.0)).sum();
        prop_assert!((lin - 1.0).abs() < 1e-12);
        prop_assert_eq!(p.delays_s[0], 0.0);
        prop_assert!(p.delays_s.windows(2).all(|d| d[0] <= d[1]));
        let ds = rms_delay_spread(&p.delays_s, &p.powers_db);
        if target == 0.0 {
            prop_assert!(p.delays_s.iter().all(|&d| d == 0.0));
        } else {
            prop_assert!(((ds - target) / target).abs() < 1e-9);
        }
    }

    #[test]
    fn random_tap_profiles_scale(
        taps in prop::collection::vec((0.0f64..10.0, -30.0f64..0.0), 2..12),
        target in 1e-9f64..1e-6,
    ) {
        let mut delays: Vec<f64> = taps.iter().map(|t| t.0).collect();
        delays[0] = 0.0;
        delays.sort_by(f64::total_cmp);
        prop_assume!(delays.last().unwrap() - delays[0] > 1e-3);
        let powers: Vec<f64> = taps.iter().map(|t| t.1).collect();
        let p = TapProfile::new(delays, powers, None).unwrap().scale_delays(target).unwrap();
        let ds = rms_delay_spread(&p.delays_s, &p.powers_db);
        prop_assert!(((ds - target) / target).abs() < 1e-9);
    }

    #[test]
    fn probabilities_sum_to_one(seed in any::<u64>(), classes in 2usize..6) {
        let arch = Architecture {
            window_len: 32,
            conv_stages: 1,
            filters: 3,
            kernel: 3,
            hidden: 5,
            num_classes: classes,
        };
        let net = Network::init(arch, seed).unwrap();
        for (x, _) in probe_batch(&arch, 4, seed ^ 1) {
            let p = net.probabilities(&x);
            prop_assert_eq!(p.len(), classes);
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_is_balanced(
        counts in prop::collection::vec(1usize..40, 2..6),
        draws in 1usize..300,
        seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat(c).take(n)).collect();
        let idx = balanced_epoch(&labels, counts.len(), draws, seed);
        prop_assert_eq!(idx.len(), draws);
        let mut per = vec![0usize; counts.len()];
        for &i in &idx {
            per[labels[i]] += 1;
        }
        let (lo, hi) = (per.iter().min().unwrap(), per.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "{:?}", per);
    }
}
