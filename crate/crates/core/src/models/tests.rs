use proptest::prelude::*;

use super::*;
use crate::encoding::{build_vocabulary, EncodedWord};
use crate::rng::SplitMix64;
use crate::training::{gradient_check, GradCheckScope};

fn letters(v: usize) -> Vocabulary {
    Vocabulary::from_chars((0..v as u8).map(|i| (b'a' + i) as char)).unwrap()
}

fn random_word(rng: &mut SplitMix64, vocab: &Vocabulary, len: usize) -> String {
    (0..len).map(|_| vocab.chars()[rng.below_usize(vocab.size())]).collect()
}

fn small(kind: ModelKind, seed: u64) -> GenderModel<f64> {
    GenderModel::new(kind, letters(10), ModelDims { max_len: 10, d_emb: 8, hidden: 8 }, seed)
}

#[test]
fn lstm_step_zero_parameters() {
    let cell = LstmCell::<f64>::zeros(60, 64);
    let s = cell.step(&[0.3; 60], &[0.0; 64], &[0.0; 64]);
    for k in 0..64 {
        assert_eq!((s.i[k], s.f[k], s.o[k]), (0.5, 0.5, 0.5));
        assert_eq!((s.c[k], s.h[k]), (0.0, 0.0));
    }
    let s = cell.step(&[0.3; 60], &[0.0; 64], &[2.0; 64]);
    for k in 0..64 {
        assert!((s.c[k] - 1.0).abs() < 1e-12);
        assert!((s.h[k] - 0.5 * 1f64.tanh()).abs() < 1e-12);
        assert!((s.h[k] - 0.380797).abs() < 1e-6);
    }
}

#[test]
fn lstm_saturated_gates_carry_the_cell() {
    let mut cell = LstmCell::<f64>::zeros(8, 8);
    cell.forget.b.value = Tensor2::filled(1, 8, 50.0);
    cell.input.b.value = Tensor2::filled(1, 8, -50.0);
    let c_prev: Vec<f64> = (0..8).map(|k| k as f64 * 0.37 - 1.2).collect();
    let s = cell.step(&[0.5; 8], &[0.1; 8], &c_prev);
    for k in 0..8 {
        assert!((s.c[k] - c_prev[k]).abs() < 1e-15, "{} vs {}", s.c[k], c_prev[k]);
    }
}

#[test]
fn gru_step_closed_forms() {
    let cell = GruCell::<f64>::zeros(60, 64);
    let s = cell.step(&[0.7; 60], &[1.0; 64]);
    for k in 0..64 {
        assert_eq!(s.z[k], 0.5);
        assert_eq!(s.n[k], 0.0);
        assert!((s.h[k] - 0.5).abs() < 1e-12);
    }
    let s = cell.step(&[0.7; 60], &[0.0; 64]);
    assert!(s.h.iter().all(|&h| h == 0.0));

    let mut cell = GruCell::<f64>::zeros(8, 8);
    cell.update.b.value = Tensor2::filled(1, 8, -50.0);
    let h_prev: Vec<f64> = (0..8).map(|k| 0.9 - k as f64 * 0.2).collect();
    let s = cell.step(&[0.4; 8], &h_prev);
    for k in 0..8 {
        assert!((s.h[k] - h_prev[k]).abs() < 1e-15);
    }
}

#[test]
fn embedding_lookup() {
    let vocab = letters(1);
    let dims = ModelDims { max_len: 2, d_emb: 3, hidden: 4 };
    let m = GenderModel::<f64>::new(ModelKind::Dense, vocab, dims, 1);
    let Network::Dense(net) = m.network() else { unreachable!() };
    let table = &net.embedding.table.value;
    let out = net.embedding.forward(&EncodedWord::from_indices(vec![1, 0]).unwrap()).unwrap();
    assert_eq!(&out[..3], table.row(1));
    assert_eq!(&out[3..], table.row(0));
    let out = net.embedding.forward(&EncodedWord::from_indices(vec![0, 0]).unwrap()).unwrap();
    assert_eq!(&out[..3], table.row(0));
    assert_eq!(&out[3..], table.row(0));
    assert!(matches!(
        net.embedding.forward(&EncodedWord::from_indices(vec![7, 0]).unwrap()),
        Err(Error::IndexOutOfRange { index: 7, .. })
    ));
}

#[test]
fn zero_models_predict_one_half() {
    for kind in ModelKind::ALL {
        let m = GenderModel::<f64>::zeroed(kind, letters(5), ModelDims { max_len: 6, d_emb: 4, hidden: 5 });
        for w in ["a", "abcde", "eeeeee"] {
            assert_eq!(m.predict(w).unwrap(), 0.5, "{kind}");
        }
    }
}

#[test]
fn saturated_output_bias() {
    let mut m = GenderModel::<f64>::zeroed(ModelKind::Dense, letters(3), ModelDims { max_len: 4, d_emb: 2, hidden: 3 });
    let Network::Dense(net) = m.network_mut() else { unreachable!() };
    net.output_bias.value.set(0, 0, 1000.0);
    let p = m.predict("abc").unwrap();
    assert!(p > 1.0 - 1e-12 && p <= 1.0);
}

#[test]
fn reference_parameter_counts() {
    let vocab = Vocabulary::from_chars(crate::dataset::SWEDISH_ALPHABET).unwrap();
    assert_eq!(vocab.size(), 29);
    let count = |kind| GenderModel::<f64>::new(kind, vocab.clone(), ModelDims::reference(kind, 19), 0).count_parameters();
    assert_eq!(count(ModelKind::Dense), 148_037);
    assert_eq!(count(ModelKind::Lstm), 35_077);
    assert_eq!(count(ModelKind::Gru), 27_077);

    let lstm = GenderModel::<f64>::new(ModelKind::Lstm, vocab.clone(), ModelDims::reference(ModelKind::Lstm, 19), 0);
    let sizes: Vec<usize> = lstm.params().iter().map(|p| p.len()).collect();
    assert_eq!(sizes[0], 1860);
    assert_eq!(sizes[1..13].iter().sum::<usize>(), 32_000);
    assert_eq!(sizes[13] + sizes[14], 1217);
    let gru = GenderModel::<f64>::new(ModelKind::Gru, vocab, ModelDims::reference(ModelKind::Gru, 19), 0);
    let sizes: Vec<usize> = gru.params().iter().map(|p| p.len()).collect();
    assert_eq!(sizes[1..10].iter().sum::<usize>(), 24_000);
}

#[test]
fn gate_triple_counts() {
    let m = small(ModelKind::Lstm, 0);
    let Network::Recurrent(RecurrentNet { cell: Cell::Lstm(_), .. }) = m.network() else { panic!() };
    assert_eq!(m.params().len(), 1 + 4 * 3 + 2);
    let m = small(ModelKind::Gru, 0);
    assert_eq!(m.params().len(), 1 + 3 * 3 + 2);
    assert_eq!(m.param_names().len(), m.params().len());
}

#[test]
fn lstm_forget_bias_starts_at_one() {
    let m = small(ModelKind::Lstm, 3);
    let Network::Recurrent(RecurrentNet { cell: Cell::Lstm(c), .. }) = m.network() else { panic!() };
    assert!(c.forget.b.value.as_slice().iter().all(|&b| b == 1.0));
    assert!(c.input.b.value.as_slice().iter().all(|&b| b == 0.0));
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = SplitMix64::new(77);
    for kind in ModelKind::ALL {
        let m = small(kind, 5);
        for _ in 0..3 {
            let len = 1 + rng.below_usize(10);
            let w = m.encode(&random_word(&mut rng, m.vocab(), len)).unwrap();
            let label = rng.below(2) as f64;
            let r = gradient_check(&m, &w, label, 1e-5, GradCheckScope::All).unwrap();
            assert!(r.max_relative_error < 1e-6, "{kind}: {r:?}");
            assert_eq!(r.checked, m.count_parameters());
        }
    }
}

#[test]
fn reference_dims_gradients_on_six_letter_words() {
    let vocab = Vocabulary::from_chars(crate::dataset::SWEDISH_ALPHABET).unwrap();
    let mut rng = SplitMix64::new(6);
    for kind in ModelKind::ALL {
        let m = GenderModel::<f64>::new(kind, vocab.clone(), ModelDims::reference(kind, 19), 2);
        let w = m.encode(&random_word(&mut rng, &vocab, 6)).unwrap();
        let scope = GradCheckScope::Sample { count: 600, seed: 3 };
        let r = gradient_check(&m, &w, 1.0, 1e-5, scope).unwrap();
        assert!(r.max_relative_error < 1e-6, "{kind}: {r:?}");
    }
}

#[test]
fn faulty_backward_is_detected() {
    let m = small(ModelKind::Lstm, 9);
    let w = m.encode("abcdefg").unwrap();
    let r = crate::training::gradient_check_with(&m, &w, 1.0, 1e-5, GradCheckScope::All, |m, tr, g| {
        m.backward_into_faulty(tr, 1.0, g)
    })
    .unwrap();
    assert!(r.max_relative_error > 1e-2, "{r:?}");
    assert!(r.worst_tensor.starts_with("lstm.") || r.worst_tensor == "embedding", "{r:?}");
}

#[test]
fn unused_embedding_rows_get_no_gradient() {
    for kind in ModelKind::ALL {
        let mut m = small(kind, 1);
        let trace = m.forward(&m.encode("abc").unwrap()).unwrap();
        m.backward(&trace, 1.0).unwrap();
        let g = &m.params()[0].grad;
        // rows: 0 pad, 1..=3 used (a, b, c), 4..=10 unused, 11 unknown
        for row in 4..g.rows() {
            assert!(g.row(row).iter().all(|&v| v == 0.0), "{kind} row {row}");
        }
        assert!(g.row(1).iter().any(|&v| v != 0.0));
        assert!(g.row(0).iter().any(|&v| v != 0.0), "padding row is trained");
    }
}

#[test]
fn saturated_correct_prediction_has_zero_gradient() {
    let mut m = small(ModelKind::Gru, 4);
    let Network::Recurrent(net) = m.network_mut() else { unreachable!() };
    net.readout.bias.value.set(0, 0, 60.0);
    let trace = m.forward(&m.encode("abba").unwrap()).unwrap();
    m.backward(&trace, 1.0).unwrap();
    assert!(m.params().iter().all(|p| p.grad.as_slice().iter().all(|&g| g == 0.0)));
}

#[test]
fn recurrent_models_are_causal() {
    for kind in [ModelKind::Gru, ModelKind::Lstm] {
        let m = small(kind, 2);
        let ForwardTrace::Recurrent(a) = m.forward(&m.encode("abcdefgh").unwrap()).unwrap() else { panic!() };
        let ForwardTrace::Recurrent(b) = m.forward(&m.encode("abcdjfgh").unwrap()).unwrap() else { panic!() };
        let hs = 8;
        assert_eq!(a.hidden[..4 * hs], b.hidden[..4 * hs]);
        assert_ne!(a.hidden[4 * hs..5 * hs], b.hidden[4 * hs..5 * hs]);
    }
}

#[test]
fn forward_is_deterministic() {
    for kind in ModelKind::ALL {
        assert_eq!(small(kind, 8), small(kind, 8));
        let m = small(kind, 8);
        let w = m.encode("hejsan").unwrap_or_else(|_| m.encode("abc").unwrap());
        assert_eq!(m.forward(&w).unwrap().probability().to_bits(), m.forward(&w).unwrap().probability().to_bits());
    }
}

#[test]
fn stale_trace_is_rejected() {
    let lstm = small(ModelKind::Lstm, 1);
    let gru = small(ModelKind::Gru, 1);
    let trace = lstm.forward(&lstm.encode("abc").unwrap()).unwrap();
    let mut g = gru.zero_gradients();
    assert!(matches!(gru.backward_into(&trace, 1.0, &mut g), Err(Error::ShapeMismatch(_))));
    let other = GenderModel::<f64>::new(ModelKind::Lstm, letters(10), ModelDims { max_len: 10, d_emb: 8, hidden: 6 }, 1);
    let mut g = other.zero_gradients();
    assert!(other.backward_into(&trace, 1.0, &mut g).is_err());
    assert!(matches!(lstm.forward(&EncodedWord::from_indices(vec![1, 2]).unwrap()), Err(Error::ShapeMismatch(_))));
}

#[test]
fn single_precision_models_run() {
    let m = small(ModelKind::Lstm, 1).cast::<f32>();
    let p = m.predict("abcd").unwrap();
    assert!(p > 0.0 && p < 1.0);
    let back = m.cast::<f64>().cast::<f32>();
    assert_eq!(back, m);
}

mod files {
    use super::*;
    use crate::models::io::{from_bytes, load_model, load_model_of_kind, save_model, to_bytes};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = SplitMix64::new(1);
        for kind in ModelKind::ALL {
            let m = small(kind, 11);
            let path = dir.path().join(format!("{kind}.gnet"));
            save_model(&m, &path).unwrap();
            let back: GenderModel<f64> = load_model(&path).unwrap();
            assert_eq!(back, m);
            for _ in 0..100 {
                let len = 1 + rng.below_usize(10);
                let w = random_word(&mut rng, m.vocab(), len);
                assert_eq!(m.predict(&w).unwrap().to_bits(), back.predict(&w).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn single_precision_round_trip() {
        let m = small(ModelKind::Gru, 3).cast::<f32>();
        let back: GenderModel<f32> = from_bytes(&to_bytes(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn vocabulary_and_length_survive() {
        let vocab = build_vocabulary(&["bål", "öra", "äng"]).unwrap();
        let m = GenderModel::<f64>::new(ModelKind::Lstm, vocab.clone(), ModelDims { max_len: 7, d_emb: 3, hidden: 2 }, 0);
        let back: GenderModel<f64> = from_bytes(&to_bytes(&m)).unwrap();
        assert_eq!(back.vocab(), &vocab);
        assert_eq!(back.max_len(), 7);
        assert!(matches!(back.predict("ålandsö"), Ok(_)));
        assert!(matches!(back.predict("ålandsöö"), Err(Error::LengthExceeded { .. })));
    }

    #[test]
    fn every_corrupted_byte_is_rejected() {
        let bytes = to_bytes(&small(ModelKind::Lstm, 2));
        let mut rng = SplitMix64::new(5);
        for _ in 0..200 {
            let mut bad = bytes.clone();
            let i = rng.below_usize(bad.len());
            bad[i] ^= 1 << rng.below(8);
            let err = from_bytes::<f64>(&bad).unwrap_err();
            assert!(
                matches!(err, Error::Checksum { .. } | Error::BadMagic | Error::UnsupportedVersion(_)),
                "byte {i}: {err:?}"
            );
        }
        assert!(matches!(from_bytes::<f64>(&bytes[..bytes.len() - 3]), Err(Error::Checksum { .. })));
        assert!(matches!(from_bytes::<f64>(&bytes[..2]), Err(Error::Truncated)));
        assert!(matches!(from_bytes::<f64>(b"NOPE...."), Err(Error::BadMagic)));
    }

    #[test]
    fn kind_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gnet");
        save_model(&small(ModelKind::Gru, 0), &path).unwrap();
        assert!(matches!(
            load_model_of_kind::<f64>(&path, ModelKind::Lstm),
            Err(Error::KindMismatch { expected: ModelKind::Lstm, found: ModelKind::Gru })
        ));
        assert!(load_model_of_kind::<f64>(&path, ModelKind::Gru).is_ok());
    }

    #[test]
    fn header_layout() {
        let bytes = to_bytes(&small(ModelKind::Dense, 0));
        assert_eq!(&bytes[..4], b"GNET");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], 0);
        assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 10);
    }
}

fn brute_force_count(m: &GenderModel<f64>) -> usize {
    let mut n = 0;
    for p in m.params() {
        for _ in 0..p.value.rows() {
            for _ in 0..p.value.cols() {
                n += 1;
            }
        }
    }
    n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn parameter_count_formula(v in 1usize..40, max_len in 1usize..12, d_emb in 1usize..10, hidden in 1usize..10, k in 0usize..3) {
        let kind = ModelKind::ALL[k];
        let dims = ModelDims { max_len, d_emb, hidden };
        let m = GenderModel::<f64>::new(kind, letters(v.min(26)), dims, 0);
        prop_assert_eq!(m.count_parameters(), brute_force_count(&m));
        prop_assert_eq!(m.count_parameters(), expected_parameter_count(kind, v.min(26), dims));
    }

    #[test]
    fn outputs_are_probabilities(seed: u64, word in "[a-j]{1,10}", k in 0usize..3) {
        let m = small(ModelKind::ALL[k], seed);
        let p = m.predict(&word).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
    }
}
