use csiq_core::quant::{
    compand, expand, pack_bits, unpack_bits, CompandMode, Quantizer, QuantizerConfig,
};
use proptest::prelude::*;

fn quantizer(bits: u32, mode: CompandMode) -> Quantizer {
    Quantizer::new(QuantizerConfig {
        mu: QuantizerConfig::DEFAULT_MU,
        bits,
        mode,
    })
    .unwrap()
}

fn modes() -> impl Strategy<Value = CompandMode> {
    prop_oneof![
        Just(CompandMode::Exact),
        Just(CompandMode::Uniform),
        (2usize..16).prop_map(|segments| CompandMode::Polyline { segments }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn round_trip_is_idempotent(bits in 2u32..=16, mode in modes(), v in -1.0f64..=1.0) {
        let q = quantizer(bits, mode);
        let once = q.round_trip(v).unwrap();
        prop_assert_eq!(q.round_trip(once).unwrap(), once);
        prop_assert_eq!(q.quantize_value(once).unwrap(), q.quantize_value(v).unwrap());
    }

    #[test]
    fn negation_flips_only_the_sign(bits in 2u32..=16, mode in modes(), v in 1e-12f64..=1.0) {
        let q = quantizer(bits, mode);
        let pos = q.quantize_value(v).unwrap();
        let neg = q.quantize_value(-v).unwrap();
        prop_assert_eq!(pos ^ neg, 1 << (bits - 1));
        prop_assert_eq!(q.round_trip(-v).unwrap(), -q.round_trip(v).unwrap());
    }

    #[test]
    fn error_within_widest_half_cell(bits in 2u32..=16, mode in modes(), v in -1.0f64..=1.0) {
        let q = quantizer(bits, mode);
        let err = (q.round_trip(v).unwrap() - v).abs();
        prop_assert!(err <= q.max_round_trip_error() + 1e-12);
        prop_assert!(err <= q.max_cell_width() / 2.0 + 1e-12 || mode != CompandMode::Uniform);
    }

    #[test]
    fn error_within_own_cell(bits in 2u32..=16, v in -1.0f64..=1.0) {
        let q = quantizer(bits, CompandMode::Exact);
        let k = (q.quantize_value(v).unwrap() & ((1 << (bits - 1)) - 1)) as usize;
        let (lo, hi) = q.cell_bounds(k);
        prop_assert!(v.abs() >= lo - 1e-12 && v.abs() <= hi + 1e-12);
    }

    #[test]
    fn quantization_is_monotone(bits in 2u32..=16, mode in modes(), a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
        let q = quantizer(bits, mode);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(q.round_trip(lo).unwrap() <= q.round_trip(hi).unwrap());
    }

    #[test]
    fn pack_unpack_is_exact(
        bits in 2u32..=16,
        raw in prop::collection::vec(any::<u32>(), 0..300),
    ) {
        let indices: Vec<u32> = raw.iter().map(|x| x & ((1u32 << bits) - 1)).collect();
        let stream = pack_bits(&indices, bits).unwrap();
        prop_assert_eq!(stream.bit_len(), indices.len() * bits as usize);
        prop_assert_eq!(stream.bytes().len(), (indices.len() * bits as usize).div_ceil(8));
        prop_assert_eq!(unpack_bits(&stream, indices.len(), bits).unwrap(), indices);
    }

    #[test]
    fn compand_round_trip(x in 0.0f64..=1.0, mu in 1.0f64..500.0) {
        let y = compand(x, mu).unwrap();
        prop_assert!((0.0..=1.0).contains(&y) && y >= x);
        prop_assert!((expand(y, mu).unwrap() - x).abs() < 1e-9);
    }
}
