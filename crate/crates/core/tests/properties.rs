mod common;

use nlc_core::codec::{quantize_value, Container, ContainerHeader, LayerRecord};
use nlc_core::entropy::{quantize_cdf, BinGrid, ScaleTable, CDF_TOTAL};
use nlc_core::nn::ModelHash;
use nlc_core::rans;
use proptest::prelude::*;

fn pmf_strategy(size: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], size).prop_filter_map("all zero", |v| {
        let s: f64 = v.iter().sum();
        (s > 0.0).then(|| v.iter().map(|p| p / s).collect())
    })
}

proptest! {
    #[test]
    fn quantized_tables_are_valid(precision in 1u32..=10, seed in any::<u64>()) {
        let grid = BinGrid::new(precision).unwrap();
        let mut r = common::rng(seed);
        let t = common::random_table(&mut r, &grid);
        prop_assert_eq!(t.cdf()[0], 0);
        prop_assert_eq!(*t.cdf().last().unwrap(), CDF_TOTAL);
        prop_assert!(t.cdf().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn quantize_cdf_keeps_every_bin(pmf in pmf_strategy(16)) {
        let grid = BinGrid::new(4).unwrap();
        let t = quantize_cdf(&pmf, &grid).unwrap();
        let f = t.frequencies();
        prop_assert!(f.iter().all(|&c| c >= 1));
        prop_assert_eq!(f.iter().sum::<u32>(), CDF_TOTAL);
        // no bin drifts further than the floor adjustment allows
        let zeros = pmf.iter().filter(|&&p| p * CDF_TOTAL as f64 <= 1.0).count() as f64;
        for (p, &c) in pmf.iter().zip(&f) {
            prop_assert!((p * CDF_TOTAL as f64 - c as f64).abs() <= zeros + 1.0);
        }
    }

    #[test]
    fn rans_round_trips(seed in any::<u64>(), len in 0usize..2000, precision in 1u32..=10) {
        let grid = BinGrid::new(precision).unwrap();
        let mut r = common::rng(seed);
        let tables: Vec<_> = (0..3).map(|_| common::random_table(&mut r, &grid)).collect();
        let chosen: Vec<_> = (0..len).map(|i| &tables[i % 3]).collect();
        let symbols: Vec<usize> = chosen.iter().map(|t| common::sample(&mut r, t)).collect();
        let seg = rans::encode(&symbols, &chosen).unwrap();
        prop_assert_eq!(rans::decode(seg.bytes(), &chosen, len).unwrap(), symbols);
    }

    #[test]
    fn quantizer_is_idempotent_and_in_range(v in -2000.0f32..2000.0) {
        let g = BinGrid::default();
        let q = quantize_value(v, &g);
        prop_assert!(g.contains(q));
        prop_assert_eq!(quantize_value(q as f32, &g), q);
        if v.abs() < 500.0 {
            prop_assert!((q as f32 - v).abs() <= 0.5);
        }
    }

    #[test]
    fn quantize_sigma_is_monotone_and_conservative(a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
        let table = ScaleTable::with_grid(BinGrid::default()).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(table.quantize_sigma(lo) <= table.quantize_sigma(hi));
        let level = table.levels()[table.quantize_sigma(lo)];
        if lo <= table.max() {
            prop_assert!(level >= lo.max(table.min()));
        }
    }

    #[test]
    fn container_round_trips(
        dims in prop::collection::vec((1u32..200, 1u32..200, 1u32..200, 0usize..40), 1..6),
        w in 1u32..5000,
        h in 1u32..5000,
        hash in any::<[u8; 8]>(),
    ) {
        let layers: Vec<LayerRecord> = dims
            .iter()
            .map(|&(c, hh, ww, n)| LayerRecord { channels: c, height: hh, width: ww, segment_len: n as u32 })
            .collect();
        let container = Container {
            header: ContainerHeader {
                levels: layers.len() as u8,
                precision: 10,
                cdf_bits: 16,
                width: w,
                height: h,
                padded_width: w + 3,
                padded_height: h,
                latent_channels: 150,
                model_hash: ModelHash(hash),
                scale_count: 64,
                scale_min: 0.05,
                scale_max: 256.0,
                layers,
            },
            segments: dims.iter().map(|&(_, _, _, n)| vec![0xab; n]).collect(),
        };
        let bytes = container.to_bytes();
        prop_assert_eq!(bytes.len(), container.encoded_len());
        prop_assert_eq!(Container::from_bytes(&bytes).unwrap(), container);
    }
}
