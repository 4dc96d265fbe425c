use proptest::prelude::*;
use rominv_harness::io::{fmt_num, render_heatmap, Table};
use rominv_harness::ExperimentConfig;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn numbers_survive_csv(rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3), 0..20)) {
        let dir = std::env::temp_dir().join(format!("rominv-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("t{}.csv", rows.len()));
        let mut t = Table::new(&["a", "b", "c"]);
        for r in &rows {
            t.push_numbers(r).unwrap();
        }
        t.write(&path).unwrap();
        let back = Table::read(&path).unwrap();
        for (k, name) in ["a", "b", "c"].iter().enumerate() {
            let col = back.column_f64(name).unwrap();
            prop_assert_eq!(col, rows.iter().map(|r| r[k]).collect::<Vec<_>>());
        }
    }

    #[test]
    fn formatting_is_exact(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn heatmap_spans_gray_range(values in prop::collection::vec(-5.0f64..5.0, 12)) {
        let pgm = render_heatmap(&values, 4, 3).unwrap();
        let header = b"P5\n4 3\n255\n";
        prop_assert!(pgm.starts_with(header));
        let pixels = &pgm[header.len()..];
        prop_assert_eq!(pixels.len(), 12);
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if hi > lo {
            prop_assert_eq!(*pixels.iter().min().unwrap(), 0);
            prop_assert_eq!(*pixels.iter().max().unwrap(), 255);
        }
    }

    #[test]
    fn config_hash_tracks_fields(seed in any::<u64>(), noise in 0.0f64..0.1) {
        let a = ExperimentConfig { seed, noise, ..Default::default() };
        let b = ExperimentConfig { seed: seed.wrapping_add(1), noise, ..Default::default() };
        prop_assert_eq!(a.canonical_bytes().unwrap(), a.clone().canonical_bytes().unwrap());
        prop_assert_ne!(a.canonical_bytes().unwrap(), b.canonical_bytes().unwrap());
    }
}
