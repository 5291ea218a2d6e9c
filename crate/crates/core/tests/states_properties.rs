use std::f64::consts::PI;

use bcnn_core::linalg::{hermitian_eigenvalues, partial_transpose, trace};
use bcnn_core::states::{
    analytic_label, g1_product_distance, g2_threshold, gen_g1_werner, gen_g2_werner, gen_general,
    gen_werner, read_dataset, record_rng, sample_dataset, write_dataset, StateFamily,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn werner_lambda_min_closed_form(p in 0.001f64..0.999) {
        let s = gen_werner(p).unwrap();
        prop_assert!((s.lambda_min - (1.0 - 3.0 * p) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn parametric_labels_match_thresholds(p in 0.0001f64..0.9999, theta in 0.0001f64..PI - 0.0001, phi in 0.0001f64..2.0 * PI - 0.0001) {
        if (p - 1.0 / 3.0).abs() > 1e-6 {
            prop_assert_eq!(gen_werner(p).unwrap().entangled, p > 1.0 / 3.0);
        }
        // G1 mixtures at multiples of pi/2 are separable for every p.
        let t = 2.0 * theta;
        if (p - 1.0 / 3.0).abs() > 1e-6 && g1_product_distance(t) > 1e-6 {
            prop_assert_eq!(gen_g1_werner(p, t).unwrap().entangled, p > 1.0 / 3.0);
            prop_assert_eq!(analytic_label(StateFamily::G1Werner, p, t).unwrap(), p > 1.0 / 3.0);
        }
        if (p - g2_threshold(theta)).abs() > 1e-6 {
            let g2 = gen_g2_werner(p, theta, phi).unwrap();
            prop_assert_eq!(g2.entangled, p > g2_threshold(theta));
        }
    }

    #[test]
    fn general_states_are_valid(seed in any::<u64>()) {
        let s = gen_general(&mut record_rng(seed, 0)).unwrap();
        prop_assert!(s.matrix.is_hermitian(1e-12));
        prop_assert!((trace(&s.matrix).re - 1.0).abs() < 1e-12);
        prop_assert!(hermitian_eigenvalues(&s.matrix).unwrap()[0] > -1e-12);
        let pt = partial_transpose(&s.matrix, &[2, 2], 1).unwrap();
        prop_assert_eq!(s.lambda_min, hermitian_eigenvalues(&pt).unwrap()[0]);
        prop_assert_eq!(s.entangled, s.lambda_min < 0.0);
    }
}

#[test]
fn datasets_reproduce_from_seed() {
    for family in StateFamily::ALL {
        let a = sample_dataset(family, 50, 42, false).unwrap();
        let b = sample_dataset(family, 50, 42, false).unwrap();
        assert_eq!(a, b);
        let c = sample_dataset(family, 50, 43, false).unwrap();
        assert_ne!(a.records, c.records);
    }
}

#[test]
fn records_are_independent_of_dataset_size() {
    let small = sample_dataset(StateFamily::G2Werner, 10, 7, false).unwrap();
    let large = sample_dataset(StateFamily::G2Werner, 100, 7, false).unwrap();
    assert_eq!(small.records[..], large.records[..10]);
}

#[test]
fn balanced_general_split() {
    for size in [1, 2, 101, 1000] {
        let ds = sample_dataset(StateFamily::General, size, 3, true).unwrap();
        assert_eq!(ds.len(), size);
        assert_eq!(ds.entangled_count(), size / 2);
    }
}

#[test]
fn csv_round_trip_is_exact() {
    for family in StateFamily::ALL {
        let ds = sample_dataset(family, 40, 9, family == StateFamily::General).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        let mut again = Vec::new();
        write_dataset(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }
}

#[test]
fn corrupted_csv_is_rejected() {
    let ds = sample_dataset(StateFamily::Werner, 3, 1, false).unwrap();
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // break the trace of the first record
    let mut fields: Vec<String> = lines[2].split(',').map(String::from).collect();
    fields[6] = "0.9".into();
    lines[2] = fields.join(",");
    assert!(read_dataset(lines.join("\n").as_bytes()).is_err());
    let short: String = text.lines().take(2).collect::<Vec<_>>().join("\n") + "\nWerner,0.5\n";
    assert!(read_dataset(short.as_bytes()).is_err());
}
