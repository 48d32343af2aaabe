//! Randomized invariants for the statistics and dynamics primitives.

use proptest::prelude::*;

use gdlab::dynamics::{iterate, member_seed, MapSpec};
use gdlab::objective::{catalog_macro, catalog_micro, MultiscaleObjective};
use gdlab::stats::{ks_distance, make_histogram, w1_distance_1d};

fn samples(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, 1..n)
}

proptest! {
    #[test]
    fn w1_is_a_metric(a in samples(64), b in samples(64), c in samples(64)) {
        let ab = w1_distance_1d(&a, &b).unwrap();
        let ba = w1_distance_1d(&b, &a).unwrap();
        let aa = w1_distance_1d(&a, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!(aa <= 1e-9);
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab));
        let bc = w1_distance_1d(&b, &c).unwrap();
        let ac = w1_distance_1d(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9 * (1.0 + ab + bc));
    }

    #[test]
    fn w1_is_translation_invariant(a in samples(64), b in samples(64), t in -50.0..50.0f64) {
        let d0 = w1_distance_1d(&a, &b).unwrap();
        let at: Vec<f64> = a.iter().map(|x| x + t).collect();
        let bt: Vec<f64> = b.iter().map(|x| x + t).collect();
        let d1 = w1_distance_1d(&at, &bt).unwrap();
        prop_assert!((d0 - d1).abs() <= 1e-9 * (1.0 + d0));
    }

    #[test]
    fn w1_of_point_masses_is_their_distance(x in -100.0..100.0f64, y in -100.0..100.0f64) {
        let d = w1_distance_1d(&[x, x, x], &[y, y, y]).unwrap();
        prop_assert!((d - (x - y).abs()).abs() <= 1e-9 * (1.0 + (x - y).abs()));
    }

    #[test]
    fn ks_stays_in_unit_interval(s in samples(128), shift in -2.0..2.0f64) {
        // any monotone cdf-like function
        let ks = ks_distance(&s, |x| (0.01 * (x - shift)).tanh() * 0.5 + 0.5).unwrap();
        prop_assert!((0.0..=1.0).contains(&ks));
    }

    #[test]
    fn histogram_mass_is_one_when_nothing_overflows(s in samples(256), bins in 2usize..64) {
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
        let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        let h = make_histogram(&s, 1, bins, &[(lo, hi)]).unwrap();
        prop_assert_eq!(h.overflow, 0.0);
        let mass: f64 = h.counts.iter().sum::<f64>() / h.total_weight;
        prop_assert!((mass - 1.0).abs() <= 1e-9);
        // density integrates to one as well
        let width = (hi - lo) / bins as f64;
        let centers: f64 = (0..bins)
            .map(|i| h.density_at(&[lo + (i as f64 + 0.5) * width]) * width)
            .sum();
        prop_assert!((centers - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn member_seeds_differ_between_members(seed in any::<u64>(), m in 0u64..10_000) {
        prop_assert_ne!(member_seed(seed, m), member_seed(seed, m + 1));
        prop_assert_ne!(member_seed(seed, m), member_seed(seed.wrapping_add(1), m));
    }

    #[test]
    fn thinning_subsamples_the_full_orbit(thin in 1usize..7, x0 in -1.0..1.0f64) {
        let obj = MultiscaleObjective::new(
            catalog_macro("quadratic").unwrap(),
            Some(catalog_micro("sin", 1e-3).unwrap()),
        )
        .unwrap();
        let map = MapSpec::Gd { obj, eta: 0.05 };
        let full = iterate(&map, &[x0], 60, 0, 1, 0).unwrap();
        let thinned = iterate(&map, &[x0], 60, 0, thin, 0).unwrap();
        for i in 0..thinned.len() {
            prop_assert_eq!(thinned.state(i), full.state(i * thin));
        }
    }

    #[test]
    fn dump_roundtrip_preserves_payload(data in prop::collection::vec(-1e12..1e12f64, 2..128)) {
        let data = if data.len() % 2 == 1 { data[..data.len() - 1].to_vec() } else { data };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dump.bin");
        gdlab::experiments::dump_binary(&path, 2, &data).unwrap();
        let (d, back) = gdlab::experiments::read_binary(&path).unwrap();
        prop_assert_eq!(d, 2);
        prop_assert_eq!(back, data);
    }
}
