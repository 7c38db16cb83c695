use fbconverse::exponents::sphere_packing_exponent;
use fbconverse::gaussian::{cdf, quantile};
use fbconverse::measures::{capacity, mutual_information};
use fbconverse::oracle::{DiscreteSumDistribution, Side};
use fbconverse::prefactor::{lemma1_lower_bound, lemma2_upper_bound, IidSpec};
use fbconverse::{parse_channel, Channel};
use proptest::prelude::*;

fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn law() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-3.0f64..3.0, 0.05f64..1.0), 2..4).prop_filter_map("distinct atoms", |raw| {
        let probs = normalize(&raw.iter().map(|a| a.1).collect::<Vec<_>>());
        let atoms: Vec<(f64, f64)> = raw.iter().map(|a| a.0).zip(probs).collect();
        let spread = atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max) - atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        (spread > 0.1 && (total - 1.0).abs() <= 1e-15).then_some(atoms)
    })
}

fn channel() -> impl Strategy<Value = Channel> {
    (2usize..5, 2usize..5).prop_flat_map(|(nx, ny)| {
        prop::collection::vec(prop::collection::vec(0.01f64..1.0, ny), nx)
            .prop_map(|rows| Channel::from_matrix("random", &rows.iter().map(|r| normalize(r)).collect::<Vec<_>>()).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantile_inverts_cdf(p in 1e-10f64..(1.0 - 1e-10)) {
        let x = quantile(p).unwrap();
        prop_assert!((cdf(x) - p).abs() <= 1e-12 * p.min(1.0 - p).max(1e-3));
    }

    #[test]
    fn tails_are_complementary(p in 0.05f64..0.95, n in 1u64..300, k in 0u64..300) {
        let d = DiscreteSumDistribution::new(&[(0.0, 1.0 - p), (1.0, p)], n).unwrap();
        let t = k as f64;
        let total = d.tail(t, Side::AtMost) + d.tail(t + 0.5, Side::AtLeast);
        prop_assert!((total - 1.0).abs() < 1e-10, "total - 1 = {:e}", total - 1.0);
    }

    #[test]
    fn lemma2_dominates_exact(atoms in law(), n in 1u64..200, shift in -3.0f64..3.0) {
        let mean: f64 = atoms.iter().map(|a| a.0 * a.1).sum();
        let r = n as f64 * mean + shift * (n as f64).sqrt();
        let bound = lemma2_upper_bound(&IidSpec::new(&atoms, n).unwrap(), r).unwrap().bound;
        let exact = DiscreteSumDistribution::new(&atoms, n).unwrap().tilted_expectation(r);
        prop_assert!(exact <= bound, "{exact} > {bound}");
    }

    #[test]
    fn lemma1_below_exact(p in 0.1f64..0.9, frac in 0.1f64..0.9, n in 10u64..1500) {
        let atoms = [(0.0, 1.0 - p), (1.0, p)];
        let c = p + frac * (1.0 - p);
        let b = lemma1_lower_bound(&IidSpec::new(&atoms, n).unwrap(), c, 2.0).unwrap();
        let exact = DiscreteSumDistribution::new(&atoms, n).unwrap().log_tail(n as f64 * c, Side::AtLeast);
        match b.log_bound {
            Some(lb) => prop_assert!(lb <= exact, "{lb} > {exact}"),
            None => prop_assert!(b.bound <= 0.0),
        }
    }

    #[test]
    fn capacity_bounds_information(ch in channel(), raw in prop::collection::vec(0.01f64..1.0, 4)) {
        let cap = capacity(&ch).unwrap();
        let limit = (ch.num_inputs().min(ch.num_outputs()) as f64).ln();
        prop_assert!(cap.value >= -1e-12 && cap.value <= limit + 1e-12);
        let p = normalize(&raw[..ch.num_inputs()]);
        prop_assert!(mutual_information(&ch, &p) <= cap.value + 1e-9);
        prop_assert!((mutual_information(&ch, &cap.achiever) - cap.value).abs() < 1e-9);
    }

    #[test]
    fn sphere_packing_is_nonincreasing(p in 0.01f64..0.3, f in 0.05f64..0.9, g in 0.05f64..0.9) {
        let ch = Channel::bsc(p).unwrap();
        let c = capacity(&ch).unwrap().value;
        let (lo, hi) = (f.min(g) * c, f.max(g) * c);
        let e_lo = sphere_packing_exponent(&ch, lo).unwrap().exponent;
        let e_hi = sphere_packing_exponent(&ch, hi).unwrap().exponent;
        prop_assert!(e_hi >= 0.0 && e_lo >= e_hi - 1e-12);
    }

    #[test]
    fn channel_text_round_trips(ch in channel()) {
        let again = parse_channel(&ch.to_spec_string()).unwrap();
        prop_assert_eq!(again.rows(), ch.rows());
    }
}
