use proptest::prelude::*;
use rand::Rng;
use widthlab::{
    analyze, ball_width_bruteforce_with, best_approx, coordinate_subspace_bound, en_exact_l2,
    en_rate, lp_norm, standard_catalog, stream_rng, width_rate, BallWidthInstance,
    BruteForceOptions, CatalogEntry, ClassFamily, DecayFamily, GridFunction, MultiplierKernel,
    RateFamily, TrigPoly,
};

fn random_poly(deg: usize, seed: u64) -> TrigPoly {
    let mut rng = stream_rng(seed, 0);
    let a = (0..deg).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = (0..deg).map(|_| rng.random_range(-1.0..1.0)).collect();
    TrigPoly::new(rng.random_range(-1.0..1.0), a, b).unwrap()
}

fn poly_exponent(f: &RateFamily) -> f64 {
    match f {
        RateFamily::Poly { a } => *a,
        other => panic!("expected a power rate, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sample_then_analyze_roundtrips(seed in any::<u64>(), deg in 0usize..=40) {
        let t = random_poly(deg, seed);
        let back = analyze(&t.sample_default(), deg).unwrap();
        prop_assert!(back.max_coeff_diff(&t) < 1e-12);
    }

    #[test]
    fn best_approx_beats_partial_sum(seed in any::<u64>(), n in 0usize..6, q in 1.2f64..6.0) {
        let t = random_poly(8, seed);
        let f = GridFunction::from_fn(256, |x| t.eval(x) + (3.0 * x).cos().abs());
        let partial = analyze(&f, n).unwrap();
        let resid: Vec<f64> = f
            .samples()
            .iter()
            .zip(partial.sample(256).samples())
            .map(|(a, b)| a - b)
            .collect();
        let partial_err = lp_norm(&GridFunction::new(resid).unwrap(), q).unwrap();
        let best = best_approx(&f, n, q).unwrap();
        prop_assert!(best.error <= partial_err * (1.0 + 1e-9));
        prop_assert!(best_approx(&f, n + 1, q).unwrap().error <= best.error * (1.0 + 1e-9));
    }

    #[test]
    fn exact_l2_is_nonincreasing(r in 0.3f64..3.0, beta in 0.0f64..2.0) {
        let k = MultiplierKernel::new(DecayFamily::Polynomial { r }, beta).unwrap();
        let vals: Vec<f64> = (1..12).map(|n| en_exact_l2(&k, n).unwrap()).collect();
        prop_assert!(vals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn sobolev_width_decays_no_slower_than_en(r in 0.0f64..3.0, p in 1.1f64..6.0, q in 1.1f64..6.0) {
        let d = 1.0 / p - 1.0 / q;
        let r = r + d.max(0.0) + 1.0 / p + 0.01;
        let family = ClassFamily::Sobolev { r };
        let w = poly_exponent(&width_rate(&family, p, q).unwrap().family);
        let e = poly_exponent(&en_rate(&family, p, q).unwrap().family);
        prop_assert!(w >= e - 1e-12, "width n^-{w} vs E_n n^-{e}");
    }
}

#[test]
fn bruteforce_never_exceeds_coordinate_bound() {
    let opts = BruteForceOptions {
        restarts: 2,
        inner_starts: 8,
        ..BruteForceOptions::default()
    };
    for (m, n, p, q) in [(3, 1, 1.5, 3.0), (4, 2, 2.0, 4.0), (4, 1, 3.0, 1.5), (5, 2, 1.2, 2.0)] {
        let inst = BallWidthInstance::new(m, n, p, q).unwrap();
        let bf = ball_width_bruteforce_with(&inst, &opts, 7).unwrap();
        let coord = coordinate_subspace_bound(&inst);
        assert!(bf.value <= coord * (1.0 + 1e-9), "{m} {n} {p} {q}: {} > {coord}", bf.value);
        assert!(bf.value > 0.0);
    }
}

#[test]
fn catalog_covers_grid_without_duplicates() {
    let entries = standard_catalog();
    assert_eq!(entries.len(), 8 * 16);
    let mut seen = std::collections::HashSet::new();
    for e in &entries {
        let (family, p, q) = match e {
            CatalogEntry::Covered(r) => (&r.family, r.p, r.q),
            CatalogEntry::Uncovered { family, p, q, .. } => (family, *p, *q),
        };
        assert!(seen.insert(format!("{family:?}/{p}/{q}")));
    }
    assert!(entries.iter().any(|e| matches!(e, CatalogEntry::Covered(_))));
}
