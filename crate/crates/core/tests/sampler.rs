mod common;

use common::*;
use hybrid_vmc::sampler::{draw_samples, Environment, RejectionReason};
use hybrid_vmc::symmetry::{SectorSpec, SymmetryGroup};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn accepted_samples_lie_in_the_sector(seed in any::<u64>(), which in 0usize..4) {
        let lat = chain(8, 4);
        let spec = [
            SectorSpec::chain(false, 1, 1, 0),
            SectorSpec::chain(true, -1, -1, 0),
            SectorSpec::translations_only(std::f64::consts::PI, Some(2)),
            SectorSpec::translations_only(std::f64::consts::FRAC_PI_2, Some(0)),
        ][which].clone();
        let st = random_state(&lat, &spec, 6, 2, seed);
        let group = SymmetryGroup::new(&lat, &spec).unwrap();
        let batch = draw_samples(&st, &Environment::new(&st), &group, 2000, seed, false).unwrap();
        let m = spec.two_sz.unwrap();
        for r in &batch.records {
            match r.rejection {
                None => {
                    prop_assert_eq!(r.a_real.two_sz(8), m);
                    prop_assert!(group.norm_squared(r.a_repr) > 0.0);
                    prop_assert_eq!(group.apply(r.group_element, r.a_real), r.a_repr);
                    prop_assert!(group.is_representative(r.a_repr));
                }
                Some(RejectionReason::WrongMagnetization) => prop_assert_ne!(r.a_real.two_sz(8), m),
                Some(RejectionReason::ZeroNorm) => prop_assert_eq!(group.norm_squared(r.a_repr), 0.0),
            }
        }
        prop_assert_eq!(batch.n_drawn(), 2000);
    }
}

#[test]
fn sample_stream_is_bit_reproducible() {
    let lat = chain(12, 4);
    let spec = SectorSpec::chain(false, 1, 1, 0);
    let st = random_state(&lat, &spec, 8, 3, 4);
    let group = SymmetryGroup::new(&lat, &spec).unwrap();
    let env = Environment::new(&st);
    let a = draw_samples(&st, &env, &group, 10_000, 17, false).unwrap();
    let b = draw_samples(&st, &env, &group, 10_000, 17, false).unwrap();
    let c = draw_samples(&st, &env, &group, 10_000, 17, true).unwrap();
    let d = draw_samples(&st, &env, &group, 10_000, 18, false).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.records, c.records);
    assert_ne!(a.records, d.records);
}

#[test]
fn real_space_frequencies_follow_phi_squared() {
    // marginal check on a single configuration class, independent of the chi-square helper
    let lat = chain(8, 4);
    let spec = SectorSpec::trivial(None);
    let st = random_state(&lat, &spec, 16, 2, 21);
    let group = SymmetryGroup::new(&lat, &spec).unwrap();
    let weights: Vec<f64> = (0..256u64).map(|a| dense_amplitude(&st, a).norm_sqr()).collect();
    let z: f64 = weights.iter().sum();
    let n = 200_000;
    let batch = draw_samples(&st, &Environment::new(&st), &group, n, 5, false).unwrap();
    let mut counts = vec![0usize; 256];
    for r in &batch.records {
        counts[r.a_real.0 as usize] += 1;
    }
    for (a, &w) in weights.iter().enumerate() {
        let p = w / z;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt().max(1.0);
        assert!((counts[a] as f64 - n as f64 * p).abs() < 6.0 * sigma, "config {a}");
    }
}
