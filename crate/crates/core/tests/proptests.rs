use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zlp_core::fit::Template;
use zlp_core::io::ChainSpecFile;
use zlp_core::{
    build_preset, kent_constraint_interval, rotation_to, uniform_sample, Family, FamilyPreset, FisherZoom,
    FlowChain, LinearProject, SpherePoint, ZoomParams,
};

fn point(dim: usize, seed: u64) -> SpherePoint {
    uniform_sample(&mut ChaCha8Rng::seed_from_u64(seed), dim)
}

fn max_diff(a: &SpherePoint, b: &SpherePoint) -> f64 {
    a.coords().iter().zip(b.coords()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_chain(family: Family, dim: usize, seed: u64) -> FlowChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_preset(&FamilyPreset::random(family, dim, (0.1, 100.0), 2, &mut rng).unwrap()).unwrap()
}

fn family() -> impl Strategy<Value = Family> {
    prop::sample::select(Family::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_to_maps_pole_to_target(dim in 2usize..12, seed: u64) {
        let mu = point(dim, seed);
        let r = rotation_to(&mu);
        prop_assert!(max_diff(&r.apply(&SpherePoint::north_pole(dim)), &mu) < 1e-13);
        prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_project_round_trip(dim in 2usize..8, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = LinearProject::full(zlp_core::random_linear_map(&mut rng, dim)).unwrap();
        let x = uniform_sample(&mut rng, dim);
        prop_assert!(max_diff(&lp.inverse(&lp.forward(&x).unwrap()).unwrap(), &x) < 1e-12);
    }

    #[test]
    fn zoom_round_trip(dim in 2usize..40, ln_kappa in -7.0f64..14.0, seed: u64) {
        let z = FisherZoom::new(ZoomParams::new(ln_kappa.exp(), dim).unwrap()).unwrap();
        let x = point(dim, seed);
        prop_assert!(max_diff(&z.inverse(&z.forward(&x).unwrap()).unwrap(), &x) < 1e-9);
    }

    #[test]
    fn kent_interval_is_reciprocal(dim in 2usize..200, ln_kappa in -10.0f64..16.0) {
        let (lo, hi) = kent_constraint_interval(ln_kappa.exp(), dim).unwrap();
        prop_assert!((lo * hi - 1.0).abs() < 1e-14);
        prop_assert!(hi > 1.0);
    }

    #[test]
    fn spec_json_round_trip(f in family(), dim in 3usize..6, seed: u64) {
        let chain = random_chain(f, dim, seed);
        let text = ChainSpecFile::from_chain(&chain, Some(f)).to_json().unwrap();
        let back = ChainSpecFile::parse(&text).unwrap().build().unwrap();
        prop_assert_eq!(back.len(), chain.len());
        let x = point(dim, seed ^ 1);
        let (a, b) = (chain.log_prob(&x).unwrap(), back.log_prob(&x).unwrap());
        prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn parameter_transform_round_trip(f in family(), dim in 3usize..6, seed: u64) {
        let chain = random_chain(f, dim, seed);
        let (template, theta) = Template::encode(&chain, Some(f)).unwrap();
        let decoded = template.decode(&theta).unwrap();
        prop_assert!(!decoded.kappa_capped);
        let (_, again) = Template::encode(&decoded.chain, Some(f)).unwrap();
        let drift = theta.iter().zip(&again).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(drift < 1e-12, "parameter drift {}", drift);
        for k in 0..5 {
            let x = point(dim, seed.wrapping_add(k));
            let (a, b) = (chain.log_prob(&x).unwrap(), decoded.chain.log_prob(&x).unwrap());
            prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn chain_round_trip(f in family(), dim in 3usize..6, seed: u64) {
        let chain = random_chain(f, dim, seed);
        let x = point(dim, seed ^ 2);
        prop_assert!(max_diff(&chain.inverse(&chain.forward(&x).unwrap()).unwrap(), &x) < 1e-9);
    }
}
