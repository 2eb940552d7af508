use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zlp_core::sphere::{numeric_density_update, uniform_sample, SpherePoint, DEFAULT_FD_STEP};
use zlp_core::zoom::{AxisCoord, FisherZoom, ZoomParams};

fn zoom(kappa: f64, dim: usize) -> FisherZoom {
    FisherZoom::new(ZoomParams::new(kappa, dim).unwrap()).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn sphere_round_trip_across_dimensions_and_concentrations() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for dim in [2, 3, 4, 5, 11] {
        for kappa in [1e-3, 0.1, 10.0, 1e3, 1e6] {
            let z = zoom(kappa, dim);
            for _ in 0..200 {
                let x = uniform_sample(&mut rng, dim);
                let y = z.forward(&x).unwrap();
                assert!((y.coords().iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
                let back = z.inverse(&y).unwrap();
                let err = max_abs_diff(back.coords(), x.coords());
                assert!(err < 1e-10, "D={dim} kappa={kappa} err={err:e} x={:?}", x.coords());
            }
        }
    }
}

#[test]
fn logit_round_trip_in_both_tails() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for dim in [3, 4, 5, 11, 51, 101] {
        for kappa in [1e-3, 1.0, 1e3, 1e6] {
            let z = zoom(kappa, dim);
            for _ in 0..100 {
                let t: f64 = rng.random_range(-1.0 + 1e-6..1.0 - 1e-6);
                let a = AxisCoord::from_t(t);
                let h = z.h_forward_coord(&a).unwrap();
                let back = z.h_inverse_coord(&h).unwrap();
                assert!((back.t() - t).abs() < 1e-9, "D={dim} kappa={kappa} t={t} back={}", back.t());
            }
        }
    }
}

#[test]
fn h_is_strictly_increasing() {
    for (dim, kappa) in [(3, 50.0), (4, 1.0), (5, 1e3), (11, 1e-2)] {
        let z = zoom(kappa, dim);
        let mut prev = f64::NEG_INFINITY;
        for i in 1..10_000 {
            let t = -1.0 + 2.0 * i as f64 / 10_000.0;
            let h = z.h_forward_coord(&AxisCoord::from_t(t)).unwrap();
            // compare in logit space, where distinct inputs stay distinct
            let w = h.logit();
            assert!(w > prev, "D={dim} kappa={kappa} t={t}");
            prev = w;
        }
    }
}

#[test]
fn analytic_update_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (dim, kappa) in [(3, 5.0), (5, 20.0), (4, 3.0), (6, 0.5), (3, 200.0)] {
        let z = zoom(kappa, dim);
        for _ in 0..200 {
            let x = uniform_sample(&mut rng, dim);
            let analytic = z.log_density_update(&AxisCoord::from_point(x.coords())).unwrap().exp();
            let numeric = numeric_density_update(|p| z.forward(p), &x, DEFAULT_FD_STEP).unwrap();
            let rel = (numeric / analytic - 1.0).abs();
            assert!(rel < 1e-5, "D={dim} kappa={kappa} rel={rel:e}");
        }
    }
}

#[test]
fn high_dimension_high_concentration_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z = zoom(2e6, 100);
    for _ in 0..200 {
        let t: f64 = rng.random_range(-1.0..1.0);
        let a = AxisCoord::from_t(t);
        let back = z.h_inverse_coord(&z.h_forward_coord(&a).unwrap()).unwrap();
        assert!((back.t() - t).abs() < 1e-6);
    }
    let x = uniform_sample(&mut rng, 100);
    let y = z.forward(&x).unwrap();
    assert!(y.last() > 0.99);
    let _ = SpherePoint::new(y.into_coords()).unwrap();
}
