use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zlp_core::fit::{fit, fit_template, nll_chain, FitConfig, Slot, Template};
use zlp_core::{
    build_preset, random_rotation, rotation_to, uniform_sample, Family, FamilyPreset, FlowChain, LayerSpec,
    SpherePoint, ZlpError,
};

fn draws(chain: &FlowChain, n: usize, seed: u64) -> Vec<SpherePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    chain.sample(&mut rng, n).unwrap().into_iter().map(|(p, _)| p).collect()
}

fn zoom_kappa(chain: &FlowChain) -> f64 {
    chain
        .layers()
        .iter()
        .find_map(|l| match l {
            LayerSpec::Zoom(z) => Some(z.kappa()),
            _ => None,
        })
        .unwrap()
}

fn quick(iterations: usize) -> FitConfig {
    FitConfig { iterations, learning_rate: 0.05, restarts: Some(1), generic_blocks: 1, ..FitConfig::default() }
}

/// `H = ln(4π sinh κ / κ) - κ (coth κ - 1/κ)` on the 2-sphere.
fn vmf_entropy(kappa: f64) -> f64 {
    let ln_sinh = kappa + (-(-2.0 * kappa).exp_m1()).ln() - std::f64::consts::LN_2;
    (4.0 * std::f64::consts::PI).ln() + ln_sinh - kappa.ln() - kappa * (1.0 / kappa.tanh() - 1.0 / kappa)
}

#[test]
fn true_parameter_nll_matches_entropy() {
    let mu = point(1);
    let truth = build_preset(&FamilyPreset::vmf(&mu, 50.0)).unwrap();
    let xs = draws(&truth, 100_000, 2);
    let lps = truth.log_prob_batch(&xs).unwrap();
    let n = lps.len() as f64;
    let mean = -lps.iter().sum::<f64>() / n;
    let sd = (lps.iter().map(|l| (-l - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let h = vmf_entropy(50.0);
    assert!((mean - h).abs() < 3.0 * sd / n.sqrt(), "NLL {mean} vs entropy {h} (se {})", sd / n.sqrt());
    assert!((nll_chain(&truth, &xs).unwrap() - mean).abs() < 1e-12);

    let sharper = build_preset(&FamilyPreset::vmf(&mu, 60.0)).unwrap();
    assert!(nll_chain(&truth, &xs).unwrap() <= nll_chain(&sharper, &xs).unwrap());
}

fn point(seed: u64) -> SpherePoint {
    uniform_sample(&mut ChaCha8Rng::seed_from_u64(seed), 3)
}

#[test]
fn uniform_data_gives_flat_vmf() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let xs: Vec<_> = (0..10_000).map(|_| uniform_sample(&mut rng, 3)).collect();
    let r = fit(Family::Vmf, &xs, &FitConfig::default()).unwrap();
    assert!(zoom_kappa(&r.chain) < 0.05, "{}", zoom_kappa(&r.chain));
}

#[test]
fn fit_is_rotation_invariant() {
    let truth = build_preset(&FamilyPreset::kent_u(rotation_to(&point(3)), 30.0, 1.3)).unwrap();
    let xs = draws(&truth, 2000, 4);
    let r = random_rotation(&mut ChaCha8Rng::seed_from_u64(5), 3);
    let turned: Vec<_> = xs.iter().map(|x| r.apply(x)).collect();
    let cfg = quick(300);
    let (a, b) = (fit(Family::Kent, &xs, &cfg).unwrap(), fit(Family::Kent, &turned, &cfg).unwrap());
    assert!((a.nll - b.nll).abs() < 1e-3, "{} vs {}", a.nll, b.nll);
}

#[test]
fn traces_are_reproducible() {
    let truth = build_preset(&FamilyPreset::vmf(&point(6), 5.0)).unwrap();
    let xs = draws(&truth, 300, 7);
    let cfg = FitConfig { restarts: Some(3), ..quick(40) };
    let a = fit(Family::Generic, &xs, &cfg).unwrap();
    let b = fit(Family::Generic, &xs, &cfg).unwrap();
    let bits = |t: &[zlp_core::fit::TraceRow]| t.iter().map(|r| (r.loss.to_bits(), r.best.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&a.trace), bits(&b.trace));
    assert_eq!(a.params, b.params);
    assert_eq!(a.start_nlls.len(), 3);
    assert!(a.trace.windows(2).all(|w| w[1].best <= w[0].best));
}

#[test]
fn held_out_nll_beats_uniform_for_every_family() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let uniform = nll_chain(&FlowChain::empty(3).unwrap(), &[point(0)]).unwrap();
    for family in Family::ALL {
        let p = FamilyPreset::random(family, 3, (2.0, 30.0), 1, &mut rng).unwrap();
        let truth = build_preset(&p).unwrap();
        let (train, test) = (draws(&truth, 500, 9), draws(&truth, 500, 10));
        let r = fit(family, &train, &quick(150)).unwrap();
        let held_out = nll_chain(&r.chain, &test).unwrap();
        assert!(held_out <= uniform, "{family}: held-out {held_out} vs uniform {uniform}");
    }
}

#[test]
fn divergent_start_aborts() {
    let xs = draws(&build_preset(&FamilyPreset::vmf(&SpherePoint::north_pole(3), 50.0)).unwrap(), 100, 11);
    let south = SpherePoint::new(vec![0.0, 0.0, -1.0]).unwrap();
    let t = Template::new(3, None, vec![Slot::Rotation { anchor: rotation_to(&south), scale: 1.0 }, Slot::Zoom]).unwrap();
    let err = fit_template(&t, &[0.0, 0.0, 0.0, 1e4f64.ln()], &xs, &quick(10)).unwrap_err();
    assert!(matches!(err, ZlpError::Divergence(_)), "{err}");
}
