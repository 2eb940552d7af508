//! Self-verification suite for a chain: round trips, normalization, the
//! finite-difference Jacobian oracle, and Kent-specific checks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{FlowChain, LayerSpec};
use crate::error::Result;
use crate::grid::DensityGrid;
use crate::linear_project::{kent_constraint_interval, LpVariant};
use crate::preset::{build_preset, kent_tangent_gaussian_check, FamilyPreset};
use crate::special::log_sum_exp;
use crate::sphere::{
    ln_surface_volume, numeric_density_update, rotation_to, uniform_sample, SpherePoint, DEFAULT_FD_STEP,
};
use crate::zoom::FisherZoom;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckLevel {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    /// `true` when the check does not apply and was not run.
    pub skipped: bool,
    pub detail: String,
}

impl CheckLine {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, skipped: false, detail }
    }

    fn skip(name: &str, detail: String) -> Self {
        Self { name: name.into(), passed: true, skipped: true, detail }
    }

    fn error(name: &str, e: impl std::fmt::Display) -> Self {
        Self::new(name, false, format!("error: {e}"))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn push(&mut self, line: CheckLine) {
        self.lines.push(line);
    }

    /// One aligned row per check.
    pub fn table(&self) -> String {
        let w = self.lines.iter().map(|l| l.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for l in &self.lines {
            let status = if l.skipped {
                "SKIP"
            } else if l.passed {
                "PASS"
            } else {
                "FAIL"
            };
            out.push_str(&format!("{status}  {:<w$}  {}\n", l.name, l.detail));
        }
        out
    }
}

/// Tolerances and sample sizes of the suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSettings {
    pub round_trip_points: usize,
    pub round_trip_tol: f64,
    pub mc_samples: usize,
    pub jacobian_points: usize,
    pub jacobian_rel_tol: f64,
    pub seed: u64,
}

impl CheckSettings {
    pub fn for_level(level: CheckLevel) -> Self {
        match level {
            CheckLevel::Fast => Self {
                round_trip_points: 200,
                round_trip_tol: 1e-9,
                mc_samples: 20_000,
                jacobian_points: 20,
                jacobian_rel_tol: 1e-5,
                seed: 0,
            },
            CheckLevel::Full => Self {
                round_trip_points: 1000,
                round_trip_tol: 1e-9,
                mc_samples: 1_000_000,
                jacobian_points: 1000,
                jacobian_rel_tol: 1e-5,
                seed: 0,
            },
        }
    }
}

/// Largest `|inverse(forward(x)) - x|` over `n` uniform points, and the
/// largest deviation of a forward image from unit norm.
pub fn round_trip_error(chain: &FlowChain, n: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut norm_dev) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let x = uniform_sample(&mut rng, chain.dim());
        let z = chain.forward(&x)?;
        norm_dev = norm_dev.max((z.dot(&z).sqrt() - 1.0).abs());
        let back = chain.inverse(&z)?;
        worst = worst.max(back.coords().iter().zip(x.coords()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Ok((worst, norm_dev))
}

/// Monte Carlo estimate of `∫ p` with its standard error and effective
/// sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub integral: f64,
    pub std_error: f64,
    pub ess: f64,
    /// `true` when the uniform proposal was replaced by a vMF mixture.
    pub importance: bool,
}

impl McEstimate {
    pub fn within(&self, k: f64) -> bool {
        (self.integral - 1.0).abs() <= k * self.std_error
    }
}

fn estimate(log_w: &[f64], importance: bool) -> McEstimate {
    let n = log_w.len() as f64;
    let shift = log_sum_exp(log_w) - n.ln();
    let w: Vec<f64> = log_w.iter().map(|v| (v - shift).exp()).collect();
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let sum_sq: f64 = w.iter().map(|v| v * v).sum();
    McEstimate {
        integral: mean * shift.exp(),
        std_error: (var / n).sqrt() * shift.exp(),
        ess: w.iter().sum::<f64>().powi(2) / sum_sq,
        importance,
    }
}

/// Uniform-proposal estimate `S · mean p(x)`.
pub fn mc_normalization_uniform(chain: &FlowChain, n: usize, seed: u64) -> Result<McEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<SpherePoint> = (0..n).map(|_| uniform_sample(&mut rng, chain.dim())).collect();
    let ln_s = ln_surface_volume(chain.dim());
    let lw: Vec<f64> = chain.log_prob_batch(&pts)?.into_iter().map(|lp| lp + ln_s).collect();
    Ok(estimate(&lw, false))
}

/// Uniform estimate when its effective sample size reaches 1000, otherwise
/// importance sampling from a defensive mixture: 20% uniform and 80% one or
/// two antipodal vMF components whose spread is twice the widest tangent
/// variance of draws from the chain.
pub fn mc_normalization(chain: &FlowChain, n: usize, seed: u64) -> Result<McEstimate> {
    let plain = mc_normalization_uniform(chain, n, seed)?;
    if plain.ess >= 1000.0 {
        return Ok(plain);
    }
    let dim = chain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let probe: Vec<SpherePoint> = chain.sample(&mut rng, 4000)?.into_iter().map(|(p, _)| p).collect();
    let mut mean = vec![0.0; dim];
    let mut scatter = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for p in &probe {
        for i in 0..dim {
            mean[i] += p.coords()[i];
            for j in 0..dim {
                scatter[(i, j)] += p.coords()[i] * p.coords()[j];
            }
        }
    }
    let r_bar = mean.iter().map(|v| v * v).sum::<f64>().sqrt() / probe.len() as f64;
    let antipodal = r_bar < 0.5;
    let axis = if antipodal {
        let eig = scatter.clone().symmetric_eigen();
        let k = eig.eigenvalues.imax();
        SpherePoint::normalize(eig.eigenvectors.column(k).iter().copied().collect())?
    } else {
        SpherePoint::normalize(mean)?
    };
    // Largest tangent-plane variance about the axis; the proposal takes
    // twice that variance in every direction.
    let mut proj = nalgebra::DMatrix::<f64>::identity(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            proj[(i, j)] -= axis.coords()[i] * axis.coords()[j];
        }
    }
    let v_max = (&proj * &scatter * &proj / probe.len() as f64).symmetric_eigen().eigenvalues.max();
    let kappa_q = (0.5 / v_max.max(1e-300)).clamp(1e-3, 1e7);
    let comps: Vec<FlowChain> = {
        let mut v = vec![build_preset(&FamilyPreset::vmf(&axis, kappa_q))?];
        if antipodal {
            let neg = SpherePoint::normalize(axis.coords().iter().map(|c| -c).collect())?;
            v.push(build_preset(&FamilyPreset::Vmf { rotation: rotation_to(&neg), kappa: kappa_q })?);
        }
        v
    };
    let w_unif = 0.2f64;
    let w_comp = 0.8 / comps.len() as f64;
    let ln_s = ln_surface_volume(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1A7E);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rand::Rng::random(&mut rng);
        if u < w_unif {
            pts.push(uniform_sample(&mut rng, dim));
        } else {
            let k = (((u - w_unif) / 0.8) * comps.len() as f64) as usize;
            pts.push(comps[k.min(comps.len() - 1)].sample(&mut rng, 1)?.remove(0).0);
        }
    }
    let lp = chain.log_prob_batch(&pts)?;
    let mut lw = Vec::with_capacity(n);
    for (p, l) in pts.iter().zip(lp) {
        let mut terms = vec![w_unif.ln() - ln_s];
        for c in &comps {
            terms.push(w_comp.ln() + c.log_prob(p)?);
        }
        lw.push(l - log_sum_exp(&terms));
    }
    Ok(estimate(&lw, true))
}

/// Largest relative difference between each layer's analytic forward update
/// and [`numeric_density_update`] at `n` uniform points, per layer index.
/// The step shrinks with the zoom concentration, within `[1e-7, 1e-5]`.
pub fn jacobian_oracle_errors(chain: &FlowChain, n: usize, seed: u64) -> Result<Vec<(usize, &'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (i, layer) in chain.layers().iter().enumerate() {
        let step = match layer {
            LayerSpec::Zoom(z) => (DEFAULT_FD_STEP * (10.0 / z.kappa().sqrt()).min(1.0)).max(1e-7),
            _ => DEFAULT_FD_STEP,
        };
        let mut worst = 0.0f64;
        for _ in 0..n {
            let x = uniform_sample(&mut rng, chain.dim());
            let analytic = layer.forward_log_update(&x)?;
            let numeric = numeric_density_update(|y| layer.forward(y), &x, step)?;
            worst = worst.max((numeric.ln() - analytic).exp_m1().abs());
        }
        out.push((i, layer.kind(), worst));
    }
    Ok(out)
}

/// Structural Kent checks: every constrained scale layer is followed by a
/// zoom with the same `κ`, and its scales lie inside the unimodality interval.
pub fn kent_constraint_check(chain: &FlowChain) -> CheckLine {
    let name = "kent constraint";
    let layers = chain.layers();
    let mut found = false;
    for (i, l) in layers.iter().enumerate() {
        let LayerSpec::LinearProject(lp) = l else { continue };
        if lp.variant() != LpVariant::ConstrainedSc {
            continue;
        }
        found = true;
        let kappa = lp.kappa().expect("constrained layers carry kappa");
        match layers.get(i + 1) {
            Some(LayerSpec::Zoom(z)) if z.kappa() == kappa => {}
            _ => {
                return CheckLine::new(name, false, format!("layer {i}: constrained scales not followed by a zoom of kappa {kappa}"))
            }
        }
        let (lo, hi) = match kent_constraint_interval(kappa, chain.dim()) {
            Ok(v) => v,
            Err(e) => return CheckLine::error(name, e),
        };
        let s = lp.scales();
        if let Some(bad) = s[..s.len() - 1].iter().find(|v| !(**v > lo && **v < hi)) {
            return CheckLine::new(name, false, format!("sigma {bad} outside ({lo:.6}, {hi:.6})"));
        }
    }
    if found {
        CheckLine::new(name, true, "scales inside the interval, zoom order correct".into())
    } else {
        CheckLine::new(name, false, "no constrained scale layer in a chain tagged kent".into())
    }
}

/// `(κ, σ)` of a 2-sphere Kent chain `[R?, S_c, Z]`.
fn kent_parts(chain: &FlowChain) -> Option<(f64, Vec<f64>)> {
    let layers = chain.layers();
    let start = usize::from(matches!(layers.first(), Some(LayerSpec::Rotate(_))));
    match &layers[start..] {
        [LayerSpec::LinearProject(lp), LayerSpec::Zoom(z)] if lp.variant() == LpVariant::ConstrainedSc => {
            let mut s = lp.scales();
            s.pop();
            Some((z.kappa(), s))
        }
        _ => None,
    }
}

/// Tangent-Gaussian limit check. The error of the limit decays like `1/κ`;
/// the tolerance is `40 σ_max⁴ / κ`, where `σ_max = max(σ_i, 1/σ_i)`.
pub fn kent_tangent_check(chain: &FlowChain) -> CheckLine {
    let name = "kent tangent gaussian";
    let Some((kappa, sigmas)) = kent_parts(chain).filter(|_| chain.dim() == 3) else {
        return CheckLine::skip(name, "needs a D = 3 chain of the form [R, S_c, Z]".into());
    };
    if (sigmas[0] * sigmas[1] - 1.0).abs() > 1e-9 {
        return CheckLine::skip(name, "needs the (u, 1/u) scale form".into());
    }
    let u = sigmas[0];
    let s_max = u.max(1.0 / u);
    let tol = 40.0 * s_max.powi(4) / kappa;
    match kent_tangent_gaussian_check(kappa, u, 61) {
        Ok(r) => CheckLine::new(
            name,
            r.max_relative_error < tol,
            format!(
                "max rel err {:.3e} (tol {tol:.3e}), sigma_t = ({:.6}, {:.6})",
                r.max_relative_error, r.sigma_t[0], r.sigma_t[1]
            ),
        ),
        Err(e) => CheckLine::skip(name, format!("not applicable: {e}")),
    }
}

/// Runs the suite. `kent` adds the Kent-specific lines.
pub fn run_checks(chain: &FlowChain, level: CheckLevel, kent: bool) -> CheckReport {
    run_checks_with(chain, CheckSettings::for_level(level), level, kent)
}

pub fn run_checks_with(chain: &FlowChain, s: CheckSettings, level: CheckLevel, kent: bool) -> CheckReport {
    let mut report = CheckReport::default();
    report.push(match round_trip_error(chain, s.round_trip_points, s.seed) {
        Ok((err, norm)) => CheckLine::new(
            "round trip",
            err < s.round_trip_tol && norm < 1e-12,
            format!("max |inverse(forward(x)) - x| = {err:.3e} over {} points, max norm deviation {norm:.1e}", s.round_trip_points),
        ),
        Err(e) => CheckLine::error("round trip", e),
    });
    report.push(sample_consistency(chain, s.round_trip_points, s.seed));
    report.push(match mc_normalization(chain, s.mc_samples, s.seed) {
        Ok(m) => CheckLine::new(
            "normalization (mc)",
            m.within(3.0) && m.ess >= 100.0,
            format!(
                "integral {:.6} ± {:.2e} ({} proposal, ESS {:.0})",
                m.integral,
                m.std_error,
                if m.importance { "vMF-mixture" } else { "uniform" },
                m.ess
            ),
        ),
        Err(e) => CheckLine::error("normalization (mc)", e),
    });
    if level == CheckLevel::Full && chain.dim() == 3 {
        let max_kappa = chain.layers().iter().filter_map(zoom_of).map(FisherZoom::kappa).fold(0.0, f64::max);
        report.push(if max_kappa > 1e3 {
            CheckLine::skip("normalization (grid)", format!("kappa {max_kappa} > 1e3 is below grid resolution"))
        } else {
            match DensityGrid::evaluate(chain, 720) {
                Ok(g) => {
                    let i = g.integral();
                    CheckLine::new("normalization (grid)", (i - 1.0).abs() < 1e-3, format!("integral {i:.8} on 720x1440"))
                }
                Err(e) => CheckLine::error("normalization (grid)", e),
            }
        });
    }
    match jacobian_oracle_errors(chain, s.jacobian_points, s.seed) {
        Ok(errs) if errs.is_empty() => report.push(CheckLine::skip("jacobian oracle", "no layers".into())),
        Ok(errs) => {
            for (i, kind, e) in errs {
                report.push(CheckLine::new(
                    &format!("jacobian oracle [{i}] {kind}"),
                    e < s.jacobian_rel_tol,
                    format!("max rel err {e:.3e} over {} points", s.jacobian_points),
                ));
            }
        }
        Err(e) => report.push(CheckLine::error("jacobian oracle", e)),
    }
    if kent {
        report.push(kent_constraint_check(chain));
        if level == CheckLevel::Full {
            report.push(kent_tangent_check(chain));
        }
    }
    report
}

fn zoom_of(l: &LayerSpec) -> Option<&FisherZoom> {
    match l {
        LayerSpec::Zoom(z) => Some(z),
        _ => None,
    }
}

fn sample_consistency(chain: &FlowChain, n: usize, seed: u64) -> CheckLine {
    let name = "sample/log_prob";
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA11CE);
    let draws = match chain.sample(&mut rng, n) {
        Ok(d) => d,
        Err(e) => return CheckLine::error(name, e),
    };
    let mut worst = 0.0f64;
    for (x, lp) in &draws {
        match chain.log_prob(x) {
            Ok(v) => worst = worst.max((v - lp).abs() / lp.abs().max(1.0)),
            Err(e) => return CheckLine::error(name, e),
        }
    }
    CheckLine::new(name, worst < 1e-9, format!("max |log_prob - sampled logp| = {worst:.3e} (relative above 1)"))
}
