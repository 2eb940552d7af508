//! Maximum-likelihood fitting of chain parameters to sphere samples.
//!
//! A [`Template`] is an ordered list of parameter slots, one per layer, that
//! maps an unconstrained real vector onto a valid [`FlowChain`]:
//!
//! | slot       | parameters              | transform                                     |
//! |------------|-------------------------|-----------------------------------------------|
//! | rotation   | `D(D-1)/2`              | `R = anchor · exp(c Ω)`, `Ω` skew             |
//! | zoom       | 1                       | `κ = exp(θ)`, clamped to `[1e-6, 1e7]`        |
//! | kent scale | `D-1` (1 for `(u,1/u)`) | `σ = exp(tanh(θ) ln σ_max(κ))`                |
//! | diagonal   | `D`                     | `s = exp(θ)`                                  |
//! | full       | `D + D(D-1)/2`          | `A = diag(e^θ) L Q_anchor`, `L` unit lower    |
//!
//! The loss is the mean negative log-likelihood; optimization is Adam (or
//! plain gradient descent) on central-difference gradients, with a cosine
//! learning-rate decay and best-seen tracking. The rotation step scale `c`
//! is `1/√κ₀` for data-driven starts, so that rotation parameters move in
//! units of the spread of the data rather than in radians.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chain::{FlowChain, LayerSpec};
use crate::error::{Result, ZlpError};
use crate::linear_project::{kent_constraint_interval, LinearProject, LpVariant};
use crate::preset::Family;
use crate::special::log_bessel_i_scaled;
pub use crate::sphere::random_rotation;
use crate::sphere::{skew_from_params, tangent_basis, uniform_log_density, Rotation, SpherePoint};
use crate::zoom::{FisherZoom, ZoomParams};

pub const KAPPA_MIN: f64 = 1e-6;
pub const KAPPA_MAX: f64 = 1e7;
/// Fits whose loss exceeds the uniform model's by this many nats abort.
pub const DIVERGENCE_NATS: f64 = 10.0;
const TANH_LIMIT: f64 = 1.0 - 1e-12;

/// One parametrized layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    Rotation { anchor: Rotation, scale: f64 },
    Zoom,
    /// Constrained scales whose interval is set by the next zoom slot.
    /// `reciprocal` selects the one-parameter `(u, 1/u)` form on the 2-sphere.
    KentScale { reciprocal: bool },
    Diagonal,
    Full { anchor: DMatrix<f64> },
}

/// Parameter layout for a chain; see the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    dim: usize,
    family: Option<Family>,
    slots: Vec<Slot>,
}

/// A decoded chain and whether any concentration hit its clamp.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub chain: FlowChain,
    pub kappa_capped: bool,
}

fn n_skew(dim: usize) -> usize {
    dim * (dim - 1) / 2
}

fn decode_kappa(theta: f64) -> (f64, bool) {
    let (lo, hi) = (KAPPA_MIN.ln(), KAPPA_MAX.ln());
    (theta.clamp(lo, hi).exp(), !(lo..=hi).contains(&theta))
}

impl Template {
    pub fn new(dim: usize, family: Option<Family>, slots: Vec<Slot>) -> Result<Self> {
        if dim < 2 {
            return Err(ZlpError::Domain(format!("dimension must be >= 2, got {dim}")));
        }
        for (i, s) in slots.iter().enumerate() {
            match s {
                Slot::KentScale { reciprocal } => {
                    if *reciprocal && dim != 3 {
                        return Err(ZlpError::Spec("the (u, 1/u) scale form needs D = 3".into()));
                    }
                    if !slots[i + 1..].iter().any(|t| matches!(t, Slot::Zoom)) {
                        return Err(ZlpError::Spec("a constrained scale slot must precede a zoom slot".into()));
                    }
                }
                Slot::Rotation { anchor, .. } if anchor.dim() != dim => {
                    return Err(ZlpError::DimensionMismatch { expected: dim, found: anchor.dim() })
                }
                Slot::Rotation { scale, .. } if !(*scale > 0.0) || !scale.is_finite() => {
                    return Err(ZlpError::Domain(format!("rotation step scale must be finite and > 0, got {scale}")))
                }
                Slot::Full { anchor } if anchor.nrows() != dim || anchor.ncols() != dim => {
                    return Err(ZlpError::DimensionMismatch { expected: dim, found: anchor.nrows() })
                }
                _ => {}
            }
        }
        Ok(Self { dim, family, slots })
    }

    /// Default layout for a family, with identity anchors. `blocks` is the
    /// number of `(R, Z, LP)` blocks for the generic family.
    pub fn for_family(family: Family, dim: usize, blocks: usize) -> Result<Self> {
        let rot = || Slot::Rotation { anchor: Rotation::identity(dim), scale: 1.0 };
        let full = || Slot::Full { anchor: DMatrix::identity(dim, dim) };
        let kent = Slot::KentScale { reciprocal: dim == 3 };
        let slots = match family {
            Family::Vmf => vec![rot(), Slot::Zoom],
            Family::Bingham => vec![rot(), Slot::Diagonal],
            Family::Fb4 => vec![rot(), Slot::Zoom, Slot::Diagonal],
            Family::Kent => vec![rot(), kent, Slot::Zoom],
            Family::Fb6 => vec![rot(), kent, Slot::Zoom, Slot::Diagonal],
            Family::Fb8 => vec![rot(), kent, Slot::Zoom, full()],
            Family::Generic => {
                if blocks == 0 {
                    return Err(ZlpError::Spec("generic template needs at least one block".into()));
                }
                (0..blocks).flat_map(|_| [rot(), Slot::Zoom, full()]).collect()
            }
        };
        Self::new(dim, Some(family), slots)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> Option<Family> {
        self.family
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    fn slot_len(&self, s: &Slot) -> usize {
        let d = self.dim;
        match s {
            Slot::Rotation { .. } => n_skew(d),
            Slot::Zoom => 1,
            Slot::KentScale { reciprocal: true } => 1,
            Slot::KentScale { reciprocal: false } => d - 1,
            Slot::Diagonal => d,
            Slot::Full { .. } => d + n_skew(d),
        }
    }

    /// Number of unconstrained parameters.
    pub fn len(&self) -> usize {
        self.slots.iter().map(|s| self.slot_len(s)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.slots.len());
        let mut k = 0;
        for s in &self.slots {
            out.push(k);
            k += self.slot_len(s);
        }
        out
    }

    /// Builds the chain described by `theta`.
    pub fn decode(&self, theta: &[f64]) -> Result<Decoded> {
        if theta.len() != self.len() {
            return Err(ZlpError::DimensionMismatch { expected: self.len(), found: theta.len() });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(ZlpError::Domain("non-finite parameter".into()));
        }
        let d = self.dim;
        let offsets = self.offsets();
        let mut kappas = vec![f64::NAN; self.slots.len()];
        let mut capped = false;
        for (i, s) in self.slots.iter().enumerate() {
            if matches!(s, Slot::Zoom) {
                let (k, c) = decode_kappa(theta[offsets[i]]);
                kappas[i] = k;
                capped |= c;
            }
        }
        let mut layers = Vec::with_capacity(self.slots.len());
        for (i, s) in self.slots.iter().enumerate() {
            let p = &theta[offsets[i]..offsets[i] + self.slot_len(s)];
            let layer = match s {
                Slot::Rotation { anchor, scale } => {
                    let scaled: Vec<f64> = p.iter().map(|v| v * scale).collect();
                    LayerSpec::Rotate(anchor.compose(&Rotation::from_skew_params(d, &scaled)?))
                }
                Slot::Zoom => LayerSpec::Zoom(FisherZoom::new(ZoomParams::new(kappas[i], d)?)?),
                Slot::KentScale { reciprocal } => {
                    let kappa = (i + 1..self.slots.len())
                        .find(|&j| matches!(self.slots[j], Slot::Zoom))
                        .map(|j| kappas[j])
                        .expect("checked at construction");
                    let (lo, hi) = kent_constraint_interval(kappa, d)?;
                    // at tiny kappa the interval is a few ulps around 1 and exp can round onto its ends
                    let inside = |s: f64| s.clamp(lo.next_up(), hi.next_down());
                    let sig = |t: f64| inside((hi.ln() * t.tanh().clamp(-TANH_LIMIT, TANH_LIMIT)).exp());
                    let sigmas = if *reciprocal {
                        let u = sig(p[0]);
                        vec![u, inside(1.0 / u)]
                    } else {
                        p.iter().map(|t| sig(*t)).collect()
                    };
                    LayerSpec::LinearProject(LinearProject::constrained_sc(&sigmas, kappa)?)
                }
                Slot::Diagonal => {
                    let scales: Vec<f64> = p.iter().map(|t| t.exp()).collect();
                    LayerSpec::LinearProject(LinearProject::diagonal(&scales)?)
                }
                Slot::Full { anchor } => {
                    let mut l = DMatrix::<f64>::identity(d, d);
                    let mut k = d;
                    for r in 0..d {
                        for c in 0..r {
                            l[(r, c)] = p[k];
                            k += 1;
                        }
                    }
                    let mean = p[..d].iter().sum::<f64>() / d as f64;
                    for r in 0..d {
                        l.row_mut(r).scale_mut((p[r] - mean).exp());
                    }
                    LayerSpec::LinearProject(LinearProject::full(l * anchor)?)
                }
            };
            layers.push(layer);
        }
        Ok(Decoded { chain: FlowChain::new(d, layers)?, kappa_capped: capped })
    }

    /// Template and parameters reproducing an existing chain. Rotation and
    /// full-matrix anchors are set from the chain, so their parameters
    /// start at zero and free.
    pub fn encode(chain: &FlowChain, family: Option<Family>) -> Result<(Self, Vec<f64>)> {
        let d = chain.dim();
        let layers = chain.layers();
        let mut slots = Vec::with_capacity(layers.len());
        let mut theta = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                LayerSpec::Rotate(r) => {
                    slots.push(Slot::Rotation { anchor: r.clone(), scale: 1.0 });
                    theta.extend(std::iter::repeat_n(0.0, n_skew(d)));
                }
                LayerSpec::Zoom(z) => {
                    slots.push(Slot::Zoom);
                    theta.push(z.kappa().ln());
                }
                LayerSpec::LinearProject(lp) => match lp.variant() {
                    LpVariant::ConstrainedSc => {
                        let kappa = lp.kappa().expect("constrained layers carry kappa");
                        let next_zoom = layers[i + 1..].iter().find_map(|l| match l {
                            LayerSpec::Zoom(z) => Some(z.kappa()),
                            _ => None,
                        });
                        if next_zoom != Some(kappa) {
                            return Err(ZlpError::Spec(
                                "constrained scales must be followed by a zoom of the same kappa".into(),
                            ));
                        }
                        let ln_hi = kent_constraint_interval(kappa, d)?.1.ln();
                        let s = lp.scales();
                        let reciprocal = d == 3 && (s[0] * s[1] - 1.0).abs() < 1e-12;
                        slots.push(Slot::KentScale { reciprocal });
                        let n = if reciprocal { 1 } else { d - 1 };
                        theta.extend(s[..n].iter().map(|v| (v.ln() / ln_hi).clamp(-TANH_LIMIT, TANH_LIMIT).atanh()));
                    }
                    LpVariant::DiagonalS => {
                        slots.push(Slot::Diagonal);
                        theta.extend(lp.scales().iter().map(|v| v.ln()));
                    }
                    LpVariant::Full => {
                        let (log_scales, lower, q) = lq_factors(lp.matrix());
                        slots.push(Slot::Full { anchor: q });
                        theta.extend(log_scales);
                        theta.extend(lower);
                    }
                },
            }
        }
        Ok((Self::new(d, family, slots)?, theta))
    }

    fn set_rotation(&mut self, slot: usize, anchor: Rotation, scale: f64) {
        if let Slot::Rotation { anchor: a, scale: c } = &mut self.slots[slot] {
            *a = anchor;
            *c = scale;
        }
    }
}

/// `A = diag(e^s) L Q` with `L` unit lower triangular and `Q` orthogonal.
fn lq_factors(a: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>, DMatrix<f64>) {
    let d = a.nrows();
    let qr = a.transpose().qr();
    let mut l = qr.r().transpose();
    let mut q = qr.q().transpose();
    for i in 0..d {
        if l[(i, i)] < 0.0 {
            l.column_mut(i).neg_mut();
            q.row_mut(i).neg_mut();
        }
    }
    let log_scales: Vec<f64> = (0..d).map(|i| l[(i, i)].ln()).collect();
    let mut lower = Vec::with_capacity(n_skew(d));
    for r in 0..d {
        for c in 0..r {
            lower.push(l[(r, c)] / l[(r, r)]);
        }
    }
    (log_scales, lower, q)
}

fn check_samples(samples: &[SpherePoint], dim: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(ZlpError::Domain("at least one sample is required".into()));
    }
    if let Some(p) = samples.iter().find(|p| p.dim() != dim) {
        return Err(ZlpError::DimensionMismatch { expected: dim, found: p.dim() });
    }
    Ok(())
}

/// Mean negative log-likelihood of a chain. The sum is taken in sample
/// order, so the result does not depend on the thread count.
pub fn nll_chain(chain: &FlowChain, samples: &[SpherePoint]) -> Result<f64> {
    check_samples(samples, chain.dim())?;
    let lp = chain.log_prob_batch(samples)?;
    Ok(-lp.iter().sum::<f64>() / samples.len() as f64)
}

pub fn nll(template: &Template, theta: &[f64], samples: &[SpherePoint]) -> Result<f64> {
    nll_chain(&template.decode(theta)?.chain, samples)
}

/// Central-difference gradient of [`nll`].
pub fn numeric_gradient(template: &Template, theta: &[f64], samples: &[SpherePoint], step: f64) -> Result<Vec<f64>> {
    let mut t = theta.to_vec();
    let mut g = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        t[k] = theta[k] + step;
        let plus = nll(template, &t, samples)?;
        t[k] = theta[k] - step;
        let minus = nll(template, &t, samples)?;
        t[k] = theta[k];
        g.push((plus - minus) / (2.0 * step));
    }
    Ok(g)
}

/// Exact gradient of [`nll`] where a closed form is implemented: chains of
/// rotations only (zero gradient) and `[rotation, zoom]` / `[zoom]`, the
/// von Mises–Fisher case. Returns `None` for other layouts.
pub fn analytic_gradient(template: &Template, theta: &[f64], samples: &[SpherePoint]) -> Option<Result<Vec<f64>>> {
    if template.slots.iter().all(|s| matches!(s, Slot::Rotation { .. })) {
        return Some(Ok(vec![0.0; template.len()]));
    }
    let (anchor, scale, skew_len) = match template.slots.as_slice() {
        [Slot::Zoom] => (None, 1.0, 0),
        [Slot::Rotation { anchor, scale }, Slot::Zoom] => (Some(anchor), *scale, n_skew(template.dim)),
        _ => return None,
    };
    Some(vmf_gradient(template.dim, anchor, scale, &theta[..skew_len], theta[skew_len], samples))
}

/// NLL = `-ln C_D(κ) - κ μ·x̄`, with `d ln C_D / dκ = -I_{D/2}(κ) / I_{D/2-1}(κ)`.
fn vmf_gradient(
    dim: usize,
    anchor: Option<&Rotation>,
    scale: f64,
    skew: &[f64],
    theta_k: f64,
    samples: &[SpherePoint],
) -> Result<Vec<f64>> {
    check_samples(samples, dim)?;
    let d = dim as f64;
    let mut mean = vec![0.0; dim];
    for p in samples {
        for (m, v) in mean.iter_mut().zip(p.coords()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= samples.len() as f64);
    let (kappa, capped) = decode_kappa(theta_k);
    let nu = d / 2.0 - 1.0;
    let a_d = (log_bessel_i_scaled(nu + 1.0, kappa)? - log_bessel_i_scaled(nu, kappa)?).exp();
    let anchor_m = anchor.map(|a| a.matrix().clone()).unwrap_or_else(|| DMatrix::identity(dim, dim));
    let omega = if skew.is_empty() { DMatrix::zeros(dim, dim) } else { skew_from_params(dim, skew)? * scale };
    let mu: Vec<f64> = (&anchor_m * omega.clone().exp()).column(dim - 1).iter().copied().collect();
    let mu_dot: f64 = mu.iter().zip(&mean).map(|(a, b)| a * b).sum();
    let mut grad = Vec::with_capacity(skew.len() + 1);
    // d exp(Ω + tG)/dt at t = 0 is the upper-right block of exp([[Ω, G], [0, Ω]]).
    let mut k = 0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            if k >= skew.len() {
                break;
            }
            let mut big = DMatrix::<f64>::zeros(2 * dim, 2 * dim);
            big.view_mut((0, 0), (dim, dim)).copy_from(&omega);
            big.view_mut((dim, dim), (dim, dim)).copy_from(&omega);
            big[(i, dim + j)] = 1.0;
            big[(j, dim + i)] = -1.0;
            let e = big.exp();
            let de = e.view((0, dim), (dim, dim)).into_owned();
            let dmu = &anchor_m * de.column(dim - 1);
            let dmu_dot: f64 = dmu.iter().zip(&mean).map(|(a, b)| a * b).sum();
            grad.push(-kappa * scale * dmu_dot);
            k += 1;
        }
    }
    grad.push(if capped { 0.0 } else { kappa * (a_d - mu_dot) });
    Ok(grad)
}

/// Largest `|g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|, 1e-3)`
/// over all coordinates; `None` if no analytic gradient exists for the
/// layout. An empty parameter vector gives `Some(0.0)`.
pub fn grad_check(template: &Template, theta: &[f64], samples: &[SpherePoint], step: f64) -> Result<Option<f64>> {
    if template.is_empty() {
        return Ok(Some(0.0));
    }
    let Some(analytic) = analytic_gradient(template, theta, samples) else {
        return Ok(None);
    };
    let analytic = analytic?;
    let numeric = numeric_gradient(template, theta, samples, step)?;
    Ok(Some(
        analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
            .fold(0.0, f64::max),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    GradientDescent,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GradientMode {
    CentralDifference { step: f64 },
    /// Closed-form gradients where implemented, central differences elsewhere.
    Analytic,
}

impl Default for GradientMode {
    fn default() -> Self {
        GradientMode::CentralDifference { step: 1e-5 }
    }
}

/// Optimizer settings. Every field has a default, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// The learning rate decays along a half cosine to this fraction of its
    /// initial value at the last iteration; 1 disables the decay.
    pub final_lr_fraction: f64,
    pub optimizer: Optimizer,
    pub gradient: GradientMode,
    pub seed: u64,
    /// Mini-batch size; `None` means full batch.
    pub batch_size: Option<usize>,
    /// Independent starts; `None` means 4 for the generic family, 1 otherwise.
    pub restarts: Option<usize>,
    /// Number of `(R, Z, LP)` blocks for the generic family.
    pub generic_blocks: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 1e-2,
            final_lr_fraction: 0.01,
            optimizer: Optimizer::default(),
            gradient: GradientMode::default(),
            seed: 0,
            batch_size: None,
            restarts: None,
            generic_blocks: 3,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(ZlpError::Spec("iterations must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(ZlpError::Spec("learning_rate must be finite and > 0".into()));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(ZlpError::Spec("final_lr_fraction must be in (0, 1]".into()));
        }
        if let GradientMode::CentralDifference { step } = self.gradient {
            if !(1e-7..=1e-3).contains(&step) {
                return Err(ZlpError::Spec(format!("finite-difference step must be in [1e-7, 1e-3], got {step}")));
            }
        }
        if let Optimizer::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
                return Err(ZlpError::Spec("Adam needs beta1, beta2 in [0, 1) and epsilon > 0".into()));
            }
        }
        if self.batch_size == Some(0) || self.restarts == Some(0) || self.generic_blocks == 0 {
            return Err(ZlpError::Spec("batch_size, restarts and generic_blocks must be >= 1".into()));
        }
        Ok(())
    }

    fn learning_rate_at(&self, it: usize) -> f64 {
        if self.iterations < 2 {
            return self.learning_rate;
        }
        let s = it as f64 / (self.iterations - 1) as f64;
        let f = self.final_lr_fraction;
        self.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * s).cos()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub best: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub chain: FlowChain,
    pub template: Template,
    pub params: Vec<f64>,
    /// Best full-batch NLL.
    pub nll: f64,
    /// Loss trace of the winning start.
    pub trace: Vec<TraceRow>,
    /// Final NLL of every start, in start order.
    pub start_nlls: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Optimizes `theta0` under `template`. Returns the best-seen parameters.
pub fn fit_template(template: &Template, theta0: &[f64], samples: &[SpherePoint], cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    check_samples(samples, template.dim)?;
    let uniform = -uniform_log_density(template.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = theta0.to_vec();
    let n = theta.len();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut best = (f64::INFINITY, theta.clone());
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut batch = Vec::new();
    for it in 0..cfg.iterations {
        let data: &[SpherePoint] = match cfg.batch_size {
            Some(b) if b < samples.len() => {
                batch.clear();
                batch.extend(rand::seq::index::sample(&mut rng, samples.len(), b).into_iter().map(|i| samples[i].clone()));
                &batch
            }
            _ => samples,
        };
        // an optimizer step that leaves the representable range is divergence, not bad input
        let diverged = |e: ZlpError| ZlpError::Divergence(format!("iteration {it}: parameters left the valid range: {e}"));
        let loss = nll(template, &theta, data).map_err(diverged)?;
        if !loss.is_finite() || loss > uniform + DIVERGENCE_NATS {
            return Err(ZlpError::Divergence(format!(
                "iteration {it}: NLL {loss} is more than {DIVERGENCE_NATS} nats above the uniform model's {uniform}"
            )));
        }
        if loss < best.0 {
            best = (loss, theta.clone());
        }
        trace.push(TraceRow { iteration: it, loss, best: best.0 });
        if n == 0 {
            continue;
        }
        let grad = match cfg.gradient {
            GradientMode::CentralDifference { step } => numeric_gradient(template, &theta, data, step).map_err(diverged)?,
            GradientMode::Analytic => match analytic_gradient(template, &theta, data) {
                Some(g) => g.map_err(diverged)?,
                None => numeric_gradient(template, &theta, data, GradientMode::default().step()).map_err(diverged)?,
            },
        };
        let lr = cfg.learning_rate_at(it);
        match cfg.optimizer {
            Optimizer::GradientDescent => {
                theta.iter_mut().zip(&grad).for_each(|(t, g)| *t -= lr * g);
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let t = (it + 1) as i32;
                let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                for k in 0..n {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
                    theta[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + epsilon);
                }
            }
        }
    }
    // The last update has not been scored yet.
    if let Ok(loss) = nll(template, &theta, samples) {
        if loss < best.0 && cfg.batch_size.is_none() {
            best = (loss, theta.clone());
        }
    }
    let decoded = template.decode(&best.1)?;
    let full = nll_chain(&decoded.chain, samples)?;
    let mut warnings = Vec::new();
    if decoded.kappa_capped {
        warnings.push(format!(
            "a concentration reached the transform limit [{KAPPA_MIN:e}, {KAPPA_MAX:e}] and was clamped; the data may be degenerate"
        ));
    }
    Ok(FitResult {
        chain: decoded.chain,
        template: template.clone(),
        params: best.1,
        nll: full,
        trace,
        start_nlls: vec![full],
        warnings,
    })
}

impl GradientMode {
    fn step(&self) -> f64 {
        match self {
            GradientMode::CentralDifference { step } => *step,
            GradientMode::Analytic => 1e-5,
        }
    }
}

/// Frame whose last column is the sample mean direction (or the principal
/// axis when there is no zoom) and whose other columns follow the scatter.
fn data_frame(samples: &[SpherePoint], dim: usize, mean_oriented: bool) -> Result<(Rotation, f64)> {
    let nf = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut scatter = DMatrix::<f64>::zeros(dim, dim);
    for p in samples {
        let x = p.coords();
        for i in 0..dim {
            mean[i] += x[i] / nf;
            for j in 0..dim {
                scatter[(i, j)] += x[i] * x[j] / nf;
            }
        }
    }
    let r_bar = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut frame = DMatrix::<f64>::zeros(dim, dim);
    if mean_oriented {
        let mu = if r_bar > 1e-12 { SpherePoint::normalize(mean)? } else { SpherePoint::north_pole(dim) };
        let b = tangent_basis(&mu);
        let eig = (b.transpose() * &scatter * &b).symmetric_eigen();
        let mut order: Vec<usize> = (0..dim - 1).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
        for (col, &k) in order.iter().enumerate() {
            frame.set_column(col, &(&b * eig.eigenvectors.column(k)));
        }
        frame.set_column(dim - 1, &mu.to_dvector());
    } else {
        let eig = scatter.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
        for (col, &k) in order.iter().enumerate() {
            frame.set_column(col, &eig.eigenvectors.column(k));
        }
    }
    if frame.determinant() < 0.0 {
        frame.column_mut(0).neg_mut();
    }
    let d = dim as f64;
    let kappa0 = if r_bar >= 1.0 - 1e-12 { 1e5 } else { (r_bar * (d - r_bar * r_bar) / (1.0 - r_bar * r_bar)).clamp(1e-3, 1e5) };
    Ok((Rotation::orthonormalized(frame)?, kappa0))
}

/// Initial template and parameters for one start. Start 0 is fully data
/// driven; later starts perturb the orientation (or, for the generic family,
/// draw all block orientations at random).
pub fn initial_guess(family: Family, samples: &[SpherePoint], cfg: &FitConfig, start: usize) -> Result<(Template, Vec<f64>)> {
    let dim = samples.first().ok_or_else(|| ZlpError::Domain("at least one sample is required".into()))?.dim();
    check_samples(samples, dim)?;
    let mut template = Template::for_family(family, dim, cfg.generic_blocks)?;
    let mut theta = vec![0.0; template.len()];
    let has_zoom = template.slots.iter().any(|s| matches!(s, Slot::Zoom));
    let (frame, kappa0) = data_frame(samples, dim, has_zoom)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (start as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let offsets = template.offsets();
    let mut first_zoom = true;
    for i in 0..template.slots.len() {
        match template.slots[i] {
            Slot::Zoom => {
                theta[offsets[i]] = if first_zoom { kappa0.ln() } else { 0.0 };
                first_zoom = false;
            }
            Slot::Rotation { .. } => {
                if family == Family::Generic && (start > 0 || i > 0) {
                    template.set_rotation(i, random_rotation(&mut rng, dim), 1.0);
                    continue;
                }
                let anchor = if start > 0 {
                    let jitter: Vec<f64> = (0..n_skew(dim)).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
                    frame.compose(&Rotation::from_skew_params(dim, &jitter)?)
                } else {
                    frame.clone()
                };
                let scale = if has_zoom { 1.0 / kappa0.max(1.0).sqrt() } else { 1.0 };
                template.set_rotation(i, anchor, scale);
            }
            _ => {}
        }
    }
    Ok((template, theta))
}

/// Fits a family to samples with multi-start; the best final NLL wins.
pub fn fit(family: Family, samples: &[SpherePoint], cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let starts = cfg.restarts.unwrap_or(if family == Family::Generic { 4 } else { 1 });
    let run = |k: usize| -> Result<FitResult> {
        let (template, theta0) = initial_guess(family, samples, cfg, k)?;
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add(k as u64);
        fit_template(&template, &theta0, samples, &c)
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<FitResult>> = {
        use rayon::prelude::*;
        (0..starts).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<FitResult>> = (0..starts).map(run).collect();

    let start_nlls: Vec<f64> = results.iter().map(|r| r.as_ref().map(|f| f.nll).unwrap_or(f64::NAN)).collect();
    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.nll < b.nll) {
                    best = Some(f);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(mut b) => {
            b.start_nlls = start_nlls;
            if let Some(e) = first_err {
                b.warnings.push(format!("a start failed: {e}"));
            }
            Ok(b)
        }
        None => Err(first_err.expect("at least one start")),
    }
}
