//! The Fisher-zoom layer: an axially symmetric diffeomorphism of the sphere
//! that pushes the uniform distribution onto the von Mises–Fisher
//! distribution with mean `e_D`.
//!
//! The layer acts only on the last coordinate, through
//! `h = F_κ⁻¹ ∘ U`, where `U` and `F_κ` are the CDFs of `x_D` under the
//! uniform and vMF distributions. Everything near `x_D = ±1` is carried as
//! the pair `((1 + t)/2, (1 - t)/2)` and its logs, which keeps full relative
//! precision in both polar caps.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZlpError};
use crate::sphere::{ln_surface_volume, renormalize, SpherePoint};
use crate::special::quadrature::{log_integral, peak_breakpoints};
use crate::special::{
    ln_binomial_row, ln_expm1, ln_gamma, ln_reg_inc_beta_pair, log1m_exp, log_add_exp, log_bessel_i_scaled,
    log_kummer_1f1_scaled, sigmoid, softplus, solve_increasing, LogitNewtonConfig,
};

/// A coordinate `t ∈ [-1, 1]` stored through `lo = (1 + t)/2` and
/// `hi = (1 - t)/2` together with their logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisCoord {
    pub lo: f64,
    pub hi: f64,
    pub ln_lo: f64,
    pub ln_hi: f64,
}

impl AxisCoord {
    pub fn from_t(t: f64) -> Self {
        Self::from_lo_hi(0.5 * (1.0 + t), 0.5 * (1.0 - t))
    }

    /// Builds from a sphere point's coordinates, using
    /// `1 ∓ x_D = r² / (1 ± x_D)` with `r² = Σ_{i<D} x_i²` for the small side.
    pub fn from_point(x: &[f64]) -> Self {
        let d = x.len();
        let xd = x[d - 1];
        let r2: f64 = x[..d - 1].iter().map(|v| v * v).sum();
        if xd >= 0.0 {
            let hi = r2 / (2.0 * (1.0 + xd));
            Self::from_lo_hi(1.0 - hi, hi)
        } else {
            let lo = r2 / (2.0 * (1.0 - xd));
            Self::from_lo_hi(lo, 1.0 - lo)
        }
    }

    /// `lo` and `hi` should sum to one; the smaller of the two is trusted.
    pub fn from_lo_hi(lo: f64, hi: f64) -> Self {
        let (ln_lo, ln_hi) = if lo <= hi { (lo.ln(), (-lo).ln_1p()) } else { ((-hi).ln_1p(), hi.ln()) };
        Self { lo, hi, ln_lo, ln_hi }
    }

    /// From `w = ln(lo / hi)`.
    pub fn from_logit(w: f64) -> Self {
        Self { lo: sigmoid(w), hi: sigmoid(-w), ln_lo: -softplus(-w), ln_hi: -softplus(w) }
    }

    /// From `(ln lo, ln hi)` with `lo + hi = 1`.
    pub fn from_logs(ln_lo: f64, ln_hi: f64) -> Self {
        Self { lo: ln_lo.exp(), hi: ln_hi.exp(), ln_lo, ln_hi }
    }

    pub fn logit(&self) -> f64 {
        self.ln_lo - self.ln_hi
    }

    pub fn t(&self) -> f64 {
        if self.lo >= 0.5 {
            1.0 - 2.0 * self.hi
        } else {
            2.0 * self.lo - 1.0
        }
    }

    /// `ln(1 - t²) = ln 4 + ln lo + ln hi`.
    pub fn ln_one_minus_t2(&self) -> f64 {
        2.0 * std::f64::consts::LN_2 + self.ln_lo + self.ln_hi
    }

    fn is_pole(&self) -> bool {
        self.lo == 0.0 || self.hi == 0.0
    }
}

/// A CDF value held as `(ln P, ln(1 - P))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogCdf {
    pub ln_p: f64,
    pub ln_q: f64,
}

impl LogCdf {
    /// `P`, taken from whichever tail is smaller so it stays in `[0, 1]`.
    pub fn p(&self) -> f64 {
        if self.ln_p <= self.ln_q {
            self.ln_p.exp().min(1.0)
        } else {
            (-self.ln_q.exp_m1()).clamp(0.0, 1.0)
        }
    }

    pub fn logit(&self) -> f64 {
        self.ln_p - self.ln_q
    }

    fn from_ln_p(ln_p: f64) -> Self {
        Self { ln_p, ln_q: log1m_exp(ln_p.min(0.0)) }
    }

    fn from_ln_q(ln_q: f64) -> Self {
        Self { ln_p: log1m_exp(ln_q.min(0.0)), ln_q }
    }
}

/// Concentration and dimension of a Fisher-zoom layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoomParams {
    pub kappa: f64,
    pub dim: usize,
}

impl ZoomParams {
    pub fn new(kappa: f64, dim: usize) -> Result<Self> {
        let p = Self { kappa, dim };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(ZlpError::Domain(format!("dimension must be >= 2, got {}", self.dim)));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(ZlpError::Domain(format!("kappa must be finite and > 0, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// How `F_κ` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZoomMethod {
    /// Closed form for `D = 3`, finite sums for other odd `D`, quadrature
    /// for even `D`.
    #[default]
    Auto,
    ClosedForm,
    FiniteSum,
    Quadrature,
}

const QUAD_RTOL: f64 = 1e-13;

/// A Fisher-zoom layer with its normalizing constants precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherZoom {
    params: ZoomParams,
    method: ZoomMethod,
    newton: LogitNewtonConfig,
    /// `(D - 3) / 2`
    m: f64,
    ln_cu: f64,
    /// `ln(e^{-κ} Z)` with `Z = ∫ e^{κt}(1 - t²)^m dt`.
    ln_z_scaled: f64,
    /// `ln(e^{-2κ} 1F1(A; 2A; 2κ))`, odd `D` only.
    ln_norm_1f1: f64,
    mode_theta: f64,
    mode_width: f64,
    /// `ln C(D - 2, i)`, odd `D` only.
    ln_binom: Vec<f64>,
}

impl FisherZoom {
    pub fn new(params: ZoomParams) -> Result<Self> {
        Self::with_method(params, ZoomMethod::Auto)
    }

    pub fn with_method(params: ZoomParams, method: ZoomMethod) -> Result<Self> {
        params.validate()?;
        let d = params.dim;
        let kappa = params.kappa;
        let odd = d % 2 == 1;
        let method = match method {
            ZoomMethod::Auto if d == 3 => ZoomMethod::ClosedForm,
            ZoomMethod::Auto if odd => ZoomMethod::FiniteSum,
            ZoomMethod::Auto => ZoomMethod::Quadrature,
            ZoomMethod::ClosedForm if d != 3 => {
                return Err(ZlpError::Domain("closed-form zoom exists only for D = 3".into()));
            }
            ZoomMethod::FiniteSum if !odd => {
                return Err(ZlpError::Domain("finite-sum zoom needs odd D".into()));
            }
            m => m,
        };
        let df = d as f64;
        let nu = 0.5 * df - 1.0;
        let half_pi_ln = 0.5 * std::f64::consts::PI.ln();
        let ln_cu = ln_gamma(0.5 * df) - ln_gamma(0.5 * (df - 1.0)) - half_pi_ln;
        let ln_z_scaled =
            log_bessel_i_scaled(nu, kappa)? + half_pi_ln + ln_gamma(0.5 * (df - 1.0)) + nu * (2.0 / kappa).ln();
        let ln_norm_1f1 = if odd && d > 2 {
            let a = 0.5 * (df - 1.0);
            log_kummer_1f1_scaled(a, 2.0 * a, 2.0 * kappa)?
        } else {
            f64::NAN
        };
        let (mode_theta, mode_width) = theta_mode(df, kappa);
        Ok(Self {
            params,
            method,
            newton: LogitNewtonConfig::default(),
            m: 0.5 * (df - 3.0),
            ln_cu,
            ln_z_scaled,
            ln_norm_1f1,
            mode_theta,
            mode_width,
            ln_binom: if odd { ln_binomial_row((d - 2) as u32) } else { Vec::new() },
        })
    }

    pub fn with_newton(mut self, cfg: LogitNewtonConfig) -> Result<Self> {
        cfg.validate()?;
        self.newton = cfg;
        Ok(self)
    }

    pub fn params(&self) -> ZoomParams {
        self.params
    }

    pub fn kappa(&self) -> f64 {
        self.params.kappa
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn method(&self) -> ZoomMethod {
        self.method
    }

    /// `ln U'(t)`, the log density of `x_D` under the uniform distribution.
    pub fn ln_u_density(&self, a: &AxisCoord) -> f64 {
        self.ln_cu + self.m * a.ln_one_minus_t2()
    }

    /// `ln F_κ'(t)`, the log density of `x_D` under the vMF distribution.
    pub fn ln_f_density(&self, a: &AxisCoord) -> f64 {
        self.kappa_t_minus_kappa(a) - self.ln_z_scaled + self.m * a.ln_one_minus_t2()
    }

    /// `κ(t - 1)` without cancellation near the pole.
    fn kappa_t_minus_kappa(&self, a: &AxisCoord) -> f64 {
        -2.0 * self.params.kappa * a.hi
    }

    pub fn u_cdf(&self, a: &AxisCoord) -> Result<LogCdf> {
        if a.lo == 0.0 {
            return Ok(LogCdf { ln_p: f64::NEG_INFINITY, ln_q: 0.0 });
        }
        if a.hi == 0.0 {
            return Ok(LogCdf { ln_p: 0.0, ln_q: f64::NEG_INFINITY });
        }
        let d = self.params.dim;
        if d == 3 {
            return Ok(LogCdf { ln_p: a.ln_lo, ln_q: a.ln_hi });
        }
        if d % 2 == 1 {
            let n = (d - 2) as u32;
            let big_a = ((d - 1) / 2) as u32;
            let sum = |ln_y: f64, ln_yc: f64| {
                let terms: Vec<f64> = (big_a..=n)
                    .map(|i| self.ln_binom[i as usize] + i as f64 * ln_y + (n - i) as f64 * ln_yc)
                    .collect();
                crate::special::log_sum_exp(&terms)
            };
            // 1 - U(t) = U(-t)
            return Ok(LogCdf { ln_p: sum(a.ln_lo, a.ln_hi), ln_q: sum(a.ln_hi, a.ln_lo) });
        }
        let half = 0.5 * (d as f64 - 1.0);
        Ok(LogCdf {
            ln_p: ln_reg_inc_beta_pair(a.lo, a.hi, half, half)?,
            ln_q: ln_reg_inc_beta_pair(a.hi, a.lo, half, half)?,
        })
    }

    pub fn f_cdf(&self, a: &AxisCoord) -> Result<LogCdf> {
        if a.lo == 0.0 {
            return Ok(LogCdf { ln_p: f64::NEG_INFINITY, ln_q: 0.0 });
        }
        if a.hi == 0.0 {
            return Ok(LogCdf { ln_p: 0.0, ln_q: f64::NEG_INFINITY });
        }
        match self.method {
            ZoomMethod::ClosedForm => Ok(self.f_closed_form(a)),
            ZoomMethod::FiniteSum => self.f_finite_sum(a),
            _ => self.f_quadrature(a),
        }
    }

    /// `F = (e^{2κ lo} - 1) / (e^{2κ} - 1)` at `D = 3`.
    fn f_closed_form(&self, a: &AxisCoord) -> LogCdf {
        let k2 = 2.0 * self.params.kappa;
        let l1m = |x: f64| log1m_exp(-x);
        let denom = l1m(k2);
        LogCdf {
            ln_p: -k2 * a.hi + l1m(k2 * a.lo) - denom,
            ln_q: -k2 * a.hi + ln_expm1(k2 * a.hi) - denom,
        }
    }

    /// Binomial sums with `1F1` weights. The complement uses the same sum at
    /// `-κ, -t` after Kummer's transformation, so every term is positive.
    fn f_finite_sum(&self, a: &AxisCoord) -> Result<LogCdf> {
        let d = self.params.dim;
        let kappa = self.params.kappa;
        let n = (d - 2) as u32;
        let big_a = ((d - 1) / 2) as u32;
        let af = big_a as f64;
        let mut lower = Vec::with_capacity((n - big_a + 1) as usize);
        let mut upper = Vec::with_capacity(lower.capacity());
        for i in big_a..=n {
            let b = i as f64 + 1.0;
            let c = self.ln_binom[i as usize];
            lower.push(
                c + i as f64 * a.ln_lo + (n - i) as f64 * a.ln_hi + log_kummer_1f1_scaled(af, b, 2.0 * kappa * a.lo)?,
            );
            upper.push(
                c + i as f64 * a.ln_hi
                    + (n - i) as f64 * a.ln_lo
                    + log_kummer_1f1_scaled(b - af, b, 2.0 * kappa * a.hi)?,
            );
        }
        let ln_p = crate::special::log_sum_exp(&lower) - self.ln_norm_1f1 - 2.0 * kappa * a.hi;
        let ln_q = crate::special::log_sum_exp(&upper) - self.ln_norm_1f1;
        Ok(LogCdf { ln_p: ln_p.min(0.0), ln_q: ln_q.min(0.0) })
    }

    /// Integrates over colatitude `θ` with `t = cos θ`. Only the side not
    /// containing the mode is integrated; the other follows from `log1p`.
    fn f_quadrature(&self, a: &AxisCoord) -> Result<LogCdf> {
        let kappa = self.params.kappa;
        let dm2 = self.params.dim as f64 - 2.0;
        // log integrand with the e^{κ} factor removed
        let g = move |theta: f64| {
            let s = (0.5 * theta).sin();
            let base = -2.0 * kappa * s * s;
            if dm2 == 0.0 {
                base
            } else {
                base + dm2 * theta.sin().ln()
            }
        };
        let theta_t = if a.hi <= 0.5 {
            2.0 * a.hi.sqrt().asin()
        } else {
            std::f64::consts::PI - 2.0 * a.lo.sqrt().asin()
        };
        let (lo_end, hi_end, upper_side) = if theta_t < self.mode_theta {
            (0.0, theta_t, true)
        } else {
            (theta_t, std::f64::consts::PI, false)
        };
        let peak = self.mode_theta.clamp(lo_end, hi_end);
        let mut width = self.mode_width;
        if peak != self.mode_theta {
            let slope = -kappa * peak.sin() + dm2 * peak.cos() / peak.sin();
            if slope.abs() > 0.0 && slope.is_finite() {
                width = width.min(1.0 / slope.abs());
            }
            width = width.min(hi_end - lo_end);
        }
        let cuts = peak_breakpoints(peak, width, lo_end, hi_end);
        let g_peak = g(peak);
        // the log integrand is only known to about ε |g|, so no tighter than that
        let rtol = QUAD_RTOL.max(64.0 * f64::EPSILON * (1.0 + g_peak.abs()));
        let ln_side = log_integral(g, lo_end, hi_end, g_peak, &cuts, rtol)? - self.ln_z_scaled;
        let ln_side = ln_side.min(0.0);
        Ok(if upper_side { LogCdf::from_ln_q(ln_side) } else { LogCdf::from_ln_p(ln_side) })
    }

    /// `d logit P / dw` for a CDF with log density `ln_dens` at `a`.
    fn logit_slope(ln_dens: f64, a: &AxisCoord, cdf: &LogCdf) -> f64 {
        (ln_dens + std::f64::consts::LN_2 + a.ln_lo + a.ln_hi - cdf.ln_p - cdf.ln_q).exp()
    }

    /// `h(x_D)` on axis coordinates.
    pub fn h_forward_coord(&self, a: &AxisCoord) -> Result<AxisCoord> {
        if a.is_pole() {
            return Ok(*a);
        }
        let u = self.u_cdf(a)?;
        if self.method == ZoomMethod::ClosedForm {
            return Ok(self.closed_form_forward(&u));
        }
        let target = u.logit();
        let w0 = self.forward_initial_guess(a);
        let w = solve_increasing(
            |w| {
                let c = AxisCoord::from_logit(w);
                let f = self.f_cdf(&c)?;
                Ok((f.logit(), Self::logit_slope(self.ln_f_density(&c), &c, &f)))
            },
            target,
            w0,
            &self.newton,
        )?;
        Ok(AxisCoord::from_logit(w))
    }

    /// Inverts `F(s) = y` at `D = 3` in closed form.
    fn closed_form_forward(&self, y: &LogCdf) -> AxisCoord {
        let k2 = 2.0 * self.params.kappa;
        let lo = softplus(y.ln_p + ln_expm1(k2)) / k2;
        let hi = -log_add_exp(y.ln_p, y.ln_q - k2) / k2;
        if lo <= hi {
            AxisCoord::from_lo_hi(lo, 1.0 - lo)
        } else {
            AxisCoord::from_lo_hi(1.0 - hi, hi)
        }
    }

    fn forward_initial_guess(&self, a: &AxisCoord) -> f64 {
        let d = self.params.dim as f64;
        let kappa = self.params.kappa;
        if kappa < d {
            return a.logit();
        }
        // the vMF marginal concentrates at 1 - t ≈ (D - 1) / (2κ)
        let hi0 = ((d - 1.0) / (4.0 * kappa)).min(0.5);
        (1.0 - hi0).ln() - hi0.ln()
    }

    /// `h⁻¹(z)` on axis coordinates.
    pub fn h_inverse_coord(&self, z: &AxisCoord) -> Result<AxisCoord> {
        if z.is_pole() {
            return Ok(*z);
        }
        let f = self.f_cdf(z)?;
        if self.params.dim == 3 {
            return Ok(AxisCoord::from_logs(f.ln_p, f.ln_q));
        }
        let target = f.logit();
        let w = solve_increasing(
            |w| {
                let c = AxisCoord::from_logit(w);
                let u = self.u_cdf(&c)?;
                Ok((u.logit(), Self::logit_slope(self.ln_u_density(&c), &c, &u)))
            },
            target,
            target / (self.m + 1.0),
            &self.newton,
        )?;
        Ok(AxisCoord::from_logit(w))
    }

    /// `ln` of the forward density update at an input whose image has axis
    /// coordinate `out`. Equal to `ln h' + m ln((1 - h²)/(1 - x_D²))`, which
    /// collapses to `ln c_U - ln c_F - κ h` since both marginal densities
    /// carry the same `(1 - t²)^m` factor.
    pub fn ln_update_from_output(&self, out: &AxisCoord) -> f64 {
        self.ln_cu + self.ln_z_scaled + 2.0 * self.params.kappa * out.hi
    }

    /// `ln h'(x_D) + m ln((1 - h²)/(1 - x_D²))`; continuous up to the poles.
    pub fn log_density_update(&self, a: &AxisCoord) -> Result<f64> {
        Ok(self.ln_update_from_output(&self.h_forward_coord(a)?))
    }

    /// `h'(x_D) = U'(x_D) / F_κ'(h(x_D))`.
    pub fn h_derivative(&self, a: &AxisCoord) -> Result<f64> {
        let h = self.h_forward_coord(a)?;
        if a.is_pole() {
            // both densities vanish like (1 - t²)^m; the ratio of prefactors remains
            let ln = self.ln_update_from_output(&h);
            return Ok(ln.exp());
        }
        Ok((self.ln_u_density(a) - self.ln_f_density(&h)).exp())
    }

    /// Log density of the vMF marginal pushed through this layer, i.e. the
    /// contribution `-ln J` for an output point `z`.
    pub fn ln_inverse_update(&self, z: &[f64]) -> f64 {
        -self.ln_update_from_output(&AxisCoord::from_point(z))
    }

    pub fn forward_in_place(&self, x: &mut [f64]) -> Result<()> {
        let a = AxisCoord::from_point(x);
        if a.is_pole() {
            return Ok(());
        }
        let h = self.h_forward_coord(&a)?;
        move_along_meridian(x, &a, &h);
        Ok(())
    }

    pub fn inverse_in_place(&self, z: &mut [f64]) -> Result<()> {
        let a = AxisCoord::from_point(z);
        if a.is_pole() {
            return Ok(());
        }
        let x = self.h_inverse_coord(&a)?;
        move_along_meridian(z, &a, &x);
        Ok(())
    }

    pub fn forward(&self, x: &SpherePoint) -> Result<SpherePoint> {
        self.check_dim(x)?;
        let mut v = x.coords().to_vec();
        self.forward_in_place(&mut v)?;
        Ok(SpherePoint::from_raw(v))
    }

    pub fn inverse(&self, z: &SpherePoint) -> Result<SpherePoint> {
        self.check_dim(z)?;
        let mut v = z.coords().to_vec();
        self.inverse_in_place(&mut v)?;
        Ok(SpherePoint::from_raw(v))
    }

    fn check_dim(&self, x: &SpherePoint) -> Result<()> {
        if x.dim() != self.params.dim {
            return Err(ZlpError::DimensionMismatch { expected: self.params.dim, found: x.dim() });
        }
        Ok(())
    }
}

/// Replace the axis coordinate `from` by `to`, scaling the others by
/// `√((1 - h²)/(1 - x_D²))`.
fn move_along_meridian(x: &mut [f64], from: &AxisCoord, to: &AxisCoord) {
    let d = x.len();
    let scale = (0.5 * (to.ln_lo + to.ln_hi - from.ln_lo - from.ln_hi)).exp();
    x[..d - 1].iter_mut().for_each(|v| *v *= scale);
    x[d - 1] = to.t();
    renormalize(x);
}

/// Mode of `e^{κ cos θ} sin^{D-2} θ` and the curvature width there.
fn theta_mode(d: f64, kappa: f64) -> (f64, f64) {
    let dm2 = d - 2.0;
    // c = cos θ* solves κ c² + (D - 2) c - κ = 0
    let c = 2.0 * kappa / (dm2 + (dm2 * dm2 + 4.0 * kappa * kappa).sqrt());
    let sin2 = if kappa > 0.0 { dm2 * c / kappa } else { 1.0 };
    let theta = if c > 0.5 { sin2.sqrt().min(1.0).asin() } else { c.acos() };
    let curvature = kappa * c + if sin2 > 0.0 { dm2 / sin2 } else { 0.0 };
    let width = if curvature > 0.0 { (1.0 / curvature.sqrt()).min(std::f64::consts::PI) } else { std::f64::consts::PI };
    (theta, width)
}

/// `C / √κ`: the leading-order contraction of tangent coordinates at the pole
/// for large `κ`.
pub fn scaling_constant(dim: usize, kappa: f64) -> f64 {
    let d1 = dim as f64 - 1.0;
    let ln_c = (0.5 * d1 * (2.0 * std::f64::consts::PI).ln() - ln_surface_volume(dim)) / d1;
    (ln_c - 0.5 * kappa.ln()).exp()
}

fn check_t(t: f64) -> Result<AxisCoord> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(ZlpError::Domain(format!("axis coordinate {t} outside [-1, 1]")));
    }
    Ok(AxisCoord::from_t(t))
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(ZlpError::Domain(format!("dimension must be >= 2, got {dim}")));
    }
    Ok(())
}

/// CDF of `x_D` under the uniform distribution on `S^{D-1}`.
pub fn u_cdf(x_d: f64, dim: usize) -> Result<f64> {
    check_dim(dim)?;
    let a = check_t(x_d)?;
    // U does not depend on κ; any valid value works here
    Ok(FisherZoom::new(ZoomParams::new(1.0, dim)?)?.u_cdf(&a)?.p())
}

/// CDF of `x_D` under the vMF distribution with mean `e_D`.
pub fn f_cdf(x_d: f64, kappa: f64, dim: usize) -> Result<f64> {
    let a = check_t(x_d)?;
    Ok(FisherZoom::new(ZoomParams::new(kappa, dim)?)?.f_cdf(&a)?.p())
}

pub fn h_forward(x_d: f64, kappa: f64, dim: usize) -> Result<f64> {
    let a = check_t(x_d)?;
    Ok(FisherZoom::new(ZoomParams::new(kappa, dim)?)?.h_forward_coord(&a)?.t())
}

pub fn h_inverse(z: f64, kappa: f64, dim: usize) -> Result<f64> {
    let a = check_t(z)?;
    Ok(FisherZoom::new(ZoomParams::new(kappa, dim)?)?.h_inverse_coord(&a)?.t())
}

pub fn zoom_forward(x: &SpherePoint, p: ZoomParams) -> Result<SpherePoint> {
    FisherZoom::new(p)?.forward(x)
}

pub fn zoom_inverse(z: &SpherePoint, p: ZoomParams) -> Result<SpherePoint> {
    FisherZoom::new(p)?.inverse(z)
}

/// `ln h'(x_D) + ((D - 3)/2) ln((1 - h²)/(1 - x_D²))`.
pub fn zoom_log_density_update(x_d: f64, kappa: f64, dim: usize) -> Result<f64> {
    let a = check_t(x_d)?;
    FisherZoom::new(ZoomParams::new(kappa, dim)?)?.log_density_update(&a)
}
