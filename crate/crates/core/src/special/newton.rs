use serde::{Deserialize, Serialize};

use crate::error::{Result, ZlpError};

/// Largest logit coordinate the solver visits. Beyond about 745 the
/// probabilities themselves underflow, but callers that carry `ln p` and
/// `ln(1 - p)` still resolve points there.
pub const LOGIT_BOUND: f64 = 1500.0;

/// Settings for Newton iterations on logit-transformed CDFs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitNewtonConfig {
    pub max_iterations: usize,
    /// Residual tolerance in logit units, relative to `max(1, |target|)`.
    pub tolerance: f64,
    pub bisection_fallback: bool,
}

impl Default for LogitNewtonConfig {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-12, bisection_fallback: true }
    }
}

impl LogitNewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(ZlpError::Domain("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(ZlpError::Domain("tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// Solve `g(w) = target` for a strictly increasing `g` on
/// `[-LOGIT_BOUND, LOGIT_BOUND]`. `g` returns its value and derivative.
///
/// Newton steps that leave the current bracket (or have a non-positive
/// derivative) are replaced by bisection when enabled.
pub fn solve_increasing<G>(mut g: G, target: f64, w0: f64, cfg: &LogitNewtonConfig) -> Result<f64>
where
    G: FnMut(f64) -> Result<(f64, f64)>,
{
    if target.is_nan() {
        return Err(ZlpError::Domain("NaN target in logit Newton".into()));
    }
    let tol = cfg.tolerance * target.abs().max(1.0);
    let (mut lo, mut hi) = (-LOGIT_BOUND, LOGIT_BOUND);
    let mut w = w0.clamp(lo, hi);
    let mut last_residual = f64::INFINITY;
    for _ in 0..cfg.max_iterations {
        let (value, slope) = g(w)?;
        if value.is_nan() {
            return Err(ZlpError::Domain(format!("monotone map returned NaN at logit {w}")));
        }
        let residual = value - target;
        if residual.abs() <= tol {
            // one more step is nearly free and lands at evaluation noise
            let polished = w - residual / slope;
            let inside = slope > 0.0 && polished.is_finite() && polished >= lo && polished <= hi;
            return Ok(if inside { polished } else { w });
        }
        if residual < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        if hi - lo <= 4.0 * f64::EPSILON * w.abs().max(1.0) {
            return Ok(w);
        }
        let newton = w - residual / slope;
        let stalled = residual.abs() > 0.5 * last_residual;
        last_residual = residual.abs();
        let usable = slope > 0.0 && newton.is_finite() && newton > lo && newton < hi;
        w = if usable && !(stalled && cfg.bisection_fallback) {
            newton
        } else if cfg.bisection_fallback {
            0.5 * (lo + hi)
        } else {
            return Err(ZlpError::NonConvergence { what: "logit Newton (bracket violated)", iterations: 0 });
        };
    }
    Err(ZlpError::NonConvergence { what: "logit Newton", iterations: cfg.max_iterations })
}

/// Invert a strictly increasing CDF-like map `f: [-1, 1] -> [0, 1]` at
/// `target ∈ (0, 1)`, iterating on `logit(f)` over the logit coordinate
/// `w = ln((1 + t) / (1 - t))`.
///
/// The derivative is taken numerically, so this is the general-purpose entry
/// point; the flow layers use analytic derivatives internally.
pub fn invert_monotone_logit<F>(f: F, target: f64, cfg: &LogitNewtonConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    if !(target > 0.0 && target < 1.0) {
        return Err(ZlpError::Domain(format!("inversion target {target} must lie in (0, 1)")));
    }
    let logit = |p: f64| p.ln() - (-p).ln_1p();
    let t_of = |w: f64| (0.5 * w).tanh();
    let g = |w: f64| logit(f(t_of(w)));
    let solved = solve_increasing(
        |w| {
            let h = 1e-6 * w.abs().max(1.0);
            let v = g(w);
            let d = (g(w + h) - g(w - h)) / (2.0 * h);
            Ok((v, d))
        },
        logit(target),
        0.0,
        cfg,
    )?;
    Ok(t_of(solved))
}
