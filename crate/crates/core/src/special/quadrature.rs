//! Adaptive Gauss–Kronrod (7/15) quadrature of log-space integrands.

use crate::error::{Result, ZlpError};

const MAX_PANELS: usize = 1 << 14;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Panel { a, b, value: kronrod * half, error: ((kronrod - gauss) * half).abs() }
}

/// `ln ∫_a^b exp(log_f(x)) dx`.
///
/// `log_max` must bound `log_f` from above on `[a, b]` (ideally equal to its
/// maximum) so the scaled integrand stays in `[0, 1]`. `breakpoints` seed
/// the initial panel split. A peak much narrower than its initial panel can
/// be invisible to every node, so pass [`peak_breakpoints`] for sharp modes.
pub(crate) fn log_integral<F>(log_f: F, a: f64, b: f64, log_max: f64, breakpoints: &[f64], rtol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(b > a) {
        return Ok(f64::NEG_INFINITY);
    }
    let f = |x: f64| (log_f(x) - log_max).exp();
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&c| c > a && c < b).collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);

    let mut panels: Vec<Panel> = edges.windows(2).map(|w| gauss_kronrod(&f, w[0], w[1])).collect();
    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if error <= rtol * total.abs() || total == 0.0 && error == 0.0 {
            // an all-zero sum is only trusted once the breakpoints resolved the peak
            return Ok(log_max + total.ln());
        }
        if panels.len() >= MAX_PANELS {
            return Err(ZlpError::NonConvergence { what: "adaptive Gauss-Kronrod quadrature", iterations: panels.len() });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap())
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // interval exhausted in floating point
            return Ok(log_max + total.ln());
        }
        panels.push(gauss_kronrod(&f, p.a, mid));
        panels.push(gauss_kronrod(&f, mid, p.b));
    }
}

/// Breakpoints at `center ± width·4^k` clipped to `[a, b]`, so panels next
/// to a peak of the given width are no wider than a few widths.
pub(crate) fn peak_breakpoints(center: f64, width: f64, a: f64, b: f64) -> Vec<f64> {
    let mut cuts = vec![center];
    let mut w = width;
    while w < b - a {
        for c in [center - w, center + w] {
            if c > a && c < b {
                cuts.push(c);
            }
        }
        w *= 4.0;
    }
    cuts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = log_integral(|x: f64| (x * x).ln(), 0.0, 2.0, 4f64.ln(), &[], 1e-14).unwrap();
        assert!((v.exp() - 8.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn sharp_gaussian_peak_in_log_space() {
        // ∫ exp(-k (x - 0.3)^2) over [0, 1] with k = 1e8 ≈ sqrt(pi / k)
        let k = 1e8;
        let cuts = peak_breakpoints(0.3, 1e-4, 0.0, 1.0);
        let v = log_integral(|x: f64| -k * (x - 0.3) * (x - 0.3), 0.0, 1.0, 0.0, &cuts, 1e-14).unwrap();
        let exact = 0.5 * (std::f64::consts::PI / k).ln();
        assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
    }

    #[test]
    fn huge_log_offsets() {
        // ∫_0^1 e^{1e6 x} dx = (e^{1e6} - 1) / 1e6
        let cuts = peak_breakpoints(1.0, 1e-6, 0.0, 1.0);
        // evaluating 1e6 x carries ~1e-10 relative noise, so ask for no more
        let v = log_integral(|x: f64| 1e6 * x, 0.0, 1.0, 1e6, &cuts, 1e-9).unwrap();
        let exact = 1e6 - 1e6f64.ln();
        assert!((v - exact).abs() < 1e-9, "{v} vs {exact}");
    }

    #[test]
    fn empty_interval() {
        assert_eq!(log_integral(|_| 0.0, 1.0, 1.0, 0.0, &[], 1e-12).unwrap(), f64::NEG_INFINITY);
    }
}
