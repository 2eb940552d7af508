//! Linear map in the embedding space followed by radial projection,
//! `x ↦ A x / |A x|`. Over a uniform base this yields the central angular
//! Gaussian with `Λ = A Aᵀ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZlpError};
use crate::sphere::{ln_surface_volume, mat_vec, norm, SpherePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpVariant {
    /// `A = diag(e^{s}) L` with `L` unit lower-triangular, or any invertible
    /// matrix, rescaled to `|det A| = 1`.
    Full,
    /// Positive diagonal, rescaled to unit determinant.
    DiagonalS,
    /// `diag(σ_1, …, σ_{D-1}, 1)` with every `σ_i` inside
    /// [`kent_constraint_interval`] for the paired concentration.
    ConstrainedSc,
}

const MIN_ABS_DET: f64 = 1e-30;

/// A linear-project layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProject {
    variant: LpVariant,
    a: DMatrix<f64>,
    h: DMatrix<f64>,
    ln_abs_det_a: f64,
    /// Concentration the `ConstrainedSc` bounds were checked against.
    kappa: Option<f64>,
}

impl LinearProject {
    fn from_matrix(variant: LpVariant, a: DMatrix<f64>, kappa: Option<f64>) -> Result<Self> {
        let d = a.nrows();
        if d < 2 || a.ncols() != d {
            return Err(ZlpError::Domain(format!("linear-project matrix must be square with D >= 2, got {}x{}", d, a.ncols())));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(ZlpError::Domain("non-finite entry in linear-project matrix".into()));
        }
        let lu = a.clone().lu();
        let det = lu.determinant();
        if !(det.abs() > MIN_ABS_DET) {
            return Err(ZlpError::Singular(format!("|det A| = {:e} is below {MIN_ABS_DET:e}", det.abs())));
        }
        let h = lu.try_inverse().ok_or_else(|| ZlpError::Singular("matrix inverse failed".into()))?;
        Ok(Self { variant, a, h, ln_abs_det_a: det.abs().ln(), kappa })
    }

    /// Any invertible matrix, rescaled to `|det A| = 1`. The map is invariant
    /// under `A → cA`, so this only fixes the gauge.
    pub fn full(matrix: DMatrix<f64>) -> Result<Self> {
        let d = matrix.nrows() as f64;
        let det = if matrix.is_square() { matrix.determinant() } else { 0.0 };
        if !(det.abs() > MIN_ABS_DET) || !det.is_finite() {
            return Self::from_matrix(LpVariant::Full, matrix, None);
        }
        let scale = (-det.abs().ln() / d).exp();
        Self::from_matrix(LpVariant::Full, matrix * scale, None)
    }

    /// `A = diag(e^{s}) L`; `lower` holds the strict lower triangle of `L`
    /// in row-major order. The log scales are shifted to sum to zero.
    pub fn from_factors(log_scales: &[f64], lower: &[f64]) -> Result<Self> {
        let d = log_scales.len();
        if lower.len() != d * d.saturating_sub(1) / 2 {
            return Err(ZlpError::DimensionMismatch { expected: d * d.saturating_sub(1) / 2, found: lower.len() });
        }
        let mean = log_scales.iter().sum::<f64>() / d as f64;
        let mut a = DMatrix::<f64>::identity(d, d);
        let mut k = 0;
        for i in 0..d {
            for j in 0..i {
                a[(i, j)] = lower[k];
                k += 1;
            }
        }
        for i in 0..d {
            let s = (log_scales[i] - mean).exp();
            a.row_mut(i).scale_mut(s);
        }
        Self::from_matrix(LpVariant::Full, a, None)
    }

    /// Positive diagonal scaling, rescaled to unit determinant.
    pub fn diagonal(scales: &[f64]) -> Result<Self> {
        if scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(ZlpError::Domain("diagonal scales must be finite and > 0".into()));
        }
        let d = scales.len() as f64;
        let mean_ln = scales.iter().map(|s| s.ln()).sum::<f64>() / d;
        let diag: Vec<f64> = scales.iter().map(|s| (s.ln() - mean_ln).exp()).collect();
        Self::from_matrix(LpVariant::DiagonalS, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)), None)
    }

    /// `diag(σ_1, …, σ_{D-1}, 1)`, each `σ_i` strictly inside the interval
    /// that keeps the paired zoom of concentration `kappa` unimodal.
    pub fn constrained_sc(sigmas: &[f64], kappa: f64) -> Result<Self> {
        let d = sigmas.len() + 1;
        let (lo, hi) = kent_constraint_interval(kappa, d)?;
        for (i, &s) in sigmas.iter().enumerate() {
            if !(s > lo && s < hi) {
                return Err(ZlpError::Constraint(format!(
                    "sigma_{} = {s} outside ({lo}, {hi}) required for kappa = {kappa}, D = {d}",
                    i + 1
                )));
            }
        }
        let mut diag = sigmas.to_vec();
        diag.push(1.0);
        Self::from_matrix(
            LpVariant::ConstrainedSc,
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)),
            Some(kappa),
        )
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(LpVariant::DiagonalS, DMatrix::identity(dim, dim), None).expect("identity is invertible")
    }

    pub fn variant(&self) -> LpVariant {
        self.variant
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    /// Diagonal of `A` for the diagonal variants.
    pub fn scales(&self) -> Vec<f64> {
        self.a.diagonal().iter().copied().collect()
    }

    /// `Λ = A Aᵀ`.
    pub fn lambda(&self) -> DMatrix<f64> {
        &self.a * self.a.transpose()
    }

    pub fn ln_abs_det(&self) -> f64 {
        self.ln_abs_det_a
    }

    /// `x ← A x / |A x|`; returns `ln |det A| - D ln |A x|`, the log
    /// Jacobian of the forward map at the input.
    pub(crate) fn forward_in_place(&self, x: &mut [f64], scratch: &mut [f64]) -> f64 {
        project(&self.a, self.ln_abs_det_a, x, scratch)
    }

    /// `z ← H z / |H z|`; returns `ln |det H| - D ln |H z|`, the log
    /// Jacobian of the inverse map at `z`.
    pub(crate) fn inverse_in_place(&self, z: &mut [f64], scratch: &mut [f64]) -> f64 {
        project(&self.h, -self.ln_abs_det_a, z, scratch)
    }

    pub fn forward(&self, x: &SpherePoint) -> Result<SpherePoint> {
        self.check_dim(x)?;
        let mut v = x.coords().to_vec();
        let mut s = vec![0.0; v.len()];
        self.forward_in_place(&mut v, &mut s);
        Ok(SpherePoint::from_raw(v))
    }

    pub fn inverse(&self, z: &SpherePoint) -> Result<SpherePoint> {
        self.check_dim(z)?;
        let mut v = z.coords().to_vec();
        let mut s = vec![0.0; v.len()];
        self.inverse_in_place(&mut v, &mut s);
        Ok(SpherePoint::from_raw(v))
    }

    /// `ln det H - D ln |H x|`: the density factor picked up by a point `x`
    /// in the target space.
    pub fn log_density_update(&self, x: &SpherePoint) -> Result<f64> {
        self.check_dim(x)?;
        let mut s = vec![0.0; x.dim()];
        mat_vec(&self.h, x.coords(), &mut s);
        Ok(-self.ln_abs_det_a - x.dim() as f64 * norm(&s).ln())
    }

    /// `ln det A - D ln |A x|` for a base-side point `x`.
    pub fn forward_log_density_update(&self, x: &SpherePoint) -> Result<f64> {
        self.check_dim(x)?;
        let mut s = vec![0.0; x.dim()];
        mat_vec(&self.a, x.coords(), &mut s);
        Ok(self.ln_abs_det_a - x.dim() as f64 * norm(&s).ln())
    }

    fn check_dim(&self, x: &SpherePoint) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(ZlpError::DimensionMismatch { expected: self.dim(), found: x.dim() });
        }
        Ok(())
    }
}

fn project(m: &DMatrix<f64>, ln_det: f64, x: &mut [f64], scratch: &mut [f64]) -> f64 {
    mat_vec(m, x, scratch);
    let n = norm(scratch);
    for (xi, si) in x.iter_mut().zip(scratch.iter()) {
        *xi = si / n;
    }
    ln_det - x.len() as f64 * n.ln()
}

/// Open interval `(√D/√(κ+D), √(κ+D)/√D)` for the Kent scales.
pub fn kent_constraint_interval(kappa: f64, dim: usize) -> Result<(f64, f64)> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(ZlpError::Domain(format!("kappa must be finite and > 0, got {kappa}")));
    }
    let d = dim as f64;
    let hi = ((kappa + d) / d).sqrt();
    Ok((1.0 / hi, hi))
}

/// `S_c = diag(u, 1/u, 1)` on the 2-sphere.
pub fn make_constrained_sc(u: f64, kappa: f64) -> Result<LinearProject> {
    LinearProject::constrained_sc(&[u, 1.0 / u], kappa)
}

/// Central angular Gaussian log density
/// `-ln S_{D-1} - ½ ln det Λ - (D/2) ln(xᵀ Λ⁻¹ x)`.
pub fn central_ag_log_pdf(x: &SpherePoint, lambda: &DMatrix<f64>) -> Result<f64> {
    let d = x.dim();
    if lambda.nrows() != d || lambda.ncols() != d {
        return Err(ZlpError::DimensionMismatch { expected: d, found: lambda.nrows() });
    }
    let asym = (lambda - lambda.transpose()).amax();
    if asym > 1e-12 * lambda.amax() {
        return Err(ZlpError::Domain("Λ is not symmetric".into()));
    }
    let chol = lambda.clone().cholesky().ok_or_else(|| ZlpError::Domain("Λ is not positive definite".into()))?;
    let l = chol.l();
    let ln_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let y = l
        .solve_lower_triangular(&x.to_dvector())
        .ok_or_else(|| ZlpError::Domain("Λ is not positive definite".into()))?;
    Ok(-ln_surface_volume(d) - 0.5 * ln_det - 0.5 * d as f64 * y.norm_squared().ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn interval_examples() {
        let (lo, hi) = kent_constraint_interval(6.0, 3).unwrap();
        assert!((lo - 3f64.sqrt() / 3.0).abs() < 1e-15);
        assert!((hi - 3f64.sqrt()).abs() < 1e-15);
        assert!((lo * hi - 1.0).abs() < 1e-15);
        let (lo, hi) = kent_constraint_interval(1e-12, 3).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constrained_sc_examples() {
        let id = make_constrained_sc(1.0, 5.0).unwrap();
        assert_eq!(id.matrix(), &DMatrix::<f64>::identity(3, 3));
        let lp = make_constrained_sc(1.5, 100.0).unwrap();
        assert_eq!(lp.scales(), vec![1.5, 1.0 / 1.5, 1.0]);
        assert!(matches!(make_constrained_sc(10.0, 6.0), Err(ZlpError::Constraint(_))));
    }

    #[test]
    fn axis_is_fixed_by_diagonal_map() {
        let lp = LinearProject::diagonal(&[2.0, 0.5, 1.0]).unwrap();
        let y = lp.forward(&SpherePoint::basis(3, 0)).unwrap();
        assert_eq!(y.coords(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn identity_update_is_zero() {
        let lp = LinearProject::identity(4);
        let x = SpherePoint::normalize(vec![0.1, -0.4, 0.3, 0.2]).unwrap();
        assert!(lp.log_density_update(&x).unwrap().abs() < 1e-15);
    }

    #[test]
    fn ag_examples() {
        let x = SpherePoint::basis(3, 0);
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((central_ag_log_pdf(&x, &id).unwrap() + (4.0 * PI).ln()).abs() < 1e-14);
        assert!((central_ag_log_pdf(&x, &(id.clone() * 7.3)).unwrap() + (4.0 * PI).ln()).abs() < 1e-14);
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 1.0]));
        let exact = -(8.0 * PI).ln() + 1.5 * 4f64.ln();
        assert!((central_ag_log_pdf(&x, &lam).unwrap() - exact).abs() < 1e-14);
        assert!(central_ag_log_pdf(&x, &(id * -1.0)).is_err());
    }

    #[test]
    fn factors_have_unit_determinant() {
        let lp = LinearProject::from_factors(&[0.3, -1.0, 2.0], &[0.5, -0.2, 1.1]).unwrap();
        assert!((lp.matrix().determinant() - 1.0).abs() < 1e-12);
        assert!(lp.ln_abs_det().abs() < 1e-12);
        assert!(LinearProject::from_factors(&[0.0, 0.0], &[]).is_err());
    }

    #[test]
    fn singular_rejected() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0]);
        assert!(matches!(LinearProject::full(m), Err(ZlpError::Singular(_))));
    }
}
