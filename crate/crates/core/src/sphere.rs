//! Geometry of the unit sphere `S^{D-1}` embedded in `R^D`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZlpError};
use crate::special::ln_gamma;

/// Deviation from unit norm tolerated by [`SpherePoint::new`] before it
/// refuses the input.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// A unit vector in `R^D`, `D >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpherePoint(Vec<f64>);

impl SpherePoint {
    /// Validates `|coords| = 1` within [`UNIT_NORM_TOLERANCE`] and renormalizes.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let norm = check_dim_and_norm(&coords)?;
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(ZlpError::Domain(format!("point has norm {norm}, not on the unit sphere")));
        }
        Ok(Self::from_normalized(coords, norm))
    }

    /// Projects any non-zero vector onto the sphere.
    pub fn normalize(coords: Vec<f64>) -> Result<Self> {
        let norm = check_dim_and_norm(&coords)?;
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(ZlpError::Domain("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(Self::from_normalized(coords, norm))
    }

    fn from_normalized(mut coords: Vec<f64>, norm: f64) -> Self {
        if norm != 1.0 {
            coords.iter_mut().for_each(|c| *c /= norm);
        }
        Self(coords)
    }

    /// North pole `e_D`.
    pub fn north_pole(dim: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[dim - 1] = 1.0;
        Self(v)
    }

    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    /// Last coordinate `x_D`.
    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn dot(&self, other: &SpherePoint) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        Self(coords)
    }
}

impl TryFrom<Vec<f64>> for SpherePoint {
    type Error = ZlpError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SpherePoint::new(v)
    }
}

impl From<SpherePoint> for Vec<f64> {
    fn from(p: SpherePoint) -> Self {
        p.0
    }
}

fn check_dim_and_norm(coords: &[f64]) -> Result<f64> {
    if coords.len() < 2 {
        return Err(ZlpError::Domain(format!("sphere dimension D must be >= 2, got {}", coords.len())));
    }
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(ZlpError::Domain("non-finite coordinate".into()));
    }
    Ok(norm(coords))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Renormalize in place; points drift off the sphere by rounding only.
#[inline]
pub(crate) fn renormalize(x: &mut [f64]) {
    let n = norm(x);
    if n != 1.0 && n > 0.0 {
        x.iter_mut().for_each(|c| *c /= n);
    }
}

/// `out = M x` for a column-major dense matrix.
#[inline]
pub(crate) fn mat_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            for (o, mij) in out.iter_mut().zip(m.column(j).iter()) {
                *o += mij * xj;
            }
        }
    }
}

/// `out = Mᵀ x`.
#[inline]
pub(crate) fn mat_t_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = m.column(j).iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// An element of `SO(D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    matrix: DMatrix<f64>,
}

const ORTHO_TOL: f64 = 1e-12;
const DET_TOL: f64 = 1e-10;

impl Rotation {
    /// Accepts a matrix that is orthogonal with determinant +1 to within
    /// `1e-12` / `1e-10`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let dim = matrix.nrows();
        if dim < 2 || matrix.ncols() != dim {
            return Err(ZlpError::Domain(format!("rotation must be square with D >= 2, got {}x{}", dim, matrix.ncols())));
        }
        let dev = orthogonality_defect(&matrix);
        if dev > ORTHO_TOL {
            return Err(ZlpError::Domain(format!("matrix is not orthogonal (max |RᵀR - I| = {dev:e})")));
        }
        let det = matrix.determinant();
        if (det - 1.0).abs() > DET_TOL {
            return Err(ZlpError::Domain(format!("rotation determinant is {det}, expected +1")));
        }
        Ok(Self { matrix })
    }

    /// Snap a nearly orthogonal matrix (defect below `1e-6`) onto `SO(D)` via
    /// its polar factor. Used for hand-written matrices in spec files.
    pub fn orthonormalized(matrix: DMatrix<f64>) -> Result<Self> {
        let dim = matrix.nrows();
        if dim < 2 || matrix.ncols() != dim {
            return Err(ZlpError::Domain("rotation must be square with D >= 2".into()));
        }
        if orthogonality_defect(&matrix) > 1e-6 {
            return Err(ZlpError::Domain("matrix is too far from orthogonal to snap onto SO(D)".into()));
        }
        let svd = matrix.svd(true, true);
        let polar = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
        Self::new(polar)
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim) }
    }

    /// `exp(Ω)` for the skew-symmetric `Ω` whose strict upper triangle is
    /// `params` in row-major order (`D(D-1)/2` entries).
    pub fn from_skew_params(dim: usize, params: &[f64]) -> Result<Self> {
        Ok(Self { matrix: skew_from_params(dim, params)?.exp() })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_identity(&self) -> bool {
        self.matrix == DMatrix::identity(self.dim(), self.dim())
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation { matrix: &self.matrix * &other.matrix }
    }

    pub fn transpose(&self) -> Rotation {
        Rotation { matrix: self.matrix.transpose() }
    }

    pub fn apply(&self, x: &SpherePoint) -> SpherePoint {
        let mut out = vec![0.0; self.dim()];
        mat_vec(&self.matrix, x.coords(), &mut out);
        renormalize(&mut out);
        SpherePoint(out)
    }

    pub(crate) fn apply_in_place(&self, x: &mut [f64], scratch: &mut [f64]) {
        mat_vec(&self.matrix, x, scratch);
        x.copy_from_slice(scratch);
        renormalize(x);
    }

    pub(crate) fn apply_transpose_in_place(&self, x: &mut [f64], scratch: &mut [f64]) {
        mat_t_vec(&self.matrix, x, scratch);
        x.copy_from_slice(scratch);
        renormalize(x);
    }
}

pub(crate) fn skew_from_params(dim: usize, params: &[f64]) -> Result<DMatrix<f64>> {
    let expected = dim * (dim - 1) / 2;
    if params.len() != expected {
        return Err(ZlpError::DimensionMismatch { expected, found: params.len() });
    }
    let mut omega = DMatrix::zeros(dim, dim);
    let mut k = 0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            omega[(i, j)] = params[k];
            omega[(j, i)] = -params[k];
            k += 1;
        }
    }
    Ok(omega)
}

/// Largest entry of `|RᵀR - I|`.
pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows();
    (m.transpose() * m - DMatrix::<f64>::identity(dim, dim)).amax()
}

/// Householder reflection `I - 2 a aᵀ / |a|²`.
fn householder(a: &[f64]) -> DMatrix<f64> {
    let dim = a.len();
    let aa = dot(a, a);
    let mut h = DMatrix::identity(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            h[(i, j)] -= 2.0 * a[i] * a[j] / aa;
        }
    }
    h
}

/// Threshold on `μ·e_D` below which `μ` counts as the antipode of `e_D`.
const ANTIPODE_GUARD: f64 = -1.0 + 1e-12;

/// Deterministic rotation taking the north pole `e_D` to `mu`.
///
/// Built as the product of the reflections through `μ` and `e_D + μ`; the
/// first sends `e_D` to `-μ`, the second `-μ` to `μ`. At the antipode a fixed
/// half-turn in the `(e_1, e_D)` plane is applied first.
pub fn rotation_to(mu: &SpherePoint) -> Rotation {
    let dim = mu.dim();
    let m = mu.coords();
    if m[dim - 1] < ANTIPODE_GUARD {
        let half_turn = half_turn(dim);
        let mut pulled = vec![0.0; dim];
        mat_t_vec(&half_turn.matrix, m, &mut pulled);
        let inner = rotation_to(&SpherePoint(pulled));
        return half_turn.compose(&inner);
    }
    let mut sum = m.to_vec();
    sum[dim - 1] += 1.0;
    let matrix = householder(m) * householder(&sum);
    Rotation { matrix }
}

/// Rotation by π in the `(e_1, e_D)` plane.
fn half_turn(dim: usize) -> Rotation {
    let mut m = DMatrix::identity(dim, dim);
    m[(0, 0)] = -1.0;
    m[(dim - 1, dim - 1)] = -1.0;
    Rotation { matrix: m }
}

/// Orthonormal basis of the tangent space at `x`, as the columns of a
/// `D × (D-1)` matrix.
pub fn tangent_basis(x: &SpherePoint) -> DMatrix<f64> {
    let dim = x.dim();
    rotation_to(x).matrix.columns(0, dim - 1).into_owned()
}

/// Total surface measure of `S^{D-1}`: `2 π^{D/2} / Γ(D/2)`.
pub fn surface_volume(dim: usize) -> f64 {
    ln_surface_volume(dim).exp()
}

pub fn ln_surface_volume(dim: usize) -> f64 {
    let half = dim as f64 / 2.0;
    std::f64::consts::LN_2 + half * std::f64::consts::PI.ln() - ln_gamma(half)
}

/// Log density of the uniform distribution on `S^{D-1}`.
pub fn uniform_log_density(dim: usize) -> f64 {
    -ln_surface_volume(dim)
}

/// Uniform draw on `S^{D-1}` (normalized standard Gaussian).
pub fn uniform_sample<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> SpherePoint {
    let mut v = vec![0.0; dim];
    uniform_fill(rng, &mut v);
    SpherePoint(v)
}

pub(crate) fn uniform_fill<R: Rng + ?Sized>(rng: &mut R, v: &mut [f64]) {
    loop {
        for c in v.iter_mut() {
            *c = rng.sample(StandardNormal);
        }
        let n = norm(v);
        if n > 1e-150 {
            v.iter_mut().for_each(|c| *c /= n);
            return;
        }
    }
}

/// Default finite-difference step for [`numeric_density_update`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Tangent-space Jacobian factor `√det(ẼᵀJᵀJẼ)` of a sphere map at `x`,
/// estimated by central differences.
///
/// Each tangent direction `e_k` of [`tangent_basis`] is probed along the
/// curve `normalize(x ± step·e_k)`, so `f` is only ever evaluated on the
/// sphere. This is the independent oracle for every analytic density update.
pub fn numeric_density_update<F>(f: F, x: &SpherePoint, step: f64) -> Result<f64>
where
    F: Fn(&SpherePoint) -> Result<SpherePoint>,
{
    if !(1e-7..=1e-4).contains(&step) {
        return Err(ZlpError::Domain(format!("finite-difference step {step} outside [1e-7, 1e-4]")));
    }
    let dim = x.dim();
    let basis_in = tangent_basis(x);
    let y = f(x)?;
    let basis_out = tangent_basis(&y);
    let mut jac = DMatrix::<f64>::zeros(dim - 1, dim - 1);
    for k in 0..dim - 1 {
        let dir = basis_in.column(k);
        let shifted = |sign: f64| -> Result<SpherePoint> {
            let v: Vec<f64> = x.coords().iter().zip(dir.iter()).map(|(a, d)| a + sign * step * d).collect();
            f(&SpherePoint::normalize(v)?)
        };
        let plus = shifted(1.0)?;
        let minus = shifted(-1.0)?;
        // the curve normalize(x + s e_k) has speed 1/(1+s²) at s = ±step
        let scale = (1.0 + step * step) / (2.0 * step);
        for r in 0..dim - 1 {
            let col = basis_out.column(r);
            let diff: f64 = plus.coords().iter().zip(minus.coords()).zip(col.iter()).map(|((p, m), c)| (p - m) * c).sum();
            jac[(r, k)] = diff * scale;
        }
    }
    let det = jac.determinant().abs();
    let scale = jac.amax().max(1.0).powi(dim as i32 - 1);
    if !(det > 1e-10 * scale) || !det.is_finite() {
        return Err(ZlpError::RankDeficient(det));
    }
    Ok(det)
}

/// Uniformly random rotation: QR of a Gaussian matrix with signs fixed.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Rotation {
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for i in 0..dim {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    Rotation::orthonormalized(q).expect("QR factor is orthogonal")
}
