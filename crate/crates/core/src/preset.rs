//! Named chain constructors for the distribution families of the ZLP
//! dictionary, plus the tangent-plane Gaussian check for the Kent flow.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chain::{FlowChain, LayerSpec};
use crate::error::{Result, ZlpError};
use crate::linear_project::{kent_constraint_interval, LinearProject};
use crate::sphere::{random_rotation, rotation_to, Rotation, SpherePoint};
use crate::zoom::{FisherZoom, ZoomParams};

/// Family names, as used on the command line and in spec files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Vmf,
    Bingham,
    Fb4,
    Kent,
    Fb6,
    Fb8,
    Generic,
}

impl Family {
    pub const ALL: [Family; 7] =
        [Family::Vmf, Family::Bingham, Family::Fb4, Family::Kent, Family::Fb6, Family::Fb8, Family::Generic];

    pub fn name(self) -> &'static str {
        match self {
            Family::Vmf => "vmf",
            Family::Bingham => "bingham",
            Family::Fb4 => "fb4",
            Family::Kent => "kent",
            Family::Fb6 => "fb6",
            Family::Fb8 => "fb8",
            Family::Generic => "generic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ZlpError::Spec(format!("unknown family '{s}' (expected one of vmf, bingham, fb4, kent, fb6, fb8, generic)")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One `[R, Z, LP]` block of a generic chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericBlock {
    pub rotation: Rotation,
    pub kappa: f64,
    pub matrix: DMatrix<f64>,
}

/// Parameters of a family member. `rotation` always acts last and carries
/// the pole `e_D` to the family's mean direction.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyPreset {
    /// `[R, Z]`; `R` is omitted when it is the identity.
    Vmf { rotation: Rotation, kappa: f64 },
    /// `[R, LP_S]` with diagonal `scales`, or `[LP]` with a full matrix.
    Bingham { rotation: Rotation, scales: Vec<f64> },
    BinghamFull { matrix: DMatrix<f64> },
    /// `[R, Z, LP_S]`; `symmetric` requires `scales[i]` shared for `i < D`.
    Fb4 { rotation: Rotation, kappa: f64, scales: Vec<f64>, symmetric: bool },
    /// `[R, LP_Sc, Z]` with `D - 1` constrained scales.
    Kent { rotation: Rotation, kappa: f64, sigmas: Vec<f64> },
    /// `[R, LP_Sc, Z, LP_S]`.
    Fb6 { rotation: Rotation, kappa: f64, sigmas: Vec<f64>, scales: Vec<f64> },
    /// `[R, LP_Sc, Z, LP]`.
    Fb8 { rotation: Rotation, kappa: f64, sigmas: Vec<f64>, matrix: DMatrix<f64> },
    /// `[R, Z, LP]^N`, block 0 outermost.
    Generic { blocks: Vec<GenericBlock> },
}

impl FamilyPreset {
    pub fn vmf(mu: &SpherePoint, kappa: f64) -> Self {
        FamilyPreset::Vmf { rotation: rotation_to(mu), kappa }
    }

    /// Kent flow on the 2-sphere with `σ = (u, 1/u)`.
    pub fn kent_u(rotation: Rotation, kappa: f64, u: f64) -> Self {
        FamilyPreset::Kent { rotation, kappa, sigmas: vec![u, 1.0 / u] }
    }

    pub fn family(&self) -> Family {
        match self {
            FamilyPreset::Vmf { .. } => Family::Vmf,
            FamilyPreset::Bingham { .. } | FamilyPreset::BinghamFull { .. } => Family::Bingham,
            FamilyPreset::Fb4 { .. } => Family::Fb4,
            FamilyPreset::Kent { .. } => Family::Kent,
            FamilyPreset::Fb6 { .. } => Family::Fb6,
            FamilyPreset::Fb8 { .. } => Family::Fb8,
            FamilyPreset::Generic { .. } => Family::Generic,
        }
    }
}

/// Log-uniform draw from `[lo, hi]`.
fn log_uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn log_normal_scales<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| (0.5 * rng.sample::<f64, _>(StandardNormal)).exp()).collect()
}

/// `R₁ diag(s) R₂` with uniform rotations and log-normal singular values
/// `s` (log-sd 0.5): a random linear map with controlled conditioning in
/// any dimension.
pub fn random_linear_map<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    let left = random_rotation(rng, dim).matrix().clone();
    let s = log_normal_scales(rng, dim);
    let right = random_rotation(rng, dim).matrix().clone();
    left * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s)) * right
}

impl FamilyPreset {
    /// A random valid member of `family` on `S^{dim-1}`.
    ///
    /// Concentrations are log-uniform on `kappa_range` (per block for the
    /// generic family), the rotation is uniform, diagonal scales are
    /// log-normal with log-sd 0.5, full matrices are [`random_linear_map`]
    /// and Kent scales lie inside 90% of the constraint interval in log
    /// space. The generic family gets `generic_blocks` blocks.
    pub fn random<R: Rng + ?Sized>(
        family: Family,
        dim: usize,
        kappa_range: (f64, f64),
        generic_blocks: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if dim < 2 || !(kappa_range.0 > 0.0 && kappa_range.0 <= kappa_range.1) {
            return Err(ZlpError::Domain(format!("invalid dimension {dim} or concentration range {kappa_range:?}")));
        }
        let rotation = random_rotation(rng, dim);
        let kappa = log_uniform(rng, kappa_range);
        let kent = |rng: &mut R| {
            let unit: Vec<f64> = (0..dim - 1).map(|_| rng.random()).collect();
            kent_sigmas_from_unit(kappa, dim, &unit, 0.9)
        };
        Ok(match family {
            Family::Vmf => FamilyPreset::Vmf { rotation, kappa },
            Family::Bingham => FamilyPreset::Bingham { rotation, scales: log_normal_scales(rng, dim) },
            Family::Fb4 => FamilyPreset::Fb4 { rotation, kappa, scales: log_normal_scales(rng, dim), symmetric: false },
            Family::Kent => FamilyPreset::Kent { rotation, kappa, sigmas: kent(rng)? },
            Family::Fb6 => {
                let sigmas = kent(rng)?;
                FamilyPreset::Fb6 { rotation, kappa, sigmas, scales: log_normal_scales(rng, dim) }
            }
            Family::Fb8 => {
                let sigmas = kent(rng)?;
                FamilyPreset::Fb8 { rotation, kappa, sigmas, matrix: random_linear_map(rng, dim) }
            }
            Family::Generic => FamilyPreset::Generic {
                blocks: (0..generic_blocks.max(1))
                    .map(|_| GenericBlock {
                        rotation: random_rotation(rng, dim),
                        kappa: log_uniform(rng, kappa_range),
                        matrix: random_linear_map(rng, dim),
                    })
                    .collect(),
            },
        })
    }
}

fn zoom(kappa: f64, dim: usize) -> Result<LayerSpec> {
    Ok(LayerSpec::Zoom(FisherZoom::new(ZoomParams::new(kappa, dim)?)?))
}

fn rotate_unless_identity(r: &Rotation, layers: &mut Vec<LayerSpec>) {
    if !r.is_identity() {
        layers.push(LayerSpec::Rotate(r.clone()));
    }
}

fn check_len(what: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(ZlpError::Spec(format!("{what} needs {expected} entries, got {found}")));
    }
    Ok(())
}

/// Assemble the chain for a family member.
pub fn build_preset(p: &FamilyPreset) -> Result<FlowChain> {
    let mut layers = Vec::new();
    let dim = match p {
        FamilyPreset::Vmf { rotation, kappa } => {
            let d = rotation.dim();
            rotate_unless_identity(rotation, &mut layers);
            layers.push(zoom(*kappa, d)?);
            d
        }
        FamilyPreset::Bingham { rotation, scales } => {
            let d = rotation.dim();
            check_len("bingham scales", scales.len(), d)?;
            rotate_unless_identity(rotation, &mut layers);
            layers.push(LayerSpec::LinearProject(LinearProject::diagonal(scales)?));
            d
        }
        FamilyPreset::BinghamFull { matrix } => {
            layers.push(LayerSpec::LinearProject(LinearProject::full(matrix.clone())?));
            matrix.nrows()
        }
        FamilyPreset::Fb4 { rotation, kappa, scales, symmetric } => {
            let d = rotation.dim();
            check_len("fb4 scales", scales.len(), d)?;
            if *symmetric && scales[..d - 1].iter().any(|s| *s != scales[0]) {
                return Err(ZlpError::Constraint("symmetric fb4 needs one shared scale for the first D-1 axes".into()));
            }
            rotate_unless_identity(rotation, &mut layers);
            layers.push(zoom(*kappa, d)?);
            layers.push(LayerSpec::LinearProject(LinearProject::diagonal(scales)?));
            d
        }
        FamilyPreset::Kent { rotation, kappa, sigmas } => {
            let d = rotation.dim();
            check_len("kent sigmas", sigmas.len(), d - 1)?;
            rotate_unless_identity(rotation, &mut layers);
            layers.push(LayerSpec::LinearProject(LinearProject::constrained_sc(sigmas, *kappa)?));
            layers.push(zoom(*kappa, d)?);
            d
        }
        FamilyPreset::Fb6 { rotation, kappa, sigmas, scales } => {
            let d = rotation.dim();
            check_len("fb6 sigmas", sigmas.len(), d - 1)?;
            check_len("fb6 scales", scales.len(), d)?;
            rotate_unless_identity(rotation, &mut layers);
            layers.push(LayerSpec::LinearProject(LinearProject::constrained_sc(sigmas, *kappa)?));
            layers.push(zoom(*kappa, d)?);
            layers.push(LayerSpec::LinearProject(LinearProject::diagonal(scales)?));
            d
        }
        FamilyPreset::Fb8 { rotation, kappa, sigmas, matrix } => {
            let d = rotation.dim();
            check_len("fb8 sigmas", sigmas.len(), d - 1)?;
            rotate_unless_identity(rotation, &mut layers);
            layers.push(LayerSpec::LinearProject(LinearProject::constrained_sc(sigmas, *kappa)?));
            layers.push(zoom(*kappa, d)?);
            layers.push(LayerSpec::LinearProject(LinearProject::full(matrix.clone())?));
            d
        }
        FamilyPreset::Generic { blocks } => {
            let first = blocks.first().ok_or_else(|| ZlpError::Spec("generic chain needs at least one block".into()))?;
            let d = first.rotation.dim();
            for b in blocks {
                layers.push(LayerSpec::Rotate(b.rotation.clone()));
                layers.push(zoom(b.kappa, d)?);
                layers.push(LayerSpec::LinearProject(LinearProject::full(b.matrix.clone())?));
            }
            d
        }
    };
    FlowChain::new(dim, layers)
}

/// Outcome of [`kent_tangent_gaussian_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentGaussianCheck {
    /// Largest `|p_flow / p_gauss - 1|` over grid points inside the 3σ ellipse.
    pub max_relative_error: f64,
    /// Tangent standard deviations `σ_i / √κ`.
    pub sigma_t: [f64; 2],
}

/// Compares the Kent flow on the 2-sphere (mode at the north pole) with the
/// tangent-plane Gaussian of standard deviations `σ_i / √κ` on an
/// `n_grid × n_grid` box spanning ±3σ.
///
/// Points are lifted by the orthographic map `v ↦ (v, √(1 - |v|²))`, whose
/// area element `1/√(1 - |v|²)` is included.
pub fn kent_tangent_gaussian_check(kappa: f64, u: f64, n_grid: usize) -> Result<TangentGaussianCheck> {
    if n_grid < 2 {
        return Err(ZlpError::Domain("n_grid must be >= 2".into()));
    }
    let chain = build_preset(&FamilyPreset::kent_u(Rotation::identity(3), kappa, u))?;
    let sd = [u / kappa.sqrt(), 1.0 / (u * kappa.sqrt())];
    if 3.0 * sd[0].max(sd[1]) >= 1.0 {
        return Err(ZlpError::Domain("3σ box leaves the hemisphere; kappa too small".into()));
    }
    let ln_norm = -(2.0 * std::f64::consts::PI * sd[0] * sd[1]).ln();
    let mut worst = 0.0f64;
    for i in 0..n_grid {
        for j in 0..n_grid {
            let a = -3.0 + 6.0 * i as f64 / (n_grid - 1) as f64;
            let b = -3.0 + 6.0 * j as f64 / (n_grid - 1) as f64;
            if a * a + b * b > 9.0 {
                continue;
            }
            let v = [a * sd[0], b * sd[1]];
            let r2 = v[0] * v[0] + v[1] * v[1];
            let x = SpherePoint::new(vec![v[0], v[1], (1.0 - r2).sqrt()])?;
            let ln_flow = chain.log_prob(&x)? - 0.5 * (-r2).ln_1p();
            let ln_gauss = ln_norm - 0.5 * (a * a + b * b);
            worst = worst.max((ln_flow - ln_gauss).exp_m1().abs());
        }
    }
    Ok(TangentGaussianCheck { max_relative_error: worst, sigma_t: sd })
}

/// Draw a random valid Kent scale vector for `(κ, D)` with every `σ_i`
/// strictly inside the constraint interval (shrunk by `margin ∈ (0, 1)`).
pub fn kent_sigmas_from_unit(kappa: f64, dim: usize, unit: &[f64], margin: f64) -> Result<Vec<f64>> {
    let (_, hi) = kent_constraint_interval(kappa, dim)?;
    let ln_hi = hi.ln() * margin;
    Ok(unit.iter().map(|t| ((2.0 * t - 1.0) * ln_hi).exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vmf_at_pole_is_single_zoom() {
        let chain = build_preset(&FamilyPreset::vmf(&SpherePoint::north_pole(3), 5.0)).unwrap();
        assert_eq!(chain.len(), 1);
        assert_eq!(chain.layers()[0].kind(), "zoom");
    }

    #[test]
    fn kent_order_is_rotation_lp_zoom() {
        let mu = SpherePoint::basis(3, 0);
        let chain = build_preset(&FamilyPreset::kent_u(rotation_to(&mu), 50.0, 1.3)).unwrap();
        let kinds: Vec<_> = chain.layers().iter().map(|l| l.kind()).collect();
        assert_eq!(kinds, ["rotation", "linear_project", "zoom"]);
    }

    #[test]
    fn kent_u_one_equals_vmf() {
        let kent = build_preset(&FamilyPreset::kent_u(Rotation::identity(3), 30.0, 1.0)).unwrap();
        let vmf = build_preset(&FamilyPreset::vmf(&SpherePoint::north_pole(3), 30.0)).unwrap();
        for x in [vec![0.1, 0.2, 0.9], vec![-0.5, 0.5, 0.1], vec![0.0, 0.3, -1.0]] {
            let x = SpherePoint::normalize(x).unwrap();
            assert!((kent.log_prob(&x).unwrap() - vmf.log_prob(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn generic_layer_count() {
        let block = GenericBlock { rotation: Rotation::identity(3), kappa: 2.0, matrix: DMatrix::identity(3, 3) };
        let chain = build_preset(&FamilyPreset::Generic { blocks: vec![block; 15] }).unwrap();
        assert_eq!(chain.len(), 45);
        let kinds: Vec<_> = chain.layers()[..3].iter().map(|l| l.kind()).collect();
        assert_eq!(kinds, ["rotation", "zoom", "linear_project"]);
    }

    #[test]
    fn constraints_enforced() {
        assert!(matches!(
            build_preset(&FamilyPreset::kent_u(Rotation::identity(3), 6.0, 10.0)),
            Err(ZlpError::Constraint(_))
        ));
        let fb4 = FamilyPreset::Fb4 {
            rotation: Rotation::identity(3),
            kappa: 3.0,
            scales: vec![1.0, 2.0, 1.0],
            symmetric: true,
        };
        assert!(matches!(build_preset(&fb4), Err(ZlpError::Constraint(_))));
    }

    #[test]
    fn tangent_scales() {
        let c = kent_tangent_gaussian_check(1e4, 1.5, 11).unwrap();
        assert!((c.sigma_t[0] - 0.015).abs() < 1e-15);
        assert!((c.sigma_t[1] - 0.006_666_666_666_666_667).abs() < 1e-15);
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(Family::parse(f.name()).unwrap(), f);
        }
        assert!(Family::parse("watson").is_err());
    }
}
