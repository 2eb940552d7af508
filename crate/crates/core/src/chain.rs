//! Composition of layers into a flow and the change-of-variables density.
//!
//! Layers are stored in written order: `layers[0]` is the outermost map and
//! acts last on a base sample, the final element acts first. Inverses run
//! front to back.

use rand::Rng;

use crate::error::{Result, ZlpError};
use crate::linear_project::LinearProject;
use crate::sphere::{uniform_fill, uniform_log_density, Rotation, SpherePoint};
use crate::zoom::{AxisCoord, FisherZoom};

/// One flow layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Zoom(FisherZoom),
    LinearProject(LinearProject),
    Rotate(Rotation),
}

impl LayerSpec {
    pub fn dim(&self) -> usize {
        match self {
            LayerSpec::Zoom(z) => z.dim(),
            LayerSpec::LinearProject(lp) => lp.dim(),
            LayerSpec::Rotate(r) => r.dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Zoom(_) => "zoom",
            LayerSpec::LinearProject(_) => "linear_project",
            LayerSpec::Rotate(_) => "rotation",
        }
    }

    /// Applies the layer to `x` and returns the log Jacobian of the forward
    /// map at the input.
    fn forward_in_place(&self, x: &mut [f64], scratch: &mut [f64]) -> Result<f64> {
        match self {
            LayerSpec::Rotate(r) => {
                r.apply_in_place(x, scratch);
                Ok(0.0)
            }
            LayerSpec::LinearProject(lp) => Ok(lp.forward_in_place(x, scratch)),
            LayerSpec::Zoom(z) => {
                z.forward_in_place(x)?;
                Ok(z.ln_update_from_output(&AxisCoord::from_point(x)))
            }
        }
    }

    /// Log density factor `-ln J` picked up at the output point `z`; the
    /// point is pulled back through the layer unless `skip_map` is set.
    fn inverse_in_place(&self, z: &mut [f64], scratch: &mut [f64], skip_map: bool) -> Result<f64> {
        match self {
            LayerSpec::Rotate(r) => {
                if !skip_map {
                    r.apply_transpose_in_place(z, scratch);
                }
                Ok(0.0)
            }
            LayerSpec::LinearProject(lp) => Ok(lp.inverse_in_place(z, scratch)),
            LayerSpec::Zoom(zoom) => {
                let ln = zoom.ln_inverse_update(z);
                if !skip_map {
                    zoom.inverse_in_place(z)?;
                }
                Ok(ln)
            }
        }
    }

    /// Forward map of a single point.
    pub fn forward(&self, x: &SpherePoint) -> Result<SpherePoint> {
        let mut v = x.coords().to_vec();
        let mut s = vec![0.0; v.len()];
        self.forward_in_place(&mut v, &mut s)?;
        Ok(SpherePoint::from_raw(v))
    }

    pub fn inverse(&self, z: &SpherePoint) -> Result<SpherePoint> {
        let mut v = z.coords().to_vec();
        let mut s = vec![0.0; v.len()];
        self.inverse_in_place(&mut v, &mut s, false)?;
        Ok(SpherePoint::from_raw(v))
    }

    /// Log of the forward density update at a base-side point.
    pub fn forward_log_update(&self, x: &SpherePoint) -> Result<f64> {
        let mut v = x.coords().to_vec();
        let mut s = vec![0.0; v.len()];
        self.forward_in_place(&mut v, &mut s)
    }
}

/// An ordered stack of layers over the uniform base distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowChain {
    dim: usize,
    layers: Vec<LayerSpec>,
}

impl FlowChain {
    pub fn new(dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if dim < 2 {
            return Err(ZlpError::Domain(format!("dimension must be >= 2, got {dim}")));
        }
        for l in &layers {
            if l.dim() != dim {
                return Err(ZlpError::DimensionMismatch { expected: dim, found: l.dim() });
            }
        }
        Ok(Self { dim, layers })
    }

    /// The uniform distribution.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Same layers with the written order reversed.
    pub fn reversed(&self) -> Self {
        let mut layers = self.layers.clone();
        layers.reverse();
        Self { dim: self.dim, layers }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(ZlpError::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        Ok(())
    }

    /// Pushes a base point through the flow; returns the image and the
    /// summed forward log Jacobian.
    pub fn forward_with_log_det(&self, x: &SpherePoint) -> Result<(SpherePoint, f64)> {
        self.check(x.coords())?;
        let mut v = x.coords().to_vec();
        let mut s = vec![0.0; self.dim];
        let mut acc = 0.0;
        for layer in self.layers.iter().rev() {
            acc += layer.forward_in_place(&mut v, &mut s)?;
        }
        Ok((SpherePoint::from_raw(v), acc))
    }

    pub fn forward(&self, x: &SpherePoint) -> Result<SpherePoint> {
        Ok(self.forward_with_log_det(x)?.0)
    }

    pub fn inverse(&self, z: &SpherePoint) -> Result<SpherePoint> {
        self.check(z.coords())?;
        let mut v = z.coords().to_vec();
        let mut s = vec![0.0; self.dim];
        for layer in &self.layers {
            layer.inverse_in_place(&mut v, &mut s, false)?;
        }
        Ok(SpherePoint::from_raw(v))
    }

    /// `ln p(x)`. The base is uniform, so the first-acting layer never has
    /// to be inverted: its density factor depends only on its output.
    pub fn log_prob(&self, x: &SpherePoint) -> Result<f64> {
        self.log_prob_coords(x.coords())
    }

    /// [`log_prob`](Self::log_prob) on raw coordinates assumed to be unit norm.
    pub fn log_prob_coords(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let mut v = x.to_vec();
        let mut s = vec![0.0; self.dim];
        let mut acc = uniform_log_density(self.dim);
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            acc += layer.inverse_in_place(&mut v, &mut s, i == last)?;
        }
        Ok(acc)
    }

    /// `ln p` for many points, in parallel when the `parallel` feature is on.
    /// Results are in input order and independent of the thread count.
    pub fn log_prob_batch(&self, points: &[SpherePoint]) -> Result<Vec<f64>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            points.par_iter().map(|p| self.log_prob(p)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            points.iter().map(|p| self.log_prob(p)).collect()
        }
    }

    /// `n` independent draws with their exact log densities.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<(SpherePoint, f64)>> {
        if n == 0 {
            return Err(ZlpError::Domain("sample count must be >= 1".into()));
        }
        let base = uniform_log_density(self.dim);
        let mut s = vec![0.0; self.dim];
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut v = vec![0.0; self.dim];
            uniform_fill(rng, &mut v);
            let mut acc = 0.0;
            for layer in self.layers.iter().rev() {
                acc += layer.forward_in_place(&mut v, &mut s)?;
            }
            out.push((SpherePoint::from_raw(v), base - acc));
        }
        Ok(out)
    }
}
