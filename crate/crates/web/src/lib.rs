//! Browser bindings: render a flow's density, probe it under the cursor and
//! draw samples.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;
use zlp_core::grid::{heat, mollweide_inverse, render_mollweide, render_ortho, sphere_point, DensityGrid, Raster};
use zlp_core::io::{ChainSpecFile, SampleFile};
use zlp_core::FlowChain;

#[derive(Clone, Copy)]
enum View {
    Equirect,
    Mollweide,
    Ortho { lon: f64, lat: f64, fov: f64 },
}

/// A built chain plus the view of its last rendering.
#[wasm_bindgen]
pub struct Viewer {
    chain: FlowChain,
    view: View,
    width: usize,
    height: usize,
}

#[wasm_bindgen]
impl Viewer {
    #[wasm_bindgen(constructor)]
    pub fn new(spec_json: &str) -> Result<Viewer, JsError> {
        let chain = ChainSpecFile::parse(spec_json)?.build()?;
        Ok(Viewer { chain, view: View::Equirect, width: 0, height: 0 })
    }

    pub fn dim(&self) -> usize {
        self.chain.dim()
    }

    pub fn layers(&self) -> usize {
        self.chain.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// RGBA heat map, `2·height` wide.
    pub fn render_equirect(&mut self, height: usize) -> Result<Vec<u8>, JsError> {
        let raster = DensityGrid::evaluate(&self.chain, height)?.as_raster();
        Ok(self.keep(View::Equirect, &raster))
    }

    /// RGBA heat map, `2·height` wide.
    pub fn render_mollweide(&mut self, height: usize) -> Result<Vec<u8>, JsError> {
        let raster = render_mollweide(&self.chain, height)?;
        Ok(self.keep(View::Mollweide, &raster))
    }

    /// Square RGBA heat map centred at `(lon, lat)` in degrees.
    pub fn render_ortho(&mut self, lon: f64, lat: f64, fov: f64, size: usize) -> Result<Vec<u8>, JsError> {
        let raster = render_ortho(&self.chain, (lon, lat), fov, size)?;
        Ok(self.keep(View::Ortho { lon, lat, fov }, &raster))
    }

    /// `[lon°, lat°, log density]` under pixel `(px, py)` of the last
    /// rendering; empty off the map.
    pub fn probe(&self, px: f64, py: f64) -> Result<Vec<f64>, JsError> {
        let Some(x) = self.pixel_point(px + 0.5, py + 0.5) else {
            return Ok(Vec::new());
        };
        let lat = x[2].clamp(-1.0, 1.0).asin();
        let lon = x[1].atan2(x[0]);
        Ok(vec![lon.to_degrees(), lat.to_degrees(), self.chain.log_prob_coords(&x)?])
    }

    /// `n` seeded draws as a CSV sample file with a `logp` column.
    pub fn sample_csv(&self, n: usize, seed: u64) -> Result<String, JsError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (points, log_probs) = self.chain.sample(&mut rng, n)?.into_iter().unzip();
        let mut out = Vec::new();
        SampleFile { dim: self.chain.dim(), points, log_probs: Some(log_probs) }.write(&mut out)?;
        Ok(String::from_utf8(out)?)
    }
}

impl Viewer {
    fn keep(&mut self, view: View, raster: &Raster) -> Vec<u8> {
        (self.view, self.width, self.height) = (view, raster.width, raster.height);
        rgba(raster)
    }

    fn pixel_point(&self, px: f64, py: f64) -> Option<[f64; 3]> {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(px >= 0.0 && px <= w && py >= 0.0 && py <= h) {
            return None;
        }
        match self.view {
            View::Equirect => Some(sphere_point(PI * py / h, 2.0 * PI * px / w)),
            View::Mollweide => {
                let (lon, lat) = mollweide_inverse(2.0 * SQRT_2 * (2.0 * px / w - 1.0), SQRT_2 * (1.0 - 2.0 * py / h))?;
                Some(sphere_point(FRAC_PI_2 - lat, lon))
            }
            View::Ortho { lon, lat, fov } => {
                let (lon, lat) = (lon.to_radians(), lat.to_radians());
                let half = (0.5 * fov.to_radians()).sin();
                let (u, v) = (half * (2.0 * px / w - 1.0), half * (1.0 - 2.0 * py / h));
                let r2 = u * u + v * v;
                if r2 > 1.0 {
                    return None;
                }
                let c = sphere_point(FRAC_PI_2 - lat, lon);
                let east = [-lon.sin(), lon.cos(), 0.0];
                let north = [-lat.sin() * lon.cos(), -lat.sin() * lon.sin(), lat.cos()];
                let w = (1.0 - r2).sqrt();
                Some(std::array::from_fn(|k| u * east[k] + v * north[k] + w * c[k]))
            }
        }
    }
}

/// Density relative to the peak through the heat map; off-map pixels are
/// transparent.
fn rgba(raster: &Raster) -> Vec<u8> {
    let max = raster.values.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::with_capacity(4 * raster.values.len());
    for v in &raster.values {
        if v.is_nan() {
            out.extend_from_slice(&[0, 0, 0, 0]);
        } else {
            let [r, g, b] = heat((v - max).exp());
            out.extend_from_slice(&[r, g, b, 255]);
        }
    }
    out
}
