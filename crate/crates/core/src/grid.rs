//! Density maps of flows on the 2-sphere: the equirectangular log-density
//! grid, its quadrature and extremum count, and raster views in Mollweide
//! and orthographic projection.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use crate::chain::FlowChain;
use crate::error::{Result, ZlpError};

/// Point on the 2-sphere at colatitude `theta` and longitude `phi`.
pub fn sphere_point(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

fn require_d3(chain: &FlowChain) -> Result<()> {
    if chain.dim() != 3 {
        return Err(ZlpError::Domain(format!("density maps need D = 3, got D = {}", chain.dim())));
    }
    Ok(())
}

/// Evaluate `f(row)` for every row, in parallel when enabled; output in row order.
fn map_rows<F>(rows: usize, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..rows).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..rows).map(f).collect()
    }
}

/// Log density on cell centres `θ_i = (i + ½)π/rows`, `φ_j = (j + ½)2π/cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DensityGrid {
    /// `res` colatitude rows and `2·res` longitude columns.
    pub fn evaluate(chain: &FlowChain, res: usize) -> Result<Self> {
        require_d3(chain)?;
        if res < 2 {
            return Err(ZlpError::Domain("grid resolution must be >= 2".into()));
        }
        let rows = res;
        let cols = 2 * res;
        let evaluated = map_rows(rows, |i| {
            let theta = (i as f64 + 0.5) * PI / rows as f64;
            (0..cols)
                .map(|j| {
                    let phi = (j as f64 + 0.5) * 2.0 * PI / cols as f64;
                    chain.log_prob_coords(&sphere_point(theta, phi))
                })
                .collect()
        })?;
        let values: Vec<f64> = evaluated.into_iter().flatten().collect();
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(ZlpError::Domain(format!("non-finite log density {bad} on the grid")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * PI / self.rows as f64
    }

    pub fn phi(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * 2.0 * PI / self.cols as f64
    }

    /// Midpoint rule with exact band areas `(cos θ_top - cos θ_bottom) Δφ`.
    pub fn integral(&self) -> f64 {
        let dphi = 2.0 * PI / self.cols as f64;
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for i in 0..self.rows {
            let top = i as f64 * PI / self.rows as f64;
            let bottom = (i + 1) as f64 * PI / self.rows as f64;
            let band = (top.cos() - bottom.cos()) * dphi;
            let row: f64 = self.values[i * self.cols..(i + 1) * self.cols].iter().map(|v| (v - max).exp()).sum();
            total += band * row;
        }
        total * max.exp()
    }

    /// Neighbours of cell `(i, j)`: the 8-neighbourhood with longitude
    /// wrap-around; above the first and below the last row the neighbours
    /// are the cells across the pole.
    fn neighbours(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let rows = self.rows as isize;
        let cols = self.cols as isize;
        let half = cols / 2;
        (-1isize..=1).flat_map(move |di| (-1isize..=1).map(move |dj| (di, dj))).filter(|d| *d != (0, 0)).map(
            move |(di, dj)| {
                let mut r = i as isize + di;
                let mut c = j as isize + dj;
                if r < 0 {
                    r = 0;
                    c += half;
                } else if r >= rows {
                    r = rows - 1;
                    c += half;
                }
                (r as usize, c.rem_euclid(cols) as usize)
            },
        )
    }

    /// Cells strictly above (or below) every neighbour.
    pub fn local_extrema(&self) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let mut maxima = Vec::new();
        let mut minima = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = self.get(i, j);
                let mut is_max = true;
                let mut is_min = true;
                for (r, c) in self.neighbours(i, j) {
                    if (r, c) == (i, j) {
                        continue;
                    }
                    let w = self.get(r, c);
                    is_max &= v > w;
                    is_min &= v < w;
                }
                if is_max {
                    maxima.push((i, j));
                }
                if is_min {
                    minima.push((i, j));
                }
            }
        }
        (maxima, minima)
    }

    pub fn argmax(&self) -> (usize, usize) {
        let k = argmax(&self.values).unwrap_or(0);
        (k / self.cols, k % self.cols)
    }

    /// CSV with `#` header lines, one grid row per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# equirectangular log-density grid, D=3")?;
        writeln!(w, "# rows={} cols={}", self.rows, self.cols)?;
        writeln!(w, "# theta_i=(i+0.5)*pi/rows colatitude, phi_j=(j+0.5)*2*pi/cols longitude")?;
        for i in 0..self.rows {
            write_row(&mut w, &self.values[i * self.cols..(i + 1) * self.cols])?;
        }
        Ok(())
    }

    pub fn as_raster(&self) -> Raster {
        Raster { width: self.cols, height: self.rows, values: self.values.clone() }
    }
}

fn write_row<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut line = String::with_capacity(values.len() * 24);
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            line.push(',');
        }
        if v.is_nan() {
            line.push_str("nan");
        } else {
            line.push_str(&format!("{v:.16e}"));
        }
    }
    writeln!(w, "{line}")?;
    Ok(())
}

fn argmax(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, _)| k)
}

/// Row-major image of log densities; `NaN` marks pixels off the projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn argmax(&self) -> Option<(usize, usize)> {
        argmax(&self.values).map(|k| (k % self.width, k / self.width))
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        for line in header.lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# width={} height={} (nan = outside projection)", self.width, self.height)?;
        for y in 0..self.height {
            write_row(&mut w, &self.values[y * self.width..(y + 1) * self.width])?;
        }
        Ok(())
    }

    /// Densities relative to the peak, `exp(v - max)` in `[0, 1]`.
    fn relative_density(&self) -> Vec<Option<f64>> {
        let max = self.values.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
        self.values.iter().map(|v| if v.is_nan() { None } else { Some((v - max).exp()) }).collect()
    }

    /// Binary PGM (P5), linear in density; off-projection pixels are black.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> =
            self.relative_density().into_iter().map(|p| p.map_or(0, |p| (p * 255.0).round() as u8)).collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    /// Binary PPM (P6) through a heat colour map.
    pub fn write_ppm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let mut bytes = Vec::with_capacity(self.values.len() * 3);
        for p in self.relative_density() {
            bytes.extend_from_slice(&p.map_or([255, 255, 255], heat));
        }
        w.write_all(&bytes)?;
        Ok(())
    }
}

/// Black → purple → orange → pale yellow.
pub fn heat(p: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] =
        [[0.0, 0.0, 4.0], [87.0, 16.0, 110.0], [188.0, 55.0, 84.0], [249.0, 142.0, 9.0], [252.0, 255.0, 164.0]];
    let x = p.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let k = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - k as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (STOPS[k][c] + f * (STOPS[k + 1][c] - STOPS[k][c])).round() as u8;
    }
    out
}

/// Whole-sphere equal-area view, `width = 2·height`, longitude 0 at the centre.
pub fn render_mollweide(chain: &FlowChain, height: usize) -> Result<Raster> {
    require_d3(chain)?;
    if height < 2 {
        return Err(ZlpError::Domain("raster height must be >= 2".into()));
    }
    let width = 2 * height;
    let rows = map_rows(height, |py| {
        let y = SQRT_2 * (1.0 - 2.0 * (py as f64 + 0.5) / height as f64);
        (0..width)
            .map(|px| {
                let x = 2.0 * SQRT_2 * (2.0 * (px as f64 + 0.5) / width as f64 - 1.0);
                match mollweide_inverse(x, y) {
                    Some((lon, lat)) => chain.log_prob_coords(&sphere_point(0.5 * PI - lat, lon)),
                    None => Ok(f64::NAN),
                }
            })
            .collect()
    })?;
    Ok(Raster { width, height, values: rows.into_iter().flatten().collect() })
}

/// `(longitude, latitude)` of a Mollweide plane point, if on the map.
pub fn mollweide_inverse(x: f64, y: f64) -> Option<(f64, f64)> {
    let s = y / SQRT_2;
    if s.abs() > 1.0 {
        return None;
    }
    let aux = s.asin();
    let c = aux.cos();
    let lon = if c > 0.0 { PI * x / (2.0 * SQRT_2 * c) } else { 0.0 };
    if lon.abs() > PI {
        return None;
    }
    let lat = ((2.0 * aux + (2.0 * aux).sin()) / PI).clamp(-1.0, 1.0).asin();
    Some((lon, lat))
}

/// Orthographic view of the hemisphere around `(lon, lat)` (degrees);
/// `fov_deg` is the full angular width shown, at most 180.
pub fn render_ortho(chain: &FlowChain, center_lon_lat: (f64, f64), fov_deg: f64, size: usize) -> Result<Raster> {
    require_d3(chain)?;
    let (lon, lat) = center_lon_lat;
    if !(fov_deg > 0.0 && fov_deg <= 180.0) {
        return Err(ZlpError::Domain(format!("field of view {fov_deg} must lie in (0, 180] degrees")));
    }
    if !(-90.0..=90.0).contains(&lat) || !lon.is_finite() {
        return Err(ZlpError::Domain(format!("centre latitude {lat} outside [-90, 90]")));
    }
    if size < 2 {
        return Err(ZlpError::Domain("raster size must be >= 2".into()));
    }
    let (lon, lat) = (lon.to_radians(), lat.to_radians());
    let centre = sphere_point(0.5 * PI - lat, lon);
    let east = [-lon.sin(), lon.cos(), 0.0];
    let north = [-lat.sin() * lon.cos(), -lat.sin() * lon.sin(), lat.cos()];
    let half = (0.5 * fov_deg.to_radians()).sin();
    let rows = map_rows(size, |py| {
        let v = half * (1.0 - 2.0 * (py as f64 + 0.5) / size as f64);
        (0..size)
            .map(|px| {
                let u = half * (2.0 * (px as f64 + 0.5) / size as f64 - 1.0);
                let r2 = u * u + v * v;
                if r2 > 1.0 {
                    return Ok(f64::NAN);
                }
                let w = (1.0 - r2).sqrt();
                let p: Vec<f64> = (0..3).map(|k| u * east[k] + v * north[k] + w * centre[k]).collect();
                chain.log_prob_coords(&p)
            })
            .collect()
    })?;
    Ok(Raster { width: size, height: size, values: rows.into_iter().flatten().collect() })
}
