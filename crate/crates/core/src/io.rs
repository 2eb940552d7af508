//! File formats: JSON chain specifications and CSV sample files.
//!
//! A chain spec holds either an explicit `layers` list or a `preset` block.
//! Layers are listed in application order with `"applies_first": true` on
//! the first element; a list whose last element carries the marker is read
//! as written (outermost-first) order instead.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain::{FlowChain, LayerSpec};
use crate::error::{Result, ZlpError};
use crate::linear_project::{LinearProject, LpVariant};
use crate::preset::{build_preset, Family, FamilyPreset, GenericBlock};
use crate::sphere::{rotation_to, Rotation, SpherePoint};
use crate::zoom::{FisherZoom, ZoomMethod, ZoomParams};

/// Top-level JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpecFile {
    pub dimension: usize,
    /// Optional family tag for explicit layer lists, checked by `zlp check`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<PresetFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerFile {
    Zoom {
        kappa: f64,
        #[serde(default, skip_serializing_if = "is_auto")]
        method: ZoomMethod,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        applies_first: Option<bool>,
    },
    LinearProject {
        variant: LpVariant,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scales: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigmas: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        applies_first: Option<bool>,
    },
    Rotation {
        matrix: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        applies_first: Option<bool>,
    },
}

fn is_auto(m: &ZoomMethod) -> bool {
    *m == ZoomMethod::Auto
}

impl LayerFile {
    fn applies_first(&self) -> bool {
        let flag = match self {
            LayerFile::Zoom { applies_first, .. }
            | LayerFile::LinearProject { applies_first, .. }
            | LayerFile::Rotation { applies_first, .. } => applies_first,
        };
        flag.unwrap_or(false)
    }

    fn set_applies_first(&mut self, value: bool) {
        let flag = match self {
            LayerFile::Zoom { applies_first, .. }
            | LayerFile::LinearProject { applies_first, .. }
            | LayerFile::Rotation { applies_first, .. } => applies_first,
        };
        *flag = if value { Some(true) } else { None };
    }

    fn to_layer(&self, dim: usize) -> Result<LayerSpec> {
        Ok(match self {
            LayerFile::Zoom { kappa, method, .. } => {
                LayerSpec::Zoom(FisherZoom::with_method(ZoomParams::new(*kappa, dim)?, *method)?)
            }
            LayerFile::Rotation { matrix, .. } => LayerSpec::Rotate(Rotation::orthonormalized(to_matrix(matrix, dim)?)?),
            LayerFile::LinearProject { variant, matrix, scales, sigmas, kappa, .. } => {
                let lp = match variant {
                    LpVariant::Full => {
                        let m = matrix.as_ref().ok_or_else(|| missing("linear_project (full)", "matrix"))?;
                        LinearProject::full(to_matrix(m, dim)?)?
                    }
                    LpVariant::DiagonalS => {
                        let s = scales.as_ref().ok_or_else(|| missing("linear_project (diagonal_s)", "scales"))?;
                        expect_len("scales", s.len(), dim)?;
                        LinearProject::diagonal(s)?
                    }
                    LpVariant::ConstrainedSc => {
                        let s = sigmas.as_ref().ok_or_else(|| missing("linear_project (constrained_sc)", "sigmas"))?;
                        let k = kappa.ok_or_else(|| missing("linear_project (constrained_sc)", "kappa"))?;
                        expect_len("sigmas", s.len(), dim - 1)?;
                        LinearProject::constrained_sc(s, k)?
                    }
                };
                LayerSpec::LinearProject(lp)
            }
        })
    }

    fn from_layer(layer: &LayerSpec) -> Self {
        match layer {
            LayerSpec::Zoom(z) => {
                let method = if z.method() == FisherZoom::new(z.params()).map(|d| d.method()).unwrap_or(z.method()) {
                    ZoomMethod::Auto
                } else {
                    z.method()
                };
                LayerFile::Zoom { kappa: z.kappa(), method, applies_first: None }
            }
            LayerSpec::Rotate(r) => LayerFile::Rotation { matrix: from_matrix(r.matrix()), applies_first: None },
            LayerSpec::LinearProject(lp) => {
                let (matrix, scales, sigmas, kappa) = match lp.variant() {
                    LpVariant::Full => (Some(from_matrix(lp.matrix())), None, None, None),
                    LpVariant::DiagonalS => (None, Some(lp.scales()), None, None),
                    LpVariant::ConstrainedSc => {
                        let mut s = lp.scales();
                        s.pop();
                        (None, None, Some(s), lp.kappa())
                    }
                };
                LayerFile::LinearProject { variant: lp.variant(), matrix, scales, sigmas, kappa, applies_first: None }
            }
        }
    }
}

/// Preset shorthand; which fields apply depends on `family`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetFile {
    pub family: Option<Family>,
    /// Mean direction; the orientation is `rotation_to(mu)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// Full orientation, alternative to `mu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Kent scale on the 2-sphere: `σ = (u, 1/u)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    /// Shared scale of the first `D - 1` axes for the symmetric fb4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<BlockFile>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<Vec<f64>>>,
    pub kappa: f64,
    pub matrix: Vec<Vec<f64>>,
}

fn missing(what: &str, field: &str) -> ZlpError {
    ZlpError::Spec(format!("{what} requires field '{field}'"))
}

fn expect_len(what: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(ZlpError::Spec(format!("'{what}' must have {expected} entries, got {found}")));
    }
    Ok(())
}

fn to_matrix(rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(ZlpError::Spec(format!("matrix must be {dim}x{dim}")));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn orientation(mu: &Option<Vec<f64>>, rotation: &Option<Vec<Vec<f64>>>, dim: usize) -> Result<Rotation> {
    match (mu, rotation) {
        (Some(_), Some(_)) => Err(ZlpError::Spec("give either 'mu' or 'rotation', not both".into())),
        (Some(m), None) => {
            expect_len("mu", m.len(), dim)?;
            Ok(rotation_to(&SpherePoint::normalize(m.clone())?))
        }
        (None, Some(r)) => Rotation::orthonormalized(to_matrix(r, dim)?),
        (None, None) => Ok(Rotation::identity(dim)),
    }
}

impl PresetFile {
    pub fn to_preset(&self, dim: usize) -> Result<FamilyPreset> {
        let family = self.family.ok_or_else(|| missing("preset", "family"))?;
        let kappa = || self.kappa.ok_or_else(|| missing(family.name(), "kappa"));
        let rotation = || orientation(&self.mu, &self.rotation, dim);
        let sigmas = || -> Result<Vec<f64>> {
            match (&self.sigmas, self.u) {
                (Some(_), Some(_)) => Err(ZlpError::Spec("give either 'u' or 'sigmas', not both".into())),
                (Some(s), None) => {
                    expect_len("sigmas", s.len(), dim - 1)?;
                    Ok(s.clone())
                }
                (None, Some(u)) if dim == 3 => Ok(vec![u, 1.0 / u]),
                (None, Some(_)) => Err(ZlpError::Spec("'u' is only defined for D = 3; use 'sigmas'".into())),
                (None, None) => Ok(vec![1.0; dim - 1]),
            }
        };
        let scales = || -> Result<Vec<f64>> {
            let s = self.scales.as_ref().ok_or_else(|| missing(family.name(), "scales"))?;
            expect_len("scales", s.len(), dim)?;
            Ok(s.clone())
        };
        let matrix = || to_matrix(self.matrix.as_ref().ok_or_else(|| missing(family.name(), "matrix"))?, dim);
        Ok(match family {
            Family::Vmf => FamilyPreset::Vmf { rotation: rotation()?, kappa: kappa()? },
            Family::Bingham if self.matrix.is_some() => {
                if self.mu.is_some() || self.rotation.is_some() || self.scales.is_some() {
                    return Err(ZlpError::Spec("bingham with 'matrix' takes no orientation or scales".into()));
                }
                FamilyPreset::BinghamFull { matrix: matrix()? }
            }
            Family::Bingham => FamilyPreset::Bingham { rotation: rotation()?, scales: scales()? },
            Family::Fb4 => {
                let (scales, symmetric) = match self.sigma {
                    Some(s) => {
                        if self.scales.is_some() {
                            return Err(ZlpError::Spec("give either 'sigma' or 'scales' for fb4".into()));
                        }
                        let mut v = vec![s; dim - 1];
                        v.push(1.0);
                        (v, true)
                    }
                    None => (scales()?, false),
                };
                FamilyPreset::Fb4 { rotation: rotation()?, kappa: kappa()?, scales, symmetric }
            }
            Family::Kent => FamilyPreset::Kent { rotation: rotation()?, kappa: kappa()?, sigmas: sigmas()? },
            Family::Fb6 => {
                FamilyPreset::Fb6 { rotation: rotation()?, kappa: kappa()?, sigmas: sigmas()?, scales: scales()? }
            }
            Family::Fb8 => {
                FamilyPreset::Fb8 { rotation: rotation()?, kappa: kappa()?, sigmas: sigmas()?, matrix: matrix()? }
            }
            Family::Generic => {
                let blocks = self.blocks.as_ref().ok_or_else(|| missing("generic", "blocks"))?;
                let blocks = blocks
                    .iter()
                    .map(|b| {
                        Ok(GenericBlock {
                            rotation: orientation(&b.mu, &b.rotation, dim)?,
                            kappa: b.kappa,
                            matrix: to_matrix(&b.matrix, dim)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                FamilyPreset::Generic { blocks }
            }
        })
    }
}

impl ChainSpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: ChainSpecFile = serde_json::from_str(text)?;
        if spec.layers.is_some() && spec.preset.is_some() {
            return Err(ZlpError::Spec("'layers' and 'preset' are mutually exclusive".into()));
        }
        if spec.dimension < 2 {
            return Err(ZlpError::Spec(format!("dimension must be >= 2, got {}", spec.dimension)));
        }
        Ok(spec)
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::parse(&text)
    }

    /// The preset this file describes, if it uses the shorthand.
    pub fn preset(&self) -> Result<Option<FamilyPreset>> {
        self.preset.as_ref().map(|p| p.to_preset(self.dimension)).transpose()
    }

    /// Family tag: the preset's family or the explicit tag.
    pub fn family(&self) -> Option<Family> {
        self.preset.as_ref().and_then(|p| p.family).or(self.family)
    }

    pub fn build(&self) -> Result<FlowChain> {
        if let Some(p) = self.preset()? {
            let chain = build_preset(&p)?;
            if chain.dim() != self.dimension {
                return Err(ZlpError::DimensionMismatch { expected: self.dimension, found: chain.dim() });
            }
            return Ok(chain);
        }
        let Some(layers) = &self.layers else {
            return FlowChain::empty(self.dimension);
        };
        let marked: Vec<usize> = layers.iter().enumerate().filter(|(_, l)| l.applies_first()).map(|(i, _)| i).collect();
        let written_order = match (marked.as_slice(), layers.len()) {
            (_, 0) => true,
            ([0], _) => false,
            ([k], n) if *k == n - 1 => true,
            _ => {
                return Err(ZlpError::Spec(
                    "exactly one layer, the first or the last, must carry \"applies_first\": true".into(),
                ))
            }
        };
        let mut built = layers.iter().map(|l| l.to_layer(self.dimension)).collect::<Result<Vec<_>>>()?;
        if !written_order {
            built.reverse();
        }
        FlowChain::new(self.dimension, built)
    }

    /// Explicit-layer document for a chain, in application order.
    pub fn from_chain(chain: &FlowChain, family: Option<Family>) -> Self {
        let mut layers: Vec<LayerFile> = chain.layers().iter().rev().map(LayerFile::from_layer).collect();
        if let Some(first) = layers.first_mut() {
            first.set_applies_first(true);
        }
        Self { dimension: chain.dim(), family, layers: Some(layers), preset: None }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Tolerance on `| |x| - 1 |` for rows of a sample file.
pub const SAMPLE_NORM_TOLERANCE: f64 = 1e-9;

/// Points (and optionally their log densities) from a CSV sample file.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFile {
    pub dim: usize,
    pub points: Vec<SpherePoint>,
    pub log_probs: Option<Vec<f64>>,
}

impl SampleFile {
    /// Header `x1,…,xD[,logp]`; each row must be within `1e-9` of unit norm.
    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
        let headers = reader.headers().map_err(csv_err)?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let has_logp = names.last() == Some(&"logp");
        let dim = names.len() - usize::from(has_logp);
        for (k, n) in names[..dim].iter().enumerate() {
            if *n != format!("x{}", k + 1) {
                return Err(ZlpError::Spec(format!("sample header column {} is '{n}', expected 'x{}'", k + 1, k + 1)));
            }
        }
        if dim < 2 {
            return Err(ZlpError::Spec("sample file needs at least columns x1,x2".into()));
        }
        let mut points = Vec::new();
        let mut logps = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != names.len() {
                return Err(ZlpError::Spec(format!("row {} has {} fields, expected {}", row + 1, rec.len(), names.len())));
            }
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| ZlpError::Spec(format!("row {}: '{s}' is not a number", row + 1))))
                .collect::<Result<Vec<f64>>>()?;
            let coords = vals[..dim].to_vec();
            let n = coords.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !((n - 1.0).abs() <= SAMPLE_NORM_TOLERANCE) {
                return Err(ZlpError::Domain(format!("row {} has norm {n}, off the unit sphere", row + 1)));
            }
            points.push(SpherePoint::normalize(coords)?);
            if has_logp {
                logps.push(vals[dim]);
            }
        }
        Ok(Self { dim, points, log_probs: has_logp.then_some(logps) })
    }

    /// Writes with 17 significant digits.
    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        if self.log_probs.is_some() {
            header.push("logp".into());
        }
        writer.write_record(&header).map_err(csv_err)?;
        for (i, p) in self.points.iter().enumerate() {
            let mut rec: Vec<String> = p.coords().iter().map(|v| format!("{v:.16e}")).collect();
            if let Some(lp) = &self.log_probs {
                rec.push(format!("{:.16e}", lp[i]));
            }
            writer.write_record(&rec).map_err(csv_err)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> ZlpError {
    ZlpError::Spec(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_and_layers_are_exclusive() {
        let text = r#"{"dimension":3,"layers":[],"preset":{"family":"vmf","kappa":1.0}}"#;
        assert!(ChainSpecFile::parse(text).is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ChainSpecFile::parse(r#"{"dimension":3,"bogus":1}"#).is_err());
        assert!(ChainSpecFile::parse(r#"{"dimension":3,"layers":[{"kind":"zoom","kappa":1,"x":2}]}"#).is_err());
    }

    #[test]
    fn marker_orientation() {
        let app = r#"{"dimension":3,"layers":[
            {"kind":"zoom","kappa":5.0,"applies_first":true},
            {"kind":"rotation","matrix":[[0,0,1],[0,1,0],[-1,0,0]]}]}"#;
        let written = r#"{"dimension":3,"layers":[
            {"kind":"rotation","matrix":[[0,0,1],[0,1,0],[-1,0,0]]},
            {"kind":"zoom","kappa":5.0,"applies_first":true}]}"#;
        let a = ChainSpecFile::parse(app).unwrap().build().unwrap();
        let b = ChainSpecFile::parse(written).unwrap().build().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layers()[0].kind(), "rotation");
        let none = r#"{"dimension":3,"layers":[{"kind":"zoom","kappa":5.0},{"kind":"zoom","kappa":1.0}]}"#;
        assert!(ChainSpecFile::parse(none).unwrap().build().is_err());
    }

    #[test]
    fn round_trip_through_json() {
        let text = r#"{"dimension":3,"preset":{"family":"fb6","mu":[1,2,3],"kappa":40,"u":1.3,"scales":[1,2,0.5]}}"#;
        let chain = ChainSpecFile::parse(text).unwrap().build().unwrap();
        let doc = ChainSpecFile::from_chain(&chain, Some(Family::Fb6));
        let again = ChainSpecFile::parse(&doc.to_json().unwrap()).unwrap().build().unwrap();
        let x = SpherePoint::normalize(vec![0.3, 0.1, 0.8]).unwrap();
        assert!((chain.log_prob(&x).unwrap() - again.log_prob(&x).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn sample_file_round_trip_and_validation() {
        let pts = vec![SpherePoint::normalize(vec![0.1, 0.2, 0.3]).unwrap(), SpherePoint::north_pole(3)];
        let f = SampleFile { dim: 3, points: pts.clone(), log_probs: Some(vec![-1.0, 2.5]) };
        let mut buf = Vec::new();
        f.write(&mut buf).unwrap();
        let back = SampleFile::read(&buf[..]).unwrap();
        assert_eq!(back.log_probs, f.log_probs);
        for (a, b) in back.points.iter().zip(&f.points) {
            assert!(a.coords().iter().zip(b.coords()).all(|(u, v)| (u - v).abs() < 1e-15));
        }
        let bad = "x1,x2,x3\n1,1,0\n";
        assert!(SampleFile::read(bad.as_bytes()).is_err());
        let bad_header = "a,b\n1,0\n";
        assert!(SampleFile::read(bad_header.as_bytes()).is_err());
    }
}
