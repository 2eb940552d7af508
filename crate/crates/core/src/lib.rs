//! Normalizing flows on the sphere built from Fisher zooms and linear
//! projections.

pub mod chain;
pub mod error;
pub mod fit;
pub mod grid;
pub mod io;
pub mod linear_project;
pub mod preset;
pub mod special;
pub mod sphere;
pub mod verify;
pub mod zoom;

pub use chain::{FlowChain, LayerSpec};
pub use error::{Result, ZlpError};
pub use linear_project::{central_ag_log_pdf, kent_constraint_interval, make_constrained_sc, LinearProject, LpVariant};
pub use preset::{build_preset, kent_tangent_gaussian_check, random_linear_map, Family, FamilyPreset, GenericBlock};
pub use sphere::{
    numeric_density_update, random_rotation, rotation_to, surface_volume, tangent_basis, uniform_log_density, uniform_sample,
    Rotation, SpherePoint,
};
pub use zoom::{FisherZoom, ZoomMethod, ZoomParams};
