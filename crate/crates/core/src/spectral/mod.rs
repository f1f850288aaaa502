//! Fourier-space representation of periodic fields and the linear operators
//! acting on them.

mod field;
mod grid;
mod ops;

pub use field::{
    PhysicalField, PhysicalVectorField, SpectralField, VelocityField, STRUCT_TOL,
};
pub use grid::{Grid, TransformScratch};
pub use ops::{
    cordoba_density, damping, lambda_pow, leray_project, mollify, norm,
    riesz_perp, CordobaDensity, NormKind, RESOLUTION_TAIL_TOL,
};

pub(crate) use ops::{bump_raw, kernel_table};
