//! Angle-resolved two-photon interference from dielectric scatterers.
//!
//! Each incident photon mode is treated as a classical plane wave. The
//! induced polarization current is found from the volume integral equation
//! on a uniform voxel grid, radiated to the far field, projected on the
//! detector polarizations and fed into the second-order correlation
//! function and the time-domain coincidence count.
//!
//! Pipeline, one module per stage:
//!
//! * [`scene`] voxelized permittivity maps (spheres, slabs, nanofin arrays)
//! * [`green`] free-space dyadic Green's function and its circulant kernel
//! * [`solver`] FFT-accelerated operator, BiCGStab and preconditioners
//! * [`far_field`] radiation integral and polarization projections
//! * [`correlation`] g², classical P², coincidence curves
//! * [`mie`] analytic sphere reference used for validation

pub mod constants;
pub mod correlation;
mod error;
pub mod far_field;
pub mod fft;
pub mod green;
pub mod mie;
pub mod quad;
pub mod scene;
pub mod solver;
pub mod vec3;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
