//! Radiation integral and detector polarization projections.
//!
//! Amplitudes are the scattered field with the spherical wave `e^{ikr}/r`
//! stripped, phase-referenced to the coordinate origin:
//!
//! ```text
//! E∞(r̂) = iωμ₀/(4π) · h³ Σ (I − r̂r̂)·J(r') e^{−ik r̂·r'}
//! ```

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{C0, MU0};
use crate::quad::gauss_legendre;
use crate::solver::PolarizationCurrentField;
use crate::vec3::{dot, rdot, CVec3, Vec3};
use crate::{Error, Result, C64};

const UNIT_TOL: f64 = 1e-12;
const POLE_TOL: f64 = 1e-12;

/// Polarization a detector is sensitive to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PolarizationSelector {
    LinearZ,
    Theta,
    Phi,
    CircularL,
    CircularR,
    /// Unit complex vector in the `(θ̂, φ̂)` basis.
    Explicit([C64; 2]),
}

impl PolarizationSelector {
    pub fn explicit(e_theta: C64, e_phi: C64) -> Result<Self> {
        let n = (e_theta.norm_sqr() + e_phi.norm_sqr()).sqrt();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!(
                "explicit polarization has norm {n}, expected 1"
            )));
        }
        Ok(Self::Explicit([e_theta, e_phi]))
    }

    pub fn label(&self) -> String {
        match self {
            Self::LinearZ => "linear_z".into(),
            Self::Theta => "theta".into(),
            Self::Phi => "phi".into(),
            Self::CircularL => "circular_L".into(),
            Self::CircularR => "circular_R".into(),
            Self::Explicit([a, b]) => format!("explicit({a},{b})"),
        }
    }
}

impl std::str::FromStr for PolarizationSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear_z" | "z" => Ok(Self::LinearZ),
            "theta" => Ok(Self::Theta),
            "phi" => Ok(Self::Phi),
            "circular_L" | "L" => Ok(Self::CircularL),
            "circular_R" | "R" => Ok(Self::CircularR),
            _ => Err(Error::InvalidInput(format!(
                "unknown polarization `{s}` (expected linear_z, theta, phi, circular_L or circular_R)"
            ))),
        }
    }
}

/// Detector direction and polarization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorSpec {
    theta: f64,
    phi: f64,
    selector: PolarizationSelector,
}

impl DetectorSpec {
    /// `theta` must lie in `[0, π]`; `phi` is wrapped into `[0, 2π)`.
    pub fn new(theta: f64, phi: f64, selector: PolarizationSelector) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) || !phi.is_finite() {
            return Err(Error::InvalidInput(format!(
                "detector angles (θ={theta}, φ={phi}) out of range"
            )));
        }
        Ok(Self {
            theta,
            phi: phi.rem_euclid(2.0 * PI),
            selector,
        })
    }

    pub fn from_degrees(theta_deg: f64, phi_deg: f64, selector: PolarizationSelector) -> Result<Self> {
        Self::new(theta_deg.to_radians(), phi_deg.to_radians(), selector)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn direction(&self) -> (f64, f64) {
        (self.theta, self.phi)
    }

    pub fn selector(&self) -> PolarizationSelector {
        self.selector
    }
}

/// Transverse far-field components at one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FarFieldAmplitude {
    pub theta: f64,
    pub phi: f64,
    pub e_theta: C64,
    pub e_phi: C64,
}

impl FarFieldAmplitude {
    /// Cartesian field vector.
    pub fn vector(&self) -> CVec3 {
        let (_, t, p) = spherical_basis(self.theta, self.phi);
        std::array::from_fn(|i| self.e_theta * t[i] + self.e_phi * p[i])
    }

    /// Resolves a Cartesian vector on the spherical basis at `(θ, φ)`;
    /// the radial part is discarded.
    pub fn from_vector(theta: f64, phi: f64, v: CVec3) -> Self {
        let (_, t, p) = spherical_basis(theta, phi);
        Self {
            theta,
            phi,
            e_theta: rdot(t, v),
            e_phi: rdot(p, v),
        }
    }

    pub fn intensity(&self) -> f64 {
        self.e_theta.norm_sqr() + self.e_phi.norm_sqr()
    }
}

/// `(r̂, θ̂, φ̂)` at `(θ, φ)`. On the poles the frame of `φ = 0` is used.
pub fn spherical_basis(theta: f64, phi: f64) -> (Vec3, Vec3, Vec3) {
    let phi = if theta.sin().abs() < POLE_TOL { 0.0 } else { phi };
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (
        [st * cp, st * sp, ct],
        [ct * cp, ct * sp, -st],
        [-sp, cp, 0.0],
    )
}

/// Far-field amplitudes radiated by a current distribution at wavenumber
/// `k0`, one per `(θ, φ)` direction.
pub fn radiate(
    current: &PolarizationCurrentField,
    k0: f64,
    directions: &[(f64, f64)],
) -> Vec<FarFieldAmplitude> {
    let sources = current.sources();
    let omega = k0 * C0;
    let pref = C64::new(0.0, omega * MU0 / (4.0 * PI)) * current.cell_volume();
    directions
        .par_iter()
        .map(|&(theta, phi)| {
            let (r, _, _) = spherical_basis(theta, phi);
            let mut acc = [C64::default(); 3];
            for (pos, j) in &sources {
                let ph = C64::from_polar(1.0, -k0 * dot(r, *pos));
                for c in 0..3 {
                    acc[c] += j[c] * ph;
                }
            }
            FarFieldAmplitude::from_vector(theta, phi, acc.map(|v| v * pref))
        })
        .collect()
}

/// Detector-relevant scalar amplitude.
pub fn project(amp: &FarFieldAmplitude, selector: PolarizationSelector) -> C64 {
    let i = C64::new(0.0, 1.0);
    match selector {
        PolarizationSelector::LinearZ => -amp.e_theta * amp.theta.sin(),
        PolarizationSelector::Theta => amp.e_theta,
        PolarizationSelector::Phi => amp.e_phi,
        PolarizationSelector::CircularL => (amp.e_theta + i * amp.e_phi) * FRAC_1_SQRT_2,
        PolarizationSelector::CircularR => (amp.e_theta - i * amp.e_phi) * FRAC_1_SQRT_2,
        PolarizationSelector::Explicit([a, b]) => a.conj() * amp.e_theta + b.conj() * amp.e_phi,
    }
}

/// `∮ f(θ, φ) dΩ` with Gauss–Legendre nodes in `cos θ` and a uniform
/// `φ` grid offset by `phi_offset`.
pub fn integrate_sphere(
    n_theta: usize,
    n_phi: usize,
    phi_offset: f64,
    f: impl Fn(f64, f64) -> f64 + Sync,
) -> f64 {
    let nodes = gauss_legendre(n_theta, -1.0, 1.0);
    let dphi = 2.0 * PI / n_phi as f64;
    nodes
        .par_iter()
        .map(|&(mu, w)| {
            let theta = mu.clamp(-1.0, 1.0).acos();
            let ring: f64 = (0..n_phi)
                .map(|j| f(theta, phi_offset + j as f64 * dphi))
                .sum();
            w * ring * dphi
        })
        .sum()
}

/// Total radiated intensity `∮ |E∞|² dΩ` of a current distribution.
pub fn radiated_power(current: &PolarizationCurrentField, k0: f64, n_theta: usize, n_phi: usize) -> f64 {
    let nodes = gauss_legendre(n_theta, -1.0, 1.0);
    let dphi = 2.0 * PI / n_phi as f64;
    let dirs: Vec<(f64, f64)> = nodes
        .iter()
        .flat_map(|&(mu, _)| (0..n_phi).map(move |j| (mu.acos(), j as f64 * dphi)))
        .collect();
    let amps = radiate(current, k0, &dirs);
    amps.chunks(n_phi)
        .zip(&nodes)
        .map(|(ring, (_, w))| w * dphi * ring.iter().map(|a| a.intensity()).sum::<f64>())
        .sum()
}
