//! Mie series for a homogeneous sphere centered at the origin.
//!
//! Coefficients follow the Bohren–Huffman recurrences: the logarithmic
//! derivative `D_n(mx)` is computed by downward recurrence and the
//! Riccati–Bessel functions `ψ_n`, `χ_n` upward, with `ξ_n = ψ_n − iχ_n`.
//! Far fields of arbitrary plane-wave incidence are obtained by rotating the
//! canonical frame (incidence along +z, polarization along +x).

use serde::Serialize;

use crate::far_field::{spherical_basis, FarFieldAmplitude};
use crate::solver::PlaneWaveMode;
use crate::vec3::{cross, CVec3, Vec3};
use crate::{Error, Result, C64};

/// Factor relating [`mie_far_field`] to [`crate::far_field::radiate`]. Both
/// return the physical scattered amplitude with `e^{ikr}/r` stripped and the
/// phase referenced to the sphere center, so the factor is one.
pub const PHASE_CONVENTION: C64 = C64::new(1.0, 0.0);

const MAX_SIZE_PARAMETER: f64 = 2.0e4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MieSeries {
    x: f64,
    n_rel: C64,
    a: Vec<C64>,
    b: Vec<C64>,
}

/// Standard truncation order `⌈x + 4x^{1/3} + 2⌉`.
pub fn truncation_order(x: f64) -> usize {
    (x + 4.0 * x.cbrt() + 2.0).ceil() as usize
}

pub fn mie_coefficients(x: f64, n_rel: C64) -> Result<MieSeries> {
    mie_coefficients_with_order(x, n_rel, truncation_order(x))
}

/// Coefficients up to order `n_max`, which may exceed the standard bound.
pub fn mie_coefficients_with_order(x: f64, n_rel: C64, n_max: usize) -> Result<MieSeries> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidInput(format!("size parameter {x} must be positive")));
    }
    if x > MAX_SIZE_PARAMETER {
        return Err(Error::Range(format!("size parameter {x} too large")));
    }
    if !n_rel.is_finite() || n_rel.norm() == 0.0 {
        return Err(Error::InvalidInput(format!("invalid refractive index {n_rel}")));
    }
    let n_max = n_max.max(truncation_order(x));
    let mx = n_rel * x;
    let n_start = n_max.max(mx.norm().ceil() as usize) + 15;
    let mut d = vec![C64::default(); n_start + 1];
    for n in (1..=n_start).rev() {
        let r = n as f64 / mx;
        d[n - 1] = r - 1.0 / (d[n] + r);
    }

    let (mut psi0, mut psi1) = (x.cos(), x.sin());
    let (mut chi0, mut chi1) = (-x.sin(), x.cos());
    let mut xi1 = C64::new(psi1, -chi1);
    let mut a = Vec::with_capacity(n_max);
    let mut b = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let nf = n as f64;
        let psi = (2.0 * nf - 1.0) * psi1 / x - psi0;
        let chi = (2.0 * nf - 1.0) * chi1 / x - chi0;
        let xi = C64::new(psi, -chi);
        let ta = d[n] / n_rel + nf / x;
        let tb = d[n] * n_rel + nf / x;
        let an = (ta * psi - psi1) / (ta * xi - xi1);
        let bn = (tb * psi - psi1) / (tb * xi - xi1);
        if !an.is_finite() || !bn.is_finite() {
            return Err(Error::Range(format!("recurrence overflow at order {n}")));
        }
        a.push(an);
        b.push(bn);
        psi0 = psi1;
        psi1 = psi;
        chi0 = chi1;
        chi1 = chi;
        xi1 = C64::new(psi1, -chi1);
    }
    Ok(MieSeries { x, n_rel, a, b })
}

impl MieSeries {
    pub fn size_parameter(&self) -> f64 {
        self.x
    }

    pub fn relative_index(&self) -> C64 {
        self.n_rel
    }

    pub fn order(&self) -> usize {
        self.a.len()
    }

    /// `a_n` for `n = 1..=order`, stored from index 0.
    pub fn a(&self) -> &[C64] {
        &self.a
    }

    pub fn b(&self) -> &[C64] {
        &self.b
    }

    /// Extinction efficiency `(2/x²) Σ (2n+1) Re(a_n + b_n)`.
    pub fn q_ext(&self) -> f64 {
        let s: f64 = self
            .a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(i, (a, b))| (2 * i + 3) as f64 * (a + b).re)
            .sum();
        2.0 * s / (self.x * self.x)
    }

    /// Scattering efficiency `(2/x²) Σ (2n+1)(|a_n|² + |b_n|²)`.
    pub fn q_sca(&self) -> f64 {
        let s: f64 = self
            .a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(i, (a, b))| (2 * i + 3) as f64 * (a.norm_sqr() + b.norm_sqr()))
            .sum();
        2.0 * s / (self.x * self.x)
    }

    /// Amplitude functions `(S1, S2)` at scattering angle `θ`.
    pub fn amplitudes(&self, theta: f64) -> (C64, C64) {
        let mu = theta.cos();
        let (mut pi0, mut pi1) = (0.0, 1.0);
        let (mut s1, mut s2) = (C64::default(), C64::default());
        for (i, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            let n = (i + 1) as f64;
            let tau = n * mu * pi1 - (n + 1.0) * pi0;
            let f = (2.0 * n + 1.0) / (n * (n + 1.0));
            s1 += f * (a * pi1 + b * tau);
            s2 += f * (a * tau + b * pi1);
            let pi = ((2.0 * n + 1.0) * mu * pi1 - (n + 1.0) * pi0) / n;
            pi0 = pi1;
            pi1 = pi;
        }
        (s1, s2)
    }

    /// Far field in the canonical frame (incidence +z, polarization +x)
    /// for a unit-amplitude wave of wavenumber `k`.
    pub fn canonical_far_field(&self, k: f64, theta: f64, phi: f64) -> FarFieldAmplitude {
        let (s1, s2) = self.amplitudes(theta);
        let i_over_k = C64::new(0.0, 1.0 / k);
        let (sp, cp) = phi.sin_cos();
        FarFieldAmplitude {
            theta,
            phi,
            e_theta: i_over_k * s2 * cp,
            e_phi: -i_over_k * s1 * sp,
        }
    }
}

/// Rotation taking the canonical frame onto the mode: columns `ê`, `k̂×ê`,
/// `k̂`, stored row-major.
fn mode_rotation(mode: &PlaneWaveMode) -> [Vec3; 3] {
    let e = mode.polarization();
    let k = mode.direction();
    let h = cross(k, e);
    [[e[0], h[0], k[0]], [e[1], h[1], k[1]], [e[2], h[2], k[2]]]
}

/// Scattered far field of the sphere for an arbitrary incident mode, with
/// the same normalization as [`crate::far_field::radiate`].
pub fn mie_far_field(series: &MieSeries, mode: &PlaneWaveMode, theta: f64, phi: f64) -> FarFieldAmplitude {
    let rot = mode_rotation(mode);
    let (r_lab, _, _) = spherical_basis(theta, phi);
    let r_can = crate::vec3::mat_t_vec(&rot, r_lab);
    let theta_c = r_can[2].clamp(-1.0, 1.0).acos();
    let phi_c = r_can[1].atan2(r_can[0]);
    let can = series.canonical_far_field(mode.wavenumber(), theta_c, phi_c);
    let v_can = can.vector();
    let v_lab: CVec3 = std::array::from_fn(|i| {
        (0..3).map(|j| v_can[j] * rot[i][j]).sum::<C64>() * PHASE_CONVENTION
    });
    FarFieldAmplitude::from_vector(theta, phi, v_lab)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rayleigh_limit() {
        let m = C64::new(2.1f64.sqrt(), 0.0);
        let x = 0.01;
        let s = mie_coefficients(x, m).unwrap();
        let m2 = m * m;
        let want = C64::new(0.0, -2.0 / 3.0) * x.powi(3) * (m2 - 1.0) / (m2 + 2.0);
        assert!((s.a()[0] - want).norm() / want.norm() < 1e-2);
    }

    #[test]
    fn index_matched_sphere_does_not_scatter() {
        let s = mie_coefficients(3.0, C64::new(1.0, 0.0)).unwrap();
        assert!(s.a().iter().chain(s.b()).all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn lossless_partial_waves_are_unitary() {
        let s = mie_coefficients(4.0, C64::new(1.5, 0.0)).unwrap();
        for c in s.a().iter().chain(s.b()) {
            assert!((c.re - c.norm_sqr()).abs() < 1e-10);
        }
        assert!((s.q_ext() - s.q_sca()).abs() < 1e-10 * s.q_ext());
    }

    #[test]
    fn truncation_bound() {
        assert_eq!(truncation_order(1.0), 7);
        let s = mie_coefficients(10.0, C64::new(1.3, 0.0)).unwrap();
        assert!(s.order() as f64 >= 10.0 + 4.0 * 10f64.cbrt() + 2.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(mie_coefficients(0.0, C64::new(1.5, 0.0)), Err(Error::InvalidInput(_))));
        assert!(matches!(mie_coefficients(1e6, C64::new(1.5, 0.0)), Err(Error::Range(_))));
    }
}
