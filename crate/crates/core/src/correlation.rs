//! Two-photon correlation from projected far-field amplitudes.
//!
//! Notation: `a_n = E_{a k_n}(r₁)` is the detector-1 amplitude produced by
//! mode `n`, `b_n = E_{b k_n}(r₂)` the detector-2 one. The two detection
//! pathways are `A = a₁b₂` and `B = a₂b₁`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::quad::integrate_complex;
use crate::{Error, Result, C64};

/// Projected amplitudes of both modes at both detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeAmplitudeSet {
    /// `E_{a k₁}(r₁)`
    pub a1: C64,
    /// `E_{a k₂}(r₁)`
    pub a2: C64,
    /// `E_{b k₁}(r₂)`
    pub b1: C64,
    /// `E_{b k₂}(r₂)`
    pub b2: C64,
    pub omega1: f64,
    pub omega2: f64,
}

impl ModeAmplitudeSet {
    pub fn new(a1: C64, a2: C64, b1: C64, b2: C64, omega1: f64, omega2: f64) -> Result<Self> {
        let s = Self {
            a1,
            a2,
            b1,
            b2,
            omega1,
            omega2,
        };
        s.validate()?;
        Ok(s)
    }

    /// Both modes at the same frequency.
    pub fn degenerate(a1: C64, a2: C64, b1: C64, b2: C64, omega: f64) -> Result<Self> {
        Self::new(a1, a2, b1, b2, omega, omega)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega1 > 0.0 && self.omega2 > 0.0) {
            return Err(Error::InvalidInput("mode frequencies must be positive".into()));
        }
        if self.a1.is_nan() && self.a2.is_nan() {
            return Err(Error::InvalidInput("detector 1 amplitudes are all NaN".into()));
        }
        if self.b1.is_nan() && self.b2.is_nan() {
            return Err(Error::InvalidInput("detector 2 amplitudes are all NaN".into()));
        }
        Ok(())
    }

    /// Pathway amplitudes `(A, B) = (a₁b₂, a₂b₁)`.
    pub fn pathways(&self) -> (C64, C64) {
        (self.a1 * self.b2, self.a2 * self.b1)
    }

    /// Same configuration with the detector labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            a1: self.b1,
            a2: self.b2,
            b1: self.a1,
            b2: self.a2,
            ..*self
        }
    }

    fn denominator(&self) -> Result<f64> {
        let d1 = self.omega1 * self.a1.norm_sqr() + self.omega2 * self.a2.norm_sqr();
        let d2 = self.omega1 * self.b1.norm_sqr() + self.omega2 * self.b2.norm_sqr();
        if d1 == 0.0 {
            return Err(Error::UndefinedCorrelation { detector: 1 });
        }
        if d2 == 0.0 {
            return Err(Error::UndefinedCorrelation { detector: 2 });
        }
        Ok(d1 * d2)
    }
}

/// Normalized second-order correlation.
pub fn g2(amps: &ModeAmplitudeSet) -> Result<f64> {
    amps.validate()?;
    let den = amps.denominator()?;
    let (a, b) = amps.pathways();
    Ok(amps.omega1 * amps.omega2 * (a + b).norm_sqr() / den)
}

/// The four terms `(U₁, U₂, U₃, U₄)` of g²: the two pathway intensities
/// and the two interference terms.
pub fn g2_components(amps: &ModeAmplitudeSet) -> Result<[C64; 4]> {
    amps.validate()?;
    let w = amps.omega1 * amps.omega2 / amps.denominator()?;
    let (a, b) = amps.pathways();
    let u2 = a.conj() * b * w;
    Ok([
        C64::new(a.norm_sqr() * w, 0.0),
        u2,
        u2.conj(),
        C64::new(b.norm_sqr() * w, 0.0),
    ])
}

/// Classical intensity correlation (unnormalized).
pub fn classical_p2(amps: &ModeAmplitudeSet) -> f64 {
    amps.omega1 * amps.omega2 * (amps.a1 + amps.a2).norm_sqr() * (amps.b1 + amps.b2).norm_sqr()
}

/// Treatment of the `e^{∓iω₀τ}` factors in the interference terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CarrierMode {
    /// Carrier phases cancel between the two photons.
    Dropped,
    /// Carrier kept; interference suppressed by `e^{−ω₀²σ²}`.
    Retained,
}

impl std::str::FromStr for CarrierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dropped" => Ok(Self::Dropped),
            "retained" => Ok(Self::Retained),
            _ => Err(Error::InvalidInput(format!(
                "unknown carrier mode `{s}` (expected dropped or retained)"
            ))),
        }
    }
}

/// Temporal envelope `h(τ) = e^{−τ²/2σ²} e^{−iω₀τ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianPacket {
    sigma: f64,
    omega0: f64,
    carrier: CarrierMode,
}

impl GaussianPacket {
    pub fn new(sigma: f64, omega0: f64, carrier: CarrierMode) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("packet width {sigma} must be positive")));
        }
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::InvalidInput(format!("central frequency {omega0} must be positive")));
        }
        Ok(Self {
            sigma,
            omega0,
            carrier,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn carrier(&self) -> CarrierMode {
        self.carrier
    }

    pub fn h(&self, tau: f64) -> C64 {
        let env = (-tau * tau / (2.0 * self.sigma * self.sigma)).exp();
        match self.carrier {
            CarrierMode::Dropped => C64::new(env, 0.0),
            CarrierMode::Retained => C64::from_polar(env, -self.omega0 * tau),
        }
    }

    /// Suppression of the interference terms by the carrier.
    pub fn carrier_factor(&self) -> f64 {
        match self.carrier {
            CarrierMode::Dropped => 1.0,
            CarrierMode::Retained => (-(self.omega0 * self.sigma).powi(2)).exp(),
        }
    }

    /// `∫ h(τ) h*(2δτ − τ) dτ` in closed form.
    pub fn overlap(&self, delay: f64) -> f64 {
        self.sigma * PI.sqrt() * (-(delay / self.sigma).powi(2)).exp() * self.carrier_factor()
    }
}

/// Closed-form and quadrature values of `∫ h(τ) h*(2δτ − τ) dτ`.
pub fn gaussian_overlap_check(packet: &GaussianPacket, delay: f64) -> Result<(C64, C64)> {
    let s = packet.sigma;
    let peak = (-(delay / s).powi(2)).exp();
    let (lo, hi) = (delay - 12.0 * s, delay + 12.0 * s);
    let quad = integrate_complex(
        |t| packet.h(t) * packet.h(2.0 * delay - t).conj(),
        lo,
        hi,
        1e-11 * peak * s,
    )?;
    Ok((C64::new(packet.overlap(delay), 0.0), quad))
}

/// Numerator terms and normalization of the coincidence count at one delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoincidenceTerms {
    pub n1: f64,
    pub n2: f64,
    pub n3: C64,
    pub n4: C64,
    pub dc: f64,
}

impl CoincidenceTerms {
    pub fn numerator(&self) -> f64 {
        self.n1 + self.n2 + (self.n3 + self.n4).re
    }

    /// `Ñc` and whether the normalization vanished (then `Ñc = 0`).
    pub fn normalized(&self) -> (f64, bool) {
        if self.dc == 0.0 {
            (0.0, true)
        } else {
            (self.numerator() / self.dc, false)
        }
    }
}

/// Closed-form Gaussian integrals at delay `δτ`.
pub fn coincidence_terms(amps: &ModeAmplitudeSet, packet: &GaussianPacket, delay: f64) -> CoincidenceTerms {
    let (a, b) = amps.pathways();
    let norm = packet.sigma * PI.sqrt();
    let decay = (-(delay / packet.sigma).powi(2)).exp();
    let n3 = a * b.conj() * packet.overlap(delay);
    let cross = amps.a1.norm_sqr() * amps.b1.norm_sqr() + amps.a2.norm_sqr() * amps.b2.norm_sqr();
    CoincidenceTerms {
        n1: a.norm_sqr() * norm,
        n2: b.norm_sqr() * norm,
        n3,
        n4: n3.conj(),
        dc: norm * (a.norm_sqr() + b.norm_sqr() + cross * decay),
    }
}

/// The same quantities by adaptive quadrature of the defining integrals.
pub fn coincidence_terms_quadrature(
    amps: &ModeAmplitudeSet,
    packet: &GaussianPacket,
    delay: f64,
) -> Result<CoincidenceTerms> {
    let (a, b) = amps.pathways();
    let s = packet.sigma;
    let h = |t: f64| packet.h(t);
    let g = |t: f64| packet.h(2.0 * delay - t);
    let rel = 1e-11;
    // windows centred on each integrand's peak
    let around = |c: f64| (c - 12.0 * s, c + 12.0 * s);
    let (l1, h1) = around(0.0);
    let (l2, h2) = around(2.0 * delay);
    let (l3, h3) = around(delay);
    let peak3 = (-(delay / s).powi(2)).exp();

    let i1 = integrate_complex(|t| C64::new(h(t).norm_sqr(), 0.0), l1, h1, rel * s)?;
    let i2 = integrate_complex(|t| C64::new(g(t).norm_sqr(), 0.0), l2, h2, rel * s)?;
    let i3 = integrate_complex(|t| h(t) * g(t).conj(), l3, h3, rel * s * peak3)?;
    let i4 = integrate_complex(|t| h(t).conj() * g(t), l3, h3, rel * s * peak3)?;

    let (p1, p2) = (amps.a1.norm_sqr(), amps.a2.norm_sqr());
    let (q2, q1) = (amps.b2.norm_sqr(), amps.b1.norm_sqr());
    let scale = (p1 + p2) * (q1 + q2);
    let lo = l1.min(l2);
    let hi = h1.max(h2);
    let dc = if scale == 0.0 {
        C64::default()
    } else {
        let f = |t: f64| {
            let (x, y) = (h(t).norm(), g(t).norm());
            C64::new((p1 * x + p2 * y) * (q2 * x + q1 * y), 0.0)
        };
        // split between the two peaks at 0 and 2δτ
        integrate_complex(f, lo, delay, rel * s * scale)?
            + integrate_complex(f, delay, hi, rel * s * scale)?
    };
    Ok(CoincidenceTerms {
        n1: a.norm_sqr() * i1.re,
        n2: b.norm_sqr() * i2.re,
        n3: a * b.conj() * i3,
        n4: a.conj() * b * i4,
        dc: dc.re,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceCurve {
    pub delays: Vec<f64>,
    pub values: Vec<f64>,
    /// Set where the normalization vanished and `Ñc` was defined as 0.
    pub flags: Vec<bool>,
    pub packet: GaussianPacket,
}

/// Normalized coincidence count `Ñc(δτ)` over a list of delays.
pub fn coincidence_curve(
    amps: &ModeAmplitudeSet,
    packet: &GaussianPacket,
    delays: &[f64],
) -> Result<CoincidenceCurve> {
    amps.validate()?;
    amps.denominator()?;
    if let Some(d) = delays.iter().find(|d| !d.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite delay {d}")));
    }
    let (values, flags) = delays
        .iter()
        .map(|&d| coincidence_terms(amps, packet, d).normalized())
        .unzip();
    Ok(CoincidenceCurve {
        delays: delays.to_vec(),
        values,
        flags,
        packet: *packet,
    })
}

/// g² over a grid of detector-angle pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMap {
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// Row-major over `axis1`; NaN where the correlation is undefined.
    pub values: Vec<f64>,
}

impl CorrelationMap {
    /// Evaluates `f(i, j)` for every pair; undefined-correlation errors
    /// become NaN entries, other errors propagate.
    pub fn from_fn(
        axis1: Vec<f64>,
        axis2: Vec<f64>,
        f: impl Fn(usize, usize) -> Result<f64> + Sync,
    ) -> Result<Self> {
        use rayon::prelude::*;
        let n2 = axis2.len();
        let values = (0..axis1.len() * n2)
            .into_par_iter()
            .map(|k| match f(k / n2, k % n2) {
                Ok(v) => Ok(v),
                Err(Error::UndefinedCorrelation { .. }) => Ok(f64::NAN),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            axis1,
            axis2,
            values,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis2.len() + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.axis1.len(), self.axis2.len())
    }

    /// Divides by the largest finite entry.
    pub fn normalized_by_max(&self) -> Self {
        let max = self
            .values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        let values = if max > 0.0 {
            self.values.iter().map(|v| v / max).collect()
        } else {
            self.values.clone()
        };
        Self {
            values,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn single_pathway_gives_unity() {
        let m = ModeAmplitudeSet::degenerate(c(0.3, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, -1.0), 1.0).unwrap();
        assert!((g2(&m).unwrap() - 1.0).abs() < 1e-15);
        let u = g2_components(&m).unwrap();
        assert!(u[1].norm() == 0.0 && u[2].norm() == 0.0 && u[3].norm() == 0.0);
    }

    #[test]
    fn destructive_pairing_gives_zero() {
        let m = ModeAmplitudeSet::degenerate(c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), 2.0).unwrap();
        assert!(g2(&m).unwrap().abs() < 1e-15);
    }

    #[test]
    fn undefined_when_detector_dark() {
        let z = C64::default();
        let m = ModeAmplitudeSet::degenerate(z, z, c(1.0, 0.0), c(1.0, 0.0), 1.0).unwrap();
        assert!(matches!(g2(&m), Err(Error::UndefinedCorrelation { detector: 1 })));
    }

    #[test]
    fn classical_cases() {
        let z = C64::default();
        assert_eq!(classical_p2(&ModeAmplitudeSet::degenerate(z, z, z, z, 1.0).unwrap()), 0.0);
        let m = ModeAmplitudeSet::degenerate(c(1.0, 0.0), c(-1.0, 0.0), c(0.4, 2.0), c(1.0, 1.0), 1.0).unwrap();
        assert_eq!(classical_p2(&m), 0.0);
    }

    #[test]
    fn overlap_closed_forms() {
        let p = GaussianPacket::new(2.0, 1.0, CarrierMode::Dropped).unwrap();
        let sp = 2.0 * PI.sqrt();
        assert!((p.overlap(0.0) - sp).abs() < 1e-14);
        assert!((p.overlap(2.0) - sp * (-1.0f64).exp()).abs() < 1e-14);
        let r = GaussianPacket::new(2.0, 1.0, CarrierMode::Retained).unwrap();
        let (closed, quad) = gaussian_overlap_check(&r, 0.0).unwrap();
        assert!((closed.re - sp * (-4.0f64).exp()).abs() < 1e-14);
        assert!((closed - quad).norm() / closed.norm() < 1e-8);
    }

    #[test]
    fn opposite_pathways_dip_to_zero() {
        let m = ModeAmplitudeSet::degenerate(c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), 1.0).unwrap();
        let p = GaussianPacket::new(1.0, 1.0, CarrierMode::Dropped).unwrap();
        let curve = coincidence_curve(&m, &p, &[0.0, 6.0, -7.0]).unwrap();
        assert!(curve.values[0].abs() < 1e-15);
        assert!((curve.values[1] - 1.0).abs() < 1e-3);
        assert!((curve.values[2] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn mode_two_dark_never_coincides() {
        let z = C64::default();
        let m = ModeAmplitudeSet::degenerate(c(1.0, 0.5), z, c(0.7, -0.2), z, 1.0).unwrap();
        let p = GaussianPacket::new(1.0, 1.0, CarrierMode::Dropped).unwrap();
        let delays: Vec<f64> = (-60..=60).map(|i| i as f64 * 0.5).collect();
        let curve = coincidence_curve(&m, &p, &delays).unwrap();
        assert!(curve.values.iter().all(|v| *v == 0.0));
        assert!(curve.flags.iter().any(|f| *f));
    }

    #[test]
    fn map_marks_undefined_points() {
        let map = CorrelationMap::from_fn(vec![0.0, 1.0], vec![0.0], |i, _| {
            if i == 0 {
                Err(Error::UndefinedCorrelation { detector: 1 })
            } else {
                Ok(0.5)
            }
        })
        .unwrap();
        assert!(map.get(0, 0).is_nan());
        assert_eq!(map.get(1, 0), 0.5);
    }
}
