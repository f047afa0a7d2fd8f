//! Physical model of the rotatable-antenna array.
//!
//! Covers the rotation schedule, the directional power-gain pattern
//! `g(θ, φ) = G cos^{2p}(θ − φ)` on the main lobe, the sparse-array steering
//! vector and the per-rotation channel matrix `H_m = A · diag(b_m) · Λ`.
//!
//! All angles are radians.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scene::Scene;

/// Uniform linear array of `N` elements spaced `L·d` apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    n_antennas: usize,
    sparse_factor: f64,
    spacing_wavelengths: f64,
}

impl ArrayGeometry {
    /// Half-wavelength base spacing.
    pub const DEFAULT_SPACING: f64 = 0.5;

    pub fn new(n_antennas: usize, sparse_factor: f64) -> Result<Self> {
        Self::with_spacing(n_antennas, sparse_factor, Self::DEFAULT_SPACING)
    }

    /// `sparse_factor` may be any real `L ≥ 1`. Grating-lobe positions assume
    /// `sin ϑ = sin θ + z/(L·d/λ)`, which is only periodic in the usual sense
    /// for integer `L`.
    pub fn with_spacing(
        n_antennas: usize,
        sparse_factor: f64,
        spacing_wavelengths: f64,
    ) -> Result<Self> {
        if n_antennas < 2 {
            return Err(Error::param("n_antennas", format!("need N >= 2, got {n_antennas}")));
        }
        if !(sparse_factor.is_finite() && sparse_factor >= 1.0) {
            return Err(Error::param(
                "sparse_factor",
                format!("need L >= 1, got {sparse_factor}"),
            ));
        }
        if !(spacing_wavelengths.is_finite() && spacing_wavelengths > 0.0) {
            return Err(Error::param(
                "spacing_wavelengths",
                format!("need d/lambda > 0, got {spacing_wavelengths}"),
            ));
        }
        Ok(Self {
            n_antennas,
            sparse_factor,
            spacing_wavelengths,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn sparse_factor(&self) -> f64 {
        self.sparse_factor
    }

    pub fn spacing_wavelengths(&self) -> f64 {
        self.spacing_wavelengths
    }

    /// Same element count and spacing with a different sparse factor.
    pub fn with_sparse_factor(&self, sparse_factor: f64) -> Result<Self> {
        Self::with_spacing(self.n_antennas, sparse_factor, self.spacing_wavelengths)
    }

    /// Inter-element phase step per unit of `sin θ`: `2π (d/λ) L`.
    pub fn phase_scale(&self) -> f64 {
        2.0 * PI * self.spacing_wavelengths * self.sparse_factor
    }
}

/// `M` synchronous rotation angles spread uniformly over `[−ϑ_max, ϑ_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSchedule {
    theta_max: f64,
    angles: Vec<f64>,
}

impl RotationSchedule {
    pub fn new(m_rotations: usize, theta_max: f64) -> Result<Self> {
        rotation_angles(m_rotations, theta_max)
    }

    pub fn m_rotations(&self) -> usize {
        self.angles.len()
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

/// Builds the rotation schedule `φ_m = −ϑ_max + 2(m−1)ϑ_max/(M−1)`.
///
/// `M = 1` is rejected: the formula divides by `M − 1`, and a single pointing
/// direction cannot disambiguate angles (the gain correlation is flat).
pub fn rotation_angles(m_rotations: usize, theta_max: f64) -> Result<RotationSchedule> {
    if m_rotations < 2 {
        return Err(Error::param(
            "m_rotations",
            format!("need M >= 2 rotations for unambiguous gain correlation, got {m_rotations}"),
        ));
    }
    if !(theta_max.is_finite() && theta_max > 0.0 && theta_max < FRAC_PI_2) {
        return Err(Error::param(
            "theta_max",
            format!("need 0 < theta_max < pi/2 rad, got {theta_max}"),
        ));
    }
    let step = 2.0 * theta_max / (m_rotations - 1) as f64;
    let last = m_rotations - 1;
    let angles = (0..m_rotations)
        .map(|m| {
            // Pin both endpoints exactly so the schedule is symmetric.
            if m == last {
                theta_max
            } else if 2 * m == last {
                0.0
            } else {
                -theta_max + m as f64 * step
            }
        })
        .collect();
    Ok(RotationSchedule { theta_max, angles })
}

/// Directional power-gain pattern with directivity factor `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPattern {
    directivity: f64,
}

impl GainPattern {
    pub fn new(directivity: f64) -> Result<Self> {
        if !(directivity.is_finite() && directivity >= 0.0) {
            return Err(Error::param(
                "directivity",
                format!("need p >= 0, got {directivity}"),
            ));
        }
        Ok(Self { directivity })
    }

    pub fn directivity(&self) -> f64 {
        self.directivity
    }

    /// Peak gain `G = 2(2p + 1)`, fixed by power conservation over the half-space.
    pub fn peak_gain(&self) -> f64 {
        2.0 * (2.0 * self.directivity + 1.0)
    }
}

/// Power gain seen from direction `theta` by an element pointed at `phi`.
///
/// Zero outside the main lobe `|θ − φ| > π/2`; continuous at the boundary.
pub fn gain(theta: f64, phi: f64, pattern: &GainPattern) -> f64 {
    let offset = theta - phi;
    if offset.abs() > FRAC_PI_2 {
        return 0.0;
    }
    let c = offset.cos().max(0.0);
    pattern.peak_gain() * c.powf(2.0 * pattern.directivity)
}

/// Array response `a(θ)` with unit-modulus entries, `a[0] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(Vec<Complex64>);

impl SteeringVector {
    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }
}

pub fn steering_vector(theta: f64, geometry: &ArrayGeometry) -> SteeringVector {
    let step = geometry.phase_scale() * theta.sin();
    let entries = (0..geometry.n_antennas())
        .map(|n| {
            if n == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::from_polar(1.0, n as f64 * step)
            }
        })
        .collect();
    SteeringVector(entries)
}

/// Amplitude gains `b_m = sqrt(g(θ, φ_m))` across the rotation schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSteeringVector(Vec<f64>);

impl GainSteeringVector {
    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|b| b * b).sum()
    }
}

/// Amplitude gain profile over an arbitrary list of pointing angles.
pub fn gain_profile(theta: f64, angles: &[f64], pattern: &GainPattern) -> Vec<f64> {
    angles
        .iter()
        .map(|&phi| gain(theta, phi, pattern).sqrt())
        .collect()
}

pub fn gain_steering_vector(
    theta: f64,
    schedule: &RotationSchedule,
    pattern: &GainPattern,
) -> GainSteeringVector {
    let v = GainSteeringVector(gain_profile(theta, schedule.angles(), pattern));
    // Within the sensing range some pointing direction is always less than π/2 away.
    debug_assert!(
        theta.abs() > schedule.theta_max() + 1e-12 || v.norm_sqr() > 0.0,
        "zero gain steering vector inside the sensing range"
    );
    v
}

/// Channel during rotation `rotation` (0-based): column `k` is `α_k · b_{m,k} · a(θ_k)`.
pub fn channel_matrix(
    scene: &Scene,
    rotation: usize,
    geometry: &ArrayGeometry,
    schedule: &RotationSchedule,
    pattern: &GainPattern,
) -> Result<DMatrix<Complex64>> {
    let m_rot = schedule.m_rotations();
    if rotation >= m_rot {
        return Err(Error::param(
            "rotation",
            format!("rotation index {rotation} out of range for M = {m_rot}"),
        ));
    }
    let phi = schedule.angles()[rotation];
    let n = geometry.n_antennas();
    let targets = scene.targets();
    let mut h = DMatrix::zeros(n, targets.len());
    for (k, target) in targets.iter().enumerate() {
        let a = steering_vector(target.doa, geometry);
        let coeff = target.scattering * gain(target.doa, phi, pattern).sqrt();
        for (row, entry) in a.entries().iter().enumerate() {
            h[(row, k)] = coeff * entry;
        }
    }
    Ok(h)
}
