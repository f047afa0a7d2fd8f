//! Steering-vector correlations and the correlation search over CP factors.
//!
//! * array SVC `𝒜(θ_k, ϑ) = |a(θ_k)ᴴ a(ϑ)|² / (‖a(θ_k)‖² ‖a(ϑ)‖²)`, a Dirichlet
//!   kernel in `sin ϑ − sin θ_k` that reaches 1 at every grating lobe;
//! * gain SVC `ℬ(θ_k, ϑ)`, the same correlation on the gain steering vectors,
//!   uniquely maximized at `ϑ = θ_k` when `M ≥ 2`;
//! * joint SVC `𝒞 = 𝒜·ℬ`, equal to the correlation of `a ⊗ b`.
//!
//! DOA estimates maximize the joint correlation between each estimated column
//! pair `(â_k, b̂_k)` and the model vectors over an angular grid, followed by
//! a three-point parabolic refinement.

use nalgebra::DVectorView;
use num_complex::Complex64;

use crate::array_model::{
    gain_profile, gain_steering_vector, steering_vector, ArrayGeometry, GainPattern,
    RotationSchedule,
};
use crate::cp::CpFactors;
use crate::error::{Error, Result};
use crate::tensor::kronecker_vec;

/// Default search resolution, 0.05°.
pub const DEFAULT_RESOLUTION: f64 = 0.05 * std::f64::consts::PI / 180.0;

/// Spectra whose `max − median` falls below this are flagged as flat.
const FLAT_SPECTRUM: f64 = 1e-12;

/// Uniformly spaced search angles covering `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    lo: f64,
    hi: f64,
    resolution: f64,
    points: Vec<f64>,
}

impl AngularGrid {
    /// Spacing is the largest value `≤ resolution` that divides `hi − lo` evenly;
    /// both endpoints are grid points.
    pub fn new(lo: f64, hi: f64, resolution: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::param("grid", format!("need lo <= hi, got [{lo}, {hi}]")));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::param("resolution", format!("need > 0, got {resolution}")));
        }
        if lo <= -std::f64::consts::FRAC_PI_2 || hi >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::param("grid", "bounds must lie inside (-pi/2, pi/2)"));
        }
        let span = hi - lo;
        let intervals = ((span / resolution) - 1e-9).ceil().max(0.0) as usize;
        let points = if intervals == 0 {
            vec![lo]
        } else {
            let step = span / intervals as f64;
            (0..=intervals)
                .map(|i| if i == intervals { hi } else { lo + i as f64 * step })
                .collect()
        };
        Ok(Self {
            lo,
            hi,
            resolution,
            points,
        })
    }

    /// Full sensing range `[−ϑ_max, ϑ_max]` of a schedule.
    pub fn sensing_range(schedule: &RotationSchedule, resolution: f64) -> Result<Self> {
        Self::new(-schedule.theta_max(), schedule.theta_max(), resolution)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Actual spacing between neighbouring points (0 for a single point).
    pub fn step(&self) -> f64 {
        if self.points.len() < 2 {
            0.0
        } else {
            (self.hi - self.lo) / (self.points.len() - 1) as f64
        }
    }

    /// Index of the grid point closest to `theta`; ties go to the lower index.
    pub fn nearest_index(&self, theta: f64) -> usize {
        let mut best = 0;
        for (i, p) in self.points.iter().enumerate() {
            if (p - theta).abs() < (self.points[best] - theta).abs() {
                best = i;
            }
        }
        best
    }

    pub fn contained_in(&self, schedule: &RotationSchedule) -> bool {
        let limit = schedule.theta_max() + 1e-12;
        self.lo >= -limit && self.hi <= limit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoaEstimate {
    /// Estimated DOAs in radians, ascending.
    pub angles: Vec<f64>,
    /// Objective value at each returned angle (same order as `angles`).
    pub peak_scores: Vec<f64>,
    /// Per-estimate flag for flat spectra or padded peaks.
    pub low_confidence: Vec<bool>,
    /// Optional per-estimate objective over the grid (same order as `angles`).
    pub spectra: Option<Vec<Vec<f64>>>,
}

impl DoaEstimate {
    pub fn any_low_confidence(&self) -> bool {
        self.low_confidence.iter().any(|&f| f)
    }

    /// Sorts all per-estimate fields by angle.
    pub(crate) fn from_unsorted(
        mut picks: Vec<(f64, f64, bool, Option<Vec<f64>>)>,
        keep_spectra: bool,
    ) -> Self {
        picks.sort_by(|a, b| a.0.total_cmp(&b.0));
        let angles = picks.iter().map(|p| p.0).collect();
        let peak_scores = picks.iter().map(|p| p.1).collect();
        let low_confidence = picks.iter().map(|p| p.2).collect();
        let spectra = keep_spectra.then(|| picks.into_iter().map(|p| p.3.unwrap_or_default()).collect());
        Self {
            angles,
            peak_scores,
            low_confidence,
            spectra,
        }
    }
}

/// Array SVC from the steering vectors themselves.
pub fn array_svc(theta_k: f64, theta: f64, geometry: &ArrayGeometry) -> f64 {
    let a = steering_vector(theta_k, geometry);
    let b = steering_vector(theta, geometry);
    let inner: Complex64 = a.entries().iter().zip(b.entries()).map(|(x, y)| x.conj() * y).sum();
    let n = geometry.n_antennas() as f64;
    (inner.norm_sqr() / (n * n)).min(1.0)
}

/// Closed-form array SVC `sin²(Nψ/2) / (N² sin²(ψ/2))` with
/// `ψ = 2π (d/λ) L (sin ϑ − sin θ_k)`; equals 1 at the removable singularity.
pub fn array_svc_closed_form(theta_k: f64, theta: f64, geometry: &ArrayGeometry) -> f64 {
    let n = geometry.n_antennas() as f64;
    let u = geometry.spacing_wavelengths() * geometry.sparse_factor() * (theta.sin() - theta_k.sin());
    // ψ/2 = πu; the kernel has period 1 in u, so reduce to |r| ≤ 1/2 first.
    let r = u - u.round();
    let x = std::f64::consts::PI * r;
    if x.abs() < 1e-9 {
        return 1.0 - (n * n - 1.0) * x * x / 3.0;
    }
    let num = (n * x).sin();
    let den = n * x.sin();
    ((num * num) / (den * den)).min(1.0)
}

fn real_correlation(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum();
    let ny: f64 = y.iter().map(|a| a * a).sum();
    assert!(nx > 0.0 && ny > 0.0, "zero gain steering vector");
    (dot * dot / (nx * ny)).min(1.0)
}

/// Gain SVC over the rotation schedule.
pub fn gain_svc(theta_k: f64, theta: f64, schedule: &RotationSchedule, pattern: &GainPattern) -> f64 {
    let bk = gain_steering_vector(theta_k, schedule, pattern);
    let b = gain_steering_vector(theta, schedule, pattern);
    real_correlation(bk.entries(), b.entries())
}

/// Gain SVC for an arbitrary set of pointing angles (including a single one).
pub fn gain_svc_for_angles(theta_k: f64, theta: f64, angles: &[f64], pattern: &GainPattern) -> f64 {
    real_correlation(
        &gain_profile(theta_k, angles, pattern),
        &gain_profile(theta, angles, pattern),
    )
}

/// Joint SVC as the product of the array and gain correlations.
pub fn joint_svc(
    theta_k: f64,
    theta: f64,
    geometry: &ArrayGeometry,
    schedule: &RotationSchedule,
    pattern: &GainPattern,
) -> f64 {
    array_svc(theta_k, theta, geometry) * gain_svc(theta_k, theta, schedule, pattern)
}

/// Model vector `c(ϑ) = a(ϑ) ⊗ b(ϑ)`.
pub fn combined_vector(
    theta: f64,
    geometry: &ArrayGeometry,
    schedule: &RotationSchedule,
    pattern: &GainPattern,
) -> nalgebra::DVector<Complex64> {
    let a = steering_vector(theta, geometry);
    let b: Vec<Complex64> = gain_steering_vector(theta, schedule, pattern)
        .entries()
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect();
    kronecker_vec(a.entries(), &b)
}

/// Joint SVC evaluated on the materialized Kronecker vectors.
pub fn joint_svc_kronecker(
    theta_k: f64,
    theta: f64,
    geometry: &ArrayGeometry,
    schedule: &RotationSchedule,
    pattern: &GainPattern,
) -> f64 {
    let ck = combined_vector(theta_k, geometry, schedule, pattern);
    let c = combined_vector(theta, geometry, schedule, pattern);
    (ck.dotc(&c).norm_sqr() / (ck.norm_squared() * c.norm_squared())).min(1.0)
}

/// A direction where the array SVC reaches 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GratingLobe {
    pub angle: f64,
    /// Integer `z` in `sin ϑ = sin θ_k + z / ((d/λ) L)`; zero is the true DOA.
    pub order: i64,
}

impl GratingLobe {
    pub fn is_true_angle(&self) -> bool {
        self.order == 0
    }
}

/// All `ϑ ∈ [lo, hi]` with `sin ϑ = sin θ_k + z/((d/λ) L)`, ascending.
///
/// With `d = λ/2` this is `sin θ_k + 2z/L`. The `z = 0` entry is included only
/// when `θ_k` itself lies in the range.
pub fn grating_lobe_angles(theta_k: f64, geometry: &ArrayGeometry, lo: f64, hi: f64) -> Vec<GratingLobe> {
    let period = 1.0 / (geometry.spacing_wavelengths() * geometry.sparse_factor());
    let u0 = theta_k.sin();
    let (s_lo, s_hi) = (lo.sin(), hi.sin());
    let z_min = ((s_lo - u0) / period - 1e-12).ceil() as i64;
    let z_max = ((s_hi - u0) / period + 1e-12).floor() as i64;
    (z_min..=z_max)
        .filter_map(|z| {
            let s = u0 + z as f64 * period;
            if !(-1.0..=1.0).contains(&s) {
                return None;
            }
            let angle = if z == 0 { theta_k } else { s.asin() };
            (angle >= lo - 1e-12 && angle <= hi + 1e-12).then_some(GratingLobe { angle, order: z })
        })
        .collect()
}

/// Offset (in grid steps, within `[-1, 1]`) of the vertex of the parabola
/// through three samples around a local maximum; 0 when not concave.
pub(crate) fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let curvature = left - 2.0 * center + right;
    if curvature.is_nan() || curvature >= 0.0 || !left.is_finite() || !right.is_finite() || !center.is_finite() {
        return 0.0;
    }
    (0.5 * (left - right) / curvature).clamp(-1.0, 1.0)
}

/// First index of the maximum (ties toward the smaller angle).
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

/// Model vectors precomputed over a grid.
struct ModelBank {
    steering: Vec<Vec<Complex64>>,
    gains: Vec<Vec<f64>>,
}

impl ModelBank {
    fn new(angles: &[f64], geometry: &ArrayGeometry, schedule: &RotationSchedule, pattern: &GainPattern) -> Self {
        Self {
            steering: angles.iter().map(|&t| steering_vector(t, geometry).into_inner()).collect(),
            gains: angles
                .iter()
                .map(|&t| gain_profile(t, schedule.angles(), pattern))
                .collect(),
        }
    }
}

/// Array and gain correlations of an estimated column pair with model vectors.
fn column_scores(
    a_hat: DVectorView<Complex64>,
    b_hat: DVectorView<Complex64>,
    steering: &[Complex64],
    gains: &[f64],
) -> (f64, f64) {
    let a_norm2 = a_hat.norm_squared();
    let b_norm2 = b_hat.norm_squared();
    let s_norm2: f64 = steering.iter().map(|z| z.norm_sqr()).sum();
    let g_norm2: f64 = gains.iter().map(|g| g * g).sum();
    let array = if a_norm2 > 0.0 {
        let inner: Complex64 = a_hat.iter().zip(steering).map(|(x, y)| x.conj() * y).sum();
        inner.norm_sqr() / (a_norm2 * s_norm2)
    } else {
        0.0
    };
    let gain = if b_norm2 > 0.0 && g_norm2 > 0.0 {
        let inner: Complex64 = b_hat.iter().zip(gains).map(|(x, g)| x.conj() * *g).sum();
        inner.norm_sqr() / (b_norm2 * g_norm2)
    } else {
        0.0
    };
    (array.min(1.0), gain.min(1.0))
}

/// Array, gain and joint correlation of one estimated column pair over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SvcTable {
    pub theta: Vec<f64>,
    pub array: Vec<f64>,
    pub gain: Vec<f64>,
    pub joint: Vec<f64>,
}

/// Correlation spectra of column `k` of `factors` against the model.
pub fn column_spectrum(
    factors: &CpFactors,
    k: usize,
    geometry: &ArrayGeometry,
    schedule: &RotationSchedule,
    pattern: &GainPattern,
    grid: &AngularGrid,
) -> SvcTable {
    let bank = ModelBank::new(grid.points(), geometry, schedule, pattern);
    let mut table = SvcTable {
        theta: grid.points().to_vec(),
        array: Vec::with_capacity(grid.len()),
        gain: Vec::with_capacity(grid.len()),
        joint: Vec::with_capacity(grid.len()),
    };
    for (s, g) in bank.steering.iter().zip(&bank.gains) {
        let (a, b) = column_scores(factors.array_factor.column(k), factors.gain_factor.column(k), s, g);
        table.array.push(a);
        table.gain.push(b);
        table.joint.push(a * b);
    }
    table
}

/// Per-column correlation search over the grid.
///
/// The objective for column `k` is the normalized squared correlation of
/// `â_k ⊗ b̂_k` with `a(ϑ) ⊗ b(ϑ)`, evaluated through the equivalent product
/// of the array and gain correlations. Each column yields one angle.
pub fn estimate_doas(
    factors: &CpFactors,
    geometry: &ArrayGeometry,
    schedule: &RotationSchedule,
    pattern: &GainPattern,
    grid: &AngularGrid,
    keep_spectra: bool,
) -> Result<DoaEstimate> {
    if factors.array_factor.nrows() != geometry.n_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "array factor has {} rows for N = {}",
            factors.array_factor.nrows(),
            geometry.n_antennas()
        )));
    }
    if factors.gain_factor.nrows() != schedule.m_rotations() {
        return Err(Error::DimensionMismatch(format!(
            "gain factor has {} rows for M = {}",
            factors.gain_factor.nrows(),
            schedule.m_rotations()
        )));
    }
    let bank = ModelBank::new(grid.points(), geometry, schedule, pattern);
    let step = grid.step();

    let picks = (0..factors.rank())
        .map(|k| {
            let a_hat = factors.array_factor.column(k);
            let b_hat = factors.gain_factor.column(k);
            let spectrum: Vec<f64> = bank
                .steering
                .iter()
                .zip(&bank.gains)
                .map(|(s, g)| {
                    let (a, b) = column_scores(a_hat, b_hat, s, g);
                    a * b
                })
                .collect();
            let best = argmax(&spectrum);
            let flat = spectrum[best] - median(&spectrum) < FLAT_SPECTRUM;

            let mut angle = grid.points()[best];
            let mut score = spectrum[best];
            if best > 0 && best + 1 < spectrum.len() {
                let delta = parabolic_offset(spectrum[best - 1], spectrum[best], spectrum[best + 1]);
                if delta != 0.0 {
                    let refined = angle + delta * step;
                    let s = steering_vector(refined, geometry).into_inner();
                    let g = gain_profile(refined, schedule.angles(), pattern);
                    let (a, b) = column_scores(a_hat, b_hat, &s, &g);
                    if a * b >= score {
                        angle = refined;
                        score = a * b;
                    }
                }
            }
            (angle, score, flat, keep_spectra.then_some(spectrum))
        })
        .collect();
    Ok(DoaEstimate::from_unsorted(picks, keep_spectra))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::rotation_angles;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    fn defaults(p: f64) -> (ArrayGeometry, RotationSchedule, GainPattern) {
        (
            ArrayGeometry::new(8, 2.0).unwrap(),
            rotation_angles(7, deg(60.0)).unwrap(),
            GainPattern::new(p).unwrap(),
        )
    }

    #[test]
    fn grid_construction() {
        let g = AngularGrid::new(deg(-60.0), deg(60.0), DEFAULT_RESOLUTION).unwrap();
        assert_eq!(g.len(), 2401);
        assert_eq!(g.points()[0], deg(-60.0));
        assert_eq!(*g.points().last().unwrap(), deg(60.0));
        assert!(g.step() <= DEFAULT_RESOLUTION * (1.0 + 1e-12));
        assert!(g.points().windows(2).all(|w| w[1] > w[0]));
        let g = AngularGrid::new(0.0, 0.1, 0.03).unwrap();
        assert_eq!(g.len(), 5);
        assert!(g.step() <= 0.03);
        assert_eq!(AngularGrid::new(0.2, 0.2, 0.01).unwrap().len(), 1);
        assert!(AngularGrid::new(0.2, 0.1, 0.01).is_err());
        assert!(AngularGrid::new(-0.1, 0.1, 0.0).is_err());
        assert!(AngularGrid::new(-1.6, 0.1, 0.01).is_err());
    }

    #[test]
    fn array_svc_examples() {
        let g8_2 = ArrayGeometry::new(8, 2.0).unwrap();
        assert!((array_svc(0.3, 0.3, &g8_2) - 1.0).abs() < 1e-14);
        let lobe = (deg(-20.0).sin() + 1.0).asin();
        assert!((lobe.to_degrees() - 41.145_986_558_640_85).abs() < 1e-9);
        assert!(array_svc(deg(-20.0), lobe, &g8_2) > 1.0 - 1e-12);
        assert!(array_svc_closed_form(deg(-20.0), lobe, &g8_2) > 1.0 - 1e-12);

        let g8_1 = ArrayGeometry::new(8, 1.0).unwrap();
        let theta_k = deg(10.0);
        let null = (theta_k.sin() + 2.0 / 8.0).asin();
        assert!(array_svc(theta_k, null, &g8_1) < 1e-12);
        assert!(array_svc_closed_form(theta_k, null, &g8_1) < 1e-12);
    }

    #[test]
    fn closed_form_matches_direct_form() {
        for l in [1.0, 2.0, 3.0, 1.5] {
            let g = ArrayGeometry::new(8, l).unwrap();
            for i in 0..600 {
                let t = deg(-60.0 + 0.2 * i as f64);
                let a = array_svc(deg(15.0), t, &g);
                let b = array_svc_closed_form(deg(15.0), t, &g);
                assert!((a - b).abs() < 1e-10, "L={l} t={t}: {a} vs {b}");
            }
            assert_eq!(array_svc_closed_form(0.2, 0.2, &g), 1.0);
        }
    }

    #[test]
    fn gain_svc_examples() {
        let (_, s, p5) = defaults(5.0);
        assert!((gain_svc(deg(15.0), deg(15.0), &s, &p5) - 1.0).abs() < 1e-14);
        // A single pointing direction gives a flat correlation.
        for t in [-50.0, -10.0, 0.0, 30.0] {
            assert!((gain_svc_for_angles(deg(15.0), deg(t), &[0.0], &p5) - 1.0).abs() < 1e-14);
        }
        // Exhaustive 0.01° grid: unique global maximizer at 15°.
        let grid = AngularGrid::new(deg(-60.0), deg(60.0), deg(0.01)).unwrap();
        let values: Vec<f64> = grid.points().iter().map(|&t| gain_svc(deg(15.0), t, &s, &p5)).collect();
        let best = argmax(&values);
        assert!((grid.points()[best].to_degrees() - 15.0).abs() < 1e-9);
        let second = values
            .iter()
            .enumerate()
            .filter(|(i, _)| (*i as isize - best as isize).abs() > 5)
            .map(|(_, v)| *v)
            .fold(0.0, f64::max);
        assert!(second < values[best]);
    }

    #[test]
    fn joint_svc_forms_agree() {
        let (g, s, p) = defaults(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let a = rng.random_range(-deg(60.0)..deg(60.0));
            let b = rng.random_range(-deg(60.0)..deg(60.0));
            let prod = joint_svc(a, b, &g, &s, &p);
            let kron = joint_svc_kronecker(a, b, &g, &s, &p);
            assert!((prod - kron).abs() < 1e-12, "{prod} vs {kron}");
        }
        assert!((joint_svc(0.1, 0.1, &g, &s, &p) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn grating_lobes_suppressed_by_gain() {
        for p in [3.0, 5.0] {
            let (g, s, pat) = defaults(p);
            for tk in [-50.0, -20.0, 0.0, 15.0, 45.0] {
                for lobe in grating_lobe_angles(deg(tk), &g, deg(-60.0), deg(60.0)) {
                    if lobe.is_true_angle() {
                        continue;
                    }
                    let b = gain_svc(deg(tk), lobe.angle, &s, &pat);
                    let c = joint_svc(deg(tk), lobe.angle, &g, &s, &pat);
                    // The array SVC is exactly 1 at a lobe, so C equals B there.
                    assert!(c <= b + 1e-12 && b < 1.0, "p={p} tk={tk}: C={c} B={b}");
                }
            }
        }
    }

    #[test]
    fn grating_lobe_examples() {
        let g1 = ArrayGeometry::new(8, 1.0).unwrap();
        for tk in [-55.0, -20.0, 0.0, 33.0] {
            let lobes = grating_lobe_angles(deg(tk), &g1, deg(-60.0), deg(60.0));
            assert_eq!(lobes.len(), 1);
            assert!(lobes[0].is_true_angle());
        }
        let g2 = ArrayGeometry::new(8, 2.0).unwrap();
        let lobes = grating_lobe_angles(0.0, &g2, deg(-60.0), deg(60.0));
        assert_eq!(lobes, vec![GratingLobe { angle: 0.0, order: 0 }]);

        let lobes = grating_lobe_angles(deg(-20.0), &g2, deg(-60.0), deg(60.0));
        assert_eq!(lobes.len(), 2);
        assert!(lobes[0].is_true_angle());
        assert_eq!(lobes[1].order, 1);
        assert!((lobes[1].angle - (1.0 - deg(20.0).sin()).asin()).abs() < 1e-15);

        let g4 = ArrayGeometry::new(8, 4.0).unwrap();
        let lobes = grating_lobe_angles(deg(15.0), &g4, deg(-60.0), deg(60.0));
        assert!(lobes.windows(2).all(|w| w[1].angle > w[0].angle));
        for l in &lobes {
            assert!(array_svc(deg(15.0), l.angle, &g4) > 1.0 - 1e-9);
        }
    }

    #[test]
    fn parabolic_vertex() {
        // y = -(x - 0.3)^2 sampled at -1, 0, 1.
        let f = |x: f64| -(x - 0.3) * (x - 0.3);
        assert!((parabolic_offset(f(-1.0), f(0.0), f(1.0)) - 0.3).abs() < 1e-12);
        assert_eq!(parabolic_offset(1.0, 1.0, 1.0), 0.0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    fn exact_factors(doas: &[f64], g: &ArrayGeometry, s: &RotationSchedule, p: &GainPattern) -> CpFactors {
        let k = doas.len();
        let a = DMatrix::from_fn(g.n_antennas(), k, |n, kk| steering_vector(doas[kk], g).entries()[n]);
        let b = DMatrix::from_fn(s.m_rotations(), k, |m, kk| {
            Complex64::new(gain_steering_vector(doas[kk], s, p).entries()[m], 0.0)
        });
        let sig = DMatrix::from_element(4, k, Complex64::new(1.0, 0.0));
        CpFactors::new(a, b, sig).unwrap()
    }

    #[test]
    fn exact_columns_give_nearest_grid_point() {
        let (g, s, p) = defaults(3.0);
        let grid = AngularGrid::sensing_range(&s, DEFAULT_RESOLUTION).unwrap();
        let theta = deg(12.3456);
        let f = exact_factors(&[theta], &g, &s, &p);
        let est = estimate_doas(&f, &g, &s, &p, &grid, false).unwrap();
        // Grid maximizer is the nearest point; refinement stays within one step.
        let nearest = grid.points()[grid.nearest_index(theta)];
        assert!((est.angles[0] - nearest).abs() <= grid.step());
        assert!((est.angles[0] - theta).abs() < deg(0.001));
        assert!(!est.any_low_confidence());
    }

    #[test]
    fn scale_and_permutation_invariance() {
        let (g, s, p) = defaults(3.0);
        let grid = AngularGrid::sensing_range(&s, DEFAULT_RESOLUTION).unwrap();
        let doas = [deg(-20.0), deg(15.0), deg(45.0)];
        let f = exact_factors(&doas, &g, &s, &p);
        let base = estimate_doas(&f, &g, &s, &p, &grid, false).unwrap();
        for (est, truth) in base.angles.iter().zip(doas) {
            assert!((est - truth).abs() < deg(0.01));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let perm = [2usize, 0, 1];
        let mut g2 = f.clone();
        for (dst, &src) in perm.iter().enumerate() {
            let ca = Complex64::from_polar(rng.random_range(0.1..10.0), rng.random_range(-3.0..3.0));
            let cb = Complex64::from_polar(rng.random_range(0.1..10.0), rng.random_range(-3.0..3.0));
            g2.array_factor.set_column(dst, &(f.array_factor.column(src) * ca));
            g2.gain_factor.set_column(dst, &(f.gain_factor.column(src) * cb));
        }
        let permuted = estimate_doas(&g2, &g, &s, &p, &grid, false).unwrap();
        assert_eq!(base.angles, permuted.angles);
    }

    #[test]
    fn flat_spectrum_flagged() {
        let (g, s, p) = defaults(3.0);
        let grid = AngularGrid::sensing_range(&s, deg(1.0)).unwrap();
        let f = CpFactors::new(DMatrix::zeros(8, 1), DMatrix::zeros(7, 1), DMatrix::zeros(3, 1)).unwrap();
        let est = estimate_doas(&f, &g, &s, &p, &grid, true).unwrap();
        assert!(est.low_confidence[0]);
        assert_eq!(est.spectra.unwrap()[0].len(), grid.len());
    }

    #[test]
    fn refinement_moves_at_most_one_step() {
        let (g, s, p) = defaults(3.0);
        let grid = AngularGrid::sensing_range(&s, deg(0.5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let theta = rng.random_range(deg(-59.0)..deg(59.0));
            let f = exact_factors(&[theta], &g, &s, &p);
            let est = estimate_doas(&f, &g, &s, &p, &grid, true).unwrap();
            let spectrum = &est.spectra.as_ref().unwrap()[0];
            let grid_best = grid.points()[argmax(spectrum)];
            assert!((est.angles[0] - grid_best).abs() <= grid.step() + 1e-15);
        }
    }

    #[test]
    fn dimension_checks() {
        let (g, s, p) = defaults(3.0);
        let grid = AngularGrid::sensing_range(&s, deg(1.0)).unwrap();
        let f = CpFactors::new(DMatrix::zeros(4, 1), DMatrix::zeros(7, 1), DMatrix::zeros(3, 1)).unwrap();
        assert!(estimate_doas(&f, &g, &s, &p, &grid, false).is_err());
    }
}
