//! Scene description and received-signal synthesis.
//!
//! One trial draws a `K × T` block of probing signals and sends the same
//! realized waveform during each of the `M` rotations, so the noise-free data
//! is exactly the rank-`K` tensor `Σ_k a_k ∘ b_k ∘ s_k`. Noise is drawn fresh
//! for every rotation.
//!
//! Randomness comes from ChaCha8 seeded with the trial seed; signals and
//! noise use separate streams of the same key so they stay aligned across
//! schemes and SNR values (common random numbers).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::array_model::{gain, steering_vector, ArrayGeometry, GainPattern, RotationSchedule};
use crate::cp::CpFactors;
use crate::error::{Error, Result};
use crate::tensor::ComplexTensor3;

const SIGNAL_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    /// Direction of arrival, radians.
    pub doa: f64,
    pub scattering: Complex64,
    pub signal_power: f64,
}

impl Target {
    /// Unit scattering coefficient and unit signal power.
    pub fn new(doa: f64) -> Self {
        Self {
            doa,
            scattering: Complex64::new(1.0, 0.0),
            signal_power: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    targets: Vec<Target>,
    noise_power: f64,
}

impl Scene {
    pub fn new(targets: Vec<Target>, noise_power: f64) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::param("targets", "need at least one target"));
        }
        for t in &targets {
            if !t.doa.is_finite() || t.doa.abs() >= std::f64::consts::FRAC_PI_2 {
                return Err(Error::param("doa", format!("DOA {} rad outside (-pi/2, pi/2)", t.doa)));
            }
            if !(t.signal_power.is_finite() && t.signal_power >= 0.0) {
                return Err(Error::param(
                    "signal_power",
                    format!("need sigma_k^2 >= 0, got {}", t.signal_power),
                ));
            }
            if !(t.scattering.re.is_finite() && t.scattering.im.is_finite()) {
                return Err(Error::param("scattering", "non-finite scattering coefficient"));
            }
        }
        for (i, a) in targets.iter().enumerate() {
            if targets[i + 1..].iter().any(|b| b.doa == a.doa) {
                return Err(Error::param(
                    "doa",
                    format!("duplicate DOA {:.6} deg", a.doa.to_degrees()),
                ));
            }
        }
        if !(noise_power.is_finite() && noise_power >= 0.0) {
            return Err(Error::param(
                "noise_power",
                format!("need sigma_n^2 >= 0, got {noise_power}"),
            ));
        }
        Ok(Self {
            targets,
            noise_power,
        })
    }

    /// Three unit-power targets at −20°, 15°, 45° and 10 dB SNR.
    pub fn reference_default() -> Self {
        let targets = [-20.0f64, 15.0, 45.0]
            .iter()
            .map(|d| Target::new(d.to_radians()))
            .collect();
        Self::new(targets, 0.1).expect("valid default scene")
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    pub fn k(&self) -> usize {
        self.targets.len()
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn doas(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t.doa).collect()
    }

    pub fn with_noise_power(&self, noise_power: f64) -> Result<Self> {
        Self::new(self.targets.clone(), noise_power)
    }

    /// Sets `σ_n² = σ_ref² / 10^{snr/10}` where `σ_ref²` is the first target's power.
    pub fn with_snr_db(&self, snr_db: f64) -> Result<Self> {
        let reference = self.targets[0].signal_power;
        self.with_noise_power(reference / 10f64.powf(snr_db / 10.0))
    }

    /// Every DOA must lie inside the sensing range `[−ϑ_max, ϑ_max]`.
    pub fn check_range(&self, schedule: &RotationSchedule) -> Result<()> {
        let limit = schedule.theta_max();
        match self.targets.iter().find(|t| t.doa.abs() > limit + 1e-12) {
            Some(t) => Err(Error::param(
                "doa",
                format!(
                    "target at {:.4} deg outside the sensing range +/-{:.4} deg",
                    t.doa.to_degrees(),
                    limit.to_degrees()
                ),
            )),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignalModel {
    /// Circularly-symmetric complex Gaussian waveforms.
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub snapshots: usize,
    pub seed: u64,
    pub signal_model: SignalModel,
    /// Stress option: draw a fresh waveform for every rotation. This breaks the
    /// exact rank-`K` structure and is off by default.
    pub fresh_signals_per_rotation: bool,
}

impl SimulationConfig {
    pub fn new(snapshots: usize, seed: u64) -> Result<Self> {
        if snapshots == 0 {
            return Err(Error::param("snapshots", "need T >= 1"));
        }
        Ok(Self {
            snapshots,
            seed,
            signal_model: SignalModel::Gaussian,
            fresh_signals_per_rotation: false,
        })
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn complex_normal(rng: &mut ChaCha8Rng, std: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * (std * std::f64::consts::FRAC_1_SQRT_2)
}

fn draw_block(rng: &mut ChaCha8Rng, scene: &Scene, snapshots: usize) -> DMatrix<Complex64> {
    let stds: Vec<f64> = scene.targets.iter().map(|t| t.signal_power.sqrt()).collect();
    let mut s = DMatrix::zeros(scene.k(), snapshots);
    for t in 0..snapshots {
        for (k, std) in stds.iter().enumerate() {
            s[(k, t)] = complex_normal(rng, *std);
        }
    }
    s
}

/// Probing waveforms `S̃` (K × T); row `k` has power `σ_k²`.
pub fn draw_signals(scene: &Scene, config: &SimulationConfig) -> DMatrix<Complex64> {
    let mut rng = stream_rng(config.seed, SIGNAL_STREAM);
    draw_block(&mut rng, scene, config.snapshots)
}

/// Amplitude gains `b_{m,k}` (M × K) for rotatable elements.
pub fn gain_matrix(scene: &Scene, schedule: &RotationSchedule, pattern: &GainPattern) -> DMatrix<f64> {
    DMatrix::from_fn(schedule.m_rotations(), scene.k(), |m, k| {
        gain(scene.targets[k].doa, schedule.angles()[m], pattern).sqrt()
    })
}

/// Received tensor for rotatable elements: slice `m` is `H_m S̃ + N_m`.
pub fn synthesize(
    scene: &Scene,
    geometry: &ArrayGeometry,
    schedule: &RotationSchedule,
    pattern: &GainPattern,
    config: &SimulationConfig,
) -> Result<ComplexTensor3> {
    scene.check_range(schedule)?;
    let gains = gain_matrix(scene, schedule, pattern);
    synthesize_with_gains(scene, geometry, &gains, config)
}

/// Received data for omnidirectional elements over `m_periods` probing
/// periods: same waveforms, unit gains, fresh noise each period.
pub fn synthesize_omnidirectional(
    scene: &Scene,
    geometry: &ArrayGeometry,
    m_periods: usize,
    config: &SimulationConfig,
) -> Result<ComplexTensor3> {
    let gains = DMatrix::from_element(m_periods, scene.k(), 1.0);
    synthesize_with_gains(scene, geometry, &gains, config)
}

/// Shared synthesis path; `gains` is `M × K`.
pub fn synthesize_with_gains(
    scene: &Scene,
    geometry: &ArrayGeometry,
    gains: &DMatrix<f64>,
    config: &SimulationConfig,
) -> Result<ComplexTensor3> {
    let (m_rot, k) = gains.shape();
    if k != scene.k() {
        return Err(Error::DimensionMismatch(format!(
            "gain matrix has {k} columns for {} targets",
            scene.k()
        )));
    }
    if m_rot == 0 || config.snapshots == 0 {
        return Err(Error::DimensionMismatch("empty rotation or snapshot axis".into()));
    }
    let n = geometry.n_antennas();
    let t_len = config.snapshots;
    let steering: Vec<Vec<Complex64>> = scene
        .targets
        .iter()
        .map(|t| steering_vector(t.doa, geometry).into_inner())
        .collect();

    let mut signal_rng = stream_rng(config.seed, SIGNAL_STREAM);
    let mut noise_rng = stream_rng(config.seed, NOISE_STREAM);
    let mut signals = draw_block(&mut signal_rng, scene, t_len);
    let noise_std = scene.noise_power.sqrt();

    let mut out = ComplexTensor3::zeros((n, m_rot, t_len));
    for m in 0..m_rot {
        if m > 0 && config.fresh_signals_per_rotation {
            signals = draw_block(&mut signal_rng, scene, t_len);
        }
        for t in 0..t_len {
            for row in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for (kk, target) in scene.targets.iter().enumerate() {
                    acc += target.scattering * gains[(m, kk)] * steering[kk][row] * signals[(kk, t)];
                }
                if noise_std > 0.0 {
                    acc += complex_normal(&mut noise_rng, noise_std);
                }
                out.set(row, m, t, acc);
            }
        }
    }
    Ok(out)
}

/// Noise-free CP factors `(A, B, Sᵀ)` with `S = Λ S̃`.
pub fn ground_truth_factors(
    scene: &Scene,
    geometry: &ArrayGeometry,
    gains: &DMatrix<f64>,
    signals: &DMatrix<Complex64>,
) -> CpFactors {
    let k = scene.k();
    let a = DMatrix::from_fn(geometry.n_antennas(), k, |n, kk| {
        steering_vector(scene.targets[kk].doa, geometry).entries()[n]
    });
    let b = gains.map(|g| Complex64::new(g, 0.0));
    let s_t = DMatrix::from_fn(signals.ncols(), k, |t, kk| scene.targets[kk].scattering * signals[(kk, t)]);
    CpFactors::new(a, b, s_t).expect("consistent factor ranks")
}

/// Concatenates the `M` rotation blocks side by side into an `N × MT` matrix:
/// column `m·T + t` is the snapshot `y_m(t)`.
pub fn aggregate_snapshots(tensor: &ComplexTensor3) -> DMatrix<Complex64> {
    let (n, m, t) = tensor.dims();
    DMatrix::from_fn(n, m * t, |row, col| tensor.get(row, col / t, col % t))
}
