//! Run configuration parsed from a TOML document.
//!
//! Every key is optional; missing keys take the default experiment setup
//! (N = 8, L = 2, p = 3, M = 7, ϑ_max = 60°, T = 20, SNR 10 dB, targets at
//! −20°, 15° and 45°). Angles are written in degrees and converted to radians
//! here. Unknown keys are rejected.
//!
//! ```toml
//! output_dir = "results"
//!
//! [geometry]
//! n_antennas = 8
//! sparse_factor = 2.0
//! spacing_wavelengths = 0.5
//!
//! [schedule]
//! m_rotations = 7
//! theta_max = 60.0
//!
//! [pattern]
//! directivity = 3.0
//!
//! [scene]
//! snr_db = 10.0            # or noise_power = 0.1, not both
//! [[scene.targets]]
//! doa = -20.0
//! scattering = [1.0, 0.0]  # re, im
//! signal_power = 1.0
//!
//! [simulation]
//! snapshots = 20
//! seed = 7
//! fresh_signals_per_rotation = false
//!
//! [grid]
//! resolution = 0.05
//!
//! [als]
//! max_iter = 500
//! tol = 1e-8
//! restarts = 2
//! init = "random"          # or "spectral"
//!
//! [sweep]
//! trials = 200
//! snr_db = [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
//! ```

use std::path::PathBuf;

use num_complex::Complex64;
use serde::Deserialize;

use crate::array_model::{ArrayGeometry, GainPattern, RotationSchedule};
use crate::cp::{AlsOptions, InitStrategy};
use crate::doa::AngularGrid;
use crate::error::{Error, Result};
use crate::eval::{ExperimentParams, Scheme};
use crate::scene::{Scene, Target};

const DEFAULT_DOAS_DEG: [f64; 3] = [-20.0, 15.0, 45.0];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: Option<PathBuf>,
    #[serde(default)]
    geometry: RawGeometry,
    #[serde(default)]
    schedule: RawSchedule,
    #[serde(default)]
    pattern: RawPattern,
    #[serde(default)]
    scene: RawScene,
    #[serde(default)]
    simulation: RawSimulation,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    als: RawAls,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    svc: RawSvc,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    n_antennas: Option<i64>,
    sparse_factor: Option<f64>,
    spacing_wavelengths: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    m_rotations: Option<i64>,
    theta_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPattern {
    directivity: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    targets: Option<Vec<RawTarget>>,
    snr_db: Option<f64>,
    noise_power: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    doa: f64,
    scattering: Option<[f64; 2]>,
    signal_power: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    snapshots: Option<i64>,
    seed: Option<u64>,
    fresh_signals_per_rotation: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    resolution: Option<f64>,
    lo: Option<f64>,
    hi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAls {
    max_iter: Option<i64>,
    tol: Option<f64>,
    restarts: Option<i64>,
    init: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    trials: Option<i64>,
    schemes: Option<Vec<String>>,
    snr_db: Option<Vec<f64>>,
    sparse_factors: Option<Vec<f64>>,
    sparse_directivities: Option<Vec<f64>>,
    sparse_snr_db: Option<f64>,
    directivities: Option<Vec<f64>>,
    directivity_snr_db: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSvc {
    theta_k: Option<f64>,
    directivity: Option<f64>,
}

/// How the noise power was specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    /// Relative to the first target's signal power.
    SnrDb(f64),
    NoisePower(f64),
}

/// Sweep settings; values are in the units of the swept variable (dB, L, p).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub snr_db: Vec<f64>,
    pub sparse_factors: Vec<f64>,
    /// One sparse-factor sweep is run per entry.
    pub sparse_directivities: Vec<f64>,
    pub sparse_snr_db: f64,
    pub directivities: Vec<f64>,
    pub directivity_snr_db: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            schemes: Scheme::ALL.to_vec(),
            snr_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            sparse_factors: vec![1.0, 2.0, 3.0, 4.0],
            sparse_directivities: vec![2.0, 4.0, 6.0],
            sparse_snr_db: 5.0,
            directivities: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            directivity_snr_db: 10.0,
        }
    }
}

/// Spectrum-dump settings for `svc-curves`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvcConfig {
    /// Radians.
    pub theta_k: f64,
    pub directivity: f64,
}

impl Default for SvcConfig {
    /// θ_k = 15° with p = 5.
    fn default() -> Self {
        Self {
            theta_k: 15f64.to_radians(),
            directivity: 5.0,
        }
    }
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: ArrayGeometry,
    pub schedule: RotationSchedule,
    pub pattern: GainPattern,
    pub scene: Scene,
    pub noise: NoiseSpec,
    pub snapshots: usize,
    /// `None` means a seed is generated at dispatch and recorded in the manifest.
    pub seed: Option<u64>,
    pub fresh_signals_per_rotation: bool,
    pub grid: AngularGrid,
    pub als: AlsOptions,
    pub sweep: SweepConfig,
    pub svc: SvcConfig,
    pub output_dir: PathBuf,
    /// Angles exactly as written (or defaulted), for the manifest.
    pub angles_deg: AngleInputs,
}

/// Degree values behind the radian fields of [`RunConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct AngleInputs {
    pub theta_max: f64,
    pub doas: Vec<f64>,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_resolution: f64,
    pub svc_theta_k: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn experiment_params(&self) -> ExperimentParams {
        ExperimentParams {
            geometry: self.geometry,
            schedule: self.schedule.clone(),
            pattern: self.pattern,
            scene: self.scene.clone(),
            snapshots: self.snapshots,
            grid: self.grid.clone(),
            als: self.als,
            fresh_signals_per_rotation: self.fresh_signals_per_rotation,
        }
    }
}

fn positive_count(key: &str, value: Option<i64>, default: usize, min: usize) -> Result<usize> {
    let v = value.unwrap_or(default as i64);
    if v < min as i64 {
        return Err(Error::config(key, format!("must be at least {min}, got {v}")));
    }
    Ok(v as usize)
}

fn finite(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be finite, got {v}")))
    }
}

fn finite_list(key: &str, values: Vec<f64>) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::config(key, "must not be empty"));
    }
    values.into_iter().map(|v| finite(key, v)).collect()
}

fn wrap(key: &str, result: Result<impl Sized>) -> Result<()> {
    result.map(|_| ()).map_err(|e| match e {
        Error::InvalidParameter { reason, .. } => Error::config(key, reason),
        other => Error::config(key, other.to_string()),
    })
}

/// Parse and validate a TOML configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let key = e.span().map(|s| text[s].trim().to_string()).unwrap_or_default();
        Error::config(key, e.message().to_string())
    })?;

    let n = positive_count("geometry.n_antennas", raw.geometry.n_antennas, 8, 2)?;
    let l = finite("geometry.sparse_factor", raw.geometry.sparse_factor.unwrap_or(2.0))?;
    if l < 1.0 {
        return Err(Error::config("geometry.sparse_factor", format!("must be >= 1, got {l}")));
    }
    let spacing = finite(
        "geometry.spacing_wavelengths",
        raw.geometry.spacing_wavelengths.unwrap_or(ArrayGeometry::DEFAULT_SPACING),
    )?;
    if spacing <= 0.0 {
        return Err(Error::config(
            "geometry.spacing_wavelengths",
            format!("must be positive, got {spacing}"),
        ));
    }
    let geometry = ArrayGeometry::with_spacing(n, l, spacing)?;

    let m = raw.schedule.m_rotations.unwrap_or(7);
    if m < 2 {
        return Err(Error::config(
            "schedule.m_rotations",
            format!("at least 2 rotations are needed for the gain correlation to peak uniquely at the true angle, got {m}"),
        ));
    }
    let theta_max_deg = finite("schedule.theta_max", raw.schedule.theta_max.unwrap_or(60.0))?;
    if theta_max_deg <= 0.0 || theta_max_deg >= 90.0 {
        return Err(Error::config(
            "schedule.theta_max",
            format!("must lie in (0, 90) degrees, got {theta_max_deg}"),
        ));
    }
    let schedule = RotationSchedule::new(m as usize, theta_max_deg.to_radians())?;

    let p = finite("pattern.directivity", raw.pattern.directivity.unwrap_or(3.0))?;
    if p < 0.0 {
        return Err(Error::config("pattern.directivity", format!("must be >= 0, got {p}")));
    }
    let pattern = GainPattern::new(p)?;

    let (scene, noise, doas_deg) = parse_scene(raw.scene, theta_max_deg)?;

    let snapshots = positive_count("simulation.snapshots", raw.simulation.snapshots, 20, 1)?;

    let resolution = finite("grid.resolution", raw.grid.resolution.unwrap_or(0.05))?;
    if resolution <= 0.0 {
        return Err(Error::config("grid.resolution", format!("must be positive, got {resolution}")));
    }
    let lo = finite("grid.lo", raw.grid.lo.unwrap_or(-theta_max_deg))?;
    let hi = finite("grid.hi", raw.grid.hi.unwrap_or(theta_max_deg))?;
    let grid = AngularGrid::new(lo.to_radians(), hi.to_radians(), resolution.to_radians())
        .map_err(|e| Error::config("grid", e.to_string()))?;

    let als = parse_als(raw.als)?;
    let sweep = parse_sweep(raw.sweep)?;

    let svc_theta = finite("svc.theta_k", raw.svc.theta_k.unwrap_or(15.0))?;
    if svc_theta.abs() > theta_max_deg {
        return Err(Error::config(
            "svc.theta_k",
            format!("{svc_theta} degrees lies outside the sensing range ±{theta_max_deg}"),
        ));
    }
    let svc_p = finite("svc.directivity", raw.svc.directivity.unwrap_or(5.0))?;
    wrap("svc.directivity", GainPattern::new(svc_p))?;

    Ok(RunConfig {
        geometry,
        schedule,
        pattern,
        scene,
        noise,
        snapshots,
        seed: raw.simulation.seed,
        fresh_signals_per_rotation: raw.simulation.fresh_signals_per_rotation.unwrap_or(false),
        grid,
        als,
        sweep,
        svc: SvcConfig {
            theta_k: svc_theta.to_radians(),
            directivity: svc_p,
        },
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("results")),
        angles_deg: AngleInputs {
            theta_max: theta_max_deg,
            doas: doas_deg,
            grid_lo: lo,
            grid_hi: hi,
            grid_resolution: resolution,
            svc_theta_k: svc_theta,
        },
    })
}

fn parse_scene(raw: RawScene, theta_max_deg: f64) -> Result<(Scene, NoiseSpec, Vec<f64>)> {
    let raw_targets = raw.targets.unwrap_or_else(|| {
        DEFAULT_DOAS_DEG
            .iter()
            .map(|&doa| RawTarget {
                doa,
                scattering: None,
                signal_power: None,
            })
            .collect()
    });
    if raw_targets.is_empty() {
        return Err(Error::config("scene.targets", "at least one target is required"));
    }
    let mut targets = Vec::with_capacity(raw_targets.len());
    let mut doas_deg = Vec::with_capacity(raw_targets.len());
    for (i, t) in raw_targets.into_iter().enumerate() {
        let doa = finite("scene.targets.doa", t.doa)?;
        if doa.abs() > theta_max_deg {
            return Err(Error::config(
                format!("scene.targets[{i}].doa"),
                format!("{doa} degrees lies outside the sensing range ±{theta_max_deg}"),
            ));
        }
        let [re, im] = t.scattering.unwrap_or([1.0, 0.0]);
        let scattering = Complex64::new(
            finite("scene.targets.scattering", re)?,
            finite("scene.targets.scattering", im)?,
        );
        let power = finite("scene.targets.signal_power", t.signal_power.unwrap_or(1.0))?;
        if power <= 0.0 {
            return Err(Error::config(
                format!("scene.targets[{i}].signal_power"),
                format!("must be positive, got {power}"),
            ));
        }
        doas_deg.push(doa);
        targets.push(Target {
            doa: doa.to_radians(),
            scattering,
            signal_power: power,
        });
    }

    let noise = match (raw.snr_db, raw.noise_power) {
        (Some(_), Some(_)) => {
            return Err(Error::config("scene.noise_power", "give either snr_db or noise_power, not both"))
        }
        (_, Some(np)) => {
            let np = finite("scene.noise_power", np)?;
            if np < 0.0 {
                return Err(Error::config("scene.noise_power", format!("must be >= 0, got {np}")));
            }
            NoiseSpec::NoisePower(np)
        }
        (snr, None) => NoiseSpec::SnrDb(finite("scene.snr_db", snr.unwrap_or(10.0))?),
    };

    let base = Scene::new(targets, 0.0).map_err(|e| Error::config("scene.targets", e.to_string()))?;
    let scene = match noise {
        NoiseSpec::SnrDb(snr) => base.with_snr_db(snr),
        NoiseSpec::NoisePower(np) => base.with_noise_power(np),
    }
    .map_err(|e| Error::config("scene", e.to_string()))?;
    Ok((scene, noise, doas_deg))
}

fn parse_als(raw: RawAls) -> Result<AlsOptions> {
    let defaults = ExperimentParams::reference_default().als;
    let max_iter = positive_count("als.max_iter", raw.max_iter, defaults.max_iter, 1)?;
    let tol = finite("als.tol", raw.tol.unwrap_or(defaults.tol))?;
    if tol <= 0.0 {
        return Err(Error::config("als.tol", format!("must be positive, got {tol}")));
    }
    let restarts = positive_count("als.restarts", raw.restarts, defaults.restarts, 0)?;
    let init = match raw.init.as_deref().unwrap_or("random") {
        "random" => InitStrategy::Random { seed: 0 },
        "spectral" => InitStrategy::Spectral { seed: 0 },
        other => {
            return Err(Error::config(
                "als.init",
                format!("expected `random` or `spectral`, got `{other}`"),
            ))
        }
    };
    Ok(AlsOptions {
        max_iter,
        tol,
        init,
        restarts,
    })
}

fn parse_sweep(raw: RawSweep) -> Result<SweepConfig> {
    let d = SweepConfig::default();
    let schemes = match raw.schemes {
        None => d.schemes,
        Some(names) if names.is_empty() => return Err(Error::config("sweep.schemes", "must not be empty")),
        Some(names) => names
            .iter()
            .map(|s| s.parse::<Scheme>().map_err(|e| Error::config("sweep.schemes", e.to_string())))
            .collect::<Result<_>>()?,
    };
    let sparse_factors = finite_list("sweep.sparse_factors", raw.sparse_factors.unwrap_or(d.sparse_factors))?;
    if let Some(&bad) = sparse_factors.iter().find(|&&l| l < 1.0) {
        return Err(Error::config("sweep.sparse_factors", format!("values must be >= 1, got {bad}")));
    }
    let sparse_directivities = finite_list(
        "sweep.sparse_directivities",
        raw.sparse_directivities.unwrap_or(d.sparse_directivities),
    )?;
    let directivities = finite_list("sweep.directivities", raw.directivities.unwrap_or(d.directivities))?;
    for (key, list) in [
        ("sweep.sparse_directivities", &sparse_directivities),
        ("sweep.directivities", &directivities),
    ] {
        if let Some(&bad) = list.iter().find(|&&p| p < 0.0) {
            return Err(Error::config(key, format!("values must be >= 0, got {bad}")));
        }
    }
    Ok(SweepConfig {
        trials: positive_count("sweep.trials", raw.trials, d.trials, 1)?,
        schemes,
        snr_db: finite_list("sweep.snr_db", raw.snr_db.unwrap_or(d.snr_db))?,
        sparse_factors,
        sparse_directivities,
        sparse_snr_db: finite("sweep.sparse_snr_db", raw.sparse_snr_db.unwrap_or(d.sparse_snr_db))?,
        directivities,
        directivity_snr_db: finite(
            "sweep.directivity_snr_db",
            raw.directivity_snr_db.unwrap_or(d.directivity_snr_db),
        )?,
    })
}
