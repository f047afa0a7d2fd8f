//! Monte Carlo evaluation of the four estimation schemes.
//!
//! Every trial is fully determined by its seed. Sweeps assign seed
//! `base_seed + trial` to trial `trial` at every sweep point and for every
//! scheme, so schemes and sweep points see the same waveform and noise draws.
//! Trials run in parallel; aggregation happens afterwards in trial order.

use std::fmt;

use rayon::prelude::*;

use crate::array_model::{ArrayGeometry, GainPattern, RotationSchedule};
use crate::cp::{cp_als, AlsOptions, CpFactors, InitStrategy};
use crate::doa::{array_svc, estimate_doas, gain_svc, AngularGrid, SvcTable};
use crate::error::{Error, Result};
use crate::music::music_estimate;
use crate::scene::{synthesize, synthesize_omnidirectional, Scene, SimulationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Tensor pipeline, rotatable elements, sparse array.
    UsRa,
    /// Tensor pipeline, rotatable elements, dense array (`L = 1`).
    UdRa,
    /// MUSIC, omnidirectional elements, sparse array.
    UsOa,
    /// MUSIC, omnidirectional elements, dense array (`L = 1`).
    UdOa,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::UsRa, Scheme::UdRa, Scheme::UsOa, Scheme::UdOa];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::UsRa => "US_RA",
            Scheme::UdRa => "UD_RA",
            Scheme::UsOa => "US_OA",
            Scheme::UdOa => "UD_OA",
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Scheme::UsRa | Scheme::UsOa)
    }

    pub fn is_rotatable(&self) -> bool {
        matches!(self, Scheme::UsRa | Scheme::UdRa)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s) || sc.name().replace('_', "-").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param("scheme", format!("unknown scheme `{s}`")))
    }
}

/// Everything a trial needs besides its seed.
#[derive(Debug, Clone)]
pub struct ExperimentParams {
    /// Sparse geometry; dense schemes use the same `N` and spacing with `L = 1`.
    pub geometry: ArrayGeometry,
    pub schedule: RotationSchedule,
    pub pattern: GainPattern,
    pub scene: Scene,
    pub snapshots: usize,
    pub grid: AngularGrid,
    /// The init seed is replaced per trial; the strategy kind is kept.
    pub als: AlsOptions,
    pub fresh_signals_per_rotation: bool,
}

impl ExperimentParams {
    /// N = 8, L = 2, p = 3, M = 7, ϑ_max = 60°, T = 20, SNR 10 dB,
    /// targets at −20°, 15°, 45°, 0.05° grid.
    pub fn reference_default() -> Self {
        let schedule = RotationSchedule::new(7, 60f64.to_radians()).expect("valid schedule");
        let grid = AngularGrid::sensing_range(&schedule, crate::doa::DEFAULT_RESOLUTION).expect("valid grid");
        Self {
            geometry: ArrayGeometry::new(8, 2.0).expect("valid geometry"),
            schedule,
            pattern: GainPattern::new(3.0).expect("valid pattern"),
            scene: Scene::reference_default(),
            snapshots: 20,
            grid,
            als: AlsOptions {
                restarts: 2,
                ..AlsOptions::default()
            },
            fresh_signals_per_rotation: false,
        }
    }

    pub fn geometry_for(&self, scheme: Scheme) -> ArrayGeometry {
        if scheme.is_sparse() {
            self.geometry
        } else {
            self.geometry
                .with_sparse_factor(1.0)
                .expect("dense geometry from a valid sparse one")
        }
    }

    fn simulation(&self, seed: u64) -> Result<SimulationConfig> {
        let mut cfg = SimulationConfig::new(self.snapshots, seed)?;
        cfg.fresh_signals_per_rotation = self.fresh_signals_per_rotation;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialDiagnostics {
    pub als_iterations: usize,
    pub als_attempts: usize,
    pub als_converged: bool,
    pub als_final_fit: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub scheme: Scheme,
    /// Radians, ascending.
    pub true_doas: Vec<f64>,
    /// Radians, ascending.
    pub est_doas: Vec<f64>,
    /// Mean squared error (degrees²) under the best pairing.
    pub matched_sq_err: f64,
    pub seed: u64,
    pub diagnostics: TrialDiagnostics,
}

impl TrialResult {
    /// Rotatable schemes fail when ALS did not converge; any scheme fails on
    /// a low-confidence estimate.
    pub fn is_failure(&self) -> bool {
        let d = &self.diagnostics;
        d.low_confidence || (self.scheme.is_rotatable() && !d.als_converged)
    }
}

/// Mean squared difference in degrees² after pairing sorted lists.
///
/// For scalars, pairing in sorted order minimizes the total squared error
/// over all assignments.
pub fn matched_sq_err(true_doas: &[f64], est_doas: &[f64]) -> Result<f64> {
    if true_doas.len() != est_doas.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} true DOAs vs {} estimates",
            true_doas.len(),
            est_doas.len()
        )));
    }
    if true_doas.is_empty() {
        return Ok(0.0);
    }
    let mut t = true_doas.to_vec();
    let mut e = est_doas.to_vec();
    t.sort_by(f64::total_cmp);
    e.sort_by(f64::total_cmp);
    let sum: f64 = t
        .iter()
        .zip(&e)
        .map(|(a, b)| (a.to_degrees() - b.to_degrees()).powi(2))
        .sum();
    Ok(sum / t.len() as f64)
}

/// RMSE in degrees between DOA lists (radians) under the best pairing.
pub fn match_and_rmse(true_doas: &[f64], est_doas: &[f64]) -> Result<f64> {
    matched_sq_err(true_doas, est_doas).map(f64::sqrt)
}

fn als_seed(trial_seed: u64) -> u64 {
    // Decorrelate the ALS start from the data streams sharing `trial_seed`.
    trial_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1)
}

/// Intermediate products of a trial, kept for spectrum dumps.
#[derive(Debug, Clone, Default)]
pub struct TrialArtifacts {
    pub factors: Option<CpFactors>,
    /// MUSIC pseudo-spectrum over the parameter grid.
    pub music_spectrum: Option<Vec<f64>>,
}

/// One realization and estimate for `scheme`; deterministic in `seed`.
pub fn run_trial(scheme: Scheme, params: &ExperimentParams, seed: u64) -> Result<TrialResult> {
    run_trial_with_artifacts(scheme, params, seed, false).map(|(r, _)| r)
}

/// [`run_trial`] that can also hand back the CP factors or MUSIC spectrum.
pub fn run_trial_with_artifacts(
    scheme: Scheme,
    params: &ExperimentParams,
    seed: u64,
    keep_artifacts: bool,
) -> Result<(TrialResult, TrialArtifacts)> {
    let geometry = params.geometry_for(scheme);
    let cfg = params.simulation(seed)?;
    let k = params.scene.k();
    let mut diagnostics = TrialDiagnostics::default();
    let mut artifacts = TrialArtifacts::default();

    let estimate = if scheme.is_rotatable() {
        let tensor = synthesize(&params.scene, &geometry, &params.schedule, &params.pattern, &cfg)?;
        let init = match params.als.init {
            InitStrategy::Random { .. } => InitStrategy::Random { seed: als_seed(seed) },
            InitStrategy::Spectral { .. } => InitStrategy::Spectral { seed: als_seed(seed) },
        };
        let options = AlsOptions { init, ..params.als };
        let (factors, report) = cp_als(&tensor, k, &options)?;
        diagnostics.als_iterations = report.iterations;
        diagnostics.als_attempts = report.attempts;
        diagnostics.als_converged = report.converged;
        diagnostics.als_final_fit = report.final_fit;
        let est = estimate_doas(&factors, &geometry, &params.schedule, &params.pattern, &params.grid, false)?;
        if keep_artifacts {
            artifacts.factors = Some(factors);
        }
        est
    } else {
        let tensor = synthesize_omnidirectional(&params.scene, &geometry, params.schedule.m_rotations(), &cfg)?;
        let (est, spectrum) = music_estimate(&tensor, k, &geometry, &params.grid, keep_artifacts)?;
        if keep_artifacts {
            artifacts.music_spectrum = Some(spectrum);
        }
        est
    };
    diagnostics.low_confidence = estimate.any_low_confidence();

    let mut true_doas = params.scene.doas();
    true_doas.sort_by(f64::total_cmp);
    let matched = matched_sq_err(&true_doas, &estimate.angles)?;
    let result = TrialResult {
        scheme,
        true_doas,
        est_doas: estimate.angles,
        matched_sq_err: matched,
        seed,
        diagnostics,
    };
    Ok((result, artifacts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    SnrDb,
    SparseFactor,
    Directivity,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::SnrDb => "snr_db",
            SweepVariable::SparseFactor => "sparse_factor",
            SweepVariable::Directivity => "directivity",
        }
    }

    /// Parameters with this variable set to `value`.
    pub fn apply(&self, base: &ExperimentParams, value: f64) -> Result<ExperimentParams> {
        let mut p = base.clone();
        match self {
            SweepVariable::SnrDb => p.scene = p.scene.with_snr_db(value)?,
            SweepVariable::SparseFactor => p.geometry = p.geometry.with_sparse_factor(value)?,
            SweepVariable::Directivity => p.pattern = GainPattern::new(value)?,
        }
        Ok(p)
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    pub base: ExperimentParams,
    pub schemes: Vec<Scheme>,
    pub base_seed: u64,
}

/// Pooled statistics of one (value, scheme) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variable: SweepVariable,
    pub value: f64,
    pub scheme: Scheme,
    pub rmse_deg: f64,
    /// Delta-method standard error of `rmse_deg`.
    pub rmse_std_err: f64,
    pub trials: usize,
    pub failures: usize,
}

/// Pooled RMSE (degrees) and its standard error from per-trial squared errors.
pub fn pooled_rmse(sq_errors: &[f64]) -> (f64, f64) {
    let n = sq_errors.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sq_errors.iter().sum::<f64>() / n as f64;
    let rmse = mean.sqrt();
    if n < 2 || rmse == 0.0 {
        return (rmse, 0.0);
    }
    let var = sq_errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se_mse = (var / n as f64).sqrt();
    (rmse, se_mse / (2.0 * rmse))
}

/// Runs all trials for every (value, scheme) pair.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.values.is_empty() {
        return Err(Error::param("values", "sweep needs at least one value"));
    }
    if spec.trials == 0 {
        return Err(Error::param("trials", "need at least one trial"));
    }
    let params: Vec<ExperimentParams> = spec
        .values
        .iter()
        .map(|&v| spec.variable.apply(&spec.base, v))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(spec.values.len() * spec.schemes.len());
    for (value, p) in spec.values.iter().zip(&params) {
        for &scheme in &spec.schemes {
            let results: Vec<TrialResult> = (0..spec.trials)
                .into_par_iter()
                .map(|trial| run_trial(scheme, p, spec.base_seed.wrapping_add(trial as u64)))
                .collect::<Result<_>>()?;
            let sq: Vec<f64> = results.iter().map(|r| r.matched_sq_err).collect();
            let (rmse_deg, rmse_std_err) = pooled_rmse(&sq);
            rows.push(SweepRow {
                variable: spec.variable,
                value: *value,
                scheme,
                rmse_deg,
                rmse_std_err,
                trials: results.len(),
                failures: results.iter().filter(|r| r.is_failure()).count(),
            });
        }
    }
    Ok(rows)
}

/// Array, gain and joint SVC of the true model vectors over `grid`.
pub fn svc_curves(
    theta_k: f64,
    geometry: &ArrayGeometry,
    schedule: &RotationSchedule,
    pattern: &GainPattern,
    grid: &AngularGrid,
) -> Result<SvcTable> {
    if theta_k.abs() > schedule.theta_max() + 1e-12 {
        return Err(Error::param(
            "theta_k",
            format!("{:.4} deg outside the sensing range", theta_k.to_degrees()),
        ));
    }
    let mut table = SvcTable {
        theta: grid.points().to_vec(),
        array: Vec::with_capacity(grid.len()),
        gain: Vec::with_capacity(grid.len()),
        joint: Vec::with_capacity(grid.len()),
    };
    for &t in grid.points() {
        let a = array_svc(theta_k, t, geometry);
        let b = gain_svc(theta_k, t, schedule, pattern);
        table.array.push(a);
        table.gain.push(b);
        table.joint.push(a * b);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doa::{grating_lobe_angles, joint_svc_kronecker};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    /// Exhaustive minimum over all permutations.
    fn brute_force_min(t: &[f64], e: &[f64]) -> f64 {
        fn permute(idx: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
            if k == idx.len() {
                out.push(idx.clone());
                return;
            }
            for i in k..idx.len() {
                idx.swap(k, i);
                permute(idx, k + 1, out);
                idx.swap(k, i);
            }
        }
        let mut perms = Vec::new();
        permute(&mut (0..t.len()).collect(), 0, &mut perms);
        perms
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(i, &j)| (t[i].to_degrees() - e[j].to_degrees()).powi(2))
                    .sum::<f64>()
                    / t.len() as f64
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn rmse_examples() {
        let t = [deg(-20.0), deg(15.0), deg(45.0)];
        assert_eq!(match_and_rmse(&t, &t).unwrap(), 0.0);
        let e = [deg(15.5), deg(-20.5), deg(45.0)];
        let r = match_and_rmse(&t, &e).unwrap();
        assert!((r - (0.5f64 / 3.0).sqrt()).abs() < 1e-12, "{r}");
        assert!(match_and_rmse(&t, &e[..2]).is_err());
    }

    #[test]
    fn sorted_pairing_matches_exhaustive_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let k = rng.random_range(1..=4);
            let t: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = matched_sq_err(&t, &e).unwrap();
            let slow = brute_force_min(&t, &e);
            assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0), "{fast} vs {slow}");
        }
    }

    #[test]
    fn pooled_rmse_is_associative() {
        let a = [1.0, 4.0, 0.25];
        let b = [9.0, 0.0];
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let (ra, _) = pooled_rmse(&a);
        let (rb, _) = pooled_rmse(&b);
        let (rall, _) = pooled_rmse(&all);
        let combined = ((3.0 * ra * ra + 2.0 * rb * rb) / 5.0).sqrt();
        assert!((rall - combined).abs() < 1e-12);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert_eq!("us-ra".parse::<Scheme>().unwrap(), Scheme::UsRa);
        assert!("xx".parse::<Scheme>().is_err());
    }

    #[test]
    fn noise_free_us_ra_trial_is_accurate() {
        let mut p = ExperimentParams::reference_default();
        p.scene = p.scene.with_noise_power(0.0).unwrap();
        let r = run_trial(Scheme::UsRa, &p, 12).unwrap();
        assert!(r.matched_sq_err <= 0.05f64.powi(2), "sq err {}", r.matched_sq_err);
        assert!(r.diagnostics.als_converged);
        assert_eq!(r, run_trial(Scheme::UsRa, &p, 12).unwrap());
    }

    #[test]
    fn trials_are_deterministic_per_scheme() {
        let p = ExperimentParams::reference_default();
        for s in Scheme::ALL {
            assert_eq!(run_trial(s, &p, 5).unwrap(), run_trial(s, &p, 5).unwrap());
        }
    }

    #[test]
    fn sparse_omnidirectional_is_ambiguous() {
        let p = ExperimentParams::reference_default();
        let bad = (0..20u64)
            .filter(|&seed| {
                let r = run_trial(Scheme::UsOa, &p, seed).unwrap();
                r.true_doas.iter().zip(&r.est_doas).any(|(t, e)| (t - e).abs() > deg(5.0))
            })
            .count();
        assert!(bad > 10, "only {bad}/20 ambiguous");
    }

    #[test]
    fn single_trial_sweep_equals_run_trial() {
        let base = ExperimentParams::reference_default();
        let spec = SweepSpec {
            variable: SweepVariable::SnrDb,
            values: vec![5.0],
            trials: 1,
            base: base.clone(),
            schemes: vec![Scheme::UsRa, Scheme::UdOa],
            base_seed: 40,
        };
        let rows = run_sweep(&spec).unwrap();
        let p = SweepVariable::SnrDb.apply(&base, 5.0).unwrap();
        for row in &rows {
            let r = run_trial(row.scheme, &p, 40).unwrap();
            assert_eq!(row.rmse_deg, r.matched_sq_err.sqrt());
            assert_eq!(row.trials, 1);
        }
        assert_eq!(rows, run_sweep(&spec).unwrap());
    }

    #[test]
    fn sweep_rejects_empty() {
        let spec = SweepSpec {
            variable: SweepVariable::SnrDb,
            values: vec![],
            trials: 1,
            base: ExperimentParams::reference_default(),
            schemes: vec![Scheme::UsRa],
            base_seed: 0,
        };
        assert!(run_sweep(&spec).is_err());
        let spec = SweepSpec { values: vec![1.0], trials: 0, ..spec };
        assert!(run_sweep(&spec).is_err());
    }

    #[test]
    fn svc_curves_examples() {
        let p = ExperimentParams::reference_default();
        let pattern = GainPattern::new(5.0).unwrap();
        let tk = deg(15.0);
        let grid = AngularGrid::sensing_range(&p.schedule, deg(0.05)).unwrap();
        let table = svc_curves(tk, &p.geometry, &p.schedule, &pattern, &grid).unwrap();
        for i in 0..table.theta.len() {
            assert_eq!(table.joint[i], table.array[i] * table.gain[i]);
        }
        for i in (0..table.theta.len()).step_by(97) {
            let kron = joint_svc_kronecker(tk, table.theta[i], &p.geometry, &p.schedule, &pattern);
            assert!((kron - table.joint[i]).abs() < 1e-12);
        }
        let at = grid.nearest_index(tk);
        assert!((table.theta[at] - tk).abs() < 1e-12);
        for v in [table.array[at], table.gain[at], table.joint[at]] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        for lobe in grating_lobe_angles(tk, &p.geometry, grid.lo(), grid.hi()) {
            if !lobe.is_true_angle() {
                assert!(gain_svc(tk, lobe.angle, &p.schedule, &pattern) < 0.1);
            }
        }
        assert!(svc_curves(deg(70.0), &p.geometry, &p.schedule, &pattern, &grid).is_err());
    }
}
