//! Command dispatch: run an experiment, write its CSVs and a manifest.
//!
//! CSV schemas:
//!
//! | file | columns |
//! |------|---------|
//! | `rmse-vs-snr.csv`, `rmse-vs-directivity.csv`, `rmse-vs-sparse_p<p>.csv` | `sweep_variable,value,scheme,rmse_deg,trials,failures` |
//! | `svc-curves.csv`, `single-run_<scheme>_target<k>.csv` | `theta_deg,array_svc,gain_svc,joint_svc` |
//! | `single-run_<scheme>_music.csv` | `theta_deg,music_pseudo_spectrum` |
//! | `single-run.csv` | `scheme,target,true_deg,est_deg,error_deg` |
//!
//! Each command also writes `<command>.manifest`, a flat `key = value` file
//! holding every resolved parameter, the seed and the crate version. Rerunning
//! with the same parameters and seed reproduces the CSVs byte for byte.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{NoiseSpec, RunConfig};
use crate::cp::InitStrategy;
use crate::doa::{column_spectrum, grating_lobe_angles, joint_svc, SvcTable};
use crate::error::{Error, Result};
use crate::eval::{run_sweep, run_trial_with_artifacts, svc_curves, SweepRow, SweepSpec, SweepVariable};
use crate::array_model::GainPattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SvcCurves,
    RmseVsSnr,
    RmseVsSparse,
    RmseVsDirectivity,
    SingleRun,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::SvcCurves,
        Command::RmseVsSnr,
        Command::RmseVsSparse,
        Command::RmseVsDirectivity,
        Command::SingleRun,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::SvcCurves => "svc-curves",
            Command::RmseVsSnr => "rmse-vs-snr",
            Command::RmseVsSparse => "rmse-vs-sparse",
            Command::RmseVsDirectivity => "rmse-vs-directivity",
            Command::SingleRun => "single-run",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub seed: u64,
    /// CSVs followed by the manifest.
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Run `command` with `config` and write its outputs under `config.output_dir`.
pub fn dispatch(command: Command, config: &RunConfig) -> Result<Outcome> {
    let seed = config.seed.unwrap_or_else(rand::random);
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;

    let (mut files, summary) = match command {
        Command::SvcCurves => svc_command(config, dir)?,
        Command::RmseVsSnr => {
            let rows = sweep(config, SweepVariable::SnrDb, &config.sweep.snr_db, None, seed)?;
            let path = write_file(dir, "rmse-vs-snr.csv", &sweep_csv(&rows))?;
            (vec![path], sweep_summary(command, &rows))
        }
        Command::RmseVsSparse => {
            let mut files = Vec::new();
            let mut parts = Vec::new();
            for &p in &config.sweep.sparse_directivities {
                let rows = sweep(
                    config,
                    SweepVariable::SparseFactor,
                    &config.sweep.sparse_factors,
                    Some((p, config.sweep.sparse_snr_db)),
                    seed,
                )?;
                files.push(write_file(dir, &format!("rmse-vs-sparse_p{p}.csv"), &sweep_csv(&rows))?);
                parts.push(format!("p={p}: {}", last_point(&rows)));
            }
            (files, format!("{command}: {}", parts.join("; ")))
        }
        Command::RmseVsDirectivity => {
            let rows = sweep(
                config,
                SweepVariable::Directivity,
                &config.sweep.directivities,
                Some((config.pattern.directivity(), config.sweep.directivity_snr_db)),
                seed,
            )?;
            let path = write_file(dir, "rmse-vs-directivity.csv", &sweep_csv(&rows))?;
            (vec![path], sweep_summary(command, &rows))
        }
        Command::SingleRun => single_run(config, dir, seed)?,
    };

    files.push(write_file(dir, &format!("{command}.manifest"), &manifest(command, config, seed))?);
    Ok(Outcome { seed, files, summary })
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
    Ok(path)
}

/// Run one sweep; `fixed` overrides (p, SNR) of the base parameters.
fn sweep(
    config: &RunConfig,
    variable: SweepVariable,
    values: &[f64],
    fixed: Option<(f64, f64)>,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut base = config.experiment_params();
    if let Some((p, snr)) = fixed {
        base.pattern = GainPattern::new(p)?;
        base.scene = base.scene.with_snr_db(snr)?;
    }
    run_sweep(&SweepSpec {
        variable,
        values: values.to_vec(),
        trials: config.sweep.trials,
        base,
        schemes: config.sweep.schemes.clone(),
        base_seed: seed,
    })
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("sweep_variable,value,scheme,rmse_deg,trials,failures\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.variable.name(),
            r.value,
            r.scheme,
            r.rmse_deg,
            r.trials,
            r.failures
        );
    }
    out
}

fn last_point(rows: &[SweepRow]) -> String {
    let Some(last) = rows.last() else {
        return String::new();
    };
    let cells: Vec<String> = rows
        .iter()
        .filter(|r| r.value == last.value)
        .map(|r| format!("{}={:.4}", r.scheme, r.rmse_deg))
        .collect();
    format!("at {}={} RMSE(deg) {}", last.variable.name(), last.value, cells.join(" "))
}

fn sweep_summary(command: Command, rows: &[SweepRow]) -> String {
    let failures: usize = rows.iter().map(|r| r.failures).sum();
    format!("{command}: {} rows, {failures} failed trials, {}", rows.len(), last_point(rows))
}

fn svc_csv(table: &SvcTable) -> String {
    let mut out = String::from("theta_deg,array_svc,gain_svc,joint_svc\n");
    for i in 0..table.theta.len() {
        let _ = writeln!(
            out,
            "{:.6},{},{},{}",
            table.theta[i].to_degrees(),
            table.array[i],
            table.gain[i],
            table.joint[i]
        );
    }
    out
}

fn svc_command(config: &RunConfig, dir: &Path) -> Result<(Vec<PathBuf>, String)> {
    let pattern = GainPattern::new(config.svc.directivity)?;
    let table = svc_curves(config.svc.theta_k, &config.geometry, &config.schedule, &pattern, &config.grid)?;
    let path = write_file(dir, "svc-curves.csv", &svc_csv(&table))?;
    let theta_k = config.svc.theta_k;
    let lobes: Vec<String> = grating_lobe_angles(theta_k, &config.geometry, config.grid.lo(), config.grid.hi())
        .into_iter()
        .filter(|l| !l.is_true_angle())
        .map(|l| {
            let c = joint_svc(theta_k, l.angle, &config.geometry, &config.schedule, &pattern);
            format!("{:.3} deg (joint {c:.4})", l.angle.to_degrees())
        })
        .collect();
    let summary = format!(
        "svc-curves: theta_k={} deg, p={}, {} grid points, grating lobes: {}",
        config.angles_deg.svc_theta_k,
        config.svc.directivity,
        table.theta.len(),
        if lobes.is_empty() { "none".to_string() } else { lobes.join(", ") }
    );
    Ok((vec![path], summary))
}

fn single_run(config: &RunConfig, dir: &Path, seed: u64) -> Result<(Vec<PathBuf>, String)> {
    let params = config.experiment_params();
    let mut files = Vec::new();
    let mut table = String::from("scheme,target,true_deg,est_deg,error_deg\n");
    let mut parts = Vec::new();

    for &scheme in &config.sweep.schemes {
        let (result, artifacts) = run_trial_with_artifacts(scheme, &params, seed, true)?;
        for (k, (t, e)) in result.true_doas.iter().zip(&result.est_doas).enumerate() {
            let _ = writeln!(
                table,
                "{scheme},{k},{:.6},{},{}",
                t.to_degrees(),
                e.to_degrees(),
                e.to_degrees() - t.to_degrees()
            );
        }
        let est: Vec<String> = result.est_doas.iter().map(|e| format!("{:.3}", e.to_degrees())).collect();
        parts.push(format!("{scheme}=[{}]", est.join(", ")));

        let geometry = params.geometry_for(scheme);
        if let Some(factors) = &artifacts.factors {
            for k in 0..factors.rank() {
                let spectrum = column_spectrum(factors, k, &geometry, &params.schedule, &params.pattern, &params.grid);
                files.push(write_file(dir, &format!("single-run_{scheme}_target{k}.csv"), &svc_csv(&spectrum))?);
            }
        }
        if let Some(music) = &artifacts.music_spectrum {
            let mut out = String::from("theta_deg,music_pseudo_spectrum\n");
            for (t, v) in params.grid.points().iter().zip(music) {
                let _ = writeln!(out, "{:.6},{v}", t.to_degrees());
            }
            files.push(write_file(dir, &format!("single-run_{scheme}_music.csv"), &out)?);
        }
    }
    files.insert(0, write_file(dir, "single-run.csv", &table)?);
    Ok((files, format!("single-run: estimates (deg) {}", parts.join(" "))))
}

fn list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Flat `key = value` record of everything that determines the outputs.
pub fn manifest(command: Command, config: &RunConfig, seed: u64) -> String {
    let deg = &config.angles_deg;
    let mut m = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(m, "{k} = {v}");
    };
    put("crate", env!("CARGO_PKG_NAME").to_string());
    put("version", env!("CARGO_PKG_VERSION").to_string());
    put("command", command.name().to_string());
    put("seed", seed.to_string());
    put("output_dir", config.output_dir.display().to_string());
    put("geometry.n_antennas", config.geometry.n_antennas().to_string());
    put("geometry.sparse_factor", config.geometry.sparse_factor().to_string());
    put("geometry.spacing_wavelengths", config.geometry.spacing_wavelengths().to_string());
    put("schedule.m_rotations", config.schedule.m_rotations().to_string());
    put("schedule.theta_max", deg.theta_max.to_string());
    put("pattern.directivity", config.pattern.directivity().to_string());
    match config.noise {
        NoiseSpec::SnrDb(s) => put("scene.snr_db", s.to_string()),
        NoiseSpec::NoisePower(p) => put("scene.noise_power", p.to_string()),
    }
    put("scene.resolved_noise_power", config.scene.noise_power().to_string());
    for (i, t) in config.scene.targets().iter().enumerate() {
        put(&format!("scene.targets[{i}].doa"), deg.doas[i].to_string());
        put(
            &format!("scene.targets[{i}].scattering"),
            format!("{},{}", t.scattering.re, t.scattering.im),
        );
        put(&format!("scene.targets[{i}].signal_power"), t.signal_power.to_string());
    }
    put("simulation.snapshots", config.snapshots.to_string());
    put(
        "simulation.fresh_signals_per_rotation",
        config.fresh_signals_per_rotation.to_string(),
    );
    put("grid.lo", deg.grid_lo.to_string());
    put("grid.hi", deg.grid_hi.to_string());
    put("grid.resolution", deg.grid_resolution.to_string());
    put("grid.points", config.grid.len().to_string());
    put("als.max_iter", config.als.max_iter.to_string());
    put("als.tol", config.als.tol.to_string());
    put("als.restarts", config.als.restarts.to_string());
    let init = match config.als.init {
        InitStrategy::Random { .. } => "random",
        InitStrategy::Spectral { .. } => "spectral",
    };
    put("als.init", init.to_string());
    let s = &config.sweep;
    put("sweep.trials", s.trials.to_string());
    put(
        "sweep.schemes",
        s.schemes.iter().map(|x| x.name()).collect::<Vec<_>>().join(","),
    );
    put("sweep.snr_db", list(&s.snr_db));
    put("sweep.sparse_factors", list(&s.sparse_factors));
    put("sweep.sparse_directivities", list(&s.sparse_directivities));
    put("sweep.sparse_snr_db", s.sparse_snr_db.to_string());
    put("sweep.directivities", list(&s.directivities));
    put("sweep.directivity_snr_db", s.directivity_snr_db.to_string());
    put("svc.theta_k", deg.svc_theta_k.to_string());
    put("svc.directivity", config.svc.directivity.to_string());
    m
}
