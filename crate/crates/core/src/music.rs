//! Conventional MUSIC with omnidirectional elements.
//!
//! The baselines see the same data volume as the rotatable array: the `M`
//! probing periods are concatenated into `MT` snapshots before the sample
//! covariance is formed.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::array_model::{steering_vector, ArrayGeometry};
use crate::doa::{parabolic_offset, AngularGrid, DoaEstimate};
use crate::error::{Error, Result};
use crate::scene::aggregate_snapshots;
use crate::tensor::ComplexTensor3;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<Complex64>,
    pub snapshot_count: usize,
}

/// `(1/Q) Y Yᴴ`, symmetrized to be exactly Hermitian.
pub fn sample_covariance(snapshots: &DMatrix<Complex64>) -> Result<CovarianceEstimate> {
    let q = snapshots.ncols();
    if q == 0 {
        return Err(Error::param("snapshots", "need at least one snapshot"));
    }
    let r = (snapshots * snapshots.adjoint()) / Complex64::new(q as f64, 0.0);
    let matrix = (&r + r.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(CovarianceEstimate {
        matrix,
        snapshot_count: q,
    })
}

/// Orthonormal basis of the `N − K` eigenvectors with the smallest eigenvalues.
pub fn noise_subspace(cov: &CovarianceEstimate, k_sources: usize) -> Result<DMatrix<Complex64>> {
    let n = cov.matrix.nrows();
    if k_sources >= n {
        return Err(Error::param(
            "k_sources",
            format!("MUSIC needs K < N, got K = {k_sources}, N = {n}"),
        ));
    }
    let eig = SymmetricEigen::new(cov.matrix.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let cols: Vec<_> = order[..n - k_sources]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    Ok(DMatrix::from_columns(&cols))
}

fn pseudo_spectrum_at(noise: &DMatrix<Complex64>, theta: f64, geometry: &ArrayGeometry) -> f64 {
    let a = nalgebra::DVector::from_vec(steering_vector(theta, geometry).into_inner());
    let proj = noise.adjoint() * a;
    let den = proj.norm_squared();
    // ‖a‖² = N bounds the denominator above; floor it to keep the peak finite.
    1.0 / den.max(geometry.n_antennas() as f64 * 1e-16)
}

/// `P(ϑ) = 1 / (a(ϑ)ᴴ E_n E_nᴴ a(ϑ))` over the grid, unit gains.
pub fn music_spectrum(
    cov: &CovarianceEstimate,
    k_sources: usize,
    geometry: &ArrayGeometry,
    grid: &AngularGrid,
) -> Result<Vec<f64>> {
    if cov.matrix.nrows() != geometry.n_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{} for N = {}",
            cov.matrix.nrows(),
            cov.matrix.ncols(),
            geometry.n_antennas()
        )));
    }
    let noise = noise_subspace(cov, k_sources)?;
    Ok(grid
        .points()
        .iter()
        .map(|&t| pseudo_spectrum_at(&noise, t, geometry))
        .collect())
}

/// Interior grid indices that are local maxima (strictly above the left
/// neighbour, at least the right one).
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .collect()
}

/// Sample-covariance MUSIC on the aggregated `N × MT` snapshots.
///
/// Returns the `K` highest local maxima, refined by a parabola fitted to the
/// spectrum in dB. When fewer than `K` peaks exist the remainder is filled by
/// the highest remaining grid points and flagged low-confidence.
pub fn music_estimate(
    tensor: &ComplexTensor3,
    k_sources: usize,
    geometry: &ArrayGeometry,
    grid: &AngularGrid,
    keep_spectrum: bool,
) -> Result<(DoaEstimate, Vec<f64>)> {
    let snapshots = aggregate_snapshots(tensor);
    let cov = sample_covariance(&snapshots)?;
    let spectrum = music_spectrum(&cov, k_sources, geometry, grid)?;
    let noise = noise_subspace(&cov, k_sources)?;
    let db: Vec<f64> = spectrum.iter().map(|p| 10.0 * p.log10()).collect();

    let mut peaks = local_maxima(&spectrum);
    peaks.sort_by(|&i, &j| spectrum[j].total_cmp(&spectrum[i]).then(i.cmp(&j)));
    peaks.truncate(k_sources);
    let mut picks: Vec<(usize, bool)> = peaks.iter().map(|&i| (i, false)).collect();
    if picks.len() < k_sources {
        let mut rest: Vec<usize> = (0..spectrum.len()).filter(|i| !peaks.contains(i)).collect();
        rest.sort_by(|&i, &j| spectrum[j].total_cmp(&spectrum[i]).then(i.cmp(&j)));
        picks.extend(rest.into_iter().take(k_sources - picks.len()).map(|i| (i, true)));
    }

    let step = grid.step();
    let estimates = picks
        .into_iter()
        .map(|(i, padded)| {
            let mut angle = grid.points()[i];
            let mut score = spectrum[i];
            if !padded && i > 0 && i + 1 < db.len() {
                let delta = parabolic_offset(db[i - 1], db[i], db[i + 1]);
                if delta != 0.0 {
                    let refined = angle + delta * step;
                    let value = pseudo_spectrum_at(&noise, refined, geometry);
                    if value >= score {
                        angle = refined;
                        score = value;
                    }
                }
            }
            (angle, score, padded, None)
        })
        .collect();
    let estimate = DoaEstimate::from_unsorted(estimates, false);
    Ok((estimate, if keep_spectrum { spectrum } else { Vec::new() }))
}
