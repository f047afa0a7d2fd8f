//! CP decomposition by alternating least squares.
//!
//! Each sweep solves, in order,
//!
//! ```text
//! A  ← argmin ‖Y(1) − A (Sᵀ ⊙ B)ᵀ‖²
//! B  ← argmin ‖Y(2) − B (Sᵀ ⊙ A)ᵀ‖²
//! Sᵀ ← argmin ‖Y(3) − Sᵀ (B ⊙ A)ᵀ‖²
//! ```
//!
//! through ridge-stabilized normal equations. Between sweeps the columns of
//! `A` and `B` are rescaled to unit norm with the magnitude pushed into `Sᵀ`,
//! which leaves the reconstruction untouched.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{khatri_rao, unfold, ComplexTensor3};

/// Relative ridge added to the Gram matrix diagonal, scaled by `trace / K`.
const RIDGE: f64 = 1e-12;
/// Relative residual at which a sweep counts as an exact fit. The normal
/// equations square the conditioning, so residuals level off near 1e-12.
const EXACT_FIT: f64 = 1e-11;

/// Factor matrices `Â` (N×K), `B̂` (M×K) and `Ŝᵀ` (T×K).
///
/// Known only up to a shared column permutation and per-column scalings
/// whose product is one.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    pub array_factor: DMatrix<Complex64>,
    pub gain_factor: DMatrix<Complex64>,
    pub signal_factor: DMatrix<Complex64>,
}

impl CpFactors {
    pub fn new(
        array_factor: DMatrix<Complex64>,
        gain_factor: DMatrix<Complex64>,
        signal_factor: DMatrix<Complex64>,
    ) -> Result<Self> {
        let k = array_factor.ncols();
        if gain_factor.ncols() != k || signal_factor.ncols() != k {
            return Err(Error::DimensionMismatch(format!(
                "factor column counts differ: {}, {}, {}",
                k,
                gain_factor.ncols(),
                signal_factor.ncols()
            )));
        }
        Ok(Self {
            array_factor,
            gain_factor,
            signal_factor,
        })
    }

    pub fn rank(&self) -> usize {
        self.array_factor.ncols()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.array_factor.nrows(),
            self.gain_factor.nrows(),
            self.signal_factor.nrows(),
        )
    }

    /// Scales every column of `Â` and `B̂` to unit norm and rotates the first
    /// nonzero entry of each `Â` column onto the non-negative real axis. The
    /// removed magnitudes and phases move into `Ŝᵀ`.
    pub fn normalize(&mut self) {
        for k in 0..self.rank() {
            let mut absorb = Complex64::new(1.0, 0.0);

            let a_norm = self.array_factor.column(k).norm();
            if a_norm > 0.0 {
                let lead = self
                    .array_factor
                    .column(k)
                    .iter()
                    .copied()
                    .find(|z| z.norm() > 0.0)
                    .unwrap_or(Complex64::new(1.0, 0.0));
                let rot = Complex64::from_polar(1.0, lead.arg());
                let scale = rot * a_norm;
                self.array_factor.column_mut(k).iter_mut().for_each(|z| *z /= scale);
                absorb *= scale;
            }

            let b_norm = self.gain_factor.column(k).norm();
            if b_norm > 0.0 {
                self.gain_factor.column_mut(k).iter_mut().for_each(|z| *z /= b_norm);
                absorb *= b_norm;
            }

            self.signal_factor.column_mut(k).iter_mut().for_each(|z| *z *= absorb);
        }
    }
}

/// `Σ_k â_k ∘ b̂_k ∘ ŝ_k` with the requested shape.
pub fn reconstruct(factors: &CpFactors, dims: (usize, usize, usize)) -> Result<ComplexTensor3> {
    if factors.dims() != dims {
        return Err(Error::DimensionMismatch(format!(
            "factors have shape {:?}, requested {dims:?}",
            factors.dims()
        )));
    }
    let (a, b, s) = (&factors.array_factor, &factors.gain_factor, &factors.signal_factor);
    // Stacked MN × T form: (B ⊙ A) S.
    let stacked = khatri_rao(b, a)? * s.transpose();
    ComplexTensor3::from_stacked(&stacked, dims.0, dims.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Independent standard complex Gaussian entries, seeded.
    Random { seed: u64 },
    /// Leading left singular vectors of each unfolding; missing columns
    /// (unfolding rank below K) are filled randomly from `seed`.
    Spectral { seed: u64 },
}

impl InitStrategy {
    fn seed(&self) -> u64 {
        match *self {
            InitStrategy::Random { seed } | InitStrategy::Spectral { seed } => seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlsOptions {
    pub max_iter: usize,
    /// Stop when `|fit_prev − fit| / max(fit_prev, ε) < tol`.
    pub tol: f64,
    pub init: InitStrategy,
    /// Extra attempts with fresh random starts when a run fails to converge.
    pub restarts: usize,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            init: InitStrategy::Random { seed: 0 },
            restarts: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlsReport {
    /// Sweeps run in the returned attempt.
    pub iterations: usize,
    /// Relative residual `‖𝓨 − 𝓨̂‖_F / ‖𝓨‖_F` of the returned factors.
    pub final_fit: f64,
    pub converged: bool,
    /// Relative residual after each sweep of the returned attempt.
    pub fit_history: Vec<f64>,
    /// Some Gram matrix needed more than the default ridge to factor.
    pub regularized: bool,
    /// Input tensor was zero; factors are zero.
    pub degenerate: bool,
    /// Number of runs made, including the first.
    pub attempts: usize,
}

impl AlsReport {
    /// No sweep raised the relative residual by more than `slack`. Residuals
    /// are already normalized by `‖𝓨‖_F`, so `slack` is relative to the data.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.fit_history.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

/// CP-ALS with the configured number of restarts; the attempt with the
/// lowest residual wins. Attempt `i` uses seed `init.seed + i`.
pub fn cp_als(
    tensor: &ComplexTensor3,
    rank: usize,
    options: &AlsOptions,
) -> Result<(CpFactors, AlsReport)> {
    let mut best: Option<(CpFactors, AlsReport)> = None;
    for attempt in 0..=options.restarts {
        let init = if attempt == 0 {
            options.init
        } else {
            InitStrategy::Random {
                seed: options.init.seed().wrapping_add(attempt as u64),
            }
        };
        let (factors, mut report) = cp_als_single(tensor, rank, options.max_iter, options.tol, init)?;
        report.attempts = attempt + 1;
        let done = report.converged || report.degenerate;
        let better = best
            .as_ref()
            .is_none_or(|(_, b)| report.final_fit < b.final_fit);
        if better {
            best = Some((factors, report));
        } else if let Some((_, b)) = best.as_mut() {
            b.attempts = attempt + 1;
        }
        if done {
            break;
        }
    }
    Ok(best.expect("at least one attempt"))
}

/// One ALS run from a single initialization.
pub fn cp_als_single(
    tensor: &ComplexTensor3,
    rank: usize,
    max_iter: usize,
    tol: f64,
    init: InitStrategy,
) -> Result<(CpFactors, AlsReport)> {
    let (n, m, t) = tensor.dims();
    if rank == 0 {
        return Err(Error::param("rank", "need K >= 1"));
    }
    if rank > (m * t).min(n * t).min(n * m) {
        return Err(Error::param(
            "rank",
            format!("K = {rank} exceeds the column count of some unfolding of {:?}", tensor.dims()),
        ));
    }
    if max_iter == 0 {
        return Err(Error::param("max_iter", "need at least one sweep"));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::param("tol", format!("need tol > 0, got {tol}")));
    }
    if !tensor.is_finite() {
        return Err(Error::NonFinite);
    }

    let norm = tensor.frobenius_norm();
    if norm == 0.0 {
        let factors = CpFactors::new(
            DMatrix::zeros(n, rank),
            DMatrix::zeros(m, rank),
            DMatrix::zeros(t, rank),
        )?;
        let report = AlsReport {
            iterations: 0,
            final_fit: 0.0,
            converged: false,
            fit_history: Vec::new(),
            regularized: false,
            degenerate: true,
            attempts: 1,
        };
        return Ok((factors, report));
    }

    let y1 = unfold(tensor, 1)?;
    let y2 = unfold(tensor, 2)?;
    let y3 = unfold(tensor, 3)?;

    let mut factors = initialize(&y1, &y2, &y3, rank, init);
    let mut history = Vec::with_capacity(max_iter);
    let mut regularized = false;
    let mut converged = false;

    for _ in 0..max_iter {
        let kr = khatri_rao(&factors.signal_factor, &factors.gain_factor)?;
        factors.array_factor = least_squares_update(&y1, &kr, &mut regularized);
        let kr = khatri_rao(&factors.signal_factor, &factors.array_factor)?;
        factors.gain_factor = least_squares_update(&y2, &kr, &mut regularized);
        let kr = khatri_rao(&factors.gain_factor, &factors.array_factor)?;
        factors.signal_factor = least_squares_update(&y3, &kr, &mut regularized);
        factors.normalize();

        let fit = reconstruct(&factors, (n, m, t))?.distance(tensor) / norm;
        let previous = history.last().copied();
        history.push(fit);
        if fit <= EXACT_FIT {
            converged = true;
            break;
        }
        if let Some(prev) = previous {
            if (prev - fit).abs() / prev.max(f64::EPSILON) < tol {
                converged = true;
                break;
            }
        }
    }

    let report = AlsReport {
        iterations: history.len(),
        final_fit: *history.last().expect("max_iter >= 1"),
        converged,
        fit_history: history,
        regularized,
        degenerate: false,
        attempts: 1,
    };
    Ok((factors, report))
}

/// Solves `min_X ‖Y − X Zᵀ‖_F` through `X (Zᵀ Z̄) = Y Z̄`.
fn least_squares_update(
    unfolded: &DMatrix<Complex64>,
    kr: &DMatrix<Complex64>,
    regularized: &mut bool,
) -> DMatrix<Complex64> {
    let kr_conj = kr.conjugate();
    let rhs = unfolded * &kr_conj;
    // Gram is Hermitian; X·G = R  ⇔  Gᵀ·Xᵀ = Rᵀ with Gᵀ = conj(G).
    let gram_t = kr.adjoint() * kr;
    let k = gram_t.nrows();
    let trace: f64 = (0..k).map(|i| gram_t[(i, i)].re).sum();
    if trace.is_nan() || trace <= 0.0 {
        *regularized = true;
        return DMatrix::zeros(unfolded.nrows(), k);
    }
    let mut ridge = RIDGE * trace / k as f64;
    for attempt in 0..8 {
        let mut g = gram_t.clone();
        for i in 0..k {
            g[(i, i)] += ridge;
        }
        if let Some(chol) = Cholesky::<Complex64, Dyn>::new(g) {
            if attempt > 0 {
                *regularized = true;
            }
            return chol.solve(&rhs.transpose()).transpose();
        }
        ridge *= 1e3;
    }
    *regularized = true;
    DMatrix::zeros(unfolded.nrows(), k)
}

fn initialize(
    y1: &DMatrix<Complex64>,
    y2: &DMatrix<Complex64>,
    y3: &DMatrix<Complex64>,
    rank: usize,
    init: InitStrategy,
) -> CpFactors {
    let mut rng = ChaCha8Rng::seed_from_u64(init.seed());
    let mut random = |rows: usize| {
        DMatrix::from_fn(rows, rank, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
    };
    match init {
        InitStrategy::Random { .. } => CpFactors {
            array_factor: random(y1.nrows()),
            gain_factor: random(y2.nrows()),
            signal_factor: random(y3.nrows()),
        },
        InitStrategy::Spectral { .. } => {
            let mut a = random(y1.nrows());
            let mut b = random(y2.nrows());
            let mut s = random(y3.nrows());
            leading_left_singular(y1, &mut a);
            leading_left_singular(y2, &mut b);
            leading_left_singular(y3, &mut s);
            CpFactors {
                array_factor: a,
                gain_factor: b,
                signal_factor: s,
            }
        }
    }
}

/// Overwrites the columns of `target` with the leading left singular vectors
/// of `matrix` that carry nonzero energy; the remaining columns are kept.
fn leading_left_singular(matrix: &DMatrix<Complex64>, target: &mut DMatrix<Complex64>) {
    let svd = matrix.clone().svd(true, false);
    let Some(u) = svd.u.as_ref() else { return };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let floor = svd.singular_values.max() * 1e-12;
    for (k, &i) in order.iter().take(target.ncols()).enumerate() {
        if svd.singular_values[i] > floor {
            target.set_column(k, &u.column(i));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, k: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(r, k, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn brute_outer_sum(f: &CpFactors) -> ComplexTensor3 {
        ComplexTensor3::from_fn(f.dims(), |n, m, t| {
            (0..f.rank())
                .map(|k| f.array_factor[(n, k)] * f.gain_factor[(m, k)] * f.signal_factor[(t, k)])
                .sum()
        })
    }

    fn abs_cosine(x: nalgebra::DVectorView<Complex64>, y: nalgebra::DVectorView<Complex64>) -> f64 {
        x.dotc(&y).norm() / (x.norm() * y.norm())
    }

    fn assert_monotone(report: &AlsReport) {
        assert!(report.is_monotone(1e-9), "fit increased: {:?}", report.fit_history);
    }

    #[test]
    fn reconstruct_matches_outer_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = CpFactors::new(
            random_matrix(&mut rng, 4, 2),
            random_matrix(&mut rng, 3, 2),
            random_matrix(&mut rng, 5, 2),
        )
        .unwrap();
        let x = reconstruct(&f, (4, 3, 5)).unwrap();
        assert!(x.distance(&brute_outer_sum(&f)) < 1e-12);
        let y1 = unfold(&x, 1).unwrap();
        let expected = &f.array_factor * khatri_rao(&f.signal_factor, &f.gain_factor).unwrap().transpose();
        assert!((y1 - expected).norm() < 1e-12);
        assert!(reconstruct(&f, (4, 3, 6)).is_err());
    }

    #[test]
    fn reconstruct_unit_vectors() {
        let e = |len: usize, i: usize| {
            DMatrix::from_fn(len, 1, |r, _| Complex64::new(if r == i { 1.0 } else { 0.0 }, 0.0))
        };
        let f = CpFactors::new(e(2, 1), e(3, 0), e(2, 1)).unwrap();
        let x = reconstruct(&f, (2, 3, 2)).unwrap();
        for n in 0..2 {
            for m in 0..3 {
                for t in 0..2 {
                    let want = if (n, m, t) == (1, 0, 1) { 1.0 } else { 0.0 };
                    assert_eq!(x.get(n, m, t), Complex64::new(want, 0.0));
                }
            }
        }
    }

    #[test]
    fn mismatched_factor_ranks_rejected() {
        assert!(CpFactors::new(DMatrix::zeros(2, 1), DMatrix::zeros(2, 2), DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn rank_one_exact_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = CpFactors::new(
            random_matrix(&mut rng, 5, 1),
            random_matrix(&mut rng, 4, 1),
            random_matrix(&mut rng, 6, 1),
        )
        .unwrap();
        let x = reconstruct(&truth, (5, 4, 6)).unwrap();
        let (est, report) = cp_als(&x, 1, &AlsOptions::default()).unwrap();
        assert!(report.final_fit <= 1e-10, "fit {}", report.final_fit);
        assert!(report.converged);
        assert_monotone(&report);
        assert!(abs_cosine(est.array_factor.column(0), truth.array_factor.column(0)) > 1.0 - 1e-12);
        assert!(abs_cosine(est.gain_factor.column(0), truth.gain_factor.column(0)) > 1.0 - 1e-12);
        assert!(abs_cosine(est.signal_factor.column(0), truth.signal_factor.column(0)) > 1.0 - 1e-12);
    }

    #[test]
    fn normalization_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = CpFactors::new(
            random_matrix(&mut rng, 5, 2),
            random_matrix(&mut rng, 4, 2),
            random_matrix(&mut rng, 6, 2),
        )
        .unwrap();
        let x = reconstruct(&truth, (5, 4, 6)).unwrap();
        let (est, _) = cp_als(&x, 2, &AlsOptions::default()).unwrap();
        for k in 0..2 {
            assert!((est.array_factor.column(k).norm() - 1.0).abs() < 1e-12);
            assert!((est.gain_factor.column(k).norm() - 1.0).abs() < 1e-12);
            let lead = est.array_factor[(0, k)];
            assert!(lead.im.abs() < 1e-12 && lead.re >= 0.0);
        }
        let mut renorm = est.clone();
        renorm.normalize();
        assert!(reconstruct(&renorm, (5, 4, 6)).unwrap().distance(&x) / x.frobenius_norm() < 1e-8);
    }

    #[test]
    fn zero_tensor_is_degenerate() {
        let x = ComplexTensor3::zeros((3, 3, 3));
        let (f, report) = cp_als(&x, 1, &AlsOptions::default()).unwrap();
        assert!(report.degenerate);
        assert_eq!(report.final_fit, 0.0);
        assert!(f.array_factor.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn invalid_arguments_rejected() {
        let mut x = ComplexTensor3::zeros((2, 2, 2));
        assert!(cp_als(&x, 0, &AlsOptions::default()).is_err());
        assert!(cp_als(&x, 5, &AlsOptions::default()).is_err());
        let opts = AlsOptions { max_iter: 0, ..AlsOptions::default() };
        assert!(cp_als(&x, 1, &opts).is_err());
        let opts = AlsOptions { tol: 0.0, ..AlsOptions::default() };
        assert!(cp_als(&x, 1, &opts).is_err());
        x.set(0, 0, 0, Complex64::new(f64::NAN, 0.0));
        assert!(matches!(cp_als(&x, 1, &AlsOptions::default()), Err(Error::NonFinite)));
    }

    #[test]
    fn random_rank_three_mostly_converges() {
        // Exact CP tensors with well-conditioned random factors.
        let mut successes = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let truth = CpFactors::new(
                random_matrix(&mut rng, 6, 3),
                random_matrix(&mut rng, 5, 3),
                random_matrix(&mut rng, 7, 3),
            )
            .unwrap();
            let x = reconstruct(&truth, (6, 5, 7)).unwrap();
            let opts = AlsOptions {
                max_iter: 200,
                init: InitStrategy::Random { seed },
                restarts: 2,
                ..AlsOptions::default()
            };
            let (_, report) = cp_als(&x, 3, &opts).unwrap();
            assert_monotone(&report);
            if report.final_fit <= 1e-8 {
                successes += 1;
            }
        }
        assert!(successes >= 95, "only {successes}/100 converged");
    }

    #[test]
    fn spectral_init_recovers_rank_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let truth = CpFactors::new(
            random_matrix(&mut rng, 6, 2),
            random_matrix(&mut rng, 5, 2),
            random_matrix(&mut rng, 7, 2),
        )
        .unwrap();
        let x = reconstruct(&truth, (6, 5, 7)).unwrap();
        let opts = AlsOptions { init: InitStrategy::Spectral { seed: 0 }, ..AlsOptions::default() };
        let (_, report) = cp_als(&x, 2, &opts).unwrap();
        assert!(report.final_fit <= 1e-8, "fit {}", report.final_fit);
        assert_monotone(&report);
    }
}
