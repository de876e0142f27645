//! Small dense complex linear algebra for density operators.
//!
//! Everything here is dimension-generic, though the rest of the crate only
//! ever works with qutrits (3×3) and their 9×9 Choi matrices. Matrices are
//! backed by `nalgebra`; the Hermitian eigensolver is nalgebra's symmetric
//! eigendecomposition, which handles complex Hermitian input directly.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default absolute tolerance for validity checks.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Radicands down to this value are clamped to zero before square roots.
const SQRT_CLAMP: f64 = -1e-10;
/// States whose top eigenvalue is this close to 1 are treated as pure.
const PURE_TOL: f64 = 1e-12;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<Complex64>);

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    /// Builds a real matrix from row-major rows. Panics on ragged input.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == m), "ragged rows");
        Self::from_fn(n, m, |i, j| c(rows[i][j], 0.0))
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| if i == j { c(entries[i], 0.0) } else { c(0.0, 0.0) })
    }

    /// |i⟩⟨j| in dimension `n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m.0[(i, j)] = c(1.0, 0.0);
        m
    }

    pub fn from_nalgebra(m: DMatrix<Complex64>) -> Self {
        Self(m)
    }

    pub fn as_nalgebra(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    /// Side length of a square matrix.
    pub fn dim(&self) -> usize {
        self.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.0[(i, j)] = v;
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// `self * rho * self†`.
    pub fn sandwich(&self, rho: &Self) -> Self {
        Self(&self.0 * &rho.0 * self.0.adjoint())
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.0.shape(), other.0.shape(), "shape mismatch in max_abs_diff");
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Deviation from Hermiticity, max-entry norm.
    pub fn hermiticity_error(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// (M + M†)/2.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()).map(|z| z * 0.5))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Frobenius-style operator norm bound used to pick series lengths in tests.
    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn entries(&self) -> impl Iterator<Item = &Complex64> {
        self.0.iter()
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows(), self.cols())?;
        for i in 0..self.rows() {
            write!(f, "  ")?;
            for j in 0..self.cols() {
                let z = self.get(i, j);
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

/// Eigendecomposition of a Hermitian matrix: `m = Σ λ_i v_i v_i†`.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: ComplexMatrix,
}

impl SpectralDecomposition {
    /// Decomposes the Hermitian part of `m`. Callers that care about
    /// Hermiticity check it separately.
    pub fn of_hermitian(m: &ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "eigendecomposition needs a square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let eig = m.hermitian_part().0.symmetric_eigen();
        let mut order: Vec<usize> = (0..m.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let eigenvectors =
            ComplexMatrix::from_fn(m.dim(), m.dim(), |i, j| eig.eigenvectors[(i, order[j])]);
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    /// `Σ f(λ_i) v_i v_i†`.
    pub fn map(&self, f: impl Fn(f64) -> Complex64) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors.0;
        let d = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                f(self.eigenvalues[i])
            } else {
                c(0.0, 0.0)
            }
        });
        ComplexMatrix(v * d * v.adjoint())
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map(|l| c(l, 0.0))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }
}

/// Outcome of [`validate_density`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonFinite,
    NotHermitian { deviation: f64 },
    Trace { deviation: f64 },
    NotPositive { min_eigenvalue: f64 },
}

pub fn validate_density(m: &ComplexMatrix, tol: f64) -> Result<DensityReport> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "density operator must be square, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Ok(DensityReport {
            ok: false,
            violations: vec![Violation::NonFinite],
        });
    }
    let mut violations = Vec::new();
    let herm = m.hermiticity_error();
    if herm > tol {
        violations.push(Violation::NotHermitian { deviation: herm });
    }
    let tr = (m.trace() - c(1.0, 0.0)).norm();
    if tr > tol {
        violations.push(Violation::Trace { deviation: tr });
    }
    let min_eig = SpectralDecomposition::of_hermitian(m)?.min_eigenvalue();
    if min_eig < -tol {
        violations.push(Violation::NotPositive {
            min_eigenvalue: min_eig,
        });
    }
    Ok(DensityReport {
        ok: violations.is_empty(),
        violations,
    })
}

/// Hermitian, unit-trace, positive-semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, DEFAULT_TOL)
    }

    pub fn with_tolerance(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        let report = validate_density(&matrix, tol)?;
        if !report.ok {
            return Err(Error::InvalidState(format!("{:?}", report.violations)));
        }
        Ok(Self { matrix })
    }

    /// Hermitizes and renormalizes without a positivity check. Only for
    /// outputs of completely positive maps applied to valid states.
    pub(crate) fn from_cp_output(matrix: ComplexMatrix) -> Self {
        let h = matrix.hermitian_part();
        let tr = h.trace().re;
        Self {
            matrix: h.scale(1.0 / tr),
        }
    }

    /// |k⟩⟨k| in dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index {k} out of range for dimension {dim}");
        Self {
            matrix: ComplexMatrix::unit(dim, k, k),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale(1.0 / dim as f64),
        }
    }

    /// Diagonal state from a probability vector.
    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        Self::new(ComplexMatrix::diagonal(probs))
    }

    /// |ψ⟩⟨ψ| for a (not necessarily normalized) nonzero amplitude vector.
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidState("zero or non-finite state vector".into()));
        }
        let n = amplitudes.len();
        let m = ComplexMatrix::from_fn(n, n, |i, j| amplitudes[i] * amplitudes[j].conj() / (norm * norm));
        Ok(Self::from_cp_output(m))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.matrix.get(i, j)
    }

    /// Real diagonal entry ⟨k|ρ|k⟩.
    pub fn population(&self, k: usize) -> f64 {
        self.matrix.get(k, k).re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.population(k)).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.matrix.max_abs_diff(&other.matrix)
    }
}

/// Uhlmann fidelity `F(ρ, σ) = (tr √(√ρ σ √ρ))²`, clamped to [0, 1].
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension(format!(
            "fidelity of {}-dim and {}-dim states",
            rho.dim(),
            sigma.dim()
        )));
    }
    // A pure argument reduces the formula to ⟨ψ|other|ψ⟩, which avoids the
    // square roots of roundoff-level eigenvalues of a rank-one product.
    for (pure, other) in [(sigma, rho), (rho, sigma)] {
        if let Some(psi) = pure_vector(pure)? {
            let v = other.matrix().as_nalgebra() * &psi;
            return Ok(psi.dotc(&v).re.clamp(0.0, 1.0));
        }
    }
    let sqrt_rho = psd_sqrt(rho.matrix())?;
    let inner = &(&sqrt_rho * sigma.matrix()) * &sqrt_rho;
    let spectrum = SpectralDecomposition::of_hermitian(&inner)?;
    let mut root_sum = 0.0;
    for &l in &spectrum.eigenvalues {
        root_sum += clamped_sqrt(l)?;
    }
    Ok((root_sum * root_sum).clamp(0.0, 1.0))
}

/// Fidelity against the pure basis state |k⟩⟨k|, which reduces to ⟨k|ρ|k⟩.
pub fn fidelity_pure_target(rho: &DensityOperator, basis_index: usize) -> Result<f64> {
    if basis_index >= rho.dim() {
        return Err(Error::param(
            "basis_index",
            basis_index as f64,
            format!("0..{}", rho.dim()),
        ));
    }
    Ok(rho.population(basis_index).clamp(0.0, 1.0))
}

fn clamped_sqrt(x: f64) -> Result<f64> {
    if x >= 0.0 {
        Ok(x.sqrt())
    } else if x >= SQRT_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::InvalidState(format!(
            "negative eigenvalue {x:e} beyond tolerance"
        )))
    }
}

/// Leading eigenvector when the state is pure to within roundoff.
fn pure_vector(rho: &DensityOperator) -> Result<Option<DVector<Complex64>>> {
    let sd = SpectralDecomposition::of_hermitian(rho.matrix())?;
    let top = sd.eigenvalues.len() - 1;
    if sd.eigenvalues[top] < 1.0 - PURE_TOL {
        return Ok(None);
    }
    Ok(Some(sd.eigenvectors.0.column(top).into_owned()))
}

fn psd_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let spectrum = SpectralDecomposition::of_hermitian(m)?;
    let roots = spectrum
        .eigenvalues
        .iter()
        .map(|&l| clamped_sqrt(l))
        .collect::<Result<Vec<_>>>()?;
    let rooted = SpectralDecomposition {
        eigenvalues: roots,
        eigenvectors: spectrum.eigenvectors,
    };
    Ok(rooted.reconstruct())
}

/// Matrix exponential `e^M`.
///
/// Skew-Hermitian generators `M = -iH` go through the eigendecomposition of
/// `H`, which keeps the result unitary to roundoff. Anything else falls back
/// to nalgebra's scaling-and-squaring Padé approximant.
pub fn matrix_exponential(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let scale = m.max_abs().max(1.0);
    let skew_dev = (m + &m.adjoint()).max_abs();
    if skew_dev <= 1e-14 * scale {
        // M = -iH  =>  H = iM
        let h = m.scale_complex(c(0.0, 1.0));
        let spectrum = SpectralDecomposition::of_hermitian(&h)?;
        return Ok(spectrum.map(|l| c(0.0, -l).exp()));
    }
    Ok(ComplexMatrix(m.0.clone().exp()))
}
