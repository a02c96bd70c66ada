//! Dense complex linear algebra for small operators.
//!
//! Every matrix function here goes through an eigendecomposition: Hermitian
//! operators through the symmetric eigensolver, unitaries through the complex
//! Schur form (diagonal for normal input). That keeps exponentials and
//! logarithms exact on the spectrum and makes the branch of the logarithm
//! explicit.

use std::f64::consts::PI;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative asymmetry accepted by [`HermitianOperator::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Per-dimension unitarity defect accepted by [`UnitaryOperator::new`].
pub const UNITARY_TOL: f64 = 1e-10;
/// Default distance (rad) from ±π at which [`unitary_log`] refuses to pick a branch.
pub const DEFAULT_RESONANCE_TOL: f64 = 1e-6;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Frobenius norm.
pub fn frob(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * c64(0.5, 0.0)
}

/// ‖A − A†‖_F.
pub fn asymmetry(a: &CMatrix) -> f64 {
    frob(&(a - a.adjoint()))
}

/// ‖U†U − 1‖_F.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    frob(&(u.adjoint() * u - CMatrix::identity(u.ncols(), u.ncols())))
}

/// Wrap an angle into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

fn check_square(a: &CMatrix) -> Result<()> {
    if a.nrows() == 0 || a.nrows() != a.ncols() {
        return Err(Error::Invalid(format!(
            "expected a nonempty square matrix, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Invalid("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// A square matrix equal to its adjoint (to relative round-off).
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator(CMatrix);

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        let asym = asymmetry(&m);
        if asym > HERMITIAN_TOL * frob(&m).max(1.0) {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        Ok(HermitianOperator(m))
    }

    /// Replace `m` by its Hermitian part. For products such as `U A U†` that
    /// are Hermitian only up to round-off.
    pub fn hermitize(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        Ok(HermitianOperator(hermitian_part(&m)))
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianOperator(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        HermitianOperator(CMatrix::identity(dim, dim))
    }

    /// Real diagonal operator.
    pub fn diagonal(values: &[f64]) -> Self {
        let d = CVector::from_iterator(values.len(), values.iter().map(|&v| c64(v, 0.0)));
        HermitianOperator(CMatrix::from_diagonal(&d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianOperator(&self.0 * c64(s, 0.0))
    }
}

impl Deref for HermitianOperator {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

/// A square matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryOperator(CMatrix);

impl UnitaryOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        let dev = unitarity_defect(&m);
        if dev > UNITARY_TOL * m.nrows() as f64 {
            return Err(Error::NotUnitary { deviation: dev });
        }
        Ok(UnitaryOperator(m))
    }

    /// Wrap a matrix whose construction already guarantees unitarity.
    pub(crate) fn from_trusted(m: CMatrix) -> Self {
        debug_assert!(unitarity_defect(&m) < 1e-8 * m.nrows() as f64);
        UnitaryOperator(m)
    }

    pub fn identity(dim: usize) -> Self {
        UnitaryOperator(CMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> UnitaryOperator {
        UnitaryOperator(self.0.adjoint())
    }

    pub fn compose(&self, rhs: &UnitaryOperator) -> UnitaryOperator {
        UnitaryOperator(&self.0 * &rhs.0)
    }
}

impl Deref for UnitaryOperator {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

/// One eigenvalue cluster: the clustered value, its raw members and an
/// orthonormal basis (columns) of the eigenspace.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenCluster {
    pub value: f64,
    pub raw: Vec<f64>,
    pub basis: CMatrix,
}

impl EigenCluster {
    pub fn multiplicity(&self) -> usize {
        self.basis.ncols()
    }

    /// Λ = B·B†.
    pub fn projector(&self) -> CMatrix {
        &self.basis * self.basis.adjoint()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    /// Sorted by descending value.
    pub clusters: Vec<EigenCluster>,
    pub cluster_tol: f64,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.clusters.iter().map(EigenCluster::multiplicity).sum()
    }

    pub fn values(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.value).collect()
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.clusters.iter().map(EigenCluster::multiplicity).collect()
    }

    /// Σ λ_n Λ_n.
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.dim();
        self.clusters.iter().fold(CMatrix::zeros(n, n), |acc, c| {
            acc + c.projector() * c64(c.value, 0.0)
        })
    }

    /// Index of the cluster closest to `lambda`, if it lies within `tol`.
    pub fn find(&self, lambda: f64, tol: f64) -> Option<usize> {
        self.clusters
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (c.value - lambda).abs()))
            .filter(|&(_, d)| d <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Build from caller-supplied eigenspaces, merging blocks whose values
    /// agree within `cluster_tol`. Blocks must be orthonormal and complete.
    pub fn from_blocks(blocks: Vec<(f64, CMatrix)>, cluster_tol: f64) -> Result<Self> {
        let dim = blocks
            .first()
            .map(|(_, b)| b.nrows())
            .ok_or_else(|| Error::Invalid("no eigenspaces supplied".into()))?;
        let mut blocks = blocks;
        blocks.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut clusters: Vec<EigenCluster> = Vec::new();
        for (value, basis) in blocks {
            if basis.nrows() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: basis.nrows() });
            }
            if !value.is_finite() || basis.ncols() == 0 {
                return Err(Error::Invalid("eigenspace with no vectors or non-finite value".into()));
            }
            match clusters.last_mut() {
                Some(last) if (last.value - value).abs() <= cluster_tol => {
                    let cols: Vec<CVector> = last
                        .basis
                        .column_iter()
                        .chain(basis.column_iter())
                        .map(|c| c.into_owned())
                        .collect();
                    last.basis = CMatrix::from_columns(&cols);
                    last.raw.extend(std::iter::repeat_n(value, basis.ncols()));
                }
                _ => clusters.push(EigenCluster {
                    value,
                    raw: vec![value; basis.ncols()],
                    basis,
                }),
            }
        }
        for c in &mut clusters {
            c.value = c.raw.iter().sum::<f64>() / c.raw.len() as f64;
        }
        let all: Vec<CVector> = clusters
            .iter()
            .flat_map(|c| c.basis.column_iter().map(|v| v.into_owned()))
            .collect();
        if all.len() != dim {
            return Err(Error::Invalid(format!(
                "eigenspaces span {} vectors in dimension {dim}",
                all.len()
            )));
        }
        let q = CMatrix::from_columns(&all);
        let defect = unitarity_defect(&q);
        if defect > 1e-10 {
            return Err(Error::Invalid(format!(
                "eigenspace bases are not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(SpectralDecomposition { clusters, cluster_tol })
    }
}

/// Default clustering tolerance, relative to the operator scale.
pub fn default_cluster_tol(a: &CMatrix) -> f64 {
    1e-8 * frob(a).max(1.0)
}

/// Make the largest-magnitude entry of each column real and positive.
fn fix_column_phases(v: &mut CMatrix) {
    for mut col in v.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |best, (i, z)| if z.norm() > best.1 + 1e-14 { (i, z.norm()) } else { best });
        let z = col[pivot.0];
        if z.norm() > 0.0 {
            let phase = z.conj() / z.norm();
            col *= phase;
        }
    }
}

/// Eigendecomposition of a Hermitian operator with eigenvalues grouped into
/// clusters of width at most `cluster_tol`.
pub fn herm_eig(a: &HermitianOperator, cluster_tol: f64) -> Result<SpectralDecomposition> {
    if cluster_tol.is_nan() || cluster_tol <= 0.0 {
        return Err(Error::Invalid(format!("cluster_tol must be positive, got {cluster_tol}")));
    }
    let eig = a.matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..a.dim()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut clusters: Vec<EigenCluster> = Vec::new();
    let mut members: Vec<usize> = Vec::new();
    let flush = |members: &mut Vec<usize>, clusters: &mut Vec<EigenCluster>| -> Result<()> {
        if members.is_empty() {
            return Ok(());
        }
        let raw: Vec<f64> = members.iter().map(|&i| eig.eigenvalues[i]).collect();
        let spread = raw[0] - raw[raw.len() - 1];
        if spread > cluster_tol {
            return Err(Error::Numerical(format!(
                "ambiguous eigenvalue clustering: chained cluster spreads {spread:.3e} > {cluster_tol:.3e}"
            )));
        }
        let cols: Vec<CVector> = members.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
        let mut basis = CMatrix::from_columns(&cols);
        fix_column_phases(&mut basis);
        clusters.push(EigenCluster {
            value: raw.iter().sum::<f64>() / raw.len() as f64,
            raw,
            basis,
        });
        members.clear();
        Ok(())
    };
    for &i in &order {
        if let Some(&prev) = members.last() {
            if eig.eigenvalues[prev] - eig.eigenvalues[i] > cluster_tol {
                flush(&mut members, &mut clusters)?;
            }
        }
        members.push(i);
    }
    flush(&mut members, &mut clusters)?;
    Ok(SpectralDecomposition { clusters, cluster_tol })
}

/// e^{i·s·A}.
pub fn unitary_exp(a: &HermitianOperator, s: f64) -> UnitaryOperator {
    let eig = a.matrix().clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = CVector::from_iterator(
        a.dim(),
        eig.eigenvalues.iter().map(|&l| C64::from_polar(1.0, s * l)),
    );
    UnitaryOperator::from_trusted(v * CMatrix::from_diagonal(&phases) * v.adjoint())
}

/// Eigenvalues and unitary eigenvectors of a unitary (normal) matrix via the
/// complex Schur form.
pub fn unitary_eigen(u: &CMatrix) -> Result<(Vec<C64>, CMatrix)> {
    check_square(u)?;
    let schur = Schur::try_new(u.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let n = u.nrows();
    let off: f64 = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| t[(i, j)].norm_sqr())
        .sum::<f64>()
        .sqrt();
    if off > 1e-8 * n as f64 {
        return Err(Error::Numerical(format!(
            "matrix is not normal (Schur off-diagonal norm {off:.3e})"
        )));
    }
    Ok(((0..n).map(|i| t[(i, i)]).collect(), q))
}

/// Principal logarithm: Hermitian K with U = e^{iK} and eigenphases in (−π, π].
pub fn unitary_log(u: &UnitaryOperator) -> Result<HermitianOperator> {
    unitary_log_with_tol(u, DEFAULT_RESONANCE_TOL)
}

pub fn unitary_log_with_tol(u: &UnitaryOperator, resonance_tol: f64) -> Result<HermitianOperator> {
    let (values, q) = unitary_eigen(u.matrix())?;
    let mut phases = Vec::with_capacity(values.len());
    for z in values {
        let phase = z.arg();
        if PI - phase.abs() < resonance_tol {
            return Err(Error::BranchBoundary { phase, tol: resonance_tol });
        }
        phases.push(c64(phase, 0.0));
    }
    let d = CMatrix::from_diagonal(&CVector::from_vec(phases));
    HermitianOperator::hermitize(&q * d * q.adjoint())
}

/// Unitary factor of the polar decomposition A = W·P; the unitary closest
/// to A in Frobenius norm.
pub fn polar_unitary(a: &CMatrix) -> Result<UnitaryOperator> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Invalid(format!("polar factor needs a square matrix, got {}×{}", a.nrows(), a.ncols())));
    }
    if a.nrows() == 1 {
        let z = a[(0, 0)];
        if z.norm() < 1e-300 {
            return Err(Error::Singular { sigma_min: z.norm() });
        }
        return Ok(UnitaryOperator(CMatrix::from_element(1, 1, z / z.norm())));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin.is_nan() || smin <= 1e-14 * smax {
        return Err(Error::Singular { sigma_min: smin });
    }
    let (Some(w), Some(vt)) = (svd.u, svd.v_t) else {
        return Err(Error::Numerical("SVD did not return singular vectors".into()));
    };
    Ok(UnitaryOperator(w * vt))
}

/// ‖AB − BA‖_F.
pub fn commutator_norm(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.nrows() });
    }
    Ok(frob(&(a * b - b * a)))
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}
