//! PLDA parameters, length normalization and simultaneous diagonalization.
//!
//! All clustering math runs in the space produced by [`PldaParams::project`],
//! where the within-class covariance is the identity and the across-class
//! covariance is `diag(psi)`. Every covariance downstream is therefore a vector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const MIN_NORM: f64 = 1e-12;
const MIN_WC_EIGENVALUE: f64 = 1e-10;

/// A unit-norm speaker embedding for one speech window.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(DVector<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// Scales `v` to unit Euclidean norm.
pub fn length_normalize(v: &[f64]) -> Result<Embedding> {
    let v = DVector::from_column_slice(v);
    let norm = v.norm();
    if !(norm >= MIN_NORM) {
        return Err(Error::ZeroVector { norm });
    }
    Ok(Embedding(v / norm))
}

#[derive(Debug, Clone)]
pub struct PldaParams {
    pub sigma_wc: DMatrix<f64>,
    pub sigma_ac: DMatrix<f64>,
    /// Rows map an embedding into the diagonalized space.
    pub transform: DMatrix<f64>,
    /// Across-class variances in the diagonalized space, sorted descending.
    pub psi: DVector<f64>,
}

impl PldaParams {
    pub fn new(sigma_wc: DMatrix<f64>, sigma_ac: DMatrix<f64>) -> Result<Self> {
        let (transform, psi) = simultaneous_diagonalize(&sigma_wc, &sigma_ac)?;
        Ok(Self {
            sigma_wc,
            sigma_ac,
            transform,
            psi,
        })
    }

    pub fn dim(&self) -> usize {
        self.psi.len()
    }

    pub fn project(&self, z: &Embedding) -> Result<DVector<f64>> {
        if z.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: z.dim(),
            });
        }
        Ok(&self.transform * z.as_vector())
    }

    pub fn project_all(&self, zs: &[Embedding]) -> Result<Vec<DVector<f64>>> {
        zs.iter().map(|z| self.project(z)).collect()
    }
}

fn check_square_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidConfig(format!(
            "{name} is {}x{}, expected a square matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::InvalidConfig(format!("{name} is not symmetric")));
            }
        }
    }
    Ok(())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Finds `U` with `U Σwc Uᵀ = I` and `U Σac Uᵀ = diag(psi)`.
///
/// `psi` is sorted descending and each row of `U` is sign-fixed so that its
/// first nonzero entry is positive, which makes the transform deterministic up
/// to ties in `psi`.
pub fn simultaneous_diagonalize(
    sigma_wc: &DMatrix<f64>,
    sigma_ac: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_square_symmetric(sigma_wc, "sigma_wc")?;
    check_square_symmetric(sigma_ac, "sigma_ac")?;
    if sigma_wc.nrows() != sigma_ac.nrows() {
        return Err(Error::DimensionMismatch {
            expected: sigma_wc.nrows(),
            actual: sigma_ac.nrows(),
        });
    }
    let dim = sigma_wc.nrows();

    // Whiten the within-class covariance: W Σwc Wᵀ = I with W = Λ^{-1/2} Qᵀ.
    let wc = SymmetricEigen::new(symmetrize(sigma_wc));
    let min_eigenvalue = wc.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_eigenvalue >= MIN_WC_EIGENVALUE) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue });
    }
    let mut whitener = wc.eigenvectors.transpose();
    for (i, mut row) in whitener.row_iter_mut().enumerate() {
        row /= wc.eigenvalues[i].sqrt();
    }

    let whitened_ac = symmetrize(&(&whitener * sigma_ac * whitener.transpose()));
    let ac = SymmetricEigen::new(whitened_ac);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| ac.eigenvalues[b].total_cmp(&ac.eigenvalues[a]).then(a.cmp(&b)));

    let rotated = ac.eigenvectors.transpose() * &whitener;
    let mut transform = DMatrix::zeros(dim, dim);
    let mut psi = DVector::zeros(dim);
    for (dst, &src) in order.iter().enumerate() {
        let mut row = rotated.row(src).into_owned();
        let tol = 1e-12 * row.amax();
        if let Some(first) = row.iter().find(|x| x.abs() > tol) {
            if *first < 0.0 {
                row = -row;
            }
        }
        transform.set_row(dst, &row);
        // Roundoff can push a zero eigenvalue of a semidefinite Σac slightly negative.
        psi[dst] = ac.eigenvalues[src].max(0.0);
    }
    Ok((transform, psi))
}
