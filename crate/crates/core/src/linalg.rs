//! Small complex linear-algebra helpers shared by the channel and tomography code.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Pauli operators in the order I, X, Y, Z.
pub fn paulis() -> [Matrix2<Complex64>; 4] {
    [
        Matrix2::new(ONE, ZERO, ZERO, ONE),
        Matrix2::new(ZERO, ONE, ONE, ZERO),
        Matrix2::new(ZERO, -I, I, ZERO),
        Matrix2::new(ONE, ZERO, ZERO, -ONE),
    ]
}

pub fn to_dyn(m: &Matrix2<Complex64>) -> CMatrix {
    DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
}

pub fn identity(dim: usize) -> CMatrix {
    DMatrix::identity(dim, dim)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = hermitian_part(m).symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn eigenvalues(m: &CMatrix) -> Vec<f64> {
    eigh(m).0
}

pub fn from_eigen(values: &[f64], vectors: &CMatrix) -> CMatrix {
    let d = DVector::from_iterator(values.len(), values.iter().map(|&v| c(v, 0.0)));
    vectors * CMatrix::from_diagonal(&d) * vectors.adjoint()
}

/// Principal square root of a positive semidefinite Hermitian matrix.
/// Negative eigenvalues from round-off are clipped to zero.
pub fn sqrt_psd(m: &CMatrix) -> CMatrix {
    let (values, vectors) = eigh(m);
    let roots: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    from_eigen(&roots, &vectors)
}

/// Nearest unit-trace PSD matrix obtained by clipping negative eigenvalues.
/// Returns `None` if nothing positive is left.
pub fn project_psd_unit_trace(m: &CMatrix) -> Option<CMatrix> {
    let (values, vectors) = eigh(m);
    let clipped: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= f64::MIN_POSITIVE {
        return None;
    }
    let normalized: Vec<f64> = clipped.iter().map(|v| v / total).collect();
    Some(hermitian_part(&from_eigen(&normalized, &vectors)))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Hermitian basis of `dim x dim` matrices built from tensor products of
/// Pauli operators (dim 2 or 4), in lexicographic Pauli order.
pub fn pauli_product_basis(dim: usize) -> Vec<CMatrix> {
    let single: Vec<CMatrix> = paulis().iter().map(to_dyn).collect();
    match dim {
        2 => single,
        4 => {
            let mut out = Vec::with_capacity(16);
            for a in &single {
                for b in &single {
                    out.push(kron(a, b));
                }
            }
            out
        }
        _ => panic!("pauli_product_basis supports dim 2 or 4, got {dim}"),
    }
}

/// Row-major nested `[re, im]` pairs, the JSON layout for complex matrices.
pub type ComplexRows = Vec<Vec<[f64; 2]>>;

pub fn to_rows(m: &CMatrix) -> ComplexRows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Inverse of [`to_rows`]; `None` for ragged or empty input.
pub fn from_rows(rows: &ComplexRows) -> Option<CMatrix> {
    let n = rows.len();
    let m = rows.first()?.len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return None;
    }
    Some(CMatrix::from_fn(n, m, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let m = CMatrix::from_fn(2, 3, |i, j| c(i as f64, j as f64 - 0.5));
        assert_eq!(from_rows(&to_rows(&m)).unwrap(), m);
        assert!(from_rows(&vec![vec![[0.0, 0.0]], vec![]]).is_none());
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[c(0.7, 0.0), c(0.1, -0.2), c(0.1, 0.2), c(0.3, 0.0)],
        );
        let r = sqrt_psd(&m);
        assert!(max_abs_diff(&(&r * &r), &m) < 1e-12);
    }

    #[test]
    fn pauli_basis_is_orthogonal() {
        let basis = pauli_product_basis(4);
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let t = trace(&(a.adjoint() * b));
                let expect = if i == j { 4.0 } else { 0.0 };
                assert!((t - c(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_clips_negative_eigenvalue() {
        let m = CMatrix::from_diagonal(&DVector::from_vec(vec![c(1.05, 0.0), c(-0.05, 0.0)]));
        let p = project_psd_unit_trace(&m).unwrap();
        assert!((p[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(p[(1, 1)].norm() < 1e-12);
    }
}
