//! Dense complex matrix primitives.
//!
//! Tensor products are laid out so that the composite index of `A ⊗ B` is
//! `(i, k) -> i * n + k` with `n` the dimension of `B`. The same row-major
//! rule is used everywhere a `d × d` matrix is flattened into a vector of
//! length `d²`, so the elementary basis element with index `m = j * d + k`
//! is `E_{jk}`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{dims_err, Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Hermiticity tolerance used when validating inputs.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Default eigenvalue tolerance for positivity tests.
pub const PSD_TOL: f64 = 1e-9;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Builds a complex matrix from a real row-major nested slice.
pub fn from_real_rows(rows: &[&[f64]]) -> CMatrix {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(n_rows, n_cols, |i, j| c(rows[i][j], 0.0))
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// The four Pauli matrices `[I, X, Y, Z]`, unnormalized.
pub fn pauli_matrices() -> [CMatrix; 4] {
    [
        identity(2),
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    ]
}

/// Kronecker product; block `(i, j)` of the result is `a[(i, j)] * b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Traces out the second tensor factor of an `mn × mn` matrix.
pub fn partial_trace_second(x: &CMatrix, m: usize, n: usize) -> Result<CMatrix> {
    check_square_dim(x, m * n)?;
    Ok(CMatrix::from_fn(m, m, |j, k| {
        (0..n).map(|i| x[(j * n + i, k * n + i)]).sum()
    }))
}

/// Traces out the first tensor factor of an `mn × mn` matrix.
pub fn partial_trace_first(x: &CMatrix, m: usize, n: usize) -> Result<CMatrix> {
    check_square_dim(x, m * n)?;
    Ok(CMatrix::from_fn(n, n, |j, k| {
        (0..m).map(|i| x[(i * n + j, i * n + k)]).sum()
    }))
}

fn check_square_dim(x: &CMatrix, size: usize) -> Result<()> {
    if x.nrows() != size || x.ncols() != size {
        return Err(dims_err(
            format!("{size}x{size}"),
            format!("{}x{}", x.nrows(), x.ncols()),
        ));
    }
    Ok(())
}

pub fn trace(x: &CMatrix) -> Complex64 {
    x.diagonal().sum()
}

/// `tr(a b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Frobenius inner product `tr(a† b)`.
pub fn frobenius_inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn frobenius_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise deviation `max |x - x†|`.
pub fn hermitian_deviation(x: &CMatrix) -> f64 {
    if !x.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(x - x.adjoint()))
}

pub fn is_hermitian(x: &CMatrix, tol: f64) -> bool {
    hermitian_deviation(x) <= tol
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(h: &CMatrix) -> Result<Vec<f64>> {
    let dev = hermitian_deviation(h);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let sym = symmetrize(h);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

pub fn min_eigenvalue(h: &CMatrix) -> Result<f64> {
    Ok(hermitian_eigenvalues(h)?[0])
}

/// True iff the smallest eigenvalue of `h` is at least `-tol`.
pub fn is_psd(h: &CMatrix, tol: f64) -> Result<bool> {
    Ok(min_eigenvalue(h)? >= -tol)
}

/// Lower Cholesky factor of a Hermitian matrix, or `None` unless every
/// pivot is strictly positive.
pub fn strict_cholesky(h: &CMatrix) -> Option<CMatrix> {
    let n = h.nrows();
    if !h.is_square() {
        return None;
    }
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = h[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot > 0.0) {
            return None;
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = c(ljj, 0.0);
        for i in (j + 1)..n {
            let mut v = h[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / ljj;
        }
    }
    Some(l)
}

/// Strict positive definiteness by attempted Cholesky factorization with
/// zero tolerance.
pub fn is_positive_definite(h: &CMatrix) -> bool {
    strict_cholesky(&symmetrize(h)).is_some()
}

/// `(h + h†) / 2`.
pub fn symmetrize(h: &CMatrix) -> CMatrix {
    (h + h.adjoint()).scale(0.5)
}

/// Flattens a `d × d` matrix row-major into a vector of length `d²`.
pub fn vec_row_major(k: &CMatrix) -> CVector {
    let (r, cols) = k.shape();
    CVector::from_fn(r * cols, |m, _| k[(m / cols, m % cols)])
}

/// Inverse of [`vec_row_major`].
pub fn unvec_row_major(v: &CVector, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |j, k| v[j * d + k])
}

/// Elementary matrices `F_m = E_{jk}` with `m = j * d + k`.
pub fn elementary_basis(d: usize) -> Vec<CMatrix> {
    (0..d * d)
        .map(|m| {
            let mut f = CMatrix::zeros(d, d);
            f[(m / d, m % d)] = ONE;
            f
        })
        .collect()
}

/// Orthonormal Hermitian operator basis of `d × d` matrices.
///
/// Element 0 is `I / √d`. The rest are the generalized Gell-Mann matrices
/// scaled to unit Frobenius norm: for every pair `j < k` a symmetric and an
/// antisymmetric element, followed by the `d - 1` diagonal ones. For `d = 2`
/// this is `{I, X, Y, Z} / √2`.
#[derive(Debug, Clone)]
pub struct HermitianBasis {
    dim: usize,
    elements: Vec<CMatrix>,
}

impl HermitianBasis {
    pub fn new(d: usize) -> Self {
        assert!(d >= 2, "Hermitian basis requires d >= 2");
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut elements = Vec::with_capacity(d * d);
        elements.push(identity(d).scale(1.0 / (d as f64).sqrt()));
        for j in 0..d {
            for k in (j + 1)..d {
                let mut sym = CMatrix::zeros(d, d);
                sym[(j, k)] = c(s, 0.0);
                sym[(k, j)] = c(s, 0.0);
                elements.push(sym);

                let mut anti = CMatrix::zeros(d, d);
                anti[(j, k)] = c(0.0, -s);
                anti[(k, j)] = c(0.0, s);
                elements.push(anti);
            }
        }
        for l in 1..d {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut diag = CMatrix::zeros(d, d);
            for m in 0..l {
                diag[(m, m)] = c(norm, 0.0);
            }
            diag[(l, l)] = c(-(l as f64) * norm, 0.0);
            elements.push(diag);
        }
        Self { dim: d, elements }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn get(&self, i: usize) -> &CMatrix {
        &self.elements[i]
    }

    /// Real coordinates `tr(σ_i h)` of a Hermitian matrix.
    pub fn coordinates(&self, h: &CMatrix) -> Vec<f64> {
        self.elements
            .iter()
            .map(|s| trace_product(s, h).re)
            .collect()
    }

    pub fn synthesize(&self, coords: &[f64]) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for (s, &x) in self.elements.iter().zip(coords) {
            out += s.scale(x);
        }
        out
    }
}

pub fn pauli_like_basis(d: usize) -> HermitianBasis {
    HermitianBasis::new(d)
}

/// Rank-1 projector `|v⟩⟨v|` for a (not necessarily normalized) vector.
pub fn projector_from_vector(v: &CVector) -> CMatrix {
    let u = v.scale(1.0 / v.norm());
    &u * u.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amplitude_damping_chi() -> CMatrix {
        let a = 0.6364;
        from_real_rows(&[
            &[0.95, 0.0, 0.0, a],
            &[0.0, 0.5, 0.0, 0.0],
            &[0.0, 0.0, 0.05, 0.0],
            &[a, 0.0, 0.0, 0.5],
        ])
    }

    fn diag(v: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(
            v.len(),
            v.iter().map(|&x| c(x, 0.0)),
        ))
    }

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        a.shape() == b.shape() && max_abs(&(a - b)) <= tol
    }

    #[test]
    fn kron_examples() {
        assert!(close(&kron(&identity(2), &identity(2)), &identity(4), 0.0));
        let f = elementary_basis(2);
        assert!(close(&kron(&f[0], &f[3]), &diag(&[0.0, 1.0, 0.0, 0.0]), 0.0));
        assert!(close(
            &kron(&diag(&[1.0, -1.0]), &identity(2)),
            &diag(&[1.0, 1.0, -1.0, -1.0]),
            0.0
        ));
    }

    #[test]
    fn partial_traces_of_identity() {
        let expected = identity(2).scale(2.0);
        assert!(close(&partial_trace_second(&identity(4), 2, 2).unwrap(), &expected, 0.0));
        assert!(close(&partial_trace_first(&identity(4), 2, 2).unwrap(), &expected, 0.0));
    }

    #[test]
    fn partial_traces_of_amplitude_damping_chi() {
        let chi = amplitude_damping_chi();
        let tr2 = partial_trace_second(&chi, 2, 2).unwrap();
        assert!(close(&tr2, &diag(&[1.45, 0.55]), 1e-12));
        let tr1 = partial_trace_first(&chi, 2, 2).unwrap();
        assert!(close(&tr1, &identity(2), 1e-12));
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        assert!(matches!(
            partial_trace_second(&identity(4), 2, 3),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(partial_trace_first(&CMatrix::zeros(4, 3), 2, 2).is_err());
    }

    #[test]
    fn partial_trace_of_product_uneven_dims() {
        let a = CMatrix::from_fn(2, 2, |i, j| c(i as f64 + 1.0, j as f64 - 0.5));
        let b = CMatrix::from_fn(3, 3, |i, j| c((i * 3 + j) as f64, 0.25 * i as f64));
        let ab = kron(&a, &b);
        let tr2 = partial_trace_second(&ab, 2, 3).unwrap();
        assert!(close(&tr2, &a.scale(1.0).map(|z| z * trace(&b)), 1e-12));
        let tr1 = partial_trace_first(&ab, 2, 3).unwrap();
        assert!(close(&tr1, &b.map(|z| z * trace(&a)), 1e-12));
    }

    #[test]
    fn elementary_basis_order() {
        let f = elementary_basis(2);
        assert_eq!(f.len(), 4);
        let expected = [(0, 0), (0, 1), (1, 0), (1, 1)];
        for (m, &(j, k)) in expected.iter().enumerate() {
            let mut e = CMatrix::zeros(2, 2);
            e[(j, k)] = ONE;
            assert_eq!(f[m], e);
        }
        let f3 = elementary_basis(3);
        assert_eq!(f3.len(), 9);
        assert_eq!(f3[0][(0, 0)], ONE);
        assert_eq!(f3[0].iter().filter(|z| **z != ZERO).count(), 1);
        let sum: CMatrix = f3.iter().map(|f| f.adjoint() * f).sum();
        assert!(close(&sum, &identity(3).scale(3.0), 0.0));
    }

    #[test]
    fn qubit_basis_is_normalized_paulis() {
        let basis = pauli_like_basis(2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (elem, p) in basis.elements().iter().zip(pauli_matrices().iter()) {
            assert!(close(elem, &p.scale(s), 1e-15));
        }
    }

    #[test]
    fn basis_gram_is_identity() {
        for d in 2..=4 {
            let basis = pauli_like_basis(d);
            assert_eq!(basis.len(), d * d);
            assert!(close(basis.get(0), &identity(d).scale(1.0 / (d as f64).sqrt()), 1e-15));
            for (i, a) in basis.elements().iter().enumerate() {
                assert!(is_hermitian(a, 1e-15));
                if i > 0 {
                    assert!(trace(a).norm() <= 1e-12);
                }
                for (j, b) in basis.elements().iter().enumerate() {
                    let g = trace_product(a, b);
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((g - c(expected, 0.0)).norm() <= 1e-12, "d={d} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn psd_examples() {
        assert!(is_psd(&identity(4), PSD_TOL).unwrap());
        assert!(!is_psd(&diag(&[1.0, -1e-6]), PSD_TOL).unwrap());
        assert!(is_psd(&amplitude_damping_chi(), PSD_TOL).unwrap());
        let mut bad = identity(2);
        bad[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(is_psd(&bad, PSD_TOL), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn amplitude_damping_eigen_oracle() {
        // [[.95, a], [a, .5]] block has positive determinant; other eigenvalues .5 and .05.
        let a: f64 = 0.6364;
        let det = 0.95 * 0.5 - a * a;
        assert!(det > 0.07 - 1e-4);
        let tr = 1.45;
        let small = 0.5 * (tr - (tr * tr - 4.0 * det).sqrt());
        let ev = hermitian_eigenvalues(&amplitude_damping_chi()).unwrap();
        assert!((ev[0] - small.min(0.05)).abs() < 1e-12);
    }

    #[test]
    fn positive_definite_is_strict() {
        assert!(is_positive_definite(&identity(3)));
        assert!(!is_positive_definite(&diag(&[1.0, 0.0])));
        assert!(!is_positive_definite(&diag(&[1.0, -1e-14])));
        let h = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, 0.5), c(0.5, -0.5), c(1.0, 0.0)]);
        let l = strict_cholesky(&h).unwrap();
        assert!(max_abs(&(&l * l.adjoint() - &h)) < 1e-15);
        // indefinite although all diagonal entries are positive
        let bad = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 2.0), c(0.0, -2.0), c(1.0, 0.0)]);
        assert!(strict_cholesky(&bad).is_none());
    }

    #[test]
    fn vec_roundtrip() {
        let k = CMatrix::from_fn(3, 3, |i, j| c(i as f64, j as f64));
        let v = vec_row_major(&k);
        assert_eq!(v[1], k[(0, 1)]);
        assert_eq!(unvec_row_major(&v, 3), k);
    }
}
