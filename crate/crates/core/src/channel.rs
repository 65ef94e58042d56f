//! Representations of trace-preserving channels and conversions between them.
//!
//! A channel on `d`-level systems is stored either as Kraus operators or as
//! its `d² × d²` χ matrix in the elementary basis, `χ = Σ_j vec(K_j) vec(K_j)†`
//! with row-major vectorization. The first tensor factor of χ is the output
//! side and the second the input side, so that
//! `E(ρ) = tr₂(χ (I ⊗ ρᵀ))` and `tr(E(ρ) Π) = tr(χ (Π ⊗ ρᵀ))`.
//!
//! Trace-preserving χ matrices are parametrized by a real vector θ of length
//! `d⁴ - d²`: `χ(θ) = I/d + Σ_ℓ θ_ℓ Q_ℓ` with `Q_ℓ = σ_j ⊗ σ_k`, `j ≥ 1`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dims_err, Error, Result};
use crate::linalg::{
    self, c, hermitian_deviation, identity, kron, max_abs, partial_trace_first,
    partial_trace_second, trace_product, unvec_row_major, vec_row_major, CMatrix,
    HermitianBasis, HERMITIAN_TOL,
};

/// Tolerance on `Σ K†K = I` and `tr₁(χ) = I`.
pub const TP_TOL: f64 = 1e-10;
/// Default eigenvalue cutoff for [`chi_to_kraus`].
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    dim: usize,
    operators: Vec<CMatrix>,
}

impl KrausSet {
    pub fn new(operators: Vec<CMatrix>) -> Result<Self> {
        let dim = operators
            .first()
            .map(|k| k.nrows())
            .ok_or_else(|| Error::Invalid("empty Kraus set".into()))?;
        if let Some(k) = operators.iter().find(|k| k.shape() != (dim, dim)) {
            return Err(dims_err(format!("{dim}x{dim}"), format!("{:?}", k.shape())));
        }
        let set = Self { dim, operators };
        let dev = set.completeness_deviation();
        if dev > TP_TOL {
            return Err(Error::KrausNotTracePreserving(dev));
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    /// `max |Σ K†K - I|` entrywise.
    pub fn completeness_deviation(&self) -> f64 {
        let sum: CMatrix = self.operators.iter().map(|k| k.adjoint() * k).sum();
        max_abs(&(sum - identity(self.dim)))
    }
}

/// Hermitian `d² × d²` χ matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiMatrix {
    dim: usize,
    matrix: CMatrix,
}

impl ChiMatrix {
    /// Wraps a Hermitian `d² × d²` matrix. Trace preservation is not checked.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let n = matrix.nrows();
        let dim = (n as f64).sqrt().round() as usize;
        if dim < 2 || dim * dim != n || !matrix.is_square() {
            return Err(dims_err("d^2 x d^2 with d >= 2", format!("{:?}", matrix.shape())));
        }
        let dev = hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self { dim, matrix })
    }

    /// Like [`ChiMatrix::new`] but also requires `tr₁(χ) = I` within [`TP_TOL`].
    pub fn new_tp(matrix: CMatrix) -> Result<Self> {
        let chi = Self::new(matrix)?;
        let dev = chi.tp_deviation();
        if dev > TP_TOL {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(chi)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    /// `max |tr₁(χ) - I|`.
    pub fn tp_deviation(&self) -> f64 {
        let tr1 = partial_trace_first(&self.matrix, self.dim, self.dim)
            .expect("chi dims are d^2 x d^2 by construction");
        max_abs(&(tr1 - identity(self.dim)))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.matrix).expect("chi is Hermitian by construction")
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// The identity channel `ρ ↦ ρ`.
    pub fn identity_channel(d: usize) -> Self {
        kraus_to_chi(&KrausSet::new(vec![identity(d)]).expect("identity is TP"))
    }

    /// The completely depolarizing channel, `χ = I/d`.
    pub fn depolarizing(d: usize) -> Self {
        Self {
            dim: d,
            matrix: identity(d * d).scale(1.0 / d as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    dim: usize,
    coords: Vec<f64>,
}

impl ThetaVector {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        let expected = theta_len(dim);
        if coords.len() != expected {
            return Err(Error::ThetaLength {
                expected,
                got: coords.len(),
            });
        }
        Ok(Self { dim, coords })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            coords: vec![0.0; theta_len(dim)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// Number of free real parameters of a trace-preserving χ, `d⁴ - d²`.
pub fn theta_len(d: usize) -> usize {
    d * d * d * d - d * d
}

/// The operators `Q_ℓ = σ_j ⊗ σ_k` (`j = 1..d²-1`, `k = 0..d²-1`, `k` fastest)
/// spanning the trace-preserving directions of χ.
#[derive(Debug, Clone)]
pub struct TpParametrization {
    dim: usize,
    basis: HermitianBasis,
    q: Vec<CMatrix>,
}

impl TpParametrization {
    pub fn new(d: usize) -> Self {
        let basis = HermitianBasis::new(d);
        let n = d * d;
        let mut q = Vec::with_capacity(theta_len(d));
        for j in 1..n {
            for k in 0..n {
                q.push(kron(basis.get(j), basis.get(k)));
            }
        }
        Self { dim: d, basis, q }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &HermitianBasis {
        &self.basis
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Index of `σ_j ⊗ σ_k` in the parameter vector (`j ≥ 1`).
    pub fn index(&self, j: usize, k: usize) -> usize {
        let n = self.dim * self.dim;
        (j - 1) * n + k
    }

    /// `I/d + Σ θ_ℓ Q_ℓ` as a raw matrix, no validation beyond length.
    pub fn chi_matrix(&self, theta: &[f64]) -> CMatrix {
        debug_assert_eq!(theta.len(), self.q.len());
        let n = self.dim * self.dim;
        let mut chi = identity(n).scale(1.0 / self.dim as f64);
        for (q, &t) in self.q.iter().zip(theta) {
            if t != 0.0 {
                chi.zip_apply(q, |x, y| *x += y * t);
            }
        }
        chi
    }

    pub fn to_chi(&self, theta: &ThetaVector) -> Result<ChiMatrix> {
        if theta.dim != self.dim || theta.coords.len() != self.q.len() {
            return Err(Error::ThetaLength {
                expected: self.q.len(),
                got: theta.coords.len(),
            });
        }
        let matrix = linalg::symmetrize(&self.chi_matrix(&theta.coords));
        Ok(ChiMatrix {
            dim: self.dim,
            matrix,
        })
    }

    /// Coordinates `θ_ℓ = tr(Q_ℓ χ)` of a trace-preserving χ.
    pub fn to_theta(&self, chi: &ChiMatrix) -> Result<ThetaVector> {
        if chi.dim != self.dim {
            return Err(dims_err(self.dim, chi.dim));
        }
        let dev = chi.tp_deviation();
        if dev > 1e-8 {
            return Err(Error::NotTracePreserving(dev));
        }
        let mut coords = Vec::with_capacity(self.q.len());
        for q in &self.q {
            let v = trace_product(q, &chi.matrix);
            if v.im.abs() > 1e-10 {
                return Err(Error::NotHermitian(v.im.abs()));
            }
            coords.push(v.re);
        }
        Ok(ThetaVector {
            dim: self.dim,
            coords,
        })
    }
}

pub fn theta_to_chi(theta: &ThetaVector, d: usize) -> Result<ChiMatrix> {
    if theta.dim != d {
        return Err(dims_err(d, theta.dim));
    }
    TpParametrization::new(d).to_chi(theta)
}

pub fn chi_to_theta(chi: &ChiMatrix) -> Result<ThetaVector> {
    TpParametrization::new(chi.dim).to_theta(chi)
}

pub fn kraus_to_chi(kraus: &KrausSet) -> ChiMatrix {
    let n = kraus.dim * kraus.dim;
    let mut matrix = CMatrix::zeros(n, n);
    for k in &kraus.operators {
        let v = vec_row_major(k);
        matrix += &v * v.adjoint();
    }
    ChiMatrix {
        dim: kraus.dim,
        matrix: linalg::symmetrize(&matrix),
    }
}

/// Kraus operators from the eigendecomposition of χ; eigenvalues at or
/// below `rank_tol` are dropped.
pub fn chi_to_kraus(chi: &ChiMatrix, rank_tol: f64) -> Result<KrausSet> {
    let eig = SymmetricEigen::new(linalg::symmetrize(&chi.matrix));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -rank_tol {
        return Err(Error::NotPositive(min));
    }
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let operators = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > rank_tol)
        .map(|i| {
            let v = eig.eigenvectors.column(i).into_owned();
            unvec_row_major(&v, chi.dim).scale(eig.eigenvalues[i].sqrt())
        })
        .collect();
    KrausSet::new(operators)
}

fn check_state_dim(rho: &CMatrix, d: usize) -> Result<()> {
    if rho.shape() != (d, d) {
        return Err(dims_err(format!("{d}x{d}"), format!("{:?}", rho.shape())));
    }
    Ok(())
}

/// `E(ρ) = tr₂(χ (I ⊗ ρᵀ))`.
pub fn apply_channel_chi(chi: &ChiMatrix, rho: &CMatrix) -> Result<CMatrix> {
    let d = chi.dim;
    check_state_dim(rho, d)?;
    let lifted = &chi.matrix * kron(&identity(d), &rho.transpose());
    partial_trace_second(&lifted, d, d)
}

/// `E(ρ) = Σ K ρ K†`.
pub fn apply_channel_kraus(kraus: &KrausSet, rho: &CMatrix) -> Result<CMatrix> {
    check_state_dim(rho, kraus.dim)?;
    Ok(kraus
        .operators
        .iter()
        .map(|k| k * rho * k.adjoint())
        .sum())
}

/// Max deviation of `Π² - Π` and `Π - Π†`.
pub fn projector_deviation(p: &CMatrix) -> f64 {
    if !p.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(p * p - p)).max(hermitian_deviation(p))
}

/// `tr(E(ρ) Π) = tr(χ (Π ⊗ ρᵀ))`, clipped to `[0, 1]`.
pub fn outcome_probability(chi: &ChiMatrix, projector: &CMatrix, rho: &CMatrix) -> Result<f64> {
    let d = chi.dim;
    check_state_dim(rho, d)?;
    check_state_dim(projector, d)?;
    let dev = projector_deviation(projector);
    if dev > 1e-10 {
        return Err(Error::NotProjector(dev));
    }
    let p = trace_product(&chi.matrix, &kron(projector, &rho.transpose())).re;
    Ok(p.clamp(0.0, 1.0))
}

pub fn check_tp(chi: &ChiMatrix, tol: f64) -> bool {
    chi.tp_deviation() <= tol
}

/// Random channel with the given Kraus rank via a Stinespring isometry:
/// a `(d·r) × d` complex Gaussian matrix is orthonormalized by QR and cut
/// into `r` blocks of `d × d`.
pub fn random_cptp(d: usize, kraus_rank: usize, seed: u64) -> Result<(KrausSet, ChiMatrix)> {
    if kraus_rank == 0 || kraus_rank > d * d {
        return Err(Error::Invalid(format!(
            "Kraus rank {kraus_rank} outside 1..={}",
            d * d
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = d * kraus_rank;
    let g = CMatrix::from_fn(rows, d, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        c(re, im)
    });
    let q = g.qr().q();
    let operators = (0..kraus_rank)
        .map(|b| q.rows(b * d, d).into_owned())
        .collect();
    let kraus = KrausSet::new(operators)?;
    let chi = kraus_to_chi(&kraus);
    Ok((kraus, chi))
}

/// Depolarizing-perturbed amplitude damping with damping 0.5:
/// `K₁ = √0.9·[[0, √0.5], [0, 0]]`, `K₂ = √0.9·diag(1, √0.5)`, and
/// `√0.1/2 · {I, X, Y, Z}`.
pub fn perturbed_amplitude_damping() -> KrausSet {
    let a = 0.9_f64.sqrt();
    let h = 0.5_f64.sqrt();
    let k1 = linalg::from_real_rows(&[&[0.0, a * h], &[0.0, 0.0]]);
    let k2 = linalg::from_real_rows(&[&[a, 0.0], &[0.0, a * h]]);
    let w = 0.1_f64.sqrt() / 2.0;
    let mut ops = vec![k1, k2];
    ops.extend(linalg::pauli_matrices().iter().map(|p| p.scale(w)));
    KrausSet::new(ops).expect("perturbed amplitude damping is TP")
}

/// χ of [`perturbed_amplitude_damping`].
pub fn amplitude_damping_chi() -> ChiMatrix {
    kraus_to_chi(&perturbed_amplitude_damping())
}

/// On-disk form: row-major real and imaginary parts of χ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFile {
    pub d: usize,
    pub chi_re: Vec<Vec<f64>>,
    pub chi_im: Vec<Vec<f64>>,
}

pub fn split_matrix(m: &CMatrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let re = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].re).collect())
        .collect();
    let im = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].im).collect())
        .collect();
    (re, im)
}

pub fn join_matrix(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<CMatrix> {
    let rows = re.len();
    let cols = re.first().map_or(0, Vec::len);
    let ragged = re.iter().chain(im.iter()).any(|r| r.len() != cols);
    if im.len() != rows || ragged {
        return Err(Error::Invalid("re/im arrays must be rectangular and equal-sized".into()));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| Complex64::new(re[i][j], im[i][j])))
}

impl ChannelFile {
    pub fn from_chi(chi: &ChiMatrix) -> Self {
        let (chi_re, chi_im) = split_matrix(&chi.matrix);
        Self {
            d: chi.dim,
            chi_re,
            chi_im,
        }
    }

    /// Validates Hermiticity and trace preservation.
    pub fn to_chi(&self) -> Result<ChiMatrix> {
        let m = join_matrix(&self.chi_re, &self.chi_im)?;
        let chi = ChiMatrix::new_tp(m)?;
        if chi.dim != self.d {
            return Err(dims_err(self.d, chi.dim));
        }
        Ok(chi)
    }
}

pub fn chi_to_json(chi: &ChiMatrix) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ChannelFile::from_chi(chi))?)
}

pub fn chi_from_json(s: &str) -> Result<ChiMatrix> {
    serde_json::from_str::<ChannelFile>(s)?.to_chi()
}
