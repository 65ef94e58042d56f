//! Probe states, measured projectors, the design matrix and data simulation.
//!
//! Every per-pair quantity (rows of T, counts, frequencies) is laid out in
//! `(j, k)` order with the state index `k` fastest: row `j * L + k`.

use nalgebra::{DMatrix, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::channel::{
    join_matrix, outcome_probability, projector_deviation, split_matrix, ChiMatrix,
    TpParametrization,
};
use crate::error::{dims_err, Error, Result};
use crate::linalg::{
    self, c, identity, kron, pauli_matrices, projector_from_vector, trace, trace_product, CMatrix,
    CVector,
};

const STATE_TOL: f64 = 1e-10;
/// Default number of resampling attempts in [`random_setting`].
pub const DEFAULT_MAX_ATTEMPTS: usize = 100;

/// Pure probe states `ρ_k` and measured orthogonal projectors `Π_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSetting {
    dim: usize,
    states: Vec<CMatrix>,
    projectors: Vec<CMatrix>,
}

impl ExperimentSetting {
    pub fn new(dim: usize, states: Vec<CMatrix>, projectors: Vec<CMatrix>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Invalid("dimension must be at least 2".into()));
        }
        if states.is_empty() || projectors.is_empty() {
            return Err(Error::Invalid("setting needs at least one state and one projector".into()));
        }
        for rho in &states {
            if rho.shape() != (dim, dim) {
                return Err(dims_err(format!("{dim}x{dim}"), format!("{:?}", rho.shape())));
            }
            let herm = linalg::hermitian_deviation(rho);
            let tr = trace(rho);
            let purity = trace_product(rho, rho).re;
            if herm > STATE_TOL || (tr - c(1.0, 0.0)).norm() > STATE_TOL || (purity - 1.0).abs() > STATE_TOL {
                return Err(Error::NotPureState(format!(
                    "hermitian dev {herm:.2e}, trace {tr:.6}, purity {purity:.6}"
                )));
            }
        }
        for p in &projectors {
            if p.shape() != (dim, dim) {
                return Err(dims_err(format!("{dim}x{dim}"), format!("{:?}", p.shape())));
            }
            let dev = projector_deviation(p);
            if dev > STATE_TOL {
                return Err(Error::NotProjector(dev));
            }
        }
        Ok(Self {
            dim,
            states,
            projectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &[CMatrix] {
        &self.states
    }

    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }

    /// Number of projectors, `M`.
    pub fn num_projectors(&self) -> usize {
        self.projectors.len()
    }

    /// Number of probe states, `L`.
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.states.len() * self.projectors.len()
    }

    pub fn without_state(&self, k: usize) -> Result<Self> {
        let mut states = self.states.clone();
        states.remove(k);
        Self::new(self.dim, states, self.projectors.clone())
    }

    pub fn without_projector(&self, j: usize) -> Result<Self> {
        let mut projectors = self.projectors.clone();
        projectors.remove(j);
        Self::new(self.dim, self.states.clone(), projectors)
    }

    pub fn with_state(&self, rho: CMatrix) -> Result<Self> {
        let mut states = self.states.clone();
        states.push(rho);
        Self::new(self.dim, states, self.projectors.clone())
    }

    pub fn with_projector(&self, p: CMatrix) -> Result<Self> {
        let mut projectors = self.projectors.clone();
        projectors.push(p);
        Self::new(self.dim, self.states.clone(), projectors)
    }
}

/// Minimal qubit quorum: projectors `(I + P)/2` for `P ∈ {X, Y, Z}` and
/// states `(I + X)/2`, `(I + Y)/2`, `(I ± Z)/2`.
pub fn minimal_qubit_setting() -> ExperimentSetting {
    let [id, x, y, z] = pauli_matrices();
    let half = |p: &CMatrix| (&id + p).scale(0.5);
    let projectors = vec![half(&x), half(&y), half(&z)];
    let states = vec![half(&x), half(&y), half(&z), (&id - &z).scale(0.5)];
    ExperimentSetting::new(2, states, projectors).expect("Pauli halves are valid")
}

/// `B_jk = (Π_j - I/d) ⊗ ρ_kᵀ` in row order.
pub fn build_b(setting: &ExperimentSetting) -> Vec<CMatrix> {
    let d = setting.dim;
    let shift = identity(d).scale(1.0 / d as f64);
    let mut out = Vec::with_capacity(setting.num_pairs());
    for p in &setting.projectors {
        let centered = p - &shift;
        for rho in &setting.states {
            out.push(kron(&centered, &rho.transpose()));
        }
    }
    out
}

/// Affine map from θ to outcome probabilities, `p = T θ + offset`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    num_projectors: usize,
    num_states: usize,
    matrix: DMatrix<f64>,
    offsets: Vec<f64>,
}

impl DesignMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `tr(Π_j)/d` per row; `1/d` for rank-1 projectors.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn num_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_projectors(&self) -> usize {
        self.num_projectors
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn row(&self, j: usize, k: usize) -> usize {
        j * self.num_states + k
    }

    pub fn probabilities(&self, theta: &[f64]) -> Vec<f64> {
        let t = nalgebra::DVector::from_column_slice(theta);
        let tp = &self.matrix * t;
        tp.iter().zip(&self.offsets).map(|(a, b)| a + b).collect()
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.matrix.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Singular values below `(d⁴ - d²) · σ_max · 1e-12` count as zero.
    pub fn rank_threshold(&self) -> f64 {
        let smax = self.singular_values().first().copied().unwrap_or(0.0);
        self.matrix.ncols() as f64 * smax * 1e-12
    }

    pub fn rank(&self) -> usize {
        let thr = self.rank_threshold();
        self.singular_values().iter().filter(|&&s| s > thr).count()
    }

    /// Moore-Penrose solution `T^# r` using the identifiability rank cutoff.
    pub fn pseudo_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let svd = SVD::new(self.matrix.clone(), true, true);
        let thr = self.rank_threshold();
        let u = svd.u.as_ref().expect("U requested");
        let vt = svd.v_t.as_ref().expect("V^T requested");
        let r = nalgebra::DVector::from_column_slice(rhs);
        let mut coef = u.transpose() * r;
        for (ci, &s) in coef.iter_mut().zip(svd.singular_values.iter()) {
            *ci = if s > thr { *ci / s } else { 0.0 };
        }
        (vt.transpose() * coef).iter().copied().collect()
    }
}

/// `T_{(j,k), ℓ} = tr(B_jk Q_ℓ)`, evaluated through the product structure
/// `tr((A ⊗ C)(σ_a ⊗ σ_b)) = tr(A σ_a) tr(C σ_b)`.
pub fn build_t(setting: &ExperimentSetting) -> DesignMatrix {
    let d = setting.dim;
    let n = d * d;
    let basis = linalg::HermitianBasis::new(d);
    let shift = identity(d).scale(1.0 / d as f64);
    let rows = setting.num_pairs();
    let mut matrix = DMatrix::<f64>::zeros(rows, n * n - n);
    let mut offsets = Vec::with_capacity(rows);
    for (j, p) in setting.projectors.iter().enumerate() {
        let centered = p - &shift;
        let left = basis.coordinates(&centered);
        let offset = trace(p).re / d as f64;
        for (k, rho) in setting.states.iter().enumerate() {
            // tr(ρᵀ σ) = tr(ρ σᵀ)
            let right: Vec<f64> = basis
                .elements()
                .iter()
                .map(|s| trace_product(&rho.transpose(), s).re)
                .collect();
            let row = j * setting.num_states() + k;
            for a in 1..n {
                for b in 0..n {
                    matrix[(row, (a - 1) * n + b)] = left[a] * right[b];
                }
            }
            offsets.push(offset);
        }
    }
    DesignMatrix {
        num_projectors: setting.num_projectors(),
        num_states: setting.num_states(),
        matrix,
        offsets,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Identifiability {
    pub identifiable: bool,
    pub rank: usize,
    pub required: usize,
    pub deficiency: usize,
}

pub fn check_identifiable(setting: &ExperimentSetting) -> Identifiability {
    let t = build_t(setting);
    let rank = t.rank();
    let required = t.matrix.ncols();
    Identifiability {
        identifiable: rank == required,
        rank,
        required,
        deficiency: required - rank,
    }
}

fn haar_vector(d: usize, rng: &mut ChaCha8Rng) -> CVector {
    CVector::from_fn(d, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(re, im)
    })
}

/// Haar-random pure states and rank-1 projectors, resampled as a whole
/// until the setting is identifiable.
pub fn random_setting(
    d: usize,
    num_projectors: usize,
    num_states: usize,
    seed: u64,
    max_attempts: usize,
) -> Result<ExperimentSetting> {
    if num_projectors < d * d - 1 || num_states < d * d {
        return Err(Error::Invalid(format!(
            "need M >= {} and L >= {}, got M = {num_projectors}, L = {num_states}",
            d * d - 1,
            d * d
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_attempts {
        let states = (0..num_states)
            .map(|_| linalg::symmetrize(&projector_from_vector(&haar_vector(d, &mut rng))))
            .collect();
        let projectors = (0..num_projectors)
            .map(|_| linalg::symmetrize(&projector_from_vector(&haar_vector(d, &mut rng))))
            .collect();
        let setting = ExperimentSetting::new(d, states, projectors)?;
        if check_identifiable(&setting).identifiable {
            return Ok(setting);
        }
    }
    Err(Error::SettingSearchExhausted(max_attempts))
}

/// Counts `c_jk` out of `N` trials per pair, in row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    num_projectors: usize,
    num_states: usize,
    repetitions: u64,
    counts: Vec<u64>,
}

impl Dataset {
    pub fn new(num_projectors: usize, num_states: usize, repetitions: u64, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_projectors * num_states {
            return Err(dims_err(num_projectors * num_states, counts.len()));
        }
        if repetitions == 0 {
            return Err(Error::Invalid("N must be positive".into()));
        }
        if let Some(&bad) = counts.iter().find(|&&c| c > repetitions) {
            return Err(Error::Invalid(format!("count {bad} exceeds N = {repetitions}")));
        }
        Ok(Self {
            num_projectors,
            num_states,
            repetitions,
            counts,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn repetitions(&self) -> u64 {
        self.repetitions
    }

    pub fn num_projectors(&self) -> usize {
        self.num_projectors
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn count(&self, j: usize, k: usize) -> u64 {
        self.counts[j * self.num_states + k]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,k,count,N\n");
        for j in 0..self.num_projectors {
            for k in 0..self.num_states {
                out.push_str(&format!("{j},{k},{},{}\n", self.count(j, k), self.repetitions));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "j,k,count,N" => {}
            other => return Err(Error::Invalid(format!("bad dataset header {other:?}"))),
        }
        let mut rows = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Invalid(format!("bad dataset row {line:?}")));
            }
            let parse = |s: &str| {
                s.parse::<u64>()
                    .map_err(|e| Error::Invalid(format!("bad integer {s:?}: {e}")))
            };
            rows.push((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?, parse(fields[3])?));
        }
        let num_projectors = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1) as usize;
        let num_states = rows.iter().map(|r| r.1).max().map_or(0, |m| m + 1) as usize;
        let repetitions = rows.first().map_or(0, |r| r.3);
        for (idx, r) in rows.iter().enumerate() {
            let expected = ((idx / num_states) as u64, (idx % num_states) as u64);
            if (r.0, r.1) != expected || r.3 != repetitions {
                return Err(Error::Invalid(format!(
                    "dataset rows must be in (j,k) order with a common N; row {idx} is {r:?}"
                )));
            }
        }
        Self::new(
            num_projectors,
            num_states,
            repetitions,
            rows.into_iter().map(|r| r.2).collect(),
        )
    }
}

/// Exact outcome probabilities `tr(χ (Π_j ⊗ ρ_kᵀ))` in row order.
pub fn exact_probabilities(chi: &ChiMatrix, setting: &ExperimentSetting) -> Result<Vec<f64>> {
    if chi.dim() != setting.dim {
        return Err(dims_err(setting.dim, chi.dim()));
    }
    let mut out = Vec::with_capacity(setting.num_pairs());
    for p in &setting.projectors {
        for rho in &setting.states {
            out.push(outcome_probability(chi, p, rho)?);
        }
    }
    Ok(out)
}

/// Inverse-transform binomial draw from the CDF.
fn binomial_inverse_transform(n: u64, p: f64, u: f64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let dist = Binomial::new(p, n).expect("0 < p < 1");
    let (mut lo, mut hi) = (0u64, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if dist.cdf(mid) >= u {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Generator for pair `row`: a ChaCha stream keyed by `(seed, row)`.
fn pair_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// Independent `Binomial(N, p_jk)` draws; each pair has its own stream.
pub fn simulate_counts(
    chi: &ChiMatrix,
    setting: &ExperimentSetting,
    repetitions: u64,
    seed: u64,
) -> Result<Dataset> {
    let probs = exact_probabilities(chi, setting)?;
    let counts = probs
        .iter()
        .enumerate()
        .map(|(row, &p)| {
            let u: f64 = pair_rng(seed, row).random();
            binomial_inverse_transform(repetitions, p, u)
        })
        .collect();
    Dataset::new(setting.num_projectors(), setting.num_states(), repetitions, counts)
}

/// `f = c / N`, optionally clamped into `[1/(2N), 1 - 1/(2N)]`.
pub fn frequencies(dataset: &Dataset, clamp: bool) -> Vec<f64> {
    let n = dataset.repetitions as f64;
    let floor = 0.5 / n;
    dataset
        .counts
        .iter()
        .map(|&c| {
            let f = c as f64 / n;
            if clamp {
                f.clamp(floor, 1.0 - floor)
            } else {
                f
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SettingFile {
    pub d: usize,
    pub states: Vec<MatrixFile>,
    pub projectors: Vec<MatrixFile>,
}

impl SettingFile {
    pub fn from_setting(setting: &ExperimentSetting) -> Self {
        let conv = |m: &CMatrix| {
            let (re, im) = split_matrix(m);
            MatrixFile { re, im }
        };
        Self {
            d: setting.dim,
            states: setting.states.iter().map(conv).collect(),
            projectors: setting.projectors.iter().map(conv).collect(),
        }
    }

    pub fn to_setting(&self) -> Result<ExperimentSetting> {
        let conv = |m: &MatrixFile| join_matrix(&m.re, &m.im);
        let states = self.states.iter().map(conv).collect::<Result<Vec<_>>>()?;
        let projectors = self.projectors.iter().map(conv).collect::<Result<Vec<_>>>()?;
        ExperimentSetting::new(self.d, states, projectors)
    }
}

pub fn setting_to_json(setting: &ExperimentSetting) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SettingFile::from_setting(setting))?)
}

pub fn setting_from_json(s: &str) -> Result<ExperimentSetting> {
    serde_json::from_str::<SettingFile>(s)?.to_setting()
}

/// Coefficients `tr((σ_0 ⊗ σ_b) B)` of a matrix along the non-TP directions.
pub fn non_tp_coefficients(param: &TpParametrization, b: &CMatrix) -> Vec<f64> {
    let basis = param.basis();
    basis
        .elements()
        .iter()
        .map(|s| trace_product(&kron(basis.get(0), s), b).norm())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{amplitude_damping_chi, random_cptp};
    use crate::linalg::{from_real_rows, max_abs};

    #[test]
    fn minimal_setting_shape_and_states() {
        let s = minimal_qubit_setting();
        assert_eq!((s.num_projectors(), s.num_states()), (3, 4));
        let up = from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let down = from_real_rows(&[&[0.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(s.states()[2], up);
        assert_eq!(s.states()[3], down);
        assert!(check_identifiable(&s).identifiable);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let mixed = identity(2).scale(0.5);
        assert!(matches!(
            ExperimentSetting::new(2, vec![mixed], vec![identity(2)]),
            Err(Error::NotPureState(_))
        ));
        let up = from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let not_proj = from_real_rows(&[&[0.5, 0.0], &[0.0, 0.0]]);
        assert!(matches!(
            ExperimentSetting::new(2, vec![up], vec![not_proj]),
            Err(Error::NotProjector(_))
        ));
    }

    #[test]
    fn b_for_ground_state_pair() {
        let up = from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let s = ExperimentSetting::new(2, vec![up.clone()], vec![up]).unwrap();
        let b = &build_b(&s)[0];
        let expected = from_real_rows(&[
            &[0.5, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, -0.5, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
        ]);
        assert!(max_abs(&(b - expected)) < 1e-15);
    }

    #[test]
    fn b_traces_and_zerotrace_identity() {
        let s = minimal_qubit_setting();
        let param = TpParametrization::new(2);
        let bs = build_b(&s);
        let mut idx = 0;
        for p in s.projectors() {
            for rho in s.states() {
                let b = &bs[idx];
                assert!(trace(b).norm() < 1e-12);
                assert!(linalg::is_hermitian(b, 1e-15));
                let full = kron(p, &rho.transpose());
                for q in param.operators() {
                    let lhs = trace_product(q, &full);
                    let rhs = trace_product(q, b);
                    assert!((lhs - rhs).norm() < 1e-12);
                }
                assert!(non_tp_coefficients(&param, b).iter().all(|&x| x <= 1e-12));
                idx += 1;
            }
        }
    }

    #[test]
    fn t_matches_direct_traces_of_b() {
        let s = random_setting(2, 4, 5, 3, DEFAULT_MAX_ATTEMPTS).unwrap();
        let t = build_t(&s);
        let param = TpParametrization::new(2);
        for (row, b) in build_b(&s).iter().enumerate() {
            for (l, q) in param.operators().iter().enumerate() {
                let direct = trace_product(b, q);
                assert!(direct.im.abs() < 1e-10);
                assert!((direct.re - t.matrix()[(row, l)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn t_reproduces_probabilities() {
        let s = minimal_qubit_setting();
        let t = build_t(&s);
        assert_eq!(t.matrix().shape(), (12, 12));
        assert_eq!(t.rank(), 12);
        let param = TpParametrization::new(2);
        let theta: Vec<f64> = (0..12).map(|i| 0.03 * (i as f64 - 5.5)).collect();
        let chi = param.chi_matrix(&theta);
        let g = t.probabilities(&theta);
        let mut row = 0;
        for p in s.projectors() {
            for rho in s.states() {
                let direct = trace_product(&chi, &kron(p, &rho.transpose())).re;
                assert!((direct - g[row]).abs() < 1e-12);
                assert!((t.offsets()[row] - 0.5).abs() < 1e-15);
                row += 1;
            }
        }
    }

    #[test]
    fn two_projector_setting_is_rank_deficient() {
        let s = minimal_qubit_setting().without_projector(2).unwrap();
        let t = build_t(&s);
        assert_eq!(t.matrix().shape(), (8, 12));
        assert!(t.rank() < 12);
    }

    #[test]
    fn identifiability_examples() {
        let s = minimal_qubit_setting();
        let id = check_identifiable(&s);
        assert_eq!((id.rank, id.required, id.deficiency), (12, 12, 0));
        let without_y = s.without_state(1).unwrap();
        assert!(!check_identifiable(&without_y).identifiable);
        // Four projectors spanning all observables, three states.
        let [id2, x, y, z] = pauli_matrices();
        let half = |p: &CMatrix| (&id2 + p).scale(0.5);
        let swapped = ExperimentSetting::new(
            2,
            vec![half(&x), half(&y), half(&z)],
            vec![half(&x), half(&y), half(&z), (&id2 - &z).scale(0.5)],
        )
        .unwrap();
        let r = check_identifiable(&swapped);
        assert!(!r.identifiable);
        assert!(r.deficiency > 0);
    }

    #[test]
    fn random_setting_contract() {
        let a = random_setting(2, 3, 4, 11, DEFAULT_MAX_ATTEMPTS).unwrap();
        assert!(check_identifiable(&a).identifiable);
        let b = random_setting(2, 3, 4, 11, DEFAULT_MAX_ATTEMPTS).unwrap();
        assert_eq!(a, b);
        let rich = random_setting(2, 6, 8, 5, DEFAULT_MAX_ATTEMPTS).unwrap();
        assert_eq!(build_t(&rich).rank(), 12);
        assert!(random_setting(2, 2, 4, 0, 10).is_err());
        assert!(matches!(
            random_setting(2, 3, 4, 0, 0),
            Err(Error::SettingSearchExhausted(0))
        ));
    }

    #[test]
    fn pseudo_solve_inverts_square_t() {
        let t = build_t(&minimal_qubit_setting());
        let theta: Vec<f64> = (0..12).map(|i| (i as f64).sin() * 0.1).collect();
        let g = t.probabilities(&theta);
        let r: Vec<f64> = g.iter().zip(t.offsets()).map(|(a, b)| a - b).collect();
        let back = t.pseudo_solve(&r);
        for (a, b) in back.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn simulate_identity_channel_is_deterministic() {
        let up = from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let s = ExperimentSetting::new(2, vec![up.clone()], vec![up]).unwrap();
        let chi = ChiMatrix::identity_channel(2);
        for n in [1, 17, 1000] {
            assert_eq!(simulate_counts(&chi, &s, n, 5).unwrap().counts(), &[n]);
        }
    }

    #[test]
    fn simulate_depolarizing_within_bounds() {
        let s = minimal_qubit_setting();
        let n = 100_000;
        let data = simulate_counts(&ChiMatrix::depolarizing(2), &s, n, 2024).unwrap();
        let bound = 4.0 * (0.25 / n as f64).sqrt();
        for &c in data.counts() {
            assert!((c as f64 / n as f64 - 0.5).abs() <= bound);
        }
        let again = simulate_counts(&ChiMatrix::depolarizing(2), &s, n, 2024).unwrap();
        assert_eq!(data, again);
        let other = simulate_counts(&ChiMatrix::depolarizing(2), &s, n, 2025).unwrap();
        assert_ne!(data, other);
    }

    #[test]
    fn pair_streams_are_independent_of_setting_size() {
        // Row r draws the same uniform regardless of how many rows exist.
        let s = minimal_qubit_setting();
        let small = s.without_projector(2).unwrap();
        let (_, chi) = random_cptp(2, 4, 1).unwrap();
        let a = simulate_counts(&chi, &s, 500, 9).unwrap();
        let b = simulate_counts(&chi, &small, 500, 9).unwrap();
        assert_eq!(&a.counts()[..8], b.counts());
    }

    #[test]
    fn inverse_transform_edges() {
        assert_eq!(binomial_inverse_transform(10, 0.0, 0.7), 0);
        assert_eq!(binomial_inverse_transform(10, 1.0, 0.1), 10);
        assert_eq!(binomial_inverse_transform(10, 0.5, 0.0), 0);
        assert_eq!(binomial_inverse_transform(10, 0.5, 0.9999999), 10);
        // median of Binomial(10, 0.5)
        assert_eq!(binomial_inverse_transform(10, 0.5, 0.5), 5);
    }

    #[test]
    fn frequency_clamping() {
        let d = Dataset::new(1, 3, 100, vec![0, 50, 100]).unwrap();
        assert_eq!(frequencies(&d, true), vec![0.005, 0.5, 0.995]);
        assert_eq!(frequencies(&d, false), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn dataset_validation_and_csv() {
        assert!(Dataset::new(1, 2, 10, vec![3, 11]).is_err());
        assert!(Dataset::new(1, 2, 10, vec![3]).is_err());
        let d = Dataset::new(2, 2, 10, vec![1, 2, 3, 4]).unwrap();
        let csv = d.to_csv();
        assert!(csv.starts_with("j,k,count,N\n0,0,1,10\n0,1,2,10\n1,0,3,10\n"));
        assert_eq!(Dataset::from_csv(&csv).unwrap(), d);
        assert!(Dataset::from_csv("j,k,count,N\n0,1,2,10\n0,0,1,10\n").is_err());
        assert!(Dataset::from_csv("a,b\n").is_err());
    }

    #[test]
    fn setting_json_roundtrip() {
        let s = random_setting(2, 3, 4, 8, DEFAULT_MAX_ATTEMPTS).unwrap();
        let back = setting_from_json(&setting_to_json(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let mut file = SettingFile::from_setting(&s);
        file.projectors[0].re[0][0] += 0.1;
        assert!(file.to_setting().is_err());
    }

    #[test]
    fn exact_probabilities_amplitude_damping() {
        let p = exact_probabilities(&amplitude_damping_chi(), &minimal_qubit_setting()).unwrap();
        // Π_z (row j=2) on |0⟩ (k=2).
        assert!((p[2 * 4 + 2] - 0.95).abs() < 1e-12);
    }
}
