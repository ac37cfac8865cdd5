//! Finite-dimensional Hilbert-space primitives.
//!
//! States are normalized complex vectors. A [`QuantitySet`] is a family of
//! pairwise-commuting Hermitian operators together with a common eigenbasis
//! `V` and the table of joint eigenvalues `alpha[k][p]` (eigenvalue of
//! operator `p` on joint eigenvector `k`). Everything downstream works in that
//! joint basis, where the quantities are diagonal.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Numerical tolerances used when validating operators and states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Max entry of `A - A^dagger`.
    pub hermitian: f64,
    /// Max entry of `[A_p, A_q]`.
    pub commutator: f64,
    /// Max off-diagonal entry of `V^dagger A_p V`.
    pub diagonal: f64,
    /// Allowed deviation of `|psi|^2` from one.
    pub normalization: f64,
    /// Imaginary residue of an expectation value that is treated as corruption.
    pub expectation_imag: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermitian: 1e-10,
            commutator: 1e-10,
            diagonal: 1e-9,
            normalization: 1e-12,
            expectation_imag: 1e-8,
        }
    }
}

/// Options for simultaneous diagonalization.
#[derive(Debug, Clone, Copy)]
pub struct JointOptions {
    pub tolerances: Tolerances,
    /// Seed for the random real coefficients of the linear combination.
    pub seed: u64,
}

impl Default for JointOptions {
    fn default() -> Self {
        JointOptions { tolerances: Tolerances::default(), seed: 0x0005_eed0_fa11 }
    }
}

/// A normalized state vector of dimension `d >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    /// Normalizes `amplitudes` and wraps them.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::InvalidState(format!(
                "dimension must be at least 2, got {}",
                amplitudes.len()
            )));
        }
        if amplitudes.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        let norm_sq: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if !(norm_sq > 0.0) || !norm_sq.is_finite() {
            return Err(Error::InvalidState("zero norm".into()));
        }
        let scale = 1.0 / norm_sq.sqrt();
        Ok(StateVector { amplitudes: CVector::from_iterator(amplitudes.len(), amplitudes.into_iter().map(|c| c * scale)) })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Computational basis vector `|k>`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::DimensionMismatch { expected: dim, found: k + 1 });
        }
        let mut v = vec![ZERO; dim];
        v[k] = ONE;
        Self::new(v)
    }

    /// Renormalizes in place-free fashion; the caller guarantees a sane, nonzero vector.
    pub(crate) fn from_vec_normalizing(v: CVector) -> Self {
        let n = v.norm();
        StateVector { amplitudes: v.unscale(n) }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm_sqr()
    }

    /// `|psi><psi|`.
    pub fn projector(&self) -> CMatrix {
        &self.amplitudes * self.amplitudes.adjoint()
    }
}

#[derive(Debug, Clone)]
enum Representation {
    /// Operators given as dense matrices, diagonalized by `basis`.
    Dense { operators: Vec<CMatrix>, basis: CMatrix },
    /// Operators diagonal in the computational basis; only the table is stored.
    Diagonal,
}

/// A validated family of commuting Hermitian operators with their joint eigenstructure.
#[derive(Debug, Clone)]
pub struct QuantitySet {
    dim: usize,
    count: usize,
    /// Row-major `dim x count` joint eigenvalue table.
    table: Vec<f64>,
    repr: Representation,
}

/// Validates a list of operators and computes their joint eigendecomposition.
pub fn validate_quantity_set(operators: Vec<CMatrix>) -> Result<QuantitySet> {
    QuantitySet::validate(operators)
}

impl QuantitySet {
    pub fn validate(operators: Vec<CMatrix>) -> Result<Self> {
        Self::validate_with(operators, &JointOptions::default())
    }

    pub fn validate_with(operators: Vec<CMatrix>, opts: &JointOptions) -> Result<Self> {
        let Some(first) = operators.first() else {
            return Err(Error::param("quantities", "must contain at least one operator"));
        };
        let dim = first.nrows();
        for op in &operators {
            if op.nrows() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: op.nrows() });
            }
            if op.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: op.ncols() });
            }
        }
        if dim < 2 {
            return Err(Error::InvalidState(format!("dimension must be at least 2, got {dim}")));
        }
        let tol = &opts.tolerances;
        for (index, op) in operators.iter().enumerate() {
            if op.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::param("quantities", format!("operator {index} has non-finite entries")));
            }
            let deviation = max_abs_entry(&(op - op.adjoint()));
            if deviation > tol.hermitian {
                return Err(Error::NonHermitian { index, deviation });
            }
        }
        for p in 0..operators.len() {
            for q in p + 1..operators.len() {
                let c = &operators[p] * &operators[q] - &operators[q] * &operators[p];
                let norm = max_abs_entry(&c);
                if norm > tol.commutator {
                    return Err(Error::NonCommuting { p, q, norm });
                }
            }
        }

        let count = operators.len();
        if operators.iter().all(|op| max_off_diagonal(op) == 0.0) {
            let mut table = vec![0.0; dim * count];
            for (p, op) in operators.iter().enumerate() {
                for k in 0..dim {
                    table[k * count + p] = op[(k, k)].re;
                }
            }
            return Ok(QuantitySet { dim, count, table, repr: Representation::Diagonal });
        }

        let basis = joint_eigenbasis(&operators, opts)?;
        let mut table = vec![0.0; dim * count];
        for (p, op) in operators.iter().enumerate() {
            let rotated = basis.adjoint() * op * &basis;
            let residue = max_off_diagonal(&rotated);
            if residue > tol.diagonal {
                return Err(Error::DiagonalizationFailed { index: p, residue });
            }
            for k in 0..dim {
                table[k * count + p] = rotated[(k, k)].re;
            }
        }
        Ok(QuantitySet { dim, count, table, repr: Representation::Dense { operators, basis } })
    }

    /// Builds a set of operators that are diagonal in the computational basis.
    /// `diagonals[p][k]` is the eigenvalue of operator `p` on basis vector `k`.
    pub fn from_diagonals(diagonals: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = diagonals.first() else {
            return Err(Error::param("quantities", "must contain at least one operator"));
        };
        let dim = first.len();
        if dim < 2 {
            return Err(Error::InvalidState(format!("dimension must be at least 2, got {dim}")));
        }
        let count = diagonals.len();
        let mut table = vec![0.0; dim * count];
        for (p, diag) in diagonals.iter().enumerate() {
            if diag.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: diag.len() });
            }
            if diag.iter().any(|x| !x.is_finite()) {
                return Err(Error::param("quantities", format!("operator {p} has non-finite entries")));
            }
            for k in 0..dim {
                table[k * count + p] = diag[k];
            }
        }
        Ok(QuantitySet { dim, count, table, repr: Representation::Diagonal })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of quantities `K`.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Whether the joint eigenbasis is the computational basis.
    pub fn is_diagonal(&self) -> bool {
        matches!(self.repr, Representation::Diagonal)
    }

    /// Eigenvalue of quantity `p` on joint eigenvector `k`.
    pub fn eigenvalue(&self, k: usize, p: usize) -> f64 {
        self.table[k * self.count + p]
    }

    /// Row `k` of the eigenvalue table.
    pub fn eigenvalue_row(&self, k: usize) -> &[f64] {
        &self.table[k * self.count..(k + 1) * self.count]
    }

    /// The full row-major `d x K` eigenvalue table.
    pub fn eigenvalue_table(&self) -> &[f64] {
        &self.table
    }

    /// Column `p` of the eigenvalue table.
    pub fn eigenvalue_column(&self, p: usize) -> Vec<f64> {
        (0..self.dim).map(|k| self.eigenvalue(k, p)).collect()
    }

    /// The unitary `V` whose columns are the joint eigenvectors.
    pub fn basis(&self) -> CMatrix {
        match &self.repr {
            Representation::Dense { basis, .. } => basis.clone(),
            Representation::Diagonal => CMatrix::identity(self.dim, self.dim),
        }
    }

    /// Operator `p` as a dense matrix.
    pub fn operator(&self, p: usize) -> CMatrix {
        match &self.repr {
            Representation::Dense { operators, .. } => operators[p].clone(),
            Representation::Diagonal => {
                CMatrix::from_diagonal(&CVector::from_iterator(self.dim, (0..self.dim).map(|k| C64::new(self.eigenvalue(k, p), 0.0))))
            }
        }
    }

    /// `V diag(alpha[., p]) V^dagger`.
    pub fn reconstruct(&self, p: usize) -> CMatrix {
        let diag = CMatrix::from_diagonal(&CVector::from_iterator(
            self.dim,
            (0..self.dim).map(|k| C64::new(self.eigenvalue(k, p), 0.0)),
        ));
        self.matrix_from_joint(&diag)
    }

    /// Coefficients of `psi` in the joint eigenbasis, `V^dagger psi`.
    pub fn to_joint(&self, psi: &StateVector) -> Result<Vec<C64>> {
        self.check_dim(psi.dim())?;
        Ok(match &self.repr {
            Representation::Dense { basis, .. } => (basis.adjoint() * psi.amplitudes()).iter().copied().collect(),
            Representation::Diagonal => psi.amplitudes().iter().copied().collect(),
        })
    }

    /// Inverse of [`to_joint`](Self::to_joint); renormalizes.
    pub fn from_joint(&self, coefficients: &[C64]) -> StateVector {
        let v = CVector::from_column_slice(coefficients);
        let v = match &self.repr {
            Representation::Dense { basis, .. } => basis * v,
            Representation::Diagonal => v,
        };
        StateVector::from_vec_normalizing(v)
    }

    /// `V^dagger M V`.
    pub fn matrix_to_joint(&self, m: &CMatrix) -> CMatrix {
        match &self.repr {
            Representation::Dense { basis, .. } => basis.adjoint() * m * basis,
            Representation::Diagonal => m.clone(),
        }
    }

    /// `V M V^dagger`.
    pub fn matrix_from_joint(&self, m: &CMatrix) -> CMatrix {
        match &self.repr {
            Representation::Dense { basis, .. } => basis * m * basis.adjoint(),
            Representation::Diagonal => m.clone(),
        }
    }

    /// Squared distance `sum_p (alpha[k,p] - alpha[l,p])^2` between two joint eigenvalue rows.
    pub fn row_distance_sq(&self, k: usize, l: usize) -> f64 {
        self.eigenvalue_row(k).iter().zip(self.eigenvalue_row(l)).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Groups joint eigenvectors with identical eigenvalue rows. Returns the class
    /// index of each eigenvector; classes are numbered by first appearance.
    pub fn outcome_classes(&self, tol: f64) -> Vec<usize> {
        let mut reps: Vec<usize> = Vec::new();
        let mut classes = Vec::with_capacity(self.dim);
        for k in 0..self.dim {
            match reps.iter().position(|&r| self.row_distance_sq(k, r).sqrt() <= tol) {
                Some(c) => classes.push(c),
                None => {
                    classes.push(reps.len());
                    reps.push(k);
                }
            }
        }
        classes
    }

    pub(crate) fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found });
        }
        Ok(())
    }

    pub(crate) fn check_index(&self, p: usize) -> Result<()> {
        if p >= self.count {
            return Err(Error::DimensionMismatch { expected: self.count, found: p + 1 });
        }
        Ok(())
    }
}

/// `<psi|A_p|psi>`.
pub fn expectation(psi: &StateVector, a: &QuantitySet, p: usize) -> Result<f64> {
    a.check_dim(psi.dim())?;
    a.check_index(p)?;
    match &a.repr {
        Representation::Diagonal => {
            Ok(psi.amplitudes().iter().enumerate().map(|(k, c)| c.norm_sqr() * a.eigenvalue(k, p)).sum())
        }
        Representation::Dense { operators, .. } => {
            let v = psi.amplitudes().dotc(&(&operators[p] * psi.amplitudes()));
            real_part(v)
        }
    }
}

/// `<A_p A_q> - <A_p><A_q>`.
pub fn quantum_covariance(psi: &StateVector, a: &QuantitySet, p: usize, q: usize) -> Result<f64> {
    a.check_dim(psi.dim())?;
    a.check_index(p)?;
    a.check_index(q)?;
    let second = match &a.repr {
        Representation::Diagonal => psi
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(k, c)| c.norm_sqr() * a.eigenvalue(k, p) * a.eigenvalue(k, q))
            .sum(),
        Representation::Dense { operators, .. } => {
            let ap = &operators[p] * psi.amplitudes();
            let aq = &operators[q] * psi.amplitudes();
            real_part(ap.dotc(&aq))?
        }
    };
    Ok(second - expectation(psi, a, p)? * expectation(psi, a, q)?)
}

/// `w_k = |<alpha_k|psi>|^2` in joint-basis order.
pub fn born_weights(psi: &StateVector, a: &QuantitySet) -> Result<Vec<f64>> {
    Ok(a.to_joint(psi)?.iter().map(|c| c.norm_sqr()).collect())
}

fn real_part(v: C64) -> Result<f64> {
    let tol = Tolerances::default().expectation_imag;
    if v.im.abs() > tol {
        return Err(Error::NonRealExpectation { imag: v.im });
    }
    Ok(v.re)
}

/// A Hermitian Hamiltonian with its own value of hbar.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    matrix: CMatrix,
    hbar: f64,
}

impl Hamiltonian {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_hbar(matrix, 1.0)
    }

    pub fn with_hbar(matrix: CMatrix, hbar: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::param("hbar", "must be > 0"));
        }
        if matrix.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::param("hamiltonian", "has non-finite entries"));
        }
        let deviation = max_abs_entry(&(&matrix - matrix.adjoint()));
        if deviation > Tolerances::default().hermitian {
            return Err(Error::NonHermitian { index: 0, deviation });
        }
        Ok(Hamiltonian { matrix, hbar })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Exact unitary propagation `exp(-i H t / hbar)` through an eigendecomposition of `H`.
#[derive(Debug, Clone)]
pub struct Propagator {
    vectors: CMatrix,
    /// Eigenvalues divided by hbar.
    frequencies: Vec<f64>,
}

impl Propagator {
    /// `h` must already be expressed in the basis the propagated vectors live in.
    pub fn new(h: &CMatrix, hbar: f64) -> Self {
        let herm = (h + h.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        Propagator { vectors: eig.eigenvectors, frequencies: eig.eigenvalues.iter().map(|e| e / hbar).collect() }
    }

    pub fn unitary(&self, t: f64) -> CMatrix {
        let phases = CVector::from_iterator(self.frequencies.len(), self.frequencies.iter().map(|w| C64::from_polar(1.0, -w * t)));
        &self.vectors * CMatrix::from_diagonal(&phases) * self.vectors.adjoint()
    }

    /// Applies `exp(-i H t / hbar)` to `v` in place.
    pub fn evolve(&self, v: &mut [C64], t: f64, scratch: &mut Vec<C64>) {
        let d = v.len();
        scratch.clear();
        scratch.resize(d, ZERO);
        // scratch = W^dagger v
        for (j, s) in scratch.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (i, x) in v.iter().enumerate() {
                acc += self.vectors[(i, j)].conj() * x;
            }
            *s = acc * C64::from_polar(1.0, -self.frequencies[j] * t);
        }
        for (i, out) in v.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (j, s) in scratch.iter().enumerate() {
                acc += self.vectors[(i, j)] * s;
            }
            *out = acc;
        }
    }
}

pub(crate) fn max_abs_entry(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, c| acc.max(c.norm()))
}

fn max_off_diagonal(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    worst
}

/// Simultaneous eigenbasis of commuting Hermitian matrices: diagonalize a random
/// real combination, then re-diagonalize each operator inside the degenerate blocks.
fn joint_eigenbasis(operators: &[CMatrix], opts: &JointOptions) -> Result<CMatrix> {
    let dim = operators[0].nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut combo = CMatrix::zeros(dim, dim);
    for op in operators {
        let size = max_abs_entry(op).max(f64::MIN_POSITIVE);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let c: f64 = sign * rng.random_range(0.5..1.5) / size;
        combo += op * C64::new(c, 0.0);
    }
    let (mut basis, values) = sorted_eigen(&combo);
    let cluster_tol = 1e-8 * values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let mut blocks = split_blocks(&values, 0, cluster_tol);

    for op in operators {
        let op_scale = max_abs_entry(op).max(1.0);
        let mut next = Vec::new();
        for (start, len) in blocks {
            if len == 1 {
                next.push((start, 1));
                continue;
            }
            let sub = basis.columns(start, len).into_owned();
            let projected = sub.adjoint() * op * &sub;
            let (w, sub_values) = sorted_eigen(&projected);
            let rotated = sub * w;
            basis.columns_mut(start, len).copy_from(&rotated);
            next.extend(split_blocks(&sub_values, start, 1e-8 * op_scale));
        }
        blocks = next;
    }
    Ok(canonical_order(basis))
}

fn sorted_eigen(m: &CMatrix) -> (CMatrix, Vec<f64>) {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vectors, order.iter().map(|&i| eig.eigenvalues[i]).collect())
}

fn split_blocks(sorted: &[f64], offset: usize, tol: f64) -> Vec<(usize, usize)> {
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i] - sorted[i - 1] > tol {
            blocks.push((offset + start, i - start));
            start = i;
        }
    }
    blocks
}

/// Orders columns by the index of their dominant component and makes that component
/// real and positive, so already-diagonal inputs yield the identity.
fn canonical_order(basis: CMatrix) -> CMatrix {
    let n = basis.ncols();
    let dominant: Vec<usize> = (0..n)
        .map(|j| {
            let col = basis.column(j);
            let mut best = 0;
            for i in 1..col.len() {
                if col[i].norm() > col[best].norm() + 1e-12 {
                    best = i;
                }
            }
            best
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| dominant[j]);
    let mut out = CMatrix::zeros(basis.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        let pivot = basis[(dominant[src], src)];
        let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { ONE };
        out.set_column(dst, &(basis.column(src) * phase));
    }
    out
}
