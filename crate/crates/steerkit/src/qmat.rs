//! Dense complex linear algebra over multipartite Hilbert spaces.
//!
//! Operators and state vectors carry their subsystem dimension list, so tensor
//! products, partial traces, partial transposes, subsystem permutations and
//! Schmidt decompositions can all be expressed against party indices instead
//! of raw matrix coordinates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, SteerkitError};

/// Default tolerance for Hermiticity and PSD checks (max-norm / min eigenvalue).
pub const DEFAULT_TOL: f64 = 1e-8;

/// Schmidt coefficients below this are truncated; defines the Schmidt rank.
pub const SCHMIDT_TRUNCATION: f64 = 1e-10;

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

pub(crate) fn unravel(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
    out
}

pub(crate) fn ravel(multi: &[usize], strides: &[usize]) -> usize {
    multi.iter().zip(strides).map(|(i, s)| i * s).sum()
}

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// A dense Hermitian operator with subsystem dimension metadata.
///
/// Hermiticity is enforced at construction within a caller-overridable
/// tolerance, after which the stored data is symmetrised so downstream
/// eigensolves see an exactly Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    data: DMatrix<Complex64>,
    dims: Vec<usize>,
}

impl HermitianMatrix {
    pub fn new(data: DMatrix<Complex64>, dims: Vec<usize>) -> Result<Self> {
        Self::with_tol(data, dims, DEFAULT_TOL)
    }

    pub fn with_tol(data: DMatrix<Complex64>, dims: Vec<usize>, tol: f64) -> Result<Self> {
        let d: usize = dims.iter().product();
        if dims.is_empty() || data.nrows() != d || data.ncols() != d {
            return Err(SteerkitError::DimensionMismatch(format!(
                "matrix is {}x{}, product of dims {:?} is {}",
                data.nrows(),
                data.ncols(),
                dims,
                d
            )));
        }
        let residual = max_abs(&(&data - data.adjoint()));
        if residual > tol {
            return Err(SteerkitError::NotHermitian { residual, tol });
        }
        let sym = (&data + data.adjoint()) * Complex64::new(0.5, 0.0);
        Ok(Self { data: sym, dims })
    }

    pub fn identity(dims: Vec<usize>) -> Self {
        let d = dims.iter().product();
        Self {
            data: DMatrix::identity(d, d),
            dims,
        }
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let d = dims.iter().product();
        Self {
            data: DMatrix::zeros(d, d),
            dims,
        }
    }

    /// Total Hilbert space dimension.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    /// Reinterpret the same matrix with a different subsystem split.
    pub fn regroup(&self, dims: Vec<usize>) -> Result<Self> {
        if dims.iter().product::<usize>() != self.dim() || dims.is_empty() {
            return Err(SteerkitError::DimensionMismatch(format!(
                "cannot regroup dimension {} as {:?}",
                self.dim(),
                dims
            )));
        }
        Ok(Self {
            data: self.data.clone(),
            dims,
        })
    }

    pub fn trace(&self) -> f64 {
        self.data.trace().re
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            data: &self.data * Complex64::new(c, 0.0),
            dims: self.dims.clone(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(SteerkitError::DimensionMismatch(format!(
                "add: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Self {
            data: &self.data + &other.data,
            dims: self.dims.clone(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(self.add(&other.scale(-1.0))?)
    }

    /// Largest absolute entry of the element-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs(&(&self.data - &other.data))
    }

    pub fn max_abs_entry(&self) -> f64 {
        max_abs(&self.data)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = self.data.clone().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// Tensor product; output dims are the concatenation of the operands'.
    pub fn kron(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self {
            data: self.data.kronecker(&other.data),
            dims,
        }
    }

    /// Trace out the listed subsystems, keeping the rest in order.
    pub fn partial_trace(&self, traced: &[usize]) -> Result<Self> {
        let n = self.dims.len();
        for &t in traced {
            if t >= n {
                return Err(SteerkitError::IndexOutOfRange { index: t, count: n });
            }
        }
        let kept: Vec<usize> = (0..n).filter(|k| !traced.contains(k)).collect();
        if kept.is_empty() {
            return Err(SteerkitError::InvalidParameter(
                "partial_trace: cannot trace out every subsystem".into(),
            ));
        }
        let kept_dims: Vec<usize> = kept.iter().map(|&k| self.dims[k]).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&k| self.dims[k]).collect();
        let dk: usize = kept_dims.iter().product();
        let dt: usize = traced_dims.iter().product();
        let st = strides(&self.dims);
        let mut out = DMatrix::<Complex64>::zeros(dk, dk);
        for rk in 0..dk {
            let rks = unravel(rk, &kept_dims);
            for ck in 0..dk {
                let cks = unravel(ck, &kept_dims);
                let mut acc = Complex64::new(0.0, 0.0);
                for t in 0..dt {
                    let ts = unravel(t, &traced_dims);
                    let mut rfull = vec![0usize; n];
                    let mut cfull = vec![0usize; n];
                    for (pos, &k) in kept.iter().enumerate() {
                        rfull[k] = rks[pos];
                        cfull[k] = cks[pos];
                    }
                    for (pos, &k) in traced.iter().enumerate() {
                        rfull[k] = ts[pos];
                        cfull[k] = ts[pos];
                    }
                    acc += self.data[(ravel(&rfull, &st), ravel(&cfull, &st))];
                }
                out[(rk, ck)] = acc;
            }
        }
        Ok(Self {
            data: out,
            dims: kept_dims,
        })
    }

    /// Transpose one subsystem in place; an involution that preserves trace
    /// and Hermiticity.
    pub fn partial_transpose(&self, subsystem: usize) -> Result<Self> {
        let n = self.dims.len();
        if subsystem >= n {
            return Err(SteerkitError::IndexOutOfRange {
                index: subsystem,
                count: n,
            });
        }
        let st = strides(&self.dims);
        let d = self.dim();
        let mut out = DMatrix::<Complex64>::zeros(d, d);
        for r in 0..d {
            let mut rs = unravel(r, &self.dims);
            for c in 0..d {
                let mut cs = unravel(c, &self.dims);
                std::mem::swap(&mut rs[subsystem], &mut cs[subsystem]);
                out[(ravel(&rs, &st), ravel(&cs, &st))] = self.data[(r, c)];
                std::mem::swap(&mut rs[subsystem], &mut cs[subsystem]);
            }
        }
        Ok(Self {
            data: out,
            dims: self.dims.clone(),
        })
    }

    /// `V_π† M V_π` for the subsystem permutation `perm` (see
    /// [`permutation_unitary`]).
    pub fn permute_subsystems(&self, perm: &[usize]) -> Result<Self> {
        let v = permutation_unitary(&self.dims, perm)?;
        let data = v.adjoint() * &self.data * &v;
        let mut dims = self.dims.clone();
        for (j, &p) in perm.iter().enumerate() {
            dims[p] = self.dims[j];
        }
        Ok(Self { data, dims })
    }
}

impl Serialize for HermitianMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        j.try_into_matrix().map_err(D::Error::custom)
    }
}

/// JSON wire format: complex scalar as `[re, im]`, matrix as nested row-major
/// arrays under `{ "dims": [...], "data": [[...]] }`.
#[derive(Serialize, Deserialize)]
struct MatrixJson {
    dims: Vec<usize>,
    data: Vec<Vec<[f64; 2]>>,
}

impl From<&HermitianMatrix> for MatrixJson {
    fn from(m: &HermitianMatrix) -> Self {
        let d = m.dim();
        let data = (0..d)
            .map(|r| (0..d).map(|c| [m.data[(r, c)].re, m.data[(r, c)].im]).collect())
            .collect();
        MatrixJson {
            dims: m.dims.clone(),
            data,
        }
    }
}

impl MatrixJson {
    fn try_into_matrix(self) -> Result<HermitianMatrix> {
        let d: usize = self.dims.iter().product();
        if self.data.len() != d || self.data.iter().any(|row| row.len() != d) {
            return Err(SteerkitError::DimensionMismatch(
                "json matrix rows do not match dims".into(),
            ));
        }
        let mut m = DMatrix::<Complex64>::zeros(d, d);
        for (r, row) in self.data.iter().enumerate() {
            for (c, z) in row.iter().enumerate() {
                m[(r, c)] = Complex64::new(z[0], z[1]);
            }
        }
        HermitianMatrix::new(m, self.dims)
    }
}

/// A normalized pure state vector with subsystem dimension metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: DVector<Complex64>,
    dims: Vec<usize>,
}

impl PureState {
    pub fn new(amplitudes: DVector<Complex64>, dims: Vec<usize>) -> Result<Self> {
        Self::with_tol(amplitudes, dims, DEFAULT_TOL)
    }

    pub fn with_tol(amplitudes: DVector<Complex64>, dims: Vec<usize>, tol: f64) -> Result<Self> {
        let d: usize = dims.iter().product();
        if dims.is_empty() || amplitudes.len() != d {
            return Err(SteerkitError::DimensionMismatch(format!(
                "vector has {} entries, product of dims {:?} is {}",
                amplitudes.len(),
                dims,
                d
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > tol {
            return Err(SteerkitError::Validation(format!(
                "state norm {norm} deviates from 1 beyond tol {tol}"
            )));
        }
        Ok(Self { amplitudes, dims })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    /// Rank-one density operator |ψ⟩⟨ψ|.
    pub fn projector(&self) -> HermitianMatrix {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        HermitianMatrix {
            data: m,
            dims: self.dims.clone(),
        }
    }

    pub fn kron(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
            dims,
        }
    }

    /// |⟨self|other⟩|².
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm_sqr()
    }

    /// Reorder subsystems so that `order[k]` becomes the k-th subsystem.
    pub fn reorder_subsystems(&self, order: &[usize]) -> Result<Self> {
        let n = self.dims.len();
        let mut seen = vec![false; n];
        for &o in order {
            if o >= n {
                return Err(SteerkitError::IndexOutOfRange { index: o, count: n });
            }
            seen[o] = true;
        }
        if order.len() != n || seen.iter().any(|s| !s) {
            return Err(SteerkitError::InvalidParameter(
                "reorder_subsystems: not a permutation".into(),
            ));
        }
        let new_dims: Vec<usize> = order.iter().map(|&o| self.dims[o]).collect();
        let old_strides = strides(&self.dims);
        let mut out = DVector::<Complex64>::zeros(self.dim());
        for idx in 0..self.dim() {
            let new_multi = unravel(idx, &new_dims);
            let mut old_multi = vec![0usize; n];
            for (k, &o) in order.iter().enumerate() {
                old_multi[o] = new_multi[k];
            }
            out[idx] = self.amplitudes[ravel(&old_multi, &old_strides)];
        }
        Ok(Self {
            amplitudes: out,
            dims: new_dims,
        })
    }
}

impl Serialize for PureState {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateJson {
            dims: self.dims.clone(),
            amplitudes: self.amplitudes.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PureState {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = StateJson::deserialize(d)?;
        let amps = DVector::from_iterator(
            j.amplitudes.len(),
            j.amplitudes.iter().map(|z| Complex64::new(z[0], z[1])),
        );
        PureState::new(amps, j.dims).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    dims: Vec<usize>,
    amplitudes: Vec<[f64; 2]>,
}

/// A non-empty, disjoint, exhaustive split of the subsystem indices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bipartition {
    part1: Vec<usize>,
    part2: Vec<usize>,
}

impl Bipartition {
    pub fn new(part1: Vec<usize>, part2: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in part1.iter().chain(part2.iter()) {
            if i >= n {
                return Err(SteerkitError::IndexOutOfRange { index: i, count: n });
            }
            if seen[i] {
                return Err(SteerkitError::InvalidParameter(format!(
                    "bipartition parts are not disjoint at index {i}"
                )));
            }
            seen[i] = true;
        }
        if part1.is_empty() || part2.is_empty() || seen.iter().any(|s| !s) {
            return Err(SteerkitError::InvalidParameter(
                "bipartition parts must be non-empty, disjoint and exhaustive".into(),
            ));
        }
        Ok(Self { part1, part2 })
    }

    /// The cut `first` | rest, e.g. `1|2…n` in party counting.
    pub fn first_vs_rest(n: usize) -> Self {
        Self {
            part1: vec![0],
            part2: (1..n).collect(),
        }
    }

    pub fn part1(&self) -> &[usize] {
        &self.part1
    }

    pub fn part2(&self) -> &[usize] {
        &self.part2
    }
}

/// Schmidt data of a pure state across a bipartition: nonincreasing positive
/// coefficients √p_i and orthonormal left/right vector families.
#[derive(Debug, Clone)]
pub struct SchmidtDecomposition {
    pub coefficients: Vec<f64>,
    pub left_vectors: Vec<DVector<Complex64>>,
    pub right_vectors: Vec<DVector<Complex64>>,
    pub cut: Bipartition,
    pub left_dims: Vec<usize>,
    pub right_dims: Vec<usize>,
}

impl SchmidtDecomposition {
    pub fn rank(&self) -> usize {
        self.coefficients.len()
    }

    /// Σ √p_i |φ_i⟩⊗|ζ_i⟩ with dims ordered as (part1, part2) of the cut.
    pub fn reconstruct(&self) -> Result<PureState> {
        let dl: usize = self.left_dims.iter().product();
        let dr: usize = self.right_dims.iter().product();
        let mut amps = DVector::<Complex64>::zeros(dl * dr);
        for (k, &c) in self.coefficients.iter().enumerate() {
            for i in 0..dl {
                for j in 0..dr {
                    amps[i * dr + j] += Complex64::new(c, 0.0)
                        * self.left_vectors[k][i]
                        * self.right_vectors[k][j];
                }
            }
        }
        let mut dims = self.left_dims.clone();
        dims.extend_from_slice(&self.right_dims);
        PureState::with_tol(amps, dims, 1e-6)
    }
}

/// Schmidt decomposition of `psi` across `cut`, via SVD of the cut-reshaped
/// amplitude matrix. Coefficients below [`SCHMIDT_TRUNCATION`] are dropped;
/// the first nonzero entry of each left vector is made real positive.
pub fn schmidt(psi: &PureState, cut: &Bipartition) -> Result<SchmidtDecomposition> {
    let order: Vec<usize> = cut.part1().iter().chain(cut.part2()).copied().collect();
    let reordered = psi.reorder_subsystems(&order)?;
    let left_dims: Vec<usize> = cut.part1().iter().map(|&i| psi.dims()[i]).collect();
    let right_dims: Vec<usize> = cut.part2().iter().map(|&i| psi.dims()[i]).collect();
    let dl: usize = left_dims.iter().product();
    let dr: usize = right_dims.iter().product();
    let mat = DMatrix::from_fn(dl, dr, |i, j| reordered.amplitudes()[i * dr + j]);
    let svd = mat.svd(true, true);
    let u = svd.u.expect("svd with u");
    let vt = svd.v_t.expect("svd with v_t");

    let mut triples: Vec<(f64, DVector<Complex64>, DVector<Complex64>)> = Vec::new();
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        if s < SCHMIDT_TRUNCATION {
            continue;
        }
        let mut left = DVector::from_fn(dl, |i, _| u[(i, k)]);
        let mut right = DVector::from_fn(dr, |j, _| vt[(k, j)]);
        if let Some(z) = left.iter().find(|z| z.norm() > 1e-12) {
            let phase = z / z.norm();
            left.iter_mut().for_each(|e| *e *= phase.conj());
            right.iter_mut().for_each(|e| *e *= phase);
        }
        triples.push((s, left, right));
    }
    triples.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    Ok(SchmidtDecomposition {
        coefficients: triples.iter().map(|t| t.0).collect(),
        left_vectors: triples.iter().map(|t| t.1.clone()).collect(),
        right_vectors: triples.iter().map(|t| t.2.clone()).collect(),
        cut: cut.clone(),
        left_dims,
        right_dims,
    })
}

/// The unitary `V_π` that moves subsystem `j` to slot `perm[j]`, so that
/// `V_π |i_0 … i_{n-1}⟩` carries `i_j` in slot `perm[j]`. Satisfies the
/// composition law `V_{π∘τ} = V_π V_τ`.
pub fn permutation_unitary(dims: &[usize], perm: &[usize]) -> Result<DMatrix<Complex64>> {
    let n = dims.len();
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n {
            return Err(SteerkitError::IndexOutOfRange { index: p, count: n });
        }
        seen[p] = true;
    }
    if perm.len() != n || seen.iter().any(|s| !s) {
        return Err(SteerkitError::InvalidParameter(
            "permutation_unitary: not a permutation".into(),
        ));
    }
    for (j, &p) in perm.iter().enumerate() {
        if p != j && dims[j] != dims[p] {
            return Err(SteerkitError::DimensionMismatch(format!(
                "permutation moves subsystem {j} (dim {}) to slot {p} (dim {})",
                dims[j], dims[p]
            )));
        }
    }
    let d: usize = dims.iter().product();
    let st = strides(dims);
    let mut v = DMatrix::<Complex64>::zeros(d, d);
    for col in 0..d {
        let cs = unravel(col, dims);
        let mut rs = vec![0usize; n];
        for (j, &p) in perm.iter().enumerate() {
            rs[p] = cs[j];
        }
        v[(ravel(&rs, &st), col)] = Complex64::new(1.0, 0.0);
    }
    Ok(v)
}

/// True when `‖V_π† m V_π − m‖_max ≤ tol` for every transposition of the
/// listed parties.
pub fn is_perm_invariant(m: &HermitianMatrix, parties: &[usize], tol: f64) -> Result<bool> {
    let n = m.dims().len();
    for &p in parties {
        if p >= n {
            return Err(SteerkitError::IndexOutOfRange { index: p, count: n });
        }
    }
    for (i, &a) in parties.iter().enumerate() {
        for &b in &parties[i + 1..] {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.swap(a, b);
            let swapped = m.permute_subsystems(&perm)?;
            if swapped.max_abs_diff(m) > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{pauli_x, pauli_z, random_hermitian, random_psd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn phi_plus() -> PureState {
        let s = 1.0 / 2f64.sqrt();
        let amps = DVector::from_vec(vec![
            Complex64::new(s, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(s, 0.0),
        ]);
        PureState::new(amps, vec![2, 2]).unwrap()
    }

    fn ghz3_state() -> PureState {
        let s = 1.0 / 2f64.sqrt();
        let mut amps = DVector::<Complex64>::zeros(8);
        amps[0] = Complex64::new(s, 0.0);
        amps[7] = Complex64::new(s, 0.0);
        PureState::new(amps, vec![2, 2, 2]).unwrap()
    }

    #[test]
    fn kron_identities() {
        let i2 = HermitianMatrix::identity(vec![2]);
        let i4 = i2.kron(&i2);
        assert_eq!(i4.dims(), &[2, 2]);
        assert!(i4.max_abs_diff(&HermitianMatrix::identity(vec![2, 2])) < 1e-15);

        // X ⊗ Z has blocks [[0, Z], [Z, 0]]
        let xz = pauli_x().kron(&pauli_z());
        assert_eq!(xz.data()[(0, 2)], Complex64::new(1.0, 0.0));
        assert_eq!(xz.data()[(1, 3)], Complex64::new(-1.0, 0.0));
        assert_eq!(xz.data()[(0, 0)], Complex64::new(0.0, 0.0));

        let half = HermitianMatrix::identity(vec![2]).scale(0.5);
        let quarter = half.kron(&half);
        assert!(quarter.max_abs_diff(&HermitianMatrix::identity(vec![2, 2]).scale(0.25)) < 1e-15);
    }

    #[test]
    fn partial_trace_examples() {
        // Tr_B |Φ⁺⟩⟨Φ⁺| = I/2
        let marg = phi_plus().projector().partial_trace(&[1]).unwrap();
        assert!(marg.max_abs_diff(&HermitianMatrix::identity(vec![2]).scale(0.5)) < 1e-12);

        // product state: Tr_A(ρ_A ⊗ ρ_B) = ρ_B
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ra = random_psd(&mut rng, 2, true);
        let rb = random_psd(&mut rng, 3, true);
        let joint = ra.kron(&rb);
        assert!(joint.partial_trace(&[0]).unwrap().max_abs_diff(&rb) < 1e-12);

        // Tr_{2,3} |GHZ₃⟩⟨GHZ₃| = diag(1/2, 1/2), oracle: direct expansion of
        // the 8x8 projector — entries (0,0) and (7,7) are 1/2, all else 0,
        // and rows 0,7 share no kept-index pair off the diagonal.
        let proj = ghz3_state().projector();
        let mut oracle = DMatrix::<Complex64>::zeros(2, 2);
        for i in 0..8usize {
            let (ik, it) = (i >> 2, i & 0b11);
            for j in 0..8usize {
                let (jk, jt) = (j >> 2, j & 0b11);
                if it == jt {
                    oracle[(ik, jk)] += proj.data()[(i, j)];
                }
            }
        }
        let reduced = proj.partial_trace(&[1, 2]).unwrap();
        let oracle = HermitianMatrix::new(oracle, vec![2]).unwrap();
        assert!(reduced.max_abs_diff(&oracle) < 1e-14);
        assert!((reduced.data()[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!((reduced.data()[(1, 1)].re - 0.5).abs() < 1e-14);
        assert!(reduced.data()[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn partial_trace_bad_index() {
        let m = HermitianMatrix::identity(vec![2, 2]);
        assert!(matches!(
            m.partial_trace(&[5]),
            Err(SteerkitError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn partial_transpose_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ra = random_psd(&mut rng, 2, true);
        let rb = random_psd(&mut rng, 2, true);
        let sep = ra.kron(&rb);
        let pt = sep.partial_transpose(1).unwrap();
        assert!(pt.is_psd(1e-10));
        assert!((pt.trace() - sep.trace()).abs() < 1e-12);

        // PT on B of |Φ⁺⟩⟨Φ⁺| is SWAP/2 with min eigenvalue -1/2
        let pt = phi_plus().projector().partial_transpose(1).unwrap();
        assert!((pt.min_eigenvalue() + 0.5).abs() < 1e-12);
        assert!(!pt.is_psd(1e-8));

        // involution
        let h = random_hermitian(&mut rng, 4, vec![2, 2]);
        let back = h.partial_transpose(0).unwrap().partial_transpose(0).unwrap();
        assert!(back.max_abs_diff(&h) < 1e-15);
    }

    #[test]
    fn permutation_unitary_examples() {
        let id = permutation_unitary(&[2, 3], &[0, 1]).unwrap();
        assert!((&id - DMatrix::<Complex64>::identity(6, 6)).norm() < 1e-15);

        // SWAP |01⟩ = |10⟩
        let swap = permutation_unitary(&[2, 2], &[1, 0]).unwrap();
        assert_eq!(swap[(2, 1)], Complex64::new(1.0, 0.0));
        assert_eq!(swap[(1, 2)], Complex64::new(1.0, 0.0));

        // GHZ₃ invariant under every permutation of parties 1,2 (and indeed all)
        let ghz = ghz3_state();
        for perm in [[0, 2, 1], [1, 0, 2], [2, 1, 0], [1, 2, 0], [2, 0, 1]] {
            let v = permutation_unitary(&[2, 2, 2], &perm).unwrap();
            let mapped = v * ghz.amplitudes();
            assert!((mapped - ghz.amplitudes()).norm() < 1e-15, "perm {perm:?}");
        }

        assert!(permutation_unitary(&[2, 3], &[1, 0]).is_err());
    }

    #[test]
    fn permutation_composes() {
        let dims = [2usize, 2, 2, 2];
        let pi = [2usize, 0, 3, 1];
        let tau = [1usize, 3, 0, 2];
        let comp: Vec<usize> = (0..4).map(|j| pi[tau[j]]).collect();
        let v_pi = permutation_unitary(&dims, &pi).unwrap();
        let v_tau = permutation_unitary(&dims, &tau).unwrap();
        let v_comp = permutation_unitary(&dims, &comp).unwrap();
        assert!((v_pi * v_tau - v_comp).norm() < 1e-14);
    }

    #[test]
    fn schmidt_examples() {
        let s = schmidt(&ghz3_state(), &Bipartition::first_vs_rest(3)).unwrap();
        assert_eq!(s.rank(), 2);
        assert!((s.coefficients[0] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((s.coefficients[1] - 1.0 / 2f64.sqrt()).abs() < 1e-12);

        // product state has a single coefficient 1 at any cut
        let zero = PureState::new(
            DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]),
            vec![2],
        )
        .unwrap();
        let prod = zero.kron(&phi_plus());
        for cut in [
            Bipartition::new(vec![0], vec![1, 2], 3).unwrap(),
            Bipartition::new(vec![0, 1], vec![2], 3).unwrap(),
        ] {
            let s = schmidt(&prod, &cut).unwrap();
            if cut.part1() == [0] {
                assert_eq!(s.rank(), 1);
                assert!((s.coefficients[0] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn schmidt_reconstruction_fidelity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let psi = crate::testutil::random_pure(&mut rng, vec![2, 3, 2]);
            let cut = Bipartition::new(vec![1], vec![0, 2], 3).unwrap();
            let s = schmidt(&psi, &cut).unwrap();
            let rec = s.reconstruct().unwrap();
            let orig = psi.reorder_subsystems(&[1, 0, 2]).unwrap();
            assert!(rec.fidelity(&orig) >= 1.0 - 1e-10);
        }
    }

    #[test]
    fn psd_checks() {
        assert!(HermitianMatrix::identity(vec![2]).scale(0.5).is_psd(1e-12));
        let pt = phi_plus().projector().partial_transpose(1).unwrap();
        assert!(!pt.is_psd(1e-8));
        let ghz = ghz3_state().projector();
        assert!(is_perm_invariant(&ghz, &[0, 1, 2], 1e-12).unwrap());
    }

    #[test]
    fn psd_sum_kernel_property() {
        // For PSD B_k with A = Σ B_k and |ψ⟩ ∈ ker A, each B_k|ψ⟩ vanishes.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let psi = crate::testutil::random_pure(&mut rng, vec![4]);
            let p = HermitianMatrix::identity(vec![4])
                .sub(&psi.projector())
                .unwrap();
            let bs: Vec<HermitianMatrix> = (0..3)
                .map(|_| {
                    let m = random_psd(&mut rng, 4, false);
                    // compress onto the orthogonal complement of psi
                    let c = p.data() * m.data() * p.data();
                    HermitianMatrix::with_tol(c, vec![4], 1e-10).unwrap()
                })
                .collect();
            let a = bs.iter().fold(HermitianMatrix::zeros(vec![4]), |acc, b| {
                acc.add(b).unwrap()
            });
            assert!((a.data() * psi.amplitudes()).norm() < 1e-8);
            for b in &bs {
                assert!((b.data() * psi.amplitudes()).norm() <= 1e-8);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_hermitian(&mut rng, 4, vec![2, 2]);
        let s = serde_json::to_string(&m).unwrap();
        let back: HermitianMatrix = serde_json::from_str(&s).unwrap();
        assert!(m.max_abs_diff(&back) < 1e-15);
        assert_eq!(m.dims(), back.dims());
    }

    #[test]
    fn hermiticity_enforced() {
        let mut m = DMatrix::<Complex64>::zeros(2, 2);
        m[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            HermitianMatrix::new(m, vec![2]),
            Err(SteerkitError::NotHermitian { .. })
        ));
    }
}
