//! Constructors for the state families used throughout, and the symmetry
//! predicate on which the one-sided certification argument rests.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Result, SteerkitError};
use crate::qmat::{is_perm_invariant, schmidt, Bipartition, HermitianMatrix, PureState};

/// `(1/√d) (|0…0⟩ + |1…1⟩ + … )` on `n` parties of local dimension `d`.
pub fn ghz(n: usize, d: usize) -> Result<PureState> {
    if n < 2 {
        return Err(SteerkitError::InvalidParameter(format!(
            "GHZ needs at least 2 parties, got {n}"
        )));
    }
    if d < 2 {
        return Err(SteerkitError::InvalidParameter(format!(
            "GHZ needs local dimension at least 2, got {d}"
        )));
    }
    let dims = vec![d; n];
    let total: usize = dims.iter().product();
    let mut amps = DVector::<Complex64>::zeros(total);
    let norm = 1.0 / (d as f64).sqrt();
    // index of |i…i⟩ is i * (d^{n-1} + … + d + 1)
    let repunit: usize = (0..n).map(|k| d.pow(k as u32)).sum();
    for i in 0..d {
        amps[i * repunit] = Complex64::new(norm, 0.0);
    }
    PureState::new(amps, dims)
}

/// Uniform superposition of all weight-`k` n-qubit basis states.
pub fn dicke(n: usize, k: usize) -> Result<PureState> {
    if k == 0 || k >= n {
        return Err(SteerkitError::InvalidParameter(format!(
            "Dicke weight must satisfy 0 < k < n, got k={k}, n={n}"
        )));
    }
    let total = 1usize << n;
    let indices: Vec<usize> = (0..total).filter(|i| i.count_ones() as usize == k).collect();
    let norm = 1.0 / (indices.len() as f64).sqrt();
    let mut amps = DVector::<Complex64>::zeros(total);
    for i in indices {
        amps[i] = Complex64::new(norm, 0.0);
    }
    PureState::new(amps, vec![2; n])
}

/// The n-qubit W state, i.e. the weight-1 Dicke state.
pub fn w(n: usize) -> Result<PureState> {
    dicke(n, 1)
}

/// `|Φ⁺⟩ = (1/√d) Σ_i |ii⟩`.
pub fn max_entangled(d: usize) -> Result<PureState> {
    ghz(2, d)
}

/// Hypothesis of the one-sided certification theorem: full Schmidt rank at
/// the cut `1|2…n` and permutation-invariant right Schmidt vectors (up to a
/// global phase per vector).
pub fn thm1_hypothesis(psi: &PureState) -> Result<bool> {
    thm1_hypothesis_with_tol(psi, 1e-8)
}

pub fn thm1_hypothesis_with_tol(psi: &PureState, tol: f64) -> Result<bool> {
    let n = psi.dims().len();
    if n < 3 {
        return Err(SteerkitError::InvalidParameter(
            "hypothesis is about states with at least 3 parties".into(),
        ));
    }
    let d1 = psi.dims()[0];
    let dec = schmidt(psi, &Bipartition::first_vs_rest(n))?;
    if dec.rank() < d1 {
        return Ok(false);
    }
    let right_dims: Vec<usize> = psi.dims()[1..].to_vec();
    let n_right = right_dims.len();
    for zeta in &dec.right_vectors {
        for i in 0..n_right {
            for j in (i + 1)..n_right {
                if right_dims[i] != right_dims[j] {
                    return Ok(false);
                }
                let mut perm: Vec<usize> = (0..n_right).collect();
                perm.swap(i, j);
                let v = crate::qmat::permutation_unitary(&right_dims, &perm)?;
                let mapped = &v * zeta;
                // invariance up to a global phase: overlap must have unit modulus
                let overlap = zeta.dotc(&mapped);
                if (overlap.norm() - 1.0).abs() > tol {
                    return Ok(false);
                }
                let phase = overlap / overlap.norm();
                if (mapped - zeta.map(|z| z * phase)).norm() > tol {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Seeded Haar-uniform pure state helper.
pub fn haar_random<R: Rng>(rng: &mut R, dims: Vec<usize>) -> PureState {
    let d: usize = dims.iter().product();
    // complex Gaussian entries, then normalize
    let mut v = DVector::<Complex64>::zeros(d);
    for k in 0..d {
        // Box-Muller
        let (u1, u2) = (rng.gen::<f64>().max(1e-300), rng.gen::<f64>());
        let r = (-2.0 * u1.ln()).sqrt();
        let (re, im) = (
            r * (2.0 * std::f64::consts::PI * u2).cos(),
            r * (2.0 * std::f64::consts::PI * u2).sin(),
        );
        v[k] = Complex64::new(re, im);
    }
    let n = v.norm();
    v /= Complex64::new(n, 0.0);
    PureState::new(v, dims).expect("normalized by construction")
}

/// Constructive check behind the "product and permutation-invariant implies
/// full product" argument: every single-party marginal of `sigma^{⊗n}` equals
/// `sigma`, and the tensor power of the marginal reconstructs the state.
pub fn tensor_power_witness(sigma: &HermitianMatrix, n: usize, tol: f64) -> Result<bool> {
    let mut power = sigma.clone();
    for _ in 1..n {
        power = power.kron(sigma);
    }
    for party in 0..n {
        let traced: Vec<usize> = (0..n).filter(|&k| k != party).collect();
        let marginal = power.partial_trace(&traced)?;
        if marginal.max_abs_diff(sigma) > tol {
            return Ok(false);
        }
    }
    let mut rebuilt = power.partial_trace(&(1..n).collect::<Vec<_>>())?;
    for party in 1..n {
        let traced: Vec<usize> = (0..n).filter(|&k| k != party).collect();
        rebuilt = rebuilt.kron(&power.partial_trace(&traced)?);
    }
    Ok(rebuilt.max_abs_diff(&power) <= tol && is_perm_invariant(&power, &(0..n).collect::<Vec<_>>(), tol)?)
}
