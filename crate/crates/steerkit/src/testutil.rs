//! Seeded random generators shared by the test suites.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::qmat::{HermitianMatrix, PureState};

pub use crate::povm::{pauli_x, pauli_y, pauli_z};

pub fn mat<const N: usize>(entries: &[[f64; N]; N], dims: Vec<usize>) -> HermitianMatrix {
    let m = DMatrix::from_fn(N, N, |r, c| Complex64::new(entries[r][c], 0.0));
    HermitianMatrix::new(m, dims).unwrap()
}

pub fn random_hermitian<R: Rng>(rng: &mut R, d: usize, dims: Vec<usize>) -> HermitianMatrix {
    let g = DMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    HermitianMatrix::new(h, dims).unwrap()
}

pub fn random_psd<R: Rng>(rng: &mut R, d: usize, unit_trace: bool) -> HermitianMatrix {
    let g = DMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let mut p = &g * g.adjoint();
    if unit_trace {
        let t = p.trace().re;
        p /= Complex64::new(t, 0.0);
    }
    HermitianMatrix::new(p, vec![d]).unwrap()
}

pub fn random_pure<R: Rng>(rng: &mut R, dims: Vec<usize>) -> PureState {
    let d: usize = dims.iter().product();
    let mut v = DVector::from_fn(d, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let n = v.norm();
    v /= Complex64::new(n, 0.0);
    PureState::new(v, dims).unwrap()
}

/// A Haar-ish random single-qubit rotation (QR of a complex Ginibre matrix).
pub fn random_qubit_unitary<R: Rng>(rng: &mut R) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(2, 2, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = q;
    for k in 0..2 {
        let ph = r[(k, k)] / r[(k, k)].norm();
        for i in 0..2 {
            u[(i, k)] *= ph.conj();
        }
    }
    u
}
