//! Conic back end built on Clarabel's interior-point solver.
//!
//! Each complex Hermitian d×d block becomes a real symmetric 2d×2d PSD
//! variable through the standard `[[Re, −Im], [Im, Re]]` embedding; the
//! complex value is read back by averaging the two real quadrants, which is
//! exact in both directions, so feasibility of the real program coincides
//! with feasibility of the complex one. Equalities are written entrywise on
//! the averaged readback (real part of the upper triangle plus imaginary
//! part of the strict triangle), which keeps the constraint rows independent.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use crate::error::{Result, SteerkitError};
use crate::qmat::HermitianMatrix;

use super::{
    apply_op, readback_complex, svec_len, svec_to_sym, variable_matrices, Certificate,
    FeasibilityProblem, Objective, Verdict, Witness, CERTIFICATE_GAP_TOL, WITNESS_EIG_TOL,
    WITNESS_RESIDUAL_TOL,
};

pub struct ClarabelAdapter;

/// Row-major triplet accumulator for the constraint matrix.
struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    m: usize,
    n: usize,
}

impl Triplets {
    fn new(n: usize) -> Self {
        Self {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
            m: 0,
            n,
        }
    }

    fn push(&mut self, row: usize, col: usize, val: f64) {
        if val != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(val);
        }
    }

    fn transpose_apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            out[c] += v * y[r];
        }
        out
    }
}

impl super::SolverAdapter for ClarabelAdapter {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, problem: &FeasibilityProblem) -> Result<Verdict> {
        if problem.blocks().is_empty() {
            // nothing to decide: the empty assignment satisfies everything
            // unless some equality demands a nonzero target
            for eq in problem.equalities() {
                if eq.target.max_abs_entry() > WITNESS_RESIDUAL_TOL {
                    return Ok(Verdict::Inconclusive {
                        reason: format!(
                            "equality '{}' has no variables but a nonzero target",
                            eq.label
                        ),
                    });
                }
            }
            return Ok(Verdict::Feasible(Witness {
                blocks: Vec::new(),
                max_residual: 0.0,
                min_psd_margin: 0.0,
                objective: None,
            }));
        }

        // variable layout: concatenated svec segments per block
        let embed_sizes: Vec<usize> = problem.blocks().iter().map(|b| 2 * b.dim()).collect();
        let seg_lens: Vec<usize> = embed_sizes.iter().map(|&n| svec_len(n)).collect();
        let offsets: Vec<usize> = seg_lens
            .iter()
            .scan(0usize, |acc, &l| {
                let o = *acc;
                *acc += l;
                Some(o)
            })
            .collect();
        let n_vars: usize = seg_lens.iter().sum();

        // per-block readback basis, mapped through each op on demand
        let bases: Vec<Vec<HermitianMatrix>> = problem
            .blocks()
            .iter()
            .map(|b| variable_matrices(&b.dims))
            .collect();

        let mut a = Triplets::new(n_vars);
        let mut b_vec: Vec<f64> = Vec::new();

        // 1. equality rows (zero cone)
        for eq in problem.equalities() {
            let m = eq.target.dim();
            // row layout per equality: Re(i,j) for i ≤ j, then Im(i,j) for i < j
            let row_base = a.m;
            let mut row_of_re = vec![vec![0usize; m]; m];
            let mut row_of_im = vec![vec![0usize; m]; m];
            let mut r = row_base;
            for i in 0..m {
                for j in i..m {
                    row_of_re[i][j] = r;
                    r += 1;
                }
            }
            for i in 0..m {
                for j in (i + 1)..m {
                    row_of_im[i][j] = r;
                    r += 1;
                }
            }
            a.m = r;
            b_vec.resize(a.m, 0.0);
            for i in 0..m {
                for j in i..m {
                    b_vec[row_of_re[i][j]] = eq.target.data()[(i, j)].re;
                    if j > i {
                        b_vec[row_of_im[i][j]] = eq.target.data()[(i, j)].im;
                    }
                }
            }
            for term in &eq.terms {
                let base = &bases[term.block];
                let off = offsets[term.block];
                for (t, c_t) in base.iter().enumerate() {
                    let mapped = apply_op(c_t, &term.op)?;
                    for i in 0..m {
                        for j in i..m {
                            let z = mapped.data()[(i, j)] * term.coeff;
                            a.push(row_of_re[i][j], off + t, z.re);
                            if j > i {
                                a.push(row_of_im[i][j], off + t, z.im);
                            }
                        }
                    }
                }
            }
        }
        let n_eq_rows = a.m;

        // 2. PSD cone rows: s_block = x_block ∈ PSD triangle cone
        let mut psd_row_ranges = Vec::with_capacity(problem.blocks().len());
        for (k, &len) in seg_lens.iter().enumerate() {
            let start = a.m;
            for l in 0..len {
                a.push(a.m + l, offsets[k] + l, -1.0);
            }
            a.m += len;
            b_vec.resize(a.m, 0.0);
            psd_row_ranges.push((start, len));
        }

        let mut q = vec![0.0; n_vars];
        if let Objective::MaximizeScalar(blk) = problem.objective() {
            // the scalar value is (x₀₀ + x₁₁)/2 of the 2×2 embedding, i.e.
            // svec entries 0 and 2 of that block's segment
            q[offsets[*blk]] = -0.5;
            q[offsets[*blk] + 2] = -0.5;
        }

        let a_csc = CscMatrix::new_from_triplets(
            a.m,
            n_vars,
            a.rows.clone(),
            a.cols.clone(),
            a.vals.clone(),
        );
        let p_csc = CscMatrix::<f64>::zeros((n_vars, n_vars));
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if n_eq_rows > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_eq_rows));
        }
        for &n in &embed_sizes {
            cones.push(SupportedConeT::PSDTriangleConeT(n));
        }

        let settings = DefaultSettings {
            verbose: std::env::var("STEERKIT_SOLVER_VERBOSE").is_ok(),
            max_iter: 200,
            // Infeasibility declarations are only a hint here: every
            // certificate is revalidated below, so a looser detection
            // threshold trades no soundness for fewer NumericalError stalls.
            // In particular the κ/τ gate (infeasibility is only tested once
            // κ/τ > 1000/tol_ktratio) otherwise rejects certificates that
            // have long since converged.
            tol_infeas_abs: 1e-7,
            tol_infeas_rel: 1e-7,
            tol_ktratio: 1.0,
            reduced_tol_ktratio: 1.0,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p_csc, &q, &a_csc, &b_vec, &cones, settings)
            .map_err(|e| SteerkitError::Inconclusive(format!("solver setup failed: {e}")))?;
        solver.solve();
        let solution = &solver.solution;

        match solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let mut blocks = Vec::with_capacity(problem.blocks().len());
                for (k, spec) in problem.blocks().iter().enumerate() {
                    let seg = &solution.x[offsets[k]..offsets[k] + seg_lens[k]];
                    let s = svec_to_sym(embed_sizes[k], seg);
                    let x = readback_complex(spec.dim(), &s);
                    blocks.push(HermitianMatrix::new(x, spec.dims.clone())?);
                }
                // independent revalidation
                let mut max_residual = 0.0f64;
                for eq in problem.equalities() {
                    max_residual = max_residual.max(problem.equality_residual(eq, &blocks)?);
                }
                let min_psd_margin = blocks
                    .iter()
                    .map(|blk| blk.min_eigenvalue())
                    .fold(f64::INFINITY, f64::min);
                if max_residual > WITNESS_RESIDUAL_TOL || min_psd_margin < -WITNESS_EIG_TOL {
                    return Ok(Verdict::Inconclusive {
                        reason: format!(
                            "witness failed revalidation: residual {max_residual:.3e}, \
                             min eigenvalue {min_psd_margin:.3e}"
                        ),
                    });
                }
                let objective = match problem.objective() {
                    Objective::Feasibility => None,
                    Objective::MaximizeScalar(blk) => Some(blocks[*blk].data()[(0, 0)].re),
                };
                Ok(Verdict::Feasible(Witness {
                    blocks,
                    max_residual,
                    min_psd_margin,
                    objective,
                }))
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                let y = solution.z.clone();
                let ynorm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if ynorm == 0.0 {
                    return Ok(Verdict::Inconclusive {
                        reason: "empty infeasibility certificate".into(),
                    });
                }
                let gap = -y.iter().zip(&b_vec).map(|(yi, bi)| yi * bi).sum::<f64>();
                let aty = a.transpose_apply(&y);
                let dual_residual =
                    aty.iter().fold(0.0f64, |m, v| m.max(v.abs())) / ynorm.max(1.0);
                // dual-cone membership: zero-cone rows are free, PSD rows
                // must themselves be PSD
                let mut min_eig = 0.0f64;
                for &(start, len) in &psd_row_ranges {
                    let n = embed_sizes
                        .iter()
                        .find(|&&nn| svec_len(nn) == len)
                        .copied()
                        .unwrap_or(0);
                    let s = svec_to_sym(n, &y[start..start + len]);
                    min_eig = min_eig.min(sym_min_eig(&s));
                }
                if gap < CERTIFICATE_GAP_TOL
                    || dual_residual > WITNESS_RESIDUAL_TOL
                    || min_eig < -WITNESS_EIG_TOL * ynorm.max(1.0)
                {
                    return Ok(Verdict::Inconclusive {
                        reason: format!(
                            "certificate failed validation: gap {gap:.3e}, \
                             Aᵀy residual {dual_residual:.3e}, min eigenvalue {min_eig:.3e}"
                        ),
                    });
                }
                Ok(Verdict::Infeasible(Certificate {
                    gap,
                    dual_residual,
                    y,
                }))
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                Ok(Verdict::Inconclusive {
                    reason: "problem reported dual infeasible (unbounded objective)".into(),
                })
            }
            other => Ok(Verdict::Inconclusive {
                reason: format!("solver stopped with status {other:?}"),
            }),
        }
    }
}

fn sym_min_eig(s: &DMatrix<f64>) -> f64 {
    if s.nrows() == 0 {
        return 0.0;
    }
    s.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v))
}
