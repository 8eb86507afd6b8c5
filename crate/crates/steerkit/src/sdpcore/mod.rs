//! Conic feasibility plumbing shared by every certifier in the crate.
//!
//! All membership questions here reduce to the same shape: a list of complex
//! Hermitian PSD variable blocks, affine equalities tying linear images of
//! those blocks to fixed Hermitian targets, and optionally a scalar to
//! maximize. [`FeasibilityProblem`] captures that shape; [`solve`] hands it
//! to a [`SolverAdapter`] (selected through the `STEERKIT_SOLVER` variable)
//! and never takes the solver's word for it: feasible witnesses are
//! re-validated with independent linear algebra and infeasibility
//! certificates are checked against the problem data before a verdict is
//! reported. Anything that fails those checks surfaces as `Inconclusive`.

mod clarabel_adapter;

pub use clarabel_adapter::ClarabelAdapter;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerkitError};
use crate::qmat::HermitianMatrix;

/// Residual ceiling for accepting a solver witness after revalidation.
pub const WITNESS_RESIDUAL_TOL: f64 = 1e-6;
/// Eigenvalue floor for accepting witness blocks as PSD.
pub const WITNESS_EIG_TOL: f64 = 1e-7;
/// Minimum separating gap for accepting an infeasibility certificate.
pub const CERTIFICATE_GAP_TOL: f64 = 1e-9;
/// Hard limit on enumerated deterministic strategies.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// One complex Hermitian PSD variable block.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub name: String,
    /// Subsystem dimensions; the block is square of their product.
    pub dims: Vec<usize>,
}

impl BlockSpec {
    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Linear map applied to a block inside an equality term.
#[derive(Debug, Clone)]
pub enum BlockOp {
    Identity,
    PartialTranspose(usize),
    PartialTrace(Vec<usize>),
    /// For 1×1 scalar blocks `t`: the term contributes `t · M`.
    ScalarTimes(HermitianMatrix),
}

/// `coeff · op(block)` summand of an equality.
#[derive(Debug, Clone)]
pub struct Term {
    pub block: usize,
    pub coeff: f64,
    pub op: BlockOp,
}

impl Term {
    pub fn plain(block: usize) -> Self {
        Self {
            block,
            coeff: 1.0,
            op: BlockOp::Identity,
        }
    }

    pub fn scaled(block: usize, coeff: f64) -> Self {
        Self {
            block,
            coeff,
            op: BlockOp::Identity,
        }
    }
}

/// `Σ terms = target`, entrywise over the target's Hermitian matrix.
#[derive(Debug, Clone)]
pub struct AffineEquality {
    pub label: String,
    pub terms: Vec<Term>,
    pub target: HermitianMatrix,
}

#[derive(Debug, Clone, Default)]
pub enum Objective {
    #[default]
    Feasibility,
    /// Maximize the value of the referenced 1×1 block.
    MaximizeScalar(usize),
}

/// A conic feasibility (or scalar-maximization) problem over Hermitian PSD
/// blocks.
#[derive(Debug, Clone, Default)]
pub struct FeasibilityProblem {
    blocks: Vec<BlockSpec>,
    equalities: Vec<AffineEquality>,
    objective: Objective,
}

impl FeasibilityProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a PSD block and return its index.
    pub fn add_block(&mut self, name: impl Into<String>, dims: Vec<usize>) -> usize {
        self.blocks.push(BlockSpec {
            name: name.into(),
            dims,
        });
        self.blocks.len() - 1
    }

    pub fn add_scalar_block(&mut self, name: impl Into<String>) -> usize {
        self.add_block(name, vec![1])
    }

    /// Add an equality after checking every term maps into the target shape.
    pub fn add_equality(
        &mut self,
        label: impl Into<String>,
        terms: Vec<Term>,
        target: HermitianMatrix,
    ) -> Result<()> {
        let label = label.into();
        for term in &terms {
            let spec = self.blocks.get(term.block).ok_or(SteerkitError::IndexOutOfRange {
                index: term.block,
                count: self.blocks.len(),
            })?;
            let out = op_output_dims(&spec.dims, &term.op)?;
            if out.iter().product::<usize>() != target.dim() {
                return Err(SteerkitError::DimensionMismatch(format!(
                    "equality '{label}': term on block '{}' produces dim {}, target has dim {}",
                    spec.name,
                    out.iter().product::<usize>(),
                    target.dim()
                )));
            }
        }
        self.equalities.push(AffineEquality {
            label,
            terms,
            target,
        });
        Ok(())
    }

    pub fn set_objective(&mut self, objective: Objective) -> Result<()> {
        if let Objective::MaximizeScalar(b) = objective {
            let spec = self.blocks.get(b).ok_or(SteerkitError::IndexOutOfRange {
                index: b,
                count: self.blocks.len(),
            })?;
            if spec.dim() != 1 {
                return Err(SteerkitError::InvalidParameter(format!(
                    "objective block '{}' is not scalar",
                    spec.name
                )));
            }
        }
        self.objective = objective;
        Ok(())
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn equalities(&self) -> &[AffineEquality] {
        &self.equalities
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    /// Apply one equality to concrete block values; used for independent
    /// witness revalidation.
    pub fn equality_residual(
        &self,
        eq: &AffineEquality,
        values: &[HermitianMatrix],
    ) -> Result<f64> {
        let mut acc = HermitianMatrix::zeros(eq.target.dims().to_vec());
        for term in &eq.terms {
            let mapped = apply_op(&values[term.block], &term.op)?;
            let mapped = mapped.regroup(eq.target.dims().to_vec())?;
            acc = acc.add(&mapped.scale(term.coeff))?;
        }
        Ok(acc.max_abs_diff(&eq.target))
    }
}

fn op_output_dims(block_dims: &[usize], op: &BlockOp) -> Result<Vec<usize>> {
    match op {
        BlockOp::Identity => Ok(block_dims.to_vec()),
        BlockOp::PartialTranspose(s) => {
            if *s >= block_dims.len() {
                return Err(SteerkitError::IndexOutOfRange {
                    index: *s,
                    count: block_dims.len(),
                });
            }
            Ok(block_dims.to_vec())
        }
        BlockOp::PartialTrace(traced) => {
            for &t in traced {
                if t >= block_dims.len() {
                    return Err(SteerkitError::IndexOutOfRange {
                        index: t,
                        count: block_dims.len(),
                    });
                }
            }
            let kept: Vec<usize> = block_dims
                .iter()
                .enumerate()
                .filter(|(k, _)| !traced.contains(k))
                .map(|(_, &d)| d)
                .collect();
            if kept.is_empty() {
                return Err(SteerkitError::InvalidParameter(
                    "partial trace over every subsystem".into(),
                ));
            }
            Ok(kept)
        }
        BlockOp::ScalarTimes(m) => {
            if block_dims.iter().product::<usize>() != 1 {
                return Err(SteerkitError::InvalidParameter(
                    "ScalarTimes requires a 1×1 block".into(),
                ));
            }
            Ok(m.dims().to_vec())
        }
    }
}

pub(crate) fn apply_op(value: &HermitianMatrix, op: &BlockOp) -> Result<HermitianMatrix> {
    match op {
        BlockOp::Identity => Ok(value.clone()),
        BlockOp::PartialTranspose(s) => value.partial_transpose(*s),
        BlockOp::PartialTrace(traced) => value.partial_trace(traced),
        BlockOp::ScalarTimes(m) => {
            let t = value.data()[(0, 0)].re;
            Ok(m.scale(t))
        }
    }
}

/// Solver-independent revalidated witness of feasibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    /// Block values in registration order.
    pub blocks: Vec<HermitianMatrix>,
    /// Worst equality residual (max-norm), checked ≤ [`WITNESS_RESIDUAL_TOL`].
    pub max_residual: f64,
    /// Worst block eigenvalue, checked ≥ −[`WITNESS_EIG_TOL`].
    pub min_psd_margin: f64,
    /// Objective value, when one was requested.
    pub objective: Option<f64>,
}

/// Validated certificate of primal infeasibility: a dual vector `y` with
/// `Aᵀy ≈ 0`, `y` in the dual cone and `⟨b, y⟩ = −gap < 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub gap: f64,
    pub dual_residual: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum Verdict {
    Feasible(Witness),
    Infeasible(Certificate),
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible(_))
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Verdict::Infeasible(_))
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::Feasible(w) => Some(w),
            _ => None,
        }
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Verdict::Infeasible(c) => Some(c),
            _ => None,
        }
    }
}

/// Conforming conic back end: must honor the verdict contract (validated
/// witness / validated certificate / explicit `Inconclusive`).
pub trait SolverAdapter: Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &FeasibilityProblem) -> Result<Verdict>;
}

/// Look up an adapter by name; the empty string selects the default.
pub fn solver_by_name(name: &str) -> Result<Box<dyn SolverAdapter>> {
    match name {
        "" | "clarabel" => Ok(Box::new(ClarabelAdapter)),
        other => Err(SteerkitError::UnknownSolver(other.to_string())),
    }
}

/// Solve with the adapter named by `STEERKIT_SOLVER` (default: clarabel).
pub fn solve(problem: &FeasibilityProblem) -> Result<Verdict> {
    let name = std::env::var("STEERKIT_SOLVER").unwrap_or_default();
    solver_by_name(&name)?.solve(problem)
}

/// A hidden variable after the standard absorption: a fixed answer for every
/// setting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    outcomes: Vec<usize>,
}

impl DeterministicStrategy {
    pub fn outcome(&self, setting: usize) -> usize {
        self.outcomes[setting]
    }

    pub fn n_settings(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[usize] {
        &self.outcomes
    }
}

/// All `n_outcomes^n_settings` deterministic strategies in lexicographic
/// order (setting 0 most significant).
pub fn enumerate_deterministic(
    n_settings: usize,
    n_outcomes: usize,
) -> Result<Vec<DeterministicStrategy>> {
    if n_settings == 0 || n_outcomes == 0 {
        return Err(SteerkitError::InvalidParameter(
            "need at least one setting and one outcome".into(),
        ));
    }
    let count = (n_outcomes as u128).pow(n_settings as u32);
    if count > ENUMERATION_LIMIT {
        return Err(SteerkitError::EnumerationOverflow {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut current = vec![0usize; n_settings];
    loop {
        out.push(DeterministicStrategy {
            outcomes: current.clone(),
        });
        // increment least-significant position (the last setting)
        let mut pos = n_settings;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            current[pos] += 1;
            if current[pos] < n_outcomes {
                break;
            }
            current[pos] = 0;
        }
    }
}

/// A bipartite conditional distribution `p(ab|xy)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationTable {
    outcomes_a: usize,
    outcomes_b: usize,
    settings_a: usize,
    settings_b: usize,
    /// Row-major over (a, b, x, y).
    p: Vec<f64>,
}

impl CorrelationTable {
    pub fn from_fn(
        outcomes_a: usize,
        outcomes_b: usize,
        settings_a: usize,
        settings_b: usize,
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut p = Vec::with_capacity(outcomes_a * outcomes_b * settings_a * settings_b);
        for a in 0..outcomes_a {
            for b in 0..outcomes_b {
                for x in 0..settings_a {
                    for y in 0..settings_b {
                        p.push(f(a, b, x, y));
                    }
                }
            }
        }
        Self {
            outcomes_a,
            outcomes_b,
            settings_a,
            settings_b,
            p,
        }
    }

    /// Product of two deterministic local strategies with the stated outcome
    /// counts.
    pub fn from_deterministic(
        da: &DeterministicStrategy,
        db: &DeterministicStrategy,
        outcomes_a: usize,
        outcomes_b: usize,
    ) -> Self {
        Self::from_fn(
            outcomes_a,
            outcomes_b,
            da.n_settings(),
            db.n_settings(),
            |a, b, x, y| {
                if da.outcome(x) == a && db.outcome(y) == b {
                    1.0
                } else {
                    0.0
                }
            },
        )
    }

    pub fn p(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        let idx = ((a * self.outcomes_b + b) * self.settings_a + x) * self.settings_b + y;
        self.p[idx]
    }

    pub fn outcomes(&self) -> (usize, usize) {
        (self.outcomes_a, self.outcomes_b)
    }

    pub fn settings(&self) -> (usize, usize) {
        (self.settings_a, self.settings_b)
    }

    /// Worst violation of normalization, positivity or two-way no-signaling.
    pub fn validation_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for &v in &self.p {
            worst = worst.max((-v).max(0.0));
        }
        for x in 0..self.settings_a {
            for y in 0..self.settings_b {
                let mut total = 0.0;
                for a in 0..self.outcomes_a {
                    for b in 0..self.outcomes_b {
                        total += self.p(a, b, x, y);
                    }
                }
                worst = worst.max((total - 1.0).abs());
            }
        }
        // marginal of A must not depend on y, and vice versa
        for x in 0..self.settings_a {
            for a in 0..self.outcomes_a {
                let marg = |y: usize| (0..self.outcomes_b).map(|b| self.p(a, b, x, y)).sum::<f64>();
                let m0 = marg(0);
                for y in 1..self.settings_b {
                    worst = worst.max((marg(y) - m0).abs());
                }
            }
        }
        for y in 0..self.settings_b {
            for b in 0..self.outcomes_b {
                let marg = |x: usize| (0..self.outcomes_a).map(|a| self.p(a, b, x, y)).sum::<f64>();
                let m0 = marg(0);
                for x in 1..self.settings_a {
                    worst = worst.max((marg(x) - m0).abs());
                }
            }
        }
        worst
    }
}

/// Extreme points of the no-signaling polytope. Only the 2-setting/2-outcome
/// bipartite scenario is supported: 16 local deterministic vertices plus the
/// 8 PR-type boxes.
pub fn ns_vertices(
    outcomes_a: usize,
    outcomes_b: usize,
    settings_a: usize,
    settings_b: usize,
) -> Result<Vec<CorrelationTable>> {
    if (outcomes_a, outcomes_b, settings_a, settings_b) != (2, 2, 2, 2) {
        return Err(SteerkitError::UnsupportedScenario(format!(
            "no-signaling vertex enumeration implemented only for (2,2,2,2), \
             got outcomes ({outcomes_a},{outcomes_b}) settings ({settings_a},{settings_b})"
        )));
    }
    let mut out = Vec::with_capacity(24);
    let locals = enumerate_deterministic(2, 2)?;
    for da in &locals {
        for db in &locals {
            out.push(CorrelationTable::from_fn(2, 2, 2, 2, |a, b, x, y| {
                if da.outcome(x) == a && db.outcome(y) == b {
                    1.0
                } else {
                    0.0
                }
            }));
        }
    }
    // PR-type boxes: p = ½ iff a ⊕ b = xy ⊕ αx ⊕ βy ⊕ γ
    for alpha in 0..2usize {
        for beta in 0..2usize {
            for gamma in 0..2usize {
                out.push(CorrelationTable::from_fn(2, 2, 2, 2, |a, b, x, y| {
                    let rhs = (x * y + alpha * x + beta * y + gamma) % 2;
                    if (a + b) % 2 == rhs {
                        0.5
                    } else {
                        0.0
                    }
                }));
            }
        }
    }
    Ok(out)
}

// ---- complex → real embedding -------------------------------------------

/// svec index ↔ (row, col) pairs of the upper triangle, column-major,
/// matching the solver's scaled triangular PSD cone.
pub(crate) fn svec_positions(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(n * (n + 1) / 2);
    for col in 0..n {
        for row in 0..=col {
            v.push((row, col));
        }
    }
    v
}

pub(crate) fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Reconstruct the real symmetric matrix a scaled-triangle vector encodes.
pub(crate) fn svec_to_sym(n: usize, x: &[f64]) -> DMatrix<f64> {
    let mut s = DMatrix::<f64>::zeros(n, n);
    for (t, &(r, c)) in svec_positions(n).iter().enumerate() {
        if r == c {
            s[(r, c)] = x[t];
        } else {
            let v = x[t] / std::f64::consts::SQRT_2;
            s[(r, c)] = v;
            s[(c, r)] = v;
        }
    }
    s
}

/// Averaged readback of the complex matrix represented by a real symmetric
/// 2d×2d block: `X = (S₁₁+S₂₂)/2 + i(S₂₁−S₁₂)/2`. Exactly Hermitian for any
/// symmetric input, and PSD whenever the input is.
pub(crate) fn readback_complex(d: usize, s: &DMatrix<f64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(d, d, |i, j| {
        Complex64::new(
            0.5 * (s[(i, j)] + s[(i + d, j + d)]),
            0.5 * (s[(i + d, j)] - s[(i, j + d)]),
        )
    })
}

/// The Hermitian matrix each scaled-triangle variable of a block contributes
/// under the averaged readback; one entry per svec index of the 2d×2d
/// embedding.
pub(crate) fn variable_matrices(dims: &[usize]) -> Vec<HermitianMatrix> {
    let d: usize = dims.iter().product();
    let n = 2 * d;
    svec_positions(n)
        .iter()
        .map(|&(r, c)| {
            let mut s = DMatrix::<f64>::zeros(n, n);
            if r == c {
                s[(r, c)] = 1.0;
            } else {
                let v = 1.0 / std::f64::consts::SQRT_2;
                s[(r, c)] = v;
                s[(c, r)] = v;
            }
            let x = readback_complex(d, &s);
            HermitianMatrix::new(x, dims.to_vec()).expect("readback is Hermitian")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{pauli_x, pauli_y, random_psd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_enumeration_counts_and_order() {
        let s = enumerate_deterministic(2, 2).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[0].outcomes(), &[0, 0]);
        assert_eq!(s[1].outcomes(), &[0, 1]);
        assert_eq!(s[2].outcomes(), &[1, 0]);
        assert_eq!(s[3].outcomes(), &[1, 1]);

        assert_eq!(enumerate_deterministic(1, 7).unwrap().len(), 7);
        assert_eq!(enumerate_deterministic(3, 2).unwrap().len(), 8);

        match enumerate_deterministic(4, 100) {
            Err(SteerkitError::EnumerationOverflow { count, .. }) => {
                assert_eq!(count, 100_000_000);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn ns_vertices_basics() {
        let vs = ns_vertices(2, 2, 2, 2).unwrap();
        assert_eq!(vs.len(), 24);
        for v in &vs {
            assert!(v.validation_residual() <= 1e-12);
        }
        // the first 16 are exactly the products of deterministic pairs
        let locals = enumerate_deterministic(2, 2).unwrap();
        let mut k = 0;
        for da in &locals {
            for db in &locals {
                for a in 0..2 {
                    for b in 0..2 {
                        for x in 0..2 {
                            for y in 0..2 {
                                let expect = if da.outcome(x) == a && db.outcome(y) == b {
                                    1.0
                                } else {
                                    0.0
                                };
                                assert_eq!(vs[k].p(a, b, x, y), expect);
                            }
                        }
                    }
                }
                k += 1;
            }
        }
        assert!(ns_vertices(2, 2, 3, 2).is_err());
        assert!(ns_vertices(3, 2, 2, 2).is_err());
    }

    /// Independent oracle: enumerate the vertices of the (2,2,2,2)
    /// no-signaling polytope from scratch in the 8-dimensional
    /// Collins–Gisin parametrization, by solving every 8-subset of the 16
    /// positivity constraints and keeping the feasible basic solutions.
    #[test]
    fn ns_vertices_against_vertex_enumeration() {
        // coordinates: (a0, a1, b0, b1, c00, c01, c10, c11) with
        // aX = p_A(0|x), bY = p_B(0|y), cXY = p(00|xy)
        // p(00|xy) = c, p(01|xy) = a − c, p(10|xy) = b − c,
        // p(11|xy) = 1 − a − b + c ≥ 0
        let mut rows: Vec<([f64; 8], f64)> = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                let (ia, ib, ic) = (x, 2 + y, 4 + 2 * x + y);
                let mut r = [0.0; 8];
                r[ic] = 1.0;
                rows.push((r, 0.0)); // c ≥ 0
                let mut r = [0.0; 8];
                r[ia] = 1.0;
                r[ic] = -1.0;
                rows.push((r, 0.0)); // a − c ≥ 0
                let mut r = [0.0; 8];
                r[ib] = 1.0;
                r[ic] = -1.0;
                rows.push((r, 0.0)); // b − c ≥ 0
                let mut r = [0.0; 8];
                r[ia] = -1.0;
                r[ib] = -1.0;
                r[ic] = 1.0;
                rows.push((r, -1.0)); // 1 − a − b + c ≥ 0 ⇔ −a−b+c ≥ −1
            }
        }
        assert_eq!(rows.len(), 16);

        let mut vertices: Vec<[f64; 8]> = Vec::new();
        let mut subset = [0usize; 8];
        fn choose(
            rows: &[([f64; 8], f64)],
            start: usize,
            depth: usize,
            subset: &mut [usize; 8],
            vertices: &mut Vec<[f64; 8]>,
        ) {
            if depth == 8 {
                let a = DMatrix::<f64>::from_fn(8, 8, |i, j| rows[subset[i]].0[j]);
                let b = nalgebra::DVector::<f64>::from_fn(8, |i, _| rows[subset[i]].1);
                let lu = a.lu();
                if let Some(sol) = lu.solve(&b) {
                    // reject near-singular systems via residual
                    let a2 = DMatrix::<f64>::from_fn(8, 8, |i, j| rows[subset[i]].0[j]);
                    if (&a2 * &sol - &b).amax() > 1e-9 {
                        return;
                    }
                    // feasibility against every constraint
                    for (r, rhs) in rows {
                        let val: f64 = (0..8).map(|j| r[j] * sol[j]).sum();
                        if val < rhs - 1e-9 {
                            return;
                        }
                    }
                    let mut v = [0.0; 8];
                    for j in 0..8 {
                        v[j] = sol[j];
                    }
                    if !vertices
                        .iter()
                        .any(|u| (0..8).all(|j| (u[j] - v[j]).abs() < 1e-9))
                    {
                        vertices.push(v);
                    }
                }
                return;
            }
            for k in start..rows.len() {
                subset[depth] = k;
                choose(rows, k + 1, depth + 1, subset, vertices);
            }
        }
        choose(&rows, 0, 0, &mut subset, &mut vertices);
        assert_eq!(vertices.len(), 24);

        // every vertex produced by ns_vertices appears in the oracle list
        let to_coords = |t: &CorrelationTable| -> [f64; 8] {
            let mut v = [0.0; 8];
            for x in 0..2 {
                v[x] = t.p(0, 0, x, 0) + t.p(0, 1, x, 0);
            }
            for y in 0..2 {
                v[2 + y] = t.p(0, 0, 0, y) + t.p(1, 0, 0, y);
            }
            for x in 0..2 {
                for y in 0..2 {
                    v[4 + 2 * x + y] = t.p(0, 0, x, y);
                }
            }
            v
        };
        for t in ns_vertices(2, 2, 2, 2).unwrap() {
            let c = to_coords(&t);
            assert!(
                vertices
                    .iter()
                    .any(|u| (0..8).all(|j| (u[j] - c[j]).abs() < 1e-9)),
                "vertex missing from oracle enumeration"
            );
        }
    }

    #[test]
    fn embedding_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let h = random_psd(&mut rng, 3, false);
            // exact embedding of h, then readback
            let d = 3;
            let mut s = DMatrix::<f64>::zeros(2 * d, 2 * d);
            for i in 0..d {
                for j in 0..d {
                    let z = h.data()[(i, j)];
                    s[(i, j)] = z.re;
                    s[(i + d, j + d)] = z.re;
                    s[(i + d, j)] = z.im;
                    s[(i, j + d)] = -z.im;
                }
            }
            let back = readback_complex(d, &s);
            let back = HermitianMatrix::new(back, vec![3]).unwrap();
            assert!(back.max_abs_diff(&h) < 1e-14);
        }
    }

    #[test]
    fn variable_matrices_span_reconstruction() {
        // a random svec vector's readback must match the sum of its
        // per-variable contributions
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dims = vec![2usize];
        let basis = variable_matrices(&dims);
        let n = 4;
        let len = svec_len(n);
        assert_eq!(basis.len(), len);
        let x: Vec<f64> = (0..len).map(|_| rand::Rng::gen::<f64>(&mut rng) - 0.5).collect();
        let direct = readback_complex(2, &svec_to_sym(n, &x));
        let mut acc = HermitianMatrix::zeros(dims.clone());
        for (t, c) in basis.iter().enumerate() {
            acc = acc.add(&c.scale(x[t])).unwrap();
        }
        assert!((acc.data() - &direct).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-13);
    }

    #[test]
    fn solve_simple_feasible_problem() {
        // X PSD with X = M for a fixed PSD complex target
        let mut p = FeasibilityProblem::new();
        let x = p.add_block("X", vec![2]);
        let target = HermitianMatrix::identity(vec![2])
            .add(&pauli_y().scale(0.5))
            .unwrap();
        p.add_equality("fix", vec![Term::plain(x)], target.clone())
            .unwrap();
        match solve(&p).unwrap() {
            Verdict::Feasible(w) => {
                assert!(w.blocks[x].max_abs_diff(&target) < 1e-6);
                assert!(w.max_residual <= WITNESS_RESIDUAL_TOL);
                assert!(w.min_psd_margin >= -WITNESS_EIG_TOL);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn solve_simple_infeasible_problem() {
        // X PSD with X = −I has no solution
        let mut p = FeasibilityProblem::new();
        let x = p.add_block("X", vec![2]);
        p.add_equality(
            "fix",
            vec![Term::plain(x)],
            HermitianMatrix::identity(vec![2]).scale(-1.0),
        )
        .unwrap();
        match solve(&p).unwrap() {
            Verdict::Infeasible(c) => {
                assert!(c.gap >= CERTIFICATE_GAP_TOL);
                assert!(c.dual_residual <= WITNESS_RESIDUAL_TOL);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }

        // a non-PSD Hermitian target with complex entries is just as bad
        let mut p = FeasibilityProblem::new();
        let x = p.add_block("X", vec![2]);
        p.add_equality("fix", vec![Term::plain(x)], pauli_y()).unwrap();
        assert!(solve(&p).unwrap().is_infeasible());
    }

    #[test]
    fn solve_empty_problem_is_feasible() {
        let p = FeasibilityProblem::new();
        assert!(solve(&p).unwrap().is_feasible());

        let mut p = FeasibilityProblem::new();
        p.add_block("X", vec![2]);
        assert!(solve(&p).unwrap().is_feasible());
    }

    #[test]
    fn ppt_detects_entanglement() {
        // X PSD, PT(X) = Y PSD, X = |Φ⁺⟩⟨Φ⁺| is impossible (NPT state);
        // the same with a product state is fine
        let phi = crate::states::max_entangled(2).unwrap().projector();
        let mut p = FeasibilityProblem::new();
        let x = p.add_block("X", vec![2, 2]);
        let y = p.add_block("Y", vec![2, 2]);
        p.add_equality("fix", vec![Term::plain(x)], phi).unwrap();
        p.add_equality(
            "ppt",
            vec![
                Term {
                    block: x,
                    coeff: 1.0,
                    op: BlockOp::PartialTranspose(1),
                },
                Term::scaled(y, -1.0),
            ],
            HermitianMatrix::zeros(vec![2, 2]),
        )
        .unwrap();
        assert!(solve(&p).unwrap().is_infeasible());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let prod = random_psd(&mut rng, 2, true).kron(&random_psd(&mut rng, 2, true));
        let mut p = FeasibilityProblem::new();
        let x = p.add_block("X", vec![2, 2]);
        let y = p.add_block("Y", vec![2, 2]);
        p.add_equality("fix", vec![Term::plain(x)], prod).unwrap();
        p.add_equality(
            "ppt",
            vec![
                Term {
                    block: x,
                    coeff: 1.0,
                    op: BlockOp::PartialTranspose(1),
                },
                Term::scaled(y, -1.0),
            ],
            HermitianMatrix::zeros(vec![2, 2]),
        )
        .unwrap();
        assert!(solve(&p).unwrap().is_feasible());
    }

    #[test]
    fn partial_trace_constraints_work() {
        // X PSD on 2⊗2 with Tr_A X = I/2 and Tr X = 1 is satisfiable
        let mut p = FeasibilityProblem::new();
        let x = p.add_block("X", vec![2, 2]);
        p.add_equality(
            "marginal",
            vec![Term {
                block: x,
                coeff: 1.0,
                op: BlockOp::PartialTrace(vec![0]),
            }],
            HermitianMatrix::identity(vec![2]).scale(0.5),
        )
        .unwrap();
        let v = solve(&p).unwrap();
        let w = v.witness().expect("feasible");
        let marg = w.blocks[x].partial_trace(&[0]).unwrap();
        assert!(marg.max_abs_diff(&HermitianMatrix::identity(vec![2]).scale(0.5)) < 1e-6);
    }

    #[test]
    fn scalar_maximization() {
        // max t s.t. t·I + Y = diag(2, 3), Y PSD, t ≥ 0 → t = 2
        let mut p = FeasibilityProblem::new();
        let t = p.add_scalar_block("t");
        let y = p.add_block("Y", vec![2]);
        let target = HermitianMatrix::identity(vec![2])
            .scale(2.5)
            .add(&crate::testutil::pauli_z().scale(-0.5))
            .unwrap(); // diag(2, 3)
        p.add_equality(
            "cap",
            vec![
                Term {
                    block: t,
                    coeff: 1.0,
                    op: BlockOp::ScalarTimes(HermitianMatrix::identity(vec![2])),
                },
                Term::plain(y),
            ],
            target,
        )
        .unwrap();
        p.set_objective(Objective::MaximizeScalar(t)).unwrap();
        let v = solve(&p).unwrap();
        let w = v.witness().expect("feasible");
        let val = w.objective.expect("objective value");
        assert!((val - 2.0).abs() < 1e-5, "got {val}");
    }

    #[test]
    fn unknown_solver_is_rejected() {
        match solver_by_name("gurobi") {
            Err(SteerkitError::UnknownSolver(name)) => assert_eq!(name, "gurobi"),
            Err(other) => panic!("unexpected error {other:?}"),
            Ok(_) => panic!("unknown solver accepted"),
        }
        assert_eq!(solver_by_name("").unwrap().name(), "clarabel");
        assert_eq!(solver_by_name("clarabel").unwrap().name(), "clarabel");
    }

    #[test]
    fn mini_jm_problem_is_feasible() {
        // two compatible noisy Pauli measurements admit a parent: blocks G_λ
        // over the four deterministic strategies with ΣG = I and the two
        // marginal constraints per setting
        let meas = crate::povm::noisy_pauli_pair(0.5).unwrap();
        let strategies = enumerate_deterministic(2, 2).unwrap();
        let mut p = FeasibilityProblem::new();
        let gs: Vec<usize> = strategies
            .iter()
            .enumerate()
            .map(|(k, _)| p.add_block(format!("G{k}"), vec![2]))
            .collect();
        p.add_equality(
            "complete",
            gs.iter().map(|&g| Term::plain(g)).collect(),
            HermitianMatrix::identity(vec![2]),
        )
        .unwrap();
        for x in 0..2 {
            let terms: Vec<Term> = strategies
                .iter()
                .zip(&gs)
                .filter(|(s, _)| s.outcome(x) == 0)
                .map(|(_, &g)| Term::plain(g))
                .collect();
            p.add_equality(format!("m{x}"), terms, meas.element(0, x).clone())
                .unwrap();
        }
        assert!(solve(&p).unwrap().is_feasible());

        // the same at η = 2^{−1/4} (incompatible pair) must be infeasible
        let meas = crate::povm::noisy_pauli_pair(2f64.powf(-0.25)).unwrap();
        let mut p = FeasibilityProblem::new();
        let gs: Vec<usize> = (0..4).map(|k| p.add_block(format!("G{k}"), vec![2])).collect();
        p.add_equality(
            "complete",
            gs.iter().map(|&g| Term::plain(g)).collect(),
            HermitianMatrix::identity(vec![2]),
        )
        .unwrap();
        for x in 0..2 {
            let terms: Vec<Term> = strategies
                .iter()
                .zip(&gs)
                .filter(|(s, _)| s.outcome(x) == 0)
                .map(|(_, &g)| Term::plain(g))
                .collect();
            p.add_equality(format!("m{x}"), terms, meas.element(0, x).clone())
                .unwrap();
        }
        let v = solve(&p).unwrap();
        assert!(v.is_infeasible(), "got {v:?}");
        assert!(v.certificate().unwrap().gap >= CERTIFICATE_GAP_TOL);
        let _ = pauli_x(); // keep the import shared with other tests
    }
}
