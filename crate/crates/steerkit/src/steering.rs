//! Local-hidden-state membership (bipartite) and genuine-multipartite-steering
//! membership (tripartite) as conic feasibility problems.
//!
//! The bipartite question is exact: after absorbing the response function into
//! deterministic strategies, an assemblage is unsteerable iff the LHS
//! feasibility SDP has a solution. The tripartite questions are decided
//! through documented relaxations of the bi-separable set, and the verdict
//! vocabulary ([`GmsVerdict`]) keeps the direction of each relaxation
//! explicit: `certified-GMS` is only ever produced from a validated
//! infeasibility certificate of an *outer* relaxation, and `member` only from
//! validated blocks of an *inner* (or exact) formulation.

use serde::{Deserialize, Serialize};

use crate::assemblage::{steer_one_sided, steer_two_sided, Scenario, SteeringAssemblage};
use crate::error::{Result, SteerkitError};
use crate::incompat::bisect_visibility;
pub use crate::incompat::CorrMode;
use crate::povm::{depolarize, MeasurementAssemblage};
use crate::qmat::HermitianMatrix;
use crate::sdpcore::{
    enumerate_deterministic, ns_vertices, solve, BlockOp, Certificate, CorrelationTable,
    DeterministicStrategy, FeasibilityProblem, Objective, Term, Verdict,
};

/// Tolerance for validating an assemblage before it is handed to a solver.
pub const ASSEMBLAGE_TOL: f64 = 1e-6;

// ---- LHS membership (bipartite, one-sided) -------------------------------

/// A local-hidden-state model in absorbed form: one unnormalized block
/// `σ_λ = p(λ)ρ_λ` per deterministic strategy, with `Σ_λ Tr σ_λ = 1` and
/// `Σ_{λ: λ(x)=a} σ_λ` reproducing the assemblage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LhsModel {
    strategies: Vec<DeterministicStrategy>,
    blocks: Vec<HermitianMatrix>,
}

impl LhsModel {
    pub fn new(
        strategies: Vec<DeterministicStrategy>,
        blocks: Vec<HermitianMatrix>,
    ) -> Result<Self> {
        if strategies.len() != blocks.len() {
            return Err(SteerkitError::DimensionMismatch(format!(
                "{} strategies but {} blocks",
                strategies.len(),
                blocks.len()
            )));
        }
        Ok(Self { strategies, blocks })
    }

    pub fn strategies(&self) -> &[DeterministicStrategy] {
        &self.strategies
    }

    pub fn blocks(&self) -> &[HermitianMatrix] {
        &self.blocks
    }

    /// Hidden-variable weights `p(λ) = Tr σ_λ`.
    pub fn weights(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.trace()).collect()
    }

    /// Normalized hidden state `ρ_λ = σ_λ / p(λ)`, or `None` for a
    /// numerically zero weight.
    pub fn hidden_state(&self, lam: usize) -> Option<HermitianMatrix> {
        let p = self.blocks[lam].trace();
        if p.abs() < 1e-12 {
            None
        } else {
            Some(self.blocks[lam].scale(1.0 / p))
        }
    }

    /// `Σ_{λ: λ(x)=a} σ_λ`, the model's prediction for `σ_{a|x}`.
    pub fn reconstruct(&self, a: usize, x: usize) -> Result<HermitianMatrix> {
        let dims = self.blocks[0].dims().to_vec();
        let mut total = HermitianMatrix::zeros(dims);
        for (s, blk) in self.strategies.iter().zip(&self.blocks) {
            if s.outcome(x) == a {
                total = total.add(blk)?;
            }
        }
        Ok(total)
    }

    /// Largest max-norm deviation between the model's predictions and the
    /// given assemblage.
    pub fn reproduction_residual(&self, s: &SteeringAssemblage) -> Result<f64> {
        if s.n_untrusted() != 1 {
            return Err(SteerkitError::UnsupportedScenario(
                "LHS models describe one-sided assemblages".into(),
            ));
        }
        let mut worst = 0.0f64;
        for a in 0..s.outcomes()[0] {
            for x in 0..s.settings()[0] {
                worst = worst.max(self.reconstruct(a, x)?.max_abs_diff(s.member1(a, x)?));
            }
        }
        Ok(worst)
    }
}

/// Outcome of an LHS membership test: `Feasible` ⇔ unsteerable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LhsReport {
    pub verdict: Verdict,
    pub model: Option<LhsModel>,
}

/// Optional affine visibility ramp used by [`steering_robustness`]: with a
/// ramp installed, every member-target equality reads
/// `Σ blocks + t·(σ₀ − σ₁) = σ₀`, i.e. the blocks reproduce
/// `σ(t) = σ₀ + t(σ₁ − σ₀)`, and the scalar `t ∈ [0, 1]` is maximized.
struct VisibilityRamp<'a> {
    s1: &'a SteeringAssemblage,
    t_blk: usize,
}

fn install_ramp<'a>(
    p: &mut FeasibilityProblem,
    s1: Option<&'a SteeringAssemblage>,
) -> Result<Option<VisibilityRamp<'a>>> {
    let Some(s1) = s1 else { return Ok(None) };
    let t_blk = p.add_scalar_block("visibility");
    let slack = p.add_scalar_block("visibility_slack");
    p.add_equality(
        "visibility_bound",
        vec![Term::plain(t_blk), Term::plain(slack)],
        HermitianMatrix::identity(vec![1]),
    )?;
    p.set_objective(Objective::MaximizeScalar(t_blk))?;
    Ok(Some(VisibilityRamp { s1, t_blk }))
}

impl VisibilityRamp<'_> {
    /// The `t·(σ₀ − σ₁)` summand for the member at joint index `(a, x)`.
    fn term(&self, s0_member: &HermitianMatrix, a: &[usize], x: &[usize]) -> Result<Term> {
        Ok(Term {
            block: self.t_blk,
            coeff: 1.0,
            op: BlockOp::ScalarTimes(s0_member.sub(self.s1.member(a, x)?)?),
        })
    }
}

/// Build the LHS feasibility problem: blocks `σ_λ ≥ 0` over deterministic
/// strategies with `Σ_{λ: λ(x)=a} σ_λ = σ_{a|x}`.
///
/// Outcome sums are setting-independent on both sides (no-signaling), so the
/// rows for the last outcome at non-reference settings are linear
/// combinations of the others and are skipped to keep the system full-rank.
fn lhs_problem(
    s: &SteeringAssemblage,
    ramp: Option<&SteeringAssemblage>,
) -> Result<(FeasibilityProblem, Vec<usize>, Vec<DeterministicStrategy>)> {
    let (n_out, n_set) = (s.outcomes()[0], s.settings()[0]);
    let strategies = enumerate_deterministic(n_set, n_out)?;
    let mut p = FeasibilityProblem::new();
    let ramp = install_ramp(&mut p, ramp)?;
    let blocks: Vec<usize> = (0..strategies.len())
        .map(|l| p.add_block(format!("sigma[{l}]"), s.trusted_dims().to_vec()))
        .collect();
    for x in 0..n_set {
        for a in 0..n_out {
            if x > 0 && a == n_out - 1 {
                continue;
            }
            let mut terms: Vec<Term> = strategies
                .iter()
                .zip(&blocks)
                .filter(|(st, _)| st.outcome(x) == a)
                .map(|(_, &b)| Term::plain(b))
                .collect();
            let target = s.member1(a, x)?.clone();
            if let Some(r) = &ramp {
                terms.push(r.term(&target, &[a], &[x])?);
            }
            p.add_equality(format!("sigma[{a}|{x}]"), terms, target)?;
        }
    }
    Ok((p, blocks, strategies))
}

/// Decide LHS membership of a one-sided bipartite assemblage. `Feasible`
/// means unsteerable, and the returned model reproduces the assemblage.
pub fn is_unsteerable(s: &SteeringAssemblage) -> Result<LhsReport> {
    if s.n_untrusted() != 1 {
        return Err(SteerkitError::UnsupportedScenario(
            "is_unsteerable expects a one-sided assemblage".into(),
        ));
    }
    s.validate(ASSEMBLAGE_TOL)?;
    let (p, blocks, strategies) = lhs_problem(s, None)?;
    let verdict = solve(&p)?;
    let model = match &verdict {
        Verdict::Feasible(w) => Some(LhsModel::new(
            strategies,
            blocks.iter().map(|&b| w.blocks[b].clone()).collect(),
        )?),
        _ => None,
    };
    Ok(LhsReport { verdict, model })
}

// ---- GMS membership ------------------------------------------------------

/// Verdict vocabulary for genuine-multipartite-steering membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum GmsVerdict {
    /// The assemblage is decomposable over bi-separable terms (an exact or
    /// inner formulation was feasible with validated blocks).
    Member,
    /// An outer relaxation of the bi-separable set was feasible; true
    /// membership is not established.
    MemberUnderRelaxation,
    /// A validated infeasibility certificate of an outer relaxation: no
    /// bi-separable decomposition exists.
    CertifiedGms,
    Inconclusive { reason: String },
}

impl GmsVerdict {
    pub fn is_member(&self) -> bool {
        matches!(self, GmsVerdict::Member)
    }

    pub fn is_certified_gms(&self) -> bool {
        matches!(self, GmsVerdict::CertifiedGms)
    }
}

/// Decomposition blocks backing a `member` (or `member-under-relaxation`)
/// verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum GmsDecomposition {
    /// One untrusted party; trusted split B|C.
    OneSided {
        /// Genuinely tripartite term `ρ_λ` (unnormalized), by A-strategy.
        rho: Vec<HermitianMatrix>,
        /// Aggregated `σ^B ⊗ ρ^C`-type term `Γ²_{a|x}`, row-major (a, x).
        gamma_b: Vec<Vec<HermitianMatrix>>,
        /// Aggregated `ρ^B ⊗ σ^C`-type term `Γ³_{a|x}`, row-major (a, x).
        gamma_c: Vec<Vec<HermitianMatrix>>,
        /// C-side hidden-state blocks behind the `Γ²` marginals.
        omega_c: Vec<HermitianMatrix>,
        /// B-side hidden-state blocks behind the `Γ³` marginals.
        omega_b: Vec<HermitianMatrix>,
        strategies: Vec<DeterministicStrategy>,
    },
    /// Two untrusted parties; trusted party C.
    TwoSided {
        /// `s¹[λ][b][y]`: A answers from strategy λ, B steers C.
        s1: Vec<Vec<Vec<HermitianMatrix>>>,
        /// `s²[μ][a][x]`: B answers from strategy μ, A steers C.
        s2: Vec<Vec<Vec<HermitianMatrix>>>,
        /// Correlated term blocks, aligned with `tables`.
        r: Vec<HermitianMatrix>,
        tables: Vec<CorrelationTable>,
        strategies_a: Vec<DeterministicStrategy>,
        strategies_b: Vec<DeterministicStrategy>,
    },
}

/// Full report of a GMS membership test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmsMembershipReport {
    pub verdict: GmsVerdict,
    /// Plain-language description of the relaxation behind the verdict.
    pub relaxation: String,
    /// Worst equality residual of the revalidated witness, if feasible.
    pub max_residual: Option<f64>,
    /// Smallest eigenvalue over all witness blocks, if feasible.
    pub min_psd_margin: Option<f64>,
    pub decomposition: Option<GmsDecomposition>,
    /// Validated dual certificate backing a `certified-GMS` verdict.
    pub certificate: Option<Certificate>,
}

struct Gms1Layout {
    strategies: Vec<DeterministicStrategy>,
    rho_idx: Vec<usize>,
    g2_idx: Vec<Vec<usize>>,
    g3_idx: Vec<Vec<usize>>,
    w2_idx: Vec<usize>,
    w3_idx: Vec<usize>,
}

/// Build the one-sided GMS membership problem over the trusted split B|C.
///
/// Term 1 keeps arbitrary PSD blocks `ρ_λ` per deterministic A-strategy.
/// Terms 2–3 are aggregated into `Γ²_{a|x}` / `Γ³_{a|x}` with the product
/// structure relaxed to PPT across B:C, outcome sums setting-independent, and
/// the marginal on the non-steered side forced into LHS form through hidden
/// blocks `ω`.
///
/// Row hygiene: outcome sums of the reconstruction and marginal families are
/// setting-independent on both sides, so last-outcome rows at non-reference
/// settings are dropped to keep the equality system full-rank.
fn gms1_problem(
    s: &SteeringAssemblage,
    ramp: Option<&SteeringAssemblage>,
) -> Result<(FeasibilityProblem, Gms1Layout)> {
    let (n_out, n_set) = (s.outcomes()[0], s.settings()[0]);
    let bc = s.trusted_dims().to_vec();
    let (db, dc) = (bc[0], bc[1]);
    let strategies = enumerate_deterministic(n_set, n_out)?;
    let mut p = FeasibilityProblem::new();
    let ramp = install_ramp(&mut p, ramp)?;

    let rho_idx: Vec<usize> = (0..strategies.len())
        .map(|l| p.add_block(format!("rho[{l}]"), bc.clone()))
        .collect();
    let grid = |p: &mut FeasibilityProblem, tag: &str| -> Vec<Vec<usize>> {
        (0..n_out)
            .map(|a| {
                (0..n_set)
                    .map(|x| p.add_block(format!("{tag}[{a}|{x}]"), bc.clone()))
                    .collect()
            })
            .collect()
    };
    let g2_idx = grid(&mut p, "gamma2");
    let t2_idx = grid(&mut p, "ppt2");
    let g3_idx = grid(&mut p, "gamma3");
    let t3_idx = grid(&mut p, "ppt3");
    let w2_idx: Vec<usize> = (0..strategies.len())
        .map(|l| p.add_block(format!("omega2[{l}]"), vec![dc]))
        .collect();
    let w3_idx: Vec<usize> = (0..strategies.len())
        .map(|l| p.add_block(format!("omega3[{l}]"), vec![db]))
        .collect();

    // reconstruction: Σ_{λ:λ(x)=a} ρ_λ + Γ²_{a|x} + Γ³_{a|x} = σ_{a|x}
    for x in 0..n_set {
        for a in 0..n_out {
            if x > 0 && a == n_out - 1 {
                continue;
            }
            let mut terms: Vec<Term> = strategies
                .iter()
                .zip(&rho_idx)
                .filter(|(st, _)| st.outcome(x) == a)
                .map(|(_, &b)| Term::plain(b))
                .collect();
            terms.push(Term::plain(g2_idx[a][x]));
            terms.push(Term::plain(g3_idx[a][x]));
            let target = s.member1(a, x)?.clone();
            if let Some(r) = &ramp {
                terms.push(r.term(&target, &[a], &[x])?);
            }
            p.add_equality(format!("recon[{a}|{x}]"), terms, target)?;
        }
    }
    // PPT across B:C, written through an explicit PSD copy of the partial
    // transpose
    for (g_idx, t_idx, tag) in [(&g2_idx, &t2_idx, "ppt2"), (&g3_idx, &t3_idx, "ppt3")] {
        for a in 0..n_out {
            for x in 0..n_set {
                p.add_equality(
                    format!("{tag}[{a}|{x}]"),
                    vec![
                        Term::plain(t_idx[a][x]),
                        Term {
                            block: g_idx[a][x],
                            coeff: -1.0,
                            op: BlockOp::PartialTranspose(1),
                        },
                    ],
                    HermitianMatrix::zeros(bc.clone()),
                )?;
            }
        }
    }
    // outcome sums setting-independent (the aggregated product terms carry a
    // fixed reduced state)
    for (g_idx, tag) in [(&g2_idx, "ns2"), (&g3_idx, "ns3")] {
        for x in 1..n_set {
            let mut terms = Vec::new();
            for a in 0..n_out {
                terms.push(Term::plain(g_idx[a][0]));
                terms.push(Term::scaled(g_idx[a][x], -1.0));
            }
            p.add_equality(format!("{tag}[{x}]"), terms, HermitianMatrix::zeros(bc.clone()))?;
        }
    }
    // non-steered marginals in LHS form:
    //   Tr_B Γ²_{a|x} = Σ_{λ:λ(x)=a} ω²_λ   and mirrored for Γ³
    for (g_idx, w_idx, traced, dims, tag) in [
        (&g2_idx, &w2_idx, 0usize, vec![dc], "marg2"),
        (&g3_idx, &w3_idx, 1usize, vec![db], "marg3"),
    ] {
        for x in 0..n_set {
            for a in 0..n_out {
                if x > 0 && a == n_out - 1 {
                    continue;
                }
                let mut terms = vec![Term {
                    block: g_idx[a][x],
                    coeff: 1.0,
                    op: BlockOp::PartialTrace(vec![traced]),
                }];
                for (st, &w) in strategies.iter().zip(w_idx) {
                    if st.outcome(x) == a {
                        terms.push(Term::scaled(w, -1.0));
                    }
                }
                p.add_equality(
                    format!("{tag}[{a}|{x}]"),
                    terms,
                    HermitianMatrix::zeros(dims.clone()),
                )?;
            }
        }
    }
    Ok((
        p,
        Gms1Layout {
            strategies,
            rho_idx,
            g2_idx,
            g3_idx,
            w2_idx,
            w3_idx,
        },
    ))
}

fn require_one_sided_tripartite(s: &SteeringAssemblage) -> Result<()> {
    if s.scenario() != Scenario::OneSided {
        return Err(SteerkitError::UnsupportedScenario(
            "gms_one_sided expects a one-sided assemblage".into(),
        ));
    }
    if s.trusted_dims().len() != 2 {
        return Err(SteerkitError::UnsupportedScenario(format!(
            "gms_one_sided needs a bipartite trusted side B|C (merge parties first); \
             got {} trusted parties",
            s.trusted_dims().len()
        )));
    }
    Ok(())
}

fn witness_stats(verdict: &Verdict) -> (Option<f64>, Option<f64>) {
    match verdict.witness() {
        Some(w) => (Some(w.max_residual), Some(w.min_psd_margin)),
        None => (None, None),
    }
}

/// Decide GMS membership of a one-sided tripartite assemblage with trusted
/// split B|C.
///
/// The formulation is an outer relaxation of the bi-separable set (PPT stands
/// in for separability in the product terms), so infeasibility certifies
/// genuine multipartite steering unconditionally, while feasibility proves
/// membership exactly when both trusted parties are qubits (PPT equals
/// separability for 2⊗2) and is reported as `member-under-relaxation`
/// otherwise.
pub fn gms_one_sided(s: &SteeringAssemblage) -> Result<GmsMembershipReport> {
    require_one_sided_tripartite(s)?;
    s.validate(ASSEMBLAGE_TOL)?;
    let (p, layout) = gms1_problem(s, None)?;
    let verdict = solve(&p)?;
    let exact = s.trusted_dims() == [2, 2];
    let relaxation = if exact {
        "product terms via PPT across the trusted split; exact for 2x2 trusted qubits"
    } else {
        "product terms via PPT across the trusted split; outer relaxation for these \
         trusted dimensions"
    }
    .to_string();
    let (max_residual, min_psd_margin) = witness_stats(&verdict);
    let (gms_verdict, decomposition, certificate) = match &verdict {
        Verdict::Feasible(w) => {
            let pick = |idx: &Vec<usize>| -> Vec<HermitianMatrix> {
                idx.iter().map(|&k| w.blocks[k].clone()).collect()
            };
            let pick2 = |idx: &Vec<Vec<usize>>| -> Vec<Vec<HermitianMatrix>> {
                idx.iter()
                    .map(|row| row.iter().map(|&k| w.blocks[k].clone()).collect())
                    .collect()
            };
            let dec = GmsDecomposition::OneSided {
                rho: pick(&layout.rho_idx),
                gamma_b: pick2(&layout.g2_idx),
                gamma_c: pick2(&layout.g3_idx),
                omega_c: pick(&layout.w2_idx),
                omega_b: pick(&layout.w3_idx),
                strategies: layout.strategies,
            };
            let v = if exact {
                GmsVerdict::Member
            } else {
                GmsVerdict::MemberUnderRelaxation
            };
            (v, Some(dec), None)
        }
        Verdict::Infeasible(c) => (GmsVerdict::CertifiedGms, None, Some(c.clone())),
        Verdict::Inconclusive { reason } => (
            GmsVerdict::Inconclusive {
                reason: reason.clone(),
            },
            None,
            None,
        ),
    };
    Ok(GmsMembershipReport {
        verdict: gms_verdict,
        relaxation,
        max_residual,
        min_psd_margin,
        decomposition,
        certificate,
    })
}

struct Gms2Layout {
    strategies_a: Vec<DeterministicStrategy>,
    strategies_b: Vec<DeterministicStrategy>,
    s1_idx: Vec<Vec<Vec<usize>>>,
    s2_idx: Vec<Vec<Vec<usize>>>,
    r_idx: Vec<usize>,
    tables: Vec<CorrelationTable>,
}

/// Build the two-sided GMS membership problem on the trusted party C.
///
/// Terms 1–2 absorb one untrusted party into deterministic strategies and
/// leave free conditional blocks for the other (`s¹[λ][b][y]`, `s²[μ][a][x]`)
/// whose outcome sums are setting-independent. Term 3 sums `p_τ(ab|xy) r_τ`
/// over the supplied correlation tables. Last-outcome reconstruction rows at
/// non-reference settings are dropped (same rank argument as for the other
/// decompositions).
fn gms2_problem(
    s: &SteeringAssemblage,
    tables: Vec<CorrelationTable>,
    ramp: Option<&SteeringAssemblage>,
) -> Result<(FeasibilityProblem, Gms2Layout)> {
    let (oa, ob) = (s.outcomes()[0], s.outcomes()[1]);
    let (sa, sb) = (s.settings()[0], s.settings()[1]);
    let c_dims = s.trusted_dims().to_vec();
    let strategies_a = enumerate_deterministic(sa, oa)?;
    let strategies_b = enumerate_deterministic(sb, ob)?;
    let mut p = FeasibilityProblem::new();
    let ramp = install_ramp(&mut p, ramp)?;

    let s1_idx: Vec<Vec<Vec<usize>>> = (0..strategies_a.len())
        .map(|l| {
            (0..ob)
                .map(|b| {
                    (0..sb)
                        .map(|y| p.add_block(format!("s1[{l}][{b}|{y}]"), c_dims.clone()))
                        .collect()
                })
                .collect()
        })
        .collect();
    let s2_idx: Vec<Vec<Vec<usize>>> = (0..strategies_b.len())
        .map(|m| {
            (0..oa)
                .map(|a| {
                    (0..sa)
                        .map(|x| p.add_block(format!("s2[{m}][{a}|{x}]"), c_dims.clone()))
                        .collect()
                })
                .collect()
        })
        .collect();
    let r_idx: Vec<usize> = (0..tables.len())
        .map(|t| p.add_block(format!("r[{t}]"), c_dims.clone()))
        .collect();

    // reconstruction: Σ_{λ:λ(x)=a} s¹[λ][b][y] + Σ_{μ:μ(y)=b} s²[μ][a][x]
    //                 + Σ_τ p_τ(ab|xy) r_τ = σ_{ab|xy}
    for a in 0..oa {
        for x in 0..sa {
            if x > 0 && a == oa - 1 {
                continue;
            }
            for b in 0..ob {
                for y in 0..sb {
                    if y > 0 && b == ob - 1 {
                        continue;
                    }
                    let mut terms = Vec::new();
                    for (l, st) in strategies_a.iter().enumerate() {
                        if st.outcome(x) == a {
                            terms.push(Term::plain(s1_idx[l][b][y]));
                        }
                    }
                    for (m, st) in strategies_b.iter().enumerate() {
                        if st.outcome(y) == b {
                            terms.push(Term::plain(s2_idx[m][a][x]));
                        }
                    }
                    for (t, table) in tables.iter().enumerate() {
                        let w = table.p(a, b, x, y);
                        if w != 0.0 {
                            terms.push(Term::scaled(r_idx[t], w));
                        }
                    }
                    let target = s.member2(a, b, x, y)?.clone();
                    if let Some(r) = &ramp {
                        terms.push(r.term(&target, &[a, b], &[x, y])?);
                    }
                    p.add_equality(format!("recon[{a}|{x},{b}|{y}]"), terms, target)?;
                }
            }
        }
    }
    // outcome sums setting-independent within each conditional family
    for (l, _) in strategies_a.iter().enumerate() {
        for y in 1..sb {
            let mut terms = Vec::new();
            for b in 0..ob {
                terms.push(Term::plain(s1_idx[l][b][0]));
                terms.push(Term::scaled(s1_idx[l][b][y], -1.0));
            }
            p.add_equality(
                format!("s1marg[{l}][{y}]"),
                terms,
                HermitianMatrix::zeros(c_dims.clone()),
            )?;
        }
    }
    for (m, _) in strategies_b.iter().enumerate() {
        for x in 1..sa {
            let mut terms = Vec::new();
            for a in 0..oa {
                terms.push(Term::plain(s2_idx[m][a][0]));
                terms.push(Term::scaled(s2_idx[m][a][x], -1.0));
            }
            p.add_equality(
                format!("s2marg[{m}][{x}]"),
                terms,
                HermitianMatrix::zeros(c_dims.clone()),
            )?;
        }
    }
    Ok((
        p,
        Gms2Layout {
            strategies_a,
            strategies_b,
            s1_idx,
            s2_idx,
            r_idx,
            tables,
        },
    ))
}

fn gms2_tables(s: &SteeringAssemblage, mode: CorrMode) -> Result<Vec<CorrelationTable>> {
    let (oa, ob) = (s.outcomes()[0], s.outcomes()[1]);
    let (sa, sb) = (s.settings()[0], s.settings()[1]);
    match mode {
        CorrMode::Inner => {
            let das = enumerate_deterministic(sa, oa)?;
            let dbs = enumerate_deterministic(sb, ob)?;
            let mut tables = Vec::with_capacity(das.len() * dbs.len());
            for da in &das {
                for db in &dbs {
                    tables.push(CorrelationTable::from_deterministic(da, db, oa, ob));
                }
            }
            Ok(tables)
        }
        CorrMode::Outer => ns_vertices(oa, ob, sa, sb),
    }
}

/// Decide GMS membership of a two-sided tripartite assemblage.
///
/// The correlated third term ranges over local-deterministic products
/// (`CorrMode::Inner`) or no-signaling vertices (`CorrMode::Outer`); the true
/// quantum set lies strictly between the two and is not
/// semidefinite-representable. Inner feasibility proves membership; outer
/// infeasibility certifies genuine multipartite steering; the remaining
/// combinations are one-sided evidence only and map to
/// `member-under-relaxation` or `inconclusive`.
pub fn gms_two_sided(s: &SteeringAssemblage, mode: CorrMode) -> Result<GmsMembershipReport> {
    if s.scenario() != Scenario::TwoSided {
        return Err(SteerkitError::UnsupportedScenario(
            "gms_two_sided expects a two-sided assemblage".into(),
        ));
    }
    s.validate(ASSEMBLAGE_TOL)?;
    let tables = gms2_tables(s, mode)?;
    let (p, layout) = gms2_problem(s, tables, None)?;
    let verdict = solve(&p)?;
    let relaxation = match mode {
        CorrMode::Inner => {
            "correlated term restricted to local-deterministic products (inner bracket \
             of the quantum set)"
        }
        CorrMode::Outer => {
            "correlated term over no-signaling vertices (outer bracket of the quantum set)"
        }
    }
    .to_string();
    let (max_residual, min_psd_margin) = witness_stats(&verdict);
    let (gms_verdict, decomposition, certificate) = match (&verdict, mode) {
        (Verdict::Feasible(w), _) => {
            let pick3 = |idx: &Vec<Vec<Vec<usize>>>| -> Vec<Vec<Vec<HermitianMatrix>>> {
                idx.iter()
                    .map(|bb| {
                        bb.iter()
                            .map(|yy| yy.iter().map(|&k| w.blocks[k].clone()).collect())
                            .collect()
                    })
                    .collect()
            };
            let dec = GmsDecomposition::TwoSided {
                s1: pick3(&layout.s1_idx),
                s2: pick3(&layout.s2_idx),
                r: layout.r_idx.iter().map(|&k| w.blocks[k].clone()).collect(),
                tables: layout.tables,
                strategies_a: layout.strategies_a,
                strategies_b: layout.strategies_b,
            };
            let v = match mode {
                CorrMode::Inner => GmsVerdict::Member,
                CorrMode::Outer => GmsVerdict::MemberUnderRelaxation,
            };
            (v, Some(dec), None)
        }
        (Verdict::Infeasible(c), CorrMode::Outer) => {
            (GmsVerdict::CertifiedGms, None, Some(c.clone()))
        }
        (Verdict::Infeasible(c), CorrMode::Inner) => (
            GmsVerdict::Inconclusive {
                reason: "no decomposition with local-deterministic correlations; quantum \
                         correlations in the third term could still provide one"
                    .into(),
            },
            None,
            Some(c.clone()),
        ),
        (Verdict::Inconclusive { reason }, _) => (
            GmsVerdict::Inconclusive {
                reason: reason.clone(),
            },
            None,
            None,
        ),
    };
    Ok(GmsMembershipReport {
        verdict: gms_verdict,
        relaxation,
        max_residual,
        min_psd_margin,
        decomposition,
        certificate,
    })
}

// ---- robustness ----------------------------------------------------------

/// Noise model scanned by [`steering_robustness`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Depolarize every measurement element: `A ↦ ηA + (1−η)·Tr(A)·1/d`.
    MeasurementDepolarizing,
    /// Mix every assemblage member with trusted white noise:
    /// `σ ↦ ησ + (1−η)·Tr(σ)·1/d`.
    AssemblageWhiteNoise,
}

/// Which membership verdict the robustness bisection tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobustnessTarget {
    /// LHS membership of a one-sided bipartite assemblage.
    Lhs,
    /// One-sided tripartite GMS membership.
    GmsOneSided,
    /// Two-sided tripartite GMS membership (inner correlation bracket).
    GmsTwoSided,
}

/// `σ ↦ ησ + (1−η)·Tr(σ)·1/d` on every member.
pub fn white_noise(s: &SteeringAssemblage, eta: f64) -> Result<SteeringAssemblage> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(SteerkitError::InvalidParameter(format!(
            "visibility η = {eta} outside [0, 1]"
        )));
    }
    let id = HermitianMatrix::identity(s.trusted_dims().to_vec());
    let d = s.trusted_dim() as f64;
    let mut members = Vec::new();
    for fa in 0..s.outcomes().iter().product::<usize>() {
        for fx in 0..s.settings().iter().product::<usize>() {
            let a = unflatten(fa, s.outcomes());
            let x = unflatten(fx, s.settings());
            let m = s.member(&a, &x)?;
            members.push(m.scale(eta).add(&id.scale((1.0 - eta) * m.trace() / d))?);
        }
    }
    SteeringAssemblage::new(
        s.outcomes().to_vec(),
        s.settings().to_vec(),
        s.trusted_dims().to_vec(),
        members,
    )
}

fn unflatten(mut idx: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for k in (0..sizes.len()).rev() {
        out[k] = idx % sizes[k];
        idx /= sizes[k];
    }
    out
}

/// Largest visibility `η` (within `bisect_tol`) at which the noisy scenario
/// stays a member of the target set (unsteerable for `Lhs`, bi-separable
/// decomposable for the GMS targets).
///
/// Both noise models enter the assemblage affinely, so the boundary is found
/// by a single scalar-maximization solve over the visibility ramp
/// `σ(η) = σ₀ + η(σ₁ − σ₀)`; if that solve is inconclusive the boundary is
/// bracketed by bisection over membership probes instead, with abstaining
/// near-boundary solves retried at nearby probe points.
///
/// `meas_b` must be given exactly for the two-sided target.
pub fn steering_robustness(
    rho: &HermitianMatrix,
    meas_a: &MeasurementAssemblage,
    meas_b: Option<&MeasurementAssemblage>,
    target: RobustnessTarget,
    noise: NoiseModel,
    bisect_tol: f64,
) -> Result<f64> {
    if (target == RobustnessTarget::GmsTwoSided) != meas_b.is_some() {
        return Err(SteerkitError::InvalidParameter(
            "a second measurement assemblage is required exactly for the two-sided target"
                .into(),
        ));
    }
    let assemble = |eta: f64| -> Result<SteeringAssemblage> {
        let (ma, mb) = match noise {
            NoiseModel::MeasurementDepolarizing => (
                depolarize(meas_a, eta)?,
                meas_b.map(|m| depolarize(m, eta)).transpose()?,
            ),
            NoiseModel::AssemblageWhiteNoise => (meas_a.clone(), meas_b.cloned()),
        };
        let mut s = match target {
            RobustnessTarget::GmsTwoSided => {
                steer_two_sided(rho, &ma, mb.as_ref().expect("checked above"))?
            }
            _ => steer_one_sided(rho, &ma)?,
        };
        if noise == NoiseModel::AssemblageWhiteNoise {
            s = white_noise(&s, eta)?;
        }
        match target {
            RobustnessTarget::Lhs => {
                if s.n_untrusted() != 1 {
                    return Err(SteerkitError::UnsupportedScenario(
                        "LHS robustness expects a one-sided assemblage".into(),
                    ));
                }
            }
            RobustnessTarget::GmsOneSided => require_one_sided_tripartite(&s)?,
            RobustnessTarget::GmsTwoSided => {
                if s.scenario() != Scenario::TwoSided {
                    return Err(SteerkitError::UnsupportedScenario(
                        "two-sided robustness expects a two-sided assemblage".into(),
                    ));
                }
            }
        }
        s.validate(ASSEMBLAGE_TOL)?;
        Ok(s)
    };
    let membership = |s: &SteeringAssemblage,
                      ramp: Option<&SteeringAssemblage>|
     -> Result<Verdict> {
        match target {
            RobustnessTarget::Lhs => solve(&lhs_problem(s, ramp)?.0),
            RobustnessTarget::GmsOneSided => solve(&gms1_problem(s, ramp)?.0),
            RobustnessTarget::GmsTwoSided => {
                let tables = gms2_tables(s, CorrMode::Inner)?;
                solve(&gms2_problem(s, tables, ramp)?.0)
            }
        }
    };
    // full visibility already a member: nothing to scan
    let s1 = assemble(1.0)?;
    match membership(&s1, None)? {
        Verdict::Feasible(_) => return Ok(1.0),
        Verdict::Infeasible(_) | Verdict::Inconclusive { .. } => {}
    }
    // direct boundary solve over the affine ramp
    let s0 = assemble(0.0)?;
    if let Verdict::Feasible(w) = membership(&s0, Some(&s1))? {
        if let Some(t) = w.objective {
            return Ok(t.clamp(0.0, 1.0));
        }
    }
    // fallback: bisection over membership probes
    let probe = |eta: f64| -> Result<Option<bool>> {
        Ok(match membership(&assemble(eta)?, None)? {
            Verdict::Feasible(_) => Some(true),
            Verdict::Infeasible(_) => Some(false),
            Verdict::Inconclusive { .. } => None,
        })
    };
    bisect_visibility(bisect_tol, probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::incompat::{is_jointly_measurable, BISECTION_TOL};
    use crate::povm::{noisy_pauli_pair, pair_along};
    use crate::qmat::PureState;
    use crate::sdpcore::CERTIFICATE_GAP_TOL;
    use crate::states::{ghz, max_entangled, w};
    use crate::testutil::{random_pure, random_qubit_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn eta_star() -> f64 {
        2f64.powf(-0.25)
    }

    fn product_state(rng: &mut ChaCha8Rng, parts: &[usize]) -> PureState {
        let mut psi = random_pure(rng, vec![parts[0]]);
        for &d in &parts[1..] {
            psi = psi.kron(&random_pure(rng, vec![d]));
        }
        psi
    }

    /// A measurement pair with the same joint-measurability threshold as the
    /// X/Y pair, rotated by a random unitary.
    fn rotated_pair(rng: &mut ChaCha8Rng, eta: f64) -> MeasurementAssemblage {
        let u = random_qubit_unitary(rng);
        let conj = |m: &HermitianMatrix| {
            HermitianMatrix::new(&u * m.data() * u.adjoint(), vec![2]).unwrap()
        };
        pair_along(eta, &conj(&crate::testutil::pauli_x()), &conj(&crate::testutil::pauli_y()))
            .unwrap()
    }

    #[test]
    fn separable_state_is_unsteerable() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi = product_state(&mut rng, &[2, 2]);
        let s = steer_one_sided(&psi.projector(), &noisy_pauli_pair(1.0).unwrap()).unwrap();
        let report = is_unsteerable(&s).unwrap();
        assert!(report.verdict.is_feasible(), "got {:?}", report.verdict);
        let model = report.model.unwrap();
        assert!(model.reproduction_residual(&s).unwrap() < 1e-6);
        let total: f64 = model.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lhs_tracks_the_pauli_pair_threshold() {
        let phi = max_entangled(2).unwrap();
        let steered = |eta: f64| {
            steer_one_sided(&phi.projector(), &noisy_pauli_pair(eta).unwrap()).unwrap()
        };
        assert!(is_unsteerable(&steered(0.6)).unwrap().verdict.is_feasible());
        assert!(is_unsteerable(&steered(0.9))
            .unwrap()
            .verdict
            .is_infeasible());
    }

    #[test]
    fn lhs_rejects_two_sided_input() {
        let psi = ghz(3, 2).unwrap();
        let m = noisy_pauli_pair(0.5).unwrap();
        let s = steer_two_sided(&psi.projector(), &m, &m).unwrap();
        assert!(matches!(
            is_unsteerable(&s),
            Err(SteerkitError::UnsupportedScenario(_))
        ));
    }

    #[test]
    fn gms1_ghz_with_sharp_paulis_is_certified() {
        let psi = ghz(3, 2).unwrap();
        let s = steer_one_sided(&psi.projector(), &noisy_pauli_pair(1.0).unwrap()).unwrap();
        let report = gms_one_sided(&s).unwrap();
        assert!(report.verdict.is_certified_gms(), "got {:?}", report.verdict);
        let cert = report.certificate.expect("certified verdict carries a certificate");
        assert!(cert.gap >= CERTIFICATE_GAP_TOL);
    }

    #[test]
    fn gms1_biseparable_states_are_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let meas = noisy_pauli_pair(1.0).unwrap();
        // A|BC split: product across the untrusted cut, entangled inside BC
        let a_bc = random_pure(&mut rng, vec![2]).kron(&max_entangled(2).unwrap());
        // AB|C split: untrusted party entangled with trusted B only
        let ab_c = max_entangled(2).unwrap().kron(&random_pure(&mut rng, vec![2]));
        for psi in [a_bc, ab_c] {
            let s = steer_one_sided(&psi.projector(), &meas).unwrap();
            let report = gms_one_sided(&s).unwrap();
            assert!(report.verdict.is_member(), "got {:?}", report.verdict);
            assert!(report.max_residual.unwrap() <= 1e-6);
            assert!(report.min_psd_margin.unwrap() >= -1e-7);
        }
    }

    #[test]
    fn gms1_compatible_pair_is_member() {
        let psi = ghz(3, 2).unwrap();
        let s = steer_one_sided(&psi.projector(), &noisy_pauli_pair(0.5).unwrap()).unwrap();
        let report = gms_one_sided(&s).unwrap();
        assert!(report.verdict.is_member(), "got {:?}", report.verdict);
    }

    #[test]
    fn gms1_matches_joint_measurability_for_thm1_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let states = [ghz(3, 2).unwrap(), w(3).unwrap()];
        for eta in [0.62, 0.9] {
            let meas = rotated_pair(&mut rng, eta);
            let compatible = is_jointly_measurable(&meas).unwrap().verdict.is_feasible();
            assert_eq!(compatible, eta < FRAC_1_SQRT_2, "JM verdict at η = {eta}");
            for psi in &states {
                let s = steer_one_sided(&psi.projector(), &meas).unwrap();
                let report = gms_one_sided(&s).unwrap();
                if compatible {
                    assert!(report.verdict.is_member(), "η = {eta}: {:?}", report.verdict);
                } else {
                    assert!(
                        report.verdict.is_certified_gms(),
                        "η = {eta}: {:?}",
                        report.verdict
                    );
                }
            }
        }
    }

    #[test]
    fn gms1_rejects_wrong_scenarios() {
        let phi = max_entangled(2).unwrap();
        let s = steer_one_sided(&phi.projector(), &noisy_pauli_pair(0.5).unwrap()).unwrap();
        assert!(matches!(
            gms_one_sided(&s),
            Err(SteerkitError::UnsupportedScenario(_))
        ));
    }

    #[test]
    fn gms2_special_visibility_pairs_are_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let meas = noisy_pauli_pair(eta_star()).unwrap();
        for _ in 0..3 {
            let psi = crate::states::haar_random(&mut rng, vec![2, 2, 2]);
            let s = steer_two_sided(&psi.projector(), &meas, &meas).unwrap();
            let report = gms_two_sided(&s, CorrMode::Inner).unwrap();
            assert!(report.verdict.is_member(), "got {:?}", report.verdict);
        }
    }

    #[test]
    fn gms2_ghz_with_sharp_paulis_is_certified_outer() {
        let psi = ghz(3, 2).unwrap();
        let meas = noisy_pauli_pair(1.0).unwrap();
        let s = steer_two_sided(&psi.projector(), &meas, &meas).unwrap();
        let report = gms_two_sided(&s, CorrMode::Outer).unwrap();
        assert!(report.verdict.is_certified_gms(), "got {:?}", report.verdict);
        assert!(report.certificate.unwrap().gap >= CERTIFICATE_GAP_TOL);
    }

    #[test]
    fn gms2_product_state_is_member() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        // ρ_AB ⊗ ρ_C: the third term alone reproduces the assemblage
        let psi = max_entangled(2).unwrap().kron(&random_pure(&mut rng, vec![2]));
        let meas = noisy_pauli_pair(1.0).unwrap();
        let s = steer_two_sided(&psi.projector(), &meas, &meas).unwrap();
        let report = gms_two_sided(&s, CorrMode::Inner).unwrap();
        assert!(report.verdict.is_member(), "got {:?}", report.verdict);
    }

    #[test]
    fn gms2_inner_member_implies_outer_not_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let psi = crate::states::haar_random(&mut rng, vec![2, 2, 2]);
        let meas = noisy_pauli_pair(eta_star()).unwrap();
        let s = steer_two_sided(&psi.projector(), &meas, &meas).unwrap();
        let inner = gms_two_sided(&s, CorrMode::Inner).unwrap();
        assert!(inner.verdict.is_member());
        let outer = gms_two_sided(&s, CorrMode::Outer).unwrap();
        assert!(
            !outer.verdict.is_certified_gms(),
            "inner member contradicted by outer: {:?}",
            outer.verdict
        );
    }

    #[test]
    fn gms2_follows_distributed_joint_measurability() {
        // a feasible distributed parent for the measurements makes every
        // state's two-sided assemblage decomposable
        let meas = noisy_pauli_pair(eta_star()).unwrap();
        let genjm = crate::incompat::genjm_no_free(&meas, &meas).unwrap();
        assert!(genjm.verdict.is_feasible());
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..2 {
            let psi = crate::states::haar_random(&mut rng, vec![2, 2, 2]);
            let s = steer_two_sided(&psi.projector(), &meas, &meas).unwrap();
            let report = gms_two_sided(&s, CorrMode::Inner).unwrap();
            assert!(report.verdict.is_member(), "got {:?}", report.verdict);
        }
    }

    #[test]
    fn robustness_lhs_matches_the_incompatibility_threshold() {
        let phi = max_entangled(2).unwrap();
        let meas = noisy_pauli_pair(1.0).unwrap();
        let eta = steering_robustness(
            &phi.projector(),
            &meas,
            None,
            RobustnessTarget::Lhs,
            NoiseModel::MeasurementDepolarizing,
            BISECTION_TOL,
        )
        .unwrap();
        assert!((eta - FRAC_1_SQRT_2).abs() < 2e-3, "η* = {eta}");
    }

    #[test]
    fn robustness_separable_state_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let psi = product_state(&mut rng, &[2, 2]);
        let eta = steering_robustness(
            &psi.projector(),
            &noisy_pauli_pair(1.0).unwrap(),
            None,
            RobustnessTarget::Lhs,
            NoiseModel::MeasurementDepolarizing,
            BISECTION_TOL,
        )
        .unwrap();
        assert_eq!(eta, 1.0);
    }

    #[test]
    fn robustness_gms1_boundary_for_ghz() {
        let psi = ghz(3, 2).unwrap();
        let eta = steering_robustness(
            &psi.projector(),
            &noisy_pauli_pair(1.0).unwrap(),
            None,
            RobustnessTarget::GmsOneSided,
            NoiseModel::MeasurementDepolarizing,
            BISECTION_TOL,
        )
        .unwrap();
        assert!((eta - FRAC_1_SQRT_2).abs() < 2e-3, "η* = {eta}");
    }

    #[test]
    fn white_noise_restores_lhs_membership() {
        let phi = max_entangled(2).unwrap();
        let s = steer_one_sided(&phi.projector(), &noisy_pauli_pair(1.0).unwrap()).unwrap();
        assert!(is_unsteerable(&s).unwrap().verdict.is_infeasible());
        let noisy = white_noise(&s, 0.3).unwrap();
        noisy.validate(1e-9).unwrap();
        assert!(is_unsteerable(&noisy).unwrap().verdict.is_feasible());
    }

    #[test]
    fn robustness_validates_measurement_arity() {
        let psi = ghz(3, 2).unwrap();
        let meas = noisy_pauli_pair(1.0).unwrap();
        assert!(steering_robustness(
            &psi.projector(),
            &meas,
            Some(&meas),
            RobustnessTarget::GmsOneSided,
            NoiseModel::MeasurementDepolarizing,
            BISECTION_TOL,
        )
        .is_err());
    }
}
