//! Joint measurability and its distributed generalizations.
//!
//! A measurement assemblage `{A_{a|x}}` is jointly measurable when a single
//! parent POVM `{G_λ}` and classical post-processing reproduce every setting.
//! After the standard absorption of the response function into the parent
//! elements, the hidden label ranges over deterministic strategies and the
//! membership question is a semidefinite feasibility problem. The
//! `genjm_*` functions pose the distributed variants where a product
//! `A_{a|x} ⊗ B_{b|y}` is split between a side that answers `x` classically
//! and a side that answers `y` classically (plus, in the full variant, a
//! correlated term weighted by fixed bipartite correlation tables).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerkitError};
use crate::povm::{depolarize, MeasurementAssemblage, Povm, ResponseFunction};
use crate::qmat::HermitianMatrix;
use crate::sdpcore::{
    enumerate_deterministic, ns_vertices, solve, CorrelationTable, DeterministicStrategy,
    FeasibilityProblem, Term, Verdict,
};

/// Default bisection width for robustness values.
pub const BISECTION_TOL: f64 = 1e-4;

/// A parent POVM together with the response function that recovers the
/// original assemblage through [`post_process`](crate::povm::post_process).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParentMeasurement {
    pub povm: Povm,
    pub response: ResponseFunction,
}

/// Outcome of a joint-measurability test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JmReport {
    pub verdict: Verdict,
    pub parent: Option<ParentMeasurement>,
}

/// Build the JM feasibility problem: blocks `G_λ` over deterministic
/// strategies with `Σ_λ G_λ = 1` and `Σ_{λ: λ(x)=a} G_λ = A_{a|x}`.
///
/// The completeness row plus the constraints for the last outcome of each
/// setting are linearly dependent, so only outcomes `a < n−1` are
/// constrained explicitly.
fn jm_problem(
    m: &MeasurementAssemblage,
    strategies: &[DeterministicStrategy],
) -> Result<(FeasibilityProblem, Vec<usize>)> {
    let mut p = FeasibilityProblem::new();
    let gs: Vec<usize> = (0..strategies.len())
        .map(|k| p.add_block(format!("G[{k}]"), m.dims().to_vec()))
        .collect();
    p.add_equality(
        "completeness",
        gs.iter().map(|&g| Term::plain(g)).collect(),
        HermitianMatrix::identity(m.dims().to_vec()),
    )?;
    for x in 0..m.n_settings() {
        for a in 0..m.n_outcomes().saturating_sub(1) {
            let terms: Vec<Term> = strategies
                .iter()
                .zip(&gs)
                .filter(|(s, _)| s.outcome(x) == a)
                .map(|(_, &g)| Term::plain(g))
                .collect();
            p.add_equality(
                format!("A[{a}|{x}]"),
                terms,
                m.element(a, x).clone(),
            )?;
        }
    }
    Ok((p, gs))
}

/// Decide joint measurability; on feasibility the returned parent is the
/// witness with its deterministic response function.
pub fn is_jointly_measurable(m: &MeasurementAssemblage) -> Result<JmReport> {
    let strategies = enumerate_deterministic(m.n_settings(), m.n_outcomes())?;
    let (p, gs) = jm_problem(m, &strategies)?;
    let verdict = solve(&p)?;
    let parent = match &verdict {
        Verdict::Feasible(w) => {
            let elements: Vec<HermitianMatrix> = gs.iter().map(|&g| w.blocks[g].clone()).collect();
            let povm = Povm::new(elements, 1e-5)?;
            let response = ResponseFunction::from_fn(
                m.n_settings(),
                m.n_outcomes(),
                strategies.len(),
                |a, x, lam| {
                    if strategies[lam].outcome(x) == a {
                        1.0
                    } else {
                        0.0
                    }
                },
            )?;
            Some(ParentMeasurement { povm, response })
        }
        _ => None,
    };
    Ok(JmReport { verdict, parent })
}

/// Largest visibility `η` (within `bisect_tol`) at which the depolarized
/// assemblage stays jointly measurable.
pub fn incompat_robustness(m: &MeasurementAssemblage, bisect_tol: f64) -> Result<f64> {
    let compatible_at = |eta: f64| -> Result<Option<bool>> {
        let noisy = depolarize(m, eta)?;
        Ok(match is_jointly_measurable(&noisy)?.verdict {
            Verdict::Feasible(_) => Some(true),
            Verdict::Infeasible(_) => Some(false),
            Verdict::Inconclusive { .. } => None,
        })
    };
    bisect_visibility(bisect_tol, compatible_at)
}

/// Shared bisection driver over a visibility predicate that may abstain very
/// close to the feasibility boundary. Abstentions at the midpoint are
/// retried at nearby probe points before giving up, which keeps single
/// near-degenerate solves from aborting the whole scan.
pub(crate) fn bisect_visibility(
    bisect_tol: f64,
    probe: impl Fn(f64) -> Result<Option<bool>>,
) -> Result<f64> {
    let decide = |lo: f64, hi: f64| -> Result<(f64, bool)> {
        let w = hi - lo;
        for frac in [0.5, 0.4, 0.6, 0.3, 0.7] {
            let eta = lo + frac * w;
            if let Some(ans) = probe(eta)? {
                return Ok((eta, ans));
            }
        }
        Err(SteerkitError::Inconclusive(format!(
            "no decidable probe point in ({lo}, {hi})"
        )))
    };
    match probe(1.0)? {
        Some(true) => return Ok(1.0),
        Some(false) => {}
        None => {
            return Err(SteerkitError::Inconclusive(
                "undecidable at full visibility".into(),
            ))
        }
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64); // invariant: member at lo, not at hi
    while hi - lo > bisect_tol {
        let (eta, ans) = decide(lo, hi)?;
        if ans {
            lo = eta;
        } else {
            hi = eta;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Which correlation term [`genjm_full`] admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrMode {
    /// Local-deterministic products: feasibility is a sound "decomposition
    /// exists" statement.
    Inner,
    /// No-signaling vertices: infeasibility is a sound "no decomposition
    /// even with arbitrary no-signaling correlations" statement.
    Outer,
}

/// Witness blocks of a distributed joint-measurement decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenJmDecomposition {
    /// `G[λ][b][y]` on the joint space; `Σ_b G[λ][b][y]` is y-independent.
    pub g: Vec<Vec<Vec<HermitianMatrix>>>,
    /// `H[μ][a][x]` on the joint space; `Σ_a H[μ][a][x]` is x-independent.
    pub h: Vec<Vec<Vec<HermitianMatrix>>>,
    /// Optional correlated blocks `F[τ]`, aligned with `tables`.
    pub f: Vec<HermitianMatrix>,
    /// Correlation tables weighting the `F` blocks.
    pub tables: Vec<CorrelationTable>,
    pub response_a: ResponseFunction,
    pub response_b: ResponseFunction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenJmReport {
    pub verdict: Verdict,
    pub decomposition: Option<GenJmDecomposition>,
}

struct GenJmLayout {
    strategies_a: Vec<DeterministicStrategy>,
    strategies_b: Vec<DeterministicStrategy>,
    g_idx: Vec<Vec<Vec<usize>>>,
    h_idx: Vec<Vec<Vec<usize>>>,
    f_idx: Vec<usize>,
    tables: Vec<CorrelationTable>,
}

fn genjm_problem(
    ma: &MeasurementAssemblage,
    mb: &MeasurementAssemblage,
    tables: Vec<CorrelationTable>,
) -> Result<(FeasibilityProblem, GenJmLayout)> {
    let strategies_a = enumerate_deterministic(ma.n_settings(), ma.n_outcomes())?;
    let strategies_b = enumerate_deterministic(mb.n_settings(), mb.n_outcomes())?;
    let mut joint_dims = ma.dims().to_vec();
    joint_dims.extend_from_slice(mb.dims());

    let mut p = FeasibilityProblem::new();
    let g_idx: Vec<Vec<Vec<usize>>> = (0..strategies_a.len())
        .map(|l| {
            (0..mb.n_outcomes())
                .map(|b| {
                    (0..mb.n_settings())
                        .map(|y| p.add_block(format!("G[{l}][{b}|{y}]"), joint_dims.clone()))
                        .collect()
                })
                .collect()
        })
        .collect();
    let h_idx: Vec<Vec<Vec<usize>>> = (0..strategies_b.len())
        .map(|m| {
            (0..ma.n_outcomes())
                .map(|a| {
                    (0..ma.n_settings())
                        .map(|x| p.add_block(format!("H[{m}][{a}|{x}]"), joint_dims.clone()))
                        .collect()
                })
                .collect()
        })
        .collect();
    let f_idx: Vec<usize> = (0..tables.len())
        .map(|t| p.add_block(format!("F[{t}]"), joint_dims.clone()))
        .collect();

    // reconstruction: Σ_{λ:λ(x)=a} G[λ][b][y] + Σ_{μ:μ(y)=b} H[μ][a][x]
    //                 + Σ_τ p(ab|xy,τ) F[τ] = A_{a|x} ⊗ B_{b|y}
    //
    // Together with the marginal constraints below, the rows with a last
    // outcome at a non-reference setting are linear combinations of the
    // others (outcome sums are setting-independent on both sides), so they
    // are skipped to keep the equality system full-rank.
    for a in 0..ma.n_outcomes() {
        for x in 0..ma.n_settings() {
            if x > 0 && a == ma.n_outcomes() - 1 {
                continue;
            }
            for b in 0..mb.n_outcomes() {
                for y in 0..mb.n_settings() {
                    if y > 0 && b == mb.n_outcomes() - 1 {
                        continue;
                    }
                    let mut terms = Vec::new();
                    for (l, s) in strategies_a.iter().enumerate() {
                        if s.outcome(x) == a {
                            terms.push(Term::plain(g_idx[l][b][y]));
                        }
                    }
                    for (m, s) in strategies_b.iter().enumerate() {
                        if s.outcome(y) == b {
                            terms.push(Term::plain(h_idx[m][a][x]));
                        }
                    }
                    for (t, table) in tables.iter().enumerate() {
                        let w = table.p(a, b, x, y);
                        if w != 0.0 {
                            terms.push(Term::scaled(f_idx[t], w));
                        }
                    }
                    let target = ma.element(a, x).kron(mb.element(b, y));
                    p.add_equality(format!("recon[{a}|{x},{b}|{y}]"), terms, target)?;
                }
            }
        }
    }
    // marginal independence: Σ_b G[λ][b][y] equal across y (and mirrored)
    for (l, _) in strategies_a.iter().enumerate() {
        for y in 1..mb.n_settings() {
            let mut terms = Vec::new();
            for b in 0..mb.n_outcomes() {
                terms.push(Term::plain(g_idx[l][b][0]));
                terms.push(Term::scaled(g_idx[l][b][y], -1.0));
            }
            p.add_equality(
                format!("Gmarg[{l}][{y}]"),
                terms,
                HermitianMatrix::zeros(joint_dims.clone()),
            )?;
        }
    }
    for (m, _) in strategies_b.iter().enumerate() {
        for x in 1..ma.n_settings() {
            let mut terms = Vec::new();
            for a in 0..ma.n_outcomes() {
                terms.push(Term::plain(h_idx[m][a][0]));
                terms.push(Term::scaled(h_idx[m][a][x], -1.0));
            }
            p.add_equality(
                format!("Hmarg[{m}][{x}]"),
                terms,
                HermitianMatrix::zeros(joint_dims.clone()),
            )?;
        }
    }
    Ok((
        p,
        GenJmLayout {
            strategies_a,
            strategies_b,
            g_idx,
            h_idx,
            f_idx,
            tables,
        },
    ))
}

fn genjm_report(
    ma: &MeasurementAssemblage,
    mb: &MeasurementAssemblage,
    verdict: Verdict,
    layout: GenJmLayout,
) -> Result<GenJmReport> {
    let decomposition = match &verdict {
        Verdict::Feasible(w) => {
            let pick3 = |idx: &Vec<Vec<Vec<usize>>>| -> Vec<Vec<Vec<HermitianMatrix>>> {
                idx.iter()
                    .map(|bb| {
                        bb.iter()
                            .map(|yy| yy.iter().map(|&k| w.blocks[k].clone()).collect())
                            .collect()
                    })
                    .collect()
            };
            let response_a = ResponseFunction::from_fn(
                ma.n_settings(),
                ma.n_outcomes(),
                layout.strategies_a.len(),
                |a, x, l| {
                    if layout.strategies_a[l].outcome(x) == a {
                        1.0
                    } else {
                        0.0
                    }
                },
            )?;
            let response_b = ResponseFunction::from_fn(
                mb.n_settings(),
                mb.n_outcomes(),
                layout.strategies_b.len(),
                |b, y, m| {
                    if layout.strategies_b[m].outcome(y) == b {
                        1.0
                    } else {
                        0.0
                    }
                },
            )?;
            Some(GenJmDecomposition {
                g: pick3(&layout.g_idx),
                h: pick3(&layout.h_idx),
                f: layout.f_idx.iter().map(|&k| w.blocks[k].clone()).collect(),
                tables: layout.tables,
                response_a,
                response_b,
            })
        }
        _ => None,
    };
    Ok(GenJmReport {
        verdict,
        decomposition,
    })
}

/// Distributed joint measurability without a correlated term: can
/// `A_{a|x} ⊗ B_{b|y}` be split into a part that answers `x` classically and
/// a part that answers `y` classically? Feasibility rules out genuine
/// multipartite steering from these measurements on any shared state.
pub fn genjm_no_free(
    ma: &MeasurementAssemblage,
    mb: &MeasurementAssemblage,
) -> Result<GenJmReport> {
    let (p, layout) = genjm_problem(ma, mb, Vec::new())?;
    let verdict = solve(&p)?;
    genjm_report(ma, mb, verdict, layout)
}

/// Distributed joint measurability with an additional correlated term
/// `Σ_τ p(ab|xy,τ) F_τ`. The true formulation ranges over quantum
/// correlations, which is not semidefinite-representable; `CorrMode` selects
/// the sound bracket: local-deterministic products from below, no-signaling
/// vertices from above.
pub fn genjm_full(
    ma: &MeasurementAssemblage,
    mb: &MeasurementAssemblage,
    mode: CorrMode,
) -> Result<GenJmReport> {
    let tables = match mode {
        CorrMode::Inner => {
            let sa = enumerate_deterministic(ma.n_settings(), ma.n_outcomes())?;
            let sb = enumerate_deterministic(mb.n_settings(), mb.n_outcomes())?;
            let mut tables = Vec::with_capacity(sa.len() * sb.len());
            for da in &sa {
                for db in &sb {
                    tables.push(CorrelationTable::from_deterministic(
                        da,
                        db,
                        ma.n_outcomes(),
                        mb.n_outcomes(),
                    ));
                }
            }
            tables
        }
        CorrMode::Outer => ns_vertices(
            ma.n_outcomes(),
            mb.n_outcomes(),
            ma.n_settings(),
            mb.n_settings(),
        )?,
    };
    let (p, layout) = genjm_problem(ma, mb, tables)?;
    let verdict = solve(&p)?;
    genjm_report(ma, mb, verdict, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::povm::{noisy_pauli_pair, pair_along, post_process};
    use crate::sdpcore::CERTIFICATE_GAP_TOL;
    use crate::testutil::{pauli_x, pauli_y, pauli_z};

    fn eta_star() -> f64 {
        2f64.powf(-0.25)
    }

    #[test]
    fn compatible_pair_has_valid_parent() {
        let m = noisy_pauli_pair(0.5).unwrap();
        let report = is_jointly_measurable(&m).unwrap();
        assert!(report.verdict.is_feasible());
        let parent = report.parent.expect("parent on feasibility");
        let mut total = crate::qmat::HermitianMatrix::zeros(vec![2]);
        for e in parent.povm.elements() {
            total = total.add(e).unwrap();
        }
        assert!(total.max_abs_diff(&crate::qmat::HermitianMatrix::identity(vec![2])) < 1e-6);
        let rebuilt = post_process(&parent.povm, &parent.response).unwrap();
        for x in 0..2 {
            for a in 0..2 {
                assert!(rebuilt.element(a, x).max_abs_diff(m.element(a, x)) < 1e-6);
            }
        }
    }

    #[test]
    fn threshold_pair_is_incompatible_with_certificate() {
        let m = noisy_pauli_pair(eta_star()).unwrap();
        let report = is_jointly_measurable(&m).unwrap();
        let cert = report.verdict.certificate().expect("infeasible");
        assert!(cert.gap >= CERTIFICATE_GAP_TOL);
        assert!(report.parent.is_none());
    }

    #[test]
    fn single_setting_is_its_own_parent() {
        let m = MeasurementAssemblage::new(vec![vec![
            crate::qmat::HermitianMatrix::identity(vec![2]).scale(0.3),
            crate::qmat::HermitianMatrix::identity(vec![2]).scale(0.7),
        ]])
        .unwrap();
        let report = is_jointly_measurable(&m).unwrap();
        assert!(report.verdict.is_feasible());
    }

    #[test]
    fn robustness_of_orthogonal_sharp_pair() {
        let sharp = noisy_pauli_pair(1.0).unwrap();
        let eta = incompat_robustness(&sharp, BISECTION_TOL).unwrap();
        assert!(
            (eta - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3,
            "η* = {eta}"
        );
    }

    #[test]
    fn robustness_of_compatible_pair_is_one() {
        let m = noisy_pauli_pair(0.5).unwrap();
        assert_eq!(incompat_robustness(&m, BISECTION_TOL).unwrap(), 1.0);
    }

    #[test]
    fn robustness_of_three_paulis() {
        // cross-check against the standard three-orthogonal-observable value
        let id = crate::qmat::HermitianMatrix::identity(vec![2]);
        let mut settings = Vec::new();
        for dir in [pauli_x(), pauli_y(), pauli_z()] {
            settings.push(vec![
                id.add(&dir).unwrap().scale(0.5),
                id.sub(&dir).unwrap().scale(0.5),
            ]);
        }
        let m = MeasurementAssemblage::new(settings).unwrap();
        let eta = incompat_robustness(&m, BISECTION_TOL).unwrap();
        assert!((eta - 1.0 / 3f64.sqrt()).abs() < 1e-3, "η* = {eta}");
    }

    #[test]
    fn genjm_no_free_at_threshold_is_feasible() {
        let m = noisy_pauli_pair(eta_star()).unwrap();
        let report = genjm_no_free(&m, &m).unwrap();
        assert!(report.verdict.is_feasible(), "got {:?}", report.verdict);
        let dec = report.decomposition.expect("blocks on feasibility");
        // spot-check the marginal independence invariant on the witness
        for l in 0..dec.g.len() {
            let sum_y = |y: usize| {
                let mut acc = crate::qmat::HermitianMatrix::zeros(vec![2, 2]);
                for b in 0..2 {
                    acc = acc.add(&dec.g[l][b][y]).unwrap();
                }
                acc
            };
            assert!(sum_y(0).max_abs_diff(&sum_y(1)) < 1e-6);
        }
    }

    #[test]
    fn genjm_no_free_sharp_paulis_infeasible() {
        let m = noisy_pauli_pair(1.0).unwrap();
        let report = genjm_no_free(&m, &m).unwrap();
        assert!(report.verdict.is_infeasible(), "got {:?}", report.verdict);
    }

    #[test]
    fn genjm_no_free_with_one_compatible_side() {
        // a compatible A side lets the H term carry everything
        let ma = noisy_pauli_pair(0.5).unwrap();
        let mb = noisy_pauli_pair(1.0).unwrap();
        let report = genjm_no_free(&ma, &mb).unwrap();
        assert!(report.verdict.is_feasible(), "got {:?}", report.verdict);
    }

    #[test]
    fn genjm_full_monotonicity() {
        // feasible without a correlated term ⇒ feasible in both modes
        let m = noisy_pauli_pair(eta_star()).unwrap();
        assert!(genjm_full(&m, &m, CorrMode::Inner).unwrap().verdict.is_feasible());
        assert!(genjm_full(&m, &m, CorrMode::Outer).unwrap().verdict.is_feasible());
    }

    #[test]
    fn genjm_full_outer_sharp_paulis_infeasible() {
        let m = noisy_pauli_pair(1.0).unwrap();
        let report = genjm_full(&m, &m, CorrMode::Outer).unwrap();
        assert!(report.verdict.is_infeasible(), "got {:?}", report.verdict);
    }

    #[test]
    fn genjm_full_inner_trivial_measurements() {
        let id = crate::qmat::HermitianMatrix::identity(vec![2]);
        let trivial = MeasurementAssemblage::new(vec![
            vec![id.scale(0.5), id.scale(0.5)],
            vec![id.scale(0.5), id.scale(0.5)],
        ])
        .unwrap();
        let report = genjm_full(&trivial, &trivial, CorrMode::Inner).unwrap();
        assert!(report.verdict.is_feasible());
    }

    #[test]
    fn genjm_outer_rejects_unsupported_scenarios() {
        let pair = noisy_pauli_pair(0.5).unwrap();
        let three = {
            let id = crate::qmat::HermitianMatrix::identity(vec![2]);
            MeasurementAssemblage::new(vec![
                vec![id.add(&pauli_x()).unwrap().scale(0.5), id.sub(&pauli_x()).unwrap().scale(0.5)],
                vec![id.add(&pauli_y()).unwrap().scale(0.5), id.sub(&pauli_y()).unwrap().scale(0.5)],
                vec![id.add(&pauli_z()).unwrap().scale(0.5), id.sub(&pauli_z()).unwrap().scale(0.5)],
            ])
            .unwrap()
        };
        assert!(genjm_full(&three, &pair, CorrMode::Outer).is_err());
    }

    #[test]
    fn jm_tracks_pair_visibility() {
        // just below the 1/√2 threshold: compatible; just above: not
        let threshold = std::f64::consts::FRAC_1_SQRT_2;
        let below = noisy_pauli_pair(threshold - 0.02).unwrap();
        assert!(is_jointly_measurable(&below).unwrap().verdict.is_feasible());
        let above = pair_along(threshold + 0.02, &pauli_x(), &pauli_y()).unwrap();
        assert!(is_jointly_measurable(&above).unwrap().verdict.is_infeasible());
    }
}
