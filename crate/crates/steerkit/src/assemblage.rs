//! Steering assemblages: the conditional states left on the trusted side
//! after the untrusted parties announce measurement outcomes.
//!
//! Members are stored unnormalized, so the trace of `σ_{a|x}` is the outcome
//! probability and summing over outcomes recovers the reduced trusted state.
//! This keeps every constraint downstream affine.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerkitError};
use crate::povm::MeasurementAssemblage;
use crate::qmat::{HermitianMatrix, PureState};

/// Which of the two supported scenarios an assemblage belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "one-sided")]
    OneSided,
    #[serde(rename = "two-sided")]
    TwoSided,
}

/// A family of unnormalized trusted-side states `σ_{a|x}` (one untrusted
/// party) or `σ_{ab|xy}` (two untrusted parties).
#[derive(Debug, Clone)]
pub struct SteeringAssemblage {
    /// Number of untrusted parties (1 or 2).
    n_untrusted: usize,
    /// Outcomes per untrusted party.
    outcomes: Vec<usize>,
    /// Settings per untrusted party.
    settings: Vec<usize>,
    /// Local dimensions of the trusted parties.
    trusted_dims: Vec<usize>,
    /// Row-major over (a₁, …, a_k, x₁, …, x_k).
    members: Vec<HermitianMatrix>,
}

impl SteeringAssemblage {
    /// Assemble from a flat member list in row-major (outcomes, settings)
    /// order. Validation of the physical invariants is separate (`validate`).
    pub fn new(
        outcomes: Vec<usize>,
        settings: Vec<usize>,
        trusted_dims: Vec<usize>,
        members: Vec<HermitianMatrix>,
    ) -> Result<Self> {
        let n_untrusted = outcomes.len();
        if n_untrusted == 0 || n_untrusted > 2 {
            return Err(SteerkitError::UnsupportedScenario(format!(
                "expected 1 or 2 untrusted parties, got {n_untrusted}"
            )));
        }
        if settings.len() != n_untrusted {
            return Err(SteerkitError::DimensionMismatch(format!(
                "{} outcome counts but {} setting counts",
                outcomes.len(),
                settings.len()
            )));
        }
        let expected: usize =
            outcomes.iter().product::<usize>() * settings.iter().product::<usize>();
        if members.len() != expected {
            return Err(SteerkitError::DimensionMismatch(format!(
                "expected {expected} members, got {}",
                members.len()
            )));
        }
        for m in &members {
            if m.dims() != trusted_dims.as_slice() {
                return Err(SteerkitError::DimensionMismatch(format!(
                    "member dims {:?} do not match trusted dims {:?}",
                    m.dims(),
                    trusted_dims
                )));
            }
        }
        Ok(Self {
            n_untrusted,
            outcomes,
            settings,
            trusted_dims,
            members,
        })
    }

    pub fn scenario(&self) -> Scenario {
        if self.n_untrusted == 1 {
            Scenario::OneSided
        } else {
            Scenario::TwoSided
        }
    }

    pub fn n_untrusted(&self) -> usize {
        self.n_untrusted
    }

    pub fn outcomes(&self) -> &[usize] {
        &self.outcomes
    }

    pub fn settings(&self) -> &[usize] {
        &self.settings
    }

    pub fn trusted_dims(&self) -> &[usize] {
        &self.trusted_dims
    }

    pub fn trusted_dim(&self) -> usize {
        self.trusted_dims.iter().product()
    }

    fn flat(&self, a: &[usize], x: &[usize]) -> Result<usize> {
        if a.len() != self.n_untrusted || x.len() != self.n_untrusted {
            return Err(SteerkitError::DimensionMismatch(format!(
                "expected {} outcome and setting indices",
                self.n_untrusted
            )));
        }
        let mut idx = 0usize;
        for (k, &ak) in a.iter().enumerate() {
            if ak >= self.outcomes[k] {
                return Err(SteerkitError::IndexOutOfRange {
                    index: ak,
                    count: self.outcomes[k],
                });
            }
            idx = idx * self.outcomes[k] + ak;
        }
        for (k, &xk) in x.iter().enumerate() {
            if xk >= self.settings[k] {
                return Err(SteerkitError::IndexOutOfRange {
                    index: xk,
                    count: self.settings[k],
                });
            }
            idx = idx * self.settings[k] + xk;
        }
        Ok(idx)
    }

    /// `σ_{a|x}` of a one-sided assemblage.
    pub fn member1(&self, a: usize, x: usize) -> Result<&HermitianMatrix> {
        Ok(&self.members[self.flat(&[a], &[x])?])
    }

    /// `σ_{ab|xy}` of a two-sided assemblage.
    pub fn member2(&self, a: usize, b: usize, x: usize, y: usize) -> Result<&HermitianMatrix> {
        Ok(&self.members[self.flat(&[a, b], &[x, y])?])
    }

    pub fn member(&self, a: &[usize], x: &[usize]) -> Result<&HermitianMatrix> {
        Ok(&self.members[self.flat(a, x)?])
    }

    /// Sum over all outcomes for a fixed joint setting.
    pub fn reduced_state(&self, x: &[usize]) -> Result<HermitianMatrix> {
        let mut total = HermitianMatrix::zeros(self.trusted_dims.clone());
        let n_out: usize = self.outcomes.iter().product();
        for flat_a in 0..n_out {
            let a = unflatten(flat_a, &self.outcomes);
            total = total.add(self.member(&a, x)?)?;
        }
        Ok(total)
    }

    /// Largest max-norm deviation between outcome sums at different settings.
    pub fn no_signaling_residual(&self) -> Result<f64> {
        let n_set: usize = self.settings.iter().product();
        let reference = self.reduced_state(&unflatten(0, &self.settings))?;
        let mut worst = 0.0f64;
        for flat_x in 1..n_set {
            let x = unflatten(flat_x, &self.settings);
            worst = worst.max(self.reduced_state(&x)?.max_abs_diff(&reference));
        }
        Ok(worst)
    }

    /// Check all three invariants: members PSD, no-signaling to the trusted
    /// side, and unit total trace.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for m in &self.members {
            if !m.is_psd(tol) {
                return Err(SteerkitError::Validation(format!(
                    "assemblage member has min eigenvalue {:.3e} < -{tol:.1e}",
                    m.min_eigenvalue()
                )));
            }
        }
        let ns = self.no_signaling_residual()?;
        if ns > tol {
            return Err(SteerkitError::Validation(format!(
                "no-signaling residual {ns:.3e} exceeds {tol:.1e}"
            )));
        }
        let trace = self
            .reduced_state(&unflatten(0, &self.settings))?
            .trace();
        if (trace - 1.0).abs() > tol {
            return Err(SteerkitError::Validation(format!(
                "total trace {trace} differs from 1"
            )));
        }
        Ok(())
    }
}

fn unflatten(mut idx: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for k in (0..sizes.len()).rev() {
        out[k] = idx % sizes[k];
        idx /= sizes[k];
    }
    out
}

/// `Tr_p((M ⊗ 1)ρ)` where `M` acts on party `party` of `rho`. The product
/// itself need not be Hermitian, but its partial trace over `party` is, so we
/// trace the symmetrized product (which has the same partial trace).
fn measure_and_trace(
    rho: &HermitianMatrix,
    m: &HermitianMatrix,
    party: usize,
) -> Result<HermitianMatrix> {
    let n = rho.dims().len();
    if party >= n {
        return Err(SteerkitError::IndexOutOfRange {
            index: party,
            count: n,
        });
    }
    if m.dim() != rho.dims()[party] {
        return Err(SteerkitError::DimensionMismatch(format!(
            "measurement dim {} vs party dim {}",
            m.dim(),
            rho.dims()[party]
        )));
    }
    // embed M on the chosen party
    let mut full = HermitianMatrix::identity(vec![1]);
    for (k, &d) in rho.dims().iter().enumerate() {
        let factor = if k == party {
            m.clone()
        } else {
            HermitianMatrix::identity(vec![d])
        };
        full = full.kron(&factor);
    }
    let full_data = full.data().clone();
    let sym = (&full_data * rho.data() + rho.data() * &full_data)
        * num_complex::Complex64::new(0.5, 0.0);
    let wrapped = HermitianMatrix::new(sym, rho.dims().to_vec())?;
    wrapped.partial_trace(&[party])
}

/// `σ_{a|x} = Tr₁[(A_{a|x} ⊗ 1)ρ]` with party 1 (index 0) untrusted.
pub fn steer_one_sided(
    rho: &HermitianMatrix,
    meas: &MeasurementAssemblage,
) -> Result<SteeringAssemblage> {
    if rho.dims().len() < 2 {
        return Err(SteerkitError::DimensionMismatch(
            "state must have at least one trusted party".into(),
        ));
    }
    let trusted_dims: Vec<usize> = rho.dims()[1..].to_vec();
    let mut members = Vec::with_capacity(meas.n_outcomes() * meas.n_settings());
    for a in 0..meas.n_outcomes() {
        for x in 0..meas.n_settings() {
            members.push(measure_and_trace(rho, meas.element(a, x), 0)?);
        }
    }
    SteeringAssemblage::new(
        vec![meas.n_outcomes()],
        vec![meas.n_settings()],
        trusted_dims,
        members,
    )
}

/// Convenience wrapper taking a pure state.
pub fn steer_one_sided_pure(
    psi: &PureState,
    meas: &MeasurementAssemblage,
) -> Result<SteeringAssemblage> {
    steer_one_sided(&psi.projector(), meas)
}

/// `σ_{ab|xy} = Tr_{12}[(A_{a|x} ⊗ B_{b|y} ⊗ 1)ρ]` with the first two parties
/// untrusted.
pub fn steer_two_sided(
    rho: &HermitianMatrix,
    meas_a: &MeasurementAssemblage,
    meas_b: &MeasurementAssemblage,
) -> Result<SteeringAssemblage> {
    if rho.dims().len() < 3 {
        return Err(SteerkitError::DimensionMismatch(
            "state must have at least one trusted party beyond the two measured ones".into(),
        ));
    }
    let trusted_dims: Vec<usize> = rho.dims()[2..].to_vec();
    let mut members = Vec::new();
    for a in 0..meas_a.n_outcomes() {
        for b in 0..meas_b.n_outcomes() {
            for x in 0..meas_a.n_settings() {
                for y in 0..meas_b.n_settings() {
                    let after_a = measure_and_trace(rho, meas_a.element(a, x), 0)?;
                    members.push(measure_and_trace(&after_a, meas_b.element(b, y), 0)?);
                }
            }
        }
    }
    SteeringAssemblage::new(
        vec![meas_a.n_outcomes(), meas_b.n_outcomes()],
        vec![meas_a.n_settings(), meas_b.n_settings()],
        trusted_dims,
        members,
    )
}

pub fn steer_two_sided_pure(
    psi: &PureState,
    meas_a: &MeasurementAssemblage,
    meas_b: &MeasurementAssemblage,
) -> Result<SteeringAssemblage> {
    steer_two_sided(&psi.projector(), meas_a, meas_b)
}

/// Merge a contiguous run of trusted parties into one party of the product
/// dimension. The member data is untouched — only the dimension grouping
/// changes — so any local model for the merged assemblage is a fortiori a
/// model for the original (coarser splits only lose structure).
pub fn merge_parties(s: &SteeringAssemblage, group: &[usize]) -> Result<SteeringAssemblage> {
    let n = s.trusted_dims().len();
    if group.is_empty() {
        return Err(SteerkitError::InvalidParameter("empty merge group".into()));
    }
    for &g in group {
        if g >= n {
            return Err(SteerkitError::IndexOutOfRange { index: g, count: n });
        }
    }
    for w in group.windows(2) {
        if w[1] != w[0] + 1 {
            return Err(SteerkitError::InvalidParameter(format!(
                "merge group must be a contiguous ascending run, got {group:?}"
            )));
        }
    }
    let merged_dim: usize = group.iter().map(|&g| s.trusted_dims()[g]).product();
    let mut new_dims = Vec::new();
    for (k, &d) in s.trusted_dims().iter().enumerate() {
        if k == group[0] {
            new_dims.push(merged_dim);
        } else if !group.contains(&k) {
            new_dims.push(d);
        }
    }
    let members: Result<Vec<_>> = s
        .members
        .iter()
        .map(|m| m.regroup(new_dims.clone()))
        .collect();
    SteeringAssemblage::new(
        s.outcomes.clone(),
        s.settings.clone(),
        new_dims,
        members?,
    )
}

/// Hand one trusted party of a one-sided assemblage a measurement of its own,
/// producing the two-sided assemblage `σ_{ab|xy} = Tr_p[(M_{b|y} ⊗ 1)σ_{a|x}]`.
pub fn apply_measurement(
    s: &SteeringAssemblage,
    meas: &MeasurementAssemblage,
    party: usize,
) -> Result<SteeringAssemblage> {
    if s.n_untrusted() != 1 {
        return Err(SteerkitError::UnsupportedScenario(
            "apply_measurement expects a one-sided assemblage".into(),
        ));
    }
    if party >= s.trusted_dims().len() {
        return Err(SteerkitError::IndexOutOfRange {
            index: party,
            count: s.trusted_dims().len(),
        });
    }
    let new_trusted: Vec<usize> = s
        .trusted_dims()
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != party)
        .map(|(_, &d)| d)
        .collect();
    let mut members = Vec::new();
    for a in 0..s.outcomes[0] {
        for b in 0..meas.n_outcomes() {
            for x in 0..s.settings[0] {
                for y in 0..meas.n_settings() {
                    members.push(measure_and_trace(
                        s.member1(a, x)?,
                        meas.element(b, y),
                        party,
                    )?);
                }
            }
        }
    }
    SteeringAssemblage::new(
        vec![s.outcomes[0], meas.n_outcomes()],
        vec![s.settings[0], meas.n_settings()],
        new_trusted,
        members,
    )
}

/// On-disk form: members keyed by `"a₁,…|x₁,…"`.
#[derive(Serialize, Deserialize)]
struct AssemblageJson {
    scenario: Scenario,
    outcomes: Vec<usize>,
    settings: Vec<usize>,
    trusted_dims: Vec<usize>,
    members: BTreeMap<String, HermitianMatrix>,
}

fn index_key(a: &[usize], x: &[usize]) -> String {
    let left: Vec<String> = a.iter().map(|v| v.to_string()).collect();
    let right: Vec<String> = x.iter().map(|v| v.to_string()).collect();
    format!("{}|{}", left.join(","), right.join(","))
}

fn parse_key(key: &str, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let bad = || SteerkitError::Validation(format!("malformed member key '{key}'"));
    let (l, r) = key.split_once('|').ok_or_else(bad)?;
    let parse = |part: &str| -> Result<Vec<usize>> {
        part.split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
            .collect()
    };
    let (a, x) = (parse(l)?, parse(r)?);
    if a.len() != n || x.len() != n {
        return Err(bad());
    }
    Ok((a, x))
}

impl Serialize for SteeringAssemblage {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut members = BTreeMap::new();
        let n_out: usize = self.outcomes.iter().product();
        let n_set: usize = self.settings.iter().product();
        for fa in 0..n_out {
            let a = unflatten(fa, &self.outcomes);
            for fx in 0..n_set {
                let x = unflatten(fx, &self.settings);
                let m = self.member(&a, &x).expect("index in range");
                members.insert(index_key(&a, &x), m.clone());
            }
        }
        AssemblageJson {
            scenario: self.scenario(),
            outcomes: self.outcomes.clone(),
            settings: self.settings.clone(),
            trusted_dims: self.trusted_dims.clone(),
            members,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for SteeringAssemblage {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let raw = AssemblageJson::deserialize(de)?;
        let n = raw.outcomes.len();
        let expected_parties = match raw.scenario {
            Scenario::OneSided => 1,
            Scenario::TwoSided => 2,
        };
        if n != expected_parties || raw.settings.len() != n {
            return Err(D::Error::custom("scenario and index counts disagree"));
        }
        let n_members: usize =
            raw.outcomes.iter().product::<usize>() * raw.settings.iter().product::<usize>();
        let mut members = vec![None; n_members];
        let mut probe = SteeringAssemblage {
            n_untrusted: n,
            outcomes: raw.outcomes.clone(),
            settings: raw.settings.clone(),
            trusted_dims: raw.trusted_dims.clone(),
            members: Vec::new(),
        };
        for (key, m) in raw.members {
            let (a, x) = parse_key(&key, n).map_err(D::Error::custom)?;
            let idx = probe.flat(&a, &x).map_err(D::Error::custom)?;
            members[idx] = Some(m);
        }
        let members: Option<Vec<_>> = members.into_iter().collect();
        let members = members.ok_or_else(|| D::Error::custom("missing assemblage member"))?;
        probe.members = members;
        SteeringAssemblage::new(
            probe.outcomes,
            probe.settings,
            probe.trusted_dims,
            probe.members,
        )
        .map_err(D::Error::custom)
    }
}
