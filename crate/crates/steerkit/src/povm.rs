//! POVMs, measurement assemblages, noise models and classical post-processing.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerkitError};
use crate::qmat::HermitianMatrix;

pub fn pauli_x() -> HermitianMatrix {
    let mut m = DMatrix::<Complex64>::zeros(2, 2);
    m[(0, 1)] = Complex64::new(1.0, 0.0);
    m[(1, 0)] = Complex64::new(1.0, 0.0);
    HermitianMatrix::new(m, vec![2]).unwrap()
}

pub fn pauli_y() -> HermitianMatrix {
    let mut m = DMatrix::<Complex64>::zeros(2, 2);
    m[(0, 1)] = Complex64::new(0.0, -1.0);
    m[(1, 0)] = Complex64::new(0.0, 1.0);
    HermitianMatrix::new(m, vec![2]).unwrap()
}

pub fn pauli_z() -> HermitianMatrix {
    let mut m = DMatrix::<Complex64>::zeros(2, 2);
    m[(0, 0)] = Complex64::new(1.0, 0.0);
    m[(1, 1)] = Complex64::new(-1.0, 0.0);
    HermitianMatrix::new(m, vec![2]).unwrap()
}

/// A single measurement: PSD elements summing to the identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Povm {
    elements: Vec<HermitianMatrix>,
}

impl Povm {
    pub fn new(elements: Vec<HermitianMatrix>, tol: f64) -> Result<Self> {
        if elements.is_empty() {
            return Err(SteerkitError::Validation("empty POVM".into()));
        }
        let dims = elements[0].dims().to_vec();
        let mut sum = HermitianMatrix::zeros(dims.clone());
        for (i, e) in elements.iter().enumerate() {
            if e.dims() != dims.as_slice() {
                return Err(SteerkitError::DimensionMismatch(format!(
                    "POVM element {i} has dims {:?}, expected {:?}",
                    e.dims(),
                    dims
                )));
            }
            if !e.is_psd(tol) {
                return Err(SteerkitError::Validation(format!(
                    "POVM element {i} has min eigenvalue {:.3e}",
                    e.min_eigenvalue()
                )));
            }
            sum = sum.add(e)?;
        }
        let residual = sum.max_abs_diff(&HermitianMatrix::identity(dims));
        if residual > tol {
            return Err(SteerkitError::Validation(format!(
                "POVM completeness residual {residual:.3e} exceeds tol {tol:.3e}"
            )));
        }
        Ok(Self { elements })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, k: usize) -> &HermitianMatrix {
        &self.elements[k]
    }

    pub fn elements(&self) -> &[HermitianMatrix] {
        &self.elements
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }
}

/// A setting-indexed family of POVMs `A_{a|x}`.
///
/// Elements are stored dense with a uniform outcome count per setting; ragged
/// scenarios are padded with zero operators at construction so downstream
/// feasibility problems can index regularly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "AssemblageJson", into = "AssemblageJson")]
pub struct MeasurementAssemblage {
    /// Indexed `[setting][outcome]`.
    elements: Vec<Vec<HermitianMatrix>>,
    n_settings: usize,
    n_outcomes: usize,
}

#[derive(Serialize, Deserialize)]
struct AssemblageJson {
    n_settings: usize,
    n_outcomes: usize,
    /// Outer index: setting, inner index: outcome.
    elements: Vec<Vec<HermitianMatrix>>,
}

impl From<MeasurementAssemblage> for AssemblageJson {
    fn from(m: MeasurementAssemblage) -> Self {
        AssemblageJson {
            n_settings: m.n_settings,
            n_outcomes: m.n_outcomes,
            elements: m.elements,
        }
    }
}

impl TryFrom<AssemblageJson> for MeasurementAssemblage {
    type Error = SteerkitError;
    fn try_from(j: AssemblageJson) -> Result<Self> {
        let m = MeasurementAssemblage::new(j.elements)?;
        if m.n_settings != j.n_settings || m.n_outcomes != j.n_outcomes {
            return Err(SteerkitError::Validation(
                "n_settings/n_outcomes fields disagree with element table".into(),
            ));
        }
        Ok(m)
    }
}

impl MeasurementAssemblage {
    /// Build from per-setting element lists (outer index: setting). Ragged
    /// outcome counts are padded with zero operators.
    pub fn new(mut elements: Vec<Vec<HermitianMatrix>>) -> Result<Self> {
        if elements.is_empty() || elements.iter().any(|s| s.is_empty()) {
            return Err(SteerkitError::Validation(
                "assemblage needs at least one setting with one outcome".into(),
            ));
        }
        let dims = elements[0][0].dims().to_vec();
        let n_outcomes = elements.iter().map(|s| s.len()).max().unwrap();
        for setting in elements.iter_mut() {
            while setting.len() < n_outcomes {
                setting.push(HermitianMatrix::zeros(dims.clone()));
            }
        }
        let n_settings = elements.len();
        Ok(Self {
            elements,
            n_settings,
            n_outcomes,
        })
    }

    pub fn from_povms(povms: Vec<Povm>) -> Result<Self> {
        Self::new(povms.into_iter().map(|p| p.elements).collect())
    }

    pub fn n_settings(&self) -> usize {
        self.n_settings
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn dim(&self) -> usize {
        self.elements[0][0].dim()
    }

    pub fn dims(&self) -> &[usize] {
        self.elements[0][0].dims()
    }

    /// The POVM element `A_{a|x}`.
    pub fn element(&self, a: usize, x: usize) -> &HermitianMatrix {
        &self.elements[x][a]
    }

    /// Lists violated constraints (PSD failures, completeness residuals).
    pub fn validate(&self, tol: f64) -> ValidationReport {
        let mut report = ValidationReport {
            violations: Vec::new(),
            min_psd_margin: f64::INFINITY,
            max_completeness_residual: 0.0,
        };
        let id = HermitianMatrix::identity(self.dims().to_vec());
        for x in 0..self.n_settings {
            let mut sum = HermitianMatrix::zeros(self.dims().to_vec());
            for a in 0..self.n_outcomes {
                let e = self.element(a, x);
                let margin = e.min_eigenvalue();
                report.min_psd_margin = report.min_psd_margin.min(margin);
                if margin < -tol {
                    report
                        .violations
                        .push(format!("element a={a} x={x}: negative eigenvalue {margin:.3e}"));
                }
                sum = sum.add(e).expect("uniform dims");
            }
            let residual = sum.max_abs_diff(&id);
            report.max_completeness_residual = report.max_completeness_residual.max(residual);
            if residual > tol {
                report
                    .violations
                    .push(format!("setting x={x}: completeness residual {residual:.3e}"));
            }
        }
        report
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.validate(tol).violations.is_empty()
    }
}

/// Outcome of [`MeasurementAssemblage::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub min_psd_margin: f64,
    pub max_completeness_residual: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Stochastic post-processing table `p(a|x,λ)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseFunction {
    n_settings: usize,
    n_outcomes: usize,
    n_hidden: usize,
    /// Flat, indexed by `(x, λ, a)`.
    table: Vec<f64>,
}

impl ResponseFunction {
    pub fn from_fn(
        n_settings: usize,
        n_outcomes: usize,
        n_hidden: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut table = vec![0.0; n_settings * n_outcomes * n_hidden];
        for x in 0..n_settings {
            for lam in 0..n_hidden {
                let mut total = 0.0;
                for a in 0..n_outcomes {
                    let p = f(a, x, lam);
                    if p < -1e-12 {
                        return Err(SteerkitError::Validation(format!(
                            "negative response probability p({a}|{x},{lam}) = {p}"
                        )));
                    }
                    table[(x * n_hidden + lam) * n_outcomes + a] = p;
                    total += p;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(SteerkitError::Validation(format!(
                        "response not normalized at (x={x}, λ={lam}): Σ_a p = {total}"
                    )));
                }
            }
        }
        Ok(Self {
            n_settings,
            n_outcomes,
            n_hidden,
            table,
        })
    }

    /// λ and a share a label set; every setting copies λ to the outcome.
    pub fn copy_hidden(n_settings: usize, n_outcomes: usize) -> Self {
        Self::from_fn(n_settings, n_outcomes, n_outcomes, |a, _, lam| {
            if a == lam {
                1.0
            } else {
                0.0
            }
        })
        .expect("deterministic table is stochastic")
    }

    pub fn uniform(n_settings: usize, n_outcomes: usize, n_hidden: usize) -> Self {
        let p = 1.0 / n_outcomes as f64;
        Self::from_fn(n_settings, n_outcomes, n_hidden, |_, _, _| p)
            .expect("uniform table is stochastic")
    }

    pub fn p(&self, a: usize, x: usize, lam: usize) -> f64 {
        self.table[(x * self.n_hidden + lam) * self.n_outcomes + a]
    }

    pub fn n_settings(&self) -> usize {
        self.n_settings
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }
}

/// The dichotomic pair `M_{±|1} = ½(1 ± ηX)`, `M_{±|2} = ½(1 ± ηY)`.
/// Outcome 0 is `+`, outcome 1 is `−`.
pub fn noisy_pauli_pair(eta: f64) -> Result<MeasurementAssemblage> {
    pair_along(eta, &pauli_x(), &pauli_y())
}

/// Dichotomic pair `½(1 ± ηD)` along two unit-trace-free observables.
pub fn pair_along(
    eta: f64,
    dir1: &HermitianMatrix,
    dir2: &HermitianMatrix,
) -> Result<MeasurementAssemblage> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(SteerkitError::InvalidParameter(format!(
            "visibility η = {eta} outside [0, 1]"
        )));
    }
    let id = HermitianMatrix::identity(dir1.dims().to_vec());
    let mut settings = Vec::new();
    for dir in [dir1, dir2] {
        settings.push(vec![
            id.add(&dir.scale(eta))?.scale(0.5),
            id.add(&dir.scale(-eta))?.scale(0.5),
        ]);
    }
    MeasurementAssemblage::new(settings)
}

/// `A_{a|x} = Σ_λ p(a|x,λ) G_λ`; valid whenever the inputs are.
pub fn post_process(parent: &Povm, r: &ResponseFunction) -> Result<MeasurementAssemblage> {
    if r.n_hidden() != parent.len() {
        return Err(SteerkitError::DimensionMismatch(format!(
            "response has {} hidden labels, parent has {} elements",
            r.n_hidden(),
            parent.len()
        )));
    }
    let dims = parent.element(0).dims().to_vec();
    let mut settings = Vec::new();
    for x in 0..r.n_settings() {
        let mut outcomes = Vec::new();
        for a in 0..r.n_outcomes() {
            let mut acc = HermitianMatrix::zeros(dims.clone());
            for lam in 0..parent.len() {
                acc = acc.add(&parent.element(lam).scale(r.p(a, x, lam)))?;
            }
            outcomes.push(acc);
        }
        settings.push(outcomes);
    }
    MeasurementAssemblage::new(settings)
}

/// Element-wise visibility noise `A ↦ ηA + (1−η)·Tr(A)·1/d`.
pub fn depolarize(m: &MeasurementAssemblage, eta: f64) -> Result<MeasurementAssemblage> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(SteerkitError::InvalidParameter(format!(
            "visibility η = {eta} outside [0, 1]"
        )));
    }
    let d = m.dim() as f64;
    let id = HermitianMatrix::identity(m.dims().to_vec());
    let mut settings = Vec::new();
    for x in 0..m.n_settings() {
        let mut outcomes = Vec::new();
        for a in 0..m.n_outcomes() {
            let e = m.element(a, x);
            outcomes.push(e.scale(eta).add(&id.scale((1.0 - eta) * e.trace() / d))?);
        }
        settings.push(outcomes);
    }
    MeasurementAssemblage::new(settings)
}
