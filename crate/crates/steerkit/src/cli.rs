//! Batch command-line front end.
//!
//! Every subcommand reads JSON (files or stdin), prints a JSON report to
//! stdout and exits with one of four codes:
//!
//! * `0` — a verdict was produced (feasible *or* infeasible both count),
//! * `2` — validation failed (unreadable input, dimension mismatch, a
//!   closed-form check that did not pass),
//! * `3` — the solver abstained (inconclusive verdict),
//! * `64` — usage error (unknown subcommand or flag).
//!
//! Reports are wrapped in an envelope `{ "manifest": …, "result": … }`
//! carrying a [`RunManifest`]: the subcommand, SHA-256 hashes of every
//! input, the tolerances in force, the solver adapter and the wall time.
//! Commands that consume assemblages accept either a bare object or such an
//! envelope, so outputs pipe directly into inputs:
//!
//! ```text
//! steerkit steer --state ghz3.json --meas pair.json | steerkit lhs
//! ```
//!
//! The solver adapter is selected with the `STEERKIT_SOLVER` environment
//! variable, as everywhere else in the crate.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::assemblage::{steer_one_sided, steer_two_sided, SteeringAssemblage};
use crate::construct::{parent_from_lhs, verify_thm2};
use crate::error::{Result, SteerkitError};
use crate::incompat::{
    genjm_full, genjm_no_free, incompat_robustness, is_jointly_measurable, CorrMode,
    ParentMeasurement, BISECTION_TOL,
};
use crate::povm::{noisy_pauli_pair, MeasurementAssemblage};
use crate::qmat::{HermitianMatrix, PureState};
use crate::sdpcore::{Verdict, CERTIFICATE_GAP_TOL, WITNESS_EIG_TOL, WITNESS_RESIDUAL_TOL};
use crate::states;
use crate::steering::{
    gms_one_sided, gms_two_sided, is_unsteerable, steering_robustness, GmsVerdict, NoiseModel,
    RobustnessTarget,
};

pub const EXIT_VERDICT: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Provenance record serialized with every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    /// Subcommand that produced the report.
    pub command: String,
    /// SHA-256 of every input, keyed by path (or `<stdin>`).
    pub inputs: BTreeMap<String, String>,
    /// Numerical tolerances in force for this run.
    pub tolerances: BTreeMap<String, f64>,
    /// Solver adapter name (from `STEERKIT_SOLVER`, default `clarabel`).
    pub solver: String,
    /// Short verdict summary, when the command produces one.
    pub verdict: Option<String>,
    pub wall_time_ms: f64,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    manifest: &'a RunManifest,
    result: &'a T,
}

#[derive(Parser)]
#[command(
    name = "steerkit",
    version,
    about = "Steering, incompatibility and genuine multipartite steering certification"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateKind {
    Ghz,
    W,
    Dicke,
    MaxEntangled,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasKind {
    /// Noisy Pauli X/Y pair at visibility `--eta`.
    PauliPair,
    /// Two settings of the trivial measurement {1, 0}.
    Trivial,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrArg {
    Inner,
    Outer,
}

impl From<CorrArg> for CorrMode {
    fn from(c: CorrArg) -> CorrMode {
        match c {
            CorrArg::Inner => CorrMode::Inner,
            CorrArg::Outer => CorrMode::Outer,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GenJmArg {
    /// No correlated term at all.
    NoFree,
    /// Local-deterministic correlations (sound from below).
    Inner,
    /// No-signaling vertices (sound from above).
    Outer,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Lhs,
    Gms1,
    Gms2,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    /// Depolarize the measurements.
    Depolarize,
    /// Mix white noise into the assemblage.
    WhiteNoise,
}

#[derive(Subcommand)]
enum Command {
    /// Write a named pure state as JSON.
    MakeState {
        #[arg(long, value_enum)]
        kind: StateKind,
        /// Number of parties (ghz, w, dicke).
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Local dimension (ghz, max-entangled).
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Excitation number (dicke).
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a measurement assemblage as JSON.
    MakeMeas {
        #[arg(long, value_enum)]
        kind: MeasKind,
        /// Visibility for pauli-pair.
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply measurements to a state and emit the steering assemblage.
    Steer {
        /// Pure state or density matrix (JSON).
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        meas: PathBuf,
        /// Second measured party; untrusted parties are always the first
        /// one(s) of the state.
        #[arg(long)]
        meas_b: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Joint measurability of a measurement assemblage.
    Jm {
        /// Input file; stdin when omitted.
        #[arg(long)]
        meas: Option<PathBuf>,
    },
    /// Local-hidden-state membership of a one-sided assemblage.
    Lhs {
        #[arg(long)]
        assemblage: Option<PathBuf>,
    },
    /// Genuine-multipartite-steering membership, one untrusted party.
    Gms1 {
        #[arg(long)]
        assemblage: Option<PathBuf>,
    },
    /// Genuine-multipartite-steering membership, two untrusted parties.
    Gms2 {
        #[arg(long)]
        assemblage: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = CorrArg::Inner)]
        corr: CorrArg,
    },
    /// Distributed ("genuinely joint") measurability of two assemblages.
    Genjm {
        #[arg(long)]
        meas: PathBuf,
        /// Second party's assemblage; reuses --meas when omitted.
        #[arg(long)]
        meas_b: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = GenJmArg::NoFree)]
        mode: GenJmArg,
    },
    /// Critical visibility of a target membership under a noise model.
    Robustness {
        #[arg(long, value_enum)]
        target: TargetArg,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        meas: PathBuf,
        #[arg(long)]
        meas_b: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = NoiseArg::Depolarize)]
        noise: NoiseArg,
        #[arg(long, default_value_t = BISECTION_TOL)]
        bisect_tol: f64,
        /// Bisect the joint-measurability threshold instead of a steering
        /// target (ignores --state).
        #[arg(long, default_value_t = false)]
        jm: bool,
    },
    /// Check the closed-form decomposition at visibility 2^(-1/4) in
    /// extended precision; exit 0 iff every check passes.
    VerifyThm2,
    /// Extract a parent measurement from an unsteerable pure-state
    /// assemblage.
    ExtractParent {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        meas: PathBuf,
    },
}

/// Parse `argv` and run; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.cmd) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                SteerkitError::Inconclusive(_) => EXIT_INCONCLUSIVE,
                _ => EXIT_VALIDATION,
            }
        }
    }
}

struct ManifestBuilder {
    manifest: RunManifest,
    start: Instant,
}

impl ManifestBuilder {
    fn new(command: &str) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                command: command.into(),
                inputs: BTreeMap::new(),
                tolerances: BTreeMap::new(),
                solver: std::env::var("STEERKIT_SOLVER")
                    .ok()
                    .filter(|s| !s.is_empty())
                    .unwrap_or_else(|| "clarabel".into()),
                verdict: None,
                wall_time_ms: 0.0,
            },
            start: Instant::now(),
        }
    }

    fn tol(mut self, name: &str, value: f64) -> Self {
        self.manifest.tolerances.insert(name.into(), value);
        self
    }

    fn solver_tols(self) -> Self {
        self.tol("witness_residual", WITNESS_RESIDUAL_TOL)
            .tol("witness_eigenvalue", WITNESS_EIG_TOL)
            .tol("certificate_gap", CERTIFICATE_GAP_TOL)
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        let digest = Sha256::digest(bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.manifest.inputs.insert(name.into(), hex);
    }

    fn finish(mut self, verdict: Option<String>) -> RunManifest {
        self.manifest.verdict = verdict;
        self.manifest.wall_time_ms = self.start.elapsed().as_secs_f64() * 1e3;
        self.manifest
    }
}

/// Read a file (or stdin when `path` is `None`), recording its hash.
fn read_input(mb: &mut ManifestBuilder, path: Option<&Path>) -> Result<Vec<u8>> {
    let (name, bytes) = match path {
        Some(p) => (
            p.display().to_string(),
            std::fs::read(p).map_err(|e| {
                SteerkitError::Validation(format!("cannot read {}: {e}", p.display()))
            })?,
        ),
        None => {
            let mut buf = Vec::new();
            std::io::stdin()
                .read_to_end(&mut buf)
                .map_err(|e| SteerkitError::Validation(format!("cannot read stdin: {e}")))?;
            ("<stdin>".into(), buf)
        }
    };
    mb.record(&name, &bytes);
    Ok(bytes)
}

/// Deserialize, unwrapping a `{ "manifest": …, "result": … }` envelope if
/// one is present, so command outputs pipe into command inputs.
fn parse_input<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    let mut value: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| SteerkitError::Validation(format!("invalid JSON input: {e}")))?;
    if let Some(inner) = value.get_mut("result") {
        value = inner.take();
    }
    serde_json::from_value(value)
        .map_err(|e| SteerkitError::Validation(format!("malformed input object: {e}")))
}

fn load<T: DeserializeOwned>(mb: &mut ManifestBuilder, path: Option<&Path>) -> Result<T> {
    let bytes = read_input(mb, path)?;
    parse_input(&bytes)
}

/// A state file may hold a pure state or a density matrix; both are
/// accepted wherever a density matrix is expected.
fn load_density(mb: &mut ManifestBuilder, path: &Path) -> Result<HermitianMatrix> {
    let bytes = read_input(mb, Some(path))?;
    if let Ok(psi) = parse_input::<PureState>(&bytes) {
        return Ok(psi.projector());
    }
    parse_input::<HermitianMatrix>(&bytes)
}

fn emit<T: Serialize>(manifest: &RunManifest, result: &T, out: Option<&Path>) -> Result<()> {
    let report = Report { manifest, result };
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| SteerkitError::Validation(format!("cannot serialize report: {e}")))?;
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| {
            SteerkitError::Validation(format!("cannot write {}: {e}", p.display()))
        })?,
        None => println!("{text}"),
    }
    Ok(())
}

fn verdict_label(v: &Verdict) -> (String, i32) {
    match v {
        Verdict::Feasible(_) => ("feasible".into(), EXIT_VERDICT),
        Verdict::Infeasible(_) => ("infeasible".into(), EXIT_VERDICT),
        Verdict::Inconclusive { .. } => ("inconclusive".into(), EXIT_INCONCLUSIVE),
    }
}

fn gms_label(v: &GmsVerdict) -> (String, i32) {
    match v {
        GmsVerdict::Member => ("member".into(), EXIT_VERDICT),
        GmsVerdict::MemberUnderRelaxation => ("member-under-relaxation".into(), EXIT_VERDICT),
        GmsVerdict::CertifiedGms => ("certified-gms".into(), EXIT_VERDICT),
        GmsVerdict::Inconclusive { .. } => ("inconclusive".into(), EXIT_INCONCLUSIVE),
    }
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::MakeState { kind, n, d, k, out } => {
            let mb = ManifestBuilder::new("make-state");
            let psi = match kind {
                StateKind::Ghz => states::ghz(n, d)?,
                StateKind::W => states::w(n)?,
                StateKind::Dicke => states::dicke(n, k)?,
                StateKind::MaxEntangled => states::max_entangled(d)?,
            };
            emit(&mb.finish(None), &psi, out.as_deref())?;
            Ok(EXIT_VERDICT)
        }
        Command::MakeMeas { kind, eta, out } => {
            let mb = ManifestBuilder::new("make-meas");
            let meas = match kind {
                MeasKind::PauliPair => noisy_pauli_pair(eta)?,
                MeasKind::Trivial => {
                    let id = HermitianMatrix::identity(vec![2]);
                    let zero = HermitianMatrix::zeros(vec![2]);
                    MeasurementAssemblage::new(vec![
                        vec![id.clone(), zero.clone()],
                        vec![id, zero],
                    ])?
                }
            };
            emit(&mb.finish(None), &meas, out.as_deref())?;
            Ok(EXIT_VERDICT)
        }
        Command::Steer {
            state,
            meas,
            meas_b,
            out,
        } => {
            let mut mb = ManifestBuilder::new("steer");
            let rho = load_density(&mut mb, &state)?;
            let ma: MeasurementAssemblage = load(&mut mb, Some(&meas))?;
            let s = match meas_b {
                Some(pb) => {
                    let mbs: MeasurementAssemblage = load(&mut mb, Some(&pb))?;
                    steer_two_sided(&rho, &ma, &mbs)?
                }
                None => steer_one_sided(&rho, &ma)?,
            };
            emit(&mb.finish(None), &s, out.as_deref())?;
            Ok(EXIT_VERDICT)
        }
        Command::Jm { meas } => {
            let mut mb = ManifestBuilder::new("jm").solver_tols();
            let m: MeasurementAssemblage = load(&mut mb, meas.as_deref())?;
            let report = is_jointly_measurable(&m)?;
            let (label, code) = verdict_label(&report.verdict);
            emit(&mb.finish(Some(label)), &report, None)?;
            Ok(code)
        }
        Command::Lhs { assemblage } => {
            let mut mb = ManifestBuilder::new("lhs").solver_tols();
            let s: SteeringAssemblage = load(&mut mb, assemblage.as_deref())?;
            let report = is_unsteerable(&s)?;
            let (label, code) = verdict_label(&report.verdict);
            emit(&mb.finish(Some(label)), &report, None)?;
            Ok(code)
        }
        Command::Gms1 { assemblage } => {
            let mut mb = ManifestBuilder::new("gms1").solver_tols();
            let s: SteeringAssemblage = load(&mut mb, assemblage.as_deref())?;
            let report = gms_one_sided(&s)?;
            let (label, code) = gms_label(&report.verdict);
            emit(&mb.finish(Some(label)), &report, None)?;
            Ok(code)
        }
        Command::Gms2 { assemblage, corr } => {
            let mut mb = ManifestBuilder::new("gms2").solver_tols();
            let s: SteeringAssemblage = load(&mut mb, assemblage.as_deref())?;
            let report = gms_two_sided(&s, corr.into())?;
            let (label, code) = gms_label(&report.verdict);
            emit(&mb.finish(Some(label)), &report, None)?;
            Ok(code)
        }
        Command::Genjm { meas, meas_b, mode } => {
            let mut mb = ManifestBuilder::new("genjm").solver_tols();
            let ma: MeasurementAssemblage = load(&mut mb, Some(&meas))?;
            let mbs: MeasurementAssemblage = match &meas_b {
                Some(p) => load(&mut mb, Some(p))?,
                None => ma.clone(),
            };
            let report = match mode {
                GenJmArg::NoFree => genjm_no_free(&ma, &mbs)?,
                GenJmArg::Inner => genjm_full(&ma, &mbs, CorrMode::Inner)?,
                GenJmArg::Outer => genjm_full(&ma, &mbs, CorrMode::Outer)?,
            };
            let (label, code) = verdict_label(&report.verdict);
            emit(&mb.finish(Some(label)), &report, None)?;
            Ok(code)
        }
        Command::Robustness {
            target,
            state,
            meas,
            meas_b,
            noise,
            bisect_tol,
            jm,
        } => {
            let mut mb = ManifestBuilder::new("robustness")
                .solver_tols()
                .tol("bisect_tol", bisect_tol);
            let ma: MeasurementAssemblage = load(&mut mb, Some(&meas))?;
            let eta = if jm {
                incompat_robustness(&ma, bisect_tol)?
            } else {
                let rho = load_density(&mut mb, &state)?;
                let mbs: Option<MeasurementAssemblage> = match &meas_b {
                    Some(p) => Some(load(&mut mb, Some(p))?),
                    None => None,
                };
                let target = match target {
                    TargetArg::Lhs => RobustnessTarget::Lhs,
                    TargetArg::Gms1 => RobustnessTarget::GmsOneSided,
                    TargetArg::Gms2 => RobustnessTarget::GmsTwoSided,
                };
                let noise = match noise {
                    NoiseArg::Depolarize => NoiseModel::MeasurementDepolarizing,
                    NoiseArg::WhiteNoise => NoiseModel::AssemblageWhiteNoise,
                };
                steering_robustness(&rho, &ma, mbs.as_ref(), target, noise, bisect_tol)?
            };
            #[derive(Serialize)]
            struct RobustnessResult {
                critical_visibility: f64,
            }
            emit(
                &mb.finish(Some(format!("{eta:.6}"))),
                &RobustnessResult {
                    critical_visibility: eta,
                },
                None,
            )?;
            Ok(EXIT_VERDICT)
        }
        Command::VerifyThm2 => {
            let mb = ManifestBuilder::new("verify-thm2")
                .tol("reconstruction", crate::construct::RECONSTRUCTION_TOL)
                .tol("negative_control", crate::construct::NEGATIVE_CONTROL_FLOOR);
            let report = verify_thm2()?;
            let passed = report.passed;
            let label = if passed { "passed" } else { "failed" };
            emit(&mb.finish(Some(label.into())), &report, None)?;
            Ok(if passed { EXIT_VERDICT } else { EXIT_VALIDATION })
        }
        Command::ExtractParent { state, meas } => {
            let mut mb = ManifestBuilder::new("extract-parent").solver_tols();
            let bytes = read_input(&mut mb, Some(&state))?;
            let psi: PureState = parse_input(&bytes)?;
            let ma: MeasurementAssemblage = load(&mut mb, Some(&meas))?;
            let s = steer_one_sided(&psi.projector(), &ma)?;
            let report = is_unsteerable(&s)?;
            #[derive(Serialize)]
            struct ExtractResult {
                verdict: String,
                parent: Option<ParentMeasurement>,
            }
            let (label, code) = verdict_label(&report.verdict);
            let parent = match report.model {
                Some(model) => Some(parent_from_lhs(&psi, &model)?),
                None => None,
            };
            emit(
                &mb.finish(Some(label.clone())),
                &ExtractResult {
                    verdict: label,
                    parent,
                },
                None,
            )?;
            Ok(code)
        }
    }
}
