//! Numerical verification of the curvature identities of `W3bar` and `W6bar`
//! charts at sampled points.
//!
//! Every check quantified over "all x, y, z, w" is evaluated on all basis
//! index tuples. Residuals are max-norm differences normalized by
//! `1 + max` of the compared magnitudes. Class membership and closedness of
//! `theta` are preconditions. Class membership is required on the whole
//! sample, since the identities involve derivatives of `F`; closedness is
//! checked per point. A point failing a precondition is skipped and never
//! contributes to a pass.
//!
//! The two classes are handled by one code path with a sign `s`
//! (`+1` for `W3bar`, `-1` for `W6bar`), `G_s = g + s g~` and
//! `A_s = nabla theta - s theta (x) theta / 2n` (so `A_+ = A`, `A_- = A'`).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{sample, SamplingPlan};
use crate::classify::{self, PointClassResiduals, IN_CLASS, OUT_OF_CLASS};
use crate::curvature::{PiTensors, PointStructure};
use crate::geometry::{ChartError, GeometryAtPoint, ManifoldChart, STRUCTURE_THRESHOLD};
use crate::tensor::PointTensor;

pub const SCHEMA_VERSION: u32 = 1;
/// Default verification tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;
/// `theta` counts as closed at a point when its closedness residual is below this.
pub const CLOSEDNESS_GATE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("point is not in {class} (residual {residual:e})")]
    ClassPrecondition { class: ClassSide, residual: f64 },
    #[error("theta is not closed at this point (residual {0:e})")]
    NotClosed(f64),
    #[error("check needs dimension 4, chart has dimension {0}")]
    NeedsDimension4(usize),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
}

/// Which of the two conformal classes a check is specialised to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassSide {
    W3Bar,
    W6Bar,
}

impl ClassSide {
    pub fn sign(self) -> f64 {
        match self {
            ClassSide::W3Bar => 1.0,
            ClassSide::W6Bar => -1.0,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            ClassSide::W3Bar => "w3",
            ClassSide::W6Bar => "w6",
        }
    }

    /// `A` for `W3bar`, `A'` for `W6bar`.
    pub fn a_tensor(self, geo: &GeometryAtPoint) -> &PointTensor {
        match self {
            ClassSide::W3Bar => &geo.a,
            ClassSide::W6Bar => &geo.a_prime,
        }
    }

    fn class_residual(self, r: &PointClassResiduals) -> f64 {
        match self {
            ClassSide::W3Bar => r.w3bar,
            ClassSide::W6Bar => r.w6bar,
        }
    }
}

impl fmt::Display for ClassSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassSide::W3Bar => "W3bar",
            ClassSide::W6Bar => "W6bar",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Algebra,
    W3,
    W6,
    All,
}

impl Suite {
    fn sides(self) -> &'static [ClassSide] {
        match self {
            Suite::Algebra => &[],
            Suite::W3 => &[ClassSide::W3Bar],
            Suite::W6 => &[ClassSide::W6Bar],
            Suite::All => &[ClassSide::W3Bar, ClassSide::W6Bar],
        }
    }

    fn includes_algebra(self) -> bool {
        matches!(self, Suite::Algebra | Suite::All)
    }
}

impl FromStr for Suite {
    type Err = VerifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "algebra" => Ok(Suite::Algebra),
            "w3" => Ok(Suite::W3),
            "w6" => Ok(Suite::W6),
            "all" => Ok(Suite::All),
            other => Err(VerifyError::UnknownSuite(other.to_string())),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Algebra => "algebra",
            Suite::W3 => "w3",
            Suite::W6 => "w6",
            Suite::All => "all",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    /// Pass threshold for residual checks.
    pub tol: f64,
    /// Class membership threshold; also the "holds" side of two-way checks.
    pub class_tol: f64,
    /// "Clearly fails" side of two-way checks.
    pub out_tol: f64,
    pub closed_tol: f64,
    pub structure_threshold: f64,
    pub sampling: SamplingPlan,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            tol: DEFAULT_TOL,
            class_tol: IN_CLASS,
            out_tol: OUT_OF_CLASS,
            closed_tol: CLOSEDNESS_GATE,
            structure_threshold: STRUCTURE_THRESHOLD,
            sampling: SamplingPlan::default(),
        }
    }
}

fn rel(a: &PointTensor, b: &PointTensor) -> f64 {
    a.distance(b) / (1.0 + a.max_abs().max(b.max_abs()))
}

fn rel_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

fn inv_2n(geo: &GeometryAtPoint) -> f64 {
    1.0 / (2.0 * geo.n() as f64)
}

pub fn require_class(geo: &GeometryAtPoint, side: ClassSide, tol: f64) -> Result<(), VerifyError> {
    let s = &geo.structure;
    let residual = match side {
        ClassSide::W3Bar => classify::residual_w3bar(&geo.f, &geo.theta, s),
        ClassSide::W6Bar => classify::residual_w6bar(&geo.f, &geo.theta, s),
    };
    if residual < tol {
        Ok(())
    } else {
        Err(VerifyError::ClassPrecondition {
            class: side,
            residual,
        })
    }
}

pub fn require_closed(geo: &GeometryAtPoint, tol: f64) -> Result<(), VerifyError> {
    if geo.closedness < tol {
        Ok(())
    } else {
        Err(VerifyError::NotClosed(geo.closedness))
    }
}

/// Residuals of the two sides of an equivalence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IffResidual {
    pub lhs: f64,
    pub rhs: f64,
}

impl IffResidual {
    /// `Some(true)` when both sides hold or both clearly fail, `Some(false)`
    /// when one holds and the other clearly fails, `None` otherwise.
    pub fn consistent(&self, holds: f64, fails: f64) -> Option<bool> {
        let side = |r: f64| {
            if r < holds {
                Some(true)
            } else if r > fails {
                Some(false)
            } else {
                None
            }
        };
        match (side(self.lhs), side(self.rhs)) {
            (Some(a), Some(b)) => Some(a == b),
            _ => None,
        }
    }
}

/// `R(x,y,Pz,w) - R(x,y,z,Pw) = (nabla_x F)(y,z,w) - (nabla_y F)(x,z,w)`.
/// Holds on every chart.
pub fn check_ricci_identity(geo: &GeometryAtPoint) -> f64 {
    let s = &geo.structure;
    let lhs = s.p_slot(&geo.riemann, 2).sub(&s.p_slot(&geo.riemann, 3));
    let rhs = geo.nabla_f.sub(&geo.nabla_f.permute(&[1, 0, 2, 3]));
    rel(&lhs, &rhs)
}

/// `A_s(y,Pz) = -s A_s(y,z) - (theta(Omega)/2n) G_s(y,z)`.
pub fn check_a_parity(geo: &GeometryAtPoint, side: ClassSide, cfg: &VerifyConfig) -> Result<f64, VerifyError> {
    require_class(geo, side, cfg.class_tol)?;
    let sign = side.sign();
    let a = side.a_tensor(geo);
    let s = &geo.structure;
    let lhs = s.p_slot(a, 1);
    let rhs = a
        .scale(-sign)
        .sub(&s.g_plus(sign).scale(geo.theta_omega * inv_2n(geo)));
    Ok(rel(&lhs, &rhs))
}

/// Closedness of `theta` against symmetry and `P`-invariance of `A_s`.
pub fn check_closed_iff_a_symmetric(
    geo: &GeometryAtPoint,
    side: ClassSide,
    cfg: &VerifyConfig,
) -> Result<IffResidual, VerifyError> {
    require_class(geo, side, cfg.class_tol)?;
    let a = side.a_tensor(geo);
    let s = &geo.structure;
    let a_yp = s.p_slot(a, 1);
    let scale = 1.0 + a.max_abs();
    let rhs = a
        .distance(&a.transpose())
        .max(a_yp.distance(&a_yp.transpose()))
        .max(s.p_all(a).distance(a))
        / scale;
    Ok(IffResidual {
        lhs: geo.closedness / (1.0 + geo.nabla_theta.max_abs()),
        rhs,
    })
}

/// `(psi1 - psi2)(A_s) + s (theta(Omega)/2n)(pi1 - pi2)`.
fn defect_bracket(geo: &GeometryAtPoint, side: ClassSide, pis: &PiTensors) -> PointTensor {
    let s = &geo.structure;
    let psi = s
        .psi_difference(side.a_tensor(geo))
        .expect("rank-2 tensor of chart dimension");
    psi.add(&pis.pi1.sub(&pis.pi2).scale(side.sign() * geo.theta_omega * inv_2n(geo)))
}

/// `R(x,y,Pz,Pw) - R(x,y,z,w) = -s (1/2n) { (psi1 - psi2)(A_s) + s (theta(Omega)/2n)(pi1 - pi2) }`.
pub fn check_curvature_defect(geo: &GeometryAtPoint, side: ClassSide, cfg: &VerifyConfig) -> Result<f64, VerifyError> {
    require_class(geo, side, cfg.class_tol)?;
    let s = &geo.structure;
    let pis = s.pi_tensors();
    let lhs = s.p_last_two(&geo.riemann).sub(&geo.riemann);
    let rhs = defect_bracket(geo, side, &pis).scale(-side.sign() * inv_2n(geo));
    Ok(rel(&lhs, &rhs))
}

pub fn check_identity_14(geo: &GeometryAtPoint, cfg: &VerifyConfig) -> Result<f64, VerifyError> {
    check_curvature_defect(geo, ClassSide::W3Bar, cfg)
}

pub fn check_identity_42(geo: &GeometryAtPoint, cfg: &VerifyConfig) -> Result<f64, VerifyError> {
    check_curvature_defect(geo, ClassSide::W6Bar, cfg)
}

/// Closedness of `theta` against the cyclic identity
/// `R(x,y,Pz,Pw) + R(y,z,Px,Pw) + R(z,x,Py,Pw) = 0`.
pub fn check_closedness_bianchi(
    geo: &GeometryAtPoint,
    side: ClassSide,
    cfg: &VerifyConfig,
) -> Result<IffResidual, VerifyError> {
    require_class(geo, side, cfg.class_tol)?;
    let rpp = geo.structure.p_last_two(&geo.riemann);
    let cyclic = PointTensor::from_fn4(geo.dim(), |x, y, z, w| {
        rpp.at4(x, y, z, w) + rpp.at4(y, z, x, w) + rpp.at4(z, x, y, w)
    });
    Ok(IffResidual {
        lhs: geo.closedness / (1.0 + geo.nabla_theta.max_abs()),
        rhs: cyclic.max_abs() / (1.0 + rpp.max_abs()),
    })
}

/// `R(Px,Py,Pz,Pw) = R(x,y,z,w)` and `rho(Py,Pz) = rho(y,z)` when `theta` is closed.
pub fn check_p_invariance(geo: &GeometryAtPoint, side: ClassSide, cfg: &VerifyConfig) -> Result<(f64, f64), VerifyError> {
    require_class(geo, side, cfg.class_tol)?;
    require_closed(geo, cfg.closed_tol)?;
    let s = &geo.structure;
    Ok((
        rel(&s.p_all(&geo.riemann), &geo.riemann),
        rel(&s.p_all(&geo.rho), &geo.rho),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KResiduals {
    /// Largest normalized property residual of `K` (antisymmetry, Bianchi, P-tensor).
    pub p_tensor: f64,
    /// `K` against `R - s(1/4n){ (psi1 - psi2)(A_s) + s (theta(Omega)/2n)(pi1 - pi2) }`.
    pub closed_form: f64,
}

pub fn check_k_structure(geo: &GeometryAtPoint, side: ClassSide, cfg: &VerifyConfig) -> Result<KResiduals, VerifyError> {
    require_class(geo, side, cfg.class_tol)?;
    require_closed(geo, cfg.closed_tol)?;
    let s = &geo.structure;
    let props = s.check_properties(&geo.k).expect("rank-4").normalized();
    let pis = s.pi_tensors();
    let predicted = geo
        .riemann
        .sub(&defect_bracket(geo, side, &pis).scale(side.sign() * 0.5 * inv_2n(geo)));
    Ok(KResiduals {
        p_tensor: props.max(),
        closed_form: rel(&geo.k, &predicted),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KScalarResiduals {
    pub rho: f64,
    pub tau: f64,
    pub tau_star: f64,
}

/// Ricci tensor and scalar curvatures of `K`:
/// `rho(K) = rho - s(1/4n){ [tr A_s + s theta(Omega)] G_s + 2n A_s }`,
/// `tau(K) = tau - s div(Omega) - ((n-1)/2n) theta(Omega)`, `tau*(K) = tau*`.
pub fn check_k_scalars(geo: &GeometryAtPoint, side: ClassSide, cfg: &VerifyConfig) -> Result<KScalarResiduals, VerifyError> {
    require_class(geo, side, cfg.class_tol)?;
    require_closed(geo, cfg.closed_tol)?;
    let s = &geo.structure;
    let sign = side.sign();
    let n = geo.n() as f64;
    let a = side.a_tensor(geo);
    let k_scalars = s.ricci_and_scalars(&geo.k).expect("rank-4");
    let bracket = s
        .g_plus(sign)
        .scale(s.trace(a) + sign * geo.theta_omega)
        .add(&a.scale(2.0 * n));
    let rho_pred = geo.rho.sub(&bracket.scale(sign / (4.0 * n)));
    let tau_pred = geo.tau - sign * geo.div_omega - (n - 1.0) / (2.0 * n) * geo.theta_omega;
    Ok(KScalarResiduals {
        rho: rel(&k_scalars.rho, &rho_pred),
        tau: rel_scalar(k_scalars.tau, tau_pred),
        tau_star: rel_scalar(k_scalars.tau_star, geo.tau_star),
    })
}

/// Four-dimensional form of `K`:
/// `K = (1/8){ [tau - s div(Omega) - theta(Omega)/4](pi1 + pi2) + tau* pi3 }`.
///
/// The coefficient is `tau(K)` from [`check_k_scalars`] with `n = 2`; it
/// carries `-div(Omega)` for `W3bar` and `+div(Omega)` for `W6bar`.
pub fn check_dim4_k_form(geo: &GeometryAtPoint, side: ClassSide, cfg: &VerifyConfig) -> Result<f64, VerifyError> {
    if geo.dim() != 4 {
        return Err(VerifyError::NeedsDimension4(geo.dim()));
    }
    require_class(geo, side, cfg.class_tol)?;
    require_closed(geo, cfg.closed_tol)?;
    let s = &geo.structure;
    let coeff = geo.tau - side.sign() * geo.div_omega - geo.theta_omega / 4.0;
    let form = s.dim4_form(&s.pi_tensors(), coeff, geo.tau_star);
    Ok(rel(&geo.k, &form))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PTensorCriterion {
    /// `R` being a Riemannian P-tensor against `A_s = -s (theta(Omega)/4n) G_s`.
    pub condition: IffResidual,
    /// `R` being a Riemannian P-tensor against `R = K`.
    pub r_equals_k: IffResidual,
    /// `tr A_s = -s theta(Omega)/2`, evaluated when the condition on `A_s` holds.
    pub trace: Option<f64>,
    /// `R = (1/8){ tau (pi1 + pi2) + tau* pi3 }`, evaluated in dimension 4 when `R` is a P-tensor.
    pub r_dim4_form: Option<f64>,
}

pub fn check_p_tensor_criterion(
    geo: &GeometryAtPoint,
    side: ClassSide,
    cfg: &VerifyConfig,
) -> Result<PTensorCriterion, VerifyError> {
    require_class(geo, side, cfg.class_tol)?;
    require_closed(geo, cfg.closed_tol)?;
    let s = &geo.structure;
    let sign = side.sign();
    let n = geo.n() as f64;
    let a = side.a_tensor(geo);
    let lhs = s.check_properties(&geo.riemann).expect("rank-4").normalized().p_tensor;
    let target = s.g_plus(sign).scale(-sign * geo.theta_omega / (4.0 * n));
    let rhs = rel(a, &target);
    let trace = (rhs < cfg.class_tol).then(|| rel_scalar(s.trace(a), -sign * geo.theta_omega / 2.0));
    let r_dim4_form = (geo.dim() == 4 && lhs < cfg.class_tol).then(|| {
        let form = s.dim4_form(&s.pi_tensors(), geo.tau, geo.tau_star);
        rel(&geo.riemann, &form)
    });
    Ok(PTensorCriterion {
        condition: IffResidual { lhs, rhs },
        r_equals_k: IffResidual {
            lhs,
            rhs: rel(&geo.riemann, &geo.k),
        },
        trace,
        r_dim4_form,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    PreconditionFailed,
    NotApplicable,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::PreconditionFailed => "precondition",
            Verdict::NotApplicable => "n/a",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Companion {
    pub residual_max: f64,
    pub residual_mean: f64,
    /// Points where one side holds while the other clearly fails.
    pub inconsistent: usize,
    /// Points where a side falls between the two thresholds.
    pub undecided: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub anchor: String,
    pub residual_max: f64,
    pub residual_mean: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    /// Sample points not evaluated by this check.
    pub skipped: usize,
    /// Right-hand side statistics of a two-way check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub companion: Option<Companion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub grid: usize,
    pub random: usize,
    pub points: usize,
    /// Points where the geometry could not be evaluated.
    pub conditioning_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub chart: String,
    pub suite: Suite,
    pub seed: u64,
    pub tolerance: f64,
    pub samples: SampleSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structural_failure: Option<String>,
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.structural_failure.is_none()
            && self
                .checks
                .iter()
                .all(|c| matches!(c.verdict, Verdict::Pass | Verdict::NotApplicable))
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fixed-width residual table.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "chart {}  suite {}  seed {}  points {} (grid {}, random {}, conditioning failures {})\n",
            self.chart,
            self.suite,
            self.seed,
            self.samples.points,
            self.samples.grid,
            self.samples.random,
            self.samples.conditioning_failures
        );
        if let Some(failure) = &self.structural_failure {
            out.push_str(&format!("structural validation failed: {failure}\n"));
            return out;
        }
        out.push_str(&format!(
            "{:<40} {:>12} {:>12} {:>10} {:>8}  {}\n",
            "check", "max", "mean", "threshold", "skipped", "verdict"
        ));
        for c in &self.checks {
            out.push_str(&format!(
                "{:<40} {:>12.3e} {:>12.3e} {:>10.1e} {:>8}  {}",
                c.name, c.residual_max, c.residual_mean, c.threshold, c.skipped, c.verdict
            ));
            if let Some(comp) = &c.companion {
                out.push_str(&format!(
                    "  (other side max {:.3e}, inconsistent {}, undecided {})",
                    comp.residual_max, comp.inconsistent, comp.undecided
                ));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Value(f64),
    Pair(IffResidual),
    /// Point fails a precondition of the check.
    Skipped,
    /// The check's trigger does not apply at this point.
    NotTriggered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Residual,
    TwoWay,
}

type Evaluator = Box<dyn Fn(&PointContext<'_>, &VerifyConfig) -> Outcome + Send + Sync>;

struct CheckSpec {
    name: String,
    anchor: &'static str,
    kind: Kind,
    threshold: fn(&VerifyConfig) -> f64,
    /// Class whose membership on the whole sample the check presupposes.
    side: Option<ClassSide>,
    eval: Evaluator,
}

struct PointContext<'a> {
    index: usize,
    geo: &'a GeometryAtPoint,
    class: PointClassResiduals,
}

fn lift<T>(r: Result<T, VerifyError>, f: impl FnOnce(T) -> Outcome) -> Outcome {
    match r {
        Ok(v) => f(v),
        Err(VerifyError::NeedsDimension4(_)) => Outcome::NotTriggered,
        Err(_) => Outcome::Skipped,
    }
}

fn tol(cfg: &VerifyConfig) -> f64 {
    cfg.tol
}

fn class_tol(cfg: &VerifyConfig) -> f64 {
    cfg.class_tol
}

fn residual(name: impl Into<String>, anchor: &'static str, eval: Evaluator) -> CheckSpec {
    CheckSpec {
        name: name.into(),
        anchor,
        kind: Kind::Residual,
        threshold: tol,
        side: None,
        eval,
    }
}

fn two_way(name: impl Into<String>, anchor: &'static str, eval: Evaluator) -> CheckSpec {
    CheckSpec {
        name: name.into(),
        anchor,
        kind: Kind::TwoWay,
        threshold: class_tol,
        side: None,
        eval,
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, dim: usize, symmetric: bool) -> PointTensor {
    let mut m = PointTensor::zeros(2, dim);
    for i in 0..dim {
        for j in 0..dim {
            if symmetric && j < i {
                let v = m.at2(j, i);
                m.set(&[i, j], v);
            } else {
                m.set(&[i, j], rng.gen_range(-1.0..=1.0));
            }
        }
    }
    m
}

fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64)
}

fn base_checks() -> Vec<CheckSpec> {
    vec![
        residual(
            "base.f_symmetries",
            "F(x,y,z) = F(x,z,y) = -F(x,Py,Pz), F(x,y,Pz) = -F(x,Py,z)",
            Box::new(|c, _| {
                let (swap, pp) = c.geo.f_symmetry_residuals();
                let ex = c.geo.f_p_exchange_residual();
                Outcome::Value(swap.max(pp).max(ex) / (1.0 + c.geo.f.max_abs()))
            }),
        ),
        residual(
            "base.r_curvature_like",
            "R(x,y,z,w) = -R(y,x,z,w) = -R(x,y,w,z); cyclic sum over x,y,z vanishes",
            Box::new(|c, _| {
                let props = c.geo.structure.check_properties(&c.geo.riemann).expect("rank-4");
                Outcome::Value(props.normalized().curvature_like())
            }),
        ),
        residual(
            "base.ricci_identity",
            "R(x,y,Pz,w) - R(x,y,z,Pw) = (nabla_x F)(y,z,w) - (nabla_y F)(x,z,w)",
            Box::new(|c, _| Outcome::Value(check_ricci_identity(c.geo))),
        ),
        residual(
            "base.theta_omega_nonnegative",
            "theta(Omega) = g(Omega,Omega) >= 0",
            Box::new(|c, _| Outcome::Value((-c.geo.theta_omega).max(0.0))),
        ),
    ]
}

fn algebra_checks(seed: u64) -> Vec<CheckSpec> {
    vec![
        residual(
            "algebra.psi1_symmetric_curvature_like",
            "psi1(S) is curvature-like for symmetric S",
            Box::new(move |c, _| {
                let s = &c.geo.structure;
                let mut rng = point_rng(seed, c.index);
                let m = random_matrix(&mut rng, s.dim(), true);
                let props = s.check_properties(&s.psi1(&m).expect("rank-2")).expect("rank-4");
                Outcome::Value(props.normalized().curvature_like())
            }),
        ),
        residual(
            "algebra.psi2_p_relation",
            "psi2(S)(x,y,Pz,Pw) = psi1(S)(x,y,z,w)",
            Box::new(move |c, _| {
                let s = &c.geo.structure;
                let mut rng = point_rng(seed ^ 0xA5A5, c.index);
                let m = random_matrix(&mut rng, s.dim(), false);
                let psi1 = s.psi1(&m).expect("rank-2");
                let psi2 = s.psi2(&m).expect("rank-2");
                Outcome::Value(rel(&s.p_last_two(&psi2), &psi1))
            }),
        ),
        residual(
            "algebra.pi_p_tensors",
            "pi1, pi2, pi3 curvature-like; pi1 + pi2 and pi3 Riemannian P-tensors; psi1(g~) = psi2(g~)",
            Box::new(|c, _| {
                let s = &c.geo.structure;
                let pis = s.pi_tensors();
                let p12 = s.check_properties(&pis.pi1.add(&pis.pi2)).expect("rank-4").normalized();
                let p3 = s.check_properties(&pis.pi3).expect("rank-4").normalized();
                let p1 = s.check_properties(&pis.pi1).expect("rank-4").normalized();
                let p2 = s.check_properties(&pis.pi2).expect("rank-4").normalized();
                let gap = pis.pi3_forms_gap / (1.0 + pis.pi3.max_abs());
                Outcome::Value(
                    p12.max()
                        .max(p3.max())
                        .max(p1.curvature_like())
                        .max(p2.curvature_like())
                        .max(gap),
                )
            }),
        ),
        residual(
            "algebra.pi_contractions",
            "rho(pi1) = (2n-1)g, rho(pi2) = -g, tau*(pi3) = (2n-2)2n, tau(pi3) = tau*(pi1+pi2) = 0",
            Box::new(|c, _| Outcome::Value(pi_contraction_residual(&c.geo.structure))),
        ),
        residual(
            "algebra.dim4_decomposition",
            "L = (1/8){tau(L)(pi1+pi2) + tau*(L) pi3} for Riemannian P-tensors in dimension 4",
            Box::new(move |c, _| {
                let s = &c.geo.structure;
                if s.dim() != 4 {
                    return Outcome::NotTriggered;
                }
                let mut rng = point_rng(seed ^ 0x5A5A, c.index);
                let (a, b): (f64, f64) = (rng.gen_range(-2.0..=2.0), rng.gen_range(-2.0..=2.0));
                let pis = s.pi_tensors();
                let l = pis.pi1.add(&pis.pi2).scale(a).add(&pis.pi3.scale(b));
                let d = s.decompose_dim4(&l).expect("dimension 4");
                let scale = 1.0 + l.max_abs();
                Outcome::Value(
                    (d.residual / scale)
                        .max(rel_scalar(d.tau, 8.0 * a))
                        .max(rel_scalar(d.tau_star, 8.0 * b)),
                )
            }),
        ),
    ]
}

/// Largest normalized deviation of the pi-tensor contractions from their closed forms.
pub fn pi_contraction_residual(s: &PointStructure) -> f64 {
    let pis = s.pi_tensors();
    let d = s.dim() as f64;
    let r1 = s.ricci_and_scalars(&pis.pi1).expect("rank-4");
    let r2 = s.ricci_and_scalars(&pis.pi2).expect("rank-4");
    let r3 = s.ricci_and_scalars(&pis.pi3).expect("rank-4");
    let r12 = s.ricci_and_scalars(&pis.pi1.add(&pis.pi2)).expect("rank-4");
    rel(&r1.rho, &s.g().scale(d - 1.0))
        .max(rel(&r2.rho, &s.g().scale(-1.0)))
        .max(rel_scalar(r3.tau_star, (d - 2.0) * d))
        .max(rel_scalar(r3.tau, 0.0))
        .max(rel_scalar(r12.tau_star, 0.0))
}

fn class_checks(side: ClassSide) -> Vec<CheckSpec> {
    let p = side.prefix();
    let (parity_anchor, class_anchor, a_parity_anchor, equivalence_anchor, defect_anchor, k_anchor, rho_k_anchor, tau_k_anchor, k4_anchor, criterion_anchor, trace_anchor) =
        match side {
            ClassSide::W3Bar => (
                "theta(Px) = -theta(x), so theta^h = 0",
                "F(x,y,z) = (1/2n){[g(x,y)+g(x,Py)]theta(z) + [g(x,z)+g(x,Pz)]theta(y)}, theta(Px) = -theta(x)",
                "A(y,Pz) = -A(y,z) - (theta(Omega)/2n)[g(y,z)+g(y,Pz)]",
                "theta closed <=> A symmetric <=> A(y,Pz) = A(z,Py), A(Py,Pz) = A(y,z)",
                "R(x,y,Pz,Pw) - R(x,y,z,w) = -(1/2n){(psi1-psi2)(A) + (theta(Omega)/2n)(pi1-pi2)}",
                "K = R - (1/4n){(psi1-psi2)(A) + (theta(Omega)/2n)(pi1-pi2)}",
                "rho(K) = rho - (1/4n){[tr A + theta(Omega)][g + g~] + 2n A}",
                "tau(K) = tau - div Omega - ((n-1)/2n) theta(Omega)",
                "dim 4: K = (1/8){[tau - div Omega - theta(Omega)/4](pi1+pi2) + tau* pi3}",
                "R is a Riemannian P-tensor <=> A = -(theta(Omega)/4n)[g + g~]",
                "A = -(theta(Omega)/4n)[g + g~] => tr A = -theta(Omega)/2",
            ),
            ClassSide::W6Bar => (
                "theta(Px) = theta(x), so theta^v = 0",
                "F(x,y,z) = (1/2n){[g(x,y)-g(x,Py)]theta(z) + [g(x,z)-g(x,Pz)]theta(y)}, theta(Px) = theta(x)",
                "A'(y,Pz) = A'(y,z) - (theta(Omega)/2n)[g(y,z)-g(y,Pz)]",
                "theta closed <=> A' symmetric <=> A'(y,Pz) = A'(z,Py), A'(Py,Pz) = A'(y,z)",
                "R(x,y,Pz,Pw) - R(x,y,z,w) = (1/2n){(psi1-psi2)(A') - (theta(Omega)/2n)(pi1-pi2)}",
                "K = R + (1/4n){(psi1-psi2)(A') - (theta(Omega)/2n)(pi1-pi2)}",
                "rho(K) = rho + (1/4n){[tr A' - theta(Omega)][g - g~] + 2n A'}",
                "tau(K) = tau + div Omega - ((n-1)/2n) theta(Omega)",
                "dim 4: K = (1/8){[tau + div Omega - theta(Omega)/4](pi1+pi2) + tau* pi3}",
                "R is a Riemannian P-tensor <=> A' = (theta(Omega)/4n)[g - g~]",
                "A' = (theta(Omega)/4n)[g - g~] => tr A' = theta(Omega)/2",
            ),
        };
    let mut checks = vec![
        CheckSpec {
            name: format!("{p}.class_condition"),
            anchor: class_anchor,
            kind: Kind::Residual,
            threshold: class_tol,
            side: None,
            eval: Box::new(move |c, _| Outcome::Value(side.class_residual(&c.class))),
        },
        residual(
            format!("{p}.theta_parity"),
            parity_anchor,
            Box::new(move |c, cfg| {
                lift(require_class(c.geo, side, cfg.class_tol), |_| {
                    let part = match side {
                        ClassSide::W3Bar => c.geo.theta_horizontal(),
                        ClassSide::W6Bar => c.geo.theta_vertical(),
                    };
                    Outcome::Value(part.max_abs())
                })
            }),
        ),
        residual(
            format!("{p}.a_parity"),
            a_parity_anchor,
            Box::new(move |c, cfg| lift(check_a_parity(c.geo, side, cfg), Outcome::Value)),
        ),
        two_way(
            format!("{p}.closed_iff_a_symmetric"),
            equivalence_anchor,
            Box::new(move |c, cfg| lift(check_closed_iff_a_symmetric(c.geo, side, cfg), Outcome::Pair)),
        ),
        residual(
            format!("{p}.curvature_defect"),
            defect_anchor,
            Box::new(move |c, cfg| lift(check_curvature_defect(c.geo, side, cfg), Outcome::Value)),
        ),
        two_way(
            format!("{p}.closed_iff_cyclic"),
            "theta closed <=> R(x,y,Pz,Pw) + R(y,z,Px,Pw) + R(z,x,Py,Pw) = 0",
            Box::new(move |c, cfg| lift(check_closedness_bianchi(c.geo, side, cfg), Outcome::Pair)),
        ),
        residual(
            format!("{p}.r_p_invariance"),
            "theta closed => R(Px,Py,Pz,Pw) = R(x,y,z,w)",
            Box::new(move |c, cfg| lift(check_p_invariance(c.geo, side, cfg), |(r, _)| Outcome::Value(r))),
        ),
        residual(
            format!("{p}.ricci_p_invariance"),
            "theta closed => rho(Py,Pz) = rho(y,z)",
            Box::new(move |c, cfg| lift(check_p_invariance(c.geo, side, cfg), |(_, r)| Outcome::Value(r))),
        ),
        residual(
            format!("{p}.k_p_tensor"),
            "theta closed => K = (R + R(.,.,P.,P.))/2 is a Riemannian P-tensor",
            Box::new(move |c, cfg| lift(check_k_structure(c.geo, side, cfg), |k| Outcome::Value(k.p_tensor))),
        ),
        residual(
            format!("{p}.k_closed_form"),
            k_anchor,
            Box::new(move |c, cfg| lift(check_k_structure(c.geo, side, cfg), |k| Outcome::Value(k.closed_form))),
        ),
        residual(
            format!("{p}.k_ricci"),
            rho_k_anchor,
            Box::new(move |c, cfg| lift(check_k_scalars(c.geo, side, cfg), |k| Outcome::Value(k.rho))),
        ),
        residual(
            format!("{p}.k_scalar"),
            tau_k_anchor,
            Box::new(move |c, cfg| lift(check_k_scalars(c.geo, side, cfg), |k| Outcome::Value(k.tau))),
        ),
        residual(
            format!("{p}.k_assoc_scalar"),
            "tau*(K) = tau*",
            Box::new(move |c, cfg| lift(check_k_scalars(c.geo, side, cfg), |k| Outcome::Value(k.tau_star))),
        ),
        residual(
            format!("{p}.k_dim4_form"),
            k4_anchor,
            Box::new(move |c, cfg| lift(check_dim4_k_form(c.geo, side, cfg), Outcome::Value)),
        ),
        two_way(
            format!("{p}.p_tensor_iff_a_condition"),
            criterion_anchor,
            Box::new(move |c, cfg| lift(check_p_tensor_criterion(c.geo, side, cfg), |k| Outcome::Pair(k.condition))),
        ),
        residual(
            format!("{p}.a_condition_trace"),
            trace_anchor,
            Box::new(move |c, cfg| {
                lift(check_p_tensor_criterion(c.geo, side, cfg), |k| {
                    k.trace.map_or(Outcome::NotTriggered, Outcome::Value)
                })
            }),
        ),
        two_way(
            format!("{p}.p_tensor_iff_r_equals_k"),
            "R is a Riemannian P-tensor <=> R = K",
            Box::new(move |c, cfg| lift(check_p_tensor_criterion(c.geo, side, cfg), |k| Outcome::Pair(k.r_equals_k))),
        ),
        residual(
            format!("{p}.r_dim4_form"),
            "dim 4, R a Riemannian P-tensor: R = (1/8){tau(pi1+pi2) + tau* pi3}",
            Box::new(move |c, cfg| {
                lift(check_p_tensor_criterion(c.geo, side, cfg), |k| {
                    k.r_dim4_form.map_or(Outcome::NotTriggered, Outcome::Value)
                })
            }),
        ),
    ];
    for c in checks.iter_mut().skip(1) {
        c.side = Some(side);
    }
    checks
}

fn aggregate(spec: &CheckSpec, outcomes: &[Option<Outcome>], cfg: &VerifyConfig) -> CheckRecord {
    let threshold = (spec.threshold)(cfg);
    let total = outcomes.len();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    let (mut inconsistent, mut undecided) = (0, 0);
    let mut precondition = false;
    let mut triggered_somewhere = false;
    for o in outcomes {
        match o {
            None | Some(Outcome::Skipped) => precondition = true,
            Some(Outcome::NotTriggered) => {}
            Some(Outcome::Value(v)) => {
                triggered_somewhere = true;
                lhs.push(*v);
            }
            Some(Outcome::Pair(pair)) => {
                triggered_somewhere = true;
                lhs.push(pair.lhs);
                rhs.push(pair.rhs);
                match pair.consistent(cfg.class_tol, cfg.out_tol) {
                    Some(true) => {}
                    Some(false) => inconsistent += 1,
                    None => undecided += 1,
                }
            }
        }
    }
    let stats = |v: &[f64]| -> (f64, f64) {
        if v.is_empty() {
            (0.0, 0.0)
        } else {
            let max = v.iter().cloned().fold(0.0, f64::max);
            (max, v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    let (residual_max, residual_mean) = stats(&lhs);
    let verdict = if !triggered_somewhere {
        let some_untriggered = outcomes.iter().any(|o| matches!(o, Some(Outcome::NotTriggered)));
        if precondition && (spec.class_gated() || !some_untriggered) {
            Verdict::PreconditionFailed
        } else {
            Verdict::NotApplicable
        }
    } else {
        match spec.kind {
            Kind::Residual if spec.is_class_condition() && residual_max >= threshold => Verdict::PreconditionFailed,
            Kind::Residual if residual_max < threshold => Verdict::Pass,
            Kind::Residual => Verdict::Fail,
            Kind::TwoWay if inconsistent > 0 => Verdict::Fail,
            Kind::TwoWay if undecided > 0 => Verdict::Inconclusive,
            Kind::TwoWay => Verdict::Pass,
        }
    };
    let companion = (spec.kind == Kind::TwoWay).then(|| {
        let (m, mean) = stats(&rhs);
        Companion {
            residual_max: m,
            residual_mean: mean,
            inconsistent,
            undecided,
        }
    });
    CheckRecord {
        name: spec.name.clone(),
        anchor: spec.anchor.to_string(),
        residual_max,
        residual_mean,
        threshold,
        verdict,
        skipped: total - lhs.len(),
        companion,
    }
}

impl CheckSpec {
    fn is_class_condition(&self) -> bool {
        self.name.ends_with(".class_condition")
    }

    fn class_gated(&self) -> bool {
        self.side.is_some()
    }
}

/// Runs every check of `suite` on the sample plan in `cfg`.
pub fn run_suite(chart: &ManifoldChart, suite: Suite, cfg: &VerifyConfig) -> VerificationReport {
    let plan = cfg.sampling;
    let points = sample(chart, plan.grid, plan.random, plan.seed);
    let mut report = VerificationReport {
        schema_version: SCHEMA_VERSION,
        chart: chart.name().to_string(),
        suite,
        seed: plan.seed,
        tolerance: cfg.tol,
        samples: SampleSummary {
            grid: plan.grid,
            random: plan.random,
            points: points.len(),
            conditioning_failures: 0,
        },
        structural_failure: None,
        checks: Vec::new(),
    };
    // Points whose structure cannot be evaluated are left to the per-point
    // conditioning skip below; only a genuine violation aborts the run.
    for point in &points {
        if let Ok(diagnostics) = chart.diagnostics_at(point) {
            if !diagnostics.passes(cfg.structure_threshold) {
                let failure = ChartError::Structure {
                    point: point.clone(),
                    diagnostics,
                };
                report.structural_failure = Some(failure.to_string());
                return report;
            }
        }
    }

    let mut specs = base_checks();
    if suite.includes_algebra() {
        specs.extend(algebra_checks(plan.seed));
    }
    for &side in suite.sides() {
        specs.extend(class_checks(side));
    }

    let geometries = chart.geometry_at_points(&points);
    report.samples.conditioning_failures = geometries.iter().filter(|g| g.is_err()).count();
    let class_residuals: Vec<Option<PointClassResiduals>> = geometries
        .iter()
        .map(|g| g.as_ref().ok().map(classify::point_residuals))
        .collect();
    // The class identities differentiate F, so membership at isolated points
    // (e.g. where theta vanishes) is not enough: the whole sample must be in the class.
    let in_class = |side: ClassSide| {
        class_residuals
            .iter()
            .flatten()
            .all(|r| side.class_residual(r) < cfg.class_tol)
    };
    let gated: Vec<bool> = specs.iter().map(|s| s.side.is_some_and(|side| !in_class(side))).collect();
    // outcomes[point][check]; `None` marks a point whose geometry failed.
    let outcomes: Vec<Vec<Option<Outcome>>> = geometries
        .par_iter()
        .enumerate()
        .map(|(index, geo)| match geo {
            Ok(geo) => {
                let ctx = PointContext {
                    index,
                    geo,
                    class: class_residuals[index].expect("evaluated point"),
                };
                specs
                    .iter()
                    .zip(&gated)
                    .map(|(s, &off)| Some(if off { Outcome::Skipped } else { (s.eval)(&ctx, cfg) }))
                    .collect()
            }
            Err(_) => vec![None; specs.len()],
        })
        .collect();

    let mut checks: Vec<CheckRecord> = specs
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let column: Vec<Option<Outcome>> = outcomes.iter().map(|row| row[k]).collect();
            aggregate(spec, &column, cfg)
        })
        .collect();
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    report.checks = checks;
    report
}
