//! Verification of first-order optimality certificates: the classical
//! differentiable KKT conditions and their nonsmooth variant built on
//! superdifferentials and the normal cone of the box domain.
//!
//! A `Valid` verdict means a certificate was exhibited within the probe
//! budget; `Invalid` means no certificate was found, reported with the
//! residual so callers can widen the budget.

use thiserror::Error;

use crate::domain::{BoxDomain, DomainError};
use crate::expr::{gradient_of, EvalError, Expression};
use crate::separable::ProductFunction;
use crate::superdiff::{self, CovectorBox, DiniConfig};

#[derive(Debug, Clone)]
pub struct Constraint {
    pub expr: Expression,
    /// Trust declaration from the caller; the solver corroborates it at
    /// construction time.
    pub declared_quasiconcave: bool,
}

impl Constraint {
    pub fn new(expr: Expression) -> Self {
        Constraint {
            expr,
            declared_quasiconcave: true,
        }
    }
}

/// max f(x) over x in X subject to h_j(x) >= 0.
#[derive(Debug, Clone)]
pub struct ConstrainedProblem {
    pub objective: ProductFunction,
    pub constraints: Vec<Constraint>,
    pub domain: BoxDomain,
}

impl ConstrainedProblem {
    pub fn new(objective: ProductFunction, constraints: Vec<Constraint>) -> Self {
        let domain = objective.joint_domain().clone();
        ConstrainedProblem {
            objective,
            constraints,
            domain,
        }
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> Result<bool, KktError> {
        if !self.domain.contains(x)? {
            return Ok(false);
        }
        for c in &self.constraints {
            if c.expr.eval(x)? < -tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Indices with |h_j(x)| within the activity tolerance.
    pub fn active_set(&self, x: &[f64], activity_tol: f64) -> Result<Vec<usize>, KktError> {
        let mut out = Vec::new();
        for (j, c) in self.constraints.iter().enumerate() {
            if c.expr.eval(x)?.abs() <= activity_tol {
                out.push(j);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Error)]
pub enum KktError {
    #[error("candidate point is infeasible: {0}")]
    Infeasible(String),
    #[error("multiplier vector has length {got}, expected {expected}")]
    LambdaLength { expected: usize, got: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailedCondition {
    /// Gradient / supergradient stationarity.
    Stationarity,
    /// Complementary slackness.
    Complementarity,
    /// Multiplier nonnegativity.
    MultiplierSign,
    /// Constraint feasibility at the candidate point.
    Feasibility,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HypothesisFailure {
    /// A constraint gradient vanished at the candidate point.
    ZeroConstraintGradient(usize),
    /// No Slater point found within the sampling budget.
    NoSlaterPoint,
    /// Zero was corroborated in the superdifferential of an active
    /// constraint somewhere on its active surface.
    ActiveSurfaceCritical(usize),
    /// Too few active-surface samples to test the hypothesis.
    InsufficientSurfaceSamples(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertVerdict {
    Valid,
    Invalid(FailedCondition),
    HypothesisUnmet(HypothesisFailure),
}

#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub verdict: CertVerdict,
    pub stationarity_residual: f64,
    pub complementarity_residuals: Vec<f64>,
    pub sign_violations: Vec<f64>,
    pub active_set: Vec<usize>,
    pub slater_point: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl CertificateReport {
    pub fn is_valid(&self) -> bool {
        self.verdict == CertVerdict::Valid
    }
}

#[derive(Debug, Clone)]
pub struct KktConfig {
    /// Residual tolerance, relative to 1 + the objective gradient scale.
    pub tol: f64,
    /// |h_j| within this band counts as active.
    pub activity_tol: f64,
    pub fd_step: f64,
    /// Sampling budget for Slater point search.
    pub slater_budget: usize,
    /// Required strict margin of the Slater constraint value.
    pub slater_margin: f64,
    /// Minimum number of active-surface points for the regularity check.
    pub surface_samples: usize,
    pub seed: u64,
    pub bound: f64,
    pub dini: DiniConfig,
}

impl Default for KktConfig {
    fn default() -> Self {
        KktConfig {
            tol: 1e-6,
            activity_tol: 1e-7,
            fd_step: 1e-5,
            slater_budget: 2000,
            slater_margin: 1e-6,
            surface_samples: 10,
            seed: 0,
            bound: 10.0,
            dini: DiniConfig::default(),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Classical KKT certificate check for differentiable data: multiplier
/// signs, complementary slackness, then gradient stationarity, after the
/// nonzero-constraint-gradient and some-inactive-constraint hypotheses.
pub fn check_kkt_diff(
    prob: &ConstrainedProblem,
    xbar: &[f64],
    lambda: &[f64],
    cfg: &KktConfig,
) -> Result<CertificateReport, KktError> {
    let p = prob.constraints.len();
    if lambda.len() != p {
        return Err(KktError::LambdaLength {
            expected: p,
            got: lambda.len(),
        });
    }
    if !prob.is_feasible(xbar, cfg.tol)? {
        return Err(KktError::Infeasible(format!("{xbar:?}")));
    }

    let mut warnings = Vec::new();
    let active = prob.active_set(xbar, cfg.activity_tol)?;

    let grad_f = gradient_of(&prob.objective, xbar, cfg.fd_step)?;
    let mut grad_h = Vec::with_capacity(p);
    for (j, c) in prob.constraints.iter().enumerate() {
        let g = gradient_of(&c.expr, xbar, cfg.fd_step)?;
        if norm(&g) <= cfg.tol {
            return Ok(CertificateReport {
                verdict: CertVerdict::HypothesisUnmet(HypothesisFailure::ZeroConstraintGradient(j)),
                stationarity_residual: f64::NAN,
                complementarity_residuals: Vec::new(),
                sign_violations: Vec::new(),
                active_set: active,
                slater_point: None,
                warnings,
            });
        }
        grad_h.push(g);
    }

    let mut some_inactive = false;
    for c in &prob.constraints {
        if c.expr.eval(xbar)? > cfg.activity_tol {
            some_inactive = true;
        }
    }
    if p == 0 {
        warnings.push("no constraints: certificate check degenerates to stationarity".into());
    } else if !some_inactive {
        warnings.push(
            "every constraint is active at the candidate point; the theorem's \
             strict-positivity hypothesis holds vacuously for none"
                .into(),
        );
    }

    let sign_violations: Vec<f64> = lambda.iter().map(|l| (-l).max(0.0)).collect();
    let mut comp = Vec::with_capacity(p);
    for (j, c) in prob.constraints.iter().enumerate() {
        comp.push((lambda[j] * c.expr.eval(xbar)?).abs());
    }
    let mut residual = grad_f.clone();
    for (j, g) in grad_h.iter().enumerate() {
        for i in 0..residual.len() {
            residual[i] += lambda[j] * g[i];
        }
    }
    let stationarity_residual = norm(&residual);

    let verdict = if sign_violations.iter().any(|v| *v > cfg.tol) {
        CertVerdict::Invalid(FailedCondition::MultiplierSign)
    } else if comp.iter().any(|v| *v > cfg.tol) {
        CertVerdict::Invalid(FailedCondition::Complementarity)
    } else if stationarity_residual > cfg.tol * (1.0 + norm(&grad_f)) {
        CertVerdict::Invalid(FailedCondition::Stationarity)
    } else {
        CertVerdict::Valid
    };

    Ok(CertificateReport {
        verdict,
        stationarity_residual,
        complementarity_residuals: comp,
        sign_violations,
        active_set: active,
        slater_point: None,
        warnings,
    })
}

/// Searches the domain for a feasible point with a strictly positive
/// constraint value. The qualification used here is weak on purpose:
/// strict positivity of *some* h_j suffices, and the certificate report
/// flags this in its warnings. Returns `None` for unconstrained
/// problems.
pub fn find_slater(
    prob: &ConstrainedProblem,
    cfg: &KktConfig,
) -> Result<Option<Vec<f64>>, KktError> {
    if prob.constraints.is_empty() {
        return Ok(None);
    }
    let points = prob.domain.sample(cfg.slater_budget, cfg.seed, cfg.bound);
    'outer: for x in points {
        let mut strict = false;
        for c in &prob.constraints {
            let v = match c.expr.eval(&x) {
                Ok(v) => v,
                Err(_) => continue 'outer,
            };
            if v < 0.0 {
                continue 'outer;
            }
            if v > cfg.slater_margin {
                strict = true;
            }
        }
        if strict {
            return Ok(Some(x));
        }
    }
    Ok(None)
}

/// Generates feasible points on the surface h_j = 0 by bisecting segments
/// between feasible-positive and infeasible samples of the box.
fn sample_active_surface(
    prob: &ConstrainedProblem,
    j: usize,
    target: usize,
    cfg: &KktConfig,
) -> Result<Vec<Vec<f64>>, KktError> {
    let h = &prob.constraints[j].expr;
    let points = prob
        .domain
        .sample(4 * cfg.slater_budget.max(200), cfg.seed ^ 0xa5a5, cfg.bound);
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for x in points {
        match h.eval(&x) {
            Ok(v) if v > cfg.activity_tol => {
                if prob.is_feasible(&x, cfg.tol)? {
                    positive.push(x);
                }
            }
            Ok(v) if v < -cfg.activity_tol => negative.push(x),
            _ => {}
        }
        if positive.len() >= target && negative.len() >= target {
            break;
        }
    }
    let mut surface = Vec::new();
    for (a, b) in positive.iter().zip(&negative) {
        // Bisection on the sign change of h_j along [a, b].
        let mut lo = a.clone();
        let mut hi = b.clone();
        for _ in 0..80 {
            let mid: Vec<f64> = lo.iter().zip(&hi).map(|(x, y)| 0.5 * (x + y)).collect();
            let v = match h.eval(&mid) {
                Ok(v) => v,
                Err(_) => break,
            };
            if v.abs() <= cfg.activity_tol {
                lo = mid;
                break;
            }
            if v > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if let Ok(v) = h.eval(&lo) {
            if v.abs() <= cfg.activity_tol {
                // Must also be feasible for the remaining constraints.
                let mut ok = true;
                for (k, c) in prob.constraints.iter().enumerate() {
                    if k != j && c.expr.eval(&lo)? < -cfg.tol {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    surface.push(lo);
                }
            }
        }
        if surface.len() >= target {
            break;
        }
    }
    Ok(surface)
}

/// Scaled Minkowski sum of covector boxes: objective box plus
/// lambda-weighted constraint boxes, coordinatewise.
fn summed_box(obj: &CovectorBox, cons: &[(f64, CovectorBox)]) -> CovectorBox {
    let n = obj.lo.len();
    let mut lo = obj.lo.clone();
    let mut hi = obj.hi.clone();
    for (lambda, bx) in cons {
        for i in 0..n {
            // lambda >= 0 by the sign condition checked beforehand.
            lo[i] += lambda * bx.lo[i];
            hi[i] += lambda * bx.hi[i];
        }
    }
    CovectorBox { lo, hi }
}

/// Modified KKT certificate check: complementary slackness, feasibility
/// and multiplier signs, the Slater qualification, regularity of active
/// constraints on their surface, and supergradient stationarity against
/// the normal cone.
pub fn check_mkkt(
    prob: &ConstrainedProblem,
    xbar: &[f64],
    lambda: &[f64],
    cfg: &KktConfig,
) -> Result<CertificateReport, KktError> {
    let p = prob.constraints.len();
    if lambda.len() != p {
        return Err(KktError::LambdaLength {
            expected: p,
            got: lambda.len(),
        });
    }
    if !prob.domain.contains(xbar)? {
        return Err(KktError::Infeasible(format!("{xbar:?} outside the domain")));
    }

    let mut warnings = Vec::new();
    let active = prob.active_set(xbar, cfg.activity_tol)?;

    // Feasibility, signs, complementarity.
    let mut feas_violation = 0.0f64;
    let mut comp = Vec::with_capacity(p);
    for (j, c) in prob.constraints.iter().enumerate() {
        let v = c.expr.eval(xbar)?;
        feas_violation = feas_violation.max(-v);
        comp.push((lambda[j] * v).abs());
    }
    let sign_violations: Vec<f64> = lambda.iter().map(|l| (-l).max(0.0)).collect();

    let early = |verdict: CertVerdict, warnings: Vec<String>| CertificateReport {
        verdict,
        stationarity_residual: f64::NAN,
        complementarity_residuals: comp.clone(),
        sign_violations: sign_violations.clone(),
        active_set: active.clone(),
        slater_point: None,
        warnings,
    };

    if feas_violation > cfg.tol {
        return Ok(early(
            CertVerdict::Invalid(FailedCondition::Feasibility),
            warnings,
        ));
    }
    if sign_violations.iter().any(|v| *v > cfg.tol) {
        return Ok(early(
            CertVerdict::Invalid(FailedCondition::MultiplierSign),
            warnings,
        ));
    }
    if comp.iter().any(|v| *v > cfg.tol) {
        return Ok(early(
            CertVerdict::Invalid(FailedCondition::Complementarity),
            warnings,
        ));
    }

    // Slater qualification.
    let slater = find_slater(prob, cfg)?;
    if p > 0 && slater.is_none() {
        return Ok(early(
            CertVerdict::HypothesisUnmet(HypothesisFailure::NoSlaterPoint),
            warnings,
        ));
    }
    warnings.push(
        "weak Slater qualification in use: strict positivity of some \
         constraint at the qualifying point suffices"
            .into(),
    );

    // Regularity of active constraints: zero must not be a supergradient
    // anywhere on the sampled active surface.
    for &j in &active {
        let surface = sample_active_surface(prob, j, cfg.surface_samples, cfg)?;
        if surface.len() < cfg.surface_samples {
            return Ok(early(
                CertVerdict::HypothesisUnmet(HypothesisFailure::InsufficientSurfaceSamples(j)),
                warnings,
            ));
        }
        for x in &surface {
            if superdiff::zero_in_superdiff(&prob.constraints[j].expr, x, &cfg.dini)?
                .is_corroborated()
            {
                return Ok(early(
                    CertVerdict::HypothesisUnmet(HypothesisFailure::ActiveSurfaceCritical(j)),
                    warnings,
                ));
            }
        }
    }

    // Supergradient stationarity: distance from zero to the summed
    // candidate box minus the normal cone, coordinatewise exact for the
    // per-coordinate candidate intervals in use.
    let obj_box = superdiff::covector_box(&prob.objective, xbar, &cfg.dini)?;
    let mut weighted = Vec::new();
    for &j in &active {
        let bx = superdiff::covector_box(&prob.constraints[j].expr, xbar, &cfg.dini)?;
        weighted.push((lambda[j], bx));
    }
    let sum = summed_box(&obj_box, &weighted);
    let n = xbar.len();
    let mut dist2 = 0.0;
    let mut selection = Vec::with_capacity(n);
    for i in 0..n {
        // Pick the box point nearest the normal cone's reachable set.
        let s = 0.0f64.clamp(sum.lo[i], sum.hi[i]);
        let nu = prob.domain.project_normal_cone(
            xbar,
            &{
                let mut v = vec![0.0; n];
                v[i] = s;
                v
            },
            cfg.activity_tol,
        )[i];
        let d = s - nu;
        dist2 += d * d;
        selection.push(s);
    }
    let stationarity_residual = dist2.sqrt();
    let scale = obj_box
        .lo
        .iter()
        .chain(&obj_box.hi)
        .fold(0.0f64, |m, v| m.max(v.abs()));

    let verdict = if stationarity_residual <= cfg.tol * (1.0 + scale) {
        CertVerdict::Valid
    } else {
        CertVerdict::Invalid(FailedCondition::Stationarity)
    };
    if verdict != CertVerdict::Valid {
        warnings.push(format!(
            "no stationary covector selection found within budget; best selection {selection:?}"
        ));
    }

    Ok(CertificateReport {
        verdict,
        stationarity_residual,
        complementarity_residuals: comp,
        sign_violations,
        active_set: active,
        slater_point: slater,
        warnings,
    })
}

/// Builds the budget-constrained Cobb-Douglas test problem
/// max prod x_i^alpha_i subject to B - <p, x> >= 0 on the positive orthant.
pub fn cobb_douglas_problem(
    alpha: &[f64],
    prices: &[f64],
    budget: f64,
) -> Result<ConstrainedProblem, crate::separable::SeparableError> {
    use crate::expr::parse;
    use crate::separable::{make_product, Factor};

    let factors: Vec<Factor> = alpha
        .iter()
        .map(|a| {
            Factor::new(
                parse(&format!("x1^{a}")).expect("monomial factor"),
                BoxDomain::positive_orthant(1),
            )
        })
        .collect();
    let objective = make_product(factors)?;
    let mut terms = format!("{budget}");
    for (i, p) in prices.iter().enumerate() {
        terms.push_str(&format!(" - {p} * x{}", i + 1));
    }
    let h = parse(&terms).expect("budget constraint");
    Ok(ConstrainedProblem::new(objective, vec![Constraint::new(h)]))
}
