//! Multiplicatively separable product functions and the index-based
//! quasiconcavity decision: a product of positive non-constant factors is
//! quasiconcave exactly when all factors are log-concave, or all except
//! one are and the reciprocal factor indices sum to at most zero. A Yes
//! decision also licenses pseudoconcavity of the product.

use thiserror::Error;

use crate::cvindex::{self, ExtendedReal, IndexConfig, IndexEstimate};
use crate::domain::BoxDomain;
use crate::expr::{EvalError, Expression, RealFn};
use crate::gencv::{self, ConcavityProperty, SamplingConfig, Verdict, Witness};

#[derive(Debug, Clone, Error)]
pub enum SeparableError {
    #[error("factor {index} is not positive: f({point:?}) = {value}")]
    NonPositiveFactor {
        index: usize,
        point: Vec<f64>,
        value: f64,
    },
    #[error("factor {index} is constant on its domain (value spread {spread:.3e})")]
    ConstantFactor { index: usize, spread: f64 },
    #[error("factor {index} references {arity} variables but its block has dimension {dim}")]
    BlockMismatch {
        index: usize,
        arity: usize,
        dim: usize,
    },
    #[error("a product needs at least one factor")]
    Empty,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone)]
pub struct Factor {
    pub expr: Expression,
    pub domain: BoxDomain,
}

impl Factor {
    pub fn new(expr: Expression, domain: BoxDomain) -> Self {
        Factor { expr, domain }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }
}

/// An ordered product of positive non-constant factors over a product of
/// block domains. Positivity and non-constancy are spot-checked at
/// construction.
#[derive(Debug, Clone)]
pub struct ProductFunction {
    factors: Vec<Factor>,
    joint_domain: BoxDomain,
}

impl ProductFunction {
    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn total_dimension(&self) -> usize {
        self.joint_domain.dim()
    }

    pub fn joint_domain(&self) -> &BoxDomain {
        &self.joint_domain
    }

    /// True if any factor contains a kinked primitive (abs/min/max).
    pub fn has_kinks(&self) -> bool {
        self.factors.iter().any(|f| f.expr.has_kinks())
    }
}

impl RealFn for ProductFunction {
    fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        if x.len() < self.total_dimension() {
            return Err(EvalError::DimensionMismatch {
                needed: self.total_dimension(),
                got: x.len(),
            });
        }
        let mut acc = 1.0;
        let mut offset = 0;
        for f in &self.factors {
            let block = &x[offset..offset + f.dim()];
            acc *= f.expr.eval(block)?;
            offset += f.dim();
        }
        if !acc.is_finite() {
            return Err(EvalError::Domain(format!("non-finite product value {acc}")));
        }
        Ok(acc)
    }
}

/// Validates and assembles a product function.
pub fn make_product(factors: Vec<Factor>) -> Result<ProductFunction, SeparableError> {
    if factors.is_empty() {
        return Err(SeparableError::Empty);
    }
    let mut joint = factors[0].domain.clone();
    for f in &factors[1..] {
        joint = joint.product(&f.domain);
    }
    for (i, f) in factors.iter().enumerate() {
        if f.expr.arity() > f.dim() {
            return Err(SeparableError::BlockMismatch {
                index: i,
                arity: f.expr.arity(),
                dim: f.dim(),
            });
        }
        let samples = f.domain.sample(64, 1234, 10.0);
        let mut vmin = f64::INFINITY;
        let mut vmax = f64::NEG_INFINITY;
        for p in &samples {
            let v = f.expr.eval(p)?;
            if v <= 0.0 {
                return Err(SeparableError::NonPositiveFactor {
                    index: i,
                    point: p.clone(),
                    value: v,
                });
            }
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let spread = vmax - vmin;
        if spread <= 1e-9 * vmax.abs().max(1.0) {
            return Err(SeparableError::ConstantFactor { index: i, spread });
        }
    }
    Ok(ProductFunction {
        factors,
        joint_domain: joint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuasiconcaveCase {
    /// All factors log-concave.
    AllLogConcave,
    /// Exactly one factor fails log-concavity and the reciprocal index sum
    /// is nonpositive.
    OneExceptional,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Yes(QuasiconcaveCase),
    No(String),
    Unknown(String),
}

impl Decision {
    pub fn is_yes(&self) -> bool {
        matches!(self, Decision::Yes(_))
    }
}

#[derive(Debug, Clone)]
pub struct SeparableDecision {
    pub decision: Decision,
    pub factor_indices: Vec<IndexEstimate>,
    /// Aggregate index from the reciprocal-sum rule, present on Yes.
    pub aggregate_index: Option<ExtendedReal>,
    /// Quasiconcave separable products are pseudoconcave.
    pub pseudoconcave_inferred: bool,
}

#[derive(Debug, Clone)]
pub struct DecideConfig {
    pub index: IndexConfig,
    /// Indices within +-band of zero count as log-concave.
    pub log_concave_band: f64,
    /// Tolerance on the reciprocal index sum for the exceptional case.
    pub sum_tol: f64,
}

impl Default for DecideConfig {
    fn default() -> Self {
        let index = IndexConfig::default();
        DecideConfig {
            log_concave_band: 3.0 * index.bisect_tol,
            sum_tol: 0.05,
            index,
        }
    }
}

/// Decides quasiconcavity of the product from per-factor concavity
/// indices.
pub fn decide_quasiconcave(
    p: &ProductFunction,
    cfg: &DecideConfig,
) -> Result<SeparableDecision, SeparableError> {
    let mut estimates = Vec::with_capacity(p.factors.len());
    for f in &p.factors {
        estimates.push(cvindex::index(&f.expr, &f.domain, &cfg.index)?);
    }

    if let Some(i) = estimates.iter().position(|e| e.low_confidence) {
        return Ok(SeparableDecision {
            decision: Decision::Unknown(format!(
                "index estimate for factor {i} is low-confidence; raise the probe budget"
            )),
            factor_indices: estimates,
            aggregate_index: None,
            pseudoconcave_inferred: false,
        });
    }

    let negatives: Vec<usize> = estimates
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.index.ge(-cfg.log_concave_band, 0.0))
        .map(|(i, _)| i)
        .collect();

    let recip_sum = estimates.iter().fold(ExtendedReal::Finite(0.0), |acc, e| {
        acc.add(&e.index.recip())
    });

    let decision = match negatives.len() {
        0 => Decision::Yes(QuasiconcaveCase::AllLogConcave),
        1 => {
            if recip_sum.le(0.0, cfg.sum_tol) {
                Decision::Yes(QuasiconcaveCase::OneExceptional)
            } else {
                Decision::No(format!(
                    "factor {} is not log-concave and the reciprocal index sum {} exceeds 0",
                    negatives[0], recip_sum
                ))
            }
        }
        _ => Decision::No(format!(
            "{} factors fail log-concavity (at most one is allowed): {:?}",
            negatives.len(),
            negatives
        )),
    };

    let aggregate = if decision.is_yes() {
        Some(recip_sum.recip())
    } else {
        None
    };
    let yes = decision.is_yes();
    Ok(SeparableDecision {
        decision,
        factor_indices: estimates,
        aggregate_index: aggregate,
        pseudoconcave_inferred: yes,
    })
}

/// Necessary condition: every factor of a quasiconcave product is itself
/// quasiconcave. A falsified factor refutes the product.
pub fn factor_necessity_check(
    p: &ProductFunction,
    cfg: &SamplingConfig,
) -> Result<Verdict, EvalError> {
    let mut total = 0usize;
    for (i, f) in p.factors.iter().enumerate() {
        match gencv::check_property(&f.expr, &f.domain, ConcavityProperty::Quasiconcave, cfg)? {
            Verdict::Falsified(w) => {
                return Ok(Verdict::Falsified(Witness {
                    description: format!(
                        "factor {i} is not quasiconcave, so the product cannot be: {}",
                        w.description
                    ),
                    ..w
                }))
            }
            Verdict::Corroborated { samples_checked } => total += samples_checked,
        }
    }
    Ok(Verdict::Corroborated {
        samples_checked: total,
    })
}
