//! Estimation of the multiplicative concavity index of a positive
//! function: the supremum of negative exponents keeping `f^mu` convex
//! when such a regime exists, otherwise the supremum of positive
//! exponents keeping `f^mu` concave.
//!
//! The estimator exploits that for the power/exponential/log-affine
//! function classes in scope, the exponent set on the relevant side is an
//! interval, so its endpoint can be located by bisection over sampled
//! shape tests. Verdicts are one-sided: a falsified shape test is sound,
//! so reported indices are upper bounds up to sampling power.

use crate::domain::{BoxDomain, LineRestriction};
use crate::expr::{EvalError, RealFn};
use crate::gencv::{check_shape, SamplingConfig, Shape};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PlusInfinity,
    MinusInfinity,
}

impl ExtendedReal {
    pub fn as_finite(&self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    /// Reciprocal with the conventions 1/0 = +inf and 1/inf = 0.
    pub fn recip(&self) -> ExtendedReal {
        match self {
            ExtendedReal::Finite(v) if *v == 0.0 => ExtendedReal::PlusInfinity,
            ExtendedReal::Finite(v) => ExtendedReal::Finite(1.0 / v),
            ExtendedReal::PlusInfinity | ExtendedReal::MinusInfinity => ExtendedReal::Finite(0.0),
        }
    }

    /// Extended addition with x + inf = inf.
    pub fn add(&self, other: &ExtendedReal) -> ExtendedReal {
        use ExtendedReal::*;
        match (self, other) {
            (PlusInfinity, MinusInfinity) | (MinusInfinity, PlusInfinity) => {
                // Does not arise from Eq-2 sums of reciprocals; settle on +inf.
                PlusInfinity
            }
            (PlusInfinity, _) | (_, PlusInfinity) => PlusInfinity,
            (MinusInfinity, _) | (_, MinusInfinity) => MinusInfinity,
            (Finite(a), Finite(b)) => Finite(a + b),
        }
    }

    /// Comparison against a finite threshold: `self <= t + tol`.
    pub fn le(&self, t: f64, tol: f64) -> bool {
        match self {
            ExtendedReal::Finite(v) => *v <= t + tol,
            ExtendedReal::PlusInfinity => false,
            ExtendedReal::MinusInfinity => true,
        }
    }

    pub fn ge(&self, t: f64, tol: f64) -> bool {
        match self {
            ExtendedReal::Finite(v) => *v >= t - tol,
            ExtendedReal::PlusInfinity => true,
            ExtendedReal::MinusInfinity => false,
        }
    }
}

impl std::fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::PlusInfinity => write!(f, "+inf"),
            ExtendedReal::MinusInfinity => write!(f, "-inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    NegativeBranch,
    NonnegativeBranch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEstimate {
    pub index: ExtendedReal,
    pub branch: Branch,
    /// Bisection tolerance the estimate was resolved to.
    pub tolerance: f64,
    pub lines_probed: usize,
    /// Set when probes were skipped (overflow) or the exponent range was
    /// exhausted; consumers should widen the budget before trusting the
    /// value.
    pub low_confidence: bool,
}

#[derive(Debug, Clone)]
pub struct IndexConfig {
    /// Exponent search range is [-lambda_max, lambda_max].
    pub lambda_max: f64,
    /// Bisection stops when the bracket is narrower than this.
    pub bisect_tol: f64,
    /// Budget for each 1-D shape test.
    pub shape: SamplingConfig,
    /// Number of random base points for multi-dimensional functions.
    pub lines: usize,
    /// Random directions per base point (a radial direction is always added).
    pub dirs_per_line: usize,
    /// Relative value spread below which the function counts as constant.
    pub constant_tol: f64,
    pub seed: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            lambda_max: 64.0,
            bisect_tol: 1e-3,
            shape: SamplingConfig {
                pairs: 300,
                lambda_grid: vec![0.1, 0.25, 0.5, 0.75, 0.9],
                random_lambdas: 3,
                tol: 1e-9,
                seed: 0,
                bound: 10.0,
                fd_step: 1e-5,
            },
            lines: 8,
            dirs_per_line: 2,
            constant_tol: 1e-9,
            seed: 0,
        }
    }
}

/// `g^mu` computed as exp(mu ln g), with an explicit overflow guard.
struct PowOf<'a> {
    g: &'a dyn RealFn,
    mu: f64,
}

impl RealFn for PowOf<'_> {
    fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        let v = self.g.value(x)?;
        if v <= 0.0 {
            return Err(EvalError::Domain(format!(
                "concavity index requires a positive function, got {v}"
            )));
        }
        let e = self.mu * v.ln();
        if e.abs() > 700.0 {
            return Err(EvalError::Domain(format!("power {} overflows", self.mu)));
        }
        Ok(e.exp())
    }
}

struct Restricted<'a> {
    f: &'a dyn RealFn,
    line: &'a LineRestriction,
}

impl RealFn for Restricted<'_> {
    fn value(&self, t: &[f64]) -> Result<f64, EvalError> {
        self.f.value(&self.line.point_at(t[0]))
    }
}

/// Outcome of one shape probe; `None` means the probe overflowed and was
/// skipped.
fn probe_shape(
    g: &dyn RealFn,
    dom: &BoxDomain,
    mu: f64,
    shape: Shape,
    cfg: &IndexConfig,
) -> Result<Option<bool>, EvalError> {
    let p = PowOf { g, mu };
    match check_shape(&p, dom, &cfg.shape, shape, "shape probe") {
        Ok(v) => Ok(Some(v.is_corroborated())),
        Err(EvalError::Domain(msg)) if msg.contains("overflow") => Ok(None),
        Err(e) => Err(e),
    }
}

/// Estimates the concavity index of a positive 1-D function on an open
/// interval.
pub fn index_1d(
    g: &dyn RealFn,
    dom: &BoxDomain,
    cfg: &IndexConfig,
) -> Result<IndexEstimate, EvalError> {
    debug_assert_eq!(dom.dim(), 1);
    let mut low_confidence = false;

    // Positivity / constancy sampling.
    let samples = dom.sample(64, cfg.shape.seed, cfg.shape.bound);
    let mut vmin = f64::INFINITY;
    let mut vmax = f64::NEG_INFINITY;
    for p in &samples {
        let v = g.value(p)?;
        if v <= 0.0 {
            return Err(EvalError::Domain(format!(
                "concavity index requires a positive function, sampled {v}"
            )));
        }
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let near_constant = (vmax - vmin) <= cfg.constant_tol * vmax.abs().max(1.0);

    // Negative branch: scan exponents from near zero outward looking for a
    // failure of convexity.
    let mut neg_bad: Option<f64> = None; // non-convex, closest to 0
    let mut neg_good: Option<f64> = None; // convex, beyond neg_bad
    let mut mu = -cfg.bisect_tol;
    while mu >= -cfg.lambda_max {
        match probe_shape(g, dom, mu, Shape::Convex, cfg)? {
            Some(true) => {
                if neg_bad.is_some() {
                    neg_good = Some(mu);
                    break;
                }
                // Convex already at the probe nearest zero: no negative-branch
                // evidence at this resolution.
                break;
            }
            Some(false) => neg_bad = Some(mu),
            None => low_confidence = true,
        }
        mu *= 2.0;
    }
    if let Some(bad) = neg_bad {
        let good = match neg_good {
            Some(g) => g,
            None => {
                // Convexity never recovered within the exponent range.
                return Ok(IndexEstimate {
                    index: ExtendedReal::Finite(-cfg.lambda_max),
                    branch: Branch::NegativeBranch,
                    tolerance: cfg.bisect_tol,
                    lines_probed: 1,
                    low_confidence: true,
                });
            }
        };
        // Bisect the convex/non-convex bracket [good, bad] with good < bad < 0.
        let (mut lo, mut hi) = (good, bad);
        while hi - lo > cfg.bisect_tol {
            let mid = 0.5 * (lo + hi);
            match probe_shape(g, dom, mid, Shape::Convex, cfg)? {
                Some(true) => lo = mid,
                Some(false) => hi = mid,
                None => {
                    low_confidence = true;
                    break;
                }
            }
        }
        return Ok(IndexEstimate {
            index: ExtendedReal::Finite(0.5 * (lo + hi)),
            branch: Branch::NegativeBranch,
            tolerance: cfg.bisect_tol,
            lines_probed: 1,
            low_confidence,
        });
    }

    // Nonnegative branch: sup of positive exponents keeping g^mu concave.
    let mut pos_good: Option<f64> = None;
    let mut pos_bad: Option<f64> = None;
    let mut mu = cfg.bisect_tol;
    loop {
        let probe = mu.min(cfg.lambda_max);
        match probe_shape(g, dom, probe, Shape::Concave, cfg)? {
            Some(true) => pos_good = Some(probe),
            Some(false) => {
                pos_bad = Some(probe);
                break;
            }
            None => low_confidence = true,
        }
        if probe >= cfg.lambda_max {
            break;
        }
        mu *= 2.0;
    }
    match (pos_good, pos_bad) {
        (Some(_), None) => {
            // Concave all the way to lambda_max.
            if near_constant {
                Ok(IndexEstimate {
                    index: ExtendedReal::PlusInfinity,
                    branch: Branch::NonnegativeBranch,
                    tolerance: cfg.bisect_tol,
                    lines_probed: 1,
                    low_confidence,
                })
            } else {
                Ok(IndexEstimate {
                    index: ExtendedReal::Finite(cfg.lambda_max),
                    branch: Branch::NonnegativeBranch,
                    tolerance: cfg.bisect_tol,
                    lines_probed: 1,
                    low_confidence: true,
                })
            }
        }
        (Some(good), Some(bad)) => {
            let (mut lo, mut hi) = (good, bad);
            while hi - lo > cfg.bisect_tol {
                let mid = 0.5 * (lo + hi);
                match probe_shape(g, dom, mid, Shape::Concave, cfg)? {
                    Some(true) => lo = mid,
                    Some(false) => hi = mid,
                    None => {
                        low_confidence = true;
                        break;
                    }
                }
            }
            Ok(IndexEstimate {
                index: ExtendedReal::Finite(0.5 * (lo + hi)),
                branch: Branch::NonnegativeBranch,
                tolerance: cfg.bisect_tol,
                lines_probed: 1,
                low_confidence,
            })
        }
        (None, _) => {
            // No positive exponent keeps g^mu concave: the supremum over the
            // empty set is reported as 0 exactly when g is log-concave.
            let logg = move |x: &[f64]| -> Result<f64, EvalError> {
                let v = g.value(x)?;
                if v <= 0.0 {
                    return Err(EvalError::Domain("non-positive sample".into()));
                }
                Ok(v.ln())
            };
            let log_concave = check_shape(&logg, dom, &cfg.shape, Shape::Concave, "log-concavity")?
                .is_corroborated();
            Ok(IndexEstimate {
                index: ExtendedReal::Finite(0.0),
                branch: Branch::NonnegativeBranch,
                tolerance: cfg.bisect_tol,
                lines_probed: 1,
                low_confidence: low_confidence || !log_concave,
            })
        }
    }
}

/// Estimates the concavity index of a positive function on a box as the
/// infimum of 1-D indices over probed lines. Besides random directions,
/// a radial direction through each base point is always probed; for
/// positive-orthant products it is the extremal one.
pub fn index(
    f: &dyn RealFn,
    dom: &BoxDomain,
    cfg: &IndexConfig,
) -> Result<IndexEstimate, EvalError> {
    if dom.dim() == 1 {
        return index_1d(f, dom, cfg);
    }
    let bases = dom.sample(cfg.lines, cfg.seed.wrapping_add(17), cfg.shape.bound);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(101));
    let mut best: Option<IndexEstimate> = None;
    let mut lines_probed = 0usize;
    let mut low_confidence = false;
    for base in &bases {
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        if base.iter().any(|b| *b != 0.0) {
            dirs.push(base.clone()); // radial
        }
        for _ in 0..cfg.dirs_per_line {
            let d: Vec<f64> = (0..dom.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if d.iter().any(|v| v.abs() > 1e-6) {
                dirs.push(d);
            }
        }
        for d in dirs {
            let line = dom
                .restrict(base, &d)
                .map_err(|e| EvalError::Domain(e.to_string()))?;
            let t_lo = line.t_lower.max(-cfg.shape.bound);
            let t_hi = line.t_upper.min(cfg.shape.bound);
            // NaN-aware: also skips when either bound is NaN.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(t_lo < t_hi) {
                continue;
            }
            let interval = BoxDomain::interval(t_lo, t_hi);
            let restricted = Restricted { f, line: &line };
            let est = index_1d(&restricted, &interval, cfg)?;
            lines_probed += 1;
            low_confidence |= est.low_confidence;
            best = Some(match best.take() {
                None => est,
                Some(cur) => min_estimate(cur, est),
            });
        }
    }
    let mut est = best.ok_or_else(|| EvalError::Domain("no usable line restrictions".into()))?;
    est.lines_probed = lines_probed;
    est.low_confidence |= low_confidence;
    Ok(est)
}

fn min_estimate(a: IndexEstimate, b: IndexEstimate) -> IndexEstimate {
    let a_val = match a.index {
        ExtendedReal::Finite(v) => v,
        ExtendedReal::PlusInfinity => f64::INFINITY,
        ExtendedReal::MinusInfinity => f64::NEG_INFINITY,
    };
    let b_val = match b.index {
        ExtendedReal::Finite(v) => v,
        ExtendedReal::PlusInfinity => f64::INFINITY,
        ExtendedReal::MinusInfinity => f64::NEG_INFINITY,
    };
    if b_val < a_val {
        b
    } else {
        a
    }
}
