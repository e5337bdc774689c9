//! Falsification-based testers for the generalized concavity hierarchy:
//! concave, quasiconcave, semi-strictly quasiconcave, log-concave,
//! r-concave, pseudoconcave and the gradient characterization of
//! quasiconcavity.
//!
//! Sampling cannot prove any of these properties over a continuum; a
//! `Corroborated` verdict only records the budget that failed to refute,
//! while a `Falsified` verdict carries a reproducible counterexample.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::BoxDomain;
use crate::expr::{gradient_of, EvalError, RealFn};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConcavityProperty {
    Concave,
    Quasiconcave,
    SemiStrictQuasiconcave,
    LogConcave,
    /// `RConcave(0)` is interpreted as plain concavity.
    RConcave(f64),
    PseudoconcaveDiff,
    QuasiconcaveGradient,
}

/// A reproducible counterexample to a defining inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda: Option<f64>,
    pub violation: f64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Falsified(Witness),
    Corroborated { samples_checked: usize },
}

impl Verdict {
    pub fn is_corroborated(&self) -> bool {
        matches!(self, Verdict::Corroborated { .. })
    }

    pub fn is_falsified(&self) -> bool {
        matches!(self, Verdict::Falsified(_))
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::Falsified(w) => Some(w),
            Verdict::Corroborated { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SamplingConfig {
    /// Number of (x, y) pairs drawn from the domain.
    pub pairs: usize,
    /// Fixed lambda grid applied to every pair.
    pub lambda_grid: Vec<f64>,
    /// Additional random lambdas drawn per pair.
    pub random_lambdas: usize,
    /// Tolerance, relative to max(1, |values|).
    pub tol: f64,
    pub seed: u64,
    /// Truncation bound for infinite faces.
    pub bound: f64,
    /// Finite-difference step for gradient-based properties.
    pub fd_step: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            pairs: 2000,
            lambda_grid: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            random_lambdas: 5,
            tol: 1e-9,
            seed: 0,
            bound: 10.0,
            fd_step: 1e-5,
        }
    }
}

impl SamplingConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_pairs(mut self, pairs: usize) -> Self {
        self.pairs = pairs;
        self
    }
}

fn margin(tol: f64, values: &[f64]) -> f64 {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    tol * scale
}

fn blend(x: &[f64], y: &[f64], lambda: f64) -> Vec<f64> {
    x.iter()
        .zip(y)
        .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn diff(y: &[f64], x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(a, b)| a - b).collect()
}

/// Tests the defining inequality of `prop` on sampled pairs and a lambda
/// grid, returning the first falsifying witness (lowest sample index) or
/// a corroboration count.
pub fn check_property(
    f: &dyn RealFn,
    dom: &BoxDomain,
    prop: ConcavityProperty,
    cfg: &SamplingConfig,
) -> Result<Verdict, EvalError> {
    match prop {
        ConcavityProperty::Concave => check_shape(f, dom, cfg, Shape::Concave, "concavity"),
        ConcavityProperty::Quasiconcave => check_quasiconcave(f, dom, cfg),
        ConcavityProperty::SemiStrictQuasiconcave => check_semi_strict(f, dom, cfg),
        ConcavityProperty::LogConcave => {
            let logf = move |x: &[f64]| -> Result<f64, EvalError> {
                let v = f.value(x)?;
                if v <= 0.0 {
                    return Err(EvalError::Domain(format!(
                        "log-concavity requires a positive function, got {v}"
                    )));
                }
                Ok(v.ln())
            };
            check_shape(&logf, dom, cfg, Shape::Concave, "log-concavity")
        }
        ConcavityProperty::RConcave(r) => {
            if r == 0.0 {
                return check_shape(f, dom, cfg, Shape::Concave, "0-concavity");
            }
            let fr = move |x: &[f64]| -> Result<f64, EvalError> {
                let v = f.value(x)?;
                let e = (r * v).exp();
                if !e.is_finite() {
                    return Err(EvalError::Domain(format!("exp({} * f) overflows", r)));
                }
                Ok(e)
            };
            let shape = if r > 0.0 {
                Shape::Concave
            } else {
                Shape::Convex
            };
            check_shape(&fr, dom, cfg, shape, "r-concavity")
        }
        ConcavityProperty::PseudoconcaveDiff => check_pseudoconcave(f, dom, cfg),
        ConcavityProperty::QuasiconcaveGradient => check_quasiconcave_gradient(f, dom, cfg),
    }
}

#[derive(Clone, Copy, PartialEq)]
pub(crate) enum Shape {
    Concave,
    Convex,
}

fn lambdas(cfg: &SamplingConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut ls = cfg.lambda_grid.clone();
    for _ in 0..cfg.random_lambdas {
        ls.push(rng.gen_range(0.01..0.99));
    }
    ls
}

fn sample_pairs(dom: &BoxDomain, cfg: &SamplingConfig) -> Vec<Vec<f64>> {
    dom.sample(2 * cfg.pairs, cfg.seed, cfg.bound)
}

pub(crate) fn check_shape(
    f: &dyn RealFn,
    dom: &BoxDomain,
    cfg: &SamplingConfig,
    shape: Shape,
    what: &str,
) -> Result<Verdict, EvalError> {
    let points = sample_pairs(dom, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e3779b97f4a7c15));
    let mut checked = 0usize;
    for pair in points.chunks_exact(2) {
        let (x, y) = (&pair[0], &pair[1]);
        let gx = f.value(x)?;
        let gy = f.value(y)?;
        for lambda in lambdas(cfg, &mut rng) {
            let z = blend(x, y, lambda);
            let gz = f.value(&z)?;
            let chord = (1.0 - lambda) * gx + lambda * gy;
            let m = margin(cfg.tol, &[gx, gy, gz]);
            let violation = match shape {
                Shape::Concave => chord - gz, // need gz >= chord - m
                Shape::Convex => gz - chord,  // need gz <= chord + m
            };
            if violation > m {
                return Ok(Verdict::Falsified(Witness {
                    x: x.clone(),
                    y: y.clone(),
                    lambda: Some(lambda),
                    violation,
                    description: format!("{what} violated at blend lambda = {lambda}"),
                }));
            }
            checked += 1;
        }
    }
    Ok(Verdict::Corroborated {
        samples_checked: checked,
    })
}

fn check_quasiconcave(
    f: &dyn RealFn,
    dom: &BoxDomain,
    cfg: &SamplingConfig,
) -> Result<Verdict, EvalError> {
    let points = sample_pairs(dom, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e3779b97f4a7c15));
    let mut checked = 0usize;
    for pair in points.chunks_exact(2) {
        let (x, y) = (&pair[0], &pair[1]);
        let gx = f.value(x)?;
        let gy = f.value(y)?;
        for lambda in lambdas(cfg, &mut rng) {
            let z = blend(x, y, lambda);
            let gz = f.value(&z)?;
            let m = margin(cfg.tol, &[gx, gy, gz]);
            let violation = gx.min(gy) - gz;
            if violation > m {
                return Ok(Verdict::Falsified(Witness {
                    x: x.clone(),
                    y: y.clone(),
                    lambda: Some(lambda),
                    violation,
                    description: format!(
                        "quasiconcavity violated: f(blend) = {gz} < min(f(x), f(y)) = {}",
                        gx.min(gy)
                    ),
                }));
            }
            checked += 1;
        }
    }
    Ok(Verdict::Corroborated {
        samples_checked: checked,
    })
}

fn check_semi_strict(
    f: &dyn RealFn,
    dom: &BoxDomain,
    cfg: &SamplingConfig,
) -> Result<Verdict, EvalError> {
    let points = sample_pairs(dom, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e3779b97f4a7c15));
    let mut checked = 0usize;
    for pair in points.chunks_exact(2) {
        let (x, y) = (&pair[0], &pair[1]);
        let gx = f.value(x)?;
        let gy = f.value(y)?;
        let m = margin(cfg.tol, &[gx, gy]);
        // Strictness is tested with a margin: only clearly separated pairs
        // trigger the hypothesis.
        if gy <= gx + m {
            continue;
        }
        for lambda in lambdas(cfg, &mut rng) {
            let z = blend(x, y, lambda);
            let gz = f.value(&z)?;
            let m = margin(cfg.tol, &[gx, gy, gz]);
            if gz <= gx - m {
                return Ok(Verdict::Falsified(Witness {
                    x: x.clone(),
                    y: y.clone(),
                    lambda: Some(lambda),
                    violation: gx - gz,
                    description: format!(
                        "semi-strict quasiconcavity violated: f(y) = {gy} > f(x) = {gx} \
                         but f(blend) = {gz} <= f(x)"
                    ),
                }));
            }
            checked += 1;
        }
    }
    Ok(Verdict::Corroborated {
        samples_checked: checked,
    })
}

fn check_pseudoconcave(
    f: &dyn RealFn,
    dom: &BoxDomain,
    cfg: &SamplingConfig,
) -> Result<Verdict, EvalError> {
    let points = sample_pairs(dom, cfg);
    let mut checked = 0usize;
    for pair in points.chunks_exact(2) {
        let (x, y) = (&pair[0], &pair[1]);
        let gx = f.value(x)?;
        let gy = f.value(y)?;
        let grad = gradient_of(f, x, cfg.fd_step)?;
        let inner = dot(&grad, &diff(y, x));
        let m = margin(cfg.tol, &[gx, gy]);
        if inner <= m && gy > gx + m {
            return Ok(Verdict::Falsified(Witness {
                x: x.clone(),
                y: y.clone(),
                lambda: None,
                violation: gy - gx,
                description: format!(
                    "pseudoconcavity violated: <grad f(x), y-x> = {inner} <= 0 \
                     but f(y) = {gy} > f(x) = {gx}"
                ),
            }));
        }
        checked += 1;
    }
    Ok(Verdict::Corroborated {
        samples_checked: checked,
    })
}

fn check_quasiconcave_gradient(
    f: &dyn RealFn,
    dom: &BoxDomain,
    cfg: &SamplingConfig,
) -> Result<Verdict, EvalError> {
    let points = sample_pairs(dom, cfg);
    let mut checked = 0usize;
    for pair in points.chunks_exact(2) {
        let (x, y) = (&pair[0], &pair[1]);
        let gx = f.value(x)?;
        let gy = f.value(y)?;
        let grad = gradient_of(f, x, cfg.fd_step)?;
        let inner = dot(&grad, &diff(y, x));
        let m = margin(cfg.tol, &[gx, gy]);
        if inner < -m && gy >= gx {
            return Ok(Verdict::Falsified(Witness {
                x: x.clone(),
                y: y.clone(),
                lambda: None,
                violation: gy - gx,
                description: format!(
                    "gradient characterization violated: <grad f(x), y-x> = {inner} < 0 \
                     but f(y) = {gy} >= f(x) = {gx}"
                ),
            }));
        }
        checked += 1;
    }
    Ok(Verdict::Corroborated {
        samples_checked: checked,
    })
}

/// Necessary condition through the strict upper-level set: points with
/// f(x) above f(xbar) must satisfy `<grad f(xbar), x - xbar> >= 0`. The
/// closure of the strict set is approximated by a 1e-6 value band.
pub fn check_upper_level_necessary(
    f: &dyn RealFn,
    dom: &BoxDomain,
    xbar: &[f64],
    cfg: &SamplingConfig,
) -> Result<Verdict, EvalError> {
    let fbar = f.value(xbar)?;
    let grad = gradient_of(f, xbar, cfg.fd_step)?;
    let points = dom.sample(cfg.pairs, cfg.seed, cfg.bound);
    let mut checked = 0usize;
    for x in &points {
        let fx = f.value(x)?;
        if fx <= fbar - 1e-6 {
            continue;
        }
        let inner = dot(&grad, &diff(x, xbar));
        let m = margin(cfg.tol, &[fx, fbar]);
        if inner < -m {
            return Ok(Verdict::Falsified(Witness {
                x: xbar.to_vec(),
                y: x.clone(),
                lambda: None,
                violation: -inner,
                description: format!(
                    "upper-level necessary condition violated: f(x) = {fx} >= f(xbar) = {fbar} \
                     but <grad f(xbar), x - xbar> = {inner} < 0"
                ),
            }));
        }
        checked += 1;
    }
    Ok(Verdict::Corroborated {
        samples_checked: checked,
    })
}

impl Witness {
    /// Recomputes the violated quantity from the stored points. Intended
    /// for replay checks: a genuine witness reproduces a positive
    /// violation for inequality-style properties.
    pub fn replay_quasiconcave(&self, f: &dyn RealFn) -> Result<f64, EvalError> {
        let lambda = self.lambda.unwrap_or(0.5);
        let z = blend(&self.x, &self.y, lambda);
        let gx = f.value(&self.x)?;
        let gy = f.value(&self.y)?;
        let gz = f.value(&z)?;
        Ok(gx.min(gy) - gz)
    }

    pub fn replay_concave(&self, f: &dyn RealFn) -> Result<f64, EvalError> {
        let lambda = self.lambda.unwrap_or(0.5);
        let z = blend(&self.x, &self.y, lambda);
        let gx = f.value(&self.x)?;
        let gy = f.value(&self.y)?;
        let gz = f.value(&z)?;
        Ok((1.0 - lambda) * gx + lambda * gy - gz)
    }
}
