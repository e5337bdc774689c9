//! Desk-scale solvers: the closed-form budget-constrained Cobb-Douglas
//! maximizer, multistart ascent for unconstrained and constrained product
//! objectives with local-implies-global certification, and a brute-force
//! grid oracle for ground truth.

use thiserror::Error;

use crate::domain::{DomainError, Face};
use crate::expr::{gradient_of, EvalError, RealFn};
use crate::kkt::{self, ConstrainedProblem, KktConfig};
use crate::separable::{
    decide_quasiconcave, DecideConfig, Decision, ProductFunction, SeparableError,
};
use crate::superdiff::{self, DiniConfig};

#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error("no feasible start found within the sampling budget")]
    NoFeasibleStart,
    #[error("ascent runs toward the open boundary near {at:?}; the supremum may be unattained or infinite")]
    BoundarySupremum { at: Vec<f64> },
    #[error("grid oracle supports total dimension <= 4, got {0}")]
    DimensionTooLarge(usize),
    #[error("no grid node is feasible")]
    EmptyFeasibleGrid,
    #[error("non-positive input: {0}")]
    NonPositiveInput(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Separable(#[from] SeparableError),
    #[error(transparent)]
    Kkt(#[from] kkt::KktError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certification {
    /// Unconstrained, smooth: critical point of a quasiconcave-certified
    /// objective is a global maximum.
    GlobalByTheorem31,
    /// Unconstrained, nonsmooth: zero supergradient corroborated.
    GlobalByTheorem41,
    /// Constrained, smooth: valid KKT certificate.
    GlobalByTheorem32,
    /// Constrained, nonsmooth: valid modified-KKT certificate.
    GlobalByTheorem42,
    LocalOnly,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub maximizer: Vec<f64>,
    pub value: f64,
    /// Assembled multipliers and their verification report, when a
    /// certificate was attempted.
    pub certificate: Option<(Vec<f64>, kkt::CertificateReport)>,
    pub certification: Certification,
    pub starts_used: usize,
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub starts: usize,
    pub max_iters: usize,
    /// Gradient-norm convergence threshold.
    pub gtol: f64,
    /// Relative width of the strictly interior band iterates stay in.
    pub margin: f64,
    /// Consecutive wall-pressed steps before the boundary report.
    pub boundary_patience: usize,
    pub seed: u64,
    pub bound: f64,
    pub decide: DecideConfig,
    pub kkt: KktConfig,
    pub dini: DiniConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            starts: 16,
            max_iters: 400,
            gtol: 1e-7,
            margin: 1e-4,
            boundary_patience: 5,
            seed: 0,
            bound: 10.0,
            decide: DecideConfig::default(),
            kkt: KktConfig::default(),
            dini: DiniConfig::default(),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Closed-form maximizer of prod x_i^alpha_i under <p, x> <= B on the
/// positive orthant, with the common stationarity multiplier.
pub fn solve_cobb_douglas(
    alpha: &[f64],
    prices: &[f64],
    budget: f64,
) -> Result<(Vec<f64>, f64), SolveError> {
    if alpha.is_empty() || alpha.len() != prices.len() {
        return Err(SolveError::NonPositiveInput(
            "alpha and prices must be nonempty and of equal length".into(),
        ));
    }
    if alpha.iter().any(|a| *a <= 0.0) || prices.iter().any(|p| *p <= 0.0) || budget <= 0.0 {
        return Err(SolveError::NonPositiveInput(format!(
            "alpha = {alpha:?}, prices = {prices:?}, budget = {budget}"
        )));
    }
    let total: f64 = alpha.iter().sum();
    let x: Vec<f64> = alpha
        .iter()
        .zip(prices)
        .map(|(a, p)| a * budget / (total * p))
        .collect();
    let u: f64 = x.iter().zip(alpha).map(|(xi, a)| xi.powf(*a)).product();
    let lambda = alpha[0] * u / (prices[0] * x[0]);
    Ok((x, lambda))
}

struct StartOutcome {
    x: Vec<f64>,
    value: f64,
    wall: bool,
}

/// Gradient ascent inside the strictly interior band with step-halving
/// line search and an extra feasibility predicate. Reports whether the
/// iterate ended pressed against an open face.
fn ascend(
    f: &dyn RealFn,
    lo: &[f64],
    hi: &[f64],
    wallish: &[bool],
    feasible: &dyn Fn(&[f64]) -> bool,
    start: &[f64],
    cfg: &SolveConfig,
) -> Result<StartOutcome, EvalError> {
    let n = start.len();
    let clip = |x: &mut Vec<f64>| {
        for i in 0..n {
            let m = cfg.margin * (hi[i] - lo[i]);
            x[i] = x[i].clamp(lo[i] + m, hi[i] - m);
        }
    };
    let near_wall = |x: &[f64]| {
        (0..n).any(|i| {
            let m = 1.5 * cfg.margin * (hi[i] - lo[i]);
            wallish[i] && (x[i] - lo[i] <= m || hi[i] - x[i] <= m)
        })
    };

    let mut x = start.to_vec();
    clip(&mut x);
    let mut fx = f.value(&x)?;
    let mut step = 1.0f64;
    let mut pressed = 0usize;
    let mut wall = false;
    for _ in 0..cfg.max_iters {
        let g = match gradient_of(f, &x, 1e-6) {
            Ok(g) => g,
            Err(_) => break,
        };
        let gn = norm(&g);
        if gn <= cfg.gtol {
            break;
        }
        let mut advanced = false;
        let mut s = step;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + s * b / gn).collect();
            clip(&mut xn);
            if feasible(&xn) {
                if let Ok(fn_) = f.value(&xn) {
                    if fn_ > fx {
                        x = xn;
                        fx = fn_;
                        step = (s * 2.0).min(1.0);
                        advanced = true;
                        break;
                    }
                }
            }
            s *= 0.5;
        }
        if !advanced {
            break;
        }
        if near_wall(&x) {
            pressed += 1;
            if pressed >= cfg.boundary_patience {
                wall = true;
                break;
            }
        } else {
            pressed = 0;
        }
    }
    Ok(StartOutcome { x, value: fx, wall })
}

/// Compass-search refinement for nonsmooth objectives: coordinate steps
/// with a geometrically shrinking radius, rejecting infeasible moves.
fn pattern_polish(
    f: &dyn RealFn,
    lo: &[f64],
    hi: &[f64],
    feasible: &dyn Fn(&[f64]) -> bool,
    start: &[f64],
) -> Result<Vec<f64>, EvalError> {
    let n = start.len();
    let mut x = start.to_vec();
    let mut fx = f.value(&x)?;
    let mut radius: Vec<f64> = (0..n).map(|i| 0.05 * (hi[i] - lo[i])).collect();
    for _ in 0..80 {
        let mut improved = false;
        for i in 0..n {
            for sgn in [1.0, -1.0] {
                let mut xn = x.clone();
                xn[i] += sgn * radius[i];
                if xn[i] <= lo[i] || xn[i] >= hi[i] || !feasible(&xn) {
                    continue;
                }
                if let Ok(v) = f.value(&xn) {
                    if v > fx {
                        x = xn;
                        fx = v;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            for r in radius.iter_mut() {
                *r *= 0.5;
            }
            if radius.iter().all(|r| *r < 1e-10) {
                break;
            }
        }
    }
    Ok(x)
}

/// Unconstrained maximization of a positive product function over its
/// open box, with global certification when the separable criterion says
/// Yes and a critical point (or zero supergradient) is exhibited.
pub fn solve_usqp(obj: &ProductFunction, cfg: &SolveConfig) -> Result<SolveResult, SolveError> {
    let decision = decide_quasiconcave(obj, &cfg.decide)?;
    let certified = matches!(decision.decision, Decision::Yes(_));

    let dom = obj.joint_domain();
    let (lo, hi) = dom.truncated_bounds(cfg.bound);
    // Pressing against a truncation wall of an infinite face also counts
    // as boundary escape.
    let wallish: Vec<bool> = (0..dom.dim())
        .map(|i| {
            dom.lower()[i].is_infinite()
                || dom.upper()[i].is_infinite()
                || dom.lower_face()[i] == Face::Open
                || dom.upper_face()[i] == Face::Open
        })
        .collect();
    let starts = dom.sample(cfg.starts, cfg.seed, cfg.bound);
    let always = |_: &[f64]| true;

    let mut outcomes = Vec::with_capacity(starts.len());
    for s in &starts {
        let mut out = ascend(obj, &lo, &hi, &wallish, &always, s, cfg)?;
        if !out.wall {
            if obj.has_kinks() {
                let polished = pattern_polish(obj, &lo, &hi, &always, &out.x)?;
                let v = obj.value(&polished)?;
                if v > out.value {
                    out.x = polished;
                    out.value = v;
                }
            } else if let Some(crit) = superdiff::find_critical_point(obj, dom, &out.x, &cfg.dini) {
                if let Ok(v) = obj.value(&crit) {
                    if v >= out.value {
                        out.x = crit;
                        out.value = v;
                    }
                }
            }
        }
        outcomes.push(out);
    }

    let best = outcomes
        .iter()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start");
    if best.wall {
        return Err(SolveError::BoundarySupremum { at: best.x.clone() });
    }

    let certification = if !certified {
        Certification::LocalOnly
    } else if !obj.has_kinks() && norm(&gradient_of(obj, &best.x, 1e-6)?) <= cfg.gtol {
        Certification::GlobalByTheorem31
    } else if obj.has_kinks()
        && superdiff::zero_in_superdiff(obj, &best.x, &cfg.dini)?.is_corroborated()
    {
        Certification::GlobalByTheorem41
    } else {
        Certification::LocalOnly
    };

    Ok(SolveResult {
        maximizer: best.x.clone(),
        value: best.value,
        certificate: None,
        certification,
        starts_used: starts.len(),
    })
}

/// Multiplier assembly: least-squares fit of the stationarity identity
/// over subsets of the active set, keeping the sign-feasible fit with the
/// smallest residual. Candidate covectors cover coordinate kinks.
fn assemble_lambda(
    prob: &ConstrainedProblem,
    x: &[f64],
    active: &[usize],
    cfg: &SolveConfig,
) -> Result<Option<Vec<f64>>, SolveError> {
    let p = prob.constraints.len();
    if active.is_empty() {
        return Ok(Some(vec![0.0; p]));
    }
    let f_cands = superdiff::covector_candidates(&prob.objective, x, &cfg.dini)?;
    let mut h_cands = Vec::with_capacity(active.len());
    for &j in active {
        let mut c = superdiff::covector_candidates(&prob.constraints[j].expr, x, &cfg.dini)?;
        if c.is_empty() {
            c = vec![gradient_of(&prob.constraints[j].expr, x, 1e-6)?];
        }
        h_cands.push(c);
    }

    let n = x.len();
    let k = active.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    // Product of candidate choices, one gradient per constraint; active
    // sets are tiny at desk scale.
    let mut choice = vec![0usize; k];
    'outer: loop {
        for gf in &f_cands {
            let cols: Vec<&Vec<f64>> = choice
                .iter()
                .enumerate()
                .map(|(idx, &c)| &h_cands[idx][c])
                .collect();
            // Fit lambda >= 0 minimizing |gf + sum lambda_j gh_j| over
            // subsets of the active constraints.
            for mask in 0..(1u32 << k) {
                let subset: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
                let a: Vec<Vec<f64>> = (0..n)
                    .map(|r| subset.iter().map(|&i| -cols[i][r]).collect())
                    .collect();
                let b: Vec<f64> = gf.clone();
                let sol = if subset.is_empty() {
                    Some(Vec::new())
                } else {
                    crate::linalg::lstsq(&a, &b)
                };
                let Some(sol) = sol else { continue };
                if sol.iter().any(|l| *l < -1e-9) {
                    continue;
                }
                let mut lam = vec![0.0; k];
                for (pos, &i) in subset.iter().enumerate() {
                    lam[i] = sol[pos].max(0.0);
                }
                let mut resid = vec![0.0; n];
                for r in 0..n {
                    resid[r] = gf[r] + (0..k).map(|i| lam[i] * cols[i][r]).sum::<f64>();
                }
                let rn = norm(&resid);
                if best.as_ref().is_none_or(|(b, _)| rn < *b) {
                    let mut full = vec![0.0; p];
                    for (i, &j) in active.iter().enumerate() {
                        full[j] = lam[i];
                    }
                    best = Some((rn, full));
                }
            }
        }
        // Advance the mixed-radix candidate choice.
        for i in 0..k {
            choice[i] += 1;
            if choice[i] < h_cands[i].len() {
                continue 'outer;
            }
            choice[i] = 0;
        }
        break;
    }
    Ok(best.map(|(_, l)| l))
}

/// Newton iteration on the active-set stationarity system
/// [grad f + sum lambda_j grad h_j ; h_active] = 0 in (x, lambda),
/// polishing a smooth ascent point to certificate precision.
fn newton_polish(
    prob: &ConstrainedProblem,
    x0: &[f64],
    active: &[usize],
    lam0: &[f64],
    lo: &[f64],
    hi: &[f64],
    cfg: &SolveConfig,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = x0.len();
    let k = active.len();
    let m = n + k;
    let fstep = 1e-6;

    // Where the objective is positive, solve the stationarity system for
    // ln f instead: its gradient does not collapse to zero near the box
    // boundary, which otherwise lets Newton "converge" to spurious points
    // where f itself is vanishingly small.
    let logspace = prob.objective.value(x0).is_ok_and(|v| v > 0.0);
    let grad_obj = |x: &[f64]| -> Option<Vec<f64>> {
        if !logspace {
            return gradient_of(&prob.objective, x, fstep).ok();
        }
        let mut g = vec![0.0; n];
        for i in 0..n {
            let h = fstep * (1.0 + x[i].abs());
            let mut xp = x.to_vec();
            xp[i] += h;
            let mut xm = x.to_vec();
            xm[i] -= h;
            let vp = prob.objective.value(&xp).ok()?;
            let vm = prob.objective.value(&xm).ok()?;
            if vp <= 0.0 || vm <= 0.0 {
                return None;
            }
            g[i] = (vp.ln() - vm.ln()) / (2.0 * h);
        }
        Some(g)
    };

    let eval_sys = |z: &[f64]| -> Option<Vec<f64>> {
        let x = &z[..n];
        let lam = &z[n..];
        let mut out = grad_obj(x)?;
        for (i, &j) in active.iter().enumerate() {
            let gh = gradient_of(&prob.constraints[j].expr, x, fstep).ok()?;
            for r in 0..n {
                out[r] += lam[i] * gh[r];
            }
        }
        for &j in active {
            out.push(prob.constraints[j].expr.eval(x).ok()?);
        }
        Some(out)
    };

    let mut z: Vec<f64> = x0.to_vec();
    z.extend_from_slice(lam0);
    let clip = |z: &mut Vec<f64>| {
        for i in 0..n {
            let m = 0.5 * cfg.margin * (hi[i] - lo[i]);
            z[i] = z[i].clamp(lo[i] + m, hi[i] - m);
        }
    };
    clip(&mut z);
    let mut fz = eval_sys(&z)?;
    for _ in 0..60 {
        if norm(&fz) <= 1e-11 {
            break;
        }
        let mut jac = vec![vec![0.0; m]; m];
        for c in 0..m {
            let h = 1e-6 * (1.0 + z[c].abs());
            let mut zp = z.clone();
            zp[c] += h;
            let fp = eval_sys(&zp)?;
            let mut zm = z.clone();
            zm[c] -= h;
            let fm = eval_sys(&zm)?;
            for r in 0..m {
                jac[r][c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        let rhs: Vec<f64> = fz.iter().map(|v| -v).collect();
        let dz = crate::linalg::solve_dense(&jac, &rhs)?;
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..25 {
            let mut zn: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + step * b).collect();
            clip(&mut zn);
            if let Some(fn_) = eval_sys(&zn) {
                if norm(&fn_) < norm(&fz) {
                    z = zn;
                    fz = fn_;
                    advanced = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    if norm(&fz) > 1e-8 {
        return None;
    }
    let x = z[..n].to_vec();
    let mut lam = z[n..].to_vec();
    if lam.iter().any(|l| *l < -1e-9) {
        return None;
    }
    if logspace {
        // The log-space multipliers satisfy grad ln f + sum lam' grad h = 0;
        // scale by f to recover multipliers for the original objective.
        let fstar = prob.objective.value(&x).ok()?;
        for l in &mut lam {
            *l *= fstar;
        }
    }
    Some((x, lam))
}

/// Constrained maximization with certificate assembly. Certification is
/// granted only when the separable criterion certifies the objective and
/// the assembled certificate verifies.
pub fn solve_csqp(prob: &ConstrainedProblem, cfg: &SolveConfig) -> Result<SolveResult, SolveError> {
    let decision = decide_quasiconcave(&prob.objective, &cfg.decide)?;
    let certified = matches!(decision.decision, Decision::Yes(_));

    let dom = &prob.domain;
    let (lo, hi) = dom.truncated_bounds(cfg.bound);
    let feasible = |x: &[f64]| {
        prob.constraints
            .iter()
            .all(|c| c.expr.eval(x).is_ok_and(|v| v >= 0.0))
    };

    let candidates = dom.sample(20 * cfg.starts, cfg.seed, cfg.bound);
    // When the feasible set is a thin slice of the box (e.g. a budget
    // simplex in several dimensions), plain rejection sampling finds almost
    // nothing. Infeasible samples are then pulled toward a feasible anchor
    // near the lower corner, which preserves their directional spread.
    let anchor: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| l + 1e-3 * (h - l))
        .collect();
    let anchor_ok = feasible(&anchor);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for x in candidates {
        if starts.len() >= cfg.starts {
            break;
        }
        if feasible(&x) {
            starts.push(x);
            continue;
        }
        if !anchor_ok {
            continue;
        }
        let at = |t: f64| -> Vec<f64> {
            anchor
                .iter()
                .zip(&x)
                .map(|(a, b)| a + t * (b - a))
                .collect()
        };
        let (mut tlo, mut thi) = (0.0f64, 1.0f64);
        for _ in 0..40 {
            let mid = 0.5 * (tlo + thi);
            if feasible(&at(mid)) {
                tlo = mid;
            } else {
                thi = mid;
            }
        }
        let pulled = at(0.95 * tlo);
        if feasible(&pulled) {
            starts.push(pulled);
        }
    }
    if starts.is_empty() {
        return Err(SolveError::NoFeasibleStart);
    }

    let wallish = vec![false; dom.dim()];
    let mut outcomes = Vec::with_capacity(starts.len());
    for s in &starts {
        let out = ascend(&prob.objective, &lo, &hi, &wallish, &feasible, s, cfg)?;
        outcomes.push(out);
    }
    outcomes.sort_by(|a, b| b.value.total_cmp(&a.value));
    let smooth =
        !prob.objective.has_kinks() && prob.constraints.iter().all(|c| !c.expr.has_kinks());

    // Refine the leading ascent points to certificate precision.
    let mut best_x = outcomes[0].x.clone();
    let mut best_v = outcomes[0].value;
    for out in outcomes.iter().take(3) {
        let refined = if smooth {
            refine_smooth(prob, &out.x, &lo, &hi, cfg)?
        } else {
            Some(pattern_polish(
                &prob.objective,
                &lo,
                &hi,
                &feasible,
                &out.x,
            )?)
        };
        if let Some(x) = refined {
            // Refined points may sit on a constraint surface to FD noise,
            // so re-check feasibility with the certificate tolerance.
            if prob.is_feasible(&x, cfg.kkt.tol).unwrap_or(false) {
                if let Ok(v) = prob.objective.value(&x) {
                    if v > best_v {
                        best_v = v;
                        best_x = x;
                    }
                }
            }
        }
    }

    // Assemble and verify the certificate at the refined point.
    let band_active: Vec<usize> = prob
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.expr.eval(&best_x).is_ok_and(|v| v.abs() <= 1e-5))
        .map(|(j, _)| j)
        .collect();
    let lambda = assemble_lambda(prob, &best_x, &band_active, cfg)?;
    let mut certificate = None;
    let mut valid = false;
    if let Some(lam) = lambda {
        let report = if smooth {
            kkt::check_kkt_diff(prob, &best_x, &lam, &cfg.kkt)
        } else {
            kkt::check_mkkt(prob, &best_x, &lam, &cfg.kkt)
        };
        if let Ok(report) = report {
            valid = report.is_valid();
            certificate = Some((lam, report));
        }
    }

    let certification = if certified && valid {
        if smooth {
            Certification::GlobalByTheorem32
        } else {
            Certification::GlobalByTheorem42
        }
    } else {
        Certification::LocalOnly
    };

    Ok(SolveResult {
        maximizer: best_x,
        value: best_v,
        certificate,
        certification,
        starts_used: starts.len(),
    })
}

/// Smooth refinement step of `solve_csqp`: try Newton on the stationarity
/// system for each small active-set guess near the ascent point.
fn refine_smooth(
    prob: &ConstrainedProblem,
    x: &[f64],
    lo: &[f64],
    hi: &[f64],
    cfg: &SolveConfig,
) -> Result<Option<Vec<f64>>, SolveError> {
    let p = prob.constraints.len().min(6);
    // Every small active-set guess; the right one converges from any
    // reasonable ascent point and infeasible guesses are filtered below.
    let mut guesses: Vec<Vec<usize>> = Vec::new();
    for mask in 0..(1u32 << p) {
        guesses.push((0..p).filter(|j| mask & (1 << j) != 0).collect());
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for active in guesses {
        let lam0 = vec![0.1; active.len()];
        if let Some((xr, _)) = newton_polish(prob, x, &active, &lam0, lo, hi, cfg) {
            let feas_ok = prob.is_feasible(&xr, cfg.kkt.tol)?;
            if !feas_ok {
                continue;
            }
            let v = prob.objective.value(&xr)?;
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, xr));
            }
        }
    }
    Ok(best.map(|(_, x)| x))
}

#[derive(Debug, Clone)]
pub struct GridBest {
    pub point: Vec<f64>,
    pub value: f64,
}

/// Exhaustive evaluation on a strictly interior grid; ground truth for
/// the solvers at desk scale.
pub fn grid_oracle(
    obj: &ProductFunction,
    constraints: &[crate::kkt::Constraint],
    resolution: usize,
    bound: f64,
) -> Result<GridBest, SolveError> {
    let dom = obj.joint_domain();
    let n = dom.dim();
    if n > 4 {
        return Err(SolveError::DimensionTooLarge(n));
    }
    let (lo, hi) = dom.truncated_bounds(bound);
    let nodes: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (1..=resolution)
                .map(|k| lo[i] + k as f64 * (hi[i] - lo[i]) / (resolution as f64 + 1.0))
                .collect()
        })
        .collect();
    let mut idx = vec![0usize; n];
    let mut best: Option<GridBest> = None;
    loop {
        let x: Vec<f64> = idx.iter().enumerate().map(|(i, &k)| nodes[i][k]).collect();
        let ok = constraints
            .iter()
            .all(|c| c.expr.eval(&x).is_ok_and(|v| v >= 0.0));
        if ok {
            if let Ok(v) = obj.value(&x) {
                if best.as_ref().is_none_or(|b| v > b.value) {
                    best = Some(GridBest { point: x, value: v });
                }
            }
        }
        // Odometer increment.
        let mut i = 0;
        loop {
            if i == n {
                return best.ok_or(SolveError::EmptyFeasibleGrid);
            }
            idx[i] += 1;
            if idx[i] < resolution {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BoxDomain;
    use crate::expr::parse;
    use crate::kkt::{cobb_douglas_problem, Constraint};
    use crate::separable::{make_product, Factor};

    #[test]
    fn newton_polish_from_surface_stall_point() {
        let alpha = [
            4.7563494975951714,
            2.194830373996947,
            3.1740665538669677,
            1.514110007791795,
        ];
        let prices = [
            0.8347984644225923,
            1.6093987420297575,
            4.038976559160571,
            3.8791190259339996,
        ];
        let budget = 5.533120023245447;
        let prob = cobb_douglas_problem(&alpha, &prices, budget).unwrap();
        let cfg = SolveConfig {
            bound: 1.05 * budget / 0.8347984644225923,
            ..Default::default()
        };
        let (lo, hi) = prob.domain.truncated_bounds(cfg.bound);
        let start = [
            1.9459693233020596,
            0.6785430514835856,
            0.13964491956029387,
            0.5806882735742936,
        ];
        let out = newton_polish(&prob, &start, &[0], &[0.1], &lo, &hi, &cfg);
        let (x, lam) = out.expect("newton converges");
        let (closed, clam) = solve_cobb_douglas(&alpha, &prices, budget).unwrap();
        for (a, b) in x.iter().zip(&closed) {
            assert!((a - b).abs() <= 1e-6 * b, "{x:?} vs {closed:?}");
        }
        assert!((lam[0] - clam).abs() <= 1e-6 * clam);
    }

    #[test]
    fn cobb_douglas_symmetric_split() {
        let (x, lam) = solve_cobb_douglas(&[1.0, 1.0], &[1.0, 1.0], 2.0).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        assert!((lam - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cobb_douglas_weighted_instance() {
        let (x, _) = solve_cobb_douglas(&[1.0, 2.0, 3.0], &[2.0, 1.0, 4.0], 12.0).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 4.0).abs() < 1e-12);
        assert!((x[2] - 1.5).abs() < 1e-12);
        let spent: f64 = [2.0, 1.0, 4.0].iter().zip(&x).map(|(p, xi)| p * xi).sum();
        assert!((spent - 12.0).abs() < 1e-12);
    }

    #[test]
    fn cobb_douglas_single_good_spends_budget() {
        let (x, _) = solve_cobb_douglas(&[2.0], &[5.0], 10.0).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cobb_douglas_rejects_nonpositive() {
        assert!(matches!(
            solve_cobb_douglas(&[1.0, -1.0], &[1.0, 1.0], 2.0),
            Err(SolveError::NonPositiveInput(_))
        ));
    }

    fn gaussian_peak(center: f64, lo: f64, hi: f64) -> Factor {
        Factor::new(
            parse(&format!("exp(-((x1 - {center})^2))")).unwrap(),
            BoxDomain::interval(lo, hi),
        )
    }

    #[test]
    fn usqp_finds_kernel_peak() {
        let obj = make_product(vec![gaussian_peak(1.0, 0.0, 2.0)]).unwrap();
        let r = solve_usqp(&obj, &Default::default()).unwrap();
        assert!((r.maximizer[0] - 1.0).abs() < 1e-6, "{r:?}");
        assert_eq!(r.certification, Certification::GlobalByTheorem31);
    }

    #[test]
    fn usqp_two_dimensional_kernel() {
        let obj = make_product(vec![
            gaussian_peak(0.0, -3.0, 3.0),
            gaussian_peak(0.0, -3.0, 3.0),
        ])
        .unwrap();
        let r = solve_usqp(&obj, &Default::default()).unwrap();
        assert!(r.maximizer.iter().all(|v| v.abs() < 1e-6), "{r:?}");
        assert!((r.value - 1.0).abs() < 1e-9);
        assert_eq!(r.certification, Certification::GlobalByTheorem31);
    }

    #[test]
    fn usqp_reports_boundary_supremum() {
        let obj = make_product(vec![
            Factor::new(
                parse("min(x1, 2 - x1)").unwrap(),
                BoxDomain::interval(0.0, 2.0),
            ),
            Factor::new(parse("x1").unwrap(), BoxDomain::interval(0.0, 1.0)),
        ])
        .unwrap();
        assert!(matches!(
            solve_usqp(&obj, &Default::default()),
            Err(SolveError::BoundarySupremum { .. })
        ));
    }

    #[test]
    fn csqp_recovers_closed_form() {
        let prob = cobb_douglas_problem(&[1.0, 2.0, 3.0], &[2.0, 1.0, 4.0], 12.0).unwrap();
        let r = solve_csqp(&prob, &Default::default()).unwrap();
        let expected = [1.0, 4.0, 1.5];
        for (a, b) in r.maximizer.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-6 * b, "{:?}", r.maximizer);
        }
        assert_eq!(r.certification, Certification::GlobalByTheorem32, "{r:?}");
    }

    #[test]
    fn csqp_certifies_kinked_instance() {
        let obj = make_product(vec![
            Factor::new(
                parse("min(x1, 2 - x1)").unwrap(),
                BoxDomain::interval(0.0, 2.0),
            ),
            Factor::new(parse("x1").unwrap(), BoxDomain::interval(0.0, 1.0)),
        ])
        .unwrap();
        let prob = ConstrainedProblem::new(obj, vec![Constraint::new(parse("0.5 - x2").unwrap())]);
        let r = solve_csqp(&prob, &Default::default()).unwrap();
        assert!((r.maximizer[0] - 1.0).abs() < 1e-3, "{r:?}");
        assert!((r.maximizer[1] - 0.5).abs() < 1e-3, "{r:?}");
        assert_eq!(r.certification, Certification::GlobalByTheorem42, "{r:?}");
    }

    #[test]
    fn csqp_errors_without_feasible_start() {
        let obj = make_product(vec![Factor::new(
            parse("x1").unwrap(),
            BoxDomain::interval(0.0, 10.0),
        )])
        .unwrap();
        let prob = ConstrainedProblem::new(obj, vec![Constraint::new(parse("-1 - x1^2").unwrap())]);
        assert!(matches!(
            solve_csqp(&prob, &Default::default()),
            Err(SolveError::NoFeasibleStart)
        ));
    }

    #[test]
    fn csqp_refuses_certification_on_uncertified_objective() {
        // x1^2 / x2 fails the separable criterion (reciprocal index sum
        // 2 - 1 > 0), so even a clean stationary point stays LocalOnly.
        let obj = make_product(vec![
            Factor::new(parse("x1^2").unwrap(), BoxDomain::interval(0.0, 4.0)),
            Factor::new(parse("x1^-1").unwrap(), BoxDomain::interval(0.0, 4.0)),
        ])
        .unwrap();
        let prob =
            ConstrainedProblem::new(obj, vec![Constraint::new(parse("3 - x1 - x2").unwrap())]);
        let r = solve_csqp(&prob, &Default::default()).unwrap();
        assert_eq!(r.certification, Certification::LocalOnly, "{r:?}");
    }

    #[test]
    fn grid_oracle_matches_closed_form_within_cell() {
        let prob = cobb_douglas_problem(&[1.0, 1.0], &[1.0, 1.0], 2.0).unwrap();
        let g = grid_oracle(&prob.objective, &prob.constraints, 200, 10.0).unwrap();
        let cell = 10.0 / 201.0;
        assert!((g.point[0] - 1.0).abs() <= cell, "{g:?}");
        assert!((g.point[1] - 1.0).abs() <= cell, "{g:?}");
    }

    #[test]
    fn grid_oracle_unconstrained_kernel() {
        let obj = make_product(vec![gaussian_peak(0.0, -2.0, 2.0)]).unwrap();
        let g = grid_oracle(&obj, &[], 199, 10.0).unwrap();
        assert!(g.point[0].abs() <= 4.0 / 200.0 + 1e-12, "{g:?}");
    }

    #[test]
    fn grid_oracle_empty_feasible_set() {
        let obj = make_product(vec![gaussian_peak(0.0, -2.0, 2.0)]).unwrap();
        let cons = vec![Constraint::new(parse("-1 - x1^2").unwrap())];
        assert!(matches!(
            grid_oracle(&obj, &cons, 50, 10.0),
            Err(SolveError::EmptyFeasibleGrid)
        ));
    }

    #[test]
    fn grid_oracle_rejects_high_dimension() {
        let obj = make_product(vec![
            gaussian_peak(0.0, -1.0, 1.0),
            gaussian_peak(0.0, -1.0, 1.0),
            gaussian_peak(0.0, -1.0, 1.0),
            gaussian_peak(0.0, -1.0, 1.0),
            gaussian_peak(0.0, -1.0, 1.0),
        ])
        .unwrap();
        assert!(matches!(
            grid_oracle(&obj, &[], 5, 10.0),
            Err(SolveError::DimensionTooLarge(5))
        ));
    }
}
