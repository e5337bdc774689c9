//! Acceptance suite: one test per release criterion, each printing a
//! single pass/fail line. Tolerances are pinned here, not configurable.

use std::panic::{catch_unwind, resume_unwind, UnwindSafe};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sqcp::cvindex::{index, IndexConfig};
use sqcp::domain::BoxDomain;
use sqcp::expr::{parse, EvalError, RealFn};
use sqcp::gencv::{check_property, ConcavityProperty, SamplingConfig};
use sqcp::kkt::{check_mkkt, cobb_douglas_problem, ConstrainedProblem, Constraint, KktConfig};
use sqcp::separable::{
    decide_quasiconcave, make_product, DecideConfig, Decision, Factor, ProductFunction,
};
use sqcp::solve::{
    grid_oracle, solve_cobb_douglas, solve_csqp, solve_usqp, Certification, SolveConfig,
};
use sqcp::superdiff::{
    dini_lower, dini_upper, superdiff_membership, DiniConfig, SuperdiffCandidate,
};

const COORD_RTOL: f64 = 1e-6; // criterion 1: per-coordinate match
const INDEX_RTOL: f64 = 0.05; // criterion 3: joint-index aggregation
const VALUE_RTOL: f64 = 1e-6; // criterion 4: multistart value spread
const MEMBERSHIP_TOL: f64 = 1e-6; // criterion 5: membership boundary
const DINI_ATOL: f64 = 1e-3; // criterion 5: smooth directional derivatives

fn criterion(n: u32, name: &str, body: impl FnOnce() + UnwindSafe) {
    let outcome = catch_unwind(body);
    let status = if outcome.is_ok() { "PASS" } else { "FAIL" };
    println!("acceptance criterion {n} ({name}): {status}");
    if let Err(e) = outcome {
        resume_unwind(e);
    }
}

/// Decide/solve configuration scaled for batch runs: smaller shape-check
/// budgets keep the wall-clock criteria honest without changing any
/// pinned tolerance.
fn batch_cfg(bound: f64) -> SolveConfig {
    let mut cfg = SolveConfig {
        bound,
        ..Default::default()
    };
    cfg.decide.index.shape.pairs = 150;
    cfg.decide.index.lines = 4;
    cfg.kkt.slater_budget = 500;
    cfg
}

#[test]
fn criterion_1_closed_form_reproduction() {
    criterion(1, "budget-constrained closed form", || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for run in 0..25 {
            let n = rng.gen_range(2..=4usize);
            let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
            let prices: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
            let budget: f64 = rng.gen_range(1.0..20.0);

            let (closed, lam_closed) = solve_cobb_douglas(&alpha, &prices, budget).unwrap();
            let prob = cobb_douglas_problem(&alpha, &prices, budget).unwrap();
            let bound = budget / prices.iter().fold(f64::INFINITY, |m, p| m.min(*p));
            let r = solve_csqp(&prob, &batch_cfg(1.05 * bound)).unwrap();

            for (i, (got, want)) in r.maximizer.iter().zip(&closed).enumerate() {
                assert!(
                    (got - want).abs() <= COORD_RTOL * want.abs(),
                    "run {run}: coordinate {i}: {got} vs {want} (alpha = {alpha:?}, p = {prices:?}, B = {budget})"
                );
            }
            let (_, report) = r.certificate.as_ref().expect("certificate assembled");
            assert!(report.is_valid(), "run {run}: {report:?}");

            if n == 2 {
                let grid =
                    grid_oracle(&prob.objective, &prob.constraints, 200, 1.05 * bound).unwrap();
                // One-cell agreement, measured in objective value: the
                // grid argmax drifts positionally along the flat feasible
                // staircase under the budget line, so position is checked
                // through the value it achieves. The optimum value must
                // dominate the grid and exceed it by at most the change a
                // one-cell displacement can produce (gradient at the
                // optimum is lam * p by stationarity).
                let cell = 1.05 * bound / 201.0;
                let fstar = prob.objective.value(&closed).unwrap();
                let lipschitz = lam_closed * prices.iter().map(|p| p * p).sum::<f64>().sqrt();
                assert!(
                    grid.value <= fstar * (1.0 + 1e-9),
                    "run {run}: grid {grid:?} beats closed form {fstar}"
                );
                assert!(
                    fstar - grid.value <= lipschitz * cell * 2f64.sqrt(),
                    "run {run}: grid {grid:?} vs closed-form value {fstar}"
                );
            }
        }
    });
}

#[test]
fn criterion_2_power_boundary_sharpness() {
    criterion(2, "product criterion boundary", || {
        let grid: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];
        let cfg = DecideConfig::default();
        let boundary_band = 3.0 * cfg.index.bisect_tol;
        for a in grid {
            for b in grid {
                let p = make_product(vec![
                    Factor::new(
                        parse(&format!("x1^{a}")).unwrap(),
                        BoxDomain::positive_orthant(1),
                    ),
                    Factor::new(
                        parse(&format!("x1^-{b}")).unwrap(),
                        BoxDomain::positive_orthant(1),
                    ),
                ])
                .unwrap();
                let d = decide_quasiconcave(&p, &cfg).unwrap();
                let on_boundary = (a - b).abs() <= boundary_band;
                match d.decision {
                    Decision::Yes(_) => {
                        assert!(a <= b + boundary_band, "({a}, {b}) wrongly accepted")
                    }
                    Decision::No(_) => {
                        assert!(a >= b - boundary_band, "({a}, {b}) wrongly rejected");
                        // Every No must come with a sampling witness.
                        let v = check_property(
                            &p,
                            p.joint_domain(),
                            ConcavityProperty::Quasiconcave,
                            &SamplingConfig::default().with_pairs(2000),
                        )
                        .unwrap();
                        assert!(v.is_falsified(), "({a}, {b}): No without witness");
                    }
                    Decision::Unknown(why) => {
                        assert!(on_boundary, "({a}, {b}): Unknown off boundary ({why})")
                    }
                }
            }
        }
    });
}

#[test]
fn criterion_3_index_aggregation() {
    criterion(3, "joint index vs reciprocal sum", || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for run in 0..10 {
            let m = rng.gen_range(2..=3usize);
            let exps: Vec<f64> = (0..m).map(|_| rng.gen_range(0.3..3.0)).collect();
            let p = make_product(
                exps.iter()
                    .map(|a| {
                        Factor::new(
                            parse(&format!("x1^{a}")).unwrap(),
                            BoxDomain::positive_orthant(1),
                        )
                    })
                    .collect(),
            )
            .unwrap();
            let est = index(&p, p.joint_domain(), &IndexConfig::default()).unwrap();
            let got = est.index.as_finite().expect("finite joint index");
            let want = 1.0 / exps.iter().sum::<f64>();
            assert!(
                (got - want).abs() <= INDEX_RTOL * want.abs(),
                "run {run}: exponents {exps:?}: {got} vs {want}"
            );
        }
    });
}

fn bump_instance(centers: &[f64], widths: &[f64], quadratic: bool) -> ProductFunction {
    let factors = centers
        .iter()
        .zip(widths)
        .map(|(c, w)| {
            let expr = if quadratic {
                // Positive concave bump peaking at the box center.
                format!("{} - (x1 - {c})^2", w * w + 1.0)
            } else {
                format!("exp(-((x1 - {c})^2))")
            };
            Factor::new(parse(&expr).unwrap(), BoxDomain::interval(c - w, c + w))
        })
        .collect();
    make_product(factors).unwrap()
}

#[test]
fn criterion_4_local_implies_global() {
    criterion(4, "multistart value agreement", || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for run in 0..15 {
            let dim = if run % 3 == 0 { 1 } else { 2 };
            let centers: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let widths: Vec<f64> = (0..dim).map(|_| rng.gen_range(1.0..2.0)).collect();
            let obj = bump_instance(&centers, &widths, run % 2 == 0);

            let mut values = Vec::with_capacity(16);
            for s in 0..16u64 {
                let mut cfg = batch_cfg(10.0);
                cfg.starts = 1;
                cfg.seed = 1000 + s;
                let r = solve_usqp(&obj, &cfg).unwrap();
                assert!(
                    matches!(
                        r.certification,
                        Certification::GlobalByTheorem31 | Certification::GlobalByTheorem41
                    ),
                    "run {run} start {s}: {:?}",
                    r.certification
                );
                values.push(r.value);
            }
            let max = values.iter().cloned().fold(f64::MIN, f64::max);
            let min = values.iter().cloned().fold(f64::MAX, f64::min);
            assert!(
                max - min <= VALUE_RTOL * max.abs(),
                "run {run}: multistart spread [{min}, {max}]"
            );

            // Peaks sit on grid nodes (odd resolution, centered boxes).
            let grid = grid_oracle(&obj, &[], 199, 10.0).unwrap();
            assert!(
                (max - grid.value).abs() <= VALUE_RTOL * max.abs(),
                "run {run}: solver {max} vs grid {}",
                grid.value
            );
        }
    });
}

#[test]
fn criterion_5_superdifferential_exactness() {
    criterion(5, "Dini derivatives and membership", || {
        // Membership sweep for the 1-D kink at the origin.
        let f = parse("-abs(x1)").unwrap();
        let dom = BoxDomain::interval(-2.0, 2.0);
        let cfg = DiniConfig::default();
        for k in 0..41 {
            let c = -2.0 + 0.1 * k as f64;
            let cand = SuperdiffCandidate {
                point: vec![0.0],
                covector: vec![c],
            };
            let v = superdiff_membership(&f, &dom, &cand, true, &cfg).unwrap();
            let expected_member = c.abs() <= 1.0 + MEMBERSHIP_TOL;
            assert_eq!(
                v.is_corroborated(),
                expected_member,
                "covector {c}: verdict {v:?}"
            );
        }

        // Smooth directional derivatives across 50 random probes.
        type ValueFn = Box<dyn Fn(&[f64]) -> Result<f64, EvalError> + Sync>;
        type GradFn = Box<dyn Fn(&[f64]) -> Vec<f64>>;
        struct Probe {
            f: ValueFn,
            grad: GradFn,
        }
        let probes = [
            Probe {
                f: Box::new(|x: &[f64]| Ok(x[0] * x[0] * x[1])),
                grad: Box::new(|x| vec![2.0 * x[0] * x[1], x[0] * x[0]]),
            },
            Probe {
                f: Box::new(|x: &[f64]| Ok((x[0] + 2.0 * x[1]).exp())),
                grad: Box::new(|x| {
                    let e = (x[0] + 2.0 * x[1]).exp();
                    vec![e, 2.0 * e]
                }),
            },
            Probe {
                f: Box::new(|x: &[f64]| Ok(x[0].powi(3) - 2.0 * x[0] + x[1])),
                grad: Box::new(|x| vec![3.0 * x[0] * x[0] - 2.0, 1.0]),
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for probe in 0..50 {
            let p = &probes[probe % probes.len()];
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut v: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if nv < 1e-3 {
                v = vec![1.0, 0.0];
            } else {
                v.iter_mut().for_each(|a| *a /= nv);
            }
            let analytic: f64 = (p.grad)(&x).iter().zip(&v).map(|(a, b)| a * b).sum();
            let up = dini_upper(&p.f, &x, &v, &cfg).unwrap().value;
            let lo = dini_lower(&p.f, &x, &v, &cfg).unwrap().value;
            for (name, got) in [("upper", up), ("lower", lo)] {
                assert!(
                    (got - analytic).abs() <= DINI_ATOL * (1.0 + analytic.abs()),
                    "probe {probe} ({name}): {got} vs {analytic} at x = {x:?}, v = {v:?}"
                );
            }
        }
    });
}

#[test]
fn criterion_6_nonsmooth_certificate() {
    criterion(6, "kinked instance m-KKT certificate", || {
        let obj = make_product(vec![
            Factor::new(
                parse("min(x1, 2 - x1)").unwrap(),
                BoxDomain::interval(0.0, 2.0),
            ),
            Factor::new(parse("x1").unwrap(), BoxDomain::interval(0.0, 1.0)),
        ])
        .unwrap();
        let prob = ConstrainedProblem::new(obj, vec![Constraint::new(parse("0.5 - x2").unwrap())]);
        let xbar = [1.0, 0.5];
        let cfg = KktConfig::default();

        let valid = check_mkkt(&prob, &xbar, &[1.0], &cfg).unwrap();
        assert!(valid.is_valid(), "{valid:?}");

        for bad in [0.5, 1.5] {
            let r = check_mkkt(&prob, &xbar, &[bad], &cfg).unwrap();
            assert!(
                matches!(r.verdict, sqcp::kkt::CertVerdict::Invalid(_)),
                "lambda = {bad}: {:?}",
                r.verdict
            );
        }

        let grid = grid_oracle(&prob.objective, &prob.constraints, 200, 10.0).unwrap();
        let value = prob.objective.value(&xbar).unwrap();
        // One-cell agreement: the objective is 1.5-Lipschitz on the box.
        let cell = 2.0 / 201.0;
        assert!(
            (value - grid.value).abs() <= 1.5 * cell,
            "certified value {value} vs grid {}",
            grid.value
        );
    });
}

#[test]
fn criterion_7_hierarchy_suite() {
    criterion(7, "generalized concavity hierarchy", || {
        let sampling = SamplingConfig::default();
        let mut violations = 0usize;

        // Chain: concave => log-concave => quasiconcave on positive f.
        for (expr, dom) in [
            ("x1^0.5", BoxDomain::interval(0.1, 10.0)),
            ("5 - (x1 - 1)^2", BoxDomain::interval(0.0, 2.0)),
            ("x1 + 2", BoxDomain::interval(0.0, 5.0)),
        ] {
            let f = parse(expr).unwrap();
            if check_property(&f, &dom, ConcavityProperty::Concave, &sampling)
                .unwrap()
                .is_corroborated()
            {
                for prop in [
                    ConcavityProperty::LogConcave,
                    ConcavityProperty::Quasiconcave,
                ] {
                    if !check_property(&f, &dom, prop, &sampling)
                        .unwrap()
                        .is_corroborated()
                    {
                        violations += 1;
                    }
                }
            }
        }

        // Pseudoconcave => semi-strictly quasiconcave; r-concave =>
        // pseudoconcave.
        for (expr, dom, r) in [
            ("x1^0.5", BoxDomain::interval(0.1, 10.0), 0.0),
            ("exp(-(x1^2))", BoxDomain::interval(-3.0, 3.0), -1.0),
            ("ln(x1)", BoxDomain::interval(0.5, 5.0), 1.0),
        ] {
            let f = parse(expr).unwrap();
            let pseudo = check_property(&f, &dom, ConcavityProperty::PseudoconcaveDiff, &sampling)
                .unwrap()
                .is_corroborated();
            if pseudo
                && !check_property(
                    &f,
                    &dom,
                    ConcavityProperty::SemiStrictQuasiconcave,
                    &sampling,
                )
                .unwrap()
                .is_corroborated()
            {
                violations += 1;
            }
            if check_property(&f, &dom, ConcavityProperty::RConcave(r), &sampling)
                .unwrap()
                .is_corroborated()
                && !pseudo
            {
                violations += 1;
            }
        }

        // Factor necessity: a non-quasiconcave factor must be flagged.
        let valley = make_product(vec![
            Factor::new(
                parse("abs(x1 - 1) + 0.1").unwrap(),
                BoxDomain::interval(0.0, 2.0),
            ),
            Factor::new(parse("x1^0.5").unwrap(), BoxDomain::positive_orthant(1)),
        ])
        .unwrap();
        if sqcp::separable::factor_necessity_check(&valley, &sampling)
            .unwrap()
            .is_corroborated()
        {
            violations += 1;
        }

        // Index relations: sign vs log-concavity, threshold vs concavity,
        // power scaling.
        let icfg = IndexConfig::default();
        let band = 3.0 * icfg.bisect_tol;
        for (expr, dom) in [
            ("x1^2", BoxDomain::positive_orthant(1)),
            ("x1^0.5", BoxDomain::positive_orthant(1)),
            ("x1^-1", BoxDomain::positive_orthant(1)),
            ("exp(x1)", BoxDomain::interval(0.0, 2.0)),
        ] {
            let f = parse(expr).unwrap();
            let idx = sqcp::cvindex::index_1d(&f, &dom, &icfg).unwrap().index;
            let log_concave = check_property(&f, &dom, ConcavityProperty::LogConcave, &sampling)
                .unwrap()
                .is_corroborated();
            if log_concave != idx.ge(0.0, band) {
                violations += 1;
            }
            let concave = check_property(&f, &dom, ConcavityProperty::Concave, &sampling)
                .unwrap()
                .is_corroborated();
            if concave != idx.ge(1.0, band) {
                violations += 1;
            }
        }
        for alpha in [0.5f64, 2.0, 3.0] {
            let base = sqcp::cvindex::index_1d(
                &parse("x1^2").unwrap(),
                &BoxDomain::positive_orthant(1),
                &icfg,
            )
            .unwrap()
            .index
            .as_finite()
            .unwrap();
            let scaled = sqcp::cvindex::index_1d(
                &parse(&format!("x1^{}", 2.0 * alpha)).unwrap(),
                &BoxDomain::positive_orthant(1),
                &icfg,
            )
            .unwrap()
            .index
            .as_finite()
            .unwrap();
            if (scaled - base / alpha).abs() > 5e-3 {
                violations += 1;
            }
        }

        // Supergradient inequalities on a certified quasiconcave product.
        let p = make_product(vec![
            Factor::new(parse("x1^0.5").unwrap(), BoxDomain::positive_orthant(1)),
            Factor::new(parse("x1^0.5").unwrap(), BoxDomain::positive_orthant(1)),
        ])
        .unwrap();
        let dini = DiniConfig::default();
        let dom = p.joint_domain();
        let xs = dom.sample(40, 21, 5.0);
        let ys = dom.sample(40, 22, 5.0);
        for (x, y) in xs.iter().zip(&ys) {
            let cands = sqcp::superdiff::covector_candidates(&p, x, &dini).unwrap();
            let fy = p.value(y).unwrap();
            let fx = p.value(x).unwrap();
            let scale = 1.0 + fy.abs().max(fx.abs());
            let d: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
            for c in &cands {
                let inner: f64 = c.iter().zip(&d).map(|(a, b)| a * b).sum();
                // Separation implies the segment stays above f(y)
                // (quasiconcavity characterization) ...
                if inner < -1e-6 * scale {
                    for s in [0.25, 0.5, 0.75] {
                        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + s * (b - a)).collect();
                        if p.value(&z).unwrap() < fy - 1e-6 * scale {
                            violations += 1;
                        }
                    }
                }
                // ... and strictly-better points are never separated.
                if fy > fx + 1e-6 * scale && inner < -1e-6 * scale {
                    violations += 1;
                }
            }
        }

        assert_eq!(violations, 0, "hierarchy violations detected");
    });
}
