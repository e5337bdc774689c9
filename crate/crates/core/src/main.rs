//! Batch front-end: load a problem file, run a check/index/solve/verify
//! command, and emit one JSON report per invocation.
//!
//! Exit codes: 0 = corroborated / Yes / Valid, 1 = falsified / No /
//! Invalid / LocalOnly, 2 = unknown or error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use sqcp::cvindex::ExtendedReal;
use sqcp::gencv::{check_property, ConcavityProperty, SamplingConfig, Verdict, Witness};
use sqcp::kkt::{self, CertVerdict, ConstrainedProblem, KktConfig};
use sqcp::problem::{parse_problem, ConfigOverrides};
use sqcp::separable::{decide_quasiconcave, DecideConfig, Decision};
use sqcp::solve::{solve_csqp, solve_usqp, Certification, SolveConfig, SolveError};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "sqcp",
    version,
    about = "Quasiconcavity checks, concavity indices, certificate verification \
             and desk-scale solving for separable product objectives"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// RNG seed; overrides the file's [config] seed (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Numerical tolerance; overrides the file's [config] tol (default 1e-9
    /// for sampling checks, 1e-6 for certificates).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Sampling budget; overrides the file's [config] budget (default 2000
    /// sample pairs).
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Also write the JSON report to this path.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Falsification-test a concavity-type property of the objective.
    Check {
        file: PathBuf,
        /// One of: quasiconcave (separable criterion), concave,
        /// log-concave, semi-strict, pseudoconcave.
        #[arg(long, default_value = "quasiconcave")]
        property: String,
    },
    /// Estimate per-factor concavity indices and their aggregate.
    Index { file: PathBuf },
    /// Maximize the objective (constrained when [constraints] is present).
    Solve { file: PathBuf },
    /// Verify a user-supplied certificate (point, multipliers).
    Verify {
        file: PathBuf,
        /// Candidate maximizer, comma-separated.
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        point: Vec<f64>,
        /// Multipliers, comma-separated, one per constraint.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        lambda: Vec<f64>,
    },
}

struct Budgets {
    sampling: SamplingConfig,
    decide: DecideConfig,
    solve: SolveConfig,
    kkt: KktConfig,
}

fn budgets(cli: &Cli, file_cfg: &ConfigOverrides) -> Budgets {
    let seed = cli.seed.or(file_cfg.seed);
    let tol = cli.tol.or(file_cfg.tol);
    let budget = cli.budget.or(file_cfg.budget);

    let mut sampling = SamplingConfig::default();
    let mut decide = DecideConfig::default();
    let mut solve = SolveConfig::default();
    let mut kkt_cfg = KktConfig::default();
    if let Some(s) = seed {
        sampling.seed = s;
        decide.index.seed = s;
        decide.index.shape.seed = s;
        solve.seed = s;
        solve.decide.index.seed = s;
        solve.decide.index.shape.seed = s;
        solve.kkt.seed = s;
        solve.kkt.dini.seed = s;
        solve.dini.seed = s;
        kkt_cfg.seed = s;
        kkt_cfg.dini.seed = s;
    }
    if let Some(t) = tol {
        sampling.tol = t;
        kkt_cfg.tol = t;
        solve.kkt.tol = t;
    }
    if let Some(b) = budget {
        sampling.pairs = b;
        kkt_cfg.slater_budget = b;
        solve.kkt.slater_budget = b;
    }
    Budgets {
        sampling,
        decide,
        solve,
        kkt: kkt_cfg,
    }
}

fn extended_real_json(x: &ExtendedReal) -> Value {
    match x {
        ExtendedReal::Finite(v) => json!(v),
        ExtendedReal::PlusInfinity => json!("inf"),
        ExtendedReal::MinusInfinity => json!("-inf"),
    }
}

fn witness_json(w: &Witness) -> Value {
    json!({
        "x": w.x,
        "y": w.y,
        "lambda": w.lambda,
        "violation": w.violation,
        "description": w.description,
    })
}

fn verdict_json(v: &Verdict) -> (Value, u8) {
    match v {
        Verdict::Corroborated { samples_checked } => (
            json!({"status": "corroborated", "samples_checked": samples_checked}),
            0,
        ),
        Verdict::Falsified(w) => (
            json!({"status": "falsified", "witness": witness_json(w)}),
            1,
        ),
    }
}

fn cmd_check(
    prob: &ConstrainedProblem,
    property: &str,
    b: &Budgets,
) -> Result<(Value, u8), String> {
    let obj = &prob.objective;
    if property == "quasiconcave" {
        let d = decide_quasiconcave(obj, &b.decide).map_err(|e| e.to_string())?;
        let indices: Vec<Value> = d
            .factor_indices
            .iter()
            .map(|e| extended_real_json(&e.index))
            .collect();
        let (decision, code) = match &d.decision {
            Decision::Yes(case) => (json!({"answer": "yes", "case": format!("{case:?}")}), 0),
            Decision::No(why) => (json!({"answer": "no", "reason": why}), 1),
            Decision::Unknown(why) => (json!({"answer": "unknown", "reason": why}), 2),
        };
        let mut report = json!({
            "command": "check",
            "property": property,
            "decision": decision,
            "factor_indices": indices,
        });
        if code == 1 {
            // Back every No with a replayable sample-pair witness.
            let v = check_property(
                obj,
                obj.joint_domain(),
                ConcavityProperty::Quasiconcave,
                &b.sampling,
            )
            .map_err(|e| e.to_string())?;
            if let Verdict::Falsified(w) = &v {
                report["witness"] = witness_json(w);
            }
        }
        if let Decision::Yes(_) = d.decision {
            if let Some(agg) = &d.aggregate_index {
                report["aggregate_index"] = extended_real_json(agg);
            }
        }
        return Ok((report, code));
    }
    let prop = match property {
        "concave" => ConcavityProperty::Concave,
        "log-concave" | "logconcave" => ConcavityProperty::LogConcave,
        "semi-strict" | "semistrict" => ConcavityProperty::SemiStrictQuasiconcave,
        "pseudoconcave" => ConcavityProperty::PseudoconcaveDiff,
        other => return Err(format!("unknown property `{other}`")),
    };
    let v =
        check_property(obj, obj.joint_domain(), prop, &b.sampling).map_err(|e| e.to_string())?;
    let (verdict, code) = verdict_json(&v);
    Ok((
        json!({"command": "check", "property": property, "verdict": verdict}),
        code,
    ))
}

fn cmd_index(prob: &ConstrainedProblem, b: &Budgets) -> Result<(Value, u8), String> {
    let d = decide_quasiconcave(&prob.objective, &b.decide).map_err(|e| e.to_string())?;
    let mut recip_sum = ExtendedReal::Finite(0.0);
    let indices: Vec<Value> = d
        .factor_indices
        .iter()
        .map(|e| {
            recip_sum = recip_sum.add(&e.index.recip());
            json!({
                "index": extended_real_json(&e.index),
                "log_concave": e.index.ge(0.0, b.decide.log_concave_band),
                "tolerance": e.tolerance,
                "low_confidence": e.low_confidence,
            })
        })
        .collect();
    let aggregate = recip_sum.recip();
    Ok((
        json!({
            "command": "index",
            "factors": indices,
            "reciprocal_sum": extended_real_json(&recip_sum),
            "aggregate_index": extended_real_json(&aggregate),
        }),
        0,
    ))
}

fn certification_name(c: Certification) -> &'static str {
    match c {
        Certification::GlobalByTheorem31 => "global-unconstrained-smooth",
        Certification::GlobalByTheorem41 => "global-unconstrained-nonsmooth",
        Certification::GlobalByTheorem32 => "global-constrained-smooth",
        Certification::GlobalByTheorem42 => "global-constrained-nonsmooth",
        Certification::LocalOnly => "local-only",
    }
}

fn cmd_solve(prob: &ConstrainedProblem, b: &Budgets) -> Result<(Value, u8), String> {
    let result = if prob.constraints.is_empty() {
        solve_usqp(&prob.objective, &b.solve)
    } else {
        solve_csqp(prob, &b.solve)
    };
    let r = match result {
        Ok(r) => r,
        Err(SolveError::BoundarySupremum { at }) => {
            return Ok((
                json!({
                    "command": "solve",
                    "status": "boundary-supremum",
                    "near": at,
                }),
                2,
            ))
        }
        Err(e) => return Err(e.to_string()),
    };
    let code = if r.certification == Certification::LocalOnly {
        1
    } else {
        0
    };
    let mut report = json!({
        "command": "solve",
        "maximizer": r.maximizer,
        "value": r.value,
        "certification": certification_name(r.certification),
        "starts_used": r.starts_used,
    });
    if let Some((lam, cert)) = &r.certificate {
        report["lambda"] = json!(lam);
        report["certificate_verdict"] = json!(format!("{:?}", cert.verdict));
        report["stationarity_residual"] = json!(cert.stationarity_residual);
        report["active_set"] = json!(cert.active_set);
    }
    Ok((report, code))
}

fn cmd_verify(
    prob: &ConstrainedProblem,
    point: &[f64],
    lambda: &[f64],
    b: &Budgets,
) -> Result<(Value, u8), String> {
    let smooth =
        !prob.objective.has_kinks() && prob.constraints.iter().all(|c| !c.expr.has_kinks());
    let report = if smooth {
        kkt::check_kkt_diff(prob, point, lambda, &b.kkt)
    } else {
        kkt::check_mkkt(prob, point, lambda, &b.kkt)
    }
    .map_err(|e| e.to_string())?;
    let code = match report.verdict {
        CertVerdict::Valid => 0,
        CertVerdict::Invalid(_) => 1,
        CertVerdict::HypothesisUnmet(_) => 2,
    };
    Ok((
        json!({
            "command": "verify",
            "mode": if smooth { "kkt" } else { "m-kkt" },
            "verdict": format!("{:?}", report.verdict),
            "stationarity_residual": report.stationarity_residual,
            "complementarity_residuals": report.complementarity_residuals,
            "sign_violations": report.sign_violations,
            "active_set": report.active_set,
            "slater_point": report.slater_point,
            "warnings": report.warnings,
        }),
        code,
    ))
}

fn run(cli: &Cli) -> Result<(Value, u8), String> {
    let path = match &cli.cmd {
        Cmd::Check { file, .. }
        | Cmd::Index { file }
        | Cmd::Solve { file }
        | Cmd::Verify { file, .. } => file,
    };
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let pf = parse_problem(&text).map_err(|e| e.to_string())?;
    let prob = pf.build().map_err(|e| e.to_string())?;
    let b = budgets(cli, &pf.config);
    match &cli.cmd {
        Cmd::Check { property, .. } => cmd_check(&prob, property, &b),
        Cmd::Index { .. } => cmd_index(&prob, &b),
        Cmd::Solve { .. } => cmd_solve(&prob, &b),
        Cmd::Verify { point, lambda, .. } => cmd_verify(&prob, point, lambda, &b),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mut report, code) = match run(&cli) {
        Ok(out) => out,
        Err(message) => (json!({"status": "error", "message": message}), 2),
    };
    report["schema_version"] = json!(SCHEMA_VERSION);
    let text = serde_json::to_string_pretty(&report).expect("report serialization");
    println!("{text}");
    if let Some(path) = &cli.report {
        if let Err(e) = fs::write(path, format!("{text}\n")) {
            eprintln!("cannot write report to {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    ExitCode::from(code)
}
