//! Textual problem files: a small sectioned format describing a product
//! objective with per-block boxes, constraints, and config overrides.
//!
//! ```text
//! [objective]
//! factor = "x1^0.5" over "(0, inf)"
//! factor = "exp(x1 + x2)" over "(0, 1)x(0, 1)"
//! [constraints]
//! h = "2 - x1 - x2 - x3"
//! [config]
//! seed = 7
//! tol = 1e-6
//! budget = 2000
//! ```

use thiserror::Error;

use crate::domain::{BoxDomain, DomainError};
use crate::expr::{parse, ParseError};
use crate::kkt::{ConstrainedProblem, Constraint};
use crate::separable::{make_product, Factor, SeparableError};

#[derive(Debug, Clone, Error)]
pub enum ProblemError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Expr {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Separable(#[from] SeparableError),
}

/// Verbatim factor entry: expression source plus per-coordinate intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpec {
    pub expr: String,
    pub intervals: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub factors: Vec<FactorSpec>,
    pub constraints: Vec<String>,
    pub config: ConfigOverrides,
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn parse_bound(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}

/// Parses `(a, b)` or `(a, b)x(c, d)x...` into interval pairs.
fn parse_box(s: &str, line: usize) -> Result<Vec<(f64, f64)>, ProblemError> {
    let bad = |message: &str| ProblemError::Syntax {
        line,
        message: message.into(),
    };
    let mut intervals = Vec::new();
    for part in s.split('x') {
        let part = part.trim();
        let inner = part
            .strip_prefix('(')
            .and_then(|p| p.strip_suffix(')'))
            .ok_or_else(|| bad("expected interval of the form (a, b)"))?;
        let (a, b) = inner
            .split_once(',')
            .ok_or_else(|| bad("expected two comma-separated bounds"))?;
        let lo = parse_bound(a).ok_or_else(|| bad("unreadable lower bound"))?;
        let hi = parse_bound(b).ok_or_else(|| bad("unreadable upper bound"))?;
        // NaN-aware: rejects NaN bounds along with inverted ones.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(lo < hi) {
            return Err(bad("interval bounds must satisfy lower < upper"));
        }
        intervals.push((lo, hi));
    }
    if intervals.is_empty() {
        return Err(bad("empty box"));
    }
    Ok(intervals)
}

fn unquote(s: &str, line: usize) -> Result<&str, ProblemError> {
    s.trim()
        .strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .ok_or_else(|| ProblemError::Syntax {
            line,
            message: "expected a double-quoted string".into(),
        })
}

pub fn parse_problem(text: &str) -> Result<ProblemFile, ProblemError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Objective,
        Constraints,
        Config,
    }
    let mut section = Section::None;
    let mut out = ProblemFile {
        factors: Vec::new(),
        constraints: Vec::new(),
        config: ConfigOverrides::default(),
    };
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "[objective]" => {
                section = Section::Objective;
                continue;
            }
            "[constraints]" => {
                section = Section::Constraints;
                continue;
            }
            "[config]" => {
                section = Section::Config;
                continue;
            }
            _ => {}
        }
        let bad = |message: String| ProblemError::Syntax {
            line: lineno,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad("expected key = value".into()))?;
        let key = key.trim();
        let value = value.trim();
        match section {
            Section::Objective => {
                if key != "factor" {
                    return Err(bad(format!("unexpected key `{key}` in [objective]")));
                }
                let (expr_part, box_part) = value
                    .split_once(" over ")
                    .ok_or_else(|| bad("expected `factor = \"<expr>\" over \"<box>\"`".into()))?;
                let expr = unquote(expr_part, lineno)?.to_string();
                let intervals = parse_box(unquote(box_part, lineno)?, lineno)?;
                out.factors.push(FactorSpec { expr, intervals });
            }
            Section::Constraints => {
                if key != "h" {
                    return Err(bad(format!("unexpected key `{key}` in [constraints]")));
                }
                out.constraints.push(unquote(value, lineno)?.to_string());
            }
            Section::Config => match key {
                "seed" => {
                    out.config.seed =
                        Some(value.parse().map_err(|_| bad("unreadable seed".into()))?)
                }
                "tol" => {
                    out.config.tol = Some(value.parse().map_err(|_| bad("unreadable tol".into()))?)
                }
                "budget" => {
                    out.config.budget =
                        Some(value.parse().map_err(|_| bad("unreadable budget".into()))?)
                }
                other => return Err(bad(format!("unknown config key `{other}`"))),
            },
            Section::None => {
                return Err(bad("content before the first section header".into()));
            }
        }
    }
    if out.factors.is_empty() {
        return Err(ProblemError::Syntax {
            line: 0,
            message: "no [objective] factors".into(),
        });
    }
    Ok(out)
}

pub fn render_problem(p: &ProblemFile) -> String {
    let mut s = String::from("[objective]\n");
    for f in &p.factors {
        let bx: Vec<String> = f
            .intervals
            .iter()
            .map(|(a, b)| format!("({}, {})", fmt_bound(*a), fmt_bound(*b)))
            .collect();
        s.push_str(&format!(
            "factor = \"{}\" over \"{}\"\n",
            f.expr,
            bx.join("x")
        ));
    }
    if !p.constraints.is_empty() {
        s.push_str("[constraints]\n");
        for h in &p.constraints {
            s.push_str(&format!("h = \"{h}\"\n"));
        }
    }
    let c = &p.config;
    if c.seed.is_some() || c.tol.is_some() || c.budget.is_some() {
        s.push_str("[config]\n");
        if let Some(v) = c.seed {
            s.push_str(&format!("seed = {v}\n"));
        }
        if let Some(v) = c.tol {
            s.push_str(&format!("tol = {v}\n"));
        }
        if let Some(v) = c.budget {
            s.push_str(&format!("budget = {v}\n"));
        }
    }
    s
}

impl ProblemFile {
    /// Compiles the file into a runnable constrained problem.
    pub fn build(&self) -> Result<ConstrainedProblem, ProblemError> {
        let mut factors = Vec::with_capacity(self.factors.len());
        for (i, spec) in self.factors.iter().enumerate() {
            let expr = parse(&spec.expr).map_err(|source| ProblemError::Expr {
                line: i + 1,
                source,
            })?;
            let (lo, hi): (Vec<f64>, Vec<f64>) = spec.intervals.iter().copied().unzip();
            factors.push(Factor::new(expr, BoxDomain::open(lo, hi)?));
        }
        let objective = make_product(factors)?;
        let mut constraints = Vec::with_capacity(self.constraints.len());
        for (i, src) in self.constraints.iter().enumerate() {
            let expr = parse(src).map_err(|source| ProblemError::Expr {
                line: i + 1,
                source,
            })?;
            constraints.push(Constraint::new(expr));
        }
        Ok(ConstrainedProblem::new(objective, constraints))
    }
}
