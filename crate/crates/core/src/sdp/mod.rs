//! Semidefinite programming over [`LmiProblem`]s.
//!
//! The built-in solver is a dense primal-dual interior-point method.
//! Other conic solvers can be plugged in through [`ConicSolver`]; the SDPA
//! dump in [`write_sdpa`] exists for cross-checking against them.

mod ipm;
pub mod problems;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{LmiProblem, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    pub gap_tolerance: f64,
    pub feasibility_tolerance: f64,
    /// Largest constraint violation an `optimal` answer may carry.
    pub accept_tolerance: f64,
    pub max_iterations: usize,
    /// Problems with more scalar variables are refused.
    pub max_variables: usize,
    pub stall_window: usize,
    pub infeasibility_threshold: f64,
    /// Print one line per iteration to stderr.
    #[serde(default)]
    pub trace: bool,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            gap_tolerance: 1e-9,
            feasibility_tolerance: 1e-9,
            accept_tolerance: 1e-8,
            max_iterations: 200,
            max_variables: 20_000,
            stall_window: 20,
            infeasibility_threshold: 1e-6,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SdpDiagnostics {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Scaled residual of the LMI system at the last iterate.
    pub infeasibility_measure: f64,
    /// Ratio certifying emptiness when small; infinite when not applicable.
    pub ray_measure: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub assignment: Vec<f64>,
    pub objective_value: f64,
    pub status: SdpStatus,
    /// Most positive eigenvalue over the `≺ 0` constraints.
    pub max_constraint_eigenvalue: f64,
    /// Least eigenvalue over the `≻ 0` / `⪰ 0` constraints.
    pub min_positive_eigenvalue: f64,
    pub iterations: usize,
    pub diagnostics: SdpDiagnostics,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

/// Anything that can solve an [`LmiProblem`].
pub trait ConicSolver {
    fn name(&self) -> &str;
    fn solve(&self, problem: &LmiProblem) -> Result<SdpSolution>;
}

/// The built-in interior-point method.
#[derive(Debug, Clone, Default)]
pub struct InteriorPoint {
    pub options: SdpOptions,
}

impl ConicSolver for InteriorPoint {
    fn name(&self) -> &str {
        "interior-point"
    }

    fn solve(&self, problem: &LmiProblem) -> Result<SdpSolution> {
        solve(problem, &self.options)
    }
}

fn check_input(problem: &LmiProblem, options: &SdpOptions) -> Result<()> {
    if problem.constraints.is_empty() {
        return Err(Error::Solver("problem has no constraints".into()));
    }
    if problem.num_vars() > options.max_variables {
        return Err(Error::Solver(format!(
            "dimension overflow: {} scalar variables exceed the limit of {}",
            problem.num_vars(),
            options.max_variables
        )));
    }
    problem.check()?;
    for c in &problem.constraints {
        let k = c.expr.constant();
        if (k - k.transpose()).amax() > 1e-12 * k.amax().max(1.0) {
            return Err(Error::Solver(format!("non-symmetric coefficient in constraint {}", c.label)));
        }
    }
    Ok(())
}

/// Extreme eigenvalues over the constraint families, via faer's symmetric
/// eigensolver (kept distinct from the nalgebra pass in [`verify_solution`]).
fn extreme_eigenvalues(problem: &LmiProblem, x: &[f64]) -> Result<(f64, f64)> {
    let mut max_neg = f64::NEG_INFINITY;
    let mut min_pos = f64::INFINITY;
    for c in &problem.constraints {
        let v = c.expr.evaluate(x)?;
        let n = v.nrows();
        let f = faer::Mat::<f64>::from_fn(n, n, |i, j| v[(i, j)]);
        let eig = f
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::Solver(format!("eigenvalue computation failed: {e:?}")))?;
        match c.sense {
            Sense::NegativeDefinite => {
                max_neg = eig.iter().copied().fold(max_neg, f64::max);
            }
            Sense::PositiveDefinite => {
                min_pos = eig.iter().copied().fold(min_pos, f64::min);
            }
        }
    }
    Ok((max_neg, min_pos))
}

/// Solve with the built-in interior-point method.
pub fn solve(problem: &LmiProblem, options: &SdpOptions) -> Result<SdpSolution> {
    check_input(problem, options)?;
    let sf = ipm::StandardForm::from_problem(problem);
    let res = ipm::solve_standard(&sf, options);
    let x: Vec<f64> = res.y.iter().zip(&sf.var_scale).map(|(y, s)| y * s).collect();
    let (max_neg, min_pos) = extreme_eigenvalues(problem, &x)?;
    let mut status = res.status;
    let mut diagnostics = res.diagnostics;
    if status == SdpStatus::Optimal && (max_neg > options.accept_tolerance || min_pos < -options.accept_tolerance) {
        status = SdpStatus::NumericalFailure;
        diagnostics.message = format!(
            "{}; rejected: max eigenvalue {max_neg:.3e}, min positive-side eigenvalue {min_pos:.3e}",
            diagnostics.message
        );
    }
    Ok(SdpSolution {
        objective_value: problem.objective_value(&x),
        assignment: x,
        status,
        max_constraint_eigenvalue: max_neg,
        min_positive_eigenvalue: min_pos,
        iterations: res.iterations,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub label: String,
    pub sense: Sense,
    /// `λ_max` for `≺ 0` constraints, `λ_min` otherwise.
    pub extreme_eigenvalue: f64,
    /// Distance to the boundary of the closed cone, positive when inside.
    pub margin: f64,
    /// Margin the constraint demands (the strictness margin, or zero).
    pub required_margin: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub checks: Vec<ConstraintCheck>,
    pub all_satisfied: bool,
    pub max_constraint_eigenvalue: f64,
    pub tolerance: f64,
}

/// Recompute every constraint's extreme eigenvalue from the assignment.
/// A constraint passes when its margin reaches the demanded margin up to
/// `tolerance`.
pub fn verify_solution(problem: &LmiProblem, solution: &SdpSolution, tolerance: f64) -> VerificationRecord {
    verify_assignment(problem, &solution.assignment, tolerance)
}

/// [`verify_solution`] for a bare assignment vector.
pub fn verify_assignment(problem: &LmiProblem, x: &[f64], tolerance: f64) -> VerificationRecord {
    let mut checks = Vec::with_capacity(problem.constraints.len());
    let mut max_neg = f64::NEG_INFINITY;
    for c in &problem.constraints {
        let (ext, margin) = match c.expr.evaluate(x) {
            Ok(v) => {
                let eig = v.symmetric_eigenvalues();
                match c.sense {
                    Sense::NegativeDefinite => {
                        let e = eig.max();
                        max_neg = max_neg.max(e);
                        (e, -e)
                    }
                    Sense::PositiveDefinite => {
                        let e = eig.min();
                        (e, e)
                    }
                }
            }
            Err(_) => (f64::NAN, f64::NEG_INFINITY),
        };
        checks.push(ConstraintCheck {
            label: c.label.clone(),
            sense: c.sense,
            extreme_eigenvalue: ext,
            margin,
            required_margin: c.margin,
            satisfied: margin >= c.margin - tolerance,
        });
    }
    VerificationRecord {
        all_satisfied: checks.iter().all(|c| c.satisfied),
        checks,
        max_constraint_eigenvalue: max_neg,
        tolerance,
    }
}

/// SDPA sparse format: `min cᵀx` s.t. `Σ x_v F_v − F_0 ⪰ 0`, one block per
/// constraint (oriented so that feasibility means positive semidefinite).
pub fn write_sdpa(problem: &LmiProblem) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "\"{} variables, {} blocks", problem.num_vars(), problem.constraints.len());
    let _ = writeln!(s, "{}", problem.num_vars());
    let _ = writeln!(s, "{}", problem.constraints.len());
    let dims: Vec<String> = problem.constraints.iter().map(|c| c.expr.dim().to_string()).collect();
    let _ = writeln!(s, "{}", dims.join(" "));
    let mut cvec = vec![0.0; problem.num_vars()];
    for (id, v) in &problem.objective {
        cvec[id.0] += v;
    }
    let cs: Vec<String> = cvec.iter().map(|v| format!("{v}")).collect();
    let _ = writeln!(s, "{}", cs.join(" "));
    // Entries grouped by matrix number.
    let mut lines: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (k, c) in problem.constraints.iter().enumerate() {
        let slack = c.slack_expr();
        let f0 = -slack.constant();
        push_upper(&mut lines, 0, k + 1, &f0);
        for (id, coef) in slack.terms() {
            for &(r, col, v) in &coef.entries {
                lines.push((id.0 + 1, k + 1, r + 1, col + 1, v));
            }
        }
    }
    lines.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    for (mat, blk, i, j, v) in lines {
        if v != 0.0 {
            let _ = writeln!(s, "{mat} {blk} {i} {j} {v:e}");
        }
    }
    s
}

fn push_upper(lines: &mut Vec<(usize, usize, usize, usize, f64)>, mat: usize, blk: usize, m: &DMatrix<f64>) {
    for c in 0..m.ncols() {
        for r in 0..=c {
            if m[(r, c)] != 0.0 {
                lines.push((mat, blk, r + 1, c + 1, m[(r, c)]));
            }
        }
    }
}

#[cfg(test)]
mod tests;
