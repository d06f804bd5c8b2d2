use super::*;
use crate::lmi::{AffineMatrixExpr, LmiProblem, VariableRegistry};

#[test]
fn eigenvalue_shift_oracle() {
    let p = problems::eigenvalue_shift();
    let s = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal, "{:?}", s.diagnostics);
    assert!((s.objective_value - 3.0).abs() < 1e-7, "{}", s.objective_value);
    let rec = verify_solution(&p, &s, 1e-8);
    assert!(rec.all_satisfied);
    assert!(rec.checks[0].margin.abs() < 1e-8);
    assert!((rec.max_constraint_eigenvalue - s.max_constraint_eigenvalue).abs() < 1e-10);
}

#[test]
fn two_sided_semidefinite_forces_zero() {
    let mut reg = VariableRegistry::new();
    let x = reg.add_symmetric("X", 2);
    let e = AffineMatrixExpr::from_linmat(&x.lin()).unwrap();
    let mut p = LmiProblem::new(reg, 0.0);
    p.positive_semidefinite("X", e.clone());
    p.positive_semidefinite("-X", e.scale(-1.0));
    p.objective.push((x.id(0, 0), 1.0));
    p.objective.push((x.id(1, 1), 1.0));
    let s = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal, "{:?}", s.diagnostics);
    assert!(s.assignment.iter().all(|v| v.abs() < 1e-7), "{:?}", s.assignment);
}

#[test]
fn strictly_conflicting_constraints_are_infeasible() {
    let mut reg = VariableRegistry::new();
    let x = reg.add_symmetric("X", 3);
    let e = AffineMatrixExpr::from_linmat(&x.lin()).unwrap();
    let mut p = LmiProblem::new(reg, 1e-3);
    p.positive("X > 0", e.clone());
    p.negative("X < 0", e);
    let s = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(s.status, SdpStatus::Infeasible, "{:?}", s.diagnostics);
    assert!(!s.diagnostics.message.is_empty());
}

#[test]
fn optimum_is_monotone_in_constraints() {
    let opts = SdpOptions::default();
    for seed in 0..50 {
        let small = problems::random_nested(seed, 2);
        let big = problems::random_nested(seed, 3);
        let a = solve(&small, &opts).unwrap();
        let b = solve(&big, &opts).unwrap();
        assert_eq!(a.status, SdpStatus::Optimal, "seed {seed}: {:?}", a.diagnostics);
        assert_eq!(b.status, SdpStatus::Optimal, "seed {seed}: {:?}", b.diagnostics);
        assert!(b.objective_value >= a.objective_value - 1e-7, "seed {seed}");
    }
}

#[test]
fn scaling_preserves_feasibility_and_argmin() {
    let p = problems::random_nested(7, 3);
    let mut scaled = p.clone();
    for c in &mut scaled.constraints {
        c.expr = c.expr.scale(3.7);
    }
    let a = solve(&p, &SdpOptions::default()).unwrap();
    let b = solve(&scaled, &SdpOptions::default()).unwrap();
    assert_eq!(b.status, SdpStatus::Optimal);
    assert!((a.objective_value - b.objective_value).abs() < 1e-6);
    let check = verify_solution(&scaled, &a, 1e-7);
    assert!(check.all_satisfied, "{:?}", check.checks);
}

#[test]
fn repeated_solves_are_bit_identical() {
    let p = problems::random_nested(3, 3);
    let a = solve(&p, &SdpOptions::default()).unwrap();
    let b = solve(&p, &SdpOptions::default()).unwrap();
    assert_eq!(a.status, b.status);
    assert_eq!(a.objective_value.to_bits(), b.objective_value.to_bits());
    assert_eq!(a.assignment, b.assignment);
}

#[test]
fn zero_assignment_violates_m_tilde() {
    use crate::lmi::{build_theorem1_system, LmiOptions};
    let m = crate::model::fixtures::example1();
    let (vars, p) = build_theorem1_system(&m, &LmiOptions::default()).unwrap();
    let zero = SdpSolution {
        assignment: vec![0.0; vars.registry.len()],
        objective_value: 0.0,
        status: SdpStatus::Optimal,
        max_constraint_eigenvalue: 0.0,
        min_positive_eigenvalue: 0.0,
        iterations: 0,
        diagnostics: SdpDiagnostics::default(),
    };
    let rec = verify_solution(&p, &zero, 1e-8);
    let mt = rec.checks.iter().find(|c| c.label == "M_tilde").unwrap();
    assert!(!mt.satisfied);
    assert!(!rec.all_satisfied);
}

#[test]
fn refuses_empty_and_oversized_problems() {
    let empty = LmiProblem::new(VariableRegistry::new(), 0.0);
    assert!(solve(&empty, &SdpOptions::default()).is_err());
    let p = problems::eigenvalue_shift();
    let tight = SdpOptions { max_variables: 0, ..SdpOptions::default() };
    assert!(matches!(solve(&p, &tight), Err(Error::Solver(m)) if m.contains("overflow")));
}

#[test]
fn sdpa_dump_layout() {
    let s = write_sdpa(&problems::eigenvalue_shift());
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(&lines[1..5], &["1", "1", "2", "1"]);
    // slack = A + t·I = −F0 + t·F1, so F0 = diag(−1, 3) and F1 = I.
    assert!(lines.contains(&"0 1 1 1 -1e0"));
    assert!(lines.contains(&"0 1 2 2 3e0"));
    assert!(lines.contains(&"1 1 1 1 1e0"));
}
