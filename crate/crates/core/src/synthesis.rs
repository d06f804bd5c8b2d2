//! Assemble, solve, extract, and package a filter design.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{
    build_theorem1_system, build_theorem2_system, DelayTerm, FilterVariables, LmiOptions, RuleLmiSet, Theorem,
};
use crate::matrix_rows;
use crate::model::{membership_product_bounds, BoundsConfig, MembershipBounds, TSModel};
use crate::sdp::{self, SdpOptions, SdpSolution, SdpStatus, VerificationRecord};

/// Largest acceptable condition number of `M22t`.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative residual allowed in `M22t·A_f = 𝒜`.
pub const EXTRACTION_TOL: f64 = 1e-9;
pub const BLEND_POINTS: usize = 2001;

/// One filter rule `(A_f, B_f, C_f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRule {
    #[serde(with = "matrix_rows")]
    pub a_f: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub b_f: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub c_f: DMatrix<f64>,
}

/// What the solver said, minus the assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub solver: String,
    pub status: SdpStatus,
    pub objective: f64,
    pub iterations: usize,
    pub max_constraint_eigenvalue: f64,
    pub min_positive_eigenvalue: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub message: String,
}

impl CertificateSummary {
    fn from_solution(s: &SdpSolution) -> Self {
        Self {
            solver: "interior-point".into(),
            status: s.status,
            objective: s.objective_value,
            iterations: s.iterations,
            max_constraint_eigenvalue: s.max_constraint_eigenvalue,
            min_positive_eigenvalue: s.min_positive_eigenvalue,
            primal_infeasibility: s.diagnostics.primal_infeasibility,
            dual_infeasibility: s.diagnostics.dual_infeasibility,
            relative_gap: s.diagnostics.relative_gap,
            message: s.diagnostics.message.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRealization {
    pub rules: Vec<FilterRule>,
    pub gamma: f64,
    pub theorem_used: Theorem,
    pub m22t_condition: f64,
    pub certificate: CertificateSummary,
}

/// Largest eigenvalue of the blended rule LMI over a premise grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendCheck {
    pub points: usize,
    pub domain: [f64; 2],
    pub max_eigenvalue: f64,
    pub argmax: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub lmi: LmiOptions,
    pub sdp: SdpOptions,
    /// Slack allowed when re-checking the constraints.
    pub verify_tolerance: f64,
    pub blend_points: usize,
    /// Overrides the model's bounds configuration for Theorem 2.
    pub bounds: Option<BoundsConfig>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            lmi: LmiOptions::default(),
            sdp: SdpOptions::default(),
            verify_tolerance: 1e-8,
            blend_points: BLEND_POINTS,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub model: String,
    pub theorem: Theorem,
    pub h: f64,
    pub rho: f64,
    pub upsilon: f64,
    pub delay_term: DelayTerm,
    pub eps_strict: f64,
    pub status: SdpStatus,
    pub feasible: bool,
    /// `√g*` when feasible.
    pub gamma: Option<f64>,
    pub certificate: CertificateSummary,
    pub filter: Option<FilterRealization>,
    pub bounds: Option<MembershipBounds>,
    pub blend_check: Option<BlendCheck>,
    pub verification: Option<VerificationRecord>,
    /// Every decision variable by name; empty unless feasible.
    #[serde(with = "matrix_rows::map", default)]
    pub assignment: BTreeMap<String, DMatrix<f64>>,
    pub notes: Vec<String>,
}

impl SynthesisReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn lmi_options(&self) -> LmiOptions {
        LmiOptions {
            delay_term: self.delay_term,
            eps_strict: self.eps_strict,
        }
    }

    /// Rebuild the variable layout and flat assignment for `model`.
    pub fn variables(&self, model: &TSModel) -> Result<(FilterVariables, Vec<f64>)> {
        if self.assignment.is_empty() {
            return Err(Error::MissingVariable("report carries no assignment".into()));
        }
        let vars = FilterVariables::new(model, self.theorem);
        let x = vars.registry.pack(&self.assignment)?;
        Ok((vars, x))
    }
}

/// `A_f = M22t⁻¹𝒜`, `B_f = M22t⁻¹ℬ`, `C_f = 𝒞`, with `M22t` factored, not inverted.
pub fn extract_rule(
    m22t: &DMatrix<f64>,
    a_scr: &DMatrix<f64>,
    b_scr: &DMatrix<f64>,
    c_scr: &DMatrix<f64>,
) -> Result<(FilterRule, f64)> {
    let eig = m22t.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) {
        return Err(Error::Extraction(format!("M22t is not positive definite (eigenvalues in [{lo:.3e}, {hi:.3e}])")));
    }
    let cond = hi / lo;
    if cond > MAX_CONDITION {
        return Err(Error::Extraction(format!(
            "M22t condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}"
        )));
    }
    let chol = m22t
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Extraction("Cholesky factorization of M22t failed".into()))?;
    let a_f = chol.solve(a_scr);
    let b_f = chol.solve(b_scr);
    for (label, rhs, sol) in [("A", a_scr, &a_f), ("B", b_scr, &b_f)] {
        let resid = (m22t * sol - rhs).norm();
        let scale = rhs.norm().max(m22t.norm() * sol.norm());
        if resid > EXTRACTION_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Extraction(format!(
                "{label}_f residual {resid:.3e} exceeds {EXTRACTION_TOL:.0e} relative to {scale:.3e}"
            )));
        }
    }
    Ok((
        FilterRule {
            a_f,
            b_f,
            c_f: c_scr.clone(),
        },
        cond,
    ))
}

/// Filter rules from a named assignment (`M22t`, `A_scr_j`, `B_scr_j`, `C_scr_j`).
pub fn extract_filter(named: &BTreeMap<String, DMatrix<f64>>, model: &TSModel) -> Result<(Vec<FilterRule>, f64)> {
    let get = |k: &str| named.get(k).ok_or_else(|| Error::MissingVariable(k.into()));
    let m22t = get("M22t")?;
    let mut rules = Vec::with_capacity(model.filter_rule_count);
    let mut cond = 0.0f64;
    for j in 1..=model.filter_rule_count {
        let (rule, c) = extract_rule(
            m22t,
            get(&format!("A_scr_{j}"))?,
            get(&format!("B_scr_{j}"))?,
            get(&format!("C_scr_{j}"))?,
        )?;
        cond = cond.max(c);
        rules.push(rule);
    }
    Ok((rules, cond))
}

/// Sample `max λ(Σ φ_i n_j Ω̃_ij(t))` over `points` premise values.
pub fn blend_check(
    model: &TSModel,
    vars: &FilterVariables,
    opts: &LmiOptions,
    x: &[f64],
    domain: [f64; 2],
    points: usize,
) -> Result<BlendCheck> {
    let set = RuleLmiSet::evaluate(model, vars, opts, x)?;
    let mut worst = f64::NEG_INFINITY;
    let mut argmax = domain[0];
    for t in crate::model::uniform_grid(domain, points.max(2)) {
        let e = set.blend_at(model, t)?.symmetric_eigenvalues().max();
        if e > worst {
            worst = e;
            argmax = t;
        }
    }
    Ok(BlendCheck {
        points: points.max(2),
        domain,
        max_eigenvalue: worst,
        argmax,
        passed: worst < 0.0,
    })
}

const LYAPUNOV_NOTE: &str = "the fuzzy Lyapunov weights N(t), O(t) vary with the premise; no term bounding their \
     time derivative enters the conditions, so the certificate is exact for frozen weights only";

/// Solve Theorem 1 or 2 for `model` and package the result.
pub fn synthesize(model: &TSModel, theorem: Theorem, options: &SynthesisOptions) -> Result<SynthesisReport> {
    let bounds_cfg = options.bounds.clone().unwrap_or_else(|| model.bounds.clone());
    let (vars, problem, bounds) = match theorem {
        Theorem::One => {
            let (v, p) = build_theorem1_system(model, &options.lmi)?;
            (v, p, None)
        }
        Theorem::Two => {
            let b = membership_product_bounds(model, &bounds_cfg)?;
            let (v, p) = build_theorem2_system(model, &b, &options.lmi)?;
            (v, p, Some(b))
        }
    };
    let solution = sdp::solve(&problem, &options.sdp)?;
    let certificate = CertificateSummary::from_solution(&solution);
    let mut report = SynthesisReport {
        model: model.name.clone(),
        theorem,
        h: model.delay.h,
        rho: model.delay.rho,
        upsilon: model.upsilon,
        delay_term: options.lmi.delay_term,
        eps_strict: options.lmi.eps_strict,
        status: solution.status,
        feasible: false,
        gamma: None,
        certificate: certificate.clone(),
        filter: None,
        bounds,
        blend_check: None,
        verification: None,
        assignment: BTreeMap::new(),
        notes: vec![LYAPUNOV_NOTE.to_string()],
    };
    if !solution.is_optimal() {
        report.notes.push(format!("no filter: solver reported {:?}", solution.status));
        return Ok(report);
    }

    let named = vars.registry.unpack(&solution.assignment)?;
    let g = named["g"][(0, 0)];
    let gamma = g.max(0.0).sqrt();
    let (rules, cond) = extract_filter(&named, model)?;
    report.verification = Some(sdp::verify_solution(&problem, &solution, options.verify_tolerance));
    report.blend_check = Some(blend_check(
        model,
        &vars,
        &options.lmi,
        &solution.assignment,
        bounds_cfg.domain,
        options.blend_points,
    )?);
    report.feasible = true;
    report.gamma = Some(gamma);
    report.filter = Some(FilterRealization {
        rules,
        gamma,
        theorem_used: theorem,
        m22t_condition: cond,
        certificate,
    });
    report.assignment = named;
    Ok(report)
}
