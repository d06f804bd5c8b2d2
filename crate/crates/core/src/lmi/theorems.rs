//! Rule-indexed filter-design LMIs and their time blend.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::affine::{AffineMatrixExpr, LinMat, LmiProblem, MatrixVar, VariableRegistry};
use crate::error::{Error, Result};
use crate::model::{MembershipBounds, TSModel};

/// Default strictness margin for `≺ 0` / `≻ 0`.
pub const EPS_STRICT: f64 = 1e-7;

/// Which delayed-state weight sits in the (2,2) block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayTerm {
    /// `−(1−ρ)Ñ_i`, as the derivative of the delay integral produces.
    #[default]
    Derived,
    /// `−Ñ_i`.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Theorem {
    pub fn number(self) -> u8 {
        match self {
            Theorem::One => 1,
            Theorem::Two => 2,
        }
    }

    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Theorem::One),
            2 => Ok(Theorem::Two),
            _ => Err(Error::Index(format!("theorem must be 1 or 2 (got {k})"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmiOptions {
    pub delay_term: DelayTerm,
    pub eps_strict: f64,
}

impl Default for LmiOptions {
    fn default() -> Self {
        Self {
            delay_term: DelayTerm::Derived,
            eps_strict: EPS_STRICT,
        }
    }
}

/// Block selectors `e_1..e_k` and the combinations `Π₁, Π₂, Π₃`.
#[derive(Debug, Clone, PartialEq)]
pub struct Selectors {
    pub e: Vec<DMatrix<f64>>,
    pub pi1: DMatrix<f64>,
    pub pi2: DMatrix<f64>,
    pub pi3: DMatrix<f64>,
}

pub fn build_selectors(block_count: usize, block_dim: usize) -> Result<Selectors> {
    if block_count < 4 {
        return Err(Error::Index(format!("block_count must be >= 4 (got {block_count})")));
    }
    let e: Vec<DMatrix<f64>> = (0..block_count)
        .map(|k| {
            let mut m = DMatrix::zeros(block_dim, block_count * block_dim);
            m.view_mut((0, k * block_dim), (block_dim, block_dim)).fill_with_identity();
            m
        })
        .collect();
    let pi1 = &e[0] - &e[1];
    let pi2 = &e[0] + &e[1] - &e[2] * 2.0;
    let pi3 = &e[0] - &e[1] - &e[2] * 6.0 + &e[3] * 6.0;
    Ok(Selectors { e, pi1, pi2, pi3 })
}

/// Coefficients of `Õ_i` in the 4×4 leading block grid of `Ξ̃_1i`, `Ξ̃_2i`,
/// `Ξ̃_3i` (to be scaled by `1/h`), upper triangles filled symmetrically.
pub const XI_PATTERNS: [[[f64; 4]; 4]; 3] = [
    [
        [-1.0, 1.0, 0.0, 0.0],
        [1.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ],
    [
        [-3.0, -3.0, 6.0, 0.0],
        [-3.0, -3.0, 6.0, 0.0],
        [6.0, 6.0, -12.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ],
    [
        [-5.0, 5.0, 30.0, -30.0],
        [5.0, -5.0, -30.0, 30.0],
        [30.0, -30.0, -180.0, 180.0],
        [-30.0, 30.0, 180.0, -180.0],
    ],
];

/// Decision variables of the filter-design problem.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterVariables {
    pub registry: VariableRegistry,
    pub theorem: Theorem,
    pub m11: MatrixVar,
    pub m22t: MatrixVar,
    pub n: Vec<MatrixVar>,
    pub o: Vec<MatrixVar>,
    pub a_scr: Vec<MatrixVar>,
    pub b_scr: Vec<MatrixVar>,
    pub c_scr: Vec<MatrixVar>,
    pub g: MatrixVar,
    /// Slack pairs indexed `i * c + j`; empty for Theorem 1.
    pub m_slack: Vec<MatrixVar>,
    pub q_slack: Vec<MatrixVar>,
}

/// Dimension of every rule LMI: `10n + p_w + q`.
pub fn lmi_dimension(model: &TSModel) -> usize {
    let d = model.dims;
    10 * d.n + d.p_w + d.q
}

impl FilterVariables {
    pub fn new(model: &TSModel, theorem: Theorem) -> Self {
        let d = model.dims;
        let (p, c) = (model.p_rules(), model.filter_rule_count);
        let mut reg = VariableRegistry::new();
        let m11 = reg.add_symmetric("M11", d.n);
        let m22t = reg.add_symmetric("M22t", d.n);
        let n = (1..=p).map(|i| reg.add_symmetric(format!("N_{i}"), 2 * d.n)).collect();
        let o = (1..=p).map(|i| reg.add_symmetric(format!("O_{i}"), 2 * d.n)).collect();
        let mut a_scr = Vec::new();
        let mut b_scr = Vec::new();
        let mut c_scr = Vec::new();
        for j in 1..=c {
            a_scr.push(reg.add_full(format!("A_scr_{j}"), d.n, d.n));
            b_scr.push(reg.add_full(format!("B_scr_{j}"), d.n, d.m_y));
            c_scr.push(reg.add_full(format!("C_scr_{j}"), d.q, d.n));
        }
        let g = reg.add_symmetric("g", 1);
        let (mut m_slack, mut q_slack) = (Vec::new(), Vec::new());
        if theorem == Theorem::Two {
            let nl = lmi_dimension(model);
            for i in 1..=p {
                for j in 1..=c {
                    m_slack.push(reg.add_symmetric(format!("M_slack_{i}{j}"), nl));
                }
            }
            for i in 1..=p {
                for j in 1..=c {
                    q_slack.push(reg.add_symmetric(format!("Q_slack_{i}{j}"), nl));
                }
            }
        }
        Self {
            registry: reg,
            theorem,
            m11,
            m22t,
            n,
            o,
            a_scr,
            b_scr,
            c_scr,
            g,
            m_slack,
            q_slack,
        }
    }

    /// `M̃ = [[M11, M22t], [M22t, M22t]]`.
    pub fn m_tilde(&self) -> LinMat {
        let m22 = self.m22t.lin();
        LinMat::from_blocks(
            &[self.m11.rows, self.m22t.rows],
            &[self.m11.rows, self.m22t.rows],
            &[
                vec![Some(self.m11.lin()), Some(m22.clone())],
                vec![Some(m22.clone()), Some(m22)],
            ],
        )
    }
}

fn check_indices(model: &TSModel, i: usize, j: usize) -> Result<()> {
    if i >= model.p_rules() {
        return Err(Error::Index(format!("plant rule {i} (have {})", model.p_rules())));
    }
    if j >= model.filter_rule_count {
        return Err(Error::Index(format!("filter rule {j} (have {})", model.filter_rule_count)));
    }
    Ok(())
}

/// `[[M11·X + ℬ_j·Y, right], [M22t·X + ℬ_j·Y, right]]`.
fn lambda(vars: &FilterVariables, j: usize, x: &DMatrix<f64>, y: &DMatrix<f64>, right: Option<LinMat>) -> LinMat {
    let by = vars.b_scr[j].lin().mul_right(y);
    let top = &vars.m11.lin().mul_right(x) + &by;
    let bottom = &vars.m22t.lin().mul_right(x) + &by;
    let n = x.nrows();
    match right {
        None => LinMat::from_blocks(&[n, n], &[x.ncols()], &[vec![Some(top)], vec![Some(bottom)]]),
        Some(r) => {
            let rc = r.shape().1;
            LinMat::from_blocks(
                &[n, n],
                &[x.ncols(), rc],
                &[vec![Some(top), Some(r.clone())], vec![Some(bottom), Some(r)]],
            )
        }
    }
}

/// Assembled square LinMat for rule pair `(i, j)` (0-based).
pub(crate) fn rule_linmat(model: &TSModel, i: usize, j: usize, vars: &FilterVariables, opts: &LmiOptions) -> Result<LinMat> {
    check_indices(model, i, j)?;
    let d = model.dims;
    let (n, n2, pw, q) = (d.n, 2 * d.n, d.p_w, d.q);
    let h = model.delay.h;
    let rho = model.delay.rho;
    let ups = model.upsilon;
    let rule = &model.plant_rules[i];

    let lam1 = lambda(vars, j, &rule.a, &rule.c, Some(vars.a_scr[j].lin()));
    let lam2 = lambda(vars, j, &rule.a_tau, &rule.c_tau, Some(LinMat::zeros(n, n)));
    let lam3 = lambda(vars, j, &rule.b, &rule.d, None);
    let nn = vars.n[i].lin();
    let oo = vars.o[i].lin();

    let theta_dim = 4 * n2 + pw;
    let dim = theta_dim + n2 + q;
    let mut out = LinMat::zeros(dim, dim);

    for pat in XI_PATTERNS {
        for a in 0..4 {
            for b in 0..4 {
                if pat[a][b] != 0.0 {
                    out.add_block(a * n2, b * n2, &oo.scale(pat[a][b] / h));
                }
            }
        }
    }

    let kappa = match opts.delay_term {
        DelayTerm::Derived => 1.0 - rho,
        DelayTerm::Printed => 1.0,
    };
    let mut g_block = LinMat::zeros(pw, pw);
    for k in 0..pw {
        g_block.add_block(k, k, &vars.g.lin().scale(-1.0));
    }
    out.add_block(0, 0, &(&lam1.sym() + &nn));
    out.add_block(0, n2, &lam2);
    out.add_block(n2, 0, &lam2.transpose());
    out.add_block(0, 4 * n2, &lam3);
    out.add_block(4 * n2, 0, &lam3.transpose());
    out.add_block(n2, n2, &nn.scale(-kappa));
    out.add_block(4 * n2, 4 * n2, &g_block);

    // √h·Γ̃₁ᵀ couples the (1), (2), (5) blocks to the relaxed Schur block.
    let s = h.sqrt();
    let schur = theta_dim;
    for (blk, lam) in [(0, &lam1), (n2, &lam2), (4 * n2, &lam3)] {
        let scaled = lam.scale(s);
        out.add_block(schur, blk, &scaled);
        out.add_block(blk, schur, &scaled.transpose());
    }
    let mt = vars.m_tilde();
    out.add_block(schur, schur, &(&mt.scale(-2.0 * ups) + &oo.scale(ups * ups)));

    // Γ̃₂ᵀ: estimation-error row.
    let last = theta_dim + n2;
    let g2_x = LinMat::from_blocks(
        &[q],
        &[n, n],
        &[vec![Some(LinMat::constant(rule.e.clone())), Some(vars.c_scr[j].lin().scale(-1.0))]],
    );
    let g2_tau = LinMat::from_blocks(&[q], &[n, n], &[vec![Some(LinMat::constant(rule.e_tau.clone())), None]]);
    out.add_block(last, 0, &g2_x);
    out.add_block(0, last, &g2_x.transpose());
    out.add_block(last, n2, &g2_tau);
    out.add_block(n2, last, &g2_tau.transpose());
    out.add_block(last, last, &LinMat::identity(q).scale(-1.0));
    Ok(out)
}

/// `Ω̃_ij` for plant rule `i` and filter rule `j` (0-based).
pub fn build_theorem1_lmi(model: &TSModel, i: usize, j: usize, vars: &FilterVariables, opts: &LmiOptions) -> Result<AffineMatrixExpr> {
    AffineMatrixExpr::from_linmat(&rule_linmat(model, i, j, vars, opts)?)
}

/// Positivity of `M̃`, `Ñ_i`, `Õ_i` (strict) and of the slack pairs (non-strict).
pub fn build_positivity_constraints(vars: &FilterVariables, problem: &mut LmiProblem) -> Result<()> {
    problem.positive("M_tilde", AffineMatrixExpr::from_linmat(&vars.m_tilde())?);
    for v in vars.n.iter().chain(&vars.o) {
        problem.positive(v.name.clone(), AffineMatrixExpr::from_linmat(&v.lin())?);
    }
    for v in vars.m_slack.iter().chain(&vars.q_slack) {
        problem.positive_semidefinite(v.name.clone(), AffineMatrixExpr::from_linmat(&v.lin())?);
    }
    Ok(())
}

/// All rule LMIs `Ω̃_ij ≺ 0`, positivity, and `min g`.
pub fn build_theorem1_system(model: &TSModel, opts: &LmiOptions) -> Result<(FilterVariables, LmiProblem)> {
    let vars = FilterVariables::new(model, Theorem::One);
    let mut problem = LmiProblem::new(vars.registry.clone(), opts.eps_strict);
    for i in 0..model.p_rules() {
        for j in 0..model.filter_rule_count {
            let e = build_theorem1_lmi(model, i, j, &vars, opts)?;
            problem.negative(format!("Omega_{}{}", i + 1, j + 1), e);
        }
    }
    build_positivity_constraints(&vars, &mut problem)?;
    problem.objective.push((vars.g.id(0, 0), 1.0));
    problem.check()?;
    Ok((vars, problem))
}

/// Membership-bound relaxation with slack pairs coupling every rule pair.
pub fn build_theorem2_system(model: &TSModel, bounds: &MembershipBounds, opts: &LmiOptions) -> Result<(FilterVariables, LmiProblem)> {
    let (p, c) = (model.p_rules(), model.filter_rule_count);
    if bounds.shape() != (p, c) || bounds.d_lower.shape() != (p, c) {
        return Err(Error::Dimension(format!(
            "bounds table is {}x{}, model has {p}x{c} rule pairs",
            bounds.d_upper.nrows(),
            bounds.d_upper.ncols()
        )));
    }
    let vars = FilterVariables::new(model, Theorem::Two);
    let mut problem = LmiProblem::new(vars.registry.clone(), opts.eps_strict);
    for i in 0..p {
        for j in 0..c {
            let mut e = build_theorem1_lmi(model, i, j, &vars, opts)?;
            for r in 0..p {
                for s in 0..c {
                    let own = if (r, s) == (i, j) { 1.0 } else { 0.0 };
                    e.add_symmetric_var(&vars.m_slack[r * c + s], bounds.d_upper[(r, s)] - own);
                    e.add_symmetric_var(&vars.q_slack[r * c + s], own - bounds.d_lower[(r, s)]);
                }
            }
            problem.negative(format!("Omega_{}{}", i + 1, j + 1), e);
        }
    }
    build_positivity_constraints(&vars, &mut problem)?;
    problem.objective.push((vars.g.id(0, 0), 1.0));
    problem.check()?;
    Ok((vars, problem))
}

/// Numeric rule matrices `Ω̃_ij` at a fixed assignment, for cheap blending.
#[derive(Debug, Clone)]
pub struct RuleLmiSet {
    /// Indexed `i * c + j`.
    pub omegas: Vec<DMatrix<f64>>,
    pub p: usize,
    pub c: usize,
}

impl RuleLmiSet {
    pub fn evaluate(model: &TSModel, vars: &FilterVariables, opts: &LmiOptions, x: &[f64]) -> Result<Self> {
        if x.len() != vars.registry.len() {
            return Err(Error::MissingVariable(format!(
                "assignment has {} scalars, expected {}",
                x.len(),
                vars.registry.len()
            )));
        }
        let (p, c) = (model.p_rules(), model.filter_rule_count);
        let mut omegas = Vec::with_capacity(p * c);
        for i in 0..p {
            for j in 0..c {
                omegas.push(build_theorem1_lmi(model, i, j, vars, opts)?.evaluate(x)?);
            }
        }
        Ok(Self { omegas, p, c })
    }

    /// `Σ_ij φ_i·n_j·Ω̃_ij` for the given weights.
    pub fn blend(&self, phi: &[f64], nf: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.omegas[0].nrows(), self.omegas[0].ncols());
        for i in 0..self.p {
            for j in 0..self.c {
                out += &self.omegas[i * self.c + j] * (phi[i] * nf[j]);
            }
        }
        out
    }

    pub fn blend_at(&self, model: &TSModel, t: f64) -> Result<DMatrix<f64>> {
        let (phi, nf) = crate::model::evaluate_memberships(model, t)?;
        Ok(self.blend(&phi, &nf))
    }
}

/// The time-blended rule LMI at premise value `t`.
pub fn blend_lmi(model: &TSModel, t: f64, vars: &FilterVariables, opts: &LmiOptions, x: &[f64]) -> Result<DMatrix<f64>> {
    RuleLmiSet::evaluate(model, vars, opts, x)?.blend_at(model, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fixtures, membership_product_bounds};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_x(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn selectors_place_identities() {
        let s = build_selectors(5, 4).unwrap();
        assert_eq!(s.e[1].shape(), (4, 20));
        assert_eq!(s.e[1].columns(4, 4), DMatrix::<f64>::identity(4, 4));
        assert_eq!(s.e[1].columns(0, 4).amax(), 0.0);
        let mut v = DMatrix::zeros(20, 1);
        for k in 0..16 {
            v[k] = (k % 4) as f64 + 1.0;
        }
        v.rows_mut(16, 4).fill(7.0);
        assert_eq!((&s.pi3 * &v).amax(), 0.0);
        assert_eq!((&s.pi2 * &v).amax(), 0.0);
        assert!(build_selectors(3, 2).is_err());
    }

    #[test]
    fn xi_patterns_are_congruences_of_pi() {
        // Ξ_k = −(2k−1)·Π_kᵀ Π_k on scalar blocks.
        let s = build_selectors(4, 1).unwrap();
        for (k, pi) in [&s.pi1, &s.pi2, &s.pi3].into_iter().enumerate() {
            let expect = pi.transpose() * pi * -((2 * k + 1) as f64);
            let got = DMatrix::from_fn(4, 4, |a, b| XI_PATTERNS[k][a][b]);
            assert_eq!(got, expect, "pattern {k}");
        }
    }

    #[test]
    fn example1_dimension_and_symmetry() {
        let m = fixtures::example1();
        assert_eq!(lmi_dimension(&m), 22);
        let vars = FilterVariables::new(&m, Theorem::One);
        let x = random_x(vars.registry.len(), 3);
        for i in 0..2 {
            for j in 0..2 {
                let e = build_theorem1_lmi(&m, i, j, &vars, &LmiOptions::default()).unwrap();
                assert_eq!(e.dim(), 22);
                let v = e.evaluate(&x).unwrap();
                assert_eq!(v, v.transpose());
            }
        }
        assert!(build_theorem1_lmi(&m, 2, 0, &vars, &LmiOptions::default()).is_err());
        assert!(build_theorem1_lmi(&m, 0, 2, &vars, &LmiOptions::default()).is_err());
    }

    #[test]
    fn rule_lmi_touches_only_its_own_variables() {
        let m = fixtures::example2();
        let vars = FilterVariables::new(&m, Theorem::One);
        let e = build_theorem1_lmi(&m, 1, 0, &vars, &LmiOptions::default()).unwrap();
        let allowed: Vec<&MatrixVar> = vec![
            &vars.m11, &vars.m22t, &vars.n[1], &vars.o[1], &vars.a_scr[0], &vars.b_scr[0], &vars.c_scr[0], &vars.g,
        ];
        for id in e.variables() {
            let owner = vars.registry.owner(id).unwrap();
            assert!(allowed.iter().any(|v| v.name == owner.name), "{} leaked", owner.name);
        }
        // Ξ blocks (rows/cols 2n..8n of Θ) depend on O_i only, apart from λ₂ and N_i.
        let n2 = 4;
        for (id, coef) in e.terms() {
            let owner = &vars.registry.owner(*id).unwrap().name;
            for &(r, c, _) in &coef.entries {
                if r >= 2 * n2 && c < 4 * n2 {
                    assert_eq!(owner, "O_2", "entry ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn leading_block_is_sym_of_m_tilde_times_closed_loop() {
        // With A_f = M22t⁻¹𝒜 and B_f = M22t⁻¹ℬ, the (1,1) block is
        // Sym{M̃·[[A, 0], [B_f C, A_f]]} + Ñ.
        let m = fixtures::example1();
        let vars = FilterVariables::new(&m, Theorem::One);
        let mut x = random_x(vars.registry.len(), 11);
        let spd = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        vars.m22t.store(&spd, &mut x);
        let (i, j) = (1, 0);
        let e = build_theorem1_lmi(&m, i, j, &vars, &LmiOptions::default()).unwrap().evaluate(&x).unwrap();
        let chol = spd.clone().cholesky().unwrap();
        let af = chol.solve(&vars.a_scr[j].value(&x));
        let bf = chol.solve(&vars.b_scr[j].value(&x));
        let r = &m.plant_rules[i];
        let mut abar = DMatrix::zeros(4, 4);
        abar.view_mut((0, 0), (2, 2)).copy_from(&r.a);
        abar.view_mut((2, 0), (2, 2)).copy_from(&(&bf * &r.c));
        abar.view_mut((2, 2), (2, 2)).copy_from(&af);
        let mt = {
            let mut t = DMatrix::zeros(4, 4);
            t.view_mut((0, 0), (2, 2)).copy_from(&vars.m11.value(&x));
            t.view_mut((0, 2), (2, 2)).copy_from(&spd);
            t.view_mut((2, 0), (2, 2)).copy_from(&spd);
            t.view_mut((2, 2), (2, 2)).copy_from(&spd);
            t
        };
        let ma = &mt * &abar;
        let xi11 = -(1.0 + 3.0 + 5.0) / m.delay.h;
        let expect = &ma + ma.transpose() + vars.n[i].value(&x) + vars.o[i].value(&x) * xi11;
        assert!((e.view((0, 0), (4, 4)) - expect).amax() < 1e-12);
    }

    #[test]
    fn structural_blocks_of_zero_model() {
        let mut doc = crate::model::ModelDocument::from(fixtures::example1());
        for r in &mut doc.plant_rules {
            for mat in [&mut r.a, &mut r.a_tau, &mut r.b, &mut r.c, &mut r.c_tau, &mut r.d, &mut r.e, &mut r.e_tau] {
                mat.fill(0.0);
            }
        }
        let m = TSModel::try_from(doc).unwrap();
        let vars = FilterVariables::new(&m, Theorem::One);
        let mut x = vec![0.0; vars.registry.len()];
        x[vars.g.id(0, 0).0] = 0.37;
        let o = DMatrix::from_fn(4, 4, |a, b| if a == b { 2.0 } else { 0.1 });
        vars.o[0].store(&o, &mut x);
        let v = build_theorem1_lmi(&m, 0, 0, &vars, &LmiOptions::default()).unwrap().evaluate(&x).unwrap();
        assert_eq!(v[(16, 16)], -0.37);
        let h = m.delay.h;
        for a in 0..4 {
            for b in 0..4 {
                let coef: f64 = XI_PATTERNS.iter().map(|p| p[a][b]).sum::<f64>() / h;
                let blk = v.view((a * 4, b * 4), (4, 4));
                assert!((blk - &o * coef).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn delay_term_switch_scales_n_block() {
        let m = fixtures::example1();
        let vars = FilterVariables::new(&m, Theorem::One);
        let x = random_x(vars.registry.len(), 5);
        let printed = LmiOptions { delay_term: DelayTerm::Printed, ..LmiOptions::default() };
        let a = build_theorem1_lmi(&m, 0, 0, &vars, &LmiOptions::default()).unwrap().evaluate(&x).unwrap();
        let b = build_theorem1_lmi(&m, 0, 0, &vars, &printed).unwrap().evaluate(&x).unwrap();
        let diff = &a - &b;
        let expect = vars.n[0].value(&x) * m.delay.rho;
        assert!((diff.view((4, 4), (4, 4)) - expect).amax() < 1e-14);
        let mut rest = diff.clone();
        rest.view_mut((4, 4), (4, 4)).fill(0.0);
        assert_eq!(rest.amax(), 0.0);
    }

    #[test]
    fn positivity_counts() {
        let m = fixtures::example1();
        let (_, p1) = build_theorem1_system(&m, &LmiOptions::default()).unwrap();
        assert_eq!(p1.constraints.len(), 4 + 5);
        let b = membership_product_bounds(&m, &m.bounds).unwrap();
        let (vars, p2) = build_theorem2_system(&m, &b, &LmiOptions::default()).unwrap();
        assert_eq!(p2.constraints.len(), 4 + 13);
        let mt = p2.constraints.iter().find(|c| c.label == "M_tilde").unwrap();
        let mut x = vec![0.0; vars.registry.len()];
        vars.m11.store(&DMatrix::identity(2, 2), &mut x);
        vars.m22t.store(&DMatrix::identity(2, 2), &mut x);
        let v = mt.expr.evaluate(&x).unwrap();
        let expect = DMatrix::from_row_slice(4, 4, &[1., 0., 1., 0., 0., 1., 0., 1., 1., 0., 1., 0., 0., 1., 0., 1.]);
        assert_eq!(v, expect);
    }

    #[test]
    fn theorem2_couples_every_slack_and_reduces_to_theorem1() {
        let m = fixtures::example1();
        let b = membership_product_bounds(&m, &m.bounds).unwrap();
        let opts = LmiOptions::default();
        let (vars, p2) = build_theorem2_system(&m, &b, &opts).unwrap();
        let x = {
            let mut x = random_x(vars.registry.len(), 9);
            for v in vars.m_slack.iter().chain(&vars.q_slack) {
                v.store(&DMatrix::zeros(22, 22), &mut x);
            }
            x
        };
        let coupled: Vec<_> = p2.constraints.iter().filter(|c| c.label.starts_with("Omega")).collect();
        assert_eq!(coupled.len(), 4);
        for (k, c) in coupled.iter().enumerate() {
            for s in vars.m_slack.iter().chain(&vars.q_slack) {
                assert!(s.ids().any(|id| c.expr.coefficient(id).is_some()), "{} missing {}", c.label, s.name);
            }
            let th1 = build_theorem1_lmi(&m, k / 2, k % 2, &vars, &opts).unwrap();
            assert_eq!(c.expr.evaluate(&x).unwrap(), th1.evaluate(&x).unwrap());
        }
        let mut bad = b.clone();
        bad.d_upper = DMatrix::zeros(3, 2);
        assert!(build_theorem2_system(&m, &bad, &opts).is_err());
    }

    #[test]
    fn blend_is_convex_combination() {
        let m = fixtures::example2();
        let vars = FilterVariables::new(&m, Theorem::One);
        let x = random_x(vars.registry.len(), 21);
        let set = RuleLmiSet::evaluate(&m, &vars, &LmiOptions::default(), &x).unwrap();
        let worst = set
            .omegas
            .iter()
            .map(|o| o.clone().symmetric_eigenvalues().max())
            .fold(f64::NEG_INFINITY, f64::max);
        for t in [0.0, 0.5, 3.0, 10.0] {
            let b = set.blend_at(&m, t).unwrap();
            assert!(b.symmetric_eigenvalues().max() <= worst + 1e-12);
            let direct = blend_lmi(&m, t, &vars, &LmiOptions::default(), &x).unwrap();
            assert!((direct - b).amax() < 1e-12);
        }
        assert!(blend_lmi(&m, 0.0, &vars, &LmiOptions::default(), &x[1..]).is_err());
    }
}
