//! Primal-dual path-following method (HKM direction, Mehrotra
//! predictor-corrector) for the standard pair
//!
//! ```text
//! (P)  min  Σ_k C_k • X_k   s.t.  Σ_k A_{k,v} • X_k = b_v,  X_k ⪰ 0
//! (D)  max  bᵀy             s.t.  Z_k = C_k − Σ_v y_v A_{k,v} ⪰ 0
//! ```
//!
//! An LMI problem maps onto (D) with `y = x`, `C_k` the constant part of the
//! k-th slack expression and `A_{k,v}` minus its coefficients.

use faer::linalg::solvers::Solve;
use nalgebra::{Cholesky, DMatrix, Dyn};

use super::{SdpDiagnostics, SdpOptions, SdpStatus};
use crate::lmi::{LmiProblem, SparseSym};

const RAY_TOLERANCE: f64 = 1e-4;
/// `−C•X` must exceed this multiple of `1 + |bᵀy|` before a ray is trusted.
const RAY_GROWTH: f64 = 1e6;

pub(crate) struct Block {
    pub dim: usize,
    pub c: DMatrix<f64>,
    /// `(variable, A_{k,v})`, sorted by variable.
    pub a: Vec<(usize, SparseSym)>,
    /// Factor the block was divided by during normalization.
    pub size: f64,
}

pub(crate) struct StandardForm {
    pub blocks: Vec<Block>,
    pub b: Vec<f64>,
    /// `y_original = y_scaled · var_scale`.
    pub var_scale: Vec<f64>,
}

impl StandardForm {
    pub fn from_problem(problem: &LmiProblem) -> Self {
        let m = problem.num_vars();
        let mut blocks: Vec<Block> = problem
            .constraints
            .iter()
            .map(|con| {
                let slack = con.slack_expr();
                let mut c = slack.constant().clone();
                let mut a: Vec<(usize, SparseSym)> = slack
                    .terms()
                    .iter()
                    .map(|(id, s)| {
                        let mut s = s.clone();
                        for e in &mut s.entries {
                            e.2 = -e.2;
                        }
                        (id.0, s)
                    })
                    .collect();
                // Row-normalize each block; feasibility is unchanged.
                let size = a.iter().map(|(_, s)| s.frobenius_norm()).fold(c.norm(), f64::max);
                let size = if size > 0.0 { size } else { 1.0 };
                let scale = 1.0 / size;
                c *= scale;
                for (_, s) in &mut a {
                    for e in &mut s.entries {
                        e.2 *= scale;
                    }
                }
                Block { dim: slack.dim(), c, a, size }
            })
            .collect();

        // Column-normalize the variables.
        let mut norm2 = vec![0.0; m];
        for blk in &blocks {
            for (v, s) in &blk.a {
                norm2[*v] += s.frobenius_norm().powi(2);
            }
        }
        let var_scale: Vec<f64> = norm2.iter().map(|&q| if q > 0.0 { 1.0 / q.sqrt() } else { 1.0 }).collect();
        for blk in &mut blocks {
            for (v, s) in &mut blk.a {
                for e in &mut s.entries {
                    e.2 *= var_scale[*v];
                }
            }
        }
        let mut b = vec![0.0; m];
        for (id, coef) in &problem.objective {
            b[id.0] -= coef;
        }
        for (bv, s) in b.iter_mut().zip(&var_scale) {
            *bv *= s;
        }
        Self { blocks, b, var_scale }
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    /// `Σ_v y_v A_{k,v}` per block.
    fn a_adjoint(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .map(|blk| {
                let mut out = DMatrix::zeros(blk.dim, blk.dim);
                for (v, s) in &blk.a {
                    if y[*v] != 0.0 {
                        s.add_to(&mut out, y[*v]);
                    }
                }
                out
            })
            .collect()
    }

    /// `(A_v • W)_v` summed over blocks.
    fn a_op(&self, w: &[DMatrix<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for (blk, wk) in self.blocks.iter().zip(w) {
            for (v, s) in &blk.a {
                out[*v] += s.inner(wk);
            }
        }
        out
    }
}

fn dot(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn norm_blocks(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `α` with `X + αD ⪰ 0`, given the Cholesky factor of `X`.
fn max_step(chol: &Cholesky<f64, Dyn>, d: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let Some(t) = l.solve_lower_triangular(d) else {
        return 0.0;
    };
    let Some(s) = l.solve_lower_triangular(&t.transpose()) else {
        return 0.0;
    };
    let lmin = sym(&s).symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

/// `W + αD` with `α` halved until every block factors, at most 30 times.
fn backtrack(w: &[DMatrix<f64>], d: &[DMatrix<f64>], alpha: f64) -> Option<(Vec<DMatrix<f64>>, f64)> {
    let mut a = alpha;
    for _ in 0..30 {
        let next: Vec<DMatrix<f64>> = w.iter().zip(d).map(|(wk, dk)| wk + dk * a).collect();
        if next.iter().all(|m| Cholesky::new(m.clone()).is_some()) {
            return Some((next, a));
        }
        a *= 0.5;
    }
    None
}

pub(crate) struct IpmResult {
    pub y: Vec<f64>,
    pub status: SdpStatus,
    pub iterations: usize,
    pub diagnostics: SdpDiagnostics,
}

struct Residuals {
    rp: Vec<f64>,
    rd: Vec<DMatrix<f64>>,
    pobj: f64,
    dobj: f64,
    gap: f64,
    pinf: f64,
    dinf: f64,
    relgap: f64,
    /// `‖R_d‖_F` in the units of the original constraints.
    measure: f64,
    /// `‖A(X)‖ / (−C•X)` when `C•X < 0`: small values certify that (D) is empty.
    ray: f64,
}

pub(crate) fn solve_standard(sf: &StandardForm, opts: &SdpOptions) -> IpmResult {
    let m = sf.m();
    let total_dim: usize = sf.blocks.iter().map(|b| b.dim).sum();
    let bnorm = norm(&sf.b);
    let cnorm = sf.blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>().sqrt();

    // Initial point.
    let mut x: Vec<DMatrix<f64>> = Vec::new();
    let mut z: Vec<DMatrix<f64>> = Vec::new();
    for blk in &sf.blocks {
        let nk = blk.dim as f64;
        let mut xi = 10f64.max(nk.sqrt());
        let mut eta = 10f64.max(nk.sqrt()).max(blk.c.norm());
        for (v, s) in &blk.a {
            let an = s.frobenius_norm();
            xi = xi.max(nk.sqrt() * (1.0 + sf.b[*v].abs()) / (1.0 + an));
            eta = eta.max(an);
        }
        x.push(DMatrix::identity(blk.dim, blk.dim) * xi);
        z.push(DMatrix::identity(blk.dim, blk.dim) * eta);
    }
    let mut y = vec![0.0; m];

    let residuals = |x: &[DMatrix<f64>], y: &[f64], z: &[DMatrix<f64>]| -> Residuals {
        let ax = sf.a_op(x);
        let rp: Vec<f64> = sf.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let aty = sf.a_adjoint(y);
        let rd: Vec<DMatrix<f64>> = sf
            .blocks
            .iter()
            .zip(aty.iter().zip(z))
            .map(|(blk, (at, zk))| &blk.c - zk - at)
            .collect();
        let cx: f64 = sf.blocks.iter().zip(x).map(|(b, xk)| b.c.dot(xk)).sum();
        let dobj: f64 = sf.b.iter().zip(y).map(|(b, v)| b * v).sum();
        let gap = dot(x, z);
        let pinf = norm(&rp) / (1.0 + bnorm);
        let dinf = norm_blocks(&rd) / (1.0 + cnorm);
        let measure = sf
            .blocks
            .iter()
            .zip(&rd)
            .map(|(blk, r)| (blk.size * r.norm()).powi(2))
            .sum::<f64>()
            .sqrt();
        let relgap = gap / (1.0 + cx.abs() + dobj.abs());
        let ray = if cx < 0.0 { norm(&ax) / -cx } else { f64::INFINITY };
        Residuals {
            rp,
            rd,
            pobj: cx,
            dobj,
            gap,
            pinf,
            dinf,
            relgap,
            measure,
            ray,
        }
    };

    let diag = |r: &Residuals, msg: &str| SdpDiagnostics {
        primal_infeasibility: r.pinf,
        dual_infeasibility: r.dinf,
        relative_gap: r.relgap,
        primal_objective: r.pobj,
        dual_objective: r.dobj,
        infeasibility_measure: r.measure,
        ray_measure: r.ray,
        message: msg.to_string(),
    };
    let near_optimal = |r: &Residuals| r.pinf < 1e-7 && r.dinf < 1e-7 && r.relgap < 1e-6;

    let mut measure_hist: Vec<f64> = Vec::new();
    let mut dobj_hist: Vec<f64> = Vec::new();

    for iter in 0..opts.max_iterations {
        let r = residuals(&x, &y, &z);
        if r.relgap < opts.gap_tolerance && r.pinf < opts.feasibility_tolerance && r.dinf < opts.feasibility_tolerance {
            return IpmResult {
                y,
                status: SdpStatus::Optimal,
                iterations: iter,
                diagnostics: diag(&r, "converged"),
            };
        }
        // X/(−C•X) is an approximate Farkas ray: any feasible y must have
        // ‖y‖ ≥ 1/ray in scaled coordinates.
        if r.ray < RAY_TOLERANCE && -r.pobj > RAY_GROWTH * (1.0 + r.dobj.abs()) && r.dinf > opts.feasibility_tolerance {
            return IpmResult {
                y,
                status: SdpStatus::Infeasible,
                iterations: iter,
                diagnostics: diag(
                    &r,
                    &format!("primal ray: every feasible point has scaled norm >= {:.1e}", 1.0 / r.ray),
                ),
            };
        }
        // Dual converged while the primal residual stagnates: the LMI side is
        // what callers use, so accept once its objective has settled.
        dobj_hist.push(r.dobj);
        let settled = dobj_hist.len() > 5 && {
            let old = dobj_hist[dobj_hist.len() - 6];
            (r.dobj - old).abs() <= 1e-9 * (1.0 + r.dobj.abs())
        };
        if settled && r.relgap < opts.gap_tolerance && r.dinf < opts.feasibility_tolerance && r.pinf < 1e-5 {
            return IpmResult {
                y,
                status: SdpStatus::Optimal,
                iterations: iter,
                diagnostics: diag(&r, &format!("dual converged; primal residual stagnated at {:.1e}", r.pinf)),
            };
        }
        // Stall: the residual fails to halve across the window while still large.
        measure_hist.push(r.measure);
        if iter >= opts.stall_window {
            let then = measure_hist[iter - opts.stall_window];
            if r.measure > opts.infeasibility_threshold && r.measure > 0.5 * then {
                return IpmResult {
                    y,
                    status: SdpStatus::Infeasible,
                    iterations: iter,
                    diagnostics: diag(
                        &r,
                        &format!(
                            "infeasibility measure stalled at {:.3e} (was {:.3e} {} iterations earlier)",
                            r.measure, then, opts.stall_window
                        ),
                    ),
                };
            }
        }

        let fail = |r: &Residuals, why: &str, y: Vec<f64>| IpmResult {
            status: if near_optimal(r) { SdpStatus::Optimal } else { SdpStatus::NumericalFailure },
            iterations: iter,
            diagnostics: diag(r, why),
            y,
        };

        let mut xchol = Vec::with_capacity(x.len());
        let mut zchol = Vec::with_capacity(z.len());
        let mut zinv = Vec::with_capacity(z.len());
        for (xk, zk) in x.iter().zip(&z) {
            let (Some(cx), Some(cz)) = (Cholesky::new(xk.clone()), Cholesky::new(zk.clone())) else {
                return fail(&r, "iterate left the cone", y);
            };
            zinv.push(sym(&cz.inverse()));
            xchol.push(cx);
            zchol.push(cz);
        }

        let clock = std::time::Instant::now();
        // Schur complement M_uv = Σ_k A_u • (X A_v Z⁻¹), with P_v = X A_v Z⁻¹.
        let mut schur = faer::Mat::<f64>::zeros(m, m);
        for (k, blk) in sf.blocks.iter().enumerate() {
            let (xk, zi) = (&x[k], &zinv[k]);
            let d = blk.dim;
            let nv = blk.a.len();
            // q[(l, e)] = P_l[r,c] + P_l[c,r] (or P_l[r,r]) for the e-th upper
            // entry (r,c), so A_u • P_l = Σ_{(r,c,w) ∈ A_u} w·q[(l, e(r,c))].
            let upper = |r: usize, c: usize| c * (c + 1) / 2 + r;
            let mut q = faer::Mat::<f64>::zeros(nv, d * (d + 1) / 2);
            let mut p = DMatrix::zeros(d, d);
            for (l, (_, s)) in blk.a.iter().enumerate() {
                p.fill(0.0);
                for &(rr, cc, val) in &s.entries {
                    p.ger(val, &xk.column(rr), &zi.column(cc), 1.0);
                    if rr != cc {
                        p.ger(val, &xk.column(cc), &zi.column(rr), 1.0);
                    }
                }
                for c in 0..d {
                    for r in 0..c {
                        q[(l, upper(r, c))] = p[(r, c)] + p[(c, r)];
                    }
                    q[(l, upper(c, c))] = p[(c, c)];
                }
            }
            let mut acc = vec![0.0; nv];
            for (u, su) in &blk.a {
                acc.fill(0.0);
                for &(r, c, w) in &su.entries {
                    let col = q.col(upper(r, c));
                    for (a, qv) in acc.iter_mut().zip(col.iter()) {
                        *a += w * qv;
                    }
                }
                let mut dst = schur.col_mut(*u);
                for ((v, _), a) in blk.a.iter().zip(&acc) {
                    dst[*v] += a;
                }
            }
        }
        let mut maxdiag: f64 = 0.0;
        for v in 0..m {
            maxdiag = maxdiag.max(schur[(v, v)]);
        }
        for v in 0..m {
            if schur[(v, v)] <= 0.0 {
                schur[(v, v)] = maxdiag.max(1.0);
            }
        }
        let t_schur = clock.elapsed();
        let mut factor = None;
        for reg in [0.0, 1e-14, 1e-12, 1e-10, 1e-8] {
            if reg > 0.0 {
                for v in 0..m {
                    schur[(v, v)] += reg * maxdiag;
                }
            }
            if let Ok(f) = schur.llt(faer::Side::Lower) {
                factor = Some(f);
                break;
            }
        }
        let Some(factor) = factor else {
            return fail(&r, "Schur complement not positive definite", y);
        };

        let t_factor = clock.elapsed() - t_schur;
        // X Rd Z⁻¹ is shared by both solves.
        let xrdz: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &x[k] * &r.rd[k] * &zinv[k]).collect();
        let a_xrdz = sf.a_op(&xrdz);
        let direction = |g: &[DMatrix<f64>]| {
            let ag = sf.a_op(g);
            let rhs = faer::Mat::<f64>::from_fn(m, 1, |v, _| r.rp[v] - ag[v] + a_xrdz[v]);
            let sol = factor.solve(&rhs);
            let dy: Vec<f64> = (0..m).map(|v| sol[(v, 0)]).collect();
            let at = sf.a_adjoint(&dy);
            let dz: Vec<DMatrix<f64>> = r.rd.iter().zip(&at).map(|(rd, a)| rd - a).collect();
            let dx: Vec<DMatrix<f64>> = (0..x.len()).map(|k| sym(&(&g[k] - &x[k] * &dz[k] * &zinv[k]))).collect();
            (dx, dy, dz)
        };
        let steps = |dx: &[DMatrix<f64>], dz: &[DMatrix<f64>]| {
            let ap = xchol.iter().zip(dx).map(|(c, d)| max_step(c, d)).fold(f64::INFINITY, f64::min);
            let ad = zchol.iter().zip(dz).map(|(c, d)| max_step(c, d)).fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        let mu = r.gap / total_dim as f64;
        // Predictor.
        let g_aff: Vec<DMatrix<f64>> = x.iter().map(|xk| -xk).collect();
        let (dx_a, _, dz_a) = direction(&g_aff);
        let (ap, ad) = steps(&dx_a, &dz_a);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut gap_aff = 0.0;
        for k in 0..x.len() {
            gap_aff += (&x[k] + &dx_a[k] * ap).dot(&(&z[k] + &dz_a[k] * ad));
        }
        let expo = 1f64.max(3.0 * ap.min(ad).powi(2));
        let sigma = (gap_aff / r.gap).clamp(0.0, 1.0).powf(expo);

        // Corrector.
        let g_cor: Vec<DMatrix<f64>> = (0..x.len())
            .map(|k| &zinv[k] * (sigma * mu) - &x[k] - &dx_a[k] * &dz_a[k] * &zinv[k])
            .collect();
        let (dx, dy, dz) = direction(&g_cor);
        let (ap_max, ad_max) = steps(&dx, &dz);
        let frac = 0.9 + 0.09 * ap.min(ad);
        let alpha_p = (frac * ap_max).min(1.0);
        let alpha_d = (frac * ad_max).min(1.0);
        if !(alpha_p.is_finite() && alpha_d.is_finite()) || dy.iter().any(|v| !v.is_finite()) {
            return fail(&r, "non-finite search direction", y);
        }
        if alpha_p < 1e-12 && alpha_d < 1e-12 {
            // Both objectives running away together defeats the growth test
            // above; a collapsed step sitting on a small ray is the same verdict.
            if !near_optimal(&r) && r.ray < RAY_TOLERANCE && r.dinf > opts.feasibility_tolerance {
                return IpmResult {
                    y,
                    status: SdpStatus::Infeasible,
                    iterations: iter,
                    diagnostics: diag(
                        &r,
                        &format!("step collapsed on a primal ray: feasible points have scaled norm >= {:.1e}", 1.0 / r.ray),
                    ),
                };
            }
            return fail(&r, "step length collapsed", y);
        }
        // Rounding can leave a nominally interior step numerically on the
        // boundary; back off until the factorizations succeed.
        let Some((xn, alpha_p)) = backtrack(&x, &dx, alpha_p) else {
            return fail(&r, "primal step left the cone", y);
        };
        let Some((zn, alpha_d)) = backtrack(&z, &dz, alpha_d) else {
            return fail(&r, "dual step left the cone", y);
        };
        if opts.trace {
            eprintln!(
                "ipm {iter:3} ray {:.2e} pobj {:+.10e} dobj {:+.10e} gap {:.2e} pinf {:.2e} dinf {:.2e} ap {:.3} ad {:.3} sigma {:.2e} schur {:?} factor {:?} total {:?}",
                r.ray, r.pobj, r.dobj, r.relgap, r.pinf, r.dinf, alpha_p, alpha_d, sigma, t_schur, t_factor, clock.elapsed()
            );
        }
        x = xn;
        z = zn;
        for (yv, d) in y.iter_mut().zip(&dy) {
            *yv += alpha_d * d;
        }
    }
    let r = residuals(&x, &y, &z);
    IpmResult {
        status: if near_optimal(&r) { SdpStatus::Optimal } else { SdpStatus::IterationLimit },
        iterations: opts.max_iterations,
        diagnostics: diag(&r, "iteration limit reached"),
        y,
    }
}
