//! Independent checks: the integral inequality behind the delay bound, the
//! υ-relaxation, sampled negativity of the blended LMI, and a Lyapunov
//! decrease spot check along simulated trajectories.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::FilterVariables;
use crate::model::TSModel;
use crate::sim::{self, SimulationTrace};

pub use crate::synthesis::{blend_check as sampled_blend_negativity, BlendCheck};

/// A polynomial trajectory `x(s) = Σ_k c_k s^k` on `[α, β]` with weight `R`
/// and free matrices `N₁, N₂, N₃` (each `4n × n`).
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Instance {
    pub alpha: f64,
    pub beta: f64,
    /// Column `k` holds `c_k`.
    pub coeffs: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub n: [DMatrix<f64>; 3],
}

fn int_pow(a: f64, b: f64, m: usize) -> f64 {
    let e = (m + 1) as i32;
    (b.powi(e) - a.powi(e)) / (m + 1) as f64
}

fn eval_poly(c: &DMatrix<f64>, s: f64) -> DVector<f64> {
    let mut out = DVector::zeros(c.nrows());
    for k in (0..c.ncols()).rev() {
        out = out * s + c.column(k);
    }
    out
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &g * g.transpose() + DMatrix::identity(n, n) * floor
}

impl Lemma1Instance {
    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    /// `[x(β); x(α); (1/d)∫x; (2/d²)∫∫x]`, integrated exactly.
    pub fn xi(&self) -> DVector<f64> {
        let (a, b) = (self.alpha, self.beta);
        let d = b - a;
        let n = self.dim();
        let mut int1 = DVector::zeros(n);
        let mut int_s = DVector::zeros(n);
        for k in 0..self.coeffs.ncols() {
            int1 += self.coeffs.column(k) * int_pow(a, b, k);
            int_s += self.coeffs.column(k) * int_pow(a, b, k + 1);
        }
        // ∫_α^β ∫_α^s x(u) du ds = ∫_α^β (β − u) x(u) du.
        let dbl = &int1 * b - int_s;
        let mut xi = DVector::zeros(4 * n);
        xi.rows_mut(0, n).copy_from(&eval_poly(&self.coeffs, b));
        xi.rows_mut(n, n).copy_from(&eval_poly(&self.coeffs, a));
        xi.rows_mut(2 * n, n).copy_from(&(int1 / d));
        xi.rows_mut(3 * n, n).copy_from(&(dbl * (2.0 / (d * d))));
        xi
    }

    /// `Δ₁ = e₁−e₂`, `Δ₂ = e₁+e₂−2e₃`, `Δ₃ = e₁−e₂−6e₃+6e₄`.
    pub fn deltas(n: usize) -> [DMatrix<f64>; 3] {
        let pat = [[1.0, -1.0, 0.0, 0.0], [1.0, 1.0, -2.0, 0.0], [1.0, -1.0, -6.0, 6.0]];
        pat.map(|p| {
            let mut m = DMatrix::zeros(n, 4 * n);
            for (blk, c) in p.iter().enumerate() {
                for i in 0..n {
                    m[(i, blk * n + i)] = *c;
                }
            }
            m
        })
    }

    /// `∫ ẋᵀRẋ`, exact.
    pub fn energy(&self) -> f64 {
        let deg = self.coeffs.ncols();
        let mut total = 0.0;
        for a in 1..deg {
            for b in 1..deg {
                let q = (self.coeffs.column(a).transpose() * &self.r * self.coeffs.column(b))[(0, 0)];
                total += (a * b) as f64 * q * int_pow(self.alpha, self.beta, a + b - 2);
            }
        }
        total
    }

    /// Random instance of order `n` and degree `deg`.
    pub fn random(rng: &mut ChaCha8Rng, n: usize, deg: usize) -> Self {
        let alpha = rng.gen_range(-2.0..1.0);
        let beta = alpha + rng.gen_range(0.1..2.0);
        Self {
            alpha,
            beta,
            coeffs: DMatrix::from_fn(n, deg + 1, |_, _| rng.gen_range(-1.0..1.0)),
            r: random_spd(rng, n, 0.1),
            n: [0, 1, 2].map(|_| DMatrix::from_fn(4 * n, n, |_, _| rng.gen_range(-1.0..1.0))),
        }
    }

    /// Replace the free matrices by the minimizers of the right-hand side,
    /// leaving only the Legendre (Bessel) gap.
    pub fn with_optimal_multipliers(mut self) -> Self {
        let n = self.dim();
        let xi = self.xi();
        let d = self.beta - self.alpha;
        let xx = xi.norm_squared();
        if xx == 0.0 {
            self.n = [0, 1, 2].map(|_| DMatrix::zeros(4 * n, n));
            return self;
        }
        let deltas = Self::deltas(n);
        for (k, delta) in deltas.iter().enumerate() {
            let a = delta * &xi;
            let w = (2 * k + 1) as f64 / (d * xx);
            self.n[k] = -(&xi * (a.transpose() * &self.r)) * w;
        }
        self
    }
}

/// Right-hand side minus left-hand side of the integral inequality.
pub fn check_lemma1(inst: &Lemma1Instance) -> Result<f64> {
    let n = inst.dim();
    if !(inst.beta > inst.alpha) {
        return Err(Error::Verification(format!("empty interval [{}, {}]", inst.alpha, inst.beta)));
    }
    if inst.r.shape() != (n, n) || inst.n.iter().any(|m| m.shape() != (4 * n, n)) {
        return Err(Error::Dimension("R must be n×n and N_k 4n×n".into()));
    }
    let chol = inst
        .r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Verification("R is not positive definite".into()))?;
    let d = inst.beta - inst.alpha;
    let xi = inst.xi();
    let deltas = Lemma1Instance::deltas(n);
    let mut rhs = 0.0;
    for (k, (nk, delta)) in inst.n.iter().zip(&deltas).enumerate() {
        let v = nk.transpose() * &xi;
        let quad = (v.transpose() * chol.solve(&v))[(0, 0)];
        rhs += d / (2 * k + 1) as f64 * quad;
        rhs += 2.0 * (v.transpose() * (delta * &xi))[(0, 0)];
    }
    Ok(rhs + inst.energy())
}

/// `(−2υM + υ²O) − (−M O⁻¹ M)`, which equals `(υO − M) O⁻¹ (υO − M)`.
pub fn check_upsilon_relaxation(o: &DMatrix<f64>, m: &DMatrix<f64>, upsilon: f64) -> Result<DMatrix<f64>> {
    if o.shape() != m.shape() || !o.is_square() {
        return Err(Error::Dimension("O and M must be square and of equal size".into()));
    }
    let chol = o
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Verification("O is singular or not positive definite".into()))?;
    let out = m * (-2.0 * upsilon) + o * (upsilon * upsilon) + m * chol.solve(m);
    Ok((&out + out.transpose()) * 0.5)
}

/// Outcome of a batch of random instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub instances: usize,
    pub min_margin: f64,
    pub failures: usize,
    pub threshold: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn instance_rng(master: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(master ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// `count` random integral-inequality instances (degree ≤ 5, n ≤ 3); every
/// fourth uses the optimal multipliers, which makes the margin tight.
pub fn lemma1_suite(master_seed: u64, count: usize) -> Result<SuiteResult> {
    let threshold = -1e-8;
    let mut min_margin = f64::INFINITY;
    let mut failures = 0;
    for k in 0..count {
        let mut rng = instance_rng(master_seed, k);
        let n = rng.gen_range(1..=3);
        let deg = rng.gen_range(0..=5);
        let mut inst = Lemma1Instance::random(&mut rng, n, deg);
        if k % 4 == 3 {
            inst = inst.with_optimal_multipliers();
        }
        let m = check_lemma1(&inst)?;
        min_margin = min_margin.min(m);
        if !(m >= threshold) {
            failures += 1;
        }
    }
    Ok(SuiteResult {
        instances: count,
        min_margin,
        failures,
        threshold,
    })
}

/// `count` random `(O ≻ 0, M = Mᵀ, υ)` draws; the margin is the least
/// eigenvalue of the relaxation gap.
pub fn upsilon_suite(master_seed: u64, count: usize) -> Result<SuiteResult> {
    let threshold = -1e-10;
    let mut min_margin = f64::INFINITY;
    let mut failures = 0;
    for k in 0..count {
        let mut rng = instance_rng(master_seed, k);
        let n = rng.gen_range(1..=6);
        let o = random_spd(&mut rng, n, 0.1);
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let m = (&g + g.transpose()) * 0.5;
        let ups = rng.gen_range(0.0..20.0);
        let e = check_upsilon_relaxation(&o, &m, ups)?.symmetric_eigenvalues().min();
        min_margin = min_margin.min(e);
        if !(e >= threshold) {
            failures += 1;
        }
    }
    Ok(SuiteResult {
        instances: count,
        min_margin,
        failures,
        threshold,
    })
}

/// Lyapunov weights read from a solved assignment.
#[derive(Debug, Clone)]
pub struct LyapunovWeights {
    pub m: DMatrix<f64>,
    pub n: Vec<DMatrix<f64>>,
    pub o: Vec<DMatrix<f64>>,
}

impl LyapunovWeights {
    pub fn from_assignment(vars: &FilterVariables, x: &[f64]) -> Self {
        Self {
            m: vars.m_tilde().evaluate(x),
            n: vars.n.iter().map(|v| v.value(x)).collect(),
            o: vars.o.iter().map(|v| v.value(x)).collect(),
        }
    }

    fn blended(ms: &[DMatrix<f64>], phi: &[f64]) -> DMatrix<f64> {
        ms.iter().zip(phi).fold(DMatrix::zeros(ms[0].nrows(), ms[0].ncols()), |acc, (m, &p)| acc + m * p)
    }
}

/// `V(t_k) = ζᵀM̃ζ + ∫_{t−τ}^{t} ζᵀN(s)ζ + ∫_{t−h}^{t} (s−t+h) ζ̇ᵀO(s)ζ̇`,
/// trapezoidal on the trace grid subdivided `refine` times.
pub fn lyapunov_value(
    model: &TSModel,
    weights: &LyapunovWeights,
    trace: &SimulationTrace,
    k: usize,
    refine: usize,
) -> Result<f64> {
    let t = trace.t[k];
    let z = &trace.zeta[k];
    let mut v = (z.transpose() * &weights.m * z)[(0, 0)];
    let quad = |lo: f64, f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        let len = t - lo;
        if len <= 0.0 {
            return Ok(0.0);
        }
        let m = ((len / trace.step).ceil() as usize).max(1) * refine.max(1);
        let hs = len / m as f64;
        let mut acc = 0.5 * (f(lo)? + f(t)?);
        for i in 1..m {
            acc += f(lo + i as f64 * hs)?;
        }
        Ok(acc * hs)
    };
    let tau = trace.tau[k];
    v += quad(t - tau, &|s| {
        let (zs, _) = trace.state_at(s);
        let (phi, _) = sim::weights(model, s, &zs)?;
        let nn = LyapunovWeights::blended(&weights.n, &phi);
        Ok((zs.transpose() * nn * &zs)[(0, 0)])
    })?;
    let h = model.delay.h;
    v += quad(t - h, &|s| {
        let (zs, dz) = trace.state_at(s);
        let (phi, _) = sim::weights(model, s, &zs)?;
        let oo = LyapunovWeights::blended(&weights.o, &phi);
        Ok((s - t + h) * (dz.transpose() * oo * &dz)[(0, 0)])
    })?;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCheck {
    pub samples: usize,
    /// Largest `V̇` over samples with `‖ζ‖` above `state_floor`.
    pub worst_vdot: f64,
    pub worst_t: f64,
    pub v0: f64,
    pub state_floor: f64,
    /// `V̇ < 0` at every retained sample. A spot check only.
    pub consistent: bool,
}

/// Central-difference `V̇` at every `stride`-th interior grid point of an
/// undisturbed trace.
pub fn sampled_lyapunov_decrease(
    model: &TSModel,
    vars: &FilterVariables,
    x: &[f64],
    trace: &SimulationTrace,
    stride: usize,
) -> Result<LyapunovCheck> {
    if !trace.disturbance.is_zero() || trace.w.iter().any(|w| w.amax() != 0.0) {
        return Err(Error::Verification("Lyapunov decrease needs a trace with w ≡ 0".into()));
    }
    if trace.len() < 3 {
        return Err(Error::Verification("trace too short".into()));
    }
    let weights = LyapunovWeights::from_assignment(vars, x);
    let state_floor = 1e-6;
    let dt = trace.step;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    let mut samples = 0;
    let mut k = 1;
    while k + 1 < trace.len() {
        if trace.zeta[k].norm() > state_floor {
            let vp = lyapunov_value(model, &weights, trace, k + 1, 1)?;
            let vm = lyapunov_value(model, &weights, trace, k - 1, 1)?;
            let vdot = (vp - vm) / (2.0 * dt);
            samples += 1;
            if vdot > worst {
                worst = vdot;
                worst_t = trace.t[k];
            }
        }
        k += stride.max(1);
    }
    Ok(LyapunovCheck {
        samples,
        worst_vdot: worst,
        worst_t,
        v0: lyapunov_value(model, &weights, trace, 0, 1)?,
        state_floor,
        consistent: samples == 0 || worst < 0.0,
    })
}
