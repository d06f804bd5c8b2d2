//! Fixed-step simulation of the filtering-error system.
//!
//! The augmented state is `ζ = (x, x_f)` with `x_f` in the coordinates of the
//! extracted realization. Delayed lookups go through a cubic Hermite
//! interpolant of the stored grid (method of steps); the history before
//! `t = 0` is a constant vector.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DelayParams, DelayProfile, PremiseSignal, TSModel};
use crate::synthesis::FilterRule;

/// `τ(t)`, either constant or `mean + amplitude·sin(frequency·t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayTrajectory {
    Constant { tau: f64 },
    Sinusoid { mean: f64, amplitude: f64, frequency: f64 },
}

impl DelayTrajectory {
    /// The trajectory a model's delay profile asks for. The default is
    /// `(h/2)(1 + sin(ωt))` with `ω = ρ/h`.
    pub fn from_params(p: &DelayParams) -> Self {
        match p.profile {
            DelayProfile::Default if p.rho > 0.0 => DelayTrajectory::Sinusoid {
                mean: p.h / 2.0,
                amplitude: p.h / 2.0,
                frequency: p.rho / p.h,
            },
            DelayProfile::Default => DelayTrajectory::Constant { tau: p.h / 2.0 },
            DelayProfile::Constant { tau } => DelayTrajectory::Constant { tau },
            DelayProfile::Sinusoid {
                mean,
                amplitude,
                frequency,
            } => DelayTrajectory::Sinusoid {
                mean,
                amplitude,
                frequency,
            },
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            DelayTrajectory::Constant { tau } => tau,
            DelayTrajectory::Sinusoid {
                mean,
                amplitude,
                frequency,
            } => mean + amplitude * (frequency * t).sin(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            DelayTrajectory::Constant { .. } => 0.0,
            DelayTrajectory::Sinusoid {
                amplitude, frequency, ..
            } => amplitude * frequency * (frequency * t).cos(),
        }
    }

    pub fn max_value(&self) -> f64 {
        match *self {
            DelayTrajectory::Constant { tau } => tau,
            DelayTrajectory::Sinusoid { mean, amplitude, .. } => mean + amplitude.abs(),
        }
    }

    pub fn min_value(&self) -> f64 {
        match *self {
            DelayTrajectory::Constant { tau } => tau,
            DelayTrajectory::Sinusoid { mean, amplitude, .. } => mean - amplitude.abs(),
        }
    }

    pub fn max_derivative(&self) -> f64 {
        match *self {
            DelayTrajectory::Constant { .. } => 0.0,
            DelayTrajectory::Sinusoid {
                amplitude, frequency, ..
            } => (amplitude * frequency).abs(),
        }
    }

    /// `0 ≤ τ ≤ h` and `τ̇ ≤ ρ`, checked from the closed-form extremes.
    pub fn validate(&self, h: f64, rho: f64) -> Result<()> {
        let mut bad = Vec::new();
        let values = [self.min_value(), self.max_value(), self.max_derivative()];
        if values.iter().any(|v| !v.is_finite()) {
            bad.push("delay trajectory has non-finite parameters".to_string());
        }
        if self.min_value() < 0.0 {
            bad.push(format!("delay reaches {} < 0", self.min_value()));
        }
        if self.max_value() > h {
            bad.push(format!("delay reaches {} > h = {h}", self.max_value()));
        }
        if self.max_derivative() > rho {
            bad.push(format!("delay rate reaches {} > rho = {rho}", self.max_derivative()));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Simulation(bad.join("; ")))
        }
    }
}

/// Disturbance `w(t)`, applied identically to every channel except the
/// noise, which draws independent components per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disturbance {
    Zero,
    /// `amplitude·exp(−decay·t)·sin(frequency·t)`.
    DecayingSine { amplitude: f64, decay: f64, frequency: f64 },
    /// `amplitude` on `[start, start + width)`, zero elsewhere.
    Pulse { amplitude: f64, start: f64, width: f64 },
    /// Sum of `components` sinusoids with frequencies in `(0, bandwidth]`
    /// and random phases, drawn from `seed`.
    Noise {
        amplitude: f64,
        bandwidth: f64,
        components: usize,
        seed: u64,
    },
}

/// A disturbance with its random draws fixed.
#[derive(Debug, Clone)]
pub struct Signal {
    spec: Disturbance,
    /// Per channel: `(weight, ω, phase)`.
    tones: Vec<Vec<(f64, f64, f64)>>,
}

impl Disturbance {
    pub fn compile(&self, channels: usize) -> Signal {
        let mut tones = Vec::new();
        if let Disturbance::Noise {
            amplitude,
            bandwidth,
            components,
            seed,
        } = *self
        {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = components.max(1);
            let weight = amplitude * (2.0 / k as f64).sqrt();
            for _ in 0..channels {
                tones.push(
                    (0..k)
                        .map(|_| {
                            let w = rng.gen_range(0.05 * bandwidth..=bandwidth);
                            let ph = rng.gen_range(0.0..std::f64::consts::TAU);
                            (weight, w, ph)
                        })
                        .collect(),
                );
            }
        }
        Signal {
            spec: self.clone(),
            tones,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Disturbance::Zero => true,
            Disturbance::DecayingSine { amplitude, .. }
            | Disturbance::Pulse { amplitude, .. }
            | Disturbance::Noise { amplitude, .. } => amplitude == 0.0,
        }
    }
}

impl Signal {
    pub fn eval(&self, t: f64, channels: usize) -> DVector<f64> {
        match self.spec {
            Disturbance::Zero => DVector::zeros(channels),
            Disturbance::DecayingSine {
                amplitude,
                decay,
                frequency,
            } => DVector::from_element(channels, amplitude * (-decay * t).exp() * (frequency * t).sin()),
            Disturbance::Pulse { amplitude, start, width } => {
                let on = t >= start && t < start + width;
                DVector::from_element(channels, if on { amplitude } else { 0.0 })
            }
            Disturbance::Noise { .. } => DVector::from_fn(channels, |c, _| {
                self.tones[c].iter().map(|&(a, w, ph)| a * (w * t + ph).sin()).sum()
            }),
        }
    }
}

/// A named stimulus: disturbance, constant history and time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub disturbance: Disturbance,
    /// Constant `ζ` on `[−h, 0]`; a plant-sized vector is padded with zeros.
    pub history: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
}

/// The disturbance scenarios used for gain checks.
pub const DISTURBANCE_SCENARIOS: [&str; 3] = ["decaying-sine", "pulse", "noise"];
pub const SCENARIOS: [&str; 4] = ["free", "decaying-sine", "pulse", "noise"];
pub const DEFAULT_HORIZON: f64 = 50.0;
pub const DEFAULT_STEP: f64 = 0.01;

impl Scenario {
    /// Bundled scenarios; `seed` only affects `noise`.
    pub fn bundled(name: &str, model: &TSModel, seed: u64) -> Result<Self> {
        let n = model.dims.n;
        let (disturbance, history) = match name {
            "free" => (Disturbance::Zero, vec![1.0; n]),
            "decaying-sine" => (
                Disturbance::DecayingSine {
                    amplitude: 1.0,
                    decay: 0.2,
                    frequency: 1.0,
                },
                vec![0.0; n],
            ),
            "pulse" => (
                Disturbance::Pulse {
                    amplitude: 1.0,
                    start: 1.0,
                    width: 2.0,
                },
                vec![0.0; n],
            ),
            "noise" => (
                Disturbance::Noise {
                    amplitude: 0.5,
                    bandwidth: 2.0,
                    components: 24,
                    seed,
                },
                vec![0.0; n],
            ),
            other => {
                return Err(Error::Simulation(format!(
                    "unknown scenario {other:?}; expected one of {}",
                    SCENARIOS.join(", ")
                )))
            }
        };
        Ok(Self {
            name: name.to_string(),
            disturbance,
            history,
            horizon: DEFAULT_HORIZON,
            step: DEFAULT_STEP,
        })
    }

    pub fn history_vector(&self, model: &TSModel) -> Result<DVector<f64>> {
        let n = model.dims.n;
        match self.history.len() {
            l if l == 2 * n => Ok(DVector::from_column_slice(&self.history)),
            l if l == n => {
                let mut v = DVector::zeros(2 * n);
                v.rows_mut(0, n).copy_from(&DVector::from_column_slice(&self.history));
                Ok(v)
            }
            l => Err(Error::Dimension(format!("history has {l} entries, expected {n} or {}", 2 * n))),
        }
    }

    pub fn run(&self, model: &TSModel, filter: &[FilterRule]) -> Result<SimulationTrace> {
        simulate(
            model,
            filter,
            &DelayTrajectory::from_params(&model.delay),
            &self.disturbance,
            &self.history_vector(model)?,
            self.horizon,
            self.step,
        )
    }
}

/// Sampled solution on a uniform grid, with running energies.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub t: Vec<f64>,
    pub step: f64,
    pub tau: Vec<f64>,
    pub zeta: Vec<DVector<f64>>,
    pub zeta_dot: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub z_f: Vec<DVector<f64>>,
    pub e: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    /// `∫₀ᵗ‖e‖²`, trapezoidal.
    pub energy_e: Vec<f64>,
    pub energy_w: Vec<f64>,
    pub history: DVector<f64>,
    pub disturbance: Disturbance,
}

/// Grid values and slopes with a constant prefix, for delayed lookups.
struct Dense<'a> {
    dt: f64,
    chi: &'a DVector<f64>,
    y: Vec<DVector<f64>>,
    f: Vec<DVector<f64>>,
}

impl Dense<'_> {
    fn at(&self, s: f64) -> (DVector<f64>, DVector<f64>) {
        lookup(self.dt, self.chi, &self.y, &self.f, s)
    }
}

/// `ζ(s)` and `ζ̇(s)`: the constant history for `s ≤ 0`, cubic Hermite on
/// intervals whose end slopes are known, first-order extrapolation beyond.
fn lookup(dt: f64, chi: &DVector<f64>, y: &[DVector<f64>], f: &[DVector<f64>], s: f64) -> (DVector<f64>, DVector<f64>) {
    if s <= 0.0 {
        return (chi.clone(), DVector::zeros(chi.len()));
    }
    let k = (s / dt).floor() as usize;
    if k + 1 < f.len() {
        let th = s / dt - k as f64;
        let (t2, t3) = (th * th, th * th * th);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + th;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let val = &y[k] * h00 + &f[k] * (h10 * dt) + &y[k + 1] * h01 + &f[k + 1] * (h11 * dt);
        let d00 = (6.0 * t2 - 6.0 * th) / dt;
        let d10 = 3.0 * t2 - 4.0 * th + 1.0;
        let d11 = 3.0 * t2 - 2.0 * th;
        let der = &y[k] * d00 + &f[k] * d10 - &y[k + 1] * d00 + &f[k + 1] * d11;
        (val, der)
    } else {
        let j = k.min(y.len() - 1);
        let fj = &f[j.min(f.len().saturating_sub(1))];
        (&y[j] + fj * (s - j as f64 * dt), fj.clone())
    }
}

/// Blended augmented matrices at one instant.
struct Blend {
    a: DMatrix<f64>,
    a_tau: DMatrix<f64>,
    b: DMatrix<f64>,
    e: DMatrix<f64>,
    e_tau: DMatrix<f64>,
}

fn weighted(ms: impl Iterator<Item = DMatrix<f64>>, w: &[f64]) -> DMatrix<f64> {
    let mut out: Option<DMatrix<f64>> = None;
    for (m, &c) in ms.zip(w) {
        out = Some(match out {
            None => m * c,
            Some(o) => o + m * c,
        });
    }
    out.expect("at least one rule")
}

fn blend(model: &TSModel, filter: &[FilterRule], phi: &[f64], nf: &[f64]) -> Blend {
    let n = model.dims.n;
    let r = &model.plant_rules;
    let a = weighted(r.iter().map(|x| x.a.clone()), phi);
    let a_tau = weighted(r.iter().map(|x| x.a_tau.clone()), phi);
    let b = weighted(r.iter().map(|x| x.b.clone()), phi);
    let c = weighted(r.iter().map(|x| x.c.clone()), phi);
    let c_tau = weighted(r.iter().map(|x| x.c_tau.clone()), phi);
    let d = weighted(r.iter().map(|x| x.d.clone()), phi);
    let e = weighted(r.iter().map(|x| x.e.clone()), phi);
    let e_tau = weighted(r.iter().map(|x| x.e_tau.clone()), phi);
    let af = weighted(filter.iter().map(|x| x.a_f.clone()), nf);
    let bf = weighted(filter.iter().map(|x| x.b_f.clone()), nf);
    let cf = weighted(filter.iter().map(|x| x.c_f.clone()), nf);

    let mut ab = DMatrix::zeros(2 * n, 2 * n);
    ab.view_mut((0, 0), (n, n)).copy_from(&a);
    ab.view_mut((n, 0), (n, n)).copy_from(&(&bf * &c));
    ab.view_mut((n, n), (n, n)).copy_from(&af);
    let mut atb = DMatrix::zeros(2 * n, 2 * n);
    atb.view_mut((0, 0), (n, n)).copy_from(&a_tau);
    atb.view_mut((n, 0), (n, n)).copy_from(&(&bf * &c_tau));
    let pw = b.ncols();
    let mut bb = DMatrix::zeros(2 * n, pw);
    bb.view_mut((0, 0), (n, pw)).copy_from(&b);
    bb.view_mut((n, 0), (n, pw)).copy_from(&(&bf * &d));
    let q = e.nrows();
    let mut eb = DMatrix::zeros(q, 2 * n);
    eb.view_mut((0, 0), (q, n)).copy_from(&e);
    eb.view_mut((0, n), (q, n)).copy_from(&(-cf));
    let mut etb = DMatrix::zeros(q, 2 * n);
    etb.view_mut((0, 0), (q, n)).copy_from(&e_tau);
    Blend {
        a: ab,
        a_tau: atb,
        b: bb,
        e: eb,
        e_tau: etb,
    }
}

fn premise(sig: PremiseSignal, t: f64, zeta: &DVector<f64>, n: usize) -> f64 {
    match sig {
        PremiseSignal::Time => t,
        PremiseSignal::PlantState(k) => zeta[k],
        PremiseSignal::FilterState(k) => zeta[n + k],
    }
}

pub(crate) fn weights(model: &TSModel, t: f64, zeta: &DVector<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = model.dims.n;
    Ok((
        model.plant_weights(premise(model.plant_premise, t, zeta, n))?,
        model.filter_weights(premise(model.filter_premise, t, zeta, n))?,
    ))
}

fn check_filter(model: &TSModel, filter: &[FilterRule]) -> Result<()> {
    let d = model.dims;
    if filter.len() != model.filter_rule_count {
        return Err(Error::Dimension(format!(
            "filter has {} rules, model expects {}",
            filter.len(),
            model.filter_rule_count
        )));
    }
    for (j, r) in filter.iter().enumerate() {
        if r.a_f.shape() != (d.n, d.n) || r.b_f.shape() != (d.n, d.m_y) || r.c_f.shape() != (d.q, d.n) {
            return Err(Error::Dimension(format!("filter rule {} has the wrong shape", j + 1)));
        }
        if r.a_f.iter().chain(r.b_f.iter()).chain(r.c_f.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Simulation(format!("filter rule {} is not finite", j + 1)));
        }
    }
    Ok(())
}

/// Classical RK4 over `[0, horizon]`. The step is shrunk so the grid lands
/// on the horizon; it must not exceed a tenth of the smallest positive delay
/// (the largest one when the trajectory touches zero).
pub fn simulate(
    model: &TSModel,
    filter: &[FilterRule],
    delay: &DelayTrajectory,
    disturbance: &Disturbance,
    history: &DVector<f64>,
    horizon: f64,
    step: f64,
) -> Result<SimulationTrace> {
    check_filter(model, filter)?;
    delay.validate(model.delay.h, model.delay.rho)?;
    let n2 = 2 * model.dims.n;
    let pw = model.dims.p_w;
    if history.len() != n2 {
        return Err(Error::Dimension(format!("history has {} entries, expected {n2}", history.len())));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Simulation(format!("horizon must be > 0 (got {horizon})")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Simulation(format!("step must be > 0 (got {step})")));
    }
    let tau_ref = if delay.min_value() > 0.0 { delay.min_value() } else { delay.max_value() };
    if tau_ref > 0.0 && step > tau_ref / 10.0 {
        return Err(Error::Simulation(format!(
            "step {step} exceeds a tenth of the delay scale {tau_ref}"
        )));
    }
    let steps = (horizon / step - 1e-9).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let signal = disturbance.compile(pw);

    let mut dense = Dense {
        dt,
        chi: history,
        y: Vec::with_capacity(steps + 1),
        f: Vec::with_capacity(steps + 1),
    };
    let rhs = |dense: &Dense, t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let (phi, nf) = weights(model, t, y)?;
        let bl = blend(model, filter, &phi, &nf);
        let (yd, _) = dense.at(t - delay.value(t));
        Ok(&bl.a * y + &bl.a_tau * yd + &bl.b * signal.eval(t, pw))
    };

    dense.y.push(history.clone());
    for k in 0..steps {
        let t = k as f64 * dt;
        let y = dense.y[k].clone();
        let k1 = rhs(&dense, t, &y)?;
        dense.f.push(k1.clone());
        let k2 = rhs(&dense, t + dt / 2.0, &(&y + &k1 * (dt / 2.0)))?;
        let k3 = rhs(&dense, t + dt / 2.0, &(&y + &k2 * (dt / 2.0)))?;
        let k4 = rhs(&dense, t + dt, &(&y + &k3 * dt))?;
        let next = &y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation(format!("state became non-finite at t = {}", t + dt)));
        }
        dense.y.push(next);
    }
    let last = dense.y[steps].clone();
    let f_last = rhs(&dense, horizon, &last)?;
    dense.f.push(f_last);

    let mut trace = SimulationTrace {
        t: Vec::with_capacity(steps + 1),
        step: dt,
        tau: Vec::with_capacity(steps + 1),
        zeta: Vec::with_capacity(steps + 1),
        zeta_dot: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        z_f: Vec::with_capacity(steps + 1),
        e: Vec::with_capacity(steps + 1),
        w: Vec::with_capacity(steps + 1),
        energy_e: Vec::with_capacity(steps + 1),
        energy_w: Vec::with_capacity(steps + 1),
        history: history.clone(),
        disturbance: disturbance.clone(),
    };
    let n = model.dims.n;
    for k in 0..=steps {
        let t = if k == steps { horizon } else { k as f64 * dt };
        let y = &dense.y[k];
        let tau = delay.value(t);
        let (yd, _) = dense.at(t - tau);
        let (phi, nf) = weights(model, t, y)?;
        let bl = blend(model, filter, &phi, &nf);
        let e = &bl.e * y + &bl.e_tau * &yd;
        let zf = -bl.e.view((0, n), (bl.e.nrows(), n)) * y.rows(n, n);
        let z = &e + &zf;
        let w = signal.eval(t, pw);
        if k == 0 {
            trace.energy_e.push(0.0);
            trace.energy_w.push(0.0);
        } else {
            let pe = trace.e[k - 1].norm_squared();
            let pwk = trace.w[k - 1].norm_squared();
            trace.energy_e.push(trace.energy_e[k - 1] + 0.5 * dt * (pe + e.norm_squared()));
            trace.energy_w.push(trace.energy_w[k - 1] + 0.5 * dt * (pwk + w.norm_squared()));
        }
        trace.t.push(t);
        trace.tau.push(tau);
        trace.zeta.push(y.clone());
        trace.zeta_dot.push(dense.f[k].clone());
        trace.z.push(z);
        trace.z_f.push(zf);
        trace.e.push(e);
        trace.w.push(w);
    }
    Ok(trace)
}

/// Observed convergence order from three runs at `step`, `step/2`, `step/4`:
/// `log₂(‖ζ_h − ζ_{h/2}‖ / ‖ζ_{h/2} − ζ_{h/4}‖)` at the horizon.
pub fn step_halving_order(
    model: &TSModel,
    filter: &[FilterRule],
    delay: &DelayTrajectory,
    disturbance: &Disturbance,
    history: &DVector<f64>,
    horizon: f64,
    step: f64,
) -> Result<f64> {
    let mut ends = Vec::with_capacity(3);
    for k in 0..3 {
        let tr = simulate(model, filter, delay, disturbance, history, horizon, step / f64::from(1u32 << k))?;
        ends.push(tr.zeta[tr.len() - 1].clone());
    }
    Ok(((&ends[0] - &ends[1]).norm() / (&ends[1] - &ends[2]).norm()).log2())
}

/// `√(∫‖e‖² / ∫‖w‖²)` over the whole trace.
pub fn empirical_gain(trace: &SimulationTrace) -> Result<f64> {
    let ew = *trace.energy_w.last().unwrap_or(&0.0);
    if !(ew > 0.0) {
        return Err(Error::Simulation("disturbance energy is zero".into()));
    }
    Ok((trace.energy_e.last().copied().unwrap_or(0.0) / ew).sqrt())
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Interpolated `ζ(s)` and `ζ̇(s)`, using the history for `s ≤ 0`.
    pub fn state_at(&self, s: f64) -> (DVector<f64>, DVector<f64>) {
        if s >= self.t[self.len() - 1] {
            let k = self.len() - 1;
            return (self.zeta[k].clone(), self.zeta_dot[k].clone());
        }
        lookup(self.step, &self.history, &self.zeta, &self.zeta_dot, s)
    }

    /// `‖ζ(T)‖ / ‖ζ(0)‖`.
    pub fn terminal_norm_ratio(&self) -> f64 {
        let first = self.zeta.first().map(|v| v.norm()).unwrap_or(0.0);
        let last = self.zeta.last().map(|v| v.norm()).unwrap_or(0.0);
        last / first
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string(), "tau".to_string()];
        for (p, k) in [
            ("zeta", self.zeta[0].len()),
            ("z", self.z[0].len()),
            ("z_f", self.z_f[0].len()),
            ("e", self.e[0].len()),
            ("w", self.w[0].len()),
        ] {
            h.extend((1..=k).map(|i| format!("{p}{i}")));
        }
        h.push("energy_e".into());
        h.push("energy_w".into());
        h
    }

    fn row(&self, k: usize) -> Vec<f64> {
        let mut r = vec![self.t[k], self.tau[k]];
        for v in [&self.zeta[k], &self.z[k], &self.z_f[k], &self.e[k], &self.w[k]] {
            r.extend(v.iter());
        }
        r.push(self.energy_e[k]);
        r.push(self.energy_w[k]);
        r
    }

    /// Wide CSV, one row per grid point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for k in 0..self.len() {
            w.write_record(self.row(k).iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long CSV (`t,series,value`), convenient for plotting tools.
    pub fn write_long_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "series", "value"])?;
        let header = self.header();
        for k in 0..self.len() {
            let row = self.row(k);
            for (name, v) in header.iter().zip(&row).skip(1) {
                w.write_record([format!("{:e}", row[0]), name.clone(), format!("{v:e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// A smooth run for the RK4 order check: Example 1 with a fixed stable
/// filter, a constant delay that stays on the step grid, and a decaying
/// sine input.
#[derive(Debug, Clone)]
pub struct SmoothFixture {
    pub model: TSModel,
    pub filter: Vec<FilterRule>,
    pub delay: DelayTrajectory,
    pub disturbance: Disturbance,
    pub history: DVector<f64>,
    pub horizon: f64,
    pub step: f64,
}

impl SmoothFixture {
    pub fn example1() -> Self {
        let r = |s: f64| FilterRule {
            a_f: nalgebra::dmatrix![-2.0, 0.3 * s; -0.1, -1.5],
            b_f: nalgebra::dmatrix![0.5; 0.2 * s],
            c_f: nalgebra::dmatrix![0.4, -0.2],
        };
        Self {
            model: crate::model::fixtures::example1(),
            filter: vec![r(1.0), r(-1.0)],
            delay: DelayTrajectory::Constant { tau: 0.3 },
            disturbance: Disturbance::DecayingSine {
                amplitude: 1.0,
                decay: 0.2,
                frequency: 1.0,
            },
            history: DVector::from_vec(vec![1.0, -0.5, 0.2, 0.0]),
            horizon: 3.0,
            step: 0.03,
        }
    }

    /// Observed convergence order from steps `h`, `h/2`, `h/4`.
    pub fn order(&self) -> Result<f64> {
        step_halving_order(
            &self.model,
            &self.filter,
            &self.delay,
            &self.disturbance,
            &self.history,
            self.horizon,
            self.step,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;
    use nalgebra::dmatrix;

    fn fixed_filter() -> Vec<FilterRule> {
        let r = |s: f64| FilterRule {
            a_f: dmatrix![-2.0, 0.3 * s; -0.1, -1.5],
            b_f: dmatrix![0.5; 0.2 * s],
            c_f: dmatrix![0.4, -0.2],
        };
        vec![r(1.0), r(-1.0)]
    }

    #[test]
    fn equilibrium_stays_at_rest() {
        let m = fixtures::example1();
        let tr = simulate(
            &m,
            &fixed_filter(),
            &DelayTrajectory::from_params(&m.delay),
            &Disturbance::Zero,
            &DVector::zeros(4),
            5.0,
            0.01,
        )
        .unwrap();
        assert!(tr.zeta.iter().all(|v| v.norm() == 0.0));
        assert!(tr.e.iter().all(|v| v.norm() == 0.0));
        assert_eq!(*tr.energy_e.last().unwrap(), 0.0);
        assert_eq!(*tr.energy_w.last().unwrap(), 0.0);
        assert!(empirical_gain(&tr).is_err());
    }

    #[test]
    fn rk4_step_halving_order() {
        let p = SmoothFixture::example1().order().unwrap();
        assert!(p >= 3.5, "observed order {p}");
    }

    #[test]
    fn default_delay_respects_bounds_on_the_grid() {
        let m = fixtures::example1();
        let d = DelayTrajectory::from_params(&m.delay);
        assert!(d.validate(m.delay.h, m.delay.rho).is_ok());
        let tr = simulate(&m, &fixed_filter(), &d, &Disturbance::Zero, &DVector::from_element(4, 1.0), 20.0, 0.01).unwrap();
        for k in 0..tr.len() {
            assert!(tr.tau[k] >= 0.0 && tr.tau[k] <= m.delay.h);
            assert!(d.derivative(tr.t[k]) <= m.delay.rho);
        }
        for k in 1..tr.len() {
            assert!(tr.energy_e[k] >= tr.energy_e[k - 1] && tr.energy_w[k] >= tr.energy_w[k - 1]);
            assert!((tr.t[k] - tr.t[k - 1] - tr.step).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_delays_and_steps_are_refused() {
        let m = fixtures::example1();
        let f = fixed_filter();
        let chi = DVector::zeros(4);
        let too_long = DelayTrajectory::Constant { tau: 0.6 };
        assert!(simulate(&m, &f, &too_long, &Disturbance::Zero, &chi, 1.0, 0.01).is_err());
        let too_fast = DelayTrajectory::Sinusoid {
            mean: 0.25,
            amplitude: 0.25,
            frequency: 2.0,
        };
        assert!(too_fast.validate(0.5, 0.2).is_err());
        let ok = DelayTrajectory::Constant { tau: 0.2 };
        assert!(simulate(&m, &f, &ok, &Disturbance::Zero, &chi, 1.0, 0.05).is_err());
        assert!(simulate(&m, &f, &ok, &Disturbance::Zero, &chi, -1.0, 0.01).is_err());
    }

    #[test]
    fn passthrough_gain_is_one_and_silent_output_is_zero() {
        let mut m = fixtures::example1();
        // z ≡ 0 and a filter with zero output weights.
        for r in &mut m.plant_rules {
            r.a = -DMatrix::identity(2, 2);
            r.a_tau.fill(0.0);
            r.e.fill(0.0);
            r.e_tau.fill(0.0);
        }
        let silent: Vec<FilterRule> = fixed_filter()
            .into_iter()
            .map(|mut r| {
                r.c_f.fill(0.0);
                r
            })
            .collect();
        let w = Disturbance::DecayingSine {
            amplitude: 1.0,
            decay: 0.2,
            frequency: 1.0,
        };
        let d = DelayTrajectory::Constant { tau: 0.25 };
        let tr = simulate(&m, &silent, &d, &w, &DVector::zeros(4), 10.0, 0.01).unwrap();
        assert_eq!(empirical_gain(&tr).unwrap(), 0.0);

        // Passthrough: the same trace with e replaced by w.
        let mut tr2 = tr.clone();
        tr2.e = tr2.w.clone();
        let mut acc = 0.0;
        tr2.energy_e = (0..tr2.len())
            .map(|k| {
                if k > 0 {
                    acc += 0.5 * tr2.step * (tr2.e[k - 1].norm_squared() + tr2.e[k].norm_squared());
                }
                acc
            })
            .collect();
        assert!((empirical_gain(&tr2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let d = Disturbance::Noise {
            amplitude: 0.5,
            bandwidth: 2.0,
            components: 24,
            seed: 9,
        };
        let (a, b) = (d.compile(2), d.compile(2));
        for k in 0..100 {
            let t = k as f64 * 0.37;
            assert_eq!(a.eval(t, 2), b.eval(t, 2));
            assert!(a.eval(t, 2).amax() <= 0.5 * (2.0f64 / 24.0).sqrt() * 24.0);
        }
        let other = Disturbance::Noise {
            amplitude: 0.5,
            bandwidth: 2.0,
            components: 24,
            seed: 10,
        }
        .compile(1);
        assert_ne!(a.eval(1.0, 1), other.eval(1.0, 1));
    }

    #[test]
    fn csv_has_one_row_per_sample() {
        let m = fixtures::example1();
        let s = Scenario::bundled("pulse", &m, 0).unwrap();
        let short = Scenario { horizon: 1.0, ..s };
        let tr = short.run(&m, &fixed_filter()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), tr.len() + 1);
        assert!(text.starts_with("t,tau,zeta1,zeta2,zeta3,zeta4,z1,z_f1,e1,w1,energy_e,energy_w"));
        assert!(Scenario::bundled("nope", &m, 0).is_err());
    }
}
