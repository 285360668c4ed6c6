//! Fixed-step closed-loop simulation.
//!
//! Plant, reference model, modal model, Stage-1 filter, DREM filters,
//! memory regressor and `θ̂` all live in one flat state vector integrated by
//! classical RK4. The exponential weights `e^{−lt}` and `e^{−σt}` are
//! evaluated analytically.
//!
//! `Υ` and `Ω` are stored as mantissas on a shared scale `2^E` (see
//! [`crate::wide`]). `E` is adjusted between steps by exact power-of-two
//! rescaling, so the memory regressor never leaves the `f64` range.
//!
//! State layout for plant order `n` (see [`StateLayout`]):
//!
//! | block      | length    |
//! |------------|-----------|
//! | `x`        | n         |
//! | `x_ref`    | n         |
//! | `χ`        | n         |
//! | `Φ̄`        | n+1       |
//! | `H_φφ`     | (n+2)²    |
//! | `H_φz`     | (n+2)·n   |
//! | `Υ`        | n+1       |
//! | `Ω`        | 1         |
//! | `θ̂`        | n+1       |

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::adapt::{self, GainSchedule, Law};
use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::models::{self, ModalModel, PlantModel, ReferenceModel, ReferenceSignal};
use crate::oracle::{self, IdealSolution};
use crate::param::{self, RegressionPair, ScalarizedAB, Stage2};
use crate::wide::Wide;

/// Magnitude bound on plant, filter and parameter states.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            t_end: 30.0,
            record_stride: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Validation(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::Validation(format!(
                "t_end = {} must be ≥ dt = {}",
                self.t_end, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Validation("record_stride must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Tunables of the estimator and adaptive law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Stage-1 filter pole `l > 0`.
    pub l: f64,
    /// DREM filter pole `k > 0`.
    pub k: f64,
    /// Forgetting rate `σ > 0` of the memory regressor.
    pub sigma: f64,
    #[serde(flatten)]
    pub schedule: GainSchedule,
    /// Constant gain of the baseline gradient law.
    pub baseline_gain: f64,
    /// `φ` and `z` are taken as zero while `det(H_φφ)/∏(H_φφ)_ii` is below
    /// this; at that conditioning they carry no reliable digits.
    pub gram_floor: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            l: 1.0,
            k: 10.0,
            sigma: 5.0,
            schedule: GainSchedule::default(),
            baseline_gain: 1.0,
            gram_floor: 1e-9,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("l", self.l),
            ("k", self.k),
            ("sigma", self.sigma),
            ("baseline_gain", self.baseline_gain),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!(
                    "{name} = {v} must be a positive number"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.gram_floor) {
            return Err(Error::Validation(format!(
                "gram_floor = {} must lie in [0, 1)",
                self.gram_floor
            )));
        }
        self.schedule.validate()
    }
}

/// Offsets of each block in the flat state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    n: usize,
}

impl StateLayout {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x(&self) -> Range<usize> {
        0..self.n
    }
    pub fn xref(&self) -> Range<usize> {
        self.n..2 * self.n
    }
    pub fn chi(&self) -> Range<usize> {
        2 * self.n..3 * self.n
    }
    pub fn phi_bar(&self) -> Range<usize> {
        let s = 3 * self.n;
        s..s + self.n + 1
    }
    pub fn h_pp(&self) -> Range<usize> {
        let s = self.phi_bar().end;
        s..s + (self.n + 2) * (self.n + 2)
    }
    pub fn h_pz(&self) -> Range<usize> {
        let s = self.h_pp().end;
        s..s + (self.n + 2) * self.n
    }
    pub fn upsilon(&self) -> Range<usize> {
        let s = self.h_pz().end;
        s..s + self.n + 1
    }
    pub fn omega(&self) -> usize {
        self.upsilon().end
    }
    pub fn theta(&self) -> Range<usize> {
        let s = self.omega() + 1;
        s..s + self.n + 1
    }
    pub fn len(&self) -> usize {
        self.theta().end
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Blocks subject to [`DIVERGENCE_LIMIT`]. The memory blocks hold
    /// mantissas and are only required to stay finite.
    fn bounded(&self) -> [Range<usize>; 3] {
        [
            0..self.phi_bar().end,
            self.h_pp().start..self.h_pz().end,
            self.theta(),
        ]
    }
}

/// One classical Runge–Kutta step of `ẏ = f(t, y)`.
pub fn rk4_step<F>(mut rhs: F, t: f64, y: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let check = |d: Vec<f64>, at: f64| -> Result<Vec<f64>> {
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(Error::Divergence {
                t: at,
                reason: "non-finite derivative".into(),
            })
        }
    };
    let axpy =
        |a: f64, k: &[f64]| -> Vec<f64> { y.iter().zip(k).map(|(yi, ki)| yi + a * ki).collect() };
    let k1 = check(rhs(t, y)?, t)?;
    let k2 = check(rhs(t + 0.5 * dt, &axpy(0.5 * dt, &k1))?, t + 0.5 * dt)?;
    let k3 = check(rhs(t + 0.5 * dt, &axpy(0.5 * dt, &k2))?, t + 0.5 * dt)?;
    let k4 = check(rhs(t + dt, &axpy(dt, &k3))?, t + dt)?;
    Ok(y.iter()
        .enumerate()
        .map(|(i, yi)| yi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Signals measured or computed inside the loop at one instant.
#[derive(Debug, Clone)]
pub struct LoopSignals {
    pub r: f64,
    pub u: f64,
    /// `φ̄ = [Φ̄ᵀ, e^{−lt}]ᵀ`
    pub phi_bar: Vec<f64>,
    pub ab: ScalarizedAB,
    pub regression: RegressionPair,
    /// `e^{−σt}Δ²`
    pub d_omega: Wide,
}

/// The coupled system, ready to integrate.
pub struct ClosedLoop<'a> {
    pub plant: &'a PlantModel,
    pub modal: &'a ModalModel,
    pub reference: Option<ReferenceModel>,
    pub estimator: EstimatorConfig,
    pub law: Law,
    pub r: &'a ReferenceSignal,
    stage2: Stage2,
    layout: StateLayout,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(
        plant: &'a PlantModel,
        modal: &'a ModalModel,
        reference: Option<ReferenceModel>,
        estimator: EstimatorConfig,
        law: Law,
        r: &'a ReferenceSignal,
    ) -> Result<Self> {
        let n = plant.n();
        if modal.gamma.rows() != n {
            return Err(Error::dim("ClosedLoop", "Γ and A differ in size"));
        }
        estimator.validate()?;
        Ok(Self {
            plant,
            modal,
            reference,
            estimator,
            law,
            r,
            stage2: Stage2::new(&modal.gamma, &plant.h)?,
            layout: StateLayout::new(n),
        })
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn initial_state(&self, theta0: &[f64]) -> Result<Vec<f64>> {
        let ly = self.layout;
        if theta0.len() != ly.n() + 1 {
            return Err(Error::dim("initial_state", "θ̂(0) must have n+1 entries"));
        }
        let mut y = vec![0.0; ly.len()];
        y[ly.x()].copy_from_slice(&self.plant.x0);
        if let Some(rm) = &self.reference {
            y[ly.xref()].copy_from_slice(&rm.xref0);
        }
        y[ly.chi()].copy_from_slice(&self.modal.chi0);
        y[ly.theta()].copy_from_slice(theta0);
        Ok(y)
    }

    /// Measurable signals at `(t, y)`.
    pub fn signals(&self, t: f64, y: &[f64]) -> Result<LoopSignals> {
        let ly = self.layout;
        let n = ly.n();
        let est = &self.estimator;
        let x = &y[ly.x()];
        let r = self.r.value(t);
        let u = models::control_law(&y[ly.theta()], x, r);

        let (_, phi_bar) = param::stage1_outputs(&y[ly.phi_bar()], x, t, est.l);
        let h_pp = Mat::raw(n + 2, n + 2, y[ly.h_pp()].to_vec());
        let h_pz = Mat::raw(n + 2, n, y[ly.h_pz()].to_vec());
        let (z, phi) = if param::gram_conditioning(&h_pp)? < est.gram_floor {
            (Mat::zeros(n + 2, n), 0.0)
        } else {
            param::drem_mix(&h_pp, &h_pz)?
        };
        let ab = param::extract_ab(&z, phi)?;
        let regression = self.stage2.parameterize(&ab)?;
        let d = regression.delta_wide();
        let d_omega = Wide::from_f64((-est.sigma * t).exp()) * d * d;
        Ok(LoopSignals {
            r,
            u,
            phi_bar,
            ab,
            regression,
            d_omega,
        })
    }

    /// Vector field with `Υ`, `Ω` read and written on the scale `2^mem_scale2`.
    pub fn rhs(&self, t: f64, y: &[f64], mem_scale2: i32) -> Result<Vec<f64>> {
        let ly = self.layout;
        let est = &self.estimator;
        let x = &y[ly.x()];
        let theta = &y[ly.theta()];
        let sig = self.signals(t, y)?;
        let mut dy = vec![0.0; ly.len()];

        dy[ly.x()].copy_from_slice(&self.plant.rhs(x, sig.u)?);
        if let Some(rm) = &self.reference {
            dy[ly.xref()].copy_from_slice(&rm.rhs(&y[ly.xref()], sig.r)?);
        }
        dy[ly.chi()].copy_from_slice(&self.modal.rhs(&y[ly.chi()])?);
        dy[ly.phi_bar()].copy_from_slice(&param::stage1_rhs(&y[ly.phi_bar()], x, sig.u, est.l));

        let n = ly.n();
        let (z_bar, _) = param::stage1_outputs(&y[ly.phi_bar()], x, t, est.l);
        let h_pp = Mat::raw(n + 2, n + 2, y[ly.h_pp()].to_vec());
        let h_pz = Mat::raw(n + 2, n, y[ly.h_pz()].to_vec());
        let (d_pp, d_pz) = param::drem_rhs(&h_pp, &h_pz, &sig.phi_bar, &z_bar, est.k);
        dy[ly.h_pp()].copy_from_slice(d_pp.as_slice());
        dy[ly.h_pz()].copy_from_slice(d_pz.as_slice());

        let rp = &sig.regression;
        let (d_ups, d_om) = adapt::memory_rhs(rp.delta, &rp.y, t, est.sigma);
        let shift = 2 * rp.scale2 - mem_scale2;
        for (dst, v) in dy[ly.upsilon()].iter_mut().zip(d_ups) {
            *dst = libm::ldexp(v, shift);
        }
        dy[ly.omega()] = libm::ldexp(d_om, shift);

        let d_theta = match self.law {
            Law::Memory => {
                let omega_reg = models::regressor(x, sig.r);
                adapt::scheduled_memory_law_rhs(
                    theta,
                    y[ly.omega()],
                    &y[ly.upsilon()],
                    mem_scale2,
                    &omega_reg,
                    &est.schedule,
                )
            }
            Law::Baseline => {
                // γΔ(Δθ̂ − Y) = (γ·2^{2s}) Δ̂(Δ̂θ̂ − Ŷ)
                let g = libm::ldexp(est.baseline_gain, 2 * rp.scale2);
                adapt::baseline_law_rhs(theta, rp.delta, &rp.y, g)
            }
        };
        dy[ly.theta()].copy_from_slice(&d_theta);
        Ok(dy)
    }

    fn sample(&self, t: f64, y: &[f64], mem_scale2: i32) -> Result<TraceSample> {
        let ly = self.layout;
        let sig = self.signals(t, y)?;
        Ok(TraceSample {
            t,
            r: sig.r,
            x: y[ly.x()].to_vec(),
            xref: if self.reference.is_some() {
                y[ly.xref()].to_vec()
            } else {
                Vec::new()
            },
            v: models::dot(&self.plant.h, &y[ly.chi()]),
            u: sig.u,
            theta_hat: y[ly.theta()].to_vec(),
            phi_bar: sig.phi_bar,
            phi: sig.ab.phi,
            z_a: sig.ab.z_a.into_vec(),
            z_b: sig.ab.z_b,
            delta_m: sig.regression.delta_m,
            delta_x: sig.regression.delta_x,
            delta_r: sig.regression.delta_r,
            delta: sig.regression.delta,
            y: sig.regression.y,
            delta_scale2: sig.regression.scale2,
            omega: y[ly.omega()],
            d_omega: sig.d_omega.on_scale(mem_scale2),
            upsilon: y[ly.upsilon()].to_vec(),
            omega_scale2: mem_scale2,
        })
    }

    fn check_state(&self, t: f64, y: &[f64]) -> Result<()> {
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                t,
                reason: format!("state entry {i} is not finite"),
            });
        }
        for block in self.layout.bounded() {
            if let Some(v) = y[block].iter().find(|v| v.abs() > DIVERGENCE_LIMIT) {
                return Err(Error::Divergence {
                    t,
                    reason: format!("state magnitude {v:e} exceeds {DIVERGENCE_LIMIT:e}"),
                });
            }
        }
        Ok(())
    }

    fn step(&self, y: &[f64], t_prev: f64, dt: f64, mem_scale2: i32) -> Result<Vec<f64>> {
        let next = rk4_step(|tt, yy| self.rhs(tt, yy, mem_scale2), t_prev, y, dt)?;
        self.check_state(t_prev + dt, &next)?;
        Ok(next)
    }

    /// Integrates from `θ̂(0) = theta0`, keeping everything recorded up to a
    /// divergence instead of discarding it.
    pub fn simulate(&self, theta0: &[f64], sim: &SimConfig) -> Result<SimRun> {
        sim.validate()?;
        let mut y = self.initial_state(theta0)?;
        let steps = sim.steps();
        let mut trace = SimulationTrace {
            n: self.layout.n(),
            samples: Vec::with_capacity(steps / sim.record_stride + 2),
            theta_star: None,
        };
        let ly = self.layout;
        let mut mem_scale2 = 0;
        trace.samples.push(self.sample(0.0, &y, mem_scale2)?);
        for step in 1..=steps {
            let t_prev = (step - 1) as f64 * sim.dt;
            let t = step as f64 * sim.dt;
            if y[ly.omega()] == 0.0 {
                // nothing accumulated yet: put the scale where data arrives
                let d_om = self.signals(t_prev, &y)?.d_omega;
                if !d_om.is_zero() && d_om.is_finite() {
                    mem_scale2 = d_om.exp2();
                }
            }
            let mut next = self.step(&y, t_prev, sim.dt, mem_scale2);
            // `Δ²` can outgrow the memory scale by more than the f64 range in
            // one step while it rises from zero; lift the scale and retry
            let mut retries = 0;
            while retries < MEMORY_RESCALE_RETRIES
                && matches!(&next, Err(Error::Divergence { reason, .. }) if reason.contains("not finite") || reason.contains("non-finite"))
            {
                mem_scale2 += MEMORY_RESCALE_STEP;
                for i in ly.upsilon().chain(std::iter::once(ly.omega())) {
                    y[i] = libm::ldexp(y[i], -MEMORY_RESCALE_STEP);
                }
                next = self.step(&y, t_prev, sim.dt, mem_scale2);
                retries += 1;
            }
            match next {
                Ok(next) => {
                    y = next;
                    mem_scale2 = renormalize_memory(&mut y, ly, mem_scale2);
                }
                Err(Error::Divergence { t, reason }) => {
                    return Ok(SimRun {
                        trace,
                        divergence: Some(Divergence { t, reason }),
                    })
                }
                Err(e) => return Err(e),
            }
            if step % sim.record_stride == 0 || step == steps {
                trace.samples.push(self.sample(t, &y, mem_scale2)?);
            }
        }
        Ok(SimRun {
            trace,
            divergence: None,
        })
    }
}

const MEMORY_RESCALE_STEP: i32 = 1024;
const MEMORY_RESCALE_RETRIES: usize = 64;

/// Moves the exponent of `Ω̂` into the shared scale once it drifts by more
/// than `2^64`, rescaling `Υ̂` identically. Returns the new scale.
fn renormalize_memory(y: &mut [f64], ly: StateLayout, scale2: i32) -> i32 {
    let om = y[ly.omega()];
    if om == 0.0 || !om.is_finite() {
        return scale2;
    }
    let e = libm::frexp(om).1;
    if e.abs() <= 64 {
        return scale2;
    }
    y[ly.omega()] = libm::ldexp(om, -e);
    for v in &mut y[ly.upsilon()] {
        *v = libm::ldexp(*v, -e);
    }
    scale2 + e
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub t: f64,
    pub reason: String,
}

/// Outcome of [`ClosedLoop::simulate`]: the recorded trace, which stops early
/// when the run diverged.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub trace: SimulationTrace,
    pub divergence: Option<Divergence>,
}

/// Runs the closed loop and attaches the oracle's `θ*` to the trace.
///
/// The oracle's `A_Σ`, `B_ref` drive the co-simulated reference model; the
/// controller never sees them. A scenario for which the oracle has no
/// solution still runs, without reference-model columns.
pub fn run_closed_loop(
    plant: &PlantModel,
    modal: &ModalModel,
    estimator: &EstimatorConfig,
    law: Law,
    theta0: &[f64],
    sim: &SimConfig,
    r: &ReferenceSignal,
) -> Result<SimulationTrace> {
    let run = simulate_with_oracle(plant, modal, estimator, law, theta0, sim, r)?;
    match run.divergence {
        Some(d) => Err(Error::Divergence {
            t: d.t,
            reason: d.reason,
        }),
        None => Ok(run.trace),
    }
}

/// Like [`run_closed_loop`] but returns partial traces on divergence.
pub fn simulate_with_oracle(
    plant: &PlantModel,
    modal: &ModalModel,
    estimator: &EstimatorConfig,
    law: Law,
    theta0: &[f64],
    sim: &SimConfig,
    r: &ReferenceSignal,
) -> Result<SimRun> {
    let ideal: Option<IdealSolution> = oracle::solve(plant, &modal.gamma).ok();
    let reference = ideal.as_ref().map(|s| s.reference_model(plant.x0.clone()));
    let cl = ClosedLoop::new(plant, modal, reference, *estimator, law, r)?;
    let mut run = cl.simulate(theta0, sim)?;
    run.trace.theta_star = ideal.map(|s| s.theta_star);
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub r: f64,
    pub x: Vec<f64>,
    /// Empty when no reference model was available.
    pub xref: Vec<f64>,
    /// Modal-model output `hᵀχ`.
    pub v: f64,
    pub u: f64,
    pub theta_hat: Vec<f64>,
    pub phi_bar: Vec<f64>,
    pub phi: f64,
    /// `z_A` row-major.
    pub z_a: Vec<f64>,
    pub z_b: Vec<f64>,
    pub delta_m: f64,
    pub delta_x: f64,
    pub delta_r: f64,
    /// `Δ`, `Y` mantissas; values are `delta·2^delta_scale2`, `y·2^delta_scale2`.
    pub delta: f64,
    pub y: Vec<f64>,
    pub delta_scale2: i32,
    /// `Ω`, `dΩ/dt`, `Υ` mantissas on the scale `2^omega_scale2`.
    pub omega: f64,
    pub d_omega: f64,
    pub upsilon: Vec<f64>,
    pub omega_scale2: i32,
}

impl TraceSample {
    pub fn delta_wide(&self) -> Wide {
        Wide::new(self.delta, self.delta_scale2)
    }

    pub fn y_wide(&self) -> Vec<Wide> {
        self.y
            .iter()
            .map(|&v| Wide::new(v, self.delta_scale2))
            .collect()
    }

    pub fn omega_wide(&self) -> Wide {
        Wide::new(self.omega, self.omega_scale2)
    }

    pub fn d_omega_wide(&self) -> Wide {
        Wide::new(self.d_omega, self.omega_scale2)
    }

    pub fn upsilon_wide(&self) -> Vec<Wide> {
        self.upsilon
            .iter()
            .map(|&v| Wide::new(v, self.omega_scale2))
            .collect()
    }
}

/// Time-indexed record of a run. Errors that need `θ*` are derived on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub n: usize,
    pub samples: Vec<TraceSample>,
    /// Oracle parameters; post-hoc only.
    pub theta_star: Option<Vec<f64>>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> Option<&TraceSample> {
        self.samples.last()
    }

    pub fn has_reference(&self) -> bool {
        self.samples.first().is_some_and(|s| !s.xref.is_empty())
    }

    /// `θ̃ = θ̂ − θ*`.
    pub fn theta_tilde(&self, i: usize) -> Option<Vec<f64>> {
        let ts = self.theta_star.as_ref()?;
        Some(
            self.samples[i]
                .theta_hat
                .iter()
                .zip(ts)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn e_ref(&self, i: usize) -> Option<Vec<f64>> {
        let s = &self.samples[i];
        if s.xref.is_empty() {
            return None;
        }
        Some(s.x.iter().zip(&s.xref).map(|(a, b)| a - b).collect())
    }

    /// `‖ξ‖ = ‖[e_refᵀ, θ̃ᵀ]‖`.
    pub fn xi_norm(&self, i: usize) -> Option<f64> {
        let e = self.e_ref(i)?;
        let th = self.theta_tilde(i)?;
        Some(e.iter().chain(&th).map(|v| v * v).sum::<f64>().sqrt())
    }

    pub fn u_star(&self, i: usize) -> Option<f64> {
        let ts = self.theta_star.as_ref()?;
        let s = &self.samples[i];
        Some(models::control_law(ts, &s.x, s.r))
    }

    pub fn all_finite(&self) -> bool {
        self.samples.iter().all(|s| {
            [
                s.t, s.r, s.v, s.u, s.phi, s.delta_m, s.delta_x, s.delta_r, s.delta, s.omega,
                s.d_omega,
            ]
            .iter()
            .chain(&s.x)
            .chain(&s.xref)
            .chain(&s.theta_hat)
            .chain(&s.phi_bar)
            .chain(&s.z_a)
            .chain(&s.z_b)
            .chain(&s.y)
            .chain(&s.upsilon)
            .all(|v| v.is_finite())
        })
    }

    pub fn csv_header(&self) -> Vec<String> {
        let n = self.n;
        let mut h = vec!["t".to_string()];
        fn idx(p: &'static str, m: usize) -> impl Iterator<Item = String> {
            (1..=m).map(move |i| format!("{p}{i}"))
        }
        h.extend(idx("x", n));
        if self.has_reference() {
            h.extend(idx("xref", n));
            h.extend(idx("eref", n));
        }
        h.push("r".into());
        h.push("v".into());
        h.push("u".into());
        if self.theta_star.is_some() {
            h.push("ustar".into());
        }
        h.extend(idx("theta", n + 1));
        if self.theta_star.is_some() {
            h.extend(idx("thetatilde", n + 1));
        }
        h.extend(idx("phibar", n + 2));
        h.push("phi".into());
        for i in 1..=n {
            for j in 1..=n {
                h.push(format!("zA{i}_{j}"));
            }
        }
        h.extend(idx("zB", n));
        h.extend(["DeltaM", "Deltax", "Deltar", "Delta"].map(String::from));
        h.extend(idx("Y", n + 1));
        h.push("DeltaScale2".into());
        h.push("Omega".into());
        h.push("dOmega".into());
        h.extend(idx("Upsilon", n + 1));
        h.push("OmegaScale2".into());
        h
    }

    /// Writes the trace as CSV with 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.csv_header())?;
        let fmt = |v: f64| format!("{v:.16e}");
        for (i, s) in self.samples.iter().enumerate() {
            let mut row: Vec<f64> = vec![s.t];
            row.extend(&s.x);
            if let Some(e) = self.e_ref(i) {
                row.extend(&s.xref);
                row.extend(e);
            }
            row.push(s.r);
            row.push(s.v);
            row.push(s.u);
            if let Some(us) = self.u_star(i) {
                row.push(us);
            }
            row.extend(&s.theta_hat);
            if let Some(tt) = self.theta_tilde(i) {
                row.extend(tt);
            }
            row.extend(&s.phi_bar);
            row.push(s.phi);
            row.extend(&s.z_a);
            row.extend(&s.z_b);
            row.extend([s.delta_m, s.delta_x, s.delta_r, s.delta]);
            row.extend(&s.y);
            row.push(s.delta_scale2 as f64);
            row.push(s.omega);
            row.push(s.d_omega);
            row.extend(&s.upsilon);
            row.push(s.omega_scale2 as f64);
            wr.write_record(row.into_iter().map(fmt))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Parses a trace written by [`write_csv`](Self::write_csv). `θ*` is
    /// recovered from the `theta` and `thetatilde` columns when present.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
        let col = |name: &str| header.iter().position(|h| h == name);
        let n = (1..)
            .take_while(|i| col(&format!("x{i}")).is_some())
            .count();
        if n == 0 {
            return Err(Error::TraceFormat("no state columns x1..".into()));
        }
        let req = |name: String| -> Result<usize> {
            col(&name).ok_or_else(|| Error::TraceFormat(format!("missing column {name}")))
        };
        let reqs = |p: &str, m: usize| -> Result<Vec<usize>> {
            (1..=m).map(|i| req(format!("{p}{i}"))).collect()
        };
        let has_ref = col("xref1").is_some();
        let has_star = col("thetatilde1").is_some();
        let c_t = req("t".into())?;
        let c_r = req("r".into())?;
        let c_x = reqs("x", n)?;
        let c_xref = if has_ref {
            reqs("xref", n)?
        } else {
            Vec::new()
        };
        let c_v = req("v".into())?;
        let c_u = req("u".into())?;
        let c_th = reqs("theta", n + 1)?;
        let c_tt = if has_star {
            reqs("thetatilde", n + 1)?
        } else {
            Vec::new()
        };
        let c_pb = reqs("phibar", n + 2)?;
        let c_phi = req("phi".into())?;
        let c_za: Vec<usize> = (1..=n)
            .flat_map(|i| (1..=n).map(move |j| format!("zA{i}_{j}")))
            .map(req)
            .collect::<Result<_>>()?;
        let c_zb = reqs("zB", n)?;
        let c_dm = req("DeltaM".into())?;
        let c_dx = req("Deltax".into())?;
        let c_dr = req("Deltar".into())?;
        let c_d = req("Delta".into())?;
        let c_y = reqs("Y", n + 1)?;
        let c_om = req("Omega".into())?;
        let c_dom = req("dOmega".into())?;
        let c_up = reqs("Upsilon", n + 1)?;
        // older traces without scale columns are on scale 2^0
        let c_ds = col("DeltaScale2");
        let c_os = col("OmegaScale2");

        let mut samples = Vec::new();
        let mut theta_star: Option<Vec<f64>> = None;
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::TraceFormat(format!("row {}: {e}", line + 2)))?;
            let pick = |cols: &[usize]| cols.iter().map(|&c| vals[c]).collect::<Vec<f64>>();
            let s = TraceSample {
                t: vals[c_t],
                r: vals[c_r],
                x: pick(&c_x),
                xref: pick(&c_xref),
                v: vals[c_v],
                u: vals[c_u],
                theta_hat: pick(&c_th),
                phi_bar: pick(&c_pb),
                phi: vals[c_phi],
                z_a: pick(&c_za),
                z_b: pick(&c_zb),
                delta_m: vals[c_dm],
                delta_x: vals[c_dx],
                delta_r: vals[c_dr],
                delta: vals[c_d],
                y: pick(&c_y),
                delta_scale2: c_ds.map_or(0, |c| vals[c] as i32),
                omega: vals[c_om],
                d_omega: vals[c_dom],
                upsilon: pick(&c_up),
                omega_scale2: c_os.map_or(0, |c| vals[c] as i32),
            };
            if has_star && theta_star.is_none() {
                let tt = pick(&c_tt);
                theta_star = Some(s.theta_hat.iter().zip(&tt).map(|(a, b)| a - b).collect());
            }
            samples.push(s);
        }
        if samples.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::TraceFormat(
                "time grid is not strictly increasing".into(),
            ));
        }
        Ok(Self {
            n,
            samples,
            theta_star,
        })
    }

    pub fn load_csv(path: &std::path::Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rk4_constant() {
        let y = rk4_step(|_, y| Ok(vec![0.0; y.len()]), 0.0, &[3.5], 0.1).unwrap();
        assert_eq!(y, vec![3.5]);
    }

    #[test]
    fn rk4_exponential_growth() {
        let y = rk4_step(|_, y| Ok(y.to_vec()), 0.0, &[1.0], 0.1).unwrap();
        assert!((y[0] - 0.1_f64.exp()).abs() < 1e-7);
        assert_relative_eq!(y[0], 1.105_170_833_333_333_3, epsilon = 1e-15);
    }

    #[test]
    fn rk4_decay_channel() {
        let l = 1.0;
        let dt = 1e-3;
        let mut y = vec![1.0];
        for i in 0..1000 {
            y = rk4_step(|_, y| Ok(vec![-l * y[0]]), i as f64 * dt, &y, dt).unwrap();
            let t = (i + 1) as f64 * dt;
            assert!((y[0] - (-l * t).exp()).abs() <= 1e-8);
        }
    }

    #[test]
    fn rk4_reports_non_finite() {
        let err = rk4_step(
            |t, _| Ok(vec![if t > 0.0 { f64::NAN } else { 1.0 }]),
            0.0,
            &[0.0],
            0.5,
        );
        assert!(matches!(err, Err(Error::Divergence { t, .. }) if t == 0.25));
    }

    #[test]
    fn layout_is_contiguous() {
        let ly = StateLayout::new(2);
        assert_eq!(ly.x(), 0..2);
        assert_eq!(ly.phi_bar(), 6..9);
        assert_eq!(ly.h_pp(), 9..25);
        assert_eq!(ly.h_pz(), 25..33);
        assert_eq!(ly.upsilon(), 33..36);
        assert_eq!(ly.omega(), 36);
        assert_eq!(ly.theta(), 37..40);
        assert_eq!(ly.len(), 40);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig {
            dt: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            t_end: 1e-6,
            dt: 1e-4,
            record_stride: 1
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            record_stride: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EstimatorConfig {
            k: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
