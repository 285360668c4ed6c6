//! Offline excitation analysis and convergence verdicts over recorded traces.
//!
//! Integrals use the trapezoidal rule on the recorded grid, so the record
//! spacing should stay at or below about 1e-2 s. Quantities built from `Δ`
//! are evaluated in the log domain because `Δ ∝ φ^q` is usually far outside
//! the `f64` range.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{symmetric_eigenvalues, Mat};
use crate::sim::SimulationTrace;
use crate::wide::Wide;

/// Ratio `dΩ/dt < T_E_RATIO·Ω` that marks the end of excitation.
pub const T_E_RATIO: f64 = 1e-9;
/// Norms below this are left out of log-rate fits.
pub const RATE_FLOOR: f64 = 1e-10;
/// Gram eigenvalues below this fraction of the largest count as zero when
/// deciding whether a vector signal is exciting.
pub const RANK_TOL: f64 = 1e-10;

/// A nonnegative level that may lie outside the `f64` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Level {
    /// Nearest `f64`, 0 when it underflows.
    pub value: f64,
    /// `log10` of the level; `None` when it is exactly zero.
    pub log10: Option<f64>,
}

impl Level {
    pub fn from_f64(v: f64) -> Self {
        Self {
            value: v,
            log10: (v > 0.0).then(|| v.log10()),
        }
    }

    pub fn from_ln(ln: f64) -> Self {
        if ln == f64::NEG_INFINITY {
            Self {
                value: 0.0,
                log10: None,
            }
        } else {
            Self {
                value: ln.exp(),
                log10: Some(ln / std::f64::consts::LN_10),
            }
        }
    }

    pub fn from_wide(w: Wide) -> Self {
        Self::from_ln(w.ln_abs())
    }

    pub fn is_positive(&self) -> bool {
        self.log10.is_some()
    }
}

/// Excitation of one recorded signal over `[t_r⁺, t_e]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalExcitation {
    pub name: String,
    pub dim: usize,
    /// Smallest eigenvalue of `∫ssᵀdτ` (the plain integral for scalars).
    pub alpha: Level,
    pub fe: bool,
}

/// Growth envelope `|Δ(t)| ≤ c₁e^{c₂t}` fitted to the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthEnvelope {
    pub ln_c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcitationReport {
    /// Excitation level of `φ̄` over `[t_r⁺, t_e]`.
    pub alpha: f64,
    pub t_r_plus: f64,
    /// Detected end of excitation; `None` if `Ω` never settles.
    pub t_e: Option<f64>,
    pub fe_satisfied: bool,
    pub signals: Vec<SignalExcitation>,
    /// `(min, max)` of `Ω` over `[t_e, t_end]`.
    pub omega_bounds: Option<(Level, Level)>,
    pub growth: Option<GrowthEnvelope>,
    pub a16: Option<A16Report>,
    pub warnings: Vec<String>,
}

/// Inputs that the trace alone does not carry.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalysisOptions {
    /// `ln|C|` from the structural constants; enables the lower-bound check.
    pub ln_abs_c: Option<f64>,
    /// Forgetting rate, checked against the growth envelope.
    pub sigma: Option<f64>,
}

/// Indices of samples with `t ∈ [a, b]`.
fn window_indices(times: &[f64], window: (f64, f64)) -> Result<(usize, usize)> {
    let (a, b) = window;
    let tol = 1e-12 * a.abs().max(b.abs()).max(1.0);
    let lo = times.partition_point(|&t| t < a - tol);
    let hi = times.partition_point(|&t| t <= b + tol);
    if hi < lo + 2 {
        return Err(Error::EmptyWindow(format!(
            "[{a}, {b}] holds {} samples, need ≥ 2",
            hi.saturating_sub(lo)
        )));
    }
    Ok((lo, hi))
}

/// Trapezoidal `∫ s²dτ` over `window`.
pub fn fe_level_scalar(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    check_len(times.len(), values.len())?;
    let (lo, hi) = window_indices(times, window)?;
    Ok((lo..hi - 1)
        .map(|i| 0.5 * (times[i + 1] - times[i]) * (values[i].powi(2) + values[i + 1].powi(2)))
        .sum())
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::dim(
            "excitation",
            format!("{a} times but {b} samples"),
        ));
    }
    Ok(())
}

/// Trapezoidal Gram integral `∫ ssᵀdτ` over `window`.
pub fn gram(times: &[f64], rows: &[Vec<f64>], window: (f64, f64)) -> Result<Mat> {
    check_len(times.len(), rows.len())?;
    let (lo, hi) = window_indices(times, window)?;
    let d = rows[lo].len();
    let mut g = Mat::zeros(d, d);
    for i in lo..hi - 1 {
        let w = 0.5 * (times[i + 1] - times[i]);
        for s in [&rows[i], &rows[i + 1]] {
            if s.len() != d {
                return Err(Error::dim("gram", "ragged samples"));
            }
            for p in 0..d {
                for q in 0..d {
                    g[(p, q)] += w * s[p] * s[q];
                }
            }
        }
    }
    Ok(g)
}

/// Smallest eigenvalue of the Gram integral, clamped at 0.
pub fn fe_level_vector(times: &[f64], rows: &[Vec<f64>], window: (f64, f64)) -> Result<f64> {
    let g = gram(times, rows, window)?;
    Ok(symmetric_eigenvalues(&g)?[0].max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowLevel {
    pub t_start: f64,
    pub t_end: f64,
    pub alpha: f64,
}

/// Excitation level over consecutive windows of length `window`, starting
/// every `hop` seconds. Bounded below away from 0 for persistent excitation.
pub fn pe_check_windowed(
    times: &[f64],
    rows: &[Vec<f64>],
    window: f64,
    hop: f64,
) -> Result<Vec<WindowLevel>> {
    check_len(times.len(), rows.len())?;
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return Err(Error::EmptyWindow("empty trace".into()));
    };
    if !(window > 0.0) || !(hop > 0.0) {
        return Err(Error::Validation("window and hop must be > 0".into()));
    }
    if window > t1 - t0 {
        return Err(Error::EmptyWindow(format!(
            "window {window} s is longer than the trace ({} s)",
            t1 - t0
        )));
    }
    let count = ((t1 - t0 - window) / hop + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|k| {
            let a = t0 + k as f64 * hop;
            let b = a + window;
            Ok(WindowLevel {
                t_start: a,
                t_end: b,
                alpha: fe_level_vector(times, rows, (a, b))?,
            })
        })
        .collect()
}

/// `ln ∫f` by the trapezoidal rule from samples of `ln f`.
pub fn ln_trapezoid(times: &[f64], ln_f: &[f64]) -> f64 {
    let terms: Vec<f64> = (0..times.len().saturating_sub(1))
        .flat_map(|i| {
            let hw = (0.5 * (times[i + 1] - times[i])).ln();
            [hw + ln_f[i], hw + ln_f[i + 1]]
        })
        .collect();
    log_sum_exp(&terms)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Smallest sample time after which `dΩ/dt < T_E_RATIO·Ω` holds on every
/// remaining sample.
pub fn detect_t_e(trace: &SimulationTrace) -> Option<f64> {
    let settled = |s: &crate::sim::TraceSample| s.omega > 0.0 && s.d_omega < T_E_RATIO * s.omega;
    let tail = trace
        .samples
        .iter()
        .rev()
        .take_while(|s| settled(s))
        .count();
    if tail == 0 {
        return None;
    }
    Some(trace.samples[trace.len() - tail].t)
}

/// Least-squares line through `(t, ln v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Fitted exponential rate; negative means decay.
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Fits `ln v ≈ intercept + slope·t` over samples with `t ≥ t_from` and
/// `v ≥ floor`. `None` with fewer than 3 usable points or no time spread.
pub fn fit_log_rate(times: &[f64], values: &[f64], t_from: f64, floor: f64) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(&t, &v)| t >= t_from && v >= floor && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if stt <= 0.0 {
        return None;
    }
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sty / stt;
    Some(RateFit {
        slope,
        intercept: my - slope * mt,
        points: pts.len(),
    })
}

/// Envelope `ln|Δ| ≤ ln c₁ + c₂t`: `c₂` is the least-squares growth rate
/// of `ln|Δ|` (0 if it decays) and `c₁` the smallest intercept that covers
/// every sample.
pub fn growth_envelope(trace: &SimulationTrace) -> Option<GrowthEnvelope> {
    let pts: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .map(|s| (s.t, s.delta_wide().ln_abs()))
        .filter(|p| p.1.is_finite())
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = if stt > 0.0 {
        pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>() / stt
    } else {
        0.0
    };
    let c2 = slope.max(0.0);
    let ln_c1 = pts
        .iter()
        .map(|p| p.1 - c2 * p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Some(GrowthEnvelope { ln_c1, c2 })
}

/// Outcome of the lower bound on `∫Δ²` implied by the excitation of `φ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A16Report {
    pub t_a: f64,
    pub t_b: f64,
    /// `max φ²` over the search interval.
    pub beta: f64,
    /// Measured `∫_{t_a}^{t_b} φ²dτ`.
    pub alpha: f64,
    pub q: u32,
    pub ln_abs_c: f64,
    /// `log10 ∫Δ²` over `[t_a, t_b]`.
    pub log10_lhs_window: f64,
    /// `log10 ∫Δ²` over the whole search interval.
    pub log10_lhs_full: f64,
    /// `log10 [C²(t_b−t_a)(α/(t_b−t_a))^{2q}]`.
    pub log10_bound: f64,
    pub holds: bool,
}

/// Checks `∫_{t_a}^{t_b} Δ² ≥ C²(t_b−t_a)(α/(t_b−t_a))^{2q}` on the
/// neighbourhood `[t_a, t_b]` of `argmax φ²` where `φ² ≥ β/2`, searching
/// within `[t_r⁺, t_e]` (the whole trace when `t_e` is not detected).
pub fn a16_bound_check(trace: &SimulationTrace, q: u32, ln_abs_c: f64) -> Result<A16Report> {
    if trace.len() < 2 {
        return Err(Error::EmptyWindow("trace has fewer than 2 samples".into()));
    }
    let end = match detect_t_e(trace) {
        Some(te) => trace.samples.partition_point(|s| s.t <= te),
        None => trace.len(),
    };
    let s = &trace.samples[..end.max(2)];
    let phi2: Vec<f64> = s.iter().map(|x| x.phi * x.phi).collect();
    let (i0, beta) = phi2
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    if !(beta > 0.0) {
        return Err(Error::NoQualifyingInterval);
    }
    let mut a = i0;
    while a > 0 && phi2[a - 1] >= 0.5 * beta {
        a -= 1;
    }
    let mut b = i0;
    while b + 1 < s.len() && phi2[b + 1] >= 0.5 * beta {
        b += 1;
    }
    if a == b {
        return Err(Error::NoQualifyingInterval);
    }
    let times: Vec<f64> = s.iter().map(|x| x.t).collect();
    let ln_d2: Vec<f64> = s.iter().map(|x| 2.0 * x.delta_wide().ln_abs()).collect();
    let (ta, tb) = (times[a], times[b]);
    let alpha: f64 = (a..b)
        .map(|i| 0.5 * (times[i + 1] - times[i]) * (phi2[i] + phi2[i + 1]))
        .sum();
    let width = tb - ta;
    let ln_bound = 2.0 * ln_abs_c + width.ln() + 2.0 * q as f64 * (alpha.ln() - width.ln());
    let ln_lhs_window = ln_trapezoid(&times[a..=b], &ln_d2[a..=b]);
    let ln_lhs_full = ln_trapezoid(&times, &ln_d2);
    let l10 = std::f64::consts::LN_10;
    Ok(A16Report {
        t_a: ta,
        t_b: tb,
        beta,
        alpha,
        q,
        ln_abs_c,
        log10_lhs_window: ln_lhs_window / l10,
        log10_lhs_full: ln_lhs_full / l10,
        log10_bound: ln_bound / l10,
        holds: ln_lhs_window >= ln_bound,
    })
}

/// Monotonicity, boundedness and convergence-rate verdict for `θ̂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Verdict {
    /// Largest rise of `|θ̃_i|` above its running minimum, per component.
    pub max_violation: Vec<f64>,
    pub monotone: bool,
    pub slack: f64,
    /// `sup‖ξ‖`, `ξ = [e_ref; θ̃]`; `None` without reference-model data.
    pub sup_xi: Option<f64>,
    pub t_e: Option<f64>,
    /// Exponential rate of `‖θ̃‖` after `t_e`.
    pub theta_rate: Option<RateFit>,
    /// Exponential rate of `‖ξ‖` after `t_e`.
    pub xi_rate: Option<RateFit>,
    /// No usable rate: too few points above the floor, or no `t_e`.
    pub rate_degenerate: bool,
}

pub fn theorem1_verdict(
    trace: &SimulationTrace,
    theta_star: &[f64],
    slack: f64,
) -> Result<Theorem1Verdict> {
    let m = trace.n + 1;
    if theta_star.len() != m {
        return Err(Error::dim("theorem1_verdict", "θ* must have n+1 entries"));
    }
    let tilde: Vec<Vec<f64>> = trace
        .samples
        .iter()
        .map(|s| {
            s.theta_hat
                .iter()
                .zip(theta_star)
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();
    let mut max_violation = vec![0.0_f64; m];
    let mut running = vec![f64::INFINITY; m];
    for tt in &tilde {
        for i in 0..m {
            let v = tt[i].abs();
            max_violation[i] = max_violation[i].max(v - running[i]);
            running[i] = running[i].min(v);
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let times = trace.times();
    let theta_norm: Vec<f64> = tilde.iter().map(|v| norm(v)).collect();
    let xi: Option<Vec<f64>> = trace.has_reference().then(|| {
        trace
            .samples
            .iter()
            .zip(&tilde)
            .map(|(s, tt)| {
                let e: Vec<f64> = s.x.iter().zip(&s.xref).map(|(a, b)| a - b).collect();
                norm(&[e, tt.clone()].concat())
            })
            .collect()
    });
    let t_e = detect_t_e(trace);
    let theta_rate = t_e.and_then(|te| fit_log_rate(&times, &theta_norm, te, RATE_FLOOR));
    let xi_rate = match (&xi, t_e) {
        (Some(x), Some(te)) => fit_log_rate(&times, x, te, RATE_FLOOR),
        _ => None,
    };
    Ok(Theorem1Verdict {
        monotone: max_violation.iter().all(|&v| v <= slack),
        max_violation,
        slack,
        sup_xi: xi.map(|x| x.into_iter().fold(0.0, f64::max)),
        t_e,
        rate_degenerate: theta_rate.is_none(),
        theta_rate,
        xi_rate,
    })
}

/// Excitation levels of `Φ̄`, `φ̄`, `φ`, `Δ` over `[t_r⁺, t_e]`, the
/// memory-regressor bounds and, given `C`, the lower-bound check.
pub fn analyze(trace: &SimulationTrace, opts: &AnalysisOptions) -> Result<ExcitationReport> {
    if trace.len() < 2 {
        return Err(Error::EmptyWindow("trace has fewer than 2 samples".into()));
    }
    let n = trace.n;
    let times = trace.times();
    let t_r_plus = times[0];
    let t_e = detect_t_e(trace).filter(|&te| te > t_r_plus);
    let window = (t_r_plus, t_e.unwrap_or(*times.last().expect("non-empty")));
    let mut warnings = Vec::new();
    if t_e.is_none() {
        warnings.push("Ω never settled; excitation window is the whole trace".into());
    }

    let vector_record = |name: &str, rows: Vec<Vec<f64>>| -> Result<SignalExcitation> {
        let g = gram(&times, &rows, window)?;
        let eig = symmetric_eigenvalues(&g)?;
        let lo = eig[0].max(0.0);
        let hi = *eig.last().expect("non-empty");
        Ok(SignalExcitation {
            name: name.into(),
            dim: rows[0].len(),
            alpha: Level::from_f64(lo),
            fe: hi > 0.0 && lo > RANK_TOL * hi,
        })
    };
    let phibar_rows: Vec<Vec<f64>> = trace.samples.iter().map(|s| s.phi_bar.clone()).collect();
    let filt_rows: Vec<Vec<f64>> = phibar_rows.iter().map(|r| r[..n + 1].to_vec()).collect();
    let phi: Vec<f64> = trace.samples.iter().map(|s| s.phi).collect();
    let phi_alpha = fe_level_scalar(&times, &phi, window)?;
    let (lo, hi) = window_indices(&times, window)?;
    let ln_d2: Vec<f64> = trace.samples[lo..hi]
        .iter()
        .map(|s| 2.0 * s.delta_wide().ln_abs())
        .collect();
    let delta_alpha = Level::from_ln(ln_trapezoid(&times[lo..hi], &ln_d2));

    let phibar = vector_record("phibar", phibar_rows)?;
    let signals = vec![
        vector_record("Phibar", filt_rows)?,
        phibar.clone(),
        SignalExcitation {
            name: "phi".into(),
            dim: 1,
            alpha: Level::from_f64(phi_alpha),
            fe: phi_alpha > 0.0,
        },
        SignalExcitation {
            name: "Delta".into(),
            dim: 1,
            alpha: delta_alpha,
            fe: delta_alpha.is_positive(),
        },
    ];

    let omega_bounds = t_e.map(|te| {
        let tail = trace.samples.iter().filter(|s| s.t >= te);
        let (mut min, mut max) = (None::<Wide>, None::<Wide>);
        for s in tail {
            let w = s.omega_wide();
            if min.is_none_or(|m| w.cmp_abs(&m).is_lt()) {
                min = Some(w);
            }
            if max.is_none_or(|m| w.cmp_abs(&m).is_gt()) {
                max = Some(w);
            }
        }
        (
            Level::from_wide(min.unwrap_or(Wide::ZERO)),
            Level::from_wide(max.unwrap_or(Wide::ZERO)),
        )
    });

    let growth = growth_envelope(trace);
    if let (Some(g), Some(sigma)) = (growth, opts.sigma) {
        if sigma <= 2.0 * g.c2 {
            warnings.push(format!(
                "σ = {sigma} ≤ 2c₂ = {}; Ω may be unbounded",
                2.0 * g.c2
            ));
        }
    }

    let a16 = match opts.ln_abs_c {
        Some(ln_c) => match a16_bound_check(trace, crate::param::regressor_exponent(n), ln_c) {
            Ok(r) => Some(r),
            Err(Error::NoQualifyingInterval) => {
                warnings.push("φ vanishes on the excitation window; lower bound is vacuous".into());
                None
            }
            Err(e) => return Err(e),
        },
        None => None,
    };

    let fe_satisfied = t_e.is_some() && signals.iter().all(|s| s.fe);
    Ok(ExcitationReport {
        alpha: phibar.alpha.value,
        t_r_plus,
        t_e,
        fe_satisfied,
        signals,
        omega_bounds,
        growth,
        a16,
        warnings,
    })
}
