//! Scenario files and the experiment commands behind the `appc` binary.
//!
//! A scenario is JSON with matrices as row-major nested arrays:
//!
//! ```json
//! {
//!   "name": "benchmark",
//!   "plant": { "matrices": { "a": [[5, -2], [4, 2]], "b": [0, 2] } },
//!   "h": [1, 0],
//!   "x0": [0, -1],
//!   "gamma": [[-4, 1], [-8, 0]],
//!   "theta0": [0, 0, 2],
//!   "reference": { "steps": [[0, 1]] },
//!   "estimator": { "l": 1, "k": 10, "sigma": 5, "gamma0": 1, "gamma1": 0 }
//! }
//! ```
//!
//! `plant` may instead be `{ "strict_feedback": { "w": [[…], …], "b": 2 } }`.
//! `chi0` defaults to zeros, `estimator` and `sim` to their defaults and
//! `law` to `"memory"`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::Law;
use crate::error::{Error, Result};
use crate::excitation::{self, AnalysisOptions, ExcitationReport, RateFit, Theorem1Verdict};
use crate::matrix::{char_poly, Mat};
use crate::models::{ModalModel, PlantModel, ReferenceSignal};
use crate::oracle::{self, IdealSolution, OracleResiduals};
use crate::param::{self, Stage2, StructuralConstants};
use crate::poly;
use crate::sim::{self, Divergence, EstimatorConfig, SimConfig, SimRun, SimulationTrace};

/// Monotonicity slack used in simulation reports.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantSpec {
    /// Rows `w_i` of the strict-feedback form and input gain `b`.
    StrictFeedback { w: Vec<Vec<f64>>, b: Option<f64> },
    Matrices {
        a: Vec<Vec<f64>>,
        b: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LawSelection {
    #[default]
    Memory,
    Baseline,
    Both,
}

impl LawSelection {
    pub fn laws(self) -> Vec<Law> {
        match self {
            LawSelection::Memory => vec![Law::Memory],
            LawSelection::Baseline => vec![Law::Baseline],
            LawSelection::Both => vec![Law::Memory, Law::Baseline],
        }
    }
}

fn default_reference() -> ReferenceSignal {
    ReferenceSignal::constant(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub plant: PlantSpec,
    pub h: Vec<f64>,
    pub x0: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi0: Option<Vec<f64>>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub theta0: Vec<f64>,
    #[serde(default = "default_reference")]
    pub reference: ReferenceSignal,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub law: LawSelection,
}

impl Scenario {
    /// Parses JSON; syntax errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn plant(&self) -> Result<PlantModel> {
        match &self.plant {
            PlantSpec::StrictFeedback { w, b } => {
                let b = b.ok_or_else(|| {
                    Error::Validation("strict_feedback plant is missing the input gain `b`".into())
                })?;
                PlantModel::strict_feedback(w, b, self.h.clone(), self.x0.clone())
            }
            PlantSpec::Matrices { a, b } => {
                let b = b
                    .clone()
                    .ok_or_else(|| Error::Validation("matrices plant is missing `b`".into()))?;
                PlantModel::new(Mat::from_rows(a)?, b, self.h.clone(), self.x0.clone())
            }
        }
    }

    pub fn gamma_mat(&self) -> Result<Mat> {
        Mat::from_rows(&self.gamma)
    }

    pub fn modal(&self) -> Result<ModalModel> {
        let chi0 = self.chi0.clone().unwrap_or_else(|| vec![0.0; self.n()]);
        ModalModel::new(self.gamma_mat()?, chi0)
    }

    /// Hard checks; anything that would make the run meaningless is an error.
    pub fn validate(&self) -> Result<()> {
        let plant = self.plant()?;
        let n = plant.n();
        let modal = self.modal()?;
        if modal.gamma.shape() != (n, n) {
            return Err(Error::Validation(format!("Γ must be {n}×{n}")));
        }
        if self.theta0.len() != n + 1 {
            return Err(Error::Validation(format!(
                "theta0 has {} entries, expected n+1 = {}",
                self.theta0.len(),
                n + 1
            )));
        }
        if self.theta0[n] == 0.0 {
            return Err(Error::Validation(
                "theta0: initial K̂_r must be nonzero".into(),
            ));
        }
        if self.theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta0"));
        }
        Stage2::new(&modal.gamma, &plant.h)
            .map_err(|_| Error::Validation("Γ must be invertible".into()))?;
        self.estimator.validate()?;
        self.sim.validate()?;
        self.reference.validate()
    }

    /// Conditions for the ideal controller to exist. The adaptive loop does
    /// not rely on them, so violations are reported, not rejected.
    pub fn warnings(&self) -> Result<Vec<String>> {
        let plant = self.plant()?;
        let modal = self.modal()?;
        let mut w = Vec::new();
        if !plant.is_controllable() {
            w.push("(A, B) is not controllable".into());
        }
        if !crate::models::observable(&modal.gamma, &plant.h) {
            w.push("(Γ, hᵀ) is not observable".into());
        }
        if !modal.is_hurwitz() {
            w.push("Γ is not Hurwitz".into());
        }
        let (pa, pg) = (char_poly(&plant.a)?, char_poly(&modal.gamma)?);
        if !poly::coprime(&pa, &pg, 1e-8) {
            w.push("A and Γ share an eigenvalue".into());
        }
        if self.sim.dt * self.sim.record_stride as f64 > 1e-2 {
            w.push("record spacing exceeds 1e-2 s; trace integrals lose accuracy".into());
        }
        Ok(w)
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let sc = Scenario::from_json(&text)?;
    sc.validate()?;
    Ok(sc)
}

/// Oracle output for a scenario.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub theta_star: Vec<f64>,
    pub k_x: Vec<f64>,
    pub k_r: f64,
    pub m: Vec<Vec<f64>>,
    pub a_sigma: Vec<Vec<f64>>,
    pub b_ref: Vec<f64>,
    pub char_poly_gamma: Vec<f64>,
    pub char_poly_a_sigma: Vec<f64>,
    pub residuals: OracleResiduals,
    /// `K_x` by characteristic-polynomial matching, as a cross-check.
    pub k_x_coefficient_matching: Option<Vec<f64>>,
    pub structural: Option<StructuralConstants>,
    pub ln_abs_c: Option<f64>,
}

pub fn oracle_report(sc: &Scenario) -> Result<OracleReport> {
    let plant = sc.plant()?;
    let gamma = sc.gamma_mat()?;
    let ideal = oracle::solve(&plant, &gamma)?;
    let cp_g = char_poly(&gamma)?;
    let structural = param::structural_constants(&plant, &ideal, &gamma, &plant.h).ok();
    Ok(OracleReport {
        theta_star: ideal.theta_star.clone(),
        k_x: ideal.k_x.clone(),
        k_r: ideal.k_r,
        m: ideal.m.to_rows(),
        a_sigma: ideal.a_sigma.to_rows(),
        b_ref: ideal.b_ref.clone(),
        char_poly_a_sigma: char_poly(&ideal.a_sigma)?,
        residuals: ideal.residuals(&plant, &gamma),
        k_x_coefficient_matching: oracle::gain_by_coefficient_matching(&plant.a, &plant.b, &cp_g)
            .ok(),
        char_poly_gamma: cp_g,
        ln_abs_c: structural.map(|s| s.ln_abs_c(plant.n())),
        structural,
    })
}

pub fn cmd_oracle(sc: &Scenario) -> Result<String> {
    Ok(serde_json::to_string_pretty(&oracle_report(sc)?)?)
}

/// End-of-run errors.
#[derive(Debug, Clone, Serialize)]
pub struct FinalState {
    pub t: f64,
    pub theta_hat: Vec<f64>,
    pub theta_tilde: Option<Vec<f64>>,
    /// `‖θ̂ − θ*‖∞ / ‖θ*‖∞`
    pub theta_rel_err_inf: Option<f64>,
    pub theta_tilde_norm: Option<f64>,
    pub e_ref_norm: Option<f64>,
}

impl FinalState {
    pub fn of(trace: &SimulationTrace) -> Option<Self> {
        let i = trace.len().checked_sub(1)?;
        let s = &trace.samples[i];
        let tt = trace.theta_tilde(i);
        let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Some(Self {
            t: s.t,
            theta_hat: s.theta_hat.clone(),
            theta_rel_err_inf: tt
                .as_ref()
                .zip(trace.theta_star.as_ref())
                .map(|(tt, ts)| inf(tt) / inf(ts)),
            theta_tilde_norm: tt.as_deref().map(norm),
            theta_tilde: tt,
            e_ref_norm: trace.e_ref(i).as_deref().map(norm),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub law: Law,
    pub trace_file: String,
    pub divergence: Option<Divergence>,
    pub final_state: Option<FinalState>,
    /// Only for the memory law, whose convergence guarantees it checks.
    pub theorem1: Option<Theorem1Verdict>,
    pub excitation: Option<ExcitationReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub name: Option<String>,
    pub oracle: Option<OracleReport>,
    pub warnings: Vec<String>,
    pub runs: Vec<RunReport>,
}

/// Command-line overrides of the scenario's run settings.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOverrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub law: Option<LawSelection>,
}

impl RunOverrides {
    pub fn apply(&self, sc: &Scenario) -> Result<Scenario> {
        let mut sc = sc.clone();
        if let Some(dt) = self.dt {
            sc.sim.dt = dt;
        }
        if let Some(t) = self.t_end {
            sc.sim.t_end = t;
        }
        if let Some(l) = self.law {
            sc.law = l;
        }
        sc.validate()?;
        Ok(sc)
    }
}

/// Runs one law of a scenario.
pub fn run_law(sc: &Scenario, law: Law) -> Result<SimRun> {
    sim::simulate_with_oracle(
        &sc.plant()?,
        &sc.modal()?,
        &sc.estimator,
        law,
        &sc.theta0,
        &sc.sim,
        &sc.reference,
    )
}

fn analysis_options(sc: &Scenario, oracle: Option<&OracleReport>) -> AnalysisOptions {
    AnalysisOptions {
        ln_abs_c: oracle.and_then(|o| o.ln_abs_c),
        sigma: Some(sc.estimator.sigma),
    }
}

fn run_report(
    sc: &Scenario,
    law: Law,
    run: &SimRun,
    trace_file: String,
    oracle: Option<&OracleReport>,
) -> RunReport {
    let trace = &run.trace;
    let theorem1 = match (law, &trace.theta_star) {
        (Law::Memory, Some(ts)) => excitation::theorem1_verdict(trace, ts, MONOTONE_SLACK).ok(),
        _ => None,
    };
    RunReport {
        law,
        trace_file,
        divergence: run.divergence.clone(),
        final_state: FinalState::of(trace),
        theorem1,
        excitation: excitation::analyze(trace, &analysis_options(sc, oracle)).ok(),
    }
}

fn trace_name(law: Law, sel: LawSelection) -> &'static str {
    match (law, sel) {
        (Law::Baseline, LawSelection::Both) => "trace_baseline.csv",
        _ => "trace.csv",
    }
}

/// Simulates the selected law(s), writing `trace.csv` (plus
/// `trace_baseline.csv` for both laws) and `report.json` into `out_dir`.
/// Traces and report are written even when a run diverges; the divergence is
/// then returned as the error.
pub fn cmd_simulate(sc: &Scenario, out_dir: &Path, ov: &RunOverrides) -> Result<SimulationReport> {
    let sc = ov.apply(sc)?;
    std::fs::create_dir_all(out_dir)?;
    let oracle = oracle_report(&sc).ok();
    let mut runs = Vec::new();
    let mut diverged = None;
    for law in sc.law.laws() {
        let run = run_law(&sc, law)?;
        let name = trace_name(law, sc.law);
        run.trace.save_csv(&out_dir.join(name))?;
        if diverged.is_none() {
            diverged = run.divergence.clone();
        }
        runs.push(run_report(&sc, law, &run, name.into(), oracle.as_ref()));
    }
    let report = SimulationReport {
        name: sc.name.clone(),
        oracle,
        warnings: sc.warnings()?,
        runs,
    };
    write_json(&out_dir.join("report.json"), &report)?;
    match diverged {
        Some(d) => Err(Error::Divergence {
            t: d.t,
            reason: d.reason,
        }),
        None => Ok(report),
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

/// Analyzes a recorded trace. With the scenario the lower bound on `∫Δ²`
/// is checked too, since it needs the plant's structural constant.
pub fn cmd_check_fe(trace_path: &Path, sc: Option<&Scenario>) -> Result<ExcitationReport> {
    let trace = SimulationTrace::load_csv(trace_path)?;
    let opts = match sc {
        Some(sc) => analysis_options(sc, oracle_report(sc).ok().as_ref()),
        None => AnalysisOptions::default(),
    };
    excitation::analyze(&trace, &opts)
}

#[derive(Debug, Clone, Serialize)]
pub struct LawSummary {
    pub law: Law,
    pub trace_file: String,
    pub divergence: Option<Divergence>,
    pub final_theta_tilde_norm: Option<f64>,
    pub theta_rate: Option<RateFit>,
    /// Largest rise of any `|θ̃_i|` above its running minimum.
    pub max_monotone_violation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub name: Option<String>,
    pub theta_star: Option<Vec<f64>>,
    pub memory: LawSummary,
    pub baseline: LawSummary,
}

fn summarize(law: Law, run: &SimRun, trace_file: &str) -> LawSummary {
    let tr = &run.trace;
    let verdict = tr
        .theta_star
        .as_ref()
        .and_then(|ts| excitation::theorem1_verdict(tr, ts, MONOTONE_SLACK).ok());
    LawSummary {
        law,
        trace_file: trace_file.into(),
        divergence: run.divergence.clone(),
        final_theta_tilde_norm: FinalState::of(tr).and_then(|f| f.theta_tilde_norm),
        theta_rate: verdict.as_ref().and_then(|v| v.theta_rate),
        max_monotone_violation: verdict.map(|v| v.max_violation.into_iter().fold(0.0, f64::max)),
    }
}

/// Runs both laws on the same scenario concurrently and writes
/// `trace_memory.csv`, `trace_baseline.csv` and `compare.json`. A diverging
/// baseline run is a result here, not an error.
pub fn cmd_compare_laws(sc: &Scenario, out_dir: &Path) -> Result<CompareReport> {
    std::fs::create_dir_all(out_dir)?;
    let (mem, base) = std::thread::scope(|s| {
        let m = s.spawn(|| run_law(sc, Law::Memory));
        let b = s.spawn(|| run_law(sc, Law::Baseline));
        (
            m.join().expect("memory run panicked"),
            b.join().expect("baseline run panicked"),
        )
    });
    let (mem, base) = (mem?, base?);
    let files = ["trace_memory.csv", "trace_baseline.csv"];
    mem.trace.save_csv(&out_dir.join(files[0]))?;
    base.trace.save_csv(&out_dir.join(files[1]))?;
    let report = CompareReport {
        name: sc.name.clone(),
        theta_star: mem.trace.theta_star.clone(),
        memory: summarize(Law::Memory, &mem, files[0]),
        baseline: summarize(Law::Baseline, &base, files[1]),
    };
    write_json(&out_dir.join("compare.json"), &report)?;
    Ok(report)
}

/// Default output directory for a scenario file: `out/<stem>`.
pub fn default_out_dir(scenario_path: &Path) -> PathBuf {
    let stem = scenario_path
        .file_stem()
        .map_or("run".into(), |s| s.to_string_lossy());
    PathBuf::from("out").join(stem.as_ref())
}

/// The oracle's ideal solution for a scenario, if one exists.
pub fn ideal_solution(sc: &Scenario) -> Result<IdealSolution> {
    oracle::solve(&sc.plant()?, &sc.gamma_mat()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BENCH: &str = include_str!("../scenarios/benchmark.json");

    #[test]
    fn benchmark_loads() {
        let sc = Scenario::from_json(BENCH).unwrap();
        sc.validate().unwrap();
        let p = sc.plant().unwrap();
        assert_eq!(p.a.to_rows(), vec![vec![5.0, -2.0], vec![4.0, 2.0]]);
        assert_eq!(p.b, vec![0.0, 2.0]);
        assert_eq!(sc.theta0, vec![0.0, 0.0, 2.0]);
        assert_eq!(sc.estimator.sigma, 5.0);
        assert_eq!(sc.estimator.k, 10.0);
        assert!(sc.warnings().unwrap().is_empty());
    }

    #[test]
    fn round_trip() {
        let sc = Scenario::from_json(BENCH).unwrap();
        let back = Scenario::from_json(&sc.to_json().unwrap()).unwrap();
        assert_eq!(sc, back);
    }

    #[test]
    fn parse_error_has_position() {
        let err = Scenario::from_json("{\n  \"h\": [1, 0],\n  oops\n}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_b_is_validation_error() {
        let text = BENCH.replace(
            r#"{ "matrices": { "a": [[5, -2], [4, 2]], "b": [0, 2] } }"#,
            r#"{ "strict_feedback": { "w": [[5, -3], [4, 2]] } }"#,
        );
        assert_ne!(text, BENCH);
        let sc = Scenario::from_json(&text).unwrap();
        assert!(matches!(sc.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn zero_reference_gain_rejected() {
        let mut sc = Scenario::from_json(BENCH).unwrap();
        sc.theta0 = vec![1.0, 1.0, 0.0];
        assert!(matches!(sc.validate(), Err(Error::Validation(m)) if m.contains("K̂_r")));
    }

    #[test]
    fn shared_spectrum_is_a_warning() {
        let mut sc = Scenario::from_json(BENCH).unwrap();
        sc.gamma = vec![vec![5.0, -2.0], vec![4.0, 2.0]];
        sc.validate().unwrap();
        let w = sc.warnings().unwrap();
        assert!(w.iter().any(|m| m.contains("share")));
        assert!(w.iter().any(|m| m.contains("Hurwitz")));
    }

    #[test]
    fn oracle_on_benchmark() {
        let sc = Scenario::from_json(BENCH).unwrap();
        let o = oracle_report(&sc).unwrap();
        assert!((o.k_x[0] - 11.25).abs() < 1e-12 && (o.k_r + 2.0).abs() < 1e-12);
        let cm = o.k_x_coefficient_matching.unwrap();
        assert!((cm[1] + 5.5).abs() < 1e-12);
        assert_eq!(o.structural.unwrap().q, 29);
    }
}
