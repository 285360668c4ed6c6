//! Finite versus persistent excitation on the benchmark run.
//!
//! A constant setpoint excites the loop only during the transient: the
//! excitation over `[0, t_e]` is positive, while the level over later sliding
//! windows decays toward zero.
//!
//! ```bash
//! cargo run --release --example excitation_report
//! ```

use appc::adapt::Law;
use appc::excitation::{self, AnalysisOptions};
use appc::scenario;

fn main() -> anyhow::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/benchmark.json");
    let mut sc = scenario::load_scenario(path.as_ref())?;
    sc.sim.t_end = 12.0;
    let run = scenario::run_law(&sc, Law::Memory)?;
    let trace = &run.trace;

    let oracle = scenario::oracle_report(&sc)?;
    let report = excitation::analyze(
        trace,
        &AnalysisOptions {
            ln_abs_c: oracle.ln_abs_c,
            sigma: Some(sc.estimator.sigma),
        },
    )?;
    println!(
        "t_e = {:?}, FE satisfied: {}",
        report.t_e, report.fe_satisfied
    );
    for s in &report.signals {
        println!(
            "  {:<7} dim {}  α: log10 = {:?}",
            s.name, s.dim, s.alpha.log10
        );
    }
    if let Some(a) = &report.a16 {
        println!(
            "∫Δ² on [{:.3}, {:.3}]: log10 = {:.2} ≥ bound {:.2}: {}",
            a.t_a, a.t_b, a.log10_lhs_window, a.log10_bound, a.holds
        );
    }

    let times = trace.times();
    let rows: Vec<Vec<f64>> = trace.samples.iter().map(|s| s.phi_bar.clone()).collect();
    println!("sliding 2 s windows of φ̄:");
    for w in excitation::pe_check_windowed(&times, &rows, 2.0, 2.0)? {
        println!(
            "  [{:>4.1}, {:>4.1}]  α = {:.3e}",
            w.t_start, w.t_end, w.alpha
        );
    }
    Ok(())
}
