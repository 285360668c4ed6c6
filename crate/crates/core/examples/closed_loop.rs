//! The benchmark closed loop, run from its scenario file.
//!
//! ```bash
//! cargo run --release --example closed_loop [-- path/to/scenario.json]
//! ```

use std::path::PathBuf;

use appc::excitation;
use appc::scenario::{self, FinalState};

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/scenarios/benchmark.json"
            ))
        });
    let sc = scenario::load_scenario(&path)?;
    for w in sc.warnings()? {
        println!("warning: {w}");
    }

    let run = scenario::run_law(&sc, appc::adapt::Law::Memory)?;
    if let Some(d) = &run.divergence {
        println!("diverged at t = {}: {}", d.t, d.reason);
    }
    let trace = &run.trace;
    println!("{:>6} {:>24} {:>12} {:>12}", "t", "θ̂", "‖θ̃‖", "‖e_ref‖");
    let step = (trace.len() / 15).max(1);
    for i in (0..trace.len()).step_by(step) {
        let s = &trace.samples[i];
        let norm = |v: Option<Vec<f64>>| {
            v.map_or(f64::NAN, |v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        };
        println!(
            "{:>6.2} {:>24} {:>12.3e} {:>12.3e}",
            s.t,
            format!("{:.4?}", s.theta_hat),
            norm(trace.theta_tilde(i)),
            norm(trace.e_ref(i)),
        );
    }
    if let Some(f) = FinalState::of(trace) {
        println!("final θ̂ = {:?}", f.theta_hat);
    }
    if let Some(ts) = &trace.theta_star {
        let v = excitation::theorem1_verdict(trace, ts, scenario::MONOTONE_SLACK)?;
        println!(
            "monotone: {} (max violation {:.1e}), t_e = {:?}, rate = {:?}",
            v.monotone,
            v.max_violation.iter().fold(0.0_f64, |m, x| m.max(*x)),
            v.t_e,
            v.theta_rate.map(|r| r.slope)
        );
    }
    Ok(())
}
