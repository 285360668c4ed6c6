//! Memory-regressor law against the plain gradient law on identical data.
//!
//! `Δ` is tiny, so the gradient law barely moves θ̂ and the open-loop
//! unstable plant runs away. The memory law normalizes by `Ω` and converges.
//!
//! ```bash
//! cargo run --release --example compare_laws
//! ```

use appc::scenario::{self, Scenario};

fn main() -> anyhow::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/benchmark.json");
    let mut sc: Scenario = scenario::load_scenario(path.as_ref())?;
    sc.sim.t_end = 10.0;
    let out = std::env::temp_dir().join("appc_compare_laws");
    let report = scenario::cmd_compare_laws(&sc, &out)?;
    for s in [&report.memory, &report.baseline] {
        println!(
            "{:?}: final ‖θ̃‖ = {:.3e}, rate = {:?}, diverged = {}",
            s.law,
            s.final_theta_tilde_norm.unwrap_or(f64::NAN),
            s.theta_rate.map(|r| r.slope),
            s.divergence.is_some()
        );
    }
    println!("traces in {}", out.display());
    Ok(())
}
