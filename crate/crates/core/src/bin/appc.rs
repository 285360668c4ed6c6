use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use appc::scenario::{self, LawSelection, RunOverrides};
use appc::Error;

#[derive(Parser)]
#[command(
    name = "appc",
    version,
    about = "Direct adaptive pole placement experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum LawArg {
    Memory,
    Baseline,
    Both,
}

impl From<LawArg> for LawSelection {
    fn from(l: LawArg) -> Self {
        match l {
            LawArg::Memory => LawSelection::Memory,
            LawArg::Baseline => LawSelection::Baseline,
            LawArg::Both => LawSelection::Both,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario; writes trace.csv and report.json.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        #[arg(long, value_enum)]
        law: Option<LawArg>,
    },
    /// Print the ideal controller parameters as JSON.
    Oracle { scenario: PathBuf },
    /// Analyze the excitation of a recorded trace; prints JSON.
    CheckFe {
        trace: PathBuf,
        /// Scenario of the run, enabling the lower bound on ∫Δ².
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Run the memory and baseline laws side by side.
    CompareLaws {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &Path) -> anyhow::Result<scenario::Scenario> {
    scenario::load_scenario(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Simulate {
            scenario,
            out,
            dt,
            t_end,
            law,
        } => {
            let sc = load(&scenario)?;
            let ov = RunOverrides {
                dt,
                t_end,
                law: law.map(Into::into),
            };
            let report = scenario::cmd_simulate(&sc, &out, &ov)?;
            for r in &report.runs {
                let f = r.final_state.as_ref();
                println!(
                    "{:?}: t = {:.3}, θ̂ = {:?}, ‖θ̃‖ = {:.3e}, ‖e_ref‖ = {:.3e}",
                    r.law,
                    f.map_or(0.0, |f| f.t),
                    f.map(|f| &f.theta_hat),
                    f.and_then(|f| f.theta_tilde_norm).unwrap_or(f64::NAN),
                    f.and_then(|f| f.e_ref_norm).unwrap_or(f64::NAN),
                );
            }
            println!("wrote {}", out.display());
        }
        Cmd::Oracle { scenario } => {
            println!("{}", scenario::cmd_oracle(&load(&scenario)?)?);
        }
        Cmd::CheckFe { trace, scenario } => {
            let sc = scenario.as_deref().map(load).transpose()?;
            let report = scenario::cmd_check_fe(&trace, sc.as_ref())
                .with_context(|| format!("analyzing {}", trace.display()))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::CompareLaws { scenario, out } => {
            let report = scenario::cmd_compare_laws(&load(&scenario)?, &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Divergence { .. }) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
