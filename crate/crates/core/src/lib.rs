//! Direct adaptive pole placement for single-input strict-feedback linear
//! plants with unmatched uncertainty.
//!
//! The controller `u = θ̂ᵀ[xᵀ, r]ᵀ` is tuned online from measured `x` and `u`
//! only. A two-stage inverse parameterization turns the plant data into a
//! scalar regression `Y = Δθ` on the ideal controller parameters, and an
//! exponential-forgetting memory regressor drives `θ̂` to `θ` with
//! element-wise monotone errors once the regressor has been excited on a
//! finite interval.
//!
//! Module map:
//! - [`matrix`], [`poly`]: small dense linear algebra
//! - [`models`]: plant, modal and reference models, control law
//! - [`param`]: filtering, DREM mixing and the regression on `θ`
//! - [`adapt`]: memory regressor, gain schedule, adaptive laws
//! - [`oracle`]: ground-truth `M`, `K_x`, `K_r` from the true plant
//! - [`sim`]: RK4 closed-loop simulator and trace I/O
//! - [`wide`]: extended-exponent values for the regression and memory
//! - [`excitation`]: excitation levels and convergence verdicts over traces
//! - [`scenario`]: scenario files and the experiment commands
//!
//! Examples, one per capability:
//!
//! ```bash
//! cargo run --example matrix_toolkit              # adjugate, Kronecker, char poly
//! cargo run --example oracle_benchmark            # ideal gains, structural constants
//! cargo run --example stage2_identity             # Y = Δθ and Δ = C·φ^q on exact inputs
//! cargo run --release --example closed_loop       # benchmark run from its scenario file
//! cargo run --release --example compare_laws      # memory law against gradient law
//! cargo run --release --example excitation_report # finite vs persistent excitation
//! cargo run --release --example third_order       # n = 3 plant built from its rows
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod error;
pub mod excitation;
pub mod matrix;
pub mod models;
pub mod oracle;
pub mod param;
pub mod poly;
pub mod scenario;
pub mod sim;
pub mod wide;

pub use error::{Error, Result};
pub use matrix::Mat;
