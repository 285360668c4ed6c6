//! The Stage-2 chain on exact inputs `(z_A, z_B, φ) = (φA, φB, φ)`.
//!
//! The output satisfies `Y = Δθ` and `Δ = C·φ^q` with `q = n⁴+n³+n²+1`.
//!
//! ```bash
//! cargo run --example stage2_identity
//! ```

use appc::models::PlantModel;
use appc::oracle;
use appc::param::{self, ScalarizedAB, Stage2};
use appc::Mat;

fn main() -> appc::Result<()> {
    let plant = PlantModel::new(
        Mat::from_rows(&[vec![5.0, -2.0], vec![4.0, 2.0]])?,
        vec![0.0, 2.0],
        vec![1.0, 0.0],
        vec![0.0, -1.0],
    )?;
    let gamma = Mat::from_rows(&[vec![-4.0, 1.0], vec![-8.0, 0.0]])?;
    let ideal = oracle::solve(&plant, &gamma)?;
    let sc = param::structural_constants(&plant, &ideal, &gamma, &plant.h)?;
    let stage2 = Stage2::new(&gamma, &plant.h)?;

    for phi in [1.0, 0.5, -2.0, 1e-12] {
        let ab = ScalarizedAB {
            z_a: plant.a.scale(phi),
            z_b: plant.b.iter().map(|b| phi * b).collect(),
            phi,
            z_x0: vec![0.0; 2],
        };
        let rp = stage2.parameterize(&ab)?;
        let ratio: Vec<f64> = rp.y.iter().map(|y| y / rp.delta).collect();
        let ln_pred = sc.ln_abs_c(2) + sc.q as f64 * phi.abs().ln();
        println!(
            "φ = {phi:>7}: Y/Δ = {ratio:.12?}, log10|Δ| = {:.6}, log10|C·φ^q| = {:.6}",
            rp.delta_wide().ln_abs() / std::f64::consts::LN_10,
            ln_pred / std::f64::consts::LN_10,
        );
    }
    println!("θ* = {:?}", ideal.theta_star);
    Ok(())
}
