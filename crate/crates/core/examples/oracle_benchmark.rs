//! Ideal controller parameters from the true plant, by two routes.
//!
//! The Sylvester route solves `MΓ − AM = Bhᵀ` and reads `K_x = hᵀM⁻¹`; the
//! second matches the coefficients of `det(λI − A − BK)` to those of `Γ`.
//!
//! ```bash
//! cargo run --example oracle_benchmark
//! ```

use appc::matrix::char_poly;
use appc::models::PlantModel;
use appc::oracle;
use appc::param;
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
    println!("M     = {:?}", ideal.m.to_rows());
    println!("K_x   = {:?}", ideal.k_x);
    println!("K_r   = {}", ideal.k_r);
    println!("A_Σ   = {:?}", ideal.a_sigma.to_rows());
    println!("char_poly(A_Σ) = {:?}", char_poly(&ideal.a_sigma)?);
    println!("residuals: {:?}", ideal.residuals(&plant, &gamma));

    let k = oracle::gain_by_coefficient_matching(&plant.a, &plant.b, &char_poly(&gamma)?)?;
    println!("coefficient matching K_x = {k:?}");

    let sc = param::structural_constants(&plant, &ideal, &gamma, &plant.h)?;
    println!(
        "C1 = {}, C2 = {:.6e}, C3 = {}, C = {:.6e}, q = {}",
        sc.c1, sc.c2, sc.c3, sc.c, sc.q
    );
    Ok(())
}
