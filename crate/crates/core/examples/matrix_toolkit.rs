//! Small dense linear algebra used throughout the crate.
//!
//! ```bash
//! cargo run --example matrix_toolkit
//! ```

use appc::matrix::{adjugate, char_poly, det, kron, symmetric_eigenvalues, unvec, vec};
use appc::poly;
use appc::Mat;

fn main() -> appc::Result<()> {
    let a = Mat::from_rows(&[vec![5.0, -2.0], vec![4.0, 2.0]])?;

    let adj = adjugate(&a)?;
    println!("det(A) = {}", det(&a)?);
    println!("adj(A) = {:?}", adj.to_rows());
    println!("adj(A)·A = {:?}", (&adj * &a).to_rows());

    // vec(AXB) = (Bᵀ ⊗ A) vec(X)
    let x = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]])?;
    let b = Mat::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.5]])?;
    let lhs = vec(&(&(&a * &x) * &b));
    let rhs = &kron(&b.transpose(), &a) * &vec(&x);
    println!("vec(AXB)      = {:?}", lhs.as_slice());
    println!("(Bᵀ⊗A)vec(X)  = {:?}", rhs.as_slice());
    println!("unvec round trip: {}", unvec(&vec(&x), 2, 2)? == x);

    let cp = char_poly(&a)?;
    println!("char_poly(A) = {cp:?}, Hurwitz: {}", poly::is_hurwitz(&cp));
    let gamma = Mat::from_rows(&[vec![-4.0, 1.0], vec![-8.0, 0.0]])?;
    let cg = char_poly(&gamma)?;
    println!("char_poly(Γ) = {cg:?}, Hurwitz: {}", poly::is_hurwitz(&cg));
    println!("spectra disjoint: {}", poly::coprime(&cp, &cg, 1e-8));

    let s = Mat::from_rows(&[
        vec![2.0, 1.0, 0.0],
        vec![1.0, 2.0, 1.0],
        vec![0.0, 1.0, 2.0],
    ])?;
    println!("eig(S) = {:?}", symmetric_eigenvalues(&s)?);
    Ok(())
}
