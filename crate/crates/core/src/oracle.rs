//! Ground-truth controller parameters computed from the true plant.
//!
//! Never consulted by the adaptive pipeline. Used for acceptance checks,
//! post-hoc parameter errors and the ideal input `u*`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{char_poly, det, inverse, kron, solve_linear, unvec, vec, Mat};
use crate::models::{dot, PlantModel, ReferenceModel};

#[derive(Debug, Clone, PartialEq)]
pub struct IdealSolution {
    pub m: Mat,
    pub a_sigma: Mat,
    pub k_x: Vec<f64>,
    pub k_r: f64,
    pub theta_star: Vec<f64>,
    pub b_ref: Vec<f64>,
}

/// Residuals of the defining equations, all expected to be ~0.
#[derive(Debug, Clone, Serialize)]
pub struct OracleResiduals {
    /// ‖MΓ − AM − Bhᵀ‖_F
    pub sylvester: f64,
    /// ‖hᵀ − K_x M‖
    pub output_map: f64,
    /// max |char_poly(A_Σ) − char_poly(Γ)| per coefficient
    pub char_poly: f64,
    /// |hᵀ(−A_Σ)⁻¹B·K_r − 1|
    pub dc_gain: f64,
}

/// `−I ⊗ A + Γᵀ ⊗ I`, the vectorized Sylvester operator of `MΓ − AM`.
pub fn sylvester_operator(a: &Mat, gamma: &Mat) -> Mat {
    let n = a.rows();
    let ident = Mat::identity(n);
    &(-&kron(&ident, a)) + &kron(&gamma.transpose(), &ident)
}

/// Solves `MΓ − AM = Bhᵀ` for the transformation `M`.
pub fn solve_m(a: &Mat, b: &[f64], gamma: &Mat, h: &[f64]) -> Result<Mat> {
    let n = a.rows();
    if !a.is_square() || gamma.shape() != a.shape() || b.len() != n || h.len() != n {
        return Err(Error::dim(
            "solve_m",
            "A, Γ must be n×n and B, h of length n",
        ));
    }
    let op = sylvester_operator(a, gamma);
    let rhs = vec(&(&Mat::col_vec(b) * &Mat::row_vec(h)));
    let vec_m = match solve_linear(&op, &rhs) {
        Ok(v) => v,
        Err(Error::Singular { det }) => return Err(Error::SharedSpectrum { det }),
        Err(e) => return Err(e),
    };
    let m = unvec(&vec_m, n, n)?;
    let d = det(&m)?;
    let scale = m.norm_inf().powi(n as i32);
    if d.abs() <= 1e-12 * scale || d == 0.0 {
        return Err(Error::SingularTransform { det: d });
    }
    Ok(m)
}

/// `K_x = hᵀM⁻¹`, `A_Σ = A + BK_x`, `K_r = −(hᵀA_Σ⁻¹B)⁻¹`.
pub fn ideal_gains(m: &Mat, a: &Mat, b: &[f64], h: &[f64]) -> Result<IdealSolution> {
    let n = a.rows();
    // K_xᵀ solves Mᵀ K_xᵀ = h
    let k_x = solve_linear(&m.transpose(), &Mat::col_vec(h))?.into_vec();
    let a_sigma = a + &(&Mat::col_vec(b) * &Mat::row_vec(&k_x));
    let w = match solve_linear(&a_sigma, &Mat::col_vec(b)) {
        Ok(w) => w,
        Err(Error::Singular { det }) => {
            return Err(Error::Degenerate(format!(
                "A_Σ is singular (|det| = {det:e}); reference gain undefined"
            )))
        }
        Err(e) => return Err(e),
    };
    let c3 = dot(h, w.as_slice());
    if c3 == 0.0 || !c3.is_finite() {
        return Err(Error::Degenerate(
            "hᵀA_Σ⁻¹B = 0; reference gain undefined".into(),
        ));
    }
    let k_r = -1.0 / c3;
    let mut theta_star = k_x.clone();
    theta_star.push(k_r);
    let b_ref = b.iter().map(|v| v * k_r).collect();
    debug_assert_eq!(theta_star.len(), n + 1);
    Ok(IdealSolution {
        m: m.clone(),
        a_sigma,
        k_x,
        k_r,
        theta_star,
        b_ref,
    })
}

/// Full oracle: Sylvester solve followed by the gain formulas.
pub fn solve(plant: &PlantModel, gamma: &Mat) -> Result<IdealSolution> {
    let m = solve_m(&plant.a, &plant.b, gamma, &plant.h)?;
    ideal_gains(&m, &plant.a, &plant.b, &plant.h)
}

impl IdealSolution {
    pub fn residuals(&self, plant: &PlantModel, gamma: &Mat) -> OracleResiduals {
        let bh = &plant.b_col() * &Mat::row_vec(&plant.h);
        let syl = &(&(&self.m * gamma) - &(&plant.a * &self.m)) - &bh;
        let kxm = Mat::row_vec(&self.k_x).try_mul(&self.m).expect("shapes");
        let out = kxm
            .as_slice()
            .iter()
            .zip(&plant.h)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let cp_a = char_poly(&self.a_sigma).expect("square");
        let cp_g = char_poly(gamma).expect("square");
        let cp = cp_a
            .iter()
            .zip(&cp_g)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let dc = match solve_linear(&self.a_sigma.scale(-1.0), &plant.b_col()) {
            Ok(w) => (dot(&plant.h, w.as_slice()) * self.k_r - 1.0).abs(),
            Err(_) => f64::INFINITY,
        };
        OracleResiduals {
            sylvester: syl.norm(),
            output_map: out,
            char_poly: cp,
            dc_gain: dc,
        }
    }

    pub fn reference_model(&self, xref0: Vec<f64>) -> ReferenceModel {
        ReferenceModel {
            a_sigma: self.a_sigma.clone(),
            b_ref: self.b_ref.clone(),
            xref0,
        }
    }

    /// Ideal input `u* = K_x x + K_r r`.
    pub fn ideal_control(&self, x: &[f64], r: f64) -> f64 {
        dot(&self.k_x, x) + self.k_r * r
    }

    pub fn m_inverse(&self) -> Result<Mat> {
        inverse(&self.m)
    }
}

/// `u*(t)` along recorded states and references.
pub fn ideal_control(theta_star: &[f64], states: &[Vec<f64>], r: &[f64]) -> Vec<f64> {
    let n = theta_star.len() - 1;
    states
        .iter()
        .zip(r)
        .map(|(x, &ri)| dot(&theta_star[..n], x) + theta_star[n] * ri)
        .collect()
}

/// State-feedback gain by direct characteristic-polynomial matching.
///
/// `det(λI − A − BK)` is affine in `K` for single-input `B`, so its
/// coefficients are `c(0) + J·K` with `J` read off from unit gains. Solving
/// `J·K = c_Γ − c(0)` places the closed-loop polynomial on `target`.
/// Independent of the Sylvester route used by [`solve`].
pub fn gain_by_coefficient_matching(a: &Mat, b: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if target.len() != n + 1 {
        return Err(Error::dim(
            "gain_by_coefficient_matching",
            "target degree must equal n",
        ));
    }
    let bcol = Mat::col_vec(b);
    let closed = |k: &[f64]| -> Result<Vec<f64>> { char_poly(&(a + &(&bcol * &Mat::row_vec(k)))) };
    let base = closed(&vec![0.0; n])?;
    let mut jac = Mat::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let cj = closed(&e)?;
        for i in 0..n {
            jac[(i, j)] = cj[i + 1] - base[i + 1];
        }
    }
    let rhs: Vec<f64> = (0..n).map(|i| target[i + 1] - base[i + 1]).collect();
    Ok(solve_linear(&jac, &Mat::col_vec(&rhs))?.into_vec())
}
